//! Intent classification as similarity search over labeled example queries.
//!
//! A test query is embedded, its k most similar labeled queries are looked
//! up in an index, and the majority label among them is the prediction.
//! The crate also carries a logistic-regression baseline over the same
//! embeddings and an experiment harness that samples training data, runs
//! either method and reports accuracy and macro-F1.
//!
//! ```
//! use simquery_core::dataset::{Dataset, QueryRecord};
//! use simquery_core::embedding::embed_dataset;
//! use simquery_core::index::{build_index, BuildOptions};
//! use simquery_core::classify::classify_query;
//! use simquery_core::embedding::test_embed;
//!
//! let train = Dataset::new(vec![
//!     QueryRecord::new("1", "wake me up at seven", "alarm_set", "en-US"),
//!     QueryRecord::new("2", "will it rain tomorrow", "weather_query", "en-US"),
//! ])
//! .unwrap();
//! let store = embed_dataset(&train, 64, 0).unwrap();
//! let ix = build_index(&train, &store, &BuildOptions::exact()).unwrap();
//! let q = test_embed("wake me up at six", 64, 0).unwrap();
//! assert_eq!(classify_query(&ix, &q, 1).unwrap().predicted_label, "alarm_set");
//! ```

pub mod baseline;
pub(crate) mod binio;
pub mod classify;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod index;
pub mod rng;
pub mod sweep;

pub use error::{Error, ErrorKind, Result};
