//! Similarity-evidence classifiers for multi-label and multi-class data.
//!
//! Each instance is summarised by how similar it is to the training
//! instances of every class. The lazy classifier ([`sml`]) ranks classes by
//! that evidence directly; the logistic variants ([`models`]) learn how the
//! evidence of all classes combines into each class posterior, optionally
//! with an l1 penalty that prunes class-to-class interactions.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod models;
pub mod optim;
pub mod schema;
pub mod similarity;
pub mod sml;

pub use dataset::{Dataset, LabelSet, Task};
pub use error::{Error, ErrorKind, Result};
pub use models::{Hyper, MethodKind, TrainedModel};
pub use schema::Document;
pub use similarity::KernelConfig;
