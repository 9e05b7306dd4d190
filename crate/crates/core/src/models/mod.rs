//! Trainable classifiers and their persisted form.

mod baseline;
mod sblr;
mod trained;

pub use baseline::{KnnModel, LrModel, NcmModel};
pub use sblr::{decide, sblr_fit, sblr_posteriors, sblr_predict, CoefficientMatrix, Prediction, SblrModel};
pub use trained::{BatchPrediction, Hyper, MethodKind, ModelBody, TrainedModel};

pub(crate) use trained::{csv_field, sblr_decisions};
