//! Representation-quality toolkit: per-sample metrics for self-supervised
//! embeddings, threshold-sweep evaluation, a contrastive objective with a
//! quality regularizer, a small deterministic trainer, and saliency maps.

pub mod dataset;
pub mod encoder;
pub mod eval;
pub mod loss;
pub mod metrics;
pub mod plot;
pub mod repstore;
pub mod saliency;
pub mod trainer;
