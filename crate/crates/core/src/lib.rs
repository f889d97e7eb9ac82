//! Transient stability assessment toolkit: a margin-based local-learning
//! classifier whose two hyperparameters are tuned by a bacterial colony
//! chemotaxis optimizer with chaotic escape, fed by a built-in classical
//! swing-equation simulator.

pub mod bcc;
pub mod chaos;
pub mod dataset;
pub mod llm;
pub mod powersim;

pub use chaos::SearchBox;
pub use dataset::{Dataset, FoldAssignment, NormalizationStats};
pub use llm::{LlmHyperparams, LlmModel, TrainOptions, WeightVector};
