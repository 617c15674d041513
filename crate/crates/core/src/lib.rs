//! Activity recognition for first-person video by multiple kernel learning.
//!
//! Pipeline: frame sequences → dense flow → HOF, Log-Covariance and cuboid
//! descriptors → bag-of-words histograms → kernel bank → SVM, SimpleMKL or
//! boosted MKL classifiers → repeated-split evaluation.

pub mod boost;
pub mod bow;
pub mod config;
pub mod dataio;
pub mod descriptors;
pub mod error;
pub mod eval;
pub mod flow;
pub mod kernels;
pub mod linalg;
pub mod mkl;
pub mod model;
pub mod svm;

pub use config::RunConfig;
pub use dataio::{DatasetManifest, FrameSequence};
pub use descriptors::{DescriptorKind, DescriptorSet};
pub use error::{Error, Result};
pub use eval::{EvalReport, SplitSpec};
pub use kernels::{KernelKind, KernelSpec};
pub use model::{ClassifierModel, Method};
