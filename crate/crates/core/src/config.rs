//! The run configuration: one JSON file covering every stage. Every field
//! has a default, so `{}` is a valid configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boost::BoostParams;
use crate::bow::KmeansParams;
use crate::dataio::SynthConfig;
use crate::descriptors::{DescriptorKind, ExtractParams};
use crate::error::{Error, Result};
use crate::eval::SplitSpec;
use crate::mkl::MklParams;
use crate::model::{KernelPlan, Method, TrainParams};
use crate::svm::SvmParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Classifier trained by `train` and `evaluate`.
    pub method: Method,
    /// Descriptor types fed to the classifier.
    pub features: Vec<DescriptorKind>,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub synth: SynthConfig,
    pub extract: ExtractParams,
    pub codebook: KmeansParams,
    pub kernels: KernelPlan,
    pub svm: SvmParams,
    pub mkl: MklParams,
    pub boost: BoostParams,
    pub split: SplitSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            method: Method::SimpleMkl,
            features: DescriptorKind::ALL.to_vec(),
            workers: 0,
            synth: SynthConfig::default(),
            extract: ExtractParams::default(),
            codebook: KmeansParams::default(),
            kernels: KernelPlan::default(),
            svm: SvmParams::default(),
            mkl: MklParams::default(),
            boost: BoostParams::default(),
            split: SplitSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |r: Result<()>| r.map_err(|e| Error::Config(e.to_string()));
        ensure_config(!self.features.is_empty(), "no features selected")?;
        let mut f = self.features.clone();
        f.sort();
        f.dedup();
        ensure_config(f.len() == self.features.len(), "a feature is listed twice")?;
        check(self.synth.validate())?;
        check(self.extract.validate())?;
        check(self.codebook.validate())?;
        check(self.kernels.validate())?;
        check(self.svm.validate())?;
        check(self.mkl.validate())?;
        check(self.boost.validate())?;
        check(self.split.validate())?;
        Ok(())
    }

    /// Parses and validates a configuration file; unknown keys are errors.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn train_params(&self) -> TrainParams {
        TrainParams {
            svm: self.svm,
            mkl: self.mkl,
            boost: self.boost,
        }
    }

    /// Threads to use, resolving 0 to the machine's parallelism.
    pub fn worker_count(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}

fn ensure_config(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg.into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
        let back: RunConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"metod": "simple_mkl"}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"svm": {"c": 1}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"split": {"mode": {"per_class_counts": {"train": 1, "test": 1, "x": 1}}}}"#).is_err());
    }

    #[test]
    fn constraints_are_enforced_at_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.json");
        std::fs::write(&p, r#"{"svm": {"c_reg": -1}}"#).unwrap();
        assert!(matches!(RunConfig::load(&p), Err(Error::Config(_))));
        std::fs::write(&p, r#"{"features": ["hof", "hof"]}"#).unwrap();
        assert!(matches!(RunConfig::load(&p), Err(Error::Config(_))));
        std::fs::write(&p, r#"{"features": ["hof"], "split": {"mode": {"per_class_counts": {"train": 9, "test": 3}}, "repeats": 5}}"#).unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.split.repeats, 5);
        assert!(matches!(RunConfig::load(dir.path().join("missing.json")), Err(Error::Io { .. })));
    }
}
