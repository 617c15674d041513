//! Multiclass classifiers over video histograms and their model files.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::boost::{boost_train, BoostParams, BoostedModel};
use crate::bow::{block_ranges, BlockLayout};
use crate::dataio::{Document, FORMAT_VERSION};
use crate::descriptors::DescriptorKind;
use crate::error::{ensure, Error, Result};
use crate::kernels::{cross_kernel, median_pairwise_distance, Channel, KernelBank, KernelKind, KernelSpec};
use crate::mkl::{simple_mkl_train, MklModel, MklParams};
use crate::svm::{ova_predict, ova_train, smo_train, BinarySvmModel, SvmParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// One SVM on one kernel over all selected features.
    SingleKernel,
    /// One SVM on a multi-channel intersection kernel.
    Multichannel,
    SimpleMkl,
    BoostMkl,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::SingleKernel, Method::Multichannel, Method::SimpleMkl, Method::BoostMkl];

    pub fn name(self) -> &'static str {
        match self {
            Method::SingleKernel => "single_kernel",
            Method::Multichannel => "multichannel",
            Method::SimpleMkl => "simple_mkl",
            Method::BoostMkl => "boost_mkl",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" | "single_kernel" => Ok(Method::SingleKernel),
            "multichannel" => Ok(Method::Multichannel),
            "simple_mkl" => Ok(Method::SimpleMkl),
            "boost_mkl" => Ok(Method::BoostMkl),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// Which kernels each method builds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelPlan {
    /// Kernel of the single-kernel method, over all selected features.
    pub single: KernelKind,
    /// Kernel of the multichannel method; `dc_int` or `jpl_int`.
    pub multichannel: KernelKind,
    /// Kernel kinds instantiated once per feature for the MKL methods.
    pub bank: Vec<KernelKind>,
}

impl Default for KernelPlan {
    fn default() -> Self {
        KernelPlan {
            single: KernelKind::Gaussian,
            multichannel: KernelKind::JplInt,
            bank: vec![KernelKind::Gaussian, KernelKind::HInt],
        }
    }
}

impl KernelPlan {
    pub fn validate(&self) -> Result<()> {
        if !self.multichannel.is_multichannel() {
            return Err(Error::Config(format!(
                "the multichannel method needs dc_int or jpl_int, not {}",
                self.multichannel
            )));
        }
        ensure!(!self.bank.is_empty(), "the kernel bank lists no kernel kinds");
        let mut seen = self.bank.clone();
        seen.sort();
        seen.dedup();
        ensure!(seen.len() == self.bank.len(), "the kernel bank lists a kernel kind twice");
        Ok(())
    }
}

fn feature_channel(layout: &[BlockLayout], kind: DescriptorKind) -> Result<Channel> {
    block_ranges(layout)
        .into_iter()
        .find(|(k, _)| *k == kind)
        .map(|(_, r)| Channel {
            offset: r.start,
            len: r.len(),
        })
        .ok_or_else(|| Error::Config(format!("histograms carry no {kind} block")))
}

fn make_spec(kind: KernelKind, channels: Vec<Channel>, train: &[Vec<f64>]) -> KernelSpec {
    let sigma = (kind == KernelKind::Gaussian).then(|| median_pairwise_distance(train, &channels));
    KernelSpec {
        sigma,
        ..KernelSpec::new(kind, channels)
    }
}

/// Concrete kernel specs for a method; Gaussian bandwidths come from the
/// median pairwise distance of the training vectors.
pub fn kernel_specs(
    method: Method,
    plan: &KernelPlan,
    layout: &[BlockLayout],
    features: &[DescriptorKind],
    train: &[Vec<f64>],
) -> Result<Vec<KernelSpec>> {
    plan.validate()?;
    ensure!(!features.is_empty(), "no features selected");
    let channels: Vec<Channel> = features.iter().map(|&f| feature_channel(layout, f)).collect::<Result<_>>()?;
    Ok(match method {
        Method::SingleKernel => vec![make_spec(plan.single, channels, train)],
        Method::Multichannel => vec![make_spec(plan.multichannel, channels, train)],
        Method::SimpleMkl | Method::BoostMkl => channels
            .iter()
            .flat_map(|c| plan.bank.iter().map(move |&k| (k, *c)))
            .map(|(k, c)| make_spec(k, vec![c], train))
            .collect(),
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainParams {
    pub svm: SvmParams,
    pub mkl: MklParams,
    pub boost: BoostParams,
}

/// One class-versus-rest classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BinaryModel {
    Svm(BinarySvmModel),
    Mkl(MklModel),
    Boost(BoostedModel),
}

impl BinaryModel {
    /// Real-valued score from one kernel row per base kernel. Boosted scores
    /// are divided by the total vote weight so classes compare on `[-1, 1]`.
    pub fn score(&self, k_rows: &[Vec<f64>]) -> Result<f64> {
        match self {
            BinaryModel::Svm(m) => {
                ensure!(k_rows.len() == 1, "a single-kernel model takes one kernel row");
                m.decision(&k_rows[0])
            }
            BinaryModel::Mkl(m) => m.decision(k_rows),
            BinaryModel::Boost(m) => m.normalized_score(k_rows),
        }
    }
}

/// A trained one-vs-all classifier with its training histograms inline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierModel {
    pub format_version: u32,
    pub kind: String,
    pub method: Method,
    pub classes: Vec<String>,
    pub features: Vec<DescriptorKind>,
    pub layout: Vec<BlockLayout>,
    pub kernels: Vec<KernelSpec>,
    pub train_ids: Vec<String>,
    pub train_vectors: Vec<Vec<f64>>,
    pub models: Vec<BinaryModel>,
}

impl Document for ClassifierModel {
    const KIND: &'static str = "model";

    fn format_version(&self) -> u32 {
        self.format_version
    }

    fn validate(&self) -> Result<()> {
        ensure!(self.models.len() == self.classes.len(), "one binary model per class is required");
        ensure!(self.train_ids.len() == self.train_vectors.len(), "training ids and vectors differ in count");
        let dim: usize = self.layout.iter().map(|b| b.words).sum();
        ensure!(self.train_vectors.iter().all(|v| v.len() == dim), "training vectors do not match the layout");
        for k in &self.kernels {
            k.validate(dim)?;
        }
        Ok(())
    }
}

pub struct TrainingSet<'a> {
    pub classes: &'a [String],
    pub layout: &'a [BlockLayout],
    pub ids: &'a [String],
    pub vectors: &'a [Vec<f64>],
    pub labels: &'a [usize],
}

pub fn train_model(
    method: Method,
    data: &TrainingSet<'_>,
    features: &[DescriptorKind],
    plan: &KernelPlan,
    params: &TrainParams,
    seed: u64,
) -> Result<ClassifierModel> {
    ensure!(data.vectors.len() == data.labels.len(), "vectors and labels differ in count");
    ensure!(data.ids.len() == data.labels.len(), "ids and labels differ in count");
    let present = {
        let mut l = data.labels.to_vec();
        l.sort();
        l.dedup();
        l.len()
    };
    ensure!(present >= 2, "training data contains a single class");
    let specs = kernel_specs(method, plan, data.layout, features, data.vectors)?;
    let bank = KernelBank::build(data.vectors, &specs)?;
    let class_count = data.classes.len();
    let models = match method {
        Method::SingleKernel | Method::Multichannel => ova_train(data.labels, class_count, |_, y| {
            smo_train(bank.gram(0), y, &params.svm, None).map(BinaryModel::Svm)
        })?,
        Method::SimpleMkl => ova_train(data.labels, class_count, |_, y| {
            simple_mkl_train(&bank, y, &params.mkl).map(BinaryModel::Mkl)
        })?,
        Method::BoostMkl => ova_train(data.labels, class_count, |k, y| {
            let class_seed = seed ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
            boost_train(&bank, y, &params.boost, class_seed).map(BinaryModel::Boost)
        })?,
    };
    Ok(ClassifierModel {
        format_version: FORMAT_VERSION,
        kind: ClassifierModel::KIND.into(),
        method,
        classes: data.classes.to_vec(),
        features: features.to_vec(),
        layout: data.layout.to_vec(),
        kernels: specs,
        train_ids: data.ids.to_vec(),
        train_vectors: data.vectors.to_vec(),
        models,
    })
}

impl ClassifierModel {
    /// Per-class scores for each query vector.
    pub fn scores(&self, queries: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let grams = self
            .kernels
            .iter()
            .map(|s| cross_kernel(queries, &self.train_vectors, s))
            .collect::<Result<Vec<_>>>()?;
        (0..queries.len())
            .map(|q| {
                let rows: Vec<Vec<f64>> = grams.iter().map(|g| g.row(q).to_vec()).collect();
                self.models.iter().map(|m| m.score(&rows)).collect()
            })
            .collect()
    }

    pub fn predict(&self, queries: &[Vec<f64>]) -> Result<Vec<usize>> {
        Ok(self.scores(queries)?.iter().map(|s| ova_predict(s)).collect())
    }

    /// Kernel weights of each class's MKL model, if any.
    pub fn kernel_weights(&self) -> Vec<Option<Vec<f64>>> {
        self.models
            .iter()
            .map(|m| match m {
                BinaryModel::Mkl(m) => Some(m.weights.clone()),
                _ => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{read_json, write_json};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(seed: u64) -> (Vec<String>, Vec<BlockLayout>, Vec<String>, Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = vec![
            BlockLayout { kind: DescriptorKind::Hof, words: 3 },
            BlockLayout { kind: DescriptorKind::Logc, words: 2 },
        ];
        let mut vectors = Vec::new();
        let mut labels = Vec::new();
        for i in 0..18 {
            let k = i % 3;
            let mut a = [0.1, 0.1, 0.1];
            a[k] += 1.0;
            let mut v: Vec<f64> = a.iter().map(|x| x + rng.random_range(0.0..0.3)).collect();
            let s: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= s);
            let b = rng.random_range(0.0..1.0);
            v.extend([b, 1.0 - b]);
            vectors.push(v);
            labels.push(k);
        }
        let ids = (0..18).map(|i| format!("v{i}")).collect();
        (vec!["a".into(), "b".into(), "c".into()], layout, ids, vectors, labels)
    }

    #[test]
    fn every_method_fits_and_round_trips() {
        let (classes, layout, ids, vectors, labels) = toy(1);
        let data = TrainingSet {
            classes: &classes,
            layout: &layout,
            ids: &ids,
            vectors: &vectors,
            labels: &labels,
        };
        let features = [DescriptorKind::Hof, DescriptorKind::Logc];
        let dir = tempfile::tempdir().unwrap();
        for method in Method::ALL {
            let model = train_model(method, &data, &features, &KernelPlan::default(), &TrainParams::default(), 3).unwrap();
            let predicted = model.predict(&vectors).unwrap();
            let hits = predicted.iter().zip(&labels).filter(|(a, b)| a == b).count();
            assert!(hits >= 16, "{method}: {hits}/18");

            let path = dir.path().join(format!("{method}.json"));
            write_json(&model, &path).unwrap();
            let back: ClassifierModel = read_json(&path).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let probes: Vec<Vec<f64>> = (0..10)
                .map(|_| (0..5).map(|_| rng.random_range(0.0..0.5)).collect())
                .collect();
            assert_eq!(model.scores(&probes).unwrap(), back.scores(&probes).unwrap());
        }
    }

    #[test]
    fn bank_layout_per_method() {
        let (_, layout, _, vectors, _) = toy(2);
        let plan = KernelPlan::default();
        let f = [DescriptorKind::Hof, DescriptorKind::Logc];
        assert_eq!(kernel_specs(Method::SimpleMkl, &plan, &layout, &f, &vectors).unwrap().len(), 4);
        let single = kernel_specs(Method::SingleKernel, &plan, &layout, &f, &vectors).unwrap();
        assert_eq!(single[0].channels.len(), 2);
        assert!(single[0].sigma.unwrap() > 0.0);
        assert!(kernel_specs(Method::SingleKernel, &plan, &layout, &[DescriptorKind::Cuboid], &vectors).is_err());
        let bad = KernelPlan { multichannel: KernelKind::HInt, ..plan };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn single_class_training_is_rejected() {
        let (classes, layout, ids, vectors, _) = toy(3);
        let labels = vec![0; 18];
        let data = TrainingSet {
            classes: &classes,
            layout: &layout,
            ids: &ids,
            vectors: &vectors,
            labels: &labels,
        };
        let r = train_model(Method::SingleKernel, &data, &[DescriptorKind::Hof], &KernelPlan::default(), &TrainParams::default(), 0);
        assert!(matches!(r, Err(Error::Validation(m)) if m.contains("single class")));
    }
}
