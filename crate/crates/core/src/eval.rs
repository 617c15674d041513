//! Repeated random-split evaluation: accuracy, confusion matrices and the
//! per-class accuracy spread.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bow::{encode_video, train_codebooks};
use crate::config::RunConfig;
use crate::dataio::{DatasetManifest, Document, FrameSequence, FORMAT_VERSION};
use crate::descriptors::{extract_descriptors, DescriptorKind, ExtractParams, VideoDescriptors};
use crate::error::{ensure, Error, Result};
use crate::bow::BlockLayout;
use crate::model::{train_model, Method, TrainingSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitMode {
    PerClassCounts { train: usize, test: usize },
    /// Half of each class for training, rounding up.
    HalfHalf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub repeats: usize,
    /// Repeat `r` draws its split, codebooks and boosting from
    /// `base_seed ^ r`.
    pub base_seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            mode: SplitMode::HalfHalf,
            repeats: 100,
            base_seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.repeats >= 1, "at least one repeat is required");
        if let SplitMode::PerClassCounts { train, test } = self.mode {
            ensure!(train >= 1 && test >= 1, "per-class split counts must be positive");
        }
        Ok(())
    }

    pub fn repeat_seed(&self, repeat: usize) -> u64 {
        self.base_seed ^ repeat as u64
    }
}

/// Per-class sampling without replacement; returns sorted train and test
/// indices into `labels`.
pub fn random_split(labels: &[usize], class_count: usize, spec: &SplitSpec, repeat: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.repeat_seed(repeat));
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for k in 0..class_count {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k).collect();
        let n = members.len();
        let (n_train, n_test) = match spec.mode {
            SplitMode::PerClassCounts { train, test } => (train, test),
            SplitMode::HalfHalf => (n.div_ceil(2), n / 2),
        };
        ensure!(
            n_train + n_test <= n && n_train >= 1,
            "class {k} has {n} videos, the split needs {n_train} for training and {n_test} for testing"
        );
        members.shuffle(&mut rng);
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..n_train + n_test]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Population standard deviation of the diagonal.
pub fn per_class_accuracy_stddev(confusion: &[Vec<f64>]) -> Result<f64> {
    let n = confusion.len();
    ensure!(n > 0 && confusion.iter().all(|r| r.len() == n), "confusion matrix must be square");
    let diag: Vec<f64> = (0..n).map(|i| confusion[i][i]).collect();
    let mean = diag.iter().sum::<f64>() / n as f64;
    Ok((diag.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n as f64).sqrt())
}

/// Labeled videos with their descriptors.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub classes: Vec<String>,
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
    pub descriptors: Vec<VideoDescriptors>,
}

impl Dataset {
    pub fn from_videos(
        classes: Vec<String>,
        videos: &[(String, usize, FrameSequence)],
        params: &ExtractParams,
        kinds: &[DescriptorKind],
    ) -> Result<Self> {
        let descriptors = videos
            .par_iter()
            .map(|(id, _, seq)| {
                extract_descriptors(seq, params, kinds)
                    .map_err(|e| Error::Validation(format!("video {id}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            classes,
            ids: videos.iter().map(|v| v.0.clone()).collect(),
            labels: videos.iter().map(|v| v.1).collect(),
            descriptors,
        })
    }

    pub fn from_manifest(manifest: &DatasetManifest, dir: &Path, params: &ExtractParams, kinds: &[DescriptorKind]) -> Result<Self> {
        let seqs = manifest.load_videos(dir)?;
        let videos: Vec<(String, usize, FrameSequence)> = manifest
            .videos
            .iter()
            .zip(seqs)
            .map(|(v, s)| (v.video_id.clone(), v.class_index, s))
            .collect();
        Self::from_videos(manifest.classes.clone(), &videos, params, kinds)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Outcome of one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub test: Vec<usize>,
    pub predicted: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub format_version: u32,
    pub kind: String,
    pub method: Method,
    pub features: Vec<DescriptorKind>,
    pub classes: Vec<String>,
    /// Test accuracy of every repeat, in percent.
    pub per_repeat_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    /// Row = true class, column = predicted; rows in percent.
    pub confusion: Vec<Vec<f64>>,
    pub per_class_stddev: f64,
    pub config: RunConfig,
}

impl Document for EvalReport {
    const KIND: &'static str = "report";

    fn format_version(&self) -> u32 {
        self.format_version
    }
}

impl EvalReport {
    /// Confusion matrix with a header row of class names and one-decimal
    /// percentages.
    pub fn confusion_csv(&self) -> String {
        let mut out = self.classes.join(",");
        out.push('\n');
        for row in &self.confusion {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.1}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Accuracy restricted to the test items of classes `a` and `b`, in
    /// percent of those items, counting predictions of either class.
    pub fn pair_separation(&self, a: usize, b: usize) -> f64 {
        let c = &self.confusion;
        let right = c[a][a] + c[b][b];
        let swapped = c[a][b] + c[b][a];
        if right + swapped == 0.0 {
            return 0.0;
        }
        100.0 * right / (right + swapped)
    }
}

/// Aggregates repeat results into a report; confusion counts are summed over
/// repeats and then row-normalized.
pub fn aggregate(
    labels: &[usize],
    classes: &[String],
    results: &[RepeatResult],
    method: Method,
    features: &[DescriptorKind],
    config: &RunConfig,
) -> Result<EvalReport> {
    let k = classes.len();
    let mut counts = vec![vec![0usize; k]; k];
    let mut per_repeat = Vec::with_capacity(results.len());
    for r in results {
        ensure!(r.test.len() == r.predicted.len() && !r.test.is_empty(), "malformed repeat result");
        let mut hits = 0;
        for (&i, &p) in r.test.iter().zip(&r.predicted) {
            counts[labels[i]][p] += 1;
            hits += usize::from(labels[i] == p);
        }
        per_repeat.push(100.0 * hits as f64 / r.test.len() as f64);
    }
    let confusion: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| {
            let n: usize = row.iter().sum();
            row.iter()
                .map(|&c| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 })
                .collect()
        })
        .collect();
    Ok(EvalReport {
        format_version: FORMAT_VERSION,
        kind: EvalReport::KIND.into(),
        method,
        features: features.to_vec(),
        classes: classes.to_vec(),
        mean_accuracy: per_repeat.iter().sum::<f64>() / per_repeat.len() as f64,
        per_repeat_accuracy: per_repeat,
        per_class_stddev: per_class_accuracy_stddev(&confusion)?,
        confusion,
        // thread count never changes results, so it is left out of the record
        config: RunConfig { workers: 0, ..config.clone() },
    })
}

/// Runs `body` for every repeat, concurrently, collecting results in repeat
/// order and tagging failures with their repeat index.
pub fn run_repeats<F>(labels: &[usize], class_count: usize, spec: &SplitSpec, body: F) -> Result<Vec<RepeatResult>>
where
    F: Fn(usize, &[usize], &[usize]) -> Result<Vec<usize>> + Sync,
{
    (0..spec.repeats)
        .into_par_iter()
        .map(|r| {
            let run = || -> Result<RepeatResult> {
                let (train, test) = random_split(labels, class_count, spec, r)?;
                let predicted = body(r, &train, &test)?;
                Ok(RepeatResult { test, predicted })
            };
            run().map_err(|e| Error::Repeat {
                repeat: r,
                source: Box::new(e),
            })
        })
        .collect()
}

/// The full protocol on descriptors: per repeat, codebooks are learned from
/// the training videos only, every video is encoded, and the chosen method is
/// trained and tested.
pub fn run_experiment(data: &Dataset, cfg: &RunConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let features = cfg.features.clone();
    for f in &features {
        ensure!(
            data.descriptors.iter().all(|d| d.contains_key(f)),
            "descriptors of type {f} were not extracted"
        );
    }
    let results = run_repeats(&data.labels, data.classes.len(), &cfg.split, |r, train, test| {
        let seed = cfg.split.repeat_seed(r);
        let train_desc: Vec<&VideoDescriptors> = train.iter().map(|&i| &data.descriptors[i]).collect();
        let codebooks = train_codebooks(&train_desc, &features, &cfg.codebook, seed)?;
        let encode = |idx: &[usize]| -> Result<Vec<Vec<f64>>> {
            idx.iter()
                .map(|&i| {
                    let sets: VideoDescriptors = features.iter().map(|f| (*f, data.descriptors[i][f].clone())).collect();
                    Ok(encode_video(&data.ids[i], &sets, &codebooks)?.to_vector())
                })
                .collect()
        };
        let layout: Vec<BlockLayout> = {
            let mut cbs: Vec<_> = codebooks.iter().map(|c| BlockLayout { kind: c.kind(), words: c.word_count() }).collect();
            cbs.sort_by_key(|b| b.kind);
            cbs
        };
        predict_split(data, cfg, &layout, &encode(train)?, train, &encode(test)?, seed)
    })?;
    aggregate(&data.labels, &data.classes, &results, cfg.method, &features, cfg)
}

/// The protocol on fixed, precomputed histograms (no codebook learning).
pub fn run_on_histograms(
    classes: &[String],
    labels: &[usize],
    vectors: &[Vec<f64>],
    layout: &[BlockLayout],
    cfg: &RunConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    ensure!(labels.len() == vectors.len(), "labels and histograms differ in count");
    let data = Dataset {
        classes: classes.to_vec(),
        ids: (0..labels.len()).map(|i| format!("{i}")).collect(),
        labels: labels.to_vec(),
        descriptors: Vec::new(),
    };
    let results = run_repeats(labels, classes.len(), &cfg.split, |r, train, test| {
        let pick = |idx: &[usize]| idx.iter().map(|&i| vectors[i].clone()).collect::<Vec<_>>();
        predict_split(&data, cfg, layout, &pick(train), train, &pick(test), cfg.split.repeat_seed(r))
    })?;
    aggregate(labels, classes, &results, cfg.method, &cfg.features, cfg)
}

fn predict_split(
    data: &Dataset,
    cfg: &RunConfig,
    layout: &[BlockLayout],
    train_vectors: &[Vec<f64>],
    train: &[usize],
    test_vectors: &[Vec<f64>],
    seed: u64,
) -> Result<Vec<usize>> {
    let ids: Vec<String> = train.iter().map(|&i| data.ids[i].clone()).collect();
    let labels: Vec<usize> = train.iter().map(|&i| data.labels[i]).collect();
    let set = TrainingSet {
        classes: &data.classes,
        layout,
        ids: &ids,
        vectors: train_vectors,
        labels: &labels,
    };
    let model = train_model(cfg.method, &set, &cfg.features, &cfg.kernels, &cfg.train_params(), seed)?;
    model.predict(test_vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(classes: usize, per: usize) -> Vec<usize> {
        (0..classes * per).map(|i| i / per).collect()
    }

    #[test]
    fn split_rules() {
        let l = labels(3, 5);
        let half = SplitSpec { repeats: 1, ..Default::default() };
        let (train, test) = random_split(&l, 3, &half, 0).unwrap();
        assert_eq!(train.len(), 9);
        assert_eq!(test.len(), 6);
        assert!(train.iter().all(|i| !test.contains(i)));
        assert_eq!(random_split(&l, 3, &half, 4).unwrap(), random_split(&l, 3, &half, 4).unwrap());

        let exact = SplitSpec { mode: SplitMode::PerClassCounts { train: 3, test: 2 }, ..half };
        let (train, test) = random_split(&l, 3, &exact, 1).unwrap();
        let mut all: Vec<usize> = train.into_iter().chain(test).collect();
        all.sort();
        assert_eq!(all, (0..15).collect::<Vec<_>>());

        let too_big = SplitSpec { mode: SplitMode::PerClassCounts { train: 4, test: 2 }, ..half };
        assert!(random_split(&l, 3, &too_big, 0).is_err());
    }

    #[test]
    fn stddev_closed_forms() {
        let id = vec![vec![100.0, 0.0], vec![0.0, 100.0]];
        assert_eq!(per_class_accuracy_stddev(&id).unwrap(), 0.0);
        let half = vec![vec![100.0, 0.0], vec![100.0, 0.0]];
        assert_eq!(per_class_accuracy_stddev(&half).unwrap(), 50.0);
        let three = vec![vec![80.0, 20.0, 0.0], vec![10.0, 90.0, 0.0], vec![0.0, 0.0, 100.0]];
        assert!((per_class_accuracy_stddev(&three).unwrap() - (200.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(per_class_accuracy_stddev(&[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn csv_export() {
        let r = aggregate(
            &[0, 0, 1, 1],
            &["walk".into(), "wave".into()],
            &[RepeatResult { test: vec![0, 1, 2, 3], predicted: vec![0, 1, 1, 1] }],
            Method::SingleKernel,
            &[DescriptorKind::Hof],
            &RunConfig::default(),
        )
        .unwrap();
        assert_eq!(r.confusion_csv(), "walk,wave\n50.0,50.0\n0.0,100.0\n");
        assert_eq!(r.mean_accuracy, 75.0);
        assert_eq!(r.pair_separation(0, 1), 100.0 * 150.0 / 200.0);
    }
}
