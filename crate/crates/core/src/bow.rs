//! Bag-of-visual-words: per-type K-means codebooks and the concatenated,
//! block-normalized video histogram.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{Document, FORMAT_VERSION};
use crate::descriptors::{DescriptorKind, DescriptorSet, VideoDescriptors};
use crate::error::{ensure, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    kind: DescriptorKind,
    centroids: DescriptorSet,
}

impl Codebook {
    pub fn new(kind: DescriptorKind, centroids: DescriptorSet) -> Result<Self> {
        ensure!(!centroids.is_empty(), "a codebook needs at least one word");
        ensure!(
            centroids.as_flat().iter().all(|v| v.is_finite()),
            "codebook centroids must be finite"
        );
        Ok(Codebook { kind, centroids })
    }

    pub fn kind(&self) -> DescriptorKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.centroids.dim()
    }

    pub fn word_count(&self) -> usize {
        self.centroids.len()
    }

    pub fn centroids(&self) -> &DescriptorSet {
        &self.centroids
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KmeansParams {
    pub words: usize,
    pub max_iters: usize,
}

impl Default for KmeansParams {
    fn default() -> Self {
        KmeansParams {
            words: 64,
            max_iters: 100,
        }
    }
}

impl KmeansParams {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.words >= 1, "vocabulary needs at least one word");
        ensure!(self.max_iters >= 1, "k-means needs at least one iteration");
        Ok(())
    }
}

/// A trained codebook together with its optimisation trace.
#[derive(Clone, Debug)]
pub struct KmeansFit {
    pub codebook: Codebook,
    /// Within-cluster sum of squares after every assignment step.
    pub wcss_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &DescriptorSet) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.rows().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations.
pub fn kmeans_fit(data: &DescriptorSet, kind: DescriptorKind, words: usize, seed: u64, max_iters: usize) -> Result<KmeansFit> {
    ensure!(words >= 1, "vocabulary needs at least one word");
    ensure!(
        data.len() >= words,
        "{} {kind} descriptors cannot form {words} clusters",
        data.len()
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(data, words, &mut rng);

    let assign_all = |c: &DescriptorSet| -> (Vec<usize>, Vec<f64>) { data.rows().map(|x| nearest(x, c)).unzip() };
    let (mut labels, dists) = assign_all(&centroids);
    let mut history = vec![dists.iter().sum()];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        centroids = update_centroids(data, &mut labels, words);
        let (new_labels, new_dists) = assign_all(&centroids);
        history.push(new_dists.iter().sum());
        let stable = new_labels == labels;
        labels = new_labels;
        if stable {
            converged = true;
            break;
        }
    }
    Ok(KmeansFit {
        codebook: Codebook::new(kind, centroids)?,
        wcss_history: history,
        iterations,
        converged,
    })
}

pub fn kmeans(data: &DescriptorSet, kind: DescriptorKind, words: usize, seed: u64, max_iters: usize) -> Result<Codebook> {
    Ok(kmeans_fit(data, kind, words, seed, max_iters)?.codebook)
}

fn plus_plus_init(data: &DescriptorSet, words: usize, rng: &mut ChaCha8Rng) -> DescriptorSet {
    let n = data.len();
    let mut centroids = DescriptorSet::empty(data.dim());
    centroids.push(data.row(rng.random_range(0..n))).expect("dim");
    let mut d2: Vec<f64> = data.rows().map(|x| sq_dist(x, centroids.row(0))).collect();
    while centroids.len() < words {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(data.row(pick)).expect("dim");
        let c = centroids.row(centroids.len() - 1).to_vec();
        for (i, x) in data.rows().enumerate() {
            d2[i] = d2[i].min(sq_dist(x, &c));
        }
    }
    centroids
}

/// Cluster means; an empty cluster takes over the point farthest from its
/// current centroid.
fn update_centroids(data: &DescriptorSet, labels: &mut [usize], words: usize) -> DescriptorSet {
    let dim = data.dim();
    let mut sums = vec![0.0; words * dim];
    let mut counts = vec![0usize; words];
    for (x, &k) in data.rows().zip(labels.iter()) {
        counts[k] += 1;
        for (s, v) in sums[k * dim..(k + 1) * dim].iter_mut().zip(x) {
            *s += v;
        }
    }
    for k in 0..words {
        if counts[k] > 0 {
            let c = counts[k] as f64;
            sums[k * dim..(k + 1) * dim].iter_mut().for_each(|s| *s /= c);
        }
    }
    for k in 0..words {
        if counts[k] > 0 {
            continue;
        }
        let mut far = (usize::MAX, -1.0);
        for (i, x) in data.rows().enumerate() {
            let own = labels[i];
            if counts[own] <= 1 {
                continue;
            }
            let d = sq_dist(x, &sums[own * dim..(own + 1) * dim]);
            if d > far.1 {
                far = (i, d);
            }
        }
        if far.0 == usize::MAX {
            continue;
        }
        let i = far.0;
        counts[labels[i]] -= 1;
        labels[i] = k;
        counts[k] = 1;
        sums[k * dim..(k + 1) * dim].copy_from_slice(data.row(i));
    }
    DescriptorSet::from_flat(dim, sums).expect("dim")
}

/// Index of the nearest centroid; ties go to the lowest index.
pub fn quantize(x: &[f64], cb: &Codebook) -> Result<usize> {
    ensure!(
        x.len() == cb.dim(),
        "descriptor of length {} quantized against a {}-dimensional codebook",
        x.len(),
        cb.dim()
    );
    Ok(nearest(x, &cb.centroids).0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramBlock {
    pub kind: DescriptorKind,
    pub counts: Vec<f64>,
}

/// The concatenated per-type word histogram of one video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoHistogram {
    pub video_id: String,
    pub blocks: Vec<HistogramBlock>,
}

impl VideoHistogram {
    pub fn to_vector(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.counts.iter().copied()).collect()
    }

    pub fn layout(&self) -> Vec<BlockLayout> {
        self.blocks
            .iter()
            .map(|b| BlockLayout {
                kind: b.kind,
                words: b.counts.len(),
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockLayout {
    pub kind: DescriptorKind,
    pub words: usize,
}

/// Offset and length of each block inside the concatenated vector.
pub fn block_ranges(layout: &[BlockLayout]) -> Vec<(DescriptorKind, std::ops::Range<usize>)> {
    let mut at = 0;
    layout
        .iter()
        .map(|b| {
            let r = at..at + b.words;
            at += b.words;
            (b.kind, r)
        })
        .collect()
}

/// Word counts per type, each block L1-normalized; blocks follow the
/// codebooks in descriptor-kind order.
pub fn encode_video(video_id: &str, sets: &VideoDescriptors, codebooks: &[Codebook]) -> Result<VideoHistogram> {
    for kind in sets.keys() {
        if !codebooks.iter().any(|c| c.kind == *kind) {
            return Err(Error::Config(format!("no codebook for descriptor type {kind}")));
        }
    }
    let mut ordered: Vec<&Codebook> = codebooks.iter().collect();
    ordered.sort_by_key(|c| c.kind);
    let mut blocks = Vec::with_capacity(ordered.len());
    for cb in ordered {
        let mut counts = vec![0.0; cb.word_count()];
        if let Some(set) = sets.get(&cb.kind) {
            for x in set.rows() {
                counts[quantize(x, cb)?] += 1.0;
            }
            if !set.is_empty() {
                let n = set.len() as f64;
                counts.iter_mut().for_each(|c| *c /= n);
            }
        }
        blocks.push(HistogramBlock { kind: cb.kind, counts });
    }
    Ok(VideoHistogram {
        video_id: video_id.to_string(),
        blocks,
    })
}

/// Trains one codebook per descriptor type on the pooled descriptors of the
/// given videos.
pub fn train_codebooks(
    videos: &[&VideoDescriptors],
    kinds: &[DescriptorKind],
    params: &KmeansParams,
    seed: u64,
) -> Result<Vec<Codebook>> {
    params.validate()?;
    let mut out = Vec::new();
    for &kind in kinds {
        let mut pooled: Option<DescriptorSet> = None;
        for v in videos {
            if let Some(set) = v.get(&kind) {
                match pooled.as_mut() {
                    Some(p) => p.extend(set)?,
                    None => pooled = Some(set.clone()),
                }
            }
        }
        let pooled = pooled.ok_or_else(|| Error::Validation(format!("no {kind} descriptors to cluster")))?;
        let kind_seed = seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(kind as u64 + 1));
        out.push(kmeans(&pooled, kind, params.words, kind_seed, params.max_iters)?);
    }
    Ok(out)
}

/// A set of encoded videos sharing one block layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramCollection {
    pub format_version: u32,
    pub kind: String,
    pub layout: Vec<BlockLayout>,
    pub videos: Vec<VideoHistogram>,
}

impl HistogramCollection {
    pub fn new(layout: Vec<BlockLayout>, videos: Vec<VideoHistogram>) -> Result<Self> {
        let c = HistogramCollection {
            format_version: FORMAT_VERSION,
            kind: Self::KIND.into(),
            layout,
            videos,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn get(&self, video_id: &str) -> Option<&VideoHistogram> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }
}

impl Document for HistogramCollection {
    const KIND: &'static str = "histograms";

    fn format_version(&self) -> u32 {
        self.format_version
    }

    fn validate(&self) -> Result<()> {
        for v in &self.videos {
            ensure!(
                v.layout() == self.layout,
                "histogram of {:?} does not match the collection layout",
                v.video_id
            );
            for b in &v.blocks {
                let mass: f64 = b.counts.iter().sum();
                ensure!(
                    b.counts.iter().all(|&c| c >= 0.0) && (mass == 0.0 || (mass - 1.0).abs() <= 1e-9),
                    "{} block of {:?} is not a normalized histogram",
                    b.kind,
                    v.video_id
                );
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn set(rows: &[Vec<f64>]) -> DescriptorSet {
        DescriptorSet::from_rows(rows[0].len(), rows).unwrap()
    }

    #[test]
    fn single_word_is_the_mean() {
        let data = set(&[vec![1.0, 2.0], vec![3.0, -2.0], vec![5.0, 3.0]]);
        let cb = kmeans(&data, DescriptorKind::Hof, 1, 3, 100).unwrap();
        assert_eq!(cb.centroids().row(0), &[3.0, 1.0]);
    }

    #[test]
    fn two_separated_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let noise = Normal::new(0.0, 0.4).unwrap();
        let mut rows = Vec::new();
        let mut means = [[0.0; 2]; 2];
        for i in 0..200 {
            let c = i % 2;
            let base = if c == 0 { [0.0, 0.0] } else { [100.0, 0.0] };
            let mut p = [base[0] + noise.sample(&mut rng), base[1] + noise.sample(&mut rng)];
            let r = f64::hypot(p[0] - base[0], p[1] - base[1]);
            if r > 1.0 {
                p = [base[0] + (p[0] - base[0]) / r, base[1] + (p[1] - base[1]) / r];
            }
            means[c][0] += p[0] / 100.0;
            means[c][1] += p[1] / 100.0;
            rows.push(p.to_vec());
        }
        let cb = kmeans(&set(&rows), DescriptorKind::Logc, 2, 8, 100).unwrap();
        for m in means {
            let (_, d) = nearest(&m, cb.centroids());
            assert!(d.sqrt() < 0.5);
        }
    }

    #[test]
    fn wcss_is_monotone_and_training_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<f64>> = (0..300).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let data = set(&rows);
        for seed in 0..6 {
            let fit = kmeans_fit(&data, DescriptorKind::Cuboid, 7, seed, 100).unwrap();
            for w in fit.wcss_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-9 * w[0].abs(), "{:?}", fit.wcss_history);
            }
            let again = kmeans_fit(&data, DescriptorKind::Cuboid, 7, seed, 100).unwrap();
            assert_eq!(fit.codebook, again.codebook);
        }
    }

    #[test]
    fn duplicate_points_still_fill_every_word() {
        let data = set(&vec![vec![1.0, 1.0]; 5]);
        let cb = kmeans(&data, DescriptorKind::Hof, 3, 0, 10).unwrap();
        assert_eq!(cb.word_count(), 3);
    }

    #[test]
    fn too_few_descriptors() {
        let data = set(&[vec![0.0], vec![1.0]]);
        assert!(kmeans(&data, DescriptorKind::Hof, 3, 0, 10).is_err());
    }

    #[test]
    fn quantize_rules() {
        let cb = Codebook::new(
            DescriptorKind::Hof,
            set(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![5.0, 5.0], vec![2.0, 2.0], vec![-1.0, 0.0]]),
        )
        .unwrap();
        assert_eq!(quantize(&[2.0, 2.0], &cb).unwrap(), 3);
        // equidistant between words 0 and 1
        assert_eq!(quantize(&[0.5, 0.0], &cb).unwrap(), 0);
        assert!(quantize(&[0.0], &cb).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..1000 {
            let x = [rng.random_range(-3.0..6.0), rng.random_range(-3.0..6.0)];
            let brute = (0..cb.word_count())
                .map(|k| (sq_dist(&x, cb.centroids().row(k)), k))
                .fold((f64::INFINITY, 0), |best, cur| if cur.0 < best.0 { cur } else { best });
            assert_eq!(quantize(&x, &cb).unwrap(), brute.1);
        }
    }

    fn codebooks() -> Vec<Codebook> {
        vec![
            Codebook::new(DescriptorKind::Cuboid, set(&[vec![0.0], vec![1.0]])).unwrap(),
            Codebook::new(DescriptorKind::Hof, set(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]])).unwrap(),
        ]
    }

    #[test]
    fn encode_rules() {
        let mut sets = VideoDescriptors::new();
        sets.insert(DescriptorKind::Hof, set(&[vec![1.1, 0.9]]));
        sets.insert(DescriptorKind::Cuboid, DescriptorSet::empty(1));
        let h = encode_video("v", &sets, &codebooks()).unwrap();
        assert_eq!(h.blocks[0].kind, DescriptorKind::Hof);
        assert_eq!(h.blocks[0].counts, vec![0.0, 1.0, 0.0]);
        assert_eq!(h.blocks[1].counts, vec![0.0, 0.0]);

        sets.insert(DescriptorKind::Logc, set(&[vec![1.0]]));
        assert!(matches!(encode_video("v", &sets, &codebooks()), Err(Error::Config(_))));
    }

    #[test]
    fn encoding_ignores_arrival_order() {
        let rows = vec![vec![0.1, 0.0], vec![2.0, 2.1], vec![0.9, 1.0], vec![2.2, 1.9]];
        let mut reversed = rows.clone();
        reversed.reverse();
        let enc = |r: &[Vec<f64>]| {
            let mut sets = VideoDescriptors::new();
            sets.insert(DescriptorKind::Hof, set(r));
            encode_video("v", &sets, &codebooks()).unwrap()
        };
        let a = enc(&rows);
        assert_eq!(a, enc(&reversed));
        let mass: f64 = a.blocks[0].counts.iter().sum();
        assert!((mass - 1.0).abs() < 1e-12);
    }
}
