//! Seeded fixtures shared by the benchmarks in `benches/`.

use egomkl::dataio::{synthesize, SynthConfig};
use egomkl::FrameSequence;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One synthetic video of the default size.
pub fn sample_video() -> FrameSequence {
    let cfg = SynthConfig { class_count: 2, videos_per_class: 4, ..SynthConfig::default() };
    let (_, videos) = synthesize(&cfg).expect("default synthetic config is valid");
    videos.into_iter().next().expect("at least one video").frames
}

/// `n` random histograms made of `blocks` L1-normalized blocks.
pub fn histograms(n: usize, blocks: &[usize], seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut v = Vec::new();
            for &len in blocks {
                let block: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..1.0)).collect();
                let s: f64 = block.iter().sum();
                v.extend(block.iter().map(|x| x / s));
            }
            v
        })
        .collect()
}

/// Alternating +1/-1 labels.
pub fn labels(n: usize) -> Vec<f64> {
    (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect()
}
