//! Synthetic ego-motion videos.
//!
//! Every class pairs a global motion of a smooth sinusoidal background with
//! a local event carried by a small Gaussian blob. Per-video nuisance (texture,
//! blob position and phase, contrast magnitude, motion speed) is drawn from a
//! generator seeded by the config seed and the video's index.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{write_frame_sequence, write_json, DatasetManifest, FrameSequence, VideoEntry};
use crate::error::{ensure, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub class_count: usize,
    pub videos_per_class: usize,
    pub width: u32,
    pub height: u32,
    pub frame_count: u32,
    /// Standard deviation of additive Gaussian noise, in intensity units.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            class_count: 4,
            videos_per_class: 12,
            width: 32,
            height: 32,
            frame_count: 24,
            noise_sigma: 2.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.class_count >= 2, "a dataset needs at least 2 classes");
        ensure!(self.videos_per_class >= 4, "at least 4 videos per class are required");
        ensure!(self.width >= 8 && self.height >= 8, "synthetic frames must be at least 8x8");
        ensure!(self.frame_count >= 2, "synthetic videos need at least 2 frames");
        ensure!(
            self.noise_sigma >= 0.0 && self.noise_sigma.is_finite(),
            "noise sigma must be nonnegative"
        );
        Ok(())
    }
}

/// Apparent motion of the whole background.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlobalMotion {
    Static,
    /// Constant translation in px/frame.
    Pan { dx: f64, dy: f64 },
    /// Vertical sinusoidal bob.
    Bob { amplitude: f64, period: f64 },
    /// Rotation about the frame centre in rad/frame.
    Rotate { rate: f64 },
    /// Relative scale change per frame.
    Zoom { rate: f64 },
}

/// What the blob does.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalEvent {
    /// Circles a point; `clockwise` in image coordinates (y down).
    Orbit { radius: f64, period: f64, clockwise: bool },
    /// Stays in place and switches on and off, `period` frames per cycle.
    Flash { period: usize },
    /// Moves back and forth horizontally.
    Sweep { amplitude: f64, period: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionSignature {
    pub name: String,
    pub global: GlobalMotion,
    pub event: LocalEvent,
    /// Peak blob intensity relative to the background; negative for a dark blob.
    pub contrast: f64,
}

const BASE_CLASSES: usize = 6;

/// The motion signature of class `k`. Classes 2 and 3 share a static
/// background and differ only in the blob's flashing rate.
pub fn signature_for_class(k: usize) -> MotionSignature {
    let (name, global, event, contrast) = match k % BASE_CLASSES {
        0 => (
            "pan_right",
            GlobalMotion::Pan { dx: 2.0, dy: 0.0 },
            LocalEvent::Sweep { amplitude: 3.0, period: 12.0 },
            90.0,
        ),
        1 => (
            "bob",
            GlobalMotion::Bob { amplitude: 3.0, period: 8.0 },
            LocalEvent::Orbit { radius: 3.0, period: 12.0, clockwise: false },
            90.0,
        ),
        2 => ("flash_fast", GlobalMotion::Static, LocalEvent::Flash { period: 4 }, 110.0),
        3 => ("flash_slow", GlobalMotion::Static, LocalEvent::Flash { period: 8 }, 110.0),
        4 => (
            "rotate",
            GlobalMotion::Rotate { rate: 0.06 },
            LocalEvent::Orbit { radius: 3.0, period: 12.0, clockwise: true },
            90.0,
        ),
        _ => (
            "zoom",
            GlobalMotion::Zoom { rate: 0.03 },
            LocalEvent::Sweep { amplitude: 3.0, period: 8.0 },
            -90.0,
        ),
    };
    let round = k / BASE_CLASSES;
    let speed = 1.0 + 0.5 * round as f64;
    let global = match global {
        GlobalMotion::Pan { dx, dy } => GlobalMotion::Pan { dx: dx * speed, dy: dy * speed },
        GlobalMotion::Rotate { rate } => GlobalMotion::Rotate { rate: rate * speed },
        GlobalMotion::Zoom { rate } => GlobalMotion::Zoom { rate: rate * speed },
        GlobalMotion::Bob { amplitude, period } => GlobalMotion::Bob { amplitude: amplitude * speed, period },
        g => g,
    };
    MotionSignature {
        name: if round == 0 { name.to_string() } else { format!("{name}_{round}") },
        global,
        event,
        contrast,
    }
}

struct Texture {
    waves: [(f64, f64, f64, f64); 3],
}

impl Texture {
    fn random(rng: &mut impl Rng) -> Self {
        let mut wave = |amp: f64| {
            let theta = rng.random_range(0.0..TAU);
            let k = TAU / rng.random_range(12.0..24.0);
            (k * theta.cos(), k * theta.sin(), rng.random_range(0.0..TAU), amp)
        };
        Texture {
            waves: [wave(40.0), wave(28.0), wave(18.0)],
        }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        self.waves
            .iter()
            .map(|&(kx, ky, phase, amp)| amp * (kx * x + ky * y + phase).sin())
            .sum()
    }
}

const BACKGROUND: f64 = 110.0;
const BLOB_SIGMA: f64 = 1.5;

/// Renders one video of the given signature; the generator supplies the
/// per-video nuisance.
pub fn render_video(sig: &MotionSignature, cfg: &SynthConfig, rng: &mut impl Rng) -> Result<FrameSequence> {
    cfg.validate()?;
    let (w, h) = (cfg.width as usize, cfg.height as usize);
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let texture = Texture::random(rng);
    let speed = rng.random_range(0.9..1.1);
    let gain = rng.random_range(0.55..1.0);
    let phase = rng.random_range(0.0..TAU);
    let bx = cx + rng.random_range(-4.0..4.0);
    let by = cy + rng.random_range(-4.0..4.0);
    let flash_offset = rng.random_range(0..64usize);
    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::validation(e.to_string()))?;

    let mut frames = Vec::with_capacity(cfg.frame_count as usize);
    for t in 0..cfg.frame_count as usize {
        let tf = t as f64;
        // maps a pixel to background texture coordinates
        let warp = |x: f64, y: f64| -> (f64, f64) {
            match sig.global {
                GlobalMotion::Static => (x, y),
                GlobalMotion::Pan { dx, dy } => (x - dx * speed * tf, y - dy * speed * tf),
                GlobalMotion::Bob { amplitude, period } => {
                    (x, y - amplitude * speed * (TAU * tf / period + phase).sin())
                }
                GlobalMotion::Rotate { rate } => {
                    let a = -rate * speed * tf;
                    let (s, c) = a.sin_cos();
                    let (rx, ry) = (x - cx, y - cy);
                    (cx + c * rx - s * ry, cy + s * rx + c * ry)
                }
                GlobalMotion::Zoom { rate } => {
                    let scale = 1.0 + rate * speed * tf;
                    (cx + (x - cx) / scale, cy + (y - cy) / scale)
                }
            }
        };
        let (blob_x, blob_y, blob_on) = match sig.event {
            LocalEvent::Orbit { radius, period, clockwise } => {
                let a = TAU * tf / period + phase;
                let dir = if clockwise { 1.0 } else { -1.0 };
                (bx + radius * a.cos(), by + dir * radius * a.sin(), 1.0)
            }
            LocalEvent::Sweep { amplitude, period } => {
                (bx + amplitude * (TAU * tf / period + phase).sin(), by, 1.0)
            }
            LocalEvent::Flash { period } => {
                let on = (t + flash_offset) % period < period / 2;
                (bx, by, if on { 1.0 } else { 0.0 })
            }
        };
        let amp = sig.contrast * gain * blob_on;
        let mut frame = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let (xf, yf) = (x as f64, y as f64);
                let (tx, ty) = warp(xf, yf);
                let d2 = (xf - blob_x).powi(2) + (yf - blob_y).powi(2);
                let mut v = BACKGROUND + texture.at(tx, ty) + amp * (-d2 / (2.0 * BLOB_SIGMA * BLOB_SIGMA)).exp();
                if cfg.noise_sigma > 0.0 {
                    v += noise.sample(rng);
                }
                frame.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
        frames.push(frame);
    }
    FrameSequence::new(cfg.width, cfg.height, frames)
}

/// One rendered video with its label.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticVideo {
    pub video_id: String,
    pub class_index: usize,
    pub frames: FrameSequence,
}

/// Renders the whole dataset in memory; returns class names and videos in
/// class-major order.
pub fn synthesize(cfg: &SynthConfig) -> Result<(Vec<String>, Vec<SyntheticVideo>)> {
    cfg.validate()?;
    let sigs: Vec<MotionSignature> = (0..cfg.class_count).map(signature_for_class).collect();
    let mut videos = Vec::with_capacity(cfg.class_count * cfg.videos_per_class);
    for (k, sig) in sigs.iter().enumerate() {
        for i in 0..cfg.videos_per_class {
            let index = k * cfg.videos_per_class + i;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(index as u64);
            videos.push(SyntheticVideo {
                video_id: format!("{}_{i:03}", sig.name),
                class_index: k,
                frames: render_video(sig, cfg, &mut rng)?,
            });
        }
    }
    Ok((sigs.into_iter().map(|s| s.name).collect(), videos))
}

/// Writes `manifest.json` and `videos/*.fsq` under `out_dir`.
pub fn generate_synthetic_dataset(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let out_dir = out_dir.as_ref();
    let (classes, videos) = synthesize(cfg)?;
    let video_dir = out_dir.join("videos");
    std::fs::create_dir_all(&video_dir).map_err(|e| Error::io(&video_dir, e))?;
    let mut entries = Vec::with_capacity(videos.len());
    for v in &videos {
        let rel = PathBuf::from("videos").join(format!("{}.fsq", v.video_id));
        write_frame_sequence(&v.frames, out_dir.join(&rel))?;
        entries.push(VideoEntry {
            video_id: v.video_id.clone(),
            class_index: v.class_index,
            path: rel,
        });
    }
    let manifest = DatasetManifest::new(classes, entries)?;
    write_json(&manifest, out_dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{dense_flow, FlowParams, Plane};

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            class_count: 2,
            videos_per_class: 4,
            seed,
            ..SynthConfig::default()
        }
    }

    fn mean_interior_flow(seq: &FrameSequence, margin: usize) -> (f64, f64) {
        let (w, h) = (seq.width(), seq.height());
        let (mut su, mut sv, mut n) = (0.0, 0.0, 0.0);
        for t in 0..seq.frame_count() - 1 {
            let a = Plane::from_bytes(w, h, seq.frame(t)).unwrap();
            let b = Plane::from_bytes(w, h, seq.frame(t + 1)).unwrap();
            let f = dense_flow(&a, &b, &FlowParams::default()).unwrap();
            for y in margin..h - margin {
                for x in margin..w - margin {
                    let (u, v) = f.at(x, y);
                    su += u;
                    sv += v;
                    n += 1.0;
                }
            }
        }
        (su / n, sv / n)
    }

    #[test]
    fn reruns_are_byte_identical() {
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let m1 = generate_synthetic_dataset(&small(7), d1.path()).unwrap();
        let m2 = generate_synthetic_dataset(&small(7), d2.path()).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(m1.videos.len(), 8);
        for v in &m1.videos {
            let a = std::fs::read(d1.path().join(&v.path)).unwrap();
            let b = std::fs::read(d2.path().join(&v.path)).unwrap();
            assert_eq!(a, b);
        }
        assert_eq!(
            std::fs::read(d1.path().join("manifest.json")).unwrap(),
            std::fs::read(d2.path().join("manifest.json")).unwrap()
        );
        let (_, other) = synthesize(&small(8)).unwrap();
        let (_, same) = synthesize(&small(7)).unwrap();
        assert_ne!(other[0].frames, same[0].frames);
    }

    #[test]
    fn pan_class_flows_right_at_two_pixels() {
        let cfg = SynthConfig {
            noise_sigma: 0.0,
            ..small(3)
        };
        let (_, videos) = synthesize(&cfg).unwrap();
        let pan = videos.iter().find(|v| v.class_index == 0).unwrap();
        let (u, v) = mean_interior_flow(&pan.frames, 4);
        // speed jitter is at most 10%
        assert!((u - 2.0).abs() <= 0.5, "mean u = {u}");
        assert!(v.abs() <= 0.5, "mean v = {v}");
    }

    #[test]
    fn static_background_has_near_zero_flow() {
        let cfg = SynthConfig {
            noise_sigma: 0.0,
            ..small(3)
        };
        let sig = MotionSignature {
            name: "still".into(),
            global: GlobalMotion::Static,
            event: LocalEvent::Flash { period: 4 },
            contrast: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let seq = render_video(&sig, &cfg, &mut rng).unwrap();
        let (w, h) = (seq.width(), seq.height());
        for t in 0..seq.frame_count() - 1 {
            let a = Plane::from_bytes(w, h, seq.frame(t)).unwrap();
            let b = Plane::from_bytes(w, h, seq.frame(t + 1)).unwrap();
            let f = dense_flow(&a, &b, &FlowParams::default()).unwrap();
            assert!(f.u.data().iter().chain(f.v.data()).all(|x| x.abs() <= 1e-6));
        }
    }

    #[test]
    fn config_validation() {
        assert!(SynthConfig { class_count: 1, ..small(0) }.validate().is_err());
        assert!(SynthConfig { videos_per_class: 3, ..small(0) }.validate().is_err());
        assert!(SynthConfig { noise_sigma: -1.0, ..small(0) }.validate().is_err());
        let names: Vec<String> = (0..8).map(|k| signature_for_class(k).name).collect();
        let unique: std::collections::HashSet<_> = names.iter().collect();
        assert_eq!(unique.len(), names.len());
    }
}
