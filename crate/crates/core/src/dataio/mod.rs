//! File formats, dataset manifests and the synthetic ego-motion generator.
//!
//! Binary formats (`.fsq`, `.dsc`, `.cbk`) are little-endian: a 4-byte ASCII
//! magic followed by `u32` header fields and a flat payload. Everything else
//! is JSON carrying `"format_version": 1` and a `"kind"` tag.

mod binary;
mod json;
mod synth;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

pub use binary::{
    read_codebook, read_codebook_centroids, read_descriptor_set, read_frame_sequence, write_codebook,
    write_descriptor_set, write_frame_sequence,
};
pub use json::{read_json, sniff_kind, write_atomic, write_json, Document, FORMAT_VERSION};
pub use synth::{
    generate_synthetic_dataset, render_video, signature_for_class, GlobalMotion, LocalEvent,
    synthesize, MotionSignature, SynthConfig, SyntheticVideo,
};

/// A grayscale video volume, stored frame-major then row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameSequence {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl FrameSequence {
    pub fn new(width: u32, height: u32, frames: Vec<Vec<u8>>) -> Result<Self> {
        let expected = width as usize * height as usize;
        ensure!(
            frames.iter().all(|f| f.len() == expected),
            "every frame must hold {width}x{height} intensities"
        );
        Self::from_raw(width, height, frames.len() as u32, frames.concat())
    }

    pub fn from_raw(width: u32, height: u32, frame_count: u32, data: Vec<u8>) -> Result<Self> {
        ensure!(
            width > 0 && height > 0 && frame_count > 0,
            "zero dimension in frame sequence ({width}x{height}x{frame_count})"
        );
        ensure!(frame_count >= 2, "a frame sequence needs at least 2 frames");
        ensure!(
            data.len() == width as usize * height as usize * frame_count as usize,
            "payload length {} does not match {width}x{height}x{frame_count}",
            data.len()
        );
        Ok(FrameSequence {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width as usize
    }

    pub fn height(&self) -> usize {
        self.height as usize
    }

    pub fn frame_count(&self) -> usize {
        self.data.len() / (self.width() * self.height())
    }

    pub fn frame(&self, t: usize) -> &[u8] {
        let n = self.width() * self.height();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    /// Intensity at `(x, y, t)` as a float.
    pub fn at(&self, x: usize, y: usize, t: usize) -> f64 {
        f64::from(self.data[(t * self.height() + y) * self.width() + x])
    }
}

/// One labeled video in a dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoEntry {
    pub video_id: String,
    pub class_index: usize,
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub kind: String,
    pub classes: Vec<String>,
    pub videos: Vec<VideoEntry>,
}

impl Document for DatasetManifest {
    const KIND: &'static str = "manifest";

    fn format_version(&self) -> u32 {
        self.format_version
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for v in &self.videos {
            ensure!(
                seen.insert(v.video_id.as_str()),
                "duplicate video id {:?}",
                v.video_id
            );
            ensure!(
                v.class_index < self.classes.len(),
                "video {:?} has class index {} but only {} classes exist",
                v.video_id,
                v.class_index,
                self.classes.len()
            );
        }
        for (k, name) in self.classes.iter().enumerate() {
            let n = self.videos.iter().filter(|v| v.class_index == k).count();
            ensure!(n >= 2, "class {name:?} has {n} videos, at least 2 are required");
        }
        Ok(())
    }
}

impl DatasetManifest {
    pub fn new(classes: Vec<String>, videos: Vec<VideoEntry>) -> Result<Self> {
        let m = DatasetManifest {
            format_version: FORMAT_VERSION,
            kind: Self::KIND.to_string(),
            classes,
            videos,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.videos.iter().map(|v| v.class_index).collect()
    }

    /// Indices of the videos belonging to each class, in manifest order.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.classes.len()];
        for (i, v) in self.videos.iter().enumerate() {
            members[v.class_index].push(i);
        }
        members
    }

    /// Resolves a video's path against the directory holding the manifest.
    pub fn video_path(&self, manifest_dir: &Path, index: usize) -> PathBuf {
        manifest_dir.join(&self.videos[index].path)
    }

    pub fn load_videos(&self, manifest_dir: &Path) -> Result<Vec<FrameSequence>> {
        (0..self.videos.len())
            .map(|i| read_frame_sequence(self.video_path(manifest_dir, i)))
            .collect()
    }
}
