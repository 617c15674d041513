//! The three motion descriptors: HOF, Log-Covariance and cuboids.

mod cuboid;
mod hof;
mod logc;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataio::FrameSequence;
use crate::error::{ensure, Error, Result};
use crate::flow::{dense_flow, FlowField, FlowParams, Plane};

pub use cuboid::{
    cuboid_describe, cuboid_descriptors, cuboid_detect, cuboid_response, CuboidParams,
    InterestPoint, ResponseVolume,
};
pub use hof::{hof_descriptors, hof_from_flows, orientation_bin, HofParams, HOF_BINS};
pub use logc::{
    covariance_descriptor, kinematic_features, log_c_descriptors, log_c_from_flows, matrix_log,
    regularize, vectorize_symmetric, KinematicFeature, LogcParams, KINEMATIC_DIM, LOGC_DIM,
};

/// Descriptor families, in the fixed order their histogram blocks are
/// concatenated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptorKind {
    Hof,
    Logc,
    Cuboid,
}

impl DescriptorKind {
    pub const ALL: [DescriptorKind; 3] = [DescriptorKind::Hof, DescriptorKind::Logc, DescriptorKind::Cuboid];

    pub fn name(self) -> &'static str {
        match self {
            DescriptorKind::Hof => "hof",
            DescriptorKind::Logc => "logc",
            DescriptorKind::Cuboid => "cuboid",
        }
    }
}

impl fmt::Display for DescriptorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DescriptorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hof" => Ok(DescriptorKind::Hof),
            "logc" => Ok(DescriptorKind::Logc),
            "cuboid" => Ok(DescriptorKind::Cuboid),
            other => Err(Error::Config(format!("unknown descriptor type {other:?}"))),
        }
    }
}

/// A collection of equal-length real vectors stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorSet {
    dim: usize,
    values: Vec<f64>,
}

impl DescriptorSet {
    pub fn empty(dim: usize) -> Self {
        DescriptorSet {
            dim,
            values: Vec::new(),
        }
    }

    pub fn from_flat(dim: usize, values: Vec<f64>) -> Result<Self> {
        ensure!(dim > 0, "descriptor dimension must be positive");
        ensure!(
            values.len().is_multiple_of(dim),
            "{} values do not split into rows of {dim}",
            values.len()
        );
        Ok(DescriptorSet { dim, values })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut set = DescriptorSet::empty(dim);
        for r in rows {
            set.push(r)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        ensure!(
            row.len() == self.dim,
            "descriptor of length {} pushed into a set of dimension {}",
            row.len(),
            self.dim
        );
        self.values.extend_from_slice(row);
        Ok(())
    }

    /// Appends every row of `other`.
    pub fn extend(&mut self, other: &DescriptorSet) -> Result<()> {
        ensure!(other.dim == self.dim, "cannot pool descriptors of different dimensions");
        self.values.extend_from_slice(&other.values);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }
}

/// All descriptor parameters of the extraction stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractParams {
    pub flow: FlowParams,
    pub hof: HofParams,
    pub logc: LogcParams,
    pub cuboid: CuboidParams,
}

impl ExtractParams {
    pub fn validate(&self) -> Result<()> {
        self.flow.validate()?;
        self.hof.validate()?;
        self.logc.validate()?;
        self.cuboid.validate()
    }

    pub fn dim(&self, kind: DescriptorKind) -> usize {
        match kind {
            DescriptorKind::Hof => self.hof.dim(),
            DescriptorKind::Logc => LOGC_DIM,
            DescriptorKind::Cuboid => self.cuboid.descriptor_dim(),
        }
    }
}

/// Per-type descriptors of one video.
pub type VideoDescriptors = BTreeMap<DescriptorKind, DescriptorSet>;

pub fn frame_planes(seq: &FrameSequence) -> Vec<Plane> {
    (0..seq.frame_count())
        .map(|t| Plane::from_bytes(seq.width(), seq.height(), seq.frame(t)).expect("frame shape"))
        .collect()
}

/// Flow for every consecutive frame pair.
pub fn sequence_flow(planes: &[Plane], params: &FlowParams) -> Result<Vec<FlowField>> {
    planes
        .windows(2)
        .map(|pair| dense_flow(&pair[0], &pair[1], params))
        .collect()
}

/// Extracts the requested descriptor types, computing optical flow once.
pub fn extract_descriptors(
    seq: &FrameSequence,
    params: &ExtractParams,
    kinds: &[DescriptorKind],
) -> Result<VideoDescriptors> {
    params.validate()?;
    let planes = frame_planes(seq);
    let needs_flow = kinds.iter().any(|k| *k != DescriptorKind::Cuboid);
    let flows = if needs_flow {
        sequence_flow(&planes, &params.flow)?
    } else {
        Vec::new()
    };
    let mut out = VideoDescriptors::new();
    for &kind in kinds {
        let set = match kind {
            DescriptorKind::Hof => hof_from_flows(&flows, &params.hof)?,
            DescriptorKind::Logc => log_c_from_flows(&planes, &flows, &params.logc)?,
            DescriptorKind::Cuboid => cuboid_descriptors(seq, &params.cuboid)?,
        };
        out.insert(kind, set);
    }
    Ok(out)
}

/// Start frames of the sliding temporal windows.
pub(crate) fn window_starts(frame_count: usize, window_len: usize, stride: usize) -> Vec<usize> {
    if frame_count < window_len {
        return Vec::new();
    }
    (0..=frame_count - window_len).step_by(stride).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_cover_the_sequence() {
        assert_eq!(window_starts(24, 16, 8), vec![0, 8]);
        assert_eq!(window_starts(24, 8, 4), vec![0, 4, 8, 12, 16]);
        assert!(window_starts(5, 8, 4).is_empty());
    }

    #[test]
    fn descriptor_set_shape() {
        let mut s = DescriptorSet::empty(3);
        s.push(&[1.0, 2.0, 3.0]).unwrap();
        assert!(s.push(&[1.0]).is_err());
        assert_eq!(s.len(), 1);
        assert!(DescriptorSet::from_flat(2, vec![1.0; 3]).is_err());
        assert_eq!("logc".parse::<DescriptorKind>().unwrap(), DescriptorKind::Logc);
        assert!("sift".parse::<DescriptorKind>().is_err());
    }
}
