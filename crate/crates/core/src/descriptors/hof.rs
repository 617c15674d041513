use serde::{Deserialize, Serialize};

use crate::dataio::FrameSequence;
use crate::error::{ensure, Result};
use crate::flow::{FlowField, FlowParams};

use super::{frame_planes, sequence_flow, window_starts, DescriptorSet};

pub const HOF_BINS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HofParams {
    /// Cells per side of the spatial grid.
    pub grid: usize,
    pub window_len: usize,
    pub stride: usize,
    /// Flow vectors shorter than this (px/frame) are ignored.
    pub min_magnitude: f64,
}

impl Default for HofParams {
    fn default() -> Self {
        HofParams {
            grid: 2,
            window_len: 16,
            stride: 8,
            min_magnitude: 0.05,
        }
    }
}

impl HofParams {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.grid >= 1, "HOF grid must have at least one cell");
        ensure!(self.window_len >= 2, "HOF window must span at least 2 frames");
        ensure!(self.stride >= 1, "HOF stride must be positive");
        ensure!(self.min_magnitude >= 0.0, "HOF magnitude threshold must be nonnegative");
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.grid * self.grid * HOF_BINS
    }
}

/// Orientation bin of a nonzero flow vector; bin `j` is centred on `j * 45°`.
///
/// The vector is first rotated by quarter turns into `[0°, 90°)`. Quarter
/// turns are exact in floating point, so rotating the input by 90° shifts
/// the result by exactly two bins.
pub fn orientation_bin(u: f64, v: f64) -> usize {
    let (mut a, mut b) = (u, v);
    let mut quarter = 0;
    while !(a > 0.0 && b >= 0.0) {
        // rotate by -90°
        (a, b) = (b, -a);
        quarter += 1;
        if quarter == 4 {
            return 0;
        }
    }
    let angle = b.atan2(a);
    let local = if angle < std::f64::consts::FRAC_PI_8 {
        0
    } else if angle < 3.0 * std::f64::consts::FRAC_PI_8 {
        1
    } else {
        2
    };
    (2 * quarter + local) % HOF_BINS
}

/// One L1-normalized `grid*grid*8` histogram per temporal window of flow
/// fields (a window of `window_len` frames spans `window_len - 1` fields).
pub fn hof_from_flows(flows: &[FlowField], p: &HofParams) -> Result<DescriptorSet> {
    p.validate()?;
    let frames = flows.len() + 1;
    ensure!(
        frames >= p.window_len,
        "video has {frames} frames, HOF window needs {}",
        p.window_len
    );
    let mut set = DescriptorSet::empty(p.dim());
    for start in window_starts(frames, p.window_len, p.stride) {
        let mut hist = vec![0.0; p.dim()];
        for flow in &flows[start..start + p.window_len - 1] {
            accumulate(flow, p, &mut hist);
        }
        // summed in sorted order so the total does not depend on bin order
        let mut sorted = hist.clone();
        sorted.sort_by(f64::total_cmp);
        let mass: f64 = sorted.iter().sum();
        if mass > 0.0 {
            hist.iter_mut().for_each(|h| *h /= mass);
        }
        set.push(&hist)?;
    }
    Ok(set)
}

fn accumulate(flow: &FlowField, p: &HofParams, hist: &mut [f64]) {
    let (w, h) = (flow.width(), flow.height());
    for y in 0..h {
        let cy = y * p.grid / h;
        for x in 0..w {
            let (u, v) = flow.at(x, y);
            let mag = u.hypot(v);
            if mag == 0.0 || mag < p.min_magnitude {
                continue;
            }
            let cx = x * p.grid / w;
            hist[(cy * p.grid + cx) * HOF_BINS + orientation_bin(u, v)] += mag;
        }
    }
}

pub fn hof_descriptors(seq: &FrameSequence, p: &HofParams, flow: &FlowParams) -> Result<DescriptorSet> {
    p.validate()?;
    ensure!(
        seq.frame_count() >= p.window_len,
        "video has {} frames, HOF window needs {}",
        seq.frame_count(),
        p.window_len
    );
    let flows = sequence_flow(&frame_planes(seq), flow)?;
    hof_from_flows(&flows, p)
}
