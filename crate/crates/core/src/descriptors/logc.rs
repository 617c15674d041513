use serde::{Deserialize, Serialize};

use crate::dataio::FrameSequence;
use crate::error::{ensure, Error, Result};
use crate::flow::{flow_derivatives, FlowDerivatives, FlowField, FlowParams, Plane};
use crate::linalg::{Matrix, SymmetricEigen};

use super::{frame_planes, sequence_flow, window_starts, DescriptorSet};

pub const KINEMATIC_DIM: usize = 12;
/// Upper triangle of a 12x12 symmetric matrix.
pub const LOGC_DIM: usize = KINEMATIC_DIM * (KINEMATIC_DIM + 1) / 2;

/// `[u, v, I_t, u_x, u_y, v_x, v_y, div, vort, |grad F|, |S|, shear]`
pub type KinematicFeature = [f64; KINEMATIC_DIM];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogcParams {
    pub window_len: usize,
    pub stride: usize,
    /// Sample every `pixel_step`-th pixel along both axes.
    pub pixel_step: usize,
}

impl Default for LogcParams {
    fn default() -> Self {
        LogcParams {
            window_len: 16,
            stride: 8,
            pixel_step: 2,
        }
    }
}

impl LogcParams {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.window_len >= 2, "Log-C window must span at least 2 frames");
        ensure!(self.stride >= 1, "Log-C stride must be positive");
        ensure!(self.pixel_step >= 1, "Log-C pixel step must be positive");
        Ok(())
    }
}

/// Per-pixel kinematic features, row-major.
pub fn kinematic_features(d: &FlowDerivatives, flow: &FlowField) -> Vec<KinematicFeature> {
    let n = flow.u.data().len();
    assert_eq!(d.u_x.data().len(), n, "derivative and flow shapes differ");
    (0..n)
        .map(|i| {
            let (ux, uy, vx, vy) = (d.u_x.data()[i], d.u_y.data()[i], d.v_x.data()[i], d.v_y.data()[i]);
            let shear = uy + vx;
            [
                flow.u.data()[i],
                flow.v.data()[i],
                d.i_t.data()[i],
                ux,
                uy,
                vx,
                vy,
                ux + vy,
                vx - uy,
                (ux * ux + uy * uy + vx * vx + vy * vy).sqrt(),
                (ux * ux + vy * vy + 0.5 * shear * shear).sqrt(),
                shear,
            ]
        })
        .collect()
}

/// Unbiased sample covariance of 12-dimensional samples.
pub fn covariance_descriptor(samples: &[KinematicFeature]) -> Result<Matrix> {
    ensure!(
        samples.len() > KINEMATIC_DIM,
        "covariance needs at least {} samples, got {}",
        KINEMATIC_DIM + 1,
        samples.len()
    );
    let n = samples.len() as f64;
    let mut mean = [0.0; KINEMATIC_DIM];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = Matrix::zeros(KINEMATIC_DIM, KINEMATIC_DIM);
    for s in samples {
        let c: Vec<f64> = s.iter().zip(&mean).map(|(v, m)| v - m).collect();
        for i in 0..KINEMATIC_DIM {
            for j in i..KINEMATIC_DIM {
                cov[(i, j)] += c[i] * c[j];
            }
        }
    }
    for i in 0..KINEMATIC_DIM {
        for j in i..KINEMATIC_DIM {
            let v = cov[(i, j)] / (n - 1.0);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(cov)
}

/// `C + eps I` with `eps = max(1e-10, 1e-6 * trace(C) / n)`.
pub fn regularize(c: &Matrix) -> Matrix {
    let n = c.rows();
    let eps = (1e-6 * c.trace() / n as f64).max(1e-10);
    let mut out = c.clone();
    for i in 0..n {
        out[(i, i)] += eps;
    }
    out
}

/// Principal logarithm of a symmetric positive-definite matrix.
pub fn matrix_log(c: &Matrix) -> Result<Matrix> {
    ensure!(c.is_square(), "matrix logarithm needs a square matrix");
    let scale = c.frobenius_norm().max(f64::MIN_POSITIVE);
    ensure!(
        c.max_asymmetry() <= 1e-9 * scale,
        "matrix logarithm input is not symmetric (asymmetry {:e})",
        c.max_asymmetry()
    );
    let eig = SymmetricEigen::jacobi(c)?;
    if eig.min_value() <= 0.0 {
        return Err(Error::Domain(format!(
            "matrix logarithm needs a positive-definite matrix, smallest eigenvalue is {:e}",
            eig.min_value()
        )));
    }
    Ok(eig.map_spectrum(f64::ln))
}

/// Upper triangle, row by row, with off-diagonal entries scaled by sqrt(2) so
/// the Euclidean norm of the result equals the Frobenius norm of `m`.
pub fn vectorize_symmetric(m: &Matrix) -> Vec<f64> {
    let n = m.rows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        out.push(m[(i, i)]);
        for j in i + 1..n {
            out.push(std::f64::consts::SQRT_2 * m[(i, j)]);
        }
    }
    out
}

pub fn log_c_from_flows(planes: &[Plane], flows: &[FlowField], p: &LogcParams) -> Result<DescriptorSet> {
    p.validate()?;
    ensure!(
        flows.len() + 1 == planes.len(),
        "{} flow fields for {} frames",
        flows.len(),
        planes.len()
    );
    ensure!(
        planes.len() >= p.window_len,
        "video has {} frames, Log-C window needs {}",
        planes.len(),
        p.window_len
    );
    let features: Vec<Vec<KinematicFeature>> = flows
        .iter()
        .enumerate()
        .map(|(t, f)| Ok(kinematic_features(&flow_derivatives(f, &planes[t], &planes[t + 1])?, f)))
        .collect::<Result<_>>()?;
    let (w, h) = (planes[0].width(), planes[0].height());

    let mut set = DescriptorSet::empty(LOGC_DIM);
    for start in window_starts(planes.len(), p.window_len, p.stride) {
        let mut samples = Vec::new();
        for frame in &features[start..start + p.window_len - 1] {
            for y in (0..h).step_by(p.pixel_step) {
                for x in (0..w).step_by(p.pixel_step) {
                    samples.push(frame[y * w + x]);
                }
            }
        }
        let cov = covariance_descriptor(&samples)?;
        set.push(&vectorize_symmetric(&matrix_log(&regularize(&cov))?))?;
    }
    Ok(set)
}

pub fn log_c_descriptors(seq: &FrameSequence, p: &LogcParams, flow: &FlowParams) -> Result<DescriptorSet> {
    p.validate()?;
    ensure!(
        seq.frame_count() >= p.window_len,
        "video has {} frames, Log-C window needs {}",
        seq.frame_count(),
        p.window_len
    );
    let planes = frame_planes(seq);
    let flows = sequence_flow(&planes, flow)?;
    log_c_from_flows(&planes, &flows, p)
}
