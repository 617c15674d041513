use serde::{Deserialize, Serialize};

use crate::dataio::FrameSequence;
use crate::error::{ensure, Result};

use super::DescriptorSet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CuboidParams {
    /// Spatial Gaussian scale (px).
    pub sigma: f64,
    /// Temporal scale (frames).
    pub tau: f64,
    /// Responses must exceed this to count as detections.
    pub threshold: f64,
    pub max_points: usize,
}

impl Default for CuboidParams {
    fn default() -> Self {
        CuboidParams {
            sigma: 1.0,
            tau: 1.5,
            threshold: 50.0,
            max_points: 32,
        }
    }
}

impl CuboidParams {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.sigma > 0.0 && self.sigma.is_finite(), "cuboid sigma must be positive");
        ensure!(self.tau > 0.0 && self.tau.is_finite(), "cuboid tau must be positive");
        ensure!(self.threshold >= 0.0, "cuboid threshold must be nonnegative");
        ensure!(self.max_points >= 1, "cuboid max_points must be at least 1");
        Ok(())
    }

    fn spatial_half(&self) -> usize {
        (3.0 * self.sigma).round() as usize
    }

    /// Half-extent of the temporal support, shared by detector and cuboid.
    pub fn temporal_half(&self) -> usize {
        ((2.0 * self.tau).round() as usize).max(1)
    }

    pub fn side_xy(&self) -> usize {
        2 * self.spatial_half() + 1
    }

    pub fn side_t(&self) -> usize {
        2 * self.temporal_half() + 1
    }

    pub fn descriptor_dim(&self) -> usize {
        self.side_xy() * self.side_xy() * self.side_t() * 3
    }

    /// Quadrature pair `(-cos(w t) g(t), -sin(w t) g(t))` with `w = 4 / tau`
    /// rad/frame and `g(t) = exp(-t^2 / tau^2)`, sampled on `[-r, r]`.
    fn temporal_filters(&self) -> (Vec<f64>, Vec<f64>) {
        let r = self.temporal_half() as isize;
        let omega = 4.0 / self.tau;
        let env = |t: f64| (-(t * t) / (self.tau * self.tau)).exp();
        let even = (-r..=r).map(|t| -(omega * t as f64).cos() * env(t as f64)).collect();
        let odd = (-r..=r)
            .map(|t| {
                let s = -(omega * t.abs() as f64).sin() * env(t as f64);
                if t < 0 { -s } else { s }
            })
            .collect();
        (even, odd)
    }
}

/// Detector response over the whole volume; frames outside
/// `first_valid..=last_valid` lack full temporal support and hold zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ResponseVolume {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub first_valid: usize,
    pub last_valid: usize,
    data: Vec<f64>,
}

impl ResponseVolume {
    pub fn at(&self, x: usize, y: usize, t: usize) -> f64 {
        self.data[(t * self.height + y) * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterestPoint {
    pub x: usize,
    pub y: usize,
    pub t: usize,
    pub response: f64,
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

fn smooth_frame(frame: &[u8], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, g)| g * f64::from(frame[y * w + clamp(x as isize + k as isize - r, w)]))
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, g)| g * tmp[clamp(y as isize + k as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

/// `R = (I*g*h_ev)^2 + (I*g*h_od)^2`. The temporal filters are applied to
/// differences against the centre frame, so a constant signal gives exactly
/// zero response.
pub fn cuboid_response(seq: &FrameSequence, p: &CuboidParams) -> Result<ResponseVolume> {
    p.validate()?;
    let (w, h, frames) = (seq.width(), seq.height(), seq.frame_count());
    let r = p.temporal_half();
    ensure!(
        frames > 2 * r,
        "video has {frames} frames, cuboid detector needs at least {}",
        2 * r + 1
    );
    let kernel = gaussian_kernel(p.sigma);
    let smoothed: Vec<Vec<f64>> = (0..frames).map(|t| smooth_frame(seq.frame(t), w, h, &kernel)).collect();
    let (even, odd) = p.temporal_filters();

    let mut data = vec![0.0; w * h * frames];
    for t in r..frames - r {
        let centre = &smoothed[t];
        let out = &mut data[t * w * h..(t + 1) * w * h];
        for (i, o) in out.iter_mut().enumerate() {
            let (mut ev, mut od) = (0.0, 0.0);
            for k in 0..=2 * r {
                let d = smoothed[t + k - r][i] - centre[i];
                ev += even[k] * d;
                od += odd[k] * d;
            }
            *o = ev * ev + od * od;
        }
    }
    Ok(ResponseVolume {
        width: w,
        height: h,
        frames,
        first_valid: r,
        last_valid: frames - 1 - r,
        data,
    })
}

/// Local maxima of the response over 3x3x3 neighbourhoods above the
/// threshold, strongest first.
///
/// Plateaus yield a single point: a candidate must strictly exceed the
/// neighbours that precede it in `(t, y, x)` order.
pub fn cuboid_detect(seq: &FrameSequence, p: &CuboidParams) -> Result<Vec<InterestPoint>> {
    let resp = cuboid_response(seq, p)?;
    let (w, h) = (resp.width, resp.height);
    let mut points = Vec::new();
    for t in resp.first_valid..=resp.last_valid {
        for y in 0..h {
            for x in 0..w {
                let r = resp.at(x, y, t);
                if r.partial_cmp(&p.threshold) != Some(std::cmp::Ordering::Greater) {
                    continue;
                }
                if is_local_max(&resp, x, y, t, r) {
                    points.push(InterestPoint { x, y, t, response: r });
                }
            }
        }
    }
    points.sort_by(|a, b| {
        b.response
            .total_cmp(&a.response)
            .then((a.t, a.y, a.x).cmp(&(b.t, b.y, b.x)))
    });
    points.truncate(p.max_points);
    Ok(points)
}

fn is_local_max(resp: &ResponseVolume, x: usize, y: usize, t: usize, r: f64) -> bool {
    for dt in -1isize..=1 {
        let nt = t as isize + dt;
        if nt < resp.first_valid as isize || nt > resp.last_valid as isize {
            continue;
        }
        for dy in -1isize..=1 {
            let ny = y as isize + dy;
            if ny < 0 || ny >= resp.height as isize {
                continue;
            }
            for dx in -1isize..=1 {
                let nx = x as isize + dx;
                if (dt, dy, dx) == (0, 0, 0) || nx < 0 || nx >= resp.width as isize {
                    continue;
                }
                let other = resp.at(nx as usize, ny as usize, nt as usize);
                let earlier = (dt, dy, dx) < (0, 0, 0);
                if other > r || (earlier && other == r) {
                    return false;
                }
            }
        }
    }
    true
}

/// Brightness gradients inside the cuboid around `point`, flattened in
/// `(t, y, x, component)` order and L2-normalized. Coordinates outside the
/// video are clamped to the border.
pub fn cuboid_describe(seq: &FrameSequence, point: &InterestPoint, p: &CuboidParams) -> Vec<f64> {
    let (w, h, frames) = (seq.width() as isize, seq.height() as isize, seq.frame_count() as isize);
    let hx = p.spatial_half() as isize;
    let ht = p.temporal_half() as isize;
    let at = |x: isize, y: isize, t: isize| {
        seq.at(
            x.clamp(0, w - 1) as usize,
            y.clamp(0, h - 1) as usize,
            t.clamp(0, frames - 1) as usize,
        )
    };
    let (px, py, pt) = (point.x as isize, point.y as isize, point.t as isize);
    let mut out = Vec::with_capacity(p.descriptor_dim());
    for t in pt - ht..=pt + ht {
        for y in py - hx..=py + hx {
            for x in px - hx..=px + hx {
                out.push((at(x + 1, y, t) - at(x - 1, y, t)) / 2.0);
                out.push((at(x, y + 1, t) - at(x, y - 1, t)) / 2.0);
                out.push((at(x, y, t + 1) - at(x, y, t - 1)) / 2.0);
            }
        }
    }
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        out.iter_mut().for_each(|v| *v /= norm);
    }
    out
}

pub fn cuboid_descriptors(seq: &FrameSequence, p: &CuboidParams) -> Result<DescriptorSet> {
    let points = cuboid_detect(seq, p)?;
    let mut set = DescriptorSet::empty(p.descriptor_dim());
    for pt in &points {
        set.push(&cuboid_describe(seq, pt, p))?;
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn video(w: usize, h: usize, frames: usize, f: impl Fn(usize, usize, usize) -> f64) -> FrameSequence {
        let data = (0..frames)
            .map(|t| {
                (0..w * h)
                    .map(|i| f(i % w, i / w, t).round().clamp(0.0, 255.0) as u8)
                    .collect()
            })
            .collect();
        FrameSequence::new(w as u32, h as u32, data).unwrap()
    }

    fn flashing_blob(x0: f64, y0: f64) -> FrameSequence {
        video(32, 32, 24, move |x, y, t| {
            let on = (t / 2) % 3 == 0 && (8..=18).contains(&t);
            let d2 = (x as f64 - x0).powi(2) + (y as f64 - y0).powi(2);
            40.0 + if on { 150.0 * (-d2 / 4.0).exp() } else { 0.0 }
        })
    }

    #[test]
    fn dimension_rule() {
        let p = CuboidParams {
            sigma: 1.5,
            tau: 2.0,
            ..CuboidParams::default()
        };
        assert_eq!((p.side_xy(), p.side_t()), (11, 9));
        assert_eq!(p.descriptor_dim(), 3267);
    }

    #[test]
    fn filters_have_zero_mean_odd_part() {
        let (even, odd) = CuboidParams::default().temporal_filters();
        assert_eq!(even.len(), odd.len());
        assert!(odd.iter().sum::<f64>().abs() < 1e-15);
        for k in 0..odd.len() {
            assert_eq!(odd[k], -odd[odd.len() - 1 - k]);
            assert_eq!(even[k], even[even.len() - 1 - k]);
        }
    }

    #[test]
    fn constant_video_has_no_response() {
        let seq = video(16, 16, 12, |_, _, _| 77.0);
        let p = CuboidParams {
            threshold: 0.0,
            ..CuboidParams::default()
        };
        assert_eq!(cuboid_response(&seq, &p).unwrap().max(), 0.0);
        assert!(cuboid_detect(&seq, &p).unwrap().is_empty());
    }

    #[test]
    fn flashing_blob_is_found() {
        let seq = flashing_blob(14.0, 19.0);
        let p = CuboidParams {
            sigma: 1.0,
            tau: 2.0,
            threshold: 1.0,
            max_points: 5,
        };
        let pts = cuboid_detect(&seq, &p).unwrap();
        let top = pts[0];
        assert!((top.x as f64 - 14.0).abs() <= 2.0 && (top.y as f64 - 19.0).abs() <= 2.0, "{top:?}");
        let flashes = [8usize, 9, 14, 15];
        assert!(flashes.iter().any(|&f| top.t.abs_diff(f) <= 2), "{top:?}");
        assert!(pts.windows(2).all(|w| w[0].response >= w[1].response));
    }

    #[test]
    fn infinite_threshold_detects_nothing() {
        let seq = flashing_blob(10.0, 10.0);
        let p = CuboidParams {
            threshold: f64::INFINITY,
            ..CuboidParams::default()
        };
        assert!(cuboid_detect(&seq, &p).unwrap().is_empty());
    }

    #[test]
    fn detections_follow_translation() {
        let p = CuboidParams {
            threshold: 1.0,
            max_points: 8,
            ..CuboidParams::default()
        };
        let a = cuboid_detect(&flashing_blob(12.0, 13.0), &p).unwrap();
        let b = cuboid_detect(&flashing_blob(15.0, 15.0), &p).unwrap();
        assert_eq!(a.len(), b.len());
        for (pa, pb) in a.iter().zip(&b) {
            assert_eq!((pa.x + 3, pa.y + 2, pa.t), (pb.x, pb.y, pb.t));
        }
    }

    #[test]
    fn short_video_is_rejected() {
        let seq = video(8, 8, 4, |_, _, _| 0.0);
        assert!(cuboid_detect(&seq, &CuboidParams::default()).is_err());
    }

    #[test]
    fn descriptor_gradients() {
        let p = CuboidParams::default();
        let flat = video(20, 20, 12, |_, _, _| 50.0);
        let pt = InterestPoint { x: 10, y: 10, t: 6, response: 1.0 };
        let d = cuboid_describe(&flat, &pt, &p);
        assert_eq!(d.len(), p.descriptor_dim());
        assert!(d.iter().all(|&v| v == 0.0));

        let ramp = video(20, 20, 12, |x, _, _| 3.0 * x as f64);
        let d = cuboid_describe(&ramp, &pt, &p);
        let n = d.len() / 3;
        let expect = 1.0 / (n as f64).sqrt();
        for g in d.chunks(3) {
            assert!((g[0] - expect).abs() < 1e-12);
            assert_eq!((g[1], g[2]), (0.0, 0.0));
        }
    }
}
