//! Dense Horn–Schunck optical flow and the spatial/temporal derivatives that
//! feed the HOF and Log-C descriptors.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// A single-channel float image.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        ensure!(
            data.len() == width * height,
            "plane payload {} does not match {width}x{height}",
            data.len()
        );
        Ok(Plane {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Plane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane {
            width,
            height,
            data,
        }
    }

    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Plane::new(width, height, bytes.iter().map(|&b| f64::from(b)).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    fn same_shape(&self, other: &Plane) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Central difference along x, one-sided at the borders.
    pub fn diff_x(&self) -> Plane {
        let w = self.width;
        Plane::from_fn(w, self.height, |x, y| {
            if w < 2 {
                0.0
            } else if x == 0 {
                self.at(1, y) - self.at(0, y)
            } else if x == w - 1 {
                self.at(w - 1, y) - self.at(w - 2, y)
            } else {
                (self.at(x + 1, y) - self.at(x - 1, y)) / 2.0
            }
        })
    }

    /// Central difference along y, one-sided at the borders.
    pub fn diff_y(&self) -> Plane {
        let h = self.height;
        Plane::from_fn(self.width, h, |x, y| {
            if h < 2 {
                0.0
            } else if y == 0 {
                self.at(x, 1) - self.at(x, 0)
            } else if y == h - 1 {
                self.at(x, h - 1) - self.at(x, h - 2)
            } else {
                (self.at(x, y + 1) - self.at(x, y - 1)) / 2.0
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowParams {
    /// Smoothness weight; larger values give smoother fields.
    pub alpha: f64,
    pub iterations: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            alpha: 10.0,
            iterations: 100,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.alpha > 0.0 && self.alpha.is_finite(),
            "flow smoothness must be positive, got {}",
            self.alpha
        );
        ensure!(self.iterations >= 1, "flow needs at least one iteration");
        Ok(())
    }
}

/// Per-pixel displacement in px/frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub u: Plane,
    pub v: Plane,
}

impl FlowField {
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> (f64, f64)) -> Self {
        FlowField {
            u: Plane::from_fn(width, height, |x, y| f(x, y).0),
            v: Plane::from_fn(width, height, |x, y| f(x, y).1),
        }
    }

    pub fn width(&self) -> usize {
        self.u.width
    }

    pub fn height(&self) -> usize {
        self.u.height
    }

    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        (self.u.at(x, y), self.v.at(x, y))
    }
}

// Neighbour weights of the Horn–Schunck local average.
const NEIGHBOURS: [(isize, isize, f64); 8] = [
    (-1, 0, 1.0 / 6.0),
    (1, 0, 1.0 / 6.0),
    (0, -1, 1.0 / 6.0),
    (0, 1, 1.0 / 6.0),
    (-1, -1, 1.0 / 12.0),
    (1, -1, 1.0 / 12.0),
    (-1, 1, 1.0 / 12.0),
    (1, 1, 1.0 / 12.0),
];

/// Fixed-point Horn–Schunck iteration.
///
/// The local average gives out-of-frame neighbour weight back to the centre
/// pixel, which keeps the averaging operator symmetric; with that choice each
/// update is a block-Jacobi step on a convex quadratic and [`energy`] never
/// increases.
///
/// [`energy`]: HornSchunck::energy
pub struct HornSchunck {
    ix: Plane,
    iy: Plane,
    it: Plane,
    alpha_sq: f64,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl HornSchunck {
    pub fn new(prev: &Plane, next: &Plane, alpha: f64) -> Result<Self> {
        ensure!(
            prev.same_shape(next),
            "frame sizes differ: {}x{} vs {}x{}",
            prev.width,
            prev.height,
            next.width,
            next.height
        );
        ensure!(alpha > 0.0, "flow smoothness must be positive");
        let (px, py) = (prev.diff_x(), prev.diff_y());
        let (nx, ny) = (next.diff_x(), next.diff_y());
        let avg = |a: &Plane, b: &Plane| Plane {
            width: a.width,
            height: a.height,
            data: a.data.iter().zip(&b.data).map(|(p, q)| 0.5 * (p + q)).collect(),
        };
        let it = Plane {
            width: prev.width,
            height: prev.height,
            data: next.data.iter().zip(&prev.data).map(|(n, p)| n - p).collect(),
        };
        let n = prev.data.len();
        Ok(HornSchunck {
            ix: avg(&px, &nx),
            iy: avg(&py, &ny),
            it,
            alpha_sq: alpha * alpha,
            u: vec![0.0; n],
            v: vec![0.0; n],
        })
    }

    fn local_average(&self, field: &[f64], x: usize, y: usize) -> f64 {
        let (w, h) = (self.ix.width as isize, self.ix.height as isize);
        let centre = field[y * self.ix.width + x];
        let mut acc = 0.0;
        for &(dx, dy, wt) in &NEIGHBOURS {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            acc += wt
                * if nx >= 0 && nx < w && ny >= 0 && ny < h {
                    field[ny as usize * self.ix.width + nx as usize]
                } else {
                    centre
                };
        }
        acc
    }

    pub fn step(&mut self) {
        let (w, h) = (self.ix.width, self.ix.height);
        let mut nu = vec![0.0; self.u.len()];
        let mut nv = vec![0.0; self.v.len()];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let ub = self.local_average(&self.u, x, y);
                let vb = self.local_average(&self.v, x, y);
                let (gx, gy, gt) = (self.ix.data[i], self.iy.data[i], self.it.data[i]);
                let k = (gx * ub + gy * vb + gt) / (self.alpha_sq + gx * gx + gy * gy);
                nu[i] = ub - gx * k;
                nv[i] = vb - gy * k;
            }
        }
        self.u = nu;
        self.v = nv;
    }

    /// Brightness-constancy residual plus weighted smoothness, each
    /// neighbouring pair counted once.
    pub fn energy(&self) -> f64 {
        let (w, h) = (self.ix.width, self.ix.height);
        let mut data_term = 0.0;
        let mut smooth = 0.0;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let r = self.ix.data[i] * self.u[i] + self.iy.data[i] * self.v[i] + self.it.data[i];
                data_term += r * r;
                // forward half of the neighbourhood: each pair visited once
                for &(dx, dy, wt) in &NEIGHBOURS {
                    if (dy, dx) <= (0, 0) {
                        continue;
                    }
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    let (du, dv) = (self.u[i] - self.u[j], self.v[i] - self.v[j]);
                    smooth += wt * (du * du + dv * dv);
                }
            }
        }
        data_term + self.alpha_sq * smooth
    }

    pub fn field(&self) -> FlowField {
        let (w, h) = (self.ix.width, self.ix.height);
        FlowField {
            u: Plane {
                width: w,
                height: h,
                data: self.u.clone(),
            },
            v: Plane {
                width: w,
                height: h,
                data: self.v.clone(),
            },
        }
    }
}

pub fn dense_flow(prev: &Plane, next: &Plane, params: &FlowParams) -> Result<FlowField> {
    params.validate()?;
    let mut hs = HornSchunck::new(prev, next, params.alpha)?;
    for _ in 0..params.iterations {
        hs.step();
    }
    Ok(hs.field())
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowDerivatives {
    pub u_x: Plane,
    pub u_y: Plane,
    pub v_x: Plane,
    pub v_y: Plane,
    /// Temporal intensity change `next - prev`.
    pub i_t: Plane,
}

pub fn flow_derivatives(flow: &FlowField, prev: &Plane, next: &Plane) -> Result<FlowDerivatives> {
    ensure!(
        flow.u.same_shape(prev) && prev.same_shape(next) && flow.v.same_shape(prev),
        "flow and frame dimensions disagree"
    );
    Ok(FlowDerivatives {
        u_x: flow.u.diff_x(),
        u_y: flow.u.diff_y(),
        v_x: flow.v.diff_x(),
        v_y: flow.v.diff_y(),
        i_t: Plane {
            width: prev.width,
            height: prev.height,
            data: next.data.iter().zip(&prev.data).map(|(n, p)| n - p).collect(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texture(x: f64, y: f64) -> f64 {
        128.0
            + 40.0 * (2.0 * std::f64::consts::PI * (x / 17.0 + y / 29.0)).sin()
            + 30.0 * (2.0 * std::f64::consts::PI * (x / 23.0 - y / 13.0) + 1.0).cos()
    }

    fn shifted_pair(shift: f64) -> (Plane, Plane) {
        let prev = Plane::from_fn(32, 32, |x, y| texture(x as f64, y as f64));
        let next = Plane::from_fn(32, 32, |x, y| texture(x as f64 - shift, y as f64));
        (prev, next)
    }

    fn interior_mean(p: &Plane, margin: usize) -> f64 {
        let mut s = 0.0;
        let mut n = 0.0;
        for y in margin..p.height - margin {
            for x in margin..p.width - margin {
                s += p.at(x, y);
                n += 1.0;
            }
        }
        s / n
    }

    #[test]
    fn identical_frames_give_zero_flow() {
        let (prev, _) = shifted_pair(0.0);
        let f = dense_flow(&prev, &prev, &FlowParams::default()).unwrap();
        let max = f.u.data.iter().chain(&f.v.data).fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max <= 1e-6);
    }

    #[test]
    fn one_pixel_shift_is_recovered() {
        let (prev, next) = shifted_pair(1.0);
        let f = dense_flow(&prev, &next, &FlowParams::default()).unwrap();
        let mu = interior_mean(&f.u, 4);
        let mv = interior_mean(&f.v, 4);
        assert!((0.7..=1.3).contains(&mu), "mean u = {mu}");
        assert!(mv.abs() <= 0.3, "mean v = {mv}");

        let stiff = FlowParams {
            alpha: 20.0,
            ..FlowParams::default()
        };
        let g = dense_flow(&prev, &next, &stiff).unwrap();
        assert!(interior_mean(&g.u, 4) > 0.0);
    }

    #[test]
    fn constant_offset_does_not_change_flow() {
        let (prev, next) = shifted_pair(1.0);
        let round = |p: &Plane| Plane::new(p.width, p.height, p.data.iter().map(|v| v.round()).collect()).unwrap();
        let (prev, next) = (round(&prev), round(&next));
        let lift = |p: &Plane| Plane::new(p.width, p.height, p.data.iter().map(|v| v + 37.0).collect()).unwrap();
        let a = dense_flow(&prev, &next, &FlowParams::default()).unwrap();
        let b = dense_flow(&lift(&prev), &lift(&next), &FlowParams::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn energy_never_increases() {
        for (shift, alpha) in [(1.0, 10.0), (2.0, 5.0), (0.5, 30.0)] {
            let (prev, next) = shifted_pair(shift);
            let mut hs = HornSchunck::new(&prev, &next, alpha).unwrap();
            let mut last = hs.energy();
            for _ in 0..60 {
                hs.step();
                let e = hs.energy();
                assert!(e <= last * (1.0 + 1e-12) + 1e-9, "{e} > {last}");
                last = e;
            }
        }
    }

    #[test]
    fn mismatched_sizes_are_rejected() {
        let a = Plane::filled(8, 8, 0.0);
        let b = Plane::filled(8, 9, 0.0);
        assert!(dense_flow(&a, &b, &FlowParams::default()).is_err());
        assert!(dense_flow(&a, &a, &FlowParams { alpha: 0.0, iterations: 1 }).is_err());
    }

    #[test]
    fn derivatives_of_linear_fields() {
        let flat = FlowField::from_fn(10, 10, |_, _| (0.3, -1.2));
        let frame = Plane::filled(10, 10, 5.0);
        let d = flow_derivatives(&flat, &frame, &frame).unwrap();
        for p in [&d.u_x, &d.u_y, &d.v_x, &d.v_y, &d.i_t] {
            assert!(p.data.iter().all(|&v| v == 0.0));
        }

        let omega = 0.1;
        let (xc, yc) = (4.5, 4.5);
        let rot = FlowField::from_fn(10, 10, |x, y| (-omega * (y as f64 - yc), omega * (x as f64 - xc)));
        let d = flow_derivatives(&rot, &frame, &frame).unwrap();
        for y in 1..9 {
            for x in 1..9 {
                assert!((d.u_y.at(x, y) + omega).abs() < 1e-15);
                assert!((d.v_x.at(x, y) - omega).abs() < 1e-15);
                assert_eq!(d.u_x.at(x, y), 0.0);
            }
        }
    }
}
