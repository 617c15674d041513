//! The kernel bank: Gaussian, histogram intersection and the two
//! multi-channel intersection variants, Gram matrices and convex
//! combination.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Gaussian,
    HInt,
    DcInt,
    JplInt,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Gaussian => "gaussian",
            KernelKind::HInt => "h_int",
            KernelKind::DcInt => "dc_int",
            KernelKind::JplInt => "jpl_int",
        }
    }

    pub fn is_intersection(self) -> bool {
        self != KernelKind::Gaussian
    }

    pub fn is_multichannel(self) -> bool {
        matches!(self, KernelKind::DcInt | KernelKind::JplInt)
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(KernelKind::Gaussian),
            "h_int" => Ok(KernelKind::HInt),
            "dc_int" => Ok(KernelKind::DcInt),
            "jpl_int" => Ok(KernelKind::JplInt),
            other => Err(Error::Config(format!("unknown kernel {other:?}"))),
        }
    }
}

/// A contiguous block of the histogram vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Channel {
    pub offset: usize,
    pub len: usize,
}

impl Channel {
    fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Gaussian bandwidth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Per-channel exponents of `jpl_int`; defaults to `1 / C` each.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<f64>>,
    /// Blocks of the input read by this kernel.
    pub channels: Vec<Channel>,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, channels: Vec<Channel>) -> Self {
        KernelSpec {
            kind,
            sigma: None,
            betas: None,
            channels,
        }
    }

    pub fn gaussian(sigma: f64, channels: Vec<Channel>) -> Self {
        KernelSpec {
            sigma: Some(sigma),
            ..KernelSpec::new(KernelKind::Gaussian, channels)
        }
    }

    /// A single channel spanning a whole vector of length `dim`.
    pub fn whole(dim: usize) -> Vec<Channel> {
        vec![Channel { offset: 0, len: dim }]
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        ensure!(!self.channels.is_empty(), "{} kernel reads no channels", self.kind);
        let mut sorted = self.channels.clone();
        sorted.sort_by_key(|c| c.offset);
        let mut end = 0;
        for c in &sorted {
            ensure!(c.len > 0, "empty kernel channel");
            ensure!(c.offset >= end, "kernel channels overlap");
            end = c.offset + c.len;
        }
        ensure!(end <= dim, "kernel channel ends at {end} but vectors have length {dim}");
        if self.kind == KernelKind::Gaussian {
            let s = self.sigma.ok_or_else(|| Error::validation("gaussian kernel needs sigma"))?;
            ensure!(s > 0.0 && s.is_finite(), "gaussian sigma must be positive, got {s}");
        }
        if let Some(b) = &self.betas {
            ensure!(b.len() == self.channels.len(), "one exponent per channel is required");
            ensure!(b.iter().all(|&v| v > 0.0 && v.is_finite()), "channel exponents must be positive");
        }
        Ok(())
    }

    fn beta(&self, c: usize) -> f64 {
        match &self.betas {
            Some(b) => b[c],
            None => 1.0 / self.channels.len() as f64,
        }
    }
}

fn intersection(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a.min(*b)).sum()
}

/// Kernel value for one pair of vectors.
///
/// `dc_int` averages the per-channel intersections; `jpl_int` is
/// `prod_c exp(-beta_c * (1 - intersection_c))`.
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    ensure!(x.len() == y.len(), "kernel arguments differ in length ({} vs {})", x.len(), y.len());
    spec.validate(x.len())?;
    if spec.kind.is_intersection() {
        for c in &spec.channels {
            ensure!(
                x[c.range()].iter().chain(&y[c.range()]).all(|&v| v >= 0.0),
                "intersection kernels need nonnegative histograms"
            );
        }
    }
    Ok(eval_unchecked(spec, x, y))
}

fn eval_unchecked(spec: &KernelSpec, x: &[f64], y: &[f64]) -> f64 {
    match spec.kind {
        KernelKind::Gaussian => {
            let sigma = spec.sigma.expect("validated");
            let d2: f64 = spec
                .channels
                .iter()
                .flat_map(|c| x[c.range()].iter().zip(&y[c.range()]))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (-d2 / (2.0 * sigma * sigma)).exp()
        }
        KernelKind::HInt => spec
            .channels
            .iter()
            .map(|c| intersection(&x[c.range()], &y[c.range()]))
            .sum(),
        KernelKind::DcInt => {
            spec.channels
                .iter()
                .map(|c| intersection(&x[c.range()], &y[c.range()]))
                .sum::<f64>()
                / spec.channels.len() as f64
        }
        KernelKind::JplInt => {
            let exponent: f64 = spec
                .channels
                .iter()
                .enumerate()
                .map(|(i, c)| spec.beta(i) * (1.0 - intersection(&x[c.range()], &y[c.range()])))
                .sum();
            (-exponent).exp()
        }
    }
}

fn check_data(data: &[Vec<f64>], spec: &KernelSpec) -> Result<()> {
    let dim = data.first().map_or(0, Vec::len);
    ensure!(data.iter().all(|v| v.len() == dim), "vectors of unequal length");
    spec.validate(dim)?;
    if spec.kind.is_intersection() {
        for v in data {
            for c in &spec.channels {
                ensure!(
                    v[c.range()].iter().all(|&e| e >= 0.0),
                    "intersection kernels need nonnegative histograms"
                );
            }
        }
    }
    Ok(())
}

/// FNV-1a over the bit patterns of the data.
pub fn fingerprint(data: &[Vec<f64>]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |bytes: &[u8]| {
        for b in bytes {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    feed(&(data.len() as u64).to_le_bytes());
    for v in data {
        feed(&(v.len() as u64).to_le_bytes());
        for x in v {
            feed(&x.to_bits().to_le_bytes());
        }
    }
    h
}

#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    pub matrix: Matrix,
    pub spec: KernelSpec,
    pub fingerprint: u64,
}

impl GramMatrix {
    pub fn size(&self) -> usize {
        self.matrix.rows()
    }
}

/// `G[i][j] = k(x_i, x_j)`; only the upper triangle is evaluated.
pub fn gram_matrix(data: &[Vec<f64>], spec: &KernelSpec) -> Result<GramMatrix> {
    ensure!(!data.is_empty(), "Gram matrix of an empty dataset");
    check_data(data, spec)?;
    let n = data.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| eval_unchecked(spec, &data[i], &data[j])).collect())
        .collect();
    let mut m = Matrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            m[(i, i + k)] = v;
            m[(i + k, i)] = v;
        }
    }
    Ok(GramMatrix {
        matrix: m,
        spec: spec.clone(),
        fingerprint: fingerprint(data),
    })
}

/// Kernel values between every query and every training vector, one row per
/// query.
pub fn cross_kernel(queries: &[Vec<f64>], train: &[Vec<f64>], spec: &KernelSpec) -> Result<Matrix> {
    check_data(train, spec)?;
    if !queries.is_empty() {
        check_data(queries, spec)?;
        ensure!(queries[0].len() == train.first().map_or(0, Vec::len), "query and training vectors differ in length");
    }
    let rows: Vec<f64> = queries
        .par_iter()
        .flat_map_iter(|q| train.iter().map(move |t| eval_unchecked(spec, q, t)))
        .collect();
    Matrix::from_vec(queries.len(), train.len(), rows)
}

/// Median Euclidean distance between distinct pairs over the given channels;
/// 1.0 when every pair coincides.
pub fn median_pairwise_distance(data: &[Vec<f64>], channels: &[Channel]) -> f64 {
    let mut d = Vec::new();
    for i in 0..data.len() {
        for j in i + 1..data.len() {
            let d2: f64 = channels
                .iter()
                .flat_map(|c| data[i][c.range()].iter().zip(&data[j][c.range()]))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d.push(d2.sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let m = if d.len() % 2 == 0 { 0.5 * (d[mid - 1] + d[mid]) } else { d[mid] };
    if m > 0.0 { m } else { 1.0 }
}

/// Base kernels over one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelBank {
    grams: Vec<GramMatrix>,
}

impl KernelBank {
    pub fn new(grams: Vec<GramMatrix>) -> Result<Self> {
        ensure!(!grams.is_empty(), "a kernel bank needs at least one kernel");
        let (n, fp) = (grams[0].size(), grams[0].fingerprint);
        ensure!(
            grams.iter().all(|g| g.size() == n && g.fingerprint == fp),
            "kernel bank matrices must come from the same dataset"
        );
        Ok(KernelBank { grams })
    }

    pub fn build(data: &[Vec<f64>], specs: &[KernelSpec]) -> Result<Self> {
        KernelBank::new(specs.iter().map(|s| gram_matrix(data, s)).collect::<Result<_>>()?)
    }

    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    pub fn size(&self) -> usize {
        self.grams[0].size()
    }

    pub fn grams(&self) -> &[GramMatrix] {
        &self.grams
    }

    pub fn gram(&self, m: usize) -> &Matrix {
        &self.grams[m].matrix
    }

    pub fn specs(&self) -> Vec<KernelSpec> {
        self.grams.iter().map(|g| g.spec.clone()).collect()
    }

    /// Rescales each kernel to trace `L`; returns the bank and the factors.
    pub fn trace_normalized(&self) -> (KernelBank, Vec<f64>) {
        let n = self.size() as f64;
        let mut factors = Vec::with_capacity(self.len());
        let grams = self
            .grams
            .iter()
            .map(|g| {
                let tr = g.matrix.trace();
                let f = if tr > 0.0 { n / tr } else { 1.0 };
                factors.push(f);
                GramMatrix {
                    matrix: g.matrix.scale(f),
                    ..g.clone()
                }
            })
            .collect();
        (KernelBank { grams }, factors)
    }
}

pub fn check_simplex(c: &[f64], m: usize) -> Result<()> {
    ensure!(c.len() == m, "{} kernel weights for {m} kernels", c.len());
    ensure!(c.iter().all(|&w| w >= 0.0 && w.is_finite()), "kernel weights must be nonnegative");
    let s: f64 = c.iter().sum();
    ensure!((s - 1.0).abs() <= 1e-9, "kernel weights sum to {s}, not 1");
    Ok(())
}

/// `sum_m c_m G_m` for weights on the simplex.
pub fn combine(bank: &KernelBank, c: &[f64]) -> Result<Matrix> {
    check_simplex(c, bank.len())?;
    Ok(combine_unchecked(bank, c))
}

pub(crate) fn combine_unchecked(bank: &KernelBank, c: &[f64]) -> Matrix {
    let n = bank.size();
    let mut out = Matrix::zeros(n, n);
    for (g, &w) in bank.grams.iter().zip(c) {
        if w == 0.0 {
            continue;
        }
        for i in 0..n {
            for (o, v) in out.row_mut(i).iter_mut().zip(g.matrix.row(i)) {
                *o += w * v;
            }
        }
    }
    out
}
