//! Prototype filters and their matrix realizations.
//!
//! A prototype of overlap `O` has `O·N` real taps. It is split into `2O`
//! diagonal blocks of `N/2` taps each. The single-symbol matrix `G̃` (ON×N)
//! routes tap `m` to IFFT output `(m + δ) mod N`, where `δ = (−ON/2) mod N`
//! centres the window on IFFT index 0. For PHYDYAS `δ = 0`, which is exactly
//! the block layout `[G_0; G_1; ...]` with `G_p` in column half `p mod 2`.
//!
//! The frame matrix `G` (M×NK) stacks `K` copies of `G̃` at row offsets
//! `k·N/2`, giving `M = ON + (K−1)N/2`. It is stored implicitly; [`FrameFilter`]
//! applies `G` and `G^T` in `O(O·N·K)` and can materialize the dense matrix.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{AfbmError, CMat, Result};

/// PHYDYAS frequency-sampling coefficients for `O = 4`.
pub const PHYDYAS_H: [f64; 3] = [0.971960, 1.0 / SQRT_2, 0.235147];

/// Hermite-pulse expansion coefficients `(order, a_k)`.
pub const HERMITE_COEFFS: [(usize, f64); 6] = [
    (0, 1.412692577),
    (4, -3.0145e-3),
    (8, -8.8041e-6),
    (12, -2.2611e-9),
    (16, -4.4570e-15),
    (20, 1.8633e-16),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterKind {
    Phydyas,
    Hermite,
    Rectangular,
}

impl FilterKind {
    pub fn name(&self) -> &'static str {
        match self {
            FilterKind::Phydyas => "phydyas",
            FilterKind::Hermite => "hermite",
            FilterKind::Rectangular => "rectangular",
        }
    }
}

/// Real prototype of length `O·N`, normalized to `Σ g² = N`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeFilter {
    pub kind: FilterKind,
    pub n: usize,
    /// Twice the overlap factor, so that `2O` is an integer.
    pub overlap_x2: usize,
    pub coeffs: Vec<f64>,
    /// Column alignment offset `δ` of `G̃`.
    pub align: usize,
}

impl PrototypeFilter {
    fn from_taps(kind: FilterKind, n: usize, overlap_x2: usize, mut g: Vec<f64>) -> Self {
        let energy: f64 = g.iter().map(|v| v * v).sum();
        let a = (n as f64 / energy).sqrt();
        g.iter_mut().for_each(|v| *v *= a);
        let half_len = g.len() as f64 / 2.0;
        let align = ((-half_len).rem_euclid(n as f64)).round() as usize % n;
        Self { kind, n, overlap_x2, coeffs: g, align }
    }

    pub fn overlap(&self) -> f64 {
        self.overlap_x2 as f64 / 2.0
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Builds a filter of the given kind for DFT size `n`.
    pub fn of_kind(kind: FilterKind, n: usize) -> Result<Self> {
        match kind {
            FilterKind::Phydyas => phydyas_filter(n),
            FilterKind::Hermite => hermite_filter(n),
            FilterKind::Rectangular => rectangular_filter(n),
        }
    }
}

fn check_even(n: usize, min: usize) -> Result<()> {
    if n < min || n % 2 != 0 {
        return Err(AfbmError::InvalidDimension(format!(
            "filter DFT size N must be even and >= {min} (N = {n})"
        )));
    }
    Ok(())
}

/// PHYDYAS prototype with `O = 4`.
pub fn phydyas_filter(n: usize) -> Result<PrototypeFilter> {
    check_even(n, 4)?;
    let len = 4 * n;
    let g = (0..len)
        .map(|m| {
            let mut acc = 1.0;
            for (i, h) in PHYDYAS_H.iter().enumerate() {
                let k = (i + 1) as f64;
                let sign = if (i + 1) % 2 == 1 { -1.0 } else { 1.0 };
                acc += 2.0 * sign * h * (2.0 * PI * k * (m + 1) as f64 / len as f64).cos();
            }
            acc
        })
        .collect();
    Ok(PrototypeFilter::from_taps(FilterKind::Phydyas, n, 8, g))
}

/// Physicists' Hermite polynomial `H_k(x)`.
pub fn hermite_poly(k: usize, x: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, 2.0 * x);
    if k == 0 {
        return h0;
    }
    for j in 1..k {
        let h2 = 2.0 * x * h1 - 2.0 * j as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// Truncated Hermite prototype with `O = 1.5`.
pub fn hermite_filter(n: usize) -> Result<PrototypeFilter> {
    check_even(n, 2)?;
    let len = 3 * n / 2;
    let centre = (len as f64 - 1.0) / 2.0;
    let g = (0..len)
        .map(|m| {
            let t = (m as f64 - centre) / n as f64;
            let x = 2.0 * PI.sqrt() * t;
            let series: f64 = HERMITE_COEFFS.iter().map(|&(k, a)| a * hermite_poly(k, x)).sum();
            (-2.0 * PI * t * t).exp() * series
        })
        .collect();
    Ok(PrototypeFilter::from_taps(FilterKind::Hermite, n, 3, g))
}

/// All-ones prototype with `O = 1`.
pub fn rectangular_filter(n: usize) -> Result<PrototypeFilter> {
    check_even(n, 2)?;
    Ok(PrototypeFilter::from_taps(FilterKind::Rectangular, n, 2, vec![1.0; n]))
}

/// Diagonals of `G_p`, `p = 0..2O−1`.
pub fn filter_blocks(f: &PrototypeFilter) -> Vec<DVector<f64>> {
    let h = f.n / 2;
    f.coeffs.chunks(h).map(DVector::from_column_slice).collect()
}

/// Single-symbol matrix `G̃` (ON×N).
pub fn single_symbol_matrix(f: &PrototypeFilter) -> DMatrix<f64> {
    let mut gt = DMatrix::zeros(f.len(), f.n);
    for (m, g) in f.coeffs.iter().enumerate() {
        gt[(m, (m + f.align) % f.n)] = *g;
    }
    gt
}

/// Implicit frame filter matrix `G` (M×NK).
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFilter {
    pub n: usize,
    pub k: usize,
    pub hop: usize,
    pub m: usize,
    coeffs: Vec<f64>,
    align: usize,
}

/// Frame filter for `k` symbols spaced `N/2` samples apart.
pub fn frame_filter_matrix(f: &PrototypeFilter, k: usize) -> Result<FrameFilter> {
    if k == 0 {
        return Err(AfbmError::InvalidDimension("K must be >= 1".into()));
    }
    let hop = f.n / 2;
    Ok(FrameFilter {
        n: f.n,
        k,
        hop,
        m: f.len() + (k - 1) * hop,
        coeffs: f.coeffs.clone(),
        align: f.align,
    })
}

impl FrameFilter {
    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n * self.k
    }

    /// `G u` for `u` of length `NK`.
    pub fn apply(&self, u: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(u.len(), self.cols(), "G input length");
        let mut s = vec![Complex64::new(0.0, 0.0); self.m];
        for k in 0..self.k {
            let block = &u[k * self.n..(k + 1) * self.n];
            let off = k * self.hop;
            for (m, g) in self.coeffs.iter().enumerate() {
                s[off + m] += block[(m + self.align) % self.n] * *g;
            }
        }
        s
    }

    /// `G^T r` for `r` of length `M`.
    pub fn adjoint_apply(&self, r: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(r.len(), self.m, "G^T input length");
        let mut out = vec![Complex64::new(0.0, 0.0); self.cols()];
        for k in 0..self.k {
            let off = k * self.hop;
            let block = &mut out[k * self.n..(k + 1) * self.n];
            for (m, g) in self.coeffs.iter().enumerate() {
                block[(m + self.align) % self.n] += r[off + m] * *g;
            }
        }
        out
    }

    /// `G U` applied column by column.
    pub fn apply_matrix(&self, u: &CMat) -> CMat {
        assert_eq!(u.nrows(), self.cols(), "G input rows");
        let mut out = CMat::zeros(self.m, u.ncols());
        for c in 0..u.ncols() {
            let col = self.apply(u.column(c).as_slice());
            out.column_mut(c).copy_from_slice(&col);
        }
        out
    }

    /// `G^T Y` applied column by column.
    pub fn adjoint_apply_matrix(&self, y: &CMat) -> CMat {
        assert_eq!(y.nrows(), self.m, "G^T input rows");
        let mut out = CMat::zeros(self.cols(), y.ncols());
        for c in 0..y.ncols() {
            let col = self.adjoint_apply(y.column(c).as_slice());
            out.column_mut(c).copy_from_slice(&col);
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.m, self.cols());
        for k in 0..self.k {
            for (m, v) in self.coeffs.iter().enumerate() {
                g[(k * self.hop + m, k * self.n + (m + self.align) % self.n)] = *v;
            }
        }
        g
    }
}
