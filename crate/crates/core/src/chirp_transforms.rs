//! Unitary and semi-unitary transforms.
//!
//! Conventions: the forward DFT uses `exp(-j2π ab/n)` with unitary `1/√n`
//! scaling, and a chirp diagonal of rate `c` has entries `exp(-j2π c m²)`.
//! The DAFT is `W = Λ_{c1} F Λ_{c2}`.
//!
//! Every constructor builds an explicit dense matrix. [`daft_apply`] and
//! [`idaft_apply`] are FFT-based fast paths that must agree with the dense
//! matrices.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::{AfbmError, CMat, CVec, Result};

/// Chirp rates for one DAFT of size `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChirpParams {
    pub c1: f64,
    pub c2: f64,
    pub n: usize,
}

impl ChirpParams {
    pub fn new(c1: f64, c2: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(AfbmError::InvalidDimension("transform size must be >= 1".into()));
        }
        if !c1.is_finite() || !c2.is_finite() {
            return Err(AfbmError::InvalidParameter(format!(
                "chirp rates must be finite (c1 = {c1}, c2 = {c2})"
            )));
        }
        Ok(Self { c1, c2, n })
    }
}

/// Chirp rates of the L-point DAFT inside the compensation stage and of the
/// P-point spreading DAFT.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChirpSet {
    pub c1_l: f64,
    pub c2_l: f64,
    pub c1_p: f64,
    pub c2_p: f64,
}

impl ChirpSet {
    pub fn zero() -> Self {
        Self { c1_l: 0.0, c2_l: 0.0, c1_p: 0.0, c2_p: 0.0 }
    }

    /// `c1` shared by both transforms and the low-PAPR `c2` family
    /// `c2_L = 1/(πL²)`, `c2_P = 1/(πP²)`.
    pub fn low_papr(c1: f64, l: usize, p: usize) -> Self {
        Self {
            c1_l: c1,
            c2_l: 1.0 / (PI * (l * l) as f64),
            c1_p: c1,
            c2_p: 1.0 / (PI * (p * p) as f64),
        }
    }
}

/// Normalized `n`-point DFT matrix.
pub fn dft_matrix(n: usize) -> Result<CMat> {
    if n == 0 {
        return Err(AfbmError::InvalidDimension("DFT size must be >= 1".into()));
    }
    let scale = 1.0 / (n as f64).sqrt();
    Ok(DMatrix::from_fn(n, n, |a, b| {
        // reduce a*b mod n first so large sizes keep full phase precision
        let k = (a * b) % n;
        Complex64::from_polar(scale, -2.0 * PI * k as f64 / n as f64)
    }))
}

/// Diagonal entries `exp(-j2π c m²)`, `m = 0..n-1`.
pub fn chirp_diag(c: f64, n: usize) -> Result<CVec> {
    if n == 0 {
        return Err(AfbmError::InvalidDimension("chirp length must be >= 1".into()));
    }
    if !c.is_finite() {
        return Err(AfbmError::InvalidParameter(format!("chirp rate {c} is not finite")));
    }
    Ok(DVector::from_fn(n, |m, _| chirp_sample(c, m)))
}

#[inline]
pub(crate) fn chirp_sample(c: f64, m: usize) -> Complex64 {
    let m2 = (m * m) as f64;
    Complex64::from_polar(1.0, -2.0 * PI * c * m2)
}

/// Dense DAFT `W = Λ_{c1} F Λ_{c2}`.
pub fn daft_matrix(p: &ChirpParams) -> Result<CMat> {
    let f = dft_matrix(p.n)?;
    let l1 = chirp_diag(p.c1, p.n)?;
    let l2 = chirp_diag(p.c2, p.n)?;
    Ok(DMatrix::from_fn(p.n, p.n, |a, b| l1[a] * f[(a, b)] * l2[b]))
}

/// First `l` rows of the `p.n`-point DAFT.
pub fn pruned_daft(l: usize, p: &ChirpParams) -> Result<CMat> {
    if l == 0 || l > p.n {
        return Err(AfbmError::InvalidDimension(format!(
            "pruned DAFT needs 1 <= L <= P (L = {l}, P = {})",
            p.n
        )));
    }
    let w = daft_matrix(p)?;
    Ok(w.rows(0, l).into_owned())
}

/// Frequency-domain zero-padding selector `T` (N×P).
pub fn zero_pad_selector(n: usize, p: usize) -> Result<DMatrix<f64>> {
    if p == 0 || p > n || p % 2 != 0 {
        return Err(AfbmError::InvalidDimension(format!(
            "zero-pad selector needs even P with 0 < P <= N (P = {p}, N = {n})"
        )));
    }
    let h = p / 2;
    let mut t = DMatrix::zeros(n, p);
    for i in 0..h {
        t[(i, i)] = 1.0;
        t[(n - h + i, p - h + i)] = 1.0;
    }
    Ok(t)
}

/// `Q_P = F_N^H T F_P W̃_P^H` (N×L).
pub fn qp_block(n: usize, p: usize, l: usize, chirps: &ChirpSet) -> Result<CMat> {
    let cp = ChirpParams::new(chirps.c1_p, chirps.c2_p, p)?;
    let wt = pruned_daft(l, &cp)?;
    let t = zero_pad_selector(n, p)?;
    let fp = dft_matrix(p)?;
    let fn_h = dft_matrix(n)?.adjoint();
    let inner = &fp * wt.adjoint();
    // T only copies rows, so apply it as an index map
    let mut padded = CMat::zeros(n, l);
    let h = p / 2;
    for i in 0..h {
        padded.set_row(i, &inner.row(i));
        padded.set_row(n - h + i, &inner.row(p - h + i));
    }
    debug_assert_eq!(t.nrows(), n);
    Ok(fn_h * padded)
}

/// `Q = I_K ⊗ Q_P`.
pub fn q_frame(k: usize, qp: &CMat) -> Result<CMat> {
    if k == 0 {
        return Err(AfbmError::InvalidDimension("K must be >= 1".into()));
    }
    let (r, c) = qp.shape();
    let mut q = CMat::zeros(r * k, c * k);
    for b in 0..k {
        q.view_mut((b * r, b * c), (r, c)).copy_from(qp);
    }
    Ok(q)
}

/// Applies `W` to `x` through one FFT.
pub fn daft_apply(x: &[Complex64], c1: f64, c2: f64) -> Vec<Complex64> {
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().enumerate().map(|(m, v)| v * chirp_sample(c2, m)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let scale = 1.0 / (n as f64).sqrt();
    buf.iter().enumerate().map(|(m, v)| v * chirp_sample(c1, m) * scale).collect()
}

/// Applies `W^H` to `x` through one inverse FFT.
pub fn idaft_apply(x: &[Complex64], c1: f64, c2: f64) -> Vec<Complex64> {
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().enumerate().map(|(m, v)| v * chirp_sample(c1, m).conj()).collect();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / (n as f64).sqrt();
    buf.iter().enumerate().map(|(m, v)| v * chirp_sample(c2, m).conj() * scale).collect()
}

/// Max absolute deviation of `a^H a` from the identity.
pub fn unitarity_error(a: &CMat) -> f64 {
    let g = a.adjoint() * a;
    let mut worst: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}
