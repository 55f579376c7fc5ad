//! Doubly-dispersive channel `Ȟ = Σ_r h_r Φ_r Z^{f_r} Π^{ℓ_r}`.
//!
//! `Π` is the cyclic delay `(Πx)[m] = x[(m−1) mod M]`. The Doppler factor
//! multiplies sample `m` by `exp(−j2π f m / N)`, where `f` is the normalized
//! digital Doppler per `N` samples. `Φ_r` puts `exp(−j2π φ(ℓ−i))` on entry
//! `i < ℓ` with `φ(m) = c1 (M² − 2Mm)`.
//!
//! The dense `M×M` realization exists for inspection and tests. Modems use
//! [`DDChannel::apply`], which costs `O(RM)`.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{AfbmError, CMat, CVec, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    pub h: Complex64,
    pub ell: usize,
    pub f: f64,
}

/// Realized channel.
#[derive(Debug, Clone, PartialEq)]
pub struct DDChannel {
    pub paths: Vec<PathParams>,
    pub m: usize,
    pub c1: f64,
    pub doppler_norm: f64,
    /// Per path, the combined diagonal `Φ_r Z^{f_r}`.
    diags: Vec<Vec<Complex64>>,
}

/// Cyclic delay `Π^ℓ` as a dense permutation.
pub fn shift_matrix(m: usize, ell: usize) -> Result<CMat> {
    if ell >= m {
        return Err(AfbmError::DelayOutOfRange { ell, m });
    }
    let mut p = CMat::zeros(m, m);
    for i in 0..m {
        p[(i, (i + m - ell) % m)] = Complex64::new(1.0, 0.0);
    }
    Ok(p)
}

/// Diagonal of `Z^f`, `exp(−j2π f m / norm)`.
pub fn roots_matrix(m: usize, f: f64, norm: f64) -> CVec {
    DVector::from_fn(m, |i, _| Complex64::from_polar(1.0, -2.0 * PI * f * i as f64 / norm))
}

/// Diagonal of the chirp-prefix phase `Φ`.
pub fn phase_matrix(ell: usize, m: usize, c1: f64) -> Result<CVec> {
    if ell >= m {
        return Err(AfbmError::DelayOutOfRange { ell, m });
    }
    let mf = m as f64;
    Ok(DVector::from_fn(m, |i, _| {
        if i < ell {
            let mm = (ell - i) as f64;
            Complex64::from_polar(1.0, -2.0 * PI * c1 * (mf * mf - 2.0 * mf * mm))
        } else {
            Complex64::new(1.0, 0.0)
        }
    }))
}

pub fn build_channel(paths: &[PathParams], m: usize, c1: f64, doppler_norm: f64) -> Result<DDChannel> {
    let mut diags = Vec::with_capacity(paths.len());
    for p in paths {
        if !(p.h.re.is_finite() && p.h.im.is_finite() && p.f.is_finite()) {
            return Err(AfbmError::InvalidParameter("path gain and Doppler must be finite".into()));
        }
        let phi = phase_matrix(p.ell, m, c1)?;
        let z = roots_matrix(m, p.f, doppler_norm);
        diags.push(phi.iter().zip(z.iter()).map(|(a, b)| a * b).collect());
    }
    Ok(DDChannel { paths: paths.to_vec(), m, c1, doppler_norm, diags })
}

impl DDChannel {
    /// `Ȟ x`.
    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.m {
            return Err(AfbmError::InvalidDimension(format!(
                "channel input length {} != M = {}",
                x.len(),
                self.m
            )));
        }
        let m = self.m;
        let mut y = vec![Complex64::new(0.0, 0.0); m];
        for (p, d) in self.paths.iter().zip(&self.diags) {
            for i in 0..m {
                y[i] += p.h * d[i] * x[(i + m - p.ell) % m];
            }
        }
        Ok(y)
    }

    pub fn apply_vec(&self, x: &CVec) -> Result<CVec> {
        Ok(CVec::from_vec(self.apply(x.as_slice())?))
    }

    /// `Ȟ X` column by column.
    pub fn apply_matrix(&self, x: &CMat) -> Result<CMat> {
        let mut out = CMat::zeros(self.m, x.ncols());
        for c in 0..x.ncols() {
            let y = self.apply(x.column(c).as_slice())?;
            out.column_mut(c).copy_from_slice(&y);
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> CMat {
        let m = self.m;
        let mut h = CMat::zeros(m, m);
        for (p, d) in self.paths.iter().zip(&self.diags) {
            for i in 0..m {
                h[(i, (i + m - p.ell) % m)] += p.h * d[i];
            }
        }
        h
    }

    pub fn total_power(&self) -> f64 {
        self.paths.iter().map(|p| p.h.norm_sqr()).sum()
    }
}

/// Delay/Doppler budget for the orthogonality condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelBudget {
    pub ell_max: usize,
    pub f_max: f64,
    pub xi: usize,
    pub p_daft: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetReport {
    pub ok: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub c1: f64,
}

/// Checks `2(f_max+ξ)(ℓ_max+1) + ℓ_max <= P` and recommends
/// `c1 = (2(⌈f_max⌉+ξ)+1)/(2P)`.
pub fn validate_budget(b: &ChannelBudget) -> BudgetReport {
    let lhs = 2.0 * (b.f_max + b.xi as f64) * (b.ell_max as f64 + 1.0) + b.ell_max as f64;
    let rhs = b.p_daft as f64;
    BudgetReport { ok: lhs <= rhs, lhs, rhs, c1: recommend_c1(b.f_max, b.xi, b.p_daft) }
}

pub fn recommend_c1(f_max: f64, xi: usize, p: usize) -> f64 {
    (2.0 * (f_max.ceil() + xi as f64) + 1.0) / (2.0 * p as f64)
}

/// `R` paths with distinct delays on `[0, ℓ_max]`, uniform Dopplers on
/// `[−f_max, f_max]` and `CN(0, 1/R)` gains.
pub fn random_paths<R: Rng + ?Sized>(r: usize, ell_max: usize, f_max: f64, rng: &mut R) -> Result<Vec<PathParams>> {
    if r > ell_max + 1 {
        return Err(AfbmError::InvalidParameter(format!(
            "cannot draw {r} distinct delays from [0, {ell_max}]"
        )));
    }
    let delays = sample(rng, ell_max + 1, r).into_vec();
    let scale = (0.5 / r as f64).sqrt();
    Ok(delays
        .into_iter()
        .map(|ell| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            let f = if f_max > 0.0 { rng.random_range(-f_max..=f_max) } else { 0.0 };
            PathParams { h: Complex64::new(re * scale, im * scale), ell, f }
        })
        .collect())
}

pub fn random_channel<R: Rng + ?Sized>(
    r: usize,
    budget: &ChannelBudget,
    m: usize,
    c1: f64,
    doppler_norm: f64,
    rng: &mut R,
) -> Result<DDChannel> {
    if budget.ell_max >= m {
        return Err(AfbmError::DelayOutOfRange { ell: budget.ell_max, m });
    }
    let paths = random_paths(r, budget.ell_max, budget.f_max, rng)?;
    build_channel(&paths, m, c1, doppler_norm)
}

/// Circular complex Gaussian samples of unit variance.
pub fn complex_gaussian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVec {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CVec::from_fn(n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * s, im * s)
    })
}

/// `s + w`, `w ~ CN(0, σ² I)`.
pub fn add_noise<R: Rng + ?Sized>(s: &CVec, sigma2: f64, rng: &mut R) -> Result<CVec> {
    if !(sigma2 >= 0.0) {
        return Err(AfbmError::InvalidParameter(format!("noise variance must be >= 0 (got {sigma2})")));
    }
    if sigma2 == 0.0 {
        return Ok(s.clone());
    }
    Ok(s + complex_gaussian(s.len(), rng) * Complex64::new(sigma2.sqrt(), 0.0))
}
