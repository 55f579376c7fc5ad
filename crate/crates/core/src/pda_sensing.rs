//! PDA-EM sparse delay-Doppler estimation.
//!
//! The received front-end vector is modelled as `r̄ = E h + w` where each
//! dictionary column is the pilot frame pushed through one unit-gain grid
//! path and the receiver front end. `h` has a Bernoulli-Gaussian prior whose
//! rate `ρ` and variance `σ̄` are re-estimated by EM every iteration; the
//! prior mean is pinned to zero.
//!
//! One covariance `Σ = E diag(σ̂²) E^H + N_0 I` is factored per iteration.
//! By the matrix-inversion lemma the per-atom extrinsic belief follows from
//! it directly: `h̃_m = e_m^H Σ^{-1} r̃_m / η_m` and
//! `σ̃²_m = (1 − η_m σ̂²_m)/η_m` with `η_m = e_m^H Σ^{-1} e_m`.

use num_complex::Complex64;

use crate::afbm_modem::Modem;
use crate::dd_channel::{build_channel, PathParams};
use crate::{AfbmError, CMat, CVec, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const RHO_CLIP: f64 = 1e-6;

/// Integer delays (samples) by real normalized Dopplers.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayDopplerGrid {
    pub delays: Vec<usize>,
    pub dopplers: Vec<f64>,
}

impl DelayDopplerGrid {
    /// `k_tau` evenly spaced integer delays on `[0, ell_max]` and `d_nu`
    /// evenly spaced Dopplers on `[−f_max, f_max]`.
    pub fn uniform(k_tau: usize, ell_max: usize, d_nu: usize, f_max: f64) -> Result<Self> {
        if k_tau == 0 || d_nu == 0 {
            return Err(AfbmError::InvalidDimension("grid needs at least one bin per axis".into()));
        }
        let delays = if k_tau == 1 {
            vec![0]
        } else {
            if ell_max % (k_tau - 1) != 0 {
                return Err(AfbmError::InvalidDimension(format!(
                    "{k_tau} integer delay bins cannot evenly span [0, {ell_max}]"
                )));
            }
            let step = ell_max / (k_tau - 1);
            (0..k_tau).map(|i| i * step).collect()
        };
        let dopplers = if d_nu == 1 {
            vec![0.0]
        } else {
            (0..d_nu).map(|i| -f_max + 2.0 * f_max * i as f64 / (d_nu - 1) as f64).collect()
        };
        Ok(Self { delays, dopplers })
    }

    pub fn k_tau(&self) -> usize {
        self.delays.len()
    }

    pub fn d_nu(&self) -> usize {
        self.dopplers.len()
    }

    pub fn size(&self) -> usize {
        self.k_tau() * self.d_nu()
    }

    /// Column index of atom `(k, d)`, delay-major.
    pub fn index(&self, k: usize, d: usize) -> usize {
        k * self.d_nu() + d
    }

    pub fn atom(&self, col: usize) -> (usize, usize) {
        (col / self.d_nu(), col % self.d_nu())
    }
}

#[derive(Debug, Clone)]
pub struct SensingDictionary {
    pub e: CMat,
    pub grid: DelayDopplerGrid,
    pub pilot: CVec,
}

pub fn build_dictionary(pilot: &CVec, grid: &DelayDopplerGrid, modem: &Modem) -> Result<SensingDictionary> {
    let s = modem.modulate(pilot)?;
    let m = modem.frame_len();
    let mut e = CMat::zeros(modem.obs_len(), grid.size());
    for (k, &ell) in grid.delays.iter().enumerate() {
        for (d, &f) in grid.dopplers.iter().enumerate() {
            let path = PathParams { h: Complex64::new(1.0, 0.0), ell, f };
            let ch = build_channel(&[path], m, modem.channel_c1(), modem.doppler_norm())?;
            let col = modem.front_end(&ch.apply_vec(&s)?)?;
            if col.norm() < 1e-12 {
                return Err(AfbmError::ZeroAtom { k, d });
            }
            e.column_mut(grid.index(k, d)).copy_from(&col);
        }
    }
    Ok(SensingDictionary { e, grid: grid.clone(), pilot: pilot.clone() })
}

/// Bernoulli-Gaussian hyperparameters `θ = [ρ, h̄, σ̄]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BGParams {
    pub rho: f64,
    pub h_bar: Complex64,
    pub sigma_bar: f64,
}

/// EM update of `θ` from the per-atom posteriors.
pub fn em_update(rho_hat: &[f64], h_hat: &[Complex64], var_hat: &[f64], pinned_mean: bool) -> Result<BGParams> {
    let g = rho_hat.len();
    if g == 0 || h_hat.len() != g || var_hat.len() != g {
        return Err(AfbmError::InvalidDimension("EM inputs must be non-empty and of equal length".into()));
    }
    let sum_rho: f64 = rho_hat.iter().sum();
    let rho_raw = sum_rho / g as f64;
    let denom = (g as f64 * rho_raw).max(f64::MIN_POSITIVE);
    let h_bar = if pinned_mean {
        Complex64::new(0.0, 0.0)
    } else {
        rho_hat.iter().zip(h_hat).map(|(r, h)| h * *r).sum::<Complex64>() / denom
    };
    let sigma_bar = rho_hat
        .iter()
        .zip(h_hat)
        .zip(var_hat)
        .map(|((r, h), v)| r * ((h - h_bar).norm_sqr() + v))
        .sum::<f64>()
        / denom;
    Ok(BGParams { rho: rho_raw.clamp(RHO_CLIP, 1.0 - RHO_CLIP), h_bar, sigma_bar: sigma_bar.max(1e-12) })
}

#[derive(Debug, Clone)]
pub struct PdaOutput {
    pub h_hat: CVec,
    pub rho_hat: Vec<f64>,
    pub var_hat: Vec<f64>,
    pub params: BGParams,
    /// Iterations where `Σ` needed diagonal jitter to factor.
    pub jitter_events: usize,
    /// Extrinsic variances clamped because `η σ̂² > 1`.
    pub var_clamps: usize,
    pub rho_trace: Vec<f64>,
}

pub fn pda_estimate(
    r_bar: &CVec,
    dict: &SensingDictionary,
    n0: f64,
    num_targets: usize,
    i_max: usize,
    beta_h: f64,
) -> Result<PdaOutput> {
    let e = &dict.e;
    let (nn, g) = e.shape();
    if r_bar.len() != nn {
        return Err(AfbmError::InvalidDimension(format!("observation length {} != {nn}", r_bar.len())));
    }
    if !(n0 > 0.0) {
        return Err(AfbmError::InvalidParameter(format!("N_0 must be positive (got {n0})")));
    }
    if num_targets == 0 || num_targets > g {
        return Err(AfbmError::InvalidParameter(format!("num_targets must lie in [1, {g}]")));
    }
    let floor = 1e-12;
    let mut rho = (num_targets as f64 / g as f64).clamp(RHO_CLIP, 1.0 - RHO_CLIP);
    let mut sigma_bar = 1.0 / num_targets as f64;
    let mut h_hat = CVec::zeros(g);
    let mut var_hat = vec![1.0 / g as f64; g];
    let mut rho_hat = vec![rho; g];
    let mut jitter_events = 0;
    let mut var_clamps = 0;
    let mut rho_trace = Vec::with_capacity(i_max);
    let h_bar = Complex64::new(0.0, 0.0);

    for _ in 0..i_max {
        let mut ev = e.clone();
        for (c, v) in var_hat.iter().enumerate() {
            ev.column_mut(c).scale_mut(*v);
        }
        let mut sigma = ev * e.adjoint();
        for i in 0..nn {
            sigma[(i, i)] += Complex64::new(n0, 0.0);
        }
        let chol = match sigma.clone().cholesky() {
            Some(c) => c,
            None => {
                jitter_events += 1;
                for i in 0..nn {
                    sigma[(i, i)] += Complex64::new(n0 * 1e-6, 0.0);
                }
                sigma
                    .cholesky()
                    .ok_or_else(|| AfbmError::Numerical("PDA covariance is not positive definite".into()))?
            }
        };
        let si_e = chol.solve(e);
        let res = r_bar - e * &h_hat;
        let proj = si_e.adjoint() * &res;

        let mut h_post = vec![Complex64::new(0.0, 0.0); g];
        let mut v_post = vec![0.0; g];
        for m in 0..g {
            let eta = e.column(m).dotc(&si_e.column(m)).re.max(floor);
            let ht = proj[m] / eta + h_hat[m];
            let mut vt = (1.0 - eta * var_hat[m]) / eta;
            if vt < floor {
                var_clamps += 1;
                vt = floor;
            }
            let a2 = (ht - h_bar).norm_sqr();
            let log_odds = ((1.0 - rho) / rho).ln() + ((vt + sigma_bar) / vt).ln() - ht.norm_sqr() / vt
                + a2 / (vt + sigma_bar);
            let rh = 1.0 / (1.0 + log_odds.clamp(-700.0, 700.0).exp());
            let hp = (ht * sigma_bar + h_bar * vt) / (vt + sigma_bar);
            let vp = sigma_bar * vt / (vt + sigma_bar);
            rho_hat[m] = rh;
            h_post[m] = hp;
            v_post[m] = vp;
        }
        for m in 0..g {
            let rh = rho_hat[m];
            let prev_h = h_hat[m];
            h_hat[m] = h_post[m] * (beta_h * rh) + prev_h * (1.0 - beta_h);
            var_hat[m] = beta_h * ((1.0 - rh) * rh * h_post[m].norm_sqr() + rh * v_post[m])
                + (1.0 - beta_h) * var_hat[m];
        }
        let theta = em_update(&rho_hat, &h_post, &v_post, true)?;
        rho = theta.rho;
        sigma_bar = theta.sigma_bar;
        rho_trace.push(rho);
    }
    Ok(PdaOutput {
        h_hat,
        rho_hat,
        var_hat,
        params: BGParams { rho, h_bar, sigma_bar },
        jitter_events,
        var_clamps,
        rho_trace,
    })
}

/// Carrier frequency, sample rate and filter-bank size used for unit
/// conversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioParams {
    pub fc_hz: f64,
    pub fs_hz: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetEstimate {
    pub atom_k: usize,
    pub atom_d: usize,
    pub ell: f64,
    pub f: f64,
    pub tau_s: f64,
    pub range_m: f64,
    pub nu_hz: f64,
    pub velocity_mps: f64,
    pub gain: Complex64,
    pub rho: f64,
}

/// Monostatic conversion of a delay (samples) and normalized Doppler.
pub fn to_physical(ell: f64, f: f64, radio: &RadioParams) -> (f64, f64, f64, f64) {
    let tau = ell / radio.fs_hz;
    let nu = f * radio.fs_hz / radio.n as f64;
    (tau, SPEED_OF_LIGHT * tau / 2.0, nu, nu * SPEED_OF_LIGHT / (2.0 * radio.fc_hz))
}

/// The `num_targets` atoms with largest `ρ̂|ĥ|²`, ties to the lower delay
/// then lower Doppler index.
pub fn extract_targets(
    h_hat: &CVec,
    rho_hat: &[f64],
    grid: &DelayDopplerGrid,
    num_targets: usize,
    radio: &RadioParams,
) -> Vec<TargetEstimate> {
    let mut order: Vec<usize> = (0..grid.size()).collect();
    let score = |i: usize| rho_hat[i] * h_hat[i].norm_sqr();
    order.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(a.cmp(&b)));
    order
        .into_iter()
        .take(num_targets)
        .map(|col| {
            let (k, d) = grid.atom(col);
            let ell = grid.delays[k] as f64;
            let f = grid.dopplers[d];
            let (tau_s, range_m, nu_hz, velocity_mps) = to_physical(ell, f, radio);
            TargetEstimate { atom_k: k, atom_d: d, ell, f, tau_s, range_m, nu_hz, velocity_mps, gain: h_hat[col], rho: rho_hat[col] }
        })
        .collect()
}
