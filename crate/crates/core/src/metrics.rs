//! Evaluation metrics: PAPR and its CCDF, transmit power profile and
//! periodogram PSD, discrete ambiguity function, QPSK bit errors and
//! range/velocity RMSE.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;

use crate::afbm_modem::{AfbmModem, Modem};
use crate::chirp_transforms::q_frame;
use crate::{AfbmError, CVec, Result};

/// `max|s|² / mean|s|²` in dB.
pub fn papr_db(s: &[Complex64]) -> Result<f64> {
    if s.is_empty() {
        return Err(AfbmError::Degenerate("empty frame".into()));
    }
    let p: Vec<f64> = s.iter().map(|v| v.norm_sqr()).collect();
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    if mean <= 0.0 {
        return Err(AfbmError::Degenerate("zero-energy frame has no PAPR".into()));
    }
    let peak = p.iter().cloned().fold(0.0, f64::max);
    Ok(10.0 * (peak / mean).log10())
}

/// Band-limited interpolation by `factor`: the spectrum is zero padded
/// around its Nyquist bin, which is split between both halves.
pub fn interpolate(s: &[Complex64], factor: usize) -> Result<Vec<Complex64>> {
    if s.is_empty() || factor == 0 {
        return Err(AfbmError::InvalidParameter("interpolation needs a frame and factor >= 1".into()));
    }
    if factor == 1 {
        return Ok(s.to_vec());
    }
    let n = s.len();
    let m = n * factor;
    let mut planner = FftPlanner::new();
    let mut spec = s.to_vec();
    planner.plan_fft_forward(n).process(&mut spec);
    let mut wide = vec![Complex64::new(0.0, 0.0); m];
    let h = n / 2;
    wide[..n - h].copy_from_slice(&spec[..n - h]);
    wide[m - h..].copy_from_slice(&spec[n - h..]);
    if n % 2 == 0 {
        let nyq = spec[h] * 0.5;
        wide[h] = nyq;
        wide[m - h] = nyq;
    }
    planner.plan_fft_inverse(m).process(&mut wide);
    let scale = 1.0 / n as f64;
    Ok(wide.into_iter().map(|v| v * scale).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ccdf {
    pub thresholds_db: Vec<f64>,
    pub exceed_prob: Vec<f64>,
}

impl Ccdf {
    /// `P(X > t)` at every threshold.
    pub fn from_samples(samples: &[f64], thresholds_db: &[f64]) -> Self {
        let mut sorted = samples.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let n = sorted.len().max(1) as f64;
        let exceed_prob = thresholds_db
            .iter()
            .map(|t| {
                let below = sorted.partition_point(|v| v <= t);
                (sorted.len() - below) as f64 / n
            })
            .collect();
        Self { thresholds_db: thresholds_db.to_vec(), exceed_prob }
    }
}

/// Smallest sample value `t` with `P(X > t) <= prob`.
pub fn ccdf_level(samples: &[f64], prob: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let above = (prob * n as f64).floor() as usize;
    sorted[n.saturating_sub(above + 1).min(n - 1)]
}

/// Normalized profile in dB with peak 0 dB.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdProfile {
    pub freq_bins: Vec<i64>,
    pub power_db: Vec<f64>,
}

fn to_db_normalized(linear: &[f64]) -> Vec<f64> {
    let peak = linear.iter().cloned().fold(0.0, f64::max);
    linear.iter().map(|v| 10.0 * (v / peak).max(1e-300).log10()).collect()
}

/// `ẽ = diag(Q^H G^T G Q)`, one entry per subcarrier position (length KL).
pub fn psd_profile(modem: &AfbmModem) -> Result<PsdProfile> {
    let q = q_frame(modem.params.k, &modem.qp)?;
    let gq = modem.frame.apply_matrix(&q);
    let e: Vec<f64> = (0..gq.ncols()).map(|c| gq.column(c).norm_squared()).collect();
    Ok(PsdProfile { freq_bins: (0..e.len() as i64).collect(), power_db: to_db_normalized(&e) })
}

/// Averaged periodogram of random QPSK frames, bins `−nfft/2..nfft/2−1`.
pub fn periodogram<R: Rng + ?Sized>(modem: &Modem, frames: usize, nfft: usize, rng: &mut R) -> Result<PsdProfile> {
    if nfft < modem.frame_len() {
        return Err(AfbmError::InvalidDimension(format!(
            "nfft = {nfft} shorter than the frame ({})",
            modem.frame_len()
        )));
    }
    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let mut acc = vec![0.0; nfft];
    for _ in 0..frames {
        let s = modem.modulate(&random_qpsk(rng, modem.data_len()))?;
        let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
        buf[..s.len()].copy_from_slice(s.as_slice());
        fft.process(&mut buf);
        for (a, v) in acc.iter_mut().zip(&buf) {
            *a += v.norm_sqr();
        }
    }
    let h = nfft / 2;
    let shifted: Vec<f64> = (0..nfft).map(|i| acc[(i + h) % nfft]).collect();
    Ok(PsdProfile { freq_bins: (0..nfft as i64).map(|i| i - h as i64).collect(), power_db: to_db_normalized(&shifted) })
}

/// Mean linear power (dB) of bins with `|f| >= band_edge + guard`, where
/// frequencies are fractions of the sample rate.
pub fn oob_floor_db(profile: &PsdProfile, nfft: usize, band_edge: f64, guard: f64) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (bin, p) in profile.freq_bins.iter().zip(&profile.power_db) {
        let f = (*bin as f64 / nfft as f64).abs();
        if f >= band_edge + guard {
            sum += 10f64.powf(p / 10.0);
            count += 1;
        }
    }
    if count == 0 {
        return Err(AfbmError::Degenerate("no out-of-band bins".into()));
    }
    Ok(10.0 * (sum / count as f64).max(1e-300).log10())
}

/// Uniform random QPSK symbols of unit energy.
pub fn random_qpsk<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVec {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CVec::from_fn(n, |_, _| {
        let b: u8 = rng.random_range(0..4);
        Complex64::new(if b & 1 == 0 { s } else { -s }, if b & 2 == 0 { s } else { -s })
    })
}

/// Unnormalized `Σ_n s[n] conj(s[n+ℓ]) exp(−j2π f n / M)`.
fn af_sum(s: &[Complex64], lag: i64, f: f64) -> Complex64 {
    let m = s.len() as i64;
    let mut acc = Complex64::new(0.0, 0.0);
    let (start, end) = if lag >= 0 { (0, m - lag) } else { (-lag, m) };
    for n in start.max(0)..end.max(0) {
        let v = s[n as usize] * s[(n + lag) as usize].conj();
        acc += if f == 0.0 { v } else { v * Complex64::from_polar(1.0, -2.0 * PI * f * n as f64 / m as f64) };
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguitySurface {
    pub lags: Vec<i64>,
    pub dopplers: Vec<f64>,
    /// `values[(i, j)] = |A(lags[i], dopplers[j])|`, normalized so `A(0,0) = 1`.
    pub values: DMatrix<f64>,
}

pub fn ambiguity(s: &[Complex64], max_lag: usize, dopplers: &[f64]) -> Result<AmbiguitySurface> {
    let e: f64 = s.iter().map(|v| v.norm_sqr()).sum();
    if e <= 0.0 {
        return Err(AfbmError::Degenerate("zero-energy frame".into()));
    }
    let lags: Vec<i64> = (-(max_lag as i64)..=max_lag as i64).collect();
    let values = DMatrix::from_fn(lags.len(), dopplers.len(), |i, j| af_sum(s, lags[i], dopplers[j]).norm() / e);
    Ok(AmbiguitySurface { lags, dopplers: dopplers.to_vec(), values })
}

/// Zero-Doppler cut over `−max_lag..=max_lag`.
pub fn delay_cut(s: &[Complex64], max_lag: usize) -> Result<Vec<(i64, f64)>> {
    let e: f64 = s.iter().map(|v| v.norm_sqr()).sum();
    if e <= 0.0 {
        return Err(AfbmError::Degenerate("zero-energy frame".into()));
    }
    let nfft = (2 * s.len()).next_power_of_two();
    let mut planner = FftPlanner::new();
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    buf[..s.len()].copy_from_slice(s);
    planner.plan_fft_forward(nfft).process(&mut buf);
    buf.iter_mut().for_each(|v| *v = Complex64::new(v.norm_sqr(), 0.0));
    planner.plan_fft_inverse(nfft).process(&mut buf);
    let norm = e * nfft as f64;
    Ok((-(max_lag as i64)..=max_lag as i64)
        .map(|l| {
            let v = if l.unsigned_abs() as usize >= s.len() { 0.0 } else { buf[l.rem_euclid(nfft as i64) as usize].norm() / norm };
            (l, v)
        })
        .collect())
}

/// Zero-delay cut at the given Dopplers (cycles per frame).
pub fn doppler_cut(s: &[Complex64], dopplers: &[f64]) -> Result<Vec<(f64, f64)>> {
    let a = ambiguity(s, 0, dopplers)?;
    Ok(dopplers.iter().zip(a.values.row(0).iter()).map(|(f, v)| (*f, *v)).collect())
}

/// Largest value outside the mainlobe, in dB. The mainlobe extends from the
/// centre sample while values keep decreasing on each side.
pub fn peak_sidelobe_db(cut: &[f64]) -> Result<f64> {
    if cut.len() < 3 || cut.len() % 2 == 0 {
        return Err(AfbmError::InvalidDimension("cut must have odd length >= 3".into()));
    }
    let mid = cut.len() / 2;
    let mut hi = mid;
    while hi + 1 < cut.len() && cut[hi + 1] < cut[hi] {
        hi += 1;
    }
    let mut lo = mid;
    while lo > 0 && cut[lo - 1] < cut[lo] {
        lo -= 1;
    }
    let side = cut[..lo].iter().chain(&cut[hi + 1..]).cloned().fold(0.0, f64::max);
    if side <= 0.0 {
        return Err(AfbmError::Degenerate("no sidelobes inside the cut".into()));
    }
    Ok(20.0 * side.log10())
}

/// Gray-mapped QPSK bit errors (one bit per quadrature sign).
pub fn bit_errors(x_hat: &CVec, x_true: &CVec) -> Result<usize> {
    if x_hat.len() != x_true.len() {
        return Err(AfbmError::InvalidDimension("symbol vectors differ in length".into()));
    }
    Ok(x_hat
        .iter()
        .zip(x_true.iter())
        .map(|(a, b)| ((a.re >= 0.0) != (b.re >= 0.0)) as usize + ((a.im >= 0.0) != (b.im >= 0.0)) as usize)
        .sum())
}

pub fn ber(x_hat: &CVec, x_true: &CVec) -> Result<f64> {
    Ok(bit_errors(x_hat, x_true)? as f64 / (2 * x_true.len()).max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetPoint {
    pub range_m: f64,
    pub velocity_mps: f64,
}

/// Squared errors of one association.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchErrors {
    pub range_sq: Vec<f64>,
    pub velocity_sq: Vec<f64>,
    pub unmatched: usize,
}

/// Minimal-total-cost association of estimates to truths (exhaustive over
/// permutations, up to eight targets). Costs are squared errors divided by
/// `scale` per axis. Unmatched truths contribute `miss_penalty`.
pub fn match_targets(
    est: &[TargetPoint],
    truth: &[TargetPoint],
    scale: (f64, f64),
    miss_penalty: TargetPoint,
) -> Result<MatchErrors> {
    if truth.len() > 8 || est.len() > 8 {
        return Err(AfbmError::InvalidParameter("exhaustive association supports at most 8 targets".into()));
    }
    let cost = |e: &TargetPoint, t: &TargetPoint| {
        ((e.range_m - t.range_m) / scale.0).powi(2) + ((e.velocity_mps - t.velocity_mps) / scale.1).powi(2)
    };
    let mut best: Option<(f64, Vec<Option<usize>>)> = None;
    let mut used = vec![false; est.len()];
    let mut cur = Vec::with_capacity(truth.len());
    fn search(
        i: usize,
        acc: f64,
        truth: &[TargetPoint],
        est: &[TargetPoint],
        used: &mut Vec<bool>,
        cur: &mut Vec<Option<usize>>,
        best: &mut Option<(f64, Vec<Option<usize>>)>,
        cost: &dyn Fn(&TargetPoint, &TargetPoint) -> f64,
    ) {
        if i == truth.len() {
            if best.as_ref().map_or(true, |b| acc < b.0) {
                *best = Some((acc, cur.clone()));
            }
            return;
        }
        let free = used.iter().filter(|u| !**u).count();
        let remaining = truth.len() - i;
        for j in 0..est.len() {
            if !used[j] {
                used[j] = true;
                cur.push(Some(j));
                search(i + 1, acc + cost(&est[j], &truth[i]), truth, est, used, cur, best, cost);
                cur.pop();
                used[j] = false;
            }
        }
        if free < remaining {
            cur.push(None);
            search(i + 1, acc, truth, est, used, cur, best, cost);
            cur.pop();
        }
    }
    search(0, 0.0, truth, est, &mut used, &mut cur, &mut best, &cost);
    let assign = best.map(|b| b.1).unwrap_or_default();
    let mut out = MatchErrors { range_sq: Vec::new(), velocity_sq: Vec::new(), unmatched: 0 };
    for (t, a) in truth.iter().zip(assign) {
        match a {
            Some(j) => {
                out.range_sq.push((est[j].range_m - t.range_m).powi(2));
                out.velocity_sq.push((est[j].velocity_mps - t.velocity_mps).powi(2));
            }
            None => {
                out.unmatched += 1;
                out.range_sq.push(miss_penalty.range_m.powi(2));
                out.velocity_sq.push(miss_penalty.velocity_mps.powi(2));
            }
        }
    }
    Ok(out)
}

/// Order-independent accumulation of squared errors.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RmseAccumulator {
    pub range_sq: f64,
    pub velocity_sq: f64,
    pub count: usize,
    pub unmatched: usize,
}

impl RmseAccumulator {
    pub fn add(&mut self, m: &MatchErrors) {
        self.range_sq += m.range_sq.iter().sum::<f64>();
        self.velocity_sq += m.velocity_sq.iter().sum::<f64>();
        self.count += m.range_sq.len();
        self.unmatched += m.unmatched;
    }

    pub fn merge(mut self, other: &Self) -> Self {
        self.range_sq += other.range_sq;
        self.velocity_sq += other.velocity_sq;
        self.count += other.count;
        self.unmatched += other.unmatched;
        self
    }

    /// `(range_rmse_m, velocity_rmse_mps)`.
    pub fn rmse(&self) -> (f64, f64) {
        let n = self.count.max(1) as f64;
        ((self.range_sq / n).sqrt(), (self.velocity_sq / n).sqrt())
    }
}

/// `(range_rmse_m, velocity_rmse_mps)` of one association.
pub fn rmse(est: &[TargetPoint], truth: &[TargetPoint], scale: (f64, f64), miss_penalty: TargetPoint) -> Result<(f64, f64)> {
    let m = match_targets(est, truth, scale, miss_penalty)?;
    let mut acc = RmseAccumulator::default();
    acc.add(&m);
    Ok(acc.rmse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    mod papr {
        use super::*;

        #[test]
        fn closed_forms() {
            let c: Vec<Complex64> = (0..16).map(|i| Complex64::from_polar(1.0, i as f64)).collect();
            assert!(papr_db(&c).unwrap().abs() < 1e-12);
            let mut spike = vec![Complex64::new(0.0, 0.0); 64];
            spike[10] = Complex64::new(2.0, 0.0);
            assert!((papr_db(&spike).unwrap() - 10.0 * 64f64.log10()).abs() < 1e-12);
            assert!(papr_db(&[Complex64::new(0.0, 0.0); 4]).is_err());
        }

        #[test]
        fn interpolation_keeps_the_original_samples() {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            for n in [7usize, 16] {
                let s = random_qpsk(&mut rng, n);
                let up = interpolate(s.as_slice(), 4).unwrap();
                assert_eq!(up.len(), 4 * n);
                for (i, v) in s.iter().enumerate() {
                    assert!((up[4 * i] - v).norm() < 1e-12);
                }
            }
            let tone: Vec<Complex64> = (0..32).map(|i| Complex64::from_polar(1.0, 2.0 * PI * 3.0 * i as f64 / 32.0)).collect();
            let up = interpolate(&tone, 4).unwrap();
            for (i, v) in up.iter().enumerate() {
                assert!((v - Complex64::from_polar(1.0, 2.0 * PI * 3.0 * i as f64 / 128.0)).norm() < 1e-12);
            }
        }

        #[test]
        fn ccdf_monotone_and_level() {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let samples: Vec<f64> = (0..1000).map(|_| rng.random::<f64>() * 10.0).collect();
            let th: Vec<f64> = (0..=40).map(|i| i as f64 * 0.25).collect();
            let c = Ccdf::from_samples(&samples, &th);
            assert!(c.exceed_prob.windows(2).all(|w| w[1] <= w[0]));
            assert!(c.exceed_prob.iter().all(|p| (0.0..=1.0).contains(p)));
            let v: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
            // exactly one sample (1000) exceeds 999
            assert_eq!(ccdf_level(&v, 1e-3), 999.0);
        }
    }

    mod ambiguity_fn {
        use super::*;

        #[test]
        fn normalized_origin_and_symmetry() {
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let s: Vec<Complex64> = (0..40).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
            let dop = [-1.5, -0.5, 0.0, 0.5, 1.5];
            let a = ambiguity(&s, 10, &dop).unwrap();
            assert!((a.values[(10, 2)] - 1.0).abs() < 1e-12);
            for i in 0..a.lags.len() {
                for j in 0..dop.len() {
                    let mi = a.lags.len() - 1 - i;
                    let mj = dop.len() - 1 - j;
                    assert!((a.values[(i, j)] - a.values[(mi, mj)]).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn chirp_delay_cut_against_closed_form() {
            // s[n] = exp(jπ α n²): |Σ_{n<M−ℓ} exp(−jπα(2nℓ+ℓ²))| = |sin(παℓ(M−ℓ))/sin(παℓ)|
            let (m, alpha) = (64usize, 1.0 / 64.0);
            let s: Vec<Complex64> = (0..m).map(|n| Complex64::from_polar(1.0, PI * alpha * (n * n) as f64)).collect();
            let cut = delay_cut(&s, 20).unwrap();
            for (lag, v) in cut {
                let l = lag.unsigned_abs() as f64;
                let expect = if l == 0.0 {
                    1.0
                } else {
                    ((PI * alpha * l * (m as f64 - l)).sin() / (PI * alpha * l).sin()).abs() / m as f64
                };
                assert!((v - expect).abs() < 1e-12, "lag {lag}");
            }
            let a = ambiguity(&s, 20, &[0.0]).unwrap();
            for ((_, v), d) in delay_cut(&s, 20).unwrap().iter().zip(a.values.column(0).iter()) {
                assert!((v - d).abs() < 1e-12);
            }
        }

        #[test]
        fn sidelobe_detection() {
            let cut = [0.1, 0.3, 0.05, 0.5, 1.0, 0.5, 0.02, 0.2, 0.01];
            assert!((peak_sidelobe_db(&cut).unwrap() - 20.0 * 0.3f64.log10()).abs() < 1e-12);
        }
    }

    mod errors {
        use super::*;

        #[test]
        fn ber_extremes() {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let x = random_qpsk(&mut rng, 64);
            assert_eq!(ber(&x, &x).unwrap(), 0.0);
            assert_eq!(ber(&(-&x), &x).unwrap(), 1.0);
            let conj = x.map(|v| v.conj());
            assert_eq!(ber(&conj, &x).unwrap(), 0.5);
        }

        #[test]
        fn one_delay_bin_offset() {
            let res = 299_792_458.0 / 1e6 / 2.0;
            let t = [TargetPoint { range_m: 1000.0, velocity_mps: 5.0 }];
            let e = [TargetPoint { range_m: 1000.0 + res, velocity_mps: 5.0 }];
            let (r, v) = rmse(&e, &t, (res, 1.0), TargetPoint { range_m: 0.0, velocity_mps: 0.0 }).unwrap();
            assert!((r - 149.896229).abs() < 1e-6);
            assert_eq!(v, 0.0);
        }

        #[test]
        fn association_is_optimal() {
            let t = [
                TargetPoint { range_m: 0.0, velocity_mps: 0.0 },
                TargetPoint { range_m: 10.0, velocity_mps: 0.0 },
            ];
            let e = [
                TargetPoint { range_m: 9.0, velocity_mps: 0.0 },
                TargetPoint { range_m: 1.0, velocity_mps: 0.0 },
            ];
            let m = match_targets(&e, &t, (1.0, 1.0), TargetPoint { range_m: 0.0, velocity_mps: 0.0 }).unwrap();
            assert_eq!(m.range_sq, vec![1.0, 1.0]);
            let miss = TargetPoint { range_m: 100.0, velocity_mps: 7.0 };
            let m = match_targets(&e[..1], &t, (1.0, 1.0), miss).unwrap();
            assert_eq!(m.unmatched, 1);
            assert_eq!(m.range_sq, vec![10000.0, 1.0]);
        }
    }
}
