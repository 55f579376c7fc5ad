//! Monte-Carlo kernels behind every experiment.
//!
//! Trial `t` draws from `ChaCha8(seed ^ t)` in a fixed order: channel
//! paths, then data (or pilot), then unit-variance noise. The noise is
//! scaled per SNR point, so all points of a sweep share the same draws.
//! Trials run on the rayon pool and are reduced in trial order.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::HarnessError;
use crate::afbm_modem::{gram_diagonality, Modem, WaveformKind, WaveformParams};
use crate::chirp_transforms::ChirpSet;
use crate::dd_channel::{build_channel, complex_gaussian, random_paths, recommend_c1, DDChannel};
use crate::gabp_detector::{gabp_detect, lmmse_afb, lmmse_ftd, GaBPConfig};
use crate::metrics::{bit_errors, delay_cut, doppler_cut, interpolate, match_targets, papr_db, random_qpsk, RmseAccumulator, TargetPoint};
use crate::pda_sensing::{build_dictionary, extract_targets, pda_estimate, to_physical, DelayDopplerGrid, RadioParams, TargetEstimate};
use crate::prototype_filters::PrototypeFilter;
use crate::{AfbmError, CMat, CVec};

/// Trials evaluated between early-stopping checks.
const CHUNK: usize = 32;

pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ trial as u64)
}

fn numeric(trial: usize, seed: u64, e: AfbmError) -> HarnessError {
    HarnessError::Numeric(format!("trial {trial} (seed {}) failed: {e}", seed ^ trial as u64))
}

/// Runs `f` over `trials` in parallel; results come back in trial order and
/// the lowest failing trial is reported.
fn par_trials<T, F>(trials: std::ops::Range<usize>, seed: u64, f: F) -> Result<Vec<T>, HarnessError>
where
    T: Send,
    F: Fn(usize) -> crate::Result<T> + Sync,
{
    let out: Vec<(usize, crate::Result<T>)> = trials.into_par_iter().map(|t| (t, f(t))).collect();
    out.into_iter().map(|(t, r)| r.map_err(|e| numeric(t, seed, e))).collect()
}

fn scale(v: &CVec, a: f64) -> CVec {
    v * Complex64::new(a, 0.0)
}

/// Modem for `kind` with the chirp defaults of the configured experiment.
pub fn build_modem(cfg: &ExperimentConfig, kind: WaveformKind) -> Result<Modem, HarnessError> {
    let built = if kind.is_afbm() {
        let mut cfg_k = cfg.clone();
        cfg_k.waveform = kind;
        let filter = PrototypeFilter::of_kind(cfg_k.filter_kind(), cfg.n)
            .map_err(|e| HarnessError::Config(format!("N: {e}")))?;
        let c1 = cfg.c1.unwrap_or_else(|| recommend_c1(cfg.f_max, cfg.xi, cfg.p));
        let (c2_l, c2_p) = if cfg.experiment == super::config::Experiment::Af {
            (PI / (cfg.l * cfg.l) as f64, 0.0)
        } else {
            (1.0 / (PI * (cfg.l * cfg.l) as f64), 1.0 / (PI * (cfg.p * cfg.p) as f64))
        };
        let chirps = ChirpSet { c1_l: c1, c2_l: cfg.c2_l.unwrap_or(c2_l), c1_p: c1, c2_p: cfg.c2_p.unwrap_or(c2_p) };
        WaveformParams::new(cfg.l, cfg.n, cfg.p, cfg.k, filter, chirps, cfg.es).and_then(Modem::afbm)
    } else {
        let (d, _) = cfg.afdm_dims();
        let c1 = cfg.c1_afdm.unwrap_or_else(|| recommend_c1(cfg.f_max * d as f64 / cfg.l as f64, cfg.xi, d));
        let c2 = cfg.c2_afdm.unwrap_or(PI / (d * d) as f64);
        Modem::afdm(cfg.l, cfg.n, cfg.k, c1, c2)
    };
    built.map_err(|e| match e {
        AfbmError::InvalidDimension(m) | AfbmError::InvalidParameter(m) => HarnessError::Config(m),
        other => HarnessError::Numeric(other.to_string()),
    })
}

/// PAPR (dB) of `frames` random QPSK frames.
/// PAPR of critically sampled frames, band-limited interpolated by `interp`.
pub fn papr_samples(modem: &Modem, frames: usize, seed: u64, interp: usize) -> Result<Vec<f64>, HarnessError> {
    par_trials(0..frames, seed, |t| {
        let x = random_qpsk(&mut trial_rng(seed, t), modem.data_len());
        papr_db(&interpolate(modem.papr_frame(&x)?.as_slice(), interp)?)
    })
}

/// RMS over frames of the normalized delay and Doppler AF cuts.
pub fn af_cuts(
    modem: &Modem,
    frames: usize,
    seed: u64,
    max_lag: usize,
    dopplers: &[f64],
) -> Result<(Vec<(i64, f64)>, Vec<(f64, f64)>), HarnessError> {
    let cuts = par_trials(0..frames, seed, |t| {
        let x = random_qpsk(&mut trial_rng(seed, t), modem.data_len());
        let s = modem.modulate(&x)?;
        Ok((delay_cut(s.as_slice(), max_lag)?, doppler_cut(s.as_slice(), dopplers)?))
    })?;
    let n = frames as f64;
    let mut dc: Vec<(i64, f64)> = cuts[0].0.iter().map(|(l, _)| (*l, 0.0)).collect();
    let mut fc: Vec<(f64, f64)> = dopplers.iter().map(|f| (*f, 0.0)).collect();
    for (d, f) in &cuts {
        dc.iter_mut().zip(d).for_each(|(a, b)| a.1 += b.1 * b.1);
        fc.iter_mut().zip(f).for_each(|(a, b)| a.1 += b.1 * b.1);
    }
    dc.iter_mut().for_each(|a| a.1 = (a.1 / n).sqrt());
    fc.iter_mut().for_each(|a| a.1 = (a.1 / n).sqrt());
    Ok((dc, fc))
}

/// Total symbol-sign errors over `frames` noiseless identity-channel frames.
pub fn loopback_errors(modem: &Modem, frames: usize, seed: u64) -> Result<usize, HarnessError> {
    let errs = par_trials(0..frames, seed, |t| {
        let x = random_qpsk(&mut trial_rng(seed, t), modem.data_len());
        bit_errors(&modem.demodulate(&modem.modulate(&x)?)?, &x)
    })?;
    Ok(errs.into_iter().sum())
}

/// Off/on-diagonal Gram energy ratios `(FTD, AFB)` over random channels.
pub fn gram_ratios(modem: &Modem, trials: usize, r: usize, ell_max: usize, f_max: f64, seed: u64) -> Result<Vec<(f64, f64)>, HarnessError> {
    let s = modem.transmit_matrix();
    par_trials(0..trials, seed, |t| {
        let ch = draw_channel(modem, r, ell_max, f_max, &mut trial_rng(seed, t))?;
        let hbar = modem.filtered_channel_with(&ch, &s)?;
        let (_, ftd) = gram_diagonality(&hbar)?;
        let (_, afb) = gram_diagonality(&modem.afb_channel(&hbar))?;
        Ok((ftd, afb))
    })
}

fn draw_channel(modem: &Modem, r: usize, ell_max: usize, f_max: f64, rng: &mut ChaCha8Rng) -> crate::Result<DDChannel> {
    let paths = random_paths(r, ell_max, f_max, rng)?;
    build_channel(&paths, modem.frame_len(), modem.channel_c1(), modem.doppler_norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Detector {
    GabpFtd,
    LmmseFtd,
    LmmseAfb,
}

impl Detector {
    pub fn name(&self) -> &'static str {
        match self {
            Detector::GabpFtd => "gabp_ftd",
            Detector::LmmseFtd => "lmmse_ftd",
            Detector::LmmseAfb => "lmmse_afb",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerSweep {
    pub snr_db: Vec<f64>,
    pub detectors: Vec<Detector>,
    pub max_frames: usize,
    /// Stop a point once every detector has this many bit errors (0 disables).
    pub min_errors: usize,
    pub min_frames: usize,
    pub r: usize,
    pub ell_max: usize,
    pub f_max: f64,
    pub i_max: usize,
    pub beta: f64,
    pub es: f64,
    pub seed: u64,
}

impl BerSweep {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            snr_db: cfg.snr_db.clone(),
            detectors: vec![Detector::GabpFtd, Detector::LmmseFtd, Detector::LmmseAfb],
            max_frames: cfg.trials,
            min_errors: cfg.min_errors,
            min_frames: CHUNK.min(cfg.trials),
            r: cfg.r,
            ell_max: cfg.ell_max,
            f_max: cfg.f_max,
            i_max: cfg.i_max,
            beta: cfg.beta,
            es: cfg.es,
            seed: cfg.seed,
        }
    }

    fn sigma2(&self, snr_db: f64) -> f64 {
        self.es * 10f64.powf(-snr_db / 10.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerPoint {
    pub snr_db: f64,
    pub frames: usize,
    pub bits: usize,
    /// Bit errors per detector, in `BerSweep::detectors` order.
    pub errors: Vec<usize>,
}

impl BerPoint {
    pub fn ber(&self, detector_idx: usize) -> f64 {
        self.errors[detector_idx] as f64 / self.bits.max(1) as f64
    }
}

/// One channel/data/noise draw shared by all SNR points of a trial.
struct BerTrial {
    x: CVec,
    y_fe: CVec,
    w_fe: CVec,
    hbar: CMat,
    heff: Option<CMat>,
}

fn ber_trial(modem: &Modem, s: &CMat, sw: &BerSweep, t: usize) -> crate::Result<BerTrial> {
    let mut rng = trial_rng(sw.seed, t);
    let paths = random_paths(sw.r, sw.ell_max, sw.f_max, &mut rng)?;
    let x = scale(&random_qpsk(&mut rng, modem.data_len()), sw.es.sqrt());
    let w = complex_gaussian(modem.frame_len(), &mut rng);
    let ch = build_channel(&paths, modem.frame_len(), modem.channel_c1(), modem.doppler_norm())?;
    let y = ch.apply_vec(&(s * &x))?;
    let hbar = modem.filtered_channel_with(&ch, s)?;
    let heff = sw.detectors.contains(&Detector::LmmseAfb).then(|| modem.afb_channel(&hbar));
    Ok(BerTrial { x, y_fe: modem.front_end(&y)?, w_fe: modem.front_end(&w)?, hbar, heff })
}

fn detect(modem: &Modem, tr: &BerTrial, det: Detector, sw: &BerSweep, sigma2: f64, rbar: &CVec) -> crate::Result<CVec> {
    match det {
        Detector::GabpFtd => {
            let cfg = GaBPConfig::new(sw.i_max, sw.beta, sw.es, sigma2)?;
            Ok(gabp_detect(rbar, &tr.hbar, &cfg)?.x_hat)
        }
        Detector::LmmseFtd => lmmse_ftd(rbar, &tr.hbar, sigma2),
        Detector::LmmseAfb => {
            let heff = tr.heff.as_ref().expect("AFB channel built when requested");
            lmmse_afb(&modem.afb_observation(rbar), heff, sigma2)
        }
    }
}

/// BER curves for every detector, with per-point early stopping.
pub fn ber_sweep(modem: &Modem, sw: &BerSweep) -> Result<Vec<BerPoint>, HarnessError> {
    let s = modem.transmit_matrix();
    let bits_per_frame = 2 * modem.data_len();
    let mut points: Vec<BerPoint> = sw
        .snr_db
        .iter()
        .map(|&snr_db| BerPoint { snr_db, frames: 0, bits: 0, errors: vec![0; sw.detectors.len()] })
        .collect();
    let done = |p: &BerPoint| {
        p.frames >= sw.max_frames
            || (sw.min_errors > 0 && p.frames >= sw.min_frames && p.errors.iter().all(|&e| e >= sw.min_errors))
    };
    let mut start = 0;
    while start < sw.max_frames {
        let active: Vec<usize> = (0..points.len()).filter(|&i| !done(&points[i])).collect();
        if active.is_empty() {
            break;
        }
        let end = (start + CHUNK).min(sw.max_frames);
        let counts = par_trials(start..end, sw.seed, |t| {
            let tr = ber_trial(modem, &s, sw, t)?;
            let mut out = Vec::with_capacity(active.len());
            for &i in &active {
                let sigma2 = sw.sigma2(points[i].snr_db);
                let rbar = &tr.y_fe + scale(&tr.w_fe, sigma2.sqrt());
                let errs = sw
                    .detectors
                    .iter()
                    .map(|&d| bit_errors(&detect(modem, &tr, d, sw, sigma2, &rbar)?, &tr.x))
                    .collect::<crate::Result<Vec<usize>>>()?;
                out.push(errs);
            }
            Ok(out)
        })?;
        for trial in counts {
            for (slot, errs) in active.iter().zip(trial) {
                let p = &mut points[*slot];
                p.frames += 1;
                p.bits += bits_per_frame;
                p.errors.iter_mut().zip(errs).for_each(|(a, b)| *a += b);
            }
        }
        start = end;
    }
    Ok(points)
}

/// Per-iteration GaBP residual MSE of trial 0 at `snr_db`.
pub fn gabp_trace(modem: &Modem, sw: &BerSweep, snr_db: f64) -> Result<Vec<f64>, HarnessError> {
    let s = modem.transmit_matrix();
    let run = || -> crate::Result<Vec<f64>> {
        let tr = ber_trial(modem, &s, sw, 0)?;
        let sigma2 = sw.sigma2(snr_db);
        let rbar = &tr.y_fe + scale(&tr.w_fe, sigma2.sqrt());
        let cfg = GaBPConfig::new(sw.i_max, sw.beta, sw.es, sigma2)?;
        Ok(gabp_detect(&rbar, &tr.hbar, &cfg)?.residual_mse)
    };
    run().map_err(|e| numeric(0, sw.seed, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SenseSweep {
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub r: usize,
    pub ell_max: usize,
    pub f_max: f64,
    pub k_tau: usize,
    pub d_nu: usize,
    pub i_max: usize,
    pub beta: f64,
    pub es: f64,
    pub seed: u64,
    pub radio: RadioParams,
}

impl SenseSweep {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            snr_db: cfg.snr_db.clone(),
            trials: cfg.trials,
            r: cfg.r,
            ell_max: cfg.ell_max,
            f_max: cfg.f_max,
            k_tau: cfg.k_tau,
            d_nu: cfg.d_nu,
            i_max: cfg.i_max,
            beta: cfg.beta,
            es: cfg.es,
            seed: cfg.seed,
            radio: RadioParams { fc_hz: cfg.fc_hz, fs_hz: cfg.bandwidth_hz, n: cfg.n },
        }
    }

    fn point(&self, ell: f64, f: f64) -> TargetPoint {
        let (_, range_m, _, velocity_mps) = to_physical(ell, f, &self.radio);
        TargetPoint { range_m, velocity_mps }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensePoint {
    pub snr_db: f64,
    pub trials: usize,
    pub acc: RmseAccumulator,
}

/// Range/velocity RMSE per SNR point and the detected targets of every
/// trial (outer index: SNR point).
pub fn sense_sweep(modem: &Modem, sw: &SenseSweep) -> Result<(Vec<SensePoint>, Vec<Vec<(usize, Vec<TargetEstimate>)>>), HarnessError> {
    let grid = DelayDopplerGrid::uniform(sw.k_tau, sw.ell_max, sw.d_nu, sw.f_max)
        .map_err(|e| HarnessError::Config(format!("k_tau/d_nu: {e}")))?;
    let resolution = sw.point(1.0, 1.0);
    let miss = sw.point(sw.ell_max as f64, sw.f_max);
    let per_trial = par_trials(0..sw.trials, sw.seed, |t| {
        let mut rng = trial_rng(sw.seed, t);
        let paths = random_paths(sw.r, sw.ell_max, sw.f_max, &mut rng)?;
        let pilot = scale(&random_qpsk(&mut rng, modem.data_len()), sw.es.sqrt());
        let w = complex_gaussian(modem.frame_len(), &mut rng);
        let dict = build_dictionary(&pilot, &grid, modem)?;
        let ch = build_channel(&paths, modem.frame_len(), modem.channel_c1(), modem.doppler_norm())?;
        let y_fe = modem.front_end(&ch.apply_vec(&modem.modulate(&pilot)?)?)?;
        let w_fe = modem.front_end(&w)?;
        let truth: Vec<TargetPoint> = paths.iter().map(|p| sw.point(p.ell as f64, p.f)).collect();
        let mut out = Vec::with_capacity(sw.snr_db.len());
        for &snr in &sw.snr_db {
            let n0 = sw.es * 10f64.powf(-snr / 10.0);
            let rbar = &y_fe + scale(&w_fe, n0.sqrt());
            let est = pda_estimate(&rbar, &dict, n0, sw.r, sw.i_max, sw.beta)?;
            let targets = extract_targets(&est.h_hat, &est.rho_hat, &grid, sw.r, &sw.radio);
            let pts: Vec<TargetPoint> = targets.iter().map(|g| TargetPoint { range_m: g.range_m, velocity_mps: g.velocity_mps }).collect();
            let m = match_targets(&pts, &truth, (resolution.range_m, resolution.velocity_mps), miss)?;
            out.push((m, targets));
        }
        Ok(out)
    })?;
    let mut points: Vec<SensePoint> =
        sw.snr_db.iter().map(|&snr_db| SensePoint { snr_db, trials: 0, acc: RmseAccumulator::default() }).collect();
    let mut targets: Vec<Vec<(usize, Vec<TargetEstimate>)>> = vec![Vec::new(); sw.snr_db.len()];
    for (t, trial) in per_trial.into_iter().enumerate() {
        for (i, (m, tg)) in trial.into_iter().enumerate() {
            points[i].trials += 1;
            points[i].acc.add(&m);
            targets[i].push((t, tg));
        }
    }
    Ok((points, targets))
}
