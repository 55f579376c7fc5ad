//! Experiment orchestration behind the `afbm-sim` CLI.
//!
//! [`execute`] computes the result tables of one configured experiment and
//! [`run`] additionally writes them as CSV files next to `manifest.txt` and
//! `config.toml`. Floats are printed with 17 significant digits.

pub mod config;
pub mod sweeps;

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::afbm_modem::Modem;
use crate::metrics::{oob_floor_db, periodogram, psd_profile, Ccdf};
use config::{Experiment, ExperimentConfig};
use sweeps::{
    af_cuts, build_modem, gabp_trace, gram_ratios, loopback_errors, papr_samples, sense_sweep, trial_rng, BerSweep,
    SenseSweep,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Numeric(_) | HarnessError::Io(_) => 3,
        }
    }
}

/// Guard between the occupied band and the out-of-band region, as a
/// fraction of the sample rate.
pub const OOB_GUARD: f64 = 0.02;

/// Paths exported per BER run.
const PATH_EXPORT_TRIALS: usize = 100;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| HarnessError::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| HarnessError::Io(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub config: ExperimentConfig,
    pub tables: Vec<CsvTable>,
    pub manifest: String,
}

/// 64-bit FNV-1a, stable across platforms and releases.
fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

fn manifest(cfg: &ExperimentConfig, modem: &Modem, tables: &[CsvTable]) -> String {
    let toml = cfg.to_toml();
    let overlap = match modem {
        Modem::Afbm(m) => m.params.filter.overlap().to_string(),
        Modem::Afdm { .. } => "n/a".into(),
    };
    let files: Vec<&str> = tables.iter().map(|t| t.name.as_str()).collect();
    format!(
        "experiment = {}\nwaveform = {}\ncode_version = {}\nconfig_hash = {:016x}\nseed = {}\ntrial_seed = seed XOR trial\n\
         overlap_factor = {overlap}\nframe_len = {}\ndata_symbols = {}\nchannel_c1 = {}\n\
         snr_definition = E_S / sigma_n^2 with unit-norm transmit columns (per data symbol)\nfiles = {}\n\
         rerun = afbm-sim {} --config config.toml\n\n[config]\n{toml}",
        cfg.experiment.name(),
        cfg.waveform.name(),
        env!("CARGO_PKG_VERSION"),
        fnv1a(&toml),
        cfg.seed,
        modem.frame_len(),
        modem.data_len(),
        fmt_f64(modem.channel_c1()),
        files.join(", "),
        cfg.experiment.name(),
    )
}

/// Occupied half-bandwidth as a fraction of the sample rate.
pub fn band_edge(modem: &Modem) -> f64 {
    match modem {
        Modem::Afbm(m) => m.params.p as f64 / (2.0 * m.params.n as f64),
        Modem::Afdm { modem, .. } => 0.5 / modem.up as f64,
    }
}

/// Smallest power of two holding four frames.
pub fn psd_nfft(modem: &Modem) -> usize {
    (4 * modem.frame_len()).next_power_of_two()
}

fn filter_table(modem: &Modem) -> Option<CsvTable> {
    let Modem::Afbm(m) = modem else { return None };
    let mut t = CsvTable::new("filter.csv", &["m", "g"]);
    for (i, g) in m.params.filter.coeffs.iter().enumerate() {
        t.push(vec![i.to_string(), fmt_f64(*g)]);
    }
    Some(t)
}

/// Computes every table of the configured experiment.
pub fn execute(cfg: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    cfg.validate()?;
    let modem = build_modem(cfg, cfg.waveform)?;
    let mut tables = Vec::new();
    match cfg.experiment {
        Experiment::Papr => {
            let th: Vec<f64> = (0..=320).map(|i| i as f64 * 0.05).collect();
            let factors: &[(usize, &str)] = if cfg.papr_interp { &[(1, "ccdf.csv"), (4, "ccdf_interp4.csv")] } else { &[(1, "ccdf.csv")] };
            for &(f, name) in factors {
                let c = Ccdf::from_samples(&papr_samples(&modem, cfg.trials, cfg.seed, f)?, &th);
                let mut t = CsvTable::new(name, &["papr_db", "prob"]);
                for (x, p) in c.thresholds_db.iter().zip(&c.exceed_prob) {
                    t.push(vec![fmt_f64(*x), fmt_f64(*p)]);
                }
                tables.push(t);
            }
        }
        Experiment::Psd => {
            let nfft = psd_nfft(&modem);
            let prof = periodogram(&modem, cfg.trials, nfft, &mut trial_rng(cfg.seed, 0)).map_err(|e| HarnessError::Numeric(e.to_string()))?;
            let mut t = CsvTable::new("psd.csv", &["bin", "power_db"]);
            for (b, p) in prof.freq_bins.iter().zip(&prof.power_db) {
                t.push(vec![b.to_string(), fmt_f64(*p)]);
            }
            tables.push(t);
            let edge = band_edge(&modem);
            if edge + OOB_GUARD < 0.5 {
                let floor = oob_floor_db(&prof, nfft, edge, OOB_GUARD).map_err(|e| HarnessError::Numeric(e.to_string()))?;
                let mut o = CsvTable::new("oob.csv", &["band_edge", "guard", "floor_db"]);
                o.push(vec![fmt_f64(edge), fmt_f64(OOB_GUARD), fmt_f64(floor)]);
                tables.push(o);
            }
            if let Modem::Afbm(m) = &modem {
                let e = psd_profile(m).map_err(|e| HarnessError::Numeric(e.to_string()))?;
                let mut t = CsvTable::new("etilde.csv", &["bin", "power_db"]);
                for (b, p) in e.freq_bins.iter().zip(&e.power_db) {
                    t.push(vec![b.to_string(), fmt_f64(*p)]);
                }
                tables.push(t);
            }
        }
        Experiment::Af => {
            let dopplers: Vec<f64> = (-64..=64).map(|i| i as f64 * 0.25).collect();
            let (dc, fc) = af_cuts(&modem, cfg.trials, cfg.seed, modem.frame_len() - 1, &dopplers)?;
            let mut t = CsvTable::new("af_delay.csv", &["lag", "amp"]);
            dc.iter().for_each(|(l, a)| t.push(vec![l.to_string(), fmt_f64(*a)]));
            tables.push(t);
            let mut t = CsvTable::new("af_doppler.csv", &["doppler", "amp"]);
            fc.iter().for_each(|(f, a)| t.push(vec![fmt_f64(*f), fmt_f64(*a)]));
            tables.push(t);
        }
        Experiment::Ber => {
            let sw = BerSweep::from_config(cfg);
            let pts = sweeps::ber_sweep(&modem, &sw)?;
            for (i, d) in sw.detectors.iter().enumerate() {
                let mut t = CsvTable::new(format!("ber_{}.csv", d.name()), &["snr_db", "ber", "trials"]);
                for p in &pts {
                    t.push(vec![fmt_f64(p.snr_db), fmt_f64(p.ber(i)), p.frames.to_string()]);
                }
                tables.push(t);
            }
            let last = *cfg.snr_db.last().expect("validated non-empty");
            let mut t = CsvTable::new("gabp_trace.csv", &["iter", "residual_mse"]);
            for (i, v) in gabp_trace(&modem, &sw, last)?.iter().enumerate() {
                t.push(vec![(i + 1).to_string(), fmt_f64(*v)]);
            }
            tables.push(t);
            let mut t = CsvTable::new("paths.csv", &["trial", "path", "h_re", "h_im", "ell", "f"]);
            for trial in 0..cfg.trials.min(PATH_EXPORT_TRIALS) {
                let paths = crate::dd_channel::random_paths(cfg.r, cfg.ell_max, cfg.f_max, &mut trial_rng(cfg.seed, trial))
                    .map_err(|e| HarnessError::Numeric(e.to_string()))?;
                for (j, p) in paths.iter().enumerate() {
                    t.push(vec![trial.to_string(), j.to_string(), fmt_f64(p.h.re), fmt_f64(p.h.im), p.ell.to_string(), fmt_f64(p.f)]);
                }
            }
            tables.push(t);
        }
        Experiment::Sense => {
            let sw = SenseSweep::from_config(cfg);
            let (pts, targets) = sense_sweep(&modem, &sw)?;
            let mut t = CsvTable::new("rmse.csv", &["snr_db", "range_rmse_m", "velocity_rmse_mps", "trials"]);
            for p in &pts {
                let (r, v) = p.acc.rmse();
                t.push(vec![fmt_f64(p.snr_db), fmt_f64(r), fmt_f64(v), p.trials.to_string()]);
            }
            tables.push(t);
            for (p, per_snr) in pts.iter().zip(targets) {
                let header = ["trial", "atom_k", "atom_d", "tau_s", "range_m", "nu_hz", "velocity_mps", "gain_re", "gain_im", "rho"];
                let mut t = CsvTable::new(format!("targets_snr_{}.csv", p.snr_db), &header);
                for (trial, tg) in per_snr {
                    for g in tg {
                        t.push(vec![
                            trial.to_string(),
                            g.atom_k.to_string(),
                            g.atom_d.to_string(),
                            fmt_f64(g.tau_s),
                            fmt_f64(g.range_m),
                            fmt_f64(g.nu_hz),
                            fmt_f64(g.velocity_mps),
                            fmt_f64(g.gain.re),
                            fmt_f64(g.gain.im),
                            fmt_f64(g.rho),
                        ]);
                    }
                }
                tables.push(t);
            }
        }
        Experiment::Loopback => {
            let errors = loopback_errors(&modem, cfg.trials, cfg.seed)?;
            let bits = 2 * modem.data_len() * cfg.trials;
            let mut t = CsvTable::new("ber.csv", &["snr_db", "ber", "trials"]);
            t.push(vec![fmt_f64(f64::INFINITY), fmt_f64(errors as f64 / bits as f64), cfg.trials.to_string()]);
            tables.push(t);
        }
        Experiment::Gram => {
            let ratios = gram_ratios(&modem, cfg.trials, cfg.r, cfg.ell_max, cfg.f_max, cfg.seed)?;
            let mut t = CsvTable::new("gram.csv", &["trial", "ratio_ftd", "ratio_afb"]);
            for (i, (a, b)) in ratios.iter().enumerate() {
                t.push(vec![i.to_string(), fmt_f64(*a), fmt_f64(*b)]);
            }
            tables.push(t);
            let mut s = CsvTable::new("gram_summary.csv", &["domain", "median_ratio"]);
            s.push(vec!["ftd".into(), fmt_f64(median(ratios.iter().map(|r| r.0).collect()))]);
            s.push(vec!["afb".into(), fmt_f64(median(ratios.iter().map(|r| r.1).collect()))]);
            tables.push(s);
        }
    }
    if let Some(f) = filter_table(&modem) {
        tables.push(f);
    }
    let manifest = manifest(cfg, &modem, &tables);
    Ok(ResultTable { config: cfg.clone(), tables, manifest })
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Writes the tables, `manifest.txt` and `config.toml` into `dir`.
pub fn write_outputs(res: &ResultTable, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::Config(format!("out: cannot create {}: {e}", dir.display())))?;
    let io = |e: std::io::Error| HarnessError::Io(e.to_string());
    for t in &res.tables {
        fs::write(dir.join(&t.name), t.to_csv()?).map_err(io)?;
    }
    fs::write(dir.join("manifest.txt"), &res.manifest).map_err(io)?;
    fs::write(dir.join("config.toml"), res.config.to_toml()).map_err(io)?;
    Ok(())
}

/// Executes the experiment and writes its outputs to `cfg.out`.
pub fn run(cfg: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    let res = execute(cfg)?;
    write_outputs(&res, Path::new(&cfg.out))?;
    Ok(res)
}
