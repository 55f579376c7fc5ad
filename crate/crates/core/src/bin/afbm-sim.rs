use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use afbm::sim_harness::config::{parse_config, Experiment};
use afbm::sim_harness::{run, HarnessError};

/// AFBM / AFDM simulation harness.
///
/// Exit codes: 0 success, 2 config error, 3 numeric or output failure.
#[derive(Parser, Debug)]
#[command(name = "afbm-sim", version)]
struct Cli {
    /// papr, psd, af, ber, sense, loopback or gram
    experiment: String,
    /// Flat key = value TOML file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// afbm-phydyas, afbm-hermite, afbm-rectangular or afdm
    #[arg(long)]
    waveform: Option<String>,
    #[arg(long = "L")]
    l: Option<i64>,
    #[arg(long = "N")]
    n: Option<i64>,
    #[arg(long = "P")]
    p: Option<i64>,
    #[arg(long = "K")]
    k: Option<i64>,
    #[arg(long = "R")]
    r: Option<i64>,
    #[arg(long, allow_hyphen_values = true)]
    c1: Option<f64>,
    #[arg(long = "c2_l", alias = "c2-l", allow_hyphen_values = true)]
    c2_l: Option<f64>,
    #[arg(long = "c2_p", alias = "c2-p", allow_hyphen_values = true)]
    c2_p: Option<f64>,
    #[arg(long = "c1_afdm", alias = "c1-afdm", allow_hyphen_values = true)]
    c1_afdm: Option<f64>,
    #[arg(long = "c2_afdm", alias = "c2-afdm", allow_hyphen_values = true)]
    c2_afdm: Option<f64>,
    #[arg(long = "ell_max", alias = "ell-max")]
    ell_max: Option<i64>,
    #[arg(long = "f_max", alias = "f-max")]
    f_max: Option<f64>,
    #[arg(long)]
    xi: Option<i64>,
    /// Comma-separated SNR points in dB.
    #[arg(long = "snr", alias = "snr_db", value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<i64>,
    #[arg(long = "min_errors", alias = "min-errors")]
    min_errors: Option<i64>,
    #[arg(long)]
    seed: Option<i64>,
    #[arg(long)]
    out: Option<String>,
    /// Allow configurations beyond desk scale.
    #[arg(long)]
    large: bool,
    /// Also report the PAPR CCDF of 4x interpolated frames.
    #[arg(long = "papr_interp", alias = "papr-interp")]
    papr_interp: bool,
    #[arg(long = "fc_hz", alias = "fc-hz")]
    fc_hz: Option<f64>,
    #[arg(long = "bandwidth_hz", alias = "bandwidth-hz")]
    bandwidth_hz: Option<f64>,
    #[arg(long = "i_max", alias = "i-max")]
    i_max: Option<i64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    es: Option<f64>,
    #[arg(long = "k_tau", alias = "k-tau")]
    k_tau: Option<i64>,
    #[arg(long = "d_nu", alias = "d-nu")]
    d_nu: Option<i64>,
}

impl Cli {
    fn overrides(&self) -> toml::Table {
        use toml::Value;
        let mut t = toml::Table::new();
        t.insert("experiment".into(), Value::String(self.experiment.clone()));
        let ints = [
            ("L", self.l),
            ("N", self.n),
            ("P", self.p),
            ("K", self.k),
            ("R", self.r),
            ("ell_max", self.ell_max),
            ("xi", self.xi),
            ("trials", self.trials),
            ("min_errors", self.min_errors),
            ("seed", self.seed),
            ("i_max", self.i_max),
            ("k_tau", self.k_tau),
            ("d_nu", self.d_nu),
        ];
        for (k, v) in ints {
            if let Some(v) = v {
                t.insert(k.into(), Value::Integer(v));
            }
        }
        let floats = [
            ("c1", self.c1),
            ("c2_l", self.c2_l),
            ("c2_p", self.c2_p),
            ("c1_afdm", self.c1_afdm),
            ("c2_afdm", self.c2_afdm),
            ("f_max", self.f_max),
            ("fc_hz", self.fc_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("beta", self.beta),
            ("es", self.es),
        ];
        for (k, v) in floats {
            if let Some(v) = v {
                t.insert(k.into(), Value::Float(v));
            }
        }
        if let Some(w) = &self.waveform {
            t.insert("waveform".into(), Value::String(w.clone()));
        }
        if let Some(o) = &self.out {
            t.insert("out".into(), Value::String(o.clone()));
        }
        if let Some(s) = &self.snr {
            t.insert("snr_db".into(), Value::Array(s.iter().map(|v| Value::Float(*v)).collect()));
        }
        if self.large {
            t.insert("large".into(), Value::Boolean(true));
        }
        if self.papr_interp {
            t.insert("papr_interp".into(), Value::Boolean(true));
        }
        t
    }
}

fn main_inner(cli: &Cli) -> Result<(), HarnessError> {
    if Experiment::parse(&cli.experiment).is_none() {
        return Err(HarnessError::Config(format!("experiment: unknown experiment `{}`", cli.experiment)));
    }
    let text = match &cli.config {
        Some(p) => Some(
            std::fs::read_to_string(p).map_err(|e| HarnessError::Config(format!("config: cannot read {}: {e}", p.display())))?,
        ),
        None => None,
    };
    let cfg = parse_config(text.as_deref(), cli.overrides())?;
    let res = run(&cfg)?;
    for t in &res.tables {
        println!("{}/{}", cfg.out, t.name);
    }
    println!("{}/manifest.txt", cfg.out);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("afbm-sim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
