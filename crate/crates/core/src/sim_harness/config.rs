//! Experiment configuration: flat `key = value` TOML, overridable per key.

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::afbm_modem::WaveformKind;
use crate::dd_channel::{validate_budget, ChannelBudget};
use crate::prototype_filters::{FilterKind, PrototypeFilter};

/// Beyond this `N·K`, ber and sense runs need `large = true`.
pub const DESK_NK_LIMIT: usize = 512;
/// Beyond this frame length every run needs `large = true`.
pub const DESK_FRAME_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Papr,
    Psd,
    Af,
    Ber,
    Sense,
    Loopback,
    Gram,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Papr => "papr",
            Experiment::Psd => "psd",
            Experiment::Af => "af",
            Experiment::Ber => "ber",
            Experiment::Sense => "sense",
            Experiment::Loopback => "loopback",
            Experiment::Gram => "gram",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Experiment::Papr,
            Experiment::Psd,
            Experiment::Af,
            Experiment::Ber,
            Experiment::Sense,
            Experiment::Loopback,
            Experiment::Gram,
        ]
        .into_iter()
        .find(|e| e.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub waveform: WaveformKind,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "K")]
    pub k: usize,
    /// AFBM `c1` of both DAFTs; defaults to the budget rule on `P`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c2_l: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c2_p: Option<f64>,
    /// AFDM `c1`; defaults to the budget rule on the `KL/2`-chip symbol.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c1_afdm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c2_afdm: Option<f64>,
    #[serde(rename = "R")]
    pub r: usize,
    pub ell_max: usize,
    pub f_max: f64,
    pub xi: usize,
    pub snr_db: Vec<f64>,
    /// Frames (or channels, or sensing trials) per point.
    pub trials: usize,
    /// BER points stop early once every detector has this many bit errors (0 disables).
    pub min_errors: usize,
    pub seed: u64,
    pub out: String,
    pub large: bool,
    /// The papr experiment also reports a 4x interpolated CCDF.
    pub papr_interp: bool,
    pub fc_hz: f64,
    pub bandwidth_hz: f64,
    pub i_max: usize,
    pub beta: f64,
    pub es: f64,
    pub k_tau: usize,
    pub d_nu: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Papr,
            waveform: WaveformKind::AfbmPhydyas,
            l: 128,
            n: 256,
            p: 256,
            k: 8,
            c1: None,
            c2_l: None,
            c2_p: None,
            c1_afdm: None,
            c2_afdm: None,
            r: 3,
            ell_max: 16,
            f_max: 2.0,
            xi: 1,
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            trials: 1000,
            min_errors: 500,
            seed: 1,
            out: "results".into(),
            large: false,
            papr_interp: false,
            fc_hz: 4e9,
            bandwidth_hz: 1e6,
            i_max: 20,
            beta: 0.5,
            es: 1.0,
            k_tau: 8,
            d_nu: 8,
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn data_len(&self) -> usize {
        self.k * self.l / 2
    }

    /// AFDM chip count `D = KL/2` and upsampling `N/L`.
    pub fn afdm_dims(&self) -> (usize, usize) {
        (self.data_len(), self.n / self.l)
    }

    fn frame_len(&self) -> crate::Result<usize> {
        if self.waveform.is_afbm() {
            let f = PrototypeFilter::of_kind(self.filter_kind(), self.n)?;
            Ok(f.len() + (self.k - 1) * self.n / 2)
        } else {
            let (d, up) = self.afdm_dims();
            Ok(d * up)
        }
    }

    pub fn filter_kind(&self) -> FilterKind {
        match self.waveform {
            WaveformKind::AfbmHermite => FilterKind::Hermite,
            WaveformKind::AfbmRectangular => FilterKind::Rectangular,
            _ => FilterKind::Phydyas,
        }
    }

    /// Checks every constraint; each failure names its key.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.l < 4 || self.l % 4 != 0 {
            return Err(cfg_err(format!("L must be a positive multiple of 4 (L = {})", self.l)));
        }
        if self.n % self.l != 0 || self.n % 2 != 0 {
            return Err(cfg_err(format!("N must be an even multiple of L (N = {}, L = {})", self.n, self.l)));
        }
        if self.k == 0 {
            return Err(cfg_err("K must be >= 1"));
        }
        if self.waveform.is_afbm() {
            if self.p > self.n {
                return Err(cfg_err(format!("P must be < N (P = N is also accepted; P = {}, N = {})", self.p, self.n)));
            }
            if self.p < self.l {
                return Err(cfg_err(format!("P must be > L (P = L is also accepted; P = {}, L = {})", self.p, self.l)));
            }
            if self.p % 2 != 0 {
                return Err(cfg_err(format!("P must be even (P = {})", self.p)));
            }
        }
        for (key, v) in [("c1", self.c1), ("c2_l", self.c2_l), ("c2_p", self.c2_p), ("c1_afdm", self.c1_afdm), ("c2_afdm", self.c2_afdm)] {
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(cfg_err(format!("{key} must be finite")));
                }
            }
        }
        if !(self.f_max >= 0.0 && self.f_max.is_finite()) {
            return Err(cfg_err(format!("f_max must be finite and >= 0 (f_max = {})", self.f_max)));
        }
        if self.trials == 0 {
            return Err(cfg_err("trials must be >= 1"));
        }
        if self.seed > i64::MAX as u64 {
            return Err(cfg_err(format!("seed must be <= {}", i64::MAX)));
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(cfg_err("snr_db entries must be finite"));
        }
        if !(self.fc_hz > 0.0 && self.fc_hz.is_finite()) {
            return Err(cfg_err("fc_hz must be positive"));
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(cfg_err("bandwidth_hz must be positive"));
        }
        if self.i_max == 0 {
            return Err(cfg_err("i_max must be >= 1"));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(cfg_err(format!("beta must lie in (0, 1] (beta = {})", self.beta)));
        }
        if !(self.es > 0.0 && self.es.is_finite()) {
            return Err(cfg_err(format!("es must be positive (es = {})", self.es)));
        }
        let m = self.frame_len().map_err(|e| cfg_err(format!("N: {e}")))?;
        if m > DESK_FRAME_LIMIT && !self.large {
            return Err(cfg_err(format!("large: frame length {m} exceeds {DESK_FRAME_LIMIT}; pass --large")));
        }
        if matches!(self.experiment, Experiment::Ber | Experiment::Sense | Experiment::Gram) {
            self.validate_channel(m)?;
        }
        if matches!(self.experiment, Experiment::Ber | Experiment::Sense) {
            if self.snr_db.is_empty() {
                return Err(cfg_err("snr_db must not be empty"));
            }
            if self.n * self.k > DESK_NK_LIMIT && !self.large {
                return Err(cfg_err(format!(
                    "large: N*K = {} exceeds {DESK_NK_LIMIT} for {}; pass --large",
                    self.n * self.k,
                    self.experiment.name()
                )));
            }
        }
        if self.experiment == Experiment::Sense {
            if self.k_tau == 0 || self.d_nu == 0 {
                return Err(cfg_err("k_tau and d_nu must be >= 1"));
            }
            if self.k_tau > 1 && self.ell_max % (self.k_tau - 1) != 0 {
                return Err(cfg_err(format!(
                    "k_tau: {} integer delay bins cannot evenly span [0, ell_max = {}]",
                    self.k_tau, self.ell_max
                )));
            }
            if self.r > self.k_tau * self.d_nu {
                return Err(cfg_err("R exceeds the number of grid atoms (k_tau * d_nu)"));
            }
        }
        Ok(())
    }

    fn validate_channel(&self, m: usize) -> Result<(), HarnessError> {
        if self.r == 0 || self.r > self.ell_max + 1 {
            return Err(cfg_err(format!("R must lie in [1, ell_max + 1] (R = {}, ell_max = {})", self.r, self.ell_max)));
        }
        if self.ell_max >= m {
            return Err(cfg_err(format!("ell_max must be below the frame length {m}")));
        }
        let budget = if self.waveform.is_afbm() {
            ChannelBudget { ell_max: self.ell_max, f_max: self.f_max, xi: self.xi, p_daft: self.p }
        } else {
            let (d, up) = self.afdm_dims();
            ChannelBudget {
                ell_max: self.ell_max.div_ceil(up),
                f_max: self.f_max * d as f64 / self.l as f64,
                xi: self.xi,
                p_daft: d,
            }
        };
        let rep = validate_budget(&budget);
        if !rep.ok {
            return Err(cfg_err(format!(
                "ell_max/f_max/xi: 2(f_max+xi)(ell_max+1)+ell_max = {} exceeds the DAFT size {}",
                rep.lhs, rep.rhs
            )));
        }
        Ok(())
    }
}

/// Merges `overrides` over the file contents, rejects unknown keys and
/// validates the result.
pub fn parse_config(file_text: Option<&str>, overrides: toml::Table) -> Result<ExperimentConfig, HarnessError> {
    let mut table: toml::Table = match file_text {
        Some(t) => t.parse().map_err(|e: toml::de::Error| cfg_err(format!("config file: {}", e.message())))?,
        None => toml::Table::new(),
    };
    for (k, v) in overrides {
        table.insert(k, v);
    }
    if let Some((k, _)) = table.iter().find(|(_, v)| v.is_table()) {
        return Err(cfg_err(format!("{k}: nested tables are not allowed")));
    }
    let cfg: ExperimentConfig = table.try_into().map_err(|e: toml::de::Error| cfg_err(e.message().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}
