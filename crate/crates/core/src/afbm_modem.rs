//! AFBM modulation chain and the AFDM baseline.
//!
//! Transmit: `s = G (I_K ⊗ Q_P C_f) Ξ x` with `C_f = W_L diag(b̃)`.
//! Receive front end (filtered time domain, FTD): `r̄ = G^T r`.
//! Full demodulation (AFB domain): `y = Ξ^T (I_K ⊗ C_f^H Q_P^H) G^T r`.
//!
//! The AFDM baseline is a single `D = KL/2`-point AFDM symbol spanning the
//! frame, interpolated by `N/L` to the AFBM sample rate. Its front end is
//! `S^H r`, so FTD and AFB domains coincide.
//!
//! Every transmit column has unit norm for both waveforms, so `E_S/σ²` is
//! the per-symbol SNR.

use num_complex::Complex64;
use nalgebra::DMatrix;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::chirp_transforms::{
    daft_matrix, dft_matrix, idaft_apply, qp_block, zero_pad_selector, ChirpParams, ChirpSet,
};
use crate::dd_channel::DDChannel;
use crate::prototype_filters::{frame_filter_matrix, single_symbol_matrix, FrameFilter, PrototypeFilter};
use crate::{AfbmError, CMat, CVec, Result};

const C_TILDE_FLOOR: f64 = 1e-12;

/// Dimensioning and chirp constants of one AFBM configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformParams {
    pub l: usize,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub filter: PrototypeFilter,
    pub chirps: ChirpSet,
    pub es: f64,
}

impl WaveformParams {
    /// Accepts `L <= P <= N`; [`WaveformParams::check_strict`] adds `L < P < N`.
    pub fn new(
        l: usize,
        n: usize,
        p: usize,
        k: usize,
        filter: PrototypeFilter,
        chirps: ChirpSet,
        es: f64,
    ) -> Result<Self> {
        if l < 4 || l % 4 != 0 {
            return Err(AfbmError::InvalidDimension(format!("L must be a positive multiple of 4 (L = {l})")));
        }
        if p < l || p > n || p % 2 != 0 {
            return Err(AfbmError::InvalidDimension(format!(
                "need even P with L <= P <= N (L = {l}, P = {p}, N = {n})"
            )));
        }
        if k == 0 {
            return Err(AfbmError::InvalidDimension("K must be >= 1".into()));
        }
        if filter.n != n {
            return Err(AfbmError::InvalidDimension(format!(
                "filter built for N = {} but N = {n}",
                filter.n
            )));
        }
        if !(es > 0.0 && es.is_finite()) {
            return Err(AfbmError::InvalidParameter(format!("E_S must be positive (E_S = {es})")));
        }
        Ok(Self { l, n, p, k, filter, chirps, es })
    }

    pub fn check_strict(&self) -> Result<()> {
        if !(self.l < self.p && self.p < self.n) {
            return Err(AfbmError::InvalidDimension(format!(
                "production mode needs L < P < N (L = {}, P = {}, N = {})",
                self.l, self.p, self.n
            )));
        }
        Ok(())
    }

    pub fn data_len(&self) -> usize {
        self.k * self.l / 2
    }

    pub fn frame_len(&self) -> usize {
        self.filter.len() + (self.k - 1) * self.n / 2
    }
}

/// Active subcarrier positions of one L-block: first and last `L/4`.
pub fn active_indices(l: usize) -> Vec<usize> {
    let q = l / 4;
    (0..q).chain(l - q..l).collect()
}

/// `Ξ = I_K ⊗ Ξ̄` (LK × KL/2).
pub fn mapping_matrix(l: usize, k: usize) -> DMatrix<f64> {
    let h = l / 2;
    let mut xi = DMatrix::zeros(l * k, h * k);
    for b in 0..k {
        for (j, pos) in active_indices(l).into_iter().enumerate() {
            xi[(b * l + pos, b * h + j)] = 1.0;
        }
    }
    xi
}

/// `a = Ξ x`.
pub fn map_symbols(x: &CVec, l: usize, k: usize) -> Result<CVec> {
    let h = l / 2;
    if x.len() != h * k {
        return Err(AfbmError::InvalidDimension(format!(
            "expected {} data symbols, got {}",
            h * k,
            x.len()
        )));
    }
    let act = active_indices(l);
    let mut a = CVec::zeros(l * k);
    for b in 0..k {
        for (j, pos) in act.iter().enumerate() {
            a[b * l + pos] = x[b * h + j];
        }
    }
    Ok(a)
}

/// `x = Ξ^T a`.
pub fn unmap_symbols(a: &CVec, l: usize, k: usize) -> Result<CVec> {
    if a.len() != l * k {
        return Err(AfbmError::InvalidDimension(format!("expected {} entries, got {}", l * k, a.len())));
    }
    let h = l / 2;
    let act = active_indices(l);
    let mut x = CVec::zeros(h * k);
    for b in 0..k {
        for (j, pos) in act.iter().enumerate() {
            x[b * h + j] = a[b * l + pos];
        }
    }
    Ok(x)
}

/// Compensation weights and the diagnostic residual.
#[derive(Debug, Clone, PartialEq)]
pub struct CompensationVector {
    pub b_tilde: CVec,
    pub c_tilde: Vec<f64>,
    /// Frobenius norm of the off-diagonal part of `C_f^H Q_P^H G̃^T G̃ Q_P C_f`
    /// restricted to active indices.
    pub residual_offdiag: f64,
    /// Largest row sum of off-diagonal magnitudes on active indices.
    pub worst_row_leak: f64,
}

/// `c̃ = diag(W_L^H Q_P^H G̃^T G̃ Q_P W_L)` and `b̃ = 1/√c̃` on active indices.
pub fn compensation(params: &WaveformParams) -> Result<CompensationVector> {
    let qp = qp_block(params.n, params.p, params.l, &params.chirps)?;
    compensation_from(params, &qp)
}

fn compensation_from(params: &WaveformParams, qp: &CMat) -> Result<CompensationVector> {
    let l = params.l;
    let wl = daft_matrix(&ChirpParams::new(params.chirps.c1_l, params.chirps.c2_l, l)?)?;
    let gt = single_symbol_matrix(&params.filter).map(|v| Complex64::new(v, 0.0));
    let a = gt * qp * &wl;
    let c_tilde: Vec<f64> = (0..l).map(|c| a.column(c).norm_squared()).collect();
    let mut b_tilde = CVec::zeros(l);
    for idx in active_indices(l) {
        let c = c_tilde[idx];
        if !(c > C_TILDE_FLOOR) {
            return Err(AfbmError::DegenerateFilter { index: idx, value: c });
        }
        b_tilde[idx] = Complex64::new(1.0 / c.sqrt(), 0.0);
    }
    let ab = DMatrix::from_fn(a.nrows(), l, |r, c| a[(r, c)] * b_tilde[c]);
    let gram = ab.adjoint() * &ab;
    let act = active_indices(l);
    let mut off = 0.0;
    let mut worst: f64 = 0.0;
    for &i in &act {
        let mut row = 0.0;
        for &j in &act {
            if i != j {
                off += gram[(i, j)].norm_sqr();
                row += gram[(i, j)].norm();
            }
        }
        worst = worst.max(row);
    }
    Ok(CompensationVector { b_tilde, c_tilde, residual_offdiag: off.sqrt(), worst_row_leak: worst })
}

/// Precomputed AFBM modem.
#[derive(Debug, Clone)]
pub struct AfbmModem {
    pub params: WaveformParams,
    pub qp: CMat,
    pub cf: CMat,
    pub comp: CompensationVector,
    pub frame: FrameFilter,
    /// `Q_P C_f Ξ̄` (N × L/2), the per-symbol precoder.
    bbar: CMat,
}

impl AfbmModem {
    pub fn new(params: WaveformParams) -> Result<Self> {
        let qp = qp_block(params.n, params.p, params.l, &params.chirps)?;
        let comp = compensation_from(&params, &qp)?;
        let wl = daft_matrix(&ChirpParams::new(params.chirps.c1_l, params.chirps.c2_l, params.l)?)?;
        let cf = DMatrix::from_fn(params.l, params.l, |r, c| wl[(r, c)] * comp.b_tilde[c]);
        let qcf = &qp * &cf;
        let act = active_indices(params.l);
        let bbar = DMatrix::from_fn(params.n, params.l / 2, |r, j| qcf[(r, act[j])]);
        let frame = frame_filter_matrix(&params.filter, params.k)?;
        Ok(Self { params, qp, cf, comp, frame, bbar })
    }

    pub fn data_len(&self) -> usize {
        self.params.data_len()
    }

    pub fn frame_len(&self) -> usize {
        self.frame.m
    }

    /// `(I_K ⊗ Q_P C_f) Ξ` (NK × KL/2).
    pub fn b_matrix(&self) -> CMat {
        let (n, h) = self.bbar.shape();
        let mut b = CMat::zeros(n * self.params.k, h * self.params.k);
        for k in 0..self.params.k {
            b.view_mut((k * n, k * h), (n, h)).copy_from(&self.bbar);
        }
        b
    }

    /// Dense transmit matrix `G B` (M × KL/2).
    pub fn transmit_matrix(&self) -> CMat {
        self.frame.apply_matrix(&self.b_matrix())
    }

    fn precode(&self, x: &CVec) -> Vec<Complex64> {
        let (n, h) = self.bbar.shape();
        let mut u = Vec::with_capacity(n * self.params.k);
        for k in 0..self.params.k {
            let xk = x.rows(k * h, h);
            u.extend((&self.bbar * xk).iter());
        }
        u
    }

    fn check_len(&self, got: usize, want: usize, what: &str) -> Result<()> {
        if got != want {
            return Err(AfbmError::InvalidDimension(format!("{what}: expected length {want}, got {got}")));
        }
        Ok(())
    }

    pub fn modulate(&self, x: &CVec) -> Result<CVec> {
        self.check_len(x.len(), self.data_len(), "modulate")?;
        Ok(CVec::from_vec(self.frame.apply(&self.precode(x))))
    }

    /// Filtered time-domain observation `G^T r`.
    pub fn front_end(&self, r: &CVec) -> Result<CVec> {
        self.check_len(r.len(), self.frame_len(), "front end")?;
        Ok(CVec::from_vec(self.frame.adjoint_apply(r.as_slice())))
    }

    /// AFB-domain symbols `B^H r̄` from an FTD observation.
    pub fn afb_from_ftd(&self, rbar: &CVec) -> CVec {
        let (n, h) = self.bbar.shape();
        let mut y = CVec::zeros(h * self.params.k);
        for k in 0..self.params.k {
            let blk = self.bbar.adjoint() * rbar.rows(k * n, n);
            y.rows_mut(k * h, h).copy_from(&blk);
        }
        y
    }

    pub fn demodulate(&self, r: &CVec) -> Result<CVec> {
        Ok(self.afb_from_ftd(&self.front_end(r)?))
    }

    /// `H̄ = G^T H G B` for a dense `M×M` channel.
    pub fn filtered_td_channel(&self, h_time: &CMat) -> Result<CMat> {
        let m = self.frame_len();
        if h_time.shape() != (m, m) {
            return Err(AfbmError::InvalidDimension(format!(
                "channel must be {m}x{m}, got {:?}",
                h_time.shape()
            )));
        }
        Ok(self.frame.adjoint_apply_matrix(&(h_time * self.transmit_matrix())))
    }

    /// `H_eff = B^H H̄` for a dense `M×M` channel.
    pub fn afb_effective_channel(&self, h_time: &CMat) -> Result<CMat> {
        Ok(self.afb_from_ftd_matrix(&self.filtered_td_channel(h_time)?))
    }

    pub fn afb_from_ftd_matrix(&self, hbar: &CMat) -> CMat {
        let (n, h) = self.bbar.shape();
        let mut out = CMat::zeros(h * self.params.k, hbar.ncols());
        for k in 0..self.params.k {
            let blk = self.bbar.adjoint() * hbar.rows(k * n, n);
            out.rows_mut(k * h, h).copy_from(&blk);
        }
        out
    }
}

/// Oversampled AFDM baseline.
#[derive(Debug, Clone)]
pub struct AfdmModem {
    pub d: usize,
    pub up: usize,
    pub c1: f64,
    pub c2: f64,
    s: CMat,
}

impl AfdmModem {
    /// `d` chirp subcarriers interpolated by `up`.
    pub fn new(d: usize, up: usize, c1: f64, c2: f64) -> Result<Self> {
        if d < 2 || d % 2 != 0 || up == 0 {
            return Err(AfbmError::InvalidDimension(format!(
                "AFDM needs even D >= 2 and up >= 1 (D = {d}, up = {up})"
            )));
        }
        let wh = daft_matrix(&ChirpParams::new(c1, c2, d)?)?.adjoint();
        let s = if up == 1 {
            wh
        } else {
            let ma = d * up;
            let t = zero_pad_selector(ma, d)?.map(|v| Complex64::new(v, 0.0));
            dft_matrix(ma)?.adjoint() * t * dft_matrix(d)? * wh
        };
        Ok(Self { d, up, c1, c2, s })
    }

    pub fn data_len(&self) -> usize {
        self.d
    }

    pub fn frame_len(&self) -> usize {
        self.d * self.up
    }

    pub fn transmit_matrix(&self) -> &CMat {
        &self.s
    }

    /// FFT-based modulation, equal to `S x`.
    pub fn modulate(&self, x: &CVec) -> Result<CVec> {
        if x.len() != self.d {
            return Err(AfbmError::InvalidDimension(format!(
                "modulate: expected length {}, got {}",
                self.d,
                x.len()
            )));
        }
        let base = idaft_apply(x.as_slice(), self.c1, self.c2);
        if self.up == 1 {
            return Ok(CVec::from_vec(base));
        }
        let ma = self.frame_len();
        let mut planner = FftPlanner::new();
        let mut spec = base;
        planner.plan_fft_forward(self.d).process(&mut spec);
        let mut wide = vec![Complex64::new(0.0, 0.0); ma];
        let h = self.d / 2;
        wide[..h].copy_from_slice(&spec[..h]);
        wide[ma - h..].copy_from_slice(&spec[h..]);
        planner.plan_fft_inverse(ma).process(&mut wide);
        let scale = 1.0 / ((self.d * ma) as f64).sqrt();
        Ok(CVec::from_iterator(ma, wide.into_iter().map(|v| v * scale)))
    }

    /// The `D`-chip symbol before interpolation.
    pub fn chip_frame(&self, x: &CVec) -> Result<CVec> {
        if x.len() != self.d {
            return Err(AfbmError::InvalidDimension(format!("chip frame: expected length {}, got {}", self.d, x.len())));
        }
        Ok(CVec::from_vec(idaft_apply(x.as_slice(), self.c1, self.c2)))
    }

    pub fn front_end(&self, r: &CVec) -> Result<CVec> {
        if r.len() != self.frame_len() {
            return Err(AfbmError::InvalidDimension(format!(
                "front end: expected length {}, got {}",
                self.frame_len(),
                r.len()
            )));
        }
        Ok(self.s.adjoint() * r)
    }
}

/// Waveform selector used by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaveformKind {
    AfbmPhydyas,
    AfbmHermite,
    AfbmRectangular,
    Afdm,
}

impl WaveformKind {
    pub fn name(&self) -> &'static str {
        match self {
            WaveformKind::AfbmPhydyas => "afbm-phydyas",
            WaveformKind::AfbmHermite => "afbm-hermite",
            WaveformKind::AfbmRectangular => "afbm-rectangular",
            WaveformKind::Afdm => "afdm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "afbm-phydyas" => Some(WaveformKind::AfbmPhydyas),
            "afbm-hermite" => Some(WaveformKind::AfbmHermite),
            "afbm-rectangular" => Some(WaveformKind::AfbmRectangular),
            "afdm" => Some(WaveformKind::Afdm),
            _ => None,
        }
    }

    pub fn is_afbm(&self) -> bool {
        !matches!(self, WaveformKind::Afdm)
    }
}

/// AFBM or AFDM behind one interface.
#[derive(Debug, Clone)]
pub enum Modem {
    Afbm(AfbmModem),
    Afdm { modem: AfdmModem, n_ref: usize },
}

impl Modem {
    pub fn afbm(params: WaveformParams) -> Result<Self> {
        Ok(Modem::Afbm(AfbmModem::new(params)?))
    }

    /// AFDM carrying the same `KL/2` symbols at the sample rate of an
    /// AFBM frame with DFT size `n`.
    pub fn afdm(l: usize, n: usize, k: usize, c1: f64, c2: f64) -> Result<Self> {
        if l == 0 || n % l != 0 {
            return Err(AfbmError::InvalidDimension(format!("AFDM needs L | N (L = {l}, N = {n})")));
        }
        let modem = AfdmModem::new(k * l / 2, n / l, c1, c2)?;
        Ok(Modem::Afdm { modem, n_ref: n })
    }

    pub fn data_len(&self) -> usize {
        match self {
            Modem::Afbm(m) => m.data_len(),
            Modem::Afdm { modem, .. } => modem.data_len(),
        }
    }

    pub fn frame_len(&self) -> usize {
        match self {
            Modem::Afbm(m) => m.frame_len(),
            Modem::Afdm { modem, .. } => modem.frame_len(),
        }
    }

    /// Length of the front-end observation `r̄`.
    pub fn obs_len(&self) -> usize {
        match self {
            Modem::Afbm(m) => m.params.n * m.params.k,
            Modem::Afdm { modem, .. } => modem.data_len(),
        }
    }

    /// Doppler normalization: samples per unit of normalized Doppler.
    pub fn doppler_norm(&self) -> f64 {
        match self {
            Modem::Afbm(m) => m.params.n as f64,
            Modem::Afdm { n_ref, .. } => *n_ref as f64,
        }
    }

    /// Chirp rate driving the channel prefix phase.
    pub fn channel_c1(&self) -> f64 {
        match self {
            Modem::Afbm(m) => m.params.chirps.c1_p,
            Modem::Afdm { modem, .. } => modem.c1 / (modem.up * modem.up) as f64,
        }
    }

    pub fn modulate(&self, x: &CVec) -> Result<CVec> {
        match self {
            Modem::Afbm(m) => m.modulate(x),
            Modem::Afdm { modem, .. } => modem.modulate(x),
        }
    }

    /// Critically sampled transmit frame: the AFDM chips, or the AFBM
    /// frame as modulated.
    pub fn papr_frame(&self, x: &CVec) -> Result<CVec> {
        match self {
            Modem::Afbm(m) => m.modulate(x),
            Modem::Afdm { modem, .. } => modem.chip_frame(x),
        }
    }

    pub fn front_end(&self, r: &CVec) -> Result<CVec> {
        match self {
            Modem::Afbm(m) => m.front_end(r),
            Modem::Afdm { modem, .. } => modem.front_end(r),
        }
    }

    pub fn demodulate(&self, r: &CVec) -> Result<CVec> {
        match self {
            Modem::Afbm(m) => m.demodulate(r),
            Modem::Afdm { modem, .. } => modem.front_end(r),
        }
    }

    pub fn transmit_matrix(&self) -> CMat {
        match self {
            Modem::Afbm(m) => m.transmit_matrix(),
            Modem::Afdm { modem, .. } => modem.transmit_matrix().clone(),
        }
    }

    /// Front end applied to every column of `y` (M × c).
    pub fn front_end_matrix(&self, y: &CMat) -> CMat {
        match self {
            Modem::Afbm(m) => m.frame.adjoint_apply_matrix(y),
            Modem::Afdm { modem, .. } => modem.transmit_matrix().adjoint() * y,
        }
    }

    /// FTD effective channel `r̄ = H̄ x + w̄`, given `S`.
    pub fn filtered_channel_with(&self, ch: &DDChannel, s: &CMat) -> Result<CMat> {
        Ok(self.front_end_matrix(&ch.apply_matrix(s)?))
    }

    pub fn filtered_channel(&self, ch: &DDChannel) -> Result<CMat> {
        self.filtered_channel_with(ch, &self.transmit_matrix())
    }

    /// AFB-domain effective channel from `H̄`.
    pub fn afb_channel(&self, hbar: &CMat) -> CMat {
        match self {
            Modem::Afbm(m) => m.afb_from_ftd_matrix(hbar),
            Modem::Afdm { .. } => hbar.clone(),
        }
    }

    /// AFB-domain observation from `r̄`.
    pub fn afb_observation(&self, rbar: &CVec) -> CVec {
        match self {
            Modem::Afbm(m) => m.afb_from_ftd(rbar),
            Modem::Afdm { .. } => rbar.clone(),
        }
    }
}

/// Gram matrix `H^H H` and its off/on-diagonal energy ratio.
pub fn gram_diagonality(h: &CMat) -> Result<(CMat, f64)> {
    let g = h.adjoint() * h;
    let mut on = 0.0;
    let mut total = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let e = g[(i, j)].norm_sqr();
            total += e;
            if i == j {
                on += e;
            }
        }
    }
    if on <= 0.0 {
        return Err(AfbmError::Degenerate("Gram diagonal is zero".into()));
    }
    Ok((g, (total - on) / on))
}
