//! Jitter-limited SNR models, the slice-count budget, NSR measurement and
//! Monte Carlo orchestration.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::noise::rescale_jitter;
use crate::optics::FrequencyPlan;

pub mod scenario;
pub mod sweep;

pub use scenario::{simulate_once, DigitizerRate, DEFAULT_EDGE_GUARD, Scenario, SimOutcome, StaticPhases};
pub use sweep::{default_sweep_freqs, run_seed, sweep, sweep_with_progress, SnrReport};

/// Lowest NSR ever reported, in dB.
pub const NSR_FLOOR_DB: f64 = -150.0;

/// Aperture-jitter SNR of a single converter: `20·log10(1/(2πf·Δt))`.
pub fn snr_electrical(f_rf_hz: f64, jitter_s: f64) -> Result<f64> {
    if !(f_rf_hz > 0.0 && jitter_s > 0.0) {
        return Err(config_err!(
            "frequency and jitter must be positive, got {f_rf_hz} Hz and {jitter_s} s"
        ));
    }
    Ok(-20.0 * (2.0 * PI * f_rf_hz * jitter_s).log10())
}

/// SNR of a tone at `f_rf_hz` recovered from slice `m`, with comb timing
/// jitter `dt_r_s` and clock jitter `dt_e_s` adding as variances:
/// `−10·log10((m·2πf_r·Δt_r)² + (2π(f − m·f_r)·Δt_e)²)`.
///
/// Infinite when both terms vanish.
pub fn snr_sliced_at_slice(f_rf_hz: f64, m: usize, f_r_hz: f64, dt_r_s: f64, dt_e_s: f64) -> f64 {
    let mll = m as f64 * 2.0 * PI * f_r_hz * dt_r_s;
    let elec = 2.0 * PI * (f_rf_hz - m as f64 * f_r_hz) * dt_e_s;
    -10.0 * (mll * mll + elec * elec).log10()
}

/// [`snr_sliced_at_slice`] with the slice index taken from `plan`.
pub fn snr_sliced(f_rf_hz: f64, plan: &FrequencyPlan, dt_r_s: f64, dt_e_s: f64) -> Result<f64> {
    if !(dt_r_s >= 0.0 && dt_e_s >= 0.0) {
        return Err(config_err!("jitters must be >= 0"));
    }
    let m = plan.slice_of(f_rf_hz).filter(|_| f_rf_hz > 0.0).ok_or_else(|| {
        Error::Range(format!(
            "{f_rf_hz} Hz is outside the sliced band (0, {}) Hz",
            plan.sliced_band().f_hi
        ))
    })?;
    Ok(snr_sliced_at_slice(f_rf_hz, m, plan.slice_bw_hz, dt_r_s, dt_e_s))
}

/// Effective number of bits for an SNR in dB.
pub fn enob(snr_db: f64) -> f64 {
    (snr_db - 1.76) / 6.02
}

/// One point of an SNR-versus-frequency curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub freq_hz: f64,
    pub snr_db: f64,
}

/// Worst-case resolution of an `M`-slice converter against an
/// all-electrical one of the same total bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub n_slices: usize,
    pub slice_bw_hz: f64,
    /// Comb timing jitter, after any observation-time rescaling.
    pub mll_jitter_s: f64,
    /// Clock jitter, after any observation-time rescaling.
    pub elec_jitter_s: f64,
    pub rescale_s: Option<(f64, f64)>,
    /// `Δt_e / M`.
    pub eff_elec_jitter_s: f64,
    /// `Δt_r·(M − 1)/M`.
    pub eff_mll_jitter_s: f64,
    pub worst_freq_hz: f64,
    pub worst_snr_db: f64,
    pub enob: f64,
    pub electric_snr_db: f64,
    pub electric_enob: f64,
    pub enob_gain: f64,
    pub curve: Vec<CurvePoint>,
}

/// Points on the budget's SNR curve.
pub const BUDGET_CURVE_POINTS: usize = 120;

/// Jitter budget of an `M`-slice converter with slice width `f_r_hz`.
///
/// The worst case is the top of the band, `f = M·f_r`, served by slice
/// `M − 1`; there the sliced SNR equals the single-converter SNR with the
/// two effective jitters added in quadrature.
pub fn budget(
    n_slices: usize,
    f_r_hz: f64,
    dt_r_s: f64,
    dt_e_s: f64,
    rescale: Option<(f64, f64)>,
) -> Result<BudgetReport> {
    if n_slices < 1 {
        return Err(config_err!("number of slices must be >= 1, got {n_slices}"));
    }
    if !(f_r_hz > 0.0 && f_r_hz.is_finite()) {
        return Err(config_err!("slice bandwidth must be positive, got {f_r_hz}"));
    }
    if !(dt_r_s >= 0.0 && dt_e_s > 0.0 && dt_r_s.is_finite() && dt_e_s.is_finite()) {
        return Err(config_err!(
            "jitters must be finite with mll >= 0 and elec > 0, got {dt_r_s} and {dt_e_s}"
        ));
    }
    let (dt_r, dt_e) = match rescale {
        Some((from, to)) => (rescale_jitter(dt_r_s, from, to)?, rescale_jitter(dt_e_s, from, to)?),
        None => (dt_r_s, dt_e_s),
    };
    let m_total = n_slices as f64;
    let top = m_total * f_r_hz;
    let worst = snr_sliced_at_slice(top, n_slices - 1, f_r_hz, dt_r, dt_e);
    let electric = snr_electrical(top, dt_e)?;
    let curve = (1..=BUDGET_CURVE_POINTS)
        .map(|k| {
            let f = top * k as f64 / BUDGET_CURVE_POINTS as f64;
            let m = ((f / f_r_hz).floor() as usize).min(n_slices - 1);
            CurvePoint {
                freq_hz: f,
                snr_db: snr_sliced_at_slice(f, m, f_r_hz, dt_r, dt_e),
            }
        })
        .collect();
    Ok(BudgetReport {
        n_slices,
        slice_bw_hz: f_r_hz,
        mll_jitter_s: dt_r,
        elec_jitter_s: dt_e,
        rescale_s: rescale,
        eff_elec_jitter_s: dt_e / m_total,
        eff_mll_jitter_s: dt_r * (m_total - 1.0) / m_total,
        worst_freq_hz: top,
        worst_snr_db: worst,
        enob: enob(worst),
        electric_snr_db: electric,
        electric_enob: enob(electric),
        enob_gain: enob(worst) - enob(electric),
        curve,
    })
}

/// Noise-to-signal ratio of `recon` against `reference` after removing each
/// record's mean, clamped below at [`NSR_FLOOR_DB`].
pub fn measure_nsr(recon: &[f64], reference: &[f64]) -> Result<f64> {
    if recon.len() != reference.len() {
        return Err(Error::GridMismatch(format!(
            "{} reconstructed samples vs {} reference samples",
            recon.len(),
            reference.len()
        )));
    }
    let n = reference.len() as f64;
    let mr = recon.iter().sum::<f64>() / n;
    let mf = reference.iter().sum::<f64>() / n;
    let mut err = 0.0;
    let mut sig = 0.0;
    for (a, b) in recon.iter().zip(reference) {
        let r = b - mf;
        err += (a - mr - r).powi(2);
        sig += r * r;
    }
    if !(sig > 0.0) {
        return Err(Error::Numerical("reference has no AC power".into()));
    }
    if !err.is_finite() {
        return Err(Error::Numerical("non-finite reconstruction error".into()));
    }
    if err == 0.0 {
        return Ok(NSR_FLOOR_DB);
    }
    Ok((10.0 * (err / sig).log10()).max(NSR_FLOOR_DB))
}

/// Pearson correlation coefficient of two equal-length records.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::GridMismatch(format!(
            "cannot correlate {} with {} samples",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x - ma, y - mb);
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    if !(saa > 0.0 && sbb > 0.0) {
        return Err(Error::Numerical("a record has no variance".into()));
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Summary of repeated NSR measurements, averaged in linear power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NsrStats {
    pub mean_db: f64,
    /// Standard deviation expressed in dB around the mean (first-order).
    pub std_db: f64,
    /// `3·std_db/√runs`.
    pub ci3_db: f64,
    pub runs: usize,
}

impl NsrStats {
    pub fn from_db(runs_db: &[f64]) -> Result<Self> {
        if runs_db.is_empty() {
            return Err(config_err!("no runs to summarize"));
        }
        let n = runs_db.len();
        let lin: Vec<f64> = runs_db.iter().map(|d| 10f64.powf(d / 10.0)).collect();
        let mean = lin.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (lin.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let std_db = 10.0 / std::f64::consts::LN_10 * sd / mean;
        Ok(Self {
            mean_db: (10.0 * mean.log10()).max(NSR_FLOOR_DB),
            std_db,
            ci3_db: 3.0 * std_db / (n as f64).sqrt(),
            runs: n,
        })
    }
}
