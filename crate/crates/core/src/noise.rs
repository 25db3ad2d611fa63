//! Wiener phase-noise generation and the linewidth/jitter arithmetic.
//!
//! A Lorentzian full linewidth `Δν` is modeled as a Wiener phase process with
//! diffusion `Δω = 2πΔν`: increments over a step `dt` are independent
//! Gaussians of variance `2πΔν·dt`. Timing jitter of an oscillator at
//! frequency `f` is its phase divided by `2πf`, so the RMS jitter grows as
//! `√(2πΔν·t) / (2πf)`.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::sigkit::TimeGrid;

/// Which noise sources are active in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SourceFlags {
    /// Phase noise of the modulated optical carrier.
    pub carrier: bool,
    /// Optical phase noise common to every comb line.
    pub mll_optical: bool,
    /// Pulse-train timing jitter of the comb (its RF linewidth).
    pub mll_rf: bool,
    /// Jitter of the electrical sampling clock.
    pub elec: bool,
}

impl SourceFlags {
    pub const NONE: SourceFlags = SourceFlags {
        carrier: false,
        mll_optical: false,
        mll_rf: false,
        elec: false,
    };
}

/// Linewidths of the four phase-noise sources.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub carrier_linewidth_hz: f64,
    pub mll_optical_linewidth_hz: f64,
    /// Linewidth of the beat note between adjacent comb lines.
    pub mll_rf_linewidth_hz: f64,
    pub elec_linewidth_hz: f64,
    /// Frequency at which the electrical oscillator's linewidth is specified.
    pub elec_osc_freq_hz: f64,
    pub enabled: SourceFlags,
}

impl NoiseSpec {
    /// The exaggerated linewidths used for the numerical validation runs.
    pub fn validation_defaults() -> Self {
        Self {
            carrier_linewidth_hz: 100e3,
            mll_optical_linewidth_hz: 10e6,
            mll_rf_linewidth_hz: 3e3,
            elec_linewidth_hz: 180e3,
            elec_osc_freq_hz: 60e9,
            enabled: SourceFlags::NONE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lws = [
            ("carrier_linewidth_hz", self.carrier_linewidth_hz),
            ("mll_optical_linewidth_hz", self.mll_optical_linewidth_hz),
            ("mll_rf_linewidth_hz", self.mll_rf_linewidth_hz),
            ("elec_linewidth_hz", self.elec_linewidth_hz),
        ];
        for (name, v) in lws {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(config_err!("{name} must be a finite value >= 0, got {v}"));
            }
        }
        if self.enabled.elec && !(self.elec_osc_freq_hz > 0.0) {
            return Err(config_err!(
                "elec_osc_freq_hz must be positive when the electrical source is enabled"
            ));
        }
        Ok(())
    }

    /// Linewidth actually applied for a source: zero when disabled.
    pub fn active_linewidth(&self, role: PathRole) -> f64 {
        let f = &self.enabled;
        match role {
            PathRole::CarrierPhase if f.carrier => self.carrier_linewidth_hz,
            PathRole::MllOptical if f.mll_optical => self.mll_optical_linewidth_hz,
            PathRole::MllTiming if f.mll_rf => self.mll_rf_linewidth_hz,
            PathRole::ElecClock if f.elec => self.elec_linewidth_hz,
            _ => 0.0,
        }
    }
}

/// One realization of a Wiener phase process.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePath {
    grid: TimeGrid,
    phase: Vec<f64>,
    linewidth_hz: f64,
    seed: u64,
}

impl PhasePath {
    /// The noiseless path.
    pub fn zero(grid: TimeGrid) -> Self {
        Self {
            grid,
            phase: vec![0.0; grid.len()],
            linewidth_hz: 0.0,
            seed: 0,
        }
    }

    /// A deterministic path from explicit samples.
    pub fn from_samples(grid: TimeGrid, phase: Vec<f64>) -> Self {
        assert_eq!(phase.len(), grid.len(), "phase samples must match the grid");
        Self {
            grid,
            phase,
            linewidth_hz: 0.0,
            seed: 0,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn phase(&self) -> &[f64] {
        &self.phase
    }

    pub fn linewidth_hz(&self) -> f64 {
        self.linewidth_hz
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_zero(&self) -> bool {
        self.phase.iter().all(|p| *p == 0.0)
    }

    /// Linear interpolation of the phase at time `t`, clamped to the record.
    pub fn phase_at(&self, t: f64) -> f64 {
        let x = (t / self.grid.dt()).max(0.0);
        let k = x.floor() as usize;
        if k + 1 >= self.phase.len() {
            return *self.phase.last().unwrap();
        }
        let f = x - k as f64;
        self.phase[k] * (1.0 - f) + self.phase[k + 1] * f
    }
}

/// Generate a Wiener phase path with `phase[0] = 0` and increment variance
/// `2π·linewidth·dt`.
pub fn wiener_path(linewidth_hz: f64, grid: TimeGrid, seed: u64) -> Result<PhasePath> {
    if !(linewidth_hz >= 0.0 && linewidth_hz.is_finite()) {
        return Err(config_err!("linewidth must be >= 0, got {linewidth_hz}"));
    }
    if linewidth_hz == 0.0 {
        return Ok(PhasePath {
            seed,
            ..PhasePath::zero(grid)
        });
    }
    let sigma = (2.0 * PI * linewidth_hz * grid.dt()).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phase = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    phase.push(acc);
    for _ in 1..grid.len() {
        let z: f64 = StandardNormal.sample(&mut rng);
        acc += sigma * z;
        phase.push(acc);
    }
    Ok(PhasePath {
        grid,
        phase,
        linewidth_hz,
        seed,
    })
}

/// Timing jitter `Δt(k) = phase(k) / (2π·f_osc)`.
pub fn path_to_jitter(path: &PhasePath, osc_freq_hz: f64) -> Result<Vec<f64>> {
    if !(osc_freq_hz > 0.0) {
        return Err(config_err!("oscillator frequency must be positive, got {osc_freq_hz}"));
    }
    let w = 2.0 * PI * osc_freq_hz;
    Ok(path.phase.iter().map(|p| p / w).collect())
}

/// RMS jitter accumulated after time `t` by an oscillator of frequency
/// `osc_freq_hz` and linewidth `linewidth_hz`.
pub fn jitter_rms(linewidth_hz: f64, t_seconds: f64, osc_freq_hz: f64) -> f64 {
    (2.0 * PI * linewidth_hz * t_seconds).sqrt() / (2.0 * PI * osc_freq_hz)
}

/// Rescale an integrated jitter figure to a different observation time
/// under the `√t` diffusion law.
pub fn rescale_jitter(jitter_s: f64, t_from_s: f64, t_to_s: f64) -> Result<f64> {
    if !(t_from_s > 0.0 && t_to_s > 0.0) {
        return Err(config_err!(
            "observation times must be positive, got {t_from_s} and {t_to_s}"
        ));
    }
    Ok(jitter_s * (t_to_s / t_from_s).sqrt())
}

/// Jitter seen by a record-level measurement of duration `record_s` that
/// starts at zero phase: the RMS of the time-averaged phase variance, i.e.
/// [`jitter_rms`] evaluated at half the record.
pub fn effective_record_jitter(linewidth_hz: f64, record_s: f64, osc_freq_hz: f64) -> f64 {
    jitter_rms(linewidth_hz, 0.5 * record_s, osc_freq_hz)
}

/// Purpose of a random stream, mixed into derived seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum PathRole {
    CarrierPhase = 1,
    MllOptical = 2,
    MllTiming = 3,
    ElecClock = 4,
    CombPhases = 5,
    /// Per-run seed handed to a single simulation.
    Run = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one random stream:
/// `s = splitmix64(splitmix64(splitmix64(splitmix64(master) ^ role) ^ run) ^ freq)`.
///
/// Depends only on its arguments, so parallel sweeps reproduce regardless of
/// scheduling.
pub fn derive_seed(master: u64, role: PathRole, run_index: u64, freq_index: u64) -> u64 {
    let s = splitmix64(master) ^ role as u64;
    let s = splitmix64(s) ^ run_index;
    let s = splitmix64(s) ^ freq_index;
    splitmix64(s)
}
