//! Per-slice electrical sampling on a jittered clock, plus an optional
//! uniform quantizer.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::noise::{path_to_jitter, PhasePath};
use crate::optics::FrequencyPlan;
use crate::sigkit::{Kernel, TimeGrid, WaveKind, Waveform};

/// Safety factor of the automatic rate over twice the highest beat.
pub const AUTO_RATE_MARGIN: f64 = 2.2;

/// Sampling clock shared by the whole digitizer array.
#[derive(Debug, Clone)]
pub struct ClockModel {
    pub nominal_rate_hz: f64,
    /// Frequency at which the oscillator phase noise is specified.
    pub osc_freq_hz: f64,
    jitter: Vec<f64>,
    path_dt: f64,
}

impl ClockModel {
    pub fn new(nominal_rate_hz: f64, osc_freq_hz: f64, phase_path: &PhasePath) -> Result<Self> {
        if !(nominal_rate_hz > 0.0 && nominal_rate_hz.is_finite()) {
            return Err(config_err!("digitizer rate must be positive, got {nominal_rate_hz}"));
        }
        Ok(Self {
            nominal_rate_hz,
            osc_freq_hz,
            jitter: path_to_jitter(phase_path, osc_freq_hz)?,
            path_dt: phase_path.grid().dt(),
        })
    }

    /// Jitter-free clock.
    pub fn ideal(nominal_rate_hz: f64, grid: TimeGrid) -> Result<Self> {
        Self::new(nominal_rate_hz, 1.0, &PhasePath::zero(grid))
    }

    /// Error unless the rate Nyquist-samples every beat of `plan` with a
    /// reference filter of width `lo_bw_hz`.
    pub fn check_nyquist(&self, plan: &FrequencyPlan, lo_bw_hz: f64) -> Result<()> {
        let need = 2.0 * plan.max_beat_hz(lo_bw_hz);
        if self.nominal_rate_hz < need {
            return Err(config_err!(
                "digitizer rate {:.4} GS/s is below the {:.4} GS/s needed for beats up to {:.4} GHz",
                self.nominal_rate_hz / 1e9,
                need / 1e9,
                need / 2e9
            ));
        }
        Ok(())
    }

    /// Clock timing error at time `t`, linearly interpolated from the phase
    /// path.
    pub fn jitter_at(&self, t: f64) -> f64 {
        let x = (t / self.path_dt).max(0.0);
        let k = x.floor() as usize;
        if k + 1 >= self.jitter.len() {
            return *self.jitter.last().unwrap();
        }
        let f = x - k as f64;
        self.jitter[k] * (1.0 - f) + self.jitter[k + 1] * f
    }

    /// Number of samples taken over `grid`, `floor(T·rate)`.
    pub fn sample_count(&self, grid: &TimeGrid) -> usize {
        (grid.duration() * self.nominal_rate_hz * (1.0 + 1e-12)).floor() as usize
    }

    /// Check that the sample count spans the record exactly, so the
    /// digitized record is periodic like the simulated one.
    pub fn check_record(&self, grid: &TimeGrid) -> Result<usize> {
        let count = self.sample_count(grid);
        let x = grid.duration() * self.nominal_rate_hz;
        if count < 2 || (x - count as f64).abs() > 1e-6 {
            return Err(config_err!(
                "digitizer rate {} Hz does not fit a whole number of samples in the {} s record",
                self.nominal_rate_hz,
                grid.duration()
            ));
        }
        Ok(count)
    }

    /// Sampling instants `k/rate + Δt_e(k/rate)`.
    pub fn instants(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        let count = self.check_record(grid)?;
        let period = 1.0 / self.nominal_rate_hz;
        Ok((0..count)
            .map(|k| {
                let t = k as f64 * period;
                t + self.jitter_at(t)
            })
            .collect())
    }
}

/// Automatic digitizer rate: the simulation rate divided by the largest
/// divisor `D` of the record length that keeps `rate/D ≥ 2.2 × max beat`.
/// Snapping to a divisor keeps the digitized record periodic.
pub fn auto_rate(plan: &FrequencyPlan, grid: &TimeGrid, lo_bw_hz: f64) -> Result<f64> {
    let want = AUTO_RATE_MARGIN * plan.max_beat_hz(lo_bw_hz);
    let fs = grid.sample_rate();
    if fs < want {
        return Err(config_err!(
            "simulation rate {:.4} GS/s cannot host a {:.4} GS/s digitizer",
            fs / 1e9,
            want / 1e9
        ));
    }
    let n = grid.len();
    let best = (1..=n)
        .filter(|d| n.is_multiple_of(*d) && fs / *d as f64 >= want)
        .max()
        .unwrap_or(1);
    Ok(fs / best as f64)
}

/// One slice's digitized photocurrent.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitizedSlice {
    pub slice_index: usize,
    pub samples: Vec<f64>,
    pub period_s: f64,
    /// Actual (jittered) sampling instants, for diagnostics.
    pub instants: Vec<f64>,
}

impl DigitizedSlice {
    /// Nominal uniform grid the samples are treated as lying on.
    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.period_s, self.samples.len())
    }

    pub fn to_waveform(&self) -> Result<Waveform> {
        Waveform::real(self.grid()?, &self.samples)
    }
}

fn wrap_instant(t: f64, duration: f64) -> f64 {
    let w = t.rem_euclid(duration);
    if w >= duration {
        0.0
    } else {
        w
    }
}

/// Sample a real record at precomputed instants; the record is periodic so
/// instants past either end wrap around.
pub fn sample_at_instants(w: &Waveform, instants: &[f64]) -> Result<Vec<f64>> {
    if w.kind() != WaveKind::Real {
        return Err(config_err!("only real records can be digitized"));
    }
    let re = w.real_part();
    Ok(sample_records(w.grid(), &[&re], instants)?.pop().unwrap())
}

/// Sample several real records sharing `grid` at the same instants, reusing
/// one set of interpolation weights.
pub fn sample_records(grid: &TimeGrid, records: &[&[f64]], instants: &[f64]) -> Result<Vec<Vec<f64>>> {
    if let Some(r) = records.iter().find(|r| r.len() != grid.len()) {
        return Err(Error::GridMismatch(format!(
            "{} samples on a {}-point grid",
            r.len(),
            grid.len()
        )));
    }
    // The beats occupy a few percent of the simulation band, so the kernel
    // is accurate without spectral oversampling.
    let kernel = Kernel::standard(*grid);
    let d = grid.duration();
    let taps = instants
        .iter()
        .map(|&t| kernel.tap(wrap_instant(t, d)))
        .collect::<Result<Vec<_>>>()?;
    Ok(records
        .iter()
        .map(|r| taps.iter().map(|t| t.apply(r)).collect())
        .collect())
}

/// Digitize photocurrent `i` of slice `slice_index` on clock `clk`.
pub fn sample_with_jitter(i: &Waveform, clk: &ClockModel, slice_index: usize) -> Result<DigitizedSlice> {
    let instants = clk.instants(i.grid())?;
    let samples = sample_at_instants(i, &instants)?;
    Ok(DigitizedSlice {
        slice_index,
        samples,
        period_s: 1.0 / clk.nominal_rate_hz,
        instants,
    })
}

/// Quantizer resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bits {
    Ideal,
    N(u32),
}

/// Mid-rise uniform quantizer spanning the record's own min/max range.
pub fn quantize(d: &DigitizedSlice, bits: Bits) -> Result<DigitizedSlice> {
    let b = match bits {
        Bits::Ideal => return Ok(d.clone()),
        Bits::N(b) if (1..=52).contains(&b) => b,
        Bits::N(b) => return Err(config_err!("quantizer bits must be in 1..=52, got {b}")),
    };
    let lo = d.samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = d.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::Numerical("non-finite sample in digitized record".into()));
    }
    let levels = (1u64 << b) as f64;
    let q = (hi - lo) / levels;
    let samples = if q == 0.0 {
        d.samples.clone()
    } else {
        d.samples
            .iter()
            .map(|&x| {
                let code = ((x - lo) / q).floor().clamp(0.0, levels - 1.0);
                lo + (code + 0.5) * q
            })
            .collect()
    };
    Ok(DigitizedSlice {
        samples,
        ..d.clone()
    })
}

/// Small-angle noise-to-signal power ratio of a tone at `f_hz` sampled with
/// RMS timing error `jitter_s`: `(2πf·Δt)²`.
pub fn jitter_nsr(f_hz: f64, jitter_s: f64) -> f64 {
    (2.0 * PI * f_hz * jitter_s).powi(2)
}
