//! Receiver chain and digital reconstruction of the full-band signal.
//!
//! Each slice's digitized photocurrent is turned into an analytic phasor,
//! normalized by the reference-line amplitude, corrected for the line's
//! static phase, upsampled, shifted back to its original band and summed.
//! The recovered signal is the squared magnitude of that sum.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::digitizer::{quantize, sample_records, Bits, ClockModel, DigitizedSlice};
use crate::error::{config_err, Error, Result};
use crate::optics::{balanced_detect, isolate_all_lo_lines, slice_all, FrequencyPlan, ToneSpec, Transducer};
use crate::sigkit::{
    brickwall_filter, hilbert_analytic, resample_shifted, resample_uniform, BandMask, TimeGrid, WaveKind, Waveform,
};

/// Everything the reconstruction needs from one slice.
#[derive(Debug, Clone)]
pub struct SliceChannel {
    pub slice_index: usize,
    pub digitized: DigitizedSlice,
    pub lo_offset_hz: f64,
    /// `|E(t)|²` of the reference line at the digitizer instants.
    pub rin_monitor: Option<Vec<f64>>,
    pub lo_amplitude: f64,
}

/// Origin of a phase correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectionSource {
    /// The true static phases, known to the simulator.
    Oracle,
    /// Phases estimated from a pilot-tone calibration acquisition.
    Pilot,
}

/// One-tap static phase correction per slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCorrection {
    pub offsets_rad: Vec<f64>,
    pub source: CorrectionSource,
}

impl PhaseCorrection {
    pub fn oracle(phases: &[f64]) -> Self {
        Self {
            offsets_rad: phases.to_vec(),
            source: CorrectionSource::Oracle,
        }
    }
}

/// Output of [`reconstruct`].
#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    /// Composite analytic field `F(t)`.
    pub field: Waveform,
    /// Recovered signal `|F(t)|²`.
    pub signal: Vec<f64>,
    /// Per-slice phasors after normalization and correction, upsampled and
    /// shifted to their original bands.
    pub phasors: Vec<Waveform>,
}

/// Wrap to `(−π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

fn check_channels(channels: &[SliceChannel], plan: &FrequencyPlan) -> Result<()> {
    if channels.len() != plan.n_slices {
        return Err(config_err!(
            "{} channels for a {}-slice plan",
            channels.len(),
            plan.n_slices
        ));
    }
    for (m, ch) in channels.iter().enumerate() {
        if ch.slice_index != m {
            return Err(config_err!("channel {m} carries slice index {}", ch.slice_index));
        }
    }
    Ok(())
}

/// Baseband phasor `i_a/2 = s·E*` of a digitized slice.
fn baseband_phasor(ch: &SliceChannel) -> Result<Waveform> {
    Ok(hilbert_analytic(&ch.digitized.to_waveform()?)?.scale(0.5))
}

fn upsampled_root_monitor(ch: &SliceChannel, grid: TimeGrid) -> Result<Vec<f64>> {
    let mon = ch.rin_monitor.as_ref().ok_or_else(|| {
        config_err!("RIN cancellation requested but slice {} has no monitor", ch.slice_index)
    })?;
    if mon.len() != ch.digitized.samples.len() {
        return Err(Error::GridMismatch(format!(
            "slice {}: {} monitor samples for {} signal samples",
            ch.slice_index,
            mon.len(),
            ch.digitized.samples.len()
        )));
    }
    if let Some(p) = mon.iter().find(|p| !(**p > 0.0)) {
        return Err(Error::Numerical(format!(
            "slice {}: monitor power {p} is not positive",
            ch.slice_index
        )));
    }
    let w = Waveform::real(ch.digitized.grid()?, mon)?;
    let up = resample_uniform(&w, grid)?;
    up.samples()
        .iter()
        .map(|c| {
            if c.re > 0.0 {
                Ok(c.re.sqrt())
            } else {
                Err(Error::Numerical(format!(
                    "slice {}: interpolated monitor power {} is not positive",
                    ch.slice_index, c.re
                )))
            }
        })
        .collect()
}

fn slice_phasor(ch: &SliceChannel, corr: f64, rin_cancel: bool, grid: TimeGrid) -> Result<Waveform> {
    let base = baseband_phasor(ch)?;
    let rot = Complex64::from_polar(1.0, corr);
    let base = if rin_cancel {
        base.map_indexed(|_, c| c * rot)
    } else {
        if !(ch.lo_amplitude > 0.0) {
            return Err(config_err!("slice {}: reference amplitude must be positive", ch.slice_index));
        }
        base.map_indexed(|_, c| c * rot / ch.lo_amplitude)
    };
    // The monitor is band-limited like the phasor, so both are brought to
    // the fine grid before dividing; dividing first would not commute with
    // the interpolation.
    let up = resample_shifted(&base, grid, ch.lo_offset_hz)?;
    if rin_cancel {
        let root = upsampled_root_monitor(ch, grid)?;
        Ok(up.map_indexed(|k, c| c / root[k]))
    } else {
        Ok(up)
    }
}

/// Stitch the digitized slices back into one field and square it.
pub fn reconstruct(
    channels: &[SliceChannel],
    plan: &FrequencyPlan,
    corr: &PhaseCorrection,
    rin_cancel: bool,
    recon_grid: TimeGrid,
) -> Result<ReconstructionResult> {
    check_channels(channels, plan)?;
    if corr.offsets_rad.len() != plan.n_slices {
        return Err(config_err!(
            "{} phase offsets for {} slices",
            corr.offsets_rad.len(),
            plan.n_slices
        ));
    }
    let phasors = channels
        .iter()
        .zip(&corr.offsets_rad)
        .map(|(ch, &phi)| slice_phasor(ch, phi, rin_cancel, recon_grid))
        .collect::<Result<Vec<_>>>()?;
    let mut field = Waveform::zeros(recon_grid, WaveKind::Envelope);
    for p in &phasors {
        field = field.add(p)?;
    }
    let signal = field.samples().iter().map(|c| c.norm_sqr()).collect();
    Ok(ReconstructionResult { field, signal, phasors })
}

/// Ground truth for the reconstruction: the modulated field kept over the
/// sliced band only (carrier plus upper sidebands), squared.
pub fn ssb_reference(modulated: &Waveform, plan: &FrequencyPlan, recon_grid: TimeGrid) -> Result<Waveform> {
    let kept = brickwall_filter(modulated, plan.sliced_band())?;
    let kept = resample_uniform(&kept, recon_grid)?;
    let p: Vec<f64> = kept.samples().iter().map(|c| c.norm_sqr()).collect();
    Waveform::real(recon_grid, &p)
}

/// One pilot per slice, centered in the slice at `m·f_r + f_r/2 − f_Δ`,
/// launched with zero phase.
pub fn pilot_tones(plan: &FrequencyPlan, amplitude: f64) -> Vec<ToneSpec> {
    (0..plan.n_slices)
        .map(|m| ToneSpec {
            freq_hz: (m as f64 + 0.5) * plan.slice_bw_hz - plan.guard_hz,
            amplitude,
            phase_rad: 0.0,
            transducer: Transducer::Linear,
        })
        .collect()
}

/// Complex amplitude of an on-bin tone at `f` in `w`.
fn project(w: &[Complex64], grid: &TimeGrid, f: f64) -> Complex64 {
    let s: Complex64 = w
        .iter()
        .enumerate()
        .map(|(k, c)| c * Complex64::from_polar(1.0, -2.0 * PI * grid.cycles(f, k)))
        .sum();
    s / w.len() as f64
}

/// Minimum detected pilot amplitude relative to the noiseless expectation.
pub const PILOT_DETECT_FLOOR: f64 = 0.01;

/// Estimate each slice's static phase from a calibration acquisition with
/// one known pilot per slice (see [`pilot_tones`]).
///
/// Slice 0's phase comes from its pilot directly. Every other slice is
/// referenced to the carrier beat in slice 0, which removes phase noise
/// common to carrier and comb from the relative estimates.
pub fn estimate_static_phases(
    channels: &[SliceChannel],
    plan: &FrequencyPlan,
    pilots: &[ToneSpec],
) -> Result<PhaseCorrection> {
    check_channels(channels, plan)?;
    if pilots.len() != plan.n_slices {
        return Err(config_err!("need one pilot per slice, got {}", pilots.len()));
    }
    for (m, p) in pilots.iter().enumerate() {
        if plan.slice_of(p.freq_hz) != Some(m) {
            return Err(config_err!("pilot {m} at {} Hz is not inside slice {m}", p.freq_hz));
        }
    }
    let phasors = channels.iter().map(baseband_phasor).collect::<Result<Vec<_>>>()?;
    let g0 = *phasors[0].grid();
    let e0 = channels[0].lo_amplitude;

    let carrier_band = BandMask::new(plan.guard_hz, 3.0 * plan.guard_hz)?;
    let carrier = brickwall_filter(&phasors[0], carrier_band)?;
    let c_amp = carrier.power().sqrt();
    if !(c_amp > PILOT_DETECT_FLOOR * e0) {
        return Err(Error::Calibration("carrier beat not found in slice 0".into()));
    }

    let p0 = &pilots[0];
    let a0 = project(phasors[0].samples(), &g0, p0.freq_hz - plan.lo_freq(0));
    let want0 = 0.5 * p0.amplitude * e0;
    if !(a0.norm() > PILOT_DETECT_FLOOR * want0) {
        return Err(Error::Calibration(format!(
            "pilot of slice 0 detected at {:.1} dB of its expected amplitude",
            20.0 * (a0.norm() / want0).log10()
        )));
    }
    let phi0 = wrap_phase(p0.phase_rad - a0.arg());

    let mut offsets = Vec::with_capacity(plan.n_slices);
    for (m, (ph, p)) in phasors.iter().zip(pilots).enumerate() {
        let g = *ph.grid();
        if !g.same_as(&g0) {
            return Err(Error::GridMismatch(format!("slice {m} digitized on a different grid")));
        }
        let mixed: Vec<Complex64> = ph
            .samples()
            .iter()
            .zip(carrier.samples())
            .map(|(z, c)| z * c.conj())
            .collect();
        let d = project(&mixed, &g, p.freq_hz - m as f64 * plan.slice_bw_hz);
        let want = 0.5 * p.amplitude * channels[m].lo_amplitude * c_amp;
        if !(d.norm() > PILOT_DETECT_FLOOR * want) {
            return Err(Error::Calibration(format!(
                "pilot of slice {m} detected at {:.1} dB of its expected amplitude",
                20.0 * (d.norm() / want).log10()
            )));
        }
        offsets.push(wrap_phase(phi0 + p.phase_rad - d.arg()));
    }
    Ok(PhaseCorrection {
        offsets_rad: offsets,
        source: CorrectionSource::Pilot,
    })
}

/// Optical and electrical receiver settings for one acquisition.
#[derive(Debug, Clone)]
pub struct Receiver<'a> {
    pub plan: FrequencyPlan,
    pub lo_bw_hz: f64,
    pub clock: &'a ClockModel,
    pub bits: Bits,
    /// Reference-line amplitudes, reported to the reconstruction.
    pub lo_amplitudes: Vec<f64>,
}

/// Slice the modulated field, beat each slice against its comb line,
/// digitize the photocurrents and the line power monitors.
pub fn acquire(modulated: &Waveform, comb: &Waveform, rx: &Receiver<'_>) -> Result<Vec<SliceChannel>> {
    rx.clock.check_nyquist(&rx.plan, rx.lo_bw_hz)?;
    if rx.lo_amplitudes.len() != rx.plan.n_slices {
        return Err(config_err!(
            "{} reference amplitudes for {} slices",
            rx.lo_amplitudes.len(),
            rx.plan.n_slices
        ));
    }
    let grid = *modulated.grid();
    let instants = rx.clock.instants(&grid)?;
    let slices = slice_all(modulated, &rx.plan)?;
    let lines = isolate_all_lo_lines(comb, &rx.plan, rx.lo_bw_hz)?;
    slices
        .iter()
        .zip(lines)
        .enumerate()
        .map(|(m, (s, (line, monitor)))| {
            let i = balanced_detect(s, &line)?.real_part();
            let mut got = sample_records(&grid, &[&i, &monitor], &instants)?;
            let mon = got.pop().unwrap();
            let d = DigitizedSlice {
                slice_index: m,
                samples: got.pop().unwrap(),
                period_s: 1.0 / rx.clock.nominal_rate_hz,
                instants: instants.clone(),
            };
            Ok(SliceChannel {
                slice_index: m,
                digitized: quantize(&d, rx.bits)?,
                lo_offset_hz: rx.plan.lo_freq(m),
                rin_monitor: Some(mon),
                lo_amplitude: rx.lo_amplitudes[m],
            })
        })
        .collect()
}
