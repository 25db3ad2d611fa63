//! Optical front end: comb synthesis, carrier modulation, spectral slicing,
//! reference-line isolation and balanced heterodyne detection.
//!
//! Everything is a complex envelope referenced to the modulated carrier,
//! which sits at envelope frequency 0. With slice width `f_r` (the comb
//! repetition rate) and guard `f_Δ`, slice `m` covers
//! `[m·f_r − f_Δ, (m+1)·f_r − f_Δ)` and is heterodyned against the comb line
//! at `m·f_r − 2f_Δ`, so every beat note lands at a positive frequency of at
//! least `f_Δ`.

use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::noise::PhasePath;
use crate::sigkit::{brickwall_bank, brickwall_filter, check_grids, BandMask, TimeGrid, WaveKind, Waveform};

/// Slice and guard-band bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPlan {
    pub n_slices: usize,
    /// Slice width, equal to the comb repetition rate.
    pub slice_bw_hz: f64,
    pub guard_hz: f64,
}

impl FrequencyPlan {
    pub fn new(n_slices: usize, slice_bw_hz: f64, guard_hz: f64) -> Result<Self> {
        let p = Self {
            n_slices,
            slice_bw_hz,
            guard_hz,
        };
        p.validate()?;
        Ok(p)
    }

    /// Four 30 GHz slices with a 2 GHz guard.
    pub fn reference() -> Self {
        Self {
            n_slices: 4,
            slice_bw_hz: 30e9,
            guard_hz: 2e9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_slices < 1 {
            return Err(config_err!("n_slices must be >= 1"));
        }
        if !(self.slice_bw_hz > 0.0) {
            return Err(config_err!("slice_bw must be positive"));
        }
        if !(self.guard_hz > 0.0 && self.guard_hz < self.slice_bw_hz / 4.0) {
            return Err(config_err!(
                "guard must satisfy 0 < guard < slice_bw/4 ({} Hz), got {} Hz",
                self.slice_bw_hz / 4.0,
                self.guard_hz
            ));
        }
        Ok(())
    }

    fn check_slice(&self, m: usize) -> Result<()> {
        if m >= self.n_slices {
            return Err(Error::Range(format!(
                "slice {m} does not exist in a {}-slice plan",
                self.n_slices
            )));
        }
        Ok(())
    }

    pub fn slice_band(&self, m: usize) -> Result<BandMask> {
        self.check_slice(m)?;
        let lo = m as f64 * self.slice_bw_hz - self.guard_hz;
        BandMask::new(lo, lo + self.slice_bw_hz)
    }

    /// Envelope frequency of the reference line for slice `m`.
    pub fn lo_freq(&self, m: usize) -> f64 {
        m as f64 * self.slice_bw_hz - 2.0 * self.guard_hz
    }

    /// Union of all slices: `[−f_Δ, M·f_r − f_Δ)`.
    pub fn sliced_band(&self) -> BandMask {
        BandMask {
            f_lo: -self.guard_hz,
            f_hi: self.n_slices as f64 * self.slice_bw_hz - self.guard_hz,
        }
    }

    /// Slice holding the upper sideband of a tone at `f`:
    /// `floor((f + f_Δ) / f_r)`, or `None` outside the sliced band.
    pub fn slice_of(&self, f: f64) -> Option<usize> {
        if !self.sliced_band().contains(f) {
            return None;
        }
        let m = ((f + self.guard_hz) / self.slice_bw_hz).floor() as usize;
        (m < self.n_slices).then_some(m)
    }

    /// Default width of the reference-line isolation filter: `2·f_Δ`, which
    /// keeps every signal/reference beat at a strictly positive frequency.
    pub fn default_lo_bw(&self) -> f64 {
        2.0 * self.guard_hz
    }

    /// Isolation band for the reference line of slice `m`.
    pub fn lo_band(&self, m: usize, lo_bw_hz: f64) -> Result<BandMask> {
        self.check_slice(m)?;
        if !(lo_bw_hz > 0.0 && lo_bw_hz <= self.slice_bw_hz) {
            return Err(config_err!(
                "reference isolation bandwidth must be in (0, slice_bw], got {lo_bw_hz} Hz"
            ));
        }
        let c = self.lo_freq(m);
        BandMask::new(c - 0.5 * lo_bw_hz, c + 0.5 * lo_bw_hz)
    }

    /// Highest beat frequency a slice can produce with a reference filter
    /// of width `lo_bw_hz`.
    pub fn max_beat_hz(&self, lo_bw_hz: f64) -> f64 {
        self.slice_bw_hz + self.guard_hz + 0.5 * lo_bw_hz
    }
}

/// Line structure of the mode-locked laser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombSpec {
    pub rep_rate_hz: f64,
    /// 1-based index of the line that carries no timing-jitter phase.
    pub center_index: usize,
    /// Envelope frequency of the center line.
    pub center_offset_hz: f64,
    pub amplitudes: Vec<f64>,
    pub static_phases_rad: Vec<f64>,
}

impl CombSpec {
    /// One flat, zero-phase line per slice, with the center line serving
    /// slice 0 so that line `n` is the reference of slice `n − 1`.
    pub fn for_plan(plan: &FrequencyPlan) -> Self {
        let n = plan.n_slices;
        Self {
            rep_rate_hz: plan.slice_bw_hz,
            center_index: 1,
            center_offset_hz: plan.lo_freq(0),
            amplitudes: vec![1.0; n],
            static_phases_rad: vec![0.0; n],
        }
    }

    /// Replace the static phases by draws uniform in `[−π, π)`.
    pub fn with_random_phases(mut self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in &mut self.static_phases_rad {
            *p = rng.random_range(-PI..PI);
        }
        self
    }

    pub fn n_lines(&self) -> usize {
        self.amplitudes.len()
    }

    /// Envelope frequency of 1-based line `n`.
    pub fn line_freq(&self, n: usize) -> f64 {
        self.center_offset_hz + (n as f64 - self.center_index as f64) * self.rep_rate_hz
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_lines();
        if n < 1 {
            return Err(config_err!("a comb needs at least one line"));
        }
        if self.static_phases_rad.len() != n {
            return Err(config_err!(
                "{} static phases for {} comb lines",
                self.static_phases_rad.len(),
                n
            ));
        }
        if !(1..=n).contains(&self.center_index) {
            return Err(config_err!("center index {} outside 1..={n}", self.center_index));
        }
        if let Some(a) = self.amplitudes.iter().find(|a| !(**a > 0.0)) {
            return Err(config_err!("comb amplitudes must be positive, got {a}"));
        }
        if !(self.rep_rate_hz > 0.0) {
            return Err(config_err!("repetition rate must be positive"));
        }
        Ok(())
    }
}

/// Electro-optic transfer of the modulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transducer {
    /// Ideal amplitude modulation `1 + v(t)`.
    Linear,
    /// Quadrature-biased Mach–Zehnder field transfer `√2·cos(π/4 + v(t))`,
    /// normalized so its small-signal slope matches the linear mode.
    Mzm,
}

/// A sinusoidal drive tone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToneSpec {
    pub freq_hz: f64,
    /// Modulation index (for the MZM, the drive swing in radians of optical
    /// phase, a fraction of the half-wave swing).
    pub amplitude: f64,
    pub phase_rad: f64,
    pub transducer: Transducer,
}

impl ToneSpec {
    pub fn linear(freq_hz: f64, amplitude: f64) -> Self {
        Self {
            freq_hz,
            amplitude,
            phase_rad: 0.0,
            transducer: Transducer::Linear,
        }
    }

    /// Check the tone against a frequency plan: the upper sideband must fall
    /// inside the sliced band.
    pub fn validate(&self, plan: &FrequencyPlan) -> Result<()> {
        let top = plan.sliced_band().f_hi;
        if !(self.freq_hz > 0.0 && self.freq_hz < top) {
            return Err(config_err!(
                "tone frequency must lie in (0, {top}) Hz, got {} Hz",
                self.freq_hz
            ));
        }
        if self.transducer == Transducer::Mzm && !(self.amplitude > 0.0 && self.amplitude < 1.0) {
            return Err(config_err!(
                "MZM drive amplitude must be in (0, 1), got {}",
                self.amplitude
            ));
        }
        Ok(())
    }
}

fn check_path(path: &PhasePath, grid: &TimeGrid, what: &str) -> Result<()> {
    check_grids(path.grid(), grid).map_err(|e| Error::GridMismatch(format!("{what}: {e}")))
}

/// Mode-locked laser field:
/// `e^{jθ_c(t)} Σ_n E_n e^{j[2π(f_c + (n−n_c)f_r)t + (n−n_c)·2πf_r·Δt_r(t) + φ_n]}`.
pub fn synthesize_comb(
    spec: &CombSpec,
    theta_c: &PhasePath,
    delta_t_r: &[f64],
    grid: TimeGrid,
) -> Result<Waveform> {
    spec.validate()?;
    check_path(theta_c, &grid, "correlated comb phase")?;
    if delta_t_r.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "{} jitter samples on a {}-point grid",
            delta_t_r.len(),
            grid.len()
        )));
    }
    let nyq = grid.nyquist();
    for n in 1..=spec.n_lines() {
        let f = spec.line_freq(n);
        if !(f > -nyq && f <= nyq) {
            return Err(config_err!(
                "comb line {n} at {f:e} Hz is outside the representable band +/-{nyq:e} Hz"
            ));
        }
    }
    let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
    let w_r = 2.0 * PI * spec.rep_rate_hz;
    for n in 1..=spec.n_lines() {
        let order = n as f64 - spec.center_index as f64;
        let f = spec.line_freq(n);
        let amp = spec.amplitudes[n - 1];
        let phi = spec.static_phases_rad[n - 1];
        let jitter = order != 0.0 && delta_t_r.iter().any(|d| *d != 0.0);
        for ((k, acc), c) in out.iter_mut().enumerate().zip(grid.cycles_all(f)) {
            let mut ph = 2.0 * PI * c + phi;
            if jitter {
                ph += order * w_r * delta_t_r[k];
            }
            *acc += Complex64::from_polar(amp, ph);
        }
    }
    if !theta_c.is_zero() {
        for (acc, &th) in out.iter_mut().zip(theta_c.phase()) {
            *acc *= Complex64::from_polar(1.0, th);
        }
    }
    Waveform::envelope(grid, out)
}

/// Carrier modulated by the sum of `tones`, all of which must share one
/// transducer and sit on grid bins.
pub fn modulate_tones(theta_0: &PhasePath, tones: &[ToneSpec], grid: TimeGrid) -> Result<Waveform> {
    check_path(theta_0, &grid, "carrier phase")?;
    let transducer = tones.first().map_or(Transducer::Linear, |t| t.transducer);
    if tones.iter().any(|t| t.transducer != transducer) {
        return Err(config_err!("all tones of one modulation must share a transducer"));
    }
    if let Some(t) = tones.iter().find(|t| grid.on_bin(t.freq_hz).is_none()) {
        return Err(config_err!(
            "tone at {} Hz is not on a grid bin (bin spacing {} Hz)",
            t.freq_hz,
            grid.df()
        ));
    }
    let mut drive = vec![0.0; grid.len()];
    for t in tones {
        for (d, c) in drive.iter_mut().zip(grid.cycles_all(t.freq_hz)) {
            *d += t.amplitude * (2.0 * PI * c + t.phase_rad).cos();
        }
    }
    let samples = drive
        .iter()
        .zip(theta_0.phase())
        .map(|(&v, &th)| {
            let field = match transducer {
                Transducer::Linear => 1.0 + v,
                Transducer::Mzm => SQRT_2 * (FRAC_PI_4 + v).cos(),
            };
            Complex64::from_polar(field, th)
        })
        .collect();
    Waveform::envelope(grid, samples)
}

/// Carrier with phase noise `θ_0` modulated by a single tone.
pub fn modulate_carrier(theta_0: &PhasePath, tone: &ToneSpec, grid: TimeGrid) -> Result<Waveform> {
    modulate_tones(theta_0, std::slice::from_ref(tone), grid)
}

/// Spectral slice `m` of the modulated field.
pub fn slice_signal(modulated: &Waveform, plan: &FrequencyPlan, m: usize) -> Result<Waveform> {
    brickwall_filter(modulated, plan.slice_band(m)?)
}

/// Every slice of the modulated field, sharing one forward transform.
pub fn slice_all(modulated: &Waveform, plan: &FrequencyPlan) -> Result<Vec<Waveform>> {
    let masks = (0..plan.n_slices)
        .map(|m| plan.slice_band(m))
        .collect::<Result<Vec<_>>>()?;
    brickwall_bank(modulated, &masks)
}

fn monitor_of(line: &Waveform) -> Vec<f64> {
    line.samples().iter().map(|c| c.norm_sqr()).collect()
}

fn check_line(filtered: &Waveform, comb: &Waveform, m: usize) -> Result<()> {
    let total = comb.power();
    if !(filtered.power() > 1e-9 * total) {
        return Err(config_err!(
            "no comb line inside the reference band of slice {m}"
        ));
    }
    Ok(())
}

/// Filter the reference line of slice `m` out of the comb and report its
/// instantaneous power `|E(t)|²`.
pub fn isolate_lo_line(
    comb: &Waveform,
    plan: &FrequencyPlan,
    m: usize,
    lo_bw_hz: f64,
) -> Result<(Waveform, Vec<f64>)> {
    let line = brickwall_filter(comb, plan.lo_band(m, lo_bw_hz)?)?;
    check_line(&line, comb, m)?;
    let monitor = monitor_of(&line);
    Ok((line, monitor))
}

/// [`isolate_lo_line`] for every slice, sharing one forward transform.
pub fn isolate_all_lo_lines(
    comb: &Waveform,
    plan: &FrequencyPlan,
    lo_bw_hz: f64,
) -> Result<Vec<(Waveform, Vec<f64>)>> {
    let masks = (0..plan.n_slices)
        .map(|m| plan.lo_band(m, lo_bw_hz))
        .collect::<Result<Vec<_>>>()?;
    brickwall_bank(comb, &masks)?
        .into_iter()
        .enumerate()
        .map(|(m, line)| {
            check_line(&line, comb, m)?;
            let monitor = monitor_of(&line);
            Ok((line, monitor))
        })
        .collect()
}

/// Balanced-detector photocurrent `i = ½|a_s + a_L|² − ½|a_s − a_L|²
/// = 2·Re{a_s·a_L*}`, unit responsivity, no detector noise.
pub fn balanced_detect(signal_slice: &Waveform, lo_line: &Waveform) -> Result<Waveform> {
    check_grids(signal_slice.grid(), lo_line.grid())?;
    let i: Vec<f64> = signal_slice
        .samples()
        .iter()
        .zip(lo_line.samples())
        .map(|(s, l)| 2.0 * (s * l.conj()).re)
        .collect();
    let w = Waveform::real(*signal_slice.grid(), &i)?;
    debug_assert_eq!(w.kind(), WaveKind::Real);
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::wiener_path;
    use crate::sigkit::hilbert_analytic;

    fn desk_grid() -> TimeGrid {
        // 0.3 ps step, 24 ns record: 1 GHz and 0.5 GHz tones sit on bins.
        TimeGrid::new(0.3e-12, 80_000).unwrap()
    }

    fn bin_amp(w: &Waveform, f: f64) -> Complex64 {
        let g = w.grid();
        let b = g.on_bin(f).unwrap();
        w.spectrum()[g.bin_index(b)] / g.len() as f64
    }

    fn zero_jitter(g: &TimeGrid) -> Vec<f64> {
        vec![0.0; g.len()]
    }

    #[test]
    fn plan_geometry() {
        let p = FrequencyPlan::reference();
        let s3 = p.slice_band(3).unwrap();
        assert_eq!((s3.f_lo, s3.f_hi), (88e9, 118e9));
        let s0 = p.slice_band(0).unwrap();
        assert_eq!((s0.f_lo, s0.f_hi), (-2e9, 28e9));
        assert_eq!(p.lo_freq(3), 86e9);
        assert_eq!(p.slice_of(100e9), Some(3));
        assert_eq!(p.slice_of(0.0), Some(0));
        assert_eq!(p.slice_of(87.9e9), Some(2));
        assert_eq!(p.slice_of(118e9), None);
        assert!(p.slice_band(4).is_err());
        assert!(FrequencyPlan::new(4, 30e9, 7.5e9).is_err());
        assert!(FrequencyPlan::new(0, 30e9, 2e9).is_err());
    }

    #[test]
    fn single_line_comb_is_a_tone() {
        let g = desk_grid();
        let spec = CombSpec {
            rep_rate_hz: 30e9,
            center_index: 1,
            center_offset_hz: -4e9,
            amplitudes: vec![0.7],
            static_phases_rad: vec![0.4],
        };
        let w = synthesize_comb(&spec, &PhasePath::zero(g), &zero_jitter(&g), g).unwrap();
        let want: Vec<_> = g.tone(-4e9).into_iter().map(|c| c * Complex64::from_polar(0.7, 0.4)).collect();
        let err = w.samples().iter().zip(&want).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn flat_comb_is_a_pulse_train() {
        let g = desk_grid();
        let spec = CombSpec {
            rep_rate_hz: 30e9,
            center_index: 3,
            center_offset_hz: 0.0,
            amplitudes: vec![1.0; 5],
            static_phases_rad: vec![0.0; 5],
        };
        let w = synthesize_comb(&spec, &PhasePath::zero(g), &zero_jitter(&g), g).unwrap();
        let spec_w = w.spectrum();
        let strong: Vec<usize> = (0..g.len()).filter(|&k| spec_w[k].norm() > 1e-6 * g.len() as f64).collect();
        assert_eq!(strong.len(), 5);
        for &k in &strong {
            assert!((spec_w[k].norm() / g.len() as f64 - 1.0).abs() < 1e-12);
        }
        // Peaks of |E|² = 25 at multiples of 1/f_r; 1000 steps is nine periods.
        for k in [0, 1000, 2000] {
            assert!((w.samples()[k].norm_sqr() - 25.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_timing_offset_rotates_line_phases() {
        let g = desk_grid();
        let spec = CombSpec {
            rep_rate_hz: 30e9,
            center_index: 2,
            center_offset_hz: 10e9,
            amplitudes: vec![1.0; 3],
            static_phases_rad: vec![0.1, -0.2, 0.3],
        };
        let tau = 1.3e-12;
        let clean = synthesize_comb(&spec, &PhasePath::zero(g), &zero_jitter(&g), g).unwrap();
        let shifted = synthesize_comb(&spec, &PhasePath::zero(g), &vec![tau; g.len()], g).unwrap();
        for n in 1..=3 {
            let f = spec.line_freq(n);
            let d = (bin_amp(&shifted, f) / bin_amp(&clean, f)).arg();
            let want = (n as f64 - 2.0) * 2.0 * PI * 30e9 * tau;
            assert!((d - want).abs() < 1e-9, "line {n}: {d} vs {want}");
        }
    }

    #[test]
    fn comb_outside_band_is_rejected() {
        let g = TimeGrid::new(10e-12, 1000).unwrap();
        let spec = CombSpec::for_plan(&FrequencyPlan::reference());
        assert!(synthesize_comb(&spec, &PhasePath::zero(g), &zero_jitter(&g), g).is_err());
    }

    #[test]
    fn unmodulated_carrier() {
        let g = desk_grid();
        let w = modulate_carrier(&PhasePath::zero(g), &ToneSpec::linear(10e9, 0.0), g).unwrap();
        assert!(w.samples().iter().all(|c| (c - 1.0).norm() < 1e-15));
    }

    #[test]
    fn am_sidebands() {
        let g = desk_grid();
        let w = modulate_carrier(&PhasePath::zero(g), &ToneSpec::linear(10e9, 0.2), g).unwrap();
        assert!((bin_amp(&w, 0.0).norm() - 1.0).abs() < 1e-12);
        assert!((bin_amp(&w, 10e9).norm() - 0.1).abs() < 1e-12);
        assert!((bin_amp(&w, -10e9).norm() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn mzm_matches_linear_at_small_drive() {
        // √2·cos(π/4 + a·cos ωt) = cos(x) − sin(x), x = a·cos ωt. Expanding in
        // Bessel functions: fundamental sideband = J1(a), third = J3(a).
        let g = desk_grid();
        let a = 0.05;
        let lin = modulate_carrier(&PhasePath::zero(g), &ToneSpec::linear(10e9, a), g).unwrap();
        let mzm_tone = ToneSpec {
            transducer: Transducer::Mzm,
            ..ToneSpec::linear(10e9, a)
        };
        let mzm = modulate_carrier(&PhasePath::zero(g), &mzm_tone, g).unwrap();
        let l1 = bin_amp(&lin, 10e9).norm();
        let m1 = bin_amp(&mzm, 10e9).norm();
        assert!((m1 / l1 - 1.0).abs() < 1e-3);
        let j1 = a / 2.0 - a.powi(3) / 16.0;
        assert!((m1 - j1).abs() < 1e-6);
        let carrier = bin_amp(&mzm, 0.0).norm();
        let third = bin_amp(&mzm, 30e9).norm();
        assert!(20.0 * (third / carrier).log10() < -60.0);
    }

    #[test]
    fn off_bin_tone_is_rejected() {
        let g = desk_grid();
        assert!(modulate_carrier(&PhasePath::zero(g), &ToneSpec::linear(10.01e9, 0.1), g).is_err());
    }

    #[test]
    fn tone_lands_in_fourth_slice_and_carrier_in_first() {
        let g = desk_grid();
        let plan = FrequencyPlan::reference();
        let w = modulate_carrier(&PhasePath::zero(g), &ToneSpec::linear(100e9, 0.2), g).unwrap();
        let slices = slice_all(&w, &plan).unwrap();
        for (m, s) in slices.iter().enumerate() {
            let side = bin_amp(s, 100e9).norm();
            let carrier = bin_amp(s, 0.0).norm();
            if m == 3 {
                assert!((side - 0.1).abs() < 1e-12);
            } else {
                assert!(side < 1e-12);
            }
            if m == 0 {
                assert!((carrier - 1.0).abs() < 1e-12);
            } else {
                assert!(carrier < 1e-12);
            }
        }
    }

    #[test]
    fn slices_partition_the_sliced_band() {
        let g = desk_grid();
        let plan = FrequencyPlan::reference();
        let th = wiener_path(1e9, g, 3).unwrap();
        let w = modulate_carrier(&th, &ToneSpec::linear(41e9, 0.5), g).unwrap();
        let mut sum = Waveform::zeros(g, WaveKind::Envelope);
        for s in slice_all(&w, &plan).unwrap() {
            sum = sum.add(&s).unwrap();
        }
        let whole = brickwall_filter(&w, plan.sliced_band()).unwrap();
        let num: f64 = sum.samples().iter().zip(whole.samples()).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = whole.samples().iter().map(|b| b.norm_sqr()).sum();
        assert!((num / den).sqrt() < 1e-12);
        assert_eq!(slice_signal(&w, &plan, 1).unwrap(), slice_all(&w, &plan).unwrap()[1]);
        assert!(slice_signal(&w, &plan, 4).is_err());
    }

    #[test]
    fn noiseless_reference_line_is_pure() {
        let g = desk_grid();
        let plan = FrequencyPlan::reference();
        let mut spec = CombSpec::for_plan(&plan);
        spec.amplitudes = vec![1.0, 1.5, 0.8, 1.2];
        let comb = synthesize_comb(&spec, &PhasePath::zero(g), &zero_jitter(&g), g).unwrap();
        for m in 0..4 {
            let (line, mon) = isolate_lo_line(&comb, &plan, m, plan.slice_bw_hz).unwrap();
            let e2 = spec.amplitudes[m].powi(2);
            assert!(mon.iter().all(|&p| (p - e2).abs() < 1e-10));
            assert!((bin_amp(&line, plan.lo_freq(m)).norm() - spec.amplitudes[m]).abs() < 1e-12);
        }
    }

    #[test]
    fn adjacent_reference_filters_are_disjoint() {
        let g = desk_grid();
        let plan = FrequencyPlan::reference();
        let th = wiener_path(10e6, g, 1).unwrap();
        let comb = synthesize_comb(&CombSpec::for_plan(&plan), &th, &zero_jitter(&g), g).unwrap();
        let lines = isolate_all_lo_lines(&comb, &plan, plan.slice_bw_hz).unwrap();
        let a = lines[1].0.spectrum();
        let b = lines[2].0.spectrum();
        let cross: f64 = a.iter().zip(&b).map(|(x, y)| (x * y.conj()).norm()).sum();
        let pa: f64 = a.iter().map(|x| x.norm_sqr()).sum();
        assert!(cross / pa < 1e-12);
    }

    #[test]
    fn missing_line_is_reported() {
        let g = desk_grid();
        let plan = FrequencyPlan::reference();
        let mut spec = CombSpec::for_plan(&plan);
        spec.center_offset_hz += 15e9;
        let comb = synthesize_comb(&spec, &PhasePath::zero(g), &zero_jitter(&g), g).unwrap();
        assert!(isolate_lo_line(&comb, &plan, 0, plan.default_lo_bw()).is_err());
    }

    #[test]
    fn truncated_noisy_line_shows_intensity_noise() {
        let g = desk_grid();
        let plan = FrequencyPlan::reference();
        let th = wiener_path(10e6, g, 21).unwrap();
        let comb = synthesize_comb(&CombSpec::for_plan(&plan), &th, &zero_jitter(&g), g).unwrap();
        let (_, mon) = isolate_lo_line(&comb, &plan, 2, plan.slice_bw_hz).unwrap();
        let mean = mon.iter().sum::<f64>() / mon.len() as f64;
        let var = mon.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / mon.len() as f64;
        assert!(var > 1e-8);
        assert!(mean < 1.0);
    }

    /// Expected power kept by a band of bins `[lo, hi)` around a unit line
    /// carrying Wiener phase noise, computed from the exact lag covariance
    /// `E[e^{j(θ_k − θ_l)}] = exp(−πΔν·dt·|k−l|)` of the finite record.
    fn expected_kept_power(n: usize, dt: f64, lw: f64, lo: i64, hi: i64) -> f64 {
        let rho = (-PI * lw * dt).exp();
        let mut total = 0.0;
        for b in lo..hi {
            let mut s = n as f64;
            let mut r = 1.0;
            for d in 1..n {
                r *= rho;
                s += 2.0 * (n - d) as f64 * r * (2.0 * PI * b as f64 * d as f64 / n as f64).cos();
            }
            total += s;
        }
        total / (n as f64 * n as f64)
    }

    #[test]
    fn monitor_deficit_matches_lorentzian_tail_oracle() {
        let g = TimeGrid::new(1e-12, 2048).unwrap();
        let lw = 200e6;
        let plan = FrequencyPlan::new(1, 60e9, 4e9).unwrap();
        let spec = CombSpec {
            center_offset_hz: 0.0,
            ..CombSpec::for_plan(&plan)
        };
        let bw = 8e9;
        let half_bins = (0.5 * bw * g.duration()).round() as i64;
        let want = expected_kept_power(g.len(), g.dt(), lw, -half_bins, half_bins);
        let runs = 200;
        let kept: Vec<f64> = (0..runs)
            .map(|r| {
                let th = wiener_path(lw, g, 1000 + r).unwrap();
                let comb = synthesize_comb(&spec, &th, &zero_jitter(&g), g).unwrap();
                let line = brickwall_filter(&comb, BandMask::new(-0.5 * bw, 0.5 * bw).unwrap()).unwrap();
                line.power()
            })
            .collect();
        let deficit: Vec<f64> = kept.iter().map(|p| 1.0 - p).collect();
        let mean = deficit.iter().sum::<f64>() / runs as f64;
        let sd = (deficit.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (runs - 1) as f64).sqrt();
        let target = 1.0 - want;
        // The continuous Lorentzian tail beyond ±bw/2 is of the same order.
        let lorentz = 2.0 * lw / (PI * bw);
        assert!(target > 0.5 * lorentz && target < 3.0 * lorentz);
        assert!((mean - target).abs() < 3.0 * sd / (runs as f64).sqrt(), "{mean} vs {target}");
    }

    #[test]
    fn detector_basics() {
        let g = TimeGrid::new(1e-3, 1000).unwrap();
        let ones = Waveform::envelope(g, vec![Complex64::new(1.0, 0.0); 1000]).unwrap();
        let i = balanced_detect(&ones, &ones).unwrap();
        assert!(i.samples().iter().all(|c| (c.re - 2.0).abs() < 1e-15));
        let j = Waveform::envelope(g, vec![Complex64::new(0.0, 1.0); 1000]).unwrap();
        let q = balanced_detect(&j, &ones).unwrap();
        assert!(q.samples().iter().all(|c| c.re.abs() < 1e-15));
        let beat = Waveform::envelope(g, g.tone(40.0)).unwrap();
        let b = balanced_detect(&beat, &ones).unwrap();
        for (k, t) in g.times().enumerate() {
            assert!((b.samples()[k].re - 2.0 * (2.0 * PI * 40.0 * t).cos()).abs() < 1e-12);
        }
        let zero = Waveform::zeros(g, WaveKind::Envelope);
        assert!(balanced_detect(&zero, &beat).unwrap().samples().iter().all(|c| c.re == 0.0));
        assert!(balanced_detect(&beat, &zero).unwrap().samples().iter().all(|c| c.re == 0.0));
        let other = TimeGrid::new(1e-3, 999).unwrap();
        assert!(balanced_detect(&Waveform::zeros(other, WaveKind::Envelope), &ones).is_err());
    }

    #[test]
    fn beats_at_slice_edges_stay_positive() {
        let g = desk_grid();
        let plan = FrequencyPlan::reference();
        let comb = synthesize_comb(&CombSpec::for_plan(&plan), &PhasePath::zero(g), &zero_jitter(&g), g).unwrap();
        let lines = isolate_all_lo_lines(&comb, &plan, plan.default_lo_bw()).unwrap();
        // Lowest and highest on-bin frequencies of slices 1 and 3.
        for (f, m) in [(28e9, 1usize), (57.5e9, 1), (88e9, 3), (117.5e9, 3)] {
            let w = modulate_carrier(&PhasePath::zero(g), &ToneSpec::linear(f, 0.2), g).unwrap();
            let s = slice_signal(&w, &plan, m).unwrap();
            let i = balanced_detect(&s, &lines[m].0).unwrap();
            let beat = f - plan.lo_freq(m);
            assert!(beat >= plan.guard_hz && beat <= plan.slice_bw_hz + plan.guard_hz);
            let a = hilbert_analytic(&i).unwrap();
            assert!((bin_amp(&a, beat).norm() - 0.2).abs() < 1e-10);
        }
    }
}
