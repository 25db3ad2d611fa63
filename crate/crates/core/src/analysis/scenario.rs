//! End-to-end single runs: noise paths, comb, modulation, acquisition,
//! reconstruction and NSR against the single-sideband reference.

use serde::{Deserialize, Serialize};

use crate::digitizer::{auto_rate, Bits, ClockModel};
use crate::dsp::{
    acquire, estimate_static_phases, pilot_tones, reconstruct, ssb_reference, CorrectionSource, PhaseCorrection,
    Receiver,
};
use crate::error::{config_err, Error, Result};
use crate::noise::{derive_seed, effective_record_jitter, path_to_jitter, wiener_path, NoiseSpec, PathRole, PhasePath, SourceFlags};
use crate::optics::{isolate_all_lo_lines, modulate_carrier, modulate_tones, synthesize_comb, CombSpec, FrequencyPlan, ToneSpec};
use crate::sigkit::{TimeGrid, Waveform};

use super::{measure_nsr, snr_electrical, snr_sliced, NSR_FLOOR_DB};

/// Static comb line phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StaticPhases {
    Explicit(Vec<f64>),
    /// Uniform in `[−π, π)`, drawn afresh for every run.
    Random,
}

/// Per-slice digitizer rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DigitizerRate {
    /// Largest integer decimation of the simulation rate that stays above
    /// 2.2 times the highest beat frequency.
    Auto,
    Hz(f64),
}

/// Fully resolved simulation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub grid: TimeGrid,
    pub plan: FrequencyPlan,
    /// Width of the reference-line isolation filter.
    pub lo_bw_hz: f64,
    pub noise: NoiseSpec,
    pub comb_amplitudes: Vec<f64>,
    pub static_phases: StaticPhases,
    pub tone: ToneSpec,
    pub rate: DigitizerRate,
    pub bits: Bits,
    pub rin_cancel: bool,
    pub correction: CorrectionSource,
    /// Amplitude of each calibration pilot when `correction` is `Pilot`.
    pub pilot_amplitude: f64,
    /// Fraction of the record dropped at each end before measuring the NSR.
    /// Phase paths are not periodic over the record, and their wrap-around
    /// step smears the isolated reference lines near the ends.
    pub edge_guard_fraction: f64,
}

/// Default [`Scenario::edge_guard_fraction`].
pub const DEFAULT_EDGE_GUARD: f64 = 0.05;

/// Step of both presets.
pub const PRESET_DT_S: f64 = 0.3e-12;
/// Desk record: 96 ns, the closest whole number of 0.3 ps steps to 0.1 μs
/// on which every multiple of 0.5 GHz is a bin.
pub const DESK_SAMPLES: usize = 320_000;
/// Full record of 3.3 μs.
pub const PAPER_SAMPLES: usize = 11_000_000;

impl Scenario {
    fn preset(n: usize) -> Self {
        let plan = FrequencyPlan::reference();
        let noise = NoiseSpec {
            enabled: SourceFlags {
                mll_rf: true,
                elec: true,
                ..SourceFlags::NONE
            },
            ..NoiseSpec::validation_defaults()
        };
        Self {
            grid: TimeGrid::new(PRESET_DT_S, n).expect("preset grid"),
            plan,
            lo_bw_hz: plan.default_lo_bw(),
            noise,
            comb_amplitudes: vec![1.0; plan.n_slices],
            static_phases: StaticPhases::Explicit(vec![0.0; plan.n_slices]),
            tone: ToneSpec::linear(100e9, 1.0),
            rate: DigitizerRate::Auto,
            bits: Bits::Ideal,
            rin_cancel: true,
            correction: CorrectionSource::Oracle,
            pilot_amplitude: 0.2,
            edge_guard_fraction: DEFAULT_EDGE_GUARD,
        }
    }

    /// 0.3 ps steps over 96 ns, comb timing and clock jitter enabled.
    pub fn desk() -> Self {
        Self::preset(DESK_SAMPLES)
    }

    /// 0.3 ps steps over 3.3 μs, comb timing and clock jitter enabled.
    pub fn paper() -> Self {
        Self::preset(PAPER_SAMPLES)
    }

    /// Same scenario with only the given sources enabled.
    pub fn with_sources(mut self, flags: SourceFlags) -> Self {
        self.noise.enabled = flags;
        self
    }

    pub fn with_tone_freq(&self, f_hz: f64) -> ToneSpec {
        ToneSpec {
            freq_hz: f_hz,
            ..self.tone
        }
    }

    pub fn digitizer_rate_hz(&self) -> Result<f64> {
        match self.rate {
            DigitizerRate::Auto => auto_rate(&self.plan, &self.grid, self.lo_bw_hz),
            DigitizerRate::Hz(r) => Ok(r),
        }
    }

    /// Check a tone frequency against the plan and the grid.
    pub fn check_freq(&self, f_hz: f64) -> Result<()> {
        self.with_tone_freq(f_hz).validate(&self.plan)?;
        if self.grid.on_bin(f_hz).is_none() {
            return Err(config_err!(
                "signal frequency {f_hz} Hz is not a multiple of the {} Hz bin spacing",
                self.grid.df()
            ));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        self.noise.validate()?;
        let m = self.plan.n_slices;
        if self.comb_amplitudes.len() != m {
            return Err(config_err!("{} comb amplitudes for {m} slices", self.comb_amplitudes.len()));
        }
        if let StaticPhases::Explicit(p) = &self.static_phases {
            if p.len() != m {
                return Err(config_err!("{} static phases for {m} slices", p.len()));
            }
        }
        self.comb(0).validate()?;
        self.plan.lo_band(0, self.lo_bw_hz)?;
        let lowest_line = self.plan.lo_freq(0) - 0.5 * self.lo_bw_hz;
        let top = self.plan.sliced_band().f_hi.max(self.plan.lo_freq(m - 1) + 0.5 * self.lo_bw_hz);
        if top >= self.grid.nyquist() || -lowest_line >= self.grid.nyquist() {
            return Err(config_err!(
                "simulation step {} s cannot represent the {} Hz optical band",
                self.grid.dt(),
                top
            ));
        }
        self.check_freq(self.tone.freq_hz)?;
        if self.correction == CorrectionSource::Pilot && !(self.pilot_amplitude > 0.0 && self.pilot_amplitude < 1.0) {
            return Err(config_err!("pilot amplitude must be in (0, 1)"));
        }
        if !(0.0..0.25).contains(&self.edge_guard_fraction) {
            return Err(config_err!(
                "edge guard fraction must be in [0, 0.25), got {}",
                self.edge_guard_fraction
            ));
        }
        let clock = ClockModel::ideal(self.digitizer_rate_hz()?, self.grid)?;
        clock.check_nyquist(&self.plan, self.lo_bw_hz)?;
        clock.check_record(&self.grid)?;
        Ok(())
    }

    /// Comb for one run; random static phases are seeded from `run_seed`.
    pub fn comb(&self, run_seed: u64) -> CombSpec {
        let base = CombSpec {
            amplitudes: self.comb_amplitudes.clone(),
            ..CombSpec::for_plan(&self.plan)
        };
        match &self.static_phases {
            StaticPhases::Explicit(p) => CombSpec {
                static_phases_rad: p.clone(),
                ..base
            },
            StaticPhases::Random => base.with_random_phases(derive_seed(run_seed, PathRole::CombPhases, 0, 0)),
        }
    }

    /// Comb timing jitter seen by a record-level measurement.
    pub fn effective_mll_jitter(&self) -> f64 {
        effective_record_jitter(
            self.noise.active_linewidth(PathRole::MllTiming),
            self.grid.duration(),
            self.plan.slice_bw_hz,
        )
    }

    /// Clock jitter seen by a record-level measurement.
    pub fn effective_elec_jitter(&self) -> f64 {
        let lw = self.noise.active_linewidth(PathRole::ElecClock);
        if lw == 0.0 {
            return 0.0;
        }
        effective_record_jitter(lw, self.grid.duration(), self.noise.elec_osc_freq_hz)
    }

    /// Closed-form NSR for the enabled timing sources at `f_hz`.
    pub fn analytic_nsr_db(&self, f_hz: f64) -> Result<f64> {
        let snr = snr_sliced(f_hz, &self.plan, self.effective_mll_jitter(), self.effective_elec_jitter())?;
        Ok((-snr).max(NSR_FLOOR_DB))
    }

    /// Closed-form NSR of an all-electrical converter with the same clock.
    pub fn electric_nsr_db(&self, f_hz: f64) -> Result<f64> {
        let dt_e = self.effective_elec_jitter();
        if dt_e == 0.0 {
            return Ok(NSR_FLOOR_DB);
        }
        Ok((-snr_electrical(f_hz, dt_e)?).max(NSR_FLOOR_DB))
    }

    /// Closed-form NSR with comb timing jitter alone.
    pub fn mll_nsr_db(&self, f_hz: f64) -> Result<f64> {
        let snr = snr_sliced(f_hz, &self.plan, self.effective_mll_jitter(), 0.0)?;
        Ok((-snr).max(NSR_FLOOR_DB))
    }

    /// Ground truth for a tone at `f_hz`: the noiseless modulated field kept
    /// over the sliced band, squared. Independent of the run seed.
    pub fn reference_signal(&self, f_hz: f64) -> Result<Vec<f64>> {
        let tone = self.with_tone_freq(f_hz);
        let clean = modulate_carrier(&PhasePath::zero(self.grid), &tone, self.grid)?;
        Ok(ssb_reference(&clean, &self.plan, self.grid)?.real_part())
    }

    /// Index range over which the NSR is measured.
    pub fn measured_range(&self) -> std::ops::Range<usize> {
        let n = self.grid.len();
        let g = (self.edge_guard_fraction * n as f64).floor() as usize;
        g..n - g
    }

    fn path(&self, role: PathRole, run_seed: u64, stream: u64) -> Result<PhasePath> {
        wiener_path(
            self.noise.active_linewidth(role),
            self.grid,
            derive_seed(run_seed, role, stream, 0),
        )
    }

    fn receiver<'a>(&self, clock: &'a ClockModel) -> Receiver<'a> {
        Receiver {
            plan: self.plan,
            lo_bw_hz: self.lo_bw_hz,
            clock,
            bits: self.bits,
            lo_amplitudes: self.comb_amplitudes.clone(),
        }
    }

    /// Pilot-tone calibration acquisition. Only the carrier and comb
    /// optical phase noise are present; they are common to all slices and
    /// drop out of the relative phase estimates.
    fn calibrate(&self, comb: &CombSpec, run_seed: u64) -> Result<PhaseCorrection> {
        let g = self.grid;
        let pilots = pilot_tones(&self.plan, self.pilot_amplitude);
        let carrier = self.path(PathRole::CarrierPhase, run_seed, 1)?;
        let theta_c = self.path(PathRole::MllOptical, run_seed, 1)?;
        let modulated = modulate_tones(&carrier, &pilots, g)?;
        let field = synthesize_comb(comb, &theta_c, &vec![0.0; g.len()], g)?;
        let clock = ClockModel::ideal(self.digitizer_rate_hz()?, g)?;
        let channels = acquire(&modulated, &field, &self.receiver(&clock))?;
        estimate_static_phases(&channels, &self.plan, &pilots)
    }

    /// Noisy comb field of a run.
    fn comb_field(&self, comb: &CombSpec, run_seed: u64) -> Result<Waveform> {
        let theta_c = self.path(PathRole::MllOptical, run_seed, 0)?;
        let timing = self.path(PathRole::MllTiming, run_seed, 0)?;
        let dt_r = path_to_jitter(&timing, self.plan.slice_bw_hz)?;
        synthesize_comb(comb, &theta_c, &dt_r, self.grid)
    }

    /// Power of the isolated reference lines of run `run_seed`, averaged
    /// over the slices, on the simulation grid.
    pub fn reference_line_power(&self, run_seed: u64) -> Result<Vec<f64>> {
        let field = self.comb_field(&self.comb(run_seed), run_seed)?;
        let lines = isolate_all_lo_lines(&field, &self.plan, self.lo_bw_hz)?;
        let mut p = vec![0.0; self.grid.len()];
        for (_, mon) in &lines {
            p.iter_mut().zip(mon).for_each(|(a, b)| *a += b / lines.len() as f64);
        }
        Ok(p)
    }

    /// One run against a precomputed reference (see [`Self::reference_signal`]).
    pub fn run_with_reference(&self, f_hz: f64, run_seed: u64, reference: &[f64]) -> Result<SimOutcome> {
        let g = self.grid;
        let tone = self.with_tone_freq(f_hz);
        let comb = self.comb(run_seed);

        let carrier = self.path(PathRole::CarrierPhase, run_seed, 0)?;
        let clock_phase = self.path(PathRole::ElecClock, run_seed, 0)?;

        let modulated = modulate_carrier(&carrier, &tone, g)?;
        let field = self.comb_field(&comb, run_seed)?;
        let osc = if self.noise.elec_osc_freq_hz > 0.0 { self.noise.elec_osc_freq_hz } else { 1.0 };
        let clock = ClockModel::new(self.digitizer_rate_hz()?, osc, &clock_phase)?;
        let channels = acquire(&modulated, &field, &self.receiver(&clock))?;

        let correction = match self.correction {
            CorrectionSource::Oracle => PhaseCorrection::oracle(&comb.static_phases_rad),
            CorrectionSource::Pilot => self.calibrate(&comb, run_seed)?,
        };
        let recon = reconstruct(&channels, &self.plan, &correction, self.rin_cancel, g)?;
        let r = self.measured_range();
        if reference.len() != g.len() {
            return Err(Error::GridMismatch(format!(
                "{} reference samples on a {}-point grid",
                reference.len(),
                g.len()
            )));
        }
        let nsr_db = measure_nsr(&recon.signal[r.clone()], &reference[r])?;
        Ok(SimOutcome {
            freq_hz: f_hz,
            seed: run_seed,
            nsr_db,
            signal: recon.signal,
            static_phases_rad: comb.static_phases_rad,
            correction,
        })
    }
}

/// Result of one end-to-end run.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub freq_hz: f64,
    pub seed: u64,
    pub nsr_db: f64,
    /// Recovered signal on the simulation grid.
    pub signal: Vec<f64>,
    /// True static phases of the comb used in the run.
    pub static_phases_rad: Vec<f64>,
    pub correction: PhaseCorrection,
}

/// Run the whole chain once for a tone at `f_hz`. Returns the outcome and
/// the reference it was measured against.
pub fn simulate_once(sc: &Scenario, f_hz: f64, seed: u64) -> Result<(SimOutcome, Vec<f64>)> {
    sc.validate()?;
    sc.check_freq(f_hz)?;
    let reference = sc.reference_signal(f_hz)?;
    let out = sc.run_with_reference(f_hz, seed, &reference)?;
    Ok((out, reference))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::wrap_phase;

    fn small() -> Scenario {
        // 24 ns desk-like record to keep unit tests quick.
        Scenario {
            grid: TimeGrid::new(PRESET_DT_S, 80_000).unwrap(),
            ..Scenario::desk()
        }
    }

    #[test]
    fn presets_validate() {
        Scenario::desk().validate().unwrap();
        let d = Scenario::desk();
        assert!((d.digitizer_rate_hz().unwrap() - d.grid.sample_rate() / 40.0).abs() < 1.0);
        assert_eq!(Scenario::paper().grid.len(), PAPER_SAMPLES);
    }

    #[test]
    fn noiseless_run_hits_the_floor() {
        let sc = small().with_sources(SourceFlags::NONE);
        let (out, _) = simulate_once(&sc, 100e9, 1).unwrap();
        assert!(out.nsr_db <= -120.0, "{}", out.nsr_db);
    }

    #[test]
    fn random_phases_with_pilot_calibration() {
        let mut sc = small().with_sources(SourceFlags::NONE);
        sc.static_phases = StaticPhases::Random;
        sc.correction = CorrectionSource::Pilot;
        let (out, _) = simulate_once(&sc, 70e9, 11).unwrap();
        for (e, p) in out.correction.offsets_rad.iter().zip(&out.static_phases_rad) {
            assert!(wrap_phase(e - p).abs() < 1e-6);
        }
        assert!(out.nsr_db <= -120.0, "{}", out.nsr_db);
    }

    #[test]
    fn pilot_relative_phases_survive_carrier_noise() {
        let mut sc = small().with_sources(SourceFlags {
            carrier: true,
            ..SourceFlags::NONE
        });
        sc.static_phases = StaticPhases::Random;
        sc.correction = CorrectionSource::Pilot;
        for seed in 0..5 {
            let comb = sc.comb(seed);
            let est = sc.calibrate(&comb, seed).unwrap();
            let p = &comb.static_phases_rad;
            let e = &est.offsets_rad;
            for m in 1..4 {
                let err = wrap_phase((e[m] - e[0]) - (p[m] - p[0]));
                assert!(err.abs() < 0.05, "seed {seed} slice {m}: {err}");
            }
        }
    }

    #[test]
    fn validation_rejects_bad_settings() {
        let mut sc = small();
        sc.tone.freq_hz = 100.01e9;
        assert!(sc.validate().unwrap_err().is_config());
        let mut sc = small();
        sc.comb_amplitudes.pop();
        assert!(sc.validate().is_err());
        let mut sc = small();
        sc.rate = DigitizerRate::Hz(30e9);
        assert!(sc.validate().is_err());
        let mut sc = small();
        sc.grid = TimeGrid::new(5e-12, 1000).unwrap();
        assert!(sc.validate().is_err());
        for g in [-0.01, 0.25, f64::NAN] {
            let mut sc = small();
            sc.edge_guard_fraction = g;
            assert!(sc.validate().unwrap_err().is_config());
        }
    }

    #[test]
    fn edge_guard_trims_both_ends() {
        let mut sc = small();
        assert_eq!(sc.measured_range(), 4000..76_000);
        sc.edge_guard_fraction = 0.0;
        assert_eq!(sc.measured_range(), 0..80_000);
    }

    #[test]
    fn seeds_reproduce_runs() {
        let sc = small();
        let r = sc.reference_signal(40e9).unwrap();
        let a = sc.run_with_reference(40e9, 5, &r).unwrap();
        let b = sc.run_with_reference(40e9, 5, &r).unwrap();
        let c = sc.run_with_reference(40e9, 6, &r).unwrap();
        assert_eq!(a.nsr_db, b.nsr_db);
        assert_ne!(a.nsr_db, c.nsr_db);
    }

    #[test]
    fn analytic_overlay_uses_record_jitter() {
        let sc = Scenario::desk();
        let t = sc.grid.duration();
        let dr = effective_record_jitter(3e3, t, 30e9);
        let de = effective_record_jitter(180e3, t, 60e9);
        let want = -snr_sliced(100e9, &sc.plan, dr, de).unwrap();
        assert!((sc.analytic_nsr_db(100e9).unwrap() - want).abs() < 1e-12);
        let quiet = sc.clone().with_sources(SourceFlags::NONE);
        assert_eq!(quiet.analytic_nsr_db(100e9).unwrap(), NSR_FLOOR_DB);
    }
}
