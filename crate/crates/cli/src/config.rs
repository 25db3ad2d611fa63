//! Scenario configuration files.
//!
//! A config is a TOML tree whose sections mirror the simulator's modules.
//! Every field is optional; missing fields take the values of the preset the
//! file is layered on (the full-length preset unless told otherwise). The
//! same schema is written back as JSON in `scenario.json`, and the loader
//! accepts that file too.

use std::cell::Cell;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use slicesim::analysis::{DigitizerRate, Scenario, StaticPhases};
use slicesim::digitizer::Bits;
use slicesim::dsp::CorrectionSource;
use slicesim::noise::{NoiseSpec, SourceFlags};
use slicesim::optics::{FrequencyPlan, ToneSpec, Transducer};
use slicesim::TimeGrid;

/// A configuration problem tied to one field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Dotted path such as `plan.guard_ghz`, or the file name for syntax
    /// errors.
    pub field: String,
    pub message: String,
}

impl ConfigError {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

type CResult<T> = std::result::Result<T, ConfigError>;

/// Base configuration a file is layered on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// 3.3 μs records, 65 runs per point.
    Paper,
    /// 96 ns records, 33 runs per point.
    Desk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub dt_ps: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    pub n_slices: usize,
    pub slice_bw_ghz: f64,
    pub guard_ghz: f64,
    /// Width of the reference-line filter; twice the guard when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo_filter_bw_ghz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub carrier_lw_hz: f64,
    pub mll_optical_lw_hz: f64,
    pub mll_rf_lw_hz: f64,
    pub elec_lw_hz: f64,
    pub elec_osc_freq_ghz: f64,
    pub enable: EnableConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnableConfig {
    pub carrier: bool,
    pub mll_optical: bool,
    pub mll_rf: bool,
    pub elec: bool,
}

impl From<SourceFlags> for EnableConfig {
    fn from(f: SourceFlags) -> Self {
        Self {
            carrier: f.carrier,
            mll_optical: f.mll_optical,
            mll_rf: f.mll_rf,
            elec: f.elec,
        }
    }
}

impl From<EnableConfig> for SourceFlags {
    fn from(e: EnableConfig) -> Self {
        Self {
            carrier: e.carrier,
            mll_optical: e.mll_optical,
            mll_rf: e.mll_rf,
            elec: e.elec,
        }
    }
}

/// A number or one of a few keywords.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumOrWord<T> {
    Num(T),
    Word(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhasesConfig {
    List(Vec<f64>),
    Word(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CombConfig {
    pub amplitudes: Vec<f64>,
    /// A list of phases in radians, or `"random"`.
    pub static_phases: PhasesConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    pub freq_ghz: f64,
    pub mod_index: f64,
    pub transducer: Transducer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DigitizerConfig {
    /// Per-slice rate in GS/s, or `"auto"`.
    pub rate_gsps: NumOrWord<f64>,
    /// Quantizer resolution, or `"ideal"`.
    pub bits: NumOrWord<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DspConfig {
    pub rin_cancel: bool,
    pub phase_correction: CorrectionSource,
    pub pilot_amplitude: f64,
    /// Fraction of the record ignored at each end when measuring the NSR.
    pub edge_guard: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    pub runs: usize,
    /// Sweep frequencies; the default 5 GHz ladder when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freqs_ghz: Option<Vec<f64>>,
}

/// The whole configuration tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub grid: GridConfig,
    pub plan: PlanConfig,
    pub noise: NoiseConfig,
    pub comb: CombConfig,
    pub signal: SignalConfig,
    pub digitizer: DigitizerConfig,
    pub dsp: DspConfig,
    pub run: RunConfig,
}

impl ScenarioConfig {
    pub fn preset(p: Preset) -> Self {
        let (sc, runs) = match p {
            Preset::Paper => (Scenario::paper(), 65),
            Preset::Desk => (Scenario::desk(), 33),
        };
        Self::from_scenario(&sc, 1, runs)
    }

    /// Config describing an existing scenario.
    pub fn from_scenario(sc: &Scenario, master_seed: u64, runs: usize) -> Self {
        let n = &sc.noise;
        Self {
            grid: GridConfig {
                dt_ps: sc.grid.dt() * 1e12,
                n_samples: sc.grid.len(),
            },
            plan: PlanConfig {
                n_slices: sc.plan.n_slices,
                slice_bw_ghz: sc.plan.slice_bw_hz / 1e9,
                guard_ghz: sc.plan.guard_hz / 1e9,
                lo_filter_bw_ghz: (sc.lo_bw_hz != sc.plan.default_lo_bw()).then(|| sc.lo_bw_hz / 1e9),
            },
            noise: NoiseConfig {
                carrier_lw_hz: n.carrier_linewidth_hz,
                mll_optical_lw_hz: n.mll_optical_linewidth_hz,
                mll_rf_lw_hz: n.mll_rf_linewidth_hz,
                elec_lw_hz: n.elec_linewidth_hz,
                elec_osc_freq_ghz: n.elec_osc_freq_hz / 1e9,
                enable: n.enabled.into(),
            },
            comb: CombConfig {
                amplitudes: sc.comb_amplitudes.clone(),
                static_phases: match &sc.static_phases {
                    StaticPhases::Explicit(p) => PhasesConfig::List(p.clone()),
                    StaticPhases::Random => PhasesConfig::Word("random".into()),
                },
            },
            signal: SignalConfig {
                freq_ghz: sc.tone.freq_hz / 1e9,
                mod_index: sc.tone.amplitude,
                transducer: sc.tone.transducer,
            },
            digitizer: DigitizerConfig {
                rate_gsps: match sc.rate {
                    DigitizerRate::Auto => NumOrWord::Word("auto".into()),
                    DigitizerRate::Hz(r) => NumOrWord::Num(r / 1e9),
                },
                bits: match sc.bits {
                    Bits::Ideal => NumOrWord::Word("ideal".into()),
                    Bits::N(b) => NumOrWord::Num(b),
                },
            },
            dsp: DspConfig {
                rin_cancel: sc.rin_cancel,
                phase_correction: sc.correction,
                pilot_amplitude: sc.pilot_amplitude,
                edge_guard: sc.edge_guard_fraction,
            },
            run: RunConfig {
                master_seed,
                runs,
                freqs_ghz: None,
            },
        }
    }

    /// Parse TOML text layered on `base`.
    pub fn from_toml(text: &str, base: Preset, origin: &str) -> CResult<Self> {
        let prev = BASE.replace(base);
        let parsed = toml::from_str::<Self>(text);
        BASE.set(prev);
        let cfg = parsed.map_err(|e| ConfigError::new(origin, e.to_string().trim_end()))?;
        cfg.to_scenario()?;
        Ok(cfg)
    }

    /// Parse a `scenario.json` echo. Keys other than the configuration
    /// sections (the derived quantities) are ignored.
    pub fn from_json(text: &str, origin: &str) -> CResult<Self> {
        let mut v: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError::new(origin, e.to_string()))?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("derived");
        }
        let cfg: Self = serde_json::from_value(v).map_err(|e| ConfigError::new(origin, e.to_string()))?;
        cfg.to_scenario()?;
        Ok(cfg)
    }

    /// Load a `.toml` or `.json` file.
    pub fn load(path: &Path, base: Preset) -> CResult<Self> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new(&origin, e.to_string()))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json(&text, &origin),
            _ => Self::from_toml(&text, base, &origin),
        }
    }

    /// Sweep frequencies in Hz, if the config lists them.
    pub fn freqs_hz(&self) -> Option<Vec<f64>> {
        self.run.freqs_ghz.as_ref().map(|v| v.iter().map(|f| f * 1e9).collect())
    }

    /// Validate every field and build the simulator scenario.
    pub fn to_scenario(&self) -> CResult<Scenario> {
        let g = &self.grid;
        positive("grid.dt_ps", g.dt_ps)?;
        if g.n_samples < 2 {
            return Err(ConfigError::new("grid.n_samples", "need at least 2 samples"));
        }
        let grid = TimeGrid::new(g.dt_ps * 1e-12, g.n_samples).map_err(|e| ConfigError::new("grid", e.to_string()))?;

        let p = &self.plan;
        if p.n_slices < 1 {
            return Err(ConfigError::new("plan.n_slices", "need at least one slice"));
        }
        positive("plan.slice_bw_ghz", p.slice_bw_ghz)?;
        positive("plan.guard_ghz", p.guard_ghz)?;
        if p.guard_ghz >= p.slice_bw_ghz / 4.0 {
            return Err(ConfigError::new(
                "plan.guard_ghz",
                format!(
                    "guard {} GHz must be below a quarter of the slice bandwidth ({} GHz)",
                    p.guard_ghz,
                    p.slice_bw_ghz / 4.0
                ),
            ));
        }
        let plan = FrequencyPlan::new(p.n_slices, p.slice_bw_ghz * 1e9, p.guard_ghz * 1e9)
            .map_err(|e| ConfigError::new("plan", e.to_string()))?;
        let lo_bw_hz = match p.lo_filter_bw_ghz {
            Some(bw) => {
                positive("plan.lo_filter_bw_ghz", bw)?;
                if bw > 2.0 * p.guard_ghz {
                    return Err(ConfigError::new(
                        "plan.lo_filter_bw_ghz",
                        format!("{bw} GHz exceeds twice the guard band"),
                    ));
                }
                bw * 1e9
            }
            None => plan.default_lo_bw(),
        };

        let n = &self.noise;
        non_negative("noise.carrier_lw_hz", n.carrier_lw_hz)?;
        non_negative("noise.mll_optical_lw_hz", n.mll_optical_lw_hz)?;
        non_negative("noise.mll_rf_lw_hz", n.mll_rf_lw_hz)?;
        non_negative("noise.elec_lw_hz", n.elec_lw_hz)?;
        if n.enable.elec {
            positive("noise.elec_osc_freq_ghz", n.elec_osc_freq_ghz)?;
        } else {
            non_negative("noise.elec_osc_freq_ghz", n.elec_osc_freq_ghz)?;
        }
        let noise = NoiseSpec {
            carrier_linewidth_hz: n.carrier_lw_hz,
            mll_optical_linewidth_hz: n.mll_optical_lw_hz,
            mll_rf_linewidth_hz: n.mll_rf_lw_hz,
            elec_linewidth_hz: n.elec_lw_hz,
            elec_osc_freq_hz: n.elec_osc_freq_ghz * 1e9,
            enabled: n.enable.into(),
        };

        let c = &self.comb;
        if c.amplitudes.len() != p.n_slices {
            return Err(ConfigError::new(
                "comb.amplitudes",
                format!("{} values for {} slices", c.amplitudes.len(), p.n_slices),
            ));
        }
        for (i, a) in c.amplitudes.iter().enumerate() {
            positive(&format!("comb.amplitudes[{i}]"), *a)?;
        }
        let static_phases = match &c.static_phases {
            PhasesConfig::List(v) if v.len() == p.n_slices && v.iter().all(|x| x.is_finite()) => {
                StaticPhases::Explicit(v.clone())
            }
            PhasesConfig::List(v) => {
                return Err(ConfigError::new(
                    "comb.static_phases",
                    format!("need {} finite phases, got {:?}", p.n_slices, v),
                ))
            }
            PhasesConfig::Word(w) if w == "random" => StaticPhases::Random,
            PhasesConfig::Word(w) => {
                return Err(ConfigError::new(
                    "comb.static_phases",
                    format!("expected a list or \"random\", got \"{w}\""),
                ))
            }
        };

        let s = &self.signal;
        positive("signal.freq_ghz", s.freq_ghz)?;
        positive("signal.mod_index", s.mod_index)?;
        let tone = ToneSpec {
            freq_hz: s.freq_ghz * 1e9,
            amplitude: s.mod_index,
            phase_rad: 0.0,
            transducer: s.transducer,
        };
        tone.validate(&plan).map_err(|e| ConfigError::new("signal", e.to_string()))?;
        if grid.on_bin(tone.freq_hz).is_none() {
            return Err(ConfigError::new(
                "signal.freq_ghz",
                format!(
                    "{} GHz is not a multiple of the {} MHz bin spacing",
                    s.freq_ghz,
                    grid.df() / 1e6
                ),
            ));
        }

        let d = &self.digitizer;
        let rate = match &d.rate_gsps {
            NumOrWord::Num(r) => {
                positive("digitizer.rate_gsps", *r)?;
                DigitizerRate::Hz(r * 1e9)
            }
            NumOrWord::Word(w) if w == "auto" => DigitizerRate::Auto,
            NumOrWord::Word(w) => {
                return Err(ConfigError::new(
                    "digitizer.rate_gsps",
                    format!("expected a number or \"auto\", got \"{w}\""),
                ))
            }
        };
        let bits = match &d.bits {
            NumOrWord::Num(b) if (1..=52).contains(b) => Bits::N(*b),
            NumOrWord::Num(b) => return Err(ConfigError::new("digitizer.bits", format!("{b} is outside 1..=52"))),
            NumOrWord::Word(w) if w == "ideal" => Bits::Ideal,
            NumOrWord::Word(w) => {
                return Err(ConfigError::new(
                    "digitizer.bits",
                    format!("expected an integer or \"ideal\", got \"{w}\""),
                ))
            }
        };

        let q = &self.dsp;
        if q.phase_correction == CorrectionSource::Pilot && !(q.pilot_amplitude > 0.0 && q.pilot_amplitude < 1.0) {
            return Err(ConfigError::new("dsp.pilot_amplitude", "must be in (0, 1)"));
        }
        if !(0.0..0.25).contains(&q.edge_guard) {
            return Err(ConfigError::new("dsp.edge_guard", "must be in [0, 0.25)"));
        }
        if self.run.runs < 1 {
            return Err(ConfigError::new("run.runs", "must be >= 1"));
        }
        if let Some(fs) = &self.run.freqs_ghz {
            for (i, f) in fs.iter().enumerate() {
                positive(&format!("run.freqs_ghz[{i}]"), *f)?;
            }
        }

        let sc = Scenario {
            grid,
            plan,
            lo_bw_hz,
            noise,
            comb_amplitudes: c.amplitudes.clone(),
            static_phases,
            tone,
            rate,
            bits,
            rin_cancel: q.rin_cancel,
            correction: q.phase_correction,
            pilot_amplitude: q.pilot_amplitude,
            edge_guard_fraction: q.edge_guard,
        };
        if let Err(e) = sc.digitizer_rate_hz().and_then(|r| {
            let clk = slicesim::digitizer::ClockModel::ideal(r, grid)?;
            clk.check_nyquist(&plan, lo_bw_hz)?;
            clk.check_record(&grid)
        }) {
            return Err(ConfigError::new("digitizer.rate_gsps", e.to_string()));
        }
        sc.validate().map_err(|e| ConfigError::new("config", e.to_string()))?;
        Ok(sc)
    }
}

fn positive(field: &str, x: f64) -> CResult<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(field, format!("must be positive, got {x}")))
    }
}

fn non_negative(field: &str, x: f64) -> CResult<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(field, format!("must be non-negative, got {x}")))
    }
}

thread_local! {
    // Preset that missing fields fall back to while a file is parsed.
    static BASE: Cell<Preset> = const { Cell::new(Preset::Paper) };
}

fn base() -> ScenarioConfig {
    ScenarioConfig::preset(BASE.get())
}

macro_rules! default_from_base {
    ($($ty:ident => $field:ident),*) => {
        $(impl Default for $ty {
            fn default() -> Self {
                base().$field
            }
        })*
    };
}

default_from_base!(
    GridConfig => grid,
    PlanConfig => plan,
    NoiseConfig => noise,
    CombConfig => comb,
    SignalConfig => signal,
    DigitizerConfig => digitizer,
    DspConfig => dsp,
    RunConfig => run
);

impl Default for EnableConfig {
    fn default() -> Self {
        base().noise.enable
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        base()
    }
}
