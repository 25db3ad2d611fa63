//! Command-line surface: argument parsing, the three commands and their
//! output files.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use slicesim::analysis::{
    budget, default_sweep_freqs, run_seed, sweep_with_progress, BudgetReport, Scenario, SnrReport,
};
use slicesim::noise::SourceFlags;

use crate::config::{ConfigError, Preset, ScenarioConfig};
use crate::svg::{Plot, Series};
use crate::table::{nsr_csv, sweep_csv};

/// Failure of a command, mapped to an exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<slicesim::Error> for CliError {
    fn from(e: slicesim::Error) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "slicesim", version, about = "Spectrally sliced ADC simulator and jitter budget calculator")]
pub struct Cli {
    /// Worker threads for Monte Carlo runs (all cores by default).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Repeated runs of one scenario.
    Simulate(SimulateArgs),
    /// Monte Carlo NSR versus signal frequency.
    Sweep(SweepArgs),
    /// Closed-form worst-case SNR and ENOB of an M-slice converter.
    Budget(BudgetArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// TOML configuration, or a scenario.json written by an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Values used for fields the configuration leaves out.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Output directory, created if needed.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Runs per frequency.
    #[arg(long)]
    pub runs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Signal frequency in GHz, overriding the configuration.
    #[arg(long)]
    pub freq_ghz: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Comma-separated frequencies in GHz.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub freqs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct BudgetArgs {
    /// Number of slices M.
    #[arg(long)]
    pub slices: usize,
    /// Slice bandwidth (comb repetition rate) in GHz.
    #[arg(long)]
    pub slice_bw_ghz: f64,
    /// Comb timing jitter in seconds.
    #[arg(long)]
    pub mll_jitter: f64,
    /// Clock jitter in seconds.
    #[arg(long)]
    pub elec_jitter: f64,
    /// Observation time the jitters were measured over, in seconds.
    #[arg(long, requires = "t_to")]
    pub t_from: Option<f64>,
    /// Observation time to rescale the jitters to, in seconds.
    #[arg(long, requires = "t_from")]
    pub t_to: Option<f64>,
    /// Directory for budget.json.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Parse arguments, run the command and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a).map(|_| ()),
        Command::Sweep(a) => cmd_sweep(&a).map(|_| ()),
        Command::Budget(a) => cmd_budget(&a).map(|_| ()),
    }
}

/// Resolve the configuration named by the flags.
pub fn resolve_config(a: &ScenarioArgs) -> CliResult<ScenarioConfig> {
    let base = a.preset.unwrap_or(Preset::Paper);
    let mut cfg = match &a.config {
        Some(p) => ScenarioConfig::load(p, base)?,
        None => ScenarioConfig::preset(base),
    };
    if let Some(s) = a.seed {
        cfg.run.master_seed = s;
    }
    if let Some(r) = a.runs {
        cfg.run.runs = r;
    }
    Ok(cfg)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let p = dir.join(name);
    std::fs::write(&p, contents).map_err(|e| io_err(&p, e))?;
    Ok(p)
}

/// Quantities derived from a configuration, echoed next to it.
#[derive(Debug, Clone, Serialize)]
pub struct Derived {
    pub record_s: f64,
    pub sim_rate_gsps: f64,
    pub digitizer_rate_gsps: f64,
    pub samples_per_slice: usize,
    pub lo_filter_bw_ghz: f64,
    pub signal_slice: usize,
    pub eff_mll_jitter_s: f64,
    pub eff_elec_jitter_s: f64,
    pub nsr_analytic_db: f64,
    pub nsr_electric_db: f64,
    pub measured_samples: [usize; 2],
}

pub fn derived(sc: &Scenario) -> CliResult<Derived> {
    let rate = sc.digitizer_rate_hz()?;
    let f = sc.tone.freq_hz;
    let r = sc.measured_range();
    Ok(Derived {
        record_s: sc.grid.duration(),
        sim_rate_gsps: sc.grid.sample_rate() / 1e9,
        digitizer_rate_gsps: rate / 1e9,
        samples_per_slice: (sc.grid.duration() * rate).round() as usize,
        lo_filter_bw_ghz: sc.lo_bw_hz / 1e9,
        signal_slice: sc.plan.slice_of(f).unwrap_or(0),
        eff_mll_jitter_s: sc.effective_mll_jitter(),
        eff_elec_jitter_s: sc.effective_elec_jitter(),
        nsr_analytic_db: sc.analytic_nsr_db(f)?,
        nsr_electric_db: sc.electric_nsr_db(f)?,
        measured_samples: [r.start, r.end],
    })
}

fn scenario_json(cfg: &ScenarioConfig, sc: &Scenario) -> CliResult<String> {
    let mut v = serde_json::to_value(cfg).map_err(|e| CliError::Runtime(e.to_string()))?;
    v["derived"] = serde_json::to_value(derived(sc)?).map_err(|e| CliError::Runtime(e.to_string()))?;
    serde_json::to_string_pretty(&v).map_err(|e| CliError::Runtime(e.to_string()))
}

/// Result of [`cmd_simulate`].
#[derive(Debug, Clone)]
pub struct SimulateOutput {
    pub rows: Vec<(u64, f64)>,
    pub files: Vec<PathBuf>,
}

/// Samples shown in the waveform overlay.
pub const OVERLAY_SAMPLES: usize = 10_000;
const SCATTER_POINTS: usize = 5_000;

pub fn cmd_simulate(a: &SimulateArgs) -> CliResult<SimulateOutput> {
    let mut cfg = resolve_config(&a.scenario)?;
    if let Some(f) = a.freq_ghz {
        cfg.signal.freq_ghz = f;
    }
    let sc = cfg.to_scenario()?;
    let f = sc.tone.freq_hz;
    let reference = sc.reference_signal(f)?;
    let seeds: Vec<u64> = (0..cfg.run.runs).map(|r| run_seed(cfg.run.master_seed, r, 0)).collect();
    let results = seeds
        .par_iter()
        .enumerate()
        .map(|(r, &seed)| {
            let o = sc.run_with_reference(f, seed, &reference)?;
            Ok((o.nsr_db, (r == 0).then_some(o.signal)))
        })
        .collect::<slicesim::Result<Vec<_>>>()?;
    let rows: Vec<(u64, f64)> = seeds.iter().zip(&results).map(|(s, r)| (*s, r.0)).collect();
    let first = results
        .into_iter()
        .find_map(|r| r.1)
        .expect("at least one run");

    let out = &a.scenario.out;
    let mut files = vec![
        write_file(out, "scenario.json", &scenario_json(&cfg, &sc)?)?,
        write_file(out, "nsr.csv", &nsr_csv(&rows))?,
    ];
    let range = sc.measured_range();
    let dt_ns = sc.grid.dt() * 1e9;
    let shown = range.start..(range.start + OVERLAY_SAMPLES).min(range.end);
    let overlay = Plot {
        title: format!("Recovered signal, {:.1} GHz tone, seed {}", f / 1e9, seeds[0]),
        x_label: "time (ns)".into(),
        y_label: "power (a.u.)".into(),
        series: vec![
            Series::Line {
                label: "reference".into(),
                color: "#1f77b4".into(),
                dashed: false,
                points: shown.clone().map(|k| (k as f64 * dt_ns, reference[k])).collect(),
            },
            Series::Line {
                label: "reconstructed".into(),
                color: "#d62728".into(),
                dashed: true,
                points: shown.map(|k| (k as f64 * dt_ns, first[k])).collect(),
            },
        ],
    };
    files.push(write_file(out, "overlay.svg", &overlay.render())?);
    let step = (range.len() / SCATTER_POINTS).max(1);
    let scatter = Plot {
        title: "Reconstructed versus reference".into(),
        x_label: "reference".into(),
        y_label: "reconstructed".into(),
        series: vec![Series::Points {
            label: format!("seed {}", seeds[0]),
            color: "#1f77b4".into(),
            points: range.step_by(step).map(|k| (reference[k], first[k])).collect(),
        }],
    };
    files.push(write_file(out, "recon-vs-input.svg", &scatter.render())?);
    Ok(SimulateOutput { rows, files })
}

/// Result of [`cmd_sweep`].
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub reports: Vec<SnrReport>,
    pub files: Vec<PathBuf>,
}

pub fn cmd_sweep(a: &SweepArgs) -> CliResult<SweepOutput> {
    let cfg = resolve_config(&a.scenario)?;
    let sc = cfg.to_scenario()?;
    let freqs = match (&a.freqs, cfg.freqs_hz()) {
        (Some(v), _) => v.iter().map(|f| f * 1e9).collect(),
        (None, Some(v)) => v,
        (None, None) => default_sweep_freqs(&sc.plan),
    };
    if freqs.is_empty() {
        return Err(CliError::Config("frequency list is empty".into()));
    }
    let reports = sweep_with_progress(&sc, &freqs, cfg.run.runs, cfg.run.master_seed, |i, r| {
        eprintln!(
            "[{}/{}] {:.2} GHz: NSR {:.2} dB (3-sigma {:.2}, analytic {:.2})",
            i + 1,
            freqs.len(),
            r.freq_hz / 1e9,
            r.nsr_mean_db,
            r.ci3_db,
            r.nsr_analytic_db
        );
    })?;
    let out = &a.scenario.out;
    let files = vec![
        write_file(out, "scenario.json", &scenario_json(&cfg, &sc)?)?,
        write_file(out, "sweep.csv", &sweep_csv(&reports))?,
        write_file(out, "fig4.svg", &fig4(&sc, &reports)?.render())?,
    ];
    Ok(SweepOutput { reports, files })
}

/// Monte Carlo points over the comb-only, clock-only and combined analytic
/// curves, drawn with both timing sources at their configured linewidths.
pub fn fig4(sc: &Scenario, reports: &[SnrReport]) -> CliResult<Plot> {
    let all = sc.clone().with_sources(SourceFlags {
        mll_rf: true,
        elec: true,
        ..SourceFlags::NONE
    });
    let top = sc.plan.sliced_band().f_hi;
    let step = 0.25e9;
    let fs: Vec<f64> = (1..).map(|k| k as f64 * step).take_while(|f| *f < top).collect();
    let curve = |g: &dyn Fn(f64) -> slicesim::Result<f64>| -> CliResult<Vec<(f64, f64)>> {
        fs.iter().map(|&f| Ok((f / 1e9, g(f)?))).collect()
    };
    Ok(Plot {
        title: "NSR versus signal frequency".into(),
        x_label: "signal frequency (GHz)".into(),
        y_label: "NSR (dB)".into(),
        series: vec![
            Series::Line {
                label: "comb jitter only".into(),
                color: "#2ca02c".into(),
                dashed: true,
                points: curve(&|f| all.mll_nsr_db(f))?,
            },
            Series::Line {
                label: "all-electrical".into(),
                color: "#7f7f7f".into(),
                dashed: true,
                points: curve(&|f| all.electric_nsr_db(f))?,
            },
            Series::Line {
                label: "combined".into(),
                color: "#1f77b4".into(),
                dashed: false,
                points: curve(&|f| all.analytic_nsr_db(f))?,
            },
            Series::ErrorBars {
                label: "Monte Carlo (3-sigma)".into(),
                color: "#d62728".into(),
                points: reports
                    .iter()
                    .map(|r| (r.freq_hz / 1e9, r.nsr_mean_db, r.ci3_db))
                    .collect(),
            },
        ],
    })
}

fn fmt_time(s: f64) -> String {
    let units = [(1e-18, "as"), (1e-15, "fs"), (1e-12, "ps"), (1e-9, "ns"), (1e-6, "us")];
    let (scale, unit) = units
        .iter()
        .rev()
        .find(|(u, _)| s >= *u)
        .copied()
        .unwrap_or(units[0]);
    format!("{:.4} {unit}", s / scale)
}

/// Human-readable budget summary.
pub fn budget_text(r: &BudgetReport) -> String {
    let mut s = String::new();
    s += &format!("slices                   {}\n", r.n_slices);
    s += &format!("slice bandwidth          {} GHz\n", r.slice_bw_hz / 1e9);
    if let Some((from, to)) = r.rescale_s {
        s += &format!("jitter rescaled          {from} s -> {to} s\n");
    }
    s += &format!("comb jitter              {}\n", fmt_time(r.mll_jitter_s));
    s += &format!("clock jitter             {}\n", fmt_time(r.elec_jitter_s));
    s += &format!("effective clock jitter   {}\n", fmt_time(r.eff_elec_jitter_s));
    s += &format!("effective comb jitter    {}\n", fmt_time(r.eff_mll_jitter_s));
    s += &format!(
        "worst-case SNR           {:.2} dB at {} GHz\n",
        r.worst_snr_db,
        r.worst_freq_hz / 1e9
    );
    s += &format!("ENOB                     {:.2}\n", r.enob);
    s += &format!("all-electrical SNR       {:.2} dB\n", r.electric_snr_db);
    s += &format!("all-electrical ENOB      {:.2}\n", r.electric_enob);
    s += &format!("ENOB gain                {:.2}\n", r.enob_gain);
    s
}

pub fn cmd_budget(a: &BudgetArgs) -> CliResult<BudgetReport> {
    let rescale = a.t_from.zip(a.t_to);
    let r = budget(a.slices, a.slice_bw_ghz * 1e9, a.mll_jitter, a.elec_jitter, rescale)?;
    print!("{}", budget_text(&r));
    let json = serde_json::to_string_pretty(&r).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(&a.out, "budget.json", &json)?;
    Ok(r)
}
