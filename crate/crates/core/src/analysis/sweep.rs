//! Monte Carlo frequency sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::noise::{derive_seed, PathRole};
use crate::optics::FrequencyPlan;

use super::scenario::Scenario;
use super::NsrStats;

/// One sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrReport {
    pub freq_hz: f64,
    pub nsr_mean_db: f64,
    pub nsr_std_db: f64,
    pub ci3_db: f64,
    /// Closed-form NSR for the enabled timing sources.
    pub nsr_analytic_db: f64,
    pub n_runs: usize,
    pub runs_db: Vec<f64>,
}

impl SnrReport {
    pub fn analytic_snr_db(&self) -> f64 {
        -self.nsr_analytic_db
    }
}

/// Tone frequencies at 5 GHz spacing starting 2.5 GHz, up to the top of the
/// sliced band: 2.5 … 117.5 GHz (24 points) for four 30 GHz slices with a
/// 2 GHz guard.
pub fn default_sweep_freqs(plan: &FrequencyPlan) -> Vec<f64> {
    let top = plan.sliced_band().f_hi;
    (0..)
        .map(|k| 2.5e9 + 5e9 * k as f64)
        .take_while(|f| *f < top)
        .collect()
}

/// Seed of run `run` at sweep point `point`.
pub fn run_seed(master_seed: u64, run: usize, point: usize) -> u64 {
    derive_seed(master_seed, PathRole::Run, run as u64, point as u64)
}

/// Run `runs` independent simulations at each frequency.
///
/// Runs may execute on any number of threads; seeds depend only on the
/// master seed and the (run, point) indices, so results do not depend on
/// scheduling.
pub fn sweep(sc: &Scenario, freqs: &[f64], runs: usize, master_seed: u64) -> Result<Vec<SnrReport>> {
    sweep_with_progress(sc, freqs, runs, master_seed, |_, _| {})
}

/// [`sweep`] calling `progress(point, report)` after each point.
pub fn sweep_with_progress(
    sc: &Scenario,
    freqs: &[f64],
    runs: usize,
    master_seed: u64,
    mut progress: impl FnMut(usize, &SnrReport),
) -> Result<Vec<SnrReport>> {
    if freqs.is_empty() {
        return Err(config_err!("frequency list is empty"));
    }
    if runs == 0 {
        return Err(config_err!("runs per point must be >= 1"));
    }
    sc.validate()?;
    for &f in freqs {
        sc.check_freq(f)?;
    }
    let mut out = Vec::with_capacity(freqs.len());
    for (point, &f) in freqs.iter().enumerate() {
        let reference = sc.reference_signal(f)?;
        let runs_db = (0..runs)
            .into_par_iter()
            .map(|r| {
                sc.run_with_reference(f, run_seed(master_seed, r, point), &reference)
                    .map(|o| o.nsr_db)
            })
            .collect::<Result<Vec<_>>>()?;
        let stats = NsrStats::from_db(&runs_db)?;
        let report = SnrReport {
            freq_hz: f,
            nsr_mean_db: stats.mean_db,
            nsr_std_db: stats.std_db,
            ci3_db: stats.ci3_db,
            nsr_analytic_db: sc.analytic_nsr_db(f)?,
            n_runs: runs,
            runs_db,
        };
        progress(point, &report);
        out.push(report);
    }
    Ok(out)
}
