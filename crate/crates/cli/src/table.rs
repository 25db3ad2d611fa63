//! CSV emission.

use slicesim::analysis::SnrReport;

/// Fixed notation with six significant digits: `-44.1700`, `117.500`,
/// `0.0123400`.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0.00000".into();
    }
    let digits = x.abs().log10().floor() as i32 + 1;
    let decimals = (6 - digits).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // Rounding can carry into a new digit (999999.5 -> 1000000).
    let carried = s.trim_start_matches('-').split('.').next().map_or(0, |i| i.len() as i32);
    if decimals > 0 && carried > digits.max(1) {
        format!("{x:.*}", decimals - 1)
    } else {
        s
    }
}

pub const SWEEP_HEADER: &str = "freq_ghz,nsr_mean_db,nsr_std_db,ci3_db,nsr_analytic_db,n_runs";

pub fn sweep_csv(rows: &[SnrReport]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            sig6(r.freq_hz / 1e9),
            sig6(r.nsr_mean_db),
            sig6(r.nsr_std_db),
            sig6(r.ci3_db),
            sig6(r.nsr_analytic_db),
            r.n_runs
        ));
    }
    s
}

pub fn nsr_csv(rows: &[(u64, f64)]) -> String {
    let mut s = String::from("seed,nsr_db\n");
    for (seed, nsr) in rows {
        s.push_str(&format!("{seed},{}\n", sig6(*nsr)));
    }
    s
}

/// Parse a `sweep.csv` back into rows (runs are not stored).
pub fn parse_sweep_csv(text: &str) -> Result<Vec<SnrReport>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(SWEEP_HEADER) {
        return Err("unexpected sweep.csv header".into());
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return Err(format!("bad row: {l}"));
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|e| format!("{l}: {e}"));
            Ok(SnrReport {
                freq_hz: num(0)? * 1e9,
                nsr_mean_db: num(1)?,
                nsr_std_db: num(2)?,
                ci3_db: num(3)?,
                nsr_analytic_db: num(4)?,
                n_runs: f[5].parse().map_err(|e| format!("{l}: {e}"))?,
                runs_db: Vec::new(),
            })
        })
        .collect()
}
