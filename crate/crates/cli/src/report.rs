//! CSV emitters. Every table starts with a header row; floats are fixed at
//! six decimals so reruns with equal inputs are byte-identical.

use std::fmt::Write;

use papergrain_core::forge::{AttackTrace, SuccessRow};
use papergrain_core::histogram::HistogramReport;
use papergrain_core::tamper::SweepRow;

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

/// Physical degradation sweep, one row per strength.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out =
        String::from("strength,mean_corr_x,std_corr_x,mean_corr_y,std_corr_y,completed,failures\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            f6(r.strength),
            f6(r.mean_corr_x),
            f6(r.std_corr_x),
            f6(r.mean_corr_y),
            f6(r.std_corr_y),
            r.completed,
            r.failures
        );
    }
    out
}

/// Best-score-so-far per oracle query of one attack run.
pub fn trace_csv(trace: &AttackTrace) -> String {
    let mut out = String::from("eval_index,rho_best\n");
    for (i, rho) in trace.rho_trajectory.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, f6(*rho));
    }
    out
}

/// Success-rate table over attack methods; `median_evals` is empty when a
/// method never succeeded.
pub fn success_csv(rows: &[SuccessRow]) -> String {
    let mut out = String::from("method,trials,successes,success_rate,median_evals\n");
    for r in rows {
        let median = r.median_evals.map(f6).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.method.as_str(),
            r.trials,
            r.successes,
            f6(r.success_rate),
            median
        );
    }
    out
}

/// Matched/unmatched score histogram over shared bins.
pub fn hist_csv(report: &HistogramReport) -> String {
    let mut out = String::from("bin_lo,bin_hi,matched,unmatched\n");
    for i in 0..report.matched_counts.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            f6(report.edges[i]),
            f6(report.edges[i + 1]),
            report.matched_counts[i],
            report.unmatched_counts[i]
        );
    }
    out
}

/// One subset-fraction sweep outcome of the latent greedy driver.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionRow {
    pub subset_fraction: f64,
    pub function_evals: usize,
    pub best_rho: f64,
    pub success: bool,
}

pub fn fraction_sweep_csv(rows: &[FractionRow]) -> String {
    let mut out = String::from("subset_fraction,function_evals,best_rho,success\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            f6(r.subset_fraction),
            r.function_evals,
            f6(r.best_rho),
            r.success
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use papergrain_core::forge::AttackMethod;

    #[test]
    fn sweep_csv_shape() {
        let rows = vec![SweepRow {
            strength: 0.25,
            mean_corr_x: 0.09,
            std_corr_x: 0.02,
            mean_corr_y: 0.1,
            std_corr_y: 0.03,
            completed: 10,
            failures: 0,
        }];
        let csv = sweep_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "strength,mean_corr_x,std_corr_x,mean_corr_y,std_corr_y,completed,failures"
        );
        assert_eq!(lines.next().unwrap(), "0.250000,0.090000,0.020000,0.100000,0.030000,10,0");
        assert!(lines.next().is_none());
    }

    #[test]
    fn success_csv_leaves_median_empty_without_successes() {
        let rows = vec![
            SuccessRow {
                method: AttackMethod::Powell,
                trials: 4,
                successes: 4,
                success_rate: 1.0,
                median_evals: Some(96.0),
            },
            SuccessRow {
                method: AttackMethod::Baseline,
                trials: 4,
                successes: 0,
                success_rate: 0.0,
                median_evals: None,
            },
        ];
        let csv = success_csv(&rows);
        assert!(csv.contains("powell,4,4,1.000000,96.000000\n"));
        assert!(csv.contains("baseline,4,0,0.000000,\n"));
    }

    #[test]
    fn hist_csv_uses_shared_edges() {
        let report = papergrain_core::histogram_report(&[0.9, 0.95], &[0.0, 0.1], 2).unwrap();
        let csv = hist_csv(&report);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("bin_lo,bin_hi,matched,unmatched\n"));
    }
}
