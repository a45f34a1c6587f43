//! Sample-efficiency metrics for transfer experiments.
//!
//! `n` is the number of environment steps a run needs before its evaluation
//! success first reaches the threshold, `alpha` the fraction of seeds that
//! get there within the budget, and the relative cost compares the
//! success-normalised step counts `n / alpha` of two methods.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::trainer::RunLog;

/// First evaluation step whose average success is at least `threshold`.
///
/// Records after `n_max` are ignored. There is no interpolation between
/// evaluations.
pub fn required_steps(log: &RunLog, threshold: f64, n_max: u64) -> Option<u64> {
    log.records
        .iter()
        .take_while(|r| r.env_step <= n_max)
        .find(|r| r.average_success() >= threshold)
        .map(|r| r.env_step)
}

/// Fraction of runs that reach `threshold` within `n_max` steps.
pub fn transfer_success(logs: &[RunLog], threshold: f64, n_max: u64) -> f64 {
    if logs.is_empty() {
        return 0.0;
    }
    let hits = logs.iter().filter(|l| required_steps(l, threshold, n_max).is_some()).count();
    hits as f64 / logs.len() as f64
}

/// `(n_t / alpha_t) / (n_s / alpha_s)`; `None` when either success rate is
/// zero or a step count is not positive.
pub fn relative_cost(n_t: f64, alpha_t: f64, n_s: f64, alpha_s: f64) -> Option<f64> {
    if !(alpha_t > 0.0 && alpha_s > 0.0 && n_t > 0.0 && n_s > 0.0) {
        return None;
    }
    Some((n_t / alpha_t) / (n_s / alpha_s))
}

/// Mean step count over the runs that reached the threshold.
pub fn mean_required_steps(logs: &[RunLog], threshold: f64, n_max: u64) -> Option<f64> {
    let hits: Vec<u64> = logs.iter().filter_map(|l| required_steps(l, threshold, n_max)).collect();
    if hits.is_empty() {
        None
    } else {
        Some(hits.iter().map(|&n| n as f64).sum::<f64>() / hits.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub seed: u64,
    pub transfer_steps: Option<u64>,
    pub scratch_steps: Option<u64>,
}

impl SeedRow {
    /// Paired cost of this seed: `n_t / n_s` when both runs succeeded.
    pub fn relative_cost(&self) -> Option<f64> {
        match (self.transfer_steps, self.scratch_steps) {
            (Some(t), Some(s)) => relative_cost(t as f64, 1.0, s as f64, 1.0),
            _ => None,
        }
    }
}

/// Transfer-versus-scratch comparison on one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub task: String,
    pub method: String,
    pub threshold: f64,
    pub n_max: u64,
    pub n_transfer: Option<f64>,
    pub alpha_transfer: f64,
    pub n_scratch: Option<f64>,
    pub alpha_scratch: f64,
    /// `None` when undefined (a method never succeeded).
    pub relative_cost: Option<f64>,
    pub seeds: Vec<SeedRow>,
}

impl TransferReport {
    /// Pairs transfer and scratch logs by seed; unpaired seeds still count
    /// towards their own method's success rate.
    pub fn from_logs(
        task: &str,
        method: &str,
        transfer: &[RunLog],
        scratch: &[RunLog],
        threshold: f64,
        n_max: u64,
    ) -> Self {
        let n_transfer = mean_required_steps(transfer, threshold, n_max);
        let n_scratch = mean_required_steps(scratch, threshold, n_max);
        let alpha_transfer = transfer_success(transfer, threshold, n_max);
        let alpha_scratch = transfer_success(scratch, threshold, n_max);
        let relative = match (n_transfer, n_scratch) {
            (Some(t), Some(s)) => relative_cost(t, alpha_transfer, s, alpha_scratch),
            _ => None,
        };
        let mut seeds: Vec<u64> = transfer.iter().chain(scratch).map(|l| l.meta.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        let steps = |logs: &[RunLog], seed: u64| {
            logs.iter()
                .find(|l| l.meta.seed == seed)
                .and_then(|l| required_steps(l, threshold, n_max))
        };
        Self {
            task: task.to_string(),
            method: method.to_string(),
            threshold,
            n_max,
            n_transfer,
            alpha_transfer,
            n_scratch,
            alpha_scratch,
            relative_cost: relative,
            seeds: seeds
                .into_iter()
                .map(|seed| SeedRow {
                    seed,
                    transfer_steps: steps(transfer, seed),
                    scratch_steps: steps(scratch, seed),
                })
                .collect(),
        }
    }

    /// Median of the per-seed paired costs, counting an undefined cost as
    /// infinitely expensive.
    pub fn median_seed_cost(&self) -> Option<f64> {
        let mut costs: Vec<f64> = self
            .seeds
            .iter()
            .map(|r| r.relative_cost().unwrap_or(f64::INFINITY))
            .collect();
        if costs.is_empty() {
            return None;
        }
        costs.sort_by(f64::total_cmp);
        let m = costs.len() / 2;
        let med = if costs.len() % 2 == 1 {
            costs[m]
        } else {
            (costs[m - 1] + costs[m]) / 2.0
        };
        med.is_finite().then_some(med)
    }

    /// Table cell in the `cost/success` style, e.g. `0.528/1.0`.
    pub fn cost_success_cell(&self) -> String {
        format!("{}/{}", CostCell(self.relative_cost), fmt_rate(self.alpha_transfer))
    }
}

struct CostCell(Option<f64>);

impl fmt::Display for CostCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(c) => write!(f, "{c:.3}"),
            None => f.write_str("-"),
        }
    }
}

fn fmt_rate(r: f64) -> String {
    format!("{r:.1}")
}

/// CSV with one row per report: the cost/success pair plus the raw terms.
pub fn reports_csv(reports: &[TransferReport]) -> String {
    let mut out = String::from(
        "task,method,cost/success,relative_cost,n_transfer,alpha_transfer,n_scratch,alpha_scratch,seeds\n",
    );
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.0}")).unwrap_or_default();
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{:.2},{},{:.2},{}\n",
            r.task,
            r.method,
            r.cost_success_cell(),
            r.relative_cost.map(|c| format!("{c:.4}")).unwrap_or_else(|| "undefined".into()),
            opt(r.n_transfer),
            r.alpha_transfer,
            opt(r.n_scratch),
            r.alpha_scratch,
            r.seeds.len(),
        ));
    }
    out
}

/// Per-seed detail rows of every report.
pub fn seed_rows_csv(reports: &[TransferReport]) -> String {
    let mut out = String::from("task,method,seed,transfer_steps,scratch_steps,relative_cost\n");
    let steps = |v: Option<u64>| v.map(|s| s.to_string()).unwrap_or_else(|| "not reached".into());
    for r in reports {
        for row in &r.seeds {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.task,
                r.method,
                row.seed,
                steps(row.transfer_steps),
                steps(row.scratch_steps),
                row.relative_cost().map(|c| format!("{c:.4}")).unwrap_or_else(|| "undefined".into()),
            ));
        }
    }
    out
}
