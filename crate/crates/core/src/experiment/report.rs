//! Mean and standard deviation tables over result rows.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::experiment::runner::ResultRow;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    /// Sample statistics over the finite values; `NaN` mean when none.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        let n = v.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                n,
            };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            std: var.sqrt(),
            n,
        }
    }

    pub fn std_error(&self) -> f64 {
        self.std / (self.n.max(1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub composition: String,
    pub sweep_value: f64,
    pub method: String,
    pub trials: usize,
    pub failed: usize,
    pub nmse_delay: Stat,
    pub nmse_doppler: Stat,
    pub rmse_aoa_deg: Stat,
    pub clustering_accuracy: Stat,
    pub miss_rate: Stat,
    pub false_alarm_rate: Stat,
}

/// One summary per `(composition, sweep value, method)` in first-seen order.
/// Failed rows are counted but excluded from the statistics.
pub fn summarize(rows: &[ResultRow]) -> Vec<Summary> {
    let mut keys: Vec<(String, u64, String)> = Vec::new();
    for r in rows {
        let k = (r.composition.clone(), r.sweep_value.to_bits(), r.method.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(comp, bits, method)| {
            let group: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| r.composition == comp && r.sweep_value.to_bits() == bits && r.method == method)
                .collect();
            let ok: Vec<&&ResultRow> = group.iter().filter(|r| !r.failed).collect();
            let stat = |f: fn(&ResultRow) -> f64| Stat::of(ok.iter().map(|r| f(r)));
            Summary {
                composition: comp,
                sweep_value: f64::from_bits(bits),
                method,
                trials: group.len(),
                failed: group.len() - ok.len(),
                nmse_delay: stat(|r| r.nmse_delay),
                nmse_doppler: stat(|r| r.nmse_doppler),
                rmse_aoa_deg: stat(|r| r.rmse_aoa_deg),
                clustering_accuracy: stat(|r| r.clustering_accuracy.unwrap_or(f64::NAN)),
                miss_rate: stat(|r| r.miss_rate),
                false_alarm_rate: stat(|r| r.false_alarm_rate),
            }
        })
        .collect()
}

pub fn find<'a>(summaries: &'a [Summary], composition: &str, value: f64, method: &str) -> Option<&'a Summary> {
    summaries
        .iter()
        .find(|s| s.composition == composition && s.sweep_value == value && s.method == method)
}

fn cell(s: &Stat) -> String {
    if s.n == 0 {
        "-".to_string()
    } else {
        format!("{:.3e} ± {:.1e}", s.mean, s.std)
    }
}

/// Plain-text table, one line per summary.
pub fn format_table(summaries: &[Summary]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<6} {:>8} {:<15} {:>6} {:>22} {:>22} {:>22} {:>10} {:>8} {:>8}",
        "comp", "value", "method", "trials", "nmse_delay", "nmse_doppler", "rmse_aoa_deg", "accuracy", "miss", "fa"
    );
    for s in summaries {
        let acc = if s.clustering_accuracy.n == 0 {
            "-".to_string()
        } else {
            format!("{:.3}", s.clustering_accuracy.mean)
        };
        let _ = writeln!(
            out,
            "{:<6} {:>8} {:<15} {:>6} {:>22} {:>22} {:>22} {:>10} {:>8.3} {:>8.3}",
            s.composition,
            s.sweep_value,
            s.method,
            format!("{}{}", s.trials, if s.failed > 0 { "!" } else { "" }),
            cell(&s.nmse_delay),
            cell(&s.nmse_doppler),
            cell(&s.rmse_aoa_deg),
            acc,
            s.miss_rate.mean,
            s.false_alarm_rate.mean
        );
    }
    out
}
