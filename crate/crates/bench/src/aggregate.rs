//! Quantile aggregation of per-trial traces.

use scsolve_core::solver::TraceRecord;
use serde::Serialize;

/// Linear interpolation between order statistics (Hyndman-Fan type 7).
/// `sorted` must be nonempty and ascending.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuantileRow {
    pub k: usize,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl QuantileRow {
    fn of(k: usize, values: &mut [f64]) -> Self {
        values.sort_by(f64::total_cmp);
        Self {
            k,
            min: values[0],
            q25: quantile_sorted(values, 0.25),
            median: quantile_sorted(values, 0.5),
            q75: quantile_sorted(values, 0.75),
            max: values[values.len() - 1],
        }
    }
}

/// Per-iteration quantiles across trials of the metric picked by `metric`.
///
/// Rows are the union of recorded iterations. A trial without a record at
/// some `k` contributes its most recent earlier value, so a trial that has
/// already stopped keeps its terminal value. Trials whose metric is missing
/// at every record are ignored.
pub fn aggregate_traces(traces: &[&[TraceRecord]], metric: impl Fn(&TraceRecord) -> Option<f64>) -> Vec<QuantileRow> {
    let series: Vec<Vec<(usize, f64)>> = traces
        .iter()
        .map(|t| t.iter().filter_map(|r| metric(r).map(|v| (r.k, v))).collect::<Vec<_>>())
        .filter(|s: &Vec<(usize, f64)>| !s.is_empty())
        .collect();
    let mut ks: Vec<usize> = series.iter().flatten().map(|&(k, _)| k).collect();
    ks.sort_unstable();
    ks.dedup();

    let mut cursor = vec![0usize; series.len()];
    let mut values = Vec::with_capacity(series.len());
    let mut rows = Vec::with_capacity(ks.len());
    for &k in &ks {
        values.clear();
        for (s, c) in series.iter().zip(cursor.iter_mut()) {
            while *c + 1 < s.len() && s[*c + 1].0 <= k {
                *c += 1;
            }
            // Every trial records k = 0, so the first value is a valid
            // stand-in before its first record.
            values.push(s[*c].1);
        }
        rows.push(QuantileRow::of(k, &mut values));
    }
    rows
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, 0.5)
}
