//! Rank tests and box-plot summaries over replicate runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Pooled sample size up to which the rank-sum null distribution is
/// enumerated exactly.
pub const EXACT_LIMIT: usize = 20;

/// Mid-ranks (1-based) of `values`, doubled so that they are integers.
fn doubled_midranks(values: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u64; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Ranks start+1 ..= end share their mean; doubled: start + 1 + end.
        let doubled = (start + 1 + end) as u64;
        for &i in &order[start..end] {
            ranks[i] = doubled;
        }
        start = end;
    }
    ranks
}

fn tie_sizes(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut sizes = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        sizes.push(j);
        i += j;
    }
    sizes
}

/// Number of `k`-subsets of `items` with each possible sum.
fn subset_sum_counts(items: &[u64], k: usize) -> Vec<f64> {
    let total: u64 = items.iter().sum();
    let width = total as usize + 1;
    let mut table = vec![vec![0.0f64; width]; k + 1];
    table[0][0] = 1.0;
    for &item in items {
        let item = item as usize;
        for size in (1..=k).rev() {
            let (lower, upper) = table.split_at_mut(size);
            let from = &lower[size - 1];
            let to = &mut upper[0];
            for s in (item..width).rev() {
                to[s] += from[s - item];
            }
        }
    }
    table.swap_remove(k)
}

/// Two-sided Wilcoxon rank-sum (Mann-Whitney) p-value.
///
/// Exact enumeration with mid-ranks when the pooled size is at most
/// [`EXACT_LIMIT`]; otherwise the normal approximation with tie and
/// continuity corrections.
pub fn wilcoxon_rank_sum(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidConfig("rank-sum test needs two non-empty samples".into()));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::InvalidConfig("rank-sum test got NaN".into()));
    }
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    if pooled.iter().all(|&v| v == pooled[0]) {
        return Ok(1.0);
    }
    let (nx, n) = (x.len(), pooled.len());
    let ranks = doubled_midranks(&pooled);
    let observed: u64 = ranks[..nx].iter().sum();
    // Expected doubled rank sum of x: nx(n+1).
    let center = (nx * (n + 1)) as i64;
    if n <= EXACT_LIMIT {
        let distance = (observed as i64 - center).abs();
        let counts = subset_sum_counts(&ranks, nx);
        let total: f64 = counts.iter().sum();
        let extreme: f64 = counts
            .iter()
            .enumerate()
            .filter(|(s, _)| (*s as i64 - center).abs() >= distance)
            .map(|(_, c)| c)
            .sum();
        return Ok((extreme / total).min(1.0));
    }
    let (nxf, nyf, nf) = (nx as f64, (n - nx) as f64, n as f64);
    let w = observed as f64 / 2.0;
    let mean = nxf * (nf + 1.0) / 2.0;
    let ties: f64 = tie_sizes(&pooled).iter().map(|&t| (t * t * t - t) as f64).sum();
    let var = nxf * nyf / 12.0 * ((nf + 1.0) - ties / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return Ok(1.0);
    }
    let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::standard();
    Ok((2.0 * (1.0 - normal.cdf(z))).min(1.0))
}

/// Two-sided exact one-sample Wilcoxon signed-rank p-value; zero
/// differences are dropped.
pub fn wilcoxon_signed_rank(d: &[f64]) -> Result<f64> {
    if d.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidConfig("signed-rank test got NaN".into()));
    }
    let nonzero: Vec<f64> = d.iter().copied().filter(|&v| v != 0.0).collect();
    if nonzero.is_empty() {
        return Ok(1.0);
    }
    let magnitudes: Vec<f64> = nonzero.iter().map(|v| v.abs()).collect();
    let ranks = doubled_midranks(&magnitudes);
    let total: u64 = ranks.iter().sum();
    let positive: u64 = ranks.iter().zip(&nonzero).filter(|(_, v)| **v > 0.0).map(|(r, _)| r).sum();
    let mut counts = vec![0.0f64; total as usize + 1];
    counts[0] = 1.0;
    for &r in &ranks {
        let r = r as usize;
        for s in (r..counts.len()).rev() {
            counts[s] += counts[s - r];
        }
    }
    let distance = (2 * positive as i64 - total as i64).abs();
    let all: f64 = counts.iter().sum();
    let extreme: f64 = counts
        .iter()
        .enumerate()
        .filter(|(s, _)| (2 * *s as i64 - total as i64).abs() >= distance)
        .map(|(_, c)| c)
        .sum();
    Ok((extreme / all).min(1.0))
}

/// Median of a sorted slice.
fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Box-plot statistics with Tukey hinges and 1.5·IQR whiskers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub median: f64,
    pub lower_hinge: f64,
    pub upper_hinge: f64,
    /// Most extreme observations within 1.5·IQR of the hinges.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub min: f64,
    pub max: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("cannot summarize an empty sample".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    // Tukey: halves include the median when n is odd.
    let half = n.div_ceil(2);
    let lower_hinge = median_sorted(&v[..half]);
    let upper_hinge = median_sorted(&v[n - half..]);
    let iqr = upper_hinge - lower_hinge;
    let (lo_fence, hi_fence) = (lower_hinge - 1.5 * iqr, upper_hinge + 1.5 * iqr);
    let whisker_low = v.iter().copied().find(|&x| x >= lo_fence).unwrap_or(v[0]);
    let whisker_high = v.iter().rev().copied().find(|&x| x <= hi_fence).unwrap_or(v[n - 1]);
    Ok(Summary {
        n,
        median: median_sorted(&v),
        lower_hinge,
        upper_hinge,
        whisker_low,
        whisker_high,
        min: v[0],
        max: v[n - 1],
    })
}

/// Marker used in place of a ratio whose denominator median is not positive.
pub const NON_POSITIVE_FLAG: &str = "+++";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub scenario: String,
    pub algorithm: String,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub scenario: String,
    pub algorithm: String,
    pub baseline: String,
    pub median: f64,
    pub baseline_median: f64,
    /// `None` when the baseline median is `<= 0`.
    pub ratio: Option<f64>,
    pub difference: f64,
    pub p_value: f64,
    pub n: usize,
    pub baseline_n: usize,
}

impl PairComparison {
    pub fn ratio_label(&self) -> String {
        match self.ratio {
            Some(r) => format!("{r:.2}"),
            None => NON_POSITIVE_FLAG.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub cells: Vec<CellSummary>,
    pub pairs: Vec<PairComparison>,
}

/// Values keyed by (scenario, algorithm).
pub type Groups = BTreeMap<(String, String), Vec<f64>>;

/// Summarizes every cell and compares `focus` against every other
/// algorithm of the same scenario; without a focus every pair is compared.
pub fn compare(groups: &Groups, focus: Option<&str>) -> Result<ComparisonReport> {
    let mut report = ComparisonReport::default();
    for ((scenario, algorithm), values) in groups {
        report.cells.push(CellSummary {
            scenario: scenario.clone(),
            algorithm: algorithm.clone(),
            summary: summarize(values)?,
        });
    }
    let scenarios: BTreeSet<&String> = groups.keys().map(|k| &k.0).collect();
    for scenario in scenarios {
        let algos: Vec<&String> = groups.keys().filter(|k| &k.0 == scenario).map(|k| &k.1).collect();
        for (i, a) in algos.iter().enumerate() {
            for (j, b) in algos.iter().enumerate() {
                let wanted = match focus {
                    Some(f) => a.as_str() == f && b.as_str() != f,
                    None => i < j,
                };
                if !wanted {
                    continue;
                }
                let xa = &groups[&(scenario.clone(), (*a).clone())];
                let xb = &groups[&(scenario.clone(), (*b).clone())];
                let (ma, mb) = (summarize(xa)?.median, summarize(xb)?.median);
                report.pairs.push(PairComparison {
                    scenario: scenario.clone(),
                    algorithm: (*a).clone(),
                    baseline: (*b).clone(),
                    median: ma,
                    baseline_median: mb,
                    ratio: (mb > 0.0).then(|| ma / mb),
                    difference: ma - mb,
                    p_value: wilcoxon_rank_sum(xa, xb)?,
                    n: xa.len(),
                    baseline_n: xb.len(),
                });
            }
        }
    }
    Ok(report)
}

impl ComparisonReport {
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("scenario,algorithm,n,median,lower_hinge,upper_hinge,whisker_low,whisker_high,min,max\n");
        for c in &self.cells {
            let s = &c.summary;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                c.scenario, c.algorithm, s.n, s.median, s.lower_hinge, s.upper_hinge, s.whisker_low, s.whisker_high, s.min, s.max
            );
        }
        out
    }

    pub fn pairs_csv(&self) -> String {
        let mut out = String::from("scenario,algorithm,baseline,median,baseline_median,ratio,difference,p_value,n,baseline_n\n");
        for p in &self.pairs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                p.scenario,
                p.algorithm,
                p.baseline,
                p.median,
                p.baseline_median,
                p.ratio.map_or(NON_POSITIVE_FLAG.to_string(), |r| r.to_string()),
                p.difference,
                p.p_value,
                p.n,
                p.baseline_n
            );
        }
        out
    }

    /// One grid per quantity: rows are algorithm pairs, columns scenarios.
    fn grid(&self, cell: impl Fn(&PairComparison) -> String) -> (Vec<String>, Vec<(String, Vec<String>)>) {
        let scenarios: Vec<String> = self.pairs.iter().map(|p| p.scenario.clone()).collect::<BTreeSet<_>>().into_iter().collect();
        let rows: Vec<(String, String)> = self
            .pairs
            .iter()
            .map(|p| (p.algorithm.clone(), p.baseline.clone()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let body = rows
            .iter()
            .map(|(a, b)| {
                let cells = scenarios
                    .iter()
                    .map(|s| {
                        self.pairs
                            .iter()
                            .find(|p| &p.scenario == s && &p.algorithm == a && &p.baseline == b)
                            .map_or("-".to_string(), &cell)
                    })
                    .collect();
                (format!("{a} vs {b}"), cells)
            })
            .collect();
        (scenarios, body)
    }

    fn grid_csv(&self, cell: impl Fn(&PairComparison) -> String) -> String {
        let (scenarios, rows) = self.grid(cell);
        let mut out = format!("comparison,{}\n", scenarios.join(","));
        for (label, cells) in rows {
            let _ = writeln!(out, "{label},{}", cells.join(","));
        }
        out
    }

    pub fn ratio_csv(&self) -> String {
        self.grid_csv(|p| p.ratio.map_or(NON_POSITIVE_FLAG.to_string(), |r| r.to_string()))
    }

    pub fn difference_csv(&self) -> String {
        self.grid_csv(|p| p.difference.to_string())
    }

    pub fn p_value_csv(&self) -> String {
        self.grid_csv(|p| p.p_value.to_string())
    }

    /// Fixed-width text rendering of the three grids.
    pub fn text(&self) -> String {
        let mut out = String::new();
        let sections: [(&str, Box<dyn Fn(&PairComparison) -> String>); 3] = [
            ("Ratio of medians", Box::new(|p: &PairComparison| p.ratio_label())),
            ("Difference of medians (m)", Box::new(|p: &PairComparison| format!("{:.3}", p.difference))),
            ("Rank-sum p-value", Box::new(|p: &PairComparison| format!("{:.4}", p.p_value))),
        ];
        for (title, cell) in sections {
            let (scenarios, rows) = self.grid(cell);
            let label_width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(10);
            let _ = writeln!(out, "{title}");
            let _ = write!(out, "{:label_width$}", "");
            for s in &scenarios {
                let _ = write!(out, " {s:>8}");
            }
            out.push('\n');
            for (label, cells) in rows {
                let _ = write!(out, "{label:label_width$}");
                for c in cells {
                    let _ = write!(out, " {c:>8}");
                }
                out.push('\n');
            }
            out.push('\n');
        }
        if self.pairs.iter().any(|p| p.ratio.is_none()) {
            let _ = writeln!(out, "{NON_POSITIVE_FLAG}: the baseline median is negative or zero");
        }
        out
    }
}
