//! Transferability: the exact score of a tested controller and a linear
//! ν-support-vector regressor that predicts it from contact descriptors.
//!
//! Scores are signed so that larger is better: `-|sim - measured|`, 0 for
//! perfect agreement. A transferability threshold of 0.1 m therefore reads
//! as `score >= -0.1`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait::{Controller, LEGS};
use crate::scalar::Scalar;
use crate::sim::Descriptor;

/// Exact transferability of one real test.
#[inline]
pub fn exact_transferability<S: Scalar>(sim_performance: S, measured_performance: S) -> S {
    -(sim_performance - measured_performance).abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRecord {
    /// Generation at which the transfer happened.
    pub generation: usize,
    pub controller: Controller,
    /// Contact descriptor of the controller in the self-model.
    pub descriptor: Descriptor,
    pub sim_performance: f64,
    pub measured_performance: f64,
    /// Filled in by the harness after the run; never visible to algorithms.
    pub ground_truth_performance: Option<f64>,
    pub exact_score: f64,
    /// The robot tipped over during the test; excluded from training.
    pub fallen: bool,
    /// Set on the final-selection test.
    #[serde(default)]
    pub validation: bool,
}

impl TransferRecord {
    pub fn new(
        generation: usize,
        controller: Controller,
        descriptor: Descriptor,
        sim_performance: f64,
        measured_performance: f64,
        fallen: bool,
    ) -> Self {
        Self {
            generation,
            controller,
            descriptor,
            sim_performance,
            measured_performance,
            ground_truth_performance: None,
            exact_score: exact_transferability(sim_performance, measured_performance),
            fallen,
            validation: false,
        }
    }
}

/// Hyper-parameters of the ν-SVR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar", deny_unknown_fields, default)]
pub struct SvrConfig<S> {
    pub c: S,
    pub nu: S,
    /// Stopping tolerance on the maximal KKT violation.
    pub tolerance: S,
    pub max_iterations: usize,
}

impl<S: Scalar> Default for SvrConfig<S> {
    fn default() -> Self {
        Self {
            c: S::one(),
            nu: S::lit(0.5),
            tolerance: S::lit(1e-10),
            max_iterations: 1_000_000,
        }
    }
}

/// Affine predictor `w·x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Regressor<S> {
    pub weights: Vec<S>,
    pub bias: S,
    pub training_size: usize,
    pub training_rmse: S,
    /// Half-width of the insensitive tube found by the solver.
    pub epsilon: S,
}

impl<S: Scalar> Regressor<S> {
    pub fn predict(&self, x: &[S]) -> Result<S> {
        if x.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                actual: x.len(),
            });
        }
        Ok(self.weights.iter().zip(x).map(|(&w, &v)| w * v).sum::<S>() + self.bias)
    }

    pub fn predict_descriptor(&self, d: &Descriptor) -> Result<S> {
        if d.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                actual: d.len(),
            });
        }
        Ok(self
            .weights
            .iter()
            .zip(&d.0)
            .filter(|(_, &b)| b != 0)
            .map(|(&w, _)| w)
            .sum::<S>()
            + self.bias)
    }

    /// `index,leg,tick,weight` rows followed by a `bias` row.
    pub fn weights_csv(&self) -> String {
        let ticks = self.weights.len() / LEGS;
        let mut out = String::from("index,leg,tick,weight\n");
        for (i, w) in self.weights.iter().enumerate() {
            let (leg, tick) = if ticks > 0 { (i / ticks, i % ticks) } else { (0, i) };
            let _ = writeln!(out, "{i},{leg},{tick},{w}");
        }
        let _ = writeln!(out, "bias,,,{}", self.bias);
        out
    }
}

/// Prediction with the uninformative prior: 0 before any model exists.
pub fn predict<S: Scalar>(regressor: Option<&Regressor<S>>, d: &Descriptor) -> Result<S> {
    match regressor {
        Some(r) => r.predict_descriptor(d),
        None => Ok(S::zero()),
    }
}

/// Fits on every non-fallen record; `None` when there is none.
pub fn fit_records(records: &[TransferRecord], config: &SvrConfig<f64>) -> Result<Option<Regressor<f64>>> {
    let usable: Vec<&TransferRecord> = records.iter().filter(|r| !r.fallen).collect();
    if usable.is_empty() {
        return Ok(None);
    }
    let xs: Vec<Vec<f64>> = usable.iter().map(|r| r.descriptor.to_scalars()).collect();
    let ys: Vec<f64> = usable.iter().map(|r| r.exact_score).collect();
    fit(&xs, &ys, config).map(Some)
}

/// Linear ν-SVR trained by sequential minimal optimization.
///
/// Dual over `β = (α, α*)`, both in `[0, C/l]`:
/// minimize `½ (α-α*)ᵀK(α-α*) - yᵀ(α-α*)` with `Σα = Σα* = Cν/2`.
/// The per-sample bound `C/l` makes the model invariant to duplicating the
/// whole training set.
pub fn fit<S: Scalar>(xs: &[Vec<S>], ys: &[S], config: &SvrConfig<S>) -> Result<Regressor<S>> {
    let l = xs.len();
    if l == 0 {
        return Err(Error::InvalidConfig("ν-SVR needs at least one sample".into()));
    }
    if ys.len() != l {
        return Err(Error::DimensionMismatch {
            expected: l,
            actual: ys.len(),
        });
    }
    let dim = xs[0].len();
    if let Some(bad) = xs.iter().find(|x| x.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.len(),
        });
    }
    if !(config.c > S::zero()) || !(config.nu > S::zero() && config.nu <= S::one()) {
        return Err(Error::InvalidConfig(format!("ν-SVR needs C > 0 and ν in (0, 1], got C={} ν={}", config.c, config.nu)));
    }

    let dot = |a: &[S], b: &[S]| a.iter().zip(b).map(|(&u, &v)| u * v).sum::<S>();
    let mut kernel = vec![S::zero(); l * l];
    for i in 0..l {
        for j in i..l {
            let k = dot(&xs[i], &xs[j]);
            kernel[i * l + j] = k;
            kernel[j * l + i] = k;
        }
    }
    let n = 2 * l;
    let sample = |t: usize| t % l;
    let sign = |t: usize| if t < l { S::one() } else { -S::one() };
    let q = |t: usize, s: usize| sign(t) * sign(s) * kernel[sample(t) * l + sample(s)];

    let lf = S::from_usize(l).expect("sample count");
    let upper = config.c / lf;
    let mut beta = vec![S::zero(); n];
    let mut remaining = config.c * config.nu / S::lit(2.0);
    for i in 0..l {
        let v = remaining.min(upper);
        beta[i] = v;
        beta[i + l] = v;
        remaining = remaining - v;
    }
    // Gradient Qβ + p with p = (-y, y).
    let mut grad: Vec<S> = (0..n)
        .map(|t| {
            let linear = -sign(t) * ys[sample(t)];
            (0..n).map(|s| q(t, s) * beta[s]).sum::<S>() + linear
        })
        .collect();

    let at_upper = |b: S| b >= upper;
    let at_lower = |b: S| b <= S::zero();
    let tau = S::lit(1e-12);
    for _ in 0..config.max_iterations {
        // Within each half the sum of β is fixed: move mass from the variable
        // with the largest gradient to the one with the smallest.
        let mut best: Option<(S, usize, usize)> = None;
        for half in [0..l, l..n] {
            let mut up: Option<usize> = None;
            let mut down: Option<usize> = None;
            for t in half {
                if !at_upper(beta[t]) && up.is_none_or(|u| grad[t] < grad[u]) {
                    up = Some(t);
                }
                if !at_lower(beta[t]) && down.is_none_or(|d| grad[t] > grad[d]) {
                    down = Some(t);
                }
            }
            if let (Some(u), Some(d)) = (up, down) {
                let gap = grad[d] - grad[u];
                if best.is_none_or(|(g, _, _)| gap > g) {
                    best = Some((gap, u, d));
                }
            }
        }
        let Some((gap, u, d)) = best else { break };
        if gap <= config.tolerance {
            break;
        }
        let eta = (q(u, u) + q(d, d) - S::lit(2.0) * q(u, d)).max(tau);
        let step = (gap / eta).min(upper - beta[u]).min(beta[d]);
        if step <= S::zero() {
            break;
        }
        beta[u] = if upper - beta[u] <= step { upper } else { beta[u] + step };
        beta[d] = if beta[d] <= step { S::zero() } else { beta[d] - step };
        for (t, g) in grad.iter_mut().enumerate() {
            *g = *g + step * (q(t, u) - q(t, d));
        }
    }

    // Offsets of each half: mean gradient over free variables, else the
    // midpoint of the feasible interval.
    let level = |half: std::ops::Range<usize>| {
        let (mut sum, mut count) = (S::zero(), 0usize);
        let (mut ub, mut lb) = (S::infinity(), S::neg_infinity());
        for t in half {
            if at_upper(beta[t]) {
                lb = lb.max(grad[t]);
            } else if at_lower(beta[t]) {
                ub = ub.min(grad[t]);
            } else {
                sum = sum + grad[t];
                count += 1;
            }
        }
        if count > 0 {
            sum / S::from_usize(count).expect("count")
        } else {
            (ub + lb) / S::lit(2.0)
        }
    };
    let r1 = level(0..l);
    let r2 = level(l..n);
    let bias = (r2 - r1) / S::lit(2.0);
    let epsilon = -(r1 + r2) / S::lit(2.0);

    let mut weights = vec![S::zero(); dim];
    for i in 0..l {
        let coef = beta[i] - beta[i + l];
        if coef != S::zero() {
            for (w, &x) in weights.iter_mut().zip(&xs[i]) {
                *w = *w + coef * x;
            }
        }
    }
    let mut regressor = Regressor {
        weights,
        bias,
        training_size: l,
        training_rmse: S::zero(),
        epsilon,
    };
    let sse = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let e = regressor.predict(x).expect("checked dimensions") - y;
            e * e
        })
        .sum::<S>();
    regressor.training_rmse = (sse / lf).sqrt();
    Ok(regressor)
}
