//! One-parameter logistic model over the best objective values seen with each
//! binary component set to 1 and to 0.
//!
//! For component `j` the model predicts
//! `P(x*_j = 1) = 1 / (1 + exp(theta * (d1_j - d0_j)))`, where `d1_j` and `d0_j`
//! are the best makespans observed so far with `x_j = 1` and `x_j = 0`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::BitVector;
use crate::instance::Time;
use crate::tabu::{EpochRecord, SearchObserver, StepInfo};

/// Bracket searched by [`fit_theta`].
pub const THETA_BRACKET: (f64, f64) = (-10.0, 10.0);

const GRADIENT_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum LearningError {
    #[error("training table is empty")]
    EmptyTable,
    #[error("backbone bound undefined: p_b ({p_b}) must exceed p_o ({p_o})")]
    BoundUndefined { p_b: f64, p_o: f64 },
    #[error("{name} = {value} is outside [0, 1]")]
    NotAProbability { name: &'static str, value: f64 },
    #[error("malformed training table line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

/// Best objective seen per component and per value. `None` means the side was
/// never observed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectiveBounds {
    pub d1: Vec<Option<Time>>,
    pub d0: Vec<Option<Time>>,
}

impl ObjectiveBounds {
    pub fn new(n_components: usize) -> Self {
        ObjectiveBounds {
            d1: vec![None; n_components],
            d0: vec![None; n_components],
        }
    }

    pub fn len(&self) -> usize {
        self.d1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d1.is_empty()
    }

    /// Folds one visited solution into the bounds.
    pub fn observe(&mut self, bits: &BitVector, makespan: Time) {
        assert_eq!(bits.len(), self.len(), "bit vector length mismatch");
        for (j, &b) in bits.0.iter().enumerate() {
            let slot = if b { &mut self.d1[j] } else { &mut self.d0[j] };
            *slot = Some(slot.map_or(makespan, |v| v.min(makespan)));
        }
    }

    /// Both sides of component `j`, when both were seen.
    pub fn pair(&self, j: usize) -> Option<(Time, Time)> {
        Some((self.d1[j]?, self.d0[j]?))
    }
}

/// Bounds at the end of an epoch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundsSnapshot {
    pub epoch: u32,
    #[serde(flatten)]
    pub bounds: ObjectiveBounds,
}

/// Collects bounds from a running search: the new incumbent is observed every
/// `period` iterations and whenever it improves the best solution.
#[derive(Debug, Clone)]
pub struct BoundsRecorder {
    period: u64,
    bounds: ObjectiveBounds,
    snapshots: Option<Vec<BoundsSnapshot>>,
}

impl BoundsRecorder {
    pub fn new(n_components: usize, period: u64, keep_snapshots: bool) -> Self {
        assert!(period >= 1, "update period must be at least 1");
        BoundsRecorder {
            period,
            bounds: ObjectiveBounds::new(n_components),
            snapshots: keep_snapshots.then(Vec::new),
        }
    }

    pub fn bounds(&self) -> &ObjectiveBounds {
        &self.bounds
    }

    pub fn snapshots(&self) -> &[BoundsSnapshot] {
        self.snapshots.as_deref().unwrap_or(&[])
    }

    pub fn into_snapshots(self) -> Vec<BoundsSnapshot> {
        self.snapshots.unwrap_or_default()
    }
}

impl SearchObserver for BoundsRecorder {
    fn on_step(&mut self, step: &StepInfo<'_>) {
        if step.iter.is_multiple_of(self.period) || step.improved {
            self.bounds.observe(step.bits, step.makespan);
        }
    }

    fn on_epoch_end(&mut self, record: &EpochRecord) {
        if let Some(s) = &mut self.snapshots {
            s.push(BoundsSnapshot {
                epoch: record.epoch,
                bounds: self.bounds.clone(),
            });
        }
    }
}

/// Stable sigmoid.
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(sigmoid(x))` without cancellation.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticModel {
    pub theta: f64,
}

impl LogisticModel {
    pub fn new(theta: f64) -> Self {
        LogisticModel { theta }
    }

    pub fn predict(&self, d1: Time, d0: Time) -> f64 {
        predict(self.theta, d1, d0)
    }
}

/// Estimated probability that the component equals 1 in an optimal solution.
/// Saturates to 0 or 1 instead of overflowing.
pub fn predict(theta: f64, d1: Time, d0: Time) -> f64 {
    let diff = d1 as f64 - d0 as f64;
    sigmoid(-theta * diff)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub d1: Time,
    pub d0: Time,
    pub opt: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrainingTable {
    pub rows: Vec<TrainingRow>,
}

impl TrainingTable {
    pub fn new(rows: Vec<TrainingRow>) -> Self {
        TrainingTable { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("d1,d0,opt\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{}", r.d1, r.d0, r.opt as u8);
        }
        out
    }

    /// Reads the `d1,d0,opt` layout. The header line is optional.
    pub fn from_csv(text: &str) -> Result<Self, LearningError> {
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (n == 0 && line.starts_with("d1")) {
                continue;
            }
            let bad = |reason: &str| LearningError::Csv {
                line: n + 1,
                reason: reason.to_string(),
            };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(bad("expected 3 fields"));
            }
            let d1 = fields[0].parse().map_err(|_| bad("d1 is not an integer"))?;
            let d0 = fields[1].parse().map_err(|_| bad("d0 is not an integer"))?;
            let opt = match fields[2] {
                "0" => false,
                "1" => true,
                _ => return Err(bad("opt must be 0 or 1")),
            };
            rows.push(TrainingRow { d1, d0, opt });
        }
        Ok(TrainingTable { rows })
    }
}

/// One row per component seen with both values, labelled by the reference
/// solution's value of that component.
pub fn build_training_table(bounds: &ObjectiveBounds, reference: &BitVector) -> TrainingTable {
    assert_eq!(bounds.len(), reference.len(), "bit vector length mismatch");
    let rows = (0..bounds.len())
        .filter_map(|j| {
            let (d1, d0) = bounds.pair(j)?;
            Some(TrainingRow {
                d1,
                d0,
                opt: reference.get(j),
            })
        })
        .collect();
    TrainingTable { rows }
}

/// Log-likelihood of the table under `theta`.
pub fn log_likelihood(theta: f64, table: &TrainingTable) -> f64 {
    table
        .rows
        .iter()
        .map(|r| {
            let z = r.d1 as f64 - r.d0 as f64;
            if r.opt {
                log_sigmoid(-theta * z)
            } else {
                log_sigmoid(theta * z)
            }
        })
        .sum()
}

/// Derivative of the log-likelihood: `sum z * (p - opt)`.
fn gradient(theta: f64, table: &TrainingTable) -> f64 {
    table
        .rows
        .iter()
        .map(|r| {
            let z = r.d1 as f64 - r.d0 as f64;
            z * (sigmoid(-theta * z) - r.opt as u8 as f64)
        })
        .sum()
}

fn curvature(theta: f64, table: &TrainingTable) -> f64 {
    table
        .rows
        .iter()
        .map(|r| {
            let z = r.d1 as f64 - r.d0 as f64;
            let p = sigmoid(-theta * z);
            z * z * p * (1.0 - p)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fit {
    pub model: LogisticModel,
    pub log_likelihood: f64,
    /// The optimum lies at (or beyond) a bracket endpoint.
    pub separated: bool,
}

/// Maximum likelihood estimate of theta within [`THETA_BRACKET`].
///
/// The log-likelihood is concave, so its derivative is decreasing; the root is
/// found by Newton steps safeguarded with bisection. A table where every row
/// has `d1 == d0` carries no information and yields `theta = 0`.
pub fn fit_theta(table: &TrainingTable) -> Result<Fit, LearningError> {
    if table.is_empty() {
        return Err(LearningError::EmptyTable);
    }
    let done = |theta: f64, separated: bool| Fit {
        model: LogisticModel::new(theta),
        log_likelihood: log_likelihood(theta, table),
        separated,
    };
    if table.rows.iter().all(|r| r.d1 == r.d0) {
        return Ok(done(0.0, false));
    }
    let (mut lo, mut hi) = THETA_BRACKET;
    let g_lo = gradient(lo, table);
    let g_hi = gradient(hi, table);
    if g_hi >= 0.0 {
        return Ok(done(hi, true));
    }
    if g_lo <= 0.0 {
        return Ok(done(lo, true));
    }

    let mut theta = 0.0;
    for _ in 0..500 {
        let g = gradient(theta, table);
        if g.abs() < GRADIENT_TOL {
            break;
        }
        if g > 0.0 {
            lo = theta;
        } else {
            hi = theta;
        }
        if hi - lo <= f64::EPSILON * theta.abs().max(1.0) {
            break;
        }
        let h = curvature(theta, table);
        let newton = theta + g / h;
        theta = if h > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(done(theta, false))
}

/// Fraction of rows whose prediction side matches the label. A prediction of
/// exactly 0.5 earns half credit.
pub fn accuracy(model: &LogisticModel, table: &TrainingTable) -> f64 {
    if table.is_empty() {
        return f64::NAN;
    }
    let score: f64 = table
        .rows
        .iter()
        .map(|r| {
            let p = model.predict(r.d1, r.d0);
            if p == 0.5 {
                0.5
            } else if (p > 0.5) == r.opt {
                1.0
            } else {
                0.0
            }
        })
        .sum();
    score / table.len() as f64
}

/// Upper bound on the normalized backbone size from
/// `A = p_b * rho + p_o * (1 - rho)`, clamped to [0, 1].
pub fn backbone_upper_bound(accuracy: f64, p_b: f64, p_o: f64) -> Result<f64, LearningError> {
    for (name, value) in [("A", accuracy), ("p_b", p_b), ("p_o", p_o)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(LearningError::NotAProbability { name, value });
        }
    }
    if p_b <= p_o {
        return Err(LearningError::BoundUndefined { p_b, p_o });
    }
    Ok(((accuracy - p_o) / (p_b - p_o)).clamp(0.0, 1.0))
}
