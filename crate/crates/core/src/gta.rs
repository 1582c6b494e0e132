//! Guided tabu search: the plain tabu loop, but a component whose new value
//! agrees with the logistic prediction stays tabu longer, in proportion to
//! the odds of that prediction.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::PairIndexSet;
use crate::instance::Instance;
use crate::learning::{predict, ObjectiveBounds};
use crate::tabu::{
    run_with_policy, RunOutcome, RunParams, SearchObserver, StepInfo, TenurePolicy, TenureRange,
};

#[derive(Debug, Error, PartialEq)]
pub enum GtaError {
    #[error("theta_min ({min}) must be positive and below theta_max ({max})")]
    ThetaRange { min: f64, max: f64 },
    #[error("the epoch schedule needs at least 3 epochs, got {0}")]
    TooFewEpochs(u32),
    #[error("the time schedule needs a positive horizon")]
    ZeroHorizon,
    #[error("update period must be at least 1")]
    ZeroPeriod,
    #[error("epsilon must be positive, got {0}")]
    Epsilon(f64),
}

/// How theta grows over a run. Both growing modes are log-uniform between
/// `min` and `max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ThetaSchedule {
    ByEpoch { min: f64, max: f64, nepochs: u32 },
    ByTime { min: f64, max: f64, horizon: Duration },
    Constant(f64),
}

impl ThetaSchedule {
    pub fn by_epoch(min: f64, max: f64, nepochs: u32) -> Result<Self, GtaError> {
        check_range(min, max)?;
        if nepochs < 3 {
            return Err(GtaError::TooFewEpochs(nepochs));
        }
        Ok(ThetaSchedule::ByEpoch { min, max, nepochs })
    }

    pub fn by_time(min: f64, max: f64, horizon: Duration) -> Result<Self, GtaError> {
        check_range(min, max)?;
        if horizon.is_zero() {
            return Err(GtaError::ZeroHorizon);
        }
        Ok(ThetaSchedule::ByTime { min, max, horizon })
    }

    /// Theta for the epoch following `epoch` (by-epoch mode) or at `elapsed`
    /// (by-time mode):
    /// `min * exp(ln(max / min) * (epoch - 1) / (nepochs - 2))`, with
    /// `elapsed / horizon` as the fraction in by-time mode.
    pub fn theta_at(&self, epoch: u32, elapsed: Duration) -> f64 {
        match *self {
            ThetaSchedule::ByEpoch { min, max, nepochs } => {
                let frac = (epoch.max(1) - 1) as f64 / (nepochs - 2) as f64;
                min * ((max / min).ln() * frac).exp()
            }
            ThetaSchedule::ByTime { min, max, horizon } => {
                let frac = elapsed.as_secs_f64() / horizon.as_secs_f64();
                min * ((max / min).ln() * frac).exp()
            }
            ThetaSchedule::Constant(theta) => theta,
        }
    }
}

fn check_range(min: f64, max: f64) -> Result<(), GtaError> {
    if !(min > 0.0 && min < max && max.is_finite()) {
        return Err(GtaError::ThetaRange { min, max });
    }
    Ok(())
}

/// Expiration for a component that just took `new_bit`.
///
/// When the prediction `p` (probability of 1) agrees with the new value, the
/// tenure is stretched by `max(p, 1-p) / max(eps, min(p, 1-p))`; otherwise it
/// stays at `base_tenure`. Rounded to the nearest iteration.
pub fn tenure_for(p: f64, new_bit: bool, base_tenure: u32, iter: u64, epsilon: f64) -> u64 {
    let agrees = (new_bit && p >= 0.5) || (!new_bit && p <= 0.5);
    if !agrees {
        return iter + base_tenure as u64;
    }
    let ratio = p.max(1.0 - p) / epsilon.max(p.min(1.0 - p));
    iter + (base_tenure as f64 * ratio).round() as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtaParams {
    pub tenure: TenureRange,
    pub run: RunParams,
    pub schedule: ThetaSchedule,
    /// Bounds and probabilities are refreshed every `period` iterations and
    /// whenever the best solution improves.
    pub period: u64,
    pub epsilon: f64,
}

impl GtaParams {
    /// Reference settings: tenure in [5, 11], theta from 0.001 to 1.0 over
    /// the epochs, refresh every 100 iterations, epsilon 1e-4.
    pub fn standard(nepochs: u32, niters: u64, seed: u64) -> Result<Self, GtaError> {
        Ok(GtaParams {
            tenure: TenureRange::new(5, 11),
            run: RunParams::new(nepochs, niters, seed),
            schedule: ThetaSchedule::by_epoch(0.001, 1.0, nepochs)?,
            period: 100,
            epsilon: 1e-4,
        })
    }

    pub fn validate(&self) -> Result<(), GtaError> {
        if self.period == 0 {
            return Err(GtaError::ZeroPeriod);
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(GtaError::Epsilon(self.epsilon));
        }
        Ok(())
    }
}

/// Tenure policy carrying the learned state of a guided run.
#[derive(Debug, Clone)]
pub struct GuidedTenure {
    schedule: ThetaSchedule,
    period: u64,
    epsilon: f64,
    theta: f64,
    bounds: ObjectiveBounds,
    probs: Vec<f64>,
}

impl GuidedTenure {
    pub fn new(n_components: usize, schedule: ThetaSchedule, period: u64, epsilon: f64) -> Self {
        GuidedTenure {
            schedule,
            period,
            epsilon,
            theta: 0.0,
            bounds: ObjectiveBounds::new(n_components),
            probs: vec![0.5; n_components],
        }
    }

    pub fn bounds(&self) -> &ObjectiveBounds {
        &self.bounds
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    fn refresh_probabilities(&mut self) {
        for (j, p) in self.probs.iter_mut().enumerate() {
            *p = match self.bounds.pair(j) {
                Some((d1, d0)) => predict(self.theta, d1, d0),
                None => 0.5,
            };
        }
    }
}

impl TenurePolicy for GuidedTenure {
    fn on_selected(&mut self, step: &StepInfo<'_>) {
        if step.iter.is_multiple_of(self.period) || step.improved {
            self.bounds.observe(step.bits, step.makespan);
            self.refresh_probabilities();
        }
    }

    fn expiration(&self, component: usize, new_bit: bool, iter: u64, tenure: u32) -> u64 {
        tenure_for(self.probs[component], new_bit, tenure, iter, self.epsilon)
    }

    fn on_epoch_end(&mut self, epoch: u32, elapsed: Duration) {
        self.theta = self.schedule.theta_at(epoch, elapsed);
    }

    fn theta(&self) -> Option<f64> {
        Some(self.theta)
    }
}

/// Guided tabu search. Theta is 0 during the first epoch and follows the
/// schedule from the first epoch boundary on.
pub fn run_gta(
    inst: &Instance,
    idx: &PairIndexSet,
    params: &GtaParams,
    observer: &mut dyn SearchObserver,
) -> Result<RunOutcome, GtaError> {
    params.validate()?;
    let mut policy = GuidedTenure::new(idx.len(), params.schedule, params.period, params.epsilon);
    Ok(run_with_policy(
        inst,
        idx,
        &params.run,
        params.tenure,
        &mut policy,
        observer,
    ))
}
