use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{FitProblem, LossBreakdown};
use crate::body_model::BodyParams;
use crate::{Error, Result};

/// Adam-style descent directions with a monotone backtracking step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Initial (and maximum) step length.
    pub step: f64,
    /// Step multiplier after a rejected trial.
    pub shrink: f64,
    /// Step multiplier after an accepted one, capped at `step`.
    pub grow: f64,
    /// Give up on a direction once the step falls below this.
    pub min_step: f64,
    /// Stop when the relative decrease of an accepted step is below this.
    pub tolerance: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iters: 3000,
            step: 1e-2,
            shrink: 0.5,
            grow: 1.5,
            min_step: 1e-7,
            tolerance: 1e-10,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.step > 0.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.grow >= 1.0
            && self.min_step > 0.0
            && self.tolerance >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    Converged,
    /// No decrease found along the current direction at any step length.
    StepUnderflow,
    /// A trial produced a non-finite loss or gradient; the best point so far is kept.
    NumericFailure(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub step: f64,
    /// Trial evaluations spent in this iteration.
    pub trials: usize,
    pub loss: LossBreakdown,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizeResult {
    pub params: BodyParams,
    pub initial: LossBreakdown,
    pub fin: LossBreakdown,
    /// One entry per accepted step; totals are strictly decreasing.
    pub trace: Vec<TraceEntry>,
    pub iterations: usize,
    pub stop: StopReason,
}

impl OptimizeResult {
    pub fn numeric_failure(&self) -> bool {
        matches!(self.stop, StopReason::NumericFailure(_))
    }
}

/// Minimizes the objective of `problem` starting from `start`.
///
/// Fails only if the starting point itself cannot be evaluated.
pub fn optimize(problem: &FitProblem, start: &BodyParams, config: &OptimizerConfig) -> Result<OptimizeResult> {
    config.validate()?;
    let layout = problem.model.layout();
    let mut x = layout.to_vector(start);
    let mut eval = problem.evaluate(start)?;
    let initial = eval.breakdown;
    let mut m = DVector::zeros(x.len());
    let mut v = DVector::zeros(x.len());
    // Accepted steps since the moments were last reset.
    let mut accepted = 0i32;
    let mut step = config.step;
    let mut trace = Vec::new();
    let mut stop = StopReason::MaxIters;
    let mut iterations = 0;

    while iterations < config.max_iters {
        iterations += 1;
        let g = &eval.gradient;
        let m_next = &m * config.beta1 + g * (1.0 - config.beta1);
        let v_next = &v * config.beta2 + g.component_mul(g) * (1.0 - config.beta2);
        let t = accepted + 1;
        let m_hat = &m_next / (1.0 - config.beta1.powi(t));
        let v_hat = &v_next / (1.0 - config.beta2.powi(t));
        let dir = m_hat.zip_map(&v_hat, |a, b| -a / (b.sqrt() + config.epsilon));

        let mut trials = 0;
        let outcome = loop {
            trials += 1;
            let cand = &x + &dir * step;
            match problem.evaluate(&layout.from_vector(&cand)) {
                Ok(e) if e.breakdown.total < eval.breakdown.total => break Ok(Some((cand, e))),
                Ok(_) => {}
                Err(Error::Numeric(msg)) => break Err(msg),
                Err(Error::Domain(msg)) => break Err(msg),
                Err(e) => return Err(e),
            }
            step *= config.shrink;
            if step < config.min_step {
                break Ok(None);
            }
        };
        match outcome {
            Ok(Some((cand, e))) => {
                let decrease = eval.breakdown.total - e.breakdown.total;
                let rel = decrease / eval.breakdown.total.abs().max(f64::MIN_POSITIVE);
                x = cand;
                eval = e;
                m = m_next;
                v = v_next;
                accepted += 1;
                trace.push(TraceEntry {
                    iteration: iterations,
                    step,
                    trials,
                    loss: eval.breakdown,
                });
                step = (step * config.grow).min(config.step);
                if rel < config.tolerance {
                    stop = StopReason::Converged;
                    break;
                }
            }
            Ok(None) if accepted > 0 => {
                // Stale momentum can point uphill; restart from the plain
                // normalized gradient, which is always a descent direction.
                m.fill(0.0);
                v.fill(0.0);
                accepted = 0;
                step = config.step;
            }
            Ok(None) => {
                stop = StopReason::StepUnderflow;
                break;
            }
            Err(msg) => {
                log::warn!("optimizer stopped at iteration {iterations}: {msg}");
                stop = StopReason::NumericFailure(msg);
                break;
            }
        }
    }
    Ok(OptimizeResult {
        params: layout.from_vector(&x),
        initial,
        fin: eval.breakdown,
        trace,
        iterations,
        stop,
    })
}
