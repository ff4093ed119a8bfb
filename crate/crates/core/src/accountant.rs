//! Pure privacy arithmetic.
//!
//! Every function here is deterministic and side-effect free. When a
//! hypothesis of the underlying lemma fails (amplification with ε > 1, group
//! count vs. iteration count, the sparse-trainer assumption), the accountant
//! refuses with an error rather than silently over-reporting privacy:
//! accounting must never understate ε.
//!
//! All logarithms are natural logarithms.

use crate::budget::PrivacyBudget;
use crate::error::{Error, Result};

/// k-fold adaptive composition of a fixed per-step budget with slack δ̃.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositionPlan {
    pub per_step: PrivacyBudget,
    pub steps: u64,
    pub slack_delta: f64,
}

impl CompositionPlan {
    pub fn new(per_step: PrivacyBudget, steps: u64, slack_delta: f64) -> Result<Self> {
        if steps < 1 {
            return Err(Error::invalid("composition needs at least one step".to_string()));
        }
        if !(slack_delta > 0.0 && slack_delta < 1.0) {
            return Err(Error::invalid(format!(
                "slack delta must lie strictly in (0, 1), got {slack_delta}"
            )));
        }
        Ok(Self { per_step, steps, slack_delta })
    }
}

/// Subsampling rate γ ∈ (0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingRate(f64);

impl SamplingRate {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::invalid(format!("sampling rate must lie in (0, 1], got {gamma}")));
        }
        Ok(Self(gamma))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensitivityNorm {
    L2,
    LInf,
}

/// Worst-case output change of a non-private function across neighboring
/// datasets, in the given norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityBound {
    pub norm: SensitivityNorm,
    pub value: f64,
}

impl SensitivityBound {
    pub fn new(norm: SensitivityNorm, value: f64) -> Result<Self> {
        if !(value >= 0.0) {
            return Err(Error::invalid(format!("sensitivity must be nonnegative, got {value}")));
        }
        Ok(Self { norm, value })
    }
}

/// Privacy amplification by sampling: running an (ε, δ)-DP mechanism on a
/// uniformly random γ-fraction of the data is (γε, γδ)-DP, provided ε ≤ 1.
pub fn amplify_by_sampling(base: PrivacyBudget, rate: SamplingRate) -> Result<PrivacyBudget> {
    if base.epsilon > 1.0 {
        return Err(Error::BudgetOutOfRange(format!(
            "amplification by sampling requires the base epsilon to be at most 1, got {}; \
             the guarantee (gamma*eps, gamma*delta) only holds on that domain",
            base.epsilon
        )));
    }
    PrivacyBudget::new(rate.get() * base.epsilon, rate.get() * base.delta)
}

/// Strong composition: k-fold adaptive composition of (ε, δ)-DP mechanisms is
/// (kε(e^ε−1) + ε√(2k·ln(1/δ̃)), kδ + δ̃)-DP.
pub fn strong_compose(plan: &CompositionPlan) -> PrivacyBudget {
    let eps = plan.per_step.epsilon;
    let k = plan.steps as f64;
    let eps_total = k * eps * eps.exp_m1() + eps * (2.0 * k * (1.0 / plan.slack_delta).ln()).sqrt();
    // A composed delta above 1 is a vacuous guarantee; represent it as 1.
    let delta_total = (k * plan.per_step.delta + plan.slack_delta).min(1.0);
    PrivacyBudget { epsilon: eps_total, delta: delta_total }
}

/// Per-iteration budget of the grouped sparse DP-ERM loop:
/// ε′ = ε·m/(2√(2T·ln(2/δ))) and δ′ = δ·m/(2T).
///
/// The privacy theorem for that loop assumes m ≤ 10√T; larger group counts
/// are refused.
pub fn sparse_erm_step_budget(total: PrivacyBudget, t: u64, m: u64) -> Result<PrivacyBudget> {
    if t < 1 || m < 1 {
        return Err(Error::invalid("steps and group count must be positive".to_string()));
    }
    total.require_delta_interior()?;
    if (m as u128) * (m as u128) > 100 * (t as u128) {
        return Err(Error::AssumptionViolated(format!(
            "group count m = {m} exceeds 10*sqrt(T) for T = {t}; the privacy guarantee requires m <= 10*sqrt(T)"
        )));
    }
    let t_f = t as f64;
    let m_f = m as f64;
    let eps_step = total.epsilon * m_f / (2.0 * (2.0 * t_f * (2.0 / total.delta).ln()).sqrt());
    let delta_step = total.delta * m_f / (2.0 * t_f);
    PrivacyBudget::new(eps_step, delta_step)
}

/// Per-step ε of the Gaussian noise stage with noise multiplier σ:
/// 2√(2·ln(1.25/δ′))/σ.
pub fn gaussian_step_epsilon(delta_step: f64, sigma: f64) -> Result<f64> {
    if !(delta_step > 0.0 && delta_step < 1.0) {
        return Err(Error::BudgetOutOfRange(format!(
            "per-step delta must lie strictly in (0, 1), got {delta_step}"
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("noise multiplier must be positive, got {sigma}")));
    }
    Ok(2.0 * (2.0 * (1.25 / delta_step).ln()).sqrt() / sigma)
}

/// Amplified per-iteration budget of the sparse trainer: one selection at
/// (ε′, δ′) composed with one Gaussian release, subsampled at rate b/n:
/// (ε̃, δ̃) = ((b/n)·(ε′ + 2√(2·ln(1.25/δ′))/σ), 2bδ′/n).
pub fn sparse_sgd_step_budget(
    eps_selection: f64,
    delta_step: f64,
    sigma: f64,
    batch: u64,
    samples: u64,
) -> Result<PrivacyBudget> {
    if !(eps_selection >= 0.0) {
        return Err(Error::invalid(format!("selection epsilon must be nonnegative, got {eps_selection}")));
    }
    if batch < 1 || samples < batch {
        return Err(Error::invalid(format!(
            "need 1 <= batch <= samples, got batch {batch}, samples {samples}"
        )));
    }
    let rate = batch as f64 / samples as f64;
    let eps_step = eps_selection + gaussian_step_epsilon(delta_step, sigma)?;
    PrivacyBudget::new(rate * eps_step, (2.0 * batch as f64 * delta_step / samples as f64).min(1.0))
}

/// Whole-run budget of the sparse trainer over T iterations:
/// ((4b√(T·ln(n/(2bTδ′)))/n)·(ε′ + 2√(2·ln(1.25/δ′))/σ), 4bTδ′/n).
///
/// Requires the hypothesis (b/n)·(ε′ + 2√(2·ln(1.25/δ′))/σ) ≤ 1/√T and
/// n > 2bTδ′·e (so the inner logarithm stays above 1).
pub fn sparse_sgd_total_budget(
    eps_selection: f64,
    delta_step: f64,
    sigma: f64,
    batch: u64,
    samples: u64,
    steps: u64,
) -> Result<PrivacyBudget> {
    if steps < 1 {
        return Err(Error::invalid("step count must be positive".to_string()));
    }
    let per_step = sparse_sgd_step_budget(eps_selection, delta_step, sigma, batch, samples)?;
    let t = steps as f64;
    if per_step.epsilon > 1.0 / t.sqrt() {
        return Err(Error::AssumptionViolated(format!(
            "per-step epsilon {} exceeds 1/sqrt(T) = {}; the total-budget guarantee requires \
             (b/n)*(eps_sel + 2*sqrt(2*ln(1.25/delta_step))/sigma) <= 1/sqrt(T)",
            per_step.epsilon,
            1.0 / t.sqrt()
        )));
    }
    let b = batch as f64;
    let n = samples as f64;
    let log_arg = n / (2.0 * b * t * delta_step);
    if log_arg <= std::f64::consts::E {
        return Err(Error::AssumptionViolated(format!(
            "n = {samples} must exceed e*2*b*T*delta_step = {:.6e} for the composed delta slack to be meaningful",
            std::f64::consts::E * 2.0 * b * t * delta_step
        )));
    }
    let eps_step = eps_selection + gaussian_step_epsilon(delta_step, sigma)?;
    let eps_total = 4.0 * b * (t * log_arg.ln()).sqrt() / n * eps_step;
    let delta_total = 4.0 * b * t * delta_step / n;
    PrivacyBudget::new(eps_total, delta_total)
}

/// Accuracy threshold of the numeric sparse-vector scan:
/// α = 20·s·(ln p + ln(4c₁/β))·√(c₁·ln(2/δ))/ε.
///
/// With the scan run at this threshold and an input of at most c₁ nonzero
/// coordinates, with probability ≥ 1−β every reported value is within α of
/// the truth and every unreported coordinate is at most 2α in magnitude.
pub fn numeric_sparse_alpha(
    s: f64,
    p: usize,
    c1: usize,
    beta: f64,
    budget: PrivacyBudget,
) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::invalid(format!("sensitivity must be positive, got {s}")));
    }
    if p < 1 || c1 < 1 {
        return Err(Error::invalid("dimension and sparsity bound must be positive".to_string()));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::invalid(format!("beta must lie strictly in (0, 1), got {beta}")));
    }
    if budget.epsilon <= 0.0 {
        return Err(Error::BudgetOutOfRange("epsilon must be positive".to_string()));
    }
    budget.require_delta_interior()?;
    let c1_f = c1 as f64;
    Ok(20.0 * s * ((p as f64).ln() + (4.0 * c1_f / beta).ln())
        * (c1_f * (2.0 / budget.delta).ln()).sqrt()
        / budget.epsilon)
}

/// Splits an experiment-level (ε, δ) pair between the noise stage and the
/// selection stage of the sparse trainer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetSplit {
    pub noise: PrivacyBudget,
    pub selection: PrivacyBudget,
}

impl BudgetSplit {
    pub fn total(&self) -> PrivacyBudget {
        PrivacyBudget {
            epsilon: self.noise.epsilon + self.selection.epsilon,
            delta: self.noise.delta + self.selection.delta,
        }
    }
}

/// Per-step δ′ that makes the whole-run delta equal `delta_total`:
/// δ′ = δ·n/(4bT).
pub fn step_delta_for_total(delta_total: f64, batch: u64, samples: u64, steps: u64) -> Result<f64> {
    if !(delta_total > 0.0 && delta_total < 1.0) {
        return Err(Error::invalid(format!("total delta must lie in (0, 1), got {delta_total}")));
    }
    if batch < 1 || samples < batch || steps < 1 {
        return Err(Error::invalid("need 1 <= batch <= samples and steps >= 1".to_string()));
    }
    Ok(delta_total * samples as f64 / (4.0 * batch as f64 * steps as f64))
}

/// The factor 4b√(T·ln(n/(2bTδ′)))/n that converts a per-step ε into the
/// whole-run total.
fn composition_factor(delta_step: f64, batch: u64, samples: u64, steps: u64) -> Result<f64> {
    let b = batch as f64;
    let n = samples as f64;
    let t = steps as f64;
    let log_arg = n / (2.0 * b * t * delta_step);
    if log_arg <= std::f64::consts::E {
        return Err(Error::AssumptionViolated(format!(
            "n = {samples} must exceed e*2*b*T*delta_step for this composition",
        )));
    }
    Ok(4.0 * b * (t * log_arg.ln()).sqrt() / n)
}

/// Per-invocation selection budget ε′ whose whole-run cost equals
/// `eps_selection_total`.
pub fn selection_step_epsilon(
    eps_selection_total: f64,
    delta_step: f64,
    batch: u64,
    samples: u64,
    steps: u64,
) -> Result<f64> {
    if !(eps_selection_total >= 0.0) {
        return Err(Error::invalid("selection budget must be nonnegative".to_string()));
    }
    Ok(eps_selection_total / composition_factor(delta_step, batch, samples, steps)?)
}

/// Noise multiplier σ whose whole-run Gaussian cost equals `eps_noise_total`.
pub fn sigma_for_noise_budget(
    eps_noise_total: f64,
    delta_step: f64,
    batch: u64,
    samples: u64,
    steps: u64,
) -> Result<f64> {
    if !(eps_noise_total > 0.0) {
        return Err(Error::invalid("noise budget must be positive".to_string()));
    }
    if !(delta_step > 0.0 && delta_step < 1.0) {
        return Err(Error::BudgetOutOfRange(format!(
            "per-step delta must lie strictly in (0, 1), got {delta_step}"
        )));
    }
    let factor = composition_factor(delta_step, batch, samples, steps)?;
    Ok(2.0 * (2.0 * (1.25 / delta_step).ln()).sqrt() * factor / eps_noise_total)
}
