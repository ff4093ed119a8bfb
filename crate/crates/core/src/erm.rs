//! Generalized linear models with provably sparse gradients, and the grouped
//! sparse DP-ERM training loop.
//!
//! For a GLM with cumulant (link) function Φ the per-sample loss is
//! Φ(⟨x, w⟩) − y·⟨x, w⟩, so the gradient (Φ′(⟨x, w⟩) − y)·x inherits the
//! support of the feature vector: sparse inputs give sparse gradients. The
//! grouped dataset abstraction requires every group's summed gradient to stay
//! within a declared support bound c₁, which holds whenever the samples of a
//! group share their feature support.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::accountant::{
    amplify_by_sampling, sparse_erm_step_budget, strong_compose, CompositionPlan, SamplingRate,
};
use crate::budget::PrivacyBudget;
use crate::error::{Error, Result};
use crate::mechanisms::{numeric_sparse_with, NoiseToggle};
use crate::rng::NoiseSource;
use crate::scalar::Real;
use crate::sparse::SparseVector;

/// Cumulant generating function Φ of the GLM likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Link {
    /// Φ(z) = ln(1 + e^z); Φ′ is the sigmoid. Logistic regression.
    Logistic,
}

impl Link {
    pub fn value<F: Real>(self, z: F) -> F {
        match self {
            // ln(1 + e^z), branched on the sign of z for stability.
            Link::Logistic => {
                if z > F::zero() {
                    z + (-z).exp().ln_1p()
                } else {
                    z.exp().ln_1p()
                }
            }
        }
    }

    pub fn derivative<F: Real>(self, z: F) -> F {
        match self {
            Link::Logistic => {
                if z >= F::zero() {
                    F::one() / (F::one() + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (F::one() + e)
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlmModel<F> {
    pub weights: Vec<F>,
    pub link: Link,
}

impl<F: Real> GlmModel<F> {
    pub fn new(weights: Vec<F>, link: Link) -> Self {
        Self { weights, link }
    }

    pub fn zeros(dim: usize, link: Link) -> Self {
        Self { weights: vec![F::zero(); dim], link }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }
}

fn check_label<F: Real>(y: F) -> Result<()> {
    if y < F::zero() || y > F::one() {
        return Err(Error::invalid(format!("label must lie in [0, 1], got {y}")));
    }
    Ok(())
}

/// Φ(⟨x, w⟩) − y·⟨x, w⟩.
pub fn glm_loss<F: Real>(model: &GlmModel<F>, x: &SparseVector<F>, y: F) -> Result<F> {
    glm_loss_at(model.link, &model.weights, x, y)
}

/// (Φ′(⟨x, w⟩) − y)·x; the support is contained in the support of x.
pub fn glm_gradient<F: Real>(model: &GlmModel<F>, x: &SparseVector<F>, y: F) -> Result<SparseVector<F>> {
    glm_gradient_at(model.link, &model.weights, x, y)
}

fn glm_loss_at<F: Real>(link: Link, weights: &[F], x: &SparseVector<F>, y: F) -> Result<F> {
    check_label(y)?;
    let z = x.dot_dense(weights)?;
    Ok(link.value(z) - y * z)
}

fn glm_gradient_at<F: Real>(link: Link, weights: &[F], x: &SparseVector<F>, y: F) -> Result<SparseVector<F>> {
    check_label(y)?;
    let z = x.dot_dense(weights)?;
    let factor = link.derivative(z) - y;
    let mut g = x.clone();
    g.scale(factor);
    Ok(g)
}

/// Dataset split into m equally sized groups with declared gradient bounds:
/// c₁ bounds every group's summed-gradient support, c₂ bounds the ℓ∞ norm of
/// every per-sample gradient.
///
/// Group membership is supplied by the loader (for example a group-id
/// column); the declared bounds are dataset properties validated by
/// [`GroupedDataset::validate_support_union`] and
/// [`GroupedDataset::max_gradient_linf`] rather than proved.
#[derive(Debug, Clone)]
pub struct GroupedDataset<F> {
    dim: usize,
    groups: Vec<Vec<(SparseVector<F>, F)>>,
    c1: usize,
    c2: f64,
}

impl<F: Real> GroupedDataset<F> {
    pub fn new(dim: usize, groups: Vec<Vec<(SparseVector<F>, F)>>, c1: usize, c2: f64) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::input("dataset must contain at least one group"));
        }
        if c1 < 1 || !(c2 > 0.0) {
            return Err(Error::invalid("gradient bounds c1 and c2 must be positive".to_string()));
        }
        let size = groups[0].len();
        if size == 0 {
            return Err(Error::input("groups must be nonempty"));
        }
        for (g, group) in groups.iter().enumerate() {
            if group.len() != size {
                return Err(Error::input(format!(
                    "groups must have identical size: group 0 has {size}, group {g} has {}",
                    group.len()
                )));
            }
            for (x, y) in group {
                if x.dim() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, actual: x.dim() });
                }
                check_label(*y)?;
            }
        }
        Ok(Self { dim, groups, c1, c2 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn num_samples(&self) -> usize {
        self.groups.len() * self.groups[0].len()
    }

    pub fn c1(&self) -> usize {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn group(&self, i: usize) -> &[(SparseVector<F>, F)] {
        &self.groups[i]
    }

    /// Checks the sufficient condition for the declared c₁: within each
    /// group, the union of sample supports has at most c₁ coordinates.
    pub fn validate_support_union(&self) -> Result<()> {
        for (g, group) in self.groups.iter().enumerate() {
            let mut union: Vec<usize> = group
                .iter()
                .flat_map(|(x, _)| x.iter().map(|(i, _)| i))
                .collect();
            union.sort_unstable();
            union.dedup();
            if union.len() > self.c1 {
                return Err(Error::input(format!(
                    "group {g} has feature-support union of size {} > c1 = {}",
                    union.len(),
                    self.c1
                )));
            }
        }
        Ok(())
    }

    /// (m/n)·Σ over the group of per-sample gradients, accumulated in a fixed
    /// order so runs are reproducible.
    pub fn group_mean_gradient(&self, model: &GlmModel<F>, i: usize) -> Result<SparseVector<F>> {
        let scale = F::from_f64(self.num_groups() as f64 / self.num_samples() as f64);
        let mut pairs: Vec<(usize, F)> = Vec::new();
        for (x, y) in &self.groups[i] {
            let g = glm_gradient(model, x, *y)?;
            pairs.extend(g.iter());
        }
        let mut sum = SparseVector::from_pairs(self.dim, pairs)?;
        sum.scale(scale);
        Ok(sum)
    }

    pub fn mean_loss(&self, model: &GlmModel<F>) -> Result<f64> {
        let mut total = 0.0;
        for group in &self.groups {
            for (x, y) in group {
                total += glm_loss(model, x, *y)?.as_f64();
            }
        }
        Ok(total / self.num_samples() as f64)
    }

    /// Largest per-sample gradient ℓ∞ norm at the given weights; a diagnostic
    /// for the declared c₂.
    pub fn max_gradient_linf(&self, model: &GlmModel<F>) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for group in &self.groups {
            for (x, y) in group {
                worst = worst.max(glm_gradient(model, x, *y)?.linf_norm().as_f64());
            }
        }
        Ok(worst)
    }
}

/// For each probe weight vector and each group, measures the summed-gradient
/// support size; passes iff the maximum stays within the declared c₁.
pub fn verify_group_sparsity<F: Real>(
    data: &GroupedDataset<F>,
    link: Link,
    probe_weights: &[Vec<F>],
) -> Result<(bool, usize)> {
    let mut worst = 0usize;
    for probe in probe_weights {
        let model = GlmModel::new(probe.clone(), link);
        for i in 0..data.num_groups() {
            // Support of the (scaled) summed gradient; scaling keeps support.
            let support = data.group_mean_gradient(&model, i)?.support();
            worst = worst.max(support);
        }
    }
    Ok((worst <= data.c1(), worst))
}

/// Threshold used by the DP-ERM loop: α = 40·c₂·m·(ln p + ln(4·c₁·n))·
/// √(c₁·ln(2/δ′))/(n·ε′). This instantiates the sparse-scan accuracy
/// threshold at sensitivity 2·c₂·m/n and confidence β = 1/n.
pub fn erm_alpha(
    c2: f64,
    m: usize,
    n: usize,
    p: usize,
    c1: usize,
    step: PrivacyBudget,
) -> Result<f64> {
    if step.epsilon <= 0.0 {
        return Err(Error::BudgetOutOfRange("per-step epsilon must be positive".to_string()));
    }
    step.require_delta_interior()?;
    Ok(40.0 * c2 * m as f64 * ((p as f64).ln() + (4.0 * c1 as f64 * n as f64).ln())
        * (c1 as f64 * (2.0 / step.delta).ln()).sqrt()
        / (n as f64 * step.epsilon))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErmStepRecord {
    pub step: u64,
    pub train_loss: f64,
    pub grad_support_size: usize,
    pub eps_spent: f64,
}

/// Test hooks for the DP-ERM loop. Defaults run the calibrated mechanism.
#[derive(Debug, Clone, Default)]
pub struct ErmOptions {
    /// Disable all mechanism noise (voids privacy; degeneration tests only).
    pub disable_noise: bool,
    /// Override the scan threshold; `None` uses [`erm_alpha`].
    pub alpha_override: Option<f64>,
}

#[derive(Debug)]
pub struct ErmRun<F> {
    pub model: GlmModel<F>,
    pub steps: Vec<ErmStepRecord>,
    pub step_budget: PrivacyBudget,
    pub alpha: f64,
    /// The guarantee for the whole run; equals the requested total by
    /// construction of the per-step budgets.
    pub reported_total: PrivacyBudget,
}

/// Grouped sparse DP-ERM: T iterations, each picking a group uniformly with
/// replacement, privatizing its mean gradient with the numeric sparse-vector
/// scan at ℓ∞-sensitivity 2·c₂·m/n, and stepping w ← w − η·Δ.
pub fn dp_sparse_erm_train<F: Real>(
    data: &GroupedDataset<F>,
    model: GlmModel<F>,
    total: PrivacyBudget,
    eta: f64,
    steps: u64,
    rng: &mut NoiseSource,
    options: &ErmOptions,
) -> Result<ErmRun<F>> {
    if model.dim() != data.dim() {
        return Err(Error::DimensionMismatch { expected: data.dim(), actual: model.dim() });
    }
    let m = data.num_groups();
    let n = data.num_samples();
    let step_budget = sparse_erm_step_budget(total, steps, m as u64)?;
    let alpha = match options.alpha_override {
        Some(a) => a,
        None => erm_alpha(data.c2(), m, n, data.dim(), data.c1(), step_budget)?,
    };
    let s_inf = 2.0 * data.c2() * m as f64 / n as f64;
    let noise = if options.disable_noise { NoiseToggle::Disabled } else { NoiseToggle::Calibrated };

    // Partial-run accounting: amplification by the 1/m group-sampling rate
    // followed by strong composition, when the amplification domain (eps' <= 1)
    // applies. The whole-run guarantee is `total` either way, so spent budget
    // is capped there.
    let amplified = if step_budget.epsilon <= 1.0 {
        Some(amplify_by_sampling(step_budget, SamplingRate::new(1.0 / m as f64)?)?)
    } else {
        None
    };
    let eps_spent_after = |t: u64| -> f64 {
        match amplified {
            Some(per_step) => {
                let plan = CompositionPlan::new(per_step, t, total.delta / 2.0)
                    .expect("t >= 1 and slack in (0,1)");
                strong_compose(&plan).epsilon.min(total.epsilon)
            }
            None => total.epsilon,
        }
    };

    let mut model = model;
    let mut records = Vec::with_capacity(steps as usize);
    for t in 0..steps {
        let group = rng.index(m);
        let grad = data.group_mean_gradient(&model, group)?;
        let update = numeric_sparse_with(&grad, alpha, data.c1(), step_budget, s_inf, noise, rng)?;
        update.add_scaled_into(&mut model.weights, F::from_f64(-eta))?;
        records.push(ErmStepRecord {
            step: t,
            train_loss: data.mean_loss(&model)?,
            grad_support_size: update.support(),
            eps_spent: eps_spent_after(t + 1),
        });
    }
    Ok(ErmRun { model, steps: records, step_budget, alpha, reported_total: total })
}

/// Loads a grouped dataset from delimited text: one sample per line as
/// `group-id y index:value index:value ...`. Groups are keyed by the group-id
/// token and ordered by sorted id; all groups must end up the same size.
pub fn load_grouped_dataset<F: Real>(
    path: &Path,
    dim: usize,
    c1: usize,
    c2: f64,
) -> Result<GroupedDataset<F>> {
    let file = File::open(path)
        .map_err(|e| Error::input(format!("cannot open dataset {}: {e}", path.display())))?;
    let mut by_group: BTreeMap<String, Vec<(SparseVector<F>, F)>> = BTreeMap::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let group = fields
            .next()
            .ok_or_else(|| Error::input(format!("line {}: missing group id", lineno + 1)))?
            .to_string();
        let y: f64 = fields
            .next()
            .ok_or_else(|| Error::input(format!("line {}: missing label", lineno + 1)))?
            .parse()
            .map_err(|e| Error::input(format!("line {}: bad label: {e}", lineno + 1)))?;
        let mut pairs = Vec::new();
        for tok in fields {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| Error::input(format!("line {}: expected index:value, got {tok}", lineno + 1)))?;
            let idx: usize = idx
                .parse()
                .map_err(|e| Error::input(format!("line {}: bad index: {e}", lineno + 1)))?;
            let val: f64 = val
                .parse()
                .map_err(|e| Error::input(format!("line {}: bad value: {e}", lineno + 1)))?;
            pairs.push((idx, F::from_f64(val)));
        }
        let x = SparseVector::from_pairs(dim, pairs)?;
        by_group.entry(group).or_default().push((x, F::from_f64(y)));
    }
    let sizes: Vec<usize> = by_group.values().map(Vec::len).collect();
    if sizes.is_empty() {
        return Err(Error::input("dataset is empty"));
    }
    if sizes.iter().any(|&s| s != sizes[0]) {
        return Err(Error::input(format!(
            "groups must divide the dataset evenly, got sizes {sizes:?}"
        )));
    }
    let data = GroupedDataset::new(dim, by_group.into_values().collect(), c1, c2)?;
    data.validate_support_union()?;
    Ok(data)
}

/// Flat sample list behind the generic trainer's gradient-oracle interface,
/// for running a GLM through the sparse DP optimizer.
#[derive(Debug, Clone)]
pub struct GlmObjective<F> {
    dim: usize,
    link: Link,
    samples: Vec<(SparseVector<F>, F)>,
}

impl<F: Real> GlmObjective<F> {
    pub fn new(dim: usize, link: Link, samples: Vec<(SparseVector<F>, F)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::input("objective needs at least one sample"));
        }
        for (x, y) in &samples {
            if x.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, actual: x.dim() });
            }
            check_label(*y)?;
        }
        Ok(Self { dim, link, samples })
    }

    pub fn samples(&self) -> &[(SparseVector<F>, F)] {
        &self.samples
    }
}

impl<F: Real> crate::trainer::GradientOracle<F> for GlmObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_samples(&self) -> usize {
        self.samples.len()
    }

    fn sample_gradient(&self, params: &[F], sample: usize) -> SparseVector<F> {
        let (x, y) = &self.samples[sample];
        glm_gradient_at(self.link, params, x, *y).expect("validated at construction")
    }

    fn sample_loss(&self, params: &[F], sample: usize) -> F {
        let (x, y) = &self.samples[sample];
        glm_loss_at(self.link, params, x, *y).expect("validated at construction")
    }
}

/// Writes per-step metrics as one JSON object per line.
pub fn write_erm_metrics(path: &Path, records: &[ErmStepRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for rec in records {
        serde_json::to_writer(&mut out, rec).map_err(|e| Error::input(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
