//! MNL negative log-likelihoods and a first-order MLE solver.
//!
//! All objectives are averaged negative log-likelihoods (minimized):
//!
//! `L_n(Φ) = -(1/n) Σ_t [ Σ_{i∈S_t} y_it p_iᵀ Φ q_t − log(1 + Σ_{j∈S_t} exp(p_jᵀ Φ q_t)) ]`.
//!
//! The full-space objective is evaluated through the item catalog: `Φᵀ Pᵀ`
//! is formed once per evaluation and the gradient is accumulated per item,
//! so an evaluation costs `O(n K d1 + N d1 d2)` instead of `O(n K d1 d2)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::choice::{Choice, ChoiceObservation, ItemCatalog};
use crate::error::{ensure_dim, ensure_finite, Error, Result};
use crate::layout::ParamLayout;

/// Borrowed view over a catalog and the interactions logged against it.
#[derive(Debug, Clone, Copy)]
pub struct ObservationSet<'a> {
    catalog: &'a ItemCatalog,
    records: &'a [ChoiceObservation],
}

impl<'a> ObservationSet<'a> {
    pub fn new(catalog: &'a ItemCatalog, records: &'a [ChoiceObservation]) -> Result<Self> {
        let n_items = catalog.n_items();
        let mut user_dim = None;
        for rec in records {
            if let Some(&bad) = rec.assortment.items().iter().find(|&&i| i >= n_items) {
                return Err(Error::InvalidArgument(format!(
                    "record offers item {bad}, catalog has {n_items} items"
                )));
            }
            if let Choice::Item(i) = rec.chosen {
                if !rec.assortment.contains(i) {
                    return Err(Error::InvalidArgument(format!(
                        "record chose item {i} outside its assortment"
                    )));
                }
            }
            match user_dim {
                None => user_dim = Some(rec.user.dim()),
                Some(d) => ensure_dim("user context", d, rec.user.dim())?,
            }
        }
        Ok(Self { catalog, records })
    }

    pub(crate) fn new_unchecked(catalog: &'a ItemCatalog, records: &'a [ChoiceObservation]) -> Self {
        Self { catalog, records }
    }

    pub fn catalog(&self) -> &'a ItemCatalog {
        self.catalog
    }

    pub fn records(&self) -> &'a [ChoiceObservation] {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Item feature dimension `d2`.
    pub fn item_dim(&self) -> usize {
        self.catalog.dim()
    }

    /// User feature dimension `d1` (taken from the first record).
    pub fn user_dim(&self) -> Option<usize> {
        self.records.first().map(|r| r.user.dim())
    }

    fn check_phi(&self, phi: &DMatrix<f64>) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::EmptyData);
        }
        ensure_dim("parameter rows", self.item_dim(), phi.nrows())?;
        ensure_dim("parameter columns", self.user_dim().unwrap_or(0), phi.ncols())?;
        ensure_finite("parameter matrix", phi.iter())
    }
}

/// Dot product with four running sums, so the loop is not one long add chain.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = [0.0; 4];
    let (ca, ra) = a.split_at(a.len() - a.len() % 4);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(4).zip(cb.chunks_exact(4)) {
        for j in 0..4 {
            s[j] += x[j] * y[j];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (s[0] + s[1]) + (s[2] + s[3]) + tail
}

/// `log(1 + Σ exp(u))`, stabilized.
fn log1p_sum_exp(u: &[f64]) -> f64 {
    let m = u.iter().copied().fold(0.0_f64, f64::max);
    let s: f64 = (-m).exp() + u.iter().map(|v| (v - m).exp()).sum::<f64>();
    m + s.ln()
}

/// Averaged NLL of the bilinear model `aᵀ Θ b` and, when requested, its
/// gradient with respect to `Θ`. `items` holds the item vectors `a` as rows;
/// record user vectors play the role of `b`.
pub(crate) fn bilinear_nll(
    items: &DMatrix<f64>,
    records: &[ChoiceObservation],
    theta: &DMatrix<f64>,
    grad: Option<&mut DMatrix<f64>>,
) -> f64 {
    let n_items = items.nrows();
    let b_dim = theta.ncols();
    // Column i of `scores` is Θᵀ a_i.
    let scores = theta.transpose() * items.transpose();
    let mut acc = if grad.is_some() {
        Some(DMatrix::<f64>::zeros(b_dim, n_items))
    } else {
        None
    };
    let mut total = 0.0;
    let mut u = Vec::new();
    let s = scores.as_slice();
    for rec in records {
        let q = rec.user.q.as_slice();
        u.clear();
        u.extend(rec.assortment.items().iter().map(|&i| dot(&s[i * b_dim..(i + 1) * b_dim], q)));
        // exp(u - m) is kept in `u` so probabilities need no second pass of exp.
        let m = u.iter().copied().fold(0.0_f64, f64::max);
        let chosen_pos = match rec.chosen {
            Choice::NoPurchase => None,
            Choice::Item(i) => rec.assortment.position(i),
        };
        let chosen_u = chosen_pos.map_or(0.0, |k| u[k]);
        let mut z = (-m).exp();
        for v in u.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        total += m + z.ln() - chosen_u;
        if let Some(h) = acc.as_mut() {
            let h = h.as_mut_slice();
            let inv_z = 1.0 / z;
            for (k, &i) in rec.assortment.items().iter().enumerate() {
                let y = if chosen_pos == Some(k) { 1.0 } else { 0.0 };
                let c = u[k] * inv_z - y;
                if c != 0.0 {
                    for (hj, qj) in h[i * b_dim..(i + 1) * b_dim].iter_mut().zip(q) {
                        *hj += c * qj;
                    }
                }
            }
        }
    }
    let n = records.len() as f64;
    if let (Some(g), Some(h)) = (grad, acc) {
        // Σ_t Σ_i c_it a_i b_tᵀ = (H A)ᵀ with H = Σ c_it b_t e_iᵀ.
        let mut full = (h * items).transpose();
        full /= n;
        *g = full;
    }
    total / n
}

/// Full-space NLL `L_n(Φ)`.
pub fn nll_full(phi: &DMatrix<f64>, data: &ObservationSet<'_>) -> Result<f64> {
    data.check_phi(phi)?;
    Ok(bilinear_nll(data.catalog.features(), data.records, phi, None))
}

/// Gradient `−(1/n) Σ_t Σ_{i∈S_t} (y_it − p_t(i|Φ)) p_i q_tᵀ`.
pub fn grad_nll_full(phi: &DMatrix<f64>, data: &ObservationSet<'_>) -> Result<DMatrix<f64>> {
    data.check_phi(phi)?;
    let mut g = DMatrix::zeros(phi.nrows(), phi.ncols());
    bilinear_nll(data.catalog.features(), data.records, phi, Some(&mut g));
    Ok(g)
}

/// One interaction expressed through precomputed reduced feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedRecord {
    /// One vector per offered item, in assortment order.
    pub features: Vec<DVector<f64>>,
    /// Position of the chosen item within `features`; `None` for no purchase.
    pub chosen: Option<usize>,
}

/// Interactions in reduced coordinates, all features of length `dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedObservationSet {
    dim: usize,
    records: Vec<ReducedRecord>,
}

impl ReducedObservationSet {
    pub fn new(dim: usize, records: Vec<ReducedRecord>) -> Result<Self> {
        for rec in &records {
            for x in &rec.features {
                ensure_dim("reduced feature", dim, x.len())?;
            }
            if let Some(k) = rec.chosen {
                if k >= rec.features.len() {
                    return Err(Error::InvalidArgument(format!(
                        "chosen position {k} outside {} offered items",
                        rec.features.len()
                    )));
                }
            }
        }
        Ok(Self { dim, records })
    }

    /// Builds `x_it = layout.feature(a_i, b_t)` for every offered item, where
    /// `a_i` is row `i` of `items` and `b_t` the record's user vector.
    pub fn from_layout(
        items: &DMatrix<f64>,
        records: &[ChoiceObservation],
        layout: &ParamLayout,
    ) -> Result<Self> {
        ensure_dim("item vectors", layout.rows(), items.ncols())?;
        let mut out = Vec::with_capacity(records.len());
        for rec in records {
            ensure_dim("user vectors", layout.cols(), rec.user.dim())?;
            let features = rec
                .assortment
                .items()
                .iter()
                .map(|&i| layout.feature(&items.row(i).transpose(), &rec.user.q))
                .collect();
            let chosen = match rec.chosen {
                Choice::NoPurchase => None,
                Choice::Item(i) => rec.assortment.position(i),
            };
            out.push(ReducedRecord { features, chosen });
        }
        Ok(Self {
            dim: layout.len(),
            records: out,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[ReducedRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn evaluate(&self, theta: &DVector<f64>, grad: Option<&mut DVector<f64>>) -> f64 {
        let mut g_acc = grad.as_ref().map(|_| DVector::<f64>::zeros(self.dim));
        let mut total = 0.0;
        let mut u = Vec::new();
        for rec in &self.records {
            u.clear();
            u.extend(rec.features.iter().map(|x| x.dot(theta)));
            let lse = log1p_sum_exp(&u);
            total += lse - rec.chosen.map_or(0.0, |k| u[k]);
            if let Some(g) = g_acc.as_mut() {
                for (k, x) in rec.features.iter().enumerate() {
                    let y = if rec.chosen == Some(k) { 1.0 } else { 0.0 };
                    g.axpy((u[k] - lse).exp() - y, x, 1.0);
                }
            }
        }
        let n = self.records.len() as f64;
        if let (Some(out), Some(g)) = (grad, g_acc) {
            *out = g / n;
        }
        total / n
    }

    fn check_theta(&self, theta: &DVector<f64>) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::EmptyData);
        }
        ensure_dim("reduced parameter", self.dim, theta.len())?;
        ensure_finite("reduced parameter", theta.iter())
    }
}

/// Reduced-space NLL `L_{n,rtv}(θ)` (negative log-likelihood, minimized).
pub fn nll_reduced(theta: &DVector<f64>, data: &ReducedObservationSet) -> Result<f64> {
    data.check_theta(theta)?;
    Ok(data.evaluate(theta, None))
}

pub fn grad_nll_reduced(theta: &DVector<f64>, data: &ReducedObservationSet) -> Result<DVector<f64>> {
    data.check_theta(theta)?;
    let mut g = DVector::zeros(data.dim);
    data.evaluate(theta, Some(&mut g));
    Ok(g)
}

/// A smooth objective over a flat parameter vector.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn value_and_gradient(&self, x: &DVector<f64>) -> (f64, DVector<f64>);
}

/// NLL of a bilinear model whose parameter occupies the entries of a
/// [`ParamLayout`]. With [`ParamLayout::full`] this is `L_n(vec Φ)`.
#[derive(Debug, Clone)]
pub struct BilinearObjective<'a> {
    data: ObservationSet<'a>,
    layout: ParamLayout,
}

impl<'a> BilinearObjective<'a> {
    pub fn new(data: ObservationSet<'a>, layout: ParamLayout) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        ensure_dim("layout rows", data.item_dim(), layout.rows())?;
        ensure_dim("layout columns", data.user_dim().unwrap_or(0), layout.cols())?;
        Ok(Self { data, layout })
    }

    /// Unconstrained full-space objective over `vec(Φ)` (column-major).
    pub fn full(data: ObservationSet<'a>) -> Result<Self> {
        let rows = data.item_dim();
        let cols = data.user_dim().ok_or(Error::EmptyData)?;
        Self::new(data, ParamLayout::full(rows, cols))
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }
}

impl Objective for BilinearObjective<'_> {
    fn dim(&self) -> usize {
        self.layout.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let theta = self.layout.scatter(x);
        bilinear_nll(self.data.catalog.features(), self.data.records, &theta, None)
    }

    fn value_and_gradient(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let theta = self.layout.scatter(x);
        let mut g = DMatrix::zeros(theta.nrows(), theta.ncols());
        let f = bilinear_nll(self.data.catalog.features(), self.data.records, &theta, Some(&mut g));
        (f, self.layout.gather(&g))
    }
}

impl Objective for ReducedObservationSet {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.evaluate(x, None)
    }

    fn value_and_gradient(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let mut g = DVector::zeros(self.dim);
        let f = self.evaluate(x, Some(&mut g));
        (f, g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop once `|f_k − f_{k+1}| / max(|f_k|, 1e-300)` drops below this.
    pub tolerance: f64,
    /// Initial step; with line search, later trial steps come from the
    /// Barzilai–Borwein estimate.
    pub step_size: f64,
    pub line_search: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            tolerance: 1e-8,
            step_size: 1.0,
            line_search: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("solver max_iterations must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) || !(self.step_size > 0.0) {
            return Err(Error::Config(
                "solver tolerance and step_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub parameter: DVector<f64>,
    pub objective: f64,
    pub initial_objective: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
}

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-20;

/// Gradient descent with Armijo backtracking (step halving).
pub fn fit_mle<O: Objective + ?Sized>(
    objective: &O,
    init: &DVector<f64>,
    config: &SolverConfig,
) -> Result<FitReport> {
    config.validate()?;
    ensure_dim("initial parameter", objective.dim(), init.len())?;
    ensure_finite("initial parameter", init.iter())?;

    let mut x = init.clone();
    let (mut f, mut g) = objective.value_and_gradient(&x);
    if !f.is_finite() {
        return Err(Error::Diverged { iteration: 0 });
    }
    let initial_objective = f;
    let mut trial = config.step_size;
    let mut iterations = 0;
    let mut converged = false;

    for k in 1..=config.max_iterations {
        let g2 = g.norm_squared();
        if g2 == 0.0 {
            converged = true;
            break;
        }
        let (x_new, f_new, g_new) = if config.line_search {
            let mut step = trial;
            let accepted = loop {
                let cand = &x - &g * step;
                let (fc, gc) = objective.value_and_gradient(&cand);
                if fc.is_finite() && fc <= f - ARMIJO * step * g2 {
                    break Some((cand, fc, gc));
                }
                step *= 0.5;
                if step < MIN_STEP {
                    break None;
                }
            };
            match accepted {
                Some(v) => v,
                None => {
                    // No descent left at machine precision.
                    converged = true;
                    break;
                }
            }
        } else {
            let cand = &x - &g * config.step_size;
            let (fc, gc) = objective.value_and_gradient(&cand);
            if !fc.is_finite() {
                return Err(Error::Diverged { iteration: k });
            }
            (cand, fc, gc)
        };

        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 0.0 {
            trial = (s.norm_squared() / sy).clamp(1e-12, 1e12);
        }
        let rel = (f - f_new).abs() / f.abs().max(1e-300);
        x = x_new;
        f = f_new;
        g = g_new;
        iterations = k;
        if rel < config.tolerance {
            converged = true;
            break;
        }
    }

    Ok(FitReport {
        gradient_norm: g.norm(),
        parameter: x,
        objective: f,
        initial_objective,
        iterations,
        converged,
    })
}
