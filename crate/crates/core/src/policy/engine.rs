//! Optimistic MNL engine over a linear parameterization.
//!
//! The model is `u_i = a_iᵀ Θ b` with `Θ` supported on a [`ParamLayout`], so
//! the joint feature of item `i` for user `b` is `layout.feature(a_i, b)`.
//! The engine keeps the Gram matrix `W`, its inverse, the records it has seen
//! and the current MLE.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::assortment::{static_mnl, OptimizationInstance};
use crate::choice::{Assortment, ChoiceObservation, ItemCatalog};
use crate::error::{Error, Result};
use crate::layout::ParamLayout;
use crate::likelihood::{fit_mle, BilinearObjective, ObservationSet, SolverConfig};
use crate::linalg::{sherman_morrison_update, spd_inverse};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearUcb {
    /// Items in design coordinates `a_i` (rows) with their revenues.
    catalog: ItemCatalog,
    layout: ParamLayout,
    theta: DVector<f64>,
    gram: DMatrix<f64>,
    gram_inv: DMatrix<f64>,
    /// Records whose users are already in design coordinates `b`.
    records: Vec<ChoiceObservation>,
    last_fit: usize,
}

impl LinearUcb {
    pub fn new(catalog: ItemCatalog, layout: ParamLayout, ridge: f64, theta: DVector<f64>) -> Result<Self> {
        if catalog.dim() != layout.rows() || theta.len() != layout.len() {
            return Err(Error::DimensionMismatch {
                operand: "engine parameter",
                expected: layout.len(),
                found: theta.len(),
            });
        }
        let d = layout.len();
        Ok(Self {
            catalog,
            layout,
            theta,
            gram: DMatrix::identity(d, d) * ridge,
            gram_inv: DMatrix::identity(d, d) / ridge,
            records: Vec::new(),
            last_fit: 0,
        })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn gram_inverse(&self) -> &DMatrix<f64> {
        &self.gram_inv
    }

    pub fn n_items(&self) -> usize {
        self.catalog.n_items()
    }

    pub fn n_records(&self) -> usize {
        self.records.len()
    }

    pub fn last_fit(&self) -> usize {
        self.last_fit
    }

    /// Marks the current parameter as fitted on all records seen so far.
    pub fn mark_fitted(&mut self) {
        self.last_fit = self.records.len();
    }

    /// Adds one record (user already in design coordinates) and updates `W`
    /// and `W⁻¹` with the features of every offered item.
    pub fn push(&mut self, record: ChoiceObservation) {
        let b = &record.user.q;
        for &i in record.assortment.items() {
            let a = self.catalog.features().row(i).transpose();
            let x = self.layout.feature(&a, b);
            self.gram.ger(1.0, &x, &x, 1.0);
            sherman_morrison_update(&mut self.gram_inv, &x);
        }
        self.records.push(record);
    }

    /// Recomputes `W⁻¹` from `W`, discarding accumulated rounding.
    pub fn refresh_inverse(&mut self) -> Result<()> {
        self.gram_inv = spd_inverse(&self.gram)
            .ok_or_else(|| Error::NonFinite("Gram matrix lost positive definiteness"))?;
        Ok(())
    }

    /// Warm-started MLE on every record, then a fresh `W⁻¹`.
    pub fn refit(&mut self, solver: &SolverConfig) -> Result<()> {
        if self.records.is_empty() {
            return Ok(());
        }
        let data = ObservationSet::new_unchecked(&self.catalog, &self.records);
        let objective = BilinearObjective::new(data, self.layout.clone())?;
        let report = fit_mle(&objective, &self.theta, solver)?;
        self.theta = report.parameter;
        self.last_fit = self.records.len();
        self.refresh_inverse()
    }

    /// Point estimates `a_iᵀ Θ̂ b` and widths `‖x_i‖_{W⁻¹}` for every item.
    pub fn scores(&self, b: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
        let theta = self.layout.scatter(&self.theta);
        let m = theta * b;
        let contracted = self.layout.contract_user(&self.gram_inv, b);
        let items = self.catalog.features();
        let means = (items * &m).iter().copied().collect();
        let am = items * &contracted;
        let widths = (0..items.nrows())
            .map(|i| am.row(i).dot(&items.row(i)).max(0.0).sqrt())
            .collect();
        (means, widths)
    }

    /// Clamped optimistic utilities `mean + radius · width`.
    pub fn optimistic_utilities(&self, b: &DVector<f64>, radius: f64, clamp: f64) -> Vec<f64> {
        let (means, widths) = self.scores(b);
        means
            .iter()
            .zip(&widths)
            .map(|(m, w)| (m + radius * w).clamp(-clamp, clamp))
            .collect()
    }

    pub fn select(&self, b: &DVector<f64>, radius: f64, clamp: f64, capacity: usize) -> Result<Assortment> {
        let z = self.optimistic_utilities(b, radius, clamp);
        let instance = OptimizationInstance::new(z, self.catalog.revenues().iter().copied().collect(), capacity)?;
        Ok(static_mnl(&instance).0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choice::{Choice, UserContext};
    use crate::linalg::{gaussian_matrix, gaussian_vector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn engine(seed: u64) -> (LinearUcb, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let items = gaussian_matrix(6, 3, &mut rng);
        let catalog = ItemCatalog::with_unit_revenues(items).unwrap();
        let layout = ParamLayout::full(3, 2);
        let e = LinearUcb::new(catalog, layout, 1e-3, DVector::zeros(6)).unwrap();
        (e, rng)
    }

    #[test]
    fn widths_match_explicit_quadratic_form() {
        let (mut e, mut rng) = engine(1);
        for t in 0..10 {
            let user = UserContext::from(gaussian_vector(2, &mut rng));
            let s = Assortment::new(vec![t % 6, (t + 1) % 6], 6, 2).unwrap();
            e.push(ChoiceObservation::new(user, s, Choice::NoPurchase).unwrap());
        }
        let b = gaussian_vector(2, &mut rng);
        let (_, widths) = e.scores(&b);
        for (i, w) in widths.iter().enumerate() {
            let a = e.catalog.features().row(i).transpose();
            let x = e.layout.feature(&a, &b);
            let direct = x.dot(&(&e.gram_inv * &x)).sqrt();
            assert!((w - direct).abs() < 1e-9 * direct.max(1.0));
        }
        let inv = spd_inverse(&e.gram).unwrap();
        assert!((inv - &e.gram_inv).norm() < 1e-6 * e.gram_inv.norm());
    }

    #[test]
    fn gram_only_grows() {
        let (mut e, mut rng) = engine(2);
        let mut prev = e.gram.clone();
        for t in 0..20 {
            let user = UserContext::from(gaussian_vector(2, &mut rng));
            let s = Assortment::new(vec![t % 6], 6, 2).unwrap();
            e.push(ChoiceObservation::new(user, s, Choice::Item(t % 6)).unwrap());
            let diff = &e.gram - &prev;
            let eig = diff.symmetric_eigenvalues();
            assert!(eig.iter().all(|&l| l > -1e-9));
            prev = e.gram.clone();
        }
    }
}
