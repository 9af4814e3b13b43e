//! Rank-constrained estimation of the bilinear parameter.
//!
//! The rank constraint is handled with the Burer–Monteiro factorization
//! `Φ = U Vᵀ` and alternating gradient steps on
//! `L_n(U Vᵀ) + (1/8) ‖UᵀU − VᵀV‖_F²`. The fitted matrix is then rotated into
//! its own singular bases and truncated, which gives the reduced coordinates
//! used by the UCB stage.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, ensure_finite, Error, Result};
use crate::layout::ParamLayout;
use crate::likelihood::{
    bilinear_nll, fit_mle, BilinearObjective, ObservationSet, Objective, SolverConfig,
};
use crate::linalg::{full_svd, rect_diag};

/// SVD factors of an estimate together with the retained rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceEstimate {
    /// `d2 × d2`, orthonormal.
    pub u_hat: DMatrix<f64>,
    /// `d1 × d1`, orthonormal.
    pub v_hat: DMatrix<f64>,
    /// Nonincreasing, length `min(d1, d2)`.
    pub d_hat: DVector<f64>,
    pub rank: usize,
}

impl SubspaceEstimate {
    pub fn item_dim(&self) -> usize {
        self.u_hat.nrows()
    }

    pub fn user_dim(&self) -> usize {
        self.v_hat.nrows()
    }

    /// Reduced dimension `(d1 + d2) r − r²`.
    pub fn df(&self) -> usize {
        reduced_dim(self.user_dim(), self.item_dim(), self.rank)
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::truncated(self.item_dim(), self.user_dim(), self.rank)
            .expect("rank validated at construction")
    }

    /// Rows `Ûᵀ p_i` for every row `p_iᵀ` of `items`.
    pub fn rotate_items(&self, items: &DMatrix<f64>) -> DMatrix<f64> {
        items * &self.u_hat
    }

    pub fn rotate_user(&self, q: &DVector<f64>) -> DVector<f64> {
        self.v_hat.tr_mul(q)
    }

    /// `Θ = Ûᵀ Φ V̂`.
    pub fn rotate_parameter(&self, phi: &DMatrix<f64>) -> DMatrix<f64> {
        self.u_hat.tr_mul(phi) * &self.v_hat
    }

    /// `Û D̂ V̂ᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let d = rect_diag(self.item_dim(), self.user_dim(), &self.d_hat);
        &self.u_hat * d * self.v_hat.transpose()
    }

    /// `rtv(D̂)`, the reduced parameter that reproduces the fitted matrix.
    pub fn initial_theta(&self) -> DVector<f64> {
        self.layout()
            .gather(&rect_diag(self.item_dim(), self.user_dim(), &self.d_hat))
    }
}

pub fn reduced_dim(d1: usize, d2: usize, r: usize) -> usize {
    (d1 + d2) * r - r * r
}

/// Full SVD of `phi_hat` with a deterministic sign convention, keeping rank `r`.
pub fn extract_subspace(phi_hat: &DMatrix<f64>, r: usize) -> Result<SubspaceEstimate> {
    ensure_finite("estimate", phi_hat.iter())?;
    check_rank(phi_hat.nrows(), phi_hat.ncols(), r)?;
    let (u_hat, d_hat, v_hat) = full_svd(phi_hat);
    Ok(SubspaceEstimate {
        u_hat,
        v_hat,
        d_hat,
        rank: r,
    })
}

fn check_rank(rows: usize, cols: usize, r: usize) -> Result<()> {
    if r == 0 || r > rows.min(cols) {
        return Err(Error::InvalidArgument(format!(
            "rank {r} outside 1..={}",
            rows.min(cols)
        )));
    }
    Ok(())
}

/// Truncation-vectorization: `(vec Θ₁₁, vec Θ₁₂, vec Θ₂₁)`, column-major blocks.
pub fn rtv(theta: &DMatrix<f64>, r: usize) -> Result<DVector<f64>> {
    let layout = ParamLayout::truncated(theta.nrows(), theta.ncols(), r)?;
    Ok(layout.gather(theta))
}

/// `rtv((Ûᵀp)(V̂ᵀq)ᵀ, r)`.
pub fn reduce_feature(p: &DVector<f64>, q: &DVector<f64>, sub: &SubspaceEstimate) -> Result<DVector<f64>> {
    ensure_dim("item vector p", sub.item_dim(), p.len())?;
    ensure_dim("user vector q", sub.user_dim(), q.len())?;
    let a = sub.u_hat.tr_mul(p);
    let b = sub.rotate_user(q);
    Ok(sub.layout().feature(&a, &b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FgdConfig {
    /// Initial step `η`. With backtracking the step adapts from here.
    pub step_size: f64,
    pub max_iterations: usize,
    /// Relative change of the regularized objective that ends the loop.
    pub tolerance: f64,
    /// Armijo backtracking on each factor step; without it a non-finite
    /// objective is an error.
    pub backtracking: bool,
}

impl Default for FgdConfig {
    fn default() -> Self {
        Self {
            step_size: 0.01,
            max_iterations: 2000,
            tolerance: 1e-8,
            backtracking: true,
        }
    }
}

impl FgdConfig {
    /// Weight of the balancing term `‖UᵀU − VᵀV‖_F²`.
    pub const REGULARIZATION_WEIGHT: f64 = 0.125;

    pub fn regularization_weight(&self) -> f64 {
        Self::REGULARIZATION_WEIGHT
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::Config(
                "fgd step_size, tolerance and max_iterations must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FgdFit {
    /// `U Vᵀ`, rank at most `r`.
    pub phi: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub iterations: usize,
    pub initial_objective: f64,
    pub objective: f64,
    /// `‖UᵀU − VᵀV‖_F` at the start and at the end.
    pub initial_balance: f64,
    pub balance: f64,
    pub converged: bool,
}

struct FactorProblem<'a> {
    items: &'a DMatrix<f64>,
    data: ObservationSet<'a>,
}

impl FactorProblem<'_> {
    /// Objective and the NLL gradient in `Φ`; factor gradients follow from it.
    fn evaluate(&self, u: &DMatrix<f64>, v: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
        let phi = u * v.transpose();
        let mut g = DMatrix::zeros(phi.nrows(), phi.ncols());
        let nll = bilinear_nll(self.items, self.data.records(), &phi, Some(&mut g));
        let a = u.tr_mul(u) - v.tr_mul(v);
        (nll + FgdConfig::REGULARIZATION_WEIGHT * a.norm_squared(), g)
    }

    fn grad_u(g: &DMatrix<f64>, u: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        let a = u.tr_mul(u) - v.tr_mul(v);
        g * v + u * &a * (4.0 * FgdConfig::REGULARIZATION_WEIGHT)
    }

    fn grad_v(g: &DMatrix<f64>, u: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        let a = u.tr_mul(u) - v.tr_mul(v);
        g.tr_mul(u) - v * &a * (4.0 * FgdConfig::REGULARIZATION_WEIGHT)
    }
}

fn balance(u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    (u.tr_mul(u) - v.tr_mul(v)).norm()
}

/// Factored gradient descent from the top-`r` SVD of `phi0`.
pub fn fgd_fit(
    data: &ObservationSet<'_>,
    r: usize,
    phi0: &DMatrix<f64>,
    config: &FgdConfig,
) -> Result<FgdFit> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let d2 = data.item_dim();
    let d1 = data.user_dim().unwrap_or(0);
    ensure_dim("initial estimate rows", d2, phi0.nrows())?;
    ensure_dim("initial estimate columns", d1, phi0.ncols())?;
    ensure_finite("initial estimate", phi0.iter())?;
    check_rank(d2, d1, r)?;

    let (u0, d0, v0) = full_svd(phi0);
    let mut u = DMatrix::zeros(d2, r);
    let mut v = DMatrix::zeros(d1, r);
    for j in 0..r {
        let s = d0[j].sqrt();
        u.column_mut(j).copy_from(&(u0.column(j) * s));
        v.column_mut(j).copy_from(&(v0.column(j) * s));
    }
    fgd_fit_factors(data, u, v, config)
}

/// Factored gradient descent from explicit factors `U` (`d2 × r`) and `V` (`d1 × r`).
pub fn fgd_fit_factors(
    data: &ObservationSet<'_>,
    mut u: DMatrix<f64>,
    mut v: DMatrix<f64>,
    config: &FgdConfig,
) -> Result<FgdFit> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    ensure_dim("factor U rows", data.item_dim(), u.nrows())?;
    ensure_dim("factor V rows", data.user_dim().unwrap_or(0), v.nrows())?;
    ensure_dim("factor V columns", u.ncols(), v.ncols())?;
    ensure_finite("factor U", u.iter())?;
    ensure_finite("factor V", v.iter())?;

    let problem = FactorProblem {
        items: data.catalog().features(),
        data: *data,
    };
    let (initial_objective, mut g) = problem.evaluate(&u, &v);
    if !initial_objective.is_finite() {
        return Err(Error::Diverged { iteration: 0 });
    }
    let initial_balance = balance(&u, &v);
    let mut f = initial_objective;
    let mut step_u = config.step_size;
    let mut step_v = config.step_size;
    let mut iterations = 0;
    let mut converged = false;

    for k in 1..=config.max_iterations {
        let f_start = f;

        // U-step at (U, V).
        let gu = FactorProblem::grad_u(&g, &u, &v);
        let moved_u = factor_step(config, k, f, &mut step_u, &gu, &mut u, |cand| problem.evaluate(cand, &v))?;
        if let Some((fc, gc)) = moved_u.as_ref() {
            f = *fc;
            g.copy_from(gc);
        }

        // V-step at the freshly updated U.
        let gv = FactorProblem::grad_v(&g, &u, &v);
        let moved_v = factor_step(config, k, f, &mut step_v, &gv, &mut v, |cand| problem.evaluate(&u, cand))?;
        if let Some((fc, gc)) = moved_v.as_ref() {
            f = *fc;
            g.copy_from(gc);
        }

        iterations = k;
        if moved_u.is_none() && moved_v.is_none() {
            converged = true;
            break;
        }
        if (f_start - f).abs() / f_start.abs().max(1e-300) < config.tolerance {
            converged = true;
            break;
        }
    }

    Ok(FgdFit {
        phi: &u * v.transpose(),
        balance: balance(&u, &v),
        u,
        v,
        iterations,
        initial_objective,
        objective: f,
        initial_balance,
        converged,
    })
}

/// One gradient step on a single factor. Returns the new objective and its
/// `Φ`-gradient, or `None` if backtracking found no decrease.
fn factor_step<F>(
    config: &FgdConfig,
    iteration: usize,
    f: f64,
    step: &mut f64,
    grad: &DMatrix<f64>,
    factor: &mut DMatrix<f64>,
    evaluate: F,
) -> Result<Option<(f64, DMatrix<f64>)>>
where
    F: Fn(&DMatrix<f64>) -> (f64, DMatrix<f64>),
{
    let g2 = grad.norm_squared();
    if g2 == 0.0 {
        return Ok(None);
    }
    if !config.backtracking {
        let cand = &*factor - grad * config.step_size;
        let (fc, gc) = evaluate(&cand);
        if !fc.is_finite() {
            return Err(Error::Diverged { iteration });
        }
        *factor = cand;
        return Ok(Some((fc, gc)));
    }
    let mut t = *step;
    let mut halvings = 0;
    loop {
        let cand = &*factor - grad * t;
        let (fc, gc) = evaluate(&cand);
        if fc.is_finite() && fc <= f - 1e-4 * t * g2 {
            *factor = cand;
            // Grow again after a step that needed no halving.
            *step = if halvings == 0 { t * 2.0 } else { t };
            return Ok(Some((fc, gc)));
        }
        t *= 0.5;
        halvings += 1;
        if t < 1e-20 {
            return Ok(None);
        }
    }
}

/// Unconstrained MLE of `Φ` started from the zero matrix.
pub fn unconstrained_mle(data: &ObservationSet<'_>, solver: &SolverConfig) -> Result<DMatrix<f64>> {
    let objective = BilinearObjective::full(*data)?;
    let fit = fit_mle(&objective, &DVector::zeros(objective.dim()), solver)?;
    Ok(objective.layout().scatter(&fit.parameter))
}

/// `a_n (d1 + d2 − r) r` with `a_n = ln(n)/n`.
pub fn gic_penalty(n: usize, d1: usize, d2: usize, r: usize) -> f64 {
    let n = n as f64;
    n.ln() / n * ((d1 + d2 - r) * r) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GicScore {
    pub rank: usize,
    pub nll: f64,
    pub penalty: f64,
    pub gic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GicSelection {
    pub rank: usize,
    pub scores: Vec<GicScore>,
    /// Rank-constrained fit at the selected rank.
    pub phi_hat: DMatrix<f64>,
}

/// Picks the rank minimizing `L_n(Φ̂_r) + a_n (d1 + d2 − r) r`; ties go to the
/// smaller rank. Every candidate starts from the same unconstrained MLE.
pub fn select_rank_gic(
    data: &ObservationSet<'_>,
    rank_grid: &[usize],
    fgd: &FgdConfig,
    solver: &SolverConfig,
) -> Result<GicSelection> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let phi0 = unconstrained_mle(data, solver)?;
    select_rank_gic_from(data, rank_grid, &phi0, fgd)
}

/// [`select_rank_gic`] with a caller-supplied shared initializer.
pub fn select_rank_gic_from(
    data: &ObservationSet<'_>,
    rank_grid: &[usize],
    phi0: &DMatrix<f64>,
    fgd: &FgdConfig,
) -> Result<GicSelection> {
    if rank_grid.is_empty() {
        return Err(Error::InvalidArgument("rank grid is empty".into()));
    }
    let d2 = data.item_dim();
    let d1 = data.user_dim().ok_or(Error::EmptyData)?;
    let mut grid = rank_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    for &r in &grid {
        check_rank(d2, d1, r)?;
    }
    let n = data.len();
    let fits: Vec<DMatrix<f64>> = grid
        .par_iter()
        .map(|&r| fgd_fit(data, r, phi0, fgd).map(|f| f.phi))
        .collect::<Result<_>>()?;
    let mut scores = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64, DMatrix<f64>)> = None;
    for (&r, phi) in grid.iter().zip(fits) {
        let nll = bilinear_nll(data.catalog().features(), data.records(), &phi, None);
        let penalty = gic_penalty(n, d1, d2, r);
        let gic = nll + penalty;
        scores.push(GicScore {
            rank: r,
            nll,
            penalty,
            gic,
        });
        // Ascending grid plus strict comparison keeps the smaller rank on ties.
        if best.as_ref().is_none_or(|b| gic < b.1) {
            best = Some((r, gic, phi));
        }
    }
    let (rank, _, phi_hat) = best.expect("grid is nonempty");
    Ok(GicSelection {
        rank,
        scores,
        phi_hat,
    })
}

/// `1..=min(d1, d2, 10)`.
pub fn default_rank_grid(d1: usize, d2: usize) -> Vec<usize> {
    (1..=d1.min(d2).min(10)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choice::{Assortment, Choice, ChoiceObservation, ItemCatalog, UserContext};
    use crate::linalg::{frobenius_inner, gaussian_matrix, gaussian_vector, random_orthonormal};
    use proptest::prelude::*;
    use rand::seq::index::sample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rtv_block_order_on_2x2() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(rtv(&m, 1).unwrap().as_slice(), &[1.0, 2.0, 3.0]);
        assert!(rtv(&m, 3).is_err());
        assert!(rtv(&m, 0).is_err());
    }

    #[test]
    fn rtv_at_full_rank_is_a_permutation() {
        let m = DMatrix::from_fn(3, 5, |r, c| (r * 5 + c) as f64);
        let mut v: Vec<f64> = rtv(&m, 3).unwrap().iter().copied().collect();
        let mut all: Vec<f64> = m.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        all.sort_by(f64::total_cmp);
        assert_eq!(v, all);
    }

    #[test]
    fn subspace_of_diagonal_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let s = extract_subspace(&m, 1).unwrap();
        assert_eq!(s.d_hat.as_slice(), &[3.0, 1.0]);
        assert!((s.u_hat.abs() - DMatrix::identity(2, 2)).norm() < 1e-12);
        assert!((s.v_hat.abs() - DMatrix::identity(2, 2)).norm() < 1e-12);
        assert_eq!(s.df(), 3);
    }

    #[test]
    fn subspace_is_deterministic_and_ordered() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let m = gaussian_matrix(5, 3, &mut rng);
            let a = extract_subspace(&m, 2).unwrap();
            let b = extract_subspace(&m, 2).unwrap();
            assert_eq!(a, b);
            assert!(a.d_hat.as_slice().windows(2).all(|w| w[0] >= w[1]));
            assert!((a.reconstruct() - &m).norm() < 1e-10);
        }
    }

    #[test]
    fn reduce_feature_with_identity_rotation() {
        let sub = SubspaceEstimate {
            u_hat: DMatrix::identity(3, 3),
            v_hat: DMatrix::identity(2, 2),
            d_hat: DVector::from_vec(vec![1.0, 0.0]),
            rank: 1,
        };
        let p = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let q = DVector::from_vec(vec![-1.0, 0.5]);
        let x = reduce_feature(&p, &q, &sub).unwrap();
        assert_eq!(x, rtv(&(&p * q.transpose()), 1).unwrap());
        assert!(reduce_feature(&q, &q, &sub).is_err());
    }

    #[test]
    fn gic_penalty_difference_identity() {
        let (n, d1, d2) = (2000, 30, 20);
        let an = (n as f64).ln() / n as f64;
        for (r, s) in [(3, 1), (5, 2), (2, 7)] {
            let lhs = gic_penalty(n, d1, d2, r) - gic_penalty(n, d1, d2, s);
            let rhs = an * (((d1 + d2) * r) as f64 - ((d1 + d2) * s) as f64
                - ((r * r) as f64 - (s * s) as f64));
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    fn rank_one_data(seed: u64, n: usize) -> (ItemCatalog, Vec<ChoiceObservation>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d1, d2, n_items, k) = (5, 4, 10, 3);
        let u = random_orthonormal(d2, 1, &mut rng);
        let v = random_orthonormal(d1, 1, &mut rng);
        let phi = &u * v.transpose() * 3.0;
        let catalog = ItemCatalog::with_unit_revenues(gaussian_matrix(n_items, d2, &mut rng)).unwrap();
        let mut records = Vec::new();
        for _ in 0..n {
            let q = gaussian_vector(d1, &mut rng);
            let s = Assortment::new(sample(&mut rng, n_items, k).into_vec(), n_items, k).unwrap();
            let ut: Vec<f64> = s.items().iter().map(|&i| catalog.item(i).dot(&(&phi * &q))).collect();
            let probs = crate::choice::choice_probabilities(&ut).unwrap();
            let idx = crate::choice::sample_choice(&probs, &mut rng);
            records.push(ChoiceObservation::new(UserContext::from(q), s.clone(), Choice::from_index(&s, idx)).unwrap());
        }
        (catalog, records, phi)
    }

    #[test]
    fn fgd_recovers_rank_one_matrix() {
        let (catalog, records, phi_star) = rank_one_data(21, 5000);
        let data = ObservationSet::new(&catalog, &records).unwrap();
        let phi0 = unconstrained_mle(&data, &SolverConfig::default()).unwrap();
        let fit = fgd_fit(&data, 1, &phi0, &FgdConfig::default()).unwrap();
        let rel = (&fit.phi - &phi_star).norm() / phi_star.norm();
        assert!(rel < 0.2, "relative error {rel}");
        assert!(fit.objective <= fit.initial_objective);
        let (_, d, _) = full_svd(&fit.phi);
        assert!(d.iter().skip(1).all(|&s| s < 1e-8 * d[0]));
    }

    #[test]
    fn balance_shrinks_from_unbalanced_factors() {
        let (catalog, records, _) = rank_one_data(22, 2000);
        let data = ObservationSet::new(&catalog, &records).unwrap();
        let phi0 = unconstrained_mle(&data, &SolverConfig::default()).unwrap();
        let (u0, d0, v0) = full_svd(&phi0);
        let s = d0[0].sqrt();
        let u = u0.columns(0, 1) * (3.0 * s);
        let v = v0.columns(0, 1) * (s / 3.0);
        let fit = fgd_fit_factors(&data, u, v, &FgdConfig::default()).unwrap();
        assert!(fit.initial_balance > 1.0);
        assert!(fit.balance <= fit.initial_balance, "{} > {}", fit.balance, fit.initial_balance);
        assert!(fit.objective <= fit.initial_objective);
    }

    #[test]
    fn singleton_grid_returns_its_rank() {
        let (catalog, records, _) = rank_one_data(4, 300);
        let data = ObservationSet::new(&catalog, &records).unwrap();
        let sel = select_rank_gic(&data, &[3], &FgdConfig::default(), &SolverConfig::default()).unwrap();
        assert_eq!(sel.rank, 3);
        assert_eq!(sel.scores.len(), 1);
        assert!(select_rank_gic(&data, &[], &FgdConfig::default(), &SolverConfig::default()).is_err());
        assert!(select_rank_gic(&data, &[5], &FgdConfig::default(), &SolverConfig::default()).is_err());
    }

    proptest! {
        #[test]
        fn rtv_inner_product_decomposition(
            d2 in 1usize..6, d1 in 1usize..6, r_seed in 0usize..10, seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = 1 + r_seed % d1.min(d2);
            let x = gaussian_matrix(d2, d1, &mut rng);
            let t = gaussian_matrix(d2, d1, &mut rng);
            let x22 = x.view((r, r), (d2 - r, d1 - r)).clone_owned();
            let t22 = t.view((r, r), (d2 - r, d1 - r)).clone_owned();
            let lhs = frobenius_inner(&x, &t);
            let rhs = rtv(&x, r).unwrap().dot(&rtv(&t, r).unwrap()) + frobenius_inner(&x22, &t22);
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn rotated_utility_is_invariant(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phi = gaussian_matrix(4, 3, &mut rng);
            let sub = extract_subspace(&gaussian_matrix(4, 3, &mut rng), 2).unwrap();
            let p = gaussian_vector(4, &mut rng);
            let q = gaussian_vector(3, &mut rng);
            let direct = p.dot(&(&phi * &q));
            let theta = sub.rotate_parameter(&phi);
            let a = sub.u_hat.tr_mul(&p);
            let b = sub.rotate_user(&q);
            prop_assert!((a.dot(&(&theta * &b)) - direct).abs() < 1e-10);
            // Norm preserved before truncation.
            let outer = &a * b.transpose();
            prop_assert!((outer.norm() - (&p * q.transpose()).norm()).abs() < 1e-10);
            // Decomposition through reduce_feature.
            let x = reduce_feature(&p, &q, &sub).unwrap();
            let x22 = outer.view((2, 2), (2, 1)).clone_owned();
            let t22 = theta.view((2, 2), (2, 1)).clone_owned();
            let via = x.dot(&rtv(&theta, 2).unwrap()) + frobenius_inner(&x22, &t22);
            prop_assert!((via - direct).abs() < 1e-10);
        }
    }
}
