//! Synthetic environments, the interaction loop with exact regret accounting,
//! and seeded replication.
//!
//! Randomness is paired: user `t` and the uniform that resolves the choice at
//! step `t` are pure functions of `(environment seed, t)`. Two policies run on
//! the same environment therefore meet the same users, and they see the same
//! choice whenever they offer the same assortment.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assortment::{static_mnl, OptimizationInstance};
use crate::choice::{
    probabilities_unchecked, revenue_unchecked, sample_choice_from_uniform, Assortment, Choice,
    ItemCatalog, UserContext,
};
use crate::error::{ensure_dim, Error, Result};
use crate::linalg::{full_svd, gaussian_matrix, gaussian_vector, random_orthonormal};
use crate::policy::{AnyPolicy, Policy, PolicyConfig, PolicyKind};

/// `u = α + βᵀp + γᵀq`, added on top of `pᵀΦq`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainEffects {
    pub intercept: f64,
    /// Item coefficients, length `d2`.
    pub item: DVector<f64>,
    /// User coefficients, length `d1`.
    pub user: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `d2 × d1`.
    pub phi_star: DMatrix<f64>,
    pub rank: usize,
    /// Nonincreasing, length `min(d1, d2)`.
    pub singular_values: DVector<f64>,
    pub main_effects: Option<MainEffects>,
}

impl GroundTruth {
    /// Low-rank truth without main effects; singular values are recomputed.
    pub fn from_matrix(phi_star: DMatrix<f64>) -> Self {
        let (_, d, _) = full_svd(&phi_star);
        let tol = 1e-10 * d.get(0).copied().unwrap_or(0.0).max(1e-300);
        let rank = d.iter().filter(|&&s| s > tol).count();
        Self {
            phi_star,
            rank,
            singular_values: d,
            main_effects: None,
        }
    }

    pub fn item_dim(&self) -> usize {
        self.phi_star.nrows()
    }

    pub fn user_dim(&self) -> usize {
        self.phi_star.ncols()
    }

    /// True utilities of every catalog row for user `q`.
    pub fn utilities(&self, items: &DMatrix<f64>, q: &DVector<f64>) -> Result<Vec<f64>> {
        ensure_dim("item vector p", self.item_dim(), items.ncols())?;
        ensure_dim("user vector q", self.user_dim(), q.len())?;
        let mut m = &self.phi_star * q;
        let mut shift = 0.0;
        if let Some(me) = &self.main_effects {
            m += &me.item;
            shift = me.intercept + me.user.dot(q);
        }
        Ok((items * m).iter().map(|u| u + shift).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Exactly rank `r`.
    LowRank,
    /// Rank `r` at full scale plus every other direction at 1% of it.
    ApproxLowrank,
    /// All `min(d1, d2)` singular values equal, carrying the energy of a
    /// rank-`r` matrix.
    FullRank,
    /// Intercept and main effects only, no interactions.
    MainEffectOnly,
}

/// Fraction of the leading scale kept by the trailing directions of
/// [`Scenario::ApproxLowrank`].
pub const APPROX_TAIL_FRACTION: f64 = 0.01;

fn truth_with_spectrum<R: Rng + ?Sized>(d1: usize, d2: usize, d: DVector<f64>, rng: &mut R) -> GroundTruth {
    let m = d.len();
    let u = random_orthonormal(d2, m, rng);
    let v = random_orthonormal(d1, m, rng);
    let phi_star = &u * DMatrix::from_diagonal(&d) * v.transpose();
    let mut singular_values = DVector::zeros(d1.min(d2));
    singular_values.rows_mut(0, m).copy_from(&d);
    GroundTruth {
        phi_star,
        rank: d.iter().filter(|&&s| s > 0.0).count(),
        singular_values,
        main_effects: None,
    }
}

fn gaussian_catalog<R: Rng + ?Sized>(d2: usize, n_items: usize, rng: &mut R) -> Result<ItemCatalog> {
    ItemCatalog::with_unit_revenues(gaussian_matrix(n_items, d2, rng))
}

fn check_shape(d1: usize, d2: usize, n_items: usize, rank: usize) -> Result<()> {
    if d1 == 0 || d2 == 0 || n_items == 0 {
        return Err(Error::InvalidArgument("dimensions and catalog size must be positive".into()));
    }
    if rank == 0 || rank > d1.min(d2) {
        return Err(Error::InvalidArgument(format!(
            "rank {rank} outside 1..={}",
            d1.min(d2)
        )));
    }
    Ok(())
}

/// Rank-`r` truth `U* D* V*ᵀ` with `D* = scale · I_r`, Gaussian item features
/// and unit revenues.
pub fn generate_instance<R: Rng + ?Sized>(
    d1: usize,
    d2: usize,
    n_items: usize,
    rank: usize,
    singular_scale: f64,
    rng: &mut R,
) -> Result<(GroundTruth, ItemCatalog)> {
    generate_misspecified_instance(Scenario::LowRank, d1, d2, n_items, rank, singular_scale, rng)
}

pub fn generate_misspecified_instance<R: Rng + ?Sized>(
    scenario: Scenario,
    d1: usize,
    d2: usize,
    n_items: usize,
    rank: usize,
    singular_scale: f64,
    rng: &mut R,
) -> Result<(GroundTruth, ItemCatalog)> {
    check_shape(d1, d2, n_items, rank)?;
    let m = d1.min(d2);
    let truth = match scenario {
        Scenario::LowRank => truth_with_spectrum(d1, d2, DVector::from_element(rank, singular_scale), rng),
        Scenario::ApproxLowrank => {
            let d = DVector::from_fn(m, |i, _| {
                if i < rank {
                    singular_scale
                } else {
                    APPROX_TAIL_FRACTION * singular_scale
                }
            });
            truth_with_spectrum(d1, d2, d, rng)
        }
        Scenario::FullRank => {
            let level = singular_scale * (rank as f64 / m as f64).sqrt();
            truth_with_spectrum(d1, d2, DVector::from_element(m, level), rng)
        }
        Scenario::MainEffectOnly => {
            let item = gaussian_vector(d2, rng);
            let user = gaussian_vector(d1, rng);
            let intercept: f64 = rng.sample(rand_distr::StandardNormal);
            GroundTruth {
                phi_star: DMatrix::zeros(d2, d1),
                rank: 0,
                singular_values: DVector::zeros(m),
                main_effects: Some(MainEffects {
                    intercept,
                    item: item.normalize() * singular_scale,
                    user: user.normalize() * singular_scale,
                }),
            }
        }
    };
    let catalog = gaussian_catalog(d2, n_items, rng)?;
    Ok((truth, catalog))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UserSampler {
    /// Standard Gaussian users of dimension `dim`.
    Gaussian { dim: usize },
    /// Uniform resampling with replacement from observed users.
    Empirical { users: Vec<DVector<f64>> },
}

impl UserSampler {
    pub fn dim(&self) -> usize {
        match self {
            UserSampler::Gaussian { dim } => *dim,
            UserSampler::Empirical { users } => users.first().map_or(0, |u| u.len()),
        }
    }
}

const USER_STREAM: u64 = 0x75;
const CHOICE_STREAM: u64 = 0x63;

/// SplitMix64 finalizer over the combined words.
pub(crate) fn stream_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut z = seed
        ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED69);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    truth: GroundTruth,
    catalog: ItemCatalog,
    users: UserSampler,
    capacity: usize,
    seed: u64,
}

impl Environment {
    pub fn new(truth: GroundTruth, catalog: ItemCatalog, users: UserSampler, capacity: usize, seed: u64) -> Result<Self> {
        ensure_dim("item features", truth.item_dim(), catalog.dim())?;
        ensure_dim("user sampler", truth.user_dim(), users.dim())?;
        if let UserSampler::Empirical { users } = &users {
            if users.iter().any(|u| u.len() != truth.user_dim()) {
                return Err(Error::InvalidArgument("empirical users differ in dimension".into()));
            }
        }
        if capacity == 0 || capacity > catalog.n_items() {
            return Err(Error::InvalidArgument(format!(
                "capacity {capacity} must lie in 1..={}",
                catalog.n_items()
            )));
        }
        Ok(Self {
            truth,
            catalog,
            users,
            capacity,
            seed,
        })
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    pub fn catalog(&self) -> &ItemCatalog {
        &self.catalog
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn user_dim(&self) -> usize {
        self.truth.user_dim()
    }

    /// User arriving at step `t` (1-based).
    pub fn user(&self, t: usize) -> UserContext {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(self.seed, USER_STREAM, t as u64));
        let q = match &self.users {
            UserSampler::Gaussian { dim } => gaussian_vector(*dim, &mut rng),
            UserSampler::Empirical { users } => users[rng.random_range(0..users.len())].clone(),
        };
        UserContext { q }
    }

    pub fn utilities(&self, user: &UserContext) -> Result<Vec<f64>> {
        self.truth.utilities(self.catalog.features(), &user.q)
    }

    /// Revenue-optimal assortment and its expected revenue.
    pub fn optimal(&self, utilities: &[f64]) -> Result<(Assortment, f64)> {
        let instance = OptimizationInstance::new(
            utilities.to_vec(),
            self.catalog.revenues().iter().copied().collect(),
            self.capacity,
        )?;
        Ok(static_mnl(&instance))
    }

    pub fn expected_revenue(&self, utilities: &[f64], assortment: &Assortment) -> f64 {
        let (u, r) = self.restrict(utilities, assortment);
        revenue_unchecked(&u, &r)
    }

    /// Choice at step `t`; depends only on `(seed, t)` and the offered set.
    pub fn choose(&self, t: usize, utilities: &[f64], assortment: &Assortment) -> Choice {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(self.seed, CHOICE_STREAM, t as u64));
        let uniform: f64 = rng.random();
        let (u, _) = self.restrict(utilities, assortment);
        let probs = probabilities_unchecked(&u);
        Choice::from_index(assortment, sample_choice_from_uniform(&probs, uniform))
    }

    fn restrict(&self, utilities: &[f64], assortment: &Assortment) -> (Vec<f64>, Vec<f64>) {
        let r = self.catalog.revenues();
        assortment
            .items()
            .iter()
            .map(|&i| (utilities[i], r[i]))
            .unzip()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub policy: String,
    pub seed: u64,
    pub per_step_regret: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub config: Option<PolicyConfig>,
}

impl RegretTrace {
    /// Cumulative regret after step `t` (1-based).
    pub fn at(&self, t: usize) -> f64 {
        self.cumulative[t - 1]
    }
}

/// Runs `policy` for `horizon` steps and records exact expected-revenue regret.
pub fn run_episode(policy: &mut dyn Policy, env: &Environment, horizon: usize) -> Result<RegretTrace> {
    let mut per_step = Vec::with_capacity(horizon);
    let mut cumulative = Vec::with_capacity(horizon);
    let mut total = 0.0;
    for t in 1..=horizon {
        let user = env.user(t);
        let u = env.utilities(&user)?;
        let (_, best) = env.optimal(&u)?;
        let offered = policy.select(&user)?;
        if offered.len() > env.capacity() || offered.items().iter().any(|&i| i >= env.catalog().n_items()) {
            return Err(Error::Protocol(format!(
                "policy offered an invalid assortment {:?}",
                offered.items()
            )));
        }
        let regret = best - env.expected_revenue(&u, &offered);
        let chosen = env.choose(t, &u, &offered);
        policy.observe(&user, &offered, chosen)?;
        total += regret;
        per_step.push(regret);
        cumulative.push(total);
    }
    Ok(RegretTrace {
        policy: policy.name().to_string(),
        seed: env.seed(),
        per_step_regret: per_step,
        cumulative,
        config: None,
    })
}

/// One policy entry of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub config: PolicyConfig,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind, config: PolicyConfig) -> Self {
        Self {
            kind,
            name: None,
            config,
        }
    }

    pub fn display_name(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| self.kind.default_name(&self.config))
    }
}

/// How each replication obtains its environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EnvironmentSpec {
    /// A fresh synthetic instance per seed.
    Synthetic {
        d1: usize,
        d2: usize,
        n_items: usize,
        capacity: usize,
        rank: usize,
        singular_scale: f64,
        scenario: Scenario,
    },
    /// A fixed truth and catalog; only the user and choice streams vary.
    Fixed {
        truth: GroundTruth,
        catalog: ItemCatalog,
        users: UserSampler,
        capacity: usize,
    },
}

const INSTANCE_STREAM: u64 = 0x69;
const POLICY_STREAM: u64 = 0x70;

impl EnvironmentSpec {
    pub fn build(&self, seed: u64) -> Result<Environment> {
        match self {
            EnvironmentSpec::Synthetic {
                d1,
                d2,
                n_items,
                capacity,
                rank,
                singular_scale,
                scenario,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, INSTANCE_STREAM, 0));
                let (truth, catalog) =
                    generate_misspecified_instance(*scenario, *d1, *d2, *n_items, *rank, *singular_scale, &mut rng)?;
                Environment::new(truth, catalog, UserSampler::Gaussian { dim: *d1 }, *capacity, seed)
            }
            EnvironmentSpec::Fixed {
                truth,
                catalog,
                users,
                capacity,
            } => Environment::new(truth.clone(), catalog.clone(), users.clone(), *capacity, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub environment: EnvironmentSpec,
    pub policies: Vec<PolicySpec>,
    pub horizon: usize,
    pub checkpoints: Vec<usize>,
}

/// `{1000, 2000, 3000, 5000, 7500, 10000}` clipped to `horizon`; just
/// `horizon` when it is below 1000.
pub fn default_checkpoints(horizon: usize) -> Vec<usize> {
    let mut c: Vec<usize> = [1000, 2000, 3000, 5000, 7500, 10000]
        .into_iter()
        .filter(|&t| t <= horizon)
        .collect();
    if c.is_empty() {
        c.push(horizon);
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyAggregate {
    pub policy: String,
    pub mean: Vec<f64>,
    /// `1.96 · sd / √R`; zero when `single_seed`.
    pub ci_halfwidth: Vec<f64>,
    pub single_seed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub checkpoints: Vec<usize>,
    pub seeds: Vec<u64>,
    pub policies: Vec<PolicyAggregate>,
    /// Policy-major, then in seed order.
    pub traces: Vec<RegretTrace>,
}

impl Aggregate {
    pub fn policy(&self, name: &str) -> Option<&PolicyAggregate> {
        self.policies.iter().find(|p| p.policy == name)
    }
}

/// Mean and `1.96 · sd / √R` (sample standard deviation).
pub fn mean_and_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * var.sqrt() / n.sqrt())
}

pub fn run_single(experiment: &Experiment, policy_index: usize, seed: u64) -> Result<RegretTrace> {
    let spec = &experiment.policies[policy_index];
    let env = experiment.environment.build(seed)?;
    let mut policy = AnyPolicy::build(
        spec.kind,
        spec.name.clone(),
        &spec.config,
        env.catalog(),
        env.user_dim(),
        env.capacity(),
        experiment.horizon,
        stream_seed(seed, POLICY_STREAM, policy_index as u64),
        Some(env.truth()),
    )?;
    let mut trace = run_episode(&mut policy, &env, experiment.horizon)?;
    trace.config = Some(spec.config.clone());
    Ok(trace)
}

/// One episode per `(policy, seed)`, in parallel, aggregated in seed order.
pub fn replicate(experiment: &Experiment, seeds: &[u64]) -> Result<Aggregate> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("replicate needs at least one seed".into()));
    }
    if experiment.policies.is_empty() {
        return Err(Error::InvalidArgument("experiment lists no policies".into()));
    }
    if experiment.horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if let Some(&c) = experiment
        .checkpoints
        .iter()
        .find(|&&c| c == 0 || c > experiment.horizon)
    {
        return Err(Error::InvalidArgument(format!(
            "checkpoint {c} outside 1..={}",
            experiment.horizon
        )));
    }
    let jobs: Vec<(usize, u64)> = (0..experiment.policies.len())
        .flat_map(|p| seeds.iter().map(move |&s| (p, s)))
        .collect();
    let traces: Vec<RegretTrace> = jobs
        .par_iter()
        .map(|&(p, seed)| {
            run_single(experiment, p, seed).map_err(|e| Error::Episode {
                policy: experiment.policies[p].display_name(),
                seed,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let single_seed = seeds.len() == 1;
    let policies = traces
        .chunks(seeds.len())
        .map(|chunk| {
            let (mean, ci_halfwidth) = experiment
                .checkpoints
                .iter()
                .map(|&t| mean_and_ci(&chunk.iter().map(|tr| tr.at(t)).collect::<Vec<_>>()))
                .unzip();
            PolicyAggregate {
                policy: chunk[0].policy.clone(),
                mean,
                ci_halfwidth,
                single_seed,
            }
        })
        .collect();
    Ok(Aggregate {
        checkpoints: experiment.checkpoints.clone(),
        seeds: seeds.to_vec(),
        policies,
        traces,
    })
}
