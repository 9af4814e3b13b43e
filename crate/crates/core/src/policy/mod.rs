//! Assortment policies.
//!
//! Every policy follows the same protocol: construct with the catalog, the
//! horizon and a seed; then alternate [`Policy::select`] and
//! [`Policy::observe`] once per arriving user.

mod engine;
mod features;
mod elsa;
mod simple;
mod ucb_mnl;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::choice::{Assortment, Choice, ItemCatalog, UserContext};
use crate::error::{Error, Result};
use crate::likelihood::SolverConfig;
use crate::lowrank::FgdConfig;
use crate::sim::GroundTruth;

pub use elsa::{ElsaStage, ElsaUcb};
pub use engine::LinearUcb;
pub use features::{augment_items, augment_user, build_joint_feature, FeatureMode};
pub use simple::{uniform_assortment, OraclePolicy, UniformPolicy};
pub use ucb_mnl::UcbMnl;

pub trait Policy {
    fn name(&self) -> &str;
    fn select(&mut self, user: &UserContext) -> Result<Assortment>;
    fn observe(&mut self, user: &UserContext, assortment: &Assortment, chosen: Choice) -> Result<()>;
}

/// Rank used by ELSA: fixed, or chosen by GIC after exploration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankSpec {
    Fixed(usize),
    Auto,
}

impl Serialize for RankSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            RankSpec::Fixed(r) => s.serialize_u64(*r as u64),
            RankSpec::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for RankSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(0) => Err(serde::de::Error::custom("rank must be at least 1")),
            Raw::Num(r) => Ok(RankSpec::Fixed(r as usize)),
            Raw::Text(t) if t == "auto" => Ok(RankSpec::Auto),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "rank must be a positive integer or \"auto\", got \"{t}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefitSchedule {
    EveryStep,
    /// Refit whenever the number of observations has doubled since the last fit.
    Doubling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    /// Multiplier of the self-normalized confidence term.
    pub alpha: f64,
    /// Multiplier of the truncation-bias term `√(nK)` (ELSA only).
    pub beta: f64,
    /// `c` in the exploration length `c d1 d2 + √T`.
    pub exploration_c: f64,
    pub rank: RankSpec,
    /// Candidate ranks for GIC; defaults to `1..=min(d1, d2, 10)`.
    pub rank_grid: Option<Vec<usize>>,
    pub batch_size: usize,
    /// Gram matrices start at `ridge · I`.
    pub ridge: f64,
    pub refit_schedule: RefitSchedule,
    pub fgd: FgdConfig,
    pub solver: SolverConfig,
    /// Optimistic utilities are clamped to `±utility_clamp`.
    pub utility_clamp: f64,
    /// ELSA works on intercept-augmented features `(1, p)` and `(1, q)`.
    pub intercept: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            alpha: 5.0,
            beta: 1.0,
            exploration_c: 0.2,
            rank: RankSpec::Auto,
            rank_grid: None,
            batch_size: 1,
            ridge: 1e-6,
            refit_schedule: RefitSchedule::Doubling,
            fgd: FgdConfig::default(),
            solver: SolverConfig::default(),
            utility_clamp: 50.0,
            intercept: true,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.alpha >= 0.0) || !(self.beta >= 0.0) {
            return bad("alpha and beta must be nonnegative");
        }
        if !(self.exploration_c > 0.0) {
            return bad("exploration_c must be positive");
        }
        if !(self.ridge > 0.0) {
            return bad("ridge must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.utility_clamp > 0.0) {
            return bad("utility_clamp must be positive");
        }
        if let Some(grid) = &self.rank_grid {
            if grid.is_empty() || grid.contains(&0) {
                return bad("rank_grid must be nonempty with positive ranks");
            }
        }
        self.fgd.validate()?;
        self.solver.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Elsa,
    UcbMnlStacked,
    UcbMnlVectorized,
    Uniform,
    Oracle,
}

impl PolicyKind {
    pub fn default_name(&self, config: &PolicyConfig) -> String {
        match self {
            PolicyKind::Elsa => match config.rank {
                RankSpec::Auto => "ELSA-GIC".into(),
                RankSpec::Fixed(_) => "ELSA-UCB".into(),
            },
            PolicyKind::UcbMnlStacked => "Stacked-UCB-MNL".into(),
            PolicyKind::UcbMnlVectorized => "Vectorized-UCB-MNL".into(),
            PolicyKind::Uniform => "Uniform".into(),
            PolicyKind::Oracle => "Oracle".into(),
        }
    }
}

/// `ceil(c d1 d2 + √T)`, capped at `T`.
pub fn exploration_length(horizon: usize, d1: usize, d2: usize, c: f64) -> usize {
    let raw = (c * (d1 * d2) as f64 + (horizon as f64).sqrt()).ceil();
    (raw.max(0.0) as usize).min(horizon)
}

/// `α √(2 df log(1 + n/df) + 4 log n) + β √(n K)`.
pub fn elsa_confidence_radius(n: usize, df: usize, capacity: usize, alpha: f64, beta: f64) -> f64 {
    let n_f = n.max(1) as f64;
    let df_f = df.max(1) as f64;
    let inner = 2.0 * df_f * (1.0 + n_f / df_f).ln() + 4.0 * n_f.ln();
    alpha * inner.sqrt() + beta * (n_f * capacity as f64).sqrt()
}

/// `α √(2 d log(1 + t/d) + 2 log t)`; the `1/(2κ)` factor lives in `α`.
pub fn ucb_mnl_confidence_radius(t: usize, d: usize, alpha: f64) -> f64 {
    let t_f = t.max(1) as f64;
    let d_f = d.max(1) as f64;
    alpha * (2.0 * d_f * (1.0 + t_f / d_f).ln() + 2.0 * t_f.ln()).sqrt()
}

/// The pending `(q, S)` between a select and its observe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Pending {
    user: DVector<f64>,
    assortment: Assortment,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub(crate) struct Protocol {
    pending: Option<Pending>,
}

impl Protocol {
    pub(crate) fn begin(&mut self, user: &UserContext, assortment: &Assortment) -> Result<()> {
        if self.pending.is_some() {
            return Err(Error::Protocol(
                "select called again before observing the previous assortment".into(),
            ));
        }
        self.pending = Some(Pending {
            user: user.q.clone(),
            assortment: assortment.clone(),
        });
        Ok(())
    }

    pub(crate) fn finish(&mut self, user: &UserContext, assortment: &Assortment, chosen: Choice) -> Result<()> {
        let pending = self
            .pending
            .take()
            .ok_or_else(|| Error::Protocol("observe called without a preceding select".into()))?;
        if pending.user != user.q || &pending.assortment != assortment {
            self.pending = Some(pending);
            return Err(Error::Protocol(
                "observe does not match the last selected (user, assortment)".into(),
            ));
        }
        if let Choice::Item(i) = chosen {
            if !assortment.contains(i) {
                self.pending = Some(pending);
                return Err(Error::Protocol(format!("chosen item {i} was not offered")));
            }
        }
        Ok(())
    }
}

/// Any policy, as one serializable value.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "state", rename_all = "snake_case")]
pub enum AnyPolicy {
    Elsa(Box<ElsaUcb>),
    UcbMnl(Box<UcbMnl>),
    Uniform(UniformPolicy),
    Oracle(OraclePolicy),
}

/// Version tag written into policy snapshots.
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Snapshot {
    version: u32,
    policy: AnyPolicy,
}

impl AnyPolicy {
    /// Builds a fresh policy. `truth` is required for the oracle only.
    pub fn build(
        kind: PolicyKind,
        name: Option<String>,
        config: &PolicyConfig,
        catalog: &ItemCatalog,
        user_dim: usize,
        capacity: usize,
        horizon: usize,
        seed: u64,
        truth: Option<&GroundTruth>,
    ) -> Result<Self> {
        config.validate()?;
        if capacity == 0 || capacity > catalog.n_items() {
            return Err(Error::Config(format!(
                "capacity {capacity} must lie in 1..={}",
                catalog.n_items()
            )));
        }
        let name = name.unwrap_or_else(|| kind.default_name(config));
        Ok(match kind {
            PolicyKind::Elsa => AnyPolicy::Elsa(Box::new(ElsaUcb::new(
                name, catalog, user_dim, capacity, horizon, config.clone(), seed,
            )?)),
            PolicyKind::UcbMnlStacked | PolicyKind::UcbMnlVectorized => {
                let mode = if kind == PolicyKind::UcbMnlStacked {
                    FeatureMode::Stacked
                } else {
                    FeatureMode::Vectorized
                };
                AnyPolicy::UcbMnl(Box::new(UcbMnl::new(
                    name, mode, catalog, user_dim, capacity, horizon, config.clone(), seed,
                )?))
            }
            PolicyKind::Uniform => {
                AnyPolicy::Uniform(UniformPolicy::new(name, catalog.n_items(), capacity, seed))
            }
            PolicyKind::Oracle => {
                let truth = truth.ok_or_else(|| {
                    Error::Config("the oracle policy needs the ground truth".into())
                })?;
                AnyPolicy::Oracle(OraclePolicy::new(name, catalog.clone(), truth.clone(), capacity))
            }
        })
    }

    pub fn snapshot(&self) -> Result<String> {
        Ok(serde_json::to_string(&SnapshotRef {
            version: SNAPSHOT_VERSION,
            policy: self,
        })?)
    }

    pub fn restore(snapshot: &str) -> Result<Self> {
        let s: Snapshot = serde_json::from_str(snapshot)?;
        if s.version != SNAPSHOT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported snapshot version {}",
                s.version
            )));
        }
        Ok(s.policy)
    }

    fn inner(&mut self) -> &mut dyn Policy {
        match self {
            AnyPolicy::Elsa(p) => p.as_mut(),
            AnyPolicy::UcbMnl(p) => p.as_mut(),
            AnyPolicy::Uniform(p) => p,
            AnyPolicy::Oracle(p) => p,
        }
    }
}

#[derive(Serialize)]
struct SnapshotRef<'a> {
    version: u32,
    policy: &'a AnyPolicy,
}

impl Policy for AnyPolicy {
    fn name(&self) -> &str {
        match self {
            AnyPolicy::Elsa(p) => p.name(),
            AnyPolicy::UcbMnl(p) => p.name(),
            AnyPolicy::Uniform(p) => p.name(),
            AnyPolicy::Oracle(p) => p.name(),
        }
    }

    fn select(&mut self, user: &UserContext) -> Result<Assortment> {
        self.inner().select(user)
    }

    fn observe(&mut self, user: &UserContext, assortment: &Assortment, chosen: Choice) -> Result<()> {
        self.inner().observe(user, assortment, chosen)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exploration_length_examples() {
        assert_eq!(exploration_length(2000, 30, 20, 0.2), 165);
        assert_eq!(exploration_length(1, 30, 20, 0.2), 1);
        let mut last = 0;
        for t in 1..5000 {
            let t0 = exploration_length(t, 5, 4, 0.2);
            assert!(t0 >= last && t0 <= t);
            last = t0;
        }
    }

    #[test]
    fn elsa_radius_examples() {
        assert_eq!(elsa_confidence_radius(10, 4, 3, 0.0, 0.0), 0.0);
        let df = 57;
        let want = (2.0 * df as f64 * 2f64.ln() + 4.0 * (df as f64).ln()).sqrt();
        assert!((elsa_confidence_radius(df, df, 3, 1.0, 0.0) - want).abs() < 1e-12);
        let mut prev = 0.0;
        for n in 1..=10_000 {
            let a = elsa_confidence_radius(n, 141, 3, 5.0, 1.0);
            assert!(a >= prev);
            prev = a;
        }
    }

    #[test]
    fn rank_spec_json() {
        assert_eq!(serde_json::to_string(&RankSpec::Auto).unwrap(), "\"auto\"");
        assert_eq!(serde_json::from_str::<RankSpec>("3").unwrap(), RankSpec::Fixed(3));
        assert!(serde_json::from_str::<RankSpec>("0").is_err());
        assert!(serde_json::from_str::<RankSpec>("\"big\"").is_err());
    }

    #[test]
    fn config_validation() {
        assert!(PolicyConfig::default().validate().is_ok());
        let bad = PolicyConfig {
            ridge: 0.0,
            ..PolicyConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = PolicyConfig {
            alpha: -1.0,
            ..PolicyConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
