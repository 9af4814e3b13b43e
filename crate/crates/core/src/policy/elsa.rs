//! Explore, estimate a low-rank subspace, then run optimistic MNL in the
//! reduced coordinates.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::engine::LinearUcb;
use super::features::{augment_items, augment_user};
use super::simple::uniform_assortment;
use super::ucb_mnl::refit_due;
use super::{elsa_confidence_radius, exploration_length, Policy, PolicyConfig, Protocol, RankSpec};
use crate::choice::{Assortment, Choice, ChoiceObservation, ItemCatalog, UserContext};
use crate::error::{ensure_dim, Error, Result};
use crate::likelihood::ObservationSet;
use crate::lowrank::{default_rank_grid, extract_subspace, select_rank_gic, GicScore, SubspaceEstimate};

/// State after the exploration phase.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElsaStage {
    pub subspace: SubspaceEstimate,
    /// GIC scores of every candidate rank.
    pub scores: Vec<GicScore>,
    pub engine: LinearUcb,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElsaUcb {
    name: String,
    /// Catalog as the model sees it: intercept-augmented when configured.
    catalog: ItemCatalog,
    user_dim: usize,
    capacity: usize,
    exploration: usize,
    config: PolicyConfig,
    rng: ChaCha8Rng,
    step: usize,
    explored: Vec<ChoiceObservation>,
    stage: Option<ElsaStage>,
    batch: Vec<ChoiceObservation>,
    protocol: Protocol,
}

impl ElsaUcb {
    pub fn new(
        name: String,
        catalog: &ItemCatalog,
        user_dim: usize,
        capacity: usize,
        horizon: usize,
        config: PolicyConfig,
        seed: u64,
    ) -> Result<Self> {
        let model_catalog = if config.intercept {
            ItemCatalog::new(augment_items(catalog.features()), catalog.revenues().clone())?
        } else {
            catalog.clone()
        };
        let max_rank = model_catalog.dim().min(user_dim + config.intercept as usize);
        let too_big = |r: usize| r == 0 || r > max_rank;
        if let RankSpec::Fixed(r) = config.rank {
            if too_big(r) {
                return Err(Error::Config(format!("rank {r} outside 1..={max_rank}")));
            }
        }
        if let Some(grid) = &config.rank_grid {
            if let Some(&r) = grid.iter().find(|&&r| too_big(r)) {
                return Err(Error::Config(format!("grid rank {r} outside 1..={max_rank}")));
            }
        }
        Ok(Self {
            name,
            exploration: exploration_length(horizon, user_dim, catalog.dim(), config.exploration_c),
            catalog: model_catalog,
            user_dim,
            capacity,
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            step: 0,
            explored: Vec::new(),
            stage: None,
            batch: Vec::new(),
            protocol: Protocol::default(),
        })
    }

    pub fn exploration_length(&self) -> usize {
        self.exploration
    }

    /// `None` until exploration has finished.
    pub fn stage(&self) -> Option<&ElsaStage> {
        self.stage.as_ref()
    }

    pub fn selected_rank(&self) -> Option<usize> {
        self.stage.as_ref().map(|s| s.subspace.rank)
    }

    fn model_user(&self, q: &DVector<f64>) -> DVector<f64> {
        if self.config.intercept {
            augment_user(q)
        } else {
            q.clone()
        }
    }

    /// Clamped optimistic utilities for `user` once exploration is over.
    pub fn optimistic_utilities(&self, user: &UserContext) -> Option<Vec<f64>> {
        let stage = self.stage.as_ref()?;
        let b = stage.subspace.rotate_user(&self.model_user(&user.q));
        Some(stage.engine.optimistic_utilities(&b, self.radius(stage), self.config.utility_clamp))
    }

    fn radius(&self, stage: &ElsaStage) -> f64 {
        elsa_confidence_radius(
            stage.engine.n_records(),
            stage.engine.layout().len(),
            self.capacity,
            self.config.alpha,
            self.config.beta,
        )
    }

    fn rank_grid(&self) -> Vec<usize> {
        match (self.config.rank, &self.config.rank_grid) {
            (RankSpec::Fixed(r), _) => vec![r],
            (RankSpec::Auto, Some(grid)) => grid.clone(),
            (RankSpec::Auto, None) => default_rank_grid(self.catalog.dim(), self.user_dim + self.config.intercept as usize),
        }
    }

    /// Subspace estimation on the exploration data and the switch to the
    /// reduced optimistic stage.
    fn finish_exploration(&mut self) -> Result<()> {
        let data = ObservationSet::new_unchecked(&self.catalog, &self.explored);
        let selection = select_rank_gic(&data, &self.rank_grid(), &self.config.fgd, &self.config.solver)?;
        let subspace = extract_subspace(&selection.phi_hat, selection.rank)?;
        let rotated = ItemCatalog::new(
            subspace.rotate_items(self.catalog.features()),
            self.catalog.revenues().clone(),
        )?;
        let mut engine = LinearUcb::new(rotated, subspace.layout(), self.config.ridge, subspace.initial_theta())?;
        for rec in self.explored.drain(..) {
            engine.push(ChoiceObservation {
                user: UserContext::from(subspace.rotate_user(&rec.user.q)),
                ..rec
            });
        }
        engine.refit(&self.config.solver)?;
        self.stage = Some(ElsaStage {
            subspace,
            scores: selection.scores,
            engine,
        });
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        let stage = self.stage.as_mut().expect("flush runs after exploration");
        for rec in self.batch.drain(..) {
            stage.engine.push(rec);
        }
        if refit_due(self.config.refit_schedule, stage.engine.n_records(), stage.engine.last_fit()) {
            stage.engine.refit(&self.config.solver)?;
        }
        Ok(())
    }
}

impl Policy for ElsaUcb {
    fn name(&self) -> &str {
        &self.name
    }

    fn select(&mut self, user: &UserContext) -> Result<Assortment> {
        ensure_dim("user vector q", self.user_dim, user.dim())?;
        let s = match &self.stage {
            None => uniform_assortment(&mut self.rng, self.catalog.n_items(), self.capacity)?,
            Some(stage) => {
                let b = stage.subspace.rotate_user(&self.model_user(&user.q));
                stage
                    .engine
                    .select(&b, self.radius(stage), self.config.utility_clamp, self.capacity)?
            }
        };
        self.protocol.begin(user, &s)?;
        Ok(s)
    }

    fn observe(&mut self, user: &UserContext, assortment: &Assortment, chosen: Choice) -> Result<()> {
        self.protocol.finish(user, assortment, chosen)?;
        self.step += 1;
        let q = self.model_user(&user.q);
        match &self.stage {
            None => {
                self.explored.push(ChoiceObservation {
                    user: UserContext::from(q),
                    assortment: assortment.clone(),
                    chosen,
                });
                if self.step >= self.exploration {
                    self.finish_exploration()?;
                }
            }
            Some(stage) => {
                let b = stage.subspace.rotate_user(&q);
                self.batch.push(ChoiceObservation {
                    user: UserContext::from(b),
                    assortment: assortment.clone(),
                    chosen,
                });
                if self.batch.len() >= self.config.batch_size {
                    self.flush()?;
                }
            }
        }
        Ok(())
    }
}
