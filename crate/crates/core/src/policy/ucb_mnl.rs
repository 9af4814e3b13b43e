//! UCB-MNL on joint features built from `(p, q)` without any dimension reduction.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::engine::LinearUcb;
use super::features::{augment_items, augment_user, FeatureMode};
use super::simple::uniform_assortment;
use super::{exploration_length, ucb_mnl_confidence_radius, Policy, PolicyConfig, Protocol, RefitSchedule};
use crate::choice::{Assortment, Choice, ChoiceObservation, ItemCatalog, UserContext};
use crate::error::{ensure_dim, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UcbMnl {
    name: String,
    mode: FeatureMode,
    user_dim: usize,
    capacity: usize,
    exploration: usize,
    config: PolicyConfig,
    rng: ChaCha8Rng,
    engine: LinearUcb,
    step: usize,
    batch: Vec<ChoiceObservation>,
    protocol: Protocol,
}

pub(crate) fn refit_due(schedule: RefitSchedule, n: usize, last_fit: usize) -> bool {
    match schedule {
        RefitSchedule::EveryStep => n > last_fit,
        RefitSchedule::Doubling => n >= 2 * last_fit.max(1),
    }
}

impl UcbMnl {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: String,
        mode: FeatureMode,
        catalog: &ItemCatalog,
        user_dim: usize,
        capacity: usize,
        horizon: usize,
        config: PolicyConfig,
        seed: u64,
    ) -> Result<Self> {
        let item_dim = catalog.dim();
        let layout = mode.layout(item_dim, user_dim);
        let design = ItemCatalog::new(augment_items(catalog.features()), catalog.revenues().clone())?;
        let theta = DVector::zeros(layout.len());
        let engine = LinearUcb::new(design, layout, config.ridge, theta)?;
        Ok(Self {
            name,
            mode,
            user_dim,
            capacity,
            exploration: exploration_length(horizon, user_dim, item_dim, config.exploration_c),
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            engine,
            step: 0,
            batch: Vec::new(),
            protocol: Protocol::default(),
        })
    }

    pub fn mode(&self) -> FeatureMode {
        self.mode
    }

    pub fn exploration_length(&self) -> usize {
        self.exploration
    }

    pub fn engine(&self) -> &LinearUcb {
        &self.engine
    }

    fn flush(&mut self) -> Result<()> {
        for rec in self.batch.drain(..) {
            self.engine.push(rec);
        }
        if refit_due(self.config.refit_schedule, self.engine.n_records(), self.engine.last_fit()) {
            self.engine.refit(&self.config.solver)?;
        }
        Ok(())
    }
}

impl Policy for UcbMnl {
    fn name(&self) -> &str {
        &self.name
    }

    fn select(&mut self, user: &UserContext) -> Result<Assortment> {
        ensure_dim("user vector q", self.user_dim, user.dim())?;
        let t = self.step + 1;
        let s = if t <= self.exploration {
            uniform_assortment(&mut self.rng, self.engine.n_items(), self.capacity)?
        } else {
            let b = augment_user(&user.q);
            let radius = ucb_mnl_confidence_radius(t, self.engine.layout().len(), self.config.alpha);
            self.engine.select(&b, radius, self.config.utility_clamp, self.capacity)?
        };
        self.protocol.begin(user, &s)?;
        Ok(s)
    }

    fn observe(&mut self, user: &UserContext, assortment: &Assortment, chosen: Choice) -> Result<()> {
        self.protocol.finish(user, assortment, chosen)?;
        self.step += 1;
        let rec = ChoiceObservation {
            user: UserContext::from(augment_user(&user.q)),
            assortment: assortment.clone(),
            chosen,
        };
        if self.step <= self.exploration {
            self.engine.push(rec);
            if self.step == self.exploration {
                self.engine.refit(&self.config.solver)?;
            }
            return Ok(());
        }
        self.batch.push(rec);
        if self.batch.len() >= self.config.batch_size {
            self.flush()?;
        }
        Ok(())
    }
}
