use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Policy, Protocol};
use crate::assortment::{static_mnl, OptimizationInstance};
use crate::choice::{Assortment, Choice, ItemCatalog, UserContext};
use crate::error::Result;
use crate::sim::GroundTruth;

/// Offers `K` distinct items uniformly at random.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UniformPolicy {
    name: String,
    n_items: usize,
    capacity: usize,
    rng: ChaCha8Rng,
    protocol: Protocol,
}

impl UniformPolicy {
    pub fn new(name: String, n_items: usize, capacity: usize, seed: u64) -> Self {
        Self {
            name,
            n_items,
            capacity,
            rng: ChaCha8Rng::seed_from_u64(seed),
            protocol: Protocol::default(),
        }
    }
}

/// `capacity` distinct items drawn uniformly, as a sorted assortment.
pub fn uniform_assortment<R: Rng + ?Sized>(rng: &mut R, n_items: usize, capacity: usize) -> Result<Assortment> {
    let items = sample(rng, n_items, capacity).into_vec();
    Assortment::new(items, n_items, capacity)
}

impl Policy for UniformPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn select(&mut self, user: &UserContext) -> Result<Assortment> {
        let s = uniform_assortment(&mut self.rng, self.n_items, self.capacity)?;
        self.protocol.begin(user, &s)?;
        Ok(s)
    }

    fn observe(&mut self, user: &UserContext, assortment: &Assortment, chosen: Choice) -> Result<()> {
        self.protocol.finish(user, assortment, chosen)
    }
}

/// Offers the revenue-optimal assortment under the true utilities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OraclePolicy {
    name: String,
    catalog: ItemCatalog,
    truth: GroundTruth,
    capacity: usize,
    protocol: Protocol,
}

impl OraclePolicy {
    pub fn new(name: String, catalog: ItemCatalog, truth: GroundTruth, capacity: usize) -> Self {
        Self {
            name,
            catalog,
            truth,
            capacity,
            protocol: Protocol::default(),
        }
    }
}

impl Policy for OraclePolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn select(&mut self, user: &UserContext) -> Result<Assortment> {
        let u = self.truth.utilities(self.catalog.features(), &user.q)?;
        let instance = OptimizationInstance::new(
            u,
            self.catalog.revenues().iter().copied().collect(),
            self.capacity,
        )?;
        let (s, _) = static_mnl(&instance);
        self.protocol.begin(user, &s)?;
        Ok(s)
    }

    fn observe(&mut self, user: &UserContext, assortment: &Assortment, chosen: Choice) -> Result<()> {
        self.protocol.finish(user, assortment, chosen)
    }
}
