//! Multinomial logit choice model.
//!
//! Probability vectors always place the no-purchase option at index 0 and the
//! offered items at indices `1..=|S|`, in the order of the assortment.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, ensure_finite, Error, Result};

/// Fixed item catalog: one feature row and one revenue per item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemCatalog {
    features: DMatrix<f64>,
    revenues: DVector<f64>,
}

impl ItemCatalog {
    /// `features` is `N × d2` with row `i` holding `p_iᵀ`.
    pub fn new(features: DMatrix<f64>, revenues: DVector<f64>) -> Result<Self> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "catalog needs at least one item and one feature".into(),
            ));
        }
        ensure_dim("revenues", features.nrows(), revenues.len())?;
        ensure_finite("item features", features.iter())?;
        ensure_finite("revenues", revenues.iter())?;
        if let Some(i) = revenues.iter().position(|&r| r < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "revenue of item {i} is negative"
            )));
        }
        Ok(Self { features, revenues })
    }

    /// Catalog where every item earns revenue 1.
    pub fn with_unit_revenues(features: DMatrix<f64>) -> Result<Self> {
        let n = features.nrows();
        Self::new(features, DVector::from_element(n, 1.0))
    }

    pub fn n_items(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn revenues(&self) -> &DVector<f64> {
        &self.revenues
    }

    pub fn item(&self, i: usize) -> DVector<f64> {
        self.features.row(i).transpose()
    }
}

/// Feature vector of an arriving user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserContext {
    pub q: DVector<f64>,
}

impl UserContext {
    pub fn new(q: DVector<f64>) -> Result<Self> {
        ensure_finite("user context", q.iter())?;
        Ok(Self { q })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }
}

impl From<DVector<f64>> for UserContext {
    fn from(q: DVector<f64>) -> Self {
        Self { q }
    }
}

/// A set of at most `capacity` distinct catalog indices, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assortment {
    items: Vec<usize>,
    capacity: usize,
}

impl Assortment {
    pub fn new(mut items: Vec<usize>, n_items: usize, capacity: usize) -> Result<Self> {
        items.sort_unstable();
        if items.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(
                "assortment contains a duplicate item".into(),
            ));
        }
        if let Some(&bad) = items.iter().find(|&&i| i >= n_items) {
            return Err(Error::InvalidArgument(format!(
                "item {bad} is outside the catalog of {n_items} items"
            )));
        }
        if items.len() > capacity {
            return Err(Error::InvalidArgument(format!(
                "assortment of size {} exceeds capacity {capacity}",
                items.len()
            )));
        }
        Ok(Self { items, capacity })
    }

    pub fn empty(capacity: usize) -> Self {
        Self {
            items: Vec::new(),
            capacity,
        }
    }

    pub fn items(&self) -> &[usize] {
        &self.items
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, item: usize) -> bool {
        self.items.binary_search(&item).is_ok()
    }

    /// Position of `item` within the assortment.
    pub fn position(&self, item: usize) -> Option<usize> {
        self.items.binary_search(&item).ok()
    }
}

/// Outcome of one interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Choice {
    NoPurchase,
    /// Catalog index of the purchased item.
    Item(usize),
}

impl Choice {
    /// Maps a probability-vector index (0 = no purchase) back to a choice.
    pub fn from_index(assortment: &Assortment, index: usize) -> Self {
        if index == 0 {
            Choice::NoPurchase
        } else {
            Choice::Item(assortment.items()[index - 1])
        }
    }

    /// Probability-vector index of this choice within `assortment`.
    pub fn index_in(&self, assortment: &Assortment) -> Option<usize> {
        match *self {
            Choice::NoPurchase => Some(0),
            Choice::Item(i) => assortment.position(i).map(|k| k + 1),
        }
    }
}

/// One logged interaction `(q_t, S_t, y_t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceObservation {
    pub user: UserContext,
    pub assortment: Assortment,
    pub chosen: Choice,
}

impl ChoiceObservation {
    pub fn new(user: UserContext, assortment: Assortment, chosen: Choice) -> Result<Self> {
        if let Choice::Item(i) = chosen {
            if !assortment.contains(i) {
                return Err(Error::InvalidArgument(format!(
                    "chosen item {i} was not offered"
                )));
            }
        }
        Ok(Self {
            user,
            assortment,
            chosen,
        })
    }
}

/// `pᵀ Φ q` for `Φ` of shape `d2 × d1`.
pub fn bilinear_utility(phi: &DMatrix<f64>, p: &DVector<f64>, q: &DVector<f64>) -> Result<f64> {
    ensure_dim("item vector p", phi.nrows(), p.len())?;
    ensure_dim("user vector q", phi.ncols(), q.len())?;
    ensure_finite("parameter matrix", phi.iter())?;
    ensure_finite("item vector p", p.iter())?;
    ensure_finite("user vector q", q.iter())?;
    Ok(p.dot(&(phi * q)))
}

/// MNL probabilities over `{no purchase} ∪ S`.
pub fn choice_probabilities(utilities: &[f64]) -> Result<Vec<f64>> {
    ensure_finite("utilities", utilities)?;
    Ok(probabilities_unchecked(utilities))
}

pub(crate) fn probabilities_unchecked(utilities: &[f64]) -> Vec<f64> {
    // Shift by max(0, max v) so the largest exponent is exp(0).
    let shift = utilities.iter().copied().fold(0.0_f64, f64::max);
    let mut out = Vec::with_capacity(utilities.len() + 1);
    out.push((-shift).exp());
    out.extend(utilities.iter().map(|v| (v - shift).exp()));
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

/// Draws an index with probability `probabilities[k]`.
pub fn sample_choice<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> usize {
    sample_choice_from_uniform(probabilities, rng.random::<f64>())
}

/// Inverse-CDF draw given `u ∈ [0, 1)`.
pub fn sample_choice_from_uniform(probabilities: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, &p) in probabilities.iter().enumerate() {
        if p > 0.0 {
            last_positive = k;
        }
        acc += p;
        if u < acc && p > 0.0 {
            return k;
        }
    }
    // Rounding left `acc` slightly below 1.
    last_positive
}

/// `Σ_{i∈S} r_i p(i | S)`.
pub fn expected_revenue(utilities: &[f64], revenues: &[f64]) -> Result<f64> {
    ensure_dim("revenues", utilities.len(), revenues.len())?;
    ensure_finite("utilities", utilities)?;
    ensure_finite("revenues", revenues)?;
    Ok(revenue_unchecked(utilities, revenues))
}

pub(crate) fn revenue_unchecked(utilities: &[f64], revenues: &[f64]) -> f64 {
    if utilities.is_empty() {
        return 0.0;
    }
    let probs = probabilities_unchecked(utilities);
    probs[1..].iter().zip(revenues).map(|(p, r)| p * r).sum()
}
