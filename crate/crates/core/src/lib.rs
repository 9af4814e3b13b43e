//! Low-rank online assortment with dual contexts.
//!
//! Users and items both carry feature vectors, and the utility of item `i`
//! for user `t` is the bilinear form `p_iᵀ Φ q_t` with a low-rank `Φ`. Choices
//! follow a multinomial logit model with a no-purchase option. The crate
//! provides:
//!
//! - [`choice`]: MNL probabilities, sampling and expected revenue.
//! - [`likelihood`]: negative log-likelihoods, gradients and a first-order MLE solver.
//! - [`lowrank`]: factored gradient descent, subspace extraction, the
//!   rotate-truncate-vectorize map and GIC rank selection.
//! - [`assortment`]: the StaticMNL capacity-constrained optimizer and a
//!   brute-force oracle.
//! - [`policy`]: ELSA-UCB / ELSA-GIC, stacked and vectorized UCB-MNL,
//!   uniform-random and clairvoyant policies.
//! - [`sim`]: synthetic environments, exact regret accounting and seeded replication.
//! - [`experiment`]: JSON configs, CSV/JSON result emission and dataset replay.

pub mod assortment;
pub mod choice;
pub mod error;
pub mod experiment;
pub mod layout;
pub mod likelihood;
pub mod linalg;
pub mod lowrank;
pub mod policy;
pub mod sim;

pub use assortment::{brute_force_best, static_mnl, OptimizationInstance};
pub use choice::{
    bilinear_utility, choice_probabilities, expected_revenue, sample_choice, Assortment, Choice,
    ChoiceObservation, ItemCatalog, UserContext,
};
pub use error::{Error, Result};
pub use layout::ParamLayout;
pub use likelihood::{fit_mle, FitReport, ObservationSet, SolverConfig};
pub use lowrank::{extract_subspace, fgd_fit, rtv, select_rank_gic, FgdConfig, SubspaceEstimate};
pub use policy::{Policy, PolicyConfig, PolicyKind};
pub use sim::{Environment, GroundTruth, RegretTrace};
