//! Feature maps used by the policies.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::layout::ParamLayout;

/// How the baselines turn `(p, q)` into one joint feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// `(1, p, q)`: intercept and main effects, no interactions.
    Stacked,
    /// `vec((1, p)(1, q)ᵀ)`, column-major: every interaction.
    Vectorized,
}

impl FeatureMode {
    /// The parameter layout over the augmented `(d2 + 1) × (d1 + 1)` matrix
    /// whose entries give exactly [`build_joint_feature`].
    pub fn layout(&self, item_dim: usize, user_dim: usize) -> ParamLayout {
        match self {
            FeatureMode::Stacked => ParamLayout::main_effects(item_dim + 1, user_dim + 1),
            FeatureMode::Vectorized => ParamLayout::full(item_dim + 1, user_dim + 1),
        }
    }
}

pub fn build_joint_feature(mode: FeatureMode, p: &DVector<f64>, q: &DVector<f64>) -> DVector<f64> {
    mode.layout(p.len(), q.len())
        .feature(&augment_user(p), &augment_user(q))
}

/// Prepends a constant 1 to every row.
pub fn augment_items(items: &DMatrix<f64>) -> DMatrix<f64> {
    items.clone().insert_column(0, 1.0)
}

/// `(1, x)`.
pub fn augment_user(x: &DVector<f64>) -> DVector<f64> {
    x.clone().insert_row(0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stacked_feature_is_one_p_q() {
        let p = DVector::from_vec(vec![2.0, 3.0]);
        let q = DVector::from_vec(vec![5.0, 7.0, 11.0]);
        let x = build_joint_feature(FeatureMode::Stacked, &p, &q);
        assert_eq!(x.as_slice(), &[1.0, 2.0, 3.0, 5.0, 7.0, 11.0]);
    }

    #[test]
    fn vectorized_feature_is_column_major_outer_product() {
        let p = DVector::from_vec(vec![2.0, 3.0]);
        let q = DVector::from_vec(vec![5.0]);
        let x = build_joint_feature(FeatureMode::Vectorized, &p, &q);
        assert_eq!(x.as_slice(), &[1.0, 2.0, 3.0, 5.0, 10.0, 15.0]);
        assert_eq!(x.len(), (p.len() + 1) * (q.len() + 1));
    }

    #[test]
    fn augmented_rows_start_with_one() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let a = augment_items(&m);
        assert_eq!(a, DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 2.0, 1.0, 3.0, 4.0]));
    }
}
