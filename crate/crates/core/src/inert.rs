//! Inert-input screening from normalized inverse range parameters
//! `P_l = p C_l beta_l / sum_i C_i beta_i`.

use serde::{Deserialize, Serialize};

use crate::fitting::GaSPModel;
use crate::priors::PriorChoice;

pub const DEFAULT_INERT_THRESHOLD: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InertReport {
    /// Normalized inverse range parameters; they average to one.
    pub normalized: Vec<f64>,
    pub scale: Vec<f64>,
    pub beta: Vec<f64>,
    /// Zero-based dimensions with `P_l < threshold`.
    pub flagged: Vec<usize>,
    pub threshold: f64,
    /// Set when the model was not fitted under the jointly robust prior.
    pub warning: Option<String>,
}

impl InertReport {
    /// Flagged dimensions numbered from one.
    pub fn flagged_one_based(&self) -> Vec<usize> {
        self.flagged.iter().map(|l| l + 1).collect()
    }
}

/// `p C_l beta_l / sum_i C_i beta_i`.
pub fn normalized_inverse_ranges(scale: &[f64], beta: &[f64]) -> Vec<f64> {
    let p = beta.len() as f64;
    let w: Vec<f64> = scale.iter().zip(beta).map(|(c, b)| c * b).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|v| p * v / total).collect()
}

/// Screens the inputs of a fitted model; no refitting is done.
pub fn find_inert_inputs(model: &GaSPModel, threshold: f64) -> InertReport {
    let scale = model.jr_params().c.clone();
    let beta = model.beta_hat().as_slice().to_vec();
    let normalized = normalized_inverse_ranges(&scale, &beta);
    let flagged = (0..normalized.len()).filter(|&l| normalized[l] < threshold).collect();
    let warning = (model.options().prior != PriorChoice::Jr).then(|| {
        let msg = format!(
            "model was fitted with the {} prior; the shrinkage reading of P_l holds for the jointly robust prior",
            model.options().prior.cli_name()
        );
        log::warn!("{msg}");
        msg
    });
    InertReport {
        normalized,
        scale,
        beta,
        flagged,
        threshold,
        warning,
    }
}
