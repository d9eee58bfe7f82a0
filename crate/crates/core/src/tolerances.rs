//! Decision thresholds for classification and continuation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Thresholds used by the classifier. Each sits roughly an order of
/// magnitude above the noise floor of the quantity it tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Max `|Q - q|`, `|P - p|` for a fixed point.
    pub fixed_point: f64,
    /// Max `|tr J - 2|` for eigenvalue one.
    pub trace: f64,
    /// Max `||J - I||_inf` to call the Jacobian the identity.
    pub identity: f64,
    /// Max `|det J - 1|` accepted when extracting eigenspaces.
    pub symplectic: f64,
    /// Max `|P_eps|` after translation for a rank-1 point.
    pub rank2: f64,
    /// Relative Hessian degeneracy: `|det H| <= hessian_det * (1 + ||H||^2)`.
    pub hessian_det: f64,
    /// Min `|P_qq|` for a transcritical cross.
    pub p_qq: f64,
    /// Min `|3 Q_qq P_qp - Q_p P_qqq|` for a fork-like cross.
    pub fork: f64,
    /// Min `|Q_p|` in the rotated frame.
    pub min_q_p: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            fixed_point: 1e-9,
            trace: 1e-7,
            identity: 1e-7,
            symplectic: 1e-6,
            rank2: 1e-8,
            hessian_det: 1e-8,
            p_qq: 1e-7,
            fork: 1e-7,
            min_q_p: 1e-6,
        }
    }
}

impl Tolerances {
    pub const NAMES: [&'static str; 9] = [
        "fixed_point",
        "trace",
        "identity",
        "symplectic",
        "rank2",
        "hessian_det",
        "p_qq",
        "fork",
        "min_q_p",
    ];

    /// Override one threshold by name.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::InvalidInput(format!("tolerance {name} must be finite and >= 0")));
        }
        let slot = match name {
            "fixed_point" => &mut self.fixed_point,
            "trace" => &mut self.trace,
            "identity" => &mut self.identity,
            "symplectic" => &mut self.symplectic,
            "rank2" => &mut self.rank2,
            "hessian_det" => &mut self.hessian_det,
            "p_qq" => &mut self.p_qq,
            "fork" => &mut self.fork,
            "min_q_p" => &mut self.min_q_p,
            _ => return Err(Error::InvalidInput(format!("unknown tolerance '{name}'"))),
        };
        *slot = value;
        Ok(())
    }
}
