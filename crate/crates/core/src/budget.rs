//! Privacy budgets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An (ε, δ) pair carried by every mechanism and by the accountant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    /// Requires ε ≥ 0 and δ ∈ [0, 1].
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(Error::invalid(format!("epsilon must be finite and nonnegative, got {epsilon}")));
        }
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::invalid(format!("delta must lie in [0, 1], got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }

    /// δ strictly inside (0, 1), required by mechanisms that take log(1/δ).
    pub fn require_delta_interior(&self) -> Result<()> {
        if self.delta <= 0.0 || self.delta >= 1.0 {
            return Err(Error::BudgetOutOfRange(format!(
                "delta must lie strictly in (0, 1), got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(PrivacyBudget::new(1.0, 1e-5).is_ok());
        assert!(PrivacyBudget::new(0.0, 0.0).is_ok());
        assert!(PrivacyBudget::new(-0.1, 0.5).is_err());
        assert!(PrivacyBudget::new(1.0, 1.5).is_err());
        assert!(PrivacyBudget::new(f64::NAN, 0.5).is_err());
    }
}
