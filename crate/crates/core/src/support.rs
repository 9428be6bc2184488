use serde::{Deserialize, Serialize};

/// Where a model coordinate lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    Real,
    Positive,
    Unit,
}

impl Support {
    /// Membership of the open support.
    pub fn contains(&self, x: f64) -> bool {
        match self {
            Support::Real => x.is_finite(),
            Support::Positive => x > 0.0 && x.is_finite(),
            Support::Unit => x > 0.0 && x < 1.0,
        }
    }
}
