use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

/// How the time step is tied to the mesh width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum TauRule {
    /// `τ^{2q-1} = h^2`: temporal and spatial errors balanced.
    Matched,
    /// `τ = C h^2`.
    CConstant(f64),
    Explicit(f64),
}

impl TauRule {
    pub fn resolve(&self, stages: usize, h: f64) -> Result<f64> {
        let tau = match *self {
            TauRule::Matched => (h * h).powf(1.0 / (2 * stages - 1) as f64),
            TauRule::CConstant(c) => c * h * h,
            TauRule::Explicit(v) => v,
        };
        if tau > 0.0 && tau.is_finite() {
            Ok(tau)
        } else {
            Err(Error::Domain(format!("time step must be positive, got {tau}")))
        }
    }
}

impl fmt::Display for TauRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TauRule::Matched => write!(f, "matched"),
            TauRule::CConstant(c) => write!(f, "c{c}"),
            TauRule::Explicit(v) => write!(f, "explicit:{v}"),
        }
    }
}

impl FromStr for TauRule {
    type Err = Error;

    /// Accepts `matched`, `c<C>` (e.g. `c1`, `c10`, `c0.5`) and `explicit:<v>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Domain(format!("unrecognised tau rule '{s}'"));
        let positive = |v: f64| if v > 0.0 && v.is_finite() { Ok(v) } else { Err(bad()) };
        if s == "matched" {
            Ok(TauRule::Matched)
        } else if let Some(v) = s.strip_prefix("explicit:") {
            Ok(TauRule::Explicit(positive(v.parse().map_err(|_| bad())?)?))
        } else if let Some(c) = s.strip_prefix('c') {
            Ok(TauRule::CConstant(positive(c.parse().map_err(|_| bad())?)?))
        } else {
            Err(bad())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_resolve() {
        let h = 0.25;
        assert_eq!("matched".parse::<TauRule>().unwrap(), TauRule::Matched);
        let m = TauRule::Matched.resolve(3, h).unwrap();
        assert!((m.powi(5) - h * h).abs() < 1e-15);
        let c10: TauRule = "c10".parse().unwrap();
        assert_eq!(c10.resolve(2, h).unwrap(), 10.0 * h * h);
        let e: TauRule = "explicit:0.01".parse().unwrap();
        assert_eq!(e.resolve(2, h).unwrap(), 0.01);
        assert_eq!(e.to_string(), "explicit:0.01");
    }

    #[test]
    fn rejects_garbage() {
        for s in ["", "fast", "c", "c-1", "explicit:", "explicit:0", "explicit:nan"] {
            assert!(s.parse::<TauRule>().is_err(), "{s}");
        }
    }
}
