//! Grid specs of the form `name=lo:hi:count,name=lo:hi:count` with inclusive
//! endpoints.

use serde::{Deserialize, Serialize};

use crate::error::{CtError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(CtError::Parse(format!("bad axis range {lo}:{hi}")));
        }
        if count < 2 {
            return Err(CtError::Parse(format!("axis count must be at least 2, got {count}")));
        }
        if count > 1_000_000 {
            return Err(CtError::Parse(format!("axis count {count} is too large")));
        }
        Ok(Self { lo, hi, count })
    }

    pub fn values(&self) -> Vec<f64> {
        let step = (self.hi - self.lo) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                if i + 1 == self.count {
                    self.hi
                } else {
                    self.lo + step * i as f64
                }
            })
            .collect()
    }
}

/// A `(ρ₀, d₀)` rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rho0: Axis,
    pub d0: Axis,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            rho0: Axis { lo: 0.05, hi: 4.0, count: 41 },
            d0: Axis { lo: -6.0, hi: 2.0, count: 41 },
        }
    }
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.rho0.count * self.d0.count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Points in row-major order, `ρ₀` outer.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let ds = self.d0.values();
        self.rho0
            .values()
            .into_iter()
            .flat_map(|r| ds.iter().map(move |&d| (r, d)))
            .collect()
    }
}

fn parse_axis(text: &str) -> Result<Axis> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(CtError::Parse(format!("expected lo:hi:count, got {text:?}")));
    }
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| CtError::Parse(format!("bad number {s:?}")))
    };
    let count = parts[2]
        .trim()
        .parse::<usize>()
        .map_err(|_| CtError::Parse(format!("bad count {:?}", parts[2])))?;
    Axis::new(num(parts[0])?, num(parts[1])?, count)
}

impl std::str::FromStr for GridSpec {
    type Err = CtError;

    fn from_str(text: &str) -> Result<Self> {
        let (mut rho0, mut d0) = (None, None);
        for item in text.split(',') {
            let (name, axis) = item
                .split_once('=')
                .ok_or_else(|| CtError::Parse(format!("expected name=lo:hi:count, got {item:?}")))?;
            let slot = match name.trim() {
                "rho0" => &mut rho0,
                "d0" => &mut d0,
                other => return Err(CtError::Parse(format!("unknown axis {other:?}"))),
            };
            if slot.is_some() {
                return Err(CtError::Parse(format!("axis {} given twice", name.trim())));
            }
            *slot = Some(parse_axis(axis)?);
        }
        match (rho0, d0) {
            (Some(rho0), Some(d0)) => {
                if rho0.lo <= 0.0 {
                    return Err(CtError::Parse("rho0 axis must be positive".into()));
                }
                Ok(GridSpec { rho0, d0 })
            }
            _ => Err(CtError::Parse("grid needs both rho0 and d0 axes".into())),
        }
    }
}
