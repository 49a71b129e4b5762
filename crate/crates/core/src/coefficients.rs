//! Named scalar functions for drift, diffusion and initial data.
//!
//! Functions come from a fixed registry rather than an expression parser so
//! that every declared Lipschitz constant can be checked.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarFn {
    Zero,
    Identity,
    /// `slope * u + intercept`
    Affine {
        slope: f64,
        intercept: f64,
    },
    /// `offset + amplitude * sin(frequency * u)`
    Sin {
        amplitude: f64,
        frequency: f64,
        offset: f64,
    },
    /// `offset + amplitude / (1 + exp(-u))`
    Sigmoid {
        amplitude: f64,
        offset: f64,
    },
    /// `u^2`; polynomial growth, usable as initial data only.
    Square,
}

impl ScalarFn {
    pub fn constant(c: f64) -> Self {
        ScalarFn::Affine { slope: 0.0, intercept: c }
    }

    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            ScalarFn::Zero => 0.0,
            ScalarFn::Identity => u,
            ScalarFn::Affine { slope, intercept } => slope * u + intercept,
            ScalarFn::Sin { amplitude, frequency, offset } => offset + amplitude * (frequency * u).sin(),
            ScalarFn::Sigmoid { amplitude, offset } => offset + amplitude / (1.0 + (-u).exp()),
            ScalarFn::Square => u * u,
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        match *self {
            ScalarFn::Zero => 0.0,
            ScalarFn::Identity => 1.0,
            ScalarFn::Affine { slope, .. } => slope,
            ScalarFn::Sin { amplitude, frequency, .. } => amplitude * frequency * (frequency * u).cos(),
            ScalarFn::Sigmoid { amplitude, .. } => {
                let e = (-u.abs()).exp();
                amplitude * e / ((1.0 + e) * (1.0 + e))
            }
            ScalarFn::Square => 2.0 * u,
        }
    }

    /// Global Lipschitz constant, `None` if the function is not Lipschitz.
    pub fn lipschitz(&self) -> Option<f64> {
        match *self {
            ScalarFn::Zero => Some(0.0),
            ScalarFn::Identity => Some(1.0),
            ScalarFn::Affine { slope, .. } => Some(slope.abs()),
            ScalarFn::Sin { amplitude, frequency, .. } => Some((amplitude * frequency).abs()),
            ScalarFn::Sigmoid { amplitude, .. } => Some(0.25 * amplitude.abs()),
            ScalarFn::Square => None,
        }
    }

    /// `sup |f|`, `None` when unbounded.
    pub fn bound(&self) -> Option<f64> {
        match *self {
            ScalarFn::Zero => Some(0.0),
            ScalarFn::Affine { slope, intercept } if slope == 0.0 => Some(intercept.abs()),
            ScalarFn::Sin { amplitude, offset, .. } => Some(offset.abs() + amplitude.abs()),
            ScalarFn::Sigmoid { amplitude, offset } => Some(offset.abs().max((offset + amplitude).abs())),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            ScalarFn::Zero => true,
            ScalarFn::Affine { slope, intercept } => slope == 0.0 && intercept == 0.0,
            ScalarFn::Sin { amplitude, offset, .. } => amplitude == 0.0 && offset == 0.0,
            ScalarFn::Sigmoid { amplitude, offset } => amplitude == 0.0 && offset == 0.0,
            _ => false,
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = match *self {
            ScalarFn::Affine { slope, intercept } => slope.is_finite() && intercept.is_finite(),
            ScalarFn::Sin { amplitude, frequency, offset } => {
                amplitude.is_finite() && frequency.is_finite() && offset.is_finite()
            }
            ScalarFn::Sigmoid { amplitude, offset } => amplitude.is_finite() && offset.is_finite(),
            _ => true,
        };
        if finite {
            Ok(())
        } else {
            Err(invalid(format!("non-finite parameter in {self:?}")))
        }
    }
}

/// Drift `b(u)`, diffusion `sigma(u)`, initial data `u0` and its declared
/// Hoelder exponent `rho`. In 2D, `u0` is applied to the first coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub drift: ScalarFn,
    pub diffusion: ScalarFn,
    pub initial: ScalarFn,
    pub rho: f64,
}

impl Coefficients {
    pub fn new(drift: ScalarFn, diffusion: ScalarFn, initial: ScalarFn, rho: f64) -> Result<Self> {
        let c = Self { drift, diffusion, initial, rho };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.drift.validate()?;
        self.diffusion.validate()?;
        self.initial.validate()?;
        if self.drift.lipschitz().is_none() {
            return Err(invalid(format!("drift {:?} is not globally Lipschitz", self.drift)));
        }
        if self.diffusion.lipschitz().is_none() {
            return Err(invalid(format!("diffusion {:?} is not globally Lipschitz", self.diffusion)));
        }
        if !(self.rho > 0.0) {
            return Err(invalid(format!("rho must be positive, got {}", self.rho)));
        }
        Ok(())
    }

    pub fn drift_lipschitz(&self) -> f64 {
        self.drift.lipschitz().unwrap_or(f64::INFINITY)
    }

    pub fn diffusion_lipschitz(&self) -> f64 {
        self.diffusion.lipschitz().unwrap_or(f64::INFINITY)
    }

    pub fn u0(&self, x: &[f64]) -> f64 {
        self.initial.eval(x[0])
    }
}
