use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stand-in derivative for the Heaviside spike function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SurrogateKind {
    /// Box of height `1/width` centred on the threshold.
    Rectangular { width: f64 },
    /// Derivative of `atan(pi/2 * slope * x) / pi + 1/2`, i.e.
    /// `slope / (2 * (1 + (pi/2 * slope * x)^2))`. This is the arc-tangent
    /// surrogate of Fang et al. (2021), "Incorporating learnable membrane time
    /// constant", as shipped in SpikingJelly with `slope = 2` by default.
    ArcTangent { slope: f64 },
    /// Passes the upstream gradient unchanged.
    StraightThrough,
}

impl Default for SurrogateKind {
    fn default() -> Self {
        SurrogateKind::Rectangular { width: 1.0 }
    }
}

impl SurrogateKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SurrogateKind::Rectangular { width } if !(width > 0.0) => Err(Error::InvalidParameter(
                format!("rectangular surrogate width must be > 0, got {width}"),
            )),
            SurrogateKind::ArcTangent { slope } if !(slope > 0.0) => Err(Error::InvalidParameter(
                format!("arc-tangent surrogate slope must be > 0, got {slope}"),
            )),
            _ => Ok(()),
        }
    }

    /// Surrogate derivative at `u = h - v_th`.
    pub fn grad(&self, u: f64) -> f64 {
        match *self {
            SurrogateKind::Rectangular { width } => {
                if u.abs() < width / 2.0 {
                    1.0 / width
                } else {
                    0.0
                }
            }
            SurrogateKind::ArcTangent { slope } => {
                let z = PI / 2.0 * slope * u;
                slope / (2.0 * (1.0 + z * z))
            }
            SurrogateKind::StraightThrough => 1.0,
        }
    }
}

/// Heaviside with `heaviside(0) = 1`.
#[inline]
pub fn heaviside(u: f64) -> f64 {
    if u >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `Clip[Round(h), 0, n_max]` with ties rounded away from zero.
#[inline]
pub fn clip_round_value(h: f64, n_max: u32) -> f64 {
    h.round().clamp(0.0, f64::from(n_max))
}

/// Straight-through derivative of [`clip_round_value`]: one inside the clip
/// range, zero outside.
#[inline]
pub fn clip_round_grad(h: f64, n_max: u32) -> f64 {
    if (0.0..=f64::from(n_max)).contains(&h) {
        1.0
    } else {
        0.0
    }
}
