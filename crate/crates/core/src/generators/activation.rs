use serde::{Deserialize, Serialize};

use crate::diffgraph::{
    smooth_leaky, smooth_leaky_deriv, smooth_leaky_inv, GraphError, Unary, Var,
};
use crate::Tape;

/// Elementwise nonlinearity of a feedforward generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Activation {
    /// `max(x, slope·x)`.
    ExactLeaky {
        slope: f64,
    },
    /// Twice-differentiable leaky ReLU; see [`Unary::SmoothLeaky`].
    SmoothLeaky {
        slope: f64,
        sharpness: f64,
    },
    Identity,
}

impl Activation {
    pub fn leaky(slope: f64) -> Self {
        Activation::ExactLeaky { slope }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::ExactLeaky { slope } => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::SmoothLeaky { slope, sharpness } => smooth_leaky(x, slope, sharpness),
            Activation::Identity => x,
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::ExactLeaky { slope } => {
                if x >= 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::SmoothLeaky { slope, sharpness } => smooth_leaky_deriv(x, slope, sharpness),
            Activation::Identity => 1.0,
        }
    }

    pub fn inverse(self, y: f64) -> f64 {
        match self {
            Activation::ExactLeaky { slope } => {
                if y >= 0.0 {
                    y
                } else {
                    y / slope
                }
            }
            Activation::SmoothLeaky { slope, sharpness } => smooth_leaky_inv(y, slope, sharpness),
            Activation::Identity => y,
        }
    }

    /// `log (σ⁻¹)'(h)`.
    pub fn log_inverse_derivative(self, h: f64) -> f64 {
        match self {
            Activation::ExactLeaky { slope } => {
                if h >= 0.0 {
                    0.0
                } else {
                    -slope.ln()
                }
            }
            Activation::SmoothLeaky { .. } => -self.derivative(self.inverse(h)).ln(),
            Activation::Identity => 0.0,
        }
    }

    /// Smallest slope of `σ`; `1/L` for the Lipschitz constant `L` of `σ⁻¹`.
    pub fn min_slope(self) -> f64 {
        match self {
            Activation::ExactLeaky { slope } | Activation::SmoothLeaky { slope, .. } => {
                slope.min(1.0)
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn validate(self) -> crate::Result<()> {
        let ok = match self {
            Activation::ExactLeaky { slope } => slope > 0.0 && slope <= 1.0,
            Activation::SmoothLeaky { slope, sharpness } => {
                slope > 0.0 && slope < 1.0 && sharpness > 0.0
            }
            Activation::Identity => true,
        };
        if ok {
            Ok(())
        } else {
            Err(crate::Error::InvalidSpec(format!(
                "activation parameters out of range: {self:?}"
            )))
        }
    }

    pub fn on_tape(self, tape: &mut Tape, x: Var) -> Result<Var, GraphError> {
        match self {
            Activation::ExactLeaky { slope } => tape.unary(x, Unary::LeakyRelu(slope)),
            Activation::SmoothLeaky { slope, sharpness } => {
                tape.unary(x, Unary::SmoothLeaky { slope, sharpness })
            }
            Activation::Identity => Ok(x),
        }
    }

    pub fn inverse_on_tape(self, tape: &mut Tape, y: Var) -> Result<Var, GraphError> {
        match self {
            Activation::ExactLeaky { slope } => tape.unary(y, Unary::LeakyRelu(1.0 / slope)),
            Activation::SmoothLeaky { slope, sharpness } => {
                tape.unary(y, Unary::SmoothLeakyInv { slope, sharpness })
            }
            Activation::Identity => Ok(y),
        }
    }

    pub fn log_inverse_derivative_on_tape(
        self,
        tape: &mut Tape,
        h: Var,
    ) -> Result<Var, GraphError> {
        match self {
            Activation::ExactLeaky { slope } => tape.unary(h, Unary::LeakyLogInvDeriv(slope)),
            Activation::SmoothLeaky { slope, sharpness } => {
                let x = tape.unary(h, Unary::SmoothLeakyInv { slope, sharpness })?;
                let d = tape.smooth_leaky_deriv(x, slope, sharpness)?;
                let l = tape.unary(d, Unary::Log)?;
                tape.scale(l, -1.0)
            }
            Activation::Identity => tape.scale(h, 0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_leaky_values() {
        let a = Activation::leaky(0.5);
        assert_eq!(a.apply(-2.0), -1.0);
        assert_eq!(a.inverse(-1.0), -2.0);
        assert_eq!(a.log_inverse_derivative(-1.0), 2f64.ln());
        assert_eq!(a.log_inverse_derivative(3.0), 0.0);
    }

    #[test]
    fn smooth_log_inverse_derivative_matches_difference_quotient() {
        let a = Activation::SmoothLeaky {
            slope: 0.5,
            sharpness: 3.0,
        };
        for &h in &[-2.0, -0.1, 0.0, 0.4, 5.0] {
            let e = 1e-6;
            let fd = ((a.inverse(h + e) - a.inverse(h - e)) / (2.0 * e)).ln();
            assert!((a.log_inverse_derivative(h) - fd).abs() < 1e-8);
        }
    }
}
