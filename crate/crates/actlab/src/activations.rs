//! The six activation functions under study, with exact derivatives,
//! linear-regime coefficients, and numeric Maclaurin-coefficient extraction.
//!
//! The crate groups activations into two families:
//!
//! * **saturated** — sigmoid, scaled sigmoid (`4*sigmoid(x) - 2`), tanh,
//!   and penalized tanh (`tanh(x)` for positive input, `a*tanh(x)`
//!   otherwise), whose values approach finite limits in both tails;
//! * **non-saturated** — ReLU and leaky ReLU, unbounded on the right.
//!
//! Near the origin every one of them behaves like `alpha*x + beta`; those
//! two coefficients drive the variance recursions in [`crate::varprop`],
//! so they are exposed in closed form via [`Activation::linear_regime`].

use crate::error::{Error, Result};

/// Default slope parameter `a` for penalized tanh and leaky ReLU.
pub const DEFAULT_LEAK: f64 = 0.25;

/// Step used by the finite-difference stencils in
/// [`Activation::taylor_coefficients`]. Chosen so that the O(h^2)
/// truncation error of the third-derivative stencils stays below 1e-4
/// while staying far from cancellation noise.
const TAYLOR_H: f64 = 5e-3;

/// One of the six activation functions.
///
/// `PenalizedTanh` and `LeakyRelu` carry their slope parameter `a`,
/// constrained to `(0, 1]`; at `a = 1` they degenerate to plain tanh and
/// the identity respectively, which the tests exploit as exact references.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Sigmoid,
    ScaledSigmoid,
    Tanh,
    PenalizedTanh { leak: f64 },
    Relu,
    LeakyRelu { leak: f64 },
}

/// First-order behavior of an activation at the origin:
/// `f(x) ~ alpha*x + beta` for small `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearRegime {
    /// Right-hand slope at 0, `f'(0+)`.
    pub alpha: f64,
    /// Value at 0, `f(0)`.
    pub beta: f64,
}

/// Numerically stable logistic sigmoid; branches on the sign of `x` so the
/// exponential never overflows for |x| > 700.
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    /// Penalized tanh with the given negative-side slope.
    pub fn penalized_tanh(leak: f64) -> Result<Activation> {
        Self::check_leak(leak)?;
        Ok(Activation::PenalizedTanh { leak })
    }

    /// Leaky ReLU with the given negative-side slope.
    pub fn leaky_relu(leak: f64) -> Result<Activation> {
        Self::check_leak(leak)?;
        Ok(Activation::LeakyRelu { leak })
    }

    fn check_leak(leak: f64) -> Result<()> {
        if !(leak > 0.0 && leak <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "leak must lie in (0, 1], got {leak}"
            )));
        }
        Ok(())
    }

    /// Every kind at its default parameterization, in stable order. Used by
    /// the gradient-check command to sweep the whole family.
    pub fn all_default() -> [Activation; 6] {
        [
            Activation::Sigmoid,
            Activation::ScaledSigmoid,
            Activation::Tanh,
            Activation::PenalizedTanh { leak: DEFAULT_LEAK },
            Activation::Relu,
            Activation::LeakyRelu { leak: DEFAULT_LEAK },
        ]
    }

    /// Parse a stable lowercase name, attaching `leak` to the kinds that
    /// take one.
    pub fn from_name(name: &str, leak: f64) -> Result<Activation> {
        match name {
            "sigmoid" => Ok(Activation::Sigmoid),
            "scaled_sigmoid" => Ok(Activation::ScaledSigmoid),
            "tanh" => Ok(Activation::Tanh),
            "penalized_tanh" => Activation::penalized_tanh(leak),
            "relu" => Ok(Activation::Relu),
            "leaky_relu" => Activation::leaky_relu(leak),
            other => Err(Error::UnknownActivation(other.to_string())),
        }
    }

    /// Stable lowercase name used in config files and CSV headers.
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::ScaledSigmoid => "scaled_sigmoid",
            Activation::Tanh => "tanh",
            Activation::PenalizedTanh { .. } => "penalized_tanh",
            Activation::Relu => "relu",
            Activation::LeakyRelu { .. } => "leaky_relu",
        }
    }

    /// The slope parameter for the kinds that have one.
    pub fn leak(&self) -> Option<f64> {
        match self {
            Activation::PenalizedTanh { leak } | Activation::LeakyRelu { leak } => Some(*leak),
            _ => None,
        }
    }

    /// Label safe for CSV column headers: the name, plus the slope for the
    /// parameterized kinds (e.g. `penalized_tanh_a0.25`).
    pub fn column_label(&self) -> String {
        match self.leak() {
            Some(a) => format!("{}_a{}", self.name(), a),
            None => self.name().to_string(),
        }
    }

    /// Function value `f(x)`.
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Activation::Sigmoid => sigmoid(x),
            Activation::ScaledSigmoid => 4.0 * sigmoid(x) - 2.0,
            Activation::Tanh => x.tanh(),
            Activation::PenalizedTanh { leak } => {
                if x > 0.0 {
                    x.tanh()
                } else {
                    leak * x.tanh()
                }
            }
            Activation::Relu => {
                if x >= 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { leak } => {
                if x >= 0.0 {
                    x
                } else {
                    leak * x
                }
            }
        }
    }

    /// Exact derivative `f'(x)`.
    ///
    /// Convention at the kink: ReLU, leaky ReLU and penalized tanh return the
    /// right-hand derivative at `x = 0`. The forward tape uses the same
    /// convention, so backpropagation and this function always agree.
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::ScaledSigmoid => {
                let s = sigmoid(x);
                4.0 * s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::PenalizedTanh { leak } => {
                let t = x.tanh();
                let d = 1.0 - t * t;
                if x >= 0.0 {
                    d
                } else {
                    leak * d
                }
            }
            Activation::Relu => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { leak } => {
                if x >= 0.0 {
                    1.0
                } else {
                    leak
                }
            }
        }
    }

    /// Closed-form linear-regime coefficients `(alpha, beta) = (f'(0+), f(0))`.
    pub fn linear_regime(&self) -> LinearRegime {
        match self {
            Activation::Sigmoid => LinearRegime {
                alpha: 0.25,
                beta: 0.5,
            },
            // 4*sigmoid - 2 rescales the slope to 1 and recenters to 0;
            // tanh, both ReLUs, and penalized tanh (tanh'(0) = 1 on the
            // right branch) already sit at (1, 0).
            Activation::ScaledSigmoid
            | Activation::Tanh
            | Activation::PenalizedTanh { .. }
            | Activation::Relu
            | Activation::LeakyRelu { .. } => LinearRegime {
                alpha: 1.0,
                beta: 0.0,
            },
        }
    }

    /// Whether the function is smooth at the origin (two-sided stencils are
    /// valid there). The kinked kinds are only analytic on each side.
    fn smooth_at_zero(&self) -> bool {
        matches!(
            self,
            Activation::Sigmoid | Activation::ScaledSigmoid | Activation::Tanh
        )
    }

    /// Maclaurin coefficients `[c_0, ..., c_order]` with `c_k = f^(k)(0)/k!`,
    /// estimated by finite differences of successive order (step
    /// `h = 5e-3`; stencil orders are chosen so truncation error stays
    /// well below 1e-4 for the curvatures that arise here).
    ///
    /// Smooth kinds use central stencils. Kinked kinds use right-side
    /// (forward) stencils, so the result describes the `x >= 0` branch —
    /// consistent with the right-hand derivative convention.
    ///
    /// Supports `order <= 3`; beyond that the stencils would need more
    /// points than the advertised accuracy justifies.
    pub fn taylor_coefficients(&self, order: usize) -> Result<Vec<f64>> {
        if order > 3 {
            return Err(Error::UnsupportedOrder(order));
        }
        let h = TAYLOR_H;
        let f = |x: f64| self.apply(x);
        let mut coeffs = vec![f(0.0)];
        if self.smooth_at_zero() {
            if order >= 1 {
                coeffs.push((f(h) - f(-h)) / (2.0 * h));
            }
            if order >= 2 {
                coeffs.push((f(h) - 2.0 * f(0.0) + f(-h)) / (h * h) / 2.0);
            }
            if order >= 3 {
                coeffs.push(
                    (f(2.0 * h) - 2.0 * f(h) + 2.0 * f(-h) - f(-2.0 * h)) / (2.0 * h * h * h) / 6.0,
                );
            }
        } else {
            let (f0, f1, f2) = (f(0.0), f(h), f(2.0 * h));
            let (f3, f4, f5) = (f(3.0 * h), f(4.0 * h), f(5.0 * h));
            if order >= 1 {
                coeffs.push((-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h));
            }
            if order >= 2 {
                coeffs.push((2.0 * f0 - 5.0 * f1 + 4.0 * f2 - f3) / (h * h) / 2.0);
            }
            if order >= 3 {
                // Six-point one-sided stencil (order h^3): the five-point
                // variant's truncation error at this step size is ~1.2e-4
                // for tanh-like curvature, which is too coarse here.
                coeffs.push(
                    (-17.0 * f0 + 71.0 * f1 - 118.0 * f2 + 98.0 * f3 - 41.0 * f4 + 7.0 * f5)
                        / (4.0 * h * h * h)
                        / 6.0,
                );
            }
        }
        Ok(coeffs)
    }
}
