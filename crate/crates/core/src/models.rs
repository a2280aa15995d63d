//! Growth and environment h-functions, theta-expressions, the invariant
//! density and the carrying-capacity coupling rule.
//!
//! Everything here is a pure function of its arguments. The population
//! h-function `h(x)` and the environment h-function `h*(y)` define the
//! product-form invariant density
//!
//! ```text
//! sigma(x, y) ∝ exp(-h(x)/theta) * exp(-h*(y)/theta)
//! ```
//!
//! and a theta-expression is any function of the state whose mean under that
//! density vanishes for every `theta > 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_x(x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain("x", x, "population density must be finite and > 0"))
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta >= 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::param("theta", theta, "must be finite and >= 0"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrowthKind {
    Logistic,
    Gompertz,
}

/// Population h-function with carrying capacity `k`.
///
/// Logistic: `h(x) = x/K - ln x`. Gompertz: `h(x) = ½ (ln(x/K))²`, so that
/// `x h'(x) = ln(x/K)` and the Kramers limit is `ẋ = -r x ln(x/K)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthModel {
    pub kind: GrowthKind,
    #[serde(rename = "K")]
    pub k: f64,
}

impl GrowthModel {
    pub fn logistic(k: f64) -> Self {
        Self {
            kind: GrowthKind::Logistic,
            k,
        }
    }

    pub fn gompertz(k: f64) -> Self {
        Self {
            kind: GrowthKind::Gompertz,
            k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k > 0.0 && self.k.is_finite() {
            Ok(())
        } else {
            Err(Error::param("K", self.k, "carrying capacity must be > 0"))
        }
    }

    /// Same family with a different carrying capacity.
    pub fn with_capacity(&self, k: f64) -> Self {
        Self { kind: self.kind, k }
    }

    pub fn h(&self, x: f64) -> Result<f64> {
        check_x(x)?;
        Ok(self.h_unchecked(x))
    }

    pub fn h_prime(&self, x: f64) -> Result<f64> {
        check_x(x)?;
        Ok(self.h_prime_unchecked(x))
    }

    /// `x h'(x)`, the drift factor that enters the environment equation.
    pub fn x_h_prime(&self, x: f64) -> Result<f64> {
        check_x(x)?;
        Ok(self.x_h_prime_unchecked(x))
    }

    #[inline]
    pub(crate) fn h_unchecked(&self, x: f64) -> f64 {
        match self.kind {
            GrowthKind::Logistic => x / self.k - x.ln(),
            GrowthKind::Gompertz => {
                let l = (x / self.k).ln();
                0.5 * l * l
            }
        }
    }

    #[inline]
    pub(crate) fn h_prime_unchecked(&self, x: f64) -> f64 {
        match self.kind {
            GrowthKind::Logistic => 1.0 / self.k - 1.0 / x,
            GrowthKind::Gompertz => (x / self.k).ln() / x,
        }
    }

    #[inline]
    pub(crate) fn x_h_prime_unchecked(&self, x: f64) -> f64 {
        match self.kind {
            GrowthKind::Logistic => x / self.k - 1.0,
            GrowthKind::Gompertz => (x / self.k).ln(),
        }
    }
}

/// Environment h*-function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentModel {
    /// `h*(y) = y²/2`.
    Gaussian,
    /// `h*'(y) = y (y + √m)(y - √m)`; stable wells at `±√m`.
    SymmetricBimodal { m: f64 },
    /// `h*'(y) = D y (y - a)(y - 1)`; stable wells at 0 and 1, barrier at `a`.
    AsymmetricBimodal {
        #[serde(rename = "D")]
        d: f64,
        a: f64,
    },
}

impl EnvironmentModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EnvironmentModel::Gaussian => Ok(()),
            EnvironmentModel::SymmetricBimodal { m } => {
                if m > 0.0 && m.is_finite() {
                    Ok(())
                } else {
                    Err(Error::param("m", m, "must be > 0"))
                }
            }
            EnvironmentModel::AsymmetricBimodal { d, a } => {
                if !(d > 0.0 && d.is_finite()) {
                    Err(Error::param("D", d, "must be > 0"))
                } else if !(a > 0.0 && a < 1.0) {
                    Err(Error::param("a", a, "must lie in (0, 1)"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// `h*(y)`, antiderivative of `h*'` with zero integration constant.
    #[inline]
    pub fn h(&self, y: f64) -> f64 {
        match *self {
            EnvironmentModel::Gaussian => 0.5 * y * y,
            EnvironmentModel::SymmetricBimodal { m } => {
                let y2 = y * y;
                0.25 * y2 * y2 - 0.5 * m * y2
            }
            EnvironmentModel::AsymmetricBimodal { d, a } => {
                let y2 = y * y;
                d * (0.25 * y2 * y2 - (1.0 + a) * y2 * y / 3.0 + 0.5 * a * y2)
            }
        }
    }

    #[inline]
    pub fn h_prime(&self, y: f64) -> f64 {
        match *self {
            EnvironmentModel::Gaussian => y,
            EnvironmentModel::SymmetricBimodal { m } => y * (y * y - m),
            EnvironmentModel::AsymmetricBimodal { d, a } => d * y * (y - a) * (y - 1.0),
        }
    }

    #[inline]
    pub fn h_second(&self, y: f64) -> f64 {
        match *self {
            EnvironmentModel::Gaussian => 1.0,
            EnvironmentModel::SymmetricBimodal { m } => 3.0 * y * y - m,
            EnvironmentModel::AsymmetricBimodal { d, a } => {
                d * (3.0 * y * y - 2.0 * (1.0 + a) * y + a)
            }
        }
    }
}

/// How the carrying capacity responds to the environment variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CouplingRule {
    /// K is the growth model's own constant.
    Fixed,
    /// `K[y] = base + increment * H(y - threshold)` with `H(0) = 1`.
    HeavisideShift {
        threshold: f64,
        base: f64,
        increment: f64,
    },
}

impl CouplingRule {
    /// `K[y] = 1 + H(y - threshold)`.
    pub fn heaviside(threshold: f64) -> Self {
        CouplingRule::HeavisideShift {
            threshold,
            base: 1.0,
            increment: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CouplingRule::Fixed => Ok(()),
            CouplingRule::HeavisideShift {
                threshold,
                base,
                increment,
            } => {
                if !threshold.is_finite() {
                    Err(Error::param("threshold", threshold, "must be finite"))
                } else if !(base > 0.0 && base.is_finite()) {
                    Err(Error::param("base", base, "must be > 0"))
                } else if !(increment.is_finite() && base + increment > 0.0) {
                    Err(Error::param("increment", increment, "base + increment must be > 0"))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn is_active(&self) -> bool {
        !matches!(self, CouplingRule::Fixed)
    }

    /// Carrying capacity in effect at environment value `y`. `fixed_k` is
    /// returned unchanged by [`CouplingRule::Fixed`].
    #[inline]
    pub fn effective_k(&self, fixed_k: f64, y: f64) -> f64 {
        match *self {
            CouplingRule::Fixed => fixed_k,
            CouplingRule::HeavisideShift {
                threshold,
                base,
                increment,
            } => {
                if y >= threshold {
                    base + increment
                } else {
                    base
                }
            }
        }
    }
}

/// Population theta-expression `x h'(x) - theta`.
pub fn theta_population(model: &GrowthModel, x: f64, theta: f64) -> Result<f64> {
    check_x(x)?;
    check_theta(theta)?;
    Ok(model.x_h_prime_unchecked(x) - theta)
}

/// Generalized environment theta-expression
/// `λθ h*'(y) - γ[(h*'(y))² - θ h*''(y)]`.
pub fn theta_env_general(
    env: &EnvironmentModel,
    y: f64,
    theta: f64,
    lambda: f64,
    gamma: f64,
) -> f64 {
    let g = env.h_prime(y);
    lambda * theta * g - gamma * (g * g - theta * env.h_second(y))
}

/// Chebyshev–Hermite polynomial `He_n(y; θ)` with weight `exp(-y²/2θ)`,
/// by the recurrence `He_{n+1} = y He_n - n θ He_{n-1}`.
pub fn hermite(n: u32, y: f64, theta: f64) -> f64 {
    match n {
        0 => 1.0,
        1 => y,
        _ => {
            let (mut prev, mut cur) = (1.0, y);
            for k in 1..n {
                let next = y * cur - f64::from(k) * theta * prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// Rodrigues-type population theta-expression `φ(x) h'(x) - φ'(x) θ`.
///
/// `phi` returns `(φ(x), φ'(x))`.
pub fn theta_rodrigues_population<F>(
    model: &GrowthModel,
    phi: F,
    x: f64,
    theta: f64,
) -> Result<f64>
where
    F: Fn(f64) -> (f64, f64),
{
    check_x(x)?;
    check_theta(theta)?;
    let (p, dp) = phi(x);
    Ok(p * model.h_prime_unchecked(x) - dp * theta)
}

/// Unnormalized log invariant density `-(h(x) + h*(y)) / θ`.
pub fn invariant_density_log(
    model: &GrowthModel,
    env: &EnvironmentModel,
    x: f64,
    y: f64,
    theta: f64,
) -> Result<f64> {
    check_x(x)?;
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::param("theta", theta, "density requires theta > 0"));
    }
    Ok(-(model.h_unchecked(x) + env.h(y)) / theta)
}

/// `I = h(x) - θ ln x + h*(y)`, conserved by the noise-free `γ = 0` flow.
pub fn integral_of_motion(
    model: &GrowthModel,
    env: &EnvironmentModel,
    x: f64,
    y: f64,
    theta: f64,
) -> Result<f64> {
    check_x(x)?;
    check_theta(theta)?;
    Ok(model.h_unchecked(x) - theta * x.ln() + env.h(y))
}
