//! Distributions used by the variational losses: the circular complex
//! Laplace law, unit-scale Gamma with implicit reparameterization, the
//! Exponential prior, and the Gamma-vs-Exponential KL divergence.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::C64;

/// Circular complex Laplace law with density `exp(−|z−m|/b) / (2πb²)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplexLaplace {
    pub m: C64,
    pub b: f64,
}

/// A complex-Laplace draw together with its standardized noise, so that
/// `z = m + b·zeta` can be differentiated in `m` and `b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClDraw {
    pub z: C64,
    pub zeta: C64,
}

impl ComplexLaplace {
    pub fn new(m: C64, b: f64) -> Result<Self> {
        if !(b > 0.0) {
            return Err(Error::contract(format!("complex Laplace scale must be positive, got {b}")));
        }
        Ok(Self { m, b })
    }

    pub fn logpdf(&self, z: C64) -> f64 {
        -(2.0 * PI * self.b * self.b).ln() - (z - self.m).norm() / self.b
    }

    pub fn entropy(&self) -> f64 {
        cl_entropy(self.b)
    }

    /// `E|z − m|² = 6b²`.
    pub fn variance(&self) -> f64 {
        6.0 * self.b * self.b
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ClDraw {
        let zeta = standard_cl(rng);
        ClDraw {
            z: self.m + zeta * self.b,
            zeta,
        }
    }
}

pub fn cl_logpdf(z: C64, m: C64, b: f64) -> Result<f64> {
    Ok(ComplexLaplace::new(m, b)?.logpdf(z))
}

/// Draws from `CL(m, b)`. A scale of exactly zero returns `m`.
pub fn cl_sample<R: Rng + ?Sized>(m: C64, b: f64, rng: &mut R) -> ClDraw {
    let zeta = standard_cl(rng);
    ClDraw { z: m + zeta * b, zeta }
}

/// Standard `CL(0, 1)` draw: radius ~ Gamma(2, 1) (sum of two unit
/// exponentials), uniform angle.
pub fn standard_cl<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let e1: f64 = Exp1.sample(rng);
    let e2: f64 = Exp1.sample(rng);
    let theta = rng.random::<f64>() * 2.0 * PI;
    C64::from_polar(e1 + e2, theta)
}

pub fn cl_entropy(b: f64) -> f64 {
    (2.0 * PI * b * b).ln() + 2.0
}

/// Unit-scale Gamma law, `x^{k−1} e^{−x} / Γ(k)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaUnitScale {
    pub k: f64,
}

/// A Gamma draw with its implicit-reparameterization derivative.
/// `u = P(k, x)` is the CDF level of the draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaDraw {
    pub x: f64,
    pub dxdk: f64,
    pub u: f64,
}

impl GammaUnitScale {
    pub fn new(k: f64) -> Result<Self> {
        if !(k > 0.0) {
            return Err(Error::contract(format!("Gamma shape must be positive, got {k}")));
        }
        Ok(Self { k })
    }

    pub fn logpdf(&self, x: f64) -> f64 {
        (self.k - 1.0) * x.ln() - x - log_gamma(self.k)
    }

    pub fn mean(&self) -> f64 {
        self.k
    }

    /// MAP point `max(k − 1, 0)`.
    pub fn mode(&self) -> f64 {
        (self.k - 1.0).max(0.0)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        gamma_cdf(self.k, x)
    }

    pub fn sample_implicit<R: Rng + ?Sized>(&self, rng: &mut R) -> GammaDraw {
        let x = Gamma::new(self.k, 1.0)
            .expect("validated shape")
            .sample(rng)
            .max(f64::MIN_POSITIVE);
        implicit_draw(self.k, x)
    }
}

/// Exponential prior with rate `alpha` on `[0, ∞)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpPrior {
    pub alpha: f64,
}

impl ExpPrior {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::contract(format!("Exponential rate must be positive, got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn logpdf(&self, d: f64) -> f64 {
        if d < 0.0 {
            f64::NEG_INFINITY
        } else {
            self.alpha.ln() - self.alpha * d
        }
    }
}

/// Draws `x ~ Gamma(k, 1)` with a rejection sampler and returns the pathwise
/// derivative `dx/dk = −(∂F/∂k)/f` at that draw.
pub fn gamma_sample_implicit<R: Rng + ?Sized>(k: f64, rng: &mut R) -> Result<GammaDraw> {
    Ok(GammaUnitScale::new(k)?.sample_implicit(rng))
}

/// Builds the implicit-gradient record for a given draw `x` at shape `k`.
/// `∂F/∂k` is taken by central differences of the regularized lower
/// incomplete gamma with step `1e−5·max(1, k)`.
pub fn implicit_draw(k: f64, x: f64) -> GammaDraw {
    let h = 1e-5 * k.max(1.0);
    let dfdk = (gamma_cdf(k + h, x) - gamma_cdf((k - h).max(k * 1e-3), x)) / (k + h - (k - h).max(k * 1e-3));
    let pdf = ((k - 1.0) * x.ln() - x - log_gamma(k)).exp();
    let dxdk = if pdf > 0.0 { -dfdk / pdf } else { 0.0 };
    GammaDraw {
        x,
        dxdk,
        u: gamma_cdf(k, x),
    }
}

/// Regularized lower incomplete gamma `P(k, x)`.
pub fn gamma_cdf(k: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else {
        statrs::function::gamma::gamma_lr(k, x)
    }
}

/// Inverse of `P(k, ·)`: the `x` with `P(k, x) = u`. Safeguarded Newton on
/// a bracketing interval.
pub fn gamma_quantile(k: f64, u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return f64::INFINITY;
    }
    let mut lo = 0.0_f64;
    let mut hi = k.max(1.0);
    while gamma_cdf(k, hi) < u {
        lo = hi;
        hi *= 2.0;
    }
    // small-x series start: P(k,x) ≈ x^k / Γ(k+1)
    let mut x = (u.ln() + log_gamma(k + 1.0)) / k;
    x = x.exp();
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let f = gamma_cdf(k, x) - u;
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let pdf = ((k - 1.0) * x.ln() - x - log_gamma(k)).exp();
        let mut next = if pdf > 0.0 { x - f / pdf } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.max(1e-300) {
            return next;
        }
        x = next;
    }
    x
}

/// Which closed form of `KL(Gamma(k,1) ‖ Exp(α))` to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlMode {
    /// `(k−1)ψ(k) − logΓ(k) − k − log α + αk`.
    #[default]
    Analytic,
    /// `(1−k)ψ(1) − logΓ(1) + logΓ(k)`, independent of α.
    PaperLiteral,
}

pub fn kl_gamma_exp(k: f64, alpha: f64, mode: KlMode) -> f64 {
    match mode {
        KlMode::Analytic => (k - 1.0) * digamma(k) - log_gamma(k) - k - alpha.ln() + alpha * k,
        KlMode::PaperLiteral => (1.0 - k) * digamma(1.0) - log_gamma(1.0) + log_gamma(k),
    }
}

/// `∂/∂k` of [`kl_gamma_exp`].
pub fn kl_gamma_exp_dk(k: f64, alpha: f64, mode: KlMode) -> f64 {
    match mode {
        KlMode::Analytic => (k - 1.0) * trigamma(k) - 1.0 + alpha,
        KlMode::PaperLiteral => -digamma(1.0) + digamma(k),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpecialFn {
    Digamma,
    LogGamma,
}

pub fn special(kind: SpecialFn, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("{kind:?} is only defined here for x > 0, got {x}")));
    }
    Ok(match kind {
        SpecialFn::Digamma => digamma(x),
        SpecialFn::LogGamma => log_gamma(x),
    })
}

/// `log Γ(x)` for `x > 0`; exact zero at 1 and 2.
pub fn log_gamma(x: f64) -> f64 {
    if x == 1.0 || x == 2.0 {
        0.0
    } else {
        statrs::function::gamma::ln_gamma(x)
    }
}

pub fn digamma(x: f64) -> f64 {
    statrs::function::gamma::digamma(x)
}

/// `ψ'(x)` for `x > 0`: upward recurrence then the asymptotic series.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let r = 1.0 / x;
    let r2 = r * r;
    let series = r
        + 0.5 * r2
        + r * r2
            * (1.0 / 6.0
                - r2 * (1.0 / 30.0 - r2 * (1.0 / 42.0 - r2 * (1.0 / 30.0 - r2 * 5.0 / 66.0))));
    acc + series
}
