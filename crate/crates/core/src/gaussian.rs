//! Standard-form two-mode Gaussian states.
//!
//! Quadrature variances are in shot-noise units (vacuum = 1). A state is kept
//! as the triple `(a, b, c)` of its standard form
//!
//! ```text
//!     | a·I    c·Z |
//! M = |            |,   Z = diag(1, -1)
//!     | c·Z    b·I |
//! ```
//!
//! and all spectral quantities are evaluated in closed form.

use crate::error::{Error, Result};

/// Below this the bosonic entropy function is taken as its limit `G(0) = 0`.
pub const ENTROPY_FLOOR: f64 = 1e-12;

/// Baseline slack on `ν ≥ 1`, widened with the matrix scale by [`boundary_slack`].
pub const BOUNDARY_SLACK: f64 = 1e-9;

/// Standard-form two-mode covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoModeCM {
    /// Variance of mode A.
    pub a: f64,
    /// Variance of mode B.
    pub b: f64,
    /// Correlation magnitude.
    pub c: f64,
}

/// Ordered symplectic eigenvalues, `nu1 >= nu2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymplecticSpectrum {
    pub nu1: f64,
    pub nu2: f64,
}

/// Two-mode squeezing parameter `r`; the per-mode variance is `v = cosh(2r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Squeezing {
    r: f64,
}

impl Squeezing {
    pub fn new(r: f64) -> Result<Self> {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::Domain(format!("squeezing r must be >= 0, got {r}")));
        }
        Ok(Self { r })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn variance(&self) -> f64 {
        (2.0 * self.r).cosh()
    }

    /// `sqrt(v² - 1)`, evaluated as `sinh(2r)` to avoid cancellation near `r = 0`.
    pub fn correlation(&self) -> f64 {
        (2.0 * self.r).sinh()
    }
}

// a*b - c*d with a single rounding (Kahan).
fn diff_of_products(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let w = c * d;
    let err = (-c).mul_add(d, w);
    let f = a.mul_add(b, -w);
    f + err
}

/// Numerical slack on `ν ≥ 1` for a matrix of this scale.
///
/// The absolute error of `ν²` computed from stored floats grows like
/// `ε·(a² + b²)`, which dominates the fixed floor for strongly squeezed states.
pub fn boundary_slack(m: &TwoModeCM) -> f64 {
    BOUNDARY_SLACK + 16.0 * f64::EPSILON * (m.a * m.a + m.b * m.b)
}

impl TwoModeCM {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    /// Two-mode squeezed vacuum: `(v, v, sqrt(v² - 1))`.
    pub fn tmsv(s: Squeezing) -> Self {
        let v = s.variance();
        Self::new(v, v, s.correlation())
    }

    /// Mode B sent through a pure-loss channel of transmittance `tau`, with
    /// excess noise `chi` added at the receiver.
    pub fn lossy(s: Squeezing, tau: f64, chi: f64) -> Result<Self> {
        check_transmittance(tau)?;
        check_noise(chi)?;
        let v = s.variance();
        Ok(Self::new(
            v,
            1.0 + tau * (v - 1.0) + chi,
            tau.sqrt() * s.correlation(),
        ))
    }

    /// Both modes sent through independent pure-loss channels (`tau_a` to A,
    /// `tau_b` to B); excess noise only at B.
    pub fn two_sided_lossy(s: Squeezing, tau_a: f64, tau_b: f64, chi: f64) -> Result<Self> {
        check_transmittance(tau_a)?;
        check_transmittance(tau_b)?;
        check_noise(chi)?;
        let v = s.variance();
        Ok(Self::new(
            1.0 + tau_a * (v - 1.0),
            1.0 + tau_b * (v - 1.0) + chi,
            (tau_a * tau_b).sqrt() * s.correlation(),
        ))
    }

    /// Symplectic spectrum from `Δ = a² + b² - 2c²` and `det M = (ab - c²)²`.
    ///
    /// The discriminant `Δ² - 4 det M` factors as `(a-b)²((a+b)² - 4c²)`,
    /// which is evaluated directly so it is non-negative whenever
    /// `2c <= a + b`. The smaller eigenvalue comes from `ν₁ν₂ = |ab - c²|`.
    pub fn symplectic_eigenvalues(&self) -> Result<SymplecticSpectrum> {
        let TwoModeCM { a, b, c } = *self;
        let sum = a + b;
        let spread = (sum - 2.0 * c) * (sum + 2.0 * c);
        let scale = sum * sum;
        let spread = if spread < 0.0 {
            if spread < -1e-12 * scale.max(1.0) {
                return Err(Error::Unphysical(format!(
                    "negative symplectic discriminant for (a={a}, b={b}, c={c})"
                )));
            }
            0.0
        } else {
            spread
        };
        let delta = diff_of_products(a, a, c, c) + diff_of_products(b, b, c, c);
        let root = (a - b).abs() * spread.sqrt();
        let nu1_sq = 0.5 * (delta + root);
        let sym_det = diff_of_products(a, b, c, c).abs();
        if !(nu1_sq > 0.0) {
            return Err(Error::Unphysical(format!(
                "degenerate covariance matrix (a={a}, b={b}, c={c})"
            )));
        }
        let nu1 = nu1_sq.sqrt();
        let nu2 = sym_det / nu1;
        Ok(SymplecticSpectrum { nu1, nu2 })
    }

    /// `M + iΩ ≥ 0`, checked as `ν₂ ≥ 1` and `c² ≤ ab` up to tolerance.
    pub fn is_physical(&self) -> bool {
        if !(self.a.is_finite() && self.b.is_finite() && self.c.is_finite()) {
            return false;
        }
        let slack = boundary_slack(self);
        if self.c * self.c > self.a * self.b + slack {
            return false;
        }
        match self.symplectic_eigenvalues() {
            Ok(spec) => spec.nu2 >= 1.0 - slack,
            Err(_) => false,
        }
    }

    /// von Neumann entropy `S(AB) = G((ν₁-1)/2) + G((ν₂-1)/2)` in bits.
    pub fn entropy(&self) -> Result<f64> {
        let spec = self.symplectic_eigenvalues()?;
        let slack = boundary_slack(self);
        Ok(entropy_of_eigenvalue(spec.nu1, slack)? + entropy_of_eigenvalue(spec.nu2, slack)?)
    }
}

fn check_transmittance(tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Domain(format!(
            "transmittance must be in [0,1], got {tau}"
        )));
    }
    Ok(())
}

fn check_noise(chi: f64) -> Result<()> {
    if !(chi >= 0.0) || !chi.is_finite() {
        return Err(Error::Domain(format!(
            "excess noise must be >= 0, got {chi}"
        )));
    }
    Ok(())
}

/// Bosonic entropy function `G(x) = (x+1)log₂(x+1) - x log₂x`.
pub fn entropy_g(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("G(x) needs x >= 0, got {x}")));
    }
    if x < ENTROPY_FLOOR {
        return Ok(0.0);
    }
    Ok((x + 1.0) * (x + 1.0).log2() - x * x.log2())
}

/// `G((ν-1)/2)`, with `ν` in `[1 - slack, 1)` snapped to 1.
pub fn entropy_of_eigenvalue(nu: f64, slack: f64) -> Result<f64> {
    if nu < 1.0 - slack || nu.is_nan() {
        return Err(Error::Unphysical(format!("symplectic eigenvalue {nu} < 1")));
    }
    entropy_g(((nu - 1.0) * 0.5).max(0.0))
}
