//! Beam-wander fading: the log-negative Weibull transmittance model.
//!
//! A beam of spot radius `W` wanders around an aperture of radius `β` with
//! standard deviation `σ_b`. The transmittance `η` is supported on `[0, η₀]`
//! with density
//!
//! ```text
//! p(η) = 2L² / (σ_b² λ η) · (2 ln(η₀/η))^{2/λ - 1} · exp(-L²/(2σ_b²) · (2 ln(η₀/η))^{2/λ})
//! ```
//!
//! where the shape `λ`, scale `L` and maximum `η₀` follow from `h = (β/W)²`.
//!
//! Every integral over `η` is carried out in the coordinate
//! `s = L²/(2σ_b²) · (2 ln(η₀/η))^{2/λ}`, under which `η` is a decreasing map of
//! a unit exponential variable: `p(η) dη = e^{-s} ds`. This removes the endpoint
//! singularity at `η₀` and gives the exact sampler.

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::quadrature::{self, decade_breakpoints, Tolerance};
use crate::special::{i0e, i1e};

/// Upper cut-off of the exponential coordinate; `e^{-60}` is below any tolerance used here.
pub const S_MAX: f64 = 60.0;

const DECADES: u32 = 16;
const LAGUERRE_AGREEMENT: f64 = 1e-12;

/// Shape, scale and maximum transmittance derived from the aperture geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WanderParams {
    pub lambda: f64,
    pub l_scale: f64,
    pub eta0: f64,
}

/// Evaluate `λ`, `L`, `η₀` for aperture radius `beta` and spot radius `w`.
pub fn derive_params(beta: f64, w: f64) -> Result<WanderParams> {
    if !(beta > 0.0 && w > 0.0) || !beta.is_finite() || !w.is_finite() {
        return Err(Error::Domain(format!(
            "aperture and beam radius must be positive, got beta={beta}, W={w}"
        )));
    }
    let h = (beta / w).powi(2);
    let eta0_sq = -(-2.0 * h).exp_m1();
    let x = 4.0 * h;
    let tail = 1.0 - i0e(x);
    if !(tail > 0.0) {
        return Err(Error::Domain(format!(
            "h = {h} too small: 1 - exp(-4h) I0(4h) = {tail} is not positive"
        )));
    }
    let log_term = (2.0 * eta0_sq / tail).ln();
    if !(log_term > 0.0) || !log_term.is_finite() {
        return Err(Error::Domain(format!(
            "h = {h} too small: ln(2 eta0^2 / (1 - exp(-4h) I0(4h))) = {log_term}"
        )));
    }
    let lambda = 8.0 * h * i1e(x) / tail / log_term;
    let l_scale = beta * log_term.powf(-1.0 / lambda);
    Ok(WanderParams {
        lambda,
        l_scale,
        eta0: eta0_sq.sqrt(),
    })
}

/// Fading link with beam wander `sigma_b`; `sigma_b = 0` is a fixed link at `η₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamWanderChannel {
    beta: f64,
    w: f64,
    sigma_b: f64,
    params: WanderParams,
}

impl BeamWanderChannel {
    pub fn new(beta: f64, w: f64, sigma_b: f64) -> Result<Self> {
        if !(sigma_b >= 0.0) || !sigma_b.is_finite() {
            return Err(Error::Domain(format!(
                "beam-wander deviation must be >= 0, got {sigma_b}"
            )));
        }
        Ok(Self {
            beta,
            w,
            sigma_b,
            params: derive_params(beta, w)?,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn sigma_b(&self) -> f64 {
        self.sigma_b
    }

    pub fn h(&self) -> f64 {
        (self.beta / self.w).powi(2)
    }

    pub fn params(&self) -> WanderParams {
        self.params
    }

    pub fn lambda(&self) -> f64 {
        self.params.lambda
    }

    pub fn l_scale(&self) -> f64 {
        self.params.l_scale
    }

    pub fn eta0(&self) -> f64 {
        self.params.eta0
    }

    /// No wander: all mass at `η₀`.
    pub fn is_degenerate(&self) -> bool {
        self.sigma_b == 0.0
    }

    // L² / (2σ²)
    fn rate(&self) -> f64 {
        self.params.l_scale.powi(2) / (2.0 * self.sigma_b * self.sigma_b)
    }

    /// Exponential coordinate of a transmittance; `∞` for `eta <= 0`, `0` for `eta >= η₀`.
    pub fn s_of_eta(&self, eta: f64) -> f64 {
        let eta0 = self.eta0();
        if eta >= eta0 {
            return 0.0;
        }
        if eta <= 0.0 {
            return f64::INFINITY;
        }
        if self.is_degenerate() {
            return f64::INFINITY;
        }
        self.s_of_depth(2.0 * (eta0 / eta).ln())
    }

    /// Inverse of [`s_of_eta`](Self::s_of_eta).
    pub fn eta_of_s(&self, s: f64) -> f64 {
        if self.is_degenerate() || s <= 0.0 {
            return self.eta0();
        }
        self.eta0() * (-0.5 * self.depth_of_s(s)).exp()
    }

    /// Probability density of `η`.
    ///
    /// Zero outside `(0, η₀)`. At `η = η₀` the density diverges when `λ > 2`
    /// and `+∞` is returned; for a degenerate channel `+∞` marks the point mass.
    pub fn pdf(&self, eta: f64) -> f64 {
        let eta0 = self.eta0();
        if eta > eta0 || eta <= 0.0 || eta.is_nan() {
            return 0.0;
        }
        if self.is_degenerate() {
            return if eta == eta0 { f64::INFINITY } else { 0.0 };
        }
        let lambda = self.lambda();
        let exponent = 2.0 / lambda - 1.0;
        if eta == eta0 {
            return match exponent.partial_cmp(&0.0) {
                Some(std::cmp::Ordering::Less) => f64::INFINITY,
                Some(std::cmp::Ordering::Equal) => {
                    2.0 * self.l_scale().powi(2) / (self.sigma_b.powi(2) * lambda * eta0)
                }
                _ => 0.0,
            };
        }
        // difference of logs stays finite for subnormal eta
        self.pdf_at_depth(2.0 * (eta0.ln() - eta.ln()))
    }

    /// Density at `η = η₀ e^{-y/2}`, for callers that know `y` more
    /// accurately than `η`.
    pub fn pdf_at_depth(&self, y: f64) -> f64 {
        if !(y > 0.0) || y.is_infinite() || self.is_degenerate() {
            return self.pdf(if y == 0.0 { self.eta0() } else { 0.0 });
        }
        let lambda = self.lambda();
        let rate = self.rate();
        let ln_eta = self.eta0().ln() - 0.5 * y;
        // log-space keeps the product finite for very small eta
        let log_p = (4.0 * rate / lambda).ln() - ln_eta + (2.0 / lambda - 1.0) * y.ln()
            - rate * y.powf(2.0 / lambda);
        log_p.exp()
    }

    /// Exponential coordinate at depth `y = 2 ln(η₀/η)`.
    pub fn s_of_depth(&self, y: f64) -> f64 {
        self.rate() * y.max(0.0).powf(2.0 / self.lambda())
    }

    /// `2 ln(η₀/η)` at exponential coordinate `s`.
    pub fn depth_of_s(&self, s: f64) -> f64 {
        (s / self.rate()).powf(0.5 * self.lambda())
    }

    /// `P(η <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x >= self.eta0() {
            return 1.0;
        }
        if x <= 0.0 || self.is_degenerate() {
            return 0.0;
        }
        (-self.s_of_eta(x)).exp()
    }

    /// Inverse CDF: the `η` with `P(η <= η) = u`.
    pub fn quantile(&self, u: f64) -> f64 {
        if u >= 1.0 {
            return self.eta0();
        }
        if u <= 0.0 {
            return 0.0;
        }
        self.eta_of_s(-u.ln())
    }

    /// Exact draw: `s ~ Exp(1)`, `η = η₀ exp(-(2σ_b² s / L²)^{λ/2} / 2)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.is_degenerate() {
            return self.eta0();
        }
        let s: f64 = rng.sample(Exp1);
        self.eta_of_s(s)
    }

    /// `E[η^k]` for `k > 0`.
    ///
    /// Tries the 96-point Gauss–Laguerre rule, checked against 128 points; on
    /// disagreement falls back to adaptive Gauss–Kronrod over decade-spaced
    /// panels of the exponential coordinate.
    pub fn moment(&self, k: f64) -> Result<f64> {
        if !(k > 0.0) {
            return Err(Error::Domain(format!("moment order must be > 0, got {k}")));
        }
        let eta0k = self.eta0().powf(k);
        if self.is_degenerate() {
            return Ok(eta0k);
        }
        let rate = self.rate();
        let half_lambda = 0.5 * self.lambda();
        let g = |s: f64| (-0.5 * k * (s / rate).powf(half_lambda)).exp();

        let coarse = quadrature::laguerre_96().integrate(g);
        let fine = quadrature::laguerre_128().integrate(g);
        if (coarse - fine).abs() <= LAGUERRE_AGREEMENT * fine.abs() {
            return Ok(eta0k * fine);
        }
        let [v] = quadrature::integrate(
            |s| [g(s) * (-s).exp()],
            &decade_breakpoints(S_MAX, DECADES),
            Tolerance::default(),
        )?;
        Ok(eta0k * v)
    }

    /// `-10 log₁₀ E[η]`.
    pub fn mean_loss_db(&self) -> Result<f64> {
        // adding zero turns -0.0 into 0.0 for lossless links
        Ok(-10.0 * self.moment(1.0)?.log10() + 0.0)
    }

    /// `[P(η ≥ t), E[√η; η ≥ t], E[η; η ≥ t]]`.
    pub fn partial_moments(&self, t: f64) -> Result<[f64; 3]> {
        let eta0 = self.eta0();
        if t > eta0 {
            return Ok([0.0; 3]);
        }
        if self.is_degenerate() {
            return Ok([1.0, eta0.sqrt(), eta0]);
        }
        let s_t = if t <= 0.0 {
            f64::INFINITY
        } else {
            self.s_of_eta(t)
        };
        let prob = -(-s_t).exp_m1();
        let hi = s_t.min(S_MAX);
        if !(hi > 0.0) {
            return Ok([prob, 0.0, 0.0]);
        }
        let rate = self.rate();
        let half_lambda = 0.5 * self.lambda();
        let [m_half, m_one] = quadrature::integrate(
            |s| {
                let y = (s / rate).powf(half_lambda);
                let w = (-s).exp();
                [w * (-0.25 * y).exp(), w * (-0.5 * y).exp()]
            },
            &decade_breakpoints(hi, DECADES),
            Tolerance::default(),
        )?;
        Ok([prob, eta0.sqrt() * m_half, eta0 * m_one])
    }
}

/// A single link as seen by the key-rate pipeline: either a fixed
/// transmittance or a beam-wander fading channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Link {
    Fixed(f64),
    Wander(BeamWanderChannel),
}

impl Link {
    pub fn fixed(tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::Domain(format!(
                "transmittance must be in [0,1], got {tau}"
            )));
        }
        Ok(Link::Fixed(tau))
    }

    pub fn eta_max(&self) -> f64 {
        match self {
            Link::Fixed(t) => *t,
            Link::Wander(ch) => ch.eta0(),
        }
    }

    /// Point mass (fixed link or zero wander).
    pub fn is_deterministic(&self) -> bool {
        match self {
            Link::Fixed(_) => true,
            Link::Wander(ch) => ch.is_degenerate(),
        }
    }

    pub fn wander(&self) -> Option<&BeamWanderChannel> {
        match self {
            Link::Wander(ch) => Some(ch),
            Link::Fixed(_) => None,
        }
    }

    pub fn moment(&self, k: f64) -> Result<f64> {
        match self {
            Link::Fixed(t) => Ok(t.powf(k)),
            Link::Wander(ch) => ch.moment(k),
        }
    }

    pub fn mean_loss_db(&self) -> Result<f64> {
        // adding zero turns -0.0 into 0.0 for lossless links
        Ok(-10.0 * self.moment(1.0)?.log10() + 0.0)
    }

    pub fn partial_moments(&self, t: f64) -> Result<[f64; 3]> {
        match self {
            Link::Fixed(tau) => Ok(if *tau >= t {
                [1.0, tau.sqrt(), *tau]
            } else {
                [0.0; 3]
            }),
            Link::Wander(ch) => ch.partial_moments(t),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Link::Fixed(t) => *t,
            Link::Wander(ch) => ch.sample(rng),
        }
    }
}
