//! Two independent fading links in series or in parallel.
//!
//! In the reflection scheme one mode crosses an uplink and then a downlink, so
//! it sees the combined transmittance `ζ = η η'`. In the on-board scheme the
//! satellite sends one mode down each link and the two transmittances act on
//! different modes. In both cases the links are independent. Post-selection
//! keeps only pulses whose product transmittance is at least `ζ_th`.
//!
//! All expectations needed by either scheme are collected in
//! [`SelectedMoments`]: `E[X; ηη' ≥ ζ_th]` for `X ∈ {1, η, η', √(ηη'), ηη'}`.

use std::cell::Cell;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fading::{BeamWanderChannel, Link, S_MAX};
use crate::gaussian::{Squeezing, TwoModeCM};
use crate::quadrature::{self, decade_breakpoints, Tolerance};

/// Below this success probability the quadrature estimator refuses to normalise.
pub const QUADRATURE_PS_FLOOR: f64 = 1e-7;
/// Minimum number of accepted Monte Carlo samples.
pub const MC_MIN_ACCEPTED: u64 = 100;
/// Monte Carlo work is split into this many independently seeded streams,
/// whatever the thread count.
pub const MC_STREAMS: u64 = 64;

const OUTER_TOL: Tolerance = Tolerance {
    rel: 1e-11,
    abs: 1e-300,
    max_segments: 4000,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Mode B reflected off the satellite: loss `ζ = ηη'` on mode B only.
    Reflection,
    /// Pair generated on board: `η` on mode A, `η'` on mode B.
    OnBoard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostSelection {
    pub zeta_th: f64,
    pub estimator: Estimator,
    pub mc_samples: u64,
    pub seed: u64,
}

impl PostSelection {
    pub fn quadrature(zeta_th: f64) -> Self {
        Self {
            zeta_th,
            estimator: Estimator::Quadrature,
            mc_samples: 10_000_000,
            seed: 0,
        }
    }

    pub fn monte_carlo(zeta_th: f64, mc_samples: u64, seed: u64) -> Self {
        Self {
            zeta_th,
            estimator: Estimator::MonteCarlo,
            mc_samples,
            seed,
        }
    }
}

/// Unnormalised expectations restricted to the selected region.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SelectedMoments {
    pub p_s: f64,
    /// `E[η; sel]`
    pub first: f64,
    /// `E[η'; sel]`
    pub second: f64,
    /// `E[√(ηη'); sel]`
    pub sqrt_product: f64,
    /// `E[ηη'; sel]`
    pub product: f64,
}

impl SelectedMoments {
    fn from_array(v: [f64; 5]) -> Self {
        Self {
            p_s: v[0],
            first: v[1],
            second: v[2],
            sqrt_product: v[3],
            product: v[4],
        }
    }

    /// Conditional means `[E[η|sel], E[η'|sel], E[√ζ|sel], E[ζ|sel]]`.
    pub fn conditional(&self) -> [f64; 4] {
        let p = self.p_s;
        [
            self.first / p,
            self.second / p,
            self.sqrt_product / p,
            self.product / p,
        ]
    }

    /// Covariance matrix of the selected ensemble.
    pub fn covariance(&self, scheme: Scheme, s: Squeezing, chi: f64) -> Result<TwoModeCM> {
        if !(chi >= 0.0) {
            return Err(Error::Domain(format!(
                "excess noise must be >= 0, got {chi}"
            )));
        }
        let v = s.variance();
        let [first, second, sqrt_product, product] = self.conditional();
        let c = sqrt_product * s.correlation();
        Ok(match scheme {
            Scheme::Reflection => TwoModeCM::new(v, 1.0 + product * (v - 1.0) + chi, c),
            Scheme::OnBoard => {
                TwoModeCM::new(1.0 + first * (v - 1.0), 1.0 + second * (v - 1.0) + chi, c)
            }
        })
    }
}

/// Monte Carlo estimate with standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub moments: SelectedMoments,
    pub samples: u64,
    pub accepted: u64,
    /// Standard error of `p_s`.
    pub p_s_se: f64,
    /// Standard errors of [`SelectedMoments::conditional`].
    pub conditional_se: [f64; 4],
}

/// Pair of independent links. For the reflection scheme `first` is the uplink
/// (A → satellite) and `second` the downlink (satellite → B); on board they are
/// the links to A and to B.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombinedChannel {
    pub first: Link,
    pub second: Link,
}

impl CombinedChannel {
    pub fn new(first: Link, second: Link) -> Self {
        Self { first, second }
    }

    /// Identical geometry on both links with `σ_SB = k1 k2 σ_AS`.
    pub fn coupled(beta: f64, w: f64, sigma_as: f64, k1: f64, k2: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&k1) || !(k2 >= 0.0) {
            return Err(Error::Domain(format!(
                "coupling needs 0 <= k1 <= 1 and k2 >= 0, got k1={k1}, k2={k2}"
            )));
        }
        Ok(Self::new(
            Link::Wander(BeamWanderChannel::new(beta, w, sigma_as)?),
            Link::Wander(BeamWanderChannel::new(beta, w, k1 * k2 * sigma_as)?),
        ))
    }

    /// Largest achievable product transmittance `η₀η₀'`.
    pub fn zeta_max(&self) -> f64 {
        self.first.eta_max() * self.second.eta_max()
    }

    /// Unrestricted moments from the per-link moments (independence).
    pub fn factorized_moments(&self) -> Result<SelectedMoments> {
        let (h1, m1) = (self.first.moment(0.5)?, self.first.moment(1.0)?);
        let (h2, m2) = (self.second.moment(0.5)?, self.second.moment(1.0)?);
        Ok(SelectedMoments {
            p_s: 1.0,
            first: m1,
            second: m2,
            sqrt_product: h1 * h2,
            product: m1 * m2,
        })
    }

    /// Ensemble-averaged covariance matrix (no selection).
    pub fn ensemble_cm(&self, scheme: Scheme, s: Squeezing, chi: f64) -> Result<TwoModeCM> {
        self.factorized_moments()?.covariance(scheme, s, chi)
    }

    /// Selected moments by nested adaptive quadrature.
    ///
    /// The outer integral runs over the exponential coordinate of the first
    /// link; for each outer point the second link's partial moments above
    /// `ζ_th / η` are integrated with the threshold as the exact upper limit.
    pub fn selected_moments(&self, zeta_th: f64) -> Result<SelectedMoments> {
        let inner = |eta: f64| -> Result<[f64; 5]> {
            let t = if zeta_th <= 0.0 { 0.0 } else { zeta_th / eta };
            if eta <= 0.0 && zeta_th > 0.0 {
                return Ok([0.0; 5]);
            }
            let [m0, mh, m1] = self.second.partial_moments(t)?;
            Ok([m0, eta * m0, m1, eta.sqrt() * mh, eta * m1])
        };

        let raw = match self.first {
            Link::Fixed(tau) => inner(tau)?,
            Link::Wander(ch) if ch.is_degenerate() => inner(ch.eta0())?,
            Link::Wander(ch) => {
                let hi = if zeta_th <= 0.0 {
                    S_MAX
                } else {
                    ch.s_of_eta(zeta_th / self.second.eta_max()).min(S_MAX)
                };
                if !(hi > 0.0) {
                    [0.0; 5]
                } else {
                    let failure: Cell<Option<Error>> = Cell::new(None);
                    let v = quadrature::integrate(
                        |s| {
                            let w = (-s).exp();
                            match inner(ch.eta_of_s(s)) {
                                Ok(r) => r.map(|x| w * x),
                                Err(e) => {
                                    failure.set(Some(e));
                                    [0.0; 5]
                                }
                            }
                        },
                        &decade_breakpoints(hi, 16),
                        OUTER_TOL,
                    )?;
                    if let Some(e) = failure.take() {
                        return Err(e);
                    }
                    v
                }
            }
        };
        Ok(SelectedMoments::from_array(raw))
    }

    /// Selected moments by joint sampling.
    ///
    /// The sample budget is split over [`MC_STREAMS`] ChaCha streams derived
    /// from `seed`, and partial sums are reduced in stream order, so the
    /// result does not depend on the thread pool.
    pub fn selected_moments_mc(&self, zeta_th: f64, samples: u64, seed: u64) -> Result<McEstimate> {
        if samples == 0 {
            return Err(Error::Domain(
                "Monte Carlo needs at least one sample".into(),
            ));
        }
        let per = samples / MC_STREAMS;
        let extra = samples % MC_STREAMS;
        let partials: Vec<[f64; 8]> = (0..MC_STREAMS)
            .into_par_iter()
            .map(|stream| {
                let n = per + u64::from(stream < extra);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream);
                // [count, Ση, Ση', Σ√ζ, Σζ, Ση², Ση'², Σζ²]
                let mut acc = [0.0f64; 8];
                for _ in 0..n {
                    let e1 = self.first.sample(&mut rng);
                    let e2 = self.second.sample(&mut rng);
                    let z = e1 * e2;
                    if z >= zeta_th {
                        acc[0] += 1.0;
                        acc[1] += e1;
                        acc[2] += e2;
                        acc[3] += z.sqrt();
                        acc[4] += z;
                        acc[5] += e1 * e1;
                        acc[6] += e2 * e2;
                        acc[7] += z * z;
                    }
                }
                acc
            })
            .collect();
        let mut total = [0.0f64; 8];
        for p in &partials {
            for (t, x) in total.iter_mut().zip(p) {
                *t += x;
            }
        }
        let n = samples as f64;
        let accepted = total[0] as u64;
        let p_s = total[0] / n;
        if accepted < MC_MIN_ACCEPTED {
            return Err(Error::ThresholdTooAggressive { p_s });
        }
        let k = total[0];
        let se = |s: f64, s2: f64| {
            let m = s / k;
            let var = (s2 / k - m * m).max(0.0) * k / (k - 1.0).max(1.0);
            (var / k).sqrt()
        };
        Ok(McEstimate {
            moments: SelectedMoments {
                p_s,
                first: total[1] / n,
                second: total[2] / n,
                sqrt_product: total[3] / n,
                product: total[4] / n,
            },
            samples,
            accepted,
            p_s_se: (p_s * (1.0 - p_s) / n).sqrt(),
            conditional_se: [
                se(total[1], total[5]),
                se(total[2], total[6]),
                se(total[3], total[4]),
                se(total[4], total[7]),
            ],
        })
    }

    /// Post-selected covariance matrix and success probability.
    pub fn post_selected_cm(
        &self,
        scheme: Scheme,
        s: Squeezing,
        chi: f64,
        ps: &PostSelection,
    ) -> Result<(TwoModeCM, f64)> {
        let zmax = self.zeta_max();
        if !(ps.zeta_th >= 0.0) || ps.zeta_th >= zmax {
            return Err(Error::Domain(format!(
                "threshold must lie in [0, {zmax}), got {}",
                ps.zeta_th
            )));
        }
        let moments = match ps.estimator {
            Estimator::Quadrature => {
                let m = self.selected_moments(ps.zeta_th)?;
                if m.p_s < QUADRATURE_PS_FLOOR {
                    return Err(Error::ThresholdTooAggressive { p_s: m.p_s });
                }
                m
            }
            Estimator::MonteCarlo => {
                self.selected_moments_mc(ps.zeta_th, ps.mc_samples, ps.seed)?
                    .moments
            }
        };
        Ok((moments.covariance(scheme, s, chi)?, moments.p_s))
    }

    /// Density of `ζ = ηη'` by one-dimensional numerical convolution.
    ///
    /// The convolution range is split at the geometric midpoint; each half is
    /// integrated in the exponential coordinate of the link whose density is
    /// singular at that end.
    pub fn combined_pdf(&self, zeta: f64) -> Result<f64> {
        let zmax = self.zeta_max();
        if !(zeta > 0.0) || zeta > zmax {
            return Ok(0.0);
        }
        match (self.first, self.second) {
            (a, b) if a.is_deterministic() && b.is_deterministic() => {
                Ok(if zeta == zmax { f64::INFINITY } else { 0.0 })
            }
            (a, Link::Wander(b)) if a.is_deterministic() => {
                let e = a.eta_max();
                Ok(b.pdf(zeta / e) / e)
            }
            (Link::Wander(a), b) if b.is_deterministic() => {
                let e = b.eta_max();
                Ok(a.pdf(zeta / e) / e)
            }
            (Link::Wander(a), Link::Wander(b)) => {
                if zeta == zmax {
                    return Ok(0.0);
                }
                // total depth 2 ln(ζmax/ζ) is shared between the links; each
                // half integrates over the link holding the larger share
                let total = 2.0 * (zmax / zeta).ln();
                let half = |near: &BeamWanderChannel, far: &BeamWanderChannel| {
                    let hi = near.s_of_depth(0.5 * total).min(S_MAX);
                    if !(hi > 0.0) {
                        return Ok(0.0);
                    }
                    let [v] = quadrature::integrate(
                        |s| {
                            let y = near.depth_of_s(s);
                            let ln_eta = near.eta0().ln() - 0.5 * y;
                            [(-s).exp() * far.pdf_at_depth(total - y) * (-ln_eta).exp()]
                        },
                        &decade_breakpoints(hi, 16),
                        Tolerance {
                            rel: 1e-10,
                            ..Tolerance::default()
                        },
                    )?;
                    Ok::<f64, Error>(v)
                };
                Ok(half(&a, &b)? + half(&b, &a)?)
            }
            _ => unreachable!("fixed links are deterministic"),
        }
    }
}
