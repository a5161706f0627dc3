//! Numerical integration used by the fading and combined-channel modules.
//!
//! Two rules are provided:
//!
//! * [`GaussLaguerre`] for `∫₀^∞ g(s) e^{-s} ds` with smooth `g`.
//! * [`integrate`], a globally adaptive Gauss–Kronrod (7, 15) integrator for
//!   vector-valued integrands on a finite interval. Every component is refined
//!   until it meets its own relative tolerance, so several moments of one
//!   distribution can share the same function evaluations.

use std::sync::OnceLock;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the odd-indexed Kronrod nodes (XGK[1], XGK[3], XGK[5], XGK[7]).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_segments: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rel: 1e-12,
            abs: 1e-300,
            max_segments: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment<const N: usize> {
    lo: f64,
    hi: f64,
    value: [f64; N],
    error: [f64; N],
}

fn kronrod<const N: usize, F>(f: &mut F, lo: f64, hi: f64) -> Segment<N>
where
    F: FnMut(f64) -> [f64; N],
{
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut k = [0.0; N];
    let mut g = [0.0; N];

    let fc = f(center);
    for i in 0..N {
        k[i] = WGK[7] * fc[i];
        g[i] = WG[3] * fc[i];
    }
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        for i in 0..N {
            let pair = f1[i] + f2[i];
            k[i] += WGK[j] * pair;
            if j % 2 == 1 {
                g[i] += WG[j / 2] * pair;
            }
        }
    }

    let mut value = [0.0; N];
    let mut error = [0.0; N];
    for i in 0..N {
        value[i] = k[i] * half;
        error[i] = ((k[i] - g[i]) * half).abs();
    }
    Segment {
        lo,
        hi,
        value,
        error,
    }
}

/// Integrate `f` over the partition given by `breakpoints` (ascending, at
/// least two entries).
///
/// Breakpoints seed the initial partition; they matter when the integrand
/// lives on a scale much smaller than the interval, where a single 15-point
/// rule could miss it entirely.
pub fn integrate<const N: usize, F>(
    mut f: F,
    breakpoints: &[f64],
    tol: Tolerance,
) -> Result<[f64; N]>
where
    F: FnMut(f64) -> [f64; N],
{
    assert!(breakpoints.len() >= 2, "need at least one interval");
    let mut segments: Vec<Segment<N>> = breakpoints
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| kronrod(&mut f, w[0], w[1]))
        .collect();
    if segments.is_empty() {
        return Ok([0.0; N]);
    }

    loop {
        let mut total = [0.0; N];
        let mut err = [0.0; N];
        for s in &segments {
            for i in 0..N {
                total[i] += s.value[i];
                err[i] += s.error[i];
            }
        }
        if total.iter().chain(&err).any(|x| !x.is_finite()) {
            return Err(Error::Quadrature {
                relative_error: f64::NAN,
            });
        }
        let limit: [f64; N] = std::array::from_fn(|i| tol.abs.max(tol.rel * total[i].abs()));
        if (0..N).all(|i| err[i] <= limit[i]) {
            return Ok(total);
        }
        if segments.len() >= tol.max_segments {
            let worst = (0..N)
                .map(|i| err[i] / total[i].abs().max(tol.abs))
                .fold(0.0, f64::max);
            return Err(Error::Quadrature {
                relative_error: worst,
            });
        }

        let (idx, _) = segments
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let score = (0..N).map(|i| s.error[i] / limit[i]).fold(0.0, f64::max);
                (j, score)
            })
            .fold(
                (0, -1.0),
                |best, cur| if cur.1 > best.1 { cur } else { best },
            );

        let seg = segments.swap_remove(idx);
        let mid = 0.5 * (seg.lo + seg.hi);
        if mid <= seg.lo || mid >= seg.hi {
            // Interval exhausted at f64 resolution; accept it as is.
            let mut frozen = seg;
            frozen.error = [0.0; N];
            segments.push(frozen);
            continue;
        }
        segments.push(kronrod(&mut f, seg.lo, mid));
        segments.push(kronrod(&mut f, mid, seg.hi));
    }
}

/// Breakpoints `0, hi·10^-decades, …, hi·0.1, hi`.
///
/// Used for integrands concentrated near the lower end of `[0, hi]` at an a
/// priori unknown scale.
pub fn decade_breakpoints(hi: f64, decades: u32) -> Vec<f64> {
    let mut pts = Vec::with_capacity(decades as usize + 2);
    pts.push(0.0);
    for d in (1..=decades).rev() {
        pts.push(hi * 10f64.powi(-(d as i32)));
    }
    pts.push(hi);
    pts
}

/// Gauss–Laguerre rule for `∫₀^∞ g(s) e^{-s} ds`.
#[derive(Debug, Clone)]
pub struct GaussLaguerre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLaguerre {
    /// Nodes via Newton iteration on the Laguerre recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 2);
        let nf = n as f64;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let mut z = 0.0_f64;
        for i in 0..n {
            z = match i {
                0 => 3.0 / (1.0 + 2.4 * nf),
                1 => z + 15.0 / (1.0 + 2.5 * nf),
                _ => {
                    let ai = (i - 1) as f64;
                    z + ((1.0 + 2.55 * ai) / (1.9 * ai)) * (z - nodes[i - 2])
                }
            };
            let mut pp = 0.0;
            let mut p2 = 0.0;
            for _ in 0..100 {
                let mut p1 = 1.0;
                p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf + 1.0 - z) * p2 - jf * p3) / (jf + 1.0);
                }
                pp = nf * (p1 - p2) / z;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs() {
                    break;
                }
            }
            nodes[i] = z;
            weights[i] = -1.0 / (pp * nf * p2);
        }
        Self { nodes, weights }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut g: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(x))
            .sum()
    }
}

/// Cached 96-point rule.
pub fn laguerre_96() -> &'static GaussLaguerre {
    static RULE: OnceLock<GaussLaguerre> = OnceLock::new();
    RULE.get_or_init(|| GaussLaguerre::new(96))
}

/// Cached 128-point rule, used as the convergence check for [`laguerre_96`].
pub fn laguerre_128() -> &'static GaussLaguerre {
    static RULE: OnceLock<GaussLaguerre> = OnceLock::new();
    RULE.get_or_init(|| GaussLaguerre::new(128))
}
