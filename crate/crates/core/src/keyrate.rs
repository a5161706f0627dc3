//! Asymptotic secret-key rates for entanglement-based CV-QKD under
//! collective attacks, from a standard-form two-mode covariance matrix.
//!
//! Bob always measures homodyne. Alice measures homodyne or heterodyne;
//! reconciliation is direct (Alice's data is the reference) or reverse
//! (Bob's data is the reference). Rates are in bits per pulse and may be
//! negative; clamping is left to the caller.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{boundary_slack, entropy_of_eigenvalue, TwoModeCM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measurement {
    Homodyne,
    Heterodyne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reconciliation {
    Direct,
    Reverse,
}

/// One of the three analysed protocol variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Protocol {
    alice: Measurement,
    reconciliation: Reconciliation,
}

impl Protocol {
    pub const RR_HOMODYNE: Protocol = Protocol {
        alice: Measurement::Homodyne,
        reconciliation: Reconciliation::Reverse,
    };
    pub const DR_HOMODYNE: Protocol = Protocol {
        alice: Measurement::Homodyne,
        reconciliation: Reconciliation::Direct,
    };
    pub const RR_HETERODYNE: Protocol = Protocol {
        alice: Measurement::Heterodyne,
        reconciliation: Reconciliation::Reverse,
    };

    /// Heterodyne with direct reconciliation is not supported.
    pub fn new(alice: Measurement, reconciliation: Reconciliation) -> Result<Self> {
        if alice == Measurement::Heterodyne && reconciliation == Reconciliation::Direct {
            return Err(Error::Domain(
                "heterodyne detection with direct reconciliation is not supported".into(),
            ));
        }
        Ok(Self {
            alice,
            reconciliation,
        })
    }

    pub fn alice(&self) -> Measurement {
        self.alice
    }

    pub fn reconciliation(&self) -> Reconciliation {
        self.reconciliation
    }

    pub fn as_str(&self) -> &'static str {
        match (self.alice, self.reconciliation) {
            (Measurement::Homodyne, Reconciliation::Reverse) => "rr-hom",
            (Measurement::Homodyne, Reconciliation::Direct) => "dr-hom",
            (Measurement::Heterodyne, Reconciliation::Reverse) => "rr-het",
            (Measurement::Heterodyne, Reconciliation::Direct) => unreachable!(),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rr-hom" => Ok(Self::RR_HOMODYNE),
            "dr-hom" => Ok(Self::DR_HOMODYNE),
            "rr-het" => Ok(Self::RR_HETERODYNE),
            "dr-het" => Protocol::new(Measurement::Heterodyne, Reconciliation::Direct),
            other => Err(Error::Config(format!(
                "unknown protocol '{other}' (expected rr-hom, dr-hom or rr-het)"
            ))),
        }
    }
}

impl TryFrom<String> for Protocol {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Protocol> for String {
    fn from(p: Protocol) -> String {
        p.as_str().to_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateBreakdown {
    /// `I_AB`, bits per pulse.
    pub mutual_info: f64,
    /// `χ_BE` (reverse) or `χ_AE` (direct), bits per pulse.
    pub holevo: f64,
    /// `mutual_info - holevo`.
    pub key_rate: f64,
    /// Symplectic eigenvalue of Eve's conditional state.
    pub nu3: f64,
}

/// Alice–Bob mutual information with Bob homodyne.
pub fn mutual_information(m: &TwoModeCM, alice: Measurement) -> Result<f64> {
    if !(m.b > 0.0) {
        return Err(Error::Unphysical(format!("mode B variance {} <= 0", m.b)));
    }
    let v_a = m.a;
    let v_a_given_b = m.a - m.c * m.c / m.b;
    if !(v_a_given_b > 0.0) {
        return Err(Error::Unphysical(format!(
            "conditional variance V_A|B = {v_a_given_b} <= 0"
        )));
    }
    let info = match alice {
        Measurement::Homodyne => 0.5 * (v_a / v_a_given_b).log2(),
        Measurement::Heterodyne => 0.5 * ((v_a + 1.0) / (v_a_given_b + 1.0)).log2(),
    };
    Ok(info.max(0.0))
}

/// `ν₃ = sqrt(a (a - c²/b))`, Eve's conditional eigenvalue after Bob's homodyne.
pub fn conditional_eigenvalue_rr(m: &TwoModeCM) -> Result<f64> {
    conditional(m.a, m.b, m.c)
}

/// `ν₃ = sqrt(b (b - c²/a))`, Eve's conditional eigenvalue after Alice's homodyne.
pub fn conditional_eigenvalue_dr(m: &TwoModeCM) -> Result<f64> {
    conditional(m.b, m.a, m.c)
}

fn conditional(kept: f64, measured: f64, c: f64) -> Result<f64> {
    let sq = kept * (kept - c * c / measured);
    if !(sq >= 0.0) {
        return Err(Error::Unphysical(format!(
            "conditional eigenvalue squared {sq} < 0"
        )));
    }
    Ok(sq.sqrt())
}

/// Holevo bound `χ_BE = S(E) - S(E|B)` for reverse reconciliation.
pub fn holevo_rr(m: &TwoModeCM) -> Result<f64> {
    Ok(holevo_with(m, conditional_eigenvalue_rr(m)?)?.0)
}

/// Holevo bound `χ_AE = S(E) - S(E|A)` for direct reconciliation.
pub fn holevo_dr(m: &TwoModeCM) -> Result<f64> {
    Ok(holevo_with(m, conditional_eigenvalue_dr(m)?)?.0)
}

fn holevo_with(m: &TwoModeCM, nu3: f64) -> Result<(f64, f64)> {
    let s_e = m.entropy()?;
    let s_cond = entropy_of_eigenvalue(nu3, boundary_slack(m))?;
    Ok((s_e - s_cond, nu3))
}

pub fn key_rate(m: &TwoModeCM, protocol: Protocol) -> Result<KeyRateBreakdown> {
    let mutual_info = mutual_information(m, protocol.alice())?;
    let nu3 = match protocol.reconciliation() {
        Reconciliation::Reverse => conditional_eigenvalue_rr(m)?,
        Reconciliation::Direct => conditional_eigenvalue_dr(m)?,
    };
    let (holevo, nu3) = holevo_with(m, nu3)?;
    Ok(KeyRateBreakdown {
        mutual_info,
        holevo,
        key_rate: mutual_info - holevo,
        nu3,
    })
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use crate::gaussian::{entropy_g, Squeezing};
    use proptest::prelude::*;

    fn v2() -> Squeezing {
        Squeezing::new(0.5 * 2f64.acosh()).unwrap()
    }

    #[test]
    fn protocol_parsing() {
        assert_eq!("rr-hom".parse::<Protocol>().unwrap(), Protocol::RR_HOMODYNE);
        assert_eq!("dr-hom".parse::<Protocol>().unwrap(), Protocol::DR_HOMODYNE);
        assert_eq!(
            "rr-het".parse::<Protocol>().unwrap(),
            Protocol::RR_HETERODYNE
        );
        assert!("dr-het".parse::<Protocol>().is_err());
        assert!("xx".parse::<Protocol>().is_err());
        assert!(Protocol::new(Measurement::Heterodyne, Reconciliation::Direct).is_err());
    }

    #[test]
    fn mutual_information_examples() {
        let m = TwoModeCM::new(3.0, 2.0, 0.0);
        assert_eq!(mutual_information(&m, Measurement::Homodyne).unwrap(), 0.0);
        let m = TwoModeCM::tmsv(v2());
        let hom = mutual_information(&m, Measurement::Homodyne).unwrap();
        let het = mutual_information(&m, Measurement::Heterodyne).unwrap();
        assert!((hom - 1.0).abs() < 1e-14);
        assert!((het - 0.5).abs() < 1e-14);
        assert!(mutual_information(&TwoModeCM::new(1.0, 1.0, 1.0), Measurement::Homodyne).is_err());
    }

    #[test]
    fn holevo_examples() {
        for r in [0.1, 0.5, 1.0, 2.0] {
            let m = TwoModeCM::tmsv(Squeezing::new(r).unwrap());
            assert!(holevo_rr(&m).unwrap().abs() < 1e-9);
            assert!(holevo_dr(&m).unwrap().abs() < 1e-9);
        }
        let m = TwoModeCM::new(3.0, 2.0, 0.0);
        let want = m.entropy().unwrap() - entropy_g(1.0).unwrap();
        assert!((holevo_rr(&m).unwrap() - want).abs() < 1e-14);

        let m = TwoModeCM::new(2.0, 1.6, 1.5f64.sqrt());
        let nu3 = conditional_eigenvalue_dr(&m).unwrap();
        assert!((nu3 - 1.36f64.sqrt()).abs() < 1e-14);
        assert!((nu3 - 1.166_190_378_969_059_9).abs() < 1e-12);

        let sym = TwoModeCM::new(2.5, 2.5, 1.7);
        assert!((holevo_rr(&sym).unwrap() - holevo_dr(&sym).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn key_rate_examples() {
        let m = TwoModeCM::tmsv(v2());
        let hom = key_rate(&m, Protocol::RR_HOMODYNE).unwrap();
        let het = key_rate(&m, Protocol::RR_HETERODYNE).unwrap();
        assert!((hom.key_rate - 1.0).abs() < 1e-9);
        assert!((het.key_rate - 0.5).abs() < 1e-9);
        assert_eq!(hom.key_rate, hom.mutual_info - hom.holevo);

        let mut v = 1.1;
        while v <= 10.0 {
            let s = Squeezing::new(0.5 * f64::acosh(v)).unwrap();
            let m = TwoModeCM::lossy(s, 0.4, 0.0).unwrap();
            assert!(key_rate(&m, Protocol::DR_HOMODYNE).unwrap().key_rate <= 0.0);
            v += 0.1;
        }
    }

    #[test]
    fn rr_key_monotone_in_transmittance() {
        for r in [0.2, 0.6, 1.0, 1.5, 2.0] {
            let s = Squeezing::new(r).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for i in 1..=20 {
                let tau = 0.05 * i as f64;
                let k = key_rate(
                    &TwoModeCM::lossy(s, tau, 0.0).unwrap(),
                    Protocol::RR_HOMODYNE,
                )
                .unwrap()
                .key_rate;
                assert!(k >= prev - 1e-12, "r={r} tau={tau}");
                prev = k;
            }
        }
    }

    #[test]
    fn dr_below_three_db_is_never_positive() {
        for i in 1..10 {
            let tau = 0.05 * i as f64;
            for j in 0..50 {
                let r = 0.05 + 0.05 * j as f64;
                let m = TwoModeCM::lossy(Squeezing::new(r).unwrap(), tau, 0.0).unwrap();
                assert!(key_rate(&m, Protocol::DR_HOMODYNE).unwrap().key_rate <= 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn heterodyne_info_never_exceeds_homodyne(r in 0.0..3.0f64, tau in 0.0..=1.0f64, chi in 0.0..1.0f64) {
            let m = TwoModeCM::lossy(Squeezing::new(r).unwrap(), tau, chi).unwrap();
            let hom = key_rate(&m, Protocol::RR_HOMODYNE).unwrap();
            let het = key_rate(&m, Protocol::RR_HETERODYNE).unwrap();
            prop_assert!(het.mutual_info <= hom.mutual_info + 1e-15);
            prop_assert!(hom.mutual_info >= 0.0);
        }

        #[test]
        fn key_non_increasing_in_noise(r in 0.05..3.0f64, tau in 0.05..=1.0f64, chi in 0.0..1.0f64, dchi in 0.0..0.5f64) {
            let s = Squeezing::new(r).unwrap();
            for p in [Protocol::RR_HOMODYNE, Protocol::DR_HOMODYNE, Protocol::RR_HETERODYNE] {
                let k1 = key_rate(&TwoModeCM::lossy(s, tau, chi).unwrap(), p).unwrap().key_rate;
                let k2 = key_rate(&TwoModeCM::lossy(s, tau, chi + dchi).unwrap(), p).unwrap().key_rate;
                prop_assert!(k2 <= k1 + 1e-12);
            }
        }
    }
}
