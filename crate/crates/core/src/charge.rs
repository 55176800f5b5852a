//! Central charges, slopes, the order on charges and stability verdicts.

use std::cmp::Ordering;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::rational::Q;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChargeError {
    #[error("slope undefined: imaginary part is zero")]
    ZeroImaginary,
    #[error("total charge must have positive (J+L).beta")]
    DegenerateTotal,
    #[error("subobject {0} equals the total")]
    ImproperSubobject(usize),
    #[error("invalid charge datum: {0}")]
    Invalid(String),
    #[error("lattice generators are dependent")]
    DegenerateBasis,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ChargeValue {
    pub re: Q,
    pub im: Q,
}

impl ChargeValue {
    pub fn new(re: Q, im: Q) -> ChargeValue {
        ChargeValue { re, im }
    }

    pub fn zero() -> ChargeValue {
        ChargeValue::default()
    }

    pub fn real(re: Q) -> ChargeValue {
        ChargeValue { re, im: Q::zero() }
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }
}

impl Add for ChargeValue {
    type Output = ChargeValue;
    fn add(self, o: ChargeValue) -> ChargeValue {
        ChargeValue::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for ChargeValue {
    type Output = ChargeValue;
    fn sub(self, o: ChargeValue) -> ChargeValue {
        ChargeValue::new(self.re - o.re, self.im - o.im)
    }
}

impl Neg for ChargeValue {
    type Output = ChargeValue;
    fn neg(self) -> ChargeValue {
        ChargeValue::new(-self.re, -self.im)
    }
}

impl std::iter::Sum for ChargeValue {
    fn sum<I: Iterator<Item = ChargeValue>>(iter: I) -> ChargeValue {
        iter.fold(ChargeValue::zero(), |a, b| a + b)
    }
}

/// Euler characteristic and the three curve-class pairings.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ChargeDatum {
    pub chi: i64,
    pub b_beta: Q,
    pub jl_beta: Q,
    pub h_beta: u64,
}

impl ChargeDatum {
    pub fn new(chi: i64, b_beta: Q, jl_beta: Q, h_beta: u64) -> ChargeDatum {
        ChargeDatum {
            chi,
            b_beta,
            jl_beta,
            h_beta,
        }
    }

    /// A zero-dimensional datum with the given Euler characteristic.
    pub fn points(chi: i64) -> ChargeDatum {
        ChargeDatum {
            chi,
            ..Default::default()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.chi == 0 && self.b_beta.is_zero() && self.jl_beta.is_zero() && self.h_beta == 0
    }

    pub fn validate(&self) -> Result<(), ChargeError> {
        if self.jl_beta.is_negative() {
            return Err(ChargeError::Invalid("(J+L).beta is negative".into()));
        }
        if self.jl_beta.is_zero() && (!self.b_beta.is_zero() || self.h_beta != 0) {
            return Err(ChargeError::Invalid(
                "zero-dimensional datum carries a curve class".into(),
            ));
        }
        Ok(())
    }

    pub fn scale(&self, k: i64) -> ChargeDatum {
        ChargeDatum {
            chi: self.chi * k,
            b_beta: &self.b_beta * &Q::int(k),
            jl_beta: &self.jl_beta * &Q::int(k),
            h_beta: self.h_beta * k as u64,
        }
    }
}

impl Add for ChargeDatum {
    type Output = ChargeDatum;
    fn add(self, o: ChargeDatum) -> ChargeDatum {
        ChargeDatum {
            chi: self.chi + o.chi,
            b_beta: self.b_beta + o.b_beta,
            jl_beta: self.jl_beta + o.jl_beta,
            h_beta: self.h_beta + o.h_beta,
        }
    }
}

impl<'a> Add<&'a ChargeDatum> for &'a ChargeDatum {
    type Output = ChargeDatum;
    fn add(self, o: &ChargeDatum) -> ChargeDatum {
        self.clone() + o.clone()
    }
}

impl std::iter::Sum for ChargeDatum {
    fn sum<I: Iterator<Item = ChargeDatum>>(iter: I) -> ChargeDatum {
        iter.fold(ChargeDatum::default(), |a, b| a + b)
    }
}

pub fn central_charge(d: &ChargeDatum) -> ChargeValue {
    ChargeValue::new(Q::int(d.chi) - &d.b_beta, -&d.jl_beta)
}

pub fn in_h_minus(z: &ChargeValue) -> bool {
    z.im.is_negative() || (z.im.is_zero() && z.re.is_positive())
}

pub fn slope(z: &ChargeValue) -> Result<Q, ChargeError> {
    if z.im.is_zero() {
        return Err(ChargeError::ZeroImaginary);
    }
    Ok(-(&z.re / &z.im))
}

pub fn precedes(z1: &ChargeValue, z2: &ChargeValue) -> bool {
    order(z1, z2) == Ordering::Less
}

/// The total order behind [`precedes`]: `-Im` first, then `Re`.
pub fn order(z1: &ChargeValue, z2: &ChargeValue) -> Ordering {
    (-&z1.im)
        .cmp(&-&z2.im)
        .then_with(|| z1.re.cmp(&z2.re))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Stable,
    StrictlySemistable,
    Unstable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub verdict: Verdict,
    pub witness_index: Option<usize>,
}

/// Slope with `+inf`/`-inf` for zero-dimensional data; `None` for zero charge.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum ExtSlope {
    NegInf,
    Finite(Q),
    PosInf,
}

fn ext_slope(d: &ChargeDatum) -> Option<ExtSlope> {
    if d.jl_beta.is_zero() {
        return match d.chi.cmp(&0) {
            Ordering::Greater => Some(ExtSlope::PosInf),
            Ordering::Less => Some(ExtSlope::NegInf),
            Ordering::Equal => None,
        };
    }
    slope(&central_charge(d)).ok().map(ExtSlope::Finite)
}

pub fn stability_verdict(
    total: &ChargeDatum,
    subobjects: &[ChargeDatum],
) -> Result<StabilityReport, ChargeError> {
    total.validate()?;
    if !total.jl_beta.is_positive() {
        return Err(ChargeError::DegenerateTotal);
    }
    let mu = ExtSlope::Finite(slope(&central_charge(total))?);
    let mut equal = None;
    for (i, s) in subobjects.iter().enumerate() {
        s.validate()?;
        if s == total {
            return Err(ChargeError::ImproperSubobject(i));
        }
        if s.is_zero() {
            continue;
        }
        let Some(m) = ext_slope(s) else { continue };
        match m.cmp(&mu) {
            Ordering::Greater => {
                return Ok(StabilityReport {
                    verdict: Verdict::Unstable,
                    witness_index: Some(i),
                })
            }
            Ordering::Equal if equal.is_none() => equal = Some(i),
            _ => {}
        }
    }
    Ok(match equal {
        Some(i) => StabilityReport {
            verdict: Verdict::StrictlySemistable,
            witness_index: Some(i),
        },
        None => StabilityReport {
            verdict: Verdict::Stable,
            witness_index: None,
        },
    })
}

/// Two generators of a rank-2 lattice in the complex plane.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeBasis {
    pub generators: [ChargeValue; 2],
}

impl LatticeBasis {
    /// Generators `re_unit` and `-i * im_unit`.
    pub fn units(re_unit: Q, im_unit: Q) -> LatticeBasis {
        LatticeBasis {
            generators: [
                ChargeValue::real(re_unit),
                ChargeValue::new(Q::zero(), -im_unit),
            ],
        }
    }

    /// Integer coordinates of `z`, if it lies in the lattice.
    pub fn coordinates(&self, z: &ChargeValue) -> Result<Option<(Q, Q)>, ChargeError> {
        let [g, h] = &self.generators;
        let (m, n) = linalg::solve2([[&g.re, &h.re], [&g.im, &h.im]], [&z.re, &z.im])
            .ok_or(ChargeError::DegenerateBasis)?;
        Ok((m.is_integer() && n.is_integer()).then_some((m, n)))
    }
}

impl Default for LatticeBasis {
    fn default() -> Self {
        LatticeBasis::units(Q::one(), Q::one())
    }
}

pub fn lattice_membership(values: &[ChargeValue], basis: &LatticeBasis) -> Result<bool, ChargeError> {
    for z in values {
        if basis.coordinates(z)?.is_none() {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(re: i64, im: i64) -> ChargeValue {
        ChargeValue::new(Q::int(re), Q::int(im))
    }

    fn d(chi: i64, b: Q, jl: i64, h: u64) -> ChargeDatum {
        ChargeDatum::new(chi, b, Q::int(jl), h)
    }

    #[test]
    fn charge_examples() {
        assert_eq!(central_charge(&d(3, Q::int(1), 2, 1)), z(2, -2));
        assert_eq!(central_charge(&ChargeDatum::points(5)), z(5, 0));
        assert_eq!(central_charge(&ChargeDatum::default()), z(0, 0));
    }

    #[test]
    fn h_minus_examples() {
        assert!(in_h_minus(&z(2, -2)));
        assert!(in_h_minus(&z(5, 0)));
        assert!(!in_h_minus(&z(0, 0)));
        assert!(!in_h_minus(&z(-1, 0)));
        assert!(!in_h_minus(&z(1, 1)));
    }

    #[test]
    fn slope_examples() {
        assert_eq!(slope(&z(2, -2)).unwrap(), Q::int(1));
        assert_eq!(slope(&z(-3, -1)).unwrap(), Q::int(-3));
        assert_eq!(slope(&z(5, 0)), Err(ChargeError::ZeroImaginary));
    }

    #[test]
    fn precedes_examples() {
        assert!(precedes(&z(1, -2), &z(5, -2)));
        assert!(precedes(&z(3, -1), &z(0, -2)));
        assert!(!precedes(&z(3, -1), &z(3, -1)));
    }

    #[test]
    fn verdict_examples() {
        let total = d(1, Q::zero(), 1, 1);
        let subs = [d(0, Q::zero(), 1, 1), d(1, Q::zero(), 2, 1)];
        assert_eq!(stability_verdict(&total, &subs).unwrap().verdict, Verdict::Stable);
        let subs = [d(0, Q::zero(), 1, 1), d(2, Q::zero(), 2, 1)];
        let v = stability_verdict(&total, &subs).unwrap();
        assert_eq!((v.verdict, v.witness_index), (Verdict::StrictlySemistable, Some(1)));
        let subs = [ChargeDatum::points(2)];
        let v = stability_verdict(&total, &subs).unwrap();
        assert_eq!((v.verdict, v.witness_index), (Verdict::Unstable, Some(0)));
        assert_eq!(stability_verdict(&total, &[]).unwrap().verdict, Verdict::Stable);
        assert_eq!(
            stability_verdict(&ChargeDatum::points(3), &[]),
            Err(ChargeError::DegenerateTotal)
        );
        assert_eq!(
            stability_verdict(&total, &[total.clone()]),
            Err(ChargeError::ImproperSubobject(0))
        );
    }

    #[test]
    fn point_sub_matches_small_epsilon_limit() {
        // a point-like sub of chi=2 seen as jl=eps has slope 2/eps, which
        // eventually beats any finite total slope
        let total_mu = Q::int(1);
        let eps_grid = (1..=50).map(|k| Q::new(1, k));
        let beats: Vec<bool> = eps_grid.map(|e| Q::int(2) / e > total_mu).collect();
        assert!(beats.iter().skip(10).all(|&b| b));
        let v = stability_verdict(&d(1, Q::zero(), 1, 1), &[ChargeDatum::points(2)]).unwrap();
        assert_eq!(v.verdict, Verdict::Unstable);
    }

    #[test]
    fn zero_subobjects_are_ignored() {
        let total = d(1, Q::zero(), 1, 1);
        let alone = stability_verdict(&total, &[]).unwrap();
        let with_zero = stability_verdict(&total, &[ChargeDatum::points(0)]).unwrap();
        assert_eq!(alone.verdict, with_zero.verdict);
    }

    #[test]
    fn lattice_examples() {
        let b = LatticeBasis::default();
        assert!(lattice_membership(&[z(0, 0)], &b).unwrap());
        assert!(lattice_membership(&[z(3, -2), z(0, -1)], &b).unwrap());
        assert!(!lattice_membership(&[ChargeValue::real(Q::new(1, 2))], &b).unwrap());
        let bad = LatticeBasis {
            generators: [z(1, 0), z(2, 0)],
        };
        assert_eq!(lattice_membership(&[z(0, 0)], &bad), Err(ChargeError::DegenerateBasis));
    }

    #[test]
    fn datum_json() {
        let d: ChargeDatum =
            serde_json::from_str(r#"{"chi":3,"b_beta":"1","jl_beta":"2","h_beta":1}"#).unwrap();
        assert_eq!(serde_json::to_string(&central_charge(&d)).unwrap(), r#"{"re":"2","im":"-2"}"#);
    }
}
