//! Exact row reduction over the rationals.
//!
//! Rows are cleared of denominators and eliminated fraction-free on `i128`
//! with checked arithmetic; anything that overflows is redone on big
//! rationals.

use num_integer::Integer;
use num_rational::{BigRational, Ratio};
use num_traits::{CheckedAdd, CheckedMul, ToPrimitive, Zero};

use crate::rational::Q;

pub(crate) type Small = Ratio<i128>;

/// Matrix entries the elimination accepts.
pub(crate) trait Scalar: Clone {
    fn zero() -> Self;
    fn one() -> Self;
    fn from_q(q: &Q) -> Option<Self>;
    fn add(&self, o: &Self) -> Option<Self>;
    fn mul(&self, o: &Self) -> Option<Self>;
    fn neg(&self) -> Option<Self>;
    fn to_big(&self) -> BigRational;
    /// The row times the lcm of its denominators, if that fits.
    fn integer_row(row: &[Self]) -> Option<Vec<i128>>;
}

impl Scalar for Small {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        Small::from_integer(1)
    }
    fn from_q(q: &Q) -> Option<Self> {
        Some(Small::new(q.0.numer().to_i128()?, q.0.denom().to_i128()?))
    }
    fn add(&self, o: &Self) -> Option<Self> {
        self.checked_add(o)
    }
    fn mul(&self, o: &Self) -> Option<Self> {
        self.checked_mul(o)
    }
    fn neg(&self) -> Option<Self> {
        Some(Small::new_raw(self.numer().checked_neg()?, *self.denom()))
    }
    fn to_big(&self) -> BigRational {
        BigRational::new((*self.numer()).into(), (*self.denom()).into())
    }
    fn integer_row(row: &[Self]) -> Option<Vec<i128>> {
        let mut l: i128 = 1;
        for x in row {
            let d = *x.denom();
            if d != 1 {
                l = (l / l.gcd(&d)).checked_mul(d)?;
            }
        }
        row.iter()
            .map(|x| (l / x.denom()).checked_mul(*x.numer()))
            .collect()
    }
}

impl Scalar for Q {
    fn zero() -> Self {
        Q::zero()
    }
    fn one() -> Self {
        Q::one()
    }
    fn from_q(q: &Q) -> Option<Self> {
        Some(q.clone())
    }
    fn add(&self, o: &Self) -> Option<Self> {
        Some(self + o)
    }
    fn mul(&self, o: &Self) -> Option<Self> {
        Some(self * o)
    }
    fn neg(&self) -> Option<Self> {
        Some(-self)
    }
    fn to_big(&self) -> BigRational {
        self.0.clone()
    }
    fn integer_row(row: &[Self]) -> Option<Vec<i128>> {
        let small: Option<Vec<Small>> = row.iter().map(Small::from_q).collect();
        Small::integer_row(&small?)
    }
}

/// Sequential pivoting on integer rows; each pivot row is reduced against
/// the earlier ones.
#[derive(Clone, Default)]
struct IntReducer {
    pivots: Vec<(usize, Vec<i128>)>,
}

impl IntReducer {
    fn push(&mut self, mut row: Vec<i128>) -> Option<bool> {
        for (col, prow) in &self.pivots {
            let f = row[*col];
            if f == 0 {
                continue;
            }
            let p = prow[*col];
            let g = f.gcd(&p);
            let (a, b) = (p / g, f / g);
            for (x, y) in row.iter_mut().zip(prow) {
                if *y != 0 {
                    *x = x.checked_mul(a)?.checked_sub((*y).checked_mul(b)?)?;
                } else if *x != 0 {
                    *x = x.checked_mul(a)?;
                }
            }
            let g = row.iter().fold(0i128, |g, x| g.gcd(x));
            if g > 1 {
                row.iter_mut().for_each(|x| *x /= g);
            }
        }
        let Some(col) = row.iter().position(|&x| x != 0) else {
            return Some(false);
        };
        self.pivots.push((col, row));
        Some(true)
    }
}

#[derive(Clone, Default)]
struct BigReducer {
    pivots: Vec<(usize, Vec<BigRational>)>,
}

impl BigReducer {
    fn push(&mut self, mut row: Vec<BigRational>) -> bool {
        for (col, prow) in &self.pivots {
            if row[*col].is_zero() {
                continue;
            }
            let f = row[*col].clone();
            for (x, y) in row.iter_mut().zip(prow) {
                if !y.is_zero() {
                    *x -= &f * y;
                }
            }
        }
        let Some(col) = row.iter().position(|x| !x.is_zero()) else {
            return false;
        };
        let p = row[col].clone();
        row.iter_mut().for_each(|x| *x /= &p);
        self.pivots.push((col, row));
        true
    }
}

#[derive(Clone)]
enum Backend {
    Int(IntReducer),
    Big(BigReducer),
}

fn int_build<S: Scalar>(rows: &[Vec<S>]) -> Option<IntReducer> {
    let mut r = IntReducer::default();
    for row in rows {
        r.push(S::integer_row(row)?)?;
    }
    Some(r)
}

fn big_build(rows: &[Vec<BigRational>]) -> BigReducer {
    let mut r = BigReducer::default();
    for row in rows {
        r.push(row.clone());
    }
    r
}

fn to_big<S: Scalar>(rows: &[Vec<S>]) -> Vec<Vec<BigRational>> {
    rows.iter().map(|r| r.iter().map(S::to_big).collect()).collect()
}

/// Row-reduced form of a rational matrix that can be extended with
/// extra rows without redoing the base elimination.
#[derive(Clone)]
pub struct Echelon {
    cols: usize,
    backend: Backend,
}

impl Echelon {
    pub fn new(cols: usize, rows: Vec<Vec<Q>>) -> Echelon {
        Echelon::from_rows(cols, rows)
    }

    pub(crate) fn from_rows<S: Scalar>(cols: usize, rows: Vec<Vec<S>>) -> Echelon {
        assert!(rows.iter().all(|r| r.len() == cols), "ragged matrix");
        match int_build(&rows) {
            Some(r) => Echelon {
                cols,
                backend: Backend::Int(r),
            },
            None => Echelon {
                cols,
                backend: Backend::Big(big_build(&to_big(&rows))),
            },
        }
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rank(&self) -> usize {
        match &self.backend {
            Backend::Int(r) => r.pivots.len(),
            Backend::Big(r) => r.pivots.len(),
        }
    }

    pub fn nullity(&self) -> usize {
        self.cols - self.rank()
    }

    /// Rank of the matrix with `extra` rows appended.
    pub fn rank_with(&self, extra: &[Vec<Q>]) -> usize {
        self.rank_with_rows(extra)
    }

    pub(crate) fn rank_with_rows<S: Scalar>(&self, extra: &[Vec<S>]) -> usize {
        assert!(extra.iter().all(|r| r.len() == self.cols), "ragged matrix");
        let base = match &self.backend {
            Backend::Int(r) => {
                let mut r = r.clone();
                let ok = extra
                    .iter()
                    .try_for_each(|row| r.push(S::integer_row(row)?).map(|_| ()));
                if ok.is_some() {
                    return r.pivots.len();
                }
                let rows: Vec<Vec<BigRational>> = r
                    .pivots
                    .iter()
                    .map(|(_, p)| p.iter().map(|&x| BigRational::from_integer(x.into())).collect())
                    .collect();
                big_build(&rows)
            }
            Backend::Big(r) => r.clone(),
        };
        let mut r = base;
        for row in to_big(extra) {
            r.push(row);
        }
        r.pivots.len()
    }
}

pub fn rank(rows: &[Vec<Q>]) -> usize {
    let cols = rows.first().map_or(0, Vec::len);
    Echelon::new(cols, rows.to_vec()).rank()
}

/// `det` of a 2x2 matrix followed by Cramer's rule.
pub fn solve2(a: [[&Q; 2]; 2], rhs: [&Q; 2]) -> Option<(Q, Q)> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det.is_zero() {
        return None;
    }
    let x = (rhs[0] * a[1][1] - a[0][1] * rhs[1]) / det.clone();
    let y = (a[0][0] * rhs[1] - rhs[0] * a[1][0]) / det;
    Some((x, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[i64]]) -> Vec<Vec<Q>> {
        rows.iter()
            .map(|r| r.iter().map(|&x| Q::int(x)).collect())
            .collect()
    }

    #[test]
    fn rank_small_cases() {
        assert_eq!(rank(&m(&[&[1, 2], &[2, 4]])), 1);
        assert_eq!(rank(&m(&[&[1, 2], &[2, 5]])), 2);
        assert_eq!(rank(&m(&[&[0, 0, 0]])), 0);
        assert_eq!(rank(&[]), 0);
        assert_eq!(rank(&m(&[&[1, 1, 1], &[1, 2, 4], &[1, 3, 9], &[1, 4, 16]])), 3);
    }

    #[test]
    fn overflow_falls_back() {
        let huge = i64::MAX;
        let rows = m(&[&[huge, huge - 1, 3], &[huge - 2, huge, 5], &[1, 1, 1]]);
        let e = Echelon::new(3, rows.clone());
        assert_eq!(e.rank(), big_build(&to_big(&rows)).pivots.len());
        let wide: Vec<Vec<Q>> = (0..6)
            .map(|i| (0..6).map(|j| Q::int(i64::MAX / (1 + i + j))).collect())
            .collect();
        assert_eq!(rank(&wide), big_build(&to_big(&wide)).pivots.len());
    }

    #[test]
    fn fractions_and_small_rows_agree() {
        let q = vec![vec![Q::new(1, 2), Q::new(1, 3)], vec![Q::new(3, 2), Q::one()]];
        assert_eq!(rank(&q), 1);
        let small: Vec<Vec<Small>> = q.iter().map(|r| r.iter().map(|x| Small::from_q(x).unwrap()).collect()).collect();
        let e = Echelon::from_rows(2, small);
        assert_eq!(e.rank(), 1);
        assert_eq!(e.rank_with(&[vec![Q::zero(), Q::new(5, 7)]]), 2);
    }

    #[test]
    fn rank_with_extends() {
        let e = Echelon::new(3, m(&[&[1, 0, 0]]));
        assert_eq!(e.rank_with(&m(&[&[2, 0, 0]])), 1);
        assert_eq!(e.rank_with(&m(&[&[0, 1, 0], &[0, 0, 1]])), 3);
        assert_eq!(e.nullity(), 2);
    }

    #[test]
    fn cramer() {
        let (one, two, three) = (Q::int(1), Q::int(2), Q::int(3));
        let (x, y) = solve2([[&one, &two], [&three, &one]], [&three, &Q::int(4)]).unwrap();
        assert_eq!((x, y), (Q::int(1), Q::int(1)));
        assert!(solve2([[&one, &two], [&two, &Q::int(4)]], [&one, &one]).is_none());
    }
}
