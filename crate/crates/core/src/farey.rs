//! Farey sequences via the next-term recurrence, and the BCZ map.
//!
//! Consecutive fractions `a/q < a'/q'` of the Farey sequence `F(Q)` satisfy
//! `a'q - aq' = 1` and `q + q' > Q`. The term after `a'/q'` is
//! `(Ka' - a)/(Kq' - q)` with `K = floor((Q + q)/q')`, and the scaled
//! denominators `(q/Q, q'/Q)` evolve under the BCZ map on the Farey triangle.

use std::cmp::Ordering;
use std::fmt;

use num_integer::Integer;
use num_rational::Ratio;

use crate::error::{Error, Result};

/// Exact rational with 64-bit parts, used for user-facing inputs.
pub type Rational = Ratio<i64>;

/// Largest supported Farey order; keeps every recurrence product inside `i64`.
pub const MAX_ORDER: i64 = 1 << 31;

/// A reduced fraction in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Fraction {
    num: i64,
    den: i64,
}

impl Fraction {
    pub const ZERO: Fraction = Fraction { num: 0, den: 1 };
    pub const ONE: Fraction = Fraction { num: 1, den: 1 };

    /// Builds `num/den` in lowest terms. Fails unless `0 <= num/den <= 1`.
    pub fn new(num: i64, den: i64) -> Result<Self> {
        if den <= 0 || num < 0 || num > den {
            return Err(Error::Domain(format!("{num}/{den} is not a fraction in [0,1]")));
        }
        let g = num.gcd(&den);
        Ok(Fraction { num: num / g, den: den / g })
    }

    /// Caller guarantees the fraction is reduced and in range.
    pub(crate) const fn from_reduced(num: i64, den: i64) -> Self {
        Fraction { num, den }
    }

    pub fn num(&self) -> i64 {
        self.num
    }

    pub fn den(&self) -> i64 {
        self.den
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn to_rational(&self) -> Rational {
        Ratio::new_raw(self.num, self.den)
    }

    /// Exact comparison against an arbitrary rational.
    pub fn cmp_rational(&self, x: &Rational) -> Ordering {
        cmp_fracs(self.num, self.den, *x.numer(), *x.denom())
    }
}

impl Ord for Fraction {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_fracs(self.num, self.den, other.num, other.den)
    }
}

impl PartialOrd for Fraction {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// Compares `a/b` with `c/d` for positive denominators.
pub(crate) fn cmp_fracs(a: i64, b: i64, c: i64, d: i64) -> Ordering {
    (a as i128 * d as i128).cmp(&(c as i128 * b as i128))
}

/// A pair of consecutive fractions `a/q < a'/q'` of `F(Q)`.
///
/// The successor of `1/1` is taken to be `(Q+1)/Q`, the next term of the
/// sequence continued periodically past 1, so that every element of `F(Q)`
/// carries a well-defined pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FareyPairState {
    a: i64,
    q: i64,
    next_a: i64,
    next_q: i64,
    order: i64,
}

impl FareyPairState {
    /// Validates unimodularity and the consecutive-pair conditions.
    pub fn new(a: i64, q: i64, next_a: i64, next_q: i64, order: i64) -> Result<Self> {
        check_order(order)?;
        let det = next_a as i128 * q as i128 - a as i128 * next_q as i128;
        let ok = a >= 0
            && a <= q
            && (1..=order).contains(&q)
            && (1..=order).contains(&next_q)
            && q + next_q > order
            && det == 1;
        if !ok {
            return Err(Error::Domain(format!(
                "({a}/{q}, {next_a}/{next_q}) is not a consecutive pair of F({order})"
            )));
        }
        Ok(FareyPairState { a, q, next_a, next_q, order })
    }

    pub fn a(&self) -> i64 {
        self.a
    }

    pub fn q(&self) -> i64 {
        self.q
    }

    pub fn next_a(&self) -> i64 {
        self.next_a
    }

    pub fn next_q(&self) -> i64 {
        self.next_q
    }

    pub fn order(&self) -> i64 {
        self.order
    }

    pub fn current(&self) -> Fraction {
        Fraction::from_reduced(self.a, self.q)
    }

    /// True once the stream has reached `1/1`.
    pub fn is_last(&self) -> bool {
        self.a == 1 && self.q == 1
    }
}

fn check_order(order: i64) -> Result<()> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(Error::Domain(format!("Farey order {order} outside [1, 2^31]")));
    }
    Ok(())
}

/// Successor of the reduced fraction `a/q` in `F(order)`.
fn successor(a: i64, q: i64, order: i64) -> (i64, i64) {
    // a' q - a q' = 1 forces a q' = -1 (mod q); take the largest such q' <= order.
    let base = if q == 1 {
        0
    } else {
        let inv = mod_inverse(a, q);
        (q - inv) % q
    };
    let next_q = base + q * ((order - base) / q);
    let next_a = ((1 + a as i128 * next_q as i128) / q as i128) as i64;
    (next_a, next_q)
}

fn mod_inverse(a: i64, m: i64) -> i64 {
    let e = (a as i128).extended_gcd(&(m as i128));
    debug_assert_eq!(e.gcd, 1);
    e.x.rem_euclid(m as i128) as i64
}

/// Positions a stream at the smallest element of `F(order)` that is `>= x0`.
pub fn farey_start(order: i64, x0: Rational) -> Result<FareyPairState> {
    check_order(order)?;
    let (xn, xd) = (*x0.numer(), *x0.denom());
    if xn < 0 || xn > xd {
        return Err(Error::Domain(format!("start point {x0} outside [0,1]")));
    }
    let (a, q) = if xd <= order {
        (xn, xd)
    } else {
        ceiling_in_farey(xn, xd, order)
    };
    let (next_a, next_q) = successor(a, q, order);
    Ok(FareyPairState { a, q, next_a, next_q, order })
}

/// Smallest fraction of `F(order)` above `xn/xd`, where `xd > order`.
///
/// Stern–Brocot descent with runs of identical moves collapsed into one step.
fn ceiling_in_farey(xn: i64, xd: i64, order: i64) -> (i64, i64) {
    let (xn, xd) = (xn as i128, xd as i128);
    let order = order as i128;
    let (mut ln, mut ld) = (0i128, 1i128);
    let (mut hn, mut hd) = (1i128, 1i128);
    loop {
        let (mn, md) = (ln + hn, ld + hd);
        if md > order {
            break;
        }
        if mn * xd < xn * md {
            // Mediant below x: move lo towards hi as far as the bound and x allow.
            let gap_lo = xn * ld - ln * xd;
            let gap_hi = hn * xd - xn * hd;
            let k_x = (gap_lo + gap_hi - 1) / gap_hi - 1;
            let k = k_x.min((order - ld) / hd).max(1);
            ln += k * hn;
            ld += k * hd;
        } else {
            let gap_hi = hn * xd - xn * hd;
            let gap_lo = xn * ld - ln * xd;
            let k_x = (gap_hi + gap_lo - 1) / gap_lo - 1;
            let k = k_x.min((order - hd) / ld).max(1);
            hn += k * ln;
            hd += k * ld;
        }
    }
    (hn as i64, hd as i64)
}

/// Advances to the next consecutive pair; saturates once the current fraction is `1/1`.
pub fn farey_next(s: FareyPairState) -> FareyPairState {
    if s.is_last() {
        return s;
    }
    let k = (s.order + s.q) / s.next_q;
    FareyPairState {
        a: s.next_a,
        q: s.next_q,
        next_a: k * s.next_a - s.a,
        next_q: k * s.next_q - s.q,
        order: s.order,
    }
}

/// Iterates the pairs of `F(Q)` whose current fraction lies in a range.
#[derive(Clone, Debug)]
pub struct FareySweep {
    state: Option<FareyPairState>,
    upper: Rational,
    upper_inclusive: bool,
}

impl FareySweep {
    /// All of `F(order)`, from `0/1` to `1/1`.
    pub fn full(order: i64) -> Result<Self> {
        Self::closed(order, Rational::from_integer(0), Rational::from_integer(1))
    }

    /// Fractions in the closed interval `[lo, hi]`.
    pub fn closed(order: i64, lo: Rational, hi: Rational) -> Result<Self> {
        Ok(FareySweep { state: Some(farey_start(order, lo)?), upper: hi, upper_inclusive: true })
    }

    /// Fractions in `[lo, hi)`.
    pub fn half_open(order: i64, lo: Rational, hi: Rational) -> Result<Self> {
        Ok(FareySweep { state: Some(farey_start(order, lo)?), upper: hi, upper_inclusive: false })
    }
}

impl Iterator for FareySweep {
    type Item = FareyPairState;

    fn next(&mut self) -> Option<FareyPairState> {
        let s = self.state?;
        let within = match s.current().cmp_rational(&self.upper) {
            Ordering::Less => true,
            Ordering::Equal => self.upper_inclusive,
            Ordering::Greater => false,
        };
        if !within {
            self.state = None;
            return None;
        }
        self.state = if s.is_last() { None } else { Some(farey_next(s)) };
        Some(s)
    }
}

impl std::iter::FusedIterator for FareySweep {}

/// A point `(a, b)` of the Farey triangle `0 < a, b <= 1`, `a + b > 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrianglePoint {
    pub a: f64,
    pub b: f64,
}

impl TrianglePoint {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !in_triangle(a, b) {
            return Err(Error::Domain(format!("({a}, {b}) is outside the Farey triangle")));
        }
        Ok(TrianglePoint { a, b })
    }
}

pub fn in_triangle(a: f64, b: f64) -> bool {
    a > 0.0 && a <= 1.0 && b > 0.0 && b <= 1.0 && a + b > 1.0
}

/// The BCZ map `T(a,b) = (b, floor((1+a)/b) b - a)`.
pub fn bcz(p: TrianglePoint) -> TrianglePoint {
    let (_, a, b) = bcz_with_index(p.a, p.b);
    TrianglePoint { a, b }
}

/// BCZ step returning the index `K = floor((1+a)/b)` alongside the image.
///
/// `K` is the largest integer with `Kb - a <= 1`; the quotient estimate is
/// corrected against that inequality so rounding cannot push the image out
/// of the triangle.
pub(crate) fn bcz_with_index(a: f64, b: f64) -> (f64, f64, f64) {
    let mut k = ((1.0 + a) / b).floor().max(1.0);
    for _ in 0..4 {
        if k * b - a > 1.0 {
            k -= 1.0;
        } else if b + (k * b - a) <= 1.0 {
            k += 1.0;
        } else {
            break;
        }
    }
    (k, b, k * b - a)
}

/// Exact BCZ step on Farey points: `(q_i, q_{i+1}) -> (q_{i+1}, q_{i+2})` for order `Q`.
pub fn bcz_exact(q_i: i64, q_next: i64, order: i64) -> Result<(i64, i64)> {
    if q_next <= 0 {
        return Err(Error::Domain(format!("denominator {q_next} must be positive")));
    }
    let k = order.checked_add(q_i).ok_or(Error::Overflow("bcz_exact"))? / q_next;
    let q2 = k
        .checked_mul(q_next)
        .and_then(|v| v.checked_sub(q_i))
        .ok_or(Error::Overflow("bcz_exact"))?;
    Ok((q_next, q2))
}
