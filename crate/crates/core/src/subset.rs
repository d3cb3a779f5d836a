//! Streaming enumeration of `F_{I,M}(Q) = F_M(Q) ∩ I` and its gap records.

use std::cmp::Ordering;

use num_rational::Ratio;
use rayon::prelude::*;

use crate::congruence::CosetSubset;
use crate::error::{Error, Result};
use crate::farey::{FareyPairState, FareySweep, Fraction, Rational};

/// A closed subinterval `[lo, hi]` of `[0, 1]` with rational endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Subinterval {
    lo: Rational,
    hi: Rational,
}

impl Subinterval {
    pub fn new(lo: Rational, hi: Rational) -> Result<Self> {
        let zero = Rational::from_integer(0);
        let one = Rational::from_integer(1);
        if lo < zero || hi > one || lo > hi {
            return Err(Error::Domain(format!("[{lo}, {hi}] is not a nonempty subinterval of [0,1]")));
        }
        Ok(Subinterval { lo, hi })
    }

    pub fn unit() -> Self {
        Subinterval { lo: Rational::from_integer(0), hi: Rational::from_integer(1) }
    }

    pub fn lo(&self) -> Rational {
        self.lo
    }

    pub fn hi(&self) -> Rational {
        self.hi
    }

    pub fn length(&self) -> Rational {
        self.hi - self.lo
    }

    pub fn contains(&self, x: &Fraction) -> bool {
        x.cmp_rational(&self.lo) != Ordering::Less && x.cmp_rational(&self.hi) != Ordering::Greater
    }

    /// Cut points `lo = x_0 < x_1 < ... < x_k = hi` of `k` equal pieces.
    fn cuts(&self, k: usize) -> Vec<Rational> {
        let k = k.max(1) as i64;
        (0..=k).map(|i| self.lo + self.length() * Rational::new(i, k)).collect()
    }
}

/// Which fractions to stream: order `Q`, interval `I` and coset subset `M`.
#[derive(Clone, Copy, Debug)]
pub struct SubsetQuery<'a> {
    pub order: i64,
    pub interval: Subinterval,
    pub cosets: &'a CosetSubset,
}

impl<'a> SubsetQuery<'a> {
    pub fn new(order: i64, interval: Subinterval, cosets: &'a CosetSubset) -> Self {
        SubsetQuery { order, interval, cosets }
    }

    /// The whole of `[0, 1]`.
    pub fn unit(order: i64, cosets: &'a CosetSubset) -> Self {
        Self::new(order, Subinterval::unit(), cosets)
    }
}

/// Retained fractions in increasing order, each with its full `F(Q)` pair.
pub struct SubsetStream<'a> {
    sweep: FareySweep,
    cosets: &'a CosetSubset,
}

impl Iterator for SubsetStream<'_> {
    type Item = FareyPairState;

    fn next(&mut self) -> Option<FareyPairState> {
        let cosets = self.cosets;
        self.sweep.by_ref().find(|s| cosets.admits(s))
    }
}

pub fn stream_subset<'a>(query: &SubsetQuery<'a>) -> Result<SubsetStream<'a>> {
    let sweep = FareySweep::closed(query.order, query.interval.lo, query.interval.hi)?;
    Ok(SubsetStream { sweep, cosets: query.cosets })
}

fn stream_range<'a>(query: &SubsetQuery<'a>, lo: Rational, hi: Rational, closed: bool) -> Result<SubsetStream<'a>> {
    let sweep = if closed {
        FareySweep::closed(query.order, lo, hi)?
    } else {
        FareySweep::half_open(query.order, lo, hi)?
    };
    Ok(SubsetStream { sweep, cosets: query.cosets })
}

/// Consecutive retained fractions `a/q < b/p` with their exact gap data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubsetGapRecord {
    pub beta: Fraction,
    pub beta_next: Fraction,
    /// `bq - ap`.
    pub numerator_diff: i64,
    pub order: i64,
}

impl SubsetGapRecord {
    pub fn between(prev: &FareyPairState, next: &FareyPairState) -> Self {
        let (beta, beta_next) = (prev.current(), next.current());
        let diff = beta_next.num() as i128 * beta.den() as i128 - beta.num() as i128 * beta_next.den() as i128;
        SubsetGapRecord { beta, beta_next, numerator_diff: diff as i64, order: prev.order() }
    }

    /// `q p`, the product of the two denominators.
    pub fn den_product(&self) -> i128 {
        self.beta.den() as i128 * self.beta_next.den() as i128
    }

    /// `β_{i+1} - β_i`.
    pub fn gap(&self) -> Ratio<i128> {
        Ratio::new(self.numerator_diff as i128, self.den_product())
    }

    /// `Q² (β_{i+1} - β_i)`.
    pub fn scaled_gap(&self) -> Ratio<i128> {
        let q2 = self.order as i128 * self.order as i128;
        Ratio::new(q2 * self.numerator_diff as i128, self.den_product())
    }

    pub fn gap_f64(&self) -> f64 {
        self.numerator_diff as f64 / self.den_product() as f64
    }

    pub fn scaled_gap_f64(&self) -> f64 {
        let q2 = self.order as i128 * self.order as i128;
        (q2 * self.numerator_diff as i128) as f64 / self.den_product() as f64
    }
}

/// Gap records of consecutive retained fractions.
pub struct GapRecords<'a> {
    stream: SubsetStream<'a>,
    prev: Option<FareyPairState>,
}

impl Iterator for GapRecords<'_> {
    type Item = SubsetGapRecord;

    fn next(&mut self) -> Option<SubsetGapRecord> {
        let next = self.stream.next()?;
        let prev = self.prev.replace(next)?;
        Some(SubsetGapRecord::between(&prev, &next))
    }
}

pub fn gap_records<'a>(query: &SubsetQuery<'a>) -> Result<GapRecords<'a>> {
    let mut stream = stream_subset(query)?;
    let prev = stream.next();
    Ok(GapRecords { stream, prev })
}

/// Number of retained fractions and the largest unscaled gap between them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubsetCount {
    pub count: u64,
    pub max_gap: Ratio<i64>,
}

pub fn count_subset(query: &SubsetQuery) -> Result<SubsetCount> {
    let mut count = 0u64;
    let mut max_gap = (0i64, 1i64);
    let mut prev: Option<FareyPairState> = None;
    for s in stream_subset(query)? {
        count += 1;
        if let Some(p) = prev {
            let r = SubsetGapRecord::between(&p, &s);
            let den = r.den_product() as i64;
            if crate::farey::cmp_fracs(r.numerator_diff, den, max_gap.0, max_gap.1) == Ordering::Greater {
                max_gap = (r.numerator_diff, den);
            }
        }
        prev = Some(s);
    }
    Ok(SubsetCount { count, max_gap: Ratio::new(max_gap.0, max_gap.1) })
}

/// Folds every gap record of `query` through independent interval shards.
///
/// The interval is cut into `shards` equal pieces, each streamed on its own
/// (in parallel when a rayon pool is available). Shard results are merged in
/// interval order, and the record spanning each cut is folded exactly once
/// between the two shards, so the outcome does not depend on scheduling.
/// Returns the accumulator and the number of retained fractions.
pub fn fold_gaps_sharded<A, I, F, M>(
    query: &SubsetQuery,
    shards: usize,
    init: I,
    fold: F,
    merge: M,
) -> Result<(A, u64)>
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, &SubsetGapRecord) + Sync,
    M: Fn(&mut A, A),
{
    struct Shard<A> {
        acc: A,
        first: Option<FareyPairState>,
        last: Option<FareyPairState>,
        count: u64,
    }

    let cuts = query.interval.cuts(shards);
    let pieces: Vec<(Rational, Rational, bool)> =
        cuts.windows(2).enumerate().map(|(i, w)| (w[0], w[1], i + 2 == cuts.len())).collect();
    let results: Vec<Result<Shard<A>>> = pieces
        .par_iter()
        .map(|&(lo, hi, closed)| {
            let mut acc = init();
            let (mut first, mut last, mut count) = (None, None::<FareyPairState>, 0u64);
            for s in stream_range(query, lo, hi, closed)? {
                count += 1;
                match last {
                    Some(p) => fold(&mut acc, &SubsetGapRecord::between(&p, &s)),
                    None => first = Some(s),
                }
                last = Some(s);
            }
            Ok(Shard { acc, first, last, count })
        })
        .collect();

    let mut total = init();
    let mut prev_last: Option<FareyPairState> = None;
    let mut count = 0;
    for shard in results {
        let shard = shard?;
        if let (Some(p), Some(f)) = (prev_last, shard.first) {
            fold(&mut total, &SubsetGapRecord::between(&p, &f));
        }
        merge(&mut total, shard.acc);
        prev_last = shard.last.or(prev_last);
        count += shard.count;
    }
    Ok((total, count))
}
