//! Exact measures of the Erdős–Szüsz–Turán sets and their section-based limit.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::{self, Write};

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::Serialize;

use crate::congruence::CosetSubset;
use crate::error::{Error, Result};
use crate::farey::{FareySweep, Rational};
use crate::section::{check_truncation, run_batches, sample_section, McConfig, ReturnOrbit};
use crate::stats::fmt_float;
use crate::subset::Subinterval;

/// A closed interval with exact rational endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Interval {
    lo: Ratio<i128>,
    hi: Ratio<i128>,
}

impl Interval {
    pub fn new(lo: Ratio<i128>, hi: Ratio<i128>) -> Result<Self> {
        if lo > hi {
            return Err(Error::Domain(format!("interval [{lo}, {hi}] is reversed")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn lo(&self) -> Ratio<i128> {
        self.lo
    }

    pub fn hi(&self) -> Ratio<i128> {
        self.hi
    }
}

/// Sorted, pairwise disjoint, non-touching intervals.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IntervalUnion {
    parts: Vec<Interval>,
}

impl IntervalUnion {
    pub fn empty() -> Self {
        IntervalUnion::default()
    }

    pub fn from_intervals(intervals: impl IntoIterator<Item = Interval>) -> Self {
        let mut v: Vec<Interval> = intervals.into_iter().collect();
        v.sort_by_key(|x| x.lo);
        let mut parts: Vec<Interval> = Vec::with_capacity(v.len());
        for i in v {
            match parts.last_mut() {
                Some(last) if i.lo <= last.hi => last.hi = last.hi.max(i.hi),
                _ => parts.push(i),
            }
        }
        IntervalUnion { parts }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.parts
    }

    pub fn union(&self, other: &IntervalUnion) -> IntervalUnion {
        IntervalUnion::from_intervals(self.parts.iter().chain(&other.parts).copied())
    }

    /// Total length, exactly.
    pub fn measure(&self) -> BigRational {
        let mut sum = ExactSum::default();
        for i in &self.parts {
            sum.add(*i.hi.numer(), *i.hi.denom());
            sum.add(-*i.lo.numer(), *i.lo.denom());
        }
        sum.finish()
    }
}

/// Sum of many rationals, grouped by denominator so big-number work is paid once per denominator.
#[derive(Default)]
struct ExactSum {
    by_den: HashMap<i128, i128>,
    spill: BigRational,
}

impl ExactSum {
    fn add(&mut self, num: i128, den: i128) {
        let slot = self.by_den.entry(den).or_insert(0);
        match slot.checked_add(num) {
            Some(v) => *slot = v,
            None => self.spill += BigRational::new(BigInt::from(num), BigInt::from(den)),
        }
    }

    fn finish(self) -> BigRational {
        let mut dens: Vec<_> = self.by_den.into_iter().filter(|(_, n)| *n != 0).collect();
        dens.sort_unstable();
        dens.into_iter()
            .fold(self.spill, |acc, (d, n)| acc + BigRational::new(BigInt::from(n), BigInt::from(d)))
    }
}

/// An unreduced rational endpoint `num/den`, `den > 0`.
#[derive(Clone, Copy, Debug)]
struct Ep {
    num: i128,
    den: i128,
}

impl Ep {
    fn of(r: Rational) -> Self {
        Ep { num: *r.numer() as i128, den: *r.denom() as i128 }
    }

    fn cmp(&self, other: &Ep) -> Ordering {
        match (self.num.checked_mul(other.den), other.num.checked_mul(self.den)) {
            (Some(x), Some(y)) => x.cmp(&y),
            _ => (BigInt::from(self.num) * BigInt::from(other.den)).cmp(&(BigInt::from(other.num) * BigInt::from(self.den))),
        }
    }

    fn lt(&self, other: &Ep) -> bool {
        self.cmp(other) == Ordering::Less
    }

    fn max(self, other: Ep) -> Ep {
        if self.lt(&other) {
            other
        } else {
            self
        }
    }

    fn min(self, other: Ep) -> Ep {
        if other.lt(&self) {
            other
        } else {
            self
        }
    }
}

trait Sink {
    fn component(&mut self, lo: Ep, hi: Ep);
}

impl Sink for Vec<Interval> {
    fn component(&mut self, lo: Ep, hi: Ep) {
        self.push(Interval { lo: Ratio::new(lo.num, lo.den), hi: Ratio::new(hi.num, hi.den) });
    }
}

impl Sink for ExactSum {
    fn component(&mut self, lo: Ep, hi: Ep) {
        self.add(hi.num, hi.den);
        self.add(-lo.num, lo.den);
    }
}

/// Streaming union of intervals whose left ends never drop below a moving floor.
struct UnionBuilder<S> {
    active: Vec<(Ep, Ep)>,
    sink: S,
}

impl<S: Sink> UnionBuilder<S> {
    fn new(sink: S) -> Self {
        UnionBuilder { active: Vec::new(), sink }
    }

    fn insert(&mut self, mut lo: Ep, mut hi: Ep) {
        // Components touching [lo, hi] form a contiguous run of `active`.
        let start = self.active.iter().position(|(_, h)| !h.lt(&lo)).unwrap_or(self.active.len());
        let mut end = start;
        while end < self.active.len() && !hi.lt(&self.active[end].0) {
            lo = lo.min(self.active[end].0);
            hi = hi.max(self.active[end].1);
            end += 1;
        }
        self.active.splice(start..end, [(lo, hi)]);
    }

    /// Emits components ending strictly before `floor`; no later interval can reach them.
    fn settle(&mut self, floor: &Ep) {
        let done = self.active.iter().take_while(|(_, h)| h.lt(floor)).count();
        for (lo, hi) in self.active.drain(..done) {
            self.sink.component(lo, hi);
        }
    }

    fn finish(mut self) -> S {
        for (lo, hi) in std::mem::take(&mut self.active) {
            self.sink.component(lo, hi);
        }
        self.sink
    }
}

/// Parameters of `S_{I,M}(n, α, c)`.
#[derive(Clone, Copy, Debug)]
pub struct EstConfig<'a> {
    pub n: i64,
    pub alpha: Rational,
    pub c: Rational,
    pub cosets: &'a CosetSubset,
    pub interval: Subinterval,
}

impl<'a> EstConfig<'a> {
    pub fn new(n: i64, alpha: Rational, c: Rational, cosets: &'a CosetSubset, interval: Subinterval) -> Result<Self> {
        if n < 1 {
            return Err(Error::Domain(format!("n must be positive, got {n}")));
        }
        if alpha <= Rational::from_integer(0) {
            return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
        }
        if c < Rational::from_integer(1) {
            return Err(Error::Domain(format!("c must be at least 1, got {c}")));
        }
        let cfg = EstConfig { n, alpha, c, cosets, interval };
        let order = cfg.order()?;
        let bound = 1i128 << 60;
        let den = *alpha.denom() as i128 * order as i128 * order as i128;
        if den > bound || (*alpha.numer() as i128) > bound {
            return Err(Error::Overflow("EST configuration"));
        }
        Ok(cfg)
    }

    /// `Q = floor(n c)`.
    pub fn order(&self) -> Result<i64> {
        let q = (Ratio::new(self.n as i128, 1) * Ratio::new(*self.c.numer() as i128, *self.c.denom() as i128)).floor();
        let q = q.to_integer();
        if q < 1 {
            return Err(Error::Domain(format!("Q = floor(nc) = {q} is below 1")));
        }
        i64::try_from(q).map_err(|_| Error::Overflow("Q = floor(nc)"))
    }

    fn stream_into<S: Sink>(&self, sink: S) -> Result<S> {
        let order = self.order()?;
        let (p, r) = (*self.alpha.numer() as i128, *self.alpha.denom() as i128);
        let n2 = self.n as i128 * self.n as i128;
        let reach = Rational::new(*self.alpha.numer(), *self.alpha.denom()) / Rational::from_integer(self.n) / Rational::from_integer(self.n);
        let zero = Rational::from_integer(0);
        let one = Rational::from_integer(1);
        let from = (self.interval.lo() - reach).max(zero);
        let to = (self.interval.hi() + reach).min(one);
        let (clip_lo, clip_hi) = (Ep::of(self.interval.lo()), Ep::of(self.interval.hi()));

        let mut builder = UnionBuilder::new(sink);
        for s in FareySweep::closed(order, from, to)? {
            if s.q() < self.n || !self.cosets.admits(&s) {
                continue;
            }
            let (a, q) = (s.a() as i128, s.q() as i128);
            let den = r * q * q;
            let lo = Ep { num: a * q * r - p, den }.max(clip_lo);
            let hi = Ep { num: a * q * r + p, den }.min(clip_hi);
            builder.settle(&Ep { num: a * n2 * r - p * q, den: q * n2 * r });
            if !hi.lt(&lo) {
                builder.insert(lo, hi);
            }
        }
        Ok(builder.finish())
    }
}

/// `S_{I,M}(n, α, c)` as an explicit interval union.
pub fn build_est_union(cfg: &EstConfig) -> Result<IntervalUnion> {
    Ok(IntervalUnion { parts: cfg.stream_into(Vec::new())? })
}

/// `λ(S_{I,M}(n, α, c))` without materializing the union.
pub fn est_measure(cfg: &EstConfig) -> Result<BigRational> {
    Ok(cfg.stream_into(ExactSum::default())?.finish())
}

pub fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Convergence {
    pub rows: Vec<(i64, BigRational)>,
    /// Value at the largest `n`.
    pub limit: f64,
    /// Difference of the last two values.
    pub delta: Option<f64>,
}

impl Convergence {
    /// Writes `n,lambda,delta` rows; `lambda` is exact, `delta` is the step from the previous row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "n,lambda,delta")?;
        let mut prev: Option<&BigRational> = None;
        for (n, v) in &self.rows {
            let delta = prev.map(|p| fmt_float(to_f64(&(v - p)))).unwrap_or_default();
            writeln!(w, "{n},{v},{delta}")?;
            prev = Some(v);
        }
        Ok(())
    }
}

pub fn est_convergence(
    alpha: Rational,
    c: Rational,
    cosets: &CosetSubset,
    interval: Subinterval,
    n_grid: &[i64],
) -> Result<Convergence> {
    if n_grid.is_empty() {
        return Err(Error::Empty("n grid"));
    }
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("n grid must be strictly increasing".into()));
    }
    let configs = n_grid
        .iter()
        .map(|&n| EstConfig::new(n, alpha, c, cosets, interval))
        .collect::<Result<Vec<_>>>()?;
    let values = configs.par_iter().map(est_measure).collect::<Result<Vec<_>>>()?;
    let rows: Vec<(i64, BigRational)> = n_grid.iter().copied().zip(values).collect();
    let limit = to_f64(&rows[rows.len() - 1].1);
    let delta = (rows.len() >= 2).then(|| to_f64(&(&rows[rows.len() - 1].1 - &rows[rows.len() - 2].1)));
    Ok(Convergence { rows, limit, delta })
}

/// Largest index separation `j` in `F_M(Q)` with `J(β_i) ∩ J(β_{i+j}) ≠ ∅`, both with `q >= n`.
pub fn detect_overlap_depth(alpha: Rational, c: Rational, cosets: &CosetSubset, n: i64) -> Result<usize> {
    let cfg = EstConfig::new(n, alpha, c, cosets, Subinterval::unit())?;
    let order = cfg.order()?;
    let (p, r) = (*alpha.numer() as i128, *alpha.denom() as i128);
    let n2 = n as i128 * n as i128;
    // (index, right end) with right ends increasing.
    let mut records: Vec<(usize, Ep)> = Vec::new();
    let mut first = 0usize;
    let mut depth = 0;
    let retained = FareySweep::full(order)?.filter(|s| cosets.admits(s));
    for (j, s) in retained.enumerate() {
        if s.q() < n {
            continue;
        }
        let (a, q) = (s.a() as i128, s.q() as i128);
        let den = r * q * q;
        let (lo, hi) = (Ep { num: a * q * r - p, den }, Ep { num: a * q * r + p, den });
        let floor = Ep { num: a * n2 * r - p * q, den: q * n2 * r };
        while first < records.len() && records[first].1.lt(&floor) {
            first += 1;
        }
        let live = &records[first..];
        let k = live.partition_point(|(_, h)| h.lt(&lo));
        if let Some((i, _)) = live.get(k) {
            depth = depth.max(j - i);
        }
        if records.last().is_none_or(|(_, h)| h.lt(&hi)) {
            records.push((j, hi));
        }
    }
    Ok(depth)
}

/// Largest depth the section estimator enumerates (`2^K` index sets per sample).
pub const MAX_SECTION_DEPTH: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SectionEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub depth: usize,
    pub samples: u64,
    pub truncated: u64,
}

/// Monte Carlo estimate of `ϱ_M(α, c)` from the inclusion-exclusion over return indices `0 = j_0 < ... <= K`.
pub fn est_limit_section_mc(
    alpha: f64,
    c: f64,
    cosets: &CosetSubset,
    depth: usize,
    cfg: &McConfig,
) -> Result<SectionEstimate> {
    if alpha.is_nan() || alpha <= 0.0 || c.is_nan() || c < 1.0 {
        return Err(Error::Domain(format!("need alpha > 0 and c >= 1, got alpha={alpha}, c={c}")));
    }
    if depth > MAX_SECTION_DEPTH {
        return Err(Error::Domain(format!("overlap depth {depth} exceeds {MAX_SECTION_DEPTH}")));
    }
    if cfg.samples == 0 {
        return Err(Error::Domain("at least one sample is required".into()));
    }
    let t = 1.0 / c;
    let batches = run_batches(cfg, |rng, count| {
        let (mut sum, mut sum2, mut kept, mut truncated) = (0.0, 0.0, 0u64, 0u64);
        let mut js = Vec::with_capacity(depth + 1);
        'sample: for _ in 0..count {
            let p = sample_section(rng, cosets);
            let mut value = 0.0;
            if p.a() >= t {
                let mut orbit = ReturnOrbit::new(p, cosets, cfg.max_steps)?;
                for mask in 0u32..(1 << depth) {
                    js.clear();
                    js.push(0);
                    js.extend((1..=depth).filter(|j| mask & (1 << (j - 1)) != 0));
                    let term = match orbit.in_h_region(&js, t) {
                        Ok(true) => orbit.f_alpha(&js, alpha),
                        Ok(false) => Ok(0.0),
                        Err(e) => Err(e),
                    };
                    match term {
                        Ok(f) => value += if mask.count_ones() % 2 == 0 { f } else { -f },
                        Err(Error::Truncated { .. }) => {
                            truncated += 1;
                            continue 'sample;
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            sum += value;
            sum2 += value * value;
            kept += 1;
        }
        Ok((sum, sum2, kept, truncated))
    });
    let (mut sum, mut sum2, mut kept, mut truncated) = (0.0, 0.0, 0u64, 0u64);
    for b in batches {
        let (s, s2, k, t) = b?;
        sum += s;
        sum2 += s2;
        kept += k;
        truncated += t;
    }
    check_truncation(truncated, cfg.samples)?;
    if kept == 0 {
        return Err(Error::Empty("section samples"));
    }
    let mean = sum / kept as f64;
    let var = if kept > 1 { (sum2 - kept as f64 * mean * mean).max(0.0) / (kept - 1) as f64 } else { 0.0 };
    let scale = cosets.density_constant();
    Ok(SectionEstimate {
        estimate: scale * mean,
        stderr: scale * (var / kept as f64).sqrt(),
        depth,
        samples: cfg.samples,
        truncated,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct EstRow {
    pub n: i64,
    pub lambda: String,
    pub lambda_f64: f64,
    pub delta: Option<f64>,
}

/// The JSON report of an EST computation.
#[derive(Clone, Debug, Serialize)]
pub struct EstReport {
    pub alpha: String,
    pub c: String,
    pub m: u32,
    pub subset: String,
    #[serde(rename = "I")]
    pub interval: [String; 2],
    pub table: Vec<EstRow>,
    pub limit_estimate: f64,
    #[serde(rename = "K_detected")]
    pub k_detected: usize,
    pub section_mc_estimate: Option<f64>,
    pub mc_stderr: Option<f64>,
}

impl EstRow {
    pub fn table(conv: &Convergence) -> Vec<EstRow> {
        let mut prev: Option<&BigRational> = None;
        conv.rows
            .iter()
            .map(|(n, v)| {
                let row = EstRow { n: *n, lambda: v.to_string(), lambda_f64: to_f64(v), delta: prev.map(|p| to_f64(&(v - p))) };
                prev = Some(v);
                row
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::congruence::{from_residue_pairs, ResiduePairSet};
    use crate::subset::{stream_subset, SubsetQuery};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn den_one(m: u32) -> CosetSubset {
        from_residue_pairs(&ResiduePairSet::den_congruent(m, 1).unwrap()).unwrap()
    }

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    fn big(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn ri(n: i128, d: i128) -> Ratio<i128> {
        Ratio::new(n, d)
    }

    /// Every interval listed, clipped, then merged by the plain sort-and-sweep union.
    fn naive_union(cfg: &EstConfig) -> IntervalUnion {
        let q = cfg.order().unwrap();
        let alpha = ri(*cfg.alpha.numer() as i128, *cfg.alpha.denom() as i128);
        let (ilo, ihi) = (cfg.interval.lo(), cfg.interval.hi());
        let (ilo, ihi) = (ri(*ilo.numer() as i128, *ilo.denom() as i128), ri(*ihi.numer() as i128, *ihi.denom() as i128));
        let parts = stream_subset(&SubsetQuery::unit(q, cfg.cosets))
            .unwrap()
            .filter(|s| s.q() >= cfg.n)
            .filter_map(|s| {
                let beta = ri(s.a() as i128, s.q() as i128);
                let w = alpha / (s.q() as i128 * s.q() as i128);
                let (lo, hi) = ((beta - w).max(ilo), (beta + w).min(ihi));
                (lo <= hi).then(|| Interval::new(lo, hi).unwrap())
            });
        IntervalUnion::from_intervals(parts)
    }

    /// `Σ_{n <= q <= nc} 2α φ(q)/q²`, the measure with all overlaps ignored.
    fn totient_sum(alpha: f64, n: usize, order: usize) -> f64 {
        let mut phi: Vec<usize> = (0..=order).collect();
        for p in 2..=order {
            if phi[p] == p {
                for k in (p..=order).step_by(p) {
                    phi[k] -= phi[k] / p;
                }
            }
        }
        (n..=order).map(|q| 2.0 * alpha * phi[q] as f64 / (q * q) as f64).sum()
    }

    #[test]
    fn build_examples() {
        let all = CosetSubset::trivial();
        let cfg = EstConfig::new(1, r(1, 10), r(2, 1), &all, Subinterval::unit()).unwrap();
        let u = build_est_union(&cfg).unwrap();
        let expect = [(ri(0, 1), ri(1, 10)), (ri(19, 40), ri(21, 40)), (ri(9, 10), ri(1, 1))];
        assert_eq!(u.intervals().iter().map(|i| (i.lo(), i.hi())).collect::<Vec<_>>(), expect);
        assert_eq!(u.measure(), big(1, 4));
        assert_eq!(est_measure(&cfg).unwrap(), big(1, 4));

        let cover = EstConfig::new(1, r(1, 2), r(1, 1), &all, Subinterval::unit()).unwrap();
        assert_eq!(est_measure(&cover).unwrap(), big(1, 1));

        let single = EstConfig::new(2, r(1, 100), r(1, 1), &all, Subinterval::unit()).unwrap();
        assert_eq!(est_measure(&single).unwrap(), big(1, 200));
    }

    #[test]
    fn config_validation() {
        let all = CosetSubset::trivial();
        let i = Subinterval::unit();
        assert!(EstConfig::new(0, r(1, 10), r(2, 1), &all, i).is_err());
        assert!(EstConfig::new(5, r(0, 1), r(2, 1), &all, i).is_err());
        assert!(EstConfig::new(5, r(1, 10), r(1, 2), &all, i).is_err());
        assert_eq!(EstConfig::new(5, r(1, 10), r(5, 2), &all, i).unwrap().order().unwrap(), 12);
    }

    #[test]
    fn measure_examples() {
        assert_eq!(IntervalUnion::empty().measure(), big(0, 1));
        let u = IntervalUnion::from_intervals([
            Interval::new(ri(1, 2), ri(1, 1)).unwrap(),
            Interval::new(ri(0, 1), ri(1, 4)).unwrap(),
        ]);
        assert_eq!(u.measure(), big(3, 4));
        let touching = IntervalUnion::from_intervals([
            Interval::new(ri(0, 1), ri(1, 4)).unwrap(),
            Interval::new(ri(1, 4), ri(1, 3)).unwrap(),
        ]);
        assert_eq!(touching.intervals().len(), 1);
        assert!(Interval::new(ri(1, 2), ri(1, 3)).is_err());
    }

    #[test]
    fn small_alpha_law() {
        let alpha = 0.01;
        let target = 12.0 * alpha / (PI * PI) * 2f64.ln();
        assert!((target - 8.428e-3).abs() < 1e-6);
        let conv = est_convergence(r(1, 100), r(2, 1), &CosetSubset::trivial(), Subinterval::unit(), &[500, 1000, 2000]).unwrap();
        for (n, v) in &conv.rows {
            let v = to_f64(v);
            assert!((v / target - 1.0).abs() < 0.05, "n={n}: {v}");
            let oracle = totient_sum(alpha, *n as usize, 2 * *n as usize);
            assert!((v / oracle - 1.0).abs() < 1e-3, "n={n}: {v} vs {oracle}");
        }
        assert_eq!(conv.limit, to_f64(&conv.rows[2].1));
        assert!(conv.delta.unwrap().abs() < 1e-5);
    }

    #[test]
    fn thin_shell_vanishes() {
        let all = CosetSubset::trivial();
        let mut prev = f64::INFINITY;
        for n in [10, 100, 1000] {
            let cfg = EstConfig::new(n, r(1, 2), r(1, 1), &all, Subinterval::unit()).unwrap();
            let v = to_f64(&est_measure(&cfg).unwrap());
            assert!(v <= 1.0 / n as f64 + 1e-12);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn half_interval_carries_half_the_measure() {
        let m3 = den_one(3);
        let half = Subinterval::new(r(0, 1), r(1, 2)).unwrap();
        let a = est_convergence(r(1, 20), r(2, 1), &m3, half, &[400]).unwrap().limit;
        let b = est_convergence(r(1, 20), r(2, 1), &m3, Subinterval::unit(), &[400]).unwrap().limit;
        assert!((a / b - 0.5).abs() < 0.015, "{}", a / b);
    }

    #[test]
    fn overlap_depth_examples() {
        let all = CosetSubset::trivial();
        assert_eq!(detect_overlap_depth(r(1, 100), r(2, 1), &all, 1000).unwrap(), 0);
        assert!(detect_overlap_depth(r(5, 1), r(2, 1), &all, 100).unwrap() >= 1);
        let _ = detect_overlap_depth(r(3, 1), r(1, 1), &all, 50).unwrap();
    }

    #[test]
    fn overlap_depth_matches_quadratic_scan() {
        for (alpha, c, m, n) in [(r(5, 1), r(2, 1), 1, 30), (r(2, 1), r(3, 1), 3, 20), (r(1, 3), r(3, 2), 2, 15)] {
            let cosets = den_one(m);
            let q = EstConfig::new(n, alpha, c, &cosets, Subinterval::unit()).unwrap().order().unwrap();
            let a = ri(*alpha.numer() as i128, *alpha.denom() as i128);
            let pts: Vec<(usize, Ratio<i128>, Ratio<i128>)> = stream_subset(&SubsetQuery::unit(q, &cosets))
                .unwrap()
                .enumerate()
                .filter(|(_, s)| s.q() >= n)
                .map(|(j, s)| {
                    let b = ri(s.a() as i128, s.q() as i128);
                    let w = a / (s.q() as i128 * s.q() as i128);
                    (j, b - w, b + w)
                })
                .collect();
            let mut want = 0;
            for x in &pts {
                for y in &pts {
                    if x.0 < y.0 && x.2 >= y.1 {
                        want = want.max(y.0 - x.0);
                    }
                }
            }
            assert_eq!(detect_overlap_depth(alpha, c, &cosets, n).unwrap(), want);
        }
    }

    #[test]
    fn section_estimate_small_alpha() {
        for (m, c) in [(1u32, 2.0f64), (1, 3.0), (3, 2.0)] {
            let cosets = den_one(m);
            let est = est_limit_section_mc(0.01, c, &cosets, 0, &McConfig::new(400_000, 8)).unwrap();
            let want = 12.0 * 0.01 / (PI * PI) * c.ln() * cosets.density_constant() / (3.0 / (PI * PI));
            assert!((est.estimate - want).abs() < 3.0 * est.stderr + 1e-9, "m={m} c={c}: {} vs {want} ({})", est.estimate, est.stderr);
        }
    }

    #[test]
    fn section_estimate_matches_exact_measure_with_overlaps() {
        let all = CosetSubset::trivial();
        let (alpha, c, n) = (r(1, 2), r(2, 1), 300);
        let depth = detect_overlap_depth(alpha, c, &all, n).unwrap();
        assert!(depth >= 1);
        let exact = est_convergence(alpha, c, &all, Subinterval::unit(), &[n]).unwrap().limit;
        let est = est_limit_section_mc(0.5, 2.0, &all, depth, &McConfig::new(400_000, 21)).unwrap();
        let tol = (0.03 * exact).max(4.0 * est.stderr);
        assert!((est.estimate - exact).abs() < tol, "{} vs {exact} ({})", est.estimate, est.stderr);
        assert!(est_limit_section_mc(0.5, 2.0, &all, 21, &McConfig::new(10, 1)).is_err());
    }

    #[test]
    fn csv_and_report() {
        let conv = est_convergence(r(1, 10), r(2, 1), &CosetSubset::trivial(), Subinterval::unit(), &[1, 2]).unwrap();
        let mut out = vec![];
        conv.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "n,lambda,delta");
        assert_eq!(lines[1], "1,1/4,");
        assert!(lines[2].starts_with("2,"));
        let rows = EstRow::table(&conv);
        assert_eq!(rows[0].lambda, "1/4");
        assert_eq!(rows[0].delta, None);
    }

    fn config_strategy() -> impl Strategy<Value = (i64, i64, i64, i64, u32, i64, i64)> {
        (1i64..12, 1i64..40, 1i64..30, 1i64..4, 1u32..5, 0i64..12, 0i64..12)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn streaming_union_matches_naive((n, anum, cnum, cden, m, i0, i1) in config_strategy()) {
            let cosets = den_one(m);
            let (lo, hi) = (i0.min(i1), i0.max(i1));
            let interval = Subinterval::new(r(lo, 12), r(hi, 12)).unwrap();
            let c = r(cden + cnum, cden);
            let cfg = EstConfig::new(n, r(anum, 40), c, &cosets, interval).unwrap();
            let u = build_est_union(&cfg).unwrap();
            prop_assert_eq!(&u, &naive_union(&cfg));
            prop_assert_eq!(u.measure(), est_measure(&cfg).unwrap());
            prop_assert_eq!(IntervalUnion::from_intervals(u.intervals().iter().chain(u.intervals()).copied()), u.clone());
            prop_assert!(u.measure() <= big(hi - lo, 12));
        }

        #[test]
        fn measure_is_monotone((n, anum, cnum, cden, m, _, _) in config_strategy(), da in 1i64..20, dc in 1i64..10) {
            let cosets = den_one(m);
            let i = Subinterval::unit();
            let c = r(cden + cnum, cden);
            let base = est_measure(&EstConfig::new(n, r(anum, 40), c, &cosets, i).unwrap()).unwrap();
            let more_alpha = est_measure(&EstConfig::new(n, r(anum + da, 40), c, &cosets, i).unwrap()).unwrap();
            let more_c = est_measure(&EstConfig::new(n, r(anum, 40), c + r(dc, 3), &cosets, i).unwrap()).unwrap();
            prop_assert!(base <= more_alpha);
            prop_assert!(base <= more_c);
            prop_assert!(base <= big(1, 1));
        }

        #[test]
        fn measure_is_additive_over_intervals((n, anum, cnum, cden, m, _, _) in config_strategy(), cut in 0i64..=30) {
            let cosets = den_one(m);
            let c = r(cden + cnum, cden);
            let alpha = r(anum, 40);
            let left = Subinterval::new(r(0, 1), r(cut, 30)).unwrap();
            let right = Subinterval::new(r(cut, 30), r(1, 1)).unwrap();
            let a = est_measure(&EstConfig::new(n, alpha, c, &cosets, left).unwrap()).unwrap();
            let b = est_measure(&EstConfig::new(n, alpha, c, &cosets, right).unwrap()).unwrap();
            let whole = est_measure(&EstConfig::new(n, alpha, c, &cosets, Subinterval::unit()).unwrap()).unwrap();
            prop_assert_eq!(a + b, whole);
        }
    }
}
