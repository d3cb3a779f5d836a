//! Empirical gap statistics of `F_{I,M}(Q)`.

use std::collections::BTreeMap;
use std::io::{self, Write};

use num_rational::Ratio;
use serde::Serialize;

use crate::congruence::CosetSubset;
use crate::error::{Error, Result};
use crate::farey::{Fraction, Rational};
use crate::subset::{fold_gaps_sharded, stream_subset, SubsetGapRecord, SubsetQuery};

/// Right-continuous empirical distribution function of a finite sample.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalCdf {
    values: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("empirical CDF"));
        }
        if let Some(v) = values.iter().find(|v| v.is_nan() || **v < 0.0) {
            return Err(Error::Domain(format!("sample value {v} is not a non-negative real")));
        }
        values.sort_by(f64::total_cmp);
        Ok(EmpiricalCdf { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sorted sample values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of samples `<= x`.
    pub fn count_le(&self, x: f64) -> usize {
        self.values.partition_point(|v| *v <= x)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.count_le(x) as f64 / self.values.len() as f64
    }

    /// Smallest sample `v` with `CDF(v) >= p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.values.len();
        let k = ((p.clamp(0.0, 1.0) * n as f64).ceil() as usize).clamp(1, n);
        self.values[k - 1]
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// The distribution of `factor * X`.
    pub fn scaled(&self, factor: f64) -> Self {
        EmpiricalCdf { values: self.values.iter().map(|v| v * factor).collect() }
    }

    pub fn merge(&self, other: &EmpiricalCdf) -> Self {
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.values, &other.values);
        let mut out = Vec::with_capacity(a.len() + b.len());
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                out.push(a[i]);
                i += 1;
            } else {
                out.push(b[j]);
                j += 1;
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        EmpiricalCdf { values: out }
    }

    /// Writes `c,cdf` rows at the given grid points.
    pub fn write_csv<W: Write>(&self, mut w: W, grid: &[f64]) -> io::Result<()> {
        writeln!(w, "c,cdf")?;
        for &c in grid {
            writeln!(w, "{},{}", fmt_float(c), fmt_float(self.eval(c)))?;
        }
        Ok(())
    }
}

/// `n` evenly spaced points on `(0, hi]`.
pub fn uniform_grid(hi: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|i| hi * i as f64 / n as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    Count,
    Probability,
    Density,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    edges: Vec<f64>,
    counts: Vec<u64>,
    total: u64,
    pub normalization: Normalization,
}

impl Histogram {
    pub const DEFAULT_BINS: usize = 200;

    /// Uniform bins on `[lo, hi]`, counts taken as differences of the CDF.
    /// The first bin is closed on the left.
    pub fn from_cdf(cdf: &EmpiricalCdf, bins: usize, lo: f64, hi: f64, normalization: Normalization) -> Result<Self> {
        if bins == 0 || hi.is_nan() || lo.is_nan() || hi <= lo {
            return Err(Error::Domain(format!("histogram needs bins >= 1 and lo < hi, got {bins} on [{lo}, {hi}]")));
        }
        let edges: Vec<f64> = (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect();
        let mut below = cdf.values.partition_point(|v| *v < lo);
        let counts = edges[1..]
            .iter()
            .map(|&e| {
                let upto = cdf.count_le(e);
                let c = (upto - below) as u64;
                below = upto;
                c
            })
            .collect();
        Ok(Histogram { edges, counts, total: cdf.len() as u64, normalization })
    }

    /// 200 bins on `[0, 99th percentile]`, density normalized.
    pub fn default_for(cdf: &EmpiricalCdf) -> Result<Self> {
        let mut hi = cdf.quantile(0.99);
        if hi <= 0.0 {
            hi = if cdf.max() > 0.0 { cdf.max() } else { 1.0 };
        }
        Self::from_cdf(cdf, Self::DEFAULT_BINS, 0.0, hi, Normalization::Density)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Bin heights under the selected normalization.
    pub fn heights(&self) -> Vec<f64> {
        let n = self.total as f64;
        self.counts
            .iter()
            .zip(self.edges.windows(2))
            .map(|(&c, e)| match self.normalization {
                Normalization::Count => c as f64,
                Normalization::Probability => c as f64 / n,
                Normalization::Density => c as f64 / (n * (e[1] - e[0])),
            })
            .collect()
    }

    /// Writes `bin_lo,bin_hi,density` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let header = match self.normalization {
            Normalization::Count => "count",
            Normalization::Probability => "probability",
            Normalization::Density => "density",
        };
        writeln!(w, "bin_lo,bin_hi,{header}")?;
        for (e, h) in self.edges.windows(2).zip(self.heights()) {
            writeln!(w, "{},{},{}", fmt_float(e[0]), fmt_float(e[1]), fmt_float(h))?;
        }
        Ok(())
    }
}

/// Distribution of `N (β_{i+1} - β_i) / span` over `N` gap records.
pub fn gap_distribution<I>(records: I, span: Rational) -> Result<EmpiricalCdf>
where
    I: IntoIterator<Item = SubsetGapRecord>,
{
    if span <= Rational::from_integer(0) {
        return Err(Error::Domain(format!("span must be positive, got {span}")));
    }
    let gaps: Vec<Ratio<i128>> = records.into_iter().map(|r| r.gap()).collect();
    if gaps.is_empty() {
        return Err(Error::Empty("gap records"));
    }
    let n = gaps.len() as i128;
    let span = Ratio::new(*span.numer() as i128, *span.denom() as i128);
    let values = gaps.iter().map(|g| ratio_to_f64(&(g * n / span))).collect();
    EmpiricalCdf::new(values)
}

/// Distribution of the revised gaps `Q² (β_{i+1} - β_i)`.
pub fn revised_gap_cdf<I>(records: I) -> Result<EmpiricalCdf>
where
    I: IntoIterator<Item = SubsetGapRecord>,
{
    EmpiricalCdf::new(records.into_iter().map(|r| ratio_to_f64(&r.scaled_gap())).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RepulsionEstimate {
    pub min_revised_exact: Ratio<i128>,
    pub min_revised: f64,
    /// Closed-form unrevised repulsion gap, only for the `q ≡ 1 mod m` family.
    pub predicted_unrevised: Option<f64>,
    /// Infimum of the revised support, same family.
    pub predicted_revised: Option<f64>,
}

impl RepulsionEstimate {
    /// The observed minimum on the unrevised scale of `N` gaps over `span`.
    pub fn min_unrevised(&self, gaps: u64, order: i64, span: f64) -> f64 {
        self.min_revised * gaps as f64 / ((order as f64).powi(2) * span)
    }
}

pub fn repulsion_estimate<I>(records: I, cosets: &CosetSubset) -> Result<RepulsionEstimate>
where
    I: IntoIterator<Item = SubsetGapRecord>,
{
    let min = records.into_iter().map(|r| r.scaled_gap()).min().ok_or(Error::Empty("gap records"))?;
    Ok(repulsion_from_min(min, cosets))
}

fn repulsion_from_min(min: Ratio<i128>, cosets: &CosetSubset) -> RepulsionEstimate {
    let den_one = cosets.is_den_one_family();
    RepulsionEstimate {
        min_revised_exact: min,
        min_revised: ratio_to_f64(&min),
        predicted_unrevised: den_one.then(|| cosets.density_constant()),
        predicted_revised: den_one.then_some(1.0),
    }
}

/// Consecutive `h`-tuples of gaps, scaled by `Q²`.
pub fn h_spacings<I>(fractions: I, h: usize, order: i64) -> impl Iterator<Item = Vec<f64>>
where
    I: IntoIterator<Item = Fraction>,
{
    let q2 = Ratio::from_integer(order as i128 * order as i128);
    let mut window: Vec<Ratio<i128>> = Vec::with_capacity(h + 1);
    let mut prev: Option<Fraction> = None;
    fractions.into_iter().filter_map(move |f| {
        let p = prev.replace(f)?;
        if h == 0 {
            return None;
        }
        let d = Ratio::new(f.num() as i128, f.den() as i128) - Ratio::new(p.num() as i128, p.den() as i128);
        if window.len() == h {
            window.remove(0);
        }
        window.push(d * q2);
        (window.len() == h).then(|| window.iter().map(ratio_to_f64).collect())
    })
}

/// Fraction of vectors lying in the box `∏ [0, c_j]`.
pub fn joint_cdf(vectors: &[Vec<f64>], corner: &[f64]) -> f64 {
    if vectors.is_empty() {
        return 0.0;
    }
    let inside = vectors.iter().filter(|v| v.iter().zip(corner).all(|(x, c)| x <= c)).count();
    inside as f64 / vectors.len() as f64
}

/// Counts of `bq - ap` over consecutive pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NumeratorHistogram {
    counts: BTreeMap<i64, u64>,
    total: u64,
}

impl NumeratorHistogram {
    pub fn add(&mut self, c3: i64) {
        *self.counts.entry(c3).or_default() += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: NumeratorHistogram) {
        for (k, c) in other.counts {
            *self.counts.entry(k).or_default() += c;
        }
        self.total += other.total;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &BTreeMap<i64, u64> {
        &self.counts
    }

    pub fn frequency(&self, c3: i64) -> Ratio<u64> {
        Ratio::new(self.counts.get(&c3).copied().unwrap_or(0), self.total.max(1))
    }

    pub fn frequencies(&self) -> BTreeMap<i64, f64> {
        self.counts.keys().map(|&k| (k, ratio_to_f64(&self.frequency(k)))).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "c3,frequency")?;
        for (k, f) in self.frequencies() {
            writeln!(w, "{k},{}", fmt_float(f))?;
        }
        Ok(())
    }
}

pub fn numerator_histogram<I>(records: I) -> NumeratorHistogram
where
    I: IntoIterator<Item = SubsetGapRecord>,
{
    let mut h = NumeratorHistogram::default();
    for r in records {
        h.add(r.numerator_diff);
    }
    h
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquidistributionReport {
    pub counts: Vec<u64>,
    /// `max_i |count_i - mean| / mean`.
    pub deviation: f64,
}

pub fn equidistribution_report(order: i64, cosets: &CosetSubset, bins: usize) -> Result<EquidistributionReport> {
    if bins == 0 {
        return Err(Error::Domain("bins must be at least 1".into()));
    }
    let mut counts = vec![0u64; bins];
    for s in stream_subset(&SubsetQuery::unit(order, cosets))? {
        let bin = (s.a() as i128 * bins as i128 / s.q() as i128) as usize;
        counts[bin.min(bins - 1)] += 1;
    }
    let mean = counts.iter().sum::<u64>() as f64 / bins as f64;
    let deviation = if mean > 0.0 {
        counts.iter().map(|&c| (c as f64 - mean).abs() / mean).fold(0.0, f64::max)
    } else {
        0.0
    };
    Ok(EquidistributionReport { counts, deviation })
}

/// Everything the gap statistics need from one pass over `F_{I,M}(Q)`.
#[derive(Clone, Debug, Default)]
pub struct GapSummary {
    pub revised: Vec<f64>,
    pub min_revised: Option<Ratio<i128>>,
    pub numerators: NumeratorHistogram,
    first: Option<Fraction>,
    last: Option<Fraction>,
}

impl GapSummary {
    fn push(&mut self, r: &SubsetGapRecord) {
        let g = r.scaled_gap();
        self.revised.push(ratio_to_f64(&g));
        if self.min_revised.is_none_or(|m| g < m) {
            self.min_revised = Some(g);
        }
        self.numerators.add(r.numerator_diff);
        self.first.get_or_insert(r.beta);
        self.last = Some(r.beta_next);
    }

    fn merge(&mut self, other: GapSummary) {
        self.revised.extend(other.revised);
        self.min_revised = match (self.min_revised, other.min_revised) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.numerators.merge(other.numerators);
        if self.first.is_none() {
            self.first = other.first;
        }
        if other.last.is_some() {
            self.last = other.last;
        }
    }

    /// Number of gap records.
    pub fn gaps(&self) -> u64 {
        self.revised.len() as u64
    }

    /// `x_N - x_0` over the retained fractions.
    pub fn span(&self) -> Option<Rational> {
        Some(self.last?.to_rational() - self.first?.to_rational())
    }

    pub fn revised_cdf(&self) -> Result<EmpiricalCdf> {
        EmpiricalCdf::new(self.revised.clone())
    }

    /// The unrevised distribution, rescaled from the revised one.
    pub fn unrevised_cdf(&self, order: i64) -> Result<EmpiricalCdf> {
        let span = self.span().ok_or(Error::Empty("gap records"))?;
        let factor = self.gaps() as f64 / ((order as f64).powi(2) * ratio_to_f64(&span));
        Ok(self.revised_cdf()?.scaled(factor))
    }

    pub fn repulsion(&self, cosets: &CosetSubset) -> Result<RepulsionEstimate> {
        let min = self.min_revised.ok_or(Error::Empty("gap records"))?;
        Ok(repulsion_from_min(min, cosets))
    }
}

/// Default shard count for [`summarize_gaps`]; fixed so results do not depend on the thread count.
pub const DEFAULT_SHARDS: usize = 64;

pub fn summarize_gaps(query: &SubsetQuery, shards: usize) -> Result<GapSummary> {
    let (summary, _) = fold_gaps_sharded(query, shards, GapSummary::default, GapSummary::push, GapSummary::merge)?;
    Ok(summary)
}

/// The JSON report of a gap computation.
#[derive(Clone, Debug, Serialize)]
pub struct GapReport {
    #[serde(rename = "Q")]
    pub order: i64,
    pub m: u32,
    pub subset: String,
    /// Number of gaps.
    #[serde(rename = "N")]
    pub n: u64,
    /// Smallest gap on the unrevised (mean-gap) scale.
    pub min_gap: f64,
    pub min_revised_gap: f64,
    pub predicted_repulsion: Option<f64>,
    pub predicted_revised: Option<f64>,
    /// `|min_gap / predicted_repulsion - 1|`.
    pub deviation: Option<f64>,
}

impl GapReport {
    pub fn new(summary: &GapSummary, order: i64, cosets: &CosetSubset, subset: &str) -> Result<Self> {
        let rep = summary.repulsion(cosets)?;
        let span = ratio_to_f64(&summary.span().ok_or(Error::Empty("gap records"))?);
        let min_gap = rep.min_unrevised(summary.gaps(), order, span);
        Ok(GapReport {
            order,
            m: cosets.modulus(),
            subset: subset.to_string(),
            n: summary.gaps(),
            min_gap,
            min_revised_gap: rep.min_revised,
            predicted_repulsion: rep.predicted_unrevised,
            predicted_revised: rep.predicted_revised,
            deviation: rep.predicted_unrevised.map(|p| (min_gap / p - 1.0).abs()),
        })
    }
}

pub(crate) fn ratio_to_f64<T>(r: &Ratio<T>) -> f64
where
    Ratio<T>: num_traits::ToPrimitive,
{
    num_traits::ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
}

/// `%.12g`-style rendering.
pub fn fmt_float(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    let exp = x.abs().log10().floor() as i32;
    let s = if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{x:.11e}");
        let (mant, e) = s.split_once('e').unwrap();
        let mant = if mant.contains('.') { mant.trim_end_matches('0').trim_end_matches('.') } else { mant };
        format!("{mant}e{e}")
    };
    s
}
