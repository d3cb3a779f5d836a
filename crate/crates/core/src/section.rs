//! The lifted Poincaré section `Ω_M`: coset-tracked returns and Monte Carlo estimators.

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::congruence::{CosetSubset, ModMatrix};
use crate::error::{Error, Result};
use crate::farey::{bcz_with_index, in_triangle, FareyPairState};
use crate::stats::EmpiricalCdf;

pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;

/// Samples per generator stream in the Monte Carlo estimators.
pub const BATCH_SIZE: u64 = 10_000;

/// Largest tolerated fraction of truncated orbits in a Monte Carlo run.
pub const TRUNCATION_TOLERANCE: f64 = 1e-4;

/// A point `(a, b)` of `Ω` together with a coset of `Γ(m)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SectionPoint {
    a: f64,
    b: f64,
    coset: ModMatrix,
}

impl SectionPoint {
    pub fn new(a: f64, b: f64, coset: ModMatrix) -> Result<Self> {
        if !in_triangle(a, b) {
            return Err(Error::Domain(format!("({a}, {b}) is outside the Farey triangle")));
        }
        Ok(SectionPoint { a, b, coset })
    }

    /// `(q/Q, q'/Q)` with the W-matrix of the pair, the image of a Farey point.
    pub fn farey_point(s: &FareyPairState, m: u32) -> Self {
        let order = s.order() as f64;
        SectionPoint { a: s.q() as f64 / order, b: s.next_q() as f64 / order, coset: ModMatrix::from_pair(s, m) }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn coset(&self) -> ModMatrix {
        self.coset
    }
}

/// `R(a, b) = 1/(ab)`.
pub fn roof(a: f64, b: f64) -> f64 {
    1.0 / (a * b)
}

/// One step of `r'`: BCZ on `(a, b)`, and `[[K,1],[-1,0]]` on the coset.
pub fn step_rprime(p: &SectionPoint) -> SectionPoint {
    let (k, a, b) = bcz_with_index(p.a, p.b);
    let m = p.coset.modulus();
    let factor = ModMatrix::return_factor(k.rem_euclid(m as f64) as u32, m);
    SectionPoint { a, b, coset: factor.mul_same(&p.coset) }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReturnSample {
    pub time: f64,
    pub steps: u64,
    pub landing: SectionPoint,
}

fn check_on_section(coset: &ModMatrix, cosets: &CosetSubset) -> Result<()> {
    if coset.modulus() != cosets.modulus() {
        return Err(Error::ModulusMismatch { left: coset.modulus(), right: cosets.modulus() });
    }
    if !cosets.contains(coset) {
        return Err(Error::Domain(format!("coset {coset} is not in M")));
    }
    Ok(())
}

/// Iterates `r'` until the coset re-enters `M`, summing the roof along the way.
pub fn first_return(p: &SectionPoint, cosets: &CosetSubset, max_steps: u64) -> Result<ReturnSample> {
    check_on_section(&p.coset, cosets)?;
    let mut cur = *p;
    let mut time = 0.0;
    for steps in 1..=max_steps {
        time += roof(cur.a, cur.b);
        cur = step_rprime(&cur);
        if cosets.contains(&cur.coset) {
            return Ok(ReturnSample { time, steps, landing: cur });
        }
    }
    Err(Error::Truncated { steps: max_steps, partial_time: time })
}

/// A section point with rational coordinates `a = a_num/den`, `b = b_num/den`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExactSectionPoint {
    pub a_num: i128,
    pub b_num: i128,
    pub den: i128,
    pub coset: ModMatrix,
}

impl ExactSectionPoint {
    pub fn farey_point(s: &FareyPairState, m: u32) -> Self {
        ExactSectionPoint {
            a_num: s.q() as i128,
            b_num: s.next_q() as i128,
            den: s.order() as i128,
            coset: ModMatrix::from_pair(s, m),
        }
    }
}

pub fn step_rprime_exact(p: &ExactSectionPoint) -> ExactSectionPoint {
    let k = (p.den + p.a_num) / p.b_num;
    let m = p.coset.modulus();
    let factor = ModMatrix::return_factor(k.rem_euclid(m as i128) as u32, m);
    ExactSectionPoint { a_num: p.b_num, b_num: k * p.b_num - p.a_num, den: p.den, coset: factor.mul_same(&p.coset) }
}

/// Rational twin of [`first_return`]: `(time, steps, landing)`.
pub fn first_return_exact(
    p: &ExactSectionPoint,
    cosets: &CosetSubset,
    max_steps: u64,
) -> Result<(Ratio<i128>, u64, ExactSectionPoint)> {
    check_on_section(&p.coset, cosets)?;
    let mut cur = *p;
    let mut time = Ratio::from_integer(0);
    for steps in 1..=max_steps {
        time += Ratio::new(cur.den * cur.den, cur.a_num * cur.b_num);
        cur = step_rprime_exact(&cur);
        if cosets.contains(&cur.coset) {
            return Ok((time, steps, cur));
        }
    }
    Err(Error::Truncated { steps: max_steps, partial_time: crate::stats::ratio_to_f64(&time) })
}

/// The `r_M`-orbit of a point, extended on demand and memoized.
pub struct ReturnOrbit<'a> {
    cosets: &'a CosetSubset,
    max_steps: u64,
    points: Vec<SectionPoint>,
    // times[k] = R_M^{(k)}(p), the total time to reach the k-th return.
    times: Vec<f64>,
}

impl<'a> ReturnOrbit<'a> {
    pub fn new(p: SectionPoint, cosets: &'a CosetSubset, max_steps: u64) -> Result<Self> {
        check_on_section(&p.coset, cosets)?;
        Ok(ReturnOrbit { cosets, max_steps, points: vec![p], times: vec![0.0] })
    }

    fn extend_to(&mut self, k: usize) -> Result<()> {
        while self.points.len() <= k {
            let last = self.points[self.points.len() - 1];
            let r = first_return(&last, self.cosets, self.max_steps)?;
            self.times.push(self.times[self.times.len() - 1] + r.time);
            self.points.push(r.landing);
        }
        Ok(())
    }

    /// `r_M^k(p)`.
    pub fn point(&mut self, k: usize) -> Result<SectionPoint> {
        self.extend_to(k)?;
        Ok(self.points[k])
    }

    /// `R_M^{(k)}(p)`.
    pub fn time(&mut self, k: usize) -> Result<f64> {
        self.extend_to(k)?;
        Ok(self.times[k])
    }

    /// Whether every `r_M^{j}(p)`, `j ∈ js`, has `a >= t`.
    pub fn in_h_region(&mut self, js: &[usize], t: f64) -> Result<bool> {
        check_indices(js)?;
        for &j in js {
            if self.point(j)?.a < t {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// `max{0, min_{s <= s'} α(a_s⁻² + a_{s'}⁻²) - (R^{(j_{s'})} - R^{(j_s)})}`.
    pub fn f_alpha(&mut self, js: &[usize], alpha: f64) -> Result<f64> {
        check_indices(js)?;
        let mut vals = Vec::with_capacity(js.len());
        for &j in js {
            let a = self.point(j)?.a;
            vals.push((alpha / (a * a), self.time(j)?));
        }
        let mut best = f64::INFINITY;
        for (s, &(ws, ts)) in vals.iter().enumerate() {
            for &(wt, tt) in &vals[s..] {
                best = best.min(ws + wt - (tt - ts));
            }
        }
        Ok(best.max(0.0))
    }
}

fn check_indices(js: &[usize]) -> Result<()> {
    if js.first() != Some(&0) || js.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain(format!("index list {js:?} must start at 0 and increase strictly")));
    }
    Ok(())
}

pub fn h_region_member(p: &SectionPoint, js: &[usize], t: f64, cosets: &CosetSubset) -> Result<bool> {
    ReturnOrbit::new(*p, cosets, DEFAULT_MAX_STEPS)?.in_h_region(js, t)
}

pub fn f_alpha(p: &SectionPoint, js: &[usize], alpha: f64, cosets: &CosetSubset) -> Result<f64> {
    ReturnOrbit::new(*p, cosets, DEFAULT_MAX_STEPS)?.f_alpha(js, alpha)
}

/// Whether `(a, b)` sits within `1e-12` of a jump of `K = floor((1+a)/b)` or of the hypotenuse.
fn near_discontinuity(a: f64, b: f64) -> bool {
    let x = (1.0 + a) / b;
    (x - x.round()).abs() < 1e-12 || a + b - 1.0 < 1e-12
}

/// A uniform point of `Ω`: fold the unit square across `u + v = 1`.
pub fn sample_omega<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    loop {
        let (u, v): (f64, f64) = (rng.random(), rng.random());
        let (a, b) = if u + v <= 1.0 { (1.0 - u, 1.0 - v) } else { (u, v) };
        if in_triangle(a, b) && !near_discontinuity(a, b) {
            return (a, b);
        }
    }
}

/// A `μ_{Ω_M}`-distributed point: uniform on `Ω`, coset uniform over `M`.
pub fn sample_section<R: Rng + ?Sized>(rng: &mut R, cosets: &CosetSubset) -> SectionPoint {
    let (a, b) = sample_omega(rng);
    let coset = cosets.matrices()[rng.random_range(0..cosets.coset_count())];
    SectionPoint { a, b, coset }
}

/// Monte Carlo run parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct McConfig {
    pub samples: u64,
    pub seed: u64,
    pub max_steps: u64,
}

impl McConfig {
    pub fn new(samples: u64, seed: u64) -> Self {
        McConfig { samples, seed, max_steps: DEFAULT_MAX_STEPS }
    }
}

/// Runs `work(rng, count)` over batches of [`BATCH_SIZE`] samples, each on
/// its own ChaCha stream, returning the batch results in batch order.
pub fn run_batches<T, F>(cfg: &McConfig, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, u64) -> T + Sync,
{
    let batches = cfg.samples.div_ceil(BATCH_SIZE);
    (0..batches)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i);
            let count = BATCH_SIZE.min(cfg.samples - i * BATCH_SIZE);
            work(&mut rng, count)
        })
        .collect()
}

pub(crate) fn check_truncation(truncated: u64, samples: u64) -> Result<()> {
    if truncated as f64 > TRUNCATION_TOLERANCE * samples as f64 {
        return Err(Error::TruncationBudget { truncated, samples });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct McReturn {
    /// Distribution of `R_M` over the non-truncated samples.
    pub cdf: EmpiricalCdf,
    pub samples: u64,
    pub truncated: u64,
}

pub fn mc_return_cdf(cosets: &CosetSubset, cfg: &McConfig) -> Result<McReturn> {
    if cfg.samples == 0 {
        return Err(Error::Domain("at least one sample is required".into()));
    }
    let batches = run_batches(cfg, |rng, count| {
        let mut times = Vec::with_capacity(count as usize);
        let mut truncated = 0u64;
        for _ in 0..count {
            let p = sample_section(rng, cosets);
            match first_return(&p, cosets, cfg.max_steps) {
                Ok(r) => times.push(r.time),
                Err(Error::Truncated { .. }) => truncated += 1,
                Err(e) => return Err(e),
            }
        }
        Ok((times, truncated))
    });
    let mut times = Vec::with_capacity(cfg.samples as usize);
    let mut truncated = 0;
    for b in batches {
        let (t, n) = b?;
        times.extend(t);
        truncated += n;
    }
    check_truncation(truncated, cfg.samples)?;
    Ok(McReturn { cdf: EmpiricalCdf::new(times)?, samples: cfg.samples, truncated })
}

/// Quantile of `R_M` used as an upper estimate of the support infimum.
pub const SUPPORT_QUANTILE: f64 = 1e-4;

pub fn support_threshold(cosets: &CosetSubset, cfg: &McConfig) -> Result<f64> {
    Ok(mc_return_cdf(cosets, cfg)?.cdf.quantile(SUPPORT_QUANTILE))
}

/// The JSON report of a section Monte Carlo run.
#[derive(Clone, Debug, Serialize)]
pub struct SectionReport {
    pub m: u32,
    pub subset: String,
    pub samples: u64,
    pub truncated: u64,
    pub cdf: Vec<[f64; 2]>,
    pub support_threshold: f64,
}

impl SectionReport {
    pub fn new(cosets: &CosetSubset, subset: &str, run: &McReturn, grid: &[f64]) -> Self {
        SectionReport {
            m: cosets.modulus(),
            subset: subset.to_string(),
            samples: run.samples,
            truncated: run.truncated,
            cdf: grid.iter().map(|&c| [c, run.cdf.eval(c)]).collect(),
            support_threshold: run.cdf.quantile(SUPPORT_QUANTILE),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::congruence::{from_residue_pairs, ResiduePairSet};
    use crate::farey::{bcz, FareySweep, TrianglePoint};
    use crate::stats::revised_gap_cdf;
    use crate::subset::{gap_records, stream_subset, SubsetQuery};
    use proptest::prelude::*;

    fn den_one(m: u32) -> CosetSubset {
        from_residue_pairs(&ResiduePairSet::den_congruent(m, 1).unwrap()).unwrap()
    }

    fn mat(m: u32, e: [i64; 4]) -> ModMatrix {
        ModMatrix::new(m, e[0], e[1], e[2], e[3]).unwrap()
    }

    /// `P(1/(ab) <= c)` under the normalized area on `Ω`, by midpoint quadrature in `a`.
    fn roof_cdf_oracle(c: f64) -> f64 {
        let t = 1.0 / c;
        let n = 200_000;
        let h = 1.0 / n as f64;
        let area: f64 = (0..n)
            .map(|i| {
                let a = (i as f64 + 0.5) * h;
                (1.0 - (1.0 - a).max(t / a)).max(0.0) * h
            })
            .sum();
        2.0 * area
    }

    #[test]
    fn roof_examples() {
        assert_eq!(roof(1.0, 1.0), 1.0);
        assert_eq!(roof(0.5, 1.0), 2.0);
        assert!((roof(0.6, 0.8) - 1.0 / 0.48).abs() < 1e-12);
    }

    #[test]
    fn step_examples() {
        let p = SectionPoint::new(1.0, 0.2, ModMatrix::identity(3).unwrap()).unwrap();
        let q = step_rprime(&p);
        assert!((q.a - 0.2).abs() < 1e-15 && (q.b - 1.0).abs() < 1e-12);
        assert_eq!(q.coset, mat(3, [1, 1, 2, 0]));

        let p = SectionPoint::new(0.6, 0.8, ModMatrix::identity(2).unwrap()).unwrap();
        let q = step_rprime(&p);
        assert!((q.a - 0.8).abs() < 1e-15 && (q.b - 1.0).abs() < 1e-12);
        assert_eq!(q.coset, mat(2, [0, 1, 1, 0]));

        let one = ModMatrix::identity(1).unwrap();
        for (a, b) in [(0.3, 0.9), (0.95, 0.07), (0.5, 0.5000001)] {
            let q = step_rprime(&SectionPoint::new(a, b, one).unwrap());
            let t = bcz(TrianglePoint::new(a, b).unwrap());
            assert_eq!((q.a, q.b), (t.a, t.b));
        }
    }

    #[test]
    fn first_return_examples() {
        let one = CosetSubset::trivial();
        let p = SectionPoint::new(0.3, 0.9, ModMatrix::identity(1).unwrap()).unwrap();
        let r = first_return(&p, &one, 10).unwrap();
        assert_eq!(r.steps, 1);
        assert_eq!(r.time, roof(0.3, 0.9));

        // The Farey point of 0/1 in F(5), returning to 1/4 in the q ≡ 1 mod 3 subset.
        let m3 = den_one(3);
        let p = SectionPoint::new(0.2, 1.0, mat(3, [2, 1, 2, 0])).unwrap();
        let r = first_return(&p, &m3, 10).unwrap();
        assert_eq!(r.steps, 2);
        assert!((r.time - 6.25).abs() < 1e-12);
        assert!((r.landing.a - 0.8).abs() < 1e-12);

        assert!(matches!(first_return(&p, &m3, 1), Err(Error::Truncated { steps: 1, .. })));
        let off = SectionPoint::new(0.2, 1.0, ModMatrix::identity(3).unwrap()).unwrap();
        assert!(first_return(&off, &m3, 10).is_err());
    }

    #[test]
    fn exact_returns_reproduce_scaled_gaps() {
        for m in 1..=4 {
            let cosets = den_one(m);
            for order in 1..=200 {
                let states: Vec<_> = stream_subset(&SubsetQuery::unit(order, &cosets)).unwrap().collect();
                let recs: Vec<_> = gap_records(&SubsetQuery::unit(order, &cosets)).unwrap().collect();
                let full: Vec<_> = FareySweep::full(order).unwrap().map(|s| s.current()).collect();
                for (s, rec) in states.iter().zip(&recs) {
                    let p = ExactSectionPoint::farey_point(s, m);
                    let (time, steps, landing) = first_return_exact(&p, &cosets, 1 << 20).unwrap();
                    assert_eq!(time, rec.scaled_gap(), "m={m} Q={order} at {}", rec.beta);
                    let i = full.binary_search(&rec.beta).unwrap();
                    let j = full.binary_search(&rec.beta_next).unwrap();
                    assert_eq!(steps as usize, j - i);
                    assert_eq!(landing.a_num, rec.beta_next.den() as i128);
                }
            }
        }
    }

    #[test]
    fn coset_update_tracks_w_matrices() {
        for m in 1..=4 {
            for order in 1..=100 {
                let states: Vec<_> = FareySweep::full(order).unwrap().collect();
                for w in states.windows(2) {
                    let p = ExactSectionPoint::farey_point(&w[0], m);
                    let q = step_rprime_exact(&p);
                    assert_eq!(q, ExactSectionPoint::farey_point(&w[1], m));
                }
            }
        }
    }

    #[test]
    fn sampled_points_are_uniform_on_the_triangle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000;
        let (mut sa, mut sb) = (0.0, 0.0);
        for _ in 0..n {
            let (a, b) = sample_omega(&mut rng);
            assert!(in_triangle(a, b));
            sa += a;
            sb += b;
        }
        assert!((sa / n as f64 - 2.0 / 3.0).abs() < 0.002);
        assert!((sb / n as f64 - 2.0 / 3.0).abs() < 0.002);
    }

    #[test]
    fn full_group_return_matches_closed_form() {
        let run = mc_return_cdf(&CosetSubset::trivial(), &McConfig::new(1_000_000, 17)).unwrap();
        assert_eq!(run.truncated, 0);
        assert_eq!(run.cdf.eval(1.0), 0.0);
        for c in [1.5, 2.0, 5.0] {
            let exact = roof_cdf_oracle(c);
            let se = (exact * (1.0 - exact) / run.samples as f64).sqrt();
            let est = run.cdf.eval(c);
            assert!((est - exact).abs() < 3.0 * se, "c={c}: {est} vs {exact} (se {se})");
        }
    }

    #[test]
    fn support_thresholds_sit_at_one() {
        for m in [1, 3, 6] {
            let cosets = den_one(m);
            let run = mc_return_cdf(&cosets, &McConfig::new(300_000, 3)).unwrap();
            let thr = run.cdf.quantile(SUPPORT_QUANTILE);
            assert!((1.0..1.05).contains(&thr), "m={m}: {thr}");
            assert!(run.cdf.eval(thr - 0.05) < 0.001);
            assert!(run.cdf.eval(0.999) == 0.0);
        }
    }

    #[test]
    fn return_cdf_tracks_revised_gaps() {
        for m in [1, 3] {
            let cosets = den_one(m);
            let run = mc_return_cdf(&cosets, &McConfig::new(200_000, 11)).unwrap();
            let emp = revised_gap_cdf(gap_records(&SubsetQuery::unit(1000, &cosets)).unwrap()).unwrap();
            let hi = emp.quantile(0.99);
            let dist = (1..=50).map(|i| hi * i as f64 / 50.0).map(|c| (run.cdf.eval(c) - emp.eval(c)).abs()).fold(0.0, f64::max);
            assert!(dist < 0.03, "m={m}: {dist}");
        }
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let cosets = den_one(3);
        let cfg = McConfig::new(25_000, 99);
        let a = mc_return_cdf(&cosets, &cfg).unwrap();
        let b = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| mc_return_cdf(&cosets, &cfg).unwrap());
        let c = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(|| mc_return_cdf(&cosets, &cfg).unwrap());
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_ne!(a, mc_return_cdf(&cosets, &McConfig::new(25_000, 100)).unwrap());
    }

    #[test]
    fn truncation_budget() {
        let cosets = den_one(5);
        let cfg = McConfig { samples: 2000, seed: 1, max_steps: 1 };
        assert!(matches!(mc_return_cdf(&cosets, &cfg), Err(Error::TruncationBudget { .. })));
        assert!(check_truncation(1, 10_000).is_ok());
        assert!(check_truncation(2, 10_000).is_err());
    }

    #[test]
    fn h_region_examples() {
        let one = CosetSubset::trivial();
        let id = ModMatrix::identity(1).unwrap();
        let p = SectionPoint::new(0.9, 0.9, id).unwrap();
        assert!(h_region_member(&p, &[0], 0.9, &one).unwrap());
        assert!(!h_region_member(&p, &[0], 0.91, &one).unwrap());
        assert!(h_region_member(&p, &[0, 1], 0.5, &one).unwrap());
        assert!(!h_region_member(&p, &[0, 1], 1.0 + 1e-9, &one).unwrap());
        assert!(h_region_member(&p, &[1, 2], 0.5, &one).is_err());
        assert!(h_region_member(&p, &[0, 0], 0.5, &one).is_err());
    }

    #[test]
    fn f_alpha_examples() {
        let one = CosetSubset::trivial();
        let id = ModMatrix::identity(1).unwrap();
        let p = SectionPoint::new(0.7, 0.8, id).unwrap();
        assert!((f_alpha(&p, &[0], 0.1, &one).unwrap() - 0.2 / 0.49).abs() < 1e-12);
        assert_eq!(f_alpha(&p, &[0, 1], 1e-6, &one).unwrap(), 0.0);
        let fixed = SectionPoint::new(1.0, 1.0, id).unwrap();
        assert_eq!(f_alpha(&fixed, &[0, 1], 3.0, &one).unwrap(), 5.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn steps_stay_on_the_section(seed in any::<u64>(), m in 1u32..12) {
            let cosets = CosetSubset::full(m).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut p = sample_section(&mut rng, &cosets);
            for _ in 0..50 {
                p = step_rprime(&p);
                prop_assert!(in_triangle(p.a, p.b));
                prop_assert_eq!(p.coset.det(), 1 % m);
            }
        }
    }
}
