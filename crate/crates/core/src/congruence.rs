//! Arithmetic in `SL(2, Z/mZ)` and coset subsets of `Γ/Γ(m)`.
//!
//! A coset of the principal congruence subgroup `Γ(m)` is determined by the
//! residues of any representative, so cosets are stored as [`ModMatrix`]
//! values with entries normalized to `[0, m)`.

use std::collections::BTreeSet;
use std::fmt;

use num_integer::Integer;

use crate::error::{Error, Result};
use crate::farey::FareyPairState;

/// Largest accepted modulus.
pub const MAX_MODULUS: u32 = 1 << 20;

fn check_modulus(m: u32) -> Result<()> {
    if m == 0 || m > MAX_MODULUS {
        return Err(Error::Domain(format!("modulus {m} outside [1, {MAX_MODULUS}]")));
    }
    Ok(())
}

fn residue(x: i64, m: u32) -> u32 {
    x.rem_euclid(m as i64) as u32
}

/// A 2×2 matrix over `Z/mZ` with determinant 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModMatrix {
    // Field order gives the lexicographic ordering used for set lookups.
    e: [u32; 4],
    m: u32,
}

impl ModMatrix {
    /// Reduces the integer entries mod `m`; the determinant must be `1 (mod m)`.
    pub fn new(m: u32, e11: i64, e12: i64, e21: i64, e22: i64) -> Result<Self> {
        check_modulus(m)?;
        let mat = ModMatrix { e: [residue(e11, m), residue(e12, m), residue(e21, m), residue(e22, m)], m };
        if mat.det() != 1 % m {
            return Err(Error::Validation(format!(
                "[[{e11},{e12}],[{e21},{e22}]] has determinant {} mod {m}, expected 1",
                mat.det()
            )));
        }
        Ok(mat)
    }

    pub fn identity(m: u32) -> Result<Self> {
        Self::new(m, 1, 0, 0, 1)
    }

    /// `U⁻¹ = [[1, -1], [0, 1]]`.
    pub fn translation_inverse(m: u32) -> Result<Self> {
        Self::new(m, 1, -1, 0, 1)
    }

    /// `[[q', a'], [-q, -a]]` for the pair `a/q < a'/q'`, which labels the
    /// fraction `a/q` in the lifted section.
    pub fn from_pair(s: &FareyPairState, m: u32) -> Self {
        ModMatrix {
            e: [residue(s.next_q(), m), residue(s.next_a(), m), residue(-s.q(), m), residue(-s.a(), m)],
            m,
        }
    }

    /// `[[k, 1], [-1, 0]] (mod m)`, the coset factor of one section return with index `k`.
    pub(crate) fn return_factor(k_mod_m: u32, m: u32) -> Self {
        ModMatrix { e: [k_mod_m % m, 1 % m, (m - 1) % m, 0], m }
    }

    pub fn modulus(&self) -> u32 {
        self.m
    }

    /// Entries in row-major order.
    pub fn entries(&self) -> [u32; 4] {
        self.e
    }

    pub fn det(&self) -> u32 {
        let m = self.m as u64;
        let [a, b, c, d] = self.e.map(u64::from);
        ((a * d % m + m - b * c % m) % m) as u32
    }

    pub fn mul(&self, rhs: &ModMatrix) -> Result<ModMatrix> {
        if self.m != rhs.m {
            return Err(Error::ModulusMismatch { left: self.m, right: rhs.m });
        }
        Ok(self.mul_same(rhs))
    }

    pub(crate) fn mul_same(&self, rhs: &ModMatrix) -> ModMatrix {
        let m = self.m as u64;
        let [a, b, c, d] = self.e.map(u64::from);
        let [w, x, y, z] = rhs.e.map(u64::from);
        let f = |p: u64, q: u64, r: u64, s: u64| ((p * q % m + r * s % m) % m) as u32;
        ModMatrix { e: [f(a, w, b, y), f(a, x, b, z), f(c, w, d, y), f(c, x, d, z)], m: self.m }
    }
}

impl fmt::Display for ModMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.e;
        write!(f, "{a} {b} {c} {d}")
    }
}

/// `[Γ : Γ(m)] = m³ ∏_{p | m} (1 - 1/p²)`.
pub fn index_gamma(m: u32) -> u64 {
    let mut index = (m as u64).pow(3);
    let mut rest = m as u64;
    let mut p = 2u64;
    while p * p <= rest {
        if rest.is_multiple_of(p) {
            index = index / (p * p) * (p * p - 1);
            while rest.is_multiple_of(p) {
                rest /= p;
            }
        }
        p += 1;
    }
    if rest > 1 {
        index = index / (rest * rest) * (rest * rest - 1);
    }
    index
}

/// A nonempty set of cosets of `Γ(m)`, closed under left multiplication by `U⁻¹`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CosetSubset {
    m: u32,
    mats: Vec<ModMatrix>,
}

impl CosetSubset {
    /// Validates a matrix list: nonempty, one modulus, closed under `U⁻¹`.
    pub fn new(m: u32, mats: impl IntoIterator<Item = ModMatrix>) -> Result<Self> {
        check_modulus(m)?;
        let set: BTreeSet<ModMatrix> = mats.into_iter().collect();
        if let Some(bad) = set.iter().find(|x| x.m != m) {
            return Err(Error::ModulusMismatch { left: m, right: bad.m });
        }
        if set.is_empty() {
            return Err(Error::Validation("coset subset is empty".into()));
        }
        let mats: Vec<ModMatrix> = set.into_iter().collect();
        if !check_closure(&mats) {
            return Err(Error::Validation(
                "coset subset is not closed under left multiplication by [[1,-1],[0,1]]".into(),
            ));
        }
        Ok(CosetSubset { m, mats })
    }

    /// Every coset of `Γ(1) = Γ`.
    pub fn trivial() -> Self {
        CosetSubset { m: 1, mats: vec![ModMatrix { e: [0; 4], m: 1 }] }
    }

    /// All of `SL(2, Z/mZ)`.
    pub fn full(m: u32) -> Result<Self> {
        check_modulus(m)?;
        let mut mats = vec![];
        for e in all_entries(m) {
            let x = ModMatrix { e, m };
            if x.det() == 1 % m {
                mats.push(x);
            }
        }
        Ok(CosetSubset { m, mats })
    }

    pub fn modulus(&self) -> u32 {
        self.m
    }

    pub fn matrices(&self) -> &[ModMatrix] {
        &self.mats
    }

    /// `#M`.
    pub fn coset_count(&self) -> usize {
        self.mats.len()
    }

    pub fn contains(&self, x: &ModMatrix) -> bool {
        self.mats.binary_search(x).is_ok()
    }

    /// Whether the fraction carried by `s` belongs to `F_M(Q)`.
    pub fn admits(&self, s: &FareyPairState) -> bool {
        self.contains(&ModMatrix::from_pair(s, self.m))
    }

    /// `3 #M / (π² [Γ:Γ(m)])`, the asymptotic density `N_M(Q)/Q²`.
    pub fn density_constant(&self) -> f64 {
        3.0 * self.mats.len() as f64 / (std::f64::consts::PI.powi(2) * index_gamma(self.m) as f64)
    }

    /// Whether this is the subset selecting denominators `≡ 1 (mod m)`.
    pub fn is_den_one_family(&self) -> bool {
        ResiduePairSet::den_congruent(self.m, 1)
            .and_then(|a| from_residue_pairs(&a))
            .is_ok_and(|d| d == *self)
    }

    /// Parses the text format: a `m=<modulus>` header, then one `e11 e12 e21 e22` per line.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty matrix file".into()))?;
        let m: u32 = header
            .strip_prefix("m=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::Parse(format!("expected header `m=<modulus>`, got `{header}`")))?;
        let mut mats = vec![];
        for line in lines {
            let vals: Vec<i64> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad entry `{t}`"))))
                .collect::<Result<_>>()?;
            let [a, b, c, d] = vals[..] else {
                return Err(Error::Parse(format!("expected 4 entries, got `{line}`")));
            };
            mats.push(ModMatrix::new(m, a, b, c, d)?);
        }
        Self::new(m, mats)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("m={}\n", self.m);
        for x in &self.mats {
            out.push_str(&format!("{x}\n"));
        }
        out
    }
}

fn all_entries(m: u32) -> impl Iterator<Item = [u32; 4]> {
    (0..m).flat_map(move |a| {
        (0..m).flat_map(move |b| (0..m).flat_map(move |c| (0..m).map(move |d| [a, b, c, d])))
    })
}

/// True iff `U⁻¹ X` lies in the set for every `X` in it.
pub fn check_closure(mats: &[ModMatrix]) -> bool {
    let set: BTreeSet<&ModMatrix> = mats.iter().collect();
    mats.iter().all(|x| {
        let Ok(u) = ModMatrix::translation_inverse(x.m) else { return false };
        u.mul(x).is_ok_and(|y| set.contains(&y))
    })
}

/// A set `A ⊆ (Z/mZ)²` of residue pairs `(n1, n2)` for `(a, q)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResiduePairSet {
    m: u32,
    pairs: BTreeSet<(u32, u32)>,
}

impl ResiduePairSet {
    /// Pairs are reduced mod `m`; at least one must satisfy `gcd(n1, n2, m) = 1`.
    pub fn new(m: u32, pairs: impl IntoIterator<Item = (i64, i64)>) -> Result<Self> {
        check_modulus(m)?;
        let pairs: BTreeSet<(u32, u32)> = pairs.into_iter().map(|(x, y)| (residue(x, m), residue(y, m))).collect();
        let set = ResiduePairSet { m, pairs };
        if !set.pairs.iter().any(|&p| is_primitive(p, m)) {
            return Err(Error::Validation(format!(
                "residue set mod {m} has no pair (n1, n2) with gcd(n1, n2, m) = 1"
            )));
        }
        Ok(set)
    }

    /// `{(a, r) : a ∈ Z/m}`: denominators congruent to `r`.
    pub fn den_congruent(m: u32, r: i64) -> Result<Self> {
        Self::new(m, (0..m as i64).map(|a| (a, r)))
    }

    /// `{(n1, n2) : n1 ≢ 0}`: numerators not divisible by `m`.
    pub fn num_nonzero(m: u32) -> Result<Self> {
        Self::new(m, grid(m).filter(|&(n1, _)| n1 != 0))
    }

    /// `{(n1, n2) : gcd(n2, m) = 1}`: denominators coprime to `m`.
    pub fn den_coprime(m: u32) -> Result<Self> {
        Self::new(m, grid(m).filter(|&(_, n2)| n2.gcd(&(m as i64)) == 1))
    }

    /// Every primitive pair.
    pub fn all(m: u32) -> Result<Self> {
        Self::new(m, grid(m))
    }

    /// Parses `m:n1,n2;n1,n2;...` or one of the shorthands `den≡r`, `den=r`,
    /// `num≢0`, `num!=0`, `den-coprime`, `all` (which take the modulus from `m`).
    pub fn parse(text: &str, m: u32) -> Result<Self> {
        let t = text.trim();
        if let Some((head, body)) = t.split_once(':') {
            let own: u32 = head.trim().parse().map_err(|_| Error::Parse(format!("bad modulus in `{t}`")))?;
            if own != m {
                return Err(Error::Validation(format!("subset modulus {own} differs from m={m}")));
            }
            let mut pairs = vec![];
            for item in body.split(';').map(str::trim).filter(|s| !s.is_empty()) {
                let (x, y) = item.split_once(',').ok_or_else(|| Error::Parse(format!("bad pair `{item}`")))?;
                let parse = |s: &str| s.trim().parse::<i64>().map_err(|_| Error::Parse(format!("bad residue `{s}`")));
                pairs.push((parse(x)?, parse(y)?));
            }
            return Self::new(m, pairs);
        }
        for prefix in ["den≡", "den="] {
            if let Some(r) = t.strip_prefix(prefix) {
                let r: i64 = r.trim().parse().map_err(|_| Error::Parse(format!("bad residue in `{t}`")))?;
                return Self::den_congruent(m, r);
            }
        }
        match t {
            "num≢0" | "num!=0" => Self::num_nonzero(m),
            "den-coprime" => Self::den_coprime(m),
            "all" => Self::all(m),
            _ => Err(Error::Parse(format!("unrecognized subset `{t}`"))),
        }
    }

    pub fn modulus(&self) -> u32 {
        self.m
    }

    pub fn contains(&self, n1: i64, n2: i64) -> bool {
        self.pairs.contains(&(residue(n1, self.m), residue(n2, self.m)))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.pairs.iter().copied()
    }
}

fn grid(m: u32) -> impl Iterator<Item = (i64, i64)> {
    (0..m as i64).flat_map(move |x| (0..m as i64).map(move |y| (x, y)))
}

fn is_primitive((n1, n2): (u32, u32), m: u32) -> bool {
    n1.gcd(&n2).gcd(&m) == 1
}

/// The cosets `[[n4, n3], [-n2, -n1]] Γ(m)` over all `(n1, n2) ∈ A`.
///
/// Non-primitive pairs label no coset and are skipped. The result is closed
/// under `U⁻¹` because left multiplication by it fixes the bottom row.
pub fn from_residue_pairs(set: &ResiduePairSet) -> Result<CosetSubset> {
    let m = set.m;
    let mut mats = vec![];
    for &(n1, n2) in set.pairs.iter().filter(|&&p| is_primitive(p, m)) {
        let (c, d) = (residue(-(n2 as i64), m), residue(-(n1 as i64), m));
        for x in 0..m {
            for y in 0..m {
                let mat = ModMatrix { e: [x, y, c, d], m };
                if mat.det() == 1 % m {
                    mats.push(mat);
                }
            }
        }
    }
    if mats.is_empty() {
        return Err(Error::Validation("residue set yields no cosets".into()));
    }
    mats.sort();
    mats.dedup();
    Ok(CosetSubset { m, mats })
}

/// Whether the fraction carried by `s` lies in `F_M(Q)`.
pub fn membership(s: &FareyPairState, cosets: &CosetSubset) -> bool {
    cosets.admits(s)
}
