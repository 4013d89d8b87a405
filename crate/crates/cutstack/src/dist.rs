//! Finite laws on (0, ∞], the arctan metric and the two transport distances.
//!
//! Both distances are computed through the comonotone (quantile) coupling: the
//! expected gap for the Vasershtein distance, the largest gap for the uniform one.

use std::cmp::Ordering;
use std::f64::consts::FRAC_PI_2;
use std::fmt;

use num_traits::{CheckedAdd, One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::blocks::Block;
use crate::engine::BlockArray;
use crate::error::{Error, Result};
use crate::scalar::{parse_rational, Rational, Scalar};

/// A value in [0, ∞].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum Ext<W> {
    Fin(W),
    Inf,
}

impl<W: Scalar> Ext<W> {
    pub fn atan(self) -> f64 {
        match self {
            Ext::Fin(x) => x.to_f64().atan(),
            Ext::Inf => FRAC_PI_2,
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Ext::Fin(x) => x.to_f64(),
            Ext::Inf => f64::INFINITY,
        }
    }

    pub fn finite(self) -> Option<W> {
        match self {
            Ext::Fin(x) => Some(x),
            Ext::Inf => None,
        }
    }

    pub fn render(self) -> String {
        match self {
            Ext::Fin(x) => x.render(),
            Ext::Inf => "inf".into(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
            return Ok(Ext::Inf);
        }
        W::parse_str(t).map(Ext::Fin)
    }

    fn cmp_total(&self, o: &Self) -> Ordering {
        self.partial_cmp(o).unwrap_or(Ordering::Equal)
    }
}

impl<W: Scalar> fmt::Display for Ext<W> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// ρ(x, y) = |arctan x − arctan y| on [0, ∞].
pub fn rho(x: f64, y: f64) -> Result<f64> {
    if x.is_nan() || y.is_nan() || x < 0.0 || y < 0.0 {
        return Err(Error::Domain(format!("ρ({x}, {y}) needs arguments in [0, ∞]")));
    }
    Ok(rho_unchecked(x, y))
}

#[inline]
pub(crate) fn rho_unchecked(x: f64, y: f64) -> f64 {
    (x.atan() - y.atan()).abs()
}

fn mass_overflow() -> Error {
    Error::Overflow("sum of masses".into())
}

/// Law with finitely many atoms and exact rational masses.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDist<W: Scalar> {
    atoms: Vec<(Ext<W>, Rational)>,
}

#[derive(Serialize, Deserialize)]
struct AtomJson {
    value: String,
    mass: String,
}

impl<W: Scalar> FiniteDist<W> {
    /// Sorts, merges equal values and drops zero masses; masses must sum to 1.
    pub fn new(mut atoms: Vec<(Ext<W>, Rational)>) -> Result<Self> {
        for (v, m) in &atoms {
            if m.is_negative() {
                return Err(Error::InvalidParameter(format!("negative mass {m} at {v}")));
            }
            if let Ext::Fin(x) = v {
                if !(*x > W::zero()) {
                    return Err(Error::InvalidParameter(format!("atom {} is not positive", x.render())));
                }
            }
        }
        atoms.sort_by(|a, b| a.0.cmp_total(&b.0));
        let mut merged: Vec<(Ext<W>, Rational)> = Vec::with_capacity(atoms.len());
        for (v, m) in atoms {
            if m.is_zero() {
                continue;
            }
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 = last.1.checked_add(&m).ok_or_else(mass_overflow)?,
                _ => merged.push((v, m)),
            }
        }
        let mut total = Rational::from_integer(0);
        for a in &merged {
            total = total.checked_add(&a.1).ok_or_else(mass_overflow)?;
        }
        if !total.is_one() {
            return Err(Error::InvalidParameter(format!("masses sum to {total}, not 1")));
        }
        Ok(FiniteDist { atoms: merged })
    }

    pub fn point(v: Ext<W>) -> Self {
        FiniteDist { atoms: vec![(v, Rational::from_integer(1))] }
    }

    /// Uniform law over a list of values (repetitions add up).
    pub fn uniform_over(values: &[Ext<W>]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("empty value list".into()));
        }
        let m = Rational::new(1, values.len() as i128);
        Self::new(values.iter().map(|&v| (v, m)).collect())
    }

    /// Uniform law over values given sorted, with multiplicities counted in one pass.
    pub(crate) fn from_sorted_counts(values: impl IntoIterator<Item = (Ext<W>, u64)>, n: u64) -> Self {
        let atoms = values.into_iter().map(|(v, c)| (v, Rational::new(c as i128, n as i128))).collect();
        FiniteDist { atoms }
    }

    pub fn atoms(&self) -> &[(Ext<W>, Rational)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn min_value(&self) -> Ext<W> {
        self.atoms[0].0
    }

    pub fn max_value(&self) -> Ext<W> {
        self.atoms[self.atoms.len() - 1].0
    }

    /// P(X ≤ t).
    pub fn cdf_le(&self, t: Ext<W>) -> Rational {
        self.atoms.iter().take_while(|a| a.0 <= t).map(|a| a.1).sum()
    }

    /// P(X < t).
    pub fn cdf_lt(&self, t: Ext<W>) -> Rational {
        self.atoms.iter().take_while(|a| a.0 < t).map(|a| a.1).sum()
    }

    /// P(X ≥ t).
    pub fn tail_ge(&self, t: Ext<W>) -> Rational {
        Rational::from_integer(1) - self.cdf_lt(t)
    }

    /// E(X^α) as a double (∞ when an infinite atom has mass).
    pub fn moment(&self, alpha: f64) -> f64 {
        self.atoms.iter().map(|(v, m)| v.to_f64().powf(alpha) * m.to_f64()).sum()
    }

    pub fn map_values<V: Scalar>(&self, f: impl Fn(Ext<W>) -> Ext<V>) -> Result<FiniteDist<V>> {
        FiniteDist::new(self.atoms.iter().map(|&(v, m)| (f(v), m)).collect())
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<AtomJson> =
            self.atoms.iter().map(|(v, m)| AtomJson { value: v.render(), mass: m.render() }).collect();
        serde_json::to_string(&rows).expect("atoms serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rows: Vec<AtomJson> = serde_json::from_str(s)?;
        if rows.is_empty() {
            return Err(Error::Parse("distribution without atoms".into()));
        }
        let mut atoms = Vec::with_capacity(rows.len());
        for r in rows {
            let v = Ext::<W>::parse(&r.value)?;
            let m = parse_rational(&r.mass)?;
            atoms.push((v, m));
        }
        Self::new(atoms).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Quantile pieces (value, length) in increasing order.
    fn pieces(&self) -> impl Iterator<Item = (f64, Rational)> + '_ {
        self.atoms.iter().map(|(v, m)| (v.atan(), *m))
    }
}

/// Walks the common refinement of the two quantile functions, yielding (gap, length).
fn coupled_gaps<W: Scalar, V: Scalar>(p: &FiniteDist<W>, q: &FiniteDist<V>, mut visit: impl FnMut(f64, Rational)) {
    let mut a = p.pieces().peekable();
    let mut b = q.pieces().peekable();
    let mut ra: Option<(f64, Rational)> = a.next();
    let mut rb: Option<(f64, Rational)> = b.next();
    while let (Some((xa, ma)), Some((xb, mb))) = (ra, rb) {
        let len = if ma < mb { ma } else { mb };
        visit((xa - xb).abs(), len);
        ra = if ma == len { a.next() } else { Some((xa, ma - len)) };
        rb = if mb == len { b.next() } else { Some((xb, mb - len)) };
    }
}

/// ρ-Vasershtein distance.
pub fn vasershtein<W: Scalar, V: Scalar>(p: &FiniteDist<W>, q: &FiniteDist<V>) -> f64 {
    let mut acc = 0.0;
    coupled_gaps(p, q, |g, len| acc += g * len.to_f64());
    acc
}

/// ρ-uniform distance.
pub fn uniform_dist<W: Scalar, V: Scalar>(p: &FiniteDist<W>, q: &FiniteDist<V>) -> f64 {
    let mut acc: f64 = 0.0;
    coupled_gaps(p, q, |g, len| {
        if len > Rational::from_integer(0) {
            acc = acc.max(g);
        }
    });
    acc
}

/// Whether P(X ≤ t) ≤ Q(X ≤ t) for every t in (0, R).
pub fn cdf_dominates_below<W: Scalar>(p: &FiniteDist<W>, q: &FiniteDist<W>, r: W) -> bool {
    let bound = Ext::Fin(r);
    let zero = Ext::Fin(W::zero());
    p.atoms
        .iter()
        .chain(q.atoms.iter())
        .map(|a| a.0)
        .filter(|&t| t > zero && t < bound)
        .all(|t| p.cdf_le(t) <= q.cdf_le(t))
}

/// Law of E(w)/c over the blocks of an array.
pub fn array_mean_dist<W: Scalar>(array: &BlockArray<W>, c: W) -> Result<FiniteDist<W>> {
    if !(c > W::zero()) {
        return Err(Error::InvalidParameter("scale must be positive".into()));
    }
    let vals: Vec<Ext<W>> = array.blocks().iter().map(|b: &Block<W>| Ext::Fin(b.mean() / c)).collect();
    FiniteDist::uniform_over(&vals)
}

/// Symmetric representation: a finite set {1..n} with a value map.
#[derive(Debug, Clone, PartialEq)]
pub struct SymRep<W: Scalar> {
    values: Vec<Ext<W>>,
}

impl<W: Scalar> SymRep<W> {
    pub fn new(values: Vec<Ext<W>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("empty symmetric representation".into()));
        }
        if values.iter().any(|v| matches!(v, Ext::Fin(x) if !(*x > W::zero()))) {
            return Err(Error::InvalidParameter("representation values must be positive".into()));
        }
        Ok(SymRep { values })
    }

    pub fn finite(values: Vec<W>) -> Result<Self> {
        Self::new(values.into_iter().map(Ext::Fin).collect())
    }

    pub fn size(&self) -> usize {
        self.values.len()
    }

    /// Value at 0-based index.
    pub fn value(&self, i: usize) -> Ext<W> {
        self.values[i]
    }

    pub fn values(&self) -> &[Ext<W>] {
        &self.values
    }

    /// Finite values, or an error naming the first infinite one.
    pub fn finite_values(&self) -> Result<Vec<W>> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| v.finite().ok_or_else(|| Error::Domain(format!("value {} is infinite", i + 1))))
            .collect()
    }

    pub fn dist(&self) -> FiniteDist<W> {
        FiniteDist::uniform_over(&self.values).expect("nonempty positive values")
    }
}

/// A surjection Ξ → Ω with fibers of equal size, between two representations.
#[derive(Debug, Clone, PartialEq)]
pub struct Splitting<W: Scalar> {
    source: SymRep<W>,
    target: SymRep<W>,
    projection: Vec<usize>,
}

impl<W: Scalar> Splitting<W> {
    /// `projection[ξ]` is the 0-based image of ξ in Ω.
    pub fn new(source: SymRep<W>, target: SymRep<W>, projection: Vec<usize>) -> Result<Self> {
        let nx = source.size();
        let no = target.size();
        if projection.len() != nx {
            return Err(Error::InvalidSplitting(format!(
                "projection has {} entries for {nx} points",
                projection.len()
            )));
        }
        if !nx.is_multiple_of(no) {
            return Err(Error::InvalidSplitting(format!("{nx} points cannot split evenly over {no}")));
        }
        let mut fiber = vec![0usize; no];
        for &o in &projection {
            if o >= no {
                return Err(Error::InvalidSplitting(format!("image {o} out of range")));
            }
            fiber[o] += 1;
        }
        let want = nx / no;
        if let Some(o) = fiber.iter().position(|&c| c != want) {
            return Err(Error::InvalidSplitting(format!(
                "fiber over {} has {} points, expected {want}",
                o + 1,
                fiber[o]
            )));
        }
        Ok(Splitting { source, target, projection })
    }

    pub fn source(&self) -> &SymRep<W> {
        &self.source
    }

    pub fn target(&self) -> &SymRep<W> {
        &self.target
    }

    pub fn projection(&self) -> &[usize] {
        &self.projection
    }

    /// E_Ξ ρ(g, f∘π).
    pub fn cost(&self) -> f64 {
        let n = self.source.size() as f64;
        self.projection
            .iter()
            .enumerate()
            .map(|(x, &o)| (self.source.value(x).atan() - self.target.value(o).atan()).abs())
            .sum::<f64>()
            / n
    }

    pub fn splits(&self, eps: f64) -> bool {
        self.cost() < eps
    }
}

/// Distances between the uniform law on `xs` (doubles, any order) and a finite target,
/// as (Vasershtein, uniform).  Partially reorders `xs`.
pub fn sample_distances<W: Scalar>(xs: &mut [f64], target: &FiniteDist<W>) -> (f64, f64) {
    let n = xs.len();
    assert!(n > 0, "empty sample");
    let nf = n as f64;
    // cumulative target breakpoints in units of 1/n
    let mut cuts = Vec::with_capacity(target.len());
    let mut acc = Rational::from_integer(0);
    for (_, m) in target.atoms() {
        acc += *m;
        cuts.push(acc.to_f64() * nf);
    }
    let ys: Vec<f64> = target.atoms().iter().map(|a| a.0.atan()).collect();
    if target.len() > 16 {
        xs.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    } else {
        let mut lo = 0usize;
        for &c in &cuts[..cuts.len() - 1] {
            let idx = (c.floor() as usize).min(n - 1);
            if idx > lo {
                xs[lo..].select_nth_unstable_by(idx - lo, |a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
                lo = idx;
            }
        }
    }
    let mut v = 0.0;
    let mut u: f64 = 0.0;
    let mut start = 0.0f64;
    for (j, &end) in cuts.iter().enumerate() {
        let y = ys[j];
        let i0 = start.floor() as usize;
        let i1 = (end.ceil() as usize).min(n);
        for (i, &x) in xs.iter().enumerate().take(i1).skip(i0) {
            let a = (i as f64).max(start);
            let b = ((i + 1) as f64).min(end);
            if b > a {
                let g = (x.atan() - y).abs();
                v += g * (b - a);
                u = u.max(g);
            }
        }
        start = end;
    }
    (v / nf, u)
}

/// Like [`sample_distances`] for a sample given as (value, multiplicity) pairs.
pub fn weighted_distances<W: Scalar>(items: &mut [(f64, u64)], target: &FiniteDist<W>) -> (f64, f64) {
    let total: u64 = items.iter().map(|x| x.1).sum();
    assert!(total > 0, "empty sample");
    let tf = total as f64;
    items.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    let mut cuts = Vec::with_capacity(target.len());
    let mut acc = Rational::from_integer(0);
    for (_, m) in target.atoms() {
        acc += *m;
        cuts.push(acc.to_f64() * tf);
    }
    let ys: Vec<f64> = target.atoms().iter().map(|a| a.0.atan()).collect();
    let (mut v, mut u) = (0.0f64, 0.0f64);
    let mut j = 0;
    let mut lo = 0.0f64;
    for &(x, w) in items.iter() {
        let hi = lo + w as f64;
        let xa = x.atan();
        let mut a = lo;
        while a < hi && j < cuts.len() {
            let b = hi.min(cuts[j]);
            if b > a {
                let g = (xa - ys[j]).abs();
                v += g * (b - a);
                u = u.max(g);
                a = b;
            }
            if cuts[j] <= a {
                if j + 1 == cuts.len() {
                    break;
                }
                j += 1;
            }
        }
        lo = hi;
    }
    (v / tf, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;

    fn d(pairs: &[(i128, i128, i128)]) -> FiniteDist<Rational> {
        FiniteDist::new(pairs.iter().map(|&(v, n, m)| (Ext::Fin(rat(v, 1)), rat(n, m))).collect()).unwrap()
    }

    #[test]
    fn huge_masses_are_an_error() {
        let big = rat(i128::MAX / 3, i128::MAX / 2 - 1);
        let r = FiniteDist::<Rational>::new(vec![(Ext::Fin(rat(1, 1)), big), (Ext::Fin(rat(1, 1)), rat(1, 3))]);
        assert!(r.is_err());
    }

    #[test]
    fn rho_examples() {
        assert_eq!(rho(3.0, 3.0).unwrap(), 0.0);
        assert!((rho(0.0, f64::INFINITY).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!((rho(1.0, 2.0).unwrap() - 0.3217505543966422).abs() < 1e-12);
        assert!(rho(-1.0, 2.0).is_err());
    }

    #[test]
    fn distance_examples() {
        let p = d(&[(1, 1, 2), (2, 1, 2)]);
        let one = d(&[(1, 1, 1)]);
        let r12 = rho(1.0, 2.0).unwrap();
        assert_eq!(vasershtein(&p, &p), 0.0);
        assert_eq!(uniform_dist(&p, &p), 0.0);
        assert!((vasershtein(&p, &one) - r12 / 2.0).abs() < 1e-15);
        assert!((uniform_dist(&p, &one) - r12).abs() < 1e-15);
        let two = d(&[(2, 1, 1)]);
        assert!((vasershtein(&one, &two) - r12).abs() < 1e-15);
    }

    #[test]
    fn dominance_examples() {
        let one = d(&[(1, 1, 1)]);
        let two = d(&[(2, 1, 1)]);
        assert!(cdf_dominates_below(&one, &one, rat(3, 1)));
        assert!(cdf_dominates_below(&two, &one, rat(3, 1)));
        assert!(!cdf_dominates_below(&one, &two, rat(3, 1)));
    }

    #[test]
    fn json_round_trip_and_validation() {
        let p = FiniteDist::<Rational>::new(vec![(Ext::Fin(rat(1, 2)), rat(1, 3)), (Ext::Inf, rat(2, 3))]).unwrap();
        let s = p.to_json();
        assert_eq!(FiniteDist::<Rational>::from_json(&s).unwrap(), p);
        assert!(FiniteDist::<Rational>::from_json(r#"[{"value":"1","mass":"1/2"}]"#).is_err());
        assert!(FiniteDist::<Rational>::from_json(r#"[{"value":"-1","mass":"1"}]"#).is_err());
        assert!(FiniteDist::<Rational>::from_json("[]").is_err());
        let merged =
            FiniteDist::<Rational>::from_json(r#"[{"value":"2","mass":"1/2"},{"value":"2.0","mass":"0.5"}]"#).unwrap();
        assert_eq!(merged.len(), 1);
    }

    #[test]
    fn sample_distances_match_exact_walk() {
        let target = d(&[(1, 1, 3), (2, 1, 3), (5, 1, 3)]);
        let xs = [3.0, 1.0, 1.5, 2.0, 7.0, 0.5];
        let exact = FiniteDist::<f64>::uniform_over(&xs.iter().map(|&x| Ext::Fin(x)).collect::<Vec<_>>()).unwrap();
        let mut buf = xs.to_vec();
        let (v, u) = sample_distances(&mut buf, &target);
        assert!((v - vasershtein(&exact, &target)).abs() < 1e-12);
        assert!((u - uniform_dist(&exact, &target)).abs() < 1e-12);
        let mut items: Vec<(f64, u64)> = xs.iter().map(|&x| (x, 2)).collect();
        let (wv, wu) = weighted_distances(&mut items, &target);
        assert!((wv - v).abs() < 1e-12 && (wu - u).abs() < 1e-12);
    }

    #[test]
    fn splitting_validation() {
        let omega = SymRep::<Rational>::finite(vec![rat(1, 1), rat(2, 1)]).unwrap();
        let xi = SymRep::<Rational>::finite(vec![rat(1, 1), rat(1, 1), rat(2, 1), rat(3, 1)]).unwrap();
        assert!(Splitting::new(xi.clone(), omega.clone(), vec![0, 0, 0, 1]).is_err());
        let s = Splitting::new(xi, omega, vec![0, 0, 1, 1]).unwrap();
        assert!((s.cost() - rho(2.0, 3.0).unwrap() / 4.0).abs() < 1e-15);
    }
}
