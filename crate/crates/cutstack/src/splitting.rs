//! Dyadic rational approximations of a target law through its quantile function.
//!
//! At depth n the point x ∈ {0,1}^n carries ψ_n(x) = Φ((m(x)+1)/2^n), where m(x) is x read
//! as a binary number (first bit most significant) and Φ is the left-continuous quantile.

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dist::{Ext, FiniteDist, Splitting, SymRep};
use crate::error::{Error, Result};
use crate::scalar::{parse_rational, rat, rational_to_f64, Mode, Rational, Scalar};

/// A number in a config file: a string ("3/2", "0.25", "inf") or a JSON number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumLit {
    Str(String),
    Num(f64),
}

impl NumLit {
    pub fn as_f64(&self) -> Result<f64> {
        match self {
            NumLit::Num(x) => Ok(*x),
            NumLit::Str(s) => Ok(rational_to_f64(parse_rational(s)?)),
        }
    }

    /// Exact value; JSON numbers are accepted only when they are integers.
    pub fn as_rational(&self) -> Result<Rational> {
        match self {
            NumLit::Str(s) => parse_rational(s),
            NumLit::Num(x) if x.fract() == 0.0 && x.abs() < 1e15 => Ok(Rational::from_integer(*x as i128)),
            NumLit::Num(x) => Err(Error::Parse(format!("{x} is not an exact number; quote it as \"p/q\""))),
        }
    }

    /// Whether the literal forces float arithmetic.
    pub fn is_decimal(&self) -> bool {
        match self {
            NumLit::Str(s) => crate::scalar::is_decimal_literal(s),
            NumLit::Num(x) => x.fract() != 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomSpec {
    pub value: NumLit,
    pub mass: NumLit,
}

/// Target specification as it appears in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Points {
        atoms: Vec<AtomSpec>,
    },
    /// Φ(u) = scale·(1−u)^{−1/alpha}.
    Pareto {
        alpha: NumLit,
        #[serde(default = "one_lit")]
        scale: NumLit,
    },
    Lognormal {
        mu: NumLit,
        sigma: NumLit,
    },
    /// Φ(u) = shift − ln(1−u)/rate.
    ShiftedExponential {
        shift: NumLit,
        rate: NumLit,
    },
    /// Φ(u) = values[i] for breaks[i−1] < u ≤ breaks[i] (breaks end at 1).
    Table {
        breaks: Vec<NumLit>,
        values: Vec<NumLit>,
    },
    /// The law of 1/Y.
    Reciprocal {
        of: Box<TargetSpec>,
    },
}

fn one_lit() -> NumLit {
    NumLit::Str("1".into())
}

impl TargetSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Whether every quantile value is rational (exact mode possible).
    pub fn is_exact(&self) -> bool {
        TargetDist::from_spec(self).map(|t| t.is_exact()).unwrap_or(false)
    }
}

/// A validated target law on (0, ∞).
#[derive(Clone, Debug, PartialEq)]
pub enum TargetDist {
    Finite(FiniteDist<Rational>),
    Pareto { alpha: f64, scale: Rational, exact_power: Option<u32> },
    Lognormal { mu: f64, sigma: f64 },
    ShiftedExp { shift: f64, rate: f64 },
    Reciprocal(Box<TargetDist>),
}

fn positive(x: f64, what: &str) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(Error::InvalidParameter(format!("{what} must be positive and finite")))
    }
}

impl TargetDist {
    pub fn from_spec(spec: &TargetSpec) -> Result<Self> {
        match spec {
            TargetSpec::Points { atoms } => {
                if atoms.is_empty() {
                    return Err(Error::InvalidParameter("points target without atoms".into()));
                }
                let mut v = Vec::with_capacity(atoms.len());
                for a in atoms {
                    let value = match &a.value {
                        NumLit::Str(s) => Ext::parse(s)?,
                        n => Ext::Fin(n.as_rational()?),
                    };
                    v.push((value, a.mass.as_rational()?));
                }
                Ok(TargetDist::Finite(FiniteDist::new(v)?))
            }
            TargetSpec::Table { breaks, values } => {
                if breaks.len() != values.len() || breaks.is_empty() {
                    return Err(Error::InvalidParameter("table needs one value per break".into()));
                }
                let mut prev = Rational::from_integer(0);
                let mut v = Vec::with_capacity(values.len());
                let mut last: Option<Ext<Rational>> = None;
                for (b, x) in breaks.iter().zip(values) {
                    let b = b.as_rational()?;
                    if b <= prev || b > Rational::from_integer(1) {
                        return Err(Error::InvalidParameter("table breaks must increase within (0, 1]".into()));
                    }
                    let x = match x {
                        NumLit::Str(s) => Ext::parse(s)?,
                        n => Ext::Fin(n.as_rational()?),
                    };
                    if last.is_some_and(|l| x < l) {
                        return Err(Error::InvalidParameter("table values must be nondecreasing".into()));
                    }
                    last = Some(x);
                    v.push((x, b - prev));
                    prev = b;
                }
                if !prev.is_one() {
                    return Err(Error::InvalidParameter("last table break must be 1".into()));
                }
                Ok(TargetDist::Finite(FiniteDist::new(v)?))
            }
            TargetSpec::Pareto { alpha, scale } => {
                let a = positive(alpha.as_f64()?, "Pareto alpha")?;
                let scale = scale.as_rational()?;
                if scale <= Rational::from_integer(0) {
                    return Err(Error::InvalidParameter("Pareto scale must be positive".into()));
                }
                // 1/alpha integral keeps every quantile rational
                let exact_power = alpha.as_rational().ok().and_then(|r| {
                    let inv = r.recip();
                    (inv.is_integer() && *inv.numer() > 0 && *inv.numer() <= 8).then(|| *inv.numer() as u32)
                });
                Ok(TargetDist::Pareto { alpha: a, scale, exact_power })
            }
            TargetSpec::Lognormal { mu, sigma } => {
                let mu = mu.as_f64()?;
                if !mu.is_finite() {
                    return Err(Error::InvalidParameter("lognormal mu must be finite".into()));
                }
                Ok(TargetDist::Lognormal { mu, sigma: positive(sigma.as_f64()?, "lognormal sigma")? })
            }
            TargetSpec::ShiftedExponential { shift, rate } => {
                let shift = shift.as_f64()?;
                if !(shift >= 0.0 && shift.is_finite()) {
                    return Err(Error::InvalidParameter("shift must be nonnegative".into()));
                }
                Ok(TargetDist::ShiftedExp { shift, rate: positive(rate.as_f64()?, "rate")? })
            }
            TargetSpec::Reciprocal { of } => TargetDist::from_spec(of)?.reciprocal(),
        }
    }

    /// The law of 1/Y.
    pub fn reciprocal(&self) -> Result<TargetDist> {
        match self {
            TargetDist::Finite(d) => {
                if d.min_value() == Ext::Inf {
                    return Err(Error::InvalidParameter("reciprocal of a law at ∞".into()));
                }
                let r = d.map_values(|v| match v {
                    Ext::Fin(x) => Ext::Fin(x.recip()),
                    Ext::Inf => Ext::Fin(Rational::from_integer(0)),
                });
                Ok(TargetDist::Finite(
                    r.map_err(|_| Error::InvalidParameter("reciprocal target would have an atom at 0".into()))?,
                ))
            }
            TargetDist::Reciprocal(inner) => Ok((**inner).clone()),
            t => Ok(TargetDist::Reciprocal(Box::new(t.clone()))),
        }
    }

    /// A finite stand-in: the exact atoms, or 2^bits quantile midpoints.
    pub fn proxy(&self, bits: u32) -> Result<FiniteDist<f64>> {
        if let TargetDist::Finite(d) = self {
            return d.map_values(|v| match v {
                Ext::Fin(x) => Ext::Fin(rational_to_f64(x)),
                Ext::Inf => Ext::Inf,
            });
        }
        let n = 1u64 << bits;
        let vals: Vec<Ext<f64>> = (0..n)
            .map(|i| {
                let x = self.quantile((i as f64 + 0.5) / n as f64);
                if x.is_finite() {
                    Ext::Fin(x)
                } else {
                    Ext::Inf
                }
            })
            .collect();
        FiniteDist::uniform_over(&vals)
    }

    /// Smallest value of the law, when it is positive.
    pub fn lower_bound(&self) -> f64 {
        match self {
            TargetDist::Finite(d) => d.min_value().to_f64(),
            TargetDist::Pareto { scale, .. } => rational_to_f64(*scale),
            TargetDist::ShiftedExp { shift, .. } => *shift,
            TargetDist::Lognormal { .. } => 0.0,
            TargetDist::Reciprocal(t) => {
                let q = t.quantile(1.0);
                if q.is_finite() {
                    1.0 / q
                } else {
                    0.0
                }
            }
        }
    }

    pub fn is_exact(&self) -> bool {
        match self {
            TargetDist::Finite(_) => true,
            TargetDist::Pareto { exact_power, .. } => exact_power.is_some(),
            TargetDist::Reciprocal(t) => t.is_exact(),
            _ => false,
        }
    }

    /// The atoms, for finite targets.
    pub fn finite(&self) -> Option<&FiniteDist<Rational>> {
        match self {
            TargetDist::Finite(d) => Some(d),
            _ => None,
        }
    }

    /// Left-continuous quantile at u ∈ (0, 1].
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            TargetDist::Finite(d) => finite_quantile(d, |c| rational_to_f64(c) >= u).to_f64(),
            TargetDist::Pareto { alpha, scale, .. } => {
                if u >= 1.0 {
                    f64::INFINITY
                } else {
                    rational_to_f64(*scale) * (1.0 - u).powf(-1.0 / alpha)
                }
            }
            TargetDist::Lognormal { mu, sigma } => {
                if u >= 1.0 {
                    f64::INFINITY
                } else {
                    let z = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(u);
                    (mu + sigma * z).exp()
                }
            }
            TargetDist::ShiftedExp { shift, rate } => {
                if u >= 1.0 {
                    f64::INFINITY
                } else {
                    shift - (-u).ln_1p() / rate
                }
            }
            TargetDist::Reciprocal(t) => 1.0 / t.quantile(1.0 - u),
        }
    }

    /// Exact quantile at a rational u ∈ (0, 1], when the family allows it.
    pub fn quantile_exact(&self, u: Rational) -> Option<Ext<Rational>> {
        match self {
            TargetDist::Finite(d) => Some(finite_quantile(d, |c| c >= u)),
            TargetDist::Pareto { scale, exact_power: Some(n), .. } => {
                let rest = Rational::from_integer(1) - u;
                if rest.is_zero() {
                    return Some(Ext::Inf);
                }
                let mut x = *scale;
                for _ in 0..*n {
                    x = num_traits::CheckedDiv::checked_div(&x, &rest)?;
                }
                Some(Ext::Fin(x))
            }
            TargetDist::Reciprocal(t) => match t.quantile_exact(Rational::from_integer(1) - u)? {
                Ext::Fin(x) if !x.is_zero() => Some(Ext::Fin(x.recip())),
                Ext::Inf => Some(Ext::Fin(Rational::from_integer(0))),
                _ => None,
            },
            _ => None,
        }
    }

    /// Quantile in the arithmetic of `W`.
    pub fn quantile_at<W: Scalar>(&self, u: Rational) -> Result<Ext<W>> {
        if let Some(q) = self.quantile_exact(u) {
            return Ok(match q {
                Ext::Fin(x) => Ext::Fin(W::from_rational(x)),
                Ext::Inf => Ext::Inf,
            });
        }
        if W::MODE == Mode::Exact {
            return Err(Error::InvalidParameter("target has irrational quantiles; float mode required".into()));
        }
        let x = self.quantile(rational_to_f64(u));
        Ok(if x.is_infinite() { Ext::Inf } else { Ext::Fin(W::parse_str(&format!("{x:e}"))?) })
    }

    /// P(Y ≤ x).
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            TargetDist::Finite(d) => {
                d.atoms().iter().take_while(|a| a.0.to_f64() <= x).map(|a| rational_to_f64(a.1)).sum()
            }
            TargetDist::Pareto { alpha, scale, .. } => {
                let s = rational_to_f64(*scale);
                if x <= s {
                    0.0
                } else {
                    1.0 - (s / x).powf(*alpha)
                }
            }
            TargetDist::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    Normal::new(*mu, *sigma).expect("valid normal").cdf(x.ln())
                }
            }
            TargetDist::ShiftedExp { shift, rate } => {
                if x <= *shift {
                    0.0
                } else {
                    -(-(x - shift) * rate).exp_m1()
                }
            }
            TargetDist::Reciprocal(t) => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0 - t.cdf(1.0 / x)
                }
            }
        }
    }

    /// Whether E(Y^a) < ∞.
    pub fn moment_finite(&self, a: f64) -> bool {
        match self {
            TargetDist::Finite(d) => d.max_value() != Ext::Inf,
            TargetDist::Pareto { alpha, .. } => a < *alpha,
            TargetDist::Reciprocal(t) => match &**t {
                // 1/Y ≤ 1/scale
                TargetDist::Pareto { .. } => true,
                TargetDist::ShiftedExp { shift, .. } => *shift > 0.0 || a < 1.0,
                _ => true,
            },
            _ => true,
        }
    }

    /// ∫_t^∞ P(Y^a > s) ds = E(Y^a − t)^+, or ∞.
    pub fn tail_integral(&self, a: f64, t: f64) -> f64 {
        if !self.moment_finite(a) {
            return f64::INFINITY;
        }
        match self {
            TargetDist::Finite(d) => {
                d.atoms().iter().map(|(v, m)| (v.to_f64().powf(a) - t).max(0.0) * rational_to_f64(*m)).sum()
            }
            TargetDist::Pareto { alpha, scale, .. } => {
                // Y^a is Pareto with scale s^a and index r = alpha/a
                let xm = rational_to_f64(*scale).powf(a);
                let r = alpha / a;
                if t <= xm {
                    xm * r / (r - 1.0) - t
                } else {
                    xm.powf(r) * t.powf(1.0 - r) / (r - 1.0)
                }
            }
            _ => {
                // u = 1 − e^{−s}, midpoint rule in s
                let n = 40_000;
                let top = 40.0;
                let ds = top / n as f64;
                (0..n)
                    .map(|i| {
                        let s = (i as f64 + 0.5) * ds;
                        let u = -(-s).exp_m1();
                        if u >= 1.0 {
                            return 0.0;
                        }
                        (self.quantile(u).powf(a) - t).max(0.0) * (-s).exp() * ds
                    })
                    .sum()
            }
        }
    }

    /// Mean of arctan ψ_n over {0,1}^n.
    fn mean_atan(&self, n: u32) -> f64 {
        let size = 1u64 << n;
        if let TargetDist::Finite(d) = self {
            let mut acc = 0.0;
            let mut prev = 0i128;
            let mut cum = Rational::from_integer(0);
            for (v, m) in d.atoms() {
                cum += *m;
                let hi = (cum * Rational::from_integer(size as i128)).floor().to_integer();
                acc += (hi - prev) as f64 * v.atan();
                prev = hi;
            }
            return acc / size as f64;
        }
        let mut acc = 0.0;
        for j in 1..=size {
            acc += self.quantile(j as f64 / size as f64).atan();
        }
        acc / size as f64
    }
}

fn finite_quantile(d: &FiniteDist<Rational>, reached: impl Fn(Rational) -> bool) -> Ext<Rational> {
    let mut cum = Rational::from_integer(0);
    for (v, m) in d.atoms() {
        cum += *m;
        if reached(cum) {
            return *v;
        }
    }
    d.max_value()
}

/// ψ_n at a bit string (first bit weighs 1/2).
pub fn psi<W: Scalar>(target: &TargetDist, bits: &[bool]) -> Result<Ext<W>> {
    let n = bits.len() as u32;
    if n == 0 || n > 62 {
        return Err(Error::InvalidParameter("bit string length must lie in 1..=62".into()));
    }
    let m = bits.iter().fold(0i128, |acc, &b| acc * 2 + b as i128);
    target.quantile_at(rat(m + 1, 1i128 << n))
}

/// The representation at depth n: index m carries ψ_n of the bits of m.
#[derive(Clone, Debug, PartialEq)]
pub struct DyadicRep<W: Scalar> {
    pub depth: u32,
    pub rep: SymRep<W>,
}

pub const MAX_DEPTH: u32 = 24;

/// Values above `cap` (including ∞) are lowered to it.
pub fn dyadic_rep<W: Scalar>(target: &TargetDist, n: u32, cap: Option<Ext<W>>) -> Result<DyadicRep<W>> {
    if n == 0 || n > MAX_DEPTH {
        return Err(Error::InvalidParameter(format!("depth {n} outside 1..={MAX_DEPTH}")));
    }
    let size = 1i128 << n;
    let mut vals = Vec::with_capacity(size as usize);
    for m in 0..size {
        let mut v = target.quantile_at::<W>(rat(m + 1, size))?;
        if let Some(c) = cap {
            if v > c {
                v = c;
            }
        }
        vals.push(v);
    }
    Ok(DyadicRep { depth: n, rep: SymRep::new(vals)? })
}

/// The restriction {0,1}^m → {0,1}^n (n < m) as a splitting of the coarse representation.
pub fn restriction<W: Scalar>(fine: &DyadicRep<W>, coarse: &DyadicRep<W>) -> Result<Splitting<W>> {
    if fine.depth <= coarse.depth {
        return Err(Error::InvalidParameter("restriction needs a deeper source".into()));
    }
    let shift = fine.depth - coarse.depth;
    let proj = (0..fine.rep.size()).map(|i| i >> shift).collect();
    Splitting::new(fine.rep.clone(), coarse.rep.clone(), proj)
}

/// E ρ(ψ_n∘π, ψ_m) over {0,1}^m.  Since ψ_m ≤ ψ_n∘π, this is mean atan ψ_n − mean atan ψ_m.
pub fn split_cost(target: &TargetDist, n: u32, m: u32) -> Result<f64> {
    if n == 0 || m <= n {
        return Err(Error::InvalidParameter("split_cost needs 1 ≤ n < m".into()));
    }
    if m > MAX_DEPTH + 8 {
        return Err(Error::InvalidParameter(format!("depth {m} too large")));
    }
    Ok((target.mean_atan(n) - target.mean_atan(m)).max(0.0))
}

/// P(Y_k < t) ≤ P(Y < t) for t < r, checked at every atom of the representation.
pub fn dominates_target<W: Scalar>(rep: &SymRep<W>, target: &TargetDist, r: Ext<W>) -> bool {
    let d = rep.dist();
    let mut cum = Rational::from_integer(0);
    for (v, m) in d.atoms() {
        if *v >= r {
            break;
        }
        cum += *m;
        // t just above v
        let ok = match (target.finite(), v.finite().and_then(|x| x.to_rational())) {
            (Some(fd), Some(x)) => cum <= fd.cdf_le(Ext::Fin(x)),
            _ => rational_to_f64(cum) <= target.cdf(v.to_f64()) + 1e-12,
        };
        if !ok {
            return false;
        }
    }
    true
}

#[derive(Clone, Debug)]
pub struct SplitSequence<W: Scalar> {
    pub reps: Vec<DyadicRep<W>>,
    /// split_cost(n_k, n_{k+1}).
    pub costs: Vec<f64>,
    /// split_cost(n_k, n_k + G), the proxy for the distance to the limit.
    pub tail_proxies: Vec<f64>,
    /// R = Φ(1 − 2^{−n_1}).
    pub floor_r: Ext<W>,
    pub depth_floors: Vec<Ext<W>>,
    pub truncated: bool,
}

impl<W: Scalar> SplitSequence<W> {
    pub fn depths(&self) -> Vec<u32> {
        self.reps.iter().map(|r| r.depth).collect()
    }

    /// Consecutive restrictions.
    pub fn splittings(&self) -> Result<Vec<Splitting<W>>> {
        self.reps.windows(2).map(|w| restriction(&w[1], &w[0])).collect()
    }
}

/// Picks n_1 < n_2 < … greedily: n_k is the least depth whose tail proxy is below ε_k/2,
/// and consecutive costs must stay below ε_k.
pub fn build_split_sequence<W: Scalar>(
    target: &TargetDist,
    eps: &[f64],
    max_depth: u32,
    guard: u32,
    truncate: bool,
) -> Result<SplitSequence<W>> {
    if eps.is_empty() || eps.iter().any(|&e| !(e > 0.0)) || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("ε schedule must be positive and strictly decreasing".into()));
    }
    let max_depth = max_depth.min(MAX_DEPTH);
    let probe = |n: u32| -> Result<f64> {
        let m = (n + guard.max(1)).min(MAX_DEPTH.max(n + 1));
        split_cost(target, n, m)
    };
    let mut depths = Vec::with_capacity(eps.len());
    let mut proxies = Vec::with_capacity(eps.len());
    let mut n = 0u32;
    for &e in eps {
        n += 1;
        loop {
            if n > max_depth {
                let mut costs = proxies.clone();
                costs.push(probe(max_depth).unwrap_or(f64::NAN));
                return Err(Error::DepthCap { max_depth, costs });
            }
            let t = probe(n)?;
            if t < e / 2.0 {
                proxies.push(t);
                break;
            }
            n += 1;
        }
        depths.push(n);
    }
    let mut costs = Vec::with_capacity(depths.len());
    for (k, w) in depths.windows(2).enumerate() {
        let c = split_cost(target, w[0], w[1])?;
        if !(c < eps[k]) {
            costs.push(c);
            return Err(Error::DepthCap { max_depth, costs });
        }
        costs.push(c);
    }
    let floor_at = |n: u32| target.quantile_at::<W>(Rational::from_integer(1) - rat(1, 1i128 << n));
    let floor_r = floor_at(depths[0])?;
    let depth_floors = depths.iter().map(|&n| floor_at(n)).collect::<Result<Vec<_>>>()?;
    let cap = if truncate { Some(floor_r) } else { None };
    let reps = depths.iter().map(|&n| dyadic_rep(target, n, cap)).collect::<Result<Vec<_>>>()?;
    for r in &reps {
        if !dominates_target(&r.rep, target, floor_r) {
            return Err(Error::Construction(format!("depth {} fails cdf domination below R", r.depth)));
        }
    }
    Ok(SplitSequence { reps, costs, tail_proxies: proxies, floor_r, depth_floors, truncated: truncate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::vasershtein;

    fn uniform12() -> TargetDist {
        TargetDist::from_spec(
            &TargetSpec::from_json(
                r#"{"family":"points","atoms":[{"value":"1","mass":"1/2"},{"value":"2","mass":"1/2"}]}"#,
            )
            .unwrap(),
        )
        .unwrap()
    }

    fn pareto1() -> TargetDist {
        TargetDist::from_spec(&TargetSpec::from_json(r#"{"family":"pareto","alpha":"1"}"#).unwrap()).unwrap()
    }

    fn brute_cost(t: &TargetDist, n: u32, m: u32) -> f64 {
        let size = 1u64 << m;
        (0..size)
            .map(|j| {
                let i = j >> (m - n);
                let a = t.quantile((i + 1) as f64 / (1u64 << n) as f64).atan();
                let b = t.quantile((j + 1) as f64 / size as f64).atan();
                (a - b).abs()
            })
            .sum::<f64>()
            / size as f64
    }

    #[test]
    fn psi_examples() {
        let t = uniform12();
        assert_eq!(psi::<Rational>(&t, &[false]).unwrap(), Ext::Fin(rat(1, 1)));
        assert_eq!(psi::<Rational>(&t, &[true]).unwrap(), Ext::Fin(rat(2, 1)));
        let c = TargetDist::Finite(FiniteDist::point(Ext::Fin(rat(3, 1))));
        for bits in [[false, true, true], [true, true, true], [false, false, false]] {
            assert_eq!(psi::<Rational>(&c, &bits).unwrap(), Ext::Fin(rat(3, 1)));
        }
        let p = pareto1();
        assert_eq!(psi::<Rational>(&p, &[true, true]).unwrap(), Ext::Inf);
        assert_eq!(psi::<Rational>(&p, &[false, true]).unwrap(), Ext::Fin(rat(2, 1)));
    }

    #[test]
    fn psi_monotone_in_bits() {
        let t =
            TargetDist::from_spec(&TargetSpec::from_json(r#"{"family":"lognormal","mu":"0","sigma":"1"}"#).unwrap())
                .unwrap();
        let r = dyadic_rep::<f64>(&t, 6, None).unwrap();
        assert!(r.rep.values().windows(2).all(|w| w[0] <= w[1]));
        assert!(matches!(dyadic_rep::<Rational>(&t, 3, None), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn costs() {
        let t = uniform12();
        assert_eq!(split_cost(&t, 1, 2).unwrap(), 0.0);
        let p = pareto1();
        let c = split_cost(&p, 2, 3).unwrap();
        assert!((c - brute_cost(&p, 2, 3)).abs() < 1e-12, "{c}");
        assert!(c > 0.0);
        let c = TargetDist::Finite(FiniteDist::point(Ext::Fin(rat(5, 2))));
        assert_eq!(split_cost(&c, 3, 9).unwrap(), 0.0);
    }

    #[test]
    fn sequences() {
        let s = build_split_sequence::<Rational>(&uniform12(), &[0.2, 0.1, 0.05], 10, 8, false).unwrap();
        assert_eq!(s.depths(), vec![1, 2, 3]);
        assert!(s.costs.iter().all(|&c| c == 0.0));
        assert_eq!(s.reps[0].rep.dist(), uniform12().finite().unwrap().clone());
        assert_eq!(s.floor_r, Ext::Fin(rat(1, 1)));
        for sp in s.splittings().unwrap() {
            assert_eq!(sp.cost(), 0.0);
        }

        let c = TargetDist::Finite(FiniteDist::point(Ext::Fin(rat(2, 1))));
        let s = build_split_sequence::<Rational>(&c, &[0.5, 0.25], 10, 8, false).unwrap();
        assert_eq!(s.depths(), vec![1, 2]);
        assert_eq!(s.floor_r, Ext::Fin(rat(2, 1)));

        let p = pareto1();
        let s = build_split_sequence::<Rational>(&p, &[0.2, 0.1, 0.05], 16, 8, true).unwrap();
        assert!(s.costs.windows(2).all(|w| w[1] < w[0]), "{:?}", s.costs);
        for w in s.reps.windows(2) {
            let d = vasershtein(&w[0].rep.dist(), &w[1].rep.dist());
            let c = split_cost(&p, w[0].depth, w[1].depth).unwrap();
            assert!(d <= c + 1e-10);
        }
        assert!(s.reps.iter().all(|r| r.rep.finite_values().is_ok()));
        assert!(matches!(
            build_split_sequence::<Rational>(&p, &[0.2, 0.1, 0.001], 6, 8, true),
            Err(Error::DepthCap { .. })
        ));
    }

    #[test]
    fn reciprocal_and_tails() {
        let spec = TargetSpec::from_json(r#"{"family":"reciprocal","of":{"family":"pareto","alpha":"1"}}"#).unwrap();
        let r = TargetDist::from_spec(&spec).unwrap();
        assert!(r.is_exact());
        assert_eq!(r.quantile_exact(rat(1, 4)), Some(Ext::Fin(rat(1, 4))));
        let p = pareto1();
        assert!(p.tail_integral(1.5, 2.0).is_infinite());
        // P(Y^{1/2} > s) = s^{-2} above 1
        assert!((p.tail_integral(0.5, 4.0) - 0.25).abs() < 1e-12);
        let u = uniform12();
        assert!((u.tail_integral(2.0, 1.0) - 1.5).abs() < 1e-12);
        let e = TargetDist::ShiftedExp { shift: 1.0, rate: 1.0 };
        // E(Y − 2)^+ = e^{-1}
        let got = e.tail_integral(1.0, 2.0);
        assert!((got - (-1.0f64).exp()).abs() < 1e-6, "{got}");
    }

    #[test]
    fn spec_rejections() {
        for bad in [
            r#"{"family":"points","atoms":[]}"#,
            r#"{"family":"points","atoms":[{"value":"1","mass":"1/3"}]}"#,
            r#"{"family":"pareto","alpha":"-1"}"#,
            r#"{"family":"table","breaks":["1/2"],"values":["1"]}"#,
            r#"{"family":"table","breaks":["1/2","1"],"values":["2","1"]}"#,
        ] {
            let r = TargetSpec::from_json(bad).and_then(|s| TargetDist::from_spec(&s));
            assert!(r.is_err(), "{bad}");
        }
        assert!(TargetSpec::from_json(r#"{"family":"weibull"}"#).is_err());
    }
}
