//! Numeric plumbing shared by both arithmetic modes.
//!
//! `Rational` (i128 numerator/denominator) is the exact mode, `f64` the float mode.
//! Hot loops run on [`FastNum`] values: integers in exact mode (after scaling a block
//! by the lcm of its denominators), plain doubles in float mode.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Sub};

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{CheckedDiv, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Rational = Ratio<i128>;

/// Relative tolerance used by every float-mode comparison.
pub const FLOAT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Float,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::Float => "float",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Mode::Exact),
            "float" => Ok(Mode::Float),
            other => Err(Error::Parse(format!("unknown mode {other:?}"))),
        }
    }
}

pub trait FastNum: Copy + Debug + PartialOrd + PartialEq + Send + Sync + 'static {
    fn zero() -> Self;
    fn add(self, o: Self) -> Self;
    fn sub(self, o: Self) -> Self;
    fn mul_u(self, n: u64) -> Self;
    fn to_f64(self) -> f64;
    fn from_u64(n: u64) -> Self;

    fn max_of(self, o: Self) -> Self {
        if o > self {
            o
        } else {
            self
        }
    }

    fn min_of(self, o: Self) -> Self {
        if o < self {
            o
        } else {
            self
        }
    }
}

impl FastNum for i128 {
    #[inline]
    fn zero() -> Self {
        0
    }
    #[inline]
    fn add(self, o: Self) -> Self {
        self.checked_add(o).expect("exact arithmetic overflow")
    }
    #[inline]
    fn sub(self, o: Self) -> Self {
        self.checked_sub(o).expect("exact arithmetic overflow")
    }
    #[inline]
    fn mul_u(self, n: u64) -> Self {
        self.checked_mul(n as i128).expect("exact arithmetic overflow")
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn from_u64(n: u64) -> Self {
        n as i128
    }
}

impl FastNum for f64 {
    #[inline]
    fn zero() -> Self {
        0.0
    }
    #[inline]
    fn add(self, o: Self) -> Self {
        self + o
    }
    #[inline]
    fn sub(self, o: Self) -> Self {
        self - o
    }
    #[inline]
    fn mul_u(self, n: u64) -> Self {
        self * n as f64
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn from_u64(n: u64) -> Self {
        n as f64
    }
}

pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
{
    type Fast: FastNum;
    const MODE: Mode;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_u64(n: u64) -> Self;
    fn from_rational(r: Rational) -> Self;
    fn to_f64(self) -> f64;
    /// Exact rational value when the mode is exact.
    fn to_rational(self) -> Option<Rational>;

    /// `self <= o`, with the float tolerance in float mode.
    fn le_tol(self, o: Self) -> bool;
    /// `self < o` in exact mode; `self < o` beyond tolerance in float mode.
    fn lt_tol(self, o: Self) -> bool;
    fn eq_tol(self, o: Self) -> bool {
        self.le_tol(o) && o.le_tol(self)
    }

    /// Smallest integer `>= self` (self must be nonnegative and finite).
    fn ceil_u64(self) -> Option<u64>;
    fn floor_u64(self) -> Option<u64>;

    fn parse_str(s: &str) -> Result<Self>;
    fn render(self) -> String;

    /// Writes `ws` as `fast_i * unit`.
    fn to_fast_units(ws: &[Self]) -> Result<(Vec<Self::Fast>, Self)>;
    /// Value of `x` fast units at the given unit.
    fn from_fast(x: Self::Fast, unit: Self) -> Self;
    /// `x` expressed in the given unit, if representable.
    fn in_units(self, unit: Self) -> Option<Self::Fast>;
    /// A fast threshold `t` with `x·unit < factor·self ⇔ x < t` for every fast value x;
    /// `None` when exact arithmetic would overflow.
    fn below_units(self, factor: Rational, unit: Self) -> Option<Self::Fast>;

    /// `|dev| <= eps * bound` for fast-unit quantities.
    fn within(dev: Self::Fast, eps: Self, bound: Self::Fast) -> bool;

    /// A unit `unit / factor` in which `x` is integral, with the integer factor.
    fn refine_unit(unit: Self, x: Self) -> Option<(Self, u64)>;
    /// Multiplies a fast value by an integer factor.
    fn scale_fast(x: Self::Fast, factor: u64) -> Self::Fast {
        x.mul_u(factor)
    }
}

impl Scalar for Rational {
    type Fast = i128;
    const MODE: Mode = Mode::Exact;

    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_u64(n: u64) -> Self {
        Ratio::from_integer(n as i128)
    }
    fn from_rational(r: Rational) -> Self {
        r
    }
    fn to_f64(self) -> f64 {
        rational_to_f64(self)
    }
    fn to_rational(self) -> Option<Rational> {
        Some(self)
    }
    fn le_tol(self, o: Self) -> bool {
        self <= o
    }
    fn lt_tol(self, o: Self) -> bool {
        self < o
    }
    fn ceil_u64(self) -> Option<u64> {
        if self.is_negative() {
            return None;
        }
        self.ceil().to_integer().to_u64()
    }
    fn floor_u64(self) -> Option<u64> {
        if self.is_negative() {
            return None;
        }
        self.floor().to_integer().to_u64()
    }
    fn parse_str(s: &str) -> Result<Self> {
        parse_rational(s)
    }
    fn render(self) -> String {
        if *self.denom() == 1 {
            self.numer().to_string()
        } else {
            format!("{}/{}", self.numer(), self.denom())
        }
    }
    fn to_fast_units(ws: &[Self]) -> Result<(Vec<i128>, Self)> {
        let mut l: i128 = 1;
        for w in ws {
            let d = *w.denom();
            if l % d != 0 {
                l = (l / l.gcd(&d)).checked_mul(d).ok_or_else(|| Error::Overflow("block denominators".into()))?;
            }
        }
        let mut out = Vec::with_capacity(ws.len());
        for w in ws {
            let f = l / *w.denom();
            out.push(w.numer().checked_mul(f).ok_or_else(|| Error::Overflow("block scaling".into()))?);
        }
        Ok((out, Ratio::new(1, l)))
    }
    #[inline]
    fn from_fast(x: i128, unit: Self) -> Self {
        if unit.is_one() {
            Ratio::from_integer(x)
        } else {
            Ratio::from_integer(x) * unit
        }
    }
    fn in_units(self, unit: Self) -> Option<i128> {
        let q = self.checked_div(&unit)?;
        if q.is_integer() {
            Some(q.to_integer())
        } else {
            None
        }
    }
    fn below_units(self, factor: Rational, unit: Self) -> Option<i128> {
        let t = num_traits::CheckedMul::checked_mul(&self, &factor)?.checked_div(&unit)?;
        Some(t.ceil().to_integer())
    }
    #[inline]
    fn within(dev: i128, eps: Self, bound: i128) -> bool {
        let lhs = dev.abs().checked_mul(*eps.denom()).expect("exact arithmetic overflow");
        let rhs = bound.checked_mul(*eps.numer()).expect("exact arithmetic overflow");
        lhs <= rhs
    }
    fn refine_unit(unit: Self, x: Self) -> Option<(Self, u64)> {
        let q = x.checked_div(&unit)?;
        let f = *q.denom();
        Some((unit / Ratio::from_integer(f), u64::try_from(f).ok()?))
    }
}

impl Scalar for f64 {
    type Fast = f64;
    const MODE: Mode = Mode::Float;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_u64(n: u64) -> Self {
        n as f64
    }
    fn from_rational(r: Rational) -> Self {
        rational_to_f64(r)
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn to_rational(self) -> Option<Rational> {
        None
    }
    fn le_tol(self, o: Self) -> bool {
        self <= o + FLOAT_TOL * self.abs().max(o.abs()).max(1e-300)
    }
    fn lt_tol(self, o: Self) -> bool {
        self < o - FLOAT_TOL * self.abs().max(o.abs())
    }
    fn ceil_u64(self) -> Option<u64> {
        if !(self >= 0.0) || !self.is_finite() {
            return None;
        }
        // snap values within tolerance of an integer
        let r = self.round();
        if (self - r).abs() <= FLOAT_TOL * self.abs().max(1.0) {
            return Some(r as u64);
        }
        Some(self.ceil() as u64)
    }
    fn floor_u64(self) -> Option<u64> {
        if !(self >= 0.0) || !self.is_finite() {
            return None;
        }
        let r = self.round();
        if (self - r).abs() <= FLOAT_TOL * self.abs().max(1.0) {
            return Some(r as u64);
        }
        Some(self.floor() as u64)
    }
    fn parse_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if let Some((a, b)) = t.split_once('/') {
            let a: f64 = a.trim().parse().map_err(|_| Error::Parse(format!("bad number {s:?}")))?;
            let b: f64 = b.trim().parse().map_err(|_| Error::Parse(format!("bad number {s:?}")))?;
            if b == 0.0 {
                return Err(Error::Parse(format!("zero denominator in {s:?}")));
            }
            return Ok(a / b);
        }
        let v: f64 = t.parse().map_err(|_| Error::Parse(format!("bad number {s:?}")))?;
        if v.is_nan() {
            return Err(Error::Parse(format!("NaN in {s:?}")));
        }
        Ok(v)
    }
    fn render(self) -> String {
        format!("{self:?}")
    }
    fn to_fast_units(ws: &[Self]) -> Result<(Vec<f64>, Self)> {
        Ok((ws.to_vec(), 1.0))
    }
    #[inline]
    fn from_fast(x: f64, unit: Self) -> Self {
        x * unit
    }
    fn in_units(self, unit: Self) -> Option<f64> {
        Some(self / unit)
    }
    fn below_units(self, factor: Rational, unit: Self) -> Option<f64> {
        Some(self * rational_to_f64(factor) / unit)
    }
    #[inline]
    fn within(dev: f64, eps: Self, bound: f64) -> bool {
        dev.abs() <= eps * bound + FLOAT_TOL * bound.abs()
    }
    fn refine_unit(unit: Self, _x: Self) -> Option<(Self, u64)> {
        Some((unit, 1))
    }
}

pub fn rational_to_f64(r: Rational) -> f64 {
    let n = *r.numer();
    let d = *r.denom();
    if n.unsigned_abs() < (1u128 << 53) && d < (1i128 << 53) {
        n as f64 / d as f64
    } else {
        // avoid catastrophic rounding of huge parts
        let q = n / d;
        let rem = n % d;
        q as f64 + rem as f64 / d as f64
    }
}

/// Parses `p/q`, integers, and decimals (optionally with exponent) exactly.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let t = s.trim();
    let bad = || Error::Parse(format!("bad rational {s:?}"));
    if t.is_empty() {
        return Err(bad());
    }
    if let Some((a, b)) = t.split_once('/') {
        if b.contains('/') {
            return Err(bad());
        }
        let a = parse_rational(a)?;
        let b = parse_rational(b)?;
        if b.is_zero() {
            return Err(Error::Parse(format!("zero denominator in {s:?}")));
        }
        return a.checked_div(&b).ok_or_else(bad);
    }
    let (mant, exp) = match t.find(['e', 'E']) {
        Some(i) => {
            let e: i32 = t[i + 1..].parse().map_err(|_| bad())?;
            (&t[..i], e)
        }
        None => (t, 0),
    };
    let (neg, mant) = match mant.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mant.strip_prefix('+').unwrap_or(mant)),
    };
    let (int_part, frac_part) = match mant.split_once('.') {
        Some((a, b)) => (a, b),
        None => (mant, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.bytes().all(|c| c.is_ascii_digit()) || !frac_part.bytes().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let mut num: i128 = 0;
    for c in digits.bytes() {
        num = num.checked_mul(10).and_then(|v| v.checked_add((c - b'0') as i128)).ok_or_else(bad)?;
    }
    let scale = exp - frac_part.len() as i32;
    if scale.unsigned_abs() > 36 {
        return Err(bad());
    }
    let p = 10i128.pow(scale.unsigned_abs());
    let mut r = if scale >= 0 { Ratio::from_integer(num.checked_mul(p).ok_or_else(bad)?) } else { Ratio::new(num, p) };
    if neg {
        r = -r;
    }
    Ok(r)
}

/// Whether a decimal literal (rather than `p/q` or an integer) was used.
pub fn is_decimal_literal(s: &str) -> bool {
    let t = s.trim();
    !t.contains('/') && (t.contains('.') || t.contains('e') || t.contains('E'))
}

pub fn rat(n: i128, d: i128) -> Rational {
    Ratio::new(n, d)
}
