//! Window extremes of cyclic partial sums, by lag.
//!
//! For a block `X` of length `L` and a lag `r < L`, the starts split into windows that
//! contain the last position of `X` ("cross") and those that do not ("inner").  Blocks
//! produced by repetition and by adding a spike at the last position keep both tables
//! computable in O(1) per lag from the parent, so ε-normalization of engine blocks is
//! decided without quadratic scans.

use std::sync::Arc;

use rayon::prelude::*;

use crate::scalar::{FastNum, Scalar};

/// Largest block whose lag table is materialized by brute force.
pub const TABLE_LIMIT: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagRow<N> {
    pub inner: Option<(N, N)>,
    pub cross: Option<(N, N)>,
}

impl<N: FastNum> LagRow<N> {
    pub fn all(&self) -> (N, N) {
        match (self.inner, self.cross) {
            (Some(a), Some(b)) => (a.0.min_of(b.0), a.1.max_of(b.1)),
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => unreachable!("lag row without starts"),
        }
    }
}

fn shift<N: FastNum>(p: Option<(N, N)>, c: N) -> Option<(N, N)> {
    p.map(|(a, b)| (a.add(c), b.add(c)))
}

#[derive(Debug)]
pub enum Shape<N> {
    Table { rows: Vec<LagRow<N>> },
    Repeat { base: Arc<Shape<N>>, base_len: usize, times: usize, base_sum: N },
    Spike { base: Arc<Shape<N>>, len: usize, add: N },
    Scaled { base: Arc<Shape<N>>, factor: u64 },
}

impl<N: FastNum> Shape<N> {
    pub fn len(&self) -> usize {
        match self {
            Shape::Table { rows } => rows.len(),
            Shape::Repeat { base_len, times, .. } => base_len * times,
            Shape::Spike { len, .. } => *len,
            Shape::Scaled { base, .. } => base.len(),
        }
    }

    /// Brute-force table from fast weights.
    pub fn table(w: &[N]) -> Self {
        let h = w.len();
        let mut prefix = Vec::with_capacity(h + 1);
        let mut acc = N::zero();
        prefix.push(acc);
        for &x in w {
            acc = acc.add(x);
            prefix.push(acc);
        }
        let sum = |nu: usize, r: usize| -> N {
            if nu + r <= h {
                prefix[nu + r].sub(prefix[nu])
            } else {
                prefix[h].sub(prefix[nu]).add(prefix[nu + r - h])
            }
        };
        let row = |r: usize| {
            let mut inner: Option<(N, N)> = None;
            let mut cross: Option<(N, N)> = None;
            for nu in 0..h {
                let s = sum(nu, r);
                let slot = if r > 0 && nu + r >= h { &mut cross } else { &mut inner };
                *slot = Some(match *slot {
                    None => (s, s),
                    Some((a, b)) => (a.min_of(s), b.max_of(s)),
                });
            }
            LagRow { inner, cross }
        };
        let rows = if h > 256 { (0..h).into_par_iter().map(row).collect() } else { (0..h).map(row).collect() };
        Shape::Table { rows }
    }

    /// Row for lag `r`, `0 <= r < len`.
    pub fn row(&self, r: usize) -> LagRow<N> {
        match self {
            Shape::Table { rows } => rows[r],
            Shape::Scaled { base, factor } => {
                let b = base.row(r);
                let sc = |p: Option<(N, N)>| p.map(|(a, c)| (a.mul_u(*factor), c.mul_u(*factor)));
                LagRow { inner: sc(b.inner), cross: sc(b.cross) }
            }
            Shape::Spike { base, add, .. } => {
                let b = base.row(r);
                LagRow { inner: b.inner, cross: shift(b.cross, *add) }
            }
            Shape::Repeat { base, base_len, times, base_sum } => {
                let l = *base_len;
                let len = l * times;
                let a = r / l;
                let rr = r % l;
                let full = base_sum.mul_u(a as u64);
                let cross = if r == 0 {
                    None
                } else if r >= l {
                    Some(shift(Some(base.row(rr).all()), full).unwrap())
                } else {
                    base.row(r).cross
                };
                let inner = if len - r >= l {
                    Some(shift(Some(base.row(rr).all()), full).unwrap())
                } else {
                    // only the last copy's interior remains
                    shift(base.row(rr).inner, base_sum.mul_u((times - 1) as u64))
                };
                LagRow { inner, cross }
            }
        }
    }
}

/// Outcome of a periodic normalization check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeriodicCheck {
    Pass,
    /// Failing lag `k` and residue `r = k mod p`.
    Fail {
        k: u64,
        r: usize,
    },
    /// The scan budget ran out before a decision.
    Unknown,
}

/// Scaled oscillation of the detrended cumulative sum over one period:
/// max_j D(j) - min_j D(j), with D(j) = p*prefix[j] - j*sum.
pub fn oscillation<N: FastNum>(prefix: &[N]) -> N {
    let p = prefix.len() - 1;
    let sum = prefix[p];
    let mut lo = N::zero();
    let mut hi = N::zero();
    for (j, &x) in prefix.iter().enumerate() {
        let d = x.mul_u(p as u64).sub(sum.mul_u(j as u64));
        lo = lo.min_of(d);
        hi = hi.max_of(d);
    }
    hi.sub(lo)
}

/// Min and max of S_r over all cyclic starts of one period (prefix has p+1 entries).
pub fn scan_lag<N: FastNum>(prefix: &[N], r: usize) -> (N, N) {
    let p = prefix.len() - 1;
    let tot = prefix[p];
    let mut lo: Option<N> = None;
    let mut hi: Option<N> = None;
    for nu in 0..p {
        let s = if nu + r <= p { prefix[nu + r].sub(prefix[nu]) } else { tot.sub(prefix[nu]).add(prefix[nu + r - p]) };
        lo = Some(lo.map_or(s, |v: N| v.min_of(s)));
        hi = Some(hi.map_or(s, |v: N| v.max_of(s)));
    }
    (lo.unwrap(), hi.unwrap())
}

/// Smallest k >= k0 (k0 >= 1) with k ≡ r (mod p).
pub fn kstar(k0: u64, r: usize, p: usize) -> u64 {
    let r = r as u64;
    let p = p as u64;
    if r >= k0 {
        r
    } else {
        r + p * (k0 - r).div_ceil(p)
    }
}

/// Decides ε-normalization of a block that is `reps` copies of a period with the given
/// sum and the block's maximum weight (all in fast units).  `lag(r)` returns min/max of
/// S_r over one period.  `osc` is an upper bound on |p*S_r - r*sum| used to skip lags.
/// `budget` limits the number of `lag` calls flagged as expensive.
#[allow(clippy::too_many_arguments)]
pub fn check_periodic<W: Scalar>(
    p: usize,
    reps: u64,
    sum: W::Fast,
    max_w: W::Fast,
    eps: W,
    osc: Option<W::Fast>,
    lag: &mut dyn FnMut(usize) -> (W::Fast, W::Fast),
    mut budget: Option<u64>,
) -> PeriodicCheck {
    let k0 = min_lag::<W>(reps, sum, max_w, eps);
    for r in 0..p {
        let k = kstar(k0, r, p);
        if r == 0 {
            // whole periods: deviation is exactly zero
            continue;
        }
        let bound = sum.mul_u(k);
        if let Some(o) = osc {
            if W::within(o, eps, bound) {
                continue;
            }
        }
        if let Some(b) = budget.as_mut() {
            if *b == 0 {
                return PeriodicCheck::Unknown;
            }
            *b -= 1;
        }
        let (lo, hi) = lag(r);
        let rs = sum.mul_u(r as u64);
        let up = hi.mul_u(p as u64).sub(rs);
        let down = rs.sub(lo.mul_u(p as u64));
        let dev = up.max_of(down);
        if !W::within(dev, eps, bound) {
            return PeriodicCheck::Fail { k, r };
        }
    }
    PeriodicCheck::Pass
}

/// max(1, ⌈ε·Σ/M⌉) for a block of `reps` periods.
pub fn min_lag<W: Scalar>(reps: u64, sum: W::Fast, max_w: W::Fast, eps: W) -> u64 {
    let total = W::from_fast(sum.mul_u(reps), W::one());
    let m = W::from_fast(max_w, W::one());
    let k0 = (eps * total / m).ceil_u64().unwrap_or(u64::MAX);
    k0.max(1)
}

/// First start (0-based, within one period) whose S_r deviates beyond `eps*bound`.
pub fn witness_start<W: Scalar>(prefix: &[W::Fast], r: usize, eps: W, k: u64) -> usize {
    let p = prefix.len() - 1;
    let tot = prefix[p];
    let bound = tot.mul_u(k);
    let rs = tot.mul_u(r as u64);
    for nu in 0..p {
        let s = if nu + r <= p { prefix[nu + r].sub(prefix[nu]) } else { tot.sub(prefix[nu]).add(prefix[nu + r - p]) };
        let dev = s.mul_u(p as u64).sub(rs);
        if !W::within(dev, eps, bound) {
            return nu;
        }
    }
    0
}

/// Smallest period of the sequence (divides its length), via the prefix function.
pub fn minimal_period<N: PartialEq>(w: &[N]) -> usize {
    let n = w.len();
    if n == 0 {
        return 0;
    }
    let mut pi = vec![0usize; n];
    for i in 1..n {
        let mut k = pi[i - 1];
        while k > 0 && w[i] != w[k] {
            k = pi[k - 1];
        }
        if w[i] == w[k] {
            k += 1;
        }
        pi[i] = k;
    }
    let p = n - pi[n - 1];
    if n.is_multiple_of(p) {
        p
    } else {
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_rows(w: &[i128]) -> Vec<LagRow<i128>> {
        match Shape::table(w) {
            Shape::Table { rows } => rows,
            _ => unreachable!(),
        }
    }

    #[test]
    fn repeat_and_spike_match_brute_force() {
        let w = vec![1i128, 3, 2];
        let base = Arc::new(Shape::table(&w));
        let rep = Shape::Repeat { base: base.clone(), base_len: 3, times: 4, base_sum: 6 };
        let mut w4 = Vec::new();
        for _ in 0..4 {
            w4.extend_from_slice(&w);
        }
        let brute = brute_rows(&w4);
        for (r, want) in brute.iter().enumerate().take(12) {
            assert_eq!(&rep.row(r), want, "repeat lag {r}");
        }
        let sp = Shape::Spike { base: Arc::new(rep), len: 12, add: 7 };
        let mut ws = w4.clone();
        ws[11] += 7;
        let brute = brute_rows(&ws);
        for (r, want) in brute.iter().enumerate().take(12) {
            assert_eq!(&sp.row(r), want, "spike lag {r}");
        }
        let rep2 = Shape::Repeat { base: Arc::new(sp), base_len: 12, times: 3, base_sum: 31 };
        let mut w3 = Vec::new();
        for _ in 0..3 {
            w3.extend_from_slice(&ws);
        }
        let brute = brute_rows(&w3);
        for (r, want) in brute.iter().enumerate().take(36) {
            assert_eq!(&rep2.row(r), want, "outer repeat lag {r}");
        }
    }

    #[test]
    fn periods() {
        assert_eq!(minimal_period(&[1, 2, 1, 2]), 2);
        assert_eq!(minimal_period(&[1, 2, 1]), 3);
        assert_eq!(minimal_period(&[5, 5, 5]), 1);
    }

    #[test]
    fn kstar_residues() {
        assert_eq!(kstar(5, 2, 4), 6);
        assert_eq!(kstar(5, 0, 4), 8);
        assert_eq!(kstar(1, 3, 4), 3);
    }
}
