//! Blocks: positive weight vectors read cyclically.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::{FastNum, Scalar};
use crate::window::{self, PeriodicCheck, Shape, TABLE_LIMIT};

/// A positive weight vector with cached prefix sums.
///
/// Weights are stored as `fast[i] * unit` so hot loops stay in machine integers
/// (exact mode) or doubles (float mode).
#[derive(Clone)]
pub struct Block<W: Scalar> {
    fast: Arc<[W::Fast]>,
    prefix: Arc<[W::Fast]>,
    unit: W,
    max: W::Fast,
    period: usize,
    shape: Option<Arc<Shape<W::Fast>>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockStats<W> {
    pub length: usize,
    pub max: W,
    pub total: W,
    pub mean: W,
}

/// Result of [`is_normalized`]; the witness is `(k, ν)` with ν 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormCheck {
    pub normalized: bool,
    pub witness: Option<(u64, usize)>,
}

impl<W: Scalar> Block<W> {
    pub fn new(weights: Vec<W>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidBlock("empty block".into()));
        }
        if let Some(i) = weights.iter().position(|w| !(*w > W::zero())) {
            return Err(Error::InvalidBlock(format!(
                "weight {} at position {} is not positive",
                weights[i].render(),
                i + 1
            )));
        }
        let (fast, unit) = W::to_fast_units(&weights)?;
        Ok(Self::from_fast(fast, unit))
    }

    /// Builds from positive fast-unit weights without validation.
    pub(crate) fn from_fast(fast: Vec<W::Fast>, unit: W) -> Self {
        let mut prefix = Vec::with_capacity(fast.len() + 1);
        let mut acc = <W::Fast as FastNum>::zero();
        let mut max = fast[0];
        prefix.push(acc);
        for &x in &fast {
            acc = acc.add(x);
            prefix.push(acc);
            max = max.max_of(x);
        }
        let len = fast.len();
        Block { fast: fast.into(), prefix: prefix.into(), unit, max, period: len, shape: None }
    }

    pub(crate) fn with_structure(mut self, period: usize, shape: Option<Arc<Shape<W::Fast>>>) -> Self {
        debug_assert!(self.len().is_multiple_of(period));
        self.period = period;
        if let Some(s) = shape {
            debug_assert_eq!(s.len(), self.len());
            self.shape = Some(s);
        }
        self
    }

    pub fn len(&self) -> usize {
        self.fast.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fast.is_empty()
    }

    /// Weight at 0-based index.
    pub fn weight(&self, i: usize) -> W {
        W::from_fast(self.fast[i], self.unit)
    }

    pub fn weights(&self) -> Vec<W> {
        self.fast.iter().map(|&x| W::from_fast(x, self.unit)).collect()
    }

    /// prefix[i] = w_1 + ... + w_i.
    pub fn prefix(&self, i: usize) -> W {
        W::from_fast(self.prefix[i], self.unit)
    }

    pub fn total(&self) -> W {
        W::from_fast(self.prefix[self.len()], self.unit)
    }

    pub fn max(&self) -> W {
        W::from_fast(self.max, self.unit)
    }

    pub fn mean(&self) -> W {
        self.total() / W::from_u64(self.len() as u64)
    }

    pub fn unit(&self) -> W {
        self.unit
    }

    pub fn fast(&self) -> &[W::Fast] {
        &self.fast
    }

    pub fn fast_prefix(&self) -> &[W::Fast] {
        &self.prefix
    }

    pub fn fast_total(&self) -> W::Fast {
        self.prefix[self.len()]
    }

    pub fn fast_max(&self) -> W::Fast {
        self.max
    }

    /// A known period dividing the length (the length itself when nothing better is known).
    pub fn period(&self) -> usize {
        self.period
    }

    pub(crate) fn shape(&self) -> Option<&Arc<Shape<W::Fast>>> {
        self.shape.as_ref()
    }

    /// Structural lag table, materialized by brute force for short blocks.
    #[cfg(test)]
    pub(crate) fn shape_or_table(&self) -> Option<Arc<Shape<W::Fast>>> {
        match &self.shape {
            Some(s) => Some(s.clone()),
            None if self.len() <= TABLE_LIMIT => Some(Arc::new(Shape::table(&self.fast))),
            None => None,
        }
    }

    /// Attaches a lag table when one is cheap: from the shortest known period.
    pub(crate) fn ensure_shape(self) -> Self {
        if self.shape.is_some() {
            return self;
        }
        let h = self.len();
        let p = if self.period < h { self.period } else { window::minimal_period(&self.fast) };
        if p > TABLE_LIMIT {
            return self;
        }
        let base = Arc::new(Shape::table(&self.fast[..p]));
        let shape = if p == h {
            base
        } else {
            Arc::new(Shape::Repeat { base, base_len: p, times: h / p, base_sum: self.prefix[p] })
        };
        let mut out = self;
        out.period = p;
        out.shape = Some(shape);
        out
    }

    /// Same weights in a unit `factor` times finer.
    pub(crate) fn refine(&self, unit: W, factor: u64) -> Self {
        if factor == 1 {
            return self.clone();
        }
        let fast: Vec<W::Fast> = self.fast.iter().map(|&x| W::scale_fast(x, factor)).collect();
        let mut out = Block::from_fast(fast, unit);
        out.period = self.period;
        out.shape = self.shape.as_ref().map(|s| Arc::new(Shape::Scaled { base: s.clone(), factor }));
        out
    }

    /// S_k at a 0-based start, in fast units.
    #[inline]
    pub fn sk_fast(&self, k: u64, start: usize) -> W::Fast {
        let h = self.len() as u64;
        let pos = start as u64 + k;
        let wraps = pos / h;
        let end = (pos % h) as usize;
        self.prefix[self.len()].mul_u(wraps).add(self.prefix[end]).sub(self.prefix[start])
    }

    /// Min and max of S_k over all starts, exact.
    pub fn sk_extremes_fast(&self, k: u64) -> (W::Fast, W::Fast) {
        let p = self.period;
        let full = self.prefix[p].mul_u(k / p as u64);
        let r = (k % p as u64) as usize;
        let (lo, hi) = match &self.shape {
            Some(s) if s.len() == self.len() => s.row(r).all(),
            _ => window::scan_lag(&self.prefix[..=p], r),
        };
        (lo.add(full), hi.add(full))
    }

    /// Weights as doubles, in absolute units.
    pub fn weights_f64(&self) -> Vec<f64> {
        let u = self.unit.to_f64();
        self.fast.iter().map(|x| x.to_f64() * u).collect()
    }
}

impl<W: Scalar> PartialEq for Block<W> {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len() && (0..self.len()).all(|i| self.weight(i) == other.weight(i))
    }
}

impl<W: Scalar> fmt::Debug for Block<W> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let h = self.len();
        let shown: Vec<String> = (0..h.min(16)).map(|i| self.weight(i).render()).collect();
        write!(f, "Block[{h}]({}{})", shown.join(", "), if h > 16 { ", …" } else { "" })
    }
}

/// w ⊙ v.
pub fn concat<W: Scalar>(w: &Block<W>, v: &Block<W>) -> Result<Block<W>> {
    concat_all(&[w, v])
}

/// Concatenation of several blocks in order.
pub fn concat_all<W: Scalar>(parts: &[&Block<W>]) -> Result<Block<W>> {
    if parts.is_empty() {
        return Err(Error::InvalidBlock("empty concatenation".into()));
    }
    if parts.iter().all(|b| b.unit == parts[0].unit) {
        let mut fast = Vec::with_capacity(parts.iter().map(|b| b.len()).sum());
        for b in parts {
            fast.extend_from_slice(&b.fast);
        }
        return Ok(Block::from_fast(fast, parts[0].unit));
    }
    let mut ws = Vec::new();
    for b in parts {
        ws.extend(b.weights());
    }
    Block::new(ws)
}

/// w^{⊙m}.
pub fn self_concat<W: Scalar>(w: &Block<W>, m: usize) -> Result<Block<W>> {
    if m == 0 {
        return Err(Error::InvalidParameter("self-concatenation count must be positive".into()));
    }
    let h = w.len();
    let mut fast = Vec::with_capacity(h * m);
    for _ in 0..m {
        fast.extend_from_slice(&w.fast);
    }
    let shape = w
        .shape
        .as_ref()
        .map(|s| Arc::new(Shape::Repeat { base: s.clone(), base_len: h, times: m, base_sum: w.fast_total() }));
    let mut out = Block::from_fast(fast, w.unit);
    out.period = w.period;
    if shape.is_some() {
        out.shape = shape;
    }
    Ok(out)
}

/// S_k(w)(ν) for 1-based ν.
pub fn cyclic_partial_sum<W: Scalar>(w: &Block<W>, k: u64, nu: usize) -> Result<W> {
    if nu == 0 || nu > w.len() {
        return Err(Error::Index { index: nu, len: w.len() });
    }
    Ok(W::from_fast(w.sk_fast(k, nu - 1), w.unit))
}

pub fn stats<W: Scalar>(w: &Block<W>) -> BlockStats<W> {
    BlockStats { length: w.len(), max: w.max(), total: w.total(), mean: w.mean() }
}

/// Exact decision of ε-normalization over every k ≥ εΣ/M.
///
/// Since S_k − kE only depends on k modulo a period of w, each residue class is decided
/// at its smallest admissible k; this covers all k, including k > 2|w|.
pub fn is_normalized<W: Scalar>(w: &Block<W>, eps: W) -> Result<NormCheck> {
    if !(eps > W::zero()) {
        return Err(Error::InvalidParameter("ε must be positive".into()));
    }
    Ok(normalized_with_budget(w, eps, None).expect("unbounded check always decides"))
}

/// Like [`is_normalized`] but gives up (returns `None`) after `budget` full lag scans.
pub fn normalized_with_budget<W: Scalar>(w: &Block<W>, eps: W, budget: Option<u64>) -> Option<NormCheck> {
    let h = w.len();
    let (p, use_shape) = match &w.shape {
        Some(s) if s.len() == h => (h, true),
        _ => {
            let p = if w.period < h { w.period } else { window::minimal_period(&w.fast) };
            (p, false)
        }
    };
    let reps = (h / p) as u64;
    let prefix = &w.prefix[..=p];
    let sum = prefix[p];
    let outcome = if use_shape {
        let shape = w.shape.as_ref().unwrap();
        window::check_periodic::<W>(p, reps, sum, w.max, eps, None, &mut |r| shape.row(r).all(), None)
    } else {
        let osc = window::oscillation(prefix);
        window::check_periodic::<W>(p, reps, sum, w.max, eps, Some(osc), &mut |r| window::scan_lag(prefix, r), budget)
    };
    match outcome {
        PeriodicCheck::Pass => Some(NormCheck { normalized: true, witness: None }),
        PeriodicCheck::Fail { k, r } => {
            let nu = window::witness_start::<W>(prefix, r, eps, k);
            Some(NormCheck { normalized: false, witness: Some((k, nu + 1)) })
        }
        PeriodicCheck::Unknown => None,
    }
}
