use std::sync::Arc;

use rayon::prelude::*;

use super::BlockArray;
use crate::blocks::{self_concat, Block};
use crate::dist::SymRep;
use crate::error::{Error, Result};
use crate::scalar::{FastNum, Scalar};
use crate::window::{self, Shape};

fn check_pre<W: Scalar>(w: &Block<W>, delta: W, kappa: W, q: u64) -> Result<()> {
    if !(delta > W::zero() && delta <= W::one()) {
        return Err(Error::InvalidParameter(format!("Δ = {} must lie in (0, 1]", delta.render())));
    }
    if kappa < W::zero() {
        return Err(Error::InvalidParameter("κ must be nonnegative".into()));
    }
    if !kappa.le_tol(delta * w.mean()) {
        return Err(Error::Precondition(format!(
            "κ = {} exceeds Δ·E(w) = {}",
            kappa.render(),
            (delta * w.mean()).render()
        )));
    }
    if !(W::from_u64(q) * delta > W::one()) {
        return Err(Error::Precondition(format!("q = {q} is not above 1/Δ")));
    }
    Ok(())
}

/// One period of the extended block: w^{⊙q} with κ·q·h added at its last position.
pub fn spiked<W: Scalar>(w: &Block<W>, kappa: W, q: u64) -> Result<Block<W>> {
    if q == 0 {
        return Err(Error::InvalidParameter("q must be positive".into()));
    }
    let h = w.len();
    let p = h.checked_mul(q as usize).ok_or_else(|| Error::Overflow("spiked length".into()))?;
    let spike = kappa * W::from_u64(p as u64);
    let (unit, factor) =
        W::refine_unit(w.unit(), spike).ok_or_else(|| Error::Overflow("unit refinement for the spike".into()))?;
    let base = w.refine(unit, factor).ensure_shape();
    let add = spike.in_units(unit).ok_or_else(|| Error::Overflow("spike in block units".into()))?;
    let mut fast = Vec::with_capacity(p);
    for _ in 0..q {
        fast.extend_from_slice(base.fast());
    }
    let zero = <W::Fast as FastNum>::zero();
    fast[p - 1] = fast[p - 1].add(add);
    let shape = base.shape().map(|s| {
        let rep =
            Arc::new(Shape::Repeat { base: s.clone(), base_len: h, times: q as usize, base_sum: base.fast_total() });
        if add == zero {
            rep
        } else {
            Arc::new(Shape::Spike { base: rep, len: p, add })
        }
    });
    let period = if add == zero { base.period() } else { p };
    Ok(Block::from_fast(fast, unit).with_structure(period, shape))
}

/// w′ = w^{⊙μq} + κqh at every multiple of qh.
pub fn basic_extend<W: Scalar>(w: &Block<W>, delta: W, kappa: W, q: u64, mu: u64, cap: u64) -> Result<Block<W>> {
    check_pre(w, delta, kappa, q)?;
    if mu == 0 {
        return Err(Error::InvalidParameter("μ must be positive".into()));
    }
    let needed = (w.len() as u64).saturating_mul(q).saturating_mul(mu);
    if needed > cap {
        return Err(Error::SizeCap { cap, needed, what: "extended block".into() });
    }
    let one = spiked(w, kappa, q)?;
    self_concat(&one, mu as usize)
}

/// Scaled deviations of one period: dev[r] = max |p·S_r − r·Σ| over starts, when cheap;
/// otherwise lags are scanned on demand under a budget, failing conservatively.
pub(crate) struct LagDevs<'a, F> {
    p: usize,
    sum: F,
    max: F,
    osc: F,
    devs: Option<Vec<F>>,
    prefix: &'a [F],
}

const SCAN_LIMIT: usize = 4096;
const SCAN_BUDGET: u32 = 64;

pub(crate) fn lag_devs<W: Scalar>(b: &Block<W>) -> LagDevs<'_, W::Fast> {
    let p = b.len();
    let sum = b.fast_total();
    let shape = b.shape().filter(|s| s.len() == p).cloned();
    let prefix = b.fast_prefix();
    let dev = |r: usize| {
        let (lo, hi) = match &shape {
            Some(s) => s.row(r).all(),
            None => window::scan_lag(prefix, r),
        };
        let rs = sum.mul_u(r as u64);
        hi.mul_u(p as u64).sub(rs).max_of(rs.sub(lo.mul_u(p as u64)))
    };
    let devs: Option<Vec<W::Fast>> = if shape.is_some() && p < 4096 {
        Some((0..p).map(dev).collect())
    } else if shape.is_some() || p <= SCAN_LIMIT {
        Some((0..p).into_par_iter().map(dev).collect())
    } else {
        None
    };
    LagDevs { p, sum, max: b.fast_max(), osc: window::oscillation(prefix), devs, prefix }
}

impl<F: FastNum> LagDevs<'_, F> {
    /// Whether `reps` periods form an `eps`-normalized block.
    pub(crate) fn normalized<W: Scalar<Fast = F>>(&self, reps: u64, eps: W) -> bool {
        let k0 = window::min_lag::<W>(reps, self.sum, self.max, eps);
        let mut budget = SCAN_BUDGET;
        for r in 1..self.p {
            let k = window::kstar(k0, r, self.p);
            let bound = self.sum.mul_u(k);
            if W::within(self.osc, eps, bound) {
                continue;
            }
            let dev = match &self.devs {
                Some(d) => d[r],
                None => {
                    if budget == 0 {
                        return false;
                    }
                    budget -= 1;
                    let (lo, hi) = window::scan_lag(self.prefix, r);
                    let rs = self.sum.mul_u(r as u64);
                    hi.mul_u(self.p as u64).sub(rs).max_of(rs.sub(lo.mul_u(self.p as u64)))
                }
            };
            if !W::within(dev, eps, bound) {
                return false;
            }
        }
        true
    }

    /// Least repetition count giving `eps`-normalization, doubling then bisecting.
    pub(crate) fn least_reps<W: Scalar<Fast = F>>(&self, eps: W, cap: u64, what: &str) -> Result<u64> {
        let mut hi = 1u64;
        while !self.normalized::<W>(hi, eps) {
            hi = hi.checked_mul(2).ok_or_else(|| Error::Overflow("repetition count".into()))?;
            let needed = hi.saturating_mul(self.p as u64);
            if needed > cap {
                return Err(Error::SizeCap { cap, needed, what: what.into() });
            }
        }
        let mut lo = hi / 2;
        if lo == 0 {
            return Ok(1);
        }
        // lo fails, hi passes
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.normalized::<W>(mid, eps) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}

/// Least μ making `basic_extend(w, Δ, κ, q, μ)` δ-normalized.
pub fn choose_mu<W: Scalar>(w: &Block<W>, delta: W, kappa: W, q: u64, target: W, cap: u64) -> Result<u64> {
    check_pre(w, delta, kappa, q)?;
    if !(target > W::zero()) {
        return Err(Error::InvalidParameter("δ must be positive".into()));
    }
    let one = spiked(w, kappa, q)?;
    if one.len() as u64 > cap {
        return Err(Error::SizeCap { cap, needed: one.len() as u64, what: "extended block".into() });
    }
    lag_devs(&one).least_reps(target, cap, "extended block")
}

/// Shared μ for an array: the largest of the per-block least values.
pub fn choose_mu_array<W: Scalar>(arr: &BlockArray<W>, kappas: &[W], q: u64, target: W, cap: u64) -> Result<u64> {
    if kappas.len() != arr.size() {
        return Err(Error::InvalidParameter("one κ per block required".into()));
    }
    let mut mu = 1;
    for (b, &k) in arr.blocks().iter().zip(kappas) {
        mu = mu.max(choose_mu(b, arr.delta(), k, q, target, cap)?);
    }
    Ok(mu)
}

/// Applies [`basic_extend`] to every block with shared q and μ; the output is checked to
/// be `target`-normalized and its representation absorbs the new means at the same scale.
pub fn basic_extend_array<W: Scalar>(
    arr: &BlockArray<W>,
    kappas: &[W],
    q: u64,
    mu: u64,
    target: W,
    cap: u64,
) -> Result<BlockArray<W>> {
    if kappas.len() != arr.size() {
        return Err(Error::InvalidParameter("one κ per block required".into()));
    }
    let mut blocks = Vec::with_capacity(arr.size());
    let mut values = Vec::with_capacity(arr.size());
    for (i, (b, &k)) in arr.blocks().iter().zip(kappas).enumerate() {
        check_pre(b, arr.delta(), k, q)?;
        let needed = (b.len() as u64).saturating_mul(q).saturating_mul(mu);
        if needed > cap {
            return Err(Error::SizeCap { cap, needed, what: "extended block".into() });
        }
        let one = spiked(b, k, q)?;
        if !lag_devs(&one).normalized(mu, target) {
            return Err(Error::Precondition(format!(
                "μ = {mu} leaves block {} short of {}-normalization",
                i + 1,
                target.render()
            )));
        }
        let v = self_concat(&one, mu as usize)?;
        values.push(v.mean() / arr.scale());
        blocks.push(v);
    }
    BlockArray::assemble(SymRep::finite(values)?, blocks, arr.scale(), target)
}
