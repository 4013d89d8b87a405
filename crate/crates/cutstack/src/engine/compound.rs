use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::basic::{lag_devs, spiked};
use super::gamma::geometric_grid;
use super::BlockArray;
use crate::blocks::{self_concat, Block};
use crate::dist::SymRep;
use crate::error::{Error, Result};
use crate::scalar::{FastNum, Mode, Scalar};

const MAX_ROUNDS: usize = 64;

#[derive(Clone, Debug)]
pub struct CompoundParams<W: Scalar> {
    /// Normalization level used between rounds; raised to the input Δ if smaller.
    pub round_delta: W,
    /// ℰ: normalization of the output.
    pub eps: W,
    /// Step bound for p_k.
    pub beta: W,
    /// Budget for the fraction of positions changed.
    pub change_budget: W,
    pub cap: u64,
    pub grid_points: usize,
}

impl<W: Scalar> CompoundParams<W> {
    pub fn new(round_delta: W, eps: W, beta: W, change_budget: W, cap: u64) -> Self {
        CompoundParams { round_delta, eps, beta, change_budget, cap, grid_points: 64 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RoundRecord {
    pub q: u64,
    pub mu: u64,
    pub delta_in: f64,
    pub target: f64,
    pub height: u64,
    pub change_density: f64,
    pub kappa_ratio_max: f64,
}

/// p_k on a grid of k (linear in between) and δ_k, nonincreasing.
#[derive(Clone, Debug)]
pub struct CompoundSchedule<W: Scalar> {
    pub h: u64,
    pub top: u64,
    pub grid: Vec<u64>,
    pub p: Vec<W>,
    pub delta: Vec<f64>,
    pub beta: W,
}

impl<W: Scalar> CompoundSchedule<W> {
    fn locate(&self, k: u64) -> Result<usize> {
        if k < self.h || k > self.top {
            return Err(Error::Range(format!("k = {k} outside [{}, {}]", self.h, self.top)));
        }
        Ok(self.grid.partition_point(|&g| g <= k) - 1)
    }

    pub fn p_at(&self, k: u64) -> Result<W> {
        let i = self.locate(k)?;
        if self.grid[i] == k || i + 1 == self.grid.len() {
            return Ok(self.p[i]);
        }
        let (a, b) = (self.grid[i], self.grid[i + 1]);
        Ok(self.p[i] + (self.p[i + 1] - self.p[i]) * W::from_u64(k - a) / W::from_u64(b - a))
    }

    /// δ at the grid point at or below k (δ is nonincreasing).
    pub fn delta_at(&self, k: u64) -> Result<f64> {
        Ok(self.delta[self.locate(k)?])
    }

    /// p starts at 0, ends at 1, never decreases and moves at most β per unit of k.
    pub fn check(&self) -> Result<()> {
        let n = self.p.len();
        if n != self.grid.len() || n != self.delta.len() || n == 0 {
            return Err(Error::Construction("schedule tables disagree in length".into()));
        }
        if self.p[0] != W::zero() || self.p[n - 1] != W::one() {
            return Err(Error::Construction("p must run from 0 to 1".into()));
        }
        for j in 1..n {
            let dk = W::from_u64(self.grid[j] - self.grid[j - 1]);
            let step = self.p[j] - self.p[j - 1];
            if step < W::zero() || step > self.beta * dk {
                return Err(Error::Construction(format!("p step too large at k = {}", self.grid[j])));
            }
            if self.delta[j] > self.delta[j - 1] {
                return Err(Error::Construction(format!("δ increases at k = {}", self.grid[j])));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CompoundOutput<W: Scalar> {
    pub array: BlockArray<W>,
    pub rounds: Vec<RoundRecord>,
    pub schedule: CompoundSchedule<W>,
    /// Fraction of positions where the new array differs from the repeated input.
    pub change_used: W,
}

/// Largest multiple of `unit / n` not above `x`.
fn floor_to<W: Scalar>(x: W, unit: W, n: u64) -> W {
    if W::MODE == Mode::Float {
        return x;
    }
    let step = unit / W::from_u64(n);
    match (x / step).floor_u64() {
        Some(m) => W::from_u64(m) * step,
        None => x,
    }
}

/// Multiplies each block mean by 𝔱 through a sequence of spike rounds.
pub fn compound_extend<W: Scalar>(
    arr: &BlockArray<W>,
    t: &[W],
    params: &CompoundParams<W>,
) -> Result<CompoundOutput<W>> {
    let n = arr.size();
    if t.len() != n {
        return Err(Error::InvalidParameter("one 𝔱 per block required".into()));
    }
    if let Some(i) = t.iter().position(|&x| !(x > W::one())) {
        return Err(Error::InvalidParameter(format!("𝔱 = {} at block {} must exceed 1", t[i].render(), i + 1)));
    }
    if !(params.eps > W::zero()) || !(params.beta > W::zero()) || !(params.change_budget > W::zero()) {
        return Err(Error::InvalidParameter("ℰ, β and the change budget must be positive".into()));
    }
    let rd = if params.round_delta > arr.delta() { params.round_delta } else { arr.delta() };
    if !(rd <= W::one()) {
        return Err(Error::InvalidParameter("round Δ must not exceed 1".into()));
    }
    let h0 = arr.height() as u64;
    let e0: Vec<W> = arr.blocks().iter().map(|b| b.mean()).collect();
    let goal: Vec<W> = e0.iter().zip(t).map(|(&e, &x)| e * x).collect();
    let budget = params.change_budget;

    let mut blocks: Vec<Block<W>> = arr.blocks().to_vec();
    let mut rounds = Vec::new();
    let mut bounds = vec![h0];
    let mut used = W::zero();
    let mut delta_in = arr.delta();
    loop {
        if rounds.len() == MAX_ROUNDS {
            return Err(Error::Construction(format!("𝔱 not reached within {MAX_ROUNDS} rounds")));
        }
        let hr = blocks[0].len() as u64;
        let means: Vec<W> = blocks.iter().map(|b| b.mean()).collect();
        let gaps: Vec<W> = goal.iter().zip(&means).map(|(&g, &m)| g - m).collect();
        let last = gaps.iter().zip(&means).all(|(&g, &m)| g <= rd * m);
        let allow = (budget - used) * W::from_rational(crate::scalar::rat(3, 4));
        if !(allow > W::zero()) {
            return Err(Error::Construction("change budget exhausted".into()));
        }
        let q_delta = (W::one() / rd).floor_u64().unwrap_or(u64::MAX).saturating_add(1);
        let q_budget = (W::one() / (allow * W::from_u64(hr))).ceil_u64().unwrap_or(u64::MAX);
        let q = q_delta.max(q_budget).max(2);
        let kappas: Vec<W> = gaps
            .iter()
            .zip(&means)
            .zip(&blocks)
            .map(|((&g, &m), b)| if g <= rd * m { g } else { floor_to(rd * m, b.unit(), q * hr * 8) })
            .collect();
        let target = if last { params.eps } else { rd };
        let ones: Vec<Block<W>> = blocks.iter().zip(&kappas).map(|(b, &k)| spiked(b, k, q)).collect::<Result<_>>()?;
        let p_len = ones[0].len() as u64;
        if p_len > params.cap {
            return Err(Error::SizeCap {
                cap: params.cap,
                needed: p_len,
                what: format!("compound round {}", rounds.len() + 1),
            });
        }
        let what = format!("compound round {}", rounds.len() + 1);
        let mus =
            ones.par_iter().map(|b| lag_devs(b).least_reps(target, params.cap, &what)).collect::<Result<Vec<u64>>>()?;
        let mut mu = mus.into_iter().max().unwrap_or(1);
        if last {
            let need = h0 + (W::one() / params.beta).ceil_u64().unwrap_or(u64::MAX);
            mu = mu.max(need.div_ceil(p_len));
        }
        let needed = p_len.saturating_mul(mu);
        if needed > params.cap {
            return Err(Error::SizeCap { cap: params.cap, needed, what });
        }
        blocks = ones.iter().map(|b| self_concat(b, mu as usize)).collect::<Result<_>>()?;
        let any_spike = kappas.iter().any(|&k| k > W::zero());
        let density = if any_spike { W::one() / W::from_u64(q * hr) } else { W::zero() };
        used = used + density;
        let kappa_ratio_max = kappas.iter().zip(&means).map(|(&k, &m)| (k / m).to_f64()).fold(0.0, f64::max);
        rounds.push(RoundRecord {
            q,
            mu,
            delta_in: delta_in.to_f64(),
            target: target.to_f64(),
            height: needed,
            change_density: density.to_f64(),
            kappa_ratio_max,
        });
        bounds.push(needed);
        delta_in = target;
        if last {
            break;
        }
    }
    for (i, b) in blocks.iter().enumerate() {
        if b.mean() != goal[i] && !(W::MODE == Mode::Float && b.mean().eq_tol(goal[i])) {
            return Err(Error::Construction(format!("block {} missed its target mean", i + 1)));
        }
    }
    if !used.lt_tol(budget) {
        return Err(Error::Construction("change budget exceeded".into()));
    }
    let top = blocks[0].len() as u64;
    let schedule = build_schedule(&blocks, &e0, t, h0, top, &bounds, params)?;
    let values: Vec<W> = arr.values().iter().zip(t).map(|(&v, &x)| v * x).collect();
    let array = BlockArray::assemble(SymRep::finite(values)?, blocks, arr.scale(), params.eps)?;
    Ok(CompoundOutput { array, rounds, schedule, change_used: used })
}

/// Smallest δ with #{|x − 1| ≤ δ} ≥ (1 − δ)·n.
pub(crate) fn concentration(devs: &mut [f64]) -> f64 {
    devs.sort_unstable_by(f64::total_cmp);
    let n = devs.len() as f64;
    let mut best = 1.0f64;
    for c in 0..=devs.len() {
        let d = if c == 0 { 0.0 } else { devs[c - 1] };
        best = best.min(d.max(1.0 - c as f64 / n));
    }
    best
}

/// Least-squares nondecreasing fit (pool adjacent violators).
fn isotonic(a: &[f64]) -> Vec<f64> {
    let mut pools: Vec<(f64, usize)> = Vec::with_capacity(a.len());
    for &x in a {
        let mut cur = (x, 1usize);
        while let Some(&(m, n)) = pools.last() {
            if m <= cur.0 {
                break;
            }
            pools.pop();
            cur = ((m * n as f64 + cur.0 * cur.1 as f64) / (n + cur.1) as f64, n + cur.1);
        }
        pools.push(cur);
    }
    pools.into_iter().flat_map(|(m, n)| std::iter::repeat_n(m, n)).collect()
}

fn build_schedule<W: Scalar>(
    blocks: &[Block<W>],
    e0: &[W],
    t: &[W],
    h0: u64,
    top: u64,
    bounds: &[u64],
    params: &CompoundParams<W>,
) -> Result<CompoundSchedule<W>> {
    let mut grid = geometric_grid(h0, top, params.grid_points.max(2));
    grid.extend(bounds.iter().copied().filter(|&k| k >= h0 && k <= top));
    grid.sort_unstable();
    grid.dedup();

    // a_k: the p placing kE((1−p)+p𝔱) at the median of S_k, averaged over blocks
    let a: Vec<f64> = grid
        .par_iter()
        .map(|&k| {
            let sum: f64 = blocks
                .iter()
                .zip(e0)
                .zip(t)
                .map(|((b, &e), &x)| {
                    let unit = b.unit().to_f64();
                    let mut s: Vec<f64> = (0..b.period()).map(|nu| b.sk_fast(k, nu).to_f64() * unit).collect();
                    let mid = s.len() / 2;
                    let (_, med, _) = s.select_nth_unstable_by(mid, f64::total_cmp);
                    let ratio = *med / (k as f64 * e.to_f64());
                    ((ratio - 1.0) / (x.to_f64() - 1.0)).clamp(0.0, 1.0)
                })
                .sum();
            sum / blocks.len() as f64
        })
        .collect();
    let env = isotonic(&a);
    let quantum = (1u64 << 40) as f64;
    let to_w = |x: f64| -> W {
        let m = (x * quantum).floor().max(0.0) as u64;
        W::from_u64(m) / W::from_u64(1u64 << 40)
    };
    let beta = params.beta;
    let mut p = Vec::with_capacity(grid.len());
    let last = grid.len() - 1;
    for (j, &k) in grid.iter().enumerate() {
        let v = if j == 0 {
            W::zero()
        } else if j == last {
            W::one()
        } else {
            let dk = W::from_u64(k - grid[j - 1]);
            let mut g = p[j - 1] + beta * dk;
            let cap = to_w(env[j]);
            if cap < g {
                g = cap;
            }
            let floor = W::one() - beta * W::from_u64(top - k);
            if floor > g {
                g = floor;
            }
            if g < W::zero() {
                g = W::zero();
            }
            if g > W::one() {
                g = W::one();
            }
            g
        };
        p.push(v);
    }

    let mut delta: Vec<f64> = grid
        .par_iter()
        .zip(p.par_iter())
        .map(|(&k, &pk)| {
            let pk = pk.to_f64();
            blocks
                .iter()
                .zip(e0)
                .zip(t)
                .map(|((b, &e), &x)| {
                    let mk = k as f64 * e.to_f64() * ((1.0 - pk) + pk * x.to_f64());
                    let unit = b.unit().to_f64();
                    let per = b.period();
                    let mut devs: Vec<f64> =
                        (0..per).map(|nu| (b.sk_fast(k, nu).to_f64() * unit / mk - 1.0).abs()).collect();
                    let (lo, _) = b.sk_extremes_fast(k);
                    let deficit = (1.0 - lo.to_f64() * unit / mk).max(0.0);
                    deficit.max(concentration(&mut devs))
                })
                .fold(0.0, f64::max)
        })
        .collect();
    for j in (0..delta.len().saturating_sub(1)).rev() {
        delta[j] = delta[j].max(delta[j + 1]);
    }
    let schedule = CompoundSchedule { h: h0, top, grid, p, delta, beta };
    schedule.check()?;
    Ok(schedule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::is_normalized;
    use crate::scalar::{rat, Rational};

    fn constant_array(vals: &[i128], h: usize, delta: Rational) -> BlockArray<Rational> {
        let rep = SymRep::finite(vals.iter().map(|&v| Rational::from_integer(v)).collect()).unwrap();
        BlockArray::constant(rep, rat(1, 1), h, delta).unwrap()
    }

    #[test]
    fn isotonic_fit() {
        assert_eq!(isotonic(&[0.0, 0.5, 0.3, 1.0]), vec![0.0, 0.4, 0.4, 1.0]);
        assert_eq!(isotonic(&[1.0, 0.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn concentration_levels() {
        assert_eq!(concentration(&mut [0.0, 0.0, 0.0, 0.0]), 0.0);
        // one outlier in four: δ = 1/4 covers the rest
        assert_eq!(concentration(&mut [0.0, 0.1, 0.1, 5.0]), 0.25);
        assert_eq!(concentration(&mut [0.01, 0.02]), 0.02);
    }

    #[test]
    fn small_gap_is_one_round() {
        let arr = constant_array(&[1], 4, rat(1, 2));
        let params = CompoundParams::new(rat(1, 2), rat(1, 4), rat(1, 8), rat(1, 2), 1 << 24);
        let out = compound_extend(&arr, &[rat(5, 4)], &params).unwrap();
        assert_eq!(out.rounds.len(), 1);
        assert_eq!(out.array.block(0).mean(), rat(5, 4));
        assert!(is_normalized(out.array.block(0), rat(1, 4)).unwrap().normalized);
    }

    #[test]
    fn stage_count_for_large_factor() {
        let arr = constant_array(&[1], 1, rat(1, 2));
        let params = CompoundParams::new(rat(1, 2), rat(49, 100), rat(1, 16), rat(1, 2), 1 << 22);
        // κ ≤ ΔE forces at least log 4 / log 1.5 rounds; the cap may stop the run late
        let least = ((4f64).ln() / (1.5f64).ln()).ceil() as usize;
        match compound_extend(&arr, &[rat(4, 1)], &params) {
            Ok(out) => {
                assert!(out.rounds.len() >= least);
                assert_eq!(out.array.block(0).mean(), rat(4, 1));
            }
            Err(Error::SizeCap { what, .. }) => {
                let round: usize = what.rsplit(' ').next().unwrap().parse().unwrap();
                assert!(round >= least, "{what}");
            }
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn exact_multiplication_and_schedule() {
        let arr = constant_array(&[1, 2], 2, rat(1, 2));
        let params = CompoundParams::new(rat(9, 10), rat(1, 5), rat(1, 16), rat(1, 2), 1 << 24);
        let t = [rat(3, 1), rat(5, 2)];
        let out = compound_extend(&arr, &t, &params).unwrap();
        assert_eq!(out.array.block(0).mean(), rat(3, 1));
        assert_eq!(out.array.block(1).mean(), rat(5, 1));
        assert_eq!(out.array.values(), &[rat(3, 1), rat(5, 1)]);
        out.schedule.check().unwrap();
        assert!(*out.schedule.delta.last().unwrap() < 0.2);
        for b in out.array.blocks() {
            assert!(is_normalized(b, rat(1, 5)).unwrap().normalized);
        }
        assert!(out.change_used < rat(1, 2));
    }
}
