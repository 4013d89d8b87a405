//! The skyscraper over an integer-valued tower: return times φ_j, occupation counts of
//! the base, their normalizations by a(n) = b^{−1}(n), tail bounds and moment diagnostics.
//!
//! Base points are the positions of the finest blocks, each block read cyclically and
//! all positions equally likely, so m(Ω) = 1. The occupation count at ν is
//! S_n(ν) = max{j ≥ 0 : φ_j(ν) ≤ n}, the number of returns to the base in (0, n].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{weighted_distances, Ext, FiniteDist};
use crate::engine::geometric_grid;
use crate::error::{Error, Result};
use crate::scalar::{rational_to_f64, FastNum, Mode, Rational, Scalar};
use crate::splitting::TargetDist;
use crate::tower::TowerTrace;

/// Integer roof over the base: one period of each block with its repetition count.
#[derive(Clone, Debug)]
pub struct IntegerTower {
    blocks: Vec<Vec<u64>>,
    reps: Vec<u64>,
    prefix: Vec<Vec<u64>>,
    /// Integer weights approximate `scale` times the source weights.
    pub scale: f64,
    pub exact_scale: bool,
    /// Relative change of each block mean caused by rounding up.
    pub perturbation: Vec<f64>,
    /// (k, s·b(k)) samples of the scaled normalizing sequence, increasing in both.
    norm: Vec<(f64, f64)>,
    /// Limit law of the normalized occupation counts, when known.
    pub limit: Option<TargetDist>,
}

fn prefix_of(w: &[u64]) -> Vec<u64> {
    let mut p = Vec::with_capacity(w.len() + 1);
    let mut acc = 0u64;
    p.push(0);
    for &x in w {
        acc = acc.checked_add(x).expect("block total overflows u64");
        p.push(acc);
    }
    p
}

impl IntegerTower {
    /// Blocks given directly; without a normalizing table a(n) = n/Ē.
    pub fn from_blocks(blocks: Vec<Vec<u64>>) -> Result<Self> {
        if blocks.is_empty() || blocks.iter().any(|b| b.is_empty()) {
            return Err(Error::InvalidParameter("empty integer tower".into()));
        }
        if blocks.iter().flatten().any(|&x| x == 0) {
            return Err(Error::InvalidParameter("integer weights must be at least 1".into()));
        }
        let reps = vec![1; blocks.len()];
        let prefix = blocks.iter().map(|b| prefix_of(b)).collect();
        let n = blocks.len();
        Ok(IntegerTower {
            blocks,
            reps,
            prefix,
            scale: 1.0,
            exact_scale: true,
            perturbation: vec![0.0; n],
            norm: Vec::new(),
            limit: None,
        })
    }

    pub fn with_limit(mut self, y: TargetDist) -> Self {
        self.limit = Some(y);
        self
    }

    pub fn blocks(&self) -> &[Vec<u64>] {
        &self.blocks
    }

    /// Repetition count of each stored period.
    pub fn reps(&self) -> &[u64] {
        &self.reps
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Total base measure in positions (repetitions included).
    pub fn positions(&self) -> u64 {
        self.blocks.iter().zip(&self.reps).map(|(b, &r)| b.len() as u64 * r).sum()
    }

    pub fn height(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).max().unwrap_or(0)
    }

    fn total(&self, b: usize) -> u64 {
        *self.prefix[b].last().unwrap()
    }

    fn mean_weight(&self) -> f64 {
        let mut s = 0.0;
        for (b, &r) in self.reps.iter().enumerate() {
            s += self.total(b) as f64 * r as f64;
        }
        s / self.positions() as f64
    }

    /// φ_j(ν) on block `b`: the sum of j consecutive weights from ν, cyclically.
    pub fn phi(&self, b: usize, nu: usize, j: u64) -> Result<u64> {
        let w = self.blocks.get(b).ok_or(Error::Index { index: b + 1, len: self.blocks.len() })?;
        if nu >= w.len() {
            return Err(Error::Index { index: nu + 1, len: w.len() });
        }
        let l = w.len() as u64;
        let full = (j / l).checked_mul(self.total(b)).ok_or_else(|| Error::Overflow("return time".into()))?;
        Ok(full + self.partial(b, nu, (j % l) as usize))
    }

    /// φ_r(ν) for r < L.
    #[inline]
    fn partial(&self, b: usize, nu: usize, r: usize) -> u64 {
        let p = &self.prefix[b];
        let l = self.blocks[b].len();
        if nu + r <= l {
            p[nu + r] - p[nu]
        } else {
            p[l] - p[nu] + p[nu + r - l]
        }
    }

    /// max{j : φ_j(ν) ≤ n}.
    pub fn occupation_at(&self, b: usize, nu: usize, n: u64) -> u64 {
        let l = self.blocks[b].len();
        let total = self.total(b);
        let cycles = n / total;
        let rest = n - cycles * total;
        // largest r < L with φ_r ≤ rest; φ_0 = 0 qualifies
        let (mut lo, mut hi) = (0usize, l);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.partial(b, nu, mid) <= rest {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        cycles * l as u64 + lo as u64
    }

    /// Occupation counts at time n as sorted (value, multiplicity) pairs.
    pub fn occupation_counts(&self, n: u64) -> Vec<(u64, u64)> {
        let mut vals: Vec<(u64, u64)> = (0..self.blocks.len())
            .into_par_iter()
            .flat_map_iter(|b| {
                let r = self.reps[b];
                (0..self.blocks[b].len()).map(move |nu| (self.occupation_at(b, nu, n), r))
            })
            .collect();
        vals.par_sort_unstable();
        merge_counts(vals)
    }

    /// a(n) = b^{−1}(n) from the normalizing table, or n/Ē without one.
    pub fn a_of(&self, n: f64) -> Result<f64> {
        if self.norm.is_empty() {
            return Ok(n / self.mean_weight());
        }
        let (k0, b0) = self.norm[0];
        let (k1, b1) = self.norm[self.norm.len() - 1];
        if n < b0 || n > b1 {
            return Err(Error::Range(format!("n = {n} outside the normalized range [{b0}, {b1}]")));
        }
        if self.norm.len() == 1 {
            return Ok(k0);
        }
        let i = self.norm.partition_point(|p| p.1 <= n).clamp(1, self.norm.len() - 1);
        let ((ka, ba), (kb, bb)) = (self.norm[i - 1], self.norm[i]);
        if bb <= ba {
            return Ok(ka.min(k1));
        }
        Ok(ka + (kb - ka) * (n - ba) / (bb - ba))
    }

    /// Scaled b(k) from the table, or k·Ē.
    pub fn b_of(&self, k: f64) -> Result<f64> {
        if self.norm.is_empty() {
            return Ok(k * self.mean_weight());
        }
        let i = self.norm.partition_point(|p| p.0 <= k);
        if i == 0 || (i == self.norm.len() && k > self.norm[i - 1].0) {
            return Err(Error::Range(format!("k = {k} outside the normalized range")));
        }
        if i == self.norm.len() {
            return Ok(self.norm[i - 1].1);
        }
        let ((ka, ba), (kb, bb)) = (self.norm[i - 1], self.norm[i]);
        Ok(ba + (bb - ba) * (k - ka) / (kb - ka))
    }

    /// Range of n covered by the normalizing table.
    pub fn n_range(&self) -> (u64, u64) {
        match (self.norm.first(), self.norm.last()) {
            (Some(a), Some(b)) => (a.1.ceil() as u64, b.1.floor() as u64),
            _ => (1, self.blocks.iter().enumerate().map(|(b, _)| self.total(b)).max().unwrap_or(1)),
        }
    }

    /// The tower made of the first `len` positions of every block (no normalizing table).
    pub fn prefix_tower(&self, len: usize) -> Result<IntegerTower> {
        let blocks = self.blocks.iter().map(|b| b[..b.len().min(len)].to_vec()).collect();
        let mut t = IntegerTower::from_blocks(blocks)?;
        t.limit = self.limit.clone();
        Ok(t)
    }

    /// Replaces every weight of block `b` by 1 (fault injection).
    pub fn flatten_block(&mut self, b: usize) -> Result<()> {
        let w = self.blocks.get_mut(b).ok_or(Error::Index { index: b + 1, len: 0 })?;
        w.iter_mut().for_each(|x| *x = 1);
        self.prefix[b] = prefix_of(&self.blocks[b]);
        Ok(())
    }
}

fn merge_counts(sorted: Vec<(u64, u64)>) -> Vec<(u64, u64)> {
    let mut out: Vec<(u64, u64)> = Vec::new();
    for (v, c) in sorted {
        match out.last_mut() {
            Some(l) if l.0 == v => l.1 += c,
            _ => out.push((v, c)),
        }
    }
    out
}

/// Scales a complete trace's finest weights and rounds them up to integers, keeping every
/// block mean within relative `eta`; exact rescaling is used when it is small.
pub fn integerize<W: Scalar>(trace: &TowerTrace<W>, eta: f64) -> Result<IntegerTower> {
    if !trace.complete {
        return Err(Error::Precondition("integerization needs a complete trace".into()));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidParameter("η must lie in (0, 1)".into()));
    }
    if trace.target.lower_bound() <= 0.0 && trace.target.finite().is_some() {
        return Err(Error::Domain("target is not bounded below by a positive number".into()));
    }
    let arr = &trace.array;
    let mut min_mean = f64::INFINITY;
    for b in arr.blocks() {
        let mn = b.fast().iter().fold(f64::INFINITY, |a, x| a.min(x.to_f64())) * b.unit().to_f64();
        if !(mn > 0.0) {
            return Err(Error::Domain("weights are not bounded below by a positive number".into()));
        }
        min_mean = min_mean.min(b.mean().to_f64());
    }

    // exact: multiply by the lcm of the unit denominators when that stays small
    let exact = if W::MODE == Mode::Exact {
        let units: Option<Vec<Rational>> = arr.blocks().iter().map(|b| b.unit().to_rational()).collect();
        units.and_then(|us| {
            let l = us.iter().try_fold(1i128, |acc, u| {
                let d = *u.denom();
                let g = num_integer::gcd(acc, d);
                acc.checked_mul(d / g)
            })?;
            let max_w = arr.blocks().iter().map(|b| b.max().to_f64()).fold(0.0, f64::max);
            (l <= 1 << 20 && max_w * l as f64 <= 1e12).then_some((l, us))
        })
    } else {
        None
    };

    let mut blocks = Vec::with_capacity(arr.size());
    let mut reps = Vec::with_capacity(arr.size());
    let mut perturbation = Vec::with_capacity(arr.size());
    let scale;
    let exact_scale;
    match exact {
        Some((l, units)) => {
            scale = l as f64;
            exact_scale = true;
            for (b, u) in arr.blocks().iter().zip(units) {
                let per = b.period();
                let f = (u * Rational::from_integer(l)).to_integer();
                let ints: Vec<u64> = b.fast()[..per].iter().map(|x| (x.to_f64() as i128 * f) as u64).collect();
                blocks.push(ints);
                reps.push((b.len() / per) as u64);
                perturbation.push(0.0);
            }
            // the integer conversion above goes through f64 only for values below 2^53
            for (b, ints) in arr.blocks().iter().zip(&blocks) {
                if b.fast().iter().any(|x| x.to_f64() >= 9.0e15) || ints.contains(&0) {
                    return Err(Error::Overflow("exact integer weights".into()));
                }
            }
        }
        None => {
            let mut s = (1.0 / (eta * min_mean)).log2().ceil().exp2().max(1.0);
            exact_scale = false;
            loop {
                blocks.clear();
                reps.clear();
                perturbation.clear();
                let mut ok = true;
                for b in arr.blocks() {
                    let per = b.period();
                    let u = b.unit().to_f64() * s;
                    let ints: Vec<u64> =
                        b.fast()[..per].iter().map(|x| (x.to_f64() * u).ceil().max(1.0) as u64).collect();
                    let exact_sum = b.fast()[..per].iter().map(|x| x.to_f64() * u).sum::<f64>();
                    let int_sum = ints.iter().sum::<u64>() as f64;
                    let p = (int_sum - exact_sum) / exact_sum;
                    ok &= p <= eta;
                    blocks.push(ints);
                    reps.push((b.len() / per) as u64);
                    perturbation.push(p);
                }
                if ok {
                    break;
                }
                s *= 2.0;
                if s > 1e9 {
                    return Err(Error::Overflow("integerization scale".into()));
                }
            }
            scale = s;
        }
    }

    let (h0, top) = (trace.h0(), trace.top());
    let mut ks: Vec<u64> = geometric_grid(h0, top, 4096);
    ks.extend(trace.gamma.anchors().iter().map(|a| a.0));
    ks.extend(h0..=top.min(h0 + 256));
    ks.sort_unstable();
    ks.dedup();
    let mut norm = Vec::with_capacity(ks.len());
    for k in ks {
        norm.push((k as f64, trace.b_f64(k)? * scale));
    }
    let prefix = blocks.iter().map(|b| prefix_of(b)).collect();
    Ok(IntegerTower {
        blocks,
        reps,
        prefix,
        scale,
        exact_scale,
        perturbation,
        norm,
        limit: Some(trace.target.reciprocal()?),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub x: f64,
    /// m(Ω ∩ [S_n ≥ x·a(n)]).
    pub lhs: String,
    /// C·P(Y ≥ x).
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupationReport {
    pub n: u64,
    pub a: f64,
    pub positions: u64,
    /// (S_n, multiplicity), increasing.
    pub counts: Vec<(u64, u64)>,
    /// 𝔳(S_n/a(n), Y) when the limit is known.
    pub v: Option<f64>,
    pub tail_checks: Vec<TailCheck>,
}

impl OccupationReport {
    /// Law of S_n/a(n).
    pub fn normalized(&self) -> Vec<(f64, u64)> {
        self.counts.iter().map(|&(s, c)| (s as f64 / self.a, c)).collect()
    }

    /// Law of S_n, when every count is positive.
    pub fn dist(&self) -> Result<FiniteDist<Rational>> {
        let atoms = self
            .counts
            .iter()
            .map(|&(s, c)| {
                (Ext::Fin(Rational::from_integer(s as i128)), Rational::new(c as i128, self.positions as i128))
            })
            .collect();
        FiniteDist::new(atoms)
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("value,mass\n");
        for &(v, c) in &self.counts {
            s.push_str(&format!("{v},{}\n", Rational::new(c as i128, self.positions as i128)));
        }
        s
    }
}

/// P(Y ≥ x).
fn tail_prob(y: &TargetDist, x: f64) -> f64 {
    match y.finite() {
        Some(d) => {
            let mut p = 0.0;
            for (v, m) in d.atoms() {
                if v.to_f64() >= x {
                    p += rational_to_f64(*m);
                }
            }
            p
        }
        None => 1.0 - y.cdf(x),
    }
}

pub fn occupation_distribution(it: &IntegerTower, n: u64, tail_x: &[f64], tail_const: f64) -> Result<OccupationReport> {
    let a = it.a_of(n as f64)?;
    let counts = it.occupation_counts(n);
    let positions = it.positions();
    let mut v = None;
    let mut tail_checks = Vec::new();
    if let Some(y) = &it.limit {
        let proxy = y.proxy(14)?;
        let mut items: Vec<(f64, u64)> = counts.iter().map(|&(s, c)| (s as f64 / a, c)).collect();
        v = Some(weighted_distances(&mut items, &proxy).0);
        for &x in tail_x {
            let hit: u64 = counts.iter().filter(|&&(s, _)| s as f64 >= x * a).map(|&(_, c)| c).sum();
            let lhs = Rational::new(hit as i128, positions as i128);
            let rhs = tail_const * tail_prob(y, x);
            tail_checks.push(TailCheck { x, lhs: lhs.to_string(), rhs, pass: rational_to_f64(lhs) <= rhs });
        }
    }
    Ok(OccupationReport { n, a, positions, counts, v, tail_checks })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InversionRow {
    pub n: u64,
    pub a: f64,
    pub top_window: bool,
    /// 𝔳(S_n/a(n), Y).
    pub v_occupation: Option<f64>,
    /// 𝔳(φ_m/b(m), 1/Y) at m = round(a(n)).
    pub v_return: Option<f64>,
    pub tail_pass: bool,
    pub tail_checks: Vec<TailCheck>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InversionReport {
    pub rows: Vec<InversionRow>,
    pub tol: f64,
    pub top_max_v: f64,
    pub trend_pass: bool,
    pub tail_pass: bool,
}

/// Laws of φ_m/b(m) over the base.
fn return_law(it: &IntegerTower, m: u64) -> Result<Vec<(f64, u64)>> {
    let bm = it.b_of(m as f64)?;
    let mut items = Vec::with_capacity(it.blocks.iter().map(|b| b.len()).sum());
    for b in 0..it.blocks.len() {
        for nu in 0..it.blocks[b].len() {
            items.push((it.phi(b, nu, m)? as f64 / bm, it.reps[b]));
        }
    }
    Ok(items)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NGrid {
    pub n: Vec<u64>,
    /// Entries of `n` that belong to the top window.
    pub top: Vec<u64>,
}

/// Geometric n-grid over the normalized range, with the top window n ∈ [b(top/4), b(top/2)].
pub fn default_n_grid(it: &IntegerTower, points: usize, top_points: usize) -> Result<NGrid> {
    let (lo, hi) = it.n_range();
    let half = it.a_of(hi as f64).map(|k| it.b_of(k / 2.0)).and_then(|x| x)? as u64;
    let quarter = it.b_of(it.a_of(hi as f64)? / 4.0)? as u64;
    let lo_n = lo.max(1);
    let mut n =
        geometric_grid(lo_n.max(it.blocks.iter().flatten().copied().max().unwrap_or(1)), half.max(lo_n), points);
    let top = geometric_grid(quarter.max(lo_n), half.max(lo_n), top_points);
    n.extend(top.iter().copied());
    n.sort_unstable();
    n.dedup();
    Ok(NGrid { n, top })
}

pub fn check_inversion(
    it: &IntegerTower,
    grid: &NGrid,
    tol: f64,
    tail_x: &[f64],
    tail_const: f64,
) -> Result<InversionReport> {
    let y = it.limit.clone();
    let z = match &y {
        Some(y) => Some(y.reciprocal()?.proxy(14)?),
        None => None,
    };
    let mut rows = Vec::with_capacity(grid.n.len());
    for &n in &grid.n {
        let occ = occupation_distribution(it, n, tail_x, tail_const)?;
        let v_return = match &z {
            Some(zd) => {
                let m = occ.a.round().max(1.0) as u64;
                match return_law(it, m) {
                    Ok(mut items) => Some(weighted_distances(&mut items, zd).0),
                    Err(Error::Range(_)) => None,
                    Err(e) => return Err(e),
                }
            }
            None => None,
        };
        rows.push(InversionRow {
            n,
            a: occ.a,
            top_window: grid.top.contains(&n),
            v_occupation: occ.v,
            v_return,
            tail_pass: occ.tail_checks.iter().all(|t| t.pass),
            tail_checks: occ.tail_checks,
        });
    }
    let top_max_v = rows.iter().filter(|r| r.top_window).filter_map(|r| r.v_occupation).fold(0.0, f64::max);
    let tail_pass = rows.iter().all(|r| r.tail_pass);
    Ok(InversionReport { trend_pass: top_max_v <= tol, rows, tol, top_max_v, tail_pass })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub checked_points: u64,
    pub checked_times: u64,
    pub failures: u64,
    /// First failing (block, ν, n).
    pub witness: Option<(usize, usize, u64)>,
}

/// φ_j(ν) ≤ n ⇔ S_n(ν) ≥ j for every base point, every n ≤ 2·Σ and every j, on towers
/// of height at most `max_height`. φ is strictly increasing in j, so it suffices that
/// φ_{S_n} ≤ n < φ_{S_n+1}, which is checked together with the monotonicity.
pub fn check_duality(it: &IntegerTower, max_height: usize) -> Result<DualityReport> {
    if it.height() > max_height {
        return Err(Error::Precondition(format!("tower height {} exceeds {max_height}", it.height())));
    }
    let mut rep = DualityReport { checked_points: 0, checked_times: 0, failures: 0, witness: None };
    for b in 0..it.blocks.len() {
        let l = it.blocks[b].len() as u64;
        let total = it.total(b);
        for nu in 0..it.blocks[b].len() {
            rep.checked_points += 1;
            let phis: Vec<u64> = (0..=2 * l + 2).map(|j| it.phi(b, nu, j)).collect::<Result<_>>()?;
            let monotone = phis.windows(2).all(|w| w[1] > w[0]);
            for n in 0..=2 * total {
                rep.checked_times += 1;
                let s = it.occupation_at(b, nu, n);
                let ok = monotone && (s as usize + 1) < phis.len() && phis[s as usize] <= n && phis[s as usize + 1] > n;
                if !ok {
                    rep.failures += 1;
                    rep.witness.get_or_insert((b, nu, n));
                }
            }
        }
    }
    Ok(rep)
}

/// Σ_{k=1}^{n} #{x ∈ Ω : T^k x ∈ Ω} by stepping every base point up its column; small towers only.
pub fn hitting_total(it: &IntegerTower, n: u64) -> Result<u64> {
    if it.height() > 4096 || n > 1 << 20 {
        return Err(Error::Precondition("hitting counts are for small towers".into()));
    }
    let mut total = 0u64;
    for b in 0..it.blocks.len() {
        let w = &it.blocks[b];
        for start in 0..w.len() {
            let (mut nu, mut level) = (start, 0u64);
            let mut hits = 0u64;
            for _ in 0..n {
                level += 1;
                if level == w[nu] {
                    level = 0;
                    nu = (nu + 1) % w.len();
                    hits += 1;
                }
            }
            total += hits * it.reps[b];
        }
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreRow {
    pub n: u64,
    pub a: f64,
    /// (∫ S_n^α)^{1/α}, or ‖S_n‖_∞ for α = ∞.
    pub a_alpha: f64,
    pub a_one: f64,
    pub ratio: f64,
    /// ∫ (S_n/a(n))^α.
    pub moment: f64,
    /// u_α(n, t) per t.
    pub u: Vec<(f64, f64)>,
    pub top_window: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupCheck {
    pub t: f64,
    pub sup_u: f64,
    /// C·∫_t^∞ P(Y^α > s) ds.
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaTable {
    /// α, or "inf" for the sup-norm version.
    pub alpha: String,
    pub rows: Vec<AreRow>,
    /// E(Y^α) = ∞: the α-moments are expected to blow up.
    pub divergent: bool,
    /// ‖Y‖_α/‖Y‖_1 when finite.
    pub target_ratio: Option<f64>,
    pub top_ratio_gap: Option<f64>,
    pub sup_checks: Vec<SupCheck>,
    /// Whether the α-moment increases along the n-grid.
    pub moment_growing: bool,
    /// sup over the grid of ‖S_n/a_1(n)‖_∞ (α = ∞ only).
    pub bre_sup: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreReport {
    pub tables: Vec<AlphaTable>,
}

fn norm_alpha(counts: &[(u64, u64)], total: u64, alpha: f64) -> f64 {
    if alpha.is_infinite() {
        return counts.last().map(|c| c.0 as f64).unwrap_or(0.0);
    }
    let m: f64 = counts.iter().map(|&(s, c)| (s as f64).powf(alpha) * c as f64).sum::<f64>() / total as f64;
    m.powf(1.0 / alpha)
}

/// α-moment diagnostics per α (f64::INFINITY for the sup-norm form).
pub fn are_diagnostic(
    it: &IntegerTower,
    alphas: &[f64],
    grid: &NGrid,
    t_grid: &[f64],
    tail_const: f64,
) -> Result<AreReport> {
    if alphas.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::InvalidParameter("α must be positive".into()));
    }
    type Occ = (u64, f64, Vec<(u64, u64)>);
    let occ: Vec<Occ> =
        grid.n.iter().map(|&n| Ok((n, it.a_of(n as f64)?, it.occupation_counts(n)))).collect::<Result<_>>()?;
    let total = it.positions();
    let y = it.limit.as_ref();
    let mut tables = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let finite_alpha = alpha.is_finite();
        let divergent = finite_alpha && y.is_some_and(|y| !y.moment_finite(alpha));
        let target_ratio = y.and_then(|y| {
            if !finite_alpha || divergent {
                return None;
            }
            let p = y.proxy(16).ok()?;
            let m1 = p.moment(1.0);
            let ma = p.moment(alpha).powf(1.0 / alpha);
            let exact = y.finite().is_some();
            (exact && m1.is_finite() && ma.is_finite()).then_some(ma / m1)
        });
        let mut rows = Vec::with_capacity(occ.len());
        for (n, a, counts) in &occ {
            let a_alpha = norm_alpha(counts, total, alpha);
            let a_one = norm_alpha(counts, total, 1.0);
            let (moment, u) = if finite_alpha {
                let phi: Vec<(f64, u64)> = counts.iter().map(|&(s, c)| ((s as f64 / a).powf(alpha), c)).collect();
                let moment = phi.iter().map(|&(p, c)| p * c as f64).sum::<f64>() / total as f64;
                let u = t_grid
                    .iter()
                    .map(|&t| {
                        (t, phi.iter().filter(|p| p.0 > t).fold(0.0, |acc, &(p, c)| acc + p * c as f64) / total as f64)
                    })
                    .collect();
                (moment, u)
            } else {
                (a_alpha / a, Vec::new())
            };
            rows.push(AreRow {
                n: *n,
                a: *a,
                a_alpha,
                a_one,
                ratio: a_alpha / a_one,
                moment,
                u,
                top_window: grid.top.contains(n),
            });
        }
        let top_ratio_gap =
            target_ratio.map(|r| rows.iter().filter(|w| w.top_window).map(|w| (w.ratio - r).abs()).fold(0.0, f64::max));
        let mut sup_checks = Vec::new();
        if finite_alpha && !divergent {
            if let Some(y) = y {
                for (i, &t) in t_grid.iter().enumerate() {
                    let sup_u = rows.iter().map(|r| r.u[i].1).fold(0.0, f64::max);
                    let bound = tail_const * y.tail_integral(alpha, t);
                    sup_checks.push(SupCheck { t, sup_u, bound, pass: sup_u <= bound });
                }
            }
        }
        let moment_growing = rows.windows(2).all(|w| w[1].moment >= w[0].moment) && rows.len() > 1;
        let bre_sup = (!finite_alpha).then(|| rows.iter().map(|r| r.a_alpha / r.a_one).fold(0.0, f64::max));
        tables.push(AlphaTable {
            alpha: if finite_alpha { format!("{alpha}") } else { "inf".into() },
            rows,
            divergent,
            target_ratio,
            top_ratio_gap,
            sup_checks,
            moment_growing,
            bre_sup,
        });
    }
    Ok(AreReport { tables })
}
