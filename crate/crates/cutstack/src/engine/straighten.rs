use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::compound::{compound_extend, CompoundParams, RoundRecord};
use super::gamma::{geometric_grid, GammaTable};
use super::{sk_distances, BlockArray};
use crate::dist::{Splitting, SymRep};
use crate::error::{Error, Result};
use crate::scalar::{rat, Scalar};

#[derive(Clone, Debug)]
pub struct StraightenParams<W: Scalar> {
    /// ℰ: accuracy reached at the top and the bound on the changed mass.
    pub eps: W,
    /// Overrides the least integer K above max f(Φξ)/g(ξ).
    pub k_factor: Option<W>,
    pub round_delta: W,
    pub cap: u64,
    pub grid_points: usize,
    /// Size of the geometric k-grid for the distance check.
    pub check_points: usize,
}

impl<W: Scalar> StraightenParams<W> {
    pub fn new(eps: W) -> Self {
        StraightenParams {
            eps,
            k_factor: None,
            round_delta: W::from_rational(rat(9, 10)),
            cap: 1 << 24,
            grid_points: 64,
            check_points: 256,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StraightenReport {
    pub k_grid: Vec<u64>,
    /// 𝔳(S_k/(kβ(k)), Z) per grid point.
    pub v: Vec<f64>,
    pub bound: f64,
    pub changed: u64,
    pub positions: u64,
    pub change_mass: f64,
    pub monotone: bool,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct StraightenOutput<W: Scalar> {
    pub array: BlockArray<W>,
    /// β(k) = c((1−p_k) + p_k K).
    pub beta: GammaTable<W>,
    /// q_k = K p_k / ((1−p_k) + p_k K) on the schedule grid.
    pub q: Vec<(u64, W)>,
    pub k_factor: W,
    pub rounds: Vec<RoundRecord>,
    pub report: StraightenReport,
}

/// Least integer strictly above max f(Φξ)/g(ξ).
pub fn straighten_k<W: Scalar>(split: &Splitting<W>) -> Result<W> {
    let f = split.target().finite_values()?;
    let g = split.source().finite_values()?;
    let mut r = W::zero();
    for (x, &o) in split.projection().iter().enumerate() {
        let q = f[o] / g[x];
        if q > r {
            r = q;
        }
    }
    let n = r.floor_u64().ok_or_else(|| Error::Overflow("K".into()))?;
    Ok(W::from_u64(n + 1))
}

/// Moves a Y-distributed array over (Ω,f) to one over the splitting source (Ξ,g).
pub fn straightening_step<W: Scalar>(
    arr: &BlockArray<W>,
    split: &Splitting<W>,
    params: &StraightenParams<W>,
) -> Result<StraightenOutput<W>> {
    if split.target() != arr.rep() {
        return Err(Error::InvalidSplitting("splitting target differs from the array representation".into()));
    }
    let eps = params.eps;
    let delta = arr.delta();
    if !(eps > W::zero()) {
        return Err(Error::InvalidParameter("ℰ must be positive".into()));
    }
    let f = arr.values();
    let g = split.source().finite_values()?;
    let k = match params.k_factor {
        Some(k) => k,
        None => straighten_k(split)?,
    };
    let c = arr.scale();
    let proj = split.projection();
    let mut ts = Vec::with_capacity(g.len());
    let mut lifted = Vec::with_capacity(g.len());
    let mut vals = Vec::with_capacity(g.len());
    for (x, &o) in proj.iter().enumerate() {
        let t = k * g[x] / f[o];
        if !(t > W::one()) {
            return Err(Error::InvalidParameter(format!("K = {} leaves 𝔱 ≤ 1 at {}", k.render(), x + 1)));
        }
        ts.push(t);
        lifted.push(arr.block(o).clone());
        vals.push(f[o]);
    }
    let input = BlockArray::assemble(SymRep::finite(vals)?, lifted, c, delta)?;
    let cp = CompoundParams {
        round_delta: params.round_delta,
        eps,
        beta: delta / (c * (k - W::one())),
        change_budget: eps / W::from_u64(2),
        cap: params.cap,
        grid_points: params.grid_points,
    };
    let out = compound_extend(&input, &ts, &cp)?;
    let sch = &out.schedule;
    let anchors: Vec<(u64, W)> =
        sch.grid.iter().zip(&sch.p).map(|(&kk, &p)| (kk, c * ((W::one() - p) + p * k))).collect();
    let q: Vec<(u64, W)> =
        sch.grid.iter().zip(&sch.p).map(|(&kk, &p)| (kk, k * p / ((W::one() - p) + p * k))).collect();
    let beta = GammaTable::new(anchors, vec![(sch.h, (eps + delta).to_f64())], delta)?;

    let blocks = out.array.blocks().to_vec();
    let array = BlockArray::assemble(split.source().clone(), blocks, c * k, eps)?;

    let top = array.height() as u64;
    let mut grid = geometric_grid(sch.h, top, params.check_points);
    grid.extend(sch.grid.iter().copied());
    grid.sort_unstable();
    grid.dedup();
    let z = split.source().dist();
    let v: Vec<f64> = grid
        .par_iter()
        .map(|&kk| {
            let b = beta.gamma(kk)?.to_f64();
            Ok(sk_distances(array.blocks(), kk, kk as f64 * b, &z).0)
        })
        .collect::<Result<_>>()?;

    let h = arr.height();
    let mut changed = 0u64;
    let mut monotone = true;
    for (b, &o) in array.blocks().iter().zip(proj) {
        let anc = arr.block(o);
        for i in 0..b.len() {
            let (cur, a) = (b.weight(i), anc.weight(i % h));
            if cur != a {
                changed += 1;
            }
            if cur < a {
                monotone = false;
            }
        }
    }
    let positions = top * array.size() as u64;
    let bound = (eps + delta).to_f64();
    let change_ok = W::from_u64(changed) < eps * W::from_u64(positions);
    let passed = v.iter().all(|&x| x < bound) && change_ok && monotone;
    let report = StraightenReport {
        k_grid: grid,
        v,
        bound,
        changed,
        positions,
        change_mass: changed as f64 / positions as f64,
        monotone,
        passed,
    };
    if !passed {
        return Err(Error::Construction(format!(
            "straightening check failed: max 𝔳 = {:.4} (bound {bound:.4}), change mass {:.4}, monotone {monotone}",
            report.v.iter().copied().fold(0.0, f64::max),
            report.change_mass
        )));
    }
    Ok(StraightenOutput { array, beta, q, k_factor: k, rounds: out.rounds, report })
}
