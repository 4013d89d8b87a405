use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::basic::lag_devs;
use super::compound::{compound_extend, CompoundParams, RoundRecord};
use super::gamma::{geometric_grid, GammaTable};
use super::BlockArray;
use crate::blocks::{concat_all, self_concat, Block};
use crate::dist::{sample_distances, weighted_distances, FiniteDist, SymRep};
use crate::error::{Error, Result};
use crate::scalar::{rat, FastNum, Scalar};

#[derive(Clone, Debug)]
pub struct ExtensionParams<W: Scalar> {
    /// ℰ, the normalization and accuracy reached at the top.
    pub eps: W,
    /// Number of intermediary stages N.
    pub n: u64,
    /// Growth factor K; by default the least integer above 2·max V / min V.
    pub k_factor: Option<W>,
    /// Normalization level between compound rounds.
    pub round_delta: W,
    /// Total fraction of positions allowed to change; Δ/2 by default.
    pub change_budget: Option<W>,
    pub cap: u64,
    pub grid_points: usize,
    /// Every k in [h, exhaustive_k] is certified.
    pub exhaustive_k: u64,
    /// Geometric k-grid size above that.
    pub geometric_k: usize,
}

impl<W: Scalar> ExtensionParams<W> {
    pub fn new(eps: W, n: u64) -> Self {
        ExtensionParams {
            eps,
            n,
            k_factor: None,
            round_delta: W::from_rational(rat(9, 10)),
            change_budget: None,
            cap: 1 << 24,
            grid_points: 64,
            exhaustive_k: 4096,
            geometric_k: 256,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StageRecord {
    pub stage: u64,
    pub height: u64,
    pub blocks: usize,
    pub rounds: Vec<RoundRecord>,
    pub change_used: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ExtensionCertificate {
    pub k_grid: Vec<u64>,
    /// 𝔳(S_k/(kγ(k)), Y) per grid point.
    pub v: Vec<f64>,
    /// 𝔲(S_k/(kγ(k)), Y) per grid point.
    pub u: Vec<f64>,
    /// ε_k, nonincreasing, ending at ℰ.
    pub eps: Vec<f64>,
    pub changed: u64,
    pub positions: u64,
    pub change_mass: f64,
    pub monotone: bool,
    pub passed: bool,
    /// Whether 𝔲 also stays below ε_k everywhere.
    pub uniform_pass: bool,
    /// Whether N > 1/ℰ, as the stage count bound asks.
    pub n_exceeds_inverse_eps: bool,
}

#[derive(Clone, Debug)]
pub struct ExtensionOutput<W: Scalar> {
    pub array: BlockArray<W>,
    pub gamma: GammaTable<W>,
    pub cert: ExtensionCertificate,
    pub stages: Vec<StageRecord>,
    pub k_factor: W,
    /// Length of one period X of each output block, and its repetition count T.
    pub period_len: u64,
    pub reps: u64,
}

/// Least integer strictly above 2·max / min.
pub fn default_k<W: Scalar>(values: &[W]) -> Result<W> {
    let (mut lo, mut hi) = (values[0], values[0]);
    for &v in values {
        if v < lo {
            lo = v;
        }
        if v > hi {
            hi = v;
        }
    }
    let r = W::from_u64(2) * hi / lo;
    let f = r.floor_u64().ok_or_else(|| Error::Overflow("K".into()))?;
    Ok(W::from_u64(f + 1))
}

fn power<W: Scalar>(k: W, n: u64) -> W {
    (0..n).fold(W::one(), |acc, _| acc * k)
}

/// The sequences alive at stage ν (length ν+1): pure u^{ν+1} and t^a s^{ν+1−a}, 1 ≤ a ≤ ν.
fn stage_children(omega: usize, nu: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut out = Vec::new();
    for u in 0..omega {
        out.push((vec![u; nu], vec![u; nu + 1]));
    }
    for t in 0..omega {
        for s in 0..omega {
            if s == t {
                continue;
            }
            for a in 1..=nu {
                let mut child = vec![t; a];
                child.extend(std::iter::repeat_n(s, nu + 1 - a));
                let parent = child[..nu].to_vec();
                out.push((parent, child));
            }
        }
    }
    out
}

/// Builds 𝔴′ refining 𝔴 whose pair is relatively (Δ, ℰ)-distributed, with a certificate.
pub fn extension_step<W: Scalar>(arr: &BlockArray<W>, params: &ExtensionParams<W>) -> Result<ExtensionOutput<W>> {
    let delta = arr.delta();
    let eps = params.eps;
    if !(eps > W::zero() && eps < delta) {
        return Err(Error::InvalidParameter("need 0 < ℰ < Δ".into()));
    }
    if params.n == 0 {
        return Err(Error::InvalidParameter("N must be positive".into()));
    }
    let omega = arr.size();
    let f = arr.values().to_vec();
    let c = arr.scale();
    let k = match params.k_factor {
        Some(k) => k,
        None => default_k(&f)?,
    };
    let fmin = f.iter().copied().fold(f[0], |a, b| if b < a { b } else { a });
    let fmax = f.iter().copied().fold(f[0], |a, b| if b > a { b } else { a });
    if !(k * fmin > fmax) {
        return Err(Error::InvalidParameter(format!("K = {} gives a factor K·min/max ≤ 1", k.render())));
    }
    let n_stages = if omega == 1 { 1 } else { params.n as usize };
    let budget = params.change_budget.unwrap_or(delta / W::from_u64(2));
    let stage_budget = budget / W::from_u64(n_stages as u64);

    let mut index: HashMap<Vec<usize>, usize> = (0..omega).map(|u| (vec![u], u)).collect();
    let mut blocks: Vec<Block<W>> = arr.blocks().to_vec();
    let mut level_delta = delta;
    let mut gamma: Option<GammaTable<W>> = None;
    let mut stages = Vec::new();
    let mut seqs: Vec<Vec<usize>> = (0..omega).map(|u| vec![u]).collect();
    for nu in 1..=n_stages {
        let kids = stage_children(omega, nu);
        let scale_nu = power(k, nu as u64 - 1);
        let mut parents = Vec::with_capacity(kids.len());
        let mut values = Vec::with_capacity(kids.len());
        let mut ts = Vec::with_capacity(kids.len());
        for (parent, child) in &kids {
            let pi =
                *index.get(parent).ok_or_else(|| Error::Construction(format!("missing parent sequence {parent:?}")))?;
            parents.push(blocks[pi].clone());
            let x = f[*parent.last().unwrap()];
            let y = f[*child.last().unwrap()];
            values.push(scale_nu * x);
            ts.push(k * y / x);
        }
        let input = BlockArray::assemble(SymRep::finite(values)?, parents, c, level_delta)?;
        let beta = delta / (c * scale_nu * (k - W::one()));
        let cp = CompoundParams {
            round_delta: params.round_delta,
            eps,
            beta,
            change_budget: stage_budget,
            cap: params.cap,
            grid_points: params.grid_points,
        };
        let out = compound_extend(&input, &ts, &cp).map_err(|e| match e {
            Error::SizeCap { cap, needed, what } => {
                Error::SizeCap { cap, needed, what: format!("extension stage {nu}, {what}") }
            }
            other => other,
        })?;
        let sch = &out.schedule;
        let anchors: Vec<(u64, W)> =
            sch.grid.iter().zip(&sch.p).map(|(&kk, &p)| (kk, c * scale_nu * (W::one() + p * (k - W::one())))).collect();
        let table = GammaTable::new(anchors, vec![(sch.h, delta.to_f64())], delta)?;
        match gamma.as_mut() {
            None => gamma = Some(table),
            Some(g) => g.append(&table)?,
        }
        stages.push(StageRecord {
            stage: nu as u64,
            height: out.array.height() as u64,
            blocks: out.array.size(),
            rounds: out.rounds.clone(),
            change_used: out.change_used.to_f64(),
        });
        blocks = out.array.blocks().to_vec();
        index = kids.iter().enumerate().map(|(i, (_, ch))| (ch.clone(), i)).collect();
        seqs = kids.into_iter().map(|(_, ch)| ch).collect();
        level_delta = eps;
    }

    // assemble one period per output symbol
    let nn = n_stages;
    let mut piece_ids: Vec<Vec<usize>> = Vec::with_capacity(omega);
    for s in 0..omega {
        let mut ids = Vec::new();
        let pure = index[&vec![s; nn + 1]];
        let copies = if omega == 1 { 1 } else { nn * (omega - 1) };
        ids.extend(std::iter::repeat_n(pure, copies));
        for t in 0..omega {
            if t == s {
                continue;
            }
            for j in 1..=nn {
                let mut seq = vec![t; nn + 1 - j];
                seq.extend(std::iter::repeat_n(s, j));
                ids.push(index[&seq]);
            }
        }
        piece_ids.push(ids);
    }
    let piece_len = blocks[0].len() as u64;
    let x_len = piece_len * piece_ids[0].len() as u64;
    if x_len > params.cap {
        return Err(Error::SizeCap { cap: params.cap, needed: x_len, what: "extension period".into() });
    }
    let xs: Vec<Block<W>> = piece_ids
        .iter()
        .map(|ids| concat_all(&ids.iter().map(|&i| &blocks[i]).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    let mut reps = 1u64;
    for x in &xs {
        reps = reps.max(lag_devs(x).least_reps(eps, params.cap, "extension output")?);
    }
    let top = x_len * reps;
    if top > params.cap {
        return Err(Error::SizeCap { cap: params.cap, needed: top, what: "extension output".into() });
    }
    let c_new = c * power(k, nn as u64);
    let mut gamma = gamma.expect("at least one stage");
    if top > gamma.top() {
        gamma.append(&GammaTable::constant(gamma.top(), top, c_new, eps.to_f64(), delta)?)?;
    }

    let target = arr.rep().dist();
    let mut bounds: Vec<u64> = stages.iter().map(|s| s.height).collect();
    bounds.push(x_len);
    let cert = certify(arr, &xs, &piece_ids, &seqs, piece_len, &blocks, &gamma, &target, &bounds, top, params)?;
    let eps_anchors: Vec<(u64, f64)> = cert.k_grid.iter().copied().zip(cert.eps.iter().copied()).collect();
    let mut merged: Vec<(u64, f64)> = Vec::with_capacity(eps_anchors.len());
    for (kk, e) in eps_anchors {
        match merged.last() {
            Some(&(_, le)) if le == e => {}
            _ => merged.push((kk, e)),
        }
    }
    let gamma = GammaTable::new(gamma.anchors().to_vec(), merged, gamma.step_bound())?;
    if !cert.passed {
        return Err(Error::Construction(format!(
            "extension certificate failed: max 𝔳 = {:.4} (Δ = {}), top 𝔳 = {:.4} (ℰ = {}), change mass {:.4}, monotone {}",
            cert.v.iter().copied().fold(0.0, f64::max),
            delta.render(),
            cert.v.last().copied().unwrap_or(0.0),
            eps.render(),
            cert.change_mass,
            cert.monotone
        )));
    }
    let outs = xs.iter().map(|x| self_concat(x, reps as usize)).collect::<Result<Vec<_>>>()?;
    let array = BlockArray::assemble(arr.rep().clone(), outs, c_new, eps)?;
    Ok(ExtensionOutput { array, gamma, cert, stages, k_factor: k, period_len: x_len, reps })
}

/// S_k/(kγ(k)) over one period of every output block, as (value, multiplicity) pairs
/// when windows inside a piece can be folded by the piece period.
fn window_sample<W: Scalar>(
    x: &Block<W>,
    pieces: &[&Block<W>],
    piece_len: u64,
    kk: u64,
    norm: f64,
    folded: &mut Vec<(f64, u64)>,
    direct: &mut Vec<f64>,
) {
    let xu = x.unit().to_f64();
    if kk > piece_len {
        direct.extend((0..x.len()).map(|i| x.sk_fast(kk, i).to_f64() * xu / norm));
        return;
    }
    let l = piece_len as usize;
    let k = kk as usize;
    for (j, b) in pieces.iter().enumerate() {
        let bu = b.unit().to_f64();
        let p = b.period();
        for r in 0..p.min(l - k + 1) {
            let count = ((l - k - r) / p + 1) as u64;
            folded.push((b.sk_fast(kk, r).to_f64() * bu / norm, count));
        }
        for o in (l - k + 1)..l {
            folded.push((x.sk_fast(kk, j * l + o).to_f64() * xu / norm, 1));
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn certify<W: Scalar>(
    arr: &BlockArray<W>,
    xs: &[Block<W>],
    piece_ids: &[Vec<usize>],
    seqs: &[Vec<usize>],
    piece_len: u64,
    blocks: &[Block<W>],
    gamma: &GammaTable<W>,
    target: &FiniteDist<W>,
    bounds: &[u64],
    top: u64,
    params: &ExtensionParams<W>,
) -> Result<ExtensionCertificate> {
    let h = arr.height() as u64;
    let mut grid: Vec<u64> = (h..=top.min(params.exhaustive_k.max(h))).collect();
    grid.extend(geometric_grid(h, top, params.geometric_k));
    grid.extend(bounds.iter().copied().filter(|&b| b >= h && b <= top));
    grid.sort_unstable();
    grid.dedup();

    let gam: Vec<f64> = grid.iter().map(|&kk| gamma.gamma(kk).map(|g| g.to_f64())).collect::<Result<_>>()?;
    let dists: Vec<(f64, f64)> = grid
        .par_iter()
        .zip(gam.par_iter())
        .map(|(&kk, &g)| {
            let norm = kk as f64 * g;
            let mut folded = Vec::new();
            let mut direct = Vec::new();
            for (x, ids) in xs.iter().zip(piece_ids) {
                let pieces: Vec<&Block<W>> = ids.iter().map(|&i| &blocks[i]).collect();
                window_sample(x, &pieces, piece_len, kk, norm, &mut folded, &mut direct);
            }
            if direct.is_empty() {
                weighted_distances(&mut folded, target)
            } else {
                sample_distances(&mut direct, target)
            }
        })
        .collect();
    let v: Vec<f64> = dists.iter().map(|d| d.0).collect();
    let u: Vec<f64> = dists.iter().map(|d| d.1).collect();
    let eps_top = params.eps.to_f64();
    let mut eps = vec![0.0; grid.len()];
    let mut run = eps_top;
    for j in (0..grid.len()).rev() {
        run = run.max(v[j] * (1.0 + 1e-9) + 1e-12);
        eps[j] = run;
    }
    let last = grid.len() - 1;
    eps[last] = eps_top;

    // positionwise comparison with the ancestor block of each piece
    let h_us = h as usize;
    let l = piece_len as usize;
    let mut changed = 0u64;
    let mut monotone = true;
    for (x, ids) in xs.iter().zip(piece_ids) {
        for (j, &pid) in ids.iter().enumerate() {
            let anc = arr.block(seqs[pid][0]);
            for o in 0..l {
                let cur = x.weight(j * l + o);
                let a = anc.weight(o % h_us);
                if cur != a {
                    changed += 1;
                }
                if cur < a {
                    monotone = false;
                }
            }
        }
    }
    let positions = xs.iter().map(|x| x.len() as u64).sum::<u64>();
    let change_mass = changed as f64 / positions as f64;
    let delta = arr.delta();
    let change_ok = W::from_u64(changed) < delta * W::from_u64(positions);
    let vmax = v.iter().copied().fold(0.0, f64::max);
    let passed = vmax < delta.to_f64() && v[last] < eps_top && change_ok && monotone;
    let uniform_pass = u.iter().zip(&eps).all(|(a, b)| a < b);
    Ok(ExtensionCertificate {
        k_grid: grid,
        v,
        u,
        eps,
        changed,
        positions,
        change_mass,
        monotone,
        passed,
        uniform_pass,
        n_exceeds_inverse_eps: W::from_u64(params.n) * params.eps > W::one(),
    })
}
