//! Towers: chains of extension and straightening steps over a target law, the global
//! normalizing sequence b(k) = kγ(k), exact laws of S_k at the finest stage and the
//! limit-theorem checks run on them.

use num_integer::Integer;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocks::Block;
use crate::dist::{vasershtein, weighted_distances, Ext, FiniteDist, SymRep};
use crate::engine::{
    basic_extend, choose_mu, extension_step, geometric_grid, straightening_step, BlockArray, ExtensionCertificate,
    ExtensionParams, GammaTable, StraightenParams, StraightenReport,
};
use crate::error::{Error, Result};
use crate::scalar::{rat, rational_to_f64, FastNum, Rational, Scalar};
use crate::splitting::{build_split_sequence, SplitSequence, TargetDist};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pipeline {
    /// Extension chain for finite targets, alternating straightening and extension otherwise.
    Auto,
    /// Single-block bumps κ_n = 1/n over a constant target.
    Example1 { stages: usize },
}

#[derive(Clone, Debug)]
pub struct TowerParams<W: Scalar> {
    pub pipeline: Pipeline,
    /// Δ_1 > Δ_2 > …; step i takes Δ_i to Δ_{i+1}.
    pub schedule: Vec<W>,
    /// Accuracy schedule for the dyadic approximations of non-finite targets.
    pub split_eps: Vec<f64>,
    pub n: u64,
    pub k_factor: Option<W>,
    pub round_delta: W,
    pub h0: usize,
    pub cap: u64,
    pub grid_points: usize,
    pub exhaustive_k: u64,
    pub geometric_k: usize,
    pub split_guard: u32,
    pub max_depth: u32,
}

impl<W: Scalar> TowerParams<W> {
    pub fn new(schedule: Vec<W>) -> Self {
        TowerParams {
            pipeline: Pipeline::Auto,
            schedule,
            split_eps: vec![0.4, 0.2, 0.1],
            n: 1,
            k_factor: None,
            round_delta: W::from_rational(rat(9, 10)),
            h0: 2,
            cap: 1 << 24,
            grid_points: 64,
            exhaustive_k: 4096,
            geometric_k: 256,
            split_guard: 8,
            max_depth: 20,
        }
    }

    pub fn example1(stages: usize) -> Self {
        let mut p = Self::new(Vec::new());
        p.pipeline = Pipeline::Example1 { stages };
        p.h0 = 1;
        p
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Basic,
    Extension,
    Straightening,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub index: usize,
    pub kind: StageKind,
    /// Dyadic depth of the law the stage output is distributed as.
    pub depth: Option<u32>,
    pub h_in: u64,
    pub height: u64,
    pub blocks: usize,
    pub scale: String,
    pub delta_in: String,
    pub delta_out: String,
    pub changed: u64,
    pub positions: u64,
    pub change_mass: f64,
    pub monotone: bool,
    pub max_v: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasicStageReport {
    pub q: u64,
    pub mu: u64,
    pub kappa: String,
    /// 1/(q·h_{n−1}), the predicted fraction of changed positions.
    pub predicted_change: String,
    pub exact_match: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StageCertificate {
    Basic(BasicStageReport),
    Extension(ExtensionCertificate),
    Straightening(StraightenReport),
}

#[derive(Clone, Debug)]
pub struct Stage<W: Scalar> {
    pub summary: StageSummary,
    pub gamma: GammaTable<W>,
    pub cert: StageCertificate,
}

#[derive(Clone, Debug)]
pub struct TowerTrace<W: Scalar> {
    pub stages: Vec<Stage<W>>,
    pub gamma: GammaTable<W>,
    /// Finest array.
    pub array: BlockArray<W>,
    pub schedule: Vec<W>,
    pub split: Option<SplitSequence<W>>,
    pub target: TargetDist,
    pub floor_r: Ext<W>,
    pub bicycle_m: Rational,
    pub complete: bool,
    pub incomplete: Option<String>,
}

/// Symmetric representation of a finite law with rational masses.
pub fn rep_of_finite<W: Scalar>(d: &FiniteDist<Rational>, max_size: usize) -> Result<SymRep<W>> {
    let l = d.atoms().iter().fold(1i128, |acc, (_, m)| acc.lcm(m.denom()));
    if l as usize > max_size {
        return Err(Error::InvalidParameter(format!("target needs {l} equally likely points (limit {max_size})")));
    }
    let mut vals = Vec::with_capacity(l as usize);
    for (v, m) in d.atoms() {
        let x = v.finite().ok_or_else(|| Error::InvalidParameter("target has an atom at ∞".into()))?;
        let count = (*m * Rational::from_integer(l)).to_integer();
        vals.extend(std::iter::repeat_n(W::from_rational(x), count as usize));
    }
    SymRep::finite(vals)
}

fn cap_error(e: Error) -> std::result::Result<Error, String> {
    match e {
        Error::SizeCap { cap, needed, what } => Err(format!("size cap {cap} exceeded: {what} would need {needed}")),
        other => Ok(other),
    }
}

pub fn build_tower<W: Scalar>(target: &TargetDist, params: &TowerParams<W>) -> Result<TowerTrace<W>> {
    match params.pipeline {
        Pipeline::Example1 { stages } => build_example1(target, stages, params),
        Pipeline::Auto => build_chain(target, params),
    }
}

fn build_chain<W: Scalar>(target: &TargetDist, params: &TowerParams<W>) -> Result<TowerTrace<W>> {
    let sched = &params.schedule;
    if sched.len() < 2 {
        return Err(Error::InvalidParameter("the Δ schedule needs at least two entries".into()));
    }
    if sched.iter().any(|d| !(*d > W::zero())) || sched.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter("the Δ schedule must be positive and strictly decreasing".into()));
    }
    if params.h0 == 0 {
        return Err(Error::InvalidParameter("h0 must be positive".into()));
    }
    let (reps, split, floor_r) = match target.finite() {
        Some(d) => {
            let rep = rep_of_finite::<W>(d, 4096)?;
            let m = rep.size() as i128;
            let r = target.quantile_at::<W>(Rational::from_integer(1) - rat(1, m))?;
            (vec![(rep, None)], None, r)
        }
        None => {
            let mut s =
                build_split_sequence::<W>(target, &params.split_eps, params.max_depth, params.split_guard, false)?;
            if s.reps.iter().any(|r| r.rep.finite_values().is_err()) {
                s = build_split_sequence::<W>(target, &params.split_eps, params.max_depth, params.split_guard, true)?;
            }
            let reps = s.reps.iter().map(|r| (r.rep.clone(), Some(r.depth))).collect::<Vec<_>>();
            let r = s.floor_r;
            (reps, Some(s), r)
        }
    };

    let c = W::one();
    let mut arr = BlockArray::constant(reps[0].0.clone(), c, params.h0, sched[0])?;
    let mut depth = reps[0].1;
    let mut stages: Vec<Stage<W>> = Vec::new();
    let mut gamma: Option<GammaTable<W>> = None;
    let mut incomplete = None;
    let mut rep_idx = 0usize;
    let mut next_is_straighten = false;
    for s in 0..sched.len() - 1 {
        let (d_in, d_out) = (sched[s], sched[s + 1]);
        let h_in = arr.height() as u64;
        let straighten = next_is_straighten && rep_idx + 1 < reps.len();
        let res = if straighten {
            let next = &reps[rep_idx + 1];
            let proj = crate::splitting::restriction(
                &crate::splitting::DyadicRep { depth: next.1.unwrap_or(0), rep: next.0.clone() },
                &crate::splitting::DyadicRep { depth: depth.unwrap_or(0), rep: arr.rep().clone() },
            )?;
            let mut sp = StraightenParams::new(d_out);
            sp.round_delta = params.round_delta.max_w(d_in);
            sp.cap = params.cap;
            sp.grid_points = params.grid_points;
            straightening_step(&arr, &proj, &sp).map(|out| {
                let r = out.report.clone();
                let summary = StageSummary {
                    index: s + 1,
                    kind: StageKind::Straightening,
                    depth: next.1,
                    h_in,
                    height: out.array.height() as u64,
                    blocks: out.array.size(),
                    scale: out.array.scale().render(),
                    delta_in: d_in.render(),
                    delta_out: d_out.render(),
                    changed: r.changed,
                    positions: r.positions,
                    change_mass: r.change_mass,
                    monotone: r.monotone,
                    max_v: r.v.iter().copied().fold(0.0, f64::max),
                    passed: r.passed,
                };
                (out.array, out.beta, summary, StageCertificate::Straightening(r), true)
            })
        } else {
            let mut ep = ExtensionParams::new(d_out, params.n);
            ep.k_factor = params.k_factor;
            ep.round_delta = params.round_delta.max_w(d_in);
            ep.cap = params.cap;
            ep.grid_points = params.grid_points;
            ep.exhaustive_k = params.exhaustive_k;
            ep.geometric_k = params.geometric_k;
            extension_step(&arr, &ep).map(|out| {
                let cert = out.cert.clone();
                let summary = StageSummary {
                    index: s + 1,
                    kind: StageKind::Extension,
                    depth,
                    h_in,
                    height: out.array.height() as u64,
                    blocks: out.array.size(),
                    scale: out.array.scale().render(),
                    delta_in: d_in.render(),
                    delta_out: d_out.render(),
                    changed: cert.changed,
                    positions: cert.positions,
                    change_mass: cert.change_mass,
                    monotone: cert.monotone,
                    max_v: cert.v.iter().copied().fold(0.0, f64::max),
                    passed: cert.passed,
                };
                (out.array, out.gamma, summary, StageCertificate::Extension(cert), false)
            })
        };
        match res {
            Ok((next_arr, table, summary, cert, was_straighten)) => {
                match gamma.as_mut() {
                    None => gamma = Some(table.clone()),
                    Some(g) => g.append(&table)?,
                }
                if was_straighten {
                    rep_idx += 1;
                    depth = reps[rep_idx].1;
                }
                stages.push(Stage { summary, gamma: table, cert });
                arr = next_arr;
                next_is_straighten = split.is_some() && !was_straighten;
            }
            Err(e) => match cap_error(e) {
                Ok(hard) => return Err(hard),
                Err(msg) => {
                    incomplete = Some(format!("step {}: {msg}", s + 1));
                    break;
                }
            },
        }
    }
    let gamma = match gamma {
        Some(g) => g,
        None => GammaTable::constant(arr.height() as u64, arr.height() as u64, c, sched[0].to_f64(), sched[0])?,
    };
    Ok(TowerTrace {
        stages,
        gamma,
        array: arr,
        schedule: sched.clone(),
        split,
        target: target.clone(),
        floor_r,
        bicycle_m: rat(9, 8),
        complete: incomplete.is_none(),
        incomplete,
    })
}

trait MaxW {
    fn max_w(self, o: Self) -> Self;
}

impl<W: Scalar> MaxW for W {
    fn max_w(self, o: Self) -> Self {
        if o > self {
            o
        } else {
            self
        }
    }
}

fn build_example1<W: Scalar>(target: &TargetDist, stages: usize, params: &TowerParams<W>) -> Result<TowerTrace<W>> {
    let cval = match target.finite() {
        Some(d) if d.len() == 1 => {
            d.min_value().finite().ok_or_else(|| Error::InvalidParameter("target at ∞".into()))?
        }
        _ => return Err(Error::InvalidParameter("the single-block pipeline needs a constant target".into())),
    };
    if stages == 0 {
        return Err(Error::InvalidParameter("at least one stage required".into()));
    }
    let c = W::from_rational(cval);
    let rep = SymRep::finite(vec![W::one()])?;
    let mut w = Block::new(vec![c; params.h0.max(1)])?;
    let mut e = c;
    let mut out_stages = Vec::with_capacity(stages);
    let mut gamma: Option<GammaTable<W>> = None;
    let mut incomplete = None;
    let schedule: Vec<W> = if params.schedule.is_empty() {
        (1..=stages as u64 + 1).map(|n| W::from_rational(rat(3, n as i128 + 2))).collect()
    } else {
        params.schedule.clone()
    };
    if schedule.len() <= stages {
        return Err(Error::InvalidParameter(format!("{stages} stages need {} Δ values", stages + 1)));
    }
    if schedule.iter().any(|d| !(*d > W::zero() && *d <= W::one())) || schedule.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidParameter("Δ values must lie in (0, 1] and not increase".into()));
    }
    for n in 1..=stages as u64 {
        let delta = schedule[n as usize - 1];
        let next_delta = schedule[n as usize];
        let kappa = W::from_rational(rat(1, n as i128));
        let q = (W::one() / delta).floor_u64().ok_or_else(|| Error::Overflow("q".into()))? + 1;
        let h = w.len() as u64;
        let step = choose_mu(&w, delta, kappa, q, next_delta, params.cap)
            .and_then(|mu| basic_extend(&w, delta, kappa, q, mu, params.cap).map(|v| (mu, v)));
        let (mu, v) = match step {
            Ok(x) => x,
            Err(err) => match cap_error(err) {
                Ok(hard) => return Err(hard),
                Err(msg) => {
                    incomplete = Some(format!("stage {n}: {msg}"));
                    break;
                }
            },
        };
        let (changed, monotone) = compare_with_ancestor(&v, &w);
        let positions = v.len() as u64;
        let predicted = rat(1, (q * h) as i128);
        let exact_match = Rational::new(changed as i128, positions as i128) == predicted;
        let e_new = v.mean();
        let top = v.len() as u64;
        let mut anchors = vec![(h, e)];
        if h + 1 < top {
            anchors.push((h + 1, e_new));
        }
        anchors.push((top, e_new));
        let table = GammaTable::new(anchors, vec![(h, delta.to_f64())], delta)?;
        match gamma.as_mut() {
            None => gamma = Some(table.clone()),
            Some(g) => g.append(&table)?,
        }
        let summary = StageSummary {
            index: n as usize,
            kind: StageKind::Basic,
            depth: None,
            h_in: h,
            height: top,
            blocks: 1,
            scale: e_new.render(),
            delta_in: delta.render(),
            delta_out: next_delta.render(),
            changed,
            positions,
            change_mass: changed as f64 / positions as f64,
            monotone,
            max_v: 0.0,
            passed: monotone && exact_match,
        };
        let cert = StageCertificate::Basic(BasicStageReport {
            q,
            mu,
            kappa: kappa.render(),
            predicted_change: predicted.to_string(),
            exact_match,
        });
        out_stages.push(Stage { summary, gamma: table, cert });
        w = v;
        e = e_new;
    }
    let h = w.len() as u64;
    let gamma = match gamma {
        Some(g) => g,
        None => GammaTable::constant(h, h, c, 1.0, W::one())?,
    };
    let delta = schedule[out_stages.len()];
    let array = BlockArray::assemble(rep, vec![w], e / c, delta)?;
    Ok(TowerTrace {
        stages: out_stages,
        gamma,
        array,
        schedule,
        split: None,
        target: target.clone(),
        floor_r: Ext::Fin(c),
        bicycle_m: rat(9, 8),
        complete: incomplete.is_none(),
        incomplete,
    })
}

/// Positions where `v` differs from the periodic extension of `w`, and whether v ≥ w there.
fn compare_with_ancestor<W: Scalar>(v: &Block<W>, w: &Block<W>) -> (u64, bool) {
    let h = w.len();
    // fast path: w's unit is an integer multiple of v's
    if let Some(f) = w.unit().in_units(v.unit()).map(|f| f.to_f64()) {
        if f >= 1.0 && f.fract() == 0.0 && f < 1e15 {
            let (vf, wf) = (v.fast(), w.fast());
            let mut changed = 0u64;
            let mut monotone = true;
            for (i, &x) in vf.iter().enumerate() {
                let a = wf[i % h].mul_u(f as u64);
                changed += (x != a) as u64;
                monotone &= x >= a;
            }
            return (changed, monotone);
        }
    }
    let old = w.weights();
    let mut changed = 0u64;
    let mut monotone = true;
    for (i, x) in v.weights().into_iter().enumerate() {
        let a = old[i % h];
        if x != a {
            changed += 1;
        }
        if x < a {
            monotone = false;
        }
    }
    (changed, monotone)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KGridSpec {
    /// Every k in a window of this half-width around each stage boundary.
    pub boundary_window: u64,
    pub geometric: usize,
    /// Below this height every k is checked.
    pub exhaustive_max: u64,
    /// Use exactly these k instead (clipped to the tower).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explicit: Option<Vec<u64>>,
}

impl Default for KGridSpec {
    fn default() -> Self {
        KGridSpec { boundary_window: 64, geometric: 512, exhaustive_max: 65536, explicit: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkDistReport {
    pub k: u64,
    pub b: f64,
    pub dist: FiniteDist<f64>,
    /// 𝔳 to the target.
    pub v: f64,
    /// 𝔲 to the target, for finite targets.
    pub u: Option<f64>,
}

impl<W: Scalar> TowerTrace<W> {
    pub fn h0(&self) -> u64 {
        self.gamma.h()
    }

    pub fn top(&self) -> u64 {
        self.gamma.top()
    }

    /// Heights h_0 < h_1 < … of the stage outputs.
    pub fn boundaries(&self) -> Vec<u64> {
        let mut b = vec![self.h0()];
        b.extend(self.stages.iter().map(|s| s.summary.height));
        b
    }

    pub fn b_of(&self, k: u64) -> Result<W> {
        Ok(W::from_u64(k) * self.gamma.gamma(k)?)
    }

    pub fn b_f64(&self, k: u64) -> Result<f64> {
        Ok(k as f64 * self.gamma.gamma(k)?.to_f64())
    }

    /// b^{−1}(y) by bisection over the covered range, linear between integers.
    pub fn b_inverse(&self, y: f64) -> Result<f64> {
        let (lo, hi) = (self.h0(), self.top());
        let blo = self.b_f64(lo)?;
        let bhi = self.b_f64(hi)?;
        if !(y >= blo && y <= bhi) {
            return Err(Error::Range(format!("{y} outside [b({lo}), b({hi})] = [{blo}, {bhi}]")));
        }
        let (mut a, mut b) = (lo, hi);
        while b - a > 1 {
            let m = a + (b - a) / 2;
            if self.b_f64(m)? <= y {
                a = m;
            } else {
                b = m;
            }
        }
        let (ya, yb) = (self.b_f64(a)?, self.b_f64(b)?);
        if yb <= ya {
            return Ok(a as f64);
        }
        Ok((a as f64 + (y - ya) / (yb - ya)).min(b as f64))
    }

    /// ε for k inside stage i's range (its Δ_in), and the last ℰ from the top on.
    pub fn stage_eps(&self, k: u64) -> f64 {
        for s in &self.stages {
            if k >= s.summary.h_in && k < s.summary.height {
                return self.delta_of(&s.summary.delta_in);
            }
        }
        match self.stages.last() {
            Some(s) => self.delta_of(&s.summary.delta_out),
            None => self.schedule.first().map(|d| d.to_f64()).unwrap_or(1.0),
        }
    }

    fn delta_of(&self, s: &str) -> f64 {
        W::parse_str(s).map(|d| d.to_f64()).unwrap_or(f64::NAN)
    }

    /// Law the finest array is built to reproduce.
    pub fn stage_law(&self) -> FiniteDist<W> {
        self.array.rep().dist()
    }

    /// 𝔳 between the stage law and the target (zero for finite targets).
    pub fn law_gap(&self) -> Result<f64> {
        Ok(vasershtein(&self.stage_law(), &self.target.proxy(14)?))
    }

    /// Default k-grid: boundaries with windows plus geometric points, or everything.
    pub fn k_grid(&self, spec: &KGridSpec) -> Vec<u64> {
        let (lo, hi) = (self.h0(), self.top());
        let mut g: Vec<u64> = if let Some(ks) = &spec.explicit {
            ks.iter().copied().filter(|k| (lo..=hi).contains(k)).collect()
        } else if hi <= spec.exhaustive_max {
            (lo..=hi).collect()
        } else {
            let mut g = geometric_grid(lo, hi, spec.geometric);
            for b in self.boundaries() {
                let a = b.saturating_sub(spec.boundary_window).max(lo);
                let z = b.saturating_add(spec.boundary_window).min(hi);
                g.extend(a..=z);
            }
            g
        };
        g.sort_unstable();
        g.dedup();
        g
    }

    /// S_k/b(k) over every position of every finest block, as sorted (value, count) pairs.
    pub fn sk_values(&self, k: u64) -> Result<Vec<(f64, u64)>> {
        let b = self.b_f64(k)?;
        if k > self.array.height() as u64 {
            return Err(Error::Range(format!("k = {k} exceeds the finest height {}", self.array.height())));
        }
        let mut items = Vec::new();
        for blk in self.array.blocks() {
            let per = blk.period();
            let w = (blk.len() / per) as u64;
            let u = blk.unit().to_f64();
            items.extend((0..per).map(|nu| (blk.sk_fast(k, nu).to_f64() * u / b, w)));
        }
        items.par_sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, u64)> = Vec::with_capacity(items.len());
        for (v, c) in items {
            match merged.last_mut() {
                Some(l) if l.0 == v => l.1 += c,
                _ => merged.push((v, c)),
            }
        }
        Ok(merged)
    }

    pub fn positions(&self) -> u64 {
        (self.array.height() * self.array.size()) as u64
    }

    pub fn sk_distribution(&self, k: u64) -> Result<SkDistReport> {
        let mut items = self.sk_values(k)?;
        let n = self.positions();
        let dist = FiniteDist::from_sorted_counts(items.iter().map(|&(v, c)| (Ext::Fin(v), c)), n);
        let proxy = self.target.proxy(14)?;
        let (v, u) = weighted_distances(&mut items, &proxy);
        let u = self.target.finite().map(|_| u);
        Ok(SkDistReport { k, b: self.b_f64(k)?, dist, v, u })
    }

    /// #{positions with S_k < x·b(k)}, exactly when the arithmetic allows.
    pub fn count_below(&self, k: u64, x: Rational) -> Result<(u64, bool)> {
        let b = self.b_of(k)?;
        let bf = self.b_f64(k)? * rational_to_f64(x);
        let mut count = 0u64;
        let mut exact = true;
        for blk in self.array.blocks() {
            let per = blk.period();
            let w = (blk.len() / per) as u64;
            let c = match b.below_units(x, blk.unit()) {
                Some(t) => (0..per).filter(|&nu| blk.sk_fast(k, nu) < t).count() as u64,
                None => {
                    exact = false;
                    let u = blk.unit().to_f64();
                    (0..per).filter(|&nu| blk.sk_fast(k, nu).to_f64() * u < bf).count() as u64
                }
            };
            count += c * w;
        }
        Ok((count, exact && W::MODE == crate::scalar::Mode::Exact))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KCheck {
    pub k: u64,
    pub b: f64,
    pub v: f64,
    pub u: Option<f64>,
    pub eps: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BicycleCheck {
    pub k: u64,
    pub x: String,
    /// P(S_k < x·b(k)).
    pub lhs: String,
    /// P(Y ≤ M·x).
    pub rhs: String,
    pub exact: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioCheck {
    pub k: u64,
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoremParams {
    pub bicycle_m: String,
    pub bicycle_x: Vec<String>,
    pub ratio_tol: f64,
    pub ratio_points: usize,
}

impl Default for TheoremParams {
    fn default() -> Self {
        TheoremParams {
            bicycle_m: "9/8".into(),
            bicycle_x: vec!["3/10".into(), "1/2".into(), "4/5".into()],
            ratio_tol: 0.1,
            ratio_points: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub k_checks: Vec<KCheck>,
    /// 𝔳 between the finest stage law and the target, added to every ε.
    pub law_gap: f64,
    pub bicycle: Vec<BicycleCheck>,
    pub bicycle_x_used: Vec<String>,
    pub floor_r: String,
    pub ratios: Vec<RatioCheck>,
    /// Share of consecutive slope pairs of b on the grid that are nondecreasing.
    pub convex_fraction: f64,
    /// Whether Δ_1 < min Y/9; `None` when min Y is 0.
    pub delta_condition: Option<bool>,
    pub change_mass_total: f64,
    pub residual_bound: f64,
    pub v_pass: bool,
    pub bicycle_pass: bool,
    pub ratio_pass: bool,
    /// Whether bicycle failures count against `passed` (they do when `delta_condition` holds).
    pub bicycle_gated: bool,
    pub passed: bool,
    /// First failing (k, x), x absent for 𝔳 and ratio failures.
    pub witness: Option<(u64, Option<String>)>,
}

pub fn certify_theorem1<W: Scalar>(trace: &TowerTrace<W>, k_grid: &[u64], tp: &TheoremParams) -> Result<TheoremReport> {
    if !trace.complete {
        return Err(Error::Precondition("certification needs a complete trace".into()));
    }
    if k_grid.is_empty() {
        return Err(Error::InvalidParameter("empty k-grid".into()));
    }
    let m = crate::scalar::parse_rational(&tp.bicycle_m)?;
    let xs = tp.bicycle_x.iter().map(|s| crate::scalar::parse_rational(s)).collect::<Result<Vec<_>>>()?;
    let r = trace.floor_r.to_f64();
    let xs: Vec<Rational> = xs.into_iter().filter(|x| rational_to_f64(*x * m) < r).collect();
    let proxy = trace.target.proxy(14)?;
    let finite = trace.target.finite().is_some();
    let gap = trace.law_gap()?;
    let n = trace.positions();

    let mut k_checks = Vec::with_capacity(k_grid.len());
    let mut bicycle = Vec::new();
    for &k in k_grid {
        let mut items = trace.sk_values(k)?;
        let (v, u) = weighted_distances(&mut items, &proxy);
        let eps = trace.stage_eps(k) + gap;
        k_checks.push(KCheck { k, b: trace.b_f64(k)?, v, u: finite.then_some(u), eps, pass: v <= eps });
        for &x in &xs {
            let (count, exact_l) = trace.count_below(k, x)?;
            let lhs = Rational::new(count as i128, n as i128);
            let (rhs, pass, exact) = match trace.target.finite() {
                Some(d) => {
                    let p = d.cdf_le(Ext::Fin(x * m));
                    (
                        p.to_string(),
                        if exact_l { lhs <= p } else { rational_to_f64(lhs) <= rational_to_f64(p) },
                        exact_l,
                    )
                }
                None => {
                    let p = trace.target.cdf(rational_to_f64(x * m));
                    (format!("{p:e}"), rational_to_f64(lhs) <= p, false)
                }
            };
            bicycle.push(BicycleCheck { k, x: x.to_string(), lhs: lhs.to_string(), rhs, exact, pass });
        }
    }

    let top = trace.top();
    let lo = (top / 20).max(trace.h0());
    let hi = top / 2;
    let mut ratios = Vec::new();
    if hi >= lo && hi > 0 {
        for k in geometric_grid(lo, hi, tp.ratio_points) {
            let ratio = trace.b_f64(2 * k)? / trace.b_f64(k)?;
            ratios.push(RatioCheck { k, ratio, pass: (ratio - 2.0).abs() <= tp.ratio_tol });
        }
    }
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        pts.push((k as f64, trace.b_f64(k)?));
    }
    let slopes: Vec<f64> = pts.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
    let pairs = slopes.len().saturating_sub(1);
    let convex = slopes.windows(2).filter(|w| w[1] >= w[0] * (1.0 - 1e-12)).count();
    let convex_fraction = if pairs == 0 { 1.0 } else { convex as f64 / pairs as f64 };

    let min_y = trace.target.lower_bound();
    let delta_condition = (min_y > 0.0).then(|| trace.schedule[0].to_f64() < min_y / 9.0);
    let change_mass_total = trace.stages.iter().map(|s| s.summary.change_mass).sum();
    let used = trace.stages.len().min(trace.schedule.len().saturating_sub(1));
    let residual_bound = trace.schedule[used..].iter().map(|d| d.to_f64()).sum();

    let v_pass = k_checks.iter().all(|c| c.pass);
    let bicycle_pass = bicycle.iter().all(|c| c.pass);
    let ratio_pass = ratios.iter().all(|c| c.pass);
    // the domination bound is only claimed when Δ_1 < min Y/9
    let bicycle_gated = delta_condition == Some(true);
    let witness = k_checks
        .iter()
        .find(|c| !c.pass)
        .map(|c| (c.k, None))
        .or_else(|| bicycle.iter().filter(|_| bicycle_gated).find(|c| !c.pass).map(|c| (c.k, Some(c.x.clone()))))
        .or_else(|| ratios.iter().find(|c| !c.pass).map(|c| (c.k, None)));
    Ok(TheoremReport {
        k_checks,
        law_gap: gap,
        bicycle,
        bicycle_x_used: xs.iter().map(|x| x.to_string()).collect(),
        floor_r: trace.floor_r.render(),
        ratios,
        convex_fraction,
        delta_condition,
        change_mass_total,
        residual_bound,
        v_pass,
        bicycle_pass,
        ratio_pass,
        bicycle_gated,
        passed: v_pass && (bicycle_pass || !bicycle_gated) && ratio_pass,
        witness,
    })
}

/// Rows `value,mass` of a distribution.
pub fn dist_csv<W: Scalar>(d: &FiniteDist<W>) -> String {
    let mut s = String::from("value,mass\n");
    for (v, m) in d.atoms() {
        s.push_str(&format!("{},{}\n", v.render(), m));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splitting::TargetSpec;

    fn constant_one() -> TargetDist {
        TargetDist::Finite(FiniteDist::point(Ext::Fin(rat(1, 1))))
    }

    #[test]
    fn example1_structure() {
        let trace = build_tower::<Rational>(&constant_one(), &TowerParams::example1(6)).unwrap();
        assert!(trace.complete, "{:?}", trace.incomplete);
        assert_eq!(trace.stages.len(), 6);
        for s in &trace.stages {
            assert!(s.summary.monotone);
            match &s.cert {
                StageCertificate::Basic(b) => {
                    assert!(b.exact_match, "stage {}", s.summary.index);
                    assert!(b.q >= 2);
                }
                _ => panic!("wrong certificate kind"),
            }
        }
        // E(w^(n)) = 1 + Σ 1/j
        let h: Rational = (1..=6).map(|j| rat(1, j)).sum();
        assert_eq!(trace.array.block(0).mean(), rat(1, 1) + h);
        let top = trace.top();
        for k in geometric_grid(top / 4, top / 2, 8) {
            let r = trace.b_f64(2 * k).unwrap() / trace.b_f64(k).unwrap();
            assert!((1.9..=2.1).contains(&r), "b(2k)/b(k) = {r} at {k}");
        }
        assert_eq!(trace.b_of(1).unwrap(), rat(1, 1));
        for b in trace.boundaries().into_iter().skip(1) {
            let r = trace.sk_distribution(b).unwrap();
            assert!(r.v <= trace.stage_eps(b), "𝔳 = {} at {b}", r.v);
        }
        // change masses are summable: their total stays below one
        let total: f64 = trace.stages.iter().map(|s| s.summary.change_mass).sum();
        assert!(total < 1.0);
    }

    #[test]
    fn example1_rejects_non_constant_target() {
        let t = TargetDist::from_spec(
            &TargetSpec::from_json(
                r#"{"family":"points","atoms":[{"value":"1","mass":"1/2"},{"value":"2","mass":"1/2"}]}"#,
            )
            .unwrap(),
        )
        .unwrap();
        assert!(matches!(build_tower::<Rational>(&t, &TowerParams::example1(2)), Err(Error::InvalidParameter(_))));
    }
}
