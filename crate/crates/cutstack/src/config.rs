//! Run configuration: JSON format, presets, arithmetic-mode resolution and the
//! parameter sets handed to the tower and skyscraper stages.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::{Mode, Scalar};
use crate::splitting::{NumLit, TargetDist, TargetSpec};
use crate::tower::{KGridSpec, Pipeline, TheoremParams, TowerParams};

fn lit(s: &str) -> NumLit {
    NumLit::Str(s.into())
}

fn d_pipeline() -> Pipeline {
    Pipeline::Auto
}
fn d_split_eps() -> Vec<NumLit> {
    vec![lit("0.4"), lit("0.2"), lit("0.1")]
}
fn d_one() -> u64 {
    1
}
fn d_round_delta() -> NumLit {
    lit("9/10")
}
fn d_h0() -> usize {
    2
}
fn d_cap() -> u64 {
    1 << 24
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TowerConfig {
    #[serde(default = "d_pipeline")]
    pub pipeline: Pipeline,
    /// Δ_1 > Δ_2 > …; empty means the pipeline default.
    #[serde(default)]
    pub schedule: Vec<NumLit>,
    /// Accuracy schedule for the dyadic approximations (only used for non-finite targets).
    #[serde(default = "d_split_eps")]
    pub split_eps: Vec<NumLit>,
    #[serde(default = "d_one")]
    pub n: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_factor: Option<NumLit>,
    #[serde(default = "d_round_delta")]
    pub round_delta: NumLit,
    #[serde(default = "d_h0")]
    pub h0: usize,
    #[serde(default = "d_cap")]
    pub cap: u64,
}

impl Default for TowerConfig {
    fn default() -> Self {
        TowerConfig {
            pipeline: d_pipeline(),
            schedule: Vec::new(),
            split_eps: d_split_eps(),
            n: 1,
            k_factor: None,
            round_delta: d_round_delta(),
            h0: 2,
            cap: d_cap(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub k_grid: KGridSpec,
    pub theorem: TheoremParams,
    /// How many k of the grid get an skdist CSV.
    pub csv_points: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            k_grid: KGridSpec { boundary_window: 4, geometric: 24, exhaustive_max: 4096, explicit: None },
            theorem: TheoremParams::default(),
            csv_points: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkyscraperConfig {
    pub eta_int: f64,
    pub tail_constant: f64,
    pub tail_x: Vec<f64>,
    pub n_points: usize,
    pub n_top_points: usize,
    /// Finite α values; the sup-norm form is added when `sup_norm` is set.
    pub alphas: Vec<f64>,
    pub sup_norm: bool,
    pub t_grid: Vec<f64>,
    pub inversion_tol: f64,
    pub moment_tol: f64,
    pub duality_max_height: usize,
}

impl Default for SkyscraperConfig {
    fn default() -> Self {
        SkyscraperConfig {
            eta_int: 1e-3,
            tail_constant: 2.0,
            tail_x: vec![1.25, 1.5, 2.0],
            n_points: 8,
            n_top_points: 4,
            alphas: vec![0.5, 1.0, 1.5, 2.0],
            sup_norm: true,
            t_grid: vec![2.0, 4.0, 8.0],
            inversion_tol: 0.15,
            moment_tol: 0.05,
            duality_max_height: 512,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub target: TargetSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub tower: TowerConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub skyscraper: SkyscraperConfig,
    #[serde(default = "d_split_eps")]
    pub split_report_eps: Vec<NumLit>,
}

fn points(atoms: &[(&str, &str)]) -> TargetSpec {
    TargetSpec::Points {
        atoms: atoms.iter().map(|&(v, m)| crate::splitting::AtomSpec { value: lit(v), mass: lit(m) }).collect(),
    }
}

pub const PRESETS: [&str; 4] = ["example1", "twopoint", "pareto1", "lognormal"];

impl RunConfig {
    pub fn new(target: TargetSpec) -> Self {
        RunConfig {
            target,
            mode: None,
            tower: TowerConfig::default(),
            verify: VerifyConfig::default(),
            skyscraper: SkyscraperConfig::default(),
            split_report_eps: d_split_eps(),
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        let chain = |target: TargetSpec, schedule: &[&str]| {
            let mut c = RunConfig::new(target);
            c.tower.schedule = schedule.iter().map(|s| lit(s)).collect();
            c.tower.k_factor = Some(lit("5/2"));
            c
        };
        let c = match name {
            "example1" => {
                let mut c = RunConfig::new(points(&[("1", "1")]));
                c.tower.pipeline = Pipeline::Example1 { stages: 6 };
                c.tower.h0 = 1;
                c
            }
            "twopoint" => chain(points(&[("1", "1/2"), ("2", "1/2")]), &["3/10", "1/10"]),
            "pareto1" => {
                let pareto = TargetSpec::Pareto { alpha: lit("1"), scale: lit("1") };
                let mut c = chain(TargetSpec::Reciprocal { of: Box::new(pareto) }, &["3/10", "1/10"]);
                c.split_report_eps = vec![lit("0.2"), lit("0.1"), lit("0.05")];
                c
            }
            "lognormal" => {
                let t = TargetSpec::Lognormal { mu: lit("0"), sigma: lit("1") };
                let mut c = chain(t, &["0.3", "0.1"]);
                c.tower.k_factor = None;
                c.mode = Some(Mode::Float);
                c
            }
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown preset {other:?} (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(c)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// sha256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let s = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(s.as_bytes()))
    }

    pub fn target_dist(&self) -> Result<TargetDist> {
        TargetDist::from_spec(&self.target)
    }

    fn weight_literals(&self) -> Vec<&NumLit> {
        let mut v: Vec<&NumLit> = self.tower.schedule.iter().collect();
        v.push(&self.tower.round_delta);
        v.extend(self.tower.k_factor.iter());
        target_literals(&self.target, &mut v);
        v
    }

    /// Exact unless a decimal literal or an irrational target forces float; an explicit
    /// exact request that cannot be honored is an error.
    pub fn resolve_mode(&self) -> Result<Mode> {
        let decimal = self.weight_literals().iter().any(|l| l.is_decimal());
        let exact_target = self.target_dist()?.is_exact();
        match self.mode {
            Some(Mode::Exact) if decimal => {
                Err(Error::InvalidParameter("decimal literals force float mode but exact mode was requested".into()))
            }
            Some(Mode::Exact) if !exact_target => {
                Err(Error::InvalidParameter("the target has irrational quantiles; exact mode is unavailable".into()))
            }
            Some(m) => Ok(m),
            None if decimal || !exact_target => Ok(Mode::Float),
            None => Ok(Mode::Exact),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.target_dist()?;
        self.resolve_mode()?;
        let t = &self.tower;
        let sched = t.schedule.iter().map(|l| l.as_f64()).collect::<Result<Vec<_>>>()?;
        if sched.iter().any(|d| !(*d > 0.0)) || sched.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidParameter("schedules must be positive and strictly decreasing".into()));
        }
        let split = t.split_eps.iter().map(|l| l.as_f64()).collect::<Result<Vec<_>>>()?;
        if split.is_empty() || split.iter().any(|d| !(*d > 0.0)) || split.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidParameter("split_eps must be positive and strictly decreasing".into()));
        }
        if t.cap == 0 || t.h0 == 0 || t.n == 0 {
            return Err(Error::InvalidParameter("cap, h0 and n must be positive".into()));
        }
        if let Some(ks) = &self.verify.k_grid.explicit {
            if ks.is_empty() {
                return Err(Error::InvalidParameter("empty k-grid".into()));
            }
        }
        let s = &self.skyscraper;
        if !(s.eta_int > 0.0 && s.eta_int < 1.0) || !(s.tail_constant > 0.0) {
            return Err(Error::InvalidParameter("η_int must lie in (0, 1) and the tail constant be positive".into()));
        }
        if s.alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidParameter("α values must be positive and finite".into()));
        }
        if s.n_points == 0 {
            return Err(Error::InvalidParameter("empty n-grid".into()));
        }
        Ok(())
    }

    pub fn tower_params<W: Scalar>(&self) -> Result<TowerParams<W>> {
        let t = &self.tower;
        let num = |l: &NumLit| -> Result<W> {
            match l {
                NumLit::Str(s) => W::parse_str(s),
                NumLit::Num(x) => W::parse_str(&format!("{x}")),
            }
        };
        let schedule = t.schedule.iter().map(num).collect::<Result<Vec<W>>>()?;
        let mut p = match t.pipeline {
            Pipeline::Example1 { stages } => {
                let mut p = TowerParams::example1(stages);
                p.schedule = schedule;
                p
            }
            Pipeline::Auto => TowerParams::new(schedule),
        };
        p.split_eps = t.split_eps.iter().map(|l| l.as_f64()).collect::<Result<_>>()?;
        p.n = t.n;
        p.k_factor = t.k_factor.as_ref().map(num).transpose()?;
        p.round_delta = num(&t.round_delta)?;
        p.h0 = t.h0;
        p.cap = t.cap;
        Ok(p)
    }
}

fn target_literals<'a>(t: &'a TargetSpec, out: &mut Vec<&'a NumLit>) {
    match t {
        TargetSpec::Points { atoms } => {
            for a in atoms {
                out.push(&a.value);
                out.push(&a.mass);
            }
        }
        TargetSpec::Pareto { alpha, scale } => out.extend([alpha, scale]),
        TargetSpec::Lognormal { mu, sigma } => out.extend([mu, sigma]),
        TargetSpec::ShiftedExponential { shift, rate } => out.extend([shift, rate]),
        TargetSpec::Table { breaks, values } => out.extend(breaks.iter().chain(values)),
        TargetSpec::Reciprocal { of } => target_literals(of, out),
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
