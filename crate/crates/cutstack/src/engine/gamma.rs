use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// γ on an integer range [h, top], stored as anchors with linear interpolation, plus a
/// nonincreasing tolerance schedule ε_k (piecewise constant from each anchor on).
#[derive(Clone, Debug, PartialEq)]
pub struct GammaTable<W: Scalar> {
    anchors: Vec<(u64, W)>,
    eps: Vec<(u64, f64)>,
    step_bound: W,
}

impl<W: Scalar> GammaTable<W> {
    pub fn new(anchors: Vec<(u64, W)>, eps: Vec<(u64, f64)>, step_bound: W) -> Result<Self> {
        let t = GammaTable { anchors, eps, step_bound };
        t.validate()?;
        Ok(t)
    }

    pub fn constant(h: u64, top: u64, c: W, eps: f64, step_bound: W) -> Result<Self> {
        let anchors = if top > h { vec![(h, c), (top, c)] } else { vec![(h, c)] };
        Self::new(anchors, vec![(h, eps)], step_bound)
    }

    /// Checks monotonicity, the step bound and the ε ordering.
    pub fn validate(&self) -> Result<()> {
        if self.anchors.is_empty() || self.eps.is_empty() {
            return Err(Error::InvalidParameter("empty γ table".into()));
        }
        for pair in self.anchors.windows(2) {
            let ((a, ga), (b, gb)) = (pair[0], pair[1]);
            if b <= a {
                return Err(Error::InvalidParameter(format!("γ anchors out of order at {a}, {b}")));
            }
            if gb < ga {
                return Err(Error::InvalidParameter(format!("γ decreases between {a} and {b}")));
            }
            let slope = (gb - ga) / W::from_u64(b - a);
            if !slope.le_tol(self.step_bound) {
                return Err(Error::InvalidParameter(format!(
                    "γ step {} exceeds {} between {a} and {b}",
                    slope.render(),
                    self.step_bound.render()
                )));
            }
        }
        if self.eps[0].0 != self.h() {
            return Err(Error::InvalidParameter("ε schedule must start at h".into()));
        }
        for pair in self.eps.windows(2) {
            if pair[1].0 <= pair[0].0 || pair[1].1 > pair[0].1 {
                return Err(Error::InvalidParameter(format!("ε schedule not nonincreasing at {}", pair[1].0)));
            }
        }
        Ok(())
    }

    pub fn h(&self) -> u64 {
        self.anchors[0].0
    }

    pub fn top(&self) -> u64 {
        self.anchors[self.anchors.len() - 1].0
    }

    pub fn step_bound(&self) -> W {
        self.step_bound
    }

    pub fn anchors(&self) -> &[(u64, W)] {
        &self.anchors
    }

    pub fn eps_anchors(&self) -> &[(u64, f64)] {
        &self.eps
    }

    pub fn gamma(&self, k: u64) -> Result<W> {
        if k < self.h() || k > self.top() {
            return Err(Error::Range(format!("k = {k} outside [{}, {}]", self.h(), self.top())));
        }
        let i = self.anchors.partition_point(|a| a.0 <= k);
        let (a, ga) = self.anchors[i - 1];
        if a == k || i == self.anchors.len() {
            return Ok(ga);
        }
        let (b, gb) = self.anchors[i];
        Ok(ga + (gb - ga) * W::from_u64(k - a) / W::from_u64(b - a))
    }

    pub fn eps_at(&self, k: u64) -> f64 {
        let i = self.eps.partition_point(|e| e.0 <= k);
        self.eps[i.max(1) - 1].1
    }

    pub fn final_eps(&self) -> f64 {
        self.eps[self.eps.len() - 1].1
    }

    /// Joins a table that starts where this one ends.
    pub fn append(&mut self, next: &GammaTable<W>) -> Result<()> {
        if next.h() != self.top() {
            return Err(Error::InvalidParameter(format!("γ tables do not meet: {} vs {}", self.top(), next.h())));
        }
        let join = next.anchors[0].1;
        if !self.anchors[self.anchors.len() - 1].1.le_tol(join) {
            return Err(Error::InvalidParameter("γ drops across a stage boundary".into()));
        }
        if next.step_bound > self.step_bound {
            self.step_bound = next.step_bound;
        }
        let last = self.anchors.len() - 1;
        self.anchors[last].1 = join;
        self.anchors.extend_from_slice(&next.anchors[1..]);
        for &(k, e) in &next.eps {
            match self.eps.last_mut() {
                Some(l) if l.0 == k => l.1 = e,
                _ => self.eps.push((k, e)),
            }
        }
        self.validate()
    }
}

/// About `n` integers spread geometrically over [lo, hi], both ends included.
pub fn geometric_grid(lo: u64, hi: u64, n: usize) -> Vec<u64> {
    let mut out = vec![lo];
    if hi > lo && n > 1 {
        let r = (hi as f64 / lo.max(1) as f64).ln();
        for i in 1..n {
            let k = (lo.max(1) as f64 * (r * i as f64 / (n - 1) as f64).exp()).round() as u64;
            let k = k.clamp(lo, hi);
            if k > *out.last().unwrap() {
                out.push(k);
            }
        }
        if *out.last().unwrap() != hi {
            out.push(hi);
        }
    }
    out
}
