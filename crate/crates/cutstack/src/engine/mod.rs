//! Block-array extension machinery: single perturbation rounds, compounded rounds,
//! the extension step for rational targets and the straightening step.

mod basic;
mod compound;
mod extension;
mod gamma;
mod straighten;

pub use basic::{basic_extend, basic_extend_array, choose_mu, choose_mu_array, spiked};
pub use compound::{compound_extend, CompoundOutput, CompoundParams, CompoundSchedule, RoundRecord};
pub use extension::{default_k, extension_step, ExtensionCertificate, ExtensionOutput, ExtensionParams, StageRecord};
pub use gamma::{geometric_grid, GammaTable};
pub use straighten::{straighten_k, straightening_step, StraightenOutput, StraightenParams, StraightenReport};

use crate::blocks::{is_normalized, Block};
use crate::dist::{weighted_distances, FiniteDist, SymRep};
use crate::error::{Error, Result};
use crate::scalar::{FastNum, Scalar};

/// Equal-length blocks indexed by a symmetric representation, with
/// E(block(ω)) = scale · f(ω).
#[derive(Clone, Debug)]
pub struct BlockArray<W: Scalar> {
    rep: SymRep<W>,
    values: Vec<W>,
    blocks: Vec<Block<W>>,
    scale: W,
    delta: W,
}

impl<W: Scalar> BlockArray<W> {
    /// Validated constructor; checks lengths, means and `delta`-normalization.
    pub fn new(rep: SymRep<W>, blocks: Vec<Block<W>>, scale: W, delta: W) -> Result<Self> {
        let arr = Self::assemble(rep, blocks, scale, delta)?;
        for (i, b) in arr.blocks.iter().enumerate() {
            let c = is_normalized(b, delta)?;
            if !c.normalized {
                return Err(Error::Precondition(format!(
                    "block {} is not {}-normalized (witness {:?})",
                    i + 1,
                    delta.render(),
                    c.witness
                )));
            }
        }
        Ok(arr)
    }

    /// Checks lengths and means only; normalization is the caller's responsibility.
    pub(crate) fn assemble(rep: SymRep<W>, blocks: Vec<Block<W>>, scale: W, delta: W) -> Result<Self> {
        let values = rep.finite_values()?;
        if blocks.len() != values.len() {
            return Err(Error::InvalidParameter(format!("{} blocks for {} indices", blocks.len(), values.len())));
        }
        if !(scale > W::zero()) || !(delta > W::zero()) {
            return Err(Error::InvalidParameter("scale and Δ must be positive".into()));
        }
        let h = blocks[0].len();
        for (i, b) in blocks.iter().enumerate() {
            if b.len() != h {
                return Err(Error::InvalidParameter(format!("block {} has length {}, expected {h}", i + 1, b.len())));
            }
            let want = scale * values[i];
            if !b.mean().eq_tol(want) {
                return Err(Error::InvalidParameter(format!(
                    "block {} has mean {}, expected {}",
                    i + 1,
                    b.mean().render(),
                    want.render()
                )));
            }
        }
        Ok(BlockArray { rep, values, blocks, scale, delta })
    }

    /// Constant blocks (c·f(ω)) of length `h`, normalized at every level.
    pub fn constant(rep: SymRep<W>, scale: W, h: usize, delta: W) -> Result<Self> {
        if h == 0 {
            return Err(Error::InvalidParameter("block length must be positive".into()));
        }
        let values = rep.finite_values()?;
        let blocks =
            values.iter().map(|&v| Ok(Block::new(vec![scale * v; h])?.ensure_shape())).collect::<Result<Vec<_>>>()?;
        Self::assemble(rep, blocks, scale, delta)
    }

    pub fn rep(&self) -> &SymRep<W> {
        &self.rep
    }

    pub fn values(&self) -> &[W] {
        &self.values
    }

    pub fn blocks(&self) -> &[Block<W>] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &Block<W> {
        &self.blocks[i]
    }

    pub fn size(&self) -> usize {
        self.blocks.len()
    }

    pub fn height(&self) -> usize {
        self.blocks[0].len()
    }

    pub fn scale(&self) -> W {
        self.scale
    }

    pub fn delta(&self) -> W {
        self.delta
    }
}

/// (𝔳, 𝔲) between S_k/norm over every position of every block and `target`; each block
/// contributes one period, weighted by its repetition count.
pub(crate) fn sk_distances<W: Scalar>(blocks: &[Block<W>], k: u64, norm: f64, target: &FiniteDist<W>) -> (f64, f64) {
    let mut items = Vec::new();
    for b in blocks {
        let per = b.period();
        let w = (b.len() / per) as u64;
        let u = b.unit().to_f64();
        items.extend((0..per).map(|nu| (b.sk_fast(k, nu).to_f64() * u / norm, w)));
    }
    weighted_distances(&mut items, target)
}
