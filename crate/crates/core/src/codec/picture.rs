//! Reconstruction steps shared by the encoder and the decoder.

use crate::error::Result;
use crate::frame::{FrameBuffer, PlaneBuffer};
use crate::nnlf::{build_chroma_inputs, build_luma_inputs, ModelKind, TensorStack};
use crate::partition::BlockRect;
use crate::prediction::{
    ctu_neighbors, intra_predict, motion_compensate, motion_compensate_chroma, BlockInfo, BsMap, MotionField,
};
use crate::rdo::RefPicture;
use crate::syntax::PredInfo;
use crate::transform::{reconstruct_block, CoeffBlock, Qp};

/// A reconstructed picture as kept for reference and output.
#[derive(Debug, Clone)]
pub struct DecodedPicture {
    pub frame: FrameBuffer,
    pub motion: MotionField,
}

impl DecodedPicture {
    pub fn poc(&self) -> u32 {
        self.frame.poc
    }

    pub fn as_ref_picture(&self) -> RefPicture<'_> {
        RefPicture {
            poc: self.frame.poc,
            luma: self.frame.plane(0),
            motion: &self.motion,
        }
    }
}

/// Chroma QP offset relative to the CTU's luma QP.
pub const CHROMA_QP_OFFSET: i32 = 1;

pub fn half(r: &BlockRect) -> BlockRect {
    BlockRect::new(r.x / 2, r.y / 2, r.w / 2, r.h / 2)
}

/// Levels of one leaf in syntax order.
#[derive(Debug, Clone)]
pub struct LeafLevels {
    pub luma: CoeffBlock,
    pub u: CoeffBlock,
    pub v: CoeffBlock,
}

/// Unfiltered reconstruction of the picture being coded.
pub struct PictureBuilder {
    pub recon: [PlaneBuffer; 3],
    pub pred: [PlaneBuffer; 3],
    pub blocks: Vec<(BlockRect, BlockInfo)>,
    pub leaves: Vec<BlockRect>,
    pub motion: MotionField,
}

impl PictureBuilder {
    pub fn new(width: usize, height: usize) -> Self {
        let planes = || {
            [
                PlaneBuffer::new(width, height, 128),
                PlaneBuffer::new(width / 2, height / 2, 128),
                PlaneBuffer::new(width / 2, height / 2, 128),
            ]
        };
        PictureBuilder {
            recon: planes(),
            pred: planes(),
            blocks: Vec::new(),
            leaves: Vec::new(),
            motion: MotionField::new(width, height),
        }
    }

    pub fn luma_pred(&self, rect: &BlockRect, ctu: &BlockRect, pred: &PredInfo, refs: &[&DecodedPicture]) -> Vec<u8> {
        match pred {
            PredInfo::Intra(mode) => {
                let (left, top) = ctu_neighbors(&self.recon[0], ctu, rect);
                intra_predict(*mode, &left, &top, rect.w, rect.h)
            }
            PredInfo::Inter { ref_idx, mv } => motion_compensate(refs[*ref_idx].frame.plane(0), rect, mv),
        }
    }

    /// Chroma predictions: the luma intra mode on the chroma neighbors, or
    /// the luma vector at quarter-sample precision.
    pub fn chroma_pred(
        &self,
        rect: &BlockRect,
        ctu: &BlockRect,
        pred: &PredInfo,
        refs: &[&DecodedPicture],
    ) -> [Vec<u8>; 2] {
        let (crect, cctu) = (half(rect), half(ctu));
        let one = |c: usize| match pred {
            PredInfo::Intra(mode) => {
                let (left, top) = ctu_neighbors(&self.recon[c], &cctu, &crect);
                intra_predict(*mode, &left, &top, crect.w, crect.h)
            }
            PredInfo::Inter { ref_idx, mv } => motion_compensate_chroma(refs[*ref_idx].frame.plane(c), rect, mv),
        };
        [one(1), one(2)]
    }

    /// Writes the reconstruction of one leaf from its predictions and levels.
    pub fn place_leaf(
        &mut self,
        rect: &BlockRect,
        pred: &PredInfo,
        luma_pred: &[u8],
        chroma_pred: &[Vec<u8>; 2],
        levels: &LeafLevels,
        qp: Qp,
    ) -> Result<()> {
        let cqp = qp.offset(CHROMA_QP_OFFSET);
        let crect = half(rect);
        let y = reconstruct_block(luma_pred, &levels.luma, qp)?;
        self.recon[0].write_block(rect.x, rect.y, rect.w, rect.h, &y);
        self.pred[0].write_block(rect.x, rect.y, rect.w, rect.h, luma_pred);
        for (c, lv) in [(1, &levels.u), (2, &levels.v)] {
            let r = reconstruct_block(&chroma_pred[c - 1], lv, cqp)?;
            self.recon[c].write_block(crect.x, crect.y, crect.w, crect.h, &r);
            self.pred[c].write_block(crect.x, crect.y, crect.w, crect.h, &chroma_pred[c - 1]);
        }
        let coded = !(levels.luma.is_zero() && levels.u.is_zero() && levels.v.is_zero());
        self.blocks.push((
            *rect,
            BlockInfo {
                intra: pred.is_intra(),
                coded,
                mv: pred.mv(),
            },
        ));
        self.leaves.push(*rect);
        self.motion.fill(rect, pred.mv());
        Ok(())
    }

    fn bs(&self) -> BsMap {
        BsMap::from_blocks(self.recon[0].width(), self.recon[0].height(), &self.blocks)
    }

    /// Filter inputs for luma and chroma; the partition mask is included
    /// for intra slices.
    pub fn filter_inputs(&self, inter: bool, qp: Qp) -> Result<(TensorStack, TensorStack)> {
        let bs = self.bs();
        let leaves = (!inter).then_some(self.leaves.as_slice());
        let luma = build_luma_inputs(&self.recon[0], &self.pred[0], &bs, qp, leaves)?;
        let chroma = build_chroma_inputs(
            [&self.recon[1], &self.recon[2]],
            [&self.pred[1], &self.pred[2]],
            &bs,
            qp,
            leaves,
            &self.recon[0],
        )?;
        Ok((luma, chroma))
    }

    /// The picture with its planes, or replacement planes when the loop
    /// filter changed them.
    pub fn finish(self, poc: u32, filtered: Option<[PlaneBuffer; 3]>) -> Result<DecodedPicture> {
        let [y, u, v] = filtered.unwrap_or(self.recon);
        Ok(DecodedPicture {
            frame: FrameBuffer::from_planes(y, u, v, poc)?,
            motion: self.motion,
        })
    }
}

pub fn model_kind(inter: bool, chroma: bool) -> ModelKind {
    ModelKind { chroma, inter }
}
