//! Per-block syntax shared by the encoder, the decoder and the RD search.

use crate::bitstream::{ArithContext, BinDecoder, BinEncoder};
use crate::error::{Error, Result};
use crate::partition::PartitionContexts;
use crate::prediction::{IntraMode, MotionVector};
use crate::transform::ResidualContexts;

/// Largest motion vector component accepted by the decoder, in half-pel.
pub const MAX_MV: i32 = 1 << 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SliceType {
    I,
    P,
    B,
}

impl SliceType {
    pub fn is_inter(self) -> bool {
        self != SliceType::I
    }

    pub fn code(self) -> u32 {
        match self {
            SliceType::I => 0,
            SliceType::P => 1,
            SliceType::B => 2,
        }
    }

    pub fn from_code(c: u32) -> Option<SliceType> {
        match c {
            0 => Some(SliceType::I),
            1 => Some(SliceType::P),
            2 => Some(SliceType::B),
            _ => None,
        }
    }
}

/// How a leaf block is predicted. `ref_idx` indexes the slice's reference
/// list; `mv.ref_poc` repeats the picture it names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredInfo {
    Intra(IntraMode),
    Inter { ref_idx: usize, mv: MotionVector },
}

impl PredInfo {
    pub fn is_intra(&self) -> bool {
        matches!(self, PredInfo::Intra(_))
    }

    pub fn mv(&self) -> Option<MotionVector> {
        match self {
            PredInfo::Intra(_) => None,
            PredInfo::Inter { mv, .. } => Some(*mv),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterContexts {
    pub enable: ArithContext,
    pub ctu: ArithContext,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SyntaxContexts {
    pub part: PartitionContexts,
    pub pred_mode: ArithContext,
    pub intra_mode: [ArithContext; 3],
    pub ref_idx: ArithContext,
    pub luma: ResidualContexts,
    pub chroma: ResidualContexts,
    pub bim_mag: [ArithContext; 2],
    pub bim_sign: ArithContext,
    pub nn_luma: FilterContexts,
    pub nn_chroma: FilterContexts,
}

/// Prediction syntax of a leaf: inter flag (inter slices only), then either
/// the intra mode as two context-coded bins or the reference index (when
/// there are two references) and the vector difference against `mv_pred`.
pub fn write_pred<E: BinEncoder>(
    enc: &mut E,
    ctx: &mut SyntaxContexts,
    num_refs: usize,
    pred: &PredInfo,
    mv_pred: (i32, i32),
) {
    if num_refs > 0 {
        enc.encode_bin(&mut ctx.pred_mode, !pred.is_intra());
    }
    match pred {
        PredInfo::Intra(mode) => {
            let i = mode.index();
            let hi = i >> 1;
            enc.encode_bin(&mut ctx.intra_mode[0], hi == 1);
            enc.encode_bin(&mut ctx.intra_mode[1 + hi], i & 1 == 1);
        }
        PredInfo::Inter { ref_idx, mv } => {
            debug_assert!(*ref_idx < num_refs);
            if num_refs > 1 {
                enc.encode_bin(&mut ctx.ref_idx, *ref_idx == 1);
            }
            enc.encode_se_bypass(mv.dx - mv_pred.0);
            enc.encode_se_bypass(mv.dy - mv_pred.1);
        }
    }
}

/// Inverse of [`write_pred`]. `mv_pred` yields the predictor for a chosen
/// reference index.
pub fn read_pred<D: BinDecoder>(
    dec: &mut D,
    ctx: &mut SyntaxContexts,
    ref_pocs: &[u32],
    mv_pred: impl Fn(usize) -> (i32, i32),
) -> Result<PredInfo> {
    let inter = !ref_pocs.is_empty() && dec.decode_bin(&mut ctx.pred_mode)?;
    if !inter {
        let hi = dec.decode_bin(&mut ctx.intra_mode[0])? as usize;
        let lo = dec.decode_bin(&mut ctx.intra_mode[1 + hi])? as usize;
        let mode = IntraMode::from_index(hi * 2 + lo).expect("two bins index four modes");
        return Ok(PredInfo::Intra(mode));
    }
    let ref_idx = if ref_pocs.len() > 1 {
        dec.decode_bin(&mut ctx.ref_idx)? as usize
    } else {
        0
    };
    let (px, py) = mv_pred(ref_idx);
    let dx = dec.decode_se_bypass()?;
    let dy = dec.decode_se_bypass()?;
    let bad = || Error::bitstream(dec.byte_offset(), "motion vector out of range");
    let mx = px.checked_add(dx).filter(|v| v.abs() <= MAX_MV).ok_or_else(bad)?;
    let my = py.checked_add(dy).filter(|v| v.abs() <= MAX_MV).ok_or_else(bad)?;
    Ok(PredInfo::Inter {
        ref_idx,
        mv: MotionVector::new(mx, my, ref_pocs[ref_idx]),
    })
}

/// CTU QP delta in [-2, 2]: truncated-unary magnitude, then a sign bin.
pub fn write_qp_delta<E: BinEncoder>(enc: &mut E, ctx: &mut SyntaxContexts, delta: i32) {
    debug_assert!((-2..=2).contains(&delta));
    let mag = delta.unsigned_abs();
    enc.encode_bin(&mut ctx.bim_mag[0], mag > 0);
    if mag > 0 {
        enc.encode_bin(&mut ctx.bim_mag[1], mag > 1);
        enc.encode_bin(&mut ctx.bim_sign, delta < 0);
    }
}

pub fn read_qp_delta<D: BinDecoder>(dec: &mut D, ctx: &mut SyntaxContexts) -> Result<i32> {
    if !dec.decode_bin(&mut ctx.bim_mag[0])? {
        return Ok(0);
    }
    let mag = 1 + dec.decode_bin(&mut ctx.bim_mag[1])? as i32;
    Ok(if dec.decode_bin(&mut ctx.bim_sign)? { -mag } else { mag })
}
