//! Integer transform, quantization and residual syntax.

mod dct;
mod quant;
mod residual;

pub use dct::{coeff_shift, forward_dct, inverse_dct, MAX_TX_SIZE, MIN_TX_SIZE};
pub use quant::{dequantize, effective_step, quantize, CoeffBlock, DeadZone, Qp, COEFF_MAX, QP_MAX};
pub use residual::{code_residual, parse_residual, zigzag, ResidualContexts, MAX_LEVEL, SIG_CLASSES};

use crate::error::Result;

pub fn forward_transform(residual: &[i32], w: usize, h: usize) -> Result<CoeffBlock> {
    Ok(CoeffBlock {
        w,
        h,
        shift: coeff_shift(w, h),
        coeffs: forward_dct(residual, w, h)?,
    })
}

pub fn inverse_transform(coeffs: &CoeffBlock) -> Result<Vec<i32>> {
    inverse_dct(&coeffs.coeffs, coeffs.w, coeffs.h)
}

/// Transform, quantize and reconstruct one block. Returns the levels and the
/// reconstruction the decoder will produce from them.
pub fn code_block(orig: &[u8], pred: &[u8], w: usize, h: usize, qp: Qp, dz: DeadZone) -> Result<(CoeffBlock, Vec<u8>)> {
    let residual: Vec<i32> = orig.iter().zip(pred).map(|(&o, &p)| o as i32 - p as i32).collect();
    let levels = quantize(&forward_transform(&residual, w, h)?, qp, dz);
    let recon = reconstruct_block(pred, &levels, qp)?;
    Ok((levels, recon))
}

/// Prediction plus dequantized, inverse-transformed residual, clipped to 8 bits.
pub fn reconstruct_block(pred: &[u8], levels: &CoeffBlock, qp: Qp) -> Result<Vec<u8>> {
    if levels.is_zero() {
        return Ok(pred.to_vec());
    }
    let residual = inverse_transform(&dequantize(levels, qp))?;
    Ok(pred
        .iter()
        .zip(&residual)
        .map(|(&p, &r)| (p as i32 + r).clamp(0, 255) as u8)
        .collect())
}
