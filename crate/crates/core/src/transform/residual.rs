//! Residual level syntax.
//!
//! A context-coded coded-block flag, then for every position in zig-zag
//! order a significance flag whose context depends on the scan position.
//! Nonzero levels follow their flag immediately: sign as a bypass bin, then
//! `|level| - 1` as an order-0 exp-Golomb code in bypass bins.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use crate::bitstream::{ArithContext, BinDecoder, BinEncoder};
use crate::error::{Error, Result};

use super::quant::CoeffBlock;

/// Largest magnitude a level can take for a legal coefficient block.
pub const MAX_LEVEL: u32 = 1 << 16;

pub const SIG_CLASSES: usize = 7;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResidualContexts {
    pub cbf: ArithContext,
    pub sig: [ArithContext; SIG_CLASSES],
}

fn sig_class(scan_pos: usize) -> usize {
    match scan_pos {
        0 => 0,
        1..=2 => 1,
        3..=5 => 2,
        6..=14 => 3,
        15..=35 => 4,
        36..=99 => 5,
        _ => 6,
    }
}

/// Zig-zag scan of a `w`×`h` block: raster indices ordered by anti-diagonal,
/// alternating direction.
pub fn zigzag(w: usize, h: usize) -> &'static [usize] {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), &'static [usize]>>> = OnceLock::new();
    let mut cache = CACHE.get_or_init(Default::default).lock().expect("scan cache");
    cache.entry((w, h)).or_insert_with(|| {
        let mut order = Vec::with_capacity(w * h);
        for d in 0..w + h - 1 {
            let ys: Vec<usize> = (0..h).filter(|&y| d >= y && d - y < w).collect();
            if d % 2 == 0 {
                order.extend(ys.iter().rev().map(|&y| y * w + d - y));
            } else {
                order.extend(ys.iter().map(|&y| y * w + d - y));
            }
        }
        Box::leak(order.into_boxed_slice())
    })
}

pub fn code_residual<E: BinEncoder>(enc: &mut E, ctx: &mut ResidualContexts, levels: &CoeffBlock) {
    let coded = !levels.is_zero();
    enc.encode_bin(&mut ctx.cbf, coded);
    if !coded {
        return;
    }
    for (pos, &idx) in zigzag(levels.w, levels.h).iter().enumerate() {
        let l = levels.coeffs[idx];
        enc.encode_bin(&mut ctx.sig[sig_class(pos)], l != 0);
        if l != 0 {
            enc.encode_bypass(l < 0);
            enc.encode_ue_bypass(l.unsigned_abs() - 1);
        }
    }
}

pub fn parse_residual<D: BinDecoder>(
    dec: &mut D,
    ctx: &mut ResidualContexts,
    w: usize,
    h: usize,
    shift: u32,
) -> Result<CoeffBlock> {
    let mut out = CoeffBlock::zeros(w, h, shift);
    if !dec.decode_bin(&mut ctx.cbf)? {
        return Ok(out);
    }
    for (pos, &idx) in zigzag(w, h).iter().enumerate() {
        if dec.decode_bin(&mut ctx.sig[sig_class(pos)])? {
            let neg = dec.decode_bypass()?;
            let mag = dec.decode_ue_bypass()?;
            if mag >= MAX_LEVEL {
                return Err(Error::bitstream(dec.byte_offset(), "coefficient level overflow"));
            }
            let v = mag as i32 + 1;
            out.coeffs[idx] = if neg { -v } else { v };
        }
    }
    Ok(out)
}
