//! Adaptive binary arithmetic coding.
//!
//! Probabilities are 15-bit (`P(bin == 0) = state / 32768`) and adapt with a
//! shift of 5 after every context-coded bin. The coding engine is a
//! byte-oriented range coder with carry propagation: 32-bit range, renormalized
//! whenever the range drops below 2^24.

use std::sync::OnceLock;

use super::bits::se_to_ue;
use super::bits::ue_to_se;
use crate::error::{Error, Result};

pub const PROB_BITS: u32 = 15;
pub const PROB_ONE: u32 = 1 << PROB_BITS;
const ADAPT_SHIFT: u32 = 5;
const TOP: u32 = 1 << 24;

/// Fixed-point precision of [`RateCounter`] bit counts.
pub const RATE_FRAC_BITS: u32 = 16;
pub const RATE_ONE_BIT: u64 = 1 << RATE_FRAC_BITS;

/// Adaptive probability model for one syntax element (or one bin of it).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ArithContext {
    state: u16,
}

impl Default for ArithContext {
    fn default() -> Self {
        ArithContext::EQUIPROBABLE
    }
}

impl ArithContext {
    pub const EQUIPROBABLE: ArithContext = ArithContext { state: 16384 };

    /// Panics if `state` is outside `[1, 32766]`.
    pub fn new(state: u16) -> Self {
        assert!((1..=32766).contains(&state), "context state {state} out of range");
        ArithContext { state }
    }

    #[inline]
    pub fn state(&self) -> u16 {
        self.state
    }

    #[inline]
    pub fn update(&mut self, bin: bool) {
        let s = self.state as u32;
        // The decrement truncates towards zero so the state never reaches 0.
        let s = if bin {
            s - (s >> ADAPT_SHIFT)
        } else {
            s + ((PROB_ONE - s) >> ADAPT_SHIFT)
        };
        self.state = s as u16;
    }
}

/// Anything that accepts context-coded and bypass bins.
pub trait BinEncoder {
    fn encode_bin(&mut self, ctx: &mut ArithContext, bin: bool);
    fn encode_bypass(&mut self, bit: bool);

    fn encode_bypass_bits(&mut self, value: u32, n: u32) {
        for i in (0..n).rev() {
            self.encode_bypass((value >> i) & 1 == 1);
        }
    }

    /// Order-0 exp-Golomb through bypass bins.
    fn encode_ue_bypass(&mut self, value: u32) {
        let v = value as u64 + 1;
        let len = 64 - v.leading_zeros();
        for _ in 1..len {
            self.encode_bypass(false);
        }
        for i in (0..len).rev() {
            self.encode_bypass((v >> i) & 1 == 1);
        }
    }

    fn encode_se_bypass(&mut self, value: i32) {
        self.encode_ue_bypass(se_to_ue(value));
    }
}

pub trait BinDecoder {
    fn decode_bin(&mut self, ctx: &mut ArithContext) -> Result<bool>;
    fn decode_bypass(&mut self) -> Result<bool>;
    fn byte_offset(&self) -> usize;

    fn decode_bypass_bits(&mut self, n: u32) -> Result<u32> {
        let mut v = 0;
        for _ in 0..n {
            v = (v << 1) | self.decode_bypass()? as u32;
        }
        Ok(v)
    }

    fn decode_ue_bypass(&mut self) -> Result<u32> {
        let mut zeros = 0u32;
        while !self.decode_bypass()? {
            zeros += 1;
            if zeros > 31 {
                return Err(Error::bitstream(self.byte_offset(), "exp-Golomb prefix too long"));
            }
        }
        let mut v = 1u64;
        for _ in 0..zeros {
            v = (v << 1) | self.decode_bypass()? as u64;
        }
        u32::try_from(v - 1).map_err(|_| Error::bitstream(self.byte_offset(), "exp-Golomb value overflow"))
    }

    fn decode_se_bypass(&mut self) -> Result<i32> {
        Ok(ue_to_se(self.decode_ue_bypass()?))
    }
}

#[derive(Debug, Clone)]
pub struct ArithEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Default for ArithEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl ArithEncoder {
    pub fn new() -> Self {
        ArithEncoder {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut temp = self.cache;
            loop {
                self.out.push(temp.wrapping_add(carry));
                temp = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = ((self.low >> 24) & 0xFF) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    #[inline]
    fn normalize(&mut self) {
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    /// Bytes emitted so far plus the pending carry bytes.
    pub fn bytes_pending(&self) -> usize {
        self.out.len() + self.cache_size as usize + 4
    }

    /// Flushes the coder. The result is byte aligned and self-delimiting, so
    /// payloads can be concatenated by the container.
    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

impl BinEncoder for ArithEncoder {
    #[inline]
    fn encode_bin(&mut self, ctx: &mut ArithContext, bin: bool) {
        let bound = (self.range >> PROB_BITS) * ctx.state as u32;
        if bin {
            self.low += bound as u64;
            self.range -= bound;
        } else {
            self.range = bound;
        }
        ctx.update(bin);
        self.normalize();
    }

    #[inline]
    fn encode_bypass(&mut self, bit: bool) {
        self.range >>= 1;
        if bit {
            self.low += self.range as u64;
        }
        self.normalize();
    }
}

#[derive(Debug, Clone)]
pub struct ArithDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    base: usize,
    range: u32,
    code: u32,
}

impl<'a> ArithDecoder<'a> {
    /// `base` is the offset of `data` within the enclosing stream, used for
    /// error reporting.
    pub fn new(data: &'a [u8], base: usize) -> Result<Self> {
        if data.len() < 5 {
            return Err(Error::bitstream(base, "arithmetic-coded segment shorter than 5 bytes"));
        }
        if data[0] != 0 {
            return Err(Error::bitstream(base, "arithmetic-coded segment must start with 0x00"));
        }
        let mut code = 0u32;
        for &b in &data[1..5] {
            code = (code << 8) | b as u32;
        }
        Ok(ArithDecoder {
            data,
            pos: 5,
            base,
            range: u32::MAX,
            code,
        })
    }

    #[inline]
    fn normalize(&mut self) -> Result<()> {
        while self.range < TOP {
            let Some(&b) = self.data.get(self.pos) else {
                return Err(Error::bitstream(
                    self.base + self.pos,
                    "arithmetic decoder ran past the end of the segment",
                ));
            };
            self.pos += 1;
            self.range <<= 8;
            self.code = (self.code << 8) | b as u32;
        }
        Ok(())
    }

    /// Number of bytes consumed so far.
    pub fn consumed(&self) -> usize {
        self.pos
    }

    /// Verifies the segment was consumed exactly.
    pub fn finish(self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::bitstream(
                self.base + self.pos,
                format!(
                    "{} trailing bytes after arithmetic-coded segment",
                    self.data.len() - self.pos
                ),
            ));
        }
        Ok(())
    }
}

impl BinDecoder for ArithDecoder<'_> {
    #[inline]
    fn decode_bin(&mut self, ctx: &mut ArithContext) -> Result<bool> {
        let bound = (self.range >> PROB_BITS) * ctx.state as u32;
        let bin = if self.code < bound {
            self.range = bound;
            false
        } else {
            self.code -= bound;
            self.range -= bound;
            true
        };
        ctx.update(bin);
        self.normalize()?;
        Ok(bin)
    }

    #[inline]
    fn decode_bypass(&mut self) -> Result<bool> {
        self.range >>= 1;
        let bit = if self.code >= self.range {
            self.code -= self.range;
            true
        } else {
            false
        };
        self.normalize()?;
        Ok(bit)
    }

    fn byte_offset(&self) -> usize {
        self.base + self.pos
    }
}

fn cost_table() -> &'static [u32] {
    static TABLE: OnceLock<Vec<u32>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (0..=PROB_ONE)
            .map(|s| {
                if s == 0 {
                    u32::MAX
                } else {
                    let p = s as f64 / PROB_ONE as f64;
                    (-p.log2() * RATE_ONE_BIT as f64).round() as u32
                }
            })
            .collect()
    })
}

/// Fixed-point cost (in `1 / 2^RATE_FRAC_BITS` bits) of coding `bin` with
/// the given context.
#[inline]
pub fn bin_cost(ctx: &ArithContext, bin: bool) -> u64 {
    let s = ctx.state as usize;
    let t = cost_table();
    if bin {
        t[PROB_ONE as usize - s] as u64
    } else {
        t[s] as u64
    }
}

/// Counts the ideal code length of a bin sequence without producing output.
///
/// Context-coded bins cost `-log2(p)` under the context state at the time the
/// bin is coded; the states adapt exactly as in [`ArithEncoder`].
#[derive(Debug, Default, Clone, Copy)]
pub struct RateCounter {
    bits: u64,
}

impl RateCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Accumulated rate in `1 / 2^RATE_FRAC_BITS` bit units.
    pub fn fixed_bits(&self) -> u64 {
        self.bits
    }

    pub fn bits(&self) -> f64 {
        self.bits as f64 / RATE_ONE_BIT as f64
    }
}

impl BinEncoder for RateCounter {
    #[inline]
    fn encode_bin(&mut self, ctx: &mut ArithContext, bin: bool) {
        self.bits += bin_cost(ctx, bin);
        ctx.update(bin);
    }

    #[inline]
    fn encode_bypass(&mut self, _bit: bool) {
        self.bits += RATE_ONE_BIT;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn encode_seq(bins: &[bool], state: u16) -> Vec<u8> {
        let mut enc = ArithEncoder::new();
        let mut ctx = ArithContext::new(state);
        for &b in bins {
            enc.encode_bin(&mut ctx, b);
        }
        enc.finish()
    }

    fn binary_entropy(p: f64) -> f64 {
        -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
    }

    #[test]
    fn update_rule_matches_definition() {
        let mut c = ArithContext::EQUIPROBABLE;
        c.update(false);
        assert_eq!(c.state(), 16384 + (16384 >> 5));
        let mut c = ArithContext::new(1);
        c.update(true);
        assert_eq!(c.state(), 1);
        let mut c = ArithContext::new(32766);
        c.update(false);
        assert_eq!(c.state(), 32766);
    }

    #[test]
    fn state_never_leaves_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for start in [1u16, 2, 31, 16384, 32737, 32766] {
            let mut c = ArithContext::new(start);
            for i in 0..5000 {
                let b = if i < 2500 {
                    rng.gen_bool(0.999)
                } else {
                    rng.gen_bool(0.001)
                };
                c.update(b);
                assert!((1..=32766).contains(&c.state()));
            }
        }
    }

    #[test]
    fn constant_zeros_compress_well() {
        let bins = vec![false; 10_000];
        let bytes = encode_seq(&bins, 16384);
        assert!(bytes.len() * 8 < 1500, "{} bits", bytes.len() * 8);
    }

    #[test]
    fn alternating_bins_cost_about_one_bit() {
        let bins: Vec<bool> = (0..10_000).map(|i| i % 2 == 1).collect();
        let bytes = encode_seq(&bins, 16384);
        assert!(bytes.len() * 8 >= 9800, "{} bits", bytes.len() * 8);
    }

    #[test]
    fn random_round_trip_with_bypass_and_several_contexts() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..50 {
            let n = rng.gen_range(0..3000);
            let ops: Vec<(u8, bool, u32)> = (0..n)
                .map(|_| (rng.gen_range(0..5u8), rng.gen_bool(0.3), rng.gen_range(0..5000)))
                .collect();
            let mut enc = ArithEncoder::new();
            let mut ectx = [ArithContext::EQUIPROBABLE; 3];
            let mut states = Vec::new();
            for &(kind, b, v) in &ops {
                match kind {
                    0..=2 => enc.encode_bin(&mut ectx[kind as usize], b),
                    3 => enc.encode_bypass(b),
                    _ => enc.encode_ue_bypass(v),
                }
                states.push(ectx);
            }
            let bytes = enc.finish();
            let mut dec = ArithDecoder::new(&bytes, 0).unwrap();
            let mut dctx = [ArithContext::EQUIPROBABLE; 3];
            for (i, &(kind, b, v)) in ops.iter().enumerate() {
                match kind {
                    0..=2 => assert_eq!(dec.decode_bin(&mut dctx[kind as usize]).unwrap(), b),
                    3 => assert_eq!(dec.decode_bypass().unwrap(), b),
                    _ => assert_eq!(dec.decode_ue_bypass().unwrap(), v),
                }
                // lockstep: identical context states after every symbol
                assert_eq!(dctx, states[i], "trial {trial} symbol {i}");
            }
            dec.finish().unwrap();
        }
    }

    #[test]
    fn iid_source_within_five_percent_of_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for p1 in [0.1, 0.2, 0.35] {
            let n = 100_000;
            let bins: Vec<bool> = (0..n).map(|_| rng.gen_bool(p1)).collect();
            let bits = encode_seq(&bins, 16384).len() as f64 * 8.0;
            let bound = n as f64 * binary_entropy(p1);
            assert!(bits <= bound * 1.05, "p={p1}: {bits} vs entropy {bound}");
        }
    }

    #[test]
    fn rate_counter_tracks_real_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let bins: Vec<bool> = (0..50_000).map(|_| rng.gen_bool(0.1)).collect();
        let mut rc = RateCounter::new();
        let mut ctx = ArithContext::EQUIPROBABLE;
        for &b in &bins {
            rc.encode_bin(&mut ctx, b);
        }
        let real = encode_seq(&bins, 16384).len() as f64 * 8.0;
        assert!(
            (rc.bits() - real).abs() < 0.01 * real + 48.0,
            "{} vs {}",
            rc.bits(),
            real
        );
    }

    #[test]
    fn truncated_segment_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bins: Vec<bool> = (0..4000).map(|_| rng.gen_bool(0.5)).collect();
        let bytes = encode_seq(&bins, 16384);
        let cut = &bytes[..bytes.len() - 3];
        let mut dec = ArithDecoder::new(cut, 0).unwrap();
        let mut ctx = ArithContext::EQUIPROBABLE;
        let res: Result<Vec<bool>> = bins.iter().map(|_| dec.decode_bin(&mut ctx)).collect();
        assert!(matches!(res, Err(Error::MalformedBitstream { .. })));
        assert!(ArithDecoder::new(&bytes[..4], 0).is_err());
    }
}
