use crate::error::{Error, Result};

/// MSB-first bit writer over a growable byte buffer.
#[derive(Debug, Default, Clone)]
pub struct BitSink {
    buf: Vec<u8>,
    cur: u8,
    used: u32,
}

impl BitSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write_bit(&mut self, bit: bool) {
        self.cur = (self.cur << 1) | bit as u8;
        self.used += 1;
        if self.used == 8 {
            self.buf.push(self.cur);
            self.cur = 0;
            self.used = 0;
        }
    }

    /// Writes the low `n` bits of `value`, most significant first.
    pub fn write_bits(&mut self, value: u64, n: u32) {
        debug_assert!(n <= 64);
        for i in (0..n).rev() {
            self.write_bit((value >> i) & 1 == 1);
        }
    }

    /// Order-0 exp-Golomb code.
    pub fn write_ue(&mut self, value: u32) {
        let v = value as u64 + 1;
        let len = 64 - v.leading_zeros();
        self.write_bits(0, len - 1);
        self.write_bits(v, len);
    }

    pub fn write_se(&mut self, value: i32) {
        self.write_ue(se_to_ue(value));
    }

    pub fn bit_len(&self) -> usize {
        self.buf.len() * 8 + self.used as usize
    }

    pub fn is_aligned(&self) -> bool {
        self.used == 0
    }

    /// Pads with zero bits up to the next byte boundary.
    pub fn align(&mut self) {
        while self.used != 0 {
            self.write_bit(false);
        }
    }

    pub fn into_bytes(mut self) -> Vec<u8> {
        self.align();
        self.buf
    }
}

/// MSB-first bit reader. `base` is added to reported offsets so errors point
/// into the enclosing stream.
#[derive(Debug, Clone)]
pub struct BitSource<'a> {
    data: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> BitSource<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self::with_base(data, 0)
    }

    pub fn with_base(data: &'a [u8], base: usize) -> Self {
        BitSource { data, pos: 0, base }
    }

    pub fn byte_offset(&self) -> usize {
        self.base + self.pos / 8
    }

    pub fn bits_remaining(&self) -> usize {
        self.data.len() * 8 - self.pos
    }

    pub fn read_bit(&mut self) -> Result<bool> {
        let byte = self.pos / 8;
        if byte >= self.data.len() {
            return Err(Error::bitstream(self.byte_offset(), "unexpected end of data"));
        }
        let bit = (self.data[byte] >> (7 - self.pos % 8)) & 1 == 1;
        self.pos += 1;
        Ok(bit)
    }

    pub fn read_bits(&mut self, n: u32) -> Result<u64> {
        let mut v = 0u64;
        for _ in 0..n {
            v = (v << 1) | self.read_bit()? as u64;
        }
        Ok(v)
    }

    pub fn read_ue(&mut self) -> Result<u32> {
        let mut zeros = 0u32;
        while !self.read_bit()? {
            zeros += 1;
            if zeros > 31 {
                return Err(Error::bitstream(self.byte_offset(), "exp-Golomb prefix too long"));
            }
        }
        let rest = self.read_bits(zeros)?;
        let v = (1u64 << zeros) + rest - 1;
        u32::try_from(v).map_err(|_| Error::bitstream(self.byte_offset(), "exp-Golomb value overflow"))
    }

    pub fn read_se(&mut self) -> Result<i32> {
        Ok(ue_to_se(self.read_ue()?))
    }

    pub fn align(&mut self) {
        self.pos = self.pos.div_ceil(8) * 8;
    }

    /// Bytes after the current (aligned) position.
    pub fn rest(&self) -> &'a [u8] {
        &self.data[self.pos.div_ceil(8)..]
    }
}

/// Signed to unsigned mapping used by `se(v)`: 0, 1, -1, 2, -2, ...
#[inline]
pub fn se_to_ue(v: i32) -> u32 {
    if v > 0 {
        (v as u32) * 2 - 1
    } else {
        v.unsigned_abs() * 2
    }
}

#[inline]
pub fn ue_to_se(v: u32) -> i32 {
    if v & 1 == 1 {
        v.div_ceil(2) as i32
    } else {
        -((v / 2) as i32)
    }
}

/// Length in bits of the order-0 exp-Golomb code for `v`.
pub fn ue_len(v: u32) -> u32 {
    2 * (31 - (v + 1).leading_zeros()) + 1
}
