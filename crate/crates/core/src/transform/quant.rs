//! Scalar dead-zone quantization.
//!
//! `Qstep(qp) = 2^((qp - 4) / 6)` is held exactly as `m * 2^e / 64` with a
//! six-entry mantissa table. Coefficients produced by [`forward_transform`]
//! carry an extra `2^shift` gain, so the effective step in the coefficient
//! domain is `Qstep * 2^shift`.
//!
//! [`forward_transform`]: super::forward_transform

use crate::error::{Error, Result};

pub const QP_MAX: i32 = 51;

const MANTISSA: [i64; 6] = [64, 72, 81, 91, 102, 114];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Qp(u8);

impl Qp {
    pub fn new(value: i32) -> Result<Qp> {
        if (0..=QP_MAX).contains(&value) {
            Ok(Qp(value as u8))
        } else {
            Err(Error::invalid(format!("qp {value} outside [0, {QP_MAX}]")))
        }
    }

    /// `base + delta` clipped to the legal range.
    pub fn clipped(value: i32) -> Qp {
        Qp(value.clamp(0, QP_MAX) as u8)
    }

    pub fn value(self) -> i32 {
        self.0 as i32
    }

    pub fn offset(self, delta: i32) -> Qp {
        Qp::clipped(self.value() + delta)
    }

    /// Step size as an exact fraction `num / 64` scaled by `2^shift`.
    fn step_num(self, shift: u32) -> i64 {
        let q = self.value() - 4;
        let e = q.div_euclid(6) + shift as i32;
        let m = MANTISSA[q.rem_euclid(6) as usize];
        if e >= 0 {
            m << e
        } else {
            m >> -e
        }
    }

    pub fn step(self) -> f64 {
        2f64.powf((self.value() - 4) as f64 / 6.0)
    }

    /// Fixed-point step as used by the quantizer.
    pub fn step_fixed(self) -> f64 {
        self.step_num(0) as f64 / 64.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeadZone {
    /// Rounding offset 1/3.
    Intra,
    /// Rounding offset 1/6.
    Inter,
}

impl DeadZone {
    fn denominator(self) -> i64 {
        match self {
            DeadZone::Intra => 3,
            DeadZone::Inter => 6,
        }
    }

    pub fn offset(self) -> f64 {
        1.0 / self.denominator() as f64
    }
}

/// A `w`×`h` block of coefficients or levels, row-major. `shift` is the
/// transform gain exponent of the coefficients it was derived from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoeffBlock {
    pub w: usize,
    pub h: usize,
    pub shift: u32,
    pub coeffs: Vec<i32>,
}

impl CoeffBlock {
    pub fn zeros(w: usize, h: usize, shift: u32) -> Self {
        CoeffBlock {
            w,
            h,
            shift,
            coeffs: vec![0; w * h],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }

    pub fn nonzero_count(&self) -> usize {
        self.coeffs.iter().filter(|&&c| c != 0).count()
    }
}

/// `sign(c) * floor(|c| / step + f)`, evaluated exactly in integers.
pub fn quantize(coeffs: &CoeffBlock, qp: Qp, dz: DeadZone) -> CoeffBlock {
    let step = qp.step_num(coeffs.shift);
    let fd = dz.denominator();
    let levels = coeffs
        .coeffs
        .iter()
        .map(|&c| {
            let mag = ((c.unsigned_abs() as i64 * 64 * fd + step) / (step * fd)) as i32;
            if c < 0 {
                -mag
            } else {
                mag
            }
        })
        .collect();
    CoeffBlock {
        coeffs: levels,
        ..*coeffs
    }
}

/// Magnitude limit of dequantized coefficients; keeps the inverse transform
/// of an arbitrary parsed block inside i32 range.
pub const COEFF_MAX: i32 = (1 << 15) - 1;

/// `level * step`, rounded half away from zero and clipped to
/// [`COEFF_MAX`].
pub fn dequantize(levels: &CoeffBlock, qp: Qp) -> CoeffBlock {
    let step = qp.step_num(levels.shift);
    let coeffs = levels
        .coeffs
        .iter()
        .map(|&l| {
            let mag = (l.unsigned_abs() as i64 * step + 32) >> 6;
            let mag = mag.min(COEFF_MAX as i64) as i32;
            if l < 0 {
                -mag
            } else {
                mag
            }
        })
        .collect();
    CoeffBlock { coeffs, ..*levels }
}

/// Effective step in the coefficient domain of a block with `shift`.
pub fn effective_step(qp: Qp, shift: u32) -> f64 {
    qp.step_num(shift) as f64 / 64.0
}
