//! Exactly invertible integer DCT-II.
//!
//! Every rotation in the factorization is computed as three lifting steps
//! with 24-bit fixed-point multipliers, so each step is undone exactly by
//! subtracting the same rounded product. The 1-D transform of length N splits
//! into a length-N/2 DCT-II on the even outputs and a length-N/2 DCT-IV on the
//! odd ones; the DCT-IV runs through a half-length complex FFT built from the
//! same rotations.
//!
//! Input samples are shifted left by `s = 7 - ceil(log2(w*h) / 2)` before the
//! separable pass, which keeps the DC gain at or below 2^7 and every
//! coefficient inside i16 range for 8-bit residuals. The coefficients are
//! therefore orthonormal DCT-II values times `2^s`, up to lifting rounding:
//! within 3 units for an impulse and `sqrt(w*h)` units on the DC of a
//! constant block, where the per-stage rounding errors add coherently.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

const LIFT_BITS: u32 = 24;
const LIFT_HALF: i64 = 1 << (LIFT_BITS - 1);

pub const MIN_TX_SIZE: usize = 4;
pub const MAX_TX_SIZE: usize = 64;

#[derive(Debug, Clone, Copy)]
struct Rot {
    quarter_turns: u8,
    p: i64,
    u: i64,
}

#[inline]
fn lift(m: i64, x: i32) -> i32 {
    ((m * x as i64 + LIFT_HALF) >> LIFT_BITS) as i32
}

impl Rot {
    fn new(theta: f64) -> Rot {
        let k = (theta / (PI / 2.0)).round();
        let phi = theta - k * PI / 2.0;
        let scale = (1u64 << LIFT_BITS) as f64;
        let (p, u) = if phi.abs() < 1e-12 {
            (0, 0)
        } else {
            (
                ((phi.cos() - 1.0) / phi.sin() * scale).round() as i64,
                (phi.sin() * scale).round() as i64,
            )
        };
        Rot {
            quarter_turns: (k as i64).rem_euclid(4) as u8,
            p,
            u,
        }
    }

    #[inline]
    fn fwd(&self, x0: &mut i32, x1: &mut i32) {
        if self.u != 0 {
            *x0 += lift(self.p, *x1);
            *x1 += lift(self.u, *x0);
            *x0 += lift(self.p, *x1);
        }
        for _ in 0..self.quarter_turns {
            let t = *x0;
            *x0 = -*x1;
            *x1 = t;
        }
    }

    #[inline]
    fn inv(&self, x0: &mut i32, x1: &mut i32) {
        for _ in 0..self.quarter_turns {
            let t = *x0;
            *x0 = *x1;
            *x1 = -t;
        }
        if self.u != 0 {
            *x0 -= lift(self.p, *x1);
            *x1 -= lift(self.u, *x0);
            *x0 -= lift(self.p, *x1);
        }
    }
}

struct FftPlan {
    bitrev: Vec<usize>,
    /// Twiddles per stage, indexed by butterfly offset within a group.
    twiddles: Vec<Vec<Rot>>,
}

impl FftPlan {
    fn new(k: usize) -> FftPlan {
        let bits = k.trailing_zeros();
        let bitrev = (0..k)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - bits)
                }
            })
            .collect();
        let mut twiddles = Vec::new();
        let mut size = 2;
        while size <= k {
            twiddles.push(
                (0..size / 2)
                    .map(|j| Rot::new(-2.0 * PI * j as f64 / size as f64))
                    .collect(),
            );
            size *= 2;
        }
        FftPlan { bitrev, twiddles }
    }

    fn forward(&self, re: &mut [i32], im: &mut [i32], r45: &Rot) {
        let k = re.len();
        for i in 0..k {
            let j = self.bitrev[i];
            if i < j {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
        for (stage, tw) in self.twiddles.iter().enumerate() {
            let size = 2 << stage;
            let h = size / 2;
            for s in (0..k).step_by(size) {
                for (j, rot) in tw.iter().enumerate() {
                    let (a, b) = (s + j, s + j + h);
                    let (mut rb, mut ib) = (re[b], im[b]);
                    rot.fwd(&mut rb, &mut ib);
                    let mut ra = re[a];
                    r45.fwd(&mut ra, &mut rb);
                    let mut ia = im[a];
                    r45.fwd(&mut ia, &mut ib);
                    re[a] = ra;
                    re[b] = -rb;
                    im[a] = ia;
                    im[b] = -ib;
                }
            }
        }
    }

    fn inverse(&self, re: &mut [i32], im: &mut [i32], r45: &Rot) {
        let k = re.len();
        for (stage, tw) in self.twiddles.iter().enumerate().rev() {
            let size = 2 << stage;
            let h = size / 2;
            for s in (0..k).step_by(size) {
                for (j, rot) in tw.iter().enumerate().rev() {
                    let (a, b) = (s + j, s + j + h);
                    let (mut ra, mut rb) = (re[a], -re[b]);
                    r45.inv(&mut ra, &mut rb);
                    let (mut ia, mut ib) = (im[a], -im[b]);
                    r45.inv(&mut ia, &mut ib);
                    rot.inv(&mut rb, &mut ib);
                    re[a] = ra;
                    re[b] = rb;
                    im[a] = ia;
                    im[b] = ib;
                }
            }
        }
        for i in 0..k {
            let j = self.bitrev[i];
            if i < j {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
    }
}

struct Dct4Plan {
    pre: Vec<Rot>,
    post: Vec<Rot>,
    fft: FftPlan,
}

impl Dct4Plan {
    fn new(m: usize) -> Dct4Plan {
        let k = m / 2;
        Dct4Plan {
            pre: (0..k)
                .map(|n| Rot::new(-PI * (4 * n + 1) as f64 / (4 * m) as f64))
                .collect(),
            post: (0..k).map(|i| Rot::new(-PI * i as f64 / m as f64)).collect(),
            fft: FftPlan::new(k.max(1)),
        }
    }
}

struct Plans {
    r45: Rot,
    /// DCT-IV plans indexed by log2 of the length (lengths 2..=32).
    dct4: Vec<Dct4Plan>,
}

fn plans() -> &'static Plans {
    static PLANS: OnceLock<Plans> = OnceLock::new();
    PLANS.get_or_init(|| Plans {
        r45: Rot::new(-PI / 4.0),
        dct4: (0..6).map(|l| Dct4Plan::new(1 << l)).collect(),
    })
}

fn dct4_fwd(v: &mut [i32], p: &Plans) {
    let m = v.len();
    if m == 1 {
        return;
    }
    let plan = &p.dct4[m.trailing_zeros() as usize];
    let k = m / 2;
    let (mut re, mut im) = ([0i32; 32], [0i32; 32]);
    for n in 0..k {
        let (mut a, mut b) = (v[2 * n], v[m - 1 - 2 * n]);
        plan.pre[n].fwd(&mut a, &mut b);
        re[n] = a;
        im[n] = b;
    }
    plan.fft.forward(&mut re[..k], &mut im[..k], &p.r45);
    for i in 0..k {
        let (mut r, mut q) = (re[i], im[i]);
        plan.post[i].fwd(&mut r, &mut q);
        v[2 * i] = r;
        v[m - 1 - 2 * i] = -q;
    }
}

fn dct4_inv(v: &mut [i32], p: &Plans) {
    let m = v.len();
    if m == 1 {
        return;
    }
    let plan = &p.dct4[m.trailing_zeros() as usize];
    let k = m / 2;
    let (mut re, mut im) = ([0i32; 32], [0i32; 32]);
    for i in 0..k {
        let (mut r, mut q) = (v[2 * i], -v[m - 1 - 2 * i]);
        plan.post[i].inv(&mut r, &mut q);
        re[i] = r;
        im[i] = q;
    }
    plan.fft.inverse(&mut re[..k], &mut im[..k], &p.r45);
    for n in 0..k {
        let (mut a, mut b) = (re[n], im[n]);
        plan.pre[n].inv(&mut a, &mut b);
        v[2 * n] = a;
        v[m - 1 - 2 * n] = b;
    }
}

fn dct2_fwd(x: &mut [i32], p: &Plans) {
    let n = x.len();
    if n == 1 {
        return;
    }
    let h = n / 2;
    let (mut even, mut odd) = ([0i32; 32], [0i32; 32]);
    for i in 0..h {
        let (mut a, mut b) = (x[i], x[n - 1 - i]);
        p.r45.fwd(&mut a, &mut b);
        even[i] = a;
        odd[i] = -b;
    }
    dct2_fwd(&mut even[..h], p);
    dct4_fwd(&mut odd[..h], p);
    for i in 0..h {
        x[2 * i] = even[i];
        x[2 * i + 1] = odd[i];
    }
}

fn dct2_inv(x: &mut [i32], p: &Plans) {
    let n = x.len();
    if n == 1 {
        return;
    }
    let h = n / 2;
    let (mut even, mut odd) = ([0i32; 32], [0i32; 32]);
    for i in 0..h {
        even[i] = x[2 * i];
        odd[i] = x[2 * i + 1];
    }
    dct2_inv(&mut even[..h], p);
    dct4_inv(&mut odd[..h], p);
    for i in 0..h {
        let (mut a, mut b) = (even[i], -odd[i]);
        p.r45.inv(&mut a, &mut b);
        x[i] = a;
        x[n - 1 - i] = b;
    }
}

/// Left shift applied to residuals before a `w`×`h` forward transform.
pub fn coeff_shift(w: usize, h: usize) -> u32 {
    let l = (w * h).trailing_zeros();
    7 - l.div_ceil(2)
}

fn check_size(w: usize, h: usize) -> Result<()> {
    let ok = |n: usize| n.is_power_of_two() && (MIN_TX_SIZE..=MAX_TX_SIZE).contains(&n);
    if ok(w) && ok(h) {
        Ok(())
    } else {
        Err(Error::invalid(format!("unsupported transform size {w}x{h}")))
    }
}

/// Separable forward transform of a row-major `w`×`h` residual block.
/// Returns coefficients in row-major order (row index = vertical frequency).
pub fn forward_dct(residual: &[i32], w: usize, h: usize) -> Result<Vec<i32>> {
    check_size(w, h)?;
    if residual.len() != w * h {
        return Err(Error::invalid("residual length does not match block size"));
    }
    let p = plans();
    let s = coeff_shift(w, h);
    let mut c: Vec<i32> = residual.iter().map(|&r| r << s).collect();
    for row in c.chunks_exact_mut(w) {
        dct2_fwd(row, p);
    }
    let mut col = [0i32; MAX_TX_SIZE];
    for x in 0..w {
        for y in 0..h {
            col[y] = c[y * w + x];
        }
        dct2_fwd(&mut col[..h], p);
        for y in 0..h {
            c[y * w + x] = col[y];
        }
    }
    Ok(c)
}

/// Exact inverse of [`forward_dct`].
pub fn inverse_dct(coeffs: &[i32], w: usize, h: usize) -> Result<Vec<i32>> {
    check_size(w, h)?;
    if coeffs.len() != w * h {
        return Err(Error::invalid("coefficient length does not match block size"));
    }
    let p = plans();
    let s = coeff_shift(w, h);
    let mut c = coeffs.to_vec();
    let mut col = [0i32; MAX_TX_SIZE];
    for x in 0..w {
        for y in 0..h {
            col[y] = c[y * w + x];
        }
        dct2_inv(&mut col[..h], p);
        for y in 0..h {
            c[y * w + x] = col[y];
        }
    }
    for row in c.chunks_exact_mut(w) {
        dct2_inv(row, p);
    }
    // Exact only for outputs of forward_dct; arbitrary input rounds down.
    for v in &mut c {
        *v >>= s;
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SIZES: [usize; 5] = [4, 8, 16, 32, 64];

    fn naive_dct(x: &[i32], w: usize, h: usize) -> Vec<f64> {
        let a = |k: usize, n: usize| {
            if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            }
        };
        let mut out = vec![0.0; w * h];
        for v in 0..h {
            for u in 0..w {
                let mut acc = 0.0;
                for y in 0..h {
                    for xx in 0..w {
                        acc += x[y * w + xx] as f64
                            * (PI * (2 * xx + 1) as f64 * u as f64 / (2 * w) as f64).cos()
                            * (PI * (2 * y + 1) as f64 * v as f64 / (2 * h) as f64).cos();
                    }
                }
                out[v * w + u] = acc * a(u, w) * a(v, h);
            }
        }
        out
    }

    #[test]
    fn shifts_bound_dc_gain() {
        for w in SIZES {
            for h in SIZES {
                let s = coeff_shift(w, h);
                let gain = ((w * h) as f64).sqrt() * (1u32 << s) as f64;
                assert!(gain <= 128.0 + 1e-9, "{w}x{h}");
                assert!(gain >= 64.0, "{w}x{h}");
            }
        }
    }

    #[test]
    fn round_trip_all_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut blocks = 0;
        for w in SIZES {
            for h in SIZES {
                let trials = 10_000 / (w * h / 16).max(1) / 4 + 32;
                for _ in 0..trials {
                    let x: Vec<i32> = (0..w * h).map(|_| rng.gen_range(-255..=255)).collect();
                    let c = forward_dct(&x, w, h).unwrap();
                    assert!(c.iter().all(|v| v.abs() < 1 << 15));
                    assert_eq!(inverse_dct(&c, w, h).unwrap(), x, "{w}x{h}");
                    blocks += 1;
                }
            }
        }
        assert!(blocks >= 10_000, "{blocks}");
    }

    #[test]
    fn extreme_inputs_stay_in_range() {
        for w in SIZES {
            for h in SIZES {
                for sign in [-1, 1] {
                    let x = vec![255 * sign; w * h];
                    let c = forward_dct(&x, w, h).unwrap();
                    assert!(c.iter().all(|v| v.abs() < 1 << 15));
                    assert_eq!(inverse_dct(&c, w, h).unwrap(), x);
                }
                // sign pattern matched to the (1,1) basis function
                let x: Vec<i32> = (0..w * h)
                    .map(|i| {
                        let (xx, y) = (i % w, i / w);
                        let b = (PI * (2 * xx + 1) as f64 / (2 * w) as f64).cos()
                            * (PI * (2 * y + 1) as f64 / (2 * h) as f64).cos();
                        if b >= 0.0 {
                            255
                        } else {
                            -255
                        }
                    })
                    .collect();
                let c = forward_dct(&x, w, h).unwrap();
                assert!(c.iter().all(|v| v.abs() < 1 << 15));
                assert_eq!(inverse_dct(&c, w, h).unwrap(), x);
            }
        }
    }

    #[test]
    fn constant_block_has_only_dc() {
        for w in SIZES {
            for h in SIZES {
                for v in [-255, -7, 1, 100, 255] {
                    let c = forward_dct(&vec![v; w * h], w, h).unwrap();
                    assert!(c[1..].iter().all(|&a| a == 0), "{w}x{h} value {v}");
                    let expect = v as f64 * ((w * h) as f64).sqrt() * (1 << coeff_shift(w, h)) as f64;
                    assert!((c[0] as f64 - expect).abs() <= ((w * h) as f64).sqrt());
                }
            }
        }
    }

    #[test]
    fn impulse_matches_naive_dct() {
        for (w, h) in [(4, 4), (8, 8), (16, 8), (4, 16), (32, 32), (8, 64)] {
            for (px, py) in [(0, 0), (1, 2), (w - 1, h - 1)] {
                let mut x = vec![0; w * h];
                x[py * w + px] = 255;
                let c = forward_dct(&x, w, h).unwrap();
                let scale = (1 << coeff_shift(w, h)) as f64;
                let r = naive_dct(&x, w, h);
                let worst = c
                    .iter()
                    .zip(&r)
                    .map(|(&a, &b)| (a as f64 - b * scale).abs())
                    .fold(0.0, f64::max);
                assert!(worst <= 3.0, "{w}x{h} impulse ({px},{py}) error {worst}");
            }
        }
    }

    #[test]
    fn parseval_within_half_percent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for w in SIZES {
            for h in SIZES {
                let scale = 4f64.powi(coeff_shift(w, h) as i32);
                for _ in 0..4 {
                    let x: Vec<i32> = (0..w * h).map(|_| rng.gen_range(-255..=255)).collect();
                    let c = forward_dct(&x, w, h).unwrap();
                    let ex: f64 = x.iter().map(|&v| (v as f64).powi(2)).sum();
                    let ec: f64 = c.iter().map(|&v| (v as f64).powi(2)).sum();
                    assert!((ec / (ex * scale) - 1.0).abs() < 0.005, "{w}x{h}");
                }
            }
        }
    }

    #[test]
    fn unsupported_sizes_rejected() {
        assert!(forward_dct(&[0; 4], 2, 2).is_err());
        assert!(forward_dct(&[0; 128 * 4], 128, 4).is_err());
        assert!(forward_dct(&[0; 24 * 4], 24, 4).is_err());
        assert!(inverse_dct(&[0; 16], 4, 8).is_err());
    }
}
