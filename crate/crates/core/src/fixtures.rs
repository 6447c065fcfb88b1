//! Deterministic synthetic clips for tests, examples and ablation runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::frame::{FrameBuffer, PlaneBuffer};

fn plane_from(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> PlaneBuffer {
    let data = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| f(x, y).round().clamp(0.0, 255.0) as u8)
        .collect();
    PlaneBuffer::from_vec(w, h, data).expect("size matches")
}

/// Smooth waves over a checkerboard of edges.
fn texture(x: f64, y: f64) -> f64 {
    let waves = 40.0 * (x * 0.11).sin() * (y * 0.07).cos() + 25.0 * ((x + 2.0 * y) * 0.045).sin();
    let edge = if ((x / 24.0).floor() + (y / 16.0).floor()) as i64 % 2 == 0 {
        20.0
    } else {
        -20.0
    };
    128.0 + waves + edge + 0.2 * (x - y)
}

fn textured_frame(w: usize, h: usize, ox: i64, oy: i64, poc: u32) -> FrameBuffer {
    let at = |x: usize, y: usize| ((x as i64 + ox) as f64, (y as i64 + oy) as f64);
    let y = plane_from(w, h, |x, y| {
        let (u, v) = at(x, y);
        texture(u, v)
    });
    let u = plane_from(w / 2, h / 2, |x, y| {
        let (a, b) = at(2 * x, 2 * y);
        128.0 + 0.3 * (texture(a, b) - 128.0)
    });
    let v = plane_from(w / 2, h / 2, |x, y| {
        let (a, b) = at(2 * x, 2 * y);
        128.0 - 0.25 * (texture(b, a) - 128.0)
    });
    FrameBuffer::from_planes(y, u, v, poc).expect("consistent planes")
}

pub fn gray(w: usize, h: usize, frames: usize) -> Vec<FrameBuffer> {
    (0..frames as u32)
        .map(|p| FrameBuffer::new(w, h, p).expect("even size"))
        .collect()
}

/// The same textured picture repeated.
pub fn static_clip(w: usize, h: usize, frames: usize) -> Vec<FrameBuffer> {
    (0..frames as u32).map(|p| textured_frame(w, h, 0, 0, p)).collect()
}

/// A textured canvas moving by `(dx, dy)` samples per frame.
pub fn pan_clip(w: usize, h: usize, frames: usize, dx: i64, dy: i64) -> Vec<FrameBuffer> {
    (0..frames as u32)
        .map(|p| textured_frame(w, h, dx * p as i64, dy * p as i64, p))
        .collect()
}

/// Independent uniform noise in every frame.
pub fn noise_clip(w: usize, h: usize, frames: usize, seed: u64) -> Vec<FrameBuffer> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..frames as u32)
        .map(|p| {
            let mut f = FrameBuffer::new(w, h, p).expect("even size");
            for c in 0..3 {
                rng.fill(f.plane_mut(c).data_mut());
            }
            f
        })
        .collect()
}

/// Mild texture with an 8-high bright band along the top of every CTU row.
pub fn band_clip(w: usize, h: usize, frames: usize) -> Vec<FrameBuffer> {
    let base = textured_frame(w, h, 0, 0, 0);
    let soften =
        |p: &PlaneBuffer, mid: f64| plane_from(p.width(), p.height(), |x, y| mid + 0.2 * (p.get(x, y) as f64 - 128.0));
    let y = plane_from(w, h, |x, y| {
        let t = 0.2 * (base.y.get(x, y) as f64 - 128.0);
        if y % 64 < 8 {
            200.0 + t
        } else {
            70.0 + t
        }
    });
    let (u, v) = (soften(&base.u, 120.0), soften(&base.v, 136.0));
    (0..frames as u32)
        .map(|p| FrameBuffer::from_planes(y.clone(), u.clone(), v.clone(), p).expect("consistent planes"))
        .collect()
}
