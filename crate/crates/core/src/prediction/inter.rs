use std::cmp::Ordering;

use crate::frame::PlaneBuffer;
use crate::partition::BlockRect;

/// Motion vector in half-sample luma units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct MotionVector {
    pub dx: i32,
    pub dy: i32,
    pub ref_poc: u32,
}

impl MotionVector {
    pub fn new(dx: i32, dy: i32, ref_poc: u32) -> Self {
        MotionVector { dx, dy, ref_poc }
    }
}

pub const DEFAULT_SEARCH_RANGE: i32 = 8;

/// Search order key: SAD, then |dx|+|dy|, then dy, then dx.
fn candidate_key(sad: u64, dx: i32, dy: i32) -> (u64, i32, i32, i32) {
    (sad, dx.abs() + dy.abs(), dy, dx)
}

fn better(a: (u64, i32, i32), b: (u64, i32, i32)) -> bool {
    candidate_key(a.0, a.1, a.2).cmp(&candidate_key(b.0, b.1, b.2)) == Ordering::Less
}

/// Bilinear motion compensation with `frac_bits` fractional MV bits, reading
/// clamped samples outside the plane. Rounds half up.
pub fn compensate_plane(
    reference: &PlaneBuffer,
    x: usize,
    y: usize,
    w: usize,
    h: usize,
    mvx: i32,
    mvy: i32,
    frac_bits: u32,
) -> Vec<u8> {
    let one = 1i32 << frac_bits;
    let (fx, fy) = (mvx & (one - 1), mvy & (one - 1));
    let x0 = x as isize + (mvx >> frac_bits) as isize;
    let y0 = y as isize + (mvy >> frac_bits) as isize;
    let mut out = vec![0u8; w * h];
    let interior = x0 >= 0 && y0 >= 0 && x0 as usize + w < reference.width() && y0 as usize + h < reference.height();
    if fx == 0 && fy == 0 {
        for r in 0..h {
            let dst = &mut out[r * w..(r + 1) * w];
            if interior {
                let row = reference.row(y0 as usize + r);
                dst.copy_from_slice(&row[x0 as usize..x0 as usize + w]);
            } else {
                for (c, d) in dst.iter_mut().enumerate() {
                    *d = reference.get_clamped(x0 + c as isize, y0 + r as isize);
                }
            }
        }
        return out;
    }
    let weights = [
        ((one - fx) * (one - fy)) as u32,
        (fx * (one - fy)) as u32,
        ((one - fx) * fy) as u32,
        (fx * fy) as u32,
    ];
    let shift = 2 * frac_bits;
    let round = 1u32 << (shift - 1);
    for r in 0..h {
        for c in 0..w {
            let (sx, sy) = (x0 + c as isize, y0 + r as isize);
            let (a, b, cc, d) = if interior {
                let (ux, uy) = (sx as usize, sy as usize);
                let r0 = reference.row(uy);
                let r1 = reference.row(uy + 1);
                (r0[ux], r0[ux + 1], r1[ux], r1[ux + 1])
            } else {
                (
                    reference.get_clamped(sx, sy),
                    reference.get_clamped(sx + 1, sy),
                    reference.get_clamped(sx, sy + 1),
                    reference.get_clamped(sx + 1, sy + 1),
                )
            };
            let v = weights[0] * a as u32 + weights[1] * b as u32 + weights[2] * cc as u32 + weights[3] * d as u32;
            out[r * w + c] = ((v + round) >> shift) as u8;
        }
    }
    out
}

/// Half-pel luma compensation of `rect`.
pub fn motion_compensate(reference: &PlaneBuffer, rect: &BlockRect, mv: &MotionVector) -> Vec<u8> {
    compensate_plane(reference, rect.x, rect.y, rect.w, rect.h, mv.dx, mv.dy, 1)
}

/// Chroma compensation for the luma-domain `rect`: the same vector is a
/// quarter-sample offset on the half-resolution planes.
pub fn motion_compensate_chroma(reference: &PlaneBuffer, rect: &BlockRect, mv: &MotionVector) -> Vec<u8> {
    compensate_plane(
        reference,
        rect.x / 2,
        rect.y / 2,
        rect.w / 2,
        rect.h / 2,
        mv.dx,
        mv.dy,
        2,
    )
}

pub fn sad(a: &[u8], b: &[u8]) -> u64 {
    a.iter().zip(b).map(|(&x, &y)| x.abs_diff(y) as u64).sum()
}

fn sad_int(cur: &PlaneBuffer, reference: &PlaneBuffer, rect: &BlockRect, dx: i32, dy: i32) -> u64 {
    let pred = compensate_plane(reference, rect.x, rect.y, rect.w, rect.h, 2 * dx, 2 * dy, 1);
    sad(&cur.read_block(rect.x, rect.y, rect.w, rect.h), &pred)
}

/// Refines an integer-pel winner over its eight half-pel neighbors.
fn refine_half(
    cur_block: &[u8],
    reference: &PlaneBuffer,
    rect: &BlockRect,
    best_int: (u64, i32, i32),
    range: i32,
) -> (u64, i32, i32) {
    let mut best = (best_int.0, 2 * best_int.1, 2 * best_int.2);
    let (cx, cy) = (best.1, best.2);
    for oy in -1..=1 {
        for ox in -1..=1 {
            if ox == 0 && oy == 0 {
                continue;
            }
            let (dx, dy) = (cx + ox, cy + oy);
            if dx.abs() > 2 * range || dy.abs() > 2 * range {
                continue;
            }
            let pred = compensate_plane(reference, rect.x, rect.y, rect.w, rect.h, dx, dy, 1);
            let cand = (sad(cur_block, &pred), dx, dy);
            if better(cand, best) {
                best = cand;
            }
        }
    }
    best
}

/// Full integer search over `[-range, range]^2`, then half-pel refinement
/// around the best integer vector. Returns the vector (half-pel units) and
/// its SAD.
pub fn motion_search(
    rect: &BlockRect,
    cur: &PlaneBuffer,
    reference: &PlaneBuffer,
    range: i32,
    ref_poc: u32,
) -> (MotionVector, u64) {
    let mut best = (u64::MAX, 0, 0);
    for dy in -range..=range {
        for dx in -range..=range {
            let cand = (sad_int(cur, reference, rect, dx, dy), dx, dy);
            if better(cand, best) {
                best = cand;
            }
        }
    }
    let block = cur.read_block(rect.x, rect.y, rect.w, rect.h);
    let (s, dx, dy) = refine_half(&block, reference, rect, best, range);
    (MotionVector::new(dx, dy, ref_poc), s)
}

pub const SAD_CELL: usize = 8;

/// Integer-pel SADs of every 8×8 cell of a region for every vector in the
/// search window. Any cell-aligned rect's SAD at an integer vector is the sum
/// of its cells, which makes searching many overlapping rects cheap.
#[derive(Debug, Clone)]
pub struct SadGrid {
    region: BlockRect,
    range: i32,
    cols: usize,
    cells: usize,
    /// Indexed by `vector * cells + cell`.
    sads: Vec<u32>,
}

impl SadGrid {
    pub fn new(cur: &PlaneBuffer, reference: &PlaneBuffer, region: BlockRect, range: i32) -> Self {
        assert!(region.w.is_multiple_of(SAD_CELL) && region.h.is_multiple_of(SAD_CELL));
        let cols = region.w / SAD_CELL;
        let cells = cols * (region.h / SAD_CELL);
        let side = (2 * range + 1) as usize;
        let mut sads = vec![0u32; side * side * cells];
        let cur_block = cur.read_block(region.x, region.y, region.w, region.h);
        for (vi, (dy, dx)) in (-range..=range)
            .flat_map(|dy| (-range..=range).map(move |dx| (dy, dx)))
            .enumerate()
        {
            let pred = compensate_plane(reference, region.x, region.y, region.w, region.h, 2 * dx, 2 * dy, 1);
            let out = &mut sads[vi * cells..(vi + 1) * cells];
            for r in 0..region.h {
                let a = &cur_block[r * region.w..(r + 1) * region.w];
                let b = &pred[r * region.w..(r + 1) * region.w];
                let base = (r / SAD_CELL) * cols;
                for (c, (ca, cb)) in a.chunks_exact(SAD_CELL).zip(b.chunks_exact(SAD_CELL)).enumerate() {
                    out[base + c] += ca.iter().zip(cb).map(|(&p, &q)| p.abs_diff(q) as u32).sum::<u32>();
                }
            }
        }
        SadGrid {
            region,
            range,
            cols,
            cells,
            sads,
        }
    }

    pub fn range(&self) -> i32 {
        self.range
    }

    fn rect_sad(&self, vi: usize, rect: &BlockRect) -> u64 {
        let (cx0, cy0) = ((rect.x - self.region.x) / SAD_CELL, (rect.y - self.region.y) / SAD_CELL);
        let table = &self.sads[vi * self.cells..(vi + 1) * self.cells];
        let mut total = 0u64;
        for cy in cy0..cy0 + rect.h / SAD_CELL {
            let row = &table[cy * self.cols + cx0..cy * self.cols + cx0 + rect.w / SAD_CELL];
            total += row.iter().map(|&v| v as u64).sum::<u64>();
        }
        total
    }

    /// Same result as [`motion_search`] for a cell-aligned `rect` inside the
    /// region.
    pub fn search(
        &self,
        rect: &BlockRect,
        cur: &PlaneBuffer,
        reference: &PlaneBuffer,
        ref_poc: u32,
    ) -> (MotionVector, u64) {
        debug_assert!(self.region.contains(rect) && rect.w.is_multiple_of(SAD_CELL) && rect.h.is_multiple_of(SAD_CELL));
        let r = self.range;
        let mut best = (u64::MAX, 0, 0);
        let mut vi = 0;
        for dy in -r..=r {
            for dx in -r..=r {
                let cand = (self.rect_sad(vi, rect), dx, dy);
                if better(cand, best) {
                    best = cand;
                }
                vi += 1;
            }
        }
        let block = cur.read_block(rect.x, rect.y, rect.w, rect.h);
        let (s, dx, dy) = refine_half(&block, reference, rect, best, r);
        (MotionVector::new(dx, dy, ref_poc), s)
    }
}

pub const FIELD_CELL: usize = 8;

/// Motion vectors of a decoded picture on an 8×8 grid; `None` for intra.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MotionField {
    cols: usize,
    rows: usize,
    cells: Vec<Option<MotionVector>>,
}

impl MotionField {
    pub fn new(width: usize, height: usize) -> Self {
        let (cols, rows) = (width.div_ceil(FIELD_CELL), height.div_ceil(FIELD_CELL));
        MotionField {
            cols,
            rows,
            cells: vec![None; cols * rows],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> Option<MotionVector> {
        let (cx, cy) = (x / FIELD_CELL, y / FIELD_CELL);
        if cx < self.cols && cy < self.rows {
            self.cells[cy * self.cols + cx]
        } else {
            None
        }
    }

    pub fn fill(&mut self, rect: &BlockRect, mv: Option<MotionVector>) {
        for cy in rect.y / FIELD_CELL..(rect.y + rect.h).div_ceil(FIELD_CELL) {
            for cx in rect.x / FIELD_CELL..(rect.x + rect.w).div_ceil(FIELD_CELL) {
                self.cells[cy * self.cols + cx] = mv;
            }
        }
    }

    /// Co-located predictor for a block at (x, y): the stored vector, or zero.
    pub fn predictor(&self, x: usize, y: usize) -> (i32, i32) {
        self.get(x, y).map_or((0, 0), |m| (m.dx, m.dy))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_plane(rng: &mut impl Rng, w: usize, h: usize) -> PlaneBuffer {
        PlaneBuffer::from_vec(w, h, (0..w * h).map(|_| rng.gen()).collect()).unwrap()
    }

    fn smooth_plane(rng: &mut impl Rng, w: usize, h: usize) -> PlaneBuffer {
        let (a, b, c) = (
            rng.gen_range(0.05..0.3),
            rng.gen_range(0.05..0.3),
            rng.gen_range(0.0..6.0),
        );
        let data = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                (128.0 + 60.0 * (a * x + c).sin() + 50.0 * (b * y).cos() + rng.gen_range(-4.0..4.0)) as u8
            })
            .collect();
        PlaneBuffer::from_vec(w, h, data).unwrap()
    }

    #[test]
    fn identical_frames_give_zero_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_plane(&mut rng, 64, 64);
        let (mv, s) = motion_search(&BlockRect::new(16, 16, 16, 16), &p, &p, 4, 0);
        assert_eq!((mv.dx, mv.dy, s), (0, 0, 0));
    }

    #[test]
    fn shifted_reference_found() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cur = random_plane(&mut rng, 64, 64);
        // ref is cur shifted right by 2
        let mut reference = PlaneBuffer::new(64, 64, 0);
        for y in 0..64 {
            for x in 0..64 {
                reference.set(x, y, cur.get_clamped(x as isize - 2, y as isize));
            }
        }
        let (mv, s) = motion_search(&BlockRect::new(24, 24, 8, 8), &cur, &reference, 4, 0);
        assert_eq!((mv.dx, mv.dy, s), (4, 0, 0));
    }

    #[test]
    fn constant_frames_prefer_zero() {
        let p = PlaneBuffer::new(32, 32, 77);
        let (mv, s) = motion_search(&BlockRect::new(8, 8, 8, 8), &p, &p, 3, 0);
        assert_eq!((mv.dx, mv.dy, s), (0, 0, 0));
    }

    #[test]
    fn compensate_examples() {
        let p = PlaneBuffer::from_vec(2, 1, vec![10, 20]).unwrap();
        let r = BlockRect::new(0, 0, 1, 1);
        assert_eq!(motion_compensate(&p, &r, &MotionVector::new(1, 0, 0)), vec![15]);
        let p = PlaneBuffer::from_vec(2, 1, vec![10, 21]).unwrap();
        assert_eq!(motion_compensate(&p, &r, &MotionVector::new(1, 0, 0)), vec![16]);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_plane(&mut rng, 32, 32);
        let r = BlockRect::new(8, 8, 8, 8);
        assert_eq!(
            motion_compensate(&p, &r, &MotionVector::default()),
            p.read_block(8, 8, 8, 8)
        );
        assert_eq!(
            motion_compensate(&p, &r, &MotionVector::new(-6, 4, 0)),
            p.read_block(5, 10, 8, 8)
        );
        // clamped reads at the corner
        let c = motion_compensate(&p, &BlockRect::new(0, 0, 4, 4), &MotionVector::new(-20, -20, 0));
        assert!(c.iter().all(|&v| v == p.get(0, 0)));
    }

    #[test]
    fn quarter_pel_matches_float_bilinear() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_plane(&mut rng, 16, 16);
        for _ in 0..200 {
            let (mx, my) = (rng.gen_range(-12..12), rng.gen_range(-12..12));
            let out = compensate_plane(&p, 4, 4, 4, 4, mx, my, 2);
            for r in 0..4 {
                for c in 0..4 {
                    let fx = (4 + c) as f64 + mx as f64 / 4.0;
                    let fy = (4 + r) as f64 + my as f64 / 4.0;
                    let (ix, iy) = (fx.floor(), fy.floor());
                    let (ax, ay) = (fx - ix, fy - iy);
                    let g = |dx: f64, dy: f64| p.get_clamped((ix + dx) as isize, (iy + dy) as isize) as f64;
                    let v = g(0., 0.) * (1. - ax) * (1. - ay)
                        + g(1., 0.) * ax * (1. - ay)
                        + g(0., 1.) * (1. - ax) * ay
                        + g(1., 1.) * ax * ay;
                    assert_eq!(out[r * 4 + c] as f64, (v + 0.5).floor());
                }
            }
        }
    }

    #[test]
    fn search_is_global_minimum_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let cur = smooth_plane(&mut rng, 32, 32);
            let reference = smooth_plane(&mut rng, 32, 32);
            let rect = BlockRect::new(rng.gen_range(0..3) * 8, rng.gen_range(0..3) * 8, 8, 8);
            let (mv, s) = motion_search(&rect, &cur, &reference, 4, 0);
            let block = cur.read_block(rect.x, rect.y, 8, 8);
            let sad_at = |dx: i32, dy: i32| sad(&block, &compensate_plane(&reference, rect.x, rect.y, 8, 8, dx, dy, 1));
            assert_eq!(sad_at(mv.dx, mv.dy), s);
            let mut best_int = (u64::MAX, 0, 0);
            for dy in -4..=4 {
                for dx in -4..=4 {
                    let v = sad_at(2 * dx, 2 * dy);
                    assert!(s <= v);
                    if candidate_key(v, dx, dy) < candidate_key(best_int.0, best_int.1, best_int.2) {
                        best_int = (v, dx, dy);
                    }
                }
            }
            for oy in -1..=1 {
                for ox in -1..=1 {
                    let (dx, dy) = (2 * best_int.1 + ox, 2 * best_int.2 + oy);
                    if dx.abs() <= 8 && dy.abs() <= 8 {
                        assert!(s <= sad_at(dx, dy));
                    }
                }
            }
            assert!(mv.dx.abs() <= 8 && mv.dy.abs() <= 8);
        }
    }

    #[test]
    fn compensation_reproduces_search_sad() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cur = smooth_plane(&mut rng, 64, 64);
        let reference = smooth_plane(&mut rng, 64, 64);
        for _ in 0..100 {
            let w = [4, 8, 16][rng.gen_range(0..3)];
            let h = [4, 8, 16][rng.gen_range(0..3)];
            let rect = BlockRect::new(rng.gen_range(0..64 - w), rng.gen_range(0..64 - h), w, h);
            let (mv, s) = motion_search(&rect, &cur, &reference, 3, 0);
            let pred = motion_compensate(&reference, &rect, &mv);
            assert_eq!(sad(&cur.read_block(rect.x, rect.y, w, h), &pred), s);
        }
    }

    #[test]
    fn sad_grid_matches_direct_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cur = smooth_plane(&mut rng, 128, 64);
        let reference = smooth_plane(&mut rng, 128, 64);
        let region = BlockRect::new(64, 0, 64, 64);
        let grid = SadGrid::new(&cur, &reference, region, 4);
        for _ in 0..60 {
            let w = [8, 16, 32, 64][rng.gen_range(0..4)];
            let h = [8, 16, 32, 64][rng.gen_range(0..4)];
            let rect = BlockRect::new(
                64 + rng.gen_range(0..=(64 - w) / 8) * 8,
                rng.gen_range(0..=(64 - h) / 8) * 8,
                w,
                h,
            );
            assert_eq!(
                grid.search(&rect, &cur, &reference, 3),
                motion_search(&rect, &cur, &reference, 4, 3)
            );
        }
    }
}
