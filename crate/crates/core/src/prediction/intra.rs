use crate::frame::PlaneBuffer;
use crate::partition::BlockRect;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IntraMode {
    Dc,
    Planar,
    Hor,
    Ver,
}

impl IntraMode {
    /// Modes in signaling order.
    pub const ALL: [IntraMode; 4] = [IntraMode::Dc, IntraMode::Planar, IntraMode::Hor, IntraMode::Ver];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<IntraMode> {
        Self::ALL.get(i).copied()
    }
}

/// Predicts a `w`×`h` block from its left column and top row.
///
/// `left[h]` and `top[w]`, when present, are the bottom-left and top-right
/// samples used by planar; otherwise the last neighbor is reused.
pub fn intra_predict(mode: IntraMode, left: &[u8], top: &[u8], w: usize, h: usize) -> Vec<u8> {
    assert!(left.len() >= h && top.len() >= w, "missing neighbor samples");
    let mut out = vec![0u8; w * h];
    match mode {
        IntraMode::Dc => {
            let sum: u32 = left[..h].iter().chain(&top[..w]).map(|&v| v as u32).sum();
            let n = (w + h) as u32;
            out.fill(((sum + n / 2) / n) as u8);
        }
        IntraMode::Hor => {
            for (row, &l) in out.chunks_exact_mut(w).zip(left) {
                row.fill(l);
            }
        }
        IntraMode::Ver => {
            for row in out.chunks_exact_mut(w) {
                row.copy_from_slice(&top[..w]);
            }
        }
        IntraMode::Planar => {
            let top_right = *top.get(w).unwrap_or(&top[w - 1]) as u32;
            let bottom_left = *left.get(h).unwrap_or(&left[h - 1]) as u32;
            let (w32, h32) = (w as u32, h as u32);
            let shift = w.trailing_zeros() + h.trailing_zeros() + 1;
            for y in 0..h {
                for x in 0..w {
                    let (x32, y32) = (x as u32, y as u32);
                    let horz = (w32 - 1 - x32) * left[y] as u32 + (x32 + 1) * top_right;
                    let vert = (h32 - 1 - y32) * top[x] as u32 + (y32 + 1) * bottom_left;
                    out[y * w + x] = ((horz * h32 + vert * w32 + w32 * h32) >> shift) as u8;
                }
            }
        }
    }
    out
}

/// Neighbors of `rect` taken from the boundary of its enclosing CTU: the
/// reconstructed row above the CTU and the column to its left, or 128 where
/// those lie outside the picture. Both vectors carry one extra sample for
/// planar. Using only CTU-boundary samples makes every block's prediction
/// independent of how the rest of the CTU is partitioned.
pub fn ctu_neighbors(recon: &PlaneBuffer, ctu: &BlockRect, rect: &BlockRect) -> (Vec<u8>, Vec<u8>) {
    let top = if ctu.y > 0 {
        let row = recon.row(ctu.y - 1);
        (0..=rect.w).map(|i| row[(rect.x + i).min(recon.width() - 1)]).collect()
    } else {
        vec![128; rect.w + 1]
    };
    let left = if ctu.x > 0 {
        (0..=rect.h)
            .map(|i| recon.get(ctu.x - 1, (rect.y + i).min(recon.height() - 1)))
            .collect()
    } else {
        vec![128; rect.h + 1]
    };
    (left, top)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dc_of_constant_neighbors() {
        let p = intra_predict(IntraMode::Dc, &[128; 8], &[128; 8], 8, 8);
        assert!(p.iter().all(|&v| v == 128));
        let p = intra_predict(IntraMode::Dc, &[10, 10, 10, 10], &[11, 11, 11, 11], 4, 4);
        // mean 10.5 rounds up
        assert!(p.iter().all(|&v| v == 11));
    }

    #[test]
    fn hor_and_ver_replicate() {
        let p = intra_predict(IntraMode::Hor, &[10, 20, 30, 40], &[0; 4], 4, 4);
        for (y, row) in p.chunks(4).enumerate() {
            assert!(row.iter().all(|&v| v == 10 * (y as u8 + 1)));
        }
        let p = intra_predict(IntraMode::Ver, &[0; 4], &[1, 2, 3, 4], 4, 4);
        for row in p.chunks(4) {
            assert_eq!(row, &[1, 2, 3, 4]);
        }
    }

    #[test]
    fn planar_of_constants() {
        for (w, h) in [(4, 4), (8, 32), (64, 8)] {
            let p = intra_predict(IntraMode::Planar, &vec![100; h + 1], &vec![100; w + 1], w, h);
            assert!(p.iter().all(|&v| v == 100));
        }
    }

    #[test]
    fn planar_ramp() {
        // left 0, top 0, corners 64: a smooth ramp toward the bottom-right
        let mut left = vec![0u8; 9];
        let mut top = vec![0u8; 9];
        left[8] = 64;
        top[8] = 64;
        let p = intra_predict(IntraMode::Planar, &left, &top, 8, 8);
        assert_eq!(p[0], 8);
        assert!(p[63] > p[0]);
        for y in 0..8 {
            for x in 0..8 {
                // left and top samples are 0, so only the corner terms remain
                let f = (x + 1) * 64 * 8 + (y + 1) * 64 * 8;
                assert_eq!(p[y * 8 + x] as usize, (f + 64) >> 7);
            }
        }
    }

    #[test]
    fn neighbors_come_from_ctu_boundary() {
        let mut plane = PlaneBuffer::new(128, 128, 0);
        for y in 0..128 {
            for x in 0..128 {
                plane.set(x, y, ((x + 2 * y) % 251) as u8);
            }
        }
        let ctu = BlockRect::new(64, 64, 64, 64);
        let rect = BlockRect::new(80, 96, 16, 8);
        let (left, top) = ctu_neighbors(&plane, &ctu, &rect);
        assert_eq!(left.len(), 9);
        assert_eq!(top.len(), 17);
        assert_eq!(top[0], plane.get(80, 63));
        assert_eq!(left[3], plane.get(63, 99));
        let (left, top) = ctu_neighbors(&plane, &BlockRect::new(0, 0, 64, 64), &BlockRect::new(0, 0, 64, 64));
        assert!(left.iter().chain(&top).all(|&v| v == 128));
        // top-right clamps at the picture edge
        let (_, top) = ctu_neighbors(&plane, &ctu, &BlockRect::new(64, 64, 64, 64));
        assert_eq!(top[64], plane.get(127, 63));
    }
}
