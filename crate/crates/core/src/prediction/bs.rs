use crate::partition::BlockRect;

use super::MotionVector;

/// Coding information on one side of a block edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BlockInfo {
    pub intra: bool,
    pub coded: bool,
    pub mv: Option<MotionVector>,
}

/// 2 if either side is intra; 1 if either side has coded coefficients, the
/// vectors differ by 2 or more half-pel units in either axis, or the
/// reference pictures differ; else 0.
pub fn derive_bs(a: &BlockInfo, b: &BlockInfo) -> u8 {
    if a.intra || b.intra {
        return 2;
    }
    if a.coded || b.coded {
        return 1;
    }
    match (a.mv, b.mv) {
        (Some(p), Some(q)) => {
            let differs = p.ref_poc != q.ref_poc || (p.dx - q.dx).abs() >= 2 || (p.dy - q.dy).abs() >= 2;
            differs as u8
        }
        _ => 1,
    }
}

pub const BS_GRID: usize = 4;

/// Boundary strengths on the 4×4 grid. `ver[gy][gx]` is the edge on the left
/// of grid cell (gx, gy); `hor[gy][gx]` the edge above it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BsMap {
    pub cols: usize,
    pub rows: usize,
    pub ver: Vec<u8>,
    pub hor: Vec<u8>,
}

impl BsMap {
    pub fn new(width: usize, height: usize) -> Self {
        let (cols, rows) = (width / BS_GRID, height / BS_GRID);
        BsMap {
            cols,
            rows,
            ver: vec![0; cols * rows],
            hor: vec![0; cols * rows],
        }
    }

    /// Builds the map from the transform blocks of a picture. Picture
    /// borders carry no edges.
    pub fn from_blocks(width: usize, height: usize, blocks: &[(BlockRect, BlockInfo)]) -> Self {
        let mut map = BsMap::new(width, height);
        let mut owner = vec![usize::MAX; map.cols * map.rows];
        for (i, (r, _)) in blocks.iter().enumerate() {
            for gy in r.y / BS_GRID..(r.y + r.h) / BS_GRID {
                for gx in r.x / BS_GRID..(r.x + r.w) / BS_GRID {
                    owner[gy * map.cols + gx] = i;
                }
            }
        }
        for (r, info) in blocks {
            let (gx0, gy0) = (r.x / BS_GRID, r.y / BS_GRID);
            if gx0 > 0 {
                for gy in gy0..(r.y + r.h) / BS_GRID {
                    let nb = owner[gy * map.cols + gx0 - 1];
                    if nb != usize::MAX {
                        map.ver[gy * map.cols + gx0] = derive_bs(&blocks[nb].1, info);
                    }
                }
            }
            if gy0 > 0 {
                for gx in gx0..(r.x + r.w) / BS_GRID {
                    let nb = owner[(gy0 - 1) * map.cols + gx];
                    if nb != usize::MAX {
                        map.hor[gy0 * map.cols + gx] = derive_bs(&blocks[nb].1, info);
                    }
                }
            }
        }
        map
    }

    fn edge(&self, v: &[u8], gx: usize, gy: usize) -> u8 {
        if gx < self.cols && gy < self.rows {
            v[gy * self.cols + gx]
        } else {
            0
        }
    }

    /// Per-sample plane at `1 << subsample` reduction: each sample carries
    /// the strongest edge it touches.
    pub fn sample_plane(&self, subsample: u32) -> (usize, usize, Vec<u8>) {
        let (w, h) = ((self.cols * BS_GRID) >> subsample, (self.rows * BS_GRID) >> subsample);
        let grid = BS_GRID >> subsample;
        let mut out = vec![0u8; w * h];
        for y in 0..h {
            for x in 0..w {
                let (gx, gy) = (x / grid, y / grid);
                let mut v = 0;
                if x % grid == 0 {
                    v = v.max(self.edge(&self.ver, gx, gy));
                }
                if x % grid == grid - 1 {
                    v = v.max(self.edge(&self.ver, gx + 1, gy));
                }
                if y % grid == 0 {
                    v = v.max(self.edge(&self.hor, gx, gy));
                }
                if y % grid == grid - 1 {
                    v = v.max(self.edge(&self.hor, gx, gy + 1));
                }
                out[y * w + x] = v;
            }
        }
        (w, h, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inter(dx: i32, dy: i32, coded: bool) -> BlockInfo {
        BlockInfo {
            intra: false,
            coded,
            mv: Some(MotionVector::new(dx, dy, 0)),
        }
    }

    const INTRA: BlockInfo = BlockInfo {
        intra: true,
        coded: false,
        mv: None,
    };

    #[test]
    fn bs_rules() {
        assert_eq!(derive_bs(&INTRA, &inter(0, 0, false)), 2);
        assert_eq!(derive_bs(&inter(0, 0, false), &inter(0, 0, false)), 0);
        assert_eq!(derive_bs(&inter(0, 0, false), &inter(4, 0, false)), 1);
        assert_eq!(derive_bs(&inter(0, 0, false), &inter(1, 1, false)), 0);
        assert_eq!(derive_bs(&inter(0, 0, true), &inter(0, 0, false)), 1);
        let mut other_ref = inter(0, 0, false);
        other_ref.mv.as_mut().unwrap().ref_poc = 4;
        assert_eq!(derive_bs(&inter(0, 0, false), &other_ref), 1);
    }

    #[test]
    fn bs_is_symmetric() {
        let infos = [
            INTRA,
            inter(0, 0, false),
            inter(3, -2, false),
            inter(0, 0, true),
            inter(1, 0, false),
        ];
        for a in &infos {
            for b in &infos {
                assert_eq!(derive_bs(a, b), derive_bs(b, a));
            }
        }
    }

    #[test]
    fn map_marks_only_block_boundaries() {
        let blocks = vec![
            (BlockRect::new(0, 0, 16, 16), INTRA),
            (BlockRect::new(16, 0, 16, 16), inter(0, 0, false)),
            (BlockRect::new(0, 16, 32, 16), inter(0, 0, false)),
        ];
        let m = BsMap::from_blocks(32, 32, &blocks);
        for gy in 0..8 {
            for gx in 0..8 {
                let v = m.ver[gy * 8 + gx];
                let expect = if gx == 4 && gy < 4 { 2 } else { 0 };
                assert_eq!(v, expect, "ver {gx},{gy}");
                let hv = m.hor[gy * 8 + gx];
                let expect = if gy == 4 {
                    if gx < 4 {
                        2
                    } else {
                        0
                    }
                } else {
                    0
                };
                assert_eq!(hv, expect, "hor {gx},{gy}");
            }
        }
        let (w, h, p) = m.sample_plane(0);
        assert_eq!((w, h), (32, 32));
        assert_eq!(p[15], 2);
        assert_eq!(p[16], 2);
        assert_eq!(p[14], 0);
        assert_eq!(p[15 * 32 + 3], 2);
        assert_eq!(p[15 * 32 + 20], 0);
        let (w, _, _) = m.sample_plane(1);
        assert_eq!(w, 16);
    }
}
