//! Block importance mapping.
//!
//! Each 8x8 block of a picture is motion-searched against its temporal
//! neighbors, as a motion-compensated temporal filter would do. Blocks that
//! future pictures predict well are important: their reconstruction errors
//! propagate, so they get a lower QP. Blocks no future picture can predict
//! get a higher one.

use crate::error::{Error, Result};
use crate::frame::PlaneBuffer;
use crate::transform::Qp;

pub const BIM_BLOCK: usize = 8;
pub const BIM_SEARCH_RANGE: i32 = 8;
pub const MAX_DELTA: i32 = 2;
pub const DEFAULT_THRESHOLDS: [f64; 4] = [0.25, 0.45, 0.65, 0.85];

/// Per-block SSE of the best integer motion match against one neighbor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorMap {
    pub cols: usize,
    pub rows: usize,
    pub sse: Vec<u64>,
    /// Samples per block; smaller than 64 on the right and bottom edges of
    /// pictures whose size is not a multiple of 8.
    pub area: Vec<u32>,
}

impl ErrorMap {
    pub fn get(&self, bx: usize, by: usize) -> u64 {
        self.sse[by * self.cols + bx]
    }
}

/// Errors against one neighbor; `offset` is its position relative to the
/// center picture (negative for past pictures).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborErrors {
    pub offset: isize,
    pub map: ErrorMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceMap {
    pub cols: usize,
    pub rows: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QpOffsetMap {
    pub cols: usize,
    pub rows: usize,
    pub deltas: Vec<i32>,
}

impl QpOffsetMap {
    pub fn zeros(cols: usize, rows: usize) -> Self {
        QpOffsetMap {
            cols,
            rows,
            deltas: vec![0; cols * rows],
        }
    }

    pub fn get(&self, cx: usize, cy: usize) -> i32 {
        self.deltas[cy * self.cols + cx]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BimConfig {
    /// Noise scale; `None` uses [`default_sigma`] of the picture QP.
    pub sigma: Option<f64>,
    pub thresholds: [f64; 4],
}

impl Default for BimConfig {
    fn default() -> Self {
        BimConfig {
            sigma: None,
            thresholds: DEFAULT_THRESHOLDS,
        }
    }
}

/// `2 * Qstep / 3`.
pub fn default_sigma(qp: Qp) -> f64 {
    2.0 * qp.step() / 3.0
}

fn block_sse(
    cur: &PlaneBuffer,
    reference: &PlaneBuffer,
    x: usize,
    y: usize,
    w: usize,
    h: usize,
    rx: usize,
    ry: usize,
) -> u64 {
    let mut acc = 0u64;
    for j in 0..h {
        let a = &cur.row(y + j)[x..x + w];
        let b = &reference.row(ry + j)[rx..rx + w];
        acc += a
            .iter()
            .zip(b)
            .map(|(&p, &q)| {
                let d = p as i32 - q as i32;
                (d * d) as u64
            })
            .sum::<u64>();
    }
    acc
}

/// Minimum SSE over integer displacements within `range` that keep the
/// block inside the reference.
fn best_match(cur: &PlaneBuffer, reference: &PlaneBuffer, x: usize, y: usize, w: usize, h: usize, range: i32) -> u64 {
    let (fw, fh) = (reference.width() as i64, reference.height() as i64);
    let mut best = u64::MAX;
    for dy in -range..=range {
        let ry = y as i64 + dy as i64;
        if ry < 0 || ry + h as i64 > fh {
            continue;
        }
        for dx in -range..=range {
            let rx = x as i64 + dx as i64;
            if rx < 0 || rx + w as i64 > fw {
                continue;
            }
            best = best.min(block_sse(cur, reference, x, y, w, h, rx as usize, ry as usize));
            if best == 0 {
                return 0;
            }
        }
    }
    best
}

pub fn error_map(cur: &PlaneBuffer, reference: &PlaneBuffer) -> Result<ErrorMap> {
    if !cur.same_size(reference) {
        return Err(Error::invalid("window frames differ in size"));
    }
    let cols = cur.width().div_ceil(BIM_BLOCK);
    let rows = cur.height().div_ceil(BIM_BLOCK);
    let mut sse = Vec::with_capacity(cols * rows);
    let mut area = Vec::with_capacity(cols * rows);
    for by in 0..rows {
        for bx in 0..cols {
            let (x, y) = (bx * BIM_BLOCK, by * BIM_BLOCK);
            let w = BIM_BLOCK.min(cur.width() - x);
            let h = BIM_BLOCK.min(cur.height() - y);
            sse.push(best_match(cur, reference, x, y, w, h, BIM_SEARCH_RANGE));
            area.push((w * h) as u32);
        }
    }
    Ok(ErrorMap { cols, rows, sse, area })
}

/// Motion-compensated errors of `frames[center]` against every other frame
/// of the window, in window order.
pub fn mctf_errors(frames: &[&PlaneBuffer], center: usize) -> Result<Vec<NeighborErrors>> {
    if center >= frames.len() {
        return Err(Error::invalid("center index outside the window"));
    }
    if frames.len() < 2 {
        return Err(Error::invalid("mctf needs at least one neighbor frame"));
    }
    frames
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != center)
        .map(|(i, f)| {
            Ok(NeighborErrors {
                offset: i as isize - center as isize,
                map: error_map(frames[center], f)?,
            })
        })
        .collect()
}

/// Per-CTU importance from the future-frame error maps in `errors`; past
/// entries are ignored. Fails when no future map is present.
pub fn importance_from_errors(
    errors: &[NeighborErrors],
    width: usize,
    height: usize,
    ctu_size: usize,
    sigma: f64,
) -> Result<ImportanceMap> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("sigma must be positive"));
    }
    let future: Vec<&ErrorMap> = errors.iter().filter(|e| e.offset > 0).map(|e| &e.map).collect();
    if future.is_empty() {
        return Err(Error::invalid("importance needs at least one future frame"));
    }
    let (bcols, brows) = (width.div_ceil(BIM_BLOCK), height.div_ceil(BIM_BLOCK));
    if future.iter().any(|m| m.cols != bcols || m.rows != brows) {
        return Err(Error::invalid("error map does not match the picture size"));
    }
    let cols = width.div_ceil(ctu_size);
    let rows = height.div_ceil(ctu_size);
    let per_ctu = ctu_size / BIM_BLOCK;
    let s2 = sigma * sigma;
    let mut sum = vec![0.0f64; cols * rows];
    let mut count = vec![0u32; cols * rows];
    for by in 0..brows {
        for bx in 0..bcols {
            let i = by * bcols + bx;
            let w: f64 = future
                .iter()
                .map(|m| s2 / (s2 + m.sse[i] as f64 / m.area[i] as f64))
                .sum::<f64>()
                / future.len() as f64;
            let c = (by / per_ctu) * cols + bx / per_ctu;
            sum[c] += w;
            count[c] += 1;
        }
    }
    let values = sum.iter().zip(&count).map(|(&s, &n)| s / n as f64).collect();
    Ok(ImportanceMap { cols, rows, values })
}

pub fn check_thresholds(t: &[f64; 4]) -> Result<()> {
    let inside = t.iter().all(|&v| v > 0.0 && v < 1.0);
    if !inside || t.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::invalid("bim thresholds must be strictly ascending in (0, 1)"));
    }
    Ok(())
}

/// Interval lookup: below `t[0]` is +2, at or above `t[3]` is -2.
pub fn delta_for(importance: f64, t: &[f64; 4]) -> i32 {
    MAX_DELTA - t.iter().filter(|&&c| importance >= c).count() as i32
}

pub fn delta_qp_from_importance(imp: &ImportanceMap, thresholds: &[f64; 4]) -> Result<QpOffsetMap> {
    check_thresholds(thresholds)?;
    Ok(QpOffsetMap {
        cols: imp.cols,
        rows: imp.rows,
        deltas: imp.values.iter().map(|&v| delta_for(v, thresholds)).collect(),
    })
}

/// Delta QPs for `frames[center]`. All zero when the window holds no future
/// frame.
pub fn picture_deltas(
    frames: &[&PlaneBuffer],
    center: usize,
    ctu_size: usize,
    qp: Qp,
    cfg: &BimConfig,
) -> Result<QpOffsetMap> {
    let cur = frames
        .get(center)
        .ok_or_else(|| Error::invalid("center index outside the window"))?;
    let (w, h) = (cur.width(), cur.height());
    if center + 1 >= frames.len() {
        return Ok(QpOffsetMap::zeros(w.div_ceil(ctu_size), h.div_ceil(ctu_size)));
    }
    let future: Vec<NeighborErrors> = frames[center + 1..]
        .iter()
        .enumerate()
        .map(|(i, f)| {
            Ok(NeighborErrors {
                offset: i as isize + 1,
                map: error_map(cur, f)?,
            })
        })
        .collect::<Result<_>>()?;
    let sigma = cfg.sigma.unwrap_or_else(|| default_sigma(qp));
    let imp = importance_from_errors(&future, w, h, ctu_size, sigma)?;
    delta_qp_from_importance(&imp, &cfg.thresholds)
}
