use super::model::ModelWeights;
use super::net::{apply_residual, forward};
use super::tensor::TensorStack;
use crate::bitstream::{BinDecoder, BinEncoder, RateCounter, RATE_FRAC_BITS};
use crate::error::{Error, Result};
use crate::frame::PlaneBuffer;
use crate::partition::BlockRect;
use crate::prediction::BsMap;
use crate::syntax::FilterContexts;
use crate::transform::{Qp, QP_MAX};

fn check_sizes(planes: &[&PlaneBuffer]) -> Result<(usize, usize)> {
    let (w, h) = (planes[0].width(), planes[0].height());
    if planes.iter().any(|p| p.width() != w || p.height() != h) {
        return Err(Error::invalid("filter input planes differ in size"));
    }
    Ok((w, h))
}

/// 1 on the outermost rows and columns of every leaf, scaled down by
/// `1 << subsample`.
pub fn partition_mask(leaves: &[BlockRect], w: usize, h: usize, subsample: u32) -> Vec<f32> {
    let mut m = vec![0.0f32; w * h];
    for r in leaves {
        let (x0, y0) = (r.x >> subsample, r.y >> subsample);
        let (x1, y1) = (((r.x + r.w) >> subsample).min(w), ((r.y + r.h) >> subsample).min(h));
        for y in y0..y1 {
            for x in x0..x1 {
                if y == y0 || y == y1 - 1 || x == x0 || x == x1 - 1 {
                    m[y * w + x] = 1.0;
                }
            }
        }
    }
    m
}

fn bs_plane(bs: &BsMap, subsample: u32, w: usize, h: usize) -> Result<Vec<f32>> {
    let (bw, bh, v) = bs.sample_plane(subsample);
    if bw < w || bh < h {
        return Err(Error::invalid("boundary strength map smaller than the planes"));
    }
    Ok((0..h)
        .flat_map(|y| v[y * bw..y * bw + w].iter().map(|&s| s as f32 / 2.0))
        .collect())
}

fn normalized(p: &PlaneBuffer) -> impl Iterator<Item = f32> + '_ {
    p.data().iter().map(|&v| v as f32 / 255.0)
}

/// Luma model inputs: recon, pred, bs, qp and, when `leaves` is given
/// (intra slices), the partition mask.
pub fn build_luma_inputs(
    recon: &PlaneBuffer,
    pred: &PlaneBuffer,
    bs: &BsMap,
    qp: Qp,
    leaves: Option<&[BlockRect]>,
) -> Result<TensorStack> {
    let (w, h) = check_sizes(&[recon, pred])?;
    let mut v: Vec<f32> = normalized(recon).chain(normalized(pred)).collect();
    v.extend(bs_plane(bs, 0, w, h)?);
    v.extend(std::iter::repeat_n(qp.value() as f32 / QP_MAX as f32, w * h));
    let mut ch = 4;
    if let Some(leaves) = leaves {
        v.extend(partition_mask(leaves, w, h, 0));
        ch += 1;
    }
    TensorStack::from_vec(ch, h, w, v)
}

/// Chroma model inputs at chroma resolution: recon U and V, pred U and V,
/// bs, qp, the intra partition mask and the 2x2-averaged luma recon.
pub fn build_chroma_inputs(
    recon: [&PlaneBuffer; 2],
    pred: [&PlaneBuffer; 2],
    bs: &BsMap,
    qp: Qp,
    leaves: Option<&[BlockRect]>,
    luma: &PlaneBuffer,
) -> Result<TensorStack> {
    let (w, h) = check_sizes(&[recon[0], recon[1], pred[0], pred[1]])?;
    if luma.width() != 2 * w || luma.height() != 2 * h {
        return Err(Error::invalid("luma plane is not twice the chroma size"));
    }
    let mut v: Vec<f32> = normalized(recon[0])
        .chain(normalized(recon[1]))
        .chain(normalized(pred[0]))
        .chain(normalized(pred[1]))
        .collect();
    v.extend(bs_plane(bs, 1, w, h)?);
    v.extend(std::iter::repeat_n(qp.value() as f32 / QP_MAX as f32, w * h));
    let mut ch = 7;
    if let Some(leaves) = leaves {
        v.extend(partition_mask(leaves, w, h, 1));
        ch += 1;
    }
    for y in 0..h {
        for x in 0..w {
            let s: u32 = [(0, 0), (1, 0), (0, 1), (1, 1)]
                .iter()
                .map(|&(a, b)| luma.get(2 * x + a, 2 * y + b) as u32)
                .sum();
            v.push(((s + 2) / 4) as f32 / 255.0);
        }
    }
    TensorStack::from_vec(ch, h, w, v)
}

/// Whole-plane filtered versions of `recon`, one per model output.
pub fn filter_planes(model: &ModelWeights, inputs: &TensorStack, recon: &[&PlaneBuffer]) -> Result<Vec<PlaneBuffer>> {
    if recon.len() != model.kind.output_channels() {
        return Err(Error::invalid("plane count does not match the model outputs"));
    }
    let out = forward(model, inputs)?;
    recon
        .iter()
        .enumerate()
        .map(|(c, p)| PlaneBuffer::from_vec(p.width(), p.height(), apply_residual(p.data(), out.channel(c))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterDecision {
    pub enabled: bool,
    pub model: usize,
    /// One flag per CTU in raster order; empty when disabled.
    pub ctu_flags: Vec<bool>,
}

impl FilterDecision {
    pub fn off() -> Self {
        FilterDecision {
            enabled: false,
            model: 0,
            ctu_flags: Vec::new(),
        }
    }
}

/// Enable bin, model index as truncated unary bypass bins, then one
/// context-coded flag per CTU.
pub fn write_filter_decision<E: BinEncoder>(
    enc: &mut E,
    ctx: &mut FilterContexts,
    d: &FilterDecision,
    num_models: usize,
) {
    enc.encode_bin(&mut ctx.enable, d.enabled);
    if !d.enabled {
        return;
    }
    debug_assert!(d.model < num_models);
    for i in 0..num_models.saturating_sub(1) {
        let more = d.model > i;
        enc.encode_bypass(more);
        if !more {
            break;
        }
    }
    for &f in &d.ctu_flags {
        enc.encode_bin(&mut ctx.ctu, f);
    }
}

pub fn read_filter_decision<D: BinDecoder>(
    dec: &mut D,
    ctx: &mut FilterContexts,
    num_ctus: usize,
    num_models: usize,
) -> Result<FilterDecision> {
    if !dec.decode_bin(&mut ctx.enable)? {
        return Ok(FilterDecision::off());
    }
    if num_models == 0 {
        return Err(Error::bitstream(dec.byte_offset(), "filter enabled without models"));
    }
    let mut model = 0;
    while model + 1 < num_models && dec.decode_bypass()? {
        model += 1;
    }
    let ctu_flags = (0..num_ctus)
        .map(|_| dec.decode_bin(&mut ctx.ctu))
        .collect::<Result<_>>()?;
    Ok(FilterDecision {
        enabled: true,
        model,
        ctu_flags,
    })
}

/// CTU rectangles of a `w` x `h` plane in raster order.
pub fn ctu_rects(w: usize, h: usize, ctu: usize) -> Vec<BlockRect> {
    let mut out = Vec::new();
    for y in (0..h).step_by(ctu) {
        for x in (0..w).step_by(ctu) {
            out.push(BlockRect::new(x, y, ctu.min(w - x), ctu.min(h - y)));
        }
    }
    out
}

fn region_sse(a: &[&PlaneBuffer], b: &[&PlaneBuffer], r: &BlockRect) -> u64 {
    a.iter().zip(b).map(|(p, q)| p.sse_region(q, r.x, r.y, r.w, r.h)).sum()
}

fn merge(recon: &[&PlaneBuffer], filtered: &[PlaneBuffer], rects: &[BlockRect], flags: &[bool]) -> Vec<PlaneBuffer> {
    let mut out: Vec<PlaneBuffer> = recon.iter().map(|p| (*p).clone()).collect();
    for (r, _) in rects.iter().zip(flags).filter(|(_, &f)| f) {
        for (o, f) in out.iter_mut().zip(filtered) {
            o.write_block(r.x, r.y, r.w, r.h, &f.read_block(r.x, r.y, r.w, r.h));
        }
    }
    out
}

/// Decoder side: the planes a parsed decision produces.
pub fn apply_decision(
    recon: &[&PlaneBuffer],
    inputs: &TensorStack,
    models: &[&ModelWeights],
    d: &FilterDecision,
    ctu: usize,
) -> Result<Vec<PlaneBuffer>> {
    if !d.enabled || !d.ctu_flags.iter().any(|&f| f) {
        return Ok(recon.iter().map(|p| (*p).clone()).collect());
    }
    let model = models
        .get(d.model)
        .ok_or_else(|| Error::invalid("filter model index out of range"))?;
    let rects = ctu_rects(recon[0].width(), recon[0].height(), ctu);
    if rects.len() != d.ctu_flags.len() {
        return Err(Error::invalid("filter flag count does not match the CTU grid"));
    }
    let filtered = filter_planes(model, inputs, recon)?;
    Ok(merge(recon, &filtered, &rects, &d.ctu_flags))
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub decision: FilterDecision,
    pub planes: Vec<PlaneBuffer>,
    /// Distortion and signaling rate (1/65536 bit units) of the decision.
    pub sse: u64,
    pub rate: u64,
}

/// Tries every model: CTUs take the filtered samples when that lowers their
/// SSE against `orig`. The slice decision minimizes SSE + lambda * bits over
/// off and each model, ties going to the earlier candidate.
pub fn select_filtering(
    recon: &[&PlaneBuffer],
    orig: &[&PlaneBuffer],
    inputs: &TensorStack,
    models: &[&ModelWeights],
    lambda: f64,
    ctu: usize,
    ctx: &FilterContexts,
) -> Result<Selection> {
    let rects = ctu_rects(recon[0].width(), recon[0].height(), ctu);
    let rate_of = |d: &FilterDecision| {
        let mut rc = RateCounter::new();
        write_filter_decision(&mut rc, &mut ctx.clone(), d, models.len());
        rc.fixed_bits()
    };
    let cost = |sse: u64, rate: u64| sse as f64 + lambda * rate as f64 / (1u64 << RATE_FRAC_BITS) as f64;
    let off = FilterDecision::off();
    let base_sse: Vec<u64> = rects.iter().map(|r| region_sse(recon, orig, r)).collect();
    let mut best = Selection {
        rate: rate_of(&off),
        decision: off,
        planes: Vec::new(),
        sse: base_sse.iter().sum(),
    };
    let mut best_filtered = None;
    for (m, model) in models.iter().enumerate() {
        let filtered = filter_planes(model, inputs, recon)?;
        let refs: Vec<&PlaneBuffer> = filtered.iter().collect();
        let mut flags = Vec::with_capacity(rects.len());
        let mut sse = 0;
        for (r, &b) in rects.iter().zip(&base_sse) {
            let f = region_sse(&refs, orig, r);
            flags.push(f < b);
            sse += f.min(b);
        }
        let d = FilterDecision {
            enabled: true,
            model: m,
            ctu_flags: flags,
        };
        let rate = rate_of(&d);
        if cost(sse, rate) < cost(best.sse, best.rate) {
            best = Selection {
                decision: d,
                planes: Vec::new(),
                sse,
                rate,
            };
            best_filtered = Some(filtered);
        }
    }
    best.planes = match best_filtered {
        Some(f) => merge(recon, &f, &rects, &best.decision.ctu_flags),
        None => recon.iter().map(|p| (*p).clone()).collect(),
    };
    Ok(best)
}
