use std::collections::{BTreeMap, HashMap};

use super::container::{parse_container, PictureHeader, SequenceHeader};
use super::encoder::{resolve_models, tree_rules};
use super::picture::{half, DecodedPicture, LeafLevels, PictureBuilder};
use crate::bitstream::{ArithDecoder, BitSource};
use crate::error::{Error, Result};
use crate::frame::{FrameBuffer, PlaneBuffer};
use crate::nnlf::{apply_decision, ctu_rects, read_filter_decision, FilterDecision, ModelBank, ModelWeights};
use crate::partition::{read_tree_with, SplitMode, CTU_SIZE};
use crate::syntax::{read_pred, read_qp_delta, PredInfo, SliceType, SyntaxContexts};
use crate::transform::{coeff_shift, parse_residual, Qp};

/// What the parser saw in one picture.
#[derive(Debug, Clone, PartialEq)]
pub struct PictureTrace {
    pub poc: u32,
    pub slice: SliceType,
    pub qp: i32,
    pub splits: HashMap<SplitMode, usize>,
    /// One per CTU when the picture carries delta QPs, otherwise empty.
    pub qp_deltas: Vec<i32>,
    pub luma_filter: Option<FilterDecision>,
    pub chroma_filter: Option<FilterDecision>,
    pub intra_leaves: usize,
    pub inter_leaves: usize,
}

#[derive(Debug, Clone)]
pub struct DecodeOutput {
    pub header: SequenceHeader,
    /// Frames in display order.
    pub frames: Vec<FrameBuffer>,
    /// Per picture, in coding order.
    pub traces: Vec<PictureTrace>,
}

struct Models<'b> {
    luma: [Vec<&'b ModelWeights>; 2],
    chroma: [Vec<&'b ModelWeights>; 2],
}

fn decode_picture(
    header: &SequenceHeader,
    data: &[u8],
    base: usize,
    dpb: &BTreeMap<u32, DecodedPicture>,
    models: Option<&Models>,
) -> Result<(DecodedPicture, PictureTrace)> {
    let mut src = BitSource::with_base(data, base);
    let ph = PictureHeader::read(&mut src)?;
    let at = base;
    if ph.poc >= header.frame_count {
        return Err(Error::bitstream(at, format!("poc {} beyond frame count", ph.poc)));
    }
    if dpb.contains_key(&ph.poc) {
        return Err(Error::bitstream(at, format!("poc {} coded twice", ph.poc)));
    }
    if ph.bim && !header.tools.bim {
        return Err(Error::bitstream(at, "delta qp present without the bim tool"));
    }
    let refs: Vec<&DecodedPicture> = ph
        .refs
        .iter()
        .map(|p| {
            dpb.get(p)
                .ok_or_else(|| Error::bitstream(at, format!("reference poc {p} not decoded")))
        })
        .collect::<Result<_>>()?;
    let ref_pics: Vec<_> = refs.iter().map(|d| d.as_ref_picture()).collect();
    let rules = tree_rules(header.tools, header.max_depth as u32);
    let pic_qp = Qp::new(ph.qp as i32)?;
    let (w, h) = (header.width as usize, header.height as usize);

    let mut dec = ArithDecoder::new(src.rest(), src.byte_offset())?;
    let mut ctx = SyntaxContexts::default();
    let mut builder = PictureBuilder::new(w, h);
    let mut trace = PictureTrace {
        poc: ph.poc,
        slice: ph.slice,
        qp: pic_qp.value(),
        splits: HashMap::new(),
        qp_deltas: Vec::new(),
        luma_filter: None,
        chroma_filter: None,
        intra_leaves: 0,
        inter_leaves: 0,
    };
    let ctus = ctu_rects(w, h, CTU_SIZE);
    for ctu in &ctus {
        let qp = if ph.bim {
            let d = read_qp_delta(&mut dec, &mut ctx)?;
            trace.qp_deltas.push(d);
            pic_qp.offset(d)
        } else {
            pic_qp
        };
        let mut part = std::mem::take(&mut ctx.part);
        let tree = read_tree_with(&mut dec, &mut part, &rules, *ctu, &mut |rect, d| {
            let pred = read_pred(d, &mut ctx, &ph.refs, |i| ref_pics[i].motion.predictor(rect.x, rect.y))?;
            let luma = parse_residual(d, &mut ctx.luma, rect.w, rect.h, coeff_shift(rect.w, rect.h))?;
            let cr = half(rect);
            let u = parse_residual(d, &mut ctx.chroma, cr.w, cr.h, coeff_shift(cr.w, cr.h))?;
            let v = parse_residual(d, &mut ctx.chroma, cr.w, cr.h, coeff_shift(cr.w, cr.h))?;
            match pred {
                PredInfo::Intra(_) => trace.intra_leaves += 1,
                PredInfo::Inter { .. } => trace.inter_leaves += 1,
            }
            let lp = builder.luma_pred(rect, ctu, &pred, &refs);
            let cp = builder.chroma_pred(rect, ctu, &pred, &refs);
            builder.place_leaf(rect, &pred, &lp, &cp, &LeafLevels { luma, u, v }, qp)
        })?;
        ctx.part = part;
        tree.count_modes(&mut trace.splits);
    }

    let filtered = match models {
        Some(m) => {
            let inter = ph.slice.is_inter() as usize;
            let (li, chi) = builder.filter_inputs(inter == 1, pic_qp)?;
            let ld = read_filter_decision(&mut dec, &mut ctx.nn_luma, ctus.len(), m.luma[inter].len())?;
            let cd = read_filter_decision(&mut dec, &mut ctx.nn_chroma, ctus.len(), m.chroma[inter].len())?;
            let y = apply_decision(&[&builder.recon[0]], &li, &m.luma[inter], &ld, CTU_SIZE)?;
            let uv = apply_decision(
                &[&builder.recon[1], &builder.recon[2]],
                &chi,
                &m.chroma[inter],
                &cd,
                CTU_SIZE / 2,
            )?;
            trace.luma_filter = Some(ld);
            trace.chroma_filter = Some(cd);
            let [y] = <[PlaneBuffer; 1]>::try_from(y).unwrap();
            let [u, v] = <[PlaneBuffer; 2]>::try_from(uv).unwrap();
            Some([y, u, v])
        }
        None => None,
    };
    dec.finish()?;
    Ok((builder.finish(ph.poc, filtered)?, trace))
}

/// Decodes a complete stream. `bank` must hold every filter model the
/// stream header lists.
pub fn decode_sequence(bytes: &[u8], bank: Option<&ModelBank>) -> Result<DecodeOutput> {
    let (header, pictures) = parse_container(bytes)?;
    let models = if header.tools.nnlf {
        let kinds = |chroma| -> Result<[Vec<&ModelWeights>; 2]> {
            Ok([
                resolve_models(&header, bank, false, chroma)?,
                resolve_models(&header, bank, true, chroma)?,
            ])
        };
        Some(Models {
            luma: kinds(false)?,
            chroma: kinds(true)?,
        })
    } else {
        None
    };
    if pictures.len() != header.frame_count as usize {
        return Err(Error::bitstream(
            bytes.len(),
            format!(
                "stream holds {} pictures, header says {}",
                pictures.len(),
                header.frame_count
            ),
        ));
    }
    let mut dpb = BTreeMap::new();
    let mut traces = Vec::with_capacity(pictures.len());
    for (offset, data) in pictures {
        let (pic, trace) = decode_picture(&header, data, offset, &dpb, models.as_ref())?;
        dpb.insert(pic.poc(), pic);
        traces.push(trace);
    }
    Ok(DecodeOutput {
        header,
        frames: dpb.into_values().map(|p| p.frame).collect(),
        traces,
    })
}
