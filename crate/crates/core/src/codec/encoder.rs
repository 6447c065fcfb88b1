use std::collections::BTreeMap;

use log::debug;
use md5::{Digest, Md5};

use super::container::{write_container, ModelRef, PictureHeader, SequenceHeader, Tools};
use super::gop::{gop_plan, is_hierarchical, GopType, PicturePlan, MAX_LAYER};
use super::picture::{half, model_kind, DecodedPicture, LeafLevels, PictureBuilder, CHROMA_QP_OFFSET};
use crate::bim::{picture_deltas, BimConfig, QpOffsetMap};
use crate::bitstream::{ArithEncoder, BitSink};
use crate::error::{Error, Result};
use crate::frame::{psnr_from_sse, FrameBuffer, PlaneBuffer};
use crate::nnlf::{ctu_rects, select_filtering, write_filter_decision, ModelBank, ModelKind, ModelWeights, TrainPair};
use crate::partition::{write_tree_with, ModeSet, TreeRules, CTU_SIZE, DEFAULT_MAX_DEPTH};
use crate::prediction::DEFAULT_SEARCH_RANGE;
use crate::rdo::{choose_partition, dead_zone, lambda_from_qp, rd_residual, Lambda, RefPicture, SearchParams};
use crate::syntax::{write_pred, write_qp_delta, PredInfo, SyntaxContexts};
use crate::transform::{code_residual, Qp};

/// Luma leaves are never smaller than this, so chroma blocks are at least 4x4.
pub const MIN_LUMA_BLOCK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub qp: Qp,
    pub gop: GopType,
    pub tools: Tools,
    pub max_depth: u32,
    pub search_range: i32,
    pub bim: BimConfig,
}

impl EncoderConfig {
    pub fn new(qp: Qp, gop: GopType, tools: Tools) -> Self {
        EncoderConfig {
            qp,
            gop,
            tools,
            max_depth: DEFAULT_MAX_DEPTH,
            search_range: DEFAULT_SEARCH_RANGE,
            bim: BimConfig::default(),
        }
    }
}

pub fn tree_rules(tools: Tools, max_depth: u32) -> TreeRules {
    let modes = if tools.uqt { ModeSet::ALL } else { ModeSet::QT_BT };
    TreeRules::new(MIN_LUMA_BLOCK, max_depth, modes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PictureStats {
    pub poc: u32,
    pub layer: u8,
    pub qp: i32,
    pub qp_effective_mean: f64,
    /// Payload size in bits, excluding the 4-byte length prefix.
    pub bits: u64,
    pub sse: [u64; 3],
    pub psnr: [f64; 3],
    /// Luma SSE plus lambda times the payload bits.
    pub rd_cost: f64,
    /// MD5 of the reconstruction in planar 4:2:0 layout.
    pub md5: String,
}

#[derive(Debug, Clone)]
pub struct EncodeOutput {
    pub bytes: Vec<u8>,
    /// Per picture, in coding order.
    pub stats: Vec<PictureStats>,
    /// Reconstructions in display order.
    pub recon: Vec<FrameBuffer>,
}

pub fn frame_md5(f: &FrameBuffer) -> String {
    hex::encode(Md5::digest(f.to_i420()))
}

/// Filter models in signaling order for the stream header.
pub fn model_refs(bank: &ModelBank) -> Vec<ModelRef> {
    bank.entries()
        .map(|e| ModelRef {
            band: e.band,
            kind: e.model.kind,
            sha256: e.sha256,
        })
        .collect()
}

/// Models of one kind listed in `header`, resolved in `bank`.
pub fn resolve_models<'b>(
    header: &SequenceHeader,
    bank: Option<&'b ModelBank>,
    inter: bool,
    chroma: bool,
) -> Result<Vec<&'b ModelWeights>> {
    header
        .models_of(model_kind(inter, chroma))
        .into_iter()
        .map(|m| {
            bank.and_then(|b| b.find_hash(&m.sha256))
                .map(|e| &e.model)
                .ok_or_else(|| Error::MissingWeights {
                    hash: hex::encode(m.sha256),
                })
        })
        .collect()
}

struct Encoder<'a> {
    cfg: &'a EncoderConfig,
    frames: &'a [FrameBuffer],
    header: SequenceHeader,
    bank: Option<&'a ModelBank>,
    rules: TreeRules,
    bim_layers: u8,
}

impl Encoder<'_> {
    fn bim_deltas(&self, plan: &PicturePlan, qp: Qp) -> Result<Option<QpOffsetMap>> {
        if !self.cfg.tools.bim || plan.layer >= self.bim_layers {
            return Ok(None);
        }
        let poc = plan.poc as usize;
        let end = (poc + 3).min(self.frames.len());
        let window: Vec<&PlaneBuffer> = self.frames[poc..end].iter().map(|f| &f.y).collect();
        picture_deltas(&window, 0, CTU_SIZE, qp, &self.cfg.bim).map(Some)
    }

    fn encode_picture(
        &self,
        plan: &PicturePlan,
        dpb: &BTreeMap<u32, DecodedPicture>,
        tap: &mut Option<&mut TrainingTap>,
    ) -> Result<(Vec<u8>, DecodedPicture, PictureStats)> {
        let orig = &self.frames[plan.poc as usize];
        let (w, h) = (orig.width(), orig.height());
        let slice = plan.slice_type();
        let pic_qp = self.cfg.qp.offset(plan.qp_offset);
        let lambda = Lambda::from_f64(lambda_from_qp(pic_qp, slice));
        let deltas = self.bim_deltas(plan, pic_qp)?;
        let refs: Vec<&DecodedPicture> = plan.refs.iter().map(|p| &dpb[p]).collect();
        let ref_pics: Vec<RefPicture> = refs.iter().map(|d| d.as_ref_picture()).collect();

        let mut sink = BitSink::new();
        PictureHeader {
            poc: plan.poc,
            slice,
            qp: pic_qp.value() as u8,
            bim: deltas.is_some(),
            refs: plan.refs.clone(),
        }
        .write(&mut sink);
        let mut payload = sink.into_bytes();

        let mut enc = ArithEncoder::new();
        let mut ctx = SyntaxContexts::default();
        let mut builder = PictureBuilder::new(w, h);
        let mut qp_sum = 0i64;
        let ctus = ctu_rects(w, h, CTU_SIZE);
        for (ci, ctu) in ctus.iter().enumerate() {
            let delta = deltas.as_ref().map_or(0, |d| d.deltas[ci]);
            if deltas.is_some() {
                write_qp_delta(&mut enc, &mut ctx, delta);
            }
            let qp = pic_qp.offset(delta);
            qp_sum += qp.value() as i64;
            let params = SearchParams {
                qp,
                lambda,
                slice,
                rules: self.rules,
                mode_set: self.rules.modes,
                search_range: self.cfg.search_range,
            };
            let decision = choose_partition(ctu, &orig.y, &builder.recon[0], &ref_pics, params, &ctx);
            let cqp = qp.offset(CHROMA_QP_OFFSET);
            let mut part = std::mem::take(&mut ctx.part);
            let mut next = 0;
            let mut failure = None;
            write_tree_with(&decision.tree, &mut enc, &mut part, &self.rules, &mut |rect, e| {
                let leaf = &decision.leaves[next];
                next += 1;
                debug_assert_eq!(leaf.rect, *rect);
                let mvp = match leaf.pred {
                    PredInfo::Inter { ref_idx, .. } => ref_pics[ref_idx].motion.predictor(rect.x, rect.y),
                    _ => (0, 0),
                };
                write_pred(e, &mut ctx, ref_pics.len(), &leaf.pred, mvp);
                code_residual(e, &mut ctx.luma, &leaf.levels);
                let cpred = builder.chroma_pred(rect, ctu, &leaf.pred, &refs);
                let cr = half(rect);
                let mut chroma = Vec::with_capacity(2);
                for (plane, p) in [&orig.u, &orig.v].into_iter().zip(&cpred) {
                    let src = plane.read_block(cr.x, cr.y, cr.w, cr.h);
                    let (levels, _, _) =
                        rd_residual(&src, p, cr.w, cr.h, cqp, dead_zone(&leaf.pred), lambda, &ctx.chroma);
                    code_residual(e, &mut ctx.chroma, &levels);
                    chroma.push(levels);
                }
                let v = chroma.pop().unwrap();
                let u = chroma.pop().unwrap();
                debug_assert_eq!(builder.luma_pred(rect, ctu, &leaf.pred, &refs), leaf.pred_samples);
                let levels = LeafLevels {
                    luma: leaf.levels.clone(),
                    u,
                    v,
                };
                if let Err(err) = builder.place_leaf(rect, &leaf.pred, &leaf.pred_samples, &cpred, &levels, qp) {
                    failure.get_or_insert(err);
                }
            });
            ctx.part = part;
            if let Some(err) = failure {
                return Err(err);
            }
        }

        if let Some(tap) = tap {
            let inter = slice.is_inter();
            let (li, chi) = builder.filter_inputs(inter, pic_qp)?;
            tap(
                model_kind(inter, false),
                pic_qp,
                TrainPair {
                    inputs: li,
                    target: normalized(&[&orig.y]),
                },
            );
            tap(
                model_kind(inter, true),
                pic_qp,
                TrainPair {
                    inputs: chi,
                    target: normalized(&[&orig.u, &orig.v]),
                },
            );
        }
        let filtered = if self.cfg.tools.nnlf {
            let inter = slice.is_inter();
            let (li, chi) = builder.filter_inputs(inter, pic_qp)?;
            let lm = resolve_models(&self.header, self.bank, inter, false)?;
            let cm = resolve_models(&self.header, self.bank, inter, true)?;
            let lam = lambda.value();
            let ys = select_filtering(&[&builder.recon[0]], &[&orig.y], &li, &lm, lam, CTU_SIZE, &ctx.nn_luma)?;
            write_filter_decision(&mut enc, &mut ctx.nn_luma, &ys.decision, lm.len());
            let cs = select_filtering(
                &[&builder.recon[1], &builder.recon[2]],
                &[&orig.u, &orig.v],
                &chi,
                &cm,
                lam,
                CTU_SIZE / 2,
                &ctx.nn_chroma,
            )?;
            write_filter_decision(&mut enc, &mut ctx.nn_chroma, &cs.decision, cm.len());
            debug!(
                "poc {} filter luma {:?} chroma {:?}",
                plan.poc,
                ys.decision.enabled.then_some(ys.decision.model),
                cs.decision.enabled.then_some(cs.decision.model)
            );
            let [y] = <[PlaneBuffer; 1]>::try_from(ys.planes).unwrap();
            let [u, v] = <[PlaneBuffer; 2]>::try_from(cs.planes).unwrap();
            Some([y, u, v])
        } else {
            None
        };
        payload.extend(enc.finish());
        let pic = builder.finish(plan.poc, filtered)?;

        let sse = [0, 1, 2].map(|c| orig.plane(c).sse(pic.frame.plane(c)).unwrap());
        let psnr = [0, 1, 2].map(|c| psnr_from_sse(sse[c], orig.plane(c).data().len()));
        let bits = payload.len() as u64 * 8;
        let stats = PictureStats {
            poc: plan.poc,
            layer: plan.layer,
            qp: pic_qp.value(),
            qp_effective_mean: qp_sum as f64 / ctus.len() as f64,
            bits,
            sse,
            psnr,
            rd_cost: sse[0] as f64 + lambda.value() * bits as f64,
            md5: frame_md5(&pic.frame),
        };
        Ok((payload, pic, stats))
    }
}

/// Receives the filter inputs and normalized source planes of every coded
/// picture.
pub type TrainingTap<'t> = dyn FnMut(ModelKind, Qp, TrainPair) + 't;

fn normalized(planes: &[&PlaneBuffer]) -> Vec<f32> {
    planes
        .iter()
        .flat_map(|p| p.data().iter().map(|&v| v as f32 / 255.0))
        .collect()
}

pub fn check_frames(frames: &[FrameBuffer]) -> Result<(usize, usize)> {
    let first = frames.first().ok_or_else(|| Error::invalid("no frames to encode"))?;
    let (w, h) = (first.width(), first.height());
    if w % CTU_SIZE != 0 || h % CTU_SIZE != 0 || w > u16::MAX as usize || h > u16::MAX as usize {
        return Err(Error::invalid(format!(
            "frame size {w}x{h} must be a multiple of {CTU_SIZE} and below 65536"
        )));
    }
    if frames.iter().any(|f| f.width() != w || f.height() != h) {
        return Err(Error::invalid("frames differ in size"));
    }
    Ok((w, h))
}

/// Encodes `frames` (display order). `bank` supplies the filter models and
/// is required when the filter tool is on.
pub fn encode_sequence(frames: &[FrameBuffer], cfg: &EncoderConfig, bank: Option<&ModelBank>) -> Result<EncodeOutput> {
    encode_with_tap(frames, cfg, bank, None)
}

/// Encodes with the filter tool off and returns the training pairs of
/// every picture with its kind and QP.
pub fn collect_training_pairs(frames: &[FrameBuffer], cfg: &EncoderConfig) -> Result<Vec<(ModelKind, Qp, TrainPair)>> {
    let cfg = EncoderConfig {
        tools: Tools {
            nnlf: false,
            ..cfg.tools
        },
        ..cfg.clone()
    };
    let mut pairs = Vec::new();
    encode_with_tap(frames, &cfg, None, Some(&mut |k, q, p| pairs.push((k, q, p))))?;
    Ok(pairs)
}

fn encode_with_tap(
    frames: &[FrameBuffer],
    cfg: &EncoderConfig,
    bank: Option<&ModelBank>,
    mut tap: Option<&mut TrainingTap>,
) -> Result<EncodeOutput> {
    let (w, h) = check_frames(frames)?;
    if cfg.max_depth > 8 {
        return Err(Error::invalid("max_depth must be at most 8"));
    }
    if cfg.search_range < 1 {
        return Err(Error::invalid("search range must be positive"));
    }
    crate::bim::check_thresholds(&cfg.bim.thresholds)?;
    let models = match (cfg.tools.nnlf, bank) {
        (false, _) => Vec::new(),
        (true, Some(b)) if !b.is_empty() => model_refs(b),
        (true, _) => return Err(Error::invalid("the filter tool needs a model bank")),
    };
    let header = SequenceHeader {
        width: w as u16,
        height: h as u16,
        frame_count: frames.len() as u32,
        base_qp: cfg.qp.value() as u8,
        gop: cfg.gop,
        tools: cfg.tools,
        max_depth: cfg.max_depth as u8,
        models,
    };
    let plan = gop_plan(cfg.gop, frames.len() as u32);
    let bim_layers = if is_hierarchical(&plan) {
        plan.iter().map(|p| p.layer).max().unwrap_or(0).min(MAX_LAYER)
    } else {
        1
    };
    let frames: Vec<FrameBuffer> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| FrameBuffer {
            poc: i as u32,
            ..f.clone()
        })
        .collect();
    let enc = Encoder {
        cfg,
        frames: &frames,
        header: header.clone(),
        bank,
        rules: tree_rules(cfg.tools, cfg.max_depth),
        bim_layers,
    };
    let mut dpb = BTreeMap::new();
    let mut payloads = Vec::with_capacity(plan.len());
    let mut stats = Vec::with_capacity(plan.len());
    for p in &plan {
        let (payload, pic, st) = enc.encode_picture(p, &dpb, &mut tap)?;
        debug!(
            "poc {} layer {} qp {} bits {} psnr_y {:.2}",
            st.poc, st.layer, st.qp, st.bits, st.psnr[0]
        );
        payloads.push(payload);
        stats.push(st);
        dpb.insert(p.poc, pic);
    }
    let recon = dpb.into_values().map(|p| p.frame).collect();
    Ok(EncodeOutput {
        bytes: write_container(&header, &payloads),
        stats,
        recon,
    })
}
