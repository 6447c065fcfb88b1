//! Convolutional in-loop filter.
//!
//! A small residual CNN predicts a correction for the reconstruction from
//! the reconstruction itself, the prediction signal, boundary strengths, the
//! slice QP and, in intra slices, a map of partition boundaries. The encoder
//! picks one of three models per slice (or none) and switches the result on
//! or off per CTU.
//!
//! Inference runs in `f32` with a fixed summation order, so encoder and
//! decoder produce the same samples. Training runs in `f64`.

mod bank;
mod model;
mod net;
mod select;
mod tensor;
mod train;

pub use bank::{qp_band, BankEntry, ModelBank, QP_BANDS};
pub use model::{
    load_weights, save_weights, Architecture, Layer, ModelKind, ModelWeights, WEIGHTS_MAGIC, WEIGHTS_VERSION,
};
pub use net::{apply_residual, backward, forward, forward_trace, residual_loss, Trace};
pub use select::{
    apply_decision, build_chroma_inputs, build_luma_inputs, ctu_rects, filter_planes, partition_mask,
    read_filter_decision, select_filtering, write_filter_decision, FilterDecision, Selection,
};
pub use tensor::TensorStack;
pub use train::{train, TrainConfig, TrainOutcome, TrainPair, MOMENTUM};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitstream::{ArithDecoder, ArithEncoder};
    use crate::error::Error;
    use crate::frame::PlaneBuffer;
    use crate::partition::BlockRect;
    use crate::prediction::BsMap;
    use crate::syntax::FilterContexts;
    use crate::transform::Qp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_plane(rng: &mut impl Rng, w: usize, h: usize) -> PlaneBuffer {
        PlaneBuffer::from_vec(w, h, (0..w * h).map(|_| rng.gen()).collect()).unwrap()
    }

    fn random_model(rng: &mut impl Rng, kind: ModelKind, arch: Architecture, scale: f32) -> ModelWeights {
        let mut m = ModelWeights::standard(kind, arch);
        for p in m.params_mut() {
            *p = rng.gen_range(-scale..scale);
        }
        m
    }

    fn random_stack(rng: &mut impl Rng, c: usize, h: usize, w: usize) -> TensorStack {
        TensorStack::from_vec(c, h, w, (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct nested-loop convolution with zero padding.
    fn naive_conv(x: &[Vec<Vec<f64>>], w: &[f32], b: &[f32], out_ch: usize, k: usize) -> Vec<Vec<Vec<f64>>> {
        let (c, h, wd) = (x.len(), x[0].len(), x[0][0].len());
        let r = (k / 2) as isize;
        let mut out = vec![vec![vec![0.0; wd]; h]; out_ch];
        for o in 0..out_ch {
            for y in 0..h {
                for xx in 0..wd {
                    let mut acc = b[o] as f64;
                    for i in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let sy = y as isize + ky as isize - r;
                                let sx = xx as isize + kx as isize - r;
                                if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < wd {
                                    acc += w[((o * c + i) * k + ky) * k + kx] as f64 * x[i][sy as usize][sx as usize];
                                }
                            }
                        }
                    }
                    out[o][y][xx] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn zero_network_leaves_recon_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let recon = random_plane(&mut rng, 32, 16);
        let pred = random_plane(&mut rng, 32, 16);
        let bs = BsMap::new(32, 16);
        let inputs = build_luma_inputs(&recon, &pred, &bs, Qp::new(30).unwrap(), None).unwrap();
        let model = ModelWeights::standard(ModelKind::LUMA_INTER, Architecture::default());
        let out = filter_planes(&model, &inputs, &[&recon]).unwrap();
        assert_eq!(out[0], recon);
    }

    #[test]
    fn identity_kernel_passes_delta_through() {
        let mut m = ModelWeights {
            kind: ModelKind::LUMA_INTER,
            layers: vec![Layer::conv(4, 1, 3)],
        };
        if let Layer::Conv { weights, .. } = &mut m.layers[0] {
            weights[4] = 1.0;
        }
        let mut x = TensorStack::zeros(4, 7, 9);
        x.values_mut()[3 * 9 + 5] = 1.0;
        let y = forward(&m, &x).unwrap();
        assert_eq!(y.channel(0), x.channel(0));
    }

    #[test]
    fn inference_matches_naive_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut m = ModelWeights {
            kind: ModelKind::LUMA_INTRA,
            layers: vec![
                Layer::conv(5, 6, 3),
                Layer::Prelu {
                    ch: 6,
                    slopes: vec![0.0; 6],
                },
                Layer::conv(6, 1, 3),
            ],
        };
        for p in m.params_mut() {
            *p = rng.gen_range(-0.5..0.5);
        }
        let x = random_stack(&mut rng, 5, 11, 13);
        let got = forward(&m, &x).unwrap();
        let xs: Vec<Vec<Vec<f64>>> = (0..5)
            .map(|c| {
                (0..11)
                    .map(|y| (0..13).map(|xx| x.get(c, y, xx) as f64).collect())
                    .collect()
            })
            .collect();
        let (
            Layer::Conv {
                weights: w0, bias: b0, ..
            },
            Layer::Prelu { slopes, .. },
            Layer::Conv {
                weights: w1, bias: b1, ..
            },
        ) = (&m.layers[0], &m.layers[1], &m.layers[2])
        else {
            unreachable!()
        };
        let mut h = naive_conv(&xs, w0, b0, 6, 3);
        for (c, plane) in h.iter_mut().enumerate() {
            for v in plane.iter_mut().flatten() {
                if *v < 0.0 {
                    *v *= slopes[c] as f64;
                }
            }
        }
        let want = naive_conv(&h, w1, b1, 1, 3);
        for y in 0..11 {
            for xx in 0..13 {
                assert!((got.get(0, y, xx) as f64 - want[0][y][xx]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let m = ModelWeights::<f32>::standard(ModelKind::LUMA_INTRA, Architecture { width: 4, blocks: 1 });
        let x = TensorStack::zeros(4, 8, 8);
        assert!(matches!(forward(&m, &x), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn input_planes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (w, h) = (32, 32);
        let recon = random_plane(&mut rng, w, h);
        let pred = random_plane(&mut rng, w, h);
        let qp = Qp::new(42).unwrap();
        let leaves = [BlockRect::new(0, 0, 16, 32), BlockRect::new(16, 0, 16, 32)];
        let blocks: Vec<_> = leaves
            .iter()
            .map(|r| {
                (
                    *r,
                    crate::prediction::BlockInfo {
                        intra: true,
                        coded: true,
                        mv: None,
                    },
                )
            })
            .collect();
        let bs = BsMap::from_blocks(w, h, &blocks);
        let intra = build_luma_inputs(&recon, &pred, &bs, qp, Some(&leaves)).unwrap();
        let inter = build_luma_inputs(&recon, &pred, &BsMap::new(w, h), qp, None).unwrap();
        assert_eq!((intra.channels(), inter.channels()), (5, 4));
        assert!(intra.channel(3).iter().all(|&v| v == 42.0 / 51.0));
        assert!(inter.channel(2).iter().all(|&v| v == 0.0));
        // Only the vertical edge at x = 16 carries strength 2.
        assert_eq!(intra.get(2, 5, 16), 1.0);
        assert_eq!(intra.get(2, 5, 8), 0.0);
        assert_eq!(intra.get(4, 5, 15), 1.0);
        assert_eq!(intra.get(4, 5, 8), 0.0);
        let small = random_plane(&mut rng, 16, 32);
        assert!(build_luma_inputs(&small, &pred, &bs, qp, None).is_err());

        let u = random_plane(&mut rng, 16, 16);
        let c = build_chroma_inputs([&u, &u], [&u, &u], &bs, qp, Some(&leaves), &recon).unwrap();
        assert_eq!(c.channels(), ModelKind::CHROMA_INTRA.input_channels());
        let s: u32 = [(0, 0), (1, 0), (0, 1), (1, 1)]
            .iter()
            .map(|&(a, b)| recon.get(2 + a, 4 + b) as u32)
            .sum();
        assert_eq!(c.get(7, 2, 1), ((s + 2) / 4) as f32 / 255.0);
        let c = build_chroma_inputs([&u, &u], [&u, &u], &bs, qp, None, &recon).unwrap();
        assert_eq!(c.channels(), ModelKind::CHROMA_INTER.input_channels());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for layers in [
            vec![
                Layer::conv(4, 3, 3),
                Layer::Prelu {
                    ch: 3,
                    slopes: vec![0.2; 3],
                },
                Layer::conv(3, 1, 3),
            ],
            vec![
                Layer::conv(4, 3, 3),
                Layer::Prelu {
                    ch: 3,
                    slopes: vec![0.2; 3],
                },
                Layer::conv(3, 3, 1),
                Layer::AddSkip { ch: 3, span: 2 },
                Layer::conv(3, 1, 3),
            ],
        ] {
            let mut m = ModelWeights {
                kind: ModelKind::LUMA_INTER,
                layers,
            }
            .cast::<f64>();
            for p in m.params_mut() {
                *p = rng.gen_range(-0.6..0.6);
            }
            let x = random_stack(&mut rng, 4, 6, 7).cast::<f64>();
            let target: Vec<f64> = (0..42).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let loss = |m: &ModelWeights<f64>| residual_loss(&x, &forward(m, &x).unwrap(), &target).0;
            let trace = forward_trace(&m, &x).unwrap();
            let (_, g) = residual_loss(&x, trace.output(), &target);
            let analytic = backward(&m, &trace, &g).params();
            let n = m.param_count();
            let mut worst: f64 = 0.0;
            for _ in 0..10 {
                let i = rng.gen_range(0..n);
                let eps = 1e-3;
                let mut hi = m.clone();
                *hi.params_mut()[i] += eps;
                let mut lo = m.clone();
                *lo.params_mut()[i] -= eps;
                let numeric = (loss(&hi) - loss(&lo)) / (2.0 * eps);
                let rel = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-8);
                worst = worst.max(rel);
            }
            assert!(worst < 1e-3, "{worst}");
        }
    }

    fn noisy_fixture(rng: &mut impl Rng, n: usize) -> Vec<TrainPair> {
        (0..n)
            .map(|_| {
                let (w, h) = (16, 16);
                let clean: Vec<f32> = (0..w * h).map(|i| ((i % w) as f32 * 8.0 + 40.0) / 255.0).collect();
                let noisy: Vec<f32> = clean
                    .iter()
                    .map(|&c| (c + rng.gen_range(-0.08f32..0.08)).clamp(0.0, 1.0))
                    .collect();
                let mut v = noisy.clone();
                v.extend(&clean);
                v.extend(std::iter::repeat_n(0.0, w * h));
                v.extend(std::iter::repeat_n(0.6, w * h));
                TrainPair {
                    inputs: TensorStack::from_vec(4, h, w, v).unwrap(),
                    target: clean,
                }
            })
            .collect()
    }

    #[test]
    fn training_reduces_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pairs = noisy_fixture(&mut rng, 4);
        let mut init = ModelWeights::standard(ModelKind::LUMA_INTER, Architecture { width: 4, blocks: 1 });
        init.randomize(&mut rng, 1.0);
        let cfg = TrainConfig {
            steps: 200,
            step_size: 0.05,
            batch: 2,
            patch: 16,
            seed: 9,
        };
        let out = train(&init, &pairs, &cfg).unwrap();
        assert_eq!(out.losses.len(), 200);
        let tail = out.losses[190..].iter().sum::<f64>() / 10.0;
        assert!(tail < out.losses[0], "{} -> {tail}", out.losses[0]);
        let again = train(&init, &pairs, &cfg).unwrap();
        assert_eq!(again.model, out.model);
    }

    #[test]
    fn training_on_perfect_recon_stays_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut pairs = noisy_fixture(&mut rng, 2);
        for p in &mut pairs {
            p.target = p.inputs.channel(0).to_vec();
        }
        let init = ModelWeights::standard(ModelKind::LUMA_INTER, Architecture { width: 4, blocks: 1 });
        let out = train(
            &init,
            &pairs,
            &TrainConfig {
                steps: 20,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(out.losses.windows(2).all(|w| w[1] <= w[0]));
        assert!(*out.losses.last().unwrap() < 1e-12);
    }

    #[test]
    fn divergence_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pairs = noisy_fixture(&mut rng, 2);
        let mut init = ModelWeights::standard(ModelKind::LUMA_INTER, Architecture { width: 4, blocks: 1 });
        init.randomize(&mut rng, 1.0);
        let cfg = TrainConfig {
            steps: 500,
            step_size: 1e6,
            ..Default::default()
        };
        assert!(matches!(
            train(&init, &pairs, &cfg),
            Err(Error::TrainingDiverged { .. })
        ));
    }

    #[test]
    fn weight_files() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = random_model(
            &mut rng,
            ModelKind::CHROMA_INTRA,
            Architecture { width: 5, blocks: 1 },
            1.0,
        );
        assert_eq!(m.layers.len(), 7);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.nnlf");
        save_weights(&m, &path).unwrap();
        assert_eq!(load_weights(&path).unwrap(), m);
        let bytes = m.to_bytes();
        assert!(matches!(
            ModelWeights::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::MalformedWeights(_))
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            ModelWeights::from_bytes(&bad),
            Err(Error::MalformedWeights(_))
        ));
        let mut bad = bytes;
        bad[6] = 9;
        assert!(ModelWeights::from_bytes(&bad).is_err());
    }

    #[test]
    fn bank_directory_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut bank = ModelBank::new();
        for kind in ModelKind::ALL {
            for band in 0..3 {
                bank.insert(
                    band,
                    random_model(&mut rng, kind, Architecture { width: 3, blocks: 1 }, 0.1),
                )
                .unwrap();
            }
        }
        let dir = tempfile::tempdir().unwrap();
        bank.save_dir(dir.path()).unwrap();
        let loaded = ModelBank::load_dir(dir.path()).unwrap();
        assert_eq!(loaded, bank);
        assert_eq!(loaded.candidates(ModelKind::LUMA_INTER).len(), 3);
        let e = bank.get(ModelKind::CHROMA_INTER, 2).unwrap();
        assert_eq!(bank.find_hash(&e.sha256).unwrap().model, e.model);
        assert_eq!(qp_band(Qp::new(22).unwrap()), 0);
        assert_eq!(qp_band(Qp::new(33).unwrap()), 1);
        assert_eq!(qp_band(Qp::new(51).unwrap()), 2);
        assert_eq!(qp_band(Qp::new(3).unwrap()), 0);
    }

    #[test]
    fn selection_never_hurts_and_decoder_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (w, h) = (64, 128);
        let arch = Architecture { width: 4, blocks: 1 };
        let models: Vec<ModelWeights> = (0..3)
            .map(|_| random_model(&mut rng, ModelKind::LUMA_INTER, arch, 0.3))
            .collect();
        let refs: Vec<&ModelWeights> = models.iter().collect();
        for frame in 0..5 {
            let orig = random_plane(&mut rng, w, h);
            let recon = PlaneBuffer::from_vec(
                w,
                h,
                orig.data()
                    .iter()
                    .map(|&v| v.saturating_add(rng.gen_range(0..9)))
                    .collect(),
            )
            .unwrap();
            let inputs = build_luma_inputs(&recon, &orig, &BsMap::new(w, h), Qp::new(37).unwrap(), None).unwrap();
            let ctx = FilterContexts::default();
            let sel = select_filtering(&[&recon], &[&orig], &inputs, &refs, 50.0, 64, &ctx).unwrap();
            assert!(
                sel.planes[0].sse(&orig).unwrap() <= recon.sse(&orig).unwrap(),
                "frame {frame}"
            );
            assert_eq!(sel.sse, sel.planes[0].sse(&orig).unwrap());

            let mut enc = ArithEncoder::new();
            write_filter_decision(&mut enc, &mut ctx.clone(), &sel.decision, 3);
            let bytes = enc.finish();
            let mut dec = ArithDecoder::new(&bytes, 0).unwrap();
            let parsed = read_filter_decision(&mut dec, &mut ctx.clone(), 2, 3).unwrap();
            assert_eq!(parsed, sel.decision);
            let planes = apply_decision(&[&recon], &inputs, &refs, &parsed, 64).unwrap();
            assert_eq!(planes, sel.planes);
        }
    }

    #[test]
    fn zero_models_select_off_or_no_effect() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let recon = random_plane(&mut rng, 64, 64);
        let orig = random_plane(&mut rng, 64, 64);
        let zero = ModelWeights::standard(ModelKind::LUMA_INTER, Architecture { width: 2, blocks: 1 });
        let inputs = build_luma_inputs(&recon, &orig, &BsMap::new(64, 64), Qp::new(30).unwrap(), None).unwrap();
        let sel = select_filtering(
            &[&recon],
            &[&orig],
            &inputs,
            &[&zero, &zero, &zero],
            10.0,
            64,
            &FilterContexts::default(),
        )
        .unwrap();
        assert!(!sel.decision.enabled);
        assert_eq!(sel.planes[0], recon);
    }

    #[test]
    fn decision_syntax_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut enc = ArithEncoder::new();
        let mut ctx = FilterContexts::default();
        let mut written = Vec::new();
        for _ in 0..300 {
            let n = rng.gen_range(1..10);
            let d = if rng.gen_bool(0.3) {
                FilterDecision::off()
            } else {
                FilterDecision {
                    enabled: true,
                    model: rng.gen_range(0..3),
                    ctu_flags: (0..n).map(|_| rng.gen()).collect(),
                }
            };
            write_filter_decision(&mut enc, &mut ctx, &d, 3);
            written.push((n, d));
        }
        let bytes = enc.finish();
        let mut dec = ArithDecoder::new(&bytes, 0).unwrap();
        let mut dctx = FilterContexts::default();
        for (n, d) in written {
            assert_eq!(read_filter_decision(&mut dec, &mut dctx, n, 3).unwrap(), d);
        }
        dec.finish().unwrap();
    }
}
