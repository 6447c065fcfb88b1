use num_traits::Float;

use super::model::{Layer, ModelWeights};
use super::tensor::TensorStack;
use crate::error::{Error, Result};

/// Per-layer inputs recorded by [`forward_trace`]; `acts[i]` feeds layer `i`
/// and the last entry is the network output.
pub struct Trace<T> {
    pub acts: Vec<TensorStack<T>>,
}

impl<T: Float> Trace<T> {
    pub fn output(&self) -> &TensorStack<T> {
        self.acts.last().expect("trace holds the input")
    }
}

/// Offsets and the valid destination span of a kernel tap along one axis.
fn tap_range(n: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d.max(0)).max(lo as isize) as usize;
    (lo, hi)
}

fn conv_forward<T: Float>(
    inp: &TensorStack<T>,
    in_ch: usize,
    out_ch: usize,
    k: usize,
    w: &[T],
    b: &[T],
) -> TensorStack<T> {
    let (h, wd) = (inp.height(), inp.width());
    let r = (k / 2) as isize;
    let mut out = TensorStack::zeros(out_ch, h, wd);
    for o in 0..out_ch {
        let plane = out.channel_mut(o);
        plane.iter_mut().for_each(|v| *v = b[o]);
        for i in 0..in_ch {
            let src = inp.channel(i);
            for ky in 0..k {
                let dy = ky as isize - r;
                let (y0, y1) = tap_range(h, dy);
                for kx in 0..k {
                    let wv = w[((o * in_ch + i) * k + ky) * k + kx];
                    if wv == T::zero() {
                        continue;
                    }
                    let dx = kx as isize - r;
                    let (x0, x1) = tap_range(wd, dx);
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let dst = &mut plane[y * wd + x0..y * wd + x1];
                        let s0 = (sy * wd + x0) as isize + dx;
                        let s = &src[s0 as usize..s0 as usize + (x1 - x0)];
                        for (d, &v) in dst.iter_mut().zip(s) {
                            *d = *d + wv * v;
                        }
                    }
                }
            }
        }
    }
    out
}

fn check_input<T: Float>(model: &ModelWeights<T>, input: &TensorStack<T>) -> Result<()> {
    let want = model.layers.first().map(|l| l.in_channels()).unwrap_or(0);
    if input.channels() != want {
        return Err(Error::invalid(format!(
            "model takes {want} input planes, stack has {}",
            input.channels()
        )));
    }
    Ok(())
}

/// Runs the network keeping every intermediate activation.
pub fn forward_trace<T: Float>(model: &ModelWeights<T>, input: &TensorStack<T>) -> Result<Trace<T>> {
    check_input(model, input)?;
    let mut acts = vec![input.clone()];
    for (i, layer) in model.layers.iter().enumerate() {
        let x = &acts[i];
        let y = match layer {
            Layer::Conv {
                in_ch,
                out_ch,
                k,
                weights,
                bias,
            } => conv_forward(x, *in_ch, *out_ch, *k, weights, bias),
            Layer::Prelu { ch, slopes } => {
                let mut y = x.clone();
                for c in 0..*ch {
                    let a = slopes[c];
                    for v in y.channel_mut(c) {
                        if *v < T::zero() {
                            *v = a * *v;
                        }
                    }
                }
                y
            }
            Layer::AddSkip { span, .. } => {
                let mut y = x.clone();
                for (d, &s) in y.values_mut().iter_mut().zip(acts[i - span].values()) {
                    *d = *d + s;
                }
                y
            }
        };
        acts.push(y);
    }
    Ok(Trace { acts })
}

/// Network output for `input`.
pub fn forward<T: Float>(model: &ModelWeights<T>, input: &TensorStack<T>) -> Result<TensorStack<T>> {
    Ok(forward_trace(model, input)?.acts.pop().unwrap())
}

/// Parameter gradients for an upstream gradient `grad` on the network
/// output, shaped like the model.
pub fn backward<T: Float>(model: &ModelWeights<T>, trace: &Trace<T>, grad: &TensorStack<T>) -> ModelWeights<T> {
    let n = model.layers.len();
    let mut grads = model.clone();
    grads.params_mut().into_iter().for_each(|p| *p = T::zero());
    let mut pending: Vec<Option<TensorStack<T>>> = vec![None; n + 1];
    let mut g = grad.clone();
    for i in (0..n).rev() {
        let x = &trace.acts[i];
        let gin = match (&model.layers[i], &mut grads.layers[i]) {
            (
                Layer::Conv {
                    in_ch,
                    out_ch,
                    k,
                    weights,
                    ..
                },
                Layer::Conv {
                    weights: gw, bias: gb, ..
                },
            ) => {
                let (h, wd) = (x.height(), x.width());
                let r = (*k / 2) as isize;
                let mut gin = TensorStack::zeros(*in_ch, h, wd);
                for o in 0..*out_ch {
                    let go = g.channel(o);
                    gb[o] = go.iter().fold(gb[o], |a, &v| a + v);
                    for ci in 0..*in_ch {
                        let src = x.channel(ci);
                        for ky in 0..*k {
                            let dy = ky as isize - r;
                            let (y0, y1) = tap_range(h, dy);
                            for kx in 0..*k {
                                let dx = kx as isize - r;
                                let (x0, x1) = tap_range(wd, dx);
                                let widx = ((o * in_ch + ci) * k + ky) * k + kx;
                                let wv = weights[widx];
                                let mut acc = T::zero();
                                let dst = gin.channel_mut(ci);
                                for y in y0..y1 {
                                    let sy = (y as isize + dy) as usize;
                                    let s0 = ((sy * wd + x0) as isize + dx) as usize;
                                    let gr = &go[y * wd + x0..y * wd + x1];
                                    for (j, &gv) in gr.iter().enumerate() {
                                        acc = acc + gv * src[s0 + j];
                                        dst[s0 + j] = dst[s0 + j] + wv * gv;
                                    }
                                }
                                gw[widx] = gw[widx] + acc;
                            }
                        }
                    }
                }
                gin
            }
            (Layer::Prelu { ch, slopes }, Layer::Prelu { slopes: gs, .. }) => {
                let mut gin = g.clone();
                for c in 0..*ch {
                    let xs = x.channel(c);
                    for (gv, &xv) in gin.channel_mut(c).iter_mut().zip(xs) {
                        if xv < T::zero() {
                            gs[c] = gs[c] + *gv * xv;
                            *gv = *gv * slopes[c];
                        }
                    }
                }
                gin
            }
            (Layer::AddSkip { span, .. }, _) => {
                let slot = &mut pending[i - span];
                match slot {
                    Some(p) => {
                        for (d, &s) in p.values_mut().iter_mut().zip(g.values()) {
                            *d = *d + s;
                        }
                    }
                    None => *slot = Some(g.clone()),
                }
                g.clone()
            }
            _ => unreachable!("gradient model mirrors the network"),
        };
        g = gin;
        if let Some(p) = pending[i].take() {
            for (d, &s) in g.values_mut().iter_mut().zip(p.values()) {
                *d = *d + s;
            }
        }
    }
    grads
}

/// Mean squared error of `recon + output` against `target` over the output
/// planes, and its gradient with respect to the output. `recon` is the
/// leading `output.channels()` planes of `input`.
pub fn residual_loss<T: Float>(input: &TensorStack<T>, output: &TensorStack<T>, target: &[T]) -> (T, TensorStack<T>) {
    let m = output.channels() * output.plane_len();
    let recon = &input.values()[..m];
    let count = T::from(m).unwrap();
    let mut grad = output.clone();
    let mut loss = T::zero();
    for (((g, &o), &r), &t) in grad.values_mut().iter_mut().zip(output.values()).zip(recon).zip(target) {
        let e = r + o - t;
        loss = loss + e * e;
        *g = (e + e) / count;
    }
    (loss / count, grad)
}

/// `clip(recon + round(255 * residual), 0, 255)` with rounding half away
/// from zero.
pub fn apply_residual(recon: &[u8], residual: &[f32]) -> Vec<u8> {
    recon
        .iter()
        .zip(residual)
        .map(|(&r, &d)| (r as f32 + (255.0 * d).round()).clamp(0.0, 255.0) as u8)
        .collect()
}
