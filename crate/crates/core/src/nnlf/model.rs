use std::path::Path;

use num_traits::Float;
use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"NNLF";
pub const WEIGHTS_VERSION: u16 = 1;

/// Which planes a model filters and which slices it serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelKind {
    pub chroma: bool,
    pub inter: bool,
}

impl ModelKind {
    pub const LUMA_INTRA: ModelKind = ModelKind {
        chroma: false,
        inter: false,
    };
    pub const LUMA_INTER: ModelKind = ModelKind {
        chroma: false,
        inter: true,
    };
    pub const CHROMA_INTRA: ModelKind = ModelKind {
        chroma: true,
        inter: false,
    };
    pub const CHROMA_INTER: ModelKind = ModelKind {
        chroma: true,
        inter: true,
    };
    pub const ALL: [ModelKind; 4] = [
        Self::LUMA_INTRA,
        Self::LUMA_INTER,
        Self::CHROMA_INTRA,
        Self::CHROMA_INTER,
    ];

    /// Bit 0 is set for inter, bit 1 for chroma.
    pub fn code(self) -> u8 {
        self.inter as u8 | (self.chroma as u8) << 1
    }

    pub fn from_code(c: u8) -> Option<ModelKind> {
        (c < 4).then_some(ModelKind {
            inter: c & 1 == 1,
            chroma: c & 2 == 2,
        })
    }

    /// Luma: recon, pred, bs, qp and, for intra, the partition mask. Chroma
    /// doubles the recon and pred planes and appends downsampled luma.
    pub fn input_channels(self) -> usize {
        let base = if self.chroma { 6 } else { 4 };
        base + !self.inter as usize + self.chroma as usize
    }

    pub fn output_channels(self) -> usize {
        if self.chroma {
            2
        } else {
            1
        }
    }

    pub fn name(self) -> &'static str {
        match (self.chroma, self.inter) {
            (false, false) => "luma-intra",
            (false, true) => "luma-inter",
            (true, false) => "chroma-intra",
            (true, true) => "chroma-inter",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T = f32> {
    /// `k` is 1 or 3. Weights are laid out `[out][in][ky][kx]`.
    Conv {
        in_ch: usize,
        out_ch: usize,
        k: usize,
        weights: Vec<T>,
        bias: Vec<T>,
    },
    Prelu {
        ch: usize,
        slopes: Vec<T>,
    },
    /// Adds the input of the layer `span` positions earlier.
    AddSkip {
        ch: usize,
        span: usize,
    },
}

impl<T: Float> Layer<T> {
    pub fn conv(in_ch: usize, out_ch: usize, k: usize) -> Self {
        Layer::Conv {
            in_ch,
            out_ch,
            k,
            weights: vec![T::zero(); out_ch * in_ch * k * k],
            bias: vec![T::zero(); out_ch],
        }
    }

    pub fn in_channels(&self) -> usize {
        match self {
            Layer::Conv { in_ch, .. } => *in_ch,
            Layer::Prelu { ch, .. } | Layer::AddSkip { ch, .. } => *ch,
        }
    }

    pub fn out_channels(&self) -> usize {
        match self {
            Layer::Conv { out_ch, .. } => *out_ch,
            Layer::Prelu { ch, .. } | Layer::AddSkip { ch, .. } => *ch,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv { weights, bias, .. } => weights.len() + bias.len(),
            Layer::Prelu { slopes, .. } => slopes.len(),
            Layer::AddSkip { .. } => 0,
        }
    }

    fn params(&self) -> Vec<&T> {
        match self {
            Layer::Conv { weights, bias, .. } => weights.iter().chain(bias).collect(),
            Layer::Prelu { slopes, .. } => slopes.iter().collect(),
            Layer::AddSkip { .. } => Vec::new(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut T> {
        match self {
            Layer::Conv { weights, bias, .. } => weights.iter_mut().chain(bias.iter_mut()).collect(),
            Layer::Prelu { slopes, .. } => slopes.iter_mut().collect(),
            Layer::AddSkip { .. } => Vec::new(),
        }
    }

    fn cast<U: Float>(&self) -> Layer<U> {
        let c = |v: &Vec<T>| v.iter().map(|x| U::from(*x).expect("float cast")).collect();
        match self {
            Layer::Conv {
                in_ch,
                out_ch,
                k,
                weights,
                bias,
            } => Layer::Conv {
                in_ch: *in_ch,
                out_ch: *out_ch,
                k: *k,
                weights: c(weights),
                bias: c(bias),
            },
            Layer::Prelu { ch, slopes } => Layer::Prelu {
                ch: *ch,
                slopes: c(slopes),
            },
            Layer::AddSkip { ch, span } => Layer::AddSkip { ch: *ch, span: *span },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<T = f32> {
    pub kind: ModelKind,
    pub layers: Vec<Layer<T>>,
}

/// Sizes of the standard residual network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub width: usize,
    pub blocks: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture { width: 16, blocks: 4 }
    }
}

impl<T: Float> ModelWeights<T> {
    /// 3x3 conv to `width` channels and PReLU, then `blocks` residual blocks
    /// (conv, PReLU, conv, skip), then a 3x3 conv to the output planes. All
    /// parameters zero except PReLU slopes at 0.25.
    pub fn standard(kind: ModelKind, arch: Architecture) -> Self {
        let w = arch.width;
        let quarter = T::from(0.25).unwrap();
        let prelu = || Layer::Prelu {
            ch: w,
            slopes: vec![quarter; w],
        };
        let mut layers = vec![Layer::conv(kind.input_channels(), w, 3), prelu()];
        for _ in 0..arch.blocks {
            layers.push(Layer::conv(w, w, 3));
            layers.push(prelu());
            layers.push(Layer::conv(w, w, 3));
            layers.push(Layer::AddSkip { ch: w, span: 3 });
        }
        layers.push(Layer::conv(w, kind.output_channels(), 3));
        ModelWeights { kind, layers }
    }

    /// He-style random initialization of every conv except the last, which
    /// stays zero so a fresh model leaves its input unchanged.
    pub fn randomize(&mut self, rng: &mut impl Rng, gain: f64) {
        let last = self.layers.iter().rposition(|l| matches!(l, Layer::Conv { .. }));
        for (i, layer) in self.layers.iter_mut().enumerate() {
            if let Layer::Conv { in_ch, k, weights, .. } = layer {
                if Some(i) == last {
                    continue;
                }
                let scale = gain * (6.0 / (*in_ch * *k * *k) as f64).sqrt();
                for v in weights.iter_mut() {
                    *v = T::from(rng.gen_range(-scale..scale)).unwrap();
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::MalformedWeights(m));
        if self.layers.is_empty() {
            return bad("model has no layers".into());
        }
        if self.layers[0].in_channels() != self.kind.input_channels() {
            return bad(format!(
                "{} model takes {} input planes, first layer has {}",
                self.kind.name(),
                self.kind.input_channels(),
                self.layers[0].in_channels()
            ));
        }
        if self.layers.last().unwrap().out_channels() != self.kind.output_channels() {
            return bad("last layer does not produce the model's output planes".into());
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 && self.layers[i - 1].out_channels() != layer.in_channels() {
                return bad(format!("layer {i} channel count does not match layer {}", i - 1));
            }
            match layer {
                Layer::Conv {
                    in_ch,
                    out_ch,
                    k,
                    weights,
                    bias,
                } => {
                    if !(*k == 1 || *k == 3) || weights.len() != out_ch * in_ch * k * k || bias.len() != *out_ch {
                        return bad(format!("layer {i}: malformed convolution"));
                    }
                }
                Layer::Prelu { ch, slopes } => {
                    if slopes.len() != *ch {
                        return bad(format!("layer {i}: prelu slope count"));
                    }
                }
                Layer::AddSkip { ch, span } => {
                    if *span == 0 || *span > i || self.layers[i - span].in_channels() != *ch {
                        return bad(format!("layer {i}: skip source invalid"));
                    }
                }
            }
            if layer.params().iter().any(|v| !v.is_finite()) {
                return bad(format!("layer {i}: non-finite parameter"));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    /// Every parameter in layer order.
    pub fn params(&self) -> Vec<T> {
        self.layers.iter().flat_map(|l| l.params()).copied().collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut T> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn cast<U: Float>(&self) -> ModelWeights<U> {
        ModelWeights {
            kind: self.kind,
            layers: self.layers.iter().map(|l| l.cast()).collect(),
        }
    }
}

impl ModelWeights<f32> {
    /// Serialized form; see the crate's format notes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHTS_MAGIC);
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        out.push(self.kind.code());
        out.extend_from_slice(&(self.layers.len() as u16).to_le_bytes());
        let floats = |out: &mut Vec<u8>, v: &[f32]| v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        for layer in &self.layers {
            let (code, size) = match layer {
                Layer::Conv { k: 3, .. } => (0u8, 3u8),
                Layer::Conv { .. } => (1, 1),
                Layer::Prelu { .. } => (2, 0),
                Layer::AddSkip { span, .. } => (3, *span as u8),
            };
            out.push(code);
            out.extend_from_slice(&(layer.in_channels() as u16).to_le_bytes());
            out.extend_from_slice(&(layer.out_channels() as u16).to_le_bytes());
            out.push(size);
            match layer {
                Layer::Conv { weights, bias, .. } => {
                    floats(&mut out, weights);
                    floats(&mut out, bias);
                }
                Layer::Prelu { slopes, .. } => floats(&mut out, slopes),
                Layer::AddSkip { .. } => {}
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != WEIGHTS_MAGIC {
            return Err(Error::MalformedWeights("bad magic".into()));
        }
        let version = r.u16()?;
        if version != WEIGHTS_VERSION {
            return Err(Error::MalformedWeights(format!("unsupported version {version}")));
        }
        let kind = ModelKind::from_code(r.u8()?).ok_or_else(|| Error::MalformedWeights("bad model kind".into()))?;
        let count = r.u16()? as usize;
        let mut layers = Vec::with_capacity(count.min(256));
        for i in 0..count {
            let code = r.u8()?;
            let in_ch = r.u16()? as usize;
            let out_ch = r.u16()? as usize;
            let size = r.u8()? as usize;
            let layer = match code {
                0 | 1 => {
                    let k = if code == 0 { 3 } else { 1 };
                    if size != k {
                        return Err(Error::MalformedWeights(format!("layer {i}: kernel size {size}")));
                    }
                    Layer::Conv {
                        in_ch,
                        out_ch,
                        k,
                        weights: r.floats(out_ch * in_ch * k * k)?,
                        bias: r.floats(out_ch)?,
                    }
                }
                2 if in_ch == out_ch => Layer::Prelu {
                    ch: in_ch,
                    slopes: r.floats(in_ch)?,
                },
                3 if in_ch == out_ch => Layer::AddSkip { ch: in_ch, span: size },
                _ => return Err(Error::MalformedWeights(format!("layer {i}: bad layer header"))),
            };
            layers.push(layer);
        }
        if r.pos != bytes.len() {
            return Err(Error::MalformedWeights("trailing bytes".into()));
        }
        let m = ModelWeights { kind, layers };
        m.validate()?;
        Ok(m)
    }

    pub fn sha256(&self) -> [u8; 32] {
        Sha256::digest(self.to_bytes()).into()
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::MalformedWeights(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::MalformedWeights("size overflow".into()))?,
        )?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn save_weights(model: &ModelWeights, path: impl AsRef<Path>) -> Result<()> {
    model.validate()?;
    std::fs::write(path, model.to_bytes())?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ModelWeights> {
    ModelWeights::from_bytes(&std::fs::read(path)?)
}
