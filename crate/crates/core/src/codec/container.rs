use super::gop::GopType;
use crate::bitstream::{BitSink, BitSource};
use crate::error::{Error, Result};
use crate::nnlf::ModelKind;
use crate::syntax::SliceType;
use crate::transform::QP_MAX;

pub const STREAM_MAGIC: &[u8; 4] = b"UVC1";
pub const STREAM_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct Tools {
    pub uqt: bool,
    pub nnlf: bool,
    pub bim: bool,
}

impl Tools {
    pub const NONE: Tools = Tools {
        uqt: false,
        nnlf: false,
        bim: false,
    };

    pub fn bits(self) -> u8 {
        self.uqt as u8 | (self.nnlf as u8) << 1 | (self.bim as u8) << 2
    }

    pub fn from_bits(b: u8) -> Option<Tools> {
        (b < 8).then_some(Tools {
            uqt: b & 1 != 0,
            nnlf: b & 2 != 0,
            bim: b & 4 != 0,
        })
    }

    /// Comma-separated subset of `uqt`, `nnlf`, `bim`; `none` or empty for
    /// no tools.
    pub fn parse(s: &str) -> Result<Tools> {
        let mut t = Tools::NONE;
        for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
            match name.to_ascii_lowercase().as_str() {
                "uqt" => t.uqt = true,
                "nnlf" => t.nnlf = true,
                "bim" => t.bim = true,
                "none" => {}
                other => {
                    return Err(Error::invalid(format!(
                        "unknown tool {other:?}; expected uqt, nnlf or bim"
                    )))
                }
            }
        }
        Ok(t)
    }

    pub fn name(self) -> String {
        let names: Vec<&str> = [(self.uqt, "uqt"), (self.bim, "bim"), (self.nnlf, "nnlf")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, n)| *n)
            .collect();
        if names.is_empty() {
            "none".into()
        } else {
            names.join("+")
        }
    }
}

/// A filter model the stream depends on, identified by the SHA-256 of its
/// weight file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelRef {
    pub band: u8,
    pub kind: ModelKind,
    pub sha256: [u8; 32],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceHeader {
    pub width: u16,
    pub height: u16,
    pub frame_count: u32,
    pub base_qp: u8,
    pub gop: GopType,
    pub tools: Tools,
    pub max_depth: u8,
    pub models: Vec<ModelRef>,
}

impl SequenceHeader {
    /// Models of one kind in signaling order.
    pub fn models_of(&self, kind: ModelKind) -> Vec<&ModelRef> {
        self.models.iter().filter(|m| m.kind == kind).collect()
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(STREAM_MAGIC);
        out.extend_from_slice(&STREAM_VERSION.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.frame_count.to_le_bytes());
        out.push(self.base_qp);
        out.push(self.gop.code());
        out.push(self.tools.bits());
        out.push(self.max_depth);
        out.extend_from_slice(&(self.models.len() as u16).to_le_bytes());
        for m in &self.models {
            out.push(m.band);
            out.push(m.kind.code());
            out.extend_from_slice(&m.sha256);
        }
    }
}

/// Parses the sequence header and splits the picture payloads. Each payload
/// is returned with its byte offset in `data`.
pub fn parse_container(data: &[u8]) -> Result<(SequenceHeader, Vec<(usize, &[u8])>)> {
    let mut r = ByteReader { data, pos: 0 };
    if r.take(4)? != STREAM_MAGIC {
        return Err(Error::bitstream(0, "bad magic"));
    }
    let version = r.u16()?;
    if version != STREAM_VERSION {
        return Err(Error::bitstream(4, format!("unsupported version {version}")));
    }
    let width = r.u16()?;
    let height = r.u16()?;
    let frame_count = r.u32()?;
    let at = r.pos;
    let base_qp = r.u8()?;
    let gop = GopType::from_code(r.u8()?);
    let tools = Tools::from_bits(r.u8()?);
    let max_depth = r.u8()?;
    let (Some(gop), Some(tools)) = (gop, tools) else {
        return Err(Error::bitstream(at, "bad gop or tool flags"));
    };
    if base_qp as i32 > QP_MAX || max_depth > 8 {
        return Err(Error::bitstream(at, "qp or depth out of range"));
    }
    if width == 0 || height == 0 || width % 64 != 0 || height % 64 != 0 {
        return Err(Error::bitstream(4, "picture size must be a positive multiple of 64"));
    }
    let count = r.u16()?;
    let mut models = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let at = r.pos;
        let band = r.u8()?;
        let kind = ModelKind::from_code(r.u8()?).ok_or_else(|| Error::bitstream(at, "bad model kind"))?;
        let sha256 = r.take(32)?.try_into().unwrap();
        models.push(ModelRef { band, kind, sha256 });
    }
    if !tools.nnlf && !models.is_empty() {
        return Err(Error::bitstream(r.pos, "model list without the filter tool"));
    }
    let header = SequenceHeader {
        width,
        height,
        frame_count,
        base_qp,
        gop,
        tools,
        max_depth,
        models,
    };
    let mut pictures = Vec::new();
    while r.pos < data.len() {
        let len = r.u32()? as usize;
        let at = r.pos;
        pictures.push((at, r.take(len)?));
    }
    Ok((header, pictures))
}

pub fn write_container(header: &SequenceHeader, pictures: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::new();
    header.write(&mut out);
    for p in pictures {
        out.extend_from_slice(&(p.len() as u32).to_le_bytes());
        out.extend_from_slice(p);
    }
    out
}

struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(Error::bitstream(self.pos, "truncated stream"));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Fixed-length fields at the start of every picture payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PictureHeader {
    pub poc: u32,
    pub slice: SliceType,
    pub qp: u8,
    /// CTU delta QPs follow in the picture data.
    pub bim: bool,
    pub refs: Vec<u32>,
}

impl PictureHeader {
    pub fn write(&self, sink: &mut BitSink) {
        sink.write_ue(self.poc);
        sink.write_bits(self.slice.code() as u64, 2);
        sink.write_bits(self.qp as u64, 6);
        sink.write_bit(self.bim);
        for &r in &self.refs {
            sink.write_ue(r);
        }
        sink.align();
    }

    /// Reference count follows from the slice type.
    pub fn read(src: &mut BitSource) -> Result<PictureHeader> {
        let poc = src.read_ue()?;
        let at = src.byte_offset();
        let slice =
            SliceType::from_code(src.read_bits(2)? as u32).ok_or_else(|| Error::bitstream(at, "bad slice type"))?;
        let qp = src.read_bits(6)? as u8;
        if qp as i32 > QP_MAX {
            return Err(Error::bitstream(at, "picture qp out of range"));
        }
        let bim = src.read_bit()?;
        let n = match slice {
            SliceType::I => 0,
            SliceType::P => 1,
            SliceType::B => 2,
        };
        let refs = (0..n).map(|_| src.read_ue()).collect::<Result<_>>()?;
        src.align();
        Ok(PictureHeader {
            poc,
            slice,
            qp,
            bim,
            refs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> SequenceHeader {
        SequenceHeader {
            width: 128,
            height: 64,
            frame_count: 8,
            base_qp: 32,
            gop: GopType::RandomAccess8,
            tools: Tools {
                uqt: true,
                nnlf: true,
                bim: false,
            },
            max_depth: 4,
            models: vec![ModelRef {
                band: 1,
                kind: ModelKind::CHROMA_INTER,
                sha256: [7; 32],
            }],
        }
    }

    #[test]
    fn container_round_trip() {
        let pics = vec![vec![1, 2, 3], vec![], vec![9; 300]];
        let bytes = write_container(&header(), &pics);
        let (h, p) = parse_container(&bytes).unwrap();
        assert_eq!(h, header());
        assert_eq!(p.iter().map(|(_, d)| d.to_vec()).collect::<Vec<_>>(), pics);
        for cut in 0..bytes.len() {
            if let Ok((_, p)) = parse_container(&bytes[..cut]) {
                assert!(p.len() < 3);
            }
        }
        assert!(parse_container(b"").is_err());
        assert!(parse_container(b"UVC2\x01\x00").is_err());
    }

    #[test]
    fn picture_header_round_trip() {
        let h = PictureHeader {
            poc: 13,
            slice: SliceType::B,
            qp: 35,
            bim: true,
            refs: vec![12, 16],
        };
        let mut sink = BitSink::new();
        h.write(&mut sink);
        let bytes = sink.into_bytes();
        let mut src = BitSource::new(&bytes);
        assert_eq!(PictureHeader::read(&mut src).unwrap(), h);
        assert_eq!(src.byte_offset(), bytes.len());
    }

    #[test]
    fn tool_names() {
        assert_eq!(Tools::parse("uqt, bim").unwrap().bits(), 5);
        assert_eq!(Tools::parse("none").unwrap(), Tools::NONE);
        assert!(Tools::parse("uqt,foo").is_err());
        assert_eq!(Tools::from_bits(7).unwrap().name(), "uqt+bim+nnlf");
    }
}
