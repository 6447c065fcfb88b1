use crate::error::{Error, Result};
use crate::syntax::SliceType;

/// Highest temporal layer of the random-access structure.
pub const MAX_LAYER: u8 = 3;
pub const RA_PERIOD: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GopType {
    IntraOnly,
    LowDelay,
    RandomAccess8,
}

impl GopType {
    pub fn code(self) -> u8 {
        match self {
            GopType::IntraOnly => 0,
            GopType::LowDelay => 1,
            GopType::RandomAccess8 => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<GopType> {
        match c {
            0 => Some(GopType::IntraOnly),
            1 => Some(GopType::LowDelay),
            2 => Some(GopType::RandomAccess8),
            _ => None,
        }
    }

    /// Accepts `intra`, `ld` / `low-delay` and `ra` / `ra8` / `random-access`.
    pub fn parse(s: &str) -> Result<GopType> {
        match s.to_ascii_lowercase().as_str() {
            "intra" | "intra-only" | "ai" => Ok(GopType::IntraOnly),
            "ld" | "low-delay" | "lowdelay" => Ok(GopType::LowDelay),
            "ra" | "ra8" | "ra-8" | "random-access" => Ok(GopType::RandomAccess8),
            _ => Err(Error::invalid(format!("unknown gop {s:?}; expected intra, ld or ra"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GopType::IntraOnly => "intra",
            GopType::LowDelay => "ld",
            GopType::RandomAccess8 => "ra",
        }
    }
}

/// One picture of the coding order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PicturePlan {
    pub poc: u32,
    pub layer: u8,
    pub qp_offset: i32,
    /// Reference POCs: none for I, one for P, past then future for B.
    pub refs: Vec<u32>,
}

impl PicturePlan {
    pub fn slice_type(&self) -> SliceType {
        match self.refs.len() {
            0 => SliceType::I,
            1 => SliceType::P,
            _ => SliceType::B,
        }
    }
}

fn bisect(lo: u32, hi: u32, depth: u8, out: &mut Vec<PicturePlan>) {
    if hi - lo < 2 {
        return;
    }
    let mid = (lo + hi) / 2;
    let layer = depth.min(MAX_LAYER);
    out.push(PicturePlan {
        poc: mid,
        layer,
        qp_offset: layer as i32,
        refs: vec![lo, hi],
    });
    bisect(lo, mid, depth + 1, out);
    bisect(mid, hi, depth + 1, out);
}

/// Coding order for `frames` pictures. Random access codes each period's
/// last picture from the previous anchor, then fills the interval by
/// recursive bisection with one past and one future reference.
pub fn gop_plan(gop: GopType, frames: u32) -> Vec<PicturePlan> {
    let mut out = Vec::with_capacity(frames as usize);
    if frames == 0 {
        return out;
    }
    let pic = |poc, refs| PicturePlan {
        poc,
        layer: 0,
        qp_offset: 0,
        refs,
    };
    out.push(pic(0, vec![]));
    match gop {
        GopType::IntraOnly => out.extend((1..frames).map(|p| pic(p, vec![]))),
        GopType::LowDelay => out.extend((1..frames).map(|p| pic(p, vec![p - 1]))),
        GopType::RandomAccess8 => {
            let mut anchor = 0;
            while anchor + 1 < frames {
                let next = (anchor + RA_PERIOD).min(frames - 1);
                out.push(pic(next, vec![anchor]));
                bisect(anchor, next, 1, &mut out);
                anchor = next;
            }
        }
    }
    out
}

/// True when the structure has more than one temporal layer.
pub fn is_hierarchical(plan: &[PicturePlan]) -> bool {
    plan.iter().any(|p| p.layer > 0)
}
