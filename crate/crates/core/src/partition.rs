//! Coding-tree geometry: quadtree, binary splits and the four asymmetric
//! quaternary (UQT) splits, plus the split syntax.
//!
//! A UQT split cuts a block along one direction into parts of 1/2, 1/4, 1/8
//! and 1/8 of its extent. Sub-block order is canonical: top to bottom for the
//! horizontal modes and left to right for the vertical ones.
//!
//! | mode     | extents along the split direction |
//! |----------|-----------------------------------|
//! | `UqtH1`  | N/2, N/4, N/8, N/8                |
//! | `UqtH2`  | N/8, N/8, N/4, N/2                |
//! | `UqtV1`  | M/2, M/4, M/8, M/8                |
//! | `UqtV2`  | M/8, M/8, M/4, M/2                |

use std::collections::{HashMap, VecDeque};

use rand::Rng;

use crate::bitstream::{ArithContext, BinDecoder, BinEncoder};
use crate::error::{Error, Result};

pub const CTU_SIZE: usize = 64;
pub const DEFAULT_MAX_DEPTH: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BlockRect {
    pub const fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        BlockRect { x, y, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn is_pow2(&self) -> bool {
        self.w.is_power_of_two() && self.h.is_power_of_two()
    }

    pub fn contains(&self, other: &BlockRect) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.x + other.w <= self.x + self.w
            && other.y + other.h <= self.y + self.h
    }

    pub fn overlaps(&self, other: &BlockRect) -> bool {
        self.x < other.x + other.w
            && other.x < self.x + self.w
            && self.y < other.y + other.h
            && other.y < self.y + self.h
    }

    /// Rect mirrored top-to-bottom inside `parent`.
    pub fn mirror_vertical(&self, parent: &BlockRect) -> BlockRect {
        BlockRect::new(self.x, parent.y + parent.y + parent.h - self.y - self.h, self.w, self.h)
    }

    /// Rect mirrored left-to-right inside `parent`.
    pub fn mirror_horizontal(&self, parent: &BlockRect) -> BlockRect {
        BlockRect::new(parent.x + parent.x + parent.w - self.x - self.w, self.y, self.w, self.h)
    }

    /// Size class used to select split contexts: <=64, <=256, <=1024, larger.
    pub fn area_class(&self) -> usize {
        match self.area() {
            0..=64 => 0,
            65..=256 => 1,
            257..=1024 => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SplitMode {
    None,
    Qt,
    BtH,
    BtV,
    UqtH1,
    UqtH2,
    UqtV1,
    UqtV2,
}

impl SplitMode {
    /// Split modes in signaling order.
    pub const SPLITS: [SplitMode; 7] = [
        SplitMode::Qt,
        SplitMode::BtH,
        SplitMode::BtV,
        SplitMode::UqtH1,
        SplitMode::UqtH2,
        SplitMode::UqtV1,
        SplitMode::UqtV2,
    ];

    pub fn is_uqt(self) -> bool {
        matches!(
            self,
            SplitMode::UqtH1 | SplitMode::UqtH2 | SplitMode::UqtV1 | SplitMode::UqtV2
        )
    }

    pub fn child_count(self) -> usize {
        match self {
            SplitMode::None => 0,
            SplitMode::BtH | SplitMode::BtV => 2,
            _ => 4,
        }
    }

    fn bit(self) -> u8 {
        match self {
            SplitMode::None => 0,
            SplitMode::Qt => 1,
            SplitMode::BtH => 2,
            SplitMode::BtV => 4,
            SplitMode::UqtH1 => 8,
            SplitMode::UqtH2 => 16,
            SplitMode::UqtV1 => 32,
            SplitMode::UqtV2 => 64,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SplitMode::None => "NONE",
            SplitMode::Qt => "QT",
            SplitMode::BtH => "BT_H",
            SplitMode::BtV => "BT_V",
            SplitMode::UqtH1 => "UQT_H1",
            SplitMode::UqtH2 => "UQT_H2",
            SplitMode::UqtV1 => "UQT_V1",
            SplitMode::UqtV2 => "UQT_V2",
        }
    }
}

/// A set of split modes. `None` is implicitly always a member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModeSet(u8);

impl ModeSet {
    pub const EMPTY: ModeSet = ModeSet(0);
    pub const QT: ModeSet = ModeSet(1);
    pub const BT: ModeSet = ModeSet(2 | 4);
    pub const UQT: ModeSet = ModeSet(8 | 16 | 32 | 64);
    pub const QT_BT: ModeSet = ModeSet(1 | 2 | 4);
    pub const ALL: ModeSet = ModeSet(0x7f);

    pub fn from_modes(modes: &[SplitMode]) -> Self {
        ModeSet(modes.iter().fold(0, |acc, m| acc | m.bit()))
    }

    pub fn contains(self, mode: SplitMode) -> bool {
        mode == SplitMode::None || self.0 & mode.bit() != 0
    }

    pub fn union(self, other: ModeSet) -> ModeSet {
        ModeSet(self.0 | other.0)
    }

    pub fn is_superset_of(self, other: ModeSet) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn has_uqt(self) -> bool {
        self.0 & ModeSet::UQT.0 != 0
    }

    pub fn splits(self) -> impl Iterator<Item = SplitMode> {
        SplitMode::SPLITS.into_iter().filter(move |m| self.contains(*m))
    }
}

/// Sub-blocks of `rect` under `mode`, in canonical order.
pub fn split(rect: BlockRect, mode: SplitMode) -> Result<Vec<BlockRect>> {
    let BlockRect { x, y, w, h } = rect;
    if !rect.is_pow2() {
        return Err(Error::invalid(format!("{w}x{h} block is not power-of-two sized")));
    }
    let illegal = || Error::invalid(format!("{} is not legal for a {w}x{h} block", mode.name()));
    let rows = |parts: [usize; 4]| {
        let mut off = y;
        parts
            .iter()
            .map(|&ph| {
                let r = BlockRect::new(x, off, w, ph);
                off += ph;
                r
            })
            .collect()
    };
    let cols = |parts: [usize; 4]| {
        let mut off = x;
        parts
            .iter()
            .map(|&pw| {
                let r = BlockRect::new(off, y, pw, h);
                off += pw;
                r
            })
            .collect()
    };
    Ok(match mode {
        SplitMode::None => vec![rect],
        SplitMode::Qt => {
            if w != h || w < 2 {
                return Err(illegal());
            }
            let (hw, hh) = (w / 2, h / 2);
            vec![
                BlockRect::new(x, y, hw, hh),
                BlockRect::new(x + hw, y, hw, hh),
                BlockRect::new(x, y + hh, hw, hh),
                BlockRect::new(x + hw, y + hh, hw, hh),
            ]
        }
        SplitMode::BtH => {
            if h < 2 {
                return Err(illegal());
            }
            vec![BlockRect::new(x, y, w, h / 2), BlockRect::new(x, y + h / 2, w, h / 2)]
        }
        SplitMode::BtV => {
            if w < 2 {
                return Err(illegal());
            }
            vec![BlockRect::new(x, y, w / 2, h), BlockRect::new(x + w / 2, y, w / 2, h)]
        }
        SplitMode::UqtH1 | SplitMode::UqtH2 => {
            if h < 8 {
                return Err(illegal());
            }
            if mode == SplitMode::UqtH1 {
                rows([h / 2, h / 4, h / 8, h / 8])
            } else {
                rows([h / 8, h / 8, h / 4, h / 2])
            }
        }
        SplitMode::UqtV1 | SplitMode::UqtV2 => {
            if w < 8 {
                return Err(illegal());
            }
            if mode == SplitMode::UqtV1 {
                cols([w / 2, w / 4, w / 8, w / 8])
            } else {
                cols([w / 8, w / 8, w / 4, w / 2])
            }
        }
    })
}

/// Geometrically legal modes for `rect`, `None` first, then splits in
/// signaling order. With no depth budget left only `None` remains.
pub fn allowed_modes(rect: &BlockRect, min_size: usize, depth_budget: u32) -> Vec<SplitMode> {
    let mut out = vec![SplitMode::None];
    if depth_budget == 0 || !rect.is_pow2() {
        return out;
    }
    let (w, h) = (rect.w, rect.h);
    for mode in SplitMode::SPLITS {
        let ok = match mode {
            SplitMode::Qt => w == h && w / 2 >= min_size && h / 2 >= min_size,
            SplitMode::BtH => h / 2 >= min_size,
            SplitMode::BtV => w / 2 >= min_size,
            SplitMode::UqtH1 | SplitMode::UqtH2 => h / 8 >= min_size,
            SplitMode::UqtV1 | SplitMode::UqtV2 => w / 8 >= min_size,
            SplitMode::None => unreachable!(),
        };
        if ok {
            out.push(mode);
        }
    }
    out
}

/// Legality parameters shared by encoder and decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeRules {
    pub min_size: usize,
    pub max_depth: u32,
    pub modes: ModeSet,
}

impl TreeRules {
    pub fn new(min_size: usize, max_depth: u32, modes: ModeSet) -> Self {
        TreeRules {
            min_size,
            max_depth,
            modes,
        }
    }

    /// Split modes (excluding `None`) that may be signaled at `depth`.
    pub fn legal_splits(&self, rect: &BlockRect, depth: u32) -> Vec<SplitMode> {
        allowed_modes(rect, self.min_size, self.max_depth.saturating_sub(depth))
            .into_iter()
            .filter(|m| *m != SplitMode::None && self.modes.contains(*m))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionNode {
    pub rect: BlockRect,
    pub mode: SplitMode,
    pub children: Vec<PartitionNode>,
}

impl PartitionNode {
    pub fn leaf(rect: BlockRect) -> Self {
        PartitionNode {
            rect,
            mode: SplitMode::None,
            children: Vec::new(),
        }
    }

    /// A node split once with leaf children.
    pub fn split_once(rect: BlockRect, mode: SplitMode) -> Result<Self> {
        let children = split(rect, mode)?;
        if mode == SplitMode::None {
            return Ok(Self::leaf(rect));
        }
        Ok(PartitionNode {
            rect,
            mode,
            children: children.into_iter().map(PartitionNode::leaf).collect(),
        })
    }

    pub fn is_leaf(&self) -> bool {
        self.mode == SplitMode::None
    }

    /// Leaf rects in depth-first (coding) order.
    pub fn leaves(&self) -> Vec<BlockRect> {
        let mut out = Vec::new();
        self.visit_leaves(&mut |r| out.push(*r));
        out
    }

    pub fn visit_leaves(&self, f: &mut impl FnMut(&BlockRect)) {
        if self.is_leaf() {
            f(&self.rect);
        } else {
            for c in &self.children {
                c.visit_leaves(f);
            }
        }
    }

    /// Number of split operations on the deepest root-to-leaf path.
    pub fn depth(&self) -> u32 {
        self.children.iter().map(|c| c.depth() + 1).max().unwrap_or(0)
    }

    /// Split count on the path from this node down to a leaf equal to
    /// `target`, if there is one.
    pub fn depth_of_leaf(&self, target: &BlockRect) -> Option<u32> {
        if self.is_leaf() {
            return (self.rect == *target).then_some(0);
        }
        self.children
            .iter()
            .find_map(|c| c.depth_of_leaf(target).map(|d| d + 1))
    }

    pub fn count_modes(&self, counts: &mut HashMap<SplitMode, usize>) {
        *counts.entry(self.mode).or_default() += 1;
        for c in &self.children {
            c.count_modes(counts);
        }
    }

    /// Checks tiling and legality of the whole tree against `rules`.
    pub fn validate(&self, rules: &TreeRules) -> Result<()> {
        self.validate_at(rules, 0)
    }

    fn validate_at(&self, rules: &TreeRules, depth: u32) -> Result<()> {
        if self.is_leaf() {
            if !self.children.is_empty() {
                return Err(Error::invalid("leaf node has children"));
            }
            return Ok(());
        }
        if !rules.legal_splits(&self.rect, depth).contains(&self.mode) {
            return Err(Error::invalid(format!(
                "{} not legal for {:?} at depth {depth}",
                self.mode.name(),
                self.rect
            )));
        }
        let expect = split(self.rect, self.mode)?;
        if self.children.len() != expect.len() || self.children.iter().zip(&expect).any(|(c, r)| c.rect != *r) {
            return Err(Error::invalid("children do not tile the parent"));
        }
        self.children.iter().try_for_each(|c| c.validate_at(rules, depth + 1))
    }

    /// A random legal tree; `split_prob` is the chance of splitting a node
    /// that can be split.
    pub fn random<R: Rng>(rng: &mut R, root: BlockRect, rules: &TreeRules, split_prob: f64) -> Self {
        Self::random_at(rng, root, rules, split_prob, 0)
    }

    fn random_at<R: Rng>(rng: &mut R, rect: BlockRect, rules: &TreeRules, p: f64, depth: u32) -> Self {
        let legal = rules.legal_splits(&rect, depth);
        if legal.is_empty() || !rng.gen_bool(p) {
            return PartitionNode::leaf(rect);
        }
        let mode = legal[rng.gen_range(0..legal.len())];
        let children = split(rect, mode)
            .expect("legal split")
            .into_iter()
            .map(|r| Self::random_at(rng, r, rules, p, depth + 1))
            .collect();
        PartitionNode { rect, mode, children }
    }
}

/// Contexts of the split syntax, selected by [`BlockRect::area_class`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PartitionContexts {
    pub split_flag: [ArithContext; 4],
    pub mode_bins: [[ArithContext; 6]; 4],
}

/// Writes the split decision for one node: a split flag, then the mode's
/// index in the legal list as truncated unary. Nothing is written when no
/// split is legal.
pub fn write_split<E: BinEncoder>(
    enc: &mut E,
    ctx: &mut PartitionContexts,
    rules: &TreeRules,
    rect: &BlockRect,
    depth: u32,
    mode: SplitMode,
) {
    let legal = rules.legal_splits(rect, depth);
    if legal.is_empty() {
        debug_assert_eq!(mode, SplitMode::None);
        return;
    }
    let class = rect.area_class();
    enc.encode_bin(&mut ctx.split_flag[class], mode != SplitMode::None);
    if mode == SplitMode::None || legal.len() == 1 {
        return;
    }
    let idx = legal.iter().position(|m| *m == mode).expect("mode must be legal");
    for i in 0..idx {
        enc.encode_bin(&mut ctx.mode_bins[class][i], true);
    }
    if idx < legal.len() - 1 {
        enc.encode_bin(&mut ctx.mode_bins[class][idx], false);
    }
}

pub fn read_split<D: BinDecoder>(
    dec: &mut D,
    ctx: &mut PartitionContexts,
    rules: &TreeRules,
    rect: &BlockRect,
    depth: u32,
) -> Result<SplitMode> {
    let legal = rules.legal_splits(rect, depth);
    if legal.is_empty() {
        return Ok(SplitMode::None);
    }
    let class = rect.area_class();
    if !dec.decode_bin(&mut ctx.split_flag[class])? {
        return Ok(SplitMode::None);
    }
    let mut idx = 0;
    while idx < legal.len() - 1 && dec.decode_bin(&mut ctx.mode_bins[class][idx])? {
        idx += 1;
    }
    legal
        .get(idx)
        .copied()
        .ok_or_else(|| Error::bitstream(dec.byte_offset(), "split mode index beyond legal list"))
}

/// Serializes a tree depth-first, calling `leaf` after each leaf's split flag
/// so per-leaf payloads can be interleaved.
pub fn write_tree_with<E: BinEncoder>(
    node: &PartitionNode,
    enc: &mut E,
    ctx: &mut PartitionContexts,
    rules: &TreeRules,
    leaf: &mut impl FnMut(&BlockRect, &mut E),
) {
    write_node(node, enc, ctx, rules, 0, leaf)
}

fn write_node<E: BinEncoder>(
    node: &PartitionNode,
    enc: &mut E,
    ctx: &mut PartitionContexts,
    rules: &TreeRules,
    depth: u32,
    leaf: &mut impl FnMut(&BlockRect, &mut E),
) {
    write_split(enc, ctx, rules, &node.rect, depth, node.mode);
    if node.is_leaf() {
        leaf(&node.rect, enc);
    } else {
        for c in &node.children {
            write_node(c, enc, ctx, rules, depth + 1, leaf);
        }
    }
}

pub fn write_tree<E: BinEncoder>(node: &PartitionNode, enc: &mut E, ctx: &mut PartitionContexts, rules: &TreeRules) {
    write_tree_with(node, enc, ctx, rules, &mut |_, _| {})
}

pub fn read_tree_with<D: BinDecoder>(
    dec: &mut D,
    ctx: &mut PartitionContexts,
    rules: &TreeRules,
    root: BlockRect,
    leaf: &mut impl FnMut(&BlockRect, &mut D) -> Result<()>,
) -> Result<PartitionNode> {
    read_node(dec, ctx, rules, root, 0, leaf)
}

fn read_node<D: BinDecoder>(
    dec: &mut D,
    ctx: &mut PartitionContexts,
    rules: &TreeRules,
    rect: BlockRect,
    depth: u32,
    leaf: &mut impl FnMut(&BlockRect, &mut D) -> Result<()>,
) -> Result<PartitionNode> {
    let mode = read_split(dec, ctx, rules, &rect, depth)?;
    if mode == SplitMode::None {
        leaf(&rect, dec)?;
        return Ok(PartitionNode::leaf(rect));
    }
    let children = split(rect, mode)?
        .into_iter()
        .map(|r| read_node(dec, ctx, rules, r, depth + 1, leaf))
        .collect::<Result<Vec<_>>>()?;
    Ok(PartitionNode { rect, mode, children })
}

pub fn read_tree<D: BinDecoder>(
    dec: &mut D,
    ctx: &mut PartitionContexts,
    rules: &TreeRules,
    root: BlockRect,
) -> Result<PartitionNode> {
    read_tree_with(dec, ctx, rules, root, &mut |_, _| Ok(()))
}

/// Minimum split distance from `root` to every rect reachable with `modes`,
/// exploring at most `max_depth` splits.
pub fn reachable_depths(root: BlockRect, modes: ModeSet, min_size: usize, max_depth: u32) -> HashMap<BlockRect, u32> {
    let mut dist = HashMap::from([(root, 0u32)]);
    let mut queue = VecDeque::from([root]);
    while let Some(rect) = queue.pop_front() {
        let d = dist[&rect];
        if d >= max_depth {
            continue;
        }
        for mode in allowed_modes(&rect, min_size, 1) {
            if mode == SplitMode::None || !modes.contains(mode) {
                continue;
            }
            for child in split(rect, mode).expect("allowed split") {
                if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(child) {
                    e.insert(d + 1);
                    queue.push_back(child);
                }
            }
        }
    }
    dist
}

/// Fewest split operations that produce a node equal to `target` when
/// starting from `root` and using only `modes`; `None` if unreachable.
pub fn min_depth_to_shape(target: BlockRect, root: BlockRect, modes: ModeSet, min_size: usize) -> Option<u32> {
    if !root.contains(&target) {
        return None;
    }
    // Every split at least halves one side, so the search is finite.
    let bound = root.w.trailing_zeros() + root.h.trailing_zeros();
    reachable_depths(root, modes, min_size, bound).get(&target).copied()
}

/// Rects that `with` reaches within `budget` splits strictly sooner than
/// `without` does (or that `without` cannot reach within the budget).
pub fn earlier_reachable(
    root: BlockRect,
    with: ModeSet,
    without: ModeSet,
    min_size: usize,
    budget: u32,
) -> Vec<(BlockRect, u32, Option<u32>)> {
    let a = reachable_depths(root, with, min_size, budget);
    let b = reachable_depths(root, without, min_size, budget);
    let mut out: Vec<_> = a
        .iter()
        .filter_map(|(r, &d)| match b.get(r) {
            Some(&e) if e <= d => None,
            other => Some((*r, d, other.copied())),
        })
        .collect();
    out.sort();
    out
}
