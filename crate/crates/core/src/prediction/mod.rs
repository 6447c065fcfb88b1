//! Intra prediction, motion estimation/compensation and boundary strength.

mod bs;
mod inter;
mod intra;

pub use bs::{derive_bs, BlockInfo, BsMap, BS_GRID};
pub use inter::{
    compensate_plane, motion_compensate, motion_compensate_chroma, motion_search, sad, MotionField, MotionVector,
    SadGrid, DEFAULT_SEARCH_RANGE, FIELD_CELL, SAD_CELL,
};
pub use intra::{ctu_neighbors, intra_predict, IntraMode};
