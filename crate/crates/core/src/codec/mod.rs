//! Sequence encoder and decoder.
//!
//! A stream is a sequence header followed by length-prefixed picture
//! payloads in coding order. Each payload holds a byte-aligned picture
//! header and one arithmetic-coded segment with the CTU data and, when the
//! filter tool is on, the loop filter decisions.

mod container;
mod decoder;
mod encoder;
mod gop;
mod picture;

pub use container::{
    parse_container, write_container, ModelRef, PictureHeader, SequenceHeader, Tools, STREAM_MAGIC, STREAM_VERSION,
};
pub use decoder::{decode_sequence, DecodeOutput, PictureTrace};
pub use encoder::{
    collect_training_pairs, encode_sequence, frame_md5, model_refs, tree_rules, EncodeOutput, EncoderConfig,
    PictureStats, TrainingTap, MIN_LUMA_BLOCK,
};
pub use gop::{gop_plan, is_hierarchical, GopType, PicturePlan, MAX_LAYER, RA_PERIOD};
pub use picture::{DecodedPicture, CHROMA_QP_OFFSET};
