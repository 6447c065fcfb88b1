//! A block-based hybrid video codec for 8-bit 4:2:0 video.
//!
//! Pictures are split into 64×64 CTUs and partitioned recursively with
//! quad, binary and optional unequal quad-tree splits. Each leaf is intra or
//! motion-compensated, its residual is transformed and quantized, and the
//! whole tree is chosen by rate-distortion search. A learned loop filter and
//! block importance QP offsets are optional tools.
//!
//! ```
//! use uvc::codec::{decode_sequence, encode_sequence, EncoderConfig, GopType, Tools};
//! use uvc::fixtures;
//! use uvc::transform::Qp;
//!
//! let clip = fixtures::static_clip(64, 64, 2);
//! let cfg = EncoderConfig::new(Qp::new(37).unwrap(), GopType::LowDelay, Tools::default());
//! let enc = encode_sequence(&clip, &cfg, None).unwrap();
//! let dec = decode_sequence(&enc.bytes, None).unwrap();
//! assert_eq!(dec.frames, enc.recon);
//! ```

pub mod bim;
pub mod bitstream;
pub mod codec;
pub mod error;
pub mod fixtures;
pub mod frame;
pub mod metrics;
pub mod nnlf;
pub mod partition;
pub mod prediction;
pub mod rdo;
pub mod syntax;
pub mod transform;

pub use error::{Error, Result};
pub use frame::{load_yuv420, psnr, save_yuv420, FrameBuffer, PlaneBuffer};
