//! Bit-exact serialization primitives.

mod bits;
mod cabac;

pub use bits::{se_to_ue, ue_len, ue_to_se, BitSink, BitSource};
pub use cabac::{
    bin_cost, ArithContext, ArithDecoder, ArithEncoder, BinDecoder, BinEncoder, RateCounter, PROB_BITS, RATE_FRAC_BITS,
    RATE_ONE_BIT,
};
