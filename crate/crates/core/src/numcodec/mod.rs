//! Numeric value pathway: quantile normalization, the frozen float codec
//! and the trainable projectors between codec latents and model width.

mod codec;
mod normalizer;
mod projectors;

pub use codec::{fit_codec, pretrain_codec, round_trip_error, value_grid, CodecPretrainConfig, DecodeCache, EncodeCache, FloatCodec};
pub use normalizer::{fit_normalizer, QuantileNormalizer};
pub use projectors::{decode_hidden, encode_value, NumericProjectors, ProjDecCache, ProjEncCache};
