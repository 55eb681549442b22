//! Masked-diffusion language model backbone: vocabulary, fixed row layout,
//! embeddings (including the noise-level embedding at numeric positions),
//! the bidirectional transformer and the tied output head.

mod backbone;
mod layout;
mod noise;
mod vocab;

pub use backbone::{Backbone, BackboneConfig, EmbedCache, EmbedInput, ForwardCache};
pub use layout::{
    build_vocabulary, detokenize, schema_prompt, serialize_record, ColumnSpan, NumericSlot, OverflowPolicy, SerializedRecord,
    TokenLayout,
};
pub use noise::{noise_features, NoiseCache, NoiseEmbedding};
pub use vocab::{is_special, pre_tokenize, Vocabulary, BOS, EOS, MASK, NUM, PAD, SEP, SPECIALS};
