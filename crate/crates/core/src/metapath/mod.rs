//! Typed path templates, beam sampling of their instances, and the
//! per-pair path corpus.

mod corpus;
mod sampler;
pub mod schema;

pub use corpus::{
    build_pair_corpus, read_corpus, sample_key, training_pairs, write_corpus, PairCorpus, PairKey,
    PairPathSet, PathSource, SchemaSet,
};
pub use sampler::{
    hop_similarity, instance_order, sample_instances, sample_pair, validate_instance, HopScorer,
    PathInstance, SamplerConfig,
};
pub use schema::{MetaPathSchema, SchemaKind};
