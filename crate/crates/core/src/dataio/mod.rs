//! On-disk formats, dataset loading, stratified splitting and the synthetic corpus.

mod embedding;
mod manifest;
mod split;
mod synth;

pub use embedding::{read_embedding, write_embedding, EmbeddingMatrix, MAGIC};
pub use manifest::{
    load_manifest, manifest_string, read_manifest_records, write_manifest, Clip, ClipRecord,
    Dataset,
};
pub use split::{stratified_split, stratified_split_indices};
pub use synth::{
    generate_synthetic, write_synthetic, ClipLatent, SynthConfig, SyntheticData,
    SyntheticSidecar, SystemLatent, MANIFEST_NAME, SIDECAR_NAME,
};
