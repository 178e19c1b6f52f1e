//! Dataset ingestion (IDX files, synthetic blobs) and the skewed federated
//! partitioner.

pub mod dataset;
pub mod idx;
pub mod partition;
pub mod synthetic;

pub use dataset::{stratified_split, LabeledDataset};
pub use idx::{load_idx, write_idx};
pub use partition::{
    partition_skewed, partition_with_manifest, ClientAssignment, ClientShard, PartitionManifest,
    PartitionSpec, UNLEARNING_CLIENT,
};
pub use synthetic::{gen_multimodal, gen_synthetic};
