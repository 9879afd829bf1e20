//! Raw trajectory files, window extraction and leave-one-out splits.

pub mod cache;
mod extract;
mod parse;
mod split;
pub mod synthetic;

pub use extract::{extract_sequences, ExtractConfig, TrajectoryBatch};
pub use parse::{parse_raw, parse_str, TrackPoint};
pub use split::{make_splits, split_train_val, trajectory_files, DatasetSplit, Scene, SplitConfig};
