//! Extracted windows stored in the checkpoint container.
//!
//! Window `i` of split `s` (`train`, `val` or `test`) becomes three entries:
//! `s.i.abs_pos` `[slen, N, 2]`, `s.i.ped_ids` `[N]` and `s.i.frames`
//! `[slen]`, ids stored as reals. A `meta.horizons` entry `[2]` holds
//! `obs_len, pred_len`. The container's seed field carries the split seed.

use std::path::Path;

use crate::autodiff::{checkpoint, DiffArray, ParameterStore};
use crate::data::extract::TrajectoryBatch;
use crate::data::split::DatasetSplit;
use crate::error::{Error, Result};

const SPLITS: [&str; 3] = ["train", "val", "test"];

pub fn save(split: &DatasetSplit, seed: u64, path: &Path) -> Result<()> {
    let mut store = ParameterStore::new(seed);
    let horizons = split
        .train
        .iter()
        .chain(&split.val)
        .chain(&split.test)
        .next()
        .map_or([0.0, 0.0], |b| [b.obs_len as f64, b.pred_len as f64]);
    store.insert("meta.horizons", DiffArray::new(vec![2], horizons.to_vec())?)?;
    for (tag, batches) in SPLITS.iter().zip([&split.train, &split.val, &split.test]) {
        for (i, b) in batches.iter().enumerate() {
            let n = b.num_peds();
            store.insert(
                format!("{tag}.{i}.abs_pos"),
                DiffArray::new(vec![b.slen(), n, 2], b.abs_pos.clone())?,
            )?;
            store.insert(
                format!("{tag}.{i}.ped_ids"),
                DiffArray::new(vec![n], b.ped_ids.iter().map(|&v| v as f64).collect())?,
            )?;
            store.insert(
                format!("{tag}.{i}.frames"),
                DiffArray::new(vec![b.slen()], b.frames.iter().map(|&v| v as f64).collect())?,
            )?;
        }
    }
    checkpoint::save(&store, path)
}

pub fn load(path: &Path, name: &str) -> Result<DatasetSplit> {
    let store = checkpoint::load(path)?;
    let h = store.get("meta.horizons")?.values();
    let (obs_len, pred_len) = (h[0] as usize, h[1] as usize);
    let mut out: [Vec<TrajectoryBatch>; 3] = Default::default();
    for (tag, dst) in SPLITS.iter().zip(out.iter_mut()) {
        let mut i = 0;
        while store.contains(&format!("{tag}.{i}.abs_pos")) {
            let get = |field: &str| store.get(&format!("{tag}.{i}.{field}"));
            let ids = |field: &str| -> Result<Vec<i64>> {
                Ok(get(field)?.values().iter().map(|&v| v as i64).collect())
            };
            let batch = TrajectoryBatch::from_abs(
                ids("ped_ids")?,
                ids("frames")?,
                get("abs_pos")?.values().to_vec(),
                obs_len,
                pred_len,
            )
            .map_err(|e| Error::Checkpoint(format!("{tag}.{i}: {e}")))?;
            dst.push(batch);
            i += 1;
        }
    }
    let [train, val, test] = out;
    Ok(DatasetSplit {
        name: name.to_string(),
        train,
        val,
        test,
    })
}
