use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::manifest::{ClipRecord, Dataset};
use crate::error::{Error, Result};

/// Train/dev indices for a system-stratified split.
///
/// Within each system the clips are ordered by MI score (ties by clip id) and
/// every `round(1 / dev_fraction)`-th clip goes to dev, starting from a
/// seed-chosen offset. Every system lands in both partitions.
pub fn stratified_split_indices(
    records: &[ClipRecord],
    dev_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(dev_fraction > 0.0 && dev_fraction < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "dev fraction must be in (0, 0.5), got {dev_fraction}"
        )));
    }
    let step = (1.0 / dev_fraction).round() as usize;
    let mut by_system: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_system.entry(r.system_id.as_str()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_dev = vec![false; records.len()];
    for (system, mut members) in by_system {
        if members.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "system {system} has {} clip(s); stratification needs at least 2",
                members.len()
            )));
        }
        for &i in &members {
            if records[i].mi.is_none() {
                return Err(Error::Manifest {
                    clip_id: records[i].clip_id.clone(),
                    detail: "missing MI score needed for stratification".into(),
                });
            }
        }
        members.sort_by(|&a, &b| {
            let (ra, rb) = (&records[a], &records[b]);
            ra.mi
                .unwrap()
                .total_cmp(&rb.mi.unwrap())
                .then_with(|| ra.clip_id.cmp(&rb.clip_id))
        });
        let offset = rng.random_range(0..step.min(members.len()));
        for &i in members.iter().skip(offset).step_by(step) {
            is_dev[i] = true;
        }
    }
    let (dev, train): (Vec<usize>, Vec<usize>) = (0..records.len()).partition(|&i| is_dev[i]);
    Ok((train, dev))
}

/// Splits a dataset by system and MI-score order; see [`stratified_split_indices`].
pub fn stratified_split(ds: &Dataset, dev_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, dev) = stratified_split_indices(&ds.records(), dev_fraction, seed)?;
    Ok((ds.subset(&train, "train"), ds.subset(&dev, "dev")))
}
