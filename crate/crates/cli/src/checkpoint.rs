//! Resumable scan positions, one file per measurement set (and shard).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use jmeas_core::povm::MeasurementSet;
use jmeas_core::search::Shard;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub ms_hash: String,
    pub shard: Option<Shard>,
    /// Next support to test is `(size, offset)`.
    pub size: usize,
    pub offset: u128,
}

/// Hex sha256 of the measurement set's JSON form.
pub fn ms_hash(ms: &MeasurementSet) -> String {
    let json = serde_json::to_vec(ms).expect("measurement sets serialize");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn path(dir: &Path, hash: &str, shard: Option<Shard>) -> PathBuf {
    match shard {
        Some(s) => dir.join(format!("{hash}-shard-{}-of-{}.json", s.index + 1, s.count)),
        None => dir.join(format!("{hash}.json")),
    }
}

/// A checkpoint for exactly this input and shard, if one exists.
pub fn load(file: &Path, hash: &str, shard: Option<Shard>) -> Option<Checkpoint> {
    let cp: Checkpoint = serde_json::from_slice(&fs::read(file).ok()?).ok()?;
    (cp.ms_hash == hash && cp.shard == shard).then_some(cp)
}

/// Write-then-rename so an interrupted run never leaves a torn file.
pub fn save(file: &Path, cp: &Checkpoint) -> std::io::Result<()> {
    let tmp = file.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_vec(cp)?)?;
    fs::rename(tmp, file)
}
