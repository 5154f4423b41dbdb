//! Checkpoint persistence.
//!
//! Directory layout per run:
//!
//! ```text
//! <run_id>/epoch_<N>/<model_id>.sgt        parameter tensors, concatenated records
//! <run_id>/epoch_<N>/<model_id>.opt.sgt    optimizer state tensors
//! <run_id>/epoch_<N>/<model_id>.meta.toml  record order (tensor names) + epoch
//! <run_id>/epoch_<N>/metrics.toml          metric snapshot for the epoch
//! ```

use super::{
    read_tensor_records, write_tensor_records, Tensor, TensorIoError,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Ordered name -> tensor pairs; order is the serialization order.
pub type NamedTensors = Vec<(String, Tensor)>;

/// One model's state at one epoch.
#[derive(Debug, Clone)]
pub struct CheckpointRecord {
    pub epoch: u32,
    pub model_id: String,
    pub parameters: NamedTensors,
    pub optimizer_state: NamedTensors,
    pub metrics_snapshot: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    epoch: u32,
    model_id: String,
    param_names: Vec<String>,
    opt_names: Vec<String>,
}

pub fn checkpoint_dir(run_dir: &Path, epoch: u32) -> PathBuf {
    run_dir.join(format!("epoch_{epoch}"))
}

/// Writes one model checkpoint; merges its metric snapshot into the epoch's
/// metrics file. Returns the epoch directory.
pub fn save_checkpoint(run_dir: &Path, record: &CheckpointRecord) -> Result<PathBuf, TensorIoError> {
    let dir = checkpoint_dir(run_dir, record.epoch);
    std::fs::create_dir_all(&dir)?;

    let params: Vec<Tensor> = record.parameters.iter().map(|(_, t)| t.clone()).collect();
    write_tensor_records(dir.join(format!("{}.sgt", record.model_id)), &params)?;
    let opt: Vec<Tensor> = record
        .optimizer_state
        .iter()
        .map(|(_, t)| t.clone())
        .collect();
    write_tensor_records(dir.join(format!("{}.opt.sgt", record.model_id)), &opt)?;

    let meta = CheckpointMeta {
        epoch: record.epoch,
        model_id: record.model_id.clone(),
        param_names: record.parameters.iter().map(|(n, _)| n.clone()).collect(),
        opt_names: record
            .optimizer_state
            .iter()
            .map(|(n, _)| n.clone())
            .collect(),
    };
    let meta_text = toml::to_string_pretty(&meta)
        .map_err(|e| TensorIoError::Checkpoint(format!("meta serialize: {e}")))?;
    std::fs::write(dir.join(format!("{}.meta.toml", record.model_id)), meta_text)?;

    // Merge metrics with any snapshot already written for this epoch.
    let metrics_path = dir.join("metrics.toml");
    let mut metrics: BTreeMap<String, f64> = if metrics_path.exists() {
        toml::from_str(&std::fs::read_to_string(&metrics_path)?)
            .map_err(|e| TensorIoError::Checkpoint(format!("metrics parse: {e}")))?
    } else {
        BTreeMap::new()
    };
    metrics.extend(record.metrics_snapshot.clone());
    let metrics_text = toml::to_string_pretty(&metrics)
        .map_err(|e| TensorIoError::Checkpoint(format!("metrics serialize: {e}")))?;
    std::fs::write(metrics_path, metrics_text)?;

    Ok(dir)
}

pub fn load_checkpoint(
    run_dir: &Path,
    epoch: u32,
    model_id: &str,
) -> Result<CheckpointRecord, TensorIoError> {
    let dir = checkpoint_dir(run_dir, epoch);
    let meta_text = std::fs::read_to_string(dir.join(format!("{model_id}.meta.toml")))?;
    let meta: CheckpointMeta = toml::from_str(&meta_text)
        .map_err(|e| TensorIoError::Checkpoint(format!("meta parse: {e}")))?;

    let params = read_tensor_records(dir.join(format!("{model_id}.sgt")))?;
    if params.len() != meta.param_names.len() {
        return Err(TensorIoError::Checkpoint(format!(
            "{model_id}: {} parameter records, meta lists {}",
            params.len(),
            meta.param_names.len()
        )));
    }
    let opt_path = dir.join(format!("{model_id}.opt.sgt"));
    let opt = if opt_path.exists() {
        read_tensor_records(opt_path)?
    } else {
        Vec::new()
    };
    if opt.len() != meta.opt_names.len() {
        return Err(TensorIoError::Checkpoint(format!(
            "{model_id}: {} optimizer records, meta lists {}",
            opt.len(),
            meta.opt_names.len()
        )));
    }

    let metrics_path = dir.join("metrics.toml");
    let metrics_snapshot = if metrics_path.exists() {
        toml::from_str(&std::fs::read_to_string(metrics_path)?)
            .map_err(|e| TensorIoError::Checkpoint(format!("metrics parse: {e}")))?
    } else {
        BTreeMap::new()
    };

    Ok(CheckpointRecord {
        epoch: meta.epoch,
        model_id: meta.model_id,
        parameters: meta.param_names.into_iter().zip(params).collect(),
        optimizer_state: meta.opt_names.into_iter().zip(opt).collect(),
        metrics_snapshot,
    })
}
