//! Windowed training, 3-fold model groups and ensembled prediction.

mod adam;
mod windows;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{debug, info};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use windows::{make_windows, window_count, Window};

use crate::data::{format_num, Domain};
use crate::error::{Error, Result};
use crate::evaluation::map_score;
use crate::features::{fingerprint, standardize, FeatureMatrix, FeatureSetId, Standardization};
use crate::model::{init_model, ModelCheckpoint, TransBiLstm, TransBiLstmConfig, N_CLASSES};
use crate::nn::param::{accumulate, scale_all};
use crate::nn::{Mode, Tensor};
use crate::rng::{derive_seed, seeded};

const FOLD_STREAM: u64 = 0xF01D;
const PSEUDO_FOLD_STREAM: u64 = 0xF01E;
const SHUFFLE_STREAM: u64 = 0x5EED;
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub window_len: usize,
    pub window_stride: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub n_folds: usize,
    pub feature_set: FeatureSetId,
    pub standardize: bool,
    /// Loss weight of windows from pseudo-labelled trials.
    pub pseudo_weight: f64,
    pub model: TransBiLstmConfig,
}

impl TrainConfig {
    /// Desk-scale defaults: toy architecture, W 512, S 256, batch 16,
    /// 50 epochs, Adam(1e-3, 0.9, 0.999, 1e-8).
    pub fn desk(feature_set: FeatureSetId, input_dim: usize) -> Self {
        Self {
            window_len: 512,
            window_stride: 256,
            batch_size: 16,
            max_epochs: 50,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            n_folds: 3,
            feature_set,
            standardize: true,
            pseudo_weight: 1.0,
            model: TransBiLstmConfig::toy(input_dim),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_stride == 0 || self.window_stride > self.window_len {
            return Err(Error::validation(format!(
                "train config: need 1 <= window_stride <= window_len, got S={} W={}",
                self.window_stride, self.window_len
            )));
        }
        if self.n_folds < 2 {
            return Err(Error::validation("train config: n_folds must be >= 2"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::validation("train config: learning_rate must be > 0"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::validation("train config: batch_size and max_epochs must be >= 1"));
        }
        if !(self.pseudo_weight >= 0.0) {
            return Err(Error::validation("train config: pseudo_weight must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return Err(Error::validation("train config: moment decays must be in [0, 1) and eps > 0"));
        }
        self.model.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae: f64,
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub model: TransBiLstm,
    pub best_epoch: usize,
    pub curve: Vec<EpochRecord>,
}

impl FoldOutcome {
    pub fn best_val_mae(&self) -> f64 {
        self.curve[self.best_epoch - 1].val_mae
    }
}

/// Mean `|p − y|` over the unpadded rows of `windows` and all classes.
pub fn windows_mae(model: &TransBiLstm, windows: &[Window]) -> Result<f64> {
    let parts = windows
        .par_iter()
        .map(|w| {
            let p = model.forward(&w.features, Mode::Eval, 0)?;
            let n = w.valid * N_CLASSES;
            let s: f64 = p.data()[..n]
                .iter()
                .zip(&w.labels.data()[..n])
                .map(|(p, y)| (p - y).abs())
                .sum();
            Ok((s, n))
        })
        .collect::<Result<Vec<_>>>()?;
    let (sum, n) = parts.iter().fold((0.0, 0usize), |(a, b), (s, n)| (a + s, b + n));
    if n == 0 {
        return Err(Error::validation("validation windows hold no data"));
    }
    Ok(sum / n as f64)
}

/// Trains one model with Adam on shuffled mini-batches and keeps the
/// snapshot of the epoch with the lowest validation MAE (the earliest one
/// on ties). Per-window gradients run in parallel and are summed in batch
/// order.
pub fn train_fold(train: &[Window], val: &[Window], config: &TrainConfig) -> Result<FoldOutcome> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::validation("train_fold needs non-empty train and validation windows"));
    }
    let mut model = init_model(&config.model, config.seed)?;
    let mut adam = Adam::new(&model, config.learning_rate, config.beta1, config.beta2, config.adam_eps);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = Vec::with_capacity(config.max_epochs);
    let mut best: Option<(usize, f64, TransBiLstm)> = None;

    for epoch in 1..=config.max_epochs {
        let epoch_seed = derive_seed(derive_seed(config.seed, SHUFFLE_STREAM), epoch as u64);
        order.shuffle(&mut seeded(epoch_seed));
        let mut loss_sum = 0.0;
        for (batch_id, batch) in order.chunks(config.batch_size).enumerate() {
            let results = batch
                .par_iter()
                .map(|&i| {
                    let w = &train[i];
                    let (loss, mut grad) = model.loss_and_gradient(
                        &w.features,
                        &w.labels,
                        w.valid,
                        Mode::Train,
                        derive_seed(epoch_seed, i as u64),
                    )?;
                    if w.weight != 1.0 {
                        scale_all(&mut grad, w.weight);
                    }
                    Ok((loss * w.weight, grad))
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| match e {
                    Error::Numeric(m) => Error::Numeric(format!(
                        "{m} (epoch {epoch}, batch {batch_id}, learning rate {})",
                        config.learning_rate
                    )),
                    other => other,
                })?;
            let mut iter = results.into_iter();
            let (mut batch_loss, mut grad) = iter.next().expect("non-empty batch");
            for (l, g) in iter {
                batch_loss += l;
                accumulate(&mut grad, &g);
            }
            if !batch_loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite training loss at epoch {epoch}, batch {batch_id}, learning rate {}",
                    config.learning_rate
                )));
            }
            scale_all(&mut grad, 1.0 / batch.len() as f64);
            adam.step(&mut model, &grad);
            loss_sum += batch_loss;
        }
        let train_loss = loss_sum / train.len() as f64;
        let val_mae = windows_mae(&model, val)?;
        debug!("epoch {epoch}: train_loss {train_loss:.5} val_mae {val_mae:.5}");
        curve.push(EpochRecord {
            epoch,
            train_loss,
            val_mae,
        });
        if best.as_ref().is_none_or(|(_, b, _)| val_mae < *b) {
            best = Some((epoch, val_mae, model.clone()));
        }
    }
    let (best_epoch, _, model) = best.expect("at least one epoch");
    Ok(FoldOutcome {
        model,
        best_epoch,
        curve,
    })
}

/// One trial's features and per-timestep `T×3` labels.
#[derive(Debug, Clone)]
pub struct TrialData {
    pub matrix: FeatureMatrix,
    pub labels: Tensor,
    /// Pseudo-labelled trials are only ever used for training.
    pub pseudo: bool,
}

/// Trial-level fold assignment. Real and pseudo-labelled trials are
/// shuffled independently, so adding pseudo trials leaves the real
/// partition unchanged.
pub fn assign_folds<'a>(
    trials: impl IntoIterator<Item = (&'a str, bool)>,
    n_folds: usize,
    seed: u64,
) -> Result<BTreeMap<String, usize>> {
    let mut real = Vec::new();
    let mut pseudo = Vec::new();
    for (id, is_pseudo) in trials {
        if is_pseudo {
            pseudo.push(id.to_string());
        } else {
            real.push(id.to_string());
        }
    }
    if real.len() < n_folds {
        return Err(Error::validation(format!(
            "{n_folds}-fold split needs at least {n_folds} trials, got {}",
            real.len()
        )));
    }
    let mut folds = BTreeMap::new();
    for (mut ids, stream) in [(real, FOLD_STREAM), (pseudo, PSEUDO_FOLD_STREAM)] {
        ids.sort();
        ids.dedup();
        ids.shuffle(&mut seeded(derive_seed(seed, stream)));
        for (i, id) in ids.into_iter().enumerate() {
            if folds.insert(id.clone(), i % n_folds).is_some() {
                return Err(Error::integrity(format!("trial {id} is both real and pseudo-labelled")));
            }
        }
    }
    Ok(folds)
}

#[derive(Debug, Clone)]
pub struct GroupMember {
    pub fold: usize,
    pub seed: u64,
    pub model: TransBiLstm,
    pub standardization: Option<Standardization>,
    pub best_epoch: usize,
    pub curve: Vec<EpochRecord>,
    pub oof_map: f64,
}

/// Three (n_folds) models trained on complementary trial folds.
#[derive(Debug, Clone)]
pub struct ModelGroup {
    pub domain: Option<Domain>,
    pub feature_set: FeatureSetId,
    pub columns: Vec<String>,
    pub fingerprint: String,
    pub config: TrainConfig,
    pub folds: BTreeMap<String, usize>,
    pub pseudo_trials: Vec<String>,
    pub members: Vec<GroupMember>,
    /// Mean of the members' out-of-fold MAPs.
    pub group_map: f64,
}

/// Per-timestep probabilities of one model over a whole trial: windows of
/// the training length are evaluated and overlapping predictions averaged.
pub fn predict_member(model: &TransBiLstm, matrix: &FeatureMatrix, w: usize, s: usize) -> Result<Tensor> {
    let t = matrix.len();
    let dummy = Tensor::zeros(vec![t, N_CLASSES]);
    let windows = make_windows(matrix, &dummy, w, s)?;
    let outputs = windows
        .par_iter()
        .map(|win| model.forward(&win.features, Mode::Eval, 0))
        .collect::<Result<Vec<_>>>()?;
    let mut sum = Tensor::zeros(vec![t, N_CLASSES]);
    let mut count = vec![0usize; t];
    for (win, out) in windows.iter().zip(&outputs) {
        for r in 0..win.valid {
            let row = sum.row_mut(win.start + r);
            for (acc, p) in row.iter_mut().zip(out.row(r)) {
                *acc += p;
            }
            count[win.start + r] += 1;
        }
    }
    for (i, &n) in count.iter().enumerate() {
        sum.row_mut(i).iter_mut().for_each(|v| *v /= n as f64);
    }
    Ok(sum)
}

fn prepare(matrix: &FeatureMatrix, stats: Option<&Standardization>) -> Result<FeatureMatrix> {
    match stats {
        Some(s) => standardize(matrix, s),
        None => Ok(matrix.clone()),
    }
}

/// Trains one member per fold. Fold `k` validates on the real trials of
/// fold `k`, trains on every other trial, and uses seed `seed + k`.
/// Standardization statistics come from the fold's training trials.
pub fn train_model_group(trials: &[TrialData], config: &TrainConfig) -> Result<ModelGroup> {
    config.validate()?;
    let first = trials
        .first()
        .ok_or_else(|| Error::validation("model group needs training trials"))?;
    let columns = first.matrix.columns.clone();
    for t in trials {
        if t.matrix.columns != columns || t.matrix.set_id != config.feature_set {
            return Err(Error::integrity(format!(
                "trial {} does not use feature set {} with columns {:?}",
                t.matrix.trial_id, config.feature_set, columns
            )));
        }
        if t.labels.rows() != t.matrix.len() || t.labels.cols() != N_CLASSES {
            return Err(Error::shape(format!("trial {}: labels do not match features", t.matrix.trial_id)));
        }
    }
    if config.model.input_dim != columns.len() {
        return Err(Error::shape(format!(
            "model input_dim {} but feature set {} has {} columns",
            config.model.input_dim,
            config.feature_set,
            columns.len()
        )));
    }
    let folds = assign_folds(
        trials.iter().map(|t| (t.matrix.trial_id.as_str(), t.pseudo)),
        config.n_folds,
        config.seed,
    )?;

    let members = (0..config.n_folds)
        .into_par_iter()
        .map(|k| train_member(trials, &folds, config, k))
        .collect::<Result<Vec<_>>>()?;
    let group_map = members.iter().map(|m| m.oof_map).sum::<f64>() / members.len() as f64;
    let mut pseudo_trials: Vec<String> = trials
        .iter()
        .filter(|t| t.pseudo)
        .map(|t| t.matrix.trial_id.clone())
        .collect();
    pseudo_trials.sort();
    info!("model group {}: group MAP {group_map:.4}", config.feature_set);
    Ok(ModelGroup {
        domain: None,
        feature_set: config.feature_set,
        fingerprint: fingerprint(config.feature_set, &columns),
        columns,
        config: config.clone(),
        folds,
        pseudo_trials,
        members,
        group_map,
    })
}

fn train_member(
    trials: &[TrialData],
    folds: &BTreeMap<String, usize>,
    config: &TrainConfig,
    k: usize,
) -> Result<GroupMember> {
    let (val, train): (Vec<&TrialData>, Vec<&TrialData>) =
        trials.iter().partition(|t| folds[&t.matrix.trial_id] == k);
    let val: Vec<&TrialData> = val.into_iter().filter(|t| !t.pseudo).collect();
    let stats = if config.standardize {
        Some(Standardization::fit(train.iter().map(|t| &t.matrix))?)
    } else {
        None
    };
    let windows_of = |set: &[&TrialData]| -> Result<Vec<Window>> {
        let mut out = Vec::new();
        for t in set {
            let m = prepare(&t.matrix, stats.as_ref())?;
            let weight = if t.pseudo { config.pseudo_weight } else { 1.0 };
            out.extend(
                make_windows(&m, &t.labels, config.window_len, config.window_stride)?
                    .into_iter()
                    .map(|w| Window { weight, ..w }),
            );
        }
        Ok(out)
    };
    let train_windows = windows_of(&train)?;
    let val_windows = windows_of(&val)?;
    let mut fold_config = config.clone();
    fold_config.seed = config.seed.wrapping_add(k as u64);
    info!(
        "fold {k}: {} train trials ({} windows), {} validation trials",
        train.len(),
        train_windows.len(),
        val.len()
    );
    let outcome = train_fold(&train_windows, &val_windows, &fold_config)?;

    let mut probs = Vec::new();
    let mut labels = Vec::new();
    for t in &val {
        let m = prepare(&t.matrix, stats.as_ref())?;
        probs.extend_from_slice(
            predict_member(&outcome.model, &m, config.window_len, config.window_stride)?.data(),
        );
        labels.extend_from_slice(t.labels.data());
    }
    let n = labels.len() / N_CLASSES;
    let oof_map = map_score(
        &Tensor::from_vec(vec![n, N_CLASSES], probs)?,
        &Tensor::from_vec(vec![n, N_CLASSES], labels)?,
    )
    .map_err(|e| match e {
        Error::Undefined(m) => Error::Undefined(format!("fold {k} out-of-fold MAP: {m}")),
        other => other,
    })?;
    Ok(GroupMember {
        fold: k,
        seed: fold_config.seed,
        model: outcome.model,
        standardization: stats,
        best_epoch: outcome.best_epoch,
        curve: outcome.curve,
        oof_map,
    })
}

/// Pointwise mean of the members' per-trial predictions.
pub fn predict_group(group: &ModelGroup, matrix: &FeatureMatrix) -> Result<Tensor> {
    let fp = matrix.fingerprint();
    if fp != group.fingerprint {
        return Err(Error::integrity(format!(
            "trial {}: feature fingerprint {fp} does not match model group {}",
            matrix.trial_id, group.fingerprint
        )));
    }
    let (w, s) = (group.config.window_len, group.config.window_stride);
    let outputs = group
        .members
        .iter()
        .map(|m| predict_member(&m.model, &prepare(matrix, m.standardization.as_ref())?, w, s))
        .collect::<Result<Vec<_>>>()?;
    let mut mean = Tensor::zeros(vec![matrix.len(), N_CLASSES]);
    for o in &outputs {
        mean.add_assign(o);
    }
    mean.scale(1.0 / outputs.len() as f64);
    Ok(mean)
}

pub fn write_training_log(path: &Path, curve: &[EpochRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "epoch,train_loss,val_mae").map_err(io)?;
    for r in curve {
        writeln!(w, "{},{},{}", r.epoch, format_num(r.train_loss), format_num(r.val_mae)).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberEntry {
    pub fold: usize,
    pub seed: u64,
    /// Relative to the manifest's directory.
    pub checkpoint: String,
    pub log: String,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub oof_map: f64,
}

/// On-disk description of a model group. Paths are relative to the
/// manifest so a group directory can be moved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupManifest {
    pub version: u32,
    pub domain: Option<Domain>,
    pub feature_set: FeatureSetId,
    pub fingerprint: String,
    pub columns: Vec<String>,
    pub train_config: TrainConfig,
    pub folds: BTreeMap<String, usize>,
    pub pseudo_trials: Vec<String>,
    pub members: Vec<MemberEntry>,
    pub group_map: f64,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl ModelGroup {
    pub fn manifest(&self) -> GroupManifest {
        GroupManifest {
            version: MANIFEST_VERSION,
            domain: self.domain,
            feature_set: self.feature_set,
            fingerprint: self.fingerprint.clone(),
            columns: self.columns.clone(),
            train_config: self.config.clone(),
            folds: self.folds.clone(),
            pseudo_trials: self.pseudo_trials.clone(),
            members: self
                .members
                .iter()
                .map(|m| MemberEntry {
                    fold: m.fold,
                    seed: m.seed,
                    checkpoint: format!("member{}.json", m.fold),
                    log: format!("fold{}_log.csv", m.fold),
                    best_epoch: m.best_epoch,
                    best_val_mae: m.curve[m.best_epoch - 1].val_mae,
                    oof_map: m.oof_map,
                })
                .collect(),
            group_map: self.group_map,
        }
    }

    /// Writes the manifest, one checkpoint and one training log per member
    /// into `dir`, and returns the manifest path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = self.manifest();
        for (m, entry) in self.members.iter().zip(&manifest.members) {
            ModelCheckpoint::new(&m.model, self.feature_set, self.columns.clone(), m.standardization.clone())?
                .save(&dir.join(&entry.checkpoint))?;
            write_training_log(&dir.join(&entry.log), &m.curve)?;
        }
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Loads a group from its manifest (or the directory holding it). Every
    /// member checkpoint must carry the manifest's feature fingerprint.
    pub fn load(path: &Path) -> Result<Self> {
        let path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: GroupManifest = serde_json::from_str(&text)?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::validation(format!(
                "unsupported group manifest version {}",
                manifest.version
            )));
        }
        let dir = path.parent().unwrap_or(Path::new("."));
        let members = manifest
            .members
            .iter()
            .map(|e| {
                let ckpt = ModelCheckpoint::load(&dir.join(&e.checkpoint), Some(&manifest.fingerprint))?;
                Ok(GroupMember {
                    fold: e.fold,
                    seed: e.seed,
                    model: ckpt.model()?,
                    standardization: ckpt.standardization,
                    best_epoch: e.best_epoch,
                    curve: Vec::new(),
                    oof_map: e.oof_map,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            domain: manifest.domain,
            feature_set: manifest.feature_set,
            columns: manifest.columns,
            fingerprint: manifest.fingerprint,
            config: manifest.train_config,
            folds: manifest.folds,
            pseudo_trials: manifest.pseudo_trials,
            members,
            group_map: manifest.group_map,
        })
    }
}
