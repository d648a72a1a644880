//! Mini-batch training with AdamW, StepLR, random time crops and early
//! stopping on validation loss.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::net::{mse_loss, NetError, SpatialSpectrum, TfMamba, N_DOA};
use crate::numcore::{Checkpoint, CheckpointError, Graph, NumError, OptimConfig, OptimState, ParamStore, Tensor};
use crate::pipeline::Example;
use crate::sim::splitmix64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without improvement before stopping.
    pub patience: usize,
    /// Seeds the per-epoch shuffle and crop positions.
    pub shuffle_seed: u64,
    pub init_seed: u64,
    /// Length of random training crops in STFT frames; 0 uses whole clips.
    pub crop_frames: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            max_epochs: 100,
            patience: 20,
            shuffle_seed: 0,
            init_seed: 0,
            crop_frames: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("non-finite value in epoch {epoch} on {id}: {source}")]
    NonFinite { epoch: usize, id: String, source: NumError },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based epoch number.
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub improved: bool,
}

pub struct Trainer {
    pub model: TfMamba,
    pub config: TrainConfig,
    pub params: ParamStore,
    pub optim: OptimState,
    /// Completed epochs.
    pub epoch: usize,
    pub best_loss: f64,
    pub best_epoch: usize,
    pub best_params: ParamStore,
    pub log: Vec<EpochLog>,
}

fn seed_for(base: u64, epoch: usize, item: usize) -> u64 {
    splitmix64(splitmix64(base ^ splitmix64(epoch as u64)) ^ item as u64)
}

impl Trainer {
    pub fn new(model: TfMamba, config: TrainConfig, optim: OptimConfig) -> Result<Self, TrainError> {
        if config.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        let params = model.init(config.init_seed);
        Ok(Self {
            best_params: params.clone(),
            params,
            optim: OptimState::new(optim)?,
            model,
            config,
            epoch: 0,
            best_loss: f64::INFINITY,
            best_epoch: 0,
            log: Vec::new(),
        })
    }

    /// Restores the state written by [`Trainer::checkpoint`]; `best` holds the
    /// best parameters so far (defaults to the resumed ones).
    pub fn resume(
        model: TfMamba,
        config: TrainConfig,
        ckpt: Checkpoint,
        best: Option<ParamStore>,
    ) -> Result<Self, TrainError> {
        let optim = ckpt
            .optim
            .ok_or_else(|| CheckpointError::Missing("optimizer state".into()))?;
        let expected = model.init(0);
        if expected.len() != ckpt.params.len()
            || expected
                .iter()
                .any(|(k, t)| ckpt.params.get(k).map(|p| p.shape() != t.shape()).unwrap_or(true))
        {
            return Err(TrainError::Config(
                "checkpoint parameters do not match the network configuration".into(),
            ));
        }
        let meta = |k: &str| ckpt.meta.get(k).copied();
        Ok(Self {
            best_params: best.unwrap_or_else(|| ckpt.params.clone()),
            params: ckpt.params,
            optim,
            model,
            config,
            epoch: meta("epoch").unwrap_or(0.0) as usize,
            best_loss: meta("best_loss").unwrap_or(f64::INFINITY),
            best_epoch: meta("best_epoch").unwrap_or(0.0) as usize,
            log: Vec::new(),
        })
    }

    /// Current parameters, optimizer state and progress counters.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut meta = std::collections::BTreeMap::new();
        meta.insert("epoch".to_string(), self.epoch as f64);
        meta.insert("best_epoch".to_string(), self.best_epoch as f64);
        if self.best_loss.is_finite() {
            meta.insert("best_loss".to_string(), self.best_loss);
        }
        Checkpoint {
            params: self.params.clone(),
            optim: Some(self.optim.clone()),
            meta,
        }
    }

    /// Random crop of whole pooling windows that contains an active frame
    /// when one can be found in a few draws.
    fn crop(&self, ex: &Example, seed: u64) -> (Tensor, SpatialSpectrum, Vec<bool>) {
        let pool = self.model.config.pool_factor;
        let out_frames = ex.active.len();
        let want = (self.config.crop_frames / pool).max(1);
        if self.config.crop_frames == 0 || want >= out_frames {
            return (ex.features.clone(), ex.target.clone(), ex.active.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut start = 0;
        for _ in 0..8 {
            start = rng.gen_range(0..=out_frames - want);
            if ex.active[start..start + want].iter().any(|&a| a) {
                break;
            }
        }
        let row = ex.features.numel() / ex.frames();
        let data = ex.features.data()[start * pool * row..(start + want) * pool * row].to_vec();
        let mut shape = ex.features.shape().to_vec();
        shape[0] = want * pool;
        let features = Tensor::new(shape, data).expect("crop of whole frames");
        let target = SpatialSpectrum::new(
            ex.target.values[start * N_DOA..(start + want) * N_DOA].to_vec(),
            ex.target.frame_rate,
        );
        (features, target, ex.active[start..start + want].to_vec())
    }

    /// Loss and parameter gradients of one example; `None` when the crop
    /// has no active frame.
    fn sample_grad(&self, ex: &Example, seed: u64) -> Result<Option<(f64, ParamStore)>, TrainError> {
        let (x, target, mask) = self.crop(ex, seed);
        if !mask.iter().any(|&m| m) {
            return Ok(None);
        }
        let wrap = |source: NumError| TrainError::NonFinite {
            epoch: self.epoch + 1,
            id: ex.id.clone(),
            source,
        };
        let mut g = Graph::new();
        let xv = g.input("x", x).map_err(wrap)?;
        let pred = match self.model.forward(&mut g, &self.params, xv) {
            Err(NetError::Num(e @ NumError::NonFinite { .. })) => return Err(wrap(e)),
            r => r?,
        };
        let loss = self.model.loss(&mut g, pred, &target, &mask)?;
        let grads = g.backward(loss).map_err(wrap)?;
        Ok(Some((g.value(loss).item(), grads.params)))
    }

    /// One pass over `train` in a seeded order; returns the mean sample loss.
    pub fn train_epoch(&mut self, train: &[Example]) -> Result<f64, TrainError> {
        if train.is_empty() {
            return Err(TrainError::EmptySplit("train"));
        }
        self.optim.steplr(self.epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed_for(
            self.config.shuffle_seed,
            self.epoch,
            usize::MAX,
        )));
        let (mut total, mut counted) = (0.0, 0usize);
        for batch in order.chunks(self.config.batch_size) {
            let results: Vec<_> = batch
                .par_iter()
                .map(|&i| self.sample_grad(&train[i], seed_for(self.config.shuffle_seed, self.epoch, i)))
                .collect();
            let mut sum: Option<ParamStore> = None;
            let mut n = 0usize;
            for r in results {
                let Some((loss, grads)) = r? else { continue };
                total += loss;
                n += 1;
                match &mut sum {
                    None => sum = Some(grads),
                    Some(acc) => {
                        for (k, g) in grads {
                            acc.get_mut(&k).expect("same parameter set").add_assign(&g);
                        }
                    }
                }
            }
            let Some(mut grads) = sum else { continue };
            for g in grads.values_mut() {
                g.data_mut().iter_mut().for_each(|v| *v /= n as f64);
            }
            self.optim.adamw_step(&mut self.params, &grads)?;
            counted += n;
        }
        self.epoch += 1;
        if counted == 0 {
            return Err(TrainError::EmptySplit("active training"));
        }
        Ok(total / counted as f64)
    }

    /// Mean full-clip masked MSE over examples with at least one active frame.
    pub fn eval_loss(&self, examples: &[Example]) -> Result<f64, TrainError> {
        let losses: Vec<Result<Option<f64>, TrainError>> = examples
            .par_iter()
            .map(|ex| {
                if !ex.active.iter().any(|&a| a) {
                    return Ok(None);
                }
                let pred = self.model.predict(&self.params, &ex.features)?;
                Ok(Some(mse_loss(&pred, &ex.target, &ex.active)?))
            })
            .collect();
        let mut kept = Vec::new();
        for l in losses {
            kept.extend(l?);
        }
        if kept.is_empty() {
            return Err(TrainError::EmptySplit("active evaluation"));
        }
        Ok(kept.iter().sum::<f64>() / kept.len() as f64)
    }

    /// Trains until `max_epochs` or until the monitored loss (validation, or
    /// training when `val` is empty) has not improved for `patience` epochs.
    pub fn fit(
        &mut self,
        train: &[Example],
        val: &[Example],
        mut on_epoch: impl FnMut(&EpochLog, &Trainer),
    ) -> Result<(), TrainError> {
        while self.epoch < self.config.max_epochs && !self.should_stop() {
            let lr = self.optim.steplr(self.epoch);
            let train_loss = self.train_epoch(train)?;
            let val_loss = if val.is_empty() {
                None
            } else {
                Some(self.eval_loss(val)?)
            };
            let monitored = val_loss.unwrap_or(train_loss);
            let improved = monitored < self.best_loss;
            if improved {
                self.best_loss = monitored;
                self.best_epoch = self.epoch;
                self.best_params = self.params.clone();
            }
            let entry = EpochLog {
                epoch: self.epoch,
                lr,
                train_loss,
                val_loss,
                improved,
            };
            on_epoch(&entry, self);
            self.log.push(entry);
        }
        Ok(())
    }

    pub fn should_stop(&self) -> bool {
        self.epoch > 0 && self.epoch - self.best_epoch >= self.config.patience
    }
}
