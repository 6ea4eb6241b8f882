//! Deterministic training loop with an AdamW optimizer and checkpoints.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::diffkit::{DiffError, Graph, ParamStore};
use crate::geom::PlanePrimitive;
use crate::matchloss::{total_loss_graph, LossBreakdown, LossConfig, LossError};
use crate::model::{prepare_cloud, Model, ModelConfig, ModelError, PreparedInput};
use crate::segment::SegmentParams;
use crate::synth::Sample;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("empty training set")]
    EmptyDataset,
    #[error("non-finite loss or gradient at epoch {epoch}; last good checkpoint: {}", last_checkpoint.as_ref().map_or("none".to_string(), |p| p.display().to_string()))]
    NonFinite {
        epoch: usize,
        last_checkpoint: Option<PathBuf>,
    },
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(LossError),
}

impl From<DiffError> for TrainError {
    fn from(e: DiffError) -> Self {
        match e {
            DiffError::Io(e) => TrainError::Io(e),
            DiffError::Format(m) => TrainError::Format(m),
            e => TrainError::Model(ModelError::Diff(e)),
        }
    }
}

impl From<LossError> for TrainError {
    fn from(e: LossError) -> Self {
        match e {
            LossError::Diff(d) => d.into(),
            e => TrainError::Loss(e),
        }
    }
}

impl TrainError {
    fn is_non_finite(&self) -> bool {
        matches!(
            self,
            TrainError::Model(ModelError::Diff(DiffError::NonFinite(_)))
                | TrainError::Loss(LossError::NonFinite)
        )
    }
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    /// Multiplier applied to the learning rate every `decay_every` epochs.
    pub lr_decay: f64,
    pub decay_every: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Epochs between checkpoints; 0 disables periodic checkpoints.
    pub checkpoint_every: usize,
    /// Ground-truth points kept per sample for the loss, split across
    /// primitives in proportion to their support.
    pub gt_points: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 5e-4,
            lr_decay: 0.9,
            decay_every: 20,
            epochs: 60,
            batch_size: 8,
            seed: 0,
            checkpoint_every: 10,
            gt_points: 2048,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            loss: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be finite and non-negative");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be finite and non-negative");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return bad("lr_decay must lie in (0, 1)");
        }
        if self.decay_every == 0 || self.batch_size == 0 || self.gt_points == 0 {
            return bad("decay_every, batch_size and gt_points must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0
        {
            return bad("moment coefficients must lie in [0, 1) and eps must be positive");
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (zero based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi((epoch / self.decay_every) as i32)
    }
}

/// A sample ready for training: prepared input plus subsampled targets.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub input: PreparedInput,
    pub gt: Vec<PlanePrimitive>,
}

/// Keeps about `target` points in total, spread over primitives in
/// proportion to their size (at least one each), by even strides.
pub fn subsample_ground_truth(gt: &[PlanePrimitive], target: usize) -> Vec<PlanePrimitive> {
    let total: usize = gt.iter().map(|p| p.points.len()).sum();
    if total <= target {
        return gt.to_vec();
    }
    gt.iter()
        .map(|p| {
            let n = p.points.len();
            let k = ((n * target) as f64 / total as f64).round().max(1.0) as usize;
            let k = k.min(n);
            let points = (0..k).map(|i| p.points[i * n / k]).collect();
            PlanePrimitive {
                points,
                ..p.clone()
            }
        })
        .collect()
}

/// Segments every input cloud and builds its patch grouping.
pub fn prepare_samples(
    samples: &[Sample],
    model_cfg: &ModelConfig,
    seg: &SegmentParams,
    gt_points: usize,
) -> Result<Vec<TrainSample>> {
    samples
        .par_iter()
        .map(|s| {
            let input = prepare_cloud(&s.input_cloud, seg, model_cfg)?;
            Ok(TrainSample {
                input,
                gt: subsample_ground_truth(&s.gt_primitives, gt_points),
            })
        })
        .collect()
}

/// First and second moment estimates, one buffer per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamW {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    /// One update from the gradients stored in `params`.
    pub fn update(&mut self, params: &mut ParamStore, lr: f64, cfg: &TrainConfig) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
                let step =
                    (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.eps) + cfg.weight_decay * p.value[i];
                p.value[i] -= lr * step;
            }
        }
    }
}

/// Mean losses of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub steps: usize,
    pub loss: LossBreakdown,
}

/// Model, optimizer state and epoch counter.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub optimizer: AdamW,
    /// Number of completed epochs.
    pub epoch: usize,
    pub config: TrainConfig,
    pub last_checkpoint: Option<PathBuf>,
}

/// Where `fit` writes its artifacts.
#[derive(Debug, Clone, Default)]
pub struct FitOutputs {
    pub checkpoint_dir: Option<PathBuf>,
    pub history: Option<PathBuf>,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = AdamW::new(&model.params);
        Ok(Self {
            model,
            optimizer,
            epoch: 0,
            config,
            last_checkpoint: None,
        })
    }

    /// Loss and parameter gradients of one sample.
    fn sample_gradients(&self, s: &TrainSample) -> Result<(LossBreakdown, Vec<Vec<f64>>)> {
        let mut g = Graph::new();
        let out = self.model.forward(&mut g, &s.input)?;
        let (loss, breakdown, _) =
            total_loss_graph(&mut g, &out.predictions, &s.gt, &self.config.loss)?;
        if !breakdown.total.is_finite() {
            return Err(TrainError::Loss(LossError::NonFinite));
        }
        g.backward(loss)?;
        let mut grads: Vec<Vec<f64>> = self
            .model
            .params
            .iter()
            .map(|p| vec![0.0; p.value.len()])
            .collect();
        for (id, t) in g.param_leaves() {
            if let Some(gr) = g.grad(t) {
                for (a, b) in grads[id.index()].iter_mut().zip(gr) {
                    *a += b;
                }
            }
        }
        Ok((breakdown, grads))
    }

    /// One pass over `samples` in a seeded shuffled order.
    pub fn train_epoch(&mut self, samples: &[TrainSample]) -> Result<EpochStats> {
        if samples.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let epoch = self.epoch;
        let lr = self.config.lr_at(epoch);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(
            self.config.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        ));

        let mut sum = LossBreakdown::default();
        let mut steps = 0;
        for batch in order.chunks(self.config.batch_size) {
            let results: Vec<Result<(LossBreakdown, Vec<Vec<f64>>)>> = batch
                .par_iter()
                .map(|&i| self.sample_gradients(&samples[i]))
                .collect();
            self.model.params.zero_grad();
            let scale = 1.0 / batch.len() as f64;
            for r in results {
                let (b, grads) = r.map_err(|e| self.non_finite_or(e))?;
                sum.add(&b);
                for (p, g) in self.model.params.iter_mut().zip(grads) {
                    for (a, x) in p.grad.iter_mut().zip(g) {
                        *a += scale * x;
                    }
                }
            }
            if !self.model.params.grad_norm().is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    last_checkpoint: self.last_checkpoint.clone(),
                });
            }
            self.optimizer
                .update(&mut self.model.params, lr, &self.config);
            steps += 1;
        }
        self.model.params.zero_grad();
        self.epoch += 1;
        Ok(EpochStats {
            epoch,
            lr,
            steps,
            loss: sum.scaled(1.0 / samples.len() as f64),
        })
    }

    fn non_finite_or(&self, e: TrainError) -> TrainError {
        if e.is_non_finite() {
            TrainError::NonFinite {
                epoch: self.epoch,
                last_checkpoint: self.last_checkpoint.clone(),
            }
        } else {
            e
        }
    }

    /// Trains from the current epoch up to `config.epochs`, appending one
    /// JSON line per epoch to the history file and checkpointing at the
    /// configured interval and at the end.
    pub fn fit(&mut self, samples: &[TrainSample], out: &FitOutputs) -> Result<Vec<EpochStats>> {
        let mut history = match &out.history {
            Some(p) => Some(BufWriter::new(
                File::options().create(true).append(true).open(p)?,
            )),
            None => None,
        };
        let mut stats = Vec::new();
        while self.epoch < self.config.epochs {
            let s = self.train_epoch(samples)?;
            if let Some(h) = &mut history {
                serde_json::to_writer(&mut *h, &s).map_err(std::io::Error::other)?;
                h.write_all(b"\n")?;
                h.flush()?;
            }
            stats.push(s);
            let every = self.config.checkpoint_every;
            let done = self.epoch == self.config.epochs;
            if let Some(dir) = &out.checkpoint_dir {
                if done || (every > 0 && self.epoch % every == 0) {
                    let path = dir.join("checkpoint.bin");
                    save_checkpoint(&path, self)?;
                    self.last_checkpoint = Some(path);
                }
            }
        }
        Ok(stats)
    }
}

const MOMENT_PREFIX_M: &str = "adam.m/";
const MOMENT_PREFIX_V: &str = "adam.v/";

/// Writes weights, optimizer moments, epoch and configs.
pub fn save_checkpoint(path: &Path, t: &Trainer) -> Result<()> {
    let mut store = t.model.params.clone();
    let shapes: Vec<(String, usize, usize)> = t
        .model
        .params
        .iter()
        .map(|p| (p.name.clone(), p.rows, p.cols))
        .collect();
    for (prefix, moments) in [
        (MOMENT_PREFIX_M, &t.optimizer.m),
        (MOMENT_PREFIX_V, &t.optimizer.v),
    ] {
        for ((name, r, c), m) in shapes.iter().zip(moments) {
            store.add(&format!("{prefix}{name}"), *r, *c, m.clone())?;
        }
    }
    let meta = json!({
        "checkpoint_version": CHECKPOINT_FORMAT_VERSION,
        "epoch": t.epoch,
        "step": t.optimizer.step,
        "model": t.model.config,
        "train": t.config,
    });
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    store.save(path, meta)?;
    Ok(())
}

/// Restores a trainer exactly as it was saved. The stored training config
/// is returned as part of the trainer; callers may override fields such as
/// `epochs` before resuming.
pub fn load_checkpoint(path: &Path) -> Result<Trainer> {
    let (store, meta) = ParamStore::load(path)?;
    let field = |k: &str| {
        meta.get(k)
            .cloned()
            .ok_or_else(|| TrainError::Format(format!("missing `{k}` in header")))
    };
    let model_cfg: ModelConfig = serde_json::from_value(field("model")?)
        .map_err(|e| TrainError::Format(format!("model config: {e}")))?;
    let train_cfg: TrainConfig = serde_json::from_value(field("train")?)
        .map_err(|e| TrainError::Format(format!("train config: {e}")))?;
    let epoch = field("epoch")?
        .as_u64()
        .ok_or_else(|| TrainError::Format("bad `epoch`".into()))? as usize;
    let step = field("step")?
        .as_u64()
        .ok_or_else(|| TrainError::Format("bad `step`".into()))?;

    let mut model = Model::new(model_cfg)?;
    let mut optimizer = AdamW::new(&model.params);
    optimizer.step = step;
    let names: Vec<String> = model.params.iter().map(|p| p.name.clone()).collect();
    for (i, name) in names.iter().enumerate() {
        let len = optimizer.m[i].len();
        let load = |n: &str| -> Result<Vec<f64>> {
            let p = store
                .by_name(n)
                .map_err(|_| TrainError::Format(format!("missing parameter `{n}`")))?;
            if p.value.len() != len {
                return Err(TrainError::Format(format!(
                    "parameter `{n}` has shape {}x{}",
                    p.rows, p.cols
                )));
            }
            Ok(p.value.clone())
        };
        let w = load(name)?;
        optimizer.m[i] = load(&format!("{MOMENT_PREFIX_M}{name}"))?;
        optimizer.v[i] = load(&format!("{MOMENT_PREFIX_V}{name}"))?;
        let id = model.params.id_of(name)?;
        model.params.get_mut(id).value = w;
    }
    let mut t = Trainer::new(model, train_cfg)?;
    t.optimizer = optimizer;
    t.epoch = epoch;
    t.last_checkpoint = Some(path.to_path_buf());
    Ok(t)
}

/// Loads only the weights of a checkpoint into an existing model.
pub fn load_weights(path: &Path, model: &mut Model) -> Result<()> {
    let (store, _) = ParamStore::load(path)?;
    for p in model.params.iter_mut() {
        let src = store
            .by_name(&p.name)
            .map_err(|_| TrainError::Format(format!("missing parameter `{}`", p.name)))?;
        if (src.rows, src.cols) != (p.rows, p.cols) {
            return Err(TrainError::Format(format!(
                "parameter `{}` is {}x{} in the file but {}x{} in the model",
                p.name, src.rows, src.cols, p.rows, p.cols
            )));
        }
        p.value.clone_from(&src.value);
    }
    Ok(())
}
