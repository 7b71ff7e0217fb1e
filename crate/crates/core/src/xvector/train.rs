//! Mini-batch training with SGD + momentum and focal loss.
//!
//! Batches use fixed-length random crops so every item in a batch has the
//! same shape; validation and scoring always see whole utterances. All
//! randomness (split, shuffles, crop offsets, initialization) flows from one
//! seed, and per-item gradients are accumulated in a fixed order, so a run is
//! reproducible bit for bit at any worker count.

use ndarray::s;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{digest_str, FeatureMatrix};
use crate::protocol::Label;
use crate::xvector::{
    focal_loss, FocalLossParams, Gradients, XVectorDims, XVectorModel, MIN_FRAMES,
};

/// Training hyper-parameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub h1: usize,
    pub h2: usize,
    pub embed_dim: usize,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Frames per training crop; utterances shorter than this are an error.
    pub crop_frames: usize,
    pub loss: FocalLossParams,
    pub seed: u64,
    /// Epochs without validation improvement before the learning rate halves.
    pub plateau_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            h1: 256,
            h2: 256,
            embed_dim: 128,
            lr: 1e-3,
            momentum: 0.9,
            epochs: 30,
            batch_size: 64,
            crop_frames: 150,
            loss: FocalLossParams::default(),
            seed: 42,
            plateau_patience: 3,
        }
    }
}

impl TrainConfig {
    fn digest(&self, input_dim: usize, kind: &str) -> String {
        digest_str(&format!(
            "xvector;kind={kind};D={input_dim};h1={};h2={};E={};lr={};mom={};epochs={};batch={};crop={};alpha={};gamma={};seed={};patience={}",
            self.h1,
            self.h2,
            self.embed_dim,
            self.lr,
            self.momentum,
            self.epochs,
            self.batch_size,
            self.crop_frames,
            self.loss.alpha,
            self.loss.gamma,
            self.seed,
            self.plateau_patience,
        ))
    }
}

/// Outcome of a training run. The model is the snapshot with the best
/// validation loss; the histories have one entry per epoch run.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: XVectorModel,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub seed: u64,
}

fn label_target(label: Label) -> u8 {
    match label {
        Label::Bonafide => 1,
        Label::Spoof => 0,
    }
}

/// Train a model on labeled utterances.
///
/// The dataset is split 80/20 per class into train/validation with seeded
/// shuffles; each epoch re-shuffles the training half, draws one random crop
/// per item, averages per-item gradients across the batch and takes an SGD
/// step. Validation uses whole utterances; the best-validation snapshot is
/// returned.
pub fn train(dataset: &[(FeatureMatrix, Label)], cfg: &TrainConfig) -> Result<TrainState> {
    if dataset.is_empty() {
        return Err(Error::EmptyFeatures);
    }
    let has_bona = dataset.iter().any(|(_, l)| *l == Label::Bonafide);
    let has_spoof = dataset.iter().any(|(_, l)| *l == Label::Spoof);
    if !has_bona || !has_spoof {
        return Err(Error::SingleClassDataset);
    }
    let input_dim = dataset[0].0.dim();
    let kind = dataset[0].0.kind();
    for (f, _) in dataset {
        if f.dim() != input_dim {
            return Err(Error::DimensionMismatch(format!(
                "mixed feature dimensions {} and {}",
                input_dim,
                f.dim()
            )));
        }
        if f.kind() != kind {
            return Err(Error::KindMismatch {
                model: kind.to_string(),
                features: f.kind().to_string(),
            });
        }
    }
    if cfg.crop_frames < MIN_FRAMES {
        return Err(Error::UtteranceTooShort {
            frames: cfg.crop_frames,
            min: MIN_FRAMES,
        });
    }
    let shortest = dataset.iter().map(|(f, _)| f.num_frames()).min().unwrap();
    if shortest < cfg.crop_frames {
        return Err(Error::CropLongerThanShortestUtterance {
            crop: cfg.crop_frames,
            shortest,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dims = XVectorDims::new(input_dim, cfg.h1, cfg.h2, cfg.embed_dim);
    let mut model = XVectorModel::new_random(dims, kind, rng.random());
    model.set_config_digest(cfg.digest(input_dim, kind.as_str()));

    // Stratified 80/20 split.
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    for class in [Label::Bonafide, Label::Spoof] {
        let mut idx: Vec<usize> = dataset
            .iter()
            .enumerate()
            .filter(|(_, (_, l))| *l == class)
            .map(|(i, _)| i)
            .collect();
        idx.shuffle(&mut rng);
        let n_train = ((idx.len() as f64) * 0.8).floor().max(1.0) as usize;
        train_idx.extend_from_slice(&idx[..n_train.min(idx.len())]);
        val_idx.extend_from_slice(&idx[n_train.min(idx.len())..]);
    }

    let mut velocity = Gradients::zeros_like(&model);
    let mut lr = cfg.lr;
    let mut train_hist = Vec::with_capacity(cfg.epochs);
    let mut val_hist = Vec::with_capacity(cfg.epochs);
    let mut best_val = f64::INFINITY;
    let mut best_model = model.clone();
    let mut best_epoch = 0;
    let mut stale_epochs = 0;

    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in train_idx.chunks(cfg.batch_size.max(1)) {
            // Crop offsets are drawn sequentially so the RNG stream does not
            // depend on worker count.
            let items: Vec<(usize, usize)> = batch
                .iter()
                .map(|&i| {
                    let t = dataset[i].0.num_frames();
                    let start = if t == cfg.crop_frames {
                        0
                    } else {
                        rng.random_range(0..=t - cfg.crop_frames)
                    };
                    (i, start)
                })
                .collect();

            let results: Vec<(f64, Gradients)> = items
                .par_iter()
                .map(|&(i, start)| {
                    let (f, label) = &dataset[i];
                    let crop = f.values().slice(s![start..start + cfg.crop_frames, ..]);
                    model.backward_view(&crop, label_target(*label), &cfg.loss)
                })
                .collect::<Result<_>>()?;

            let scale = 1.0 / items.len() as f64;
            let mut batch_grads = Gradients::zeros_like(&model);
            for (loss, grads) in &results {
                epoch_loss += loss;
                batch_grads.add_scaled(grads, scale);
            }
            model.apply_step(&mut velocity, &batch_grads, lr, cfg.momentum);
        }
        let train_loss = epoch_loss / train_idx.len() as f64;

        let val_loss = if val_idx.is_empty() {
            train_loss
        } else {
            let losses: Vec<f64> = val_idx
                .par_iter()
                .map(|&i| {
                    let (f, label) = &dataset[i];
                    let (pb, _) = model.forward_view(&f.values().view())?;
                    Ok(focal_loss(pb, label_target(*label), &cfg.loss))
                })
                .collect::<Result<_>>()?;
            losses.iter().sum::<f64>() / losses.len() as f64
        };

        train_hist.push(train_loss);
        val_hist.push(val_loss);

        if val_loss < best_val {
            best_val = val_loss;
            best_model = model.clone();
            best_epoch = epoch;
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= cfg.plateau_patience {
                lr *= 0.5;
                stale_epochs = 0;
                log::info!("validation plateau at epoch {epoch}; halving lr to {lr}");
            }
        }
    }

    Ok(TrainState {
        model: best_model,
        train_loss: train_hist,
        val_loss: val_hist,
        epochs_run: cfg.epochs,
        best_epoch,
        seed: cfg.seed,
    })
}
