//! Training loop and evaluation for the toy classifier.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::pairwise_cosine_similarity;
use crate::autodiff::Tape;
use crate::error::{Error, Result};

use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::dataset::{BandDataset, Sample};
use super::model::{ModelKind, NetGraph, ToyNet};
use super::optim::Optimizer;

/// Offset separating the shuffle stream from parameter initialization.
const SHUFFLE_STREAM: u64 = 0x5eed_5eed;

/// One line of the metric log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: usize,
    /// Mean pre-update batch loss over the epoch.
    pub train_loss: f64,
    pub held_out_accuracy: f64,
    /// Largest off-diagonal cosine similarity between the FDW weights;
    /// absent for a static layer or a single weight.
    pub max_similarity: Option<f64>,
}

impl fmt::Display for EpochMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} step={} loss={} accuracy={} similarity=",
            self.epoch, self.step, self.train_loss, self.held_out_accuracy
        )?;
        match self.max_similarity {
            Some(s) => write!(f, "{s:e}"),
            None => write!(f, "-"),
        }
    }
}

impl EpochMetrics {
    /// Inverse of `Display`.
    pub fn parse(line: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("malformed metric line {line:?}"));
        let mut fields = line.split_whitespace().map(|kv| kv.split_once('='));
        let mut next = |key: &str| -> Result<&str> {
            match fields.next() {
                Some(Some((k, v))) if k == key => Ok(v),
                _ => Err(bad()),
            }
        };
        let epoch = next("epoch")?.parse().map_err(|_| bad())?;
        let step = next("step")?.parse().map_err(|_| bad())?;
        let train_loss = next("loss")?.parse().map_err(|_| bad())?;
        let held_out_accuracy = next("accuracy")?.parse().map_err(|_| bad())?;
        let max_similarity = match next("similarity")? {
            "-" => None,
            v => Some(v.parse().map_err(|_| bad())?),
        };
        Ok(Self {
            epoch,
            step,
            train_loss,
            held_out_accuracy,
            max_similarity,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evaluation {
    pub correct: usize,
    pub total: usize,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl Evaluation {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

pub fn evaluate_net<'a>(net: &ToyNet, samples: impl IntoIterator<Item = &'a Sample>) -> Result<Evaluation> {
    let classes = net.classes();
    let mut confusion = vec![vec![0; classes]; classes];
    let (mut correct, mut total) = (0, 0);
    for s in samples {
        if s.label >= classes {
            return Err(Error::InvalidArgument(format!(
                "label {} out of range for {classes} classes",
                s.label
            )));
        }
        let p = net.predict(&s.image)?;
        confusion[s.label][p] += 1;
        correct += usize::from(p == s.label);
        total += 1;
    }
    Ok(Evaluation {
        correct,
        total,
        confusion,
    })
}

fn check_compatible(config: &TrainConfig, dataset: &BandDataset) -> Result<()> {
    if dataset.thresholds != config.layer.thresholds {
        return Err(Error::InvalidArgument(format!(
            "dataset bands {:?} differ from model bands {:?}",
            dataset.thresholds, config.layer.thresholds
        )));
    }
    if dataset.s != config.dataset.s {
        return Err(Error::InvalidArgument(format!(
            "dataset image side {} differs from configured {}",
            dataset.s, config.dataset.s
        )));
    }
    if config.layer.c_in != 1 {
        return Err(Error::InvalidArgument(format!(
            "images have one channel, layer expects {}",
            config.layer.c_in
        )));
    }
    Ok(())
}

/// Accuracy and confusion counts of a checkpoint on every sample of
/// `dataset`.
pub fn evaluate(checkpoint: &Checkpoint, dataset: &BandDataset) -> Result<Evaluation> {
    check_compatible(&checkpoint.config, dataset)?;
    evaluate_net(&checkpoint.net, &dataset.samples)
}

/// Model plus optimizer state.
pub struct Trainer {
    pub net: ToyNet,
    optimizer: Optimizer,
    step: usize,
}

impl Trainer {
    pub fn new(config: &TrainConfig, kind: ModelKind) -> Result<Self> {
        config.validate()?;
        let mut layer = config.layer.clone();
        layer.seed = config.seed;
        let net = ToyNet::init(kind, &layer, config.layer.bands())?;
        let optimizer = Optimizer::new(
            config.optimizer,
            config.lr,
            &net.named_tensors().iter().map(|(_, t)| *t).collect::<Vec<_>>(),
        );
        Ok(Self {
            net,
            optimizer,
            step: 0,
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Mean cross-entropy of the batch under the current parameters.
    pub fn loss(&self, batch: &[&Sample]) -> Result<f64> {
        let mut tape = Tape::new();
        let mut graph = NetGraph::new(&mut tape, &self.net)?;
        let loss = graph.batch_loss(&mut tape, batch.iter().map(|s| (&s.image, s.label)))?;
        Ok(tape.value(loss).data()[0])
    }

    /// One optimizer update; returns the loss before the update.
    pub fn step(&mut self, batch: &[&Sample]) -> Result<f64> {
        let mut tape = Tape::new();
        let mut graph = NetGraph::new(&mut tape, &self.net)?;
        let loss = graph.batch_loss(&mut tape, batch.iter().map(|s| (&s.image, s.label)))?;
        let value = tape.value(loss).data()[0];
        if !value.is_finite() {
            return Err(Error::Diverged {
                step: self.step + 1,
                loss: value,
            });
        }
        let grads = tape.grad(loss)?;
        let grads = graph
            .params()
            .iter()
            .map(|&v| grads.expect(v))
            .collect::<Result<Vec<_>>>()?;
        self.optimizer.step(&mut self.net.tensors_mut(), &grads)?;
        self.step += 1;
        Ok(value)
    }

    fn max_similarity(&self) -> Result<Option<f64>> {
        match self.net.layer_state() {
            Some(state) if state.config().n >= 2 => {
                Ok(Some(pairwise_cosine_similarity(&state.weights()?)?.max_off_diagonal()))
            }
            _ => Ok(None),
        }
    }
}

pub fn train(config: &TrainConfig, dataset: &BandDataset, kind: ModelKind) -> Result<Checkpoint> {
    train_with(config, dataset, kind, |_| {})
}

/// Trains for `config.steps` updates, calling `on_epoch` after every
/// (possibly partial) pass over the training split.
pub fn train_with(
    config: &TrainConfig,
    dataset: &BandDataset,
    kind: ModelKind,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Checkpoint> {
    check_compatible(config, dataset)?;
    let train_idx = dataset.train_indices();
    let held_out = dataset.subset(&dataset.held_out_indices());
    if train_idx.is_empty() {
        return Err(Error::InvalidArgument("training split is empty".into()));
    }
    let mut trainer = Trainer::new(config, kind)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(SHUFFLE_STREAM));
    let mut log = Vec::new();
    let mut epoch = 0;
    while trainer.step < config.steps {
        epoch += 1;
        let mut order = train_idx.clone();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut batches) = (0.0, 0);
        for chunk in order.chunks(config.batch) {
            if trainer.step >= config.steps {
                break;
            }
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &dataset.samples[i]).collect();
            loss_sum += trainer.step(&batch)?;
            batches += 1;
        }
        let metrics = EpochMetrics {
            epoch,
            step: trainer.step,
            train_loss: loss_sum / batches as f64,
            held_out_accuracy: evaluate_net(&trainer.net, &held_out.samples)?.accuracy(),
            max_similarity: trainer.max_similarity()?,
        };
        on_epoch(&metrics);
        log.push(metrics);
    }
    let mut saved = config.clone();
    saved.layer.seed = config.seed;
    Ok(Checkpoint {
        config: saved,
        kind,
        step: trainer.step,
        log,
        net: trainer.net,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::dataset::gen_band_dataset;

    fn small() -> (TrainConfig, BandDataset) {
        let mut cfg = TrainConfig::default();
        cfg.layer.c_out = 4;
        cfg.layer.n = 4;
        cfg.dataset.size = 40;
        cfg.dataset.s = 16;
        cfg.batch = 8;
        cfg.steps = 5;
        let data = gen_band_dataset(
            3,
            cfg.dataset.size,
            cfg.dataset.s,
            &cfg.layer.thresholds,
            cfg.dataset.sigma,
        )
        .unwrap();
        (cfg, data)
    }

    #[test]
    fn metric_line_round_trips() {
        let m = EpochMetrics {
            epoch: 3,
            step: 300,
            train_loss: 0.1 + 0.2,
            held_out_accuracy: 0.9125,
            max_similarity: Some(3.3e-17),
        };
        assert_eq!(EpochMetrics::parse(&m.to_string()).unwrap(), m);
        let m = EpochMetrics {
            max_similarity: None,
            ..m
        };
        assert_eq!(EpochMetrics::parse(&m.to_string()).unwrap(), m);
        assert!(EpochMetrics::parse("epoch=1 loss=2").is_err());
    }

    #[test]
    fn zero_rate_keeps_parameters() {
        let (mut cfg, data) = small();
        cfg.lr = 0.0;
        let ckpt = train(&cfg, &data, ModelKind::FdConv).unwrap();
        let fresh = Trainer::new(&cfg, ModelKind::FdConv).unwrap();
        assert_eq!(ckpt.net, fresh.net);
        assert_eq!(ckpt.step, 5);
    }

    #[test]
    fn one_step_lowers_batch_loss() {
        let (cfg, data) = small();
        let mut trainer = Trainer::new(&cfg, ModelKind::FdConv).unwrap();
        let batch: Vec<&Sample> = data.samples[..8].iter().collect();
        let before = trainer.step(&batch).unwrap();
        assert!(trainer.loss(&batch).unwrap() < before);
    }

    #[test]
    fn untrained_model_scores_chance() {
        let (cfg, data) = small();
        let ckpt = train(&TrainConfig { steps: 0, ..cfg }, &data, ModelKind::FdConv).unwrap();
        let e = evaluate(&ckpt, &data).unwrap();
        assert!((0.15..=0.35).contains(&e.accuracy()));
        assert_eq!(e.confusion.iter().map(|r| r[0]).sum::<usize>(), data.len());
        assert_eq!(evaluate(&ckpt, &data).unwrap(), e);
    }

    #[test]
    fn mismatched_dataset_rejected() {
        let (cfg, _) = small();
        let other = gen_band_dataset(1, 8, 32, &cfg.layer.thresholds, 0.0).unwrap();
        assert!(train(&cfg, &other, ModelKind::Static).is_err());
    }

    #[test]
    fn runs_are_deterministic() {
        let (cfg, data) = small();
        let a = train(&cfg, &data, ModelKind::FdConv).unwrap();
        let b = train(&cfg, &data, ModelKind::FdConv).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.net, b.net);
    }
}
