use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::optim::{adam_step, clip_store_grads, lr_at, OptimizerState, TrainConfig};
use crate::autodiff::Tape;
use crate::backbone::{checkpoint, VitModel};
use crate::data::{Augment, DatasetSplit};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    /// Tab-separated `epoch lr train_loss test_top1 test_top5`, one line per epoch.
    pub metrics_path: Option<PathBuf>,
    /// Written whenever test top-1 improves.
    pub checkpoint_path: Option<PathBuf>,
    pub augment: Option<Augment>,
    /// Stop once train-set top-1 (evaluated after the epoch) reaches this percentage.
    pub stop_at_train_top1: Option<f64>,
    /// Evaluate the test split every epoch; otherwise only on the last one.
    pub eval_every_epoch: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub top1: f64,
    pub top5: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Accuracy of the per-batch predictions made while training.
    pub running_top1: f64,
    pub train_eval: Option<Evaluation>,
    pub test: Option<Evaluation>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_test_top1: Option<f64>,
}

impl History {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

/// Rank of the true class: how many logits are strictly larger.
fn rank_of(row: &[f64], label: usize) -> usize {
    row.iter().filter(|&&v| v > row[label]).count()
}

fn count_hits(logits: &Tensor, labels: &[usize], k: usize) -> usize {
    let classes = logits.shape()[1];
    labels.iter().enumerate().filter(|&(i, &l)| rank_of(&logits.data()[i * classes..(i + 1) * classes], l) < k).count()
}

/// Mean loss and top-1/top-5 accuracy (percent) over a whole split.
pub fn evaluate(model: &VitModel, split: &DatasetSplit, batch_size: usize) -> Result<Evaluation> {
    if split.is_empty() {
        return Err(Error::data("cannot evaluate on an empty split"));
    }
    let (mut loss, mut top1, mut top5) = (0.0, 0, 0);
    let order: Vec<usize> = (0..split.len()).collect();
    for chunk in order.chunks(batch_size.max(1)) {
        let (images, labels) = split.batch(chunk, None);
        let mut tape = Tape::inference();
        let x = tape.constant(images);
        let logits = model.forward(&mut tape, x)?;
        let l = tape.cross_entropy(logits, &labels)?;
        loss += tape.value(l).data()[0] * chunk.len() as f64;
        top1 += count_hits(tape.value(logits), &labels, 1);
        top5 += count_hits(tape.value(logits), &labels, 5);
    }
    let n = split.len() as f64;
    Ok(Evaluation { loss: loss / n, top1: 100.0 * top1 as f64 / n, top5: 100.0 * top5 as f64 / n })
}

/// Trains `model` on `train`, evaluating on `test`. Every source of
/// randomness is derived from `cfg.seed` and the epoch index.
pub fn fit(model: &mut VitModel, train: &DatasetSplit, test: &DatasetSplit, cfg: &TrainConfig, opts: &FitOptions) -> Result<History> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::data("training split is empty"));
    }
    let mut metrics = match &opts.metrics_path {
        Some(p) => Some(BufWriter::new(File::create(p)?)),
        None => None,
    };
    let mut state = OptimizerState::new(&model.store);
    let mut history = History::default();
    let mut order_split = train.clone();
    order_split.seed = cfg.seed;

    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, cfg);
        let order = order_split.permutation(epoch as u64);
        let mut aug_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_a5a5);
        aug_rng.set_stream(epoch as u64);
        let (mut loss_sum, mut hits) = (0.0, 0);
        for chunk in order.chunks(cfg.batch_size) {
            let (images, labels) = train.batch(chunk, opts.augment.map(|a| (a, &mut aug_rng)));
            let mut tape = Tape::new();
            let x = tape.constant(images);
            let logits = model.forward(&mut tape, x)?;
            let loss = tape.cross_entropy(logits, &labels)?;
            let l = tape.value(loss).data()[0];
            if !l.is_finite() {
                return Err(Error::Numerical(format!("non-finite loss {l} at epoch {epoch}")));
            }
            loss_sum += l * chunk.len() as f64;
            hits += count_hits(tape.value(logits), &labels, 1);
            model.store.zero_grad();
            tape.backward_into(loss, &mut model.store)?;
            clip_store_grads(&mut model.store, cfg.clip_norm);
            adam_step(&mut model.store, &mut state, lr, cfg)?;
        }
        let n = train.len() as f64;
        let train_eval = match opts.stop_at_train_top1 {
            Some(_) => Some(evaluate(model, train, cfg.batch_size)?),
            None => None,
        };
        let reached = matches!((opts.stop_at_train_top1, train_eval), (Some(t), Some(e)) if e.top1 >= t);
        let last = epoch + 1 == cfg.epochs || reached;
        let test_eval = if !test.is_empty() && (opts.eval_every_epoch || last) { Some(evaluate(model, test, cfg.batch_size)?) } else { None };
        let rec = EpochRecord { epoch, lr, train_loss: loss_sum / n, running_top1: 100.0 * hits as f64 / n, train_eval, test: test_eval };

        if let Some(t) = rec.test {
            if history.best_test_top1.is_none_or(|b| t.top1 > b) {
                history.best_test_top1 = Some(t.top1);
                if let Some(p) = &opts.checkpoint_path {
                    checkpoint::save(&model.store, p)?;
                }
            }
        }
        if let Some(w) = metrics.as_mut() {
            let (t1, t5) = rec.test.map_or((f64::NAN, f64::NAN), |t| (t.top1, t.top5));
            writeln!(w, "{}\t{:e}\t{:.6}\t{:.2}\t{:.2}", epoch, lr, rec.train_loss, t1, t5)?;
            w.flush()?;
        }
        history.epochs.push(rec);
        if reached {
            break;
        }
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_do_not_count_against_the_label() {
        let logits = Tensor::new(&[2, 3], vec![1.0, 1.0, 0.0, 0.0, 2.0, 1.0]).unwrap();
        assert_eq!(count_hits(&logits, &[1, 2], 1), 1);
        assert_eq!(count_hits(&logits, &[1, 2], 2), 2);
    }
}
