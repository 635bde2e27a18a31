use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::Config;
use super::dataset::ContractSample;
use super::metrics::{hamming_score, metrics_report, Averaging, MetricsReport};
use super::model::{Features, Model};
use super::HarnessError;
use crate::autodiff::{Adam, Gradients, Tape};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// Hamming score on the held-out part of the training set.
    pub holdout_hs: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochLog>,
}

fn featurize_all(model: &Model, set: &[ContractSample]) -> Result<Vec<Features>, HarnessError> {
    set.iter().map(|s| model.featurize_sample(s)).collect()
}

fn check_widths(model: &Model, set: &[ContractSample]) -> Result<(), HarnessError> {
    match set.iter().find(|s| s.labels.len() != model.config.labels) {
        Some(s) => Err(HarnessError::LabelWidth {
            expected: model.config.labels,
            found: s.labels.len(),
        }),
        None => Ok(()),
    }
}

pub fn predict_all(model: &Model, feats: &[Features]) -> Result<Vec<Vec<bool>>, HarnessError> {
    feats.iter().map(|f| Ok(model.predict(f)?.labels)).collect()
}

/// Trains from `config.seed` with mini-batch Adam on mean batch loss.
/// `on_epoch` sees each log entry as soon as it is produced.
pub fn train_with(
    config: &Config,
    train_set: &[ContractSample],
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome, HarnessError> {
    if train_set.is_empty() {
        return Err(HarnessError::EmptyTrainSet);
    }
    let mut model = Model::new(config)?;
    check_widths(&model, train_set)?;
    let feats = featurize_all(&model, train_set)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0fda_7a00);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    order.shuffle(&mut rng);
    let n_hold = if config.holdout > 0.0 && train_set.len() >= 2 {
        ((train_set.len() as f64 * config.holdout).round() as usize).clamp(1, train_set.len() - 1)
    } else {
        0
    };
    let (hold, mut fit) = (order[..n_hold].to_vec(), order[n_hold..].to_vec());

    let mut opt = Adam::new(&model.store, config.lr);
    opt.clip_norm = (config.clip > 0.0).then_some(config.clip);
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        fit.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in fit.chunks(config.batch) {
            let mut acc = Gradients::default();
            for &i in batch {
                let mut t = Tape::new(&model.store);
                let loss = model.loss(&mut t, &feats[i], &train_set[i].labels)?;
                total += t.scalar(loss);
                acc.accumulate(&t.backward(loss)?);
            }
            acc.scale(1.0 / batch.len() as f64);
            opt.step(&mut model.store, &acc);
        }
        let holdout_hs = if hold.is_empty() {
            None
        } else {
            let f: Vec<Features> = hold.iter().map(|&i| feats[i].clone()).collect();
            let y: Vec<Vec<bool>> = hold.iter().map(|&i| train_set[i].labels.clone()).collect();
            Some(hamming_score(&y, &predict_all(&model, &f)?)?)
        };
        let entry = EpochLog {
            epoch,
            train_loss: total / fit.len() as f64,
            holdout_hs,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(TrainOutcome { model, log })
}

pub fn train(config: &Config, train_set: &[ContractSample]) -> Result<TrainOutcome, HarnessError> {
    train_with(config, train_set, |_| {})
}

pub fn evaluate(model: &Model, test_set: &[ContractSample]) -> Result<MetricsReport, HarnessError> {
    evaluate_with(model, test_set, Averaging::Micro)
}

pub fn evaluate_with(
    model: &Model,
    test_set: &[ContractSample],
    averaging: Averaging,
) -> Result<MetricsReport, HarnessError> {
    if test_set.is_empty() {
        return Err(HarnessError::EmptyTestSet);
    }
    check_widths(model, test_set)?;
    let feats = featurize_all(model, test_set)?;
    let y: Vec<Vec<bool>> = test_set.iter().map(|s| s.labels.clone()).collect();
    Ok(metrics_report(&y, &predict_all(model, &feats)?, averaging)?)
}
