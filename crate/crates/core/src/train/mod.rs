//! Joint classifier/decoder training with noise on the encodings.
//!
//! Each batch minimizes `λ·BCE(classify(z̃), y) + (1 − λ)·decoder_loss(z̃, x)`
//! where `z̃ = z + N(0, σ²)` and `σ` shrinks by a constant factor per epoch.
//! The noise is sampled outside the tape, so no gradient flows through it.

mod adam;

pub use adam::{adam_step, clip_global_norm, AdamConfig, OptState};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::Tape;
use crate::lm::NgramLm;
use crate::model::{classify_on_tape, decoder_loss_on_tape, encode_on_tape, ModelBundle, SentenceEncoding, PARAM_NAMES};
use crate::text::{Label, LabeledExample, TokenId, TokenSequence, DEFAULT_MAX_UNITS};
use crate::{Error, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_opt: f64,
    pub noise_sigma_start: f64,
    pub noise_anneal: f64,
    /// λ, the weight of the classification loss.
    pub loss_mix: f64,
    pub grad_clip: f64,
    pub seed: u64,
    /// Decode budget for the reconstruction metrics.
    pub max_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 4,
            learning_rate: 3e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_opt: 1e-8,
            noise_sigma_start: 0.15,
            noise_anneal: 0.995,
            loss_mix: 0.3,
            grad_clip: 5.0,
            seed: 42,
            max_len: DEFAULT_MAX_UNITS,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.eps_opt,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.batch_size >= 1, "batch_size must be at least 1"),
            (self.learning_rate > 0.0 && self.learning_rate.is_finite(), "learning_rate must be positive"),
            ((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2), "adam betas must lie in [0, 1)"),
            (self.eps_opt > 0.0, "eps_opt must be positive"),
            (self.noise_sigma_start >= 0.0 && self.noise_sigma_start.is_finite(), "noise sigma must be nonnegative"),
            (self.noise_anneal > 0.0 && self.noise_anneal <= 1.0, "noise_anneal must lie in (0, 1]"),
            ((0.0..=1.0).contains(&self.loss_mix), "loss_mix must lie in [0, 1]"),
            (self.grad_clip > 0.0, "grad_clip must be positive"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::contract(*msg)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Fraction of reference positions the greedy decoder reproduces.
    pub reconstruction_accuracy: f64,
    /// Fraction of sentences decoded exactly.
    pub reconstruction_exact: f64,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

/// `z + N(0, σ²·I)`.
pub fn regularize_encoding<R: Rng>(z: &SentenceEncoding, sigma: f64, rng: &mut R) -> SentenceEncoding {
    if sigma == 0.0 {
        return z.clone();
    }
    SentenceEncoding(
        z.0.iter()
            .map(|&v| v + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect(),
    )
}

pub fn train(
    m: &mut ModelBundle,
    train_set: &[LabeledExample],
    test_set: &[LabeledExample],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    train_with_progress(m, train_set, test_set, cfg, |_| {})
}

/// [`train`], calling `on_epoch` after every epoch's evaluation.
pub fn train_with_progress(
    m: &mut ModelBundle,
    train_set: &[LabeledExample],
    test_set: &[LabeledExample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::contract("training needs nonempty train and test sets"));
    }
    if train_set.iter().chain(test_set).any(|e| e.ids.is_empty()) {
        return Err(Error::contract("training examples must be nonempty"));
    }
    for ex in train_set.iter().chain(test_set) {
        m.validate(&ex.ids)?;
    }
    let has = |l: Label| train_set.iter().any(|e| e.label == l);
    if !has(Label::Positive) || !has(Label::Negative) {
        return Err(Error::contract("train set must contain both labels"));
    }

    let mut report = TrainReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = OptState::new(&m.params());
    let adam = cfg.adam();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut sigma = cfg.noise_sigma_start;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let examples: Vec<&LabeledExample> = batch.iter().map(|&i| &train_set[i]).collect();
            let (loss, mut grads) = batch_gradients(m, &examples, sigma, cfg.loss_mix, &mut rng)
                .map_err(|e| diverged(epoch, e))?;
            loss_sum += loss * examples.len() as f64;
            clip_global_norm(&mut grads, cfg.grad_clip);
            adam_step(&mut m.params_mut(), &grads, &PARAM_NAMES, &mut state, &adam)?;
        }
        let (train_accuracy, reconstruction_accuracy, reconstruction_exact) = evaluate(m, train_set, cfg.max_len)?;
        let test_accuracy = evaluate_accuracy(m, test_set)?;
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_accuracy,
            test_accuracy,
            reconstruction_accuracy,
            reconstruction_exact,
            noise_sigma: sigma,
        };
        on_epoch(&stats);
        report.epochs.push(stats);
        sigma *= cfg.noise_anneal;
    }
    Ok(report)
}

fn diverged(epoch: usize, e: Error) -> Error {
    match e {
        Error::NonFinite { op } => Error::Training(format!("loss diverged in epoch {epoch} ({op})")),
        other => other,
    }
}

/// Mean batch loss and per-parameter gradients.
fn batch_gradients<R: Rng>(
    m: &ModelBundle,
    batch: &[&LabeledExample],
    sigma: f64,
    lambda: f64,
    rng: &mut R,
) -> Result<(f64, Vec<Tensor>)> {
    let b = batch.len();
    let h = m.dims.hidden;
    let mut tape = Tape::new();
    let vars = m.bind(&mut tape, true);
    let seqs: Vec<&[TokenId]> = batch.iter().map(|e| e.ids.ids()).collect();
    let z = encode_on_tape(&mut tape, &vars, &seqs)?;
    let z = if sigma > 0.0 {
        let noise = Tensor::from_fn(&[b, h], |_| sigma * rng.sample::<f64, _>(StandardNormal));
        let n = tape.constant(noise);
        tape.add(z, n)?
    } else {
        z
    };
    let mut parts = Vec::with_capacity(2);
    if lambda > 0.0 {
        let p = classify_on_tape(&mut tape, &vars, z)?;
        let y: Vec<f64> = batch.iter().map(|e| e.label.as_f64()).collect();
        parts.push(tape.binary_cross_entropy(p, &y, &vec![lambda / b as f64; b])?);
    }
    if lambda < 1.0 {
        let w = vec![(1.0 - lambda) / b as f64; b];
        parts.push(decoder_loss_on_tape(&mut tape, &vars, z, &seqs, &w)?);
    }
    let loss = match parts[..] {
        [a] => a,
        [a, c] => tape.add(a, c)?,
        _ => return Err(Error::contract("empty loss")),
    };
    let grads = tape.backward(loss)?;
    let shapes = ModelBundle::param_shapes(&m.dims);
    let out = vars
        .all()
        .iter()
        .zip(shapes.iter())
        .map(|(&v, s)| grads.get_or_zeros(v, s))
        .collect();
    Ok((tape.value(loss).item(), out))
}

/// Classification accuracy on clean inputs.
pub fn evaluate_accuracy(m: &ModelBundle, data: &[LabeledExample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::contract("accuracy of an empty set"));
    }
    let seqs: Vec<&[TokenId]> = data.iter().map(|e| e.ids.ids()).collect();
    let probs = m.predict_batch(&seqs)?;
    let correct = probs
        .iter()
        .zip(data)
        .filter(|(&p, e)| Label::from_probability(p) == e.label)
        .count();
    Ok(correct as f64 / data.len() as f64)
}

/// Greedy reconstruction quality: `(token accuracy, exact-match rate)`.
/// Token accuracy counts reference positions reproduced in place.
pub fn reconstruction_scores(m: &ModelBundle, seqs: &[&TokenSequence], max_len: usize) -> Result<(f64, f64)> {
    if seqs.is_empty() {
        return Err(Error::contract("reconstruction of an empty set"));
    }
    let ids: Vec<&[TokenId]> = seqs.iter().map(|s| s.ids()).collect();
    let zs = m.encode_batch(&ids)?;
    let decoded = m.decode_greedy_batch(&zs, max_len)?;
    let (mut hit, mut total, mut exact) = (0usize, 0usize, 0usize);
    for (x, d) in seqs.iter().zip(&decoded) {
        hit += x.ids().iter().zip(d.ids()).filter(|(a, b)| a == b).count();
        total += x.len();
        exact += usize::from(*x == d);
    }
    Ok((hit as f64 / total as f64, exact as f64 / seqs.len() as f64))
}

fn evaluate(m: &ModelBundle, data: &[LabeledExample], max_len: usize) -> Result<(f64, f64, f64)> {
    let acc = evaluate_accuracy(m, data)?;
    let seqs: Vec<&TokenSequence> = data.iter().map(|e| &e.ids).collect();
    let (tok, exact) = reconstruction_scores(m, &seqs, max_len)?;
    Ok((acc, tok, exact))
}

/// n-gram model over the training sentences' subword ids.
pub fn train_lm(train_set: &[LabeledExample], order: usize, alpha: f64, vocab_size: usize) -> Result<NgramLm> {
    NgramLm::train(train_set.iter().map(|e| &e.ids), order, alpha, vocab_size)
}
