//! FGSM on sentence encodings, the greedy-substitution baseline and
//! ε-sweeps.
//!
//! The fake target is always the opposite of the reference label `y`. When
//! the caller knows the true label it is used as `y`; otherwise the model's
//! own prediction is. Success means the classifier, run afresh on the
//! decoded adversarial text, disagrees with `y`.

mod jsma;

pub use jsma::{attack_jsma, candidate_pool, JsmaConfig, DEFAULT_POOL_SIZE};

use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::Tape;
use crate::lm::NgramLm;
use crate::math;
use crate::metrics::{bleu, BleuConfig};
use crate::model::{logit_on_tape, stack, ModelBundle, SentenceEncoding};
use crate::text::{Label, TokenSequence, DEFAULT_MAX_UNITS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub epsilon: f64,
    /// Decode budget in subword units.
    pub max_len: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            epsilon: 0.02,
            max_len: DEFAULT_MAX_UNITS,
        }
    }
}

impl AttackConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        AttackConfig {
            epsilon,
            ..AttackConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::contract("epsilon must be finite and nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackMethod {
    Fgsm,
    Jsma,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub method: AttackMethod,
    pub original_ids: TokenSequence,
    pub adversarial_ids: TokenSequence,
    /// Reference label `y`.
    pub label: Label,
    /// Fake target, always `y.flipped()`.
    pub target: Label,
    pub prob_before: f64,
    /// Positive-class probability of the re-encoded adversarial text; `None`
    /// when decoding produced nothing.
    pub prob_after: Option<f64>,
    pub z: SentenceEncoding,
    pub z_adv: SentenceEncoding,
    /// ε for FGSM, 0 for substitution attacks.
    pub epsilon: f64,
    /// Accepted word substitutions (substitution attacks only).
    pub substitutions: usize,
    pub success: bool,
    pub degenerate: bool,
}

impl AttackResult {
    pub fn predicted_before(&self) -> Label {
        Label::from_probability(self.prob_before)
    }

    pub fn predicted_after(&self) -> Option<Label> {
        self.prob_after.map(Label::from_probability)
    }
}

/// BCE of the classifier output against the fake target.
pub fn adversarial_loss(p: f64, target: Label) -> f64 {
    math::binary_cross_entropy(p, target.as_f64())
}

/// The same loss from the classifier logit, `softplus(∓logit)`, without the
/// probability clamp. Stays strictly monotone where the clamped form is flat.
pub fn adversarial_loss_from_logit(logit: f64, target: Label) -> f64 {
    let s = match target {
        Label::Positive => -logit,
        Label::Negative => logit,
    };
    math::softplus(s)
}

/// `∇_z adversarial_loss(classify(z), target)`, taken through the logit
/// form so that confidently classified encodings still get a direction.
pub fn encoding_gradient(m: &ModelBundle, z: &SentenceEncoding, target: Label) -> Result<Vec<f64>> {
    Ok(encoding_gradient_batch(m, core::slice::from_ref(z), &[target])?.remove(0))
}

/// Row-wise encoding gradients. Rows do not interact, so the gradient of the
/// summed loss is each row's own gradient.
pub fn encoding_gradient_batch(m: &ModelBundle, zs: &[SentenceEncoding], targets: &[Label]) -> Result<Vec<Vec<f64>>> {
    if zs.len() != targets.len() {
        return Err(Error::Dimension {
            op: "encoding_gradient",
            lhs: vec![zs.len()],
            rhs: vec![targets.len()],
        });
    }
    if zs.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite { op: "encoding_gradient" });
    }
    let mut tape = Tape::new();
    let vars = m.bind(&mut tape, false);
    let z = tape.leaf(stack(zs, m.dims.hidden)?);
    let logit = logit_on_tape(&mut tape, &vars, z)?;
    let t: Vec<f64> = targets.iter().map(|l| l.as_f64()).collect();
    let loss = tape.bce_with_logits(logit, &t, &vec![1.0; t.len()])?;
    let grads = tape.backward(loss)?;
    let g = grads.get_or_zeros(z, &[zs.len(), m.dims.hidden]);
    Ok((0..zs.len()).map(|r| g.row_slice(r).to_vec()).collect())
}

/// `z − ε·sign(g)` with `sign(0) = 0`.
pub fn fgsm_perturb(z: &SentenceEncoding, g: &[f64], epsilon: f64) -> Result<SentenceEncoding> {
    if z.dim() != g.len() {
        return Err(Error::Dimension {
            op: "fgsm_perturb",
            lhs: vec![z.dim()],
            rhs: vec![g.len()],
        });
    }
    // Negated form also rejects NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(epsilon >= 0.0) {
        return Err(Error::contract("epsilon must be nonnegative"));
    }
    Ok(SentenceEncoding(
        z.0.iter().zip(g).map(|(&zi, &gi)| perturb_coord(zi, gi, epsilon)).collect(),
    ))
}

/// `z − ε·sign(g)`, pulled back by an ulp where rounding would otherwise
/// leave the ε-box.
fn perturb_coord(z: f64, g: f64, epsilon: f64) -> f64 {
    let mut v = z - epsilon * math::sign(g);
    while (v - z).abs() > epsilon {
        v = if v > z { v.next_down() } else { v.next_up() };
    }
    v
}

/// Attacks one sentence.
pub fn attack_fgsm(
    m: &ModelBundle,
    x: &TokenSequence,
    label: Option<Label>,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    Ok(attack_fgsm_batch(m, &[(x, label)], cfg)?.remove(0))
}

/// Attacks many sentences with batched encoder, gradient and decoder passes.
/// Each result equals what [`attack_fgsm`] returns for that input alone.
pub fn attack_fgsm_batch(
    m: &ModelBundle,
    inputs: &[(&TokenSequence, Option<Label>)],
    cfg: &AttackConfig,
) -> Result<Vec<AttackResult>> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Ok(Vec::new());
    }
    let seqs: Vec<&[u32]> = inputs.iter().map(|(x, _)| x.ids()).collect();
    let zs = m.encode_batch(&seqs)?;
    let probs = m.classify_batch(&zs)?;
    let labels: Vec<Label> = inputs
        .iter()
        .zip(&probs)
        .map(|((_, y), &p)| y.unwrap_or(Label::from_probability(p)))
        .collect();
    let targets: Vec<Label> = labels.iter().map(|y| y.flipped()).collect();
    let grads = encoding_gradient_batch(m, &zs, &targets)?;
    let z_advs = zs
        .iter()
        .zip(&grads)
        .map(|(z, g)| fgsm_perturb(z, g, cfg.epsilon))
        .collect::<Result<Vec<_>>>()?;
    let decoded = m.decode_greedy_batch(&z_advs, cfg.max_len)?;

    let nonempty: Vec<&[u32]> = decoded.iter().filter(|d| !d.is_empty()).map(|d| d.ids()).collect();
    let mut after = if nonempty.is_empty() {
        Vec::new()
    } else {
        m.predict_batch(&nonempty)?
    }
    .into_iter();

    let mut out = Vec::with_capacity(inputs.len());
    for (i, ((z, z_adv), adv)) in zs.into_iter().zip(z_advs).zip(decoded).enumerate() {
        let degenerate = adv.is_empty();
        let prob_after = if degenerate { None } else { after.next() };
        let success = prob_after.is_some_and(|p| Label::from_probability(p) != labels[i]);
        out.push(AttackResult {
            method: AttackMethod::Fgsm,
            original_ids: inputs[i].0.clone(),
            adversarial_ids: adv,
            label: labels[i],
            target: targets[i],
            prob_before: probs[i],
            prob_after,
            z,
            z_adv,
            epsilon: cfg.epsilon,
            substitutions: 0,
            success,
            degenerate,
        });
    }
    Ok(out)
}

/// Fraction of successful attacks.
pub fn misclassification_rate(results: &[AttackResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::contract("misclassification rate of no results"));
    }
    Ok(results.iter().filter(|r| r.success).count() as f64 / results.len() as f64)
}

/// Sentence BLEU of the adversarial ids against the original ids.
pub fn result_bleu(r: &AttackResult, cfg: &BleuConfig) -> Result<f64> {
    bleu(r.adversarial_ids.ids(), r.original_ids.ids(), cfg)
}

/// Aggregate scores of one batch of attacks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackSummary {
    pub misclassification_rate: f64,
    pub mean_bleu: f64,
    /// Over non-degenerate adversarial sentences; NaN when there are none.
    pub mean_log_perplexity: f64,
}

pub fn summarize(results: &[AttackResult], lm: &NgramLm, bleu_cfg: &BleuConfig) -> Result<AttackSummary> {
    let rate = misclassification_rate(results)?;
    let mut bleu_sum = 0.0;
    let (mut ppl_sum, mut ppl_n) = (0.0, 0usize);
    for r in results {
        bleu_sum += result_bleu(r, bleu_cfg)?;
        if !r.adversarial_ids.is_empty() {
            ppl_sum += lm.log_perplexity(&r.adversarial_ids)?;
            ppl_n += 1;
        }
    }
    Ok(AttackSummary {
        misclassification_rate: rate,
        mean_bleu: bleu_sum / results.len() as f64,
        mean_log_perplexity: if ppl_n == 0 { f64::NAN } else { ppl_sum / ppl_n as f64 },
    })
}

/// One row of an ε-sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub misclassification_rate: f64,
    pub mean_bleu: f64,
    pub mean_log_perplexity: f64,
}

/// Runs [`attack_fgsm_batch`] over `test_set` at each ε (ascending).
pub fn epsilon_sweep(
    m: &ModelBundle,
    test_set: &[(TokenSequence, Label)],
    epsilons: &[f64],
    lm: &NgramLm,
    max_len: usize,
) -> Result<Vec<SweepPoint>> {
    if test_set.is_empty() {
        return Err(Error::contract("sweep needs a nonempty test set"));
    }
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if epsilons.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::contract("sweep epsilons must be sorted ascending"));
    }
    let inputs: Vec<(&TokenSequence, Option<Label>)> = test_set.iter().map(|(x, y)| (x, Some(*y))).collect();
    let bleu_cfg = BleuConfig::default();
    let mut points = Vec::with_capacity(epsilons.len());
    for &epsilon in epsilons {
        let results = attack_fgsm_batch(m, &inputs, &AttackConfig { epsilon, max_len })?;
        let s = summarize(&results, lm, &bleu_cfg)?;
        points.push(SweepPoint {
            epsilon,
            misclassification_rate: s.misclassification_rate,
            mean_bleu: s.mean_bleu,
            mean_log_perplexity: s.mean_log_perplexity,
        });
    }
    Ok(points)
}
