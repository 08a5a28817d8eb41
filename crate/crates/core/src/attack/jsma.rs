use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use super::{adversarial_loss, AttackMethod, AttackResult};
use crate::autodiff::Tape;
use crate::model::{classify_on_tape, run_encoder, ModelBundle};
use crate::text::{Label, TokenId, TokenSequence, RESERVED};
use crate::{Error, Result, Tensor};

pub const DEFAULT_POOL_SIZE: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JsmaConfig {
    pub max_substitutions: usize,
    pub pool_size: usize,
}

impl Default for JsmaConfig {
    fn default() -> Self {
        JsmaConfig {
            max_substitutions: 3,
            pool_size: DEFAULT_POOL_SIZE,
        }
    }
}

/// The `pool_size` most frequent non-reserved ids. Vocabularies are
/// frequency ranked, so these are simply the first content ids.
pub fn candidate_pool(vocab_size: usize, pool_size: usize) -> Vec<TokenId> {
    (RESERVED.len()..vocab_size.min(RESERVED.len() + pool_size))
        .map(|i| i as TokenId)
        .collect()
}

struct Probe {
    prob: f64,
    loss: f64,
    /// `∂L/∂e_t` for every position.
    grads: Vec<Vec<f64>>,
}

fn probe(m: &ModelBundle, ids: &[TokenId], target: Label) -> Result<Probe> {
    let e = m.dims.embed;
    let mut tape = Tape::new();
    let vars = m.bind(&mut tape, false);
    let steps: Vec<_> = ids
        .iter()
        .map(|&id| {
            let row = m.embedding.row_slice(id as usize).to_vec();
            tape.leaf(Tensor::row(row))
        })
        .collect();
    let z = run_encoder(&mut tape, &vars.encoder, &steps, &[ids.len()], 1)?;
    let p = classify_on_tape(&mut tape, &vars, z)?;
    let prob = tape.value(p).item();
    let loss = tape.binary_cross_entropy(p, &[target.as_f64()], &[1.0])?;
    let grads = tape.backward(loss)?;
    Ok(Probe {
        prob,
        loss: tape.value(loss).item(),
        grads: steps.iter().map(|&s| grads.get_or_zeros(s, &[1, e]).into_data()).collect(),
    })
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Greedy saliency-guided word substitution toward the opposite label.
///
/// Each round picks the unvisited position with the largest `‖∂L/∂e_t‖₁`
/// and the pool token with the largest first-order loss decrease
/// `⟨e_v − e_t, −∂L/∂e_t⟩`. A substitution that raises the loss is
/// rejected; either way the position is not revisited, so at most
/// `max_substitutions` positions change.
pub fn attack_jsma(
    m: &ModelBundle,
    x: &TokenSequence,
    label: Option<Label>,
    cfg: &JsmaConfig,
) -> Result<AttackResult> {
    if x.is_empty() {
        return Err(Error::contract("attack input must be nonempty"));
    }
    m.validate(x)?;
    let pool = candidate_pool(m.dims.vocab, cfg.pool_size);
    let z = m.encode(x)?;
    let prob_before = m.classify(&z)?;
    let y = label.unwrap_or(Label::from_probability(prob_before));
    let target = y.flipped();

    let mut current: Vec<TokenId> = x.ids().to_vec();
    let mut visited = BTreeSet::new();
    let mut accepted = 0;
    let mut state = probe(m, &current, target)?;
    while accepted < cfg.max_substitutions && Label::from_probability(state.prob) == y {
        let Some(t) = (0..current.len())
            .filter(|t| !visited.contains(t))
            .map(|t| (t, l1(&state.grads[t])))
            .fold(None, |best: Option<(usize, f64)>, (t, s)| match best {
                Some((_, bs)) if bs >= s => best,
                _ => Some((t, s)),
            })
            .map(|(t, _)| t)
        else {
            break;
        };
        visited.insert(t);
        let g = &state.grads[t];
        let e_t = m.embedding.row_slice(current[t] as usize);
        let mut best: Option<(TokenId, f64)> = None;
        for &v in &pool {
            if v == current[t] {
                continue;
            }
            let e_v = m.embedding.row_slice(v as usize);
            let gain: f64 = e_v.iter().zip(e_t).zip(g).map(|((a, b), gi)| (a - b) * -gi).sum();
            if best.is_none_or(|(_, bg)| gain > bg) {
                best = Some((v, gain));
            }
        }
        let Some((v, gain)) = best else { break };
        if gain <= 0.0 {
            continue;
        }
        let mut trial = current.clone();
        trial[t] = v;
        let next = probe(m, &trial, target)?;
        if next.loss <= state.loss {
            current = trial;
            state = next;
            accepted += 1;
        }
    }

    let adversarial_ids = TokenSequence::new(current);
    let z_adv = m.encode(&adversarial_ids)?;
    let prob_after = state.prob;
    debug_assert!((adversarial_loss(prob_after, target) - state.loss).abs() < 1e-9);
    Ok(AttackResult {
        method: AttackMethod::Jsma,
        original_ids: x.clone(),
        adversarial_ids,
        label: y,
        target,
        prob_before,
        prob_after: Some(prob_after),
        z,
        z_adv,
        epsilon: 0.0,
        substitutions: accepted,
        success: Label::from_probability(prob_after) != y,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::model::ModelDims;

    fn model() -> ModelBundle {
        ModelBundle::init(
            ModelDims {
                vocab: 30,
                embed: 6,
                hidden: 5,
                ffn: 4,
            },
            21,
        )
    }

    #[test]
    fn pool_skips_reserved_and_caps() {
        assert_eq!(candidate_pool(10, 200), vec![4, 5, 6, 7, 8, 9]);
        assert_eq!(candidate_pool(1000, 3), vec![4, 5, 6]);
    }

    #[test]
    fn zero_budget_is_identity() {
        let m = model();
        let x = TokenSequence::new(vec![4, 8, 15, 16]);
        let cfg = JsmaConfig {
            max_substitutions: 0,
            ..JsmaConfig::default()
        };
        let r = attack_jsma(&m, &x, Some(Label::Positive), &cfg).unwrap();
        assert_eq!(r.adversarial_ids, x);
        assert_eq!(r.success, Label::from_probability(r.prob_before) != Label::Positive);
    }

    #[test]
    fn substitutions_bounded_and_loss_monotone() {
        let m = model();
        for (seed, y) in [(0u32, Label::Positive), (1, Label::Negative)] {
            let x = TokenSequence::new((0..8).map(|i| 4 + (i * 7 + seed) % 25).collect());
            for budget in 0..5 {
                let cfg = JsmaConfig {
                    max_substitutions: budget,
                    ..JsmaConfig::default()
                };
                let r = attack_jsma(&m, &x, Some(y), &cfg).unwrap();
                let changed = x.ids().iter().zip(r.adversarial_ids.ids()).filter(|(a, b)| a != b).count();
                assert_eq!(changed, r.substitutions);
                assert!(changed <= budget);
                let before = adversarial_loss(r.prob_before, r.target);
                assert!(adversarial_loss(r.prob_after.unwrap(), r.target) <= before + 1e-12);
            }
        }
    }
}
