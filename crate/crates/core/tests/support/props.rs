//! Seeded invariant sweeps and hand-computed oracles, shared by the core
//! tests and the acceptance run.

use std::collections::BTreeMap;

use natadv_core::attack::fgsm_perturb;
use natadv_core::metrics::{bleu, diff_tokens, render_diff, BleuConfig, DiffOp};
use natadv_core::model::SentenceEncoding;
use natadv_core::text::{BpeModel, PipelineConfig, TextEncoder, END_OF_WORD};
use natadv_core::Result;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Outcome of a sweep: how many cases ran and a description of each failure.
#[derive(Debug, Clone, Default)]
pub struct Sweep {
    pub cases: usize,
    pub failures: Vec<String>,
}

impl Sweep {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }

    fn fail(&mut self, msg: String) {
        if self.failures.len() < 5 {
            self.failures.push(msg);
        }
    }
}

fn wide_f64(rng: &mut StdRng) -> f64 {
    let mag = 10f64.powi(rng.random_range(-6..7));
    rng.random_range(-1.0..1.0) * mag
}

/// `‖fgsm(z, g, ε) − z‖_∞ ≤ ε` over random draws spanning many magnitudes,
/// plus `fgsm(z, g, 0) == z`.
pub fn fgsm_bound(cases: usize, seed: u64) -> Result<Sweep> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut s = Sweep::default();
    for c in 0..cases {
        let d = rng.random_range(1..33);
        let z = SentenceEncoding((0..d).map(|_| wide_f64(&mut rng)).collect());
        let g: Vec<f64> = (0..d)
            .map(|_| if rng.random_bool(0.1) { 0.0 } else { wide_f64(&mut rng) })
            .collect();
        let eps = if c % 10 == 0 { 0.0 } else { wide_f64(&mut rng).abs() };
        let adv = fgsm_perturb(&z, &g, eps)?;
        let dist = z.0.iter().zip(&adv.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if dist > eps {
            s.fail(format!("case {c}: distance {dist:e} > eps {eps:e}"));
        }
        if eps == 0.0 && adv != z {
            s.fail(format!("case {c}: eps 0 moved the encoding"));
        }
        s.cases += 1;
    }
    Ok(s)
}

fn random_word(rng: &mut StdRng, alphabet: &[char]) -> String {
    let n = rng.random_range(1..12);
    (0..n).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
}

const ALPHABET: [char; 12] = ['a', 'b', 'c', 'd', 'e', 'n', 's', 't', 'é', 'ß', '<', '/'];

/// Segmenting any word and stripping end-of-word markers gives the word
/// back, including words with characters never seen in training.
pub fn bpe_preservation(words: usize, seed: u64) -> Result<Sweep> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut freqs = BTreeMap::new();
    for _ in 0..300 {
        *freqs.entry(random_word(&mut rng, &ALPHABET[..8])).or_insert(0u64) += rng.random_range(1..20);
    }
    let model = BpeModel::learn(&freqs, 200)?;
    let mut s = Sweep::default();
    for _ in 0..words {
        let w = random_word(&mut rng, &ALPHABET);
        let segs = model.encode_word(&w);
        let joined: String = segs.concat();
        let stripped = joined.strip_suffix(END_OF_WORD).unwrap_or(&joined);
        if stripped != w {
            s.fail(format!("{w:?} -> {segs:?}"));
        }
        s.cases += 1;
    }
    Ok(s)
}

/// Learning twice from the same corpus gives identical merges and vocabulary.
pub fn bpe_determinism(seed: u64) -> Result<bool> {
    let mut rng = StdRng::seed_from_u64(seed);
    let texts: Vec<String> = (0..200)
        .map(|_| (0..6).map(|_| random_word(&mut rng, &ALPHABET[..8])).collect::<Vec<_>>().join(" "))
        .collect();
    let cfg = PipelineConfig::default();
    Ok(TextEncoder::fit(&texts, &cfg)? == TextEncoder::fit(&texts, &cfg)?)
}

/// Largest vocabulary produced for each of several caps; every entry must
/// be at most its cap.
pub fn vocab_caps(seed: u64) -> Result<Vec<(usize, usize)>> {
    let mut rng = StdRng::seed_from_u64(seed);
    let texts: Vec<String> = (0..200)
        .map(|_| (0..6).map(|_| random_word(&mut rng, &ALPHABET[..8])).collect::<Vec<_>>().join(" "))
        .collect();
    let mut out = Vec::new();
    for cap in [4, 5, 10, 50, 200] {
        let cfg = PipelineConfig {
            vocab_limit: cap,
            ..PipelineConfig::default()
        };
        out.push((cap, TextEncoder::fit(&texts, &cfg)?.vocab.len()));
    }
    Ok(out)
}

/// `(name, computed, expected)` for the hand-worked BLEU cases.
pub fn bleu_oracles() -> Result<Vec<(&'static str, f64, f64)>> {
    let cfg = BleuConfig::default();
    let unigram = BleuConfig { max_n: 1, smoothing: false };
    let s = |t: &'static str| t.split(' ').collect::<Vec<_>>();
    Ok(vec![
        ("identity", bleu(&s("the movie was great fun"), &s("the movie was great fun"), &cfg)?, 1.0),
        ("disjoint", bleu(&s("alpha beta gamma delta"), &s("one two three four"), &cfg)?, 0.0),
        ("clipped unigram", bleu(&s("the the the"), &s("the cat"), &unigram)?, 1.0 / 3.0),
    ])
}

/// Alignment soundness on random token pairs: kept plus deleted tokens
/// rebuild the original and kept plus inserted rebuild the adversarial, both
/// from the op list and from the rendered text.
pub fn diff_soundness(pairs: usize, seed: u64) -> Sweep {
    let mut rng = StdRng::seed_from_u64(seed);
    let vocab = ["a", "b", "c", "good", "bad", "movie", "the", "x"];
    let mut s = Sweep::default();
    for c in 0..pairs {
        let draw = |rng: &mut StdRng| -> Vec<&str> {
            let n = rng.random_range(0..10);
            (0..n).map(|_| vocab[rng.random_range(0..vocab.len())]).collect()
        };
        let orig = draw(&mut rng);
        let adv = draw(&mut rng);
        let ops = diff_tokens(&orig, &adv);
        let (mut left, mut right) = (Vec::new(), Vec::new());
        for op in &ops {
            match op {
                DiffOp::Keep(t) => {
                    left.push(**t);
                    right.push(**t);
                }
                DiffOp::Delete(t) => left.push(**t),
                DiffOp::Insert(t) => right.push(**t),
            }
        }
        if left != orig || right != adv {
            s.fail(format!("pair {c}: {orig:?} / {adv:?}"));
        }
        let text = render_diff(&orig, &adv);
        let (from_text_orig, from_text_adv) = parse_rendered(&text);
        if from_text_orig != orig || from_text_adv != adv {
            s.fail(format!("pair {c}: rendered {text:?} does not rebuild the inputs"));
        }
        s.cases += 1;
    }
    s
}

/// Splits rendered diff text back into (unchanged + deleted, unchanged +
/// inserted) token lists.
fn parse_rendered(text: &str) -> (Vec<&str>, Vec<&str>) {
    let (mut left, mut right) = (Vec::new(), Vec::new());
    let mut mode = ' ';
    for raw in text.split(' ').filter(|t| !t.is_empty()) {
        let mut tok = raw;
        if let Some(rest) = tok.strip_prefix("[-") {
            mode = '-';
            tok = rest;
        } else if let Some(rest) = tok.strip_prefix("{+") {
            mode = '+';
            tok = rest;
        }
        let mut closing = false;
        if let Some(rest) = tok.strip_suffix("-]").filter(|_| mode == '-') {
            tok = rest;
            closing = true;
        } else if let Some(rest) = tok.strip_suffix("+}").filter(|_| mode == '+') {
            tok = rest;
            closing = true;
        }
        match mode {
            '-' => left.push(tok),
            '+' => right.push(tok),
            _ => {
                left.push(tok);
                right.push(tok);
            }
        }
        if closing {
            mode = ' ';
        }
    }
    (left, right)
}
