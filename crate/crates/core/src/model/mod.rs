//! Sentence encoder, classifier head and greedy decoder.
//!
//! All three share one embedding table. The encoder's final hidden state
//! `z` feeds the classifier `sigmoid(W2 · relu(W1 z + b1) + b2)` and seeds
//! the decoder (`h0 = z`, `c0 = 0`), which is trained by teacher forcing to
//! reproduce the input followed by EOS.

mod lstm;

pub use lstm::{lstm_step, LstmParams, LstmVars};

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Tape, Var};
use crate::math;
use crate::text::{TokenId, TokenSequence, BOS, EOS, PAD};
use crate::{Error, Result, Tensor};

/// Rows per inference pass in the batch helpers.
const INFERENCE_CHUNK: usize = 64;

/// Layer sizes of a [`ModelBundle`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub ffn: usize,
}

impl ModelDims {
    /// Small model that trains on one laptop core in a couple of minutes.
    pub fn desk(vocab: usize) -> Self {
        ModelDims {
            vocab,
            embed: 32,
            hidden: 96,
            ffn: 16,
        }
    }

    /// 512-d embeddings and LSTMs with a 100-unit classifier layer.
    pub fn full(vocab: usize) -> Self {
        ModelDims {
            vocab,
            embed: 512,
            hidden: 512,
            ffn: 100,
        }
    }
}

/// Final encoder hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceEncoding(pub Vec<f64>);

impl SentenceEncoding {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn to_row(&self) -> Tensor {
        Tensor::row(self.0.clone())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// Every trainable tensor of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub dims: ModelDims,
    pub embedding: Tensor,
    pub encoder: LstmParams,
    pub classifier: ClassifierParams,
    pub decoder: LstmParams,
    pub out_w: Tensor,
    pub out_b: Tensor,
}

/// Names of the parameter blocks, in the order of [`ModelBundle::params`].
pub const PARAM_NAMES: [&str; 11] = [
    "embedding",
    "encoder.w",
    "encoder.b",
    "classifier.w1",
    "classifier.b1",
    "classifier.w2",
    "classifier.b2",
    "decoder.w",
    "decoder.b",
    "decoder.out_w",
    "decoder.out_b",
];

/// Parameters of a [`ModelBundle`] registered on a tape.
#[derive(Debug, Clone, Copy)]
pub struct BundleVars {
    pub embedding: Var,
    pub encoder: LstmVars,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub decoder: LstmVars,
    pub out_w: Var,
    pub out_b: Var,
}

impl BundleVars {
    pub fn all(&self) -> [Var; 11] {
        [
            self.embedding,
            self.encoder.w,
            self.encoder.b,
            self.w1,
            self.b1,
            self.w2,
            self.b2,
            self.decoder.w,
            self.decoder.b,
            self.out_w,
            self.out_b,
        ]
    }
}

impl ModelBundle {
    /// All-zero parameters (forget biases included).
    pub fn zeros(dims: ModelDims) -> Self {
        ModelBundle {
            dims,
            embedding: Tensor::zeros(&[dims.vocab, dims.embed]),
            encoder: LstmParams::zeros(dims.embed, dims.hidden),
            classifier: ClassifierParams {
                w1: Tensor::zeros(&[dims.ffn, dims.hidden]),
                b1: Tensor::zeros(&[dims.ffn]),
                w2: Tensor::zeros(&[1, dims.ffn]),
                b2: Tensor::zeros(&[1]),
            },
            decoder: LstmParams::zeros(dims.embed, dims.hidden),
            out_w: Tensor::zeros(&[dims.vocab, dims.hidden]),
            out_b: Tensor::zeros(&[dims.vocab]),
        }
    }

    /// Seeded random initialization: standard-normal embeddings, LSTM and
    /// output weights uniform in `±1/√H`, Glorot-uniform classifier.
    pub fn init(dims: ModelDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let glorot = |fan_in: usize, fan_out: usize| math::sqrt(6.0 / (fan_in + fan_out) as f64);
        let recurrent = 1.0 / math::sqrt(dims.hidden as f64);
        let embedding = Tensor::from_fn(&[dims.vocab, dims.embed], |_| rng.sample::<f64, _>(StandardNormal));
        let mut uniform = |shape: &[usize], scale: f64| Tensor::from_fn(shape, |_| rng.random_range(-scale..=scale));
        let w1 = uniform(&[dims.ffn, dims.hidden], glorot(dims.hidden, dims.ffn));
        let w2 = uniform(&[1, dims.ffn], glorot(dims.ffn, 1));
        let out_w = uniform(&[dims.vocab, dims.hidden], recurrent);
        let encoder = LstmParams::init(dims.embed, dims.hidden, recurrent, &mut rng);
        let decoder = LstmParams::init(dims.embed, dims.hidden, recurrent, &mut rng);
        ModelBundle {
            dims,
            embedding,
            encoder,
            classifier: ClassifierParams {
                w1,
                b1: Tensor::zeros(&[dims.ffn]),
                w2,
                b2: Tensor::zeros(&[1]),
            },
            decoder,
            out_w,
            out_b: Tensor::zeros(&[dims.vocab]),
        }
    }

    pub fn params(&self) -> [&Tensor; 11] {
        [
            &self.embedding,
            &self.encoder.w,
            &self.encoder.b,
            &self.classifier.w1,
            &self.classifier.b1,
            &self.classifier.w2,
            &self.classifier.b2,
            &self.decoder.w,
            &self.decoder.b,
            &self.out_w,
            &self.out_b,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 11] {
        [
            &mut self.embedding,
            &mut self.encoder.w,
            &mut self.encoder.b,
            &mut self.classifier.w1,
            &mut self.classifier.b1,
            &mut self.classifier.w2,
            &mut self.classifier.b2,
            &mut self.decoder.w,
            &mut self.decoder.b,
            &mut self.out_w,
            &mut self.out_b,
        ]
    }

    /// Expected shape of each named block for `dims`.
    pub fn param_shapes(dims: &ModelDims) -> [Vec<usize>; 11] {
        let ModelDims {
            vocab: v,
            embed: e,
            hidden: h,
            ffn: f,
        } = *dims;
        [
            vec![v, e],
            vec![4 * h, e + h],
            vec![4 * h],
            vec![f, h],
            vec![f],
            vec![1, f],
            vec![1],
            vec![4 * h, e + h],
            vec![4 * h],
            vec![v, h],
            vec![v],
        ]
    }

    /// Rebuilds a bundle from named blocks, checking every shape.
    pub fn from_params(dims: ModelDims, mut blocks: Vec<(String, Tensor)>) -> Result<Self> {
        let mut model = ModelBundle::zeros(dims);
        let shapes = Self::param_shapes(&dims);
        if blocks.len() != PARAM_NAMES.len() {
            return Err(Error::contract(alloc::format!(
                "expected {} parameter blocks, found {}",
                PARAM_NAMES.len(),
                blocks.len()
            )));
        }
        for (i, slot) in model.params_mut().into_iter().enumerate() {
            let pos = blocks
                .iter()
                .position(|(n, _)| n == PARAM_NAMES[i])
                .ok_or_else(|| Error::contract(alloc::format!("missing parameter block `{}`", PARAM_NAMES[i])))?;
            let (_, t) = blocks.swap_remove(pos);
            if t.shape() != shapes[i].as_slice() {
                return Err(Error::Dimension {
                    op: PARAM_NAMES[i],
                    lhs: Vec::from(t.shape()),
                    rhs: shapes[i].clone(),
                });
            }
            *slot = t;
        }
        Ok(model)
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BundleVars {
        let mut bind = |t: &Tensor| {
            if trainable {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        let embedding = bind(&self.embedding);
        let w1 = bind(&self.classifier.w1);
        let b1 = bind(&self.classifier.b1);
        let w2 = bind(&self.classifier.w2);
        let b2 = bind(&self.classifier.b2);
        let out_w = bind(&self.out_w);
        let out_b = bind(&self.out_b);
        let encoder = self.encoder.bind(tape, trainable);
        let decoder = self.decoder.bind(tape, trainable);
        BundleVars {
            embedding,
            encoder,
            w1,
            b1,
            w2,
            b2,
            decoder,
            out_w,
            out_b,
        }
    }

    fn check_ids(&self, ids: &[TokenId]) -> Result<()> {
        match ids.iter().find(|&&id| id as usize >= self.dims.vocab) {
            Some(&id) => Err(Error::Index {
                index: id as usize,
                size: self.dims.vocab,
            }),
            None => Ok(()),
        }
    }

    /// Runs the encoder from a zero state and returns the final hidden state.
    pub fn encode(&self, x: &TokenSequence) -> Result<SentenceEncoding> {
        Ok(self.encode_batch(&[x.ids()])?.remove(0))
    }

    pub fn encode_batch(&self, seqs: &[&[TokenId]]) -> Result<Vec<SentenceEncoding>> {
        if seqs.is_empty() {
            return Err(Error::contract("encode requires nonempty sequences"));
        }
        let mut out = Vec::with_capacity(seqs.len());
        for chunk in seqs.chunks(INFERENCE_CHUNK) {
            let mut tape = Tape::new();
            let vars = self.bind(&mut tape, false);
            let z = encode_on_tape(&mut tape, &vars, chunk)?;
            out.extend(rows_to_encodings(tape.value(z)));
        }
        Ok(out)
    }

    /// Probability of the positive class.
    pub fn classify(&self, z: &SentenceEncoding) -> Result<f64> {
        Ok(self.classify_batch(core::slice::from_ref(z))?[0])
    }

    pub fn classify_batch(&self, zs: &[SentenceEncoding]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let z = tape.constant(stack(zs, self.dims.hidden)?);
        let p = classify_on_tape(&mut tape, &vars, z)?;
        Ok(tape.value(p).data().to_vec())
    }

    /// Classifier logit, i.e. `classify` before the sigmoid.
    pub fn classify_logit(&self, z: &SentenceEncoding) -> Result<f64> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let zv = tape.constant(stack(core::slice::from_ref(z), self.dims.hidden)?);
        let l = logit_on_tape(&mut tape, &vars, zv)?;
        Ok(tape.value(l).item())
    }

    /// `classify(encode(x))`.
    pub fn predict(&self, x: &TokenSequence) -> Result<f64> {
        self.classify(&self.encode(x)?)
    }

    pub fn predict_batch(&self, seqs: &[&[TokenId]]) -> Result<Vec<f64>> {
        let zs = self.encode_batch(seqs)?;
        self.classify_batch(&zs)
    }

    /// Teacher-forced cross-entropy of `target` + EOS given `z`, averaged
    /// over steps.
    pub fn decoder_loss(&self, z: &SentenceEncoding, target: &TokenSequence) -> Result<f64> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let zv = tape.constant(z.to_row());
        let loss = decoder_loss_on_tape(&mut tape, &vars, zv, &[target.ids()], &[1.0])?;
        Ok(tape.value(loss).item())
    }

    /// Argmax decoding from `h0 = z`, starting with BOS, until EOS or
    /// `max_len` tokens. PAD and BOS are never emitted.
    pub fn decode_greedy(&self, z: &SentenceEncoding, max_len: usize) -> Result<TokenSequence> {
        Ok(self.decode_greedy_batch(core::slice::from_ref(z), max_len)?.remove(0))
    }

    pub fn decode_greedy_batch(&self, zs: &[SentenceEncoding], max_len: usize) -> Result<Vec<TokenSequence>> {
        let mut out = Vec::with_capacity(zs.len());
        for chunk in zs.chunks(INFERENCE_CHUNK) {
            out.extend(self.decode_chunk(chunk, max_len)?);
        }
        Ok(out)
    }

    fn decode_chunk(&self, zs: &[SentenceEncoding], max_len: usize) -> Result<Vec<TokenSequence>> {
        if zs.is_empty() {
            return Ok(Vec::new());
        }
        let b = zs.len();
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let mut h = tape.constant(stack(zs, self.dims.hidden)?);
        let mut c = tape.constant(Tensor::zeros(&[b, self.dims.hidden]));
        let mut prev: Vec<usize> = vec![BOS as usize; b];
        let mut out: Vec<Vec<TokenId>> = vec![Vec::new(); b];
        let mut done = vec![false; b];
        for _ in 0..max_len {
            let x = tape.gather(vars.embedding, &prev)?;
            let (h2, c2) = lstm_step(&mut tape, &vars.decoder, x, h, c)?;
            h = h2;
            c = c2;
            let logits = output_logits(&mut tape, &vars, h)?;
            let lt = tape.value(logits);
            for r in 0..b {
                if done[r] {
                    continue;
                }
                let row = lt.row_slice(r);
                let mut best = EOS as usize;
                for (id, &v) in row.iter().enumerate() {
                    if id == PAD as usize || id == BOS as usize {
                        continue;
                    }
                    if v > row[best] || (v == row[best] && id < best) {
                        best = id;
                    }
                }
                if best == EOS as usize {
                    done[r] = true;
                } else {
                    out[r].push(best as TokenId);
                    prev[r] = best;
                }
            }
            if done.iter().all(|&d| d) {
                break;
            }
        }
        Ok(out.into_iter().map(TokenSequence::new).collect())
    }

    /// Validates ids against the vocabulary size.
    pub fn validate(&self, x: &TokenSequence) -> Result<()> {
        self.check_ids(x.ids())
    }
}

/// Stacks encodings into a `[B x H]` tensor.
pub fn stack(zs: &[SentenceEncoding], hidden: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(zs.len() * hidden);
    for z in zs {
        if z.dim() != hidden {
            return Err(Error::Dimension {
                op: "stack",
                lhs: vec![z.dim()],
                rhs: vec![hidden],
            });
        }
        data.extend_from_slice(z.as_slice());
    }
    Tensor::matrix(zs.len(), hidden, data)
}

pub fn rows_to_encodings(t: &Tensor) -> Vec<SentenceEncoding> {
    (0..t.rows()).map(|r| SentenceEncoding(t.row_slice(r).to_vec())).collect()
}

/// Encodes a padded batch; each row's state freezes after its last token.
pub fn encode_on_tape(tape: &mut Tape, vars: &BundleVars, seqs: &[&[TokenId]]) -> Result<Var> {
    if seqs.is_empty() || seqs.iter().any(|s| s.is_empty()) {
        return Err(Error::contract("encode requires nonempty sequences"));
    }
    let vocab = tape.value(vars.embedding).rows();
    for s in seqs {
        if let Some(&id) = s.iter().find(|&&id| id as usize >= vocab) {
            return Err(Error::Index {
                index: id as usize,
                size: vocab,
            });
        }
    }
    let max_len = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
    let b = seqs.len();
    let lengths: Vec<usize> = seqs.iter().map(|s| s.len()).collect();
    let mut steps = Vec::with_capacity(max_len);
    for t in 0..max_len {
        let ids: Vec<usize> = seqs.iter().map(|s| s.get(t).copied().unwrap_or(PAD) as usize).collect();
        steps.push(tape.gather(vars.embedding, &ids)?);
    }
    run_encoder(tape, &vars.encoder, &steps, &lengths, b)
}

/// Runs the encoder LSTM over per-step inputs `[B x E]`.
pub fn run_encoder(tape: &mut Tape, lstm: &LstmVars, steps: &[Var], lengths: &[usize], b: usize) -> Result<Var> {
    let hd = lstm.hidden;
    let mut h = tape.constant(Tensor::zeros(&[b, hd]));
    let mut c = tape.constant(Tensor::zeros(&[b, hd]));
    for (t, &x) in steps.iter().enumerate() {
        let (h2, c2) = lstm_step(tape, lstm, x, h, c)?;
        if lengths.iter().all(|&l| l > t) {
            h = h2;
            c = c2;
        } else {
            let active = Tensor::from_fn(&[b, hd], |i| if lengths[i / hd] > t { 1.0 } else { 0.0 });
            let inactive = Tensor::from_fn(&[b, hd], |i| if lengths[i / hd] > t { 0.0 } else { 1.0 });
            let m = tape.constant(active);
            let inv = tape.constant(inactive);
            h = masked_mix(tape, h2, h, m, inv)?;
            c = masked_mix(tape, c2, c, m, inv)?;
        }
    }
    Ok(h)
}

fn masked_mix(tape: &mut Tape, new: Var, old: Var, m: Var, inv: Var) -> Result<Var> {
    let a = tape.hadamard(new, m)?;
    let b = tape.hadamard(old, inv)?;
    tape.add(a, b)
}

/// Positive-class probabilities `[B x 1]` for encodings `z[B x H]`.
pub fn classify_on_tape(tape: &mut Tape, vars: &BundleVars, z: Var) -> Result<Var> {
    let logit = logit_on_tape(tape, vars, z)?;
    tape.sigmoid(logit)
}

/// Classifier pre-activation `W2 · relu(W1 z + b1) + b2`, `[B x 1]`.
pub fn logit_on_tape(tape: &mut Tape, vars: &BundleVars, z: Var) -> Result<Var> {
    let pre = tape.matmul_bt(z, vars.w1)?;
    let pre = tape.add_bias(pre, vars.b1)?;
    let hidden = tape.relu(pre)?;
    let logit = tape.matmul_bt(hidden, vars.w2)?;
    tape.add_bias(logit, vars.b2)
}

pub fn output_logits(tape: &mut Tape, vars: &BundleVars, h: Var) -> Result<Var> {
    let l = tape.matmul_bt(h, vars.out_w)?;
    tape.add_bias(l, vars.out_b)
}

/// `Σ_b weight_b · mean_t CE(step t of row b)` under teacher forcing.
pub fn decoder_loss_on_tape(
    tape: &mut Tape,
    vars: &BundleVars,
    z: Var,
    targets: &[&[TokenId]],
    row_weights: &[f64],
) -> Result<Var> {
    if targets.is_empty() || targets.iter().any(|t| t.is_empty()) {
        return Err(Error::contract("decoder target must be nonempty"));
    }
    let b = targets.len();
    let hd = vars.decoder.hidden;
    let steps = targets.iter().map(|t| t.len() + 1).max().unwrap_or(0);
    let mut h = z;
    let mut c = tape.constant(Tensor::zeros(&[b, hd]));
    let mut total: Option<Var> = None;
    for t in 0..steps {
        let inputs: Vec<usize> = targets
            .iter()
            .map(|seq| match t {
                0 => BOS as usize,
                _ => seq.get(t - 1).copied().unwrap_or(PAD) as usize,
            })
            .collect();
        let expected: Vec<usize> = targets
            .iter()
            .map(|seq| match t.cmp(&seq.len()) {
                core::cmp::Ordering::Less => seq[t] as usize,
                core::cmp::Ordering::Equal => EOS as usize,
                core::cmp::Ordering::Greater => PAD as usize,
            })
            .collect();
        let weights: Vec<f64> = targets
            .iter()
            .zip(row_weights)
            .map(|(seq, &w)| if t <= seq.len() { w / (seq.len() + 1) as f64 } else { 0.0 })
            .collect();
        let x = tape.gather(vars.embedding, &inputs)?;
        let (h2, c2) = lstm_step(tape, &vars.decoder, x, h, c)?;
        h = h2;
        c = c2;
        let logits = output_logits(tape, vars, h)?;
        let step_loss = tape.softmax_cross_entropy(logits, &expected, &weights)?;
        total = Some(match total {
            None => step_loss,
            Some(acc) => tape.add(acc, step_loss)?,
        });
    }
    total.ok_or_else(|| Error::contract("empty decoder loss"))
}
