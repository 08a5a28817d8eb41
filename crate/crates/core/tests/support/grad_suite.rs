//! Finite-difference checks over random instances of every differentiable
//! path. Shared by the core gradient tests and the acceptance run.

use natadv_core::attack::{adversarial_loss_from_logit, encoding_gradient};
use natadv_core::autodiff::{gradient_check, Tape, Var, GRADCHECK_STEP};
use natadv_core::model::{
    classify_on_tape, decoder_loss_on_tape, encode_on_tape, lstm_step, BundleVars, ModelBundle, ModelDims,
    SentenceEncoding,
};
use natadv_core::text::{Label, TokenId};
use natadv_core::{Result, Tensor};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Worst relative error seen by one family of checks.
#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub instances: usize,
    /// Instances discarded as ill-conditioned before `instances` were kept.
    pub redrawn: usize,
    pub worst: f64,
}

fn uniform(rng: &mut StdRng, shape: &[usize], scale: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-scale..scale))
}

/// Uniform values kept at least `gap` away from zero, for kinked ops.
fn away_from_zero(rng: &mut StdRng, shape: &[usize], scale: f64, gap: f64) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let v: f64 = rng.random_range(gap..scale);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

/// `Σ r ⊙ out` with a fixed random `r`, turning any tensor into a scalar
/// whose gradient touches every output element.
fn project(tape: &mut Tape, out: Var, r: &Tensor) -> Result<Var> {
    let rc = tape.constant(r.clone());
    let m = tape.hadamard(out, rc)?;
    tape.sum(m)
}

type Projection = Box<dyn Fn(&mut Tape, Var) -> Result<Var>>;
type Primitive = (&'static str, fn(&mut StdRng) -> (Tensor, Projection));

fn primitives() -> Vec<Primitive> {
    fn rows_cols(rng: &mut StdRng) -> (usize, usize) {
        (rng.random_range(1..4), rng.random_range(1..5))
    }
    vec![
        ("matmul", |rng: &mut StdRng| -> (Tensor, Projection) {
            let (r, c) = rows_cols(rng);
            let k = rng.random_range(1..4);
            let b = uniform(rng, &[c, k], 1.0);
            let proj = uniform(rng, &[r, k], 1.0);
            (uniform(rng, &[r, c], 1.0), Box::new(move |t, x| {
                let bv = t.constant(b.clone());
                let y = t.matmul(x, bv)?;
                project(t, y, &proj)
            }))
        }),
        ("matmul_bt", |rng: &mut StdRng| -> (Tensor, Projection) {
            let (r, c) = rows_cols(rng);
            let k = rng.random_range(1..4);
            let a = uniform(rng, &[k, c], 1.0);
            let proj = uniform(rng, &[k, r], 1.0);
            (uniform(rng, &[r, c], 1.0), Box::new(move |t, x| {
                let av = t.constant(a.clone());
                let y = t.matmul_bt(av, x)?;
                project(t, y, &proj)
            }))
        }),
        ("add_sub_hadamard_scale", |rng: &mut StdRng| -> (Tensor, Projection) {
            let (r, c) = rows_cols(rng);
            let other = uniform(rng, &[r, c], 1.0);
            let proj = uniform(rng, &[r, c], 1.0);
            (uniform(rng, &[r, c], 1.0), Box::new(move |t, x| {
                let o = t.constant(other.clone());
                let a = t.add(x, o)?;
                let s = t.sub(a, x)?;
                let h = t.hadamard(x, s)?;
                let h2 = t.hadamard(h, x)?;
                let y = t.scale(h2, -1.7)?;
                project(t, y, &proj)
            }))
        }),
        ("add_bias", |rng: &mut StdRng| -> (Tensor, Projection) {
            let (r, c) = rows_cols(rng);
            let m = uniform(rng, &[r, c], 1.0);
            let proj = uniform(rng, &[r, c], 1.0);
            (uniform(rng, &[c], 1.0), Box::new(move |t, x| {
                let mv = t.constant(m.clone());
                let y = t.add_bias(mv, x)?;
                let y = t.tanh(y)?;
                project(t, y, &proj)
            }))
        }),
        ("tanh_sigmoid", |rng: &mut StdRng| -> (Tensor, Projection) {
            let (r, c) = rows_cols(rng);
            let proj = uniform(rng, &[r, c], 1.0);
            (uniform(rng, &[r, c], 3.0), Box::new(move |t, x| {
                let a = t.tanh(x)?;
                let b = t.sigmoid(x)?;
                let y = t.hadamard(a, b)?;
                project(t, y, &proj)
            }))
        }),
        ("relu", |rng: &mut StdRng| -> (Tensor, Projection) {
            let (r, c) = rows_cols(rng);
            let proj = uniform(rng, &[r, c], 1.0);
            (away_from_zero(rng, &[r, c], 2.0, 1e-3), Box::new(move |t, x| {
                let y = t.relu(x)?;
                project(t, y, &proj)
            }))
        }),
        ("concat_slice", |rng: &mut StdRng| -> (Tensor, Projection) {
            let (r, c) = rows_cols(rng);
            let other = uniform(rng, &[r, 2], 1.0);
            let start = rng.random_range(0..c + 1);
            let proj = uniform(rng, &[r, c + 1 - start], 1.0);
            (uniform(rng, &[r, c], 1.0), Box::new(move |t, x| {
                let o = t.constant(other.clone());
                let cat = t.concat_cols(x, o)?;
                let s = t.slice_cols(cat, start, c + 1 - start)?;
                let s = t.hadamard(s, s)?;
                project(t, s, &proj)
            }))
        }),
        ("gather", |rng: &mut StdRng| -> (Tensor, Projection) {
            let v = rng.random_range(2..6);
            let e = rng.random_range(1..4);
            let n = rng.random_range(1..6);
            let ids: Vec<usize> = (0..n).map(|_| rng.random_range(0..v)).collect();
            let proj = uniform(rng, &[n, e], 1.0);
            (uniform(rng, &[v, e], 1.0), Box::new(move |t, x| {
                let g = t.gather(x, &ids)?;
                let g = t.tanh(g)?;
                project(t, g, &proj)
            }))
        }),
        ("binary_cross_entropy", |rng: &mut StdRng| -> (Tensor, Projection) {
            let n = rng.random_range(1..6);
            let ys: Vec<f64> = (0..n).map(|_| rng.random_range(0..2) as f64).collect();
            let ws: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            (uniform(rng, &[1, n], 4.0), Box::new(move |t, x| {
                let p = t.sigmoid(x)?;
                t.binary_cross_entropy(p, &ys, &ws)
            }))
        }),
        ("bce_with_logits", |rng: &mut StdRng| -> (Tensor, Projection) {
            let n = rng.random_range(1..6);
            let ys: Vec<f64> = (0..n).map(|_| rng.random_range(0..2) as f64).collect();
            let ws: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            (uniform(rng, &[1, n], 6.0), Box::new(move |t, x| t.bce_with_logits(x, &ys, &ws)))
        }),
        ("softmax_cross_entropy", |rng: &mut StdRng| -> (Tensor, Projection) {
            let (b, v) = (rng.random_range(1..4), rng.random_range(2..6));
            let ts: Vec<usize> = (0..b).map(|_| rng.random_range(0..v)).collect();
            let ws: Vec<f64> = (0..b).map(|_| rng.random_range(0.1..1.0)).collect();
            (uniform(rng, &[b, v], 3.0), Box::new(move |t, x| t.softmax_cross_entropy(x, &ts, &ws)))
        }),
    ]
}

fn small_dims(rng: &mut StdRng) -> ModelDims {
    ModelDims {
        vocab: rng.random_range(6..10),
        embed: rng.random_range(2..5),
        hidden: rng.random_range(2..6),
        ffn: rng.random_range(2..5),
    }
}

fn random_seq(rng: &mut StdRng, vocab: usize) -> Vec<TokenId> {
    let n = rng.random_range(1..5);
    (0..n).map(|_| rng.random_range(4..vocab as TokenId)).collect()
}

/// An encoding whose classifier pre-activations all sit at least `gap`
/// away from the ReLU kink.
fn clear_encoding(rng: &mut StdRng, m: &ModelBundle, gap: f64) -> SentenceEncoding {
    loop {
        let z: Vec<f64> = (0..m.dims.hidden).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pre = Tensor::row(z.clone()).matmul(&transpose(&m.classifier.w1)).expect("shapes");
        let clear = pre
            .data()
            .iter()
            .zip(m.classifier.b1.data())
            .all(|(a, b)| (a + b).abs() > gap);
        if clear {
            return SentenceEncoding(z);
        }
    }
}

fn transpose(t: &Tensor) -> Tensor {
    let (r, c) = t.dims2();
    Tensor::from_fn(&[c, r], |i| t.data()[(i % r) * c + i / r])
}

/// Replaces the tape variable for parameter block `block` with `x`.
fn with_block(vars: &mut BundleVars, block: usize, x: Var) {
    match block {
        0 => vars.embedding = x,
        1 => vars.encoder.w = x,
        2 => vars.encoder.b = x,
        3 => vars.w1 = x,
        4 => vars.b1 = x,
        5 => vars.w2 = x,
        6 => vars.b2 = x,
        7 => vars.decoder.w = x,
        8 => vars.decoder.b = x,
        9 => vars.out_w = x,
        _ => vars.out_b = x,
    }
}

fn check_block<F>(m: &ModelBundle, block: usize, loss: F) -> Result<f64>
where
    F: Fn(&mut Tape, &BundleVars) -> Result<Var>,
{
    let x = m.params()[block].clone();
    gradient_check(
        |t, xv| {
            let mut vars = m.bind(t, false);
            with_block(&mut vars, block, xv);
            loss(t, &vars)
        },
        &x,
        GRADCHECK_STEP,
    )
}

/// Central differences cannot resolve a gradient much below 1e-6 against
/// float roundoff, so an instance counts as well-conditioned only when every
/// coordinate of the checked blocks is either exactly zero (the loss does not
/// touch it) or at least that large.
fn conditioned<F>(m: &ModelBundle, blocks: &[usize], loss: F) -> Result<bool>
where
    F: Fn(&mut Tape, &BundleVars) -> Result<Var>,
{
    let mut t = Tape::new();
    let vars = m.bind(&mut t, true);
    let l = loss(&mut t, &vars)?;
    let grads = t.backward(l)?;
    let all = vars.all();
    Ok(blocks.iter().all(|&b| {
        grads
            .get(all[b])
            .is_none_or(|g| g.data().iter().all(|&v| v == 0.0 || v.abs() >= 1e-6))
    }))
}

/// Runs every family with `n` random instances each.
pub fn run(n: usize, seed: u64) -> Result<Vec<SuiteResult>> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Vec::new();

    for (name, make) in primitives() {
        let mut worst: f64 = 0.0;
        for _ in 0..n {
            let (x, f) = make(&mut rng);
            worst = worst.max(gradient_check(|t, v| f(t, v), &x, GRADCHECK_STEP)?);
        }
        out.push(SuiteResult { name, instances: n, redrawn: 0, worst });
    }

    // LSTM step with respect to every input and weight.
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let (b, e, h) = (rng.random_range(1..3), rng.random_range(1..4), rng.random_range(1..4));
        let w = uniform(&mut rng, &[4 * h, e + h], 0.8);
        let bias = uniform(&mut rng, &[4 * h], 0.5);
        let x0 = uniform(&mut rng, &[b, e], 1.0);
        let h0 = uniform(&mut rng, &[b, h], 1.0);
        let c0 = uniform(&mut rng, &[b, h], 1.0);
        let (rh, rc) = (uniform(&mut rng, &[b, h], 1.0), uniform(&mut rng, &[b, h], 1.0));
        let inputs = [w.clone(), bias.clone(), x0.clone(), h0.clone(), c0.clone()];
        for which in 0..5 {
            let f = |t: &mut Tape, v: Var| -> Result<Var> {
                let vals = [&w, &bias, &x0, &h0, &c0];
                let mut vars: Vec<Var> = vals.iter().map(|val| t.constant((*val).clone())).collect();
                vars[which] = v;
                let p = natadv_core::model::LstmVars {
                    w: vars[0],
                    b: vars[1],
                    hidden: h,
                    input: e,
                };
                let (h1, c1) = lstm_step(t, &p, vars[2], vars[3], vars[4])?;
                let a = project(t, h1, &rh)?;
                let bb = project(t, c1, &rc)?;
                t.add(a, bb)
            };
            worst = worst.max(gradient_check(f, &inputs[which], GRADCHECK_STEP)?);
        }
    }
    out.push(SuiteResult { name: "lstm_step", instances: n, redrawn: 0, worst });

    // Classifier with respect to z and its own weights.
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let m = ModelBundle::init(small_dims(&mut rng), seed ^ i as u64);
        let z = clear_encoding(&mut rng, &m, 1e-3);
        let y = [rng.random_range(0..2) as f64];
        let zt = z.to_row();
        let bce = |t: &mut Tape, vars: &BundleVars, zv: Var| -> Result<Var> {
            let p = classify_on_tape(t, vars, zv)?;
            t.binary_cross_entropy(p, &y, &[1.0])
        };
        worst = worst.max(gradient_check(
            |t, zv| {
                let vars = m.bind(t, false);
                bce(t, &vars, zv)
            },
            &zt,
            GRADCHECK_STEP,
        )?);
        for block in 3..=6 {
            worst = worst.max(check_block(&m, block, |t, vars| {
                let zv = t.constant(zt.clone());
                bce(t, vars, zv)
            })?);
        }
    }
    out.push(SuiteResult { name: "classifier", instances: n, redrawn: 0, worst });

    // Decoder loss with respect to z and the decoder-side parameters.
    let (mut worst, mut i, mut redrawn): (f64, u64, usize) = (0.0, 0, 0);
    let mut done = 0;
    while done < n {
        i += 1;
        let m = ModelBundle::init(small_dims(&mut rng), seed ^ (1000 + i));
        let target = random_seq(&mut rng, m.dims.vocab);
        let zt = Tensor::row((0..m.dims.hidden).map(|_| rng.random_range(-1.0..1.0)).collect());
        let dec = |t: &mut Tape, vars: &BundleVars, zv: Var| decoder_loss_on_tape(t, vars, zv, &[&target], &[1.0]);
        let blocks = [0, 7, 8, 9, 10];
        if !conditioned(&m, &blocks, |t, vars| {
            let zv = t.constant(zt.clone());
            dec(t, vars, zv)
        })? {
            redrawn += 1;
            continue;
        }
        worst = worst.max(gradient_check(
            |t, zv| {
                let vars = m.bind(t, false);
                dec(t, &vars, zv)
            },
            &zt,
            GRADCHECK_STEP,
        )?);
        for block in blocks {
            worst = worst.max(check_block(&m, block, |t, vars| {
                let zv = t.constant(zt.clone());
                dec(t, vars, zv)
            })?);
        }
        done += 1;
    }
    out.push(SuiteResult { name: "decoder_loss", instances: n, redrawn, worst });

    // ∇_z of the adversarial loss, as used by FGSM.
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let m = ModelBundle::init(small_dims(&mut rng), seed ^ (2000 + i as u64));
        let z = clear_encoding(&mut rng, &m, 1e-3);
        let target = if rng.random_bool(0.5) { Label::Positive } else { Label::Negative };
        let g = encoding_gradient(&m, &z, target)?;
        for (k, &ad) in g.iter().enumerate() {
            let shifted = |d: f64| -> Result<f64> {
                let mut v = z.0.clone();
                v[k] += d;
                Ok(adversarial_loss_from_logit(m.classify_logit(&SentenceEncoding(v))?, target))
            };
            let fd = (shifted(GRADCHECK_STEP)? - shifted(-GRADCHECK_STEP)?) / (2.0 * GRADCHECK_STEP);
            worst = worst.max((ad - fd).abs() / (ad.abs() + fd.abs()).max(1e-8));
        }
    }
    out.push(SuiteResult { name: "adversarial_loss_wrt_z", instances: n, redrawn: 0, worst });

    // Full training objective with respect to every parameter block.
    let (mut worst, mut i, mut redrawn): (f64, u64, usize) = (0.0, 0, 0);
    let mut done = 0;
    while done < n {
        i += 1;
        let m = ModelBundle::init(small_dims(&mut rng), seed ^ (3000 + i));
        let seqs: Vec<Vec<TokenId>> = (0..2).map(|_| random_seq(&mut rng, m.dims.vocab)).collect();
        let refs: Vec<&[TokenId]> = seqs.iter().map(|s| s.as_slice()).collect();
        let ys = [rng.random_range(0..2) as f64, rng.random_range(0..2) as f64];
        let total = |t: &mut Tape, vars: &BundleVars| -> Result<Var> {
            let z = encode_on_tape(t, vars, &refs)?;
            let p = classify_on_tape(t, vars, z)?;
            let c = t.binary_cross_entropy(p, &ys, &[0.15, 0.1])?;
            let d = decoder_loss_on_tape(t, vars, z, &refs, &[0.35, 0.25])?;
            t.add(c, d)
        };
        // The classifier ReLU has a kink at zero and the sigmoid saturates to
        // exactly 0 or 1 in floating point; keep clear of both.
        let zs = m.encode_batch(&refs)?;
        let clear = zs.iter().all(|z| {
            let pre = Tensor::row(z.0.clone()).matmul(&transpose(&m.classifier.w1)).expect("shapes");
            let p = m.classify(z).expect("shapes");
            pre.data().iter().zip(m.classifier.b1.data()).all(|(a, b)| (a + b).abs() > 1e-3)
                && (1e-4..=1.0 - 1e-4).contains(&p)
        });
        let blocks: [usize; 11] = core::array::from_fn(|b| b);
        if !clear || !conditioned(&m, &blocks, total)? {
            redrawn += 1;
            continue;
        }
        for block in blocks {
            worst = worst.max(check_block(&m, block, total)?);
        }
        done += 1;
    }
    out.push(SuiteResult { name: "end_to_end", instances: n, redrawn, worst });

    Ok(out)
}
