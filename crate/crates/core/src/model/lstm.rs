use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::{Error, Result, Tensor};

/// Single-layer LSTM weights.
///
/// `w` stacks the input, forget, cell and output gate rows as
/// `[4H x (E + H)]`, applied to the concatenation `[x_t ; h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w: Tensor,
    pub b: Tensor,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            w: Tensor::zeros(&[4 * hidden, input + hidden]),
            b: Tensor::zeros(&[4 * hidden]),
        }
    }

    /// Uniform weights in `[-scale, scale]`, zero biases except the forget
    /// gate slice, which starts at 1.
    pub fn init<R: Rng>(input: usize, hidden: usize, scale: f64, rng: &mut R) -> Self {
        let w = Tensor::from_fn(&[4 * hidden, input + hidden], |_| rng.random_range(-scale..=scale));
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        LstmParams {
            w,
            b: Tensor::new(vec![4 * hidden], b).expect("bias shape"),
        }
    }

    pub fn hidden(&self) -> usize {
        self.b.len() / 4
    }

    pub fn input(&self) -> usize {
        self.w.cols() - self.hidden()
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> LstmVars {
        let bind = |tape: &mut Tape, t: &Tensor| {
            if trainable {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        LstmVars {
            w: bind(tape, &self.w),
            b: bind(tape, &self.b),
            hidden: self.hidden(),
            input: self.input(),
        }
    }
}

/// LSTM weights registered on a tape.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub w: Var,
    pub b: Var,
    pub hidden: usize,
    pub input: usize,
}

/// One LSTM step over a batch: `x[B x E]`, `h, c[B x H]` -> `(h', c')`.
pub fn lstm_step(tape: &mut Tape, p: &LstmVars, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
    let hd = p.hidden;
    if tape.value(x).cols() != p.input || tape.value(h).cols() != hd || tape.value(c).cols() != hd {
        return Err(Error::Dimension {
            op: "lstm_step",
            lhs: Vec::from(tape.value(x).shape()),
            rhs: vec![p.input, hd],
        });
    }
    let xh = tape.concat_cols(x, h)?;
    let pre = tape.matmul_bt(xh, p.w)?;
    let gates = tape.add_bias(pre, p.b)?;
    let i_pre = tape.slice_cols(gates, 0, hd)?;
    let f_pre = tape.slice_cols(gates, hd, hd)?;
    let g_pre = tape.slice_cols(gates, 2 * hd, hd)?;
    let o_pre = tape.slice_cols(gates, 3 * hd, hd)?;
    let i = tape.sigmoid(i_pre)?;
    let f = tape.sigmoid(f_pre)?;
    let g = tape.tanh(g_pre)?;
    let o = tape.sigmoid(o_pre)?;
    let fc = tape.hadamard(f, c)?;
    let ig = tape.hadamard(i, g)?;
    let c_next = tape.add(fc, ig)?;
    let tc = tape.tanh(c_next)?;
    let h_next = tape.hadamard(o, tc)?;
    Ok((h_next, c_next))
}
