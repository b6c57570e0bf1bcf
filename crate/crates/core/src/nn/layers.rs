use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NnError, Tape, Tensor, Var};

/// Nonlinearity applied after each conv / transposed conv hidden layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    /// Pure-linear ablation.
    Identity,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(x),
            Activation::Identity => x,
        }
    }

    /// Untracked version of [`Activation::apply`].
    pub fn apply_slice(self, xs: &mut [f64]) {
        if self == Activation::Tanh {
            xs.iter_mut().for_each(|x| *x = super::kernels::tanh(*x));
        }
    }
}

fn uniform(rng: &mut impl Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

/// Weights `[out, in, kh, kw]` and bias `[out]` of a 2-D convolution.
///
/// Used as-is by the transposed convolution, which then maps `out`
/// channels back to `in` channels and carries a bias of length `in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2dParams {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: (usize, usize),
}

impl Conv2dParams {
    /// Forward conv `in_ch -> out_ch`, init `U(±1/sqrt(in_ch*kh*kw))`.
    pub fn init(
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = in_ch * kernel.0 * kernel.1;
        let n = out_ch * fan_in;
        Self {
            weight: Tensor::new(
                vec![out_ch, in_ch, kernel.0, kernel.1],
                uniform(rng, n, fan_in),
            )
            .expect("consistent shape"),
            bias: Tensor::from_vec(uniform(rng, out_ch, fan_in)),
            stride,
        }
    }

    /// Transposed conv `in_ch -> out_ch`; weight stored as `[in_ch, out_ch, kh, kw]`.
    pub fn init_transposed(
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = in_ch * kernel.0 * kernel.1;
        let n = out_ch * fan_in;
        Self {
            weight: Tensor::new(
                vec![in_ch, out_ch, kernel.0, kernel.1],
                uniform(rng, n, fan_in),
            )
            .expect("consistent shape"),
            bias: Tensor::from_vec(uniform(rng, out_ch, fan_in)),
            stride,
        }
    }

    pub fn kernel(&self) -> (usize, usize) {
        let s = self.weight.shape();
        (s[2], s[3])
    }

    /// `(weight, bias)` as tracked leaves.
    pub fn bind(&self, tape: &mut Tape) -> (Var, Var) {
        (
            tape.param(self.weight.clone()),
            tape.param(self.bias.clone()),
        )
    }

    pub fn forward(&self, tape: &mut Tape, bound: (Var, Var), x: Var) -> Result<Var, NnError> {
        tape.conv2d(x, bound.0, Some(bound.1), self.stride)
    }

    pub fn forward_transposed(
        &self,
        tape: &mut Tape,
        bound: (Var, Var),
        x: Var,
        output: Option<(usize, usize)>,
    ) -> Result<Var, NnError> {
        tape.transposed_conv2d(x, bound.0, Some(bound.1), self.stride, output)
    }
}

/// Weights `[out, in]` and bias `[out]` of a dense layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LinearParams {
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: Tensor::new(
                vec![out_dim, in_dim],
                uniform(rng, in_dim * out_dim, in_dim),
            )
            .expect("consistent shape"),
            bias: Tensor::from_vec(uniform(rng, out_dim, in_dim)),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn bind(&self, tape: &mut Tape) -> (Var, Var) {
        (
            tape.param(self.weight.clone()),
            tape.param(self.bias.clone()),
        )
    }

    pub fn forward(&self, tape: &mut Tape, bound: (Var, Var), x: Var) -> Result<Var, NnError> {
        tape.linear(x, bound.0, Some(bound.1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_respects_fan_in_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let conv = Conv2dParams::init(1, 40, (15, 15), (1, 1), &mut rng);
        let bound = 1.0 / 15.0;
        assert!(conv.weight.data().iter().all(|w| w.abs() <= bound));
        assert_eq!(conv.weight.shape(), &[40, 1, 15, 15]);
        let lin = LinearParams::init(7200, 10, &mut rng);
        assert_eq!((lin.in_dim(), lin.out_dim()), (7200, 10));
    }
}
