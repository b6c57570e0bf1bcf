use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embed::{GRID_COLS, GRID_ROWS};
use crate::nn::kernels::{conv_forward, conv_transpose_forward, matvec_acc, ConvGeometry};
use crate::nn::{Activation, Conv2dParams, LinearParams, NnError, Tape, Tensor, Var};

use super::{Mode, ModelError};

/// Shape hyperparameters shared by the sentence and task VAEs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub latent: usize,
    pub task_channels: usize,
    pub task_kernel: (usize, usize),
    pub activation: Activation,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Stride-1 valid conv: 40x18x10 = 7200 hidden units.
    #[default]
    Default,
    /// Stride (9,4): 40x2x3 = 240 hidden units.
    Paper240,
    /// Default shapes without nonlinearity.
    Linear,
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "default" => Ok(Preset::Default),
            "paper-240" => Ok(Preset::Paper240),
            "linear" => Ok(Preset::Linear),
            other => Err(format!(
                "unknown model preset {other:?} (expected default, paper-240 or linear)"
            )),
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Preset::Default => "default",
            Preset::Paper240 => "paper-240",
            Preset::Linear => "linear",
        })
    }
}

impl ArchConfig {
    pub fn preset(p: Preset) -> Self {
        let base = Self {
            channels: 40,
            kernel: (15, 15),
            stride: (1, 1),
            latent: 5,
            task_channels: 32,
            task_kernel: (4, 4),
            activation: Activation::Tanh,
        };
        match p {
            Preset::Default => base,
            Preset::Paper240 => Self {
                stride: (9, 4),
                ..base
            },
            Preset::Linear => Self {
                activation: Activation::Identity,
                ..base
            },
        }
    }

    /// `(C, H, W)` of the sentence conv output.
    pub fn hidden_shape(&self) -> (usize, usize, usize) {
        (
            self.channels,
            (GRID_ROWS - self.kernel.0) / self.stride.0 + 1,
            (GRID_COLS - self.kernel.1) / self.stride.1 + 1,
        )
    }

    pub fn hidden_len(&self) -> usize {
        let (c, h, w) = self.hidden_shape();
        c * h * w
    }
}

/// Conv + activation + linear head producing `[mu | logvar]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvEncoder {
    pub conv: Conv2dParams,
    pub head: LinearParams,
    pub input: (usize, usize),
    pub latent: usize,
}

/// Linear + activation + transposed conv back to a 32x24 grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvDecoder {
    pub expand: LinearParams,
    pub tconv: Conv2dParams,
    pub hidden: (usize, usize, usize),
}

#[derive(Clone, Copy, Debug)]
pub struct BoundEncoder {
    conv: (Var, Var),
    head: (Var, Var),
}

#[derive(Clone, Copy, Debug)]
pub struct BoundDecoder {
    expand: (Var, Var),
    tconv: (Var, Var),
}

impl ConvEncoder {
    fn init(
        input: (usize, usize),
        channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        latent: usize,
        rng: &mut impl Rng,
    ) -> Result<Self, ModelError> {
        if input.0 < kernel.0 || input.1 < kernel.1 {
            return Err(
                NnError::Shape(format!("kernel {kernel:?} larger than input {input:?}")).into(),
            );
        }
        let conv = Conv2dParams::init(1, channels, kernel, stride, rng);
        let flat = channels
            * ((input.0 - kernel.0) / stride.0 + 1)
            * ((input.1 - kernel.1) / stride.1 + 1);
        let head = LinearParams::init(flat, 2 * latent, rng);
        Ok(Self {
            conv,
            head,
            input,
            latent,
        })
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundEncoder {
        BoundEncoder {
            conv: self.conv.bind(tape),
            head: self.head.bind(tape),
        }
    }

    /// `x: [1, H, W]` to `(mu, logvar)`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        b: BoundEncoder,
        x: Var,
        act: Activation,
    ) -> Result<(Var, Var), ModelError> {
        let h = self.conv.forward(tape, b.conv, x)?;
        let h = act.apply(tape, h);
        let out = self.head.forward(tape, b.head, h)?;
        let mu = tape.slice(out, 0, self.latent)?;
        let logvar = tape.slice(out, self.latent, self.latent)?;
        Ok((mu, logvar))
    }

    /// Untracked forward pass; same kernels and operation order as
    /// [`ConvEncoder::forward`], so results are bit-identical.
    pub fn eval(&self, x: &[f64], act: Activation) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        let (h, w) = self.input;
        if x.len() != h * w {
            return Err(NnError::Shape(format!(
                "encoder input of length {}, expected {h}x{w}",
                x.len()
            ))
            .into());
        }
        let ws = self.conv.weight.shape();
        let geom = ConvGeometry::forward(1, h, w, ws[0], self.conv.kernel(), self.conv.stride)?;
        let mut cols = Vec::new();
        let mut hidden = conv_forward(
            &geom,
            x,
            self.conv.weight.data(),
            Some(self.conv.bias.data()),
            &mut cols,
        );
        act.apply_slice(&mut hidden);
        let mut out = self.head.bias.data().to_vec();
        matvec_acc(
            out.len(),
            hidden.len(),
            self.head.weight.data(),
            &hidden,
            &mut out,
        );
        let logvar = out.split_off(self.latent);
        Ok((out, logvar))
    }

    pub fn params(&self) -> [&Tensor; 4] {
        [
            &self.conv.weight,
            &self.conv.bias,
            &self.head.weight,
            &self.head.bias,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 4] {
        [
            &mut self.conv.weight,
            &mut self.conv.bias,
            &mut self.head.weight,
            &mut self.head.bias,
        ]
    }
}

impl ConvDecoder {
    fn init(arch: &ArchConfig, rng: &mut impl Rng) -> Self {
        let hidden = arch.hidden_shape();
        let expand = LinearParams::init(arch.latent, arch.hidden_len(), rng);
        let tconv = Conv2dParams::init_transposed(arch.channels, 1, arch.kernel, arch.stride, rng);
        Self {
            expand,
            tconv,
            hidden,
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundDecoder {
        BoundDecoder {
            expand: self.expand.bind(tape),
            tconv: self.tconv.bind(tape),
        }
    }

    /// `z: [latent]` to `[1, 32, 24]`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        b: BoundDecoder,
        z: Var,
        act: Activation,
    ) -> Result<Var, ModelError> {
        let h = self.expand.forward(tape, b.expand, z)?;
        let h = act.apply(tape, h);
        let (c, hh, ww) = self.hidden;
        let h = tape.reshape(h, &[c, hh, ww])?;
        let y = self
            .tconv
            .forward_transposed(tape, b.tconv, h, Some((GRID_ROWS, GRID_COLS)))?;
        debug_assert_eq!(tape.shape(y), [1, GRID_ROWS, GRID_COLS]);
        Ok(y)
    }

    /// Untracked forward pass, bit-identical to [`ConvDecoder::forward`].
    pub fn eval(&self, z: &[f64], act: Activation) -> Result<Vec<f64>, ModelError> {
        let mut hidden = self.expand.bias.data().to_vec();
        if z.len() != self.expand.in_dim() {
            return Err(NnError::Shape(format!(
                "latent of length {}, expected {}",
                z.len(),
                self.expand.in_dim()
            ))
            .into());
        }
        matvec_acc(
            hidden.len(),
            z.len(),
            self.expand.weight.data(),
            z,
            &mut hidden,
        );
        act.apply_slice(&mut hidden);
        let (c, hh, ww) = self.hidden;
        let geom = ConvGeometry::for_transposed(
            c,
            hh,
            ww,
            1,
            (GRID_ROWS, GRID_COLS),
            self.tconv.kernel(),
            self.tconv.stride,
        )?;
        Ok(conv_transpose_forward(
            &geom,
            &hidden,
            self.tconv.weight.data(),
            Some(self.tconv.bias.data()),
        ))
    }

    pub fn params(&self) -> [&Tensor; 4] {
        [
            &self.expand.weight,
            &self.expand.bias,
            &self.tconv.weight,
            &self.tconv.bias,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 4] {
        [
            &mut self.expand.weight,
            &mut self.expand.bias,
            &mut self.tconv.weight,
            &mut self.tconv.bias,
        ]
    }
}

/// Mean and log-variance of a latent, plus the sample when one was drawn.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentDistribution {
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
    pub sample: Option<Vec<f64>>,
}

/// Sentence-level VAE over a 32x24 embedding grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceVae {
    pub arch: ArchConfig,
    pub encoder: ConvEncoder,
    pub decoder: ConvDecoder,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundSentence {
    pub encoder: BoundEncoder,
    pub decoder: BoundDecoder,
}

pub const SENTENCE_PARAM_NAMES: [&str; 8] = [
    "sentence.encoder.conv.weight",
    "sentence.encoder.conv.bias",
    "sentence.encoder.head.weight",
    "sentence.encoder.head.bias",
    "sentence.decoder.expand.weight",
    "sentence.decoder.expand.bias",
    "sentence.decoder.tconv.weight",
    "sentence.decoder.tconv.bias",
];

impl SentenceVae {
    pub fn new(arch: ArchConfig, rng: &mut impl Rng) -> Result<Self, ModelError> {
        let encoder = ConvEncoder::init(
            (GRID_ROWS, GRID_COLS),
            arch.channels,
            arch.kernel,
            arch.stride,
            arch.latent,
            rng,
        )?;
        let decoder = ConvDecoder::init(&arch, rng);
        Ok(Self {
            arch,
            encoder,
            decoder,
        })
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundSentence {
        BoundSentence {
            encoder: self.encoder.bind(tape),
            decoder: self.decoder.bind(tape),
        }
    }

    /// Grid input (row-major 32x24 values) as a `[1, 32, 24]` constant.
    pub fn input(tape: &mut Tape, grid: &[f64]) -> Result<Var, ModelError> {
        Ok(tape.constant(Tensor::new(vec![1, GRID_ROWS, GRID_COLS], grid.to_vec())?))
    }

    pub fn encode(
        &self,
        tape: &mut Tape,
        b: BoundSentence,
        x: Var,
    ) -> Result<(Var, Var), ModelError> {
        let (mu, lv) = self
            .encoder
            .forward(tape, b.encoder, x, self.arch.activation)?;
        if !tape.value(mu).is_finite() || !tape.value(lv).is_finite() {
            return Err(ModelError::NonFinite("sentence encoder output".into()));
        }
        Ok((mu, lv))
    }

    pub fn decode(&self, tape: &mut Tape, b: BoundSentence, z: Var) -> Result<Var, ModelError> {
        self.decoder
            .forward(tape, b.decoder, z, self.arch.activation)
    }

    /// Sample in training mode, `mu` in eval mode.
    pub fn latent(
        tape: &mut Tape,
        mu: Var,
        lv: Var,
        mode: &mut Mode<'_>,
    ) -> Result<Var, ModelError> {
        match mode {
            Mode::Train(rng) => Ok(tape.reparameterize(mu, lv, &mut **rng)?),
            Mode::Eval => Ok(mu),
        }
    }

    /// Untracked encoding of one grid.
    pub fn encode_sentence(&self, grid: &[f64]) -> Result<LatentDistribution, ModelError> {
        let (mu, logvar) = self.encoder.eval(grid, self.arch.activation)?;
        if mu.iter().chain(&logvar).any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("sentence encoder output".into()));
        }
        Ok(LatentDistribution {
            mu,
            logvar,
            sample: None,
        })
    }

    /// Untracked decoding of one latent to a row-major 32x24 grid.
    pub fn decode_sentence(&self, z: &[f64]) -> Result<Vec<f64>, ModelError> {
        if z.len() != self.arch.latent {
            return Err(NnError::Shape(format!(
                "latent of length {} for a {}-d model",
                z.len(),
                self.arch.latent
            ))
            .into());
        }
        self.decoder.eval(z, self.arch.activation)
    }

    /// Eval-mode reconstruction `decode(mu(encode(x)))`.
    pub fn reconstruct(&self, grid: &[f64]) -> Result<Vec<f64>, ModelError> {
        let d = self.encode_sentence(grid)?;
        self.decode_sentence(&d.mu)
    }

    /// Parameters as constants: inference only, no gradient bookkeeping.
    pub fn bind_frozen(&self, tape: &mut Tape) -> BoundSentence {
        let mut c = |t: &Tensor| tape.constant(t.clone());
        let e = self.encoder.params();
        let d = self.decoder.params();
        BoundSentence {
            encoder: BoundEncoder {
                conv: (c(e[0]), c(e[1])),
                head: (c(e[2]), c(e[3])),
            },
            decoder: BoundDecoder {
                expand: (c(d[0]), c(d[1])),
                tconv: (c(d[2]), c(d[3])),
            },
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.encoder
            .params()
            .into_iter()
            .chain(self.decoder.params())
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let (e, d) = (&mut self.encoder, &mut self.decoder);
        e.params_mut().into_iter().chain(d.params_mut()).collect()
    }

    /// Binding over caller-provided variables in [`SENTENCE_PARAM_NAMES`] order.
    pub fn bound_from(vars: &[Var]) -> BoundSentence {
        assert_eq!(
            vars.len(),
            SENTENCE_PARAM_NAMES.len(),
            "sentence VAE has 8 parameter tensors"
        );
        BoundSentence {
            encoder: BoundEncoder {
                conv: (vars[0], vars[1]),
                head: (vars[2], vars[3]),
            },
            decoder: BoundDecoder {
                expand: (vars[4], vars[5]),
                tconv: (vars[6], vars[7]),
            },
        }
    }

    pub fn param_vars(b: &BoundSentence) -> Vec<Var> {
        let (e, d) = (b.encoder, b.decoder);
        vec![
            e.conv.0, e.conv.1, e.head.0, e.head.1, d.expand.0, d.expand.1, d.tconv.0, d.tconv.1,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }
}

/// Task-level VAE: 7 sentence latents in, one sentence embedding out.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskVae {
    pub arch: ArchConfig,
    pub encoder: ConvEncoder,
    pub decoder: ConvDecoder,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundTask {
    pub encoder: BoundEncoder,
    pub decoder: BoundDecoder,
}

pub const CONTEXT_LEN: usize = 7;

pub const TASK_PARAM_NAMES: [&str; 8] = [
    "task.encoder.conv.weight",
    "task.encoder.conv.bias",
    "task.encoder.head.weight",
    "task.encoder.head.bias",
    "task.decoder.expand.weight",
    "task.decoder.expand.bias",
    "task.decoder.tconv.weight",
    "task.decoder.tconv.bias",
];

impl TaskVae {
    pub fn new(arch: ArchConfig, rng: &mut impl Rng) -> Result<Self, ModelError> {
        let encoder = ConvEncoder::init(
            (CONTEXT_LEN, arch.latent),
            arch.task_channels,
            arch.task_kernel,
            (1, 1),
            arch.latent,
            rng,
        )?;
        let decoder = ConvDecoder::init(&arch, rng);
        Ok(Self {
            arch,
            encoder,
            decoder,
        })
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundTask {
        BoundTask {
            encoder: self.encoder.bind(tape),
            decoder: self.decoder.bind(tape),
        }
    }

    pub fn bind_frozen(&self, tape: &mut Tape) -> BoundTask {
        let mut c = |t: &Tensor| tape.constant(t.clone());
        let e = self.encoder.params();
        let d = self.decoder.params();
        BoundTask {
            encoder: BoundEncoder {
                conv: (c(e[0]), c(e[1])),
                head: (c(e[2]), c(e[3])),
            },
            decoder: BoundDecoder {
                expand: (c(d[0]), c(d[1])),
                tconv: (c(d[2]), c(d[3])),
            },
        }
    }

    /// `stack: [7, latent]` to `(mu, logvar)`.
    pub fn encode(
        &self,
        tape: &mut Tape,
        b: BoundTask,
        stack: Var,
    ) -> Result<(Var, Var), ModelError> {
        let (n, d) = (CONTEXT_LEN, self.arch.latent);
        if tape.shape(stack) != [n, d] {
            return Err(NnError::Shape(format!(
                "task input {:?}, expected [{n}, {d}]",
                tape.shape(stack)
            ))
            .into());
        }
        let x = tape.reshape(stack, &[1, n, d])?;
        let (mu, lv) = self
            .encoder
            .forward(tape, b.encoder, x, self.arch.activation)?;
        if !tape.value(mu).is_finite() || !tape.value(lv).is_finite() {
            return Err(ModelError::NonFinite("task encoder output".into()));
        }
        Ok((mu, lv))
    }

    pub fn decode(&self, tape: &mut Tape, b: BoundTask, z: Var) -> Result<Var, ModelError> {
        self.decoder
            .forward(tape, b.decoder, z, self.arch.activation)
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.encoder
            .params()
            .into_iter()
            .chain(self.decoder.params())
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let (e, d) = (&mut self.encoder, &mut self.decoder);
        e.params_mut().into_iter().chain(d.params_mut()).collect()
    }

    pub fn param_vars(b: &BoundTask) -> Vec<Var> {
        let (e, d) = (b.encoder, b.decoder);
        vec![
            e.conv.0, e.conv.1, e.head.0, e.head.1, d.expand.0, d.expand.1, d.tconv.0, d.tconv.1,
        ]
    }
}

/// Sentence VAE whose context latents feed a task VAE.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoLevelVae {
    pub sentence: SentenceVae,
    pub task: TaskVae,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundTwoLevel {
    pub sentence: BoundSentence,
    pub task: BoundTask,
}

/// Output of [`TwoLevelVae::forward`].
#[derive(Clone, Debug, PartialEq)]
pub struct TwoLevelOutput {
    /// `[7, latent]`, row-major.
    pub latents: Vec<f64>,
    /// Reconstructed answer embedding, row-major 32x24.
    pub answer: Vec<f64>,
}

impl TwoLevelVae {
    pub fn new(arch: ArchConfig, rng: &mut impl Rng) -> Result<Self, ModelError> {
        let sentence = SentenceVae::new(arch.clone(), rng)?;
        let task = TaskVae::new(arch, rng)?;
        Ok(Self { sentence, task })
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundTwoLevel {
        BoundTwoLevel {
            sentence: self.sentence.bind(tape),
            task: self.task.bind(tape),
        }
    }

    pub fn bind_frozen(&self, tape: &mut Tape) -> BoundTwoLevel {
        BoundTwoLevel {
            sentence: self.sentence.bind_frozen(tape),
            task: self.task.bind_frozen(tape),
        }
    }

    /// Tracked forward pass. Returns per-sentence `(x, mu, logvar, z)` and
    /// the task `(mu, logvar, answer)`.
    #[allow(clippy::type_complexity)]
    pub fn forward_on(
        &self,
        tape: &mut Tape,
        b: BoundTwoLevel,
        context: &[&[f64]],
        mode: &mut Mode<'_>,
    ) -> Result<(Vec<(Var, Var, Var, Var)>, (Var, Var, Var)), ModelError> {
        if context.len() != CONTEXT_LEN {
            return Err(ModelError::Context(context.len()));
        }
        let mut sent = Vec::with_capacity(CONTEXT_LEN);
        for grid in context {
            let x = SentenceVae::input(tape, grid)?;
            let (mu, lv) = self.sentence.encode(tape, b.sentence, x)?;
            let z = SentenceVae::latent(tape, mu, lv, mode)?;
            sent.push((x, mu, lv, z));
        }
        let zs: Vec<Var> = sent.iter().map(|s| s.3).collect();
        let stack = tape.stack(&zs)?;
        let (mu, lv) = self.task.encode(tape, b.task, stack)?;
        let z = SentenceVae::latent(tape, mu, lv, mode)?;
        let answer = self.task.decode(tape, b.task, z)?;
        Ok((sent, (mu, lv, answer)))
    }

    /// Eval-mode forward: latents are means, no sampling.
    pub fn forward(&self, context: &[&[f64]]) -> Result<TwoLevelOutput, ModelError> {
        if context.len() != CONTEXT_LEN {
            return Err(ModelError::Context(context.len()));
        }
        let mut latents = Vec::with_capacity(CONTEXT_LEN * self.sentence.arch.latent);
        for grid in context {
            latents.extend(self.sentence.encode_sentence(grid)?.mu);
        }
        let (mu, logvar) = self
            .task
            .encoder
            .eval(&latents, self.task.arch.activation)?;
        if mu.iter().chain(&logvar).any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("task encoder output".into()));
        }
        let answer = self.task.decoder.eval(&mu, self.task.arch.activation)?;
        Ok(TwoLevelOutput { latents, answer })
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.sentence
            .params()
            .into_iter()
            .chain(self.task.params())
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let (s, t) = (&mut self.sentence, &mut self.task);
        s.params_mut().into_iter().chain(t.params_mut()).collect()
    }

    /// Binding over caller-provided variables: sentence then task parameters.
    pub fn bound_from(vars: &[Var]) -> BoundTwoLevel {
        assert_eq!(vars.len(), 16, "two-level VAE has 16 parameter tensors");
        let task = SentenceVae::bound_from(&vars[8..]);
        BoundTwoLevel {
            sentence: SentenceVae::bound_from(&vars[..8]),
            task: BoundTask {
                encoder: task.encoder,
                decoder: task.decoder,
            },
        }
    }

    pub fn param_vars(b: &BoundTwoLevel) -> Vec<Var> {
        let mut v = SentenceVae::param_vars(&b.sentence);
        v.extend(TaskVae::param_vars(&b.task));
        v
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }
}
