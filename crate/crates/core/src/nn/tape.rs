//! Reverse-mode differentiation over a linear tape.
//!
//! Nodes are appended in evaluation order, so the tape is already a
//! topological order and the backward pass is a single reverse sweep.

use rand::Rng;
use rand_distr::StandardNormal;

use super::kernels::{self, ConvGeometry};
use super::{NnError, Tensor, LOGVAR_CLAMP};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeometry,
        cols: Vec<f64>,
    },
    TransposedConv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeometry,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Tanh {
        x: Var,
    },
    Reshape {
        x: Var,
    },
    Slice {
        x: Var,
        start: usize,
    },
    Stack {
        xs: Vec<Var>,
    },
    Reparameterize {
        mu: Var,
        logvar: Var,
        eps: Vec<f64>,
    },
    Cosine {
        a: Var,
        b: Var,
    },
    MaxMargin {
        pos: Var,
        negs: Vec<Var>,
        active: bool,
    },
    KlStandardNormal {
        mu: Var,
        logvar: Var,
    },
    Sum {
        xs: Vec<Var>,
    },
    Scale {
        x: Var,
        factor: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Computation graph for one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    visits: Vec<u32>,
}

fn clamp_logvar(v: f64) -> (f64, bool) {
    if v < -LOGVAR_CLAMP {
        (-LOGVAR_CLAMP, false)
    } else if v > LOGVAR_CLAMP {
        (LOGVAR_CLAMP, false)
    } else {
        (v, true)
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, delta: &[f64]) {
    match slot {
        Some(g) => g.iter_mut().zip(delta).for_each(|(a, d)| *a += d),
        None => *slot = Some(delta.to_vec()),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Constant input; no gradient is tracked.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Trainable leaf; its gradient is available after [`Tape::backward`].
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    /// Gradient of the last backward root w.r.t. `v`, if `v` was reached.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// How many times the last backward pass processed node `v`.
    pub fn visit_count(&self, v: Var) -> u32 {
        self.visits.get(v.0).copied().unwrap_or(0)
    }

    fn check_finite(&self, v: Var, what: &str) -> Result<(), NnError> {
        if self.value(v).is_finite() {
            Ok(())
        } else {
            Err(NnError::NonFinite(what.to_string()))
        }
    }

    /// Valid cross-correlation. `x: [C_in, H, W]`, `w: [C_out, C_in, kh, kw]`,
    /// `b: [C_out]`.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: (usize, usize),
    ) -> Result<Var, NnError> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 3 || ws.len() != 4 || ws[1] != xs[0] {
            return Err(NnError::Shape(format!(
                "conv2d: input {xs:?} incompatible with weight {ws:?}"
            )));
        }
        if let Some(b) = b {
            if self.shape(b) != [ws[0]] {
                return Err(NnError::Shape(format!(
                    "conv2d: bias {:?} for {} output channels",
                    self.shape(b),
                    ws[0]
                )));
            }
        }
        let geom = ConvGeometry::forward(xs[0], xs[1], xs[2], ws[0], (ws[2], ws[3]), stride)?;
        let mut cols = Vec::new();
        let y = kernels::conv_forward(
            &geom,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            &mut cols,
        );
        let rg = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        let value = Tensor::new(vec![geom.out_ch, geom.out_h, geom.out_w], y)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                x,
                w,
                b,
                geom,
                cols,
            },
            rg,
        ))
    }

    /// Adjoint of [`Tape::conv2d`] for the same weight tensor. `x: [C, H, W]`
    /// with `w: [C, C', kh, kw]` yields `[C', H', W']`; `output` picks
    /// `(H', W')` when several sizes are reachable (default: the minimum
    /// `(H-1)*sh+kh x (W-1)*sw+kw`).
    pub fn transposed_conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: (usize, usize),
        output: Option<(usize, usize)>,
    ) -> Result<Var, NnError> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 3 || ws.len() != 4 || ws[0] != xs[0] {
            return Err(NnError::Shape(format!(
                "transposed_conv2d: input {xs:?} incompatible with weight {ws:?}"
            )));
        }
        if let Some(b) = b {
            if self.shape(b) != [ws[1]] {
                return Err(NnError::Shape(format!(
                    "transposed_conv2d: bias {:?} for {} output channels",
                    self.shape(b),
                    ws[1]
                )));
            }
        }
        let kernel = (ws[2], ws[3]);
        let target = output
            .unwrap_or_else(|| ConvGeometry::transposed_min_output(xs[1], xs[2], kernel, stride));
        let geom =
            ConvGeometry::for_transposed(xs[0], xs[1], xs[2], ws[1], target, kernel, stride)?;
        let y = kernels::conv_transpose_forward(
            &geom,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
        );
        let rg = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        let value = Tensor::new(vec![geom.in_ch, geom.in_h, geom.in_w], y)?;
        Ok(self.push(value, Op::TransposedConv2d { x, w, b, geom }, rg))
    }

    /// `W·x + b` with `w: [out, in]`; `x` is read flat.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var, NnError> {
        let ws = self.shape(w).to_vec();
        let n = self.value(x).len();
        if ws.len() != 2 || ws[1] != n {
            return Err(NnError::Shape(format!(
                "linear: input of length {n} incompatible with weight {ws:?}"
            )));
        }
        if let Some(b) = b {
            if self.shape(b) != [ws[0]] {
                return Err(NnError::Shape(format!(
                    "linear: bias {:?} for output {}",
                    self.shape(b),
                    ws[0]
                )));
            }
        }
        let mut y = match b {
            Some(b) => self.value(b).data().to_vec(),
            None => vec![0.0; ws[0]],
        };
        kernels::matvec_acc(ws[0], n, self.value(w).data(), self.value(x).data(), &mut y);
        let rg = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        Ok(self.push(Tensor::from_vec(y), Op::Linear { x, w, b }, rg))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let y = Tensor::new(
            v.shape().to_vec(),
            v.data().iter().map(|&a| kernels::tanh(a)).collect(),
        )
        .expect("shape preserved");
        let rg = self.needs(x);
        self.push(y, Op::Tanh { x }, rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, NnError> {
        let y = self.value(x).reshaped(shape)?;
        let rg = self.needs(x);
        Ok(self.push(y, Op::Reshape { x }, rg))
    }

    /// Contiguous flat sub-range `[start, start+len)` as a 1-D tensor.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NnError> {
        let data = self.value(x).data();
        if len == 0 || start + len > data.len() {
            return Err(NnError::Shape(format!(
                "slice [{start}, {}) out of range for length {}",
                start + len,
                data.len()
            )));
        }
        let y = Tensor::from_vec(data[start..start + len].to_vec());
        let rg = self.needs(x);
        Ok(self.push(y, Op::Slice { x, start }, rg))
    }

    /// Stack equally shaped tensors along a new leading axis.
    pub fn stack(&mut self, xs: &[Var]) -> Result<Var, NnError> {
        let first = xs
            .first()
            .ok_or_else(|| NnError::Shape("stack of zero tensors".into()))?;
        let inner = self.shape(*first).to_vec();
        let mut data = Vec::with_capacity(xs.len() * self.value(*first).len());
        for &x in xs {
            if self.shape(x) != inner.as_slice() {
                return Err(NnError::Shape(format!(
                    "stack: shape {:?} differs from {inner:?}",
                    self.shape(x)
                )));
            }
            data.extend_from_slice(self.value(x).data());
        }
        let mut shape = vec![xs.len()];
        shape.extend(inner);
        let rg = xs.iter().any(|&x| self.needs(x));
        Ok(self.push(Tensor::new(shape, data)?, Op::Stack { xs: xs.to_vec() }, rg))
    }

    /// `mu + exp(logvar/2) * eps` with `eps ~ N(0, I)` drawn from `rng`.
    pub fn reparameterize<R: Rng + ?Sized>(
        &mut self,
        mu: Var,
        logvar: Var,
        rng: &mut R,
    ) -> Result<Var, NnError> {
        let d = self.value(mu).len();
        let eps: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        self.reparameterize_with_noise(mu, logvar, eps)
    }

    /// [`Tape::reparameterize`] with caller-supplied noise.
    pub fn reparameterize_with_noise(
        &mut self,
        mu: Var,
        logvar: Var,
        eps: Vec<f64>,
    ) -> Result<Var, NnError> {
        let (m, lv) = (self.value(mu), self.value(logvar));
        if m.len() != lv.len() || m.len() != eps.len() {
            return Err(NnError::Shape(format!(
                "reparameterize: mu {}, logvar {}, noise {}",
                m.len(),
                lv.len(),
                eps.len()
            )));
        }
        let z: Vec<f64> = m
            .data()
            .iter()
            .zip(lv.data())
            .zip(&eps)
            .map(|((m, l), e)| m + (0.5 * clamp_logvar(*l).0).exp() * e)
            .collect();
        let rg = self.needs(mu) || self.needs(logvar);
        Ok(self.push(
            Tensor::from_vec(z),
            Op::Reparameterize { mu, logvar, eps },
            rg,
        ))
    }

    /// Cosine similarity of two equally sized tensors.
    pub fn cosine_similarity(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.len() != tb.len() {
            return Err(NnError::Shape(format!(
                "cosine: lengths {} and {}",
                ta.len(),
                tb.len()
            )));
        }
        let (na, nb) = (ta.norm(), tb.norm());
        if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
            return Err(NnError::Degenerate(format!(
                "cosine similarity of a zero-norm or non-finite vector (norms {na}, {nb})"
            )));
        }
        let c = (ta.dot(tb) / (na * nb)).clamp(-1.0, 1.0);
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::scalar(c), Op::Cosine { a, b }, rg))
    }

    /// `max(0, 1 - pos + mean(negs))` over scalar nodes.
    pub fn max_margin(&mut self, pos: Var, negs: &[Var]) -> Result<Var, NnError> {
        if negs.is_empty() {
            return Err(NnError::EmptyNegatives);
        }
        let mean = negs.iter().map(|&n| self.scalar(n)).sum::<f64>() / negs.len() as f64;
        let v = 1.0 - self.scalar(pos) + mean;
        let active = v > 0.0;
        let rg = self.needs(pos) || negs.iter().any(|&n| self.needs(n));
        Ok(self.push(
            Tensor::scalar(v.max(0.0)),
            Op::MaxMargin {
                pos,
                negs: negs.to_vec(),
                active,
            },
            rg,
        ))
    }

    /// Closed-form `KL(N(mu, exp(logvar)) || N(0, I))`.
    pub fn kl_standard_normal(&mut self, mu: Var, logvar: Var) -> Result<Var, NnError> {
        self.check_finite(mu, "kl: mu")?;
        self.check_finite(logvar, "kl: logvar")?;
        let (m, lv) = (self.value(mu), self.value(logvar));
        if m.len() != lv.len() {
            return Err(NnError::Shape(format!(
                "kl: mu {} vs logvar {}",
                m.len(),
                lv.len()
            )));
        }
        let kl = 0.5
            * m.data()
                .iter()
                .zip(lv.data())
                .map(|(m, l)| m * m + clamp_logvar(*l).0.exp() - 1.0 - l)
                .sum::<f64>();
        let rg = self.needs(mu) || self.needs(logvar);
        Ok(self.push(Tensor::scalar(kl), Op::KlStandardNormal { mu, logvar }, rg))
    }

    /// Sum of scalar nodes.
    pub fn sum(&mut self, xs: &[Var]) -> Result<Var, NnError> {
        if xs.is_empty() {
            return Err(NnError::Shape("sum of zero terms".into()));
        }
        let s = xs.iter().map(|&x| self.scalar(x)).sum();
        let rg = xs.iter().any(|&x| self.needs(x));
        Ok(self.push(Tensor::scalar(s), Op::Sum { xs: xs.to_vec() }, rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let v = self.value(x);
        let y = Tensor::new(
            v.shape().to_vec(),
            v.data().iter().map(|a| a * factor).collect(),
        )
        .expect("shape preserved");
        let rg = self.needs(x);
        self.push(y, Op::Scale { x, factor }, rg)
    }

    /// Back-propagate from the scalar node `root`. Gradients of every
    /// tracked node reachable from `root` become available via [`Tape::grad`].
    pub fn backward(&mut self, root: Var) -> Result<(), NnError> {
        if self.value(root).len() != 1 {
            return Err(NnError::Shape(format!(
                "backward root must be scalar, got {:?}",
                self.shape(root)
            )));
        }
        let n = root.0 + 1;
        self.grads = vec![None; self.nodes.len()];
        self.visits = vec![0; self.nodes.len()];
        self.grads[root.0] = Some(vec![1.0]);
        for i in (0..n).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.visits[i] += 1;
            if self.nodes[i].requires_grad {
                propagate(&self.nodes, &mut self.grads, i, &g);
            }
            self.grads[i] = Some(g);
        }
        Ok(())
    }
}

fn send(nodes: &[Node], grads: &mut [Option<Vec<f64>>], target: Var, delta: &[f64]) {
    if nodes[target.0].requires_grad {
        accumulate(&mut grads[target.0], delta);
    }
}

fn propagate(nodes: &[Node], grads: &mut [Option<Vec<f64>>], i: usize, g: &[f64]) {
    let node = &nodes[i];
    match &node.op {
        Op::Leaf => {}
        Op::Conv2d {
            x,
            w,
            b,
            geom,
            cols,
        } => {
            let (x, w, b, geom) = (*x, *w, *b, *geom);
            let (dx, dw, db) = kernels::conv_backward(
                &geom,
                cols,
                nodes[w.0].value.data(),
                g,
                nodes[x.0].requires_grad,
            );
            if let Some(dx) = dx {
                send(nodes, grads, x, &dx);
            }
            send(nodes, grads, w, &dw);
            if let Some(b) = b {
                send(nodes, grads, b, &db);
            }
        }
        Op::TransposedConv2d { x, w, b, geom } => {
            let (x, w, b, geom) = (*x, *w, *b, *geom);
            let (dx, dw, db) = kernels::conv_transpose_backward(
                &geom,
                nodes[x.0].value.data(),
                nodes[w.0].value.data(),
                g,
                nodes[x.0].requires_grad,
            );
            if let Some(dx) = dx {
                send(nodes, grads, x, &dx);
            }
            send(nodes, grads, w, &dw);
            if let Some(b) = b {
                send(nodes, grads, b, &db);
            }
        }
        Op::Linear { x, w, b } => {
            let (x, w, b) = (*x, *w, *b);
            let xv = nodes[x.0].value.data();
            let wv = nodes[w.0].value.data();
            let (m, n) = (g.len(), xv.len());
            if nodes[w.0].requires_grad {
                let dw = grads[w.0].get_or_insert_with(|| vec![0.0; m * n]);
                kernels::outer_acc(g, xv, dw);
            }
            if nodes[x.0].requires_grad {
                let mut dx = vec![0.0; n];
                kernels::matvec_t_acc(m, n, wv, g, &mut dx);
                send(nodes, grads, x, &dx);
            }
            if let Some(b) = b {
                send(nodes, grads, b, g);
            }
        }
        Op::Tanh { x } => {
            let x = *x;
            let dx: Vec<f64> = node
                .value
                .data()
                .iter()
                .zip(g)
                .map(|(y, g)| g * (1.0 - y * y))
                .collect();
            send(nodes, grads, x, &dx);
        }
        Op::Reshape { x } => {
            let x = *x;
            send(nodes, grads, x, g);
        }
        Op::Slice { x, start } => {
            let (x, start) = (*x, *start);
            let mut dx = vec![0.0; nodes[x.0].value.len()];
            dx[start..start + g.len()].copy_from_slice(g);
            send(nodes, grads, x, &dx);
        }
        Op::Stack { xs } => {
            let chunk = g.len() / xs.len();
            for (k, &x) in xs.iter().enumerate() {
                send(nodes, grads, x, &g[k * chunk..(k + 1) * chunk]);
            }
        }
        Op::Reparameterize { mu, logvar, eps } => {
            let (mu, logvar) = (*mu, *logvar);
            let dlv: Vec<f64> = nodes[logvar.0]
                .value
                .data()
                .iter()
                .zip(eps)
                .zip(g)
                .map(|((l, e), g)| {
                    let (c, inside) = clamp_logvar(*l);
                    if inside {
                        g * e * 0.5 * (0.5 * c).exp()
                    } else {
                        0.0
                    }
                })
                .collect();
            send(nodes, grads, mu, g);
            send(nodes, grads, logvar, &dlv);
        }
        Op::Cosine { a, b } => {
            let (a, b) = (*a, *b);
            let c = node.value.data()[0];
            let av = &nodes[a.0].value;
            let bv = &nodes[b.0].value;
            let (na, nb) = (av.norm(), bv.norm());
            let g = g[0];
            let da: Vec<f64> = av
                .data()
                .iter()
                .zip(bv.data())
                .map(|(x, y)| g * (y / (na * nb) - c * x / (na * na)))
                .collect();
            let db: Vec<f64> = av
                .data()
                .iter()
                .zip(bv.data())
                .map(|(x, y)| g * (x / (na * nb) - c * y / (nb * nb)))
                .collect();
            send(nodes, grads, a, &da);
            send(nodes, grads, b, &db);
        }
        Op::MaxMargin { pos, negs, active } => {
            if *active {
                let pos = *pos;
                let share = g[0] / negs.len() as f64;
                send(nodes, grads, pos, &[-g[0]]);
                for &n in negs {
                    send(nodes, grads, n, &[share]);
                }
            }
        }
        Op::KlStandardNormal { mu, logvar } => {
            let (mu, logvar) = (*mu, *logvar);
            let g = g[0];
            let dmu: Vec<f64> = nodes[mu.0].value.data().iter().map(|m| g * m).collect();
            let dlv: Vec<f64> = nodes[logvar.0]
                .value
                .data()
                .iter()
                .map(|l| {
                    let (c, inside) = clamp_logvar(*l);
                    let e = if inside { c.exp() } else { 0.0 };
                    g * 0.5 * (e - 1.0)
                })
                .collect();
            send(nodes, grads, mu, &dmu);
            send(nodes, grads, logvar, &dlv);
        }
        Op::Sum { xs } => {
            for &x in xs {
                send(nodes, grads, x, g);
            }
        }
        Op::Scale { x, factor } => {
            let (x, f) = (*x, *factor);
            let dx: Vec<f64> = g.iter().map(|v| v * f).collect();
            send(nodes, grads, x, &dx);
        }
    }
}
