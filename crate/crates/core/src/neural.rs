//! Dense f64 tensors and the handful of layers the generator, reranker and
//! lexicalizer LMs need, each with a hand-written backward pass.
//!
//! Parameters live in a [`ModelParams`] store addressed by [`ParamId`];
//! gradients accumulate in a parallel [`Gradients`] store of the same
//! shapes. Layers are small structs of parameter ids with `forward` and
//! `backward` methods; caches returned by `forward` carry what `backward`
//! needs.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type NlgRng = ChaCha8Rng;

/// Uniform initialization range for weights.
pub const INIT_SCALE: f64 = 0.1;
/// Added to the forget-gate bias at initialization.
pub const FORGET_BIAS: f64 = 1.0;
pub const DEFAULT_CLIP_NORM: f64 = 5.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "{} values for shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn uniform(shape: &[usize], scale: f64, rng: &mut NlgRng) -> Tensor {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(|_| rng.gen_range(-scale..scale)).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row `r` of a matrix.
    pub fn row(&self, r: usize) -> &[f64] {
        let cols = self.cols();
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let cols = self.cols();
        &mut self.data[r * cols..(r + 1) * cols]
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

/// Named parameter tensors plus the seed they were initialized from.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
    pub seed: u64,
}

impl ModelParams {
    pub fn new(seed: u64) -> ModelParams {
        ModelParams {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
            seed,
        }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter `{name}`")));
        }
        if !tensor.is_finite() {
            return Err(Error::NonFinite(format!("parameter `{name}`")));
        }
        self.index.insert(name.clone(), self.tensors.len());
        self.names.push(name);
        self.tensors.push(tensor);
        Ok(ParamId(self.tensors.len() - 1))
    }

    pub fn add_uniform(&mut self, name: impl Into<String>, shape: &[usize], rng: &mut NlgRng) -> Result<ParamId> {
        self.add(name, Tensor::uniform(shape, INIT_SCALE, rng))
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> Result<ParamId> {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, t) in self.names.iter().zip(&self.tensors) {
            if !t.is_finite() {
                return Err(Error::NonFinite(format!("parameter `{name}`")));
            }
        }
        Ok(())
    }

    /// Copies values from `other`, which must have the same names and shapes.
    pub fn copy_from(&mut self, other: &ModelParams) -> Result<()> {
        if self.names != other.names {
            return Err(Error::Shape("parameter sets differ".into()));
        }
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            if a.shape != b.shape {
                return Err(Error::Shape("parameter shapes differ".into()));
            }
            a.data.copy_from_slice(&b.data);
        }
        Ok(())
    }
}

/// Gradient accumulators parallel to a [`ModelParams`].
#[derive(Clone, Debug)]
pub struct Gradients {
    tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Gradients {
        Gradients {
            tensors: params.tensors.iter().map(|t| Tensor::zeros(&t.shape)).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn zero(&mut self) {
        self.tensors.iter_mut().for_each(|t| t.fill(0.0));
    }

    pub fn scale(&mut self, factor: f64) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales so the global L2 norm is at most `max_norm`; returns the
    /// norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm.is_finite() {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

// ---------------------------------------------------------------------------
// small dense helpers

/// `y = W x` for a row-major `rows × cols` matrix.
pub fn matvec(w: &[f64], cols: usize, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), cols);
    w.chunks_exact(cols)
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// `y += W x`.
pub fn matvec_acc(w: &[f64], cols: usize, x: &[f64], y: &mut [f64]) {
    for (row, out) in w.chunks_exact(cols).zip(y.iter_mut()) {
        *out += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `dx += Wᵀ dy`.
pub fn matvec_t_acc(w: &[f64], cols: usize, dy: &[f64], dx: &mut [f64]) {
    for (row, &g) in w.chunks_exact(cols).zip(dy) {
        if g != 0.0 {
            for (d, a) in dx.iter_mut().zip(row) {
                *d += a * g;
            }
        }
    }
}

/// `dW += dy ⊗ x`.
pub fn outer_acc(dw: &mut [f64], cols: usize, dy: &[f64], x: &[f64]) {
    for (row, &g) in dw.chunks_exact_mut(cols).zip(dy) {
        if g != 0.0 {
            for (d, a) in row.iter_mut().zip(x) {
                *d += a * g;
            }
        }
    }
}

pub fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    logits.iter().map(|x| x - lse).collect()
}

/// Cross-entropy of `softmax(logits)` against `target`; returns the loss
/// and its gradient with respect to the logits.
pub fn softmax_xent(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    if target >= logits.len() {
        return Err(Error::invalid(format!(
            "target {target} out of range for {} logits",
            logits.len()
        )));
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let logp = log_softmax(logits);
    let mut grad: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    grad[target] -= 1.0;
    Ok((-logp[target], grad))
}

/// Binary cross-entropy of `sigmoid(logit)` against `target ∈ {0, 1}`;
/// returns the loss and its gradient with respect to the logit.
pub fn sigmoid_xent(logit: f64, target: f64) -> (f64, f64) {
    // log(1 + e^-|x|) + max(x, 0) - x t
    let loss = (-logit.abs()).exp().ln_1p() + logit.max(0.0) - logit * target;
    (loss, sigmoid(logit) - target)
}

/// Inverted-dropout scale factors: 0 for dropped elements, `1/(1-rate)` for
/// kept ones; all ones when not training.
pub fn dropout_mask(len: usize, rate: f64, training: bool, rng: &mut NlgRng) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} not in [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok(vec![1.0; len]);
    }
    let keep = 1.0 / (1.0 - rate);
    Ok((0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect())
}

pub fn dropout(x: &Tensor, rate: f64, training: bool, rng: &mut NlgRng) -> Result<Tensor> {
    let mask = dropout_mask(x.len(), rate, training, rng)?;
    Ok(Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().zip(&mask).map(|(a, m)| a * m).collect(),
    })
}

pub fn apply_mask(x: &[f64], mask: &[f64]) -> Vec<f64> {
    x.iter().zip(mask).map(|(a, m)| a * m).collect()
}

// ---------------------------------------------------------------------------
// layers

#[derive(Clone, Copy, Debug)]
pub struct Embedding {
    pub table: ParamId,
    pub dim: usize,
}

impl Embedding {
    pub fn new(params: &mut ModelParams, name: &str, vocab: usize, dim: usize, rng: &mut NlgRng) -> Result<Self> {
        Ok(Embedding {
            table: params.add_uniform(format!("{name}.table"), &[vocab, dim], rng)?,
            dim,
        })
    }

    pub fn forward<'a>(&self, params: &'a ModelParams, index: usize) -> &'a [f64] {
        params.get(self.table).row(index)
    }

    pub fn backward(&self, grads: &mut Gradients, index: usize, dy: &[f64]) {
        add_into(grads.get_mut(self.table).row_mut(index), dy);
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(params: &mut ModelParams, name: &str, input: usize, output: usize, rng: &mut NlgRng) -> Result<Self> {
        Ok(Linear {
            w: params.add_uniform(format!("{name}.w"), &[output, input], rng)?,
            b: params.add_zeros(format!("{name}.b"), &[output])?,
            input,
            output,
        })
    }

    pub fn forward(&self, params: &ModelParams, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input {
            return Err(Error::Shape(format!("linear input {} != {}", x.len(), self.input)));
        }
        let mut y = params.get(self.b).data().to_vec();
        matvec_acc(params.get(self.w).data(), self.input, x, &mut y);
        Ok(y)
    }

    /// Accumulates parameter gradients and returns `dx`.
    pub fn backward(&self, params: &ModelParams, grads: &mut Gradients, x: &[f64], dy: &[f64]) -> Vec<f64> {
        outer_acc(grads.get_mut(self.w).data_mut(), self.input, dy, x);
        add_into(grads.get_mut(self.b).data_mut(), dy);
        let mut dx = vec![0.0; self.input];
        matvec_t_acc(params.get(self.w).data(), self.input, dy, &mut dx);
        dx
    }
}

/// Single LSTM cell; the weight matrix stacks the input, forget, candidate
/// and output gates (in that order) over the concatenation `[x; h]`.
#[derive(Clone, Copy, Debug)]
pub struct LstmCell {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

#[derive(Clone, Debug)]
pub struct LstmCache {
    xh: Vec<f64>,
    c_prev: Vec<f64>,
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> LstmState {
        LstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

impl LstmCell {
    pub fn new(params: &mut ModelParams, name: &str, input: usize, hidden: usize, rng: &mut NlgRng) -> Result<Self> {
        let w = params.add_uniform(format!("{name}.w"), &[4 * hidden, input + hidden], rng)?;
        let mut bias = Tensor::zeros(&[4 * hidden]);
        bias.data_mut()[hidden..2 * hidden].fill(FORGET_BIAS);
        let b = params.add(format!("{name}.b"), bias)?;
        Ok(LstmCell { w, b, input, hidden })
    }

    pub fn step(&self, params: &ModelParams, x: &[f64], state: &LstmState) -> Result<(LstmState, LstmCache)> {
        let hdim = self.hidden;
        if x.len() != self.input || state.h.len() != hdim || state.c.len() != hdim {
            return Err(Error::Shape(format!(
                "lstm step: input {} (want {}), state {}/{} (want {hdim})",
                x.len(),
                self.input,
                state.h.len(),
                state.c.len()
            )));
        }
        let mut xh = Vec::with_capacity(self.input + hdim);
        xh.extend_from_slice(x);
        xh.extend_from_slice(&state.h);
        let mut gates = params.get(self.b).data().to_vec();
        matvec_acc(params.get(self.w).data(), self.input + hdim, &xh, &mut gates);
        for (k, z) in gates.iter_mut().enumerate() {
            *z = if (2 * hdim..3 * hdim).contains(&k) {
                z.tanh()
            } else {
                sigmoid(*z)
            };
        }
        let (i, rest) = gates.split_at(hdim);
        let (f, rest) = rest.split_at(hdim);
        let (g, o) = rest.split_at(hdim);
        let c: Vec<f64> = (0..hdim).map(|k| f[k] * state.c[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h: Vec<f64> = (0..hdim).map(|k| o[k] * tanh_c[k]).collect();
        Ok((
            LstmState { h, c },
            LstmCache {
                xh,
                c_prev: state.c.clone(),
                gates,
                tanh_c,
            },
        ))
    }

    /// Given gradients on the new `(h, c)`, accumulates parameter gradients
    /// and returns gradients on the input and on the previous `(h, c)`.
    pub fn backward(
        &self,
        params: &ModelParams,
        grads: &mut Gradients,
        cache: &LstmCache,
        dh: &[f64],
        dc: &[f64],
    ) -> (Vec<f64>, LstmState) {
        let hdim = self.hidden;
        let g = &cache.gates;
        let mut dz = vec![0.0; 4 * hdim];
        let mut dc_prev = vec![0.0; hdim];
        for k in 0..hdim {
            let (i, f, cand, o) = (g[k], g[hdim + k], g[2 * hdim + k], g[3 * hdim + k]);
            let tc = cache.tanh_c[k];
            let dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
            dz[k] = dct * cand * i * (1.0 - i);
            dz[hdim + k] = dct * cache.c_prev[k] * f * (1.0 - f);
            dz[2 * hdim + k] = dct * i * (1.0 - cand * cand);
            dz[3 * hdim + k] = dh[k] * tc * o * (1.0 - o);
            dc_prev[k] = dct * f;
        }
        let cols = self.input + hdim;
        outer_acc(grads.get_mut(self.w).data_mut(), cols, &dz, &cache.xh);
        add_into(grads.get_mut(self.b).data_mut(), &dz);
        let mut dxh = vec![0.0; cols];
        matvec_t_acc(params.get(self.w).data(), cols, &dz, &mut dxh);
        let dh_prev = dxh.split_off(self.input);
        (dxh, LstmState { h: dh_prev, c: dc_prev })
    }
}

/// Additive attention: `e_j = v · tanh(W_s s + W_h h_j + b)`, weights are
/// `softmax(e)`, context is `Σ_j α_j h_j`.
#[derive(Clone, Copy, Debug)]
pub struct Attention {
    pub ws: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub v: ParamId,
    pub query: usize,
    pub key: usize,
    pub hidden: usize,
}

/// Encoder states with their projections `W_h h_j` precomputed.
#[derive(Clone, Debug)]
pub struct AttentionMemory {
    pub states: Vec<Vec<f64>>,
    keys: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct AttentionCache {
    query: Vec<f64>,
    hidden_act: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl Attention {
    pub fn new(
        params: &mut ModelParams,
        name: &str,
        query: usize,
        key: usize,
        hidden: usize,
        rng: &mut NlgRng,
    ) -> Result<Self> {
        Ok(Attention {
            ws: params.add_uniform(format!("{name}.ws"), &[hidden, query], rng)?,
            wh: params.add_uniform(format!("{name}.wh"), &[hidden, key], rng)?,
            b: params.add_zeros(format!("{name}.b"), &[hidden])?,
            v: params.add_uniform(format!("{name}.v"), &[hidden], rng)?,
            query,
            key,
            hidden,
        })
    }

    pub fn memory(&self, params: &ModelParams, states: Vec<Vec<f64>>) -> Result<AttentionMemory> {
        if states.is_empty() {
            return Err(Error::Shape("attention over no encoder states".into()));
        }
        if let Some(s) = states.iter().find(|s| s.len() != self.key) {
            return Err(Error::Shape(format!("encoder state {} != {}", s.len(), self.key)));
        }
        let wh = params.get(self.wh).data();
        let keys = states.iter().map(|s| matvec(wh, self.key, s)).collect();
        Ok(AttentionMemory { states, keys })
    }

    /// Returns the context vector and the cache holding the weights.
    pub fn forward(&self, params: &ModelParams, query: &[f64], memory: &AttentionMemory) -> Result<(Vec<f64>, AttentionCache)> {
        if query.len() != self.query {
            return Err(Error::Shape(format!("attention query {} != {}", query.len(), self.query)));
        }
        let mut base = params.get(self.b).data().to_vec();
        matvec_acc(params.get(self.ws).data(), self.query, query, &mut base);
        let v = params.get(self.v).data();
        let mut hidden_act = Vec::with_capacity(memory.keys.len());
        let mut scores = Vec::with_capacity(memory.keys.len());
        for key in &memory.keys {
            let t: Vec<f64> = base.iter().zip(key).map(|(a, k)| (a + k).tanh()).collect();
            scores.push(t.iter().zip(v).map(|(a, b)| a * b).sum());
            hidden_act.push(t);
        }
        let weights = softmax(&scores);
        let mut ctx = vec![0.0; self.key];
        for (w, s) in weights.iter().zip(&memory.states) {
            for (c, x) in ctx.iter_mut().zip(s) {
                *c += w * x;
            }
        }
        Ok((
            ctx,
            AttentionCache {
                query: query.to_vec(),
                hidden_act,
                weights,
            },
        ))
    }

    /// Accumulates parameter gradients, adds gradients on encoder states to
    /// `d_states`, and returns the gradient on the query.
    pub fn backward(
        &self,
        params: &ModelParams,
        grads: &mut Gradients,
        memory: &AttentionMemory,
        cache: &AttentionCache,
        dctx: &[f64],
        d_states: &mut [Vec<f64>],
    ) -> Vec<f64> {
        let alpha = &cache.weights;
        let dalpha: Vec<f64> = memory
            .states
            .iter()
            .map(|s| s.iter().zip(dctx).map(|(a, b)| a * b).sum())
            .collect();
        for (j, ds) in d_states.iter_mut().enumerate() {
            for (d, g) in ds.iter_mut().zip(dctx) {
                *d += alpha[j] * g;
            }
        }
        let dot: f64 = alpha.iter().zip(&dalpha).map(|(a, b)| a * b).sum();
        let v = params.get(self.v).data().to_vec();
        let mut du_sum = vec![0.0; self.hidden];
        let mut dv = vec![0.0; self.hidden];
        let wh = params.get(self.wh).data().to_vec();
        for j in 0..alpha.len() {
            let de = alpha[j] * (dalpha[j] - dot);
            let t = &cache.hidden_act[j];
            let du: Vec<f64> = (0..self.hidden).map(|k| de * v[k] * (1.0 - t[k] * t[k])).collect();
            for k in 0..self.hidden {
                dv[k] += de * t[k];
            }
            add_into(&mut du_sum, &du);
            outer_acc(grads.get_mut(self.wh).data_mut(), self.key, &du, &memory.states[j]);
            matvec_t_acc(&wh, self.key, &du, &mut d_states[j]);
        }
        add_into(grads.get_mut(self.v).data_mut(), &dv);
        add_into(grads.get_mut(self.b).data_mut(), &du_sum);
        outer_acc(grads.get_mut(self.ws).data_mut(), self.query, &du_sum, &cache.query);
        let mut dq = vec![0.0; self.query];
        matvec_t_acc(params.get(self.ws).data(), self.query, &du_sum, &mut dq);
        dq
    }

    pub fn weights(&self, params: &ModelParams, query: &[f64], states: &[Vec<f64>]) -> Result<Vec<f64>> {
        let memory = self.memory(params, states.to_vec())?;
        Ok(self.forward(params, query, &memory)?.1.weights)
    }
}

// ---------------------------------------------------------------------------
// optimizer

#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ModelParams, lr: f64) -> AdamState {
        let zeros: Vec<Tensor> = params.tensors.iter().map(|t| Tensor::zeros(&t.shape)).collect();
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &Gradients) -> Result<()> {
        if grads.tensors.len() != params.tensors.len() || self.m.len() != params.tensors.len() {
            return Err(Error::Shape("optimizer and parameter sets differ".into()));
        }
        for ((p, g), name) in params.tensors.iter().zip(&grads.tensors).zip(&params.names) {
            if p.shape != g.shape {
                return Err(Error::Shape(format!("gradient shape for `{name}`")));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of `{name}`")));
            }
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for k in 0..p.data.len() {
                let gk = g.data[k];
                m.data[k] = self.beta1 * m.data[k] + (1.0 - self.beta1) * gk;
                v.data[k] = self.beta2 * v.data[k] + (1.0 - self.beta2) * gk * gk;
                let mhat = m.data[k] / c1;
                let vhat = v.data[k] / c2;
                p.data[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// checkpoints

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MNLGCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Writes parameters plus a UTF-8 metadata blob (usually JSON). All
/// integers and floats are little-endian:
///
/// ```text
/// magic "MNLGCKPT" | u32 version | u64 seed | u32 tensor count
/// per tensor: u32 name length | name bytes | u32 rank | u64 dims... | f64 values...
/// u64 metadata length | metadata bytes
/// ```
pub fn write_checkpoint<W: Write>(mut w: W, params: &ModelParams, metadata: &str) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&params.seed.to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, t) in params.names.iter().zip(&params.tensors) {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for &d in &t.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.data.len() * 8);
        for x in &t.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.write_all(&(metadata.len() as u64).to_le_bytes())?;
    w.write_all(metadata.as_bytes())?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

fn read_string<R: Read>(r: &mut R, len: usize) -> Result<String> {
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
    String::from_utf8(buf).map_err(|_| Error::Checkpoint("name is not UTF-8".into()))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(ModelParams, String)> {
    let magic: [u8; 8] = read_array(&mut r)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let mut params = ModelParams::new(read_u64(&mut r)?);
    let count = read_u32(&mut r)?;
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let name = read_string(&mut r, name_len)?;
        let rank = read_u32(&mut r)? as usize;
        let shape = (0..rank)
            .map(|_| read_u64(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let mut bytes = vec![0u8; n * 8];
        r.read_exact(&mut bytes)
            .map_err(|e| Error::Checkpoint(format!("truncated tensor `{name}`: {e}")))?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params
            .add(name, Tensor::from_vec(&shape, data)?)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
    }
    let meta_len = read_u64(&mut r)? as usize;
    let metadata = read_string(&mut r, meta_len)?;
    Ok((params, metadata))
}

// ---------------------------------------------------------------------------
// gradient checking

/// Denominator floor of [`relative_error`], so gradients that are zero up
/// to round-off do not blow the ratio up.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADCHECK_FLOOR)
}

/// Central differences `(f(x+ε) - f(x-ε)) / 2ε` for every coordinate.
pub fn numeric_gradient(x: &mut [f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let orig = x[k];
            x[k] = orig + eps;
            let plus = f(x);
            x[k] = orig - eps;
            let minus = f(x);
            x[k] = orig;
            (plus - minus) / (2.0 * eps)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckResult {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
}

impl GradcheckResult {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Compares analytic parameter gradients against central differences of
/// `loss` for every parameter value.
pub fn gradcheck_params(
    name: &str,
    params: &mut ModelParams,
    eps: f64,
    mut loss: impl FnMut(&ModelParams) -> f64,
    analytic: &Gradients,
) -> GradcheckResult {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for id in params.ids().collect::<Vec<_>>() {
        for k in 0..params.get(id).len() {
            let orig = params.get(id).data()[k];
            params.get_mut(id).data_mut()[k] = orig + eps;
            let plus = loss(params);
            params.get_mut(id).data_mut()[k] = orig - eps;
            let minus = loss(params);
            params.get_mut(id).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(analytic.get(id).data()[k], numeric));
            checked += 1;
        }
    }
    GradcheckResult {
        name: name.to_owned(),
        max_rel_error: worst,
        checked,
    }
}

fn random_vec(n: usize, rng: &mut NlgRng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn merge_input_check(result: &mut GradcheckResult, analytic: &[f64], numeric: &[f64]) {
    for (a, n) in analytic.iter().zip(numeric) {
        result.max_rel_error = result.max_rel_error.max(relative_error(*a, *n));
        result.checked += 1;
    }
}

/// Finite-difference checks of every layer on `instances` random small
/// problems each; loss is a random linear projection of the layer output.
pub fn layer_gradchecks(seed: u64, instances: usize, eps: f64) -> Result<Vec<GradcheckResult>> {
    use rand::SeedableRng;
    let mut rng = NlgRng::seed_from_u64(seed);
    let mut results = Vec::new();
    for inst in 0..instances {
        // LSTM cell, 4 hidden units; loss on both h' and c'
        {
            let mut params = ModelParams::new(seed);
            let cell = LstmCell::new(&mut params, "lstm", 3, 4, &mut rng)?;
            scale_params(&mut params, 5.0);
            let x = random_vec(3, &mut rng);
            let state = LstmState {
                h: random_vec(4, &mut rng),
                c: random_vec(4, &mut rng),
            };
            let (ph, pc) = (random_vec(4, &mut rng), random_vec(4, &mut rng));
            let loss = |p: &ModelParams, x: &[f64], s: &LstmState| {
                let (out, _) = cell.step(p, x, s).unwrap();
                dotp(&out.h, &ph) + dotp(&out.c, &pc)
            };
            let (_, cache) = cell.step(&params, &x, &state)?;
            let mut grads = Gradients::zeros_like(&params);
            let (dx, dprev) = cell.backward(&params, &mut grads, &cache, &ph, &pc);
            let mut res = gradcheck_params(&format!("lstm_step#{inst}"), &mut params, eps, |p| loss(p, &x, &state), &grads);
            let nx = numeric_gradient(&mut x.clone(), eps, |xx| loss(&params, xx, &state));
            merge_input_check(&mut res, &dx, &nx);
            let nh = numeric_gradient(&mut state.h.clone(), eps, |hh| {
                loss(&params, &x, &LstmState { h: hh.to_vec(), c: state.c.clone() })
            });
            merge_input_check(&mut res, &dprev.h, &nh);
            let nc = numeric_gradient(&mut state.c.clone(), eps, |cc| {
                loss(&params, &x, &LstmState { h: state.h.clone(), c: cc.to_vec() })
            });
            merge_input_check(&mut res, &dprev.c, &nc);
            results.push(res);
        }
        // attention over 3 encoder states
        {
            let mut params = ModelParams::new(seed);
            let att = Attention::new(&mut params, "att", 4, 5, 3, &mut rng)?;
            scale_params(&mut params, 5.0);
            let query = random_vec(4, &mut rng);
            let states: Vec<Vec<f64>> = (0..3).map(|_| random_vec(5, &mut rng)).collect();
            let proj = random_vec(5, &mut rng);
            let loss = |p: &ModelParams, q: &[f64], st: &[Vec<f64>]| {
                let mem = att.memory(p, st.to_vec()).unwrap();
                dotp(&att.forward(p, q, &mem).unwrap().0, &proj)
            };
            let mem = att.memory(&params, states.clone())?;
            let (_, cache) = att.forward(&params, &query, &mem)?;
            let mut grads = Gradients::zeros_like(&params);
            let mut dstates = vec![vec![0.0; 5]; 3];
            let dq = att.backward(&params, &mut grads, &mem, &cache, &proj, &mut dstates);
            let mut res = gradcheck_params(&format!("attention#{inst}"), &mut params, eps, |p| loss(p, &query, &states), &grads);
            let nq = numeric_gradient(&mut query.clone(), eps, |q| loss(&params, q, &states));
            merge_input_check(&mut res, &dq, &nq);
            for j in 0..3 {
                let ns = numeric_gradient(&mut states[j].clone(), eps, |s| {
                    let mut st = states.clone();
                    st[j] = s.to_vec();
                    loss(&params, &query, &st)
                });
                merge_input_check(&mut res, &dstates[j], &ns);
            }
            results.push(res);
        }
        // linear layer and embedding lookup feeding softmax cross-entropy
        {
            let mut params = ModelParams::new(seed);
            let emb = Embedding::new(&mut params, "emb", 5, 3, &mut rng)?;
            let lin = Linear::new(&mut params, "out", 3, 6, &mut rng)?;
            scale_params(&mut params, 5.0);
            let (tok, target) = (rng.gen_range(0..5), rng.gen_range(0..6));
            let loss = |p: &ModelParams| {
                let h = emb.forward(p, tok).to_vec();
                softmax_xent(&lin.forward(p, &h).unwrap(), target).unwrap().0
            };
            let h = emb.forward(&params, tok).to_vec();
            let logits = lin.forward(&params, &h)?;
            let (_, dlogits) = softmax_xent(&logits, target)?;
            let mut grads = Gradients::zeros_like(&params);
            let dh = lin.backward(&params, &mut grads, &h, &dlogits);
            emb.backward(&mut grads, tok, &dh);
            results.push(gradcheck_params(&format!("softmax_xent#{inst}"), &mut params, eps, loss, &grads));
        }
        // sigmoid cross-entropy on raw logits
        {
            let logits = random_vec(4, &mut rng).iter().map(|x| 4.0 * x).collect::<Vec<_>>();
            let targets: Vec<f64> = (0..4).map(|_| f64::from(rng.gen_range(0..2u8))).collect();
            let analytic: Vec<f64> = logits.iter().zip(&targets).map(|(&l, &t)| sigmoid_xent(l, t).1).collect();
            let numeric = numeric_gradient(&mut logits.clone(), eps, |ls| {
                ls.iter().zip(&targets).map(|(&l, &t)| sigmoid_xent(l, t).0).sum()
            });
            let mut res = GradcheckResult {
                name: format!("sigmoid_xent#{inst}"),
                max_rel_error: 0.0,
                checked: 0,
            };
            merge_input_check(&mut res, &analytic, &numeric);
            results.push(res);
        }
    }
    Ok(results)
}

/// Multiplies all values; random checks use larger weights than the
/// initializer so nonlinearities are exercised away from zero.
fn scale_params(params: &mut ModelParams, factor: f64) {
    for id in params.ids().collect::<Vec<_>>() {
        params.get_mut(id).data_mut().iter_mut().for_each(|x| *x *= factor);
    }
}

pub fn dotp(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> NlgRng {
        NlgRng::seed_from_u64(seed)
    }

    #[test]
    fn zero_lstm_gives_zero_state() {
        let mut params = ModelParams::new(0);
        let cell = LstmCell::new(&mut params, "c", 3, 2, &mut rng(1)).unwrap();
        params.get_mut(cell.w).fill(0.0);
        params.get_mut(cell.b).fill(0.0);
        let (out, _) = cell.step(&params, &[0.3, -2.0, 7.0], &LstmState::zeros(2)).unwrap();
        assert_eq!(out, LstmState::zeros(2));
        assert!(matches!(
            cell.step(&params, &[1.0], &LstmState::zeros(2)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn scalar_lstm_matches_hand_formula() {
        let mut params = ModelParams::new(0);
        let cell = LstmCell::new(&mut params, "c", 1, 1, &mut rng(1)).unwrap();
        // rows i, f, g, o over [x, h]
        let w = [0.5, -0.3, 0.8, 0.1, -0.6, 0.9, 0.2, 0.4];
        let b = [0.1, 1.0, -0.2, 0.05];
        params.get_mut(cell.w).data_mut().copy_from_slice(&w);
        params.get_mut(cell.b).data_mut().copy_from_slice(&b);
        let (x, h, c) = (0.7, -0.4, 0.25);
        let s = |z: f64| 1.0 / (1.0 + (-z).exp());
        let i = s(w[0] * x + w[1] * h + b[0]);
        let f = s(w[2] * x + w[3] * h + b[1]);
        let g = (w[4] * x + w[5] * h + b[2]).tanh();
        let o = s(w[6] * x + w[7] * h + b[3]);
        let c2 = f * c + i * g;
        let h2 = o * c2.tanh();
        let (out, _) = cell.step(&params, &[x], &LstmState { h: vec![h], c: vec![c] }).unwrap();
        assert_abs_diff_eq!(out.c[0], c2, epsilon = 1e-12);
        assert_abs_diff_eq!(out.h[0], h2, epsilon = 1e-12);
    }

    #[test]
    fn forget_bias_initialized_to_one() {
        let mut params = ModelParams::new(0);
        let cell = LstmCell::new(&mut params, "c", 2, 3, &mut rng(1)).unwrap();
        assert_eq!(params.get(cell.b).data(), &[0., 0., 0., 1., 1., 1., 0., 0., 0., 0., 0., 0.]);
        assert!(params.get(cell.w).data().iter().all(|x| x.abs() < INIT_SCALE));
    }

    #[test]
    fn attention_symmetry_and_single_state() {
        let mut params = ModelParams::new(0);
        let att = Attention::new(&mut params, "a", 3, 2, 4, &mut rng(3)).unwrap();
        let w = att.weights(&params, &[0.1, 0.2, 0.3], &vec![vec![0.5, -1.0]; 4]).unwrap();
        for x in &w {
            assert_abs_diff_eq!(*x, 0.25, epsilon = 1e-15);
        }
        assert_eq!(att.weights(&params, &[0.1, 0.2, 0.3], &[vec![0.5, -1.0]]).unwrap(), vec![1.0]);
        assert!(att.weights(&params, &[0.1, 0.2, 0.3], &[]).is_err());
        assert!(att.weights(&params, &[0.1], &[vec![0.5, -1.0]]).is_err());
    }

    #[test]
    fn dropout_contract() {
        let mut r = rng(5);
        let x = Tensor::from_vec(&[4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(dropout(&x, 0.0, true, &mut r).unwrap(), x);
        assert_eq!(dropout(&x, 0.5, false, &mut r).unwrap(), x);
        assert!(dropout(&x, 1.0, true, &mut r).is_err());
        assert!(dropout(&x, -0.1, true, &mut r).is_err());
        let big = Tensor::from_vec(&[1_000_000], vec![1.0; 1_000_000]).unwrap();
        let out = dropout(&big, 0.5, true, &mut r).unwrap();
        let zeros = out.data().iter().filter(|&&v| v == 0.0).count() as f64 / 1e6;
        assert!((zeros - 0.5).abs() < 0.01);
        assert!(out.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn softmax_xent_examples() {
        let (loss, grad) = softmax_xent(&[0.0, 0.0], 0).unwrap();
        assert_abs_diff_eq!(loss, std::f64::consts::LN_2, epsilon = 1e-15);
        assert_eq!(grad, vec![-0.5, 0.5]);
        let (loss, grad) = softmax_xent(&[1000.0, 0.0], 0).unwrap();
        assert!(loss.abs() < 1e-300 && grad.iter().all(|g| g.is_finite()));
        assert!(softmax_xent(&[0.0], 1).is_err());
        assert!(softmax_xent(&[f64::NAN], 0).is_err());
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        let mut params = ModelParams::new(0);
        let id = params.add("x", Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        let mut grads = Gradients::zeros_like(&params);
        grads.get_mut(id).data_mut().copy_from_slice(&[0.3, -7.0, 0.05]);
        let mut adam = AdamState::new(&params, 0.005);
        adam.step(&mut params, &grads).unwrap();
        let want = [1.0 - 0.005, 2.0 + 0.005, 3.0 - 0.005];
        for (p, w) in params.get(id).data().iter().zip(want) {
            assert!((p - w).abs() < 0.005 * 1e-6, "{p} vs {w}");
        }
    }

    #[test]
    fn adam_zero_gradient_and_nonfinite() {
        let mut params = ModelParams::new(0);
        let id = params.add("x", Tensor::from_vec(&[2], vec![1.5, -2.5]).unwrap()).unwrap();
        let before = params.clone();
        let mut grads = Gradients::zeros_like(&params);
        let mut adam = AdamState::new(&params, 0.1);
        for _ in 0..100 {
            adam.step(&mut params, &grads).unwrap();
        }
        assert_eq!(params, before);
        grads.get_mut(id).data_mut()[0] = f64::INFINITY;
        assert!(matches!(adam.step(&mut params, &grads), Err(Error::NonFinite(_))));
    }

    #[test]
    fn adam_minimizes_square() {
        let mut params = ModelParams::new(0);
        let id = params.add("x", Tensor::from_vec(&[1], vec![0.8]).unwrap()).unwrap();
        let mut adam = AdamState::new(&params, 0.005);
        let mut grads = Gradients::zeros_like(&params);
        // direct simulation of the update rule
        let (mut x, mut m, mut v) = (0.8f64, 0.0f64, 0.0f64);
        for t in 1..=100 {
            let g = 2.0 * params.get(id).data()[0];
            grads.get_mut(id).data_mut()[0] = g;
            adam.step(&mut params, &grads).unwrap();
            let gs = 2.0 * x;
            m = 0.9 * m + (1.0 - 0.9) * gs;
            v = 0.999 * v + (1.0 - 0.999) * gs * gs;
            x -= 0.005 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
        }
        assert_eq!(params.get(id).data()[0], x);
        assert!(x.abs() < 0.8);
    }

    #[test]
    fn clipping_scales_to_max_norm() {
        let mut params = ModelParams::new(0);
        let id = params.add_zeros("x", &[2]).unwrap();
        let mut grads = Gradients::zeros_like(&params);
        grads.get_mut(id).data_mut().copy_from_slice(&[30.0, 40.0]);
        assert_eq!(grads.clip_global_norm(5.0), 50.0);
        assert_abs_diff_eq!(grads.global_norm(), 5.0, epsilon = 1e-12);
        assert_eq!(grads.clip_global_norm(5.0), grads.global_norm());
    }

    #[test]
    fn layer_gradients_match_finite_differences() {
        let results = layer_gradchecks(11, 5, 1e-5).unwrap();
        assert_eq!(results.len(), 20);
        for r in results {
            assert!(r.passed(1e-4), "{r:?}");
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_identical() {
        let mut r = rng(9);
        let mut params = ModelParams::new(1234);
        let cell = LstmCell::new(&mut params, "enc.fwd", 3, 4, &mut r).unwrap();
        params.add("scalar", Tensor::from_vec(&[], vec![-0.0]).unwrap()).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &params, "{\"k\":1}").unwrap();
        let (back, meta) = read_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(meta, "{\"k\":1}");
        assert_eq!(back.seed, 1234);
        let (a, _) = cell.step(&params, &[0.1, 0.2, 0.3], &LstmState::zeros(4)).unwrap();
        let (b, _) = cell.step(&back, &[0.1, 0.2, 0.3], &LstmState::zeros(4)).unwrap();
        assert_eq!(a, b);
        let bits = |p: &ModelParams| -> Vec<u64> {
            p.ids().flat_map(|id| p.get(id).data().iter().map(|x| x.to_bits()).collect::<Vec<_>>()).collect()
        };
        assert_eq!(bits(&params), bits(&back));

        assert!(read_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        let mut wrong = bytes.clone();
        wrong[8] = 99;
        assert!(matches!(read_checkpoint(wrong.as_slice()), Err(Error::Checkpoint(_))));
        assert!(read_checkpoint(&b"NOTACKPT"[..]).is_err());
    }

    #[test]
    fn param_names_unique() {
        let mut params = ModelParams::new(0);
        params.add_zeros("a", &[1]).unwrap();
        assert!(params.add_zeros("a", &[2]).is_err());
        assert!(params.add("b", Tensor::from_vec(&[1], vec![f64::NAN]).unwrap()).is_err());
        assert!(Tensor::from_vec(&[2, 2], vec![0.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn attention_weights_form_distribution(
            seed in 0u64..1000,
            n in 1usize..8,
        ) {
            let mut r = rng(seed);
            let mut params = ModelParams::new(seed);
            let att = Attention::new(&mut params, "a", 3, 2, 4, &mut r).unwrap();
            let states: Vec<Vec<f64>> = (0..n).map(|_| random_vec(2, &mut r)).collect();
            let w = att.weights(&params, &random_vec(3, &mut r), &states).unwrap();
            prop_assert!(w.iter().all(|&x| x >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
