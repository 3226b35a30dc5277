//! Attention-based sequence-to-sequence generator over DA triples, beam
//! search, the classification reranker, and the lemma-tag output mode.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::da::{da_to_triples, delexicalize_da, placeholder_slot, DelexPolicy, DialogueAct, Triple, TripleMode};
use crate::delex::Instance;
use crate::error::{Error, Result};
use crate::eval::{bleu, EvalPair};
use crate::morph::{FormLexicon, MorphDictionary, MorphTag};
use crate::neural::{
    add_into, dropout_mask, gradcheck_params, log_softmax, read_checkpoint, sigmoid, sigmoid_xent, softmax_xent,
    write_checkpoint, Attention, AttentionCache, AttentionMemory, AdamState, Embedding, GradcheckResult, Gradients,
    Linear, LstmCache, LstmCell, LstmState, ModelParams, NlgRng, ParamId,
};
use crate::ngram::{EOS, UNK};

// ---------------------------------------------------------------------------
// vocabulary

/// Token inventory with a fixed index order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// `specials` first, then tokens seen at least `min_freq` times, most
    /// frequent first (ties alphabetical).
    pub fn build<'a, I>(specials: &[&str], tokens: I, min_freq: usize) -> Vocab
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in tokens {
            *counts.entry(t).or_default() += 1;
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, n)| *n >= min_freq && !specials.contains(t))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens = specials
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(t, _)| t.to_owned()))
            .collect::<Vec<_>>();
        Vocab::from(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Index of `token`, or of `<unk>`; errors when neither exists.
    pub fn id_or_unk(&self, token: &str) -> Result<usize> {
        self.get(token)
            .or_else(|| self.get(UNK))
            .ok_or_else(|| Error::invalid(format!("token `{token}` not in vocabulary")))
    }
}

// ---------------------------------------------------------------------------
// configuration

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    WordForms,
    LemmaTag,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    Delexicalized,
    Lexicalized,
}

impl InputMode {
    pub fn triple_mode(self) -> TripleMode {
        match self {
            InputMode::Delexicalized => TripleMode::Delexicalized,
            InputMode::Lexicalized => TripleMode::Lexicalized,
        }
    }
}

/// When early stopping considers validation to have stalled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// No new member entered the set of the `top_k` best dev scores.
    TopSet,
    /// The best dev score did not improve.
    Max,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub mode: OutputMode,
    pub input_mode: InputMode,
    pub embedding: usize,
    pub cell: usize,
    pub lr: f64,
    pub dropout: f64,
    pub batch: usize,
    pub min_passes: usize,
    pub max_passes: usize,
    pub patience: usize,
    pub top_k: usize,
    pub stop_rule: StopRule,
    pub beam: usize,
    /// Maximum output tokens before the end marker is forced.
    pub max_len: usize,
    pub min_freq: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            mode: OutputMode::WordForms,
            input_mode: InputMode::Delexicalized,
            embedding: 200,
            cell: 200,
            lr: 0.005,
            dropout: 0.5,
            batch: 20,
            min_passes: 50,
            max_passes: 1000,
            patience: 50,
            top_k: 10,
            stop_rule: StopRule::TopSet,
            beam: 20,
            max_len: 80,
            min_freq: 2,
            clip_norm: crate::neural::DEFAULT_CLIP_NORM,
            seed: 1,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("embedding", self.embedding),
            ("cell", self.cell),
            ("batch", self.batch),
            ("max_passes", self.max_passes),
            ("top_k", self.top_k),
            ("beam", self.beam),
            ("max_len", self.max_len),
            ("min_freq", self.min_freq),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("generator config: {name} must be positive")));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("generator config: bad learning rate"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("generator config: dropout must be in [0, 1)"));
        }
        if self.min_passes > self.max_passes {
            return Err(Error::invalid("generator config: min_passes > max_passes"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::invalid("generator config: clip_norm must be positive"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// shared pieces

/// Inverted-dropout masks drawn from an RNG; all ones when disabled.
struct Dropout<'a> {
    rate: f64,
    rng: Option<&'a mut NlgRng>,
}

impl Dropout<'_> {
    fn off() -> Dropout<'static> {
        Dropout { rate: 0.0, rng: None }
    }

    fn mask(&mut self, len: usize) -> Result<Vec<f64>> {
        match &mut self.rng {
            Some(rng) if self.rate > 0.0 => dropout_mask(len, self.rate, true, rng),
            _ => Ok(vec![1.0; len]),
        }
    }
}

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn concat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// A forward and a backward LSTM over the same inputs.
#[derive(Clone, Copy, Debug)]
struct BiLstm {
    fwd: LstmCell,
    bwd: LstmCell,
}

struct BiRun {
    hf: Vec<Vec<f64>>,
    hb: Vec<Vec<f64>>,
    fc: Vec<LstmCache>,
    bc: Vec<LstmCache>,
    last_f: LstmState,
    first_b: LstmState,
}

impl BiLstm {
    fn new(params: &mut ModelParams, name: &str, input: usize, hidden: usize, rng: &mut NlgRng) -> Result<Self> {
        Ok(BiLstm {
            fwd: LstmCell::new(params, &format!("{name}.fwd"), input, hidden, rng)?,
            bwd: LstmCell::new(params, &format!("{name}.bwd"), input, hidden, rng)?,
        })
    }

    fn forward(&self, params: &ModelParams, xs: &[Vec<f64>]) -> Result<BiRun> {
        let hidden = self.fwd.hidden;
        let n = xs.len();
        let mut run = BiRun {
            hf: Vec::with_capacity(n),
            hb: vec![Vec::new(); n],
            fc: Vec::with_capacity(n),
            bc: Vec::with_capacity(n),
            last_f: LstmState::zeros(hidden),
            first_b: LstmState::zeros(hidden),
        };
        let mut s = LstmState::zeros(hidden);
        for x in xs {
            let (next, cache) = self.fwd.step(params, x, &s)?;
            run.hf.push(next.h.clone());
            run.fc.push(cache);
            s = next;
        }
        run.last_f = s;
        let mut s = LstmState::zeros(hidden);
        let mut bc = Vec::with_capacity(n);
        for j in (0..n).rev() {
            let (next, cache) = self.bwd.step(params, &xs[j], &s)?;
            run.hb[j] = next.h.clone();
            bc.push(cache);
            s = next;
        }
        bc.reverse();
        run.bc = bc;
        run.first_b = s;
        Ok(run)
    }

    /// Gradients on the per-position hidden states (`dhf`, `dhb`) and on
    /// the final states of each direction; returns gradients on the inputs.
    fn backward(
        &self,
        params: &ModelParams,
        grads: &mut Gradients,
        run: &BiRun,
        dhf: &[Vec<f64>],
        dhb: &[Vec<f64>],
        d_last_f: &LstmState,
        d_first_b: &LstmState,
    ) -> Vec<Vec<f64>> {
        let n = run.fc.len();
        let hidden = self.fwd.hidden;
        let mut dxs = vec![Vec::new(); n];
        let mut carry = d_last_f.clone();
        for j in (0..n).rev() {
            let dh = add(&dhf[j], &carry.h);
            let (dx, prev) = self.fwd.backward(params, grads, &run.fc[j], &dh, &carry.c);
            dxs[j] = dx;
            carry = prev;
        }
        let mut carry = d_first_b.clone();
        for j in 0..n {
            let dh = add(&dhb[j], &carry.h);
            let (dx, prev) = self.bwd.backward(params, grads, &run.bc[j], &dh, &carry.c);
            add_into(&mut dxs[j], &dx);
            carry = prev;
        }
        debug_assert!(carry.h.len() == hidden);
        dxs
    }
}

fn save_model(path: &Path, params: &ModelParams, metadata: &serde_json::Value) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, params, &metadata.to_string())?;
    std::fs::write(path, buf)?;
    Ok(())
}

fn load_model(path: &Path, kind: &str) -> Result<(ModelParams, serde_json::Value)> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Checkpoint(format!("checkpoint not found: {}", path.display())),
        _ => Error::Io(e),
    })?;
    let (params, meta) = read_checkpoint(bytes.as_slice())?;
    let meta: serde_json::Value = serde_json::from_str(&meta)?;
    if meta.get("kind").and_then(|k| k.as_str()) != Some(kind) {
        return Err(Error::Checkpoint(format!("{} is not a {kind} checkpoint", path.display())));
    }
    Ok((params, meta))
}

fn meta_field<T: serde::de::DeserializeOwned>(meta: &serde_json::Value, field: &str) -> Result<T> {
    let v = meta
        .get(field)
        .ok_or_else(|| Error::Checkpoint(format!("metadata lacks `{field}`")))?;
    Ok(serde_json::from_value(v.clone())?)
}

// ---------------------------------------------------------------------------
// generator network

#[derive(Clone, Copy, Debug)]
struct GenNet {
    emb_in: Embedding,
    enc: BiLstm,
    att: Attention,
    emb_out: Embedding,
    go: ParamId,
    dec: LstmCell,
    out: Linear,
}

impl GenNet {
    fn build(params: &mut ModelParams, e: usize, h: usize, vin: usize, vout: usize, rng: &mut NlgRng) -> Result<Self> {
        Ok(GenNet {
            emb_in: Embedding::new(params, "enc.emb", vin, e, rng)?,
            enc: BiLstm::new(params, "enc", 3 * e, h, rng)?,
            att: Attention::new(params, "att", h, 2 * h, h, rng)?,
            emb_out: Embedding::new(params, "dec.emb", vout, e, rng)?,
            go: params.add_uniform("dec.go", &[e], rng)?,
            dec: LstmCell::new(params, "dec.lstm", e + 2 * h, h, rng)?,
            out: Linear::new(params, "dec.out", h, vout, rng)?,
        })
    }
}

/// Encoder output: attention memory and the decoder's initial state.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub memory: AttentionMemory,
    pub init: LstmState,
}

/// One output hypothesis; `tokens` ends with the end marker.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub tokens: Vec<String>,
    pub logprob: f64,
    pub penalty: usize,
}

impl Candidate {
    /// Tokens without the end marker.
    pub fn words(&self) -> &[String] {
        match self.tokens.last() {
            Some(t) if t == EOS => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }
}

/// Triple token ids `(type, slot, value)` per position.
pub type TripleIds = Vec<[usize; 3]>;

#[derive(Clone, Debug)]
pub struct Generator {
    pub config: GeneratorConfig,
    pub input_vocab: Vocab,
    /// Index 0 is the end marker.
    pub output_vocab: Vocab,
    pub params: ModelParams,
    net: GenNet,
}

struct EncCache {
    ids: TripleIds,
    masks: Vec<Vec<f64>>,
    run: BiRun,
}

struct StepCache {
    prev: Option<usize>,
    emb_mask: Vec<f64>,
    att: AttentionCache,
    lstm: LstmCache,
    out_in: Vec<f64>,
    out_mask: Vec<f64>,
    dlogits: Vec<f64>,
}

impl Generator {
    /// Freshly initialized model; parameters depend only on `config.seed`
    /// and the vocabulary sizes.
    pub fn new(config: GeneratorConfig, input_vocab: Vocab, output_vocab: Vocab) -> Result<Self> {
        config.validate()?;
        if output_vocab.get(EOS) != Some(0) {
            return Err(Error::invalid("output vocabulary must start with the end marker"));
        }
        if input_vocab.is_empty() {
            return Err(Error::invalid("empty input vocabulary"));
        }
        let mut rng = NlgRng::seed_from_u64(config.seed);
        let mut params = ModelParams::new(config.seed);
        let net = GenNet::build(
            &mut params,
            config.embedding,
            config.cell,
            input_vocab.len(),
            output_vocab.len(),
            &mut rng,
        )?;
        Ok(Generator {
            config,
            input_vocab,
            output_vocab,
            params,
            net,
        })
    }

    pub fn triples(&self, da: &DialogueAct, policy: &DelexPolicy) -> Vec<Triple> {
        da_to_triples(da, self.config.input_mode.triple_mode(), policy)
    }

    pub fn triple_ids(&self, triples: &[Triple]) -> Result<TripleIds> {
        triples
            .iter()
            .map(|t| {
                Ok([
                    self.input_vocab.id_or_unk(&t.da_type)?,
                    self.input_vocab.id_or_unk(&t.slot)?,
                    self.input_vocab.id_or_unk(&t.value)?,
                ])
            })
            .collect()
    }

    /// Output ids of `tokens` followed by the end marker.
    pub fn target_ids(&self, tokens: &[String]) -> Result<Vec<usize>> {
        let mut ids = tokens
            .iter()
            .map(|t| self.output_vocab.id_or_unk(t))
            .collect::<Result<Vec<_>>>()?;
        ids.push(0);
        Ok(ids)
    }

    fn encode_inner(&self, ids: &[[usize; 3]], drop: &mut Dropout) -> Result<(Encoded, EncCache)> {
        if ids.is_empty() {
            return Err(Error::invalid("empty encoder input"));
        }
        let e = self.net.emb_in;
        let mut xs = Vec::with_capacity(ids.len());
        let mut masks = Vec::with_capacity(ids.len());
        for t in ids {
            let x = concat(&[e.forward(&self.params, t[0]), e.forward(&self.params, t[1]), e.forward(&self.params, t[2])]);
            let m = drop.mask(x.len())?;
            xs.push(mul(&x, &m));
            masks.push(m);
        }
        let run = self.net.enc.forward(&self.params, &xs)?;
        let states: Vec<Vec<f64>> = run.hf.iter().zip(&run.hb).map(|(f, b)| concat(&[f, b])).collect();
        let init = LstmState {
            h: add(&run.last_f.h, &run.first_b.h),
            c: add(&run.last_f.c, &run.first_b.c),
        };
        let memory = self.net.att.memory(&self.params, states)?;
        Ok((
            Encoded { memory, init },
            EncCache {
                ids: ids.to_vec(),
                masks,
                run,
            },
        ))
    }

    /// Per-position joined forward/backward states and the decoder's
    /// initial state.
    pub fn encode(&self, ids: &[[usize; 3]]) -> Result<Encoded> {
        Ok(self.encode_inner(ids, &mut Dropout::off())?.0)
    }

    /// One decoder step from `state` after emitting `prev` (`None` at the
    /// start); returns the new state and output log-probabilities.
    pub fn decoder_step(&self, enc: &Encoded, state: &LstmState, prev: Option<usize>) -> Result<(LstmState, Vec<f64>)> {
        let (ctx, _) = self.net.att.forward(&self.params, &state.h, &enc.memory)?;
        let emb = match prev {
            Some(id) => self.net.emb_out.forward(&self.params, id),
            None => self.params.get(self.net.go).data(),
        };
        let x = concat(&[emb, &ctx]);
        let (next, _) = self.net.dec.step(&self.params, &x, state)?;
        let logits = self.net.out.forward(&self.params, &next.h)?;
        Ok((next, log_softmax(&logits)))
    }

    /// Summed token cross-entropy of `target` (ending with the end marker);
    /// accumulates gradients when `grads` is given.
    fn sequence_loss(
        &self,
        ids: &[[usize; 3]],
        target: &[usize],
        grads: Option<&mut Gradients>,
        drop: &mut Dropout,
    ) -> Result<f64> {
        let (enc, enc_cache) = self.encode_inner(ids, drop)?;
        let net = &self.net;
        let p = &self.params;
        let mut state = enc.init.clone();
        let mut steps = Vec::with_capacity(target.len());
        let mut loss = 0.0;
        for (k, &y) in target.iter().enumerate() {
            let prev = if k == 0 { None } else { Some(target[k - 1]) };
            let (ctx, att) = net.att.forward(p, &state.h, &enc.memory)?;
            let emb = match prev {
                Some(id) => net.emb_out.forward(p, id),
                None => p.get(net.go).data(),
            };
            let emb_mask = drop.mask(emb.len())?;
            let x = concat(&[&mul(emb, &emb_mask), &ctx]);
            let (next, lstm) = net.dec.step(p, &x, &state)?;
            let out_mask = drop.mask(next.h.len())?;
            let out_in = mul(&next.h, &out_mask);
            let logits = net.out.forward(p, &out_in)?;
            let (l, dlogits) = softmax_xent(&logits, y)?;
            loss += l;
            steps.push(StepCache {
                prev,
                emb_mask,
                att,
                lstm,
                out_in,
                out_mask,
                dlogits,
            });
            state = next;
        }
        let Some(grads) = grads else {
            return Ok(loss);
        };

        let h = self.config.cell;
        let e = self.config.embedding;
        let n = ids.len();
        let mut d_states = vec![vec![0.0; 2 * h]; n];
        let mut dh = vec![0.0; h];
        let mut dc = vec![0.0; h];
        for step in steps.iter().rev() {
            let dout = net.out.backward(p, grads, &step.out_in, &step.dlogits);
            let dh_total = add(&dh, &mul(&dout, &step.out_mask));
            let (dx, prev_state) = net.dec.backward(p, grads, &step.lstm, &dh_total, &dc);
            let de = mul(&dx[..e], &step.emb_mask);
            match step.prev {
                Some(id) => net.emb_out.backward(grads, id, &de),
                None => add_into(grads.get_mut(net.go).data_mut(), &de),
            }
            let dq = net.att.backward(p, grads, &enc.memory, &step.att, &dx[e..], &mut d_states);
            dh = add(&prev_state.h, &dq);
            dc = prev_state.c;
        }
        let dhf: Vec<Vec<f64>> = d_states.iter().map(|d| d[..h].to_vec()).collect();
        let dhb: Vec<Vec<f64>> = d_states.iter().map(|d| d[h..].to_vec()).collect();
        let d_init = LstmState { h: dh, c: dc };
        let dxs = net.enc.backward(p, grads, &enc_cache.run, &dhf, &dhb, &d_init, &d_init);
        for ((t, dx), m) in enc_cache.ids.iter().zip(&dxs).zip(&enc_cache.masks) {
            let dx = mul(dx, m);
            for (slot, id) in t.iter().enumerate() {
                net.emb_in.backward(grads, *id, &dx[slot * e..(slot + 1) * e]);
            }
        }
        Ok(loss)
    }

    /// Summed cross-entropy of `target` (without end marker) given the
    /// input; no dropout.
    pub fn loss(&self, ids: &[[usize; 3]], target: &[usize]) -> Result<f64> {
        self.sequence_loss(ids, target, None, &mut Dropout::off())
    }

    /// Log-probability of `words` followed by the end marker.
    pub fn sequence_logprob(&self, enc: &Encoded, words: &[usize]) -> Result<f64> {
        let mut state = enc.init.clone();
        let mut prev = None;
        let mut total = 0.0;
        for &w in words.iter().chain(std::iter::once(&0)) {
            let (next, lp) = self.decoder_step(enc, &state, prev)?;
            total += lp[w];
            state = next;
            prev = Some(w);
        }
        Ok(total)
    }

    /// Beam search; returns up to `beam` finished hypotheses (word ids
    /// without the end marker) sorted by log-probability. Hypotheses with
    /// `max_len` words are forced to end.
    pub fn beam_search(&self, enc: &Encoded, beam: usize, max_len: usize) -> Result<Vec<(Vec<usize>, f64)>> {
        struct Hyp {
            ids: Vec<usize>,
            logprob: f64,
            state: LstmState,
        }
        let beam = beam.max(1);
        let mut live = vec![Hyp {
            ids: Vec::new(),
            logprob: 0.0,
            state: enc.init.clone(),
        }];
        let mut finished: Vec<(Vec<usize>, f64)> = Vec::new();
        for t in 0..=max_len {
            if live.is_empty() || finished.len() >= beam {
                break;
            }
            let mut expansions: Vec<(f64, usize, usize)> = Vec::new();
            let mut states = Vec::with_capacity(live.len());
            for (hi, hyp) in live.iter().enumerate() {
                let (state, lp) = self.decoder_step(enc, &hyp.state, hyp.ids.last().copied())?;
                if t == max_len {
                    expansions.push((hyp.logprob + lp[0], hi, 0));
                } else {
                    expansions.extend(lp.iter().enumerate().map(|(w, l)| (hyp.logprob + l, hi, w)));
                }
                states.push(state);
            }
            // stable: ties keep hypothesis, then token order
            expansions.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
            expansions.truncate(beam);
            let mut next = Vec::with_capacity(expansions.len());
            for (lp, hi, w) in expansions {
                let mut ids = live[hi].ids.clone();
                if w == 0 {
                    finished.push((ids, lp));
                } else {
                    ids.push(w);
                    next.push(Hyp {
                        ids,
                        logprob: lp,
                        state: states[hi].clone(),
                    });
                }
            }
            live = next;
        }
        finished.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
        finished.truncate(beam);
        Ok(finished)
    }

    fn to_candidate(&self, ids: &[usize], logprob: f64) -> Candidate {
        let mut tokens: Vec<String> = ids.iter().map(|&i| self.output_vocab.token(i).to_owned()).collect();
        tokens.push(EOS.to_owned());
        Candidate {
            tokens,
            logprob,
            penalty: 0,
        }
    }

    pub fn beam_decode(&self, triples: &[Triple], beam: usize) -> Result<Vec<Candidate>> {
        let enc = self.encode(&self.triple_ids(triples)?)?;
        Ok(self
            .beam_search(&enc, beam, self.config.max_len)?
            .into_iter()
            .map(|(ids, lp)| self.to_candidate(&ids, lp))
            .collect())
    }

    /// Greedy decoding (beam 1); word tokens without the end marker.
    pub fn greedy(&self, triples: &[Triple]) -> Result<Vec<String>> {
        Ok(self
            .beam_decode(triples, 1)?
            .into_iter()
            .next()
            .map(|c| c.words().to_vec())
            .unwrap_or_default())
    }

    fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "generator",
            "config": self.config,
            "input_vocab": self.input_vocab,
            "output_vocab": self.output_vocab,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_model(path.as_ref(), &self.params, &self.metadata())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (params, meta) = load_model(path.as_ref(), "generator")?;
        let mut g = Generator::new(
            meta_field(&meta, "config")?,
            meta_field(&meta, "input_vocab")?,
            meta_field(&meta, "output_vocab")?,
        )?;
        g.params.copy_from(&params).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(g)
    }
}

// ---------------------------------------------------------------------------
// generator training

/// Training pair: encoder triples and target tokens (no end marker).
#[derive(Clone, Debug, PartialEq)]
pub struct TrainExample {
    pub triples: Vec<Triple>,
    pub target: Vec<String>,
}

/// Target tokens of an instance in the given output mode.
pub fn target_tokens(inst: &Instance, mode: OutputMode, lex: &FormLexicon) -> Result<Vec<String>> {
    match mode {
        OutputMode::WordForms => Ok(inst.delex_text.clone()),
        OutputMode::LemmaTag => Ok(interleave(&inst.lemmas, &inst.delex_tags(lex)?)?),
    }
}

pub fn training_examples(
    instances: &[Instance],
    config: &GeneratorConfig,
    lex: &FormLexicon,
    policy: &DelexPolicy,
) -> Result<Vec<TrainExample>> {
    instances
        .iter()
        .map(|inst| {
            Ok(TrainExample {
                triples: da_to_triples(&inst.da, config.input_mode.triple_mode(), policy),
                target: target_tokens(inst, config.mode, lex)?,
            })
        })
        .collect()
}

/// Examples with identical triples grouped, their targets as references.
pub fn group_references(examples: &[TrainExample]) -> Vec<(Vec<Triple>, Vec<Vec<String>>)> {
    let mut groups: Vec<(Vec<Triple>, Vec<Vec<String>>)> = Vec::new();
    let mut index: HashMap<Vec<(String, String, String)>, usize> = HashMap::new();
    for ex in examples {
        let key = ex
            .triples
            .iter()
            .map(|t| (t.da_type.clone(), t.slot.clone(), t.value.clone()))
            .collect();
        match index.get(&key) {
            Some(&i) => groups[i].1.push(ex.target.clone()),
            None => {
                index.insert(key, groups.len());
                groups.push((ex.triples.clone(), vec![ex.target.clone()]));
            }
        }
    }
    groups
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassRecord {
    pub pass: usize,
    /// Mean summed cross-entropy per training instance.
    pub train_loss: f64,
    pub dev_bleu: f64,
    /// Whether this pass's parameters became the retained best.
    pub kept: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<PassRecord>,
    pub best_pass: usize,
    pub best_dev_bleu: f64,
}

impl TrainingLog {
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("serializable") + "\n")
            .collect()
    }
}

/// Tracks the top-k validation scores and the pass at which the stopping
/// rule last saw progress.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    rule: StopRule,
    top_k: usize,
    min_passes: usize,
    patience: usize,
    top: Vec<f64>,
    last_change: usize,
}

impl EarlyStopping {
    pub fn new(config: &GeneratorConfig) -> Self {
        EarlyStopping {
            rule: config.stop_rule,
            top_k: config.top_k,
            min_passes: config.min_passes,
            patience: config.patience,
            top: Vec::new(),
            last_change: 0,
        }
    }

    /// Records the score of `pass`; returns whether training should stop.
    pub fn observe(&mut self, pass: usize, score: f64) -> bool {
        let is_new_max = self.top.first().map_or(true, |&m| score > m);
        let enters_top = !self.top.contains(&score)
            && (self.top.len() < self.top_k || self.top.last().map_or(true, |&m| score > m));
        if enters_top {
            self.top.push(score);
            self.top.sort_by(|a, b| b.partial_cmp(a).unwrap());
            self.top.truncate(self.top_k);
        }
        let progressed = match self.rule {
            StopRule::TopSet => enters_top,
            StopRule::Max => is_new_max,
        };
        if progressed {
            self.last_change = pass;
        }
        pass >= self.min_passes && pass - self.last_change >= self.patience
    }
}

fn corpus_bleu(g: &Generator, refs: &[(Vec<Triple>, Vec<Vec<String>>)]) -> Result<f64> {
    let pairs = refs
        .iter()
        .map(|(triples, r)| Ok(EvalPair::new(g.greedy(triples)?, r.clone())))
        .collect::<Result<Vec<_>>>()?;
    bleu(&pairs)
}

/// Trains with Adam on summed token cross-entropy. After every pass the
/// dev set (or the training set when `dev` is empty) is decoded greedily
/// and scored with BLEU; the best-scoring parameters are returned.
pub fn train_generator(
    config: &GeneratorConfig,
    train: &[TrainExample],
    dev: &[TrainExample],
) -> Result<(Generator, TrainingLog)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let input_vocab = Vocab::build(
        &[UNK],
        train
            .iter()
            .flat_map(|ex| ex.triples.iter())
            .flat_map(|t| [t.da_type.as_str(), t.slot.as_str(), t.value.as_str()]),
        config.min_freq,
    );
    let output_vocab = Vocab::build(
        &[EOS, UNK],
        train.iter().flat_map(|ex| ex.target.iter().map(String::as_str)),
        config.min_freq,
    );
    let mut gen = Generator::new(config.clone(), input_vocab, output_vocab)?;
    let data = train
        .iter()
        .map(|ex| Ok((gen.triple_ids(&ex.triples)?, gen.target_ids(&ex.target)?)))
        .collect::<Result<Vec<_>>>()?;
    let refs = group_references(if dev.is_empty() { train } else { dev });

    let mut rng = NlgRng::seed_from_u64(config.seed ^ 0x5eed);
    let mut adam = AdamState::new(&gen.params, config.lr);
    let mut grads = Gradients::zeros_like(&gen.params);
    let mut best = gen.params.clone();
    let mut log = TrainingLog {
        best_dev_bleu: f64::NEG_INFINITY,
        ..Default::default()
    };
    let mut stopping = EarlyStopping::new(config);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for pass in 1..=config.max_passes {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch) {
            grads.zero();
            for &i in batch {
                let (ids, target) = &data[i];
                let mut drop = Dropout {
                    rate: config.dropout,
                    rng: Some(&mut rng),
                };
                let l = gen.sequence_loss(ids, target, Some(&mut grads), &mut drop)?;
                if !l.is_finite() {
                    return Err(Error::NonFinite(format!("training loss at pass {pass}, instance {i}")));
                }
                total += l;
            }
            grads.scale(1.0 / batch.len() as f64);
            grads.clip_global_norm(config.clip_norm);
            adam.step(&mut gen.params, &grads)?;
        }
        let dev_bleu = corpus_bleu(&gen, &refs)?;
        let kept = dev_bleu > log.best_dev_bleu;
        if kept {
            best.copy_from(&gen.params)?;
            log.best_dev_bleu = dev_bleu;
            log.best_pass = pass;
        }
        log.records.push(PassRecord {
            pass,
            train_loss: total / data.len() as f64,
            dev_bleu,
            kept,
        });
        if stopping.observe(pass, dev_bleu) {
            break;
        }
    }
    gen.params.copy_from(&best)?;
    Ok((gen, log))
}

// ---------------------------------------------------------------------------
// reranker

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RerankerConfig {
    pub embedding: usize,
    pub cell: usize,
    pub lr: f64,
    pub batch: usize,
    pub passes: usize,
    /// First pass at which validation error is tracked.
    pub validate_from: usize,
    pub dev_weight: f64,
    pub min_freq: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for RerankerConfig {
    fn default() -> Self {
        RerankerConfig {
            embedding: 50,
            cell: 50,
            lr: 0.001,
            batch: 20,
            passes: 100,
            validate_from: 10,
            dev_weight: 10.0,
            min_freq: 1,
            clip_norm: crate::neural::DEFAULT_CLIP_NORM,
            seed: 1,
        }
    }
}

impl RerankerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding == 0 || self.cell == 0 || self.batch == 0 || self.passes == 0 || self.min_freq == 0 {
            return Err(Error::invalid("reranker config: sizes must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.dev_weight >= 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::invalid("reranker config: bad learning rate, weight or clip norm"));
        }
        Ok(())
    }
}

/// DA type indicators (`inform`) and item indicators (`inform(food=X-food)`)
/// of the delexicalized DA.
pub fn da_indicators(da: &DialogueAct, policy: &DelexPolicy) -> BTreeSet<String> {
    let (delex, _) = delexicalize_da(da, policy);
    let mut out = BTreeSet::new();
    for item in delex.items() {
        out.insert(item.da_type.clone());
        if item.slot.is_some() {
            let single = DialogueAct::new(vec![item.clone()]).expect("non-empty");
            out.insert(single.to_string());
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RerankMode {
    /// Penalty first, then log-probability.
    Lexicographic,
    /// `logprob − weight·penalty`.
    Linear { weight: f64 },
}

/// Stable sort by `(penalty asc, logprob desc)` or by the linear score.
pub fn sort_by_penalty(candidates: &mut [Candidate], mode: RerankMode) {
    match mode {
        RerankMode::Lexicographic => candidates.sort_by(|a, b| {
            a.penalty
                .cmp(&b.penalty)
                .then(b.logprob.partial_cmp(&a.logprob).unwrap_or(std::cmp::Ordering::Equal))
        }),
        RerankMode::Linear { weight } => candidates.sort_by(|a, b| {
            let sa = a.logprob - weight * a.penalty as f64;
            let sb = b.logprob - weight * b.penalty as f64;
            sb.partial_cmp(&sa).unwrap_or(std::cmp::Ordering::Equal)
        }),
    }
}

#[derive(Clone, Copy, Debug)]
struct RerankNet {
    emb: Embedding,
    enc: BiLstm,
    out: Linear,
}

/// Classifies a token sequence into the DA indicators it expresses.
#[derive(Clone, Debug)]
pub struct Reranker {
    pub config: RerankerConfig,
    pub vocab: Vocab,
    pub indicators: Vec<String>,
    pub params: ModelParams,
    net: RerankNet,
}

/// A training item: tokens and the indicators of their DA.
pub type RerankExample = (Vec<String>, BTreeSet<String>);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RerankRecord {
    pub pass: usize,
    pub train_loss: f64,
    pub train_error: f64,
    pub dev_error: f64,
    pub kept: bool,
}

impl Reranker {
    pub fn new(config: RerankerConfig, vocab: Vocab, indicators: Vec<String>) -> Result<Self> {
        config.validate()?;
        if indicators.is_empty() || vocab.is_empty() {
            return Err(Error::invalid("reranker needs a vocabulary and indicators"));
        }
        let mut rng = NlgRng::seed_from_u64(config.seed);
        let mut params = ModelParams::new(config.seed);
        let net = RerankNet {
            emb: Embedding::new(&mut params, "rr.emb", vocab.len(), config.embedding, &mut rng)?,
            enc: BiLstm::new(&mut params, "rr", config.embedding, config.cell, &mut rng)?,
            out: Linear::new(&mut params, "rr.out", 2 * config.cell, indicators.len(), &mut rng)?,
        };
        Ok(Reranker {
            config,
            vocab,
            indicators,
            params,
            net,
        })
    }

    fn ids(&self, tokens: &[String]) -> Result<Vec<usize>> {
        if tokens.is_empty() {
            return Err(Error::invalid("cannot classify an empty token sequence"));
        }
        tokens.iter().map(|t| self.vocab.id_or_unk(t)).collect()
    }

    fn forward(&self, ids: &[usize]) -> Result<(BiRun, Vec<f64>, Vec<f64>)> {
        let xs: Vec<Vec<f64>> = ids.iter().map(|&i| self.net.emb.forward(&self.params, i).to_vec()).collect();
        let run = self.net.enc.forward(&self.params, &xs)?;
        let feat = concat(&[&run.last_f.h, &run.first_b.h]);
        let logits = self.net.out.forward(&self.params, &feat)?;
        Ok((run, feat, logits))
    }

    /// Indicator probabilities in inventory order.
    pub fn probabilities(&self, tokens: &[String]) -> Result<Vec<f64>> {
        let (_, _, logits) = self.forward(&self.ids(tokens)?)?;
        Ok(logits.into_iter().map(sigmoid).collect())
    }

    /// Indicators with probability ≥ 0.5.
    pub fn classify(&self, tokens: &[String]) -> Result<BTreeSet<String>> {
        Ok(self
            .probabilities(tokens)?
            .into_iter()
            .zip(&self.indicators)
            .filter(|(p, _)| *p >= 0.5)
            .map(|(_, name)| name.clone())
            .collect())
    }

    /// Size of the symmetric difference between predicted and DA indicators;
    /// an empty candidate predicts nothing.
    pub fn penalty(&self, tokens: &[String], da: &DialogueAct, policy: &DelexPolicy) -> Result<usize> {
        let predicted = if tokens.is_empty() {
            BTreeSet::new()
        } else {
            self.classify(tokens)?
        };
        Ok(predicted.symmetric_difference(&da_indicators(da, policy)).count())
    }

    pub fn rerank(
        &self,
        mut candidates: Vec<Candidate>,
        da: &DialogueAct,
        policy: &DelexPolicy,
        mode: RerankMode,
    ) -> Result<Vec<Candidate>> {
        for c in &mut candidates {
            c.penalty = self.penalty(c.words(), da, policy)?;
        }
        sort_by_penalty(&mut candidates, mode);
        Ok(candidates)
    }

    fn loss(&self, ids: &[usize], gold: &[f64], grads: Option<&mut Gradients>) -> Result<f64> {
        let (run, feat, logits) = self.forward(ids)?;
        let mut loss = 0.0;
        let mut dlogits = Vec::with_capacity(logits.len());
        for (&l, &t) in logits.iter().zip(gold) {
            let (v, d) = sigmoid_xent(l, t);
            loss += v;
            dlogits.push(d);
        }
        if let Some(grads) = grads {
            let h = self.config.cell;
            let dfeat = self.net.out.backward(&self.params, grads, &feat, &dlogits);
            let zeros = vec![vec![0.0; h]; ids.len()];
            let d_last = LstmState {
                h: dfeat[..h].to_vec(),
                c: vec![0.0; h],
            };
            let d_first = LstmState {
                h: dfeat[h..].to_vec(),
                c: vec![0.0; h],
            };
            let dxs = self.net.enc.backward(&self.params, grads, &run, &zeros, &zeros, &d_last, &d_first);
            for (&i, dx) in ids.iter().zip(&dxs) {
                self.net.emb.backward(grads, i, dx);
            }
        }
        Ok(loss)
    }

    fn gold_vector(&self, gold: &BTreeSet<String>) -> Vec<f64> {
        self.indicators.iter().map(|i| f64::from(u8::from(gold.contains(i)))).collect()
    }

    /// Mean number of wrongly decided indicators per example.
    pub fn error(&self, data: &[RerankExample]) -> Result<f64> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let mut wrong = 0usize;
        for (tokens, gold) in data {
            let probs = self.probabilities(tokens)?;
            wrong += probs
                .iter()
                .zip(&self.indicators)
                .filter(|(p, name)| (**p >= 0.5) != gold.contains(*name))
                .count();
        }
        Ok(wrong as f64 / data.len() as f64)
    }

    fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "reranker",
            "config": self.config,
            "vocab": self.vocab,
            "indicators": self.indicators,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_model(path.as_ref(), &self.params, &self.metadata())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (params, meta) = load_model(path.as_ref(), "reranker")?;
        let mut r = Reranker::new(
            meta_field(&meta, "config")?,
            meta_field(&meta, "vocab")?,
            meta_field(&meta, "indicators")?,
        )?;
        r.params.copy_from(&params).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(r)
    }
}

/// Trains the reranker. From pass `validate_from` on, the parameters with
/// the lowest `train error + dev_weight · dev error` are kept.
pub fn train_reranker(
    config: &RerankerConfig,
    train: &[RerankExample],
    dev: &[RerankExample],
) -> Result<(Reranker, Vec<RerankRecord>)> {
    config.validate()?;
    let train: Vec<&RerankExample> = train.iter().filter(|(t, _)| !t.is_empty()).collect();
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let vocab = Vocab::build(
        &[UNK],
        train.iter().flat_map(|(t, _)| t.iter().map(String::as_str)),
        config.min_freq,
    );
    let indicators: Vec<String> = train
        .iter()
        .flat_map(|(_, g)| g.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut rr = Reranker::new(config.clone(), vocab, indicators)?;
    let data = train
        .iter()
        .map(|(t, g)| Ok((rr.ids(t)?, rr.gold_vector(g))))
        .collect::<Result<Vec<_>>>()?;
    let train_owned: Vec<RerankExample> = train.iter().map(|x| (*x).clone()).collect();
    let dev: Vec<RerankExample> = dev.iter().filter(|(t, _)| !t.is_empty()).cloned().collect();

    let mut rng = NlgRng::seed_from_u64(config.seed ^ 0x7e7a);
    let mut adam = AdamState::new(&rr.params, config.lr);
    let mut grads = Gradients::zeros_like(&rr.params);
    let mut best: Option<(f64, ModelParams)> = None;
    let mut log = Vec::with_capacity(config.passes);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for pass in 1..=config.passes {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch) {
            grads.zero();
            for &i in batch {
                let l = rr.loss(&data[i].0, &data[i].1, Some(&mut grads))?;
                if !l.is_finite() {
                    return Err(Error::NonFinite(format!("reranker loss at pass {pass}, instance {i}")));
                }
                total += l;
            }
            grads.scale(1.0 / batch.len() as f64);
            grads.clip_global_norm(config.clip_norm);
            adam.step(&mut rr.params, &grads)?;
        }
        let mut record = RerankRecord {
            pass,
            train_loss: total / data.len() as f64,
            train_error: f64::NAN,
            dev_error: f64::NAN,
            kept: false,
        };
        if pass >= config.validate_from {
            record.train_error = rr.error(&train_owned)?;
            record.dev_error = rr.error(&dev)?;
            let score = record.train_error + config.dev_weight * record.dev_error;
            if best.as_ref().map_or(true, |(b, _)| score < *b) {
                best = Some((score, rr.params.clone()));
                record.kept = true;
            }
        }
        log.push(record);
    }
    if let Some((_, params)) = best {
        rr.params.copy_from(&params)?;
    }
    Ok((rr, log))
}

// ---------------------------------------------------------------------------
// gradient checks of whole models

/// Finite-difference checks of the full generator loss (encoder, attention,
/// decoder steps, output layer) and of the reranker loss on small random
/// models.
pub fn model_gradchecks(seed: u64, instances: usize, eps: f64) -> Result<Vec<GradcheckResult>> {
    let mut rng = NlgRng::seed_from_u64(seed);
    let mut results = Vec::new();
    for inst in 0..instances {
        let config = GeneratorConfig {
            embedding: 3,
            cell: 4,
            dropout: 0.0,
            seed: seed.wrapping_add(inst as u64),
            ..Default::default()
        };
        let vin = Vocab::from((0..5).map(|i| format!("i{i}")).collect::<Vec<_>>());
        let vout = Vocab::from(
            std::iter::once(EOS.to_owned())
                .chain((1..6).map(|i| format!("o{i}")))
                .collect::<Vec<_>>(),
        );
        let mut g = Generator::new(config, vin, vout)?;
        for id in g.params.ids().collect::<Vec<_>>() {
            g.params.get_mut(id).data_mut().iter_mut().for_each(|x| *x *= 5.0);
        }
        let n = rng.gen_range(1..4);
        let ids: TripleIds = (0..n)
            .map(|_| [rng.gen_range(0..5), rng.gen_range(0..5), rng.gen_range(0..5)])
            .collect();
        let mut target: Vec<usize> = (0..rng.gen_range(1..4)).map(|_| rng.gen_range(1..6)).collect();
        target.push(0);
        let mut grads = Gradients::zeros_like(&g.params);
        g.sequence_loss(&ids, &target, Some(&mut grads), &mut Dropout::off())?;
        let mut params = g.params.clone();
        let probe = g.clone();
        let res = gradcheck_params(
            &format!("decoder_sequence#{inst}"),
            &mut params,
            eps,
            |p| {
                let mut m = probe.clone();
                m.params = p.clone();
                m.sequence_loss(&ids, &target, None, &mut Dropout::off()).unwrap()
            },
            &grads,
        );
        results.push(res);

        let rconfig = RerankerConfig {
            embedding: 3,
            cell: 4,
            seed: seed.wrapping_add(inst as u64),
            ..Default::default()
        };
        let vocab = Vocab::from((0..5).map(|i| format!("w{i}")).collect::<Vec<_>>());
        let mut rr = Reranker::new(rconfig, vocab, (0..3).map(|i| format!("ind{i}")).collect())?;
        for id in rr.params.ids().collect::<Vec<_>>() {
            rr.params.get_mut(id).data_mut().iter_mut().for_each(|x| *x *= 5.0);
        }
        let toks: Vec<usize> = (0..rng.gen_range(1..5)).map(|_| rng.gen_range(0..5)).collect();
        let gold: Vec<f64> = (0..3).map(|_| f64::from(rng.gen_range(0..2u8))).collect();
        let mut grads = Gradients::zeros_like(&rr.params);
        rr.loss(&toks, &gold, Some(&mut grads))?;
        let mut params = rr.params.clone();
        let probe = rr.clone();
        results.push(gradcheck_params(
            &format!("reranker#{inst}"),
            &mut params,
            eps,
            |p| {
                let mut m = probe.clone();
                m.params = p.clone();
                m.loss(&toks, &gold, None).unwrap()
            },
            &grads,
        ));
    }
    Ok(results)
}

// ---------------------------------------------------------------------------
// lemma-tag output

/// Tag tokens are exactly 15 ASCII characters without lowercase letters;
/// lemmas and placeholders always contain a lowercase letter or differ in
/// length.
pub fn is_tag_token(token: &str) -> bool {
    token.len() == crate::morph::TAG_LEN
        && token.bytes().all(|b| b.is_ascii_graphic() && !b.is_ascii_lowercase())
}

/// `l₁ t₁ l₂ t₂ …`
pub fn interleave(lemmas: &[String], tags: &[MorphTag]) -> Result<Vec<String>> {
    if lemmas.len() != tags.len() {
        return Err(Error::invalid(format!("{} lemmas but {} tags", lemmas.len(), tags.len())));
    }
    Ok(lemmas
        .iter()
        .zip(tags)
        .flat_map(|(l, t)| [l.clone(), t.to_string()])
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Deinterleaved {
    pub lemmas: Vec<String>,
    pub tags: Vec<MorphTag>,
    /// Wildcard tags inserted after lemmas lacking one, plus dropped
    /// tags that had no lemma.
    pub repairs: usize,
}

/// Splits an interleaved sequence. A lemma not followed by a tag gets the
/// wildcard tag; a tag not preceded by a lemma is dropped.
pub fn deinterleave(tokens: &[String]) -> Deinterleaved {
    let mut out = Deinterleaved {
        lemmas: Vec::new(),
        tags: Vec::new(),
        repairs: 0,
    };
    let mut pending = false;
    for tok in tokens {
        if is_tag_token(tok) {
            if pending {
                out.tags.push(tok.parse().expect("tag token parses"));
                pending = false;
            } else {
                out.repairs += 1;
            }
        } else {
            if pending {
                out.tags.push(MorphTag::wildcard());
                out.repairs += 1;
            }
            out.lemmas.push(tok.clone());
            pending = true;
        }
    }
    if pending {
        out.tags.push(MorphTag::wildcard());
        out.repairs += 1;
    }
    out
}

/// Inflected tokens plus the tags they were generated from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Realized {
    pub tokens: Vec<String>,
    pub tags: Vec<MorphTag>,
}

impl Realized {
    /// Tokens with each placeholder followed by its tag, the input expected
    /// by lemma-tag lexicalization.
    pub fn with_placeholder_tags(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.tokens.len());
        for (tok, tag) in self.tokens.iter().zip(&self.tags) {
            out.push(tok.clone());
            if placeholder_slot(tok).is_some() {
                out.push(tag.to_string());
            }
        }
        out
    }
}

/// Inflects every lemma by its tag (first dictionary result; unknown lemmas
/// stay as they are). Placeholders pass through.
pub fn realize_lemma_tags(lemmas: &[String], tags: &[MorphTag], dict: &MorphDictionary) -> Result<Realized> {
    if lemmas.len() != tags.len() {
        return Err(Error::invalid(format!("{} lemmas but {} tags", lemmas.len(), tags.len())));
    }
    let tokens = lemmas
        .iter()
        .zip(tags)
        .map(|(l, t)| {
            if placeholder_slot(l).is_some() {
                l.clone()
            } else {
                dict.generate(l, t).into_iter().next().unwrap_or_else(|| l.clone())
            }
        })
        .collect();
    Ok(Realized {
        tokens,
        tags: tags.to_vec(),
    })
}

/// Builds a dictionary from the aligned `(form, lemma, tag)` triples of the
/// non-placeholder tokens of a corpus.
pub fn dictionary_from_corpus(instances: &[Instance]) -> Result<MorphDictionary> {
    let mut dict = MorphDictionary::new();
    for inst in instances {
        if inst.tags.len() != inst.text.len() || inst.tags.is_empty() {
            continue;
        }
        for tok in inst.aligned_tokens()? {
            if placeholder_slot(&tok.lemma).is_none() {
                dict.add(&tok.form, &tok.lemma, tok.tag, 1);
            }
        }
    }
    Ok(dict)
}

/// Per-slot counts of placeholders in a token sequence.
pub fn placeholder_counts<T: AsRef<str>>(tokens: &[T]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for t in tokens {
        if let Some(slot) = placeholder_slot(t.as_ref()) {
            *out.entry(slot.to_owned()).or_default() += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::da::{parse_da, Registry};
    use crate::eval::ser;
    use proptest::prelude::*;
    use rand::Rng;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    fn tag(s: &str) -> MorphTag {
        s.parse().unwrap()
    }

    fn tiny(seed: u64, vout: usize) -> Generator {
        let config = GeneratorConfig {
            embedding: 4,
            cell: 5,
            dropout: 0.0,
            seed,
            ..Default::default()
        };
        let vin = Vocab::from((0..6).map(|i| format!("i{i}")).collect::<Vec<_>>());
        let vout = Vocab::from(
            std::iter::once(EOS.to_owned())
                .chain((1..vout).map(|i| format!("o{i}")))
                .collect::<Vec<_>>(),
        );
        Generator::new(config, vin, vout).unwrap()
    }

    fn scale(g: &mut Generator, f: f64) {
        for id in g.params.ids().collect::<Vec<_>>() {
            g.params.get_mut(id).data_mut().iter_mut().for_each(|x| *x *= f);
        }
    }

    #[test]
    fn vocab_build_orders_and_thresholds() {
        let v = Vocab::build(&[EOS, UNK], "b a b c c c a d".split(' '), 2);
        assert_eq!(v.tokens(), &[EOS, UNK, "c", "a", "b"]);
        assert_eq!(v.id_or_unk("d").unwrap(), 1);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocab>(&json).unwrap(), v);
    }

    #[test]
    fn encoder_state_sizes_and_determinism() {
        let g = tiny(3, 4);
        let enc = g.encode(&[[1, 2, 3]]).unwrap();
        assert_eq!(enc.memory.states.len(), 1);
        assert_eq!(enc.memory.states[0].len(), 10);
        let again = tiny(3, 4).encode(&[[1, 2, 3]]).unwrap();
        assert_eq!(enc.memory.states, again.memory.states);
        assert!(g.encode(&[]).is_err());
    }

    #[test]
    fn zero_recurrence_reversal_permutes_states() {
        let mut g = tiny(4, 4);
        for cell in [g.net.enc.fwd, g.net.enc.bwd] {
            let (input, hidden) = (cell.input, cell.hidden);
            let w = g.params.get_mut(cell.w);
            for r in 0..4 * hidden {
                let row = w.row_mut(r);
                if (hidden..2 * hidden).contains(&r) {
                    row.iter_mut().for_each(|x| *x = 0.0);
                } else {
                    row[input..].iter_mut().for_each(|x| *x = 0.0);
                }
            }
            // closed forget gates: no memory carried between positions
            g.params.get_mut(cell.b).data_mut()[hidden..2 * hidden].iter_mut().for_each(|x| *x = -1000.0);
        }
        let a = g.encode(&[[1, 2, 3], [4, 5, 0]]).unwrap();
        let b = g.encode(&[[4, 5, 0], [1, 2, 3]]).unwrap();
        assert_eq!(a.memory.states[0], b.memory.states[1]);
        assert_eq!(a.memory.states[1], b.memory.states[0]);
    }

    #[test]
    fn eos_dominant_output_gives_single_token_candidates() {
        let mut g = tiny(5, 3);
        let out = g.net.out;
        g.params.get_mut(out.w).fill(0.0);
        g.params.get_mut(out.b).data_mut().copy_from_slice(&[30.0, 0.0, 0.0]);
        let enc = g.encode(&[[1, 1, 1]]).unwrap();
        let best = g.beam_search(&enc, 3, 3).unwrap();
        assert!(best[0].0.is_empty());
        assert!(best[0].1 > -1e-9);
        let cands = g.beam_decode(
            &[Triple {
                da_type: "i1".into(),
                slot: "i2".into(),
                value: "i3".into(),
            }],
            3,
        )
        .unwrap();
        assert_eq!(cands[0].tokens, vec![EOS.to_owned()]);
        assert!(cands[0].words().is_empty());
    }

    fn brute_force(g: &Generator, enc: &Encoded, vocab: usize, max_len: usize) -> (Vec<usize>, f64) {
        let mut best = (Vec::new(), g.sequence_logprob(enc, &[]).unwrap());
        let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
        for _ in 0..max_len {
            let mut next = Vec::new();
            for seq in &frontier {
                for w in 1..vocab {
                    let mut s = seq.clone();
                    s.push(w);
                    let lp = g.sequence_logprob(enc, &s).unwrap();
                    if lp > best.1 {
                        best = (s.clone(), lp);
                    }
                    next.push(s);
                }
            }
            frontier = next;
        }
        best
    }

    #[test]
    fn exhaustive_beam_matches_enumeration() {
        for trial in 0..20u64 {
            let mut g = tiny(100 + trial, 3);
            scale(&mut g, 20.0);
            let enc = g.encode(&[[1, 2, 3], [3, 4, 5]]).unwrap();
            let (seq, lp) = brute_force(&g, &enc, 3, 3);
            let beam = g.beam_search(&enc, 27, 3).unwrap();
            assert_eq!(beam[0].0, seq, "trial {trial}");
            assert!((beam[0].1 - lp).abs() < 1e-9);
        }
    }

    #[test]
    fn wider_beam_not_worse_on_random_models() {
        for trial in 0..30u64 {
            let mut g = tiny(200 + trial, 6);
            scale(&mut g, 15.0);
            let enc = g.encode(&[[1, 2, 3]]).unwrap();
            let one = g.beam_search(&enc, 1, 6).unwrap()[0].1;
            let wide = g.beam_search(&enc, 20, 6).unwrap()[0].1;
            assert!(wide >= one - 1e-12, "trial {trial}: {wide} < {one}");
        }
    }

    #[test]
    fn candidates_sorted_and_end_with_eos() {
        let mut g = tiny(9, 5);
        scale(&mut g, 10.0);
        let t = Triple {
            da_type: "i1".into(),
            slot: "i2".into(),
            value: "i3".into(),
        };
        let c = g.beam_decode(&[t], 5).unwrap();
        assert!(!c.is_empty() && c.len() <= 5);
        for w in c.windows(2) {
            assert!(w[0].logprob >= w[1].logprob);
        }
        for cand in &c {
            assert_eq!(cand.tokens.last().unwrap(), EOS);
            assert!(cand.logprob <= 0.0);
        }
    }

    #[test]
    fn full_model_gradients() {
        for r in model_gradchecks(7, 5, 1e-5).unwrap() {
            assert!(r.passed(1e-4), "{} {}", r.name, r.max_rel_error);
        }
    }

    #[test]
    fn dropout_masks_enter_gradient() {
        let g = tiny(11, 5);
        let mut rng = NlgRng::seed_from_u64(1);
        let mut grads = Gradients::zeros_like(&g.params);
        let mut drop = Dropout {
            rate: 0.5,
            rng: Some(&mut rng),
        };
        let l = g.sequence_loss(&[[1, 2, 3]], &[2, 3, 0], Some(&mut grads), &mut drop).unwrap();
        assert!(l.is_finite() && grads.is_finite());
        assert!(grads.global_norm() > 0.0);
    }

    fn toy_set() -> (Vec<TrainExample>, DelexPolicy) {
        let policy = DelexPolicy::default();
        let reg = Registry::restaurant();
        let data = [
            ("inform(name=A,food=B)", "X-name podává X-food jídlo ."),
            ("inform(name=A,area=B)", "X-name je v lokalitě X-area ."),
            ("inform(name=A,price_range=B)", "X-name je X-price_range restaurace ."),
            ("request(area)", "v jaké lokalitě hledáte ?"),
            ("request(food)", "jaké jídlo preferujete ?"),
            ("goodbye()", "na shledanou ."),
            ("confirm(food=B)", "chcete X-food jídlo ?"),
            ("inform_no_match(area=B)", "v lokalitě X-area nic nemám ."),
            ("inform(name=A,near=B)", "X-name je blízko X-near ."),
            ("?reqmore()", "mohu ještě pomoci ?"),
        ];
        let ex = data
            .iter()
            .map(|(da, t)| TrainExample {
                triples: da_to_triples(&parse_da(da, &reg).unwrap(), TripleMode::Delexicalized, &policy),
                target: toks(t),
            })
            .collect();
        (ex, policy)
    }

    #[test]
    fn overfit_toy_set() {
        let (train, _) = toy_set();
        let config = GeneratorConfig {
            embedding: 32,
            cell: 32,
            dropout: 0.0,
            batch: 5,
            lr: 0.01,
            min_freq: 1,
            min_passes: 1,
            max_passes: 200,
            patience: 200,
            seed: 2,
            ..Default::default()
        };
        let (g, log) = train_generator(&config, &train, &[]).unwrap();
        for w in log.records[..20].windows(2) {
            assert!(w[1].train_loss < w[0].train_loss, "{w:?}");
        }
        assert!(log.best_dev_bleu > 99.0, "{}", log.best_dev_bleu);
        for ex in &train {
            assert_eq!(g.greedy(&ex.triples).unwrap(), ex.target);
        }
    }

    #[test]
    fn training_deterministic_and_min_passes() {
        let (train, _) = toy_set();
        let config = GeneratorConfig {
            embedding: 8,
            cell: 8,
            batch: 4,
            min_freq: 1,
            min_passes: 12,
            max_passes: 40,
            patience: 1,
            max_len: 12,
            ..Default::default()
        };
        let (g1, l1) = train_generator(&config, &train, &train[..3]).unwrap();
        let (g2, l2) = train_generator(&config, &train, &train[..3]).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(g1.params, g2.params);
        assert!(l1.records.len() >= 12);
    }

    #[test]
    fn zero_lr_keeps_parameters() {
        let (train, _) = toy_set();
        let config = GeneratorConfig {
            embedding: 6,
            cell: 6,
            lr: 0.0,
            dropout: 0.0,
            min_freq: 1,
            min_passes: 2,
            max_passes: 2,
            max_len: 10,
            ..Default::default()
        };
        let (g, _) = train_generator(&config, &train, &[]).unwrap();
        let fresh = Generator::new(config, g.input_vocab.clone(), g.output_vocab.clone()).unwrap();
        assert_eq!(g.params, fresh.params);
    }

    #[test]
    fn early_stopping_rules() {
        let config = GeneratorConfig {
            min_passes: 50,
            patience: 5,
            top_k: 3,
            ..Default::default()
        };
        let mut es = EarlyStopping::new(&config);
        // patience met at pass 6 but min passes hold training until 50
        for pass in 1..=49 {
            assert!(!es.observe(pass, if pass == 1 { 10.0 } else { 5.0 }));
        }
        assert!(es.observe(50, 5.0));

        let mut top = EarlyStopping::new(&GeneratorConfig {
            min_passes: 1,
            patience: 3,
            top_k: 3,
            ..Default::default()
        });
        let mut max = EarlyStopping::new(&GeneratorConfig {
            min_passes: 1,
            patience: 3,
            top_k: 3,
            stop_rule: StopRule::Max,
            ..Default::default()
        });
        let scores = [10.0, 5.0, 6.0, 7.0, 8.0, 9.0, 9.5];
        let stops_top: Vec<bool> = scores.iter().enumerate().map(|(i, &s)| top.observe(i + 1, s)).collect();
        let stops_max: Vec<bool> = scores.iter().enumerate().map(|(i, &s)| max.observe(i + 1, s)).collect();
        assert_eq!(stops_max, [false, false, false, true, true, true, true]);
        assert_eq!(stops_top, [false, false, false, false, false, false, false]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let g = tiny(12, 4);
        let dir = std::env::temp_dir().join(format!("morphnlg-gen-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("g.ckpt");
        g.save(&path).unwrap();
        let back = Generator::load(&path).unwrap();
        assert_eq!(back.params, g.params);
        assert_eq!(back.output_vocab, g.output_vocab);
        assert!(Reranker::load(&path).is_err());
        match Generator::load(dir.join("missing.ckpt")) {
            Err(Error::Checkpoint(m)) => assert!(m.contains("checkpoint not found")),
            other => panic!("{other:?}"),
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    fn cand(words: &str, logprob: f64, penalty: usize) -> Candidate {
        let mut tokens = toks(words);
        tokens.push(EOS.into());
        Candidate { tokens, logprob, penalty }
    }

    #[test]
    fn rerank_sorting_rules() {
        let mut c = vec![cand("a", -1.0, 1), cand("b", -3.0, 0), cand("c", -2.0, 0), cand("d", -2.0, 0)];
        sort_by_penalty(&mut c, RerankMode::Lexicographic);
        let order: Vec<&str> = c.iter().map(|x| x.tokens[0].as_str()).collect();
        assert_eq!(order, ["c", "d", "b", "a"]);
        let mut c = vec![cand("a", -1.0, 1), cand("b", -3.0, 0)];
        sort_by_penalty(&mut c, RerankMode::Linear { weight: 2.5 });
        assert_eq!(c[0].tokens[0], "b");
        sort_by_penalty(&mut c, RerankMode::Linear { weight: 0.5 });
        assert_eq!(c[0].tokens[0], "a");
    }

    #[test]
    fn indicators_and_penalty_arithmetic() {
        let p = DelexPolicy::default();
        let reg = Registry::restaurant();
        let da = parse_da("inform(name=Ananta,food=Indian)", &reg).unwrap();
        let ind = da_indicators(&da, &p);
        let expected: BTreeSet<String> = ["inform", "inform(name=X-name)", "inform(food=X-food)"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(ind, expected);
        // 2 of 3 plus one extra
        let predicted: BTreeSet<String> = ["inform", "inform(name=X-name)", "inform(area=X-area)"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(predicted.symmetric_difference(&ind).count(), 2);
    }

    #[test]
    fn reranker_threshold_is_inclusive() {
        let config = RerankerConfig {
            embedding: 2,
            cell: 2,
            ..Default::default()
        };
        let mut rr = Reranker::new(config, Vocab::from(vec![UNK.to_owned(), "a".into()]), vec!["x".into(), "y".into()]).unwrap();
        let out = rr.net.out;
        rr.params.get_mut(out.w).fill(0.0);
        rr.params.get_mut(out.b).data_mut().copy_from_slice(&[0.0, -1.0]);
        let set = rr.classify(&toks("a")).unwrap();
        assert_eq!(set, ["x".to_owned()].into());
        assert!(rr.classify(&[]).is_err());
    }

    #[test]
    fn reranker_memorizes_ten_instances() {
        let (train, policy) = toy_set();
        let reg = Registry::restaurant();
        let das = [
            "inform(name=A,food=B)",
            "inform(name=A,area=B)",
            "inform(name=A,price_range=B)",
            "request(area)",
            "request(food)",
            "goodbye()",
            "confirm(food=B)",
            "inform_no_match(area=B)",
            "inform(name=A,near=B)",
            "?reqmore()",
        ];
        let data: Vec<RerankExample> = train
            .iter()
            .zip(das)
            .map(|(ex, da)| (ex.target.clone(), da_indicators(&parse_da(da, &reg).unwrap(), &policy)))
            .collect();
        let config = RerankerConfig {
            embedding: 16,
            cell: 16,
            lr: 0.02,
            batch: 5,
            passes: 150,
            ..Default::default()
        };
        let (rr, log) = train_reranker(&config, &data, &[]).unwrap();
        assert!(log.iter().any(|r| r.kept));
        for (tokens, gold) in &data {
            assert_eq!(&rr.classify(tokens).unwrap(), gold);
        }
        let da = parse_da(das[0], &reg).unwrap();
        let c = vec![cand("chcete X-food jídlo ?", -0.5, 0), cand("X-name podává X-food jídlo .", -1.0, 0)];
        let ranked = rr.rerank(c, &da, &policy, RerankMode::Lexicographic).unwrap();
        assert_eq!(ranked[0].penalty, 0);
        assert_eq!(ranked[0].tokens[0], "X-name");
        assert!(ser(ranked[0].words(), &da, &policy) == 0.0);
    }

    fn fig3() -> (Vec<String>, Vec<MorphTag>) {
        let lemmas = toks("hledat vhodný restaurace na X-good_for_meal ?");
        let tags = [
            "VB-P---2P-AA---",
            "AAFS4----1A----",
            "NNFS4-----A----",
            "RR--4----------",
            "NNFS4-----A----",
            "Z:-------------",
        ]
        .iter()
        .map(|t| tag(t))
        .collect();
        (lemmas, tags)
    }

    #[test]
    fn interleave_examples() {
        let out = interleave(&toks("hledat vhodný"), &[tag("VB-P---2P-AA---"), tag("AAFS4----1A----")]).unwrap();
        assert_eq!(out.join(" "), "hledat VB-P---2P-AA--- vhodný AAFS4----1A----");
        let (l, t) = fig3();
        let d = deinterleave(&interleave(&l, &t).unwrap());
        assert_eq!(d.lemmas.len(), 6);
        assert_eq!(d.lemmas[4], "X-good_for_meal");
        assert_eq!(d.tags[4], tag("NNFS4-----A----"));
        assert_eq!(d.repairs, 0);
        assert!(interleave(&l, &t[..2]).is_err());
    }

    #[test]
    fn deinterleave_repairs() {
        let d = deinterleave(&toks("X-name je VB-S---3P-AA--- NNFS1-----A---- ."));
        assert_eq!(d.lemmas, toks("X-name je ."));
        assert_eq!(d.tags[0], MorphTag::wildcard());
        assert_eq!(d.tags[1], tag("VB-S---3P-AA---"));
        assert_eq!(d.tags[2], MorphTag::wildcard());
        assert_eq!(d.repairs, 3);
    }

    #[test]
    fn realize_examples() {
        let (l, t) = fig3();
        let mut dict = MorphDictionary::new();
        dict.add("hledáte", "hledat", tag("VB-P---2P-AA---"), 1);
        dict.add("hledám", "hledat", tag("VB-S---1P-AA---"), 3);
        dict.add("vhodnou", "vhodný", tag("AAFS4----1A----"), 1);
        dict.add("vhodná", "vhodný", tag("AAFS1----1A----"), 2);
        dict.add("restauraci", "restaurace", tag("NNFS4-----A----"), 1);
        dict.add("na", "na", tag("RR--4----------"), 1);
        dict.add("?", "?", tag("Z:-------------"), 1);
        let r = realize_lemma_tags(&l, &t, &dict).unwrap();
        assert_eq!(r.tokens.join(" "), "hledáte vhodnou restauraci na X-good_for_meal ?");
        assert_eq!(
            r.with_placeholder_tags().join(" "),
            "hledáte vhodnou restauraci na X-good_for_meal NNFS4-----A---- ?"
        );
        let unknown = realize_lemma_tags(&toks("zzz"), &[tag("NNFS4-----A----")], &dict).unwrap();
        assert_eq!(unknown.tokens, toks("zzz"));
    }

    proptest! {
        #[test]
        fn interleave_round_trip(n in 0usize..12, seed in 0u64..1000) {
            let mut rng = NlgRng::seed_from_u64(seed);
            let lemmas: Vec<String> = (0..n).map(|i| format!("lem{}{}", i, rng.gen_range(0..9))).collect();
            let tags: Vec<MorphTag> = (0..n)
                .map(|_| tag(&format!("NN{}S{}-----A----", ['F', 'M', 'I', 'N'][rng.gen_range(0..4)], rng.gen_range(1..8))))
                .collect();
            let d = deinterleave(&interleave(&lemmas, &tags).unwrap());
            prop_assert_eq!(d.lemmas, lemmas);
            prop_assert_eq!(d.tags, tags);
            prop_assert_eq!(d.repairs, 0);
        }

        #[test]
        fn deinterleave_always_pairs(tokens in prop::collection::vec(prop::sample::select(vec![
            "X-name", "je", "NNFS1-----A----", "VB-S---3P-AA---", "."]), 0..15)) {
            let tokens: Vec<String> = tokens.into_iter().map(str::to_owned).collect();
            let d = deinterleave(&tokens);
            prop_assert_eq!(d.lemmas.len(), d.tags.len());
            let relinked = interleave(&d.lemmas, &d.tags).unwrap();
            for (i, t) in relinked.iter().enumerate() {
                prop_assert_eq!(i % 2 == 1, is_tag_token(t));
            }
        }
    }
}
