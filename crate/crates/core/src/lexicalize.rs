//! Filling placeholders of generated output with inflected surface forms,
//! and the bidirectional LSTM language model used to rank those forms.

use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::da::{placeholder_slot, DelexPolicy, DialogueAct};
use crate::delex::{Instance, ValueQueue};
use crate::error::{Error, Result};
use crate::generation::{is_tag_token, OutputMode, Vocab};
use crate::morph::{filter_forms, FormLexicon, MorphTag, SurfaceForm};
use crate::neural::{
    log_softmax, read_checkpoint, softmax_xent, write_checkpoint, AdamState, Embedding, Gradients, Linear, LstmCache,
    LstmCell, LstmState, ModelParams, NlgRng,
};
use crate::ngram::{BOS, EOS, UNK};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LexKind {
    Random,
    MostFrequent,
    RnnLm,
}

impl LexKind {
    pub const ALL: [LexKind; 3] = [LexKind::Random, LexKind::MostFrequent, LexKind::RnnLm];

    pub fn name(self) -> &'static str {
        match self {
            LexKind::Random => "random",
            LexKind::MostFrequent => "most_frequent",
            LexKind::RnnLm => "rnn_lm",
        }
    }
}

impl FromStr for LexKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LexKind::ALL
            .into_iter()
            .find(|k| k.name() == s.replace('-', "_"))
            .ok_or_else(|| Error::invalid(format!("unknown lexicalizer `{s}`")))
    }
}

/// How surface forms are chosen.
pub enum LexStrategy<'a> {
    Random(NlgRng),
    MostFrequent,
    RnnLm(&'a BiRnnLm),
}

impl LexStrategy<'_> {
    pub fn random(seed: u64) -> Self {
        LexStrategy::Random(NlgRng::seed_from_u64(seed))
    }

    pub fn kind(&self) -> LexKind {
        match self {
            LexStrategy::Random(_) => LexKind::Random,
            LexStrategy::MostFrequent => LexKind::MostFrequent,
            LexStrategy::RnnLm(_) => LexKind::RnnLm,
        }
    }
}

/// All forms of `slot=value`, or with a tag hint those passing the
/// exact → coarse POS → all backoff.
pub fn candidate_forms<'a>(
    lex: &'a FormLexicon,
    slot: &str,
    value: &str,
    tag_hint: Option<&MorphTag>,
) -> Result<Vec<&'a SurfaceForm>> {
    let forms = lex.forms(slot, value);
    if forms.is_empty() {
        return Err(Error::UnknownValue {
            slot: slot.to_owned(),
            value: value.to_owned(),
        });
    }
    Ok(match tag_hint {
        Some(tag) => filter_forms(forms, tag),
        None => forms.iter().collect(),
    })
}

/// First candidate with the highest frequency.
pub fn most_frequent<'f>(candidates: &[&'f SurfaceForm]) -> Option<&'f SurfaceForm> {
    let mut best: Option<&SurfaceForm> = None;
    for &c in candidates {
        if best.map_or(true, |b| c.frequency > b.frequency) {
            best = Some(c);
        }
    }
    best
}

/// Chooses one of `candidates` for a placeholder between `left` and
/// `right` (LM tokens, multiword forms merged when the model merges them).
pub fn select_form<'f>(
    strategy: &mut LexStrategy,
    left: &[String],
    right: &[String],
    candidates: &[&'f SurfaceForm],
) -> Result<&'f SurfaceForm> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidate forms"));
    }
    match strategy {
        LexStrategy::Random(rng) => Ok(candidates.choose(rng).copied().expect("non-empty")),
        LexStrategy::MostFrequent => Ok(most_frequent(candidates).expect("non-empty")),
        LexStrategy::RnnLm(lm) => {
            let mut best: Option<(f64, &SurfaceForm)> = None;
            for &c in candidates {
                let score = lm.score_form(left, right, &c.form)?;
                let better = match best {
                    None => true,
                    Some((b, f)) => score > b || (score == b && c.frequency > f.frequency),
                };
                if better {
                    best = Some((score, c));
                }
            }
            Ok(best.expect("non-empty").1)
        }
    }
}

fn lm_token(form: &str, merge: bool) -> Vec<String> {
    if merge {
        vec![form.to_owned()]
    } else {
        form.split_whitespace().map(str::to_owned).collect()
    }
}

enum Piece {
    Word(String),
    Slot { slot: String, hint: Option<MorphTag> },
}

/// Replaces placeholders left to right with surface forms of the DA's
/// values. In lemma-tag mode a tag token right after a placeholder is the
/// form's tag hint and is dropped; other tokens pass through. Verbatim
/// slots without lexicon entries insert the value itself.
pub fn lexicalize_output(
    tokens: &[String],
    da: &DialogueAct,
    lex: &FormLexicon,
    strategy: &mut LexStrategy,
    mode: OutputMode,
    policy: &DelexPolicy,
) -> Result<Vec<String>> {
    let mut pieces = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        let tok = &tokens[i];
        i += 1;
        match placeholder_slot(tok) {
            Some(slot) => {
                let mut hint = None;
                if mode == OutputMode::LemmaTag && i < tokens.len() && is_tag_token(&tokens[i]) {
                    hint = Some(tokens[i].parse::<MorphTag>()?);
                    i += 1;
                }
                pieces.push(Piece::Slot {
                    slot: slot.to_owned(),
                    hint,
                });
            }
            None => pieces.push(Piece::Word(tok.clone())),
        }
    }
    let pairs: Vec<(&str, &str)> = da
        .slot_values()
        .filter(|(s, v)| policy.is_delexicalized(s, v))
        .collect();
    let missing: Vec<String> = pieces
        .iter()
        .filter_map(|p| match p {
            Piece::Slot { slot, .. } if !pairs.iter().any(|(s, _)| s == slot) => Some(slot.clone()),
            _ => None,
        })
        .collect();
    if !missing.is_empty() {
        return Err(Error::UnfilledPlaceholders(missing));
    }

    // Each piece's value and candidates; the most frequent candidate is the
    // provisional choice that later placeholders see as right context.
    let mut values = ValueQueue::new(pairs.iter().copied());
    let mut resolved: Vec<Option<(Vec<&SurfaceForm>, String)>> = Vec::with_capacity(pieces.len());
    for p in &pieces {
        resolved.push(match p {
            Piece::Word(_) => None,
            Piece::Slot { slot, hint } => {
                let value = values.next(slot).expect("checked above");
                if policy.is_verbatim(slot) && lex.forms(slot, value).is_empty() {
                    Some((Vec::new(), value.to_owned()))
                } else {
                    let cands = candidate_forms(lex, slot, value, hint.as_ref())?;
                    let provisional = most_frequent(&cands).expect("non-empty").form.clone();
                    Some((cands, provisional))
                }
            }
        });
    }
    let merge = match strategy {
        LexStrategy::RnnLm(lm) => lm.config.merge_multiword,
        _ => true,
    };
    let mut chosen: Vec<String> = pieces
        .iter()
        .zip(&resolved)
        .map(|(p, r)| match (p, r) {
            (Piece::Word(w), _) => w.clone(),
            (_, Some((_, form))) => form.clone(),
            _ => unreachable!(),
        })
        .collect();
    for k in 0..pieces.len() {
        let Some((cands, _)) = &resolved[k] else { continue };
        if cands.is_empty() {
            continue;
        }
        let left: Vec<String> = chosen[..k].iter().flat_map(|t| lm_token(t, merge)).collect();
        let right: Vec<String> = chosen[k + 1..].iter().flat_map(|t| lm_token(t, merge)).collect();
        chosen[k] = select_form(strategy, &left, &right, cands)?.form.clone();
    }
    Ok(chosen
        .iter()
        .flat_map(|t| t.split_whitespace().map(str::to_owned))
        .collect())
}

// ---------------------------------------------------------------------------
// bidirectional LM

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiLmConfig {
    pub embedding: usize,
    pub cell: usize,
    pub lr: f64,
    pub batch: usize,
    pub passes: usize,
    pub min_freq: usize,
    /// Treat each multiword surface form as one token.
    pub merge_multiword: bool,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for BiLmConfig {
    fn default() -> Self {
        BiLmConfig {
            embedding: 50,
            cell: 50,
            lr: 0.001,
            batch: 20,
            passes: 50,
            min_freq: 1,
            merge_multiword: true,
            clip_norm: crate::neural::DEFAULT_CLIP_NORM,
            seed: 1,
        }
    }
}

impl BiLmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding == 0 || self.cell == 0 || self.batch == 0 || self.passes == 0 || self.min_freq == 0 {
            return Err(Error::invalid("LM config: sizes must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.clip_norm > 0.0) {
            return Err(Error::invalid("LM config: bad learning rate or clip norm"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct LmNet {
    emb: Embedding,
    cell: LstmCell,
    out: Linear,
}

/// Forward and backward LSTM language models over one vocabulary.
#[derive(Clone, Debug)]
pub struct BiRnnLm {
    pub config: BiLmConfig,
    pub vocab: Vocab,
    pub params: ModelParams,
    fwd: LmNet,
    bwd: LmNet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmRecord {
    pub pass: usize,
    pub train_perplexity: f64,
    pub dev_perplexity: f64,
    pub kept: bool,
}

impl BiRnnLm {
    pub fn new(config: BiLmConfig, vocab: Vocab) -> Result<Self> {
        config.validate()?;
        for s in [BOS, EOS, UNK] {
            if vocab.get(s).is_none() {
                return Err(Error::invalid(format!("LM vocabulary lacks `{s}`")));
            }
        }
        let mut rng = NlgRng::seed_from_u64(config.seed);
        let mut params = ModelParams::new(config.seed);
        let mut net = |name: &str, params: &mut ModelParams| -> Result<LmNet> {
            Ok(LmNet {
                emb: Embedding::new(params, &format!("{name}.emb"), vocab.len(), config.embedding, &mut rng)?,
                cell: LstmCell::new(params, &format!("{name}.lstm"), config.embedding, config.cell, &mut rng)?,
                out: Linear::new(params, &format!("{name}.out"), config.cell, vocab.len(), &mut rng)?,
            })
        };
        let fwd = net("lm.fwd", &mut params)?;
        let bwd = net("lm.bwd", &mut params)?;
        Ok(BiRnnLm {
            config,
            vocab,
            params,
            fwd,
            bwd,
        })
    }

    fn ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.vocab.id_or_unk(t).expect("vocabulary has <unk>")).collect()
    }

    /// State after reading `<s>` and `context`.
    fn run(&self, net: &LmNet, context: &[usize]) -> Result<LstmState> {
        let mut s = LstmState::zeros(self.config.cell);
        let bos = self.vocab.get(BOS).expect("checked");
        for &id in std::iter::once(&bos).chain(context) {
            s = net.cell.step(&self.params, net.emb.forward(&self.params, id), &s)?.0;
        }
        Ok(s)
    }

    /// Log-probability of `continuation` after `<s> context`.
    fn continuation_logprob(&self, net: &LmNet, context: &[usize], continuation: &[usize]) -> Result<f64> {
        let mut s = self.run(net, context)?;
        let mut total = 0.0;
        for &id in continuation {
            let lp = log_softmax(&net.out.forward(&self.params, &s.h)?);
            total += lp[id];
            s = net.cell.step(&self.params, net.emb.forward(&self.params, id), &s)?.0;
        }
        Ok(total)
    }

    /// Next-token distribution of the forward model after `left`.
    pub fn forward_distribution(&self, left: &[String]) -> Result<Vec<f64>> {
        let s = self.run(&self.fwd, &self.ids(left))?;
        Ok(log_softmax(&self.fwd.out.forward(&self.params, &s.h)?).into_iter().map(f64::exp).collect())
    }

    /// Previous-token distribution of the backward model before `right`.
    pub fn backward_distribution(&self, right: &[String]) -> Result<Vec<f64>> {
        let mut ids = self.ids(right);
        ids.reverse();
        let s = self.run(&self.bwd, &ids)?;
        Ok(log_softmax(&self.bwd.out.forward(&self.params, &s.h)?).into_iter().map(f64::exp).collect())
    }

    /// `log p_fwd(form | left) + log p_bwd(form | right)`.
    pub fn score_form(&self, left: &[String], right: &[String], form: &str) -> Result<f64> {
        let form_ids = self.ids(&lm_token(form, self.config.merge_multiword));
        let left_ids = self.ids(left);
        let mut right_rev = self.ids(right);
        right_rev.reverse();
        let mut form_rev = form_ids.clone();
        form_rev.reverse();
        Ok(self.continuation_logprob(&self.fwd, &left_ids, &form_ids)?
            + self.continuation_logprob(&self.bwd, &right_rev, &form_rev)?)
    }

    /// Summed next-token cross-entropy of `<s> ids </s>` under `net`.
    fn sequence_loss(&self, net: &LmNet, ids: &[usize], grads: Option<&mut Gradients>) -> Result<f64> {
        let bos = self.vocab.get(BOS).expect("checked");
        let eos = self.vocab.get(EOS).expect("checked");
        let inputs: Vec<usize> = std::iter::once(bos).chain(ids.iter().copied()).collect();
        let targets: Vec<usize> = ids.iter().copied().chain(std::iter::once(eos)).collect();
        let mut s = LstmState::zeros(self.config.cell);
        let mut caches: Vec<(LstmCache, Vec<f64>, Vec<f64>)> = Vec::with_capacity(inputs.len());
        let mut loss = 0.0;
        for (&x, &y) in inputs.iter().zip(&targets) {
            let (next, cache) = net.cell.step(&self.params, net.emb.forward(&self.params, x), &s)?;
            let (l, dlogits) = softmax_xent(&net.out.forward(&self.params, &next.h)?, y)?;
            loss += l;
            caches.push((cache, next.h.clone(), dlogits));
            s = next;
        }
        if let Some(grads) = grads {
            let h = self.config.cell;
            let mut carry = LstmState::zeros(h);
            for (k, (cache, hidden, dlogits)) in caches.iter().enumerate().rev() {
                let dout = net.out.backward(&self.params, grads, hidden, dlogits);
                let dh: Vec<f64> = dout.iter().zip(&carry.h).map(|(a, b)| a + b).collect();
                let (dx, prev) = net.cell.backward(&self.params, grads, cache, &dh, &carry.c);
                net.emb.backward(grads, inputs[k], &dx);
                carry = prev;
            }
        }
        Ok(loss)
    }

    fn both_losses(&self, tokens: &[String], mut grads: Option<&mut Gradients>) -> Result<f64> {
        let ids = self.ids(tokens);
        let mut rev = ids.clone();
        rev.reverse();
        let f = self.sequence_loss(&self.fwd, &ids, grads.as_deref_mut())?;
        let b = self.sequence_loss(&self.bwd, &rev, grads)?;
        Ok(f + b)
    }

    /// Per-token perplexity averaged over both directions (each sentence
    /// predicts its tokens and the end marker).
    pub fn perplexity(&self, sentences: &[Vec<String>]) -> Result<f64> {
        let mut nll = 0.0;
        let mut count = 0usize;
        for s in sentences {
            nll += self.both_losses(s, None)?;
            count += 2 * (s.len() + 1);
        }
        if count == 0 {
            return Err(Error::EmptyCorpus);
        }
        Ok((nll / count as f64).exp())
    }

    fn metadata(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "bilm", "config": self.config, "vocab": self.vocab })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &self.params, &self.metadata().to_string())?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Checkpoint(format!("checkpoint not found: {}", path.display())),
            _ => Error::Io(e),
        })?;
        let (params, meta) = read_checkpoint(bytes.as_slice())?;
        let meta: serde_json::Value = serde_json::from_str(&meta)?;
        if meta.get("kind").and_then(|k| k.as_str()) != Some("bilm") {
            return Err(Error::Checkpoint(format!("{} is not a language model checkpoint", path.display())));
        }
        let field = |name: &str| {
            meta.get(name)
                .cloned()
                .ok_or_else(|| Error::Checkpoint(format!("metadata lacks `{name}`")))
        };
        let mut lm = BiRnnLm::new(serde_json::from_value(field("config")?)?, serde_json::from_value(field("vocab")?)?)?;
        lm.params.copy_from(&params).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(lm)
    }
}

/// Trains both directions with Adam; after every pass the dev perplexity
/// (training perplexity without dev data) decides which parameters are kept.
pub fn train_bi_lm(config: &BiLmConfig, train: &[Vec<String>], dev: &[Vec<String>]) -> Result<(BiRnnLm, Vec<LmRecord>)> {
    config.validate()?;
    let train: Vec<&Vec<String>> = train.iter().filter(|s| !s.is_empty()).collect();
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let vocab = Vocab::build(
        &[BOS, EOS, UNK],
        train.iter().flat_map(|s| s.iter().map(String::as_str)),
        config.min_freq,
    );
    let mut lm = BiRnnLm::new(config.clone(), vocab)?;
    let train_owned: Vec<Vec<String>> = train.iter().map(|s| (*s).clone()).collect();
    let dev: Vec<Vec<String>> = dev.iter().filter(|s| !s.is_empty()).cloned().collect();
    let mut rng = NlgRng::seed_from_u64(config.seed ^ 0x1e3);
    let mut adam = AdamState::new(&lm.params, config.lr);
    let mut grads = Gradients::zeros_like(&lm.params);
    let mut best: Option<(f64, ModelParams)> = None;
    let mut log = Vec::with_capacity(config.passes);
    let mut order: Vec<usize> = (0..train_owned.len()).collect();
    for pass in 1..=config.passes {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch) {
            grads.zero();
            for &i in batch {
                let l = lm.both_losses(&train_owned[i], Some(&mut grads))?;
                if !l.is_finite() {
                    return Err(Error::NonFinite(format!("LM loss at pass {pass}, sentence {i}")));
                }
            }
            grads.scale(1.0 / batch.len() as f64);
            grads.clip_global_norm(config.clip_norm);
            adam.step(&mut lm.params, &grads)?;
        }
        let train_ppl = lm.perplexity(&train_owned)?;
        let dev_ppl = if dev.is_empty() { train_ppl } else { lm.perplexity(&dev)? };
        let kept = best.as_ref().map_or(true, |(b, _)| dev_ppl < *b);
        if kept {
            best = Some((dev_ppl, lm.params.clone()));
        }
        log.push(LmRecord {
            pass,
            train_perplexity: train_ppl,
            dev_perplexity: dev_ppl,
            kept,
        });
    }
    if let Some((_, params)) = best {
        lm.params.copy_from(&params)?;
    }
    Ok((lm, log))
}

/// Original texts with each placeholder span merged into one token (when
/// `merge` is set), so the LM sees gold surface forms as units.
pub fn lm_sentences(instances: &[Instance], merge: bool) -> Result<Vec<Vec<String>>> {
    instances
        .iter()
        .map(|inst| {
            if !merge {
                return Ok(inst.text.clone());
            }
            let spans = inst.spans()?;
            let mut out = Vec::with_capacity(inst.delex_text.len());
            let mut pos = 0;
            let mut spans = spans.iter().peekable();
            for j in 0..inst.delex_text.len() {
                if let Some(span) = spans.next_if(|s| s.delex_index == j) {
                    out.push(inst.text[span.start..span.start + span.len].join(" "));
                    pos = span.start + span.len;
                } else {
                    out.push(inst.text[pos].clone());
                    pos += 1;
                }
            }
            Ok(out)
        })
        .collect()
}

/// Draws a seed for the random strategy from a master seed and an index,
/// so sentence order does not change individual choices.
pub fn sentence_seed(seed: u64, index: usize) -> u64 {
    let mut rng = NlgRng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng.gen()
}
