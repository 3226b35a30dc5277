//! Word-overlap metrics, slot error rate and paired bootstrap resampling.
//!
//! Tokens are compared as given; no re-tokenization or case folding.
//! BLEU follows sacreBLEU's corpus statistics, NIST follows NLTK's
//! `corpus_nist`, ROUGE-L and CIDEr follow the COCO caption evaluation code.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::da::{placeholder_slot, DelexPolicy, DialogueAct};
use crate::error::{Error, Result};

pub const BLEU_ORDER: usize = 4;
pub const NIST_ORDER: usize = 5;
pub const ROUGE_BETA: f64 = 1.2;
pub const CIDER_ORDER: usize = 4;
pub const CIDER_SIGMA: f64 = 6.0;

/// One hypothesis with its references.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalPair {
    pub hyp: Vec<String>,
    pub refs: Vec<Vec<String>>,
}

impl EvalPair {
    pub fn new(hyp: Vec<String>, refs: Vec<Vec<String>>) -> Self {
        EvalPair { hyp, refs }
    }

    /// Splits both sides on whitespace.
    pub fn from_text(hyp: &str, refs: &[&str]) -> Self {
        let split = |s: &str| s.split_whitespace().map(str::to_owned).collect();
        EvalPair {
            hyp: split(hyp),
            refs: refs.iter().map(|r| split(r)).collect(),
        }
    }
}

fn check_corpus(pairs: &[EvalPair]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if pairs.iter().any(|p| p.refs.is_empty()) {
        return Err(Error::invalid("every hypothesis needs at least one reference"));
    }
    Ok(())
}

fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> BTreeMap<Vec<&str>, usize> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts
                .entry(w.iter().map(AsRef::as_ref).collect())
                .or_insert(0) += 1;
        }
    }
    counts
}

fn counter<K: Ord, I: IntoIterator<Item = K>>(items: I) -> BTreeMap<K, usize> {
    let mut c = BTreeMap::new();
    for k in items {
        *c.entry(k).or_insert(0) += 1;
    }
    c
}

// ---------------------------------------------------------------------------
// BLEU

/// Sufficient statistics of corpus BLEU for one or more segments.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuStats {
    pub matches: [u64; BLEU_ORDER],
    pub totals: [u64; BLEU_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl BleuStats {
    pub fn segment(pair: &EvalPair) -> BleuStats {
        let mut s = BleuStats {
            hyp_len: pair.hyp.len() as u64,
            ..Default::default()
        };
        // closest reference length, shorter one on ties
        s.ref_len = pair
            .refs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| (l.abs_diff(pair.hyp.len()), l))
            .unwrap_or(0) as u64;
        for n in 1..=BLEU_ORDER {
            let hyp = ngram_counts(&pair.hyp, n);
            let mut max_ref: BTreeMap<Vec<&str>, usize> = BTreeMap::new();
            for r in &pair.refs {
                for (g, c) in ngram_counts(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            s.matches[n - 1] = hyp
                .iter()
                .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)) as u64)
                .sum();
            s.totals[n - 1] = pair.hyp.len().saturating_sub(n - 1) as u64;
        }
        s
    }

    pub fn add(&mut self, other: &BleuStats) {
        for n in 0..BLEU_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    /// Unsmoothed BLEU-4 as a percentage; zero if any order has no match.
    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 || (0..BLEU_ORDER).any(|n| self.matches[n] == 0 || self.totals[n] == 0) {
            return 0.0;
        }
        let bp = if self.hyp_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        } else {
            1.0
        };
        let log_prec: f64 = (0..BLEU_ORDER)
            .map(|n| (self.matches[n] as f64 / self.totals[n] as f64).ln())
            .sum::<f64>()
            / BLEU_ORDER as f64;
        100.0 * bp * log_prec.exp()
    }
}

pub fn bleu(pairs: &[EvalPair]) -> Result<f64> {
    check_corpus(pairs)?;
    let mut total = BleuStats::default();
    for p in pairs {
        total.add(&BleuStats::segment(p));
    }
    Ok(total.score())
}

// ---------------------------------------------------------------------------
// NIST

/// Information-weighted n-gram precision (n ≤ 5) with the NIST brevity
/// penalty. Weights come from reference n-gram counts:
/// `info(w₁…wₙ) = log₂(count(w₁…wₙ₋₁) / count(w₁…wₙ))`, with the total
/// reference word count standing in for the empty prefix.
pub fn nist(pairs: &[EvalPair]) -> Result<f64> {
    check_corpus(pairs)?;
    let mut freq: BTreeMap<Vec<&str>, usize> = BTreeMap::new();
    let mut ref_words = 0usize;
    for p in pairs {
        for r in &p.refs {
            for n in 1..=NIST_ORDER {
                for (g, c) in ngram_counts(r, n) {
                    *freq.entry(g).or_insert(0) += c;
                }
            }
            ref_words += r.len();
        }
    }
    let info = |g: &Vec<&str>| -> f64 {
        let prefix = &g[..g.len() - 1];
        let num = if prefix.is_empty() {
            ref_words
        } else {
            freq.get(prefix).copied().unwrap_or(ref_words)
        };
        (num as f64 / freq[g] as f64).log2()
    };

    let (mut sys_len, mut ref_len) = (0usize, 0usize);
    let mut score = 0.0;
    for n in 1..=NIST_ORDER {
        let (mut num, mut den) = (0.0, 0usize);
        for p in pairs {
            let hyp = ngram_counts(&p.hyp, n);
            // best reference by (precision, numerator, denominator, length)
            let mut best: Option<(f64, f64, usize, usize)> = None;
            for r in &p.refs {
                let refc = ngram_counts(r, n);
                let numer: f64 = hyp
                    .iter()
                    .filter_map(|(g, &c)| refc.get(g).map(|&rc| info(g) * c.min(rc) as f64))
                    .sum();
                let denom: usize = hyp.values().sum();
                let prec = if denom == 0 { 0.0 } else { numer / denom as f64 };
                let cand = (prec, numer, denom, r.len());
                if best.map_or(true, |b| {
                    (cand.0, cand.1, cand.2, cand.3).partial_cmp(&(b.0, b.1, b.2, b.3)) == Some(std::cmp::Ordering::Greater)
                }) {
                    best = Some(cand);
                }
            }
            let (_, numer, denom, rl) = best.expect("at least one reference");
            num += numer;
            den += denom;
            if n == 1 {
                ref_len += rl;
                sys_len += p.hyp.len();
            }
        }
        if den > 0 {
            score += num / den as f64;
        }
    }
    Ok(score * nist_length_penalty(ref_len, sys_len))
}

fn nist_length_penalty(ref_len: usize, sys_len: usize) -> f64 {
    if ref_len == 0 {
        return 0.0;
    }
    let ratio = sys_len as f64 / ref_len as f64;
    if ratio > 0.0 && ratio < 1.0 {
        let beta = 0.5f64.ln() / 1.5f64.ln().powi(2);
        (beta * ratio.ln().powi(2)).exp()
    } else {
        ratio.clamp(0.0, 1.0)
    }
}

// ---------------------------------------------------------------------------
// ROUGE-L

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Segment ROUGE-L F-measure in `[0, 1]`, best precision and best recall
/// taken over references independently.
pub fn rouge_l_segment(pair: &EvalPair) -> f64 {
    if pair.hyp.is_empty() {
        return 0.0;
    }
    let (mut p, mut r) = (0.0f64, 0.0f64);
    for reference in &pair.refs {
        let l = lcs_len(reference, &pair.hyp) as f64;
        p = p.max(l / pair.hyp.len() as f64);
        if !reference.is_empty() {
            r = r.max(l / reference.len() as f64);
        }
    }
    if p == 0.0 || r == 0.0 {
        return 0.0;
    }
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * r / (r + b2 * p)
}

/// Mean segment ROUGE-L, as a percentage.
pub fn rouge_l(pairs: &[EvalPair]) -> Result<f64> {
    check_corpus(pairs)?;
    Ok(100.0 * pairs.iter().map(rouge_l_segment).sum::<f64>() / pairs.len() as f64)
}

// ---------------------------------------------------------------------------
// METEOR, exact matches only

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeteorParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for MeteorParams {
    fn default() -> Self {
        MeteorParams {
            alpha: 0.85,
            beta: 0.2,
            gamma: 0.6,
        }
    }
}

/// Node budget of the chunk-minimizing alignment search; past it the best
/// alignment found so far is used.
pub const METEOR_SEARCH_BUDGET: usize = 200_000;

/// Number of chunks of the alignment with the most exact matches and, among
/// those, the fewest chunks. Returns `(matches, chunks)`.
pub fn meteor_alignment<T: AsRef<str>>(hyp: &[T], reference: &[T]) -> (usize, usize) {
    let h: Vec<&str> = hyp.iter().map(AsRef::as_ref).collect();
    let r: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    let hc = counter(h.iter().copied());
    let rc = counter(r.iter().copied());
    let matches: usize = hc.iter().map(|(w, &c)| c.min(rc.get(w).copied().unwrap_or(0))).sum();
    if matches == 0 {
        return (0, 0);
    }
    let mut positions: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (j, w) in r.iter().enumerate() {
        positions.entry(w).or_default().push(j);
    }
    // remaining[i]: matches still needed for the word at i, given the
    // occurrences left in hyp from position i on
    let mut state = Search {
        h: &h,
        positions: &positions,
        used: vec![false; r.len()],
        need: hc
            .iter()
            .map(|(w, &c)| (*w, c.min(rc.get(w).copied().unwrap_or(0))))
            .collect(),
        left: hc.clone(),
        best: usize::MAX,
        nodes: 0,
    };
    state.run(0, None, 0);
    (matches, state.best)
}

struct Search<'a> {
    h: &'a [&'a str],
    positions: &'a BTreeMap<&'a str, Vec<usize>>,
    used: Vec<bool>,
    need: BTreeMap<&'a str, usize>,
    left: BTreeMap<&'a str, usize>,
    best: usize,
    nodes: usize,
}

impl<'a> Search<'a> {
    fn run(&mut self, i: usize, prev: Option<usize>, chunks: usize) {
        self.nodes += 1;
        if chunks >= self.best {
            return;
        }
        if i == self.h.len() {
            self.best = chunks;
            return;
        }
        if self.nodes > METEOR_SEARCH_BUDGET && self.best != usize::MAX {
            return;
        }
        let w = self.h[i];
        let need = self.need.get(w).copied().unwrap_or(0);
        let left = self.left[w];
        *self.left.get_mut(w).unwrap() -= 1;
        if need > 0 {
            // continuing the current chunk first finds good bounds early
            let mut cands: Vec<usize> = self.positions[w].iter().copied().filter(|&j| !self.used[j]).collect();
            if let Some(p) = prev {
                cands.sort_by_key(|&j| j != p + 1);
            }
            for j in cands {
                let extends = prev.is_some_and(|p| j == p + 1);
                self.used[j] = true;
                *self.need.get_mut(w).unwrap() -= 1;
                self.run(i + 1, Some(j), chunks + usize::from(!extends));
                *self.need.get_mut(w).unwrap() += 1;
                self.used[j] = false;
            }
        }
        // leave this occurrence unaligned if enough occurrences remain
        if left > need {
            self.run(i + 1, None, chunks);
        }
        *self.left.get_mut(w).unwrap() += 1;
    }
}

/// Segment METEOR in `[0, 1]` against the best reference. The
/// fragmentation penalty is zero when hypothesis and reference align
/// completely as one chunk.
pub fn meteor_segment(pair: &EvalPair, params: &MeteorParams) -> f64 {
    pair.refs
        .iter()
        .map(|r| {
            let (m, ch) = meteor_alignment(&pair.hyp, r);
            if m == 0 {
                return 0.0;
            }
            let p = m as f64 / pair.hyp.len() as f64;
            let rec = m as f64 / r.len() as f64;
            let fmean = p * rec / (params.alpha * p + (1.0 - params.alpha) * rec);
            let frag = if ch == 1 && m == pair.hyp.len() && m == r.len() {
                0.0
            } else {
                ch as f64 / m as f64
            };
            fmean * (1.0 - params.gamma * frag.powf(params.beta))
        })
        .fold(0.0, f64::max)
}

/// Mean segment METEOR (exact matching), as a percentage.
pub fn meteor_exact(pairs: &[EvalPair]) -> Result<f64> {
    check_corpus(pairs)?;
    let params = MeteorParams::default();
    Ok(100.0 * pairs.iter().map(|p| meteor_segment(p, &params)).sum::<f64>() / pairs.len() as f64)
}

// ---------------------------------------------------------------------------
// CIDEr

fn cider_counts<T: AsRef<str>>(tokens: &[T]) -> BTreeMap<Vec<&str>, usize> {
    let mut all = BTreeMap::new();
    for n in 1..=CIDER_ORDER {
        all.extend(ngram_counts(tokens, n));
    }
    all
}

struct CiderVec<'a> {
    vec: [BTreeMap<Vec<&'a str>, f64>; CIDER_ORDER],
    norm: [f64; CIDER_ORDER],
    /// Number of bigrams, used for the length penalty like the COCO code.
    length: f64,
}

fn cider_vec<'a>(counts: &BTreeMap<Vec<&'a str>, usize>, df: &BTreeMap<Vec<&str>, f64>, log_docs: f64) -> CiderVec<'a> {
    let mut out = CiderVec {
        vec: Default::default(),
        norm: [0.0; CIDER_ORDER],
        length: 0.0,
    };
    for (g, &tf) in counts {
        let idf = log_docs - df.get(g).copied().unwrap_or(0.0).max(1.0).ln();
        let n = g.len() - 1;
        let v = tf as f64 * idf;
        out.norm[n] += v * v;
        if n == 1 {
            out.length += tf as f64;
        }
        out.vec[n].insert(g.clone(), v);
    }
    out.norm.iter_mut().for_each(|x| *x = x.sqrt());
    out
}

/// Per-segment CIDEr-D scores: tf-idf n-gram (1–4) cosine with clipped
/// hypothesis weights and a Gaussian length penalty, averaged over orders
/// and references, times 10. Document frequencies come from the references.
pub fn cider_segments(pairs: &[EvalPair]) -> Result<Vec<f64>> {
    check_corpus(pairs)?;
    let ref_counts: Vec<Vec<BTreeMap<Vec<&str>, usize>>> = pairs
        .iter()
        .map(|p| p.refs.iter().map(|r| cider_counts(r)).collect())
        .collect();
    let mut df: BTreeMap<Vec<&str>, f64> = BTreeMap::new();
    for refs in &ref_counts {
        let mut seen: Vec<&Vec<&str>> = refs.iter().flat_map(|r| r.keys()).collect();
        seen.sort();
        seen.dedup();
        for g in seen {
            *df.entry(g.clone()).or_insert(0.0) += 1.0;
        }
    }
    let log_docs = (pairs.len() as f64).ln();
    let mut scores = Vec::with_capacity(pairs.len());
    for (p, refs) in pairs.iter().zip(&ref_counts) {
        let hyp_counts = cider_counts(&p.hyp);
        let hyp = cider_vec(&hyp_counts, &df, log_docs);
        let mut total = [0.0; CIDER_ORDER];
        for rc in refs {
            let r = cider_vec(rc, &df, log_docs);
            let delta = hyp.length - r.length;
            for n in 0..CIDER_ORDER {
                let mut val: f64 = hyp.vec[n]
                    .iter()
                    .map(|(g, &hv)| {
                        let rv = r.vec[n].get(g).copied().unwrap_or(0.0);
                        hv.min(rv) * rv
                    })
                    .sum();
                if hyp.norm[n] != 0.0 && r.norm[n] != 0.0 {
                    val /= hyp.norm[n] * r.norm[n];
                }
                total[n] += val * (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
            }
        }
        let mean = total.iter().sum::<f64>() / CIDER_ORDER as f64;
        scores.push(10.0 * mean / refs.len() as f64);
    }
    Ok(scores)
}

pub fn cider(pairs: &[EvalPair]) -> Result<f64> {
    let s = cider_segments(pairs)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

// ---------------------------------------------------------------------------
// slot error rate

/// Placeholder comparison for one output.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerCounts {
    pub missing: usize,
    pub superfluous: usize,
    pub expected: usize,
}

impl SerCounts {
    pub fn errors(&self) -> usize {
        self.missing + self.superfluous
    }

    /// Percentage; zero when no slots are expected.
    pub fn rate(&self) -> f64 {
        if self.expected == 0 {
            0.0
        } else {
            100.0 * self.errors() as f64 / self.expected as f64
        }
    }
}

/// Compares placeholder occurrences in a delexicalized output with the
/// slots the DA expects as placeholders (multisets).
pub fn ser_counts<T: AsRef<str>>(hyp: &[T], da: &DialogueAct, policy: &DelexPolicy) -> SerCounts {
    let expected = counter(policy.expected_placeholders(da));
    let produced = counter(hyp.iter().filter_map(|t| placeholder_slot(t.as_ref())));
    let missing = expected
        .iter()
        .map(|(s, &c)| c.saturating_sub(produced.get(s).copied().unwrap_or(0)))
        .sum();
    let superfluous = produced
        .iter()
        .map(|(s, &c)| c.saturating_sub(expected.get(s).copied().unwrap_or(0)))
        .sum();
    SerCounts {
        missing,
        superfluous,
        expected: expected.values().sum(),
    }
}

pub fn ser<T: AsRef<str>>(hyp: &[T], da: &DialogueAct, policy: &DelexPolicy) -> f64 {
    ser_counts(hyp, da, policy).rate()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SerSummary {
    /// Total errors over total expected slots.
    pub corpus: f64,
    /// Mean of per-instance rates over instances expecting any slot.
    pub mean: f64,
    pub missing: usize,
    pub superfluous: usize,
    pub expected: usize,
}

pub fn summarize_ser(counts: &[SerCounts]) -> SerSummary {
    let mut s = SerSummary::default();
    let mut rates = Vec::new();
    for c in counts {
        s.missing += c.missing;
        s.superfluous += c.superfluous;
        s.expected += c.expected;
        if c.expected > 0 {
            rates.push(c.rate());
        }
    }
    if s.expected > 0 {
        s.corpus = 100.0 * (s.missing + s.superfluous) as f64 / s.expected as f64;
    }
    if !rates.is_empty() {
        s.mean = rates.iter().sum::<f64>() / rates.len() as f64;
    }
    s
}

// ---------------------------------------------------------------------------
// bootstrap

/// Paired bootstrap over instance indices: `corpus_scores(sample)` returns
/// the (A, B) corpus scores of a resample. The result is the fraction of
/// resamples where B scores at least as well as A, counting exact ties as
/// one half, so identical systems give 0.5.
pub fn bootstrap_with<F>(n: usize, resamples: usize, seed: u64, mut corpus_scores: F) -> Result<f64>
where
    F: FnMut(&[usize]) -> (f64, f64),
{
    if n == 0 {
        return Err(Error::EmptyCorpus);
    }
    if resamples == 0 {
        return Err(Error::invalid("bootstrap needs at least one resample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = vec![0usize; n];
    let mut wins = 0.0;
    for _ in 0..resamples {
        for s in sample.iter_mut() {
            *s = rng.gen_range(0..n);
        }
        let (a, b) = corpus_scores(&sample);
        if b > a {
            wins += 1.0;
        } else if b == a {
            wins += 0.5;
        }
    }
    Ok(wins / resamples as f64)
}

/// Bootstrap on per-instance scores, the corpus score being their mean.
pub fn bootstrap_test(a: &[f64], b: &[f64], resamples: usize, seed: u64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "paired scores differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    bootstrap_with(a.len(), resamples, seed, |idx| {
        let (sa, sb) = idx.iter().fold((0.0, 0.0), |(x, y), &i| (x + a[i], y + b[i]));
        (sa, sb)
    })
}

/// Bootstrap on corpus BLEU recomputed from per-instance statistics.
pub fn bootstrap_bleu(a: &[BleuStats], b: &[BleuStats], resamples: usize, seed: u64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid("paired statistics differ in length"));
    }
    bootstrap_with(a.len(), resamples, seed, |idx| {
        let (mut sa, mut sb) = (BleuStats::default(), BleuStats::default());
        for &i in idx {
            sa.add(&a[i]);
            sb.add(&b[i]);
        }
        (sa.score(), sb.score())
    })
}

// ---------------------------------------------------------------------------
// report

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceScores {
    pub bleu_stats: BleuStats,
    pub rouge_l: f64,
    pub meteor: f64,
    pub cider: f64,
    pub ser: Option<SerCounts>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu: f64,
    pub nist: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub cider: f64,
    pub ser: Option<SerSummary>,
    pub instances: Vec<InstanceScores>,
}

impl MetricReport {
    /// `ser` holds one entry per pair when slot errors can be computed
    /// (delexicalized outputs with their DAs).
    pub fn compute(pairs: &[EvalPair], ser: Option<&[SerCounts]>) -> Result<MetricReport> {
        check_corpus(pairs)?;
        if let Some(s) = ser {
            if s.len() != pairs.len() {
                return Err(Error::invalid("slot error counts do not match the pairs"));
            }
        }
        let params = MeteorParams::default();
        let ciders = cider_segments(pairs)?;
        let instances: Vec<InstanceScores> = pairs
            .iter()
            .enumerate()
            .map(|(i, p)| InstanceScores {
                bleu_stats: BleuStats::segment(p),
                rouge_l: 100.0 * rouge_l_segment(p),
                meteor: 100.0 * meteor_segment(p, &params),
                cider: ciders[i],
                ser: ser.map(|s| s[i]),
            })
            .collect();
        let mut stats = BleuStats::default();
        instances.iter().for_each(|s| stats.add(&s.bleu_stats));
        let n = pairs.len() as f64;
        Ok(MetricReport {
            bleu: stats.score(),
            nist: nist(pairs)?,
            rouge_l: instances.iter().map(|s| s.rouge_l).sum::<f64>() / n,
            meteor: instances.iter().map(|s| s.meteor).sum::<f64>() / n,
            cider: ciders.iter().sum::<f64>() / n,
            ser: ser.map(summarize_ser),
            instances,
        })
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>8}", "metric", "score");
        let _ = writeln!(out, "{:<10} {:>8.2}", "BLEU", self.bleu);
        let _ = writeln!(out, "{:<10} {:>8.4}", "NIST", self.nist);
        let _ = writeln!(out, "{:<10} {:>8.2}", "METEOR", self.meteor);
        let _ = writeln!(out, "{:<10} {:>8.2}", "ROUGE-L", self.rouge_l);
        let _ = writeln!(out, "{:<10} {:>8.4}", "CIDEr", self.cider);
        if let Some(s) = &self.ser {
            let _ = writeln!(out, "{:<10} {:>8.2}", "SER", s.corpus);
            let _ = writeln!(out, "{:<10} {:>8.2}", "SER-mean", s.mean);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::da::Registry;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn pairs(data: &[(&str, &str)]) -> Vec<EvalPair> {
        data.iter().map(|(h, r)| EvalPair::from_text(h, &[r])).collect()
    }

    fn da(text: &str) -> DialogueAct {
        crate::da::parse_da(text, &Registry::restaurant()).unwrap()
    }

    #[test]
    fn identical_corpus_is_perfect() {
        let p = pairs(&[
            ("X-name je levná restaurace v X-area .", "X-name je levná restaurace v X-area ."),
            ("hledáte restauraci na X-good_for_meal ?", "hledáte restauraci na X-good_for_meal ?"),
        ]);
        assert_abs_diff_eq!(bleu(&p).unwrap(), 100.0, epsilon = 1e-9);
        assert_abs_diff_eq!(rouge_l(&p).unwrap(), 100.0, epsilon = 1e-9);
        assert_abs_diff_eq!(meteor_exact(&p).unwrap(), 100.0, epsilon = 1e-9);
        assert!(nist(&p).unwrap() > 0.0);
    }

    #[test]
    fn no_fourgram_overlap_gives_zero_bleu() {
        let p = pairs(&[("a b c d e", "a b c x e"), ("f g h", "f g h")]);
        assert_eq!(bleu(&p).unwrap(), 0.0);
        assert!(bleu(&[]).is_err());
    }

    #[test]
    fn bleu_brevity_penalty() {
        let p = pairs(&[("a b c d", "a b c d e f g h")]);
        let want = 100.0 * (1.0f64 - 2.0).exp();
        assert_abs_diff_eq!(bleu(&p).unwrap(), want, epsilon = 1e-9);
    }

    #[test]
    fn nist_hand_computed() {
        // references "a b" and "a c": 4 words, counts a=2 b=1 c=1 ab=1 ac=1
        // info(a)=log2(4/2)=1, info(b)=info(c)=2, info(ab)=info(ac)=log2(2/1)=1
        let p = pairs(&[("a b", "a b"), ("a c", "a c")]);
        // unigrams: (1+2+1+2)/4 = 1.5; bigrams: (1+1)/2 = 1; higher orders empty
        assert_abs_diff_eq!(nist(&p).unwrap(), 2.5, epsilon = 1e-12);
        // a repeated sentence: every n-gram of count > 1 carries no information
        let p = pairs(&[("a b", "a b"), ("a b", "a b")]);
        // info(a)=log2(4/2)=1, info(b)=1, info(ab)=log2(2/2)=0
        assert_abs_diff_eq!(nist(&p).unwrap(), 1.0, epsilon = 1e-12);
        let p = pairs(&[("", "a b")]);
        assert_eq!(nist(&p).unwrap(), 0.0);
    }

    #[test]
    fn nist_short_hypothesis_penalized() {
        let full = pairs(&[("a b c d", "a b c d")]);
        let short = pairs(&[("a b", "a b c d")]);
        let ratio: f64 = 0.5;
        let beta = 0.5f64.ln() / 1.5f64.ln().powi(2);
        let bp = (beta * ratio.ln().powi(2)).exp();
        // unigram info: log2(4/1) = 2 each; bigram info: log2(1/1) = 0
        assert_abs_diff_eq!(nist(&short).unwrap(), 2.0 * bp, epsilon = 1e-12);
        assert_abs_diff_eq!(nist(&full).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn rouge_l_hand_computed() {
        let p = EvalPair::from_text("a b c d", &["a c e"]);
        // lcs 2, p = 0.5, r = 2/3
        let (pr, rc) = (0.5, 2.0 / 3.0);
        let b2 = 1.44;
        assert_abs_diff_eq!(rouge_l_segment(&p), (1.0 + b2) * pr * rc / (rc + b2 * pr), epsilon = 1e-15);
    }

    #[test]
    fn meteor_alignment_minimizes_chunks() {
        // aligning the first "a" of the reference would give 2 chunks
        let (m, ch) = meteor_alignment(&["a", "b", "c"], &["a", "x", "a", "b", "c"]);
        assert_eq!((m, ch), (3, 1));
        let (m, ch) = meteor_alignment(&["b", "a"], &["a", "b"]);
        assert_eq!((m, ch), (2, 2));
        assert_eq!(meteor_alignment(&["q"], &["a"]), (0, 0));
    }

    fn brute_force_chunks(h: &[&str], r: &[&str]) -> usize {
        // all injective alignments with the maximal number of matches
        fn rec(h: &[&str], r: &[&str], i: usize, used: &mut Vec<bool>, align: &mut Vec<Option<usize>>, best: &mut (usize, usize)) {
            if i == h.len() {
                let m = align.iter().flatten().count();
                let mut chunks = 0;
                let mut prev: Option<usize> = None;
                for a in align.iter() {
                    match (a, prev) {
                        (Some(j), Some(p)) if *j == p + 1 => {}
                        (Some(_), _) => chunks += 1,
                        _ => {}
                    }
                    prev = *a;
                }
                if m > best.0 || (m == best.0 && chunks < best.1) {
                    *best = (m, chunks);
                }
                return;
            }
            align.push(None);
            rec(h, r, i + 1, used, align, best);
            align.pop();
            for j in 0..r.len() {
                if !used[j] && r[j] == h[i] {
                    used[j] = true;
                    align.push(Some(j));
                    rec(h, r, i + 1, used, align, best);
                    align.pop();
                    used[j] = false;
                }
            }
        }
        let mut best = (0, usize::MAX);
        rec(h, r, 0, &mut vec![false; r.len()], &mut Vec::new(), &mut best);
        if best.0 == 0 { 0 } else { best.1 }
    }

    proptest! {
        #[test]
        fn meteor_alignment_matches_brute_force(
            h in prop::collection::vec(0..3usize, 1..7),
            r in prop::collection::vec(0..3usize, 1..7),
        ) {
            let words = ["a", "b", "c"];
            let h: Vec<&str> = h.iter().map(|&i| words[i]).collect();
            let r: Vec<&str> = r.iter().map(|&i| words[i]).collect();
            let (_, ch) = meteor_alignment(&h, &r);
            prop_assert_eq!(ch, brute_force_chunks(&h, &r));
        }

        #[test]
        fn corpus_scores_are_permutation_invariant(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let words = ["a", "b", "c", "d", "X-name", "."];
            let mut p: Vec<EvalPair> = (0..8)
                .map(|_| {
                    let r: Vec<String> = (0..rng.gen_range(4..9)).map(|_| words[rng.gen_range(0..6)].to_owned()).collect();
                    let mut h = r.clone();
                    h[rng.gen_range(0..r.len())] = words[rng.gen_range(0..6)].to_owned();
                    EvalPair::new(h, vec![r])
                })
                .collect();
            let before = MetricReport::compute(&p, None).unwrap();
            p.shuffle(&mut rng);
            let after = MetricReport::compute(&p, None).unwrap();
            prop_assert!((before.bleu - after.bleu).abs() < 1e-9);
            prop_assert!((before.nist - after.nist).abs() < 1e-9);
            prop_assert!((before.cider - after.cider).abs() < 1e-9);
            prop_assert!((before.rouge_l - after.rouge_l).abs() < 1e-9);
            prop_assert!((before.meteor - after.meteor).abs() < 1e-9);
        }

        #[test]
        fn ser_zero_iff_placeholder_multiset_matches(
            slots in prop::collection::vec(0..4usize, 1..5),
            extra in prop::collection::vec(0..4usize, 0..3),
            drop in prop::collection::vec(any::<bool>(), 5),
        ) {
            let names = ["name", "area", "food", "near"];
            let items: Vec<String> = slots.iter().enumerate().map(|(i, &s)| format!("{}=v{}", names[s], i)).collect();
            let d = da(&format!("inform({})", items.join(",")));
            let mut hyp: Vec<String> = slots
                .iter()
                .zip(&drop)
                .filter(|(_, &d)| !d)
                .map(|(&s, _)| format!("X-{}", names[s]))
                .collect();
            hyp.extend(extra.iter().map(|&s| format!("X-{}", names[s])));
            hyp.push("text".into());
            let mut want: Vec<&str> = slots.iter().map(|&s| names[s]).collect();
            let mut got: Vec<&str> = hyp.iter().filter_map(|t| placeholder_slot(t)).collect();
            want.sort_unstable();
            got.sort_unstable();
            let policy = DelexPolicy::default();
            prop_assert_eq!(ser(&hyp, &d, &policy) == 0.0, want == got);
        }
    }

    #[test]
    fn meteor_penalizes_fragmentation() {
        let params = MeteorParams::default();
        let straight = EvalPair::from_text("a b c d", &["a b c d e"]);
        let shuffled = EvalPair::from_text("b a d c", &["a b c d e"]);
        assert!(meteor_segment(&straight, &params) > meteor_segment(&shuffled, &params));
        // 4 matches, 1 chunk, P = 1, R = 0.8
        let (p, r) = (1.0, 0.8);
        let fmean = p * r / (0.85 * p + 0.15 * r);
        let want = fmean * (1.0 - 0.6 * 0.25f64.powf(0.2));
        assert_abs_diff_eq!(meteor_segment(&straight, &params), want, epsilon = 1e-12);
    }

    #[test]
    fn cider_single_pair_is_finite() {
        let p = pairs(&[("a b c", "a b d")]);
        let c = cider(&p).unwrap();
        assert!(c.is_finite());
        assert_eq!(c, 0.0);
    }

    #[test]
    fn ser_examples() {
        let policy = DelexPolicy::default();
        let d = da("inform(name=Ananta,area=Smíchov,food=Indian)");
        let full = ["X-name", "je", "v", "X-area", "a", "nabízí", "X-food"];
        assert_eq!(ser(&full, &d, &policy), 0.0);
        let two = ["X-name", "je", "v", "X-area"];
        assert_abs_diff_eq!(ser(&two, &d, &policy), 100.0 / 3.0, epsilon = 1e-12);
        let dup = ["X-name", "X-name", "X-area", "X-food"];
        assert_abs_diff_eq!(ser(&dup, &d, &policy), 100.0 / 3.0, epsilon = 1e-12);
        let kids = da("inform(name=Ananta,kids_allowed=yes,food=dont_care)");
        assert_eq!(ser_counts(&["X-name"], &kids, &policy), SerCounts { missing: 0, superfluous: 0, expected: 1 });
        let none = da("goodbye()");
        assert_eq!(ser_counts(&["X-name"], &none, &policy).rate(), 0.0);
    }

    #[test]
    fn ser_summary_both_conventions() {
        let counts = [
            SerCounts { missing: 1, superfluous: 0, expected: 1 },
            SerCounts { missing: 0, superfluous: 0, expected: 3 },
            SerCounts { missing: 0, superfluous: 1, expected: 0 },
        ];
        let s = summarize_ser(&counts);
        assert_abs_diff_eq!(s.corpus, 50.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.mean, 50.0, epsilon = 1e-12);
        let s = summarize_ser(&counts[..2]);
        assert_abs_diff_eq!(s.corpus, 25.0, epsilon = 1e-12);
    }

    #[test]
    fn bootstrap_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..200).map(|_| rng.gen::<f64>()).collect();
        let p = bootstrap_test(&a, &a, 1000, 1).unwrap();
        assert!((p - 0.5).abs() <= 0.05);
        let b: Vec<f64> = a.iter().map(|x| x - 0.1).collect();
        assert!(bootstrap_test(&a, &b, 1000, 1).unwrap() < 0.01);
        assert_eq!(bootstrap_test(&a, &b, 1000, 9).unwrap(), bootstrap_test(&a, &b, 1000, 9).unwrap());
        assert!(bootstrap_test(&a, &b[1..], 1000, 1).is_err());
    }

    #[test]
    fn report_table_lists_metrics() {
        let p = pairs(&[("a b c d", "a b c d"), ("a b", "a c")]);
        let d = da("inform(name=Ananta)");
        let s = vec![ser_counts(&["X-name"], &d, &DelexPolicy::default()); 2];
        let r = MetricReport::compute(&p, Some(&s)).unwrap();
        let t = r.to_table();
        for m in ["BLEU", "NIST", "METEOR", "ROUGE-L", "CIDEr", "SER"] {
            assert!(t.contains(m));
        }
        let json = serde_json::to_string(&r).unwrap();
        let back: MetricReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
