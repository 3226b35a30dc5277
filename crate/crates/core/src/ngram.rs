//! Backoff n-gram language model with interpolated Kneser-Ney smoothing.
//!
//! Training computes interpolated modified Kneser-Ney estimates and stores
//! them in backoff form: every observed n-gram keeps its interpolated
//! probability, every observed context keeps the interpolation weight of
//! its lower-order distribution. Scoring walks down the backoff chain.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};

use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

/// Discount used where count-of-count statistics are too sparse.
pub const FALLBACK_DISCOUNT: f64 = 0.75;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Entry {
    logprob: f64,
    backoff: f64,
}

#[derive(Clone, Debug)]
pub struct NGramModel {
    order: usize,
    words: Vec<String>,
    index: HashMap<String, u32>,
    /// `levels[k]` holds the `(k + 1)`-grams.
    levels: Vec<HashMap<Vec<u32>, Entry>>,
}

/// Discounts for adjusted counts of 1, 2 and 3+.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Discounts(pub [f64; 3]);

impl Discounts {
    /// Modified Kneser-Ney estimates from the counts-of-counts `n[0..4]`
    /// (how many n-grams occur exactly 1, 2, 3, 4 times).
    pub fn estimate(n: [u64; 4]) -> Discounts {
        if n.iter().any(|&c| c == 0) {
            return Discounts([FALLBACK_DISCOUNT; 3]);
        }
        let [n1, n2, n3, n4] = n.map(|c| c as f64);
        let y = n1 / (n1 + 2.0 * n2);
        let d = [
            1.0 - 2.0 * y * n2 / n1,
            2.0 - 3.0 * y * n3 / n2,
            3.0 - 4.0 * y * n4 / n3,
        ];
        if d.iter().enumerate().any(|(i, &v)| !(v > 0.0 && v <= (i + 1) as f64)) {
            return Discounts([FALLBACK_DISCOUNT; 3]);
        }
        Discounts(d)
    }

    pub fn for_count(&self, count: u64) -> f64 {
        match count {
            0 => 0.0,
            1 => self.0[0],
            2 => self.0[1],
            _ => self.0[2],
        }
    }
}

/// Kneser-Ney adjusted counts per level: raw counts at the highest order
/// and for n-grams starting with `<s>`, distinct left extensions otherwise.
pub(crate) fn adjusted_counts(corpus: &[Vec<u32>], order: usize, bos: u32) -> Vec<HashMap<Vec<u32>, u64>> {
    let mut raw: Vec<HashMap<Vec<u32>, u64>> = vec![HashMap::new(); order];
    for sent in corpus {
        for end in 1..sent.len() {
            for n in 1..=order.min(end + 1) {
                *raw[n - 1].entry(sent[end + 1 - n..=end].to_vec()).or_default() += 1;
            }
        }
    }
    let mut adjusted = raw.clone();
    for k in 0..order - 1 {
        let mut left_ext: HashMap<Vec<u32>, HashSet<u32>> = HashMap::new();
        for gram in raw[k + 1].keys() {
            left_ext.entry(gram[1..].to_vec()).or_default().insert(gram[0]);
        }
        for (gram, count) in adjusted[k].iter_mut() {
            if gram[0] != bos {
                *count = left_ext.get(gram).map_or(0, |s| s.len() as u64);
            }
        }
        adjusted[k].retain(|_, c| *c > 0);
    }
    adjusted
}

/// How discounts are chosen at each level.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Discounting {
    /// Estimated from counts-of-counts, falling back to
    /// [`FALLBACK_DISCOUNT`] when they are too sparse.
    #[default]
    ModifiedKneserNey,
    /// The same discount for every count at every level.
    Absolute(f64),
}

impl NGramModel {
    /// Trains on whitespace-free token sequences. Sentence boundaries are
    /// added here.
    pub fn train<S: AsRef<str>>(corpus: &[Vec<S>], order: usize) -> Result<Self> {
        Self::train_with(corpus, order, Discounting::default())
    }

    pub fn train_with<S: AsRef<str>>(corpus: &[Vec<S>], order: usize, discounting: Discounting) -> Result<Self> {
        if let Discounting::Absolute(d) = discounting {
            if !(d > 0.0 && d <= 1.0) {
                return Err(Error::invalid(format!("absolute discount must be in (0, 1], got {d}")));
            }
        }
        if order == 0 {
            return Err(Error::invalid("n-gram order must be at least 1"));
        }
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut words: Vec<String> = vec![BOS.into(), EOS.into(), UNK.into()];
        let mut seen: HashSet<&str> = words.iter().map(String::as_str).collect::<HashSet<_>>();
        let mut sorted: Vec<&str> = Vec::new();
        for sent in corpus {
            for tok in sent {
                if seen.insert(tok.as_ref()) {
                    sorted.push(tok.as_ref());
                }
            }
        }
        sorted.sort_unstable();
        words.extend(sorted.into_iter().map(str::to_owned));
        let index: HashMap<String, u32> = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        let (bos, eos) = (0u32, 1u32);

        let encoded: Vec<Vec<u32>> = corpus
            .iter()
            .map(|sent| {
                let mut v = Vec::with_capacity(sent.len() + 2);
                v.push(bos);
                v.extend(sent.iter().map(|t| index[t.as_ref()]));
                v.push(eos);
                v
            })
            .collect();

        let adjusted = adjusted_counts(&encoded, order, bos);
        let discounts: Vec<Discounts> = adjusted
            .iter()
            .map(|level| {
                if let Discounting::Absolute(d) = discounting {
                    return Discounts([d; 3]);
                }
                let mut n = [0u64; 4];
                for &c in level.values() {
                    if (1..=4).contains(&c) {
                        n[c as usize - 1] += 1;
                    }
                }
                Discounts::estimate(n)
            })
            .collect();

        // Per-context totals and interpolation weights at every level.
        let mut gammas: Vec<HashMap<Vec<u32>, f64>> = Vec::with_capacity(order);
        let mut totals: Vec<HashMap<Vec<u32>, f64>> = Vec::with_capacity(order);
        for (k, level) in adjusted.iter().enumerate() {
            let mut total: HashMap<Vec<u32>, f64> = HashMap::new();
            let mut mass: HashMap<Vec<u32>, f64> = HashMap::new();
            for (gram, &c) in level {
                let ctx = gram[..gram.len() - 1].to_vec();
                *total.entry(ctx.clone()).or_default() += c as f64;
                *mass.entry(ctx).or_default() += discounts[k].for_count(c);
            }
            let gamma = mass
                .into_iter()
                .map(|(ctx, m)| {
                    let t = total[&ctx];
                    (ctx, m / t)
                })
                .collect();
            gammas.push(gamma);
            totals.push(total);
        }

        let predictable = words.len() - 1; // everything but <s>
        let mut levels: Vec<HashMap<Vec<u32>, Entry>> = vec![HashMap::new(); order];
        // unigrams: interpolate with the uniform distribution
        let uni_gamma = gammas[0].get(&Vec::new()).copied().unwrap_or(1.0);
        let uni_total = totals[0].get(&Vec::new()).copied().unwrap_or(0.0);
        for w in 0..words.len() as u32 {
            let logprob = if w == bos {
                f64::NEG_INFINITY
            } else {
                let c = adjusted[0].get(&vec![w]).copied().unwrap_or(0);
                let discounted = if uni_total > 0.0 {
                    (c as f64 - discounts[0].for_count(c)) / uni_total
                } else {
                    0.0
                };
                (discounted + uni_gamma / predictable as f64).ln()
            };
            levels[0].insert(
                vec![w],
                Entry {
                    logprob,
                    backoff: 0.0,
                },
            );
        }
        for k in 1..order {
            let mut level = HashMap::with_capacity(adjusted[k].len());
            for (gram, &c) in &adjusted[k] {
                let ctx = &gram[..gram.len() - 1];
                let lower = Self::lookup(&levels, &gram[1..]);
                let discounted = (c as f64 - discounts[k].for_count(c)) / totals[k][ctx];
                let p = discounted + gammas[k][ctx] * lower.exp();
                level.insert(
                    gram.clone(),
                    Entry {
                        logprob: p.ln(),
                        backoff: 0.0,
                    },
                );
            }
            levels[k] = level;
        }
        // backoff weights of contexts
        for k in 1..order {
            for (ctx, &gamma) in &gammas[k] {
                if let Some(e) = levels[k - 1].get_mut(ctx) {
                    e.backoff = gamma.ln();
                }
            }
        }
        Ok(NGramModel {
            order,
            words,
            index,
            levels,
        })
    }

    /// ln p(w | history) where `gram = history + [w]` using the backoff
    /// chain over already computed levels.
    fn lookup(levels: &[HashMap<Vec<u32>, Entry>], gram: &[u32]) -> f64 {
        let mut backoff = 0.0;
        let mut start = 0;
        loop {
            let g = &gram[start..];
            if let Some(e) = levels.get(g.len() - 1).and_then(|l| l.get(g)) {
                return backoff + e.logprob;
            }
            let ctx = &gram[start..gram.len() - 1];
            if let Some(e) = levels.get(ctx.len().wrapping_sub(1)).and_then(|l| l.get(ctx)) {
                backoff += e.backoff;
            }
            start += 1;
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Predictable vocabulary: every known token plus `</s>` and `<unk>`.
    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.words.iter().skip(1).map(String::as_str)
    }

    fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(2)
    }

    /// ln p(word | history); only the last `order - 1` history tokens
    /// matter. `history` should start with `<s>` at sentence start.
    pub fn log_prob<S: AsRef<str>>(&self, history: &[S], word: &str) -> f64 {
        let keep = history.len().min(self.order - 1);
        let mut gram: Vec<u32> = history[history.len() - keep..]
            .iter()
            .map(|t| self.id(t.as_ref()))
            .collect();
        gram.push(self.id(word));
        Self::lookup(&self.levels, &gram)
    }

    /// Natural-log probability of the sentence including `</s>`.
    pub fn score<S: AsRef<str>>(&self, tokens: &[S]) -> f64 {
        let mut history: Vec<&str> = vec![BOS];
        let mut total = 0.0;
        for tok in tokens.iter().map(AsRef::as_ref).chain(std::iter::once(EOS)) {
            total += self.log_prob(&history, tok);
            history.push(tok);
        }
        total
    }

    pub fn perplexity<S: AsRef<str>>(&self, corpus: &[Vec<S>]) -> f64 {
        let (mut logp, mut n) = (0.0, 0usize);
        for sent in corpus {
            logp += self.score(sent);
            n += sent.len() + 1;
        }
        (-logp / n.max(1) as f64).exp()
    }

    /// Plain-text listing: one `level<TAB>n-gram<TAB>ln p<TAB>ln backoff`
    /// row per entry, sorted by level and n-gram.
    pub fn to_listing(&self) -> String {
        let mut out = format!("# order\t{}\n", self.order);
        for (k, level) in self.levels.iter().enumerate() {
            let mut rows: BTreeMap<String, Entry> = BTreeMap::new();
            for (gram, e) in level {
                let text: Vec<&str> = gram.iter().map(|&i| self.words[i as usize].as_str()).collect();
                rows.insert(text.join(" "), *e);
            }
            for (gram, e) in rows {
                let _ = writeln!(out, "{}\t{}\t{}\t{}", k + 1, gram, e.logprob, e.backoff);
            }
        }
        out
    }

    pub fn read_listing<R: Read>(reader: R) -> Result<Self> {
        let mut order = None;
        let mut rows: Vec<(usize, Vec<String>, Entry)> = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if let Some(rest) = line.strip_prefix("# order\t") {
                order = Some(
                    rest.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::format(lineno, "bad order"))?,
                );
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(Error::format(lineno, "expected 4 tab-separated columns"));
            }
            let level: usize = cols[0].parse().map_err(|_| Error::format(lineno, "bad level"))?;
            let gram: Vec<String> = cols[1].split(' ').map(str::to_owned).collect();
            if gram.len() != level || level == 0 {
                return Err(Error::format(lineno, "n-gram length does not match its level"));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::format(lineno, format!("bad number `{s}`")))
            };
            rows.push((
                level,
                gram,
                Entry {
                    logprob: num(cols[2])?,
                    backoff: num(cols[3])?,
                },
            ));
        }
        let order = order.ok_or_else(|| Error::format(1, "missing order header"))?;
        let mut words: Vec<String> = vec![BOS.into(), EOS.into(), UNK.into()];
        let mut unigram_words: Vec<String> = rows
            .iter()
            .filter(|r| r.0 == 1 && ![BOS, EOS, UNK].contains(&r.1[0].as_str()))
            .map(|r| r.1[0].clone())
            .collect();
        unigram_words.sort_unstable();
        words.extend(unigram_words);
        let index: HashMap<String, u32> = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        let mut levels = vec![HashMap::new(); order];
        for (level, gram, e) in rows {
            if level > order {
                return Err(Error::format(0, format!("{level}-gram in an order-{order} model")));
            }
            let ids = gram
                .iter()
                .map(|w| {
                    index
                        .get(w)
                        .copied()
                        .ok_or_else(|| Error::format(0, format!("`{w}` has no unigram entry")))
                })
                .collect::<Result<Vec<u32>>>()?;
            levels[level - 1].insert(ids, e);
        }
        Ok(NGramModel {
            order,
            words,
            index,
            levels,
        })
    }
}

/// `p_i = exp(s_i / T) / Σ_j exp(s_j / T)`, stabilized by subtracting the
/// maximum.
pub fn softmax_over_scores(scores: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::invalid("softmax over no scores"));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {bad}")));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| ((s - max) / temperature).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}
