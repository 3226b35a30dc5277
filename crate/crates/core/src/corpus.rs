//! Corpus-level processing: deduplication, expansion back to a target DA
//! distribution by LM-weighted sampling, signature-disjoint splitting, and
//! summary statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::da::{da_signature, placeholder_slot, DaSignature, DelexPolicy, DialogueAct, Substitutions};
use crate::delex::{delexicalize_text, relexicalize, relexicalize_tagged, ConsistencyReport, DelexOptions, Instance, RelexHint};
use crate::error::{Error, Result};
use crate::morph::{FormLexicon, MorphTag};
use crate::ngram::{softmax_over_scores, NGramModel};

/// FNV-1a; used to derive per-signature random streams that do not depend
/// on iteration order or platform.
pub fn stable_hash(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn signature_rng(seed: u64, sig: &DaSignature) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stable_hash(sig.as_str()));
    rng
}

// ---------------------------------------------------------------------------
// preparation

/// A dataset row before delexicalization; `lemmas` and `tags` are aligned
/// with `text` and may be empty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawInstance {
    pub da: DialogueAct,
    pub text: Vec<String>,
    pub lemmas: Vec<String>,
    pub tags: Vec<MorphTag>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Prepared {
    pub instances: Vec<Instance>,
    pub report: ConsistencyReport,
}

/// Delexicalizes every row and carries lemmas over to the delexicalized
/// text (placeholders are their own lemma). Rows with unmentioned values
/// are kept and listed in the report.
pub fn prepare(raw: &[RawInstance], lex: &FormLexicon, opts: &DelexOptions) -> Result<Prepared> {
    let mut out = Prepared::default();
    for (idx, r) in raw.iter().enumerate() {
        if !r.lemmas.is_empty() && r.lemmas.len() != r.text.len() {
            return Err(Error::invalid(format!("row {}: {} lemmas for {} tokens", idx + 1, r.lemmas.len(), r.text.len())));
        }
        if !r.tags.is_empty() && r.tags.len() != r.text.len() {
            return Err(Error::invalid(format!("row {}: {} tags for {} tokens", idx + 1, r.tags.len(), r.text.len())));
        }
        let d = delexicalize_text(&r.text, &r.da, lex, opts);
        out.report.instances += 1;
        if d.tie_breaks > 0 {
            out.report.tie_breaks.push(idx);
        }
        if !d.missing.is_empty() {
            for slot in &d.missing {
                *out.report.missing_per_slot.entry(slot.clone()).or_default() += 1;
            }
            out.report.missing.push((idx, d.missing.clone()));
        }
        let mut lemmas = Vec::with_capacity(d.tokens.len());
        let mut pos = 0;
        let mut matches = d.matches.iter().peekable();
        for tok in &d.tokens {
            if let Some(m) = matches.next_if(|m| m.start == pos && placeholder_slot(tok).is_some()) {
                lemmas.push(tok.clone());
                pos += m.len;
            } else {
                lemmas.push(r.lemmas.get(pos).unwrap_or(&r.text[pos]).clone());
                pos += 1;
            }
        }
        out.instances.push(Instance {
            da: r.da.clone(),
            text: r.text.clone(),
            delex_text: d.tokens,
            lemmas,
            tags: r.tags.clone(),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// deduplication

/// One distinct delexicalized text of a signature.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UniqueText {
    pub delex_text: Vec<String>,
    /// Index of the first instance with this text.
    pub source: usize,
    pub count: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SignatureGroup {
    pub uniques: Vec<UniqueText>,
    pub instances: usize,
}

/// Groups instances by signature; within a group, distinct delexicalized
/// texts in order of first appearance with their counts.
pub fn deduplicate(instances: &[Instance], policy: &DelexPolicy) -> BTreeMap<DaSignature, SignatureGroup> {
    let mut groups: BTreeMap<DaSignature, SignatureGroup> = BTreeMap::new();
    let mut seen: HashMap<(DaSignature, Vec<String>), (usize, usize)> = HashMap::new();
    for (i, inst) in instances.iter().enumerate() {
        let sig = da_signature(&inst.da, policy);
        let group = groups.entry(sig.clone()).or_default();
        group.instances += 1;
        match seen.get(&(sig.clone(), inst.delex_text.clone())) {
            Some(&(_, k)) => group.uniques[k].count += 1,
            None => {
                seen.insert((sig, inst.delex_text.clone()), (i, group.uniques.len()));
                group.uniques.push(UniqueText {
                    delex_text: inst.delex_text.clone(),
                    source: i,
                    count: 1,
                });
            }
        }
    }
    groups
}

/// First instance of every distinct (signature, delexicalized text).
pub fn unique_instances(instances: &[Instance], policy: &DelexPolicy) -> Vec<Instance> {
    let mut sources: Vec<usize> = deduplicate(instances, policy)
        .values()
        .flat_map(|g| g.uniques.iter().map(|u| u.source))
        .collect();
    sources.sort_unstable();
    sources.into_iter().map(|i| instances[i].clone()).collect()
}

// ---------------------------------------------------------------------------
// targets and review files

/// Instance count per signature.
pub type Targets = BTreeMap<DaSignature, usize>;

pub fn targets_from_instances(instances: &[Instance], policy: &DelexPolicy) -> Targets {
    let mut t = Targets::new();
    for inst in instances {
        *t.entry(da_signature(&inst.da, policy)).or_default() += 1;
    }
    t
}

/// `signature<TAB>count` per line; `#` starts a comment.
pub fn read_targets<R: Read>(reader: R) -> Result<Targets> {
    let mut t = Targets::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (sig, count) = line
            .rsplit_once('\t')
            .ok_or_else(|| Error::format(i + 1, "expected `signature<TAB>count`"))?;
        let count: usize = count
            .trim()
            .parse()
            .map_err(|_| Error::format(i + 1, format!("bad count `{count}`")))?;
        if t.insert(DaSignature(sig.to_owned()), count).is_some() {
            return Err(Error::format(i + 1, format!("duplicate signature `{sig}`")));
        }
    }
    Ok(t)
}

pub fn targets_to_string(targets: &Targets) -> String {
    let mut out = String::new();
    for (sig, n) in targets {
        let _ = writeln!(out, "{sig}\t{n}");
    }
    out
}

// ---------------------------------------------------------------------------
// expansion

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpansionConfig {
    pub seed: u64,
    pub temperature: f64,
    /// Divide each LM score by the number of predicted tokens.
    pub length_normalize: bool,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        ExpansionConfig {
            seed: 1,
            temperature: 1.0,
            length_normalize: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampledCopy {
    /// Index into the signature's unique list.
    pub unique: usize,
    /// New values of the delexicalized slots, in DA order.
    pub assignment: Substitutions,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignaturePlan {
    pub signature: DaSignature,
    pub uniques: Vec<UniqueText>,
    pub target: usize,
    pub probabilities: Vec<f64>,
    pub copies: Vec<SampledCopy>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionPlan {
    pub signatures: Vec<SignaturePlan>,
}

impl ExpansionPlan {
    pub fn total(&self) -> usize {
        self.signatures.iter().map(|s| s.uniques.len() + s.copies.len()).sum()
    }
}

/// Draws, per signature, `target − #uniques` copies from the softmax of the
/// uniques' LM scores, each with uniformly drawn lexicon values for its
/// delexicalized slots. Signatures without a target keep their uniques.
pub fn plan_expansion(
    instances: &[Instance],
    targets: &Targets,
    lm: &NGramModel,
    lex: &FormLexicon,
    policy: &DelexPolicy,
    config: &ExpansionConfig,
) -> Result<ExpansionPlan> {
    let groups = deduplicate(instances, policy);
    if let Some((sig, _)) = targets
        .iter()
        .find(|(sig, &n)| n > 0 && !groups.contains_key(*sig))
    {
        return Err(Error::invalid(format!("no texts for signature `{sig}` with a positive target")));
    }
    let mut plans = Vec::with_capacity(groups.len());
    for (sig, group) in groups {
        let target = targets.get(&sig).copied().unwrap_or(group.uniques.len());
        if target < group.uniques.len() {
            return Err(Error::invalid(format!(
                "target {target} for `{sig}` is below its {} unique texts",
                group.uniques.len()
            )));
        }
        let scores: Vec<f64> = group
            .uniques
            .iter()
            .map(|u| {
                let lemmas = &instances[u.source].lemmas;
                let s = lm.score(lemmas);
                if config.length_normalize {
                    s / (lemmas.len() + 1) as f64
                } else {
                    s
                }
            })
            .collect();
        let probabilities = softmax_over_scores(&scores, config.temperature)?;
        let mut rng = signature_rng(config.seed, &sig);
        let mut copies = Vec::with_capacity(target - group.uniques.len());
        if target > group.uniques.len() {
            let dist = WeightedIndex::new(&probabilities)
                .map_err(|e| Error::invalid(format!("sampling weights for `{sig}`: {e}")))?;
            for _ in group.uniques.len()..target {
                let unique = dist.sample(&mut rng);
                let source = &instances[group.uniques[unique].source];
                let assignment = source
                    .da
                    .slot_values()
                    .filter(|(slot, value)| policy.is_delexicalized(slot, value))
                    .map(|(slot, value)| {
                        let values = lex.values(slot);
                        let v = if values.is_empty() {
                            value.to_owned()
                        } else {
                            values[rng.gen_range(0..values.len())].to_owned()
                        };
                        (slot.to_owned(), v)
                    })
                    .collect();
                copies.push(SampledCopy { unique, assignment });
            }
        }
        plans.push(SignaturePlan {
            signature: sig,
            uniques: group.uniques,
            target,
            probabilities,
            copies,
        });
    }
    Ok(ExpansionPlan { signatures: plans })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Expansion {
    pub instances: Vec<Instance>,
    /// `(DA, text)` of every sampled copy, for manual review.
    pub review: Vec<(String, String)>,
}

/// Builds the instances of a plan: each signature's unique texts followed
/// by its relexicalized copies. Copies keep the source's case and number
/// for every placeholder when the source carries tags.
pub fn materialize(
    plan: &ExpansionPlan,
    instances: &[Instance],
    lex: &FormLexicon,
    policy: &DelexPolicy,
) -> Result<Expansion> {
    let mut out = Vec::with_capacity(plan.total());
    let mut review = Vec::new();
    for sp in &plan.signatures {
        for u in &sp.uniques {
            out.push(instances[u.source].clone());
        }
        for copy in &sp.copies {
            let source = &instances[sp.uniques[copy.unique].source];
            let mut queue: HashMap<&str, std::collections::VecDeque<&str>> = HashMap::new();
            for (s, v) in &copy.assignment {
                queue.entry(s.as_str()).or_default().push_back(v.as_str());
            }
            let da = source.da.map_values(|slot, value| {
                if policy.is_delexicalized(slot, value) {
                    queue
                        .get_mut(slot)
                        .and_then(|q| q.pop_front())
                        .unwrap_or(value)
                        .to_owned()
                } else {
                    value.to_owned()
                }
            });
            let delex_tags = source.delex_tags(lex).ok();
            let hints: Vec<RelexHint> = match &delex_tags {
                Some(tags) => source
                    .delex_text
                    .iter()
                    .zip(tags)
                    .filter(|(t, _)| placeholder_slot(t).is_some())
                    .map(|(_, tag)| RelexHint::Rough(*tag))
                    .collect(),
                None => Vec::new(),
            };
            let (text, tags) = match &delex_tags {
                Some(dt) => relexicalize_tagged(&source.delex_text, dt, &copy.assignment, lex, &hints, policy)?,
                None => (
                    relexicalize(&source.delex_text, &copy.assignment, lex, &hints, policy)?,
                    Vec::new(),
                ),
            };
            review.push((da.to_string(), text.join(" ")));
            out.push(Instance {
                da,
                text,
                delex_text: source.delex_text.clone(),
                lemmas: source.lemmas.clone(),
                tags,
            });
        }
    }
    Ok(Expansion { instances: out, review })
}

pub fn expand(
    instances: &[Instance],
    targets: &Targets,
    lm: &NGramModel,
    lex: &FormLexicon,
    policy: &DelexPolicy,
    config: &ExpansionConfig,
) -> Result<Expansion> {
    let plan = plan_expansion(instances, targets, lm, lex, policy, config)?;
    materialize(&plan, instances, lex, policy)
}

pub fn review_to_string(review: &[(String, String)]) -> String {
    let mut out = String::new();
    for (da, text) in review {
        let _ = writeln!(out, "{da}\t{text}");
    }
    out
}

// ---------------------------------------------------------------------------
// splitting

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Train,
    Dev,
    Test,
}

impl Part {
    pub const ALL: [Part; 3] = [Part::Train, Part::Dev, Part::Test];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Part::Train => "train",
            Part::Dev => "dev",
            Part::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub assignment: BTreeMap<DaSignature, Part>,
    pub instances: [usize; 3],
    pub signatures: [usize; 3],
    pub warnings: Vec<String>,
}

impl SplitSpec {
    pub fn part_of(&self, inst: &Instance, policy: &DelexPolicy) -> Option<Part> {
        self.assignment.get(&da_signature(&inst.da, policy)).copied()
    }

    /// Instances of each part, in corpus order.
    pub fn apply(&self, instances: &[Instance], policy: &DelexPolicy) -> [Vec<Instance>; 3] {
        let mut parts: [Vec<Instance>; 3] = Default::default();
        for inst in instances {
            if let Some(p) = self.part_of(inst, policy) {
                parts[p.index()].push(inst.clone());
            }
        }
        parts
    }
}

/// Signatures of DAs without any slot (e.g. `goodbye()`, `?reqmore()`).
pub fn slotless_signatures(instances: &[Instance], policy: &DelexPolicy) -> BTreeSet<DaSignature> {
    instances
        .iter()
        .filter(|i| !i.da.has_slots())
        .map(|i| da_signature(&i.da, policy))
        .collect()
}

struct SigInfo {
    sig: DaSignature,
    count: usize,
    types: BTreeSet<String>,
}

/// Assigns whole signature groups to train/dev/test.
///
/// Signatures are shuffled by `seed` and ordered by instance count,
/// largest first. Pinned signatures go to train. Then, for every DA type
/// with at least three unpinned signatures, each part lacking the type
/// receives the smallest unassigned signature containing it. The rest go,
/// one by one, to the part furthest below its target instance count.
pub fn split(
    instances: &[Instance],
    ratios: [f64; 3],
    seed: u64,
    pinned: &BTreeSet<DaSignature>,
    policy: &DelexPolicy,
) -> Result<SplitSpec> {
    if ratios.iter().any(|r| !(*r >= 0.0 && r.is_finite())) || ratios.iter().sum::<f64>() <= 0.0 {
        return Err(Error::invalid(format!("bad split ratios {ratios:?}")));
    }
    let mut by_sig: BTreeMap<DaSignature, SigInfo> = BTreeMap::new();
    for inst in instances {
        let sig = da_signature(&inst.da, policy);
        let info = by_sig.entry(sig.clone()).or_insert_with(|| SigInfo {
            sig,
            count: 0,
            types: inst.da.da_types().into_iter().map(str::to_owned).collect(),
        });
        info.count += 1;
    }
    let mut sigs: Vec<SigInfo> = by_sig.into_values().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sigs.shuffle(&mut rng);
    sigs.sort_by(|a, b| b.count.cmp(&a.count));

    let total: usize = sigs.iter().map(|s| s.count).sum();
    let ratio_sum: f64 = ratios.iter().sum();
    let target: Vec<f64> = ratios.iter().map(|r| r / ratio_sum * total as f64).collect();
    let mut assigned: Vec<Option<Part>> = vec![None; sigs.len()];
    let mut counts = [0usize; 3];
    let mut warnings = Vec::new();
    let give = |k: usize, part: Part, assigned: &mut Vec<Option<Part>>, counts: &mut [usize; 3]| {
        assigned[k] = Some(part);
        counts[part.index()] += sigs[k].count;
    };

    for k in 0..sigs.len() {
        if pinned.contains(&sigs[k].sig) {
            give(k, Part::Train, &mut assigned, &mut counts);
        }
    }

    let all_types: BTreeSet<&String> = sigs.iter().flat_map(|s| s.types.iter()).collect();
    for ty in all_types {
        let unpinned = sigs
            .iter()
            .filter(|s| s.types.contains(ty) && !pinned.contains(&s.sig))
            .count();
        if unpinned == 0 {
            continue;
        }
        if unpinned < 3 {
            warnings.push(format!(
                "DA type `{ty}` has {unpinned} unpinned signature(s) and cannot appear in every part"
            ));
            continue;
        }
        for part in Part::ALL {
            let covered = (0..sigs.len()).any(|k| assigned[k] == Some(part) && sigs[k].types.contains(ty));
            if covered {
                continue;
            }
            // smallest unassigned signature with this type (last in order)
            match (0..sigs.len())
                .rev()
                .find(|&k| assigned[k].is_none() && sigs[k].types.contains(ty))
            {
                Some(k) => give(k, part, &mut assigned, &mut counts),
                None => warnings.push(format!("DA type `{ty}` cannot be placed in {}", part.name())),
            }
        }
    }

    for k in 0..sigs.len() {
        if assigned[k].is_some() {
            continue;
        }
        let part = Part::ALL
            .into_iter()
            .max_by(|a, b| {
                let da = target[a.index()] - counts[a.index()] as f64;
                let db = target[b.index()] - counts[b.index()] as f64;
                // earlier parts win ties
                da.partial_cmp(&db).unwrap().then(b.cmp(a))
            })
            .unwrap();
        give(k, part, &mut assigned, &mut counts);
    }

    let mut signatures = [0usize; 3];
    let mut assignment = BTreeMap::new();
    for (info, part) in sigs.iter().zip(&assigned) {
        let part = part.expect("every signature assigned");
        signatures[part.index()] += 1;
        assignment.insert(info.sig.clone(), part);
    }
    for part in Part::ALL {
        if signatures[part.index()] == 0 && ratios[part.index()] > 0.0 {
            warnings.push(format!("{} is empty", part.name()));
        }
    }
    Ok(SplitSpec {
        assignment,
        instances: counts,
        signatures,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// statistics

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub instances: usize,
    pub unique_delex_instances: usize,
    pub signatures: usize,
    /// Distinct lemmas of the delexicalized texts, placeholders excluded.
    pub lemmas: usize,
    /// Distinct word forms of the delexicalized texts, placeholders excluded.
    pub forms: usize,
    /// Mean number of surface forms per lexicon slot value, verbatim slots
    /// excluded; `None` without such values.
    pub avg_lexicalizations: Option<f64>,
}

impl CorpusStats {
    pub fn to_table(&self) -> String {
        let avg = self
            .avg_lexicalizations
            .map_or_else(|| "-".to_owned(), |a| format!("{a:.2}"));
        format!(
            "instances\t{}\nunique delexicalized instances\t{}\nunique delexicalized DAs\t{}\n\
             distinct lemmas\t{}\ndistinct word forms\t{}\naverage lexicalizations per slot value\t{}\n",
            self.instances, self.unique_delex_instances, self.signatures, self.lemmas, self.forms, avg
        )
    }
}

pub fn corpus_stats(instances: &[Instance], lex: &FormLexicon, policy: &DelexPolicy) -> CorpusStats {
    let groups = deduplicate(instances, policy);
    let mut lemmas: HashSet<&str> = HashSet::new();
    let mut forms: HashSet<&str> = HashSet::new();
    for inst in instances {
        lemmas.extend(inst.lemmas.iter().map(String::as_str).filter(|t| placeholder_slot(t).is_none()));
        forms.extend(inst.delex_text.iter().map(String::as_str).filter(|t| placeholder_slot(t).is_none()));
    }
    let per_value: Vec<usize> = lex
        .iter()
        .filter(|(slot, _, _)| !policy.is_verbatim(slot))
        .map(|(_, _, fs)| fs.iter().map(|f| f.form.as_str()).collect::<HashSet<_>>().len())
        .collect();
    CorpusStats {
        instances: instances.len(),
        unique_delex_instances: groups.values().map(|g| g.uniques.len()).sum(),
        signatures: groups.len(),
        lemmas: lemmas.len(),
        forms: forms.len(),
        avg_lexicalizations: (!per_value.is_empty())
            .then(|| per_value.iter().sum::<usize>() as f64 / per_value.len() as f64),
    }
}

/// Parses signatures back to DAs, e.g. for reports.
pub fn signature_da(sig: &DaSignature) -> Result<DialogueAct> {
    sig.as_str().parse()
}
