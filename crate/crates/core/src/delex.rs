//! Delexicalization of texts against their dialogue acts, corpus
//! consistency checking and relexicalization with new slot values.

use std::collections::{BTreeMap, BTreeSet};

use crate::da::{placeholder, placeholder_slot, DelexPolicy, DialogueAct};
use crate::error::{Error, Result};
use crate::morph::{filter_forms, AlignedToken, FormLexicon, MorphTag, SurfaceForm};

/// One dataset row.
///
/// `lemmas` is aligned with `delex_text`; `tags` with `text`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub da: DialogueAct,
    pub text: Vec<String>,
    pub delex_text: Vec<String>,
    pub lemmas: Vec<String>,
    pub tags: Vec<MorphTag>,
}

/// A placeholder of `delex_text` and the text span it stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Span {
    pub delex_index: usize,
    pub start: usize,
    pub len: usize,
}

impl Instance {
    pub fn check(&self) -> Result<()> {
        if self.lemmas.len() != self.delex_text.len() {
            return Err(Error::invalid(format!(
                "{} lemmas for {} delexicalized tokens",
                self.lemmas.len(),
                self.delex_text.len()
            )));
        }
        if !self.tags.is_empty() && self.tags.len() != self.text.len() {
            return Err(Error::invalid(format!(
                "{} tags for {} tokens",
                self.tags.len(),
                self.text.len()
            )));
        }
        Ok(())
    }

    /// Aligns placeholders with the text spans they replace.
    pub fn spans(&self) -> Result<Vec<Span>> {
        align_spans(&self.text, &self.delex_text).ok_or_else(|| {
            Error::invalid("delexicalized text does not align with the text")
        })
    }

    /// `(form, lemma, tag)` rows of all tokens outside placeholder spans.
    pub fn aligned_tokens(&self) -> Result<Vec<AlignedToken>> {
        self.check()?;
        if self.tags.is_empty() {
            return Err(Error::invalid("instance carries no tags"));
        }
        let spans = self.spans()?;
        let mut out = Vec::new();
        let mut text_pos = 0;
        let mut spans = spans.iter().peekable();
        for (j, lemma) in self.lemmas.iter().enumerate() {
            if let Some(span) = spans.next_if(|s| s.delex_index == j) {
                text_pos = span.start + span.len;
                continue;
            }
            out.push(AlignedToken {
                form: self.text[text_pos].clone(),
                lemma: lemma.clone(),
                tag: self.tags[text_pos],
            });
            text_pos += 1;
        }
        Ok(out)
    }

    /// Tags aligned with `delex_text`. A placeholder takes the lexicon tag
    /// of the form it replaced, falling back to the tag of the span's first
    /// token.
    pub fn delex_tags(&self, lex: &FormLexicon) -> Result<Vec<MorphTag>> {
        if self.tags.len() != self.text.len() {
            return Err(Error::invalid("instance carries no aligned tags"));
        }
        let spans = self.spans()?;
        let mut values = ValueQueue::new(self.da.slot_values());
        let mut out = Vec::with_capacity(self.delex_text.len());
        let mut text_pos = 0;
        let mut spans = spans.iter().peekable();
        for j in 0..self.delex_text.len() {
            if let Some(span) = spans.next_if(|s| s.delex_index == j) {
                let slot = placeholder_slot(&self.delex_text[j]).unwrap_or_default();
                let surface = self.text[span.start..span.start + span.len].join(" ");
                let tag = values
                    .next(slot)
                    .and_then(|value| {
                        lex.forms(slot, value)
                            .iter()
                            .find(|f| f.form == surface)
                            .map(|f| f.tag)
                    })
                    .unwrap_or(self.tags[span.start]);
                out.push(tag);
                text_pos = span.start + span.len;
            } else {
                out.push(self.tags[text_pos]);
                text_pos += 1;
            }
        }
        Ok(out)
    }
}

/// Matches `delex` against `text`, where every placeholder stands for one
/// or more text tokens and every other token must match literally.
/// Prefers the shortest span for earlier placeholders.
pub fn align_spans(text: &[String], delex: &[String]) -> Option<Vec<Span>> {
    fn go(
        text: &[String],
        delex: &[String],
        i: usize,
        j: usize,
        spans: &mut Vec<Span>,
        failed: &mut BTreeSet<(usize, usize)>,
    ) -> bool {
        if j == delex.len() {
            return i == text.len();
        }
        if failed.contains(&(i, j)) {
            return false;
        }
        let ok = if placeholder_slot(&delex[j]).is_some() {
            let mut found = false;
            for len in 1..=text.len().saturating_sub(i) {
                spans.push(Span {
                    delex_index: j,
                    start: i,
                    len,
                });
                if go(text, delex, i + len, j + 1, spans, failed) {
                    found = true;
                    break;
                }
                spans.pop();
            }
            found
        } else {
            i < text.len() && text[i] == delex[j] && go(text, delex, i + 1, j + 1, spans, failed)
        };
        if !ok {
            failed.insert((i, j));
        }
        ok
    }
    let mut spans = Vec::new();
    let mut failed = BTreeSet::new();
    go(text, delex, 0, 0, &mut spans, &mut failed).then_some(spans)
}

/// Hands out DA values per slot in DA order; once a slot's values are used
/// up the last one is repeated.
pub(crate) struct ValueQueue<'a> {
    values: BTreeMap<&'a str, (Vec<&'a str>, usize)>,
}

impl<'a> ValueQueue<'a> {
    pub(crate) fn new(pairs: impl Iterator<Item = (&'a str, &'a str)>) -> Self {
        let mut values: BTreeMap<&str, (Vec<&str>, usize)> = BTreeMap::new();
        for (slot, value) in pairs {
            values.entry(slot).or_default().0.push(value);
        }
        ValueQueue { values }
    }

    pub(crate) fn next(&mut self, slot: &str) -> Option<&'a str> {
        let (list, used) = self.values.get_mut(slot)?;
        let value = list.get(*used).or(list.last()).copied();
        *used += 1;
        value
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DelexOptions {
    pub policy: DelexPolicy,
    /// Slots matched case-insensitively (common-noun values).
    pub case_insensitive_slots: BTreeSet<String>,
}

impl DelexOptions {
    pub fn new(policy: DelexPolicy) -> Self {
        let case_insensitive_slots = ["food", "price_range", "price", "type", "good_for_meal"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        DelexOptions {
            policy,
            case_insensitive_slots,
        }
    }
}

impl Default for DelexOptions {
    fn default() -> Self {
        DelexOptions::new(DelexPolicy::default())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotMatch {
    pub slot: String,
    pub value: String,
    pub form: String,
    /// Lexicon tag of the matched form; `None` for verbatim values.
    pub tag: Option<MorphTag>,
    /// Span in the input tokens.
    pub start: usize,
    pub len: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Delexicalized {
    pub tokens: Vec<String>,
    pub matches: Vec<SlotMatch>,
    /// Delexicalizable slots with no mention in the text.
    pub missing: Vec<String>,
    /// Number of positions where forms of two different slots matched with
    /// equal length and DA order decided.
    pub tie_breaks: usize,
}

/// Candidate surface forms used when matching or realizing a slot value.
/// Verbatim slots, and values the lexicon does not know, are matched by
/// the value itself.
fn matching_forms(lex: &FormLexicon, policy: &DelexPolicy, slot: &str, value: &str) -> Vec<(Vec<String>, Option<MorphTag>)> {
    let forms = lex.forms(slot, value);
    if policy.is_verbatim(slot) || forms.is_empty() {
        let mut out = vec![(value.split_whitespace().map(str::to_owned).collect(), None)];
        out.extend(forms.iter().map(|f| (f.tokens().map(str::to_owned).collect(), Some(f.tag))));
        return out;
    }
    forms
        .iter()
        .map(|f| (f.tokens().map(str::to_owned).collect(), Some(f.tag)))
        .collect()
}

/// Greedy leftmost-longest replacement of slot value mentions by
/// placeholders.
///
/// Each delexicalizable DA item is consumed by at most one mention. Among
/// equally long matches the item earlier in the DA wins.
pub fn delexicalize_text(
    tokens: &[String],
    da: &DialogueAct,
    lex: &FormLexicon,
    opts: &DelexOptions,
) -> Delexicalized {
    struct Occurrence {
        slot: String,
        value: String,
        forms: Vec<(Vec<String>, Option<MorphTag>)>,
        folded: bool,
        used: bool,
    }
    let mut occurrences: Vec<Occurrence> = da
        .slot_values()
        .filter(|(s, v)| opts.policy.is_delexicalized(s, v))
        .map(|(slot, value)| {
            let folded = opts.case_insensitive_slots.contains(slot);
            let mut forms = matching_forms(lex, &opts.policy, slot, value);
            if folded {
                for (toks, _) in &mut forms {
                    toks.iter_mut().for_each(|t| *t = t.to_lowercase());
                }
            }
            Occurrence {
                slot: slot.to_owned(),
                value: value.to_owned(),
                forms,
                folded,
                used: false,
            }
        })
        .collect();
    let lowered: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();

    let mut out = Delexicalized::default();
    let mut i = 0;
    while i < tokens.len() {
        // (occurrence, form index, length)
        let mut best: Option<(usize, usize, usize)> = None;
        let mut tie = false;
        for (k, occ) in occurrences.iter().enumerate() {
            if occ.used {
                continue;
            }
            let hay = if occ.folded { &lowered } else { tokens };
            for (fi, (form, _)) in occ.forms.iter().enumerate() {
                let n = form.len();
                if n == 0 || i + n > tokens.len() || hay[i..i + n] != form[..] {
                    continue;
                }
                match best {
                    Some((bk, _, bn)) if n == bn && occurrences[bk].slot != occ.slot => tie = true,
                    Some((_, _, bn)) if n <= bn => {}
                    _ => {
                        best = Some((k, fi, n));
                        tie = false;
                    }
                }
            }
        }
        match best {
            Some((k, fi, n)) => {
                let occ = &mut occurrences[k];
                occ.used = true;
                out.tokens.push(placeholder(&occ.slot));
                out.matches.push(SlotMatch {
                    slot: occ.slot.clone(),
                    value: occ.value.clone(),
                    form: tokens[i..i + n].join(" "),
                    tag: occ.forms[fi].1,
                    start: i,
                    len: n,
                });
                if tie {
                    out.tie_breaks += 1;
                }
                i += n;
            }
            None => {
                out.tokens.push(tokens[i].clone());
                i += 1;
            }
        }
    }
    out.missing = occurrences
        .into_iter()
        .filter(|o| !o.used)
        .map(|o| o.slot)
        .collect();
    out
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConsistencyReport {
    pub instances: usize,
    /// `(instance index, missing slots)` for every inconsistent instance.
    pub missing: Vec<(usize, Vec<String>)>,
    pub missing_per_slot: BTreeMap<String, usize>,
    /// Instances where DA order broke a tie between slots.
    pub tie_breaks: Vec<usize>,
}

impl ConsistencyReport {
    pub fn is_clean(&self) -> bool {
        self.missing.is_empty()
    }

    pub fn total_missing(&self) -> usize {
        self.missing_per_slot.values().sum()
    }

    /// Merges a report over a later chunk of the same corpus.
    pub fn merge(&mut self, other: ConsistencyReport) {
        let offset = self.instances;
        self.instances += other.instances;
        self.missing
            .extend(other.missing.into_iter().map(|(i, m)| (i + offset, m)));
        for (slot, n) in other.missing_per_slot {
            *self.missing_per_slot.entry(slot).or_default() += n;
        }
        self.tie_breaks
            .extend(other.tie_breaks.into_iter().map(|i| i + offset));
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "{} instances, {} missing mentions in {} instances\n",
            self.instances,
            self.total_missing(),
            self.missing.len()
        );
        for (slot, n) in &self.missing_per_slot {
            out.push_str(&format!("  {slot}: {n}\n"));
        }
        if !self.tie_breaks.is_empty() {
            out.push_str(&format!(
                "  {} instances resolved a slot tie by DA order\n",
                self.tie_breaks.len()
            ));
        }
        out
    }
}

/// Checks that every instance mentions all delexicalizable DA values.
pub fn consistency_check<'a, I>(instances: I, lex: &FormLexicon, opts: &DelexOptions) -> ConsistencyReport
where
    I: IntoIterator<Item = (&'a DialogueAct, &'a [String])>,
{
    let mut report = ConsistencyReport::default();
    for (idx, (da, text)) in instances.into_iter().enumerate() {
        report.instances += 1;
        let result = delexicalize_text(text, da, lex, opts);
        if result.tie_breaks > 0 {
            report.tie_breaks.push(idx);
        }
        if !result.missing.is_empty() {
            for slot in &result.missing {
                *report.missing_per_slot.entry(slot.clone()).or_default() += 1;
            }
            report.missing.push((idx, result.missing));
        }
    }
    report
}

/// Morphological guidance for one placeholder during relexicalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelexHint {
    None,
    /// Filter by the tag with exact → coarse POS → all backoff.
    Tag(MorphTag),
    /// Keep case and number of the replaced form's tag.
    Rough(MorphTag),
}

fn most_frequent<'a>(forms: &[&'a SurfaceForm]) -> &'a SurfaceForm {
    let mut best = forms[0];
    for f in &forms[1..] {
        if f.frequency > best.frequency {
            best = f;
        }
    }
    best
}

/// Chooses the surface form of `slot=value` under `hint`.
pub fn choose_form<'a>(
    lex: &'a FormLexicon,
    slot: &str,
    value: &str,
    hint: RelexHint,
) -> Result<&'a SurfaceForm> {
    let forms = lex.forms(slot, value);
    if forms.is_empty() {
        return Err(Error::UnknownValue {
            slot: slot.to_owned(),
            value: value.to_owned(),
        });
    }
    let candidates = match hint {
        RelexHint::None => forms.iter().collect(),
        RelexHint::Tag(tag) => filter_forms(forms, &tag),
        RelexHint::Rough(tag) => filter_forms(forms, &tag.case_number_pattern()),
    };
    Ok(most_frequent(&candidates))
}

/// Replaces every placeholder by a surface form of its assigned value.
///
/// `hints` is indexed by placeholder occurrence; missing entries mean
/// [`RelexHint::None`]. Values of a slot are used in assignment order.
pub fn relexicalize(
    delex: &[String],
    assignment: &[(String, String)],
    lex: &FormLexicon,
    hints: &[RelexHint],
    policy: &DelexPolicy,
) -> Result<Vec<String>> {
    Ok(relex_core(delex, None, assignment, lex, hints, policy)?.0)
}

/// Like [`relexicalize`], also producing text-aligned tags. `delex_tags`
/// is aligned with `delex`; placeholder tokens take the tag of the chosen
/// form, or their own tag for verbatim values.
pub fn relexicalize_tagged(
    delex: &[String],
    delex_tags: &[MorphTag],
    assignment: &[(String, String)],
    lex: &FormLexicon,
    hints: &[RelexHint],
    policy: &DelexPolicy,
) -> Result<(Vec<String>, Vec<MorphTag>)> {
    if delex_tags.len() != delex.len() {
        return Err(Error::invalid(format!(
            "{} tags for {} delexicalized tokens",
            delex_tags.len(),
            delex.len()
        )));
    }
    relex_core(delex, Some(delex_tags), assignment, lex, hints, policy)
}

fn relex_core(
    delex: &[String],
    delex_tags: Option<&[MorphTag]>,
    assignment: &[(String, String)],
    lex: &FormLexicon,
    hints: &[RelexHint],
    policy: &DelexPolicy,
) -> Result<(Vec<String>, Vec<MorphTag>)> {
    let mut values = ValueQueue::new(assignment.iter().map(|(s, v)| (s.as_str(), v.as_str())));
    let mut out = Vec::with_capacity(delex.len());
    let mut tags = Vec::new();
    let mut k = 0;
    for (i, token) in delex.iter().enumerate() {
        let own_tag = delex_tags.map(|t| t[i]);
        let Some(slot) = placeholder_slot(token) else {
            out.push(token.clone());
            tags.extend(own_tag);
            continue;
        };
        let hint = hints.get(k).copied().unwrap_or(RelexHint::None);
        k += 1;
        let value = values
            .next(slot)
            .ok_or_else(|| Error::MissingAssignment(slot.to_owned()))?;
        let before = out.len();
        let tag = if policy.is_verbatim(slot) && lex.forms(slot, value).is_empty() {
            out.extend(value.split_whitespace().map(str::to_owned));
            own_tag
        } else {
            let form = choose_form(lex, slot, value, hint)?;
            out.extend(form.tokens().map(str::to_owned));
            own_tag.map(|_| form.tag)
        };
        if let Some(tag) = tag {
            tags.extend(std::iter::repeat(tag).take(out.len() - before));
        }
    }
    Ok((out, tags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morph::SurfaceForm;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    fn tag(s: &str) -> MorphTag {
        s.parse().unwrap()
    }

    fn lexicon() -> FormLexicon {
        let mut lex = FormLexicon::new();
        let mut add = |slot: &str, value: &str, form: &str, lemma: &str, t: &str, freq: u64| {
            let mut f = SurfaceForm::new(form, lemma, tag(t));
            f.frequency = freq;
            lex.insert(slot, value, f).unwrap();
        };
        add("name", "Green Spirit", "Green Spirit", "Green Spirit", "NNFS1-----A----", 3);
        add("name", "Ananta", "Ananta", "Ananta", "NNFS1-----A----", 5);
        add("name", "Ananta", "Ananty", "Ananta", "NNFS2-----A----", 1);
        add("name", "Ananta", "Anantu", "Ananta", "NNFS4-----A----", 2);
        add("name", "BarBar", "BarBar", "BarBar", "NNIS1-----A----", 1);
        add("name", "BarBar", "BarBaru", "BarBar", "NNIS2-----A----", 1);
        add("food", "Turkish", "turecká", "turecký", "AAFS1----1A----", 4);
        add("food", "Turkish", "turecké", "turecký", "AANS1----1A----", 1);
        add("price_range", "expensive", "drahá", "drahý", "AAFS1----1A----", 2);
        add("price_range", "expensive", "drahé", "drahý", "AANS1----1A----", 6);
        add("area", "Karlín", "Karlín", "Karlín", "NNIS1-----A----", 1);
        add("area", "Karlín", "Karlíně", "Karlín", "NNIS6-----A----", 1);
        lex
    }

    fn green_spirit() -> DialogueAct {
        r#"inform(name="Green Spirit",food=Turkish,price_range=expensive)"#.parse().unwrap()
    }

    #[test]
    fn delexicalizes_example_sentence() {
        let text = toks("Green Spirit je drahá turecká restaurace .");
        let out = delexicalize_text(&text, &green_spirit(), &lexicon(), &DelexOptions::default());
        assert_eq!(out.tokens, toks("X-name je X-price_range X-food restaurace ."));
        assert!(out.missing.is_empty());
        assert_eq!(out.matches.len(), 3);
        assert_eq!(out.matches[0].len, 2);
    }

    #[test]
    fn reports_missing_slots() {
        let da: DialogueAct = r#"inform(name="Green Spirit",food=Turkish,price_range=expensive,area=Karlín)"#
            .parse()
            .unwrap();
        let text = toks("Green Spirit je drahá turecká restaurace .");
        let out = delexicalize_text(&text, &da, &lexicon(), &DelexOptions::default());
        assert_eq!(out.missing, vec!["area"]);

        let bye: DialogueAct = "goodbye()".parse().unwrap();
        let out = delexicalize_text(&text, &bye, &lexicon(), &DelexOptions::default());
        assert_eq!(out.tokens, text);
    }

    #[test]
    fn case_folding_only_for_common_nouns() {
        let da: DialogueAct = "inform(food=Turkish,name=Ananta)".parse().unwrap();
        let out = delexicalize_text(&toks("Turecká ananta"), &da, &lexicon(), &DelexOptions::default());
        assert_eq!(out.tokens, toks("X-food ananta"));
        assert_eq!(out.missing, vec!["name"]);
    }

    #[test]
    fn verbatim_counts() {
        let da: DialogueAct = "inform_count(count=218,area=dont_care)".parse().unwrap();
        let out = delexicalize_text(&toks("našla jsem 218 restaurací"), &da, &lexicon(), &DelexOptions::default());
        assert_eq!(out.tokens, toks("našla jsem X-count restaurací"));
        let back = relexicalize(
            &out.tokens,
            &[("count".into(), "218".into())],
            &lexicon(),
            &[],
            &DelexPolicy::default(),
        )
        .unwrap();
        assert_eq!(back, toks("našla jsem 218 restaurací"));
    }

    #[test]
    fn tie_between_slots_goes_to_da_order() {
        let mut lex = lexicon();
        lex.insert("near", "Karlín", SurfaceForm::new("Karlíně", "Karlín", tag("NNIS6-----A----")))
            .unwrap();
        let da: DialogueAct = "inform(near=Karlín,area=Karlín)".parse().unwrap();
        let out = delexicalize_text(&toks("v Karlíně"), &da, &lex, &DelexOptions::default());
        assert_eq!(out.tokens, toks("v X-near"));
        assert_eq!(out.tie_breaks, 1);
        assert_eq!(out.missing, vec!["area"]);
    }

    #[test]
    fn consistency_report_lists_offenders() {
        let lex = lexicon();
        let good = (green_spirit(), toks("Green Spirit je drahá turecká restaurace ."));
        let bad_da: DialogueAct = "inform(area=Karlín)".parse().unwrap();
        let bad = (bad_da, toks("to je daleko ."));
        let rows = [good.clone(), bad, good];
        let report = consistency_check(
            rows.iter().map(|(d, t)| (d, t.as_slice())),
            &lex,
            &DelexOptions::default(),
        );
        assert_eq!(report.missing, vec![(1, vec!["area".to_owned()])]);
        assert_eq!(report.missing_per_slot["area"], 1);
        assert!(!report.is_clean());

        let clean = consistency_check(
            rows[..1].iter().map(|(d, t)| (d, t.as_slice())),
            &lex,
            &DelexOptions::default(),
        );
        assert!(clean.is_clean());
    }

    #[test]
    fn relexicalize_with_hints() {
        let lex = lexicon();
        let policy = DelexPolicy::default();
        let nom = MorphTag::wildcard().with(1, 'N').with(5, '1');
        let out = relexicalize(
            &toks("X-name je restaurace"),
            &[("name".into(), "Ananta".into())],
            &lex,
            &[RelexHint::Tag(nom)],
            &policy,
        )
        .unwrap();
        assert_eq!(out, toks("Ananta je restaurace"));

        let out = relexicalize(
            &toks("X-name"),
            &[("name".into(), "Green Spirit".into())],
            &lex,
            &[RelexHint::Tag(tag("VB-P---2P-AA---"))],
            &policy,
        )
        .unwrap();
        assert_eq!(out, toks("Green Spirit"));

        let err = relexicalize(&toks("X-area"), &[], &lex, &[], &policy).unwrap_err();
        assert!(matches!(err, Error::MissingAssignment(s) if s == "area"));

        let err = relexicalize(
            &toks("X-area"),
            &[("area".into(), "Atlantis".into())],
            &lex,
            &[],
            &policy,
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnknownValue { .. }));
    }

    #[test]
    fn rough_mode_keeps_case_and_number() {
        let lex = lexicon();
        // genitive of a masculine name replaced by a feminine one
        let out = relexicalize(
            &toks("bez X-name"),
            &[("name".into(), "Ananta".into())],
            &lex,
            &[RelexHint::Rough(tag("NNIS2-----A----"))],
            &DelexPolicy::default(),
        )
        .unwrap();
        assert_eq!(out, toks("bez Ananty"));
    }

    #[test]
    fn instance_alignment() {
        let lex = lexicon();
        let text = toks("Green Spirit je drahá turecká restaurace .");
        let d = delexicalize_text(&text, &green_spirit(), &lex, &DelexOptions::default());
        let t = |s: &str| tag(s);
        let inst = Instance {
            da: green_spirit(),
            text: text.clone(),
            delex_text: d.tokens.clone(),
            lemmas: toks("X-name být X-price_range X-food restaurace ."),
            tags: vec![
                t("NNFS1-----A----"),
                t("NNFS1-----A----"),
                t("VB-S---3P-AA---"),
                t("AAFS1----1A----"),
                t("AAFS1----1A----"),
                t("NNFS1-----A----"),
                t("Z:-------------"),
            ],
        };
        let rows = inst.aligned_tokens().unwrap();
        let forms: Vec<_> = rows.iter().map(|r| r.form.as_str()).collect();
        assert_eq!(forms, vec!["je", "restaurace", "."]);
        assert_eq!(rows[0].lemma, "být");
        let dt = inst.delex_tags(&lex).unwrap();
        assert_eq!(dt.len(), inst.delex_text.len());
        assert_eq!(dt[0], t("NNFS1-----A----"));
    }

    #[test]
    fn alignment_failure() {
        assert!(align_spans(&toks("a b c"), &toks("a X-name d")).is_none());
        assert_eq!(align_spans(&toks("a b c"), &toks("X-x c")).unwrap()[0].len, 2);
    }

    /// Lexicon with unique tags per value so the form is recoverable from
    /// its tag.
    fn arb_case() -> impl Strategy<Value = (usize, usize, Vec<usize>)> {
        (0..2usize, 0..3usize, prop::collection::vec(0..5usize, 0..6))
    }

    proptest! {
        #[test]
        fn delex_relex_round_trip((name, case, filler) in arb_case()) {
            let lex = lexicon();
            let policy = DelexPolicy::default();
            let names = ["Ananta", "BarBar"];
            let forms = lex.forms("name", names[name]);
            let form = &forms[case % forms.len()];
            let words = ["je", "to", "restaurace", "v", "."];
            let mut text: Vec<String> = filler.iter().map(|&w| words[w].to_owned()).collect();
            let at = text.len() / 2;
            for (k, tok) in form.tokens().enumerate() {
                text.insert(at + k, tok.to_owned());
            }
            let da: DialogueAct = format!("inform(name={})", names[name]).parse().unwrap();
            let d = delexicalize_text(&text, &da, &lex, &DelexOptions::default());
            prop_assert!(d.missing.is_empty());
            let placeholders = d.tokens.iter().filter(|t| placeholder_slot(t).is_some()).count();
            prop_assert_eq!(placeholders, d.matches.len());
            let hints: Vec<_> = d.matches.iter().map(|m| RelexHint::Tag(m.tag.unwrap())).collect();
            let assignment: Vec<_> = d.matches.iter().map(|m| (m.slot.clone(), m.value.clone())).collect();
            let back = relexicalize(&d.tokens, &assignment, &lex, &hints, &policy).unwrap();
            prop_assert_eq!(back, text);
        }
    }
}
