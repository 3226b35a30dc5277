//! Positional morphological tags, the slot-value surface form lexicon and
//! the corpus-derived morphological dictionary.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const TAG_LEN: usize = 15;
pub const WILDCARD: char = '-';

/// A 15-position morphological tag such as `NNFS4-----A----`.
///
/// Position 1 is the coarse part of speech, 3 gender, 4 number, 5 case.
/// `-` marks an unspecified position and acts as a wildcard in patterns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MorphTag([char; TAG_LEN]);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatchLevel {
    Exact,
    CoarsePos,
    Any,
}

impl MorphTag {
    /// Tag with every position unspecified; matches anything.
    pub const fn wildcard() -> Self {
        MorphTag([WILDCARD; TAG_LEN])
    }

    /// 1-based positional access.
    pub fn at(&self, position: usize) -> char {
        self.0[position - 1]
    }

    pub fn with(mut self, position: usize, value: char) -> Self {
        self.0[position - 1] = value;
        self
    }

    pub fn pos(&self) -> char {
        self.at(1)
    }

    pub fn subpos(&self) -> char {
        self.at(2)
    }

    pub fn gender(&self) -> char {
        self.at(3)
    }

    pub fn number(&self) -> char {
        self.at(4)
    }

    pub fn case(&self) -> char {
        self.at(5)
    }

    pub fn is_wildcard(&self) -> bool {
        self.0.iter().all(|&c| c == WILDCARD)
    }

    /// Whether this (candidate) tag satisfies `pattern` at `level`.
    pub fn matches(&self, pattern: &MorphTag, level: MatchLevel) -> bool {
        tag_match(self, pattern, level)
    }

    /// Pattern keeping only case and number of this tag.
    pub fn case_number_pattern(&self) -> MorphTag {
        MorphTag::wildcard()
            .with(4, self.number())
            .with(5, self.case())
    }
}

pub fn parse_tag(s: &str) -> Result<MorphTag> {
    let chars: Vec<char> = s.chars().collect();
    if chars.len() != TAG_LEN {
        return Err(Error::TagLength(chars.len()));
    }
    let mut tag = [WILDCARD; TAG_LEN];
    for (i, &ch) in chars.iter().enumerate() {
        if ch.is_whitespace() || ch.is_control() {
            return Err(Error::TagAlphabet { position: i + 1, ch });
        }
        tag[i] = ch;
    }
    Ok(MorphTag(tag))
}

impl FromStr for MorphTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_tag(s)
    }
}

impl fmt::Display for MorphTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|c| write!(f, "{c}"))
    }
}

/// `Exact`: every specified pattern position agrees with the candidate.
/// `CoarsePos`: the parts of speech agree (a wildcard POS agrees with all).
/// `Any`: always.
pub fn tag_match(candidate: &MorphTag, pattern: &MorphTag, level: MatchLevel) -> bool {
    match level {
        MatchLevel::Exact => candidate
            .0
            .iter()
            .zip(pattern.0.iter())
            .all(|(c, p)| *p == WILDCARD || c == p),
        MatchLevel::CoarsePos => pattern.pos() == WILDCARD || candidate.pos() == pattern.pos(),
        MatchLevel::Any => true,
    }
}

/// Items filtered by `pattern`, backing off from exact to coarse POS to
/// everything; never empty for non-empty input.
fn backoff_filter<'a, T>(items: &'a [T], tag: impl Fn(&T) -> &MorphTag, pattern: &MorphTag) -> Vec<&'a T> {
    for level in [MatchLevel::Exact, MatchLevel::CoarsePos] {
        let hits: Vec<&T> = items
            .iter()
            .filter(|item| tag_match(tag(item), pattern, level))
            .collect();
        if !hits.is_empty() {
            return hits;
        }
    }
    items.iter().collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SurfaceForm {
    /// Multiword forms are stored space-joined.
    pub form: String,
    pub lemma: String,
    pub tag: MorphTag,
    pub frequency: u64,
}

impl SurfaceForm {
    pub fn new(form: &str, lemma: &str, tag: MorphTag) -> Self {
        SurfaceForm {
            form: form.to_owned(),
            lemma: lemma.to_owned(),
            tag,
            frequency: 0,
        }
    }

    /// Output tokens of this form.
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.form.split_whitespace()
    }

    pub fn token_len(&self) -> usize {
        self.tokens().count()
    }
}

/// Surface forms of every `(slot, value)` pair, in lexicon order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FormLexicon {
    entries: BTreeMap<(String, String), Vec<SurfaceForm>>,
}

impl FormLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a form; a repeated `(form, tag)` pair under the same key merges
    /// frequencies instead of duplicating the entry.
    pub fn insert(&mut self, slot: &str, value: &str, form: SurfaceForm) -> Result<()> {
        if form.form.trim().is_empty() {
            return Err(Error::invalid(format!("empty form for {slot}={value}")));
        }
        let forms = self
            .entries
            .entry((slot.to_owned(), value.to_owned()))
            .or_default();
        match forms
            .iter_mut()
            .find(|f| f.form == form.form && f.tag == form.tag)
        {
            Some(existing) => existing.frequency += form.frequency,
            None => forms.push(form),
        }
        Ok(())
    }

    pub fn forms(&self, slot: &str, value: &str) -> &[SurfaceForm] {
        self.entries
            .get(&(slot.to_owned(), value.to_owned()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn forms_mut(&mut self, slot: &str, value: &str) -> Option<&mut Vec<SurfaceForm>> {
        self.entries.get_mut(&(slot.to_owned(), value.to_owned()))
    }

    /// Distinct values known for `slot`, sorted.
    pub fn values(&self, slot: &str) -> Vec<&str> {
        self.entries
            .keys()
            .filter(|(s, _)| s == slot)
            .map(|(_, v)| v.as_str())
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &[SurfaceForm])> {
        self.entries
            .iter()
            .map(|((s, v), forms)| (s.as_str(), v.as_str(), forms.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn reset_frequencies(&mut self) {
        for forms in self.entries.values_mut() {
            for f in forms {
                f.frequency = 0;
            }
        }
    }

    /// Reads the tab-separated lexicon format: `slot value form lemma tag`
    /// with an optional sixth frequency column; `#` starts a comment line.
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut lex = FormLexicon::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 5 && cols.len() != 6 {
                return Err(Error::format(
                    lineno,
                    format!("expected 5 or 6 tab-separated columns, got {}", cols.len()),
                ));
            }
            let tag = parse_tag(cols[4]).map_err(|e| Error::format(lineno, e.to_string()))?;
            let mut form = SurfaceForm::new(cols[2].trim(), cols[3].trim(), tag);
            if let Some(freq) = cols.get(5) {
                form.frequency = freq
                    .trim()
                    .parse()
                    .map_err(|_| Error::format(lineno, format!("bad frequency `{freq}`")))?;
            }
            lex.insert(cols[0].trim(), cols[1].trim(), form)
                .map_err(|e| Error::format(lineno, e.to_string()))?;
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(fs::File::open(path)?)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::from("# slot\tvalue\tform\tlemma\ttag\tfrequency\n");
        for (slot, value, forms) in self.iter() {
            for f in forms {
                out.push_str(&format!(
                    "{slot}\t{value}\t{}\t{}\t{}\t{}\n",
                    f.form, f.lemma, f.tag, f.frequency
                ));
            }
        }
        out
    }
}

/// All forms of a slot value, or nothing for an unknown pair.
pub fn forms_for<'a>(lex: &'a FormLexicon, slot: &str, value: &str) -> &'a [SurfaceForm] {
    lex.forms(slot, value)
}

/// Forms matching `pattern` exactly, else those sharing its coarse POS,
/// else all of them.
pub fn filter_forms<'a>(forms: &'a [SurfaceForm], pattern: &MorphTag) -> Vec<&'a SurfaceForm> {
    backoff_filter(forms, |f| &f.tag, pattern)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DictEntry {
    pub tag: MorphTag,
    pub form: String,
    pub frequency: u64,
}

/// Lemma → (tag, form) inventory used to inflect lemma-tag output.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MorphDictionary {
    entries: BTreeMap<String, Vec<DictEntry>>,
}

impl MorphDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, form: &str, lemma: &str, tag: MorphTag, count: u64) {
        let list = self.entries.entry(lemma.to_owned()).or_default();
        match list.iter_mut().find(|e| e.tag == tag && e.form == form) {
            Some(e) => e.frequency += count,
            None => list.push(DictEntry {
                tag,
                form: form.to_owned(),
                frequency: count,
            }),
        }
    }

    pub fn entries(&self, lemma: &str) -> &[DictEntry] {
        self.entries.get(lemma).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn lemma_count(&self) -> usize {
        self.entries.len()
    }

    /// Number of distinct form strings.
    pub fn form_count(&self) -> usize {
        let mut forms: Vec<&str> = self
            .entries
            .values()
            .flatten()
            .map(|e| e.form.as_str())
            .collect();
        forms.sort_unstable();
        forms.dedup();
        forms.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DictEntry)> {
        self.entries
            .iter()
            .flat_map(|(lemma, list)| list.iter().map(move |e| (lemma.as_str(), e)))
    }

    /// Forms of `lemma` matching `pattern` with the same backoff as
    /// [`filter_forms`], most frequent first; an unknown lemma yields itself.
    pub fn generate(&self, lemma: &str, pattern: &MorphTag) -> Vec<String> {
        let list = self.entries(lemma);
        if list.is_empty() {
            return vec![lemma.to_owned()];
        }
        let mut hits = backoff_filter(list, |e| &e.tag, pattern);
        // stable: equal frequencies keep insertion order
        hits.sort_by(|a, b| b.frequency.cmp(&a.frequency));
        let mut out: Vec<String> = Vec::with_capacity(hits.len());
        for e in hits {
            if !out.contains(&e.form) {
                out.push(e.form.clone());
            }
        }
        out
    }

    /// Reads rows `lemma form tag frequency` (tab-separated, `#` comments).
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut dict = MorphDictionary::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(Error::format(
                    lineno,
                    format!("expected 4 tab-separated columns, got {}", cols.len()),
                ));
            }
            let tag = parse_tag(cols[2]).map_err(|e| Error::format(lineno, e.to_string()))?;
            let count = cols[3]
                .trim()
                .parse()
                .map_err(|_| Error::format(lineno, format!("bad frequency `{}`", cols[3])))?;
            dict.add(cols[1], cols[0], tag, count);
        }
        Ok(dict)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(fs::File::open(path)?)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::from("# lemma\tform\ttag\tfrequency\n");
        for (lemma, e) in self.iter() {
            out.push_str(&format!("{lemma}\t{}\t{}\t{}\n", e.form, e.tag, e.frequency));
        }
        out
    }
}

pub fn generate_form(dict: &MorphDictionary, lemma: &str, pattern: &MorphTag) -> Vec<String> {
    dict.generate(lemma, pattern)
}

/// One aligned `(form, lemma, tag)` observation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlignedToken {
    pub form: String,
    pub lemma: String,
    pub tag: MorphTag,
}

/// Builds a dictionary from aligned rows; each item is `(line, tokens)` or
/// a misalignment reported against its line.
pub fn ingest_dictionary<I>(rows: I, lexicon: Option<&FormLexicon>) -> Result<MorphDictionary>
where
    I: IntoIterator<Item = (usize, Result<Vec<AlignedToken>>)>,
{
    let mut dict = MorphDictionary::new();
    for (line, row) in rows {
        let tokens = row.map_err(|e| match e {
            Error::Format { message, .. } => Error::format(line, message),
            other => Error::format(line, other.to_string()),
        })?;
        for t in tokens {
            dict.add(&t.form, &t.lemma, t.tag, 1);
        }
    }
    if let Some(lex) = lexicon {
        for (_, _, forms) in lex.iter() {
            for f in forms {
                dict.add(&f.form, &f.lemma, f.tag, f.frequency);
            }
        }
    }
    Ok(dict)
}
