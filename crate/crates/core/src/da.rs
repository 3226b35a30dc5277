//! Dialogue acts: the meaning representations fed to the generator.
//!
//! A dialogue act (DA) is an ordered list of items, each carrying a DA type
//! and optionally a slot and a value. The textual form is
//! `inform(food=Turkish,name="Green Spirit")`, with several acts joined by
//! `&` and slotless acts written as `goodbye()`.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Prefix of slot placeholder tokens, as in `X-name`.
pub const PLACEHOLDER_PREFIX: &str = "X-";

/// Marker used for the slot or value position of a triple when absent.
pub const NONE_MARKER: &str = "<none>";

pub fn placeholder(slot: &str) -> String {
    format!("{PLACEHOLDER_PREFIX}{slot}")
}

/// Returns the slot name if `token` is a placeholder.
pub fn placeholder_slot(token: &str) -> Option<&str> {
    token
        .strip_prefix(PLACEHOLDER_PREFIX)
        .filter(|slot| !slot.is_empty())
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DaItem {
    pub da_type: String,
    pub slot: Option<String>,
    pub value: Option<String>,
}

impl DaItem {
    pub fn new(da_type: &str, slot: Option<&str>, value: Option<&str>) -> Result<Self> {
        if value.is_some() && slot.is_none() {
            return Err(Error::invalid("a value requires a slot"));
        }
        Ok(DaItem {
            da_type: da_type.to_owned(),
            slot: slot.map(str::to_owned),
            value: value.map(str::to_owned),
        })
    }

    pub fn slotless(da_type: &str) -> Self {
        DaItem {
            da_type: da_type.to_owned(),
            slot: None,
            value: None,
        }
    }

    pub fn with_value(da_type: &str, slot: &str, value: &str) -> Self {
        DaItem {
            da_type: da_type.to_owned(),
            slot: Some(slot.to_owned()),
            value: Some(value.to_owned()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DialogueAct {
    items: Vec<DaItem>,
}

impl DialogueAct {
    pub fn new(items: Vec<DaItem>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyDa);
        }
        if let Some(item) = items.iter().find(|i| i.value.is_some() && i.slot.is_none()) {
            return Err(Error::invalid(format!(
                "item of type `{}` has a value but no slot",
                item.da_type
            )));
        }
        Ok(DialogueAct { items })
    }

    pub fn items(&self) -> &[DaItem] {
        &self.items
    }

    pub fn into_items(self) -> Vec<DaItem> {
        self.items
    }

    /// DA types in order of first appearance.
    pub fn da_types(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for item in &self.items {
            if !seen.contains(&item.da_type.as_str()) {
                seen.push(item.da_type.as_str());
            }
        }
        seen
    }

    /// `(slot, value)` pairs of items that carry both.
    pub fn slot_values(&self) -> impl Iterator<Item = (&str, &str)> {
        self.items
            .iter()
            .filter_map(|i| Some((i.slot.as_deref()?, i.value.as_deref()?)))
    }

    pub fn has_slots(&self) -> bool {
        self.items.iter().any(|i| i.slot.is_some())
    }

    /// Returns a copy with the value of the `n`-th occurrence of each slot
    /// replaced according to `assign`.
    pub fn map_values<F>(&self, mut assign: F) -> DialogueAct
    where
        F: FnMut(&str, &str) -> String,
    {
        let items = self
            .items
            .iter()
            .map(|item| match (&item.slot, &item.value) {
                (Some(slot), Some(value)) => DaItem {
                    value: Some(assign(slot, value)),
                    ..item.clone()
                },
                _ => item.clone(),
            })
            .collect();
        DialogueAct { items }
    }
}

impl fmt::Display for DialogueAct {
    /// Canonical form: consecutive slotted items of one type are grouped
    /// into a single act; values needing it are double-quoted.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first_act = true;
        let mut i = 0;
        while i < self.items.len() {
            let head = &self.items[i];
            if !first_act {
                f.write_str("&")?;
            }
            first_act = false;
            write!(f, "{}(", head.da_type)?;
            if head.slot.is_none() {
                f.write_str(")")?;
                i += 1;
                continue;
            }
            let mut j = i;
            while j < self.items.len()
                && self.items[j].da_type == head.da_type
                && self.items[j].slot.is_some()
            {
                if j > i {
                    f.write_str(",")?;
                }
                let item = &self.items[j];
                f.write_str(item.slot.as_deref().unwrap_or_default())?;
                if let Some(value) = &item.value {
                    f.write_str("=")?;
                    write_value(f, value)?;
                }
                j += 1;
            }
            f.write_str(")")?;
            i = j;
        }
        Ok(())
    }
}

fn is_special(c: char) -> bool {
    matches!(c, '(' | ')' | ',' | '=' | '&' | '"' | '\\')
}

fn write_value(f: &mut fmt::Formatter<'_>, value: &str) -> fmt::Result {
    let needs_quotes = value.is_empty() || value.chars().any(|c| c.is_whitespace() || is_special(c));
    if !needs_quotes {
        return f.write_str(value);
    }
    f.write_str("\"")?;
    for c in value.chars() {
        if c == '"' || c == '\\' {
            f.write_str("\\")?;
        }
        write!(f, "{c}")?;
    }
    f.write_str("\"")
}

impl FromStr for DialogueAct {
    type Err = Error;

    /// Parses without checking DA types against a registry.
    fn from_str(s: &str) -> Result<Self> {
        Parser::new(s).parse()
    }
}

/// Parses a DA and checks its types and slots against `registry`.
pub fn parse_da(text: &str, registry: &Registry) -> Result<DialogueAct> {
    let da: DialogueAct = text.parse()?;
    registry.validate(&da)?;
    Ok(da)
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn new(s: &str) -> Self {
        Parser {
            chars: s.chars().collect(),
            pos: 0,
        }
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Syntax {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, expected: char) -> Result<()> {
        self.skip_ws();
        match self.peek() {
            Some(c) if c == expected => {
                self.pos += 1;
                Ok(())
            }
            Some(c) => self.error(format!("expected `{expected}`, found `{c}`")),
            None => self.error(format!("expected `{expected}`, found end of input")),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| !c.is_whitespace() && !is_special(c))
        {
            self.pos += 1;
        }
        if start == self.pos {
            return self.error(format!("expected {what}"));
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn value(&mut self) -> Result<String> {
        self.skip_ws();
        if self.peek() == Some('"') {
            self.pos += 1;
            let mut out = String::new();
            loop {
                match self.peek() {
                    None => return self.error("unterminated quoted value"),
                    Some('"') => {
                        self.pos += 1;
                        break;
                    }
                    Some('\\') => {
                        self.pos += 1;
                        match self.peek() {
                            Some(c) => out.push(c),
                            None => return self.error("dangling escape"),
                        }
                        self.pos += 1;
                    }
                    Some(c) => {
                        out.push(c);
                        self.pos += 1;
                    }
                }
            }
            return Ok(normalize_ws(&out));
        }
        let start = self.pos;
        while self.peek().is_some_and(|c| !is_special(c)) {
            self.pos += 1;
        }
        let raw: String = self.chars[start..self.pos].iter().collect();
        let value = normalize_ws(&raw);
        if value.is_empty() {
            self.pos = start;
            return self.error("expected a value");
        }
        Ok(value)
    }

    fn parse(mut self) -> Result<DialogueAct> {
        let mut items = Vec::new();
        loop {
            let da_type = self.ident("a dialogue act type")?;
            self.expect('(')?;
            self.skip_ws();
            if self.peek() == Some(')') {
                self.pos += 1;
                items.push(DaItem::slotless(&da_type));
            } else {
                loop {
                    let slot = self.ident("a slot name")?;
                    self.skip_ws();
                    let value = if self.peek() == Some('=') {
                        self.pos += 1;
                        Some(self.value()?)
                    } else {
                        None
                    };
                    items.push(DaItem {
                        da_type: da_type.clone(),
                        slot: Some(slot),
                        value,
                    });
                    self.skip_ws();
                    match self.peek() {
                        Some(',') => self.pos += 1,
                        Some(')') => {
                            self.pos += 1;
                            break;
                        }
                        Some(c) => return self.error(format!("expected `,` or `)`, found `{c}`")),
                        None => return self.error("expected `,` or `)`, found end of input"),
                    }
                }
            }
            self.skip_ws();
            match self.peek() {
                None => break,
                Some('&') => self.pos += 1,
                Some(c) => return self.error(format!("expected `&` or end of input, found `{c}`")),
            }
        }
        DialogueAct::new(items)
    }
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Closed inventories of DA types and slots.
///
/// The file format is a plain key list with two sections:
///
/// ```text
/// [da_types]
/// inform
/// goodbye
/// [slots]
/// name
/// ```
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Registry {
    pub da_types: BTreeSet<String>,
    pub slots: BTreeSet<String>,
}

impl Registry {
    /// DA types and slots of the restaurant domain.
    pub fn restaurant() -> Self {
        let da_types = [
            "inform",
            "inform_only_match",
            "inform_no_match",
            "confirm",
            "select",
            "request",
            "?confirm",
            "?request",
            "?reqmore",
            "goodbye",
        ];
        let slots = [
            "name",
            "type",
            "area",
            "near",
            "address",
            "phone",
            "postcode",
            "price",
            "price_range",
            "food",
            "good_for_meal",
            "kids_allowed",
            "count",
        ];
        Registry {
            da_types: da_types.iter().map(|s| s.to_string()).collect(),
            slots: slots.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut da_types = BTreeSet::new();
        let mut slots = BTreeSet::new();
        let mut section: Option<&mut BTreeSet<String>> = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line {
                "[da_types]" => section = Some(&mut da_types),
                "[slots]" => section = Some(&mut slots),
                _ if line.starts_with('[') => {
                    return Err(Error::format(i + 1, format!("unknown section {line}")))
                }
                key => match section.as_deref_mut() {
                    Some(set) => {
                        set.insert(key.to_owned());
                    }
                    None => return Err(Error::format(i + 1, "key outside of a section")),
                },
            }
        }
        if da_types.is_empty() {
            return Err(Error::format(0, "registry lists no DA types"));
        }
        Ok(Registry { da_types, slots })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Registry::parse(&fs::read_to_string(path)?)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::from("[da_types]\n");
        for t in &self.da_types {
            out.push_str(t);
            out.push('\n');
        }
        out.push_str("[slots]\n");
        for s in &self.slots {
            out.push_str(s);
            out.push('\n');
        }
        out
    }

    pub fn validate(&self, da: &DialogueAct) -> Result<()> {
        for item in da.items() {
            if !self.da_types.contains(&item.da_type) {
                return Err(Error::UnknownDaType(item.da_type.clone()));
            }
            if let Some(slot) = &item.slot {
                if !self.slots.contains(slot) {
                    return Err(Error::UnknownSlot(slot.clone()));
                }
            }
        }
        Ok(())
    }
}

/// Which slots are abstracted to placeholders and how.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DelexPolicy {
    /// Slots whose values are replaced by `X-<slot>`.
    pub delex_slots: BTreeSet<String>,
    /// Values that stay verbatim even in delexicalized slots (`dont_care`).
    pub retained_values: BTreeSet<String>,
    /// Slots realized by their value verbatim, with a single surface form.
    pub verbatim_slots: BTreeSet<String>,
}

impl DelexPolicy {
    /// All registry slots except `kids_allowed`; `dont_care` retained;
    /// `count` realized verbatim.
    pub fn for_registry(registry: &Registry) -> Self {
        DelexPolicy {
            delex_slots: registry
                .slots
                .iter()
                .filter(|s| s.as_str() != "kids_allowed")
                .cloned()
                .collect(),
            retained_values: ["dont_care".to_owned()].into(),
            verbatim_slots: ["count".to_owned()].into(),
        }
    }

    /// Whether this slot-value pair is replaced by a placeholder.
    pub fn is_delexicalized(&self, slot: &str, value: &str) -> bool {
        self.delex_slots.contains(slot) && !self.retained_values.contains(value)
    }

    pub fn is_verbatim(&self, slot: &str) -> bool {
        self.verbatim_slots.contains(slot)
    }

    /// Slots (with multiplicity, DA order) expected as placeholders.
    pub fn expected_placeholders<'a>(&self, da: &'a DialogueAct) -> Vec<&'a str> {
        da.slot_values()
            .filter(|(slot, value)| self.is_delexicalized(slot, value))
            .map(|(slot, _)| slot)
            .collect()
    }
}

impl Default for DelexPolicy {
    fn default() -> Self {
        DelexPolicy::for_registry(&Registry::restaurant())
    }
}

/// Original values of delexicalized slots, in DA order.
pub type Substitutions = Vec<(String, String)>;

/// Replaces values of delexicalized slots with placeholders.
pub fn delexicalize_da(da: &DialogueAct, policy: &DelexPolicy) -> (DialogueAct, Substitutions) {
    let mut subs = Vec::new();
    let delex = da.map_values(|slot, value| {
        if policy.is_delexicalized(slot, value) {
            subs.push((slot.to_owned(), value.to_owned()));
            placeholder(slot)
        } else {
            value.to_owned()
        }
    });
    (delex, subs)
}

/// Canonical string of the delexicalized DA; used to keep data parts
/// disjoint.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct DaSignature(pub String);

impl DaSignature {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DaSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn da_signature(da: &DialogueAct, policy: &DelexPolicy) -> DaSignature {
    DaSignature(delexicalize_da(da, policy).0.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TripleMode {
    Delexicalized,
    Lexicalized,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Triple {
    pub da_type: String,
    pub slot: String,
    pub value: String,
}

/// Encoder input: one `type–slot–value` triple per item, with the DA type
/// repeated for every slot.
pub fn da_to_triples(da: &DialogueAct, mode: TripleMode, policy: &DelexPolicy) -> Vec<Triple> {
    da.items()
        .iter()
        .map(|item| {
            let slot = item.slot.clone().unwrap_or_else(|| NONE_MARKER.to_owned());
            let value = match (&item.slot, &item.value) {
                (Some(slot), Some(value))
                    if mode == TripleMode::Delexicalized && policy.is_delexicalized(slot, value) =>
                {
                    placeholder(slot)
                }
                (_, Some(value)) => value.clone(),
                (_, None) => NONE_MARKER.to_owned(),
            };
            Triple {
                da_type: item.da_type.clone(),
                slot,
                value,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn da(s: &str) -> DialogueAct {
        s.parse().unwrap()
    }

    #[test]
    fn parses_multi_slot_inform() {
        let parsed = parse_da(
            r#"inform(food=Turkish,name="Green Spirit",price_range=expensive)"#,
            &Registry::restaurant(),
        )
        .unwrap();
        assert_eq!(parsed.items().len(), 3);
        assert!(parsed.items().iter().all(|i| i.da_type == "inform"));
        assert_eq!(parsed.items()[1].value.as_deref(), Some("Green Spirit"));
    }

    #[test]
    fn parses_slotless_and_valueless() {
        let bye = da("goodbye()");
        assert_eq!(bye.items(), &[DaItem::slotless("goodbye")]);
        let req = da("?request(area)");
        assert_eq!(req.items()[0].slot.as_deref(), Some("area"));
        assert_eq!(req.items()[0].value, None);
    }

    #[test]
    fn reports_offset_of_truncated_input() {
        match "inform(".parse::<DialogueAct>() {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_type() {
        let err = parse_da("chitchat()", &Registry::restaurant()).unwrap_err();
        assert!(matches!(err, Error::UnknownDaType(t) if t == "chitchat"));
    }

    #[test]
    fn normalizes_whitespace_and_quotes() {
        let parsed = da(" inform ( name = \"Kočár   z Vídně\" , area=Malá  Strana ) ");
        assert_eq!(parsed.items()[0].value.as_deref(), Some("Kočár z Vídně"));
        assert_eq!(parsed.items()[1].value.as_deref(), Some("Malá Strana"));
        assert_eq!(
            parsed.to_string(),
            r#"inform(name="Kočár z Vídně",area="Malá Strana")"#
        );
    }

    #[test]
    fn serializes_canonically() {
        let s = r#"inform(food=Turkish,name="Green Spirit",price_range=expensive)"#;
        assert_eq!(da(s).to_string(), s);
        assert_eq!(da("inform(a=1)&goodbye()").to_string(), "inform(a=1)&goodbye()");
        assert!(DialogueAct::new(vec![]).is_err());
    }

    #[test]
    fn delexicalizes_all_but_kids_allowed() {
        let policy = DelexPolicy::default();
        let (delex, subs) = delexicalize_da(&da("inform(name=Ananta,kids_allowed=yes)"), &policy);
        assert_eq!(delex.to_string(), "inform(name=X-name,kids_allowed=yes)");
        assert_eq!(subs, vec![("name".to_owned(), "Ananta".to_owned())]);

        let (delex, subs) = delexicalize_da(&da("inform(area=dont_care)"), &policy);
        assert_eq!(delex.to_string(), "inform(area=dont_care)");
        assert!(subs.is_empty());

        let (delex, subs) = delexicalize_da(&da("goodbye()"), &policy);
        assert_eq!(delex.to_string(), "goodbye()");
        assert!(subs.is_empty());
    }

    #[test]
    fn signatures_abstract_values() {
        let policy = DelexPolicy::default();
        let a = da_signature(&da("inform(name=Ananta,food=Czech)"), &policy);
        let b = da_signature(&da("inform(name=BarBar,food=Indian)"), &policy);
        assert_eq!(a, b);
        let c = da_signature(&da("confirm(name=Ananta,food=Czech)"), &policy);
        assert_ne!(a, c);
        let k1 = da_signature(&da("inform(kids_allowed=yes)"), &policy);
        let k2 = da_signature(&da("inform(kids_allowed=no)"), &policy);
        assert_ne!(k1, k2);
    }

    #[test]
    fn dont_care_abstraction_is_configurable() {
        let mut policy = DelexPolicy::default();
        let a = da("inform(area=dont_care)");
        let b = da("inform(area=Karlín)");
        assert_ne!(da_signature(&a, &policy), da_signature(&b, &policy));
        policy.retained_values.clear();
        assert_eq!(da_signature(&a, &policy), da_signature(&b, &policy));
    }

    #[test]
    fn triples_repeat_the_type() {
        let policy = DelexPolicy::default();
        let t = da_to_triples(&da("inform(food=Turkish,name=G)"), TripleMode::Lexicalized, &policy);
        let flat: Vec<_> = t.iter().map(|t| (t.da_type.as_str(), t.slot.as_str(), t.value.as_str())).collect();
        assert_eq!(flat, vec![("inform", "food", "Turkish"), ("inform", "name", "G")]);

        let t = da_to_triples(&da("goodbye()"), TripleMode::Delexicalized, &policy);
        assert_eq!(t.len(), 1);
        assert_eq!((t[0].slot.as_str(), t[0].value.as_str()), (NONE_MARKER, NONE_MARKER));

        let t = da_to_triples(&da("inform(name=Ananta)"), TripleMode::Delexicalized, &policy);
        assert_eq!(t[0].value, "X-name");
    }

    #[test]
    fn registry_file_round_trip() {
        let reg = Registry::restaurant();
        assert_eq!(Registry::parse(&reg.to_file_string()).unwrap(), reg);
        assert!(Registry::parse("inform\n").is_err());
    }

    fn arb_value() -> impl Strategy<Value = String> {
        prop_oneof![
            "[a-zA-Z0-9_]{1,8}",
            "[a-zA-Zčěšá]{1,5}( [a-zA-Zčěšá]{1,5}){0,2}",
            Just("dont_care".to_owned()),
            "[a-z,()&=\" ]{1,6}".prop_map(|s| s.split_whitespace().collect::<Vec<_>>().join(" ")),
        ]
        .prop_filter("non-empty", |s| !s.is_empty())
    }

    fn arb_item() -> impl Strategy<Value = DaItem> {
        let da_type = prop::sample::select(vec!["inform", "confirm", "?request", "goodbye"]);
        let slot = prop::sample::select(vec!["name", "area", "food", "kids_allowed"]);
        (da_type, prop::option::of((slot, prop::option::of(arb_value())))).prop_map(|(t, sv)| {
            match sv {
                None => DaItem::slotless(t),
                Some((s, v)) => DaItem {
                    da_type: t.to_owned(),
                    slot: Some(s.to_owned()),
                    value: v,
                },
            }
        })
    }

    proptest! {
        #[test]
        fn parse_serialize_round_trip(items in prop::collection::vec(arb_item(), 1..6)) {
            let act = DialogueAct::new(items).unwrap();
            let text = act.to_string();
            let back: DialogueAct = text.parse().unwrap();
            prop_assert_eq!(&back, &act);
            prop_assert_eq!(back.to_string(), text);
        }

        #[test]
        fn triple_count_matches_items(items in prop::collection::vec(arb_item(), 1..6)) {
            let act = DialogueAct::new(items).unwrap();
            let triples = da_to_triples(&act, TripleMode::Delexicalized, &DelexPolicy::default());
            prop_assert_eq!(triples.len(), act.items().len());
        }

        #[test]
        fn signature_ignores_delexicalized_values(
            a in "[A-Za-z]{1,6}", b in "[A-Za-z]{1,6}", kids in prop::bool::ANY
        ) {
            let policy = DelexPolicy::default();
            let k = if kids { "yes" } else { "no" };
            let x = da(&format!("inform(name={a},kids_allowed={k})"));
            let y = da(&format!("inform(name={b},kids_allowed={k})"));
            prop_assert_eq!(da_signature(&x, &policy), da_signature(&y, &policy));
        }
    }
}
