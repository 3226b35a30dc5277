//! Synthetic Czech-like restaurant data for tests, examples and the guide.
//!
//! Texts are built from fixed clause templates per DA item, with slot
//! values inflected from a small lexicon, so every token carries a lemma
//! and a positional tag.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{prepare, RawInstance};
use crate::da::{DaItem, DialogueAct};
use crate::delex::{DelexOptions, Instance};
use crate::morph::{FormLexicon, MorphTag, SurfaceForm};

/// `(form, lemma, tag)` of template words.
const WORDS: &[(&str, &str, &str)] = &[
    ("je", "být", "VB-S---3P-AA---"),
    ("dobrá", "dobrý", "AAFS1----1A----"),
    ("restaurace", "restaurace", "NNFS1-----A----"),
    ("volba", "volba", "NNFS1-----A----"),
    ("podává", "podávat", "VB-S---3P-AA---"),
    ("nabízí", "nabízet", "VB-S---3P-AA---"),
    ("kuchyni", "kuchyně", "NNFS4-----A----"),
    ("na", "na", "RR--6----------"),
    ("najdete", "najít", "VB-P---2P-AA---"),
    ("ji", "on", "PPFS4--3-------"),
    ("blízko", "blízko", "RR--2----------"),
    ("leží", "ležet", "VB-S---3P-AA---"),
    ("nedaleko", "nedaleko", "RR--2----------"),
    ("patří", "patřit", "VB-S---3P-AA---"),
    ("do", "do", "RR--2----------"),
    ("kategorie", "kategorie", "NNFS2-----A----"),
    ("vhodná", "vhodný", "AAFS1----1A----"),
    ("pro", "pro", "RR--4----------"),
    ("děti", "dítě", "NNFP4-----A----"),
    ("není", "být", "VB-S---3P-NA---"),
    ("různé", "různý", "AAFP4----1A----"),
    ("kuchyně", "kuchyně", "NNFP4-----A----"),
    ("našel", "najít", "VpYS---XR-AA---"),
    ("jsem", "být", "VB-S---1P-AA---"),
    ("restaurací", "restaurace", "NNFP2-----A----"),
    ("nic", "nic", "PY--1----------"),
    ("nemám", "mít", "VB-S---1P-NA---"),
    ("nikdo", "nikdo", "PY--1----------"),
    ("nepodává", "podávat", "VB-S---3P-NA---"),
    ("restauraci", "restaurace", "NNFS4-----A----"),
    ("neznám", "znát", "VB-S---1P-NA---"),
    ("chcete", "chtít", "VB-P---2P-AA---"),
    ("v", "v", "RR--6----------"),
    ("kategorii", "kategorie", "NNFS6-----A----"),
    ("jaké", "jaký", "AAFS6----1A----"),
    ("lokalitě", "lokalita", "NNFS6-----A----"),
    ("hledáte", "hledat", "VB-P---2P-AA---"),
    ("jakou", "jaký", "AAFS4----1A----"),
    ("preferujete", "preferovat", "VB-P---2P-AA---"),
    ("cenovou", "cenový", "AAFS4----1A----"),
    ("nebo", "nebo", "J^-------------"),
    ("mohu", "moci", "VB-S---1P-AA---"),
    ("vám", "vy", "PP-P3--2-------"),
    ("ještě", "ještě", "Db-------------"),
    ("s", "s", "RR--7----------"),
    ("něčím", "něco", "PZ--7----------"),
    ("pomoci", "pomoci", "Vf--------A----"),
    ("shledanou", "shledaná", "NNFS4-----A----"),
    ("děkuji", "děkovat", "VB-S---1P-AA---"),
    (",", ",", "Z:-------------"),
    (".", ".", "Z:-------------"),
    ("?", "?", "Z:-------------"),
];

const COUNT_TAG: &str = "C=-------------";

/// Case order of paradigms below: nom, gen, dat, acc, loc, ins.
const CASES: [char; 6] = ['1', '2', '3', '4', '6', '7'];
const CASE_FREQ: [u64; 6] = [5, 2, 1, 2, 3, 1];

type Paradigm = (&'static str, &'static str, &'static str, [&'static str; 6]);

/// `(slot, value, tag prefix (POS + gender + number), forms by case)`.
const PARADIGMS: &[Paradigm] = &[
    ("name", "Ananta", "NNFS", ["Ananta", "Ananty", "Anantě", "Anantu", "Anantě", "Anantou"]),
    ("name", "Kolkovna", "NNFS", ["Kolkovna", "Kolkovny", "Kolkovně", "Kolkovnu", "Kolkovně", "Kolkovnou"]),
    ("name", "Mlýnec", "NNIS", ["Mlýnec", "Mlýnce", "Mlýnci", "Mlýnec", "Mlýnci", "Mlýncem"]),
    ("name", "Místo", "NNNS", ["Místo", "Místa", "Místu", "Místo", "Místě", "Místem"]),
    ("area", "Smíchov", "NNIS", ["Smíchov", "Smíchova", "Smíchovu", "Smíchov", "Smíchově", "Smíchovem"]),
    ("area", "Karlín", "NNIS", ["Karlín", "Karlína", "Karlínu", "Karlín", "Karlíně", "Karlínem"]),
    ("area", "Žižkov", "NNIS", ["Žižkov", "Žižkova", "Žižkovu", "Žižkov", "Žižkově", "Žižkovem"]),
    ("area", "Vinohrady", "NNIP", ["Vinohrady", "Vinohrad", "Vinohradům", "Vinohrady", "Vinohradech", "Vinohrady"]),
    ("area", "Letná", "NNFS", ["Letná", "Letné", "Letné", "Letnou", "Letné", "Letnou"]),
    ("near", "Národní divadlo", "NNNS", [
        "Národní divadlo", "Národního divadla", "Národnímu divadlu", "Národní divadlo", "Národním divadle", "Národním divadlem",
    ]),
    ("near", "Hlavní nádraží", "NNNS", [
        "Hlavní nádraží", "Hlavního nádraží", "Hlavnímu nádraží", "Hlavní nádraží", "Hlavním nádraží", "Hlavním nádraží",
    ]),
    ("near", "Karlův most", "NNIS", [
        "Karlův most", "Karlova mostu", "Karlovu mostu", "Karlův most", "Karlově mostě", "Karlovým mostem",
    ]),
    ("food", "Indian", "AAFS", ["indická", "indické", "indické", "indickou", "indické", "indickou"]),
    ("food", "Italian", "AAFS", ["italská", "italské", "italské", "italskou", "italské", "italskou"]),
    ("food", "Czech", "AAFS", ["česká", "české", "české", "českou", "české", "českou"]),
    ("food", "Chinese", "AAFS", ["čínská", "čínské", "čínské", "čínskou", "čínské", "čínskou"]),
    ("food", "Turkish", "AAFS", ["turecká", "turecké", "turecké", "tureckou", "turecké", "tureckou"]),
    ("price_range", "expensive", "AAFS", ["drahá", "drahé", "drahé", "drahou", "drahé", "drahou"]),
    ("price_range", "cheap", "AAFS", ["levná", "levné", "levné", "levnou", "levné", "levnou"]),
    ("price_range", "moderate", "AAFS", [
        "středně drahá", "středně drahé", "středně drahé", "středně drahou", "středně drahé", "středně drahou",
    ]),
    ("good_for_meal", "breakfast", "NNFS", ["snídaně", "snídaně", "snídani", "snídani", "snídani", "snídaní"]),
    ("good_for_meal", "lunch", "NNIS", ["oběd", "obědu", "obědu", "oběd", "obědě", "obědem"]),
    ("good_for_meal", "dinner", "NNFS", ["večeře", "večeře", "večeři", "večeři", "večeři", "večeří"]),
];

/// Names that do not inflect: a single form.
const INDECLINABLE: &[(&str, &str, &str)] = &[
    ("name", "Café Savoy", "NNNS1-----A----"),
    ("name", "U Fleků", "NNIS1-----A----"),
];

fn paradigm_tag(prefix: &str, case: char) -> MorphTag {
    let s = if prefix.starts_with("AA") {
        format!("{prefix}{case}----1A----")
    } else {
        format!("{prefix}{case}-----A----")
    };
    s.parse().expect("valid paradigm tag")
}

/// Lexicon of all slot values used by [`restaurant_raw`].
pub fn restaurant_lexicon() -> FormLexicon {
    let mut lex = FormLexicon::new();
    for (slot, value, prefix, forms) in PARADIGMS {
        for (k, form) in forms.iter().enumerate() {
            let mut f = SurfaceForm::new(form, forms[0], paradigm_tag(prefix, CASES[k]));
            f.frequency = CASE_FREQ[k];
            lex.insert(slot, value, f).expect("non-empty form");
        }
    }
    for (slot, value, tag) in INDECLINABLE {
        let mut f = SurfaceForm::new(value, value, tag.parse().expect("valid tag"));
        f.frequency = 5;
        lex.insert(slot, value, f).expect("non-empty form");
    }
    lex
}

fn values_of(slot: &str) -> Vec<&'static str> {
    let mut v: Vec<&str> = PARADIGMS.iter().filter(|p| p.0 == slot).map(|p| p.1).collect();
    v.extend(INDECLINABLE.iter().filter(|p| p.0 == slot).map(|p| p.1));
    v
}

/// Clause templates for a DA item. `{slot:c}` is the slot's value in case
/// `c`, `{count}` the verbatim value, `form|tag` overrides a word's tag.
fn templates(da_type: &str, slot: Option<&str>, value: Option<&str>) -> &'static [&'static str] {
    match (da_type, slot, value) {
        ("inform", Some("name"), _) => &["{name:1} je dobrá restaurace", "restaurace {name:1} je dobrá volba"],
        ("inform", Some("food"), Some("dont_care")) => &["podává různé kuchyně"],
        ("inform", Some("food"), _) => &["podává {food:4} kuchyni", "nabízí {food:4} kuchyni"],
        ("inform", Some("area"), _) => &["je na {area:6}", "najdete ji na {area:6}"],
        ("inform", Some("near"), _) => &["je blízko {near:2}", "leží nedaleko {near:2}"],
        ("inform", Some("price_range"), _) => &["patří do {price_range:2} kategorie"],
        ("inform", Some("good_for_meal"), _) => &["je vhodná na|RR--4---------- {good_for_meal:4}"],
        ("inform", Some("kids_allowed"), Some("yes")) => &["je vhodná pro děti"],
        ("inform", Some("kids_allowed"), _) => &["není vhodná pro děti"],
        ("inform", Some("count"), _) => &["našel jsem {count} restaurací"],
        ("inform_no_match", Some("area"), _) => &["na {area:6} nic nemám"],
        ("inform_no_match", Some("food"), _) => &["{food:4} kuchyni nikdo nepodává"],
        ("inform_no_match", Some("name"), _) => &["restauraci {name:4} neznám"],
        ("confirm", Some("area"), _) => &["chcete restauraci na {area:6}"],
        ("confirm", Some("food"), _) => &["chcete {food:4} kuchyni"],
        ("confirm", Some("price_range"), _) => &["chcete restauraci v {price_range:6} kategorii"],
        ("request", Some("area"), _) => &["v jaké lokalitě hledáte"],
        ("request", Some("food"), _) => &["jakou kuchyni preferujete"],
        ("request", Some("price_range"), _) => &["jakou cenovou kategorii|NNFS4-----A---- hledáte"],
        ("select", Some("area"), _) => &["chcete restauraci na {area:6}", "nebo na {area:6}"],
        ("?reqmore", None, _) => &["mohu vám ještě s něčím pomoci"],
        ("goodbye", None, _) => &["na|RR--4---------- shledanou", "děkuji , na|RR--4---------- shledanou"],
        _ => panic!("no template for {da_type}({slot:?}={value:?})"),
    }
}

fn is_question(da_type: &str) -> bool {
    matches!(da_type, "confirm" | "request" | "select" | "?reqmore")
}

struct Realizer {
    lex: FormLexicon,
    words: BTreeMap<&'static str, (&'static str, &'static str)>,
}

impl Realizer {
    fn new() -> Self {
        Realizer {
            lex: restaurant_lexicon(),
            words: WORDS.iter().map(|(f, l, t)| (*f, (*l, *t))).collect(),
        }
    }

    fn push_word(&self, token: &str, out: &mut RawInstance) {
        let (form, tag_override) = match token.split_once('|') {
            Some((f, t)) => (f, Some(t)),
            None => (token, None),
        };
        let (lemma, tag) = self.words.get(form).copied().unwrap_or_else(|| panic!("unknown template word `{form}`"));
        out.text.push(form.to_owned());
        out.lemmas.push(lemma.to_owned());
        out.tags.push(tag_override.unwrap_or(tag).parse().expect("valid tag"));
    }

    fn push_value(&self, slot: &str, value: &str, case: char, out: &mut RawInstance) {
        let forms = self.lex.forms(slot, value);
        let form = forms
            .iter()
            .find(|f| f.tag.case() == case)
            .or(forms.first())
            .unwrap_or_else(|| panic!("no forms for {slot}={value}"));
        let lemmas: Vec<&str> = form.lemma.split_whitespace().collect();
        for (k, tok) in form.tokens().enumerate() {
            let lemma = if lemmas.len() == form.token_len() { lemmas[k] } else { tok };
            out.text.push(tok.to_owned());
            out.lemmas.push(lemma.to_owned());
            out.tags.push(form.tag);
        }
    }

    fn realize(&self, da: &DialogueAct, rng: &mut ChaCha8Rng) -> RawInstance {
        let mut out = RawInstance {
            da: da.clone(),
            text: Vec::new(),
            lemmas: Vec::new(),
            tags: Vec::new(),
        };
        let items = da.items();
        for (k, item) in items.iter().enumerate() {
            if k > 0 {
                self.push_word(",", &mut out);
            }
            let options = templates(&item.da_type, item.slot.as_deref(), item.value.as_deref());
            let template = if item.da_type == "select" {
                options[k.min(1)]
            } else {
                options[rng.gen_range(0..options.len())]
            };
            for tok in template.split_whitespace() {
                if let Some(inner) = tok.strip_prefix('{').and_then(|t| t.strip_suffix('}')) {
                    let value = item.value.as_deref().expect("slot template needs a value");
                    match inner.split_once(':') {
                        Some((slot, case)) => self.push_value(slot, value, case.chars().next().unwrap(), &mut out),
                        None => {
                            out.text.push(value.to_owned());
                            out.lemmas.push(value.to_owned());
                            out.tags.push(COUNT_TAG.parse().expect("valid tag"));
                        }
                    }
                } else {
                    self.push_word(tok, &mut out);
                }
            }
        }
        let end = if items.first().is_some_and(|i| is_question(&i.da_type)) { "?" } else { "." };
        self.push_word(end, &mut out);
        out
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).copied().expect("non-empty")
}

fn item(t: &str, slot: &str, value: &str) -> DaItem {
    DaItem::with_value(t, slot, value)
}

/// A random DA of the synthetic domain.
pub fn random_da(rng: &mut ChaCha8Rng) -> DialogueAct {
    let roll = rng.gen_range(0..100);
    let items = match roll {
        0..=54 => {
            let mut items = vec![item("inform", "name", pick(rng, &values_of("name")))];
            let mut extra = ["food", "area", "near", "price_range", "good_for_meal", "kids_allowed"];
            extra.shuffle(rng);
            let n = rng.gen_range(0..=3);
            for slot in &extra[..n] {
                let value = match *slot {
                    "kids_allowed" => pick(rng, &["yes", "no"]),
                    "food" if rng.gen_bool(0.1) => "dont_care",
                    s => pick(rng, &values_of(s)),
                };
                items.push(item("inform", slot, value));
            }
            items
        }
        55..=61 => {
            let mut items = vec![item("inform", "count", &rng.gen_range(2..10).to_string())];
            items.push(item("inform", "area", pick(rng, &values_of("area"))));
            items
        }
        62..=69 => {
            let slot = pick(rng, &["area", "food", "name"]);
            vec![item("inform_no_match", slot, pick(rng, &values_of(slot)))]
        }
        70..=77 => {
            let slot = pick(rng, &["area", "food", "price_range"]);
            vec![item("confirm", slot, pick(rng, &values_of(slot)))]
        }
        78..=85 => vec![DaItem::new("request", Some(pick(rng, &["area", "food", "price_range"])), None).expect("valid item")],
        86..=89 => {
            let areas = values_of("area");
            let a: Vec<&&str> = areas.choose_multiple(rng, 2).collect();
            vec![item("select", "area", a[0]), item("select", "area", a[1])]
        }
        90..=94 => vec![DaItem::slotless("?reqmore")],
        _ => vec![DaItem::slotless("goodbye")],
    };
    DialogueAct::new(items).expect("non-empty DA")
}

/// `n` raw rows with text-aligned lemmas and tags.
pub fn restaurant_raw(n: usize, seed: u64) -> Vec<RawInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = Realizer::new();
    (0..n)
        .map(|_| {
            let da = random_da(&mut rng);
            r.realize(&da, &mut rng)
        })
        .collect()
}

/// [`restaurant_raw`] after preparation against [`restaurant_lexicon`].
pub fn restaurant_corpus(n: usize, seed: u64) -> Vec<Instance> {
    prepare(&restaurant_raw(n, seed), &restaurant_lexicon(), &DelexOptions::default())
        .expect("synthetic rows are well-formed")
        .instances
}

// ---------------------------------------------------------------------------
// gender agreement

/// A held-out placeholder whose correct form is fixed by the gender of the
/// following noun.
#[derive(Clone, Debug, PartialEq)]
pub struct AgreementSlot {
    /// Delexicalized tokens with one `X-price_range`.
    pub tokens: Vec<String>,
    pub da: DialogueAct,
    pub correct: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgreementData {
    pub lexicon: FormLexicon,
    /// Lexicalized training sentences.
    pub train: Vec<Vec<String>>,
    pub test: Vec<AgreementSlot>,
}

impl AgreementData {
    /// Share of test slots whose correct form is the feminine one, the
    /// accuracy of always choosing the most frequent form.
    pub fn majority_share(&self) -> f64 {
        let fem = self.test.iter().filter(|s| s.correct.ends_with('á')).count();
        fem as f64 / self.test.len() as f64
    }
}

/// Sentences `<name> je <price> <food> <noun> .` where price and food
/// adjectives agree with the noun's gender (feminine 50 %, neuter 30 %,
/// masculine 20 %).
pub fn gender_agreement(seed: u64, n_train: usize, n_test: usize) -> AgreementData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // (noun, gender index)
    let nouns = [("restaurace", 0), ("bistro", 1), ("podnik", 2)];
    let prices = [("expensive", ["drahá", "drahé", "drahý"]), ("cheap", ["levná", "levné", "levný"])];
    let foods = [["turecká", "turecké", "turecký"], ["italská", "italské", "italský"], ["česká", "české", "český"]];
    let names = ["Ananta", "Kolkovna", "Mlýnec", "Místo"];
    let intros: [&[&str]; 3] = [&["je"], &["to", "je"], &["máme", "tu"]];
    let sample = |rng: &mut ChaCha8Rng| {
        let g = match rng.gen_range(0..10) {
            0..=4 => 0,
            5..=7 => 1,
            _ => 2,
        };
        let noun = nouns[g].0;
        let (value, forms) = prices[rng.gen_range(0..prices.len())];
        let food = foods[rng.gen_range(0..foods.len())][g];
        let mut left = vec![pick(rng, &names).to_owned()];
        left.extend(intros[rng.gen_range(0..intros.len())].iter().map(|s| s.to_string()));
        (left, value, forms[g].to_owned(), vec![food.to_owned(), noun.to_owned(), ".".to_owned()])
    };
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut train = Vec::with_capacity(n_train);
    for _ in 0..n_train {
        let (mut s, _, form, right) = sample(&mut rng);
        *counts.entry(form.clone()).or_default() += 1;
        s.push(form);
        s.extend(right);
        train.push(s);
    }
    let mut lexicon = FormLexicon::new();
    for (value, forms) in prices {
        for (g, form) in forms.iter().enumerate() {
            let tag: MorphTag = format!("AA{}S1----1A----", ['F', 'N', 'I'][g]).parse().expect("valid tag");
            let mut f = SurfaceForm::new(form, forms[2], tag);
            f.frequency = counts.get(*form).copied().unwrap_or(0);
            lexicon.insert("price_range", value, f).expect("non-empty form");
        }
    }
    let test = (0..n_test)
        .map(|_| {
            let (mut tokens, value, correct, right) = sample(&mut rng);
            tokens.push("X-price_range".to_owned());
            tokens.extend(right);
            AgreementSlot {
                tokens,
                da: DialogueAct::new(vec![item("inform", "price_range", value)]).expect("non-empty DA"),
                correct,
            }
        })
        .collect();
    AgreementData { lexicon, train, test }
}
