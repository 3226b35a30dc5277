//! Acceptance criteria. Each check prints one `PASS`/`FAIL` line; the
//! process exits non-zero when any available check fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use morphnlg::corpus::{corpus_stats, plan_expansion, slotless_signatures, split, ExpansionConfig, Part, Targets};
use morphnlg::da::{da_signature, da_to_triples, parse_da, DelexPolicy, Registry, TripleMode};
use morphnlg::delex::Instance;
use morphnlg::eval::{bleu, bootstrap_test, cider, nist, rouge_l, ser, EvalPair};
use morphnlg::generation::{
    deinterleave, dictionary_from_corpus, interleave, model_gradchecks, realize_lemma_tags, train_generator,
    Generator, GeneratorConfig, OutputMode, TrainExample, Vocab,
};
use morphnlg::io::load_corpus;
use morphnlg::lexicalize::{lexicalize_output, train_bi_lm, BiLmConfig, LexStrategy};
use morphnlg::morph::{FormLexicon, MorphTag};
use morphnlg::ngram::NGramModel;
use morphnlg::neural::layer_gradchecks;
use morphnlg::testkit::{gender_agreement, restaurant_corpus, restaurant_lexicon};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    /// Required input is missing; reported as a failure but not fatal.
    Unavailable(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn main() {
    let checks: [(&str, fn() -> Outcome); 11] = [
        ("gradient-suite", gradient_suite),
        ("beam-oracle", beam_oracle),
        ("overfit", overfit),
        ("ser-oracle", ser_oracle),
        ("metric-cross-check", metric_cross_check),
        ("dataset-statistics", dataset_statistics),
        ("split-properties", split_properties),
        ("expansion", expansion),
        ("lexicalizer-behavior", lexicalizer_behavior),
        ("lemma-tag-roundtrip", lemma_tag_roundtrip),
        ("bootstrap", bootstrap),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Outcome::Pass(d) => println!("PASS {name} ({secs:.1}s): {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {d}");
            }
            Outcome::Unavailable(d) => println!("FAIL {name} (not run): {d}"),
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    // central differences: truncation error O(eps^2), roundoff O(1/eps)
    let mut results = layer_gradchecks(11, 5, 1e-4).unwrap();
    results.extend(model_gradchecks(11, 5, 1e-4).unwrap());
    let elapsed = start.elapsed();
    let worst = results.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let mut kinds: BTreeMap<String, usize> = BTreeMap::new();
    for r in &results {
        *kinds.entry(r.name.split('#').next().unwrap().to_owned()).or_default() += 1;
    }
    let ok = worst < 1e-4 && kinds.values().all(|&n| n >= 5) && elapsed < Duration::from_secs(60);
    check(
        ok,
        format!(
            "{} checks over {:?}, max rel error {worst:.2e} (< 1e-4), {:.1}s (< 60s)",
            results.len(),
            kinds,
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------

/// Best complete sequence (ending in EOS, at most `max_len` words) by
/// enumerating every word sequence with per-step decoder calls.
fn enumerate_best(g: &Generator, enc: &morphnlg::generation::Encoded, vocab: usize, max_len: usize) -> (Vec<usize>, f64) {
    let mut best: Option<(Vec<usize>, f64)> = None;
    // (words, state, logprob so far)
    let mut frontier = vec![(Vec::new(), enc.init.clone(), 0.0)];
    for depth in 0..=max_len {
        let mut next = Vec::new();
        for (words, state, lp) in &frontier {
            let prev = words.last().copied();
            let (state2, logprobs) = g.decoder_step(enc, state, prev).unwrap();
            let done = lp + logprobs[0];
            if best.as_ref().map_or(true, |b| done > b.1) {
                best = Some((words.clone(), done));
            }
            if depth < max_len {
                for w in 1..vocab {
                    let mut ws = words.clone();
                    ws.push(w);
                    next.push((ws, state2.clone(), lp + logprobs[w]));
                }
            }
        }
        frontier = next;
    }
    best.unwrap()
}

fn beam_oracle() -> Outcome {
    let mut mismatches = Vec::new();
    for trial in 0..20u64 {
        let config = GeneratorConfig {
            embedding: 4,
            cell: 5,
            dropout: 0.0,
            seed: 500 + trial,
            ..Default::default()
        };
        let vin = Vocab::from((0..6).map(|i| format!("i{i}")).collect::<Vec<_>>());
        let vout = Vocab::from(vec!["</s>".to_owned(), "a".to_owned(), "b".to_owned()]);
        let mut g = Generator::new(config, vin, vout).unwrap();
        // sharpen the random weights so the search space is not flat
        for id in g.params.ids().collect::<Vec<_>>() {
            g.params.get_mut(id).data_mut().iter_mut().for_each(|x| *x *= 20.0);
        }
        let enc = g.encode(&[[1, 2, 3], [4, 5, 1]]).unwrap();
        let (want, want_lp) = enumerate_best(&g, &enc, 3, 3);
        // 3 + 9 + 27 live prefixes at most: beam 27 never prunes
        let got = g.beam_search(&enc, 27, 3).unwrap();
        if got[0].0 != want || (got[0].1 - want_lp).abs() > 1e-9 {
            mismatches.push(trial);
        }
    }
    check(
        mismatches.is_empty(),
        format!("20 trials, 3-token vocabulary, length <= 3; mismatching trials {mismatches:?}"),
    )
}

// ---------------------------------------------------------------------------

fn overfit() -> Outcome {
    let start = Instant::now();
    let policy = DelexPolicy::default();
    let lex = restaurant_lexicon();
    let corpus = restaurant_corpus(400, 3);
    // ten instances with distinct signatures
    let mut seen = BTreeSet::new();
    let chosen: Vec<&Instance> = corpus
        .iter()
        .filter(|i| seen.insert(da_signature(&i.da, &policy)))
        .take(10)
        .collect();
    let config = GeneratorConfig {
        embedding: 32,
        cell: 32,
        dropout: 0.0,
        lr: 0.01,
        batch: 5,
        min_freq: 1,
        min_passes: 1,
        max_passes: 300,
        patience: 300,
        seed: 1,
        ..Default::default()
    };
    let train: Vec<TrainExample> = chosen
        .iter()
        .map(|i| TrainExample {
            triples: da_to_triples(&i.da, TripleMode::Delexicalized, &policy),
            target: morphnlg::generation::target_tokens(i, OutputMode::WordForms, &lex).unwrap(),
        })
        .collect();
    let (g, log) = train_generator(&config, &train, &[]).unwrap();
    let mut pairs = Vec::new();
    let mut ser_total = 0.0;
    for (inst, ex) in chosen.iter().zip(&train) {
        let words = g.greedy(&ex.triples).unwrap();
        ser_total += ser(&words, &inst.da, &policy);
        pairs.push(EvalPair::new(words, vec![ex.target.clone()]));
    }
    let b = bleu(&pairs).unwrap();
    let elapsed = start.elapsed();
    check(
        ser_total == 0.0 && b >= 95.0 && log.records.len() <= 300 && elapsed < Duration::from_secs(300),
        format!(
            "cell 32, 10 instances: greedy train SER {ser_total:.1}, BLEU {b:.2} (>= 95), best pass {} of {}, {:.0}s (< 300s)",
            log.best_pass,
            log.records.len(),
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------

fn ser_oracle() -> Outcome {
    let reg = Registry::restaurant();
    let policy = DelexPolicy::default();
    // (DA, output, hand-computed SER in percent)
    let cases: [(&str, &str, f64); 20] = [
        ("inform(name=Ananta)", "X-name je dobrá .", 0.0),
        ("inform(name=Ananta)", "je dobrá .", 100.0),
        ("inform(name=Ananta)", "X-name a X-name .", 100.0),
        ("inform(name=Ananta,food=Indian)", "X-name podává X-food .", 0.0),
        ("inform(name=Ananta,food=Indian)", "X-name podává .", 50.0),
        ("inform(name=Ananta,food=Indian)", "X-name X-area .", 100.0),
        ("inform(name=Ananta,food=Indian,area=Smíchov)", "X-name X-food X-area", 0.0),
        ("inform(name=Ananta,food=Indian,area=Smíchov)", "X-name", 200.0 / 3.0),
        ("inform(name=Ananta,food=Indian,area=Smíchov)", "X-name X-food X-area X-near", 100.0 / 3.0),
        ("inform(name=Ananta,food=Indian,area=Smíchov)", "", 100.0),
        ("inform(name=Ananta,kids_allowed=yes)", "X-name je pro děti .", 0.0),
        ("inform(name=Ananta,kids_allowed=yes)", "X-name X-kids_allowed", 100.0),
        ("inform(name=Ananta,food=dont_care)", "X-name podává různé kuchyně", 0.0),
        ("inform(name=Ananta,food=dont_care)", "X-name podává X-food", 100.0),
        ("select(area=Smíchov,area=Karlín)", "X-area nebo X-area ?", 0.0),
        ("select(area=Smíchov,area=Karlín)", "X-area ?", 50.0),
        ("select(area=Smíchov,area=Karlín)", "X-area X-area X-area X-food", 100.0),
        ("goodbye()", "na shledanou .", 0.0),
        ("goodbye()", "X-name", 0.0),
        ("inform(count=3,area=Smíchov)", "našel jsem X-count restaurací na X-area", 0.0),
    ];
    let mut wrong = Vec::new();
    for (k, (da, out, want)) in cases.iter().enumerate() {
        let da = parse_da(da, &reg).unwrap();
        let toks: Vec<&str> = out.split_whitespace().collect();
        if ser(&toks, &da, &policy) != *want {
            wrong.push(k);
        }
    }
    let corpus = restaurant_corpus(1000, 5);
    let gold_nonzero = corpus.iter().filter(|i| ser(&i.delex_text, &i.da, &policy) != 0.0).count();
    check(
        wrong.is_empty() && gold_nonzero == 0,
        format!(
            "20 handcrafted cases, mismatches {wrong:?}; gold references with SER > 0: {gold_nonzero} of {}",
            corpus.len()
        ),
    )
}

// ---------------------------------------------------------------------------

fn metric_cross_check() -> Outcome {
    let v: serde_json::Value = serde_json::from_str(include_str!("data/metric_reference.json")).unwrap();
    let pairs: Vec<EvalPair> = v["pairs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| EvalPair::from_text(p["hyp"].as_str().unwrap(), &[p["ref"].as_str().unwrap()]))
        .collect();
    let got = [
        ("bleu", bleu(&pairs).unwrap(), 0.1),
        ("nist", nist(&pairs).unwrap(), 0.01),
        ("rouge_l", rouge_l(&pairs).unwrap(), 0.1),
        ("cider", cider(&pairs).unwrap(), 0.1),
    ];
    let mut ok = pairs.len() == 50;
    let mut parts = Vec::new();
    for (name, value, tol) in got {
        let want = v[name].as_f64().unwrap();
        ok &= (value - want).abs() <= tol;
        parts.push(format!("{name} {value:.4} vs {want:.4} (tol {tol})"));
    }
    check(ok, format!("{} pairs: {}", pairs.len(), parts.join(", ")))
}

// ---------------------------------------------------------------------------

/// Directory with `corpus.jsonl` and `lexicon.tsv` prepared from the
/// released Czech restaurant dataset.
fn dataset_dir() -> Option<PathBuf> {
    std::env::var_os("MORPHNLG_DATASET").map(PathBuf::from)
}

fn dataset_statistics() -> Outcome {
    let Some(dir) = dataset_dir() else {
        return Outcome::Unavailable(
            "released dataset not present; set MORPHNLG_DATASET to a prepared corpus directory".to_owned(),
        );
    };
    let reg = Registry::restaurant();
    let policy = DelexPolicy::for_registry(&reg);
    let corpus = match load_corpus(dir.join("corpus.jsonl"), &reg) {
        Ok(c) => c,
        Err(e) => return Outcome::Fail(format!("cannot read corpus: {e}")),
    };
    let lex = match FormLexicon::load(dir.join("lexicon.tsv")) {
        Ok(l) => l,
        Err(e) => return Outcome::Fail(format!("cannot read lexicon: {e}")),
    };
    let s = corpus_stats(&corpus, &lex, &policy);
    let avg = s.avg_lexicalizations.unwrap_or(f64::NAN);
    let ok = s.instances == 5192
        && s.unique_delex_instances == 2752
        && s.signatures == 248
        && s.lemmas == 532
        && s.forms == 962
        && (avg - 3.84).abs() <= 0.01;
    check(
        ok,
        format!(
            "{} instances, {} unique, {} DAs, {} lemmas, {} forms, {avg:.2} avg (want 5192/2752/248/532/962/3.84)",
            s.instances, s.unique_delex_instances, s.signatures, s.lemmas, s.forms
        ),
    )
}

// ---------------------------------------------------------------------------

fn split_properties() -> Outcome {
    let policy = DelexPolicy::default();
    let corpus = restaurant_corpus(2500, 7);
    let pinned = slotless_signatures(&corpus, &policy);
    let spec = split(&corpus, [3.0, 1.0, 1.0], 42, &pinned, &policy).unwrap();
    let again = split(&corpus, [3.0, 1.0, 1.0], 42, &pinned, &policy).unwrap();
    let parts = spec.apply(&corpus, &policy);
    let sigs: Vec<BTreeSet<_>> = parts
        .iter()
        .map(|p| p.iter().map(|i| da_signature(&i.da, &policy)).collect())
        .collect();
    let overlap = (0..3)
        .flat_map(|a| (a + 1..3).map(move |b| (a, b)))
        .map(|(a, b)| sigs[a].intersection(&sigs[b]).count())
        .sum::<usize>();
    let total = corpus.len() as f64;
    let shares: Vec<f64> = parts.iter().map(|p| p.len() as f64 / total).collect();
    let within = shares
        .iter()
        .zip([0.6, 0.2, 0.2])
        .all(|(s, want)| (s - want).abs() <= 0.1 * want);
    let slotless_in_train = pinned.iter().all(|s| spec.assignment.get(s) == Some(&Part::Train));
    let covered = parts.iter().map(|p| p.len()).sum::<usize>() == corpus.len();
    check(
        overlap == 0 && within && slotless_in_train && !pinned.is_empty() && spec == again && covered,
        format!(
            "{}/{}/{} instances (shares {:.3}/{:.3}/{:.3}, each within 10% of 3:1:1), overlap {overlap}, \
             {} slotless signatures in train: {slotless_in_train}, deterministic: {}",
            parts[0].len(),
            parts[1].len(),
            parts[2].len(),
            shares[0],
            shares[1],
            shares[2],
            pinned.len(),
            spec == again
        ),
    )
}

// ---------------------------------------------------------------------------

fn expansion() -> Outcome {
    let policy = DelexPolicy::default();
    let lex = restaurant_lexicon();
    let corpus = restaurant_corpus(600, 9);
    let lm = NGramModel::train(&corpus.iter().map(|i| i.lemmas.clone()).collect::<Vec<_>>(), 3).unwrap();
    let mut targets: Targets = morphnlg::corpus::targets_from_instances(&corpus, &policy);
    for (k, n) in targets.values_mut().enumerate() {
        *n += k % 7;
    }
    let plan = plan_expansion(&corpus, &targets, &lm, &lex, &policy, &ExpansionConfig::default()).unwrap();
    let want: usize = targets.values().sum();
    let exact = plan.total() == want
        && plan
            .signatures
            .iter()
            .all(|s| s.uniques.len() + s.copies.len() == targets[&s.signature]);

    // two texts that only swap words the LM has seen in identical contexts
    let reg = Registry::restaurant();
    let da = parse_da("inform(name=Ananta)", &reg).unwrap();
    let mk = |w: &str| {
        let toks: Vec<String> = ["X-name", "je", w, "restaurace", "."].iter().map(|s| s.to_string()).collect();
        Instance {
            da: da.clone(),
            text: toks.clone(),
            delex_text: toks.clone(),
            lemmas: toks,
            tags: Vec::new(),
        }
    };
    let pair = vec![mk("dobrá"), mk("skvělá")];
    let lm2 = NGramModel::train(&pair.iter().map(|i| i.lemmas.clone()).collect::<Vec<_>>(), 3).unwrap();
    let sig = da_signature(&da, &policy);
    let targets2: Targets = [(sig, 2000)].into_iter().collect();
    let plan2 = plan_expansion(&pair, &targets2, &lm2, &lex, &policy, &ExpansionConfig::default()).unwrap();
    let sp = &plan2.signatures[0];
    let equal = (sp.probabilities[0] - sp.probabilities[1]).abs() < 1e-12;
    let c0 = sp.copies.iter().filter(|c| c.unique == 0).count() + 1;
    let c1 = sp.copies.iter().filter(|c| c.unique == 1).count() + 1;
    let ratio = c0 as f64 / c1 as f64;
    check(
        exact && plan2.total() == 2000 && equal && (0.9..=1.1).contains(&ratio),
        format!(
            "{} signatures, {} instances out for {want} targeted; equal-score pair at 2000: {c0}:{c1} (ratio {ratio:.3}, want [0.9, 1.1])",
            plan.signatures.len(),
            plan.total()
        ),
    )
}

// ---------------------------------------------------------------------------

fn lexicalizer_behavior() -> Outcome {
    let data = gender_agreement(3, 600, 100);
    let policy = DelexPolicy::default();
    let config = BiLmConfig {
        embedding: 16,
        cell: 32,
        lr: 0.01,
        batch: 10,
        passes: 30,
        seed: 1,
        ..Default::default()
    };
    let (lm, _) = train_bi_lm(&config, &data.train, &[]).unwrap();
    let mut rnn_correct = 0;
    let mut mf_correct = 0;
    for slot in &data.test {
        let mut rnn = LexStrategy::RnnLm(&lm);
        let out = lexicalize_output(&slot.tokens, &slot.da, &data.lexicon, &mut rnn, OutputMode::WordForms, &policy).unwrap();
        let mut mf = LexStrategy::MostFrequent;
        let base = lexicalize_output(&slot.tokens, &slot.da, &data.lexicon, &mut mf, OutputMode::WordForms, &policy).unwrap();
        let at = slot.tokens.iter().position(|t| t == "X-price_range").unwrap();
        rnn_correct += usize::from(out[at] == slot.correct);
        mf_correct += usize::from(base[at] == slot.correct);
    }
    let ceiling = (data.majority_share() * data.test.len() as f64).round() as usize;
    check(
        rnn_correct >= 95 && mf_correct == ceiling,
        format!(
            "RNN LM {rnn_correct}/100 agreeing forms (>= 95); most-frequent {mf_correct}/100, ceiling {ceiling}/100"
        ),
    )
}

// ---------------------------------------------------------------------------

fn random_tag(rng: &mut ChaCha8Rng) -> MorphTag {
    const VALUES: &[u8] = b"-ABCDFINSP1234567";
    let s: String = (0..15).map(|_| VALUES[rng.gen_range(0..VALUES.len())] as char).collect();
    s.parse().unwrap()
}

fn lemma_tag_roundtrip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let lemmas_pool = ["být", "restaurace", "X-name", "X-area", "dobrý", "na", ",", ".", "v", "Karlův most"];
    let mut identity = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(0..15);
        let lemmas: Vec<String> = (0..n).map(|_| lemmas_pool[rng.gen_range(0..lemmas_pool.len())].to_owned()).collect();
        let tags: Vec<MorphTag> = (0..n).map(|_| random_tag(&mut rng)).collect();
        let d = deinterleave(&interleave(&lemmas, &tags).unwrap());
        identity += usize::from(d.lemmas == lemmas && d.tags == tags && d.repairs == 0);
    }

    let lex = restaurant_lexicon();
    let corpus = restaurant_corpus(1500, 17);
    let dict = dictionary_from_corpus(&corpus).unwrap();
    let (mut positions, mut reproduced) = (0usize, 0usize);
    for inst in &corpus {
        let tags = inst.delex_tags(&lex).unwrap();
        let realized = realize_lemma_tags(&inst.lemmas, &tags, &dict).unwrap();
        for (got, want) in realized.tokens.iter().zip(&inst.delex_text) {
            positions += 1;
            reproduced += usize::from(got == want);
        }
    }
    let rate = reproduced as f64 / positions as f64;
    check(
        identity == 1000 && rate >= 0.99,
        format!("interleave/deinterleave identity {identity}/1000; realization {reproduced}/{positions} = {:.4} (>= 0.99)", rate),
    )
}

// ---------------------------------------------------------------------------

fn bootstrap() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let a: Vec<f64> = (0..500).map(|_| rng.gen_range(0.0..1.0)).collect();
    let same = bootstrap_test(&a, &a, 1000, 1).unwrap();
    let worse: Vec<f64> = a.iter().map(|x| x - rng.gen_range(0.01..0.2)).collect();
    let dominated = bootstrap_test(&a, &worse, 1000, 1).unwrap();
    check(
        (same - 0.5).abs() <= 0.05 && dominated < 0.01,
        format!("identical systems p = {same:.3} (0.5 +- 0.05); dominated system p = {dominated:.3} (< 0.01)"),
    )
}
