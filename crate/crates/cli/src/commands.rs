use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use morphnlg::corpus::{
    corpus_stats, expand, prepare, read_targets, review_to_string, slotless_signatures, split, ExpansionConfig,
};
use morphnlg::da::{parse_da, placeholder_slot, DelexPolicy, DialogueAct, Registry};
use morphnlg::delex::{DelexOptions, Instance};
use morphnlg::eval::{ser_counts, EvalPair, MetricReport};
use morphnlg::generation::{
    da_indicators, deinterleave, dictionary_from_corpus, is_tag_token, model_gradchecks, realize_lemma_tags, target_tokens,
    train_generator, train_reranker, Generator, GeneratorConfig, OutputMode, RerankExample, RerankMode, Reranker,
    RerankerConfig, TrainingLog,
};
use morphnlg::io::{load_corpus, read_raw, save_corpus};
use morphnlg::lexicalize::{
    lexicalize_output, lm_sentences, sentence_seed, train_bi_lm, BiLmConfig, BiRnnLm, LexKind, LexStrategy,
    LmRecord,
};
use morphnlg::morph::{FormLexicon, MorphDictionary};
use morphnlg::neural::layer_gradchecks;
use morphnlg::ngram::NGramModel;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::errors::{DataError, InternalError, UsageError};
use crate::manifest::Manifest;
use crate::{experiment, Cli, Command, TrainCommand};

/// One decoded DA.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedRecord {
    pub da: String,
    pub mode: OutputMode,
    /// Best candidate without the end marker, space-separated.
    pub tokens: String,
    pub logprob: f64,
    /// Reranker penalty, when a reranker was used.
    pub penalty: Option<usize>,
}

/// One lexicalized output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LexicalizedRecord {
    pub da: String,
    /// Word forms with placeholders, used for slot error rate.
    pub delex: String,
    pub text: String,
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    let registry = load_registry(cli.registry.as_deref())?;
    let out = &cli.out;
    match &cli.command {
        Command::Prepare(a) => cmd_prepare(out, &registry, a),
        Command::Split(a) => cmd_split(out, &registry, a),
        Command::Expand(a) => cmd_expand(out, &registry, a),
        Command::Stats(a) => cmd_stats(out, &registry, a),
        Command::Train(t) => cmd_train(out, &registry, t),
        Command::Generate(a) => cmd_generate(out, &registry, a),
        Command::Lexicalize(a) => cmd_lexicalize(out, &registry, a),
        Command::Evaluate(a) => cmd_evaluate(out, &registry, a),
        Command::Gradcheck(a) => cmd_gradcheck(out, a),
        Command::Run(a) => experiment::run(out, &registry, a),
    }
}

// ---------------------------------------------------------------------------
// helpers

pub fn load_registry(path: Option<&Path>) -> Result<Registry> {
    match path {
        None => Ok(Registry::restaurant()),
        Some(p) => {
            require(p, "registry")?;
            Registry::load(p).with_context(|| format!("reading registry {}", p.display()))
        }
    }
}

/// Fails with a usage error naming the missing prerequisite.
pub fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(UsageError(format!("{what} not found: {}", path.display())).into())
    }
}

pub fn read_corpus(path: &Path, registry: &Registry) -> Result<Vec<Instance>> {
    require(path, "corpus")?;
    load_corpus(path, registry).with_context(|| format!("reading corpus {}", path.display()))
}

pub fn read_lexicon(path: &Path) -> Result<FormLexicon> {
    require(path, "lexicon")?;
    FormLexicon::load(path).with_context(|| format!("reading lexicon {}", path.display()))
}

pub fn read_json_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            require(p, "config")?;
            let text = fs::read_to_string(p)?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path, what: &str) -> Result<Vec<T>> {
    require(path, what)?;
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| DataError(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn split_tokens(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_owned).collect()
}

/// Distinct DAs in order of first appearance.
pub fn distinct_das(instances: &[Instance]) -> Vec<DialogueAct> {
    let mut seen = BTreeSet::new();
    instances
        .iter()
        .filter(|i| seen.insert(i.da.to_string()))
        .map(|i| i.da.clone())
        .collect()
}

// ---------------------------------------------------------------------------
// corpus commands

fn cmd_prepare(out: &Path, registry: &Registry, a: &crate::PrepareArgs) -> Result<()> {
    require(&a.raw, "raw corpus")?;
    let lex = read_lexicon(&a.lexicon)?;
    let raw = read_raw(File::open(&a.raw)?, registry).with_context(|| format!("reading {}", a.raw.display()))?;
    let policy = DelexPolicy::for_registry(registry);
    let prepared = prepare(&raw, &lex, &DelexOptions::new(policy))?;
    create_dir(out)?;
    let mut manifest = Manifest::new("prepare")
        .config(&serde_json::json!({ "allow_missing": a.allow_missing }))
        .input("raw", &a.raw)
        .input("lexicon", &a.lexicon);
    let corpus_path = out.join("corpus.jsonl");
    save_corpus(&corpus_path, &prepared.instances)?;
    manifest.output(&corpus_path);
    let report = &prepared.report;
    let mut text = report.summary();
    for (idx, slots) in &report.missing {
        text.push_str(&format!("instance {}: missing {}\n", idx + 1, slots.join(", ")));
    }
    let report_path = out.join("report.txt");
    write_text(&report_path, &text)?;
    manifest.output(&report_path);
    manifest.write(out)?;
    print!("{text}");
    let missing = report.total_missing();
    if missing > 0 && !a.allow_missing {
        return Err(DataError(format!(
            "{missing} missing mentions (see {}); pass --allow-missing to accept",
            report_path.display()
        ))
        .into());
    }
    Ok(())
}

fn parse_ratios(s: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || UsageError(format!("ratios must look like 3:1:1, got `{s}`"));
    if parts.len() != 3 {
        return Err(bad().into());
    }
    let mut r = [0.0; 3];
    for (slot, p) in r.iter_mut().zip(parts) {
        *slot = p.trim().parse().map_err(|_| bad())?;
    }
    Ok(r)
}

fn cmd_split(out: &Path, registry: &Registry, a: &crate::SplitArgs) -> Result<()> {
    let ratios = parse_ratios(&a.ratios)?;
    let corpus = read_corpus(&a.corpus, registry)?;
    let policy = DelexPolicy::for_registry(registry);
    let pinned = if a.no_pin_slotless {
        BTreeSet::new()
    } else {
        slotless_signatures(&corpus, &policy)
    };
    let spec = split(&corpus, ratios, a.seed, &pinned, &policy)?;
    for w in &spec.warnings {
        eprintln!("warning: {w}");
    }
    create_dir(out)?;
    let mut manifest = Manifest::new("split")
        .seed(a.seed)
        .config(&serde_json::json!({ "ratios": ratios, "pin_slotless": !a.no_pin_slotless }))
        .input("corpus", &a.corpus);
    let parts = spec.apply(&corpus, &policy);
    for (name, part) in ["train", "dev", "test"].iter().zip(&parts) {
        let path = out.join(format!("{name}.jsonl"));
        save_corpus(&path, part)?;
        manifest.output(&path);
        println!("{name}\t{} instances", part.len());
    }
    let spec_path = out.join("split.json");
    write_text(&spec_path, &(serde_json::to_string_pretty(&spec)? + "\n"))?;
    manifest.output(&spec_path);
    manifest.write(out)?;
    Ok(())
}

fn cmd_expand(out: &Path, registry: &Registry, a: &crate::ExpandArgs) -> Result<()> {
    let corpus = read_corpus(&a.corpus, registry)?;
    let lex = read_lexicon(&a.lexicon)?;
    require(&a.targets, "targets file")?;
    let targets = read_targets(File::open(&a.targets)?)?;
    let lm = match &a.lm {
        Some(p) => {
            require(p, "n-gram LM")?;
            NGramModel::read_listing(File::open(p)?)?
        }
        None => NGramModel::train(&corpus.iter().map(|i| i.lemmas.clone()).collect::<Vec<_>>(), a.order)?,
    };
    let policy = DelexPolicy::for_registry(registry);
    let config = ExpansionConfig {
        seed: a.seed,
        temperature: a.temperature,
        length_normalize: a.length_normalize,
    };
    let expansion = expand(&corpus, &targets, &lm, &lex, &policy, &config)?;
    create_dir(out)?;
    let mut manifest = Manifest::new("expand")
        .seed(a.seed)
        .config(&serde_json::json!({
            "order": a.order,
            "temperature": a.temperature,
            "length_normalize": a.length_normalize,
        }))
        .input("corpus", &a.corpus)
        .input("lexicon", &a.lexicon)
        .input("targets", &a.targets);
    if let Some(p) = &a.lm {
        manifest = manifest.input("lm", p);
    }
    let path = out.join("expanded.jsonl");
    save_corpus(&path, &expansion.instances)?;
    manifest.output(&path);
    let review = out.join("review.tsv");
    write_text(&review, &review_to_string(&expansion.review))?;
    manifest.output(&review);
    manifest.write(out)?;
    println!("{} instances ({} sampled copies)", expansion.instances.len(), expansion.review.len());
    Ok(())
}

fn cmd_stats(out: &Path, registry: &Registry, a: &crate::StatsArgs) -> Result<()> {
    let corpus = read_corpus(&a.corpus, registry)?;
    let lex = read_lexicon(&a.lexicon)?;
    let stats = corpus_stats(&corpus, &lex, &DelexPolicy::for_registry(registry));
    create_dir(out)?;
    let mut manifest = Manifest::new("stats").input("corpus", &a.corpus).input("lexicon", &a.lexicon);
    let table = stats.to_table();
    let txt = out.join("stats.txt");
    write_text(&txt, &table)?;
    manifest.output(&txt);
    let json = out.join("stats.json");
    write_text(&json, &(serde_json::to_string_pretty(&stats)? + "\n"))?;
    manifest.output(&json);
    manifest.write(out)?;
    print!("{table}");
    Ok(())
}

// ---------------------------------------------------------------------------
// training

pub fn generator_examples(
    instances: &[Instance],
    config: &GeneratorConfig,
    lex: &FormLexicon,
    policy: &DelexPolicy,
) -> Result<Vec<morphnlg::generation::TrainExample>> {
    Ok(morphnlg::generation::training_examples(instances, config, lex, policy)?)
}

pub fn fit_generator(
    config: &GeneratorConfig,
    train: &[Instance],
    dev: &[Instance],
    lex: &FormLexicon,
    policy: &DelexPolicy,
) -> Result<(Generator, TrainingLog)> {
    let tr = generator_examples(train, config, lex, policy)?;
    let dv = generator_examples(dev, config, lex, policy)?;
    Ok(train_generator(config, &tr, &dv)?)
}

pub fn reranker_examples(
    instances: &[Instance],
    mode: OutputMode,
    lex: &FormLexicon,
    policy: &DelexPolicy,
) -> Result<Vec<RerankExample>> {
    instances
        .iter()
        .map(|i| Ok((target_tokens(i, mode, lex)?, da_indicators(&i.da, policy))))
        .collect()
}

pub fn fit_reranker(
    config: &RerankerConfig,
    mode: OutputMode,
    train: &[Instance],
    dev: &[Instance],
    lex: &FormLexicon,
    policy: &DelexPolicy,
) -> Result<(Reranker, Vec<RerankRecord>)> {
    let tr = reranker_examples(train, mode, lex, policy)?;
    let dv = reranker_examples(dev, mode, lex, policy)?;
    Ok(train_reranker(config, &tr, &dv)?)
}

use morphnlg::generation::RerankRecord;

pub fn fit_lm(config: &BiLmConfig, train: &[Instance], dev: &[Instance]) -> Result<(BiRnnLm, Vec<LmRecord>)> {
    let tr = lm_sentences(train, config.merge_multiword)?;
    let dv = lm_sentences(dev, config.merge_multiword)?;
    Ok(train_bi_lm(config, &tr, &dv)?)
}

fn jsonl_string<T: Serialize>(items: &[T]) -> Result<String> {
    let mut s = String::new();
    for item in items {
        s.push_str(&serde_json::to_string(item)?);
        s.push('\n');
    }
    Ok(s)
}

fn load_train_dev(registry: &Registry, data: &crate::TrainData) -> Result<(Vec<Instance>, Vec<Instance>)> {
    let train = read_corpus(&data.train, registry)?;
    let dev = match &data.dev {
        Some(p) => read_corpus(p, registry)?,
        None => Vec::new(),
    };
    Ok((train, dev))
}

fn data_manifest(name: &str, data: &crate::TrainData) -> Manifest {
    let mut m = Manifest::new(name).seed(data.seed).input("train", &data.train);
    if let Some(d) = &data.dev {
        m = m.input("dev", d);
    }
    if let Some(c) = &data.config {
        m = m.input("config", c);
    }
    m
}

fn cmd_train(out: &Path, registry: &Registry, t: &TrainCommand) -> Result<()> {
    let policy = DelexPolicy::for_registry(registry);
    match t {
        TrainCommand::Generator {
            data,
            lexicon,
            mode,
            input,
            max_passes,
        } => {
            let mut config: GeneratorConfig = read_json_config(data.config.as_deref())?;
            config.seed = data.seed;
            if let Some(m) = mode {
                config.mode = (*m).into();
            }
            if let Some(i) = input {
                config.input_mode = (*i).into();
            }
            if let Some(p) = max_passes {
                config.max_passes = *p;
                config.min_passes = config.min_passes.min(*p);
            }
            let lex = read_lexicon(lexicon)?;
            let (train, dev) = load_train_dev(registry, data)?;
            let (gen, log) = fit_generator(&config, &train, &dev, &lex, &policy)?;
            create_dir(out)?;
            let mut manifest = data_manifest("train generator", data).config(&config).input("lexicon", lexicon);
            let ckpt = out.join("generator.ckpt");
            gen.save(&ckpt)?;
            manifest.output(&ckpt);
            let log_path = out.join("generator-log.jsonl");
            write_text(&log_path, &log.to_jsonl())?;
            manifest.output(&log_path);
            manifest.write(out)?;
            println!("best pass {} dev BLEU {:.2}", log.best_pass, log.best_dev_bleu);
        }
        TrainCommand::Reranker {
            data,
            lexicon,
            mode,
            passes,
        } => {
            let mut config: RerankerConfig = read_json_config(data.config.as_deref())?;
            config.seed = data.seed;
            if let Some(p) = passes {
                config.passes = *p;
                config.validate_from = config.validate_from.min(*p);
            }
            let lex = read_lexicon(lexicon)?;
            let (train, dev) = load_train_dev(registry, data)?;
            let mode: OutputMode = (*mode).into();
            let (rr, log) = fit_reranker(&config, mode, &train, &dev, &lex, &policy)?;
            create_dir(out)?;
            let mut manifest = data_manifest("train reranker", data)
                .config(&serde_json::json!({ "reranker": config, "mode": mode }))
                .input("lexicon", lexicon);
            let ckpt = out.join("reranker.ckpt");
            rr.save(&ckpt)?;
            manifest.output(&ckpt);
            let log_path = out.join("reranker-log.jsonl");
            write_text(&log_path, &jsonl_string(&log)?)?;
            manifest.output(&log_path);
            manifest.write(out)?;
            println!("{} indicators, {} passes", rr.indicators.len(), log.len());
        }
        TrainCommand::LexicalizerLm { data, passes } => {
            let mut config: BiLmConfig = read_json_config(data.config.as_deref())?;
            config.seed = data.seed;
            if let Some(p) = passes {
                config.passes = *p;
            }
            let (train, dev) = load_train_dev(registry, data)?;
            let (lm, log) = fit_lm(&config, &train, &dev)?;
            create_dir(out)?;
            let mut manifest = data_manifest("train lexicalizer-lm", data).config(&config);
            let ckpt = out.join("bilm.ckpt");
            lm.save(&ckpt)?;
            manifest.output(&ckpt);
            let log_path = out.join("bilm-log.jsonl");
            write_text(&log_path, &jsonl_string(&log)?)?;
            manifest.output(&log_path);
            manifest.write(out)?;
            println!("vocabulary {} tokens, {} passes", lm.vocab.len(), log.len());
        }
        TrainCommand::NgramLm { corpus, order } => {
            let instances = read_corpus(corpus, registry)?;
            let lm = NGramModel::train(&instances.iter().map(|i| i.lemmas.clone()).collect::<Vec<_>>(), *order)?;
            create_dir(out)?;
            let mut manifest = Manifest::new("train ngram-lm")
                .config(&serde_json::json!({ "order": order }))
                .input("corpus", corpus);
            let path = out.join("ngram.lm");
            write_text(&path, &lm.to_listing())?;
            manifest.output(&path);
            manifest.write(out)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// generation and lexicalization

pub fn rerank_mode(weight: Option<f64>) -> RerankMode {
    match weight {
        Some(weight) => RerankMode::Linear { weight },
        None => RerankMode::Lexicographic,
    }
}

pub fn generate_records(
    gen: &Generator,
    reranker: Option<&Reranker>,
    das: &[DialogueAct],
    policy: &DelexPolicy,
    beam: usize,
    mode: RerankMode,
) -> Result<Vec<GeneratedRecord>> {
    das.iter()
        .map(|da| {
            let mut cands = gen.beam_decode(&gen.triples(da, policy), beam)?;
            if let Some(rr) = reranker {
                cands = rr.rerank(cands, da, policy, mode)?;
            }
            let best = cands
                .into_iter()
                .next()
                .ok_or_else(|| InternalError(format!("no candidates for {da}")))?;
            Ok(GeneratedRecord {
                da: da.to_string(),
                mode: gen.config.mode,
                tokens: best.words().join(" "),
                logprob: best.logprob,
                penalty: reranker.map(|_| best.penalty),
            })
        })
        .collect()
}

fn cmd_generate(out: &Path, registry: &Registry, a: &crate::GenerateArgs) -> Result<()> {
    require(&a.generator, "checkpoint")?;
    let gen = Generator::load(&a.generator)?;
    let reranker = match &a.reranker {
        Some(p) => {
            require(p, "checkpoint")?;
            Some(Reranker::load(p)?)
        }
        None => None,
    };
    let corpus = read_corpus(&a.corpus, registry)?;
    let policy = DelexPolicy::for_registry(registry);
    let beam = a.beam.unwrap_or(gen.config.beam);
    let records = generate_records(
        &gen,
        reranker.as_ref(),
        &distinct_das(&corpus),
        &policy,
        beam,
        rerank_mode(a.rerank_weight),
    )?;
    create_dir(out)?;
    let mut manifest = Manifest::new("generate")
        .config(&serde_json::json!({ "beam": beam, "rerank_weight": a.rerank_weight }))
        .input("generator", &a.generator)
        .input("corpus", &a.corpus);
    if let Some(p) = &a.reranker {
        manifest = manifest.input("reranker", p);
    }
    let path = out.join("generated.jsonl");
    write_jsonl(&path, &records)?;
    manifest.output(&path);
    manifest.write(out)?;
    println!("{} outputs", records.len());
    Ok(())
}

pub struct LexResources<'a> {
    pub lex: &'a FormLexicon,
    pub lm: Option<&'a BiRnnLm>,
    pub dict: Option<&'a MorphDictionary>,
}

pub fn lexicalize_records(
    records: &[GeneratedRecord],
    registry: &Registry,
    res: &LexResources,
    kind: LexKind,
    seed: u64,
) -> Result<Vec<LexicalizedRecord>> {
    let policy = DelexPolicy::for_registry(registry);
    let mut dropped_in = Vec::new();
    let out = records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let da = parse_da(&rec.da, registry)?;
            let tokens = split_tokens(&rec.tokens);
            let mut strategy = match kind {
                LexKind::Random => LexStrategy::random(sentence_seed(seed, i)),
                LexKind::MostFrequent => LexStrategy::MostFrequent,
                LexKind::RnnLm => LexStrategy::RnnLm(
                    res.lm.ok_or_else(|| UsageError("the rnn-lm strategy needs --lm".to_owned()))?,
                ),
            };
            let (delex, with_hints) = match rec.mode {
                OutputMode::WordForms => (tokens.clone(), tokens),
                OutputMode::LemmaTag => {
                    let dict = res.dict.ok_or_else(|| {
                        UsageError("lemma-tag outputs need a morphological dictionary (--dictionary-corpus)".to_owned())
                    })?;
                    let d = deinterleave(&tokens);
                    let realized = realize_lemma_tags(&d.lemmas, &d.tags, dict)?;
                    let hinted = realized.with_placeholder_tags();
                    (realized.tokens, hinted)
                }
            };
            let (fillable, dropped) = drop_unfillable(&with_hints, &da, &policy, rec.mode);
            if dropped > 0 {
                dropped_in.push(i + 1);
            }
            let text = lexicalize_output(&fillable, &da, res.lex, &mut strategy, rec.mode, &policy)?;
            Ok(LexicalizedRecord {
                da: rec.da.clone(),
                delex: delex.join(" "),
                text: text.join(" "),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if !dropped_in.is_empty() {
        eprintln!(
            "warning: {} of {} outputs had placeholders without a DA value (dropped from the text)",
            dropped_in.len(),
            records.len()
        );
    }
    Ok(out)
}

/// Removes placeholders whose slot has no delexicalized value in the DA (with their tag
/// hint in lemma-tag mode); returns the kept tokens and the number removed.
pub fn drop_unfillable(
    tokens: &[String],
    da: &DialogueAct,
    policy: &DelexPolicy,
    mode: OutputMode,
) -> (Vec<String>, usize) {
    let slots: BTreeSet<&str> = policy.expected_placeholders(da).into_iter().collect();
    let mut out = Vec::with_capacity(tokens.len());
    let mut dropped = 0;
    let mut i = 0;
    while i < tokens.len() {
        match placeholder_slot(&tokens[i]) {
            Some(slot) if !slots.contains(slot) => {
                dropped += 1;
                i += 1;
                if mode == OutputMode::LemmaTag && i < tokens.len() && is_tag_token(&tokens[i]) {
                    i += 1;
                }
            }
            _ => {
                out.push(tokens[i].clone());
                i += 1;
            }
        }
    }
    (out, dropped)
}

fn cmd_lexicalize(out: &Path, registry: &Registry, a: &crate::LexicalizeArgs) -> Result<()> {
    let records: Vec<GeneratedRecord> = read_jsonl(&a.generated, "generated outputs")?;
    let lex = read_lexicon(&a.lexicon)?;
    let lm = match (&a.lm, a.strategy) {
        (Some(p), _) => {
            require(p, "checkpoint")?;
            Some(BiRnnLm::load(p)?)
        }
        (None, LexKind::RnnLm) => return Err(UsageError("the rnn-lm strategy needs --lm".to_owned()).into()),
        (None, _) => None,
    };
    let dict = match &a.dictionary_corpus {
        Some(p) => Some(dictionary_from_corpus(&read_corpus(p, registry)?)?),
        None => None,
    };
    let res = LexResources {
        lex: &lex,
        lm: lm.as_ref(),
        dict: dict.as_ref(),
    };
    let lexicalized = lexicalize_records(&records, registry, &res, a.strategy, a.seed)?;
    create_dir(out)?;
    let mut manifest = Manifest::new("lexicalize")
        .seed(a.seed)
        .config(&serde_json::json!({ "strategy": a.strategy }))
        .input("generated", &a.generated)
        .input("lexicon", &a.lexicon);
    if let Some(p) = &a.lm {
        manifest = manifest.input("lm", p);
    }
    if let Some(p) = &a.dictionary_corpus {
        manifest = manifest.input("dictionary_corpus", p);
    }
    let path = out.join("lexicalized.jsonl");
    write_jsonl(&path, &lexicalized)?;
    manifest.output(&path);
    manifest.write(out)?;
    println!("{} sentences", lexicalized.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluation

pub fn evaluate_records(
    system: &[LexicalizedRecord],
    references: &[Instance],
    registry: &Registry,
) -> Result<MetricReport> {
    let policy = DelexPolicy::for_registry(registry);
    let mut refs: HashMap<String, Vec<Vec<String>>> = HashMap::new();
    for inst in references {
        refs.entry(inst.da.to_string()).or_default().push(inst.text.clone());
    }
    let mut pairs = Vec::with_capacity(system.len());
    let mut sers = Vec::with_capacity(system.len());
    for rec in system {
        let da = parse_da(&rec.da, registry)?;
        let r = refs
            .get(&da.to_string())
            .ok_or_else(|| DataError(format!("no reference for DA `{}`", rec.da)))?;
        pairs.push(EvalPair::new(split_tokens(&rec.text), r.clone()));
        sers.push(ser_counts(&split_tokens(&rec.delex), &da, &policy));
    }
    Ok(MetricReport::compute(&pairs, Some(&sers))?)
}

pub fn write_report(dir: &Path, report: &MetricReport, manifest: &mut Manifest) -> Result<()> {
    let json = dir.join("report.json");
    write_text(&json, &(serde_json::to_string_pretty(report)? + "\n"))?;
    manifest.output(&json);
    let txt = dir.join("report.txt");
    write_text(&txt, &report.to_table())?;
    manifest.output(&txt);
    Ok(())
}

fn cmd_evaluate(out: &Path, registry: &Registry, a: &crate::EvaluateArgs) -> Result<()> {
    let system: Vec<LexicalizedRecord> = read_jsonl(&a.system, "system outputs")?;
    let corpus = read_corpus(&a.corpus, registry)?;
    let report = evaluate_records(&system, &corpus, registry)?;
    create_dir(out)?;
    let mut manifest = Manifest::new("evaluate").input("system", &a.system).input("corpus", &a.corpus);
    write_report(out, &report, &mut manifest)?;
    manifest.write(out)?;
    print!("{}", report.to_table());
    Ok(())
}

// ---------------------------------------------------------------------------

fn cmd_gradcheck(out: &Path, a: &crate::GradcheckArgs) -> Result<()> {
    let mut results = layer_gradchecks(a.seed, a.instances, a.eps)?;
    results.extend(model_gradchecks(a.seed, a.instances, a.eps)?);
    let mut text = String::new();
    let mut failed = Vec::new();
    for r in &results {
        let ok = r.passed(a.tolerance);
        text.push_str(&format!(
            "{}\t{}\t{:.3e}\t{} values\n",
            if ok { "PASS" } else { "FAIL" },
            r.name,
            r.max_rel_error,
            r.checked
        ));
        if !ok {
            failed.push(r.name.clone());
        }
    }
    create_dir(out)?;
    let mut manifest = Manifest::new("gradcheck").seed(a.seed).config(&serde_json::json!({
        "instances": a.instances,
        "eps": a.eps,
        "tolerance": a.tolerance,
    }));
    let path = out.join("gradcheck.txt");
    write_text(&path, &text)?;
    manifest.output(&path);
    manifest.write(out)?;
    print!("{text}");
    if failed.is_empty() {
        Ok(())
    } else {
        Err(InternalError(format!("gradient check failed: {}", failed.join(", "))).into())
    }
}

/// Directory for one experiment artifact, created on demand.
pub fn subdir(base: &Path, parts: &[&str]) -> Result<PathBuf> {
    let mut p = base.to_path_buf();
    for part in parts {
        p.push(part);
    }
    create_dir(&p)?;
    Ok(p)
}

/// Mean of each metric over several reports.
pub fn mean_scores(reports: &[MetricReport]) -> BTreeMap<&'static str, f64> {
    let n = reports.len().max(1) as f64;
    let mut m = BTreeMap::new();
    let mut add = |k: &'static str, f: &dyn Fn(&MetricReport) -> f64| {
        m.insert(k, reports.iter().map(f).sum::<f64>() / n);
    };
    add("bleu", &|r| r.bleu);
    add("nist", &|r| r.nist);
    add("meteor", &|r| r.meteor);
    add("rouge_l", &|r| r.rouge_l);
    add("cider", &|r| r.cider);
    add("ser", &|r| r.ser.map_or(0.0, |s| s.corpus));
    m
}
