use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use morphnlg::da::{DelexPolicy, Registry};
use morphnlg::eval::MetricReport;
use morphnlg::generation::{dictionary_from_corpus, GeneratorConfig, InputMode, OutputMode, RerankerConfig};
use morphnlg::lexicalize::{BiLmConfig, LexKind};
use serde::{Deserialize, Serialize};

use crate::commands::{
    distinct_das, evaluate_records, fit_generator, fit_lm, fit_reranker, generate_records, lexicalize_records,
    mean_scores, read_corpus, read_lexicon, require, rerank_mode, subdir, write_jsonl, write_report, write_text,
    LexResources,
};
use crate::errors::UsageError;
use crate::manifest::Manifest;
use crate::RunArgs;

fn default_seeds() -> Vec<u64> {
    (1..=5).collect()
}

fn default_lexicalizers() -> Vec<LexKind> {
    LexKind::ALL.to_vec()
}

fn default_true() -> bool {
    true
}

/// Everything one experiment variant needs. Relative paths are resolved
/// against the configuration file's directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub train: PathBuf,
    #[serde(default)]
    pub dev: Option<PathBuf>,
    pub test: PathBuf,
    pub lexicon: PathBuf,
    /// Overrides `--out`.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default = "default_true")]
    pub use_reranker: bool,
    #[serde(default)]
    pub reranker: RerankerConfig,
    #[serde(default)]
    pub lm: BiLmConfig,
    #[serde(default)]
    pub rerank_weight: Option<f64>,
    #[serde(default = "default_lexicalizers")]
    pub lexicalizers: Vec<LexKind>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        require(path, "experiment config")?;
        let text = fs::read_to_string(path)?;
        let mut c: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut c.train);
        resolve(&mut c.test);
        resolve(&mut c.lexicon);
        if let Some(d) = c.dev.as_mut() {
            resolve(d);
        }
        if let Some(o) = c.output_dir.as_mut() {
            resolve(o);
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(UsageError("experiment needs at least one seed".to_owned()).into());
        }
        if self.lexicalizers.is_empty() {
            return Err(UsageError("experiment needs at least one lexicalizer".to_owned()).into());
        }
        require(&self.train, "train corpus")?;
        require(&self.test, "test corpus")?;
        require(&self.lexicon, "lexicon")?;
        if let Some(d) = &self.dev {
            require(d, "dev corpus")?;
        }
        Ok(())
    }
}

pub fn variant_name(mode: OutputMode, input: InputMode) -> String {
    let m = match mode {
        OutputMode::WordForms => "word_forms",
        OutputMode::LemmaTag => "lemma_tag",
    };
    let i = match input {
        InputMode::Delexicalized => "delex",
        InputMode::Lexicalized => "lex",
    };
    format!("{m}-{i}")
}

#[derive(Serialize)]
struct VariantReport<'a> {
    variant: &'a str,
    lexicalizer: LexKind,
    seeds: &'a [u64],
    mean: std::collections::BTreeMap<&'static str, f64>,
    runs: &'a [MetricReport],
}

/// Trains one generator (and reranker, LM) per seed and evaluates it with
/// every configured lexicalizer, so lexicalizer variants share models.
pub fn run(out: &Path, registry: &Registry, a: &RunArgs) -> Result<()> {
    let mut config = ExperimentConfig::load(&a.config)?;
    if let Some(m) = a.mode {
        config.generator.mode = m.into();
    }
    if let Some(i) = a.input {
        config.generator.input_mode = i.into();
    }
    if let Some(l) = &a.lexicalizers {
        config.lexicalizers = l.clone();
    }
    if let Some(s) = &a.seeds {
        config.seeds = s.clone();
    }
    config.validate()?;
    let out = config.output_dir.clone().unwrap_or_else(|| out.to_path_buf());
    let policy = DelexPolicy::for_registry(registry);
    let lex = read_lexicon(&config.lexicon)?;
    let train = read_corpus(&config.train, registry)?;
    let dev = match &config.dev {
        Some(p) => read_corpus(p, registry)?,
        None => Vec::new(),
    };
    let test = read_corpus(&config.test, registry)?;
    let das = distinct_das(&test);
    let dict = dictionary_from_corpus(&train)?;
    let mode = config.generator.mode;
    let variant = variant_name(mode, config.generator.input_mode);
    let vdir = subdir(&out, &[&variant])?;

    let mut reports: Vec<Vec<MetricReport>> = vec![Vec::new(); config.lexicalizers.len()];
    for &seed in &config.seeds {
        let sdir = subdir(&vdir, &[&format!("seed-{seed}")])?;
        let mut manifest = Manifest::new("run")
            .seed(seed)
            .config(&config)
            .input("train", &config.train)
            .input("test", &config.test)
            .input("lexicon", &config.lexicon);
        if let Some(d) = &config.dev {
            manifest = manifest.input("dev", d);
        }

        let gen_config = GeneratorConfig {
            seed,
            ..config.generator.clone()
        };
        let (gen, log) = fit_generator(&gen_config, &train, &dev, &lex, &policy)?;
        let p = sdir.join("generator.ckpt");
        gen.save(&p)?;
        manifest.output(&p);
        let p = sdir.join("generator-log.jsonl");
        write_text(&p, &log.to_jsonl())?;
        manifest.output(&p);

        let reranker = if config.use_reranker {
            let rr_config = RerankerConfig {
                seed,
                ..config.reranker.clone()
            };
            let (rr, _) = fit_reranker(&rr_config, mode, &train, &dev, &lex, &policy)?;
            let p = sdir.join("reranker.ckpt");
            rr.save(&p)?;
            manifest.output(&p);
            Some(rr)
        } else {
            None
        };
        let generated = generate_records(
            &gen,
            reranker.as_ref(),
            &das,
            &policy,
            gen_config.beam,
            rerank_mode(config.rerank_weight),
        )?;
        let p = sdir.join("generated.jsonl");
        write_jsonl(&p, &generated)?;
        manifest.output(&p);

        let lm = if config.lexicalizers.contains(&LexKind::RnnLm) {
            let lm_config = BiLmConfig {
                seed,
                ..config.lm.clone()
            };
            let (lm, _) = fit_lm(&lm_config, &train, &dev)?;
            let p = sdir.join("bilm.ckpt");
            lm.save(&p)?;
            manifest.output(&p);
            Some(lm)
        } else {
            None
        };
        let res = LexResources {
            lex: &lex,
            lm: lm.as_ref(),
            dict: Some(&dict),
        };
        for (k, &kind) in config.lexicalizers.iter().enumerate() {
            let ldir = subdir(&sdir, &[kind.name()])?;
            let lexicalized = lexicalize_records(&generated, registry, &res, kind, seed)?;
            let p = ldir.join("lexicalized.jsonl");
            write_jsonl(&p, &lexicalized)?;
            manifest.output(&p);
            let report = evaluate_records(&lexicalized, &test, registry)?;
            write_report(&ldir, &report, &mut manifest)?;
            reports[k].push(report);
        }
        manifest.write(&sdir)?;
    }

    for (k, &kind) in config.lexicalizers.iter().enumerate() {
        let summary = VariantReport {
            variant: &variant,
            lexicalizer: kind,
            seeds: &config.seeds,
            mean: mean_scores(&reports[k]),
            runs: &reports[k],
        };
        let path = vdir.join(format!("report-{}.json", kind.name()));
        write_text(&path, &(serde_json::to_string_pretty(&summary)? + "\n"))?;
        let m = &summary.mean;
        println!(
            "{variant}\t{}\tBLEU {:.2}\tNIST {:.4}\tMETEOR {:.2}\tROUGE-L {:.2}\tCIDEr {:.4}\tSER {:.2}",
            kind.name(),
            m["bleu"],
            m["nist"],
            m["meteor"],
            m["rouge_l"],
            m["cider"],
            m["ser"]
        );
    }
    Ok(())
}
