//! Experiment protocols: baseline-vs-fusion comparison, zero-shot scoring,
//! one-shot gazetteer adaptation, module ablation, low-resource curves,
//! cross-dialect transfer and per-token explanations.
//!
//! Every protocol is a pure function of its [`ExperimentSpec`]; results are
//! returned as typed values and, when an output directory is given, written
//! as line-delimited JSON records, aligned text tables, two-column curve
//! files and checkpoints.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::corpus::{load_column_corpus, surface_form, Corpus, TagScheme, Validation};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, evaluate_pool, evaluate_unseen, surface_forms, SurfaceForms};
use crate::gazetteer::GazetteerSet;
use crate::kv::KeyValues;
use crate::model::{checkpoint, FusionMode, Model};
use crate::synth::{gazetteer_name, generate_synthetic_corpus, mix, SynthConfig};
use crate::training::{subsample, train, train_from, TrainConfig, TRAIN_KEYS};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Compare,
    ZeroShot,
    OneShot,
    Ablation,
    LowResource,
    Transfer,
    Explain,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::Compare,
        ExperimentKind::ZeroShot,
        ExperimentKind::OneShot,
        ExperimentKind::Ablation,
        ExperimentKind::LowResource,
        ExperimentKind::Transfer,
        ExperimentKind::Explain,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Compare => "compare",
            ExperimentKind::ZeroShot => "zero_shot",
            ExperimentKind::OneShot => "one_shot",
            ExperimentKind::Ablation => "ablation",
            ExperimentKind::LowResource => "low_resource",
            ExperimentKind::Transfer => "transfer",
            ExperimentKind::Explain => "explain",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment kind {s:?}")))
    }
}

/// A model family: fusion mode plus the gazetteer attention switch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Variant {
    pub mode: FusionMode,
    pub attention: bool,
}

impl Variant {
    pub const BASELINE: Variant = Variant {
        mode: FusionMode::NerOnly,
        attention: false,
    };

    pub fn label(&self) -> String {
        match (self.mode, self.attention) {
            (FusionMode::NerOnly, _) => "ner_only".into(),
            (m, true) => format!("{m}+attention"),
            (m, false) => m.to_string(),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (mode, attention) = match s.strip_suffix("+attention") {
            Some(m) => (m, true),
            None => (s, false),
        };
        let mode: FusionMode = mode.parse()?;
        if mode == FusionMode::NerOnly && attention {
            return Err(Error::Config("ner_only has no gazetteer attention".into()));
        }
        Ok(Variant { mode, attention })
    }
}

/// Where the experiment data comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic {
        config: SynthConfig,
        seed: u64,
    },
    Files {
        train: PathBuf,
        dev: PathBuf,
        test: PathBuf,
        gazetteers: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub seeds: Vec<u64>,
    pub data: DataSource,
    pub training: TrainConfig,
    /// variants trained by `compare`
    pub variants: Vec<Variant>,
    /// the fusion variant contrasted with the baseline elsewhere
    pub fusion: Variant,
    /// fraction of training sentences used by `zero_shot`
    pub train_fraction: f64,
    pub fractions: Vec<f64>,
    pub inclusion: Vec<f64>,
    pub split_ratio: f64,
    pub split_seed: u64,
    pub shared_types: Option<Vec<String>>,
    pub target_dialect: u64,
    pub target_test: Option<PathBuf>,
    pub target_train: Option<PathBuf>,
    pub target_dev: Option<PathBuf>,
    /// entity type → gazetteer name; defaults to the lowercased type
    pub type_gazetteers: BTreeMap<String, String>,
    pub explain_sentences: usize,
    pub top_k: usize,
    pub quiet: bool,
}

const SPEC_KEYS: &[&str] = &[
    "kind",
    "seeds",
    "data",
    "synth_seed",
    "train",
    "dev",
    "test",
    "gazetteers",
    "variants",
    "fusion",
    "train_fraction",
    "fractions",
    "inclusion",
    "split_ratio",
    "split_seed",
    "shared_types",
    "target_dialect",
    "target_train",
    "target_dev",
    "target_test",
    "type_gazetteers",
    "explain_sentences",
    "top_k",
];

/// Settings of the bundled synthetic benchmark. Training uses a smaller
/// encoder and a larger learning rate than the command-line defaults so
/// that a from-scratch model converges within a few epochs.
pub fn benchmark_defaults() -> KeyValues {
    let mut kv = KeyValues::new();
    kv.set("seeds", "1,2,3");
    kv.set("data", "synthetic");
    kv.set("synth_seed", 7);
    kv.set("learning_rate", 0.002);
    kv.set("dropout", 0.1);
    kv.set("word_dropout", 0.5);
    kv.set("h", 32);
    kv.set("ffn", 64);
    kv.set("encoder_window", 3);
    kv.set("d", 8);
    kv.set("w", 5);
    kv.set("batch_size", 16);
    kv.set("max_epochs", 40);
    kv.set("patience", 6);
    kv.set("min_count", 2);
    kv.set("train_fraction", 0.2);
    kv.set("fractions", "0.2,0.4,0.6,0.8,1.0");
    kv.set("inclusion", "0,0.25,0.5,0.75,1.0");
    kv
}

fn resolve(base: Option<&Path>, p: &str) -> PathBuf {
    let p = PathBuf::from(p);
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p,
    }
}

impl ExperimentSpec {
    /// Builds a spec from key=value settings layered over
    /// [`benchmark_defaults`]. Relative paths resolve against `base`.
    pub fn from_kv(kind: ExperimentKind, kv: &KeyValues, base: Option<&Path>) -> Result<ExperimentSpec> {
        let mut all = benchmark_defaults();
        all.merge(kv);
        let kv = &all;
        let synth_keys: Vec<String> = kv
            .keys()
            .filter(|k| k.starts_with("synth."))
            .map(String::from)
            .collect();
        let mut known: Vec<&str> = SPEC_KEYS.iter().chain(TRAIN_KEYS).copied().collect();
        known.extend(synth_keys.iter().map(String::as_str));
        kv.check_known(&known)?;
        if let Some(k) = kv.get("kind") {
            if k.parse::<ExperimentKind>()? != kind {
                return Err(Error::Config(format!("spec is for {k}, requested {kind}")));
            }
        }
        let seeds: Vec<u64> = kv.parse_list("seeds")?.unwrap_or_default();
        if seeds.is_empty() {
            return Err(Error::Config("seeds must list at least one seed".into()));
        }
        let data = match kv.get("data").unwrap_or("synthetic") {
            "synthetic" => {
                let mut skv = KeyValues::new();
                for k in &synth_keys {
                    skv.set(&k["synth.".len()..], kv.get(k).unwrap_or_default());
                }
                let config = SynthConfig::from_kv(&skv)?;
                DataSource::Synthetic {
                    config,
                    seed: kv.parse_or("synth_seed", 7)?,
                }
            }
            "files" => {
                let path = |k: &str| {
                    kv.get(k)
                        .map(|p| resolve(base, p))
                        .ok_or_else(|| Error::Config(format!("data = files needs {k}")))
                };
                DataSource::Files {
                    train: path("train")?,
                    dev: path("dev")?,
                    test: path("test")?,
                    gazetteers: path("gazetteers")?,
                }
            }
            other => return Err(Error::Config(format!("data must be synthetic|files, got {other:?}"))),
        };
        let mut training = TrainConfig::from_kv(kv)?;
        training.seed = seeds[0];
        let variants = match kv.list("variants") {
            Some(v) => v.iter().map(|s| s.parse()).collect::<Result<Vec<Variant>>>()?,
            None => vec![
                Variant::BASELINE,
                Variant {
                    mode: FusionMode::Early,
                    attention: false,
                },
                Variant {
                    mode: FusionMode::Early,
                    attention: true,
                },
                Variant {
                    mode: FusionMode::Late,
                    attention: false,
                },
                Variant {
                    mode: FusionMode::Late,
                    attention: true,
                },
            ],
        };
        let fusion: Variant = kv.get("fusion").unwrap_or("late+attention").parse()?;
        if fusion.mode == FusionMode::NerOnly {
            return Err(Error::Config("fusion variant must use gazetteers".into()));
        }
        let fractions: Vec<f64> = kv.parse_list("fractions")?.unwrap_or_default();
        let inclusion: Vec<f64> = kv.parse_list("inclusion")?.unwrap_or_default();
        let train_fraction: f64 = kv.parse_or("train_fraction", 0.2)?;
        for &f in fractions.iter().chain([&train_fraction]) {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("training fractions must lie in (0, 1], got {f}")));
            }
        }
        if inclusion.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config("inclusion fractions must lie in [0, 1]".into()));
        }
        let split_ratio: f64 = kv.parse_or("split_ratio", 0.7)?;
        if !(split_ratio > 0.0 && split_ratio < 1.0) {
            return Err(Error::Config(format!(
                "split_ratio must lie in (0, 1), got {split_ratio}"
            )));
        }
        let mut type_gazetteers = BTreeMap::new();
        for pair in kv.list("type_gazetteers").unwrap_or_default() {
            let (t, g) = pair
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("type_gazetteers entry {pair:?} is not type:gazetteer")))?;
            type_gazetteers.insert(t.trim().to_string(), g.trim().to_string());
        }
        Ok(ExperimentSpec {
            kind,
            seeds,
            data,
            training,
            variants,
            fusion,
            train_fraction,
            fractions,
            inclusion,
            split_ratio,
            split_seed: kv.parse_or("split_seed", 13)?,
            shared_types: kv.list("shared_types"),
            target_dialect: kv.parse_or("target_dialect", 1)?,
            target_train: kv.get("target_train").map(|p| resolve(base, p)),
            target_dev: kv.get("target_dev").map(|p| resolve(base, p)),
            target_test: kv.get("target_test").map(|p| resolve(base, p)),
            type_gazetteers,
            explain_sentences: kv.parse_or("explain_sentences", 5)?,
            top_k: kv.parse_or("top_k", 3)?,
            quiet: false,
        })
    }

    pub fn default_for(kind: ExperimentKind) -> ExperimentSpec {
        ExperimentSpec::from_kv(kind, &KeyValues::new(), None).expect("bundled defaults are valid")
    }

    fn config_for(&self, variant: Variant, seed: u64) -> TrainConfig {
        let mut c = self.training.clone();
        c.mode = variant.mode;
        c.attention = variant.attention;
        c.seed = seed;
        c
    }

    fn log(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("[{}] {}", self.kind, msg.as_ref());
        }
    }

    fn gazetteer_for(&self, entity_type: &str, set: &GazetteerSet) -> Result<String> {
        let name = self
            .type_gazetteers
            .get(entity_type)
            .cloned()
            .unwrap_or_else(|| gazetteer_name(entity_type));
        if set.get(&name).is_none() {
            return Err(Error::Config(format!(
                "no gazetteer {name:?} for entity type {entity_type} (set type_gazetteers)"
            )));
        }
        Ok(name)
    }
}

/// Train/dev/test corpora with their gazetteers.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
    /// gazetteers as shipped; mentions unseen in training may be missing
    pub gazetteers: GazetteerSet,
    /// gazetteers that also list the test-only mentions
    pub full_gazetteers: GazetteerSet,
}

pub fn load_dataset(data: &DataSource) -> Result<Dataset> {
    match data {
        DataSource::Synthetic { config, seed } => {
            let d = generate_synthetic_corpus(config, *seed)?;
            let full_gazetteers = d.full_gazetteers();
            Ok(Dataset {
                train: d.train,
                dev: d.dev,
                test: d.test,
                gazetteers: d.gazetteers,
                full_gazetteers,
            })
        }
        DataSource::Files {
            train,
            dev,
            test,
            gazetteers,
        } => {
            let scheme = TagScheme::infer_from_column_file(train)?;
            let gazetteers = GazetteerSet::load_manifest(gazetteers)?;
            Ok(Dataset {
                train: load_column_corpus(train, &scheme, Validation::Strict)?,
                dev: load_column_corpus(dev, &scheme, Validation::Strict)?,
                test: load_column_corpus(test, &scheme, Validation::Strict)?,
                full_gazetteers: gazetteers.clone(),
                gazetteers,
            })
        }
    }
}

/// Mean of per-seed values, with the raw values kept.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub values: Vec<f64>,
    pub mean: f64,
}

impl Aggregate {
    pub fn new(values: Vec<f64>) -> Aggregate {
        let mean = if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        };
        Aggregate { values, mean }
    }
}

/// Destination for experiment artifacts. `None` keeps everything in memory.
pub struct Output {
    dir: Option<PathBuf>,
    records: String,
}

impl Output {
    pub fn new(dir: Option<&Path>) -> Result<Output> {
        if let Some(d) = dir {
            for sub in ["", "checkpoints", "curves", "runs"] {
                let p = d.join(sub);
                std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
            }
        }
        Ok(Output {
            dir: dir.map(Path::to_path_buf),
            records: String::new(),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn write(&self, rel: &str, text: &str) -> Result<()> {
        if let Some(d) = &self.dir {
            let p = d.join(rel);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }

    pub fn record(&mut self, value: serde_json::Value) -> Result<()> {
        self.records.push_str(&value.to_string());
        self.records.push('\n');
        self.write("results.jsonl", &self.records.clone())
    }

    pub fn records(&self) -> &str {
        &self.records
    }

    pub fn table(&self, name: &str, text: &str) -> Result<()> {
        self.write(name, text)
    }

    pub fn curve(&self, name: &str, points: &[(f64, f64)]) -> Result<()> {
        let text: String = points.iter().map(|(x, y)| format!("{x}\t{y}\n")).collect();
        self.write(&format!("curves/{name}.tsv"), &text)
    }

    pub fn checkpoint(&self, name: &str, model: &Model) -> Result<Option<PathBuf>> {
        match &self.dir {
            Some(d) => {
                let p = d.join("checkpoints").join(format!("{name}.ckpt"));
                checkpoint::save(model, &p)?;
                Ok(Some(p))
            }
            None => Ok(None),
        }
    }

    fn run_log(&self, name: &str, record: &crate::training::RunRecord) -> Result<()> {
        self.write(&format!("runs/{name}.epochs.jsonl"), &record.to_jsonl())
    }
}

fn run_name(label: &str, seed: u64) -> String {
    format!("{}-seed{seed}", label.replace('+', "_"))
}

fn train_variant(
    spec: &ExperimentSpec,
    out: &Output,
    label: &str,
    variant: Variant,
    seed: u64,
    train_corpus: &Corpus,
    dev: &Corpus,
    gazetteers: &GazetteerSet,
) -> Result<Model> {
    let config = spec.config_for(variant, seed);
    let gaz = (variant.mode != FusionMode::NerOnly).then_some(gazetteers);
    let (model, record) = train(&config, train_corpus, dev, gaz, &[])?;
    spec.log(format!(
        "{label} seed {seed}: {} epochs, best dev F1 {:.4} at epoch {}",
        record.epochs.len(),
        record.best_dev_f1.unwrap_or(0.0),
        record.best_epoch
    ));
    let name = run_name(label, seed);
    out.run_log(&name, &record)?;
    out.checkpoint(&name, &model)?;
    Ok(model)
}

fn test_f1(model: &Model, test: &Corpus, gazetteers: &GazetteerSet) -> Result<f64> {
    let pred = model.predict_corpus(test, Some(gazetteers))?;
    Ok(evaluate(&pred, test)?.micro_f1)
}

fn fmt_cell(a: &Aggregate) -> String {
    format!("{:.2}", 100.0 * a.mean)
}

/// Renders rows of labelled cells as an aligned table.
pub fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut width = header.iter().map(|h| h.len()).collect::<Vec<_>>();
    for r in rows {
        for (i, c) in r.iter().enumerate().take(cols) {
            width[i] = width[i].max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i == 0 {
                let _ = write!(s, "{:<w$}", c, w = width[i]);
            } else {
                let _ = write!(s, "  {:>w$}", c, w = width[i]);
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut s = line(header.to_vec());
    for r in rows {
        s.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareResult {
    pub cells: Vec<(String, Aggregate)>,
}

impl CompareResult {
    pub fn get(&self, label: &str) -> Option<&Aggregate> {
        self.cells.iter().find(|(l, _)| l == label).map(|(_, a)| a)
    }
}

/// Trains every configured variant per seed and reports mean test micro-F1.
pub fn run_compare(spec: &ExperimentSpec, data: &Dataset, out: &mut Output) -> Result<CompareResult> {
    let mut variants = spec.variants.clone();
    variants.sort();
    variants.dedup();
    let mut cells = Vec::new();
    for v in variants {
        let label = v.label();
        let mut values = Vec::new();
        for &seed in &spec.seeds {
            let model = train_variant(
                spec,
                out,
                &label,
                v,
                seed,
                &data.train,
                &data.dev,
                &data.full_gazetteers,
            )?;
            let f1 = test_f1(&model, &data.test, &data.full_gazetteers)?;
            out.record(
                json!({"experiment": "compare", "config": label, "seed": seed, "metric": "test_micro_f1", "value": f1}),
            )?;
            values.push(f1);
        }
        let agg = Aggregate::new(values);
        out.record(json!({"experiment": "compare", "config": label, "metric": "test_micro_f1", "mean": agg.mean, "values": agg.values}))?;
        cells.push((label, agg));
    }
    let header: Vec<&str> = ["metric"]
        .into_iter()
        .chain(cells.iter().map(|(l, _)| l.as_str()))
        .collect();
    let row: Vec<String> = ["test micro-F1".to_string()]
        .into_iter()
        .chain(cells.iter().map(|(_, a)| fmt_cell(a)))
        .collect();
    out.table("table.txt", &render_table(&header, &[row]))?;
    Ok(CompareResult { cells })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZeroShotResult {
    pub train_fraction: f64,
    pub baseline_unseen: Aggregate,
    pub fusion_unseen: Aggregate,
    pub baseline_overall: Aggregate,
    pub fusion_overall: Aggregate,
    pub unseen_gold_spans: usize,
}

/// Micro-F1 on test mentions absent from the (subsampled) training and
/// development data.
pub fn run_zero_shot(spec: &ExperimentSpec, data: &Dataset, out: &mut Output) -> Result<ZeroShotResult> {
    let mut unseen = [Vec::new(), Vec::new()];
    let mut overall = [Vec::new(), Vec::new()];
    let mut support = 0;
    for &seed in &spec.seeds {
        let train_part = subsample(&data.train, spec.train_fraction, seed)?;
        let seen = surface_forms([&train_part, &data.dev]);
        for (i, v) in [Variant::BASELINE, spec.fusion].into_iter().enumerate() {
            let label = v.label();
            let model = train_variant(
                spec,
                out,
                &label,
                v,
                seed,
                &train_part,
                &data.dev,
                &data.full_gazetteers,
            )?;
            let pred = model.predict_corpus(&data.test, Some(&data.full_gazetteers))?;
            let u = evaluate_unseen(&pred, &data.test, &seen)?;
            let o = evaluate(&pred, &data.test)?;
            support = u.gold_spans;
            out.record(json!({"experiment": "zero_shot", "config": label, "seed": seed, "metric": "unseen_micro_f1", "value": u.micro_f1, "unseen_gold_spans": u.gold_spans}))?;
            out.record(json!({"experiment": "zero_shot", "config": label, "seed": seed, "metric": "test_micro_f1", "value": o.micro_f1}))?;
            unseen[i].push(u.micro_f1);
            overall[i].push(o.micro_f1);
        }
    }
    let [bu, fu] = unseen.map(Aggregate::new);
    let [bo, fo] = overall.map(Aggregate::new);
    for (label, u, o) in [(Variant::BASELINE.label(), &bu, &bo), (spec.fusion.label(), &fu, &fo)] {
        out.record(json!({"experiment": "zero_shot", "config": label, "metric": "unseen_micro_f1", "mean": u.mean, "values": u.values}))?;
        out.record(json!({"experiment": "zero_shot", "config": label, "metric": "test_micro_f1", "mean": o.mean, "values": o.values}))?;
    }
    let rows = vec![
        vec![
            "unseen micro-F1".into(),
            fmt_cell(&bu),
            fmt_cell(&fu),
            format!("{:+.2}", 100.0 * (fu.mean - bu.mean)),
        ],
        vec![
            "test micro-F1".into(),
            fmt_cell(&bo),
            fmt_cell(&fo),
            format!("{:+.2}", 100.0 * (fo.mean - bo.mean)),
        ],
    ];
    let fusion_label = spec.fusion.label();
    out.table(
        "table.txt",
        &render_table(&["metric", "ner_only", &fusion_label, "delta"], &rows),
    )?;
    Ok(ZeroShotResult {
        train_fraction: spec.train_fraction,
        baseline_unseen: bu,
        fusion_unseen: fu,
        baseline_overall: bo,
        fusion_overall: fo,
        unseen_gold_spans: support,
    })
}

/// Training mentions partitioned into a labelled part and a part known only
/// through the gazetteers.
#[derive(Clone, Debug)]
pub struct MentionSplit {
    /// (entity type index, normalized surface form)
    pub labelled: Vec<(usize, Vec<String>)>,
    pub gazetteer_only: Vec<(usize, Vec<String>)>,
    /// training corpus without any sentence mentioning a gazetteer-only form
    pub train: Corpus,
    pub gazetteers: GazetteerSet,
}

impl MentionSplit {
    pub fn gazetteer_only_forms(&self) -> SurfaceForms {
        self.gazetteer_only.iter().map(|(_, f)| f.clone()).collect()
    }
}

/// Splits the unique training mention surface forms at `ratio` and moves
/// the remainder into the gazetteers. `type_gazetteer` names the gazetteer
/// receiving mentions of each entity type.
pub fn make_mention_split(
    train: &Corpus,
    gazetteers: &GazetteerSet,
    ratio: f64,
    seed: u64,
    type_gazetteer: impl Fn(&str) -> Result<String>,
) -> Result<MentionSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let mut first_type: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    let mut sentence_forms: Vec<Vec<Vec<String>>> = vec![Vec::new(); train.len()];
    for s in train.spans() {
        let form = surface_form(&train.sentences[s.sentence].tokens[s.start..=s.end]);
        first_type.entry(form.clone()).or_insert(s.entity_type);
        sentence_forms[s.sentence].push(form);
    }
    let mut forms: Vec<Vec<String>> = first_type.keys().cloned().collect();
    forms.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(seed, 0x5917)));
    let n_labelled = (ratio * forms.len() as f64).round() as usize;
    if n_labelled == 0 || n_labelled == forms.len() {
        return Err(Error::Invalid(format!(
            "splitting {} unique mentions at {ratio} leaves one side empty",
            forms.len()
        )));
    }
    let gaz_forms: BTreeSet<Vec<String>> = forms[n_labelled..].iter().cloned().collect();
    let tag = |f: &Vec<String>| (first_type[f], f.clone());
    let mut labelled: Vec<_> = forms[..n_labelled].iter().map(tag).collect();
    let mut gazetteer_only: Vec<_> = forms[n_labelled..].iter().map(tag).collect();
    labelled.sort();
    gazetteer_only.sort();
    let sentences = train
        .sentences
        .iter()
        .zip(&sentence_forms)
        .filter(|(_, fs)| !fs.iter().any(|f| gaz_forms.contains(f)))
        .map(|(s, _)| s.clone())
        .collect();
    let reduced = Corpus::new(train.name.clone(), train.scheme.clone(), sentences);
    let mut set = gazetteers.clone();
    for (t, form) in &gazetteer_only {
        let name = type_gazetteer(&train.scheme.entity_types()[*t])?;
        set.add_entries(&name, [form])?;
    }
    Ok(MentionSplit {
        labelled,
        gazetteer_only,
        train: reduced,
        gazetteers: set,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationResult {
    pub r0: Aggregate,
    pub rg: Aggregate,
    pub r: Aggregate,
    pub r0g: Aggregate,
    /// R and RG hold bit-identical encoder, token embedding and NER tagger
    /// tensors for every seed
    pub shared_ner_branch: bool,
    pub pool_gold_spans: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdaptationResult {
    pub fractions: Vec<f64>,
    pub f1: Vec<Aggregate>,
    pub checkpoint_unchanged: bool,
    pub pool_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OneShotResult {
    pub ablation: AblationResult,
    pub adaptation: Option<AdaptationResult>,
}

fn ner_branch_equal(a: &Model, b: &Model) -> bool {
    a.params.token_embeddings == b.params.token_embeddings
        && a.params.encoder == b.params.encoder
        && a.params.tagger_r == b.params.tagger_r
}

/// Test mentions never seen in the labelled data, with the type they are
/// annotated with first.
fn unseen_pool(data: &Dataset) -> Vec<(usize, Vec<String>)> {
    let seen = surface_forms([&data.train, &data.dev]);
    let mut pool: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    for s in data.test.spans() {
        let f = surface_form(&data.test.sentences[s.sentence].tokens[s.start..=s.end]);
        if !seen.contains(&f) {
            pool.entry(f).or_insert(s.entity_type);
        }
    }
    pool.into_iter().map(|(f, t)| (t, f)).collect()
}

/// Ablation grid on the mention split and, when `adaptation` is set, the
/// gazetteer inclusion curve of the fused model.
pub fn run_one_shot(
    spec: &ExperimentSpec,
    data: &Dataset,
    out: &mut Output,
    adaptation: bool,
) -> Result<OneShotResult> {
    let split = make_mention_split(&data.train, &data.gazetteers, spec.split_ratio, spec.split_seed, |t| {
        spec.gazetteer_for(t, &data.gazetteers)
    })?;
    spec.log(format!(
        "mention split: {} labelled / {} gazetteer-only forms, {} of {} training sentences kept",
        split.labelled.len(),
        split.gazetteer_only.len(),
        split.train.len(),
        data.train.len()
    ));
    let pool_forms = split.gazetteer_only_forms();
    let gaz = &split.gazetteers;
    let fusion = Variant {
        mode: FusionMode::Late,
        attention: spec.fusion.attention,
    };
    let mut cols: [Vec<f64>; 4] = Default::default();
    let mut shared = true;
    let mut pool_spans = 0;
    let mut fused_models = Vec::new();
    for &seed in &spec.seeds {
        let eval = |m: &Model, label: &str, out: &mut Output| -> Result<f64> {
            let pred = m.predict_corpus(&data.test, Some(gaz))?;
            let r = evaluate_pool(&pred, &data.test, &pool_forms, "gazetteer-only-mentions")?;
            out.record(json!({"experiment": "ablation", "config": label, "seed": seed, "metric": "pool_micro_f1", "value": r.micro_f1, "pool_gold_spans": r.gold_spans}))?;
            Ok(r.micro_f1)
        };
        let r0 = train_variant(spec, out, "R0", Variant::BASELINE, seed, &split.train, &data.dev, gaz)?;
        let rg = train_variant(spec, out, "RG", fusion, seed, &split.train, &data.dev, gaz)?;
        let r = rg.unplug_gazetteer()?;
        shared &= ner_branch_equal(&r, &rg);
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x0F60));
        let start = r0.extend_to(FusionMode::Late, fusion.attention, &gaz.names(), &mut rng)?;
        let mut config = spec.config_for(fusion, seed);
        config.early_stopping = false;
        let freeze = ["token_embeddings".to_string(), "encoder".into(), "tagger_r".into()];
        let (r0g, record) = train_from(start, &config, &split.train, &data.dev, Some(gaz), &freeze)?;
        spec.log(format!("R0G seed {seed}: {} epochs", record.epochs.len()));
        out.run_log(&run_name("R0G", seed), &record)?;
        out.checkpoint(&run_name("R0G", seed), &r0g)?;
        cols[0].push(eval(&r0, "R0", out)?);
        cols[1].push(eval(&rg, "RG", out)?);
        cols[2].push(eval(&r, "R", out)?);
        cols[3].push(eval(&r0g, "R0G", out)?);
        pool_spans = evaluate_pool(&data.test, &data.test, &pool_forms, "")?.gold_spans;
        fused_models.push((seed, rg));
    }
    let [r0, rg, r, r0g] = cols.map(Aggregate::new);
    for (label, a) in [("R0", &r0), ("RG", &rg), ("R", &r), ("R0G", &r0g)] {
        out.record(json!({"experiment": "ablation", "config": label, "metric": "pool_micro_f1", "mean": a.mean, "values": a.values}))?;
    }
    let table = render_table(
        &["metric", "R0", "RG", "R", "R0G"],
        &[vec![
            "gazetteer-only mention F1".into(),
            fmt_cell(&r0),
            fmt_cell(&rg),
            fmt_cell(&r),
            fmt_cell(&r0g),
        ]],
    );
    out.table("ablation.txt", &table)?;
    let ablation = AblationResult {
        r0,
        rg,
        r,
        r0g,
        shared_ner_branch: shared,
        pool_gold_spans: pool_spans,
    };
    let adaptation = if adaptation {
        Some(adaptation_curve(spec, data, &split, &fused_models, out)?)
    } else {
        None
    };
    Ok(OneShotResult { ablation, adaptation })
}

fn adaptation_curve(
    spec: &ExperimentSpec,
    data: &Dataset,
    split: &MentionSplit,
    models: &[(u64, Model)],
    out: &mut Output,
) -> Result<AdaptationResult> {
    let mut pool = unseen_pool(data);
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(spec.split_seed, 0xADA9)));
    let pool_forms: SurfaceForms = pool.iter().map(|(_, f)| f.clone()).collect();
    let mut values = vec![Vec::new(); spec.inclusion.len()];
    let mut unchanged = true;
    for (seed, model) in models {
        let before = checkpoint::render(model);
        let curve = run_adaptation_curve(
            model,
            &data.test,
            &split.gazetteers,
            &pool,
            &pool_forms,
            &spec.inclusion,
            |t| spec.gazetteer_for(t, &split.gazetteers),
        )?;
        unchanged &= checkpoint::render(model) == before;
        for (i, (f, f1)) in spec.inclusion.iter().zip(curve).enumerate() {
            out.record(json!({"experiment": "adaptation", "config": spec.fusion.label(), "seed": seed, "inclusion": f, "metric": "unseen_micro_f1", "value": f1}))?;
            values[i].push(f1);
        }
    }
    let f1: Vec<Aggregate> = values.into_iter().map(Aggregate::new).collect();
    for (f, a) in spec.inclusion.iter().zip(&f1) {
        out.record(json!({"experiment": "adaptation", "config": spec.fusion.label(), "inclusion": f, "metric": "unseen_micro_f1", "mean": a.mean, "values": a.values}))?;
    }
    let points: Vec<(f64, f64)> = spec.inclusion.iter().zip(&f1).map(|(&f, a)| (f, a.mean)).collect();
    out.curve("adaptation", &points)?;
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|(f, y)| vec![format!("{f}"), format!("{:.2}", 100.0 * y)])
        .collect();
    out.table(
        "adaptation.txt",
        &render_table(&["inclusion", "unseen micro-F1"], &rows),
    )?;
    Ok(AdaptationResult {
        fractions: spec.inclusion.clone(),
        f1,
        checkpoint_unchanged: unchanged,
        pool_size: pool.len(),
    })
}

/// Evaluates `model` on the `pool` mentions after adding the first
/// `ceil(f·|pool|)` of them to a copy of `base` for each inclusion fraction
/// `f`. The model and `base` are left untouched.
pub fn run_adaptation_curve(
    model: &Model,
    test: &Corpus,
    base: &GazetteerSet,
    pool: &[(usize, Vec<String>)],
    pool_forms: &SurfaceForms,
    fractions: &[f64],
    type_gazetteer: impl Fn(&str) -> Result<String>,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(fractions.len());
    for &f in fractions {
        let n = ((f * pool.len() as f64) - 1e-9).ceil().max(0.0) as usize;
        let mut gaz = base.clone();
        for (t, form) in &pool[..n.min(pool.len())] {
            gaz.add_entries(&type_gazetteer(&test.scheme.entity_types()[*t])?, [form])?;
        }
        let pred = model.predict_corpus(test, Some(&gaz))?;
        out.push(evaluate_pool(&pred, test, pool_forms, "unseen-mentions-only")?.micro_f1);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LowResourceResult {
    pub fractions: Vec<f64>,
    pub baseline: Vec<Aggregate>,
    pub fusion: Vec<Aggregate>,
}

impl LowResourceResult {
    /// Fusion minus baseline mean F1 per fraction.
    pub fn gaps(&self) -> Vec<f64> {
        self.baseline
            .iter()
            .zip(&self.fusion)
            .map(|(b, f)| f.mean - b.mean)
            .collect()
    }
}

pub fn run_low_resource(spec: &ExperimentSpec, data: &Dataset, out: &mut Output) -> Result<LowResourceResult> {
    let mut baseline = Vec::new();
    let mut fusion = Vec::new();
    for &f in &spec.fractions {
        let mut b = Vec::new();
        let mut g = Vec::new();
        for &seed in &spec.seeds {
            let part = subsample(&data.train, f, seed)?;
            for (v, acc) in [(Variant::BASELINE, &mut b), (spec.fusion, &mut g)] {
                let label = format!("{}@{f}", v.label());
                let model = train_variant(spec, out, &label, v, seed, &part, &data.dev, &data.full_gazetteers)?;
                let f1 = test_f1(&model, &data.test, &data.full_gazetteers)?;
                out.record(json!({"experiment": "low_resource", "config": v.label(), "fraction": f, "seed": seed, "metric": "test_micro_f1", "value": f1}))?;
                acc.push(f1);
            }
        }
        let (b, g) = (Aggregate::new(b), Aggregate::new(g));
        out.record(json!({"experiment": "low_resource", "config": Variant::BASELINE.label(), "fraction": f, "metric": "test_micro_f1", "mean": b.mean, "values": b.values}))?;
        out.record(json!({"experiment": "low_resource", "config": spec.fusion.label(), "fraction": f, "metric": "test_micro_f1", "mean": g.mean, "values": g.values}))?;
        baseline.push(b);
        fusion.push(g);
    }
    let result = LowResourceResult {
        fractions: spec.fractions.clone(),
        baseline,
        fusion,
    };
    let pts =
        |v: &[Aggregate]| -> Vec<(f64, f64)> { spec.fractions.iter().zip(v).map(|(&f, a)| (f, a.mean)).collect() };
    out.curve("baseline", &pts(&result.baseline))?;
    out.curve("fusion", &pts(&result.fusion))?;
    let gaps: Vec<(f64, f64)> = spec.fractions.iter().copied().zip(result.gaps()).collect();
    out.curve("gap", &gaps)?;
    let rows: Vec<Vec<String>> = (0..spec.fractions.len())
        .map(|i| {
            vec![
                format!("{}", spec.fractions[i]),
                fmt_cell(&result.baseline[i]),
                fmt_cell(&result.fusion[i]),
                format!("{:+.2}", 100.0 * gaps[i].1),
            ]
        })
        .collect();
    let fusion_label = spec.fusion.label();
    out.table(
        "table.txt",
        &render_table(&["fraction", "ner_only", &fusion_label, "gap"], &rows),
    )?;
    Ok(result)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransferCell {
    pub train: String,
    pub test: String,
    pub baseline: Aggregate,
    pub fusion: Aggregate,
}

impl TransferCell {
    pub fn delta(&self) -> f64 {
        self.fusion.mean - self.baseline.mean
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransferResult {
    pub shared_types: Vec<String>,
    pub cells: Vec<TransferCell>,
}

/// Trains baseline and fusion on each of two datasets restricted to
/// `shared_types` and scores every model on both test sets.
pub fn run_transfer(
    spec: &ExperimentSpec,
    source: &Dataset,
    target: &Dataset,
    shared_types: &[String],
    out: &mut Output,
) -> Result<TransferResult> {
    let restrict = |d: &Dataset| -> Result<(Corpus, Corpus, Corpus)> {
        Ok((
            d.train.restrict_types(shared_types)?,
            d.dev.restrict_types(shared_types)?,
            d.test.restrict_types(shared_types)?,
        ))
    };
    let sets = [("source", restrict(source)?), ("target", restrict(target)?)];
    let gaz = &source.full_gazetteers;
    target
        .full_gazetteers
        .names()
        .eq(&gaz.names())
        .then_some(())
        .ok_or_else(|| Error::Schema("source and target must use the same gazetteer names".into()))?;
    let mut scores: BTreeMap<(usize, usize, bool), Vec<f64>> = BTreeMap::new();
    for (i, (name, (train_c, dev_c, _))) in sets.iter().enumerate() {
        for &seed in &spec.seeds {
            for (is_fusion, v) in [(false, Variant::BASELINE), (true, spec.fusion)] {
                let label = format!("{}@{name}", v.label());
                let model = train_variant(spec, out, &label, v, seed, train_c, dev_c, gaz)?;
                for (j, (tname, (_, _, test_c))) in sets.iter().enumerate() {
                    let f1 = test_f1(&model, test_c, gaz)?;
                    out.record(json!({"experiment": "transfer", "config": v.label(), "train": name, "test": tname, "seed": seed, "metric": "test_micro_f1", "value": f1}))?;
                    scores.entry((i, j, is_fusion)).or_default().push(f1);
                }
            }
        }
    }
    let mut cells = Vec::new();
    let mut rows = Vec::new();
    for i in 0..2 {
        for j in 0..2 {
            let cell = TransferCell {
                train: sets[i].0.into(),
                test: sets[j].0.into(),
                baseline: Aggregate::new(scores[&(i, j, false)].clone()),
                fusion: Aggregate::new(scores[&(i, j, true)].clone()),
            };
            out.record(json!({"experiment": "transfer", "train": cell.train, "test": cell.test, "metric": "test_micro_f1", "baseline_mean": cell.baseline.mean, "baseline_values": cell.baseline.values, "fusion_mean": cell.fusion.mean, "fusion_values": cell.fusion.values, "delta": cell.delta()}))?;
            rows.push(vec![
                cell.train.clone(),
                cell.test.clone(),
                fmt_cell(&cell.baseline),
                fmt_cell(&cell.fusion),
                format!("{:+.2}", 100.0 * cell.delta()),
            ]);
            cells.push(cell);
        }
    }
    let fusion_label = spec.fusion.label();
    out.table(
        "table.txt",
        &render_table(&["train", "test", "ner_only", &fusion_label, "delta"], &rows),
    )?;
    Ok(TransferResult {
        shared_types: shared_types.to_vec(),
        cells,
    })
}

/// Which branch supplied a fused logit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Ner,
    Gazetteer,
    Tie,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Ner => "ner",
            Branch::Gazetteer => "gazetteer",
            Branch::Tie => "tie",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TokenTrace {
    pub token: String,
    /// gazetteer code per gazetteer, e.g. `S`
    pub codes: Vec<String>,
    pub ner_top: Vec<(String, f64)>,
    pub gaz_top: Vec<(String, f64)>,
    pub ner_tag: String,
    pub gaz_tag: String,
    /// source of every fused logit coordinate
    pub sources: Vec<Branch>,
    /// source of the winning fused coordinate
    pub winner: Branch,
    pub fused_logits: Vec<f64>,
    pub distribution: Vec<f64>,
    pub tag: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Explanation {
    pub gazetteers: Vec<String>,
    pub tokens: Vec<TokenTrace>,
}

fn top_k(scheme: &TagScheme, logits: &[f64], k: usize) -> Vec<(String, f64)> {
    let mut idx: Vec<usize> = (0..logits.len()).collect();
    idx.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    idx.into_iter().take(k).map(|i| (scheme.tag_of(i), logits[i])).collect()
}

/// Per-token account of a late-fusion prediction.
pub fn explain<S: AsRef<str>>(model: &Model, tokens: &[S], gazetteers: &GazetteerSet, k: usize) -> Result<Explanation> {
    if model.mode() != FusionMode::Late {
        return Err(Error::Invalid(format!(
            "explanations need a late-fusion model with separable branches (this one is {})",
            model.mode()
        )));
    }
    let annotation = model.annotate(tokens, Some(gazetteers))?.expect("late mode annotates");
    let pred = model.forward(tokens, Some(&annotation))?;
    let scheme = &model.scheme;
    let traces = pred
        .tokens
        .iter()
        .enumerate()
        .map(|(t, p)| {
            let r = p.ner_logits.as_ref().expect("late fusion keeps NER logits");
            let g = p.gaz_logits.as_ref().expect("late fusion keeps gazetteer logits");
            let sources: Vec<Branch> = r
                .iter()
                .zip(g)
                .map(|(a, b)| match a.partial_cmp(b) {
                    Some(std::cmp::Ordering::Greater) => Branch::Ner,
                    Some(std::cmp::Ordering::Less) => Branch::Gazetteer,
                    _ => Branch::Tie,
                })
                .collect();
            TokenTrace {
                token: tokens[t].as_ref().to_string(),
                codes: annotation.codes.iter().map(|row| row[t].as_str().to_string()).collect(),
                ner_top: top_k(scheme, r, k),
                gaz_top: top_k(scheme, g, k),
                ner_tag: scheme.tag_of(crate::model::argmax(r)),
                gaz_tag: scheme.tag_of(crate::model::argmax(g)),
                winner: sources[p.tag],
                sources,
                fused_logits: p.fused_logits.clone(),
                distribution: p.distribution.clone(),
                tag: scheme.tag_of(p.tag),
            }
        })
        .collect();
    Ok(Explanation {
        gazetteers: model.gazetteer_names.clone(),
        tokens: traces,
    })
}

impl Explanation {
    pub fn render(&self) -> String {
        let fmt_top = |v: &[(String, f64)]| {
            v.iter()
                .map(|(t, l)| format!("{t}:{l:.2}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut header = vec!["token".to_string()];
        header.extend(self.gazetteers.iter().cloned());
        header.extend([
            "R".into(),
            "G".into(),
            "RG".into(),
            "from".into(),
            "R top".into(),
            "G top".into(),
        ]);
        let rows: Vec<Vec<String>> = self
            .tokens
            .iter()
            .map(|t| {
                let mut r = vec![t.token.clone()];
                r.extend(t.codes.iter().cloned());
                r.extend([
                    t.ner_tag.clone(),
                    t.gaz_tag.clone(),
                    t.tag.clone(),
                    t.winner.as_str().to_string(),
                    fmt_top(&t.ner_top),
                    fmt_top(&t.gaz_top),
                ]);
                r
            })
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        render_table(&header, &rows)
    }
}

/// Trains one fused model and explains the first test sentences.
pub fn run_explain(spec: &ExperimentSpec, data: &Dataset, out: &mut Output) -> Result<Vec<Explanation>> {
    let seed = spec.seeds[0];
    let v = Variant {
        mode: FusionMode::Late,
        attention: spec.fusion.attention,
    };
    let model = train_variant(
        spec,
        out,
        &v.label(),
        v,
        seed,
        &data.train,
        &data.dev,
        &data.full_gazetteers,
    )?;
    let mut text = String::new();
    let mut all = Vec::new();
    for s in data.test.sentences.iter().take(spec.explain_sentences) {
        let e = explain(&model, &s.tokens, &data.full_gazetteers, spec.top_k)?;
        out.record(serde_json::to_value(&e).expect("explanation serializes"))?;
        text.push_str(&e.render());
        text.push('\n');
        all.push(e);
    }
    out.table("explain.txt", &text)?;
    Ok(all)
}

/// Runs the experiment named by `spec.kind`, writing artifacts under `dir`.
pub fn run_experiment(spec: &ExperimentSpec, dir: Option<&Path>) -> Result<(serde_json::Value, Output)> {
    let data = load_dataset(&spec.data)?;
    let mut out = Output::new(dir)?;
    let summary = match spec.kind {
        ExperimentKind::Compare => serde_json::to_value(run_compare(spec, &data, &mut out)?),
        ExperimentKind::ZeroShot => serde_json::to_value(run_zero_shot(spec, &data, &mut out)?),
        ExperimentKind::OneShot => serde_json::to_value(run_one_shot(spec, &data, &mut out, true)?),
        ExperimentKind::Ablation => serde_json::to_value(run_one_shot(spec, &data, &mut out, false)?),
        ExperimentKind::LowResource => serde_json::to_value(run_low_resource(spec, &data, &mut out)?),
        ExperimentKind::Transfer => {
            let target = match (&spec.data, &spec.target_test) {
                (DataSource::Synthetic { config, seed }, None) => {
                    let mut c = config.clone();
                    c.dialect = spec.target_dialect;
                    load_dataset(&DataSource::Synthetic { config: c, seed: *seed })?
                }
                (DataSource::Files { gazetteers, .. }, Some(test)) => {
                    let need = |p: &Option<PathBuf>, k: &str| {
                        p.clone()
                            .ok_or_else(|| Error::Config(format!("transfer on files needs {k}")))
                    };
                    load_dataset(&DataSource::Files {
                        train: need(&spec.target_train, "target_train")?,
                        dev: need(&spec.target_dev, "target_dev")?,
                        test: test.clone(),
                        gazetteers: gazetteers.clone(),
                    })?
                }
                _ => {
                    return Err(Error::Config(
                        "transfer needs a target: target_dialect (synthetic) or target_* files".into(),
                    ))
                }
            };
            let shared = match &spec.shared_types {
                Some(t) => t.clone(),
                None => data
                    .train
                    .scheme
                    .entity_types()
                    .iter()
                    .filter(|t| target.train.scheme.type_index(t).is_some())
                    .cloned()
                    .collect(),
            };
            if shared.is_empty() {
                return Err(Error::Config("source and target share no entity types".into()));
            }
            serde_json::to_value(run_transfer(spec, &data, &target, &shared, &mut out)?)
        }
        ExperimentKind::Explain => serde_json::to_value(run_explain(spec, &data, &mut out)?),
    }
    .expect("results serialize");
    out.write(
        "summary.json",
        &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"),
    )?;
    Ok((summary, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sentence;
    use crate::gazetteer::Gazetteer;

    fn toy() -> (Corpus, GazetteerSet) {
        let scheme = TagScheme::new(&["Drug"]).unwrap();
        let s = |w: &[&str], t: &[&str]| {
            Sentence::labeled(
                w.iter().map(|x| x.to_string()).collect(),
                t.iter().map(|x| scheme.id_of(x).unwrap()).collect(),
            )
        };
        let sentences = (0..10)
            .map(|i| {
                let name = format!("drug{i}");
                s(&["take", &name, "now"], &["O", "S-Drug", "O"])
            })
            .collect();
        let gaz = GazetteerSet::new(vec![Gazetteer::empty("drug")]).unwrap();
        (Corpus::new("toy", scheme, sentences), gaz)
    }

    #[test]
    fn variant_labels_round_trip() {
        for s in ["ner_only", "early", "early+attention", "late", "late+attention"] {
            assert_eq!(s.parse::<Variant>().unwrap().label(), s);
        }
        assert!("ner_only+attention".parse::<Variant>().is_err());
    }

    #[test]
    fn mention_split_is_disjoint_and_clean() {
        let (c, g) = toy();
        let split = make_mention_split(&c, &g, 0.7, 3, |t| Ok(t.to_lowercase())).unwrap();
        assert_eq!((split.labelled.len(), split.gazetteer_only.len()), (7, 3));
        let gaz_only = split.gazetteer_only_forms();
        assert!(split.labelled.iter().all(|(_, f)| !gaz_only.contains(f)));
        assert_eq!(surface_forms([&split.train]).intersection(&gaz_only).count(), 0);
        assert_eq!(split.gazetteers.get("drug").unwrap().len(), 3);
        let again = make_mention_split(&c, &g, 0.7, 3, |t| Ok(t.to_lowercase())).unwrap();
        assert_eq!(again.gazetteer_only, split.gazetteer_only);
        assert!(make_mention_split(&c, &g, 0.01, 3, |t| Ok(t.to_lowercase())).is_err());
    }

    #[test]
    fn default_specs_parse() {
        for k in ExperimentKind::ALL {
            let s = ExperimentSpec::default_for(k);
            assert_eq!(s.seeds, vec![1, 2, 3]);
        }
        let mut kv = KeyValues::new();
        kv.set("bogus", 1);
        assert!(ExperimentSpec::from_kv(ExperimentKind::Compare, &kv, None).is_err());
    }

    #[test]
    fn table_alignment() {
        let t = render_table(&["a", "bb"], &[vec!["xyz".into(), "1".into()]]);
        assert_eq!(t, "a    bb\nxyz   1\n");
    }
}
