use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use gazfuse::corpus::{load_column_corpus, save_column_corpus, tokenize, Corpus, Sentence, TagScheme, Validation};
use gazfuse::evaluation::{evaluate, evaluate_unseen, surface_forms};
use gazfuse::gazetteer::{Gazetteer, GazetteerSet};
use gazfuse::harness::{explain, run_experiment, ExperimentKind, ExperimentSpec};
use gazfuse::kv::KeyValues;
use gazfuse::model::checkpoint::{self, FORMAT_VERSION};
use gazfuse::model::{FusionMode, Model};
use gazfuse::synth::{generate_synthetic_corpus, render_held_out, SynthConfig};
use gazfuse::training::{train, train_from, TrainConfig, TRAIN_KEYS};
use gazfuse::Error;

const OUT_ENV: &str = "GAZFUSE_OUT";

#[derive(Parser)]
#[command(name = "gazfuse", version, about = "Gazetteer-fused named entity recognition")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// key=value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// key=value override, applied after the configuration file (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// run directory (defaults to $GAZFUSE_OUT/<command>, or runs/<command>)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, global = true, value_enum)]
    attention: Option<Switch>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    #[value(name = "ner_only")]
    NerOnly,
    Early,
    Late,
}

impl From<ModeArg> for FusionMode {
    fn from(m: ModeArg) -> FusionMode {
        match m {
            ModeArg::NerOnly => FusionMode::NerOnly,
            ModeArg::Early => FusionMode::Early,
            ModeArg::Late => FusionMode::Late,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark: column corpora, gazetteers, held-out names
    Synth,
    /// Train a model
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        /// gazetteer manifest
        #[arg(long)]
        gazetteers: Option<PathBuf>,
        /// parameter groups kept fixed, comma-separated
        #[arg(long, value_delimiter = ',')]
        freeze: Vec<String>,
        /// start from this checkpoint instead of a fresh model
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Tag a column or plain-text file
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        gazetteers: Option<PathBuf>,
        /// drop the gazetteer branch of a late-fusion model
        #[arg(long)]
        unplug: bool,
    },
    /// Score predicted tags against gold tags
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// corpora whose mentions count as seen; enables unseen-only scoring
        #[arg(long)]
        seen: Vec<PathBuf>,
    },
    /// Annotate tokens with gazetteer match codes
    Match {
        #[arg(long)]
        gazetteers: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Inspect or edit gazetteers in place
    Gazette {
        #[command(subcommand)]
        action: GazetteAction,
    },
    /// Run an experiment protocol
    Experiment {
        #[arg(value_parser = parse_kind)]
        kind: ExperimentKind,
    },
    /// Show which branch decided each token of a late-fusion prediction
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        gazetteers: PathBuf,
        /// sentence to explain
        #[arg(long, conflicts_with = "input")]
        text: Option<String>,
        /// column or plain-text file, one explanation per sentence
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        top_k: usize,
    },
}

#[derive(Subcommand)]
enum GazetteAction {
    Add(GazetteEdit),
    Remove(GazetteEdit),
    List {
        #[arg(long)]
        gazetteers: PathBuf,
        #[arg(long)]
        name: Option<String>,
    },
}

#[derive(Args)]
struct GazetteEdit {
    #[arg(long)]
    gazetteers: PathBuf,
    #[arg(long)]
    name: String,
    /// entries, each a whitespace-separated token sequence
    entries: Vec<String>,
    /// file with one entry per line
    #[arg(long)]
    file: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<ExperimentKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// A failure with its machine-readable category.
struct Failure {
    category: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        Failure {
            category: e.category(),
            message: e.to_string(),
        }
    }
}

impl Failure {
    fn new(category: &'static str, message: impl Into<String>) -> Failure {
        Failure {
            category,
            message: message.into(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self.category {
            "usage" => 2,
            "io" => 3,
            "parse" => 4,
            "schema" => 5,
            "config" => 6,
            "invalid" => 7,
            "numeric" => 8,
            "lock" => 9,
            _ => 1,
        }
    }
}

type CliResult<T> = Result<T, Failure>;

/// Holds the run directory lock until dropped.
struct RunDir {
    path: PathBuf,
    lock: PathBuf,
    inputs: BTreeMap<String, String>,
}

impl RunDir {
    fn open(common: &Common, command: &str) -> CliResult<RunDir> {
        let path = match &common.out {
            Some(p) => p.clone(),
            None => {
                let root = std::env::var_os(OUT_ENV)
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from("runs"));
                root.join(command)
            }
        };
        fs::create_dir_all(&path).map_err(|e| Error::io(&path, e))?;
        let lock = path.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(Failure::new(
                    "lock",
                    format!(
                        "run directory {} is in use (remove {} if stale)",
                        path.display(),
                        lock.display()
                    ),
                ))
            }
            Err(e) => return Err(Error::io(&lock, e).into()),
        }
        Ok(RunDir {
            path,
            lock,
            inputs: BTreeMap::new(),
        })
    }

    fn join(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    fn input(&mut self, path: &Path) -> CliResult<()> {
        let files: Vec<PathBuf> = if path
            .file_name()
            .is_some_and(|n| n.to_string_lossy().starts_with("manifest"))
        {
            let mut v = vec![path.to_path_buf()];
            v.extend(GazetteerSet::manifest_files(path)?.into_iter().map(|(_, p)| p));
            v
        } else {
            vec![path.to_path_buf()]
        };
        for f in files {
            let bytes = fs::read(&f).map_err(|e| Error::io(&f, e))?;
            self.inputs
                .insert(f.display().to_string(), hex::encode(Sha256::digest(&bytes)));
        }
        Ok(())
    }

    fn write(&self, name: &str, text: &str) -> CliResult<PathBuf> {
        let p = self.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }

    /// Records what is needed to repeat the run.
    fn finish(&self, command: &str, seed: Option<u64>, effective: &KeyValues) -> CliResult<()> {
        self.write("effective.conf", &effective.render())?;
        let meta = serde_json::json!({
            "command": command,
            "seed": seed,
            "config": effective.keys().map(|k| (k.to_string(), effective.get(k).unwrap_or_default().to_string())).collect::<BTreeMap<_, _>>(),
            "versions": {
                "gazfuse": env!("CARGO_PKG_VERSION"),
                "checkpoint_format": FORMAT_VERSION,
            },
            "inputs": self.inputs,
        });
        self.write("run.json", &(serde_json::to_string_pretty(&meta).expect("json") + "\n"))?;
        Ok(())
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

/// Configuration file overlaid with `--set` assignments, last wins.
fn layered(common: &Common) -> CliResult<KeyValues> {
    let mut kv = match &common.config {
        Some(p) => KeyValues::load(p)?,
        None => KeyValues::new(),
    };
    for a in &common.set {
        kv.set_assignment(a)
            .map_err(|m| Failure::new("config", format!("--set {a}: {m}")))?;
    }
    Ok(kv)
}

fn note(common: &Common, msg: impl AsRef<str>) {
    if !common.quiet {
        eprintln!("{}", msg.as_ref());
    }
}

/// Reads a column file (tags, if any, are ignored), or a plain-text file
/// with one sentence per line.
fn read_tokens_file(path: &Path, scheme: &TagScheme) -> CliResult<Corpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<&str> = text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l)).collect();
    let columnar = lines.iter().any(|l| l.contains('\t'))
        || lines
            .iter()
            .filter(|l| !l.trim().is_empty())
            .all(|l| l.split_whitespace().count() == 1);
    let mut sentences = Vec::new();
    if columnar {
        let mut tokens = Vec::new();
        for l in lines {
            if l.trim().is_empty() {
                if !tokens.is_empty() {
                    sentences.push(Sentence::unlabeled(std::mem::take(&mut tokens)));
                }
                continue;
            }
            tokens.push(l.split('\t').next().unwrap_or(l).to_string());
        }
        if !tokens.is_empty() {
            sentences.push(Sentence::unlabeled(tokens));
        }
    } else {
        sentences = lines
            .iter()
            .filter(|l| !l.trim().is_empty())
            .map(|l| Sentence::unlabeled(tokenize(l)))
            .collect();
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Corpus::new(name, scheme.clone(), sentences))
}

fn train_config(common: &Common) -> CliResult<(TrainConfig, KeyValues)> {
    let kv = layered(common)?;
    kv.check_known(TRAIN_KEYS)?;
    let mut config = TrainConfig::from_kv(&kv)?;
    if let Some(s) = common.seed {
        config.seed = s;
    }
    if let Some(m) = common.mode {
        config.mode = m.into();
    }
    if let Some(a) = common.attention {
        config.attention = matches!(a, Switch::On);
    }
    config.validate()?;
    let effective = config.to_kv();
    Ok((config, effective))
}

fn cmd_synth(common: &Common) -> CliResult<()> {
    let mut run = RunDir::open(common, "synth")?;
    let kv = layered(common)?;
    if let Some(p) = &common.config {
        run.input(p)?;
    }
    let config = SynthConfig::from_kv(&kv)?;
    let seed = common.seed.unwrap_or(7);
    let data = generate_synthetic_corpus(&config, seed)?;
    for (name, c) in [
        ("train.txt", &data.train),
        ("dev.txt", &data.dev),
        ("test.txt", &data.test),
    ] {
        save_column_corpus(c, run.join(name))?;
    }
    data.gazetteers.save(run.join("gazetteers"))?;
    data.full_gazetteers().save(run.join("gazetteers_full"))?;
    run.write("held_out.txt", &render_held_out(&data.held_out))?;
    let mut effective = config.to_kv();
    effective.set("seed", seed);
    run.finish("synth", Some(seed), &effective)?;
    note(
        common,
        format!(
            "wrote {} / {} / {} sentences and {} gazetteers to {}",
            data.train.len(),
            data.dev.len(),
            data.test.len(),
            data.gazetteers.len(),
            run.path.display()
        ),
    );
    Ok(())
}

fn cmd_train(
    common: &Common,
    train_path: &Path,
    dev_path: &Path,
    gazetteers: Option<&Path>,
    freeze: &[String],
    init: Option<&Path>,
) -> CliResult<()> {
    let (config, effective) = train_config(common)?;
    let mut run = RunDir::open(common, "train")?;
    for p in [
        Some(train_path),
        Some(dev_path),
        gazetteers,
        init,
        common.config.as_deref(),
    ]
    .into_iter()
    .flatten()
    {
        run.input(p)?;
    }
    note(
        common,
        format!("effective configuration:\n{}", effective.render().trim_end()),
    );
    let init_model = init.map(checkpoint::load).transpose()?;
    let scheme = match &init_model {
        Some(m) => m.scheme.clone(),
        None => TagScheme::infer_from_column_file(train_path)?,
    };
    let train_c = load_column_corpus(train_path, &scheme, Validation::Strict)?;
    let dev_c = load_column_corpus(dev_path, &scheme, Validation::Strict)?;
    let gaz = gazetteers.map(GazetteerSet::load_manifest).transpose()?;
    if config.mode != FusionMode::NerOnly && gaz.is_none() {
        return Err(Failure::new(
            "config",
            format!("{} mode needs --gazetteers", config.mode),
        ));
    }
    let gaz = if config.mode == FusionMode::NerOnly { None } else { gaz };
    let (model, mut record) = match init_model {
        Some(m) => {
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(config.seed);
            let m = if m.mode() == config.mode && m.arch.attention == config.attention {
                m
            } else {
                m.extend_to(
                    config.mode,
                    config.attention,
                    &gaz.as_ref().map(GazetteerSet::names).unwrap_or_default(),
                    &mut rng,
                )?
            };
            train_from(m, &config, &train_c, &dev_c, gaz.as_ref(), freeze)?
        }
        None => train(&config, &train_c, &dev_c, gaz.as_ref(), freeze)?,
    };
    let ckpt = run.join("model.ckpt");
    checkpoint::save(&model, &ckpt)?;
    record.checkpoint = Some(ckpt.display().to_string());
    run.write("epochs.jsonl", &record.to_jsonl())?;
    run.write(
        "run_record.json",
        &(serde_json::to_string_pretty(&record).expect("json") + "\n"),
    )?;
    let mut eff = effective;
    if !freeze.is_empty() {
        eff.set("freeze", freeze.join(","));
    }
    run.finish("train", Some(config.seed), &eff)?;
    note(
        common,
        format!(
            "trained {} epochs, best dev F1 {:.4} (epoch {}); checkpoint {}",
            record.epochs.len(),
            record.best_dev_f1.unwrap_or(0.0),
            record.best_epoch,
            ckpt.display()
        ),
    );
    Ok(())
}

fn load_model(path: &Path, unplug: bool) -> CliResult<Model> {
    let m = checkpoint::load(path)?;
    Ok(if unplug { m.unplug_gazetteer()? } else { m })
}

fn cmd_predict(common: &Common, model: &Path, input: &Path, gazetteers: Option<&Path>, unplug: bool) -> CliResult<()> {
    let mut run = RunDir::open(common, "predict")?;
    for p in [Some(model), Some(input), gazetteers].into_iter().flatten() {
        run.input(p)?;
    }
    let model = load_model(model, unplug)?;
    let corpus = read_tokens_file(input, &model.scheme)?;
    let gaz = match (model.mode(), gazetteers) {
        (FusionMode::NerOnly, _) => None,
        (_, Some(p)) => Some(GazetteerSet::load_manifest(p)?),
        (m, None) => return Err(Failure::new("config", format!("a {m} model needs --gazetteers"))),
    };
    let pred = model.predict_corpus(&corpus, gaz.as_ref())?;
    let out = run.join("predictions.txt");
    save_column_corpus(&pred, &out)?;
    let mut eff = KeyValues::new();
    eff.set("mode", model.mode());
    eff.set("unplug", unplug);
    run.finish("predict", None, &eff)?;
    note(
        common,
        format!("tagged {} sentences into {}", pred.len(), out.display()),
    );
    Ok(())
}

fn cmd_eval(common: &Common, pred: &Path, gold: &Path, seen: &[PathBuf]) -> CliResult<()> {
    let mut run = RunDir::open(common, "eval")?;
    for p in [pred, gold].into_iter().chain(seen.iter().map(PathBuf::as_path)) {
        run.input(p)?;
    }
    let scheme = TagScheme::infer_from_column_file(gold)?;
    let gold_c = load_column_corpus(gold, &scheme, Validation::Strict)?;
    let pred_c = load_column_corpus(pred, &scheme, Validation::Repair)?;
    let report = if seen.is_empty() {
        evaluate(&pred_c, &gold_c)?
    } else {
        let corpora = seen
            .iter()
            .map(|p| load_column_corpus(p, &scheme, Validation::Strict))
            .collect::<Result<Vec<_>, _>>()?;
        evaluate_unseen(&pred_c, &gold_c, &surface_forms(&corpora))?
    };
    run.write("report.json", &(report.to_json() + "\n"))?;
    let table = report.render_table();
    run.write("report.txt", &table)?;
    run.finish("eval", None, &KeyValues::new())?;
    if !common.quiet {
        print!("{table}");
    }
    Ok(())
}

fn cmd_match(common: &Common, gazetteers: &Path, input: &Path) -> CliResult<()> {
    let mut run = RunDir::open(common, "match")?;
    run.input(gazetteers)?;
    run.input(input)?;
    let set = GazetteerSet::load_manifest(gazetteers)?;
    let scheme = TagScheme::new::<&str>(&[])?;
    let corpus = read_tokens_file(input, &scheme)?;
    let mut text = format!("# token\t{}\n", set.names().join("\t"));
    for s in &corpus.sentences {
        let ann = set.annotate(&s.tokens);
        for (t, tok) in s.tokens.iter().enumerate() {
            text.push_str(tok);
            for row in &ann.codes {
                text.push('\t');
                text.push_str(row[t].as_str());
            }
            text.push('\n');
        }
        text.push('\n');
    }
    let out = run.write("matches.txt", &text)?;
    run.finish("match", None, &KeyValues::new())?;
    note(
        common,
        format!("annotated {} sentences into {}", corpus.len(), out.display()),
    );
    Ok(())
}

fn gazetteer_file(manifest: &Path, name: &str) -> CliResult<PathBuf> {
    GazetteerSet::manifest_files(manifest)?
        .into_iter()
        .find(|(n, _)| n == name)
        .map(|(_, p)| p)
        .ok_or_else(|| {
            Failure::new(
                "config",
                format!("no gazetteer named {name:?} in {}", manifest.display()),
            )
        })
}

fn edit_entries(edit: &GazetteEdit) -> CliResult<Vec<Vec<String>>> {
    let mut entries: Vec<Vec<String>> = edit.entries.iter().map(|e| tokenize(e)).collect();
    if let Some(f) = &edit.file {
        let text = fs::read_to_string(f).map_err(|e| Error::io(f, e))?;
        entries.extend(text.lines().filter(|l| !l.trim().is_empty()).map(tokenize));
    }
    if entries.iter().any(Vec::is_empty) || entries.is_empty() {
        return Err(Failure::new("invalid", "no entries given (or an entry is empty)"));
    }
    Ok(entries)
}

fn cmd_gazette(common: &Common, action: &GazetteAction) -> CliResult<()> {
    match action {
        GazetteAction::List { gazetteers, name } => {
            let set = GazetteerSet::load_manifest(gazetteers)?;
            for g in set.gazetteers() {
                if name.as_ref().is_some_and(|n| n != g.name()) {
                    continue;
                }
                if name.is_some() {
                    print!("{}", g.render());
                } else {
                    println!("{}\t{}", g.name(), g.len());
                }
            }
            Ok(())
        }
        GazetteAction::Add(edit) | GazetteAction::Remove(edit) => {
            let adding = matches!(action, GazetteAction::Add(_));
            let path = gazetteer_file(&edit.gazetteers, &edit.name)?;
            let mut g = Gazetteer::load(&path, Some(&edit.name))?;
            let mut changed = 0;
            for e in edit_entries(edit)? {
                changed += usize::from(if adding { g.insert(e) } else { g.remove(&e) });
            }
            g.save(&path)?;
            note(
                common,
                format!(
                    "{} {changed} entries {} {} ({} entries now)",
                    if adding { "added" } else { "removed" },
                    if adding { "to" } else { "from" },
                    edit.name,
                    g.len()
                ),
            );
            Ok(())
        }
    }
}

fn cmd_experiment(common: &Common, kind: ExperimentKind) -> CliResult<()> {
    let mut kv = layered(common)?;
    if let Some(s) = common.seed {
        kv.set("seeds", s);
    }
    if let Some(m) = common.mode {
        let attention = !matches!(common.attention, Some(Switch::Off));
        let mode: FusionMode = m.into();
        kv.set(
            "fusion",
            if attention {
                format!("{mode}+attention")
            } else {
                mode.to_string()
            },
        );
    } else if let Some(a) = common.attention {
        kv.set(
            "fusion",
            if matches!(a, Switch::On) {
                "late+attention"
            } else {
                "late"
            },
        );
    }
    let base = common.config.as_deref().and_then(Path::parent);
    let mut spec = ExperimentSpec::from_kv(kind, &kv, base)?;
    spec.quiet = common.quiet;
    let mut run = RunDir::open(common, &format!("experiment-{kind}"))?;
    if let Some(p) = &common.config {
        run.input(p)?;
    }
    let mut effective = gazfuse::harness::benchmark_defaults();
    effective.merge(&kv);
    effective.set("kind", kind);
    note(
        common,
        format!("effective configuration:\n{}", effective.render().trim_end()),
    );
    let (summary, _) = run_experiment(&spec, Some(&run.path))?;
    run.finish(&format!("experiment {kind}"), spec.seeds.first().copied(), &effective)?;
    if !common.quiet {
        for t in ["table.txt", "ablation.txt", "adaptation.txt"] {
            if let Ok(text) = fs::read_to_string(run.join(t)) {
                println!("{t}:\n{text}");
            }
        }
        if kind == ExperimentKind::Explain {
            println!("{}", fs::read_to_string(run.join("explain.txt")).unwrap_or_default());
        }
        let _ = summary;
    }
    Ok(())
}

fn cmd_explain(
    common: &Common,
    model: &Path,
    gazetteers: &Path,
    text: Option<&str>,
    input: Option<&Path>,
    top_k: usize,
) -> CliResult<()> {
    let mut run = RunDir::open(common, "explain")?;
    for p in [Some(model), Some(gazetteers), input].into_iter().flatten() {
        run.input(p)?;
    }
    let model = checkpoint::load(model)?;
    let set = GazetteerSet::load_manifest(gazetteers)?;
    let sentences: Vec<Vec<String>> = match (text, input) {
        (Some(t), _) => vec![tokenize(t)],
        (None, Some(p)) => read_tokens_file(p, &model.scheme)?
            .sentences
            .into_iter()
            .map(|s| s.tokens)
            .collect(),
        (None, None) => return Err(Failure::new("usage", "give --text or --input")),
    };
    let mut rendered = String::new();
    let mut json = String::new();
    for s in &sentences {
        let e = explain(&model, s, &set, top_k)?;
        rendered.push_str(&e.render());
        rendered.push('\n');
        json.push_str(&serde_json::to_string(&e).expect("json"));
        json.push('\n');
    }
    run.write("explain.txt", &rendered)?;
    run.write("explain.jsonl", &json)?;
    let mut eff = KeyValues::new();
    eff.set("top_k", top_k);
    run.finish("explain", None, &eff)?;
    if !common.quiet {
        print!("{rendered}");
    }
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let c = &cli.common;
    match &cli.command {
        Command::Synth => cmd_synth(c),
        Command::Train {
            train,
            dev,
            gazetteers,
            freeze,
            init,
        } => cmd_train(c, train, dev, gazetteers.as_deref(), freeze, init.as_deref()),
        Command::Predict {
            model,
            input,
            gazetteers,
            unplug,
        } => cmd_predict(c, model, input, gazetteers.as_deref(), *unplug),
        Command::Eval { pred, gold, seen } => cmd_eval(c, pred, gold, seen),
        Command::Match { gazetteers, input } => cmd_match(c, gazetteers, input),
        Command::Gazette { action } => cmd_gazette(c, action),
        Command::Experiment { kind } => cmd_experiment(c, *kind),
        Command::Explain {
            model,
            gazetteers,
            text,
            input,
            top_k,
        } => cmd_explain(c, model, gazetteers, text.as_deref(), input.as_deref(), *top_k),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid usage");
            eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.category, f.message.replace('\n', " "));
            ExitCode::from(f.exit_code())
        }
    }
}
