//! Synthetic tagged corpora with entity dictionaries and context cues.
//!
//! Every entity type owns a dictionary of generated multi-token names, a set
//! of cue words that tend to precede its mentions, and a few cue words that
//! tend to follow them. A configurable fraction of each dictionary is held
//! out: those names occur only in the test split. The returned gazetteers
//! cover a random subset of the remaining names plus distractor words that
//! also occur outside entities.

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{encode_spans, Corpus, Sentence, Span, TagScheme};
use crate::error::{Error, Result};
use crate::gazetteer::{Gazetteer, GazetteerSet};
use crate::kv::KeyValues;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    /// Number of filler (non-entity, non-cue) word types.
    pub vocab_size: usize,
    pub types: Vec<String>,
    pub names_per_type: usize,
    pub name_len_min: usize,
    pub name_len_max: usize,
    pub sentences_train: usize,
    pub sentences_dev: usize,
    pub sentences_test: usize,
    pub unseen_fraction: f64,
    /// Probability that a mention is introduced by a cue of its own type.
    pub cue_strength: f64,
    /// Fraction of seen names listed in the gazetteers.
    pub gazetteer_coverage: f64,
    /// Filler words added to each gazetteer.
    pub gazetteer_distractors: usize,
    /// Selects cue and filler usage; corpora with different dialects share
    /// dictionaries when generated from the same seed.
    pub dialect: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            vocab_size: 2000,
            types: vec!["Medication".into(), "Condition".into(), "Procedure".into()],
            names_per_type: 120,
            name_len_min: 1,
            name_len_max: 3,
            sentences_train: 3000,
            sentences_dev: 500,
            sentences_test: 1000,
            unseen_fraction: 0.3,
            cue_strength: 0.8,
            gazetteer_coverage: 0.8,
            gazetteer_distractors: 20,
            dialect: 0,
        }
    }
}

const KEYS: &[&str] = &[
    "vocab_size",
    "types",
    "names_per_type",
    "name_len_min",
    "name_len_max",
    "sentences_train",
    "sentences_dev",
    "sentences_test",
    "unseen_fraction",
    "cue_strength",
    "gazetteer_coverage",
    "gazetteer_distractors",
    "dialect",
];

impl SynthConfig {
    pub fn from_kv(kv: &KeyValues) -> Result<SynthConfig> {
        kv.check_known(KEYS)?;
        let d = SynthConfig::default();
        let c = SynthConfig {
            vocab_size: kv.parse_or("vocab_size", d.vocab_size)?,
            types: kv.list("types").unwrap_or(d.types),
            names_per_type: kv.parse_or("names_per_type", d.names_per_type)?,
            name_len_min: kv.parse_or("name_len_min", d.name_len_min)?,
            name_len_max: kv.parse_or("name_len_max", d.name_len_max)?,
            sentences_train: kv.parse_or("sentences_train", d.sentences_train)?,
            sentences_dev: kv.parse_or("sentences_dev", d.sentences_dev)?,
            sentences_test: kv.parse_or("sentences_test", d.sentences_test)?,
            unseen_fraction: kv.parse_or("unseen_fraction", d.unseen_fraction)?,
            cue_strength: kv.parse_or("cue_strength", d.cue_strength)?,
            gazetteer_coverage: kv.parse_or("gazetteer_coverage", d.gazetteer_coverage)?,
            gazetteer_distractors: kv.parse_or("gazetteer_distractors", d.gazetteer_distractors)?,
            dialect: kv.parse_or("dialect", d.dialect)?,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("vocab_size", self.vocab_size);
        kv.set("types", self.types.join(","));
        kv.set("names_per_type", self.names_per_type);
        kv.set("name_len_min", self.name_len_min);
        kv.set("name_len_max", self.name_len_max);
        kv.set("sentences_train", self.sentences_train);
        kv.set("sentences_dev", self.sentences_dev);
        kv.set("sentences_test", self.sentences_test);
        kv.set("unseen_fraction", self.unseen_fraction);
        kv.set("cue_strength", self.cue_strength);
        kv.set("gazetteer_coverage", self.gazetteer_coverage);
        kv.set("gazetteer_distractors", self.gazetteer_distractors);
        kv.set("dialect", self.dialect);
        kv
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.types.is_empty() {
            return bad("at least one entity type is required");
        }
        if self.names_per_type == 0 {
            return bad("names_per_type must be positive");
        }
        if self.name_len_min == 0 || self.name_len_min > self.name_len_max {
            return bad("need 1 <= name_len_min <= name_len_max");
        }
        if self.vocab_size < 10 {
            return bad("vocab_size must be at least 10");
        }
        if !(0.0..1.0).contains(&self.unseen_fraction) {
            return bad("unseen_fraction must lie in [0, 1)");
        }
        for (k, v) in [
            ("cue_strength", self.cue_strength),
            ("gazetteer_coverage", self.gazetteer_coverage),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{k} must lie in [0, 1]")));
            }
        }
        if self.gazetteer_distractors > self.vocab_size / 2 {
            return bad("gazetteer_distractors exceeds half the filler vocabulary");
        }
        Ok(())
    }

    fn unseen_per_type(&self) -> usize {
        (self.unseen_fraction * self.names_per_type as f64).round() as usize
    }
}

/// A dictionary name withheld from the training and development splits.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct HeldOutMention {
    pub entity_type: String,
    pub tokens: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
    pub gazetteers: GazetteerSet,
    pub held_out: Vec<HeldOutMention>,
}

impl SyntheticData {
    /// Gazetteers with every held-out name added to its type's dictionary.
    pub fn full_gazetteers(&self) -> GazetteerSet {
        let mut set = self.gazetteers.clone();
        for m in &self.held_out {
            set.add_entries(&gazetteer_name(&m.entity_type), [&m.tokens])
                .expect("held-out type has a gazetteer");
        }
        set
    }
}

/// Name of the gazetteer generated for an entity type.
pub fn gazetteer_name(entity_type: &str) -> String {
    entity_type.to_lowercase()
}

struct Lexicon {
    filler: Vec<String>,
    /// per type: cues preceding a mention
    pre_cues: Vec<Vec<String>>,
    /// per type: cues following a mention
    post_cues: Vec<Vec<String>>,
    /// per type: (seen names, unseen names)
    seen: Vec<Vec<Vec<String>>>,
    unseen: Vec<Vec<Vec<String>>>,
    distractors: Vec<Vec<String>>,
}

struct WordMaker {
    used: HashSet<String>,
}

impl WordMaker {
    const ONSETS: &'static [&'static str] = &[
        "b", "c", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "cl", "dr", "fl", "gr",
        "pr", "st", "tr", "ch", "sh", "th", "ph", "x", "qu",
    ];
    const VOWELS: &'static [&'static str] = &["a", "e", "i", "o", "u", "ai", "io", "ea", "y", "ou"];
    const CODAS: &'static [&'static str] = &["", "", "", "n", "l", "r", "x", "s", "m", "t", "d", "ne", "ol", "ex"];

    fn word(&mut self, rng: &mut ChaCha8Rng, syllables: usize) -> String {
        loop {
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(Self::ONSETS.choose(rng).unwrap());
                w.push_str(Self::VOWELS.choose(rng).unwrap());
            }
            w.push_str(Self::CODAS.choose(rng).unwrap());
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

pub(crate) fn mix(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// True if `needle` occurs as a contiguous token subsequence of `hay`.
fn occurs_in(needle: &[String], hay: &[String]) -> bool {
    needle.len() <= hay.len() && hay.windows(needle.len()).any(|w| w == needle)
}

fn build_lexicon(config: &SynthConfig, seed: u64) -> Result<Lexicon> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 1));
    let mut maker = WordMaker { used: HashSet::new() };
    let n_types = config.types.len();

    let filler: Vec<String> = (0..config.vocab_size)
        .map(|_| {
            let n = 1 + rng.gen_range(0..2);
            maker.word(&mut rng, n)
        })
        .collect();
    let pre_cues: Vec<Vec<String>> = (0..n_types)
        .map(|_| (0..12).map(|_| maker.word(&mut rng, 2)).collect())
        .collect();
    let post_cues: Vec<Vec<String>> = (0..n_types)
        .map(|_| (0..4).map(|_| maker.word(&mut rng, 2)).collect())
        .collect();

    let unseen_n = config.unseen_per_type();
    let mut seen = Vec::with_capacity(n_types);
    let mut unseen = Vec::with_capacity(n_types);
    let mut all_names: BTreeSet<Vec<String>> = BTreeSet::new();
    let mut per_type: Vec<Vec<Vec<String>>> = Vec::with_capacity(n_types);
    for _ in 0..n_types {
        // name words are shared between names of one type
        let pool_size = (config.names_per_type * (config.name_len_min + config.name_len_max))
            .div_ceil(3)
            .max(4);
        let pool: Vec<String> = (0..pool_size)
            .map(|_| {
                let n = 2 + rng.gen_range(0..2);
                maker.word(&mut rng, n)
            })
            .collect();
        let mut names = Vec::with_capacity(config.names_per_type);
        let mut attempts = 0;
        while names.len() < config.names_per_type {
            attempts += 1;
            if attempts > config.names_per_type * 1000 {
                return Err(Error::Config("could not generate enough distinct names".into()));
            }
            let len = rng.gen_range(config.name_len_min..=config.name_len_max);
            let name: Vec<String> = (0..len).map(|_| pool.choose(&mut rng).unwrap().clone()).collect();
            if all_names.insert(name.clone()) {
                names.push(name);
            }
        }
        per_type.push(names);
    }

    let every: Vec<Vec<String>> = per_type.iter().flatten().cloned().collect();
    let mut withheld: HashSet<Vec<String>> = HashSet::new();
    for names in &per_type {
        let mut order: Vec<usize> = (0..names.len()).collect();
        order.shuffle(&mut rng);
        let mut chosen = Vec::new();
        for i in order {
            if chosen.len() == unseen_n {
                break;
            }
            let cand = &names[i];
            // a withheld name must not occur inside any name that stays seen
            let clash = every
                .iter()
                .any(|n| n != cand && !withheld.contains(n) && occurs_in(cand, n));
            if !clash {
                withheld.insert(cand.clone());
                chosen.push(i);
            }
        }
        if chosen.len() < unseen_n {
            return Err(Error::Config(format!(
                "cannot hold out {unseen_n} names per type without them occurring inside seen names"
            )));
        }
        chosen.sort_unstable();
        unseen.push(chosen.iter().map(|&i| names[i].clone()).collect::<Vec<_>>());
        seen.push(
            names
                .iter()
                .enumerate()
                .filter(|(i, _)| !chosen.contains(i))
                .map(|(_, n)| n.clone())
                .collect::<Vec<_>>(),
        );
    }
    // a withheld name accepted early may sit inside a name withheld later; that
    // is fine, but it must not sit inside one that stayed seen
    for (t, names) in unseen.iter().enumerate() {
        for u in names {
            if seen.iter().flatten().any(|s| occurs_in(u, s)) {
                return Err(Error::Config(format!(
                    "held-out name {:?} of type {} occurs in a seen name",
                    u.join(" "),
                    config.types[t]
                )));
            }
        }
    }

    let distractors = (0..n_types)
        .map(|_| {
            filler
                .choose_multiple(&mut rng, config.gazetteer_distractors)
                .cloned()
                .collect()
        })
        .collect();

    Ok(Lexicon {
        filler,
        pre_cues,
        post_cues,
        seen,
        unseen,
        distractors,
    })
}

/// Zipf-like rank sampler over `n` items.
struct Zipf {
    cdf: Vec<f64>,
}

impl Zipf {
    fn new(n: usize, exponent: f64) -> Zipf {
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for r in 0..n {
            acc += 1.0 / ((r + 1) as f64).powf(exponent);
            cdf.push(acc);
        }
        cdf.iter_mut().for_each(|c| *c /= acc);
        Zipf { cdf }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.gen();
        self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Split {
    Train,
    Dev,
    Test,
}

struct SentenceMaker<'a> {
    config: &'a SynthConfig,
    lex: &'a Lexicon,
    filler_dist: Zipf,
    /// dialect-specific view of the cue sets
    pre_cues: Vec<Vec<&'a String>>,
    post_cues: Vec<Vec<&'a String>>,
    filler: Vec<&'a String>,
    seen_dist: Vec<Zipf>,
}

impl<'a> SentenceMaker<'a> {
    fn new(config: &'a SynthConfig, lex: &'a Lexicon, seed: u64) -> SentenceMaker<'a> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 2 + config.dialect));
        let pick = |v: &'a [String], k: usize, rng: &mut ChaCha8Rng| -> Vec<&'a String> {
            if config.dialect == 0 {
                v.iter().take(k).collect()
            } else {
                v.choose_multiple(rng, k).collect()
            }
        };
        let pre_cues = lex.pre_cues.iter().map(|c| pick(c, 8, &mut rng)).collect();
        let post_cues = lex.post_cues.iter().map(|c| pick(c, 3, &mut rng)).collect();
        let mut filler: Vec<&String> = lex.filler.iter().collect();
        if config.dialect != 0 {
            filler.shuffle(&mut rng);
        }
        SentenceMaker {
            config,
            lex,
            filler_dist: Zipf::new(filler.len(), 1.0),
            pre_cues,
            post_cues,
            filler,
            seen_dist: lex.seen.iter().map(|s| Zipf::new(s.len().max(1), 0.8)).collect(),
        }
    }

    fn filler_word(&self, rng: &mut ChaCha8Rng, out: &mut Vec<String>) {
        // gazetteer distractors appear as ordinary words
        if rng.gen_bool(0.06) {
            let t = rng.gen_range(0..self.lex.distractors.len());
            if let Some(d) = self.lex.distractors[t].choose(rng) {
                out.push(d.clone());
                return;
            }
        }
        out.push(self.filler[self.filler_dist.sample(rng)].clone());
    }

    fn fillers(&self, rng: &mut ChaCha8Rng, lo: usize, hi: usize, out: &mut Vec<String>) {
        let n = rng.gen_range(lo..=hi);
        for _ in 0..n {
            self.filler_word(rng, out);
            // cue words without a following mention
            if rng.gen_bool(0.05) {
                let t = rng.gen_range(0..self.pre_cues.len());
                out.push(self.pre_cues[t].choose(rng).unwrap().to_string());
            }
        }
    }

    fn name(&self, rng: &mut ChaCha8Rng, t: usize, split: Split, forced: Option<&[String]>) -> Vec<String> {
        let base: Vec<String> = match forced {
            Some(n) => n.to_vec(),
            None => {
                let unseen = &self.lex.unseen[t];
                let total = self.lex.seen[t].len() + unseen.len();
                let use_unseen =
                    split == Split::Test && !unseen.is_empty() && rng.gen_bool(unseen.len() as f64 / total as f64);
                if use_unseen || self.lex.seen[t].is_empty() {
                    unseen.choose(rng).unwrap().clone()
                } else {
                    self.lex.seen[t][self.seen_dist[t].sample(rng)].clone()
                }
            }
        };
        base.into_iter()
            .map(|w| if rng.gen_bool(0.2) { capitalize(&w) } else { w })
            .collect()
    }

    fn sentence(
        &self,
        rng: &mut ChaCha8Rng,
        split: Split,
        forced: &mut Vec<(usize, Vec<String>)>,
        scheme: &TagScheme,
    ) -> Sentence {
        let n_types = self.config.types.len();
        let n_entities = match rng.gen_range(0..100) {
            0..=14 => 0,
            15..=74 => 1,
            _ => 2,
        };
        let n_entities = if forced.is_empty() {
            n_entities
        } else {
            n_entities.max(1)
        };
        let mut tokens = Vec::new();
        let mut spans = Vec::new();
        self.fillers(rng, 1, 3, &mut tokens);
        for _ in 0..n_entities {
            let (t, forced_name) = match forced.pop() {
                Some((t, n)) => (t, Some(n)),
                None => (rng.gen_range(0..n_types), None),
            };
            if rng.gen_bool(self.config.cue_strength) {
                tokens.push(self.pre_cues[t].choose(rng).unwrap().to_string());
                if rng.gen_bool(0.3) {
                    tokens.push(self.pre_cues[t].choose(rng).unwrap().to_string());
                }
            } else if n_types > 1 && rng.gen_bool(0.5) {
                let other = (t + rng.gen_range(1..n_types)) % n_types;
                tokens.push(self.pre_cues[other].choose(rng).unwrap().to_string());
            } else {
                self.filler_word(rng, &mut tokens);
            }
            let name = self.name(rng, t, split, forced_name.as_deref());
            let start = tokens.len();
            tokens.extend(name);
            spans.push(Span::new(0, start, tokens.len() - 1, t));
            if rng.gen_bool(self.config.cue_strength * 0.5) {
                tokens.push(self.post_cues[t].choose(rng).unwrap().to_string());
            }
            self.fillers(rng, 1, 3, &mut tokens);
        }
        if n_entities == 0 {
            self.fillers(rng, 2, 6, &mut tokens);
        }
        let tags = encode_spans(tokens.len(), &spans, scheme).expect("generated spans are disjoint");
        Sentence::labeled(tokens, tags)
    }

    fn split(&self, seed: u64, split: Split, count: usize, scheme: &TagScheme) -> Result<Vec<Sentence>> {
        let salt = match split {
            Split::Train => 10,
            Split::Dev => 11,
            Split::Test => 12,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(mix(mix(seed, salt), self.config.dialect));
        // every held-out name is placed in the test split at least once
        let mut forced: Vec<(usize, Vec<String>)> = Vec::new();
        if split == Split::Test {
            for (t, names) in self.lex.unseen.iter().enumerate() {
                forced.extend(names.iter().map(|n| (t, n.clone())));
            }
            forced.shuffle(&mut rng);
            if forced.len() > 2 * count {
                return Err(Error::Config(format!(
                    "{} held-out names do not fit into {count} test sentences",
                    forced.len()
                )));
            }
        }
        Ok((0..count)
            .map(|_| self.sentence(&mut rng, split, &mut forced, scheme))
            .collect())
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Generates train/dev/test corpora, gazetteers without the held-out names,
/// and the held-out names themselves. A pure function of `(config, seed)`.
pub fn generate_synthetic_corpus(config: &SynthConfig, seed: u64) -> Result<SyntheticData> {
    config.validate()?;
    let scheme = TagScheme::new(&config.types)?;
    let lex = build_lexicon(config, seed)?;
    let maker = SentenceMaker::new(config, &lex, seed);

    let train = maker.split(seed, Split::Train, config.sentences_train, &scheme)?;
    let dev = maker.split(seed, Split::Dev, config.sentences_dev, &scheme)?;
    let test = maker.split(seed, Split::Test, config.sentences_test, &scheme)?;

    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 3));
    let mut gazetteers = Vec::new();
    for (t, ty) in config.types.iter().enumerate() {
        let mut g = Gazetteer::empty(gazetteer_name(ty));
        for name in &lex.seen[t] {
            if rng.gen_bool(config.gazetteer_coverage) {
                g.insert(name.clone());
            }
        }
        for d in &lex.distractors[t] {
            g.insert(vec![d.clone()]);
        }
        gazetteers.push(g);
    }

    let held_out = lex
        .unseen
        .iter()
        .enumerate()
        .flat_map(|(t, names)| {
            names.iter().map(move |n| HeldOutMention {
                entity_type: config.types[t].clone(),
                tokens: n.clone(),
            })
        })
        .collect();

    let suffix = if config.dialect == 0 {
        String::new()
    } else {
        format!("-d{}", config.dialect)
    };
    Ok(SyntheticData {
        train: Corpus::new(format!("train{suffix}"), scheme.clone(), train),
        dev: Corpus::new(format!("dev{suffix}"), scheme.clone(), dev),
        test: Corpus::new(format!("test{suffix}"), scheme, test),
        gazetteers: GazetteerSet::new(gazetteers)?,
        held_out,
    })
}

/// Held-out names as `type<TAB>tokens` lines.
pub fn render_held_out(held_out: &[HeldOutMention]) -> String {
    held_out
        .iter()
        .map(|m| format!("{}\t{}\n", m.entity_type, m.tokens.join(" ")))
        .collect()
}

pub fn parse_held_out(text: &str) -> Result<Vec<HeldOutMention>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let (t, toks) = l.split_once('\t').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected type<TAB>tokens".into(),
            })?;
            Ok(HeldOutMention {
                entity_type: t.to_string(),
                tokens: toks.split_whitespace().map(String::from).collect(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{surface_form, write_column};

    fn small() -> SynthConfig {
        SynthConfig {
            vocab_size: 200,
            names_per_type: 30,
            sentences_train: 200,
            sentences_dev: 50,
            sentences_test: 100,
            ..SynthConfig::default()
        }
    }

    fn bytes(c: &Corpus) -> Vec<u8> {
        let mut v = Vec::new();
        write_column(c, &mut v).unwrap();
        v
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic_corpus(&small(), 7).unwrap();
        let b = generate_synthetic_corpus(&small(), 7).unwrap();
        assert_eq!(bytes(&a.train), bytes(&b.train));
        assert_eq!(bytes(&a.test), bytes(&b.test));
        assert_eq!(a.held_out, b.held_out);
        let c = generate_synthetic_corpus(&small(), 8).unwrap();
        assert_ne!(bytes(&a.train), bytes(&c.train));
    }

    #[test]
    fn zero_unseen_fraction() {
        let cfg = SynthConfig {
            unseen_fraction: 0.0,
            ..small()
        };
        assert!(generate_synthetic_corpus(&cfg, 1).unwrap().held_out.is_empty());
    }

    #[test]
    fn held_out_names_only_in_test() {
        let cfg = SynthConfig {
            types: vec!["Drug".into()],
            names_per_type: 100,
            unseen_fraction: 0.3,
            ..small()
        };
        let data = generate_synthetic_corpus(&cfg, 3).unwrap();
        assert_eq!(data.held_out.len(), 30);
        let streams =
            |c: &Corpus| -> Vec<Vec<String>> { c.sentences.iter().map(|s| surface_form(&s.tokens)).collect() };
        let train = streams(&data.train);
        let dev = streams(&data.dev);
        let test = streams(&data.test);
        for m in &data.held_out {
            let needle = surface_form(&m.tokens);
            assert!(
                !train.iter().chain(&dev).any(|s| occurs_in(&needle, s)),
                "{needle:?} leaked"
            );
            assert!(test.iter().any(|s| occurs_in(&needle, s)), "{needle:?} never used");
        }
    }

    #[test]
    fn infeasible_config() {
        let cfg = SynthConfig {
            names_per_type: 40,
            unseen_fraction: 0.5,
            sentences_test: 10,
            ..small()
        };
        assert!(generate_synthetic_corpus(&cfg, 1).is_err());
        let cfg = SynthConfig {
            unseen_fraction: 1.0,
            ..small()
        };
        assert!(generate_synthetic_corpus(&cfg, 1).is_err());
    }

    #[test]
    fn held_out_round_trip() {
        let data = generate_synthetic_corpus(&small(), 2).unwrap();
        assert_eq!(parse_held_out(&render_held_out(&data.held_out)).unwrap(), data.held_out);
    }

    #[test]
    fn config_kv_round_trip() {
        let c = small();
        assert_eq!(SynthConfig::from_kv(&c.to_kv()).unwrap(), c);
    }
}
