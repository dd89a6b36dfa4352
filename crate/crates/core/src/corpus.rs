//! Tokenized, tagged text: the IOBES tag alphabet, sentences, spans, and the
//! two-column corpus format.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TagId = usize;

/// Position code of a token within a span. Shared by entity tags and
/// gazetteer codes; the discriminants are the gazetteer code ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Iobes {
    O = 0,
    B = 1,
    I = 2,
    E = 3,
    S = 4,
}

impl Iobes {
    pub const ALL: [Iobes; 5] = [Iobes::O, Iobes::B, Iobes::I, Iobes::E, Iobes::S];

    pub fn from_index(i: usize) -> Option<Iobes> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Iobes::O => "O",
            Iobes::B => "B",
            Iobes::I => "I",
            Iobes::E => "E",
            Iobes::S => "S",
        }
    }

    fn parse(s: &str) -> Option<Iobes> {
        match s {
            "O" => Some(Iobes::O),
            "B" => Some(Iobes::B),
            "I" => Some(Iobes::I),
            "E" => Some(Iobes::E),
            "S" => Some(Iobes::S),
            _ => None,
        }
    }
}

impl fmt::Display for Iobes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The tag alphabet: `O` plus `B-t`, `I-t`, `E-t`, `S-t` for every entity type.
///
/// Id 0 is `O`; type `i` owns ids `1 + 4i ..= 4 + 4i` in B, I, E, S order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagScheme {
    entity_types: Vec<String>,
    ids: HashMap<String, TagId>,
}

impl TagScheme {
    pub fn new<S: AsRef<str>>(entity_types: &[S]) -> Result<TagScheme> {
        let entity_types: Vec<String> = entity_types.iter().map(|t| t.as_ref().to_string()).collect();
        let mut seen = BTreeSet::new();
        for t in &entity_types {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("bad entity type name {t:?}")));
            }
            if !seen.insert(t.as_str()) {
                return Err(Error::Config(format!("duplicate entity type {t:?}")));
            }
        }
        let mut scheme = TagScheme {
            entity_types,
            ids: HashMap::new(),
        };
        for id in 0..scheme.len() {
            let tag = scheme.tag_of(id);
            scheme.ids.insert(tag, id);
        }
        Ok(scheme)
    }

    pub fn entity_types(&self) -> &[String] {
        &self.entity_types
    }

    pub fn type_index(&self, name: &str) -> Option<usize> {
        self.entity_types.iter().position(|t| t == name)
    }

    /// Number of tags, `4 * types + 1`.
    pub fn len(&self) -> usize {
        4 * self.entity_types.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tag_of(&self, id: TagId) -> String {
        match self.split(id) {
            (Iobes::O, _) => "O".to_string(),
            (p, Some(t)) => format!("{}-{}", p, self.entity_types[t]),
            (_, None) => unreachable!(),
        }
    }

    pub fn id_of(&self, tag: &str) -> Option<TagId> {
        self.ids.get(tag).copied()
    }

    /// Decomposes a tag id into its position code and entity type index.
    pub fn split(&self, id: TagId) -> (Iobes, Option<usize>) {
        assert!(id < self.len(), "tag id {id} out of range");
        if id == 0 {
            return (Iobes::O, None);
        }
        let t = (id - 1) / 4;
        let p = Iobes::from_index((id - 1) % 4 + 1).unwrap();
        (p, Some(t))
    }

    pub fn compose(&self, prefix: Iobes, entity_type: usize) -> TagId {
        match prefix {
            Iobes::O => 0,
            p => 1 + 4 * entity_type + (p as usize - 1),
        }
    }

    /// Builds a scheme from the entity types used by the tags of a column
    /// file, sorted by name.
    pub fn infer_from_column_file(path: impl AsRef<Path>) -> Result<TagScheme> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut types = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let Some((_, tag)) = line.split_once('\t') else {
                continue;
            };
            if tag == "O" {
                continue;
            }
            match tag.split_once('-') {
                Some((p, t)) if Iobes::parse(p).is_some() && p != "O" => {
                    types.insert(t.to_string());
                }
                _ => {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: format!("malformed tag {tag:?}"),
                    })
                }
            }
        }
        let types: Vec<String> = types.into_iter().collect();
        TagScheme::new(&types)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub tags: Option<Vec<TagId>>,
}

impl Sentence {
    pub fn labeled(tokens: Vec<String>, tags: Vec<TagId>) -> Sentence {
        assert_eq!(tokens.len(), tags.len());
        Sentence {
            tokens,
            tags: Some(tags),
        }
    }

    pub fn unlabeled(tokens: Vec<String>) -> Sentence {
        Sentence { tokens, tags: None }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub name: String,
    pub scheme: TagScheme,
    pub sentences: Vec<Sentence>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, scheme: TagScheme, sentences: Vec<Sentence>) -> Corpus {
        Corpus {
            name: name.into(),
            scheme,
            sentences,
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    /// All gold spans of the corpus, in sentence order.
    pub fn spans(&self) -> Vec<Span> {
        self.sentences
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.tags.as_ref().map(|tags| spans_of(i, tags, &self.scheme)))
            .flatten()
            .collect()
    }

    /// Rewrites the corpus under a scheme restricted to `keep` types; tags of
    /// every other type become `O`.
    pub fn restrict_types<S: AsRef<str>>(&self, keep: &[S]) -> Result<Corpus> {
        let scheme = TagScheme::new(keep)?;
        let map: Vec<Option<usize>> = self
            .scheme
            .entity_types()
            .iter()
            .map(|t| scheme.type_index(t))
            .collect();
        let sentences = self
            .sentences
            .iter()
            .map(|s| Sentence {
                tokens: s.tokens.clone(),
                tags: s.tags.as_ref().map(|tags| {
                    tags.iter()
                        .map(|&id| match self.scheme.split(id) {
                            (p, Some(t)) => map[t].map_or(0, |nt| scheme.compose(p, nt)),
                            _ => 0,
                        })
                        .collect()
                }),
            })
            .collect();
        Ok(Corpus::new(self.name.clone(), scheme, sentences))
    }

    /// Re-indexes the tags of this corpus onto another scheme by tag name.
    pub fn with_scheme(&self, scheme: &TagScheme) -> Result<Corpus> {
        let map: Vec<TagId> = (0..self.scheme.len())
            .map(|id| {
                let tag = self.scheme.tag_of(id);
                scheme
                    .id_of(&tag)
                    .ok_or_else(|| Error::Schema(format!("tag {tag} missing from target scheme")))
            })
            .collect::<Result<_>>()?;
        let sentences = self
            .sentences
            .iter()
            .map(|s| Sentence {
                tokens: s.tokens.clone(),
                tags: s.tags.as_ref().map(|t| t.iter().map(|&id| map[id]).collect()),
            })
            .collect();
        Ok(Corpus::new(self.name.clone(), scheme.clone(), sentences))
    }
}

/// An entity mention: inclusive token range of one sentence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub entity_type: usize,
}

impl Span {
    pub fn new(sentence: usize, start: usize, end: usize, entity_type: usize) -> Span {
        Span {
            sentence,
            start,
            end,
            entity_type,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Checks a sequence of (code, type) pairs for IOBES validity: `I`/`E` only
/// continue an open `B`/`I` of the same type, and every `B`/`I` is continued.
pub fn is_valid_iobes<I>(codes: I) -> bool
where
    I: IntoIterator<Item = (Iobes, Option<usize>)>,
{
    let mut open: Option<Option<usize>> = None;
    for (p, t) in codes {
        match (p, open) {
            (Iobes::I | Iobes::E, Some(o)) if o == t => {
                if p == Iobes::E {
                    open = None;
                }
            }
            (Iobes::I | Iobes::E, _) => return false,
            (_, Some(_)) => return false,
            (Iobes::B, None) => open = Some(t),
            (Iobes::O | Iobes::S, None) => {}
        }
    }
    open.is_none()
}

pub fn is_valid_path(tags: &[TagId], scheme: &TagScheme) -> bool {
    is_valid_iobes(tags.iter().map(|&id| scheme.split(id)))
}

/// Index of the first token at which a tag sequence stops being a valid
/// IOBES path, if any. An unclosed span at the end reports the last token.
fn first_invalid(tags: &[TagId], scheme: &TagScheme) -> Option<usize> {
    let mut open: Option<Option<usize>> = None;
    for (i, &id) in tags.iter().enumerate() {
        let (p, t) = scheme.split(id);
        match (p, open) {
            (Iobes::I, Some(o)) if o == t => {}
            (Iobes::E, Some(o)) if o == t => open = None,
            (Iobes::I | Iobes::E, _) | (_, Some(_)) => return Some(i),
            (Iobes::B, None) => open = Some(t),
            _ => {}
        }
    }
    open.map(|_| tags.len() - 1)
}

/// Rewrites an arbitrary tag sequence into a valid IOBES path.
///
/// Scanning left to right, an `I`/`E` that does not continue an open span of
/// its type opens a new span (rewritten as `B`). A span still open at an `O`,
/// a new `B`/`S`, a type change, or the end of the sentence is closed at the
/// previous token: a trailing `I` becomes `E`, a lone `B` becomes `S`.
/// Valid paths are returned unchanged.
pub fn repair(tags: &[TagId], scheme: &TagScheme) -> Vec<TagId> {
    let mut out: Vec<TagId> = Vec::with_capacity(tags.len());
    let mut open: Option<usize> = None;

    fn close(out: &mut [TagId], scheme: &TagScheme) {
        let last = out.last_mut().expect("open span has a token");
        let (p, t) = scheme.split(*last);
        let t = t.expect("open span has a type");
        *last = match p {
            Iobes::B => scheme.compose(Iobes::S, t),
            Iobes::I => scheme.compose(Iobes::E, t),
            _ => *last,
        };
    }

    for &id in tags {
        let (p, t) = scheme.split(id);
        match p {
            Iobes::I | Iobes::E if open == t => {
                out.push(id);
                if p == Iobes::E {
                    open = None;
                }
            }
            Iobes::I | Iobes::E => {
                if open.is_some() {
                    close(&mut out, scheme);
                }
                let t = t.unwrap();
                out.push(scheme.compose(Iobes::B, t));
                open = Some(t);
            }
            _ => {
                if open.take().is_some() {
                    close(&mut out, scheme);
                }
                out.push(id);
                if p == Iobes::B {
                    open = t;
                }
            }
        }
    }
    if open.is_some() {
        close(&mut out, scheme);
    }
    out
}

/// Maximal entity spans of a tag sequence, sorted by start. Invalid paths are
/// repaired first.
pub fn spans_of(sentence: usize, tags: &[TagId], scheme: &TagScheme) -> Vec<Span> {
    let tags = repair(tags, scheme);
    let mut spans = Vec::new();
    let mut start = 0;
    for (i, &id) in tags.iter().enumerate() {
        match scheme.split(id) {
            (Iobes::B, _) => start = i,
            (Iobes::S, Some(t)) => spans.push(Span::new(sentence, i, i, t)),
            (Iobes::E, Some(t)) => spans.push(Span::new(sentence, start, i, t)),
            _ => {}
        }
    }
    spans
}

/// Inverse of [`spans_of`]: renders non-overlapping spans as a tag sequence.
pub fn encode_spans(len: usize, spans: &[Span], scheme: &TagScheme) -> Result<Vec<TagId>> {
    let mut tags = vec![0; len];
    let mut used = vec![false; len];
    for span in spans {
        if span.start > span.end || span.end >= len {
            return Err(Error::Invalid(format!(
                "span {}..={} out of bounds for {len} tokens",
                span.start, span.end
            )));
        }
        if span.entity_type >= scheme.entity_types().len() {
            return Err(Error::Invalid(format!(
                "unknown entity type index {}",
                span.entity_type
            )));
        }
        if used[span.start..=span.end].iter().any(|&u| u) {
            return Err(Error::Invalid(format!(
                "span {}..={} overlaps another span",
                span.start, span.end
            )));
        }
        used[span.start..=span.end].iter_mut().for_each(|u| *u = true);
        let t = span.entity_type;
        if span.start == span.end {
            tags[span.start] = scheme.compose(Iobes::S, t);
        } else {
            tags[span.start] = scheme.compose(Iobes::B, t);
            for tag in &mut tags[span.start + 1..span.end] {
                *tag = scheme.compose(Iobes::I, t);
            }
            tags[span.end] = scheme.compose(Iobes::E, t);
        }
    }
    Ok(tags)
}

/// How invalid IOBES transitions in a corpus file are treated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Validation {
    Strict,
    Repair,
}

/// Reads two-column `token<TAB>tag` text. Lines without a tab are taken as
/// bare tokens; a file must be either fully tagged or fully untagged.
pub fn read_column<R: BufRead>(reader: R, name: &str, scheme: &TagScheme, validation: Validation) -> Result<Corpus> {
    let mut sentences = Vec::new();
    let mut tokens = Vec::new();
    let mut tags: Vec<TagId> = Vec::new();
    let mut labeled: Option<bool> = None;

    let mut finish = |tokens: &mut Vec<String>, tags: &mut Vec<TagId>, labeled: Option<bool>| -> Result<()> {
        if tokens.is_empty() {
            return Ok(());
        }
        let index = sentences.len();
        let tokens = std::mem::take(tokens);
        if labeled == Some(true) {
            let mut t = std::mem::take(tags);
            if !is_valid_path(&t, scheme) {
                match validation {
                    Validation::Strict => {
                        let token = first_invalid(&t, scheme).unwrap_or(0);
                        return Err(Error::InvalidTransition { sentence: index, token });
                    }
                    Validation::Repair => t = repair(&t, scheme),
                }
            }
            sentences.push(Sentence::labeled(tokens, t));
        } else {
            sentences.push(Sentence::unlabeled(tokens));
        }
        Ok(())
    };

    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            finish(&mut tokens, &mut tags, labeled)?;
            continue;
        }
        let (token, tag) = match line.split_once('\t') {
            Some((tok, tag)) => (tok, Some(tag.trim_end())),
            None => (line, None),
        };
        let has_tag = tag.is_some();
        match labeled {
            None => labeled = Some(has_tag),
            Some(l) if l != has_tag => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "mixed tagged and untagged lines".into(),
                })
            }
            _ => {}
        }
        if token.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: "empty token".into(),
            });
        }
        if let Some(tag) = tag {
            let id = scheme.id_of(tag).ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("unknown tag {tag:?}"),
            })?;
            tags.push(id);
        }
        tokens.push(token.to_string());
    }
    finish(&mut tokens, &mut tags, labeled)?;
    Ok(Corpus::new(name, scheme.clone(), sentences))
}

pub fn load_column_corpus(path: impl AsRef<Path>, scheme: &TagScheme, validation: Validation) -> Result<Corpus> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_column(std::io::BufReader::new(file), &name, scheme, validation)
}

/// Writes a corpus in column format. Untagged sentences are written as bare
/// tokens.
pub fn write_column<W: Write>(corpus: &Corpus, mut out: W) -> std::io::Result<()> {
    for (i, s) in corpus.sentences.iter().enumerate() {
        if i > 0 {
            out.write_all(b"\n")?;
        }
        for (t, token) in s.tokens.iter().enumerate() {
            match &s.tags {
                Some(tags) => writeln!(out, "{}\t{}", token, corpus.scheme.tag_of(tags[t]))?,
                None => writeln!(out, "{token}")?,
            }
        }
    }
    Ok(())
}

pub fn save_column_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_column(corpus, &mut buf).expect("write to Vec");
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Splits raw text on whitespace and detaches punctuation characters as
/// separate tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let mut current = String::new();
        for c in word.chars() {
            if c.is_ascii_punctuation() || (!c.is_alphanumeric() && is_unicode_punct(c)) {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(c.to_string());
            } else {
                current.push(c);
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}

fn is_unicode_punct(c: char) -> bool {
    matches!(
        c,
        '\u{2010}'..='\u{2027}' | '\u{00A1}' | '\u{00BF}' | '\u{00AB}' | '\u{00BB}' | '\u{3001}' | '\u{3002}'
    )
}

/// Case-folded form of a token sequence, the key used for gazetteer matching
/// and mention bookkeeping.
pub fn normalize_token(token: &str) -> String {
    token.to_lowercase()
}

pub fn surface_form(tokens: &[String]) -> Vec<String> {
    tokens.iter().map(|t| normalize_token(t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scheme() -> TagScheme {
        TagScheme::new(&["M", "R"]).unwrap()
    }

    fn ids(s: &TagScheme, tags: &[&str]) -> Vec<TagId> {
        tags.iter().map(|t| s.id_of(t).unwrap()).collect()
    }

    #[test]
    fn scheme_layout() {
        let s = scheme();
        assert_eq!(s.len(), 9);
        assert_eq!(s.tag_of(0), "O");
        assert_eq!(s.tag_of(1), "B-M");
        assert_eq!(s.tag_of(8), "S-R");
        for i in 0..s.len() {
            assert_eq!(s.id_of(&s.tag_of(i)), Some(i));
        }
        assert!(TagScheme::new(&["A", "A"]).is_err());
    }

    #[test]
    fn spans_examples() {
        let s = scheme();
        assert_eq!(spans_of(0, &ids(&s, &["B-R", "I-R"]), &s), vec![Span::new(0, 0, 1, 1)]);
        assert_eq!(spans_of(0, &ids(&s, &["O", "O", "O"]), &s), vec![]);
        assert_eq!(
            spans_of(0, &ids(&s, &["S-M", "B-R", "E-R"]), &s),
            vec![Span::new(0, 0, 0, 0), Span::new(0, 1, 2, 1)]
        );
    }

    #[test]
    fn encode_examples() {
        let s = scheme();
        assert_eq!(
            encode_spans(3, &[Span::new(0, 0, 0, 0)], &s).unwrap(),
            ids(&s, &["S-M", "O", "O"])
        );
        assert_eq!(encode_spans(4, &[], &s).unwrap(), vec![0; 4]);
        assert_eq!(
            encode_spans(5, &[Span::new(0, 1, 3, 1)], &s).unwrap(),
            ids(&s, &["O", "B-R", "I-R", "E-R", "O"])
        );
        assert!(encode_spans(5, &[Span::new(0, 1, 3, 1), Span::new(0, 3, 4, 0)], &s).is_err());
        assert!(encode_spans(2, &[Span::new(0, 1, 3, 1)], &s).is_err());
    }

    #[test]
    fn repair_rules() {
        let s = scheme();
        let r = |t: &[&str]| {
            repair(&ids(&s, t), &s)
                .into_iter()
                .map(|i| s.tag_of(i))
                .collect::<Vec<_>>()
        };
        assert_eq!(r(&["B-R", "O"]), ["S-R", "O"]);
        assert_eq!(r(&["B-R", "I-R"]), ["B-R", "E-R"]);
        assert_eq!(r(&["I-R", "E-R"]), ["B-R", "E-R"]);
        assert_eq!(r(&["E-M"]), ["S-M"]);
        assert_eq!(r(&["B-M", "I-R", "E-R"]), ["S-M", "B-R", "E-R"]);
        assert_eq!(r(&["B-M", "I-M", "S-R"]), ["B-M", "E-M", "S-R"]);
        assert_eq!(r(&["O", "S-M", "O"]), ["O", "S-M", "O"]);
    }

    #[test]
    fn reads_column_text() {
        let s = TagScheme::new(&["Medication"]).unwrap();
        let c = read_column(
            "Tylenol\tS-Medication\n\ntake\tO\n".as_bytes(),
            "x",
            &s,
            Validation::Strict,
        )
        .unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.sentences[0].len(), 1);
        assert_eq!(c.sentences[1].len(), 1);

        let c = read_column("".as_bytes(), "x", &s, Validation::Strict).unwrap();
        assert!(c.is_empty());

        let err = read_column("a\tB-Drug\n".as_bytes(), "x", &s, Validation::Strict).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn strict_and_lenient_transitions() {
        let s = TagScheme::new(&["M"]).unwrap();
        let text = "a\tO\n\nb\tI-M\nc\tO\n";
        let err = read_column(text.as_bytes(), "x", &s, Validation::Strict).unwrap_err();
        assert!(
            matches!(err, Error::InvalidTransition { sentence: 1, token: 0 }),
            "{err}"
        );
        let c = read_column(text.as_bytes(), "x", &s, Validation::Repair).unwrap();
        assert_eq!(c.sentences[1].tags.as_ref().unwrap(), &vec![s.id_of("S-M").unwrap(), 0]);
    }

    #[test]
    fn column_round_trip() {
        let s = scheme();
        let text = "COPD\tB-R\nflare\tE-R\nwith\tO\n\nsodium\tS-M\n";
        let c = read_column(text.as_bytes(), "x", &s, Validation::Strict).unwrap();
        let mut out = Vec::new();
        write_column(&c, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    #[test]
    fn untagged_column() {
        let s = scheme();
        let c = read_column("take\nsodium\n\nnow\n".as_bytes(), "x", &s, Validation::Strict).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.sentences[0].tags.is_none());
        assert!(read_column("take\nsodium\tO\n".as_bytes(), "x", &s, Validation::Strict).is_err());
    }

    #[test]
    fn tokenizer_detaches_punctuation() {
        assert_eq!(
            tokenize("Postop day 0, increase sodium."),
            ["Postop", "day", "0", ",", "increase", "sodium", "."]
        );
        assert_eq!(tokenize("  "), Vec::<String>::new());
    }

    #[test]
    fn restrict_rewrites_other_types() {
        let s = scheme();
        let c = Corpus::new(
            "x",
            s.clone(),
            vec![Sentence::labeled(
                vec!["a".into(), "b".into(), "c".into()],
                ids(&s, &["S-M", "B-R", "E-R"]),
            )],
        );
        let r = c.restrict_types(&["R"]).unwrap();
        assert_eq!(r.scheme.len(), 5);
        let tags: Vec<String> = r.sentences[0]
            .tags
            .as_ref()
            .unwrap()
            .iter()
            .map(|&i| r.scheme.tag_of(i))
            .collect();
        assert_eq!(tags, ["O", "B-R", "E-R"]);
    }
}
