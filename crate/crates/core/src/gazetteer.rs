//! Named dictionaries matched against token sequences with a greedy
//! leftmost-longest rule.
//!
//! Each gazetteer keeps a token-level trie over its case-folded entries.
//! Matching scans left to right; at every position the longest entry that
//! starts there wins and the scan resumes after it, so `{A, B, AB}` labels
//! the tokens `A B` as one two-token match. A shorter match is never given
//! up to let a longer one start later.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::corpus::{is_valid_iobes, normalize_token, Iobes};
use crate::error::{Error, Result};

/// Number of gazetteer codes (O, B, I, E, S).
pub const CODES: usize = 5;

type NodeId = u32;
const ROOT: NodeId = 0;

#[derive(Clone, Debug, Default)]
struct Node {
    children: HashMap<Box<str>, NodeId>,
    terminal: bool,
}

#[derive(Clone, Debug)]
pub struct Gazetteer {
    name: String,
    /// normalized entry -> surface form as first supplied
    entries: BTreeMap<Vec<String>, Vec<String>>,
    nodes: Vec<Node>,
    free: Vec<NodeId>,
}

impl Gazetteer {
    pub fn empty(name: impl Into<String>) -> Gazetteer {
        Gazetteer {
            name: name.into(),
            entries: BTreeMap::new(),
            nodes: vec![Node::default()],
            free: Vec::new(),
        }
    }

    /// Builds a gazetteer from token-sequence entries. Entries are
    /// case-folded and deduplicated; an empty entry or empty token is an
    /// error naming the entry index.
    pub fn build<E, S>(name: impl Into<String>, entries: E) -> Result<Gazetteer>
    where
        E: IntoIterator,
        E::Item: AsRef<[S]>,
        S: AsRef<str>,
    {
        let mut g = Gazetteer::empty(name);
        for (i, e) in entries.into_iter().enumerate() {
            let tokens: Vec<String> = e.as_ref().iter().map(|t| t.as_ref().to_string()).collect();
            check_entry(&tokens).map_err(|m| Error::Invalid(format!("entry {i}: {m}")))?;
            g.insert(tokens);
        }
        Ok(g)
    }

    /// Builds from whitespace-separated entry strings.
    pub fn from_lines<S: AsRef<str>>(name: impl Into<String>, lines: &[S]) -> Result<Gazetteer> {
        let entries: Vec<Vec<&str>> = lines.iter().map(|l| l.as_ref().split_whitespace().collect()).collect();
        Gazetteer::build(name, entries)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Surface forms of all entries, ordered by normalized form.
    pub fn entries(&self) -> impl Iterator<Item = &[String]> {
        self.entries.values().map(Vec::as_slice)
    }

    pub fn normalized_entries(&self) -> impl Iterator<Item = &[String]> {
        self.entries.keys().map(Vec::as_slice)
    }

    pub fn contains<S: AsRef<str>>(&self, entry: &[S]) -> bool {
        let key: Vec<String> = entry.iter().map(|t| normalize_token(t.as_ref())).collect();
        self.entries.contains_key(&key)
    }

    /// Trie membership query, independent of the entry set.
    pub fn trie_contains<S: AsRef<str>>(&self, entry: &[S]) -> bool {
        let mut node = ROOT;
        for t in entry {
            match self.nodes[node as usize]
                .children
                .get(normalize_token(t.as_ref()).as_str())
            {
                Some(&c) => node = c,
                None => return false,
            }
        }
        !entry.is_empty() && self.nodes[node as usize].terminal
    }

    /// Inserts an entry; returns false if it was already present.
    pub fn insert(&mut self, tokens: Vec<String>) -> bool {
        let key: Vec<String> = tokens.iter().map(|t| normalize_token(t)).collect();
        if self.entries.contains_key(&key) {
            return false;
        }
        let mut node = ROOT;
        for t in &key {
            node = match self.nodes[node as usize].children.get(t.as_str()) {
                Some(&c) => c,
                None => {
                    let c = self.alloc();
                    self.nodes[node as usize].children.insert(t.as_str().into(), c);
                    c
                }
            };
        }
        self.nodes[node as usize].terminal = true;
        self.entries.insert(key, tokens);
        true
    }

    /// Removes an entry and prunes trie nodes no other entry uses; returns
    /// false if it was absent.
    pub fn remove<S: AsRef<str>>(&mut self, tokens: &[S]) -> bool {
        let key: Vec<String> = tokens.iter().map(|t| normalize_token(t.as_ref())).collect();
        if self.entries.remove(&key).is_none() {
            return false;
        }
        let mut path = vec![ROOT];
        for t in &key {
            let node = *path.last().unwrap();
            path.push(self.nodes[node as usize].children[t.as_str()]);
        }
        let last = *path.last().unwrap();
        self.nodes[last as usize].terminal = false;
        for depth in (1..path.len()).rev() {
            let node = path[depth];
            let n = &self.nodes[node as usize];
            if n.terminal || !n.children.is_empty() {
                break;
            }
            self.nodes[path[depth - 1] as usize]
                .children
                .remove(key[depth - 1].as_str());
            self.free.push(node);
        }
        true
    }

    fn alloc(&mut self) -> NodeId {
        match self.free.pop() {
            Some(id) => {
                self.nodes[id as usize] = Node::default();
                id
            }
            None => {
                self.nodes.push(Node::default());
                (self.nodes.len() - 1) as NodeId
            }
        }
    }

    /// Number of live trie nodes, root included.
    pub fn trie_size(&self) -> usize {
        self.nodes.len() - self.free.len()
    }

    /// Length of the longest entry starting at `start` of pre-normalized tokens.
    fn longest_at(&self, tokens: &[String], start: usize) -> usize {
        let mut node = ROOT;
        let mut best = 0;
        for (k, t) in tokens[start..].iter().enumerate() {
            match self.nodes[node as usize].children.get(t.as_str()) {
                Some(&c) => node = c,
                None => break,
            }
            if self.nodes[node as usize].terminal {
                best = k + 1;
            }
        }
        best
    }

    /// Greedy leftmost-longest match over raw tokens.
    pub fn match_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<Iobes> {
        let normalized: Vec<String> = tokens.iter().map(|t| normalize_token(t.as_ref())).collect();
        self.match_normalized(&normalized)
    }

    /// Greedy leftmost-longest match over already case-folded tokens.
    pub fn match_normalized(&self, tokens: &[String]) -> Vec<Iobes> {
        let mut row = vec![Iobes::O; tokens.len()];
        let mut t = 0;
        while t < tokens.len() {
            let len = self.longest_at(tokens, t);
            match len {
                0 => {
                    t += 1;
                    continue;
                }
                1 => row[t] = Iobes::S,
                _ => {
                    row[t] = Iobes::B;
                    row[t + 1..t + len - 1].iter_mut().for_each(|c| *c = Iobes::I);
                    row[t + len - 1] = Iobes::E;
                }
            }
            t += len;
        }
        row
    }

    pub fn load(path: impl AsRef<Path>, name: Option<&str>) -> Result<Gazetteer> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = match name {
            Some(n) => n.to_string(),
            None => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .ok_or_else(|| Error::Invalid(format!("no file name in {}", path.display())))?,
        };
        let mut g = Gazetteer::empty(name);
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            g.insert(line.split_whitespace().map(String::from).collect());
        }
        Ok(g)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in self.entries() {
            out.push_str(&e.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }
}

fn check_entry(tokens: &[String]) -> std::result::Result<(), String> {
    if tokens.is_empty() {
        return Err("empty entry".into());
    }
    if tokens
        .iter()
        .any(|t| t.trim().is_empty() || t.chars().any(char::is_whitespace))
    {
        return Err("empty or whitespace-bearing token".into());
    }
    Ok(())
}

/// Per-token gazetteer codes: `codes[j][t]` is the code of token `t` in
/// gazetteer `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GazetteerAnnotation {
    pub codes: Vec<Vec<Iobes>>,
}

impl GazetteerAnnotation {
    pub fn gazetteers(&self) -> usize {
        self.codes.len()
    }

    pub fn len(&self) -> usize {
        self.codes.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All-`O` annotation for `m` gazetteers over `len` tokens.
    pub fn outside(m: usize, len: usize) -> GazetteerAnnotation {
        GazetteerAnnotation {
            codes: vec![vec![Iobes::O; len]; m],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.codes
            .iter()
            .all(|row| is_valid_iobes(row.iter().map(|&c| (c, Some(0)))))
    }
}

/// Hash of an ordered list of gazetteer names.
pub fn manifest_hash_of<S: AsRef<str>>(names: &[S]) -> String {
    let mut h = Sha256::new();
    for n in names {
        h.update(n.as_ref().as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

/// Ordered collection of gazetteers. Order fixes the first axis of the
/// gazetteer embedding table.
#[derive(Clone, Debug)]
pub struct GazetteerSet {
    gazetteers: Vec<Gazetteer>,
}

impl GazetteerSet {
    pub fn new(gazetteers: Vec<Gazetteer>) -> Result<GazetteerSet> {
        if gazetteers.is_empty() {
            return Err(Error::Invalid("a gazetteer set needs at least one gazetteer".into()));
        }
        for (i, g) in gazetteers.iter().enumerate() {
            if gazetteers[..i].iter().any(|o| o.name == g.name) {
                return Err(Error::Invalid(format!("duplicate gazetteer name {:?}", g.name)));
            }
        }
        Ok(GazetteerSet { gazetteers })
    }

    pub fn len(&self) -> usize {
        self.gazetteers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gazetteers.is_empty()
    }

    pub fn gazetteers(&self) -> &[Gazetteer] {
        &self.gazetteers
    }

    pub fn names(&self) -> Vec<String> {
        self.gazetteers.iter().map(|g| g.name.clone()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Gazetteer> {
        self.gazetteers.iter().find(|g| g.name == name)
    }

    fn get_mut(&mut self, name: &str) -> Result<&mut Gazetteer> {
        self.gazetteers
            .iter_mut()
            .find(|g| g.name == name)
            .ok_or_else(|| Error::Invalid(format!("unknown gazetteer {name:?}")))
    }

    pub fn annotate<S: AsRef<str>>(&self, tokens: &[S]) -> GazetteerAnnotation {
        let normalized: Vec<String> = tokens.iter().map(|t| normalize_token(t.as_ref())).collect();
        GazetteerAnnotation {
            codes: self
                .gazetteers
                .iter()
                .map(|g| g.match_normalized(&normalized))
                .collect(),
        }
    }

    /// Adds entries to the named gazetteer; returns how many were new.
    pub fn add_entries<E, S>(&mut self, gazetteer: &str, entries: E) -> Result<usize>
    where
        E: IntoIterator,
        E::Item: AsRef<[S]>,
        S: AsRef<str>,
    {
        let entries: Vec<Vec<String>> = entries
            .into_iter()
            .map(|e| e.as_ref().iter().map(|t| t.as_ref().to_string()).collect())
            .collect();
        for (i, e) in entries.iter().enumerate() {
            check_entry(e).map_err(|m| Error::Invalid(format!("entry {i}: {m}")))?;
        }
        let g = self.get_mut(gazetteer)?;
        Ok(entries.into_iter().filter(|e| g.insert(e.clone())).count())
    }

    /// Removes entries from the named gazetteer; returns how many were present.
    pub fn remove_entries<E, S>(&mut self, gazetteer: &str, entries: E) -> Result<usize>
    where
        E: IntoIterator,
        E::Item: AsRef<[S]>,
        S: AsRef<str>,
    {
        let g = self.get_mut(gazetteer)?;
        Ok(entries.into_iter().filter(|e| g.remove(e.as_ref())).count())
    }

    /// Digest of the ordered gazetteer names (not their contents, which may
    /// change without invalidating a model).
    pub fn manifest_hash(&self) -> String {
        manifest_hash_of(&self.names())
    }

    /// Loads a manifest: one gazetteer file path per line, optionally
    /// prefixed by `name =` to override the file stem. Relative paths are
    /// resolved against the manifest's directory.
    pub fn load_manifest(path: impl AsRef<Path>) -> Result<GazetteerSet> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut gazetteers = Vec::new();
        for (name, file) in manifest_lines(&text)? {
            let file = base.join(file);
            gazetteers.push(Gazetteer::load(&file, name.as_deref())?);
        }
        GazetteerSet::new(gazetteers)
    }

    /// Paths of the gazetteer files named by a manifest, in order.
    pub fn manifest_files(path: impl AsRef<Path>) -> Result<Vec<(String, PathBuf)>> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        manifest_lines(&text)?
            .into_iter()
            .map(|(name, file)| {
                let full = base.join(&file);
                let name = match name {
                    Some(n) => n,
                    None => full
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default(),
                };
                Ok((name, full))
            })
            .collect()
    }

    /// Writes one file per gazetteer into `dir` plus a `manifest.txt`
    /// listing them in order; returns the manifest path.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = String::new();
        for g in &self.gazetteers {
            let file = format!("{}.txt", g.name);
            g.save(dir.join(&file))?;
            manifest.push_str(&file);
            manifest.push('\n');
        }
        let path = dir.join("manifest.txt");
        std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

fn manifest_lines(text: &str) -> Result<Vec<(Option<String>, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let entry = match line.split_once('=') {
            Some((name, file)) => {
                let (name, file) = (name.trim(), file.trim());
                if name.is_empty() || file.is_empty() {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: "expected `name = path`".into(),
                    });
                }
                (Some(name.to_string()), file.to_string())
            }
            None => (None, line.to_string()),
        };
        out.push(entry);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Iobes::*;

    fn gaz(entries: &[&str]) -> Gazetteer {
        Gazetteer::from_lines("g", entries).unwrap()
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn build_examples() {
        assert_eq!(gaz(&["sodium"]).len(), 1);
        assert!(gaz(&[]).is_empty());
        assert_eq!(gaz(&["Tylenol", "tylenol"]).len(), 1);
        let err = Gazetteer::build("g", vec![vec!["a"], vec![]]).unwrap_err();
        assert!(err.to_string().contains("entry 1"), "{err}");
    }

    #[test]
    fn longest_entry_wins() {
        let g = gaz(&["A", "B", "A B"]);
        assert_eq!(g.match_tokens(&toks("A B")), [B, E]);
        assert_eq!(gaz(&[]).match_tokens(&toks("A B C")), [O, O, O]);
        let g = gaz(&["A B", "B C"]);
        assert_eq!(g.match_tokens(&toks("A B C")), [B, E, O]);
        let g = gaz(&["a b c", "a"]);
        assert_eq!(g.match_tokens(&toks("a b x a b c")), [S, O, O, B, I, E]);
    }

    #[test]
    fn matching_is_case_insensitive() {
        let g = gaz(&["Tylenol"]);
        assert_eq!(g.match_tokens(&toks("take TYLENOL now")), [O, S, O]);
    }

    #[test]
    fn annotate_rows_are_independent() {
        let set = GazetteerSet::new(vec![gaz(&["x"]), Gazetteer::from_lines("h", &["x"]).unwrap()]).unwrap();
        let a = set.annotate(&toks("x"));
        assert_eq!(a.codes, vec![vec![S], vec![S]]);

        let meds = Gazetteer::from_lines("medication", &["sodium"]).unwrap();
        let set = GazetteerSet::new(vec![meds]).unwrap();
        assert_eq!(set.annotate(&toks("increase sodium")).codes[0], [O, S]);
    }

    #[test]
    fn add_and_remove() {
        let mut set = GazetteerSet::new(vec![Gazetteer::from_lines("drugs", &["tylenol"]).unwrap()]).unwrap();
        let before = set.annotate(&toks("give remdesivir today"));
        assert_eq!(set.add_entries("drugs", [toks("remdesivir")]).unwrap(), 1);
        assert_eq!(set.annotate(&toks("give remdesivir today")).codes[0], [O, S, O]);
        assert_eq!(set.add_entries("drugs", [toks("Remdesivir")]).unwrap(), 0);
        assert_eq!(set.get("drugs").unwrap().len(), 2);
        assert_eq!(set.remove_entries("drugs", [toks("remdesivir")]).unwrap(), 1);
        assert_eq!(set.annotate(&toks("give remdesivir today")), before);
        assert!(set.add_entries("nope", [toks("x")]).is_err());
    }

    #[test]
    fn remove_prunes_only_unshared_nodes() {
        let mut g = gaz(&["A B", "A C"]);
        assert_eq!(g.trie_size(), 4);
        assert!(g.remove(&toks("A B")));
        assert_eq!(g.match_tokens(&toks("A C")), [B, E]);
        assert_eq!(g.match_tokens(&toks("A B")), [O, O]);
        assert_eq!(g.trie_size(), gaz(&["A C"]).trie_size());
        assert!(!g.remove(&toks("A B")));
        let mut e = gaz(&[]);
        assert!(!e.remove(&toks("x")));
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let set = GazetteerSet::new(vec![
            Gazetteer::from_lines("drugs", &["Tylenol", "sodium chloride"]).unwrap(),
            Gazetteer::from_lines("conditions", &["COPD flare"]).unwrap(),
        ])
        .unwrap();
        let manifest = set.save(dir.path()).unwrap();
        let loaded = GazetteerSet::load_manifest(&manifest).unwrap();
        assert_eq!(loaded.names(), ["drugs", "conditions"]);
        assert!(loaded.get("drugs").unwrap().contains(&["sodium", "chloride"]));
        assert_eq!(loaded.manifest_hash(), set.manifest_hash());
    }
}
