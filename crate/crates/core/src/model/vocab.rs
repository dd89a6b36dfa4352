use std::collections::{BTreeMap, HashMap};

use sha2::{Digest, Sha256};

use crate::corpus::{normalize_token, Corpus};

pub const UNK: usize = 0;
pub const UNK_TOKEN: &str = "<unk>";

/// Case-folded token vocabulary; id 0 is the unknown token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Tokens occurring at least `min_count` times, ordered by descending
    /// frequency and then lexically.
    pub fn build<'a>(corpora: impl IntoIterator<Item = &'a Corpus>, min_count: usize) -> Vocab {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for c in corpora {
            for s in &c.sentences {
                for t in &s.tokens {
                    *counts.entry(normalize_token(t)).or_default() += 1;
                }
            }
        }
        let mut items: Vec<(String, usize)> = counts.into_iter().filter(|(_, n)| *n >= min_count.max(1)).collect();
        items.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Vocab::from_tokens(items.into_iter().map(|(t, _)| t))
    }

    /// Builds from tokens in id order, excluding the unknown token.
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Vocab {
        let mut v = Vocab {
            tokens: vec![UNK_TOKEN.to_string()],
            index: HashMap::new(),
        };
        for t in tokens {
            if t != UNK_TOKEN && !v.index.contains_key(&t) {
                v.index.insert(t.clone(), v.tokens.len());
                v.tokens.push(t);
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(&normalize_token(token)).copied().unwrap_or(UNK)
    }

    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// Tokens in id order, the unknown token excluded.
    pub fn tokens(&self) -> &[String] {
        &self.tokens[1..]
    }

    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Sentence, TagScheme};

    #[test]
    fn unknown_and_case_folding() {
        let scheme = TagScheme::new(&["M"]).unwrap();
        let c = Corpus::new(
            "x",
            scheme,
            vec![Sentence::unlabeled(vec!["Take".into(), "take".into(), "sodium".into()])],
        );
        let v = Vocab::build([&c], 1);
        assert_eq!(v.len(), 3);
        assert_eq!(v.id("TAKE"), 1);
        assert_eq!(v.id("remdesivir"), UNK);
        let v2 = Vocab::build([&c], 2);
        assert_eq!(v2.len(), 2);
        assert_eq!(Vocab::from_tokens(v.tokens().iter().cloned()), v);
    }
}
