//! Plain-text checkpoints.
//!
//! ```text
//! gazfuse-checkpoint 1
//! mode late
//! ...header fields...
//! vocab 3
//! take
//! ...
//! tensor encoder.wq 2 4 4
//! 0.12 -0.5 ...
//! end
//! ```
//!
//! Values are written with the shortest representation that parses back to
//! the same `f64`, so a save/load round trip is exact and identical
//! parameters give identical bytes.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Architecture, AttentionScale, AttentionValue, FusionMode, Model, ModelParameters, Vocab};
use crate::corpus::TagScheme;
use crate::error::{Error, Result};
use crate::gazetteer::{manifest_hash_of, CODES};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "gazfuse-checkpoint";

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            ' ' => out.push_str("\\s"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str, line: usize) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('s') => out.push(' '),
            Some('r') => out.push('\r'),
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("bad escape \\{}", other.map(String::from).unwrap_or_default()),
                })
            }
        }
    }
    Ok(out)
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

pub fn render(model: &Model) -> String {
    let a = &model.arch;
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC} {FORMAT_VERSION}");
    let _ = writeln!(s, "mode {}", a.mode);
    let _ = writeln!(s, "attention {}", on_off(a.attention));
    let _ = writeln!(
        s,
        "attention_scale {}",
        match a.scale {
            AttentionScale::Full => "full",
            AttentionScale::PerGazetteer => "per_gazetteer",
        }
    );
    let _ = writeln!(
        s,
        "attention_value {}",
        match a.value {
            AttentionValue::Window => "window",
            AttentionValue::Query => "query",
        }
    );
    let _ = writeln!(s, "M {}", a.gazetteers);
    let _ = writeln!(s, "K {CODES}");
    let _ = writeln!(s, "d {}", a.gaz_dim);
    let _ = writeln!(s, "h {}", a.hidden);
    let _ = writeln!(s, "ffn {}", a.ffn);
    let _ = writeln!(s, "max_len {}", a.max_len);
    let _ = writeln!(s, "encoder_window {}", a.encoder_window);
    let _ = writeln!(s, "gaz_window {}", a.gaz_window);
    let _ = writeln!(s, "vocab_hash {}", model.vocab.hash());
    let _ = writeln!(
        s,
        "gazetteer_manifest_hash {}",
        manifest_hash_of(&model.gazetteer_names)
    );
    let names: Vec<String> = model.gazetteer_names.iter().map(|n| escape(n)).collect();
    let _ = writeln!(s, "gazetteers {}", names.join(" "));
    let types: Vec<String> = model.scheme.entity_types().iter().map(|n| escape(n)).collect();
    let _ = writeln!(s, "scheme {}", types.join(" "));
    let _ = writeln!(s, "vocab {}", model.vocab.tokens().len());
    for t in model.vocab.tokens() {
        let _ = writeln!(s, "{}", escape(t));
    }
    for (name, t) in model.params.tensors() {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        let _ = writeln!(s, "tensor {name} {} {}", t.shape().len(), dims.join(" "));
        let cols = t.cols().max(1);
        for row in t.data().chunks(cols) {
            let vals: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(s, "{}", vals.join(" "));
        }
    }
    s.push_str("end\n");
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok(l)
            }
            None => Err(Error::Parse {
                line: self.last + 1,
                message: "unexpected end of checkpoint".into(),
            }),
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.last,
            message: message.into(),
        }
    }

    fn field(&mut self, key: &str) -> Result<&'a str> {
        let l = self.next()?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => Ok(v),
            None if l == key => Ok(""),
            _ => Err(self.err(format!("expected field {key:?}, found {l:?}"))),
        }
    }

    fn number(&mut self, key: &str) -> Result<usize> {
        let v = self.field(key)?;
        v.parse()
            .map_err(|_| self.err(format!("{key} must be a non-negative integer, got {v:?}")))
    }
}

pub fn parse(text: &str) -> Result<Model> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let version = lines.field(MAGIC)?;
    if version != FORMAT_VERSION.to_string() {
        return Err(Error::Schema(format!(
            "checkpoint format version {version}, this build reads {FORMAT_VERSION}"
        )));
    }
    let mode: FusionMode = lines
        .field("mode")?
        .parse()
        .map_err(|e: Error| lines.err(e.to_string()))?;
    let attention = match lines.field("attention")? {
        "on" => true,
        "off" => false,
        v => return Err(lines.err(format!("attention must be on|off, got {v:?}"))),
    };
    let scale = match lines.field("attention_scale")? {
        "full" => AttentionScale::Full,
        "per_gazetteer" => AttentionScale::PerGazetteer,
        v => return Err(lines.err(format!("unknown attention_scale {v:?}"))),
    };
    let value = match lines.field("attention_value")? {
        "window" => AttentionValue::Window,
        "query" => AttentionValue::Query,
        v => return Err(lines.err(format!("unknown attention_value {v:?}"))),
    };
    let gazetteers = lines.number("M")?;
    let k = lines.number("K")?;
    if k != CODES {
        return Err(Error::Schema(format!("checkpoint has K = {k}, expected {CODES}")));
    }
    let gaz_dim = lines.number("d")?;
    let hidden = lines.number("h")?;
    let ffn = lines.number("ffn")?;
    let max_len = lines.number("max_len")?;
    let encoder_window = lines.number("encoder_window")?;
    let gaz_window = lines.number("gaz_window")?;
    let vocab_hash = lines.field("vocab_hash")?.to_string();
    let manifest_hash = lines.field("gazetteer_manifest_hash")?.to_string();
    let line = lines.last + 1;
    let gazetteer_names = lines
        .field("gazetteers")?
        .split(' ')
        .filter(|s| !s.is_empty())
        .map(|s| unescape(s, line))
        .collect::<Result<Vec<_>>>()?;
    let line = lines.last + 1;
    let types = lines
        .field("scheme")?
        .split(' ')
        .filter(|s| !s.is_empty())
        .map(|s| unescape(s, line))
        .collect::<Result<Vec<_>>>()?;
    let scheme = TagScheme::new(&types)?;
    let n = lines.number("vocab")?;
    let mut tokens = Vec::with_capacity(n);
    for _ in 0..n {
        let l = lines.next()?;
        tokens.push(unescape(l, lines.last)?);
    }
    let vocab = Vocab::from_tokens(tokens);
    if vocab.len() != n + 1 {
        return Err(lines.err("vocabulary contains duplicate tokens"));
    }
    if vocab.hash() != vocab_hash {
        return Err(Error::Schema("vocabulary does not match its recorded hash".into()));
    }
    if manifest_hash_of(&gazetteer_names) != manifest_hash {
        return Err(Error::Schema(
            "gazetteer names do not match the recorded manifest hash".into(),
        ));
    }
    let arch = Architecture {
        mode,
        attention,
        vocab: vocab.len(),
        hidden,
        ffn,
        max_len,
        encoder_window,
        gazetteers,
        gaz_dim,
        gaz_window,
        tags: scheme.len(),
        scale,
        value,
    };
    arch.validate()?;
    // shapes only; every value is overwritten below
    let mut params = ModelParameters::init(&arch, &mut ChaCha8Rng::seed_from_u64(0));
    let expected: BTreeSet<&'static str> = params.tensors().iter().map(|(n, _)| *n).collect();
    let mut seen = BTreeSet::new();
    loop {
        let l = lines.next()?;
        if l == "end" {
            break;
        }
        let mut parts = l.split(' ');
        if parts.next() != Some("tensor") {
            return Err(lines.err(format!("expected a tensor header, found {l:?}")));
        }
        let name = parts
            .next()
            .ok_or_else(|| lines.err("tensor header lacks a name"))?
            .to_string();
        let nums = parts
            .map(|p| p.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| lines.err("bad tensor dimensions"))?;
        if nums.is_empty() || nums.len() != nums[0] + 1 {
            return Err(lines.err("tensor header dimension count mismatch"));
        }
        let dims = &nums[1..];
        let target = params
            .get_mut(&name)
            .ok_or_else(|| Error::Schema(format!("unexpected tensor {name:?} for {mode} mode")))?;
        if target.shape() != dims {
            return Err(Error::Schema(format!(
                "tensor {name} has shape {dims:?}, architecture requires {:?}",
                target.shape()
            )));
        }
        if !seen.insert(name.clone()) {
            return Err(lines.err(format!("tensor {name} appears twice")));
        }
        let cols = target.cols().max(1);
        let rows = target.len() / cols;
        let data = target.data_mut();
        for r in 0..rows {
            let l = lines.next()?;
            let vals: Vec<&str> = l.split(' ').collect();
            if vals.len() != cols {
                return Err(lines.err(format!("row of {name} has {} values, expected {cols}", vals.len())));
            }
            for (c, v) in vals.iter().enumerate() {
                let x: f64 = v.parse().map_err(|_| lines.err(format!("bad number {v:?}")))?;
                if !x.is_finite() {
                    return Err(lines.err("non-finite parameter value"));
                }
                data[r * cols + c] = x;
            }
        }
    }
    let missing: Vec<&str> = expected.iter().filter(|n| !seen.contains(**n)).copied().collect();
    if !missing.is_empty() {
        return Err(Error::Schema(format!("checkpoint lacks tensors {missing:?}")));
    }
    Model::from_parts(arch, vocab, scheme, gazetteer_names, params)
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::tiny;

    #[test]
    fn round_trip_is_exact_for_every_mode() {
        for mode in [FusionMode::NerOnly, FusionMode::Early, FusionMode::Late] {
            let m = tiny(mode, mode == FusionMode::Late);
            let text = render(&m);
            let back = parse(&text).unwrap();
            assert_eq!(back.params, m.params);
            assert_eq!(back.arch, m.arch);
            assert_eq!(back.vocab, m.vocab);
            assert_eq!(render(&back), text);
        }
    }

    #[test]
    fn escaping_round_trips() {
        for s in ["a b", "x\\s", "tab\there", "\\"] {
            assert_eq!(unescape(&escape(s), 1).unwrap(), s);
        }
    }

    #[test]
    fn corruption_is_reported() {
        let m = tiny(FusionMode::Late, true);
        let text = render(&m);
        assert!(parse(&text.replace("mode late", "mode sideways")).is_err());
        assert!(parse(&text.replace("gazfuse-checkpoint 1", "gazfuse-checkpoint 9")).is_err());
        let truncated: String = text.lines().take(40).collect::<Vec<_>>().join("\n");
        assert!(parse(&truncated).is_err());
        assert!(parse(&text.replace("\ntake\n", "\ntaken\n")).is_err());
    }
}
