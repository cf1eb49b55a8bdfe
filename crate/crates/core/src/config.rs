//! Flat `key = value` configuration files.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Experiment files understand these keys:
//!
//! ```text
//! mask_count = 12000
//! per_bucket = 2000
//! buckets = 0.0-0.1 0.1-0.2 0.2-0.3 0.3-0.4 0.4-0.5 0.5-0.6
//! cap = 20
//! height = 256
//! width = 256
//! seed = 2020
//! stack.pconv = 3
//! stack.dpconv = 3 3 3 3 | 3d2 3d4 3d8
//! ```
//!
//! A layer token is the odd kernel size followed by optional `d<dilation>`,
//! `s<stride>`, `p<padding>` and `t<threshold>` parts. Padding defaults to the
//! size-preserving value. Layers after `|` repeat as a cycle; without `|`
//! the last layer repeats.

use std::path::Path;
use std::str::FromStr;

use crate::dpconv::ConvSpec;
use crate::error::{Error, Result};
use crate::maskprop::{LayerStackSpec, MaskExperimentConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Parsed `key = value` file. Keys are unique.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    pub path: String,
    pub entries: Vec<Entry>,
}

impl KeyValues {
    pub fn parse(path: &str, text: &str) -> Result<Self> {
        let mut entries: Vec<Entry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                path: path.into(),
                line,
                message: format!("expected `key = value`, got `{content}`"),
            })?;
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Error::Parse {
                    path: path.into(),
                    line,
                    message: format!("invalid key `{key}`"),
                });
            }
            if let Some(prev) = entries.iter().find(|e| e.key == key) {
                return Err(Error::Parse {
                    path: path.into(),
                    line,
                    message: format!("duplicate key `{key}` (first set on line {})", prev.line),
                });
            }
            entries.push(Entry {
                key: key.into(),
                value: value.trim().into(),
                line,
            });
        }
        Ok(Self {
            path: path.into(),
            entries,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&path.display().to_string(), &text)
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn error(&self, entry: &Entry, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: entry.line,
            message: message.into(),
        }
    }

    /// Typed value of `key`, if present.
    pub fn value<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|e| {
                e.value
                    .parse::<T>()
                    .map_err(|err| self.error(e, format!("bad value for `{key}`: {err}")))
            })
            .transpose()
    }

    /// Fails on the first key not in `known` and not starting with one of
    /// `prefixes`.
    pub fn reject_unknown(&self, known: &[&str], prefixes: &[&str]) -> Result<()> {
        for e in &self.entries {
            if !known.contains(&e.key.as_str()) && !prefixes.iter().any(|p| e.key.starts_with(p)) {
                return Err(self.error(e, format!("unknown key `{}`", e.key)));
            }
        }
        Ok(())
    }
}

/// Layer stack as written: a fixed prefix and an optional repeating cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct StackDef {
    pub name: String,
    pub prefix: Vec<ConvSpec>,
    pub cycle: Vec<ConvSpec>,
}

impl StackDef {
    /// Expands to a concrete stack covering `depth` layers.
    pub fn build(&self, depth: usize) -> Result<LayerStackSpec> {
        let mut layers = self.prefix.clone();
        if !self.cycle.is_empty() {
            let mut i = 0;
            while layers.len() < depth.max(self.prefix.len() + 1) {
                layers.push(self.cycle[i % self.cycle.len()].clone());
                i += 1;
            }
        }
        LayerStackSpec::new(self.name.clone(), layers)
    }
}

pub fn parse_layer(token: &str) -> std::result::Result<ConvSpec, String> {
    let digits_end = token.find(|c: char| !c.is_ascii_digit()).unwrap_or(token.len());
    let kernel: usize = token[..digits_end]
        .parse()
        .map_err(|_| format!("layer `{token}` must start with a kernel size"))?;
    if kernel % 2 == 0 {
        return Err(format!("layer `{token}`: kernel size must be odd"));
    }
    let mut spec = ConvSpec::square(kernel / 2, 1, 1);
    let mut padding = None;
    let mut rest = &token[digits_end..];
    while !rest.is_empty() {
        let tag = rest.chars().next().unwrap_or_default();
        let body = &rest[tag.len_utf8()..];
        let end = body.find(|c: char| !c.is_ascii_digit()).unwrap_or(body.len());
        let n: usize = body[..end]
            .parse()
            .map_err(|_| format!("layer `{token}`: `{tag}` needs a number"))?;
        match tag {
            'd' => spec.dilation = n,
            's' => spec.stride = n,
            'p' => padding = Some(n),
            't' => spec.mask_threshold = n,
            _ => return Err(format!("layer `{token}`: unknown part `{tag}`")),
        }
        rest = &body[end..];
    }
    spec = match padding {
        Some(p) => spec.with_padding(p),
        None => spec.same_padding(),
    };
    spec.validate().map_err(|e| format!("layer `{token}`: {e}"))?;
    Ok(spec)
}

/// Parses a stack definition such as `3 3 | 3d2 3d4`.
pub fn parse_stack(name: &str, value: &str) -> std::result::Result<StackDef, String> {
    let (head, tail) = match value.split_once('|') {
        Some((h, t)) => (h, Some(t)),
        None => (value, None),
    };
    let layers = |s: &str| s.split_whitespace().map(parse_layer).collect::<std::result::Result<Vec<_>, _>>();
    let prefix = layers(head)?;
    let cycle = match tail {
        Some(t) => {
            let c = layers(t)?;
            if c.is_empty() {
                return Err("empty cycle after `|`".into());
            }
            c
        }
        None => Vec::new(),
    };
    if prefix.is_empty() && cycle.is_empty() {
        return Err(format!("stack `{name}` has no layers"));
    }
    Ok(StackDef {
        name: name.into(),
        prefix,
        cycle,
    })
}

fn parse_buckets(value: &str) -> std::result::Result<Vec<(f64, f64)>, String> {
    value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            let (lo, hi) = t
                .split_once('-')
                .ok_or_else(|| format!("bucket `{t}` must be `lo-hi`"))?;
            let lo: f64 = lo.parse().map_err(|_| format!("bad bucket bound `{lo}`"))?;
            let hi: f64 = hi.parse().map_err(|_| format!("bad bucket bound `{hi}`"))?;
            Ok((lo, hi))
        })
        .collect()
}

const EXPERIMENT_KEYS: &[&str] = &["mask_count", "per_bucket", "buckets", "cap", "height", "width", "seed"];

/// Transparency experiment settings plus the stacks to compare.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentFile {
    pub config: MaskExperimentConfig,
    /// Empty means the two reference stacks.
    pub stacks: Vec<StackDef>,
}

impl Default for ExperimentFile {
    fn default() -> Self {
        Self {
            config: MaskExperimentConfig::default(),
            stacks: Vec::new(),
        }
    }
}

impl ExperimentFile {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(EXPERIMENT_KEYS, &["stack."])?;
        let mut config = MaskExperimentConfig::default();
        if let Some(e) = kv.get("buckets") {
            config.buckets = parse_buckets(&e.value).map_err(|m| kv.error(e, m))?;
            if config.buckets.is_empty() {
                return Err(kv.error(e, "no buckets given"));
            }
        }
        let per_bucket: Option<usize> = kv.value("per_bucket")?;
        let mask_count: Option<usize> = kv.value("mask_count")?;
        let nb = config.buckets.len();
        match (per_bucket, mask_count) {
            (Some(p), Some(m)) => {
                config.per_bucket = p;
                config.mask_count = m;
            }
            (Some(p), None) => {
                config.per_bucket = p;
                config.mask_count = p * nb;
            }
            (None, Some(m)) => {
                let e = kv.get("mask_count").expect("present");
                if m % nb != 0 {
                    return Err(kv.error(e, format!("mask_count {m} is not divisible by {nb} buckets")));
                }
                config.per_bucket = m / nb;
                config.mask_count = m;
            }
            (None, None) => config.mask_count = config.per_bucket * nb,
        }
        if let Some(v) = kv.value("cap")? {
            config.cap = v;
        }
        if let Some(v) = kv.value("height")? {
            config.height = v;
        }
        if let Some(v) = kv.value("width")? {
            config.width = v;
        }
        if let Some(v) = kv.value("seed")? {
            config.seed = v;
        }
        let mut stacks = Vec::new();
        for e in kv.entries.iter().filter(|e| e.key.starts_with("stack.")) {
            let name = &e.key["stack.".len()..];
            if name.is_empty() {
                return Err(kv.error(e, "stack name is empty"));
            }
            stacks.push(parse_stack(name, &e.value).map_err(|m| kv.error(e, m))?);
        }
        if stacks.len() == 1 {
            return Err(kv.error(kv.get(&format!("stack.{}", stacks[0].name)).expect("present"), "at least two stacks are required"));
        }
        Ok(Self { config, stacks })
    }

    pub fn parse(path: &str, text: &str) -> Result<Self> {
        Self::from_kv(&KeyValues::parse(path, text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv(&KeyValues::load(path)?)
    }

    /// Concrete stacks for the current cap.
    pub fn build_stacks(&self) -> Result<Vec<LayerStackSpec>> {
        let cap = self.config.cap;
        if self.stacks.is_empty() {
            return Ok(vec![LayerStackSpec::reference_baseline(), LayerStackSpec::reference_dilated(cap)]);
        }
        self.stacks.iter().map(|s| s.build(cap)).collect()
    }
}
