//! JSON-lines dataset manifests.
//!
//! One record per line:
//! `{"id", "ptm_path", "spec_path", "oe", "ce", "m", "lang": "E"|"C", "split": "train"|"dev"|"test"}`.
//! Relative paths are resolved against the manifest's directory. Blank lines
//! are ignored.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heads::TASKS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Lang {
    E,
    C,
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Lang::E => "E",
            Lang::C => "C",
        })
    }
}

impl FromStr for Lang {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "E" => Ok(Lang::E),
            "C" => Ok(Lang::C),
            _ => Err(Error::InvalidArgument(format!("language must be E or C, got `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidArgument(format!("split must be train, dev or test, got `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub id: String,
    pub ptm_path: PathBuf,
    pub spec_path: PathBuf,
    pub oe: usize,
    pub ce: usize,
    pub m: usize,
    pub lang: Lang,
    pub split: Split,
}

impl Record {
    pub fn labels(&self) -> [usize; 3] {
        [self.oe, self.ce, self.m]
    }
}

/// Conjunctive record filters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Filter {
    pub lang: Option<Lang>,
    pub split: Option<Split>,
    /// source (`m`) labels to drop
    pub exclude_sources: BTreeSet<usize>,
    /// keep only these sources, if set
    pub only_sources: Option<BTreeSet<usize>>,
}

impl Filter {
    pub fn split(split: Split) -> Self {
        Filter { split: Some(split), ..Default::default() }
    }

    pub fn accepts(&self, r: &Record) -> bool {
        self.lang.is_none_or(|l| l == r.lang)
            && self.split.is_none_or(|s| s == r.split)
            && !self.exclude_sources.contains(&r.m)
            && self.only_sources.as_ref().is_none_or(|o| o.contains(&r.m))
    }
}

/// Parses every record with paths resolved, checking id uniqueness and that
/// referenced files exist.
pub fn read_manifest(path: &Path) -> Result<Vec<Record>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let err = |line: usize, msg: String| Error::Manifest { path: path.display().to_string(), line, msg };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut r: Record = serde_json::from_str(line).map_err(|e| err(n, e.to_string()))?;
        if !seen.insert(r.id.clone()) {
            return Err(err(n, format!("duplicate id `{}`", r.id)));
        }
        for p in [&mut r.ptm_path, &mut r.spec_path] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if !p.is_file() {
                return Err(err(n, format!("referenced file {} does not exist", p.display())));
            }
        }
        out.push(r);
    }
    Ok(out)
}

/// Reads a manifest and applies `filter`. An empty result is an error.
pub fn load_manifest(path: &Path, filter: &Filter) -> Result<Vec<Record>> {
    let all = read_manifest(path)?;
    let kept: Vec<Record> = all.into_iter().filter(|r| filter.accepts(r)).collect();
    if kept.is_empty() {
        return Err(Error::Empty(format!("no records in {} pass the filter {filter:?}", path.display())));
    }
    Ok(kept)
}

/// Checks every label against the head cardinalities `[oe, ce, m]`.
pub fn check_labels(records: &[Record], classes: [usize; 3]) -> Result<()> {
    for r in records {
        for (t, (&l, &k)) in r.labels().iter().zip(&classes).enumerate() {
            if l >= k {
                return Err(Error::LabelOutOfRange { task: format!("{} (record {})", TASKS[t], r.id), label: l, classes: k });
            }
        }
    }
    Ok(())
}

/// Writes records as JSON lines, paths as given.
pub fn write_manifest(path: &Path, records: &[Record]) -> Result<()> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}
