//! Pass vocabulary, validation, and the functional category taxonomy.
//!
//! A [`Vocabulary`] is loaded from a data file of `<flag>\t<category>` lines
//! (see `data/vocab_llvm10.tsv`) and is immutable afterwards, so everything in
//! this module is safe to share across worker threads.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The LLVM 10.0.0 vocabulary shipped with the crate, used when no
/// `--vocab` override is given.
pub const DEFAULT_VOCAB_TSV: &str = include_str!("../../../data/vocab_llvm10.tsv");

/// Functional category of a pass. Every vocabulary member maps to exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PassCategory {
    Loop,
    Scalar,
    Vectorization,
    InterProcedural,
    Memory,
    ControlFlow,
    Utility,
}

impl PassCategory {
    pub const ALL: [PassCategory; 7] = [
        PassCategory::Loop,
        PassCategory::Scalar,
        PassCategory::Vectorization,
        PassCategory::InterProcedural,
        PassCategory::Memory,
        PassCategory::ControlFlow,
        PassCategory::Utility,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PassCategory::Loop => "Loop",
            PassCategory::Scalar => "Scalar",
            PassCategory::Vectorization => "Vectorization",
            PassCategory::InterProcedural => "InterProcedural",
            PassCategory::Memory => "Memory",
            PassCategory::ControlFlow => "ControlFlow",
            PassCategory::Utility => "Utility",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "Loop" => Ok(PassCategory::Loop),
            "Scalar" => Ok(PassCategory::Scalar),
            "Vectorization" => Ok(PassCategory::Vectorization),
            "InterProcedural" => Ok(PassCategory::InterProcedural),
            "Memory" => Ok(PassCategory::Memory),
            "ControlFlow" => Ok(PassCategory::ControlFlow),
            "Utility" => Ok(PassCategory::Utility),
            other => Err(Error::Parse(format!("unknown pass category: {other}"))),
        }
    }
}

impl fmt::Display for PassCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A validated pass flag in canonical `--flag` form.
///
/// Construction goes through [`Vocabulary::validate`], which normalizes the
/// leading dashes and checks membership, so holding a `PassId` implies the
/// flag is in the vocabulary it was validated against.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PassId {
    flag: Arc<str>,
}

impl PassId {
    pub fn flag(&self) -> &str {
        &self.flag
    }
}

impl fmt::Display for PassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.flag)
    }
}

/// Canonical flag spelling: strip any leading dashes, re-prefix with `--`.
/// `-sroa`, `--sroa` and `sroa` all normalize to `--sroa`.
pub fn normalize_flag(raw: &str) -> String {
    let stripped = raw.trim().trim_start_matches('-');
    format!("--{stripped}")
}

/// An ordered pass sequence. Duplicates are permitted and order is preserved
/// exactly; the empty sequence is valid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PassSequence {
    passes: Vec<PassId>,
}

impl PassSequence {
    pub fn new(passes: Vec<PassId>) -> Self {
        Self { passes }
    }

    pub fn empty() -> Self {
        Self { passes: Vec::new() }
    }

    pub fn passes(&self) -> &[PassId] {
        &self.passes
    }

    pub fn len(&self) -> usize {
        self.passes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passes.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, PassId> {
        self.passes.iter()
    }

    /// The canonical flag strings, in order. `validate_sequence(render(s)) == s`.
    pub fn render(&self) -> Vec<String> {
        self.passes.iter().map(|p| p.flag().to_string()).collect()
    }

    /// Space-joined canonical text; the cache key component for evaluations.
    pub fn canonical_text(&self) -> String {
        self.render().join(" ")
    }

    /// Order-preserving copy with position `index` removed.
    pub fn without_index(&self, index: usize) -> PassSequence {
        let mut passes = self.passes.clone();
        passes.remove(index);
        PassSequence { passes }
    }

    /// The first `len` passes.
    pub fn prefix(&self, len: usize) -> PassSequence {
        PassSequence {
            passes: self.passes[..len].to_vec(),
        }
    }

    /// Copy with adjacent positions `i` and `i + 1` swapped.
    pub fn with_adjacent_swapped(&self, i: usize) -> PassSequence {
        let mut passes = self.passes.clone();
        passes.swap(i, i + 1);
        PassSequence { passes }
    }

    pub fn push(&mut self, pass: PassId) {
        self.passes.push(pass);
    }

    /// True if `self` is an order-preserving subsequence of `other`.
    pub fn is_subsequence_of(&self, other: &PassSequence) -> bool {
        let mut it = other.passes.iter();
        self.passes.iter().all(|p| it.any(|q| q == p))
    }
}

impl FromIterator<PassId> for PassSequence {
    fn from_iter<T: IntoIterator<Item = PassId>>(iter: T) -> Self {
        PassSequence {
            passes: iter.into_iter().collect(),
        }
    }
}

impl<'a> IntoIterator for &'a PassSequence {
    type Item = &'a PassId;
    type IntoIter = std::slice::Iter<'a, PassId>;
    fn into_iter(self) -> Self::IntoIter {
        self.passes.iter()
    }
}

/// The configured pass vocabulary V plus the total category map `cat(p)`.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    /// Flags in file order (stable: prompts and reports iterate this order).
    flags: Vec<PassId>,
    categories: HashMap<PassId, PassCategory>,
}

impl Vocabulary {
    /// Parse the `<flag>\t<category>` data format. `#` starts a comment;
    /// blank lines are skipped. Flags are normalized on load.
    pub fn parse(text: &str) -> Result<Self> {
        let mut flags = Vec::new();
        let mut categories = HashMap::new();
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = match raw_line.find('#') {
                Some(i) => &raw_line[..i],
                None => raw_line,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let flag = parts.next().ok_or_else(|| {
                Error::Parse(format!("vocab line {}: missing flag", lineno + 1))
            })?;
            let cat = parts.next().ok_or_else(|| {
                Error::Parse(format!("vocab line {}: missing category", lineno + 1))
            })?;
            let id = PassId {
                flag: normalize_flag(flag).into(),
            };
            let category = PassCategory::parse(cat)?;
            if categories.insert(id.clone(), category).is_some() {
                return Err(Error::Parse(format!(
                    "vocab line {}: duplicate flag {}",
                    lineno + 1,
                    id
                )));
            }
            flags.push(id);
        }
        if flags.is_empty() {
            return Err(Error::Parse("vocabulary is empty".into()));
        }
        Ok(Self { flags, categories })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// The compiled-in LLVM 10.0.0 vocabulary.
    pub fn default_llvm10() -> Self {
        Self::parse(DEFAULT_VOCAB_TSV).expect("embedded vocabulary parses")
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    /// All members of V, in file order.
    pub fn flags(&self) -> &[PassId] {
        &self.flags
    }

    pub fn contains(&self, flag: &str) -> bool {
        self.categories
            .keys()
            .any(|p| p.flag() == normalize_flag(flag))
    }

    /// Validate one token: normalize dashes, then check membership.
    pub fn validate(&self, raw: &str) -> Result<PassId> {
        let canon = normalize_flag(raw);
        let id = PassId { flag: canon.into() };
        if self.categories.contains_key(&id) {
            Ok(id)
        } else {
            Err(Error::UnknownPass(raw.trim().to_string()))
        }
    }

    /// Validate a whole sequence. Either every token normalizes to a member
    /// and a `PassSequence` comes back, or the full list of offending tokens
    /// is reported. Empty input is the valid empty sequence.
    pub fn validate_sequence(&self, raw: &[String]) -> Result<PassSequence> {
        let mut passes = Vec::with_capacity(raw.len());
        let mut unknown = Vec::new();
        for token in raw {
            match self.validate(token) {
                Ok(id) => passes.push(id),
                Err(Error::UnknownPass(t)) => unknown.push(t),
                Err(e) => return Err(e),
            }
        }
        if unknown.is_empty() {
            Ok(PassSequence { passes })
        } else if unknown.len() == 1 {
            Err(Error::UnknownPass(unknown.pop().unwrap()))
        } else {
            Err(Error::UnknownPasses(unknown))
        }
    }

    /// `cat(p)`: total over V by construction.
    pub fn category_of(&self, pass: &PassId) -> PassCategory {
        *self
            .categories
            .get(pass)
            .expect("PassId validated against this vocabulary")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn llvm_vocab() -> Vocabulary {
        Vocabulary::default_llvm10()
    }

    #[test]
    fn validates_canonical_flags() {
        let v = llvm_vocab();
        let seq = v
            .validate_sequence(&["--sroa".into(), "--licm".into()])
            .unwrap();
        assert_eq!(seq.len(), 2);
        assert_eq!(seq.render(), vec!["--sroa", "--licm"]);
    }

    #[test]
    fn normalizes_single_dash() {
        let v = llvm_vocab();
        let seq = v.validate_sequence(&["-sroa".into()]).unwrap();
        assert_eq!(seq.render(), vec!["--sroa"]);
    }

    #[test]
    fn rejects_unknown_pass() {
        let v = llvm_vocab();
        match v.validate_sequence(&["--not-a-pass".into()]) {
            Err(Error::UnknownPass(t)) => assert_eq!(t, "--not-a-pass"),
            other => panic!("expected UnknownPass, got {other:?}"),
        }
    }

    #[test]
    fn reports_every_offending_token() {
        let v = llvm_vocab();
        match v.validate_sequence(&["--bogus-a".into(), "--sroa".into(), "--bogus-b".into()]) {
            Err(Error::UnknownPasses(ts)) => assert_eq!(ts, vec!["--bogus-a", "--bogus-b"]),
            other => panic!("expected UnknownPasses, got {other:?}"),
        }
    }

    #[test]
    fn empty_input_is_valid_empty_sequence() {
        let v = llvm_vocab();
        let seq = v.validate_sequence(&[]).unwrap();
        assert!(seq.is_empty());
    }

    #[test]
    fn category_assignments_match_taxonomy_file() {
        let v = llvm_vocab();
        let licm = v.validate("--licm").unwrap();
        let lv = v.validate("--loop-vectorize").unwrap();
        let sroa = v.validate("--sroa").unwrap();
        assert_eq!(v.category_of(&licm), PassCategory::Loop);
        assert_eq!(v.category_of(&lv), PassCategory::Vectorization);
        assert_eq!(v.category_of(&sroa), PassCategory::Memory);
    }

    #[test]
    fn category_total_over_vocabulary() {
        let v = llvm_vocab();
        assert!(v.len() >= 100);
        for p in v.flags() {
            // must not panic for any member
            let _ = v.category_of(p);
        }
    }

    #[test]
    fn duplicates_preserved_in_order() {
        let v = llvm_vocab();
        let seq = v
            .validate_sequence(&["--licm".into(), "--sroa".into(), "--licm".into()])
            .unwrap();
        assert_eq!(seq.render(), vec!["--licm", "--sroa", "--licm"]);
    }

    #[test]
    fn render_validate_round_trip() {
        let v = llvm_vocab();
        let seq = v
            .validate_sequence(&["-licm".into(), "--gvn".into(), "-sroa".into()])
            .unwrap();
        let again = v.validate_sequence(&seq.render()).unwrap();
        assert_eq!(seq, again);
    }

    #[test]
    fn normalization_is_idempotent() {
        assert_eq!(normalize_flag("--sroa"), "--sroa");
        assert_eq!(normalize_flag(&normalize_flag("-sroa")), "--sroa");
        assert_eq!(normalize_flag("sroa"), "--sroa");
    }
}
