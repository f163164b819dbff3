//! Tokenizer, stop words and the synonym table behind the lexical scorer.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::Deserialize;

use super::ScorerError;

const DEFAULT_TABLE: &str = include_str!("../../fixtures/synonyms.json");

/// Words carrying no feature meaning in a requirement or a label.
const STOP_WORDS: &[&str] = &[
    "a", "about", "add", "after", "all", "allow", "an", "and", "any", "are", "as", "at", "be", "before", "by", "can",
    "could", "enable", "every", "feature", "for", "from", "have", "i", "in", "into", "is", "it", "its", "let", "me",
    "my", "of", "on", "or", "please", "should", "show", "so", "support", "that", "the", "their", "them", "then",
    "this", "to", "up", "us", "want", "we", "when", "where", "which", "while", "with", "would", "you", "your", "able",
    "ability", "user", "users", "turn", "use", "set", "make",
];

/// Menu words pointing at an aggregation of further screens.
pub const GENERIC_WORDS: &[&str] = &["settings", "options", "more", "menu", "preferences", "tools"];

/// Labels of buttons that commit a pending action.
pub const COMMIT_WORDS: &[&str] = &["confirm", "ok", "yes", "apply", "save", "done"];

/// Verbs whose requirement expects something to disappear.
pub const REMOVAL_WORDS: &[&str] = &[
    "delete", "deleting", "deletion", "remove", "removing", "clear", "erase", "discard", "archive", "hide", "trash",
    "close", "closing",
];

/// Lowercase, split on anything that is not a letter or digit, drop stop
/// words and repeats. Order of first occurrence is kept.
pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let cleaned: String = lowered
        .chars()
        .map(|c| if c.is_alphanumeric() || is_mark(c) { c } else { ' ' })
        .collect();
    let mut seen = BTreeSet::new();
    cleaned
        .split_whitespace()
        .filter(|w| !STOP_WORDS.contains(w))
        .filter(|w| seen.insert(w.to_string()))
        .map(str::to_owned)
        .collect()
}

// Combining vowel signs of Indic scripts are not alphanumeric in std, but
// splitting on them would break words apart.
fn is_mark(c: char) -> bool {
    matches!(c as u32, 0x0900..=0x0DFF) && !c.is_whitespace()
}

#[derive(Deserialize)]
struct TableFile {
    groups: Vec<Vec<String>>,
}

/// Groups of interchangeable words. A word may sit in several groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    groups: Vec<Vec<String>>,
    index: HashMap<String, Vec<usize>>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::from_json(DEFAULT_TABLE).expect("bundled synonym table parses")
    }
}

impl Lexicon {
    pub fn from_groups(groups: Vec<Vec<String>>) -> Self {
        let groups: Vec<Vec<String>> = groups
            .into_iter()
            .map(|g| g.iter().map(|w| w.trim().to_lowercase()).collect())
            .collect();
        let mut index: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, g) in groups.iter().enumerate() {
            for w in g {
                let slots = index.entry(w.clone()).or_default();
                if !slots.contains(&i) {
                    slots.push(i);
                }
            }
        }
        Self { groups, index }
    }

    pub fn from_json(text: &str) -> Result<Self, ScorerError> {
        let file: TableFile =
            serde_json::from_str(text).map_err(|e| ScorerError::Config(format!("synonym table: {e}")))?;
        Ok(Self::from_groups(file.groups))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScorerError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| ScorerError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn empty() -> Self {
        Self::from_groups(Vec::new())
    }

    /// `tokens` followed by their synonyms, each word once, each token
    /// immediately followed by the members of its groups.
    pub fn expand(&self, tokens: &[String]) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut push = |w: &String| {
            if !out.contains(w) {
                out.push(w.clone());
            }
        };
        for t in tokens {
            push(t);
            for &g in self.index.get(t).map(Vec::as_slice).unwrap_or(&[]) {
                self.groups[g].iter().for_each(&mut push);
            }
        }
        out
    }

    /// True when some word of `a` equals or is a synonym of some word of `b`.
    pub fn related(&self, a: &[String], b: &[String]) -> bool {
        let expanded = self.expand(a);
        b.iter().any(|w| expanded.contains(w))
    }
}
