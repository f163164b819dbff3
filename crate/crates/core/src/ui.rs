//! UI hierarchy model: elements, states, selectors, actions and operations.
//!
//! A [`UiState`] wraps a rooted attribute tree shaped like a mobile UI
//! hierarchy dump. Selectors resolve to root-to-node index paths in document
//! (pre-)order. States are compared by the digest of their compressed tree,
//! where compression keeps only the attributes listed in
//! [`KEPT_ATTRIBUTES`].

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Attributes that survive compression, in canonical (sorted) order.
pub const KEPT_ATTRIBUTES: [&str; 7] = [
    "class",
    "clickable",
    "content-desc",
    "enabled",
    "resource-id",
    "scrollable",
    "text",
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum UiError {
    #[error("invalid regex {pattern:?}: {detail}")]
    InvalidRegex { pattern: String, detail: String },
    #[error("invalid selector: {0}")]
    InvalidSelector(String),
    #[error("invalid operation: {0}")]
    InvalidOperation(String),
}

/// One node of a UI hierarchy.
///
/// Wire form: `{"attrs": {k: v}, "children": [node, ...]}`. Keys outside the
/// documented set are preserved but dropped by compression.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UiElement {
    #[serde(default)]
    pub attrs: BTreeMap<String, String>,
    #[serde(default)]
    pub children: Vec<UiElement>,
}

impl UiElement {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_attr(mut self, key: &str, value: &str) -> Self {
        self.attrs.insert(key.to_owned(), value.to_owned());
        self
    }

    pub fn with_child(mut self, child: UiElement) -> Self {
        self.children.push(child);
        self
    }

    pub fn with_children(mut self, children: impl IntoIterator<Item = UiElement>) -> Self {
        self.children.extend(children);
        self
    }

    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs.get(key).map(String::as_str)
    }

    /// True when the attribute is the string `"true"`.
    pub fn flag(&self, key: &str) -> bool {
        self.attr(key) == Some("true")
    }

    pub fn is_enabled(&self) -> bool {
        self.attr("enabled") != Some("false")
    }

    pub fn text(&self) -> Option<&str> {
        self.attr("text").filter(|t| !t.trim().is_empty())
    }

    pub fn content_desc(&self) -> Option<&str> {
        self.attr("content-desc").filter(|t| !t.trim().is_empty())
    }

    /// Human-facing label: text, falling back to content-desc.
    pub fn label(&self) -> Option<&str> {
        self.text().or_else(|| self.content_desc())
    }

    pub fn get(&self, path: &ElementPath) -> Option<&UiElement> {
        path.0.iter().try_fold(self, |node, &i| node.children.get(i))
    }

    pub fn get_mut(&mut self, path: &ElementPath) -> Option<&mut UiElement> {
        let mut node = self;
        for &i in &path.0 {
            node = node.children.get_mut(i)?;
        }
        Some(node)
    }

    /// Pre-order traversal with paths.
    pub fn walk(&self) -> Vec<(ElementPath, &UiElement)> {
        let mut out = Vec::new();
        let mut path = Vec::new();
        walk_into(self, &mut path, &mut out);
        out
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(UiElement::node_count).sum::<usize>()
    }

    fn compressed(&self) -> UiElement {
        let attrs = self
            .attrs
            .iter()
            .filter(|(k, _)| KEPT_ATTRIBUTES.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let children = self
            .children
            .iter()
            .map(UiElement::compressed)
            .filter(|c| !c.attrs.is_empty() || !c.children.is_empty())
            .collect();
        UiElement { attrs, children }
    }

    fn write_canonical(&self, out: &mut Vec<u8>) {
        fn put(out: &mut Vec<u8>, s: &str) {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        out.push(b'{');
        out.extend_from_slice(&(self.attrs.len() as u32).to_le_bytes());
        for (k, v) in &self.attrs {
            put(out, k);
            put(out, v);
        }
        out.extend_from_slice(&(self.children.len() as u32).to_le_bytes());
        for c in &self.children {
            c.write_canonical(out);
        }
        out.push(b'}');
    }
}

fn walk_into<'a>(node: &'a UiElement, path: &mut Vec<usize>, out: &mut Vec<(ElementPath, &'a UiElement)>) {
    out.push((ElementPath(path.clone()), node));
    for (i, c) in node.children.iter().enumerate() {
        path.push(i);
        walk_into(c, path, out);
        path.pop();
    }
}

/// Root-to-node child indices. The empty path is the root.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ElementPath(pub Vec<usize>);

impl ElementPath {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn parent(&self) -> Option<ElementPath> {
        let mut v = self.0.clone();
        v.pop().map(|_| ElementPath(v))
    }

    pub fn child(&self, i: usize) -> ElementPath {
        let mut v = self.0.clone();
        v.push(i);
        ElementPath(v)
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn is_ancestor_of(&self, other: &ElementPath) -> bool {
        other.0.len() > self.0.len() && other.0.starts_with(&self.0)
    }
}

impl fmt::Display for ElementPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("/");
        }
        for i in &self.0 {
            write!(f, "/{i}")?;
        }
        Ok(())
    }
}

/// 128-bit content digest of a compressed UI tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateDigest(pub [u8; 16]);

impl fmt::Display for StateDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl Serialize for StateDigest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for StateDigest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; 16] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("digest must be 16 bytes"))?;
        Ok(StateDigest(arr))
    }
}

/// A UI state: a hierarchy plus an optional backend screen identifier.
#[derive(Debug, Clone, Default)]
pub struct UiState {
    root: UiElement,
    page_id: Option<String>,
    digest: OnceLock<StateDigest>,
}

impl PartialEq for UiState {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root && self.page_id == other.page_id
    }
}

impl UiState {
    pub fn new(root: UiElement) -> Self {
        Self {
            root,
            page_id: None,
            digest: OnceLock::new(),
        }
    }

    pub fn with_page_id(mut self, page_id: impl Into<String>) -> Self {
        self.page_id = Some(page_id.into());
        self
    }

    pub fn root(&self) -> &UiElement {
        &self.root
    }

    pub fn page_id(&self) -> Option<&str> {
        self.page_id.as_deref()
    }

    pub fn into_root(self) -> UiElement {
        self.root
    }

    pub fn element(&self, path: &ElementPath) -> Option<&UiElement> {
        self.root.get(path)
    }

    /// Digest of the compressed tree; computed once per state value.
    pub fn digest(&self) -> StateDigest {
        *self.digest.get_or_init(|| state_hash(self))
    }

    pub fn resolve(&self, selector: &Selector) -> Result<Vec<ElementPath>, UiError> {
        resolve_selector(self, selector)
    }
}

/// Copy of `state` keeping only [`KEPT_ATTRIBUTES`]; nodes left with no
/// attribute and no surviving descendant are pruned. The root always stays.
pub fn compress_tree(state: &UiState) -> UiState {
    let mut out = UiState::new(state.root.compressed());
    out.page_id = state.page_id.clone();
    out
}

/// Deterministic digest of the compressed tree, attributes in key order and
/// children in document order.
pub fn state_hash(state: &UiState) -> StateDigest {
    let compressed = state.root.compressed();
    let mut bytes = Vec::with_capacity(256);
    compressed.write_canonical(&mut bytes);
    let full = Sha256::digest(&bytes);
    let mut arr = [0u8; 16];
    arr.copy_from_slice(&full[..16]);
    StateDigest(arr)
}

/// Indented one-line-per-node rendering of the compressed tree, used as the
/// page description sent to scorers.
pub fn serialize_for_prompt(state: &UiState) -> String {
    fn line(node: &UiElement, label: &str, depth: usize, out: &mut String) {
        for _ in 0..depth {
            out.push_str("  ");
        }
        out.push_str(label);
        for (k, v) in &node.attrs {
            out.push(' ');
            out.push_str(k);
            out.push('=');
            out.push_str(&format!("{v:?}"));
        }
        out.push('\n');
        for (i, c) in node.children.iter().enumerate() {
            line(c, &format!("[{i}]"), depth + 1, out);
        }
    }
    let compressed = state.root.compressed();
    let mut out = String::new();
    line(&compressed, "[root]", 0, &mut out);
    out
}

/// Element locator: a conjunction of attribute predicates plus an optional
/// ordinal among the matches.
///
/// Equality predicates compare trimmed values case-sensitively.
/// `text-matches` is a full-string regex match against the element text; use
/// an inline `(?i)` flag for case-insensitive matching.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Selector {
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub root: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_matches: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_desc: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
}

impl Selector {
    /// The designated selector for element-less operations (back, launch).
    pub fn root() -> Self {
        Self {
            root: true,
            ..Self::default()
        }
    }

    pub fn resource_id(v: impl Into<String>) -> Self {
        Self {
            resource_id: Some(v.into()),
            ..Self::default()
        }
    }

    pub fn text(v: impl Into<String>) -> Self {
        Self {
            text: Some(v.into()),
            ..Self::default()
        }
    }

    pub fn text_matches(v: impl Into<String>) -> Self {
        Self {
            text_matches: Some(v.into()),
            ..Self::default()
        }
    }

    pub fn content_desc(v: impl Into<String>) -> Self {
        Self {
            content_desc: Some(v.into()),
            ..Self::default()
        }
    }

    pub fn class(v: impl Into<String>) -> Self {
        Self {
            class: Some(v.into()),
            ..Self::default()
        }
    }

    pub fn at(mut self, index: usize) -> Self {
        self.index = Some(index);
        self
    }

    pub fn predicate_count(&self) -> usize {
        [
            self.resource_id.is_some(),
            self.text.is_some(),
            self.text_matches.is_some(),
            self.content_desc.is_some(),
            self.class.is_some(),
        ]
        .iter()
        .filter(|b| **b)
        .count()
    }

    pub fn validate(&self) -> Result<(), UiError> {
        if self.root {
            if self.predicate_count() > 0 || self.index.is_some() {
                return Err(UiError::InvalidSelector(
                    "root selector takes no other predicates".into(),
                ));
            }
            return Ok(());
        }
        if self.predicate_count() == 0 {
            return Err(UiError::InvalidSelector("selector has no predicate".into()));
        }
        if let Some(p) = &self.text_matches {
            compile_full_match(p)?;
        }
        Ok(())
    }

    /// Compiled matcher; validates as a side effect.
    pub fn matcher(&self) -> Result<Matcher<'_>, UiError> {
        self.validate()?;
        let regex = self.text_matches.as_deref().map(compile_full_match).transpose()?;
        Ok(Matcher { selector: self, regex })
    }

    pub fn resolve_in(&self, root: &UiElement) -> Result<Vec<ElementPath>, UiError> {
        let m = self.matcher()?;
        if self.root {
            return Ok(vec![ElementPath::root()]);
        }
        let all: Vec<ElementPath> = root
            .walk()
            .into_iter()
            .filter(|(_, e)| m.matches(e))
            .map(|(p, _)| p)
            .collect();
        Ok(match self.index {
            Some(i) => all.into_iter().nth(i).into_iter().collect(),
            None => all,
        })
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.root {
            return f.write_str("root");
        }
        let mut parts = Vec::new();
        if let Some(v) = &self.resource_id {
            parts.push(format!("resource-id={v:?}"));
        }
        if let Some(v) = &self.text {
            parts.push(format!("text={v:?}"));
        }
        if let Some(v) = &self.text_matches {
            parts.push(format!("text-matches={v:?}"));
        }
        if let Some(v) = &self.content_desc {
            parts.push(format!("content-desc={v:?}"));
        }
        if let Some(v) = &self.class {
            parts.push(format!("class={v:?}"));
        }
        if let Some(i) = self.index {
            parts.push(format!("index={i}"));
        }
        f.write_str(&parts.join(","))
    }
}

/// A selector with its regex compiled.
pub struct Matcher<'a> {
    selector: &'a Selector,
    regex: Option<Regex>,
}

impl Matcher<'_> {
    /// Predicate match, ignoring the ordinal.
    pub fn matches(&self, e: &UiElement) -> bool {
        let s = self.selector;
        if s.root {
            return false;
        }
        let eq = |key: &str, want: &Option<String>| match want {
            None => true,
            Some(w) => e.attr(key).is_some_and(|v| v.trim() == w.trim()),
        };
        eq("resource-id", &s.resource_id)
            && eq("text", &s.text)
            && eq("content-desc", &s.content_desc)
            && eq("class", &s.class)
            && match &self.regex {
                None => true,
                Some(re) => e.attr("text").is_some_and(|t| re.is_match(t)),
            }
    }
}

/// Compile `pattern` so that it must match the whole string.
pub fn compile_full_match(pattern: &str) -> Result<Regex, UiError> {
    Regex::new(&format!("^(?:{pattern})$")).map_err(|e| UiError::InvalidRegex {
        pattern: pattern.to_owned(),
        detail: e.to_string(),
    })
}

/// All element paths in `state` satisfying `sel`, in document order. When the
/// selector carries an index, at most that one match is returned.
pub fn resolve_selector(state: &UiState, sel: &Selector) -> Result<Vec<ElementPath>, UiError> {
    sel.resolve_in(&state.root)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

/// Interaction applied to an element.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Action {
    Click,
    LongClick,
    Swipe { direction: Direction },
    Scroll { direction: Direction },
    InputText { payload: String },
    Back,
}

impl Action {
    /// Same kind and direction; input payloads are not compared.
    pub fn same_kind(&self, other: &Action) -> bool {
        match (self, other) {
            (Action::InputText { .. }, Action::InputText { .. }) => true,
            _ => self == other,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Click => f.write_str("click"),
            Action::LongClick => f.write_str("long-click"),
            Action::Swipe { direction } => write!(f, "swipe-{direction:?}"),
            Action::Scroll { direction } => write!(f, "scroll-{direction:?}"),
            Action::InputText { payload } => write!(f, "input-text({payload:?})"),
            Action::Back => f.write_str("back"),
        }
    }
}

/// Hash of an operation, used as the edge key of the exploration history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OpHash(pub u64);

impl Serialize for OpHash {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:016x}", self.0))
    }
}

/// `<element selector, action>` pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Operation {
    pub selector: Selector,
    pub action: Action,
}

impl Operation {
    pub fn new(selector: Selector, action: Action) -> Self {
        Self { selector, action }
    }

    pub fn click(selector: Selector) -> Self {
        Self::new(selector, Action::Click)
    }

    pub fn back() -> Self {
        Self::new(Selector::root(), Action::Back)
    }

    pub fn validate(&self) -> Result<(), UiError> {
        self.selector.validate()?;
        if matches!(self.action, Action::Back) && !self.selector.root {
            return Err(UiError::InvalidOperation("back must use the root selector".into()));
        }
        Ok(())
    }

    pub fn op_hash(&self) -> OpHash {
        let bytes = serde_json::to_vec(self).expect("operation serializes");
        let full = Sha256::digest(&bytes);
        let mut arr = [0u8; 8];
        arr.copy_from_slice(&full[..8]);
        OpHash(u64::from_le_bytes(arr))
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.action, self.selector)
    }
}
