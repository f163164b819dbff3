//! Deterministic scorer built on token overlap and a synonym table.
//!
//! With `K` the requirement tokens and `L` the tokens of an element's text
//! and content-desc, an element scores
//!
//! * 5 when `L` contains all of `K`,
//! * 4 when `L` meets `K` or one of its synonyms,
//! * 3 when a descendant scores 4 or 5,
//! * 2 when `L` names a generic menu (settings, more, ...),
//! * 1 otherwise.
//!
//! An interactable element is a trigger when it scores 5, or when every
//! word of its label is a requirement term or synonym and none is a generic
//! menu word. A page holding a trigger is an entry state.

use regex::Regex;

use super::lexicon::{tokenize, Lexicon, COMMIT_WORDS, GENERIC_WORDS, REMOVAL_WORDS};
use super::{CandidateOp, ExploreResult, OracleError, PlanError, RelevanceLevel, Scorer, ScorerError};
use crate::oracle::{diff_states, StatePair, SubOracle, Target, TreeDiff};
use crate::refine::selector_for;
use crate::trigger::{Assertion, ScriptStep};
use crate::ui::{Action, Direction, ElementPath, Operation, Selector, UiElement, UiState};

/// Payload typed into text fields when the requirement quotes none.
pub const PROBE_INPUT: &str = "reqnav-probe";

#[derive(Debug, Clone, Default)]
pub struct LexicalScorer {
    lexicon: Lexicon,
}

struct Interactable {
    path: ElementPath,
    op: Operation,
    labels: Vec<String>,
    level: RelevanceLevel,
    trigger: bool,
}

impl LexicalScorer {
    pub fn new(lexicon: Lexicon) -> Self {
        Self { lexicon }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn keyphrase(&self, requirement: &str) -> Vec<String> {
        tokenize(requirement)
    }

    /// Level of one element for keyphrase `k`, with the rule that fired.
    pub fn element_level(&self, k: &[String], e: &UiElement) -> (RelevanceLevel, &'static str) {
        let level = |n| RelevanceLevel::new(n).expect("level in range");
        let own = labels(e);
        match self.direct_level(k, &own) {
            Some(5) => return (level(5), "label contains every requirement term"),
            Some(_) => return (level(4), "label shares a requirement term or synonym"),
            None => {}
        }
        let child_hit = e
            .walk()
            .into_iter()
            .skip(1)
            .any(|(_, d)| self.direct_level(k, &labels(d)).is_some());
        if child_hit {
            return (level(3), "contains a matching element");
        }
        if own.iter().any(|w| GENERIC_WORDS.contains(&w.as_str())) {
            return (level(2), "generic menu entry");
        }
        (level(1), "unrelated")
    }

    fn direct_level(&self, k: &[String], labels: &[String]) -> Option<u8> {
        if k.is_empty() || labels.is_empty() {
            return None;
        }
        if k.iter().all(|t| labels.contains(t)) {
            return Some(5);
        }
        self.lexicon.related(k, labels).then_some(4)
    }

    fn is_trigger(&self, k: &[String], labels: &[String], level: RelevanceLevel) -> bool {
        if k.is_empty() || labels.is_empty() {
            return false;
        }
        if level.level() == 5 {
            return true;
        }
        let expanded = self.lexicon.expand(k);
        labels.iter().all(|w| expanded.contains(w)) && !labels.iter().any(|w| GENERIC_WORDS.contains(&w.as_str()))
    }

    /// Relevance of `op` on `state`; the root and unresolved targets score 1.
    pub fn atomic_score(&self, requirement: &str, state: &UiState, op: &Operation) -> RelevanceLevel {
        let k = self.keyphrase(requirement);
        state
            .resolve(&op.selector)
            .ok()
            .and_then(|paths| paths.into_iter().next())
            .filter(|p| !p.0.is_empty())
            .and_then(|p| state.element(&p))
            .map_or(RelevanceLevel::MIN, |e| self.element_level(&k, e).0)
    }

    fn interactables(&self, requirement: &str, k: &[String], state: &UiState) -> Vec<Interactable> {
        let mut out = Vec::new();
        for (path, e) in state.root().walk() {
            if path.0.is_empty() || !e.is_enabled() {
                continue;
            }
            let mut actions = Vec::new();
            if e.flag("clickable") {
                actions.push(Action::Click);
            }
            if e.attr("class").is_some_and(|c| c.ends_with("EditText")) {
                actions.push(Action::InputText {
                    payload: input_payload(requirement),
                });
            }
            if e.flag("scrollable") {
                actions.push(Action::Scroll {
                    direction: Direction::Down,
                });
            }
            if actions.is_empty() {
                continue;
            }
            let Some(selector) = selector_for(state, &path) else {
                continue;
            };
            let labels = labels(e);
            let (level, _) = self.element_level(k, e);
            let trigger = self.is_trigger(k, &labels, level);
            for action in actions {
                out.push(Interactable {
                    path: path.clone(),
                    op: Operation::new(selector.clone(), action),
                    labels: labels.clone(),
                    level,
                    trigger,
                });
            }
        }
        out
    }

    fn candidate(&self, k: &[String], state: &UiState, item: Interactable) -> CandidateOp {
        let rationale = state
            .element(&item.path)
            .map(|e| self.element_level(k, e).1)
            .unwrap_or("unrelated");
        CandidateOp {
            op: item.op,
            atomic: item.level,
            rationale: rationale.to_owned(),
        }
    }

    /// Highest-level item, earliest in document order among equals.
    fn best(items: Vec<Interactable>) -> Option<Interactable> {
        items
            .into_iter()
            .fold(None, |best: Option<Interactable>, it| match &best {
                Some(b) if b.level >= it.level => best,
                _ => Some(it),
            })
    }

    fn alternation(&self, tokens: &[String]) -> String {
        let alts: Vec<String> = self.lexicon.expand(tokens).iter().map(|w| regex::escape(w)).collect();
        format!("(?i).*\\b({})\\b.*", alts.join("|"))
    }

    fn op_labels(&self, state: &UiState, op: &Operation) -> Vec<String> {
        let from_state = state
            .resolve(&op.selector)
            .ok()
            .and_then(|p| p.into_iter().next())
            .and_then(|p| state.element(&p).map(labels));
        from_state.unwrap_or_else(|| selector_labels(&op.selector))
    }
}

/// Tokens of the text and content-desc of `e`.
fn labels(e: &UiElement) -> Vec<String> {
    let mut words = tokenize(e.text().unwrap_or(""));
    for w in tokenize(e.content_desc().unwrap_or("")) {
        if !words.contains(&w) {
            words.push(w);
        }
    }
    words
}

/// Tokens of the equality label predicates of a selector.
fn selector_labels(sel: &Selector) -> Vec<String> {
    let text = [sel.text.as_deref(), sel.content_desc.as_deref()]
        .into_iter()
        .flatten()
        .collect::<Vec<_>>()
        .join(" ");
    tokenize(&text)
}

fn input_payload(requirement: &str) -> String {
    let quoted = Regex::new(r#""([^"]+)"|“([^”]+)”|'([^']+)'"#).expect("static regex");
    quoted
        .captures(requirement)
        .and_then(|c| c.iter().skip(1).flatten().next().map(|m| m.as_str().to_owned()))
        .unwrap_or_else(|| PROBE_INPUT.to_owned())
}

/// Selector naming an element by its visible label.
fn label_selector(e: &UiElement) -> Option<Selector> {
    e.text()
        .map(|t| Selector::text(t.trim()))
        .or_else(|| e.content_desc().map(|d| Selector::content_desc(d.trim())))
}

fn display(e: &UiElement) -> String {
    e.label().unwrap_or("").trim().to_owned()
}

impl Scorer for LexicalScorer {
    fn page_explore(&self, requirement: &str, state: &UiState, k: usize) -> Result<ExploreResult, ScorerError> {
        let key = self.keyphrase(requirement);
        let items = self.interactables(requirement, &key, state);
        let (triggers, mut others): (Vec<_>, Vec<_>) = items.into_iter().partition(|i| i.trigger);
        if let Some(t) = Self::best(triggers) {
            return Ok(ExploreResult {
                is_entry: true,
                candidates: vec![self.candidate(&key, state, t)],
            });
        }
        others.sort_by_key(|o| std::cmp::Reverse(o.level));
        let candidates = others
            .into_iter()
            .take(k)
            .map(|i| self.candidate(&key, state, i))
            .collect();
        Ok(ExploreResult {
            is_entry: false,
            candidates,
        })
    }

    fn plan_script(
        &self,
        requirement: &str,
        state: &UiState,
        trigger_ops: &[Operation],
        actuated: &[String],
    ) -> Result<Vec<ScriptStep>, PlanError> {
        let key = self.keyphrase(requirement);
        if key.is_empty() {
            return Err(PlanError::Unplannable(format!(
                "no key terms in requirement {requirement:?}"
            )));
        }
        if trigger_ops.is_empty() {
            return Err(PlanError::Unplannable("no triggering operation".into()));
        }
        let mut steps = Vec::new();
        let mut seen: Vec<String> = actuated.iter().flat_map(|a| tokenize(a)).collect();
        for op in trigger_ops {
            let words = self.op_labels(state, op);
            let name = if words.is_empty() {
                op.selector.to_string()
            } else {
                words.join(" ")
            };
            if !op.selector.root {
                steps.push(ScriptStep::Assert(Assertion::exists(
                    op.selector.clone(),
                    format!("{name} is present"),
                )));
            }
            steps.push(ScriptStep::Act(op.clone()));
            seen.extend(words);
        }
        let remaining: Vec<String> = key
            .iter()
            .filter(|t| !self.lexicon.related(std::slice::from_ref(t), &seen))
            .cloned()
            .collect();
        if remaining.is_empty() {
            steps.push(ScriptStep::Assert(Assertion::exists(
                Selector::text_matches(self.alternation(&key)),
                format!("{} shown after triggering", key.join(" ")),
            )));
        } else {
            let target = Selector::text_matches(self.alternation(&remaining));
            steps.push(ScriptStep::Assert(
                Assertion::exists(target.clone(), format!("{} is present", remaining.join(" "))).scrolling(),
            ));
            steps.push(ScriptStep::Act(Operation::click(target)));
        }
        Ok(steps)
    }

    fn continue_with(
        &self,
        requirement: &str,
        state: &UiState,
        actuated: &[String],
    ) -> Result<Option<Vec<Operation>>, ScorerError> {
        let key = self.keyphrase(requirement);
        let done: Vec<String> = actuated.iter().flat_map(|a| tokenize(a)).collect();
        let fresh = |i: &Interactable| !i.labels.iter().all(|w| done.contains(w));
        let items: Vec<Interactable> = self
            .interactables(requirement, &key, state)
            .into_iter()
            .filter(|i| matches!(i.op.action, Action::Click | Action::InputText { .. }))
            .filter(|i| !i.labels.is_empty() && fresh(i))
            .collect();
        let (triggers, rest): (Vec<_>, Vec<_>) = items.into_iter().partition(|i| i.trigger);
        let next = Self::best(triggers).or_else(|| {
            rest.into_iter()
                .find(|i| i.labels.iter().any(|w| COMMIT_WORDS.contains(&w.as_str())))
        });
        Ok(next.map(|i| vec![i.op]))
    }

    fn derive_oracle(&self, requirement: &str, pair: &StatePair, eta: usize) -> Result<Vec<SubOracle>, OracleError> {
        let diff = diff_states(&pair.pre, &pair.post);
        if diff.is_empty() {
            return Err(OracleError::NoDiffDerivable);
        }
        let key = self.keyphrase(requirement);
        let mut out: Vec<SubOracle> = Vec::new();
        let mut push = |o: SubOracle| {
            if !out
                .iter()
                .any(|x| x.assertion.selector == o.assertion.selector && x.assertion.mode == o.assertion.mode)
            {
                out.push(o);
            }
        };

        if let Some(o) = self.intent_oracle(&key, pair) {
            push(o);
        }
        for o in self.change_oracles(&key, &diff) {
            push(o);
        }
        if let Some(o) = self.stability_oracle(&key, &diff) {
            push(o);
        }
        for o in removal_oracles(&diff) {
            push(o);
        }
        out.truncate(eta.max(1));
        Ok(out)
    }
}

impl LexicalScorer {
    /// The expected outcome read from the requirement itself.
    fn intent_oracle(&self, key: &[String], pair: &StatePair) -> Option<SubOracle> {
        if key.is_empty() {
            return None;
        }
        if key.iter().any(|t| REMOVAL_WORDS.contains(&t.as_str())) {
            let (subject, _) = self.removal_subject(key, pair)?;
            let sel = label_selector(&subject)?;
            return Some(SubOracle {
                assertion: Assertion::absent(sel, format!("{} is gone", display(&subject))),
                target: Target::Post,
                rationale: "requirement removes the item acted on".into(),
            });
        }
        let acted: Vec<String> = pair.ops.iter().flat_map(|op| selector_labels(&op.selector)).collect();
        let mut effect: Vec<String> = key
            .iter()
            .filter(|t| !self.lexicon.related(std::slice::from_ref(t), &acted))
            .cloned()
            .collect();
        if effect.is_empty() {
            effect = key.to_vec();
        }
        Some(SubOracle {
            assertion: Assertion::exists(
                Selector::text_matches(self.alternation(&effect)),
                format!("{} shown after execution", effect.join(" ")),
            ),
            target: Target::Post,
            rationale: "requirement terms expected in the result".into(),
        })
    }

    /// The item a removal acts on: static text near the acted element whose
    /// label names the removal, e.g. the title of the row whose delete
    /// button was pressed. Without such an element the first acted element
    /// found in `pre` anchors the search.
    fn removal_subject(&self, key: &[String], pair: &StatePair) -> Option<(UiElement, ElementPath)> {
        let acted: Vec<ElementPath> = pair
            .ops
            .iter()
            .filter(|op| !op.selector.root)
            .filter_map(|op| pair.pre.resolve(&op.selector).ok()?.into_iter().next())
            .collect();
        let removing = |p: &&ElementPath| {
            pair.pre
                .element(p)
                .is_some_and(|e| labels(e).iter().any(|w| REMOVAL_WORDS.contains(&w.as_str())))
        };
        let anchor = acted.iter().find(removing).or(acted.first())?;
        let mut scope = anchor.parent();
        for _ in 0..2 {
            let anc = scope?;
            let base = pair.pre.element(&anc)?;
            for (rel, e) in base.walk() {
                let path = ElementPath(anc.0.iter().chain(rel.0.iter()).copied().collect());
                if path == *anchor || path.is_ancestor_of(anchor) || anchor.is_ancestor_of(&path) {
                    continue;
                }
                if e.flag("clickable") {
                    continue;
                }
                let Some(text) = e.text() else { continue };
                if self.lexicon.related(key, &tokenize(text)) {
                    continue;
                }
                return Some((e.clone(), path));
            }
            scope = anc.parent();
        }
        None
    }

    /// New or changed elements in the post state that mention the requirement.
    fn change_oracles(&self, key: &[String], diff: &TreeDiff) -> Vec<SubOracle> {
        let mut paths: Vec<ElementPath> = Vec::new();
        for root in &diff.added {
            if let Some(e) = diff.post.element(root) {
                for (rel, _) in e.walk() {
                    paths.push(ElementPath(root.0.iter().chain(rel.0.iter()).copied().collect()));
                }
            }
        }
        paths.extend(diff.changed.iter().map(|(_, p)| p.clone()));
        paths.sort();
        paths.dedup();
        paths
            .into_iter()
            .filter_map(|p| diff.post.element(&p))
            .filter(|e| self.lexicon.related(key, &labels(e)))
            .filter_map(|e| {
                let sel = label_selector(e)?;
                Some(SubOracle {
                    assertion: Assertion::exists(sel, format!("{} shown", display(e))),
                    target: Target::Post,
                    rationale: "changed element related to the requirement".into(),
                })
            })
            .collect()
    }

    /// One unrelated, untouched element that must survive the execution.
    fn stability_oracle(&self, key: &[String], diff: &TreeDiff) -> Option<SubOracle> {
        diff.unchanged.iter().find_map(|(_, post)| {
            let e = diff.post.element(post)?;
            if post.0.is_empty() || self.lexicon.related(key, &labels(e)) {
                return None;
            }
            let sel = label_selector(e)?;
            if diff.post.resolve(&sel).ok()?.len() != 1 {
                return None;
            }
            Some(SubOracle {
                assertion: Assertion::exists(sel, format!("{} unaffected", display(e))),
                target: Target::Post,
                rationale: "element outside the change stays in place".into(),
            })
        })
    }
}

/// Labelled elements of removed subtrees that no longer appear.
fn removal_oracles(diff: &TreeDiff) -> Vec<SubOracle> {
    let mut out = Vec::new();
    for root in &diff.removed {
        let Some(e) = diff.pre.element(root) else { continue };
        for (_, d) in e.walk() {
            let Some(sel) = label_selector(d) else { continue };
            if diff.post.resolve(&sel).map_or(true, |m| !m.is_empty()) {
                continue;
            }
            out.push(SubOracle {
                assertion: Assertion::absent(sel, format!("{} no longer shown", display(d))),
                target: Target::Post,
                rationale: "element removed by the execution".into(),
            });
        }
    }
    out
}
