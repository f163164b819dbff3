use std::collections::HashMap;

use proptest::prelude::*;
use reqnav_core::ui::{compress_tree, serialize_for_prompt, state_hash, Selector, UiElement, UiState};

// Ordered tree shapes as child lists, enumerated exhaustively.
#[derive(Clone, Debug)]
struct Shape(Vec<Shape>);

fn trees(n: usize) -> Vec<Shape> {
    if n == 0 {
        return Vec::new();
    }
    forests(n - 1).into_iter().map(Shape).collect()
}

fn forests(n: usize) -> Vec<Vec<Shape>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for first in 1..=n {
        for t in trees(first) {
            for rest in forests(n - first) {
                let mut f = vec![t.clone()];
                f.extend(rest);
                out.push(f);
            }
        }
    }
    out
}

fn size(s: &Shape) -> usize {
    1 + s.0.iter().map(size).sum::<usize>()
}

// Two attributes per node: text (kept) and bounds (dropped by compression).
const LABELS: [(Option<&str>, Option<&str>); 6] = [
    (None, None),
    (None, Some("[0,0][1,1]")),
    (Some("a"), None),
    (Some("a"), Some("[0,0][1,1]")),
    (Some("b"), None),
    (Some("b"), Some("[0,0][1,1]")),
];

fn label_all(shape: &Shape, labels: &mut impl Iterator<Item = usize>) -> UiElement {
    let (text, bounds) = LABELS[labels.next().unwrap()];
    let mut e = UiElement::new();
    if let Some(t) = text {
        e = e.with_attr("text", t);
    }
    if let Some(b) = bounds {
        e = e.with_attr("bounds", b);
    }
    e.with_children(shape.0.iter().map(|c| label_all(c, labels)))
}

fn all_small_states() -> Vec<UiState> {
    let mut out = Vec::new();
    for n in 1..=4 {
        for shape in trees(n) {
            let k = size(&shape);
            for code in 0..LABELS.len().pow(k as u32) {
                let mut digits = (0..k).map(move |i| (code / LABELS.len().pow(i as u32)) % LABELS.len());
                out.push(UiState::new(label_all(&shape, &mut digits)));
            }
        }
    }
    out
}

#[test]
fn shape_enumeration_counts_match_catalan_numbers() {
    let counts: Vec<usize> = (1..=5).map(|n| trees(n).len()).collect();
    assert_eq!(counts, vec![1, 1, 2, 5, 14]);
}

#[test]
fn digest_equality_coincides_with_compressed_equality() {
    let states = all_small_states();
    assert_eq!(states.len(), 6 + 36 + 2 * 216 + 5 * 1296);
    let mut by_tree: HashMap<String, _> = HashMap::new();
    let mut by_digest = HashMap::new();
    for s in &states {
        let tree = serde_json::to_string(compress_tree(s).root()).unwrap();
        let d = state_hash(s);
        assert_eq!(
            *by_tree.entry(tree.clone()).or_insert(d),
            d,
            "equal trees, unequal digests"
        );
        assert_eq!(
            *by_digest.entry(d).or_insert_with(|| tree.clone()),
            tree,
            "digest collision between different compressed trees"
        );
    }
    // bounds never distinguishes states, so classes are strictly fewer than raw trees
    assert!(by_tree.len() < states.len());
    assert_eq!(by_tree.len(), by_digest.len());
}

#[test]
fn golden_prompt_rendering() {
    let state = UiState::new(
        UiElement::new()
            .with_attr("class", "android.widget.FrameLayout")
            .with_attr("resource-id", "root")
            .with_attr("bounds", "[0,0][1080,2400]")
            .with_child(
                UiElement::new()
                    .with_attr("class", "android.widget.TextView")
                    .with_attr("text", "Settings")
                    .with_attr("bounds", "[0,0][1080,120]"),
            )
            .with_child(
                UiElement::new()
                    .with_attr("class", "android.widget.LinearLayout")
                    .with_attr("resource-id", "row")
                    .with_attr("clickable", "true")
                    .with_attr("package", "com.example")
                    .with_child(
                        UiElement::new()
                            .with_attr("class", "android.widget.TextView")
                            .with_attr("text", "Language")
                            .with_attr("content-desc", "Pick \"Language\""),
                    )
                    .with_child(UiElement::new().with_attr("bounds", "[0,0][48,48]")),
            ),
    );
    assert_eq!(state.root().node_count(), 5);
    let golden = include_str!("golden/prompt_5node.txt");
    assert_eq!(serialize_for_prompt(&state), golden);
    assert_eq!(serialize_for_prompt(&state), serialize_for_prompt(&state.clone()));
}

fn arb_element() -> impl Strategy<Value = UiElement> {
    let keys = prop::sample::select(vec![
        "text",
        "resource-id",
        "content-desc",
        "class",
        "bounds",
        "clickable",
        "package",
    ]);
    let values = prop::sample::select(vec!["a", "b", "Settings", "true", "x y"]);
    let leaf = prop::collection::btree_map(keys, values, 0..3).prop_map(|m| {
        let mut e = UiElement::new();
        for (k, v) in m {
            e = e.with_attr(k, v);
        }
        e
    });
    leaf.clone().prop_recursive(3, 24, 4, move |inner| {
        (leaf.clone(), prop::collection::vec(inner, 0..4)).prop_map(|(e, children)| e.with_children(children))
    })
}

fn arb_selector() -> impl Strategy<Value = Selector> {
    (
        prop::option::of(prop::sample::select(vec!["a", "b", "Settings"])),
        prop::option::of(prop::sample::select(vec!["a", "b"])),
        prop::option::of(prop::sample::select(vec!["a", "x y"])),
        prop::option::of(prop::sample::select(vec!["(?i)a", "b|Settings", ".*"])),
    )
        .prop_filter("needs a predicate", |(t, r, d, m)| {
            t.is_some() || r.is_some() || d.is_some() || m.is_some()
        })
        .prop_map(|(t, r, d, m)| Selector {
            text: t.map(Into::into),
            resource_id: r.map(Into::into),
            content_desc: d.map(Into::into),
            text_matches: m.map(Into::into),
            ..Selector::default()
        })
}

proptest! {
    #[test]
    fn compression_is_idempotent(root in arb_element()) {
        let s = UiState::new(root);
        let once = compress_tree(&s);
        let twice = compress_tree(&once);
        prop_assert_eq!(once.root(), twice.root());
        prop_assert_eq!(s.digest(), once.digest());
    }

    #[test]
    fn adding_a_predicate_never_enlarges_matches(
        root in arb_element(),
        sel in arb_selector(),
        class in prop::sample::select(vec!["a", "b"]),
    ) {
        let s = UiState::new(root);
        let base = s.resolve(&sel).unwrap();
        let mut narrower = sel.clone();
        narrower.class = Some(class.into());
        let narrowed = s.resolve(&narrower).unwrap();
        prop_assert!(narrowed.iter().all(|p| base.contains(p)));
    }

    #[test]
    fn resolution_is_in_document_order(root in arb_element(), sel in arb_selector()) {
        let s = UiState::new(root);
        let order: Vec<_> = s.root().walk().into_iter().map(|(p, _)| p).collect();
        let hits = s.resolve(&sel).unwrap();
        let idx: Vec<usize> = hits.iter().map(|h| order.iter().position(|p| p == h).unwrap()).collect();
        prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
    }
}
