use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::device::{apply_mutation, load_app, load_mutations, AppSpec, LoadError, MutationSet, Variant};
use crate::oracle::Phase;
use crate::scorer::{Lexicon, ScorerError};

/// One benchmark entry: a requirement, an app and whether the app
/// implements the requirement correctly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchCase {
    pub case_id: String,
    pub requirement: String,
    /// App-spec file, relative to the manifest.
    pub app: PathBuf,
    pub correct: bool,
    /// Mutation applied to `app` to obtain a faulty variant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    /// Phase a faulty case is meant to fail in.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_phase: Option<Phase>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    #[serde(default)]
    synonyms: Option<PathBuf>,
    #[serde(default)]
    mutations: Option<PathBuf>,
    cases: Vec<BenchCase>,
}

#[derive(Debug, Clone)]
pub struct LoadedCase {
    pub case: BenchCase,
    pub app: Arc<AppSpec>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub lexicon: Option<Lexicon>,
    pub mutations: MutationSet,
    pub cases: Vec<LoadedCase>,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    App { path: String, source: LoadError },
    #[error("case {case}: {detail}")]
    Case { case: String, detail: String },
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Synonyms(#[from] ScorerError),
}

impl Corpus {
    /// Load `dir/manifest.json` and every app and mutation it names.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let root = dir.as_ref().to_path_buf();
        let manifest_path = root.join("manifest.json");
        let text = std::fs::read_to_string(&manifest_path).map_err(|source| LoadError::Io {
            path: manifest_path.display().to_string(),
            source,
        })?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| LoadError::Parse(format!("{}: {e}", manifest_path.display())))?;

        let lexicon = manifest
            .synonyms
            .as_ref()
            .map(|p| Lexicon::load(root.join(p)))
            .transpose()?;
        let mutations = match &manifest.mutations {
            Some(p) => load_mutations(root.join(p))?,
            None => MutationSet::new(),
        };

        let mut apps: BTreeMap<PathBuf, Arc<AppSpec>> = BTreeMap::new();
        let mut ids = BTreeSet::new();
        let mut cases = Vec::with_capacity(manifest.cases.len());
        for case in manifest.cases {
            let bad = |detail: String| CorpusError::Case {
                case: case.case_id.clone(),
                detail,
            };
            if !ids.insert(case.case_id.clone()) {
                return Err(bad("duplicate case id".into()));
            }
            let base = match apps.get(&case.app) {
                Some(a) => a.clone(),
                None => {
                    let path = root.join(&case.app);
                    let app = load_app(&path).map_err(|source| CorpusError::App {
                        path: path.display().to_string(),
                        source,
                    })?;
                    let app = Arc::new(app);
                    apps.insert(case.app.clone(), app.clone());
                    app
                }
            };
            let app = match &case.mutation {
                None => base,
                Some(id) => {
                    let m = mutations
                        .get(&base.app_id)
                        .and_then(|list| list.iter().find(|m| &m.id == id))
                        .ok_or_else(|| bad(format!("unknown mutation {id:?} for app {}", base.app_id)))?;
                    Arc::new(apply_mutation(&base, m).map_err(|e| bad(e.to_string()))?)
                }
            };
            let faulty = matches!(app.variant, Variant::Faulty(_));
            if faulty == case.correct {
                return Err(bad(format!(
                    "correct={} contradicts app variant {}",
                    case.correct, app.variant
                )));
            }
            cases.push(LoadedCase { case, app });
        }
        Ok(Self {
            root,
            lexicon,
            mutations,
            cases,
        })
    }

    pub fn case(&self, id: &str) -> Option<&LoadedCase> {
        self.cases.iter().find(|c| c.case.case_id == id)
    }
}
