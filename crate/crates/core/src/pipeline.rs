//! Document-level orchestration: mentions -> frames -> controlled inference
//! -> merge -> annotated CoNLL-U, plus the corpus-level driver.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Mutex;

use rayon::prelude::*;

use crate::conllu::{extract_mentions_with_diagnostics, Document, EntityError};
use crate::framing::{entity_index, frame_document, Budgets, FramedDocument, FramingError};
use crate::inference::{
    run_controlled_inference, BackendError, DecodeConfig, InferenceError, OracleBackend,
    PredictorBackend, RemoteBackend, RemoteConfig, ReplayBackend,
};
use crate::instructions::{render_instruction, InstructionSpec};
use crate::merge::{apply_to_document, find_chain_breaks, merge_document, FrameAssignments, MergeError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    /// Gold local numbers read from the input document itself.
    Oracle,
    /// One generation per line, consumed in document order.
    Replay(PathBuf),
    Remote(String),
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("backend must be `oracle`, `replay:<file>` or `remote:<url>`, got {0:?}")]
pub struct BackendSpecError(pub String);

impl FromStr for BackendSpec {
    type Err = BackendSpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "oracle" {
            return Ok(BackendSpec::Oracle);
        }
        match s.split_once(':') {
            Some(("replay", path)) if !path.is_empty() => Ok(BackendSpec::Replay(path.into())),
            Some(("remote", url)) if !url.is_empty() => Ok(BackendSpec::Remote(url.to_owned())),
            _ => Err(BackendSpecError(s.to_owned())),
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Oracle => f.write_str("oracle"),
            BackendSpec::Replay(p) => write!(f, "replay:{}", p.display()),
            BackendSpec::Remote(u) => write!(f, "remote:{u}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub instruction: InstructionSpec,
    pub budgets: Budgets,
    pub backend: BackendSpec,
    pub decode: DecodeConfig,
    pub jobs: usize,
    pub seed: u64,
    pub remote_token: Option<String>,
    pub remote_timeout: std::time::Duration,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            instruction: InstructionSpec::default(),
            budgets: Budgets::default(),
            backend: BackendSpec::Oracle,
            decode: DecodeConfig::default(),
            jobs: 1,
            seed: 0,
            remote_token: None,
            remote_timeout: std::time::Duration::from_secs(60),
        }
    }
}

impl PipelineConfig {
    /// Renders the instruction and checks the budgets against it.
    pub fn validate(&self) -> Result<String, PipelineError> {
        let instruction = render_instruction(&self.instruction).map_err(FramingError::from)?;
        self.budgets.validate(&instruction)?;
        Ok(instruction)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("document {doc:?}: {source}")]
    Entity { doc: String, source: EntityError },
    #[error("document {doc:?}: {source}")]
    Framing { doc: String, source: FramingError },
    #[error("document {doc:?}, tuple {tuple}: {source}")]
    Inference {
        doc: String,
        tuple: usize,
        source: InferenceError,
    },
    #[error("document {doc:?}: {source}")]
    Merge { doc: String, source: MergeError },
    #[error(transparent)]
    Config(#[from] FramingError),
    #[error("cannot read replay script {path}: {source}")]
    Replay {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl PipelineError {
    fn framing(doc: &Document, source: FramingError) -> Self {
        PipelineError::Framing {
            doc: doc.doc_id.clone(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentResult {
    pub document: Document,
    pub diagnostics: Vec<String>,
    pub slots: usize,
    pub calls: usize,
    pub tuples: usize,
}

/// Split a tuple's slot-indexed assignments into before/after frame lists.
fn split_assignments(
    framed: &FramedDocument,
    tuple: usize,
    assignments: &[(usize, u32)],
) -> (FrameAssignments, Option<FrameAssignments>) {
    let t = &framed.tuples[tuple];
    let slots = t.slots();
    let n_before = t.before.slots.len();
    let mut before = Vec::with_capacity(n_before);
    let mut after = Vec::new();
    for &(k, n) in assignments {
        if k < n_before {
            before.push((slots[k].span, n));
        } else {
            after.push((slots[k].span, n));
        }
    }
    (before, t.after.as_ref().map(|_| after))
}

/// Run the whole chain on one document. `backend` sees the tuples in order.
pub fn infer_document(
    doc: &Document,
    instruction: &str,
    budgets: &Budgets,
    decode: &DecodeConfig,
    backend: &mut dyn PredictorBackend,
) -> Result<DocumentResult, PipelineError> {
    let doc_id = || doc.doc_id.clone();
    let extraction = extract_mentions_with_diagnostics(doc).map_err(|source| PipelineError::Entity {
        doc: doc_id(),
        source,
    })?;
    let mut diagnostics = extraction.diagnostics;
    let labelled: Vec<_> = extraction
        .mentions
        .iter()
        .filter(|m| m.entity_id.is_some())
        .cloned()
        .collect();
    let framed = frame_document(doc, extraction.mentions, instruction, budgets)
        .map_err(|e| PipelineError::framing(doc, e))?;
    let entity_of = entity_index(&labelled).map_err(|e| PipelineError::framing(doc, e))?;
    for b in find_chain_breaks(&framed.frames, &entity_of) {
        log::warn!("{}: {b}", doc.doc_id);
        diagnostics.push(b.to_string());
    }

    let mut per_tuple = Vec::with_capacity(framed.tuples.len());
    let mut slots = 0;
    let mut calls = 0;
    for (k, tuple) in framed.tuples.iter().enumerate() {
        let outcome = run_controlled_inference(tuple, backend, decode).map_err(|source| {
            PipelineError::Inference {
                doc: doc_id(),
                tuple: k,
                source,
            }
        })?;
        slots += tuple.slot_count();
        calls += outcome.calls;
        diagnostics.extend(outcome.diagnostics.iter().map(|d| format!("tuple {k}: {d}")));
        per_tuple.push(split_assignments(&framed, k, &outcome.assignments));
    }

    let merged = merge_document(&per_tuple).map_err(|source| PipelineError::Merge {
        doc: doc_id(),
        source,
    })?;
    diagnostics.extend(merged.diagnostics.iter().map(ToString::to_string));
    let document = apply_to_document(doc, &merged.globals).map_err(|source| PipelineError::Entity {
        doc: doc_id(),
        source,
    })?;
    Ok(DocumentResult {
        document,
        diagnostics,
        slots,
        calls,
        tuples: framed.tuples.len(),
    })
}

fn oracle_for(doc: &Document) -> Result<OracleBackend, PipelineError> {
    OracleBackend::new(doc).map_err(|source| PipelineError::Entity {
        doc: doc.doc_id.clone(),
        source,
    })
}

/// Infer every document. Output order always matches input order.
///
/// Replay scripts are consumed strictly in document order, so that backend
/// runs sequentially; oracle and remote backends use up to `jobs` workers.
pub fn infer_corpus(docs: &[Document], config: &PipelineConfig) -> Result<Vec<DocumentResult>, PipelineError> {
    let instruction = config.validate()?;
    let run = |doc: &Document, backend: &mut dyn PredictorBackend| {
        infer_document(doc, &instruction, &config.budgets, &config.decode, backend)
    };
    match &config.backend {
        BackendSpec::Replay(path) => {
            let script = std::fs::read_to_string(path).map_err(|source| PipelineError::Replay {
                path: path.clone(),
                source,
            })?;
            let mut backend = ReplayBackend::from_lines(&script);
            let results = docs
                .iter()
                .map(|d| run(d, &mut backend))
                .collect::<Result<Vec<_>, _>>()?;
            if backend.remaining() > 0 {
                log::warn!("replay script has {} unused lines", backend.remaining());
            }
            Ok(results)
        }
        BackendSpec::Oracle => in_pool(config.jobs, || {
            docs.par_iter()
                .map(|d| run(d, &mut oracle_for(d)?))
                .collect()
        }),
        BackendSpec::Remote(url) => {
            let remote = RemoteConfig {
                token: config.remote_token.clone(),
                timeout: config.remote_timeout,
                ..RemoteConfig::new(url.clone())
            };
            // One client per worker thread; the agent pools connections.
            let idle: Mutex<Vec<RemoteBackend>> = Mutex::new(Vec::new());
            in_pool(config.jobs, || {
                docs.par_iter()
                    .map(|d| {
                        let popped = idle.lock().expect("backend pool poisoned").pop();
                        let mut backend = popped.unwrap_or_else(|| RemoteBackend::new(remote.clone()));
                        let result = run(d, &mut backend);
                        idle.lock().expect("backend pool poisoned").push(backend);
                        result
                    })
                    .collect()
            })
        }
    }
}

fn in_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!("cannot build worker pool ({e}); running on the global pool");
            f()
        }
    }
}

/// Whether an error came from an unreachable or failing backend.
pub fn is_backend_failure(e: &PipelineError) -> bool {
    matches!(
        e,
        PipelineError::Inference {
            source: InferenceError {
                source: BackendError::Status(_) | BackendError::Transport(_) | BackendError::Malformed(_),
                ..
            },
            ..
        }
    )
}
