//! C ABI over `coref-core`.
//!
//! Corpora are opaque `CorefCorpus` handles. Every fallible function returns
//! a `CorefStatus`; on failure `coref_last_error_message` describes the
//! problem for the calling thread. Strings handed out by the library must be
//! released with `coref_string_free`, corpora with `coref_corpus_free`.

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use coref_core::conllu::{parse_document, serialize_corpus, Document};
use coref_core::framing::{export_training_tuples, Budgets, LengthUnit};
use coref_core::inference::{BackendError, DecodeConfig, ErrorPolicy, OracleBackend, SlotQuery};
use coref_core::instructions::InstructionSpec;
use coref_core::pipeline::{infer_document, PipelineConfig, PipelineError};
use coref_core::scorer::{score_dataset, ScoreOptions};

/// Parsed documents.
pub struct CorefCorpus {
    docs: Vec<Document>,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorefStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Entity = 4,
    Framing = 5,
    Inference = 6,
    Merge = 7,
    Config = 8,
    Score = 9,
    Panic = 99,
}

/// Framing and decoding settings. Obtain defaults from `coref_options_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CorefOptions {
    /// Instruction set, 1 through 5.
    pub instruction: u8,
    /// Substituted into instruction 1; NULL means "English".
    pub language: *const c_char,
    pub zero_suffix: bool,
    pub frame_budget: usize,
    pub tuple_budget: usize,
    /// Measure lengths in characters instead of whitespace-separated words.
    pub count_chars: bool,
    pub max_retries: u32,
    pub max_new_tokens: usize,
}

/// Micro-averaged scores over a whole corpus.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CorefScores {
    pub muc_p: f64,
    pub muc_r: f64,
    pub muc_f1: f64,
    pub b3_p: f64,
    pub b3_r: f64,
    pub b3_f1: f64,
    pub ceaf_e_p: f64,
    pub ceaf_e_r: f64,
    pub ceaf_e_f1: f64,
    pub conll: f64,
    /// Simplified zero-anaphor score.
    pub zero_p: f64,
    pub zero_r: f64,
    pub zero_f1: f64,
    pub matched: usize,
    pub missing: usize,
    pub spurious: usize,
}

/// Produces the generation for one slot. `context` is the NUL-terminated
/// prompt. Write at most `capacity` bytes (no terminator needed) into
/// `buffer` and return the number written, or a negative value on failure.
pub type CorefCompleteFn = Option<
    unsafe extern "C" fn(
        user_data: *mut c_void,
        context: *const c_char,
        buffer: *mut c_char,
        capacity: usize,
    ) -> isize,
>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Message for the last failure on this thread, or NULL. Valid until the
/// next library call on the same thread.
#[no_mangle]
pub extern "C" fn coref_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

type FfiResult<T> = Result<T, (CorefStatus, String)>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> CorefStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CorefStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CorefStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err((CorefStatus::NullArgument, format!("{name} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (CorefStatus::InvalidUtf8, format!("{name}: {e}")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> FfiResult<&'a T> {
    p.as_ref()
        .ok_or_else(|| (CorefStatus::NullArgument, format!("{name} is NULL")))
}

fn out_arg<T>(p: *mut T, name: &str) -> FfiResult<*mut T> {
    if p.is_null() {
        Err((CorefStatus::NullArgument, format!("{name} is NULL")))
    } else {
        Ok(p)
    }
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("NUL bytes were replaced")
        .into_raw()
}

fn pipeline_status(e: &PipelineError) -> CorefStatus {
    match e {
        PipelineError::Entity { .. } => CorefStatus::Entity,
        PipelineError::Framing { .. } => CorefStatus::Framing,
        PipelineError::Inference { .. } => CorefStatus::Inference,
        PipelineError::Merge { .. } => CorefStatus::Merge,
        PipelineError::Config(_) | PipelineError::Replay { .. } => CorefStatus::Config,
    }
}

#[no_mangle]
pub extern "C" fn coref_options_default() -> CorefOptions {
    let budgets = Budgets::default();
    let decode = DecodeConfig::default();
    CorefOptions {
        instruction: InstructionSpec::default().id,
        language: ptr::null(),
        zero_suffix: false,
        frame_budget: budgets.frame,
        tuple_budget: budgets.tuple,
        count_chars: false,
        max_retries: decode.policy.max_retries,
        max_new_tokens: decode.max_new_tokens,
    }
}

unsafe fn pipeline_config(options: *const CorefOptions) -> FfiResult<PipelineConfig> {
    let o = match options.as_ref() {
        Some(o) => *o,
        None => coref_options_default(),
    };
    let language = if o.language.is_null() {
        "English"
    } else {
        str_arg(o.language, "options.language")?
    };
    let config = PipelineConfig {
        instruction: InstructionSpec::new(o.instruction, language, o.zero_suffix),
        budgets: Budgets {
            frame: o.frame_budget,
            tuple: o.tuple_budget,
            unit: if o.count_chars { LengthUnit::Chars } else { LengthUnit::Words },
        },
        decode: DecodeConfig {
            policy: ErrorPolicy {
                max_retries: o.max_retries,
            },
            max_new_tokens: o.max_new_tokens,
        },
        ..PipelineConfig::default()
    };
    config
        .validate()
        .map_err(|e| (CorefStatus::Config, e.to_string()))?;
    Ok(config)
}

/// Parse CoNLL-U text into a new corpus stored in `*out`.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn coref_corpus_parse(text: *const c_char, out: *mut *mut CorefCorpus) -> CorefStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = str_arg(text, "text")?;
        let docs = parse_document(text).map_err(|e| (CorefStatus::Parse, e.to_string()))?;
        *out = Box::into_raw(Box::new(CorefCorpus { docs }));
        Ok(())
    })
}

/// # Safety
/// `corpus` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn coref_corpus_free(corpus: *mut CorefCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Number of documents, 0 for NULL.
///
/// # Safety
/// `corpus` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn coref_corpus_len(corpus: *const CorefCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.docs.len())
}

/// Serialize the corpus back to CoNLL-U text.
///
/// # Safety
/// `corpus` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn coref_corpus_serialize(corpus: *const CorefCorpus, out: *mut *mut c_char) -> CorefStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let corpus = ref_arg(corpus, "corpus")?;
        *out = into_c_string(serialize_corpus(&corpus.docs));
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn coref_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Training records as JSON lines. `options` may be NULL for defaults.
///
/// # Safety
/// Pointers must be valid; `options.language` NULL or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn coref_export_train(
    corpus: *const CorefCorpus,
    options: *const CorefOptions,
    out: *mut *mut c_char,
) -> CorefStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let corpus = ref_arg(corpus, "corpus")?;
        let config = pipeline_config(options)?;
        let mut buf = String::new();
        for doc in &corpus.docs {
            let records = export_training_tuples(doc, &config.instruction, &config.budgets)
                .map_err(|e| (CorefStatus::Framing, format!("document {:?}: {e}", doc.doc_id)))?;
            for r in records {
                let line = serde_json::to_string(&r).map_err(|e| (CorefStatus::Framing, e.to_string()))?;
                buf.push_str(&line);
                buf.push('\n');
            }
        }
        *out = into_c_string(buf);
        Ok(())
    })
}

unsafe fn run_infer(
    corpus: *const CorefCorpus,
    options: *const CorefOptions,
    out: *mut *mut CorefCorpus,
    mut backend_for: impl FnMut(&Document) -> FfiResult<Box<dyn coref_core::inference::PredictorBackend + '_>>,
) -> FfiResult<()> {
    let out = out_arg(out, "out")?;
    let corpus = ref_arg(corpus, "corpus")?;
    let config = pipeline_config(options)?;
    let instruction = config
        .validate()
        .map_err(|e| (CorefStatus::Config, e.to_string()))?;
    let mut docs = Vec::with_capacity(corpus.docs.len());
    for doc in &corpus.docs {
        let mut backend = backend_for(doc)?;
        let result = infer_document(doc, &instruction, &config.budgets, &config.decode, backend.as_mut())
            .map_err(|e| (pipeline_status(&e), e.to_string()))?;
        docs.push(result.document);
    }
    *out = Box::into_raw(Box::new(CorefCorpus { docs }));
    Ok(())
}

/// Cluster each document with its own gold entities as the predictor.
///
/// # Safety
/// Pointers must be valid; `options` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn coref_infer_oracle(
    corpus: *const CorefCorpus,
    options: *const CorefOptions,
    out: *mut *mut CorefCorpus,
) -> CorefStatus {
    guard(|| {
        run_infer(corpus, options, out, |doc| {
            let oracle = OracleBackend::new(doc).map_err(|e| (CorefStatus::Entity, e.to_string()))?;
            Ok(Box::new(oracle))
        })
    })
}

/// Generation buffer size offered to `complete`.
const GENERATION_CAPACITY: usize = 256;

/// Cluster mentions using `complete` as the model, called once per slot
/// (plus retries) in document order on the calling thread.
///
/// # Safety
/// Pointers must be valid; `complete` must honour its buffer contract.
#[no_mangle]
pub unsafe extern "C" fn coref_infer_with_callback(
    corpus: *const CorefCorpus,
    options: *const CorefOptions,
    complete: CorefCompleteFn,
    user_data: *mut c_void,
    out: *mut *mut CorefCorpus,
) -> CorefStatus {
    guard(|| {
        let complete = complete.ok_or_else(|| (CorefStatus::NullArgument, "complete is NULL".to_owned()))?;
        run_infer(corpus, options, out, |_| {
            let backend = move |q: &SlotQuery<'_>| -> Result<String, BackendError> {
                let context = CString::new(q.context.replace('\0', " "))
                    .map_err(|e| BackendError::Other(e.to_string()))?;
                let mut buf = vec![0u8; GENERATION_CAPACITY];
                let n = complete(user_data, context.as_ptr(), buf.as_mut_ptr().cast(), buf.len());
                if n < 0 {
                    return Err(BackendError::Other(format!("callback returned {n}")));
                }
                buf.truncate((n as usize).min(GENERATION_CAPACITY));
                String::from_utf8(buf).map_err(|e| BackendError::Malformed(e.to_string()))
            };
            Ok(Box::new(backend))
        })
    })
}

/// Score `response` against `key`; documents are paired by position.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn coref_score(
    key: *const CorefCorpus,
    response: *const CorefCorpus,
    remove_singletons: bool,
    out: *mut CorefScores,
) -> CorefStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let key = ref_arg(key, "key")?;
        let response = ref_arg(response, "response")?;
        let scored = score_dataset("corpus", &key.docs, &response.docs, ScoreOptions { remove_singletons })
            .map_err(|e| (CorefStatus::Score, e.to_string()))?;
        let r = scored.report;
        *out = CorefScores {
            muc_p: r.muc.precision,
            muc_r: r.muc.recall,
            muc_f1: r.muc.f1,
            b3_p: r.b3.precision,
            b3_r: r.b3.recall,
            b3_f1: r.b3.f1,
            ceaf_e_p: r.ceaf_e.precision,
            ceaf_e_r: r.ceaf_e.recall,
            ceaf_e_f1: r.ceaf_e.f1,
            conll: r.conll,
            zero_p: r.zero.precision,
            zero_r: r.zero.recall,
            zero_f1: r.zero.f1,
            matched: r.counts.matched,
            missing: r.counts.missing,
            spurious: r.counts.spurious,
        };
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_arguments_are_reported() {
        let mut out = ptr::null_mut();
        let status = unsafe { coref_corpus_parse(ptr::null(), &mut out) };
        assert_eq!(status, CorefStatus::NullArgument);
        let msg = unsafe { CStr::from_ptr(coref_last_error_message()) };
        assert_eq!(msg.to_str().unwrap(), "text is NULL");
    }
}
