//! Controlled inference: the predictor is asked for one cluster number per
//! MASK, left to right, with every earlier decision already written into
//! the context. All other output text is copied from the input.

mod backend;
mod remote;

pub use backend::{BackendError, OracleBackend, PredictorBackend, ReplayBackend, SlotQuery};
pub use remote::{RemoteBackend, RemoteConfig};

use crate::framing::InputTuple;
use crate::markup::split_at_masks;

/// Stop strings sent with every request: a tag start or a line break ends the number.
pub const STOP: [&str; 2] = ["<", "\n"];
/// Largest cluster number accepted from a generation.
pub const MAX_CLUSTER_NUMBER: u32 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErrorPolicy {
    /// Extra backend calls allowed for a slot whose generation has no usable number.
    pub max_retries: u32,
}

impl Default for ErrorPolicy {
    fn default() -> Self {
        ErrorPolicy { max_retries: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeConfig {
    pub policy: ErrorPolicy,
    pub max_new_tokens: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            policy: ErrorPolicy::default(),
            max_new_tokens: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InferenceDiagnostic {
    Retry { slot: usize, generated: String },
    /// Retries exhausted; the slot was given a number no earlier slot used.
    Fallback {
        slot: usize,
        generated: String,
        assigned: u32,
    },
}

impl std::fmt::Display for InferenceDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InferenceDiagnostic::Retry { slot, generated } => {
                write!(f, "slot {slot}: retrying after unusable generation {generated:?}")
            }
            InferenceDiagnostic::Fallback {
                slot,
                generated,
                assigned,
            } => write!(
                f,
                "slot {slot}: no number in {generated:?}, assigned fresh local {assigned}"
            ),
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("backend failed at slot {slot} ({} slots already filled): {source}", partial.len())]
pub struct InferenceError {
    pub slot: usize,
    pub partial: Vec<(usize, u32)>,
    #[source]
    pub source: BackendError,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferenceOutcome {
    pub filled: String,
    pub assignments: Vec<(usize, u32)>,
    /// Total backend invocations, retries included.
    pub calls: usize,
    pub diagnostics: Vec<InferenceDiagnostic>,
}

/// Progress through one tuple. `output` holds the filled prefix up to and
/// including the sentinel of `next_slot` once `advance_to_slot` has run.
#[derive(Debug, Clone)]
pub struct DecodeState<'a> {
    pub tuple: &'a InputTuple,
    pub input: String,
    pub output: String,
    pub next_slot: usize,
    pub assignments: Vec<(usize, u32)>,
}

impl<'a> DecodeState<'a> {
    pub fn new(tuple: &'a InputTuple) -> Self {
        DecodeState {
            tuple,
            input: tuple.input_text(),
            output: String::new(),
            next_slot: 0,
            assignments: Vec::new(),
        }
    }

    pub fn context(&self) -> String {
        compose_context(&self.tuple.instruction, &self.input, &self.output)
    }

    fn fresh_number(&self) -> u32 {
        self.assignments
            .iter()
            .map(|&(_, n)| n + 1)
            .max()
            .unwrap_or(0)
    }
}

/// Instruction, blank line, input, blank line, output so far.
pub fn compose_context(instruction: &str, input: &str, output_so_far: &str) -> String {
    format!("{instruction}\n\n{input}\n\n{output_so_far}")
}

/// Longest leading digit run after optional whitespace, capped at [`MAX_CLUSTER_NUMBER`].
pub fn parse_generated_number(text: &str) -> Option<u32> {
    let trimmed = text.trim_start();
    let digits = trimmed.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    trimmed[..digits]
        .parse::<u64>()
        .ok()
        .filter(|&n| n <= MAX_CLUSTER_NUMBER as u64)
        .map(|n| n as u32)
}

pub fn run_controlled_inference(
    tuple: &InputTuple,
    backend: &mut dyn PredictorBackend,
    config: &DecodeConfig,
) -> Result<InferenceOutcome, InferenceError> {
    let slots = tuple.slots();
    let mut state = DecodeState::new(tuple);
    let input = state.input.clone();
    let pieces = split_at_masks(&input);
    debug_assert_eq!(pieces.len(), slots.len() + 1);
    let mut calls = 0;
    let mut diagnostics = Vec::new();

    for (k, slot) in slots.iter().enumerate() {
        state.output.push_str(pieces[k]);
        state.next_slot = k;
        let context = state.context();
        let mut attempt = 0;
        let number = loop {
            let query = SlotQuery {
                context: &context,
                max_new_tokens: config.max_new_tokens,
                stop: &STOP,
                tuple,
                slot,
                attempt,
            };
            calls += 1;
            let generated = backend.complete(&query).map_err(|source| InferenceError {
                slot: k,
                partial: state.assignments.clone(),
                source,
            })?;
            if let Some(n) = parse_generated_number(&generated) {
                break n;
            }
            if attempt < config.policy.max_retries {
                log::warn!("slot {k}: unusable generation {generated:?}, retrying");
                diagnostics.push(InferenceDiagnostic::Retry { slot: k, generated });
                attempt += 1;
                continue;
            }
            let assigned = state.fresh_number();
            log::warn!("slot {k}: falling back to fresh local {assigned}");
            diagnostics.push(InferenceDiagnostic::Fallback {
                slot: k,
                generated,
                assigned,
            });
            break assigned;
        };
        state.output.push_str(&number.to_string());
        state.assignments.push((k, number));
    }
    state.output.push_str(pieces[slots.len()]);
    state.next_slot = slots.len();

    Ok(InferenceOutcome {
        filled: state.output,
        assignments: state.assignments,
        calls,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::{MentionKind, MentionSpan, TokenId};
    use crate::framing::Frame;
    use crate::markup::{parse_filled, MaskSlot};

    fn tuple(text: &str, n: usize) -> InputTuple {
        let slots = (0..n)
            .map(|i| MaskSlot {
                index: i,
                span: MentionSpan::single(0, TokenId::word(i as u32 + 1)),
                kind: MentionKind::Overt,
            })
            .collect();
        InputTuple {
            instruction: "INST".into(),
            before: Frame {
                index: 0,
                sentences: 0..1,
                text: text.into(),
                slots,
            },
            after: None,
        }
    }

    const THREE: &str = "<m> a </m>#MASK b <m> c </m>#MASK <m> d </m>#MASK .";

    struct Recording {
        contexts: Vec<String>,
        replies: Vec<&'static str>,
    }

    impl PredictorBackend for Recording {
        fn complete(&mut self, q: &SlotQuery<'_>) -> Result<String, BackendError> {
            self.contexts.push(q.context.to_owned());
            Ok(self.replies[self.contexts.len() - 1].to_owned())
        }
    }

    #[test]
    fn zero_slots_no_calls() {
        let t = tuple("plain text .", 0);
        let mut b = ReplayBackend::new(Vec::<String>::new());
        let out = run_controlled_inference(&t, &mut b, &DecodeConfig::default()).unwrap();
        assert_eq!(out.filled, "plain text .");
        assert_eq!(out.calls, 0);
        assert!(out.assignments.is_empty());
    }

    #[test]
    fn replay_three_slots() {
        let t = tuple(THREE, 3);
        let mut b = ReplayBackend::new(["0", "1", "0"]);
        let out = run_controlled_inference(&t, &mut b, &DecodeConfig::default()).unwrap();
        assert_eq!(out.assignments, vec![(0, 0), (1, 1), (2, 0)]);
        assert_eq!(out.filled, "<m> a </m>#0 b <m> c </m>#1 <m> d </m>#0 .");
        assert_eq!(parse_filled(&out.filled, THREE).unwrap(), vec![0, 1, 0]);
        assert_eq!(out.calls, 3);
    }

    #[test]
    fn contexts_end_at_sentinel_and_carry_prior_decisions() {
        let t = tuple(THREE, 3);
        let mut b = Recording {
            contexts: vec![],
            replies: vec!["0", " 12 ", "3</m>"],
        };
        let out = run_controlled_inference(&t, &mut b, &DecodeConfig::default()).unwrap();
        assert_eq!(out.assignments, vec![(0, 0), (1, 12), (2, 3)]);
        let prefix = format!("INST\n\n{THREE}\n\n");
        assert_eq!(b.contexts[0], format!("{prefix}<m> a </m>#"));
        assert_eq!(b.contexts[1], format!("{prefix}<m> a </m>#0 b <m> c </m>#"));
        assert_eq!(
            b.contexts[2],
            format!("{prefix}<m> a </m>#0 b <m> c </m>#12 <m> d </m>#")
        );
    }

    #[test]
    fn fallback_without_retries() {
        let t = tuple(THREE, 3);
        let mut b = ReplayBackend::new(["0", "x", "1"]);
        let config = DecodeConfig {
            policy: ErrorPolicy { max_retries: 0 },
            ..Default::default()
        };
        let out = run_controlled_inference(&t, &mut b, &config).unwrap();
        assert_eq!(out.assignments, vec![(0, 0), (1, 1), (2, 1)]);
        assert_eq!(
            out.diagnostics,
            vec![InferenceDiagnostic::Fallback {
                slot: 1,
                generated: "x".into(),
                assigned: 1
            }]
        );
    }

    #[test]
    fn default_policy_retries() {
        let t = tuple("<m> a </m>#MASK <m> b </m>#MASK", 2);
        let mut b = ReplayBackend::new(["0", "x", "1"]);
        let out = run_controlled_inference(&t, &mut b, &DecodeConfig::default()).unwrap();
        assert_eq!(out.assignments, vec![(0, 0), (1, 1)]);
        assert_eq!(out.calls, 3);
        assert!(matches!(out.diagnostics[..], [InferenceDiagnostic::Retry { slot: 1, .. }]));
    }

    #[test]
    fn retries_then_fallback() {
        let t = tuple("<m> a </m>#MASK", 1);
        let mut b = ReplayBackend::new(["?", "?", "9999999"]);
        let out = run_controlled_inference(&t, &mut b, &DecodeConfig::default()).unwrap();
        assert_eq!(out.assignments, vec![(0, 0)]);
        assert_eq!(out.calls, 3);
        assert_eq!(out.diagnostics.len(), 3);
    }

    #[test]
    fn exhausted_backend_keeps_partial() {
        let t = tuple(THREE, 3);
        let mut b = ReplayBackend::new(["4"]);
        let err = run_controlled_inference(&t, &mut b, &DecodeConfig::default()).unwrap_err();
        assert_eq!(err.slot, 1);
        assert_eq!(err.partial, vec![(0, 4)]);
        assert!(matches!(err.source, BackendError::Exhausted));
    }

    #[test]
    fn surplus_script_is_unused() {
        let t = tuple("<m> a </m>#MASK", 1);
        let mut b = ReplayBackend::new(["2", "5", "6"]);
        let out = run_controlled_inference(&t, &mut b, &DecodeConfig::default()).unwrap();
        assert_eq!(out.assignments, vec![(0, 2)]);
        assert_eq!(b.remaining(), 2);
    }

    #[test]
    fn number_parsing_rule() {
        assert_eq!(parse_generated_number("0"), Some(0));
        assert_eq!(parse_generated_number(" 12 "), Some(12));
        assert_eq!(parse_generated_number("\n7abc"), Some(7));
        assert_eq!(parse_generated_number("1000000"), Some(1_000_000));
        assert_eq!(parse_generated_number("1000001"), None);
        assert_eq!(parse_generated_number("99999999999999999999999"), None);
        assert_eq!(parse_generated_number("x1"), None);
        assert_eq!(parse_generated_number(""), None);
        assert_eq!(parse_generated_number("-3"), None);
    }
}
