use std::collections::{HashMap, VecDeque};

use crate::conllu::{extract_mentions, Document, EntityError, MentionSpan};
use crate::framing::{gold_local_numbers, InputTuple};
use crate::markup::MaskSlot;

/// Everything a predictor may look at for one slot. Model-backed predictors
/// only need `context`; test oracles use the slot metadata.
#[derive(Debug, Clone, Copy)]
pub struct SlotQuery<'a> {
    pub context: &'a str,
    pub max_new_tokens: usize,
    pub stop: &'a [&'a str],
    pub tuple: &'a InputTuple,
    /// Indexed within the tuple.
    pub slot: &'a MaskSlot,
    /// 0 on the first request for this slot, incremented on each retry.
    pub attempt: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("replay script exhausted")]
    Exhausted,
    #[error("slot {0} is not a gold mention")]
    UnknownSlot(MentionSpan),
    #[error("server answered with status {0}")]
    Status(u16),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed response body: {0}")]
    Malformed(String),
    #[error("{0}")]
    Other(String),
}

pub trait PredictorBackend {
    fn complete(&mut self, query: &SlotQuery<'_>) -> Result<String, BackendError>;
}

impl<F> PredictorBackend for F
where
    F: FnMut(&SlotQuery<'_>) -> Result<String, BackendError>,
{
    fn complete(&mut self, query: &SlotQuery<'_>) -> Result<String, BackendError> {
        self(query)
    }
}

/// Answers every slot with its gold local number, i.e. the same per-tuple
/// first-appearance numbering used for training targets.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    entity_of: HashMap<MentionSpan, String>,
}

impl OracleBackend {
    pub fn new(gold: &Document) -> Result<Self, EntityError> {
        let mentions = extract_mentions(gold)?;
        let entity_of = mentions
            .into_iter()
            .filter_map(|m| m.entity_id.map(|e| (m.span, e)))
            .collect();
        Ok(OracleBackend { entity_of })
    }

    pub fn from_index(entity_of: HashMap<MentionSpan, String>) -> Self {
        OracleBackend { entity_of }
    }

    pub fn from_mentions(mentions: &[crate::conllu::Mention]) -> Self {
        let entity_of = mentions
            .iter()
            .filter_map(|m| m.entity_id.clone().map(|e| (m.span, e)))
            .collect();
        OracleBackend { entity_of }
    }
}

impl PredictorBackend for OracleBackend {
    fn complete(&mut self, query: &SlotQuery<'_>) -> Result<String, BackendError> {
        let numbers = gold_local_numbers(query.tuple, &self.entity_of)
            .map_err(|_| BackendError::UnknownSlot(query.slot.span))?;
        numbers
            .get(query.slot.index)
            .map(u32::to_string)
            .ok_or(BackendError::UnknownSlot(query.slot.span))
    }
}

/// Returns scripted generations in order.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    script: VecDeque<String>,
}

impl ReplayBackend {
    pub fn new<I, S>(script: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ReplayBackend {
            script: script.into_iter().map(Into::into).collect(),
        }
    }

    /// One generation per line.
    pub fn from_lines(text: &str) -> Self {
        ReplayBackend::new(text.lines())
    }

    pub fn remaining(&self) -> usize {
        self.script.len()
    }
}

impl PredictorBackend for ReplayBackend {
    fn complete(&mut self, _query: &SlotQuery<'_>) -> Result<String, BackendError> {
        self.script.pop_front().ok_or(BackendError::Exhausted)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::parse_document;
    use crate::framing::{frame_document, Budgets};
    use crate::inference::{run_controlled_inference, DecodeConfig};

    #[test]
    fn oracle_single_mention_emits_zero() {
        let text = "# newdoc id = d\n# sent_id = 1\n1\tHi\t_\t_\t_\t_\t_\t_\t_\tEntity=(e9)\n\n";
        let doc = parse_document(text).unwrap().remove(0);
        let mentions = extract_mentions(&doc).unwrap();
        let framed = frame_document(&doc, mentions, "i", &Budgets::default()).unwrap();
        let mut oracle = OracleBackend::new(&doc).unwrap();
        let out =
            run_controlled_inference(&framed.tuples[0], &mut oracle, &DecodeConfig::default()).unwrap();
        assert_eq!(out.assignments, vec![(0, 0)]);
    }

    #[test]
    fn oracle_rejects_unknown_slot() {
        let text = "# newdoc id = d\n# sent_id = 1\n1\tHi\t_\t_\t_\t_\t_\t_\t_\tEntity=(e9)\n\n";
        let doc = parse_document(text).unwrap().remove(0);
        let mentions = extract_mentions(&doc).unwrap();
        let framed = frame_document(&doc, mentions, "i", &Budgets::default()).unwrap();
        let mut empty = OracleBackend::from_index(HashMap::new());
        let err = run_controlled_inference(&framed.tuples[0], &mut empty, &DecodeConfig::default())
            .unwrap_err();
        assert!(matches!(err.source, BackendError::UnknownSlot(_)));
    }

    #[test]
    fn replay_returns_in_order() {
        let mut r = ReplayBackend::from_lines("0\n1\n");
        assert_eq!(r.remaining(), 2);
        let slot = MaskSlot {
            index: 0,
            span: MentionSpan::single(0, crate::conllu::TokenId::word(1)),
            kind: crate::conllu::MentionKind::Overt,
        };
        let t = InputTuple {
            instruction: String::new(),
            before: crate::framing::Frame {
                index: 0,
                sentences: 0..0,
                text: String::new(),
                slots: vec![],
            },
            after: None,
        };
        let q = SlotQuery {
            context: "",
            max_new_tokens: 1,
            stop: &[],
            tuple: &t,
            slot: &slot,
            attempt: 0,
        };
        assert_eq!(r.complete(&q).unwrap(), "0");
        assert_eq!(r.complete(&q).unwrap(), "1");
        assert!(matches!(r.complete(&q), Err(BackendError::Exhausted)));
    }
}
