//! Length-budgeted frames and overlapping two-frame input tuples.
//!
//! Frames are greedy, sentence-aligned packs of masked sentences. Tuple k
//! pairs frame k with frame k+1, so consecutive tuples share a frame; a
//! document that fits in one frame yields a single tuple without `[MID]`.

use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::conllu::{extract_mentions, Document, EntityError, Mention, MentionSpan};
use crate::instructions::{render_instruction, InstructionSpec, UnknownInstruction};
use crate::markup::{fill_masks, render_masked_sentence, MarkupError, MaskSlot, MaskedSentence};

pub const MID_SEPARATOR: &str = " [MID] ";

/// How text length is measured against the budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LengthUnit {
    /// Whitespace-separated tokens.
    #[default]
    Words,
    /// Unicode scalar values.
    Chars,
}

impl LengthUnit {
    pub fn measure(self, text: &str) -> usize {
        match self {
            LengthUnit::Words => text.split_whitespace().count(),
            LengthUnit::Chars => text.chars().count(),
        }
    }
}

impl std::str::FromStr for LengthUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "words" | "whitespace" => Ok(LengthUnit::Words),
            "chars" => Ok(LengthUnit::Chars),
            other => Err(format!("unknown length unit {other:?} (expected words or chars)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budgets {
    pub frame: usize,
    pub tuple: usize,
    pub unit: LengthUnit,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            frame: 1600,
            tuple: 7168,
            unit: LengthUnit::Words,
        }
    }
}

impl Budgets {
    /// The tuple budget must hold two full frames, the separator and the instruction.
    pub fn validate(&self, instruction: &str) -> Result<(), FramingError> {
        if self.frame == 0 || self.tuple == 0 {
            return Err(FramingError::ZeroBudget);
        }
        let needed = 2 * self.frame
            + self.unit.measure(MID_SEPARATOR)
            + self.unit.measure(instruction);
        if self.tuple < needed {
            return Err(FramingError::BudgetsInconsistent {
                tuple: self.tuple,
                needed,
            });
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FramingError {
    #[error("budgets must be positive")]
    ZeroBudget,
    #[error("tuple budget {tuple} is below the {needed} needed for two frames plus the instruction")]
    BudgetsInconsistent { tuple: usize, needed: usize },
    #[error("sentence {sentence} has length {length}, over the frame budget {budget}")]
    SentenceTooLong {
        sentence: usize,
        length: usize,
        budget: usize,
    },
    #[error("tuple of frames {before} and {after:?} has length {length}, over the tuple budget {budget}; lower the frame budget")]
    TupleTooLong {
        before: usize,
        after: Option<usize>,
        length: usize,
        budget: usize,
    },
    #[error("no frames to build tuples from")]
    NoFrames,
    #[error("mention {0} has no entity id")]
    MissingEntity(MentionSpan),
    #[error(transparent)]
    Markup(#[from] MarkupError),
    #[error(transparent)]
    Entity(#[from] EntityError),
    #[error(transparent)]
    Instruction(#[from] UnknownInstruction),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub index: usize,
    pub sentences: Range<usize>,
    pub text: String,
    /// Indexed from 0 within this frame.
    pub slots: Vec<MaskSlot>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputTuple {
    pub instruction: String,
    pub before: Frame,
    pub after: Option<Frame>,
}

impl InputTuple {
    /// `before [MID] after`, or just `before` for a single-frame document.
    pub fn input_text(&self) -> String {
        match &self.after {
            Some(after) => format!("{}{}{}", self.before.text, MID_SEPARATOR, after.text),
            None => self.before.text.clone(),
        }
    }

    /// All slots in textual order, indexed across both frames.
    pub fn slots(&self) -> Vec<MaskSlot> {
        let after = self.after.iter().flat_map(|f| f.slots.iter());
        self.before
            .slots
            .iter()
            .chain(after)
            .enumerate()
            .map(|(index, s)| MaskSlot { index, ..s.clone() })
            .collect()
    }

    pub fn slot_count(&self) -> usize {
        self.before.slots.len() + self.after.as_ref().map_or(0, |f| f.slots.len())
    }

    /// Instruction plus input, the part of the tuple the model reads before generating.
    pub fn length(&self, measure: impl Fn(&str) -> usize) -> usize {
        measure(&self.instruction) + measure(&self.input_text())
    }
}

/// Masked rendering of every sentence of `doc`.
pub fn mask_document(doc: &Document, mentions: &[Mention]) -> Result<Vec<MaskedSentence>, MarkupError> {
    let mut per_sentence: Vec<Vec<Mention>> = vec![Vec::new(); doc.sentences.len()];
    for m in mentions {
        match per_sentence.get_mut(m.span.sentence) {
            Some(list) => list.push(m.clone()),
            None => return Err(MarkupError::OutsideSentence(m.span, m.span.sentence)),
        }
    }
    doc.sentences
        .iter()
        .zip(&per_sentence)
        .enumerate()
        .map(|(i, (s, ms))| render_masked_sentence(s, i, ms))
        .collect()
}

fn join_text(parts: &[&MaskedSentence]) -> String {
    parts
        .iter()
        .map(|m| m.text.as_str())
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn make_frame(index: usize, start: usize, parts: &[&MaskedSentence]) -> Frame {
    let slots = parts
        .iter()
        .flat_map(|m| m.slots.iter())
        .enumerate()
        .map(|(i, s)| MaskSlot { index: i, ..s.clone() })
        .collect();
    Frame {
        index,
        sentences: start..start + parts.len(),
        text: join_text(parts),
        slots,
    }
}

/// Greedy sentence-aligned packing. An empty document yields one empty frame.
pub fn build_frames(
    masked: &[MaskedSentence],
    frame_budget: usize,
    measure: impl Fn(&str) -> usize,
) -> Result<Vec<Frame>, FramingError> {
    if frame_budget == 0 {
        return Err(FramingError::ZeroBudget);
    }
    let mut frames = Vec::new();
    let mut start = 0;
    let mut current: Vec<&MaskedSentence> = Vec::new();
    for (i, sentence) in masked.iter().enumerate() {
        let alone = measure(&sentence.text);
        if alone > frame_budget {
            return Err(FramingError::SentenceTooLong {
                sentence: i,
                length: alone,
                budget: frame_budget,
            });
        }
        current.push(sentence);
        if current.len() > 1 && measure(&join_text(&current)) > frame_budget {
            current.pop();
            frames.push(make_frame(frames.len(), start, &current));
            start = i;
            current = vec![sentence];
        }
    }
    if !current.is_empty() || frames.is_empty() {
        frames.push(make_frame(frames.len(), start, &current));
    }
    Ok(frames)
}

pub fn build_tuples(
    frames: &[Frame],
    instruction: &str,
    tuple_budget: usize,
    measure: impl Fn(&str) -> usize,
) -> Result<Vec<InputTuple>, FramingError> {
    let tuples: Vec<InputTuple> = match frames {
        [] => return Err(FramingError::NoFrames),
        [only] => vec![InputTuple {
            instruction: instruction.to_owned(),
            before: only.clone(),
            after: None,
        }],
        _ => frames
            .windows(2)
            .map(|w| InputTuple {
                instruction: instruction.to_owned(),
                before: w[0].clone(),
                after: Some(w[1].clone()),
            })
            .collect(),
    };
    for t in &tuples {
        let length = t.length(&measure);
        if length > tuple_budget {
            return Err(FramingError::TupleTooLong {
                before: t.before.index,
                after: t.after.as_ref().map(|f| f.index),
                length,
                budget: tuple_budget,
            });
        }
    }
    Ok(tuples)
}

/// A document cut into frames and tuples, ready for export or inference.
#[derive(Debug, Clone)]
pub struct FramedDocument {
    pub mentions: Vec<Mention>,
    pub frames: Vec<Frame>,
    pub tuples: Vec<InputTuple>,
}

pub fn frame_document(
    doc: &Document,
    mentions: Vec<Mention>,
    instruction: &str,
    budgets: &Budgets,
) -> Result<FramedDocument, FramingError> {
    let measure = |s: &str| budgets.unit.measure(s);
    let masked = mask_document(doc, &mentions)?;
    let frames = build_frames(&masked, budgets.frame, measure)?;
    let tuples = build_tuples(&frames, instruction, budgets.tuple, measure)?;
    Ok(FramedDocument {
        mentions,
        frames,
        tuples,
    })
}

/// Dense numbering by first appearance: the first label seen gets 0, the next new one 1, ...
pub fn first_appearance_numbers<'a>(labels: impl IntoIterator<Item = &'a str>) -> Vec<u32> {
    let mut seen: HashMap<&str, u32> = HashMap::new();
    labels
        .into_iter()
        .map(|l| {
            let next = seen.len() as u32;
            *seen.entry(l).or_insert(next)
        })
        .collect()
}

/// Gold local numbers for every slot of `tuple`, in slot order.
pub fn gold_local_numbers(
    tuple: &InputTuple,
    entity_of: &HashMap<MentionSpan, String>,
) -> Result<Vec<u32>, FramingError> {
    let slots = tuple.slots();
    let labels = slots
        .iter()
        .map(|s| {
            entity_of
                .get(&s.span)
                .map(String::as_str)
                .ok_or(FramingError::MissingEntity(s.span))
        })
        .collect::<Result<Vec<&str>, _>>()?;
    Ok(first_appearance_numbers(labels))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
}

pub fn entity_index(mentions: &[Mention]) -> Result<HashMap<MentionSpan, String>, FramingError> {
    mentions
        .iter()
        .map(|m| {
            m.entity_id
                .clone()
                .map(|e| (m.span, e))
                .ok_or(FramingError::MissingEntity(m.span))
        })
        .collect()
}

pub fn export_training_tuples(
    doc: &Document,
    spec: &InstructionSpec,
    budgets: &Budgets,
) -> Result<Vec<TrainingRecord>, FramingError> {
    let instruction = render_instruction(spec)?;
    let mentions = extract_mentions(doc)?;
    let entity_of = entity_index(&mentions)?;
    let framed = frame_document(doc, mentions, &instruction, budgets)?;
    framed
        .tuples
        .iter()
        .map(|t| {
            let input = t.input_text();
            let numbers = gold_local_numbers(t, &entity_of)?;
            let output = fill_masks(&input, &numbers)?;
            Ok(TrainingRecord {
                instruction: instruction.clone(),
                input,
                output,
            })
        })
        .collect()
}
