//! Masked mention markup.
//!
//! Overt mentions render as `<m> words </m>#MASK`, zero mentions as
//! `</z>@MASK` at the empty node's position. Every element is separated by
//! a single space. A filled output is the same text with each `MASK`
//! replaced by a non-negative integer.

use crate::conllu::{Mention, MentionKind, MentionSpan, Sentence};

pub const OPEN_TAG: &str = "<m>";
pub const OVERT_SENTINEL: &str = "</m>#";
pub const ZERO_SENTINEL: &str = "</z>@";
pub const MASK: &str = "MASK";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSlot {
    /// Position among the MASK tokens of the enclosing text.
    pub index: usize,
    pub span: MentionSpan,
    pub kind: MentionKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSentence {
    pub text: String,
    pub slots: Vec<MaskSlot>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MarkupError {
    #[error("mentions {0} and {1} cross")]
    Crossing(MentionSpan, MentionSpan),
    #[error("mention {0} is not inside sentence {1}")]
    OutsideSentence(MentionSpan, usize),
    #[error("token {0:?} contains reserved markup")]
    ReservedForm(String),
    #[error("slot {slot}: expected a number, found {found:?}")]
    NotANumber { slot: usize, found: String },
    #[error("slot {slot}: output text diverges from the masked input")]
    StructureMismatch { slot: usize },
    #[error("expected {expected} numbers, found {found}")]
    CountMismatch { expected: usize, found: usize },
}

fn mask_sentinels(kind: MentionKind) -> &'static str {
    match kind {
        MentionKind::Overt => "</m>#MASK",
        MentionKind::Zero => "</z>@MASK",
    }
}

/// Render `sentence` (at document index `sentence_index`) with `mentions` marked.
pub fn render_masked_sentence(
    sentence: &Sentence,
    sentence_index: usize,
    mentions: &[Mention],
) -> Result<MaskedSentence, MarkupError> {
    let n = sentence.tokens.len();
    let mut opens: Vec<Vec<&MentionSpan>> = vec![Vec::new(); n];
    let mut closes: Vec<Vec<&MentionSpan>> = vec![Vec::new(); n];
    let mut zeros: Vec<Option<&MentionSpan>> = vec![None; n];

    for m in mentions {
        let span = &m.span;
        let locate = |id| sentence.token_index(id);
        let (Some(s), Some(e)) = (locate(span.start), locate(span.end)) else {
            return Err(MarkupError::OutsideSentence(*span, sentence_index));
        };
        if span.sentence != sentence_index || s > e {
            return Err(MarkupError::OutsideSentence(*span, sentence_index));
        }
        match m.kind {
            MentionKind::Zero => zeros[s] = Some(span),
            MentionKind::Overt => {
                opens[s].push(span);
                closes[e].push(span);
            }
        }
    }
    for (i, a) in mentions.iter().enumerate() {
        for b in &mentions[i + 1..] {
            if a.span.crosses(&b.span) {
                return Err(MarkupError::Crossing(a.span, b.span));
            }
        }
    }

    let mut parts: Vec<&str> = Vec::with_capacity(n * 2);
    let mut slots = Vec::new();
    let mut push_slot = |span: &MentionSpan, kind, parts: &mut Vec<&str>| {
        parts.push(mask_sentinels(kind));
        slots.push(MaskSlot {
            index: slots.len(),
            span: *span,
            kind,
        });
    };
    for (i, token) in sentence.tokens.iter().enumerate() {
        // Longer spans open first.
        opens[i].sort_by_key(|s| std::cmp::Reverse(s.end));
        parts.extend(std::iter::repeat_n(OPEN_TAG, opens[i].len()));
        if let Some(span) = zeros[i] {
            push_slot(span, MentionKind::Zero, &mut parts);
        } else if !token.id.is_empty_node() {
            if token.form.contains("</m>#MASK") || token.form.contains("</z>@MASK") {
                return Err(MarkupError::ReservedForm(token.form.clone()));
            }
            parts.push(&token.form);
        }
        // Shorter spans close first.
        closes[i].sort_by_key(|s| std::cmp::Reverse(s.start));
        for span in &closes[i] {
            push_slot(span, MentionKind::Overt, &mut parts);
        }
    }
    Ok(MaskedSentence {
        text: parts.join(" "),
        slots,
    })
}

/// Byte offsets of each `MASK` in `text`, paired with its mention kind.
pub fn mask_positions(text: &str) -> Vec<(usize, MentionKind)> {
    let mut found = Vec::new();
    for (kind, pat) in [
        (MentionKind::Overt, "</m>#MASK"),
        (MentionKind::Zero, "</z>@MASK"),
    ] {
        found.extend(
            text.match_indices(pat)
                .map(|(i, _)| (i + pat.len() - MASK.len(), kind)),
        );
    }
    found.sort_unstable();
    found
}

/// Split masked text into the literal pieces around each MASK.
/// The result has one more piece than there are masks.
pub fn split_at_masks(text: &str) -> Vec<&str> {
    let mut pieces = Vec::new();
    let mut last = 0;
    for (pos, _) in mask_positions(text) {
        pieces.push(&text[last..pos]);
        last = pos + MASK.len();
    }
    pieces.push(&text[last..]);
    pieces
}

/// Replace the k-th MASK with `numbers[k]`.
pub fn fill_masks(text: &str, numbers: &[u32]) -> Result<String, MarkupError> {
    let pieces = split_at_masks(text);
    if pieces.len() - 1 != numbers.len() {
        return Err(MarkupError::CountMismatch {
            expected: pieces.len() - 1,
            found: numbers.len(),
        });
    }
    let mut out = String::with_capacity(text.len());
    for (piece, n) in pieces.iter().zip(numbers) {
        out.push_str(piece);
        out.push_str(&n.to_string());
    }
    out.push_str(pieces[pieces.len() - 1]);
    Ok(out)
}

/// Read the numbers out of `filled`, which must be `template` with every
/// MASK replaced by digits and nothing else changed.
pub fn parse_filled(filled: &str, template: &str) -> Result<Vec<u32>, MarkupError> {
    let pieces = split_at_masks(template);
    let mut rest = filled;
    let mut numbers = Vec::with_capacity(pieces.len() - 1);
    for (slot, piece) in pieces[..pieces.len() - 1].iter().enumerate() {
        rest = rest
            .strip_prefix(piece)
            .ok_or(MarkupError::StructureMismatch { slot })?;
        let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
        let value = rest[..digits].parse::<u32>().map_err(|_| {
            let found: String = rest.chars().take_while(|c| !c.is_whitespace()).collect();
            MarkupError::NotANumber { slot, found }
        })?;
        numbers.push(value);
        rest = &rest[digits..];
    }
    if rest != pieces[pieces.len() - 1] {
        return Err(MarkupError::StructureMismatch {
            slot: pieces.len() - 1,
        });
    }
    Ok(numbers)
}

/// Training target for one sentence: the masked text with gold numbers.
/// `numbers` pairs each mention with its cluster number.
pub fn render_output_sentence(
    sentence: &Sentence,
    sentence_index: usize,
    numbered: &[(Mention, Option<u32>)],
) -> Result<String, RenderOutputError> {
    let mentions: Vec<Mention> = numbered.iter().map(|(m, _)| m.clone()).collect();
    let masked = render_masked_sentence(sentence, sentence_index, &mentions)?;
    let numbers = masked
        .slots
        .iter()
        .map(|slot| {
            numbered
                .iter()
                .find(|(m, _)| m.span == slot.span)
                .and_then(|(_, n)| *n)
                .ok_or(RenderOutputError::MissingNumber(slot.span))
        })
        .collect::<Result<Vec<u32>, _>>()?;
    Ok(fill_masks(&masked.text, &numbers)?)
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RenderOutputError {
    #[error(transparent)]
    Markup(#[from] MarkupError),
    #[error("mention {0} has no cluster number")]
    MissingNumber(MentionSpan),
}

/// `(slot index, local cluster number)` pairs read from a filled sentence.
pub fn parse_filled_output(
    filled: &str,
    reference: &MaskedSentence,
) -> Result<Vec<(usize, u32)>, MarkupError> {
    let numbers = parse_filled(filled, &reference.text)?;
    if numbers.len() != reference.slots.len() {
        return Err(MarkupError::CountMismatch {
            expected: reference.slots.len(),
            found: numbers.len(),
        });
    }
    Ok(reference
        .slots
        .iter()
        .map(|s| s.index)
        .zip(numbers)
        .collect())
}
