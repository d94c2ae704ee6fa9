//! Reading and writing the bracketed `Entity` MISC attribute.
//!
//! Items are `(eid` (open), `eid)` (close) and `(eid)` (single token).
//! Open items may carry `-`-separated fields after the id; those stay in
//! the untouched MISC column on read and are not emitted on write.

use std::collections::{BTreeSet, HashMap};

use super::{kind_of, Document, Mention, MentionSpan, TokenId};

pub(crate) const ENTITY_KEY: &str = "Entity";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EntityError {
    #[error("sentence {sentence}, token {token}: unreadable Entity value {value:?}")]
    Malformed {
        sentence: usize,
        token: TokenId,
        value: String,
    },
    #[error("sentence {sentence}, token {token}: {entity} closes before it opens")]
    CloseBeforeOpen {
        sentence: usize,
        token: TokenId,
        entity: String,
    },
    #[error("entity {entity} opens in sentence {opened} but closes in sentence {closed}")]
    CrossSentence {
        entity: String,
        opened: usize,
        closed: usize,
    },
    #[error("unclosed mentions at end of document for entities {0:?}")]
    Unbalanced(Vec<String>),
    #[error("duplicate mention at {0}")]
    Duplicate(MentionSpan),
    #[error("crossing mentions {0} and {1} cannot be written")]
    Crossing(MentionSpan, MentionSpan),
    #[error("mention {0} does not exist in the document")]
    InvalidSpan(MentionSpan),
    #[error("mention {0} has no entity id")]
    Unresolved(MentionSpan),
    #[error("entity id {0:?} is not a valid label")]
    InvalidLabel(String),
}

#[derive(Debug, PartialEq, Eq)]
enum Item<'a> {
    Open { eid: &'a str, part: Option<u32> },
    Close { eid: &'a str, part: Option<u32> },
    Single { eid: &'a str, part: Option<u32> },
}

fn is_eid_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Parses `[i/n]` after an entity id, returning the part index.
fn read_part(bytes: &[u8], pos: &mut usize) -> Result<Option<u32>, ()> {
    if bytes.get(*pos) != Some(&b'[') {
        return Ok(None);
    }
    let close = bytes[*pos..].iter().position(|&b| b == b']').ok_or(())? + *pos;
    let inner = std::str::from_utf8(&bytes[*pos + 1..close]).map_err(|_| ())?;
    let (i, n) = inner.split_once('/').ok_or(())?;
    let i: u32 = i.parse().map_err(|_| ())?;
    let _: u32 = n.parse().map_err(|_| ())?;
    *pos = close + 1;
    Ok(Some(i))
}

fn tokenize(value: &str) -> Result<Vec<Item<'_>>, ()> {
    let bytes = value.as_bytes();
    let mut items = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let opening = bytes[pos] == b'(';
        if opening {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && is_eid_byte(bytes[pos]) {
            pos += 1;
        }
        if pos == start {
            return Err(());
        }
        let eid = &value[start..pos];
        let part = read_part(bytes, &mut pos)?;
        if opening {
            if bytes.get(pos) == Some(&b'-') {
                while pos < bytes.len() && bytes[pos] != b'(' && bytes[pos] != b')' {
                    pos += 1;
                }
            }
            if bytes.get(pos) == Some(&b')') {
                pos += 1;
                items.push(Item::Single { eid, part });
            } else {
                items.push(Item::Open { eid, part });
            }
        } else {
            if bytes.get(pos) != Some(&b')') {
                return Err(());
            }
            pos += 1;
            items.push(Item::Close { eid, part });
        }
    }
    Ok(items)
}

/// Mentions plus any read-time diagnostics (dropped crossing mentions,
/// truncated discontinuous mentions).
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Extraction {
    pub mentions: Vec<Mention>,
    pub diagnostics: Vec<String>,
}

pub fn extract_mentions(doc: &Document) -> Result<Vec<Mention>, EntityError> {
    let extraction = extract_mentions_with_diagnostics(doc)?;
    for d in &extraction.diagnostics {
        log::warn!("{}: {}", doc.doc_id, d);
    }
    Ok(extraction.mentions)
}

pub fn extract_mentions_with_diagnostics(doc: &Document) -> Result<Extraction, EntityError> {
    let mut open: HashMap<&str, Vec<(usize, TokenId)>> = HashMap::new();
    let mut mentions: Vec<Mention> = Vec::new();
    let mut diagnostics = Vec::new();

    for (si, sentence) in doc.sentences.iter().enumerate() {
        for token in &sentence.tokens {
            let Some(value) = token.misc_value(ENTITY_KEY) else {
                continue;
            };
            let items = tokenize(value).map_err(|_| EntityError::Malformed {
                sentence: si,
                token: token.id,
                value: value.to_owned(),
            })?;
            for item in items {
                let part = match item {
                    Item::Open { part, .. } | Item::Close { part, .. } | Item::Single { part, .. } => part,
                };
                if matches!(part, Some(p) if p > 1) {
                    if matches!(item, Item::Open { .. } | Item::Single { .. }) {
                        diagnostics.push(format!(
                            "discontinuous mention part at s{}:{} dropped; only the first part is kept",
                            si, token.id
                        ));
                    }
                    continue;
                }
                match item {
                    Item::Single { eid, .. } => {
                        mentions.push(Mention::new(eid, MentionSpan::single(si, token.id)));
                    }
                    Item::Open { eid, .. } => open.entry(eid).or_default().push((si, token.id)),
                    Item::Close { eid, .. } => {
                        let (osi, start) = open
                            .get_mut(eid)
                            .and_then(Vec::pop)
                            .ok_or_else(|| EntityError::CloseBeforeOpen {
                                sentence: si,
                                token: token.id,
                                entity: eid.to_owned(),
                            })?;
                        if osi != si {
                            return Err(EntityError::CrossSentence {
                                entity: eid.to_owned(),
                                opened: osi,
                                closed: si,
                            });
                        }
                        mentions.push(Mention::new(eid, MentionSpan::new(si, start, token.id)));
                    }
                }
            }
        }
    }

    let mut unmatched: Vec<String> = open
        .into_iter()
        .filter(|(_, stack)| !stack.is_empty())
        .map(|(eid, _)| eid.to_owned())
        .collect();
    if !unmatched.is_empty() {
        unmatched.sort();
        return Err(EntityError::Unbalanced(unmatched));
    }

    mentions.sort_by_key(|m| m.span);
    if let Some(w) = mentions.windows(2).find(|w| w[0].span == w[1].span) {
        return Err(EntityError::Duplicate(w[0].span));
    }

    let mut kept: Vec<Mention> = Vec::with_capacity(mentions.len());
    for m in mentions {
        if let Some(other) = kept.iter().find(|k| k.span.crosses(&m.span)) {
            diagnostics.push(format!(
                "crossing mention {} dropped (crosses {})",
                m.span, other.span
            ));
            continue;
        }
        kept.push(m);
    }
    Ok(Extraction {
        mentions: kept,
        diagnostics,
    })
}

pub(crate) fn is_valid_label(label: &str) -> bool {
    !label.is_empty() && label.bytes().all(is_eid_byte)
}

/// Check the mention set can be written: labels, spans, duplicates, crossings.
pub(crate) fn validate(doc: &Document, mentions: &[Mention]) -> Result<(), EntityError> {
    let mut seen = BTreeSet::new();
    for m in mentions {
        let label = m
            .entity_id
            .as_deref()
            .ok_or(EntityError::Unresolved(m.span))?;
        if !is_valid_label(label) {
            return Err(EntityError::InvalidLabel(label.to_owned()));
        }
        let sentence = doc
            .sentences
            .get(m.span.sentence)
            .ok_or(EntityError::InvalidSpan(m.span))?;
        if m.span.start > m.span.end
            || sentence.token_index(m.span.start).is_none()
            || sentence.token_index(m.span.end).is_none()
        {
            return Err(EntityError::InvalidSpan(m.span));
        }
        if !seen.insert(m.span) {
            return Err(EntityError::Duplicate(m.span));
        }
    }
    let sorted: Vec<&MentionSpan> = seen.iter().collect();
    for (i, a) in sorted.iter().enumerate() {
        for b in &sorted[i + 1..] {
            if b.sentence != a.sentence || b.start > a.end {
                break;
            }
            if a.crosses(b) {
                return Err(EntityError::Crossing(**a, **b));
            }
        }
    }
    Ok(())
}

/// Replace all `Entity` attributes in `doc` with ones encoding `mentions`.
pub fn write_entities(doc: &Document, mentions: &[Mention]) -> Result<Document, EntityError> {
    validate(doc, mentions)?;

    // Per token: opens (outer first), single, closes (inner first).
    type Slot<'a> = (Vec<(TokenId, &'a str)>, Option<&'a str>, Vec<(TokenId, &'a str)>);
    let mut per_token: HashMap<(usize, TokenId), Slot<'_>> = HashMap::new();
    for m in mentions {
        let label = m.entity_id.as_deref().unwrap_or_default();
        let span = m.span;
        if span.start == span.end {
            per_token.entry((span.sentence, span.start)).or_default().1 = Some(label);
        } else {
            per_token
                .entry((span.sentence, span.start))
                .or_default()
                .0
                .push((span.end, label));
            per_token
                .entry((span.sentence, span.end))
                .or_default()
                .2
                .push((span.start, label));
        }
    }

    let mut out = doc.clone();
    for (si, sentence) in out.sentences.iter_mut().enumerate() {
        for token in &mut sentence.tokens {
            let value = per_token.get_mut(&(si, token.id)).map(|(opens, single, closes)| {
                opens.sort_by_key(|o| std::cmp::Reverse(o.0));
                closes.sort_by_key(|c| std::cmp::Reverse(c.0));
                let mut v = String::new();
                for (_, l) in opens.iter() {
                    v.push('(');
                    v.push_str(l);
                }
                if let Some(l) = single {
                    v.push('(');
                    v.push_str(l);
                    v.push(')');
                }
                for (_, l) in closes.iter() {
                    v.push_str(l);
                    v.push(')');
                }
                v
            });
            let existing = token
                .misc
                .iter()
                .position(|item| item.split_once('=').map(|(k, _)| k) == Some(ENTITY_KEY));
            match (existing, value) {
                (Some(i), Some(v)) => token.misc[i] = format!("{ENTITY_KEY}={v}"),
                (Some(i), None) => {
                    token.misc.remove(i);
                }
                (None, Some(v)) => token.misc.push(format!("{ENTITY_KEY}={v}")),
                (None, None) => {}
            }
        }
    }
    debug_assert!(mentions.iter().all(|m| m.kind == kind_of(&m.span)));
    Ok(out)
}
