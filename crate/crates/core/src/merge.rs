//! Merging per-tuple local cluster numbers into document-global clusters.
//!
//! Local numbers are only comparable inside one tuple. Because tuple k's
//! first frame is tuple k-1's second frame, the globals already recorded
//! for that shared frame translate tuple k's locals into globals; locals
//! first seen in the second frame open new global clusters.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::conllu::{write_entities, Document, EntityError, Mention, MentionSpan};
use crate::framing::Frame;

/// `(mention position, local number)` for one frame of one tuple.
pub type FrameAssignments = Vec<(MentionSpan, u32)>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GlobalClusterMap {
    clusters: BTreeMap<MentionSpan, usize>,
    next_fresh: usize,
}

impl GlobalClusterMap {
    pub fn get(&self, span: &MentionSpan) -> Option<usize> {
        self.clusters.get(span).copied()
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn next_fresh(&self) -> usize {
        self.next_fresh
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MentionSpan, &usize)> {
        self.clusters.iter()
    }

    fn fresh(&mut self) -> usize {
        let n = self.next_fresh;
        self.next_fresh += 1;
        n
    }

    /// Mention sets per global number, in number order.
    pub fn clusters(&self) -> Vec<Vec<MentionSpan>> {
        let mut grouped: BTreeMap<usize, Vec<MentionSpan>> = BTreeMap::new();
        for (span, &g) in &self.clusters {
            grouped.entry(g).or_default().push(*span);
        }
        grouped.into_values().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MergeDiagnostic {
    /// Two before-frame mentions shared a local number but held different
    /// globals; the later mention's global won.
    LocalConflict {
        tuple: usize,
        local: u32,
        kept: usize,
        dropped: usize,
    },
}

impl std::fmt::Display for MergeDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MergeDiagnostic::LocalConflict {
                tuple,
                local,
                kept,
                dropped,
            } => write!(
                f,
                "tuple {tuple}: local {local} maps to globals {dropped} and {kept}; using {kept}"
            ),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MergeError {
    #[error("mention {0} appears twice in one frame")]
    DuplicatePosition(MentionSpan),
    #[error("tuple {tuple}: before-frame mention {span} has no global cluster")]
    MissingBefore { tuple: usize, span: MentionSpan },
    #[error("tuple {tuple}: first frame does not match the previous tuple's second frame")]
    OverlapViolation { tuple: usize },
}

fn check_unique(frame: &[(MentionSpan, u32)]) -> Result<(), MergeError> {
    let mut seen = BTreeSet::new();
    for (span, _) in frame {
        if !seen.insert(*span) {
            return Err(MergeError::DuplicatePosition(*span));
        }
    }
    Ok(())
}

/// Each distinct local number, in order of first appearance, opens a new global.
pub fn seed_global(first_frame: &[(MentionSpan, u32)]) -> Result<GlobalClusterMap, MergeError> {
    check_unique(first_frame)?;
    let mut globals = GlobalClusterMap::default();
    let mut map: HashMap<u32, usize> = HashMap::new();
    for (span, local) in first_frame {
        let g = match map.get(local) {
            Some(&g) => g,
            None => {
                let g = globals.fresh();
                map.insert(*local, g);
                g
            }
        };
        globals.clusters.insert(*span, g);
    }
    Ok(globals)
}

/// One step of the merge for tuple `tuple`.
pub fn merge_tuple(
    globals: &mut GlobalClusterMap,
    tuple: usize,
    before: &[(MentionSpan, u32)],
    after: &[(MentionSpan, u32)],
) -> Result<Vec<MergeDiagnostic>, MergeError> {
    check_unique(before)?;
    check_unique(after)?;
    let mut diagnostics = Vec::new();
    let mut map: HashMap<u32, usize> = HashMap::new();
    for (span, local) in before {
        let g = globals
            .get(span)
            .ok_or(MergeError::MissingBefore { tuple, span: *span })?;
        if let Some(previous) = map.insert(*local, g) {
            if previous != g {
                log::warn!("tuple {tuple}: local {local} seen with globals {previous} and {g}");
                diagnostics.push(MergeDiagnostic::LocalConflict {
                    tuple,
                    local: *local,
                    kept: g,
                    dropped: previous,
                });
            }
        }
    }
    for (span, local) in after {
        let g = match map.get(local) {
            Some(&g) => g,
            None => {
                // Already placed by an earlier pass over this same tuple.
                let g = match globals.get(span) {
                    Some(g) => g,
                    None => globals.fresh(),
                };
                map.insert(*local, g);
                g
            }
        };
        globals.clusters.insert(*span, g);
    }
    Ok(diagnostics)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MergeResult {
    pub globals: GlobalClusterMap,
    pub diagnostics: Vec<MergeDiagnostic>,
}

/// Seed from tuple 0's first frame, then merge every tuple in order.
pub fn merge_document(
    per_tuple: &[(FrameAssignments, Option<FrameAssignments>)],
) -> Result<MergeResult, MergeError> {
    let Some((first, _)) = per_tuple.first() else {
        return Ok(MergeResult::default());
    };
    let mut globals = seed_global(first)?;
    let mut diagnostics = Vec::new();
    for (k, (before, after)) in per_tuple.iter().enumerate() {
        if k > 0 {
            let previous = per_tuple[k - 1].1.as_deref().unwrap_or_default();
            let same = previous.len() == before.len()
                && previous.iter().zip(before).all(|(a, b)| a.0 == b.0);
            if !same {
                return Err(MergeError::OverlapViolation { tuple: k });
            }
        }
        let after = after.as_deref().unwrap_or_default();
        diagnostics.extend(merge_tuple(&mut globals, k, before, after)?);
    }
    Ok(MergeResult {
        globals,
        diagnostics,
    })
}

/// Rewrite the document's Entity attributes with `e<global>` labels.
pub fn apply_to_document(doc: &Document, globals: &GlobalClusterMap) -> Result<Document, EntityError> {
    let mentions: Vec<Mention> = globals
        .iter()
        .map(|(span, g)| Mention::new(format!("e{g}"), *span))
        .collect();
    write_entities(doc, &mentions)
}

/// An entity whose mentions skip one or more whole frames. The merge cannot
/// carry its cluster across the gap, so it ends up split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainBreak {
    pub entity: String,
    pub last_frame: usize,
    pub next_frame: usize,
}

impl std::fmt::Display for ChainBreak {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "entity {} has mentions in frames {} and {} but none in between; its cluster will split",
            self.entity, self.last_frame, self.next_frame
        )
    }
}

pub fn find_chain_breaks(
    frames: &[Frame],
    entity_of: &HashMap<MentionSpan, String>,
) -> Vec<ChainBreak> {
    let mut frames_of: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for frame in frames {
        for slot in &frame.slots {
            if let Some(e) = entity_of.get(&slot.span) {
                frames_of.entry(e).or_default().insert(frame.index);
            }
        }
    }
    let mut breaks = Vec::new();
    for (entity, seen) in frames_of {
        let seen: Vec<usize> = seen.into_iter().collect();
        for w in seen.windows(2) {
            if w[1] > w[0] + 1 {
                breaks.push(ChainBreak {
                    entity: entity.to_owned(),
                    last_frame: w[0],
                    next_frame: w[1],
                });
            }
        }
    }
    breaks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::TokenId;

    fn at(s: usize, w: u32) -> MentionSpan {
        MentionSpan::single(s, TokenId::word(w))
    }

    #[test]
    fn seed_first_appearance() {
        let jake1 = at(0, 1);
        let amy = at(0, 3);
        let jake2 = at(0, 5);
        let g = seed_global(&[(jake1, 0), (amy, 1), (jake2, 0)]).unwrap();
        assert_eq!(g.get(&jake1), Some(0));
        assert_eq!(g.get(&amy), Some(1));
        assert_eq!(g.get(&jake2), Some(0));
        assert_eq!(g.next_fresh(), 2);
    }

    #[test]
    fn seed_empty_and_transitive() {
        let g = seed_global(&[]).unwrap();
        assert!(g.is_empty());
        assert_eq!(g.next_fresh(), 0);
        let g = seed_global(&[(at(0, 1), 0), (at(0, 2), 0), (at(0, 3), 0)]).unwrap();
        assert_eq!(g.clusters(), vec![vec![at(0, 1), at(0, 2), at(0, 3)]]);
        assert_eq!(
            seed_global(&[(at(0, 1), 0), (at(0, 1), 1)]),
            Err(MergeError::DuplicatePosition(at(0, 1)))
        );
    }

    /// Jake/Amy/He/her mother across three one-sentence frames.
    fn example_tuples() -> Vec<(FrameAssignments, Option<FrameAssignments>)> {
        let (jake1, amy1, jake2) = (at(0, 1), at(0, 3), at(0, 6));
        let (he, amy2) = (at(1, 1), at(1, 4));
        let (amy3, mother) = (at(2, 1), at(2, 5));
        vec![
            (
                vec![(jake1, 0), (amy1, 1), (jake2, 0)],
                Some(vec![(he, 0), (amy2, 1)]),
            ),
            // Local numbers restart per tuple; Amy is 0 here.
            (
                vec![(he, 1), (amy2, 0)],
                Some(vec![(amy3, 0), (mother, 2)]),
            ),
        ]
    }

    #[test]
    fn three_frame_merge_example() {
        let merged = merge_document(&example_tuples()).unwrap();
        let g = &merged.globals;
        assert_eq!(
            g.clusters(),
            vec![
                vec![at(0, 1), at(0, 6), at(1, 1)],
                vec![at(0, 3), at(1, 4), at(2, 1)],
                vec![at(2, 5)],
            ]
        );
        assert_eq!(g.get(&at(2, 5)), Some(2));
        assert!(merged.diagnostics.is_empty());
    }

    #[test]
    fn after_inherits_and_fresh() {
        let (a, b, c, d) = (at(0, 1), at(0, 2), at(1, 1), at(1, 2));
        let mut g = seed_global(&[(a, 0), (b, 1)]).unwrap();
        merge_tuple(&mut g, 0, &[(a, 0), (b, 1)], &[(c, 1), (d, 7)]).unwrap();
        assert_eq!(g.get(&c), Some(1));
        assert_eq!(g.get(&d), Some(2));
        assert_eq!(g.next_fresh(), 3);
    }

    #[test]
    fn empty_after_changes_nothing() {
        let mut g = seed_global(&[(at(0, 1), 0)]).unwrap();
        let before = g.clone();
        merge_tuple(&mut g, 0, &[(at(0, 1), 0)], &[]).unwrap();
        assert_eq!(g, before);
    }

    #[test]
    fn remerge_is_idempotent() {
        let tuples = example_tuples();
        let mut merged = merge_document(&tuples).unwrap().globals;
        let snapshot = merged.clone();
        for (k, (b, a)) in tuples.iter().enumerate() {
            merge_tuple(&mut merged, k, b, a.as_deref().unwrap_or_default()).unwrap();
        }
        assert_eq!(merged, snapshot);
    }

    #[test]
    fn conflicting_before_takes_latest() {
        let (a, b, c) = (at(0, 1), at(0, 2), at(1, 1));
        let mut g = seed_global(&[(a, 0), (b, 1)]).unwrap();
        let diags = merge_tuple(&mut g, 3, &[(a, 5), (b, 5)], &[(c, 5)]).unwrap();
        assert_eq!(g.get(&c), Some(1));
        assert_eq!(
            diags,
            vec![MergeDiagnostic::LocalConflict {
                tuple: 3,
                local: 5,
                kept: 1,
                dropped: 0
            }]
        );
    }

    #[test]
    fn missing_before_is_a_chain_integrity_error() {
        let mut g = GlobalClusterMap::default();
        assert_eq!(
            merge_tuple(&mut g, 2, &[(at(0, 1), 0)], &[]),
            Err(MergeError::MissingBefore {
                tuple: 2,
                span: at(0, 1)
            })
        );
    }

    #[test]
    fn overlap_violation_names_tuple() {
        let mut tuples = example_tuples();
        tuples[1].0[0].0 = at(1, 2);
        assert_eq!(
            merge_document(&tuples),
            Err(MergeError::OverlapViolation { tuple: 1 })
        );
    }

    #[test]
    fn single_degenerate_tuple_equals_seed() {
        let frame = vec![(at(0, 1), 3), (at(0, 2), 1), (at(0, 3), 3)];
        let merged = merge_document(&[(frame.clone(), None)]).unwrap();
        assert_eq!(merged.globals, seed_global(&frame).unwrap());
        assert_eq!(merge_document(&[]).unwrap(), MergeResult::default());
    }
}
