//! Instruction-driven coreference resolution: CoNLL-U/CorefUD I/O, mention
//! markup, document framing, controlled slot-only inference, cross-tuple
//! cluster merging and standard coreference scoring.

pub mod conllu;
pub mod framing;
pub mod inference;
pub mod instructions;
pub mod markup;
pub mod merge;
pub mod pipeline;
pub mod scorer;
