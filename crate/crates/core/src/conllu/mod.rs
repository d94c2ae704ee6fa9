//! CoNLL-U documents with CorefUD-style `Entity` annotations.
//!
//! Only FORM and MISC are interpreted. Every other column, every comment
//! line and every multiword-token line is carried verbatim so that
//! `serialize_document(parse_document(x))` reproduces `x` byte for byte.

mod entity;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

pub use entity::{extract_mentions, extract_mentions_with_diagnostics, write_entities, EntityError, Extraction};

/// Position of a node within a sentence: `n` for a word, `n.m` for an empty node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenId {
    pub word_index: u32,
    /// `None` sorts before `Some`, so `n < n.1 < n.2 < n+1`.
    pub empty_sub_index: Option<u32>,
}

impl TokenId {
    pub fn word(word_index: u32) -> Self {
        TokenId {
            word_index,
            empty_sub_index: None,
        }
    }

    pub fn empty(word_index: u32, sub: u32) -> Self {
        TokenId {
            word_index,
            empty_sub_index: Some(sub),
        }
    }

    pub fn is_empty_node(&self) -> bool {
        self.empty_sub_index.is_some()
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.empty_sub_index {
            Some(sub) => write!(f, "{}.{}", self.word_index, sub),
            None => write!(f, "{}", self.word_index),
        }
    }
}

impl FromStr for TokenId {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let positive = |p: &str| -> Result<u32, ()> {
            if p.is_empty() || !p.bytes().all(|b| b.is_ascii_digit()) {
                return Err(());
            }
            match p.parse::<u32>() {
                Ok(v) if v >= 1 => Ok(v),
                _ => Err(()),
            }
        };
        // Empty nodes hang off word 0 when they precede the first word.
        let non_negative = |p: &str| -> Result<u32, ()> {
            if p.is_empty() || !p.bytes().all(|b| b.is_ascii_digit()) {
                return Err(());
            }
            p.parse::<u32>().map_err(|_| ())
        };
        match s.split_once('.') {
            Some((w, sub)) => Ok(TokenId::empty(non_negative(w)?, positive(sub)?)),
            None => Ok(TokenId::word(positive(s)?)),
        }
    }
}

/// A word or empty-node line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub id: TokenId,
    pub form: String,
    /// Columns LEMMA through DEPS, tab-joined, untouched.
    pub middle: String,
    /// MISC attributes in file order; `_` is read as an empty list.
    pub misc: Vec<String>,
}

impl Token {
    pub fn misc_value(&self, key: &str) -> Option<&str> {
        self.misc.iter().find_map(|item| {
            item.split_once('=')
                .filter(|(k, _)| *k == key)
                .map(|(_, v)| v)
        })
    }

    fn misc_column(&self) -> String {
        if self.misc.is_empty() {
            "_".to_owned()
        } else {
            self.misc.join("|")
        }
    }
}

/// A multiword-token range line (`3-4 ...`), kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RangeLine {
    /// Index into `Sentence::tokens` of the token this line precedes.
    pub before_token: usize,
    pub line: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Sentence {
    pub sent_id: String,
    pub tokens: Vec<Token>,
    pub raw_comment_lines: Vec<String>,
    pub ranges: Vec<RangeLine>,
}

impl Sentence {
    pub fn token_index(&self, id: TokenId) -> Option<usize> {
        self.tokens.binary_search_by(|t| t.id.cmp(&id)).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Document {
    pub doc_id: String,
    /// The `# newdoc` line and any `# global.*` lines that follow it.
    pub header_lines: Vec<String>,
    pub sentences: Vec<Sentence>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MentionKind {
    Overt,
    Zero,
}

/// Document coordinates of a mention: sentence index plus inclusive token range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MentionSpan {
    pub sentence: usize,
    pub start: TokenId,
    pub end: TokenId,
}

impl MentionSpan {
    pub fn new(sentence: usize, start: TokenId, end: TokenId) -> Self {
        MentionSpan {
            sentence,
            start,
            end,
        }
    }

    pub fn single(sentence: usize, id: TokenId) -> Self {
        MentionSpan::new(sentence, id, id)
    }

    /// Spans overlap without one containing the other.
    pub fn crosses(&self, other: &MentionSpan) -> bool {
        if self.sentence != other.sentence {
            return false;
        }
        let overlap = self.start <= other.end && other.start <= self.end;
        let nested = (self.start <= other.start && other.end <= self.end)
            || (other.start <= self.start && self.end <= other.end);
        overlap && !nested
    }
}

/// Sentence, then start, then end descending: enclosing spans come first.
impl Ord for MentionSpan {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sentence
            .cmp(&other.sentence)
            .then(self.start.cmp(&other.start))
            .then(other.end.cmp(&self.end))
    }
}

impl PartialOrd for MentionSpan {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MentionSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.start == self.end {
            write!(f, "s{}:{}", self.sentence, self.start)
        } else {
            write!(f, "s{}:{}-{}", self.sentence, self.start, self.end)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mention {
    /// `None` for mentions whose cluster is not yet known.
    pub entity_id: Option<String>,
    pub kind: MentionKind,
    pub span: MentionSpan,
}

impl Mention {
    pub fn new(entity_id: impl Into<String>, span: MentionSpan) -> Self {
        Mention {
            entity_id: Some(entity_id.into()),
            kind: kind_of(&span),
            span,
        }
    }
}

/// A single-node span on an empty node is a zero mention; anything else is overt.
pub fn kind_of(span: &MentionSpan) -> MentionKind {
    if span.start == span.end && span.start.is_empty_node() {
        MentionKind::Zero
    } else {
        MentionKind::Overt
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: expected 10 tab-separated columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: invalid token id {id:?}")]
    InvalidId { line: usize, id: String },
    #[error("line {line}: token id {id} does not follow {previous}")]
    NonMonotonic {
        line: usize,
        id: TokenId,
        previous: TokenId,
    },
    #[error("line {line}: empty FORM column")]
    EmptyForm { line: usize },
    #[error("line {line}: duplicate document id {doc_id:?}")]
    DuplicateDocument { line: usize, doc_id: String },
}

fn comment_value<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let body = line.strip_prefix('#')?.trim_start();
    let rest = body.strip_prefix(key)?;
    let rest = rest.trim_start();
    if rest.is_empty() {
        return Some("");
    }
    rest.strip_prefix('=').map(str::trim)
}

fn is_global_comment(line: &str) -> bool {
    line.strip_prefix('#')
        .map(|b| b.trim_start().starts_with("global."))
        .unwrap_or(false)
}

/// Parse CoNLL-U text into documents. Content before the first `# newdoc`
/// forms a document with an empty id.
pub fn parse_document(text: &str) -> Result<Vec<Document>, ParseError> {
    let mut docs: Vec<Document> = Vec::new();
    let mut current: Option<Document> = None;
    let mut sentence = Sentence::default();
    let mut in_sentence = false;
    let mut header_open = false;

    let flush_sentence =
        |current: &mut Option<Document>, sentence: &mut Sentence, in_sentence: &mut bool| {
            if *in_sentence {
                current
                    .get_or_insert_with(Document::default)
                    .sentences
                    .push(std::mem::take(sentence));
                *in_sentence = false;
            }
        };

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.is_empty() {
            flush_sentence(&mut current, &mut sentence, &mut in_sentence);
            header_open = false;
            continue;
        }
        if line.starts_with('#') {
            let starts_body = !sentence.tokens.is_empty() || !sentence.ranges.is_empty();
            if starts_body {
                // A comment after token lines without a blank separator
                // still belongs to the next sentence.
                flush_sentence(&mut current, &mut sentence, &mut in_sentence);
            }
            if let Some(id) = comment_value(line, "newdoc id").or_else(|| comment_value(line, "newdoc")) {
                flush_sentence(&mut current, &mut sentence, &mut in_sentence);
                if let Some(done) = current.take() {
                    docs.push(done);
                }
                if !id.is_empty() && docs.iter().any(|d| d.doc_id == id) {
                    return Err(ParseError::DuplicateDocument {
                        line: line_no,
                        doc_id: id.to_owned(),
                    });
                }
                current = Some(Document {
                    doc_id: id.to_owned(),
                    header_lines: vec![line.to_owned()],
                    sentences: Vec::new(),
                });
                header_open = true;
                continue;
            }
            if current.is_none() && !in_sentence && is_global_comment(line) {
                // Corpus preamble such as `# global.columns`.
                current = Some(Document {
                    header_lines: vec![line.to_owned()],
                    ..Document::default()
                });
                header_open = true;
                continue;
            }
            if header_open && is_global_comment(line) {
                if let Some(doc) = current.as_mut() {
                    doc.header_lines.push(line.to_owned());
                    continue;
                }
            }
            header_open = false;
            if let Some(id) = comment_value(line, "sent_id") {
                sentence.sent_id = id.to_owned();
            }
            sentence.raw_comment_lines.push(line.to_owned());
            in_sentence = true;
            continue;
        }

        header_open = false;
        in_sentence = true;
        let columns: Vec<&str> = line.split('\t').collect();
        if columns.len() != 10 {
            return Err(ParseError::ColumnCount {
                line: line_no,
                found: columns.len(),
            });
        }
        if columns[0].contains('-') {
            sentence.ranges.push(RangeLine {
                before_token: sentence.tokens.len(),
                line: line.to_owned(),
            });
            continue;
        }
        let id: TokenId = columns[0].parse().map_err(|_| ParseError::InvalidId {
            line: line_no,
            id: columns[0].to_owned(),
        })?;
        if let Some(previous) = sentence.tokens.last().map(|t| t.id) {
            if id <= previous {
                return Err(ParseError::NonMonotonic {
                    line: line_no,
                    id,
                    previous,
                });
            }
        }
        if columns[1].is_empty() {
            return Err(ParseError::EmptyForm { line: line_no });
        }
        let misc = match columns[9] {
            "_" => Vec::new(),
            m => m.split('|').map(str::to_owned).collect(),
        };
        sentence.tokens.push(Token {
            id,
            form: columns[1].to_owned(),
            middle: columns[2..9].join("\t"),
            misc,
        });
    }
    flush_sentence(&mut current, &mut sentence, &mut in_sentence);
    if let Some(done) = current.take() {
        docs.push(done);
    }
    Ok(docs)
}

/// Render one document. Each sentence is terminated by a blank line.
pub fn serialize_document(doc: &Document) -> String {
    let mut out = String::new();
    for line in &doc.header_lines {
        out.push_str(line);
        out.push('\n');
    }
    for sentence in &doc.sentences {
        for line in &sentence.raw_comment_lines {
            out.push_str(line);
            out.push('\n');
        }
        let mut ranges = sentence.ranges.iter().peekable();
        for (i, token) in sentence.tokens.iter().enumerate() {
            while let Some(r) = ranges.next_if(|r| r.before_token == i) {
                out.push_str(&r.line);
                out.push('\n');
            }
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                token.id,
                token.form,
                token.middle,
                token.misc_column()
            ));
        }
        for r in ranges {
            out.push_str(&r.line);
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

pub fn serialize_corpus(docs: &[Document]) -> String {
    docs.iter().map(serialize_document).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TWO_SENTENCES: &str = "\
# newdoc id = d1
# global.Entity = eid-etype-head-other
# sent_id = d1-s1
# text = Anna slept.
1\tAnna\tAnna\tPROPN\t_\t_\t2\tnsubj\t_\tEntity=(e1-person-1-)
2\tslept\tsleep\tVERB\t_\t_\t0\troot\t_\tSpaceAfter=No
3\t.\t.\tPUNCT\t_\t_\t2\tpunct\t_\t_

# sent_id = d1-s2
# text = Woke early.
1\tWoke\twake\tVERB\t_\t_\t0\troot\t_\t_
2\tearly\tearly\tADV\t_\t_\t1\tadvmod\t_\tSpaceAfter=No
2.1\tshe\tshe\tPRON\t_\t_\t_\t_\t1:nsubj\tEntity=(e1)
3\t.\t.\tPUNCT\t_\t_\t1\tpunct\t_\t_

";

    #[test]
    fn empty_input_has_no_documents() {
        assert_eq!(parse_document("").unwrap(), Vec::new());
    }

    #[test]
    fn empty_node_is_parsed_in_second_sentence() {
        let docs = parse_document(TWO_SENTENCES).unwrap();
        assert_eq!(docs.len(), 1);
        let doc = &docs[0];
        assert_eq!(doc.doc_id, "d1");
        assert_eq!(doc.header_lines.len(), 2);
        assert_eq!(doc.sentences.len(), 2);
        assert_eq!(doc.sentences[1].sent_id, "d1-s2");
        let ids: Vec<TokenId> = doc.sentences[1].tokens.iter().map(|t| t.id).collect();
        assert!(ids.contains(&TokenId::empty(2, 1)));
        assert_eq!(doc.sentences[1].tokens[2].form, "she");
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let docs = parse_document(TWO_SENTENCES).unwrap();
        assert_eq!(serialize_corpus(&docs), TWO_SENTENCES);
    }

    #[test]
    fn multiword_lines_survive() {
        let text = "# sent_id = x\n1-2\tdel\t_\t_\t_\t_\t_\t_\t_\t_\n1\tde\tde\tADP\t_\t_\t_\t_\t_\t_\n2\tel\tel\tDET\t_\t_\t_\t_\t_\t_\n\n";
        let docs = parse_document(text).unwrap();
        assert_eq!(docs[0].doc_id, "");
        assert_eq!(docs[0].sentences[0].tokens.len(), 2);
        assert_eq!(serialize_corpus(&docs), text);
    }

    #[test]
    fn zero_sentence_document_is_header_only() {
        let doc = Document {
            doc_id: "d".into(),
            header_lines: vec!["# newdoc id = d".into()],
            sentences: vec![],
        };
        assert_eq!(serialize_document(&doc), "# newdoc id = d\n");
        assert_eq!(parse_document("# newdoc id = d\n").unwrap(), vec![doc]);
    }

    #[test]
    fn global_preamble_is_kept_apart() {
        let text = "# global.columns = ID FORM LEMMA UPOS XPOS FEATS HEAD DEPREL DEPS MISC\n# newdoc id = d\n# sent_id = 1\n1\tx\t_\t_\t_\t_\t_\t_\t_\t_\n\n";
        let docs = parse_document(text).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].doc_id, "");
        assert!(docs[0].sentences.is_empty());
        assert_eq!(docs[1].sentences.len(), 1);
        assert_eq!(serialize_corpus(&docs), text);
    }

    #[test]
    fn column_count_error_names_line() {
        let text = "# sent_id = a\n1\tx\t_\t_\n";
        assert_eq!(
            parse_document(text),
            Err(ParseError::ColumnCount { line: 2, found: 4 })
        );
    }

    #[test]
    fn non_monotonic_ids_are_rejected() {
        let text = "1\ta\t_\t_\t_\t_\t_\t_\t_\t_\n1.1\tb\t_\t_\t_\t_\t_\t_\t_\t_\n1\tc\t_\t_\t_\t_\t_\t_\t_\t_\n\n";
        assert!(matches!(
            parse_document(text),
            Err(ParseError::NonMonotonic { line: 3, .. })
        ));
    }

    #[test]
    fn duplicate_doc_ids_are_rejected() {
        let text = "# newdoc id = a\n# newdoc id = a\n";
        assert!(matches!(
            parse_document(text),
            Err(ParseError::DuplicateDocument { line: 2, .. })
        ));
    }

    #[test]
    fn token_id_ordering() {
        let mut ids = vec![
            TokenId::word(2),
            TokenId::empty(1, 2),
            TokenId::word(1),
            TokenId::empty(1, 1),
        ];
        ids.sort();
        assert_eq!(
            ids,
            vec![
                TokenId::word(1),
                TokenId::empty(1, 1),
                TokenId::empty(1, 2),
                TokenId::word(2)
            ]
        );
        assert_eq!("0.1".parse::<TokenId>(), Ok(TokenId::empty(0, 1)));
        assert!("0".parse::<TokenId>().is_err());
        assert!("3.0".parse::<TokenId>().is_err());
        assert!("a".parse::<TokenId>().is_err());
    }

    #[test]
    fn crossing_detection() {
        let s = |a, b| MentionSpan::new(0, TokenId::word(a), TokenId::word(b));
        assert!(s(1, 3).crosses(&s(2, 4)));
        assert!(!s(1, 4).crosses(&s(2, 3)));
        assert!(!s(1, 2).crosses(&s(3, 4)));
        assert!(!s(1, 3).crosses(&s(1, 3)));
    }
}
