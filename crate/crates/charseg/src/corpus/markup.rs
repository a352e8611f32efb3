//! The markup ingestion format: `<pre><code>…</code></pre>` wraps a BLOCK
//! segment, bare `<code>…</code>` wraps an INLINE segment. Tags may not nest
//! or overlap; everything else is literal text.

use super::{CorpusError, MarkedDocument, Segment, SegmentLabel};

const BLOCK_OPEN: &str = "<pre><code>";
const BLOCK_CLOSE: &str = "</code></pre>";
const INLINE_OPEN: &str = "<code>";
const INLINE_CLOSE: &str = "</code>";

/// Markup tokens, longest first so prefixes never shadow longer tags.
const TOKENS: [&str; 4] = [BLOCK_CLOSE, BLOCK_OPEN, INLINE_CLOSE, INLINE_OPEN];

#[derive(Clone, Copy, PartialEq)]
enum State {
    Outside,
    InBlock,
    InInline,
}

/// Strip markup from `raw`, recording each tagged region as a segment over
/// character offsets into the stripped text.
///
/// Unbalanced, nested, or empty tags are rejected with the byte offset of
/// the offending tag in `raw`.
pub fn parse_markup(id: impl Into<String>, raw: &str) -> Result<MarkedDocument, CorpusError> {
    let malformed = |offset: usize, reason: &str| CorpusError::MalformedMarkup {
        offset,
        reason: reason.to_string(),
    };

    let mut text = String::with_capacity(raw.len());
    let mut segments = Vec::new();
    let mut state = State::Outside;
    // (byte offset of the opening tag, char offset into stripped text)
    let mut open: (usize, usize) = (0, 0);
    let mut chars = 0usize;
    let mut pos = 0usize;

    while pos < raw.len() {
        let rest = &raw[pos..];
        let token = TOKENS.iter().find(|t| rest.starts_with(**t)).copied();
        let Some(token) = token else {
            let c = rest.chars().next().expect("rest is nonempty");
            text.push(c);
            chars += 1;
            pos += c.len_utf8();
            continue;
        };

        match (state, token) {
            (State::Outside, BLOCK_OPEN) => {
                state = State::InBlock;
                open = (pos, chars);
            }
            (State::Outside, INLINE_OPEN) => {
                state = State::InInline;
                open = (pos, chars);
            }
            (State::Outside, _) => {
                return Err(malformed(pos, &format!("closing tag {token} with no open segment")));
            }
            (State::InBlock, BLOCK_CLOSE) | (State::InInline, INLINE_CLOSE) => {
                if chars == open.1 {
                    return Err(malformed(open.0, "empty code segment"));
                }
                let label = if state == State::InBlock {
                    SegmentLabel::Block
                } else {
                    SegmentLabel::Inline
                };
                segments.push(Segment::new(open.1, chars, label));
                state = State::Outside;
            }
            (State::InBlock | State::InInline, BLOCK_OPEN | INLINE_OPEN) => {
                return Err(malformed(pos, &format!("nested tag {token} inside a code segment")));
            }
            (State::InBlock | State::InInline, _) => {
                return Err(malformed(pos, &format!("mismatched closing tag {token}")));
            }
        }
        pos += token.len();
    }

    if state != State::Outside {
        return Err(malformed(open.0, "unclosed code segment"));
    }
    MarkedDocument::new(id, text, segments)
}

/// Write a document back into the markup format. Inverse of [`parse_markup`]
/// provided the document text contains no markup tags itself.
pub fn serialize_markup(doc: &MarkedDocument) -> String {
    let chars = doc.chars();
    let mut out = String::with_capacity(doc.text.len() + 24 * doc.segments.len());
    let mut pos = 0usize;
    for seg in &doc.segments {
        out.extend(&chars[pos..seg.start]);
        let (open, close) = match seg.label {
            SegmentLabel::Block => (BLOCK_OPEN, BLOCK_CLOSE),
            SegmentLabel::Inline => (INLINE_OPEN, INLINE_CLOSE),
        };
        out.push_str(open);
        out.extend(&chars[seg.start..seg.end]);
        out.push_str(close);
        pos = seg.end;
    }
    out.extend(&chars[pos..]);
    out
}
