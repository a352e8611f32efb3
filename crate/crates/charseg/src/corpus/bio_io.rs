//! File formats: the BIO dump (one `<char-escape>\t<tag>` row per character,
//! blank line between sequences) and document ingestion (a directory of
//! marked-up files, or a JSON-lines file with `{id, body}` records).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parse_markup, serialize_markup, BioTag, CorpusError, LabeledSequence, MarkedDocument};

/// Escape the three characters the row-per-character formats reserve:
/// newline, tab, and backslash.
pub fn escape_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            _ => out.push(c),
        }
    }
    out
}

/// Inverse of [`escape_text`]. Rejects unknown escapes and a trailing
/// backslash.
pub fn unescape_text(s: &str) -> Result<String, CorpusError> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some(other) => {
                return Err(CorpusError::InvalidDocument(format!(
                    "unknown escape \\{other} in {s:?}"
                )))
            }
            None => {
                return Err(CorpusError::InvalidDocument(format!(
                    "trailing backslash in {s:?}"
                )))
            }
        }
    }
    Ok(out)
}

/// One sequence in a BIO dump. `tags` is `None` for unlabeled dumps, where
/// every tag column holds `?`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BioRecord {
    pub chars: Vec<char>,
    pub tags: Option<Vec<BioTag>>,
}

impl BioRecord {
    pub fn labeled(seq: &LabeledSequence) -> Self {
        BioRecord { chars: seq.chars.clone(), tags: Some(seq.tags.clone()) }
    }

    pub fn unlabeled(chars: Vec<char>) -> Self {
        BioRecord { chars, tags: None }
    }

    /// Convert back to a validated [`LabeledSequence`]; errors when the
    /// record is unlabeled or the tags are ill-formed BIO.
    pub fn to_labeled(&self) -> Result<LabeledSequence, CorpusError> {
        let tags = self.tags.clone().ok_or_else(|| {
            CorpusError::InvalidDocument("record carries no tags".into())
        })?;
        LabeledSequence::new(self.chars.clone(), tags)
    }
}

/// Write sequences in the BIO dump format.
pub fn write_bio<W: Write>(mut w: W, records: &[BioRecord]) -> Result<(), CorpusError> {
    for (i, rec) in records.iter().enumerate() {
        if i > 0 {
            writeln!(w)?;
        }
        for (j, &c) in rec.chars.iter().enumerate() {
            let tag = match &rec.tags {
                Some(tags) => tags[j].as_str(),
                None => "?",
            };
            writeln!(w, "{}\t{}", escape_text(&c.to_string()), tag)?;
        }
    }
    Ok(())
}

pub fn write_bio_file(path: impl AsRef<Path>, records: &[BioRecord]) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_bio(&mut w, records)?;
    w.flush()?;
    Ok(())
}

/// Read a BIO dump. A file must be entirely labeled or entirely unlabeled
/// (`?` tags); mixing the two is rejected, as are unknown tags, bad escapes,
/// and rows that do not hold exactly one character.
pub fn read_bio<R: Read>(r: R) -> Result<Vec<BioRecord>, CorpusError> {
    let reader = BufReader::new(r);
    let mut records = Vec::new();
    let mut chars: Vec<char> = Vec::new();
    let mut tags: Vec<BioTag> = Vec::new();
    // None until the first row fixes whether the file is labeled.
    let mut labeled: Option<bool> = None;

    let mut flush = |chars: &mut Vec<char>, tags: &mut Vec<BioTag>| -> Result<(), CorpusError> {
        if chars.is_empty() {
            return Ok(());
        }
        let rec = if tags.is_empty() {
            BioRecord::unlabeled(std::mem::take(chars))
        } else {
            let rec = BioRecord {
                chars: std::mem::take(chars),
                tags: Some(std::mem::take(tags)),
            };
            rec.to_labeled()?;
            rec
        };
        records.push(rec);
        Ok(())
    };

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let bad = |reason: String| CorpusError::BadBioDump { line: lineno, reason };
        if line.is_empty() {
            flush(&mut chars, &mut tags)?;
            continue;
        }
        let (esc, tag_str) = line
            .split_once('\t')
            .ok_or_else(|| bad("expected <char>\\t<tag>".into()))?;
        if tag_str.contains('\t') {
            return Err(bad("more than two columns".into()));
        }
        let unescaped = unescape_text(esc).map_err(|e| bad(e.to_string()))?;
        let mut cs = unescaped.chars();
        let c = match (cs.next(), cs.next()) {
            (Some(c), None) => c,
            _ => return Err(bad(format!("char column {esc:?} is not a single character"))),
        };

        let row_labeled = tag_str != "?";
        match labeled {
            None => labeled = Some(row_labeled),
            Some(l) if l != row_labeled => {
                return Err(bad("mixed labeled and unlabeled rows".into()))
            }
            Some(_) => {}
        }
        chars.push(c);
        if row_labeled {
            let tag = BioTag::parse(tag_str)
                .ok_or_else(|| bad(format!("unknown tag {tag_str:?}")))?;
            tags.push(tag);
        }
    }
    flush(&mut chars, &mut tags)?;
    Ok(records)
}

pub fn read_bio_file(path: impl AsRef<Path>) -> Result<Vec<BioRecord>, CorpusError> {
    read_bio(File::open(path)?)
}

#[derive(Serialize, Deserialize)]
struct JsonlDoc {
    id: String,
    body: String,
}

/// Ingest marked-up documents.
///
/// If `path` is a directory, every regular file in it is one document (id =
/// file name, sorted for determinism). Otherwise the file is JSON-lines with
/// `{id, body}` records. Bodies are parsed with [`parse_markup`].
pub fn read_documents(path: impl AsRef<Path>) -> Result<Vec<MarkedDocument>, CorpusError> {
    let path = path.as_ref();
    if path.is_dir() {
        read_document_dir(path)
    } else {
        read_documents_jsonl(path)
    }
}

fn read_document_dir(dir: &Path) -> Result<Vec<MarkedDocument>, CorpusError> {
    let mut files: Vec<_> = std::fs::read_dir(dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|e| e.path().is_file())
        .map(|e| e.path())
        .collect();
    files.sort();
    let mut docs = Vec::with_capacity(files.len());
    for file in files {
        let id = file
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let body = std::fs::read_to_string(&file)?;
        let doc = parse_markup(id.clone(), &body)
            .map_err(|e| CorpusError::Doc { id, source: Box::new(e) })?;
        docs.push(doc);
    }
    Ok(docs)
}

fn read_documents_jsonl(path: &Path) -> Result<Vec<MarkedDocument>, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    let mut docs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonlDoc = serde_json::from_str(&line).map_err(|e| CorpusError::BadJsonl {
            line: idx + 1,
            message: e.to_string(),
        })?;
        let doc = parse_markup(rec.id.clone(), &rec.body)
            .map_err(|e| CorpusError::Doc { id: rec.id, source: Box::new(e) })?;
        docs.push(doc);
    }
    Ok(docs)
}

/// Write documents as JSON-lines, with segments rendered back into markup.
/// Inverse of [`read_documents`] for tag-free document text.
pub fn write_documents_jsonl(
    path: impl AsRef<Path>,
    docs: &[MarkedDocument],
) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(File::create(path)?);
    for doc in docs {
        let rec = JsonlDoc { id: doc.id.clone(), body: serialize_markup(doc) };
        let line = serde_json::to_string(&rec).expect("plain strings serialize");
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}
