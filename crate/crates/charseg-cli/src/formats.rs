//! Small on-disk formats owned by the CLI.
//!
//! A *tags file* carries predicted tags only — one tag name per line, blank
//! line between sequences — for handing `label` output to `evaluate`
//! without duplicating the characters.

use std::path::Path;

use charseg::corpus::BioTag;

use crate::error::{io_ctx, CliError};

pub fn write_tags_file(path: &Path, seqs: &[Vec<BioTag>]) -> Result<(), CliError> {
    let mut out = String::new();
    for (i, seq) in seqs.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for tag in seq {
            out.push_str(tag.as_str());
            out.push('\n');
        }
    }
    std::fs::write(path, out).map_err(io_ctx("write", path))
}

pub fn read_tags_file(path: &Path) -> Result<Vec<Vec<BioTag>>, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_ctx("read", path))?;
    let mut seqs = Vec::new();
    let mut cur: Vec<BioTag> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.is_empty() {
            if !cur.is_empty() {
                seqs.push(std::mem::take(&mut cur));
            }
            continue;
        }
        let tag = BioTag::parse(line).ok_or_else(|| {
            CliError::Io(format!(
                "bad tags file {} at line {}: unknown tag {line:?}",
                path.display(),
                idx + 1
            ))
        })?;
        cur.push(tag);
    }
    if !cur.is_empty() {
        seqs.push(cur);
    }
    Ok(seqs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use charseg::corpus::BioTag::*;

    #[test]
    fn tags_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pred.tags");
        let seqs = vec![vec![Outside, BeginBlock, InsideBlock], vec![BeginInline]];
        write_tags_file(&path, &seqs).unwrap();
        assert_eq!(read_tags_file(&path).unwrap(), seqs);
    }

    #[test]
    fn rejects_unknown_tag() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pred.tags");
        std::fs::write(&path, "O\nB-WAT\n").unwrap();
        let err = read_tags_file(&path).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("line 2"));
    }
}
