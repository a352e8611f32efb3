//! Binary CRF model file.
//!
//! Layout: magic `CRF1\n`; the five label names, count-prefixed and each
//! length-prefixed; then the observation table as a count-prefixed run of
//! (length-prefixed UTF-8 feature string, 5 weights) records in model
//! order; then the 25 transition weights row-major (previous label major).
//! Integers are little-endian u32, weights little-endian IEEE-754 doubles.
//! Writer and reader round-trip bit-exactly. The regularization width is
//! not stored; loaded models carry the default.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use indexmap::IndexMap;

use super::{CrfError, CrfModel, L};
use crate::corpus::BIO_TAGS;

const MAGIC: &[u8; 5] = b"CRF1\n";

pub fn save_crf<W: Write>(model: &CrfModel, mut w: W) -> Result<(), CrfError> {
    let finite = model.features().all(|(_, ws)| ws.iter().all(|x| x.is_finite()))
        && model.trans_table().iter().flatten().all(|x| x.is_finite());
    if !finite {
        return Err(CrfError::Config("refusing to save non-finite weights".into()));
    }
    w.write_all(MAGIC)?;
    w.write_all(&(L as u32).to_le_bytes())?;
    for tag in BIO_TAGS {
        write_str(&mut w, tag.as_str())?;
    }
    let count = u32::try_from(model.n_features())
        .map_err(|_| CrfError::Config("feature count exceeds the file format's 32-bit range".into()))?;
    w.write_all(&count.to_le_bytes())?;
    for (name, weights) in model.features() {
        write_str(&mut w, name)?;
        for x in weights {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    for row in model.trans_table() {
        for x in row {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_crf_file(model: &CrfModel, path: impl AsRef<Path>) -> Result<(), CrfError> {
    let mut w = BufWriter::new(File::create(path)?);
    save_crf(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_crf<R: Read>(mut r: R) -> Result<CrfModel, CrfError> {
    let bad = |reason: &str| CrfError::BadModelFile(reason.to_string());

    let mut magic = [0u8; 5];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(bad("wrong magic bytes"));
    }
    let n_labels = read_u32(&mut r, "label count")? as usize;
    if n_labels != L {
        return Err(CrfError::BadModelFile(format!("expected {L} labels, found {n_labels}")));
    }
    for tag in BIO_TAGS {
        let name = read_str(&mut r, "label name")?;
        if name != tag.as_str() {
            return Err(CrfError::BadModelFile(format!(
                "label order mismatch: expected {:?}, found {name:?}",
                tag.as_str()
            )));
        }
    }

    let count = read_u32(&mut r, "feature count")? as usize;
    let mut obs = IndexMap::with_capacity(count);
    for _ in 0..count {
        let name = read_str(&mut r, "feature string")?;
        let mut weights = [0.0f64; L];
        for x in weights.iter_mut() {
            *x = read_f64(&mut r, "observation weight")?;
        }
        if obs.insert(name, weights).is_some() {
            return Err(bad("duplicate feature string"));
        }
    }
    let mut trans = [[0.0f64; L]; L];
    for row in trans.iter_mut() {
        for x in row.iter_mut() {
            *x = read_f64(&mut r, "transition weight")?;
        }
    }

    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(bad("trailing data after weights"));
    }
    Ok(CrfModel::from_parts(obs, trans, 1.0))
}

pub fn load_crf_file(path: impl AsRef<Path>) -> Result<CrfModel, CrfError> {
    load_crf(BufReader::new(File::open(path)?))
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<(), CrfError> {
    let len = u32::try_from(s.len())
        .map_err(|_| CrfError::Config("string exceeds the file format's 32-bit range".into()))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str<R: Read>(r: &mut R, what: &str) -> Result<String, CrfError> {
    let len = read_u32(r, what)? as usize;
    let mut buf = vec![0u8; len];
    read_exact(r, &mut buf, what)?;
    String::from_utf8(buf)
        .map_err(|_| CrfError::BadModelFile(format!("invalid UTF-8 in {what}")))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<(), CrfError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            CrfError::BadModelFile(format!("file ends inside {what}"))
        } else {
            CrfError::Io(e)
        }
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32, CrfError> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, what)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R, what: &str) -> Result<f64, CrfError> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf, what)?;
    let x = f64::from_le_bytes(buf);
    if !x.is_finite() {
        return Err(CrfError::BadModelFile(format!("non-finite {what}")));
    }
    Ok(x)
}
