//! Binary model file.
//!
//! Layout: magic `SRNLM1\n`; then I, J, bptt_steps as little-endian u32;
//! then the vocabulary as a count-prefixed run of UTF-8 code points (count
//! is I−1, UNK is implicit); then U (J×I), W (J×J), V (I×J) row-major as
//! little-endian IEEE-754 doubles. Writer and reader round-trip bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::corpus::CharVocab;
use crate::mat::Mat;

use super::{SrnConfig, SrnError, SrnModel};

const MAGIC: &[u8; 7] = b"SRNLM1\n";

pub fn save<W: Write>(model: &SrnModel, mut w: W) -> Result<(), SrnError> {
    let (u, wm, v) = model.weights();
    if !(u.all_finite() && wm.all_finite() && v.all_finite()) {
        return Err(SrnError::Config("refusing to save non-finite weights".into()));
    }
    w.write_all(MAGIC)?;
    let i = model.input_size();
    let j = model.hidden_units();
    for dim in [i, j, model.config().bptt_steps] {
        w.write_all(&u32::try_from(dim).map_err(|_| {
            SrnError::Config(format!("dimension {dim} exceeds the file format's 32-bit range"))
        })?.to_le_bytes())?;
    }
    let chars = model.vocab().chars();
    w.write_all(&(chars.len() as u32).to_le_bytes())?;
    let mut buf = [0u8; 4];
    for &c in chars {
        w.write_all(c.encode_utf8(&mut buf).as_bytes())?;
    }
    for m in [u, wm, v] {
        for x in m.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_file(model: &SrnModel, path: impl AsRef<Path>) -> Result<(), SrnError> {
    let mut w = BufWriter::new(File::create(path)?);
    save(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load<R: Read>(mut r: R) -> Result<SrnModel, SrnError> {
    let bad = |reason: &str| SrnError::BadModelFile(reason.to_string());

    let mut magic = [0u8; 7];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(bad("wrong magic bytes"));
    }
    let i = read_u32(&mut r, "input size")? as usize;
    let j = read_u32(&mut r, "hidden size")? as usize;
    let bptt = read_u32(&mut r, "truncation depth")? as usize;
    if j == 0 || bptt == 0 {
        return Err(bad("zero hidden size or truncation depth"));
    }
    let count = read_u32(&mut r, "vocabulary count")? as usize;
    if count + 1 != i {
        return Err(SrnError::BadModelFile(format!(
            "vocabulary holds {count} characters but input size is {i} (expected {})",
            count + 1
        )));
    }
    let mut chars = Vec::with_capacity(count);
    for _ in 0..count {
        chars.push(read_utf8_char(&mut r)?);
    }
    let vocab = CharVocab::from_chars(chars)
        .map_err(|e| SrnError::BadModelFile(format!("bad vocabulary: {e}")))?;

    let mut matrix = |rows: usize, cols: usize, name: &str| -> Result<Mat, SrnError> {
        let mut m = Mat::zeros(rows, cols);
        let mut buf = [0u8; 8];
        for x in m.data_mut() {
            read_exact(&mut r, &mut buf, name)?;
            *x = f64::from_le_bytes(buf);
        }
        if !m.all_finite() {
            return Err(SrnError::BadModelFile(format!("non-finite weight in {name}")));
        }
        Ok(m)
    };
    let u = matrix(j, i, "input weights")?;
    let w = matrix(j, j, "recurrent weights")?;
    let v = matrix(i, j, "output weights")?;

    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(bad("trailing data after weights"));
    }

    // Only the architecture persists; training hyperparameters revert to
    // defaults.
    let config = SrnConfig { hidden_units: j, bptt_steps: bptt, ..SrnConfig::default() };
    Ok(SrnModel::from_parts(vocab, u, w, v, config))
}

pub fn load_file(path: impl AsRef<Path>) -> Result<SrnModel, SrnError> {
    load(BufReader::new(File::open(path)?))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<(), SrnError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            SrnError::BadModelFile(format!("file ends inside {what}"))
        } else {
            SrnError::Io(e)
        }
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32, SrnError> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, what)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_utf8_char<R: Read>(r: &mut R) -> Result<char, SrnError> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf[..1], "vocabulary")?;
    let len = match buf[0] {
        b if b < 0x80 => 1,
        b if (0xC0..0xE0).contains(&b) => 2,
        b if (0xE0..0xF0).contains(&b) => 3,
        b if (0xF0..0xF8).contains(&b) => 4,
        _ => return Err(SrnError::BadModelFile("invalid UTF-8 in vocabulary".into())),
    };
    if len > 1 {
        read_exact(r, &mut buf[1..len], "vocabulary")?;
    }
    std::str::from_utf8(&buf[..len])
        .ok()
        .and_then(|s| s.chars().next())
        .ok_or_else(|| SrnError::BadModelFile("invalid UTF-8 in vocabulary".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocab;

    fn sample_model() -> SrnModel {
        let vocab = build_vocab(&["abλ¶é"]).unwrap();
        let config = SrnConfig { hidden_units: 3, bptt_steps: 5, seed: 21, ..SrnConfig::default() };
        SrnModel::new_random(vocab, config).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let model = sample_model();
        let mut bytes = Vec::new();
        save(&model, &mut bytes).unwrap();
        let loaded = load(&bytes[..]).unwrap();

        assert_eq!(loaded.vocab(), model.vocab());
        assert_eq!(loaded.hidden_units(), model.hidden_units());
        assert_eq!(loaded.config().bptt_steps, 5);
        let (u1, w1, v1) = model.weights();
        let (u2, w2, v2) = loaded.weights();
        for (a, b) in [(u1, u2), (w1, w2), (v1, v2)] {
            let bits_a: Vec<u64> = a.data().iter().map(|x| x.to_bits()).collect();
            let bits_b: Vec<u64> = b.data().iter().map(|x| x.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }

        let mut again = Vec::new();
        save(&loaded, &mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn hyperparameters_do_not_persist() {
        let vocab = build_vocab(&["ab"]).unwrap();
        let config = SrnConfig {
            hidden_units: 2,
            initial_learning_rate: 0.7,
            seed: 99,
            ..SrnConfig::default()
        };
        let model = SrnModel::new_random(vocab, config).unwrap();
        let mut bytes = Vec::new();
        save(&model, &mut bytes).unwrap();
        let loaded = load(&bytes[..]).unwrap();
        assert_eq!(
            loaded.config().initial_learning_rate,
            SrnConfig::default().initial_learning_rate
        );
    }

    #[test]
    fn rejects_wrong_magic() {
        let model = sample_model();
        let mut bytes = Vec::new();
        save(&model, &mut bytes).unwrap();
        bytes[0] = b'X';
        assert!(matches!(load(&bytes[..]), Err(SrnError::BadModelFile(_))));
    }

    #[test]
    fn rejects_truncation_and_trailing_data() {
        let model = sample_model();
        let mut bytes = Vec::new();
        save(&model, &mut bytes).unwrap();
        assert!(load(&bytes[..bytes.len() - 3]).is_err());
        assert!(load(&bytes[..20]).is_err());
        bytes.push(0);
        assert!(load(&bytes[..]).is_err());
    }

    #[test]
    fn rejects_non_finite_weights() {
        let model = sample_model();
        let mut bytes = Vec::new();
        save(&model, &mut bytes).unwrap();
        // Overwrite the first weight with NaN, right after the header.
        let vocab_bytes: usize = model.vocab().chars().iter().map(|c| c.len_utf8()).sum();
        let offset = 7 + 12 + 4 + vocab_bytes;
        bytes[offset..offset + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(load(&bytes[..]), Err(SrnError::BadModelFile(_))));
    }

    #[test]
    fn save_file_load_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.srn");
        let model = sample_model();
        save_file(&model, &path).unwrap();
        let loaded = load_file(&path).unwrap();
        assert_eq!(loaded.vocab(), model.vocab());
    }
}
