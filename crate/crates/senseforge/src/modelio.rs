//! Binary model files, word2vec-style text export, vocabulary and mask files.
//!
//! Model layout (all integers little-endian `u64` unless noted):
//!
//! ```text
//! "GASI" | version: u8 | V | K | d | flags
//! V × (byte length | UTF-8 bytes | count)
//! [mask: V·K bytes, 0 or 1]            if flags & MASK
//! S: V·K·d floats, C: V·d floats       f32 if flags & F32, else f64
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use senseforge_core::{ModelParams, SenseMask, Vocabulary};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GASI";
pub const VERSION: u8 = 1;
pub const FLAG_F32: u64 = 1;
pub const FLAG_MASK: u64 = 2;
const HEADER_LEN: u64 = 4 + 1 + 8 * 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F64,
    /// Halves the file; values round-trip to about 1e-7 relative.
    F32,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub params: ModelParams,
    pub vocab: Vocabulary,
    pub mask: Option<SenseMask>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub version: u8,
    pub vocab_size: u64,
    pub senses: u64,
    pub dim: u64,
    pub flags: u64,
}

impl Header {
    pub fn precision(&self) -> Precision {
        if self.flags & FLAG_F32 != 0 {
            Precision::F32
        } else {
            Precision::F64
        }
    }

    pub fn has_mask(&self) -> bool {
        self.flags & FLAG_MASK != 0
    }
}

/// Writes `bytes` to a temporary file beside `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn check_shapes(params: &ModelParams, vocab: &Vocabulary, mask: Option<&SenseMask>) -> Result<()> {
    if vocab.len() != params.vocab_size() {
        return Err(senseforge_core::Error::Shape(format!(
            "vocabulary has {} words, model has {}",
            vocab.len(),
            params.vocab_size()
        ))
        .into());
    }
    if let Some(m) = mask {
        m.check_shape(params)?;
    }
    Ok(())
}

pub fn encode_model(
    params: &ModelParams,
    vocab: &Vocabulary,
    mask: Option<&SenseMask>,
    precision: Precision,
) -> Result<Vec<u8>> {
    check_shapes(params, vocab, mask)?;
    let width = if precision == Precision::F32 { 4 } else { 8 };
    let mut out = Vec::with_capacity(
        HEADER_LEN as usize + (params.sense_data().len() + params.context_data().len()) * width,
    );
    let mut flags = 0;
    if precision == Precision::F32 {
        flags |= FLAG_F32;
    }
    if mask.is_some() {
        flags |= FLAG_MASK;
    }
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    for x in [params.vocab_size(), params.senses(), params.dim()] {
        out.extend_from_slice(&(x as u64).to_le_bytes());
    }
    out.extend_from_slice(&flags.to_le_bytes());
    for (w, &c) in vocab.words().iter().zip(vocab.counts()) {
        out.extend_from_slice(&(w.len() as u64).to_le_bytes());
        out.extend_from_slice(w.as_bytes());
        out.extend_from_slice(&c.to_le_bytes());
    }
    if let Some(m) = mask {
        out.extend(m.flags().iter().map(|&a| u8::from(a)));
    }
    for block in [params.sense_data(), params.context_data()] {
        for &x in block {
            match precision {
                Precision::F64 => out.extend_from_slice(&x.to_le_bytes()),
                Precision::F32 => out.extend_from_slice(&(x as f32).to_le_bytes()),
            }
        }
    }
    Ok(out)
}

pub fn save_model(
    path: &Path,
    params: &ModelParams,
    vocab: &Vocabulary,
    mask: Option<&SenseMask>,
    precision: Precision,
) -> Result<()> {
    let bytes = encode_model(params, vocab, mask, precision)?;
    write_atomic(path, &bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Truncated {
                path: self.path.to_path_buf(),
                expected: self.pos as u64 + n as u64,
                actual: self.bytes.len() as u64,
            }
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn parse_header(c: &mut Cursor<'_>) -> Result<Header> {
    if c.bytes.len() < 4 || &c.bytes[..4] != MAGIC {
        return Err(Error::BadMagic {
            path: c.path.to_path_buf(),
        });
    }
    c.take(4)?;
    let version = c.take(1)?[0];
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            path: c.path.to_path_buf(),
            version,
        });
    }
    let header = Header {
        version,
        vocab_size: c.u64()?,
        senses: c.u64()?,
        dim: c.u64()?,
        flags: c.u64()?,
    };
    if header.flags & !(FLAG_F32 | FLAG_MASK) != 0 {
        return Err(Error::format(c.path, format!("unknown flag bits {:#x}", header.flags)));
    }
    if header.senses == 0 || header.dim == 0 {
        return Err(Error::format(c.path, "senses and dimension must be positive"));
    }
    Ok(header)
}

/// Reads only the fixed-size header.
pub fn read_header(path: &Path) -> Result<Header> {
    use std::io::Read;
    let mut buf = Vec::with_capacity(HEADER_LEN as usize);
    fs::File::open(path)
        .and_then(|f| f.take(HEADER_LEN).read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    parse_header(&mut Cursor {
        bytes: &buf,
        pos: 0,
        path,
    })
}

pub fn decode_model(bytes: &[u8], path: &Path) -> Result<Model> {
    let mut c = Cursor { bytes, pos: 0, path };
    let h = parse_header(&mut c)?;
    let v = usize::try_from(h.vocab_size).map_err(|_| Error::format(path, "vocabulary too large"))?;
    let (k, d) = (h.senses as usize, h.dim as usize);
    let mut words = Vec::with_capacity(v.min(1 << 20));
    let mut counts = Vec::with_capacity(v.min(1 << 20));
    for _ in 0..v {
        let len = c.u64()? as usize;
        let raw = c.take(len)?;
        let w = std::str::from_utf8(raw).map_err(|e| Error::format(path, format!("word {}: {e}", words.len())))?;
        words.push(w.to_string());
        counts.push(c.u64()?);
    }
    let width: u64 = if h.precision() == Precision::F32 { 4 } else { 8 };
    let mask_len = if h.has_mask() { (v * k) as u64 } else { 0 };
    let expected = c.pos as u64 + mask_len + width * (v as u64 * k as u64 * d as u64 + v as u64 * d as u64);
    if expected != bytes.len() as u64 {
        if (bytes.len() as u64) < expected {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected,
                actual: bytes.len() as u64,
            });
        }
        return Err(Error::format(path, format!("expected {expected} bytes, found {} (trailing data)", bytes.len())));
    }
    let vocab = Vocabulary::from_entries(words, counts)?;
    let mask = if h.has_mask() {
        let raw = c.take(v * k)?;
        if let Some(b) = raw.iter().find(|&&b| b > 1) {
            return Err(Error::format(path, format!("mask byte {b} is not 0 or 1")));
        }
        Some(SenseMask::from_flags(k, raw.iter().map(|&b| b == 1).collect())?)
    } else {
        None
    };
    let mut read_block = |n: usize| -> Result<Vec<f64>> {
        let raw = c.take(n * width as usize)?;
        Ok(match h.precision() {
            Precision::F64 => raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect(),
            Precision::F32 => raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
                .collect(),
        })
    };
    let sense = read_block(v * k * d)?;
    let context = read_block(v * d)?;
    let params = ModelParams::from_parts(v, k, d, sense, context)?;
    if let Some(e) = params.find_non_finite() {
        return Err(Error::format(path, e.to_string()));
    }
    Ok(Model { params, vocab, mask })
}

pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes, path)
}

/// `N d` header, then `word#k v1 … vd` for every active sense, six decimals.
pub fn write_text<W: Write>(out: &mut W, params: &ModelParams, vocab: &Vocabulary, mask: Option<&SenseMask>) -> std::io::Result<()> {
    let k = params.senses();
    let active = |w: u32, s: usize| mask.is_none_or(|m| m.is_active(w, s));
    let total = mask.map_or(params.vocab_size() * k, |m| m.total_active());
    writeln!(out, "{} {}", total, params.dim())?;
    for w in 0..params.vocab_size() as u32 {
        for s in (0..k).filter(|&s| active(w, s)) {
            write!(out, "{}#{}", vocab.word(w), s)?;
            for x in params.sense_vec(w, s) {
                write!(out, " {x:.6}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

pub fn export_text(path: &Path, params: &ModelParams, vocab: &Vocabulary, mask: Option<&SenseMask>) -> Result<()> {
    check_shapes(params, vocab, mask)?;
    let mut buf = Vec::new();
    write_text(&mut buf, params, vocab, mask).map_err(|e| Error::io(path, e))?;
    write_atomic(path, &buf)
}

/// `word<TAB>count` lines in id order.
pub fn save_vocab(path: &Path, vocab: &Vocabulary) -> Result<()> {
    let mut buf = Vec::new();
    for (w, c) in vocab.words().iter().zip(vocab.counts()) {
        writeln!(buf, "{w}\t{c}").expect("write to memory");
    }
    write_atomic(path, &buf)
}

pub fn load_vocab(path: &Path) -> Result<Vocabulary> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let (mut words, mut counts) = (Vec::new(), Vec::new());
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: &str| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: message.to_string(),
        };
        let (w, c) = line.rsplit_once('\t').ok_or_else(|| parse_err("expected word<TAB>count"))?;
        let c: u64 = c.trim().parse().map_err(|_| parse_err("count is not an unsigned integer"))?;
        words.push(w.to_string());
        counts.push(c);
    }
    Vocabulary::from_entries(words, counts).map_err(|e| Error::format(path, e.to_string()))
}

/// Mask file: `# lambda=<λ>` header, then `word<TAB>bits` with one `0`/`1`
/// per sense.
pub fn save_mask(path: &Path, mask: &SenseMask, vocab: &Vocabulary, lambda: Option<f64>) -> Result<()> {
    let mut buf = Vec::new();
    match lambda {
        Some(l) => writeln!(buf, "# lambda={l}"),
        None => writeln!(buf, "# lambda=none"),
    }
    .expect("write to memory");
    for w in 0..mask.vocab_size() as u32 {
        let bits: String = mask.row(w).iter().map(|&a| if a { '1' } else { '0' }).collect();
        writeln!(buf, "{}\t{bits}", vocab.word(w)).expect("write to memory");
    }
    write_atomic(path, &buf)
}

/// Reads a mask file against `vocab`; words absent from the file keep all
/// senses. Returns the mask and the recorded λ.
pub fn load_mask(path: &Path, vocab: &Vocabulary, senses: usize) -> Result<(SenseMask, Option<f64>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut flags = vec![true; vocab.len() * senses];
    let mut lambda = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(v) = rest.trim().strip_prefix("lambda=") {
                lambda = v.parse().ok();
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (w, bits) = line.rsplit_once('\t').ok_or_else(|| parse_err("expected word<TAB>bits".into()))?;
        let id = vocab.id(w).ok_or_else(|| parse_err(format!("word {w:?} is not in the model vocabulary")))?;
        if bits.len() != senses || !bits.bytes().all(|b| b == b'0' || b == b'1') {
            return Err(parse_err(format!("expected {senses} mask bits, found {bits:?}")));
        }
        for (s, b) in bits.bytes().enumerate() {
            flags[id as usize * senses + s] = b == b'1';
        }
    }
    let mask = SenseMask::from_flags(senses, flags).map_err(|e| Error::format(path, e.to_string()))?;
    Ok((mask, lambda))
}
