//! Binary model files.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic        4 bytes   "DCOT"
//! version      u32       FORMAT_VERSION
//! d, r, l      u32 x 3
//! p            f64
//! ridge        f64
//! squash       u8        0 or 1
//! vocabulary   d x { len: u32, utf8 bytes, count: u64 }
//! prototypes   r x u32
//! layers       layer 1: r x (d + 1) f64, layers 2..l: r x (r + 1) f64, row-major
//! ```

use std::io::{self, Read, Write};

use crate::corpus::{PrototypeSet, Vocabulary};
use crate::encoder::LayerWeights;
use crate::error::{DcotError, Result};
use crate::stack::DcotModel;

pub const MAGIC: [u8; 4] = *b"DCOT";
pub const FORMAT_VERSION: u32 = 1;

/// Longest term accepted on load.
const MAX_TERM_BYTES: u32 = 1 << 20;

struct CountingWriter<W> {
    inner: W,
    written: u64,
}

impl<W: Write> CountingWriter<W> {
    fn put(&mut self, bytes: &[u8]) -> Result<()> {
        self.inner.write_all(bytes)?;
        self.written += bytes.len() as u64;
        Ok(())
    }

    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v)
            .map_err(|_| DcotError::InvariantViolation(format!("{v} does not fit in u32")))?;
        self.put(&v.to_le_bytes())
    }
}

/// Writes `model`; returns the number of bytes written.
pub fn save<W: Write>(model: &DcotModel, sink: W) -> Result<u64> {
    let mut w = CountingWriter { inner: sink, written: 0 };
    w.put(&MAGIC)?;
    w.put(&FORMAT_VERSION.to_le_bytes())?;
    w.u32(model.d())?;
    w.u32(model.r())?;
    w.u32(model.depth())?;
    w.put(&model.p().to_le_bytes())?;
    w.put(&model.ridge().to_le_bytes())?;
    w.put(&[model.squash() as u8])?;
    let vocab = model.vocab();
    for (term, &count) in vocab.terms().iter().zip(vocab.counts()) {
        w.u32(term.len())?;
        w.put(term.as_bytes())?;
        w.put(&count.to_le_bytes())?;
    }
    for &i in model.prototypes().indices() {
        w.u32(i)?;
    }
    for layer in model.layers() {
        for v in layer.row_major() {
            w.put(&v.to_le_bytes())?;
        }
    }
    w.inner.flush()?;
    Ok(w.written)
}

pub fn save_to_vec(model: &DcotModel) -> Vec<u8> {
    let mut buf = Vec::new();
    save(model, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn exact<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(truncated)?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.exact()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.exact()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.exact()?))
    }

    /// Reads `len` bytes without trusting `len` for the allocation size.
    fn bytes(&mut self, len: u32) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        (&mut self.inner).take(len as u64).read_to_end(&mut buf)?;
        if buf.len() != len as usize {
            return Err(DcotError::TruncatedFile);
        }
        Ok(buf)
    }
}

fn truncated(e: io::Error) -> DcotError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        DcotError::TruncatedFile
    } else {
        DcotError::Io(e)
    }
}

fn invalid(msg: impl Into<String>) -> DcotError {
    DcotError::InvariantViolation(msg.into())
}

/// Reads and validates a model. Trailing bytes after the last layer are an
/// error.
pub fn load<R: Read>(source: R) -> Result<DcotModel> {
    let mut rd = Reader { inner: source };
    let magic: [u8; 4] = rd.exact()?;
    if magic != MAGIC {
        return Err(DcotError::BadMagic(magic));
    }
    let version = rd.u32()?;
    if version != FORMAT_VERSION {
        return Err(DcotError::UnsupportedVersion(version));
    }
    let d = rd.u32()? as usize;
    let r = rd.u32()? as usize;
    let l = rd.u32()? as usize;
    let p = rd.f64()?;
    let ridge = rd.f64()?;
    let squash = match rd.exact::<1>()?[0] {
        0 => false,
        1 => true,
        other => return Err(invalid(format!("squash flag must be 0 or 1, got {other}"))),
    };
    if d == 0 {
        return Err(invalid("empty vocabulary"));
    }
    if r == 0 || r >= d {
        return Err(invalid(format!("prototype count {r} not in (0, {d})")));
    }
    if l == 0 {
        return Err(invalid("model has no layers"));
    }

    // Vectors below grow with the data actually read, never from the header.
    let mut terms = Vec::new();
    let mut counts = Vec::new();
    for _ in 0..d {
        let len = rd.u32()?;
        if len > MAX_TERM_BYTES {
            return Err(invalid(format!("term length {len} exceeds {MAX_TERM_BYTES}")));
        }
        let term = String::from_utf8(rd.bytes(len)?).map_err(|_| invalid("term is not valid UTF-8"))?;
        terms.push(term);
        counts.push(rd.u64()?);
    }
    let vocab = Vocabulary::from_parts(terms, counts).map_err(|e| invalid(e.to_string()))?;

    let mut indices = Vec::new();
    for _ in 0..r {
        indices.push(rd.u32()? as usize);
    }
    let prototypes = PrototypeSet::new(indices, d).map_err(|e| invalid(e.to_string()))?;

    let mut layers = Vec::new();
    for k in 0..l {
        let input_dim = if k == 0 { d } else { r };
        let mut values = Vec::new();
        for _ in 0..r * (input_dim + 1) {
            values.push(rd.f64()?);
        }
        let layer = LayerWeights::from_row_major(r, input_dim, &values)
            .map_err(|e| invalid(format!("layer {}: {e}", k + 1)))?;
        layers.push(layer);
    }

    let mut probe = [0u8; 1];
    if rd.inner.read(&mut probe)? != 0 {
        return Err(invalid("trailing bytes after the last layer"));
    }
    DcotModel::from_parts(vocab, prototypes, p, ridge, squash, layers)
}
