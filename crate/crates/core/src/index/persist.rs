//! Binary index layout (little-endian):
//!
//! ```text
//! magic "CTXIDX1\0" | u32 version | u32 hash_bits | u32 ngram_order | u64 N
//! N x (u32 byte length, UTF-8 para_id)
//! (N + 1) x u64 row offsets | nnz x u32 bins | nnz x f64 weights
//! N x f64 doc norms
//! u64 count | count x (u32 bin, f64 idf)
//! ```

use std::io::{BufWriter, Write};
use std::path::Path;

use super::TfidfIndex;
use crate::error::{Error, Result};
use crate::text::Stopwords;

pub const MAGIC: &[u8; 8] = b"CTXIDX1\0";
pub const VERSION: u32 = 1;

pub fn save_index(index: &TfidfIndex, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_index(index, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_index<W: Write>(idx: &TfidfIndex, w: &mut W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&idx.hash_bits.to_le_bytes())?;
    w.write_all(&idx.ngram_order.to_le_bytes())?;
    w.write_all(&(idx.para_ids.len() as u64).to_le_bytes())?;
    for id in &idx.para_ids {
        w.write_all(&(id.len() as u32).to_le_bytes())?;
        w.write_all(id.as_bytes())?;
    }
    for o in &idx.row_offsets {
        w.write_all(&o.to_le_bytes())?;
    }
    for b in &idx.bins {
        w.write_all(&b.to_le_bytes())?;
    }
    for x in &idx.weights {
        w.write_all(&x.to_le_bytes())?;
    }
    for x in &idx.doc_norms {
        w.write_all(&x.to_le_bytes())?;
    }
    w.write_all(&(idx.idf.len() as u64).to_le_bytes())?;
    for (b, v) in &idx.idf {
        w.write_all(&b.to_le_bytes())?;
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Load with the bundled English stopwords, which `build_index` uses by default.
pub fn load_index(path: &Path) -> Result<TfidfIndex> {
    load_index_with(path, Stopwords::english())
}

/// The file does not record the stopword list; pass the one used at build time.
pub fn load_index_with(path: &Path, stopwords: Stopwords) -> Result<TfidfIndex> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, stopwords)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self, n: u64) -> Result<usize> {
        let n = usize::try_from(n).map_err(|_| Error::Format("length overflow".into()))?;
        // every element takes at least 4 bytes
        if n > (self.buf.len() - self.pos) / 4 + 1 {
            return Err(Error::Format(format!("length {n} exceeds file size")));
        }
        Ok(n)
    }
}

fn decode(buf: &[u8], stopwords: Stopwords) -> Result<TfidfIndex> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(MAGIC.len()).map_err(|_| Error::Format("missing magic".into()))? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let hash_bits = r.u32()?;
    let ngram_order = r.u32()?;
    if !(1..=32).contains(&hash_bits) || ngram_order == 0 {
        return Err(Error::Format(format!(
            "bad header: hash_bits {hash_bits}, ngram_order {ngram_order}"
        )));
    }
    let n = r.u64()?;
    let n = r.len(n)?;

    let mut para_ids = Vec::with_capacity(n);
    for _ in 0..n {
        let len = r.u32()? as usize;
        let raw = r.take(len)?;
        let id = std::str::from_utf8(raw).map_err(|_| Error::Format("para_id is not UTF-8".into()))?;
        para_ids.push(id.to_string());
    }
    let mut row_offsets = Vec::with_capacity(n + 1);
    for _ in 0..=n {
        row_offsets.push(r.u64()?);
    }
    if row_offsets[0] != 0 || row_offsets.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Format("row offsets not monotone from 0".into()));
    }
    let nnz = r.len(row_offsets[n])?;
    let mut bins = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        let b = r.u32()?;
        if hash_bits < 32 && b >> hash_bits != 0 {
            return Err(Error::Format(format!("bin {b} out of range")));
        }
        bins.push(b);
    }
    let mut weights = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        weights.push(r.f64()?);
    }
    let mut doc_norms = Vec::with_capacity(n);
    for _ in 0..n {
        doc_norms.push(r.f64()?);
    }
    let count = r.u64()?;
    let count = r.len(count)?;
    let mut idf = Vec::with_capacity(count);
    for _ in 0..count {
        idf.push((r.u32()?, r.f64()?));
    }
    if idf.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(Error::Format("idf table not sorted by bin".into()));
    }
    if r.pos != buf.len() {
        return Err(Error::Format(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok(TfidfIndex::from_parts(
        hash_bits,
        ngram_order,
        stopwords,
        para_ids,
        row_offsets,
        bins,
        weights,
        doc_norms,
        idf,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{build_index, IndexConfig, Paragraph};

    fn index() -> TfidfIndex {
        let docs: Vec<Paragraph> = ["the cat sat", "the dog sat", "cats and dogs"]
            .iter()
            .enumerate()
            .map(|(i, t)| Paragraph {
                para_id: format!("d{}", i + 1),
                doc_id: "doc".into(),
                text: t.to_string(),
            })
            .collect();
        build_index(&docs, &IndexConfig::default()).unwrap()
    }

    #[test]
    fn round_trip_preserves_rankings() {
        let idx = index();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i.bin");
        save_index(&idx, &path).unwrap();
        let back = load_index(&path).unwrap();
        assert_eq!(idx.query("cat sat", 3), back.query("cat sat", 3));
        assert_eq!(back.para_ids(), idx.para_ids());
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
    }

    #[test]
    fn rejects_truncated_and_empty() {
        let idx = index();
        let mut buf = Vec::new();
        write_index(&idx, &mut buf).unwrap();
        for cut in [0, 5, 8, 20, buf.len() / 2, buf.len() - 1] {
            assert!(
                matches!(decode(&buf[..cut], Stopwords::english()), Err(Error::Format(_))),
                "cut at {cut}"
            );
        }
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad, Stopwords::english()), Err(Error::Format(_))));
        let mut v2 = buf.clone();
        v2[8] = 2;
        assert!(matches!(decode(&v2, Stopwords::english()), Err(Error::Format(m)) if m.contains("version")));
        let mut extra = buf;
        extra.push(0);
        assert!(matches!(decode(&extra, Stopwords::english()), Err(Error::Format(_))));
    }
}
