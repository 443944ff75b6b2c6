//! Binary dataset files and CSV export.
//!
//! Layout (all integers `u64` little-endian, floats `f64` little-endian):
//!
//! ```text
//! "TVFLDS1"                      7-byte magic
//! M, train_count, K              sample count, train split, SU count
//! d_1 … d_K                      feature width per SU
//! label_dim, minislots, seed
//! digest                         32 bytes, SHA-256 of the config text
//! payload                        per sample: K feature blocks, then label
//! stats                          per SU: d_k means, then d_k stds
//! config_len, config text        UTF-8 `key = value` lines
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Dataset, NormStats, ScenarioConfig, LABEL_DIM, LOCATION_DIM};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MAGIC: &[u8; 7] = b"TVFLDS1";

pub fn persist_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(dataset, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(path)?);
    read_dataset(&mut r)
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64s<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_dataset<W: Write>(ds: &Dataset, w: &mut W) -> Result<()> {
    w.write_all(MAGIC)?;
    put_u64(w, ds.len() as u64)?;
    put_u64(w, ds.train_count as u64)?;
    put_u64(w, ds.num_su() as u64)?;
    for f in &ds.features {
        put_u64(w, f.cols() as u64)?;
    }
    put_u64(w, LABEL_DIM as u64)?;
    put_u64(w, ds.config.minislots_per_slot as u64)?;
    put_u64(w, ds.config.rng_seed)?;
    w.write_all(&ds.config.digest())?;
    for i in 0..ds.len() {
        for f in &ds.features {
            put_f64s(w, f.row(i))?;
        }
        put_f64s(w, ds.labels.row(i))?;
    }
    for k in 0..ds.num_su() {
        put_f64s(w, &ds.stats.mean[k])?;
        put_f64s(w, &ds.stats.std[k])?;
    }
    let text = ds.config.canonical_text();
    put_u64(w, text.len() as u64)?;
    w.write_all(text.as_bytes())?;
    Ok(())
}

struct Cursor<R> {
    inner: R,
}

impl<R: Read> Cursor<R> {
    fn header_u64(&mut self, field: &str) -> Result<u64> {
        let mut b = [0u8; 8];
        self.inner
            .read_exact(&mut b)
            .map_err(|_| Error::MalformedHeader(format!("missing field `{field}`")))?;
        Ok(u64::from_le_bytes(b))
    }

    fn payload_f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let mut buf = vec![0u8; n * 8];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::TruncatedPayload(format!("ended inside {what}")))?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

/// Caps header-declared sizes so corrupt headers cannot trigger huge
/// allocations before the payload check fails.
const MAX_DECLARED: u64 = 1 << 32;

pub fn read_dataset<R: Read>(r: &mut R) -> Result<Dataset> {
    let mut c = Cursor { inner: r };
    let mut magic = [0u8; 7];
    c.inner
        .read_exact(&mut magic)
        .map_err(|_| Error::MalformedHeader("file shorter than magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::MalformedHeader("bad magic".into()));
    }
    let m = c.header_u64("M")?;
    let train = c.header_u64("train_count")?;
    let k = c.header_u64("K")?;
    if m > MAX_DECLARED || k > 4096 || train > m {
        return Err(Error::MalformedHeader(format!(
            "implausible sizes M={m} train={train} K={k}"
        )));
    }
    let (m, train, k) = (m as usize, train as usize, k as usize);
    let mut widths = Vec::with_capacity(k);
    for j in 0..k {
        widths.push(c.header_u64(&format!("d_{}", j + 1))? as usize);
    }
    let label_dim = c.header_u64("label_dim")? as usize;
    let minislots = c.header_u64("minislots")? as usize;
    let seed = c.header_u64("seed")?;
    let mut digest = [0u8; 32];
    c.inner
        .read_exact(&mut digest)
        .map_err(|_| Error::MalformedHeader("missing config digest".into()))?;

    if label_dim != LABEL_DIM {
        return Err(Error::DimensionMismatch {
            what: "label width",
            expected: LABEL_DIM,
            got: label_dim,
        });
    }
    for &w in &widths {
        if w != LOCATION_DIM + minislots {
            return Err(Error::DimensionMismatch {
                what: "feature block width",
                expected: LOCATION_DIM + minislots,
                got: w,
            });
        }
    }

    let mut features: Vec<Matrix> = widths.iter().map(|&w| Matrix::zeros(m, w)).collect();
    let mut labels = Matrix::zeros(m, LABEL_DIM);
    let row_len: usize = widths.iter().sum::<usize>() + LABEL_DIM;
    for i in 0..m {
        let row = c.payload_f64s(row_len, &format!("sample {i}"))?;
        let mut off = 0;
        for f in features.iter_mut() {
            let w = f.cols();
            f.row_mut(i).copy_from_slice(&row[off..off + w]);
            off += w;
        }
        labels.row_mut(i).copy_from_slice(&row[off..]);
    }
    let mut mean = Vec::with_capacity(k);
    let mut std = Vec::with_capacity(k);
    for (j, &w) in widths.iter().enumerate() {
        mean.push(c.payload_f64s(w, &format!("stats mean of SU {}", j + 1))?);
        std.push(c.payload_f64s(w, &format!("stats std of SU {}", j + 1))?);
    }
    let mut len = [0u8; 8];
    c.inner
        .read_exact(&mut len)
        .map_err(|_| Error::TruncatedPayload("missing config block".into()))?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 24 {
        return Err(Error::TruncatedPayload("config block length implausible".into()));
    }
    let mut text = vec![0u8; len as usize];
    c.inner
        .read_exact(&mut text)
        .map_err(|_| Error::TruncatedPayload("ended inside config block".into()))?;
    let text = String::from_utf8(text)
        .map_err(|_| Error::TruncatedPayload("config block is not UTF-8".into()))?;
    let config = ScenarioConfig::from_canonical_text(&text)?;
    if config.digest() != digest {
        return Err(Error::MalformedHeader(
            "config digest does not match embedded config".into(),
        ));
    }
    if config.num_su != k {
        return Err(Error::DimensionMismatch {
            what: "SU count in embedded config",
            expected: k,
            got: config.num_su,
        });
    }
    if config.rng_seed != seed || config.minislots_per_slot != minislots {
        return Err(Error::MalformedHeader(
            "header seed/minislots disagree with embedded config".into(),
        ));
    }
    Ok(Dataset {
        config,
        features,
        labels,
        train_count: train,
        stats: NormStats { mean, std },
    })
}

/// Plain-text export, one row per sample:
/// `index, split, su1_f1 … suK_fd, label_1 … label_8`.
pub fn write_csv<W: Write>(ds: &Dataset, w: &mut W) -> Result<()> {
    let mut header = vec!["index".to_string(), "split".to_string()];
    for (k, f) in ds.features.iter().enumerate() {
        for j in 0..f.cols() {
            header.push(format!("su{}_f{}", k + 1, j + 1));
        }
    }
    for name in ["pu1_power", "pu2_power", "pu1_x", "pu1_y", "pu1_z", "pu2_x", "pu2_y", "pu2_z"] {
        header.push(name.to_string());
    }
    writeln!(w, "{}", header.join(","))?;
    for i in 0..ds.len() {
        let split = if i < ds.train_count { "train" } else { "test" };
        write!(w, "{i},{split}")?;
        for f in &ds.features {
            for v in f.row(i) {
                write!(w, ",{v:?}")?;
            }
        }
        for v in ds.labels.row(i) {
            write!(w, ",{v:?}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::generate_dataset;

    fn tiny() -> Dataset {
        generate_dataset(&ScenarioConfig {
            num_samples: 6,
            train_count: 4,
            minislots_per_slot: 5,
            ..ScenarioConfig::default()
        })
        .unwrap()
    }

    fn bytes(ds: &Dataset) -> Vec<u8> {
        let mut v = Vec::new();
        write_dataset(ds, &mut v).unwrap();
        v
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ds = tiny();
        let back = read_dataset(&mut bytes(&ds).as_slice()).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn empty_input_is_malformed_header() {
        let r = read_dataset(&mut [].as_slice());
        assert!(matches!(r, Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn bad_magic() {
        let r = read_dataset(&mut b"NOTADATASET".as_slice());
        assert!(matches!(r, Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn truncated_payload_detected() {
        let b = bytes(&tiny());
        let header_len = 7 + 8 * 3 + 8 * 4 + 8 * 3 + 32;
        let r = read_dataset(&mut &b[..header_len + 100]);
        assert!(matches!(r, Err(Error::TruncatedPayload(_))), "{r:?}");
    }

    #[test]
    fn declared_su_count_larger_than_blocks() {
        let ds = tiny().with_first_sus(3).unwrap();
        let mut b = bytes(&ds);
        // K field sits after magic, M and train_count
        b[7 + 16..7 + 24].copy_from_slice(&4u64.to_le_bytes());
        let r = read_dataset(&mut b.as_slice());
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })), "{r:?}");
    }

    #[test]
    fn csv_has_one_row_per_sample() {
        let ds = tiny();
        let mut out = Vec::new();
        write_csv(&ds, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 1 + ds.len());
        let cols = lines[0].split(',').count();
        assert_eq!(cols, 2 + 4 * 8 + 8);
        assert!(lines.iter().all(|l| l.split(',').count() == cols));
    }
}
