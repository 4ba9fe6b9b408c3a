//! On-disk segment batches.
//!
//! Binary layout, all integers little-endian:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `HSEG`                            |
//! | 4      | 2    | format version (u16, currently 1)       |
//! | 6      | 1    | kind (u8: 0 vacuum, 1 heralded)         |
//! | 7      | 9    | reserved, zero                          |
//! | 16     | 4    | segment count (u32)                     |
//! | 20     | 4    | samples per segment (u32)               |
//! | 24     | 4    | trigger index (u32)                     |
//! | 28     | 4·n  | samples as f32, segment-major           |
//!
//! A JSON sidecar with the same stem carries the generating configuration and
//! its fingerprint.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{BatchKind, Segment, SegmentBatch, SimulationConfig};

pub const MAGIC: [u8; 4] = *b"HSEG";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;
const PREAMBLE_LEN: usize = HEADER_LEN + 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchMetadata {
    pub format: String,
    pub version: u16,
    pub kind: BatchKind,
    pub segments: usize,
    pub samples_per_segment: usize,
    pub trigger_index: usize,
    pub fingerprint: String,
    pub seed: Option<u64>,
    pub config: Option<SimulationConfig>,
}

impl BatchMetadata {
    pub fn for_batch(batch: &SegmentBatch, config: Option<&SimulationConfig>) -> Self {
        Self {
            format: "HSEG".into(),
            version: VERSION,
            kind: batch.kind(),
            segments: batch.len(),
            samples_per_segment: batch.samples_per_segment(),
            trigger_index: batch.trigger_index(),
            fingerprint: batch.config_fingerprint().to_string(),
            seed: config.map(|c| c.rng_seed),
            config: config.cloned(),
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn write_batch(path: impl AsRef<Path>, batch: &SegmentBatch) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    let mut header = [0u8; HEADER_LEN];
    header[..4].copy_from_slice(&MAGIC);
    header[4..6].copy_from_slice(&VERSION.to_le_bytes());
    header[6] = batch.kind().code();
    w.write_all(&header)?;
    for v in [
        batch.len(),
        batch.samples_per_segment(),
        batch.trigger_index(),
    ] {
        let v = u32::try_from(v)
            .map_err(|_| Error::InvalidArgument(format!("{v} does not fit in u32")))?;
        w.write_all(&v.to_le_bytes())?;
    }
    for seg in batch.segments() {
        for &x in seg.samples() {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_metadata(path: impl AsRef<Path>, meta: &BatchMetadata) -> Result<()> {
    let mut json = serde_json::to_string_pretty(meta)?;
    json.push('\n');
    fs::write(path, json)?;
    Ok(())
}

pub fn read_metadata(path: impl AsRef<Path>) -> Result<BatchMetadata> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: bad batch metadata: {e}", path.display())))
}

/// Reads a batch; the fingerprint comes from the sidecar when one exists.
pub fn read_batch(path: impl AsRef<Path>) -> Result<SegmentBatch> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let fingerprint = match read_metadata(sidecar_path(path)) {
        Ok(meta) => meta.fingerprint,
        Err(Error::Io(_)) => "unknown".to_string(),
        Err(e) => return Err(e),
    };
    decode_batch(&bytes, fingerprint).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn decode_batch(bytes: &[u8], fingerprint: String) -> Result<SegmentBatch> {
    if bytes.len() < PREAMBLE_LEN {
        return Err(Error::Format(format!(
            "file is {} bytes, shorter than the {PREAMBLE_LEN}-byte header",
            bytes.len()
        )));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::Format(format!(
            "bad magic bytes {:02x?}, expected {:?}",
            &bytes[..4],
            "HSEG"
        )));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version}, expected {VERSION}"
        )));
    }
    let kind = BatchKind::from_code(bytes[6])
        .ok_or_else(|| Error::Format(format!("unknown batch kind code {}", bytes[6])))?;
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let (count, len, trigger) = (word(16), word(20), word(24));
    if count == 0 || len == 0 {
        return Err(Error::Format("empty batch".into()));
    }
    if trigger >= len {
        return Err(Error::Format(format!(
            "trigger index {trigger} outside segment length {len}"
        )));
    }
    let expected = count
        .checked_mul(len)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(PREAMBLE_LEN))
        .ok_or_else(|| Error::Format("segment dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "file holds {} bytes but the header implies {expected} ({count} segments × {len} samples)",
            bytes.len()
        )));
    }
    let data = &bytes[PREAMBLE_LEN..];
    let mut segments = Vec::with_capacity(count);
    for (k, chunk) in data.chunks_exact(4 * len).enumerate() {
        let samples: Vec<f64> = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        let seg = Segment::new(samples, trigger)
            .map_err(|e| Error::Format(format!("segment {k}: {e}")))?;
        segments.push(seg);
    }
    SegmentBatch::new(segments, kind, fingerprint)
}

/// One segment per row, for inspection.
pub fn write_batch_csv(path: impl AsRef<Path>, batch: &SegmentBatch) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "# kind={} trigger_index={} fingerprint={}",
        batch.kind().as_str(),
        batch.trigger_index(),
        batch.config_fingerprint()
    )?;
    let mut line = String::new();
    for seg in batch.segments() {
        line.clear();
        for (i, x) in seg.samples().iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            write!(line, "{}", *x as f32).unwrap();
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn batch_from(rows: Vec<Vec<f32>>, trigger: usize) -> SegmentBatch {
        let segs = rows
            .into_iter()
            .map(|r| Segment::new(r.into_iter().map(f64::from).collect(), trigger).unwrap())
            .collect();
        SegmentBatch::new(segs, BatchKind::Heralded, "abc".into()).unwrap()
    }

    proptest! {
        #[test]
        fn f32_samples_round_trip_exactly(
            rows in (1usize..6, 1usize..40).prop_flat_map(|(n, len)| {
                prop::collection::vec(prop::collection::vec(-1e6f32..1e6f32, len), n)
            })
        ) {
            let len = rows[0].len();
            let batch = batch_from(rows, len / 2);
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("b.hseg");
            write_batch(&path, &batch).unwrap();
            let back = read_batch(&path).unwrap();
            prop_assert_eq!(back.segments(), batch.segments());
            prop_assert_eq!(back.kind(), batch.kind());
            prop_assert_eq!(back.config_fingerprint(), "unknown");
        }
    }

    #[test]
    fn header_layout() {
        let batch = batch_from(vec![vec![1.5, -2.0, 0.25]], 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.hseg");
        write_batch(&path, &batch).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"HSEG");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(bytes[6], 1);
        assert!(bytes[7..16].iter().all(|b| *b == 0));
        assert_eq!(&bytes[16..20], &[1, 0, 0, 0]);
        assert_eq!(&bytes[20..24], &[3, 0, 0, 0]);
        assert_eq!(&bytes[24..28], &[1, 0, 0, 0]);
        assert_eq!(&bytes[28..32], &1.5f32.to_le_bytes());
        assert_eq!(bytes.len(), 28 + 12);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let batch = batch_from(vec![vec![1.0; 8]; 2], 4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.hseg");
        write_batch(&path, &batch).unwrap();
        let good = fs::read(&path).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        let err = decode_batch(&bad, String::new()).unwrap_err();
        assert!(matches!(err, Error::Format(ref m) if m.contains("magic")));

        let mut bad = good.clone();
        bad[4] = 9;
        assert!(matches!(
            decode_batch(&bad, String::new()),
            Err(Error::Format(_))
        ));

        let mut bad = good.clone();
        bad[6] = 7;
        assert!(matches!(
            decode_batch(&bad, String::new()),
            Err(Error::Format(_))
        ));

        let truncated = &good[..good.len() - 1];
        assert!(matches!(
            decode_batch(truncated, String::new()),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            decode_batch(&good[..10], String::new()),
            Err(Error::Format(_))
        ));

        let mut bad = good.clone();
        bad[28..32].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            decode_batch(&bad, String::new()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn sidecar_fingerprint_is_used() {
        let batch = batch_from(vec![vec![0.5; 4]], 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.hseg");
        write_batch(&path, &batch).unwrap();
        write_metadata(sidecar_path(&path), &BatchMetadata::for_batch(&batch, None)).unwrap();
        assert_eq!(read_batch(&path).unwrap().config_fingerprint(), "abc");
        let csv = dir.path().join("b.csv");
        write_batch_csv(&csv, &batch).unwrap();
        let text = fs::read_to_string(csv).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "0.5,0.5,0.5,0.5");
    }
}
