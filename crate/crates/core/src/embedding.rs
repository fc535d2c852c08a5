//! Per-video frame embeddings and the VNEM file format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        b"VNEM"
//! version      u16   (currently 1)
//! dim          u32
//! num_frames   u32
//! fps          f32
//! id_len       u16
//! video_id     id_len bytes, UTF-8
//! payload      num_frames * dim * f32, row-major
//! crc32        u32   (CRC-32/ISO-HDLC of the payload bytes)
//! ```

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Mutex;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"VNEM";
pub const VERSION: u16 = 1;
/// Embedding widths of the supported frozen backbones.
pub const KNOWN_DIMS: [usize; 3] = [2048, 768, 1024];

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("format error: {0}")]
    Format(String),
    #[error("file truncated while reading {0}")]
    TruncatedFile(&'static str),
    #[error("non-finite value at frame {frame}, component {component}")]
    NonFiniteValue { frame: usize, component: usize },
    #[error("invalid sequence: {0}")]
    Invalid(String),
    #[error("timestamp list is empty")]
    EmptyTimestampList,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    video_id: String,
    dim: usize,
    fps: f32,
    num_frames: usize,
    data: Vec<f32>,
}

impl EmbeddingSequence {
    pub fn new(
        video_id: impl Into<String>,
        dim: usize,
        fps: f32,
        data: Vec<f32>,
    ) -> Result<Self, EmbeddingError> {
        let video_id = video_id.into();
        if dim == 0 {
            return Err(EmbeddingError::Invalid("dim must be positive".into()));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(EmbeddingError::Invalid(format!("fps must be positive, got {fps}")));
        }
        if data.len() % dim != 0 {
            return Err(EmbeddingError::Invalid(format!(
                "{} elements is not a multiple of dim {dim}",
                data.len()
            )));
        }
        if video_id.len() > u16::MAX as usize {
            return Err(EmbeddingError::Invalid("video_id too long".into()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFiniteValue {
                frame: pos / dim,
                component: pos % dim,
            });
        }
        if !KNOWN_DIMS.contains(&dim) {
            warn_unknown_dim(dim);
        }
        Ok(Self {
            num_frames: data.len() / dim,
            video_id,
            dim,
            fps,
            data,
        })
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fps(&self) -> f32 {
        self.fps
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, frame: usize) -> &[f32] {
        &self.data[frame * self.dim..(frame + 1) * self.dim]
    }

    /// Frame holding timestamp `ts`: `floor(ts * fps)` clamped to the
    /// sequence. Negative timestamps clamp to frame 0.
    pub fn frame_index_at(&self, ts: f64) -> usize {
        let idx = (ts * self.fps as f64).floor();
        if idx.is_nan() || idx <= 0.0 {
            0
        } else {
            (idx as usize).min(self.num_frames.saturating_sub(1))
        }
    }

    /// Distinct frame indices for `timestamps`, first occurrence first.
    pub fn frame_indices(&self, timestamps: &[f64]) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::with_capacity(timestamps.len());
        for &ts in timestamps {
            let idx = self.frame_index_at(ts);
            if !out.contains(&idx) {
                out.push(idx);
            }
        }
        out
    }

    /// Rows at the given timestamps, de-duplicated by frame.
    pub fn slice_at(&self, timestamps: &[f64]) -> Result<Vec<&[f32]>, EmbeddingError> {
        if timestamps.is_empty() {
            return Err(EmbeddingError::EmptyTimestampList);
        }
        if self.num_frames == 0 {
            return Err(EmbeddingError::Invalid(format!("{}: no frames", self.video_id)));
        }
        Ok(self
            .frame_indices(timestamps)
            .into_iter()
            .map(|i| self.row(i))
            .collect())
    }
}

/// Warns once per process for each unfamiliar width.
fn warn_unknown_dim(dim: usize) {
    static SEEN: Mutex<BTreeSet<usize>> = Mutex::new(BTreeSet::new());
    if SEEN.lock().map(|mut s| s.insert(dim)).unwrap_or(false) {
        log::warn!("embedding dim {dim} is not a known backbone width");
    }
}

pub fn payload_crc(data: &[f32]) -> u32 {
    let mut h = crc32fast::Hasher::new();
    for v in data {
        h.update(&v.to_le_bytes());
    }
    h.finalize()
}

pub fn encode_embeddings(seq: &EmbeddingSequence, mut w: impl Write) -> Result<(), EmbeddingError> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(seq.dim as u32).to_le_bytes())?;
    w.write_all(&(seq.num_frames as u32).to_le_bytes())?;
    w.write_all(&seq.fps.to_le_bytes())?;
    w.write_all(&(seq.video_id.len() as u16).to_le_bytes())?;
    w.write_all(seq.video_id.as_bytes())?;
    for v in &seq.data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&payload_crc(&seq.data).to_le_bytes())?;
    Ok(())
}

fn read_exact_or(r: &mut impl Read, buf: &mut [u8], what: &'static str) -> Result<(), EmbeddingError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => EmbeddingError::TruncatedFile(what),
        _ => EmbeddingError::Io(e),
    })
}

fn read_array<const N: usize>(r: &mut impl Read, what: &'static str) -> Result<[u8; N], EmbeddingError> {
    let mut b = [0u8; N];
    read_exact_or(r, &mut b, what)?;
    Ok(b)
}

pub fn decode_embeddings(mut r: impl Read) -> Result<EmbeddingSequence, EmbeddingError> {
    let magic: [u8; 4] = read_array(&mut r, "magic")?;
    if &magic != MAGIC {
        return Err(EmbeddingError::Format(format!("bad magic {magic:?}")));
    }
    let version = u16::from_le_bytes(read_array(&mut r, "version")?);
    if version != VERSION {
        return Err(EmbeddingError::Format(format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(read_array(&mut r, "dim")?) as usize;
    let num_frames = u32::from_le_bytes(read_array(&mut r, "num_frames")?) as usize;
    let fps = f32::from_le_bytes(read_array(&mut r, "fps")?);
    let id_len = u16::from_le_bytes(read_array(&mut r, "video_id length")?) as usize;
    let mut id = vec![0u8; id_len];
    read_exact_or(&mut r, &mut id, "video_id")?;
    let video_id = String::from_utf8(id)
        .map_err(|_| EmbeddingError::Format("video_id is not UTF-8".into()))?;
    if dim == 0 {
        return Err(EmbeddingError::Format("dim is zero".into()));
    }
    let n = num_frames
        .checked_mul(dim)
        .ok_or_else(|| EmbeddingError::Format("payload size overflows".into()))?;
    let mut bytes = vec![0u8; n * 4];
    read_exact_or(&mut r, &mut bytes, "payload")?;
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let stored = u32::from_le_bytes(read_array(&mut r, "checksum")?);
    let actual = crc32fast::hash(&bytes);
    if stored != actual {
        return Err(EmbeddingError::Format(format!(
            "payload checksum mismatch: stored {stored:08x}, computed {actual:08x}"
        )));
    }
    EmbeddingSequence::new(video_id, dim, fps, data)
}

pub fn write_embeddings(seq: &EmbeddingSequence, path: impl AsRef<Path>) -> Result<(), EmbeddingError> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_embeddings(seq, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSequence, EmbeddingError> {
    decode_embeddings(BufReader::new(File::open(path)?))
}
