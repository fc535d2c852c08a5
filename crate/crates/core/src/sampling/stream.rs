//! Sliding-window selector scores.
//!
//! Text format: the first line holds `video_id,clip_len_s,stride_s`, every
//! following non-empty line holds `start_ts,score`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SamplingError;

pub const DEFAULT_CLIP_LEN_S: f64 = 2.0;
pub const DEFAULT_STRIDE_S: f64 = 1.0;
const SPACING_TOLERANCE_S: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub start_ts: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreStream {
    pub video_id: String,
    pub clip_len_s: f64,
    pub stride_s: f64,
    pub entries: Vec<ScoreEntry>,
}

impl ScoreStream {
    /// Builds a stream with windows starting at `0, stride, 2*stride, ...`.
    pub fn from_scores(video_id: impl Into<String>, clip_len_s: f64, stride_s: f64, scores: &[f64]) -> Self {
        Self {
            video_id: video_id.into(),
            clip_len_s,
            stride_s,
            entries: scores
                .iter()
                .enumerate()
                .map(|(i, &score)| ScoreEntry {
                    start_ts: i as f64 * stride_s,
                    score,
                })
                .collect(),
        }
    }

    /// Representative frame time of a window: its temporal center.
    pub fn center(&self, entry: &ScoreEntry) -> f64 {
        entry.start_ts + self.clip_len_s / 2.0
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        let bad = |msg: String| SamplingError::InvalidStream {
            video_id: self.video_id.clone(),
            message: msg,
        };
        if !(self.clip_len_s > 0.0 && self.stride_s > 0.0) {
            return Err(bad("clip_len_s and stride_s must be positive".into()));
        }
        for (i, e) in self.entries.iter().enumerate() {
            if !(0.0..=1.0).contains(&e.score) {
                return Err(bad(format!("window {i}: score {} outside [0, 1]", e.score)));
            }
            if !(e.start_ts.is_finite() && e.start_ts >= 0.0) {
                return Err(bad(format!("window {i}: invalid start {}", e.start_ts)));
            }
            if i > 0 {
                let gap = e.start_ts - self.entries[i - 1].start_ts;
                if (gap - self.stride_s).abs() > SPACING_TOLERANCE_S {
                    return Err(bad(format!(
                        "window {i}: spacing {gap} differs from stride {}",
                        self.stride_s
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn parse_stream(reader: impl BufRead) -> Result<ScoreStream, SamplingError> {
    let mut lines = reader.lines().enumerate();
    let err = |line: usize, msg: &str| SamplingError::Parse {
        line,
        message: msg.to_string(),
    };
    let header = loop {
        match lines.next() {
            Some((i, l)) => {
                let l = l?;
                if !l.trim().is_empty() {
                    break (i + 1, l);
                }
            }
            None => return Err(err(1, "missing header line")),
        }
    };
    let parts: Vec<&str> = header.1.trim().split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(err(header.0, "header must be video_id,clip_len_s,stride_s"));
    }
    let num = |s: &str, line: usize, what: &str| -> Result<f64, SamplingError> {
        s.parse::<f64>()
            .map_err(|_| err(line, &format!("{what}: `{s}` is not a number")))
    };
    let clip_len_s = num(parts[1], header.0, "clip_len_s")?;
    let stride_s = num(parts[2], header.0, "stride_s")?;
    let mut entries = Vec::new();
    for (i, l) in lines {
        let l = l?;
        if l.trim().is_empty() {
            continue;
        }
        let (a, b) = l
            .trim()
            .split_once(',')
            .ok_or_else(|| err(i + 1, "expected start_ts,score"))?;
        entries.push(ScoreEntry {
            start_ts: num(a.trim(), i + 1, "start_ts")?,
            score: num(b.trim(), i + 1, "score")?,
        });
    }
    let stream = ScoreStream {
        video_id: parts[0].to_string(),
        clip_len_s,
        stride_s,
        entries,
    };
    stream.validate()?;
    Ok(stream)
}

pub fn write_stream(stream: &ScoreStream, mut w: impl Write) -> Result<(), SamplingError> {
    writeln!(w, "{},{},{}", stream.video_id, stream.clip_len_s, stream.stride_s)?;
    for e in &stream.entries {
        writeln!(w, "{},{}", e.start_ts, e.score)?;
    }
    Ok(())
}

pub fn load_stream(path: impl AsRef<Path>) -> Result<ScoreStream, SamplingError> {
    parse_stream(BufReader::new(File::open(path)?))
}

pub fn save_stream(stream: &ScoreStream, path: impl AsRef<Path>) -> Result<(), SamplingError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_stream(stream, &mut w)?;
    w.flush()?;
    Ok(())
}
