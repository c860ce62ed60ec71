//! Per-frame token streams and their binary file format.
//!
//! A [`TokenStream`] is the streaming input of the whole crate: an ordered
//! sequence of frames, each carrying `N_f` feature tokens of dimension `D`.
//! Streams serialize to a simple little-endian binary layout (magic `STK1`)
//! so they can be produced by one process and consumed by another.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const STREAM_MAGIC: &[u8; 4] = b"STK1";

/// Tokens of a single frame, shape `(N_f, D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenFrame {
    pub tokens: Array2<f32>,
}

impl TokenFrame {
    /// Wraps a token matrix, rejecting empty shapes and non-finite entries.
    pub fn new(tokens: Array2<f32>) -> Result<Self> {
        if tokens.nrows() == 0 || tokens.ncols() == 0 {
            return Err(Error::invalid(format!(
                "token frame must be non-empty, got shape ({}, {})",
                tokens.nrows(),
                tokens.ncols()
            )));
        }
        if !tokens.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("token frame contains non-finite values"));
        }
        Ok(Self { tokens })
    }

    /// Builds a frame from a flat row-major `(n_tokens, dim)` buffer.
    pub fn from_flat(n_tokens: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        let tokens = Array2::from_shape_vec((n_tokens, dim), data)
            .map_err(|e| Error::invalid(format!("bad frame buffer: {e}")))?;
        Self::new(tokens)
    }

    pub fn n_tokens(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn dim(&self) -> usize {
        self.tokens.ncols()
    }
}

/// An ordered sequence of equally shaped token frames.
#[derive(Debug, Clone)]
pub struct TokenStream {
    pub frames: Vec<TokenFrame>,
    /// Frames per second; converts frame indices to seconds.
    pub fps: f64,
    pub duration_sec: f64,
}

impl TokenStream {
    /// Builds a stream from frames, deriving the duration as `T / fps`.
    pub fn new(frames: Vec<TokenFrame>, fps: f64) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::invalid("token stream must contain at least one frame"));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::invalid(format!("fps must be positive, got {fps}")));
        }
        let (n_f, dim) = (frames[0].n_tokens(), frames[0].dim());
        for (t, f) in frames.iter().enumerate() {
            if f.n_tokens() != n_f || f.dim() != dim {
                return Err(Error::invalid(format!(
                    "frame {t} has shape ({}, {}), expected ({n_f}, {dim})",
                    f.n_tokens(),
                    f.dim()
                )));
            }
        }
        let duration_sec = frames.len() as f64 / fps;
        Ok(Self { frames, fps, duration_sec })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn tokens_per_frame(&self) -> usize {
        self.frames[0].n_tokens()
    }

    pub fn dim(&self) -> usize {
        self.frames[0].dim()
    }

    /// Seconds at which frame `t` (1-based) ends.
    pub fn frame_to_sec(&self, frame: usize) -> f64 {
        frame as f64 / self.fps
    }

    /// Writes the `STK1` binary layout: magic, u32 `T`/`N_f`/`D`, f64 fps,
    /// then `T * N_f * D` f32 values, frame-major. All little-endian.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(STREAM_MAGIC)?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        w.write_all(&(self.tokens_per_frame() as u32).to_le_bytes())?;
        w.write_all(&(self.dim() as u32).to_le_bytes())?;
        w.write_all(&self.fps.to_le_bytes())?;
        for frame in &self.frames {
            for v in frame.tokens.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the `STK1` binary layout written by [`TokenStream::write`].
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format("stream file too short for magic".into()))?;
        if &magic != STREAM_MAGIC {
            return Err(Error::Format(format!(
                "bad stream magic {:?}, expected {:?}",
                magic, STREAM_MAGIC
            )));
        }
        let t = read_u32(&mut r)? as usize;
        let n_f = read_u32(&mut r)? as usize;
        let dim = read_u32(&mut r)? as usize;
        let fps = read_f64(&mut r)?;
        if t == 0 || n_f == 0 || dim == 0 {
            return Err(Error::Format(format!(
                "stream header has empty shape ({t}, {n_f}, {dim})"
            )));
        }
        let mut frames = Vec::with_capacity(t);
        let mut buf = vec![0u8; n_f * dim * 4];
        for idx in 0..t {
            r.read_exact(&mut buf)
                .map_err(|_| Error::Format(format!("stream truncated at frame {idx}")))?;
            let data: Vec<f32> = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            frames.push(TokenFrame::from_flat(n_f, dim, data)?);
        }
        TokenStream::new(frames, fps)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format("stream header truncated".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format("stream header truncated".into()))?;
    Ok(f64::from_le_bytes(b))
}
