//! Readers and writers for meshes, feature maps, and parcellations, plus
//! synthetic subject generation.
//!
//! Binary formats are big-endian following the FreeSurfer convention; the
//! exact byte layouts are documented on the reader functions so round-trip
//! tests need no external tooling.

mod freesurfer;
mod synth;
mod text;

pub use freesurfer::{
    read_freesurfer_curv, read_freesurfer_surface, write_freesurfer_curv,
    write_freesurfer_surface, CurvFile, SurfaceFile,
};
pub use synth::{
    make_perturbation, perturbation_from_angles, synth_channel, synth_correlated_channel,
    synth_subject, voronoi_parcellation, Perturbation, PERTURBATION_MAX_DEG,
};
pub use text::{
    read_csv_features, read_labels, read_off_mesh, write_csv_features, write_labels,
    write_off_mesh,
};

use crate::error::{Error, Result};

/// Byte cursor over a fully buffered stream; parse errors carry the offset.
pub(crate) struct ByteCursor {
    data: Vec<u8>,
    pos: usize,
}

impl ByteCursor {
    pub fn new(mut reader: impl std::io::Read) -> Result<Self> {
        let mut data = Vec::new();
        reader.read_to_end(&mut data)?;
        Ok(Self { data, pos: 0 })
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Parse {
                location: format!("byte {}", self.pos),
                message: format!(
                    "truncated stream: need {n} bytes for {what}, {} left",
                    self.data.len() - self.pos
                ),
            });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        Ok(self.take(n, what)?.to_vec())
    }

    pub fn i32_be(&mut self, what: &str) -> Result<i32> {
        let b = self.take(4, what)?;
        Ok(i32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn f32_be(&mut self, what: &str) -> Result<f32> {
        let b = self.take(4, what)?;
        Ok(f32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Reads up to and including the two-newline terminator, returning the
    /// bytes before it.
    pub fn until_double_newline(&mut self, what: &str) -> Result<Vec<u8>> {
        let start = self.pos;
        let mut i = start;
        while i + 1 < self.data.len() {
            if self.data[i] == b'\n' && self.data[i + 1] == b'\n' {
                let content = self.data[start..i].to_vec();
                self.pos = i + 2;
                return Ok(content);
            }
            i += 1;
        }
        Err(Error::Parse {
            location: format!("byte {start}"),
            message: format!("unterminated {what}: no double newline found"),
        })
    }
}
