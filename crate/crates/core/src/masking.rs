//! Time-frequency masks and complex spectral targets: oracle computation from
//! ground truth, application to a mixture, and the `MSK1` tensor file format
//! shared with external mask estimators.
//!
//! File layout (all little-endian):
//!
//! | offset | size | field                                        |
//! |--------|------|----------------------------------------------|
//! | 0      | 4    | magic `b"MSK1"`                              |
//! | 4      | 2    | format version (u16, currently 1)            |
//! | 6      | 2    | kind (u16): 0 magnitude mask, 1 complex      |
//! | 8      | 4    | frames (u32)                                 |
//! | 12     | 4    | bins (u32)                                   |
//! | 16     | 4    | channels (u32)                               |
//! | 20     | ...  | f32 payload, frame-major, then bin, then channel; complex cells interleave (re, im) |

use std::io::Write;
use std::path::Path;

use ndarray::Array3;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::Spectrogram;

pub const MAGIC: [u8; 4] = *b"MSK1";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 20;
/// Refuse payloads above 4 GiB.
const MAX_PAYLOAD_BYTES: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    MagnitudeMask,
    ComplexSpectrum,
}

impl MaskKind {
    fn code(self) -> u16 {
        match self {
            MaskKind::MagnitudeMask => 0,
            MaskKind::ComplexSpectrum => 1,
        }
    }

    fn from_code(code: u16) -> Result<Self> {
        match code {
            0 => Ok(MaskKind::MagnitudeMask),
            1 => Ok(MaskKind::ComplexSpectrum),
            other => Err(Error::MaskFormat(format!("unknown kind {other}"))),
        }
    }

    fn floats_per_cell(self) -> usize {
        match self {
            MaskKind::MagnitudeMask => 1,
            MaskKind::ComplexSpectrum => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskSource {
    Oracle,
    File,
}

/// Per-channel T-F masks or complex spectra, stored as f32 in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub kind: MaskKind,
    pub frames: usize,
    pub bins: usize,
    pub channels: usize,
    pub source: MaskSource,
    values: Vec<f32>,
}

impl MaskSet {
    pub fn from_values(
        kind: MaskKind,
        (frames, bins, channels): (usize, usize, usize),
        values: Vec<f32>,
        source: MaskSource,
    ) -> Result<Self> {
        let expected = frames * bins * channels * kind.floats_per_cell();
        if values.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {frames}x{bins}x{channels} {kind:?}",
                values.len()
            )));
        }
        Ok(Self {
            kind,
            frames,
            bins,
            channels,
            source,
            values,
        })
    }

    /// Real-valued tensor (masks or features), any range.
    pub fn from_real(data: &Array3<f64>, source: MaskSource) -> Self {
        let (frames, bins, channels) = data.dim();
        Self {
            kind: MaskKind::MagnitudeMask,
            frames,
            bins,
            channels,
            source,
            values: data.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn from_complex(data: &Array3<Complex64>, source: MaskSource) -> Self {
        let (frames, bins, channels) = data.dim();
        Self {
            kind: MaskKind::ComplexSpectrum,
            frames,
            bins,
            channels,
            source,
            values: data.iter().flat_map(|c| [c.re as f32, c.im as f32]).collect(),
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.frames, self.bins, self.channels)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    fn index(&self, t: usize, f: usize, c: usize) -> usize {
        (t * self.bins + f) * self.channels + c
    }

    /// Real cell value; for magnitude masks only.
    pub fn mask(&self, t: usize, f: usize, c: usize) -> f32 {
        debug_assert_eq!(self.kind, MaskKind::MagnitudeMask);
        self.values[self.index(t, f, c)]
    }

    pub fn set_mask(&mut self, t: usize, f: usize, c: usize, v: f32) {
        let i = self.index(t, f, c);
        self.values[i] = v;
    }

    /// Complex cell value; for complex spectra only.
    pub fn spectrum(&self, t: usize, f: usize, c: usize) -> Complex64 {
        debug_assert_eq!(self.kind, MaskKind::ComplexSpectrum);
        let i = 2 * self.index(t, f, c);
        Complex64::new(self.values[i] as f64, self.values[i + 1] as f64)
    }

    pub fn to_real(&self) -> Result<Array3<f64>> {
        if self.kind != MaskKind::MagnitudeMask {
            return Err(Error::MaskKind("expected a real-valued tensor".into()));
        }
        Ok(Array3::from_shape_fn(self.dims(), |(t, f, c)| {
            self.mask(t, f, c) as f64
        }))
    }

    pub fn to_complex(&self) -> Result<Array3<Complex64>> {
        if self.kind != MaskKind::ComplexSpectrum {
            return Err(Error::MaskKind("expected a complex tensor".into()));
        }
        Ok(Array3::from_shape_fn(self.dims(), |(t, f, c)| {
            self.spectrum(t, f, c)
        }))
    }

    /// Channel `c` as a single-channel set.
    pub fn select_channel(&self, c: usize) -> MaskSet {
        let per = self.kind.floats_per_cell();
        let mut values = Vec::with_capacity(self.frames * self.bins * per);
        for t in 0..self.frames {
            for f in 0..self.bins {
                let i = self.index(t, f, c) * per;
                values.extend_from_slice(&self.values[i..i + per]);
            }
        }
        MaskSet {
            channels: 1,
            values,
            ..self.clone()
        }
    }

    /// Concatenates single- or multi-channel sets of equal kind and shape
    /// along the channel axis.
    pub fn stack(parts: &[MaskSet]) -> Result<MaskSet> {
        let first = parts
            .first()
            .ok_or_else(|| Error::DimensionMismatch("nothing to stack".into()))?;
        if parts
            .iter()
            .any(|p| p.kind != first.kind || p.frames != first.frames || p.bins != first.bins)
        {
            return Err(Error::DimensionMismatch("mask sets differ in shape".into()));
        }
        let per = first.kind.floats_per_cell();
        let channels: usize = parts.iter().map(|p| p.channels).sum();
        let mut values = Vec::with_capacity(first.frames * first.bins * channels * per);
        for t in 0..first.frames {
            for f in 0..first.bins {
                for p in parts {
                    let i = p.index(t, f, 0) * per;
                    values.extend_from_slice(&p.values[i..i + p.channels * per]);
                }
            }
        }
        Ok(MaskSet {
            channels,
            values,
            ..first.clone()
        })
    }

    fn clip_unit(&mut self) {
        if self.kind == MaskKind::MagnitudeMask {
            for v in &mut self.values {
                *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
            }
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.kind.code().to_le_bytes());
        for d in [self.frames, self.bins, self.channels] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses raw file bytes without range clipping.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::MaskFormat(format!(
                "{} bytes is shorter than the header",
                bytes.len()
            )));
        }
        if bytes[..4] != MAGIC {
            return Err(Error::MaskFormat(format!("bad magic {:?}", &bytes[..4])));
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u16_at(4);
        if version != FORMAT_VERSION {
            return Err(Error::MaskFormat(format!("unsupported version {version}")));
        }
        let kind = MaskKind::from_code(u16_at(6))?;
        let (frames, bins, channels) = (u32_at(8), u32_at(12), u32_at(16));
        let payload = (frames as u64)
            .checked_mul(bins as u64)
            .and_then(|v| v.checked_mul(channels as u64))
            .and_then(|v| v.checked_mul(4 * kind.floats_per_cell() as u64))
            .filter(|&v| v <= MAX_PAYLOAD_BYTES)
            .ok_or(Error::MaskDimensionOverflow {
                frames,
                bins,
                channels,
            })?;
        let found = (bytes.len() - HEADER_LEN) as u64;
        if found < payload {
            return Err(Error::MaskTruncated {
                expected: payload,
                found,
            });
        }
        if found > payload {
            return Err(Error::MaskFormat(format!(
                "{} trailing bytes after payload",
                found - payload
            )));
        }
        let values = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(MaskSet {
            kind,
            frames: frames as usize,
            bins: bins as usize,
            channels: channels as usize,
            source: MaskSource::File,
            values,
        })
    }
}

fn check_layout(m: &MaskSet, y: &Spectrogram) -> Result<()> {
    if m.dims() != y.data.dim() {
        return Err(Error::DimensionMismatch(format!(
            "mask {:?} vs spectrogram {:?}",
            m.dims(),
            y.data.dim()
        )));
    }
    Ok(())
}

/// `min(1, |S| / |Y|)` per cell; cells with `|Y| = 0` get 0.
pub fn oracle_smm(s: &Spectrogram, y: &Spectrogram) -> Result<MaskSet> {
    if !s.same_layout(y) {
        return Err(Error::DimensionMismatch(format!(
            "target {:?} vs mixture {:?}",
            s.data.dim(),
            y.data.dim()
        )));
    }
    let values = s
        .data
        .iter()
        .zip(y.data.iter())
        .map(|(sv, yv)| {
            let ym = yv.norm();
            if ym == 0.0 {
                0.0
            } else {
                (sv.norm() / ym).min(1.0) as f32
            }
        })
        .collect();
    MaskSet::from_values(
        MaskKind::MagnitudeMask,
        s.data.dim(),
        values,
        MaskSource::Oracle,
    )
}

/// The target spectrum itself, as an ideal complex-mapping output.
pub fn oracle_complex(s: &Spectrogram) -> MaskSet {
    MaskSet::from_complex(&s.data, MaskSource::Oracle)
}

/// Magnitude masks scale `|Y|` and keep the mixture phase; complex spectra
/// replace the mixture outright.
pub fn apply_mask(y: &Spectrogram, m: &MaskSet) -> Result<Spectrogram> {
    check_layout(m, y)?;
    let data = match m.kind {
        MaskKind::MagnitudeMask => Array3::from_shape_fn(y.data.dim(), |(t, f, c)| {
            y.data[[t, f, c]] * m.mask(t, f, c) as f64
        }),
        MaskKind::ComplexSpectrum => m.to_complex()?,
    };
    Ok(y.with_data(data))
}

pub fn save_masks(m: &MaskSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&m.encode()).map_err(|e| Error::io(path, e))
}

/// Reads a tensor file verbatim (feature files, complex spectra).
pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<MaskSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    MaskSet::decode(&bytes)
}

/// Reads a mask file; magnitude-mask values are clipped to `[0, 1]` (NaN to 0).
pub fn load_masks(path: impl AsRef<Path>) -> Result<MaskSet> {
    let mut m = read_tensor_file(path)?;
    m.clip_unit();
    Ok(m)
}
