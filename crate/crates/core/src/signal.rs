//! Complex baseband waveforms: generation, measurement and persistence.
//!
//! Frequencies are normalized so that the symbol rate is 1; a waveform's
//! `sample_rate` is therefore its oversampling factor.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WdpdError};

/// Magic bytes opening a binary waveform file.
pub const WAVEFORM_MAGIC: &[u8; 4] = b"WDPD";
/// Current binary waveform format version.
pub const WAVEFORM_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 8 + 8;

/// Fraction of the channel (on each edge) left empty by the multicarrier
/// generator, so that the occupied band sits a few estimator bins inside
/// the channel used for ACLR integration.
pub const CHANNEL_GUARD: f64 = 0.04;

/// Uniformly sampled complex baseband sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct IqWaveform {
    samples: Vec<Complex64>,
    sample_rate: f64,
}

impl IqWaveform {
    pub fn new(samples: Vec<Complex64>, sample_rate: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(WdpdError::InsufficientData("empty waveform".into()));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(WdpdError::InvalidSpec(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if samples.iter().any(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return Err(WdpdError::Numeric("waveform samples".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean of |s|².
    pub fn power(&self) -> f64 {
        mean_power(&self.samples)
    }

    /// Same sample rate, different samples (validated).
    pub fn with_samples(&self, samples: Vec<Complex64>) -> Result<Self> {
        Self::new(samples, self.sample_rate)
    }

    /// Multiply every sample by `c`.
    pub fn scaled(&self, c: Complex64) -> Result<Self> {
        self.with_samples(self.samples.iter().map(|s| s * c).collect())
    }

    /// The first `len` samples.
    pub fn truncated(&self, len: usize) -> Result<Self> {
        self.with_samples(self.samples[..len.min(self.len())].to_vec())
    }
}

pub(crate) fn mean_power(samples: &[Complex64]) -> f64 {
    samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Constellation {
    #[serde(rename = "QPSK")]
    Qpsk,
    #[serde(rename = "QAM16")]
    Qam16,
}

impl Constellation {
    fn draw<R: Rng>(self, rng: &mut R) -> Complex64 {
        match self {
            Constellation::Qpsk => {
                let a = std::f64::consts::FRAC_1_SQRT_2;
                let i = if rng.gen::<bool>() { a } else { -a };
                let q = if rng.gen::<bool>() { a } else { -a };
                Complex64::new(i, q)
            }
            Constellation::Qam16 => {
                const LEVELS: [f64; 4] = [-3.0, -1.0, 1.0, 3.0];
                let scale = 1.0 / 10f64.sqrt();
                Complex64::new(
                    LEVELS[rng.gen_range(0..4)] * scale,
                    LEVELS[rng.gen_range(0..4)] * scale,
                )
            }
        }
    }
}

/// Parameters of the multicarrier stimulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformSpec {
    pub n_carriers: usize,
    /// Channel width as a fraction of the sample rate (0.1 = 10x oversampling).
    pub occupied_fraction: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub constellation: Constellation,
}

impl Default for WaveformSpec {
    fn default() -> Self {
        Self {
            n_carriers: 2048,
            occupied_fraction: 0.1,
            n_samples: 1 << 16,
            seed: 1,
            constellation: Constellation::Qam16,
        }
    }
}

impl WaveformSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_carriers == 0 {
            return Err(WdpdError::InvalidSpec("n_carriers must be positive".into()));
        }
        if !(self.occupied_fraction > 0.0 && self.occupied_fraction <= 1.0) {
            return Err(WdpdError::InvalidSpec(format!(
                "occupied_fraction must lie in (0, 1], got {}",
                self.occupied_fraction
            )));
        }
        if self.n_samples < 16 * self.n_carriers {
            return Err(WdpdError::InvalidSpec(format!(
                "n_samples ({}) must be at least 16 x n_carriers ({})",
                self.n_samples, self.n_carriers
            )));
        }
        if self.usable_bins() < self.n_carriers as f64 {
            return Err(WdpdError::InvalidSpec(format!(
                "{} carriers do not fit in {:.1} bins of occupied band",
                self.n_carriers,
                self.usable_bins()
            )));
        }
        Ok(())
    }

    /// Oversampling factor (= sample rate at unit symbol rate).
    pub fn sample_rate(&self) -> f64 {
        1.0 / self.occupied_fraction
    }

    fn usable_bins(&self) -> f64 {
        self.occupied_fraction * (1.0 - 2.0 * CHANNEL_GUARD) * self.n_samples as f64
    }

    /// DFT bin index (signed, centered at DC) of every carrier. The band is
    /// cut into equal slots and each carrier sits at a random bin of its own
    /// slot; a strictly regular comb would make the record periodic with a
    /// short period and understate the peak power.
    fn carrier_bins(&self, rng: &mut impl Rng) -> Vec<i64> {
        let n = self.n_carriers;
        let spacing = self.usable_bins() / n as f64;
        let lo = -self.usable_bins() / 2.0;
        let edge = |k: usize| (lo + k as f64 * spacing).round() as i64;
        (0..n)
            .map(|k| {
                let (start, end) = (edge(k), edge(k + 1));
                start + rng.gen_range(0..(end - start).max(1))
            })
            .collect()
    }
}

/// Multicarrier stimulus of unit mean power.
///
/// Random constellation points are placed on `n_carriers` bins spread across
/// the occupied band of one record-length DFT, and the zero-padded
/// spectrum is inverted. The record is periodic, so the waveform is strictly
/// band limited; a single carrier degenerates to a constant-envelope tone.
pub fn generate_multicarrier(spec: &WaveformSpec) -> Result<IqWaveform> {
    spec.validate()?;
    let n = spec.n_samples;
    let mut rng = crate::seed::rng(spec.seed);
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    for bin in spec.carrier_bins(&mut rng) {
        let idx = bin.rem_euclid(n as i64) as usize;
        spectrum[idx] = spec.constellation.draw(&mut rng);
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spectrum);
    let w = IqWaveform::new(spectrum, spec.sample_rate())?;
    normalize_power(&w, 1.0)
}

/// Peak-to-average power ratio in dB.
pub fn papr(w: &IqWaveform) -> Result<f64> {
    let mean = w.power();
    if mean <= 0.0 {
        return Err(WdpdError::UndefinedPower);
    }
    let peak = w
        .samples()
        .iter()
        .map(|s| s.norm_sqr())
        .fold(0.0f64, f64::max);
    Ok((10.0 * (peak / mean).log10()).max(0.0))
}

/// Rescale so the mean sample power equals `target_power`.
pub fn normalize_power(w: &IqWaveform, target_power: f64) -> Result<IqWaveform> {
    let p = w.power();
    if p <= 0.0 {
        return Err(WdpdError::UndefinedPower);
    }
    let k = (target_power / p).sqrt();
    w.with_samples(w.samples().iter().map(|s| s * k).collect())
}

/// Rescale so the largest sample magnitude equals `peak`.
pub fn scale_to_peak(w: &IqWaveform, peak: f64) -> Result<IqWaveform> {
    let max = w.samples().iter().map(|s| s.norm()).fold(0.0f64, f64::max);
    if max <= 0.0 {
        return Err(WdpdError::UndefinedPower);
    }
    w.scaled(Complex64::new(peak / max, 0.0))
}

/// Write the binary waveform format (little-endian header + interleaved I/Q).
pub fn save_waveform(w: &IqWaveform, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&encode_waveform(w))?;
    out.flush()?;
    Ok(())
}

pub fn load_waveform(path: impl AsRef<Path>) -> Result<IqWaveform> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    decode_waveform(&bytes)
}

pub fn encode_waveform(w: &IqWaveform) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 16 * w.len());
    buf.extend_from_slice(WAVEFORM_MAGIC);
    buf.extend_from_slice(&WAVEFORM_VERSION.to_le_bytes());
    buf.extend_from_slice(&(w.len() as u64).to_le_bytes());
    buf.extend_from_slice(&w.sample_rate().to_le_bytes());
    for s in w.samples() {
        buf.extend_from_slice(&s.re.to_le_bytes());
        buf.extend_from_slice(&s.im.to_le_bytes());
    }
    buf
}

pub fn decode_waveform(bytes: &[u8]) -> Result<IqWaveform> {
    if bytes.len() < HEADER_LEN {
        return Err(WdpdError::Format(format!(
            "file holds {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[..4] != WAVEFORM_MAGIC {
        return Err(WdpdError::Format("bad magic bytes".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != WAVEFORM_VERSION {
        return Err(WdpdError::Format(format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
    let sample_rate = f64::from_le_bytes(bytes[14..22].try_into().unwrap());
    let payload = &bytes[HEADER_LEN..];
    let available = (payload.len() / 16) as u64;
    if available < count {
        return Err(WdpdError::Length {
            declared: count,
            available,
        });
    }
    if payload.len() as u64 != count * 16 {
        return Err(WdpdError::Format(format!(
            "{} trailing bytes after payload",
            payload.len() as u64 - count * 16
        )));
    }
    let samples = payload
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    IqWaveform::new(samples, sample_rate)
}

/// CSV export with an `i,q` header row.
pub fn save_csv(w: &IqWaveform, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "i,q")?;
    for s in w.samples() {
        writeln!(out, "{},{}", s.re, s.im)?;
    }
    out.flush()?;
    Ok(())
}

/// CSV import; the file carries no rate, so the caller supplies it.
pub fn load_csv(path: impl AsRef<Path>, sample_rate: f64) -> Result<IqWaveform> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().transpose()?;
    if header.as_deref().map(str::trim) != Some("i,q") {
        return Err(WdpdError::Format("CSV must start with an `i,q` header".into()));
    }
    let mut samples = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |field: Option<&str>| -> Result<f64> {
            field
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| WdpdError::Format(format!("bad CSV row {}: {line:?}", lineno + 2)))
        };
        let mut fields = line.split(',');
        let i = parse(fields.next())?;
        let q = parse(fields.next())?;
        samples.push(Complex64::new(i, q));
    }
    IqWaveform::new(samples, sample_rate)
}
