//! Surrogate power amplifiers.
//!
//! The default device is an odd-order memory polynomial
//! `y(n) = Σ_k Σ_m a[k,m] · x(n-m) · |x(n-m)|^(k-1)` with K = 7, M = 3,
//! normalized so that saturation sits near unit input amplitude. Measured
//! input/output pairs can be replayed through [`ReplayPa`].

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WdpdError};
use crate::signal::IqWaveform;

/// Peak input amplitude that defines nominal drive for the default PA.
///
/// Unit amplitude is the point where the default PA is compressed by about
/// 3.4 dB; driving a ~11 dB PAPR stimulus to this peak gives roughly -30 dB
/// ACLR and 8% EVM without predistortion.
pub const NOMINAL_PEAK_DRIVE: f64 = 1.0;

/// Odd-order memory polynomial PA.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryPolynomialPa {
    k_max: usize,
    memory_depth: usize,
    /// `a[k,m]` stored k-major, m-minor; row r holds order `2r + 1`.
    coeffs: Vec<Complex64>,
}

impl MemoryPolynomialPa {
    pub fn new(k_max: usize, memory_depth: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if k_max == 0 || k_max.is_multiple_of(2) {
            return Err(WdpdError::InvalidSpec(format!(
                "max order K must be odd and >= 1, got {k_max}"
            )));
        }
        let expected = k_max.div_ceil(2) * (memory_depth + 1);
        if coeffs.len() != expected {
            return Err(WdpdError::Dimension {
                expected,
                actual: coeffs.len(),
            });
        }
        if coeffs[0] == Complex64::new(0.0, 0.0) {
            return Err(WdpdError::InvalidSpec("linear coefficient a[1,0] is zero".into()));
        }
        if coeffs.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(WdpdError::Numeric("PA coefficients".into()));
        }
        Ok(Self {
            k_max,
            memory_depth,
            coeffs,
        })
    }

    /// Memoryless polynomial from odd-order coefficients `[a1, a3, a5, ...]`.
    pub fn memoryless(odd_coeffs: &[Complex64]) -> Result<Self> {
        Self::new(2 * odd_coeffs.len() - 1, 0, odd_coeffs.to_vec())
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn memory_depth(&self) -> usize {
        self.memory_depth
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    fn n_orders(&self) -> usize {
        self.k_max.div_ceil(2)
    }

    /// `a[k,m]` for odd order `k`.
    pub fn coeff(&self, k: usize, m: usize) -> Complex64 {
        self.coeffs[(k - 1) / 2 * (self.memory_depth + 1) + m]
    }

    /// Response of one tap to one input sample: `z · Σ_k a[k,m] |z|^(k-1)`.
    fn tap(&self, m: usize, z: Complex64) -> Complex64 {
        let r2 = z.norm_sqr();
        let mut acc = Complex64::new(0.0, 0.0);
        let mut env = 1.0;
        for r in 0..self.n_orders() {
            acc += self.coeffs[r * (self.memory_depth + 1) + m] * env;
            env *= r2;
        }
        z * acc
    }

    pub fn amplify_samples(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.iter().any(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return Err(WdpdError::Numeric("PA input".into()));
        }
        let mut y = vec![Complex64::new(0.0, 0.0); x.len()];
        for m in 0..=self.memory_depth {
            for (n, &s) in x.iter().enumerate() {
                if n + m < y.len() {
                    y[n + m] += self.tap(m, s);
                }
            }
        }
        Ok(y)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&PaJson::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: PaJson = serde_json::from_str(text)?;
        if j.re.len() != j.im.len() {
            return Err(WdpdError::Dimension {
                expected: j.re.len(),
                actual: j.im.len(),
            });
        }
        let coeffs = j
            .re
            .iter()
            .zip(&j.im)
            .map(|(&r, &i)| Complex64::new(r, i))
            .collect();
        Self::new(j.k, j.m, coeffs)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct PaJson {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "M")]
    m: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl From<&MemoryPolynomialPa> for PaJson {
    fn from(pa: &MemoryPolynomialPa) -> Self {
        Self {
            k: pa.k_max,
            m: pa.memory_depth,
            re: pa.coeffs.iter().map(|c| c.re).collect(),
            im: pa.coeffs.iter().map(|c| c.im).collect(),
        }
    }
}

/// Causal memory-polynomial amplification with zero history before n = 0.
pub fn amplify(w: &IqWaveform, pa: &MemoryPolynomialPa) -> Result<IqWaveform> {
    w.with_samples(pa.amplify_samples(w.samples())?)
}

/// DC response of the linear branch, `Σ_m a[1,m]`.
pub fn small_signal_gain(pa: &MemoryPolynomialPa) -> Complex64 {
    (0..=pa.memory_depth).map(|m| pa.coeff(1, m)).sum()
}

pub fn gain_db(g: Complex64) -> f64 {
    20.0 * g.norm().log10()
}

// Produced by `cargo run --release -p wdpd-core --example fit_default_pa`:
// odd polynomial least-squares fit (amplitudes 0..2) of a soft limiter (Rapp,
// p = 1, saturation 0.9, AM-PM 1.0·r²/(1+r²) rad), times the FIR
// [1, 0.08, -0.04, 0.015], scaled to 15 dB small-signal gain.
const DEFAULT_RE: [f64; 16] = [
    5.288868153378985,
    0.42310945227031876,
    -0.21155472613515938,
    0.07933302230068476,
    -2.706649341545784,
    -0.21653194732366277,
    0.10826597366183138,
    -0.04059974012318676,
    0.7672211436870447,
    0.061377691494963575,
    -0.030688845747481788,
    0.01150831715530567,
    -0.08150614344059831,
    -0.006520491475247865,
    0.0032602457376239326,
    -0.0012225921516089747,
];
const DEFAULT_IM: [f64; 16] = [
    0.6628979450401113,
    0.053031835603208906,
    -0.026515917801604453,
    0.00994346917560167,
    1.6546279542453477,
    0.13237023633962783,
    -0.06618511816981391,
    0.024819419313680216,
    -0.699363016136665,
    -0.0559490412909332,
    0.0279745206454666,
    -0.010490445242049975,
    0.08762368727761383,
    0.007009894982209106,
    -0.003504947491104553,
    0.0013143553091642072,
];

/// The default surrogate PA (K = 7, M = 3, 15 dB gain).
pub fn default_pa() -> MemoryPolynomialPa {
    let coeffs = DEFAULT_RE
        .iter()
        .zip(DEFAULT_IM.iter())
        .map(|(&r, &i)| Complex64::new(r, i))
        .collect();
    MemoryPolynomialPa::new(7, 3, coeffs).expect("default PA constants are valid")
}

/// Replay of an externally measured input/output pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayPa {
    pub input_ref: IqWaveform,
    pub output_ref: IqWaveform,
    /// Delay of the output relative to the input, in samples.
    pub lag: i64,
}

impl ReplayPa {
    /// LS complex gain of the recorded pair.
    pub fn linear_gain(&self) -> Complex64 {
        ls_gain(self.input_ref.samples(), self.output_ref.samples())
    }
}

fn ls_gain(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    let num: Complex64 = x.iter().zip(y).map(|(a, b)| a.conj() * b).sum();
    let den: f64 = x.iter().map(|a| a.norm_sqr()).sum();
    num / den
}

/// Integer-lag alignment of a measured pair by cross-correlation peak.
pub fn align_pair(x: &IqWaveform, y: &IqWaveform, max_lag: usize) -> Result<ReplayPa> {
    let len = x.len().min(y.len());
    if len < 2 * max_lag || len == 0 {
        return Err(WdpdError::InsufficientData(format!(
            "alignment over +/-{max_lag} samples needs {} samples, got {len}",
            2 * max_lag
        )));
    }
    if x.power() == 0.0 || y.power() == 0.0 {
        return Err(WdpdError::UndefinedPower);
    }
    let (xs, ys) = (&x.samples()[..len], &y.samples()[..len]);
    let max_lag = max_lag as i64;
    let mut best = (0i64, -1.0f64);
    for lag in -max_lag..=max_lag {
        let corr: Complex64 = overlap(xs, ys, lag)
            .map(|(a, b)| a.conj() * b)
            .sum();
        if corr.norm() > best.1 {
            best = (lag, corr.norm());
        }
    }
    let lag = best.0;
    let (xa, ya): (Vec<_>, Vec<_>) = overlap(xs, ys, lag).unzip();
    Ok(ReplayPa {
        input_ref: x.with_samples(xa)?,
        output_ref: y.with_samples(ya)?,
        lag,
    })
}

/// Pairs (x(n), y(n + lag)) over the region where both exist.
fn overlap<'a>(
    x: &'a [Complex64],
    y: &'a [Complex64],
    lag: i64,
) -> impl Iterator<Item = (Complex64, Complex64)> + 'a {
    let len = x.len() as i64;
    let start = (-lag).max(0);
    let end = (len - lag).min(len);
    (start..end).map(move |n| (x[n as usize], y[(n + lag) as usize]))
}

/// Amplifier selection used by the DPD chain.
#[derive(Debug, Clone, PartialEq)]
pub enum PaModel {
    Polynomial(MemoryPolynomialPa),
    Replay(ReplayPa),
}

impl PaModel {
    /// Complex gain that the linearized chain should exhibit.
    pub fn target_gain(&self) -> Complex64 {
        match self {
            PaModel::Polynomial(pa) => small_signal_gain(pa),
            PaModel::Replay(r) => r.linear_gain(),
        }
    }

    /// A replayed PA can only reproduce the stimulus it was measured with.
    pub fn amplify(&self, w: &IqWaveform) -> Result<IqWaveform> {
        match self {
            PaModel::Polynomial(pa) => amplify(w, pa),
            PaModel::Replay(r) => {
                if w.samples() == r.input_ref.samples() {
                    Ok(r.output_ref.clone())
                } else {
                    Err(WdpdError::Config(
                        "replay PA can only reproduce its recorded input".into(),
                    ))
                }
            }
        }
    }
}
