//! Figures of merit: NMSE, EVM, Welch PSD, ACLR, AM-AM/AM-PM and the
//! FLOPS complexity measure of a feedforward network.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Result, WdpdError};
use crate::nn::MlpSpec;
use crate::signal::IqWaveform;

/// Reported NMSE never goes below this floor.
pub const NMSE_FLOOR_DB: f64 = -200.0;

/// Symbol rate of the IQ-domain reference system, in symbols per second.
pub const IQ_SYMBOL_RATE: f64 = 20e9;

pub fn to_db(ratio: f64) -> f64 {
    (10.0 * ratio.log10()).max(NMSE_FLOOR_DB)
}

/// Linear NMSE `Σ|ŷ-y|² / Σ|y|²`.
pub fn nmse_ratio(y_true: &[Complex64], y_pred: &[Complex64]) -> Result<f64> {
    dim_check(y_true.len(), y_pred.len())?;
    let reference: f64 = y_true.iter().map(|y| y.norm_sqr()).sum();
    if reference <= 0.0 {
        return Err(WdpdError::UndefinedReference);
    }
    let err: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| (p - y).norm_sqr())
        .sum();
    Ok(err / reference)
}

/// NMSE in dB, clamped at [`NMSE_FLOOR_DB`].
pub fn nmse(y_true: &[Complex64], y_pred: &[Complex64]) -> Result<f64> {
    nmse_ratio(y_true, y_pred).map(to_db)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvmMode {
    /// Divide `y` by the least-squares complex gain before comparing.
    #[default]
    LsComplexGain,
    /// Compare `y` to `x` as they are.
    Unit,
}

/// Least-squares complex gain `Σ x*·y / Σ|x|²`.
pub fn ls_complex_gain(x: &[Complex64], y: &[Complex64]) -> Result<Complex64> {
    dim_check(x.len(), y.len())?;
    let den: f64 = x.iter().map(|v| v.norm_sqr()).sum();
    if den <= 0.0 {
        return Err(WdpdError::UndefinedReference);
    }
    let num: Complex64 = x.iter().zip(y).map(|(a, b)| a.conj() * b).sum();
    Ok(num / den)
}

/// Error vector magnitude of `y` against the reference `x`, in percent.
pub fn evm(x: &[Complex64], y: &[Complex64], mode: EvmMode) -> Result<f64> {
    dim_check(x.len(), y.len())?;
    let reference: f64 = x.iter().map(|v| v.norm_sqr()).sum();
    if reference <= 0.0 {
        return Err(WdpdError::UndefinedReference);
    }
    let g = match mode {
        EvmMode::LsComplexGain => ls_complex_gain(x, y)?,
        EvmMode::Unit => Complex64::new(1.0, 0.0),
    };
    if g.norm() == 0.0 {
        return Err(WdpdError::UndefinedPower);
    }
    let inv = g.inv();
    let err: f64 = x.iter().zip(y).map(|(a, b)| (b * inv - a).norm_sqr()).sum();
    Ok(100.0 * (err / reference).sqrt())
}

/// Welch estimator settings (Hann window).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdConfig {
    pub segment_length: usize,
    pub overlap_fraction: f64,
}

impl Default for PsdConfig {
    fn default() -> Self {
        Self {
            segment_length: 4096,
            overlap_fraction: 0.5,
        }
    }
}

/// Two-sided PSD over `[-0.5, 0.5)` cycles/sample.
///
/// `density` is normalized so that `Σ density · (1 / segment_length)`
/// equals the mean power of the waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Psd {
    pub freqs: Vec<f64>,
    pub density: Vec<f64>,
}

impl Psd {
    pub fn bin_width(&self) -> f64 {
        1.0 / self.freqs.len() as f64
    }

    pub fn total_power(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_width()
    }

    /// Power integrated over bins whose centre satisfies `keep`.
    pub fn band_power(&self, keep: impl Fn(f64) -> bool) -> f64 {
        self.freqs
            .iter()
            .zip(&self.density)
            .filter(|(f, _)| keep(**f))
            .map(|(_, d)| d)
            .sum::<f64>()
            * self.bin_width()
    }

    /// CSV with columns `freq_norm,psd_db`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("freq_norm,psd_db\n");
        for (f, d) in self.freqs.iter().zip(&self.density) {
            out.push_str(&format!("{f},{}\n", 10.0 * d.max(1e-300).log10()));
        }
        out
    }
}

/// Welch-averaged periodogram with a periodic Hann window.
pub fn psd(w: &IqWaveform, cfg: &PsdConfig) -> Result<Psd> {
    psd_samples(w.samples(), cfg)
}

pub fn psd_samples(x: &[Complex64], cfg: &PsdConfig) -> Result<Psd> {
    let seg = cfg.segment_length;
    if !seg.is_power_of_two() || seg < 2 {
        return Err(WdpdError::Config(format!(
            "PSD segment length must be a power of two, got {seg}"
        )));
    }
    if !(0.0..1.0).contains(&cfg.overlap_fraction) {
        return Err(WdpdError::Config(format!(
            "overlap fraction must lie in [0, 1), got {}",
            cfg.overlap_fraction
        )));
    }
    if x.len() < seg {
        return Err(WdpdError::InsufficientData(format!(
            "{} samples cannot fill one {seg}-sample PSD segment",
            x.len()
        )));
    }
    let step = (((1.0 - cfg.overlap_fraction) * seg as f64).round() as usize).max(1);
    let window: Vec<f64> = (0..seg)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / seg as f64).cos())
        .collect();
    let window_energy: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(seg);

    let mut acc = vec![0.0; seg];
    let mut buf = vec![Complex64::new(0.0, 0.0); seg];
    let mut segments = 0usize;
    let mut start = 0;
    while start + seg <= x.len() {
        for ((b, &s), &w) in buf.iter_mut().zip(&x[start..start + seg]).zip(&window) {
            *b = s * w;
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += step;
    }
    let scale = 1.0 / (window_energy * segments as f64);
    // Reorder bins from [0, 0.5) ∪ [-0.5, 0) to ascending frequency.
    let half = seg / 2;
    let order = (half..seg).chain(0..half);
    let (freqs, density) = order
        .map(|k| {
            let f = if k >= half { k as f64 - seg as f64 } else { k as f64 } / seg as f64;
            (f, acc[k] * scale)
        })
        .unzip();
    Ok(Psd { freqs, density })
}

/// Adjacent channel leakage of both neighbours, in dB relative to the main channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aclr {
    pub lower_db: f64,
    pub upper_db: f64,
    pub worst_db: f64,
}

/// ACLR for a channel of width `bandwidth` (cycles/sample) centred at DC.
///
/// Main channel: `|f| < B/2`; adjacent channels: `[-3B/2, -B/2]` and
/// `[B/2, 3B/2]`, integrated over Welch bins.
pub fn aclr(w: &IqWaveform, bandwidth: f64, cfg: &PsdConfig) -> Result<Aclr> {
    aclr_samples(w.samples(), bandwidth, cfg)
}

pub fn aclr_samples(x: &[Complex64], bandwidth: f64, cfg: &PsdConfig) -> Result<Aclr> {
    if !(bandwidth > 0.0 && 1.5 * bandwidth <= 0.5) {
        return Err(WdpdError::InvalidBand(format!(
            "channel width {bandwidth} puts adjacent channels beyond Nyquist"
        )));
    }
    let p = psd_samples(x, cfg)?;
    aclr_from_psd(&p, bandwidth)
}

pub fn aclr_from_psd(p: &Psd, bandwidth: f64) -> Result<Aclr> {
    let half = bandwidth / 2.0;
    let main = p.band_power(|f| f.abs() < half);
    if main <= 0.0 {
        return Err(WdpdError::UndefinedPower);
    }
    let lower = p.band_power(|f| (-3.0 * half..=-half).contains(&f));
    let upper = p.band_power(|f| (half..=3.0 * half).contains(&f));
    let lower_db = 10.0 * (lower / main).log10();
    let upper_db = 10.0 * (upper / main).log10();
    Ok(Aclr {
        lower_db,
        upper_db,
        worst_db: lower_db.max(upper_db),
    })
}

/// Instantaneous amplitude and phase transfer.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AmAmPm {
    /// `(|x|, |y|)` for every sample.
    pub amam: Vec<(f64, f64)>,
    /// `(|x|, arg(y/x))` in degrees, for samples with `|x| >= 1e-6`.
    pub ampm: Vec<(f64, f64)>,
}

impl AmAmPm {
    /// CSV with columns `abs_x,abs_y,phase_deg`; the phase is blank where it
    /// is undefined.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("abs_x,abs_y,phase_deg\n");
        let mut phases = self.ampm.iter().peekable();
        for &(ax, ay) in &self.amam {
            match phases.peek() {
                Some(&&(px, ph)) if px == ax && ax >= AMPM_GUARD => {
                    out.push_str(&format!("{ax},{ay},{ph}\n"));
                    phases.next();
                }
                _ => out.push_str(&format!("{ax},{ay},\n")),
            }
        }
        out
    }
}

const AMPM_GUARD: f64 = 1e-6;

pub fn amam_ampm(x: &[Complex64], y: &[Complex64]) -> Result<AmAmPm> {
    dim_check(x.len(), y.len())?;
    let amam = x.iter().zip(y).map(|(a, b)| (a.norm(), b.norm())).collect();
    let ampm = x
        .iter()
        .zip(y)
        .filter(|(a, _)| a.norm() >= AMPM_GUARD)
        .map(|(a, b)| (a.norm(), (b / a).arg().to_degrees()))
        .collect();
    Ok(AmAmPm { amam, ampm })
}

/// Operations per symbol of a `k`-layer, width-`n` network:
/// `2n(I + kn + O) + O`.
pub fn ops_per_symbol(k: usize, n: usize, inputs: usize, outputs: usize) -> u128 {
    let (k, n, i, o) = (k as u128, n as u128, inputs as u128, outputs as u128);
    2 * n * (i + k * n + o) + o
}

/// Complexity in floating-point operations per second at symbol rate `f_symb`.
pub fn flops(spec: &MlpSpec, f_symb: f64) -> f64 {
    ops_per_symbol(
        spec.hidden_layers,
        spec.hidden_width,
        spec.input_size,
        spec.output_size,
    ) as f64
        * f_symb
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::MlpSpec;
    use rand::Rng;

    fn random_pair(len: usize, seed: u64) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut rng = crate::seed::rng(seed);
        let mut draw = || Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let a: Vec<_> = (0..len).map(|_| draw()).collect();
        let b: Vec<_> = (0..len).map(|_| draw()).collect();
        (a, b)
    }

    #[test]
    fn nmse_examples() {
        let (y, _) = random_pair(100, 1);
        assert_eq!(nmse(&y, &y).unwrap(), NMSE_FLOOR_DB);
        let rot = Complex64::from_polar(0.1, 1.3);
        let pred: Vec<_> = y.iter().map(|v| v + v * rot).collect();
        assert!((nmse(&y, &pred).unwrap() + 20.0).abs() < 1e-9);
        let zero = vec![Complex64::new(0.0, 0.0); 4];
        assert!(matches!(nmse(&zero, &zero), Err(WdpdError::UndefinedReference)));
        assert!(matches!(nmse(&y, &y[..5]), Err(WdpdError::Dimension { .. })));
    }

    #[test]
    fn evm_examples() {
        let (x, _) = random_pair(64, 2);
        assert_eq!(evm(&x, &x, EvmMode::LsComplexGain).unwrap(), 0.0);
        let y: Vec<_> = x.iter().map(|v| v * 1.1).collect();
        assert!((evm(&x, &y, EvmMode::Unit).unwrap() - 10.0).abs() < 1e-9);
        let y: Vec<_> = x.iter().map(|v| v * 2.0).collect();
        assert!(evm(&x, &y, EvmMode::LsComplexGain).unwrap() < 1e-12);
    }

    #[test]
    fn evm_ls_mode_ignores_complex_scale() {
        let (x, noise) = random_pair(256, 3);
        let y: Vec<_> = x.iter().zip(&noise).map(|(a, n)| a + n * 0.05).collect();
        let base = evm(&x, &y, EvmMode::LsComplexGain).unwrap();
        let c = Complex64::new(-0.3, 2.7);
        let scaled: Vec<_> = y.iter().map(|v| v * c).collect();
        let other = evm(&x, &scaled, EvmMode::LsComplexGain).unwrap();
        assert!((base - other).abs() <= 1e-10 * base);
    }

    #[test]
    fn tone_peaks_at_its_bin() {
        let f0 = 0.123;
        let x: Vec<_> = (0..16384)
            .map(|n| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * f0 * n as f64))
            .collect();
        let p = psd_samples(&x, &PsdConfig::default()).unwrap();
        let peak = p
            .density
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!((p.freqs[peak] - f0).abs() <= 0.5 * p.bin_width());
        assert!((p.total_power() - 1.0).abs() < 0.02);
    }

    #[test]
    fn psd_rejects_short_input() {
        let x = vec![Complex64::new(1.0, 0.0); 100];
        assert!(matches!(
            psd_samples(&x, &PsdConfig::default()),
            Err(WdpdError::InsufficientData(_))
        ));
    }

    #[test]
    fn aclr_band_validation() {
        let x = vec![Complex64::new(1.0, 0.0); 8192];
        assert!(matches!(
            aclr_samples(&x, 0.4, &PsdConfig::default()),
            Err(WdpdError::InvalidBand(_))
        ));
    }

    #[test]
    fn am_pm_examples() {
        let (x, _) = random_pair(32, 5);
        let y: Vec<_> = x.iter().map(|v| v * 2.0).collect();
        let r = amam_ampm(&x, &y).unwrap();
        assert!(r.amam.iter().all(|(a, b)| (b - 2.0 * a).abs() < 1e-12));
        assert!(r.ampm.iter().all(|(_, p)| p.abs() < 1e-12));
        let rot = Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4);
        let y: Vec<_> = x.iter().map(|v| v * rot).collect();
        let r = amam_ampm(&x, &y).unwrap();
        assert!(r.ampm.iter().all(|(_, p)| (p - 45.0).abs() < 1e-9));

        let mut x0 = x.clone();
        x0[0] = Complex64::new(0.0, 0.0);
        let r = amam_ampm(&x0, &y).unwrap();
        assert_eq!((r.amam.len(), r.ampm.len()), (32, 31));
        assert!(r.to_csv().lines().nth(1).unwrap().ends_with(','));
    }

    #[test]
    fn flops_hand_example() {
        let spec = MlpSpec::new(2, 2, 1, 10).with_residual(false);
        assert_eq!(flops(&spec, 20e9), 5.64e12);
        assert_eq!(ops_per_symbol(1, 0, 2, 2), 2);
    }
}
