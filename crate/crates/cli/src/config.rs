use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wdpd_core::behavioral::SweepConfig;
use wdpd_core::dpd::DpdConfig;
use wdpd_core::pa_model::{align_pair, default_pa, MemoryPolynomialPa, PaModel, NOMINAL_PEAK_DRIVE};
use wdpd_core::seed::indexed_seed;
use wdpd_core::signal::{generate_multicarrier, load_csv, load_waveform, scale_to_peak, WaveformSpec};
use wdpd_core::{walsh, IqWaveform};

use crate::error::{CliError, CliResult};

/// Which amplifier the experiment runs against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PaSelection {
    Default,
    /// Memory-polynomial coefficients in the JSON form written by the PA model.
    CoefficientsFile { path: PathBuf },
    /// A measured input/output pair. Files ending in `.csv` are read as
    /// `i,q` text; anything else as the binary waveform format.
    Replay {
        input: PathBuf,
        output: PathBuf,
        max_lag: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Root of every training-stage seed.
    pub master_seed: u64,
    pub waveform: WaveformSpec,
    /// Peak amplitude the stimulus is scaled to before the PA.
    pub peak_drive: f64,
    pub pa: PaSelection,
    /// Walsh block length; overrides the order inside `sweep` and `dpd`.
    pub walsh_order: usize,
    pub sweep: SweepConfig,
    pub dpd: DpdConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 2024,
            waveform: WaveformSpec::default(),
            peak_drive: NOMINAL_PEAK_DRIVE,
            pa: PaSelection::Default,
            walsh_order: 64,
            sweep: SweepConfig::default(),
            dpd: DpdConfig::default(),
            output_dir: PathBuf::from("wdpd-out"),
        }
    }
}

impl ExperimentConfig {
    /// Read a config file. Missing fields are an error; start from
    /// `wdpd print-default-config` to get a complete file.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::NotFound { path: path.to_path_buf() },
            _ => CliError::Core(e.into()),
        })?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.resolved()
    }

    /// Validate and push `walsh_order` into the nested configs.
    pub fn resolved(mut self) -> CliResult<Self> {
        walsh::validate_order(self.walsh_order)
            .map_err(|_| CliError::Config(format!("walsh_order {} is not a power of two", self.walsh_order)))?;
        self.sweep.walsh_features.walsh_order = self.walsh_order;
        self.dpd.walsh.walsh_order = self.walsh_order;
        self.waveform.validate()?;
        self.dpd.validate()?;
        if !(self.peak_drive > 0.0 && self.peak_drive.is_finite()) {
            return Err(CliError::Config(format!("peak_drive must be positive, got {}", self.peak_drive)));
        }
        let files: Vec<&PathBuf> = match &self.pa {
            PaSelection::Default => vec![],
            PaSelection::CoefficientsFile { path } => vec![path],
            PaSelection::Replay { input, output, .. } => vec![input, output],
        };
        for f in files {
            if !f.exists() {
                return Err(CliError::Config(format!("referenced file {} does not exist", f.display())));
            }
        }
        Ok(self)
    }

    pub fn default_json() -> String {
        serde_json::to_string_pretty(&Self::default()).expect("default config serializes")
    }

    /// The configured stimulus at the configured peak drive. A replayed PA
    /// brings its own stimulus.
    pub fn stimulus(&self) -> CliResult<IqWaveform> {
        if let PaSelection::Replay { .. } = self.pa {
            if let PaModel::Replay(r) = self.pa_model()? {
                return Ok(r.input_ref);
            }
        }
        self.stimulus_with_seed(self.waveform.seed)
    }

    fn stimulus_with_seed(&self, seed: u64) -> CliResult<IqWaveform> {
        let spec = WaveformSpec { seed, ..self.waveform.clone() };
        Ok(scale_to_peak(&generate_multicarrier(&spec)?, self.peak_drive)?)
    }

    /// Further stimuli for distillation, with seeds derived from the master seed.
    pub fn kd_stimuli(&self) -> CliResult<Vec<IqWaveform>> {
        (0..self.dpd.kd_extra_stimuli as u64)
            .map(|i| self.stimulus_with_seed(indexed_seed(self.master_seed, "kd-stimulus", i)))
            .collect()
    }

    pub fn pa_model(&self) -> CliResult<PaModel> {
        Ok(match &self.pa {
            PaSelection::Default => PaModel::Polynomial(default_pa()),
            PaSelection::CoefficientsFile { path } => PaModel::Polynomial(MemoryPolynomialPa::load(path)?),
            PaSelection::Replay { input, output, max_lag } => {
                let rate = self.waveform.sample_rate();
                let x = read_waveform(input, rate)?;
                let y = read_waveform(output, rate)?;
                PaModel::Replay(align_pair(&x, &y, *max_lag)?)
            }
        })
    }
}

/// Load a waveform file, choosing the format by extension.
pub fn read_waveform(path: &Path, csv_sample_rate: f64) -> CliResult<IqWaveform> {
    if !path.exists() {
        return Err(CliError::NotFound { path: path.to_path_buf() });
    }
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    Ok(if is_csv { load_csv(path, csv_sample_rate)? } else { load_waveform(path)? })
}
