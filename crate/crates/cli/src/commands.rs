use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wdpd_core::behavioral::{complexity_sweep, sweep_csv};
use wdpd_core::dpd::{apply_dpd, evaluate_chain, run_dpd, DpdChainReport, DpdRun};
use wdpd_core::metrics::{flops, to_db, IQ_SYMBOL_RATE};
use wdpd_core::nn::{load_checkpoint, Checkpoint, MlpSpec, TrainOutcome};
use wdpd_core::signal::{papr, save_csv, save_waveform};
use wdpd_core::IqWaveform;

use crate::config::{read_waveform, ExperimentConfig};
use crate::error::{CliError, CliResult};

pub const STIMULUS_FILE: &str = "stimulus.wdpd";
pub const GENERATE_SUMMARY_FILE: &str = "generate_summary.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const TEACHER_FILE: &str = "teacher.json";
pub const STUDENT_FILE: &str = "student.json";
pub const REPORT_FILE: &str = "report.json";
pub const BASELINE_REPORT_FILE: &str = "baseline_report.json";
pub const TEACHER_REPORT_FILE: &str = "teacher_report.json";
pub const PSD_BEFORE_FILE: &str = "psd_before.csv";
pub const PSD_AFTER_FILE: &str = "psd_after.csv";
pub const AMAM_FILE: &str = "amam.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub n_samples: usize,
    pub n_carriers: usize,
    pub seed: u64,
    pub peak_drive: f64,
    pub mean_power: f64,
    pub papr_db: f64,
}

/// Headline figures of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub nmse_db: f64,
    pub aclr_worst_db: f64,
    pub aclr_lower_db: f64,
    pub aclr_upper_db: f64,
    pub evm_percent: f64,
    pub papr_in_db: f64,
    pub papr_predistorted_db: f64,
}

impl From<&DpdChainReport> for ChainSummary {
    fn from(r: &DpdChainReport) -> Self {
        Self {
            nmse_db: r.nmse_db,
            aclr_worst_db: r.aclr_db.worst_db,
            aclr_lower_db: r.aclr_db.lower_db,
            aclr_upper_db: r.aclr_db.upper_db,
            evm_percent: r.evm_percent,
            papr_in_db: r.papr_in_db,
            papr_predistorted_db: r.papr_predistorted_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub inputs: usize,
    pub outputs: usize,
    pub flops: f64,
    pub train_nmse_db: f64,
    pub val_nmse_db: f64,
    pub test_nmse_db: f64,
    pub epochs_ran: usize,
}

impl ModelSummary {
    fn new(spec: &MlpSpec, f_symb: f64, outcome: &TrainOutcome) -> Self {
        Self {
            hidden_layers: spec.hidden_layers,
            hidden_width: spec.hidden_width,
            inputs: spec.input_size,
            outputs: spec.output_size,
            flops: flops(spec, f_symb),
            train_nmse_db: to_db(outcome.train_nmse),
            val_nmse_db: to_db(outcome.val_nmse),
            test_nmse_db: to_db(outcome.test_nmse),
            epochs_ran: outcome.history.epochs_ran(),
        }
    }
}

/// Contents of each `*report.json` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReportFile {
    pub chain: String,
    pub kd: bool,
    pub finetune: bool,
    pub model: Option<ModelSummary>,
    /// Fine-tuning stage of the student, when it ran.
    pub finetune_model: Option<ModelSummary>,
    pub metrics: ChainSummary,
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(wdpd_core::WdpdError::from)?;
    s.push('\n');
    Ok(s)
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::Core(e.into()))
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Core(e.into()))
}

/// Write the stimulus and a summary of it. Returns the waveform path.
pub fn cmd_generate(cfg: &ExperimentConfig, out: Option<&Path>) -> CliResult<PathBuf> {
    ensure_dir(&cfg.output_dir)?;
    let path = out.map_or_else(|| cfg.output_dir.join(STIMULUS_FILE), Path::to_path_buf);
    let x = cfg.stimulus()?;
    write_waveform(&x, &path)?;
    let summary = GenerateSummary {
        n_samples: x.len(),
        n_carriers: cfg.waveform.n_carriers,
        seed: cfg.waveform.seed,
        peak_drive: cfg.peak_drive,
        mean_power: x.power(),
        papr_db: papr(&x)?,
    };
    write_file(&cfg.output_dir.join(GENERATE_SUMMARY_FILE), &to_json(&summary)?)?;
    Ok(path)
}

fn write_waveform(w: &IqWaveform, path: &Path) -> CliResult<()> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        save_csv(w, path)?;
    } else {
        save_waveform(w, path)?;
    }
    Ok(())
}

/// Pass a waveform file through the configured PA.
pub fn cmd_amplify(cfg: &ExperimentConfig, input: &Path, out: &Path) -> CliResult<()> {
    let x = read_waveform(input, cfg.waveform.sample_rate())?;
    let y = cfg.pa_model()?.amplify(&x)?;
    write_waveform(&y, out)
}

/// Forward-model complexity sweep of both families. Returns the CSV path.
pub fn cmd_sweep_forward(cfg: &ExperimentConfig, jobs: usize) -> CliResult<PathBuf> {
    ensure_dir(&cfg.output_dir)?;
    let pa = cfg.pa_model()?;
    let x = cfg.stimulus()?;
    let y = pa.amplify(&x)?;
    let rows = complexity_sweep(x.samples(), y.samples(), pa.target_gain(), &cfg.sweep, cfg.master_seed, jobs)?;
    let path = cfg.output_dir.join(SWEEP_FILE);
    write_file(&path, &sweep_csv(&rows))?;
    Ok(path)
}

/// Train the predistorter and write checkpoints, reports and spectra.
pub fn cmd_train_dpd(cfg: &ExperimentConfig, kd: bool, finetune: bool) -> CliResult<DpdRun> {
    let pa = cfg.pa_model()?;
    let x = cfg.stimulus()?;
    let extra = if kd { cfg.kd_stimuli()? } else { Vec::new() };
    let run = run_dpd(&x, &extra, &pa, &cfg.dpd, kd, finetune, cfg.master_seed)?;
    let files = train_dpd_artifacts(cfg, &run, finetune)?;
    ensure_dir(&cfg.output_dir)?;
    let mut written = Vec::new();
    for (name, contents) in &files {
        let path = cfg.output_dir.join(name);
        if let Err(e) = write_file(&path, contents) {
            for p in written {
                let _ = std::fs::remove_file(p);
            }
            return Err(e);
        }
        written.push(path);
    }
    Ok(run)
}

fn train_dpd_artifacts(cfg: &ExperimentConfig, run: &DpdRun, finetune: bool) -> CliResult<Vec<(&'static str, String)>> {
    let student_spec = cfg.dpd.student_spec();
    let walsh_rate = cfg.dpd.walsh.symbol_rate();
    let report = |chain: &str, model, finetune_model, metrics: &DpdChainReport| ChainReportFile {
        chain: chain.to_string(),
        kd: run.kd,
        finetune,
        model,
        finetune_model,
        metrics: ChainSummary::from(metrics),
    };
    let mut files = vec![
        (
            BASELINE_REPORT_FILE,
            to_json(&report("baseline", None, None, &run.baseline))?,
        ),
        (
            STUDENT_FILE,
            Checkpoint::from_params(run.student()).to_json()? + "\n",
        ),
        (
            REPORT_FILE,
            to_json(&report(
                "student",
                Some(ModelSummary::new(&student_spec, walsh_rate, &run.pretrained)),
                run.finetuned.as_ref().map(|f| ModelSummary::new(&student_spec, walsh_rate, f)),
                &run.student_chain,
            ))?,
        ),
        (PSD_BEFORE_FILE, run.student_chain.psd_before.to_csv()),
        (PSD_AFTER_FILE, run.student_chain.psd_after.to_csv()),
        (AMAM_FILE, run.student_chain.amam_ampm.to_csv()),
    ];
    if let (Some(teacher), Some(chain)) = (&run.teacher, &run.teacher_chain) {
        files.push((TEACHER_FILE, Checkpoint::from_params(&teacher.params).to_json()? + "\n"));
        let model = ModelSummary::new(&cfg.dpd.teacher_spec(), IQ_SYMBOL_RATE, teacher);
        files.push((TEACHER_REPORT_FILE, to_json(&report("teacher", Some(model), None, chain))?));
    }
    Ok(files)
}

/// Evaluate a stored student on the configured stimulus or on `input`.
pub fn cmd_evaluate(cfg: &ExperimentConfig, student: &Path, input: Option<&Path>) -> CliResult<ChainSummary> {
    if !student.exists() {
        return Err(CliError::NotFound { path: student.to_path_buf() });
    }
    let params = load_checkpoint(student)?;
    let x = match input {
        Some(p) => read_waveform(p, cfg.waveform.sample_rate())?,
        None => cfg.stimulus()?,
    };
    let u = apply_dpd(x.samples(), &params, &cfg.dpd.walsh)?;
    let report = evaluate_chain(&x, Some(&u), &cfg.pa_model()?, &cfg.dpd.metrics)?;
    Ok(ChainSummary::from(&report))
}

fn read_report(dir: &Path, name: &str) -> CliResult<ChainReportFile> {
    let path = dir.join(name);
    let text = std::fs::read_to_string(&path).map_err(|_| CliError::NotFound { path: path.clone() })?;
    serde_json::from_str(&text).map_err(|e| CliError::Core(e.into()))
}

fn number(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| v.to_string())
}

/// Table of the stored chain reports in `dir`. The teacher row is required
/// only when the student was distilled.
pub fn cmd_report(dir: &Path) -> CliResult<String> {
    let baseline = read_report(dir, BASELINE_REPORT_FILE)?;
    let student = read_report(dir, REPORT_FILE)?;
    let mut rows = vec![baseline];
    if student.kd {
        rows.push(read_report(dir, TEACHER_REPORT_FILE)?);
    }
    rows.push(student);
    let mut out = format!("{:<10} {:>24} {:>24} {:>24}\n", "chain", "nmse_db", "aclr_worst_db", "evm_percent");
    for r in &rows {
        let _ = writeln!(
            out,
            "{:<10} {:>24} {:>24} {:>24}",
            r.chain,
            number(r.metrics.nmse_db),
            number(r.metrics.aclr_worst_db),
            number(r.metrics.evm_percent)
        );
    }
    Ok(out)
}
