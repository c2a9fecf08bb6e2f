//! Predistorter training and full-chain evaluation.
//!
//! The IQ-domain teacher is trained by indirect learning: a post-inverse
//! fitted on `(y / G, x)` pairs and then placed in front of the PA. Its
//! predistorted waveform becomes the target of the Walsh-domain student
//! (knowledge distillation). The student can optionally be refined by
//! Walsh-domain indirect learning on its own PA output.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::behavioral::{normalize_output, walsh_partitions, R2tdnnFeatureSpec, WdnnFeatureSpec};
use crate::error::{dim_check, Result, WdpdError};
use crate::metrics::{self, Aclr, AmAmPm, EvmMode, Psd, PsdConfig};
use crate::nn::{
    forward_batch, init_mlp, train_partitions, Dataset, MlpParams, MlpSpec,
    Partitions, TrainConfig, TrainOutcome,
};
use crate::pa_model::PaModel;
use crate::signal::{papr, IqWaveform};

fn to_complex(m: &Array2<f64>) -> Vec<Complex64> {
    m.outer_iter().map(|r| Complex64::new(r[0], r[1])).collect()
}

/// Post-inverse training pairs: features of `y / G`, targets `x`, one row per
/// sample from `M_d` on.
pub fn teacher_dataset(x: &[Complex64], y_norm: &[Complex64], features: &R2tdnnFeatureSpec) -> Result<Dataset> {
    dim_check(x.len(), y_norm.len())?;
    crate::behavioral::build_iq_dataset(y_norm, x, features)
}

/// Indirect-learning teacher: amplify `x`, refer the output back through the
/// target gain and fit the map from it to `x`.
pub fn train_teacher(
    x: &IqWaveform,
    pa: &PaModel,
    features: &R2tdnnFeatureSpec,
    spec: &MlpSpec,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    dim_check(features.input_size(), spec.input_size)?;
    let y = pa.amplify(x)?;
    let y_norm = normalize_output(y.samples(), pa.target_gain());
    let data = teacher_dataset(x.samples(), &y_norm, features)?;
    let params = init_mlp(spec, crate::seed::stage_seed(config.seed, "init"))?;
    train_partitions(params, &Partitions::contiguous(&data, config.split)?, config)
}

/// Run an IQ-domain network sample by sample over `x`, with zero history
/// before the first sample. The output has the length of `x`.
pub fn apply_teacher(teacher: &MlpParams, x: &[Complex64], features: &R2tdnnFeatureSpec) -> Result<Vec<Complex64>> {
    dim_check(features.input_size(), teacher.spec.input_size)?;
    dim_check(2, teacher.spec.output_size)?;
    let out = forward_batch(teacher, features.features(x, 0).view())?;
    Ok(to_complex(&out))
}

/// Distillation pairs for the Walsh-domain student.
#[derive(Debug, Clone, PartialEq)]
pub struct KdDataset {
    /// Packed Walsh blocks of `x` (inputs) and of the teacher output (targets).
    pub data: Dataset,
    pub walsh: WdnnFeatureSpec,
}

/// Teacher output `u` for `x` and the aligned block pairs `Walsh(x) → Walsh(u)`.
pub fn distill(
    teacher: &MlpParams,
    features: &R2tdnnFeatureSpec,
    x: &[Complex64],
    walsh: &WdnnFeatureSpec,
) -> Result<(Vec<Complex64>, KdDataset)> {
    let u = apply_teacher(teacher, x, features)?;
    let data = Dataset::new(walsh.features(x)?, walsh.features(&u)?)?;
    Ok((u, KdDataset { data, walsh: *walsh }))
}

/// Student training partitions from distillation on several stimuli.
///
/// The first stimulus is split contiguously into training, validation and
/// test ranges; every further stimulus contributes training rows only.
/// Training ranges are read at `offsets` block alignments.
pub fn kd_partitions(
    teacher: &MlpParams,
    features: &R2tdnnFeatureSpec,
    stimuli: &[&[Complex64]],
    walsh: &WdnnFeatureSpec,
    fractions: [f64; 3],
    offsets: usize,
) -> Result<Partitions> {
    let (first, rest) = stimuli
        .split_first()
        .ok_or_else(|| WdpdError::InsufficientData("no distillation stimulus".into()))?;
    let u = apply_teacher(teacher, first, features)?;
    let mut parts = walsh_partitions(first, &u, walsh, fractions, offsets)?;
    for x in rest {
        let u = apply_teacher(teacher, x, features)?;
        let extra = walsh_partitions(x, &u, walsh, [1.0, 0.0, 0.0], offsets)?;
        parts.train = parts.train.concat(&extra.train)?;
    }
    Ok(parts)
}

/// Fit the student to distillation partitions.
pub fn pretrain_student(parts: &Partitions, spec: &MlpSpec, config: &TrainConfig) -> Result<TrainOutcome> {
    if parts.train.rows() == 0 {
        return Err(WdpdError::InsufficientData("empty distillation set".into()));
    }
    let params = init_mlp(spec, crate::seed::stage_seed(config.seed, "init"))?;
    train_partitions(params, parts, config)
}

/// Predistort `x` block by block through the Walsh domain. Trailing samples
/// that do not fill a block are dropped.
pub fn apply_dpd(x: &[Complex64], student: &MlpParams, walsh: &WdnnFeatureSpec) -> Result<Vec<Complex64>> {
    let coeffs = forward_batch(student, walsh.features(x)?.view())?;
    walsh.synthesize(coeffs.view())
}

/// Walsh-domain indirect learning from scratch: fit `Walsh(y / G) → Walsh(x)`
/// on PA measurements only. This is the predistorter trained without a teacher.
pub fn train_walsh_ila(
    x: &IqWaveform,
    pa: &PaModel,
    walsh: &WdnnFeatureSpec,
    spec: &MlpSpec,
    config: &TrainConfig,
    offsets: usize,
) -> Result<TrainOutcome> {
    let y = pa.amplify(x)?;
    let y_norm = normalize_output(y.samples(), pa.target_gain());
    let parts = walsh_partitions(&y_norm, x.samples(), walsh, config.split, offsets)?;
    let params = init_mlp(spec, crate::seed::stage_seed(config.seed, "init"))?;
    train_partitions(params, &parts, config)
}

/// Refine a pretrained student by indirect learning on its own chain: the
/// post-inverse objective maps `Walsh(pa(u) / G)` to `Walsh(u)`, where
/// `u = apply_dpd(x)`. Training starts at the student and keeps the epoch
/// with the lowest validation loss, so the starting point is never beaten
/// by a worse one.
pub fn finetune_student(
    student: &MlpParams,
    x: &IqWaveform,
    pa: &PaModel,
    walsh: &WdnnFeatureSpec,
    config: &TrainConfig,
    offsets: usize,
) -> Result<TrainOutcome> {
    let u = x.with_samples(apply_dpd(x.samples(), student, walsh)?)?;
    let y = pa.amplify(&u)?;
    let y_norm = normalize_output(y.samples(), pa.target_gain());
    let parts = walsh_partitions(&y_norm, u.samples(), walsh, config.split, offsets)?;
    train_partitions(student.clone(), &parts, config)
}

/// Measurement settings for [`evaluate_chain`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMetricsConfig {
    pub psd: PsdConfig,
    /// Channel width in cycles/sample.
    pub channel_bandwidth: f64,
    pub evm_mode: EvmMode,
}

impl Default for ChainMetricsConfig {
    fn default() -> Self {
        Self {
            psd: PsdConfig::default(),
            channel_bandwidth: 0.1,
            evm_mode: EvmMode::LsComplexGain,
        }
    }
}

/// Linearization figures of one PA chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpdChainReport {
    pub evm_percent: f64,
    pub aclr_db: Aclr,
    /// Gain-normalized PA output against the input.
    pub nmse_db: f64,
    pub papr_in_db: f64,
    pub papr_predistorted_db: f64,
    /// PA output spectrum without predistortion.
    pub psd_before: Psd,
    /// PA output spectrum of this chain.
    pub psd_after: Psd,
    /// Input amplitude against gain-normalized output amplitude and phase.
    pub amam_ampm: AmAmPm,
}

impl DpdChainReport {
    pub fn is_finite(&self) -> bool {
        [
            self.evm_percent,
            self.aclr_db.lower_db,
            self.aclr_db.upper_db,
            self.aclr_db.worst_db,
            self.nmse_db,
            self.papr_in_db,
            self.papr_predistorted_db,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Amplify `u` (or `x` itself when there is no predistorter) and compare the
/// gain-normalized output with `x`. A predistorted waveform shorter than `x`
/// is compared with the matching prefix of `x`.
pub fn evaluate_chain(
    x: &IqWaveform,
    predistorted: Option<&[Complex64]>,
    pa: &PaModel,
    cfg: &ChainMetricsConfig,
) -> Result<DpdChainReport> {
    let gain = pa.target_gain();
    let baseline = pa.amplify(x)?;
    let psd_before = metrics::psd(&baseline, &cfg.psd)?;
    let (reference, y) = match predistorted {
        None => (x.clone(), baseline),
        Some(u) => {
            if u.len() > x.len() {
                return Err(WdpdError::Dimension { expected: x.len(), actual: u.len() });
            }
            let u = x.with_samples(u.to_vec())?;
            (x.truncated(u.len())?, pa.amplify(&u)?)
        }
    };
    let papr_predistorted_db = match predistorted {
        None => papr(x)?,
        Some(u) => papr(&x.with_samples(u.to_vec())?)?,
    };
    let y_norm = normalize_output(y.samples(), gain);
    let psd_after = metrics::psd(&y, &cfg.psd)?;
    Ok(DpdChainReport {
        evm_percent: metrics::evm(reference.samples(), &y_norm, cfg.evm_mode)?,
        aclr_db: metrics::aclr_from_psd(&psd_after, cfg.channel_bandwidth)?,
        nmse_db: metrics::nmse(reference.samples(), &y_norm)?,
        papr_in_db: papr(x)?,
        papr_predistorted_db,
        psd_before,
        psd_after,
        amam_ampm: metrics::amam_ampm(reference.samples(), &y_norm)?,
    })
}

/// Sizes and training settings of the full predistortion pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpdConfig {
    pub teacher_features: R2tdnnFeatureSpec,
    pub teacher_layers: usize,
    pub teacher_width: usize,
    pub teacher_train: TrainConfig,
    pub walsh: WdnnFeatureSpec,
    pub student_layers: usize,
    pub student_width: usize,
    pub student_train: TrainConfig,
    /// Additional stimuli, drawn like the main one, whose teacher outputs
    /// only extend the distillation training set.
    pub kd_extra_stimuli: usize,
    /// Block alignments of every Walsh-domain training range.
    pub train_offsets: usize,
    pub finetune_train: TrainConfig,
    pub metrics: ChainMetricsConfig,
}

impl Default for DpdConfig {
    fn default() -> Self {
        let adam = |learning_rate| crate::nn::AdamConfig { learning_rate, ..Default::default() };
        Self {
            teacher_features: R2tdnnFeatureSpec::default(),
            teacher_layers: 1,
            teacher_width: 32,
            teacher_train: TrainConfig { max_epochs: 3000, ..Default::default() },
            walsh: WdnnFeatureSpec::default(),
            student_layers: 1,
            student_width: 256,
            student_train: TrainConfig {
                max_epochs: 3000,
                batch_size: 32,
                adam: adam(3e-4),
                ..Default::default()
            },
            kd_extra_stimuli: 3,
            train_offsets: 8,
            finetune_train: TrainConfig {
                max_epochs: 3000,
                batch_size: 32,
                adam: adam(1e-4),
                ..Default::default()
            },
            metrics: ChainMetricsConfig::default(),
        }
    }
}

impl DpdConfig {
    pub fn validate(&self) -> Result<()> {
        self.teacher_features.validate()?;
        self.walsh.validate()?;
        for t in [&self.teacher_train, &self.student_train, &self.finetune_train] {
            t.validate()?;
        }
        if self.train_offsets == 0 {
            return Err(WdpdError::Config("train_offsets must be at least 1".into()));
        }
        self.teacher_spec().validate()?;
        self.student_spec().validate()
    }

    pub fn teacher_spec(&self) -> MlpSpec {
        self.teacher_features.mlp_spec(self.teacher_layers, self.teacher_width)
    }

    pub fn student_spec(&self) -> MlpSpec {
        self.walsh.mlp_spec(self.student_layers, self.student_width)
    }
}

/// Everything produced by [`run_dpd`].
#[derive(Debug, Clone)]
pub struct DpdRun {
    pub kd: bool,
    pub teacher: Option<TrainOutcome>,
    /// Student after pretraining (or Walsh indirect learning without KD).
    pub pretrained: TrainOutcome,
    pub finetuned: Option<TrainOutcome>,
    pub baseline: DpdChainReport,
    pub teacher_chain: Option<DpdChainReport>,
    pub student_chain: DpdChainReport,
}

impl DpdRun {
    /// The predistorter that was finally evaluated.
    pub fn student(&self) -> &MlpParams {
        match &self.finetuned {
            Some(f) => &f.params,
            None => &self.pretrained.params,
        }
    }
}

/// Train and evaluate a Walsh-domain predistorter for `pa` on `x`.
///
/// With `kd` the IQ teacher is trained first and the student is pretrained on
/// its output for `x` and `extra`; otherwise the student is trained by Walsh
/// indirect learning alone. Stage seeds derive from `master_seed`.
pub fn run_dpd(
    x: &IqWaveform,
    extra: &[IqWaveform],
    pa: &PaModel,
    config: &DpdConfig,
    kd: bool,
    finetune: bool,
    master_seed: u64,
) -> Result<DpdRun> {
    use crate::seed::stage_seed;
    config.validate()?;
    let seeded = |t: &TrainConfig, stage: &str| TrainConfig { seed: stage_seed(master_seed, stage), ..t.clone() };
    let baseline = evaluate_chain(x, None, pa, &config.metrics)?;
    let student_cfg = seeded(&config.student_train, "student");
    let (teacher, teacher_chain, pretrained) = if kd {
        let teacher = train_teacher(
            x,
            pa,
            &config.teacher_features,
            &config.teacher_spec(),
            &seeded(&config.teacher_train, "teacher"),
        )?;
        let u = apply_teacher(&teacher.params, x.samples(), &config.teacher_features)?;
        let chain = evaluate_chain(x, Some(&u), pa, &config.metrics)?;
        let mut stimuli = vec![x.samples()];
        stimuli.extend(extra.iter().map(|w| w.samples()));
        let parts = kd_partitions(
            &teacher.params,
            &config.teacher_features,
            &stimuli,
            &config.walsh,
            student_cfg.split,
            config.train_offsets,
        )?;
        let student = pretrain_student(&parts, &config.student_spec(), &student_cfg)?;
        (Some(teacher), Some(chain), student)
    } else {
        let student = train_walsh_ila(
            x,
            pa,
            &config.walsh,
            &config.student_spec(),
            &student_cfg,
            config.train_offsets,
        )?;
        (None, None, student)
    };
    let finetuned = if finetune {
        Some(finetune_student(
            &pretrained.params,
            x,
            pa,
            &config.walsh,
            &seeded(&config.finetune_train, "finetune"),
            config.train_offsets,
        )?)
    } else {
        None
    };
    let student = finetuned.as_ref().map_or(&pretrained.params, |f| &f.params);
    let u = apply_dpd(x.samples(), student, &config.walsh)?;
    let student_chain = evaluate_chain(x, Some(&u), pa, &config.metrics)?;
    if !student_chain.is_finite() {
        return Err(WdpdError::Numeric("student chain metrics".into()));
    }
    Ok(DpdRun { kd, teacher, pretrained, finetuned, baseline, teacher_chain, student_chain })
}
