use std::ops::Range;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{backward_mlp, forward_batch, init_mlp, AdamConfig, AdamState, MlpParams, MlpSpec};
use crate::error::{dim_check, Result, WdpdError};
use crate::seed::{rng, stage_seed};

/// Fewest rows a dataset may have before it is split.
pub const MIN_ROWS: usize = 100;
const EVAL_CHUNK: usize = 8192;

/// Row-aligned feature and target matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
}

impl Dataset {
    pub fn new(inputs: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        dim_check(inputs.nrows(), targets.nrows())?;
        if inputs.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(WdpdError::Numeric("dataset".into()));
        }
        Ok(Self { inputs, targets })
    }

    pub fn rows(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn input_size(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn output_size(&self) -> usize {
        self.targets.ncols()
    }

    pub fn slice(&self, range: Range<usize>) -> Dataset {
        Dataset {
            inputs: super::rows(&self.inputs, range.clone()),
            targets: super::rows(&self.targets, range),
        }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        dim_check(self.input_size(), other.input_size())?;
        dim_check(self.output_size(), other.output_size())?;
        let join = |a: &Array2<f64>, b: &Array2<f64>| {
            ndarray::concatenate(Axis(0), &[a.view(), b.view()]).expect("column counts checked")
        };
        Ok(Dataset {
            inputs: join(&self.inputs, &other.inputs),
            targets: join(&self.targets, &other.targets),
        })
    }
}

/// Contiguous train / validation / test row ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

pub fn split_rows(rows: usize, fractions: [f64; 3]) -> Split {
    let n_train = (fractions[0] * rows as f64 + 1e-9).floor() as usize;
    let n_val = (fractions[1] * rows as f64 + 1e-9).floor() as usize;
    Split {
        train: 0..n_train,
        val: n_train..n_train + n_val,
        test: n_train + n_val..rows,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Epochs without a new best validation loss before stopping.
    pub patience: usize,
    pub split: [f64; 3],
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 10_000,
            patience: 50,
            split: [0.60, 0.25, 0.15],
            batch_size: 1024,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.split.iter().sum();
        if (total - 1.0).abs() > 1e-9 || self.split.iter().any(|&f| f < 0.0) {
            return Err(WdpdError::Config(format!("split {:?} must sum to 1", self.split)));
        }
        if self.max_epochs > 0 && self.patience >= self.max_epochs {
            return Err(WdpdError::Config(format!(
                "patience ({}) must be below max_epochs ({})",
                self.patience, self.max_epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(WdpdError::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Per-epoch linear NMSE. Entry 0 is the starting point, before any update;
/// entry `e > 0` holds the mean mini-batch loss seen during epoch `e` and the
/// validation loss after it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
}

impl TrainingHistory {
    pub fn epochs_ran(&self) -> usize {
        self.val_loss.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub params: MlpParams,
    pub history: TrainingHistory,
    pub train_nmse: f64,
    pub val_nmse: f64,
    /// NaN when the test partition is empty.
    pub test_nmse: f64,
}

/// Training, validation and test rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Partitions {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl Partitions {
    /// Contiguous split of `data` in row order.
    pub fn contiguous(data: &Dataset, fractions: [f64; 3]) -> Result<Self> {
        if data.rows() < MIN_ROWS {
            return Err(WdpdError::InsufficientData(format!(
                "training needs at least {MIN_ROWS} rows, got {}",
                data.rows()
            )));
        }
        let split = split_rows(data.rows(), fractions);
        Ok(Self {
            train: data.slice(split.train),
            val: data.slice(split.val),
            test: data.slice(split.test),
        })
    }
}

/// Linear NMSE of `params` on a set of rows.
pub fn evaluate(params: &MlpParams, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<f64> {
    let (mut err, mut reference) = (0.0, 0.0);
    for start in (0..inputs.nrows()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(inputs.nrows());
        let pred = forward_batch(params, inputs.slice(ndarray::s![start..end, ..]))?;
        let t = targets.slice(ndarray::s![start..end, ..]);
        err += pred.iter().zip(t.iter()).map(|(p, y)| (p - y) * (p - y)).sum::<f64>();
        reference += t.iter().map(|y| y * y).sum::<f64>();
    }
    if reference <= 0.0 {
        return Err(WdpdError::UndefinedReference);
    }
    Ok(err / reference)
}

fn evaluate_set(params: &MlpParams, data: &Dataset) -> Result<f64> {
    evaluate(params, data.inputs.view(), data.targets.view())
}

/// Train a freshly initialized network.
pub fn train(spec: &MlpSpec, data: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    let params = init_mlp(spec, stage_seed(config.seed, "init"))?;
    train_from(params, data, config)
}

/// Train a freshly initialized network on explicit partitions.
pub fn train_on(spec: &MlpSpec, parts: &Partitions, config: &TrainConfig) -> Result<TrainOutcome> {
    let params = init_mlp(spec, stage_seed(config.seed, "init"))?;
    train_partitions(params, parts, config)
}

/// Continue training from `params` on a contiguous split of `data`.
pub fn train_from(params: MlpParams, data: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    train_partitions(params, &Partitions::contiguous(data, config.split)?, config)
}

/// Adam on shuffled mini-batches of the training rows, early-stopped on the
/// validation rows. `config.split` is not used.
pub fn train_partitions(mut params: MlpParams, parts: &Partitions, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    params.spec.validate()?;
    for set in [&parts.train, &parts.val, &parts.test] {
        dim_check(params.spec.input_size, set.input_size())?;
        dim_check(params.spec.output_size, set.output_size())?;
    }
    if parts.train.rows() == 0 || parts.val.rows() == 0 {
        return Err(WdpdError::InsufficientData(
            "training and validation partitions must be non-empty".into(),
        ));
    }
    let (train_set, val_set) = (&parts.train, &parts.val);

    let mut history = TrainingHistory {
        train_loss: vec![evaluate_set(&params, train_set)?],
        val_loss: vec![evaluate_set(&params, val_set)?],
        best_epoch: 0,
    };
    let mut best = params.clone();
    let mut best_val = history.val_loss[0];

    let mut adam = AdamState::new(&params, config.adam)?;
    let mut shuffle_rng = rng(stage_seed(config.seed, "shuffle"));
    let mut order: Vec<usize> = (0..train_set.rows()).collect();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut err, mut reference) = (0.0, 0.0);
        for batch in order.chunks(config.batch_size) {
            let x = train_set.inputs.select(Axis(0), batch);
            let y = train_set.targets.select(Axis(0), batch);
            let (loss, grads) = backward_mlp(&params, x.view(), y.view())?;
            let r: f64 = y.iter().map(|v| v * v).sum();
            err += loss * r;
            reference += r;
            adam.step(&mut params, &grads)?;
        }
        if !params.is_finite() {
            return Err(WdpdError::Numeric(format!("parameters after epoch {epoch}")));
        }
        let val = evaluate_set(&params, val_set)?;
        history.train_loss.push(err / reference);
        history.val_loss.push(val);
        if val < best_val {
            best_val = val;
            best.clone_from(&params);
            history.best_epoch = epoch;
        } else if epoch - history.best_epoch >= config.patience {
            break;
        }
    }

    let train_nmse = evaluate_set(&best, train_set)?;
    let test_nmse = if parts.test.rows() > 0 {
        evaluate_set(&best, &parts.test)?
    } else {
        f64::NAN
    };
    Ok(TrainOutcome {
        params: best,
        history,
        train_nmse,
        val_nmse: best_val,
        test_nmse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{nmse_loss, MlpParams};
    use rand::Rng;

    fn linear_dataset(rows: usize, seed: u64) -> Dataset {
        let mut r = rng(seed);
        let x = Array2::from_shape_fn((rows, 3), |_| r.gen_range(-0.5..0.5));
        let a = ndarray::array![[0.9, 0.2, -0.1], [0.05, 1.1, 0.3]];
        let y = x.dot(&a.t());
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn split_sizes() {
        let s = split_rows(1000, [0.6, 0.25, 0.15]);
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (600, 250, 150));
        let s = split_rows(1024, [0.6, 0.25, 0.15]);
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), 1024);
    }

    #[test]
    fn too_few_rows() {
        let d = linear_dataset(50, 1);
        let r = train(&MlpSpec::new(3, 2, 1, 4), &d, &TrainConfig::default());
        assert!(matches!(r, Err(WdpdError::InsufficientData(_))));
    }

    #[test]
    fn learns_a_linear_map() {
        let d = linear_dataset(1000, 2);
        let cfg = TrainConfig {
            max_epochs: 2000,
            patience: 200,
            batch_size: 32,
            seed: 5,
            adam: AdamConfig { learning_rate: 3e-3, ..Default::default() },
            ..Default::default()
        };
        let out = train(&MlpSpec::new(3, 2, 1, 8), &d, &cfg).unwrap();
        let db = 10.0 * out.test_nmse.log10();
        assert!(db <= -60.0, "test NMSE {db} dB");
        let best = out.history.val_loss[out.history.best_epoch];
        assert!(out.history.val_loss.iter().all(|&v| best <= v));
        assert_eq!(best, out.val_nmse);
    }

    #[test]
    fn stops_within_patience_and_is_deterministic() {
        let d = linear_dataset(300, 3);
        let cfg = TrainConfig { max_epochs: 400, patience: 5, batch_size: 64, seed: 9, ..Default::default() };
        let a = train(&MlpSpec::new(3, 2, 2, 6), &d, &cfg).unwrap();
        assert!(a.history.epochs_ran() <= a.history.best_epoch + cfg.patience);
        let b = train(&MlpSpec::new(3, 2, 2, 6), &d, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn residual_zero_start_loss() {
        let d = linear_dataset(200, 4);
        let spec = MlpSpec::new(3, 2, 1, 4);
        let cfg = TrainConfig { max_epochs: 3, patience: 1, seed: 1, ..Default::default() };
        let out = train_from(MlpParams::zeros(&spec), &d, &cfg).unwrap();
        let split = split_rows(200, cfg.split);
        let train_part = d.slice(split.train);
        let identity = train_part.inputs.slice(ndarray::s![.., 0..2]).to_owned();
        let (expected, _) = nmse_loss(identity.view(), train_part.targets.view()).unwrap();
        assert_eq!(out.history.train_loss[0], expected);
    }

    #[test]
    fn zero_epochs_leave_params_unchanged() {
        let d = linear_dataset(200, 6);
        let p = init_mlp(&MlpSpec::new(3, 2, 1, 4), 1).unwrap();
        let cfg = TrainConfig { max_epochs: 0, patience: 0, ..Default::default() };
        assert_eq!(train_from(p.clone(), &d, &cfg).unwrap().params, p);
    }
}
