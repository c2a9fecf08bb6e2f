use serde::{Deserialize, Serialize};

use super::train::{train_on, Dataset, Partitions, TrainConfig, TrainOutcome};
use super::MlpSpec;
use crate::error::{Result, WdpdError};
use crate::metrics::flops;
use crate::seed::indexed_seed;

/// Hidden-layer counts and widths to try; every pair is a candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub hidden_layers: Vec<usize>,
    pub hidden_widths: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            hidden_layers: vec![1, 2, 3],
            hidden_widths: vec![8, 16, 32, 64, 128, 256],
        }
    }
}

impl SearchSpace {
    pub fn specs(&self, base: &MlpSpec) -> Vec<MlpSpec> {
        self.hidden_layers
            .iter()
            .flat_map(|&k| self.hidden_widths.iter().map(move |&n| base.resized(k, n)))
            .collect()
    }

    /// Candidates whose complexity fits under `budget` FLOPS.
    pub fn feasible(&self, base: &MlpSpec, f_symb: f64, budget: f64) -> Vec<MlpSpec> {
        self.specs(base)
            .into_iter()
            .filter(|s| flops(s, f_symb) <= budget)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct CandidateResult {
    pub spec: MlpSpec,
    pub flops: f64,
    pub seed: u64,
    pub outcome: TrainOutcome,
}

impl CandidateResult {
    pub fn val_nmse(&self) -> f64 {
        self.outcome.val_nmse
    }
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub best: CandidateResult,
    pub candidates: Vec<CandidateResult>,
}

/// Seed for a candidate. It depends only on the master seed and the shape, so
/// a candidate trained for one budget is identical when met under another.
fn candidate_seed(master: u64, spec: &MlpSpec) -> u64 {
    let shape = ((spec.hidden_layers as u64) << 32) | spec.hidden_width as u64;
    indexed_seed(master, "grid-candidate", shape)
}

/// Train every spec, optionally on a pool of `jobs` threads. Results come
/// back in input order and do not depend on `jobs`.
pub fn evaluate_candidates(
    specs: &[MlpSpec],
    parts: &Partitions,
    config: &TrainConfig,
    f_symb: f64,
    jobs: usize,
) -> Result<Vec<CandidateResult>> {
    let run = |spec: &MlpSpec| -> Result<CandidateResult> {
        let seed = candidate_seed(config.seed, spec);
        let cfg = TrainConfig { seed, ..config.clone() };
        Ok(CandidateResult {
            spec: spec.clone(),
            flops: flops(spec, f_symb),
            seed,
            outcome: train_on(spec, parts, &cfg)?,
        })
    };
    if jobs <= 1 {
        return specs.iter().map(run).collect();
    }
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| WdpdError::Config(format!("thread pool: {e}")))?;
    pool.install(|| specs.par_iter().map(run).collect())
}

/// Index of the best candidate within `budget`: lowest validation NMSE, then
/// fewer FLOPS, then fewer hidden layers.
pub fn select_best(candidates: &[CandidateResult], budget: f64) -> Option<usize> {
    candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.flops <= budget)
        .min_by(|(_, a), (_, b)| {
            a.val_nmse()
                .total_cmp(&b.val_nmse())
                .then(a.flops.total_cmp(&b.flops))
                .then(a.spec.hidden_layers.cmp(&b.spec.hidden_layers))
        })
        .map(|(i, _)| i)
}

/// Train all candidates within `budget` on a contiguous split of `data` and
/// keep the best one.
pub fn grid_search(
    base: &MlpSpec,
    f_symb: f64,
    budget: f64,
    data: &Dataset,
    space: &SearchSpace,
    config: &TrainConfig,
    jobs: usize,
) -> Result<GridOutcome> {
    let specs = space.feasible(base, f_symb, budget);
    if specs.is_empty() {
        return Err(WdpdError::InfeasibleBudget { budget });
    }
    config.validate()?;
    let parts = Partitions::contiguous(data, config.split)?;
    let candidates = evaluate_candidates(&specs, &parts, config, f_symb, jobs)?;
    let best = select_best(&candidates, budget).expect("feasible set is non-empty");
    Ok(GridOutcome {
        best: candidates[best].clone(),
        candidates,
    })
}
