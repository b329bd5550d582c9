//! Percentile bootstrap with a reproducible seeding contract.
//!
//! Replicate `b` (zero-based) draws from a ChaCha8 stream seeded with
//! `splitmix64(root + (b + 1) · 0x9E3779B97F4A7C15)`, so any replicate can be
//! reproduced on its own and serial and parallel runs agree bit for bit.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Group};
use crate::error::{Error, Result};
use crate::report::ConfidenceInterval;

/// Largest tolerated share of failed replicates.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `index`-th independent substream of `root`.
pub fn substream_seed(root: u64, index: u64) -> u64 {
    splitmix64(root.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

pub fn substream_rng(root: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream_seed(root, index))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    /// Resample subjects within each group, keeping group sizes.
    StratifiedByGroup,
    /// Resample trial subjects only; external rows are kept as they are.
    TrialOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
    pub resampling: Resampling,
    /// Worker threads; 0 picks a default, 1 runs serially.
    #[serde(default)]
    pub threads: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 1000,
            level: 0.95,
            seed: 0,
            resampling: Resampling::StratifiedByGroup,
            threads: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::InvalidConfig(format!(
                "bootstrap needs at least 2 replicates, got {}",
                self.replicates
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidConfig(format!("level {} must lie in (0, 1)", self.level)));
        }
        Ok(())
    }

    /// Reads the thread cap from `EXTCTRL_THREADS`, keeping the current value if unset.
    pub fn with_env_threads(mut self) -> Result<Self> {
        if let Ok(v) = std::env::var("EXTCTRL_THREADS") {
            self.threads = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("EXTCTRL_THREADS=`{v}` is not a count")))?;
        }
        Ok(self)
    }
}

/// One analysis run: its scalar estimate and how many models it fitted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateValue {
    pub estimate: f64,
    pub model_fits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub replicates: usize,
    pub failures: usize,
    pub failure_fraction: f64,
    /// Model fits performed across successful replicates.
    pub refits: usize,
    pub median: f64,
    /// Successful replicate estimates in replicate order.
    pub estimates: Vec<f64>,
}

impl BootstrapResult {
    pub fn interval(&self) -> ConfidenceInterval {
        ConfidenceInterval {
            method: "percentile bootstrap".into(),
            level: self.level,
            lower: self.lower,
            upper: self.upper,
            replicates: self.replicates,
            failures: self.failures,
            failure_fraction: self.failure_fraction,
            refits: self.refits,
        }
    }
}

/// Row indices of one bootstrap sample. The group of each position is kept.
pub fn resample_indices<R: Rng>(groups: &[Group], resampling: Resampling, rng: &mut R) -> Vec<usize> {
    let pools: [Vec<usize>; 2] = [Group::Trial, Group::External].map(|g| {
        groups
            .iter()
            .enumerate()
            .filter(|(_, &h)| h == g)
            .map(|(i, _)| i)
            .collect()
    });
    groups
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let pool = &pools[usize::from(!g.is_trial())];
            if !g.is_trial() && resampling == Resampling::TrialOnly {
                i
            } else {
                pool[rng.random_range(0..pool.len())]
            }
        })
        .collect()
}

/// Type-7 sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty data");
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap of `analysis`, which must redo every model fit it needs.
pub fn bootstrap_ci<F>(data: &Dataset, analysis: F, config: &BootstrapConfig) -> Result<BootstrapResult>
where
    F: Fn(&Dataset) -> Result<ReplicateValue> + Sync,
{
    config.validate()?;
    let point = analysis(data)?.estimate;
    let groups = data.groups();
    let run = |b: usize| -> Option<ReplicateValue> {
        let mut rng = substream_rng(config.seed, b as u64);
        let rows = resample_indices(&groups, config.resampling, &mut rng);
        let sample = data.subset(&rows).ok()?;
        analysis(&sample).ok().filter(|v| v.estimate.is_finite())
    };
    let outcomes: Vec<Option<ReplicateValue>> = if config.threads == 1 {
        (0..config.replicates).map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| (0..config.replicates).into_par_iter().map(run).collect())
    };

    let estimates: Vec<f64> = outcomes.iter().flatten().map(|v| v.estimate).collect();
    let refits = outcomes.iter().flatten().map(|v| v.model_fits).sum();
    let failures = config.replicates - estimates.len();
    if failures as f64 > MAX_FAILURE_FRACTION * config.replicates as f64 {
        return Err(Error::TooManyReplicateFailures {
            failures,
            replicates: config.replicates,
        });
    }
    let mut sorted = estimates.clone();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - config.level) / 2.0;
    Ok(BootstrapResult {
        point,
        lower: quantile_sorted(&sorted, tail),
        upper: quantile_sorted(&sorted, 1.0 - tail),
        level: config.level,
        replicates: config.replicates,
        failures,
        failure_fraction: failures as f64 / config.replicates as f64,
        refits,
        median: quantile_sorted(&sorted, 0.5),
        estimates,
    })
}
