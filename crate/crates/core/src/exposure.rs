//! Toy exposure model and Monte Carlo estimation of secret outage probability.
//!
//! Every raw key is leaked independently with probability `p`. The cipher is
//! treated as unbreakable under an unleaked key, so a message is compromised
//! exactly when every raw key fused into its key leaked, and a session is
//! compromised when any of its messages is.
//!
//! Trial `t` draws from a ChaCha8 keystream selected by `(seed, stream = t)`,
//! a counter-based layout: results do not depend on how trials are scheduled
//! across workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::keyspace::KeyDistribution;
use crate::kft::KftSpec;
use crate::sop::{self, SopQuery};
use crate::window::{WindowPlan, WindowPolicy};

/// iid per-key leak probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExposureModel {
    leak_probability: f64,
}

impl ExposureModel {
    pub fn new(leak_probability: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&leak_probability) {
            return Err(Error::Domain(format!(
                "leak probability must be in [0, 1], got {leak_probability}"
            )));
        }
        Ok(Self { leak_probability })
    }

    pub fn leak_probability(&self) -> f64 {
        self.leak_probability
    }

    #[inline]
    fn draw(&self, rng: &mut ChaCha8Rng) -> bool {
        // gen::<f64>() is in [0, 1): p = 0 never leaks, p = 1 always does.
        rng.gen::<f64>() < self.leak_probability
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub message_count: usize,
    pub window_size: usize,
    pub exposure: ExposureModel,
    pub fusing_enabled: bool,
    pub policy: WindowPolicy,
    pub seed: u64,
    pub trials: u64,
}

impl SessionConfig {
    pub fn new(exposure: ExposureModel, window_size: usize, trials: u64, seed: u64) -> Self {
        Self {
            message_count: sop::DEFAULT_MESSAGES as usize,
            window_size,
            exposure,
            fusing_enabled: true,
            policy: WindowPolicy::Disjoint,
            seed,
            trials,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be >= 1".into()));
        }
        self.plan().map(|_| ())
    }

    /// Window size actually used: 1 when fusing is off.
    pub fn effective_window(&self) -> usize {
        if self.fusing_enabled {
            self.window_size
        } else {
            1
        }
    }

    pub fn plan(&self) -> Result<WindowPlan> {
        if self.window_size == 0 {
            return Err(Error::InvalidArgument("window size must be >= 1".into()));
        }
        WindowPlan::new(self.effective_window(), self.message_count, self.policy)
    }

    /// Closed-form SOP for this configuration; `None` for the sliding policy,
    /// whose windows are not independent.
    pub fn analytic_sop(&self) -> Option<f64> {
        match self.policy {
            WindowPolicy::Disjoint => SopQuery::new(
                self.exposure.leak_probability(),
                self.message_count as u64,
                self.effective_window() as u64,
            )
            .ok()
            .map(|q| sop::sop_closed_form(&q)),
            WindowPolicy::Sliding => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub compromised: Vec<bool>,
    pub estimate: f64,
    pub std_error: f64,
    pub trials: u64,
}

impl SessionOutcome {
    fn from_flags(compromised: Vec<bool>) -> Self {
        let trials = compromised.len() as u64;
        let hits = compromised.iter().filter(|&&c| c).count() as f64;
        let estimate = hits / trials as f64;
        let std_error = (estimate * (1.0 - estimate) / trials as f64).sqrt();
        Self {
            compromised,
            estimate,
            std_error,
            trials,
        }
    }

    pub fn compromised_trials(&self) -> u64 {
        self.compromised.iter().filter(|&&c| c).count() as u64
    }

    /// Standardized distance from `expected`, using the binomial standard
    /// error under `expected` so that degenerate estimates (0 or 1) still
    /// get a finite score.
    pub fn z_score(&self, expected: f64) -> f64 {
        let diff = self.estimate - expected;
        let se = (expected * (1.0 - expected) / self.trials as f64).sqrt();
        if se > 0.0 {
            diff / se
        } else if diff == 0.0 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        }
    }
}

/// True iff every key in the window leaked.
pub fn window_compromised(leak_flags: &[bool]) -> Result<bool> {
    if leak_flags.is_empty() {
        return Err(Error::InvalidArgument("empty key window".into()));
    }
    Ok(leak_flags.iter().all(|&f| f))
}

fn run_trial(cfg: &SessionConfig, plan: &WindowPlan, trial: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(trial);
    let w = plan.window_size();
    match plan.policy() {
        WindowPolicy::Disjoint => {
            let mut flags = vec![false; w];
            let mut any = false;
            for _ in 0..plan.message_count() {
                flags
                    .iter_mut()
                    .for_each(|f| *f = cfg.exposure.draw(&mut rng));
                // all windows are drawn so the stream layout is fixed
                any |= flags.iter().all(|&f| f);
            }
            any
        }
        WindowPolicy::Sliding => {
            let leaked: Vec<bool> = (0..plan.raw_keys_required())
                .map(|_| cfg.exposure.draw(&mut rng))
                .collect();
            leaked.windows(w).any(|win| win.iter().all(|&f| f))
        }
    }
}

/// Runs the session Monte Carlo on rayon's global pool.
pub fn simulate_session(cfg: &SessionConfig) -> Result<SessionOutcome> {
    simulate_session_with_workers(cfg, 0)
}

/// Runs the session Monte Carlo on `workers` threads (0 picks the default).
/// The outcome is identical for every worker count.
pub fn simulate_session_with_workers(
    cfg: &SessionConfig,
    workers: usize,
) -> Result<SessionOutcome> {
    cfg.validate()?;
    let plan = cfg.plan()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let flags: Vec<bool> = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(cfg, &plan, t))
            .collect()
    });
    Ok(SessionOutcome::from_flags(flags))
}

/// Min-entropy of the fused key when the inputs flagged in `leaked` are
/// replaced by point masses at the matching `leaked_values`.
pub fn fused_entropy_given_leaks(
    kft: &KftSpec,
    dists: &[KeyDistribution],
    leaked: &[bool],
    leaked_values: &[u64],
) -> Result<f64> {
    if leaked.len() != dists.len() || leaked_values.len() != dists.len() {
        return Err(Error::InvalidArgument(format!(
            "expected {} leak flags and values, got {} and {}",
            dists.len(),
            leaked.len(),
            leaked_values.len()
        )));
    }
    let adjusted = dists
        .iter()
        .zip(leaked.iter().zip(leaked_values))
        .map(|(d, (&is_leaked, &value))| {
            if is_leaked {
                KeyDistribution::point_mass(d.space(), value)
            } else {
                Ok(d.clone())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(kft.fuse_many(&adjusted)?.min_entropy())
}
