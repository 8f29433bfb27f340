//! Closed-form secret outage probability.
//!
//! A session protects `K` messages; each message key fuses `w` independent
//! raw keys, each leaked with probability `p`. A message is compromised only
//! if its whole window leaked (probability `p^w`), and the session is
//! compromised if any message is:
//!
//! ```text
//! SOP(p, K, w) = 1 - (1 - p^w)^K
//! ```
//!
//! `w = 1` is the non-fusing session. Evaluation goes through `ln_1p` and
//! `exp_m1` so that outage probabilities far below machine epsilon keep full
//! relative precision.

use std::f64::consts::LN_10;

use serde::Serialize;

use crate::error::{Error, Result};

/// Default number of protected messages in a session.
pub const DEFAULT_MESSAGES: u64 = 60;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SopQuery {
    p: f64,
    messages: u64,
    window: u64,
}

impl SopQuery {
    pub fn new(p: f64, messages: u64, window: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!(
                "exposure probability must be in [0, 1], got {p}"
            )));
        }
        if messages == 0 {
            return Err(Error::InvalidArgument("message count must be >= 1".into()));
        }
        if window == 0 {
            return Err(Error::InvalidArgument("window size must be >= 1".into()));
        }
        Ok(Self {
            p,
            messages,
            window,
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn messages(&self) -> u64 {
        self.messages
    }

    pub fn window(&self) -> u64 {
        self.window
    }

    /// Probability that a single message window is fully leaked, `p^w`.
    pub fn window_leak_probability(&self) -> f64 {
        self.p.powf(self.window as f64)
    }
}

/// `1 - (1 - p^w)^K`.
pub fn sop_closed_form(q: &SopQuery) -> f64 {
    let leak = q.window_leak_probability();
    let log_survival = q.messages as f64 * (-leak).ln_1p();
    // -expm1(-0.0) is -0.0
    (-log_survival.exp_m1()).clamp(0.0, 1.0)
}

/// `log10` of [`sop_closed_form`], still finite when the linear value
/// underflows. `-inf` for `p = 0`.
pub fn log10_sop(q: &SopQuery) -> f64 {
    if q.p == 0.0 {
        return f64::NEG_INFINITY;
    }
    let sop = sop_closed_form(q);
    if sop >= f64::MIN_POSITIVE * 1e10 {
        return sop.log10();
    }
    // SOP ~ K p^w once p^w is this small.
    ((q.messages as f64).ln() + q.window as f64 * q.p.ln()) / LN_10
}

/// Largest per-key exposure probability that keeps the session outage
/// probability at `target_sop`: `(1 - (1 - target)^(1/K))^(1/w)`.
pub fn allowed_exposure(target_sop: f64, messages: u64, window: u64) -> Result<f64> {
    if !(target_sop > 0.0 && target_sop < 1.0) {
        return Err(Error::Domain(format!(
            "target SOP must be in (0, 1), got {target_sop}"
        )));
    }
    if messages == 0 {
        return Err(Error::InvalidArgument("message count must be >= 1".into()));
    }
    if window == 0 {
        return Err(Error::InvalidArgument("window size must be >= 1".into()));
    }
    let per_window = -((-target_sop).ln_1p() / messages as f64).exp_m1();
    Ok(per_window.powf(1.0 / window as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SopPoint {
    pub p: f64,
    pub w: u64,
    pub sop: f64,
}

/// Evaluates the closed form over a grid, `p` major and `w` minor.
pub fn sop_curve(p_grid: &[f64], messages: u64, w_grid: &[u64]) -> Result<Vec<SopPoint>> {
    if p_grid.is_empty() || w_grid.is_empty() {
        return Err(Error::InvalidArgument("SOP grids must be non-empty".into()));
    }
    let mut out = Vec::with_capacity(p_grid.len() * w_grid.len());
    for &p in p_grid {
        for &w in w_grid {
            let q = SopQuery::new(p, messages, w)?;
            out.push(SopPoint {
                p,
                w,
                sop: sop_closed_form(&q),
            });
        }
    }
    Ok(out)
}
