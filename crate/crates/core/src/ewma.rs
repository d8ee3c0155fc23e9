//! EWMA conditional variance of naive-forecast errors, shared by the
//! economic and market scenarios.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// RiskMetrics decay factor.
pub const RISKMETRICS_LAMBDA: f64 = 0.94;

/// `lambda * h_prev + (1 - lambda) * e_prev^2`.
pub fn ewma_update(h_prev: f64, e_prev: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if !(h_prev >= 0.0) {
        return Err(Error::invalid("h_prev", format!("{h_prev} is negative")));
    }
    Ok(ewma_step(h_prev, e_prev, lambda))
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("lambda", format!("{lambda} not in (0, 1)")))
    }
}

#[inline]
fn ewma_step(h_prev: f64, e_prev: f64, lambda: f64) -> f64 {
    lambda * h_prev + (1.0 - lambda) * e_prev * e_prev
}

/// Per-state bookkeeping for the naive forecast `E_{t-1}[pi_t] = pi_{t-1}`.
///
/// State `t` carries `pi_t`, `e_t = pi_t - pi_{t-1}` and
/// `h_t = lambda * h_{t-1} + (1 - lambda) * e_{t-1}^2`. When no earlier rate
/// exists the first error is seeded at 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastErrorEwma {
    pub last_rate: Option<f64>,
    pub last_error: f64,
    pub h: f64,
}

impl ForecastErrorEwma {
    /// Tracker whose first state already knows a rate (`pi_1`).
    pub fn with_initial_rate(rate: f64) -> Self {
        ForecastErrorEwma {
            last_rate: Some(rate),
            last_error: 0.0,
            h: 0.0,
        }
    }

    /// Tracker with no rate at the first state.
    pub fn without_rate() -> Self {
        ForecastErrorEwma {
            last_rate: None,
            last_error: 0.0,
            h: 0.0,
        }
    }

    /// Tracker for the next state, given the rate realized there.
    /// `lambda` must already be validated.
    pub fn advance(&self, rate: f64, lambda: f64) -> Self {
        let h = ewma_step(self.h, self.last_error, lambda);
        let error = self.last_rate.map_or(0.0, |prev| rate - prev);
        ForecastErrorEwma {
            last_rate: Some(rate),
            last_error: error,
            h,
        }
    }
}
