//! Two-state continuous-time Markov model and discretized gamma rate
//! variation.
//!
//! The process has gain rate r (0 to 1) and loss rate s (1 to 0), with
//! closed-form transition probabilities
//!
//! ```text
//! P(t) = 1/(r+s) * [ s + r e^(-(r+s)t)   r - r e^(-(r+s)t) ]
//!                  [ s - s e^(-(r+s)t)   r + s e^(-(r+s)t) ]
//! ```
//!
//! Rates are recovered from the equilibrium distribution under the mean-one
//! normalization pi0*r + pi1*s = 1, so branch lengths read as expected
//! substitutions per character.

use crate::mathx::{gamma_p, gamma_quantile};
use crate::{Error, Result};

/// Equilibrium distribution plus the induced rates.
#[derive(Debug, Clone, Copy)]
pub struct CtmcParams {
    pub pi0: f64,
    pub pi1: f64,
    /// 0 -> 1 rate.
    pub rate01: f64,
    /// 1 -> 0 rate.
    pub rate10: f64,
}

impl CtmcParams {
    /// Build from pi1 with the mean-substitution-rate-1 normalization:
    /// mu = r + s = 1 / (2 pi0 pi1), r = pi1 mu, s = pi0 mu.
    pub fn from_equilibrium(pi1: f64) -> Result<Self> {
        if !(pi1 > 0.0 && pi1 < 1.0) {
            return Err(Error::Numeric(format!("pi1 = {pi1} outside (0,1)")));
        }
        let pi0 = 1.0 - pi1;
        let mu = 1.0 / (2.0 * pi0 * pi1);
        Ok(CtmcParams {
            pi0,
            pi1,
            rate01: pi1 * mu,
            rate10: pi0 * mu,
        })
    }

    /// Build from raw rates (no normalization); equilibrium follows.
    pub fn from_rates(rate01: f64, rate10: f64) -> Result<Self> {
        if !(rate01 > 0.0 && rate10 > 0.0) {
            return Err(Error::Numeric("rates must be positive".into()));
        }
        let total = rate01 + rate10;
        Ok(CtmcParams {
            pi0: rate10 / total,
            pi1: rate01 / total,
            rate01,
            rate10,
        })
    }
}

/// Closed-form P(t * rate_multiplier).
pub fn transition_matrix(p: &CtmcParams, t: f64, rate_multiplier: f64) -> [[f64; 2]; 2] {
    debug_assert!(t >= 0.0 && rate_multiplier > 0.0);
    let (r, s) = (p.rate01, p.rate10);
    let total = r + s;
    let e = (-total * t * rate_multiplier).exp();
    [
        [(s + r * e) / total, (r - r * e) / total],
        [(s - s * e) / total, (r + s * e) / total],
    ]
}

/// Discretized gamma rate variation: 4 equal-probability categories,
/// each represented by its conditional mean, renormalized to mean 1.
#[derive(Debug, Clone)]
pub struct GammaRates {
    pub shape: f64,
    pub multipliers: Vec<f64>,
}

/// Number of gamma rate categories.
pub const GAMMA_CATEGORIES: usize = 4;

impl GammaRates {
    pub fn discretize(shape: f64) -> Result<Self> {
        // The sampler re-derives rates on every likelihood evaluation but
        // shapes only change on shape moves; keep a few recent values per
        // thread (one slot per character kind plus proposals).
        thread_local! {
            static RECENT: std::cell::RefCell<Vec<(u64, GammaRates)>> =
                const { std::cell::RefCell::new(Vec::new()) };
        }
        let key = shape.to_bits();
        if let Some(hit) = RECENT.with(|c| {
            c.borrow()
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, g)| g.clone())
        }) {
            return Ok(hit);
        }
        let fresh = Self::discretize_k(shape, GAMMA_CATEGORIES)?;
        RECENT.with(|c| {
            let mut cache = c.borrow_mut();
            if cache.len() >= 4 {
                cache.remove(0);
            }
            cache.push((key, fresh.clone()));
        });
        Ok(fresh)
    }

    pub fn discretize_k(shape: f64, k: usize) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(Error::Numeric(format!("gamma shape {shape} must be > 0")));
        }
        if k == 0 {
            return Err(Error::Numeric("need at least one category".into()));
        }
        // Gamma(shape, rate = shape) has mean 1. Conditional mean of bin
        // (a, b]: k * [ P(shape+1, shape*b) - P(shape+1, shape*a) ],
        // since E[X; X <= x] = (shape/rate) P(shape+1, rate*x).
        let mut bounds = vec![0.0];
        for i in 1..k {
            bounds.push(gamma_quantile(shape, shape, i as f64 / k as f64));
        }
        bounds.push(f64::INFINITY);
        let upper = |x: f64| {
            if x.is_infinite() {
                1.0
            } else {
                gamma_p(shape + 1.0, shape * x)
            }
        };
        let mut multipliers: Vec<f64> = (0..k)
            .map(|i| k as f64 * (upper(bounds[i + 1]) - upper(bounds[i])))
            .collect();
        let mean: f64 = multipliers.iter().sum::<f64>() / k as f64;
        if !(mean.is_finite() && mean > 0.0) {
            return Err(Error::Numeric(format!(
                "gamma discretization failed for shape {shape}"
            )));
        }
        for m in &mut multipliers {
            *m /= mean;
            if *m <= 0.0 {
                *m = 1e-12;
            }
        }
        multipliers.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(GammaRates { shape, multipliers })
    }
}
