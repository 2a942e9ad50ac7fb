//! Scalar design objective: weighted peaking factors plus a linear penalty for
//! leaving the criticality window. Lower is better.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::LatticeLayout;
use crate::neutronics::NeutronicsResult;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitnessError {
    #[error("non-finite {0} in fitness input")]
    NonFinite(&'static str),
    #[error("invalid fitness configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessConfig {
    pub w_q: f64,
    pub w_dh: f64,
    pub k_lo: f64,
    pub k_hi: f64,
    pub lambda: f64,
    /// Only used to break exact fitness ties.
    pub k_target: f64,
}

impl Default for FitnessConfig {
    fn default() -> Self {
        FitnessConfig {
            w_q: 0.6,
            w_dh: 0.4,
            k_lo: 1.02,
            k_hi: 1.08,
            lambda: 100.0,
            k_target: 1.05,
        }
    }
}

impl FitnessConfig {
    pub fn validate(&self) -> Result<(), FitnessError> {
        if ((self.w_q + self.w_dh) - 1.0).abs() > 1e-12 {
            return Err(FitnessError::InvalidConfig(format!(
                "weights must sum to 1 (got {} + {})",
                self.w_q, self.w_dh
            )));
        }
        if !(self.k_lo < self.k_target && self.k_target < self.k_hi) {
            return Err(FitnessError::InvalidConfig(
                "need k_lo < k_target < k_hi".into(),
            ));
        }
        if !(self.lambda > 0.0) {
            return Err(FitnessError::InvalidConfig(
                "lambda must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn in_window(&self, k: f64) -> bool {
        (self.k_lo..=self.k_hi).contains(&k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessValue {
    pub total: f64,
    pub penalty: f64,
    pub peaking_term: f64,
}

/// `lambda` times the distance from `k` to the window `[k_lo, k_hi]`.
pub fn penalty(k: f64, cfg: &FitnessConfig) -> Result<f64, FitnessError> {
    if !k.is_finite() {
        return Err(FitnessError::NonFinite("k_eff"));
    }
    let distance = (cfg.k_lo - k).max(k - cfg.k_hi).max(0.0);
    Ok(cfg.lambda * distance)
}

pub fn fitness(res: &NeutronicsResult, cfg: &FitnessConfig) -> Result<FitnessValue, FitnessError> {
    if !res.fq.is_finite() {
        return Err(FitnessError::NonFinite("fq"));
    }
    if !res.fdh.is_finite() {
        return Err(FitnessError::NonFinite("fdh"));
    }
    let penalty = penalty(res.k_eff, cfg)?;
    let peaking_term = cfg.w_q * res.fq + cfg.w_dh * res.fdh;
    Ok(FitnessValue {
        total: peaking_term + penalty,
        penalty,
        peaking_term,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    AWins,
    BWins,
    Tie,
}

impl Verdict {
    pub fn flip(self) -> Verdict {
        match self {
            Verdict::AWins => Verdict::BWins,
            Verdict::BWins => Verdict::AWins,
            Verdict::Tie => Verdict::Tie,
        }
    }
}

/// Strictly lower total wins. Results with non-finite figures lose to any
/// finite one; two such results tie.
pub fn prefer(a: &NeutronicsResult, b: &NeutronicsResult, cfg: &FitnessConfig) -> Verdict {
    let total = |r| fitness(r, cfg).map(|f| f.total).unwrap_or(f64::INFINITY);
    prefer_totals(total(a), total(b))
}

pub fn prefer_totals(a: f64, b: f64) -> Verdict {
    if a < b {
        Verdict::AWins
    } else if b < a {
        Verdict::BWins
    } else {
        Verdict::Tie
    }
}

/// A layout together with its evaluation and score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub layout: LatticeLayout,
    pub result: NeutronicsResult,
    pub fitness: FitnessValue,
}

impl Scored {
    pub fn new(
        layout: LatticeLayout,
        result: NeutronicsResult,
        cfg: &FitnessConfig,
    ) -> Result<Self, FitnessError> {
        let fitness = fitness(&result, cfg)?;
        Ok(Scored {
            layout,
            result,
            fitness,
        })
    }

    /// Total order used wherever a single best candidate must be picked:
    /// fitness, then closeness of k to `k_target`, then token text.
    pub fn rank_cmp(&self, other: &Scored, cfg: &FitnessConfig) -> Ordering {
        self.fitness
            .total
            .total_cmp(&other.fitness.total)
            .then_with(|| {
                let da = (self.result.k_eff - cfg.k_target).abs();
                let db = (other.result.k_eff - cfg.k_target).abs();
                da.total_cmp(&db)
            })
            .then_with(|| {
                self.layout
                    .serialize()
                    .as_str()
                    .cmp(other.layout.serialize().as_str())
            })
    }
}

/// Index of the best candidate under [`Scored::rank_cmp`].
pub fn best_index(items: &[Scored], cfg: &FitnessConfig) -> Option<usize> {
    (0..items.len()).min_by(|&a, &b| items[a].rank_cmp(&items[b], cfg))
}
