//! The per-evaluation row shared by every run log.

use serde::{Deserialize, Serialize};

use crate::fitness::Scored;
use crate::lattice::LatticeLayout;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub eval_index: usize,
    pub layout: LatticeLayout,
    pub k_eff: f64,
    pub fq: f64,
    pub fdh: f64,
    pub fitness: f64,
    pub gd_count: usize,
}

impl EvalRecord {
    pub fn from_scored(eval_index: usize, s: &Scored) -> Self {
        EvalRecord {
            eval_index,
            layout: s.layout.clone(),
            k_eff: s.result.k_eff,
            fq: s.result.fq,
            fdh: s.result.fdh,
            fitness: s.fitness.total,
            gd_count: s.layout.gd_count(),
        }
    }
}
