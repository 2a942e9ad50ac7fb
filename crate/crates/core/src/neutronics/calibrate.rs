use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lattice::random_layout;

use super::{BuiltinEvaluator, Evaluator, FidelityTier, NeutronicsError, XsLibrary};

/// Gd inventories swept by [`calibrate`].
pub const CALIBRATION_LEVELS: [usize; 6] = [0, 8, 16, 24, 32, 40];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub inventory: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    /// High-tier k of every sample, in sample order.
    pub k_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub levels: Vec<LevelStats>,
    pub targets: Vec<TargetCheck>,
}

impl CalibrationReport {
    pub fn passed(&self) -> bool {
        self.targets.iter().all(|t| t.passed)
    }

    pub fn level(&self, inventory: usize) -> Option<&LevelStats> {
        self.levels.iter().find(|l| l.inventory == inventory)
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Sweeps random layouts at each of [`CALIBRATION_LEVELS`] and checks the
/// library against the reactivity targets the search benchmarks rely on:
///
/// * no Gd: median k in [1.25, 1.45];
/// * 16 Gd: every sample above 1.08 and median in [1.10, 1.20];
/// * 24 or 32 Gd: at least one sample inside [1.02, 1.08];
/// * median k strictly decreasing with inventory.
pub fn calibrate(
    lib: &XsLibrary,
    samples_per_level: usize,
    seed: u64,
) -> Result<CalibrationReport, NeutronicsError> {
    let samples_per_level = samples_per_level.max(1);
    let evaluator = BuiltinEvaluator::new(*lib);
    let mut levels = Vec::with_capacity(CALIBRATION_LEVELS.len());
    for (stream, &inventory) in CALIBRATION_LEVELS.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        let layouts: Vec<_> = (0..samples_per_level)
            .map(|_| random_layout(inventory, &mut rng).expect("inventory within range"))
            .collect();
        let k_values = layouts
            .par_iter()
            .map(|l| {
                evaluator
                    .evaluate(l, FidelityTier::High, 0)
                    .map(|r| r.k_eff)
            })
            .collect::<Result<Vec<f64>, _>>()?;
        levels.push(LevelStats {
            inventory,
            min: k_values.iter().copied().fold(f64::INFINITY, f64::min),
            median: median(&k_values),
            max: k_values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            k_values,
        });
    }

    let at = |inv: usize| {
        levels
            .iter()
            .find(|l| l.inventory == inv)
            .expect("swept level")
    };
    let mut targets = Vec::new();
    let l0 = at(0);
    targets.push(TargetCheck {
        name: "unpoisoned median k in [1.25, 1.45]".into(),
        passed: (1.25..=1.45).contains(&l0.median),
        detail: format!("median {:.5}", l0.median),
    });
    let l16 = at(16);
    targets.push(TargetCheck {
        name: "every 16-Gd sample has k > 1.08".into(),
        passed: l16.min > 1.08,
        detail: format!("min {:.5}", l16.min),
    });
    targets.push(TargetCheck {
        name: "16-Gd median k in [1.10, 1.20]".into(),
        passed: (1.10..=1.20).contains(&l16.median),
        detail: format!("median {:.5}", l16.median),
    });
    let in_window = [24, 32]
        .iter()
        .flat_map(|&inv| at(inv).k_values.iter())
        .filter(|k| (1.02..=1.08).contains(*k))
        .count();
    targets.push(TargetCheck {
        name: "some 24-32-Gd sample has k in [1.02, 1.08]".into(),
        passed: in_window > 0,
        detail: format!("{in_window} samples inside the window"),
    });
    let monotone = levels.windows(2).all(|w| w[1].median < w[0].median);
    targets.push(TargetCheck {
        name: "median k strictly decreases with inventory".into(),
        passed: monotone,
        detail: levels
            .iter()
            .map(|l| format!("{}:{:.4}", l.inventory, l.median))
            .collect::<Vec<_>>()
            .join(" "),
    });

    Ok(CalibrationReport { levels, targets })
}
