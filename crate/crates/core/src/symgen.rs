//! Octant-symmetric reference layouts.
//!
//! The 264 free cells split into D4 orbits of size 8 or 4. A symmetric layout
//! at a given inventory is a set of whole orbits whose sizes add up to that
//! inventory; [`sample_symmetric_layout`] draws such a set uniformly over all
//! valid sets by counting them first.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitness::{best_index, FitnessConfig, Scored};
use crate::lattice::{is_guide_tube, Coord, LatticeLayout, CELLS, D4, FREE_CELLS};
use crate::neutronics::{EvalRequest, Evaluator, FidelityTier};
use crate::record::EvalRecord;
use crate::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymgenError {
    #[error("no set of symmetry orbits holds exactly {0} Gd rods")]
    InventoryUnrepresentable(usize),
    #[error("benchmark needs at least one candidate")]
    NoCandidates,
}

/// A D4 orbit of lattice cells about the center.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Orbit {
    pub representative: Coord,
    /// Distinct images in raster order.
    pub members: Vec<Coord>,
}

impl Orbit {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

pub fn d4_orbit(c: Coord) -> Orbit {
    let members: BTreeSet<Coord> = D4::ALL.iter().map(|g| g.apply(c)).collect();
    let mut members: Vec<Coord> = members.into_iter().collect();
    members.sort_by_key(|m| m.index());
    Orbit {
        representative: c,
        members,
    }
}

/// Orbits partitioning the free cells, ordered by their first raster cell
/// (which is also the representative).
pub fn fuel_orbits() -> &'static [Orbit] {
    static ORBITS: OnceLock<Vec<Orbit>> = OnceLock::new();
    ORBITS.get_or_init(|| {
        let mut seen = [false; CELLS];
        let mut out = Vec::new();
        for c in Coord::all() {
            if seen[c.index()] || is_guide_tube(c) {
                continue;
            }
            let orbit = d4_orbit(c);
            for m in &orbit.members {
                seen[m.index()] = true;
            }
            out.push(orbit);
        }
        out
    })
}

/// `table[i][s]` counts subsets of orbits `i..` whose sizes sum to `s`.
fn subset_counts(orbits: &[Orbit]) -> Vec<Vec<u128>> {
    let mut table = vec![vec![0u128; FREE_CELLS + 1]; orbits.len() + 1];
    table[orbits.len()][0] = 1;
    for i in (0..orbits.len()).rev() {
        let size = orbits[i].size();
        for s in 0..=FREE_CELLS {
            let skip = table[i + 1][s];
            let take = if s >= size { table[i + 1][s - size] } else { 0 };
            table[i][s] = skip + take;
        }
    }
    table
}

fn counts() -> &'static [Vec<u128>] {
    static COUNTS: OnceLock<Vec<Vec<u128>>> = OnceLock::new();
    COUNTS.get_or_init(|| subset_counts(fuel_orbits()))
}

/// Number of distinct symmetric layouts holding `inventory` Gd rods.
pub fn symmetric_layout_count(inventory: usize) -> u128 {
    if inventory > FREE_CELLS {
        return 0;
    }
    counts()[0][inventory]
}

/// Draws a D4-invariant layout with exactly `inventory` Gd rods, uniformly
/// over all such layouts.
pub fn sample_symmetric_layout<R: Rng + ?Sized>(
    inventory: usize,
    rng: &mut R,
) -> Result<LatticeLayout, SymgenError> {
    let total = symmetric_layout_count(inventory);
    if total == 0 {
        return Err(SymgenError::InventoryUnrepresentable(inventory));
    }
    let orbits = fuel_orbits();
    let table = counts();
    // Decode a uniform rank into the subset it indexes.
    let mut rank = rng.random_range(0..total);
    let mut remaining = inventory;
    let mut chosen = Vec::new();
    for (i, orbit) in orbits.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        let skip = table[i + 1][remaining];
        if rank < skip {
            continue;
        }
        rank -= skip;
        chosen.extend_from_slice(&orbit.members);
        remaining -= orbit.size();
    }
    debug_assert_eq!(remaining, 0);
    Ok(LatticeLayout::from_gd_positions(chosen).expect("orbits avoid guide tubes"))
}

/// One evaluated symmetric candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymEvent {
    pub eval_index: usize,
    pub inventory: usize,
    pub layout: LatticeLayout,
    pub k_eff: f64,
    pub fq: f64,
    pub fdh: f64,
    pub fitness: f64,
    pub gd_count: usize,
}

impl SymEvent {
    pub fn record(&self) -> EvalRecord {
        EvalRecord {
            eval_index: self.eval_index,
            layout: self.layout.clone(),
            k_eff: self.k_eff,
            fq: self.fq,
            fdh: self.fdh,
            fitness: self.fitness,
            gd_count: self.gd_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymBenchmark {
    pub inventory: usize,
    pub best: Scored,
    pub best_index: usize,
    pub log: Vec<SymEvent>,
}

/// Evaluates `n_candidates` independent symmetric samples and keeps the best.
/// Candidate `i` is evaluated with seed `i + 1`.
pub fn run_sym_benchmark<E: Evaluator + ?Sized>(
    inventory: usize,
    n_candidates: usize,
    tier: FidelityTier,
    seed: u64,
    evaluator: &E,
    fitness_cfg: &FitnessConfig,
) -> Result<SymBenchmark, Error> {
    if n_candidates == 0 {
        return Err(SymgenError::NoCandidates.into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layouts = (0..n_candidates)
        .map(|_| sample_symmetric_layout(inventory, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    let requests: Vec<EvalRequest<'_>> = layouts
        .iter()
        .enumerate()
        .map(|(i, layout)| EvalRequest {
            layout,
            tier,
            seed: i as u64 + 1,
        })
        .collect();
    let results = evaluator.evaluate_batch(&requests);
    let mut scored = Vec::with_capacity(n_candidates);
    for (layout, res) in layouts.into_iter().zip(results) {
        scored.push(Scored::new(layout, res?, fitness_cfg)?);
    }
    let best_index = best_index(&scored, fitness_cfg).expect("non-empty");
    let log = scored
        .iter()
        .enumerate()
        .map(|(i, s)| SymEvent {
            eval_index: i,
            inventory,
            layout: s.layout.clone(),
            k_eff: s.result.k_eff,
            fq: s.result.fq,
            fdh: s.result.fdh,
            fitness: s.fitness.total,
            gd_count: s.layout.gd_count(),
        })
        .collect();
    Ok(SymBenchmark {
        inventory,
        best: scored.swap_remove(best_index),
        best_index,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::gt_pattern;
    use crate::neutronics::BuiltinEvaluator;
    use std::collections::HashSet;

    #[test]
    fn orbit_examples() {
        assert_eq!(d4_orbit(Coord::at(8, 8)).size(), 1);
        let o = d4_orbit(Coord::at(8, 10));
        let want: HashSet<Coord> = [(8, 10), (8, 6), (10, 8), (6, 8)]
            .iter()
            .map(|&(r, c)| Coord::at(r, c))
            .collect();
        assert_eq!(o.members.iter().copied().collect::<HashSet<_>>(), want);
        let o = d4_orbit(Coord::at(2, 5));
        let want: HashSet<Coord> = [
            (2, 5),
            (2, 11),
            (14, 5),
            (14, 11),
            (5, 2),
            (5, 14),
            (11, 2),
            (11, 14),
        ]
        .iter()
        .map(|&(r, c)| Coord::at(r, c))
        .collect();
        assert_eq!(o.members.iter().copied().collect::<HashSet<_>>(), want);
    }

    #[test]
    fn fuel_orbits_partition_free_cells() {
        let orbits = fuel_orbits();
        assert_eq!(orbits.len(), 39);
        assert_eq!(orbits.iter().filter(|o| o.size() == 8).count(), 27);
        assert_eq!(orbits.iter().filter(|o| o.size() == 4).count(), 12);
        let mut all = HashSet::new();
        for o in orbits {
            for m in &o.members {
                assert!(!gt_pattern().contains(*m));
                assert!(all.insert(*m), "{m:?} in two orbits");
            }
        }
        assert_eq!(all.len(), 264);
    }

    #[test]
    fn subset_counts_match_binomials() {
        // 16 = 8+8, 8+4+4, 4+4+4+4
        let c = |n: u128, k: u128| -> u128 { (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1)) };
        let want = c(27, 2) + c(27, 1) * c(12, 2) + c(12, 4);
        assert_eq!(symmetric_layout_count(16), want);
        assert_eq!(symmetric_layout_count(6), 0);
        assert_eq!(symmetric_layout_count(0), 1);
        assert_eq!(symmetric_layout_count(264), 1);
        assert_eq!(symmetric_layout_count(265), 0);
    }

    #[test]
    fn samples_are_symmetric_with_exact_inventory() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for inv in [0, 4, 16, 24, 32, 264] {
            for _ in 0..20 {
                let l = sample_symmetric_layout(inv, &mut rng).unwrap();
                assert_eq!(l.gd_count(), inv);
                assert!(l.is_d4_invariant());
            }
        }
        assert_eq!(
            sample_symmetric_layout(6, &mut rng),
            Err(SymgenError::InventoryUnrepresentable(6))
        );
    }

    #[test]
    fn sampling_covers_all_inventory_16_shapes() {
        // With 4 orbits of size 4 the only shapes are {8,8}, {8,4,4}, {4,4,4,4}.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut shapes = HashSet::new();
        for _ in 0..2000 {
            let l = sample_symmetric_layout(16, &mut rng).unwrap();
            let gd: HashSet<Coord> = l.gd_positions().into_iter().collect();
            let mut sizes: Vec<usize> = fuel_orbits()
                .iter()
                .filter(|o| gd.contains(&o.members[0]))
                .map(Orbit::size)
                .collect();
            sizes.sort_unstable();
            shapes.insert(sizes);
        }
        assert!(shapes.contains(&vec![8, 8]));
        assert!(shapes.contains(&vec![4, 4, 8]));
        assert!(shapes.contains(&vec![4, 4, 4, 4]));
        assert_eq!(shapes.len(), 3);
    }

    #[test]
    fn benchmark_is_deterministic() {
        let ev = BuiltinEvaluator::default();
        let cfg = FitnessConfig::default();
        let a = run_sym_benchmark(24, 5, FidelityTier::Low, 3, &ev, &cfg).unwrap();
        let b = run_sym_benchmark(24, 5, FidelityTier::Low, 3, &ev, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.log.len(), 5);
        let one = run_sym_benchmark(24, 1, FidelityTier::Low, 3, &ev, &cfg).unwrap();
        assert_eq!(one.best_index, 0);
        assert_eq!(one.best.layout, one.log[0].layout);
        assert!(matches!(
            run_sym_benchmark(24, 0, FidelityTier::Low, 3, &ev, &cfg),
            Err(Error::Symgen(SymgenError::NoCandidates))
        ));
    }
}
