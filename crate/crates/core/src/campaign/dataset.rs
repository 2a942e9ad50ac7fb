//! Seeded layout corpora. Record `id` uses seed `id + 1` both to draw its
//! layout and to evaluate it, so a corpus is fully determined by
//! `(n, inventory, tier)`.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lattice::{format_prompt, random_layout, LatticeLayout};
use crate::neutronics::{EvalRequest, Evaluator, FidelityTier};
use crate::Error;

use super::jsonl::{read_jsonl, write_jsonl};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: u64,
    pub seed: u64,
    /// Conditioning text built from this record's own results.
    pub prompt: String,
    pub layout: LatticeLayout,
    pub k_eff: f64,
    pub fq: f64,
    pub fdh: f64,
    pub fidelity: FidelityTier,
    pub gd_count: usize,
}

impl DatasetRecord {
    /// Checks the seed rule and that prompt and inventory match the record.
    pub fn check(&self) -> Result<(), String> {
        if self.seed != self.id + 1 {
            return Err(format!("record {}: seed {} != id + 1", self.id, self.seed));
        }
        if self.gd_count != self.layout.gd_count() {
            return Err(format!(
                "record {}: gd_count does not match layout",
                self.id
            ));
        }
        let prompt = format_prompt(self.k_eff, self.fq, self.fdh).map_err(|e| e.to_string())?;
        if prompt != self.prompt {
            return Err(format!("record {}: prompt does not match results", self.id));
        }
        Ok(())
    }
}

/// Builds `n` records in id order. Evaluation runs as one batch.
pub fn build_dataset<E: Evaluator + ?Sized>(
    n: usize,
    inventory: usize,
    tier: FidelityTier,
    evaluator: &E,
) -> Result<Vec<DatasetRecord>, Error> {
    if n == 0 {
        return Err(Error::Config("dataset needs at least one record".into()));
    }
    let layouts = (0..n as u64)
        .map(|id| random_layout(inventory, &mut ChaCha8Rng::seed_from_u64(id + 1)))
        .collect::<Result<Vec<_>, _>>()?;
    let requests: Vec<EvalRequest<'_>> = layouts
        .iter()
        .enumerate()
        .map(|(id, layout)| EvalRequest {
            layout,
            tier,
            seed: id as u64 + 1,
        })
        .collect();
    let results = evaluator.evaluate_batch(&requests);
    let mut out = Vec::with_capacity(n);
    for ((id, layout), res) in (0u64..).zip(layouts).zip(results) {
        let res = res?;
        out.push(DatasetRecord {
            id,
            seed: id + 1,
            prompt: format_prompt(res.k_eff, res.fq, res.fdh)?,
            gd_count: layout.gd_count(),
            layout,
            k_eff: res.k_eff,
            fq: res.fq,
            fdh: res.fdh,
            fidelity: tier,
        });
    }
    Ok(out)
}

/// Builds a corpus and writes it as JSONL to `out_path`.
pub fn generate_dataset<E: Evaluator + ?Sized>(
    n: usize,
    inventory: usize,
    tier: FidelityTier,
    evaluator: &E,
    out_path: impl AsRef<Path>,
) -> Result<Vec<DatasetRecord>, Error> {
    let records = build_dataset(n, inventory, tier, evaluator)?;
    write_jsonl(out_path, &records)?;
    Ok(records)
}

/// Reads a corpus and checks every record.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>, Error> {
    let path = path.as_ref();
    let records: Vec<DatasetRecord> = read_jsonl(path)?;
    for r in &records {
        r.check().map_err(|message| Error::Format {
            path: path.display().to_string(),
            message,
        })?;
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neutronics::BuiltinEvaluator;

    #[test]
    fn records_follow_seed_rule() {
        let ev = BuiltinEvaluator::default();
        let recs = build_dataset(6, 16, FidelityTier::Low, &ev).unwrap();
        assert_eq!(recs.len(), 6);
        for (i, r) in recs.iter().enumerate() {
            assert_eq!(r.id, i as u64);
            assert_eq!(r.seed, r.id + 1);
            assert_eq!(r.gd_count, 16);
            assert_eq!(r.fidelity, FidelityTier::Low);
            r.check().unwrap();
        }
        let want = random_layout(16, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(recs[3].layout, want);
    }

    #[test]
    fn file_is_byte_identical_on_rerun() {
        let dir = tempfile::tempdir().unwrap();
        let ev = BuiltinEvaluator::default();
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        generate_dataset(10, 16, FidelityTier::Low, &ev, &a).unwrap();
        generate_dataset(10, 16, FidelityTier::Low, &ev, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let back = read_dataset(&a).unwrap();
        assert_eq!(back, build_dataset(10, 16, FidelityTier::Low, &ev).unwrap());
    }

    #[test]
    fn tampered_record_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ev = BuiltinEvaluator::default();
        let mut recs = build_dataset(2, 16, FidelityTier::High, &ev).unwrap();
        recs[1].seed = 7;
        let p = dir.path().join("d.jsonl");
        write_jsonl(&p, &recs).unwrap();
        assert!(matches!(read_dataset(&p), Err(Error::Format { .. })));
        assert!(build_dataset(0, 16, FidelityTier::High, &ev).is_err());
    }
}
