//! Generative layout policy and its preference training.
//!
//! [`PolicyParams`] is a per-position Bernoulli policy: every free cell gets
//! an independent Gd-vs-fuel logit, so the Gd inventory of a sample is not
//! fixed. It is pretrained by weighted maximum likelihood on layout corpora
//! and then aligned online: each step samples candidates, ranks them by
//! fitness, and takes a gradient step on the reference-free preference loss
//! `-log sigmoid(beta * (log p(winner) - log p(loser)))`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fitness::{prefer_totals, FitnessConfig, Scored, Verdict};
use crate::lattice::{
    apply_gt_correction, format_prompt, free_cells, LatticeLayout, PinKind, FREE_CELLS, SIDE,
};
use crate::neutronics::{EvalRequest, Evaluator, FidelityTier};
use crate::record::EvalRecord;
use crate::Error;

pub const TABULAR_VARIANT: &str = "tabular-bernoulli-v1";

/// Target conditions the preference stage is prompted with.
pub const TARGET_K: f64 = 1.05;
pub const TARGET_FQ: f64 = 1.0;
pub const TARGET_FDH: f64 = 1.0;

pub fn target_prompt() -> String {
    format_prompt(TARGET_K, TARGET_FQ, TARGET_FDH).expect("finite constants")
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// A layout drawn from a policy, with its log-probability in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTrace {
    pub layout: LatticeLayout,
    pub log_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub winner: LatticeLayout,
    pub loser: LatticeLayout,
    pub prompt: String,
    pub winner_fitness: f64,
    pub loser_fitness: f64,
}

impl PreferencePair {
    /// Orders two scored candidates; `None` on an exact fitness tie.
    pub fn from_scored(a: &Scored, b: &Scored, prompt: &str) -> Option<Self> {
        let (w, l) = match prefer_totals(a.fitness.total, b.fitness.total) {
            Verdict::AWins => (a, b),
            Verdict::BWins => (b, a),
            Verdict::Tie => return None,
        };
        Some(PreferencePair {
            winner: w.layout.clone(),
            loser: l.layout.clone(),
            prompt: prompt.to_string(),
            winner_fitness: w.fitness.total,
            loser_fitness: l.fitness.total,
        })
    }
}

/// The operations the online preference loop needs from a policy.
pub trait Policy: Clone {
    fn sample<R: Rng + ?Sized>(&self, temperature: f64, rng: &mut R) -> SampleTrace;
    fn log_prob(&self, layout: &LatticeLayout) -> f64;
    /// One gradient step on the preference loss of `pair`.
    fn dpo_step(&self, pair: &PreferencePair, beta: f64, learning_rate: f64) -> Self;
    /// Expected Gd count of an untempered sample.
    fn expected_inventory(&self) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    /// One logit per free cell, in [`free_cells`] order.
    pub logits: Vec<f64>,
    pub variant: String,
}

impl PolicyParams {
    pub fn uniform(logit: f64) -> Self {
        PolicyParams {
            logits: vec![logit; FREE_CELLS],
            variant: TABULAR_VARIANT.to_string(),
        }
    }

    pub fn from_logits(logits: Vec<f64>) -> Result<Self, Error> {
        let p = PolicyParams {
            logits,
            variant: TABULAR_VARIANT.to_string(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.logits.len() != FREE_CELLS {
            return Err(Error::Config(format!(
                "policy needs {FREE_CELLS} logits, got {}",
                self.logits.len()
            )));
        }
        if self.logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::Config("policy logits must be finite".into()));
        }
        Ok(())
    }

    /// Per-position Gd probabilities at temperature 1.
    pub fn probabilities(&self) -> Vec<f64> {
        self.logits.iter().map(|&l| sigmoid(l)).collect()
    }

    /// Analytic gradient of the preference loss with respect to the logits.
    pub fn dpo_gradient(&self, pair: &PreferencePair, beta: f64) -> Vec<f64> {
        let margin = self.log_prob(&pair.winner) - self.log_prob(&pair.loser);
        let scale = -sigmoid(-beta * margin) * beta;
        pair.winner
            .free_mask()
            .into_iter()
            .zip(pair.loser.free_mask())
            .map(|(w, l)| scale * (f64::from(u8::from(w)) - f64::from(u8::from(l))))
            .collect()
    }
}

impl Policy for PolicyParams {
    fn sample<R: Rng + ?Sized>(&self, temperature: f64, rng: &mut R) -> SampleTrace {
        let mut grid = [[PinKind::Fuel; SIDE]; SIDE];
        for (c, &logit) in free_cells().iter().zip(&self.logits) {
            if rng.random::<f64>() < sigmoid(logit / temperature) {
                grid[c.row()][c.col()] = PinKind::Gd;
            }
        }
        let layout = apply_gt_correction(grid);
        let log_prob = self.log_prob(&layout);
        SampleTrace { layout, log_prob }
    }

    fn log_prob(&self, layout: &LatticeLayout) -> f64 {
        free_cells()
            .iter()
            .zip(&self.logits)
            .map(|(c, &logit)| match layout.get(*c) {
                PinKind::Gd => -softplus(-logit),
                _ => -softplus(logit),
            })
            .sum()
    }

    fn dpo_step(&self, pair: &PreferencePair, beta: f64, learning_rate: f64) -> Self {
        let grad = self.dpo_gradient(pair, beta);
        let logits = self
            .logits
            .iter()
            .zip(grad)
            .map(|(l, g)| l - learning_rate * g)
            .collect();
        PolicyParams {
            logits,
            variant: self.variant.clone(),
        }
    }

    fn expected_inventory(&self) -> f64 {
        self.logits.iter().map(|&l| sigmoid(l)).sum()
    }
}

pub fn sample<R: Rng + ?Sized>(
    params: &PolicyParams,
    temperature: f64,
    rng: &mut R,
) -> SampleTrace {
    params.sample(temperature, rng)
}

pub fn log_prob(params: &PolicyParams, layout: &LatticeLayout) -> f64 {
    params.log_prob(layout)
}

/// Preference loss of one pair under `params`.
pub fn dpo_loss<P: Policy>(params: &P, pair: &PreferencePair, beta: f64) -> f64 {
    let margin = params.log_prob(&pair.winner) - params.log_prob(&pair.loser);
    softplus(-beta * margin)
}

pub fn dpo_step<P: Policy>(params: &P, pair: &PreferencePair, cfg: &DpoConfig) -> P {
    params.dpo_step(pair, cfg.beta, cfg.learning_rate)
}

/// Weighted maximum-likelihood fit with add-one smoothing:
/// `p_i = (sum_w w * gd_i + 1) / (sum_w w * n + 2)`.
pub fn pretrain_mle(corpora: &[(&[LatticeLayout], f64)]) -> PolicyParams {
    let mut gd = vec![0.0; FREE_CELLS];
    let mut total = 0.0;
    for (layouts, weight) in corpora {
        for layout in layouts.iter() {
            for (acc, is_gd) in gd.iter_mut().zip(layout.free_mask()) {
                if is_gd {
                    *acc += weight;
                }
            }
        }
        total += weight * layouts.len() as f64;
    }
    let logits = gd
        .into_iter()
        .map(|g| {
            let p = (g + 1.0) / (total + 2.0);
            (p / (1.0 - p)).ln()
        })
        .collect();
    PolicyParams {
        logits,
        variant: TABULAR_VARIANT.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpoConfig {
    pub beta: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub candidates_per_step: usize,
    pub temperature: f64,
    pub fidelity: FidelityTier,
    pub seed: u64,
}

impl Default for DpoConfig {
    fn default() -> Self {
        DpoConfig {
            beta: 0.01,
            learning_rate: DEFAULT_LEARNING_RATE,
            steps: 500,
            candidates_per_step: 2,
            temperature: 1.0,
            fidelity: FidelityTier::High,
            seed: 1,
        }
    }
}

/// Step size for the tabular policy.
pub const DEFAULT_LEARNING_RATE: f64 = 20.0;

impl DpoConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let fail = |m: &str| Err(Error::Config(format!("dpo: {m}")));
        if !(self.beta > 0.0) {
            return fail("beta must be positive");
        }
        if !(self.temperature > 0.0) {
            return fail("temperature must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return fail("learning_rate must be positive");
        }
        if self.steps == 0 {
            return fail("steps must be at least 1");
        }
        if self.candidates_per_step < 2 {
            return fail("candidates_per_step must be at least 2");
        }
        Ok(())
    }

    pub fn eval_budget(&self) -> usize {
        self.steps * self.candidates_per_step
    }
}

/// One step of the online loop, as written to the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpoEvent {
    pub step: usize,
    pub candidates: Vec<EvalRecord>,
    /// Index into `candidates` of the preferred layout; `None` on a tie.
    pub winner: Option<usize>,
    pub loser: Option<usize>,
    /// Loss of the pair before the update (ln 2 on a tie).
    pub loss: f64,
    /// Expected Gd count after this step's update.
    pub expected_inventory: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpoRun<P> {
    pub params: P,
    pub best: Scored,
    pub log: Vec<DpoEvent>,
    pub prompt: String,
}

impl<P> DpoRun<P> {
    pub fn evaluations(&self) -> usize {
        self.log.iter().map(|e| e.candidates.len()).sum()
    }

    pub fn records(&self) -> impl Iterator<Item = &EvalRecord> {
        self.log.iter().flat_map(|e| e.candidates.iter())
    }
}

/// Online preference alignment. With more than two candidates per step the
/// best is paired against the worst.
pub fn run_online_dpo<P: Policy, E: Evaluator + ?Sized>(
    params: P,
    evaluator: &E,
    fitness_cfg: &FitnessConfig,
    cfg: &DpoConfig,
) -> Result<DpoRun<P>, Error> {
    cfg.validate()?;
    fitness_cfg.validate()?;
    let prompt = target_prompt();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = params;
    let mut log = Vec::with_capacity(cfg.steps);
    let mut best: Option<Scored> = None;
    let mut eval_index = 0usize;

    for step in 0..cfg.steps {
        let layouts: Vec<LatticeLayout> = (0..cfg.candidates_per_step)
            .map(|_| params.sample(cfg.temperature, &mut rng).layout)
            .collect();
        let requests: Vec<EvalRequest<'_>> = layouts
            .iter()
            .enumerate()
            .map(|(i, layout)| EvalRequest {
                layout,
                tier: cfg.fidelity,
                seed: (eval_index + i) as u64 + 1,
            })
            .collect();
        let results = evaluator.evaluate_batch(&requests);
        let mut scored = Vec::with_capacity(layouts.len());
        for (layout, res) in layouts.into_iter().zip(results) {
            scored.push(Scored::new(layout, res?, fitness_cfg)?);
        }
        let candidates: Vec<EvalRecord> = scored
            .iter()
            .enumerate()
            .map(|(i, s)| EvalRecord::from_scored(eval_index + i, s))
            .collect();
        eval_index += scored.len();

        for s in &scored {
            if best
                .as_ref()
                .is_none_or(|b| s.rank_cmp(b, fitness_cfg).is_lt())
            {
                best = Some(s.clone());
            }
        }

        let order = |a: &usize, b: &usize| {
            scored[*a]
                .fitness
                .total
                .total_cmp(&scored[*b].fitness.total)
        };
        let hi = (0..scored.len()).min_by(order).expect("candidates");
        let lo = (0..scored.len()).rev().max_by(order).expect("candidates");
        let pair = PreferencePair::from_scored(&scored[hi], &scored[lo], &prompt);
        let (winner, loser, loss) = match pair {
            Some(pair) => {
                let loss = dpo_loss(&params, &pair, cfg.beta);
                params = dpo_step(&params, &pair, cfg);
                (Some(hi), Some(lo), loss)
            }
            None => (None, None, std::f64::consts::LN_2),
        };
        log.push(DpoEvent {
            step,
            candidates,
            winner,
            loser,
            loss,
            expected_inventory: params.expected_inventory(),
        });
    }

    Ok(DpoRun {
        params,
        best: best.expect("at least one step"),
        log,
        prompt,
    })
}

/// Serialized policy with training metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub variant: String,
    pub logits: Vec<f64>,
    #[serde(default)]
    pub metadata: serde_json::Map<String, serde_json::Value>,
}

impl PolicyCheckpoint {
    pub fn new(
        params: &PolicyParams,
        metadata: serde_json::Map<String, serde_json::Value>,
    ) -> Self {
        PolicyCheckpoint {
            variant: params.variant.clone(),
            logits: params.logits.clone(),
            metadata,
        }
    }

    pub fn params(&self) -> Result<PolicyParams, Error> {
        let p = PolicyParams {
            logits: self.logits.clone(),
            variant: self.variant.clone(),
        };
        p.validate()?;
        Ok(p)
    }
}
