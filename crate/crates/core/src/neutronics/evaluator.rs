use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lattice::LatticeLayout;

use super::{solve_diffusion, FidelityTier, NeutronicsError, NeutronicsResult, XsLibrary};

/// One evaluation job.
#[derive(Debug, Clone, Copy)]
pub struct EvalRequest<'a> {
    pub layout: &'a LatticeLayout,
    pub tier: FidelityTier,
    pub seed: u64,
}

/// Anything that maps a layout to neutronics figures of merit.
///
/// Implementations must be deterministic in `(layout, tier, seed)`.
pub trait Evaluator: Sync {
    fn evaluate(
        &self,
        layout: &LatticeLayout,
        tier: FidelityTier,
        seed: u64,
    ) -> Result<NeutronicsResult, NeutronicsError>;

    /// Evaluates a batch; results come back in request order.
    fn evaluate_batch(
        &self,
        requests: &[EvalRequest<'_>],
    ) -> Vec<Result<NeutronicsResult, NeutronicsError>> {
        requests
            .par_iter()
            .map(|r| self.evaluate(r.layout, r.tier, r.seed))
            .collect()
    }
}

impl<E: Evaluator + ?Sized> Evaluator for &E {
    fn evaluate(
        &self,
        layout: &LatticeLayout,
        tier: FidelityTier,
        seed: u64,
    ) -> Result<NeutronicsResult, NeutronicsError> {
        (**self).evaluate(layout, tier, seed)
    }

    fn evaluate_batch(
        &self,
        requests: &[EvalRequest<'_>],
    ) -> Vec<Result<NeutronicsResult, NeutronicsError>> {
        (**self).evaluate_batch(requests)
    }
}

impl<E: Evaluator + ?Sized + Send> Evaluator for Box<E> {
    fn evaluate(
        &self,
        layout: &LatticeLayout,
        tier: FidelityTier,
        seed: u64,
    ) -> Result<NeutronicsResult, NeutronicsError> {
        (**self).evaluate(layout, tier, seed)
    }

    fn evaluate_batch(
        &self,
        requests: &[EvalRequest<'_>],
    ) -> Vec<Result<NeutronicsResult, NeutronicsError>> {
        (**self).evaluate_batch(requests)
    }
}

/// Statistical noise added by the low tier: additive Gaussian on k and
/// multiplicative Gaussian on the peaking factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma_k: f64,
    pub sigma_rel: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            sigma_k: 0.003,
            sigma_rel: 0.02,
        }
    }
}

impl NoiseModel {
    pub fn apply(&self, res: &mut NeutronicsResult, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let zk: f64 = StandardNormal.sample(&mut rng);
        let zq: f64 = StandardNormal.sample(&mut rng);
        let zh: f64 = StandardNormal.sample(&mut rng);
        res.k_eff += self.sigma_k * zk;
        res.fq = (res.fq * (1.0 + self.sigma_rel * zq)).max(1.0);
        res.fdh = (res.fdh * (1.0 + self.sigma_rel * zh)).max(1.0);
    }
}

/// The in-process diffusion evaluator.
#[derive(Debug, Clone, Default)]
pub struct BuiltinEvaluator {
    pub library: XsLibrary,
    pub noise: NoiseModel,
}

impl BuiltinEvaluator {
    pub fn new(library: XsLibrary) -> Self {
        BuiltinEvaluator {
            library,
            noise: NoiseModel::default(),
        }
    }
}

impl Evaluator for BuiltinEvaluator {
    fn evaluate(
        &self,
        layout: &LatticeLayout,
        tier: FidelityTier,
        seed: u64,
    ) -> Result<NeutronicsResult, NeutronicsError> {
        let mut res = solve_diffusion(layout, &self.library, &tier.solver_config())?;
        if tier.is_noisy() {
            self.noise.apply(&mut res, seed);
        }
        Ok(res)
    }
}

/// Wraps an evaluator and counts every layout it is asked to evaluate.
pub struct CountingEvaluator<E> {
    inner: E,
    calls: AtomicUsize,
}

impl<E: Evaluator> CountingEvaluator<E> {
    pub fn new(inner: E) -> Self {
        CountingEvaluator {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn into_inner(self) -> E {
        self.inner
    }
}

impl<E: Evaluator> Evaluator for CountingEvaluator<E> {
    fn evaluate(
        &self,
        layout: &LatticeLayout,
        tier: FidelityTier,
        seed: u64,
    ) -> Result<NeutronicsResult, NeutronicsError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.evaluate(layout, tier, seed)
    }

    fn evaluate_batch(
        &self,
        requests: &[EvalRequest<'_>],
    ) -> Vec<Result<NeutronicsResult, NeutronicsError>> {
        self.calls.fetch_add(requests.len(), Ordering::SeqCst);
        self.inner.evaluate_batch(requests)
    }
}
