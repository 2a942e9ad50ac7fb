//! Flat `key = value` configuration for campaign runs.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are dotted
//! (`ga.population`, `xs.fuel.d1`, ...); an unknown or repeated key is an
//! error. [`CampaignConfig::to_text`] writes every key, and its output parses
//! back to the same configuration.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::fitness::FitnessConfig;
use crate::ga::GaConfig;
use crate::neutronics::{FidelityTier, NoiseModel, TwoGroupXS, XsLibrary};
use crate::policy::DpoConfig;
use crate::Error;

/// Which evaluator a run uses.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum EvaluatorSpec {
    #[default]
    Builtin,
    /// Shell command of an external worker process.
    External(String),
}

impl FromStr for EvaluatorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        if s == "builtin" {
            return Ok(EvaluatorSpec::Builtin);
        }
        match s.strip_prefix("external:") {
            Some(cmd) if !cmd.trim().is_empty() => Ok(EvaluatorSpec::External(cmd.to_string())),
            _ => Err(Error::Config(format!(
                "evaluator must be `builtin` or `external:<command>`, got `{s}`"
            ))),
        }
    }
}

impl fmt::Display for EvaluatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvaluatorSpec::Builtin => f.write_str("builtin"),
            EvaluatorSpec::External(cmd) => write!(f, "external:{cmd}"),
        }
    }
}

/// Corpora used to pretrain the policy before online alignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    pub low_records: usize,
    pub high_records: usize,
    pub inventory: usize,
    pub low_weight: f64,
    pub high_weight: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            low_records: 5000,
            high_records: 1000,
            inventory: 16,
            low_weight: 1.0,
            high_weight: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetConfig {
    pub records: usize,
    pub inventory: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            records: 5000,
            inventory: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymConfig {
    pub inventories: Vec<usize>,
    pub candidates: usize,
}

impl Default for SymConfig {
    fn default() -> Self {
        SymConfig {
            inventories: vec![16, 24, 32],
            candidates: 200,
        }
    }
}

/// Everything a campaign subcommand needs. `seed` and `fidelity` apply to
/// every search driver.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub seed: u64,
    pub fidelity: FidelityTier,
    pub evaluator: EvaluatorSpec,
    pub library: XsLibrary,
    pub noise: NoiseModel,
    pub fitness: FitnessConfig,
    pub ga: GaConfig,
    pub dpo: DpoConfig,
    pub pretrain: PretrainConfig,
    pub dataset: DatasetConfig,
    pub sym: SymConfig,
    pub calibration_samples: usize,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            seed: 1,
            fidelity: FidelityTier::High,
            evaluator: EvaluatorSpec::Builtin,
            library: XsLibrary::default(),
            noise: NoiseModel::default(),
            fitness: FitnessConfig::default(),
            ga: GaConfig::default(),
            dpo: DpoConfig::default(),
            pretrain: PretrainConfig::default(),
            dataset: DatasetConfig::default(),
            sym: SymConfig::default(),
            calibration_samples: 100,
        }
    }
}

enum Slot<'a> {
    F64(&'a mut f64),
    Usize(&'a mut usize),
    U64(&'a mut u64),
    Tier(&'a mut FidelityTier),
    Evaluator(&'a mut EvaluatorSpec),
    List(&'a mut Vec<usize>),
}

impl Slot<'_> {
    fn set(&mut self, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse `{v}`"))
        }
        match self {
            Slot::F64(x) => **x = num(value)?,
            Slot::Usize(x) => **x = num(value)?,
            Slot::U64(x) => **x = num(value)?,
            Slot::Tier(x) => **x = value.parse()?,
            Slot::Evaluator(x) => **x = value.parse().map_err(|e: Error| e.to_string())?,
            Slot::List(x) => {
                **x = value
                    .split(',')
                    .map(|p| num(p.trim()))
                    .collect::<Result<_, _>>()?
            }
        }
        Ok(())
    }

    fn show(&self) -> String {
        match self {
            Slot::F64(x) => format!("{x:?}"),
            Slot::Usize(x) => x.to_string(),
            Slot::U64(x) => x.to_string(),
            Slot::Tier(x) => x.to_string(),
            Slot::Evaluator(x) => x.to_string(),
            Slot::List(x) => x
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(","),
        }
    }
}

fn xs_slots<'a>(prefix: &str, xs: &'a mut TwoGroupXS, out: &mut Vec<(String, Slot<'a>)>) {
    let TwoGroupXS {
        d1,
        d2,
        sa1,
        sa2,
        nu_sf1,
        nu_sf2,
        ss12,
    } = xs;
    for (name, v) in [
        ("d1", d1),
        ("d2", d2),
        ("sa1", sa1),
        ("sa2", sa2),
        ("nu_sf1", nu_sf1),
        ("nu_sf2", nu_sf2),
        ("ss12", ss12),
    ] {
        out.push((format!("xs.{prefix}.{name}"), Slot::F64(v)));
    }
}

impl CampaignConfig {
    fn slots(&mut self) -> Vec<(String, Slot<'_>)> {
        let mut out: Vec<(String, Slot<'_>)> = vec![
            ("seed".into(), Slot::U64(&mut self.seed)),
            ("fidelity".into(), Slot::Tier(&mut self.fidelity)),
            ("evaluator".into(), Slot::Evaluator(&mut self.evaluator)),
            ("fitness.w_q".into(), Slot::F64(&mut self.fitness.w_q)),
            ("fitness.w_dh".into(), Slot::F64(&mut self.fitness.w_dh)),
            ("fitness.k_lo".into(), Slot::F64(&mut self.fitness.k_lo)),
            ("fitness.k_hi".into(), Slot::F64(&mut self.fitness.k_hi)),
            ("fitness.lambda".into(), Slot::F64(&mut self.fitness.lambda)),
            (
                "fitness.k_target".into(),
                Slot::F64(&mut self.fitness.k_target),
            ),
            ("ga.population".into(), Slot::Usize(&mut self.ga.population)),
            ("ga.p_crossover".into(), Slot::F64(&mut self.ga.p_crossover)),
            ("ga.p_mutation".into(), Slot::F64(&mut self.ga.p_mutation)),
            (
                "ga.tournament_k".into(),
                Slot::Usize(&mut self.ga.tournament_k),
            ),
            (
                "ga.eval_budget".into(),
                Slot::Usize(&mut self.ga.eval_budget),
            ),
            ("ga.elitism".into(), Slot::Usize(&mut self.ga.elitism)),
            ("dpo.beta".into(), Slot::F64(&mut self.dpo.beta)),
            (
                "dpo.learning_rate".into(),
                Slot::F64(&mut self.dpo.learning_rate),
            ),
            ("dpo.steps".into(), Slot::Usize(&mut self.dpo.steps)),
            (
                "dpo.candidates_per_step".into(),
                Slot::Usize(&mut self.dpo.candidates_per_step),
            ),
            (
                "dpo.temperature".into(),
                Slot::F64(&mut self.dpo.temperature),
            ),
            (
                "pretrain.low_records".into(),
                Slot::Usize(&mut self.pretrain.low_records),
            ),
            (
                "pretrain.high_records".into(),
                Slot::Usize(&mut self.pretrain.high_records),
            ),
            (
                "pretrain.inventory".into(),
                Slot::Usize(&mut self.pretrain.inventory),
            ),
            (
                "pretrain.low_weight".into(),
                Slot::F64(&mut self.pretrain.low_weight),
            ),
            (
                "pretrain.high_weight".into(),
                Slot::F64(&mut self.pretrain.high_weight),
            ),
            (
                "dataset.records".into(),
                Slot::Usize(&mut self.dataset.records),
            ),
            (
                "dataset.inventory".into(),
                Slot::Usize(&mut self.dataset.inventory),
            ),
            (
                "sym.inventories".into(),
                Slot::List(&mut self.sym.inventories),
            ),
            (
                "sym.candidates".into(),
                Slot::Usize(&mut self.sym.candidates),
            ),
            (
                "calibrate.samples_per_level".into(),
                Slot::Usize(&mut self.calibration_samples),
            ),
            ("noise.sigma_k".into(), Slot::F64(&mut self.noise.sigma_k)),
            (
                "noise.sigma_rel".into(),
                Slot::F64(&mut self.noise.sigma_rel),
            ),
        ];
        let XsLibrary {
            fuel,
            gd,
            guide_tube,
        } = &mut self.library;
        xs_slots("fuel", fuel, &mut out);
        xs_slots("gd", gd, &mut out);
        xs_slots("guide_tube", guide_tube, &mut out);
        out
    }

    /// Every recognised key, in the order [`Self::to_text`] writes them.
    pub fn keys() -> Vec<String> {
        CampaignConfig::default()
            .slots()
            .into_iter()
            .map(|(k, _)| k)
            .collect()
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), Error> {
        let mut slots = self.slots();
        let (_, slot) = slots
            .iter_mut()
            .find(|(k, _)| k == key)
            .ok_or_else(|| Error::Config(format!("unknown key `{key}`")))?;
        slot.set(value)
            .map_err(|m| Error::Config(format!("{key}: {m}")))
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let mut copy = self.clone();
        let slots = copy.slots();
        slots.iter().find(|(k, _)| k == key).map(|(_, s)| s.show())
    }

    /// Applies the entries of a config file on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), Error> {
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{key}`",
                    n + 1
                )));
            }
            self.set(key, value.trim()).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", n + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, Error> {
        let mut cfg = CampaignConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        CampaignConfig::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_text(&self) -> String {
        let mut copy = self.clone();
        copy.slots()
            .iter()
            .map(|(k, s)| format!("{k} = {}\n", s.show()))
            .collect()
    }

    pub fn ga_config(&self) -> GaConfig {
        GaConfig {
            seed: self.seed,
            fidelity: self.fidelity,
            ..self.ga
        }
    }

    pub fn dpo_config(&self) -> DpoConfig {
        DpoConfig {
            seed: self.seed,
            fidelity: self.fidelity,
            ..self.dpo
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.fitness.validate()?;
        self.ga_config().validate()?;
        self.dpo_config().validate()?;
        self.library.validate()?;
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if ![self.noise.sigma_k, self.noise.sigma_rel]
            .iter()
            .all(|s| s.is_finite() && *s >= 0.0)
        {
            return fail("noise sigmas must be finite and non-negative");
        }
        let p = &self.pretrain;
        if p.low_records + p.high_records == 0 {
            return fail("pretraining needs at least one record");
        }
        if !(p.low_weight > 0.0 && p.high_weight > 0.0) {
            return fail("pretraining weights must be positive");
        }
        if self.dataset.records == 0 {
            return fail("dataset.records must be at least 1");
        }
        if self.sym.inventories.is_empty() || self.sym.candidates == 0 {
            return fail("sym needs at least one inventory and one candidate");
        }
        if self.calibration_samples == 0 {
            return fail("calibrate.samples_per_level must be at least 1");
        }
        Ok(())
    }
}
