use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use latticefold::campaign::{
    analyze_run, default_run_dir, make_evaluator, render_map, run_calibrate_campaign,
    run_dataset_campaign, run_dpo_campaign, run_ga_campaign, run_sym_campaign, CampaignConfig,
    EvaluatorSpec, MapStyle, RunKind, RunManifest,
};
use latticefold::fitness::fitness;
use latticefold::lattice::LatticeLayout;
use latticefold::neutronics::{external, BuiltinEvaluator, FidelityTier};
use latticefold::Error;

const EXIT_HELP: &str = "\
Exit status:
  0  success
  2  bad command-line usage
  3  configuration error (config file or flag values)
  4  evaluator failure (solver did not converge, external worker died or misbehaved)
  5  I/O error (missing file, unwritable output directory)
  6  invalid input data (malformed layout, run log or dataset record)
  7  calibration ran but some reactivity target was missed

Run directories default to $LATTICEFOLD_OUT_DIR/<kind>-seed<seed> (or runs/ when unset).";

#[derive(Parser)]
#[command(name = "latticefold", version, about = "Fuel-assembly Gd layout search campaigns", after_help = EXIT_HELP)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every search driver (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory (default: $LATTICEFOLD_OUT_DIR/<kind>-seed<seed>).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Evaluation tier: low or high (overrides `fidelity`).
    #[arg(long, global = true)]
    fidelity: Option<FidelityTier>,
    /// `builtin` or `external:<command>` (overrides `evaluator`).
    #[arg(long, global = true)]
    evaluator: Option<EvaluatorSpec>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a seeded corpus of fixed-inventory random layouts.
    GenerateDataset {
        #[arg(long)]
        records: Option<usize>,
        #[arg(long)]
        inventory: Option<usize>,
    },
    /// Genetic-algorithm search at fixed inventory.
    RunGa,
    /// Best-of-N octant-symmetric layouts per inventory.
    RunSym {
        /// Comma-separated inventories.
        #[arg(long)]
        inventories: Option<String>,
        #[arg(long)]
        candidates: Option<usize>,
    },
    /// Pretrain the layout policy, then align it with online preference steps.
    RunDpo {
        /// Start from this policy checkpoint instead of pretraining.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Write correlation, trajectory, scatter and map files for a run.
    Analyze {
        /// Run directory (default: --out-dir).
        run_dir: Option<PathBuf>,
    },
    /// Draw a layout file as text or SVG.
    Render {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long, default_value = "ascii")]
        style: MapStyle,
        /// Write here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Evaluate one layout file and print its figures as JSON.
    Evaluate {
        #[arg(long)]
        layout: PathBuf,
    },
    /// Sweep random layouts by inventory and check the reactivity targets.
    Calibrate {
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Serve the line-delimited JSON evaluation protocol on stdin/stdout.
    EvalWorker,
}

enum Failure {
    Calibration,
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 3,
        Error::Neutronics(_) => 4,
        Error::Io { .. } => 5,
        Error::Lattice(_)
        | Error::Fitness(_)
        | Error::Symgen(_)
        | Error::Analysis(_)
        | Error::Format { .. } => 6,
    }
}

fn load_config(g: &Global) -> Result<CampaignConfig, Error> {
    let mut cfg = match &g.config {
        Some(path) => CampaignConfig::load(path)?,
        None => CampaignConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(tier) = g.fidelity {
        cfg.fidelity = tier;
    }
    if let Some(ev) = &g.evaluator {
        cfg.evaluator = ev.clone();
    }
    Ok(cfg)
}

fn read_layout(path: &Path) -> Result<LatticeLayout, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(LatticeLayout::deserialize(&text)?)
}

fn report(dir: &Path, m: &RunManifest) {
    println!(
        "{} run written to {} ({} evaluator calls)",
        m.kind,
        dir.display(),
        m.evaluator_calls
    );
    if let Some(best) = m.summary.get("best") {
        println!("best: {best}");
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = load_config(&cli.global)?;
    let dir_for = |kind: RunKind, seed: u64| {
        cli.global
            .out_dir
            .clone()
            .unwrap_or_else(|| default_run_dir(kind, seed))
    };
    match cli.command {
        Command::GenerateDataset { records, inventory } => {
            if let Some(n) = records {
                cfg.dataset.records = n;
            }
            if let Some(i) = inventory {
                cfg.dataset.inventory = i;
            }
            let dir = dir_for(RunKind::Dataset, cfg.seed);
            let ev = make_evaluator(&cfg)?;
            report(&dir, &run_dataset_campaign(&cfg, &ev, &dir)?);
        }
        Command::RunGa => {
            let dir = dir_for(RunKind::Ga, cfg.seed);
            let ev = make_evaluator(&cfg)?;
            report(&dir, &run_ga_campaign(&cfg, &ev, &dir)?);
        }
        Command::RunSym {
            inventories,
            candidates,
        } => {
            if let Some(list) = inventories {
                cfg.set("sym.inventories", &list)?;
            }
            if let Some(n) = candidates {
                cfg.sym.candidates = n;
            }
            let dir = dir_for(RunKind::Sym, cfg.seed);
            let ev = make_evaluator(&cfg)?;
            let m = run_sym_campaign(&cfg, &ev, &dir)?;
            report(&dir, &m);
            if let Some(best) = m.summary.get("best_by_inventory") {
                println!("best by inventory: {best}");
            }
        }
        Command::RunDpo { init, steps } => {
            if let Some(n) = steps {
                cfg.dpo.steps = n;
            }
            let dir = dir_for(RunKind::Dpo, cfg.seed);
            let ev = make_evaluator(&cfg)?;
            let m = run_dpo_campaign(&cfg, &ev, &dir, init.as_deref())?;
            report(&dir, &m);
        }
        Command::Analyze { run_dir } => {
            let dir = run_dir.or(cli.global.out_dir).ok_or_else(|| {
                Error::Config("analyze needs a run directory (positional or --out-dir)".into())
            })?;
            let r = analyze_run(&dir)?;
            println!(
                "analyzed {} evaluations of a {} run; best fitness {} (k_eff {}, {} Gd)",
                r.evaluations, r.kind, r.best.fitness, r.best.k_eff, r.best.gd_count
            );
            for f in &r.files {
                println!("{}", dir.join(f).display());
            }
        }
        Command::Render {
            layout,
            style,
            output,
        } => {
            let text = render_map(&read_layout(&layout)?, style);
            match output {
                Some(path) => std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?,
                None => print!("{text}"),
            }
        }
        Command::Evaluate { layout } => {
            cfg.validate()?;
            let l = read_layout(&layout)?;
            let ev = make_evaluator(&cfg)?;
            let res = ev
                .evaluate(&l, cfg.fidelity, cfg.seed)
                .map_err(Error::from)?;
            let f = fitness(&res, &cfg.fitness).map_err(Error::from)?;
            let out = json!({
                "k_eff": res.k_eff,
                "fq": res.fq,
                "fdh": res.fdh,
                "fitness": f.total,
                "gd_count": l.gd_count(),
                "fidelity": cfg.fidelity,
                "seed": cfg.seed,
            });
            println!("{out}");
        }
        Command::Calibrate { samples } => {
            if let Some(n) = samples {
                cfg.calibration_samples = n;
            }
            let dir = dir_for(RunKind::Calibrate, cfg.seed);
            let m = run_calibrate_campaign(&cfg, &dir)?;
            report(&dir, &m);
            if let Some(serde_json::Value::Array(targets)) = m.summary.get("targets") {
                for t in targets {
                    let mark = if t["passed"] == json!(true) {
                        "PASS"
                    } else {
                        "FAIL"
                    };
                    println!(
                        "{mark} {} ({})",
                        t["name"].as_str().unwrap_or(""),
                        t["detail"].as_str().unwrap_or("")
                    );
                }
            }
            if m.summary.get("passed") != Some(&json!(true)) {
                return Err(Failure::Calibration);
            }
        }
        Command::EvalWorker => {
            cfg.validate()?;
            let ev = BuiltinEvaluator {
                library: cfg.library,
                noise: cfg.noise,
            };
            let stdin = io::stdin();
            external::serve(BufReader::new(stdin.lock()), io::stdout().lock(), &ev)
                .map_err(|e| Error::io("<stdio>", e))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Calibration) => {
            eprintln!("latticefold: calibration targets not met");
            ExitCode::from(7)
        }
        Err(Failure::Run(e)) => {
            eprintln!("latticefold: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
