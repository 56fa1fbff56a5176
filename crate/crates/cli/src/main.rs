//! `lohe`: run synchronization scenarios and inspect their outputs.
//!
//! ```text
//! lohe run-sl --config scenarios/lemma41_n2.toml --out runs
//! lohe run-wl --config scenarios/thm41_wigner.toml --out runs
//! lohe run-kuramoto --config scenarios/kuramoto_pair.toml
//! lohe compare --config scenarios/pipeline_harmonic.toml
//! lohe transform --input runs/x/fields/psi1_00000.bin --out w11.bin
//! lohe hydro --run runs/lemma41_n2-0123456789ab
//! lohe report runs/lemma41_n2-0123456789ab
//! ```
//!
//! Exit status is 0 when every declared check passes, 1 when a check fails
//! and 2 on configuration or solver errors.

use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitCode};

use clap::{Args, Parser, Subcommand};
use lohe_core::harness::{self, Model, RunManifest, Scenario};

#[derive(Parser)]
#[command(name = "lohe", version, about = "Quantum synchronization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Scenario file; repeat to run several.
    #[arg(long, required = true)]
    config: Vec<PathBuf>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of scenarios run concurrently, each in its own process.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Overrides the snapshot cadence (steps).
    #[arg(long)]
    snapshot_every: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Schrödinger-Lohe run.
    RunSl(RunArgs),
    /// Wigner-Lohe run.
    RunWl(RunArgs),
    /// Kuramoto run.
    RunKuramoto(RunArgs),
    /// Wigner transform of spatial snapshots.
    Transform {
        #[arg(long)]
        input: PathBuf,
        /// Second field for a cross transform.
        #[arg(long)]
        partner: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Hydrodynamic post-processing of a finished SL run.
    Hydro {
        #[arg(long)]
        run: PathBuf,
    },
    /// Cross-check the SL and W-L pipelines on an N = 2 scenario.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        snapshot_every: Option<usize>,
    },
    /// Summarize run manifests.
    Report { paths: Vec<PathBuf> },
}

const FAILED: u8 = 1;
const ERROR: u8 = 2;

fn load(path: &Path, seed: Option<u64>, snapshot_every: Option<usize>) -> Result<Scenario, String> {
    let mut s = Scenario::load(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if seed.is_some() {
        s.seed = seed;
    }
    if snapshot_every.is_some() {
        s.dynamics.snapshot_every = snapshot_every;
    }
    Ok(s)
}

fn run_one(model: Model, path: &Path, args: &RunArgs) -> u8 {
    let scenario = match load(path, args.seed, args.snapshot_every) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ERROR;
        }
    };
    if scenario.model != model {
        eprintln!(
            "error: {} declares model {:?}, not {:?}",
            path.display(),
            scenario.model,
            model
        );
        return ERROR;
    }
    match harness::run(&scenario, &args.out) {
        Ok(m) => {
            print!("{}", m.summary());
            println!("wrote {}", m.run_dir.display());
            if m.pass {
                0
            } else {
                FAILED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ERROR
        }
    }
}

fn subcommand_name(model: Model) -> &'static str {
    match model {
        Model::Sl => "run-sl",
        Model::Wl => "run-wl",
        Model::Kuramoto => "run-kuramoto",
    }
}

fn spawn(model: Model, path: &Path, args: &RunArgs) -> std::io::Result<Child> {
    let exe = std::env::current_exe()?;
    let mut cmd = Command::new(exe);
    cmd.arg(subcommand_name(model))
        .arg("--config")
        .arg(path)
        .arg("--out")
        .arg(&args.out);
    if let Some(s) = args.seed {
        cmd.arg("--seed").arg(s.to_string());
    }
    if let Some(s) = args.snapshot_every {
        cmd.arg("--snapshot-every").arg(s.to_string());
    }
    cmd.spawn()
}

fn wait(child: Child) -> u8 {
    match child.wait_with_output() {
        Ok(out) => match out.status.code() {
            Some(c) => c.clamp(0, 255) as u8,
            None => ERROR,
        },
        Err(_) => ERROR,
    }
}

fn run_many(model: Model, args: &RunArgs) -> u8 {
    let mut worst = 0;
    if args.jobs <= 1 || args.config.len() == 1 {
        for path in &args.config {
            worst = worst.max(run_one(model, path, args));
        }
        return worst;
    }
    let mut running: Vec<Child> = Vec::new();
    for path in &args.config {
        if running.len() >= args.jobs {
            worst = worst.max(wait(running.remove(0)));
        }
        match spawn(model, path, args) {
            Ok(c) => running.push(c),
            Err(e) => {
                eprintln!("error: cannot start job for {}: {e}", path.display());
                worst = ERROR;
            }
        }
    }
    for c in running {
        worst = worst.max(wait(c));
    }
    worst
}

fn compare(config: &Path, out: &Path, seed: Option<u64>, snapshot_every: Option<usize>) -> u8 {
    let scenario = match load(config, seed, snapshot_every) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ERROR;
        }
    };
    let c = match harness::compare_pipelines(&scenario) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ERROR;
        }
    };
    let hash = scenario.hash().unwrap_or_default();
    let dir = out.join(format!("{}-{hash}-compare", scenario.name));
    if let Err(e) = std::fs::create_dir_all(&dir)
        .map_err(lohe_core::Error::from)
        .and_then(|_| c.write_csv(&dir.join("compare.csv")))
    {
        eprintln!("error: {e}");
        return ERROR;
    }
    let tol = harness::default_tolerance("pipeline").unwrap();
    for (k, v) in c.maxima() {
        println!("max |d{k}| = {v:.3e}");
    }
    let pass = c.max() < tol;
    println!(
        "pipeline discrepancy {:.3e} (tolerance {tol:.0e}): {}",
        c.max(),
        if pass { "PASS" } else { "FAIL" }
    );
    println!("wrote {}", dir.join("compare.csv").display());
    if pass {
        0
    } else {
        FAILED
    }
}

fn report(paths: &[PathBuf]) -> u8 {
    let mut worst = 0;
    for p in paths {
        match RunManifest::load(p) {
            Ok(m) => {
                print!("{}", m.summary());
                if !m.pass {
                    worst = worst.max(FAILED);
                }
            }
            Err(e) => {
                eprintln!("error: {}: {e}", p.display());
                worst = ERROR;
            }
        }
    }
    worst
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Cmd::RunSl(a) => run_many(Model::Sl, &a),
        Cmd::RunWl(a) => run_many(Model::Wl, &a),
        Cmd::RunKuramoto(a) => run_many(Model::Kuramoto, &a),
        Cmd::Transform {
            input,
            partner,
            out,
        } => match harness::transform_files(&input, partner.as_deref(), &out) {
            Ok(()) => {
                println!("wrote {}", out.display());
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                ERROR
            }
        },
        Cmd::Hydro { run } => match harness::hydro_from_run(&run) {
            Ok(c) => {
                println!("{}", serde_json::to_string_pretty(&c).unwrap_or_default());
                println!("wrote {}", run.join("hydro.csv").display());
                if c.pass {
                    0
                } else {
                    FAILED
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ERROR
            }
        },
        Cmd::Compare {
            config,
            out,
            seed,
            snapshot_every,
        } => compare(&config, &out, seed, snapshot_every),
        Cmd::Report { paths } => report(&paths),
    };
    ExitCode::from(code)
}
