use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use thermovisco::diagnostics::Check;
use thermovisco::scenario::{Axis, Scenario};
use thermovisco::study::{self, CheckSet, RunPoint};

#[derive(Parser)]
#[command(name = "thermovisco", version, about = "Galerkin thermo-visco-elasticity runs and verification checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; nothing is written when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the scenario seed used by sampled checks and eigen solvers.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one scenario and evaluate its checks.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "all")]
        checks: String,
    },
    /// Repeat a run along a refinement axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "kl|dt|K")]
        sweep_axis: Option<String>,
        #[arg(long, default_value = "energy")]
        checks: String,
    },
    /// Heat equation with integrable data through truncated approximations.
    Renormheat {
        #[command(flatten)]
        common: Common,
    },
    /// Write the Galerkin bases and their Gram defects.
    DumpBasis {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<Scenario> {
    let mut s = Scenario::load(&common.config).with_context(|| format!("loading {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        s.study.seed = seed;
    }
    Ok(s)
}

fn print_checks(prefix: &str, checks: &[Check]) {
    for c in checks {
        let values: Vec<String> = c.values.iter().map(|(k, v)| format!("{k}={v:.6e}")).collect();
        println!("{prefix}{} {:<32} margin={:+.3e}  {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.margin, values.join(" "));
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { common, checks } => {
            let scenario = load(&common)?;
            let set: CheckSet = checks.parse()?;
            let mut ok = true;
            if set != CheckSet::Renorm {
                let outcome = study::run_point(&scenario, RunPoint::of(&scenario), set)?;
                if let Some(dir) = &common.out {
                    study::write_run(dir, &outcome)?;
                }
                print_checks("", &outcome.report.checks);
                ok &= outcome.report.passed();
            }
            if set.renorm() {
                let dir = common.out.as_ref().map(|d| d.join("renormheat"));
                let report = study::renorm_run(&scenario, dir.as_deref())?;
                print_checks("", &report.checks);
                ok &= report.passed();
            }
            Ok(ok)
        }
        Command::Sweep { common, sweep_axis, checks } => {
            let scenario = load(&common)?;
            let axis: Axis = match sweep_axis {
                Some(a) => a.parse()?,
                None => scenario.study.axis.unwrap_or(Axis::Kl),
            };
            let summary = study::sweep(&scenario, axis, checks.parse()?, common.out.as_deref())?;
            for (i, p) in summary.points.iter().enumerate() {
                let ind = summary.indicator[i].map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into());
                println!(
                    "{} {:<16} E_final={:.6e} indicator={ind}",
                    if summary.passed[i] { "PASS" } else { "FAIL" },
                    p.label(axis),
                    summary.final_energy[i]
                );
            }
            print_checks("", &summary.checks);
            Ok(summary.passed())
        }
        Command::Renormheat { common } => {
            let scenario = load(&common)?;
            let report = study::renorm_run(&scenario, common.out.as_deref())?;
            print_checks("", &report.checks);
            Ok(report.passed())
        }
        Command::DumpBasis { common } => {
            let scenario = load(&common)?;
            let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
            let gram = study::dump_basis(&scenario, &dir)?;
            println!("largest Gram defect {:.3e}", gram.max());
            Ok(gram.max() <= 1e-8)
        }
    }
}
