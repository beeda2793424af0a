use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lbs_core::catalog::{self, Case};
use lbs_core::{Mode, RunConfig, Tolerances};

#[derive(Parser)]
#[command(name = "lbsr", version, about = "Verify generalized symmetries, ansatz reductions and exact solutions of PDEs")]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    cmd: Option<Cmd>,
}

#[derive(Args, Clone)]
struct Opts {
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Relative residual below which a numeric test passes.
    #[arg(long, global = true)]
    tol_pass: Option<f64>,
    /// Relative residual above which a numeric test fails.
    #[arg(long, global = true)]
    tol_fail: Option<f64>,
    /// Random points per numeric test.
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true, default_value = "both")]
    mode: Mode,
    /// Case id glob, or kind=<kind>.
    #[arg(long, global = true)]
    filter: Option<String>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Case file to use instead of the bundled catalog.
    #[arg(long, global = true)]
    catalog: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the selected cases (the default).
    #[command(alias = "run")]
    Verify,
    /// List cases.
    List,
    /// Print a case and its intermediate expressions.
    Show { id: String },
    /// Dump residuals before and after reduction, then the verdict.
    Explain { id: String },
}

fn config(o: &Opts) -> Result<RunConfig, String> {
    let mut tol = Tolerances::default();
    if let Some(p) = o.tol_pass {
        tol.pass = p;
    }
    if let Some(f) = o.tol_fail {
        tol.fail = f;
    }
    if let Some(k) = o.samples {
        tol.samples = k;
    }
    if !(tol.pass > 0.0 && tol.fail > 0.0) {
        return Err("tolerances must be positive".into());
    }
    if tol.pass > tol.fail {
        return Err(format!("--tol-pass {} exceeds --tol-fail {}", tol.pass, tol.fail));
    }
    if tol.samples == 0 {
        return Err("--samples must be at least 1".into());
    }
    if o.jobs == Some(0) {
        return Err("--jobs must be at least 1".into());
    }
    Ok(RunConfig { seed: o.seed, tol, mode: o.mode, jobs: o.jobs })
}

fn cases(o: &Opts) -> Result<Vec<Case>, String> {
    match &o.catalog {
        Some(p) => catalog::load(p),
        None => catalog::bundled(),
    }
    .map_err(|e| e.to_string())
}

fn find<'a>(cases: &'a [Case], id: &str) -> Result<&'a Case, String> {
    cases.iter().find(|c| c.id == id).ok_or_else(|| format!("no case with id '{}'", id))
}

fn exec(cli: Cli) -> Result<i32, String> {
    let o = cli.opts;
    let cfg = config(&o)?;
    let all = cases(&o)?;
    match cli.cmd.unwrap_or(Cmd::Verify) {
        Cmd::Verify => {
            let sel = catalog::select(&all, o.filter.as_deref());
            let report = lbs_core::run::run(&sel, &cfg);
            match o.format {
                Format::Text => print!("{}", report.to_text()),
                Format::Json => println!("{}", report.to_json()),
            }
            Ok(report.exit_code())
        }
        Cmd::List => {
            let sel = catalog::select(&all, o.filter.as_deref());
            match o.format {
                Format::Text => {
                    let w = sel.iter().map(|c| c.id.len()).max().unwrap_or(0);
                    for c in &sel {
                        println!("{:<w$}  {:<16} {:<11} {}", c.id, c.kind.as_str(), c.expect.as_str(), c.title, w = w);
                    }
                }
                Format::Json => {
                    let rows: Vec<_> = sel
                        .iter()
                        .map(|c| {
                            serde_json::json!({
                                "id": c.id,
                                "kind": c.kind.as_str(),
                                "expect": c.expect.as_str(),
                                "topic": c.topic,
                                "title": c.title,
                            })
                        })
                        .collect();
                    println!("{}", serde_json::to_string_pretty(&rows).expect("list serializes"));
                }
            }
            Ok(0)
        }
        Cmd::Show { id } => {
            let c = find(&all, &id)?;
            print!("{}", c.record.to_text());
            println!();
            for (k, v) in lbs_core::run::explain(c)? {
                println!("{}:\n    {}", k, v);
            }
            Ok(0)
        }
        Cmd::Explain { id } => {
            let c = find(&all, &id)?;
            for (k, v) in lbs_core::run::explain(c)? {
                println!("{}:\n    {}", k, v);
            }
            let report = lbs_core::run::run(&[c], &cfg);
            println!();
            match o.format {
                Format::Text => print!("{}", report.to_text()),
                Format::Json => println!("{}", report.to_json()),
            }
            Ok(report.exit_code())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match exec(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("lbsr: {}", e);
            ExitCode::from(2)
        }
    }
}
