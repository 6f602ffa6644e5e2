use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use clap::error::ErrorKind;

mod args;
mod config;
mod run;

use args::{resolve, Cli};
use run::{execute, Report};

fn summarize(w: &mut impl Write, report: &Report, path: &std::path::Path) -> std::io::Result<()> {
    writeln!(w, "mode {}", report.mode.as_str())?;
    for r in &report.runs {
        let stat = r.min_bregman_stat.map(|s| format!(", min stationarity {s:.3e}")).unwrap_or_default();
        let status = match &r.status {
            mirror_em::solver::TraceStatus::Completed => "completed".to_string(),
            mirror_em::solver::TraceStatus::Converged { at } => format!("converged at {at}"),
            mirror_em::solver::TraceStatus::Failed { at, reason } => format!("failed at {at}: {reason}"),
        };
        writeln!(
            w,
            "seed {} {}: {} iterations, final objective {:.10}{stat}, {status} -> {}",
            r.seed, r.label, r.iterations, r.final_nll, r.file
        )?;
    }
    for d in &report.details {
        writeln!(w, "{d}")?;
    }
    for v in &report.verdicts {
        let seed = v.seed.map(|s| format!(" seed {s}")).unwrap_or_default();
        writeln!(w, "{} {}{seed}", if v.pass { "PASS" } else { "FAIL" }, v.check)?;
    }
    writeln!(w, "report {}", path.display())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cfg = match resolve(&cli.command) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    match execute(&cfg) {
        Ok((report, path)) => {
            // a closed stdout (e.g. piped into head) is not an error
            let _ = summarize(&mut std::io::stdout().lock(), &report, &path);
            if report.any_failed_run() {
                eprintln!("error: at least one run failed numerically");
            } else if !report.all_pass() {
                eprintln!("error: at least one bound check failed");
            }
            ExitCode::from(report.exit_code())
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
