mod args;
mod config;

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};
use serde::Serialize;
use thiserror::Error;

use tailproc::asymptotics::estimator_cov;
use tailproc::estimator::{lme_fit, top_k_excesses, ExcessSample, LmeEstimate};
use tailproc::montecarlo::{run_experiment, write_records_csv, write_report_json, Experiment};
use tailproc::process::simulate;
use tailproc::second_order::check_conditions;

use args::{CheckArgs, Cli, Command, CovArgs, FitArgs, Format, SimulateArgs, ValidateArgs};
use config::{coeffs_from_args, experiment_config, innovation_model};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(tailproc::Error),
    #[error("{0}")]
    Numerical(tailproc::Error),
}

impl From<tailproc::Error> for CliError {
    fn from(e: tailproc::Error) -> Self {
        use tailproc::Error::*;
        match e {
            NoLmeSolution(_) | SingularMatrix(_) | TTooSmall { .. } | InsufficientRecords { .. } | MomentDoesNotExist(_) => {
                CliError::Numerical(e)
            }
            _ => CliError::Input(e),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Input(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = Cli::from_arg_matches(&matches)
        .map_err(|e| CliError::Usage(e.to_string()))
        .and_then(|cli| match cli.command {
            Command::Simulate(a) => cmd_simulate(&a),
            Command::Fit(a) => cmd_fit(&a),
            Command::Cov(a) => cmd_cov(&a),
            Command::Check(a) => cmd_check(&a),
            Command::Validate(a) => {
                let sub = matches.subcommand_matches("validate").expect("validate matches");
                cmd_validate(&a, sub)
            }
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = if e.exit_code() == 2 { "numerical failure" } else { "error" };
            eprintln!("{kind}: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    let mut out = open_output(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// One value per line; the first line may be a header, extra columns are rejected.
fn read_series(path: Option<&Path>) -> Result<Vec<f64>, CliError> {
    let reader: Box<dyn Read> = match path {
        Some(p) => Box::new(File::open(p).map_err(|e| CliError::Usage(format!("cannot open {}: {e}", p.display())))?),
        None => Box::new(io::stdin().lock()),
    };
    let mut values = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let field = line.trim();
        if field.is_empty() {
            continue;
        }
        if field.contains(',') {
            return Err(CliError::Usage(format!("line {}: expected a single column", i + 1)));
        }
        match field.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(CliError::Usage(format!("line {}: `{field}` is not a number", i + 1))),
        }
    }
    Ok(values)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let coeffs = coeffs_from_args(&a.coeffs)?;
    let model = innovation_model(a.innovations, a.alpha)?;
    let path = simulate(&coeffs, &model, a.n, a.seed)?;
    match a.format {
        Format::Json => write_json(a.output.as_deref(), &path),
        Format::Csv => {
            let mut out = open_output(a.output.as_deref())?;
            writeln!(out, "x")?;
            for v in &path.values {
                writeln!(out, "{v}")?;
            }
            out.flush()?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct FitReport {
    #[serde(flatten)]
    estimate: LmeEstimate,
    k: usize,
    n: usize,
    threshold: f64,
}

fn cmd_fit(a: &FitArgs) -> Result<(), CliError> {
    let values = read_series(a.input.as_deref())?;
    let sample = if a.excesses {
        if let Some(k) = a.k {
            if k != values.len() {
                return Err(CliError::Usage(format!("--k {k} does not match the {} excesses read", values.len())));
            }
        }
        ExcessSample::from_excesses(values)?
    } else {
        let k = a
            .k
            .ok_or_else(|| CliError::Usage("--k is required unless --excesses is given".into()))?;
        if k >= values.len() {
            return Err(CliError::Usage(format!(
                "--k {k} needs at least {} values, read {}; pass --excesses if the input already holds excesses",
                k + 1,
                values.len()
            )));
        }
        top_k_excesses(&values, k)?
    };
    let estimate = lme_fit(&sample, a.r)?;
    let report = FitReport {
        estimate,
        k: sample.k(),
        n: sample.n(),
        threshold: sample.threshold(),
    };
    write_json(a.output.as_deref(), &report)
}

fn cmd_cov(a: &CovArgs) -> Result<(), CliError> {
    let coeffs = coeffs_from_args(&a.coeffs)?;
    let report = estimator_cov(a.gamma, a.r, &coeffs)?;
    write_json(a.output.as_deref(), &report)
}

fn cmd_check(a: &CheckArgs) -> Result<(), CliError> {
    let coeffs = coeffs_from_args(&a.coeffs)?;
    let report = check_conditions(a.alpha, &coeffs, a.xi);
    write_json(a.output.as_deref(), &report)
}

fn cmd_validate(a: &ValidateArgs, m: &clap::ArgMatches) -> Result<(), CliError> {
    let config = experiment_config(a, m)?;
    let experiment = Experiment::new(config)?;
    let out = run_experiment(&experiment)?;
    if let Some(dir) = &a.output {
        std::fs::create_dir_all(dir)?;
        let records = BufWriter::new(File::create(dir.join("records.csv"))?);
        write_records_csv(records, &out.records)?;
        let report = BufWriter::new(File::create(dir.join("report.json"))?);
        write_report_json(report, &out.report)?;
    }
    let mut stdout = BufWriter::new(io::stdout().lock());
    match a.format {
        Format::Json => write_report_json(&mut stdout, &out.report)?,
        Format::Csv => write_records_csv(&mut stdout, &out.records)?,
    }
    stdout.flush()?;
    Ok(())
}
