//! Flat JSON experiment manifests for `validate`, merged under the command-line flags.

use std::path::Path;

use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::Deserialize;

use tailproc::montecarlo::{ExperimentConfig, KChoice, SamplingMode};
use tailproc::process::{arma_to_ma, CoefficientSequence, InnovationModel, DEFAULT_TRUNCATION_TOL};

use crate::args::{CoeffArgs, Innovations, Sampling, ValidateArgs};
use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub coeffs: Option<Vec<f64>>,
    pub ar: Option<Vec<f64>>,
    pub ma: Option<Vec<f64>>,
    pub alpha: Option<f64>,
    pub innovations: Option<Innovations>,
    pub r: Option<f64>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub theta: Option<f64>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub sampling: Option<Sampling>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            CliError::Usage(format!("config {}: key `{key}`: {}", path.display(), e.inner()))
        })
    }
}

const DEFAULT_COEFFS: &[f64] = &[1.0];

pub fn build_coeffs(inline: &[f64], ar: Option<&[f64]>, ma: Option<&[f64]>) -> Result<CoefficientSequence, CliError> {
    match (ar, ma) {
        (None, None) => Ok(CoefficientSequence::explicit(inline.to_vec())?),
        (ar, ma) => Ok(arma_to_ma(ar.unwrap_or(&[]), ma.unwrap_or(&[]), DEFAULT_TRUNCATION_TOL)?),
    }
}

pub fn coeffs_from_args(args: &CoeffArgs) -> Result<CoefficientSequence, CliError> {
    build_coeffs(args.coeffs.as_deref().unwrap_or(DEFAULT_COEFFS), args.ar.as_deref(), args.ma.as_deref())
}

pub fn innovation_model(kind: Innovations, alpha: f64) -> Result<InnovationModel, CliError> {
    Ok(match kind {
        Innovations::OneSided => InnovationModel::one_sided(alpha)?,
        Innovations::Symmetric => InnovationModel::symmetric(alpha)?,
    })
}

fn on_command_line(m: &ArgMatches, id: &str) -> bool {
    matches!(m.value_source(id), Some(ValueSource::CommandLine))
}

/// Explicit flag, then file value, then the flag default.
fn pick<T: Clone>(m: &ArgMatches, id: &str, flag: &T, file: &Option<T>) -> T {
    if on_command_line(m, id) {
        flag.clone()
    } else {
        file.clone().unwrap_or_else(|| flag.clone())
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Merges flags over the optional config file.
pub fn experiment_config(args: &ValidateArgs, m: &ArgMatches) -> Result<ExperimentConfig, CliError> {
    let file = match &args.input {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };

    let cli_coeff_source = ["coeffs", "ar", "ma"].iter().any(|id| on_command_line(m, id));
    let coeffs = if cli_coeff_source || (file.coeffs.is_none() && file.ar.is_none() && file.ma.is_none()) {
        coeffs_from_args(&args.coeffs)?
    } else {
        if file.coeffs.is_some() && (file.ar.is_some() || file.ma.is_some()) {
            return Err(CliError::Usage("config: key `coeffs` conflicts with `ar`/`ma`".into()));
        }
        build_coeffs(file.coeffs.as_deref().unwrap_or(&[]), file.ar.as_deref(), file.ma.as_deref())?
    };

    let alpha = pick(m, "alpha", &args.alpha, &file.alpha);
    let innovations = pick(m, "innovations", &args.innovations, &file.innovations);
    let theta = pick(m, "theta", &args.theta, &file.theta);
    let k = if on_command_line(m, "k") { args.k } else { file.k.or(args.k) };
    // Worker count: flag, then file, then the environment, then all cores.
    let workers = if on_command_line(m, "workers") {
        args.workers
    } else {
        file.workers.or(args.workers)
    }
    .unwrap_or_else(default_workers);

    Ok(ExperimentConfig {
        coeffs,
        model: innovation_model(innovations, alpha)?,
        n: pick(m, "n", &args.n, &file.n),
        k: match k {
            Some(k) => KChoice::Fixed { k },
            None => KChoice::RuleIv { theta },
        },
        r: pick(m, "r", &args.r, &file.r),
        replications: pick(m, "reps", &args.reps, &file.reps),
        master_seed: pick(m, "seed", &args.seed, &file.seed),
        worker_count_hint: workers,
        sampling: match pick(m, "sampling", &args.sampling, &file.sampling) {
            Sampling::Process => SamplingMode::Process,
            Sampling::ExactGpd => SamplingMode::ExactGpd,
        },
    })
}
