use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use svmf_core::synth::PerturbationParams;
use svmf_core::{Catalog, Hyperparams};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "svmf", version, about = "Substructure-graph fingerprints: build, index, search and evaluate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fingerprint every detection set in a JSONL file, one file per image key.
    Fingerprint(FingerprintArgs),
    /// Build a fingerprint index from detection JSONL or a fingerprint directory.
    Index(IndexArgs),
    /// Print the top-k index entries closest to a query as TSV.
    Search(SearchArgs),
    /// Print the rank of a target key for a query.
    Rank(RankArgs),
    /// Substructure F1 and molecule exact match over evaluation JSONL.
    EvalDetect(EvalDetectArgs),
    /// Average target rank over a benchmark bundle or an index plus query list.
    EvalRetrieval(EvalRetrievalArgs),
    /// Generate a synthetic retrieval benchmark bundle.
    Gen(GenArgs),
}

/// Catalog and hyperparameter flags. Unset hyperparameters keep the
/// reference values (or, for bundles, the values recorded in the manifest).
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Catalog TSV; defaults to the bundled 1561-class reference catalog.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Weight per instance on the diagonal [default: 10].
    #[arg(long)]
    pub h1: Option<f64>,
    /// Comma-separated intersection weights by distance [default: 2,2,0.5,0.125,0.0078125].
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub h2: Option<Vec<f64>>,
    /// Largest distance that contributes; truncates the h2 table [default: 4].
    #[arg(long)]
    pub cap: Option<u32>,
    /// Divisor applied once per carbon-backbone endpoint [default: 2].
    #[arg(long)]
    pub carbon_divisor: Option<f64>,
    /// Box expansion as a fraction of the smallest box diagonal [default: 0.1].
    #[arg(long, allow_negative_numbers = true)]
    pub expansion: Option<f64>,
    /// Drop detections scoring below this value.
    #[arg(long, default_value_t = 0.0)]
    pub score_threshold: f64,
}

impl ModelArgs {
    pub fn catalog(&self) -> CliResult<Catalog> {
        match &self.catalog {
            Some(path) => Catalog::load(path).map_err(|e| CliError::from(e).context(path.display())),
            None => Ok(Catalog::reference()),
        }
    }

    /// Applies the overrides on top of `base` and validates the result.
    pub fn hyperparams(&self, base: Hyperparams) -> CliResult<Hyperparams> {
        let mut hp = base;
        if let Some(h1) = self.h1 {
            hp.h1 = h1;
        }
        if let Some(h2) = &self.h2 {
            hp.h2 = h2.clone();
        }
        if let Some(divisor) = self.carbon_divisor {
            hp.carbon_divisor = divisor;
        }
        if let Some(expansion) = self.expansion {
            hp.expansion_factor = expansion;
        }
        if let Some(cap) = self.cap {
            hp = hp.with_cap(cap)?;
        }
        hp.validate()?;
        if !self.score_threshold.is_finite() {
            return Err(CliError::data("score threshold must be finite"));
        }
        Ok(hp)
    }

    pub fn overrides_hyperparams(&self) -> bool {
        self.h1.is_some()
            || self.h2.is_some()
            || self.cap.is_some()
            || self.carbon_divisor.is_some()
            || self.expansion.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FingerprintFormat {
    /// Binary `<key>.svmf`.
    Binary,
    /// JSON `<key>.svmf.json`.
    Json,
}

#[derive(Debug, Args)]
pub struct FingerprintArgs {
    /// Detection JSONL.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = FingerprintFormat::Binary)]
    pub format: FingerprintFormat,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Detection JSONL, or a directory of `.svmf` / `.svmf.json` files.
    #[arg(long)]
    pub input: PathBuf,
    /// Index file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Query fingerprint, binary or JSON.
    #[arg(long)]
    pub query: PathBuf,
    /// Number of results; clamped to the index size.
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Query fingerprint, binary or JSON.
    #[arg(long)]
    pub query: PathBuf,
    /// Key whose rank is reported.
    #[arg(long)]
    pub target: String,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Print the JSON report instead of the table.
    #[arg(long)]
    pub json: bool,
    /// Also write the JSON report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalDetectArgs {
    /// Evaluation JSONL with `molecule_key`, `predicted` and `ground_truth`.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Args)]
pub struct EvalRetrievalArgs {
    /// Benchmark bundle directory written by `gen`.
    #[arg(long, conflicts_with_all = ["index", "queries"], required_unless_present = "index")]
    pub bundle: Option<PathBuf>,
    /// Index file; requires `--queries`.
    #[arg(long, requires = "queries")]
    pub index: Option<PathBuf>,
    /// Query JSONL with `target_key` and `query_fp`.
    #[arg(long, requires = "index")]
    pub queries: Option<PathBuf>,
    #[command(flatten)]
    pub report: ReportArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Bundle directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub bases: usize,
    /// Perturbed variants per base and level.
    #[arg(long, default_value_t = 1)]
    pub variants: usize,
    /// Perturbation level as `drop,substitute,jitter`; repeatable. Defaults to
    /// the three reference levels.
    #[arg(long = "level", value_parser = parse_level, conflicts_with = "identity")]
    pub levels: Vec<PerturbationParams>,
    /// Single unperturbed level.
    #[arg(long)]
    pub identity: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub min_instances: Option<usize>,
    #[arg(long)]
    pub max_instances: Option<usize>,
    #[arg(long)]
    pub canvas_width: Option<f64>,
    #[arg(long)]
    pub canvas_height: Option<f64>,
    #[arg(long)]
    pub box_size: Option<f64>,
    /// Draw classes from the first N functional groups.
    #[arg(long, default_value_t = 12)]
    pub pool_fg: usize,
    /// Draw classes from the first N carbon backbones.
    #[arg(long, default_value_t = 4)]
    pub pool_cb: usize,
    #[command(flatten)]
    pub model: ModelArgs,
}

fn parse_level(text: &str) -> Result<PerturbationParams, String> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [drop_prob, substitute_prob, jitter_frac] => Ok(PerturbationParams {
            drop_prob,
            substitute_prob,
            jitter_frac,
            seed: 0,
        }),
        _ => Err("expected drop,substitute,jitter".into()),
    }
}

/// Image keys become file names, so they must be a single plain component.
pub fn check_file_key(key: &str) -> CliResult<()> {
    let unsafe_key = key.is_empty()
        || key == "."
        || key == ".."
        || key.chars().any(|c| c == '/' || c == '\\' || c.is_control())
        || Path::new(key).is_absolute();
    if unsafe_key {
        return Err(CliError::data(format!("image_key {key:?} is not usable as a file name")));
    }
    Ok(())
}
