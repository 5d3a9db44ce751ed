//! `hcz`: vessel pruning, hepatic central zone and resection-complexity
//! classification from labelled liver volumes.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use hcz_core::classifier::{FitOptions, Feature};
use hcz_core::morphology::DilationMode;
use hcz_core::pipeline::PipelineConfig;
use hcz_core::pruning::PruneParams;

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "hcz", version, about = "Hepatic central zone pipeline and resection-complexity classifier")]
struct Cli {
    /// Suppress intermediate artifact dumps and progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract, skeletonize and prune the vessel trees of one volume.
    Prune(SingleCase),
    /// Build the central zone of one volume.
    Hcz(SingleCase),
    /// Compute biomarkers for one or more volumes.
    Biomarkers(MultiCase),
    /// Fit the classifier on a dataset CSV.
    Fit(ClassifierArgs),
    /// Leave-one-out evaluation on a dataset CSV.
    Evaluate(ClassifierArgs),
    /// Backward feature elimination with leave-one-out evaluation.
    Ablate(ClassifierArgs),
    /// Leave-one-out ROC curve.
    Roc(ClassifierArgs),
    /// Generate a synthetic phantom dataset with planted labels.
    Phantom(PhantomArgs),
    /// Write the central zone hull of one volume as Wavefront OBJ.
    ExportMesh(SingleCase),
    /// Volumes to biomarkers, dataset, ablation, ROC and metrics.
    Run(RunArgs),
}

#[derive(Args, Debug, Clone)]
struct PipelineArgs {
    /// Maximum bifurcation level kept by pruning.
    #[arg(long, default_value_t = 2)]
    bif_max: u32,
    /// Branch reduction factor below which a child branch is noise.
    #[arg(long, default_value_t = 0.2)]
    r_max: f64,
    /// Leave noise-tagged branches out of the reconstruction.
    #[arg(long)]
    drop_noise_branches: bool,
    /// Intersect the central zone with the liver mask.
    #[arg(long)]
    clip_to_liver: bool,
    /// Lesion components smaller than this are ignored.
    #[arg(long, default_value_t = 1)]
    min_lesion_voxels: usize,
    /// Ball size used to reconstruct vessels from the pruned skeleton.
    #[arg(long, value_enum, default_value_t = Dilation::Radius)]
    dilation: Dilation,
    /// Input value remapping as FROM:TO pairs (targets 0..=3), e.g. 1:1,2:2,5:3.
    #[arg(long, value_delimiter = ',', value_parser = parse_pair)]
    remap: Vec<(u8, u8)>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Dilation {
    Radius,
    Diameter,
}

impl PipelineArgs {
    fn config(&self) -> Result<PipelineConfig, CliError> {
        let prune = PruneParams { bif_max: self.bif_max, r_max: self.r_max };
        prune.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(PipelineConfig {
            prune,
            drop_noise_branches: self.drop_noise_branches,
            clip_to_liver: self.clip_to_liver,
            min_lesion_voxels: self.min_lesion_voxels,
            dilation: match self.dilation {
                Dilation::Radius => DilationMode::Radius,
                Dilation::Diameter => DilationMode::Diameter,
            },
        })
    }
}

fn parse_pair(s: &str) -> Result<(u8, u8), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected FROM:TO, got {s:?}"))?;
    let a = a.trim().parse::<u8>().map_err(|e| e.to_string())?;
    let b = b.trim().parse::<u8>().map_err(|e| e.to_string())?;
    if b > 3 {
        return Err(format!("target label {b} outside 0..=3"));
    }
    Ok((a, b))
}

#[derive(Args, Debug)]
struct SingleCase {
    /// Label volume (NRRD).
    input: PathBuf,
    /// Output directory, or the OBJ path for export-mesh.
    #[arg(long, short)]
    out: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
struct MultiCase {
    /// Label volumes or directories of `*.nrrd`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, short)]
    out: PathBuf,
    /// CSV with case_id and raw_score and/or label; enables dataset.csv.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Comma-separated features out of B_HCZ, N_Les, V_Les, V_Liv.
    #[arg(long, value_delimiter = ',', value_parser = parse_feature, default_value = "B_HCZ,N_Les,V_Les,V_Liv")]
    features: Vec<Feature>,
    /// L2 penalty on the non-intercept weights.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Fit on raw feature values.
    #[arg(long)]
    no_standardize: bool,
}

impl FitArgs {
    fn options(&self) -> Result<FitOptions, CliError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(CliError::Usage(format!("lambda must be finite and non-negative, got {}", self.lambda)));
        }
        Ok(FitOptions { lambda: self.lambda, standardize: !self.no_standardize, ..FitOptions::default() })
    }
}

fn parse_feature(s: &str) -> Result<Feature, String> {
    Feature::parse(s.trim()).ok_or_else(|| format!("unknown feature {s:?}"))
}

#[derive(Args, Debug)]
struct ClassifierArgs {
    /// Dataset CSV (case_id, b_hcz, n_les, v_les_mm3, v_liv_mm3, raw_score, label).
    #[arg(long)]
    dataset: PathBuf,
    /// Output file (fit, evaluate, roc) or directory (ablate).
    #[arg(long, short)]
    out: PathBuf,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args, Debug)]
struct PhantomArgs {
    #[arg(long, default_value_t = 40)]
    n_cases: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Probability of planting a complex case.
    #[arg(long, default_value_t = 0.5)]
    complex_fraction: f64,
    /// Spur probability at each junction.
    #[arg(long, default_value_t = 0.3)]
    spur_probability: f64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    cases: MultiCase,
    #[command(flatten)]
    fit: FitArgs,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("CORE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("CORE_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Internal(e.to_string()))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let quiet = cli.quiet;
    match cli.command {
        Command::Prune(a) => commands::prune(&a.input, &a.out, &a.pipeline.config()?, &a.pipeline.remap, quiet),
        Command::Hcz(a) => commands::hcz(&a.input, &a.out, &a.pipeline.config()?, &a.pipeline.remap, quiet),
        Command::ExportMesh(a) => commands::export_mesh(&a.input, &a.out, &a.pipeline.config()?, &a.pipeline.remap),
        Command::Biomarkers(a) => {
            commands::biomarkers(&a.inputs, &a.out, a.labels.as_deref(), &a.pipeline.config()?, &a.pipeline.remap, quiet)
                .map(|_| ())
        }
        Command::Fit(a) => commands::fit(&a.dataset, &a.out, &a.fit.features, &a.fit.options()?, quiet),
        Command::Evaluate(a) => commands::evaluate(&a.dataset, &a.out, &a.fit.features, &a.fit.options()?, quiet),
        Command::Ablate(a) => commands::ablate(&a.dataset, &a.out, &a.fit.features, &a.fit.options()?, quiet),
        Command::Roc(a) => commands::roc(&a.dataset, &a.out, &a.fit.features, &a.fit.options()?),
        Command::Phantom(a) => commands::phantom(a.n_cases, a.seed, a.complex_fraction, a.spur_probability, &a.out, quiet),
        Command::Run(a) => {
            let labels = a.cases.labels.as_deref().ok_or_else(|| CliError::Usage("run needs --labels".into()))?;
            commands::run(&a.cases.inputs, &a.cases.out, labels, &a.cases.pipeline.config()?, &a.cases.pipeline.remap, &a.fit.features, &a.fit.options()?, quiet)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
