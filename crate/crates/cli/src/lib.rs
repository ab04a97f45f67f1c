//! `resaware` command surface. Each subcommand is a plain function over an
//! argument struct so tests can drive it without spawning a process.

pub mod audio;
mod commands;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use resaware_core::model::Variant;

pub use commands::{
    ablate, eval, flops, gradcam, gradcheck, params, synth, train, AblationRow, AblationSummary, GradcheckOutcome,
    TrainSummary,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(resaware_core::Error),
    /// A verification command ran but its check failed.
    CheckFailed(String),
}

impl CliError {
    /// 0 success, 1 usage, 2 data, 3 check failure.
    pub fn exit_code(&self) -> i32 {
        use resaware_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Core(E::Config(_)) | CliError::Core(E::ConfigMismatch(_)) => 1,
            CliError::Core(_) => 2,
            CliError::CheckFailed(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::CheckFailed(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<resaware_core::Error> for CliError {
    fn from(e: resaware_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "resaware", version, about = "Resolution-aware audio spoofing detector")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic bona fide / spoof corpus (WAVs + manifest).
    Synth(SynthArgs),
    /// Train on the manifest's train split, selecting on its dev split.
    Train(TrainArgs),
    /// Score one split with a checkpoint and write metrics and curves.
    Eval(EvalArgs),
    /// Train and test all four ablation variants over several seeds.
    Ablate(AblateArgs),
    /// Grad-CAM heatmaps of one file.
    Gradcam(GradcamArgs),
    /// Trainable parameter breakdown.
    Params(ParamsArgs),
    /// Analytic forward FLOPs.
    Flops(FlopsArgs),
    /// Finite-difference check of every backward pass.
    Gradcheck(GradcheckArgs),
}

fn parse_variant(s: &str) -> Result<String, String> {
    s.parse::<Variant>().map(|v| v.to_string()).map_err(|e| e.to_string())
}

/// Options shared by every training command.
#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 15)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Consistency-loss weight.
    #[arg(long = "lambda", default_value_t = 1.0)]
    pub lambda: f64,
    /// full, no-consistency, single-res[:fine|medium|coarse] or no-attention.
    #[arg(long, default_value = "full", value_parser = parse_variant)]
    pub variant: String,
    /// Route every entry to this classifier head instead of its manifest id.
    #[arg(long)]
    pub dataset_id: Option<usize>,
    /// Number of classifier heads; defaults to the largest dataset id + 1.
    #[arg(long)]
    pub num_datasets: Option<usize>,
}

impl Default for RunArgs {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 15,
            batch: 32,
            lr: 1e-4,
            lambda: 1.0,
            variant: "full".into(),
            dataset_id: None,
            num_datasets: None,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    /// Utterances per class.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub speakers: usize,
    #[arg(long, default_value_t = 2.0)]
    pub duration: f64,
    /// Also write a replayed copy under `<out>/rerecorded`.
    #[arg(long)]
    pub rerecord: bool,
    #[arg(long, default_value_t = 0)]
    pub dataset_id: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Decision threshold on the logit (0 = probability 0.5).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub threshold: f64,
    #[arg(long)]
    pub dataset_id: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AblateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Seeds `seed, seed+1, ...`; `--variant` is ignored.
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GradcamArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub wav: PathBuf,
    /// fine, medium, coarse or 1..3; all three when omitted.
    #[arg(long)]
    pub resolution: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub dataset_id: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ParamsArgs {
    #[arg(long, default_value_t = 3)]
    pub num_datasets: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FlopsArgs {
    #[arg(long, default_value_t = 2.0)]
    pub duration: f64,
    #[arg(long, default_value = "full", value_parser = parse_variant)]
    pub variant: String,
    #[arg(long, default_value_t = 3)]
    pub num_datasets: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub cases: usize,
    /// Test fixture: negate one analytic gradient so the check must fail.
    #[arg(long, hide = true)]
    pub corrupt_backward: bool,
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> CliResult<()> {
    match command {
        Command::Synth(a) => {
            let manifests = synth(a)?;
            for m in manifests {
                println!("wrote {}", m.display());
            }
        }
        Command::Train(a) => {
            let s = train(a)?;
            println!("best epoch {} (dev EER {:.4}); checkpoint {}", s.best_epoch, s.best_val_eer, s.checkpoint.display());
        }
        Command::Eval(a) => print!("{}", eval(a)?.to_json()),
        Command::Ablate(a) => {
            for s in ablate(a)?.1 {
                println!(
                    "{:<16} EER {:.4} ± {:.4}  AUC {:.4} ± {:.4}",
                    s.variant, s.eer_mean, s.eer_sd, s.auc_mean, s.auc_sd
                );
            }
        }
        Command::Gradcam(a) => {
            for h in gradcam(a)? {
                println!("{}: {}x{}", h.resolution.name(), h.height(), h.width());
            }
        }
        Command::Params(a) => println!("{}", params(a)?),
        Command::Flops(a) => println!("{}", flops(a)?),
        Command::Gradcheck(a) => {
            let outcome = gradcheck(a)?;
            print!("{}", outcome.report);
            if !outcome.passed {
                return Err(CliError::CheckFailed(format!(
                    "max relative error {:.3e} exceeds tolerance",
                    outcome.max_rel_error
                )));
            }
        }
    }
    Ok(())
}
