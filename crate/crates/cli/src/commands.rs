use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use resaware_core::data::{generate_synthetic_corpus, read_manifest, write_corpus, ManifestEntry, Split, SynthSpec};
use resaware_core::dsp::Resolution;
use resaware_core::metrics::{det_curve, det_to_csv, eer, evaluate, roc_auc, EvalReport, ScoreSet};
use resaware_core::model::{
    canonical_input_shapes, count_parameters, estimate_flops, grad_cam, gradient_check_suite, score_source, train_from,
    EpochRecord, FlopBreakdown, Heatmap, ModelConfig, ModelParams, ParameterBreakdown, SuiteOptions, TrainConfig,
    TrainOutcome, Variant,
};
use resaware_core::nn::checkpoint::Archive;
use resaware_core::nn::sigmoid;

use crate::audio::{file_features, AudioSet};
use crate::{
    AblateArgs, CliError, CliResult, EvalArgs, FlopsArgs, GradcamArgs, GradcheckArgs, ParamsArgs, RunArgs, SynthArgs,
    TrainArgs,
};

pub const CONFIG_FILE: &str = "config.json";

/// Everything needed to replay the run, minus the output directory itself.
fn write_snapshot(dir: &Path, command: &str, args: &impl Serialize, model: Option<&ModelConfig>) -> CliResult<()> {
    let mut snap = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "args": args,
    });
    if let Some(cfg) = model {
        let entries: serde_json::Map<String, serde_json::Value> =
            cfg.to_entries().into_iter().map(|(k, v)| (k, v.into())).collect();
        snap["model"] = entries.into();
        snap["config_hash"] = cfg.hash().into();
    }
    let text = serde_json::to_string_pretty(&snap).expect("serializable snapshot");
    fs::write(dir.join(CONFIG_FILE), text + "\n")?;
    Ok(())
}

pub fn synth(a: &SynthArgs) -> CliResult<Vec<PathBuf>> {
    let spec = SynthSpec {
        n_per_class: a.n,
        seed: a.seed,
        duration_s: a.duration,
        n_speakers: a.speakers,
        dataset_id: a.dataset_id,
        ..SynthSpec::default()
    };
    let mut manifests = vec![write_corpus(&a.out, &generate_synthetic_corpus(&spec)?)?];
    if a.rerecord {
        let replayed = generate_synthetic_corpus(&SynthSpec { rerecord: true, ..spec })?;
        manifests.push(write_corpus(&a.out.join("rerecorded"), &replayed)?);
    }
    write_snapshot(&a.out, "synth", a, None)?;
    Ok(manifests)
}

fn model_config(run: &RunArgs, entries: &[ManifestEntry]) -> CliResult<ModelConfig> {
    let variant: Variant = run.variant.parse()?;
    let num_datasets = match (run.num_datasets, run.dataset_id) {
        (Some(n), _) => n,
        (None, Some(id)) => id + 1,
        (None, None) => entries.iter().map(|e| e.dataset_id).max().unwrap_or(0) + 1,
    };
    let cfg = ModelConfig { num_datasets, lambda_cons: run.lambda, variant, ..ModelConfig::default() };
    cfg.validate()?;
    Ok(cfg)
}

fn train_config(run: &RunArgs, seed: u64) -> TrainConfig {
    TrainConfig { epochs: run.epochs, batch_size: run.batch, lr: run.lr, seed }
}

fn require(set: &AudioSet, split: Split) -> CliResult<()> {
    if set.items.is_empty() {
        return Err(resaware_core::Error::Data(format!("manifest has no {split} entries")).into());
    }
    Ok(())
}

struct Splits {
    entries: Vec<ManifestEntry>,
    train: AudioSet,
    dev: AudioSet,
}

fn load_training_splits(manifest: &Path, run: &RunArgs) -> CliResult<Splits> {
    let entries = read_manifest(manifest)?;
    let train = AudioSet::load(manifest, &entries, Split::Train, true, run.dataset_id)?;
    require(&train, Split::Train)?;
    let dev = AudioSet::load(manifest, &entries, Split::Dev, false, run.dataset_id)?;
    require(&dev, Split::Dev)?;
    Ok(Splits { entries, train, dev })
}

fn fit(splits: &mut Splits, cfg: &ModelConfig, run: &RunArgs, seed: u64) -> CliResult<TrainOutcome> {
    let tc = train_config(run, seed);
    splits.train.set_crop_seed(seed);
    let init = ModelParams::init(cfg, seed)?;
    let progress = |r: &EpochRecord| {
        eprintln!(
            "[{} seed {seed}] epoch {:>2}: loss {:.5} (cls {:.5}, cons {:.5}) dev EER {:.4}",
            cfg.variant, r.epoch, r.loss.total, r.loss.cls, r.loss.cons, r.val_eer
        )
    };
    Ok(train_from(init, &splits.train, &splits.dev, cfg, &tc, progress)?)
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,loss_total,loss_cls,loss_cons,val_eer\n");
    for r in history {
        writeln!(out, "{},{},{},{},{}", r.epoch, r.loss.total, r.loss.cls, r.loss.cons, r.val_eer).unwrap();
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub config: ModelConfig,
    pub best_epoch: usize,
    pub best_val_eer: f64,
    pub history: Vec<EpochRecord>,
    pub checkpoint: PathBuf,
    pub history_path: PathBuf,
}

/// Writes `config.json`, `history.csv` and `checkpoint.bin` (best dev EER).
pub fn train(a: &TrainArgs) -> CliResult<TrainSummary> {
    let mut splits = load_training_splits(&a.manifest, &a.run)?;
    let cfg = model_config(&a.run, &splits.entries)?;
    fs::create_dir_all(&a.out)?;
    write_snapshot(&a.out, "train", a, Some(&cfg))?;
    let outcome = fit(&mut splits, &cfg, &a.run, a.run.seed)?;
    let history_path = a.out.join("history.csv");
    fs::write(&history_path, history_csv(&outcome.history))?;
    let extra = [
        ("train.seed", a.run.seed.to_string()),
        ("train.epochs", a.run.epochs.to_string()),
        ("train.batch", a.run.batch.to_string()),
        ("train.lr", format!("{:?}", a.run.lr)),
        ("train.best_epoch", outcome.best_epoch.to_string()),
        ("train.best_val_eer", format!("{:?}", outcome.best().val_eer)),
    ]
    .map(|(k, v)| (k.to_string(), v));
    let checkpoint = a.out.join("checkpoint.bin");
    fs::write(&checkpoint, outcome.params.to_archive(&cfg, &extra).to_bytes())?;
    Ok(TrainSummary {
        config: cfg,
        best_epoch: outcome.best_epoch,
        best_val_eer: outcome.best().val_eer,
        history: outcome.history,
        checkpoint,
        history_path,
    })
}

pub fn load_checkpoint(path: &Path) -> CliResult<(ModelParams, ModelConfig)> {
    let bytes = fs::read(path)?;
    Ok(ModelParams::from_archive(&Archive::from_bytes(&bytes)?)?)
}

fn check_head(cfg: &ModelConfig, id: usize) -> CliResult<()> {
    if id >= cfg.num_datasets {
        return Err(CliError::Usage(format!("dataset id {id} but the checkpoint has {} heads", cfg.num_datasets)));
    }
    Ok(())
}

/// Writes `metrics.json`, `scores.csv`, `det.csv`, `roc.csv` and the
/// config snapshot.
pub fn eval(a: &EvalArgs) -> CliResult<EvalReport> {
    let split: Split = a.split.parse()?;
    let (params, cfg) = load_checkpoint(&a.checkpoint)?;
    let entries = read_manifest(&a.manifest)?;
    let set = AudioSet::load(&a.manifest, &entries, split, false, a.dataset_id)?;
    require(&set, split)?;
    for u in &set.items {
        check_head(&cfg, u.dataset_id)?;
    }
    let scores = score_source(&set, &params, &cfg)?;
    let report = evaluate(&scores, a.threshold)?;
    let det = det_curve(&scores)?;

    fs::create_dir_all(&a.out)?;
    write_snapshot(&a.out, "eval", a, Some(&cfg))?;
    fs::write(a.out.join("metrics.json"), report.to_json() + "\n")?;
    let mut csv = String::from("path,score,label,logit\n");
    for (u, r) in set.items.iter().zip(&scores.records) {
        writeln!(csv, "{},{},{},{}", u.path.display(), sigmoid(r.score), r.label, r.score).unwrap();
    }
    fs::write(a.out.join("scores.csv"), csv)?;
    fs::write(a.out.join("det.csv"), det_to_csv(&det))?;
    let mut roc = String::from("fpr,tpr\n");
    for (far, frr) in &det {
        writeln!(roc, "{},{}", frr, 1.0 - far).unwrap();
    }
    fs::write(a.out.join("roc.csv"), roc)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub seed: u64,
    pub eer: f64,
    pub auc: f64,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationSummary {
    pub variant: Variant,
    pub eer_mean: f64,
    pub eer_sd: f64,
    pub auc_mean: f64,
    pub auc_sd: f64,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Trains every ablation variant for each seed on the manifest's train/dev
/// splits and scores the test split. Writes `ablation.csv`.
pub fn ablate(a: &AblateArgs) -> CliResult<(Vec<AblationRow>, Vec<AblationSummary>)> {
    if a.seeds == 0 {
        return Err(CliError::Usage("need at least one seed".into()));
    }
    let mut splits = load_training_splits(&a.manifest, &a.run)?;
    let test = AudioSet::load(&a.manifest, &splits.entries, Split::Test, false, a.run.dataset_id)?;
    require(&test, Split::Test)?;
    fs::create_dir_all(&a.out)?;
    write_snapshot(&a.out, "ablate", a, None)?;

    let mut rows = Vec::new();
    for k in 0..a.seeds as u64 {
        let seed = a.run.seed + k;
        for variant in Variant::ABLATIONS {
            let run = RunArgs { variant: variant.to_string(), ..a.run.clone() };
            let cfg = model_config(&run, &splits.entries)?;
            let outcome = fit(&mut splits, &cfg, &run, seed)?;
            let scores: ScoreSet = score_source(&test, &outcome.params, &cfg)?;
            rows.push(AblationRow {
                variant,
                seed,
                eer: eer(&scores)?.0,
                auc: roc_auc(&scores)?,
                best_epoch: outcome.best_epoch,
            });
        }
    }

    let mut csv = String::from("row,variant,seed,eer,auc,eer_sd,auc_sd\n");
    for r in &rows {
        writeln!(csv, "run,{},{},{},{},,", r.variant, r.seed, r.eer, r.auc).unwrap();
    }
    let summary: Vec<AblationSummary> = Variant::ABLATIONS
        .into_iter()
        .map(|variant| {
            let mine: Vec<&AblationRow> = rows.iter().filter(|r| r.variant == variant).collect();
            let (eer_mean, eer_sd) = mean_sd(&mine.iter().map(|r| r.eer).collect::<Vec<_>>());
            let (auc_mean, auc_sd) = mean_sd(&mine.iter().map(|r| r.auc).collect::<Vec<_>>());
            AblationSummary { variant, eer_mean, eer_sd, auc_mean, auc_sd }
        })
        .collect();
    for s in &summary {
        writeln!(csv, "mean,{},,{},{},{},{}", s.variant, s.eer_mean, s.auc_mean, s.eer_sd, s.auc_sd).unwrap();
    }
    fs::write(a.out.join("ablation.csv"), csv)?;
    Ok((rows, summary))
}

fn parse_resolution(s: &str) -> CliResult<Resolution> {
    if let Ok(k) = s.parse::<usize>() {
        return Ok(Resolution::from_number(k)?);
    }
    Resolution::ALL
        .into_iter()
        .find(|r| r.name() == s.to_ascii_lowercase())
        .ok_or_else(|| CliError::Usage(format!("unknown resolution {s:?}")))
}

/// 8-bit binary PGM; row 0 is the lowest mel band.
pub fn heatmap_pgm(h: &Heatmap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", h.width(), h.height()).into_bytes();
    out.extend(h.values.data().iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    out
}

pub fn heatmap_csv(h: &Heatmap) -> String {
    let mut out = String::new();
    for row in h.values.data().chunks(h.width().max(1)) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Writes `gradcam_<resolution>.pgm` and `.csv` per requested resolution.
pub fn gradcam(a: &GradcamArgs) -> CliResult<Vec<Heatmap>> {
    let (params, cfg) = load_checkpoint(&a.checkpoint)?;
    check_head(&cfg, a.dataset_id)?;
    let wanted = match &a.resolution {
        Some(s) => vec![parse_resolution(s)?],
        None => Resolution::ALL.to_vec(),
    };
    let specs = file_features(&a.wav)?;
    fs::create_dir_all(&a.out)?;
    write_snapshot(&a.out, "gradcam", a, Some(&cfg))?;
    let mut maps = Vec::new();
    for r in wanted {
        let h = grad_cam(&specs, &params, &cfg, a.dataset_id, r.number())?;
        fs::write(a.out.join(format!("gradcam_{}.pgm", r.name())), heatmap_pgm(&h))?;
        fs::write(a.out.join(format!("gradcam_{}.csv", r.name())), heatmap_csv(&h))?;
        maps.push(h);
    }
    Ok(maps)
}

pub fn params(a: &ParamsArgs) -> CliResult<ParameterBreakdown> {
    let cfg = ModelConfig { num_datasets: a.num_datasets, ..ModelConfig::default() };
    cfg.validate()?;
    Ok(count_parameters(&cfg))
}

pub fn flops(a: &FlopsArgs) -> CliResult<FlopBreakdown> {
    if !(a.duration >= 0.0 && a.duration.is_finite()) {
        return Err(CliError::Usage("duration must be a non-negative number of seconds".into()));
    }
    let cfg = ModelConfig { num_datasets: a.num_datasets, variant: a.variant.parse()?, ..ModelConfig::default() };
    cfg.validate()?;
    let n = (a.duration * resaware_core::dsp::CANONICAL_SAMPLE_RATE as f64).round() as usize;
    Ok(estimate_flops(&cfg, &canonical_input_shapes(&cfg, n)))
}

#[derive(Debug, Clone)]
pub struct GradcheckOutcome {
    pub report: String,
    pub passed: bool,
    pub cases: usize,
    pub max_rel_error: f64,
}

pub fn gradcheck(a: &GradcheckArgs) -> CliResult<GradcheckOutcome> {
    let opts = SuiteOptions { cases: a.cases, seed: a.seed, corrupt_backward: a.corrupt_backward, ..SuiteOptions::default() };
    let results = gradient_check_suite(&opts)?;
    let mut report = format!(
        "{:<5} {:<18} {:<28} {:<16} {:>7} {:>7} {:>12}  status\n",
        "case", "check", "shape", "tensor", "checked", "skipped", "max_rel_err"
    );
    let mut max_rel_error: f64 = 0.0;
    for c in &results {
        for e in &c.report.entries {
            max_rel_error = max_rel_error.max(e.max_rel_error);
            let status = if e.max_rel_error < c.report.tolerance { "ok" } else { "FAIL" };
            writeln!(
                report,
                "{:<5} {:<18} {:<28} {:<16} {:>7} {:>7} {:>12.3e}  {status}",
                c.case, c.check, c.shape, e.name, e.checked, e.skipped, e.max_rel_error
            )
            .unwrap();
        }
    }
    let passed = results.iter().all(|c| c.passed());
    let cases = results.iter().map(|c| c.case).max().map_or(0, |m| m + 1);
    writeln!(
        report,
        "{} cases, max relative error {:.3e}: {}",
        cases,
        max_rel_error,
        if passed { "PASS" } else { "FAIL" }
    )
    .unwrap();
    Ok(GradcheckOutcome { report, passed, cases, max_rel_error })
}
