//! Acceptance gate. Runs every criterion in order and prints one
//! `PASS`/`FAIL` line each; exits non-zero if any failed.
//!
//! `cargo test -p resaware-cli --test acceptance -- 1 4 9` runs a subset.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;

use resaware_cli::{AblateArgs, EvalArgs, GradcheckArgs, RunArgs, SynthArgs, TrainArgs};
use resaware_core::data::{
    generate_synthetic_corpus, read_manifest, speaker_disjoint_split, ManifestEntry, Split, SynthSpec,
};
use resaware_core::dsp::{multi_resolution_features, Resolution};
use resaware_core::metrics::{eer, roc_auc, ScoreSet};
use resaware_core::model::{
    canonical_input_shapes, consistency_loss, count_parameters, estimate_flops, forward, grad_cam, sample_consistency,
    total_loss, ModelConfig, ModelParams, Variant,
};
use resaware_core::nn::{Tensor, NORMALIZE_EPS};
use resaware_core::{rng, Label};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64()))
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn c1_parameters() -> Outcome {
    let t = Instant::now();
    let b = count_parameters(&ModelConfig { num_datasets: 3, ..ModelConfig::default() });
    let got = [b.conv1, b.conv2, b.conv3, b.gamma, b.beta, b.attention_in, b.attention_out, b.head, b.total];
    let want = [320, 18_496, 73_856, 384, 384, 49_536, 16_512, 129, 159_875];
    ensure(got == want, format!("rows {got:?}, expected {want:?}"))?;
    within(t.elapsed(), 1.0)?;
    Ok(format!("all rows exact, total {}", b.total))
}

fn c2_flops() -> Outcome {
    let t = Instant::now();
    let cfg = ModelConfig::default();
    let f = estimate_flops(&cfg, &canonical_input_shapes(&cfg, 32_000));
    let (lo, hi) = (936.66 * 0.5, 936.66 * 1.5);
    let m = f.total_mflops();
    ensure((lo..=hi).contains(&m), format!("{m:.2} MFLOPs outside [{lo:.2}, {hi:.2}]"))?;
    within(t.elapsed(), 1.0)?;
    Ok(format!("{m:.2} MFLOPs for 2 s (window {lo:.2}..{hi:.2})"))
}

fn c3_gradcheck() -> Outcome {
    let t = Instant::now();
    let out = resaware_cli::gradcheck(&GradcheckArgs { seed: 0, cases: 20, corrupt_backward: false }).map_err(err)?;
    ensure(out.cases >= 20, format!("only {} cases", out.cases))?;
    ensure(out.passed && out.max_rel_error < 1e-4, format!("max relative error {:.3e}", out.max_rel_error))?;
    within(t.elapsed(), 120.0)?;
    Ok(format!("{} cases, max relative error {:.2e}", out.cases, out.max_rel_error))
}

fn tiny_specs(seed: u64) -> Vec<resaware_core::dsp::MelSpectrogram> {
    let mut r = rng::stream(seed, 0);
    Resolution::ALL
        .iter()
        .zip([(16, 24), (16, 16), (16, 10)])
        .map(|(&res, (h, w))| resaware_core::dsp::MelSpectrogram {
            values: Tensor::from_vec(vec![h, w], (0..h * w).map(|_| r.gen_range(-4.0..2.0)).collect()).unwrap(),
            config: res.config(),
            resolution: Some(res),
        })
        .collect()
}

fn c4_loss_identities() -> Outcome {
    let cfg = ModelConfig { lambda_cons: 0.7, ..ModelConfig::default() };
    let params = ModelParams::init(&cfg, 11).map_err(err)?;
    let traces: Vec<_> =
        (0..4).map(|i| forward(&tiny_specs(i), &params, &cfg, 0)).collect::<Result<_, _>>().map_err(err)?;

    let d = cfg.embed_dim;
    let row: Vec<f64> = (0..d).map(|i| (i as f64 * 0.37).sin()).collect();
    let same = Tensor::from_vec(vec![3, d], row.iter().chain(&row).chain(&row).copied().collect()).unwrap();
    let identical = sample_consistency(&same);
    ensure(identical.abs() < 1e-12, format!("identical embeddings give {identical}"))?;

    let spoof = vec![Label::Spoof; traces.len()];
    let all_spoof = consistency_loss(&traces, &spoof);
    ensure(all_spoof == 0.0, format!("all-spoof batch gives {all_spoof}"))?;

    let mut ortho = vec![0.0; 3 * d];
    for k in 0..3 {
        ortho[k * d + k] = 1.0;
    }
    let mut one = traces[0].clone();
    one.embeddings = Tensor::from_vec(vec![3, d], ortho).unwrap();
    let six = consistency_loss(&[one], &[Label::BonaFide]);
    // each unit row is scaled by 1/(1 + eps) by the normalization guard
    let guarded = 6.0 / (1.0 + NORMALIZE_EPS).powi(2);
    ensure((six - guarded).abs() < 1e-14 && (six - 6.0).abs() < 1e-9, format!("orthogonal embeddings give {six}"))?;

    let labels = [Label::BonaFide, Label::Spoof, Label::BonaFide, Label::Spoof];
    let l = total_loss(&traces, &labels, &cfg);
    let gap = (l.total - (l.cls + cfg.lambda_cons * l.cons)).abs();
    ensure(gap <= 1e-12, format!("total - (cls + lambda cons) = {gap:e}"))?;
    ensure(l.cons > 0.0, "mixed batch should carry a consistency term")?;
    Ok(format!("0 / 0 / {six} / |total - cls - λ·cons| = {gap:.1e}"))
}

/// Pair-count AUC with half credit for ties.
fn oracle_auc(scores: &[(f64, bool)]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for &(s, _) in scores.iter().filter(|x| x.1) {
        for &(b, _) in scores.iter().filter(|x| !x.1) {
            pairs += 1.0;
            wins += if s > b { 1.0 } else if s == b { 0.5 } else { 0.0 };
        }
    }
    wins / pairs
}

/// Every threshold between and around the distinct scores, error rates by
/// direct counting, interpolated at the first crossing.
fn oracle_eer(scores: &[(f64, bool)]) -> f64 {
    let mut u: Vec<f64> = scores.iter().map(|x| x.0).collect();
    u.sort_by(f64::total_cmp);
    u.dedup();
    let mut ts = vec![u[0] - 1.0];
    ts.extend(u.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    ts.push(u[u.len() - 1] + 1.0);
    let n_spoof = scores.iter().filter(|x| x.1).count() as f64;
    let n_bona = scores.len() as f64 - n_spoof;
    let rates = |t: f64| {
        let far = scores.iter().filter(|x| x.1 && x.0 < t).count() as f64 / n_spoof;
        let frr = scores.iter().filter(|x| !x.1 && x.0 >= t).count() as f64 / n_bona;
        (far, frr)
    };
    let mut prev = rates(ts[0]);
    for &t in &ts[1..] {
        let cur = rates(t);
        if cur.0 >= cur.1 {
            let (dp, dc) = (prev.0 - prev.1, cur.0 - cur.1);
            let a = if dc == dp { 1.0 } else { -dp / (dc - dp) };
            return prev.0 + a * (cur.0 - prev.0);
        }
        prev = cur;
    }
    unreachable!("FAR reaches 1 above the largest score")
}

fn c5_metric_oracles() -> Outcome {
    let mut r = rng::stream(5, 0);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let n = r.gen_range(2..=50);
        let quantized = case % 2 == 0;
        let mut pts: Vec<(f64, bool)> = (0..n)
            .map(|_| {
                let s: f64 = r.gen_range(-3.0..3.0);
                (if quantized { (s * 2.0).round() / 2.0 } else { s }, r.gen_bool(0.5))
            })
            .collect();
        pts[0].1 = true;
        pts[1].1 = false;
        let set = ScoreSet::from_pairs(pts.iter().map(|&(s, sp)| (s, if sp { Label::Spoof } else { Label::BonaFide })));
        let auc = roc_auc(&set).map_err(err)?;
        let (e, _) = eer(&set).map_err(err)?;
        let (oa, oe) = (oracle_auc(&pts), oracle_eer(&pts));
        worst = worst.max((auc - oa).abs()).max((e - oe).abs());
        ensure((auc - oa).abs() <= 1e-9, format!("case {case}: AUC {auc} vs oracle {oa}"))?;
        ensure((e - oe).abs() <= 1e-9, format!("case {case}: EER {e} vs oracle {oe}"))?;
        let transforms: [(&str, fn(f64) -> f64); 3] =
            [("exp", f64::exp), ("affine", |x| 3.0 * x + 7.0), ("cubic", |x| x * x * x + x)];
        for (name, f) in transforms {
            let m = set.map_scores(f);
            let (da, de) = ((roc_auc(&m).map_err(err)? - auc).abs(), (eer(&m).map_err(err)?.0 - e).abs());
            worst = worst.max(da).max(de);
            ensure(da <= 1e-9 && de <= 1e-9, format!("case {case}: {name} changes AUC by {da:e}, EER by {de:e}"))?;
        }
    }
    Ok(format!("100 sets (n ≤ 50, half with ties), 3 monotone transforms, max deviation {worst:.1e}"))
}

fn synth(out: &Path, n: usize, speakers: usize, seed: u64, rerecord: bool) -> Result<PathBuf, String> {
    let args = SynthArgs { n, seed, speakers, duration: 2.0, rerecord, dataset_id: 0, out: out.to_path_buf() };
    let manifests = resaware_cli::synth(&args).map_err(err)?;
    Ok(manifests.last().unwrap().clone())
}

fn per_class(entries: &[ManifestEntry], split: Split) -> (usize, usize) {
    let of = |l: Label| entries.iter().filter(|e| e.split == split && e.label == l).count();
    (of(Label::BonaFide), of(Label::Spoof))
}

fn c6_learning(work: &Path) -> Outcome {
    let t = Instant::now();
    // 16 speakers at 0.6/0.2/0.2 -> 10/3/3 speakers, 20 utterances each.
    let manifest = synth(&work.join("clean"), 320, 16, 0, false)?;
    let entries = read_manifest(&manifest).map_err(err)?;
    ensure(per_class(&entries, Split::Train) == (200, 200), format!("train {:?}", per_class(&entries, Split::Train)))?;
    ensure(per_class(&entries, Split::Dev) == (60, 60), format!("dev {:?}", per_class(&entries, Split::Dev)))?;
    let args = TrainArgs { manifest, out: work.join("clean_run"), run: RunArgs::default() };
    let s = resaware_cli::train(&args).map_err(err)?;
    let path: Vec<String> = s.history.iter().map(|r| format!("{:.3}", r.val_eer)).collect();
    ensure(
        s.best_val_eer <= 0.05,
        format!("best dev EER {:.4} > 0.05 (per epoch: {})", s.best_val_eer, path.join(" ")),
    )?;
    within(t.elapsed(), 900.0)?;
    Ok(format!(
        "dev EER {:.4} at epoch {} of {} (per epoch: {}), {:.0} s",
        s.best_val_eer,
        s.best_epoch,
        s.history.len(),
        path.join(" "),
        t.elapsed().as_secs_f64()
    ))
}

fn c7_ablation(work: &Path) -> Outcome {
    let t = Instant::now();
    // 10 speakers -> 6/2/2; 120 train, 40 dev and 40 test utterances.
    let manifest = synth(&work.join("replay"), 100, 10, 0, true)?;
    let args = AblateArgs { manifest, seeds: 5, out: work.join("ablation"), run: RunArgs::default() };
    let (rows, summary) = resaware_cli::ablate(&args).map_err(err)?;
    let mut ordered = 0;
    let mut strictly_worst = 0;
    let mut table = Vec::new();
    for seed in 0..5u64 {
        let e: Vec<f64> = Variant::ABLATIONS
            .iter()
            .map(|v| rows.iter().find(|r| r.seed == seed && r.variant == *v).unwrap().eer)
            .collect();
        if e.windows(2).all(|w| w[0] <= w[1]) {
            ordered += 1;
        }
        if e[..3].iter().all(|&x| x < e[3]) {
            strictly_worst += 1;
        }
        table.push(format!("s{seed}=[{}]", e.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(",")));
    }
    let means: Vec<String> = summary.iter().map(|s| format!("{} {:.4}", s.variant, s.eer_mean)).collect();
    let detail = format!(
        "ordering held in {ordered}/5 seeds, no-attention strictly worst in {strictly_worst}/5; test EER full,no-cons,single,no-att {}; means {}; {:.0} s",
        table.join(" "),
        means.join(", "),
        t.elapsed().as_secs_f64()
    );
    ensure(ordered >= 4 && strictly_worst == 5, detail.clone())?;
    within(t.elapsed(), 5400.0)?;
    Ok(detail)
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn c8_determinism(work: &Path) -> Outcome {
    // Both runs write to the same paths so even the config snapshots compare.
    let base = work.join("det");
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        if base.exists() {
            fs::remove_dir_all(&base).map_err(err)?;
        }
        let manifest = synth(&base.join("corpus"), 24, 4, 9, false)?;
        let run = RunArgs { seed: 5, epochs: 3, batch: 8, ..RunArgs::default() };
        let train = resaware_cli::train(&TrainArgs { manifest: manifest.clone(), out: base.join("run"), run })
            .map_err(err)?;
        let eval = EvalArgs {
            checkpoint: train.checkpoint.clone(),
            manifest,
            split: "test".into(),
            threshold: 0.0,
            dataset_id: None,
            out: base.join("eval"),
        };
        resaware_cli::eval(&eval).map_err(err)?;
        snapshots.push(["corpus", "run", "eval"].map(|sub| (sub, files(&base.join(sub)))));
    }
    let mut checked = Vec::new();
    for ((sub, a), (_, b)) in snapshots[0].iter().zip(&snapshots[1]) {
        ensure(!a.is_empty() && a == b, format!("{sub} outputs differ between runs"))?;
        checked.extend(a.iter().filter(|(n, _)| !n.ends_with(".wav")).map(|(n, _)| format!("{sub}/{n}")));
    }
    Ok(format!("byte-identical across two runs: corpus WAVs, {}", checked.join(", ")))
}

fn c9_speaker_disjoint() -> Outcome {
    let entries: Vec<ManifestEntry> = (0..10)
        .flat_map(|s| {
            (0..3).map(move |u| ManifestEntry {
                path: format!("s{s}_{u}.wav").into(),
                label: if u % 2 == 0 { Label::BonaFide } else { Label::Spoof },
                speaker_id: format!("s{s}"),
                dataset_id: 0,
                split: Split::Train,
            })
        })
        .collect();
    for seed in 0..100u64 {
        let seed = rng::stream(seed, 99).gen::<u64>();
        let out = speaker_disjoint_split(&entries, [0.6, 0.2, 0.2], seed).map_err(err)?;
        ensure(out.len() == entries.len(), "entries lost")?;
        let speakers = |split: Split| {
            let mut v: Vec<&str> = out.iter().filter(|e| e.split == split).map(|e| e.speaker_id.as_str()).collect();
            v.sort();
            v.dedup();
            v
        };
        let (tr, dv, te) = (speakers(Split::Train), speakers(Split::Dev), speakers(Split::Test));
        ensure((tr.len(), dv.len(), te.len()) == (6, 2, 2), format!("seed {seed}: {}/{}/{}", tr.len(), dv.len(), te.len()))?;
        let overlap = tr.iter().any(|s| dv.contains(s) || te.contains(s)) || dv.iter().any(|s| te.contains(s));
        ensure(!overlap, format!("seed {seed}: a speaker spans two splits"))?;
    }
    Ok("100 seeds: always 6/2/2 speakers, pairwise disjoint".into())
}

fn c10_gradcam() -> Outcome {
    let corpus = generate_synthetic_corpus(&SynthSpec { n_per_class: 3, n_speakers: 3, seed: 2, ..SynthSpec::default() })
        .map_err(err)?;
    let mut checked = 0;
    for (i, w) in corpus.waveforms.iter().enumerate() {
        let specs = multi_resolution_features(w).map_err(err)?.to_vec();
        for variant in [
            Variant::Full,
            Variant::NoAttention,
            Variant::SingleResolution(Resolution::Fine),
            Variant::SingleResolution(Resolution::Medium),
            Variant::SingleResolution(Resolution::Coarse),
        ] {
            let cfg = ModelConfig::with_variant(variant);
            let params = ModelParams::init(&cfg, 100 + i as u64).map_err(err)?;
            for r in Resolution::ALL {
                let h = grad_cam(&specs, &params, &cfg, 0, r.number()).map_err(err)?;
                let again = grad_cam(&specs, &params, &cfg, 0, r.number()).map_err(err)?;
                let tag = format!("{variant} {} file {i}", r.name());
                ensure(h == again, format!("{tag}: not deterministic"))?;
                let v = h.values.data();
                ensure(v.iter().all(|&x| (0.0..=1.0).contains(&x)), format!("{tag}: outside [0, 1]"))?;
                let max = v.iter().cloned().fold(0.0, f64::max);
                let min = v.iter().cloned().fold(1.0, f64::min);
                let unused = matches!(variant, Variant::SingleResolution(k) if k != r);
                if unused {
                    ensure(max == 0.0, format!("{tag}: unused resolution has a non-zero map"))?;
                } else if max > 0.0 {
                    ensure(max == 1.0 && min == 0.0, format!("{tag}: not min-max normalized ({min}, {max})"))?;
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} maps: in [0,1], min-max normalized, repeatable, zero off-path for single-res"))
}

fn main() {
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let work = tempfile::tempdir().expect("scratch dir");
    let w = work.path();
    let criteria: Vec<(usize, &str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, "parameter decomposition", Box::new(c1_parameters)),
        (2, "FLOP budget", Box::new(c2_flops)),
        (3, "gradient correctness", Box::new(c3_gradcheck)),
        (4, "loss identities", Box::new(c4_loss_identities)),
        (5, "metric oracles", Box::new(c5_metric_oracles)),
        (6, "desk-scale learning", Box::new(move || c6_learning(w))),
        (7, "ablation trend", Box::new(move || c7_ablation(w))),
        (8, "determinism", Box::new(move || c8_determinism(w))),
        (9, "speaker disjointness", Box::new(c9_speaker_disjoint)),
        (10, "Grad-CAM contract", Box::new(c10_gradcam)),
    ];
    let mut failed = Vec::new();
    let mut lines = Vec::new();
    for (id, name, check) in &criteria {
        if !filter.is_empty() && !filter.contains(id) {
            continue;
        }
        let t = Instant::now();
        let outcome = check();
        let secs = t.elapsed().as_secs_f64();
        let line = match &outcome {
            Ok(detail) => format!("acceptance {id:>2} PASS {name}: {detail} [{secs:.1} s]"),
            Err(why) => format!("acceptance {id:>2} FAIL {name}: {why} [{secs:.1} s]"),
        };
        println!("{line}");
        lines.push(line);
        if outcome.is_err() {
            failed.push(*id);
        }
    }
    println!("\nacceptance summary");
    for l in &lines {
        println!("{l}");
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
