//! Acceptance suite: one test per headline criterion. Each test prints the
//! measured quantity next to its bound before asserting.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use procnutri::embedding::{decode_embeddings, encode_embeddings, EmbeddingSequence};
use procnutri::harness::{
    make_folds, run_experiment, zscore_fit, ExperimentConfig, ExperimentResults, RunOptions,
};
use procnutri::manifest::{parse_manifest, write_manifest, NutritionVector};
use procnutri::nn::{
    attention_pool, decode_checkpoint, encode_checkpoint, smooth_l1, AttentionPool, FusionModel, PoolMode, Variant,
};
use procnutri::rng;
use procnutri::sampling::{
    eval_event_f1, sample_pred_all, sample_pred_topk, sample_uniform, Strategy, StrategyKind,
};
use procnutri::synthetic::{gen_benchmark, gen_score_stream, SyntheticSpec};
use rand::seq::SliceRandom;
use rand::Rng;

fn report(name: &str, pass: bool, detail: String) {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}

#[test]
fn criterion_1_gradient_correctness() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for variant in VARIANTS {
        for mode in POOL_MODES {
            for n in [1, 5] {
                for seed in 0..3u64 {
                    let model = FusionModel::init(variant, small_config(16, mode), seed);
                    let mut r = rng::seeded(500 + seed);
                    let z_d = random_vec(&mut r, 16);
                    let bag = random_bag(&mut r, n, 16);
                    let target = [1.7, -0.4, 0.2, -2.5];
                    for dropout in [None, Some(9 + seed)] {
                        let res = gradient_check(&model, &z_d, Some(&bag), &target, dropout, 1e-4, None);
                        assert_eq!(res.checked, model.params().num_params());
                        worst = worst.max(res.worst_rel);
                        checked += res.checked;
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-4 && elapsed < Duration::from_secs(30);
    report(
        "gradient correctness",
        pass,
        format!("{checked} parameters, worst relative error {worst:.2e} (<= 1e-4), {elapsed:.2?} (< 30 s)"),
    );
    assert!(pass);
}

#[test]
fn criterion_2_pooling_invariants() {
    let start = Instant::now();
    let mut r = rng::seeded(2002);
    let mut worst = [0.0f64; 4];
    for case in 0..200u64 {
        let dim = r.random_range(2..=16);
        let n = r.random_range(1..=10);
        let mut init = rng::seeded(case);
        let pool = AttentionPool::init(dim, r.random_range(1..=8), &mut init);
        let bag = random_bag(&mut r, n, dim);

        let (_, alphas) = attention_pool(&bag, &pool, PoolMode::Weighted).unwrap();
        worst[0] = worst[0].max((alphas.iter().sum::<f64>() - 1.0).abs());

        // adding a constant to every score leaves the weights unchanged
        let mut shifted = pool.clone();
        shifted.layer2.bias[0] += r.random_range(-50.0..50.0);
        let (_, a2) = attention_pool(&bag, &shifted, PoolMode::Weighted).unwrap();
        for (a, b) in alphas.iter().zip(&a2) {
            worst[1] = worst[1].max((a - b).abs());
        }

        let mut flat = pool.clone();
        flat.layer2.weight.iter_mut().for_each(|w| *w = 0.0);
        let (zw, _) = attention_pool(&bag, &flat, PoolMode::Weighted).unwrap();
        let (zm, _) = attention_pool(&bag, &flat, PoolMode::Mean).unwrap();
        for (a, b) in zw.iter().zip(&zm) {
            worst[2] = worst[2].max((a - b).abs());
        }

        let variant = [Variant::Concat, Variant::Gated][case as usize % 2];
        let mode = POOL_MODES[(case as usize / 2) % 2];
        let model = FusionModel::init(variant, small_config(dim, mode), case);
        let z_d = random_vec(&mut r, dim);
        let y = model.predict(&z_d, Some(&bag)).unwrap();
        let mut perm = bag.clone();
        perm.shuffle(&mut r);
        let yp = model.predict(&z_d, Some(&perm)).unwrap();
        for (a, b) in y.iter().zip(&yp) {
            worst[3] = worst[3].max((a - b).abs() / a.abs().max(1.0));
        }
    }
    let elapsed = start.elapsed();
    let pass = worst[0] <= 1e-6
        && worst[1] <= 1e-9
        && worst[2] <= 1e-12
        && worst[3] <= 1e-12
        && elapsed < Duration::from_secs(10);
    report(
        "pooling invariants",
        pass,
        format!(
            "200 cases: |sum a - 1| {:.1e}, shift {:.1e}, weighted-vs-mean {:.1e}, permutation {:.1e}, {elapsed:.2?}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_3_closed_forms() {
    let gate = FusionModel::init(Variant::Gated, small_config(4, PoolMode::Weighted), 0)
        .gate_mix()
        .unwrap();
    let (l_small, _) = smooth_l1(&[0.5], &[0.0], 1.0);
    let (l_large, _) = smooth_l1(&[3.0], &[0.0], 1.0);
    let stats = zscore_fit(&[1.0, 2.0, 3.0].map(|k| NutritionVector::new(k, 0.0, 0.0, 0.0))).unwrap();
    let uni = sample_uniform(10.0, 5);
    let pass = (gate - 0.622459).abs() <= 1e-6
        && (l_small - 0.125).abs() < 1e-15
        && (l_large - 2.5).abs() < 1e-15
        && (stats.std[0] - 0.8165).abs() <= 1e-4
        && uni == vec![1.0, 3.0, 5.0, 7.0, 9.0];
    report(
        "closed forms",
        pass,
        format!(
            "gate mix {gate:.7}, smooth-L1 {l_small} / {l_large}, std {:.5}, uniform-5 {uni:?}",
            stats.std[0]
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_fold_protocol() {
    let spec = SyntheticSpec {
        n_recipes: Some(48),
        ..SyntheticSpec::new(42, 52)
    };
    let manifest = gen_benchmark(&spec).unwrap().manifest;
    let folds = make_folds(&manifest, 5, 42).unwrap();
    let sizes = folds.sizes();
    let sizes_ok = sizes.iter().all(|s| (9..=12).contains(s));
    let train_ok = sizes.iter().all(|s| (40..=43).contains(&(52 - s)));
    let colocated = manifest.iter().all(|a| {
        manifest
            .iter()
            .filter(|b| b.recipe_id == a.recipe_id)
            .all(|b| folds.fold(&b.instance_id) == folds.fold(&a.instance_id))
    });
    let first = serde_json::to_vec(&folds).unwrap();
    let second = serde_json::to_vec(&make_folds(&manifest, 5, 42).unwrap()).unwrap();
    let pass = sizes_ok && train_ok && colocated && first == second;
    report(
        "fold protocol",
        pass,
        format!(
            "test sizes {sizes:?}, train sizes {:?}, co-located {colocated}, byte-identical rerun {}",
            sizes.iter().map(|s| 52 - s).collect::<Vec<_>>(),
            first == second
        ),
    );
    assert!(pass);
}

fn hypothesis_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        dim: 64,
        hidden_fraction: 0.6,
        noise_sigma: 0.1,
        ..SyntheticSpec::new(seed, 60)
    }
}

#[test]
fn criterion_5_hypothesis_analog() {
    let start = Instant::now();
    let (manifest, store) = synthetic_store(&hypothesis_spec(7));
    let grid = vec![
        ExperimentConfig::new(SYN_TAG, Variant::DishOnly, Strategy::new(StrategyKind::DishOnly)),
        ExperimentConfig::new(SYN_TAG, Variant::Gated, Strategy::new(StrategyKind::Gt)),
    ];
    assert_eq!((grid[1].epochs, grid[1].lr, grid[1].pool_mode), (50, 1e-3, PoolMode::Weighted));
    let res = run_experiment(&grid, &manifest, &store, &RunOptions::default()).unwrap();
    let dish = res.configs[0].mean_mae[0];
    let gt = res.configs[1].mean_mae[0];
    let reduction = 1.0 - gt / dish;
    let elapsed = start.elapsed();
    let pass = reduction >= 0.15 && elapsed < Duration::from_secs(300);
    report(
        "hypothesis analog",
        pass,
        format!(
            "calorie MAE dish-only {dish:.1}, GT-process {gt:.1}, reduction {:.1}% (>= 15%), {elapsed:.2?}",
            100.0 * reduction
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_sampling_ordering() {
    let start = Instant::now();
    let mut totals = [0.0f64; 3];
    for seed in 0..5u64 {
        let spec = SyntheticSpec {
            score_noise: 0.3,
            ..hypothesis_spec(seed)
        };
        let (manifest, store) = synthetic_store(&spec);
        let grid: Vec<ExperimentConfig> = [StrategyKind::PredK, StrategyKind::RandK, StrategyKind::UniK]
            .into_iter()
            .map(|kind| {
                let mut s = Strategy::with_k(kind, 20);
                if kind == StrategyKind::RandK {
                    s.seed = Some(seed);
                }
                ExperimentConfig::new(SYN_TAG, Variant::Gated, s)
            })
            .collect();
        let res = run_experiment(&grid, &manifest, &store, &RunOptions::default()).unwrap();
        for (t, c) in totals.iter_mut().zip(&res.configs) {
            *t += c.mean_mae[0] / 5.0;
        }
    }
    let [pred, rand, uni] = totals;
    let elapsed = start.elapsed();
    let pass = pred < rand && pred < uni && elapsed < Duration::from_secs(900);
    report(
        "sampling ordering",
        pass,
        format!("mean calorie MAE over 5 seeds: Pred-20 {pred:.1}, Rand-20 {rand:.1}, Uni-20 {uni:.1}, {elapsed:.2?}"),
    );
    assert!(pass);
}

#[test]
fn criterion_7_selection_correctness() {
    let mut r = rng::seeded(7007);
    let mut mismatches = 0;
    for i in 0..1000 {
        let s = random_stream(&mut r, &format!("v{i}"));
        let duration = s.entries.len() as f64 + 1.0 + r.random_range(0.0..2.0);
        let k = r.random_range(1..=s.entries.len() + 3);
        let thr = r.random_range(0..=20) as f64 / 20.0;
        if sample_pred_topk(&s, k, duration).unwrap() != brute_topk(&s, k, duration) {
            mismatches += 1;
        }
        if sample_pred_all(&s, thr, duration) != brute_threshold(&s, thr, duration) {
            mismatches += 1;
        }
    }
    let b = gen_benchmark(&SyntheticSpec::new(11, 40)).unwrap();
    let mut min_f1 = 1.0f64;
    for inst in &b.manifest {
        let ev: Vec<f64> = inst.add_events().collect();
        let s = gen_score_stream(&inst.video_id, &ev, inst.duration_s, 0.0, 11);
        let top = sample_pred_topk(&s, ev.len(), inst.duration_s).unwrap();
        min_f1 = min_f1.min(eval_event_f1(&top, &ev, 1.5).f1);
    }
    let pass = mismatches == 0 && min_f1 == 1.0;
    report(
        "selection correctness",
        pass,
        format!("{mismatches} oracle mismatches over 1000 streams, min noise-free F1 {min_f1} over 40 videos"),
    );
    assert!(pass);
}

#[test]
fn criterion_8_round_trips() {
    let mut r = rng::seeded(88);
    let data: Vec<f32> = (0..600 * 64).map(|_| r.random_range(-3.0f32..3.0)).collect();
    let seq = EmbeddingSequence::new("roundtrip", 64, 1.0, data).unwrap();
    let mut buf = Vec::new();
    encode_embeddings(&seq, &mut buf).unwrap();
    let back = decode_embeddings(buf.as_slice()).unwrap();
    let vnem_ok = back.data().iter().zip(seq.data()).all(|(a, b)| a.to_bits() == b.to_bits())
        && back.video_id() == seq.video_id()
        && back.num_frames() == 600;

    let bench = gen_benchmark(&SyntheticSpec::new(5, 30)).unwrap();
    let mut text = Vec::new();
    write_manifest(&bench.manifest, &mut text).unwrap();
    let manifest_ok = parse_manifest(text.as_slice()).unwrap() == bench.manifest;

    let mut ckpt_ok = true;
    for variant in VARIANTS {
        for mode in POOL_MODES {
            let model = FusionModel::init(variant, small_config(16, mode), 3);
            let mut bytes = Vec::new();
            encode_checkpoint(&model, &mut bytes).unwrap();
            let loaded = decode_checkpoint(bytes.as_slice()).unwrap();
            for _ in 0..5 {
                let z = random_vec(&mut r, 16);
                let bag = random_bag(&mut r, 4, 16);
                let a = model.predict(&z, Some(&bag)).unwrap();
                let b = loaded.predict(&z, Some(&bag)).unwrap();
                ckpt_ok &= a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits());
            }
        }
    }

    // trained checkpoints written by the harness reproduce its held-out predictions
    let spec = SyntheticSpec {
        dim: 16,
        vocab_size: 8,
        ..SyntheticSpec::new(6, 24)
    };
    let (manifest, store) = synthetic_store(&spec);
    let mut cfg = ExperimentConfig::new(SYN_TAG, Variant::Gated, Strategy::new(StrategyKind::Gt));
    cfg.epochs = 5;
    cfg.hidden = 32;
    cfg.attn_hidden = 8;
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        jobs: 1,
        checkpoint_dir: Some(dir.path().to_path_buf()),
    };
    let res = run_experiment(std::slice::from_ref(&cfg), &manifest, &store, &opts).unwrap();
    let mut trained_ok = true;
    for fold in &res.configs[0].folds {
        let stem = dir.path().join(format!("config000_fold{}", fold.fold));
        let model = procnutri::nn::load_checkpoint(stem.with_extension("vnck")).unwrap();
        let norm: procnutri::harness::NormStats =
            serde_json::from_str(&std::fs::read_to_string(stem.with_extension("norm.json")).unwrap()).unwrap();
        trained_ok &= Some(norm) == fold.norm;
        let plans = procnutri::harness::make_plans(&cfg, &manifest, &store).unwrap();
        let (examples, _) = procnutri::harness::prepare_examples(&cfg, &manifest, &plans, &store).unwrap();
        for row in &fold.predictions {
            let ex = examples.iter().find(|e| e.instance_id == row.instance_id).unwrap();
            let y = procnutri::harness::predict_examples(&model, &norm, &[ex]).unwrap()[0];
            trained_ok &= y
                .to_array()
                .iter()
                .zip(row.pred.to_array())
                .all(|(a, b)| a.to_bits() == b.to_bits());
        }
    }

    let pass = vnem_ok && manifest_ok && ckpt_ok && trained_ok;
    report(
        "round-trips",
        pass,
        format!("VNEM bit-exact {vnem_ok}, manifest identity {manifest_ok}, checkpoint outputs bitwise {ckpt_ok}, trained folds {trained_ok}"),
    );
    assert!(pass);
}

fn cli(out: &Path, args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_procnutri"))
        .arg("--out-dir")
        .arg(out)
        .args(["--log-level", "error"])
        .args(args)
        .status()
        .unwrap();
    assert!(status.success(), "procnutri {args:?} failed: {status}");
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn pipeline(work: &Path, out: &Path, jobs: &str) {
    let out_s = out.to_str().unwrap();
    let p = |name: &str| format!("{out_s}/{name}");
    cli(out, &["synth", "--spec", work.join("spec.json").to_str().unwrap()]);
    cli(
        out,
        &["sample", "--manifest", &p("manifest.jsonl"), "--strategy", "pred-k", "--k", "5", "--streams", &p("streams")],
    );
    cli(
        out,
        &[
            "train",
            "--grid",
            work.join("grid.json").to_str().unwrap(),
            "--manifest",
            &p("manifest.jsonl"),
            "--embeddings",
            &p("embeddings"),
            "--streams",
            &p("streams"),
            "--jobs",
            jobs,
        ],
    );
    cli(out, &["evaluate", "--run", out_s]);
}

#[test]
fn criterion_9_cli_determinism() {
    let work = tempfile::tempdir().unwrap();
    std::fs::write(
        work.path().join("spec.json"),
        r#"{"seed": 3, "n_instances": 24, "dim": 16, "vocab_size": 8, "score_noise": 0.2}"#,
    )
    .unwrap();
    let common = r#""epochs": 8, "hidden": 32, "attn_hidden": 8"#;
    std::fs::write(
        work.path().join("grid.json"),
        format!(
            r#"[
  {{"backbone_tag": "synthetic", "variant": "dish-only", "strategy": {{"kind": "dish-only"}}, {common}}},
  {{"backbone_tag": "synthetic", "strategy": {{"kind": "gt"}}, {common}}},
  {{"backbone_tag": "synthetic", "strategy": {{"kind": "pred-k", "k": 5}}, {common}}},
  {{"backbone_tag": "synthetic", "strategy": {{"kind": "rand-k", "k": 5, "seed": 1}}, "pool_mode": "mean", {common}}}
]"#
        ),
    )
    .unwrap();
    let a = work.path().join("a");
    pipeline(work.path(), &a, "1");
    let first = snapshot(&a);
    pipeline(work.path(), &a, "1");
    let second = snapshot(&a);
    let b = work.path().join("b");
    pipeline(work.path(), &b, "4");
    let parallel = snapshot(&b);

    let repeat_ok = first == second;
    let results: Vec<&String> = first.keys().filter(|k| !k.ends_with(".config.json")).collect();
    let jobs_ok = results.iter().all(|k| parallel.get(*k) == first.get(*k))
        && parallel.keys().filter(|k| !k.ends_with(".config.json")).count() == results.len();
    let has_results = first.contains_key("results.jsonl") && first.contains_key("predictions.tsv");

    // the CLI's numbers equal a direct in-process run on the same files
    let manifest = procnutri::manifest::load_manifest(a.join("manifest.jsonl")).unwrap();
    let store =
        procnutri::harness::DataStore::load(&a.join("embeddings"), Some(&a.join("streams")), &[SYN_TAG], &manifest)
            .unwrap();
    let grid: Vec<ExperimentConfig> =
        serde_json::from_str(&std::fs::read_to_string(work.path().join("grid.json")).unwrap()).unwrap();
    let direct: ExperimentResults = run_experiment(&grid, &manifest, &store, &RunOptions::default()).unwrap();
    let in_process_ok = direct.to_jsonl().as_bytes() == first["results.jsonl"].as_slice();

    let pass = repeat_ok && jobs_ok && has_results && in_process_ok;
    report(
        "CLI determinism",
        pass,
        format!(
            "{} files byte-identical on rerun {repeat_ok}, --jobs 1 vs 4 identical {jobs_ok}, matches in-process run {in_process_ok}",
            first.len()
        ),
    );
    assert!(pass);
}
