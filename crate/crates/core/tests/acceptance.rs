//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use softlid_core::checkpoint::Checkpoint;
use softlid_core::config::{default_preset, ExperimentConfig};
use softlid_core::eval::{corpus_bleu, make_traffic, simple_average, weighted_average, EvalReport};
use softlid_core::lin::{identity_lin, reset_to_identity, verify_base_frozen};
use softlid_core::numerics::{grad_check, tensor, GradCheckOptions, Tensor};
use softlid_core::pipeline::{
    evaluate_checkpoint, generate_data, lin_artifact, run_experiment, train_base_checkpoint, train_language_lin,
    ExperimentOutcome,
};
use softlid_core::transducer::model::utterance_loss_graph;
use softlid_core::transducer::{
    enumerate_alignments, transducer_loss, transducer_loss_bruteforce, LossLattice, ModelConfig, TransducerModel,
};
use softlid_core::Error;

const DP_TOLERANCE: f64 = 1e-6;
const DP_MIN_LATTICES: usize = 200;
const DP_TIME_LIMIT: Duration = Duration::from_secs(5);

const GRAD_TOLERANCE: f64 = 1e-4;
const GRAD_SAMPLES: usize = 20;
const GRAD_TIME_LIMIT: Duration = Duration::from_secs(30);

const TABLE_TOLERANCE: f64 = 0.1;
const TABLE_AVG_TOLERANCE: f64 = 0.05;

const SEEDS: [u64; 3] = [1, 2, 3];
const MIN_MEDIAN_GAIN: f64 = 0.5;
const MIN_RETENTION: f64 = 0.85;
const DOMINANT_SHARE: f64 = 0.99;
const PRESET_TIME_LIMIT: Duration = Duration::from_secs(15 * 60);

const BP_EXPECTED: f64 = 77.88;
const BP_TOLERANCE: f64 = 0.01;
const RELABELINGS: usize = 50;

type Verdict = Result<String, String>;

fn check(cond: bool, ok: String, bad: impl FnOnce() -> String) -> Verdict {
    if cond {
        Ok(ok)
    } else {
        Err(bad())
    }
}

fn random_lattice(rng: &mut ChaCha8Rng) -> (LossLattice, usize, usize) {
    let frames = rng.random_range(1..=4usize);
    let labels = rng.random_range(0..=3usize);
    let vocab = rng.random_range(2..=3usize);
    let targets: Vec<u32> = (0..labels).map(|_| rng.random_range(1..=vocab as u32)).collect();
    let rows = frames * (labels + 1);
    let logits = Tensor::from_vec(
        rows,
        vocab + 1,
        (0..rows * (vocab + 1)).map(|_| rng.random_range(-3.0..3.0)).collect(),
    );
    let lattice = LossLattice::from_log_probs(&tensor::log_softmax(&logits), frames, &targets).unwrap();
    (lattice, frames, labels)
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..DP_MIN_LATTICES {
        let (lattice, t, u) = random_lattice(&mut rng);
        let dp = transducer_loss(&lattice);
        let brute = transducer_loss_bruteforce(&lattice).map_err(|e| e.to_string())?;
        worst = worst.max((dp - brute).abs());
        let paths = enumerate_alignments(&lattice).map_err(|e| e.to_string())?.paths;
        if paths != binomial(t - 1 + u, u) {
            return Err(format!("T={t} U={u}: {paths} paths"));
        }
    }
    let count = |t: usize, u: usize| {
        let lat = LossLattice::from_parts(t, u, vec![-1.0; t * (u + 1)], vec![-1.0; t * u]).unwrap();
        enumerate_alignments(&lat).unwrap().paths
    };
    let (p21, p32) = (count(2, 1), count(3, 2));
    let elapsed = start.elapsed();
    check(
        worst <= DP_TOLERANCE && p21 == 2 && p32 == 6 && elapsed < DP_TIME_LIMIT,
        format!("{DP_MIN_LATTICES} lattices, max |DP - brute| = {worst:.2e}, paths(2,1)={p21} paths(3,2)={p32}, {elapsed:.2?}"),
        || format!("max diff {worst:.2e} (<= {DP_TOLERANCE:e}), paths {p21}/{p32}, {elapsed:.2?}"),
    )
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let cfg = ModelConfig {
        feature_dim: 8,
        hidden_dim: 16,
        vocab: 5,
        embed_dim: 8,
        chunk: 2,
        max_symbols_per_frame: 3,
    };
    let mut model = TransducerModel::init(cfg, 17).map_err(|e| e.to_string())?;
    // Non-zero biases so every parameter tensor has a generic gradient.
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let names: Vec<String> = model.params().names().map(str::to_string).collect();
    for name in &names {
        let v = model.params_mut().value_mut(name).map_err(|e| e.to_string())?;
        for x in v.data_mut() {
            *x += rng.random_range(-0.3..0.3);
        }
    }
    let frames = Tensor::from_vec(4, 8, (0..32).map(|_| rng.random_range(-1.0..1.0)).collect());
    let tokens = [2u32, 4];
    let opts = GradCheckOptions {
        eps: 1e-6,
        samples_per_tensor: GRAD_SAMPLES,
        seed: 5,
    };
    let err = grad_check(model.params(), opts, |g, params| {
        let x = g.constant(frames.clone());
        utterance_loss_graph(g, params, &cfg, x, &tokens)
    })
    .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(
        err <= GRAD_TOLERANCE && elapsed < GRAD_TIME_LIMIT,
        format!(
            "D=8 H=16 T=4 U=2, {} tensors x {GRAD_SAMPLES} coords, max rel err {err:.2e}, {elapsed:.2?}",
            names.len()
        ),
        || format!("max rel err {err:.2e} (<= {GRAD_TOLERANCE:e}), {elapsed:.2?}"),
    )
}

fn criterion_3(cfg: &ExperimentConfig, run: &ExperimentOutcome) -> Verdict {
    let test = &run.data.test;
    let base = &run.base_report;
    let e = |e: Error| e.to_string();
    let ident = identity_lin(cfg.suite.dim).map_err(e)?;
    let with_identity = evaluate_checkpoint(&run.base, Some(&ident), test, &cfg.traffic).map_err(e)?;
    let mut mismatches = Vec::new();
    for l in &run.lins {
        let reset = reset_to_identity(&l.lin);
        let rep = evaluate_checkpoint(&run.base, Some(&reset), test, &cfg.traffic).map_err(e)?;
        if &rep != base || rep.to_json().map_err(e)? != base.to_json().map_err(e)? {
            mismatches.push(format!("reset LIN-{}", l.language));
        }
    }
    if &with_identity != base || with_identity.to_json().map_err(e)? != base.to_json().map_err(e)? {
        mismatches.push("identity LIN".into());
    }
    check(
        mismatches.is_empty(),
        format!(
            "identity and {} reset LIN reports field-identical to base",
            run.lins.len()
        ),
        || format!("differs from base: {}", mismatches.join(", ")),
    )
}

fn criterion_4(cfg: &ExperimentConfig, run: &ExperimentOutcome) -> Verdict {
    let e = |e: Error| e.to_string();
    let before = run.base.param_hash().map_err(e)?;
    let snapshot = run.base.clone();
    let language = &cfg.lin.designated[0];
    let (lin, log) = train_language_lin(cfg, &run.base, &run.data.train, language).map_err(e)?;
    let after = run.base.param_hash().map_err(e)?;
    let lin_ck = lin_artifact(cfg, &run.base, &lin, &log).map_err(e)?;
    let frozen = verify_base_frozen(&snapshot, &run.base);
    let linked = lin_ck.meta.base_hash.as_deref() == Some(before.as_str());
    check(
        before == after && frozen && linked,
        format!("base SHA-256 {}… unchanged by LIN-{language} training", &before[..16]),
        || format!("before {before} after {after}, frozen={frozen}, linked={linked}"),
    )
}

fn reference_column(values: [f64; 12]) -> BTreeMap<String, f64> {
    ["DE", "ES", "ET", "FR", "IT", "JA", "NL", "PT", "RU", "SL", "SV", "ZH"]
        .into_iter()
        .map(str::to_string)
        .zip(values)
        .collect()
}

fn criterion_5() -> Verdict {
    let baseline = reference_column([34.8, 35.4, 19.4, 34.0, 34.2, 23.2, 40.2, 46.0, 40.9, 23.5, 38.5, 18.2]);
    let lin_ja = reference_column([32.1, 33.7, 18.1, 32.1, 32.5, 24.0, 38.3, 43.7, 38.9, 19.3, 36.1, 16.7]);
    let languages: Vec<String> = baseline.keys().cloned().collect();
    let e = |e: Error| e.to_string();
    let traffic = make_traffic("JA", DOMINANT_SHARE, &languages).map_err(e)?;
    let w_lin = weighted_average(&lin_ja, &traffic).map_err(e)?;
    let w_base = weighted_average(&baseline, &traffic).map_err(e)?;
    let avg = simple_average(&baseline).map_err(e)?;
    check(
        (w_lin - 24.1).abs() <= TABLE_TOLERANCE
            && (w_base - 23.3).abs() <= TABLE_TOLERANCE
            && (avg - 32.4).abs() <= TABLE_AVG_TOLERANCE,
        format!("weighted LIN-JA {w_lin:.3} (24.1), weighted base {w_base:.3} (23.3), base avg {avg:.3} (32.4)"),
        || format!("weighted LIN-JA {w_lin}, weighted base {w_base}, avg {avg}"),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn weighted_value(r: &EvalReport, name: &str) -> Option<f64> {
    r.weighted.iter().find(|w| w.name == name).map(|w| w.value)
}

fn criterion_6(runs: &[(u64, ExperimentOutcome)], elapsed: Duration) -> Verdict {
    let mut parts = Vec::new();
    let mut failures = Vec::new();
    let designated: Vec<String> = runs[0].1.lins.iter().map(|l| l.language.clone()).collect();
    if designated.len() < 2 {
        failures.push(format!("only {} designated languages", designated.len()));
    }
    for lang in &designated {
        let mut gains = Vec::new();
        let mut worst_retention = f64::INFINITY;
        for (seed, run) in runs {
            let base = &run.base_report;
            let Some(lin) = run.lins.iter().find(|l| &l.language == lang) else {
                failures.push(format!("seed {seed}: no LIN-{lang}"));
                continue;
            };
            gains.push(lin.report.per_language[lang] - base.per_language[lang]);
            for (other, &b) in &base.per_language {
                if other == lang {
                    continue;
                }
                let kept = lin.report.per_language[other] / b;
                worst_retention = worst_retention.min(kept);
                if kept < MIN_RETENTION {
                    failures.push(format!("seed {seed} LIN-{lang}: {other} keeps {:.1}%", 100.0 * kept));
                }
            }
            let scenario = format!("p{}-{lang}", (DOMINANT_SHARE * 100.0).round());
            match (weighted_value(base, &scenario), weighted_value(&lin.report, &scenario)) {
                (Some(wb), Some(wl)) if wl > wb => {}
                (Some(wb), Some(wl)) => failures.push(format!("seed {seed} {scenario}: {wl:.2} <= base {wb:.2}")),
                _ => failures.push(format!("seed {seed}: scenario {scenario} missing from reports")),
            }
        }
        let m = median(gains.clone());
        if m < MIN_MEDIAN_GAIN {
            failures.push(format!("LIN-{lang} median gain {m:+.2}"));
        }
        parts.push(format!(
            "{lang}: median gain {m:+.2} (per seed {}), min retention {:.1}%",
            gains.iter().map(|g| format!("{g:+.2}")).collect::<Vec<_>>().join("/"),
            100.0 * worst_retention
        ));
    }
    if elapsed > PRESET_TIME_LIMIT {
        failures.push(format!("took {elapsed:.1?}"));
    }
    check(
        failures.is_empty(),
        format!(
            "seeds {SEEDS:?}; {}; p99 weighted up on every seed; {elapsed:.1?}",
            parts.join("; ")
        ),
        || failures.join("; "),
    )
}

fn criterion_7() -> Verdict {
    let e = |e: Error| e.to_string();
    let mut notes = Vec::new();
    let refs = vec![vec![1u32, 2, 3, 4, 5], vec![3, 3, 1], vec![4, 2, 2, 5, 1, 3]];
    let exact = corpus_bleu(&refs, &refs).map_err(e)?;
    if exact != 100.0 {
        notes.push(format!("exact match {exact}"));
    }
    let bp = corpus_bleu(&[vec![1u32, 2, 3, 4]], &[vec![1u32, 2, 3, 4, 5]]).map_err(e)?;
    if (bp - BP_EXPECTED).abs() > BP_TOLERANCE {
        notes.push(format!("BP example {bp}"));
    }
    let smoothed = corpus_bleu(&[vec![1u32, 2, 3, 9, 1, 2]], &[vec![1u32, 2, 3, 4, 5, 6]]).map_err(e)?;
    if !(smoothed.is_finite() && smoothed > 0.0) {
        notes.push(format!("zero 4-gram overlap gave {smoothed}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let vocab = 12u32;
    let mut worst: f64 = 0.0;
    for _ in 0..RELABELINGS {
        let n = rng.random_range(1..=8);
        let gen = |rng: &mut ChaCha8Rng| -> Vec<u32> {
            (0..rng.random_range(1..=9))
                .map(|_| rng.random_range(1..=vocab))
                .collect()
        };
        let hyps: Vec<Vec<u32>> = (0..n).map(|_| gen(&mut rng)).collect();
        let refs: Vec<Vec<u32>> = hyps
            .iter()
            .map(|h| {
                let mut r = h.clone();
                if rng.random_bool(0.7) {
                    let i = rng.random_range(0..r.len());
                    r[i] = rng.random_range(1..=vocab);
                }
                if rng.random_bool(0.3) {
                    r.push(rng.random_range(1..=vocab));
                }
                r
            })
            .collect();
        let mut perm: Vec<u32> = (1..=vocab).collect();
        perm.shuffle(&mut rng);
        let relabel = |s: &Vec<u32>| s.iter().map(|&t| perm[t as usize - 1]).collect::<Vec<_>>();
        let a = corpus_bleu(&hyps, &refs).map_err(e)?;
        let b = corpus_bleu(
            &hyps.iter().map(relabel).collect::<Vec<_>>(),
            &refs.iter().map(relabel).collect::<Vec<_>>(),
        )
        .map_err(e)?;
        worst = worst.max((a - b).abs());
    }
    if worst != 0.0 {
        notes.push(format!("relabeling changed BLEU by {worst:e}"));
    }
    check(
        notes.is_empty(),
        format!("exact=100, BP example {bp:.4}, smoothed {smoothed:.2}, {RELABELINGS} relabelings invariant"),
        || notes.join("; "),
    )
}

fn criterion_8(cfg: &ExperimentConfig, run: &ExperimentOutcome) -> Verdict {
    let e = |e: Error| e.to_string();
    let mut diffs = Vec::new();

    let dir = tempfile::tempdir().map_err(|x| x.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    generate_data(cfg, Some(&a)).map_err(e)?;
    generate_data(cfg, Some(&b)).map_err(e)?;
    for f in ["train.sldt", "test.sldt", "suite.json"] {
        if std::fs::read(a.join(f)).ok() != std::fs::read(b.join(f)).ok() {
            diffs.push(f.to_string());
        }
    }

    let data = generate_data(cfg, None).map_err(e)?;
    let (base2, _) = train_base_checkpoint(cfg, &data.train).map_err(e)?;
    let base_bytes = run.base.to_bytes().map_err(e)?;
    if base2.to_bytes().map_err(e)? != base_bytes {
        diffs.push("base checkpoint".into());
    }
    let lang = &run.lins[0].language;
    let (lin2, log2) = train_language_lin(cfg, &base2, &data.train, lang).map_err(e)?;
    let first = &run.lins[0];
    let art1 = lin_artifact(cfg, &run.base, &first.lin, &first.log).map_err(e)?;
    let art2 = lin_artifact(cfg, &base2, &lin2, &log2).map_err(e)?;
    if art1.to_bytes().map_err(e)? != art2.to_bytes().map_err(e)? {
        diffs.push(format!("LIN-{lang} artifact"));
    }
    let rep2 = evaluate_checkpoint(&base2, Some(&lin2), &data.test, &cfg.traffic).map_err(e)?;
    if rep2.to_json().map_err(e)? != first.report.to_json().map_err(e)? {
        diffs.push("report".into());
    }

    let path = dir.path().join("base.ckpt");
    run.base.save(&path).map_err(e)?;
    let loaded = Checkpoint::load(&path).map_err(e)?;
    if loaded.to_bytes().map_err(e)? != base_bytes || loaded != run.base {
        diffs.push("checkpoint roundtrip".into());
    }
    let mut corrupt = base_bytes.clone();
    let i = corrupt.len() - 33;
    corrupt[i] ^= 0x10;
    let rejected = matches!(Checkpoint::from_bytes(&corrupt), Err(Error::HashMismatch { .. }));
    if !rejected {
        diffs.push("corrupted checkpoint accepted".into());
    }
    check(
        diffs.is_empty(),
        "datasets, checkpoint, LIN artifact and report byte-identical on rerun; roundtrip exact; corruption rejected"
            .into(),
        || format!("not reproducible: {}", diffs.join(", ")),
    )
}

fn report(n: usize, title: &str, verdict: &Verdict) -> bool {
    match verdict {
        Ok(detail) => println!("PASS [{n}] {title}: {detail}"),
        Err(detail) => println!("FAIL [{n}] {title}: {detail}"),
    }
    verdict.is_ok()
}

fn main() {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build_global()
        .expect("single-threaded pool");
    let preset = default_preset();

    let c1 = criterion_1();
    let c2 = criterion_2();
    let c5 = criterion_5();
    let c7 = criterion_7();

    let start = Instant::now();
    let runs: Result<Vec<(u64, ExperimentOutcome)>, String> = SEEDS
        .iter()
        .map(|&s| {
            run_experiment(&preset.with_seed(s))
                .map(|r| (s, r))
                .map_err(|e| e.to_string())
        })
        .collect();
    let elapsed = start.elapsed();

    let (c3, c4, c6, c8) = match &runs {
        Ok(runs) => {
            let cfg = preset.with_seed(runs[0].0);
            let first = &runs[0].1;
            (
                criterion_3(&cfg, first),
                criterion_4(&cfg, first),
                criterion_6(runs, elapsed),
                criterion_8(&cfg, first),
            )
        }
        Err(msg) => {
            let fail = || Err(format!("default preset run failed: {msg}"));
            (fail(), fail(), fail(), fail())
        }
    };

    let results = [
        report(1, "transducer loss DP matches brute force", &c1),
        report(2, "full-model gradients match finite differences", &c2),
        report(3, "identity and reset LIN leave evaluation unchanged", &c3),
        report(4, "LIN training leaves base parameters untouched", &c4),
        report(5, "traffic-weighted average arithmetic", &c5),
        report(6, "LIN boosts its language and keeps the others", &c6),
        report(7, "BLEU unit suite", &c7),
        report(8, "determinism and persistence", &c8),
    ];
    let passed = results.iter().filter(|&&r| r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
