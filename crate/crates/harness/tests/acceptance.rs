//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! Measured failures are reported but do not fail the target unless
//! `GRADGUARD_ACCEPTANCE_STRICT=1`; errors (a criterion that could not be
//! measured) always do. `GRADGUARD_ACCEPTANCE_ONLY=2,5` runs a subset.
//! `GRADGUARD_20NG_DIR` points at a 20 Newsgroups tree to add the text
//! accuracy check to criterion 10.

use std::path::{Path, PathBuf};
use std::time::Instant;

use gradguard::datasets::{
    gen_2d_toy, gen_toy_color, load_iris_cancer, pixel_columns, split, Toy2dKind, TOY_COLORS, TOY_CORNERS,
    TOY_TOP_MIDDLE,
};
use gradguard::explain::{explain, gradient_mass_share, mask_top, ExplanationSet, Target};
use gradguard::fae::{run_fae, FaeConfig};
use gradguard::model::Params;
use gradguard::training::{explanation_loss, loss_and_gradients, TrainConfig};
use gradguard::Tensor;
use gradguard_harness::checkpoint::Checkpoint;
use gradguard_harness::config::Settings;
use gradguard_harness::drivers;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

struct Run {
    root: tempfile::TempDir,
    only: Option<Vec<u32>>,
    passed: usize,
    failed: Vec<u32>,
    errors: Vec<u32>,
}

impl Run {
    fn criterion(&mut self, id: u32, title: &str, f: impl FnOnce(&Path) -> Outcome) {
        if self.only.as_ref().is_some_and(|o| !o.contains(&id)) {
            return;
        }
        let dir = self.root.path().join(format!("c{id}"));
        std::fs::create_dir_all(&dir).unwrap();
        let t = Instant::now();
        let result = f(&dir);
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok((true, detail)) => {
                self.passed += 1;
                println!("PASS  C{id:<2} {title}: {detail} [{secs:.1} s]");
            }
            Ok((false, detail)) => {
                self.failed.push(id);
                println!("FAIL  C{id:<2} {title}: {detail} [{secs:.1} s]");
            }
            Err(e) => {
                self.errors.push(id);
                println!("FAIL  C{id:<2} {title}: error: {e} [{secs:.1} s]");
            }
        }
    }
}

fn note(text: &str) {
    println!("      note: {text}");
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn settings(command: &str, out: &Path, flags: &[(&str, String)]) -> Settings {
    let mut all: Vec<(String, String)> = vec![
        ("out".into(), out.display().to_string()),
        ("data.mnist_dir".into(), data_dir().join("mnist").display().to_string()),
        ("data.iris".into(), data_dir().join("uci/iris.data").display().to_string()),
        ("data.wdbc".into(), data_dir().join("uci/wdbc.data").display().to_string()),
    ];
    all.extend(flags.iter().map(|(k, v)| (k.to_string(), v.clone())));
    Settings::load(command, None, &all).expect("acceptance settings are valid")
}

fn f(k: &str, v: impl ToString) -> (&str, String) {
    (k, v.to_string())
}

fn cells(c: &[(usize, usize)]) -> Vec<usize> {
    c.iter().flat_map(|&(r, col)| pixel_columns(r, col)).collect()
}

fn corners() -> Vec<usize> {
    cells(&TOY_CORNERS)
}

fn top_middle() -> Vec<usize> {
    cells(&TOY_TOP_MIDDLE)
}

fn c1_gradient_of_gradient(_: &Path) -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = Params::init(4, 3, 2)?;
    let x = Tensor::matrix(10, 4, (0..40).map(|_| rng.random_range(-2.0..2.0)).collect())?;
    let labels: Vec<usize> = (0..10).map(|i| i % 3).collect();
    let y = gradguard::datasets::one_hot(&labels, 3);
    let a = Tensor::matrix(10, 4, (0..40).map(|_| f64::from(rng.random_bool(0.5))).collect())?;
    let (l1, l2) = (10.0, 1e-2);
    let (_, analytic, _) = loss_and_gradients(&params, &x, &y, &a, l1, l2)?;
    let base: Vec<Tensor> = params.tensors().cloned().collect();
    let h = 1e-5;
    let mut numeric = Vec::new();
    for (i, t) in base.iter().enumerate() {
        let mut g = Vec::with_capacity(t.len());
        for j in 0..t.len() {
            let at = |delta: f64| -> gradguard::Result<f64> {
                let mut ts = base.clone();
                let mut d = ts[i].data().to_vec();
                d[j] += delta;
                ts[i] = Tensor::new(ts[i].shape().to_vec(), d)?;
                Ok(explanation_loss(&Params::from_tensors(ts)?, &x, &y, &a, l1, l2)?.2.total)
            };
            g.push((at(h)? - at(-h)?) / (2.0 * h));
        }
        numeric.push(Tensor::new(t.shape().to_vec(), g)?);
    }
    let err = gradguard::autodiff::max_relative_error(&analytic, &numeric);
    let secs = t.elapsed().as_secs_f64();
    let count: usize = base.iter().map(|t| t.len()).sum();
    Ok((
        err <= 1e-4 && secs < 5.0,
        format!("max relative error {err:.2e} over {count} parameters (≤ 1e-4), {secs:.2} s (< 5 s)"),
    ))
}

fn c2_baseline_rule(dir: &Path) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    let mut fractions = Vec::new();
    let mut masses = Vec::new();
    for seed in 0..5u64 {
        let s = settings(
            "explain",
            &dir.join(format!("seed{seed}")),
            &[f("seed", seed), f("data.n", 10_000), f("data.test_n", 2000)],
        );
        let out = drivers::explain(&s)?;
        let c = out.mask.share(&corners());
        let t = out.mask.share(&top_middle());
        ok &= c >= 0.8 && c + t >= 0.9;
        parts.push(format!("{c:.3}/{:.3}", c + t));
        fractions.push(out.mask.selected_fraction());
        masses.push(gradient_mass_share(&out.explanations, &corners()));
    }
    note(&format!(
        "selected fraction of M_0.67 per seed: {} (the explain examples quote 0.02-0.05 for Toy Color)",
        fmt_list(&fractions)
    ));
    note(&format!(
        "raw |gradient| mass on corners per seed: {} (not asserted; the criterion is read as mask mass)",
        fmt_list(&masses)
    ));
    Ok((ok, format!("corner share / corner+top-middle share per seed: {} (≥ 0.8 / ≥ 0.9)", parts.join(", "))))
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ")
}

fn c3_rule_switching(dir: &Path) -> Outcome {
    let common = [f("data.n", 10_000), f("data.annotate", "corners"), f("train.lambda1", 1000)];
    let mut a = common.to_vec();
    a.push(f("data.annotated_fraction", 0.05));
    let out = drivers::explain(&settings("explain", &dir.join("five-percent"), &a))?;
    let (c5, t5) = (out.mask.share(&corners()), out.mask.share(&top_middle()));
    let mut b = common.to_vec();
    b.push(f("data.annotated_count", 50));
    b.push(f("train.pin_annotated", true));
    let out = drivers::explain(&settings("explain", &dir.join("fifty-pinned"), &b))?;
    let (c50, t50) = (out.mask.share(&corners()), out.mask.share(&top_middle()));
    Ok((
        t5 > c5 && t50 > c50,
        format!(
            "5% annotated: top-middle {t5:.3} vs corners {c5:.3}; 50 pinned: top-middle {t50:.3} vs corners {c50:.3} (top-middle must exceed corners in both)"
        ),
    ))
}

fn c4_fae(dir: &Path) -> Outcome {
    let s = settings(
        "fae",
        dir,
        &[
            f("data.n", 10_000),
            f("cutoff", 0.67),
            f("fae.schedule", "[1000.0, 1000000.0]"),
            f("fae.max_iterations", 3),
            f("fae.accuracy_drop", 1.0),
        ],
    );
    let out = drivers::fae(&s)?;
    let its = &out.trace.iterations;
    if its.len() < 3 {
        return Ok((false, format!("loop stopped after {} iterations ({:?})", its.len(), out.trace.stop)));
    }
    let mut shares = Vec::new();
    for it in its.iter().take(3) {
        let m = mask_top(&explain(&it.params, &out.test.x, Target::SumLogProb)?, 0.67)?;
        shares.push((m.share(&corners()), m.share(&top_middle())));
    }
    let acc2 = its[2].test_accuracy;
    let ok = shares[0].0 > shares[0].1 && shares[0].0 >= 0.5 && shares[1].1 > shares[1].0 && shares[1].1 >= 0.5
        && (0.45..=0.55).contains(&acc2);
    Ok((
        ok,
        format!(
            "iteration 0 corners {:.3} / top-middle {:.3}; iteration 1 corners {:.3} / top-middle {:.3}; iteration 2 test accuracy {acc2:.3} (in [0.45, 0.55])",
            shares[0].0, shares[0].1, shares[1].0, shares[1].1
        ),
    ))
}

fn c5_decoy_mnist(dir: &Path) -> Outcome {
    let s = settings(
        "confound-report",
        dir,
        &[f("data.name", "decoy-mnist"), f("report.splits", 1)],
    );
    let out = drivers::confound_report(&s)?;
    let get = |v: &str, m: &str| out.mean(v, m).unwrap_or(f64::NAN);
    let (tr0, te0, te1) = (
        get("zero", "train_accuracy"),
        get("zero", "test_accuracy"),
        get("full", "test_accuracy"),
    );
    let baseline = drivers::train(&settings("train", &dir.join("baseline"), &[f("data.name", "mnist")]))?;
    let rows = gradguard_harness::data::load_raw(&s.data, s.seed)?.0.len();
    note(&format!(
        "clean MNIST baseline, same architecture: test accuracy {:.3}; {rows} training rows (bundled subset, so the ≥ 0.88 tolerance applies)",
        baseline.test_accuracy
    ));
    Ok((
        tr0 >= 0.99 && (0.45..=0.65).contains(&te0) && te1 >= 0.88,
        format!(
            "A = 0: train {tr0:.3} (≥ 0.99), test {te0:.3} (in [0.45, 0.65]); full A: test {te1:.3} (≥ 0.90, ≥ 0.88 subsampled)"
        ),
    ))
}

fn c6_iris_cancer(dir: &Path) -> Outcome {
    let s = settings(
        "confound-report",
        dir,
        &[f("data.name", "iris-cancer"), f("report.splits", 50)],
    );
    let t = Instant::now();
    let out = drivers::confound_report(&s)?;
    let secs = t.elapsed().as_secs_f64();
    let get = |v: &str, m: &str| out.mean(v, m).unwrap_or(f64::NAN);
    let with0 = get("zero", "test_accuracy");
    let without0 = get("zero", "test_without_confound");
    let with1 = get("full", "test_accuracy");
    let without1 = get("full", "test_without_confound");
    let gap = (with1 - without1).abs();
    let ok = (with0 - 0.92).abs() <= 0.05 && (without0 - 0.81).abs() <= 0.07 && gap <= 0.03 && secs < 120.0;
    Ok((
        ok,
        format!(
            "A = 0: with Iris {with0:.3} (0.92 ± 0.05), without {without0:.3} (0.81 ± 0.07); full A: {with1:.3} vs {without1:.3}, gap {gap:.3} (≤ 0.03); {secs:.0} s (< 120 s)"
        ),
    ))
}

fn c7_runtime(dir: &Path) -> Outcome {
    let s = settings(
        "bench",
        dir,
        &[f("data.name", "mnist"), f("bench.samples", "[5000]"), f("bench.instances", 5)],
    );
    let out = drivers::bench(&s)?;
    let (samples, ratio) = out.ratios[0];
    let dim = out.rows[0].dim;
    Ok((
        ratio >= 100.0 && dim == 784 && samples == 5000,
        format!("surrogate/gradient time ratio {ratio:.0} at {samples} samples, D = {dim} (≥ 100)"),
    ))
}

fn c8_data_efficiency(dir: &Path) -> Outcome {
    let s = settings(
        "data-efficiency",
        dir,
        &[f("efficiency.sizes", "[16, 32, 64, 100, 200, 500, 1000, 2000, 5000]")],
    );
    let out = drivers::data_efficiency(&s)?;
    let largest = *s.efficiency.sizes.last().unwrap();
    let pro = out.first_reaching("pro-rule1", 0.95);
    let zero = out.first_reaching("none", 0.95);
    for m in ["none", "pro-rule1", "anti-rule1"] {
        let curve: Vec<String> = out.means[m].iter().map(|(n, a)| format!("{n}:{a:.3}")).collect();
        note(&format!("{m}: {}", curve.join(" ")));
    }
    let ok = match pro {
        Some(p) if p <= 100 => zero.map_or(largest >= 10 * p, |z| z >= 10 * p),
        _ => false,
    };
    let show = |v: Option<usize>| v.map_or(format!("> {largest}"), |n| n.to_string());
    Ok((
        ok,
        format!(
            "smallest N reaching 0.95: Pro-Rule 1 {} (≤ 100), A = 0 {} (≥ 10× Pro-Rule 1)",
            show(pro),
            show(zero)
        ),
    ))
}

fn c9_lambda_sweep(dir: &Path) -> Outcome {
    let s = settings(
        "lambda-sweep",
        dir,
        &[
            f("data.n", 10_000),
            f("data.annotate", "corners"),
            f("data.test_rules", "top-middle-only"),
            f("sweep.include_zero", false),
        ],
    );
    let out = drivers::lambda_sweep(&s)?;
    let mut best = Vec::new();
    let mut ok = false;
    for r in out.rows.iter().filter(|r| out.best.contains(&r.lambda1)) {
        ok |= (0.1..=10.0).contains(&r.initial_ratio);
        best.push(format!("λ1 {:e}: accuracy {:.3}, ratio {:.3}", r.lambda1, r.test_accuracy, r.initial_ratio));
    }
    let last = out.rows.last().unwrap();
    let chance = (last.test_accuracy - 0.5).abs() <= 0.1;
    Ok((
        ok && chance,
        format!(
            "best grid points [{}] (some ratio in [0.1, 10]); λ1 {:e}: accuracy {:.3} (within 0.1 of chance)",
            best.join("; "),
            last.lambda1,
            last.test_accuracy
        ),
    ))
}

fn c10_fidelity(dir: &Path) -> Outcome {
    let s = settings(
        "surrogate",
        dir,
        &[
            f("data.name", "topics"),
            f("data.n", 1000),
            f("surrogate.instances", 50),
            f("surrogate.samples", 2000),
            f("surrogate.k", 10),
            f("surrogate.units", "nonzero"),
            f("surrogate.reseeds", 3),
        ],
    );
    let out = drivers::surrogate(&s)?;
    let sum = out.summary;
    let mut ok = sum.instances == 50 && sum.sign_agreement >= 0.9 && sum.gradients_reproducible;
    let mut detail = format!(
        "sign agreement {}/{} = {:.3} over {} instances (≥ 0.9); gradients bitwise reproducible: {}; surrogate reseed top-k Jaccard {:.3} (recorded)",
        sum.agree, sum.joint, sum.sign_agreement, sum.instances, sum.gradients_reproducible, sum.mean_reseed_jaccard
    );
    note(&format!("synthetic topic corpus, test accuracy {:.3}", sum.test_accuracy));
    match std::env::var("GRADGUARD_20NG_DIR") {
        Ok(corpus) => {
            let t = drivers::train(&settings(
                "train",
                &dir.join("20ng"),
                &[f("data.name", "newsgroups"), f("data.corpus_dir", corpus)],
            ))?;
            ok &= (t.test_accuracy - 0.94).abs() <= 0.03;
            detail.push_str(&format!("; 20 Newsgroups test accuracy {:.3} (0.94 ± 0.03)", t.test_accuracy));
        }
        Err(_) => note("GRADGUARD_20NG_DIR not set; 20 Newsgroups accuracy not checked"),
    }
    Ok((ok, detail))
}

/// `|g| ≥ c · max|g|` per row, with an all-zero row selecting nothing.
fn expected_mask(g: &Tensor, c: f64) -> Vec<bool> {
    let mut out = Vec::with_capacity(g.len());
    for i in 0..g.rows() {
        let max = g.row(i).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        out.extend(g.row(i).iter().map(|v| max > 0.0 && v.abs() >= c * max));
    }
    out
}

fn as_bits(t: &Tensor) -> Vec<bool> {
    t.data().iter().map(|&v| v == 1.0).collect()
}

fn set(g: Tensor) -> ExplanationSet {
    ExplanationSet {
        gradients: g,
        target: Target::SumLogProb,
        model_fingerprint: String::new(),
    }
}

fn c11_invariants(dir: &Path) -> Outcome {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    // Masks: definition, monotonicity, row-scale invariance, idempotence.
    for _ in 0..300 {
        let (n, d) = (rng.random_range(1..6), rng.random_range(1..10));
        let g = Tensor::matrix(n, d, (0..n * d).map(|_| rng.random_range(-5.0..5.0)).collect())?;
        let c = rng.random_range(0.01..=1.0);
        let c2 = c + (1.0 - c) * rng.random::<f64>();
        let m = mask_top(&set(g.clone()), c)?;
        if as_bits(&m.bits) != expected_mask(&g, c) {
            failures.push("mask definition");
        }
        let hi = as_bits(&mask_top(&set(g.clone()), c2)?.bits);
        if hi.iter().zip(as_bits(&m.bits)).any(|(h, l)| *h && !l) {
            failures.push("mask monotonicity");
        }
        let s = rng.random_range(1e-3..1e3);
        let scaled = Tensor::matrix(n, d, g.data().iter().enumerate().map(|(k, v)| v * s * (1 + k / d) as f64).collect())?;
        if mask_top(&set(scaled), c)?.bits != m.bits {
            failures.push("mask scale invariance");
        }
        if mask_top(&set(g), c)? != m {
            failures.push("mask idempotence");
        }
    }

    // FAE: A_{i+1} = M_c(θ_i) ∪ A_i, elementwise.
    let train = gen_2d_toy(Toy2dKind::ThreeClass, 200, 3)?;
    let test = gen_2d_toy(Toy2dKind::ThreeClass, 60, 4)?;
    let cfg = FaeConfig {
        max_iterations: 4,
        accuracy_drop: 1.0,
        overlap_ceiling: 1.0,
        train: TrainConfig {
            epochs: 4,
            batch_size: 32,
            ..TrainConfig::default()
        },
        ..FaeConfig::default()
    };
    let trace = run_fae(&train, &test, &cfg)?;
    if trace.iterations.len() < 2 {
        failures.push("FAE ran fewer than two iterations");
    }
    for w in trace.iterations.windows(2) {
        let g = explain(&w[0].params, &train.x, cfg.target)?.gradients;
        let expect: Vec<bool> = expected_mask(&g, cfg.cutoff)
            .into_iter()
            .zip(as_bits(&w[0].a))
            .map(|(m, a)| m || a)
            .collect();
        if as_bits(&w[1].a) != expect {
            failures.push("FAE accumulation");
        }
    }

    // Toy Color: decode every pixel to a palette index and re-derive labels.
    let toy = gen_toy_color(2000, 5)?;
    for (i, label) in toy.labels().into_iter().enumerate() {
        let x = toy.x.row(i);
        let color = |p: (usize, usize)| {
            let [a, b, c] = pixel_columns(p.0, p.1);
            TOY_COLORS.iter().position(|k| k == &[x[a], x[b], x[c]])
        };
        let all: Vec<Option<usize>> = (0..5).flat_map(|r| (0..5).map(move |c| (r, c))).map(color).collect();
        if all.iter().any(|c| c.is_none()) {
            failures.push("toy color palette");
            break;
        }
        let k: Vec<usize> = TOY_CORNERS.iter().map(|&p| color(p).unwrap()).collect();
        let t: Vec<usize> = TOY_TOP_MIDDLE.iter().map(|&p| color(p).unwrap()).collect();
        let same = k.iter().all(|&v| v == k[0]);
        let distinct = t[0] != t[1] && t[1] != t[2] && t[0] != t[2];
        let ok = if label == 0 { same && distinct } else { !same && !distinct };
        if !ok {
            failures.push("toy color rules");
            break;
        }
    }

    // Iris-Cancer: standardized columns; split sizes and strata.
    let ic = load_iris_cancer(data_dir().join("uci/iris.data"), data_dir().join("uci/wdbc.data"))?;
    for j in 0..ic.dim() {
        let col: Vec<f64> = (0..ic.len()).map(|i| ic.x.get(i, j)).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
        if mean.abs() > 1e-9 || (var - 1.0).abs() > 1e-9 {
            failures.push("iris-cancer standardization");
            break;
        }
    }
    let (tr, te) = split(&ic, 0.67, 9)?;
    let count = |d: &gradguard::datasets::LabeledDataset, l| d.labels().iter().filter(|&&v| v == l).count();
    if tr.len() + te.len() != ic.len() || tr.len() != (0.67 * ic.len() as f64).round() as usize {
        failures.push("split sizes");
    }
    for l in 0..2 {
        let expect = 0.67 * count(&ic, l) as f64;
        if (count(&tr, l) as f64 - expect).abs() > 1.0 {
            failures.push("split strata");
        }
    }

    // Checkpoint: bitwise round trip, format version included.
    let s = settings("train", &dir.join("ckpt"), &[f("data.name", "blobs3"), f("train.epochs", 3)]);
    let out = drivers::train(&s)?;
    let loaded = Checkpoint::load(dir.join("ckpt/checkpoint.json"))?;
    let same_bits = loaded
        .params
        .tensors()
        .zip(out.params.tensors())
        .all(|(a, b)| a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    if loaded != out.checkpoint || !same_bits || loaded.version != out.checkpoint.version {
        failures.push("checkpoint round trip");
    }

    failures.dedup();
    Ok((
        failures.is_empty(),
        if failures.is_empty() {
            "mask definition/monotonicity/scale/idempotence (300 cases), FAE accumulation, Toy Color and Iris-Cancer predicates, split strata, checkpoint round trip".into()
        } else {
            format!("violated: {}", failures.join(", "))
        },
    ))
}

fn main() {
    let only = std::env::var("GRADGUARD_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let strict = std::env::var("GRADGUARD_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut run = Run {
        root: tempfile::tempdir().expect("temporary directory"),
        only,
        passed: 0,
        failed: Vec::new(),
        errors: Vec::new(),
    };
    println!("acceptance criteria");
    run.criterion(1, "gradient of gradient", c1_gradient_of_gradient);
    run.criterion(2, "Toy Color baseline rule", c2_baseline_rule);
    run.criterion(3, "rule switching", c3_rule_switching);
    run.criterion(4, "FAE on Toy Color", c4_fae);
    run.criterion(5, "Decoy MNIST", c5_decoy_mnist);
    run.criterion(6, "Iris-Cancer", c6_iris_cancer);
    run.criterion(7, "runtime benchmark", c7_runtime);
    run.criterion(8, "data efficiency", c8_data_efficiency);
    run.criterion(9, "λ1 sweep", c9_lambda_sweep);
    run.criterion(10, "explanation fidelity", c10_fidelity);
    run.criterion(11, "invariant suites", c11_invariants);
    let total = run.passed + run.failed.len() + run.errors.len();
    println!(
        "acceptance: {}/{total} PASS; measured failures {:?}; errors {:?}",
        run.passed, run.failed, run.errors
    );
    if !run.errors.is_empty() || (strict && !run.failed.is_empty()) {
        std::process::exit(1);
    }
}
