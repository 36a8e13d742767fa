//! Acceptance suite: one test per criterion, each printing a pass line.
//!
//! The heavy fixtures (desk-scale and short-budget trainings of all five
//! masking schemes on the canonical network, plus the shared test sets with
//! their oracle ground truth) are built lazily and shared across criteria.
//! Run with `cargo test -p um-cli --test acceptance -- --nocapture` to see
//! the per-criterion measurements.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use um_core::stats::{binomial_pmf, chi_square_gof};
use um_core::{
    backward, brute_force_marginals, build_test_set, cross_entropy_loss,
    exact_conditional_marginals, generate_random_network, model_predictions, oracle_predictions,
    sample_markov_mask, sample_nodewise_mask, sample_sizewise_mask, sample_uniform_mask, train,
    Assignment, EvaluationQuery, Evidence, LayerSizes, MaskingScheme, NoisyOrNetwork,
    ObservationModel, ParamRanges, TrainingConfig, TrainingOutcome, UmModel,
};

const ALPHA: f64 = 0.01;
const SCHEMES: [&str; 5] = ["uniform", "sizewise", "nodewise", "cycle", "markov"];
/// Desk-scale budget: samples per epoch x epochs.
const FULL_SAMPLES_PER_EPOCH: usize = 100_000;
/// Short budget is 10x smaller.
const SHORT_SAMPLES_PER_EPOCH: usize = 10_000;
const EPOCHS: usize = 20;
const SIZES: [usize; 13] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12];
const PER_SIZE: usize = 200;

fn canonical_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../networks/canonical-24.bnet")
}

fn canonical() -> &'static NoisyOrNetwork {
    static NET: OnceLock<NoisyOrNetwork> = OnceLock::new();
    NET.get_or_init(|| NoisyOrNetwork::load(&canonical_path()).expect("canonical network"))
}

fn train_scheme(name: &str, samples_per_epoch: usize, seed_base: u64) -> TrainingOutcome {
    let index = SCHEMES.iter().position(|&s| s == name).unwrap() as u64;
    let config = TrainingConfig {
        scheme: MaskingScheme::parse(name).unwrap(),
        samples_per_epoch,
        epochs: EPOCHS,
        batch_size: 512,
        learning_rate: 1e-4,
        data_seed: seed_base + index,
        init_seed: seed_base + 1000 + index,
        checkpoint_every_epochs: None,
        checkpoint_dir: None,
    };
    let started = Instant::now();
    let outcome = train(canonical(), &config).expect("training");
    eprintln!(
        "[fixture] trained {name} at {} samples in {:.0}s",
        samples_per_epoch * EPOCHS,
        started.elapsed().as_secs_f64()
    );
    outcome
}

fn full_outcome(name: &str) -> &'static TrainingOutcome {
    static CELLS: [OnceLock<TrainingOutcome>; 5] = [const { OnceLock::new() }; 5];
    let index = SCHEMES.iter().position(|&s| s == name).unwrap();
    CELLS[index].get_or_init(|| train_scheme(name, FULL_SAMPLES_PER_EPOCH, 1000))
}

fn short_outcome(name: &str) -> &'static TrainingOutcome {
    static CELLS: [OnceLock<TrainingOutcome>; 5] = [const { OnceLock::new() }; 5];
    let index = SCHEMES.iter().position(|&s| s == name).unwrap();
    CELLS[index].get_or_init(|| train_scheme(name, SHORT_SAMPLES_PER_EPOCH, 3000))
}

/// Test queries plus exact ground truth `P(X = 0 | evidence)`.
struct TestSet {
    queries: Vec<EvaluationQuery>,
    truth: Vec<f64>,
}

fn test_set(obs: ObservationModel, query_node: usize) -> &'static TestSet {
    static CELLS: [OnceLock<TestSet>; 16] = [const { OnceLock::new() }; 16];
    let net = canonical();
    let disease = query_node - net.num_risk_factors();
    let slot = disease * 2 + usize::from(obs == ObservationModel::Markov);
    CELLS[slot].get_or_init(|| {
        let seed = 31_000
            + 1000 * query_node as u64
            + u64::from(obs == ObservationModel::Markov) * 500;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let queries = build_test_set(net, obs, &SIZES, PER_SIZE, query_node, &mut rng)
            .expect("test set");
        let truth = oracle_predictions(net, &queries).expect("oracle");
        TestSet { queries, truth }
    })
}

fn disease_nodes() -> Vec<usize> {
    let net = canonical();
    (0..net.num_diseases()).map(|i| net.disease_global(i)).collect()
}

/// Mean `|prediction - truth|` over queries whose evidence size passes the
/// filter, across the given query nodes.
fn mean_error(
    model: &UmModel,
    obs: ObservationModel,
    query_nodes: &[usize],
    keep: impl Fn(usize) -> bool,
) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for &q in query_nodes {
        let set = test_set(obs, q);
        let predictions = model_predictions(model, &set.queries).expect("predictions");
        for ((query, &p), &t) in set.queries.iter().zip(&predictions).zip(&set.truth) {
            if keep(query.k) {
                total += (p - t).abs();
                count += 1;
            }
        }
    }
    total / count as f64
}

/// Criterion 1: exact inference matches brute force within 1e-10 on 50
/// seeded random networks with n <= 12, 100 random evidence sets each,
/// in under a minute.
#[test]
fn criterion_1_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let layers = LayerSizes::new(
            rng.random_range(1..=4),
            rng.random_range(1..=4),
            rng.random_range(1..=4),
        )
        .unwrap();
        let net =
            generate_random_network(500 + seed, layers, 0.5, &ParamRanges::default()).unwrap();
        for _ in 0..100 {
            let k = rng.random_range(0..=net.n());
            let picked = rand::seq::index::sample(&mut rng, net.n(), k);
            let ev = Evidence::new(
                picked
                    .iter()
                    .map(|i| (i, rng.random_bool(0.5)))
                    .collect::<Vec<_>>(),
            )
            .unwrap();
            let exact = exact_conditional_marginals(&net, &ev).unwrap();
            let brute = brute_force_marginals(&net, &ev).unwrap();
            for i in 0..net.n() {
                worst = worst.max((exact.get(i) - brute.get(i)).abs());
            }
        }
    }
    let elapsed = started.elapsed();
    assert!(worst < 1e-10, "worst deviation {worst:e}");
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}");
    println!(
        "[PASS] criterion 1: oracle equivalence, worst |exact - brute| = {worst:.2e} in {:.1}s",
        elapsed.as_secs_f64()
    );
}

/// Criterion 2: the joint distribution normalises to 1 +- 1e-10 on every
/// n <= 12 test network.
#[test]
fn criterion_2_normalisation() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let layers = LayerSizes::new(
            rng.random_range(1..=4),
            rng.random_range(1..=4),
            rng.random_range(1..=4),
        )
        .unwrap();
        let net =
            generate_random_network(600 + seed, layers, 0.5, &ParamRanges::default()).unwrap();
        let mut total = 0.0;
        let mut values = vec![false; net.n()];
        for code in 0u32..(1 << net.n()) {
            for (i, v) in values.iter_mut().enumerate() {
                *v = code >> i & 1 == 1;
            }
            total += net
                .joint_probability(&Assignment::new(values.clone()))
                .unwrap();
        }
        worst = worst.max((total - 1.0).abs());
    }
    assert!(worst < 1e-10, "worst normalisation gap {worst:e}");
    println!("[PASS] criterion 2: joint normalisation, worst gap {worst:.2e}");
}

/// Criterion 3: masking statistics over 1e5 seeded samples each — uniform
/// sizes fit Binomial(24, 0.5) and sizewise sizes fit Uniform{0..24} at
/// chi-square alpha 0.01; markov masks have 100% blanket containment;
/// nodewise mean size is within 3 standard errors of 24p. Under 30 s.
#[test]
fn criterion_3_masking_statistics() {
    let started = Instant::now();
    let n = 24;
    let draws = 100_000;

    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut counts = vec![0u64; n + 1];
    for _ in 0..draws {
        counts[sample_uniform_mask(n, &mut rng).size()] += 1;
    }
    let uniform_test = chi_square_gof(&counts, &binomial_pmf(n, 0.5)).unwrap();
    assert!(
        uniform_test.passes(ALPHA),
        "uniform vs binomial p = {}",
        uniform_test.p_value
    );

    let mut counts = vec![0u64; n + 1];
    for _ in 0..draws {
        counts[sample_sizewise_mask(n, &mut rng).size()] += 1;
    }
    let flat = vec![1.0 / (n + 1) as f64; n + 1];
    let sizewise_test = chi_square_gof(&counts, &flat).unwrap();
    assert!(
        sizewise_test.passes(ALPHA),
        "sizewise vs flat p = {}",
        sizewise_test.p_value
    );

    let net = canonical();
    let blankets: Vec<Vec<usize>> = (0..net.num_diseases())
        .map(|i| net.markov_blanket(net.disease_global(i)).unwrap())
        .collect();
    let mut contained = 0u64;
    for _ in 0..draws {
        let p: f64 = rng.random_range(0.0..=1.0);
        let mask = sample_markov_mask(net, p, &mut rng).unwrap();
        let ones = mask.ones();
        contained += u64::from(
            blankets
                .iter()
                .any(|mb| ones.iter().all(|i| mb.contains(i))),
        );
    }
    assert_eq!(contained, draws, "markov containment violated");

    for p in [0.1, 0.5, 0.9] {
        let mut total = 0u64;
        for _ in 0..draws {
            total += sample_nodewise_mask(n, p, &mut rng).unwrap().size() as u64;
        }
        let mean = total as f64 / draws as f64;
        let se = (n as f64 * p * (1.0 - p) / draws as f64).sqrt();
        assert!(
            (mean - n as f64 * p).abs() < 3.0 * se,
            "nodewise p={p}: mean {mean} vs {}",
            n as f64 * p
        );
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 30, "took {elapsed:?}");
    println!(
        "[PASS] criterion 3: masking statistics (uniform p={:.3}, sizewise p={:.3}, \
         markov containment 100%, nodewise means ok) in {:.1}s",
        uniform_test.p_value,
        sizewise_test.p_value,
        elapsed.as_secs_f64()
    );
}

/// Criterion 4: the uniform scheme's size histogram on n = 4 matches the
/// (1, 4, 6, 4, 1)/16 proportions at chi-square alpha 0.01 over 1e5 draws.
#[test]
fn criterion_4_mask_size_distribution_n4() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let mut counts = vec![0u64; 5];
    for _ in 0..100_000 {
        counts[sample_uniform_mask(4, &mut rng).size()] += 1;
    }
    let probs: Vec<f64> = [1.0, 4.0, 6.0, 4.0, 1.0].iter().map(|c| c / 16.0).collect();
    let test = chi_square_gof(&counts, &probs).unwrap();
    assert!(test.passes(ALPHA), "p = {}", test.p_value);
    println!(
        "[PASS] criterion 4: n=4 uniform size histogram fits (1,4,6,4,1)/16, p = {:.3}",
        test.p_value
    );
}

/// Criterion 5: analytic gradients match central finite differences
/// (step 1e-5) with relative error below 1e-4 for every parameter tensor of
/// a (2, 2, 2)-shaped model at batch size 4, in under a minute. Tensors are
/// probed on a seeded sample of coordinates; tensors whose gradients sit at
/// rounding noise (pre-norm biases) are compared absolutely.
#[test]
fn criterion_5_gradient_correctness() {
    let started = Instant::now();
    let model = UmModel::init(LayerSizes::new(2, 2, 2).unwrap(), 46);
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let batch = 4;
    let n = model.num_nodes();
    let mut input = ndarray::Array2::zeros((batch, model.input_width()));
    let mut targets = ndarray::Array2::zeros((batch, n));
    for r in 0..batch {
        for i in 0..n {
            targets[[r, i]] = f64::from(u8::from(rng.random_bool(0.5)));
            match rng.random_range(0..3) {
                0 => {}
                1 => input[[r, 2 * i]] = 1.0,
                _ => input[[r, 2 * i + 1]] = 1.0,
            }
        }
    }
    let (_, cache) = model.forward_train_stats(&input).unwrap();
    let grads = backward(&model, &cache, &targets).unwrap();

    let mut worst = 0.0f64;
    let mut worst_abs = 0.0f64;
    for (tensor, grad) in grads.tensors().iter().enumerate() {
        let len = grad.len();
        let coords: Vec<usize> = if len <= 10 {
            (0..len).collect()
        } else {
            rand::seq::index::sample(&mut rng, len, 10).into_vec()
        };
        let mut analytic_norm = 0.0;
        let mut fd_norm = 0.0;
        let mut diff_norm = 0.0;
        for &coord in &coords {
            let analytic = *grad.iter().nth(coord).unwrap();
            let fd = {
                let eval = |delta: f64| {
                    let mut nudged = model.clone();
                    *nudged.param_views_mut()[tensor]
                        .iter_mut()
                        .nth(coord)
                        .unwrap() += delta;
                    let (probs, _) = nudged.forward_train_stats(&input).unwrap();
                    cross_entropy_loss(&probs, &targets).unwrap()
                };
                (eval(1e-5) - eval(-1e-5)) / 2e-5
            };
            analytic_norm += analytic * analytic;
            fd_norm += fd * fd;
            diff_norm += (analytic - fd) * (analytic - fd);
        }
        if diff_norm.sqrt() < 1e-8 {
            worst_abs = worst_abs.max(diff_norm.sqrt());
            continue;
        }
        let rel = diff_norm.sqrt() / (analytic_norm.sqrt() + fd_norm.sqrt()).max(1e-10);
        worst = worst.max(rel);
        assert!(rel < 1e-4, "tensor {tensor}: relative error {rel:e}");
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}");
    println!(
        "[PASS] criterion 5: gradient check, worst tensor relative error {worst:.2e} \
         (abs-floor tensors within {worst_abs:.1e}) in {:.1}s",
        elapsed.as_secs_f64()
    );
}

/// Criterion 6: after a 2e6-sample sizewise desk-scale run on the canonical
/// network, the mean |Q - P| over uniform-evidence queries with k <= 8 is
/// below 0.05 for every disease query node — and strictly better than a
/// freshly initialised model everywhere. The same run's training loss must
/// fall epoch over epoch (median over the first five epochs) and end at
/// least 30% below the first epoch's mean.
#[test]
fn criterion_6_convergence_sanity() {
    let outcome = full_outcome("sizewise");
    let untrained = UmModel::init(canonical().layer_sizes(), 2001);

    let mut worst = 0.0f64;
    for q in disease_nodes() {
        let err = mean_error(
            &outcome.model,
            ObservationModel::Uniform,
            &[q],
            |k| k <= 8,
        );
        println!("  criterion 6: query node {q}: mean |Q - P| at k<=8 = {err:.4}");
        worst = worst.max(err);
        assert!(err < 0.05, "query node {q}: mean error {err}");
        for k in 0..=8usize {
            let trained = mean_error(&outcome.model, ObservationModel::Uniform, &[q], |kk| kk == k);
            let fresh = mean_error(&untrained, ObservationModel::Uniform, &[q], |kk| kk == k);
            assert!(
                trained < fresh,
                "query node {q}, k={k}: trained {trained} not better than untrained {fresh}"
            );
        }
    }

    let medians: Vec<f64> = outcome.metrics.epochs.iter().map(|e| e.median_loss).collect();
    for pair in medians.windows(2).take(4) {
        assert!(
            pair[1] < pair[0],
            "median epoch loss did not fall: {medians:?}"
        );
    }
    let first_mean = outcome.metrics.epochs.first().unwrap().mean_loss;
    let last_mean = outcome.metrics.epochs.last().unwrap().mean_loss;
    assert!(
        last_mean <= 0.7 * first_mean,
        "loss reduction below 30%: first {first_mean}, last {last_mean}"
    );

    println!(
        "[PASS] criterion 6: sizewise desk-scale convergence, worst per-node mean error {worst:.4} \
         (loss {first_mean:.3} -> {last_mean:.3})"
    );
}

/// Criterion 7: at the same desk-scale budget, the markov-trained model
/// under uniform evidence at k >= 8 is worse than (a) itself under markov
/// evidence and (b) the sizewise-trained model under uniform evidence.
#[test]
fn criterion_7_mismatch_asymmetry() {
    let markov = &full_outcome("markov").model;
    let sizewise = &full_outcome("sizewise").model;
    let nodes = disease_nodes();
    let large_k = |k: usize| k >= 8;

    let markov_uniform = mean_error(markov, ObservationModel::Uniform, &nodes, large_k);
    let markov_markov = mean_error(markov, ObservationModel::Markov, &nodes, large_k);
    let sizewise_uniform = mean_error(sizewise, ObservationModel::Uniform, &nodes, large_k);

    println!(
        "  criterion 7: markov/uniform {markov_uniform:.4}, markov/markov {markov_markov:.4}, \
         sizewise/uniform {sizewise_uniform:.4} (k >= 8, all diseases)"
    );
    assert!(
        markov_uniform > markov_markov,
        "markov-trained model not worse under uniform evidence: \
         {markov_uniform} vs {markov_markov}"
    );
    assert!(
        markov_uniform > sizewise_uniform,
        "markov-trained model not worse than sizewise under uniform evidence: \
         {markov_uniform} vs {sizewise_uniform}"
    );
    println!("[PASS] criterion 7: markov masking degrades under uniform evidence at large k");
}

/// Criterion 8: at a 10x smaller budget the per-scheme error differences
/// widen — the mean spread (max - min across schemes) over k <= 8 under
/// uniform evidence is strictly larger than at desk scale.
#[test]
fn criterion_8_short_budget_spread() {
    let nodes = disease_nodes();
    let spread = |outcomes: &dyn Fn(&str) -> &'static TrainingOutcome| -> f64 {
        let mut total = 0.0;
        for k in 0..=8usize {
            let errs: Vec<f64> = SCHEMES
                .iter()
                .map(|name| {
                    mean_error(
                        &outcomes(name).model,
                        ObservationModel::Uniform,
                        &nodes,
                        |kk| kk == k,
                    )
                })
                .collect();
            let max = errs.iter().cloned().fold(f64::MIN, f64::max);
            let min = errs.iter().cloned().fold(f64::MAX, f64::min);
            total += max - min;
        }
        total / 9.0
    };

    let full_spread = spread(&|name| full_outcome(name));
    let short_spread = spread(&|name| short_outcome(name));
    println!(
        "  criterion 8: scheme spread at k<=8 — full budget {full_spread:.4}, \
         short budget {short_spread:.4}"
    );
    assert!(
        short_spread > full_spread,
        "short-budget spread {short_spread} not larger than desk-scale {full_spread}"
    );
    println!("[PASS] criterion 8: scheme differences widen at the 10x smaller budget");
}

/// Criterion 9: the reproduce pipeline, re-run from its own manifest,
/// regenerates byte-identical checkpoints and reports.
#[test]
fn criterion_9_reproduce_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let um = env!("CARGO_BIN_EXE_um");

    let status = Command::new(um)
        .args([
            "reproduce",
            "--net",
            canonical_path().to_str().unwrap(),
            "--samples",
            "4000",
            "--epochs",
            "2",
            "--batch",
            "256",
            "--sizes",
            "0..4",
            "--per-size",
            "10",
            "--query-nodes",
            "8",
            "--seed",
            "77",
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .expect("running um reproduce");
    assert!(status.success());

    // Snapshot every artifact, then replay from the manifest into the same
    // directory and compare bytes.
    let mut files: Vec<PathBuf> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty());
    let snapshots: Vec<(PathBuf, Vec<u8>)> = files
        .iter()
        .map(|p| (p.clone(), std::fs::read(p).unwrap()))
        .collect();

    let status = Command::new(um)
        .args([
            "rerun",
            "--manifest",
            out.join("manifest.json").to_str().unwrap(),
        ])
        .status()
        .expect("running um rerun");
    assert!(status.success());

    for (path, before) in &snapshots {
        let after = std::fs::read(path).unwrap();
        assert_eq!(
            &after,
            before,
            "file {} changed between runs",
            path.display()
        );
    }
    println!(
        "[PASS] criterion 9: reproduce replayed from its manifest, {} files byte-identical",
        snapshots.len()
    );
}
