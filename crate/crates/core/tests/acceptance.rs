//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits nonzero when any of them fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use fuda::aggregation::{compute_weights, AggregatorKind, EntropyStats};
use fuda::harness::{
    ablation_variants, pooled_entropy_accuracy_correlation, run_aggregator_comparison, run_epsilon_sweep, run_variants,
    ExperimentConfig, Table, ROW_ENTROPY, ROW_FEDAVG, ROW_SEA, ROW_SEA_MSPL, ROW_UNIFORM,
};
use fuda::mspl::{entropy_increase_of_smoothing, PseudoLabelSet};
use fuda::nn::{check_gradients_with, loss_and_grad, ArchitectureSpec, LossKind, Matrix, ModelParams, Targets};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn max_abs_diff(a: &ModelParams, b: &ModelParams) -> f64 {
    a.values()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

struct Net {
    params: ModelParams,
    x: Matrix,
    labels: Vec<usize>,
    soft: Matrix,
}

fn random_net(rng: &mut ChaCha8Rng) -> Net {
    let d = rng.random_range(1..=6);
    let widths: Vec<usize> = (0..rng.random_range(0..=2)).map(|_| rng.random_range(1..=8)).collect();
    let c = rng.random_range(2..=6);
    let n = rng.random_range(1..=8);
    let mut params = ModelParams::init(&ArchitectureSpec::new(d, widths, c).unwrap(), rng.random());
    for layer in &mut params.layers {
        for b in layer.bias.iter_mut() {
            *b = rng.random_range(-0.5..0.5);
        }
    }
    let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
    let labels = (0..n).map(|_| rng.random_range(0..c)).collect();
    let mut soft = Matrix::zeros(n, c);
    for i in 0..n {
        let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0.01..1.0)).collect();
        let s: f64 = raw.iter().sum();
        for (t, r) in soft.row_mut(i).iter_mut().zip(&raw) {
            *t = r / s;
        }
    }
    Net {
        params,
        x,
        labels,
        soft,
    }
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6AD);
    let mut worst: f64 = 0.0;
    let nets = 200;
    for _ in 0..nets {
        let net = random_net(&mut rng);
        let runs = [
            (Targets::Classes(net.labels.clone()), LossKind::HardCe),
            (Targets::Distributions(net.soft.clone()), LossKind::SoftCe),
            (
                Targets::Distributions(net.soft.clone()),
                LossKind::Ssce { epsilon: 0.9 },
            ),
        ];
        for (targets, kind) in runs {
            let (_, grads) = loss_and_grad(&net.params, &net.x, &targets, kind).map_err(|e| e.to_string())?;
            let report =
                check_gradients_with(&net.params, &grads, &net.x, &targets, kind, 1e-5).map_err(|e| e.to_string())?;
            worst = worst.max(report.max_relative_error);
        }
    }
    let elapsed = start.elapsed();
    check(worst <= 1e-4, || format!("max relative error {worst:.3e} > 1e-4"))?;
    check(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{nets} nets x 3 losses, max rel err {worst:.2e}, {elapsed:.2?}"
    ))
}

fn sea_closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EA);
    let (mut worst_form, mut worst_sum) = (0.0f64, 0.0f64);
    for _ in 0..2000 {
        let m = rng.random_range(2..=10);
        let h: Vec<f64> = (0..m).map(|_| rng.random_range(1e-3..(5f64).ln())).collect();
        let w = compute_weights(&EntropyStats::anonymous(&h), &vec![1; m], AggregatorKind::Sea)
            .map_err(|e| e.to_string())?
            .values();
        let denom: f64 = h.iter().map(|x| 1.0 / (x * x)).sum();
        for (wi, hi) in w.iter().zip(&h) {
            worst_form = worst_form.max((wi - 1.0 / (hi * hi) / denom).abs());
        }
        worst_sum = worst_sum.max((w.iter().sum::<f64>() - 1.0).abs());
        for i in 0..m {
            for j in 0..m {
                check(h[i] >= h[j] || w[i] > w[j], || format!("not monotone: h {h:?} w {w:?}"))?;
            }
        }
    }
    check(worst_form <= 1e-12, || format!("closed form off by {worst_form:.3e}"))?;
    check(worst_sum <= 1e-12, || format!("sum off by {worst_sum:.3e}"))?;
    Ok(format!(
        "2000 vectors, closed form {worst_form:.1e}, sum {worst_sum:.1e}, strictly monotone"
    ))
}

fn clustered_entropies() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1E2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let m = rng.random_range(2..=10);
        let base = rng.random_range(1e-3..3.0);
        let h: Vec<f64> = (0..m).map(|_| base * (1.0 + rng.random_range(0.0..1e-9))).collect();
        let w = compute_weights(&EntropyStats::anonymous(&h), &vec![1; m], AggregatorKind::Sea)
            .map_err(|e| e.to_string())?
            .values();
        for wi in w {
            worst = worst.max((wi - 1.0 / m as f64).abs());
        }
    }
    check(worst <= 1e-6, || format!("deviation from 1/M {worst:.3e}"))?;
    Ok(format!("1000 clustered vectors, max |w - 1/M| {worst:.1e}"))
}

fn loss_reductions() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x10F);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let net = random_net(&mut rng);
        let soft = Targets::Distributions(net.soft.clone());
        let (a, ga) = loss_and_grad(&net.params, &net.x, &soft, LossKind::SoftCe).map_err(|e| e.to_string())?;
        let (b, gb) =
            loss_and_grad(&net.params, &net.x, &soft, LossKind::Ssce { epsilon: 0.0 }).map_err(|e| e.to_string())?;
        worst = worst.max((a - b).abs()).max(max_abs_diff(&ga, &gb));
        let mut hot = Matrix::zeros(net.labels.len(), net.params.num_classes());
        for (i, &y) in net.labels.iter().enumerate() {
            hot.row_mut(i)[y] = 1.0;
        }
        let (c, gc) = loss_and_grad(&net.params, &net.x, &Targets::Distributions(hot), LossKind::SoftCe)
            .map_err(|e| e.to_string())?;
        let (d, gd) = loss_and_grad(
            &net.params,
            &net.x,
            &Targets::Classes(net.labels.clone()),
            LossKind::HardCe,
        )
        .map_err(|e| e.to_string())?;
        worst = worst.max((c - d).abs()).max(max_abs_diff(&gc, &gd));
    }
    check(worst <= 1e-12, || format!("max difference {worst:.3e}"))?;
    Ok(format!("500 nets, max value/gradient difference {worst:.1e}"))
}

fn smoothing_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5300);
    let eps_grid: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
    let mut min_delta = f64::INFINITY;
    let mut worst_uniform = 0.0f64;
    for _ in 0..2000 {
        let c = rng.random_range(2..=10);
        let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0.0..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let v: Vec<f64> = raw.iter().map(|x| x / s).collect();
        let uniform = vec![1.0 / c as f64; c];
        let pl = PseudoLabelSet {
            per_sample: Matrix::from_vec(2, c, [v, uniform].concat()).unwrap(),
            source_count: 1,
        };
        for &eps in &eps_grid {
            let d = entropy_increase_of_smoothing(&pl, eps).map_err(|e| e.to_string())?;
            min_delta = min_delta.min(d[0]);
            worst_uniform = worst_uniform.max(d[1].abs());
        }
    }
    check(min_delta > 0.0, || {
        format!("non-uniform input with delta {min_delta:.3e}")
    })?;
    check(worst_uniform <= 1e-12, || {
        format!("uniform input changed by {worst_uniform:.3e}")
    })?;
    Ok(format!(
        "2000 distributions x 10 eps, min increase {min_delta:.2e}, uniform drift {worst_uniform:.1e}"
    ))
}

fn mean(table: &Table, row: &str) -> Result<f64, String> {
    table
        .row(row)
        .map(|r| r.mean_accuracy)
        .ok_or_else(|| format!("missing row {row}"))
}

fn ablation_ordering(cfg: &ExperimentConfig) -> Outcome {
    let start = Instant::now();
    let (table, reports) = run_variants(cfg, "ablation", &ablation_variants(cfg)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let (ssce, sea, ent, uni) = (
        mean(&table, ROW_SEA_MSPL)?,
        mean(&table, ROW_SEA)?,
        mean(&table, ROW_ENTROPY)?,
        mean(&table, ROW_UNIFORM)?,
    );
    let detail = format!(
        "SEA+MSPL {ssce:.4} SEA {sea:.4} EntropyUnscaled {ent:.4} UniformAverage {uni:.4}, gap {:.2} pts, {elapsed:.2?}",
        100.0 * (ssce - uni)
    );
    PROTOCOL_REPORTS.with(|r| r.borrow_mut().extend(reports.into_iter().flatten()));
    check(ssce >= sea && sea >= ent && ent >= uni, || {
        format!("ordering violated: {detail}")
    })?;
    check(ssce - uni >= 0.02, || format!("gap below 2 points: {detail}"))?;
    check(elapsed < Duration::from_secs(300), || format!("too slow: {detail}"))?;
    Ok(detail)
}

fn aggregator_comparison(cfg: &ExperimentConfig) -> Outcome {
    let table = run_aggregator_comparison(cfg).map_err(|e| e.to_string())?;
    let (sea, fedavg) = (mean(&table, ROW_SEA)?, mean(&table, ROW_FEDAVG)?);
    let detail = format!("SEA {sea:.4} FedAvg {fedavg:.4}");
    check(sea >= fedavg, || detail.clone())?;
    Ok(detail)
}

fn epsilon_trend(cfg: &ExperimentConfig) -> Outcome {
    let grid = [0.1, 0.3, 0.5, 0.7, 0.9, 0.99];
    let table = run_epsilon_sweep(cfg, &grid).map_err(|e| e.to_string())?;
    let detail = table
        .rows
        .iter()
        .map(|r| format!("{} {:.4}", r.name, r.mean_accuracy))
        .collect::<Vec<_>>()
        .join(", ");
    check(mean(&table, "eps=0.9")? >= mean(&table, "eps=0.1")?, || detail.clone())?;
    Ok(detail)
}

fn entropy_anticorrelation() -> Outcome {
    let reports = PROTOCOL_REPORTS.with(|r| r.borrow().clone());
    let sea: Vec<_> = reports
        .into_iter()
        .filter(|r| r.adaptation.is_none() && r.aggregator == AggregatorKind::Sea)
        .collect();
    check(sea.len() >= 10, || format!("only {} seeds available", sea.len()))?;
    let r = pooled_entropy_accuracy_correlation(&sea).map_err(|e| e.to_string())?;
    let pairs: usize = sea.iter().map(|s| s.per_client.len()).sum();
    check(r < 0.0, || format!("pooled r = {r:.4}"))?;
    Ok(format!("pooled r = {r:.4} over {pairs} clients"))
}

fn one_shot_contract() -> Outcome {
    let reports = PROTOCOL_REPORTS.with(|r| r.borrow().clone());
    check(!reports.is_empty(), || "no runs recorded".into())?;
    for r in &reports {
        let m = r.per_client.len();
        check(r.trace.uploads() == m && r.uploads == m, || {
            format!("seed {}: {} uploads for {m} clients", r.seed, r.trace.uploads())
        })?;
        check(r.trace.exchanges_after_aggregation() == 0, || {
            format!("seed {}: exchanges after aggregation", r.seed)
        })?;
        check(r.trace.exchanges() == m, || {
            format!("seed {}: {} exchanges", r.seed, r.trace.exchanges())
        })?;
    }
    Ok(format!(
        "{} runs, each exactly M uploads and no later exchanges",
        reports.len()
    ))
}

fn cli_determinism() -> Outcome {
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_fuda"))
            .args(["run", "--seed", "5", "--format", "json"])
            .output()
            .map_err(|e| e.to_string())
    };
    let (a, b) = (run()?, run()?);
    check(a.status.success() && b.status.success(), || {
        String::from_utf8_lossy(&a.stderr).into_owned()
    })?;
    check(a.stdout == b.stdout, || "reports differ".into())?;
    Ok(format!("two runs, {} identical bytes", a.stdout.len()))
}

thread_local! {
    static PROTOCOL_REPORTS: std::cell::RefCell<Vec<fuda::harness::RunReport>> = const { std::cell::RefCell::new(Vec::new()) };
}

fn main() -> ExitCode {
    let cfg = ExperimentConfig::standard();
    let criteria: Vec<Criterion> = vec![
        ("gradient correctness", Box::new(gradient_correctness)),
        ("SEA closed form", Box::new(sea_closed_form)),
        (
            "clustered entropies give uniform weights",
            Box::new(clustered_entropies),
        ),
        ("loss reductions", Box::new(loss_reductions)),
        ("smoothing raises entropy", Box::new(smoothing_monotonicity)),
        ("ablation ordering", Box::new(|| ablation_ordering(&cfg))),
        ("SEA vs FedAvg", Box::new(|| aggregator_comparison(&cfg))),
        ("epsilon trend", Box::new(|| epsilon_trend(&cfg))),
        ("entropy-accuracy anticorrelation", Box::new(entropy_anticorrelation)),
        ("one-shot contract", Box::new(one_shot_contract)),
        ("CLI determinism", Box::new(cli_determinism)),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS [{:>2}] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{:>2}] {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
