use sha2::{Digest, Sha256};

use super::metrics::{accuracy, entropy_accuracy_correlation, mean_std};
use super::report::{ClientRow, RunMetrics, RunReport, Table, TableRow};
use super::{DataSource, ExperimentConfig};
use crate::aggregation::AggregatorKind;
use crate::data::{generate_domains, load_feature_file, to_hex, DomainDataset};
use crate::error::{FudaError, Result};
use crate::federation::{run_one_shot, ClientState, OneShotOutcome};
use crate::mspl::{MsplConfig, MsplLoss};

const CLIENT_STREAM: u64 = 1;
const ADAPT_STREAM: u64 = 2;

/// SplitMix64 of `seed` offset by `stream`; gives independent seeds for
/// the separate random consumers of one run.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Source and target domains for one seed. Synthetic data is regenerated
/// with `synthetic.seed ^ seed`; file data ignores the seed.
pub fn load_domains(cfg: &ExperimentConfig, seed: u64) -> Result<(Vec<DomainDataset>, DomainDataset)> {
    let (mut domains, target_idx) = match &cfg.data {
        DataSource::Synthetic(s) => {
            let mut s = s.clone();
            s.seed ^= seed;
            let n = s.num_domains;
            (generate_domains(&s)?, n - 1)
        }
        DataSource::Files { paths, target } => (
            paths.iter().map(load_feature_file).collect::<Result<Vec<_>>>()?,
            *target,
        ),
    };
    for d in &domains {
        if d.dim() != cfg.arch.input_dim || d.num_classes() != cfg.arch.num_classes {
            return Err(FudaError::Config(format!(
                "domain {} has {} features / {} classes, arch expects {} / {}",
                d.domain_id(),
                d.dim(),
                d.num_classes(),
                cfg.arch.input_dim,
                cfg.arch.num_classes
            )));
        }
    }
    let target = domains.remove(target_idx);
    Ok((domains, target))
}

/// Trained clients and evaluation data shared by every configuration that
/// runs on one seed.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub seed: u64,
    pub clients: Vec<ClientState>,
    /// Target domain with whatever labels it carries; only evaluation reads them.
    pub target: DomainDataset,
    pub dataset_hash: String,
}

/// Generate or load the domains and train every source client. All clients
/// start from the same seeded initialization.
pub fn prepare(cfg: &ExperimentConfig, seed: u64) -> Result<PreparedRun> {
    let (sources, target) = load_domains(cfg, seed)?;
    let mut hasher = Sha256::new();
    for d in sources.iter().chain(std::iter::once(&target)) {
        hasher.update(d.content_hash().as_bytes());
    }
    let dataset_hash = to_hex(&hasher.finalize());

    let mut train = cfg.client_train.clone();
    train.seed ^= derive_seed(seed, CLIENT_STREAM);
    let clients = sources
        .into_iter()
        .map(|ds| {
            let id = ds.domain_id().to_string();
            ClientState::train(id, ds, &cfg.arch, &train)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedRun {
        seed,
        clients,
        target,
        dataset_hash,
    })
}

/// Adaptation settings with the training seed mixed with the run seed.
pub fn seeded_mspl(mspl: &MsplConfig, seed: u64) -> MsplConfig {
    let mut m = mspl.clone();
    m.train.seed ^= derive_seed(seed, ADAPT_STREAM);
    m
}

/// Run the one-shot protocol on prepared clients and score the result.
pub fn evaluate(
    prep: &PreparedRun,
    cfg: &ExperimentConfig,
    aggregator: AggregatorKind,
    mspl: Option<&MsplConfig>,
) -> Result<(RunReport, OneShotOutcome)> {
    let seeded = mspl.map(|m| seeded_mspl(m, prep.seed));
    let unlabeled = prep.target.to_unlabeled();
    let outcome = run_one_shot(&prep.clients, &unlabeled, aggregator, seeded.as_ref())?;

    let labeled = prep.target.is_labeled();
    let score = |p| -> Result<Option<f64>> {
        if labeled {
            accuracy(p, &prep.target).map(Some)
        } else {
            Ok(None)
        }
    };
    let per_client = outcome
        .report
        .per_client
        .iter()
        .zip(&prep.clients)
        .map(|(r, c)| {
            Ok(ClientRow {
                id: r.id.clone(),
                mean_entropy: r.mean_entropy,
                weight_unscaled: r.weight_unscaled,
                weight_final: r.weight_final,
                sample_count: r.sample_count,
                target_accuracy: score(c.params())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs: Option<Vec<(f64, f64)>> = per_client
        .iter()
        .map(|c| c.target_accuracy.map(|a| (c.mean_entropy, a)))
        .collect();
    let correlation = pairs.and_then(|p| entropy_accuracy_correlation(&p).ok());
    let metrics = RunMetrics {
        global_accuracy_pre: score(&outcome.aggregated)?,
        global_accuracy_post: if seeded.is_some() {
            score(&outcome.global)?
        } else {
            None
        },
        entropy_accuracy_correlation: correlation,
    };
    let trace = outcome.report.trace.clone();
    let report = RunReport {
        seed: prep.seed,
        dataset_hash: prep.dataset_hash.clone(),
        target_domain: prep.target.domain_id().to_string(),
        aggregator,
        adaptation: seeded,
        per_client,
        metrics,
        uploads: trace.uploads(),
        exchanges_after_aggregation: trace.exchanges_after_aggregation(),
        trace,
        config: cfg.clone(),
    };
    Ok((report, outcome))
}

/// Full pipeline for one seed with the configured aggregator and adaptation.
pub fn run(cfg: &ExperimentConfig, seed: u64) -> Result<RunReport> {
    cfg.validate()?;
    let prep = prepare(cfg, seed)?;
    Ok(evaluate(&prep, cfg, cfg.aggregator, cfg.mspl.as_ref())?.0)
}

/// Final accuracy of a report: post-adaptation when adapted, else pre.
pub fn final_accuracy(report: &RunReport) -> Result<f64> {
    report
        .metrics
        .global_accuracy_post
        .or(report.metrics.global_accuracy_pre)
        .ok_or_else(|| FudaError::invalid("target domain is unlabeled; accuracy unavailable"))
}

/// One configuration evaluated by a table.
#[derive(Debug, Clone)]
pub struct Variant {
    pub name: String,
    pub parameter: Option<f64>,
    pub aggregator: AggregatorKind,
    pub mspl: Option<MsplConfig>,
}

impl Variant {
    fn new(name: &str, aggregator: AggregatorKind, mspl: Option<MsplConfig>) -> Self {
        Variant {
            name: name.to_string(),
            parameter: None,
            aggregator,
            mspl,
        }
    }
}

/// Evaluate every variant on every seed, reusing one set of trained
/// clients per seed. Also returns the per-seed run reports.
pub fn run_variants(cfg: &ExperimentConfig, title: &str, variants: &[Variant]) -> Result<(Table, Vec<Vec<RunReport>>)> {
    cfg.validate()?;
    let mut per_seed = vec![Vec::new(); variants.len()];
    let mut hashes = vec![Vec::new(); variants.len()];
    let mut reports = vec![Vec::new(); variants.len()];
    for &seed in &cfg.eval_seeds {
        let prep = prepare(cfg, seed)?;
        for (k, v) in variants.iter().enumerate() {
            let (report, _) = evaluate(&prep, cfg, v.aggregator, v.mspl.as_ref())?;
            per_seed[k].push(final_accuracy(&report)?);
            hashes[k].push(report.dataset_hash.clone());
            reports[k].push(report);
        }
    }
    let rows = variants
        .iter()
        .zip(per_seed)
        .zip(hashes)
        .map(|((v, accs), dataset_hashes)| {
            let (mean, std) = mean_std(&accs);
            TableRow {
                name: v.name.clone(),
                parameter: v.parameter,
                mean_accuracy: mean,
                std_accuracy: std,
                per_seed: accs,
                dataset_hashes,
            }
        })
        .collect();
    Ok((
        Table {
            title: title.to_string(),
            seeds: cfg.eval_seeds.clone(),
            rows,
        },
        reports,
    ))
}

pub const ROW_SEA_MSPL: &str = "SEA+MSPL";
pub const ROW_SEA_MSPL_CE: &str = "SEA+MSPL w/o SSCE";
pub const ROW_SEA: &str = "SEA";
pub const ROW_ENTROPY: &str = "EntropyUnscaled";
pub const ROW_UNIFORM: &str = "UniformAverage";
pub const ROW_FEDAVG: &str = "FedAvg";

pub fn ablation_variants(cfg: &ExperimentConfig) -> Vec<Variant> {
    let ssce = MsplConfig {
        loss: MsplLoss::Ssce,
        ..cfg.mspl_or_default()
    };
    let ce = MsplConfig {
        loss: MsplLoss::Ce,
        ..ssce.clone()
    };
    vec![
        Variant::new(ROW_SEA_MSPL, AggregatorKind::Sea, Some(ssce)),
        Variant::new(ROW_SEA_MSPL_CE, AggregatorKind::Sea, Some(ce)),
        Variant::new(ROW_SEA, AggregatorKind::Sea, None),
        Variant::new(ROW_ENTROPY, AggregatorKind::EntropyUnscaled, None),
        Variant::new(ROW_UNIFORM, AggregatorKind::UniformAverage, None),
    ]
}

/// Component ablation: SEA+MSPL, SEA+MSPL with hard CE, SEA alone,
/// unscaled entropy weights, and plain averaging.
pub fn run_ablation(cfg: &ExperimentConfig) -> Result<Table> {
    Ok(run_variants(cfg, "ablation", &ablation_variants(cfg))?.0)
}

/// Aggregator comparison without adaptation.
pub fn run_aggregator_comparison(cfg: &ExperimentConfig) -> Result<Table> {
    let variants = [
        Variant::new(ROW_UNIFORM, AggregatorKind::UniformAverage, None),
        Variant::new(ROW_FEDAVG, AggregatorKind::SampleCount, None),
        Variant::new(ROW_ENTROPY, AggregatorKind::EntropyUnscaled, None),
        Variant::new(ROW_SEA, AggregatorKind::Sea, None),
    ];
    Ok(run_variants(cfg, "aggregators", &variants)?.0)
}

/// Post-adaptation accuracy of SEA+MSPL(SSCE) for each epsilon.
pub fn run_epsilon_sweep(cfg: &ExperimentConfig, epsilons: &[f64]) -> Result<Table> {
    if let Some(bad) = epsilons.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return Err(FudaError::Config(format!("epsilon {bad} outside [0, 1]")));
    }
    let base = MsplConfig {
        loss: MsplLoss::Ssce,
        ..cfg.mspl_or_default()
    };
    let variants: Vec<Variant> = epsilons
        .iter()
        .map(|&eps| Variant {
            name: format!("eps={eps}"),
            parameter: Some(eps),
            aggregator: cfg.aggregator,
            mspl: Some(MsplConfig {
                epsilon: eps,
                ..base.clone()
            }),
        })
        .collect();
    Ok(run_variants(cfg, "epsilon_sweep", &variants)?.0)
}

/// Pearson r over `(entropy, target accuracy)` of every client in every report.
pub fn pooled_entropy_accuracy_correlation(reports: &[RunReport]) -> Result<f64> {
    let pairs: Vec<(f64, f64)> = reports
        .iter()
        .flat_map(|r| r.per_client.iter())
        .filter_map(|c| c.target_accuracy.map(|a| (c.mean_entropy, a)))
        .collect();
    entropy_accuracy_correlation(&pairs)
}
