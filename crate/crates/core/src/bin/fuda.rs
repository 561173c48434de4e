use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use fuda::aggregation::AggregatorKind;
use fuda::data::{load_feature_file, save_feature_file, save_probability_rows, DomainDataset};
use fuda::federation::{ClientReport, ModelFile, ServerState};
use fuda::harness::{
    accuracy, load_domains, prepare, run, run_ablation, run_aggregator_comparison, run_epsilon_sweep, seeded_mspl,
    sig6, DataSource, ExperimentConfig,
};
use fuda::mspl::{adapt_global, generate_pseudo_labels, MsplConfig, MsplLoss};
use fuda::{FudaError, Result};

#[derive(Parser)]
#[command(name = "fuda", version, about = "One-shot federated unsupervised domain adaptation")]
struct Cli {
    /// Experiment config (JSON). Defaults to the standard synthetic benchmark.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run seed. Defaults to the first of the config's eval seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory. Reports go to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Args, Default)]
struct MsplArgs {
    /// Label-smoothing factor for SSCE.
    #[arg(long)]
    epsilon: Option<f64>,

    /// Adaptation loss.
    #[arg(long, value_parser = parse_loss)]
    mspl_loss: Option<MsplLoss>,
}

impl MsplArgs {
    fn apply(&self, base: MsplConfig) -> MsplConfig {
        MsplConfig {
            epsilon: self.epsilon.unwrap_or(base.epsilon),
            loss: self.mspl_loss.unwrap_or(base.loss),
            ..base
        }
    }

    fn is_set(&self) -> bool {
        self.epsilon.is_some() || self.mspl_loss.is_some()
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write every domain as a feature file plus a config that reads them.
    GenData,

    /// Train one model per source domain and write the model files.
    TrainClients,

    /// Aggregate client model files into a global model.
    Aggregate {
        #[arg(long, num_args = 1.., required = true)]
        models: Vec<PathBuf>,

        /// Target feature file. Defaults to the config's target domain.
        #[arg(long)]
        target: Option<PathBuf>,

        #[arg(long, value_parser = parse_aggregator)]
        aggregator: Option<AggregatorKind>,
    },

    /// Adapt a global model on the target with pseudo labels from the client models.
    Adapt {
        #[arg(long, num_args = 1.., required = true)]
        models: Vec<PathBuf>,

        #[arg(long)]
        global: PathBuf,

        #[arg(long)]
        target: Option<PathBuf>,

        #[command(flatten)]
        mspl: MsplArgs,

        /// Write the (unsmoothed) pseudo-label distributions here.
        #[arg(long)]
        dump_pseudo: Option<PathBuf>,
    },

    /// Full pipeline for one seed.
    Run {
        #[arg(long, value_parser = parse_aggregator)]
        aggregator: Option<AggregatorKind>,

        #[command(flatten)]
        mspl: MsplArgs,

        /// Skip adaptation and report the aggregated model.
        #[arg(long, conflicts_with_all = ["epsilon", "mspl_loss"])]
        no_adapt: bool,
    },

    /// Component ablation table over the eval seeds.
    Ablate {
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,

        #[command(flatten)]
        mspl: MsplArgs,

        /// Compare aggregators without adaptation instead.
        #[arg(long)]
        aggregators: bool,
    },

    /// SSCE accuracy for each epsilon over the eval seeds.
    SweepEpsilon {
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5,0.7,0.9,0.99")]
        epsilons: Vec<f64>,

        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
}

fn parse_aggregator(s: &str) -> std::result::Result<AggregatorKind, String> {
    s.parse().map_err(|e: FudaError| e.to_string())
}

fn parse_loss(s: &str) -> std::result::Result<MsplLoss, String> {
    s.parse().map_err(|e: FudaError| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fuda: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::standard(),
    };
    let seed = cli.seed.unwrap_or(cfg.eval_seeds[0]);
    let out = Output {
        dir: cli.out.clone(),
        format: cli.format,
    };
    match &cli.command {
        Command::GenData => gen_data(&cfg, seed, &out),
        Command::TrainClients => train_clients(&cfg, seed, &out),
        Command::Aggregate {
            models,
            target,
            aggregator,
        } => aggregate_cmd(
            &cfg,
            seed,
            &out,
            models,
            target.as_deref(),
            aggregator.unwrap_or(cfg.aggregator),
        ),
        Command::Adapt {
            models,
            global,
            target,
            mspl,
            dump_pseudo,
        } => {
            let m = mspl.apply(cfg.mspl_or_default());
            m.validate().map_err(|e| FudaError::Config(e.to_string()))?;
            adapt_cmd(
                &cfg,
                seed,
                &out,
                models,
                global,
                target.as_deref(),
                &m,
                dump_pseudo.as_deref(),
            )
        }
        Command::Run {
            aggregator,
            mspl,
            no_adapt,
        } => {
            if let Some(a) = aggregator {
                cfg.aggregator = *a;
            }
            if *no_adapt {
                cfg.mspl = None;
            } else if mspl.is_set() || cfg.mspl.is_some() {
                cfg.mspl = Some(mspl.apply(cfg.mspl_or_default()));
            }
            cfg.validate()?;
            let report = run(&cfg, seed)?;
            let text = match out.format {
                Format::Json => report.to_json()?,
                Format::Csv => report.to_csv()?,
            };
            out.emit(&format!("run_{seed}"), &text)
        }
        Command::Ablate {
            seeds,
            mspl,
            aggregators,
        } => {
            apply_seeds(&mut cfg, seeds.as_ref(), cli.seed);
            if mspl.is_set() {
                cfg.mspl = Some(mspl.apply(cfg.mspl_or_default()));
            }
            cfg.validate()?;
            let (stem, table) = if *aggregators {
                ("aggregators", run_aggregator_comparison(&cfg)?)
            } else {
                ("ablation", run_ablation(&cfg)?)
            };
            let text = match out.format {
                Format::Json => table.to_json()?,
                Format::Csv => table.to_csv()?,
            };
            out.emit(stem, &text)
        }
        Command::SweepEpsilon { epsilons, seeds } => {
            apply_seeds(&mut cfg, seeds.as_ref(), cli.seed);
            cfg.validate()?;
            let table = run_epsilon_sweep(&cfg, epsilons)?;
            let text = match out.format {
                Format::Json => table.to_json()?,
                Format::Csv => table.to_csv()?,
            };
            out.emit("epsilon_sweep", &text)
        }
    }
}

fn apply_seeds(cfg: &mut ExperimentConfig, seeds: Option<&Vec<u64>>, single: Option<u64>) {
    if let Some(s) = seeds {
        cfg.eval_seeds = s.clone();
    } else if let Some(s) = single {
        cfg.eval_seeds = vec![s];
    }
}

struct Output {
    dir: Option<PathBuf>,
    format: Format,
}

impl Output {
    fn require_dir(&self, what: &str) -> Result<&Path> {
        let dir = self
            .dir
            .as_deref()
            .ok_or_else(|| FudaError::Config(format!("{what} needs --out <dir>")))?;
        fs::create_dir_all(dir).map_err(|e| FudaError::io(dir, e))?;
        Ok(dir)
    }

    fn emit(&self, stem: &str, text: &str) -> Result<()> {
        match &self.dir {
            Some(dir) => {
                fs::create_dir_all(dir).map_err(|e| FudaError::io(dir, e))?;
                let path = dir.join(format!("{stem}.{}", self.format.ext()));
                fs::write(&path, text).map_err(|e| FudaError::io(&path, e))?;
                println!("{}", path.display());
                Ok(())
            }
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout
                    .write_all(text.as_bytes())
                    .map_err(|e| FudaError::io("<stdout>", e))
            }
        }
    }

    fn emit_records(&self, stem: &str, value: &impl Serialize, rows: &[(String, String, f64)]) -> Result<()> {
        let text = match self.format {
            Format::Json => serde_json::to_string_pretty(value)? + "\n",
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                let csv_err = |e: csv::Error| FudaError::invalid(e.to_string());
                w.write_record(["name", "field", "value"]).map_err(csv_err)?;
                for (name, field, v) in rows {
                    w.write_record([name.as_str(), field.as_str(), sig6(*v).as_str()])
                        .map_err(csv_err)?;
                }
                String::from_utf8(w.into_inner().map_err(|e| FudaError::invalid(e.to_string()))?)
                    .map_err(|e| FudaError::invalid(e.to_string()))?
            }
        };
        self.emit(stem, &text)
    }
}

fn gen_data(cfg: &ExperimentConfig, seed: u64, out: &Output) -> Result<()> {
    let dir = out.require_dir("gen-data")?;
    let (sources, target) = load_domains(cfg, seed)?;
    let mut paths = Vec::new();
    for d in sources.iter().chain(std::iter::once(&target)) {
        let path = dir.join(format!("{}.feat", d.domain_id()));
        save_feature_file(d, &path)?;
        println!("{}", path.display());
        paths.push(path);
    }
    let file_cfg = ExperimentConfig {
        data: DataSource::Files {
            target: paths.len() - 1,
            paths,
        },
        eval_seeds: vec![seed],
        ..cfg.clone()
    };
    let path = dir.join("experiment.json");
    fs::write(&path, serde_json::to_string_pretty(&file_cfg)? + "\n").map_err(|e| FudaError::io(&path, e))?;
    println!("{}", path.display());
    Ok(())
}

fn train_clients(cfg: &ExperimentConfig, seed: u64, out: &Output) -> Result<()> {
    let dir = out.require_dir("train-clients")?;
    let prep = prepare(cfg, seed)?;
    for c in &prep.clients {
        let path = dir.join(format!("{}.model.json", c.client_id()));
        ModelFile::from(c.upload()).save(&path)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn target_domain(cfg: &ExperimentConfig, seed: u64, path: Option<&Path>) -> Result<DomainDataset> {
    match path {
        Some(p) => load_feature_file(p),
        None => Ok(load_domains(cfg, seed)?.1),
    }
}

fn score(model: &fuda::nn::ModelParams, target: &DomainDataset) -> Result<Option<f64>> {
    if target.is_labeled() {
        accuracy(model, target).map(Some)
    } else {
        Ok(None)
    }
}

#[derive(Serialize)]
struct AggregateReport {
    aggregator: AggregatorKind,
    target_domain: String,
    per_client: Vec<ClientReport>,
    global_accuracy: Option<f64>,
}

fn aggregate_cmd(
    cfg: &ExperimentConfig,
    seed: u64,
    out: &Output,
    models: &[PathBuf],
    target: Option<&Path>,
    kind: AggregatorKind,
) -> Result<()> {
    let dir = out.require_dir("aggregate")?;
    let target = target_domain(cfg, seed, target)?;
    let mut server = ServerState::new(target.to_unlabeled());
    let mut total = 0;
    for p in models {
        let file = ModelFile::load(p)?;
        total += file.sample_count;
        server.receive(file.into_upload())?;
    }
    let outcome = server.aggregate(kind)?;
    let per_client: Vec<ClientReport> = outcome
        .entropies
        .per_client
        .iter()
        .zip(outcome.unscaled.values())
        .zip(outcome.weights.values())
        .zip(server.received())
        .map(|(((e, unscaled), w), u)| ClientReport {
            id: e.client_id.clone(),
            mean_entropy: e.mean_entropy,
            weight_unscaled: unscaled,
            weight_final: w,
            sample_count: u.sample_count,
        })
        .collect();
    let path = dir.join("global.model.json");
    ModelFile {
        client_id: "global".into(),
        sample_count: total,
        params: outcome.global.clone(),
    }
    .save(&path)?;
    println!("{}", path.display());

    let report = AggregateReport {
        aggregator: kind,
        target_domain: target.domain_id().to_string(),
        global_accuracy: score(&outcome.global, &target)?,
        per_client,
    };
    let mut rows = Vec::new();
    for c in &report.per_client {
        rows.push((c.id.clone(), "mean_entropy".into(), c.mean_entropy));
        rows.push((c.id.clone(), "weight_unscaled".into(), c.weight_unscaled));
        rows.push((c.id.clone(), "weight_final".into(), c.weight_final));
    }
    if let Some(a) = report.global_accuracy {
        rows.push(("global".into(), "accuracy".into(), a));
    }
    out.emit_records("aggregate", &report, &rows)
}

#[derive(Serialize)]
struct AdaptReport {
    adaptation: MsplConfig,
    target_domain: String,
    accuracy_pre: Option<f64>,
    accuracy_post: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
fn adapt_cmd(
    cfg: &ExperimentConfig,
    seed: u64,
    out: &Output,
    models: &[PathBuf],
    global: &Path,
    target: Option<&Path>,
    mspl: &MsplConfig,
    dump_pseudo: Option<&Path>,
) -> Result<()> {
    let dir = out.require_dir("adapt")?;
    let target = target_domain(cfg, seed, target)?;
    let unlabeled = target.to_unlabeled();
    let sources = models
        .iter()
        .map(|p| ModelFile::load(p).map(|f| f.params))
        .collect::<Result<Vec<_>>>()?;
    let global = ModelFile::load(global)?;
    let pl = generate_pseudo_labels(&sources, &unlabeled)?;
    if let Some(p) = dump_pseudo {
        save_probability_rows(target.domain_id(), &pl.per_sample, p)?;
    }
    let seeded = seeded_mspl(mspl, seed);
    let adapted = adapt_global(&global.params, &unlabeled, &pl, &seeded)?;
    let path = dir.join("adapted.model.json");
    ModelFile {
        params: adapted.clone(),
        ..global.clone()
    }
    .save(&path)?;
    println!("{}", path.display());

    let report = AdaptReport {
        adaptation: seeded,
        target_domain: target.domain_id().to_string(),
        accuracy_pre: score(&global.params, &target)?,
        accuracy_post: score(&adapted, &target)?,
    };
    let mut rows = vec![("adaptation".to_string(), "epsilon".to_string(), mspl.epsilon)];
    if let (Some(pre), Some(post)) = (report.accuracy_pre, report.accuracy_post) {
        rows.push(("global".into(), "accuracy_pre".into(), pre));
        rows.push(("global".into(), "accuracy_post".into(), post));
    }
    out.emit_records("adapt", &report, &rows)
}
