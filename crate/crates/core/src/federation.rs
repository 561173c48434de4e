//! One-shot federated protocol: clients train locally, each uploads its
//! trained parameters exactly once, and the server builds (and optionally
//! adapts) the global model without any further exchange.
//!
//! Transport is simulated in-process; every client/server message is
//! recorded in a [`ProtocolTrace`].

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate, compute_weights, mean_entropy, AggregationWeights, AggregatorKind, EntropyStats};
use crate::data::{DomainDataset, UnlabeledDataset};
use crate::error::{FudaError, Result};
use crate::mspl::{adapt_global, generate_pseudo_labels, MsplConfig, PseudoLabelSet};
use crate::nn::{fit, ArchitectureSpec, LossKind, ModelParams, Targets, TrainConfig};

/// Train a source model from the seeded initialization with hard-label
/// cross-entropy.
pub fn train_client(dataset: &DomainDataset, arch: &ArchitectureSpec, cfg: &TrainConfig) -> Result<ModelParams> {
    arch.validate()?;
    let labels = dataset.require_labels()?;
    if dataset.num_classes() != arch.num_classes {
        return Err(FudaError::dim(format!(
            "dataset has {} classes, architecture {}",
            dataset.num_classes(),
            arch.num_classes
        )));
    }
    if dataset.dim() != arch.input_dim {
        return Err(FudaError::dim(format!(
            "dataset has {} features, architecture expects {}",
            dataset.dim(),
            arch.input_dim
        )));
    }
    let mut params = ModelParams::init(arch, cfg.seed);
    fit(
        &mut params,
        dataset.features(),
        &Targets::Classes(labels.to_vec()),
        LossKind::HardCe,
        cfg,
    )?;
    Ok(params)
}

/// A client whose local training has finished. Its parameters cannot be
/// changed afterwards.
#[derive(Debug, Clone)]
pub struct ClientState {
    client_id: String,
    dataset: DomainDataset,
    params: ModelParams,
}

impl ClientState {
    pub fn train(
        client_id: impl Into<String>,
        dataset: DomainDataset,
        arch: &ArchitectureSpec,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        let params = train_client(&dataset, arch, cfg)?;
        Ok(ClientState {
            client_id: client_id.into(),
            dataset,
            params,
        })
    }

    /// Wrap parameters trained elsewhere (e.g. loaded from disk).
    pub fn from_trained(client_id: impl Into<String>, dataset: DomainDataset, params: ModelParams) -> Result<Self> {
        params.validate()?;
        Ok(ClientState {
            client_id: client_id.into(),
            dataset,
            params,
        })
    }

    pub fn client_id(&self) -> &str {
        &self.client_id
    }

    pub fn dataset(&self) -> &DomainDataset {
        &self.dataset
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn sample_count(&self) -> usize {
        self.dataset.len()
    }

    /// The single message a client sends: its trained parameters and sample count.
    pub fn upload(&self) -> Upload {
        Upload {
            client_id: self.client_id.clone(),
            params: self.params.clone(),
            sample_count: self.sample_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Upload {
    pub client_id: String,
    pub params: ModelParams,
    pub sample_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    /// Client -> server parameter upload.
    Upload {
        client_id: String,
        param_count: usize,
        sample_count: usize,
    },
    /// Server-local: target entropies computed and weights assigned.
    Aggregate { strategy: AggregatorKind },
    /// Server-local: pseudo labels generated and global model adapted.
    Adapt { loss: String, epsilon: f64, epochs: usize },
}

impl TraceEvent {
    /// Whether the event crosses the client/server boundary.
    pub fn is_exchange(&self) -> bool {
        matches!(self, TraceEvent::Upload { .. })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTrace {
    pub events: Vec<TraceEvent>,
}

impl ProtocolTrace {
    pub fn uploads(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, TraceEvent::Upload { .. }))
            .count()
    }

    pub fn exchanges(&self) -> usize {
        self.events.iter().filter(|e| e.is_exchange()).count()
    }

    /// Exchanges recorded after the server started aggregating.
    pub fn exchanges_after_aggregation(&self) -> usize {
        match self.events.iter().position(|e| !e.is_exchange()) {
            Some(first_local) => self.events[first_local..].iter().filter(|e| e.is_exchange()).count(),
            None => 0,
        }
    }
}

/// Server side of the protocol. Accepts one upload per client until
/// aggregation starts, after which the round is closed.
#[derive(Debug, Clone)]
pub struct ServerState {
    received: Vec<Upload>,
    target: UnlabeledDataset,
    architecture: Option<ArchitectureSpec>,
    global: Option<ModelParams>,
    closed: bool,
    trace: ProtocolTrace,
}

#[derive(Debug, Clone)]
pub struct AggregationOutcome {
    pub entropies: EntropyStats,
    /// Plain inverse-entropy weights, reported for every strategy.
    pub unscaled: AggregationWeights,
    pub weights: AggregationWeights,
    pub global: ModelParams,
}

impl ServerState {
    pub fn new(target: UnlabeledDataset) -> Self {
        ServerState {
            received: Vec::new(),
            target,
            architecture: None,
            global: None,
            closed: false,
            trace: ProtocolTrace::default(),
        }
    }

    pub fn received(&self) -> &[Upload] {
        &self.received
    }

    pub fn target(&self) -> &UnlabeledDataset {
        &self.target
    }

    pub fn global(&self) -> Option<&ModelParams> {
        self.global.as_ref()
    }

    pub fn trace(&self) -> &ProtocolTrace {
        &self.trace
    }

    pub fn receive(&mut self, upload: Upload) -> Result<()> {
        if self.closed {
            return Err(FudaError::Protocol(format!(
                "upload from {} after the round closed",
                upload.client_id
            )));
        }
        if self.received.iter().any(|u| u.client_id == upload.client_id) {
            return Err(FudaError::Protocol(format!(
                "duplicate upload from {}",
                upload.client_id
            )));
        }
        let arch = upload.params.validate()?;
        match &self.architecture {
            Some(shared) if *shared != arch => {
                return Err(FudaError::Protocol(format!(
                    "client {} uses a different architecture",
                    upload.client_id
                )));
            }
            None => {
                if arch.input_dim != self.target.dim() || arch.num_classes != self.target.num_classes() {
                    return Err(FudaError::Protocol(format!(
                        "client {} architecture does not fit the target domain",
                        upload.client_id
                    )));
                }
                self.architecture = Some(arch);
            }
            _ => {}
        }
        self.trace.events.push(TraceEvent::Upload {
            client_id: upload.client_id.clone(),
            param_count: upload.params.param_count(),
            sample_count: upload.sample_count,
        });
        self.received.push(upload);
        Ok(())
    }

    /// Close the round and build the global model.
    pub fn aggregate(&mut self, kind: AggregatorKind) -> Result<AggregationOutcome> {
        if self.received.is_empty() {
            return Err(FudaError::Protocol("no uploads received".into()));
        }
        self.closed = true;
        let ids = self.received.iter().map(|u| u.client_id.clone());
        let entropies: Vec<f64> = self
            .received
            .iter()
            .map(|u| mean_entropy(&u.params, &self.target))
            .collect::<Result<_>>()?;
        let stats = EntropyStats::from_values(ids, &entropies);
        let counts: Vec<usize> = self.received.iter().map(|u| u.sample_count).collect();
        let unscaled = compute_weights(&stats, &counts, AggregatorKind::EntropyUnscaled)?;
        let weights = compute_weights(&stats, &counts, kind)?;
        let models: Vec<ModelParams> = self.received.iter().map(|u| u.params.clone()).collect();
        let global = aggregate(&models, &weights)?;
        self.trace.events.push(TraceEvent::Aggregate { strategy: kind });
        self.global = Some(global.clone());
        Ok(AggregationOutcome {
            entropies: stats,
            unscaled,
            weights,
            global,
        })
    }

    /// Pseudo-label the target with the uploaded source models and
    /// fine-tune the current global model on it.
    pub fn adapt(&mut self, cfg: &MsplConfig) -> Result<(ModelParams, PseudoLabelSet)> {
        let global = self
            .global
            .as_ref()
            .ok_or_else(|| FudaError::Protocol("adaptation before aggregation".into()))?;
        let models: Vec<ModelParams> = self.received.iter().map(|u| u.params.clone()).collect();
        let pl = generate_pseudo_labels(&models, &self.target)?;
        let adapted = adapt_global(global, &self.target, &pl, cfg)?;
        self.trace.events.push(TraceEvent::Adapt {
            loss: cfg.loss.name().to_string(),
            epsilon: cfg.epsilon,
            epochs: cfg.train.epochs,
        });
        self.global = Some(adapted.clone());
        Ok((adapted, pl))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientReport {
    pub id: String,
    pub mean_entropy: f64,
    pub weight_unscaled: f64,
    pub weight_final: f64,
    pub sample_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationReport {
    pub aggregator: AggregatorKind,
    pub adaptation: Option<MsplConfig>,
    pub per_client: Vec<ClientReport>,
    pub trace: ProtocolTrace,
}

#[derive(Debug, Clone)]
pub struct OneShotOutcome {
    /// Final global model (adapted when adaptation was requested).
    pub global: ModelParams,
    /// Global model straight after aggregation.
    pub aggregated: ModelParams,
    pub pseudo_labels: Option<PseudoLabelSet>,
    pub report: FederationReport,
}

/// Run the full one-shot round: upload, aggregate, optionally adapt.
pub fn run_one_shot(
    clients: &[ClientState],
    target: &UnlabeledDataset,
    aggregator: AggregatorKind,
    adapt: Option<&MsplConfig>,
) -> Result<OneShotOutcome> {
    if clients.is_empty() {
        return Err(FudaError::Protocol("one-shot round needs at least one client".into()));
    }
    let mut server = ServerState::new(target.clone());
    for client in clients {
        server.receive(client.upload())?;
    }
    let agg = server.aggregate(aggregator)?;
    let (global, pseudo_labels) = match adapt {
        Some(cfg) => {
            let (g, pl) = server.adapt(cfg)?;
            (g, Some(pl))
        }
        None => (agg.global.clone(), None),
    };
    let per_client = agg
        .entropies
        .per_client
        .iter()
        .zip(agg.unscaled.values())
        .zip(agg.weights.values())
        .zip(server.received())
        .map(|(((e, unscaled), w), u)| ClientReport {
            id: e.client_id.clone(),
            mean_entropy: e.mean_entropy,
            weight_unscaled: unscaled,
            weight_final: w,
            sample_count: u.sample_count,
        })
        .collect();
    Ok(OneShotOutcome {
        global,
        aggregated: agg.global,
        pseudo_labels,
        report: FederationReport {
            aggregator,
            adaptation: adapt.cloned(),
            per_client,
            trace: server.trace().clone(),
        },
    })
}

/// On-disk form of a client's uploaded model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub client_id: String,
    pub sample_count: usize,
    pub params: ModelParams,
}

impl ModelFile {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)? + "\n";
        fs::write(path, text).map_err(|e| FudaError::io(path, e))
    }

    /// Reads and shape-checks a model file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| FudaError::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text)?;
        file.params.validate()?;
        if !file.params.is_finite() {
            return Err(FudaError::Numeric(format!("{}: non-finite parameters", path.display())));
        }
        Ok(file)
    }

    pub fn into_upload(self) -> Upload {
        Upload {
            client_id: self.client_id,
            params: self.params,
            sample_count: self.sample_count,
        }
    }
}

impl From<Upload> for ModelFile {
    fn from(u: Upload) -> Self {
        ModelFile {
            client_id: u.client_id,
            sample_count: u.sample_count,
            params: u.params,
        }
    }
}
