use fuda::aggregation::AggregatorKind;
use fuda::data::{generate_domains, DomainDataset, SyntheticShiftConfig, UnlabeledDataset};
use fuda::federation::{run_one_shot, train_client, ClientState, ServerState, TraceEvent};
use fuda::harness::accuracy;
use fuda::mspl::MsplConfig;
use fuda::nn::{ArchitectureSpec, Matrix, ModelParams, TrainConfig};
use fuda::FudaError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn separable(seed: u64, n: usize) -> DomainDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    while rows.len() < n {
        let p = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let s: f64 = p[0] + 0.5 * p[1];
        if s.abs() < 0.5 {
            continue;
        }
        labels.push(usize::from(s > 0.0));
        rows.push(p);
    }
    DomainDataset::new("sep", Matrix::from_rows(&rows).unwrap(), Some(labels), 2).unwrap()
}

/// Perceptron run to convergence: proves the data is linearly separable.
fn perceptron_separates(ds: &DomainDataset) -> bool {
    let (x, y) = (ds.features(), ds.labels().unwrap());
    let mut w = [0.0; 3];
    for _ in 0..1000 {
        let mut mistakes = 0;
        for (i, &label) in y.iter().enumerate() {
            let r = x.row(i);
            let t = if label == 1 { 1.0 } else { -1.0 };
            if t * (w[0] * r[0] + w[1] * r[1] + w[2]) <= 0.0 {
                w[0] += t * r[0];
                w[1] += t * r[1];
                w[2] += t;
                mistakes += 1;
            }
        }
        if mistakes == 0 {
            return true;
        }
    }
    false
}

fn small_recipe(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        ..TrainConfig::client_default()
    }
}

#[test]
fn single_client_learns_separable_data() {
    let ds = separable(1, 200);
    assert!(perceptron_separates(&ds));
    let arch = ArchitectureSpec::new(2, vec![8], 2).unwrap();
    let params = train_client(&ds, &arch, &small_recipe(50)).unwrap();
    let acc = accuracy(&params, &ds).unwrap();
    assert!(acc >= 0.99, "accuracy {acc}");
}

#[test]
fn zero_epochs_keep_the_initialization() {
    let ds = separable(2, 50);
    let arch = ArchitectureSpec::new(2, vec![5], 2).unwrap();
    let cfg = small_recipe(0).with_seed(17);
    assert_eq!(train_client(&ds, &arch, &cfg).unwrap(), ModelParams::init(&arch, 17));
}

#[test]
fn client_training_is_bitwise_deterministic() {
    let ds = separable(3, 80);
    let arch = ArchitectureSpec::new(2, vec![6, 4], 2).unwrap();
    let a = train_client(&ds, &arch, &small_recipe(7)).unwrap();
    let b = train_client(&ds, &arch, &small_recipe(7)).unwrap();
    assert!(a.values().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn training_rejects_mismatched_shapes_and_missing_labels() {
    let ds = separable(4, 20);
    let wrong_dim = ArchitectureSpec::new(3, vec![4], 2).unwrap();
    assert!(matches!(
        train_client(&ds, &wrong_dim, &small_recipe(1)),
        Err(FudaError::Dimension(_))
    ));
    let unlabeled = DomainDataset::new("u", ds.features().clone(), None, 2).unwrap();
    let arch = ArchitectureSpec::new(2, vec![4], 2).unwrap();
    assert!(train_client(&unlabeled, &arch, &small_recipe(1)).is_err());
}

fn trained_clients(seed: u64) -> (Vec<ClientState>, DomainDataset) {
    let cfg = SyntheticShiftConfig {
        samples_per_domain: 120,
        ..SyntheticShiftConfig::standard().with_seed(seed)
    };
    let mut domains = generate_domains(&cfg).unwrap();
    let target = domains.pop().unwrap();
    let arch = ArchitectureSpec::desk_default(cfg.feature_dim, cfg.num_classes);
    let clients = domains
        .into_iter()
        .map(|d| ClientState::train(d.domain_id().to_string(), d, &arch, &small_recipe(3)).unwrap())
        .collect();
    (clients, target)
}

fn quick_mspl() -> MsplConfig {
    let mut m = MsplConfig::default();
    m.train.epochs = 2;
    m
}

#[test]
fn single_client_uniform_round_returns_its_model() {
    let (clients, target) = trained_clients(5);
    let one = &clients[..1];
    let out = run_one_shot(one, &target.to_unlabeled(), AggregatorKind::UniformAverage, None).unwrap();
    assert_eq!(&out.global, one[0].params());
    for kind in AggregatorKind::ALL {
        let out = run_one_shot(one, &target.to_unlabeled(), kind, None).unwrap();
        assert_eq!(out.report.per_client[0].weight_final, 1.0);
        assert_eq!(&out.aggregated, one[0].params());
    }
}

#[test]
fn identical_clients_aggregate_to_the_shared_model() {
    let (clients, target) = trained_clients(6);
    let base = &clients[0];
    let copies: Vec<ClientState> = (0..3)
        .map(|i| ClientState::from_trained(format!("c{i}"), base.dataset().clone(), base.params().clone()).unwrap())
        .collect();
    for kind in AggregatorKind::ALL {
        let out = run_one_shot(&copies, &target.to_unlabeled(), kind, None).unwrap();
        for (a, b) in out.global.values().zip(base.params().values()) {
            assert!((a - b).abs() <= 1e-12, "{kind:?}");
        }
    }
}

#[test]
fn round_reproduces_bit_for_bit() {
    let run = || {
        let (clients, target) = trained_clients(7);
        run_one_shot(
            &clients,
            &target.to_unlabeled(),
            AggregatorKind::Sea,
            Some(&quick_mspl()),
        )
        .unwrap()
    };
    let (a, b) = (run(), run());
    assert!(a
        .global
        .values()
        .zip(b.global.values())
        .all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(a.report, b.report);
}

#[test]
fn trace_is_one_upload_per_client_then_silence() {
    let (clients, target) = trained_clients(8);
    let out = run_one_shot(
        &clients,
        &target.to_unlabeled(),
        AggregatorKind::Sea,
        Some(&quick_mspl()),
    )
    .unwrap();
    let trace = &out.report.trace;
    assert_eq!(trace.uploads(), clients.len());
    assert_eq!(trace.exchanges(), clients.len());
    assert_eq!(trace.exchanges_after_aggregation(), 0);
    let kinds: Vec<&str> = trace
        .events
        .iter()
        .map(|e| match e {
            TraceEvent::Upload { .. } => "up",
            TraceEvent::Aggregate { .. } => "agg",
            TraceEvent::Adapt { .. } => "adapt",
        })
        .collect();
    assert_eq!(kinds, ["up", "up", "up", "agg", "adapt"]);
    let arch = clients[0].params().architecture().unwrap();
    assert_eq!(out.global.architecture().unwrap(), arch);
    assert!(clients.iter().all(|c| c.params().architecture().unwrap() == arch));
}

#[test]
fn target_labels_are_never_needed() {
    let (clients, target) = trained_clients(9);
    let stripped = UnlabeledDataset::new("t", target.features().clone(), target.num_classes()).unwrap();
    let a = run_one_shot(&clients, &stripped, AggregatorKind::Sea, Some(&quick_mspl())).unwrap();
    let b = run_one_shot(
        &clients,
        &target.to_unlabeled(),
        AggregatorKind::Sea,
        Some(&quick_mspl()),
    )
    .unwrap();
    assert_eq!(a.global, b.global);
}

#[test]
fn client_order_does_not_change_the_aggregate() {
    let (clients, target) = trained_clients(10);
    let mut reversed = clients.clone();
    reversed.reverse();
    for kind in AggregatorKind::ALL {
        let a = run_one_shot(&clients, &target.to_unlabeled(), kind, None).unwrap();
        let b = run_one_shot(&reversed, &target.to_unlabeled(), kind, None).unwrap();
        for (x, y) in a.global.values().zip(b.global.values()) {
            assert!((x - y).abs() <= 1e-12, "{kind:?}");
        }
    }
}

#[test]
fn server_enforces_the_one_shot_protocol() {
    let (clients, target) = trained_clients(11);
    let mut server = ServerState::new(target.to_unlabeled());
    assert!(matches!(
        server.aggregate(AggregatorKind::Sea),
        Err(FudaError::Protocol(_))
    ));
    assert!(matches!(server.adapt(&quick_mspl()), Err(FudaError::Protocol(_))));
    server.receive(clients[0].upload()).unwrap();
    assert!(matches!(
        server.receive(clients[0].upload()),
        Err(FudaError::Protocol(_))
    ));
    let foreign = ArchitectureSpec::new(16, vec![8], 5).unwrap();
    let mut odd = clients[1].upload();
    odd.params = ModelParams::init(&foreign, 0);
    assert!(matches!(server.receive(odd), Err(FudaError::Protocol(_))));
    server.receive(clients[1].upload()).unwrap();
    server.aggregate(AggregatorKind::Sea).unwrap();
    assert!(matches!(
        server.receive(clients[2].upload()),
        Err(FudaError::Protocol(_))
    ));
    assert_eq!(server.trace().uploads(), 2);
}
