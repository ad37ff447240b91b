use invopt_core::network::{generate, BomNetwork, GeneratorSpec, Topology};
use invopt_core::opt::{
    fista, read_epoch_log, run, ssgd, two_stage, EpochRecord, JsonLinesSink, Method, OptConfig, Problem, RunSpec,
    StepSchedule,
};
use invopt_core::sim::{CostParams, PolicyVector};
use invopt_core::stochastic::{DemandModel, LeadTimeModel, ScenarioModels};
use invopt_core::Error;

fn single_node(demand: u64) -> (BomNetwork, ScenarioModels, CostParams) {
    (
        BomNetwork::new(1, vec![]).unwrap(),
        ScenarioModels {
            demand: DemandModel::constant(1, demand),
            lead_time: LeadTimeModel::constant(1, 1),
        },
        CostParams::uniform(1, 1.0, 10.0),
    )
}

fn fixed(step: f64, epochs: usize) -> OptConfig {
    OptConfig {
        step: Some(step),
        schedule: StepSchedule::Constant,
        batch: 1,
        max_epochs: epochs,
        tol: 0.0,
        ..OptConfig::default()
    }
}

#[test]
fn ssgd_finds_the_grid_minimum_of_a_single_item() {
    let (net, models, costs) = single_node(10);
    let problem = Problem::new(&net, &models, &costs, 20);
    let grid: Vec<f64> = (0..=400).map(|k| k as f64 * 0.1).collect();
    let best = grid
        .iter()
        .map(|&s| (problem.evaluate(&PolicyVector(vec![s]), &[0]).unwrap().mean, s))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap()
        .1;
    let config = OptConfig {
        schedule: StepSchedule::InvSqrt,
        ..fixed(0.05, 1000)
    };
    let rec = ssgd(&problem, &config, 1, None).unwrap();
    let s = rec.final_policy.0[0];
    assert!((s - best).abs() <= 0.05 * best, "S = {s}, grid argmin = {best}");
}

#[test]
fn zero_demand_drives_levels_to_zero() {
    let net = BomNetwork::new(3, vec![(0, 2, 1.0), (1, 2, 1.0)]).unwrap();
    let models = ScenarioModels {
        demand: DemandModel::zero(3),
        lead_time: LeadTimeModel::constant(3, 2),
    };
    let costs = CostParams::uniform(3, 2.0, 10.0);
    let problem = Problem::new(&net, &models, &costs, 10);
    // at S = 0 the tie puts I_temp on the backlog side, so the pathwise
    // derivative there is -p T and the iterate hovers within O(t_k) of zero
    let config = OptConfig {
        schedule: StepSchedule::InvSqrt,
        ..fixed(0.05, 400)
    };
    let rec = ssgd(&problem, &config, 0, Some(PolicyVector(vec![5.0, 8.0, 3.0]))).unwrap();
    assert!(rec.final_policy.0.iter().all(|&s| s <= 0.5), "{:?}", rec.final_policy);
    let tail_mean: f64 = rec.epochs[300..].iter().map(|e| e.policy.iter().sum::<f64>()).sum::<f64>() / 100.0;
    assert!(tail_mean < 0.5, "tail mean {tail_mean}");
}

#[test]
fn fista_hand_trace() {
    // C(S) = 20 (S - 10) above 10, so the gradient is 20 and t = 0.25 moves 5 per step
    let (net, models, costs) = single_node(10);
    let problem = Problem::new(&net, &models, &costs, 20);
    let rec = fista(&problem, &fixed(0.25, 3), 0, Some(PolicyVector(vec![30.0]))).unwrap();
    let trace: Vec<(f64, f64)> = rec
        .epochs
        .iter()
        .map(|e| (e.policy[0], e.momentum.as_ref().unwrap()[0]))
        .collect();
    assert_eq!(trace, vec![(25.0, 25.0), (20.0, 18.75), (13.75, 11.25)]);
}

#[test]
fn large_lambda_keeps_fista_at_zero() {
    let net = generate(
        &GeneratorSpec {
            n: 15,
            avg_degree: 1.5,
            topology: Topology::GeneralDag,
            layers: Some(3),
            max_weight: 2,
        },
        3,
    )
    .unwrap();
    let models = ScenarioModels {
        demand: DemandModel::constant(15, 4),
        lead_time: LeadTimeModel::constant(15, 2),
    };
    let costs = CostParams::uniform(15, 1.0, 5.0);
    let problem = Problem::new(&net, &models, &costs, 10);
    let (_, g0) = problem.batch_gradient(&[0.0; 15], &[0]).unwrap();
    let lambda = g0.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let config = OptConfig {
        lambda,
        ..fixed(0.01, 10)
    };
    let rec = fista(&problem, &config, 5, Some(PolicyVector::zeros(15))).unwrap();
    assert!(rec.final_policy.0.iter().all(|&s| s == 0.0));
}

fn medium() -> (BomNetwork, ScenarioModels, CostParams) {
    let net = generate(
        &GeneratorSpec {
            n: 30,
            avg_degree: 1.5,
            topology: Topology::SharedComponentDag,
            layers: Some(4),
            max_weight: 2,
        },
        8,
    )
    .unwrap();
    let models = ScenarioModels {
        demand: DemandModel::normal(&[10.0; 30], &[3.0; 30]),
        lead_time: LeadTimeModel::constant(30, 2),
    };
    (net, models, CostParams::uniform(30, 1.0, 10.0))
}

#[test]
fn runs_are_deterministic() {
    let (net, models, costs) = medium();
    let problem = Problem::new(&net, &models, &costs, 12);
    let config = OptConfig {
        lambda: 1.0,
        batch: 4,
        max_epochs: 8,
        ..OptConfig::default()
    };
    assert_eq!(fista(&problem, &config, 42, None).unwrap(), fista(&problem, &config, 42, None).unwrap());
    assert_eq!(ssgd(&problem, &config, 42, None).unwrap(), ssgd(&problem, &config, 42, None).unwrap());
}

#[test]
fn resuming_a_truncated_log_reproduces_the_full_run() {
    let (net, models, costs) = medium();
    let problem = Problem::new(&net, &models, &costs, 12);
    let config = OptConfig {
        lambda: 0.5,
        batch: 3,
        max_epochs: 6,
        tol: 0.0,
        ..OptConfig::default()
    };
    let start = invopt_core::opt::initial_policy(&net, &models).unwrap();
    let mut sink = JsonLinesSink::new(Vec::new());
    let full = run(&problem, &config, RunSpec::new(Method::Fista, 9, start.clone()), &mut sink).unwrap();
    let log = String::from_utf8(sink.into_inner()).unwrap();
    assert_eq!(log.lines().count(), 6);

    // keep three whole lines plus half of the fourth
    let cut: usize = log.lines().take(3).map(|l| l.len() + 1).sum::<usize>() + 20;
    let done: Vec<EpochRecord> = read_epoch_log(&log[..cut]).unwrap();
    assert_eq!(done.len(), 3);
    let mut spec = RunSpec::new(Method::Fista, 9, start);
    spec.resume = done;
    let resumed = run(&problem, &config, spec, &mut ()).unwrap();
    assert_eq!(resumed, full);
}

#[test]
fn two_stage_respects_support() {
    let (net, models, costs) = medium();
    let problem = Problem::new(&net, &models, &costs, 12);
    let config = OptConfig {
        lambda: 40.0,
        batch: 4,
        max_epochs: 15,
        ..OptConfig::default()
    };
    let res = two_stage(&problem, &config, 3, None, (&mut (), &mut ()), (vec![], vec![])).unwrap();
    for (i, &keep) in res.support.iter().enumerate() {
        if !keep {
            assert_eq!(res.policy.0[i], 0.0);
        }
    }
    assert!(res.stage2.epochs.iter().all(|e| e.method == Method::Sgd));
}

#[test]
fn degenerate_staging_keeps_every_positive_level() {
    let (net, models, costs) = medium();
    let problem = Problem::new(&net, &models, &costs, 12);
    let config = OptConfig {
        batch: 2,
        max_epochs: 5,
        zero_threshold: Some(1e-9),
        ..OptConfig::default()
    };
    let res = two_stage(&problem, &config, 3, None, (&mut (), &mut ()), (vec![], vec![])).unwrap();
    let expected: Vec<bool> = res.stage1.final_policy.0.iter().map(|&s| s > 1e-9).collect();
    assert_eq!(res.support, expected);
}

#[test]
fn empty_support_is_reported() {
    let (net, models, costs) = single_node(0);
    let problem = Problem::new(&net, &models, &costs, 5);
    let config = OptConfig { lambda: 100.0, ..fixed(1.0, 3) };
    let err = two_stage(&problem, &config, 0, Some(PolicyVector(vec![1.0])), (&mut (), &mut ()), (vec![], vec![]));
    assert_eq!(err.unwrap_err(), Error::EmptySupport);
}

#[test]
fn oversized_steps_diverge() {
    let (net, models, costs) = single_node(10);
    let problem = Problem::new(&net, &models, &costs, 20);
    let err = ssgd(&problem, &fixed(1000.0, 5), 0, Some(PolicyVector(vec![5.0]))).unwrap_err();
    assert!(matches!(err, Error::Diverged { epoch: 2, .. }));
}
