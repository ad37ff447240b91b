mod common;

use common::random_instance;
use invopt_core::grad::{backward_sweep, branch_report, fd_branch_stable, grad_bp, grad_fd, grad_ipa, max_rel_diff, record_forward, Tape};
use invopt_core::network::{BomNetwork, Kernel};
use invopt_core::sim::{simulate, CostParams, InitialInventory, PolicyVector, SimInput};
use invopt_core::stochastic::{sample_path, DemandModel, LeadTimeModel, ScenarioPath};
use invopt_core::Error;
use proptest::prelude::*;

fn single(demands: Vec<u64>, lead: u32) -> (BomNetwork, ScenarioPath) {
    let t = demands.len();
    (
        BomNetwork::new(1, vec![]).unwrap(),
        ScenarioPath::from_arrays(t, 1, 0, demands, vec![lead; t]).unwrap(),
    )
}

#[test]
fn one_period_without_orders_costs_holding() {
    let (net, path) = single(vec![0], 1);
    let policy = PolicyVector(vec![7.5]);
    let costs = CostParams::uniform(1, 3.0, 30.0);
    let input = SimInput::new(&policy, &costs, &InitialInventory::AtBaseStock);
    assert_eq!(grad_bp(&net, &path, input).unwrap().grad, vec![3.0]);
    assert_eq!(grad_ipa(&net, &path, input).unwrap().grad, vec![3.0]);
    let fd = grad_fd(&net, &path, input, 1e-4).unwrap();
    assert!((fd.grad[0] - 3.0).abs() < 1e-6);
}

#[test]
fn zero_demand_gradient_is_horizon_times_holding() {
    let net = BomNetwork::new(3, vec![(0, 2, 1.0), (1, 2, 1.0)]).unwrap();
    let path = sample_path(&DemandModel::zero(3), &LeadTimeModel::constant(3, 2), 6, 3, 0).unwrap();
    let policy = PolicyVector(vec![4.0, 5.0, 6.0]);
    let costs = CostParams {
        holding: vec![1.0, 2.0, 3.0],
        penalty: vec![9.0; 3],
    };
    let input = SimInput::new(&policy, &costs, &InitialInventory::AtBaseStock);
    for g in [grad_bp(&net, &path, input).unwrap(), grad_ipa(&net, &path, input).unwrap()] {
        assert_eq!(g.grad, vec![6.0, 12.0, 18.0]);
    }
}

#[test]
fn no_costs_means_no_gradient() {
    let mut inst = random_instance(3, 15, 8, false);
    inst.costs = CostParams::uniform(15, 0.0, 0.0);
    let g = grad_bp(&inst.net, &inst.path, SimInput::new(&inst.policy, &inst.costs, &inst.init)).unwrap();
    assert!(g.grad.iter().all(|&x| x == 0.0));
    assert_eq!(g.total_cost, 0.0);
}

#[test]
fn finite_difference_across_a_kink_can_disagree() {
    // S = 5 puts the first-period order exactly at its threshold
    let (net, path) = single(vec![5, 5], 1);
    let policy = PolicyVector(vec![5.0]);
    let costs = CostParams::uniform(1, 1.0, 10.0);
    let init = InitialInventory::Explicit(vec![10.0]);
    let input = SimInput::new(&policy, &costs, &init);
    let bp = grad_bp(&net, &path, input).unwrap();
    let fd = grad_fd(&net, &path, input, 1e-3).unwrap();
    assert_eq!(bp.grad, vec![0.0]);
    assert!((fd.grad[0] - 0.5).abs() < 1e-9);
    assert_eq!(branch_report(&net, &path, input).unwrap().margin, 0.0);
}

#[test]
fn finite_differences_use_two_runs_per_item() {
    let inst = random_instance(11, 20, 6, true);
    let fd = grad_fd(&inst.net, &inst.path, SimInput::new(&inst.policy, &inst.costs, &inst.init), 1e-5).unwrap();
    assert_eq!(fd.simulations, Some(40));
    assert!(matches!(
        grad_fd(&inst.net, &inst.path, SimInput::new(&inst.policy, &inst.costs, &inst.init), 0.0),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn bp_matches_fd_away_from_kinks() {
    let mut checked = 0;
    for seed in 0..200u64 {
        let inst = random_instance(500 + seed, 12, 8, seed % 2 == 0);
        let input = SimInput::new(&inst.policy, &inst.costs, &inst.init);
        let report = branch_report(&inst.net, &inst.path, input).unwrap();
        if report.margin < 1e-6 || !fd_branch_stable(&inst.net, &inst.path, input, 1e-7).unwrap() {
            continue;
        }
        let bp = grad_bp(&inst.net, &inst.path, input).unwrap();
        let fd = grad_fd(&inst.net, &inst.path, input, 1e-7).unwrap();
        let err = max_rel_diff(&fd.grad, &bp.grad);
        assert!(err <= 1e-5, "seed {seed}: {err}");
        checked += 1;
        if checked == 20 {
            break;
        }
    }
    assert_eq!(checked, 20);
}

#[test]
fn tape_is_consistent_with_simulation() {
    let inst = random_instance(21, 25, 10, false);
    let input = SimInput::new(&inst.policy, &inst.costs, &inst.init);
    let (cost, tape) = record_forward(&inst.net, &inst.path, input).unwrap();
    assert_eq!(cost, simulate(&inst.net, &inst.path, input).unwrap().total_cost);
    assert_eq!(tape.periods.len(), 10);
    for per in &tape.periods {
        assert_eq!(per.passes.len(), inst.net.layer_count());
    }
    for (t, lots) in tape.arrivals.iter().enumerate() {
        for a in lots {
            assert!(a.lead >= 1 && t as i64 - a.lead as i64 >= 1);
        }
    }
}

#[test]
fn zero_demand_tape_records_no_orders() {
    let net = BomNetwork::new(2, vec![(0, 1, 2.0)]).unwrap();
    let path = sample_path(&DemandModel::zero(2), &LeadTimeModel::constant(2, 1), 4, 2, 0).unwrap();
    let policy = PolicyVector(vec![3.0, 1.0]);
    let costs = CostParams::uniform(2, 1.0, 1.0);
    let (_, tape) = record_forward(&net, &path, SimInput::new(&policy, &costs, &InitialInventory::AtBaseStock)).unwrap();
    assert!(tape.periods.iter().all(|p| p.passes.iter().flatten().all(|&o| !o)));
}

#[test]
fn truncated_tape_is_rejected() {
    let inst = random_instance(22, 10, 5, false);
    let (_, mut tape): (f64, Tape) =
        record_forward(&inst.net, &inst.path, SimInput::new(&inst.policy, &inst.costs, &inst.init)).unwrap();
    tape.periods.pop();
    assert!(matches!(
        backward_sweep(&inst.net, tape, &inst.costs, Kernel::Sparse),
        Err(Error::TapeCorrupt(_))
    ));
}

#[test]
fn gradient_json_shape() {
    let inst = random_instance(23, 5, 4, false);
    let g = grad_bp(&inst.net, &inst.path, SimInput::new(&inst.policy, &inst.costs, &inst.init)).unwrap();
    let v: serde_json::Value = serde_json::from_str(&g.to_json()).unwrap();
    assert_eq!(v["method"], "bp");
    assert_eq!(v["grad"].as_array().unwrap().len(), 5);
    assert!(v.get("simulations").is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn bp_equals_ipa(seed in 0u64..100_000, n in 2usize..30, horizon in 1usize..10, explicit in any::<bool>(), dense in any::<bool>()) {
        let inst = random_instance(seed, n, horizon, explicit);
        let kernel = if dense { Kernel::Dense } else { Kernel::Sparse };
        let input = SimInput::new(&inst.policy, &inst.costs, &inst.init).with_kernel(kernel);
        let bp = grad_bp(&inst.net, &inst.path, input).unwrap();
        let ipa = grad_ipa(&inst.net, &inst.path, input).unwrap();
        prop_assert_eq!(bp.total_cost, ipa.total_cost);
        let diff = max_rel_diff(&bp.grad, &ipa.grad);
        prop_assert!(diff <= 1e-10, "max rel diff {}", diff);
    }
}
