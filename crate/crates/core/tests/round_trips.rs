mod common;

use std::collections::HashMap;

use common::{fixtures, sic_scheme};
use qcr_core::graph::Node;
use qcr_core::instrument::Instrument;
use qcr_core::process::{qubit_to_qutrit_unbiased, random_unbiased_segment, LayeredProcess, Segment};
use qcr_core::random::{random_density, rng};
use qcr_core::reversal::{reverse_process, verify_reversibility};
use qcr_core::scheme::{intervened_distribution, observational_distribution};
use qcr_core::tomography::{process_distance, reconstruct_process};

fn biased_chain(dims: &[usize], seed: u64) -> LayeredProcess {
    let layers: Vec<Vec<Node>> =
        dims.iter().enumerate().map(|(i, &d)| vec![Node { id: format!("X{i}"), dim: d }]).collect();
    let segs = dims
        .windows(2)
        .enumerate()
        .map(|(j, w)| Segment::from_channel(&Instrument::random("tmp", w[0], w[1], 2, 2, seed + j as u64).unwrap().channel()))
        .collect();
    LayeredProcess::new(layers, random_density(dims[0], &mut rng(seed)), segs).unwrap()
}

fn assert_round_trip(lp: &LayeredProcess) {
    let s = sic_scheme(lp);
    let t = observational_distribution(&s, lp).unwrap();
    let (hat, rep) = reconstruct_process(&t, &lp.layering(), &s, 1e-9).unwrap();
    assert!(rep.success && rep.valid, "{rep:?}");
    assert!(process_distance(lp, &hat).unwrap() < 1e-8);
    // Random instrument substitutions on every node, one node at a time and all at once.
    let nodes: Vec<Node> = lp.nodes().cloned().collect();
    let mut all = HashMap::new();
    for (i, n) in nodes.iter().enumerate() {
        let inst = Instrument::random(n.id.clone(), n.dim, n.dim, 3, 2, 500 + i as u64).unwrap();
        all.insert(n.id.clone(), inst.clone());
        let one = HashMap::from([(n.id.clone(), inst)]);
        let a = intervened_distribution(&s, &one, lp).unwrap();
        let b = intervened_distribution(&s, &one, &hat).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-8);
    }
    let a = intervened_distribution(&s, &all, lp).unwrap();
    let b = intervened_distribution(&s, &all, &hat).unwrap();
    assert!(a.max_abs_diff(&b).unwrap() < 1e-8);
}

#[test]
fn unbiased_qubit_fixtures() {
    for (lp, _) in fixtures() {
        assert_round_trip(&lp);
    }
}

#[test]
fn biased_and_mixed_dimension_chains() {
    for (k, dims) in [vec![2, 2], vec![2, 3], vec![3, 2, 3], vec![3, 3]].iter().enumerate() {
        assert_round_trip(&biased_chain(dims, 40 + k as u64));
    }
}

#[test]
fn qutrit_unbiased_chain() {
    let layers = (0..3).map(|i| vec![Node { id: format!("Q{i}"), dim: 3 }]).collect();
    let segs = vec![random_unbiased_segment(3, 2, 1).unwrap(), random_unbiased_segment(3, 3, 2).unwrap()];
    let lp = LayeredProcess::unbiased(layers, segs).unwrap();
    assert_round_trip(&lp);
    let rep = verify_reversibility(&lp, &sic_scheme(&lp), 1e-9).unwrap();
    assert!(rep.success, "{rep:?}");
}

#[test]
fn reversal_of_mixed_dimension_chain() {
    let node = |id: &str, dim| vec![Node { id: id.into(), dim }];
    let up = Segment::from_channel(&qubit_to_qutrit_unbiased());
    let down = qcr_core::reversal::reverse_segment(&up).unwrap();
    let lp = LayeredProcess::unbiased(vec![node("A", 2), node("B", 3), node("C", 2)], vec![up, down]).unwrap();
    let rep = verify_reversibility(&lp, &sic_scheme(&lp), 1e-9).unwrap();
    assert!(rep.success, "{rep:?}");
    let (bar, _) = reverse_process(&lp).unwrap();
    assert_eq!(bar.layer_dims(), vec![2, 3, 2]);
}

#[test]
fn biased_chains_are_refused() {
    let lp = biased_chain(&[2, 2], 3);
    assert!(reverse_process(&lp).is_err());
    let rep = verify_reversibility(&lp, &sic_scheme(&lp), 1e-9).unwrap();
    assert!(!rep.success);
    assert!(rep.rejection.is_some());
}
