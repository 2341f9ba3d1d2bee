#![allow(dead_code)]

use qcr_core::graph::Node;
use qcr_core::instrument::{CPMap, Instrument};
use qcr_core::process::{random_unital_channel, LayeredProcess, Segment};
use qcr_core::scheme::{Axis, OutcomeTable, SchemeAssignment};
use qcr_core::tensor::{kron, ComplexMatrix};

pub const IDS: [&str; 4] = ["A", "B", "C", "D"];

/// Qubit chain with one node per layer and random unital segments.
/// Returns the Kraus channels alongside so oracles can avoid the Choi path.
pub fn qubit_chain(k: usize, seed: u64) -> (LayeredProcess, Vec<CPMap>) {
    let channels: Vec<CPMap> = (0..k - 1)
        .map(|j| random_unital_channel(2, 1 + (seed as usize + j) % 3, seed * 31 + j as u64).unwrap())
        .collect();
    let layers = IDS[..k].iter().map(|id| vec![Node { id: id.to_string(), dim: 2 }]).collect();
    let segs = channels.iter().map(Segment::from_channel).collect();
    (LayeredProcess::unbiased(layers, segs).unwrap(), channels)
}

/// The 20 seeded chains used throughout: K alternates between 2 and 3.
pub fn fixtures() -> Vec<(LayeredProcess, Vec<CPMap>)> {
    (0..20u64).map(|s| qubit_chain(2 + (s as usize % 2), 1000 + s)).collect()
}

pub fn sic_scheme(lp: &LayeredProcess) -> SchemeAssignment {
    let nodes: Vec<Node> = lp.nodes().cloned().collect();
    SchemeAssignment::sic(&nodes).unwrap()
}

fn apply_kraus(ops: &[ComplexMatrix], rho: &ComplexMatrix) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(ops[0].rows(), ops[0].rows());
    for a in ops {
        let term = a.matmul(rho).unwrap().matmul(&a.adjoint()).unwrap();
        for (o, t) in out.as_mut_slice().iter_mut().zip(term.as_slice()) {
            *o += t;
        }
    }
    out
}

/// Sequential Kraus propagation: prepare the initial state, then alternate
/// layer instrument branches and segment channels, never forming a Choi matrix.
/// `layers[j]` lists the instruments of layer j in layout order.
pub fn kraus_oracle(initial: &ComplexMatrix, layers: &[Vec<&Instrument>], channels: &[CPMap]) -> OutcomeTable {
    let axes: Vec<Axis> = layers
        .iter()
        .flatten()
        .map(|i| Axis { node: i.node().to_string(), outcomes: i.outcomes().to_vec() })
        .collect();
    let sizes: Vec<usize> = axes.iter().map(|a| a.outcomes.len()).collect();
    let n: usize = sizes.iter().product();
    let mut probs = vec![0.0; n];
    for (flat, p) in probs.iter_mut().enumerate() {
        let mut idx = vec![0; sizes.len()];
        let mut f = flat;
        for k in (0..sizes.len()).rev() {
            idx[k] = f % sizes[k];
            f /= sizes[k];
        }
        let mut rho = initial.clone();
        let mut pos = 0;
        for (j, layer) in layers.iter().enumerate() {
            let mut ops = vec![ComplexMatrix::identity(1)];
            for inst in layer {
                let m = &inst.maps()[idx[pos]];
                pos += 1;
                ops = ops.iter().flat_map(|a| m.kraus().iter().map(move |b| kron(a, b))).collect();
            }
            rho = apply_kraus(&ops, &rho);
            if j < channels.len() {
                rho = apply_kraus(channels[j].kraus(), &rho);
            }
        }
        *p = rho.trace().re;
    }
    OutcomeTable::new(axes, probs).unwrap()
}
