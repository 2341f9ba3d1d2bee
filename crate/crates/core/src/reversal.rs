//! Time reversal of unbiased layered processes.
//!
//! The reverse of a segment is its input/output relabeling, complex
//! conjugated and scaled by `d_out / d_in`. With the Choi convention used in
//! this crate the conjugated relabeling is the Choi matrix of the adjoint
//! channel, which is what reproduces the forward statistics; the bare
//! relabeling gives the transposed channel instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Layering;
use crate::process::{validate_segment, Condition, LayeredProcess, Segment};
use crate::scheme::{
    layer_conditionals, layer_frame, layer_indices, observational_distribution, ChainConditionals, Conditional,
    OutcomeTable, SchemeAssignment, ABSENT_ROW,
};
use crate::tensor::{kron, ComplexMatrix, DEFAULT_TOL};

/// Reversed chain: `P(y_K)` and `P(y_j | y_{j+1})` for `j = K-1, ..., 1`, in reversed layer order.
pub fn bayes_invert(t: &OutcomeTable, layering: &Layering) -> Result<ChainConditionals> {
    let fwd = layer_conditionals(t, layering)?;
    let marginals: Vec<Vec<f64>> = layering
        .layers
        .iter()
        .map(|l| {
            let ids: Vec<&str> = l.iter().map(String::as_str).collect();
            Ok(t.marginal(&ids)?.probs())
        })
        .collect::<Result<_>>()?;
    let k = layering.len();
    let mut conditionals = Vec::with_capacity(k.saturating_sub(1));
    for j in (0..k.saturating_sub(1)).rev() {
        let (pj, pk) = (&marginals[j], &marginals[j + 1]);
        let f = &fwd.conditionals[j];
        let rows = (0..pk.len())
            .map(|b| {
                (pk[b] > ABSENT_ROW).then(|| {
                    (0..pj.len())
                        .map(|a| f.rows[a].as_ref().map_or(0.0, |r| r[b] * pj[a] / pk[b]))
                        .collect()
                })
            })
            .collect();
        conditionals.push(Conditional { from: f.to.clone(), to: f.from.clone(), rows });
    }
    Ok(ChainConditionals {
        layers: layering.reversed().layers,
        marginal: marginals[k - 1].clone(),
        conditionals,
    })
}

/// Reverse of `s` without the unbiasedness check.
pub fn force_reverse_segment(s: &Segment) -> Segment {
    let scale = s.d_out() as f64 / s.d_in() as f64;
    let swapped = s.swap_io();
    Segment::new(swapped.matrix().conj().scale_real(scale), swapped.d_in(), swapped.d_out()).expect("dims unchanged")
}

/// Reverse of an unbiased segment; biased input is rejected.
pub fn reverse_segment(s: &Segment) -> Result<Segment> {
    reverse_indexed(s, 0)
}

fn reverse_indexed(s: &Segment, index: usize) -> Result<Segment> {
    let deviation = s.unbiased_deviation();
    if deviation > DEFAULT_TOL {
        return Err(Error::Biased { index, deviation });
    }
    Ok(force_reverse_segment(s))
}

/// One clause of the reversed-segment validity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub name: String,
    pub deviation: f64,
    pub ok: bool,
}

/// Checks on the reverse of the segment between forward layers `to_layer` and `from_layer` (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversedSegmentCheck {
    pub from_layer: usize,
    pub to_layer: usize,
    /// Unbiasedness deviation of the forward segment.
    pub forward_bias: f64,
    pub clauses: Vec<Clause>,
    /// Unbiasedness deviation of the reversed segment itself.
    pub reverse_bias: f64,
}

impl ReversedSegmentCheck {
    pub fn ok(&self) -> bool {
        self.clauses.iter().all(|c| c.ok)
    }

    pub fn violated(&self) -> impl Iterator<Item = &Clause> {
        self.clauses.iter().filter(|c| !c.ok)
    }
}

/// Validity clauses of a reversed segment mapping layer `from` outputs to layer `to` inputs.
pub fn validate_reverse(sbar: &Segment, from: usize, to: usize, tol: f64) -> Vec<Clause> {
    let v = validate_segment(sbar, tol);
    let name = |c: Condition| match c {
        Condition::Positivity => format!("Wbar(O{from}->I{to}) >= 0"),
        Condition::PartialTrace => format!("tr_I{to} Wbar = 1_O{from}"),
        Condition::Trace => format!("tr Wbar = d_O{from}"),
    };
    [(Condition::Positivity, v.positivity), (Condition::PartialTrace, v.partial_trace), (Condition::Trace, v.trace)]
        .into_iter()
        .map(|(c, d)| Clause { name: name(c), deviation: d, ok: d <= tol })
        .collect()
}

fn check_reverse(forward: &Segment, j: usize, tol: f64) -> (Segment, ReversedSegmentCheck) {
    let sbar = force_reverse_segment(forward);
    let check = ReversedSegmentCheck {
        from_layer: j + 2,
        to_layer: j + 1,
        forward_bias: forward.unbiased_deviation(),
        clauses: validate_reverse(&sbar, j + 2, j + 1, tol),
        reverse_bias: sbar.unbiased_deviation(),
    };
    (sbar, check)
}

fn assemble_reverse(lp: &LayeredProcess, reversed: Vec<Segment>) -> Result<LayeredProcess> {
    let layers: Vec<_> = lp.layers().iter().rev().cloned().collect();
    let segments: Vec<Segment> = reversed.into_iter().rev().collect();
    LayeredProcess::unbiased(layers, segments)
}

/// Reversed process over the reversed layering, starting from `I/d_K`.
pub fn reverse_process(lp: &LayeredProcess) -> Result<(LayeredProcess, Vec<ReversedSegmentCheck>)> {
    if !lp.initial_is_maximally_mixed(DEFAULT_TOL) {
        return Err(Error::Process("initial state is not maximally mixed, so the chain is biased".into()));
    }
    let mut reversed = Vec::new();
    let mut checks = Vec::new();
    for (j, s) in lp.segments().iter().enumerate() {
        reverse_indexed(s, j)?;
        let (sbar, check) = check_reverse(s, j, DEFAULT_TOL);
        reversed.push(sbar);
        checks.push(check);
    }
    Ok((assemble_reverse(lp, reversed)?, checks))
}

/// Why the default reversal refused a process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    /// 0-based segment index, or `None` when the initial state is at fault.
    pub segment: Option<usize>,
    pub deviation: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversalReport {
    pub tolerance: f64,
    pub segments: Vec<ReversedSegmentCheck>,
    pub rejection: Option<Rejection>,
    /// Max over layers and outcomes of `|P(y_j) - β_{y_j}/d_j|`.
    pub marginal_deviation: f64,
    /// Max deviation of `P(y_K) Π P(y_j|y_{j+1})` from the table.
    pub bayes_max_error: f64,
    /// Max over entries of `|P(y_j)/P(y_{j+1}) · β_{j+1}/β_j - d_{j+1}/d_j|`.
    pub scale_factor_deviation: f64,
    /// Max entrywise difference of forward and reversed tables, axes aligned by node id.
    pub table_max_error: Option<f64>,
    /// Max deviation of Bayes-inverted conditionals from the reversed segments' Born values.
    pub conditional_max_error: Option<f64>,
    pub success: bool,
}

impl ReversalReport {
    pub fn violated_clauses(&self) -> Vec<&Clause> {
        self.segments.iter().flat_map(|s| s.violated()).collect()
    }
}

/// Runs the forward scheme, reverses the process, runs the same scheme on the
/// reversed chain and compares. A biased chain is still force-reversed so
/// that the violated clauses appear in the report.
pub fn verify_reversibility(lp: &LayeredProcess, scheme: &SchemeAssignment, tol: f64) -> Result<ReversalReport> {
    let layering = lp.layering();
    let t = observational_distribution(scheme, lp)?;
    let frames = layering.layers.iter().map(|l| layer_frame(scheme, l)).collect::<Result<Vec<_>>>()?;
    let dims = lp.layer_dims();

    let mut marginal_deviation: f64 = 0.0;
    let mut marginals = Vec::new();
    for (j, l) in layering.layers.iter().enumerate() {
        let ids: Vec<&str> = l.iter().map(String::as_str).collect();
        let m = t.marginal(&ids)?.probs();
        for (p, f) in m.iter().zip(&frames[j].effects) {
            marginal_deviation = marginal_deviation.max((p - f.trace().re / dims[j] as f64).abs());
        }
        marginals.push(m);
    }

    let mut scale_factor_deviation: f64 = 0.0;
    for j in 0..layering.len().saturating_sub(1) {
        let target = dims[j + 1] as f64 / dims[j] as f64;
        for (pa, fa) in marginals[j].iter().zip(&frames[j].effects) {
            for (pb, fb) in marginals[j + 1].iter().zip(&frames[j + 1].effects) {
                let f = pa / pb * (fb.trace().re / fa.trace().re);
                scale_factor_deviation = scale_factor_deviation.max((f - target).abs());
            }
        }
    }

    let order: Vec<&str> = layering.nodes().collect();
    let tl = t.reorder(&order)?;
    let rev = bayes_invert(&tl, &layering)?;
    let k = layering.len();
    let bayes_max_error = (0..tl.len())
        .map(|flat| {
            let mut ys = layer_indices(&tl, &layering, flat);
            ys.reverse();
            (tl.prob(flat) - rev.chain_product(&ys)).abs()
        })
        .fold(0.0, f64::max);

    let rejection = if !lp.initial_is_maximally_mixed(tol) {
        let d = lp.initial().rows();
        let dev = lp.initial().max_abs_diff(&ComplexMatrix::identity(d).scale_real(1.0 / d as f64));
        Some(Rejection { segment: None, deviation: dev, reason: "initial state is not maximally mixed".into() })
    } else {
        lp.first_biased(tol).map(|(j, dev)| Rejection {
            segment: Some(j),
            deviation: dev,
            reason: format!("segment {} (layer {} -> {}) is biased", j + 1, j + 1, j + 2),
        })
    };

    let (reversed, checks): (Vec<Segment>, Vec<ReversedSegmentCheck>) =
        lp.segments().iter().enumerate().map(|(j, s)| check_reverse(s, j, tol)).unzip();

    let (table_max_error, conditional_max_error) = if rejection.is_none() {
        let conditional_err = (0..k - 1)
            .map(|j| {
                // Reversed conditional index: rev.conditionals[k-2-j] is P(y_j | y_{j+1}).
                let cond = &rev.conditionals[k - 2 - j];
                let sbar = &reversed[j];
                let mut err: f64 = 0.0;
                for (b, row) in cond.rows.iter().enumerate() {
                    let Some(row) = row else { continue };
                    let st = frames[j + 1].posts[b].transpose();
                    for (a, f) in frames[j].effects.iter().enumerate() {
                        let born = kron(&st, f).trace_product(sbar.matrix()).re;
                        err = err.max((born - row[a]).abs());
                    }
                }
                err
            })
            .fold(0.0, f64::max);
        let lpbar = assemble_reverse(lp, reversed)?;
        let tbar = observational_distribution(scheme, &lpbar)?;
        (Some(t.max_abs_diff(&tbar)?), Some(conditional_err))
    } else {
        (None, None)
    };

    let success = rejection.is_none()
        && checks.iter().all(ReversedSegmentCheck::ok)
        && marginal_deviation <= tol
        && bayes_max_error <= tol
        && scale_factor_deviation <= tol
        && table_max_error.is_some_and(|e| e <= tol)
        && conditional_max_error.is_some_and(|e| e <= tol);
    Ok(ReversalReport {
        tolerance: tol,
        segments: checks,
        rejection,
        marginal_deviation,
        bayes_max_error,
        scale_factor_deviation,
        table_max_error,
        conditional_max_error,
        success,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Node;
    use crate::instrument::CPMap;
    use crate::process::{qubit_to_qutrit_unbiased, random_unbiased_segment, random_unital_channel};
    use crate::random::{haar_unitary, rng};
    use crate::scheme::Axis;
    use crate::tensor::c;

    fn chain(ids: &[&str], d: usize) -> Vec<Vec<Node>> {
        ids.iter().map(|id| vec![Node { id: id.to_string(), dim: d }]).collect()
    }

    fn nodes(lp: &LayeredProcess) -> Vec<Node> {
        lp.nodes().cloned().collect()
    }

    #[test]
    fn doubly_stochastic_chain_is_self_inverse() {
        let bin = || vec!["0".to_string(), "1".to_string()];
        let axes = vec![Axis { node: "A".into(), outcomes: bin() }, Axis { node: "B".into(), outcomes: bin() }];
        let t = OutcomeTable::new(axes, vec![0.35, 0.15, 0.15, 0.35]).unwrap();
        let layering = Layering::new(vec![vec!["A".into()], vec!["B".into()]]);
        let fwd = layer_conditionals(&t, &layering).unwrap();
        let rev = bayes_invert(&t, &layering).unwrap();
        assert_eq!(fwd.conditionals[0].rows, rev.conditionals[0].rows);
    }

    #[test]
    fn identity_reverses_to_identity() {
        let r = reverse_segment(&Segment::identity(2)).unwrap();
        assert!(r.matrix().approx_eq(Segment::identity(2).matrix(), 0.0));
    }

    #[test]
    fn unitary_reverses_to_adjoint() {
        let u = haar_unitary(2, &mut rng(3));
        let fwd = Segment::from_channel(&CPMap::conjugation(u.clone()).unwrap());
        let r = reverse_segment(&fwd).unwrap();
        let adj = Segment::from_channel(&CPMap::conjugation(u.adjoint()).unwrap());
        assert!(r.matrix().approx_eq(adj.matrix(), 1e-12));
        assert!(r.validate().is_ok());
    }

    #[test]
    fn biased_segment_rejected_and_forced_reverse_fails_partial_trace() {
        let s = Segment::discard_prepare(2, &[c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!(matches!(reverse_segment(&s), Err(Error::Biased { index: 0, .. })));
        let clauses = validate_reverse(&force_reverse_segment(&s), 2, 1, 1e-9);
        let bad: Vec<_> = clauses.iter().filter(|c| !c.ok).collect();
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].name, "tr_I1 Wbar = 1_O2");
    }

    #[test]
    fn reversed_random_segments_are_valid_and_unbiased() {
        for seed in 0..20 {
            let s = random_unbiased_segment(2, 1 + (seed as usize % 4), seed).unwrap();
            let r = reverse_segment(&s).unwrap();
            assert!(r.validate().is_ok());
            assert!(r.is_unbiased(1e-9));
        }
        let up = Segment::from_channel(&qubit_to_qutrit_unbiased());
        let r = reverse_segment(&up).unwrap();
        assert_eq!((r.d_in(), r.d_out()), (3, 2));
        assert!(r.validate().is_ok());
    }

    #[test]
    fn double_reversal_round_trips() {
        let segs = vec![random_unbiased_segment(2, 2, 1).unwrap(), random_unbiased_segment(2, 3, 2).unwrap()];
        let lp = LayeredProcess::unbiased(chain(&["A", "B", "C"], 2), segs).unwrap();
        let (bar, _) = reverse_process(&lp).unwrap();
        let (barbar, _) = reverse_process(&bar).unwrap();
        for (a, b) in lp.segments().iter().zip(barbar.segments()) {
            assert!(a.matrix().approx_eq(b.matrix(), 1e-9));
        }
    }

    #[test]
    fn identity_chain_reverses_to_identity_chain() {
        let lp = LayeredProcess::unbiased(chain(&["A", "B", "C"], 2), vec![Segment::identity(2), Segment::identity(2)]).unwrap();
        let (bar, _) = reverse_process(&lp).unwrap();
        assert_eq!(bar.layering().layers, vec![vec!["C".to_string()], vec!["B".into()], vec!["A".into()]]);
        for s in bar.segments() {
            assert!(s.matrix().approx_eq(Segment::identity(2).matrix(), 0.0));
        }
    }

    #[test]
    fn identity_chain_is_reversible() {
        let lp = LayeredProcess::unbiased(chain(&["A", "B"], 2), vec![Segment::identity(2)]).unwrap();
        let s = SchemeAssignment::sic(&nodes(&lp)).unwrap();
        let rep = verify_reversibility(&lp, &s, 1e-9).unwrap();
        assert!(rep.success, "{rep:?}");
        assert!(rep.table_max_error.unwrap() < 1e-15);
    }

    #[test]
    fn unequal_dimension_chain_is_reversible() {
        let layers = vec![vec![Node { id: "A".into(), dim: 2 }], vec![Node { id: "B".into(), dim: 3 }]];
        let lp = LayeredProcess::unbiased(layers, vec![Segment::from_channel(&qubit_to_qutrit_unbiased())]).unwrap();
        let s = SchemeAssignment::sic(&nodes(&lp)).unwrap();
        let rep = verify_reversibility(&lp, &s, 1e-9).unwrap();
        assert!(rep.success, "{rep:?}");
    }

    #[test]
    fn biased_chain_is_reported() {
        let lp = LayeredProcess::unbiased(
            chain(&["A", "B"], 2),
            vec![Segment::discard_prepare(2, &[c(1.0, 0.0), c(0.0, 0.0)]).unwrap()],
        )
        .unwrap();
        let s = SchemeAssignment::sic(&nodes(&lp)).unwrap();
        let rep = verify_reversibility(&lp, &s, 1e-9).unwrap();
        assert!(!rep.success);
        assert_eq!(rep.rejection.as_ref().unwrap().segment, Some(0));
        assert!(rep.marginal_deviation > 1e-3);
        assert_eq!(rep.violated_clauses().len(), 1);
    }

    #[test]
    fn bare_relabeling_does_not_reproduce_statistics() {
        // The qubit SIC has complex projectors, so the transposed channel differs from the adjoint.
        let lp = LayeredProcess::unbiased(
            chain(&["A", "B"], 2),
            vec![Segment::from_channel(&random_unital_channel(2, 1, 12).unwrap())],
        )
        .unwrap();
        let s = SchemeAssignment::sic(&nodes(&lp)).unwrap();
        let t = observational_distribution(&s, &lp).unwrap();
        let bare = lp.segments()[0].swap_io();
        let naive = LayeredProcess::unbiased(chain(&["B", "A"], 2), vec![bare]).unwrap();
        let err = t.max_abs_diff(&observational_distribution(&s, &naive).unwrap()).unwrap();
        assert!(err > 1e-3, "bare relabeling matched to {err:e}");
        let (bar, _) = reverse_process(&lp).unwrap();
        assert!(t.max_abs_diff(&observational_distribution(&s, &bar).unwrap()).unwrap() < 1e-12);
    }
}
