//! Outcome statistics from the generalized Born rule.
//!
//! Probabilities are `P = Σ_ab (⊗_v C_v)_ab W_ab`, the entrywise pairing of
//! the process with the nodes' Choi matrices. Tables are evaluated by
//! contracting node pairs off the front of the process one at a time, so a
//! prefix of outcomes is shared by every tuple that extends it.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::graph::{Layering, Node};
use crate::instrument::{sic_instrument, CPMap, Instrument};
use crate::process::LayeredProcess;
use crate::tensor::{kron, node_label, pair_leading, permute_factors, ComplexMatrix, Role, SpaceLayout};

/// Hard cap on the number of outcome tuples in a table.
pub const MAX_TABLE_ENTRIES: usize = 1_000_000;

/// Imaginary parts above this indicate mismatched operator layouts.
pub const IMAGINARY_TOL: f64 = 1e-8;

/// Entries in `[-NEGATIVE_CLIP, 0)` read as zero.
pub const NEGATIVE_CLIP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Axis {
    pub node: String,
    pub outcomes: Vec<String>,
}

/// Dense joint distribution over per-node outcomes, last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTable {
    axes: Vec<Axis>,
    probs: Vec<f64>,
}

impl OutcomeTable {
    pub fn new(axes: Vec<Axis>, probs: Vec<f64>) -> Result<Self> {
        let n = table_size(&axes)?;
        if probs.len() != n {
            return Err(Error::Dimension(format!("{} probabilities for a table of {n} entries", probs.len())));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(a) = axes.iter().find(|a| !seen.insert(a.node.as_str())) {
            return Err(Error::DuplicateLabel(a.node.clone()));
        }
        Ok(Self { axes, probs })
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.outcomes.len()).collect()
    }

    pub fn raw(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Entry at a flat index, small negative values clipped to zero.
    pub fn prob(&self, flat: usize) -> f64 {
        clip(self.probs[flat])
    }

    pub fn probs(&self) -> Vec<f64> {
        self.probs.iter().copied().map(clip).collect()
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.prob(self.flat_index(index))
    }

    pub fn flat_index(&self, index: &[usize]) -> usize {
        index.iter().zip(&self.axes).fold(0, |acc, (&i, a)| acc * a.outcomes.len() + i)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for (k, a) in self.axes.iter().enumerate().rev() {
            let n = a.outcomes.len();
            idx[k] = flat % n;
            flat /= n;
        }
        idx
    }

    pub fn axis_position(&self, node: &str) -> Result<usize> {
        self.axes.iter().position(|a| a.node == node).ok_or_else(|| Error::UnknownLabel(node.to_string()))
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn min_entry(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.total() - 1.0).abs() <= tol && self.min_entry() >= -NEGATIVE_CLIP
    }

    /// Marginal over `nodes`, in the given order.
    pub fn marginal(&self, nodes: &[&str]) -> Result<OutcomeTable> {
        let pos: Vec<usize> = nodes.iter().map(|n| self.axis_position(n)).collect::<Result<_>>()?;
        let axes: Vec<Axis> = pos.iter().map(|&p| self.axes[p].clone()).collect();
        let mut out = vec![0.0; table_size(&axes)?];
        let sizes: Vec<usize> = axes.iter().map(|a| a.outcomes.len()).collect();
        for flat in 0..self.probs.len() {
            let idx = self.multi_index(flat);
            let target = pos.iter().zip(&sizes).fold(0, |acc, (&p, &n)| acc * n + idx[p]);
            out[target] += self.probs[flat];
        }
        OutcomeTable::new(axes, out)
    }

    /// Same distribution with axes permuted to `nodes`, which must name every axis.
    pub fn reorder(&self, nodes: &[&str]) -> Result<OutcomeTable> {
        if nodes.len() != self.axes.len() {
            return Err(Error::Dimension(format!("reorder names {} of {} axes", nodes.len(), self.axes.len())));
        }
        self.marginal(nodes)
    }

    /// Max entrywise difference after aligning `other`'s axes to this table's by node id.
    pub fn max_abs_diff(&self, other: &OutcomeTable) -> Result<f64> {
        let order: Vec<&str> = self.axes.iter().map(|a| a.node.as_str()).collect();
        let aligned = other.reorder(&order)?;
        if aligned.axes != self.axes {
            return Err(Error::Dimension("tables have different outcome labels".into()));
        }
        Ok(self.probs.iter().zip(&aligned.probs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    /// Outcome labels of one flat entry.
    pub fn labels(&self, flat: usize) -> Vec<&str> {
        self.multi_index(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a.outcomes[i].as_str())
            .collect()
    }

    /// Joint table over two groups of axes as a `rows x cols` matrix (row-major).
    pub fn joint_matrix(&self, rows: &[&str], cols: &[&str]) -> Result<(Vec<f64>, usize, usize)> {
        let order: Vec<&str> = rows.iter().chain(cols).copied().collect();
        let m = self.marginal(&order)?;
        let nr: usize = m.axes[..rows.len()].iter().map(|a| a.outcomes.len()).product();
        let nc: usize = m.axes[rows.len()..].iter().map(|a| a.outcomes.len()).product();
        Ok((m.probs(), nr, nc))
    }
}

fn clip(p: f64) -> f64 {
    if (-NEGATIVE_CLIP..0.0).contains(&p) {
        0.0
    } else {
        p
    }
}

fn table_size(axes: &[Axis]) -> Result<usize> {
    let mut n: usize = 1;
    for a in axes {
        if a.outcomes.is_empty() {
            return Err(Error::Dimension(format!("axis `{}` has no outcomes", a.node)));
        }
        n = n.checked_mul(a.outcomes.len()).filter(|&n| n <= MAX_TABLE_ENTRIES).ok_or(Error::TableTooLarge {
            required: axes.iter().map(|a| a.outcomes.len()).fold(1usize, |x, y| x.saturating_mul(y)),
            cap: MAX_TABLE_ENTRIES,
        })?;
    }
    Ok(n)
}

/// One fixed instrument per node.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeAssignment {
    instruments: BTreeMap<String, Instrument>,
}

impl SchemeAssignment {
    pub fn new(nodes: &[Node], instruments: Vec<Instrument>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for inst in instruments {
            let node = inst.node().to_string();
            let Some(n) = nodes.iter().find(|n| n.id == node) else {
                return Err(Error::UnknownLabel(node));
            };
            if inst.in_dim() != n.dim || inst.out_dim() != n.dim {
                return Err(Error::Dimension(format!(
                    "instrument at `{node}` maps {}->{}, node has dimension {}",
                    inst.in_dim(),
                    inst.out_dim(),
                    n.dim
                )));
            }
            if map.insert(node.clone(), inst).is_some() {
                return Err(Error::Instrument(format!("node `{node}` has two instruments")));
            }
        }
        if let Some(n) = nodes.iter().find(|n| !map.contains_key(&n.id)) {
            return Err(Error::Instrument(format!("node `{}` has no instrument", n.id)));
        }
        Ok(Self { instruments: map })
    }

    /// SIC instrument at every node.
    pub fn sic(nodes: &[Node]) -> Result<Self> {
        let insts = nodes.iter().map(|n| sic_instrument(n.id.clone(), n.dim)).collect::<Result<Vec<_>>>()?;
        Self::new(nodes, insts)
    }

    pub fn get(&self, node: &str) -> Result<&Instrument> {
        self.instruments.get(node).ok_or_else(|| Error::UnknownLabel(node.to_string()))
    }

    pub fn instruments(&self) -> impl Iterator<Item = &Instrument> {
        self.instruments.values()
    }

    /// Replaces the instruments of the named nodes.
    pub fn with_substitutions(&self, subs: &HashMap<String, Instrument>) -> Result<Self> {
        let mut out = self.clone();
        for (node, inst) in subs {
            let old = self.get(node)?;
            if (inst.in_dim(), inst.out_dim()) != (old.in_dim(), old.out_dim()) {
                return Err(Error::Dimension(format!(
                    "substitute at `{node}` maps {}->{}, expected {}->{}",
                    inst.in_dim(),
                    inst.out_dim(),
                    old.in_dim(),
                    old.out_dim()
                )));
            }
            out.instruments.insert(node.clone(), inst.clone().with_node(node.clone()));
        }
        Ok(out)
    }
}

/// Joint effects and post-states of one layer, indexed like the layer's joint outcome.
#[derive(Debug, Clone)]
pub struct LayerFrame {
    pub effects: Vec<ComplexMatrix>,
    pub posts: Vec<ComplexMatrix>,
}

/// Tensor products of per-node measure-and-prepare elements over `layer`, first node slowest.
pub fn layer_frame(scheme: &SchemeAssignment, layer: &[String]) -> Result<LayerFrame> {
    let mut effects = vec![ComplexMatrix::identity(1)];
    let mut posts = vec![ComplexMatrix::identity(1)];
    for id in layer {
        let inst = scheme.get(id)?;
        let mp = inst.measure_prepare(crate::tensor::DEFAULT_TOL).ok_or_else(|| {
            Error::Instrument(format!("instrument at `{id}` is not measure-and-prepare"))
        })?;
        effects = effects.iter().flat_map(|a| mp.iter().map(move |e| kron(a, &e.effect))).collect();
        posts = posts.iter().flat_map(|a| mp.iter().map(move |e| kron(a, &e.post))).collect();
    }
    Ok(LayerFrame { effects, posts })
}

/// Contracts the leading node pair of `w` with each Choi matrix; the result is real.
fn finish(z: num_complex::Complex64) -> Result<f64> {
    if z.im.abs() > IMAGINARY_TOL {
        return Err(Error::ImaginaryResidue(z.im.abs()));
    }
    Ok(z.re)
}

/// Generalized Born rule for one element per node on a process `w` over `layout`.
///
/// Every factor of `layout` must be one of the `node:in` / `node:out` pairs
/// named by `elements`; they are permuted into element order before pairing.
pub fn born_probability(elements: &[(&str, &CPMap)], w: &ComplexMatrix, layout: &SpaceLayout) -> Result<f64> {
    let labels: Vec<String> = elements
        .iter()
        .flat_map(|(n, _)| [node_label(n, Role::In), node_label(n, Role::Out)])
        .collect();
    let order: Vec<&str> = labels.iter().map(String::as_str).collect();
    for ((n, m), pair) in elements.iter().zip(order.chunks(2)) {
        let din = layout.get(pair[0]).ok_or_else(|| Error::UnknownLabel(pair[0].into()))?.dim;
        let dout = layout.get(pair[1]).ok_or_else(|| Error::UnknownLabel(pair[1].into()))?.dim;
        if (m.in_dim(), m.out_dim()) != (din, dout) {
            return Err(Error::Dimension(format!(
                "element at `{n}` maps {}->{}, process has {din}->{dout}",
                m.in_dim(),
                m.out_dim()
            )));
        }
    }
    let (mut r, _) = permute_factors(w, layout, &order)?;
    for (_, m) in elements {
        r = pair_leading(&r, m.choi().matrix())?;
    }
    finish(r[(0, 0)])
}

/// Raw Born table for `scheme` on `lp`, without normalization checks.
pub fn born_table(scheme: &SchemeAssignment, lp: &LayeredProcess, exec: Execution) -> Result<OutcomeTable> {
    let nodes: Vec<&Node> = lp.nodes().collect();
    let insts: Vec<&Instrument> = nodes.iter().map(|n| scheme.get(&n.id)).collect::<Result<_>>()?;
    for (n, i) in nodes.iter().zip(&insts) {
        if (i.in_dim(), i.out_dim()) != (n.dim, n.dim) {
            return Err(Error::Dimension(format!("instrument at `{}` does not match dimension {}", n.id, n.dim)));
        }
    }
    let axes: Vec<Axis> =
        nodes.iter().zip(&insts).map(|(n, i)| Axis { node: n.id.clone(), outcomes: i.outcomes().to_vec() }).collect();
    let total = table_size(&axes)?;
    let (w, _) = lp.assemble_node_pairs()?;
    let chois: Vec<Vec<ComplexMatrix>> =
        insts.iter().map(|i| i.maps().iter().map(|m| m.choi().into_matrix()).collect()).collect();
    let sizes: Vec<usize> = chois.iter().map(Vec::len).collect();

    // Split into independent tasks over outcome prefixes; each task owns a
    // contiguous block of the table because the first axis varies slowest.
    let mut prefix_len = 0;
    let mut tasks = 1;
    while prefix_len < sizes.len() && tasks < 64 {
        tasks *= sizes[prefix_len];
        prefix_len += 1;
    }
    let block = total / tasks;
    let blocks = exec.map_range(tasks, |t| -> Result<Vec<f64>> {
        let mut idx = vec![0; prefix_len];
        let mut rem = t;
        for k in (0..prefix_len).rev() {
            idx[k] = rem % sizes[k];
            rem /= sizes[k];
        }
        let mut r = w.clone();
        for (k, &v) in idx.iter().enumerate() {
            r = pair_leading(&r, &chois[k][v])?;
        }
        let mut out = Vec::with_capacity(block);
        contract_rest(&r, &chois[prefix_len..], &mut out)?;
        Ok(out)
    });
    let mut probs = Vec::with_capacity(total);
    for b in blocks {
        probs.extend(b?);
    }
    OutcomeTable::new(axes, probs)
}

fn contract_rest(r: &ComplexMatrix, chois: &[Vec<ComplexMatrix>], out: &mut Vec<f64>) -> Result<()> {
    match chois.split_first() {
        None => {
            out.push(finish(r[(0, 0)])?);
            Ok(())
        }
        Some((head, tail)) => {
            for c in head {
                contract_rest(&pair_leading(r, c)?, tail, out)?;
            }
            Ok(())
        }
    }
}

fn checked(t: OutcomeTable) -> Result<OutcomeTable> {
    if !t.is_normalized(1e-9) {
        return Err(Error::Numerical(format!(
            "Born table sums to {:.12} with minimum entry {:.3e}; the process is not valid",
            t.total(),
            t.min_entry()
        )));
    }
    Ok(t)
}

pub fn observational_distribution(scheme: &SchemeAssignment, lp: &LayeredProcess) -> Result<OutcomeTable> {
    observational_distribution_with(scheme, lp, Execution::default())
}

pub fn observational_distribution_with(
    scheme: &SchemeAssignment,
    lp: &LayeredProcess,
    exec: Execution,
) -> Result<OutcomeTable> {
    checked(born_table(scheme, lp, exec)?)
}

pub fn intervened_distribution(
    scheme: &SchemeAssignment,
    substitutions: &HashMap<String, Instrument>,
    lp: &LayeredProcess,
) -> Result<OutcomeTable> {
    observational_distribution(&scheme.with_substitutions(substitutions)?, lp)
}

/// `P(y_{j+1} | y_j)` over joint layer outcomes; `None` rows have `P(y_j) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conditional {
    pub from: Vec<String>,
    pub to: Vec<String>,
    pub rows: Vec<Option<Vec<f64>>>,
}

impl Conditional {
    pub fn absent_rows(&self) -> Vec<usize> {
        self.rows.iter().enumerate().filter(|(_, r)| r.is_none()).map(|(i, _)| i).collect()
    }
}

/// First-layer marginal plus consecutive-layer conditionals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConditionals {
    pub layers: Vec<Vec<String>>,
    pub marginal: Vec<f64>,
    pub conditionals: Vec<Conditional>,
}

impl ChainConditionals {
    /// `P(y_1) Π_j P(y_{j+1} | y_j)` for joint layer outcome indices.
    pub fn chain_product(&self, ys: &[usize]) -> f64 {
        let mut p = self.marginal[ys[0]];
        for (j, c) in self.conditionals.iter().enumerate() {
            match &c.rows[ys[j]] {
                Some(row) => p *= row[ys[j + 1]],
                None => return 0.0,
            }
        }
        p
    }
}

/// Zero-marginal threshold for conditioning.
pub const ABSENT_ROW: f64 = 1e-14;

/// Conditional table of `to` given `from` from the joint marginal.
pub fn conditional(t: &OutcomeTable, from: &[String], to: &[String]) -> Result<Conditional> {
    let f: Vec<&str> = from.iter().map(String::as_str).collect();
    let g: Vec<&str> = to.iter().map(String::as_str).collect();
    let (joint, nr, nc) = t.joint_matrix(&f, &g)?;
    let rows = (0..nr)
        .map(|a| {
            let row = &joint[a * nc..(a + 1) * nc];
            let pa: f64 = row.iter().sum();
            (pa > ABSENT_ROW).then(|| row.iter().map(|x| x / pa).collect())
        })
        .collect();
    Ok(Conditional { from: from.to_vec(), to: to.to_vec(), rows })
}

pub fn layer_conditionals(t: &OutcomeTable, layering: &Layering) -> Result<ChainConditionals> {
    let first: Vec<&str> = layering.layers.first().ok_or_else(|| Error::Process("empty layering".into()))?
        .iter()
        .map(String::as_str)
        .collect();
    let marginal = t.marginal(&first)?.probs();
    let conditionals = layering
        .layers
        .windows(2)
        .map(|w| conditional(t, &w[0], &w[1]))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChainConditionals { layers: layering.layers.clone(), marginal, conditionals })
}

/// Joint outcome indices per layer for a flat index of a table whose axes are in layer order.
pub fn layer_indices(t: &OutcomeTable, layering: &Layering, flat: usize) -> Vec<usize> {
    let idx = t.multi_index(flat);
    let mut out = Vec::with_capacity(layering.len());
    let mut k = 0;
    for l in &layering.layers {
        let mut y = 0;
        for _ in l {
            y = y * t.axes[k].outcomes.len() + idx[k];
            k += 1;
        }
        out.push(y);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instrument::sic_projectors;
    use crate::process::{random_unbiased_segment, Segment};
    use crate::random::{random_density, rng};

    fn chain(ids: &[&str], d: usize) -> Vec<Vec<Node>> {
        ids.iter().map(|id| vec![Node { id: id.to_string(), dim: d }]).collect()
    }

    fn flat_nodes(layers: &[Vec<Node>]) -> Vec<Node> {
        layers.iter().flatten().cloned().collect()
    }

    #[test]
    fn one_node_reduces_to_trace_rule() {
        let rho = random_density(2, &mut rng(8));
        let lp = LayeredProcess::new(chain(&["A"], 2), rho.clone(), vec![]).unwrap();
        let (w, layout) = lp.assemble().unwrap();
        let sic = sic_instrument("A", 2).unwrap();
        for (m, p) in sic.maps().iter().zip(sic_projectors(2).unwrap()) {
            let born = born_probability(&[("A", m)], &w, &layout).unwrap();
            assert!((born - 0.5 * rho.trace_product(&p).re).abs() < 1e-14);
        }
    }

    #[test]
    fn identity_instruments_give_one() {
        let layers = chain(&["A", "B"], 2);
        let lp = LayeredProcess::unbiased(layers, vec![random_unbiased_segment(2, 3, 1).unwrap()]).unwrap();
        let (w, layout) = lp.assemble().unwrap();
        let id = CPMap::identity(2);
        assert!((born_probability(&[("A", &id), ("B", &id)], &w, &layout).unwrap() - 1.0).abs() < 1e-12);
        // Element order does not matter.
        assert!((born_probability(&[("B", &id), ("A", &id)], &w, &layout).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_layer_uniform_table() {
        let layers = chain(&["A"], 2);
        let lp = LayeredProcess::unbiased(layers.clone(), vec![]).unwrap();
        let t = observational_distribution(&SchemeAssignment::sic(&flat_nodes(&layers)).unwrap(), &lp).unwrap();
        for p in t.probs() {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_chain_table_and_conditionals() {
        let layers = chain(&["A", "B"], 2);
        let lp = LayeredProcess::unbiased(layers.clone(), vec![Segment::identity(2)]).unwrap();
        let t = observational_distribution(&SchemeAssignment::sic(&flat_nodes(&layers)).unwrap(), &lp).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let expect = if a == b { 1.0 / 8.0 } else { 1.0 / 24.0 };
                assert!((t.get(&[a, b]) - expect).abs() < 1e-14);
            }
        }
        assert!((t.total() - 1.0).abs() < 1e-14);
        let cc = layer_conditionals(&t, &lp.layering()).unwrap();
        let ps = sic_projectors(2).unwrap();
        for a in 0..4 {
            let row = cc.conditionals[0].rows[a].as_ref().unwrap();
            for b in 0..4 {
                assert!((row[b] - 0.5 * ps[a].trace_product(&ps[b]).re).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn uniform_table_has_uniform_conditionals() {
        let axes = vec![
            Axis { node: "A".into(), outcomes: vec!["0".into(), "1".into()] },
            Axis { node: "B".into(), outcomes: vec!["0".into(), "1".into(), "2".into()] },
        ];
        let t = OutcomeTable::new(axes, vec![1.0 / 6.0; 6]).unwrap();
        let cc = layer_conditionals(&t, &Layering::new(vec![vec!["A".into()], vec!["B".into()]])).unwrap();
        for row in &cc.conditionals[0].rows {
            for p in row.as_ref().unwrap() {
                assert!((p - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn markov_table_round_trips_through_conditionals() {
        let p1 = [0.2, 0.8];
        let t12 = [[0.9, 0.1], [0.3, 0.7]];
        let t23 = [[0.5, 0.5], [0.25, 0.75]];
        let mut probs = Vec::new();
        for a in 0..2 {
            for b in 0..2 {
                for t in t23[b] {
                    probs.push(p1[a] * t12[a][b] * t);
                }
            }
        }
        let bin = || vec!["0".to_string(), "1".to_string()];
        let axes = ["A", "B", "C"].iter().map(|n| Axis { node: n.to_string(), outcomes: bin() }).collect();
        let t = OutcomeTable::new(axes, probs).unwrap();
        let layering = Layering::new(vec![vec!["A".into()], vec!["B".into()], vec!["C".into()]]);
        let cc = layer_conditionals(&t, &layering).unwrap();
        assert!((cc.marginal[0] - 0.2).abs() < 1e-15);
        for a in 0..2 {
            for b in 0..2 {
                assert!((cc.conditionals[0].rows[a].as_ref().unwrap()[b] - t12[a][b]).abs() < 1e-14);
                assert!((cc.conditionals[1].rows[a].as_ref().unwrap()[b] - t23[a][b]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn parallel_and_sequential_tables_are_identical() {
        let layers = chain(&["A", "B", "C"], 2);
        let segs = vec![random_unbiased_segment(2, 2, 3).unwrap(), random_unbiased_segment(2, 2, 4).unwrap()];
        let lp = LayeredProcess::unbiased(layers.clone(), segs).unwrap();
        let s = SchemeAssignment::sic(&flat_nodes(&layers)).unwrap();
        let a = observational_distribution_with(&s, &lp, Execution::Sequential).unwrap();
        let b = observational_distribution_with(&s, &lp, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn table_matches_pointwise_born_rule() {
        let layers = vec![
            vec![Node { id: "A".into(), dim: 2 }],
            vec![Node { id: "B".into(), dim: 2 }, Node { id: "C".into(), dim: 2 }],
        ];
        // A -> B ⊗ C: copy A's state into B and prepare C in |0>.
        let e = crate::tensor::c(1.0, 0.0);
        let z = crate::tensor::c(0.0, 0.0);
        let embed = ComplexMatrix::from_rows(&[vec![e, z], vec![z, z], vec![z, e], vec![z, z]]).unwrap();
        let seg = Segment::from_channel(&CPMap::new(vec![embed]).unwrap());
        let lp = LayeredProcess::unbiased(layers.clone(), vec![seg]).unwrap();
        let s = SchemeAssignment::sic(&flat_nodes(&layers)).unwrap();
        let t = observational_distribution(&s, &lp).unwrap();
        let (w, layout) = lp.assemble().unwrap();
        for flat in 0..t.len() {
            let labels = t.labels(flat);
            let elements: Vec<(&str, &CPMap)> = ["A", "B", "C"]
                .iter()
                .zip(&labels)
                .map(|(n, l)| (*n, s.get(n).unwrap().element(l).unwrap()))
                .collect();
            assert!((born_probability(&elements, &w, &layout).unwrap() - t.prob(flat)).abs() < 1e-14);
        }
    }

    #[test]
    fn discard_prepare_substitution_pins_next_layer() {
        let layers = chain(&["A", "B"], 2);
        let lp = LayeredProcess::unbiased(layers.clone(), vec![Segment::identity(2)]).unwrap();
        let s = SchemeAssignment::sic(&flat_nodes(&layers)).unwrap();
        let zero = [crate::tensor::c(1.0, 0.0), crate::tensor::c(0.0, 0.0)];
        let mut subs = HashMap::new();
        subs.insert("A".to_string(), Instrument::discard_prepare("A", 2, &zero).unwrap());
        let t = intervened_distribution(&s, &subs, &lp).unwrap();
        let mb = t.marginal(&["B"]).unwrap();
        let ket0 = ComplexMatrix::projector(&zero);
        for (f, p) in s.get("B").unwrap().povm().iter().zip(mb.probs()) {
            assert!((p - ket0.trace_product(f).re).abs() < 1e-14);
        }
        assert_eq!(intervened_distribution(&s, &HashMap::new(), &lp).unwrap(), observational_distribution(&s, &lp).unwrap());
    }

    #[test]
    fn mismatched_layout_is_caught() {
        let w = kron(&ComplexMatrix::identity(2).scale_real(0.5), &ComplexMatrix::identity(2));
        let layout = SpaceLayout::new(vec![
            crate::tensor::Factor::node("A", 2, Role::In),
            crate::tensor::Factor::node("A", 2, Role::Out),
        ])
        .unwrap();
        let m = CPMap::identity(3);
        assert!(matches!(born_probability(&[("A", &m)], &w, &layout), Err(Error::Dimension(_))));
    }

    #[test]
    fn reorder_and_diff_by_node_id() {
        let axes = vec![
            Axis { node: "A".into(), outcomes: vec!["0".into(), "1".into()] },
            Axis { node: "B".into(), outcomes: vec!["0".into(), "1".into()] },
        ];
        let t = OutcomeTable::new(axes, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let r = t.reorder(&["B", "A"]).unwrap();
        assert_eq!(r.raw(), &[0.1, 0.3, 0.2, 0.4]);
        assert_eq!(t.max_abs_diff(&r).unwrap(), 0.0);
    }

    #[test]
    fn size_cap() {
        let axes: Vec<Axis> = (0..11)
            .map(|k| Axis { node: format!("N{k}"), outcomes: (0..4).map(|v| v.to_string()).collect() })
            .collect();
        assert!(matches!(OutcomeTable::new(axes, vec![]), Err(Error::TableTooLarge { .. })));
    }
}
