//! Classical functional causal models with finite lookup-table mechanisms.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::graph::{CausalDag, Node};
use crate::random::rng;
use crate::scheme::{Axis, OutcomeTable};

/// Joint table over node values; outcome labels are `"0".."d-1"`.
pub type ClassicalTable = OutcomeTable;

/// Exact-comparison tolerance for classical tables.
pub const CLASSICAL_TOL: f64 = 1e-12;

/// Cap on the number of noise tuples an enumeration may visit.
pub const MAX_NOISE_TUPLES: usize = 1 << 24;

/// `f(pa, η)` as a table: `table[parent_config][noise]`, parent
/// configurations in mixed radix over `parents` (first parent slowest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mechanism {
    #[serde(default)]
    pub parents: Vec<String>,
    pub noise: Vec<f64>,
    pub table: Vec<Vec<usize>>,
}

impl Mechanism {
    pub fn constant(value: usize) -> Self {
        Self { parents: vec![], noise: vec![1.0], table: vec![vec![value]] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSpec {
    graph: CausalDag,
    mechanisms: BTreeMap<String, Mechanism>,
}

/// A DAG with one mechanism per node. Node `dim` is the size of its value domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpec", into = "ModelSpec")]
pub struct FunctionalModel {
    dag: CausalDag,
    mechanisms: Vec<Mechanism>,
    /// Parent indices per node, in the mechanism's own order.
    parents: Vec<Vec<usize>>,
    order: Vec<usize>,
}

impl TryFrom<ModelSpec> for FunctionalModel {
    type Error = Error;

    fn try_from(mut s: ModelSpec) -> Result<Self> {
        let mut mechs = Vec::with_capacity(s.graph.node_count());
        for n in s.graph.nodes() {
            let m = s.mechanisms.remove(&n.id).ok_or_else(|| Error::Classical(format!("no mechanism for `{}`", n.id)))?;
            mechs.push(m);
        }
        if let Some(extra) = s.mechanisms.keys().next() {
            return Err(Error::UnknownLabel(extra.clone()));
        }
        FunctionalModel::new(s.graph, mechs)
    }
}

impl From<FunctionalModel> for ModelSpec {
    fn from(fm: FunctionalModel) -> Self {
        let mechanisms = fm.dag.nodes().iter().map(|n| n.id.clone()).zip(fm.mechanisms).collect();
        ModelSpec { graph: fm.dag, mechanisms }
    }
}

impl FunctionalModel {
    /// Mechanisms are given in node declaration order.
    pub fn new(dag: CausalDag, mechanisms: Vec<Mechanism>) -> Result<Self> {
        dag.validate()?;
        if mechanisms.len() != dag.node_count() {
            return Err(Error::Classical(format!("{} mechanisms for {} nodes", mechanisms.len(), dag.node_count())));
        }
        let mut parents = Vec::with_capacity(mechanisms.len());
        for (i, (node, m)) in dag.nodes().iter().zip(&mechanisms).enumerate() {
            let idx: Vec<usize> = m
                .parents
                .iter()
                .map(|p| dag.index_of(p).ok_or_else(|| Error::UnknownLabel(p.clone())))
                .collect::<Result<_>>()?;
            let mut sorted = idx.clone();
            sorted.sort_unstable();
            if sorted != dag.parents(i) {
                return Err(Error::Classical(format!("mechanism parents of `{}` do not match the graph", node.id)));
            }
            check_mechanism(&dag, node, m, &idx)?;
            parents.push(idx);
        }
        let order = dag.topological_sets()?.iter().flatten().map(|id| dag.index_of(id).expect("own id")).collect();
        Ok(Self { dag, mechanisms, parents, order })
    }

    pub fn dag(&self) -> &CausalDag {
        &self.dag
    }

    pub fn mechanisms(&self) -> &[Mechanism] {
        &self.mechanisms
    }

    fn noise_tuples(&self) -> Result<usize> {
        self.mechanisms
            .iter()
            .try_fold(1usize, |acc, m| acc.checked_mul(m.noise.len()).filter(|&n| n <= MAX_NOISE_TUPLES))
            .ok_or(Error::TableTooLarge { required: usize::MAX, cap: MAX_NOISE_TUPLES })
    }

    fn parent_config(&self, i: usize, values: &[usize]) -> usize {
        self.parents[i].iter().fold(0, |acc, &p| acc * self.dag.nodes()[p].dim + values[p])
    }

    /// Values of every node for one noise tuple.
    fn solve(&self, noise: &[usize]) -> Vec<usize> {
        let mut values = vec![0; self.mechanisms.len()];
        for &i in &self.order {
            values[i] = self.mechanisms[i].table[self.parent_config(i, &values)][noise[i]];
        }
        values
    }
}

fn check_mechanism(dag: &CausalDag, node: &Node, m: &Mechanism, parents: &[usize]) -> Result<()> {
    let fail = |msg: String| Err(Error::Classical(format!("mechanism `{}`: {msg}", node.id)));
    if m.noise.is_empty() {
        return fail("empty noise domain".into());
    }
    if m.noise.iter().any(|&p| !p.is_finite() || p < 0.0) {
        return fail("noise probabilities must be finite and nonnegative".into());
    }
    let total: f64 = m.noise.iter().sum();
    if (total - 1.0).abs() > CLASSICAL_TOL {
        return fail(format!("noise probabilities sum to {total}"));
    }
    let configs: usize = parents.iter().map(|&p| dag.nodes()[p].dim).product();
    if m.table.len() != configs {
        return fail(format!("{} table rows for {configs} parent configurations", m.table.len()));
    }
    for (r, row) in m.table.iter().enumerate() {
        if row.len() != m.noise.len() {
            return fail(format!("row {r} has {} entries for {} noise values", row.len(), m.noise.len()));
        }
        if let Some(v) = row.iter().find(|&&v| v >= node.dim) {
            return fail(format!("row {r} outputs {v}, outside domain of size {}", node.dim));
        }
    }
    Ok(())
}

fn axes(dag: &CausalDag) -> Vec<Axis> {
    dag.nodes()
        .iter()
        .map(|n| Axis { node: n.id.clone(), outcomes: (0..n.dim).map(|v| v.to_string()).collect() })
        .collect()
}

fn radix(flat: usize, sizes: &[usize]) -> Vec<usize> {
    let mut out = vec![0; sizes.len()];
    let mut f = flat;
    for (k, &n) in sizes.iter().enumerate().rev() {
        out[k] = f % n;
        f /= n;
    }
    out
}

/// Exact `P(V)`: sum over all noise tuples of their probability.
pub fn enumerate_distribution(fm: &FunctionalModel) -> Result<ClassicalTable> {
    enumerate_distribution_with(fm, Execution::Sequential)
}

pub fn enumerate_distribution_with(fm: &FunctionalModel, exec: Execution) -> Result<ClassicalTable> {
    let n = fm.noise_tuples()?;
    let sizes: Vec<usize> = fm.mechanisms.iter().map(|m| m.noise.len()).collect();
    let axes = axes(&fm.dag);
    let shape: Vec<usize> = fm.dag.nodes().iter().map(|n| n.dim).collect();
    let contributions = exec.map_range(n, |k| {
        let eta = radix(k, &sizes);
        let p: f64 = eta.iter().zip(&fm.mechanisms).map(|(&e, m)| m.noise[e]).product();
        let v = fm.solve(&eta);
        (v.iter().zip(&shape).fold(0, |acc, (&x, &d)| acc * d + x), p)
    });
    let mut probs = vec![0.0; shape.iter().product()];
    for (flat, p) in contributions {
        probs[flat] += p;
    }
    OutcomeTable::new(axes, probs)
}

/// Samples from the model; each row lists node values in declaration order.
pub fn sample(fm: &FunctionalModel, n: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let mut r = rng(seed);
    let dists = fm
        .mechanisms
        .iter()
        .map(|m| WeightedIndex::new(&m.noise).map_err(|e| Error::Classical(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..n)
        .map(|_| {
            let eta: Vec<usize> = dists.iter().map(|d| d.sample(&mut r)).collect();
            fm.solve(&eta)
        })
        .collect())
}

/// Relative frequencies of sampled rows.
pub fn empirical_table(dag: &CausalDag, samples: &[Vec<usize>]) -> Result<ClassicalTable> {
    let shape: Vec<usize> = dag.nodes().iter().map(|n| n.dim).collect();
    let mut probs = vec![0.0; shape.iter().product()];
    let w = 1.0 / samples.len().max(1) as f64;
    for row in samples {
        if row.len() != shape.len() || row.iter().zip(&shape).any(|(v, d)| v >= d) {
            return Err(Error::Classical(format!("sample {row:?} does not fit the graph")));
        }
        probs[row.iter().zip(&shape).fold(0, |acc, (&x, &d)| acc * d + x)] += w;
    }
    OutcomeTable::new(axes(dag), probs)
}

/// `P(V_i = v | pa_i = c)` as `rows[c][v]`; `None` where `P(pa_i = c) = 0`.
#[derive(Debug, Clone, PartialEq)]
struct NodeConditional {
    parents: Vec<usize>,
    rows: Vec<Option<Vec<f64>>>,
}

fn node_conditionals(t: &ClassicalTable, g: &CausalDag) -> Result<Vec<NodeConditional>> {
    let tn: Vec<&str> = t.axes().iter().map(|a| a.node.as_str()).collect();
    let gn: Vec<&str> = g.nodes().iter().map(|n| n.id.as_str()).collect();
    if tn != gn || t.shape() != g.nodes().iter().map(|n| n.dim).collect::<Vec<_>>() {
        return Err(Error::Classical("table axes do not match the graph's nodes and domains".into()));
    }
    let dims = t.shape();
    let mut out = Vec::with_capacity(dims.len());
    for i in 0..dims.len() {
        let parents = g.parents(i);
        let configs: usize = parents.iter().map(|&p| dims[p]).product();
        let mut joint = vec![vec![0.0; dims[i]]; configs];
        for flat in 0..t.len() {
            let idx = t.multi_index(flat);
            let c = parents.iter().fold(0, |acc, &p| acc * dims[p] + idx[p]);
            joint[c][idx[i]] += t.prob(flat);
        }
        let rows = joint
            .into_iter()
            .map(|row| {
                let m: f64 = row.iter().sum();
                (m > 0.0).then(|| row.iter().map(|x| x / m).collect())
            })
            .collect();
        out.push(NodeConditional { parents, rows });
    }
    Ok(out)
}

fn config_of(parents: &[usize], dims: &[usize], idx: &[usize]) -> usize {
    parents.iter().fold(0, |acc, &p| acc * dims[p] + idx[p])
}

/// A parent configuration with zero probability, skipped by the check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRow {
    pub node: String,
    pub parent_values: Vec<usize>,
}

/// Local deviation of one factor: max over entries of `|P(v_i | v_<i) - P(v_i | pa_i)|`,
/// with `v_<i` the nodes before `i` in topological order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorDeviation {
    pub node: String,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmcReport {
    pub ok: bool,
    pub tolerance: f64,
    /// Max entrywise `|P(V) - Π_i P(V_i | pa_i)|`.
    pub max_deviation: f64,
    pub worst_entry: Vec<usize>,
    pub factors: Vec<FactorDeviation>,
    /// First factor in topological order whose local deviation exceeds the tolerance.
    pub violating_factor: Option<String>,
    pub skipped: Vec<SkippedRow>,
}

/// Checks `P(V) = Π_i P(V_i | pa_i)` entrywise.
pub fn check_cmc(t: &ClassicalTable, g: &CausalDag) -> Result<CmcReport> {
    check_cmc_tol(t, g, CLASSICAL_TOL)
}

pub fn check_cmc_tol(t: &ClassicalTable, g: &CausalDag, tol: f64) -> Result<CmcReport> {
    let conds = node_conditionals(t, g)?;
    let dims = t.shape();
    let mut skipped = Vec::new();
    for (i, c) in conds.iter().enumerate() {
        for (k, row) in c.rows.iter().enumerate() {
            if row.is_none() {
                let psz: Vec<usize> = c.parents.iter().map(|&p| dims[p]).collect();
                skipped.push(SkippedRow { node: g.nodes()[i].id.clone(), parent_values: radix(k, &psz) });
            }
        }
    }
    let mut max_deviation: f64 = 0.0;
    let mut worst = 0;
    for flat in 0..t.len() {
        let idx = t.multi_index(flat);
        let f: f64 = conds
            .iter()
            .enumerate()
            .map(|(i, c)| c.rows[config_of(&c.parents, &dims, &idx)].as_ref().map_or(0.0, |r| r[idx[i]]))
            .product();
        let d = (t.prob(flat) - f).abs();
        if d > max_deviation {
            max_deviation = d;
            worst = flat;
        }
    }

    let order: Vec<usize> = g.topological_sets()?.iter().flatten().map(|id| g.index_of(id).expect("own id")).collect();
    let mut factors = Vec::with_capacity(order.len());
    for (pos, &i) in order.iter().enumerate() {
        let before = &order[..pos];
        let mut prefix_and_i: Vec<usize> = before.to_vec();
        prefix_and_i.push(i);
        let full = joint_over(t, &dims, &prefix_and_i);
        let pre = joint_over(t, &dims, before);
        let c = &conds[i];
        let mut dev: f64 = 0.0;
        let sizes: Vec<usize> = prefix_and_i.iter().map(|&k| dims[k]).collect();
        for (k, &p) in full.iter().enumerate() {
            let vals = radix(k, &sizes);
            let m = pre[k / dims[i]];
            if m <= 0.0 {
                continue;
            }
            let mut idx = vec![0; dims.len()];
            for (&n, &v) in prefix_and_i.iter().zip(&vals) {
                idx[n] = v;
            }
            let local = c.rows[config_of(&c.parents, &dims, &idx)].as_ref().map_or(0.0, |r| r[idx[i]]);
            dev = dev.max((p / m - local).abs());
        }
        factors.push(FactorDeviation { node: g.nodes()[i].id.clone(), deviation: dev });
    }
    let violating_factor = factors.iter().find(|f| f.deviation > tol).map(|f| f.node.clone());
    Ok(CmcReport {
        ok: max_deviation <= tol,
        tolerance: tol,
        max_deviation,
        worst_entry: t.multi_index(worst),
        factors,
        violating_factor,
        skipped,
    })
}

/// Marginal over node indices `nodes`, first slowest.
fn joint_over(t: &ClassicalTable, dims: &[usize], nodes: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; nodes.iter().map(|&n| dims[n]).product()];
    for flat in 0..t.len() {
        let idx = t.multi_index(flat);
        out[nodes.iter().fold(0, |acc, &n| acc * dims[n] + idx[n])] += t.prob(flat);
    }
    out
}

/// `P(V | do(V_j = x)) = δ(V_j, x) Π_{i≠j} P(V_i | pa_i)` from the table's own conditionals.
///
/// A conditional whose parent configuration has zero observed probability is
/// undefined; it is an error only if the intervention gives that configuration
/// positive weight.
pub fn do_distribution(t: &ClassicalTable, g: &CausalDag, node: &str, value: usize) -> Result<ClassicalTable> {
    let j = g.index_of(node).ok_or_else(|| Error::UnknownLabel(node.to_string()))?;
    let dims = t.shape();
    let conds = node_conditionals(t, g)?;
    if value >= dims[j] {
        return Err(Error::Classical(format!("value {value} is outside the domain of `{node}` (size {})", dims[j])));
    }
    let order: Vec<usize> = g.topological_sets()?.iter().flatten().map(|id| g.index_of(id).expect("own id")).collect();
    let mut probs = vec![0.0; t.len()];
    for (flat, slot) in probs.iter_mut().enumerate() {
        let idx = t.multi_index(flat);
        if idx[j] != value {
            continue;
        }
        let mut p = 1.0;
        for &i in order.iter().filter(|&&i| i != j) {
            let c = &conds[i];
            match &c.rows[config_of(&c.parents, &dims, &idx)] {
                Some(r) => p *= r[idx[i]],
                None if p == 0.0 => {}
                None => {
                    return Err(Error::Classical(format!(
                        "P({} | parents) is undefined at {:?}: the parent configuration has probability zero",
                        g.nodes()[i].id,
                        c.parents.iter().map(|&q| idx[q]).collect::<Vec<_>>()
                    )))
                }
            }
        }
        *slot = p;
    }
    OutcomeTable::new(t.axes().to_vec(), probs)
}

/// Replaces the mechanism of `node` by the constant `value` and drops its incoming edges.
pub fn mutilate(fm: &FunctionalModel, node: &str, value: usize) -> Result<FunctionalModel> {
    let j = fm.dag.index_of(node).ok_or_else(|| Error::UnknownLabel(node.to_string()))?;
    let dim = fm.dag.nodes()[j].dim;
    if value >= dim {
        return Err(Error::Classical(format!("value {value} is outside the domain of `{node}` (size {dim})")));
    }
    let edges = fm
        .dag
        .edge_ids()
        .filter(|&(_, b)| b != node)
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    let dag = CausalDag::new(fm.dag.nodes().to_vec(), edges)?;
    let mut mechs = fm.mechanisms.clone();
    mechs[j] = Mechanism::constant(value);
    FunctionalModel::new(dag, mechs)
}

/// Mutual information `I(A;B)` in bits, optionally restricted to the event `given`
/// (a list of `(node, value)` pins) and renormalized.
pub fn mutual_information(t: &ClassicalTable, a: &str, b: &str, given: &[(&str, usize)]) -> Result<f64> {
    let pa = t.axis_position(a)?;
    let pb = t.axis_position(b)?;
    let pins: Vec<(usize, usize)> =
        given.iter().map(|&(n, v)| Ok((t.axis_position(n)?, v))).collect::<Result<_>>()?;
    let shape = t.shape();
    let mut joint = vec![vec![0.0; shape[pb]]; shape[pa]];
    let mut total = 0.0;
    for flat in 0..t.len() {
        let idx = t.multi_index(flat);
        if pins.iter().all(|&(p, v)| idx[p] == v) {
            joint[idx[pa]][idx[pb]] += t.prob(flat);
            total += t.prob(flat);
        }
    }
    if total <= 0.0 {
        return Err(Error::Classical("conditioning event has probability zero".into()));
    }
    let ma: Vec<f64> = joint.iter().map(|r| r.iter().sum::<f64>() / total).collect();
    let mb: Vec<f64> = (0..shape[pb]).map(|y| joint.iter().map(|r| r[y]).sum::<f64>() / total).collect();
    let mut mi = 0.0;
    for (x, row) in joint.iter().enumerate() {
        for (y, &p) in row.iter().enumerate() {
            let p = p / total;
            if p > 0.0 {
                mi += p * (p / (ma[x] * mb[y])).log2();
            }
        }
    }
    Ok(mi.max(0.0))
}

/// `V1 -> V3 <- V2` with uniform roots and `V3 = V1 xor V2`.
pub fn xor_collider() -> FunctionalModel {
    let dag = CausalDag::uniform(&["V1", "V2", "V3"], &[("V1", "V3"), ("V2", "V3")], 2).expect("valid graph");
    let root = Mechanism { parents: vec![], noise: vec![0.5, 0.5], table: vec![vec![0, 1]] };
    let xor = Mechanism {
        parents: vec!["V1".into(), "V2".into()],
        noise: vec![1.0],
        table: vec![vec![0], vec![1], vec![1], vec![0]],
    };
    FunctionalModel::new(dag, vec![root.clone(), root, xor]).expect("valid model")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_model(p: f64) -> FunctionalModel {
        let dag = CausalDag::uniform(&["V1", "V2"], &[("V1", "V2")], 2).unwrap();
        let root = Mechanism { parents: vec![], noise: vec![0.3, 0.7], table: vec![vec![0, 1]] };
        let flip = Mechanism { parents: vec!["V1".into()], noise: vec![1.0 - p, p], table: vec![vec![0, 1], vec![1, 0]] };
        FunctionalModel::new(dag, vec![root, flip]).unwrap()
    }

    #[test]
    fn single_uniform_node() {
        let dag = CausalDag::uniform(&["A"], &[], 2).unwrap();
        let m = Mechanism { parents: vec![], noise: vec![0.5, 0.5], table: vec![vec![0, 1]] };
        let t = enumerate_distribution(&FunctionalModel::new(dag, vec![m]).unwrap()).unwrap();
        assert_eq!(t.probs(), vec![0.5, 0.5]);
    }

    #[test]
    fn chain_flip_probability() {
        let p = 0.15;
        let t = enumerate_distribution(&chain_model(p)).unwrap();
        let differ = t.get(&[0, 1]) + t.get(&[1, 0]);
        assert!((differ - p).abs() < 1e-15);
    }

    #[test]
    fn collider_conditioning_correlates_parents() {
        let t = enumerate_distribution(&xor_collider()).unwrap();
        assert!((mutual_information(&t, "V1", "V2", &[("V3", 0)]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(mutual_information(&t, "V1", "V2", &[]).unwrap(), 0.0);
        let g = xor_collider().dag().clone();
        let d = do_distribution(&t, &g, "V3", 0).unwrap();
        assert!(mutual_information(&d, "V1", "V2", &[]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn cmc_holds_for_model_and_uniform_tables() {
        let fm = xor_collider();
        let t = enumerate_distribution(&fm).unwrap();
        assert!(check_cmc(&t, fm.dag()).unwrap().ok);
        let dag = CausalDag::uniform(&["A", "B", "C"], &[("A", "B"), ("C", "B")], 2).unwrap();
        let u = OutcomeTable::new(axes(&dag), vec![0.125; 8]).unwrap();
        assert!(check_cmc(&u, &dag).unwrap().ok);
    }

    #[test]
    fn wrong_structure_is_reported() {
        // Table from A -> B -> C tested against A -> C -> B: C's factor conditions only on A.
        let dag = CausalDag::uniform(&["A", "B", "C"], &[("A", "B"), ("B", "C")], 2).unwrap();
        let root = Mechanism { parents: vec![], noise: vec![0.5, 0.5], table: vec![vec![0, 1]] };
        let noisy = |p: &str| Mechanism { parents: vec![p.into()], noise: vec![0.8, 0.2], table: vec![vec![0, 1], vec![1, 0]] };
        let fm = FunctionalModel::new(dag, vec![root, noisy("A"), noisy("B")]).unwrap();
        let t = enumerate_distribution(&fm).unwrap();
        assert!(check_cmc(&t, fm.dag()).unwrap().ok);
        let wrong = CausalDag::uniform(&["A", "B", "C"], &[("A", "C"), ("C", "B")], 2).unwrap();
        let r = check_cmc(&t, &wrong).unwrap();
        assert!(!r.ok);
        assert!(r.max_deviation > 0.01);
        let collider = CausalDag::uniform(&["A", "B", "C"], &[("A", "B"), ("C", "B")], 2).unwrap();
        let r = check_cmc(&t, &collider).unwrap();
        assert!(!r.ok);
        assert!(r.max_deviation > 0.01);
        assert_eq!(r.violating_factor.as_deref(), Some("C"));
    }

    #[test]
    fn do_on_root_is_conditioning_and_chain_has_no_back_action() {
        let fm = chain_model(0.2);
        let t = enumerate_distribution(&fm).unwrap();
        let d = do_distribution(&t, fm.dag(), "V1", 1).unwrap();
        let pv1 = t.marginal(&["V1"]).unwrap().probs()[1];
        assert!((d.get(&[1, 0]) - t.get(&[1, 0]) / pv1).abs() < 1e-15);
        let d2 = do_distribution(&t, fm.dag(), "V2", 0).unwrap();
        assert_eq!(d2.marginal(&["V1"]).unwrap().probs(), t.marginal(&["V1"]).unwrap().probs());
        assert_eq!(d2.marginal(&["V2"]).unwrap().probs(), vec![1.0, 0.0]);
    }

    #[test]
    fn mutilation_matches_do_on_diamond() {
        let dag = CausalDag::uniform(&["A", "B", "C", "D"], &[("A", "B"), ("A", "C"), ("B", "D"), ("C", "D")], 2).unwrap();
        let root = Mechanism { parents: vec![], noise: vec![0.4, 0.6], table: vec![vec![0, 1]] };
        let copy = |p: &str, q: f64| Mechanism { parents: vec![p.into()], noise: vec![q, 1.0 - q], table: vec![vec![0, 1], vec![1, 0]] };
        let and = Mechanism {
            parents: vec!["C".into(), "B".into()],
            noise: vec![0.9, 0.1],
            table: vec![vec![0, 1], vec![0, 1], vec![0, 1], vec![1, 0]],
        };
        let fm = FunctionalModel::new(dag, vec![root, copy("A", 0.7), copy("A", 0.25), and]).unwrap();
        let t = enumerate_distribution(&fm).unwrap();
        for node in ["A", "B", "C", "D"] {
            for v in 0..2 {
                let viado = do_distribution(&t, fm.dag(), node, v).unwrap();
                let mutilated = enumerate_distribution(&mutilate(&fm, node, v).unwrap()).unwrap();
                assert!(viado.max_abs_diff(&mutilated).unwrap() < 1e-12, "{node}={v}");
            }
        }
    }

    #[test]
    fn undefined_conditional_under_intervention_is_an_error() {
        // B copies A exactly, and A is always 0: P(B | A=1) is undefined.
        let dag = CausalDag::uniform(&["A", "B"], &[("A", "B")], 2).unwrap();
        let fm = FunctionalModel::new(
            dag,
            vec![Mechanism::constant(0), Mechanism { parents: vec!["A".into()], noise: vec![1.0], table: vec![vec![0], vec![1]] }],
        )
        .unwrap();
        let t = enumerate_distribution(&fm).unwrap();
        assert!(matches!(do_distribution(&t, fm.dag(), "A", 1), Err(Error::Classical(_))));
        assert!(do_distribution(&t, fm.dag(), "A", 0).is_ok());
        assert!(do_distribution(&t, fm.dag(), "A", 2).is_err());
        let r = check_cmc(&t, fm.dag()).unwrap();
        assert!(r.ok);
        assert_eq!(r.skipped, vec![SkippedRow { node: "B".into(), parent_values: vec![1] }]);
    }

    #[test]
    fn model_validation() {
        let dag = CausalDag::uniform(&["A", "B"], &[("A", "B")], 2).unwrap();
        let root = Mechanism { parents: vec![], noise: vec![0.5, 0.6], table: vec![vec![0, 1]] };
        assert!(FunctionalModel::new(dag.clone(), vec![root, Mechanism::constant(0)]).is_err());
        let root = Mechanism { parents: vec![], noise: vec![1.0], table: vec![vec![2]] };
        assert!(FunctionalModel::new(dag.clone(), vec![root, Mechanism::constant(0)]).is_err());
        let orphan = Mechanism::constant(0);
        assert!(FunctionalModel::new(dag, vec![Mechanism::constant(1), orphan]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let fm = xor_collider();
        let s = serde_json::to_string(&fm).unwrap();
        let back: FunctionalModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, fm);
        let bad = s.replace("\"V3\":{", "\"V4\":{");
        assert!(serde_json::from_str::<FunctionalModel>(&bad).is_err());
    }

    #[test]
    fn sampling_approaches_enumeration() {
        let fm = chain_model(0.2);
        let t = enumerate_distribution(&fm).unwrap();
        let e = empirical_table(fm.dag(), &sample(&fm, 20_000, 5).unwrap()).unwrap();
        assert!(t.max_abs_diff(&e).unwrap() < 0.02);
        assert_eq!(sample(&fm, 10, 1).unwrap(), sample(&fm, 10, 1).unwrap());
        let par = enumerate_distribution_with(&fm, Execution::Parallel).unwrap();
        assert_eq!(par, t);
    }
}
