//! Linear-inversion reconstruction of layered processes from observational tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::graph::{CausalDag, LayerCheck, Layering, Node};
use crate::process::{validate_segment, LayeredProcess, Segment, SegmentValidity};
use crate::scheme::{born_table, layer_conditionals, layer_frame, layer_indices, Conditional, OutcomeTable, SchemeAssignment};
use crate::tensor::{frame_solve, kron, kron_all, span_rank, ComplexMatrix, DEFAULT_TOL};

/// Fit diagnostics for one reconstructed factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorFit {
    /// Euclidean norm of the frame equations' residual.
    pub residual: f64,
    pub rank: usize,
    pub required_rank: usize,
    pub condition_number: f64,
    /// Conditioning rows skipped because their marginal vanished (joint layer outcome indices).
    pub dropped_rows: Vec<usize>,
    pub validity: SegmentValidity,
}

impl FactorFit {
    pub fn full_rank(&self) -> bool {
        self.rank == self.required_rank
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub tolerance: f64,
    pub initial: FactorFit,
    pub segments: Vec<FactorFit>,
    /// Max deviation of the table from `P(y_1) Π P(y_{j+1}|y_j)`.
    pub chain_residual: f64,
    /// Max deviation of the table from the Born table of the reconstructed process.
    pub table_residual: f64,
    /// Every reconstructed factor passes the validity clauses.
    pub valid: bool,
    pub success: bool,
}

/// Solves `tr[(σ_{y}ᵀ ⊗ F_{y'}) X] = P(y'|y)` for the segment `X`.
///
/// `posts` are the post-states of the conditioning layer and `effects` the
/// effects of the next layer. Rows of `cond` that are absent are skipped; the
/// remaining frame must still span the operator space.
pub fn reconstruct_segment(
    cond: &Conditional,
    posts: &[ComplexMatrix],
    effects: &[ComplexMatrix],
) -> Result<(Segment, FactorFit)> {
    let (d_in, d_out) = (posts[0].rows(), effects[0].rows());
    if cond.rows.len() != posts.len() {
        return Err(Error::Dimension(format!("{} conditioning rows for {} post-states", cond.rows.len(), posts.len())));
    }
    let mut frame = Vec::new();
    let mut coeffs = Vec::new();
    let mut dropped = Vec::new();
    for (y, row) in cond.rows.iter().enumerate() {
        let Some(row) = row else {
            dropped.push(y);
            continue;
        };
        if row.len() != effects.len() {
            return Err(Error::Dimension(format!("conditional row has {} entries for {} effects", row.len(), effects.len())));
        }
        let st = posts[y].transpose();
        for (f, &p) in effects.iter().zip(row) {
            frame.push(kron(&st, f));
            coeffs.push(p);
        }
    }
    if frame.is_empty() {
        return Err(Error::Reconstruction(format!("layer {:?}: every conditioning row has zero probability", cond.from)));
    }
    let sol = frame_solve(&frame, &coeffs)?;
    if !sol.is_full_rank() {
        return Err(Error::Reconstruction(format!(
            "layer {:?}: frame rank {} < {} after dropping zero-probability outcomes {:?}",
            cond.from, sol.rank, sol.required_rank, dropped
        )));
    }
    let seg = Segment::new(sol.solution, d_in, d_out)?;
    let validity = validate_segment(&seg, DEFAULT_TOL);
    let fit = FactorFit {
        residual: sol.residual,
        rank: sol.rank,
        required_rank: sol.required_rank,
        condition_number: sol.condition_number,
        dropped_rows: dropped,
        validity,
    };
    Ok((seg, fit))
}

fn reconstruct_initial(marginal: &[f64], effects: &[ComplexMatrix]) -> Result<(ComplexMatrix, FactorFit)> {
    let sol = frame_solve(effects, marginal)?;
    if !sol.is_full_rank() {
        return Err(Error::Reconstruction(format!(
            "first layer: effect frame rank {} < {}",
            sol.rank, sol.required_rank
        )));
    }
    let d = sol.solution.rows();
    let seg = Segment::new(sol.solution.clone(), 1, d)?;
    let fit = FactorFit {
        residual: sol.residual,
        rank: sol.rank,
        required_rank: sol.required_rank,
        condition_number: sol.condition_number,
        dropped_rows: Vec::new(),
        validity: validate_segment(&seg, DEFAULT_TOL),
    };
    Ok((sol.solution, fit))
}

/// Reconstructs every factor of a layered process from its observational table.
pub fn reconstruct_process(
    t: &OutcomeTable,
    layering: &Layering,
    scheme: &SchemeAssignment,
    tol: f64,
) -> Result<(LayeredProcess, ReconstructionReport)> {
    reconstruct_process_with(t, layering, scheme, tol, Execution::default())
}

pub fn reconstruct_process_with(
    t: &OutcomeTable,
    layering: &Layering,
    scheme: &SchemeAssignment,
    tol: f64,
    exec: Execution,
) -> Result<(LayeredProcess, ReconstructionReport)> {
    for inst in scheme.instruments() {
        if !inst.is_minimal_projective() {
            return Err(Error::Reconstruction(format!(
                "instrument at `{}` is not minimal with rank-1 projective effects",
                inst.node()
            )));
        }
    }
    let order: Vec<&str> = layering.nodes().collect();
    let t = t.reorder(&order)?;
    let cc = layer_conditionals(&t, layering)?;
    let frames = layering.layers.iter().map(|l| layer_frame(scheme, l)).collect::<Result<Vec<_>>>()?;

    let (initial, initial_fit) = reconstruct_initial(&cc.marginal, &frames[0].effects)?;
    let fitted = exec.map_range(cc.conditionals.len(), |j| {
        reconstruct_segment(&cc.conditionals[j], &frames[j].posts, &frames[j + 1].effects)
    });
    let (segments, fits): (Vec<Segment>, Vec<FactorFit>) = fitted.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();

    let layers: Vec<Vec<Node>> = layering
        .layers
        .iter()
        .map(|l| l.iter().map(|id| Ok(Node { id: id.clone(), dim: scheme.get(id)?.in_dim() })).collect())
        .collect::<Result<_>>()?;
    let lp = LayeredProcess::new(layers, initial, segments)?;

    let chain_residual = (0..t.len())
        .map(|flat| (t.prob(flat) - cc.chain_product(&layer_indices(&t, layering, flat))).abs())
        .fold(0.0, f64::max);
    let forward = born_table(scheme, &lp, exec)?;
    let table_residual = t.max_abs_diff(&forward)?;

    let all = std::iter::once(&initial_fit).chain(&fits);
    let valid = all.clone().all(|f| f.validity.is_ok());
    let success = all.clone().all(|f| f.full_rank() && f.residual < tol) && chain_residual < tol && table_residual < tol;
    let report = ReconstructionReport {
        tolerance: tol,
        initial: initial_fit,
        segments: fits,
        chain_residual,
        table_residual,
        valid,
        success,
    };
    Ok((lp, report))
}

/// Frobenius distance between two layered processes, factor by factor and in full.
pub fn process_distance(a: &LayeredProcess, b: &LayeredProcess) -> Result<f64> {
    let (wa, la) = a.assemble()?;
    let (wb, lb) = b.assemble()?;
    if la != lb {
        return Err(Error::Dimension(format!("process layouts differ: {la} vs {lb}")));
    }
    Ok(wa.frobenius_distance(&wb))
}

/// Counting obstruction for a DAG that is not layered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstruction {
    pub sets: Vec<Vec<String>>,
    /// 1-based indices `j' < k' < l'` into `sets`.
    pub triplet: (usize, usize, usize),
    pub path: Vec<String>,
    /// Dimensions of the three sets.
    pub dims: (usize, usize, usize),
    /// `(d_j d_k d_l)²`: number of independent frame operators available.
    pub available: usize,
    /// `(d_j d_k² d_l)²`: dimension of the operator space to be determined.
    pub required: usize,
    /// Numerical rank of the SIC product frame, when it was small enough to compute.
    pub frame_rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Identifiability {
    Identifiable { layers: Vec<Vec<String>> },
    Obstructed(Obstruction),
}

impl Identifiability {
    pub fn is_identifiable(&self) -> bool {
        matches!(self, Identifiability::Identifiable { .. })
    }
}

/// Largest operator-space dimension for which the obstruction frame rank is computed.
pub const MAX_FRAME_CHECK: usize = 4096;

/// Layered DAGs are identifiable from SIC statistics; otherwise report the counting obstruction.
pub fn identifiability_check(g: &CausalDag) -> Result<Identifiability> {
    match g.check_layered()? {
        LayerCheck::Layered(l) => Ok(Identifiability::Identifiable { layers: l.layers }),
        LayerCheck::NotLayered(ob) => {
            let (j, k, l) = ob.triplet;
            let dim = |s: &Vec<String>| -> usize { s.iter().map(|id| g.dim(id).unwrap_or(1)).product() };
            let dims = (dim(&ob.sets[j]), dim(&ob.sets[k]), dim(&ob.sets[l]));
            let available = (dims.0 * dims.1 * dims.2).pow(2);
            let required = (dims.0 * dims.1 * dims.1 * dims.2).pow(2);
            let frame_rank = if required <= MAX_FRAME_CHECK {
                obstruction_frame_rank(g, &ob.sets[j], &ob.sets[k], &ob.sets[l])?
            } else {
                None
            };
            Ok(Identifiability::Obstructed(Obstruction {
                sets: ob.sets,
                triplet: (j + 1, k + 1, l + 1),
                path: ob.path,
                dims,
                available,
                required,
                frame_rank,
            }))
        }
    }
}

/// Rank of `{σ_{s_j}ᵀ ⊗ F_{s_k} ⊗ σ_{s_k}ᵀ ⊗ F_{s_l}}` on `O_j ⊗ I_k ⊗ O_k ⊗ I_l` under SIC
/// instruments; the middle index is shared because one outcome fixes both the
/// effect and the post-state of the middle set. `None` if some node has no SIC.
pub fn obstruction_frame_rank(g: &CausalDag, sj: &[String], sk: &[String], sl: &[String]) -> Result<Option<usize>> {
    let nodes: Vec<Node> = sj.iter().chain(sk).chain(sl).map(|id| Node { id: id.clone(), dim: g.dim(id).unwrap_or(0) }).collect();
    if nodes.iter().any(|n| !(2..=3).contains(&n.dim)) {
        return Ok(None);
    }
    let scheme = SchemeAssignment::sic(&nodes)?;
    let (fj, fk, fl) = (layer_frame(&scheme, sj)?, layer_frame(&scheme, sk)?, layer_frame(&scheme, sl)?);
    let mut ops = Vec::new();
    for pj in &fj.posts {
        let pjt = pj.transpose();
        for (ek, pk) in fk.effects.iter().zip(&fk.posts) {
            let pkt = pk.transpose();
            for el in &fl.effects {
                ops.push(kron_all([&pjt, ek, &pkt, el]));
            }
        }
    }
    Ok(Some(span_rank(&ops)?))
}
