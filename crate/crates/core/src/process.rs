//! Layered process matrices.
//!
//! A [`Segment`] is the Choi matrix of the channel from the outputs of one
//! layer to the inputs of the next, stored over `[map input, map output]`.
//! A [`LayeredProcess`] chains an initial state with one segment per
//! consecutive layer pair; the last layer's outputs are traced out.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CausalDag, Layering, Node};
use crate::instrument::{CPMap, ChoiMatrix};
use crate::random;
use crate::tensor::{
    c, is_psd, kron, kron_all, min_eigenvalue, partial_trace, permute_factors, ComplexMatrix, Factor, Role,
    SpaceLayout, DEFAULT_TOL,
};

/// Largest assembled process dimension accepted by [`LayeredProcess::assemble`].
pub const MAX_PROCESS_DIM: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    matrix: ComplexMatrix,
    d_in: usize,
    d_out: usize,
}

impl Segment {
    pub fn new(matrix: ComplexMatrix, d_in: usize, d_out: usize) -> Result<Self> {
        let n = matrix.require_square()?;
        if d_in == 0 || d_out == 0 || n != d_in * d_out {
            return Err(Error::Dimension(format!("segment matrix of size {n} does not fit dims {d_in}x{d_out}")));
        }
        Ok(Self { matrix, d_in, d_out })
    }

    pub fn from_channel(map: &CPMap) -> Self {
        Self { matrix: map.choi().into_matrix(), d_in: map.in_dim(), d_out: map.out_dim() }
    }

    pub fn identity(d: usize) -> Self {
        Self::from_channel(&CPMap::identity(d))
    }

    /// `I ⊗ |psi><psi|`: discard the input, prepare `psi`.
    pub fn discard_prepare(d_in: usize, psi: &[Complex64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Process("zero preparation vector".into()));
        }
        let psi: Vec<Complex64> = psi.iter().map(|z| z / norm).collect();
        Self::new(kron(&ComplexMatrix::identity(d_in), &ComplexMatrix::projector(&psi)), d_in, psi.len())
    }

    /// Replace every input by the maximally mixed state: `I ⊗ I / d_out`.
    pub fn completely_depolarizing(d_in: usize, d_out: usize) -> Self {
        let m = ComplexMatrix::identity(d_in * d_out).scale_real(1.0 / d_out as f64);
        Self { matrix: m, d_in, d_out }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    fn layout(&self) -> SpaceLayout {
        SpaceLayout::new(vec![Factor::new("in", self.d_in, Role::In), Factor::new("out", self.d_out, Role::Out)])
            .expect("distinct labels")
    }

    /// Partial trace over the map output: the identity for a trace-preserving map.
    pub fn trace_out(&self) -> ComplexMatrix {
        partial_trace(&self.matrix, &self.layout(), &["out"]).expect("layout fits").0
    }

    /// Partial trace over the map input: the image of the identity.
    pub fn trace_in(&self) -> ComplexMatrix {
        partial_trace(&self.matrix, &self.layout(), &["in"]).expect("layout fits").0
    }

    /// Channel action read off the Choi matrix.
    pub fn apply(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        ChoiMatrix::new(self.matrix.clone(), self.d_in, self.d_out)?.apply(rho)
    }

    /// Same matrix read with input and output exchanged; factors are
    /// reordered to keep the `[map input, map output]` convention.
    pub fn swap_io(&self) -> Segment {
        let (m, _) = permute_factors(&self.matrix, &self.layout(), &["out", "in"]).expect("layout fits");
        Segment { matrix: m, d_in: self.d_out, d_out: self.d_in }
    }

    pub fn validate(&self) -> SegmentValidity {
        validate_segment(self, DEFAULT_TOL)
    }

    /// Max deviation of `tr_in W` from `(d_in/d_out) I`.
    pub fn unbiased_deviation(&self) -> f64 {
        let target = ComplexMatrix::identity(self.d_out).scale_real(self.d_in as f64 / self.d_out as f64);
        self.trace_in().max_abs_diff(&target)
    }

    pub fn is_unbiased(&self, tol: f64) -> bool {
        self.unbiased_deviation() <= tol
    }
}

/// The three validity clauses of a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// `W >= 0`.
    Positivity,
    /// Partial trace over the map output equals the identity on the map input.
    PartialTrace,
    /// `tr W` equals the input dimension.
    Trace,
}

impl Condition {
    pub fn describe(self) -> &'static str {
        match self {
            Condition::Positivity => "W >= 0",
            Condition::PartialTrace => "tr_out W = I_in",
            Condition::Trace => "tr W = d_in",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.describe())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub condition: Condition,
    pub deviation: f64,
}

/// Measured deviations for every clause, and the ones above tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentValidity {
    /// `max(0, -λ_min)`, plus any non-Hermitian residue.
    pub positivity: f64,
    pub partial_trace: f64,
    pub trace: f64,
    pub violations: Vec<Violation>,
}

impl SegmentValidity {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn max_deviation(&self) -> f64 {
        self.positivity.max(self.partial_trace).max(self.trace)
    }
}

pub fn validate_segment(s: &Segment, tol: f64) -> SegmentValidity {
    let m = &s.matrix;
    let herm = m.max_abs_diff(&m.adjoint());
    let lowest = min_eigenvalue(m).expect("square");
    let positivity = herm.max((-lowest).max(0.0));
    let partial_trace = s.trace_out().max_abs_diff(&ComplexMatrix::identity(s.d_in));
    let trace = (m.trace() - c(s.d_in as f64, 0.0)).norm();
    let violations = [
        (Condition::Positivity, positivity),
        (Condition::PartialTrace, partial_trace),
        (Condition::Trace, trace),
    ]
    .into_iter()
    .filter(|&(_, d)| d > tol)
    .map(|(condition, deviation)| Violation { condition, deviation })
    .collect();
    SegmentValidity { positivity, partial_trace, trace, violations }
}

/// Mixture `Σ_k p_k U_k · U_k†` of Haar unitaries with random weights.
pub fn random_unital_channel(d: usize, n_unitaries: usize, seed: u64) -> Result<CPMap> {
    if d < 2 || n_unitaries == 0 {
        return Err(Error::Process(format!("need d >= 2 and n_unitaries >= 1, got d={d}, n={n_unitaries}")));
    }
    let mut rng = random::rng(seed);
    let weights = random::random_weights(n_unitaries, &mut rng);
    let kraus = weights
        .iter()
        .map(|&p| random::haar_unitary(d, &mut rng).scale_real(p.sqrt()))
        .collect();
    CPMap::new(kraus)
}

pub fn random_unbiased_segment(d: usize, n_unitaries: usize, seed: u64) -> Result<Segment> {
    Ok(Segment::from_channel(&random_unital_channel(d, n_unitaries, seed)?))
}

/// Qubit-to-qutrit channel with image of the identity `(2/3) I_3`: an equal
/// mixture of the three embeddings onto `span{e0,e1}`, `span{e1,e2}`, `span{e2,e0}`.
pub fn qubit_to_qutrit_unbiased() -> CPMap {
    let w = (1.0f64 / 3.0).sqrt();
    let kraus = (0..3)
        .map(|k| {
            let mut v = ComplexMatrix::zeros(3, 2);
            v[(k, 0)] = c(w, 0.0);
            v[((k + 1) % 3, 1)] = c(w, 0.0);
            v
        })
        .collect();
    CPMap::new(kraus).expect("isometry mixture is trace preserving")
}

/// A chain `W = W^{I_1} ⊗ W^{O_1 I_2} ⊗ ... ⊗ I^{O_K}` over ordered layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredProcess {
    layers: Vec<Vec<Node>>,
    initial: ComplexMatrix,
    segments: Vec<Segment>,
}

impl LayeredProcess {
    /// Checks that dimensions chain; validity of the factors is reported by [`Self::validate`].
    pub fn new(layers: Vec<Vec<Node>>, initial: ComplexMatrix, segments: Vec<Segment>) -> Result<Self> {
        if layers.is_empty() || layers.iter().any(Vec::is_empty) {
            return Err(Error::Process("every layer needs at least one node".into()));
        }
        let dims: Vec<usize> = layers.iter().map(|l| l.iter().map(|n| n.dim).product()).collect();
        let d1 = initial.require_square()?;
        if d1 != dims[0] {
            return Err(Error::Process(format!("initial state has dimension {d1}, first layer has {}", dims[0])));
        }
        if segments.len() + 1 != layers.len() {
            return Err(Error::Process(format!("{} layers need {} segments, got {}", layers.len(), layers.len() - 1, segments.len())));
        }
        for (j, s) in segments.iter().enumerate() {
            if (s.d_in, s.d_out) != (dims[j], dims[j + 1]) {
                return Err(Error::Process(format!(
                    "segment {j} maps {}->{}, layers need {}->{}",
                    s.d_in, s.d_out, dims[j], dims[j + 1]
                )));
            }
        }
        Ok(Self { layers, initial, segments })
    }

    /// Chain starting from the maximally mixed state.
    pub fn unbiased(layers: Vec<Vec<Node>>, segments: Vec<Segment>) -> Result<Self> {
        let d1: usize = layers.first().map_or(0, |l| l.iter().map(|n| n.dim).product());
        let initial = ComplexMatrix::identity(d1).scale_real(1.0 / d1.max(1) as f64);
        Self::new(layers, initial, segments)
    }

    /// Layers taken from `layering`, dimensions from `g`.
    pub fn on_layering(g: &CausalDag, layering: &Layering, initial: ComplexMatrix, segments: Vec<Segment>) -> Result<Self> {
        Self::new(layer_nodes(g, layering)?, initial, segments)
    }

    pub fn layers(&self) -> &[Vec<Node>] {
        &self.layers
    }

    pub fn layering(&self) -> Layering {
        Layering::new(self.layers.iter().map(|l| l.iter().map(|n| n.id.clone()).collect()).collect())
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.iter().map(|n| n.dim).product()).collect()
    }

    pub fn initial(&self) -> &ComplexMatrix {
        &self.initial
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.layers.iter().flatten()
    }

    /// Validity of the initial state (as a segment from a trivial space) and of every segment.
    pub fn validate(&self, tol: f64) -> Vec<SegmentValidity> {
        let init = Segment { matrix: self.initial.clone(), d_in: 1, d_out: self.initial.rows() };
        std::iter::once(validate_segment(&init, tol))
            .chain(self.segments.iter().map(|s| validate_segment(s, tol)))
            .collect()
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.validate(tol).iter().all(SegmentValidity::is_ok)
    }

    /// Index and deviation of the first biased segment; the initial state counts as unbiased
    /// when it is maximally mixed.
    pub fn first_biased(&self, tol: f64) -> Option<(usize, f64)> {
        self.segments
            .iter()
            .enumerate()
            .map(|(j, s)| (j, s.unbiased_deviation()))
            .find(|&(_, d)| d > tol)
    }

    pub fn initial_is_maximally_mixed(&self, tol: f64) -> bool {
        let d = self.initial.rows();
        self.initial.approx_eq(&ComplexMatrix::identity(d).scale_real(1.0 / d as f64), tol)
    }

    pub fn total_dim(&self) -> usize {
        self.nodes().map(|n| n.dim * n.dim).product()
    }

    /// Canonical layout `[I_1, O_1, I_2, O_2, ..., I_K, O_K]`, nodes in layer order inside each block.
    pub fn layout(&self) -> SpaceLayout {
        let mut f = Vec::new();
        for layer in &self.layers {
            for role in [Role::In, Role::Out] {
                f.extend(layer.iter().map(|n| Factor::node(&n.id, n.dim, role)));
            }
        }
        SpaceLayout::new(f).expect("node ids are unique")
    }

    /// The full process matrix in [`Self::layout`] order.
    pub fn assemble(&self) -> Result<(ComplexMatrix, SpaceLayout)> {
        let n = self.total_dim();
        if n > MAX_PROCESS_DIM {
            return Err(Error::TableTooLarge { required: n, cap: MAX_PROCESS_DIM });
        }
        let dk = *self.layer_dims().last().expect("nonempty");
        let terminal = ComplexMatrix::identity(dk);
        let w = kron_all(
            std::iter::once(&self.initial)
                .chain(self.segments.iter().map(|s| &s.matrix))
                .chain(std::iter::once(&terminal)),
        );
        Ok((w, self.layout()))
    }

    /// Full matrix with factors regrouped per node: `[v1:in, v1:out, v2:in, ...]`.
    pub fn assemble_node_pairs(&self) -> Result<(ComplexMatrix, SpaceLayout)> {
        let (w, layout) = self.assemble()?;
        let order: Vec<String> = self
            .nodes()
            .flat_map(|n| [format!("{}:in", n.id), format!("{}:out", n.id)])
            .collect();
        let order: Vec<&str> = order.iter().map(String::as_str).collect();
        permute_factors(&w, &layout, &order)
    }
}

/// Node lists (with dimensions) for each layer of `layering`.
pub fn layer_nodes(g: &CausalDag, layering: &Layering) -> Result<Vec<Vec<Node>>> {
    layering
        .layers
        .iter()
        .map(|l| {
            l.iter()
                .map(|id| {
                    let dim = g.dim(id).ok_or_else(|| Error::UnknownLabel(id.clone()))?;
                    Ok(Node { id: id.clone(), dim })
                })
                .collect()
        })
        .collect()
}

/// JSON description of a segment; dimensions come from the layers it joins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SegmentSpec {
    RandomUnital { d: usize, seed: u64, n_unitaries: usize },
    Identity,
    Unitary { matrix: ComplexMatrix },
    Kraus { kraus: Vec<ComplexMatrix> },
    DiscardPrepare { state: Vec<[f64; 2]> },
    CompletelyDepolarizing,
    QubitToQutrit,
    Choi { matrix: ComplexMatrix },
}

/// JSON description of the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    MaximallyMixed,
    Pure { state: Vec<[f64; 2]> },
    Matrix { matrix: ComplexMatrix },
}

/// `{"kind":"layered","layers":[["A"],["B"]],"initial":{...},"segments":[...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessSpec {
    Layered {
        layers: Vec<Vec<String>>,
        #[serde(default)]
        initial: Option<StateSpec>,
        segments: Vec<SegmentSpec>,
    },
}

fn ket(v: &[[f64; 2]]) -> Vec<Complex64> {
    v.iter().map(|&[re, im]| c(re, im)).collect()
}

impl SegmentSpec {
    pub fn build(&self, d_in: usize, d_out: usize) -> Result<Segment> {
        let need_equal = |what: &str| {
            if d_in != d_out {
                Err(Error::Process(format!("{what} segment needs equal layer dims, got {d_in}->{d_out}")))
            } else {
                Ok(())
            }
        };
        let seg = match self {
            Self::RandomUnital { d, seed, n_unitaries } => {
                need_equal("random_unital")?;
                if *d != d_in {
                    return Err(Error::Process(format!("random_unital declares d={d}, layers have dimension {d_in}")));
                }
                random_unbiased_segment(*d, *n_unitaries, *seed)?
            }
            Self::Identity => {
                need_equal("identity")?;
                Segment::identity(d_in)
            }
            Self::Unitary { matrix } => Segment::from_channel(&CPMap::conjugation(matrix.clone())?),
            Self::Kraus { kraus } => Segment::from_channel(&CPMap::new(kraus.clone())?),
            Self::DiscardPrepare { state } => Segment::discard_prepare(d_in, &ket(state))?,
            Self::CompletelyDepolarizing => Segment::completely_depolarizing(d_in, d_out),
            Self::QubitToQutrit => Segment::from_channel(&qubit_to_qutrit_unbiased()),
            Self::Choi { matrix } => Segment::new(matrix.clone(), d_in, d_out)?,
        };
        if (seg.d_in, seg.d_out) != (d_in, d_out) {
            return Err(Error::Process(format!(
                "segment maps {}->{}, layers need {d_in}->{d_out}",
                seg.d_in, seg.d_out
            )));
        }
        Ok(seg)
    }
}

impl StateSpec {
    pub fn build(&self, d: usize) -> Result<ComplexMatrix> {
        let m = match self {
            Self::MaximallyMixed => ComplexMatrix::identity(d).scale_real(1.0 / d as f64),
            Self::Pure { state } => {
                let psi = ket(state);
                let n: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
                ComplexMatrix::projector(&psi).scale_real(1.0 / n)
            }
            Self::Matrix { matrix } => matrix.clone(),
        };
        if m.rows() != d || m.cols() != d {
            return Err(Error::Process(format!("initial state is {}x{}, first layer has dimension {d}", m.rows(), m.cols())));
        }
        if !is_psd(&m, DEFAULT_TOL)? || (m.trace() - c(1.0, 0.0)).norm() > DEFAULT_TOL {
            return Err(Error::Process("initial state is not a density matrix".into()));
        }
        Ok(m)
    }
}

impl ProcessSpec {
    pub fn build(&self, g: &CausalDag) -> Result<LayeredProcess> {
        let Self::Layered { layers, initial, segments } = self;
        let layering = Layering::new(layers.clone());
        let nodes = layer_nodes(g, &layering)?;
        let dims: Vec<usize> = nodes.iter().map(|l| l.iter().map(|n| n.dim).product()).collect();
        if segments.len() + 1 != dims.len() {
            return Err(Error::Process(format!("{} layers need {} segments, got {}", dims.len(), dims.len().saturating_sub(1), segments.len())));
        }
        let initial = initial.as_ref().unwrap_or(&StateSpec::MaximallyMixed).build(dims[0])?;
        let segs = segments
            .iter()
            .enumerate()
            .map(|(j, s)| s.build(dims[j], dims[j + 1]).map_err(|e| Error::Process(format!("segment {j}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        LayeredProcess::new(nodes, initial, segs)
    }

    pub fn layering(&self) -> Layering {
        let Self::Layered { layers, .. } = self;
        Layering::new(layers.clone())
    }
}
