//! Quantum instruments as families of CP maps.
//!
//! Choi matrices use the standard form `C = Σ_ij |i><j| ⊗ M(|i><j|)` over the
//! factor order `[in, out]`. With it, `tr[(ρᵀ ⊗ E) C] = tr[E M(ρ)]` and the
//! generalized Born rule pairs `C` entrywise with the process matrix.

use std::collections::HashSet;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random;
use crate::tensor::{
    c, is_psd, kron, min_eigenvalue, partial_trace, span_rank, ComplexMatrix, Factor, Role, SpaceLayout,
    DEFAULT_TOL, ZERO,
};

/// Branches with probability at or below this are reported as degenerate.
pub const DEGENERATE_PROB: f64 = 1e-12;

/// A completely positive, trace non-increasing map in Kraus form.
#[derive(Debug, Clone, PartialEq)]
pub struct CPMap {
    kraus: Vec<ComplexMatrix>,
    in_dim: usize,
    out_dim: usize,
}

impl CPMap {
    pub fn new(kraus: Vec<ComplexMatrix>) -> Result<Self> {
        let first = kraus.first().ok_or_else(|| Error::Instrument("empty Kraus list".into()))?;
        let (out_dim, in_dim) = (first.rows(), first.cols());
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Instrument("Kraus operators must be non-empty".into()));
        }
        if let Some(k) = kraus.iter().position(|a| a.rows() != out_dim || a.cols() != in_dim) {
            return Err(Error::Instrument(format!(
                "Kraus operator {k} is {}x{}, expected {out_dim}x{in_dim}",
                kraus[k].rows(),
                kraus[k].cols()
            )));
        }
        let map = Self { kraus, in_dim, out_dim };
        let slack = &ComplexMatrix::identity(in_dim) - &map.povm_element();
        let lowest = min_eigenvalue(&slack)?;
        if lowest < -DEFAULT_TOL {
            return Err(Error::Instrument(format!(
                "map increases trace: largest eigenvalue of Σ A†A exceeds 1 by {:.3e}",
                -lowest
            )));
        }
        Ok(map)
    }

    pub fn identity(d: usize) -> Self {
        Self { kraus: vec![ComplexMatrix::identity(d)], in_dim: d, out_dim: d }
    }

    /// Conjugation by a unitary (or contraction) `u`.
    pub fn conjugation(u: ComplexMatrix) -> Result<Self> {
        Self::new(vec![u])
    }

    pub fn kraus(&self) -> &[ComplexMatrix] {
        &self.kraus
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// `F = Σ_k A_k† A_k`.
    pub fn povm_element(&self) -> ComplexMatrix {
        let mut f = ComplexMatrix::zeros(self.in_dim, self.in_dim);
        for a in &self.kraus {
            f = &f + &(&a.adjoint() * a);
        }
        f
    }

    /// Unnormalized image `Σ_k A_k X A_k†`.
    pub fn map(&self, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        if x.rows() != self.in_dim || x.cols() != self.in_dim {
            return Err(Error::Dimension(format!(
                "map acts on {}-dim operators, got {}x{}",
                self.in_dim,
                x.rows(),
                x.cols()
            )));
        }
        let mut out = ComplexMatrix::zeros(self.out_dim, self.out_dim);
        for a in &self.kraus {
            out = &out + &x.conjugate_by(a)?;
        }
        Ok(out)
    }

    /// Outcome probability and normalized post-measurement state.
    pub fn apply(&self, rho: &ComplexMatrix) -> Result<Branch> {
        let image = self.map(rho)?;
        let prob = image.trace().re;
        let post = (prob > DEGENERATE_PROB).then(|| image.scale_real(1.0 / prob));
        Ok(Branch { prob, post })
    }

    pub fn choi(&self) -> ChoiMatrix {
        let (din, dout) = (self.in_dim, self.out_dim);
        let mut m = ComplexMatrix::zeros(din * dout, din * dout);
        // Σ_k vec(A_k) vec(A_k)† with vec(A)[(i, a)] = A[a, i].
        for a in &self.kraus {
            for i in 0..din {
                for p in 0..dout {
                    let x = a[(p, i)];
                    if x == ZERO {
                        continue;
                    }
                    for j in 0..din {
                        for q in 0..dout {
                            m[(i * dout + p, j * dout + q)] += x * a[(q, j)].conj();
                        }
                    }
                }
            }
        }
        ChoiMatrix { matrix: m, in_dim: din, out_dim: dout }
    }

    /// Same map with every Kraus operator scaled by `sqrt(w)`.
    pub fn weighted(&self, w: f64) -> Self {
        let s = w.sqrt();
        Self { kraus: self.kraus.iter().map(|a| a.scale_real(s)).collect(), ..self.clone() }
    }

    /// Tensor product map `self ⊗ other`.
    pub fn tensor(&self, other: &CPMap) -> CPMap {
        let mut kraus = Vec::with_capacity(self.kraus.len() * other.kraus.len());
        for a in &self.kraus {
            for b in &other.kraus {
                kraus.push(kron(a, b));
            }
        }
        CPMap { kraus, in_dim: self.in_dim * other.in_dim, out_dim: self.out_dim * other.out_dim }
    }
}

/// Result of applying one instrument element.
#[derive(Debug, Clone)]
pub struct Branch {
    pub prob: f64,
    /// `None` when the branch is degenerate (`prob <= DEGENERATE_PROB`).
    pub post: Option<ComplexMatrix>,
}

impl Branch {
    pub fn is_degenerate(&self) -> bool {
        self.post.is_none()
    }
}

/// Choi matrix over the factor order `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiMatrix {
    matrix: ComplexMatrix,
    in_dim: usize,
    out_dim: usize,
}

impl ChoiMatrix {
    pub fn new(matrix: ComplexMatrix, in_dim: usize, out_dim: usize) -> Result<Self> {
        let n = matrix.require_square()?;
        if n != in_dim * out_dim {
            return Err(Error::Dimension(format!("Choi matrix of size {n} for dims {in_dim}x{out_dim}")));
        }
        Ok(Self { matrix, in_dim, out_dim })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn layout(&self) -> SpaceLayout {
        SpaceLayout::new(vec![Factor::new("in", self.in_dim, Role::In), Factor::new("out", self.out_dim, Role::Out)])
            .expect("two distinct labels")
    }

    /// `tr_out C`, the POVM element transposed.
    pub fn trace_out(&self) -> ComplexMatrix {
        partial_trace(&self.matrix, &self.layout(), &["out"]).expect("layout matches").0
    }

    /// The map's action recovered from the Choi matrix: `Σ_ij ρ_ij C[(i,·),(j,·)]`.
    pub fn apply(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        if rho.rows() != self.in_dim || rho.cols() != self.in_dim {
            return Err(Error::Dimension(format!("Choi input dim {} vs operator {}", self.in_dim, rho.rows())));
        }
        let d = self.out_dim;
        let mut out = ComplexMatrix::zeros(d, d);
        for i in 0..self.in_dim {
            for j in 0..self.in_dim {
                let r = rho[(i, j)];
                if r == ZERO {
                    continue;
                }
                for p in 0..d {
                    for q in 0..d {
                        out[(p, q)] += r * self.matrix[(i * d + p, j * d + q)];
                    }
                }
            }
        }
        Ok(out)
    }

    /// PSD and `tr_out C ≤ I`.
    pub fn is_valid(&self, tol: f64) -> Result<bool> {
        let slack = &ComplexMatrix::identity(self.in_dim) - &self.trace_out();
        Ok(is_psd(&self.matrix, tol)? && is_psd(&slack, tol)?)
    }
}

/// A finite family of CP maps indexed by outcome labels, summing to a channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Instrument {
    node: String,
    outcomes: Vec<String>,
    maps: Vec<CPMap>,
}

/// One element of a measure-and-prepare decomposition `M_v(X) = tr(F_v X) ρ_v`.
#[derive(Debug, Clone)]
pub struct MeasurePrepare {
    /// POVM element `F_v`.
    pub effect: ComplexMatrix,
    /// Input-independent post-measurement state `ρ_v`.
    pub post: ComplexMatrix,
    /// `β_v = tr F_v`; for rank-1 effects `F_v = β_v Π_v`.
    pub beta: f64,
    pub rank_one: bool,
}

/// Diagnostics of the informational-completeness test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcReport {
    pub outcomes: usize,
    pub povm_rank: usize,
    pub povm_required: usize,
    pub post_state_rank: usize,
    pub post_state_required: usize,
    /// Effects are linearly independent (rank equals outcome count).
    pub povm_independent: bool,
    pub post_states_independent: bool,
    /// Outcomes whose branch vanishes at the maximally mixed input.
    pub zero_branches: Vec<String>,
    pub complete: bool,
}

impl Instrument {
    pub fn new(node: impl Into<String>, elements: Vec<(String, CPMap)>) -> Result<Self> {
        let node = node.into();
        let first = elements.first().ok_or_else(|| Error::Instrument(format!("instrument at `{node}` has no outcomes")))?;
        let (din, dout) = (first.1.in_dim, first.1.out_dim);
        let mut seen = HashSet::new();
        for (label, m) in &elements {
            if !seen.insert(label.as_str()) {
                return Err(Error::Instrument(format!("duplicate outcome label `{label}` at `{node}`")));
            }
            if (m.in_dim, m.out_dim) != (din, dout) {
                return Err(Error::Instrument(format!(
                    "outcome `{label}` maps {}->{}, expected {din}->{dout}",
                    m.in_dim, m.out_dim
                )));
            }
        }
        let (outcomes, maps): (Vec<_>, Vec<_>) = elements.into_iter().unzip();
        let inst = Self { node, outcomes, maps };
        let dev = inst.completeness_deviation();
        if dev > DEFAULT_TOL {
            return Err(Error::Instrument(format!(
                "effects at `{}` do not sum to the identity: max deviation {dev:.3e}",
                inst.node
            )));
        }
        Ok(inst)
    }

    /// Single-outcome identity channel.
    pub fn identity(node: impl Into<String>, d: usize) -> Self {
        Self { node: node.into(), outcomes: vec!["id".into()], maps: vec![CPMap::identity(d)] }
    }

    /// Projective measurement in an orthonormal basis, outcome `k` leaving `|b_k>`.
    pub fn projective(node: impl Into<String>, basis: &[Vec<Complex64>]) -> Result<Self> {
        let elements = basis
            .iter()
            .enumerate()
            .map(|(k, b)| Ok((k.to_string(), CPMap::new(vec![ComplexMatrix::projector(b)])?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(node, elements)
    }

    /// Single-outcome channel discarding the input and preparing `|psi>`.
    pub fn discard_prepare(node: impl Into<String>, in_dim: usize, psi: &[Complex64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Instrument("zero preparation vector".into()));
        }
        let psi: Vec<Complex64> = psi.iter().map(|z| z / norm).collect();
        let kraus = (0..in_dim)
            .map(|k| {
                let mut e = vec![ZERO; in_dim];
                e[k] = c(1.0, 0.0);
                ComplexMatrix::outer(&psi, &e)
            })
            .collect();
        Self::new(node, vec![("prep".into(), CPMap::new(kraus)?)])
    }

    /// Random instrument with `n_outcomes` outcomes and `kraus_rank` Kraus operators each,
    /// cut from one Haar isometry so that completeness holds exactly.
    pub fn random(
        node: impl Into<String>,
        in_dim: usize,
        out_dim: usize,
        n_outcomes: usize,
        kraus_rank: usize,
        seed: u64,
    ) -> Result<Self> {
        let blocks = n_outcomes * kraus_rank;
        if blocks == 0 {
            return Err(Error::Instrument("need at least one outcome and one Kraus operator".into()));
        }
        let rows = blocks * out_dim;
        if rows < in_dim {
            return Err(Error::Instrument(format!(
                "cannot build a complete instrument from {blocks} blocks of {out_dim} rows on a {in_dim}-dim input"
            )));
        }
        let v = random::random_isometry(rows, in_dim, &mut random::rng(seed));
        let mut elements = Vec::with_capacity(n_outcomes);
        for o in 0..n_outcomes {
            let kraus = (0..kraus_rank)
                .map(|k| {
                    let off = (o * kraus_rank + k) * out_dim;
                    ComplexMatrix::from_fn(out_dim, in_dim, |i, j| v[(off + i, j)])
                })
                .collect();
            elements.push((o.to_string(), CPMap { kraus, in_dim, out_dim }));
        }
        Self::new(node, elements)
    }

    pub fn node(&self) -> &str {
        &self.node
    }

    pub fn with_node(mut self, node: impl Into<String>) -> Self {
        self.node = node.into();
        self
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn maps(&self) -> &[CPMap] {
        &self.maps
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn in_dim(&self) -> usize {
        self.maps[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.maps[0].out_dim
    }

    pub fn outcome_index(&self, label: &str) -> Option<usize> {
        self.outcomes.iter().position(|o| o == label)
    }

    pub fn element(&self, label: &str) -> Result<&CPMap> {
        self.outcome_index(label)
            .map(|i| &self.maps[i])
            .ok_or_else(|| Error::Instrument(format!("no outcome `{label}` at `{}`", self.node)))
    }

    pub fn povm(&self) -> Vec<ComplexMatrix> {
        self.maps.iter().map(CPMap::povm_element).collect()
    }

    /// Max entrywise deviation of `Σ_v F_v` from the identity.
    pub fn completeness_deviation(&self) -> f64 {
        let d = self.in_dim();
        let sum = self.povm().iter().fold(ComplexMatrix::zeros(d, d), |acc, f| &acc + f);
        sum.max_abs_diff(&ComplexMatrix::identity(d))
    }

    /// Outcome-summed channel.
    pub fn channel(&self) -> CPMap {
        let kraus = self.maps.iter().flat_map(|m| m.kraus.iter().cloned()).collect();
        CPMap { kraus, in_dim: self.in_dim(), out_dim: self.out_dim() }
    }

    /// Post-measurement states at the maximally mixed input; `None` for vanishing branches.
    pub fn post_states(&self) -> Vec<Option<ComplexMatrix>> {
        let d = self.in_dim();
        let mixed = ComplexMatrix::identity(d).scale_real(1.0 / d as f64);
        self.maps.iter().map(|m| m.apply(&mixed).expect("dims checked").post).collect()
    }

    pub fn ic_report(&self) -> IcReport {
        let povm = self.povm();
        let posts = self.post_states();
        let zero_branches: Vec<String> = posts
            .iter()
            .zip(&self.outcomes)
            .filter(|(p, _)| p.is_none())
            .map(|(_, o)| o.clone())
            .collect();
        let live: Vec<ComplexMatrix> = posts.into_iter().flatten().collect();
        let povm_rank = span_rank(&povm).unwrap_or(0);
        let post_state_rank = if live.is_empty() { 0 } else { span_rank(&live).unwrap_or(0) };
        let (din, dout) = (self.in_dim(), self.out_dim());
        IcReport {
            outcomes: self.len(),
            povm_rank,
            povm_required: din * din,
            post_state_rank,
            post_state_required: dout * dout,
            povm_independent: povm_rank == povm.len(),
            post_states_independent: post_state_rank == live.len(),
            complete: povm_rank == din * din && post_state_rank == dout * dout,
            zero_branches,
        }
    }

    /// Effects span the input operator space and post-states span the output operator space.
    pub fn is_informationally_complete(&self) -> bool {
        self.ic_report().complete
    }

    pub fn is_minimal(&self) -> bool {
        let d = self.in_dim();
        d == self.out_dim() && self.len() == d * d
    }

    /// Decomposes every element as `M_v(X) = tr(F_v X) ρ_v`, if possible within `tol`.
    pub fn measure_prepare(&self, tol: f64) -> Option<Vec<MeasurePrepare>> {
        let posts = self.post_states();
        self.maps
            .iter()
            .zip(posts)
            .map(|(m, post)| {
                let post = post?;
                let effect = m.povm_element();
                // Standard Choi of X -> tr(F X) ρ is Fᵀ ⊗ ρ.
                if !m.choi().matrix().approx_eq(&kron(&effect.transpose(), &post), tol) {
                    return None;
                }
                let beta = effect.trace().re;
                let pi = effect.scale_real(1.0 / beta);
                let rank_one = (&pi * &pi).approx_eq(&pi, tol);
                Some(MeasurePrepare { effect, post, beta, rank_one })
            })
            .collect()
    }

    /// Minimal, measure-and-prepare, with rank-1 effects.
    pub fn is_minimal_projective(&self) -> bool {
        self.is_minimal()
            && self.measure_prepare(DEFAULT_TOL).is_some_and(|mp| mp.iter().all(|e| e.rank_one))
    }
}

/// Rank-1 SIC projectors for `d ∈ {2, 3}`.
pub fn sic_projectors(d: usize) -> Result<Vec<ComplexMatrix>> {
    match d {
        2 => {
            let s = 1.0 / 3f64.sqrt();
            let bloch = [[s, s, s], [s, -s, -s], [-s, s, -s], [-s, -s, s]];
            Ok(bloch
                .iter()
                .map(|r| {
                    ComplexMatrix::from_rows(&[
                        vec![c(0.5 * (1.0 + r[2]), 0.0), c(0.5 * r[0], -0.5 * r[1])],
                        vec![c(0.5 * r[0], 0.5 * r[1]), c(0.5 * (1.0 - r[2]), 0.0)],
                    ])
                    .expect("2x2")
                })
                .collect())
        }
        3 => {
            let h = std::f64::consts::FRAC_1_SQRT_2;
            let fiducial = [c(0.0, 0.0), c(h, 0.0), c(-h, 0.0)];
            let omega = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
            let mut out = Vec::with_capacity(9);
            for a in 0..3 {
                for b in 0..3 {
                    // X^a Z^b |psi>: component k of Z^b psi is ω^{bk} psi_k, then shift by a.
                    let mut v = [ZERO; 3];
                    for (k, &amp) in fiducial.iter().enumerate() {
                        v[(k + a) % 3] = omega.powu((b * k) as u32) * amp;
                    }
                    out.push(ComplexMatrix::projector(&v));
                }
            }
            Ok(out)
        }
        other => Err(Error::UnsupportedSicDimension(other)),
    }
}

/// SIC instrument: outcome `v` has the single Kraus operator `Π_v / sqrt(d)`.
pub fn sic_instrument(node: impl Into<String>, d: usize) -> Result<Instrument> {
    let s = 1.0 / (d as f64).sqrt();
    let elements = sic_projectors(d)?
        .into_iter()
        .enumerate()
        .map(|(v, p)| Ok((v.to_string(), CPMap::new(vec![p.scale_real(s)])?)))
        .collect::<Result<Vec<_>>>()?;
    Instrument::new(node, elements)
}

/// Merges instruments `x = 0..n` into one with outcomes `x/v` and maps `γ_(x,v) M^x_v`.
///
/// `gamma[x][v]` must be nonnegative and the merged effects must sum to the identity.
/// When every member is complete, that holds exactly when `gamma[x][v] = p_x`
/// for a probability vector `p` over the members.
pub fn merge_ic_set(node: impl Into<String>, members: &[Instrument], gamma: &[Vec<f64>]) -> Result<Instrument> {
    let node = node.into();
    let first = members.first().ok_or_else(|| Error::Instrument("empty IC-set".into()))?;
    if gamma.len() != members.len() {
        return Err(Error::Instrument(format!("{} weight rows for {} instruments", gamma.len(), members.len())));
    }
    let mut elements = Vec::new();
    for (x, (inst, g)) in members.iter().zip(gamma).enumerate() {
        if (inst.in_dim(), inst.out_dim()) != (first.in_dim(), first.out_dim()) {
            return Err(Error::Instrument(format!("member {x} has mismatched dimensions")));
        }
        if g.len() != inst.len() {
            return Err(Error::Instrument(format!("member {x} has {} outcomes but {} weights", inst.len(), g.len())));
        }
        for ((label, m), &w) in inst.outcomes.iter().zip(&inst.maps).zip(g) {
            if w.is_nan() || w < 0.0 {
                return Err(Error::Instrument(format!("negative weight {w} for outcome {x}/{label}")));
            }
            elements.push((format!("{x}/{label}"), m.weighted(w)));
        }
    }
    Instrument::new(node, elements)
}

/// JSON description of an instrument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstrumentSpec {
    Sic { node: String, d: usize },
    Identity { node: String, d: usize },
    DiscardPrepare { node: String, d: usize, state: Vec<[f64; 2]> },
    Kraus { node: String, outcomes: Vec<OutcomeSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeSpec {
    pub label: String,
    pub kraus: Vec<ComplexMatrix>,
}

impl InstrumentSpec {
    pub fn node(&self) -> &str {
        match self {
            Self::Sic { node, .. }
            | Self::Identity { node, .. }
            | Self::DiscardPrepare { node, .. }
            | Self::Kraus { node, .. } => node,
        }
    }

    pub fn build(&self) -> Result<Instrument> {
        match self {
            Self::Sic { node, d } => sic_instrument(node.clone(), *d),
            Self::Identity { node, d } => Ok(Instrument::identity(node.clone(), *d)),
            Self::DiscardPrepare { node, d, state } => {
                let psi: Vec<Complex64> = state.iter().map(|&[re, im]| c(re, im)).collect();
                Instrument::discard_prepare(node.clone(), *d, &psi)
            }
            Self::Kraus { node, outcomes } => {
                let elements = outcomes
                    .iter()
                    .map(|o| Ok((o.label.clone(), CPMap::new(o.kraus.clone())?)))
                    .collect::<Result<Vec<_>>>()?;
                Instrument::new(node.clone(), elements)
            }
        }
    }
}
