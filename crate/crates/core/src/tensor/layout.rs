//! Labeled tensor factors and the index bookkeeping built on them.
//!
//! Factor order inside a [`SpaceLayout`] is the tensor order of the operator it
//! annotates: the first factor is the most significant digit of a flat index.
//! Nothing here reorders factors implicitly; callers that need a different
//! order go through [`permute_factors`].

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::matrix::{ComplexMatrix, ZERO};
use crate::error::{Error, Result};

/// Whether a factor is a node's input or output space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    In,
    Out,
}

impl Role {
    pub fn flipped(self) -> Self {
        match self {
            Role::In => Role::Out,
            Role::Out => Role::In,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::In => "in",
            Role::Out => "out",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub label: String,
    pub dim: usize,
    pub role: Role,
}

impl Factor {
    pub fn new(label: impl Into<String>, dim: usize, role: Role) -> Self {
        Self { label: label.into(), dim, role }
    }

    /// Factor for the `role` space of graph node `node`, labeled `node:in` / `node:out`.
    pub fn node(node: &str, dim: usize, role: Role) -> Self {
        Self::new(node_label(node, role), dim, role)
    }

    /// The node id if the label follows the `node:role` convention.
    pub fn node_id(&self) -> Option<&str> {
        self.label.rsplit_once(':').map(|(n, _)| n)
    }
}

pub fn node_label(node: &str, role: Role) -> String {
    format!("{node}:{}", role.as_str())
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SpaceLayout {
    factors: Vec<Factor>,
}

impl SpaceLayout {
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        let mut seen = HashSet::new();
        for f in &factors {
            if f.dim == 0 {
                return Err(Error::Dimension(format!("factor `{}` has dimension 0", f.label)));
            }
            if !seen.insert(f.label.as_str()) {
                return Err(Error::DuplicateLabel(f.label.clone()));
            }
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn total_dim(&self) -> usize {
        self.factors.iter().map(|f| f.dim).product()
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.factors
            .iter()
            .position(|f| f.label == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn get(&self, label: &str) -> Option<&Factor> {
        self.factors.iter().find(|f| f.label == label)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.factors.iter().map(|f| f.label.as_str())
    }

    pub fn labels_with_role(&self, role: Role) -> Vec<String> {
        self.factors.iter().filter(|f| f.role == role).map(|f| f.label.clone()).collect()
    }

    pub fn dim_of_role(&self, role: Role) -> usize {
        self.factors.iter().filter(|f| f.role == role).map(|f| f.dim).product()
    }

    /// Concatenation `self ⊗ other`; labels must stay unique.
    pub fn concat(&self, other: &SpaceLayout) -> Result<SpaceLayout> {
        let mut f = self.factors.clone();
        f.extend(other.factors.iter().cloned());
        SpaceLayout::new(f)
    }

    pub fn map_factors(&self, f: impl FnMut(&Factor) -> Factor) -> Result<SpaceLayout> {
        SpaceLayout::new(self.factors.iter().map(f).collect())
    }

    pub fn check_operator(&self, m: &ComplexMatrix) -> Result<()> {
        let n = m.require_square()?;
        if n != self.total_dim() {
            return Err(Error::Dimension(format!(
                "operator has dimension {n} but layout {self} has total dimension {}",
                self.total_dim()
            )));
        }
        Ok(())
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.factors.len()];
        for k in (0..self.factors.len().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.factors[k + 1].dim;
        }
        s
    }
}

impl fmt::Display for SpaceLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, x) in self.factors.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}({})", x.label, x.dim)?;
        }
        write!(f, "]")
    }
}

/// Flat offsets of every multi-index over the given factor subset, in the
/// subset's own row-major order, measured with the strides of the full layout.
fn subset_offsets(dims: &[usize], strides: &[usize], subset: &[usize]) -> Vec<usize> {
    let mut offsets = vec![0usize];
    for &k in subset {
        let mut next = Vec::with_capacity(offsets.len() * dims[k]);
        for &o in &offsets {
            for v in 0..dims[k] {
                next.push(o + v * strides[k]);
            }
        }
        offsets = next;
    }
    offsets
}

/// Traces out the factors named in `traced`, returning the reduced operator and
/// the layout of the remaining factors (in their original order).
pub fn partial_trace(
    m: &ComplexMatrix,
    layout: &SpaceLayout,
    traced: &[&str],
) -> Result<(ComplexMatrix, SpaceLayout)> {
    layout.check_operator(m)?;
    let mut traced_pos = Vec::with_capacity(traced.len());
    for label in traced {
        let p = layout.position(label)?;
        if !traced_pos.contains(&p) {
            traced_pos.push(p);
        }
    }
    traced_pos.sort_unstable();
    let kept_pos: Vec<usize> = (0..layout.len()).filter(|k| !traced_pos.contains(k)).collect();

    let dims: Vec<usize> = layout.factors.iter().map(|f| f.dim).collect();
    let strides = layout.strides();
    let kept = subset_offsets(&dims, &strides, &kept_pos);
    let tr = subset_offsets(&dims, &strides, &traced_pos);

    let n = kept.len();
    let full = m.cols();
    let data = m.as_slice();
    let mut out = ComplexMatrix::zeros(n, n);
    for (a, &ra) in kept.iter().enumerate() {
        for (b, &cb) in kept.iter().enumerate() {
            let mut acc = ZERO;
            for &t in &tr {
                acc += data[(ra + t) * full + cb + t];
            }
            out[(a, b)] = acc;
        }
    }
    let new_layout = SpaceLayout { factors: kept_pos.iter().map(|&k| layout.factors[k].clone()).collect() };
    Ok((out, new_layout))
}

/// Reorders tensor factors so that the result's layout lists `order` exactly.
pub fn permute_factors(
    m: &ComplexMatrix,
    layout: &SpaceLayout,
    order: &[&str],
) -> Result<(ComplexMatrix, SpaceLayout)> {
    layout.check_operator(m)?;
    if order.len() != layout.len() {
        return Err(Error::Dimension(format!(
            "permutation names {} factors, layout has {}",
            order.len(),
            layout.len()
        )));
    }
    let mut src = Vec::with_capacity(order.len());
    for label in order {
        let p = layout.position(label)?;
        if src.contains(&p) {
            return Err(Error::DuplicateLabel((*label).to_string()));
        }
        src.push(p);
    }
    let perm = permutation_map(layout, &src);
    let n = perm.len();
    let mut out = ComplexMatrix::zeros(n, n);
    let data = m.as_slice();
    for i in 0..n {
        for j in 0..n {
            out[(perm[i], perm[j])] = data[i * n + j];
        }
    }
    let new_layout = SpaceLayout { factors: src.iter().map(|&k| layout.factors[k].clone()).collect() };
    Ok((out, new_layout))
}

/// For each flat index of the original layout, its flat index after the
/// factors are reordered so that new factor `k` is old factor `src[k]`.
fn permutation_map(layout: &SpaceLayout, src: &[usize]) -> Vec<usize> {
    let dims: Vec<usize> = layout.factors.iter().map(|f| f.dim).collect();
    let old_strides = layout.strides();
    let mut new_strides = vec![1; src.len()];
    for k in (0..src.len().saturating_sub(1)).rev() {
        new_strides[k] = new_strides[k + 1] * dims[src[k + 1]];
    }
    let total = layout.total_dim();
    let mut map = vec![0; total];
    for (old, slot) in map.iter_mut().enumerate() {
        let mut idx = 0;
        for (k, &s) in src.iter().enumerate() {
            let digit = (old / old_strides[s]) % dims[s];
            idx += digit * new_strides[k];
        }
        *slot = idx;
    }
    map
}

/// Pairs the leading `lead` x `lead` block index of `m` with `op`:
/// `out[a', b'] = Σ_{a,b} op[a, b] · m[a·R + a', b·R + b']`, `R = dim(m) / lead`.
///
/// This is `tr_lead[(opᵀ ⊗ I) m]`, the contraction used by the Born rule.
pub fn pair_leading(m: &ComplexMatrix, op: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = m.require_square()?;
    let lead = op.require_square()?;
    if lead == 0 || n % lead != 0 {
        return Err(Error::Dimension(format!("cannot pair a {lead}-dim factor off a {n}-dim operator")));
    }
    let r = n / lead;
    let data = m.as_slice();
    let mut out = ComplexMatrix::zeros(r, r);
    let od = out.as_mut_slice();
    for a in 0..lead {
        for b in 0..lead {
            let w = op[(a, b)];
            if w == ZERO {
                continue;
            }
            for ap in 0..r {
                let src = &data[(a * r + ap) * n + b * r..(a * r + ap) * n + b * r + r];
                for (o, x) in od[ap * r..ap * r + r].iter_mut().zip(src) {
                    *o += w * x;
                }
            }
        }
    }
    Ok(out)
}
