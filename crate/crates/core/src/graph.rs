//! Causal DAGs, topological set partitions and layering.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub dim: usize,
}

/// JSON form: `{"nodes":[{"id":"A","dim":2},...],"edges":[["A","B"],...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphSpec {
    nodes: Vec<Node>,
    #[serde(default)]
    edges: Vec<(String, String)>,
}

/// A directed graph over dimensioned nodes. Construction checks ids and edge
/// endpoints; acyclicity is checked by [`CausalDag::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphSpec", into = "GraphSpec")]
pub struct CausalDag {
    nodes: Vec<Node>,
    edges: Vec<(usize, usize)>,
    index: HashMap<String, usize>,
}

impl TryFrom<GraphSpec> for CausalDag {
    type Error = Error;

    fn try_from(s: GraphSpec) -> Result<Self> {
        CausalDag::new(s.nodes, s.edges)
    }
}

impl From<CausalDag> for GraphSpec {
    fn from(g: CausalDag) -> Self {
        let edges = g.edge_ids().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        GraphSpec { nodes: g.nodes, edges }
    }
}

impl CausalDag {
    pub fn new(nodes: Vec<Node>, edges: Vec<(String, String)>) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if n.dim == 0 {
                return Err(Error::Graph(format!("node `{}` has dimension 0", n.id)));
            }
            if index.insert(n.id.clone(), i).is_some() {
                return Err(Error::Graph(format!("duplicate node id `{}`", n.id)));
            }
        }
        let mut idx_edges = Vec::with_capacity(edges.len());
        for (a, b) in &edges {
            let ia = *index.get(a).ok_or_else(|| Error::Graph(format!("edge endpoint `{a}` is not a declared node")))?;
            let ib = *index.get(b).ok_or_else(|| Error::Graph(format!("edge endpoint `{b}` is not a declared node")))?;
            if !idx_edges.contains(&(ia, ib)) {
                idx_edges.push((ia, ib));
            }
        }
        Ok(Self { nodes, edges: idx_edges, index })
    }

    /// Convenience constructor: every node gets dimension `dim`.
    pub fn uniform(ids: &[&str], edges: &[(&str, &str)], dim: usize) -> Result<Self> {
        Self::new(
            ids.iter().map(|id| Node { id: id.to_string(), dim }).collect(),
            edges.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
        )
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn dim(&self, id: &str) -> Option<usize> {
        self.index_of(id).map(|i| self.nodes[i].dim)
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_ids(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|&(a, b)| (self.nodes[a].id.as_str(), self.nodes[b].id.as_str()))
    }

    /// Parent indices of node `i`, in node declaration order.
    pub fn parents(&self, i: usize) -> Vec<usize> {
        let mut p: Vec<usize> = self.edges.iter().filter(|e| e.1 == i).map(|e| e.0).collect();
        p.sort_unstable();
        p
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        let mut c: Vec<usize> = self.edges.iter().filter(|e| e.0 == i).map(|e| e.1).collect();
        c.sort_unstable();
        c
    }

    fn ids(&self, idx: &[usize]) -> Vec<String> {
        idx.iter().map(|&i| self.nodes[i].id.clone()).collect()
    }

    /// Ok iff acyclic; otherwise `Error::Cycle` carrying a node sequence that
    /// forms a directed cycle (first node repeated implicitly).
    pub fn validate(&self) -> Result<()> {
        match self.find_cycle() {
            None => Ok(()),
            Some(c) => Err(Error::Cycle(self.ids(&c))),
        }
    }

    fn find_cycle(&self) -> Option<Vec<usize>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        let n = self.nodes.len();
        let children: Vec<Vec<usize>> = (0..n).map(|i| self.children(i)).collect();
        let mut mark = vec![Mark::New; n];
        for root in 0..n {
            if mark[root] != Mark::New {
                continue;
            }
            // Iterative DFS keeping the active path.
            let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
            mark[root] = Mark::Active;
            while let Some(&mut (v, ref mut next)) = stack.last_mut() {
                if *next < children[v].len() {
                    let w = children[v][*next];
                    *next += 1;
                    match mark[w] {
                        Mark::New => {
                            mark[w] = Mark::Active;
                            stack.push((w, 0));
                        }
                        Mark::Active => {
                            let start = stack.iter().position(|&(x, _)| x == w).unwrap();
                            return Some(stack[start..].iter().map(|&(x, _)| x).collect());
                        }
                        Mark::Done => {}
                    }
                } else {
                    mark[v] = Mark::Done;
                    stack.pop();
                }
            }
        }
        None
    }

    /// Longest-path level of every node (roots at level 0).
    fn longest_path_levels(&self) -> Result<Vec<usize>> {
        self.validate()?;
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        for &(_, b) in &self.edges {
            indeg[b] += 1;
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut level = vec![0usize; n];
        while let Some(v) = queue.pop_front() {
            for w in self.children(v) {
                level[w] = level[w].max(level[v] + 1);
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    queue.push_back(w);
                }
            }
        }
        Ok(level)
    }

    fn group_levels(&self, level: &[usize]) -> Vec<Vec<String>> {
        let k = level.iter().copied().max().map_or(0, |m| m + 1);
        let mut sets = vec![Vec::new(); k];
        for (i, &l) in level.iter().enumerate() {
            sets[l].push(self.nodes[i].id.clone());
        }
        sets
    }

    /// Longest-path partition S₁..S_M: `S_j` holds the nodes whose longest
    /// directed path from a root has length j-1.
    pub fn topological_sets(&self) -> Result<Vec<Vec<String>>> {
        let level = self.longest_path_levels()?;
        Ok(self.group_levels(&level))
    }

    /// Finds a layering, or explains why none exists.
    ///
    /// A layering exists iff every edge can be made to advance exactly one
    /// layer, i.e. iff each weakly connected component admits a potential with
    /// `level(v) = level(u) + 1` on every edge. Levels are propagated over the
    /// undirected skeleton; each component is shifted so its lowest level is
    /// layer 1 (isolated nodes land in layer 1).
    pub fn check_layered(&self) -> Result<LayerCheck> {
        let sets = self.topological_sets()?;
        let n = self.nodes.len();
        let mut adj: Vec<Vec<(usize, i64)>> = vec![Vec::new(); n];
        for &(a, b) in &self.edges {
            adj[a].push((b, 1));
            adj[b].push((a, -1));
        }
        let mut pot: Vec<Option<i64>> = vec![None; n];
        let mut consistent = true;
        for root in 0..n {
            if pot[root].is_some() {
                continue;
            }
            pot[root] = Some(0);
            let mut comp = vec![root];
            let mut queue = VecDeque::from([root]);
            while let Some(v) = queue.pop_front() {
                let pv = pot[v].unwrap();
                for &(w, step) in &adj[v] {
                    match pot[w] {
                        None => {
                            pot[w] = Some(pv + step);
                            comp.push(w);
                            queue.push_back(w);
                        }
                        Some(pw) if pw != pv + step => consistent = false,
                        Some(_) => {}
                    }
                }
            }
            let min = comp.iter().map(|&v| pot[v].unwrap()).min().unwrap();
            for &v in &comp {
                pot[v] = Some(pot[v].unwrap() - min);
            }
        }
        if consistent {
            let level: Vec<usize> = pot.iter().map(|p| p.unwrap() as usize).collect();
            return Ok(LayerCheck::Layered(Layering { layers: self.group_levels(&level) }));
        }
        // Some edge must span two or more longest-path levels: that edge is a
        // directed path skipping every set strictly between its endpoints.
        let level = self.longest_path_levels()?;
        let (a, b) = self
            .edges
            .iter()
            .copied()
            .find(|&(a, b)| level[b] >= level[a] + 2)
            .expect("an ungradable DAG has an edge spanning two longest-path levels");
        Ok(LayerCheck::NotLayered(LayerObstruction {
            sets,
            triplet: (level[a], level[a] + 1, level[b]),
            path: vec![self.nodes[a].id.clone(), self.nodes[b].id.clone()],
        }))
    }

    /// Same nodes, every edge reversed.
    pub fn reverse(&self) -> CausalDag {
        CausalDag {
            nodes: self.nodes.clone(),
            edges: self.edges.iter().map(|&(a, b)| (b, a)).collect(),
            index: self.index.clone(),
        }
    }

    /// True iff there is a directed path from any node in `from` to any node in
    /// `to` that never visits a node in `avoid`.
    pub fn has_path_avoiding(&self, from: &[usize], to: &[usize], avoid: &[usize]) -> Option<Vec<usize>> {
        let n = self.nodes.len();
        let mut prev: Vec<Option<usize>> = vec![None; n];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::new();
        for &s in from {
            if !avoid.contains(&s) {
                seen[s] = true;
                queue.push_back(s);
            }
        }
        while let Some(v) = queue.pop_front() {
            if to.contains(&v) {
                let mut path = vec![v];
                let mut cur = v;
                while let Some(p) = prev[cur] {
                    path.push(p);
                    cur = p;
                }
                path.reverse();
                return Some(path);
            }
            for w in self.children(v) {
                if !seen[w] && !avoid.contains(&w) {
                    seen[w] = true;
                    prev[w] = Some(v);
                    queue.push_back(w);
                }
            }
        }
        None
    }
}

/// Ordered node-id sets L₁..L_K.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layering {
    pub layers: Vec<Vec<String>>,
}

impl Layering {
    pub fn new(layers: Vec<Vec<String>>) -> Self {
        Self { layers }
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layer_of(&self, id: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.iter().any(|x| x == id))
    }

    pub fn reversed(&self) -> Layering {
        Layering { layers: self.layers.iter().rev().cloned().collect() }
    }

    pub fn nodes(&self) -> impl Iterator<Item = &str> {
        self.layers.iter().flatten().map(String::as_str)
    }

    /// Checks every defining condition directly against `g`: the sets
    /// partition the nodes, no edge stays inside a layer, edges point to later
    /// layers, and every directed path from L_i to L_k meets L_j (i<j<k).
    pub fn satisfies_definition(&self, g: &CausalDag) -> bool {
        let mut count = 0;
        let mut layer_idx = vec![usize::MAX; g.node_count()];
        for (li, l) in self.layers.iter().enumerate() {
            if l.is_empty() {
                return false;
            }
            for id in l {
                let Some(i) = g.index_of(id) else { return false };
                if layer_idx[i] != usize::MAX {
                    return false;
                }
                layer_idx[i] = li;
                count += 1;
            }
        }
        if count != g.node_count() {
            return false;
        }
        if g.edges().iter().any(|&(a, b)| layer_idx[a] >= layer_idx[b]) {
            return false;
        }
        let members: Vec<Vec<usize>> =
            self.layers.iter().map(|l| l.iter().map(|id| g.index_of(id).unwrap()).collect()).collect();
        let k = members.len();
        for i in 0..k {
            for j in i + 1..k {
                for l in j + 1..k {
                    if g.has_path_avoiding(&members[i], &members[l], &members[j]).is_some() {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Why a DAG is not layered: sets `triplet.0 < triplet.1 < triplet.2` of the
/// longest-path partition and a directed path from the first to the last that
/// avoids the middle one. Indices are 0-based into `sets`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerObstruction {
    pub sets: Vec<Vec<String>>,
    pub triplet: (usize, usize, usize),
    pub path: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerCheck {
    Layered(Layering),
    NotLayered(LayerObstruction),
}

impl LayerCheck {
    pub fn layering(&self) -> Option<&Layering> {
        match self {
            LayerCheck::Layered(l) => Some(l),
            LayerCheck::NotLayered(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ids: &[&str]) -> Vec<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn validate_examples() {
        assert!(CausalDag::uniform(&["A", "B", "C"], &[("A", "B"), ("B", "C")], 2).unwrap().validate().is_ok());
        let cyc = CausalDag::uniform(&["A", "B"], &[("A", "B"), ("B", "A")], 2).unwrap();
        assert_eq!(cyc.validate(), Err(Error::Cycle(set(&["A", "B"]))));
        assert!(CausalDag::uniform(&["A", "B"], &[], 2).unwrap().validate().is_ok());
    }

    #[test]
    fn dangling_edge_rejected() {
        let r = CausalDag::uniform(&["A"], &[("A", "Z")], 2);
        assert!(matches!(r, Err(Error::Graph(_))));
    }

    #[test]
    fn topological_sets_examples() {
        let chain = CausalDag::uniform(&["A", "B", "C"], &[("A", "B"), ("B", "C")], 2).unwrap();
        assert_eq!(chain.topological_sets().unwrap(), vec![set(&["A"]), set(&["B"]), set(&["C"])]);
        let v = CausalDag::uniform(&["A", "B", "C"], &[("A", "C"), ("B", "C")], 2).unwrap();
        assert_eq!(v.topological_sets().unwrap(), vec![set(&["A", "B"]), set(&["C"])]);
        let diamond =
            CausalDag::uniform(&["A", "B", "C", "D"], &[("A", "B"), ("A", "C"), ("B", "D"), ("C", "D")], 2).unwrap();
        assert_eq!(diamond.topological_sets().unwrap(), vec![set(&["A"]), set(&["B", "C"]), set(&["D"])]);
    }

    #[test]
    fn topological_sets_reject_cycles() {
        let cyc = CausalDag::uniform(&["A", "B"], &[("A", "B"), ("B", "A")], 2).unwrap();
        assert!(matches!(cyc.topological_sets(), Err(Error::Cycle(_))));
    }

    #[test]
    fn layered_examples() {
        let chain = CausalDag::uniform(&["A", "B", "C"], &[("A", "B"), ("B", "C")], 2).unwrap();
        assert_eq!(chain.check_layered().unwrap().layering().unwrap().len(), 3);

        let skip = CausalDag::uniform(&["A", "B", "D"], &[("A", "B"), ("B", "D"), ("A", "D")], 2).unwrap();
        match skip.check_layered().unwrap() {
            LayerCheck::NotLayered(o) => {
                assert_eq!(o.triplet, (0, 1, 2));
                assert_eq!(o.path, set(&["A", "D"]));
            }
            other => panic!("expected obstruction, got {other:?}"),
        }

        let par = CausalDag::uniform(
            &["A", "B", "C", "A'", "B'", "C'"],
            &[("A", "B"), ("B", "C"), ("A'", "B'"), ("B'", "C'")],
            2,
        )
        .unwrap();
        let l = par.check_layered().unwrap();
        assert_eq!(l.layering().unwrap().layers, vec![set(&["A", "A'"]), set(&["B", "B'"]), set(&["C", "C'"])]);
    }

    #[test]
    fn late_root_is_still_layered() {
        // D joins the chain at C: D belongs with B, not with the roots.
        let g = CausalDag::uniform(&["A", "B", "C", "D"], &[("A", "B"), ("B", "C"), ("D", "C")], 2).unwrap();
        let l = g.check_layered().unwrap();
        let l = l.layering().expect("layered");
        assert_eq!(l.layers, vec![set(&["A"]), set(&["B", "D"]), set(&["C"])]);
        assert!(l.satisfies_definition(&g));
    }

    #[test]
    fn reverse_examples() {
        let chain = CausalDag::uniform(&["A", "B", "C"], &[("A", "B"), ("B", "C")], 2).unwrap();
        let r = chain.reverse();
        assert_eq!(r.edge_ids().collect::<Vec<_>>(), vec![("B", "A"), ("C", "B")]);
        assert_eq!(r.reverse(), chain);
        let empty = CausalDag::uniform(&["A", "B"], &[], 2).unwrap();
        assert_eq!(empty.reverse(), empty);
        let lr = r.check_layered().unwrap();
        assert_eq!(lr.layering().unwrap(), &chain.check_layered().unwrap().layering().unwrap().reversed());
    }

    #[test]
    fn json_round_trip() {
        let json = r#"{"nodes":[{"id":"A","dim":2},{"id":"B","dim":3}],"edges":[["A","B"]]}"#;
        let g: CausalDag = serde_json::from_str(json).unwrap();
        assert_eq!(g.dim("B"), Some(3));
        let back: CausalDag = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        assert_eq!(back, g);
    }
}
