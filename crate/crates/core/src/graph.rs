//! Directed acyclic graphs and the structural queries the rest of the crate
//! is built on: topological ordering, ancestor closures, descendant sets, and
//! a directed-path blocking test used to decide when fixed-parent sensitivity
//! indices are tight.
//!
//! Vertices are integers `0..n`; optional string labels are metadata only and
//! never affect ordering or tie-breaking.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

/// Errors produced by graph construction and structural queries.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    /// The edge set contains a directed cycle; one witness cycle is reported
    /// as a vertex sequence `v0 -> v1 -> ... -> v0`.
    #[error("directed cycle detected: {}", format_cycle(.0))]
    CycleDetected(Vec<usize>),
    /// A vertex index is outside `0..vertex_count`.
    #[error("vertex {vertex} out of range for graph with {vertex_count} vertices")]
    InvalidVertex { vertex: usize, vertex_count: usize },
    /// A query required `l` to be an ancestor of `k` (or `k` itself).
    #[error("vertex {l} is not {k} or one of its ancestors")]
    NotAncestor { l: usize, k: usize },
    /// A label list was supplied whose length does not match the vertex count.
    #[error("expected {expected} labels, got {got}")]
    LabelCountMismatch { expected: usize, got: usize },
}

fn format_cycle(cycle: &[usize]) -> String {
    let mut parts: Vec<String> = cycle.iter().map(|v| v.to_string()).collect();
    if let Some(first) = cycle.first() {
        parts.push(first.to_string());
    }
    parts.join(" -> ")
}

/// An immutable directed acyclic graph.
///
/// Construction validates acyclicity and edge endpoints; the topological
/// order (lexicographic tie-break) is computed once and cached. Adjacency
/// lists are kept sorted so that every traversal in the crate is
/// deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct Dag {
    vertex_count: usize,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    topo: Vec<usize>,
    labels: Option<Vec<String>>,
}

impl Dag {
    /// Builds a DAG from `(parent, child)` edge pairs. Duplicate edges
    /// collapse; a cycle or an out-of-range endpoint is an error.
    pub fn new(vertex_count: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut parent_sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); vertex_count];
        let mut child_sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); vertex_count];
        for &(u, v) in edges {
            for w in [u, v] {
                if w >= vertex_count {
                    return Err(GraphError::InvalidVertex {
                        vertex: w,
                        vertex_count,
                    });
                }
            }
            parent_sets[v].insert(u);
            child_sets[u].insert(v);
        }
        let parents: Vec<Vec<usize>> = parent_sets.into_iter().map(|s| s.into_iter().collect()).collect();
        let children: Vec<Vec<usize>> = child_sets.into_iter().map(|s| s.into_iter().collect()).collect();
        let topo = kahn_topological_order(&parents, &children)
            .ok_or_else(|| GraphError::CycleDetected(find_cycle(&children)))?;
        Ok(Self {
            vertex_count,
            parents,
            children,
            topo,
            labels: None,
        })
    }

    /// Attaches display labels (one per vertex).
    pub fn with_labels<S: Into<String>>(
        mut self,
        labels: impl IntoIterator<Item = S>,
    ) -> Result<Self, GraphError> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() != self.vertex_count {
            return Err(GraphError::LabelCountMismatch {
                expected: self.vertex_count,
                got: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    /// Sorted parent list of `v`.
    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    /// Sorted child list of `v`.
    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    /// The label of `v`, or its index rendered as text when unlabeled.
    pub fn label(&self, v: usize) -> String {
        match &self.labels {
            Some(names) => names[v].clone(),
            None => v.to_string(),
        }
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Resolves a label back to its vertex index.
    pub fn vertex_by_label(&self, name: &str) -> Option<usize> {
        self.labels
            .as_ref()
            .and_then(|ls| ls.iter().position(|l| l == name))
    }

    /// All edges as `(parent, child)` pairs in deterministic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for v in 0..self.vertex_count {
            for &p in &self.parents[v] {
                out.push((p, v));
            }
        }
        out
    }

    /// A vertex ordering in which every parent precedes its children.
    /// Ties are broken by smallest index first, so the result is unique.
    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    fn check_vertex(&self, v: usize) -> Result<(), GraphError> {
        if v >= self.vertex_count {
            return Err(GraphError::InvalidVertex {
                vertex: v,
                vertex_count: self.vertex_count,
            });
        }
        Ok(())
    }

    /// The strict ancestor set of `k` (transitive closure of parents,
    /// excluding `k` itself).
    pub fn ancestors(&self, k: usize) -> Result<BTreeSet<usize>, GraphError> {
        self.check_vertex(k)?;
        let mut seen = BTreeSet::new();
        let mut stack: Vec<usize> = self.parents[k].to_vec();
        while let Some(v) = stack.pop() {
            if seen.insert(v) {
                stack.extend_from_slice(&self.parents[v]);
            }
        }
        Ok(seen)
    }

    /// Ancestors of `k` together with `k` itself.
    pub fn ancestral_closure(&self, k: usize) -> Result<BTreeSet<usize>, GraphError> {
        let mut set = self.ancestors(k)?;
        set.insert(k);
        Ok(set)
    }

    /// Union of ancestral closures over a vertex set.
    pub fn ancestral_closure_of_set(&self, vs: &[usize]) -> Result<BTreeSet<usize>, GraphError> {
        let mut out = BTreeSet::new();
        for &v in vs {
            out.append(&mut self.ancestral_closure(v)?);
        }
        Ok(out)
    }

    /// The strict descendant set of `l`.
    pub fn descendants(&self, l: usize) -> Result<BTreeSet<usize>, GraphError> {
        self.check_vertex(l)?;
        let mut seen = BTreeSet::new();
        let mut stack: Vec<usize> = self.children[l].to_vec();
        while let Some(v) = stack.pop() {
            if seen.insert(v) {
                stack.extend_from_slice(&self.children[v]);
            }
        }
        Ok(seen)
    }

    /// True when every parent of every member of `set` is itself a member:
    /// exactly the sets one may condition on by clamping values and forward
    /// sampling the remainder.
    pub fn is_ancestrally_closed(&self, set: &BTreeSet<usize>) -> bool {
        set.iter()
            .all(|&v| self.parents[v].iter().all(|p| set.contains(p)))
    }

    /// Structural conditional-independence test between `k` and the
    /// non-parent ancestors of `l`, conditioning on `l`'s parents.
    ///
    /// Returns true when every directed path from a vertex in
    /// `ancestors(l) \ parents(l)` to `k` passes through `parents(l) ∪ {l}`.
    /// This is a sufficient criterion: it holds automatically on chains and
    /// trees, and failing it only downgrades a fixed-parent sensitivity value
    /// from exact to upper bound.
    ///
    /// Requires `l` to be `k` or one of its ancestors.
    pub fn cond_indep_given_parents(&self, k: usize, l: usize) -> Result<bool, GraphError> {
        self.check_vertex(k)?;
        self.check_vertex(l)?;
        if l != k && !self.ancestors(k)?.contains(&l) {
            return Err(GraphError::NotAncestor { l, k });
        }
        let rho_l = self.ancestors(l)?;
        let mut blocked: BTreeSet<usize> = self.parents[l].iter().copied().collect();
        blocked.insert(l);
        let sources: Vec<usize> = rho_l.iter().copied().filter(|v| !blocked.contains(v)).collect();

        // Forward reachability from the sources, never stepping into a
        // blocking vertex; reaching k exhibits an unblocked path.
        let mut visited = vec![false; self.vertex_count];
        let mut stack = sources;
        while let Some(v) = stack.pop() {
            if visited[v] {
                continue;
            }
            visited[v] = true;
            for &w in &self.children[v] {
                if w == k {
                    return Ok(false);
                }
                if !blocked.contains(&w) && !visited[w] {
                    stack.push(w);
                }
            }
        }
        Ok(true)
    }
}

impl fmt::Display for Dag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dag({} vertices, {} edges)", self.vertex_count, self.edges().len())
    }
}

fn kahn_topological_order(parents: &[Vec<usize>], children: &[Vec<usize>]) -> Option<Vec<usize>> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    let n = parents.len();
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut ready: BinaryHeap<Reverse<usize>> = (0..n)
        .filter(|&v| indegree[v] == 0)
        .map(Reverse)
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(v)) = ready.pop() {
        order.push(v);
        for &w in &children[v] {
            indegree[w] -= 1;
            if indegree[w] == 0 {
                ready.push(Reverse(w));
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// Finds one directed cycle in a graph known to contain at least one.
fn find_cycle(children: &[Vec<usize>]) -> Vec<usize> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Gray,
        Black,
    }
    let n = children.len();
    let mut mark = vec![Mark::White; n];
    let mut path: Vec<usize> = Vec::new();

    fn dfs(
        v: usize,
        children: &[Vec<usize>],
        mark: &mut [Mark],
        path: &mut Vec<usize>,
    ) -> Option<Vec<usize>> {
        mark[v] = Mark::Gray;
        path.push(v);
        for &w in &children[v] {
            match mark[w] {
                Mark::Gray => {
                    let start = path.iter().position(|&u| u == w).expect("gray vertex on path");
                    return Some(path[start..].to_vec());
                }
                Mark::White => {
                    if let Some(cycle) = dfs(w, children, mark, path) {
                        return Some(cycle);
                    }
                }
                Mark::Black => {}
            }
        }
        path.pop();
        mark[v] = Mark::Black;
        None
    }

    for v in 0..n {
        if mark[v] == Mark::White {
            if let Some(cycle) = dfs(v, children, &mut mark, &mut path) {
                return cycle;
            }
        }
    }
    unreachable!("find_cycle called on an acyclic graph")
}
