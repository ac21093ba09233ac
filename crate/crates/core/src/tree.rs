//! Rooted metric trees.
//!
//! A [`MetricTree`] is built once from an undirected weighted edge list and a
//! root, and is immutable afterwards. Vertices are dense ids `0..n`. Every
//! non-root vertex `v` names the edge to its parent, so edges are identified
//! by their lower endpoint.
//!
//! Vertices also carry a *rank* (their position in [`MetricTree::order`]):
//! levels are listed deepest first, and within a level in breadth-first
//! order. Deeper vertices therefore always have strictly smaller ranks, and a
//! single forward pass over `order` visits every child before its parent.

use std::collections::VecDeque;

use thiserror::Error;

use crate::scalar::Scalar;

pub type Vertex = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("edge ({u}, {v}) closes a cycle")]
    CycleDetected { u: Vertex, v: Vertex },
    #[error("vertex {vertex} is not connected to the root")]
    Disconnected { vertex: Vertex },
    #[error("edge ({u}, {v}) has non-positive weight")]
    NonPositiveWeight { u: Vertex, v: Vertex },
    #[error("root {root} does not appear among the tree vertices")]
    UnknownRoot { root: Vertex },
    #[error("unknown vertex {0}")]
    UnknownVertex(Vertex),
}

/// The edge joining `child` to its parent.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge<S> {
    pub child: Vertex,
    pub weight: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricTree<S> {
    root: Vertex,
    parent: Vec<Option<Vertex>>,
    /// Weight of the edge to the parent; zero at the root.
    weight: Vec<S>,
    depth: Vec<usize>,
    order: Vec<Vertex>,
    rank: Vec<usize>,
    /// Rank of the parent of the vertex at each rank; the root points at itself.
    parent_rank: Vec<usize>,
    /// Parent-edge weight of the vertex at each rank.
    ranked_weight: Vec<S>,
    /// `order[level_start[k]..level_start[k + 1]]` holds the vertices at depth
    /// `height - k`.
    level_start: Vec<usize>,
    child_start: Vec<usize>,
    children: Vec<Vertex>,
}

impl<S: Scalar> MetricTree<S> {
    /// Builds a tree from undirected edges `(u, v, w)`.
    ///
    /// The vertex set is `0..n` where `n - 1` is the largest endpoint; an
    /// empty edge list gives the single-vertex tree `{0}`.
    pub fn from_edges(edges: &[(Vertex, Vertex, S)], root: Vertex) -> Result<Self, TreeError> {
        let n = edges
            .iter()
            .map(|&(u, v, _)| u.max(v) + 1)
            .max()
            .unwrap_or(1);
        if root >= n {
            return Err(TreeError::UnknownRoot { root });
        }
        let mut dsu = DisjointSets::new(n);
        let mut degree = vec![0usize; n];
        for (u, v, w) in edges {
            if *w <= S::zero() {
                return Err(TreeError::NonPositiveWeight { u: *u, v: *v });
            }
            if !dsu.union(*u, *v) {
                return Err(TreeError::CycleDetected { u: *u, v: *v });
            }
            degree[*u] += 1;
            degree[*v] += 1;
        }

        // CSR adjacency
        let mut adj_start = vec![0usize; n + 1];
        for v in 0..n {
            adj_start[v + 1] = adj_start[v] + degree[v];
        }
        let mut fill = adj_start.clone();
        let mut adj = vec![(0usize, 0usize); adj_start[n]];
        for (idx, (u, v, _)) in edges.iter().enumerate() {
            adj[fill[*u]] = (*v, idx);
            fill[*u] += 1;
            adj[fill[*v]] = (*u, idx);
            fill[*v] += 1;
        }

        let mut parent = vec![None; n];
        let mut weight = vec![S::zero(); n];
        let mut depth = vec![0usize; n];
        let mut seen = vec![false; n];
        let mut bfs = Vec::with_capacity(n);
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(u) = queue.pop_front() {
            bfs.push(u);
            for &(v, idx) in &adj[adj_start[u]..adj_start[u + 1]] {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = Some(u);
                    weight[v] = edges[idx].2.clone();
                    depth[v] = depth[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        if let Some(vertex) = seen.iter().position(|s| !s) {
            return Err(TreeError::Disconnected { vertex });
        }

        // BFS order is depth-sorted; regroup levels deepest first.
        let height = depth[*bfs.last().unwrap()];
        let mut level_bounds = vec![0usize; height + 2];
        for &v in &bfs {
            level_bounds[depth[v] + 1] += 1;
        }
        for d in 0..=height {
            level_bounds[d + 1] += level_bounds[d];
        }
        let mut order = Vec::with_capacity(n);
        let mut level_start = Vec::with_capacity(height + 2);
        for d in (0..=height).rev() {
            level_start.push(order.len());
            order.extend_from_slice(&bfs[level_bounds[d]..level_bounds[d + 1]]);
        }
        level_start.push(n);
        let mut rank = vec![0usize; n];
        for (k, &v) in order.iter().enumerate() {
            rank[v] = k;
        }
        let parent_rank = order
            .iter()
            .enumerate()
            .map(|(k, &v)| parent[v].map_or(k, |p| rank[p]))
            .collect();
        let ranked_weight = order.iter().map(|&v| weight[v].clone()).collect();

        // children listed in ascending rank
        let mut child_count = vec![0usize; n + 1];
        for p in parent.iter().flatten() {
            child_count[p + 1] += 1;
        }
        for v in 0..n {
            child_count[v + 1] += child_count[v];
        }
        let child_start = child_count;
        let mut fill = child_start.clone();
        let mut children = vec![0usize; n.saturating_sub(1)];
        for &v in &order {
            if let Some(p) = parent[v] {
                children[fill[p]] = v;
                fill[p] += 1;
            }
        }

        Ok(Self {
            root,
            parent,
            weight,
            depth,
            order,
            rank,
            parent_rank,
            ranked_weight,
            level_start,
            child_start,
            children,
        })
    }

    /// Rebuilds the same undirected tree hanging from another root.
    pub fn rerooted(&self, root: Vertex) -> Result<Self, TreeError> {
        if root >= self.len() {
            return Err(TreeError::UnknownRoot { root });
        }
        Self::from_edges(&self.edge_list(), root)
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> Vertex {
        self.root
    }

    pub fn contains(&self, v: Vertex) -> bool {
        v < self.len()
    }

    pub fn check(&self, v: Vertex) -> Result<(), TreeError> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(TreeError::UnknownVertex(v))
        }
    }

    pub fn parent(&self, v: Vertex) -> Option<Vertex> {
        self.parent[v]
    }

    /// Weight of the edge from `v` to its parent (zero for the root).
    pub fn weight(&self, v: Vertex) -> &S {
        &self.weight[v]
    }

    pub fn depth(&self, v: Vertex) -> usize {
        self.depth[v]
    }

    /// Largest depth in the tree.
    pub fn height(&self) -> usize {
        self.level_start.len() - 2
    }

    /// Vertices deepest first; position in this slice is the vertex rank.
    pub fn order(&self) -> &[Vertex] {
        &self.order
    }

    pub fn rank(&self, v: Vertex) -> usize {
        self.rank[v]
    }

    /// Parent ranks indexed by rank (`parent_ranks()[k] > k` except at the
    /// root, which is last and points at itself).
    pub fn parent_ranks(&self) -> &[usize] {
        &self.parent_rank
    }

    /// Parent-edge weights indexed by rank.
    pub fn ranked_weights(&self) -> &[S] {
        &self.ranked_weight
    }

    /// Vertices at depth `d`, in ascending rank.
    pub fn level(&self, d: usize) -> &[Vertex] {
        let h = self.height();
        if d > h {
            return &[];
        }
        let k = h - d;
        &self.order[self.level_start[k]..self.level_start[k + 1]]
    }

    /// Children of `v`, in ascending rank.
    pub fn children(&self, v: Vertex) -> &[Vertex] {
        &self.children[self.child_start[v]..self.child_start[v + 1]]
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge<S>> + '_ {
        self.order
            .iter()
            .filter(|&&v| v != self.root)
            .map(move |&v| Edge {
                child: v,
                weight: self.weight[v].clone(),
            })
    }

    /// `(parent, child, weight)` triples, one per edge.
    pub fn edge_list(&self) -> Vec<(Vertex, Vertex, S)> {
        (0..self.len())
            .filter_map(|v| self.parent[v].map(|p| (p, v, self.weight[v].clone())))
            .collect()
    }

    /// Sum of edge weights on the unique `u`–`v` path.
    pub fn path_distance(&self, u: Vertex, v: Vertex) -> Result<S, TreeError> {
        self.check(u)?;
        self.check(v)?;
        let (mut a, mut b) = (u, v);
        let mut up_a = S::zero();
        let mut up_b = S::zero();
        while self.depth[a] > self.depth[b] {
            up_a += self.weight[a].clone();
            a = self.parent[a].unwrap();
        }
        while self.depth[b] > self.depth[a] {
            up_b += self.weight[b].clone();
            b = self.parent[b].unwrap();
        }
        while a != b {
            up_a += self.weight[a].clone();
            up_b += self.weight[b].clone();
            a = self.parent[a].unwrap();
            b = self.parent[b].unwrap();
        }
        Ok(up_a + up_b)
    }

    /// Descendants of `v`, including `v` itself.
    pub fn subtree_of(&self, v: Vertex) -> Result<Subtree<'_, S>, TreeError> {
        self.check(v)?;
        Ok(Subtree {
            tree: self,
            stack: vec![v],
        })
    }

    /// `true` iff `a` lies on the path from the root to `b`.
    pub fn is_ancestor(&self, a: Vertex, b: Vertex) -> bool {
        let mut x = b;
        while self.depth[x] > self.depth[a] {
            x = self.parent[x].unwrap();
        }
        x == a
    }
}

/// Depth-first iterator over a subtree.
pub struct Subtree<'a, S> {
    tree: &'a MetricTree<S>,
    stack: Vec<Vertex>,
}

impl<S: Scalar> Iterator for Subtree<'_, S> {
    type Item = Vertex;

    fn next(&mut self) -> Option<Vertex> {
        let v = self.stack.pop()?;
        self.stack.extend(self.tree.children(v).iter().rev());
        Some(v)
    }
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns `false` if `a` and `b` were already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}
