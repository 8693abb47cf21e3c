use std::collections::{BTreeSet, VecDeque};

/// Directed edge set on agents `0..n`. A pair `(j, i)` means agent `i`
/// receives information from agent `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeSet {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl EdgeSet {
    pub fn new(n: usize) -> Self {
        Self { n, edges: BTreeSet::new() }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut set = Self::new(n);
        for (j, i) in edges {
            set.insert(j, i);
        }
        set
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn insert(&mut self, from: usize, to: usize) {
        assert!(from < self.n && to < self.n, "edge ({from},{to}) outside 0..{}", self.n);
        self.edges.insert((from, to));
    }

    pub fn contains(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn union_with(&mut self, other: &EdgeSet) {
        assert_eq!(self.n, other.n);
        self.edges.extend(other.edges.iter().copied());
    }

    pub fn is_superset(&self, other: &EdgeSet) -> bool {
        self.edges.is_superset(&other.edges)
    }

    /// Edges of `other` not present in `self`.
    pub fn missing_from(&self, other: &EdgeSet) -> Vec<(usize, usize)> {
        other.edges.difference(&self.edges).copied().collect()
    }

    fn adjacency(&self, transpose: bool) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(from, to) in &self.edges {
            if transpose {
                adj[to].push(from);
            } else {
                adj[from].push(to);
            }
        }
        adj
    }

    /// BFS hop counts from `source` along edge direction.
    fn bfs(adj: &[Vec<usize>], source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; adj.len()];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &v in &adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Every node reaches node 0 and node 0 reaches every node.
    pub fn is_strongly_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let forward = Self::bfs(&self.adjacency(false), 0);
        let backward = Self::bfs(&self.adjacency(true), 0);
        forward.iter().all(Option::is_some) && backward.iter().all(Option::is_some)
    }

    /// All-pairs shortest directed path lengths: `d[i][j]` is the number of
    /// hops from `i` to `j` (0 on the diagonal), `None` when unreachable.
    pub fn shortest_paths(&self) -> Vec<Vec<Option<usize>>> {
        let adj = self.adjacency(false);
        (0..self.n).map(|s| Self::bfs(&adj, s)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_loops(n: usize, edges: &[(usize, usize)]) -> EdgeSet {
        EdgeSet::from_edges(n, (0..n).map(|i| (i, i)).chain(edges.iter().copied()))
    }

    #[test]
    fn self_loops_only_is_disconnected() {
        assert!(!with_loops(2, &[]).is_strongly_connected());
    }

    #[test]
    fn directed_ring_is_strongly_connected() {
        assert!(with_loops(3, &[(0, 1), (1, 2), (2, 0)]).is_strongly_connected());
    }

    #[test]
    fn complete_graph_is_strongly_connected() {
        let n = 5;
        let all = (0..n).flat_map(|i| (0..n).map(move |j| (i, j)));
        assert!(EdgeSet::from_edges(n, all).is_strongly_connected());
    }

    #[test]
    fn one_way_path_is_not_strongly_connected() {
        assert!(!with_loops(3, &[(0, 1), (1, 2)]).is_strongly_connected());
    }

    #[test]
    fn ring_distances() {
        let d = with_loops(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).shortest_paths();
        assert_eq!(d[0][3], Some(3));
        assert_eq!(d[3][0], Some(1));
        assert_eq!(d[2][2], Some(0));
    }
}
