use super::{Grid, NodeMap};

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns true when `a` and `b` were in different sets.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Connected components of the electrical-node graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IslandPartition {
    /// Members of each island, ascending. Islands are ordered by their
    /// smallest member.
    pub islands: Vec<Vec<usize>>,
    /// Island index of each node.
    pub node_island: Vec<usize>,
}

impl IslandPartition {
    pub fn len(&self) -> usize {
        self.islands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.islands.is_empty()
    }
}

pub fn find_islands(nodes: &NodeMap, grid: &Grid) -> IslandPartition {
    let n = nodes.len();
    let mut uf = UnionFind::new(n);
    for l in 0..grid.n_lines() {
        if !grid.lines[l].status {
            continue;
        }
        if let (Some(a), Some(b)) = (
            nodes.node_of(grid.line_or_pos(l)),
            nodes.node_of(grid.line_ex_pos(l)),
        ) {
            uf.union(a, b);
        }
    }
    // Scanning nodes in ascending order assigns island ids by smallest member.
    let mut root_island = vec![usize::MAX; n];
    let mut node_island = vec![0; n];
    let mut islands: Vec<Vec<usize>> = Vec::new();
    for v in 0..n {
        let r = uf.find(v);
        if root_island[r] == usize::MAX {
            root_island[r] = islands.len();
            islands.push(Vec::new());
        }
        node_island[v] = root_island[r];
        islands[root_island[r]].push(v);
    }
    IslandPartition {
        islands,
        node_island,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_electrical_nodes;

    #[test]
    fn union_find_merges() {
        let mut uf = UnionFind::new(4);
        assert!(uf.union(0, 1));
        assert!(!uf.union(1, 0));
        assert!(uf.union(2, 3));
        assert_ne!(uf.find(0), uf.find(2));
        uf.union(1, 3);
        assert_eq!(uf.find(0), uf.find(2));
    }

    #[test]
    fn connected_grid_is_one_island() {
        let g = Grid::case14();
        let nodes = build_electrical_nodes(&g);
        let islands = find_islands(&nodes, &g);
        assert_eq!(islands.len(), 1);
    }

    #[test]
    fn no_lines_gives_one_island_per_node() {
        let mut g = Grid::case5();
        for l in 0..g.n_lines() {
            g.disconnect_line(l);
        }
        let nodes = build_electrical_nodes(&g);
        let islands = find_islands(&nodes, &g);
        assert_eq!(nodes.len(), 5);
        assert_eq!(islands.len(), 5);
        for (i, isl) in islands.islands.iter().enumerate() {
            assert_eq!(isl, &vec![i]);
        }
    }
}
