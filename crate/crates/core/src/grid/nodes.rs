use super::{Grid, BUS_1, BUS_2, DISCONNECTED};

/// Dense numbering of the electrical nodes: one per (substation, busbar)
/// pair hosting at least one connected object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeMap {
    /// `(substation, busbar)` of each node, sorted by substation then busbar.
    pub nodes: Vec<(usize, i8)>,
    /// Node of each topology position, `None` when the object is disconnected.
    pub object_node: Vec<Option<usize>>,
}

impl NodeMap {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_of(&self, pos: usize) -> Option<usize> {
        self.object_node[pos]
    }
}

pub fn build_electrical_nodes(grid: &Grid) -> NodeMap {
    let n_sub = grid.n_substations();
    let mut used = vec![[false; 2]; n_sub];
    for (pos, &bus) in grid.topo_vect.iter().enumerate() {
        if bus != DISCONNECTED {
            used[grid.object_substation(pos)][(bus - 1) as usize] = true;
        }
    }
    let mut index = vec![[usize::MAX; 2]; n_sub];
    let mut nodes = Vec::new();
    for (s, flags) in used.iter().enumerate() {
        for (b, &on) in flags.iter().enumerate() {
            if on {
                index[s][b] = nodes.len();
                nodes.push((s, if b == 0 { BUS_1 } else { BUS_2 }));
            }
        }
    }
    let object_node = grid
        .topo_vect
        .iter()
        .enumerate()
        .map(|(pos, &bus)| {
            (bus != DISCONNECTED).then(|| index[grid.object_substation(pos)][(bus - 1) as usize])
        })
        .collect();
    NodeMap { nodes, object_node }
}
