use serde::{Deserialize, Serialize};

use crate::grid::{Grid, GridObject, BUS_1, BUS_2, DISCONNECTED};

/// One atomic topology or line-status action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    DoNothing,
    /// `value`: -1 disconnect, 0 nothing, +1 reconnect.
    SetLineStatus { line: usize, value: i8 },
    ChangeLineStatus { line: usize },
    /// `object` is a `topo_vect` position; `value`: -1 disconnect, 0 nothing,
    /// 1 or 2 for the target busbar.
    SetBus { object: usize, value: i8 },
    ChangeBus { object: usize },
}

/// The three action spaces compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSpaceKind {
    /// set/change line status and set/change bus.
    Topology,
    /// set line status only.
    PowerlineSet,
    /// set line status and set bus.
    TopologySet,
}

impl ActionSpaceKind {
    pub const ALL: [ActionSpaceKind; 3] = [
        ActionSpaceKind::Topology,
        ActionSpaceKind::PowerlineSet,
        ActionSpaceKind::TopologySet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActionSpaceKind::Topology => "topology",
            ActionSpaceKind::PowerlineSet => "powerline_set",
            ActionSpaceKind::TopologySet => "topology_set",
        }
    }
}

impl std::str::FromStr for ActionSpaceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActionSpaceKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown action space `{s}`"))
    }
}

/// Ordered, enumerated discrete action set. Index 0 is always `DoNothing`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionCatalog {
    pub kind: ActionSpaceKind,
    pub actions: Vec<Action>,
}

impl ActionCatalog {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Action> {
        self.actions.get(index)
    }
}

pub fn enumerate_actions(grid: &Grid, kind: ActionSpaceKind) -> ActionCatalog {
    let full = kind == ActionSpaceKind::Topology;
    let with_bus = kind != ActionSpaceKind::PowerlineSet;
    let mut actions = vec![Action::DoNothing];
    for line in 0..grid.n_lines() {
        actions.push(Action::SetLineStatus { line, value: -1 });
        actions.push(Action::SetLineStatus { line, value: 1 });
        if full {
            actions.push(Action::ChangeLineStatus { line });
        }
    }
    if with_bus {
        for object in 0..grid.dim_topo() {
            actions.push(Action::SetBus { object, value: 1 });
            actions.push(Action::SetBus { object, value: 2 });
            actions.push(Action::SetBus { object, value: -1 });
            if full {
                actions.push(Action::ChangeBus { object });
            }
        }
    }
    ActionCatalog { kind, actions }
}

/// Applies an action to the grid topology. Returns false, leaving the grid
/// untouched, when the action is illegal: out-of-range targets or values,
/// touching a line under cooldown, reconnecting a line whose end was opened
/// by a bus action through a status action, or changing the bus of a
/// disconnected object. Every status change starts the line's cooldown.
pub fn apply_action(grid: &mut Grid, action: &Action, cooldown: u32) -> bool {
    match *action {
        Action::DoNothing => true,
        Action::SetLineStatus { line, value } => {
            if line >= grid.n_lines() || !(-1..=1).contains(&value) {
                return false;
            }
            if value == 0 {
                return true;
            }
            if grid.lines[line].cooldown_remaining > 0 {
                return false;
            }
            set_line_status(grid, line, value == 1, cooldown)
        }
        Action::ChangeLineStatus { line } => {
            if line >= grid.n_lines() || grid.lines[line].cooldown_remaining > 0 {
                return false;
            }
            let target = !grid.lines[line].status;
            set_line_status(grid, line, target, cooldown)
        }
        Action::SetBus { object, value } => {
            if object >= grid.dim_topo() || !(-1..=2).contains(&value) {
                return false;
            }
            if value == 0 {
                return true;
            }
            match grid.object(object).line() {
                None => {
                    grid.topo_vect[object] = value;
                    true
                }
                Some(line) => set_line_end_bus(grid, object, line, value, cooldown),
            }
        }
        Action::ChangeBus { object } => {
            if object >= grid.dim_topo() {
                return false;
            }
            let current = grid.topo_vect[object];
            if current == DISCONNECTED {
                return false;
            }
            if let Some(line) = grid.object(object).line() {
                if grid.lines[line].cooldown_remaining > 0 {
                    return false;
                }
            }
            grid.topo_vect[object] = if current == BUS_1 { BUS_2 } else { BUS_1 };
            true
        }
    }
}

fn set_line_status(grid: &mut Grid, line: usize, connect: bool, cooldown: u32) -> bool {
    let status = grid.lines[line].status;
    if status == connect {
        return true;
    }
    if connect {
        if grid.lines[line].bus_disconnected {
            return false;
        }
        grid.connect_line(line, BUS_1, BUS_1);
    } else {
        grid.disconnect_line(line);
    }
    grid.lines[line].cooldown_remaining = cooldown;
    true
}

fn set_line_end_bus(grid: &mut Grid, pos: usize, line: usize, bus: i8, cooldown: u32) -> bool {
    if grid.lines[line].cooldown_remaining > 0 {
        return false;
    }
    let connected = grid.lines[line].status;
    if bus == DISCONNECTED {
        if connected {
            grid.disconnect_line(line);
            grid.lines[line].bus_disconnected = true;
            grid.lines[line].cooldown_remaining = cooldown;
        }
        return true;
    }
    if connected {
        grid.topo_vect[pos] = bus;
        return true;
    }
    // Reconnect with this end on `bus`, the other end on busbar 1.
    let (or_bus, ex_bus) = match grid.object(pos) {
        GridObject::LineOrigin(_) => (bus, BUS_1),
        _ => (BUS_1, bus),
    };
    grid.connect_line(line, or_bus, ex_bus);
    grid.lines[line].cooldown_remaining = cooldown;
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn kind_tag(a: &Action) -> &'static str {
        match a {
            Action::DoNothing => "do_nothing",
            Action::SetLineStatus { .. } => "set_line_status",
            Action::ChangeLineStatus { .. } => "change_line_status",
            Action::SetBus { .. } => "set_bus",
            Action::ChangeBus { .. } => "change_bus",
        }
    }

    #[test]
    fn catalog_sizes_follow_counting_rules() {
        for g in [Grid::case5(), Grid::case14()] {
            let (e, t) = (g.n_lines(), g.dim_topo());
            assert_eq!(enumerate_actions(&g, ActionSpaceKind::PowerlineSet).len(), 1 + 2 * e);
            assert_eq!(
                enumerate_actions(&g, ActionSpaceKind::TopologySet).len(),
                1 + 2 * e + 3 * t
            );
            assert_eq!(
                enumerate_actions(&g, ActionSpaceKind::Topology).len(),
                1 + 3 * e + 4 * t
            );
        }
        assert_eq!(
            enumerate_actions(&Grid::case5(), ActionSpaceKind::PowerlineSet).len(),
            17
        );
    }

    #[test]
    fn catalogs_nest_and_start_with_do_nothing() {
        let g = Grid::case5();
        let cats: Vec<_> = [
            ActionSpaceKind::PowerlineSet,
            ActionSpaceKind::TopologySet,
            ActionSpaceKind::Topology,
        ]
        .iter()
        .map(|&k| enumerate_actions(&g, k))
        .collect();
        for c in &cats {
            assert_eq!(c.actions[0], Action::DoNothing);
        }
        let sets: Vec<HashSet<Action>> =
            cats.iter().map(|c| c.actions.iter().copied().collect()).collect();
        assert!(sets[0].is_subset(&sets[1]));
        assert!(sets[1].is_subset(&sets[2]));
        let kinds: Vec<HashSet<&str>> = cats
            .iter()
            .map(|c| c.actions.iter().map(kind_tag).collect())
            .collect();
        assert!(kinds[1].is_subset(&kinds[2]) && kinds[1] != kinds[2]);
        assert!(kinds[0].is_subset(&kinds[1]) && kinds[0] != kinds[1]);
    }

    #[test]
    fn set_line_status_disconnects_both_ends() {
        let mut g = Grid::case5();
        assert!(apply_action(&mut g, &Action::SetLineStatus { line: 1, value: -1 }, 3));
        assert!(!g.lines[1].status);
        assert_eq!(g.topo_vect[g.line_or_pos(1)], DISCONNECTED);
        assert_eq!(g.topo_vect[g.line_ex_pos(1)], DISCONNECTED);
        assert_eq!(g.lines[1].cooldown_remaining, 3);
    }

    #[test]
    fn cooldown_blocks_line_actions() {
        let mut g = Grid::case5();
        apply_action(&mut g, &Action::SetLineStatus { line: 1, value: -1 }, 3);
        let before = g.clone();
        assert!(!apply_action(&mut g, &Action::SetLineStatus { line: 1, value: 1 }, 3));
        assert!(!apply_action(&mut g, &Action::ChangeLineStatus { line: 1 }, 3));
        assert_eq!(g, before);
        g.lines[1].cooldown_remaining = 0;
        assert!(apply_action(&mut g, &Action::ChangeLineStatus { line: 1 }, 3));
        assert!(g.lines[1].status);
        assert_eq!(g.topo_vect[g.line_or_pos(1)], BUS_1);
    }

    #[test]
    fn bus_disconnected_line_needs_a_bus_action() {
        let mut g = Grid::case5();
        let or = g.line_or_pos(2);
        assert!(apply_action(&mut g, &Action::SetBus { object: or, value: -1 }, 3));
        assert!(!g.lines[2].status);
        g.lines[2].cooldown_remaining = 0;
        assert!(!apply_action(&mut g, &Action::SetLineStatus { line: 2, value: 1 }, 3));
        assert!(apply_action(&mut g, &Action::SetBus { object: or, value: 2 }, 3));
        assert!(g.lines[2].status);
        assert_eq!(g.topo_vect[or], BUS_2);
        assert_eq!(g.topo_vect[g.line_ex_pos(2)], BUS_1);
        g.check_invariants().unwrap();
    }

    #[test]
    fn change_bus_on_disconnected_object_is_illegal() {
        let mut g = Grid::case5();
        let pos = g.load_pos(0);
        assert!(apply_action(&mut g, &Action::SetBus { object: pos, value: -1 }, 3));
        assert!(!g.is_load_connected(0));
        assert!(!apply_action(&mut g, &Action::ChangeBus { object: pos }, 3));
        assert!(apply_action(&mut g, &Action::SetBus { object: pos, value: 1 }, 3));
        assert!(apply_action(&mut g, &Action::ChangeBus { object: pos }, 3));
        assert_eq!(g.topo_vect[pos], BUS_2);
    }

    #[test]
    fn out_of_range_is_illegal() {
        let mut g = Grid::case5();
        let before = g.clone();
        assert!(!apply_action(&mut g, &Action::SetLineStatus { line: 99, value: 1 }, 3));
        assert!(!apply_action(&mut g, &Action::SetLineStatus { line: 0, value: 2 }, 3));
        assert!(!apply_action(&mut g, &Action::SetBus { object: 0, value: 3 }, 3));
        assert!(!apply_action(&mut g, &Action::ChangeBus { object: 500 }, 3));
        assert_eq!(g, before);
    }
}
