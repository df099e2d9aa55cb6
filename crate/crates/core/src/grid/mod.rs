//! Static grid description, dual-busbar topology bookkeeping, island
//! detection and a DC power flow that stays solvable after the network
//! splits into sub-networks.

mod islands;
mod nodes;
mod powerflow;
mod protection;

pub use islands::{find_islands, IslandPartition, UnionFind};
pub use nodes::{build_electrical_nodes, NodeMap};
pub use powerflow::{solve_dc_power_flow, solve_spd, PowerFlowResult};
pub use protection::apply_overflow_protection;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Busbar assignment of a disconnected object in `topo_vect`.
pub const DISCONNECTED: i8 = -1;
/// Busbar 1.
pub const BUS_1: i8 = 1;
/// Busbar 2.
pub const BUS_2: i8 = 2;

const CASE5_JSON: &str = include_str!("../../fixtures/case5.json");
const CASE14_JSON: &str = include_str!("../../fixtures/case14.json");

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid description: {0}")]
    Invalid(String),
    #[error("reduced Laplacian of island {island} is singular")]
    SingularSystem { island: usize },
    #[error("failed to read grid file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse grid description: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Substation {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Powerline {
    pub from_substation: usize,
    pub to_substation: usize,
    /// Per-unit on the grid's MVA base.
    pub susceptance: f64,
    /// Flow magnitude limit in MW.
    pub thermal_limit: f64,
    pub status: bool,
    /// Consecutive steps spent with loading above 1.
    pub timestep_overflow: u32,
    pub cooldown_remaining: u32,
    /// Set when an end was explicitly disconnected through a bus action; such
    /// a line can only come back through a bus action on one of its ends.
    pub bus_disconnected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub substation: usize,
    pub p_scheduled: f64,
    pub p_actual: f64,
    pub p_max: f64,
    pub q_scheduled: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Load {
    pub substation: usize,
    /// Nominal demand used to scale synthetic chronics.
    pub p_nominal: f64,
    pub d_scheduled: f64,
    pub d_actual: f64,
    pub q_scheduled: f64,
}

/// One entry of the topology vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GridObject {
    Load(usize),
    Generator(usize),
    LineOrigin(usize),
    LineExtremity(usize),
}

impl GridObject {
    pub fn line(self) -> Option<usize> {
        match self {
            GridObject::LineOrigin(l) | GridObject::LineExtremity(l) => Some(l),
            _ => None,
        }
    }
}

/// A power grid: static description plus mutable topology and operating state.
///
/// `topo_vect` is ordered by substation; inside a substation loads come
/// first, then generators, line origins and line extremities, each by index.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub name: String,
    pub base_mva: f64,
    pub substations: Vec<Substation>,
    pub lines: Vec<Powerline>,
    pub generators: Vec<Generator>,
    pub loads: Vec<Load>,
    pub topo_vect: Vec<i8>,
    objects: Vec<GridObject>,
    line_or_pos: Vec<usize>,
    line_ex_pos: Vec<usize>,
    gen_pos: Vec<usize>,
    load_pos: Vec<usize>,
    initial_topo: Vec<i8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridFile {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_base_mva")]
    pub base_mva: f64,
    pub substations: Vec<Substation>,
    pub lines: Vec<LineSpec>,
    pub generators: Vec<GeneratorSpec>,
    pub loads: Vec<LoadSpec>,
}

fn default_base_mva() -> f64 {
    100.0
}

fn default_bus() -> i8 {
    BUS_1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineSpec {
    pub from: usize,
    pub to: usize,
    pub susceptance: f64,
    pub thermal_limit: f64,
    #[serde(default = "default_bus")]
    pub from_bus: i8,
    #[serde(default = "default_bus")]
    pub to_bus: i8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub substation: usize,
    pub p_max: f64,
    #[serde(default = "default_bus")]
    pub bus: i8,
    #[serde(default)]
    pub q_scheduled: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadSpec {
    pub substation: usize,
    #[serde(default)]
    pub p_nominal: f64,
    #[serde(default = "default_bus")]
    pub bus: i8,
    #[serde(default)]
    pub q_scheduled: f64,
}

impl Grid {
    /// The bundled 5-substation fixture.
    pub fn case5() -> Grid {
        Grid::from_json_str(CASE5_JSON).expect("bundled case5 fixture is valid")
    }

    /// The bundled 14-substation fixture.
    pub fn case14() -> Grid {
        Grid::from_json_str(CASE14_JSON).expect("bundled case14 fixture is valid")
    }

    /// Resolves a fixture name (`case5`, `case14`) or a path to a grid file.
    pub fn load(name_or_path: &str) -> Result<Grid, GridError> {
        match name_or_path {
            "case5" => Ok(Grid::case5()),
            "case14" => Ok(Grid::case14()),
            path => Grid::from_path(path),
        }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Grid, GridError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| GridError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Grid::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Grid, GridError> {
        let file: GridFile = serde_json::from_str(text)?;
        Grid::from_file(file)
    }

    pub fn from_file(file: GridFile) -> Result<Grid, GridError> {
        let n_sub = file.substations.len();
        if n_sub == 0 {
            return Err(GridError::Invalid("no substations".into()));
        }
        if !(file.base_mva > 0.0) {
            return Err(GridError::Invalid("base_mva must be positive".into()));
        }
        let check_sub = |s: usize, what: &str| {
            if s >= n_sub {
                Err(GridError::Invalid(format!("{what} refers to substation {s} of {n_sub}")))
            } else {
                Ok(())
            }
        };
        let check_bus = |b: i8, what: &str| {
            if b == DISCONNECTED || b == BUS_1 || b == BUS_2 {
                Ok(())
            } else {
                Err(GridError::Invalid(format!("{what} has bus {b}, expected -1, 1 or 2")))
            }
        };
        for (i, l) in file.lines.iter().enumerate() {
            let what = format!("line {i}");
            check_sub(l.from, &what)?;
            check_sub(l.to, &what)?;
            check_bus(l.from_bus, &what)?;
            check_bus(l.to_bus, &what)?;
            if l.from == l.to {
                return Err(GridError::Invalid(format!("{what} is a self loop")));
            }
            if !(l.susceptance > 0.0) || !(l.thermal_limit > 0.0) {
                return Err(GridError::Invalid(format!(
                    "{what} needs positive susceptance and thermal limit"
                )));
            }
            if (l.from_bus == DISCONNECTED) != (l.to_bus == DISCONNECTED) {
                return Err(GridError::Invalid(format!("{what} is half disconnected")));
            }
        }
        for (i, g) in file.generators.iter().enumerate() {
            let what = format!("generator {i}");
            check_sub(g.substation, &what)?;
            check_bus(g.bus, &what)?;
            if !(g.p_max >= 0.0) {
                return Err(GridError::Invalid(format!("{what} has negative p_max")));
            }
        }
        for (i, d) in file.loads.iter().enumerate() {
            let what = format!("load {i}");
            check_sub(d.substation, &what)?;
            check_bus(d.bus, &what)?;
            if !(d.p_nominal >= 0.0) {
                return Err(GridError::Invalid(format!("{what} has negative p_nominal")));
            }
        }

        // Build the topology ordering: per substation, loads, generators,
        // line origins, line extremities.
        let mut objects = Vec::new();
        for s in 0..n_sub {
            objects.extend(
                (0..file.loads.len())
                    .filter(|&j| file.loads[j].substation == s)
                    .map(GridObject::Load),
            );
            objects.extend(
                (0..file.generators.len())
                    .filter(|&k| file.generators[k].substation == s)
                    .map(GridObject::Generator),
            );
            objects.extend(
                (0..file.lines.len())
                    .filter(|&l| file.lines[l].from == s)
                    .map(GridObject::LineOrigin),
            );
            objects.extend(
                (0..file.lines.len())
                    .filter(|&l| file.lines[l].to == s)
                    .map(GridObject::LineExtremity),
            );
        }
        let mut line_or_pos = vec![0; file.lines.len()];
        let mut line_ex_pos = vec![0; file.lines.len()];
        let mut gen_pos = vec![0; file.generators.len()];
        let mut load_pos = vec![0; file.loads.len()];
        let mut topo_vect = vec![DISCONNECTED; objects.len()];
        for (pos, obj) in objects.iter().enumerate() {
            match *obj {
                GridObject::Load(j) => {
                    load_pos[j] = pos;
                    topo_vect[pos] = file.loads[j].bus;
                }
                GridObject::Generator(k) => {
                    gen_pos[k] = pos;
                    topo_vect[pos] = file.generators[k].bus;
                }
                GridObject::LineOrigin(l) => {
                    line_or_pos[l] = pos;
                    topo_vect[pos] = file.lines[l].from_bus;
                }
                GridObject::LineExtremity(l) => {
                    line_ex_pos[l] = pos;
                    topo_vect[pos] = file.lines[l].to_bus;
                }
            }
        }

        let lines = file
            .lines
            .iter()
            .map(|l| Powerline {
                from_substation: l.from,
                to_substation: l.to,
                susceptance: l.susceptance,
                thermal_limit: l.thermal_limit,
                status: l.from_bus != DISCONNECTED,
                timestep_overflow: 0,
                cooldown_remaining: 0,
                bus_disconnected: false,
            })
            .collect();
        let generators = file
            .generators
            .iter()
            .map(|g| Generator {
                substation: g.substation,
                p_scheduled: 0.0,
                p_actual: 0.0,
                p_max: g.p_max,
                q_scheduled: g.q_scheduled,
            })
            .collect();
        let loads = file
            .loads
            .iter()
            .map(|d| Load {
                substation: d.substation,
                p_nominal: d.p_nominal,
                d_scheduled: d.p_nominal,
                d_actual: 0.0,
                q_scheduled: d.q_scheduled,
            })
            .collect();

        Ok(Grid {
            name: file.name,
            base_mva: file.base_mva,
            substations: file.substations,
            lines,
            generators,
            loads,
            initial_topo: topo_vect.clone(),
            topo_vect,
            objects,
            line_or_pos,
            line_ex_pos,
            gen_pos,
            load_pos,
        })
    }

    pub fn n_substations(&self) -> usize {
        self.substations.len()
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    pub fn n_loads(&self) -> usize {
        self.loads.len()
    }

    /// Number of entries in `topo_vect`.
    pub fn dim_topo(&self) -> usize {
        self.objects.len()
    }

    pub fn objects(&self) -> &[GridObject] {
        &self.objects
    }

    pub fn object(&self, pos: usize) -> GridObject {
        self.objects[pos]
    }

    pub fn line_or_pos(&self, line: usize) -> usize {
        self.line_or_pos[line]
    }

    pub fn line_ex_pos(&self, line: usize) -> usize {
        self.line_ex_pos[line]
    }

    pub fn gen_pos(&self, gen: usize) -> usize {
        self.gen_pos[gen]
    }

    pub fn load_pos(&self, load: usize) -> usize {
        self.load_pos[load]
    }

    /// Substation hosting the object at a topology position.
    pub fn object_substation(&self, pos: usize) -> usize {
        match self.objects[pos] {
            GridObject::Load(j) => self.loads[j].substation,
            GridObject::Generator(k) => self.generators[k].substation,
            GridObject::LineOrigin(l) => self.lines[l].from_substation,
            GridObject::LineExtremity(l) => self.lines[l].to_substation,
        }
    }

    pub fn is_load_connected(&self, load: usize) -> bool {
        self.topo_vect[self.load_pos[load]] != DISCONNECTED
    }

    pub fn is_gen_connected(&self, gen: usize) -> bool {
        self.topo_vect[self.gen_pos[gen]] != DISCONNECTED
    }

    /// Opens a line: status false, both ends set to -1. Counters reset.
    pub fn disconnect_line(&mut self, line: usize) {
        let (or, ex) = (self.line_or_pos[line], self.line_ex_pos[line]);
        self.topo_vect[or] = DISCONNECTED;
        self.topo_vect[ex] = DISCONNECTED;
        let l = &mut self.lines[line];
        l.status = false;
        l.timestep_overflow = 0;
    }

    /// Closes a line with its ends on the given busbars.
    pub fn connect_line(&mut self, line: usize, or_bus: i8, ex_bus: i8) {
        debug_assert!(or_bus == BUS_1 || or_bus == BUS_2);
        debug_assert!(ex_bus == BUS_1 || ex_bus == BUS_2);
        let (or, ex) = (self.line_or_pos[line], self.line_ex_pos[line]);
        self.topo_vect[or] = or_bus;
        self.topo_vect[ex] = ex_bus;
        let l = &mut self.lines[line];
        l.status = true;
        l.bus_disconnected = false;
    }

    /// Restores the topology and counters loaded from the grid description.
    pub fn reset_topology(&mut self) {
        self.topo_vect.clone_from(&self.initial_topo);
        for (l, line) in self.lines.iter_mut().enumerate() {
            line.status = self.initial_topo[self.line_or_pos[l]] != DISCONNECTED;
            line.timestep_overflow = 0;
            line.cooldown_remaining = 0;
            line.bus_disconnected = false;
        }
        for g in &mut self.generators {
            g.p_actual = 0.0;
        }
        for d in &mut self.loads {
            d.d_actual = 0.0;
        }
    }

    /// Sets the scheduled injections for one time step. Slices must match the
    /// load and generator counts.
    pub fn set_schedule(&mut self, loads: &[f64], gens: &[f64]) {
        assert_eq!(loads.len(), self.loads.len(), "load schedule width");
        assert_eq!(gens.len(), self.generators.len(), "generator schedule width");
        for (d, &v) in self.loads.iter_mut().zip(loads) {
            d.d_scheduled = v;
        }
        for (g, &v) in self.generators.iter_mut().zip(gens) {
            g.p_scheduled = v;
        }
    }

    /// Builds nodes and islands, solves the DC flow and stores the served
    /// demand and dispatched generation back into the grid.
    pub fn solve(&mut self) -> Result<PowerFlowResult, GridError> {
        let nodes = build_electrical_nodes(self);
        let islands = find_islands(&nodes, self);
        let result = solve_dc_power_flow(self, &nodes, &islands)?;
        for (d, &v) in self.loads.iter_mut().zip(&result.served) {
            d.d_actual = v;
        }
        for (g, &v) in self.generators.iter_mut().zip(&result.dispatched) {
            g.p_actual = v;
        }
        Ok(result)
    }

    /// Checks the structural topology invariants.
    pub fn check_invariants(&self) -> Result<(), GridError> {
        for (pos, &b) in self.topo_vect.iter().enumerate() {
            if b != DISCONNECTED && b != BUS_1 && b != BUS_2 {
                return Err(GridError::Invalid(format!("topo_vect[{pos}] = {b}")));
            }
        }
        for (l, line) in self.lines.iter().enumerate() {
            let or = self.topo_vect[self.line_or_pos[l]];
            let ex = self.topo_vect[self.line_ex_pos[l]];
            let ok = if line.status {
                or != DISCONNECTED && ex != DISCONNECTED
            } else {
                or == DISCONNECTED && ex == DISCONNECTED
            };
            if !ok {
                return Err(GridError::Invalid(format!(
                    "line {l} status {} disagrees with ends ({or}, {ex})",
                    line.status
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_documented_sizes() {
        let g = Grid::case5();
        assert_eq!(
            (g.n_substations(), g.n_lines(), g.n_generators(), g.n_loads()),
            (5, 8, 2, 3)
        );
        assert_eq!(g.dim_topo(), 2 * 8 + 2 + 3);
        let g = Grid::case14();
        assert_eq!(
            (g.n_substations(), g.n_lines(), g.n_generators(), g.n_loads()),
            (14, 20, 5, 11)
        );
        assert_eq!(g.dim_topo(), 2 * 20 + 5 + 11);
    }

    #[test]
    fn every_object_appears_once() {
        for g in [Grid::case5(), Grid::case14()] {
            let mut seen = std::collections::HashSet::new();
            for obj in g.objects() {
                assert!(seen.insert(*obj));
            }
            for l in 0..g.n_lines() {
                assert_eq!(g.object(g.line_or_pos(l)), GridObject::LineOrigin(l));
                assert_eq!(g.object(g.line_ex_pos(l)), GridObject::LineExtremity(l));
            }
            g.check_invariants().unwrap();
        }
    }

    #[test]
    fn rejects_bad_descriptions() {
        let bad = r#"{"substations":[{"name":"a"},{"name":"b"}],
            "lines":[{"from":0,"to":1,"susceptance":0.0,"thermal_limit":10}],
            "generators":[],"loads":[]}"#;
        assert!(matches!(Grid::from_json_str(bad), Err(GridError::Invalid(_))));
        let bad = r#"{"substations":[{"name":"a"}],
            "lines":[],"generators":[{"substation":3,"p_max":1}],"loads":[]}"#;
        assert!(matches!(Grid::from_json_str(bad), Err(GridError::Invalid(_))));
    }

    #[test]
    fn disconnect_and_reconnect_keep_invariants() {
        let mut g = Grid::case5();
        g.disconnect_line(3);
        g.check_invariants().unwrap();
        assert_eq!(g.topo_vect[g.line_or_pos(3)], DISCONNECTED);
        g.connect_line(3, BUS_2, BUS_1);
        g.check_invariants().unwrap();
        assert_eq!(g.topo_vect[g.line_or_pos(3)], BUS_2);
        g.reset_topology();
        assert!(g.lines.iter().all(|l| l.status));
    }
}
