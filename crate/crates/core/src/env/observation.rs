use serde::{Deserialize, Serialize};

use crate::grid::{Grid, PowerFlowResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    Complete,
    Essential,
}

impl ObservationKind {
    pub const ALL: [ObservationKind; 2] = [ObservationKind::Complete, ObservationKind::Essential];

    pub fn name(self) -> &'static str {
        match self {
            ObservationKind::Complete => "complete",
            ObservationKind::Essential => "essential",
        }
    }
}

impl std::str::FromStr for ObservationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ObservationKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown observation space `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationVector {
    pub kind: ObservationKind,
    pub values: Vec<f64>,
}

impl ObservationVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A named block of the flat observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    GenP,
    GenQ,
    LoadP,
    LoadQ,
    POr,
    AOr,
    QOr,
    PEx,
    AEx,
    QEx,
    Rho,
    LineStatus,
    TimestepOverflow,
    TopoVect,
}

impl Field {
    pub fn name(self) -> &'static str {
        match self {
            Field::GenP => "gen_p",
            Field::GenQ => "gen_q",
            Field::LoadP => "load_p",
            Field::LoadQ => "load_q",
            Field::POr => "p_or",
            Field::AOr => "a_or",
            Field::QOr => "q_or",
            Field::PEx => "p_ex",
            Field::AEx => "a_ex",
            Field::QEx => "q_ex",
            Field::Rho => "rho",
            Field::LineStatus => "line_status",
            Field::TimestepOverflow => "timestep_overflow",
            Field::TopoVect => "topo_vect",
        }
    }

    fn width(self, grid: &Grid) -> usize {
        match self {
            Field::GenP | Field::GenQ => grid.n_generators(),
            Field::LoadP | Field::LoadQ => grid.n_loads(),
            Field::TopoVect => grid.dim_topo(),
            _ => grid.n_lines(),
        }
    }
}

const ESSENTIAL: [Field; 10] = [
    Field::GenP,
    Field::LoadP,
    Field::POr,
    Field::AOr,
    Field::PEx,
    Field::AEx,
    Field::Rho,
    Field::LineStatus,
    Field::TimestepOverflow,
    Field::TopoVect,
];

const COMPLETE: [Field; 14] = [
    Field::GenP,
    Field::GenQ,
    Field::LoadP,
    Field::LoadQ,
    Field::POr,
    Field::AOr,
    Field::QOr,
    Field::PEx,
    Field::AEx,
    Field::QEx,
    Field::Rho,
    Field::LineStatus,
    Field::TimestepOverflow,
    Field::TopoVect,
];

fn fields(kind: ObservationKind) -> &'static [Field] {
    match kind {
        ObservationKind::Complete => &COMPLETE,
        ObservationKind::Essential => &ESSENTIAL,
    }
}

/// Field blocks and their widths, in vector order.
pub fn layout(grid: &Grid, kind: ObservationKind) -> Vec<(Field, usize)> {
    fields(kind).iter().map(|&f| (f, f.width(grid))).collect()
}

pub fn observation_size(grid: &Grid, kind: ObservationKind) -> usize {
    fields(kind).iter().map(|f| f.width(grid)).sum()
}

/// Encodes the grid state. Open lines report zero flows; disconnected
/// objects report -1 in the topology block.
pub fn observe(grid: &Grid, result: &PowerFlowResult, kind: ObservationKind) -> ObservationVector {
    let mut values = Vec::with_capacity(observation_size(grid, kind));
    let on = |l: usize| grid.lines[l].status;
    for &field in fields(kind) {
        match field {
            Field::GenP => values.extend(grid.generators.iter().map(|g| g.p_actual)),
            Field::GenQ => values.extend(
                (0..grid.n_generators())
                    .map(|k| if grid.is_gen_connected(k) { grid.generators[k].q_scheduled } else { 0.0 }),
            ),
            Field::LoadP => values.extend(grid.loads.iter().map(|d| d.d_actual)),
            Field::LoadQ => values.extend(
                (0..grid.n_loads())
                    .map(|j| if grid.is_load_connected(j) { grid.loads[j].q_scheduled } else { 0.0 }),
            ),
            Field::POr => values.extend(
                (0..grid.n_lines()).map(|l| if on(l) { result.line_flow_p_or[l] } else { 0.0 }),
            ),
            Field::AOr => values.extend(
                (0..grid.n_lines()).map(|l| if on(l) { result.line_flow_p_or[l].abs() } else { 0.0 }),
            ),
            Field::PEx => values.extend(
                (0..grid.n_lines()).map(|l| if on(l) { result.line_flow_p_ex[l] } else { 0.0 }),
            ),
            Field::AEx => values.extend(
                (0..grid.n_lines()).map(|l| if on(l) { result.line_flow_p_ex[l].abs() } else { 0.0 }),
            ),
            Field::QOr | Field::QEx => values.extend(std::iter::repeat_n(0.0, grid.n_lines())),
            Field::Rho => values.extend(
                (0..grid.n_lines()).map(|l| if on(l) { result.line_loading[l] } else { 0.0 }),
            ),
            Field::LineStatus => {
                values.extend(grid.lines.iter().map(|l| if l.status { 1.0 } else { 0.0 }))
            }
            Field::TimestepOverflow => {
                values.extend(grid.lines.iter().map(|l| l.timestep_overflow as f64))
            }
            Field::TopoVect => values.extend(grid.topo_vect.iter().map(|&b| b as f64)),
        }
    }
    ObservationVector { kind, values }
}

/// Per-entry multipliers bringing an observation to order-one magnitude:
/// power quantities are expressed on the grid's MVA base and overflow
/// counters relative to the trip threshold.
pub fn observation_scale(grid: &Grid, kind: ObservationKind, max_overflow_steps: u32) -> Vec<f64> {
    let mut scale = Vec::with_capacity(observation_size(grid, kind));
    for (field, width) in layout(grid, kind) {
        let s = match field {
            Field::Rho | Field::LineStatus | Field::TopoVect => 1.0,
            Field::TimestepOverflow => 1.0 / max_overflow_steps.max(1) as f64,
            _ => 1.0 / grid.base_mva,
        };
        scale.extend(std::iter::repeat_n(s, width));
    }
    scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn essential_size_on_case5() {
        let g = Grid::case5();
        // 2 gens + 3 loads + 7 line blocks of 8 + 21 topology entries.
        assert_eq!(observation_size(&g, ObservationKind::Essential), 2 + 3 + 7 * 8 + 21);
        assert_eq!(
            observation_size(&g, ObservationKind::Complete),
            2 * 2 + 2 * 3 + 9 * 8 + 21
        );
    }

    #[test]
    fn essential_is_strictly_smaller() {
        for g in [Grid::case5(), Grid::case14()] {
            assert!(
                observation_size(&g, ObservationKind::Essential)
                    < observation_size(&g, ObservationKind::Complete)
            );
        }
    }

    #[test]
    fn open_lines_report_zero() {
        let mut g = Grid::case5();
        g.set_schedule(&[50.0, 50.0, 50.0], &[75.0, 75.0]);
        for l in 0..g.n_lines() {
            g.disconnect_line(l);
        }
        let r = g.solve().unwrap();
        let obs = observe(&g, &r, ObservationKind::Essential);
        let mut offset = 0;
        for (field, width) in layout(&g, ObservationKind::Essential) {
            let block = &obs.values[offset..offset + width];
            match field {
                Field::Rho | Field::LineStatus | Field::POr | Field::AOr => {
                    assert!(block.iter().all(|&v| v == 0.0), "{}", field.name())
                }
                _ => {}
            }
            offset += width;
        }
        assert_eq!(offset, obs.len());
        let again = observe(&g, &r, ObservationKind::Essential);
        assert_eq!(obs, again);
    }
}
