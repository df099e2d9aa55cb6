use super::{Grid, GridError, IslandPartition, NodeMap};

/// Outcome of one DC power-flow solve.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowResult {
    pub nodes: NodeMap,
    pub islands: IslandPartition,
    /// Voltage angle of each electrical node in radians; the slack of each
    /// island sits at 0.
    pub node_angles: Vec<f64>,
    /// Net injection of each node in MW (dispatched minus served).
    pub node_injection: Vec<f64>,
    pub line_flow_p_or: Vec<f64>,
    pub line_flow_p_ex: Vec<f64>,
    /// |flow| / thermal limit, 0 for open lines.
    pub line_loading: Vec<f64>,
    /// Served demand per load (MW).
    pub served: Vec<f64>,
    /// Actual output per generator (MW).
    pub dispatched: Vec<f64>,
    /// Slack node of each island, `None` for islands without generation.
    pub island_slack: Vec<Option<usize>>,
    /// Islands without any generation capacity.
    pub island_blackout: Vec<bool>,
}

impl PowerFlowResult {
    pub fn n_islands(&self) -> usize {
        self.islands.len()
    }

    /// True when no load receives any power.
    pub fn is_total_blackout(&self) -> bool {
        self.served.iter().all(|&d| d == 0.0)
    }
}

/// Solves the DC power flow island by island.
///
/// Each island balances its own generation against its own demand: demand
/// beyond the island's capacity is shed proportionally, and generators move
/// away from their schedule in proportion to their headroom (when short) or
/// their output (when long). Islands without capacity are blacked out.
pub fn solve_dc_power_flow(
    grid: &Grid,
    nodes: &NodeMap,
    islands: &IslandPartition,
) -> Result<PowerFlowResult, GridError> {
    let n_nodes = nodes.len();
    let n_isl = islands.len();
    let gen_node: Vec<Option<usize>> = (0..grid.n_generators())
        .map(|k| nodes.node_of(grid.gen_pos(k)))
        .collect();
    let load_node: Vec<Option<usize>> = (0..grid.n_loads())
        .map(|j| nodes.node_of(grid.load_pos(j)))
        .collect();

    let mut served = vec![0.0; grid.n_loads()];
    let mut dispatched = vec![0.0; grid.n_generators()];
    let mut island_slack = vec![None; n_isl];
    let mut island_blackout = vec![false; n_isl];

    let mut island_gens: Vec<Vec<usize>> = vec![Vec::new(); n_isl];
    let mut island_loads: Vec<Vec<usize>> = vec![Vec::new(); n_isl];
    for (k, n) in gen_node.iter().enumerate() {
        if let Some(n) = *n {
            island_gens[islands.node_island[n]].push(k);
        }
    }
    for (j, n) in load_node.iter().enumerate() {
        if let Some(n) = *n {
            island_loads[islands.node_island[n]].push(j);
        }
    }

    for i in 0..n_isl {
        let gens = &island_gens[i];
        let loads = &island_loads[i];
        let capacity: f64 = gens.iter().map(|&k| grid.generators[k].p_max).sum();
        if capacity <= 0.0 {
            island_blackout[i] = true;
            continue;
        }

        // Slack: node with the largest total p_max, lowest index on ties.
        let mut node_cap: Vec<(usize, f64)> = Vec::new();
        for &k in gens {
            let n = gen_node[k].unwrap();
            match node_cap.iter_mut().find(|(m, _)| *m == n) {
                Some((_, c)) => *c += grid.generators[k].p_max,
                None => node_cap.push((n, grid.generators[k].p_max)),
            }
        }
        let mut slack = node_cap[0];
        for &(n, c) in &node_cap[1..] {
            if c > slack.1 || (c == slack.1 && n < slack.0) {
                slack = (n, c);
            }
        }
        island_slack[i] = Some(slack.0);

        let demand: f64 = loads.iter().map(|&j| grid.loads[j].d_scheduled.max(0.0)).sum();
        let ratio = if demand > capacity { capacity / demand } else { 1.0 };
        for &j in loads {
            served[j] = grid.loads[j].d_scheduled.max(0.0) * ratio;
        }
        let target: f64 = loads.iter().map(|&j| served[j]).sum();

        let start: Vec<f64> = gens
            .iter()
            .map(|&k| grid.generators[k].p_scheduled.clamp(0.0, grid.generators[k].p_max))
            .collect();
        let scheduled: f64 = start.iter().sum();
        let delta = target - scheduled;
        if delta > 0.0 {
            let headroom: f64 = gens
                .iter()
                .zip(&start)
                .map(|(&k, &p)| grid.generators[k].p_max - p)
                .sum();
            for (&k, &p) in gens.iter().zip(&start) {
                let h = grid.generators[k].p_max - p;
                dispatched[k] = (p + delta * h / headroom).min(grid.generators[k].p_max);
            }
        } else if delta < 0.0 {
            let scale = target / scheduled;
            for (&k, &p) in gens.iter().zip(&start) {
                dispatched[k] = p * scale;
            }
        } else {
            for (&k, &p) in gens.iter().zip(&start) {
                dispatched[k] = p;
            }
        }
    }

    let mut node_injection = vec![0.0; n_nodes];
    for (k, n) in gen_node.iter().enumerate() {
        if let Some(n) = *n {
            node_injection[n] += dispatched[k];
        }
    }
    for (j, n) in load_node.iter().enumerate() {
        if let Some(n) = *n {
            node_injection[n] -= served[j];
        }
    }

    // Connected lines as (from node, to node, susceptance).
    let edges: Vec<Option<(usize, usize, f64)>> = (0..grid.n_lines())
        .map(|l| {
            if !grid.lines[l].status {
                return None;
            }
            let a = nodes.node_of(grid.line_or_pos(l))?;
            let b = nodes.node_of(grid.line_ex_pos(l))?;
            Some((a, b, grid.lines[l].susceptance))
        })
        .collect();

    let mut node_angles = vec![0.0; n_nodes];
    // Position of each node inside its island's reduced system.
    let mut local = vec![usize::MAX; n_nodes];
    for (i, members) in islands.islands.iter().enumerate() {
        if members.len() < 2 {
            continue;
        }
        let slack = island_slack[i].unwrap_or(members[0]);
        let mut m = 0;
        for &v in members {
            if v != slack {
                local[v] = m;
                m += 1;
            }
        }
        let mut lap = vec![0.0; m * m];
        for &(a, b, s) in edges.iter().flatten() {
            if islands.node_island[a] != i || a == b {
                continue;
            }
            let (la, lb) = (local[a], local[b]);
            if la != usize::MAX {
                lap[la * m + la] += s;
            }
            if lb != usize::MAX {
                lap[lb * m + lb] += s;
            }
            if la != usize::MAX && lb != usize::MAX {
                lap[la * m + lb] -= s;
                lap[lb * m + la] -= s;
            }
        }
        let mut rhs = vec![0.0; m];
        for &v in members {
            if v != slack {
                rhs[local[v]] = node_injection[v] / grid.base_mva;
            }
        }
        if !solve_spd(&mut lap, m, &mut rhs) {
            return Err(GridError::SingularSystem { island: i });
        }
        for &v in members {
            if v != slack {
                node_angles[v] = rhs[local[v]];
            }
        }
    }

    let mut line_flow_p_or = vec![0.0; grid.n_lines()];
    let mut line_flow_p_ex = vec![0.0; grid.n_lines()];
    let mut line_loading = vec![0.0; grid.n_lines()];
    for (l, e) in edges.iter().enumerate() {
        if let Some((a, b, s)) = *e {
            let p = grid.base_mva * s * (node_angles[a] - node_angles[b]);
            line_flow_p_or[l] = p;
            line_flow_p_ex[l] = -p;
            line_loading[l] = p.abs() / grid.lines[l].thermal_limit;
        }
    }

    Ok(PowerFlowResult {
        nodes: nodes.clone(),
        islands: islands.clone(),
        node_angles,
        node_injection,
        line_flow_p_or,
        line_flow_p_ex,
        line_loading,
        served,
        dispatched,
        island_slack,
        island_blackout,
    })
}

/// In-place Cholesky solve of a dense symmetric positive definite system
/// `a·x = b` (row-major `n×n`). On success `b` holds `x`. Returns false when
/// a pivot is not safely positive.
pub fn solve_spd(a: &mut [f64], n: usize, b: &mut [f64]) -> bool {
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
    let tiny = scale * 1e-13;
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > tiny) {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    // L y = b
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    // Lᵀ x = y
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    true
}
