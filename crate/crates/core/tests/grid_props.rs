use gridres::grid::{GeneratorSpec, GridFile, LineSpec, LoadSpec, Substation};
use gridres::Grid;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bus(rng: &mut ChaCha8Rng) -> i8 {
    if rng.random_bool(0.2) {
        2
    } else {
        1
    }
}

/// Random meshed grid on `n` substations with random busbar splits.
fn random_grid(seed: u64, n: usize) -> Grid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lines = Vec::new();
    for s in 1..n {
        lines.push((rng.random_range(0..s), s));
    }
    for _ in 0..rng.random_range(0..n) {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            lines.push((a, b));
        }
    }
    let line_specs: Vec<LineSpec> = lines
        .iter()
        .map(|&(from, to)| LineSpec {
            from,
            to,
            susceptance: 1.0 + (from * 7 + to * 3) as f64 % 9.0,
            thermal_limit: 100.0,
            from_bus: bus(&mut rng),
            to_bus: bus(&mut rng),
        })
        .collect();
    let generators = (0..rng.random_range(1..3))
        .map(|_| GeneratorSpec {
            substation: rng.random_range(0..n),
            p_max: rng.random_range(20.0..200.0),
            bus: bus(&mut rng),
            q_scheduled: 0.0,
        })
        .collect();
    let loads = (0..rng.random_range(1..n + 1))
        .map(|_| LoadSpec {
            substation: rng.random_range(0..n),
            p_nominal: rng.random_range(5.0..80.0),
            bus: bus(&mut rng),
            q_scheduled: 0.0,
        })
        .collect();
    let mut grid = Grid::from_file(GridFile {
        name: "random".into(),
        base_mva: 100.0,
        substations: (0..n).map(|i| Substation { name: format!("s{i}") }).collect(),
        lines: line_specs,
        generators,
        loads,
    })
    .unwrap();
    let demand: Vec<f64> = grid.loads.iter().map(|l| l.p_nominal).collect();
    let gens: Vec<f64> = grid.generators.iter().map(|g| g.p_max * rng.random_range(0.2..0.9)).collect();
    grid.set_schedule(&demand, &gens);
    for l in 0..grid.n_lines() {
        if rng.random_bool(0.15) {
            grid.disconnect_line(l);
        }
    }
    grid
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn flows_satisfy_kirchhoff(seed in any::<u64>(), n in 2usize..10) {
        let mut grid = random_grid(seed, n);
        let r = grid.solve().unwrap();
        let mut net = vec![0.0; r.nodes.len()];
        for l in 0..grid.n_lines() {
            if !grid.lines[l].status {
                prop_assert_eq!(r.line_flow_p_or[l], 0.0);
                prop_assert_eq!(r.line_loading[l], 0.0);
                continue;
            }
            prop_assert_eq!(r.line_flow_p_or[l], -r.line_flow_p_ex[l]);
            let a = r.nodes.node_of(grid.line_or_pos(l)).unwrap();
            let b = r.nodes.node_of(grid.line_ex_pos(l)).unwrap();
            net[a] += r.line_flow_p_or[l];
            net[b] += r.line_flow_p_ex[l];
        }
        let scale = grid.loads.iter().map(|l| l.d_scheduled).sum::<f64>().max(1.0);
        for (v, (&out, &inj)) in net.iter().zip(&r.node_injection).enumerate() {
            prop_assert!((out - inj).abs() <= 1e-9 * scale, "node {v}: {out} vs {inj}");
        }
    }

    #[test]
    fn islands_balance_and_respect_capacity(seed in any::<u64>(), n in 2usize..10) {
        let mut grid = random_grid(seed, n);
        let r = grid.solve().unwrap();
        for (k, g) in grid.generators.iter().enumerate() {
            prop_assert!(r.dispatched[k] >= -1e-12 && r.dispatched[k] <= g.p_max + 1e-9);
        }
        for (j, l) in grid.loads.iter().enumerate() {
            prop_assert!(r.served[j] >= 0.0 && r.served[j] <= l.d_scheduled + 1e-9);
        }
        for (i, members) in r.islands.islands.iter().enumerate() {
            let total: f64 = members.iter().map(|&v| r.node_injection[v]).sum();
            let served: f64 = members.iter().map(|&v| {
                (0..grid.n_loads())
                    .filter(|&j| r.nodes.node_of(grid.load_pos(j)) == Some(v))
                    .map(|j| r.served[j])
                    .sum::<f64>()
            }).sum();
            prop_assert!(total.abs() <= 1e-9 * served.max(1.0), "island {i} imbalance {total}");
            if r.island_blackout[i] {
                prop_assert_eq!(served, 0.0);
            }
        }
    }

    #[test]
    fn every_node_belongs_to_exactly_one_island(seed in any::<u64>(), n in 2usize..10) {
        let mut grid = random_grid(seed, n);
        let r = grid.solve().unwrap();
        let mut seen = vec![0; r.nodes.len()];
        for (i, members) in r.islands.islands.iter().enumerate() {
            prop_assert!(members.windows(2).all(|w| w[0] < w[1]));
            for &v in members {
                seen[v] += 1;
                prop_assert_eq!(r.islands.node_island[v], i);
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }
}
