use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::grid::Grid;

/// Per-step scheduled demand (MW per load) and generation (MW per generator).
#[derive(Debug, Clone, PartialEq)]
pub struct Chronics {
    pub loads: Vec<Vec<f64>>,
    pub gens: Vec<Vec<f64>>,
}

/// Shape of the synthetic daily profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChronicsParams {
    /// Steps in one daily cycle.
    pub period: usize,
    /// Relative swing of the daily sinusoid.
    pub amplitude: f64,
    /// Relative standard deviation of the per-step, per-load noise.
    pub noise: f64,
    /// Multiplier applied to every nominal load.
    pub level: f64,
    /// Draw the phase of the daily cycle from the seed instead of starting
    /// at the trough.
    pub random_phase: bool,
}

impl Default for ChronicsParams {
    fn default() -> Self {
        ChronicsParams {
            period: 96,
            amplitude: 0.2,
            noise: 0.02,
            level: 1.0,
            random_phase: true,
        }
    }
}

impl Chronics {
    pub fn horizon(&self) -> usize {
        self.loads.len()
    }

    pub fn check(&self, grid: &Grid) -> Result<(), EnvError> {
        if self.loads.len() != self.gens.len() {
            return Err(EnvError::Chronics("load and generator rows differ".into()));
        }
        for (t, (l, g)) in self.loads.iter().zip(&self.gens).enumerate() {
            if l.len() != grid.n_loads() || g.len() != grid.n_generators() {
                return Err(EnvError::Chronics(format!(
                    "row {t} has {} loads and {} generators, grid has {} and {}",
                    l.len(),
                    g.len(),
                    grid.n_loads(),
                    grid.n_generators()
                )));
            }
            if l.iter().chain(g).any(|&v| !(v >= 0.0)) {
                return Err(EnvError::Chronics(format!("row {t} has a negative or NaN value")));
            }
        }
        Ok(())
    }

    /// Sinusoidal daily profile with seeded multiplicative noise. Generator
    /// schedules split the total demand in proportion to `p_max`.
    pub fn synthetic(grid: &Grid, horizon: usize, seed: u64, params: &ChronicsParams) -> Chronics {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phase = if params.random_phase {
            rng.random::<f64>() * std::f64::consts::TAU
        } else {
            0.0
        };
        let noise = Normal::new(0.0, params.noise.max(0.0)).expect("finite noise level");
        let capacity: f64 = grid.generators.iter().map(|g| g.p_max).sum();
        let period = params.period.max(1) as f64;
        let mut loads = Vec::with_capacity(horizon);
        let mut gens = Vec::with_capacity(horizon);
        for t in 0..horizon {
            // Trough at t = 0 when the phase is zero.
            let angle = std::f64::consts::TAU * t as f64 / period + phase;
            let profile = params.level * (1.0 - params.amplitude * angle.cos());
            let row: Vec<f64> = grid
                .loads
                .iter()
                .map(|d| (d.p_nominal * profile * (1.0 + noise.sample(&mut rng))).max(0.0))
                .collect();
            let total: f64 = row.iter().sum();
            let gen_row = grid
                .generators
                .iter()
                .map(|g| {
                    if capacity > 0.0 {
                        (total * g.p_max / capacity).min(g.p_max)
                    } else {
                        0.0
                    }
                })
                .collect();
            loads.push(row);
            gens.push(gen_row);
        }
        Chronics { loads, gens }
    }

    /// Reads a CSV with columns `load_0..load_{n-1}, gen_0..gen_{m-1}`.
    pub fn from_csv(path: impl AsRef<Path>, grid: &Grid) -> Result<Chronics, EnvError> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path).map_err(|e| EnvError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let headers = reader
            .headers()
            .map_err(|e| EnvError::Chronics(e.to_string()))?
            .clone();
        let mut load_col = vec![None; grid.n_loads()];
        let mut gen_col = vec![None; grid.n_generators()];
        for (c, h) in headers.iter().enumerate() {
            let h = h.trim();
            if let Some(i) = h.strip_prefix("load_").and_then(|s| s.parse::<usize>().ok()) {
                if i < load_col.len() {
                    load_col[i] = Some(c);
                }
            } else if let Some(i) = h.strip_prefix("gen_").and_then(|s| s.parse::<usize>().ok()) {
                if i < gen_col.len() {
                    gen_col[i] = Some(c);
                }
            }
        }
        let missing = load_col
            .iter()
            .enumerate()
            .find(|(_, c)| c.is_none())
            .map(|(i, _)| format!("load_{i}"))
            .or_else(|| {
                gen_col
                    .iter()
                    .enumerate()
                    .find(|(_, c)| c.is_none())
                    .map(|(i, _)| format!("gen_{i}"))
            });
        if let Some(name) = missing {
            return Err(EnvError::Chronics(format!(
                "{}: missing column {name}",
                path.display()
            )));
        }
        let mut loads = Vec::new();
        let mut gens = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| EnvError::Chronics(e.to_string()))?;
            let parse = |c: usize| -> Result<f64, EnvError> {
                record
                    .get(c)
                    .unwrap_or("")
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| EnvError::Chronics(format!("row {row}, column {c}: {e}")))
            };
            loads.push(load_col.iter().map(|c| parse(c.unwrap())).collect::<Result<_, _>>()?);
            gens.push(gen_col.iter().map(|c| parse(c.unwrap())).collect::<Result<_, _>>()?);
        }
        let chronics = Chronics { loads, gens };
        chronics.check(grid)?;
        Ok(chronics)
    }

    pub fn to_csv(&self, path: impl AsRef<Path>) -> Result<(), EnvError> {
        let path = path.as_ref();
        let io = |e: csv::Error| EnvError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        let n_load = self.loads.first().map_or(0, Vec::len);
        let n_gen = self.gens.first().map_or(0, Vec::len);
        let header: Vec<String> = (0..n_load)
            .map(|i| format!("load_{i}"))
            .chain((0..n_gen).map(|i| format!("gen_{i}")))
            .collect();
        w.write_record(&header).map_err(io)?;
        for (l, g) in self.loads.iter().zip(&self.gens) {
            w.write_record(l.iter().chain(g).map(|v| v.to_string())).map_err(io)?;
        }
        w.flush().map_err(|e| EnvError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_seeded_and_well_formed() {
        let g = Grid::case14();
        let p = ChronicsParams::default();
        let a = Chronics::synthetic(&g, 50, 7, &p);
        let b = Chronics::synthetic(&g, 50, 7, &p);
        let c = Chronics::synthetic(&g, 50, 8, &p);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.horizon(), 50);
        a.check(&g).unwrap();
        for (l, gen) in a.loads.iter().zip(&a.gens) {
            let d: f64 = l.iter().sum();
            let s: f64 = gen.iter().sum();
            assert!((d - s).abs() < 1e-9 * (1.0 + d));
        }
    }

    #[test]
    fn csv_round_trip() {
        let g = Grid::case5();
        let a = Chronics::synthetic(&g, 12, 1, &ChronicsParams::default());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chronics.csv");
        a.to_csv(&path).unwrap();
        let b = Chronics::from_csv(&path, &g).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_missing_column_is_reported() {
        let g = Grid::case5();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "load_0,load_1,gen_0,gen_1\n1,2,3,4\n").unwrap();
        let err = Chronics::from_csv(&path, &g).unwrap_err().to_string();
        assert!(err.contains("load_2"), "{err}");
    }
}
