//! Thin SVD by one-sided Jacobi rotations and spectral regularizers of the
//! Q-value batch matrix, with their gradients.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;

const MAX_SWEEPS: usize = 80;
const ROTATION_TOL: f64 = 1e-15;
/// Spectral gap / magnitude below which a gradient is flagged degenerate.
pub const DEGENERACY_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LowRankError {
    #[error("SVD did not converge within {0} sweeps")]
    ConvergenceFailure(usize),
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("invalid regularizer: {0}")]
    InvalidSpec(String),
    #[error("shape mismatch: matrix is {rows}x{cols}, decomposition is {u_rows}x{v_rows}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        u_rows: usize,
        v_rows: usize,
    },
}

/// `A = U · diag(σ) · Vᵀ` with `k = min(m, n)` columns in `U` and `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

impl SvdResult {
    pub fn rank_k(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        self.compose(&self.sigma)
    }

    /// `U · diag(d) · Vᵀ`.
    pub fn compose(&self, d: &[f64]) -> Matrix {
        let mut us = self.u.clone();
        for r in 0..us.rows {
            us.row_mut(r).iter_mut().zip(d).for_each(|(x, s)| *x *= s);
        }
        let mut out = Matrix::zeros(self.u.rows, self.v.rows);
        crate::linalg::gemm(1.0, &us, false, &self.v, true, 0.0, &mut out);
        out
    }
}

/// Thin SVD with descending singular values. Each column of `U` has its
/// largest-magnitude entry non-negative.
pub fn svd(a: &Matrix) -> Result<SvdResult, LowRankError> {
    if a.data.iter().any(|x| !x.is_finite()) {
        return Err(LowRankError::NonFinite);
    }
    if a.rows < a.cols {
        let t = jacobi_tall(&a.transpose())?;
        let mut out = SvdResult {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        };
        fix_signs(&mut out);
        return Ok(out);
    }
    let mut out = jacobi_tall(a)?;
    fix_signs(&mut out);
    Ok(out)
}

/// One-sided Jacobi on an `m × n` matrix with `m ≥ n`.
fn jacobi_tall(a: &Matrix) -> Result<SvdResult, LowRankError> {
    let (m, n) = (a.rows, a.cols);
    // Column-major working copies make the column rotations contiguous.
    let mut w: Vec<Vec<f64>> = (0..n).map(|c| (0..m).map(|r| a.get(r, c)).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|c| (0..n).map(|r| if r == c { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = column_products(&w[p], &w[q]);
                if alpha == 0.0 || beta == 0.0 || gamma.abs() <= ROTATION_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(LowRankError::ConvergenceFailure(MAX_SWEEPS));
    }

    let norms: Vec<f64> = w.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let sigma_max = norms.iter().copied().fold(0.0, f64::max);
    let tiny = sigma_max * (m.max(n) as f64) * f64::EPSILON;
    let mut u = Matrix::zeros(m, n);
    let mut vm = Matrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (col, &src) in order.iter().enumerate() {
        let s = norms[src];
        if s > tiny && s > 0.0 {
            for r in 0..m {
                u.set(r, col, w[src][r] / s);
            }
        } else {
            missing.push(col);
        }
        sigma.push(s);
        for r in 0..n {
            vm.set(r, col, v[src][r]);
        }
    }
    complete_basis(&mut u, &missing);
    Ok(SvdResult { u, sigma, v: vm })
}

fn column_products(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let mut alpha = 0.0;
    let mut beta = 0.0;
    let mut gamma = 0.0;
    for (x, y) in a.iter().zip(b) {
        alpha += x * x;
        beta += y * y;
        gamma += x * y;
    }
    (alpha, beta, gamma)
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    for (x, y) in left[p].iter_mut().zip(right[0].iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Fills the listed columns of `u` with unit vectors orthogonal to every
/// other column, by Gram-Schmidt against the standard basis.
fn complete_basis(u: &mut Matrix, missing: &[usize]) {
    let m = u.rows;
    let mut filled: Vec<usize> = (0..u.cols).filter(|c| !missing.contains(c)).collect();
    let mut candidate = 0;
    for &col in missing {
        while candidate < m {
            let mut x = vec![0.0; m];
            x[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for &f in &filled {
                    let dot: f64 = (0..m).map(|r| x[r] * u.get(r, f)).sum();
                    x.iter_mut().enumerate().for_each(|(r, xi)| *xi -= dot * u.get(r, f));
                }
            }
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-8 {
                for r in 0..m {
                    u.set(r, col, x[r] / norm);
                }
                filled.push(col);
                break;
            }
        }
    }
}

fn fix_signs(s: &mut SvdResult) {
    for c in 0..s.u.cols {
        let mut best = 0.0f64;
        for r in 0..s.u.rows {
            let x = s.u.get(r, c);
            if x.abs() > best.abs() {
                best = x;
            }
        }
        if best < 0.0 {
            for r in 0..s.u.rows {
                s.u.set(r, c, -s.u.get(r, c));
            }
            for r in 0..s.v.rows {
                s.v.set(r, c, -s.v.get(r, c));
            }
        }
    }
}

/// Singular-value penalty `R(Q_B)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegularizerSpec {
    /// `Σ σ_i`
    Nuclear,
    /// `Σ log(σ_i + 1)`
    LogNuclear,
    /// `Σ (σ_i + γ σ_i²)`
    ElasticNet { gamma: f64 },
    /// `Σ σ_i^p`
    SchattenP { p: f64 },
    /// `Σ_{i>r} σ_i`
    TruncatedNuclear { r: usize },
    /// `Σ_{i>r} σ_i`
    PartialSumNuclear { r: usize },
    /// `Σ_{i>from_rank} w_i σ_i`
    WeightedNuclear {
        weights: Vec<f64>,
        #[serde(default)]
        from_rank: usize,
    },
}

impl Default for RegularizerSpec {
    fn default() -> Self {
        RegularizerSpec::Nuclear
    }
}

impl RegularizerSpec {
    /// Checks the parameters against a spectrum of length `k`.
    pub fn validate(&self, k: usize) -> Result<(), LowRankError> {
        let bad = |m: String| Err(LowRankError::InvalidSpec(m));
        match self {
            RegularizerSpec::ElasticNet { gamma } if !(gamma.is_finite() && *gamma >= 0.0) => {
                bad(format!("elastic-net gamma must be finite and non-negative, got {gamma}"))
            }
            RegularizerSpec::SchattenP { p } if !(p.is_finite() && *p > 0.0) => {
                bad(format!("Schatten p must be positive, got {p}"))
            }
            RegularizerSpec::TruncatedNuclear { r } | RegularizerSpec::PartialSumNuclear { r } if *r >= k => {
                bad(format!("rank cut r = {r} must be below k = {k}"))
            }
            RegularizerSpec::WeightedNuclear { weights, from_rank } => {
                if weights.len() < k {
                    bad(format!("{} weights for {k} singular values", weights.len()))
                } else if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    bad("weights must be finite and non-negative".into())
                } else if *from_rank >= k {
                    bad(format!("from_rank = {from_rank} must be below k = {k}"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Per-singular-value terms `f(σ_i)` whose sum is the penalty.
    fn terms(&self, sigma: &[f64]) -> Vec<f64> {
        sigma
            .iter()
            .enumerate()
            .map(|(i, &s)| match self {
                RegularizerSpec::Nuclear => s,
                RegularizerSpec::LogNuclear => s.ln_1p(),
                RegularizerSpec::ElasticNet { gamma } => s + gamma * s * s,
                RegularizerSpec::SchattenP { p } => s.powf(*p),
                RegularizerSpec::TruncatedNuclear { r } | RegularizerSpec::PartialSumNuclear { r } => {
                    if i >= *r {
                        s
                    } else {
                        0.0
                    }
                }
                RegularizerSpec::WeightedNuclear { weights, from_rank } => {
                    if i >= *from_rank {
                        weights[i] * s
                    } else {
                        0.0
                    }
                }
            })
            .collect()
    }

    /// Derivatives `f'(σ_i)`. Where the derivative is unbounded (Schatten
    /// p < 1 at σ = 0) the zero subgradient member is used.
    fn derivatives(&self, sigma: &[f64]) -> Vec<f64> {
        sigma
            .iter()
            .enumerate()
            .map(|(i, &s)| match self {
                RegularizerSpec::Nuclear => 1.0,
                RegularizerSpec::LogNuclear => 1.0 / (s + 1.0),
                RegularizerSpec::ElasticNet { gamma } => 1.0 + 2.0 * gamma * s,
                RegularizerSpec::SchattenP { p } => {
                    if s > 0.0 {
                        p * s.powf(p - 1.0)
                    } else if *p == 1.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
                RegularizerSpec::TruncatedNuclear { r } | RegularizerSpec::PartialSumNuclear { r } => {
                    if i >= *r {
                        1.0
                    } else {
                        0.0
                    }
                }
                RegularizerSpec::WeightedNuclear { weights, from_rank } => {
                    if i >= *from_rank {
                        weights[i]
                    } else {
                        0.0
                    }
                }
            })
            .collect()
    }
}

pub fn reg_value(spec: &RegularizerSpec, svd: &SvdResult) -> Result<f64, LowRankError> {
    spec.validate(svd.rank_k())?;
    Ok(spec.terms(&svd.sigma).iter().sum())
}

/// Gradient of `R` with respect to the decomposed matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RegGradient {
    pub gradient: Matrix,
    /// Singular values closer than [`DEGENERACY_TOL`] to each other or to
    /// zero: the gradient is one member of the subdifferential.
    pub degenerate: bool,
}

/// `U · diag(f'(σ)) · Vᵀ`.
pub fn reg_grad(spec: &RegularizerSpec, matrix: &Matrix, svd: &SvdResult) -> Result<RegGradient, LowRankError> {
    if (svd.u.rows, svd.v.rows) != (matrix.rows, matrix.cols) {
        return Err(LowRankError::ShapeMismatch {
            rows: matrix.rows,
            cols: matrix.cols,
            u_rows: svd.u.rows,
            v_rows: svd.v.rows,
        });
    }
    spec.validate(svd.rank_k())?;
    let g = spec.derivatives(&svd.sigma);
    Ok(RegGradient {
        gradient: svd.compose(&g),
        degenerate: is_degenerate(&svd.sigma),
    })
}

pub fn is_degenerate(sigma: &[f64]) -> bool {
    let min_sigma = sigma.iter().copied().fold(f64::INFINITY, f64::min);
    let min_gap = sigma
        .windows(2)
        .map(|w| (w[0] - w[1]).abs())
        .fold(f64::INFINITY, f64::min);
    min_sigma < DEGENERACY_TOL || min_gap < DEGENERACY_TOL
}

/// Nuclear norm `Σ σ_i` of a matrix.
pub fn nuclear_norm(a: &Matrix) -> Result<f64, LowRankError> {
    Ok(svd(a)?.sigma.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Matrix {
        Matrix::from_vec(m, n, (0..m * n).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    fn orthonormality_error(q: &Matrix) -> f64 {
        let g = q.transpose().matmul(q);
        let mut worst: f64 = 0.0;
        for i in 0..g.rows {
            for j in 0..g.cols {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g.get(i, j) - target).abs());
            }
        }
        worst
    }

    fn check_svd(a: &Matrix) {
        let s = svd(a).unwrap();
        let k = a.rows.min(a.cols);
        assert_eq!(s.sigma.len(), k);
        assert_eq!((s.u.rows, s.u.cols, s.v.rows, s.v.cols), (a.rows, k, a.cols, k));
        assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
        assert!(s.sigma.iter().all(|&x| x >= 0.0));
        assert!(orthonormality_error(&s.u) <= 1e-10);
        assert!(orthonormality_error(&s.v) <= 1e-10);
        let mut diff = s.reconstruct();
        diff.data.iter_mut().zip(&a.data).for_each(|(x, y)| *x -= y);
        assert!(diff.frobenius_norm() <= 1e-6 * a.frobenius_norm().max(1e-300));
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let s = svd(&Matrix::identity(2)).unwrap();
        assert_eq!(s.sigma, vec![1.0, 1.0]);
    }

    #[test]
    fn rank_one_fixture() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        let s = svd(&a).unwrap();
        assert!((s.sigma[0] - 5.0).abs() < 1e-10);
        assert!(s.sigma[1].abs() < 1e-10);
        check_svd(&a);
        assert!((reg_value(&RegularizerSpec::Nuclear, &s).unwrap() - 5.0).abs() < 1e-10);
    }

    #[test]
    fn random_shapes_decompose() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for (m, n) in [(64, 16), (32, 17), (16, 64), (5, 5), (1, 7), (7, 1)] {
            check_svd(&random(&mut rng, m, n));
        }
        check_svd(&Matrix::zeros(4, 3));
    }

    #[test]
    fn sign_convention_is_applied() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = svd(&random(&mut rng, 10, 4)).unwrap();
        for c in 0..s.u.cols {
            let col: Vec<f64> = (0..s.u.rows).map(|r| s.u.get(r, c)).collect();
            let big = col.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            assert!(big >= 0.0);
        }
    }

    #[test]
    fn closed_form_values() {
        let diag = |s: &[f64]| SvdResult {
            u: Matrix::identity(s.len()),
            sigma: s.to_vec(),
            v: Matrix::identity(s.len()),
        };
        let v = reg_value(&RegularizerSpec::LogNuclear, &diag(&[1.0, 1.0])).unwrap();
        assert!((v - 2.0 * 2f64.ln()).abs() < 1e-15);
        let v = reg_value(&RegularizerSpec::TruncatedNuclear { r: 1 }, &diag(&[3.0, 2.0, 1.0])).unwrap();
        assert_eq!(v, 3.0);
        let v = reg_value(&RegularizerSpec::PartialSumNuclear { r: 1 }, &diag(&[3.0, 2.0, 1.0])).unwrap();
        assert_eq!(v, 3.0);
        let v = reg_value(&RegularizerSpec::ElasticNet { gamma: 0.5 }, &diag(&[2.0, 1.0])).unwrap();
        assert_eq!(v, 2.0 + 2.0 + 1.0 + 0.5);
        let v = reg_value(&RegularizerSpec::SchattenP { p: 2.0 }, &diag(&[3.0, 4.0])).unwrap();
        assert_eq!(v, 25.0);
        let w = RegularizerSpec::WeightedNuclear {
            weights: vec![0.5, 2.0, 1.0],
            from_rank: 0,
        };
        assert_eq!(reg_value(&w, &diag(&[3.0, 2.0, 1.0])).unwrap(), 1.5 + 4.0 + 1.0);
        let w = RegularizerSpec::WeightedNuclear {
            weights: vec![0.5, 2.0, 1.0],
            from_rank: 1,
        };
        assert_eq!(reg_value(&w, &diag(&[3.0, 2.0, 1.0])).unwrap(), 5.0);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let s = svd(&Matrix::identity(3)).unwrap();
        for spec in [
            RegularizerSpec::SchattenP { p: 0.0 },
            RegularizerSpec::TruncatedNuclear { r: 3 },
            RegularizerSpec::ElasticNet { gamma: -1.0 },
            RegularizerSpec::WeightedNuclear {
                weights: vec![1.0, 1.0],
                from_rank: 0,
            },
            RegularizerSpec::WeightedNuclear {
                weights: vec![1.0, -1.0, 1.0],
                from_rank: 0,
            },
        ] {
            assert!(matches!(reg_value(&spec, &s), Err(LowRankError::InvalidSpec(_))), "{spec:?}");
        }
    }

    #[test]
    fn nuclear_gradient_of_positive_diagonal_is_identity() {
        let a = Matrix::from_rows(&[vec![3.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let s = svd(&a).unwrap();
        let g = reg_grad(&RegularizerSpec::Nuclear, &a, &s).unwrap();
        for (x, y) in g.gradient.data.iter().zip(&Matrix::identity(3).data) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!(!g.degenerate);
        let mut scaled = a.clone();
        scaled.scale(7.0);
        let g2 = reg_grad(&RegularizerSpec::Nuclear, &scaled, &svd(&scaled).unwrap()).unwrap();
        for (x, y) in g.gradient.data.iter().zip(&g2.gradient.data) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn degeneracy_is_flagged() {
        let s = svd(&Matrix::identity(3)).unwrap();
        let g = reg_grad(&RegularizerSpec::Nuclear, &Matrix::identity(3), &s).unwrap();
        assert!(g.degenerate);
        assert!(reg_grad(&RegularizerSpec::Nuclear, &Matrix::zeros(2, 3), &s).is_err());
    }

    #[test]
    fn spec_serde_names() {
        let s: RegularizerSpec = serde_json::from_str(r#"{"kind":"schatten_p","p":0.5}"#).unwrap();
        assert_eq!(s, RegularizerSpec::SchattenP { p: 0.5 });
        let s: RegularizerSpec = serde_json::from_str(r#"{"kind":"nuclear"}"#).unwrap();
        assert_eq!(s, RegularizerSpec::Nuclear);
        let s: RegularizerSpec = serde_json::from_str(r#"{"kind":"weighted_nuclear","weights":[1,2]}"#).unwrap();
        assert_eq!(
            s,
            RegularizerSpec::WeightedNuclear {
                weights: vec![1.0, 2.0],
                from_rank: 0
            }
        );
    }
}
