//! Self-contained dense conic solver for the small semidefinite and linear
//! programs produced by the certificate assembly and the discretized
//! moment-problem oracle.
//!
//! Standard form:
//!
//! ```text
//! minimize    c . x
//! subject to  A x = b,   x in PSD(s_1) x ... x PSD(s_k) x R+^p
//! ```
//!
//! solved by primal-dual path following with Nesterov-Todd scaling on the
//! homogeneous self-dual embedding, which certifies infeasibility as well
//! as optimality. Symmetric matrix segments are packed in scaled svec form
//! (off-diagonals times sqrt(2)), so inner products coincide with trace
//! inner products.

mod solver;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::moments::SolveStatus;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("program dimensions inconsistent: {0}")]
    BadProgram(String),
    #[error("linear solve requires an orthant-only cone")]
    NotLinear,
}

/// Cone layout of the variable vector: PSD blocks first, then a
/// nonnegative-orthant segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeStructure {
    pub psd_blocks: Vec<usize>,
    pub nonneg: usize,
}

impl ConeStructure {
    pub fn var_len(&self) -> usize {
        self.psd_blocks.iter().map(|&s| s * (s + 1) / 2).sum::<usize>() + self.nonneg
    }

    /// Total barrier degree (sum of block sides plus orthant size).
    pub fn degree(&self) -> usize {
        self.psd_blocks.iter().sum::<usize>() + self.nonneg
    }
}

/// Dense equality-constrained conic program.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub cones: ConeStructure,
}

impl ConicProgram {
    pub fn validate(&self) -> Result<(), SdpError> {
        let n = self.cones.var_len();
        if self.objective.len() != n {
            return Err(SdpError::BadProgram(format!(
                "objective length {} vs cone length {n}",
                self.objective.len()
            )));
        }
        if self.rows.len() != self.rhs.len() {
            return Err(SdpError::BadProgram("row/rhs count mismatch".into()));
        }
        if self.rows.iter().any(|r| r.len() != n) {
            return Err(SdpError::BadProgram("row width mismatch".into()));
        }
        Ok(())
    }

    /// Sparse-triplet JSON dump for external cross-checking.
    pub fn to_json(&self) -> serde_json::Value {
        let triplets: Vec<(usize, usize, f64)> = self
            .rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(move |(j, v)| (i, j, *v))
            })
            .collect();
        serde_json::json!({
            "objective": self.objective,
            "rows": triplets,
            "rhs": self.rhs,
            "cones": { "psd_blocks": self.cones.psd_blocks, "nonneg": self.cones.nonneg },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub feasibility: f64,
    pub gap: f64,
    pub max_iterations: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { feasibility: 1e-8, gap: 1e-8, max_iterations: 300 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

/// Solver output: primal/dual points, certified residuals and status.
#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub residuals: Residuals,
    /// Rows dropped by presolve as linearly dependent (original indices).
    pub removed_rows: Vec<usize>,
}

/// Solve a conic program; deterministic for identical inputs.
pub fn solve(program: &ConicProgram, tol: &Tolerances) -> Result<ConicSolution, SdpError> {
    program.validate()?;
    Ok(solver::solve_hsde(program, tol))
}

/// Orthant-only specialization used by the discretized moment oracle.
pub fn solve_lp(program: &ConicProgram, tol: &Tolerances) -> Result<ConicSolution, SdpError> {
    if !program.cones.psd_blocks.is_empty() {
        return Err(SdpError::NotLinear);
    }
    solve(program, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// min x11 subject to X = [[x, 1], [1, x]] >= 0  ->  x* = 1.
    #[test]
    fn psd_boundary_2x2() {
        // Variables: svec(X) = (x11, sqrt2*x12, x22).
        let s2 = std::f64::consts::SQRT_2;
        let program = ConicProgram {
            objective: vec![0.5, 0.0, 0.5],
            rows: vec![vec![0.0, s2, 0.0], vec![1.0, 0.0, -1.0]],
            rhs: vec![2.0, 0.0], // x12 = 1 (svec entry sqrt2*x12 = sqrt2 * 1 ... row uses sqrt2 factor)
            cones: ConeStructure { psd_blocks: vec![2], nonneg: 0 },
        };
        let sol = solve(&program, &Tolerances::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(sol.primal_objective, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-5);
    }

    /// 3-variable LP with a known vertex optimum, cross-checked by
    /// enumerating all basic feasible points.
    #[test]
    fn lp_matches_vertex_enumeration() {
        // min -x1 - 2x2 - x3 s.t. x1 + x2 + x3 = 1, x2 + 2x3 = 0.8, x >= 0
        let program = ConicProgram {
            objective: vec![-1.0, -2.0, -1.0],
            rows: vec![vec![1.0, 1.0, 1.0], vec![0.0, 1.0, 2.0]],
            rhs: vec![1.0, 0.8],
            cones: ConeStructure { psd_blocks: vec![], nonneg: 3 },
        };
        let sol = solve_lp(&program, &Tolerances::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);

        // Brute-force: all pairs of basic variables.
        let mut best = f64::INFINITY;
        let a: [[f64; 3]; 2] = [[1.0, 1.0, 1.0], [0.0, 1.0, 2.0]];
        let b: [f64; 2] = [1.0, 0.8];
        let c: [f64; 3] = [-1.0, -2.0, -1.0];
        for i in 0..3 {
            for j in (i + 1)..3 {
                let det = a[0][i] * a[1][j] - a[0][j] * a[1][i];
                if det.abs() < 1e-12 {
                    continue;
                }
                let xi = (b[0] * a[1][j] - a[0][j] * b[1]) / det;
                let xj = (a[0][i] * b[1] - b[0] * a[1][i]) / det;
                if xi >= -1e-12 && xj >= -1e-12 {
                    best = best.min(c[i] * xi + c[j] * xj);
                }
            }
        }
        assert_abs_diff_eq!(sol.primal_objective, best, epsilon = 1e-7);
    }

    #[test]
    fn infeasible_lp_detected() {
        // x1 + x2 = -1 with x >= 0 is infeasible.
        let program = ConicProgram {
            objective: vec![1.0, 1.0],
            rows: vec![vec![1.0, 1.0]],
            rhs: vec![-1.0],
            cones: ConeStructure { psd_blocks: vec![], nonneg: 2 },
        };
        let sol = solve_lp(&program, &Tolerances::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_lp_detected() {
        // min -x1 s.t. x1 - x2 = 0, x >= 0: x1 = x2 -> infinity.
        let program = ConicProgram {
            objective: vec![-1.0, 0.0],
            rows: vec![vec![1.0, -1.0]],
            rhs: vec![0.0],
            cones: ConeStructure { psd_blocks: vec![], nonneg: 2 },
        };
        let sol = solve_lp(&program, &Tolerances::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Unbounded);
    }

    #[test]
    fn presolve_drops_dependent_rows() {
        // Second row duplicates the first.
        let program = ConicProgram {
            objective: vec![1.0, 2.0],
            rows: vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![1.0, -1.0]],
            rhs: vec![1.0, 2.0, 0.0],
            cones: ConeStructure { psd_blocks: vec![], nonneg: 2 },
        };
        let sol = solve_lp(&program, &Tolerances::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_eq!(sol.removed_rows, vec![1]);
        assert_abs_diff_eq!(sol.x[0], 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.x[1], 0.5, epsilon = 1e-6);
    }

    #[test]
    fn weak_duality_and_recomputed_residuals() {
        let s2 = std::f64::consts::SQRT_2;
        let program = ConicProgram {
            objective: vec![1.0, 0.0, 1.0, 0.3, 0.1],
            rows: vec![
                vec![0.0, s2, 0.0, 1.0, 0.0],
                vec![1.0, 0.0, -1.0, 0.0, 1.0],
                vec![1.0, 0.0, 1.0, 1.0, 1.0],
            ],
            rhs: vec![1.5, 0.0, 3.0],
            cones: ConeStructure { psd_blocks: vec![2], nonneg: 2 },
        };
        let sol = solve(&program, &Tolerances::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.primal_objective >= sol.dual_objective - 1e-7);

        // Recompute KKT residuals from the returned points.
        let n = program.objective.len();
        let m = program.rhs.len();
        let mut primal = 0.0_f64;
        for i in 0..m {
            let mut ax = 0.0;
            for j in 0..n {
                ax += program.rows[i][j] * sol.x[j];
            }
            primal += (ax - program.rhs[i]).powi(2);
        }
        let mut dual = 0.0_f64;
        for j in 0..n {
            let mut aty = 0.0;
            for i in 0..m {
                aty += program.rows[i][j] * sol.y[i];
            }
            dual += (aty + sol.z[j] - program.objective[j]).powi(2);
        }
        let bnorm = program.rhs.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        let cnorm = program.objective.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        assert_abs_diff_eq!(primal.sqrt() / bnorm, sol.residuals.primal, epsilon = 1e-10);
        assert_abs_diff_eq!(dual.sqrt() / cnorm, sol.residuals.dual, epsilon = 1e-10);
    }

    #[test]
    fn determinism_bitwise() {
        let program = ConicProgram {
            objective: vec![0.5, 0.1, 0.5, 1.0],
            rows: vec![vec![1.0, 0.3, -1.0, 2.0], vec![0.0, 1.0, 1.0, 1.0]],
            rhs: vec![0.4, 1.3],
            cones: ConeStructure { psd_blocks: vec![2], nonneg: 1 },
        };
        let a = solve(&program, &Tolerances::default()).unwrap();
        let b = solve(&program, &Tolerances::default()).unwrap();
        assert_eq!(a.iterations, b.iterations);
        assert!(a.primal_objective == b.primal_objective);
        assert!(a.x == b.x);
    }

    #[test]
    fn json_dump_round_trips_structure() {
        let program = ConicProgram {
            objective: vec![1.0, 0.0],
            rows: vec![vec![1.0, 1.0]],
            rhs: vec![1.0],
            cones: ConeStructure { psd_blocks: vec![], nonneg: 2 },
        };
        let v = program.to_json();
        assert_eq!(v["cones"]["nonneg"], 2);
        assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    }
}
