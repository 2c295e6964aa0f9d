//! Assembly of Putinar-style certificate programs:
//!
//! ```text
//! Q(x) - 1 = s_0(x) + sum_j s_j(x) h_j(x)   on S = {h_j >= 0}
//! Q(x)     = p_0(x) + sum_j p_j(x) w_j(x)   on X = {w_j >= 0}
//! ```
//!
//! with every multiplier a sum of squares, encoded as linear equations over
//! Gram-matrix entries in graded-lex monomial order and shipped to the
//! conic solver.

use nalgebra::DMatrix;
use thiserror::Error;

use super::{monomial_basis, MultiIndex, Polynomial, SemialgebraicSet};

/// Borrowed view of a Gram-form decision: monomial basis and its prices.
type GramView<'a> = (&'a [MultiIndex], &'a [f64]);
use crate::sdp::{ConeStructure, ConicProgram, ConicSolution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PutinarError {
    #[error("hierarchy level {level} too small for degree-{degree} data")]
    DegreeMismatch { level: u32, degree: u32 },
    #[error("sets must share the decision polynomial's variable count")]
    ArityMismatch,
}

/// One SoS multiplier: the constraint polynomial it multiplies and the
/// monomial basis of its Gram matrix.
#[derive(Debug, Clone)]
pub struct MultiplierSpec {
    pub constraint: Polynomial,
    pub basis: Vec<MultiIndex>,
}

impl MultiplierSpec {
    fn gram_side(&self) -> usize {
        self.basis.len()
    }
}

/// What the program optimizes over.
#[derive(Debug, Clone)]
pub enum Decision {
    /// Feasibility check for a fixed polynomial.
    FixedTarget(Polynomial),
    /// Free coefficients over `basis`, priced per monomial.
    Coefficients { basis: Vec<MultiIndex>, prices: Vec<f64> },
    /// Free symmetric matrix `Q` over the monomial vector `basis`, priced
    /// entrywise by `sigma sigma^T` (the published Gram form).
    GramForm { basis: Vec<MultiIndex>, sigma: Vec<f64> },
}

/// Assembled linear-matrix program: PSD Gram blocks for every multiplier
/// plus one coefficient-matching equation per monomial of the span.
#[derive(Debug, Clone)]
pub struct PutinarProgram {
    pub nvars: usize,
    pub level: u32,
    /// All monomials of degree at most `2r`, graded-lex.
    pub span: Vec<MultiIndex>,
    pub s_multipliers: Vec<MultiplierSpec>,
    pub x_multipliers: Vec<MultiplierSpec>,
    pub decision: Decision,
}

/// Feasibility program for a fixed target polynomial.
pub fn assemble_putinar(
    target: &Polynomial,
    lower_bound_on: &SemialgebraicSet,
    nonneg_on: &SemialgebraicSet,
    r: u32,
) -> Result<PutinarProgram, PutinarError> {
    assemble_putinar_with_decision(
        Decision::FixedTarget(target.clone()),
        lower_bound_on,
        nonneg_on,
        r,
    )
}

/// General assembly with a free decision polynomial.
pub fn assemble_putinar_with_decision(
    decision: Decision,
    lower_bound_on: &SemialgebraicSet,
    nonneg_on: &SemialgebraicSet,
    r: u32,
) -> Result<PutinarProgram, PutinarError> {
    let (nvars, degree) = match &decision {
        Decision::FixedTarget(p) => (p.nvars, p.degree()),
        Decision::Coefficients { basis, .. } => (
            basis.first().map_or(0, |m| m.0.len()),
            basis.iter().map(MultiIndex::total_degree).max().unwrap_or(0),
        ),
        Decision::GramForm { basis, .. } => (
            basis.first().map_or(0, |m| m.0.len()),
            2 * basis.iter().map(MultiIndex::total_degree).max().unwrap_or(0),
        ),
    };
    if 2 * r < degree {
        return Err(PutinarError::DegreeMismatch { level: r, degree });
    }
    if lower_bound_on
        .inequalities
        .iter()
        .chain(&nonneg_on.inequalities)
        .any(|h| h.nvars != nvars)
    {
        return Err(PutinarError::ArityMismatch);
    }

    let multipliers = |set: &SemialgebraicSet| -> Vec<MultiplierSpec> {
        let mut out = vec![MultiplierSpec {
            constraint: Polynomial::constant(nvars, 1.0),
            basis: monomial_basis(nvars, r),
        }];
        for h in &set.inequalities {
            let half = h.degree().div_ceil(2);
            if half > r {
                continue; // constraint too high-degree for this level
            }
            out.push(MultiplierSpec {
                constraint: h.clone(),
                basis: monomial_basis(nvars, r - half),
            });
        }
        out
    };

    Ok(PutinarProgram {
        nvars,
        level: r,
        span: monomial_basis(nvars, 2 * r),
        s_multipliers: multipliers(lower_bound_on),
        x_multipliers: multipliers(nonneg_on),
        decision,
    })
}

impl PutinarProgram {
    pub fn gram_block_sides(&self) -> Vec<usize> {
        self.s_multipliers
            .iter()
            .chain(&self.x_multipliers)
            .map(MultiplierSpec::gram_side)
            .collect()
    }

    fn decision_coeff(&self, m: &MultiIndex) -> Option<f64> {
        match &self.decision {
            Decision::FixedTarget(p) => Some(p.coeff(m)),
            _ => None,
        }
    }

    /// Convert to the solver's standard form `min c.x, A x = b, x in K`.
    ///
    /// Gram matrices become PSD blocks; in the free-decision modes the
    /// decision variables are eliminated (coefficients) or split over the
    /// orthant (Gram form). Equation order: one row per span monomial
    /// tying the two certificate sides together, then the rows pinning
    /// off-basis monomials, both graded-lex.
    pub fn to_conic(&self) -> ConicProgram {
        let sides = self.gram_block_sides();
        let psd_len: usize = sides.iter().map(|s| s * (s + 1) / 2).sum();
        let (free_pairs, gram_sigma): (usize, Option<GramView>) =
            match &self.decision {
                Decision::GramForm { basis, sigma } => {
                    let k = basis.len();
                    (k * (k + 1) / 2, Some((basis, sigma)))
                }
                _ => (0, None),
            };
        let nvar = psd_len + 2 * free_pairs;
        let nonneg = 2 * free_pairs;

        // svec offsets per Gram block.
        let mut offsets = Vec::with_capacity(sides.len());
        let mut acc = 0usize;
        for &s in &sides {
            offsets.push(acc);
            acc += s * (s + 1) / 2;
        }

        // Row with the svec coefficients of "coefficient of monomial m in
        // sum_j s_j h_j" for the given multiplier group.
        let fill_side = |row: &mut [f64], m: &MultiIndex, group_start: usize, mults: &[MultiplierSpec]| {
            for (j, mult) in mults.iter().enumerate() {
                let off = offsets[group_start + j];
                let basis = &mult.basis;
                let side = basis.len();
                for a in 0..side {
                    for b in a..side {
                        let pair = basis[a].add(&basis[b]);
                        // need h_tau with tau = m - pair
                        let tau: Option<Vec<u32>> = m
                            .0
                            .iter()
                            .zip(&pair.0)
                            .map(|(&mm, &pp)| mm.checked_sub(pp))
                            .collect();
                        let Some(tau) = tau else { continue };
                        let h = mult.constraint.coeff(&MultiIndex(tau));
                        if h == 0.0 {
                            continue;
                        }
                        let idx = off + svec_index(a, b, side);
                        row[idx] += if a == b { h } else { std::f64::consts::SQRT_2 * h };
                    }
                }
            }
        };

        // q_kappa as a linear form over the split Q entries (Gram mode).
        let fill_gram_decision = |row: &mut [f64], m: &MultiIndex, sign: f64| {
            if let Some((basis, _)) = gram_sigma {
                let k = basis.len();
                for a in 0..k {
                    for b in a..k {
                        if basis[a].add(&basis[b]) != *m {
                            continue;
                        }
                        let mult = if a == b { 1.0 } else { 2.0 };
                        let pair = pair_index(a, b, k);
                        row[psd_len + 2 * pair] += sign * mult;
                        row[psd_len + 2 * pair + 1] -= sign * mult;
                    }
                }
            }
        };

        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut rhs: Vec<f64> = Vec::new();
        let ns = self.s_multipliers.len();

        match &self.decision {
            Decision::FixedTarget(_) => {
                // <S-side>_m = target_m - delta_{m=0}
                for m in &self.span {
                    let mut row = vec![0.0; nvar];
                    fill_side(&mut row, m, 0, &self.s_multipliers);
                    let delta = if m.total_degree() == 0 { 1.0 } else { 0.0 };
                    rows.push(row);
                    rhs.push(self.decision_coeff(m).unwrap() - delta);
                }
                // <X-side>_m = target_m
                for m in &self.span {
                    let mut row = vec![0.0; nvar];
                    fill_side(&mut row, m, ns, &self.x_multipliers);
                    rows.push(row);
                    rhs.push(self.decision_coeff(m).unwrap());
                }
            }
            Decision::Coefficients { basis, .. } => {
                // <X-side>_m - <S-side>_m = delta_{m=0}
                for m in &self.span {
                    let mut row = vec![0.0; nvar];
                    fill_side(&mut row, m, ns, &self.x_multipliers);
                    let mut s_row = vec![0.0; nvar];
                    fill_side(&mut s_row, m, 0, &self.s_multipliers);
                    for (r, s) in row.iter_mut().zip(&s_row) {
                        *r -= s;
                    }
                    rows.push(row);
                    rhs.push(if m.total_degree() == 0 { 1.0 } else { 0.0 });
                }
                // off-basis monomials carry no decision coefficient
                for m in &self.span {
                    if basis.binary_search(m).is_ok() {
                        continue;
                    }
                    let mut row = vec![0.0; nvar];
                    fill_side(&mut row, m, ns, &self.x_multipliers);
                    rows.push(row);
                    rhs.push(0.0);
                }
            }
            Decision::GramForm { .. } => {
                for m in &self.span {
                    let mut row = vec![0.0; nvar];
                    fill_side(&mut row, m, 0, &self.s_multipliers);
                    fill_gram_decision(&mut row, m, -1.0);
                    rows.push(row);
                    rhs.push(if m.total_degree() == 0 { -1.0 } else { 0.0 });
                }
                for m in &self.span {
                    let mut row = vec![0.0; nvar];
                    fill_side(&mut row, m, ns, &self.x_multipliers);
                    fill_gram_decision(&mut row, m, -1.0);
                    rows.push(row);
                    rhs.push(0.0);
                }
            }
        }

        // Objective.
        let mut c = vec![0.0; nvar];
        match &self.decision {
            Decision::FixedTarget(_) => {}
            Decision::Coefficients { basis, prices } => {
                // price the X-side expansion of each basis monomial
                for (m, price) in basis.iter().zip(prices) {
                    if *price == 0.0 {
                        continue;
                    }
                    let mut row = vec![0.0; nvar];
                    fill_side(&mut row, m, ns, &self.x_multipliers);
                    for (ci, ri) in c.iter_mut().zip(&row) {
                        *ci += price * ri;
                    }
                }
            }
            Decision::GramForm { basis, sigma } => {
                let k = basis.len();
                for a in 0..k {
                    for b in a..k {
                        let w = sigma[a] * sigma[b] * if a == b { 1.0 } else { 2.0 };
                        let pair = pair_index(a, b, k);
                        c[psd_len + 2 * pair] += w;
                        c[psd_len + 2 * pair + 1] -= w;
                    }
                }
            }
        }

        ConicProgram {
            objective: c,
            rows,
            rhs,
            cones: ConeStructure { psd_blocks: sides, nonneg },
        }
    }

    /// Decode a solver point back into polynomial data.
    pub fn decode(&self, solution: &ConicSolution) -> PutinarCertificate {
        let sides = self.gram_block_sides();
        let mut grams = Vec::with_capacity(sides.len());
        let mut off = 0usize;
        for (i, &side) in sides.iter().enumerate() {
            let len = side * (side + 1) / 2;
            let mat = smat(&solution.x[off..off + len], side);
            let label = if i < self.s_multipliers.len() {
                format!("s{i}")
            } else {
                format!("p{}", i - self.s_multipliers.len())
            };
            grams.push((label, mat));
            off += len;
        }

        // Multiplier polynomials and both certificate sides.
        let expand = |mults: &[MultiplierSpec], grams: &[(String, DMatrix<f64>)], start: usize| {
            let mut total = Polynomial::zero(self.nvars);
            for (j, mult) in mults.iter().enumerate() {
                let g = &grams[start + j].1;
                let mut sos = Polynomial::zero(self.nvars);
                for a in 0..mult.basis.len() {
                    for b in 0..mult.basis.len() {
                        sos.add_term(&mult.basis[a].add(&mult.basis[b]), g[(a, b)]);
                    }
                }
                total = total.add(&sos.mul(&mult.constraint).unwrap()).unwrap();
            }
            total
        };
        let s_side = expand(&self.s_multipliers, &grams, 0);
        let x_side = expand(&self.x_multipliers, &grams, self.s_multipliers.len());

        let decision = match &self.decision {
            Decision::FixedTarget(p) => p.clone(),
            Decision::Coefficients { basis, .. } => {
                let mut p = Polynomial::zero(self.nvars);
                for m in basis {
                    p.set(m.clone(), x_side.coeff(m));
                }
                p
            }
            Decision::GramForm { basis, .. } => {
                let k = basis.len();
                let psd_len: usize = sides.iter().map(|s| s * (s + 1) / 2).sum();
                let mut p = Polynomial::zero(self.nvars);
                for a in 0..k {
                    for b in a..k {
                        let pair = pair_index(a, b, k);
                        let q = solution.x[psd_len + 2 * pair] - solution.x[psd_len + 2 * pair + 1];
                        let mult = if a == b { 1.0 } else { 2.0 };
                        p.add_term(&basis[a].add(&basis[b]), mult * q);
                    }
                }
                p
            }
        };

        // Residuals of both polynomial identities.
        let mut residual: f64 = 0.0;
        for m in &self.span {
            let delta = if m.total_degree() == 0 { 1.0 } else { 0.0 };
            residual = residual
                .max((decision.coeff(m) - delta - s_side.coeff(m)).abs())
                .max((decision.coeff(m) - x_side.coeff(m)).abs());
        }

        let min_eig = grams
            .iter()
            .map(|(_, g)| {
                g.clone()
                    .symmetric_eigen()
                    .eigenvalues
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min);

        PutinarCertificate {
            decision,
            grams,
            s_side,
            x_side,
            residual,
            min_gram_eigenvalue: min_eig,
        }
    }
}

/// Decoded certificate: the decision polynomial, every multiplier Gram
/// matrix, the expanded combinations `sum s_j h_j` for both sets, and how
/// well the two polynomial identities are reproduced.
#[derive(Debug, Clone)]
pub struct PutinarCertificate {
    pub decision: Polynomial,
    pub grams: Vec<(String, DMatrix<f64>)>,
    /// `sum_j s_j h_j` over the lower-bound set (should equal `Q - 1`).
    pub s_side: Polynomial,
    /// `sum_j p_j w_j` over the nonnegativity set (should equal `Q`).
    pub x_side: Polynomial,
    pub residual: f64,
    pub min_gram_eigenvalue: f64,
}

impl PutinarCertificate {
    /// Certificate data as JSON (coefficients, Gram matrices, residuals).
    pub fn to_json(&self) -> serde_json::Value {
        let grams: Vec<serde_json::Value> = self
            .grams
            .iter()
            .map(|(label, g)| {
                serde_json::json!({
                    "label": label,
                    "side": g.nrows(),
                    "entries": g.as_slice(),
                })
            })
            .collect();
        let coeffs: Vec<serde_json::Value> = self
            .decision
            .terms
            .iter()
            .map(|(m, c)| serde_json::json!({ "exponents": m.0, "coefficient": c }))
            .collect();
        serde_json::json!({
            "decision": coeffs,
            "grams": grams,
            "residual": self.residual,
            "min_gram_eigenvalue": self.min_gram_eigenvalue,
        })
    }
}

/// Index of `(a, b)` with `a <= b` in the packed upper triangle, row-major.
fn pair_index(a: usize, b: usize, k: usize) -> usize {
    a * k - a * (a + 1) / 2 + b
}

/// svec index of entry `(a, b)`, `a <= b`: row-major upper triangle.
fn svec_index(a: usize, b: usize, s: usize) -> usize {
    a * (2 * s - a + 1) / 2 + (b - a)
}

/// Reconstruct a symmetric matrix from its scaled svec.
fn smat(v: &[f64], side: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(side, side);
    let mut idx = 0usize;
    for a in 0..side {
        for b in a..side {
            let val = if a == b { v[idx] } else { v[idx] / std::f64::consts::SQRT_2 };
            m[(a, b)] = val;
            m[(b, a)] = val;
            idx += 1;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::{solve, Tolerances};

    fn unit_box(n: usize) -> SemialgebraicSet {
        SemialgebraicSet::boxed(&vec![(0.0, 1.0); n])
    }

    #[test]
    fn constant_one_is_feasible() {
        let target = Polynomial::constant(1, 1.0);
        let s = unit_box(1);
        let x = unit_box(1);
        let prog = assemble_putinar(&target, &s, &x, 1).unwrap();
        let conic = prog.to_conic();
        let sol = solve(&conic, &Tolerances::default()).unwrap();
        assert_eq!(sol.status, crate::moments::SolveStatus::Optimal);
        let cert = prog.decode(&sol);
        assert!(cert.residual <= 1e-7, "residual {}", cert.residual);
        assert!(cert.min_gram_eigenvalue >= -1e-7);
    }

    #[test]
    fn square_is_sos_on_symmetric_interval() {
        // x^2 >= 0 on [-1, 1] with the box as two inequalities; the target
        // is itself a square so level 1 suffices for the X side; use the
        // S side with tail {x >= -1} i.e. whole interval shifted so that
        // x^2 >= ... we instead check x^2 + 1 >= 1 on the interval.
        let mut target = Polynomial::constant(1, 1.0);
        target.add_term(&MultiIndex(vec![2]), 1.0);
        let set = SemialgebraicSet::boxed(&[(-1.0, 1.0)]);
        let prog = assemble_putinar(&target, &set, &set, 1).unwrap();
        let sol = solve(&prog.to_conic(), &Tolerances::default()).unwrap();
        assert_eq!(sol.status, crate::moments::SolveStatus::Optimal);
        let cert = prog.decode(&sol);
        assert!(cert.residual <= 1e-7, "residual {}", cert.residual);
    }

    #[test]
    fn level_too_small_is_rejected() {
        let target = Polynomial::from_terms(2, [(MultiIndex(vec![2, 2]), 1.0)]);
        let s = unit_box(2);
        let err = assemble_putinar(&target, &s, &s, 1).unwrap_err();
        assert!(matches!(err, PutinarError::DegreeMismatch { .. }));
    }

    #[test]
    fn gram_block_sides_match_monomial_counts() {
        // Bernstein-style instance: n=2, degree-1 constraints, level r.
        for r in 2..=4u32 {
            let bounds = [(-1.0, 1.0), (-1.0, 1.0)];
            let s = SemialgebraicSet::tail_over_box(&bounds, 0.5);
            let x = SemialgebraicSet::boxed(&bounds);
            let basis = monomial_basis(2, 2);
            let prices = vec![0.0; basis.len()];
            let prog = assemble_putinar_with_decision(
                Decision::Coefficients { basis, prices },
                &s,
                &x,
                r,
            )
            .unwrap();
            let sides = prog.gram_block_sides();
            // |J_r| = C(2 + r, 2)
            let jr = ((r + 1) * (r + 2) / 2) as usize;
            let jr1 = (r * (r + 1) / 2) as usize;
            assert_eq!(sides[0], jr);
            assert!(sides[1..prog.s_multipliers.len()].iter().all(|&s| s == jr1));
        }
    }

    #[test]
    fn assembly_is_deterministic() {
        let bounds = [(-1.0, 1.0), (-1.0, 1.0)];
        let s = SemialgebraicSet::tail_over_box(&bounds, 0.3);
        let x = SemialgebraicSet::boxed(&bounds);
        let basis = monomial_basis(2, 2);
        let prices: Vec<f64> = (0..basis.len()).map(|i| i as f64).collect();
        let build = || {
            assemble_putinar_with_decision(
                Decision::Coefficients { basis: basis.clone(), prices: prices.clone() },
                &s,
                &x,
                2,
            )
            .unwrap()
            .to_conic()
        };
        let a = build();
        let b = build();
        assert_eq!(a.objective, b.objective);
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.rhs, b.rhs);
    }
}
