//! Sum-of-squares bounds for second-order moment assumptions: the
//! polynomial-family tail bound and its certificate hierarchy, with the
//! Bernstein, Bennett and second-moment Hoeffding pipelines built on top.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::moments::{
    validate_moments, BoundResult, Diagnostics, Method, MomentSpec, SolveStatus, SupportInterval,
};
use crate::poly::putinar::{
    assemble_putinar_with_decision, Decision, PutinarCertificate, PutinarError,
};
use crate::poly::{independent_expectation, monomial_basis, MultiIndex, SemialgebraicSet};
use crate::sdp::{solve, Tolerances};

/// Certificate of a solved instance: decision polynomial, the Gram matrix
/// of every Putinar multiplier, and reconstruction diagnostics.
pub type SosCertificate = PutinarCertificate;

#[derive(Debug, Error)]
pub enum SosError {
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error("tail set empty: threshold {threshold} exceeds the box maximum {max}")]
    EmptyTail { threshold: f64, max: f64 },
    #[error("hierarchy level {level} infeasible; raising the level may help")]
    InfeasibleHierarchyLevel { level: u32 },
    #[error("objective unbounded below (level {level}): {detail}")]
    Unbounded { level: u32, detail: String },
    #[error("conic solver failure: {0}")]
    SolverFailure(String),
    #[error(transparent)]
    Assembly(#[from] PutinarError),
    #[error("moment pricing failed: {0}")]
    Pricing(String),
}

/// How the decision polynomial's expectation is priced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveMode {
    /// Decision monomials restricted to per-variable degree at most the
    /// fixed moment order and priced by the independence product. Sound.
    Exact,
    /// The published Gram form: free symmetric matrix over the monomial
    /// vector, priced entrywise by `sigma sigma^T`. Entries whose monomial
    /// is not moment-determined get aliased prices; soundness is open.
    Rank1,
}

/// One tail-bound instance for the SoS pipeline.
#[derive(Debug, Clone)]
pub struct SosBoundRequest {
    pub spec: MomentSpec,
    pub t: f64,
    /// Degree cap of the decision polynomial family.
    pub degree: u32,
    /// Hierarchy level: Gram half-degree of the multipliers.
    pub level: u32,
    pub objective_mode: ObjectiveMode,
    /// Lower truncation radius for an unbounded-below support.
    pub truncation: f64,
}

impl SosBoundRequest {
    pub fn new(spec: MomentSpec, t: f64, degree: u32, level: u32) -> Self {
        Self { spec, t, degree, level, objective_mode: ObjectiveMode::Exact, truncation: 10.0 }
    }

    fn validate(&self) -> Result<(), SosError> {
        if self.level < self.degree.div_ceil(2) {
            return Err(SosError::BadRequest(format!(
                "level {} below ceil(degree/2) = {}",
                self.level,
                self.degree.div_ceil(2)
            )));
        }
        if self.t < 0.0 {
            return Err(SosError::BadRequest("t must be nonnegative".into()));
        }
        if self.truncation <= 0.0 {
            return Err(SosError::BadRequest("truncation radius must be positive".into()));
        }
        validate_moments(&self.spec)
            .map(|_| ())
            .map_err(|e| SosError::BadRequest(e.to_string()))
    }

    /// Box actually used: the support, truncated below when unbounded.
    fn bounds(&self) -> Vec<(f64, f64)> {
        let lo = if self.spec.support.is_bounded() {
            self.spec.support.lower
        } else {
            -self.truncation
        };
        vec![(lo, self.spec.support.upper); self.spec.n]
    }
}

/// Solve the polynomial tail-bound instance and return the bound with its
/// certificate.
pub fn sos_bound(req: &SosBoundRequest) -> Result<(BoundResult, SosCertificate), SosError> {
    req.validate()?;
    let bounds = req.bounds();
    let threshold =
        req.spec.n as f64 * req.t + req.spec.moments.iter().map(|m| m[0]).sum::<f64>();
    let max_sum: f64 = bounds.iter().map(|&(_, hi)| hi).sum();
    if threshold > max_sum + 1e-12 {
        return Err(SosError::EmptyTail { threshold, max: max_sum });
    }
    let s_set = SemialgebraicSet::tail_over_box(&bounds, threshold);
    let x_set = SemialgebraicSet::boxed(&bounds);
    sos_bound_over_sets(req, &s_set, &x_set)
}

/// Same as [`sos_bound`] with caller-supplied semialgebraic sets
/// (`Q >= 1` on the first, `Q >= 0` on the second).
pub fn sos_bound_over_sets(
    req: &SosBoundRequest,
    s_set: &SemialgebraicSet,
    x_set: &SemialgebraicSet,
) -> Result<(BoundResult, SosCertificate), SosError> {
    let n = req.spec.n;
    let order = req.spec.order();

    let decision = match req.objective_mode {
        ObjectiveMode::Exact => {
            let basis: Vec<MultiIndex> = monomial_basis(n, req.degree)
                .into_iter()
                .filter(|m| m.0.iter().all(|&e| e as usize <= order))
                .collect();
            let prices = price_basis(&basis, &req.spec)?;
            Decision::Coefficients { basis, prices }
        }
        ObjectiveMode::Rank1 => {
            let basis = monomial_basis(n, req.degree);
            let sigma = price_basis(&basis, &req.spec)?;
            Decision::GramForm { basis, sigma }
        }
    };

    let program = assemble_putinar_with_decision(decision, s_set, x_set, req.level)?;
    let conic = program.to_conic();
    // Boundary moment vectors (near-Dirac prices) floor the attainable
    // primal residual; the pipeline requests 1e-7 rather than the solver
    // defaults.
    let tol = Tolerances { feasibility: 1e-7, gap: 1e-7, ..Tolerances::default() };
    let sol = solve(&conic, &tol).map_err(|e| SosError::SolverFailure(e.to_string()))?;

    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Err(SosError::InfeasibleHierarchyLevel { level: req.level })
        }
        SolveStatus::Unbounded => {
            return Err(SosError::Unbounded {
                level: req.level,
                detail: "a decision direction with negative price leaves every \
                         polynomial constraint unchanged"
                    .into(),
            })
        }
        SolveStatus::NumericalLimit => {
            return Err(SosError::SolverFailure(format!(
                "stopped at the iteration cap with residuals {:?}",
                sol.residuals
            )))
        }
    }

    let certificate = program.decode(&sol);
    let mut extra = BTreeMap::new();
    extra.insert("certificate_residual".into(), certificate.residual);
    extra.insert("min_gram_eigenvalue".into(), certificate.min_gram_eigenvalue);
    extra.insert("sdp_primal_residual".into(), sol.residuals.primal);
    extra.insert("sdp_dual_residual".into(), sol.residuals.dual);
    extra.insert("sdp_gap".into(), sol.residuals.gap);

    // Stability note for truncated supports: a certificate active near the
    // artificial boundary signals truncation sensitivity.
    if !req.spec.support.is_bounded() {
        let active = truncation_activity(&certificate, &req.bounds());
        extra.insert("truncation_active".into(), if active { 1.0 } else { 0.0 });
    }

    let mode_tag = match req.objective_mode {
        ObjectiveMode::Exact => "exact",
        ObjectiveMode::Rank1 => "rank1",
    };
    let certificate_id = format!(
        "sos-n{n}-d{}-r{}-{}-{:016x}",
        req.degree,
        req.level,
        mode_tag,
        req.t.to_bits()
    );
    Ok((
        BoundResult {
            value: sol.primal_objective,
            method: Method::Sos,
            status: SolveStatus::Optimal,
            diagnostics: Diagnostics {
                iterations: sol.iterations,
                residual: certificate.residual,
                wall_seconds: 0.0,
                extra,
            },
            certificate_id: Some(certificate_id),
        },
        certificate,
    ))
}

fn price_basis(basis: &[MultiIndex], spec: &MomentSpec) -> Result<Vec<f64>, SosError> {
    basis
        .iter()
        .map(|m| {
            let mono = crate::poly::Polynomial::from_terms(spec.n, [(m.clone(), 1.0)]);
            independent_expectation(&mono, spec).map_err(|e| SosError::Pricing(e.to_string()))
        })
        .collect()
}

/// Whether the decision polynomial comes close to its nonnegativity bound
/// on a truncation face (sampled).
fn truncation_activity(cert: &SosCertificate, bounds: &[(f64, f64)]) -> bool {
    let n = bounds.len();
    let mut scale: f64 = 1.0;
    let mut min_on_face = f64::INFINITY;
    let samples = 41;
    let mut point = vec![0.0; n];
    for face in 0..n {
        for k in 0..samples {
            for (i, p) in point.iter_mut().enumerate() {
                let (lo, hi) = bounds[i];
                *p = if i == face { lo } else { lo + (hi - lo) * k as f64 / (samples - 1) as f64 };
            }
            let v = cert.decision.eval(&point);
            min_on_face = min_on_face.min(v);
            scale = scale.max(v.abs());
        }
    }
    min_on_face <= 1e-3 * scale
}

/// Bernstein-type instance: two i.i.d. variables on `[-1, 1]` with fixed
/// first and second moments, degree-2 decision family.
pub fn bernstein_sos(
    mu1: f64,
    mu2: f64,
    t: f64,
    level: u32,
    mode: ObjectiveMode,
) -> Result<(BoundResult, SosCertificate), SosError> {
    let spec = MomentSpec::iid(2, SupportInterval::symmetric_unit(), vec![mu1, mu2]);
    let mut req = SosBoundRequest::new(spec, t, 2, level);
    req.objective_mode = mode;
    sos_bound(&req)
}

/// Bennett-type instance: two i.i.d. variables on `(-inf, 1]` truncated to
/// `[-truncation, 1]`.
pub fn bennett_sos(
    mu1: f64,
    mu2: f64,
    t: f64,
    level: u32,
    truncation: f64,
    mode: ObjectiveMode,
) -> Result<(BoundResult, SosCertificate), SosError> {
    let spec = MomentSpec::iid(2, SupportInterval::upper_bounded(1.0), vec![mu1, mu2]);
    let mut req = SosBoundRequest::new(spec, t, 2, level);
    req.objective_mode = mode;
    req.truncation = truncation;
    sos_bound(&req)
}

/// Hoeffding with the second moment treated as unknown: the degree-2 SoS
/// bound at the worst feasible `mu2` on a uniform grid of
/// `[mu1^2, mu1]`, for two i.i.d. variables on `[0, 1]`. Reports the
/// extremal `mu2`.
///
/// Only the worst case over `mu2` upper-bounds the mean-only tail
/// probability: at the variance-zero end the two-moment bound collapses to
/// zero, so a minimum over the grid would not bound anything. The grid
/// maximum is what lines up with the smaller of the linear and
/// product-function bounds (both of which stay feasible at degree two
/// with `mu2`-independent objective values).
pub fn hoeffding_mu2_grid(
    mu1: f64,
    t: f64,
    level: u32,
    grid_size: usize,
) -> Result<BoundResult, SosError> {
    if grid_size < 2 {
        return Err(SosError::BadRequest("grid needs at least two points".into()));
    }
    let lo = mu1 * mu1;
    let hi = mu1;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_mu2 = lo;
    let mut iterations = 0;
    for k in 0..grid_size {
        let mu2 = lo + (hi - lo) * k as f64 / (grid_size - 1) as f64;
        let spec = MomentSpec::iid(2, SupportInterval::unit(), vec![mu1, mu2]);
        let req = SosBoundRequest::new(spec, t, 2, level);
        let (bound, _) = sos_bound(&req)?;
        iterations += bound.diagnostics.iterations;
        if bound.value > worst {
            worst = bound.value;
            worst_mu2 = mu2;
        }
    }
    let mut extra = BTreeMap::new();
    extra.insert("argmax_mu2".into(), worst_mu2);
    extra.insert("grid_size".into(), grid_size as f64);
    Ok(BoundResult {
        value: worst,
        method: Method::SosMu2Grid,
        status: SolveStatus::Optimal,
        diagnostics: Diagnostics { iterations, residual: 0.0, wall_seconds: 0.0, extra },
        certificate_id: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{bernstein, linear_bound};
    use crate::oracle::product_search_oracle;
    use approx::assert_abs_diff_eq;

    #[test]
    fn degree_one_slice_reproduces_linear_bound() {
        for (mu, t) in [(0.3, 0.2), (0.6, 0.1)] {
            let spec = MomentSpec::iid(2, SupportInterval::unit(), vec![mu]);
            let req = SosBoundRequest::new(spec, t, 1, 1);
            let (bound, cert) = sos_bound(&req).unwrap();
            let expected = linear_bound(mu, t).unwrap().value;
            assert_abs_diff_eq!(bound.value, expected, epsilon = 1e-7);
            assert!(cert.residual <= 1e-7);
            assert!(cert.min_gram_eigenvalue >= -1e-9);
        }
    }

    #[test]
    fn whole_box_nonnegativity_gives_at_least_one() {
        // With S the entire box the indicator is one everywhere, so the
        // bound cannot drop below one and Q = 1 is feasible.
        let spec = MomentSpec::iid(2, SupportInterval::unit(), vec![0.3, 0.15]);
        let req = SosBoundRequest::new(spec, 0.0, 2, 2);
        let bounds = req.bounds();
        let box_set = SemialgebraicSet::boxed(&bounds);
        let (bound, _) = sos_bound_over_sets(&req, &box_set, &box_set).unwrap();
        assert!(bound.value >= 1.0 - 1e-7, "value {}", bound.value);
        assert_abs_diff_eq!(bound.clamped(), 1.0, epsilon = 1e-7);
    }

    #[test]
    fn bernstein_instance_beats_closed_form_somewhere() {
        let (mu1, mu2) = (-0.3, 0.1);
        let v = 2.0 * mu2;
        let mut improved = false;
        for &t in &[0.2, 0.4, 0.6] {
            let (bound, cert) = bernstein_sos(mu1, mu2, t, 2, ObjectiveMode::Exact).unwrap();
            let reference = bernstein(2, t, v, 1.0).unwrap().value;
            assert!(cert.residual <= 1e-6, "residual {}", cert.residual);
            // Lower-bound sandwich against the search oracle.
            let spec = MomentSpec::iid(2, SupportInterval::symmetric_unit(), vec![mu1, mu2]);
            let (oracle, _) = product_search_oracle(&spec, t, 3, 4, 17).unwrap();
            assert!(
                bound.value >= oracle.value - 1e-6,
                "sos {} below oracle {} at t={t}",
                bound.value,
                oracle.value
            );
            if bound.value <= reference - 1e-3 {
                improved = true;
            }
        }
        assert!(improved, "no scanned t improved on the closed form");
    }

    #[test]
    fn bennett_truncation_flag_reported() {
        let (bound, _) = bennett_sos(-0.3, 1.0, 0.3, 2, 10.0, ObjectiveMode::Exact).unwrap();
        assert!(bound.diagnostics.extra.contains_key("truncation_active"));
        assert!(bound.value > 0.0);
    }

    #[test]
    fn t_zero_is_close_to_but_below_one() {
        // A fixed second moment strictly above the squared mean forces
        // positive variance, so no feasible distribution concentrates at
        // the mean and the tail probability at t = 0 stays below one. The
        // tight degree-2 bound lands just under it, above the search
        // oracle's lower bound.
        for (bound, moments) in [
            (bernstein_sos(-0.3, 0.1, 0.0, 2, ObjectiveMode::Exact).unwrap().0, vec![-0.3, 0.1]),
            (
                bennett_sos(-0.3, 1.0, 0.0, 2, 10.0, ObjectiveMode::Exact).unwrap().0,
                vec![-0.3, 1.0],
            ),
        ] {
            assert!(bound.value <= 1.0 + 1e-7, "value {}", bound.value);
            assert!(bound.value >= 0.98, "value {} suspiciously small at t = 0", bound.value);
            let support = if moments[1] <= 1.0 {
                SupportInterval::symmetric_unit()
            } else {
                SupportInterval::new(-10.0, 1.0).unwrap()
            };
            let spec = MomentSpec::iid(2, support, moments);
            let (oracle, _) = product_search_oracle(&spec, 0.0, 3, 4, 3).unwrap();
            assert!(bound.value >= oracle.value - 1e-6);
        }
    }

    #[test]
    fn mu2_grid_dominates_grid_members_and_stays_below_linear() {
        let (mu1, t) = (0.3, 0.2);
        let grid = hoeffding_mu2_grid(mu1, t, 2, 9).unwrap();
        // The endpoint mu2 = mu1 is a grid member, so the worst case covers it.
        let spec = MomentSpec::iid(2, SupportInterval::unit(), vec![mu1, mu1]);
        let (endpoint, _) = sos_bound(&SosBoundRequest::new(spec, t, 2, 2)).unwrap();
        assert!(grid.value >= endpoint.value - 1e-9);
        // The degree-1 certificate prices independently of mu2, so the
        // worst case can never exceed the linear bound.
        assert!(grid.value <= linear_bound(mu1, t).unwrap().value + 1e-7);
        assert!(grid.diagnostics.extra.contains_key("argmax_mu2"));
    }

    #[test]
    fn hierarchy_levels_nonincreasing_smoke() {
        let (mu1, mu2, t) = (-0.2, 0.3, 0.25);
        let (r2, _) = bernstein_sos(mu1, mu2, t, 2, ObjectiveMode::Exact).unwrap();
        let (r3, _) = bernstein_sos(mu1, mu2, t, 3, ObjectiveMode::Exact).unwrap();
        assert!(r3.value <= r2.value + 1e-7, "r3 {} vs r2 {}", r3.value, r2.value);
    }

    #[test]
    fn level_below_degree_rejected() {
        let spec = MomentSpec::iid(2, SupportInterval::unit(), vec![0.3, 0.15]);
        let req = SosBoundRequest::new(spec, 0.1, 2, 0);
        assert!(matches!(sos_bound(&req), Err(SosError::BadRequest(_))));
    }

    #[test]
    fn empty_tail_detected() {
        let spec = MomentSpec::iid(2, SupportInterval::unit(), vec![0.8, 0.7]);
        let req = SosBoundRequest::new(spec, 0.5, 2, 2);
        assert!(matches!(sos_bound(&req), Err(SosError::EmptyTail { .. })));
    }

    #[test]
    fn rank1_mode_status_is_reported() {
        // The published Gram-form objective admits price arbitrage between
        // aliased pairings of the same monomial; the solver's verdict is
        // surfaced rather than patched over.
        let result = bernstein_sos(-0.3, 0.1, 0.3, 2, ObjectiveMode::Rank1);
        match result {
            Ok((bound, _)) => {
                // If it solves, it must still sit above the search oracle.
                let spec =
                    MomentSpec::iid(2, SupportInterval::symmetric_unit(), vec![-0.3, 0.1]);
                let (oracle, _) = product_search_oracle(&spec, 0.3, 3, 4, 17).unwrap();
                assert!(bound.value >= oracle.value - 1e-6);
            }
            Err(SosError::Unbounded { .. }) => {}
            Err(other) => panic!("unexpected rank1 outcome: {other}"),
        }
    }
}
