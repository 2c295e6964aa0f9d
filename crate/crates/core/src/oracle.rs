//! Ground-truth machinery independent of the bound implementations: a
//! discretized-LP solver for univariate moment problems, a coordinate-ascent
//! search for worst-case product distributions (a lower-bound generator),
//! and deterministic seeded Monte Carlo estimation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::moments::{
    BoundResult, Diagnostics, DiscreteDistribution, Method, MomentSpec, ProductDistribution,
    SolveStatus,
};
use crate::sdp::{solve_lp, ConeStructure, ConicProgram, Tolerances};
use crate::variational::AffineWitness;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("moment vector infeasible on the grid: {0}")]
    InfeasibleMoments(String),
    #[error("unsupported request: {0}")]
    Unsupported(String),
    #[error("lp solver stopped at {0}")]
    Solver(SolveStatus),
}

/// Upper bound on the tail probability of ONE variable by a discretized
/// moment problem: maximize the tail mass over grid weights matching the
/// spec's raw moments. The discretization error is `O(1/grid_points)`.
pub fn lp_tail_oracle(
    spec: &MomentSpec,
    t: f64,
    grid_points: usize,
) -> Result<BoundResult, OracleError> {
    if spec.n != 1 {
        return Err(OracleError::Unsupported("lp oracle is univariate".into()));
    }
    if !spec.support.is_bounded() {
        return Err(OracleError::Unsupported("lp oracle needs a bounded support".into()));
    }
    if grid_points < 101 {
        return Err(OracleError::Unsupported("need at least 101 grid points".into()));
    }
    let (lo, hi) = (spec.support.lower, spec.support.upper);
    let g = grid_points;
    let spacing = (hi - lo) / (g - 1) as f64;
    let threshold = spec.mean(0) + t;
    let order = spec.order();

    let mut objective = vec![0.0; g];
    let mut rows = vec![vec![0.0; g]; order + 1];
    for j in 0..g {
        let x = lo + spacing * j as f64;
        if x >= threshold - 1e-12 {
            objective[j] = -1.0; // maximize tail mass
        }
        rows[0][j] = 1.0;
        let mut p = 1.0;
        for row in rows.iter_mut().skip(1) {
            p *= x;
            row[j] = p;
        }
    }
    let mut rhs = vec![1.0];
    rhs.extend_from_slice(&spec.moments[0]);

    let program = ConicProgram {
        objective,
        rows,
        rhs,
        cones: ConeStructure { psd_blocks: vec![], nonneg: g },
    };
    let sol = solve_lp(&program, &Tolerances::default())
        .map_err(|e| OracleError::Unsupported(e.to_string()))?;
    match sol.status {
        SolveStatus::Optimal => {
            let mut extra = BTreeMap::new();
            extra.insert("grid_spacing".into(), spacing);
            extra.insert("grid_points".into(), g as f64);
            Ok(BoundResult {
                value: -sol.primal_objective,
                method: Method::LpOracle,
                status: SolveStatus::Optimal,
                diagnostics: Diagnostics {
                    iterations: sol.iterations,
                    residual: sol.residuals.primal.max(sol.residuals.dual),
                    wall_seconds: 0.0,
                    extra,
                },
                certificate_id: None,
            })
        }
        SolveStatus::Infeasible => Err(OracleError::InfeasibleMoments(format!(
            "no distribution on a {g}-point grid matches moments {:?}",
            spec.moments[0]
        ))),
        other => Err(OracleError::Solver(other)),
    }
}

/// Whether the moment vector admits any distribution on the grid.
pub fn lp_moment_feasible(spec: &MomentSpec, grid_points: usize) -> Result<bool, OracleError> {
    match lp_tail_oracle(spec, 0.0, grid_points) {
        Ok(_) => Ok(true),
        Err(OracleError::InfeasibleMoments(_)) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Best-found worst-case product distribution: seeded multi-restart
/// coordinate ascent over per-variable atom locations with weights pinned
/// by the moment constraints. Returns a certified LOWER bound on the tail
/// supremum together with its witness.
pub fn product_search_oracle(
    spec: &MomentSpec,
    t: f64,
    atoms_per_var: usize,
    restarts: usize,
    seed: u64,
) -> Result<(BoundResult, ProductDistribution), OracleError> {
    if spec.n > 4 {
        return Err(OracleError::Unsupported("search oracle supports n <= 4".into()));
    }
    if !(1..=3).contains(&atoms_per_var) {
        return Err(OracleError::Unsupported("atoms_per_var must be 1..=3".into()));
    }
    let order = spec.order();
    if order > 2 {
        return Err(OracleError::Unsupported("search oracle handles orders 1 and 2".into()));
    }
    if !spec.support.is_bounded() {
        return Err(OracleError::Unsupported("search oracle needs a bounded support".into()));
    }
    let n = spec.n;
    let threshold = spec.n as f64 * t + spec.moments.iter().map(|m| m[0]).sum::<f64>();
    let (lo, hi) = (spec.support.lower, spec.support.upper);

    let initial = |rng: &mut ChaCha12Rng| -> Vec<DiscreteDistribution> {
        (0..n)
            .map(|i| {
                let m = &spec.moments[i];
                for _ in 0..64 {
                    if let Some(d) = random_factor(rng, m, lo, hi, order) {
                        return d;
                    }
                }
                fallback_factor(m, order)
            })
            .collect()
    };

    // Deterministic warm starts capturing the structures worst cases take:
    // Bernoulli-style endpoints and threshold-anchored two-point factors.
    let mut warm_starts: Vec<Vec<DiscreteDistribution>> = Vec::new();
    if order == 1 {
        let anchored = |anchor: f64| -> Option<Vec<DiscreteDistribution>> {
            (0..n)
                .map(|i| {
                    let mu = spec.moments[i][0];
                    two_atom_order1(lo, anchor.clamp(mu, hi), mu)
                })
                .collect()
        };
        for start in [
            anchored(hi),
            anchored(threshold / n as f64),
            anchored(threshold - (n - 1) as f64 * hi),
        ]
        .into_iter()
        .flatten()
        {
            warm_starts.push(start);
        }
    } else {
        warm_starts.push((0..n).map(|i| fallback_factor(&spec.moments[i], order)).collect());
    }

    let mut best_value = f64::NEG_INFINITY;
    let mut best_factors: Option<Vec<DiscreteDistribution>> = None;
    let mut total_sweeps = 0usize;

    for restart in 0..restarts.max(1) + warm_starts.len() {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64 + 1);
        let mut factors = match warm_starts.get(restart) {
            Some(start) => start.clone(),
            None => initial(&mut rng),
        };
        let mut value = tail_of(&factors, threshold);
        for _sweep in 0..24 {
            total_sweeps += 1;
            let mut improved = false;
            for i in 0..n {
                let cands = candidate_locations(&factors, i, threshold, lo, hi, spec);
                if let Some((v, d)) =
                    best_factor_choice(&factors, i, &cands, &spec.moments[i], order, threshold)
                {
                    if v > value + 1e-14 {
                        value = v;
                        factors[i] = d;
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        if value > best_value {
            best_value = value;
            best_factors = Some(factors);
        }
    }

    let factors = best_factors.expect("at least one restart");
    let dist = ProductDistribution::new(factors)
        .map_err(|e| OracleError::Unsupported(e.to_string()))?;
    let mut extra = BTreeMap::new();
    extra.insert("restarts".into(), restarts.max(1) as f64);
    extra.insert("sweeps".into(), total_sweeps as f64);
    Ok((
        BoundResult {
            value: best_value.max(0.0),
            method: Method::ProductOracle,
            status: SolveStatus::Optimal,
            diagnostics: Diagnostics {
                iterations: total_sweeps,
                residual: 0.0,
                wall_seconds: 0.0,
                extra,
            },
            certificate_id: None,
        },
        dist,
    ))
}

fn tail_of(factors: &[DiscreteDistribution], threshold: f64) -> f64 {
    fn rec(factors: &[DiscreteDistribution], sum: f64, weight: f64, threshold: f64) -> f64 {
        match factors.split_first() {
            None => {
                if sum >= threshold - 1e-12 {
                    weight
                } else {
                    0.0
                }
            }
            Some((f, rest)) => f
                .atoms
                .iter()
                .filter(|&&(_, w)| w > 0.0)
                .map(|&(x, w)| rec(rest, sum + x, weight * w, threshold))
                .sum(),
        }
    }
    rec(factors, 0.0, 1.0, threshold)
}

/// Two atoms around the mean for order 1, a feasible Vandermonde triple
/// for order 2.
fn random_factor(
    rng: &mut ChaCha12Rng,
    m: &[f64],
    lo: f64,
    hi: f64,
    order: usize,
) -> Option<DiscreteDistribution> {
    let mu = m[0];
    if order == 1 {
        let l0 = lo + rng.gen::<f64>() * (mu - lo);
        let l1 = mu + rng.gen::<f64>() * (hi - mu);
        two_atom_order1(l0, l1, mu)
    } else {
        let mut ls = [0.0; 3];
        for l in &mut ls {
            *l = lo + rng.gen::<f64>() * (hi - lo);
        }
        ls.sort_by(|a, b| a.partial_cmp(b).unwrap());
        three_atom_order2(ls[0], ls[1], ls[2], m[0], m[1])
    }
}

fn fallback_factor(m: &[f64], order: usize) -> DiscreteDistribution {
    if order == 1 {
        DiscreteDistribution::new(vec![(m[0], 1.0)]).expect("dirac")
    } else {
        let sd = (m[1] - m[0] * m[0]).max(0.0).sqrt();
        DiscreteDistribution::new(vec![(m[0] - sd, 0.5), (m[0] + sd, 0.5)]).expect("two point")
    }
}

fn two_atom_order1(l0: f64, l1: f64, mu: f64) -> Option<DiscreteDistribution> {
    if !(l0 <= mu && mu <= l1) {
        return None;
    }
    if l1 - l0 <= 1e-14 {
        return DiscreteDistribution::new(vec![(mu, 1.0)]).ok();
    }
    let w1 = (mu - l0) / (l1 - l0);
    DiscreteDistribution::new(vec![(l0, 1.0 - w1), (l1, w1)]).ok()
}

fn three_atom_order2(l0: f64, l1: f64, l2: f64, mu1: f64, mu2: f64) -> Option<DiscreteDistribution> {
    // Solve the 3x3 Vandermonde system for weights matching (1, mu1, mu2).
    let d01 = l0 - l1;
    let d02 = l0 - l2;
    let d12 = l1 - l2;
    if d01.abs() < 1e-12 || d02.abs() < 1e-12 || d12.abs() < 1e-12 {
        return None;
    }
    let w0 = (mu2 - (l1 + l2) * mu1 + l1 * l2) / (d01 * d02);
    let w1 = (mu2 - (l0 + l2) * mu1 + l0 * l2) / (-d01 * d12);
    let w2 = (mu2 - (l0 + l1) * mu1 + l0 * l1) / (d02 * d12);
    let eps = -1e-12;
    if w0 < eps || w1 < eps || w2 < eps {
        return None;
    }
    DiscreteDistribution::new(vec![
        (l0, w0.max(0.0)),
        (l1, w1.max(0.0)),
        (l2, w2.max(0.0)),
    ])
    .ok()
}

/// Candidate atom locations for variable `i`: support endpoints, the mean,
/// a coarse uniform grid, and every threshold remainder induced by the
/// other variables' current atoms (the points where the tail indicator
/// switches).
fn candidate_locations(
    factors: &[DiscreteDistribution],
    i: usize,
    threshold: f64,
    lo: f64,
    hi: f64,
    spec: &MomentSpec,
) -> Vec<f64> {
    let mut cands = vec![lo, hi, spec.mean(i)];
    for k in 0..=8 {
        cands.push(lo + (hi - lo) * k as f64 / 8.0);
    }
    // Sums over the other factors' atom combinations.
    let mut sums = vec![0.0];
    for (j, f) in factors.iter().enumerate() {
        if j == i {
            continue;
        }
        let mut next = Vec::with_capacity(sums.len() * f.atoms.len());
        for s in &sums {
            for &(x, w) in &f.atoms {
                if w > 0.0 {
                    next.push(s + x);
                }
            }
        }
        sums = next;
    }
    for s in sums {
        let c = threshold - s;
        if c >= lo - 1e-12 && c <= hi + 1e-12 {
            cands.push(c.clamp(lo, hi));
        }
    }
    cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cands.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    cands
}

/// Exhaustive scan over candidate atom placements for one variable.
fn best_factor_choice(
    factors: &[DiscreteDistribution],
    i: usize,
    cands: &[f64],
    m: &[f64],
    order: usize,
    threshold: f64,
) -> Option<(f64, DiscreteDistribution)> {
    let mut best: Option<(f64, DiscreteDistribution)> = None;
    let mut trial = factors.to_vec();
    let mut consider = |d: DiscreteDistribution, trial: &mut Vec<DiscreteDistribution>| {
        trial[i] = d.clone();
        let v = tail_of(trial, threshold);
        if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
            best = Some((v, d));
        }
    };
    let mu = m[0];
    if order == 1 {
        for (ai, &l0) in cands.iter().enumerate() {
            if l0 > mu {
                break;
            }
            for &l1 in &cands[ai..] {
                if l1 < mu {
                    continue;
                }
                if let Some(d) = two_atom_order1(l0, l1, mu) {
                    consider(d, &mut trial);
                }
            }
        }
    } else {
        for ai in 0..cands.len() {
            for bi in (ai + 1)..cands.len() {
                for ci in (bi + 1)..cands.len() {
                    if let Some(d) = three_atom_order2(cands[ai], cands[bi], cands[ci], mu, m[1]) {
                        consider(d, &mut trial);
                    }
                }
            }
        }
    }
    best
}

/// Functionals the Monte Carlo estimator understands.
#[derive(Debug, Clone)]
pub enum McFunctional<'a> {
    /// `1{ sum x_i >= sum means + n t }`.
    IndicatorTail { t: f64 },
    /// `prod_i (alpha_i + beta_i x_i)`.
    ProductAffine { witness: &'a AffineWitness },
    /// `prod_i exp(lambda (x_i - mean_i - t))`.
    Mgf { lambda: f64, t: f64 },
}

/// Unbiased seeded estimate of `E[f]` under a product distribution with
/// its standard error.
///
/// The sample stream is split into fixed-size chunks with per-chunk
/// derived seeds and reduced in chunk order, so the result is independent
/// of thread scheduling.
pub fn monte_carlo_expectation(
    dist: &ProductDistribution,
    functional: &McFunctional,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64), OracleError> {
    if samples < 10_000 {
        return Err(OracleError::Unsupported("need at least 10^4 samples".into()));
    }
    let n = dist.n();
    let means: Vec<f64> = dist.factors.iter().map(DiscreteDistribution::mean).collect();
    let cum: Vec<Vec<(f64, f64)>> = dist
        .factors
        .iter()
        .map(|f| {
            let mut acc = 0.0;
            f.atoms
                .iter()
                .map(|&(x, w)| {
                    acc += w;
                    (acc, x)
                })
                .collect()
        })
        .collect();
    let sample_point = |rng: &mut ChaCha12Rng, point: &mut [f64]| {
        for (i, c) in cum.iter().enumerate() {
            let u: f64 = rng.gen();
            let mut x = c.last().expect("atoms nonempty").1;
            for &(acc, loc) in c {
                if u < acc {
                    x = loc;
                    break;
                }
            }
            point[i] = x;
        }
    };
    let eval = |point: &[f64]| -> f64 {
        match functional {
            McFunctional::IndicatorTail { t } => {
                let threshold = means.iter().sum::<f64>() + n as f64 * t;
                if point.iter().sum::<f64>() >= threshold - 1e-12 {
                    1.0
                } else {
                    0.0
                }
            }
            McFunctional::ProductAffine { witness } => point
                .iter()
                .enumerate()
                .map(|(i, &x)| witness.alpha[i] + witness.beta[i] * x)
                .product(),
            McFunctional::Mgf { lambda, t } => point
                .iter()
                .enumerate()
                .map(|(i, &x)| (lambda * (x - means[i] - t)).exp())
                .product(),
        }
    };

    const CHUNK: usize = 8192;
    let chunks = samples.div_ceil(CHUNK);
    let partials: Vec<(f64, f64, f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64 + 1);
            let count = CHUNK.min(samples - chunk * CHUNK);
            let mut point = vec![0.0; n];
            let (mut s, mut s2) = (0.0, 0.0);
            let (mut mn, mut mx) = (f64::INFINITY, f64::NEG_INFINITY);
            for _ in 0..count {
                sample_point(&mut rng, &mut point);
                let v = eval(&point);
                s += v;
                s2 += v * v;
                mn = mn.min(v);
                mx = mx.max(v);
            }
            (s, s2, mn, mx)
        })
        .collect();

    let mut sum = 0.0;
    let mut sumsq = 0.0;
    let mut mn = f64::INFINITY;
    let mut mx = f64::NEG_INFINITY;
    for (s, s2, a, b) in partials {
        sum += s;
        sumsq += s2;
        mn = mn.min(a);
        mx = mx.max(b);
    }
    let nf = samples as f64;
    let estimate = sum / nf;
    let std_error = if mn == mx {
        0.0
    } else {
        let var = ((sumsq - nf * estimate * estimate) / (nf - 1.0)).max(0.0);
        (var / nf).sqrt()
    };
    Ok((estimate, std_error))
}
