//! Dispatch from CLI flags to the library, plus the CSV/JSON emitters.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde_json::json;

use tailbound::closed_form;
use tailbound::extremal as ext;
use tailbound::moments::{BoundResult, MomentSpec, SupportInterval};
use tailbound::oracle;
use tailbound::sos;
use tailbound::variational;

use crate::{CompareArgs, ProblemArgs, VerifyArgs};

#[derive(Debug)]
pub enum CliError {
    InvalidInput(String),
    Solver(String),
    Io(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::InvalidInput(msg.into())
}

pub fn parse_support(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err("expected `lo,hi`".into());
    }
    let lo = match parts[0].trim() {
        "-inf" => f64::NEG_INFINITY,
        v => v.parse::<f64>().map_err(|e| e.to_string())?,
    };
    let hi = parts[1].trim().parse::<f64>().map_err(|e| e.to_string())?;
    let ordered = matches!(lo.partial_cmp(&hi), Some(std::cmp::Ordering::Less));
    if !ordered || !hi.is_finite() {
        return Err("need lo < hi with finite hi".into());
    }
    Ok((lo, hi))
}

/// Effective problem data after resolving defaults and expanding the mean
/// list to `n` entries.
struct Resolved {
    n: usize,
    means: Vec<f64>,
    mu2: Option<Vec<f64>>,
    t: f64,
    support: SupportInterval,
}

impl Resolved {
    fn from(args: &ProblemArgs, default_support: (f64, f64)) -> Result<Self, CliError> {
        let (lo, hi) = args.support.unwrap_or(default_support);
        let support = SupportInterval::new(lo, hi).map_err(|e| invalid(e.to_string()))?;
        let n = match (args.n, args.mu.len()) {
            (Some(n), 0 | 1) => n,
            (Some(n), k) if k == n => n,
            (Some(n), k) => {
                return Err(invalid(format!("--mu has {k} entries but --n is {n}")))
            }
            (None, 0) => return Err(invalid("need --mu or --n")),
            (None, k) => k,
        };
        if n == 0 {
            return Err(invalid("n must be positive"));
        }
        let means = match args.mu.len() {
            0 => return Err(invalid("need --mu")),
            1 => vec![args.mu[0]; n],
            _ => args.mu.clone(),
        };
        let mu2 = match args.mu2.len() {
            0 => None,
            1 => Some(vec![args.mu2[0]; n]),
            k if k == n => Some(args.mu2.clone()),
            k => return Err(invalid(format!("--mu2 has {k} entries but n is {n}"))),
        };
        if args.t < 0.0 {
            return Err(invalid("--t must be nonnegative"));
        }
        Ok(Self { n, means, mu2, t: args.t, support })
    }

    /// Means and deviation transported onto the unit interval.
    fn unit_means_t(&self) -> Result<(Vec<f64>, f64), CliError> {
        if !self.support.is_bounded() {
            return Err(invalid("this method needs a bounded support"));
        }
        let w = self.support.width();
        let means = self.means.iter().map(|m| (m - self.support.lower) / w).collect();
        Ok((means, self.t / w))
    }

    fn unit_spec(&self) -> Result<MomentSpec, CliError> {
        let (means, _) = self.unit_means_t()?;
        Ok(MomentSpec::from_means(SupportInterval::unit(), &means))
    }

    fn order2_moments(&self) -> Result<Vec<Vec<f64>>, CliError> {
        let mu2 = self.mu2.as_ref().ok_or_else(|| invalid("this method needs --mu2"))?;
        Ok(self
            .means
            .iter()
            .zip(mu2)
            .map(|(&m1, &m2)| vec![m1, m2])
            .collect())
    }
}

fn require_iid(values: &[f64], what: &str) -> Result<f64, CliError> {
    if values.windows(2).any(|w| w[0] != w[1]) {
        return Err(invalid(format!("{what} must be identical for this method")));
    }
    Ok(values[0])
}

fn sos_mode(objective: &str) -> sos::ObjectiveMode {
    if objective == "rank1" {
        sos::ObjectiveMode::Rank1
    } else {
        sos::ObjectiveMode::Exact
    }
}

/// Compute one bound for a named method.
fn compute(method: &str, args: &ProblemArgs) -> Result<BoundResult, CliError> {
    let map_solver = |msg: String| CliError::Solver(msg);
    match method {
        "hoeffding" => {
            // Means do not enter Hoeffding's bound; only n, t and widths.
            let (lo, hi) = args.support.unwrap_or((0.0, 1.0));
            let support =
                SupportInterval::new(lo, hi).map_err(|e| invalid(e.to_string()))?;
            let n = args.n.unwrap_or(args.mu.len().max(1));
            if args.t < 0.0 {
                return Err(invalid("--t must be nonnegative"));
            }
            let widths = vec![support.width(); n];
            closed_form::hoeffding(n, args.t, &widths).map_err(|e| invalid(e.to_string()))
        }
        "exact1" | "linear" => {
            let r = Resolved::from(args, (0.0, 1.0))?;
            let (means, t) = r.unit_means_t()?;
            let mu = require_iid(&means, "--mu")?;
            if method == "exact1" {
                closed_form::exact_univariate(mu, t).map_err(|e| invalid(e.to_string()))
            } else {
                closed_form::linear_bound(mu, t).map_err(|e| invalid(e.to_string()))
            }
        }
        "chernoff" => {
            let r = Resolved::from(args, (0.0, 1.0))?;
            let (means, t) = r.unit_means_t()?;
            if r.n == 1 {
                closed_form::chernoff_univariate(means[0], t)
                    .map(|(b, _)| b)
                    .map_err(|e| invalid(e.to_string()))
            } else {
                let mu = require_iid(&means, "--mu")?;
                closed_form::chernoff_iid(r.n, mu, t).map_err(|e| invalid(e.to_string()))
            }
        }
        "chernoff-general" => {
            let r = Resolved::from(args, (0.0, 1.0))?;
            let (means, t) = r.unit_means_t()?;
            closed_form::chernoff_general(&means, t).map_err(|e| map_solver(e.to_string()))
        }
        "variational" => {
            let r = Resolved::from(args, (0.0, 1.0))?;
            let (_, t) = r.unit_means_t()?;
            let spec = r.unit_spec()?;
            variational::solve_variational(&spec, t)
                .map(|(b, _)| b)
                .map_err(|e| map_solver(e.to_string()))
        }
        "bernstein" => {
            let r = Resolved::from(args, (-1.0, 1.0))?;
            let mu2 = r.mu2.as_ref().ok_or_else(|| invalid("bernstein needs --mu2"))?;
            let v: f64 = mu2.iter().sum();
            let c = r.support.lower.abs().max(r.support.upper.abs());
            closed_form::bernstein(r.n, r.t, v, c).map_err(|e| invalid(e.to_string()))
        }
        "bennett" => {
            let r = Resolved::from(args, (f64::NEG_INFINITY, 1.0))?;
            let mu2 = r.mu2.as_ref().ok_or_else(|| invalid("bennett needs --mu2"))?;
            let sigma2: f64 =
                r.means.iter().zip(mu2).map(|(&m1, &m2)| m2 - m1 * m1).sum();
            closed_form::bennett(r.n, r.t, sigma2, r.support.upper)
                .map_err(|e| invalid(e.to_string()))
        }
        "sos" => {
            let r = Resolved::from(args, (-1.0, 1.0))?;
            let moments = r.order2_moments()?;
            let spec = MomentSpec {
                n: r.n,
                support: r.support,
                moments,
                blocks: None,
            };
            let mut req = sos::SosBoundRequest::new(
                spec,
                r.t,
                args.sos_degree,
                args.level.unwrap_or(2),
            );
            req.objective_mode = sos_mode(&args.objective);
            req.truncation = args.truncation;
            sos::sos_bound(&req).map(|(b, _)| b).map_err(|e| map_solver(e.to_string()))
        }
        "sos-mu2-grid" => {
            let r = Resolved::from(args, (0.0, 1.0))?;
            let (means, t) = r.unit_means_t()?;
            let mu = require_iid(&means, "--mu")?;
            sos::hoeffding_mu2_grid(mu, t, args.level.unwrap_or(3), 41)
                .map_err(|e| map_solver(e.to_string()))
        }
        other => Err(invalid(format!("unknown method `{other}`"))),
    }
}

/// Shortest representation that parses back to the same double.
fn fmt_short(v: f64) -> String {
    format!("{v}")
}

/// 17 significant digits, locale-independent: round-trippable in CSV.
fn fmt_17(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.16e}")
    }
}

pub fn bound(method: &str, args: &ProblemArgs) -> Result<(), CliError> {
    let b = compute(method, args)?;
    println!("{},{},{},{}", method, fmt_short(b.value), fmt_short(b.clamped()), b.status);
    Ok(())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(invalid("--t-grid must be start:stop:step"));
    }
    let start: f64 = parts[0].parse().map_err(|_| invalid("bad grid start"))?;
    let stop: f64 = parts[1].parse().map_err(|_| invalid("bad grid stop"))?;
    let step: f64 = parts[2].parse().map_err(|_| invalid("bad grid step"))?;
    if step <= 0.0 || stop < start {
        return Ok(Vec::new());
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| start + step * k as f64).collect())
}

pub fn compare(args: &CompareArgs) -> Result<(), CliError> {
    if args.methods.is_empty() {
        return Err(invalid("--methods must not be empty"));
    }
    let grid = parse_grid(&args.t_grid)?;
    let mut file = std::fs::File::create(&args.out)?;
    if grid.is_empty() {
        writeln!(file, "t,method,value,status")?;
        return Err(invalid("empty deviation grid"));
    }

    // One task per t; methods evaluated in flag order inside each task.
    type SweepRow = (f64, String, Option<BoundResult>, String);
    let rows: Vec<Vec<SweepRow>> = grid
        .par_iter()
        .map(|&t| {
            let mut problem = args.problem.clone();
            problem.t = t;
            args.methods
                .iter()
                .map(|m| match compute(m, &problem) {
                    Ok(b) => {
                        let status = b.status.to_string();
                        (t, m.clone(), Some(b), status)
                    }
                    Err(CliError::InvalidInput(_)) => (t, m.clone(), None, "invalid_input".into()),
                    Err(CliError::Solver(msg)) => {
                        let tag = if msg.contains("unbounded") {
                            "unbounded"
                        } else if msg.contains("infeasible") {
                            "infeasible"
                        } else {
                            "solver_failure"
                        };
                        (t, m.clone(), None, tag.into())
                    }
                    Err(CliError::Io(_)) => (t, m.clone(), None, "io_error".into()),
                })
                .collect()
        })
        .collect();

    if !args.no_manifest {
        writeln!(file, "# tailbound compare v{}", env!("CARGO_PKG_VERSION"))?;
        writeln!(
            file,
            "# methods={} t-grid={} mu={:?} mu2={:?} n={:?} support={:?}",
            args.methods.join(","),
            args.t_grid,
            args.problem.mu,
            args.problem.mu2,
            args.problem.n,
            args.problem.support,
        )?;
    }
    writeln!(file, "t,method,value,status")?;
    let mut succeeded_everywhere = vec![true; args.methods.len()];
    for per_t in &rows {
        for (mi, (t, method, result, status)) in per_t.iter().enumerate() {
            let value = match result {
                Some(b) => fmt_17(b.value),
                None => {
                    succeeded_everywhere[mi] = false;
                    "nan".into()
                }
            };
            writeln!(file, "{},{},{},{}", fmt_17(*t), method, value, status)?;
        }
    }
    if succeeded_everywhere.iter().any(|&ok| ok) {
        Ok(())
    } else {
        Err(CliError::Solver("no method succeeded on the whole grid".into()))
    }
}

pub fn extremal(method: &str, args: &ProblemArgs) -> Result<(), CliError> {
    let r = Resolved::from(args, (0.0, 1.0))?;
    let (means, t) = r.unit_means_t()?;
    let out = match method {
        "exact1" => {
            let mu = require_iid(&means, "--mu")?;
            let d = ext::extremal_exact_univariate(mu, t)
                .map_err(|e| invalid(e.to_string()))?;
            let p = tailbound::moments::ProductDistribution::new(vec![d.clone()])
                .map_err(|e| invalid(e.to_string()))?;
            let report = ext::attainment_report(&p, &ext::BoundKind::ExactUnivariate { mu, t })
                .map_err(|e| CliError::Solver(e.to_string()))?;
            json!({
                "method": "exact1",
                "atoms": d.atoms,
                "attainment": report,
            })
        }
        "chernoff" => {
            let mu = require_iid(&means, "--mu")?;
            let d = ext::extremal_bernoulli(mu).map_err(|e| invalid(e.to_string()))?;
            let factors = vec![d.clone(); r.n];
            let p = tailbound::moments::ProductDistribution::new(factors)
                .map_err(|e| invalid(e.to_string()))?;
            let report = ext::attainment_report(&p, &ext::BoundKind::Chernoff { mu, t })
                .map_err(|e| CliError::Solver(e.to_string()))?;
            json!({
                "method": "chernoff",
                "atoms": d.atoms,
                "n": r.n,
                "attainment": report,
            })
        }
        "variational" => {
            let spec = r.unit_spec()?;
            let (bound, witness) = variational::solve_variational(&spec, t)
                .map_err(|e| CliError::Solver(e.to_string()))?;
            let p = ext::extremal_product(&spec).map_err(|e| invalid(e.to_string()))?;
            let report = ext::attainment_report(
                &p,
                &ext::BoundKind::Variational { witness: witness.clone(), value: bound.value, t },
            )
            .map_err(|e| CliError::Solver(e.to_string()))?;
            json!({
                "method": "variational",
                "factors": p.factors.iter().map(|f| f.atoms.clone()).collect::<Vec<_>>(),
                "witness": { "alpha": witness.alpha, "beta": witness.beta },
                "value": bound.value,
                "attainment": report,
            })
        }
        other => return Err(invalid(format!("unknown extremal method `{other}`"))),
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
    Ok(())
}

pub fn verify(args: &VerifyArgs) -> Result<(), CliError> {
    let bound = compute(&args.method, &args.problem)?;
    let r = Resolved::from(&args.problem, (0.0, 1.0))?;

    let oracle_out = match args.oracle.as_str() {
        "lp" => {
            if r.n != 1 {
                return Err(invalid("lp oracle is univariate; use --n 1"));
            }
            let moments = match &r.mu2 {
                Some(m2) => vec![vec![r.means[0], m2[0]]],
                None => vec![vec![r.means[0]]],
            };
            let spec = MomentSpec { n: 1, support: r.support, moments, blocks: None };
            let lp = oracle::lp_tail_oracle(&spec, r.t, 2001)
                .map_err(|e| CliError::Solver(e.to_string()))?;
            json!({
                "oracle": "lp",
                "value": lp.value,
                "grid_points": 2001,
                "kind": "upper_bound_of_discretized_problem",
            })
        }
        "product" => {
            let spec = match &r.mu2 {
                Some(m2) => {
                    let moments = r
                        .means
                        .iter()
                        .zip(m2)
                        .map(|(&a, &b)| vec![a, b])
                        .collect();
                    MomentSpec { n: r.n, support: r.support, moments, blocks: None }
                }
                None => MomentSpec::from_means(r.support, &r.means),
            };
            let (lower, dist) = oracle::product_search_oracle(&spec, r.t, 3, 8, args.seed)
                .map_err(|e| CliError::Solver(e.to_string()))?;
            json!({
                "oracle": "product",
                "value": lower.value,
                "kind": "lower_bound",
                "witness_factors": dist.factors.iter().map(|f| f.atoms.clone()).collect::<Vec<_>>(),
                "seed": args.seed,
            })
        }
        "mc" => {
            let spec = r.unit_spec()?;
            let (_, t_unit) = r.unit_means_t()?;
            let p = ext::extremal_product(&spec).map_err(|e| invalid(e.to_string()))?;
            let (est, se) = oracle::monte_carlo_expectation(
                &p,
                &oracle::McFunctional::IndicatorTail { t: t_unit },
                args.samples,
                args.seed,
            )
            .map_err(|e| CliError::Solver(e.to_string()))?;
            json!({
                "oracle": "mc",
                "value": est,
                "std_error": se,
                "samples": args.samples,
                "seed": args.seed,
                "kind": "tail_probability_under_bernoulli_product",
            })
        }
        other => return Err(invalid(format!("unknown oracle `{other}`"))),
    };

    let oracle_value = oracle_out["value"].as_f64().unwrap_or(f64::NAN);
    let mut extra = BTreeMap::new();
    for (k, v) in &bound.diagnostics.extra {
        extra.insert(k.clone(), *v);
    }
    let out = json!({
        "method": args.method,
        "bound": { "value": bound.value, "clamped": bound.clamped(), "status": bound.status.to_string() },
        "oracle": oracle_out,
        "gap": bound.value - oracle_value,
        "oracle_leq_bound": oracle_value <= bound.value + 1e-9,
        "diagnostics": extra,
    });
    println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
    Ok(())
}
