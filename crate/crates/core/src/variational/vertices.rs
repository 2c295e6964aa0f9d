//! Vertices of the tail polytope `{x in [0,1]^n : sum x_i >= s}`.
//!
//! Every vertex is a 0/1 pattern with at most one fractional coordinate,
//! and the product-form constraints only depend on the multiset of values
//! each block of equal-mean variables receives. Points are therefore stored
//! canonically: coordinates sorted ascending within each block.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnumerationError {
    #[error("tail threshold {threshold} exceeds the largest attainable sum {max}")]
    EmptyTail { threshold: f64, max: f64 },
    #[error("invalid block split: need 1 <= m <= n")]
    BadBlockSplit,
}

const COORD_TOL: f64 = 1e-12;

/// One vertex of the tail polytope, canonicalized per block.
///
/// `blocks[b]` lists `(value, multiplicity)` runs in increasing value order;
/// multiplicities within a block sum to the block size.
#[derive(Debug, Clone, PartialEq)]
pub struct TailVertex {
    pub blocks: Vec<Vec<(f64, usize)>>,
}

impl TailVertex {
    /// Expand into a full coordinate vector (block order, ascending values).
    pub fn coordinates(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for block in &self.blocks {
            for &(v, c) in block {
                out.extend(std::iter::repeat_n(v, c));
            }
        }
        out
    }

    pub fn coordinate_sum(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.iter().map(|&(v, c)| v * c as f64))
            .sum()
    }

    fn from_block_values(values: Vec<Vec<f64>>) -> Self {
        let blocks = values
            .into_iter()
            .map(|mut vals| {
                vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mut runs: Vec<(f64, usize)> = Vec::new();
                for v in vals {
                    match runs.last_mut() {
                        Some((rv, c)) if (*rv - v).abs() <= COORD_TOL => *c += 1,
                        _ => runs.push((v, 1)),
                    }
                }
                runs
            })
            .collect();
        Self { blocks }
    }

    fn approx_eq(&self, other: &Self) -> bool {
        self.blocks.len() == other.blocks.len()
            && self.blocks.iter().zip(&other.blocks).all(|(a, b)| {
                a.len() == b.len()
                    && a.iter()
                        .zip(b)
                        .all(|(&(v1, c1), &(v2, c2))| c1 == c2 && (v1 - v2).abs() <= COORD_TOL)
            })
    }
}

/// Canonical vertex set of a tail polytope.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalPointSet {
    pub points: Vec<TailVertex>,
    /// Sizes of the equal-mean blocks the points are canonicalized over.
    pub block_sizes: Vec<usize>,
    /// Threshold `s` of the halfspace `sum x_i >= s`.
    pub threshold: f64,
}

impl ExtremalPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn push_dedup(&mut self, v: TailVertex) {
        if !self.points.iter().any(|p| p.approx_eq(&v)) {
            self.points.push(v);
        }
    }
}

/// Thresholds are sums of user inputs; accumulated rounding must not move
/// one across an integer, which would silently drop a vertex class.
fn snap_threshold(s: f64) -> f64 {
    if (s - s.round()).abs() <= 1e-9 {
        s.round()
    } else {
        s
    }
}

/// Vertices of `{x in [0,1]^n : sum x_i >= s}` for exchangeable variables
/// (one block): points with `k` ones and `n - k` zeros for every integer
/// `k >= s`, plus the fractional vertex with `floor(s)` ones and one
/// coordinate `s - floor(s)` when `s` is not an integer.
pub fn enumerate_extremal_iid(n: usize, s: f64) -> Result<ExtremalPointSet, EnumerationError> {
    let s = snap_threshold(s);
    if s > n as f64 + COORD_TOL {
        return Err(EnumerationError::EmptyTail { threshold: s, max: n as f64 });
    }
    let s = s.clamp(0.0, n as f64);
    let mut set = ExtremalPointSet {
        points: Vec::new(),
        block_sizes: vec![n],
        threshold: s,
    };
    let k_min = s.ceil() as usize;
    for k in k_min..=n {
        let mut vals = vec![0.0; n - k];
        vals.extend(std::iter::repeat_n(1.0, k));
        set.push_dedup(TailVertex::from_block_values(vec![vals]));
    }
    let frac = s - s.floor();
    if frac > COORD_TOL && 1.0 - frac > COORD_TOL {
        let ones = s.floor() as usize;
        let mut vals = vec![0.0; n - ones - 1];
        vals.push(frac);
        vals.extend(std::iter::repeat_n(1.0, ones));
        set.push_dedup(TailVertex::from_block_values(vec![vals]));
    }
    Ok(set)
}

/// Vertices for two blocks of sizes `m` and `n - m` with means `mu1`, `mu2`
/// at deviation `t`; threshold `s = n t + m mu1 + (n - m) mu2`. Canonical up
/// to within-block permutation, `O(n^2)` points.
pub fn enumerate_extremal_two_block(
    n: usize,
    m: usize,
    mu1: f64,
    mu2: f64,
    t: f64,
) -> Result<ExtremalPointSet, EnumerationError> {
    if m == 0 || m > n {
        return Err(EnumerationError::BadBlockSplit);
    }
    let s = n as f64 * t + m as f64 * mu1 + (n - m) as f64 * mu2;
    if m == n {
        return enumerate_extremal_iid(n, s);
    }
    enumerate_block_vertices(&[m, n - m], s)
}

/// Vertices canonicalized over an arbitrary block partition.
pub fn enumerate_block_vertices(
    block_sizes: &[usize],
    s: f64,
) -> Result<ExtremalPointSet, EnumerationError> {
    let n: usize = block_sizes.iter().sum();
    let s = snap_threshold(s);
    if s > n as f64 + COORD_TOL {
        return Err(EnumerationError::EmptyTail { threshold: s, max: n as f64 });
    }
    let s = s.clamp(0.0, n as f64);
    let mut set = ExtremalPointSet {
        points: Vec::new(),
        block_sizes: block_sizes.to_vec(),
        threshold: s,
    };
    let nb = block_sizes.len();

    // Integer vertices: distribute k ones over the blocks, k >= s.
    let k_min = s.ceil() as usize;
    for k in k_min..=n {
        for split in compositions(k, block_sizes) {
            let vals = split
                .iter()
                .zip(block_sizes)
                .map(|(&ones, &size)| {
                    let mut v = vec![0.0; size - ones];
                    v.extend(std::iter::repeat_n(1.0, ones));
                    v
                })
                .collect();
            set.push_dedup(TailVertex::from_block_values(vals));
        }
    }

    // Fractional vertices: floor(s) ones, one coordinate at the fractional
    // part, placed in any block with room for it.
    let frac = s - s.floor();
    if frac > COORD_TOL && 1.0 - frac > COORD_TOL {
        let ones_total = s.floor() as usize;
        for split in compositions(ones_total, block_sizes) {
            for host in 0..nb {
                if split[host] + 1 > block_sizes[host] {
                    continue;
                }
                let vals = (0..nb)
                    .map(|b| {
                        let ones = split[b];
                        let extra = usize::from(b == host);
                        let mut v = vec![0.0; block_sizes[b] - ones - extra];
                        if b == host {
                            v.push(frac);
                        }
                        v.extend(std::iter::repeat_n(1.0, ones));
                        v
                    })
                    .collect();
                set.push_dedup(TailVertex::from_block_values(vals));
            }
        }
    }
    Ok(set)
}

/// All ways to write `k` as a sum over the blocks with per-block capacity.
fn compositions(k: usize, capacities: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(capacities.len());
    fn rec(k: usize, caps: &[usize], current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if caps.is_empty() {
            if k == 0 {
                out.push(current.clone());
            }
            return;
        }
        let rest: usize = caps[1..].iter().sum();
        let lo = k.saturating_sub(rest);
        let hi = caps[0].min(k);
        for take in lo..=hi {
            current.push(take);
            rec(k - take, &caps[1..], current, out);
            current.pop();
        }
    }
    rec(k, capacities, &mut current, &mut out);
    out
}

#[cfg(test)]
pub(crate) mod brute_force {
    //! Independent vertex oracle: enumerate all n-subsets of the facet
    //! inequalities of `[0,1]^n ∩ {sum x >= s}`, solve each square system
    //! and keep the feasible solutions.

    use nalgebra::{DMatrix, DVector};

    /// Rows are (normal, rhs) of `normal . x <= rhs`.
    fn facets(n: usize, s: f64) -> Vec<(Vec<f64>, f64)> {
        let mut rows = Vec::new();
        for i in 0..n {
            let mut neg = vec![0.0; n];
            neg[i] = -1.0;
            rows.push((neg, 0.0)); // -x_i <= 0
            let mut pos = vec![0.0; n];
            pos[i] = 1.0;
            rows.push((pos, 1.0)); // x_i <= 1
        }
        rows.push((vec![-1.0; n], -s)); // -sum x <= -s
        rows
    }

    pub fn vertices(n: usize, s: f64) -> Vec<Vec<f64>> {
        let rows = facets(n, s);
        let m = rows.len();
        let mut found: Vec<Vec<f64>> = Vec::new();
        let mut combo: Vec<usize> = (0..n).collect();
        loop {
            // Solve the active set as equalities.
            let a = DMatrix::from_fn(n, n, |r, c| rows[combo[r]].0[c]);
            let b = DVector::from_fn(n, |r, _| rows[combo[r]].1);
            if let Some(x) = a.lu().solve(&b) {
                let feasible = rows
                    .iter()
                    .all(|(normal, rhs)| {
                        normal.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>()
                            <= rhs + 1e-9
                    });
                if feasible {
                    let x: Vec<f64> = x.iter().copied().collect();
                    if !found.iter().any(|y| {
                        y.iter().zip(&x).all(|(a, b)| (a - b).abs() <= 1e-9)
                    }) {
                        found.push(x);
                    }
                }
            }
            // Next n-combination of row indices.
            let mut i = n;
            loop {
                if i == 0 {
                    return found;
                }
                i -= 1;
                if combo[i] != i + m - n {
                    combo[i] += 1;
                    for j in i + 1..n {
                        combo[j] = combo[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    /// Canonicalize a full vertex list under the given block partition.
    pub fn canonicalize(points: Vec<Vec<f64>>, block_sizes: &[usize]) -> Vec<Vec<f64>> {
        let mut canon: Vec<Vec<f64>> = Vec::new();
        for p in points {
            let mut q = Vec::with_capacity(p.len());
            let mut off = 0;
            for &size in block_sizes {
                let mut chunk: Vec<f64> = p[off..off + size].to_vec();
                chunk.sort_by(|a, b| a.partial_cmp(b).unwrap());
                q.extend(chunk);
                off += size;
            }
            if !canon
                .iter()
                .any(|r| r.iter().zip(&q).all(|(a, b)| (a - b).abs() <= 1e-9))
            {
                canon.push(q);
            }
        }
        canon.sort_by(|a, b| a.partial_cmp(b).unwrap());
        canon
    }
}
