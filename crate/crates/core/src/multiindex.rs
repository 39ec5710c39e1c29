//! Multi-indices, graded enumeration and the combinatorics used by the
//! sparsity bookkeeping of the coefficient hierarchy.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A d-tuple of non-negative integers.
///
/// Ordered gradedly: first by total degree `|j|`, then lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        assert!(!entries.is_empty(), "multi-index dimension must be at least 1");
        MultiIndex(entries)
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(vec![0; dim])
    }

    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut e = vec![0; dim];
        e[axis] = 1;
        Self::new(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    /// Total degree `|j|`.
    pub fn order(&self) -> usize {
        self.0.iter().map(|&v| v as usize).sum()
    }

    pub fn get(&self, axis: usize) -> u32 {
        self.0[axis]
    }

    pub fn raised(&self, axis: usize) -> Self {
        let mut e = self.0.clone();
        e[axis] += 1;
        MultiIndex(e)
    }

    pub fn lowered(&self, axis: usize) -> Option<Self> {
        if self.0[axis] == 0 {
            return None;
        }
        let mut e = self.0.clone();
        e[axis] -= 1;
        Some(MultiIndex(e))
    }

    /// `j! = j_1! j_2! ... j_d!` in floating point.
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&v| factorial_f64(v as usize)).product()
    }

    /// `x^j` for a d-vector `x`.
    pub fn monomial(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        self.0
            .iter()
            .zip(x)
            .map(|(&p, &xi)| xi.powi(p as i32))
            .product()
    }

    /// First axis with a non-zero entry.
    pub fn first_nonzero_axis(&self) -> Option<usize> {
        self.0.iter().position(|&v| v > 0)
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order()
            .cmp(&other.order())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// All multi-indices of total degree exactly `degree`, lexicographically
/// ascending.
pub fn enumerate_exact(dim: usize, degree: usize) -> Vec<MultiIndex> {
    assert!(dim >= 1);
    let mut out = Vec::with_capacity(count_exact_degree(dim, degree) as usize);
    let mut buf = vec![0u32; dim];
    fill_exact(&mut buf, 0, degree, &mut out);
    out
}

fn fill_exact(buf: &mut [u32], pos: usize, remaining: usize, out: &mut Vec<MultiIndex>) {
    if pos + 1 == buf.len() {
        buf[pos] = remaining as u32;
        out.push(MultiIndex(buf.to_vec()));
        return;
    }
    for v in 0..=remaining {
        buf[pos] = v as u32;
        fill_exact(buf, pos + 1, remaining - v, out);
    }
}

/// All multi-indices with `|j| <= max_degree` in graded-lexicographic order.
pub fn enumerate_upto(dim: usize, max_degree: usize) -> Vec<MultiIndex> {
    let mut out = Vec::with_capacity(count_upto(dim, max_degree) as usize);
    for n in 0..=max_degree {
        out.extend(enumerate_exact(dim, n));
    }
    out
}

/// Number of multi-indices of total degree `k` in `dim` dimensions,
/// `C(dim - 1 + k, dim - 1)`.
pub fn count_exact_degree(dim: usize, k: usize) -> u64 {
    assert!(dim >= 1);
    binomial((dim - 1 + k) as u64, (dim - 1) as u64) as u64
}

/// Number of multi-indices with `|j| <= n`, `C(n + dim, dim)`.
pub fn count_upto(dim: usize, n: usize) -> u64 {
    binomial((n + dim) as u64, dim as u64) as u64
}

/// Exact binomial coefficient. Returns 0 when `k > n`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step.
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Signed-argument binomial used by the hierarchy combinatorics: `C(n, k)`
/// with the convention that it is 0 for negative `k` or `k > n >= 0`, and
/// `C(-1, -1) = 1` (the `k = p = 1` case of the p-resolved bound).
pub fn binomial_signed(n: i64, k: i64) -> u128 {
    if n == -1 && k == -1 {
        return 1;
    }
    if n < 0 || k < 0 || k > n {
        return 0;
    }
    binomial(n as u64, k as u64)
}

pub fn factorial_f64(n: usize) -> f64 {
    (2..=n).map(|v| v as f64).product()
}

/// `ln(a! / b!)` for `a >= b`, summed in floating point.
pub fn ln_factorial_ratio(a: usize, b: usize) -> f64 {
    assert!(a >= b);
    ((b + 1)..=a).map(|v| (v as f64).ln()).sum()
}

/// `(a! / b!)^{1/2}` evaluated through logarithms so it never overflows an
/// integer type.
pub fn sqrt_factorial_ratio(a: usize, b: usize) -> f64 {
    (0.5 * ln_factorial_ratio(a, b)).exp()
}

/// Checks `C(q, p-1) = sum_{n=p-1}^{q} C(n-1, p-2)` in exact arithmetic.
pub fn hockey_stick_holds(q: u64, p: u64) -> bool {
    assert!(p >= 2 && p <= q + 1);
    let lhs = binomial(q, p - 1);
    let rhs: u128 = ((p - 1)..=q)
        .map(|n| binomial_signed(n as i64 - 1, p as i64 - 2))
        .sum();
    lhs == rhs
}

/// Checks `C(d+q+2-n, d-1) * C(d+2, d-1)^n <= C(d+2, d-1)^{q+1}` exactly.
pub fn shell_growth_inequality_holds(d: u64, q: u64, n: u64) -> bool {
    assert!(d >= 1 && n <= q);
    let d3 = binomial(d + 2, d - 1);
    let lhs = binomial(d + q + 2 - n, d - 1) * d3.pow(n as u32);
    let rhs = d3.pow(q as u32 + 1);
    lhs <= rhs
}

/// Dense graded-order layout of all multi-indices with `|j| <= max_degree`
/// together with ladder neighbour tables.
///
/// Vectors indexed by this layout for a smaller degree are prefixes of the
/// layout, so one table serves every support size up to `max_degree`.
#[derive(Clone, Debug)]
pub struct Layout {
    dim: usize,
    max_degree: usize,
    indices: Vec<MultiIndex>,
    lookup: HashMap<MultiIndex, usize>,
    /// `up[i * dim + axis]` is the position of `j + e_axis`, or `NONE`.
    up: Vec<usize>,
    /// `down[i * dim + axis]` is the position of `j - e_axis`, or `NONE`.
    down: Vec<usize>,
}

pub const NONE: usize = usize::MAX;

impl Layout {
    pub fn new(dim: usize, max_degree: usize) -> Self {
        let indices = enumerate_upto(dim, max_degree);
        let lookup: HashMap<MultiIndex, usize> = indices
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, j)| (j, i))
            .collect();
        let mut up = vec![NONE; indices.len() * dim];
        let mut down = vec![NONE; indices.len() * dim];
        for (i, j) in indices.iter().enumerate() {
            for axis in 0..dim {
                if let Some(&u) = lookup.get(&j.raised(axis)) {
                    up[i * dim + axis] = u;
                }
                if let Some(l) = j.lowered(axis) {
                    down[i * dim + axis] = lookup[&l];
                }
            }
        }
        Layout {
            dim,
            max_degree,
            indices,
            lookup,
            up,
            down,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// Number of entries for support `|j| <= degree`.
    pub fn len_upto(&self, degree: usize) -> usize {
        count_upto(self.dim, degree) as usize
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn index(&self, pos: usize) -> &MultiIndex {
        &self.indices[pos]
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn position(&self, j: &MultiIndex) -> Option<usize> {
        self.lookup.get(j).copied()
    }

    #[inline]
    pub fn up(&self, pos: usize, axis: usize) -> usize {
        self.up[pos * self.dim + axis]
    }

    #[inline]
    pub fn down(&self, pos: usize, axis: usize) -> usize {
        self.down[pos * self.dim + axis]
    }
}
