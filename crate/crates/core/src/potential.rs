//! Potentials with exact normalized Taylor coefficients `D^m V(a) / m!`.
//!
//! Every family is handled analytically: polynomials by binomial expansion,
//! Gaussian sums by a per-axis Hermite recurrence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::RMatrix;
use crate::multiindex::{count_upto, enumerate_upto, Layout, MultiIndex};

/// Highest Taylor order the Gaussian recurrence is trusted for.
pub const MAX_GAUSSIAN_ORDER: usize = 120;

/// Declared constants `(beta, v0, v1)` of the short-range decay bound
/// `|D^m V(x)| <= v0 v1^|m| m! / <x>^(beta + |m|)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayMetadata {
    pub beta: f64,
    pub v0: f64,
    pub v1: f64,
}

/// Declared growth constants `|V(z)| <= M exp(tau |z|^p)` on a complex strip.
/// Recorded, never verified.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthMetadata {
    pub m: f64,
    pub tau: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianTerm {
    pub center: Vec<f64>,
    pub width: f64,
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    /// `V(x) = sum_m coef_m x^m`.
    Polynomial { terms: Vec<(MultiIndex, f64)> },
    /// `V(x) = sum amplitude * exp(-|x - center|^2 / width^2)`.
    GaussianSum { terms: Vec<GaussianTerm> },
    /// `V(x) = strength * (|x|^2 - radius^2)^2`.
    DoubleWell { strength: f64, radius: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialModel {
    pub dim: usize,
    pub kind: PotentialKind,
    #[serde(default)]
    pub decay: Option<DecayMetadata>,
    #[serde(default)]
    pub growth: Option<GrowthMetadata>,
    /// Polynomial form used for evaluation (also filled for double wells).
    #[serde(skip)]
    poly: Vec<(MultiIndex, f64)>,
}

/// Normalized Taylor coefficients at one point, stored densely in graded
/// order so that each degree shell is a contiguous slice.
#[derive(Clone, Debug)]
pub struct TaylorSeries {
    dim: usize,
    max_order: usize,
    coeffs: Vec<f64>,
}

impl TaylorSeries {
    pub fn zeros(dim: usize, max_order: usize) -> Self {
        TaylorSeries {
            dim,
            max_order,
            coeffs: vec![0.0; count_upto(dim, max_order) as usize],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficients of degree exactly `q`, graded-lex ordered.
    pub fn shell(&self, q: usize) -> &[f64] {
        assert!(q <= self.max_order);
        let start = if q == 0 { 0 } else { count_upto(self.dim, q - 1) as usize };
        let end = count_upto(self.dim, q) as usize;
        &self.coeffs[start..end]
    }

    pub fn get(&self, m: &MultiIndex) -> f64 {
        if m.order() > self.max_order {
            return 0.0;
        }
        self.coeffs[graded_position(m)]
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn gradient(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.get(&MultiIndex::unit(self.dim, i)))
            .collect()
    }

    pub fn hessian(&self) -> RMatrix {
        let d = self.dim;
        RMatrix::from_fn(d, d, |r, c| {
            let m = MultiIndex::unit(d, r).raised(c);
            let v = self.get(&m);
            if r == c {
                2.0 * v
            } else {
                v
            }
        })
    }

    /// Evaluates the Taylor polynomial truncated at degree `q` at offset `h`.
    pub fn eval_polynomial(&self, q: usize, h: &[f64]) -> f64 {
        let q = q.min(self.max_order);
        let n = count_upto(self.dim, q) as usize;
        let idx = enumerate_upto(self.dim, q);
        idx.iter()
            .zip(&self.coeffs[..n])
            .map(|(m, c)| c * m.monomial(h))
            .sum()
    }
}

/// Position of `m` in graded-lex order, computed combinatorially.
pub fn graded_position(m: &MultiIndex) -> usize {
    let d = m.dim();
    let n = m.order();
    let mut pos = if n == 0 { 0 } else { count_upto(d, n - 1) as usize };
    // rank within the shell: count lexicographically smaller shell members
    let mut remaining = n;
    for axis in 0..d.saturating_sub(1) {
        let v = m.get(axis) as usize;
        for smaller in 0..v {
            let rest = remaining - smaller;
            pos += crate::multiindex::count_exact_degree(d - axis - 1, rest) as usize;
        }
        remaining -= v;
    }
    pos
}

fn one_d_gaussian_coeffs(y: f64, center: f64, width: f64, max_order: usize, out: &mut Vec<f64>) {
    // D^n exp(-u^2) = (-1)^n H_n(u) exp(-u^2), u = (y - c)/w.
    // g_n = D^n_y e^{-u^2} / n! = (-1/w)^n h_n(u) e^{-u^2},  h_n = H_n / n!,
    // h_{n+1} = (2 u h_n - 2 h_{n-1}) / (n + 1).
    out.clear();
    let u = (y - center) / width;
    let g = (-u * u).exp();
    let mut h_prev = 0.0;
    let mut h = 1.0;
    let mut scale = 1.0;
    for n in 0..=max_order {
        out.push(scale * h * g);
        let h_next = (2.0 * u * h - 2.0 * h_prev) / (n as f64 + 1.0);
        h_prev = h;
        h = h_next;
        scale *= -1.0 / width;
    }
}

impl PotentialModel {
    pub fn new(dim: usize, kind: PotentialKind) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        let poly = match &kind {
            PotentialKind::Polynomial { terms } => {
                for (m, _) in terms {
                    if m.dim() != dim {
                        return Err(Error::InvalidInput(format!(
                            "polynomial term {m} has dimension {} but potential has {dim}",
                            m.dim()
                        )));
                    }
                }
                terms.clone()
            }
            PotentialKind::GaussianSum { terms } => {
                for t in terms {
                    if t.center.len() != dim || t.width <= 0.0 {
                        return Err(Error::InvalidInput(
                            "gaussian term needs a d-dimensional center and positive width".into(),
                        ));
                    }
                }
                Vec::new()
            }
            PotentialKind::DoubleWell { strength, radius } => double_well_polynomial(dim, *strength, *radius),
        };
        Ok(PotentialModel {
            dim,
            kind,
            decay: None,
            growth: None,
            poly,
        })
    }

    pub fn with_decay(mut self, decay: DecayMetadata) -> Self {
        self.decay = Some(decay);
        self
    }

    pub fn with_growth(mut self, growth: GrowthMetadata) -> Self {
        self.growth = Some(growth);
        self
    }

    /// Re-derives cached data after deserialization.
    pub fn rebuilt(self) -> Result<Self> {
        let decay = self.decay;
        let growth = self.growth;
        let mut p = PotentialModel::new(self.dim, self.kind)?;
        p.decay = decay;
        p.growth = growth;
        Ok(p)
    }

    // Convenience constructors for the standard test beds.

    /// `V = x^2/2` in one dimension.
    pub fn harmonic_1d() -> Self {
        Self::polynomial_1d(&[0.0, 0.0, 0.5])
    }

    /// `V = 0`, declared short-range with `v0 = 0`.
    pub fn free(dim: usize) -> Self {
        PotentialModel::new(dim, PotentialKind::Polynomial { terms: vec![] })
            .unwrap()
            .with_decay(DecayMetadata {
                beta: 2.0,
                v0: 0.0,
                v1: 1.0,
            })
    }

    /// One-dimensional polynomial from ascending coefficients.
    pub fn polynomial_1d(coeffs: &[f64]) -> Self {
        let terms = coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(p, &c)| (MultiIndex::new(vec![p as u32]), c))
            .collect();
        PotentialModel::new(1, PotentialKind::Polynomial { terms }).unwrap()
    }

    /// `V = x^2/2 + g x^4`.
    pub fn anharmonic_1d(g: f64) -> Self {
        Self::polynomial_1d(&[0.0, 0.0, 0.5, 0.0, g])
    }

    /// `V = (x^2 - 1)^2 / 4`.
    pub fn double_well_1d() -> Self {
        PotentialModel::new(
            1,
            PotentialKind::DoubleWell {
                strength: 0.25,
                radius: 1.0,
            },
        )
        .unwrap()
    }

    /// `V = amplitude * exp(-x^2 / width^2)`.
    pub fn gaussian_barrier_1d(amplitude: f64, width: f64) -> Self {
        PotentialModel::new(
            1,
            PotentialKind::GaussianSum {
                terms: vec![GaussianTerm {
                    center: vec![0.0],
                    width,
                    amplitude,
                }],
            },
        )
        .unwrap()
    }

    pub fn is_polynomial(&self) -> bool {
        !matches!(self.kind, PotentialKind::GaussianSum { .. })
    }

    /// Total degree for polynomial families.
    pub fn polynomial_degree(&self) -> Option<usize> {
        if self.is_polynomial() {
            Some(self.poly.iter().map(|(m, _)| m.order()).max().unwrap_or(0))
        } else {
            None
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match &self.kind {
            PotentialKind::GaussianSum { terms } => terms
                .iter()
                .map(|t| {
                    let r2: f64 = x.iter().zip(&t.center).map(|(a, c)| (a - c) * (a - c)).sum();
                    t.amplitude * (-r2 / (t.width * t.width)).exp()
                })
                .sum(),
            _ => self.poly.iter().map(|(m, c)| c * m.monomial(x)).sum(),
        }
    }

    /// `D^m V(a) / m!` for all `|m| <= max_order`.
    pub fn taylor_coeffs(&self, a: &[f64], max_order: usize) -> Result<TaylorSeries> {
        let d = self.dim;
        let mut out = TaylorSeries::zeros(d, max_order);
        self.taylor_coeffs_into(a, &mut out)?;
        Ok(out)
    }

    /// Fills an existing series (its order is kept) without reallocating.
    pub fn taylor_coeffs_into(&self, a: &[f64], out: &mut TaylorSeries) -> Result<()> {
        let d = self.dim;
        let max_order = out.max_order;
        out.coeffs.iter_mut().for_each(|c| *c = 0.0);
        match &self.kind {
            PotentialKind::GaussianSum { terms } => {
                if max_order > MAX_GAUSSIAN_ORDER {
                    return Err(Error::UnsupportedOrder {
                        order: max_order,
                        reason: format!("gaussian recurrence limited to order {MAX_GAUSSIAN_ORDER}"),
                    });
                }
                let idx = enumerate_upto(d, max_order);
                let mut axis_coeffs: Vec<Vec<f64>> = vec![Vec::new(); d];
                for t in terms {
                    for i in 0..d {
                        one_d_gaussian_coeffs(a[i], t.center[i], t.width, max_order, &mut axis_coeffs[i]);
                    }
                    for (pos, m) in idx.iter().enumerate() {
                        let mut prod = t.amplitude;
                        for i in 0..d {
                            prod *= axis_coeffs[i][m.get(i) as usize];
                        }
                        out.coeffs[pos] += prod;
                    }
                }
            }
            _ => {
                // x^p about a: prod_i sum_{m_i <= p_i} C(p_i, m_i) a_i^{p_i - m_i} h_i^{m_i}
                for (p, c) in &self.poly {
                    let mut m = vec![0u32; d];
                    loop {
                        let order: usize = m.iter().map(|&v| v as usize).sum();
                        if order <= max_order {
                            let mut coef = *c;
                            for i in 0..d {
                                let (pi, mi) = (p.get(i), m[i]);
                                coef *= crate::multiindex::binomial(pi as u64, mi as u64) as f64
                                    * a[i].powi((pi - mi) as i32);
                            }
                            out.coeffs[graded_position(&MultiIndex::new(m.clone()))] += coef;
                        }
                        // odometer over 0..=p_i
                        let mut axis = 0;
                        loop {
                            if axis == d {
                                break;
                            }
                            if m[axis] < p.get(axis) {
                                m[axis] += 1;
                                break;
                            }
                            m[axis] = 0;
                            axis += 1;
                        }
                        if axis == d {
                            break;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.taylor_coeffs(x, 1).map(|t| t.gradient()).unwrap()
    }

    pub fn hessian(&self, x: &[f64]) -> RMatrix {
        self.taylor_coeffs(x, 2).map(|t| t.hessian()).unwrap()
    }

    /// Taylor remainder `V(x) - sum_{|m| <= q} D^m V(a)/m! (x - a)^m`.
    pub fn taylor_remainder(&self, series_at_a: &TaylorSeries, a: &[f64], q: usize, x: &[f64]) -> f64 {
        let h: Vec<f64> = x.iter().zip(a).map(|(xi, ai)| xi - ai).collect();
        self.value(x) - series_at_a.eval_polynomial(q, &h)
    }

    /// Worst ratio of `|D^m V(x)|` against the declared decay bound over a
    /// tensor grid of `samples` points per axis on `[lo, hi]^d` and
    /// `|m| <= max_order`. Values `<= 1` certify the declared triple on the
    /// samples.
    pub fn decay_check(&self, lo: f64, hi: f64, samples: usize, max_order: usize) -> Result<f64> {
        let decay = self.decay.ok_or(Error::MissingDecayMetadata)?;
        let d = self.dim;
        let idx = enumerate_upto(d, max_order);
        let mut worst: f64 = 0.0;
        let total = samples.pow(d as u32);
        let mut x = vec![0.0; d];
        for flat in 0..total {
            let mut rem = flat;
            for xi in x.iter_mut() {
                let k = rem % samples;
                rem /= samples;
                *xi = lo + (hi - lo) * k as f64 / (samples - 1).max(1) as f64;
            }
            let t = self.taylor_coeffs(&x, max_order)?;
            let bracket = (1.0 + x.iter().map(|v| v * v).sum::<f64>()).sqrt();
            for (pos, m) in idx.iter().enumerate() {
                let n = m.order() as f64;
                // |D^m V| / m! = |coeff|
                let ratio = t.as_slice()[pos].abs() * bracket.powf(decay.beta + n)
                    / (decay.v0 * decay.v1.powf(n));
                worst = worst.max(ratio);
            }
        }
        Ok(worst)
    }

    /// Minimum of `V` over a coarse tensor grid (advisory lower-bound check).
    pub fn sampled_minimum(&self, lo: f64, hi: f64, samples: usize) -> f64 {
        let d = self.dim;
        let total = samples.pow(d as u32);
        let mut x = vec![0.0; d];
        let mut min = f64::INFINITY;
        for flat in 0..total {
            let mut rem = flat;
            for xi in x.iter_mut() {
                let k = rem % samples;
                rem /= samples;
                *xi = lo + (hi - lo) * k as f64 / (samples - 1).max(1) as f64;
            }
            min = min.min(self.value(&x));
        }
        min
    }

    /// Layout shared with [`TaylorSeries`] indexing.
    pub fn layout(&self, max_order: usize) -> Layout {
        Layout::new(self.dim, max_order)
    }
}

fn double_well_polynomial(dim: usize, strength: f64, radius: f64) -> Vec<(MultiIndex, f64)> {
    // (sum x_i^2 - r^2)^2 = sum x_i^4 + 2 sum_{i<j} x_i^2 x_j^2 - 2 r^2 sum x_i^2 + r^4
    let mut terms = Vec::new();
    let r2 = radius * radius;
    terms.push((MultiIndex::zero(dim), strength * r2 * r2));
    for i in 0..dim {
        let mut e = vec![0u32; dim];
        e[i] = 4;
        terms.push((MultiIndex::new(e.clone()), strength));
        e[i] = 2;
        terms.push((MultiIndex::new(e), -2.0 * r2 * strength));
        for j in (i + 1)..dim {
            let mut f = vec![0u32; dim];
            f[i] = 2;
            f[j] = 2;
            terms.push((MultiIndex::new(f), 2.0 * strength));
        }
    }
    terms
}
