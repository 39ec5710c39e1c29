//! The order-by-order coefficient cascade
//! `i dc_n/dt = sum_{k<n} K_{n+2-k}(t) c_k(t)`, with
//! `K_q = sum_{|m|=q} D^m V(a)/m! X^m`, driven by a classical trajectory.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{position_into, BasisCoefficients, PositionSign, WavepacketFrame};
use crate::classical::{ClassicalState, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::multiindex::{binomial, count_upto, enumerate_exact, ln_factorial_ratio, Layout};
use crate::ode::{Dopri5, Tolerances};
use crate::potential::{graded_position, PotentialModel, TaylorSeries, MAX_GAUSSIAN_ORDER};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Applies the `K_q` operators of one Taylor expansion to vectors in a
/// shared graded layout.
pub struct KOperator<'a> {
    layout: &'a Layout,
    a_mat: &'a CMatrix,
    taylor: &'a TaylorSeries,
    sign: PositionSign,
}

impl<'a> KOperator<'a> {
    pub fn new(layout: &'a Layout, a_mat: &'a CMatrix, taylor: &'a TaylorSeries) -> Self {
        KOperator {
            layout,
            a_mat,
            taylor,
            sign: PositionSign::Correct,
        }
    }

    /// Calls `f(q, K_q c)` for `q = 3..=q_max`; `c` has support `n` and
    /// `K_q c` has support `n + q`.
    pub fn chain<F: FnMut(usize, &[Complex64])>(&self, c: &[Complex64], n: usize, q_max: usize, mut f: F) {
        let d = self.layout.dim();
        let q_max = q_max.min(self.taylor.max_order());
        if q_max < 3 {
            return;
        }
        assert!(n + q_max <= self.layout.max_degree(), "layout too small for K chain");
        // shell[i] = X^m c for the i-th multi-index m of the current degree
        let mut shell: Vec<Vec<Complex64>> = vec![c[..self.layout.len_upto(n)].to_vec()];
        let mut acc = Vec::new();
        for q in 1..=q_max {
            let len = self.layout.len_upto(n + q);
            let offset_prev = if q >= 2 { count_upto(d, q - 2) as usize } else { 0 };
            let ms = enumerate_exact(d, q);
            let mut next = Vec::with_capacity(ms.len());
            for m in &ms {
                let axis = m.first_nonzero_axis().unwrap();
                let parent = m.lowered(axis).unwrap();
                let pi = graded_position(&parent) - offset_prev;
                let mut out = vec![ZERO; len];
                position_into(self.layout, n + q - 1, self.a_mat, axis, &shell[pi], &mut out, self.sign);
                next.push(out);
            }
            shell = next;
            if q >= 3 {
                let coeffs = self.taylor.shell(q);
                acc.clear();
                acc.resize(len, ZERO);
                let mut any = false;
                for (v, w) in shell.iter().zip(coeffs) {
                    if *w == 0.0 {
                        continue;
                    }
                    any = true;
                    for (a, x) in acc.iter_mut().zip(v) {
                        *a += x * *w;
                    }
                }
                if any {
                    f(q, &acc);
                }
            }
        }
    }
}

/// `K_k c` at the frame's position and `A`, for a single order `k >= 3`.
pub fn apply_kk(pot: &PotentialModel, frame: &WavepacketFrame, k: usize, c: &BasisCoefficients) -> Result<BasisCoefficients> {
    if c.dim != frame.dim() || pot.dim != frame.dim() {
        return Err(Error::FrameMismatch("dimension of coefficients, frame and potential differ".into()));
    }
    if k < 3 {
        return Err(Error::InvalidInput("K_k is defined for k >= 3".into()));
    }
    let taylor = pot.taylor_coeffs(&frame.a, k)?;
    apply_kk_with(&taylor, &frame.a_mat, k, c)
}

pub fn apply_kk_with(taylor: &TaylorSeries, a_mat: &CMatrix, k: usize, c: &BasisCoefficients) -> Result<BasisCoefficients> {
    let layout = Layout::new(c.dim, c.support + k);
    let op = KOperator::new(&layout, a_mat, taylor);
    let mut out = BasisCoefficients::zeros(c.dim, c.support + k);
    op.chain(&c.data, c.support, k, |q, v| {
        if q == k {
            out.data.copy_from_slice(v);
        }
    });
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct HierarchyOptions {
    pub tol: f64,
    /// Resolve `c_k` into parts `c_k^{[p]}` for all `k <= kp`.
    pub p_resolved_upto: Option<usize>,
    /// Times at which snapshots are stored (sorted, within the trajectory).
    pub output_times: Vec<f64>,
    /// Largest number of stored complex entries in the state.
    pub budget: u64,
    pub max_steps: usize,
    /// Start time; defaults to the start of the trajectory.
    pub t0: Option<f64>,
}

impl HierarchyOptions {
    pub fn new(tol: f64, output_times: Vec<f64>) -> Self {
        HierarchyOptions {
            tol,
            p_resolved_upto: None,
            output_times,
            budget: 50_000_000,
            max_steps: 2_000_000,
            t0: None,
        }
    }

    pub fn p_resolved(mut self, kp: usize) -> Self {
        self.p_resolved_upto = Some(kp);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchySnapshot {
    pub t: f64,
    /// `orders[k] = c_k(t)` for `k < l`.
    pub orders: Vec<BasisCoefficients>,
    /// `parts[k][p - 1] = c_k^{[p]}(t)` for resolved orders (`parts[0]` empty).
    pub parts: Vec<Vec<BasisCoefficients>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoefficientHierarchy {
    pub dim: usize,
    /// Initial maximal degree `J`.
    pub j0: usize,
    /// Number of orders `c_0 .. c_{l-1}`.
    pub l: usize,
    pub t0: f64,
    pub p_resolved_upto: Option<usize>,
    pub snapshots: Vec<HierarchySnapshot>,
    /// `sup_t ||c_k(t)||` over all accepted steps.
    pub sup_norms: Vec<f64>,
    /// Entries a `K` application tried to place outside `|j| <= J + 3k`.
    pub sparsity_violations: usize,
    pub steps: usize,
}

#[derive(Clone, Copy, Debug)]
struct Block {
    offset: usize,
    support: usize,
    len: usize,
}

struct StateLayout {
    dim: usize,
    j0: usize,
    l: usize,
    kp: usize,
    /// orders[k] for k >= 1 (orders[0] unused)
    orders: Vec<Block>,
    /// parts[k][p] for 1 <= p <= k <= kp
    parts: Vec<Vec<Option<Block>>>,
    total: usize,
}

impl StateLayout {
    fn new(dim: usize, j0: usize, l: usize, kp: usize) -> Self {
        let mut offset = 0;
        let mut orders = vec![Block {
            offset: 0,
            support: j0,
            len: 0,
        }];
        for k in 1..l {
            let support = j0 + 3 * k;
            let len = count_upto(dim, support) as usize;
            orders.push(Block { offset, support, len });
            offset += len;
        }
        let mut parts = vec![vec![None; kp + 1]; kp + 1];
        for (k, row) in parts.iter_mut().enumerate().skip(1) {
            for (p, slot) in row.iter_mut().enumerate().take(k + 1).skip(1) {
                let support = j0 + k + 2 * p;
                let len = count_upto(dim, support) as usize;
                *slot = Some(Block { offset, support, len });
                offset += len;
            }
        }
        StateLayout {
            dim,
            j0,
            l,
            kp,
            orders,
            parts,
            total: offset,
        }
    }

    fn count_entries(dim: usize, j0: usize, l: usize, kp: usize) -> u64 {
        let mut n = 0u64;
        for k in 1..l {
            n += count_upto(dim, j0 + 3 * k);
        }
        for k in 1..=kp {
            for p in 1..=k {
                n += count_upto(dim, j0 + k + 2 * p);
            }
        }
        n
    }
}

fn add_into(target: &mut [Complex64], src: &[Complex64], scale: Complex64, violations: &mut usize) {
    let n = target.len().min(src.len());
    for (t, s) in target[..n].iter_mut().zip(&src[..n]) {
        *t += s * scale;
    }
    if src.len() > n {
        *violations += src[n..].iter().filter(|z| **z != ZERO).count();
    }
}

struct Rhs<'a> {
    traj: &'a Trajectory,
    pot: &'a PotentialModel,
    layout: Layout,
    sl: StateLayout,
    c0: Vec<Complex64>,
    packed: Vec<f64>,
    taylor: TaylorSeries,
    violations: usize,
}

impl<'a> Rhs<'a> {
    fn eval(&mut self, t: f64, y: &[Complex64], dy: &mut [Complex64]) {
        let d = self.sl.dim;
        self.traj.packed_at(t, &mut self.packed);
        let state = ClassicalState::unpack(d, t, &self.packed);
        self.pot
            .taylor_coeffs_into(&state.a, &mut self.taylor)
            .expect("taylor order validated before integration");
        dy.iter_mut().for_each(|z| *z = ZERO);
        let minus_i = Complex64::new(0.0, -1.0);
        let l = self.sl.l;
        let kp = self.sl.kp;
        let op = KOperator::new(&self.layout, &state.a_mat, &self.taylor);
        let sl = &self.sl;
        let violations = &mut self.violations;
        // sources: unresolved orders c_n, n = 0 .. l-2
        for n in 0..l.saturating_sub(1) {
            let (src, support): (&[Complex64], usize) = if n == 0 {
                (&self.c0, sl.j0)
            } else {
                let b = sl.orders[n];
                (&y[b.offset..b.offset + b.len], b.support)
            };
            let q_max = l + 1 - n;
            op.chain(src, support, q_max, |q, v| {
                let k = n + q - 2;
                if k < l {
                    let b = sl.orders[k];
                    add_into(&mut dy[b.offset..b.offset + b.len], v, minus_i, violations);
                }
                if n == 0 && k <= kp {
                    let b = sl.parts[k][1].unwrap();
                    add_into(&mut dy[b.offset..b.offset + b.len], v, minus_i, violations);
                }
            });
        }
        // resolved sources c_n^{[p]}, n >= 1, feeding c_k^{[p+1]}
        for n in 1..kp {
            for p in 1..=n {
                let b = sl.parts[n][p].unwrap();
                let src = &y[b.offset..b.offset + b.len];
                let q_max = kp + 2 - n;
                op.chain(src, b.support, q_max, |q, v| {
                    let k = n + q - 2;
                    if k <= kp && p < k {
                        let t = sl.parts[k][p + 1].unwrap();
                        add_into(&mut dy[t.offset..t.offset + t.len], v, minus_i, violations);
                    }
                });
            }
        }
    }
}

fn snapshot(sl: &StateLayout, c0: &BasisCoefficients, t: f64, y: &[Complex64]) -> HierarchySnapshot {
    let mut orders = vec![c0.clone()];
    for k in 1..sl.l {
        let b = sl.orders[k];
        orders.push(BasisCoefficients {
            dim: sl.dim,
            support: b.support,
            data: y[b.offset..b.offset + b.len].to_vec(),
        });
    }
    let mut parts = vec![Vec::new()];
    for k in 1..=sl.kp {
        let mut row = Vec::new();
        for p in 1..=k {
            let b = sl.parts[k][p].unwrap();
            row.push(BasisCoefficients {
                dim: sl.dim,
                support: b.support,
                data: y[b.offset..b.offset + b.len].to_vec(),
            });
        }
        parts.push(row);
    }
    HierarchySnapshot { t, orders, parts }
}

/// Integrates `c_1 .. c_{l-1}` (and optionally the parts `c_k^{[p]}`) from
/// `c_k(t0) = 0`, with `c_0` constant.
pub fn integrate_hierarchy(
    traj: &Trajectory,
    pot: &PotentialModel,
    c0: &BasisCoefficients,
    l: usize,
    opts: &HierarchyOptions,
) -> Result<CoefficientHierarchy> {
    let d = traj.dim();
    if c0.dim != d || pot.dim != d {
        return Err(Error::FrameMismatch("dimension of c0, potential and trajectory differ".into()));
    }
    if l == 0 {
        return Err(Error::InvalidInput("l must be at least 1".into()));
    }
    let kp = opts.p_resolved_upto.map(|k| k.min(l - 1)).unwrap_or(0);
    let j0 = c0.support;
    let entries = StateLayout::count_entries(d, j0, l, kp);
    if entries > opts.budget {
        return Err(Error::SupportOverflow {
            entries,
            budget: opts.budget,
        });
    }
    let order = l + 1;
    if !pot.is_polynomial() && order > MAX_GAUSSIAN_ORDER {
        return Err(Error::UnsupportedOrder {
            order,
            reason: format!("hierarchy needs Taylor order {order}"),
        });
    }
    let t0 = opts.t0.unwrap_or(traj.t_start());
    let mut times = opts.output_times.clone();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for &t in &times {
        if !traj.covers(t) || t < t0 {
            return Err(Error::InvalidInput(format!(
                "output time {t} outside [{t0}, {}]",
                traj.t_end()
            )));
        }
    }
    let sl = StateLayout::new(d, j0, l, kp);
    let layout = Layout::new(d, j0 + 3 * l + 1);
    let mut rhs = Rhs {
        traj,
        pot,
        layout,
        sl: StateLayout::new(d, j0, l, kp),
        c0: c0.data.clone(),
        packed: vec![0.0; ClassicalState::state_len(d)],
        taylor: TaylorSeries::zeros(d, order),
        violations: 0,
    };
    let y0 = vec![ZERO; sl.total];
    let mut tol = Tolerances::new(opts.tol);
    tol.max_steps = opts.max_steps;
    let span = traj.t_end() - t0;
    tol.h_max = Some(span.max(1e-12) / 8.0);
    let mut solver = Dopri5::new(|t, y: &[Complex64], dy: &mut [Complex64]| rhs.eval(t, y, dy), t0, y0, tol);

    let mut sup_norms = vec![0.0; l];
    sup_norms[0] = c0.norm();
    let update_sup = |y: &[Complex64], sup: &mut [f64]| {
        for k in 1..l {
            let b = sl.orders[k];
            let n = y[b.offset..b.offset + b.len].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            sup[k] = sup[k].max(n);
        }
    };
    let mut snapshots = Vec::with_capacity(times.len());
    // Steps never cross a trajectory node, so no feature of the orbit is skipped.
    let node_times: Vec<f64> = traj.nodes().iter().map(|n| n.t).collect();
    for &t_out in &times {
        while solver.t() < t_out {
            let next = node_times.partition_point(|&tn| tn <= solver.t());
            let limit = node_times.get(next).map_or(t_out, |&tn| tn.min(t_out));
            solver.step(limit, |_, _| true)?;
            update_sup(solver.y(), &mut sup_norms);
        }
        snapshots.push(snapshot(&sl, c0, t_out, solver.y()));
    }
    let steps = solver.steps();
    drop(solver);
    Ok(CoefficientHierarchy {
        dim: d,
        j0,
        l,
        t0,
        p_resolved_upto: opts.p_resolved_upto.map(|_| kp),
        snapshots,
        sup_norms,
        sparsity_violations: rhs.violations,
        steps,
    })
}

impl CoefficientHierarchy {
    pub fn snapshot_at(&self, t: f64) -> Option<&HierarchySnapshot> {
        self.snapshots.iter().find(|s| s.t == t)
    }

    /// `hbar^{k/2} sup_t ||c_k(t)||`.
    pub fn norm_profile(&self, hbar: f64) -> Vec<f64> {
        self.sup_norms
            .iter()
            .enumerate()
            .map(|(k, n)| hbar.powf(k as f64 / 2.0) * n)
            .collect()
    }

    /// `sum_{k < l} hbar^{k/2} c_k(t)` for a stored snapshot.
    pub fn combined(&self, snap: &HierarchySnapshot, hbar: f64, l: usize) -> Result<BasisCoefficients> {
        if l == 0 || l > self.l {
            return Err(Error::InvalidInput(format!("l = {l} not in 1..={}", self.l)));
        }
        let mut out = BasisCoefficients::zeros(self.dim, self.j0 + 3 * (l - 1));
        for (k, ck) in snap.orders.iter().take(l).enumerate() {
            let w = hbar.powf(k as f64 / 2.0);
            for (o, v) in out.data.iter_mut().zip(&ck.data) {
                *o += v * w;
            }
        }
        Ok(out)
    }

    /// True when no stored entry and no attempted update lies beyond
    /// `|j| <= J + 3k`.
    pub fn sparsity_holds(&self) -> bool {
        self.sparsity_violations == 0
            && self.snapshots.iter().all(|s| {
                s.orders.iter().enumerate().all(|(k, c)| {
                    c.support <= self.j0 + 3 * k && c.effective_support().map_or(true, |e| e <= self.j0 + 3 * k)
                }) && s.parts.iter().enumerate().all(|(k, row)| {
                    row.iter().enumerate().all(|(pi, c)| {
                        let p = pi + 1;
                        c.effective_support().map_or(true, |e| e <= self.j0 + k + 2 * p)
                    })
                })
            })
    }

    /// Largest `||sum_p c_k^{[p]} - c_k||` over snapshots and resolved orders.
    pub fn telescoping_residual(&self) -> Result<f64> {
        let kp = self.p_resolved_upto.ok_or(Error::NotPResolved)?;
        let mut worst: f64 = 0.0;
        for s in &self.snapshots {
            for k in 1..=kp {
                let mut sum = BasisCoefficients::zeros(self.dim, self.j0 + 3 * k);
                for part in &s.parts[k] {
                    sum = sum.add(part);
                }
                let diff = sum.add(&s.orders[k].scaled(Complex64::new(-1.0, 0.0)));
                worst = worst.max(diff.norm());
            }
        }
        Ok(worst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("hierarchy serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d5: f64,
    pub delta: f64,
    pub n_probe: usize,
    /// True when the supremum over derivative orders is exact (polynomials).
    pub exact_probe: bool,
    /// Length of the time span used in `D5`.
    pub span: f64,
}

/// Default derivative order probed for `D1`.
pub fn default_probe(pot: &PotentialModel, expected_l: usize) -> usize {
    match pot.polynomial_degree() {
        Some(deg) => deg,
        None => (4 * expected_l + 8).min(MAX_GAUSSIAN_ORDER),
    }
}

fn d1_at(pot: &PotentialModel, a: &[f64], delta: f64, n_probe: usize) -> Result<f64> {
    let t = pot.taylor_coeffs(a, n_probe)?;
    let mut best: f64 = 0.0;
    for q in 0..=n_probe {
        let w = delta.powi(q as i32);
        for c in t.shell(q) {
            best = best.max(w * c.abs());
        }
    }
    Ok(best)
}

fn constants_from_samples(
    pot: &PotentialModel,
    states: impl Iterator<Item = ClassicalState>,
    delta: f64,
    n_probe: usize,
    span: f64,
) -> Result<BoundConstants> {
    let mut d1: f64 = 1.0;
    let mut d2: f64 = 1.0;
    let mut dim = pot.dim;
    for s in states {
        dim = s.dim();
        d1 = d1.max(d1_at(pot, &s.a, delta, n_probe)?);
        d2 = d2.max(std::f64::consts::SQRT_2 * dim as f64 / delta * linalg::spectral_norm(&s.a_mat));
    }
    let d3 = binomial(dim as u64 + 2, dim as u64 - 1) as f64;
    Ok(BoundConstants {
        d1,
        d2,
        d3,
        d5: 1.0 + d1 * d2 * d2 * span,
        delta,
        n_probe,
        exact_probe: pot.is_polynomial() && n_probe >= pot.polynomial_degree().unwrap_or(0),
        span,
    })
}

/// `D1, D2, D3, D5` sampled on the trajectory nodes.
pub fn bound_constants(traj: &Trajectory, pot: &PotentialModel, delta: f64, n_probe: usize) -> Result<BoundConstants> {
    let span = traj.t_end() - traj.t_start();
    constants_from_samples(pot, traj.nodes().iter().cloned(), delta, n_probe, span)
}

/// Same constants from `samples` uniformly spaced dense-output states.
pub fn bound_constants_sampled(
    traj: &Trajectory,
    pot: &PotentialModel,
    delta: f64,
    n_probe: usize,
    samples: usize,
) -> Result<BoundConstants> {
    let (t0, t1) = (traj.t_start(), traj.t_end());
    let it = (0..=samples).map(|i| traj.state_at(t0 + (t1 - t0) * i as f64 / samples as f64));
    constants_from_samples(pot, it, delta, n_probe, t1 - t0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub k: usize,
    pub p: Option<usize>,
    pub t: f64,
    pub norm: f64,
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub checks: Vec<BoundCheck>,
    pub max_ratio: f64,
    /// False when `D1` came from a finite derivative probe.
    pub exact_probe: bool,
}

impl BoundReport {
    fn from_checks(checks: Vec<BoundCheck>, exact_probe: bool) -> Self {
        let max_ratio = checks.iter().map(|c| c.ratio).fold(0.0, f64::max);
        BoundReport {
            checks,
            max_ratio,
            exact_probe,
        }
    }

    pub fn holds(&self) -> bool {
        self.max_ratio <= 1.0
    }
}

/// `((J+3k)!/J!)^{1/2} D2^k D3^k / k! (1 + D1 D2^2 t)^k`.
pub fn order_bound(j0: usize, k: usize, t: f64, b: &BoundConstants) -> f64 {
    let kf = k as i32;
    let ln = 0.5 * ln_factorial_ratio(j0 + 3 * k, j0) - ln_factorial_ratio(k, 0)
        + kf as f64 * (b.d2.ln() + b.d3.ln() + (1.0 + b.d1 * b.d2 * b.d2 * t).ln());
    ln.exp()
}

/// `C(k-1, p-1) D1^p D2^{k+2p} D3^k ((J+k+2p)!/J!)^{1/2} t^p / p!`.
pub fn part_bound(j0: usize, k: usize, p: usize, t: f64, b: &BoundConstants) -> f64 {
    let c = binomial(k as u64 - 1, p as u64 - 1) as f64;
    let ln = c.ln()
        + p as f64 * b.d1.ln()
        + (k + 2 * p) as f64 * b.d2.ln()
        + k as f64 * b.d3.ln()
        + 0.5 * ln_factorial_ratio(j0 + k + 2 * p, j0)
        - ln_factorial_ratio(p, 0);
    ln.exp() * t.powi(p as i32)
}

/// Checks `||c_k(t)||` against [`order_bound`] at every snapshot.
pub fn verify_order_bounds(h: &CoefficientHierarchy, b: &BoundConstants) -> BoundReport {
    let mut checks = Vec::new();
    for s in &h.snapshots {
        let t = s.t - h.t0;
        for (k, c) in s.orders.iter().enumerate() {
            let norm = c.norm();
            let bound = order_bound(h.j0, k, t, b) * if k == 0 { h.sup_norms[0] } else { 1.0 };
            checks.push(BoundCheck {
                k,
                p: None,
                t: s.t,
                norm,
                bound,
                ratio: if bound > 0.0 { norm / bound } else { 0.0 },
            });
        }
    }
    BoundReport::from_checks(checks, b.exact_probe)
}

/// Checks every resolved part `c_k^{[p]}` against [`part_bound`].
pub fn verify_p_decomposition(h: &CoefficientHierarchy, b: &BoundConstants) -> Result<BoundReport> {
    let kp = h.p_resolved_upto.ok_or(Error::NotPResolved)?;
    let mut checks = Vec::new();
    for s in &h.snapshots {
        let t = s.t - h.t0;
        for k in 1..=kp {
            for (pi, part) in s.parts[k].iter().enumerate() {
                let p = pi + 1;
                let norm = part.norm();
                let bound = part_bound(h.j0, k, p, t, b);
                let ratio = if bound > 0.0 {
                    norm / bound
                } else if norm == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                };
                checks.push(BoundCheck {
                    k,
                    p: Some(p),
                    t: s.t,
                    norm,
                    bound,
                    ratio,
                });
            }
        }
    }
    Ok(BoundReport::from_checks(checks, b.exact_probe))
}
