//! Classical and variational flow for `(a, eta, A, B, S)` with dense output.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::ode::{Dopri5, Segment, Tolerances};
use crate::potential::PotentialModel;

/// Smallest `|det A|` accepted as invertible.
pub const DET_THRESHOLD: f64 = 1e-300;
/// Largest change of `arg det A` tolerated across one accepted step.
pub const MAX_ARG_JUMP: f64 = std::f64::consts::FRAC_PI_2;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalState {
    pub t: f64,
    pub a: Vec<f64>,
    pub eta: Vec<f64>,
    pub a_mat: CMatrix,
    pub b_mat: CMatrix,
    pub s: f64,
}

impl ClassicalState {
    /// Standard initial data `A = B = I`, `S = 0`.
    pub fn standard(a: Vec<f64>, eta: Vec<f64>) -> Self {
        let d = a.len();
        ClassicalState {
            t: 0.0,
            a,
            eta,
            a_mat: linalg::identity(d),
            b_mat: linalg::identity(d),
            s: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn energy(&self, pot: &PotentialModel) -> f64 {
        0.5 * self.eta.iter().map(|p| p * p).sum::<f64>() + pot.value(&self.a)
    }

    pub fn cond1(&self) -> linalg::Cond1Residual {
        linalg::cond1_residual(&self.a_mat, &self.b_mat)
    }

    pub fn det_a(&self) -> Complex64 {
        linalg::det(&self.a_mat)
    }

    pub fn state_len(d: usize) -> usize {
        2 * d + 4 * d * d + 1
    }

    pub fn pack(&self) -> Vec<f64> {
        let d = self.dim();
        let mut y = Vec::with_capacity(Self::state_len(d));
        y.extend_from_slice(&self.a);
        y.extend_from_slice(&self.eta);
        let (ra, ia) = linalg::to_parts(&self.a_mat);
        let (rb, ib) = linalg::to_parts(&self.b_mat);
        y.extend(ra);
        y.extend(ia);
        y.extend(rb);
        y.extend(ib);
        y.push(self.s);
        y
    }

    pub fn unpack(d: usize, t: f64, y: &[f64]) -> Self {
        let dd = d * d;
        let o = 2 * d;
        ClassicalState {
            t,
            a: y[..d].to_vec(),
            eta: y[d..o].to_vec(),
            a_mat: linalg::from_parts(d, &y[o..o + dd], &y[o + dd..o + 2 * dd]),
            b_mat: linalg::from_parts(d, &y[o + 2 * dd..o + 3 * dd], &y[o + 3 * dd..o + 4 * dd]),
            s: y[o + 4 * dd],
        }
    }

    pub fn validate(&self, tol_sympl: f64) -> Result<()> {
        let d = self.dim();
        if d == 0 || self.eta.len() != d || self.a_mat.nrows() != d || self.b_mat.nrows() != d {
            return Err(Error::InvalidInput("inconsistent classical state dimensions".into()));
        }
        let r = self.cond1().max();
        if r > tol_sympl {
            return Err(Error::Cond1Drift {
                t: self.t,
                residual: r,
                bound: tol_sympl,
            });
        }
        let det = self.det_a().norm();
        if det < DET_THRESHOLD {
            return Err(Error::SingularA(det));
        }
        Ok(())
    }
}

/// Right-hand side of the coupled system in packed form.
pub fn flow_rhs(pot: &PotentialModel, d: usize, y: &[f64], dy: &mut [f64]) {
    let dd = d * d;
    let o = 2 * d;
    let taylor = pot
        .taylor_coeffs(&y[..d], 2)
        .expect("second-order Taylor coefficients are always available");
    let grad = taylor.gradient();
    let hess = taylor.hessian();
    for i in 0..d {
        dy[i] = y[d + i];
        dy[d + i] = -grad[i];
    }
    let (ra, ia, rb, ib) = (o, o + dd, o + 2 * dd, o + 3 * dd);
    for k in 0..dd {
        // dA/dt = iB
        dy[ra + k] = -y[ib + k];
        dy[ia + k] = y[rb + k];
    }
    for r in 0..d {
        for c in 0..d {
            // dB/dt = i V'' A
            let mut re = 0.0;
            let mut im = 0.0;
            for m in 0..d {
                let h = hess[(r, m)];
                re += h * y[ra + m * d + c];
                im += h * y[ia + m * d + c];
            }
            dy[rb + r * d + c] = -im;
            dy[ib + r * d + c] = re;
        }
    }
    let kin: f64 = y[d..o].iter().map(|p| p * p).sum::<f64>() * 0.5;
    dy[o + 4 * dd] = kin - taylor.value();
}

fn det_from_packed(d: usize, y: &[f64]) -> Complex64 {
    let o = 2 * d;
    let dd = d * d;
    linalg::det(&linalg::from_parts(d, &y[o..o + dd], &y[o + dd..o + 2 * dd]))
}

#[derive(Clone, Debug)]
pub struct FlowOptions {
    pub tol: f64,
    /// Bound on the relative admissibility residual is `cond1_factor * tol`.
    pub cond1_factor: f64,
    pub h_max: Option<f64>,
    pub max_steps: usize,
    /// The integrator runs at `tol * local_margin` so that the accumulated
    /// global error stays inside the `cond1_factor * tol` bound.
    pub local_margin: f64,
}

impl FlowOptions {
    pub fn new(tol: f64) -> Self {
        FlowOptions {
            tol,
            cond1_factor: 10.0,
            h_max: None,
            max_steps: 2_000_000,
            local_margin: 0.05,
        }
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = Some(h_max);
        self
    }

    fn cond1_bound(&self) -> f64 {
        self.cond1_factor * self.tol
    }
}

/// Accepted nodes, their continuous `arg det A`, and the dense-output
/// segments between consecutive nodes. Times are strictly increasing.
#[derive(Clone, Debug)]
pub struct Trajectory {
    dim: usize,
    nodes: Vec<ClassicalState>,
    packed: Vec<Vec<f64>>,
    arg_det: Vec<f64>,
    segments: Vec<Segment<f64>>,
    tol: f64,
}

/// Integrates the flow from `init.t` to `t_end` (either direction).
pub fn integrate_flow(
    pot: &PotentialModel,
    init: &ClassicalState,
    t_end: f64,
    opts: &FlowOptions,
) -> Result<Trajectory> {
    let d = init.dim();
    if pot.dim != d {
        return Err(Error::InvalidInput(format!(
            "potential dimension {} differs from state dimension {d}",
            pot.dim
        )));
    }
    init.validate(opts.cond1_bound().max(1e-8))?;
    let init_arg = init.det_a().arg();
    let y0 = init.pack();
    let mut tol = Tolerances::new(opts.tol * opts.local_margin);
    tol.h_max = opts.h_max;
    tol.max_steps = opts.max_steps;
    let mut solver = Dopri5::new(move |_t, y: &[f64], dy: &mut [f64]| flow_rhs(pot, d, y, dy), init.t, y0.clone(), tol);

    let mut nodes = vec![init.clone()];
    let mut packed = vec![y0];
    let mut args = vec![init_arg];
    let mut segments = Vec::new();
    let bound = opts.cond1_bound();
    while solver.t() != t_end {
        let prev_det = det_from_packed(d, packed.last().unwrap());
        let mut veto_det = 0.0;
        let seg = solver.step(t_end, |_, y1| {
            let det = det_from_packed(d, y1);
            veto_det = det.norm();
            det.norm() < DET_THRESHOLD || linalg::wrap_angle(det.arg() - prev_det.arg()).abs() <= MAX_ARG_JUMP
        })?;
        if veto_det < DET_THRESHOLD {
            return Err(Error::SingularA(veto_det));
        }
        let y = solver.y().to_vec();
        let state = ClassicalState::unpack(d, solver.t(), &y);
        let res = state.cond1().max();
        if res > bound {
            return Err(Error::Cond1Drift {
                t: state.t,
                residual: res,
                bound,
            });
        }
        let det = state.det_a();
        let arg = args.last().unwrap() + linalg::wrap_angle(det.arg() - prev_det.arg());
        nodes.push(state);
        packed.push(y);
        args.push(arg);
        segments.push(seg);
    }
    let mut traj = Trajectory {
        dim: d,
        nodes,
        packed,
        arg_det: args,
        segments,
        tol: opts.tol,
    };
    if t_end < init.t {
        traj.reverse();
    }
    Ok(traj)
}

impl Trajectory {
    fn reverse(&mut self) {
        self.nodes.reverse();
        self.packed.reverse();
        self.arg_det.reverse();
        self.segments.reverse();
    }

    /// Joins a backward trajectory ending at the common start of `forward`.
    pub fn concat(backward: Trajectory, forward: Trajectory) -> Result<Trajectory> {
        let tb = backward.t_end();
        if tb != forward.t_start() || backward.dim != forward.dim {
            return Err(Error::InvalidInput("trajectories do not share an endpoint".into()));
        }
        let mut out = backward;
        out.nodes.pop();
        out.packed.pop();
        let shift = forward.arg_det[0] - out.arg_det.pop().unwrap();
        for a in out.arg_det.iter_mut() {
            *a += shift;
        }
        out.nodes.extend(forward.nodes);
        out.packed.extend(forward.packed);
        out.arg_det.extend(forward.arg_det);
        out.segments.extend(forward.segments);
        out.tol = out.tol.max(forward.tol);
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn nodes(&self) -> &[ClassicalState] {
        &self.nodes
    }

    pub fn arg_det(&self) -> &[f64] {
        &self.arg_det
    }

    pub fn t_start(&self) -> f64 {
        self.nodes[0].t
    }

    pub fn t_end(&self) -> f64 {
        self.nodes.last().unwrap().t
    }

    pub fn covers(&self, t: f64) -> bool {
        t >= self.t_start() && t <= self.t_end()
    }

    fn locate(&self, t: f64) -> std::result::Result<usize, usize> {
        self.nodes.binary_search_by(|n| n.t.partial_cmp(&t).unwrap())
    }

    /// Packed state at `t`; stored nodes are returned verbatim.
    pub fn packed_at(&self, t: f64, out: &mut [f64]) {
        match self.locate(t) {
            Ok(i) => out.copy_from_slice(&self.packed[i]),
            Err(i) => {
                let i = i.clamp(1, self.nodes.len() - 1);
                self.segments[i - 1].eval_into(t, out);
            }
        }
    }

    pub fn state_at(&self, t: f64) -> ClassicalState {
        let mut y = vec![0.0; ClassicalState::state_len(self.dim)];
        self.packed_at(t, &mut y);
        match self.locate(t) {
            Ok(i) => self.nodes[i].clone(),
            Err(_) => ClassicalState::unpack(self.dim, t, &y),
        }
    }

    /// Continuous argument of `det A(t)`.
    pub fn arg_det_at(&self, t: f64) -> f64 {
        match self.locate(t) {
            Ok(i) => self.arg_det[i],
            Err(i) => {
                let i = i.clamp(1, self.nodes.len() - 1);
                let s = self.state_at(t);
                let near = if (t - self.nodes[i - 1].t).abs() <= (self.nodes[i].t - t).abs() {
                    i - 1
                } else {
                    i
                };
                self.arg_det[near] + linalg::wrap_angle(s.det_a().arg() - self.nodes[near].det_a().arg())
            }
        }
    }

    pub fn max_cond1_residual(&self) -> f64 {
        self.nodes.iter().map(|n| n.cond1().max()).fold(0.0, f64::max)
    }

    pub fn max_spectral_norm_a(&self) -> f64 {
        self.nodes
            .iter()
            .map(|n| linalg::spectral_norm(&n.a_mat))
            .fold(0.0, f64::max)
    }

    pub fn to_record(&self) -> TrajectoryRecord {
        let mut r = TrajectoryRecord {
            dim: self.dim,
            ..Default::default()
        };
        for (n, arg) in self.nodes.iter().zip(&self.arg_det) {
            let (ra, ia) = linalg::to_parts(&n.a_mat);
            let (rb, ib) = linalg::to_parts(&n.b_mat);
            r.t.push(n.t);
            r.a.push(n.a.clone());
            r.eta.push(n.eta.clone());
            r.re_a.push(ra);
            r.im_a.push(ia);
            r.re_b.push(rb);
            r.im_b.push(ib);
            r.s.push(n.s);
            r.arg_det_a.push(*arg);
        }
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("trajectory serializes")
    }
}

/// Node data of a trajectory in column form (matrices row-major).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub dim: usize,
    pub t: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub eta: Vec<Vec<f64>>,
    pub re_a: Vec<Vec<f64>>,
    pub im_a: Vec<Vec<f64>>,
    pub re_b: Vec<Vec<f64>>,
    pub im_b: Vec<Vec<f64>>,
    pub s: Vec<f64>,
    pub arg_det_a: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn state(&self, i: usize) -> ClassicalState {
        let d = self.dim;
        ClassicalState {
            t: self.t[i],
            a: self.a[i].clone(),
            eta: self.eta[i].clone(),
            a_mat: linalg::from_parts(d, &self.re_a[i], &self.im_a[i]),
            b_mat: linalg::from_parts(d, &self.re_b[i], &self.im_b[i]),
            s: self.s[i],
        }
    }
}

/// Maximum over sampled times of
/// `||A(t) - (da/da0) A0 - i (da/deta0) B0|| / max(1, ||A(t)||)` with the
/// Jacobians from central differences of the flow at step `eps`.
pub fn linearization_check(pot: &PotentialModel, init: &ClassicalState, t_end: f64, eps: f64) -> Result<f64> {
    let d = init.dim();
    let opts = FlowOptions::new(1e-13);
    let base = integrate_flow(pot, init, t_end, &opts)?;
    let samples = 16;
    let times: Vec<f64> = (1..=samples)
        .map(|i| init.t + (t_end - init.t) * i as f64 / samples as f64)
        .collect();
    // jac[s][col] = da(t_s)/dz_col, z = (a0, eta0)
    let mut jac = vec![vec![vec![0.0; d]; 2 * d]; samples];
    for col in 0..2 * d {
        let mut plus = init.clone();
        let mut minus = init.clone();
        if col < d {
            plus.a[col] += eps;
            minus.a[col] -= eps;
        } else {
            plus.eta[col - d] += eps;
            minus.eta[col - d] -= eps;
        }
        let tp = integrate_flow(pot, &plus, t_end, &opts)?;
        let tm = integrate_flow(pot, &minus, t_end, &opts)?;
        for (s, &t) in times.iter().enumerate() {
            let ap = tp.state_at(t).a;
            let am = tm.state_at(t).a;
            for r in 0..d {
                jac[s][col][r] = (ap[r] - am[r]) / (2.0 * eps);
            }
        }
    }
    let mut worst: f64 = 0.0;
    let i = Complex64::new(0.0, 1.0);
    for (s, &t) in times.iter().enumerate() {
        let st = base.state_at(t);
        let ja = CMatrix::from_fn(d, d, |r, c| Complex64::new(jac[s][c][r], 0.0));
        let je = CMatrix::from_fn(d, d, |r, c| Complex64::new(jac[s][d + c][r], 0.0));
        let pred = ja * &init.a_mat + je * &init.b_mat * i;
        let dev = linalg::frobenius(&(&st.a_mat - pred)) / linalg::frobenius(&st.a_mat).max(1.0);
        worst = worst.max(dev);
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovFit {
    /// Prefactor `N` in `||A(t)|| <= N exp(lambda t)`.
    pub n: f64,
    pub lambda: f64,
    pub r_squared: f64,
}

/// Least-squares fit `log ||A(t)|| = log N + lambda t` over the second half
/// of the trajectory, sampled uniformly through the dense output.
///
/// Rejects non-growing (`lambda <= 1e-3`) and polynomially growing `||A||`
/// (a log-log fit beating the exponential one).
pub fn lyapunov_estimate(traj: &Trajectory) -> Result<LyapunovFit> {
    let (t0, t1) = (traj.t_start(), traj.t_end());
    let mid = 0.5 * (t0 + t1);
    let n = 200;
    let ts: Vec<f64> = (0..=n).map(|i| mid + (t1 - mid) * i as f64 / n as f64).collect();
    let logs: Vec<f64> = ts
        .iter()
        .map(|&t| linalg::spectral_norm(&traj.state_at(t).a_mat).ln())
        .collect();
    let exp_fit = crate::fit::linear_fit(&ts, &logs);
    let (lambda, intercept, r2, sse_exp) = (exp_fit.slope, exp_fit.intercept, exp_fit.r_squared, exp_fit.sse);
    let fit = LyapunovFit {
        n: intercept.exp(),
        lambda,
        r_squared: r2,
    };
    if lambda <= 1e-3 {
        return Err(Error::FitDegenerate {
            lambda,
            reason: "||A(t)|| is not growing".into(),
        });
    }
    if mid > 0.0 {
        let lt: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
        let sse_pow = crate::fit::linear_fit(&lt, &logs).sse;
        if sse_pow < sse_exp {
            return Err(Error::FitDegenerate {
                lambda,
                reason: "growth is polynomial rather than exponential".into(),
            });
        }
    }
    Ok(fit)
}
