//! Scattering asymptotics for short-range potentials: free-motion limits of
//! the classical data, limits `c_k(+inf)` of the coefficient cascade and the
//! resulting action on incoming coefficient vectors.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::BasisCoefficients;
use crate::classical::{integrate_flow, ClassicalState, FlowOptions, Trajectory};
use crate::error::{Error, Result};
use crate::hierarchy::{integrate_hierarchy, HierarchyOptions};
use crate::linalg::{self, CMatrix};
use crate::potential::PotentialModel;
use crate::truncation::fixed_l;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Horizon at which extraction starts.
const FIRST_HORIZON: f64 = 10.0;
/// Horizons beyond this are treated as non-convergent.
const MAX_HORIZON: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Past,
    Future,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Past => -1.0,
            Side::Future => 1.0,
        }
    }
}

/// Free-motion data `(a, eta, A, B, S)` such that the orbit approaches
/// `a + eta t`, `A + i B t` and `S + t |eta|^2 / 2` as `t -> +-inf`.
/// Matrices are stored as row-major real and imaginary parts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticData {
    pub side: Side,
    pub a: Vec<f64>,
    pub eta: Vec<f64>,
    pub a_re: Vec<f64>,
    pub a_im: Vec<f64>,
    pub b_re: Vec<f64>,
    pub b_im: Vec<f64>,
    pub s: f64,
    /// Time of the last extraction.
    pub t_extract: f64,
    /// Difference between the last two extractions.
    pub residual: f64,
}

impl AsymptoticData {
    fn from_state(side: Side, st: &ClassicalState) -> Self {
        let t = st.t;
        let i_t = Complex64::new(0.0, t);
        let a_asym = &st.a_mat - st.b_mat.map(|z| z * i_t);
        let (a_re, a_im) = linalg::to_parts(&a_asym);
        let (b_re, b_im) = linalg::to_parts(&st.b_mat);
        let p2: f64 = st.eta.iter().map(|p| p * p).sum();
        AsymptoticData {
            side,
            a: st.a.iter().zip(&st.eta).map(|(x, p)| x - p * t).collect(),
            eta: st.eta.clone(),
            a_re,
            a_im,
            b_re,
            b_im,
            s: st.s - 0.5 * t * p2,
            t_extract: t,
            residual: f64::INFINITY,
        }
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn a_mat(&self) -> CMatrix {
        linalg::from_parts(self.dim(), &self.a_re, &self.a_im)
    }

    pub fn b_mat(&self) -> CMatrix {
        linalg::from_parts(self.dim(), &self.b_re, &self.b_im)
    }

    /// The free orbit evaluated at time `t`.
    pub fn free_state(&self, t: f64) -> ClassicalState {
        let b = self.b_mat();
        let i_t = Complex64::new(0.0, t);
        let p2: f64 = self.eta.iter().map(|p| p * p).sum();
        ClassicalState {
            t,
            a: self.a.iter().zip(&self.eta).map(|(x, p)| x + p * t).collect(),
            eta: self.eta.clone(),
            a_mat: self.a_mat() + b.map(|z| z * i_t),
            b_mat: b,
            s: self.s + 0.5 * t * p2,
        }
    }

    /// Largest componentwise difference to another extraction.
    pub fn distance(&self, other: &AsymptoticData) -> f64 {
        let vmax = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        vmax(&self.a, &other.a)
            .max(vmax(&self.eta, &other.eta))
            .max(linalg::frobenius(&(self.a_mat() - other.a_mat())))
            .max(linalg::frobenius(&(self.b_mat() - other.b_mat())))
            .max((self.s - other.s).abs())
    }

    pub fn cond1_residual(&self) -> f64 {
        linalg::cond1_residual(&self.a_mat(), &self.b_mat()).max()
    }
}

/// Length the orbit may cross in one step near the origin; further out the
/// admissible length grows like `|a| / 10`, matching the `<x>`-scaled decay.
const STEP_LENGTH: f64 = 0.5;
/// Steps per chunk of constant step bound.
const CHUNK_STEPS: f64 = 64.0;

fn flow_options(tol: f64) -> FlowOptions {
    FlowOptions::new((tol * 1e-3).clamp(1e-13, 1e-8))
}

fn step_bound(st: &ClassicalState, span: f64) -> f64 {
    let speed = st.eta.iter().map(|p| p * p).sum::<f64>().sqrt().max(1e-3);
    // smallest |a| along the free line over the next `span`
    let p2 = speed * speed;
    let ap: f64 = st.a.iter().zip(&st.eta).map(|(x, p)| x * p).sum();
    let s_min = (-ap / p2).clamp(span.min(0.0), span.max(0.0));
    let r = st
        .a
        .iter()
        .zip(&st.eta)
        .map(|(x, p)| (x + p * s_min).powi(2))
        .sum::<f64>()
        .sqrt();
    STEP_LENGTH * (0.2 * r).max(1.0) / speed
}

/// Flow from `from` to `t_end` in chunks whose step bound follows the
/// distance of the orbit from the origin.
fn integrate_chunked(pot: &PotentialModel, from: &ClassicalState, t_end: f64, tol: f64) -> Result<Trajectory> {
    let dir = if t_end >= from.t { 1.0 } else { -1.0 };
    let base = flow_options(tol);
    let mut state = from.clone();
    let mut out: Option<Trajectory> = None;
    loop {
        let remaining = t_end - state.t;
        let mut h = step_bound(&state, remaining);
        h = h.min(step_bound(&state, dir * h * CHUNK_STEPS));
        let t_next = if (h * CHUNK_STEPS) >= remaining.abs() {
            t_end
        } else {
            state.t + dir * h * CHUNK_STEPS
        };
        let piece = integrate_flow(pot, &state, t_next, &base.clone().with_h_max(h))?;
        state = piece.state_at(t_next);
        out = Some(match out {
            None => piece,
            Some(acc) if dir > 0.0 => Trajectory::concat(acc, piece)?,
            Some(acc) => Trajectory::concat(piece, acc)?,
        });
        if t_next == t_end {
            return Ok(out.unwrap());
        }
    }
}

fn endpoint(pot: &PotentialModel, from: &ClassicalState, t: f64, tol: f64) -> Result<ClassicalState> {
    Ok(integrate_chunked(pot, from, t, tol)?.state_at(t))
}

fn check_energy(pot: &PotentialModel, init: &ClassicalState, tol: f64) -> Result<()> {
    let e = init.energy(pot);
    if e <= tol {
        return Err(Error::NoConvergence(format!(
            "energy {e:e} is not above the asymptotic value 0; the orbit cannot escape"
        )));
    }
    Ok(())
}

/// True when `|a|` grows in the direction of integration; an orbit still
/// approaching the origin has not finished interacting.
fn receding(st: &ClassicalState, sign: f64) -> bool {
    let ap: f64 = st.a.iter().zip(&st.eta).map(|(x, p)| x * p).sum();
    sign * ap > 0.0
}

/// Extracts the free-motion limit on one side by integrating to increasing
/// `|t|` until extractions at `t` and `2t` agree within `tol`.
pub fn classical_asymptotics(pot: &PotentialModel, init: &ClassicalState, side: Side, tol: f64) -> Result<AsymptoticData> {
    pot.decay.ok_or(Error::MissingDecayMetadata)?;
    check_energy(pot, init, tol)?;
    let sign = side.sign();
    let mut horizon = FIRST_HORIZON;
    let mut state = endpoint(pot, init, init.t + sign * horizon, tol)?;
    let mut prev = AsymptoticData::from_state(side, &state);
    while horizon <= MAX_HORIZON {
        horizon *= 2.0;
        state = endpoint(pot, &state, init.t + sign * horizon, tol)?;
        let mut next = AsymptoticData::from_state(side, &state);
        let r = next.distance(&prev);
        next.residual = r;
        if r < tol && receding(&state, sign) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::NoConvergence(format!(
        "extractions still differ by {:e} at |t| = {horizon}; trapped orbit or exceptional data",
        prev.residual
    )))
}

/// `int_t^inf <s>^{-beta} ds` for `beta > 1`, via `s = sinh u`.
pub fn tail_integral(beta: f64, t: f64) -> f64 {
    assert!(beta > 1.0, "tail integral diverges for beta <= 1");
    // integrand cosh(u)^{1 - beta} on [asinh t, inf)
    let u0 = t.asinh();
    let decay = beta - 1.0;
    let u_end = u0.max(0.0) + 60.0 / decay + 40.0;
    let n = 20_000;
    let h = (u_end - u0) / n as f64;
    let f = |u: f64| u.cosh().powf(1.0 - beta);
    let mut sum = f(u0) + f(u_end);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(u0 + h * i as f64);
    }
    sum * h / 3.0
}

/// Start time `t_-` with `<t_->^{-beta} v0 < 0.01 tol`.
pub fn start_time(beta: f64, v0: f64, tol: f64) -> f64 {
    let r: f64 = v0 / (0.01 * tol);
    let bracket = r.powf(1.0 / beta);
    let t = if bracket > 1.0 {
        (bracket * bracket - 1.0).sqrt()
    } else {
        0.0
    };
    -(t.max(1.0) * 1.000_001)
}

/// Frozen limits `c_k(+inf)` for `k < l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientLimits {
    pub t_start: f64,
    /// Horizon `t`; limits are taken at `2t`.
    pub horizon: f64,
    pub limits: Vec<BasisCoefficients>,
    /// `max_k ||c_k(2t) - c_k(t)||`.
    pub cauchy_residual: f64,
    /// `v0 int_t^inf <s>^{-beta} ds sum_k ||c_k(t)||`.
    pub tail_bound: f64,
    /// Outgoing free-motion data extracted from the same trajectory.
    pub outgoing: AsymptoticData,
}

/// Integrates the cascade from `t_-` (where the incoming free orbit has
/// not yet felt the potential) with `c_k(t_-) = 0`, `k >= 1`, doubling the
/// horizon until both the tail bound and the Cauchy residual are below `tol`.
pub fn coefficient_limits(
    pot: &PotentialModel,
    incoming: &AsymptoticData,
    c0: &BasisCoefficients,
    l: usize,
    tol: f64,
) -> Result<CoefficientLimits> {
    let decay = pot.decay.ok_or(Error::MissingDecayMetadata)?;
    if incoming.side != Side::Past {
        return Err(Error::InvalidInput("incoming data must describe the past".into()));
    }
    let t_start = start_time(decay.beta, decay.v0, tol);
    let start = incoming.free_state(t_start);
    check_energy(pot, &start, tol)?;
    let mut horizon = -t_start;
    let mut last_residual = f64::INFINITY;
    while horizon <= MAX_HORIZON {
        let traj = integrate_chunked(pot, &start, 2.0 * horizon, tol)?;
        let hopts = HierarchyOptions {
            t0: Some(t_start),
            ..HierarchyOptions::new((tol * 1e-2).clamp(1e-12, 1e-6), vec![horizon, 2.0 * horizon])
        };
        let h = integrate_hierarchy(&traj, pot, c0, l, &hopts)?;
        let (s1, s2) = (&h.snapshots[0], &h.snapshots[1]);
        let cauchy = s1
            .orders
            .iter()
            .zip(&s2.orders)
            .map(|(a, b)| b.add(&a.scaled(Complex64::new(-1.0, 0.0))).norm())
            .fold(0.0, f64::max);
        let norms: f64 = s1.orders.iter().map(|c| c.norm()).sum();
        let tail = if decay.v0 == 0.0 {
            0.0
        } else {
            decay.v0 * tail_integral(decay.beta.max(1.0 + 1e-9), horizon) * norms
        };
        if cauchy < tol && tail < tol {
            let mut outgoing = AsymptoticData::from_state(Side::Future, &traj.state_at(2.0 * horizon));
            let mid = AsymptoticData::from_state(Side::Future, &traj.state_at(horizon));
            outgoing.residual = outgoing.distance(&mid);
            return Ok(CoefficientLimits {
                t_start,
                horizon,
                limits: s2.orders.clone(),
                cauchy_residual: cauchy,
                tail_bound: tail,
                outgoing,
            });
        }
        last_residual = cauchy.max(tail);
        horizon *= 2.0;
    }
    Err(Error::NoConvergence(format!(
        "coefficient limits not settled (residual {last_residual:e}) by t = {horizon}"
    )))
}

/// Incoming asymptotic state: free-motion data and coefficients `c_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncomingState {
    pub data: AsymptoticData,
    pub coeffs: BasisCoefficients,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatteringReport {
    pub schema_version: u32,
    pub dim: usize,
    pub hbar: f64,
    pub g: f64,
    pub l: usize,
    pub incoming: AsymptoticData,
    pub outgoing: AsymptoticData,
    /// `c_k(+inf)` for `k < l`.
    pub order_limits: Vec<BasisCoefficients>,
    /// `sum_k hbar^{k/2} c_k(+inf)`, supported on `|j| <= J + 3l - 3`.
    pub out_coefficients: BasisCoefficients,
    /// `| ||out|| - 1 |`.
    pub unitarity_deviation: f64,
    pub cauchy_residual: f64,
    pub tail_bound: f64,
    pub t_start: f64,
    pub horizon: f64,
    /// Set when `d < 3`, where the convergence argument is not available.
    pub low_dimension_caveat: bool,
}

impl ScatteringReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Maps an incoming asymptotic state to its outgoing image with
/// `l = floor(g / hbar)` orders.
pub fn smatrix_apply(input: &IncomingState, pot: &PotentialModel, hbar: f64, g: f64, tol: f64) -> Result<ScatteringReport> {
    let d = input.data.dim();
    if input.coeffs.dim != d || pot.dim != d {
        return Err(Error::FrameMismatch("dimension of coefficients, data and potential differ".into()));
    }
    if !(hbar > 0.0) || !(g > 0.0) {
        return Err(Error::InvalidInput("hbar and g must be positive".into()));
    }
    let n = input.coeffs.norm();
    if (n * n - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInput(format!("incoming coefficients have squared norm {}", n * n)));
    }
    let l = fixed_l(g, hbar);
    let lim = coefficient_limits(pot, &input.data, &input.coeffs, l, tol)?;
    let mut out = BasisCoefficients::zeros(d, input.coeffs.support + 3 * (l - 1));
    for (k, ck) in lim.limits.iter().enumerate() {
        out = out.add(&ck.scaled(Complex64::new(hbar.powf(k as f64 / 2.0), 0.0)));
    }
    let unitarity_deviation = (out.norm() - 1.0).abs();
    Ok(ScatteringReport {
        schema_version: REPORT_SCHEMA_VERSION,
        dim: d,
        hbar,
        g,
        l,
        incoming: input.data.clone(),
        outgoing: lim.outgoing,
        order_limits: lim.limits,
        out_coefficients: out,
        unitarity_deviation,
        cauchy_residual: lim.cauchy_residual,
        tail_bound: lim.tail_bound,
        t_start: lim.t_start,
        horizon: lim.horizon,
        low_dimension_caveat: d < 3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiindex::MultiIndex;
    use crate::potential::DecayMetadata;

    fn barrier() -> PotentialModel {
        PotentialModel::gaussian_barrier_1d(4.0, 1.0).with_decay(DecayMetadata {
            beta: 4.0,
            v0: 40.0,
            v1: 2.0,
        })
    }

    #[test]
    fn barrier_decay_metadata_holds_on_samples() {
        let worst = barrier().decay_check(-30.0, 30.0, 601, 12).unwrap();
        assert!(worst <= 1.0, "worst ratio {worst}");
    }

    #[test]
    fn free_motion_is_its_own_limit() {
        let pot = PotentialModel::free(1);
        let init = ClassicalState::standard(vec![0.5], vec![1.5]);
        let fut = classical_asymptotics(&pot, &init, Side::Future, 1e-10).unwrap();
        assert!((fut.a[0] - 0.5).abs() < 1e-12);
        assert!((fut.eta[0] - 1.5).abs() < 1e-14);
        assert!(fut.s.abs() < 1e-12);
        assert!((fut.a_mat() - init.a_mat.clone()).norm() < 1e-12);
    }

    #[test]
    fn missing_decay_is_reported() {
        let pot = PotentialModel::gaussian_barrier_1d(4.0, 1.0);
        let init = ClassicalState::standard(vec![-10.0], vec![3.0]);
        assert_eq!(
            classical_asymptotics(&pot, &init, Side::Future, 1e-8),
            Err(Error::MissingDecayMetadata)
        );
    }

    #[test]
    fn transmitted_and_reflected_orbits() {
        let pot = barrier();
        let tr = ClassicalState::standard(vec![-10.0], vec![3.0]);
        let out = classical_asymptotics(&pot, &tr, Side::Future, 1e-8).unwrap();
        assert!(out.residual < 1e-8);
        assert!(out.t_extract <= 80.0);
        assert!((out.eta[0] - 3.0).abs() < 1e-8);
        let rf = ClassicalState::standard(vec![-10.0], vec![2.0]);
        let out = classical_asymptotics(&pot, &rf, Side::Future, 1e-8).unwrap();
        assert!((out.eta[0] + 2.0).abs() < 1e-8);
        assert!(out.cond1_residual() < 1e-8);
    }

    #[test]
    fn trapped_orbit_does_not_converge() {
        let pot = PotentialModel::gaussian_barrier_1d(-1.0, 1.0).with_decay(DecayMetadata {
            beta: 4.0,
            v0: 10.0,
            v1: 2.0,
        });
        let init = ClassicalState::standard(vec![0.0], vec![0.5]);
        assert!(matches!(
            classical_asymptotics(&pot, &init, Side::Future, 1e-8),
            Err(Error::NoConvergence(_))
        ));
    }

    #[test]
    fn tail_integral_matches_closed_form() {
        // beta = 2: int_t^inf ds / (1 + s^2) = pi/2 - atan t
        for &t in &[-3.0, 0.0, 1.0, 10.0] {
            let exact = std::f64::consts::FRAC_PI_2 - f64::atan(t);
            assert!((tail_integral(2.0, t) - exact).abs() < 1e-10);
        }
        // beta = 3: int_t^inf (1 + s^2)^{-3/2} ds = 1 - t / sqrt(1 + t^2)
        let t: f64 = 2.0;
        assert!((tail_integral(3.0, t) - (1.0 - t / (1.0 + t * t).sqrt())).abs() < 1e-10);
    }

    #[test]
    fn free_scattering_is_identity() {
        let pot = PotentialModel::free(1);
        let init = ClassicalState::standard(vec![0.0], vec![1.0]);
        let data = AsymptoticData::from_state(Side::Past, &init);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let coeffs = BasisCoefficients::from_entries(
            1,
            &[
                (MultiIndex::new(vec![0]), Complex64::new(s, 0.0)),
                (MultiIndex::new(vec![2]), Complex64::new(0.0, s)),
            ],
        )
        .unwrap();
        let rep = smatrix_apply(&IncomingState { data, coeffs: coeffs.clone() }, &pot, 0.1, 0.3, 1e-8).unwrap();
        for j in crate::multiindex::enumerate_upto(1, rep.out_coefficients.support) {
            assert_eq!(rep.out_coefficients.get(&j), coeffs.get(&j));
        }
        assert_eq!(rep.unitarity_deviation, (coeffs.norm() - 1.0).abs());
        assert!(rep.outgoing.s.abs() < 1e-12);
        assert!(rep.low_dimension_caveat);
    }
}
