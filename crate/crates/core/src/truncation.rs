//! Truncation order selection, wavefunction assembly, residuals,
//! localization masses, and Ehrenfest-time schedules.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisCoefficients, WavepacketFrame};
use crate::classical::Trajectory;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::hierarchy::{CoefficientHierarchy, HierarchySnapshot};
use crate::multiindex::{Layout, MultiIndex};
use crate::potential::PotentialModel;

/// Guards `g / hbar` against representation error (`0.3 / 0.1 < 3`).
const FLOOR_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TruncationMode {
    FixedG { g: f64 },
    Empirical,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationPlan {
    pub mode: TruncationMode,
    pub l: usize,
    pub hbar: f64,
}

/// `max(1, floor(g / hbar))`.
pub fn fixed_l(g: f64, hbar: f64) -> usize {
    ((g / hbar + FLOOR_SLACK).floor() as usize).max(1)
}

/// Number of orders to keep from a profile `p_k = hbar^{k/2} sup_t ||c_k||`:
/// follow the strictly decreasing run starting at `k = 1` to its smallest
/// term `m` and keep the orders `0 .. m-1`.
pub fn empirical_l(profile: &[f64]) -> Result<usize> {
    if profile.len() < 2 {
        return Ok(1);
    }
    let mut m = 1;
    while m + 1 < profile.len() && profile[m + 1] < profile[m] {
        m += 1;
    }
    if m == 1 && profile.len() > 2 && profile[1] > 0.0 && profile[2] > profile[1] {
        return Err(Error::DegenerateProfile);
    }
    Ok(m)
}

pub fn choose_l(mode: TruncationMode, hbar: f64, profile: Option<&[f64]>) -> Result<TruncationPlan> {
    if hbar <= 0.0 {
        return Err(Error::InvalidInput("hbar must be positive".into()));
    }
    let l = match mode {
        TruncationMode::FixedG { g } => fixed_l(g, hbar),
        TruncationMode::Empirical => {
            let p = profile.ok_or_else(|| Error::InvalidInput("empirical mode needs a norm profile".into()))?;
            empirical_l(p)?
        }
    };
    Ok(TruncationPlan { mode, l, hbar })
}

/// Per-order layers `e^{iS/hbar} sum_j c_{k,j} phi_j(x)` at the points.
pub fn layer_values(
    h: &CoefficientHierarchy,
    snap: &HierarchySnapshot,
    frame: &WavepacketFrame,
    l: usize,
    points: &[Vec<f64>],
) -> Result<Vec<Vec<Complex64>>> {
    if frame.dim() != h.dim {
        return Err(Error::FrameMismatch(format!(
            "hierarchy of dimension {} on a frame of dimension {}",
            h.dim,
            frame.dim()
        )));
    }
    if l == 0 || l > h.l {
        return Err(Error::InvalidInput(format!("l = {l} not in 1..={}", h.l)));
    }
    let layout = Layout::new(h.dim, h.j0 + 3 * (l - 1));
    let vals = frame.evaluate_basis_with(&layout, points)?;
    let phase = frame.phase();
    Ok(snap
        .orders
        .iter()
        .take(l)
        .map(|c| vals.combine(&c.data).into_iter().map(|z| z * phase).collect())
        .collect())
}

/// `sum_{k<l} hbar^{k/2} layer_k`.
pub fn sum_layers(layers: &[Vec<Complex64>], hbar: f64, l: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); layers[0].len()];
    for (k, layer) in layers.iter().take(l).enumerate() {
        let w = hbar.powf(k as f64 / 2.0);
        for (o, v) in out.iter_mut().zip(layer) {
            *o += v * w;
        }
    }
    out
}

/// `e^{iS/hbar} sum_j (sum_{k<l} hbar^{k/2} c_{k,j}(t)) phi_j(x)`.
pub fn assemble_wavefunction(
    h: &CoefficientHierarchy,
    snap: &HierarchySnapshot,
    frame: &WavepacketFrame,
    l: usize,
    points: &[Vec<f64>],
) -> Result<Vec<Complex64>> {
    let layers = layer_values(h, snap, frame, l, points)?;
    Ok(sum_layers(&layers, frame.hbar, l))
}

/// Grid values of `-e^{iS/hbar} sum_{k<l} hbar^{k/2} W^{(l+1-k)}(x) psi_k(x)`
/// with `W^{(q)}` the Taylor remainder of `V` about `a(t)` beyond degree `q`.
pub fn residual_values(
    h: &CoefficientHierarchy,
    snap: &HierarchySnapshot,
    frame: &WavepacketFrame,
    pot: &PotentialModel,
    l: usize,
    points: &[Vec<f64>],
) -> Result<Vec<Complex64>> {
    let layers = layer_values(h, snap, frame, l, points)?;
    let taylor = pot.taylor_coeffs(&frame.a, l + 1)?;
    let hbar = frame.hbar;
    let mut out = vec![Complex64::new(0.0, 0.0); points.len()];
    for (k, layer) in layers.iter().enumerate() {
        let q = l + 1 - k;
        let w = hbar.powf(k as f64 / 2.0);
        for ((o, v), x) in out.iter_mut().zip(layer).zip(points) {
            let rem = pot.taylor_remainder(&taylor, &frame.a, q, x);
            *o -= v * (rem * w);
        }
    }
    Ok(out)
}

/// Grid `L^2` norm of the residual; the grid is refined once and a relative
/// disagreement above 10% is reported as [`Error::GridTooCoarse`].
pub fn residual_norm(
    h: &CoefficientHierarchy,
    snap: &HierarchySnapshot,
    frame: &WavepacketFrame,
    pot: &PotentialModel,
    l: usize,
    grid: &GridSpec,
) -> Result<f64> {
    let coarse = grid.norm(&residual_values(h, snap, frame, pot, l, &grid.points())?);
    let fine_grid = grid.refined();
    let fine = fine_grid.norm(&residual_values(h, snap, frame, pot, l, &fine_grid.points())?);
    let scale = fine.abs().max(1e-300);
    let change = (coarse - fine).abs() / scale;
    if fine > 1e-14 && change > 0.1 {
        return Err(Error::GridTooCoarse { relative_change: change });
    }
    Ok(fine)
}

/// Error bound `hbar^{-1} int ||xi_l(s)|| ds` by the trapezoid rule over
/// the stored snapshots (which should start at the initial time).
pub fn integrated_residual(
    h: &CoefficientHierarchy,
    traj: &Trajectory,
    pot: &PotentialModel,
    hbar: f64,
    l: usize,
    grid: &GridSpec,
) -> Result<f64> {
    if h.snapshots.len() < 2 {
        return Err(Error::InvalidInput("integrated residual needs at least two snapshots".into()));
    }
    let mut vals = Vec::with_capacity(h.snapshots.len());
    for s in &h.snapshots {
        let frame = WavepacketFrame::from_trajectory(traj, s.t, hbar);
        vals.push(residual_norm(h, s, &frame, pot, l, grid)?);
    }
    let mut total = 0.0;
    for (w, v) in h.snapshots.windows(2).zip(vals.windows(2)) {
        total += 0.5 * (w[1].t - w[0].t) * (v[0] + v[1]);
    }
    Ok(total / hbar)
}

/// `(int_{|x-a| >= b} |psi|^2)^{1/2}`.
pub fn localization_mass(psi: &[Complex64], grid: &GridSpec, center: &[f64], radius: f64) -> Result<f64> {
    for i in 0..grid.dim() {
        let reach = (grid.center[i] - center[i]).abs() + grid.half_width[i];
        let margin = grid.half_width[i] - (grid.center[i] - center[i]).abs();
        if margin < 3.0 * radius || reach <= radius {
            return Err(Error::GridTooCoarse {
                relative_change: f64::NAN,
            });
        }
    }
    let mut m = 0.0;
    for (x, z) in grid.points().iter().zip(psi) {
        let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
        if r2 >= radius * radius {
            m += z.norm_sqr();
        }
    }
    Ok((m * grid.cell_volume()).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EhrenfestSchedule {
    pub t_prime: f64,
    pub lambda: f64,
    pub tau: f64,
    pub v: f64,
    pub kappa: f64,
    pub hbar: f64,
    /// Open window `(6 lambda + 2 v tau, 1/T')` for `kappa`.
    pub window: (f64, f64),
    /// `T = T' ln(1/hbar)`.
    pub t_end: f64,
    /// `g = exp(-kappa T) = hbar^{kappa T'}`.
    pub g: f64,
    pub l: usize,
}

pub fn ehrenfest_schedule(
    t_prime: f64,
    lambda: f64,
    tau: f64,
    v: f64,
    hbar: f64,
    kappa: Option<f64>,
) -> Result<EhrenfestSchedule> {
    if lambda <= 0.0 || t_prime <= 0.0 || !(0.0..1.0).contains(&hbar) {
        return Err(Error::InvalidInput(
            "need lambda > 0, T' > 0 and 0 < hbar < 1".into(),
        ));
    }
    let lower = 6.0 * lambda + 2.0 * v * tau;
    let upper = 1.0 / t_prime;
    if lower >= upper {
        return Err(Error::EmptyWindow { lower, upper });
    }
    let kappa = kappa.unwrap_or(0.5 * (lower + upper));
    if kappa <= lower || kappa >= upper {
        return Err(Error::InvalidInput(format!(
            "kappa = {kappa} outside the window ({lower}, {upper})"
        )));
    }
    let t_end = t_prime * (1.0 / hbar).ln();
    let g = (-kappa * t_end).exp();
    Ok(EhrenfestSchedule {
        t_prime,
        lambda,
        tau,
        v,
        kappa,
        hbar,
        window: (lower, upper),
        t_end,
        g,
        l: fixed_l(g, hbar),
    })
}

/// Declared exponential tail `|c_j| <= exp(-k |j|)` with truncation
/// degree `J = floor(nu l)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailClass {
    pub k: f64,
    pub nu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedInitial {
    /// Kept entries `|j| <= J`, renormalized.
    pub coeffs: BasisCoefficients,
    pub j_cut: usize,
    /// `(sum_{|j| > J} |c_j|^2)^{1/2}` over the listed entries.
    pub tail: f64,
    /// `exp(-k J)`.
    pub bound: f64,
}

impl TruncatedInitial {
    pub fn within_bound(&self) -> bool {
        self.tail <= self.bound
    }
}

/// Index of the first listed entry violating the declared tail.
pub fn tail_violation(entries: &[(MultiIndex, Complex64)], class: &TailClass) -> Option<usize> {
    entries
        .iter()
        .position(|(j, c)| c.norm() > (-class.k * j.order() as f64).exp() * (1.0 + 1e-12))
}

pub fn truncate_tail_state(
    dim: usize,
    entries: &[(MultiIndex, Complex64)],
    class: &TailClass,
    l: usize,
) -> Result<TruncatedInitial> {
    if class.k <= 0.0 || class.nu <= 0.0 {
        return Err(Error::InvalidInput("tail class needs k > 0 and nu > 0".into()));
    }
    if let Some(i) = tail_violation(entries, class) {
        return Err(Error::InvalidInput(format!(
            "entry {:?} exceeds exp(-k |j|) with k = {}",
            entries[i].0.entries(),
            class.k
        )));
    }
    let j_cut = (class.nu * l as f64 + FLOOR_SLACK).floor() as usize;
    let mut tail2 = 0.0;
    let mut kept = BasisCoefficients::zeros(dim, j_cut);
    for (j, c) in entries {
        if j.dim() != dim {
            return Err(Error::FrameMismatch(format!("entry {:?} is not of dimension {dim}", j.entries())));
        }
        if j.order() > j_cut {
            tail2 += c.norm_sqr();
        } else {
            kept.set(j, kept.get(j) + c)?;
        }
    }
    let n = kept.norm();
    if n == 0.0 {
        return Err(Error::InvalidInput(format!("no listed entry has |j| <= J = {j_cut}")));
    }
    Ok(TruncatedInitial {
        coeffs: kept.scaled(Complex64::new(1.0 / n, 0.0)),
        j_cut,
        tail: tail2.sqrt(),
        bound: (-class.k * j_cut as f64).exp(),
    })
}

/// One line of the propagation CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub hbar: f64,
    pub t: f64,
    pub l_mode: String,
    pub l: usize,
    pub error_vs_oracle: Option<f64>,
    pub residual_norm: Option<f64>,
    pub outside_mass_b: Option<f64>,
    pub wall_time_ms: Option<f64>,
}

pub const CSV_VERSION: u32 = 1;
pub const CSV_COLUMNS: &str = "hbar,t,l_mode,l,error_vs_oracle,residual_norm,outside_mass_b,wall_time_ms";

impl RunRow {
    pub fn csv_header() -> String {
        format!("# hagedorn run table, csv schema v{CSV_VERSION}\n{CSV_COLUMNS}\n")
    }

    pub fn to_csv(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.12e}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}\n",
            self.hbar,
            self.t,
            self.l_mode,
            self.l,
            f(self.error_vs_oracle),
            f(self.residual_norm),
            f(self.outside_mass_b),
            f(self.wall_time_ms)
        )
    }
}
