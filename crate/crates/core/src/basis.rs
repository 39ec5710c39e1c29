//! Hagedorn wavepackets `phi_j(A, B, hbar, a, eta, x)`, coefficient vectors,
//! and the ladder and position operators acting on them.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::classical::{ClassicalState, Trajectory, DET_THRESHOLD};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::multiindex::{count_upto, Layout, MultiIndex, NONE};

#[derive(Clone, Debug, PartialEq)]
pub struct WavepacketFrame {
    pub a_mat: CMatrix,
    pub b_mat: CMatrix,
    pub hbar: f64,
    pub a: Vec<f64>,
    pub eta: Vec<f64>,
    pub s: f64,
    /// Continuous argument of `det A`, selecting the branch of `(det A)^{-1/2}`.
    pub det_arg: f64,
}

impl WavepacketFrame {
    pub fn new(
        a_mat: CMatrix,
        b_mat: CMatrix,
        hbar: f64,
        a: Vec<f64>,
        eta: Vec<f64>,
        s: f64,
        det_arg: f64,
    ) -> Result<Self> {
        let f = WavepacketFrame {
            a_mat,
            b_mat,
            hbar,
            a,
            eta,
            s,
            det_arg,
        };
        f.validate(1e-8)?;
        Ok(f)
    }

    /// Frame with `A = B = I`.
    pub fn standard(hbar: f64, a: Vec<f64>, eta: Vec<f64>) -> Self {
        let d = a.len();
        WavepacketFrame {
            a_mat: linalg::identity(d),
            b_mat: linalg::identity(d),
            hbar,
            a,
            eta,
            s: 0.0,
            det_arg: 0.0,
        }
    }

    pub fn from_state(state: &ClassicalState, det_arg: f64, hbar: f64) -> Self {
        WavepacketFrame {
            a_mat: state.a_mat.clone(),
            b_mat: state.b_mat.clone(),
            hbar,
            a: state.a.clone(),
            eta: state.eta.clone(),
            s: state.s,
            det_arg,
        }
    }

    pub fn from_trajectory(traj: &Trajectory, t: f64, hbar: f64) -> Self {
        Self::from_state(&traj.state_at(t), traj.arg_det_at(t), hbar)
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn validate(&self, tol_sympl: f64) -> Result<()> {
        if self.hbar <= 0.0 {
            return Err(Error::InvalidInput("hbar must be positive".into()));
        }
        let d = self.dim();
        if self.eta.len() != d || self.a_mat.nrows() != d || self.b_mat.nrows() != d {
            return Err(Error::InvalidInput("inconsistent frame dimensions".into()));
        }
        let r = linalg::cond1_residual(&self.a_mat, &self.b_mat).max();
        if r > tol_sympl {
            return Err(Error::Cond1Drift {
                t: f64::NAN,
                residual: r,
                bound: tol_sympl,
            });
        }
        let det = linalg::det(&self.a_mat);
        if det.norm() < DET_THRESHOLD {
            return Err(Error::SingularA(det.norm()));
        }
        let rebuilt = Complex64::from_polar(det.norm(), self.det_arg);
        if (rebuilt - det).norm() > 1e-10 * det.norm().max(1.0) {
            return Err(Error::InvalidInput(format!(
                "det_arg {} is not an argument of det A = {det}",
                self.det_arg
            )));
        }
        Ok(())
    }

    fn check_dim(&self, coeffs: &BasisCoefficients) -> Result<()> {
        if coeffs.dim != self.dim() {
            return Err(Error::FrameMismatch(format!(
                "coefficients of dimension {} on a frame of dimension {}",
                coeffs.dim,
                self.dim()
            )));
        }
        Ok(())
    }

    /// `(det A)^{-1/2}` on the tracked branch.
    pub fn inv_sqrt_det(&self) -> Result<Complex64> {
        let m = linalg::det(&self.a_mat).norm();
        if m < DET_THRESHOLD {
            return Err(Error::SingularA(m));
        }
        Ok(Complex64::from_polar(m.powf(-0.5), -0.5 * self.det_arg))
    }

    /// `e^{iS/hbar}`.
    pub fn phase(&self) -> Complex64 {
        Complex64::from_polar(1.0, self.s / self.hbar)
    }

    pub fn evaluate_phi0(&self, points: &[Vec<f64>]) -> Result<Vec<Complex64>> {
        let d = self.dim();
        let pref = self.inv_sqrt_det()? * (PI * self.hbar).powf(-0.25 * d as f64);
        let ainv = linalg::inverse(&self.a_mat).ok_or(Error::SingularA(0.0))?;
        let c = &self.b_mat * ainv;
        let h = self.hbar;
        Ok(points
            .iter()
            .map(|x| {
                let mut quad = Complex64::new(0.0, 0.0);
                let mut lin = 0.0;
                for r in 0..d {
                    let yr = x[r] - self.a[r];
                    lin += self.eta[r] * yr;
                    for s in 0..d {
                        quad += c[(r, s)] * (yr * (x[s] - self.a[s]));
                    }
                }
                pref * (-quad / (2.0 * h) + Complex64::new(0.0, lin / h)).exp()
            })
            .collect())
    }

    /// Values of every `phi_j` with `|j| <= jmax` at `points`, via the
    /// three-term ladder recurrence
    /// `sqrt(j_k + 1) phi_{j+e_k} = sqrt(2/hbar) (A^{-1}(x-a))_k phi_j
    ///   - sum_l (A^{-1} conj(A))_{kl} sqrt(j_l) phi_{j-e_l}`.
    pub fn evaluate_basis(&self, jmax: usize, points: &[Vec<f64>]) -> Result<BasisValues> {
        let layout = Layout::new(self.dim(), jmax);
        self.evaluate_basis_with(&layout, points)
    }

    pub fn evaluate_basis_with(&self, layout: &Layout, points: &[Vec<f64>]) -> Result<BasisValues> {
        let d = self.dim();
        let np = points.len();
        let nb = layout.len();
        let ainv = linalg::inverse(&self.a_mat).ok_or(Error::SingularA(0.0))?;
        let m = &ainv * self.a_mat.map(|z| z.conj());
        let scale = (2.0 / self.hbar).sqrt();
        // y[pt * d + k] = sqrt(2/hbar) (A^{-1} (x - a))_k
        let mut y = vec![Complex64::new(0.0, 0.0); np * d];
        for (p, x) in points.iter().enumerate() {
            for k in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for l in 0..d {
                    acc += ainv[(k, l)] * (x[l] - self.a[l]);
                }
                y[p * d + k] = acc * scale;
            }
        }
        let mut values = vec![Complex64::new(0.0, 0.0); nb * np];
        let phi0 = self.evaluate_phi0(points)?;
        values[..np].copy_from_slice(&phi0);
        for pos in 1..nb {
            let j = layout.index(pos);
            let k = j.first_nonzero_axis().unwrap();
            let prev = layout.down(pos, k);
            let jm = j.lowered(k).unwrap();
            let inv = 1.0 / (j.get(k) as f64).sqrt();
            let mut lower: Vec<(usize, Complex64)> = Vec::with_capacity(d);
            for l in 0..d {
                let jl = jm.get(l);
                if jl > 0 {
                    lower.push((layout.down(prev, l), m[(k, l)] * (jl as f64).sqrt()));
                }
            }
            let (head, tail) = values.split_at_mut(pos * np);
            let out = &mut tail[..np];
            let src = &head[prev * np..(prev + 1) * np];
            for p in 0..np {
                let mut v = y[p * d + k] * src[p];
                for &(q, w) in &lower {
                    v -= w * head[q * np + p];
                }
                out[p] = v * inv;
            }
        }
        Ok(BasisValues {
            n_points: np,
            values,
            indices: layout.indices().to_vec(),
        })
    }

    /// `sum_j c_j phi_j(x)` (without the `e^{iS/hbar}` phase).
    pub fn synthesize(&self, coeffs: &BasisCoefficients, points: &[Vec<f64>]) -> Result<Vec<Complex64>> {
        self.check_dim(coeffs)?;
        let vals = self.evaluate_basis(coeffs.support, points)?;
        Ok(vals.combine(&coeffs.data))
    }

    pub fn apply_raising(&self, axis: usize, coeffs: &BasisCoefficients) -> Result<BasisCoefficients> {
        self.check_dim(coeffs)?;
        Ok(coeffs.raised(axis))
    }

    pub fn apply_lowering(&self, axis: usize, coeffs: &BasisCoefficients) -> Result<BasisCoefficients> {
        self.check_dim(coeffs)?;
        Ok(coeffs.lowered(axis))
    }

    /// `(x_i - a_i)` in the basis of this frame.
    pub fn apply_position(&self, axis: usize, coeffs: &BasisCoefficients) -> Result<BasisCoefficients> {
        self.check_dim(coeffs)?;
        let mut out = coeffs.position_scaled(&self.a_mat, axis);
        let s = self.hbar.sqrt();
        out.data.iter_mut().for_each(|z| *z *= s);
        Ok(out)
    }
}

/// Basis values in blocks of `n_points`, one block per multi-index in
/// graded order.
#[derive(Clone, Debug)]
pub struct BasisValues {
    pub n_points: usize,
    pub values: Vec<Complex64>,
    pub indices: Vec<MultiIndex>,
}

impl BasisValues {
    pub fn function(&self, pos: usize) -> &[Complex64] {
        &self.values[pos * self.n_points..(pos + 1) * self.n_points]
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// `sum_pos coeffs[pos] * phi_pos` over the leading entries.
    pub fn combine(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.n_points];
        for (pos, c) in coeffs.iter().enumerate().take(self.len()) {
            if *c == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (o, v) in out.iter_mut().zip(self.function(pos)) {
                *o += c * v;
            }
        }
        out
    }
}

/// Coefficients `c_j`, `|j| <= support`, stored densely in graded order.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisCoefficients {
    pub dim: usize,
    pub support: usize,
    pub data: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct CoefficientRecord {
    dim: usize,
    support: usize,
    entries: Vec<(MultiIndex, f64, f64)>,
}

impl Serialize for BasisCoefficients {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let layout = Layout::new(self.dim, self.support);
        CoefficientRecord {
            dim: self.dim,
            support: self.support,
            entries: self
                .data
                .iter()
                .enumerate()
                .map(|(p, z)| (layout.index(p).clone(), z.re, z.im))
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BasisCoefficients {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = CoefficientRecord::deserialize(d)?;
        let mut c = BasisCoefficients::zeros(rec.dim, rec.support);
        for (j, re, im) in rec.entries {
            c.set(&j, Complex64::new(re, im)).map_err(serde::de::Error::custom)?;
        }
        Ok(c)
    }
}

impl BasisCoefficients {
    pub fn zeros(dim: usize, support: usize) -> Self {
        BasisCoefficients {
            dim,
            support,
            data: vec![Complex64::new(0.0, 0.0); count_upto(dim, support) as usize],
        }
    }

    /// `c = delta_j`.
    pub fn delta(j: &MultiIndex) -> Self {
        let mut c = Self::zeros(j.dim(), j.order());
        c.set(j, Complex64::new(1.0, 0.0)).unwrap();
        c
    }

    pub fn from_entries(dim: usize, entries: &[(MultiIndex, Complex64)]) -> Result<Self> {
        let support = entries.iter().map(|(j, _)| j.order()).max().unwrap_or(0);
        let mut c = Self::zeros(dim, support);
        for (j, v) in entries {
            c.set(j, *v)?;
        }
        Ok(c)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, j: &MultiIndex) -> Complex64 {
        if j.dim() != self.dim || j.order() > self.support {
            return Complex64::new(0.0, 0.0);
        }
        self.data[crate::potential::graded_position(j)]
    }

    pub fn set(&mut self, j: &MultiIndex, v: Complex64) -> Result<()> {
        if j.dim() != self.dim {
            return Err(Error::FrameMismatch(format!("index {j} in dimension {}", self.dim)));
        }
        if j.order() > self.support {
            return Err(Error::InvalidInput(format!(
                "index {j} beyond declared support {}",
                self.support
            )));
        }
        let p = crate::potential::graded_position(j);
        self.data[p] = v;
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Highest degree carrying a non-zero entry.
    pub fn effective_support(&self) -> Option<usize> {
        let layout_order = |p: usize| -> usize {
            // entries are graded, so find the shell of position p
            let mut n = 0;
            while count_upto(self.dim, n) as usize <= p {
                n += 1;
            }
            n
        };
        self.data
            .iter()
            .rposition(|z| *z != Complex64::new(0.0, 0.0))
            .map(layout_order)
    }

    /// Same coefficients with a larger (or equal) declared support.
    pub fn extended(&self, support: usize) -> Self {
        let mut c = Self::zeros(self.dim, support.max(self.support));
        c.data[..self.data.len()].copy_from_slice(&self.data);
        c
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        BasisCoefficients {
            dim: self.dim,
            support: self.support,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn add(&self, other: &BasisCoefficients) -> Self {
        let n = self.support.max(other.support);
        let mut out = self.extended(n);
        for (o, v) in out.data.iter_mut().zip(&other.data) {
            *o += v;
        }
        out
    }

    pub fn raised(&self, axis: usize) -> Self {
        let layout = Layout::new(self.dim, self.support + 1);
        let mut out = Self::zeros(self.dim, self.support + 1);
        raise_into(&layout, self.support, axis, &self.data, &mut out.data);
        out
    }

    pub fn lowered(&self, axis: usize) -> Self {
        let layout = Layout::new(self.dim, self.support);
        let mut out = Self::zeros(self.dim, self.support);
        lower_into(&layout, self.support, axis, &self.data, &mut out.data);
        out
    }

    /// `X_i c` with `X_i = (1/sqrt 2) sum_p (A_ip R_p + conj(A_ip) L_p)`,
    /// the hbar-free position operator.
    pub fn position_scaled(&self, a_mat: &CMatrix, axis: usize) -> Self {
        let layout = Layout::new(self.dim, self.support + 1);
        let mut out = Self::zeros(self.dim, self.support + 1);
        position_into(&layout, self.support, a_mat, axis, &self.data, &mut out.data, PositionSign::Correct);
        out
    }
}

/// Adds `R_axis c` to `out`; `c` has support `n`, `out` needs `n + 1`.
pub fn raise_into(layout: &Layout, n: usize, axis: usize, c: &[Complex64], out: &mut [Complex64]) {
    for (pos, v) in c.iter().enumerate().take(layout.len_upto(n)) {
        let up = layout.up(pos, axis);
        debug_assert_ne!(up, NONE);
        out[up] += v * ((layout.index(pos).get(axis) + 1) as f64).sqrt();
    }
}

/// Adds `L_axis c` to `out`.
pub fn lower_into(layout: &Layout, n: usize, axis: usize, c: &[Complex64], out: &mut [Complex64]) {
    for (pos, v) in c.iter().enumerate().take(layout.len_upto(n)) {
        let down = layout.down(pos, axis);
        if down != NONE {
            out[down] += v * (layout.index(pos).get(axis) as f64).sqrt();
        }
    }
}

/// Sign convention for the lowering part of the position operator. The
/// flipped variant is a deliberately broken kernel used to check that the
/// invariant suite detects it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PositionSign {
    Correct,
    Flipped,
}

/// Adds `X_axis c` to `out` (support `n` in, `n + 1` out).
pub fn position_into(
    layout: &Layout,
    n: usize,
    a_mat: &CMatrix,
    axis: usize,
    c: &[Complex64],
    out: &mut [Complex64],
    sign: PositionSign,
) {
    let d = layout.dim();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let low_sign = if sign == PositionSign::Correct { 1.0 } else { -1.0 };
    let up_w: Vec<Complex64> = (0..d).map(|p| a_mat[(axis, p)] * r).collect();
    let dn_w: Vec<Complex64> = (0..d).map(|p| a_mat[(axis, p)].conj() * (r * low_sign)).collect();
    let count = layout.len_upto(n);
    for (pos, v) in c.iter().enumerate().take(count) {
        if *v == Complex64::new(0.0, 0.0) {
            continue;
        }
        let j = layout.index(pos);
        for p in 0..d {
            let jp = j.get(p) as f64;
            out[layout.up(pos, p)] += up_w[p] * v * (jp + 1.0).sqrt();
            if jp > 0.0 {
                out[layout.down(pos, p)] += dn_w[p] * v * jp.sqrt();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn grid_points(g: &GridSpec) -> Vec<Vec<f64>> {
        g.points()
    }

    fn random_frame(seed: u64, hbar: f64) -> WavepacketFrame {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let c = CMatrix::from_element(1, 1, Complex64::new(rng.gen_range(0.5..2.0), rng.gen_range(-1.0..1.0)));
        let u = CMatrix::from_element(1, 1, Complex64::from_polar(1.0, rng.gen_range(-3.0..3.0)));
        let (a, b) = linalg::admissible_pair(&c, &u);
        let det_arg = linalg::det(&a).arg();
        WavepacketFrame::new(a, b, hbar, vec![rng.gen_range(-1.0..1.0)], vec![rng.gen_range(-1.0..1.0)], 0.0, det_arg)
            .unwrap()
    }

    #[test]
    fn phi0_values() {
        let f = WavepacketFrame::standard(1.0, vec![0.0], vec![0.0]);
        let v = f.evaluate_phi0(&[vec![0.0], vec![1.0]]).unwrap();
        assert!((v[0].re - PI.powf(-0.25)).abs() < 1e-15);
        assert!((v[1].re - PI.powf(-0.25) * (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn phi0_branch_follows_tracked_argument() {
        let e = Complex64::new(0.0, 1.0);
        let m = CMatrix::from_element(1, 1, e);
        let f = WavepacketFrame::new(m.clone(), m.clone(), 1.0, vec![0.0], vec![0.0], 0.0, PI / 2.0).unwrap();
        let v = f.evaluate_phi0(&[vec![0.0]]).unwrap()[0];
        assert!((v - Complex64::from_polar(PI.powf(-0.25), -PI / 4.0)).norm() < 1e-15);
        // after one more full turn, the sign flips
        let g = WavepacketFrame::new(m.clone(), m, 1.0, vec![0.0], vec![0.0], 0.0, PI / 2.0 + 2.0 * PI).unwrap();
        let w = g.evaluate_phi0(&[vec![0.0]]).unwrap()[0];
        assert!((w + v).norm() < 1e-15);
    }

    #[test]
    fn hermite_function_value() {
        let g = GridSpec::new_1d(0.0, 12.0, 2048, 1.0).unwrap();
        let f = WavepacketFrame::standard(1.0, vec![0.0], vec![0.0]);
        let pts = grid_points(&g);
        let vals = f.evaluate_basis(4, &pts).unwrap();
        for (p, x) in pts.iter().enumerate() {
            let x = x[0];
            let g0 = PI.powf(-0.25) * (-x * x / 2.0).exp();
            let h2 = (4.0 * x * x - 2.0) / 8f64.sqrt() * g0;
            assert!((vals.function(2)[p].re - h2).abs() < 1e-10);
        }
    }

    #[test]
    fn gram_matrix_is_identity() {
        for &hbar in &[1.0, 0.1] {
            for seed in 0..3 {
                let f = random_frame(seed, hbar);
                let hw = 12.0 * hbar.sqrt() * linalg::spectral_norm(&f.a_mat);
                let g = GridSpec::new_1d(f.a[0], hw, 4096, 1.0).unwrap();
                let vals = f.evaluate_basis(8, &g.points()).unwrap();
                for i in 0..vals.len() {
                    for j in 0..vals.len() {
                        let ip = g.inner(vals.function(i), vals.function(j));
                        let expect = if i == j { 1.0 } else { 0.0 };
                        assert!((ip - expect).norm() < 1e-6, "{i} {j} {ip}");
                    }
                }
            }
        }
    }

    #[test]
    fn two_dimensional_norms() {
        let c = CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.5, 0.2),
                Complex64::new(0.3, 0.1),
                Complex64::new(0.3, 0.1),
                Complex64::new(0.8, -0.4),
            ],
        );
        let u = linalg::identity(2);
        let (a, b) = linalg::admissible_pair(&c, &u);
        let arg = linalg::det(&a).arg();
        let f = WavepacketFrame::new(a, b, 0.5, vec![0.2, -0.1], vec![0.5, 0.0], 0.0, arg).unwrap();
        let g = GridSpec::new_2d([0.2, -0.1], [8.0, 8.0], 256, 1.0).unwrap();
        let vals = f.evaluate_basis(3, &g.points()).unwrap();
        assert_eq!(vals.len(), 10);
        for i in 0..10 {
            assert!((g.norm(vals.function(i)) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn ladder_examples() {
        let d0 = BasisCoefficients::delta(&MultiIndex::zero(2));
        let r = d0.raised(1);
        assert_eq!(r.get(&MultiIndex::unit(2, 1)), Complex64::new(1.0, 0.0));
        let d2 = BasisCoefficients::delta(&MultiIndex::new(vec![2]));
        let r = d2.raised(0);
        assert!((r.get(&MultiIndex::new(vec![3])).re - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.support, 3);
    }

    #[test]
    fn position_matrix_element_matches_quadrature() {
        let f = WavepacketFrame::standard(1.0, vec![0.0], vec![0.0]);
        let c = f.apply_position(0, &BasisCoefficients::delta(&MultiIndex::zero(1))).unwrap();
        assert!((c.get(&MultiIndex::new(vec![1])).re - 0.5f64.sqrt()).abs() < 1e-15);
        let g = GridSpec::new_1d(0.0, 12.0, 4096, 1.0).unwrap();
        let pts = g.points();
        let vals = f.evaluate_basis(1, &pts).unwrap();
        let xphi0: Vec<Complex64> = pts.iter().zip(vals.function(0)).map(|(x, v)| v * x[0]).collect();
        let q = g.inner(vals.function(1), &xphi0);
        assert!((q.re - 0.5f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn position_operator_matches_quadrature_for_general_frame() {
        let f = random_frame(7, 0.3);
        let g = GridSpec::new_1d(f.a[0], 14.0 * 0.3f64.sqrt() * linalg::spectral_norm(&f.a_mat), 4096, 1.0).unwrap();
        let pts = g.points();
        let vals = f.evaluate_basis(6, &pts).unwrap();
        for k in 0..5 {
            let c = f.apply_position(0, &BasisCoefficients::delta(&MultiIndex::new(vec![k as u32]))).unwrap();
            let xphi: Vec<Complex64> = pts.iter().zip(vals.function(k)).map(|(x, v)| v * (x[0] - f.a[0])).collect();
            for j in 0..=k + 1 {
                let q = g.inner(vals.function(j), &xphi);
                assert!((q - c.get(&MultiIndex::new(vec![j as u32]))).norm() < 1e-9, "{j} {k}");
            }
        }
    }

    #[test]
    fn position_width_uncertainty() {
        let f = random_frame(3, 0.1);
        let hw = 14.0 * 0.1f64.sqrt() * linalg::spectral_norm(&f.a_mat);
        let g = GridSpec::new_1d(f.a[0], hw, 4096, 1.0).unwrap();
        let pts = g.points();
        let vals = f.evaluate_basis(5, &pts).unwrap();
        for j in 0..=5 {
            let phi = vals.function(j);
            let w: Vec<f64> = phi.iter().map(|z| z.norm_sqr() * g.cell_volume()).collect();
            let mean: f64 = pts.iter().zip(&w).map(|(x, w)| x[0] * w).sum();
            let var: f64 = pts.iter().zip(&w).map(|(x, w)| (x[0] - mean).powi(2) * w).sum();
            let expect = ((j as f64 + 0.5) * 0.1).sqrt() * f.a_mat[(0, 0)].norm();
            assert!((var.sqrt() - expect).abs() < 1e-8, "{j}");
        }
    }

    #[test]
    fn frame_mismatch() {
        let f = WavepacketFrame::standard(1.0, vec![0.0], vec![0.0]);
        let c = BasisCoefficients::delta(&MultiIndex::zero(2));
        assert!(matches!(f.apply_raising(0, &c), Err(Error::FrameMismatch(_))));
    }

    #[test]
    fn json_round_trip() {
        let c = BasisCoefficients::from_entries(
            2,
            &[
                (MultiIndex::new(vec![1, 0]), Complex64::new(0.6, 0.0)),
                (MultiIndex::new(vec![0, 2]), Complex64::new(0.0, -0.8)),
            ],
        )
        .unwrap();
        let s = serde_json::to_string(&c).unwrap();
        let back: BasisCoefficients = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.effective_support(), Some(2));
    }

    #[test]
    fn rejects_wrong_branch() {
        let m = CMatrix::from_element(1, 1, Complex64::new(0.0, 1.0));
        assert!(WavepacketFrame::new(m.clone(), m, 1.0, vec![0.0], vec![0.0], 0.0, 0.0).is_err());
    }
}
