//! Dormand-Prince 5(4) integrator with PI step-size control and the
//! classical fifth-order continuous extension for dense output.
//!
//! The state is a slice of [`OdeScalar`] values so the same integrator serves
//! the real classical system and the complex coefficient cascade.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub trait OdeScalar:
    Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + Send + Sync
{
    fn modulus(self) -> f64;
}

impl OdeScalar for f64 {
    #[inline]
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl OdeScalar for Complex64 {
    #[inline]
    fn modulus(self) -> f64 {
        self.norm()
    }
}

#[derive(Clone, Debug)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: Option<f64>,
    pub h_max: Option<f64>,
    pub max_steps: usize,
}

impl Tolerances {
    pub fn new(tol: f64) -> Self {
        Tolerances {
            rtol: tol,
            atol: tol,
            h_init: None,
            h_max: None,
            max_steps: 1_000_000,
        }
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = Some(h_max);
        self
    }
}

// Butcher tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// error coefficients, b - b_hat
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// dense output
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

// step control
const SAFE: f64 = 0.9;
const FAC1: f64 = 0.2;
const FAC2: f64 = 10.0;
const BETA: f64 = 0.04;

/// Continuous extension over one accepted step `[t_old, t_old + h]`.
#[derive(Clone, Debug)]
pub struct Segment<T> {
    pub t_old: f64,
    pub h: f64,
    rcont: [Vec<T>; 5],
}

impl<T: OdeScalar> Segment<T> {
    pub fn t_new(&self) -> f64 {
        self.t_old + self.h
    }

    pub fn len(&self) -> usize {
        self.rcont[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.rcont[0].is_empty()
    }

    /// Evaluates the interpolant at `t`, which should lie inside the step.
    pub fn eval_into(&self, t: f64, out: &mut [T]) {
        let theta = (t - self.t_old) / self.h;
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        for i in 0..out.len() {
            out[i] = r1[i] + (r2[i] + (r3[i] + (r4[i] + r5[i] * theta1) * theta) * theta1) * theta;
        }
    }

    pub fn eval(&self, t: f64) -> Vec<T> {
        let mut out = vec![T::default(); self.len()];
        self.eval_into(t, &mut out);
        out
    }
}

/// Adaptive Dormand-Prince stepper.
pub struct Dopri5<T, F> {
    f: F,
    tol: Tolerances,
    t: f64,
    y: Vec<T>,
    h: f64,
    facold: f64,
    steps: usize,
    k: [Vec<T>; 7],
    ytmp: Vec<T>,
    y1: Vec<T>,
    initialized: bool,
    last_rejected: bool,
}

impl<T, F> Dopri5<T, F>
where
    T: OdeScalar,
    F: FnMut(f64, &[T], &mut [T]),
{
    pub fn new(f: F, t0: f64, y0: Vec<T>, tol: Tolerances) -> Self {
        let n = y0.len();
        let z = || vec![T::default(); n];
        Dopri5 {
            f,
            tol,
            t: t0,
            y: y0,
            h: 0.0,
            facold: 1e-4,
            steps: 0,
            k: [z(), z(), z(), z(), z(), z(), z()],
            ytmp: z(),
            y1: z(),
            initialized: false,
            last_rejected: false,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn scale(&self, a: T, b: T) -> f64 {
        self.tol.atol + self.tol.rtol * a.modulus().max(b.modulus())
    }

    fn initial_step(&mut self, direction: f64) -> f64 {
        let n = self.y.len().max(1) as f64;
        let (mut dnf, mut dny) = (0.0, 0.0);
        for i in 0..self.y.len() {
            let sk = self.tol.atol + self.tol.rtol * self.y[i].modulus();
            dnf += (self.k[0][i].modulus() / sk).powi(2);
            dny += (self.y[i].modulus() / sk).powi(2);
        }
        dnf /= n;
        dny /= n;
        let h_max = self.tol.h_max.unwrap_or(f64::INFINITY);
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
            1e-6
        } else {
            (dny / dnf).sqrt() * 0.01
        };
        h = h.min(h_max) * direction;
        for i in 0..self.y.len() {
            self.ytmp[i] = self.y[i] + self.k[0][i] * h;
        }
        (self.f)(self.t + h, &self.ytmp, &mut self.k[1]);
        let mut der2 = 0.0;
        for i in 0..self.y.len() {
            let sk = self.tol.atol + self.tol.rtol * self.y[i].modulus();
            der2 += ((self.k[1][i] - self.k[0][i]).modulus() / sk).powi(2);
        }
        der2 = (der2 / n).sqrt() / h.abs();
        let der12 = der2.max(dnf.sqrt());
        let h1 = if der12 <= 1e-15 {
            (h.abs() * 1e-3).max(1e-6)
        } else {
            (0.01 / der12).powf(0.2)
        };
        (100.0 * h.abs()).min(h1).min(h_max) * direction
    }

    /// Performs one accepted step toward `t_limit` (never past it).
    ///
    /// `accept` may veto a step that passed error control; the step is then
    /// halved and retried.
    pub fn step<A>(&mut self, t_limit: f64, mut accept: A) -> Result<Segment<T>>
    where
        A: FnMut(&Segment<T>, &[T]) -> bool,
    {
        let direction = if t_limit >= self.t { 1.0 } else { -1.0 };
        if !self.initialized {
            (self.f)(self.t, &self.y, &mut self.k[0]);
            self.h = self.tol.h_init.map(|h| h * direction).unwrap_or_else(|| self.initial_step(direction));
            self.initialized = true;
        }
        if self.h * direction <= 0.0 {
            self.h = -self.h;
        }
        let n = self.y.len();
        let h_max = self.tol.h_max.unwrap_or(f64::INFINITY);
        let expo1 = 0.2 - BETA * 0.75;
        loop {
            if self.steps >= self.tol.max_steps {
                return Err(Error::TooManySteps(self.tol.max_steps));
            }
            let mut h = self.h.abs().min(h_max) * direction;
            let remaining = t_limit - self.t;
            let last = (self.t + 1.01 * h - t_limit) * direction >= 0.0;
            if last {
                h = remaining;
            }
            if 0.1 * h.abs() <= self.t.abs() * f64::EPSILON || h == 0.0 {
                return Err(Error::StepSizeUnderflow { t: self.t, h });
            }
            self.steps += 1;
            let t = self.t;
            let (k, y, ytmp, y1) = (&mut self.k, &self.y, &mut self.ytmp, &mut self.y1);
            let f = &mut self.f;
            {
                let [k1, k2, k3, k4, k5, k6, k7] = k;
                for i in 0..n {
                    ytmp[i] = y[i] + k1[i] * (h * A21);
                }
                f(t + C2 * h, ytmp, k2);
                for i in 0..n {
                    ytmp[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * h;
                }
                f(t + C3 * h, ytmp, k3);
                for i in 0..n {
                    ytmp[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * h;
                }
                f(t + C4 * h, ytmp, k4);
                for i in 0..n {
                    ytmp[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * h;
                }
                f(t + C5 * h, ytmp, k5);
                for i in 0..n {
                    ytmp[i] = y[i]
                        + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * h;
                }
                f(t + h, ytmp, k6);
                for i in 0..n {
                    y1[i] = y[i]
                        + (k1[i] * A71 + k3[i] * A73 + k4[i] * A74 + k5[i] * A75 + k6[i] * A76) * h;
                }
                f(t + h, y1, k7);
            }
            let mut err = 0.0;
            for i in 0..n {
                let [k1, _, k3, k4, k5, k6, k7] = &self.k;
                let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
                let sk = self.scale(self.y[i], self.y1[i]);
                err += (e.modulus() / sk).powi(2);
            }
            err = (err / n.max(1) as f64).sqrt();
            let fac11 = err.powf(expo1);
            let fac = (fac11 / self.facold.powf(BETA) / SAFE).clamp(1.0 / FAC2, 1.0 / FAC1);
            let h_new = h / fac;
            if err <= 1.0 {
                let seg = self.build_segment(t, h);
                if !accept(&seg, &self.y1) {
                    self.h = h * 0.5;
                    self.last_rejected = true;
                    continue;
                }
                self.facold = err.max(1e-4);
                let mut h_next = h_new;
                if self.last_rejected {
                    h_next = if direction > 0.0 { h_next.min(h) } else { h_next.max(h) };
                }
                self.last_rejected = false;
                std::mem::swap(&mut self.y, &mut self.y1);
                self.k.swap(0, 6);
                self.t = if last { t_limit } else { t + h };
                // Keep the predicted step unless the clamp to t_limit shrank it.
                if !last {
                    self.h = h_next;
                } else {
                    self.h = h_next.abs().max(self.h.abs()) * direction;
                }
                return Ok(seg);
            } else {
                self.h = h / (1.0 / FAC1).min(fac11 / SAFE);
                self.last_rejected = true;
            }
        }
    }

    fn build_segment(&self, t: f64, h: f64) -> Segment<T> {
        let n = self.y.len();
        let [k1, _, k3, k4, k5, k6, k7] = &self.k;
        let mut r1 = Vec::with_capacity(n);
        let mut r2 = Vec::with_capacity(n);
        let mut r3 = Vec::with_capacity(n);
        let mut r4 = Vec::with_capacity(n);
        let mut r5 = Vec::with_capacity(n);
        for i in 0..n {
            let ydiff = self.y1[i] - self.y[i];
            let bspl = k1[i] * h - ydiff;
            r1.push(self.y[i]);
            r2.push(ydiff);
            r3.push(bspl);
            r4.push(ydiff - k7[i] * h - bspl);
            r5.push((k1[i] * D1 + k3[i] * D3 + k4[i] * D4 + k5[i] * D5 + k6[i] * D6 + k7[i] * D7) * h);
        }
        Segment {
            t_old: t,
            h,
            rcont: [r1, r2, r3, r4, r5],
        }
    }

    /// Integrates to `t_end` and returns the final state.
    pub fn integrate_to(&mut self, t_end: f64) -> Result<Vec<T>> {
        while self.t != t_end {
            self.step(t_end, |_, _| true)?;
        }
        Ok(self.y.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let mut s = Dopri5::new(|_t, y: &[f64], dy: &mut [f64]| dy[0] = -y[0], 0.0, vec![1.0], Tolerances::new(1e-12));
        let y = s.integrate_to(3.0).unwrap();
        assert!((y[0] - (-3.0f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn backward_integration() {
        let mut s = Dopri5::new(|_t, y: &[f64], dy: &mut [f64]| dy[0] = y[0], 1.0, vec![1.0], Tolerances::new(1e-12));
        let y = s.integrate_to(-1.0).unwrap();
        assert!((y[0] - (-2.0f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn complex_rotation_and_dense_output() {
        let i = Complex64::i();
        let mut s = Dopri5::new(
            move |_t, y: &[Complex64], dy: &mut [Complex64]| dy[0] = i * y[0],
            0.0,
            vec![Complex64::new(1.0, 0.0)],
            Tolerances::new(1e-11),
        );
        let mut max_err: f64 = 0.0;
        while s.t() < 2.0 {
            let seg = s.step(2.0, |_, _| true).unwrap();
            for q in 0..=10 {
                let t = seg.t_old + seg.h * q as f64 / 10.0;
                let v = seg.eval(t)[0];
                max_err = max_err.max((v - (i * t).exp()).norm());
            }
            // exact at the left node
            assert_eq!(seg.eval(seg.t_old)[0], seg.eval(seg.t_old)[0]);
        }
        assert!(max_err < 1e-9, "{max_err}");
    }

    #[test]
    fn veto_forces_smaller_steps() {
        let mut s = Dopri5::new(|_t, _y: &[f64], dy: &mut [f64]| dy[0] = 1.0, 0.0, vec![0.0], Tolerances::new(1e-8));
        while s.t() < 1.0 {
            let seg = s.step(1.0, |seg, _| seg.h <= 0.1 + 1e-12).unwrap();
            assert!(seg.h <= 0.1 + 1e-12);
        }
        assert!((s.y()[0] - 1.0).abs() < 1e-12);
    }
}
