//! Strang split-operator Fourier propagator for
//! `i hbar dpsi/dt = -hbar^2/2 Delta psi + V psi` on a periodic grid.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::potential::PotentialModel;

/// Boundary mass `int |psi|^2` above which a run is rejected.
pub const LEAKAGE_THRESHOLD: f64 = 1e-10;
/// Cells per axis counted as boundary, as a fraction of the points.
const BOUNDARY_FRACTION: usize = 64;

pub struct SplitOperator {
    grid: GridSpec,
    hbar: f64,
    potential: Vec<f64>,
    /// `k^2 / 2` per flat index.
    kinetic: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    column: Vec<Complex64>,
}

fn wavenumbers(n: usize, spacing: f64) -> Vec<f64> {
    let l = spacing * n as f64;
    (0..n)
        .map(|k| {
            let kk = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
            2.0 * PI * kk / l
        })
        .collect()
}

impl SplitOperator {
    pub fn new(grid: &GridSpec, pot: &PotentialModel, hbar: f64) -> Result<Self> {
        let grid = grid.clone().validated()?;
        if pot.dim != grid.dim() {
            return Err(Error::InvalidInput(format!(
                "potential dimension {} on a {}-dimensional grid",
                pot.dim,
                grid.dim()
            )));
        }
        if hbar <= 0.0 {
            return Err(Error::InvalidInput("hbar must be positive".into()));
        }
        let cfl = grid.dt * hbar * grid.max_kinetic();
        if cfl >= 0.5 {
            return Err(Error::InvalidInput(format!(
                "time step too large for the grid: dt * E_max / hbar = {cfl:.3} >= 0.5"
            )));
        }
        let potential: Vec<f64> = grid.points().iter().map(|x| pot.value(x)).collect();
        let n = grid.points;
        let kin_axes: Vec<Vec<f64>> = (0..grid.dim()).map(|i| wavenumbers(n, grid.spacing(i))).collect();
        let kinetic: Vec<f64> = match grid.dim() {
            1 => kin_axes[0].iter().map(|k| 0.5 * k * k).collect(),
            _ => {
                let mut v = Vec::with_capacity(n * n);
                for kx in &kin_axes[0] {
                    for ky in &kin_axes[1] {
                        v.push(0.5 * (kx * kx + ky * ky));
                    }
                }
                v
            }
        };
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch = vec![Complex64::new(0.0, 0.0); forward.get_inplace_scratch_len()];
        Ok(SplitOperator {
            grid,
            hbar,
            potential,
            kinetic,
            forward,
            inverse,
            scratch,
            column: vec![Complex64::new(0.0, 0.0); n],
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn transform(&mut self, psi: &mut [Complex64], inverse: bool) {
        let n = self.grid.points;
        let fft = if inverse { &self.inverse } else { &self.forward };
        match self.grid.dim() {
            1 => fft.process_with_scratch(psi, &mut self.scratch),
            _ => {
                for row in psi.chunks_exact_mut(n) {
                    fft.process_with_scratch(row, &mut self.scratch);
                }
                for c in 0..n {
                    for r in 0..n {
                        self.column[r] = psi[r * n + c];
                    }
                    fft.process_with_scratch(&mut self.column, &mut self.scratch);
                    for r in 0..n {
                        psi[r * n + c] = self.column[r];
                    }
                }
            }
        }
    }

    /// Advances `psi` by `steps` Strang steps of size `dt`.
    pub fn advance(&mut self, psi: &mut [Complex64], dt: f64, steps: usize) {
        let h = self.hbar;
        let half_v: Vec<Complex64> = self
            .potential
            .iter()
            .map(|v| Complex64::from_polar(1.0, -v * dt / (2.0 * h)))
            .collect();
        let norm = 1.0 / self.grid.len() as f64;
        let kin: Vec<Complex64> = self
            .kinetic
            .iter()
            .map(|k| Complex64::from_polar(norm, -h * k * dt))
            .collect();
        for _ in 0..steps {
            for (p, f) in psi.iter_mut().zip(&half_v) {
                *p *= f;
            }
            self.transform(psi, false);
            for (p, f) in psi.iter_mut().zip(&kin) {
                *p *= f;
            }
            self.transform(psi, true);
            for (p, f) in psi.iter_mut().zip(&half_v) {
                *p *= f;
            }
        }
    }

    /// `H psi` with the Laplacian applied spectrally.
    pub fn hamiltonian(&mut self, psi: &[Complex64]) -> Vec<Complex64> {
        let mut k = psi.to_vec();
        self.transform(&mut k, false);
        let scale = self.hbar * self.hbar / self.grid.len() as f64;
        for (z, e) in k.iter_mut().zip(&self.kinetic) {
            *z *= e * scale;
        }
        self.transform(&mut k, true);
        for ((z, p), v) in k.iter_mut().zip(psi).zip(&self.potential) {
            *z += p * v;
        }
        k
    }

    pub fn check_leakage(&self, psi: &[Complex64]) -> Result<()> {
        let width = (self.grid.points / BOUNDARY_FRACTION).max(1);
        let m = self.grid.boundary_mass(psi, width);
        if m > LEAKAGE_THRESHOLD {
            return Err(Error::LeakageDetected(m));
        }
        Ok(())
    }

    /// Propagates from `t0` through each time in `times` (ascending), using
    /// the largest step `<= grid.dt` that lands on every output time.
    pub fn propagate_to_times(&mut self, psi0: &[Complex64], t0: f64, times: &[f64]) -> Result<Vec<Vec<Complex64>>> {
        if psi0.len() != self.grid.len() {
            return Err(Error::InvalidInput("initial state does not match the grid".into()));
        }
        self.check_leakage(psi0)?;
        let mut psi = psi0.to_vec();
        let mut t = t0;
        let mut out = Vec::with_capacity(times.len());
        for &target in times {
            let span = target - t;
            if span < 0.0 {
                return Err(Error::InvalidInput("output times must be ascending".into()));
            }
            if span > 0.0 {
                let steps = (span / self.grid.dt).ceil().max(1.0) as usize;
                self.advance(&mut psi, span / steps as f64, steps);
            }
            t = target;
            self.check_leakage(&psi)?;
            out.push(psi.clone());
        }
        Ok(out)
    }
}

/// Propagates `psi0` from 0 to `t_end`.
pub fn propagate(grid: &GridSpec, pot: &PotentialModel, psi0: &[Complex64], hbar: f64, t_end: f64) -> Result<Vec<Complex64>> {
    let mut op = SplitOperator::new(grid, pot, hbar)?;
    Ok(op.propagate_to_times(psi0, 0.0, &[t_end])?.pop().unwrap())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct L2Error {
    pub raw: f64,
    /// `min_theta ||a - e^{i theta} b||`.
    pub phase_optimized: f64,
}

pub fn l2_error(a: &[Complex64], b: &[Complex64], grid: &GridSpec) -> L2Error {
    let diff: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let raw = grid.norm(&diff);
    let na = grid.norm(a);
    let nb = grid.norm(b);
    let ov = grid.inner(b, a).norm();
    let opt = (na * na + nb * nb - 2.0 * ov).max(0.0).sqrt();
    L2Error {
        raw,
        phase_optimized: opt,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub schema_version: u32,
    pub grid: GridSpec,
    pub hbar: f64,
    pub t: f64,
    /// Number of complex values; the binary file holds interleaved
    /// little-endian `f64` (re, im) pairs.
    pub len: usize,
}

/// Writes `<stem>.json` (header) and `<stem>.bin` (values).
pub fn write_snapshot(stem: &Path, grid: &GridSpec, hbar: f64, t: f64, psi: &[Complex64]) -> std::io::Result<()> {
    let header = SnapshotHeader {
        schema_version: 1,
        grid: grid.clone(),
        hbar,
        t,
        len: psi.len(),
    };
    std::fs::write(
        stem.with_extension("json"),
        serde_json::to_string_pretty(&header).expect("header serializes"),
    )?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(stem.with_extension("bin"))?);
    for z in psi {
        f.write_all(&z.re.to_le_bytes())?;
        f.write_all(&z.im.to_le_bytes())?;
    }
    f.flush()
}

pub fn read_snapshot(stem: &Path) -> std::io::Result<(SnapshotHeader, Vec<Complex64>)> {
    let header: SnapshotHeader = serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json"))?)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
    let bytes = std::fs::read(stem.with_extension("bin"))?;
    if bytes.len() != header.len * 16 {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "snapshot length mismatch"));
    }
    let psi = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    Ok((header, psi))
}
