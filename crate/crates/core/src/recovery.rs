//! Sparse recovery: the partial-Fourier measurement model over the quantized
//! delay grid and orthogonal matching pursuit.
//!
//! The beamformed coefficients obey `c = (1/T) H A x` where H is the diagonal
//! of pulse-spectrum samples over the selected index set, A takes those rows
//! of the N-point DFT matrix, and x is the L-sparse echo vector on the grid.

use crate::error::{Error, Result};
use crate::pulse::{pulse_ctft, FourierIndexSet, PulseSpec};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Quantized delay grid: t = q * step for q in [0, size).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    step: f64,
    size: usize,
}

impl GridSpec {
    pub fn new(step: f64, size: usize) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() || size == 0 {
            return Err(Error::Validation(vec![format!(
                "grid: step = {step}, size = {size} (need step > 0, size >= 1)"
            )]));
        }
        Ok(Self { step, size })
    }

    /// Grid of `size` cells spanning [0, duration).
    pub fn from_duration(duration: f64, size: usize) -> Result<Self> {
        Self::new(duration / size as f64, size)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn size(&self) -> usize {
        self.size
    }
}

/// L-sparse echo vector: amplitudes at distinct grid indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    support: Vec<usize>,
    values: Vec<Complex64>,
    ambient: usize,
}

impl SparseVector {
    pub fn new(support: Vec<usize>, values: Vec<Complex64>, ambient: usize) -> Result<Self> {
        if support.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: support.len(),
                got: values.len(),
            });
        }
        let mut seen = support.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) || seen.iter().any(|&q| q >= ambient) {
            return Err(Error::InvalidArgument(
                "sparse support must be distinct indices inside the grid".to_string(),
            ));
        }
        Ok(Self {
            support,
            values,
            ambient,
        })
    }

    pub fn empty(ambient: usize) -> Self {
        Self {
            support: Vec::new(),
            values: Vec::new(),
            ambient,
        }
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }
}

/// The K x N sensing map and its diagonal pulse weighting.
#[derive(Debug, Clone)]
pub struct MeasurementModel {
    kappa: FourierIndexSet,
    grid: GridSpec,
    h_diag: Vec<f64>,
    composite: Vec<Complex64>, // K x N row-major
    duration: f64,
}

impl MeasurementModel {
    pub fn kappa(&self) -> &FourierIndexSet {
        &self.kappa
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn h_diag(&self) -> &[f64] {
        &self.h_diag
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn num_measurements(&self) -> usize {
        self.kappa.len()
    }

    fn column(&self, q: usize) -> impl Iterator<Item = Complex64> + '_ {
        let n = self.grid.size;
        (0..self.kappa.len()).map(move |j| self.composite[j * n + q])
    }

    /// c = (1/T) H A x for a sparse x.
    pub fn apply(&self, x: &SparseVector) -> Result<Vec<Complex64>> {
        if x.ambient() != self.grid.size {
            return Err(Error::DimensionMismatch {
                expected: self.grid.size,
                got: x.ambient(),
            });
        }
        let n = self.grid.size;
        Ok((0..self.kappa.len())
            .map(|j| {
                x.support()
                    .iter()
                    .zip(x.values())
                    .map(|(&q, &b)| self.composite[j * n + q] * b)
                    .sum()
            })
            .collect())
    }
}

/// Builds the model, rejecting any index where the pulse spectrum magnitude
/// falls below `h_min` (the diagonal would not be invertible there).
pub fn build_measurement_model(
    kappa: &FourierIndexSet,
    pulse: &PulseSpec,
    grid: GridSpec,
    duration: f64,
    h_min: f64,
) -> Result<MeasurementModel> {
    if !(duration > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "window duration must be > 0, got {duration}"
        )));
    }
    let mut h_diag = Vec::with_capacity(kappa.len());
    for &k in kappa.indices() {
        let h = pulse_ctft(pulse, 2.0 * PI * k as f64 / duration);
        if h.abs() < h_min {
            return Err(Error::BandViolation {
                index: k,
                magnitude: h.abs(),
                h_min,
            });
        }
        h_diag.push(h);
    }
    let n = grid.size;
    let mut composite = Vec::with_capacity(kappa.len() * n);
    for (j, &k) in kappa.indices().iter().enumerate() {
        let w = h_diag[j] / duration;
        let unit = -2.0 * PI * k as f64 * grid.step / duration;
        for q in 0..n {
            composite.push(w * Complex64::from_polar(1.0, unit * q as f64));
        }
    }
    Ok(MeasurementModel {
        kappa: kappa.clone(),
        grid,
        h_diag,
        composite,
        duration,
    })
}

/// Orthogonal matching pursuit: greedily select the column with maximal
/// normalized correlation against the residual (ties go to the lowest grid
/// index), re-solve least squares on the selected support, repeat until
/// `l_target` atoms or the residual drops to `residual_tol * ||c||`.
pub fn omp_recover(
    c: &[Complex64],
    model: &MeasurementModel,
    l_target: usize,
    residual_tol: f64,
) -> Result<SparseVector> {
    let k = model.num_measurements();
    let n = model.grid.size;
    if c.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: c.len(),
        });
    }
    if 2 * l_target > k {
        return Err(Error::InvalidArgument(format!(
            "sparsity target {l_target} exceeds half the {k} measurements"
        )));
    }
    let col_norms: Vec<f64> = (0..n)
        .map(|q| model.column(q).map(|v| v.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let norm_c = c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let stop = residual_tol * norm_c;

    let mut support: Vec<usize> = Vec::new();
    let mut amplitudes: Vec<Complex64> = Vec::new();
    let mut residual = c.to_vec();

    for _ in 0..l_target {
        let res_norm = residual.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if res_norm <= stop {
            break;
        }
        // argmax of |A^H r| / ||col||, lowest index wins ties
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for q in 0..n {
            if support.contains(&q) || col_norms[q] == 0.0 {
                continue;
            }
            let corr: Complex64 = model
                .column(q)
                .zip(&residual)
                .map(|(a, r)| a.conj() * r)
                .sum();
            let score = corr.norm() / col_norms[q];
            if score > best.0 {
                best = (score, q);
            }
        }
        if best.1 == usize::MAX {
            break;
        }
        support.push(best.1);

        amplitudes = solve_least_squares(model, &support, c)
            .ok_or(Error::DegenerateSupport {
                selected: support.len(),
            })?;
        residual = c.to_vec();
        for (&q, &b) in support.iter().zip(&amplitudes) {
            for (r, a) in residual.iter_mut().zip(model.column(q)) {
                *r -= a * b;
            }
        }
    }

    // report in grid order
    let mut order: Vec<usize> = (0..support.len()).collect();
    order.sort_by_key(|&i| support[i]);
    let support_sorted: Vec<usize> = order.iter().map(|&i| support[i]).collect();
    let values_sorted: Vec<Complex64> = order.iter().map(|&i| amplitudes[i]).collect();
    SparseVector::new(support_sorted, values_sorted, n)
}

/// Normal-equation least squares on the selected columns via complex
/// Cholesky; `None` when the Gram matrix loses positive-definiteness.
fn solve_least_squares(
    model: &MeasurementModel,
    support: &[usize],
    c: &[Complex64],
) -> Option<Vec<Complex64>> {
    let k = support.len();
    let mut gram = vec![Complex64::new(0.0, 0.0); k * k];
    let mut rhs = vec![Complex64::new(0.0, 0.0); k];
    for (i, &qi) in support.iter().enumerate() {
        for (j, &qj) in support.iter().enumerate().skip(i) {
            let g: Complex64 = model
                .column(qi)
                .zip(model.column(qj))
                .map(|(a, b)| a.conj() * b)
                .sum();
            gram[i * k + j] = g;
            gram[j * k + i] = g.conj();
        }
        rhs[i] = model.column(qi).zip(c).map(|(a, r)| a.conj() * r).sum();
    }
    cholesky_solve(&mut gram, &rhs, k)
}

/// Solves G x = b for Hermitian positive-definite G (row-major, k x k).
fn cholesky_solve(g: &mut [Complex64], b: &[Complex64], k: usize) -> Option<Vec<Complex64>> {
    // in-place lower factor: G = L L^H
    let scale = (0..k)
        .map(|i| g[i * k + i].re.abs())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    for j in 0..k {
        let mut d = g[j * k + j].re;
        for p in 0..j {
            d -= g[j * k + p].norm_sqr();
        }
        if d <= 1e-12 * scale {
            return None;
        }
        let d = d.sqrt();
        g[j * k + j] = Complex64::new(d, 0.0);
        for i in j + 1..k {
            let mut v = g[i * k + j];
            for p in 0..j {
                v -= g[i * k + p] * g[j * k + p].conj();
            }
            g[i * k + j] = v / d;
        }
    }
    // forward: L y = b
    let mut y = b.to_vec();
    for i in 0..k {
        for p in 0..i {
            let lp = g[i * k + p];
            let yp = y[p];
            y[i] -= lp * yp;
        }
        y[i] /= g[i * k + i].re;
    }
    // backward: L^H x = y
    for i in (0..k).rev() {
        for p in i + 1..k {
            let lp = g[p * k + i].conj();
            let yp = y[p];
            y[i] -= lp * yp;
        }
        y[i] /= g[i * k + i].re;
    }
    Some(y)
}

/// How recovered lines are rendered for imaging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RenderMode {
    /// |b_l| stems at their grid cells.
    Stems,
    /// Stems convolved with a Gaussian pulse envelope (peak 1) of the given
    /// width in grid cells.
    Smoothed { sigma_cells: f64 },
}

/// Nonnegative radial amplitude line of length `grid.size()`.
pub fn reconstruct_line(x: &SparseVector, grid: &GridSpec, mode: RenderMode) -> Vec<f64> {
    let mut line = vec![0.0; grid.size()];
    for (&q, &b) in x.support().iter().zip(x.values()) {
        line[q] += b.norm();
    }
    match mode {
        RenderMode::Stems => line,
        RenderMode::Smoothed { sigma_cells } => {
            let reach = (4.0 * sigma_cells).ceil() as isize;
            let kernel: Vec<f64> = (-reach..=reach)
                .map(|d| (-(d as f64).powi(2) / (2.0 * sigma_cells * sigma_cells)).exp())
                .collect();
            let n = line.len() as isize;
            let mut out = vec![0.0; line.len()];
            for (i, &v) in line.iter().enumerate() {
                if v != 0.0 {
                    for (d, &kv) in kernel.iter().enumerate() {
                        let j = i as isize + d as isize - reach;
                        if j >= 0 && j < n {
                            out[j as usize] += v * kv;
                        }
                    }
                }
            }
            out
        }
    }
}
