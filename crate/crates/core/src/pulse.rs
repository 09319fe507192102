//! The known pulse shape, its closed-form spectrum, and finite-rate-of-
//! innovation parameter sets for channel and beamformed signals.
//!
//! The pulse is a Gaussian-modulated cosine
//! `h(t) = A exp(-t^2 / 2σ^2) cos(2π f_c t)`, chosen because its
//! continuous-time Fourier transform is available in closed form — the
//! sparse-recovery measurement model needs H(ω) exactly.

use crate::error::{Error, Result};
use crate::geometry::AcquisitionWindow;
use crate::util;
use num_complex::Complex64;
use std::f64::consts::{PI, SQRT_2};

/// Gaussian-modulated cosine pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSpec {
    center_frequency: f64,
    envelope_sigma: f64,
    amplitude: f64,
}

impl PulseSpec {
    pub fn new(center_frequency: f64, envelope_sigma: f64, amplitude: f64) -> Result<Self> {
        let mut problems = Vec::new();
        if !(center_frequency > 0.0) {
            problems.push(format!(
                "pulse.center_frequency: must be > 0, got {center_frequency}"
            ));
        }
        if !(envelope_sigma > 0.0) {
            problems.push(format!(
                "pulse.envelope_sigma: must be > 0, got {envelope_sigma}"
            ));
        }
        if amplitude == 0.0 || !amplitude.is_finite() {
            problems.push(format!(
                "pulse.amplitude: must be finite and nonzero, got {amplitude}"
            ));
        }
        if problems.is_empty() {
            Ok(Self {
                center_frequency,
                envelope_sigma,
                amplitude,
            })
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// Sigma from a two-sided −6 dB bandwidth of the spectral envelope.
    pub fn from_bandwidth(center_frequency: f64, bandwidth_6db: f64, amplitude: f64) -> Result<Self> {
        if !(bandwidth_6db > 0.0) {
            return Err(Error::Validation(vec![format!(
                "pulse.bandwidth_6db: must be > 0, got {bandwidth_6db}"
            )]));
        }
        let half_width = PI * bandwidth_6db; // rad/s at -6 dB
        let sigma = (2.0 * (10f64.powf(6.0 / 20.0)).ln()).sqrt() / half_width;
        Self::new(center_frequency, sigma, amplitude)
    }

    pub fn center_frequency(&self) -> f64 {
        self.center_frequency
    }

    pub fn envelope_sigma(&self) -> f64 {
        self.envelope_sigma
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Peak of |H(ω)|, attained at ±ω_c.
    pub fn spectrum_peak(&self) -> f64 {
        pulse_ctft(self, 2.0 * PI * self.center_frequency)
    }
}

/// h(t); even in t.
pub fn pulse_value(p: &PulseSpec, t: f64) -> f64 {
    let s = p.envelope_sigma;
    p.amplitude * (-t * t / (2.0 * s * s)).exp() * (2.0 * PI * p.center_frequency * t).cos()
}

/// Closed-form CTFT of h. Real-valued since h is even:
/// `H(ω) = (A σ sqrt(2π) / 2) [e^{-σ^2 (ω-ω_c)^2 / 2} + e^{-σ^2 (ω+ω_c)^2 / 2}]`.
pub fn pulse_ctft(p: &PulseSpec, omega: f64) -> f64 {
    let s = p.envelope_sigma;
    let wc = 2.0 * PI * p.center_frequency;
    let g = |w: f64| (-s * s * w * w / 2.0).exp();
    p.amplitude * s * SQRT_2 * PI.sqrt() / 2.0 * (g(omega - wc) + g(omega + wc))
}

/// Per-channel pulse-stream parameters: (arrival time, amplitude), sorted by
/// arrival, no duplicate times.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FRIChannelParams {
    arrivals: Vec<(f64, f64)>,
}

impl FRIChannelParams {
    /// Sorts by arrival time and merges exact-duplicate times by summing
    /// amplitudes.
    pub fn new(mut arrivals: Vec<(f64, f64)>) -> Result<Self> {
        if arrivals.iter().any(|(t, a)| !t.is_finite() || !a.is_finite()) {
            return Err(Error::InvalidArgument(
                "FRI arrivals must be finite".to_string(),
            ));
        }
        if arrivals.iter().any(|(t, _)| *t < 0.0) {
            return Err(Error::InvalidArgument(
                "FRI arrival times must be >= 0".to_string(),
            ));
        }
        arrivals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(arrivals.len());
        for (t, a) in arrivals {
            match merged.last_mut() {
                Some(last) if last.0 == t => last.1 += a,
                _ => merged.push((t, a)),
            }
        }
        Ok(Self { arrivals: merged })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn arrivals(&self) -> &[(f64, f64)] {
        &self.arrivals
    }

    pub fn len(&self) -> usize {
        self.arrivals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrivals.is_empty()
    }
}

/// Beamformed pulse-stream parameters on the quantized grid: echo l sits at
/// t_l = q_l * grid_step.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformedFRIParams {
    echoes: Vec<(usize, f64)>,
    grid_step: f64,
    grid_size: usize,
}

impl BeamformedFRIParams {
    pub fn new(mut echoes: Vec<(usize, f64)>, grid_step: f64, grid_size: usize) -> Result<Self> {
        let mut problems = Vec::new();
        if !(grid_step > 0.0) || grid_size == 0 {
            problems.push(format!(
                "grid: step = {grid_step}, size = {grid_size} (need > 0)"
            ));
        }
        if echoes.len() > grid_size {
            problems.push(format!(
                "echo count {} exceeds grid size {grid_size}",
                echoes.len()
            ));
        }
        echoes.sort_by_key(|(q, _)| *q);
        if echoes.iter().any(|(q, _)| *q >= grid_size) {
            problems.push("echo grid index out of range".to_string());
        }
        if echoes.windows(2).any(|w| w[0].0 == w[1].0) {
            problems.push("echo grid indices must be distinct".to_string());
        }
        if problems.is_empty() {
            Ok(Self {
                echoes,
                grid_step,
                grid_size,
            })
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn echoes(&self) -> &[(usize, f64)] {
        &self.echoes
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }
}

/// Pulse contributions below exp(-PULSE_SUPPORT_SIGMAS^2/2) ~ 1.3e-14 of the
/// envelope peak are clipped during synthesis.
const PULSE_SUPPORT_SIGMAS: f64 = 8.0;

/// Sampled pulse stream: `sum_l a_l h(t - t_l)` at t = n / fs, n < floor(T fs).
pub fn synthesize_channel(
    params: &FRIChannelParams,
    p: &PulseSpec,
    win: &AcquisitionWindow,
) -> Vec<f64> {
    let n = win.num_samples();
    let fs = win.sample_rate();
    let mut out = vec![0.0; n];
    let reach = PULSE_SUPPORT_SIGMAS * p.envelope_sigma;
    for &(t_l, a_l) in &params.arrivals {
        let lo = (((t_l - reach) * fs).floor().max(0.0)) as usize;
        let hi = ((((t_l + reach) * fs).ceil()) as usize).min(n);
        for (i, slot) in out.iter_mut().enumerate().take(hi).skip(lo) {
            *slot += a_l * pulse_value(p, i as f64 / fs - t_l);
        }
    }
    out
}

/// Distinct sorted Fourier-series indices k_j selecting which coefficients a
/// scheme measures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FourierIndexSet {
    indices: Vec<i64>,
}

impl FourierIndexSet {
    pub fn new(mut indices: Vec<i64>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument(
                "Fourier index set must be nonempty".to_string(),
            ));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(
                "Fourier index set must be distinct".to_string(),
            ));
        }
        Ok(Self { indices })
    }

    /// `count` consecutive indices centered at `center` (center lands in the
    /// upper half for even counts).
    pub fn consecutive(center: i64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidArgument(
                "Fourier index set must be nonempty".to_string(),
            ));
        }
        let start = center - (count as i64) / 2;
        Ok(Self {
            indices: (start..start + count as i64).collect(),
        })
    }

    pub fn indices(&self) -> &[i64] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Fourier-series coefficients `(1/T) ∫ w(t) e^{-i2πkt/T} dt` of a sampled
/// waveform, by the rectangle rule on the stored samples (one FFT, then bin
/// picks; negative k wraps). Indices must stay below the Nyquist limit of
/// the stored data.
pub fn channel_fourier_coefficients(
    waveform: &[f64],
    indices: &[i64],
) -> Result<Vec<Complex64>> {
    let n = waveform.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty waveform".to_string()));
    }
    let nyquist = (n / 2) as i64;
    if let Some(&k) = indices.iter().find(|k| k.unsigned_abs() as i64 > nyquist) {
        return Err(Error::InvalidArgument(format!(
            "Fourier index {k} beyond the Nyquist limit ±{nyquist} of {n} stored samples"
        )));
    }
    let mut buf: Vec<Complex64> = waveform.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    util::fft_forward(&mut buf);
    let scale = 1.0 / n as f64;
    Ok(indices
        .iter()
        .map(|&k| buf[k.rem_euclid(n as i64) as usize] * scale)
        .collect())
}

/// Exact Fourier coefficients of the on-grid beamformed pulse stream:
/// `c_j = (1/T) H(2πk_j/T) Σ_l b_l e^{-i2π k_j q_l Δ_s / T}`.
pub fn beamformed_coefficient_model(
    params: &BeamformedFRIParams,
    p: &PulseSpec,
    kappa: &FourierIndexSet,
    window_duration: f64,
) -> Vec<Complex64> {
    kappa
        .indices()
        .iter()
        .map(|&k| {
            let h = pulse_ctft(p, 2.0 * PI * k as f64 / window_duration);
            let mut acc = Complex64::new(0.0, 0.0);
            for &(q, b) in params.echoes() {
                let phase =
                    -2.0 * PI * k as f64 * q as f64 * params.grid_step() / window_duration;
                acc += b * Complex64::from_polar(1.0, phase);
            }
            acc * (h / window_duration)
        })
        .collect()
}
