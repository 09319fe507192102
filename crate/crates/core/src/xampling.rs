//! Compressed-beamforming core: the per-channel analog kernels, their
//! Fourier-series spectra, truncation-window selection, channel index sets,
//! the per-channel linear operators, and aggregation into beamformed Fourier
//! coefficients.
//!
//! Two routes produce the beamformed coefficients c_{j,m}:
//!
//! * the exact route integrates the channel against the kernel
//!   `g_{j,m}(t;θ) = q_{j,m}(t;θ) e^{-i2πk_j t/T}` directly (the oracle), and
//! * the approximate route expands the channel in its own Fourier series and
//!   keeps only the kernel-spectrum window `[N1, N2]` holding a fraction ρ of
//!   the computed energy, so each element contributes a small set κ_m of
//!   low-rate coefficients.
//!
//! `q` carries an indicator on `[|γ|, T_m(θ))`, the change-of-variables
//! Jacobian `1 + γ²cos²θ/(t−γsinθ)²`, and a unit-modulus phase
//! `exp{i(2π/T) k_j γ(γ−t sinθ)/(t−γsinθ)}`.

use crate::error::{Error, Result};
use crate::geometry::{channel_window_end, AcquisitionWindow, BeamDirection};
use crate::pulse::FourierIndexSet;
use crate::util::{self, Crc32};
use num_complex::Complex64;
use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Default computed support [-N_MAX, N_MAX] for kernel spectra.
pub const DEFAULT_N_MAX: usize = 256;
/// Default dense-sampling factor for the kernel-spectrum transform; bounds
/// aliasing from the kernel's edge chirp well below the window energies.
pub const DEFAULT_OVERSAMPLE: usize = 8;

/// Kernel phase per unit Fourier index and the Jacobian factor at time `t`,
/// or `None` outside the indicator support. The phase split lets consecutive
/// k_j reuse one evaluation.
#[inline]
fn kernel_parts(t: f64, gamma: f64, sin_t: f64, cos_t: f64, t_end: f64, duration: f64) -> Option<(f64, f64)> {
    if t < gamma.abs() || t >= t_end {
        return None;
    }
    if gamma == 0.0 {
        return Some((0.0, 1.0));
    }
    let den = t - gamma * sin_t;
    if den <= 0.0 {
        // reachable only at the measure-zero |sinθ| = 1, t = |γ| corner
        return None;
    }
    let jac = 1.0 + gamma * gamma * cos_t * cos_t / (den * den);
    let psi = 2.0 * PI / duration * gamma * (gamma - t * sin_t) / den;
    Some((psi, jac))
}

/// g_{j,m}(t;θ): the modulated kernel evaluated at one time point. Zero
/// outside the indicator support; |g| equals the Jacobian factor inside.
pub fn kernel_time_function(
    k_j: i64,
    gamma: f64,
    theta: BeamDirection,
    win: &AcquisitionWindow,
    t: f64,
) -> Complex64 {
    let duration = win.duration();
    let (sin_t, cos_t) = theta.radians().sin_cos();
    let t_end = channel_window_end(theta, gamma, duration);
    match kernel_parts(t, gamma, sin_t, cos_t, t_end, duration) {
        None => Complex64::new(0.0, 0.0),
        Some((psi, jac)) => {
            let phase = k_j as f64 * (psi - 2.0 * PI * t / duration);
            jac * Complex64::from_polar(1.0, phase)
        }
    }
}

/// Exact projection `c_{j,m} = (1/T) ∫ g_{j,m}(t;θ) φ_m(t) dt` by the
/// rectangle rule on the stored sample grid. This is the oracle route the
/// windowed approximation is judged against.
pub fn exact_channel_projection(
    waveform: &[f64],
    k_j: i64,
    gamma: f64,
    theta: BeamDirection,
    win: &AcquisitionWindow,
) -> Complex64 {
    let n = win.num_samples();
    debug_assert_eq!(waveform.len(), n);
    let fs = win.sample_rate();
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, &x) in waveform.iter().enumerate() {
        if x != 0.0 {
            acc += kernel_time_function(k_j, gamma, theta, win, i as f64 / fs) * x;
        }
    }
    acc / n as f64
}

/// Exact projections for a whole index set, sharing the kernel evaluation
/// across indices (incremental phase powers). Matches
/// [`exact_channel_projection`] per index to machine precision.
pub fn exact_projections(
    waveform: &[f64],
    kappa: &FourierIndexSet,
    gamma: f64,
    theta: BeamDirection,
    win: &AcquisitionWindow,
) -> Vec<Complex64> {
    let n = win.num_samples();
    debug_assert_eq!(waveform.len(), n);
    let duration = win.duration();
    let fs = win.sample_rate();
    let (sin_t, cos_t) = theta.radians().sin_cos();
    let t_end = channel_window_end(theta, gamma, duration);

    // weighted kernel state at the first index; stepped between indices
    let mut chi = Vec::with_capacity(n);
    let mut cur = Vec::with_capacity(n);
    let k0 = kappa.indices()[0];
    for (i, &x) in waveform.iter().enumerate() {
        let t = i as f64 / fs;
        match kernel_parts(t, gamma, sin_t, cos_t, t_end, duration) {
            Some((psi, jac)) if x != 0.0 => {
                let c = psi - 2.0 * PI * t / duration;
                chi.push(c);
                cur.push(jac * x * Complex64::from_polar(1.0, k0 as f64 * c));
            }
            _ => {}
        }
    }

    let scale = 1.0 / n as f64;
    let mut out = Vec::with_capacity(kappa.len());
    let mut prev_k = k0;
    for &k in kappa.indices() {
        let delta = k - prev_k;
        if delta == 1 {
            for (c, &x) in cur.iter_mut().zip(&chi) {
                *c *= Complex64::from_polar(1.0, x);
            }
        } else if delta != 0 {
            for (c, &x) in cur.iter_mut().zip(&chi) {
                *c *= Complex64::from_polar(1.0, delta as f64 * x);
            }
        }
        prev_k = k;
        out.push(cur.iter().sum::<Complex64>() * scale);
    }
    out
}

/// Fourier-series coefficients Q_{j,m;θ}[n] of the kernel q over a computed
/// support n ∈ [-n_max, n_max].
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpectrum {
    n_max: usize,
    coefficients: Vec<Complex64>,
}

impl KernelSpectrum {
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Q[n] for n in [-n_max, n_max].
    pub fn coefficient(&self, n: i64) -> Complex64 {
        self.coefficients[(n + self.n_max as i64) as usize]
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn energy(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Samples q densely on [0, T) and takes a discrete transform; the grid is
/// `oversample` times the coefficient support (rounded up to a fast FFT
/// length).
pub fn kernel_spectrum(
    k_j: i64,
    gamma: f64,
    theta: BeamDirection,
    win: &AcquisitionWindow,
    n_max: usize,
    oversample: usize,
) -> KernelSpectrum {
    kernel_spectra(
        &FourierIndexSet::new(vec![k_j]).expect("single index"),
        gamma,
        theta,
        win,
        n_max,
        oversample,
    )
    .pop()
    .expect("one spectrum per index")
}

/// Kernel spectra for every index in `kappa`, reusing the dense sampling.
pub fn kernel_spectra(
    kappa: &FourierIndexSet,
    gamma: f64,
    theta: BeamDirection,
    win: &AcquisitionWindow,
    n_max: usize,
    oversample: usize,
) -> Vec<KernelSpectrum> {
    assert!(oversample >= 4, "kernel spectrum needs oversample >= 4");
    assert!(n_max >= 1);
    let duration = win.duration();
    let grid = util::next_fast_len(oversample * (2 * n_max + 1));
    let (sin_t, cos_t) = theta.radians().sin_cos();
    let t_end = channel_window_end(theta, gamma, duration);

    // dense q at the first index; stepped in place between indices
    let k0 = kappa.indices()[0];
    let mut psis = vec![0.0f64; grid];
    let mut cur = vec![Complex64::new(0.0, 0.0); grid];
    for i in 0..grid {
        let t = i as f64 * duration / grid as f64;
        if let Some((psi, jac)) = kernel_parts(t, gamma, sin_t, cos_t, t_end, duration) {
            psis[i] = psi;
            cur[i] = jac * Complex64::from_polar(1.0, k0 as f64 * psi);
        }
    }

    let mut out = Vec::with_capacity(kappa.len());
    let mut prev_k = k0;
    let mut buf = vec![Complex64::new(0.0, 0.0); grid];
    for &k in kappa.indices() {
        let delta = k - prev_k;
        if delta != 0 {
            for (c, &p) in cur.iter_mut().zip(&psis) {
                if c.re != 0.0 || c.im != 0.0 {
                    *c *= Complex64::from_polar(1.0, delta as f64 * p);
                }
            }
        }
        prev_k = k;
        buf.copy_from_slice(&cur);
        util::fft_forward(&mut buf);
        let scale = 1.0 / grid as f64;
        let coefficients = (-(n_max as i64)..=n_max as i64)
            .map(|n| buf[n.rem_euclid(grid as i64) as usize] * scale)
            .collect();
        out.push(KernelSpectrum {
            n_max,
            coefficients,
        });
    }
    out
}

/// Minimal-width contiguous window [N1, N2] whose energy reaches
/// `rho * total computed energy`; among equal widths the most energetic wins,
/// ties broken toward the most centered (smallest |N1 + N2|).
pub fn select_truncation_window(spectrum: &KernelSpectrum, rho: f64) -> Result<(i64, i64)> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "energy fraction rho must lie in (0, 1), got {rho}"
        )));
    }
    let energies: Vec<f64> = spectrum.coefficients.iter().map(|c| c.norm_sqr()).collect();
    let len = energies.len();
    let total: f64 = energies.iter().sum();
    if total == 0.0 {
        return Ok((0, 0));
    }
    let target = rho * total;
    let mut prefix = Vec::with_capacity(len + 1);
    let mut acc = 0.0;
    prefix.push(0.0);
    for &e in &energies {
        acc += e;
        prefix.push(acc);
    }
    let max_sum = |w: usize| -> f64 {
        (0..=len - w)
            .map(|i| prefix[i + w] - prefix[i])
            .fold(f64::NEG_INFINITY, f64::max)
    };
    // max sliding-window sum is nondecreasing in width: binary search it
    let (mut lo, mut hi) = (1usize, len);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if max_sum(mid) >= target {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let width = lo;
    let offset = spectrum.n_max as i64;
    let mut best: Option<(f64, i64, (i64, i64))> = None;
    for i in 0..=len - width {
        let e = prefix[i + width] - prefix[i];
        if e >= target {
            let n1 = i as i64 - offset;
            let n2 = n1 + width as i64 - 1;
            let center = (n1 + n2).abs();
            let better = match &best {
                None => true,
                Some((be, bc, _)) => e > *be || (e == *be && center < *bc),
            };
            if better {
                best = Some((e, center, (n1, n2)));
            }
        }
    }
    Ok(best.expect("binary search guarantees a feasible window").2)
}

/// Sorted distinct channel-coefficient indices κ_m some element must deliver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelIndexSet {
    indices: Vec<i64>,
}

impl ChannelIndexSet {
    pub fn indices(&self) -> &[i64] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn position(&self, k: i64) -> Option<usize> {
        self.indices.binary_search(&k).ok()
    }
}

/// κ_m = ∪_j { k_j − n : N1(j) ≤ n ≤ N2(j) }.
pub fn build_channel_index_set(
    kappa: &FourierIndexSet,
    windows: &[(i64, i64)],
) -> ChannelIndexSet {
    assert_eq!(kappa.len(), windows.len(), "one window per index");
    let mut set = BTreeSet::new();
    for (&k, &(n1, n2)) in kappa.indices().iter().zip(windows) {
        for n in n1..=n2 {
            set.insert(k - n);
        }
    }
    ChannelIndexSet {
        indices: set.into_iter().collect(),
    }
}

/// The per-channel linear map from the κ_m coefficient vector to the K
/// approximated beamformed coefficients: row j holds Q_{j}[n] at the column
/// of index k_j − n.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxOperator {
    kappa_size: usize,
    channel_indices: ChannelIndexSet,
    matrix: Vec<Complex64>, // K x K_m row-major
}

impl ApproxOperator {
    pub fn kappa_size(&self) -> usize {
        self.kappa_size
    }

    pub fn channel_indices(&self) -> &ChannelIndexSet {
        &self.channel_indices
    }

    pub fn matrix(&self) -> &[Complex64] {
        &self.matrix
    }

    pub fn row(&self, j: usize) -> &[Complex64] {
        let w = self.channel_indices.len();
        &self.matrix[j * w..(j + 1) * w]
    }

    /// ĉ_m = A_m(θ) Φ_m.
    pub fn apply(&self, phi_m: &[Complex64]) -> Result<Vec<Complex64>> {
        if phi_m.len() != self.channel_indices.len() {
            return Err(Error::DimensionMismatch {
                expected: self.channel_indices.len(),
                got: phi_m.len(),
            });
        }
        Ok((0..self.kappa_size)
            .map(|j| {
                self.row(j)
                    .iter()
                    .zip(phi_m)
                    .map(|(a, p)| a * p)
                    .sum::<Complex64>()
            })
            .collect())
    }
}

/// Assembles A_m(θ) from per-index spectra and truncation windows.
pub fn build_approx_operator(
    kappa: &FourierIndexSet,
    channel_indices: &ChannelIndexSet,
    spectra: &[KernelSpectrum],
    windows: &[(i64, i64)],
) -> Result<ApproxOperator> {
    if spectra.len() != kappa.len() || windows.len() != kappa.len() {
        return Err(Error::DimensionMismatch {
            expected: kappa.len(),
            got: spectra.len().min(windows.len()),
        });
    }
    let width = channel_indices.len();
    let mut matrix = vec![Complex64::new(0.0, 0.0); kappa.len() * width];
    for (j, (&k, &(n1, n2))) in kappa.indices().iter().zip(windows).enumerate() {
        for n in n1..=n2 {
            let col = channel_indices.position(k - n).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "channel index set misses k_j - n = {} required by row {j}",
                    k - n
                ))
            })?;
            matrix[j * width + col] = spectra[j].coefficient(n);
        }
    }
    Ok(ApproxOperator {
        kappa_size: kappa.len(),
        channel_indices: channel_indices.clone(),
        matrix,
    })
}

/// Elementwise mean over channels: c = (1/M) Σ_m c_m.
pub fn aggregate_coefficients(per_channel: &[Vec<Complex64>]) -> Result<Vec<Complex64>> {
    let m = per_channel.len();
    if m == 0 {
        return Err(Error::InvalidArgument(
            "aggregate needs at least one channel vector".to_string(),
        ));
    }
    let k = per_channel[0].len();
    if per_channel.iter().any(|v| v.len() != k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: per_channel
                .iter()
                .map(|v| v.len())
                .find(|&l| l != k)
                .unwrap(),
        });
    }
    let scale = 1.0 / m as f64;
    Ok((0..k)
        .map(|j| per_channel.iter().map(|v| v[j]).sum::<Complex64>() * scale)
        .collect())
}

/// Identifies the setup an operator cache was built for.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheKey {
    pub geometry_fingerprint: u32,
    pub kappa: FourierIndexSet,
    pub rho: f64,
    pub n_max: u32,
    pub num_beams: u32,
    pub num_elements: u32,
}

/// Offline-built operators for every (beam, element), beam-major.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorCache {
    pub key: CacheKey,
    pub operators: Vec<ApproxOperator>,
}

impl OperatorCache {
    pub fn operator(&self, beam: usize, element: usize) -> &ApproxOperator {
        &self.operators[beam * self.key.num_elements as usize + element]
    }
}

const CACHE_MAGIC: &[u8; 8] = b"SNOC0001";

/// Cache layout: magic; u32 geometry hash; u32 B, M, K; f64 rho; u32 n_max;
/// K i32 kappa indices; per (beam, element) record of u32 K_m, K_m i32
/// indices, K*K_m complex f64; CRC-32 of everything after the magic.
pub fn save_operator_cache(cache: &OperatorCache, path: &Path) -> Result<()> {
    let mut body: Vec<u8> = Vec::new();
    let key = &cache.key;
    body.extend_from_slice(&key.geometry_fingerprint.to_le_bytes());
    body.extend_from_slice(&key.num_beams.to_le_bytes());
    body.extend_from_slice(&key.num_elements.to_le_bytes());
    body.extend_from_slice(&(key.kappa.len() as u32).to_le_bytes());
    body.extend_from_slice(&key.rho.to_le_bytes());
    body.extend_from_slice(&key.n_max.to_le_bytes());
    for &k in key.kappa.indices() {
        body.extend_from_slice(&(k as i32).to_le_bytes());
    }
    for op in &cache.operators {
        body.extend_from_slice(&(op.channel_indices.len() as u32).to_le_bytes());
        for &k in op.channel_indices.indices() {
            body.extend_from_slice(&(k as i32).to_le_bytes());
        }
        for v in &op.matrix {
            body.extend_from_slice(&v.re.to_le_bytes());
            body.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    let mut crc = Crc32::new();
    crc.update(&body);
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&body)?;
    w.write_all(&crc.finalize().to_le_bytes())?;
    w.flush()?;
    Ok(())
}

/// Loads a cache and rejects it if the header does not match `expected`.
pub fn load_operator_cache(path: &Path, expected: &CacheKey) -> Result<OperatorCache> {
    let pstr = path.display().to_string();
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    if r.read_exact(&mut magic).is_err() || &magic != CACHE_MAGIC {
        return Err(Error::BadMagic {
            path: pstr,
            expected: "SNOC0001",
        });
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if rest.len() < 4 {
        return Err(Error::TruncatedPayload {
            path: pstr,
            expected: 4,
            got: rest.len() as u64,
        });
    }
    let (body, tail) = rest.split_at(rest.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = util::crc32(body);
    if stored != computed {
        return Err(Error::ChecksumMismatch {
            path: pstr,
            stored,
            computed,
        });
    }

    let mut cur = std::io::Cursor::new(body);
    let mut u32buf = [0u8; 4];
    let mut f64buf = [0u8; 8];
    let truncated = |cur: &std::io::Cursor<&[u8]>| Error::TruncatedPayload {
        path: path.display().to_string(),
        expected: body.len() as u64 + 1,
        got: cur.position(),
    };
    macro_rules! rd_u32 {
        () => {{
            cur.read_exact(&mut u32buf).map_err(|_| truncated(&cur))?;
            u32::from_le_bytes(u32buf)
        }};
    }
    macro_rules! rd_f64 {
        () => {{
            cur.read_exact(&mut f64buf).map_err(|_| truncated(&cur))?;
            f64::from_le_bytes(f64buf)
        }};
    }

    let geometry_fingerprint = rd_u32!();
    let num_beams = rd_u32!();
    let num_elements = rd_u32!();
    let k_count = rd_u32!() as usize;
    let rho = rd_f64!();
    let n_max = rd_u32!();
    let mut kappa_idx = Vec::with_capacity(k_count);
    for _ in 0..k_count {
        kappa_idx.push(rd_u32!() as i32 as i64);
    }
    let kappa = FourierIndexSet::new(kappa_idx)
        .map_err(|e| Error::InvalidArgument(format!("cache kappa: {e}")))?;
    let key = CacheKey {
        geometry_fingerprint,
        kappa,
        rho,
        n_max,
        num_beams,
        num_elements,
    };
    if key != *expected {
        return Err(Error::StaleCache(format!(
            "cache built for a different setup (stored {key:?})"
        )));
    }

    let mut operators = Vec::with_capacity((num_beams * num_elements) as usize);
    for _ in 0..num_beams * num_elements {
        let k_m = rd_u32!() as usize;
        let mut idx = Vec::with_capacity(k_m);
        for _ in 0..k_m {
            idx.push(rd_u32!() as i32 as i64);
        }
        let mut matrix = Vec::with_capacity(k_count * k_m);
        for _ in 0..k_count * k_m {
            let re = rd_f64!();
            let im = rd_f64!();
            matrix.push(Complex64::new(re, im));
        }
        operators.push(ApproxOperator {
            kappa_size: k_count,
            channel_indices: ChannelIndexSet { indices: idx },
            matrix,
        });
    }
    Ok(OperatorCache { key, operators })
}
