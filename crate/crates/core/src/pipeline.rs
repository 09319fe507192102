//! Orchestration of the two acquisition paths, rate accounting, metrics,
//! and reproducible artifact output.

use crate::beamform::reference_line;
use crate::config::{Mode, ResolvedConfig};
use crate::containers::{save_coefficients, save_lines, CoefficientSet};
use crate::error::{Error, Result};
use crate::imaging::{
    log_compress, scan_convert, write_image, CartesianImage, ImageFormat, PolarImage,
};
use crate::phantom::{generate_raw_data, RawChannelData};
use crate::pulse::channel_fourier_coefficients;
use crate::recovery::{
    build_measurement_model, omp_recover, reconstruct_line, MeasurementModel, RenderMode,
    SparseVector,
};
use crate::xampling::{
    aggregate_coefficients, build_approx_operator, build_channel_index_set, exact_projections,
    kernel_spectra, select_truncation_window, ApproxOperator, CacheKey, OperatorCache,
};
use num_complex::Complex64;
use rayon::prelude::*;
use std::path::Path;

/// Per-line sample budgets and the achieved rate reductions.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub mode: Mode,
    /// floor(T * fs) real samples per element and line at the full rate.
    pub raw_real_per_line: usize,
    /// Real samples per line after classical band-limited down-sampling;
    /// the baseline every reduction is measured against.
    pub reference_real_per_line: usize,
    /// Number of beamformed Fourier coefficients (complex) per line.
    pub kappa_size: usize,
    /// reference / (2 * kappa_size): the kernel-projection path.
    pub exact_reduction: f64,
    /// Mean per-element coefficient count in the windowed path.
    pub approx_mean_samples: Option<f64>,
    pub approx_max_samples: Option<usize>,
    /// reference / (2 * mean): the windowed low-rate path.
    pub approx_reduction: Option<f64>,
}

impl RateReport {
    pub fn key_values(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("mode".to_string(), self.mode.name().to_string()),
            (
                "raw_real_samples_per_line".to_string(),
                self.raw_real_per_line.to_string(),
            ),
            (
                "reference_real_samples_per_line".to_string(),
                self.reference_real_per_line.to_string(),
            ),
            ("kappa_size".to_string(), self.kappa_size.to_string()),
            (
                "exact_complex_samples_per_line".to_string(),
                self.kappa_size.to_string(),
            ),
            (
                "exact_reduction".to_string(),
                format!("{:.6}", self.exact_reduction),
            ),
        ];
        if let (Some(mean), Some(max), Some(red)) = (
            self.approx_mean_samples,
            self.approx_max_samples,
            self.approx_reduction,
        ) {
            kv.push(("approx_mean_samples".to_string(), format!("{mean:.6}")));
            kv.push(("approx_max_samples".to_string(), max.to_string()));
            kv.push(("approx_reduction".to_string(), format!("{red:.6}")));
        }
        kv
    }
}

/// ||a - b|| / max(||a||, ||b||); 0 when both are empty of energy.
pub fn nrmse(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na.max(nb);
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageMetrics {
    pub nrmse: f64,
    pub peak_ratio: f64,
}

/// Whole-image comparison of two polar images of equal layout.
pub fn compare_polar(a: &PolarImage, b: &PolarImage) -> Result<ImageMetrics> {
    if a.num_beams() != b.num_beams() || a.num_radial() != b.num_radial() {
        return Err(Error::DimensionMismatch {
            expected: a.values().len(),
            got: b.values().len(),
        });
    }
    let pa = a.max_value();
    let pb = b.max_value();
    Ok(ImageMetrics {
        nrmse: nrmse(a.values(), b.values()),
        peak_ratio: if pa > 0.0 { pb / pa } else { 0.0 },
    })
}

/// Comparison over the sector mask of two rendered images.
pub fn compare_cartesian(a: &CartesianImage, b: &CartesianImage) -> Result<ImageMetrics> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch {
            expected: a.width * a.height,
            got: b.width * b.height,
        });
    }
    let mut av = Vec::new();
    let mut bv = Vec::new();
    for i in 0..a.pixels.len() {
        if a.inside[i] {
            av.push(a.pixels[i]);
            bv.push(b.pixels[i]);
        }
    }
    let pa = av.iter().fold(0.0f64, |m, &v| m.max(v));
    let pb = bv.iter().fold(0.0f64, |m, &v| m.max(v));
    Ok(ImageMetrics {
        nrmse: nrmse(&av, &bv),
        peak_ratio: if pa > 0.0 { pb / pa } else { 0.0 },
    })
}

/// Strongest `count` local maxima under rectangular non-max suppression of
/// ±`suppress.0` beams and ±`suppress.1` cells.
pub fn strongest_peaks(
    img: &PolarImage,
    count: usize,
    suppress: (usize, usize),
) -> Vec<(usize, usize, f64)> {
    let b = img.num_beams();
    let r = img.num_radial();
    let mut work: Vec<f64> = img.values().to_vec();
    let mut peaks = Vec::with_capacity(count);
    for _ in 0..count {
        let (mut best_v, mut best_i) = (f64::NEG_INFINITY, usize::MAX);
        for (i, &v) in work.iter().enumerate() {
            if v > best_v {
                best_v = v;
                best_i = i;
            }
        }
        if best_i == usize::MAX || best_v <= 0.0 {
            break;
        }
        let (bb, rr) = (best_i / r, best_i % r);
        peaks.push((bb, rr, best_v));
        let b_lo = bb.saturating_sub(suppress.0);
        let b_hi = (bb + suppress.0 + 1).min(b);
        let r_lo = rr.saturating_sub(suppress.1);
        let r_hi = (rr + suppress.1 + 1).min(r);
        for wb in b_lo..b_hi {
            for wr in r_lo..r_hi {
                work[wb * r + wr] = -1.0;
            }
        }
    }
    peaks
}

/// Distance from each expected (beam, cell) target to the nearest of the
/// strongest detected peaks.
pub fn localization_errors(
    img: &PolarImage,
    expected: &[(usize, usize)],
    suppress: (usize, usize),
) -> Vec<(usize, usize)> {
    let peaks = strongest_peaks(img, expected.len(), suppress);
    expected
        .iter()
        .map(|&(eb, ec)| {
            peaks
                .iter()
                .map(|&(pb, pc, _)| {
                    (
                        (pb as i64 - eb as i64).unsigned_abs() as usize,
                        (pc as i64 - ec as i64).unsigned_abs() as usize,
                    )
                })
                .min_by_key(|&(db, dc)| db * 10_000 + dc)
                .unwrap_or((usize::MAX, usize::MAX))
        })
        .collect()
}

/// Generates raw data for the configured phantom, calibrating noise from the
/// requested channel SNR when one is given. Returns the data and the noise
/// sigma actually used.
pub fn simulate(cfg: &ResolvedConfig) -> Result<(RawChannelData, f64)> {
    let mut phantom = cfg.phantom.clone();
    if let Some(snr_db) = cfg.snr_db {
        phantom.noise_sigma = 0.0;
        let clean = generate_raw_data(
            &phantom,
            &cfg.geometry,
            &cfg.beams,
            &cfg.window,
            &cfg.pulse,
            cfg.profile_sigma,
            cfg.seed,
            cfg.radial_spreading,
        )?;
        let peak = clean.samples().iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        if peak == 0.0 {
            return Err(Error::InvalidArgument(
                "snr_db calibration needs a nonzero phantom".to_string(),
            ));
        }
        phantom.noise_sigma = peak / 10f64.powf(snr_db / 20.0);
    }
    let data = generate_raw_data(
        &phantom,
        &cfg.geometry,
        &cfg.beams,
        &cfg.window,
        &cfg.pulse,
        cfg.profile_sigma,
        cfg.seed,
        cfg.radial_spreading,
    )?;
    Ok((data, phantom.noise_sigma))
}

/// Classical path: per-beam envelopes resampled onto the recovery grid so
/// both paths share a radial axis.
pub fn reference_polar(cfg: &ResolvedConfig, raw: &RawChannelData) -> Result<PolarImage> {
    let n = cfg.grid.size();
    let fs = cfg.window.sample_rate();
    let step_seconds = cfg.grid.step();
    let rows: Result<Vec<Vec<f64>>> = cfg
        .beams
        .par_iter()
        .enumerate()
        .map(|(bi, &beam)| {
            let line = reference_line(
                raw,
                bi,
                beam,
                &cfg.geometry,
                cfg.pulse.center_frequency(),
                n,
            )?;
            let env = line.envelope;
            let resampled = (0..n)
                .map(|q| {
                    let pos = q as f64 * step_seconds * fs;
                    let i0 = pos.floor() as usize;
                    let frac = pos - i0 as f64;
                    if i0 + 1 < env.len() {
                        env[i0] * (1.0 - frac) + env[i0 + 1] * frac
                    } else {
                        0.0
                    }
                })
                .collect();
            Ok(resampled)
        })
        .collect();
    PolarImage::from_lines(
        rows?,
        cfg.beams.iter().map(|b| b.radians()).collect(),
        radial_step_meters(cfg),
    )
}

fn radial_step_meters(cfg: &ResolvedConfig) -> f64 {
    cfg.geometry.medium().sound_speed() * cfg.grid.step() / 2.0
}

/// Builds the windowed-path operator for one (element, beam) pair.
fn build_channel_operator(
    cfg: &ResolvedConfig,
    gamma: f64,
    beam: crate::geometry::BeamDirection,
) -> Result<ApproxOperator> {
    let spectra = kernel_spectra(
        &cfg.kappa,
        gamma,
        beam,
        &cfg.window,
        cfg.n_max,
        cfg.spectrum_oversample,
    );
    let windows: Result<Vec<(i64, i64)>> = spectra
        .iter()
        .map(|s| select_truncation_window(s, cfg.rho))
        .collect();
    let windows = windows?;
    let set = build_channel_index_set(&cfg.kappa, &windows);
    build_approx_operator(&cfg.kappa, &set, &spectra, &windows)
}

/// The cache identity for the configured setup.
pub fn operator_cache_key(cfg: &ResolvedConfig) -> CacheKey {
    CacheKey {
        geometry_fingerprint: cfg.geometry.fingerprint(),
        kappa: cfg.kappa.clone(),
        rho: cfg.rho,
        n_max: cfg.n_max as u32,
        num_beams: cfg.beams.len() as u32,
        num_elements: cfg.geometry.num_elements() as u32,
    }
}

/// Builds every (beam, element) operator offline, beam-major, for reuse
/// across datasets acquired with the same setup.
pub fn build_operator_cache(cfg: &ResolvedConfig) -> Result<OperatorCache> {
    let m_count = cfg.geometry.num_elements();
    let per_beam: Result<Vec<Vec<ApproxOperator>>> = cfg
        .beams
        .par_iter()
        .map(|&beam| {
            (0..m_count)
                .map(|m| build_channel_operator(cfg, cfg.geometry.gamma(m), beam))
                .collect()
        })
        .collect();
    Ok(OperatorCache {
        key: operator_cache_key(cfg),
        operators: per_beam?.into_iter().flatten().collect(),
    })
}

/// Per-beam aggregated beamformed coefficients through the selected
/// compressed path. A prebuilt operator cache shortcuts the windowed path.
pub fn compressed_coefficients_cached(
    cfg: &ResolvedConfig,
    raw: &RawChannelData,
    mode: Mode,
    cache: Option<&OperatorCache>,
) -> Result<CoefficientSet> {
    let m_count = cfg.geometry.num_elements();
    if raw.num_elements() != m_count {
        return Err(Error::DimensionMismatch {
            expected: m_count,
            got: raw.num_elements(),
        });
    }
    if let Some(cache) = cache {
        if cache.key != operator_cache_key(cfg) {
            return Err(Error::StaleCache(
                "operator cache does not match the configured setup".to_string(),
            ));
        }
    }
    let per_beam: Result<Vec<(Vec<Complex64>, Vec<u32>)>> = cfg
        .beams
        .par_iter()
        .enumerate()
        .map(|(bi, &beam)| {
            let mut per_channel = Vec::with_capacity(m_count);
            let mut counts = Vec::with_capacity(m_count);
            for m in 0..m_count {
                let wave = raw.channel(bi, m);
                let gamma = cfg.geometry.gamma(m);
                match mode {
                    Mode::Exact => {
                        per_channel.push(exact_projections(
                            wave,
                            &cfg.kappa,
                            gamma,
                            beam,
                            &cfg.window,
                        ));
                    }
                    Mode::Approx => {
                        let built;
                        let op = match cache {
                            Some(cache) => cache.operator(bi, m),
                            None => {
                                built = build_channel_operator(cfg, gamma, beam)?;
                                &built
                            }
                        };
                        let set = op.channel_indices();
                        let phi = channel_fourier_coefficients(wave, set.indices())?;
                        per_channel.push(op.apply(&phi)?);
                        counts.push(set.len() as u32);
                    }
                    Mode::Reference => {
                        return Err(Error::InvalidArgument(
                            "reference mode produces no compressed coefficients".to_string(),
                        ))
                    }
                }
            }
            Ok((aggregate_coefficients(&per_channel)?, counts))
        })
        .collect();
    let per_beam = per_beam?;
    let mut coefficients = Vec::with_capacity(cfg.beams.len() * cfg.kappa.len());
    let mut counts_all = Vec::new();
    for (c, counts) in per_beam {
        coefficients.extend(c);
        counts_all.extend(counts);
    }
    Ok(CoefficientSet {
        duration: cfg.window.duration(),
        kappa_indices: cfg.kappa.indices().to_vec(),
        mode_name: mode.name().to_string(),
        coefficients,
        num_beams: cfg.beams.len(),
        per_element_counts: if counts_all.is_empty() {
            None
        } else {
            Some(counts_all)
        },
    })
}

/// [`compressed_coefficients_cached`] without a cache.
pub fn compressed_coefficients(
    cfg: &ResolvedConfig,
    raw: &RawChannelData,
    mode: Mode,
) -> Result<CoefficientSet> {
    compressed_coefficients_cached(cfg, raw, mode, None)
}

/// Builds the sensing model the recovery stage shares across beams.
pub fn measurement_model(cfg: &ResolvedConfig) -> Result<MeasurementModel> {
    build_measurement_model(
        &cfg.kappa,
        &cfg.pulse,
        cfg.grid,
        cfg.window.duration(),
        cfg.h_min,
    )
}

/// Recovers every beam and renders the sparse lines into a polar image.
/// Beams whose least-squares step degenerates yield empty lines and are
/// counted rather than failing the run.
pub fn recover_lines(
    cfg: &ResolvedConfig,
    coef: &CoefficientSet,
) -> Result<(Vec<SparseVector>, PolarImage, usize)> {
    let model = measurement_model(cfg)?;
    let k = cfg.kappa.len();
    if coef.kappa_indices != cfg.kappa.indices() {
        return Err(Error::StaleCache(
            "coefficient file was produced for a different kappa".to_string(),
        ));
    }
    let results: Vec<Result<SparseVector>> = coef
        .coefficients
        .par_chunks(k)
        .map(|c| omp_recover(c, &model, cfg.l_target, cfg.residual_tol))
        .collect();
    let mut recovered = Vec::with_capacity(coef.num_beams);
    let mut degenerate = 0usize;
    for r in results {
        match r {
            Ok(x) => recovered.push(x),
            Err(Error::DegenerateSupport { .. }) => {
                degenerate += 1;
                recovered.push(SparseVector::empty(cfg.grid.size()));
            }
            Err(e) => return Err(e),
        }
    }
    let sigma_cells = cfg.pulse.envelope_sigma() / cfg.grid.step();
    let rows: Vec<Vec<f64>> = recovered
        .iter()
        .map(|x| reconstruct_line(x, &cfg.grid, RenderMode::Smoothed { sigma_cells }))
        .collect();
    let polar = PolarImage::from_lines(
        rows,
        cfg.beams.iter().map(|b| b.radians()).collect(),
        radial_step_meters(cfg),
    )?;
    Ok((recovered, polar, degenerate))
}

/// Log compression and scan conversion.
pub fn render(cfg: &ResolvedConfig, polar: &PolarImage) -> Result<CartesianImage> {
    let compressed = log_compress(polar, cfg.render.dynamic_range_db)?;
    scan_convert(&compressed, &cfg.render)
}

/// Rate accounting for the configured setup.
pub fn rate_report(cfg: &ResolvedConfig, coef: Option<&CoefficientSet>) -> RateReport {
    let raw = cfg.window.num_samples();
    let reference = 2 * cfg.grid.size().div_ceil(2);
    let k = cfg.kappa.len();
    let (mean, max, red) = match coef.and_then(|c| c.per_element_counts.as_ref()) {
        Some(counts) if !counts.is_empty() => {
            let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / counts.len() as f64;
            let max = counts.iter().copied().max().unwrap_or(0) as usize;
            (
                Some(mean),
                Some(max),
                Some(reference as f64 / (2.0 * mean)),
            )
        }
        _ => (None, None, None),
    };
    RateReport {
        mode: cfg.mode,
        raw_real_per_line: raw,
        reference_real_per_line: reference,
        kappa_size: k,
        exact_reduction: reference as f64 / (2.0 * k as f64),
        approx_mean_samples: mean,
        approx_max_samples: max,
        approx_reduction: red,
    }
}

/// Everything a full run produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub reference_polar: PolarImage,
    pub reference_image: CartesianImage,
    pub compressed_polar: Option<PolarImage>,
    pub compressed_image: Option<CartesianImage>,
    pub recovered: Vec<SparseVector>,
    pub coefficients: Option<CoefficientSet>,
    pub rate: RateReport,
    pub metrics: Vec<(String, String)>,
    pub noise_sigma_used: f64,
}

/// Runs the reference path and, unless the mode is `reference`, the selected
/// compressed path; computes metrics; writes artifacts when an output
/// directory is configured. Deterministic for a fixed config and seed.
pub fn run_pipeline(cfg: &ResolvedConfig) -> Result<PipelineOutput> {
    let (raw, noise_sigma_used) = simulate(cfg)?;
    let reference = reference_polar(cfg, &raw)?;
    let reference_image = render(cfg, &reference)?;

    let mut metrics: Vec<(String, String)> = Vec::new();
    metrics.push(("seed".to_string(), cfg.seed.0.to_string()));
    metrics.push((
        "noise_sigma_used".to_string(),
        format!("{noise_sigma_used:.9e}"),
    ));
    metrics.push(("beams".to_string(), cfg.beams.len().to_string()));
    metrics.push((
        "elements".to_string(),
        cfg.geometry.num_elements().to_string(),
    ));

    let mut compressed_polar = None;
    let mut compressed_image = None;
    let mut recovered = Vec::new();
    let mut coefficients = None;
    if cfg.mode != Mode::Reference {
        let coef = compressed_coefficients(cfg, &raw, cfg.mode)?;
        let (xs, polar, degenerate) = recover_lines(cfg, &coef)?;
        metrics.push(("degenerate_beams".to_string(), degenerate.to_string()));
        let image = render(cfg, &polar)?;
        let pm = compare_polar(&reference, &polar)?;
        metrics.push((
            "polar_nrmse_ref_vs_compressed".to_string(),
            format!("{:.6}", pm.nrmse),
        ));
        metrics.push((
            "polar_peak_ratio".to_string(),
            format!("{:.6}", pm.peak_ratio),
        ));
        let cm = compare_cartesian(&reference_image, &image)?;
        metrics.push((
            "cartesian_nrmse_ref_vs_compressed".to_string(),
            format!("{:.6}", cm.nrmse),
        ));

        if !cfg.phantom.scatterers.is_empty() {
            let expected = expected_positions(cfg);
            let errs = localization_errors(&polar, &expected, (2, 40));
            for (i, (db, dc)) in errs.iter().enumerate() {
                metrics.push((format!("target_{i}_beam_error"), db.to_string()));
                metrics.push((format!("target_{i}_cell_error"), dc.to_string()));
            }
        }

        recovered = xs;
        compressed_polar = Some(polar);
        compressed_image = Some(image);
        coefficients = Some(coef);
    }

    let rate = rate_report(cfg, coefficients.as_ref());
    let mut all_metrics = rate.key_values();
    all_metrics.extend(metrics);

    let out = PipelineOutput {
        reference_polar: reference,
        reference_image,
        compressed_polar,
        compressed_image,
        recovered,
        coefficients,
        rate,
        metrics: all_metrics,
        noise_sigma_used,
    };
    if let Some(dir) = &cfg.out_dir {
        write_artifacts(cfg, &out, dir)?;
    }
    Ok(out)
}

/// Expected (beam, cell) positions of the configured point scatterers.
pub fn expected_positions(cfg: &ResolvedConfig) -> Vec<(usize, usize)> {
    let c = cfg.geometry.medium().sound_speed();
    cfg.phantom
        .scatterers
        .iter()
        .map(|s| {
            let beam = cfg
                .beams
                .iter()
                .enumerate()
                .min_by(|a, b| {
                    (a.1.radians() - s.angle)
                        .abs()
                        .total_cmp(&(b.1.radians() - s.angle).abs())
                })
                .map(|(i, _)| i)
                .unwrap_or(0);
            let cell = ((2.0 * s.range / c) / cfg.grid.step()).round() as usize;
            (beam, cell.min(cfg.grid.size() - 1))
        })
        .collect()
}

fn write_artifacts(cfg: &ResolvedConfig, out: &PipelineOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_image(&out.reference_image, &dir.join("reference.pgm"), ImageFormat::Pgm)?;
    save_lines(&out.reference_polar, &dir.join("reference_polar.snln"))?;
    if cfg.write_png {
        write_image(&out.reference_image, &dir.join("reference.png"), ImageFormat::Png)?;
    }
    if let (Some(img), Some(polar)) = (&out.compressed_image, &out.compressed_polar) {
        let stem = format!("compressed_{}", cfg.mode.name());
        write_image(img, &dir.join(format!("{stem}.pgm")), ImageFormat::Pgm)?;
        save_lines(polar, &dir.join(format!("{stem}_polar.snln")))?;
        if cfg.write_png {
            write_image(img, &dir.join(format!("{stem}.png")), ImageFormat::Png)?;
        }
    }
    if let Some(coef) = &out.coefficients {
        save_coefficients(coef, &dir.join("coefficients.sncf"))?;
    }
    let mut report = String::new();
    for (k, v) in &out.metrics {
        report.push_str(k);
        report.push('=');
        report.push_str(v);
        report.push('\n');
    }
    std::fs::write(dir.join("report.txt"), report)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_str;

    fn desk_config(extra: &str) -> ResolvedConfig {
        // top-level keys (mode, seed) must precede the table sections
        let base = r#"
[geometry]
num_elements = 16

[scan]
beams = 8

[acquisition]
duration = 60e-6
sample_rate = 25e6

[grid]
size = 400

[sparsity]
targets = 3
oversampling = 5
residual_tol = 0.05

[truncation]
n_max = 64

[output]
image_width = 96
image_height = 96

[[phantom.scatterers]]
range = 0.02
angle_deg = 6.0
reflectivity = 1.0
"#;
        parse_config_str(&format!("{extra}\n{base}")).unwrap()
    }

    #[test]
    fn nrmse_definition() {
        assert_eq!(nrmse(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(nrmse(&[3.0, 4.0], &[0.0, 0.0]), 1.0);
        assert_eq!(nrmse(&[0.0], &[0.0]), 0.0);
    }

    #[test]
    fn compare_rejects_mismatched_layouts() {
        let a = PolarImage::new(vec![1.0; 8], vec![0.0], 1e-4).unwrap();
        let b = PolarImage::new(vec![1.0; 6], vec![0.0], 1e-4).unwrap();
        assert!(matches!(
            compare_polar(&a, &b),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn peaks_respect_suppression() {
        let mut vals = vec![0.0; 4 * 100];
        vals[100 + 30] = 1.0;
        vals[100 + 32] = 0.9; // swallowed by suppression around (1, 30)
        vals[300 + 70] = 0.8;
        let img = PolarImage::new(vals, vec![-0.3, -0.1, 0.1, 0.3], 1e-4).unwrap();
        let peaks = strongest_peaks(&img, 2, (1, 5));
        assert_eq!(peaks.len(), 2);
        assert_eq!((peaks[0].0, peaks[0].1), (1, 30));
        assert_eq!((peaks[1].0, peaks[1].1), (3, 70));
    }

    #[test]
    fn exact_mode_run_localizes_the_target() {
        let cfg = desk_config("mode = \"exact\"");
        let out = run_pipeline(&cfg).unwrap();
        assert!(out.compressed_polar.is_some());
        let expected = expected_positions(&cfg);
        let errs = localization_errors(out.compressed_polar.as_ref().unwrap(), &expected, (2, 40));
        assert!(errs[0].0 <= 1 && errs[0].1 <= 1, "errors {errs:?}");
        assert_eq!(out.rate.kappa_size, 30);
        assert!(out.rate.approx_reduction.is_none());
    }

    #[test]
    fn reference_mode_skips_compressed_path() {
        let cfg = desk_config("mode = \"reference\"");
        let out = run_pipeline(&cfg).unwrap();
        assert!(out.compressed_polar.is_none());
        assert!(out.recovered.is_empty());
        assert_eq!(out.rate.reference_real_per_line, 400);
    }

    #[test]
    fn cached_operators_reproduce_the_inline_route() {
        let cfg = desk_config("mode = \"approx\"");
        let (raw, _) = simulate(&cfg).unwrap();
        let inline = compressed_coefficients(&cfg, &raw, Mode::Approx).unwrap();
        let cache = build_operator_cache(&cfg).unwrap();
        let cached =
            compressed_coefficients_cached(&cfg, &raw, Mode::Approx, Some(&cache)).unwrap();
        assert_eq!(inline, cached);

        // staleness is caught before any arithmetic
        let mut other = desk_config("mode = \"approx\"");
        other.rho = 0.99;
        assert!(matches!(
            compressed_coefficients_cached(&other, &raw, Mode::Approx, Some(&cache)),
            Err(Error::StaleCache(_))
        ));
    }

    #[test]
    fn artifacts_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = desk_config("mode = \"exact\"\nseed = 9");
        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        cfg.out_dir = Some(out_a.clone());
        run_pipeline(&cfg).unwrap();
        cfg.out_dir = Some(out_b.clone());
        run_pipeline(&cfg).unwrap();
        for name in ["reference.pgm", "compressed_exact.pgm", "report.txt"] {
            let a = std::fs::read(out_a.join(name)).unwrap();
            let b = std::fs::read(out_b.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }
    }
}
