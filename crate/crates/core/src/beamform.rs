//! Nyquist-rate reference path: dynamic receive focusing, channel averaging,
//! envelope detection, and band-limited down-sampling.
//!
//! Every compressed result is compared against lines produced here.

use crate::error::{Error, Result};
use crate::geometry::{warp_time, AcquisitionWindow, BeamDirection, ScanGeometry};
use crate::phantom::RawChannelData;
use crate::util;
use num_complex::Complex64;
use std::f64::consts::PI;

/// Applies the dynamic-focusing warp to one channel: output sample n is the
/// input linearly interpolated at `warp_time(n / fs)`. Evaluation points at
/// or beyond the last stored sample yield 0 rather than clamping, so no
/// spurious edge energy enters the sum.
pub fn dynamic_focus_channel(
    waveform: &[f64],
    theta: BeamDirection,
    gamma: f64,
    win: &AcquisitionWindow,
) -> Vec<f64> {
    let n = win.num_samples();
    debug_assert_eq!(waveform.len(), n);
    if gamma == 0.0 {
        // identity warp lands exactly on the sample grid
        return waveform.to_vec();
    }
    let fs = win.sample_rate();
    (0..n)
        .map(|i| {
            let src = warp_time(i as f64 / fs, theta, gamma) * fs;
            let i0 = src.floor();
            let frac = src - i0;
            let i0 = i0 as usize;
            if i0 + 1 < n {
                waveform[i0] * (1.0 - frac) + waveform[i0 + 1] * frac
            } else if i0 + 1 == n && frac == 0.0 {
                waveform[i0]
            } else {
                0.0
            }
        })
        .collect()
}

/// Elementwise mean of the aligned channels.
pub fn beamform(channels: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = channels.len();
    if m == 0 {
        return Err(Error::InvalidArgument(
            "beamform needs at least one channel".to_string(),
        ));
    }
    let n = channels[0].len();
    if channels.iter().any(|c| c.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: channels.iter().map(|c| c.len()).find(|&l| l != n).unwrap(),
        });
    }
    let scale = 1.0 / m as f64;
    let mut out = vec![0.0; n];
    for c in channels {
        for (o, x) in out.iter_mut().zip(c) {
            *o += x;
        }
    }
    for o in out.iter_mut() {
        *o *= scale;
    }
    Ok(out)
}

/// Magnitude of the analytic signal (one-sided spectrum reconstruction).
pub fn envelope(line: &[f64]) -> Vec<f64> {
    let n = line.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex64> = line.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    util::fft_forward(&mut buf);
    // DC and Nyquist stay; positive frequencies doubled; negatives zeroed
    let half = n / 2;
    for v in buf.iter_mut().take(half).skip(1) {
        *v *= 2.0;
    }
    for v in buf.iter_mut().skip(half + 1) {
        *v = Complex64::new(0.0, 0.0);
    }
    if n % 2 == 1 && half >= 1 {
        buf[half] *= 2.0;
    }
    util::fft_inverse(&mut buf);
    buf.into_iter().map(|v| v.norm()).collect()
}

/// Band-limited decimation of a beamformed line: mix to baseband at `f_c`,
/// low-pass to the essential (4 MHz two-sided) band, and resample to
/// `ceil(grid_size / 2)` complex values. Each complex sample counts as two
/// real samples in the rate accounting.
pub fn downsample_line(
    line: &[f64],
    win: &AcquisitionWindow,
    center_frequency: f64,
    grid_size: usize,
) -> Vec<Complex64> {
    let n = line.len();
    let n_complex = grid_size.div_ceil(2);
    if n == 0 || n_complex == 0 {
        return Vec::new();
    }
    let fs = win.sample_rate();
    let baseband: Vec<Complex64> = line
        .iter()
        .enumerate()
        .map(|(i, &x)| x * Complex64::from_polar(1.0, -2.0 * PI * center_frequency * i as f64 / fs))
        .collect();
    let filtered = fir_lowpass_same(&baseband, 2.0e6 / fs, 129);
    (0..n_complex)
        .map(|i| {
            let pos = i as f64 * n as f64 / n_complex as f64;
            let i0 = pos.floor() as usize;
            let frac = pos - i0 as f64;
            if i0 + 1 < n {
                filtered[i0] * (1.0 - frac) + filtered[i0 + 1] * frac
            } else {
                filtered[n - 1]
            }
        })
        .collect()
}

/// Windowed-sinc low-pass (Hamming), zero-phase "same" convolution.
/// `cutoff` is the one-sided passband edge as a fraction of fs.
fn fir_lowpass_same(x: &[Complex64], cutoff: f64, taps: usize) -> Vec<Complex64> {
    let mid = (taps / 2) as isize;
    let h: Vec<f64> = (0..taps)
        .map(|k| {
            let t = k as isize - mid;
            let sinc = if t == 0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * t as f64).sin() / (PI * t as f64)
            };
            let w = 0.54 - 0.46 * (2.0 * PI * k as f64 / (taps - 1) as f64).cos();
            sinc * w
        })
        .collect();
    let n = x.len() as isize;
    (0..n)
        .map(|i| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &hk) in h.iter().enumerate() {
                let j = i + mid - k as isize;
                if j >= 0 && j < n {
                    acc += x[j as usize] * hk;
                }
            }
            acc
        })
        .collect()
}

/// One beam through the whole reference path.
#[derive(Debug, Clone)]
pub struct ReferenceLine {
    /// Dynamic-focused channel mean at the full rate.
    pub beamformed: Vec<f64>,
    /// Analytic-signal magnitude of `beamformed`.
    pub envelope: Vec<f64>,
    /// Band-limited complex decimation; `2 * len` real values is the
    /// classical per-line sample budget.
    pub downsampled: Vec<Complex64>,
}

/// Warp, average, envelope, and down-sample one beam of raw data.
pub fn reference_line(
    raw: &RawChannelData,
    beam_index: usize,
    beam: BeamDirection,
    geom: &ScanGeometry,
    center_frequency: f64,
    grid_size: usize,
) -> Result<ReferenceLine> {
    if beam_index >= raw.num_beams() {
        return Err(Error::InvalidArgument(format!(
            "beam index {beam_index} out of range ({} beams)",
            raw.num_beams()
        )));
    }
    if geom.num_elements() != raw.num_elements() {
        return Err(Error::DimensionMismatch {
            expected: raw.num_elements(),
            got: geom.num_elements(),
        });
    }
    let win = *raw.window();
    let warped: Vec<Vec<f64>> = (0..raw.num_elements())
        .map(|m| dynamic_focus_channel(raw.channel(beam_index, m), beam, geom.gamma(m), &win))
        .collect();
    let beamformed = beamform(&warped)?;
    let env = envelope(&beamformed);
    let downsampled = downsample_line(&beamformed, &win, center_frequency, grid_size);
    Ok(ReferenceLine {
        beamformed,
        envelope: env,
        downsampled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{round_trip_delay, sector_beams, MediumParams};
    use crate::phantom::{generate_raw_data, Phantom, RngSeed, Scatterer};
    use crate::pulse::{synthesize_channel, FRIChannelParams, PulseSpec};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn identity_warp_at_reference_element() {
        let win = AcquisitionWindow::new(20e-6, 10e6).unwrap();
        let wave: Vec<f64> = (0..win.num_samples()).map(|i| (i as f64 * 0.37).sin()).collect();
        let out = dynamic_focus_channel(&wave, BeamDirection::new(0.3).unwrap(), 0.0, &win);
        assert_eq!(out, wave);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let win = AcquisitionWindow::new(20e-6, 10e6).unwrap();
        let out = dynamic_focus_channel(
            &vec![0.0; win.num_samples()],
            BeamDirection::new(-0.2).unwrap(),
            3e-6,
            &win,
        );
        assert!(out.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn warped_pulse_peaks_at_twice_depth_time() {
        // place a pulse at tau_m(t0); after focusing it should sit at 2 t0
        let win = AcquisitionWindow::new(60e-6, 50e6).unwrap();
        let p = PulseSpec::from_bandwidth(3.4e6, 2.0e6, 1.0).unwrap();
        let theta = BeamDirection::new(0.25).unwrap();
        let gamma = 4e-6;
        let t0 = 14e-6;
        let tau = round_trip_delay(t0, theta, gamma);
        let wave =
            synthesize_channel(&FRIChannelParams::new(vec![(tau, 1.0)]).unwrap(), &p, &win);
        let focused = dynamic_focus_channel(&wave, theta, gamma, &win);
        let peak = focused
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap()
            .0 as f64;
        let cycles = win.sample_rate() / 3.4e6;
        assert!(
            (peak - 2.0 * t0 * win.sample_rate()).abs() <= cycles / 2.0 + 1.0,
            "peak at {peak}, expected {}",
            2.0 * t0 * win.sample_rate()
        );
    }

    #[test]
    fn beamform_identical_copies() {
        let c = vec![1.0, -2.0, 3.5];
        let out = beamform(&vec![c.clone(); 5]).unwrap();
        for (a, b) in out.iter().zip(&c) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn beamform_opposite_pair_cancels() {
        let x = vec![0.3, -1.7, 2.2];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let out = beamform(&[x, neg]).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn beamform_rejects_empty_and_ragged() {
        assert!(matches!(
            beamform(&[]),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            beamform(&[vec![1.0, 2.0], vec![1.0]]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn beamform_scales_linearly() {
        let chans: Vec<Vec<f64>> = (0..4)
            .map(|m| (0..64).map(|i| ((i + m) as f64 * 0.11).sin()).collect())
            .collect();
        let scaled: Vec<Vec<f64>> = chans
            .iter()
            .map(|c| c.iter().map(|x| 2.5 * x).collect())
            .collect();
        let a = beamform(&chans).unwrap();
        let b = beamform(&scaled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((y - 2.5 * x).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn coherent_gain_and_noise_suppression() {
        // Monte-Carlo: signal adds coherently, independent noise averages
        // down by ~sqrt(M)
        let m = 16;
        let n = 2048;
        let mut ratios = Vec::new();
        for seed in 0..8u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let signal: Vec<f64> = (0..n).map(|i| (i as f64 * 0.2).sin()).collect();
            let chans: Vec<Vec<f64>> = (0..m)
                .map(|_| {
                    signal
                        .iter()
                        .map(|&s| s + rng.gen_range(-1.0..1.0))
                        .collect()
                })
                .collect();
            let bf = beamform(&chans).unwrap();
            let peak_bf = bf.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
            let peak_ch = chans[0].iter().fold(0.0f64, |a, &x| a.max(x.abs()));
            // residual noise after subtracting the known signal
            let res_bf: f64 = bf
                .iter()
                .zip(&signal)
                .map(|(a, s)| (a - s).powi(2))
                .sum::<f64>()
                .sqrt();
            let res_ch: f64 = chans[0]
                .iter()
                .zip(&signal)
                .map(|(a, s)| (a - s).powi(2))
                .sum::<f64>()
                .sqrt();
            ratios.push(res_ch / res_bf);
            assert!(peak_bf <= peak_ch + 1e-12);
        }
        let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let expect = (m as f64).sqrt();
        assert!(
            (mean_ratio - expect).abs() < 0.5,
            "noise suppression {mean_ratio}, expected ~{expect}"
        );
    }

    #[test]
    fn envelope_of_tone_is_flat() {
        let n = 4096;
        let k0 = 300.0;
        let line: Vec<f64> = (0..n)
            .map(|i| (2.0 * PI * k0 * i as f64 / n as f64).cos())
            .collect();
        let env = envelope(&line);
        for &e in &env {
            assert!((e - 1.0).abs() < 0.01, "ripple {e}");
        }
    }

    #[test]
    fn envelope_of_zero_is_zero() {
        assert!(envelope(&vec![0.0; 128]).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn envelope_of_pulse_tracks_gaussian() {
        let win = AcquisitionWindow::new(40e-6, 50e6).unwrap();
        let p = PulseSpec::from_bandwidth(3.4e6, 2.0e6, 1.0).unwrap();
        let t1 = 20e-6;
        let wave =
            synthesize_channel(&FRIChannelParams::new(vec![(t1, 1.0)]).unwrap(), &p, &win);
        let env = envelope(&wave);
        let (peak_i, peak_v) = env
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, v)| (i as f64, *v))
            .unwrap();
        assert!((peak_i - t1 * win.sample_rate()).abs() <= 1.0);
        assert!((peak_v - 1.0).abs() < 0.02);
    }

    fn small_raw() -> (RawChannelData, Vec<BeamDirection>, ScanGeometry) {
        let geom = ScanGeometry::uniform(
            8,
            1540.0 / 2.5e6 / 2.0,
            MediumParams::new(1540.0).unwrap(),
        )
        .unwrap();
        let beams = sector_beams(4, PI / 3.0);
        let win = AcquisitionWindow::new(207e-6, 50e6).unwrap();
        let p = PulseSpec::from_bandwidth(3.4e6, 2.0e6, 1.0).unwrap();
        let phantom = Phantom::points(vec![Scatterer {
            range: 0.05,
            angle: beams[2].radians(),
            reflectivity: 1.0,
        }]);
        let ps = (beams[1].radians() - beams[0].radians()) / 2.0;
        let raw =
            generate_raw_data(&phantom, &geom, &beams, &win, &p, ps, RngSeed(5), false).unwrap();
        (raw, beams, geom)
    }

    #[test]
    fn reference_line_default_lengths() {
        let (raw, beams, geom) = small_raw();
        let line = reference_line(&raw, 2, beams[2], &geom, 3.4e6, 1662).unwrap();
        assert_eq!(line.beamformed.len(), 10350);
        assert_eq!(line.envelope.len(), 10350);
        assert_eq!(line.downsampled.len(), 831); // 1662 real values
    }

    #[test]
    fn reference_line_peak_at_round_trip_time() {
        let (raw, beams, geom) = small_raw();
        let line = reference_line(&raw, 2, beams[2], &geom, 3.4e6, 1662).unwrap();
        let peak = line
            .envelope
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0 as f64;
        let expect = 2.0 * 0.05 / 1540.0 * raw.window().sample_rate();
        assert!((peak - expect).abs() <= 2.0, "peak {peak} expect {expect}");
    }

    #[test]
    fn warped_channels_align_for_on_beam_target() {
        let (raw, beams, geom) = small_raw();
        let win = *raw.window();
        let mut peaks = Vec::new();
        for m in 0..geom.num_elements() {
            let focused =
                dynamic_focus_channel(raw.channel(2, m), beams[2], geom.gamma(m), &win);
            let env = envelope(&focused);
            let peak = env
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0 as isize;
            peaks.push(peak);
        }
        let (lo, hi) = (
            *peaks.iter().min().unwrap(),
            *peaks.iter().max().unwrap(),
        );
        assert!(hi - lo <= 1, "peaks spread {peaks:?}");
    }

    #[test]
    fn zero_raw_gives_zero_everywhere() {
        let geom = ScanGeometry::uniform(
            4,
            3e-4,
            MediumParams::new(1540.0).unwrap(),
        )
        .unwrap();
        let beams = sector_beams(2, PI / 3.0);
        let win = AcquisitionWindow::new(40e-6, 10e6).unwrap();
        let p = PulseSpec::from_bandwidth(3.4e6, 2.0e6, 1.0).unwrap();
        let raw = generate_raw_data(
            &Phantom::points(vec![]),
            &geom,
            &beams,
            &win,
            &p,
            0.05,
            RngSeed(0),
            false,
        )
        .unwrap();
        let line = reference_line(&raw, 0, beams[0], &geom, 3.4e6, 400).unwrap();
        assert!(line.beamformed.iter().all(|&x| x == 0.0));
        assert!(line.envelope.iter().all(|&x| x == 0.0));
        assert!(line.downsampled.iter().all(|c| c.norm() == 0.0));
    }
}
