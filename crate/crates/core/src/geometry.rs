//! Array geometry, propagation delays, and the dynamic-focusing time warp.
//!
//! A transmit pulse leaves the origin at t = 0 along direction `theta`
//! (measured from broadside, i.e. the depth axis). A reflection born at
//! travel time t reaches element m, whose offset along the array is
//! `delta_m = c * gamma_m`, at the round-trip time
//!
//! ```text
//! tau_m(t) = t + sqrt((t cos θ)^2 + (γ_m − t sin θ)^2)
//! ```
//!
//! Dynamic focusing aligns every channel with the reference element by the
//! time warp `warp_time`, which satisfies `warp_time(2t) == tau_m(t)`.

use crate::error::{Error, Result};
use crate::util;

/// Propagation medium; soft tissue is ~1540 m/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MediumParams {
    sound_speed: f64,
}

impl MediumParams {
    pub fn new(sound_speed: f64) -> Result<Self> {
        if !(sound_speed > 0.0) || !sound_speed.is_finite() {
            return Err(Error::Validation(vec![format!(
                "medium.sound_speed: must be positive and finite, got {sound_speed}"
            )]));
        }
        Ok(Self { sound_speed })
    }

    pub fn sound_speed(&self) -> f64 {
        self.sound_speed
    }
}

/// Receive-array layout: signed element offsets (meters) along the array,
/// strictly increasing, with the reference element exactly at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanGeometry {
    element_offsets: Vec<f64>,
    reference_index: usize,
    medium: MediumParams,
}

impl ScanGeometry {
    pub fn new(
        element_offsets: Vec<f64>,
        reference_index: usize,
        medium: MediumParams,
    ) -> Result<Self> {
        let mut problems = Vec::new();
        if element_offsets.is_empty() {
            problems.push("geometry.element_offsets: need at least one element".to_string());
        }
        if reference_index >= element_offsets.len() {
            problems.push(format!(
                "geometry.reference_index: {} out of range for {} elements",
                reference_index,
                element_offsets.len()
            ));
        } else if element_offsets[reference_index] != 0.0 {
            problems.push(format!(
                "geometry.element_offsets[{}]: reference offset must be exactly 0, got {}",
                reference_index, element_offsets[reference_index]
            ));
        }
        if element_offsets.windows(2).any(|w| !(w[0] < w[1])) {
            problems.push("geometry.element_offsets: must be strictly increasing".to_string());
        }
        if element_offsets.iter().any(|d| !d.is_finite()) {
            problems.push("geometry.element_offsets: must be finite".to_string());
        }
        if problems.is_empty() {
            Ok(Self {
                element_offsets,
                reference_index,
                medium,
            })
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// Uniform linear array of `num_elements` at `pitch` meters, centered so
    /// element `num_elements / 2` sits exactly at the origin.
    pub fn uniform(num_elements: usize, pitch: f64, medium: MediumParams) -> Result<Self> {
        if num_elements == 0 || !(pitch > 0.0) {
            return Err(Error::Validation(vec![format!(
                "geometry: num_elements = {num_elements}, pitch = {pitch} (need > 0)"
            )]));
        }
        let m0 = num_elements / 2;
        let offsets = (0..num_elements)
            .map(|m| (m as isize - m0 as isize) as f64 * pitch)
            .collect();
        Self::new(offsets, m0, medium)
    }

    pub fn num_elements(&self) -> usize {
        self.element_offsets.len()
    }

    pub fn reference_index(&self) -> usize {
        self.reference_index
    }

    pub fn element_offsets(&self) -> &[f64] {
        &self.element_offsets
    }

    pub fn medium(&self) -> &MediumParams {
        &self.medium
    }

    /// One-way offset delay γ_m = δ_m / c in seconds. Panics if `m` is out
    /// of range, like slice indexing.
    pub fn gamma(&self, m: usize) -> f64 {
        assert!(
            m < self.element_offsets.len(),
            "element index {m} out of range ({} elements)",
            self.element_offsets.len()
        );
        self.element_offsets[m] / self.medium.sound_speed
    }

    /// Fingerprint of the geometry for container headers; changes whenever
    /// offsets, reference index, or sound speed change.
    pub fn fingerprint(&self) -> u32 {
        let mut bytes = Vec::with_capacity(16 + 8 * self.element_offsets.len());
        bytes.extend_from_slice(&(self.element_offsets.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.reference_index as u32).to_le_bytes());
        bytes.extend_from_slice(&self.medium.sound_speed.to_le_bytes());
        for d in &self.element_offsets {
            bytes.extend_from_slice(&d.to_le_bytes());
        }
        util::crc32(&bytes)
    }
}

/// Beam steering angle in radians, measured from broadside; the scan sector
/// is symmetric about 0 and must stay inside (−π/2, π/2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamDirection(f64);

impl BeamDirection {
    pub fn new(radians: f64) -> Result<Self> {
        if !radians.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "beam direction must be finite, got {radians}"
            )));
        }
        Ok(Self(radians))
    }

    pub fn radians(&self) -> f64 {
        self.0
    }

    /// True when the beam points into the imaged half-space.
    pub fn is_forward_looking(&self) -> bool {
        self.0.abs() < std::f64::consts::FRAC_PI_2
    }
}

/// Acquisition window: support [0, T) sampled at `sample_rate_fs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionWindow {
    duration: f64,
    sample_rate: f64,
}

impl AcquisitionWindow {
    pub fn new(duration: f64, sample_rate: f64) -> Result<Self> {
        let mut problems = Vec::new();
        if !(duration > 0.0) || !duration.is_finite() {
            problems.push(format!("acquisition.duration: must be > 0, got {duration}"));
        }
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            problems.push(format!(
                "acquisition.sample_rate: must be > 0, got {sample_rate}"
            ));
        }
        if problems.is_empty() && util::sample_count(duration, sample_rate) < 1 {
            problems.push(format!(
                "acquisition: window shorter than one sample (T = {duration}, fs = {sample_rate})"
            ));
        }
        if problems.is_empty() {
            Ok(Self {
                duration,
                sample_rate,
            })
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// floor(T * fs), guarded against float dust.
    pub fn num_samples(&self) -> usize {
        util::sample_count(self.duration, self.sample_rate)
    }
}

/// Round-trip arrival time at an element with offset delay `gamma`: the
/// pulse reaches depth-time `t` along the beam and the echo returns to the
/// element. Monotone in t, equals 2t at the reference element.
pub fn round_trip_delay(t: f64, theta: BeamDirection, gamma: f64) -> f64 {
    assert!(t >= 0.0, "round_trip_delay: negative time {t}");
    if gamma == 0.0 {
        return 2.0 * t;
    }
    let (s, c) = theta.radians().sin_cos();
    t + ((t * c).powi(2) + (gamma - t * s).powi(2)).sqrt()
}

/// Dynamic-focusing time warp: the channel time at which the echo aligned to
/// beamformed time `t` was actually received. Satisfies
/// `warp_time(2t) == round_trip_delay(t)` and `warp_time(t) >= |gamma|`.
pub fn warp_time(t: f64, theta: BeamDirection, gamma: f64) -> f64 {
    assert!(t >= 0.0, "warp_time: negative time {t}");
    if gamma == 0.0 {
        // exact identity at the reference element
        return t;
    }
    let s = theta.radians().sin();
    // discriminant = (t - 2γ sinθ)^2 + 4γ^2 cos^2θ >= 0 always
    0.5 * (t + (t * t - 4.0 * gamma * t * s + 4.0 * gamma * gamma).sqrt())
}

/// Upper end of the channel interval that the warp maps into the beamformed
/// support [0, T): min(warp_time(T), T). Always in (|gamma|, T].
pub fn channel_window_end(theta: BeamDirection, gamma: f64, window_duration: f64) -> f64 {
    warp_time(window_duration, theta, gamma).min(window_duration)
}

/// Beam directions at the centers of `count` equal angular bins spanning a
/// sector of `sector` radians symmetric about broadside.
pub fn sector_beams(count: usize, sector: f64) -> Vec<BeamDirection> {
    let step = sector / count as f64;
    (0..count)
        .map(|b| BeamDirection(-0.5 * sector + (b as f64 + 0.5) * step))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};

    fn medium() -> MediumParams {
        MediumParams::new(1540.0).unwrap()
    }

    fn default_array() -> ScanGeometry {
        // half-wavelength pitch at 2.5 MHz
        ScanGeometry::uniform(64, 1540.0 / 2.5e6 / 2.0, medium()).unwrap()
    }

    #[test]
    fn gamma_reference_is_zero() {
        let g = default_array();
        assert_eq!(g.gamma(g.reference_index()), 0.0);
    }

    #[test]
    fn gamma_direct_division() {
        let g = ScanGeometry::new(vec![-1.54e-2, 0.0, 1.54e-2], 1, medium()).unwrap();
        assert!((g.gamma(2) - 1.0e-5).abs() < 1e-20);
        assert!((g.gamma(0) + 1.0e-5).abs() < 1e-20);
    }

    #[test]
    fn gamma_antisymmetric_about_reference() {
        let g = default_array();
        let m0 = g.reference_index();
        for k in 1..=31 {
            assert!(
                (g.gamma(m0 + k) + g.gamma(m0 - k)).abs() < 1e-18,
                "k = {k}"
            );
        }
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn gamma_out_of_range_panics() {
        default_array().gamma(64);
    }

    #[test]
    fn geometry_rejects_nonzero_reference() {
        let err = ScanGeometry::new(vec![-1.0, 0.5, 1.0], 1, medium());
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn geometry_rejects_unsorted_offsets() {
        let err = ScanGeometry::new(vec![0.0, -1.0, 1.0], 0, medium());
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn round_trip_at_reference_is_twice_t() {
        let th = BeamDirection::new(0.21).unwrap();
        for t in [0.0, 1e-6, 5e-5, 2e-4] {
            assert!((round_trip_delay(t, th, 0.0) - 2.0 * t).abs() <= 1e-15 * (1.0 + 2.0 * t));
        }
    }

    #[test]
    fn round_trip_at_t_zero_is_abs_gamma() {
        let th = BeamDirection::new(-0.4).unwrap();
        assert_eq!(round_trip_delay(0.0, th, 3e-6), 3e-6);
        assert_eq!(round_trip_delay(0.0, th, -3e-6), 3e-6);
    }

    #[test]
    fn round_trip_with_beam_along_array() {
        // cos θ = 0 collapses the geometric term to |γ − t|
        let th = BeamDirection::new(FRAC_PI_2).unwrap();
        let (t, gam): (f64, f64) = (2e-5, 5e-6);
        let expect = t + (gam - t).abs();
        assert!((round_trip_delay(t, th, gam) - expect).abs() < 1e-18);
    }

    #[test]
    #[should_panic(expected = "negative time")]
    fn round_trip_rejects_negative_t() {
        round_trip_delay(-1e-9, BeamDirection::new(0.0).unwrap(), 0.0);
    }

    #[test]
    fn warp_identity_at_reference() {
        let th = BeamDirection::new(0.3).unwrap();
        for t in [0.0, 1e-7, 1e-4] {
            assert_eq!(warp_time(t, th, 0.0), t);
        }
    }

    #[test]
    fn warp_at_t_zero_is_abs_gamma() {
        let th = BeamDirection::new(0.17).unwrap();
        assert_eq!(warp_time(0.0, th, -4e-6), 4e-6);
    }

    proptest! {
        // warp/delay duality over random (t, θ, γ) in scan ranges
        #[test]
        fn warp_delay_duality(
            t in 0.0..110e-6f64,
            th in -FRAC_PI_6..FRAC_PI_6,
            gam in -7e-6..7e-6f64,
        ) {
            let theta = BeamDirection::new(th).unwrap();
            let lhs = warp_time(2.0 * t, theta, gam);
            let rhs = round_trip_delay(t, theta, gam);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + t.abs()));
        }

        #[test]
        fn warp_never_below_abs_gamma(
            t in 0.0..250e-6f64,
            th in -FRAC_PI_6..FRAC_PI_6,
            gam in -7e-6..7e-6f64,
        ) {
            let theta = BeamDirection::new(th).unwrap();
            prop_assert!(warp_time(t, theta, gam) >= gam.abs() - 1e-18);
        }
    }

    #[test]
    fn warp_strictly_increasing_past_gamma_sin_theta() {
        let theta = BeamDirection::new(0.5).unwrap();
        for gam in [-6e-6, -1e-6, 0.0, 1e-6, 6e-6] {
            let lo: f64 = (gam * theta.radians().sin()).max(0.0);
            let mut prev = f64::NEG_INFINITY;
            for i in 0..2000 {
                let t = lo + 1e-9 + (i as f64 / 1999.0) * 200e-6;
                let w = warp_time(t, theta, gam);
                assert!(w > prev, "warp not increasing at t = {t}, gamma = {gam}");
                prev = w;
            }
        }
    }

    #[test]
    fn window_end_identity_at_reference() {
        let th = BeamDirection::new(0.1).unwrap();
        assert_eq!(channel_window_end(th, 0.0, 207e-6), 207e-6);
    }

    #[test]
    fn window_end_clamps_when_warp_exceeds_t() {
        // opposite signs of γ and sinθ push warp_time(T) above T
        let t_dur = 100e-6;
        let th = BeamDirection::new(FRAC_PI_2).unwrap();
        let gam = -0.3 * t_dur;
        assert!(warp_time(t_dur, th, gam) > t_dur);
        assert_eq!(channel_window_end(th, gam, t_dur), t_dur);
    }

    #[test]
    fn window_end_takes_warp_when_below_t() {
        let t_dur = 100e-6;
        let th = BeamDirection::new(0.5).unwrap();
        let gam = 0.01 * t_dur;
        let w = warp_time(t_dur, th, gam);
        assert!(w < t_dur);
        let end = channel_window_end(th, gam, t_dur);
        assert_eq!(end, w);
        assert!(end > gam.abs() && end <= t_dur);
    }

    #[test]
    fn sector_beams_symmetric_bin_centers() {
        let beams = sector_beams(16, 2.0 * FRAC_PI_6);
        assert_eq!(beams.len(), 16);
        for (a, b) in beams.iter().zip(beams.iter().rev()) {
            assert!((a.radians() + b.radians()).abs() < 1e-15);
        }
        assert!(beams.windows(2).all(|w| w[0].radians() < w[1].radians()));
        assert!(beams.iter().all(|b| b.is_forward_looking()));
    }

    #[test]
    fn acquisition_window_sample_count() {
        let w = AcquisitionWindow::new(207e-6, 50e6).unwrap();
        assert_eq!(w.num_samples(), 10350);
        assert!(AcquisitionWindow::new(0.0, 50e6).is_err());
        assert!(AcquisitionWindow::new(1e-3, -1.0).is_err());
    }

    #[test]
    fn fingerprint_tracks_geometry_changes() {
        let a = default_array();
        let b = ScanGeometry::uniform(64, 1540.0 / 2.5e6 / 2.0, medium()).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = ScanGeometry::uniform(32, 1540.0 / 2.5e6 / 2.0, medium()).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
        let d = ScanGeometry::uniform(64, 1540.0 / 2.5e6 / 2.0, MediumParams::new(1500.0).unwrap())
            .unwrap();
        assert_ne!(a.fingerprint(), d.fingerprint());
    }
}
