//! Scatterer phantoms and synthetic per-beam, per-element channel data at
//! the full acquisition rate, with optional speckle and additive noise.
//!
//! Echo timing follows the round-trip law of [`crate::geometry`]; the lateral
//! transmit beam is modeled as a Gaussian sensitivity profile around the
//! steered direction. All randomness is drawn from ChaCha substreams keyed by
//! (seed, beam, purpose), so per-beam generation can run in parallel without
//! changing results.

use crate::error::{Error, Result};
use crate::geometry::{round_trip_delay, AcquisitionWindow, BeamDirection, ScanGeometry};
use crate::pulse::{synthesize_channel, FRIChannelParams, PulseSpec};
use crate::util::Crc32;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

/// A point reflector at polar position (range, angle) with real reflectivity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    pub range: f64,
    pub angle: f64,
    pub reflectivity: f64,
}

/// Point scatterers plus diffuse-speckle and additive-noise controls.
///
/// Speckle is modeled as a Poisson cloud of weak point scatterers (density
/// per cm^2 of sector area, Gaussian amplitudes), matching its physical
/// origin as sub-resolution reflections.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub scatterers: Vec<Scatterer>,
    pub speckle_density_per_cm2: f64,
    pub speckle_amplitude_sigma: f64,
    pub noise_sigma: f64,
}

impl Phantom {
    pub fn points(scatterers: Vec<Scatterer>) -> Self {
        Self {
            scatterers,
            speckle_density_per_cm2: 0.0,
            speckle_amplitude_sigma: 0.0,
            noise_sigma: 0.0,
        }
    }

    /// Checks ranges against the acquisition depth c*T/2 and basic sanity.
    pub fn validate(&self, win: &AcquisitionWindow, sound_speed: f64) -> Result<()> {
        let mut problems = Vec::new();
        let max_range = sound_speed * win.duration() / 2.0;
        for (i, s) in self.scatterers.iter().enumerate() {
            if !(s.range > 0.0 && s.range <= max_range) {
                problems.push(format!(
                    "phantom.scatterers[{i}].range: {} outside (0, {max_range:.4}]",
                    s.range
                ));
            }
            if !s.angle.is_finite() || s.angle.abs() >= std::f64::consts::FRAC_PI_2 {
                problems.push(format!(
                    "phantom.scatterers[{i}].angle: {} not a forward-looking direction",
                    s.angle
                ));
            }
            if !s.reflectivity.is_finite() {
                problems.push(format!("phantom.scatterers[{i}].reflectivity: not finite"));
            }
        }
        if self.speckle_density_per_cm2 < 0.0 {
            problems.push("phantom.speckle_density_per_cm2: must be >= 0".to_string());
        }
        if self.speckle_amplitude_sigma < 0.0 {
            problems.push("phantom.speckle_amplitude_sigma: must be >= 0".to_string());
        }
        if self.noise_sigma < 0.0 {
            problems.push("phantom.noise_sigma: must be >= 0".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

/// Seed for all pipeline randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngSeed(pub u64);

#[derive(Debug, Clone, Copy)]
pub enum StreamPurpose {
    Speckle,
    Noise,
}

/// Independent substream keyed by (seed, beam, purpose).
pub fn derive_stream(seed: RngSeed, beam: u32, purpose: StreamPurpose) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.0.to_le_bytes());
    key[8..12].copy_from_slice(&beam.to_le_bytes());
    key[12] = match purpose {
        StreamPurpose::Speckle => 1,
        StreamPurpose::Noise => 2,
    };
    ChaCha8Rng::from_seed(key)
}

/// Beam-profile weights this far below the peak (5 sigma) are culled.
const PROFILE_CULL: f64 = 3.7266e-6; // exp(-12.5)

/// Per-element (arrival time, amplitude) for one scatterer seen by one beam;
/// `None` where the echo lands outside the window. The amplitude is the
/// reflectivity weighted by the Gaussian lateral beam profile (identical for
/// all elements), optionally scaled by 1/range.
pub fn scatterer_arrivals(
    s: &Scatterer,
    beam: BeamDirection,
    geom: &ScanGeometry,
    profile_sigma: f64,
    win: &AcquisitionWindow,
    radial_spreading: bool,
) -> Vec<Option<(f64, f64)>> {
    let m_count = geom.num_elements();
    let d = s.angle - beam.radians();
    let weight = (-d * d / (2.0 * profile_sigma * profile_sigma)).exp();
    if weight < PROFILE_CULL {
        return vec![None; m_count];
    }
    let mut amp = s.reflectivity * weight;
    if radial_spreading {
        amp /= s.range;
    }
    let t_hit = s.range / geom.medium().sound_speed();
    let scatter_dir = BeamDirection::new(s.angle).expect("validated angle");
    (0..m_count)
        .map(|m| {
            let tau = round_trip_delay(t_hit, scatter_dir, geom.gamma(m));
            (tau < win.duration()).then_some((tau, amp))
        })
        .collect()
}

/// Per-beam, per-element real waveforms at the acquisition rate.
///
/// Samples are stored in (beam, element, sample) row-major order as f64 so
/// superposition holds to machine precision; the on-disk container quantizes
/// to f32.
#[derive(Debug, Clone, PartialEq)]
pub struct RawChannelData {
    num_beams: usize,
    num_elements: usize,
    window: AcquisitionWindow,
    sound_speed: f64,
    geometry_fingerprint: u32,
    samples: Vec<f64>,
}

impl RawChannelData {
    pub fn num_beams(&self) -> usize {
        self.num_beams
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    pub fn num_samples(&self) -> usize {
        self.window.num_samples()
    }

    pub fn window(&self) -> &AcquisitionWindow {
        &self.window
    }

    pub fn sound_speed(&self) -> f64 {
        self.sound_speed
    }

    pub fn geometry_fingerprint(&self) -> u32 {
        self.geometry_fingerprint
    }

    pub fn channel(&self, beam: usize, element: usize) -> &[f64] {
        let s = self.num_samples();
        let base = (beam * self.num_elements + element) * s;
        &self.samples[base..base + s]
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
}

/// Synthesizes the full data cube for `beams`. Deterministic given the seed;
/// beams are generated in parallel from independent noise substreams.
#[allow(clippy::too_many_arguments)]
pub fn generate_raw_data(
    phantom: &Phantom,
    geom: &ScanGeometry,
    beams: &[BeamDirection],
    win: &AcquisitionWindow,
    pulse: &PulseSpec,
    profile_sigma: f64,
    seed: RngSeed,
    radial_spreading: bool,
) -> Result<RawChannelData> {
    if beams.is_empty() {
        return Err(Error::InvalidArgument("empty beam list".to_string()));
    }
    if !(profile_sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "profile_sigma must be > 0, got {profile_sigma}"
        )));
    }
    phantom.validate(win, geom.medium().sound_speed())?;

    let all_scatterers = {
        let mut v = phantom.scatterers.clone();
        v.extend(draw_speckle(phantom, beams, win, geom, seed));
        v
    };

    let m_count = geom.num_elements();
    let s_count = win.num_samples();
    let per_beam: Vec<Vec<f64>> = beams
        .par_iter()
        .enumerate()
        .map(|(bi, &beam)| {
            let mut block = Vec::with_capacity(m_count * s_count);
            let mut per_element: Vec<Vec<(f64, f64)>> = vec![Vec::new(); m_count];
            for s in &all_scatterers {
                for (m, hit) in scatterer_arrivals(s, beam, geom, profile_sigma, win, radial_spreading)
                    .into_iter()
                    .enumerate()
                {
                    if let Some(ta) = hit {
                        per_element[m].push(ta);
                    }
                }
            }
            let mut noise = derive_stream(seed, bi as u32, StreamPurpose::Noise);
            let gauss = Normal::new(0.0, 1.0).expect("unit normal");
            for arrivals in per_element {
                let params = FRIChannelParams::new(arrivals).expect("finite arrivals");
                let mut wave = synthesize_channel(&params, pulse, win);
                if phantom.noise_sigma > 0.0 {
                    for x in wave.iter_mut() {
                        *x += phantom.noise_sigma * gauss.sample(&mut noise);
                    }
                }
                block.extend_from_slice(&wave);
            }
            block
        })
        .collect();

    let mut samples = Vec::with_capacity(beams.len() * m_count * s_count);
    for block in per_beam {
        samples.extend_from_slice(&block);
    }
    Ok(RawChannelData {
        num_beams: beams.len(),
        num_elements: m_count,
        window: *win,
        sound_speed: geom.medium().sound_speed(),
        geometry_fingerprint: geom.fingerprint(),
        samples,
    })
}

fn draw_speckle(
    phantom: &Phantom,
    beams: &[BeamDirection],
    win: &AcquisitionWindow,
    geom: &ScanGeometry,
    seed: RngSeed,
) -> Vec<Scatterer> {
    if phantom.speckle_density_per_cm2 <= 0.0 {
        return Vec::new();
    }
    let mut rng = derive_stream(seed, u32::MAX, StreamPurpose::Speckle);
    let (lo, hi) = sector_bounds(beams);
    let r_max = geom.medium().sound_speed() * win.duration() / 2.0;
    let area_cm2 = 0.5 * (hi - lo) * r_max * r_max * 1e4;
    let mean = phantom.speckle_density_per_cm2 * area_cm2;
    let count = if mean > 0.0 {
        Poisson::new(mean).map(|d| d.sample(&mut rng) as usize).unwrap_or(0)
    } else {
        0
    };
    let amp = Normal::new(0.0, phantom.speckle_amplitude_sigma.max(f64::MIN_POSITIVE))
        .expect("sigma >= 0");
    (0..count)
        .map(|_| {
            // uniform over sector area: p(r) ~ r
            let r = r_max * rng.gen::<f64>().sqrt();
            let angle = lo + (hi - lo) * rng.gen::<f64>();
            Scatterer {
                range: r.max(1e-6),
                angle,
                reflectivity: amp.sample(&mut rng),
            }
        })
        .collect()
}

fn sector_bounds(beams: &[BeamDirection]) -> (f64, f64) {
    let first = beams.first().map(|b| b.radians()).unwrap_or(0.0);
    let last = beams.last().map(|b| b.radians()).unwrap_or(0.0);
    let half_step = if beams.len() >= 2 {
        (last - first) / (2.0 * (beams.len() - 1) as f64)
    } else {
        0.01
    };
    (first - half_step, last + half_step)
}

const RAW_MAGIC: &[u8; 8] = b"SNBF0001";

/// Writes the raw-data container: magic, u32 B/M/S, f64 T/fs/c, u32 geometry
/// hash, B*M*S little-endian f32 samples, CRC-32 of the payload bytes.
pub fn save_raw(data: &RawChannelData, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(RAW_MAGIC)?;
    w.write_all(&(data.num_beams as u32).to_le_bytes())?;
    w.write_all(&(data.num_elements as u32).to_le_bytes())?;
    w.write_all(&(data.num_samples() as u32).to_le_bytes())?;
    w.write_all(&data.window.duration().to_le_bytes())?;
    w.write_all(&data.window.sample_rate().to_le_bytes())?;
    w.write_all(&data.sound_speed.to_le_bytes())?;
    w.write_all(&data.geometry_fingerprint.to_le_bytes())?;
    let mut crc = Crc32::new();
    let mut chunk = Vec::with_capacity(4 * 8192);
    for block in data.samples.chunks(8192) {
        chunk.clear();
        for &x in block {
            chunk.extend_from_slice(&(x as f32).to_le_bytes());
        }
        crc.update(&chunk);
        w.write_all(&chunk)?;
    }
    w.write_all(&crc.finalize().to_le_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn load_raw(path: &Path) -> Result<RawChannelData> {
    let pstr = path.display().to_string();
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    if r.read_exact(&mut magic).is_err() || &magic != RAW_MAGIC {
        return Err(Error::BadMagic {
            path: pstr,
            expected: "SNBF0001",
        });
    }
    let mut head = [0u8; 4 * 3 + 8 * 3 + 4];
    r.read_exact(&mut head).map_err(|_| Error::TruncatedPayload {
        path: pstr.clone(),
        expected: head.len() as u64,
        got: 0,
    })?;
    let u32_at = |o: usize| u32::from_le_bytes(head[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(head[o..o + 8].try_into().unwrap());
    let (b, m, s) = (u32_at(0) as usize, u32_at(4) as usize, u32_at(8) as usize);
    let duration = f64_at(12);
    let sample_rate = f64_at(20);
    let sound_speed = f64_at(28);
    let fingerprint = u32_at(36);

    let window = AcquisitionWindow::new(duration, sample_rate)?;
    if window.num_samples() != s {
        return Err(Error::InvalidArgument(format!(
            "header sample count {s} disagrees with floor(T*fs) = {}",
            window.num_samples()
        )));
    }

    let expected = (b * m * s) as u64 * 4;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if (payload.len() as u64) < expected + 4 {
        return Err(Error::TruncatedPayload {
            path: pstr,
            expected: expected + 4,
            got: payload.len() as u64,
        });
    }
    let (body, tail) = payload.split_at(expected as usize);
    let stored = u32::from_le_bytes(tail[..4].try_into().unwrap());
    let computed = crate::util::crc32(body);
    if stored != computed {
        return Err(Error::ChecksumMismatch {
            path: pstr,
            stored,
            computed,
        });
    }
    let samples: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation(vec![
            "raw data container holds non-finite samples".to_string(),
        ]));
    }
    Ok(RawChannelData {
        num_beams: b,
        num_elements: m,
        window,
        sound_speed,
        geometry_fingerprint: fingerprint,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sector_beams, MediumParams};
    use std::f64::consts::FRAC_PI_6;

    fn setup() -> (ScanGeometry, Vec<BeamDirection>, AcquisitionWindow, PulseSpec) {
        let geom = ScanGeometry::uniform(
            8,
            1540.0 / 2.5e6 / 2.0,
            MediumParams::new(1540.0).unwrap(),
        )
        .unwrap();
        let beams = sector_beams(4, 2.0 * FRAC_PI_6);
        let win = AcquisitionWindow::new(40e-6, 20e6).unwrap();
        let pulse = PulseSpec::from_bandwidth(3.4e6, 2.0e6, 1.0).unwrap();
        (geom, beams, win, pulse)
    }

    fn profile_sigma(beams: &[BeamDirection]) -> f64 {
        (beams[1].radians() - beams[0].radians()) / 2.0
    }

    #[test]
    fn arrivals_on_beam_reference_element() {
        let (geom, beams, win, _) = setup();
        let s = Scatterer {
            range: 0.015,
            angle: beams[1].radians(),
            reflectivity: 0.8,
        };
        let hits = scatterer_arrivals(&s, beams[1], &geom, profile_sigma(&beams), &win, false);
        let (tau, amp) = hits[geom.reference_index()].unwrap();
        assert!((tau - 2.0 * s.range / 1540.0).abs() < 1e-15);
        assert!((amp - 0.8).abs() < 1e-15);
    }

    #[test]
    fn arrivals_match_round_trip_law_off_axis() {
        let (geom, beams, win, _) = setup();
        let s = Scatterer {
            range: 0.02,
            angle: beams[2].radians(),
            reflectivity: 1.0,
        };
        let hits = scatterer_arrivals(&s, beams[2], &geom, profile_sigma(&beams), &win, false);
        for m in 0..geom.num_elements() {
            let expect = round_trip_delay(
                s.range / 1540.0,
                BeamDirection::new(s.angle).unwrap(),
                geom.gamma(m),
            );
            assert_eq!(hits[m].unwrap().0, expect);
        }
    }

    #[test]
    fn arrivals_far_off_beam_are_negligible() {
        let (geom, beams, win, _) = setup();
        let ps = profile_sigma(&beams);
        let s = Scatterer {
            range: 0.02,
            angle: beams[0].radians() + 4.0 * ps,
            reflectivity: 1.0,
        };
        let hits = scatterer_arrivals(&s, beams[0], &geom, ps, &win, false);
        for h in hits.into_iter().flatten() {
            assert!(h.1 <= (-8.0f64).exp() + 1e-12);
        }
    }

    #[test]
    fn empty_phantom_gives_zero_data() {
        let (geom, beams, win, pulse) = setup();
        let data = generate_raw_data(
            &Phantom::points(vec![]),
            &geom,
            &beams,
            &win,
            &pulse,
            profile_sigma(&beams),
            RngSeed(1),
            false,
        )
        .unwrap();
        assert!(data.samples().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let (geom, beams, win, pulse) = setup();
        let phantom = Phantom {
            scatterers: vec![Scatterer {
                range: 0.02,
                angle: 0.0,
                reflectivity: 1.0,
            }],
            speckle_density_per_cm2: 0.5,
            speckle_amplitude_sigma: 0.05,
            noise_sigma: 0.01,
        };
        let ps = profile_sigma(&beams);
        let a = generate_raw_data(&phantom, &geom, &beams, &win, &pulse, ps, RngSeed(7), false)
            .unwrap();
        let b = generate_raw_data(&phantom, &geom, &beams, &win, &pulse, ps, RngSeed(7), false)
            .unwrap();
        assert_eq!(a, b);
        let c = generate_raw_data(&phantom, &geom, &beams, &win, &pulse, ps, RngSeed(8), false)
            .unwrap();
        assert_ne!(a.samples(), c.samples());
    }

    #[test]
    fn on_beam_scatterer_peaks_at_round_trip_sample() {
        let (geom, beams, win, pulse) = setup();
        let s = Scatterer {
            range: 0.018,
            angle: beams[1].radians(),
            reflectivity: 1.0,
        };
        let data = generate_raw_data(
            &Phantom::points(vec![s]),
            &geom,
            &beams,
            &win,
            &pulse,
            profile_sigma(&beams),
            RngSeed(3),
            false,
        )
        .unwrap();
        for m in 0..geom.num_elements() {
            let wave = data.channel(1, m);
            let peak = wave
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .unwrap()
                .0 as f64;
            let tau = round_trip_delay(
                s.range / 1540.0,
                BeamDirection::new(s.angle).unwrap(),
                geom.gamma(m),
            );
            // envelope peak within one carrier half-cycle of the arrival
            assert!(
                (peak - tau * win.sample_rate()).abs() <= (win.sample_rate() / 3.4e6) / 2.0 + 1.0,
                "element {m}: peak {peak}, expected {}",
                tau * win.sample_rate()
            );
        }
    }

    #[test]
    fn union_phantom_superposes() {
        let (geom, beams, win, pulse) = setup();
        let ps = profile_sigma(&beams);
        let s1 = Scatterer {
            range: 0.012,
            angle: beams[0].radians(),
            reflectivity: 0.9,
        };
        let s2 = Scatterer {
            range: 0.022,
            angle: beams[3].radians(),
            reflectivity: -0.4,
        };
        let a = generate_raw_data(&Phantom::points(vec![s1]), &geom, &beams, &win, &pulse, ps, RngSeed(5), false).unwrap();
        let b = generate_raw_data(&Phantom::points(vec![s2]), &geom, &beams, &win, &pulse, ps, RngSeed(5), false).unwrap();
        let ab = generate_raw_data(&Phantom::points(vec![s1, s2]), &geom, &beams, &win, &pulse, ps, RngSeed(5), false).unwrap();
        let scale = ab.samples().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for i in 0..ab.samples().len() {
            let sum = a.samples()[i] + b.samples()[i];
            assert!(
                (ab.samples()[i] - sum).abs() <= 1e-12 * scale,
                "sample {i}"
            );
        }
    }

    #[test]
    fn doubling_reflectivity_doubles_samples() {
        let (geom, beams, win, pulse) = setup();
        let ps = profile_sigma(&beams);
        let mk = |r: f64| {
            Phantom::points(vec![Scatterer {
                range: 0.02,
                angle: beams[2].radians(),
                reflectivity: r,
            }])
        };
        let a = generate_raw_data(&mk(0.7), &geom, &beams, &win, &pulse, ps, RngSeed(2), false).unwrap();
        let b = generate_raw_data(&mk(1.4), &geom, &beams, &win, &pulse, ps, RngSeed(2), false).unwrap();
        for i in 0..a.samples().len() {
            assert!((b.samples()[i] - 2.0 * a.samples()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn save_load_round_trip() {
        let (geom, beams, win, pulse) = setup();
        let phantom = Phantom {
            scatterers: vec![Scatterer {
                range: 0.015,
                angle: 0.0,
                reflectivity: 1.0,
            }],
            speckle_density_per_cm2: 0.0,
            speckle_amplitude_sigma: 0.0,
            noise_sigma: 0.02,
        };
        let data = generate_raw_data(
            &phantom,
            &geom,
            &beams,
            &win,
            &pulse,
            profile_sigma(&beams),
            RngSeed(11),
            false,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.snbf");
        save_raw(&data, &path).unwrap();
        let loaded = load_raw(&path).unwrap();
        assert_eq!(loaded.num_beams(), data.num_beams());
        assert_eq!(loaded.num_elements(), data.num_elements());
        assert_eq!(loaded.window(), data.window());
        assert_eq!(loaded.sound_speed(), data.sound_speed());
        assert_eq!(loaded.geometry_fingerprint(), data.geometry_fingerprint());
        // payload is f32; equality holds at f32 precision
        for (l, o) in loaded.samples().iter().zip(data.samples()) {
            assert_eq!(*l, *o as f32 as f64);
        }
        // a second save of the loaded data is byte-identical
        let path2 = dir.path().join("raw2.snbf");
        save_raw(&loaded, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn load_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.snbf");
        std::fs::write(&path, b"NOTMAGIC rest").unwrap();
        assert!(matches!(load_raw(&path), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn load_rejects_truncation_and_corruption() {
        let (geom, beams, win, pulse) = setup();
        let data = generate_raw_data(
            &Phantom::points(vec![Scatterer {
                range: 0.01,
                angle: 0.0,
                reflectivity: 1.0,
            }]),
            &geom,
            &beams,
            &win,
            &pulse,
            profile_sigma(&beams),
            RngSeed(1),
            false,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.snbf");
        save_raw(&data, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let cut = dir.path().join("cut.snbf");
        std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            load_raw(&cut),
            Err(Error::TruncatedPayload { .. })
        ));

        let mut corrupt = bytes.clone();
        let mid = corrupt.len() / 2;
        corrupt[mid] ^= 0xFF;
        let bad = dir.path().join("corrupt.snbf");
        std::fs::write(&bad, &corrupt).unwrap();
        assert!(matches!(
            load_raw(&bad),
            Err(Error::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn empty_beam_list_is_an_error() {
        let (geom, _, win, pulse) = setup();
        let err = generate_raw_data(
            &Phantom::points(vec![]),
            &geom,
            &[],
            &win,
            &pulse,
            0.01,
            RngSeed(0),
            false,
        );
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }
}
