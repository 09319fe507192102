//! Pipeline configuration: a nested key = value text file (TOML grammar)
//! with experiment defaults matching the 64-element cardiac setup. Unknown
//! keys are rejected; every violated invariant is reported at once.

use crate::error::{Error, Result};
use crate::geometry::{
    sector_beams, AcquisitionWindow, BeamDirection, MediumParams, ScanGeometry,
};
use crate::imaging::RenderParams;
use crate::phantom::{Phantom, RngSeed, Scatterer};
use crate::pulse::{FourierIndexSet, PulseSpec};
use crate::recovery::GridSpec;
use serde::Deserialize;
use std::path::{Path, PathBuf};

/// Which acquisition path produces the compressed image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Classical beamforming only.
    Reference,
    /// Kernel-projection coefficients (the oracle compressed path).
    Exact,
    /// Windowed low-rate coefficients per element.
    Approx,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "reference" => Ok(Mode::Reference),
            "exact" => Ok(Mode::Exact),
            "approx" => Ok(Mode::Approx),
            other => Err(Error::InvalidArgument(format!(
                "mode must be reference|exact|approx, got '{other}'"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Mode::Reference => "reference",
            Mode::Exact => "exact",
            Mode::Approx => "approx",
        }
    }
}

fn default_sound_speed() -> f64 {
    1540.0
}
fn default_elements() -> usize {
    64
}
fn default_pitch() -> f64 {
    // half wavelength at the 2.5 MHz probe center frequency
    1540.0 / 2.5e6 / 2.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub num_elements: usize,
    pub pitch: f64,
    pub sound_speed: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            num_elements: default_elements(),
            pitch: default_pitch(),
            sound_speed: default_sound_speed(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    pub beams: usize,
    pub sector_deg: f64,
    /// Lateral beam-profile sigma in degrees; half the beam spacing when
    /// absent.
    pub profile_sigma_deg: Option<f64>,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            beams: 120,
            sector_deg: 60.0,
            profile_sigma_deg: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcquisitionSection {
    pub duration: f64,
    pub sample_rate: f64,
}

impl Default for AcquisitionSection {
    fn default() -> Self {
        Self {
            duration: 207e-6,
            sample_rate: 50e6,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseSection {
    pub center_frequency: f64,
    pub bandwidth_6db: f64,
    /// Direct envelope sigma override; wins over bandwidth_6db when set.
    pub envelope_sigma: Option<f64>,
    pub amplitude: f64,
}

impl Default for PulseSection {
    fn default() -> Self {
        Self {
            center_frequency: 3.4e6,
            bandwidth_6db: 2.0e6,
            envelope_sigma: None,
            amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub size: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { size: 1662 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SparsitySection {
    pub targets: usize,
    pub oversampling: usize,
    /// Explicit measurement count; 2 * oversampling * targets when absent.
    pub kappa_size: Option<usize>,
    pub residual_tol: f64,
    /// Pulse-band floor relative to the spectrum peak.
    pub band_floor_rel: f64,
}

impl Default for SparsitySection {
    fn default() -> Self {
        Self {
            targets: 25,
            oversampling: 2,
            kappa_size: None,
            residual_tol: 1e-6,
            band_floor_rel: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruncationSection {
    pub rho: f64,
    pub n_max: usize,
    pub oversample: usize,
}

impl Default for TruncationSection {
    fn default() -> Self {
        Self {
            // n_max = 128 reproduces the reported per-element sample counts
            // with the default array; the kernel-spectrum default support
            // (DEFAULT_N_MAX) is wider.
            rho: 0.95,
            n_max: 128,
            oversample: 8,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScattererSection {
    pub range: f64,
    pub angle_deg: f64,
    pub reflectivity: f64,
}

impl Default for ScattererSection {
    fn default() -> Self {
        Self {
            range: 0.08,
            angle_deg: 0.0,
            reflectivity: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSection {
    pub scatterers: Vec<ScattererSection>,
    pub speckle_density_per_cm2: f64,
    pub speckle_amplitude_sigma: f64,
    pub noise_sigma: f64,
    /// Calibrates noise_sigma from the strongest noiseless sample; mutually
    /// exclusive with noise_sigma.
    pub snr_db: Option<f64>,
    pub radial_spreading: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub image_width: usize,
    pub image_height: usize,
    pub dynamic_range_db: f64,
    pub background: f64,
    pub png: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: None,
            image_width: 512,
            image_height: 512,
            dynamic_range_db: 40.0,
            background: 0.0,
            png: false,
        }
    }
}

fn default_mode() -> Mode {
    Mode::Approx
}

/// Whole-run configuration; every field has a §-style default so an empty
/// file is a valid full-scale cardiac setup.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub geometry: GeometrySection,
    pub scan: ScanSection,
    pub acquisition: AcquisitionSection,
    pub pulse: PulseSection,
    pub grid: GridSection,
    pub sparsity: SparsitySection,
    pub truncation: TruncationSection,
    pub phantom: PhantomSection,
    pub output: OutputSection,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            geometry: GeometrySection::default(),
            scan: ScanSection::default(),
            acquisition: AcquisitionSection::default(),
            pulse: PulseSection::default(),
            grid: GridSection::default(),
            sparsity: SparsitySection::default(),
            truncation: TruncationSection::default(),
            phantom: PhantomSection::default(),
            output: OutputSection::default(),
            mode: default_mode(),
            seed: 0,
        }
    }
}

/// Parses and fully validates a config file.
pub fn parse_config(path: &Path) -> Result<ResolvedConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

/// Same as [`parse_config`] for in-memory text.
pub fn parse_config_str(text: &str) -> Result<ResolvedConfig> {
    let cfg: PipelineConfig = toml::from_str(text)
        .map_err(|e| Error::InvalidArgument(format!("config syntax: {e}")))?;
    cfg.resolve()
}

/// Domain objects derived from a validated configuration.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub geometry: ScanGeometry,
    pub beams: Vec<BeamDirection>,
    pub window: AcquisitionWindow,
    pub pulse: PulseSpec,
    pub grid: GridSpec,
    pub kappa: FourierIndexSet,
    pub phantom: Phantom,
    pub snr_db: Option<f64>,
    pub radial_spreading: bool,
    pub profile_sigma: f64,
    pub rho: f64,
    pub n_max: usize,
    pub spectrum_oversample: usize,
    pub l_target: usize,
    pub residual_tol: f64,
    pub h_min: f64,
    pub render: RenderParams,
    pub out_dir: Option<PathBuf>,
    pub write_png: bool,
    pub mode: Mode,
    pub seed: RngSeed,
}

impl PipelineConfig {
    /// Validates every invariant, listing all violations, and builds the
    /// domain objects.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let mut problems: Vec<String> = Vec::new();

        let medium = collect(&mut problems, MediumParams::new(self.geometry.sound_speed));
        let geometry = medium.and_then(|m| {
            collect(
                &mut problems,
                ScanGeometry::uniform(self.geometry.num_elements, self.geometry.pitch, m),
            )
        });
        let window = collect(
            &mut problems,
            AcquisitionWindow::new(self.acquisition.duration, self.acquisition.sample_rate),
        );

        if !(self.scan.sector_deg > 0.0 && self.scan.sector_deg < 180.0) {
            problems.push(format!(
                "scan.sector_deg: must lie in (0, 180), got {}",
                self.scan.sector_deg
            ));
        }
        if self.scan.beams == 0 {
            problems.push("scan.beams: must be >= 1".to_string());
        }
        let sector = self.scan.sector_deg.to_radians();
        let beams = sector_beams(self.scan.beams.max(1), sector);
        let beam_step = sector / self.scan.beams.max(1) as f64;
        let profile_sigma = match self.scan.profile_sigma_deg {
            Some(d) if d > 0.0 => d.to_radians(),
            Some(d) => {
                problems.push(format!("scan.profile_sigma_deg: must be > 0, got {d}"));
                beam_step / 2.0
            }
            None => beam_step / 2.0,
        };

        let pulse = collect(
            &mut problems,
            match self.pulse.envelope_sigma {
                Some(sigma) => {
                    PulseSpec::new(self.pulse.center_frequency, sigma, self.pulse.amplitude)
                }
                None => PulseSpec::from_bandwidth(
                    self.pulse.center_frequency,
                    self.pulse.bandwidth_6db,
                    self.pulse.amplitude,
                ),
            },
        );

        let grid = window.and_then(|w| {
            collect(
                &mut problems,
                GridSpec::from_duration(w.duration(), self.grid.size),
            )
        });

        // measurement count: K = 2 * oversampling * L unless pinned
        let l = self.sparsity.targets;
        let k = self
            .sparsity
            .kappa_size
            .unwrap_or(2 * self.sparsity.oversampling * l);
        if l == 0 {
            problems.push("sparsity.targets: must be >= 1".to_string());
        }
        if self.sparsity.oversampling == 0 && self.sparsity.kappa_size.is_none() {
            problems.push("sparsity.oversampling: must be >= 1".to_string());
        }
        if k < 2 * l {
            problems.push(format!(
                "sparsity: kappa size {k} below the 2L = {} recovery floor",
                2 * l
            ));
        }
        if !(self.sparsity.residual_tol >= 0.0) {
            problems.push(format!(
                "sparsity.residual_tol: must be >= 0, got {}",
                self.sparsity.residual_tol
            ));
        }
        if !(self.sparsity.band_floor_rel > 0.0 && self.sparsity.band_floor_rel < 1.0) {
            problems.push(format!(
                "sparsity.band_floor_rel: must lie in (0, 1), got {}",
                self.sparsity.band_floor_rel
            ));
        }

        if !(self.truncation.rho > 0.0 && self.truncation.rho < 1.0) {
            problems.push(format!(
                "truncation.rho: must lie in (0, 1), got {}",
                self.truncation.rho
            ));
        }
        if self.truncation.n_max == 0 {
            problems.push("truncation.n_max: must be >= 1".to_string());
        }
        if self.truncation.oversample < 4 {
            problems.push(format!(
                "truncation.oversample: must be >= 4, got {}",
                self.truncation.oversample
            ));
        }

        // kappa centered on the pulse band, inside the stored-data Nyquist
        let kappa = window.and_then(|w| {
            let center = (self.pulse.center_frequency * w.duration()).round() as i64;
            let kappa = FourierIndexSet::consecutive(center, k.max(1)).ok()?;
            let nyquist = (w.num_samples() / 2) as i64;
            let reach = kappa
                .indices()
                .iter()
                .map(|k| k.abs())
                .max()
                .unwrap_or(0)
                + self.truncation.n_max as i64;
            if reach > nyquist {
                problems.push(format!(
                    "kappa indices plus the truncation support reach {reach}, beyond the stored-data Nyquist index {nyquist}"
                ));
            }
            Some(kappa)
        });

        // phantom
        let half_sector = sector / 2.0;
        for (i, s) in self.phantom.scatterers.iter().enumerate() {
            let a = s.angle_deg.to_radians();
            if a.abs() > half_sector {
                problems.push(format!(
                    "phantom.scatterers[{i}].angle_deg: {} outside the ±{}° sector",
                    s.angle_deg,
                    self.scan.sector_deg / 2.0
                ));
            }
        }
        if self.phantom.snr_db.is_some() && self.phantom.noise_sigma != 0.0 {
            problems.push(
                "phantom: snr_db and noise_sigma are mutually exclusive".to_string(),
            );
        }
        let phantom = Phantom {
            scatterers: self
                .phantom
                .scatterers
                .iter()
                .map(|s| Scatterer {
                    range: s.range,
                    angle: s.angle_deg.to_radians(),
                    reflectivity: s.reflectivity,
                })
                .collect(),
            speckle_density_per_cm2: self.phantom.speckle_density_per_cm2,
            speckle_amplitude_sigma: self.phantom.speckle_amplitude_sigma,
            noise_sigma: self.phantom.noise_sigma,
        };
        if let (Some(w), Some(g)) = (&window, &geometry) {
            collect(&mut problems, phantom.validate(w, g.medium().sound_speed()));
        }

        let render = RenderParams {
            dynamic_range_db: self.output.dynamic_range_db,
            width: self.output.image_width,
            height: self.output.image_height,
            background: self.output.background,
        };
        collect(&mut problems, render.validate());

        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }

        let pulse = pulse.expect("validated");
        let h_min = self.sparsity.band_floor_rel * pulse.spectrum_peak();
        Ok(ResolvedConfig {
            geometry: geometry.expect("validated"),
            beams,
            window: window.expect("validated"),
            pulse,
            grid: grid.expect("validated"),
            kappa: kappa.expect("validated"),
            phantom,
            snr_db: self.phantom.snr_db,
            radial_spreading: self.phantom.radial_spreading,
            profile_sigma,
            rho: self.truncation.rho,
            n_max: self.truncation.n_max,
            spectrum_oversample: self.truncation.oversample,
            l_target: l,
            residual_tol: self.sparsity.residual_tol,
            h_min,
            render,
            out_dir: self.output.dir.clone(),
            write_png: self.output.png,
            mode: self.mode,
            seed: RngSeed(self.seed),
        })
    }
}

/// Folds an error into the violation list, flattening nested lists.
fn collect<T>(problems: &mut Vec<String>, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(Error::Validation(v)) => {
            problems.extend(v);
            None
        }
        Err(other) => {
            problems.push(other.to_string());
            None
        }
    }
}
