//! Sector imaging: polar line assembly, log compression, scan conversion to
//! Cartesian pixels, and image file output.

use crate::error::{Error, Result};
use std::io::Write;
use std::path::Path;

/// Per-beam radial amplitude lines (row-major, beams x radial samples) with
/// their steering angles and the radial step in meters per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarImage {
    lines: Vec<f64>,
    beam_angles: Vec<f64>,
    radial_samples: usize,
    radial_step: f64,
}

impl PolarImage {
    pub fn new(lines: Vec<f64>, beam_angles: Vec<f64>, radial_step: f64) -> Result<Self> {
        let b = beam_angles.len();
        if b == 0 || lines.is_empty() || lines.len() % b != 0 {
            return Err(Error::Validation(vec![format!(
                "polar image: {} values do not divide into {} beams",
                lines.len(),
                b
            )]));
        }
        if lines.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation(vec![
                "polar image: values must be finite and nonnegative".to_string(),
            ]));
        }
        if !(radial_step > 0.0) {
            return Err(Error::Validation(vec![format!(
                "polar image: radial step must be > 0, got {radial_step}"
            )]));
        }
        let radial_samples = lines.len() / b;
        Ok(Self {
            lines,
            beam_angles,
            radial_samples,
            radial_step,
        })
    }

    pub fn from_lines(rows: Vec<Vec<f64>>, beam_angles: Vec<f64>, radial_step: f64) -> Result<Self> {
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Self::new(flat, beam_angles, radial_step)
    }

    pub fn num_beams(&self) -> usize {
        self.beam_angles.len()
    }

    pub fn num_radial(&self) -> usize {
        self.radial_samples
    }

    pub fn beam_angles(&self) -> &[f64] {
        &self.beam_angles
    }

    pub fn radial_step(&self) -> f64 {
        self.radial_step
    }

    pub fn value(&self, beam: usize, radial: usize) -> f64 {
        self.lines[beam * self.radial_samples + radial]
    }

    pub fn values(&self) -> &[f64] {
        &self.lines
    }

    pub fn max_value(&self) -> f64 {
        self.lines.iter().fold(0.0f64, |a, &v| a.max(v))
    }
}

/// Display controls for rendered images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderParams {
    pub dynamic_range_db: f64,
    pub width: usize,
    pub height: usize,
    pub background: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            dynamic_range_db: 40.0,
            width: 512,
            height: 512,
            background: 0.0,
        }
    }
}

impl RenderParams {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.dynamic_range_db > 0.0) {
            problems.push(format!(
                "render.dynamic_range_db: must be > 0, got {}",
                self.dynamic_range_db
            ));
        }
        if self.width == 0 || self.height == 0 {
            problems.push("render: output size must be nonzero".to_string());
        }
        if !(0.0..=1.0).contains(&self.background) {
            problems.push(format!(
                "render.background: must lie in [0, 1], got {}",
                self.background
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

/// Maps amplitudes into [0, 1] display units over `dynamic_range_db`:
/// the peak maps to 1, anything `dr` dB below it (or less) to 0.
pub fn log_compress(img: &PolarImage, dynamic_range_db: f64) -> Result<PolarImage> {
    if !(dynamic_range_db > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "dynamic range must be > 0 dB, got {dynamic_range_db}"
        )));
    }
    let peak = img.max_value();
    if peak <= 0.0 {
        return Err(Error::EmptyImage);
    }
    let lines = img
        .lines
        .iter()
        .map(|&v| {
            if v <= 0.0 {
                0.0
            } else {
                (1.0 + 20.0 * (v / peak).log10() / dynamic_range_db).max(0.0)
            }
        })
        .collect();
    PolarImage::new(lines, img.beam_angles.clone(), img.radial_step)
}

/// Cartesian sector display: `pixels` in [0, 1], `inside` marks pixels that
/// fall inside the scanned sector (the rest hold the background value).
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
    pub inside: Vec<bool>,
}

/// Bilinear scan conversion from (range, angle) onto a Cartesian pixel grid
/// with depth increasing down the image and the lateral axis centered on
/// broadside: x = r sin θ, z = r cos θ.
pub fn scan_convert(img: &PolarImage, params: &RenderParams) -> Result<CartesianImage> {
    params.validate()?;
    let b = img.num_beams();
    let r_count = img.num_radial();
    let r_max = (r_count.saturating_sub(1)) as f64 * img.radial_step;
    let angles = img.beam_angles();
    let half_step = if b >= 2 {
        (angles[b - 1] - angles[0]) / (2.0 * (b - 1) as f64)
    } else {
        0.01
    };
    let theta_lo = angles[0] - half_step;
    let theta_hi = angles[b - 1] + half_step;
    let x_half = r_max * theta_lo.abs().max(theta_hi.abs()).sin();

    let (w, h) = (params.width, params.height);
    let mut pixels = vec![params.background; w * h];
    let mut inside = vec![false; w * h];
    for py in 0..h {
        let z = (py as f64 + 0.5) / h as f64 * r_max;
        for px in 0..w {
            let x = (px as f64 + 0.5) / w as f64 * 2.0 * x_half - x_half;
            let r = (x * x + z * z).sqrt();
            let theta = x.atan2(z);
            if r > r_max || theta < theta_lo || theta > theta_hi {
                continue;
            }
            inside[py * w + px] = true;

            let rf = r / img.radial_step;
            let i0 = (rf.floor() as usize).min(r_count - 1);
            let i1 = (i0 + 1).min(r_count - 1);
            let fr = (rf - i0 as f64).clamp(0.0, 1.0);

            // beam coordinate by segment lookup, clamped to the outer lines
            let (b0, b1, fw) = if theta <= angles[0] {
                (0, 0, 0.0)
            } else if theta >= angles[b - 1] {
                (b - 1, b - 1, 0.0)
            } else {
                let seg = angles.partition_point(|&a| a <= theta) - 1;
                let span = angles[seg + 1] - angles[seg];
                (seg, seg + 1, (theta - angles[seg]) / span)
            };

            let v00 = img.value(b0, i0);
            let v01 = img.value(b0, i1);
            let v10 = img.value(b1, i0);
            let v11 = img.value(b1, i1);
            pixels[py * w + px] = (1.0 - fw) * ((1.0 - fr) * v00 + fr * v01)
                + fw * ((1.0 - fr) * v10 + fr * v11);
        }
    }
    Ok(CartesianImage {
        width: w,
        height: h,
        pixels,
        inside,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
    Png,
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes an 8-bit grayscale image; PGM is the canonical output
/// ("P5\n<w> <h>\n255\n" then row-major bytes, values round(v*255)).
pub fn write_image(img: &CartesianImage, path: &Path, format: ImageFormat) -> Result<()> {
    let bytes: Vec<u8> = img.pixels.iter().map(|&v| quantize(v)).collect();
    match format {
        ImageFormat::Pgm => {
            let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
            write!(f, "P5\n{} {}\n255\n", img.width, img.height)?;
            f.write_all(&bytes)?;
            f.flush()?;
            Ok(())
        }
        ImageFormat::Png => {
            let buf = image::GrayImage::from_raw(img.width as u32, img.height as u32, bytes)
                .expect("pixel count matches dimensions");
            buf.save_with_format(path, image::ImageFormat::Png)
                .map_err(|e| Error::InvalidArgument(format!("png encode: {e}")))?;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform_polar(b: usize, r: usize, v: f64) -> PolarImage {
        let angles: Vec<f64> = (0..b)
            .map(|i| -0.5 + (i as f64 + 0.5) / b as f64)
            .collect();
        PolarImage::new(vec![v; b * r], angles, 1e-4).unwrap()
    }

    #[test]
    fn log_compress_anchor_points() {
        let dr = 40.0;
        let mut vals = vec![0.0; 8];
        vals[0] = 1.0;
        vals[1] = 10f64.powf(-dr / 20.0);
        vals[2] = 10f64.powf(-dr / 40.0);
        vals[3] = 10f64.powf(-dr / 10.0); // below the floor
        let img = PolarImage::new(vals, vec![0.0], 1e-4).unwrap();
        let out = log_compress(&img, dr).unwrap();
        assert!((out.value(0, 0) - 1.0).abs() < 1e-12);
        assert!(out.value(0, 1).abs() < 1e-12);
        assert!((out.value(0, 2) - 0.5).abs() < 1e-12);
        assert_eq!(out.value(0, 3), 0.0);
        assert_eq!(out.value(0, 7), 0.0);
    }

    #[test]
    fn log_compress_rejects_empty_image() {
        let img = uniform_polar(2, 16, 0.0);
        assert!(matches!(log_compress(&img, 40.0), Err(Error::EmptyImage)));
    }

    proptest! {
        #[test]
        fn log_compress_is_monotone(a in 0.0..1.0f64, b in 0.0..1.0f64) {
            let img = PolarImage::new(vec![a, b, 1.0, 0.25], vec![0.0], 1e-4).unwrap();
            let out = log_compress(&img, 40.0).unwrap();
            if a <= b {
                prop_assert!(out.value(0, 0) <= out.value(0, 1) + 1e-15);
            } else {
                prop_assert!(out.value(0, 1) <= out.value(0, 0) + 1e-15);
            }
        }
    }

    #[test]
    fn scan_convert_uniform_fills_sector() {
        let img = uniform_polar(8, 64, 0.7);
        let params = RenderParams {
            width: 96,
            height: 80,
            ..Default::default()
        };
        let out = scan_convert(&img, &params).unwrap();
        assert_eq!(out.width, 96);
        assert_eq!(out.height, 80);
        let inside_count = out.inside.iter().filter(|&&x| x).count();
        assert!(inside_count > 0);
        for (i, &v) in out.pixels.iter().enumerate() {
            if out.inside[i] {
                assert!((v - 0.7).abs() < 1e-12, "pixel {i} = {v}");
            } else {
                assert_eq!(v, params.background);
            }
        }
    }

    #[test]
    fn scan_convert_bright_line_stays_a_ray() {
        let b = 9;
        let r = 128;
        let angles: Vec<f64> = (0..b).map(|i| (i as f64 - 4.0) * 0.1).collect();
        let mut lines = vec![0.0; b * r];
        let lit = 6usize;
        for i in 0..r {
            lines[lit * r + i] = 1.0;
        }
        let img = PolarImage::new(lines, angles.clone(), 1e-4).unwrap();
        let out = scan_convert(
            &img,
            &RenderParams {
                width: 160,
                height: 160,
                ..Default::default()
            },
        )
        .unwrap();
        // intensity-weighted mean of atan2(x, z) should sit on the lit beam
        let r_max = (r - 1) as f64 * 1e-4;
        let x_half = r_max * (angles[0] - 0.05).abs().max(angles[8] + 0.05).sin();
        let mut num = 0.0;
        let mut den = 0.0;
        for py in 0..160 {
            for px in 0..160 {
                let v = out.pixels[py * 160 + px];
                if out.inside[py * 160 + px] && v > 0.0 {
                    let z = (py as f64 + 0.5) / 160.0 * r_max;
                    let x = (px as f64 + 0.5) / 160.0 * 2.0 * x_half - x_half;
                    num += v * x.atan2(z);
                    den += v;
                }
            }
        }
        let centroid = num / den;
        assert!(
            (centroid - angles[lit]).abs() < 0.05,
            "centroid {centroid}, beam angle {}",
            angles[lit]
        );
    }

    #[test]
    fn scan_convert_point_maps_forward() {
        let b = 16;
        let r = 256;
        let angles: Vec<f64> = (0..b)
            .map(|i| -0.5 + (i as f64 + 0.5) * (1.0 / b as f64))
            .collect();
        let (b0, i0) = (11usize, 170usize);
        let mut lines = vec![0.0; b * r];
        lines[b0 * r + i0] = 1.0;
        let step = 1e-4;
        let img = PolarImage::new(lines, angles.clone(), step).unwrap();
        let (w, h) = (200usize, 200usize);
        let out = scan_convert(
            &img,
            &RenderParams {
                width: w,
                height: h,
                ..Default::default()
            },
        )
        .unwrap();
        // intensity centroid of the bilinear blob (the beam-width tent spans
        // several pixels, so a bare argmax can sit a pixel or two off-center)
        let (mut sx, mut sy, mut sw) = (0.0f64, 0.0f64, 0.0f64);
        for py in 0..h {
            for px in 0..w {
                let v = out.pixels[py * w + px];
                if v > 0.0 {
                    sx += v * px as f64;
                    sy += v * py as f64;
                    sw += v;
                }
            }
        }
        let (cx, cy) = (sx / sw, sy / sw);
        let r_max = (r - 1) as f64 * step;
        let half_step = (angles[1] - angles[0]) / 2.0;
        let x_half = r_max
            * (angles[0] - half_step)
                .abs()
                .max(angles[b - 1] + half_step)
                .sin();
        let r0 = i0 as f64 * step;
        let expect_x = r0 * angles[b0].sin();
        let expect_z = r0 * angles[b0].cos();
        let expect_px = (expect_x + x_half) / (2.0 * x_half) * w as f64 - 0.5;
        let expect_py = expect_z / r_max * h as f64 - 0.5;
        assert!(
            (cx - expect_px).abs() <= 1.0 && (cy - expect_py).abs() <= 1.0,
            "blob centroid ({cx:.1}, {cy:.1}), expected ({expect_px:.1}, {expect_py:.1})"
        );
    }

    #[test]
    fn pgm_bytes_follow_quantization_rule() {
        let img = CartesianImage {
            width: 2,
            height: 2,
            pixels: vec![0.0, 1.0, 0.5, 0.25],
            inside: vec![true; 4],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        write_image(&img, &path, ImageFormat::Pgm).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header = b"P5\n2 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[0u8, 255, 128, 64]);
    }

    #[test]
    fn pgm_round_trips_pixel_exact() {
        let img = CartesianImage {
            width: 3,
            height: 2,
            pixels: vec![0.1, 0.9, 0.33, 0.0, 1.0, 0.66],
            inside: vec![true; 6],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        write_image(&img, &path, ImageFormat::Pgm).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        // parse the fixed-form header back
        let text = String::from_utf8_lossy(&bytes[..11]).to_string();
        assert!(text.starts_with("P5\n3 2\n255\n"));
        let payload = &bytes[11..];
        let expect: Vec<u8> = img.pixels.iter().map(|&v| quantize(v)).collect();
        assert_eq!(payload, expect.as_slice());
    }

    #[test]
    fn png_writes_successfully() {
        let img = CartesianImage {
            width: 4,
            height: 3,
            pixels: vec![0.5; 12],
            inside: vec![true; 12],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        write_image(&img, &path, ImageFormat::Png).unwrap();
        let loaded = image::open(&path).unwrap().into_luma8();
        assert_eq!(loaded.dimensions(), (4, 3));
        assert!(loaded.pixels().all(|p| p.0[0] == 128));
    }

    #[test]
    fn zero_image_writes_zero_payload() {
        let img = CartesianImage {
            width: 4,
            height: 2,
            pixels: vec![0.0; 8],
            inside: vec![false; 8],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zero.pgm");
        write_image(&img, &path, ImageFormat::Pgm).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes[11..].iter().all(|&b| b == 0));
    }
}
