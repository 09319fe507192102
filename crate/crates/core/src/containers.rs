//! Binary containers for intermediate stage artifacts, so the CLI stages can
//! be rerun independently: per-beam polar lines and per-beam coefficient
//! vectors. Little-endian throughout, CRC-32 over the body.

use crate::error::{Error, Result};
use crate::imaging::PolarImage;
use crate::util::{crc32, Crc32};
use num_complex::Complex64;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const LINES_MAGIC: &[u8; 8] = b"SNLN0001";
const COEF_MAGIC: &[u8; 8] = b"SNCF0001";

/// Writes polar lines: magic, u32 B, u32 R, f64 radial_step, B f64 angles,
/// B*R f64 values, CRC-32 of the body.
pub fn save_lines(img: &PolarImage, path: &Path) -> Result<()> {
    let mut body = Vec::new();
    body.extend_from_slice(&(img.num_beams() as u32).to_le_bytes());
    body.extend_from_slice(&(img.num_radial() as u32).to_le_bytes());
    body.extend_from_slice(&img.radial_step().to_le_bytes());
    for &a in img.beam_angles() {
        body.extend_from_slice(&a.to_le_bytes());
    }
    for &v in img.values() {
        body.extend_from_slice(&v.to_le_bytes());
    }
    write_with_crc(path, LINES_MAGIC, &body)
}

pub fn load_lines(path: &Path) -> Result<PolarImage> {
    let body = read_with_crc(path, LINES_MAGIC, "SNLN0001")?;
    let mut cur = Cursor::new(&body, path);
    let b = cur.u32()? as usize;
    let r = cur.u32()? as usize;
    let step = cur.f64()?;
    let mut angles = Vec::with_capacity(b);
    for _ in 0..b {
        angles.push(cur.f64()?);
    }
    let mut values = Vec::with_capacity(b * r);
    for _ in 0..b * r {
        values.push(cur.f64()?);
    }
    PolarImage::new(values, angles, step)
}

/// Per-beam aggregated coefficient vectors plus the bookkeeping the rate
/// report needs. `per_element_counts` holds K_m for every (beam, element)
/// when the approximate path produced the data.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub duration: f64,
    pub kappa_indices: Vec<i64>,
    pub mode_name: String,
    pub coefficients: Vec<Complex64>, // B x K row-major
    pub num_beams: usize,
    pub per_element_counts: Option<Vec<u32>>, // B x M row-major
}

/// Writes coefficients: magic, u32 B, u32 K, f64 T, u8 mode tag, K i64
/// kappa, B*K complex f64, u32 M (0 when absent) and B*M u32 counts, CRC.
pub fn save_coefficients(set: &CoefficientSet, path: &Path) -> Result<()> {
    let k = set.kappa_indices.len();
    if set.coefficients.len() != set.num_beams * k {
        return Err(Error::DimensionMismatch {
            expected: set.num_beams * k,
            got: set.coefficients.len(),
        });
    }
    let mut body = Vec::new();
    body.extend_from_slice(&(set.num_beams as u32).to_le_bytes());
    body.extend_from_slice(&(k as u32).to_le_bytes());
    body.extend_from_slice(&set.duration.to_le_bytes());
    body.push(match set.mode_name.as_str() {
        "exact" => 1u8,
        "approx" => 2u8,
        _ => 0u8,
    });
    for &ki in &set.kappa_indices {
        body.extend_from_slice(&ki.to_le_bytes());
    }
    for c in &set.coefficients {
        body.extend_from_slice(&c.re.to_le_bytes());
        body.extend_from_slice(&c.im.to_le_bytes());
    }
    match &set.per_element_counts {
        None => body.extend_from_slice(&0u32.to_le_bytes()),
        Some(counts) => {
            let m = counts.len() / set.num_beams.max(1);
            body.extend_from_slice(&(m as u32).to_le_bytes());
            for &c in counts {
                body.extend_from_slice(&c.to_le_bytes());
            }
        }
    }
    write_with_crc(path, COEF_MAGIC, &body)
}

pub fn load_coefficients(path: &Path) -> Result<CoefficientSet> {
    let body = read_with_crc(path, COEF_MAGIC, "SNCF0001")?;
    let mut cur = Cursor::new(&body, path);
    let b = cur.u32()? as usize;
    let k = cur.u32()? as usize;
    let duration = cur.f64()?;
    let mode_name = match cur.u8()? {
        1 => "exact",
        2 => "approx",
        _ => "reference",
    }
    .to_string();
    let mut kappa_indices = Vec::with_capacity(k);
    for _ in 0..k {
        kappa_indices.push(cur.i64()?);
    }
    let mut coefficients = Vec::with_capacity(b * k);
    for _ in 0..b * k {
        let re = cur.f64()?;
        let im = cur.f64()?;
        coefficients.push(Complex64::new(re, im));
    }
    let m = cur.u32()? as usize;
    let per_element_counts = if m == 0 {
        None
    } else {
        let mut counts = Vec::with_capacity(b * m);
        for _ in 0..b * m {
            counts.push(cur.u32()?);
        }
        Some(counts)
    };
    Ok(CoefficientSet {
        duration,
        kappa_indices,
        mode_name,
        coefficients,
        num_beams: b,
        per_element_counts,
    })
}

fn write_with_crc(path: &Path, magic: &[u8; 8], body: &[u8]) -> Result<()> {
    let mut crc = Crc32::new();
    crc.update(body);
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(magic)?;
    w.write_all(body)?;
    w.write_all(&crc.finalize().to_le_bytes())?;
    w.flush()?;
    Ok(())
}

fn read_with_crc(path: &Path, magic: &[u8; 8], name: &'static str) -> Result<Vec<u8>> {
    let pstr = path.display().to_string();
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut got_magic = [0u8; 8];
    if r.read_exact(&mut got_magic).is_err() || &got_magic != magic {
        return Err(Error::BadMagic {
            path: pstr,
            expected: name,
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
    let computed = crc32(body);
    if stored != computed {
        return Err(Error::ChecksumMismatch {
            path: pstr,
            stored,
            computed,
        });
    }
    Ok(body.to_vec())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Cursor<'a> {
    fn new(data: &'a [u8], path: &Path) -> Self {
        Self {
            data,
            pos: 0,
            path: path.display().to_string(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::TruncatedPayload {
                path: self.path.clone(),
                expected: (self.pos + n) as u64,
                got: self.data.len() as u64,
            });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
