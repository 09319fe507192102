//! Small shared helpers: CRC-32, FFT plumbing, grid sizing.

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::cell::RefCell;

/// Incremental CRC-32 (IEEE 802.3, reflected, init/xorout 0xFFFFFFFF).
pub struct Crc32 {
    state: u32,
    table: [u32; 16],
}

impl Crc32 {
    pub fn new() -> Self {
        // nibble-at-a-time table keeps this dependency-free
        const POLY: u32 = 0xEDB8_8320;
        let mut table = [0u32; 16];
        for (i, entry) in table.iter_mut().enumerate() {
            let mut c = i as u32;
            for _ in 0..4 {
                c = if c & 1 != 0 { (c >> 1) ^ POLY } else { c >> 1 };
            }
            *entry = c;
        }
        Self {
            state: 0xFFFF_FFFF,
            table,
        }
    }

    pub fn update(&mut self, data: &[u8]) {
        let mut crc = self.state;
        for &b in data {
            crc = (crc >> 4) ^ self.table[((crc ^ b as u32) & 0xF) as usize];
            crc = (crc >> 4) ^ self.table[((crc ^ (b as u32 >> 4)) & 0xF) as usize];
        }
        self.state = crc;
    }

    pub fn finalize(&self) -> u32 {
        !self.state
    }
}

impl Default for Crc32 {
    fn default() -> Self {
        Self::new()
    }
}

/// One-shot CRC-32 over `data`.
pub fn crc32(data: &[u8]) -> u32 {
    let mut c = Crc32::new();
    c.update(data);
    c.finalize()
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place forward FFT (unnormalized, e^{-i2πkn/N} convention).
pub fn fft_forward(buf: &mut [Complex64]) {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()).process(buf));
}

/// In-place inverse FFT, normalized by 1/N.
pub fn fft_inverse(buf: &mut [Complex64]) {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()).process(buf));
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Smallest 5-smooth integer >= n (fast FFT length).
pub fn next_fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut k = m;
        for f in [2, 3, 5] {
            while k % f == 0 {
                k /= f;
            }
        }
        if k == 1 {
            return m;
        }
        m += 1;
    }
}

/// Sample count of a window: floor(duration * rate) with a guard against
/// values like 207e-6 * 50e6 landing a hair below an integer.
pub fn sample_count(duration: f64, rate: f64) -> usize {
    let x = duration * rate;
    (x * (1.0 + 1e-12) + 1e-9).floor() as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crc32_check_vector() {
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
        assert_eq!(crc32(b""), 0);
    }

    #[test]
    fn fft_roundtrip() {
        let orig: Vec<Complex64> = (0..12)
            .map(|i| Complex64::new(i as f64, (i * i) as f64 * 0.1))
            .collect();
        let mut buf = orig.clone();
        fft_forward(&mut buf);
        fft_inverse(&mut buf);
        for (a, b) in buf.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn fast_lengths() {
        assert_eq!(next_fast_len(1), 1);
        assert_eq!(next_fast_len(7), 8);
        assert_eq!(next_fast_len(2056), 2160);
    }

    #[test]
    fn sample_counts() {
        assert_eq!(sample_count(207e-6, 50e6), 10350);
        assert_eq!(sample_count(210e-6, 16e6), 3360);
        assert_eq!(sample_count(1.0, 10.0), 10);
    }
}
