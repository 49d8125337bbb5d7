//! Pixel observation corruptions: gaussian noise, impulse (salt and pepper)
//! noise, motion blur along a random line, and pixelation. Each kind has a
//! five-step severity grid.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{Error, Result};

/// Grayscale frame, row-major, values in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub w: usize,
    pub h: usize,
    pub data: Vec<f64>,
}

impl Frame {
    pub fn new(w: usize, h: usize) -> Self {
        Self { w, h, data: vec![0.0; w * h] }
    }

    pub fn from_data(w: usize, h: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != w * h {
            return Err(Error::Shape(format!("frame data length {} != {w}x{h}", data.len())));
        }
        Ok(Self { w, h, data })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.w + x] = v;
    }

    /// Edge-replicate lookup for signed coordinates.
    #[inline]
    fn get_clamped(&self, x: i64, y: i64) -> f64 {
        let xc = x.clamp(0, self.w as i64 - 1) as usize;
        let yc = y.clamp(0, self.h as i64 - 1) as usize;
        self.get(xc, yc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    Gaussian { sigma: f64 },
    Impulse { p: f64 },
    MotionBlur { rho: usize, sigma: f64 },
    Pixelate { f: f64 },
}

/// Corruption kind plus an optional 1-based severity label into the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub severity_label: Option<usize>,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind) -> Self {
        Self { kind, severity_label: None }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            CorruptionKind::Gaussian { sigma } => {
                if !(sigma >= 0.0) {
                    return Err(Error::Config(format!("gaussian sigma {sigma} must be >= 0")));
                }
            }
            CorruptionKind::Impulse { p } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Config(format!("impulse p {p} must be in [0,1]")));
                }
            }
            CorruptionKind::MotionBlur { sigma, .. } => {
                if !(sigma >= 0.0) {
                    return Err(Error::Config(format!("motion blur sigma {sigma} must be >= 0")));
                }
            }
            CorruptionKind::Pixelate { f } => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::Config(format!("pixelate f {f} must be in (0,1]")));
                }
            }
        }
        Ok(())
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            CorruptionKind::Gaussian { .. } => "gaussian",
            CorruptionKind::Impulse { .. } => "impulse",
            CorruptionKind::MotionBlur { .. } => "motion_blur",
            CorruptionKind::Pixelate { .. } => "pixelate",
        }
    }
}

/// The severity grids, index i ↔ severity label i+1.
pub fn severity_grid(kind: &str) -> Result<Vec<CorruptionSpec>> {
    let specs: Vec<CorruptionKind> = match kind {
        "gaussian" => [0.08, 0.12, 0.18, 0.26, 0.38]
            .iter()
            .map(|&sigma| CorruptionKind::Gaussian { sigma })
            .collect(),
        "impulse" => [0.03, 0.06, 0.09, 0.17, 0.27]
            .iter()
            .map(|&p| CorruptionKind::Impulse { p })
            .collect(),
        "motion_blur" => [(10, 3.0), (15, 5.0), (15, 8.0), (15, 12.0), (20, 15.0)]
            .iter()
            .map(|&(rho, sigma)| CorruptionKind::MotionBlur { rho, sigma })
            .collect(),
        "pixelate" => [0.6, 0.5, 0.4, 0.3, 0.25]
            .iter()
            .map(|&f| CorruptionKind::Pixelate { f })
            .collect(),
        other => return Err(Error::Config(format!("unknown corruption kind '{other}'"))),
    };
    Ok(specs
        .into_iter()
        .enumerate()
        .map(|(i, kind)| CorruptionSpec { kind, severity_label: Some(i + 1) })
        .collect())
}

pub const CORRUPTION_KINDS: [&str; 4] = ["gaussian", "impulse", "motion_blur", "pixelate"];

/// Apply a corruption to a frame. The output keeps the shape and stays in
/// [0,1]. Deterministic under a fixed rng stream.
pub fn corrupt(frame: &Frame, spec: &CorruptionSpec, rng: &mut Rng) -> Result<Frame> {
    if frame.w == 0 || frame.h == 0 {
        return Err(Error::Shape("zero-size frame".into()));
    }
    spec.validate()?;
    match spec.kind {
        CorruptionKind::Gaussian { sigma } => Ok(gaussian_noise(frame, sigma, rng)),
        CorruptionKind::Impulse { p } => Ok(impulse_noise(frame, p, rng)),
        CorruptionKind::MotionBlur { rho, sigma } => Ok(motion_blur(frame, rho, sigma, rng)),
        CorruptionKind::Pixelate { f } => Ok(pixelate(frame, f)),
    }
}

fn gaussian_noise(frame: &Frame, sigma: f64, rng: &mut Rng) -> Frame {
    if sigma == 0.0 {
        return frame.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("validated sigma");
    let mut out = frame.clone();
    for v in out.data.iter_mut() {
        *v = (*v + normal.sample(rng)).clamp(0.0, 1.0);
    }
    out
}

fn impulse_noise(frame: &Frame, p: f64, rng: &mut Rng) -> Frame {
    let n = frame.w * frame.h;
    let k = (p * n as f64).round() as usize;
    let mut out = frame.clone();
    if k == 0 {
        return out;
    }
    // partial Fisher-Yates: first k entries are a uniform sample without
    // replacement
    let mut idx: Vec<u32> = (0..n as u32).collect();
    let (chosen, _) = idx.partial_shuffle(rng, k);
    for &i in chosen.iter() {
        out.data[i as usize] = if rng.random::<bool>() { 1.0 } else { 0.0 };
    }
    out
}

/// 1-D Gaussian of length 2ρ+1 and std σ embedded along a line at `angle`,
/// normalized to sum 1. Returned as the list of non-zero taps (dx, dy, w).
fn line_kernel(rho: usize, sigma: f64, angle: f64) -> Vec<(i64, i64, f64)> {
    let r = rho as i64;
    let size = 2 * rho + 1;
    let mut grid = vec![0.0f64; size * size];
    let mut sum = 0.0;
    for t in -r..=r {
        let w = if sigma > 0.0 {
            (-((t * t) as f64) / (2.0 * sigma * sigma)).exp()
        } else if t == 0 {
            1.0
        } else {
            0.0
        };
        let dx = ((t as f64) * angle.cos()).round() as i64;
        let dy = ((t as f64) * angle.sin()).round() as i64;
        grid[((dy + r) as usize) * size + (dx + r) as usize] += w;
        sum += w;
    }
    let mut taps = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            let w = grid[((dy + r) as usize) * size + (dx + r) as usize];
            if w > 0.0 {
                taps.push((dx, dy, w / sum));
            }
        }
    }
    taps
}

fn motion_blur(frame: &Frame, rho: usize, sigma: f64, rng: &mut Rng) -> Frame {
    let angle = (rng.random::<f64>() * 0.5 - 0.25) * std::f64::consts::PI;
    let taps = line_kernel(rho, sigma, angle);
    let mut out = Frame::new(frame.w, frame.h);
    for y in 0..frame.h as i64 {
        for x in 0..frame.w as i64 {
            let mut acc = 0.0;
            for &(dx, dy, w) in &taps {
                acc += w * frame.get_clamped(x + dx, y + dy);
            }
            out.set(x as usize, y as usize, acc.clamp(0.0, 1.0));
        }
    }
    out
}

/// Area-average downscale to exactly (dw, dh). Handles non-integer ratios via
/// fractional pixel coverage.
pub fn area_downscale(frame: &Frame, dw: usize, dh: usize) -> Frame {
    let mut out = Frame::new(dw, dh);
    let sx = frame.w as f64 / dw as f64;
    let sy = frame.h as f64 / dh as f64;
    for oy in 0..dh {
        let y0 = oy as f64 * sy;
        let y1 = (oy + 1) as f64 * sy;
        for ox in 0..dw {
            let x0 = ox as f64 * sx;
            let x1 = (ox + 1) as f64 * sx;
            let mut acc = 0.0;
            let mut area = 0.0;
            let iy0 = y0.floor() as usize;
            let iy1 = (y1.ceil() as usize).min(frame.h);
            let ix0 = x0.floor() as usize;
            let ix1 = (x1.ceil() as usize).min(frame.w);
            for py in iy0..iy1 {
                let wy = (y1.min((py + 1) as f64) - y0.max(py as f64)).max(0.0);
                if wy == 0.0 {
                    continue;
                }
                for px in ix0..ix1 {
                    let wx = (x1.min((px + 1) as f64) - x0.max(px as f64)).max(0.0);
                    if wx == 0.0 {
                        continue;
                    }
                    acc += wx * wy * frame.get(px, py);
                    area += wx * wy;
                }
            }
            out.set(ox, oy, acc / area);
        }
    }
    out
}

fn pixelate(frame: &Frame, f: f64) -> Frame {
    let dw = ((f * frame.w as f64).round() as usize).max(1);
    let dh = ((f * frame.h as f64).round() as usize).max(1);
    if dw == frame.w && dh == frame.h {
        return frame.clone();
    }
    let small = area_downscale(frame, dw, dh);
    // nearest-neighbor upscale
    let mut out = Frame::new(frame.w, frame.h);
    for y in 0..frame.h {
        let sy = ((y as f64 + 0.5) * dh as f64 / frame.h as f64) as usize;
        let sy = sy.min(dh - 1);
        for x in 0..frame.w {
            let sx = ((x as f64 + 0.5) * dw as f64 / frame.w as f64) as usize;
            let sx = sx.min(dw - 1);
            out.set(x, y, small.get(sx, sy));
        }
    }
    out
}

/// Write a frame as binary PGM (P5, maxval 255).
pub fn write_pgm(frame: &Frame, path: &Path) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", frame.w, frame.h).into_bytes();
    bytes.extend(frame.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    crate::experiment::write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    fn test_frame(w: usize, h: usize, seed: u64) -> Frame {
        let mut rng = rng_from(seed);
        Frame::from_data(w, h, (0..w * h).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn gaussian_sigma_zero_is_identity() {
        let f = test_frame(8, 8, 1);
        let mut rng = rng_from(0);
        let spec = CorruptionSpec::new(CorruptionKind::Gaussian { sigma: 0.0 });
        assert_eq!(corrupt(&f, &spec, &mut rng).unwrap(), f);
    }

    #[test]
    fn gaussian_clamps_to_unit_interval() {
        let f = test_frame(16, 16, 2);
        let mut rng = rng_from(3);
        let spec = CorruptionSpec::new(CorruptionKind::Gaussian { sigma: 5.0 });
        let out = corrupt(&f, &spec, &mut rng).unwrap();
        assert!(out.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn impulse_identity_and_saturation() {
        let f = test_frame(8, 8, 4);
        let mut rng = rng_from(0);
        let p0 = CorruptionSpec::new(CorruptionKind::Impulse { p: 0.0 });
        assert_eq!(corrupt(&f, &p0, &mut rng).unwrap(), f);
        let p1 = CorruptionSpec::new(CorruptionKind::Impulse { p: 1.0 });
        let out = corrupt(&f, &p1, &mut rng).unwrap();
        assert!(out.data.iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn impulse_rewrites_exactly_round_p_wh_pixels() {
        // round(0.09 * 7056) = 635
        let f = Frame::from_data(84, 84, vec![0.5; 84 * 84]).unwrap();
        let mut rng = rng_from(9);
        let spec = CorruptionSpec::new(CorruptionKind::Impulse { p: 0.09 });
        let out = corrupt(&f, &spec, &mut rng).unwrap();
        let rewritten = out.data.iter().filter(|&&v| v != 0.5).count();
        assert_eq!(rewritten, 635);
    }

    #[test]
    fn pixelate_f1_is_bit_identity() {
        let f = test_frame(11, 7, 5);
        let mut rng = rng_from(0);
        let spec = CorruptionSpec::new(CorruptionKind::Pixelate { f: 1.0 });
        assert_eq!(corrupt(&f, &spec, &mut rng).unwrap(), f);
    }

    #[test]
    fn pixelate_half_replaces_blocks_by_their_mean() {
        // 4x4 frame, f=0.5: each 2x2 block becomes its mean
        let data = vec![
            0.0, 1.0, 0.2, 0.4, //
            0.5, 0.5, 0.6, 0.8, //
            1.0, 1.0, 0.0, 0.0, //
            1.0, 1.0, 0.1, 0.3,
        ];
        let f = Frame::from_data(4, 4, data).unwrap();
        let mut rng = rng_from(0);
        let spec = CorruptionSpec::new(CorruptionKind::Pixelate { f: 0.5 });
        let out = corrupt(&f, &spec, &mut rng).unwrap();
        let expect = [
            (0, 0, 0.5),
            (2, 0, 0.5),
            (0, 2, 1.0),
            (2, 2, 0.1),
        ];
        for &(x, y, m) in &expect {
            for dy in 0..2 {
                for dx in 0..2 {
                    assert!((out.get(x + dx, y + dy) - m).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn downscale_preserves_mean_for_integer_factors() {
        let f = test_frame(84, 84, 6);
        let small = area_downscale(&f, 21, 21);
        let mean_full: f64 = f.data.iter().sum::<f64>() / f.data.len() as f64;
        let mean_small: f64 = small.data.iter().sum::<f64>() / small.data.len() as f64;
        assert!((mean_full - mean_small).abs() < 1e-12);
    }

    #[test]
    fn motion_blur_kernel_is_normalized_and_nonnegative() {
        for &(rho, sigma) in &[(10usize, 3.0), (15, 5.0), (15, 8.0), (15, 12.0), (20, 15.0)] {
            for &angle in &[-0.7, -0.3, 0.0, 0.2, 0.78] {
                let taps = line_kernel(rho, sigma, angle);
                let sum: f64 = taps.iter().map(|t| t.2).sum();
                assert!((sum - 1.0).abs() < 1e-12, "sum {sum} for rho {rho}");
                assert!(taps.iter().all(|t| t.2 >= 0.0));
            }
        }
    }

    #[test]
    fn motion_blur_on_constant_frame_is_identity() {
        let f = Frame::from_data(32, 32, vec![0.37; 32 * 32]).unwrap();
        let mut rng = rng_from(7);
        let spec = CorruptionSpec::new(CorruptionKind::MotionBlur { rho: 15, sigma: 8.0 });
        let out = corrupt(&f, &spec, &mut rng).unwrap();
        assert!(out.data.iter().all(|&v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn severity_grids_match_benchmark_values() {
        let g = severity_grid("gaussian").unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g[4].kind, CorruptionKind::Gaussian { sigma: 0.38 });
        assert_eq!(g[4].severity_label, Some(5));
        let mb = severity_grid("motion_blur").unwrap();
        assert_eq!(mb[2].kind, CorruptionKind::MotionBlur { rho: 15, sigma: 8.0 });
        let px = severity_grid("pixelate").unwrap();
        let fs: Vec<f64> = px
            .iter()
            .map(|s| match s.kind {
                CorruptionKind::Pixelate { f } => f,
                _ => unreachable!(),
            })
            .collect();
        assert!(fs.windows(2).all(|w| w[1] < w[0]));
        assert!(severity_grid("fog").is_err());
    }

    #[test]
    fn corruption_is_deterministic_under_fixed_stream() {
        let f = test_frame(16, 16, 8);
        for spec in severity_grid("gaussian")
            .unwrap()
            .into_iter()
            .chain(severity_grid("impulse").unwrap())
            .chain(severity_grid("motion_blur").unwrap())
        {
            let a = corrupt(&f, &spec, &mut rng_from(42)).unwrap();
            let b = corrupt(&f, &spec, &mut rng_from(42)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn zero_size_frame_is_rejected() {
        let f = Frame { w: 0, h: 0, data: vec![] };
        let spec = CorruptionSpec::new(CorruptionKind::Gaussian { sigma: 0.1 });
        assert!(corrupt(&f, &spec, &mut rng_from(0)).is_err());
    }
}
