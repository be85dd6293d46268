use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::renderer::Image;

pub const PSNR_CAP: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn check_shapes(a: &Image, b: &Image) -> Result<(), TrainError> {
    if !a.same_shape(b) {
        return Err(TrainError::Shape(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width, a.height, a.channels, b.width, b.height, b.channels
        )));
    }
    Ok(())
}

/// Peak signal-to-noise ratio for values in `[0, 1]`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64, TrainError> {
    check_shapes(a, b)?;
    let mse = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.data.len().max(1) as f64;
    Ok(if mse < 1e-10 { PSNR_CAP } else { (10.0 * (1.0 / mse).log10()).min(PSNR_CAP) })
}

fn gaussian_window() -> Vec<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()).collect();
    let sum: f64 = w.iter().sum();
    w.into_iter().map(|v| v / sum).collect()
}

/// Separable Gaussian filtering over positions where the window fits.
fn filter_valid(data: &[f64], width: usize, height: usize, g: &[f64]) -> Vec<f64> {
    let n = g.len();
    let (ow, oh) = (width + 1 - n, height + 1 - n);
    let mut rows = vec![0.0; ow * height];
    for y in 0..height {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|i| g[i] * data[y * width + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| g[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Structural similarity of the channel-mean gray images, averaged over
/// every window position inside the image.
pub fn ssim(a: &Image, b: &Image) -> Result<f64, TrainError> {
    check_shapes(a, b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(TrainError::Shape(format!(
            "{}x{} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window",
            a.width, a.height
        )));
    }
    let (x, y) = (a.to_gray(), b.to_gray());
    let (w, h) = (a.width, a.height);
    let g = gaussian_window();
    let product = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(u, v)| u * v).collect() };
    let mu_x = filter_valid(&x.data, w, h, &g);
    let mu_y = filter_valid(&y.data, w, h, &g);
    let xx = filter_valid(&product(&x.data, &x.data), w, h, &g);
    let yy = filter_valid(&product(&y.data, &y.data), w, h, &g);
    let xy = filter_valid(&product(&x.data, &y.data), w, h, &g);
    let (c1, c2) = (SSIM_K1.powi(2), SSIM_K2.powi(2));
    let mut total = 0.0;
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let vx = xx[i] - mx * mx;
        let vy = yy[i] - my * my;
        let cov = xy[i] - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    Ok(total / mu_x.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population standard deviation; zeros for no values.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: 0.0, std: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

/// Per-frame metrics summarized over a frame set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub psnr: MeanStd,
    pub ssim: MeanStd,
    pub geometric_error: MeanStd,
    pub frames: Vec<FrameMetrics>,
    /// Free-form description of the evaluated model.
    #[serde(default)]
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub id: String,
    pub psnr: f64,
    pub ssim: f64,
    pub geometric_error: f64,
}

impl EvalReport {
    pub fn from_frames(frames: Vec<FrameMetrics>, label: impl Into<String>) -> Self {
        let col = |f: fn(&FrameMetrics) -> f64| frames.iter().map(f).collect::<Vec<_>>();
        Self {
            psnr: MeanStd::of(&col(|m| m.psnr)),
            ssim: MeanStd::of(&col(|m| m.ssim)),
            geometric_error: MeanStd::of(&col(|m| m.geometric_error)),
            frames,
            label: label.into(),
        }
    }

    pub fn frame_ids(&self) -> Vec<&str> {
        self.frames.iter().map(|f| f.id.as_str()).collect()
    }
}
