//! Evaluation metrics: RMSE over an evaluation mask, discretized imputation
//! error rate, PSNR, and SSIM for grayscale images.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::{real, Real};

/// Flat record of the metrics computed for one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport<T: Real> {
    pub rmse: T,
    pub error_rate: Option<T>,
    pub psnr_db: Option<T>,
    pub ssim: Option<T>,
    pub n_evaluated: usize,
}

impl<T: Real> EvalReport<T> {
    /// Serializes as line-delimited `key=value` text, fixed key order,
    /// optional metrics omitted.
    pub fn to_text(&self) -> String {
        let mut out = format!("rmse={:.16e}\n", self.rmse);
        if let Some(e) = self.error_rate {
            out.push_str(&format!("error_rate={e:.16e}\n"));
        }
        if let Some(p) = self.psnr_db {
            out.push_str(&format!("psnr_db={p:.16e}\n"));
        }
        if let Some(s) = self.ssim {
            out.push_str(&format!("ssim={s:.16e}\n"));
        }
        out.push_str(&format!("n_evaluated={}\n", self.n_evaluated));
        out
    }
}

fn check_shapes<T: Real>(pred: &DMatrix<T>, truth: &DMatrix<T>) -> Result<()> {
    if pred.shape() != truth.shape() {
        return Err(Error::Dimension(format!(
            "prediction is {}x{} but truth is {}x{}",
            pred.nrows(),
            pred.ncols(),
            truth.nrows(),
            truth.ncols()
        )));
    }
    Ok(())
}

fn check_mask<T: Real>(pred: &DMatrix<T>, mask: &[(usize, usize)]) -> Result<()> {
    if mask.is_empty() {
        return Err(Error::InvalidArgument("evaluation mask is empty".into()));
    }
    for &(i, j) in mask {
        if i >= pred.nrows() || j >= pred.ncols() {
            return Err(Error::InvalidData(format!(
                "mask cell ({i},{j}) outside {}x{}",
                pred.nrows(),
                pred.ncols()
            )));
        }
    }
    Ok(())
}

/// Root-mean-square error over the masked cells.
pub fn rmse<T: Real>(
    pred: &DMatrix<T>,
    truth: &DMatrix<T>,
    mask: &[(usize, usize)],
) -> Result<T> {
    check_shapes(pred, truth)?;
    check_mask(pred, mask)?;
    let mut acc = T::zero();
    for &(i, j) in mask {
        let d = pred[(i, j)] - truth[(i, j)];
        acc += d * d;
    }
    Ok((acc / real(mask.len() as f64)).sqrt())
}

/// Nearest value in the alphabet; ties resolve to the smaller value.
fn round_to_alphabet<T: Real>(x: T, sorted_alphabet: &[T]) -> T {
    let mut best = sorted_alphabet[0];
    let mut best_dist = (x - best).abs();
    for &a in &sorted_alphabet[1..] {
        let d = (x - a).abs();
        if d < best_dist {
            best = a;
            best_dist = d;
        }
    }
    best
}

/// Fraction of masked cells whose prediction, discretized to the nearest
/// alphabet value, differs from the equally discretized truth.
pub fn error_rate<T: Real>(
    pred: &DMatrix<T>,
    truth: &DMatrix<T>,
    mask: &[(usize, usize)],
    alphabet: &[T],
) -> Result<T> {
    check_shapes(pred, truth)?;
    check_mask(pred, mask)?;
    if alphabet.is_empty() {
        return Err(Error::InvalidArgument("alphabet is empty".into()));
    }
    let mut sorted = alphabet.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut wrong = 0usize;
    for &(i, j) in mask {
        let p = round_to_alphabet(pred[(i, j)], &sorted);
        let t = round_to_alphabet(truth[(i, j)], &sorted);
        if p != t {
            wrong += 1;
        }
    }
    Ok(real::<T>(wrong as f64) / real(mask.len() as f64))
}

/// Peak signal-to-noise ratio in dB, 10·log10(peak²/MSE) over all cells.
/// A zero MSE reports the cap value 99 dB.
pub fn psnr<T: Real>(pred: &DMatrix<T>, truth: &DMatrix<T>, peak: T) -> Result<T> {
    check_shapes(pred, truth)?;
    if pred.is_empty() {
        return Err(Error::Dimension("images are empty".into()));
    }
    if peak <= T::zero() {
        return Err(Error::InvalidArgument("peak must be positive".into()));
    }
    let mut acc = T::zero();
    for (p, t) in pred.iter().zip(truth.iter()) {
        let d = *p - *t;
        acc += d * d;
    }
    let mse = acc / real(pred.len() as f64);
    if mse == T::zero() {
        return Ok(real(99.0));
    }
    Ok(real::<T>(10.0) * (peak * peak / mse).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_DYNAMIC_RANGE: f64 = 255.0;

fn ssim_weights<T: Real>() -> [[T; SSIM_WINDOW]; SSIM_WINDOW] {
    let mut w = [[T::zero(); SSIM_WINDOW]; SSIM_WINDOW];
    let mut total = 0.0f64;
    let half = (SSIM_WINDOW / 2) as f64;
    for (di, row) in w.iter_mut().enumerate() {
        for (dj, cell) in row.iter_mut().enumerate() {
            let (x, y) = (di as f64 - half, dj as f64 - half);
            let g = (-(x * x + y * y) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            total += g;
            *cell = real(g);
        }
    }
    let norm = real::<T>(total);
    for row in w.iter_mut() {
        for cell in row.iter_mut() {
            *cell /= norm;
        }
    }
    w
}

/// Mean structural similarity over all fully interior 11x11 windows, with
/// the standard Gaussian weighting (sigma 1.5) and stabilizers K1=0.01,
/// K2=0.03 at dynamic range 255.
pub fn ssim<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<T> {
    check_shapes(a, b)?;
    let (m, n) = a.shape();
    if m < SSIM_WINDOW || n < SSIM_WINDOW {
        return Err(Error::Dimension(format!(
            "images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {m}x{n}"
        )));
    }
    let w = ssim_weights::<T>();
    let c1 = real::<T>((SSIM_K1 * SSIM_DYNAMIC_RANGE) * (SSIM_K1 * SSIM_DYNAMIC_RANGE));
    let c2 = real::<T>((SSIM_K2 * SSIM_DYNAMIC_RANGE) * (SSIM_K2 * SSIM_DYNAMIC_RANGE));

    let mut total = T::zero();
    let mut windows = 0usize;
    for i0 in 0..=(m - SSIM_WINDOW) {
        for j0 in 0..=(n - SSIM_WINDOW) {
            let (mut mu_a, mut mu_b) = (T::zero(), T::zero());
            let (mut aa, mut bb, mut ab) = (T::zero(), T::zero(), T::zero());
            for di in 0..SSIM_WINDOW {
                for dj in 0..SSIM_WINDOW {
                    let wx = w[di][dj];
                    let x = a[(i0 + di, j0 + dj)];
                    let y = b[(i0 + di, j0 + dj)];
                    mu_a += wx * x;
                    mu_b += wx * y;
                    aa += wx * x * x;
                    bb += wx * y * y;
                    // Grouped so the result is bitwise symmetric in (a, b).
                    ab += wx * (x * y);
                }
            }
            let var_a = aa - mu_a * mu_a;
            let var_b = bb - mu_b * mu_b;
            let cov = ab - mu_a * mu_b;
            let two = real::<T>(2.0);
            let num = (two * (mu_a * mu_b) + c1) * (two * cov + c2);
            let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
            windows += 1;
        }
    }
    Ok(total / real(windows as f64))
}
