//! Savitzky-Golay smoothing and differentiation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::{RecordedTrack, TrackFrame};

pub const DEFAULT_WINDOW: usize = 21;
pub const DEFAULT_POLYORDER: usize = 3;

/// Least-squares polynomial fit over a window, expressed as linear weights.
#[derive(Debug, Clone)]
pub struct SavitzkyGolay {
    window: usize,
    polyorder: usize,
    /// `(polyorder + 1) x window`: maps window samples to polynomial
    /// coefficients in the sample offset.
    fit: DMatrix<f64>,
}

impl SavitzkyGolay {
    pub fn new(window: usize, polyorder: usize) -> Result<Self> {
        if window.is_multiple_of(2) || window <= polyorder {
            return Err(Error::Domain(format!(
                "window {window} must be odd and larger than the polynomial order {polyorder}"
            )));
        }
        let h = (window / 2) as f64;
        let a = DMatrix::from_fn(window, polyorder + 1, |i, j| (i as f64 - h).powi(j as i32));
        let fit = a
            .clone()
            .svd(true, true)
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Domain(e.to_string()))?;
        Ok(Self { window, polyorder, fit })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn polyorder(&self) -> usize {
        self.polyorder
    }

    /// Weights giving the `deriv`-th derivative (per sample) of the fit at
    /// offset `t` from the window centre.
    pub fn weights(&self, deriv: usize, t: f64) -> DVector<f64> {
        let mut w = DVector::zeros(self.window);
        for j in deriv..=self.polyorder {
            let falling: f64 = ((j - deriv + 1)..=j).map(|k| k as f64).product();
            let c = falling * t.powi((j - deriv) as i32);
            w += self.fit.row(j).transpose() * c;
        }
        w
    }

    /// Filters a whole signal. Edge samples use the fit of the first or last
    /// full window. Signals shorter than the window are rejected.
    pub fn apply(&self, signal: &[f64], deriv: usize) -> Result<Vec<f64>> {
        let n = signal.len();
        if n < self.window {
            return Err(Error::Domain(format!(
                "signal of {n} samples is shorter than the window {}",
                self.window
            )));
        }
        let h = self.window / 2;
        let centre = self.weights(deriv, 0.0);
        let dot = |start: usize, w: &DVector<f64>| -> f64 {
            signal[start..start + self.window].iter().zip(w.iter()).map(|(a, b)| a * b).sum()
        };
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let v = if i < h {
                dot(0, &self.weights(deriv, i as f64 - h as f64))
            } else if i + h >= n {
                dot(n - self.window, &self.weights(deriv, (i + self.window - n) as f64 - h as f64))
            } else {
                dot(i - h, &centre)
            };
            out.push(v);
        }
        Ok(out)
    }
}

/// A smoothed track, or the input when it was too short.
#[derive(Debug, Clone, PartialEq)]
pub struct Smoothed {
    pub track: RecordedTrack,
    pub smoothed: bool,
}

/// Smooths positions and recomputes speed and heading from the fitted
/// derivatives. Timestamps, lanes and frame count are kept.
pub fn smooth_track(track: &RecordedTrack, window: usize, polyorder: usize, period: f64) -> Result<Smoothed> {
    let sg = SavitzkyGolay::new(window, polyorder)?;
    if track.frames.len() < window {
        return Ok(Smoothed {
            track: track.clone(),
            smoothed: false,
        });
    }
    let xs: Vec<f64> = track.frames.iter().map(|f| f.x).collect();
    let ys: Vec<f64> = track.frames.iter().map(|f| f.y).collect();
    let (x, dx) = (sg.apply(&xs, 0)?, sg.apply(&xs, 1)?);
    let (y, dy) = (sg.apply(&ys, 0)?, sg.apply(&ys, 1)?);
    let frames = track
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let (vx, vy) = (dx[i] / period, dy[i] / period);
            TrackFrame {
                x: x[i],
                y: y[i],
                v: vx.hypot(vy),
                psi: vy.atan2(vx),
                ..*f
            }
        })
        .collect();
    Ok(Smoothed {
        track: RecordedTrack {
            frames,
            ..track.clone()
        },
        smoothed: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_five_point_quadratic() {
        let sg = SavitzkyGolay::new(5, 2).unwrap();
        let w = sg.weights(0, 0.0);
        let expect = [-3.0, 12.0, 17.0, 12.0, -3.0].map(|c| c / 35.0);
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn reproduces_cubic_everywhere() {
        let sg = SavitzkyGolay::new(21, 3).unwrap();
        let p = |t: f64| 1.0 - 0.5 * t + 0.03 * t * t - 0.002 * t * t * t;
        let dp = |t: f64| -0.5 + 0.06 * t - 0.006 * t * t;
        let sig: Vec<f64> = (0..60).map(|i| p(i as f64)).collect();
        let s = sg.apply(&sig, 0).unwrap();
        let d = sg.apply(&sig, 1).unwrap();
        for i in 0..60 {
            assert!((s[i] - sig[i]).abs() < 1e-9, "value at {i}");
            assert!((d[i] - dp(i as f64)).abs() < 1e-9, "slope at {i}");
        }
    }

    #[test]
    fn rejects_bad_windows() {
        assert!(SavitzkyGolay::new(20, 3).is_err());
        assert!(SavitzkyGolay::new(3, 3).is_err());
        assert!(SavitzkyGolay::new(5, 2).unwrap().apply(&[1.0; 4], 0).is_err());
    }
}
