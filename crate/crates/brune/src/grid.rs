//! Logarithmic frequency grids used by the positive-real check and the
//! resistance-minimum search.

use serde::{Deserialize, Serialize};

/// A log-spaced angular-frequency grid on `[omega_min, omega_max]` (rad/s).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub omega_min: f64,
    pub omega_max: f64,
    pub n_points: usize,
}

impl GridSpec {
    pub fn new(omega_min: f64, omega_max: f64, n_points: usize) -> Self {
        assert!(omega_min > 0.0 && omega_max > omega_min && n_points >= 2);
        Self {
            omega_min,
            omega_max,
            n_points,
        }
    }

    /// Grid bracketing the dynamics of a state matrix: spans
    /// `[scale_min / factor, scale_max * factor]` where the scales come from
    /// the eigenvalue magnitudes of `A` (imaginary parts when present).
    pub fn around_eigenvalues(
        eigs: &[num_complex::Complex64],
        factor: f64,
        n_points: usize,
    ) -> Self {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for ev in eigs {
            let im = ev.im.abs();
            let mag = ev.norm();
            if im > 1e-300 {
                lo = lo.min(im);
            } else if mag > 1e-300 {
                lo = lo.min(mag);
            }
            hi = hi.max(mag);
        }
        if !lo.is_finite() || hi == 0.0 {
            // constant network: any grid will do
            lo = 1.0;
            hi = 1.0;
        }
        Self::new(lo / factor, hi * factor * (1.0 + 1e-9), n_points)
    }

    pub fn points(&self) -> Vec<f64> {
        let (a, b) = (self.omega_min.ln(), self.omega_max.ln());
        (0..self.n_points)
            .map(|i| (a + (b - a) * i as f64 / (self.n_points - 1) as f64).exp())
            .collect()
    }
}

/// Golden-section minimization of `f` on `[a, b]` (works on the log axis when
/// the caller passes log endpoints).
pub fn golden_section_min(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, iters: usize) -> f64 {
    const INVPHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (a, b);
    let mut c = b - INVPHI * (b - a);
    let mut d = a + INVPHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INVPHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INVPHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
