//! Heat equation with a located control and a known bang-bang solution.
//!
//! On `(0,1)^2 x (0, 0.5)` with `g1 = sin(pi x1) sin(pi x2)` the limit
//! problem is solved by `u = a = -0.2`, with adjoint
//! `p(t,x) = (T - t)^{1/kappa} g1(x)` and state
//! `y(t,x) = cos(2 pi f t / T) g1(x)`, `f = 2`. The tracking target and the
//! drift `g0` are derived from these so that both heat equations hold
//! exactly. Since `B* p(t) = (T - t)^{1/kappa} / 4`, the level sets of
//! `|B* p|` have measure `min(T, (4 eps)^kappa)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::control::AdmissibleBox;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedProblem {
    pub kappa: f64,
    pub end_time: f64,
    pub frequency_factor: f64,
    pub lower: f64,
    pub upper: f64,
}

/// `||g1||^2_{L^2((0,1)^2)}`.
pub const PROFILE_NORM_SQ: f64 = 0.25;

pub fn profile(x1: f64, x2: f64) -> f64 {
    (PI * x1).sin() * (PI * x2).sin()
}

/// `-Delta g1 = LAMBDA g1`.
pub const PROFILE_EIGENVALUE: f64 = 2.0 * PI * PI;

impl ManufacturedProblem {
    pub fn located_heat(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidArgument(format!("kappa must be positive, got {kappa}")));
        }
        Ok(Self {
            kappa,
            end_time: 0.5,
            frequency_factor: 2.0,
            lower: -0.2,
            upper: 0.2,
        })
    }

    pub fn bounds(&self) -> AdmissibleBox {
        AdmissibleBox::new(self.lower, self.upper).expect("valid constant bounds")
    }

    /// The optimal control of the limit problem.
    pub fn exact_control(&self) -> f64 {
        self.lower
    }

    fn omega(&self) -> f64 {
        2.0 * PI * self.frequency_factor / self.end_time
    }

    /// Temporal factor of the exact state.
    pub fn state_time(&self, t: f64) -> f64 {
        (self.omega() * t).cos()
    }

    /// Temporal factor of the exact adjoint, `(T - t)^{1/kappa}`.
    pub fn adjoint_time(&self, t: f64) -> f64 {
        (self.end_time - t).max(0.0).powf(1.0 / self.kappa)
    }

    /// Temporal factor of the target `y_d`; unbounded at `t = T` when
    /// `kappa > 1`.
    pub fn target_time(&self, t: f64) -> f64 {
        let s = self.end_time - t;
        let e = 1.0 / self.kappa;
        self.state_time(t) - e * s.powf(e - 1.0) - PROFILE_EIGENVALUE * s.powf(e)
    }

    /// Temporal factor of the drift `g0 = d_t y - Delta y - B u`.
    pub fn drift_time(&self, t: f64) -> f64 {
        let w = self.omega() * t;
        2.0 * PI * (-(self.frequency_factor / self.end_time) * w.sin() + PI * w.cos())
            - self.exact_control()
    }

    /// `B* p(t) = (p(t), g1)`.
    pub fn b_star_adjoint(&self, t: f64) -> f64 {
        PROFILE_NORM_SQ * self.adjoint_time(t)
    }

    pub fn initial_state(&self, x1: f64, x2: f64) -> f64 {
        self.state_time(0.0) * profile(x1, x2)
    }

    pub fn exact_state(&self, t: f64, x1: f64, x2: f64) -> f64 {
        self.state_time(t) * profile(x1, x2)
    }

    pub fn exact_adjoint(&self, t: f64, x1: f64, x2: f64) -> f64 {
        self.adjoint_time(t) * profile(x1, x2)
    }

    pub fn target(&self, t: f64, x1: f64, x2: f64) -> f64 {
        self.target_time(t) * profile(x1, x2)
    }

    pub fn drift(&self, t: f64, x1: f64, x2: f64) -> f64 {
        self.drift_time(t) * profile(x1, x2)
    }

    /// `meas{t in [0, T] : |B* p(t)| <= eps}`.
    pub fn exact_zero_measure(&self, eps: f64) -> f64 {
        exact_zero_measure(eps, self.kappa, self.end_time)
    }
}

/// `min(T, (4 eps)^kappa)`.
pub fn exact_zero_measure(eps: f64, kappa: f64, end_time: f64) -> f64 {
    if eps <= 0.0 {
        return 0.0;
    }
    (4.0 * eps).powf(kappa).min(end_time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};

    #[test]
    fn closed_forms() {
        let p = ManufacturedProblem::located_heat(1.0).unwrap();
        assert!((p.b_star_adjoint(0.0) - 0.125).abs() < 1e-15);
        assert!((exact_zero_measure(0.01, 1.0, 0.5) - 0.04).abs() < 1e-15);
        assert!((exact_zero_measure(0.05, 2.0, 0.5) - 0.04).abs() < 1e-15);
        assert_eq!(exact_zero_measure(0.5f64.powf(0.5) / 4.0 + 1e-9, 2.0, 0.5), 0.5);
        assert!(ManufacturedProblem::located_heat(0.0).is_err());
        assert!(ManufacturedProblem::located_heat(-1.0).is_err());
        assert_eq!(p.initial_state(0.3, 0.6), profile(0.3, 0.6));
    }

    #[test]
    fn target_formula() {
        for kappa in [0.3, 0.5, 1.0, 2.0] {
            let p = ManufacturedProblem::located_heat(kappa).unwrap();
            for t in [0.0, 0.1, 0.33, 0.49] {
                let s: f64 = 0.5 - t;
                let expected = (4.0 * PI * t / 0.5).cos()
                    - (1.0 / kappa) * s.powf(1.0 / kappa - 1.0)
                    - 2.0 * PI * PI * s.powf(1.0 / kappa);
                assert!((p.target_time(t) - expected).abs() < 1e-12);
                let g0 = 2.0 * PI * (-(2.0 / 0.5) * (4.0 * PI * t / 0.5).sin() + PI * (4.0 * PI * t / 0.5).cos()) + 0.2;
                assert!((p.drift_time(t) - g0).abs() < 1e-12);
            }
        }
    }

    fn d_dt(f: impl Fn(f64) -> f64, t: f64, h: f64) -> f64 {
        // fourth-order central difference
        (-f(t + 2.0 * h) + 8.0 * f(t + h) - 8.0 * f(t - h) + f(t - 2.0 * h)) / (12.0 * h)
    }

    fn laplacian(f: impl Fn(f64, f64) -> f64, x: f64, y: f64, h: f64) -> f64 {
        (f(x + h, y) + f(x - h, y) + f(x, y + h) + f(x, y - h) - 4.0 * f(x, y)) / (h * h)
    }

    #[test]
    fn pde_residual_spot_checks() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for kappa in [0.3, 0.5, 1.0, 2.0] {
            let p = ManufacturedProblem::located_heat(kappa).unwrap();
            for _ in 0..1000 {
                let t = rng.random_range(1e-3..0.5 - 1e-3);
                let x = rng.random_range(0.0..1.0);
                let y = rng.random_range(0.0..1.0);
                let s = 0.5 - t;
                let ht = 1e-4f64.min(s / 20.0);
                let hx = 1e-4;
                // adjoint: -p_t - Delta p = y - y_d
                let pt = d_dt(|t| p.exact_adjoint(t, x, y), t, ht);
                let lap = laplacian(|a, b| p.exact_adjoint(t, a, b), x, y, hx);
                let res = -pt - lap - (p.exact_state(t, x, y) - p.target(t, x, y));
                let scale = 1.0 + pt.abs() + lap.abs();
                assert!(res.abs() / scale < 1e-5, "kappa {kappa} t {t}: {res}");
                // state: y_t - Delta y = g0 + B u
                let yt = d_dt(|t| p.exact_state(t, x, y), t, 1e-4);
                let lap = laplacian(|a, b| p.exact_state(t, a, b), x, y, hx);
                let res = yt - lap - (p.drift(t, x, y) + p.exact_control() * profile(x, y));
                assert!(res.abs() < 1e-5, "kappa {kappa} t {t}: {res}");
            }
        }
    }

    #[test]
    fn zero_measure_matches_scan() {
        for kappa in [0.3, 0.5, 1.0, 2.0] {
            let p = ManufacturedProblem::located_heat(kappa).unwrap();
            for eps in [0.001, 0.01, 0.05, 0.1] {
                let n = 1_000_000;
                let dt = 0.5 / n as f64;
                let hits = (0..n)
                    .filter(|&i| p.b_star_adjoint((i as f64 + 0.5) * dt).abs() <= eps)
                    .count();
                let scanned = hits as f64 * dt;
                assert!((scanned - p.exact_zero_measure(eps)).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn limit_control_is_bang_bang() {
        let p = ManufacturedProblem::located_heat(0.5).unwrap();
        for i in 0..100 {
            let t = 0.5 * i as f64 / 100.0;
            assert!(p.b_star_adjoint(t) > 0.0);
        }
        assert_eq!(p.exact_control(), p.bounds().lower());
    }
}
