//! Fixed-point solver for the regularized problem on the projection formula
//! `u = P_[a,b](-B* p(u) / alpha)`, the regularization path driver, and the
//! continuity inequality between two regularized solutions.

use serde::{Deserialize, Serialize};

use crate::control::AdmissibleBox;
use crate::error::{Error, Result};

/// A control handed to a backend.
#[derive(Debug, Clone, Copy)]
pub enum ControlSpec<'a> {
    Constant(f64),
    /// `P_[a,b](-q/alpha)` with `q` in the backend's nodal representation.
    Clamped { alpha: f64, q: &'a [f64] },
    /// A function given directly by its nodal values.
    Raw(&'a [f64]),
}

/// Everything the optimizer needs from a concrete control problem
/// `min 1/2 |S u - z|^2 + alpha/2 |u|^2` over the admissible box.
pub trait ProblemBackend {
    fn admissible_box(&self) -> AdmissibleBox;

    /// Nodal values of `B* p(u)`, where `p(u)` is the adjoint for the state
    /// of control `u`.
    fn adjoint_image(&self, u: ControlSpec<'_>) -> Result<Vec<f64>>;

    /// `(u, v)_U`, exact for the supported control classes.
    fn inner(&self, u: ControlSpec<'_>, v: ControlSpec<'_>) -> f64;

    /// `|u - v|^2_U`.
    fn distance_sq(&self, u: ControlSpec<'_>, v: ControlSpec<'_>) -> f64;

    /// `|S u - S v|^2_H`.
    fn state_distance_sq(&self, u: ControlSpec<'_>, v: ControlSpec<'_>) -> Result<f64>;

    /// `J_alpha(u)` up to an additive constant that depends on neither `u`
    /// nor `alpha`.
    fn objective(&self, u: ControlSpec<'_>, alpha: f64) -> Result<f64>;

    /// Problem-specific diagnostics of the control `P(-q/alpha)`.
    fn metrics(&self, alpha: f64, q: &[f64]) -> Result<PathMetrics>;

    /// `(alpha u + q_u, v - u)_U`, the variational-inequality pairing.
    fn vi_pairing(&self, alpha: f64, u: ControlSpec<'_>, q_u: &[f64], v: ControlSpec<'_>) -> f64 {
        let q = ControlSpec::Raw(q_u);
        alpha * (self.inner(u, v) - self.inner(u, u)) + self.inner(q, v) - self.inner(q, u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialControl {
    Lower,
    Upper,
    Constant(f64),
    Implicit { alpha: f64, q: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub initial: InitialControl,
    /// Relaxation `q <- (1 - theta) q + theta q_new`; 1 is the plain iteration.
    pub damping: f64,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-5,
            max_iterations: 10_000,
            initial: InitialControl::Lower,
            damping: 1.0,
        }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        if self.max_iterations < 1 {
            return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidArgument("damping must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointOutcome {
    pub alpha: f64,
    /// Nodal `q` defining the returned control `P(-q/alpha)`.
    pub q: Vec<f64>,
    pub iterations: usize,
    pub last_difference: f64,
    /// `sup |B* p(u) - q|` for the returned control.
    pub fixed_point_residual: f64,
    /// Smallest variational-inequality pairing over the test directions
    /// `a`, `b` and `(a + b) / 2`.
    pub vi_residual: f64,
    pub damping: f64,
}

impl FixedPointOutcome {
    pub fn control(&self) -> ControlSpec<'_> {
        ControlSpec::Clamped {
            alpha: self.alpha,
            q: &self.q,
        }
    }
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn solve_fixed_point<B: ProblemBackend + ?Sized>(
    backend: &B,
    alpha: f64,
    cfg: &FixedPointConfig,
) -> Result<FixedPointOutcome> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    cfg.validate()?;
    let bounds = backend.admissible_box();
    let mut q = match &cfg.initial {
        InitialControl::Lower => backend.adjoint_image(ControlSpec::Constant(bounds.lower()))?,
        InitialControl::Upper => backend.adjoint_image(ControlSpec::Constant(bounds.upper()))?,
        InitialControl::Constant(c) => backend.adjoint_image(ControlSpec::Constant(*c))?,
        InitialControl::Implicit { alpha, q } => {
            backend.adjoint_image(ControlSpec::Clamped { alpha: *alpha, q })?
        }
    };
    let mut iterations = 1;
    // For the plain iteration `q` is the previous image, so `diff` is the
    // difference of consecutive adjoint images.
    let (q_check, diff) = loop {
        if iterations >= cfg.max_iterations {
            return Err(Error::NotConverged {
                iterations,
                last_difference: f64::NAN,
            });
        }
        let q_new = backend.adjoint_image(ControlSpec::Clamped { alpha, q: &q })?;
        iterations += 1;
        let diff = sup_distance(&q_new, &q);
        log::debug!("alpha {alpha:e} iteration {iterations} sup-difference {diff:e}");
        if diff < cfg.tolerance {
            break (q_new, diff);
        }
        if iterations >= cfg.max_iterations {
            return Err(Error::NotConverged {
                iterations,
                last_difference: diff,
            });
        }
        if cfg.damping == 1.0 {
            q = q_new;
        } else {
            for (u, n) in q.iter_mut().zip(&q_new) {
                *u = (1.0 - cfg.damping) * *u + cfg.damping * n;
            }
        }
    };

    let u = ControlSpec::Clamped { alpha, q: &q };
    let vi_residual = [bounds.lower(), bounds.upper(), bounds.midpoint()]
        .into_iter()
        .map(|v| backend.vi_pairing(alpha, u, &q_check, ControlSpec::Constant(v)))
        .fold(f64::INFINITY, f64::min);
    let scale = backend.inner(ControlSpec::Constant(bounds.width()), ControlSpec::Constant(1.0));
    let tolerance = cfg.tolerance * scale;
    if vi_residual < -tolerance {
        return Err(Error::OptimalityViolated {
            residual: vi_residual,
            tolerance,
        });
    }
    Ok(FixedPointOutcome {
        alpha,
        q,
        iterations,
        last_difference: diff,
        fixed_point_residual: diff,
        vi_residual,
        damping: cfg.damping,
    })
}

/// Optional per-level diagnostics; which entries are present depends on
/// the backend.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PathMetrics {
    pub err_l1: Option<f64>,
    pub err_l2: Option<f64>,
    pub state_error: Option<f64>,
    pub inactive_measure: Option<f64>,
    pub derivative_l1: Option<f64>,
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegPathRecord {
    pub level: i32,
    pub alpha: f64,
    pub iterations: usize,
    pub last_difference: f64,
    pub fixed_point_residual: f64,
    pub vi_residual: f64,
    pub damping: f64,
    #[serde(flatten)]
    pub metrics: PathMetrics,
    pub q: Vec<f64>,
}

impl RegPathRecord {
    pub fn control(&self) -> ControlSpec<'_> {
        ControlSpec::Clamped {
            alpha: self.alpha,
            q: &self.q,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub fixed_point: FixedPointConfig,
    /// Start each level from the previous level's control instead of
    /// `fixed_point.initial`.
    pub warm_start: bool,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            fixed_point: FixedPointConfig::default(),
            warm_start: false,
        }
    }
}

#[derive(Debug)]
pub struct LevelFailure {
    pub level: i32,
    pub error: Error,
}

#[derive(Debug, Default)]
pub struct RegPath {
    pub records: Vec<RegPathRecord>,
    pub failures: Vec<LevelFailure>,
}

pub fn regularization_parameter(level: i32) -> f64 {
    2f64.powi(-level)
}

/// One independent solve per level with `alpha = 2^-level`. A failing level
/// is recorded and the remaining levels still run.
pub fn run_reg_path<B: ProblemBackend + ?Sized>(
    backend: &B,
    levels: &[i32],
    cfg: &PathConfig,
) -> Result<RegPath> {
    if levels.is_empty() {
        return Err(Error::InvalidArgument("no levels requested".into()));
    }
    let mut path = RegPath::default();
    let mut previous: Option<(f64, Vec<f64>)> = None;
    for &level in levels {
        let alpha = regularization_parameter(level);
        let mut fp = cfg.fixed_point.clone();
        if cfg.warm_start {
            if let Some((a, q)) = previous.take() {
                fp.initial = InitialControl::Implicit { alpha: a, q };
            }
        }
        let outcome = solve_fixed_point(backend, alpha, &fp)
            .and_then(|o| backend.metrics(alpha, &o.q).map(|m| (o, m)));
        match outcome {
            Ok((o, metrics)) => {
                log::info!(
                    "level {level} alpha {alpha:e}: {} iterations, sup-difference {:e}",
                    o.iterations,
                    o.last_difference
                );
                previous = Some((alpha, o.q.clone()));
                path.records.push(RegPathRecord {
                    level,
                    alpha,
                    iterations: o.iterations,
                    last_difference: o.last_difference,
                    fixed_point_residual: o.fixed_point_residual,
                    vi_residual: o.vi_residual,
                    damping: o.damping,
                    metrics,
                    q: o.q,
                });
            }
            Err(error) => {
                log::warn!("level {level} failed: {error}");
                path.failures.push(LevelFailure { level, error });
            }
        }
    }
    Ok(path)
}

/// `(alpha - alpha') (u, u' - u) - |y' - y|^2 - alpha' |u' - u|^2`, which is
/// non-negative for exact regularized solutions `u` (weight `alpha`) and `u'`
/// (weight `alpha'`).
pub fn monotonicity_slack<B: ProblemBackend + ?Sized>(
    backend: &B,
    alpha: f64,
    u: ControlSpec<'_>,
    alpha_prime: f64,
    u_prime: ControlSpec<'_>,
) -> Result<f64> {
    let state = backend.state_distance_sq(u_prime, u)?;
    let control = backend.distance_sq(u_prime, u);
    let cross = backend.inner(u, u_prime) - backend.inner(u, u);
    Ok((alpha - alpha_prime) * cross - state - alpha_prime * control)
}

pub fn check_monotonicity_inequality<B: ProblemBackend + ?Sized>(
    backend: &B,
    rec: &RegPathRecord,
    rec_prime: &RegPathRecord,
) -> Result<f64> {
    monotonicity_slack(backend, rec.alpha, rec.control(), rec_prime.alpha, rec_prime.control())
}
