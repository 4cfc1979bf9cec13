//! Located time-dependent controls: the admissible box, the operators
//! `B u = u(t) g1` and `B* p = (p(t), g1)`, and the variationally
//! discretized control `u(t) = clamp(-q(t)/alpha, a, b)`.
//!
//! The control is never stored on a grid. `q` is linear on every time
//! interval, so `u` is linear between clamp breakpoints and every integral
//! below is evaluated exactly by splitting at those breakpoints.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::mesh::{NodalField, SparseOperator};
use crate::parabolic::{AdjointTrajectory, SeparableLoad};
use crate::time_grid::{basis_moments, PiecewiseLinearScalar, TimePartition};

/// Constant box `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleBox {
    lower: f64,
    upper: f64,
}

impl AdmissibleBox {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower <= upper) {
            return Err(Error::InvalidArgument(format!(
                "invalid admissible box [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    /// `min(-a, b)` when `a < 0 < b`.
    pub fn sigma(&self) -> Option<f64> {
        (self.lower < 0.0 && self.upper > 0.0).then(|| (-self.lower).min(self.upper))
    }

    /// `median(a, v, b)`.
    pub fn project(&self, v: f64) -> f64 {
        v.max(self.lower).min(self.upper)
    }

    pub fn project_all(&self, values: &mut [f64]) {
        for v in values {
            *v = self.project(*v);
        }
    }

    /// Strictly inside `(a, b)`; values on a bound count as active.
    pub fn is_inactive(&self, v: f64) -> bool {
        self.lower < v && v < self.upper
    }
}

/// `B u = u(t) g1` and its adjoint `B* p = (p(t), g1)_{L^2}`.
#[derive(Debug, Clone)]
pub struct LocatedControlOperator {
    profile: NodalField,
    weights: Vec<f64>,
}

impl LocatedControlOperator {
    pub fn new(mass: &SparseOperator, profile: NodalField) -> Result<Self> {
        check_len(mass.dim(), profile.len())?;
        let weights = mass.apply(profile.values());
        Ok(Self { profile, weights })
    }

    pub fn profile(&self) -> &NodalField {
        &self.profile
    }

    /// `w = M g1`, the dual vector of the spatial profile.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn apply_b_star(
        &self,
        partition: &TimePartition,
        p: &AdjointTrajectory,
    ) -> Result<PiecewiseLinearScalar> {
        check_len(partition.nodes().len(), p.nodal().len())?;
        let values = p
            .nodal()
            .iter()
            .map(|pm| {
                check_len(self.weights.len(), pm.len())?;
                Ok(pm.dot(&self.weights))
            })
            .collect::<Result<Vec<_>>>()?;
        PiecewiseLinearScalar::new(partition, values)
    }
}

/// A scalar function of time that is linear between a few breakpoints on
/// every interval of a shared partition.
#[derive(Debug, Clone, Copy)]
pub enum TimeFunction<'a> {
    Constant(f64),
    /// Continuous piecewise-linear function given by nodal values.
    Linear(&'a [f64]),
    /// `clamp(-q/alpha, lower, upper)` with `q` given by nodal values.
    Clamped {
        alpha: f64,
        q: &'a [f64],
        bounds: AdmissibleBox,
    },
}

impl TimeFunction<'_> {
    /// Value at local coordinate `s` in `[0, 1]` of interval `m`.
    pub fn eval_local(&self, m: usize, s: f64) -> f64 {
        match *self {
            TimeFunction::Constant(c) => c,
            TimeFunction::Linear(v) => lerp(v[m - 1], v[m], s),
            TimeFunction::Clamped { alpha, q, bounds } => {
                bounds.project(-lerp(q[m - 1], q[m], s) / alpha)
            }
        }
    }

    /// Local coordinates in `(0, 1)` where the function has a kink on
    /// interval `m`, appended to `out`.
    pub fn breakpoints(&self, m: usize, out: &mut Vec<f64>) {
        if let TimeFunction::Clamped { alpha, q, bounds } = *self {
            let v0 = -q[m - 1] / alpha;
            let v1 = -q[m] / alpha;
            for level in [bounds.lower(), bounds.upper()] {
                if let Some(s) = crossing(v0, v1, level) {
                    out.push(s);
                }
            }
        }
    }
}

fn lerp(a: f64, b: f64, s: f64) -> f64 {
    a + s * (b - a)
}

/// Local coordinate in `(0, 1)` where the segment from `v0` to `v1`
/// crosses `level`.
fn crossing(v0: f64, v1: f64, level: f64) -> Option<f64> {
    if (v0 < level && level < v1) || (v1 < level && level < v0) {
        let s = (level - v0) / (v1 - v0);
        (s > 0.0 && s < 1.0).then_some(s)
    } else {
        None
    }
}

/// Sorted local breakpoints `0 = s_0 < ... < s_r = 1` of interval `m`
/// shared by all `fns`.
fn local_pieces(m: usize, fns: &[TimeFunction<'_>], out: &mut Vec<f64>) {
    out.clear();
    out.push(0.0);
    for f in fns {
        f.breakpoints(m, out);
    }
    out.push(1.0);
    out.sort_by(f64::total_cmp);
    out.dedup();
}

/// `int_0^T g(f_1(t), ..., f_n(t)) dt` for a `g` that is at most quadratic
/// in its arguments; exact because every `f_i` is linear on each piece.
pub fn integrate_quadratic(
    partition: &TimePartition,
    fns: &[TimeFunction<'_>],
    g: impl Fn(&[f64]) -> f64,
) -> f64 {
    let mut pieces = Vec::with_capacity(8);
    let mut vals = vec![0.0; fns.len()];
    let eval = |m: usize, s: f64, vals: &mut Vec<f64>| {
        for (v, f) in vals.iter_mut().zip(fns) {
            *v = f.eval_local(m, s);
        }
        g(vals)
    };
    let mut total = 0.0;
    for m in 1..=partition.intervals() {
        let k = partition.step(m);
        local_pieces(m, fns, &mut pieces);
        for w in pieces.windows(2) {
            let (s0, s1) = (w[0], w[1]);
            let ga = eval(m, s0, &mut vals);
            let gm = eval(m, 0.5 * (s0 + s1), &mut vals);
            let gb = eval(m, s1, &mut vals);
            total += (s1 - s0) * k / 6.0 * (ga + 4.0 * gm + gb);
        }
    }
    total
}

/// `int f phi_n dt` for all hats `n = 0..=M`, exact for the function
/// classes of [`TimeFunction`].
pub fn hat_moments(partition: &TimePartition, f: TimeFunction<'_>) -> Vec<f64> {
    let steps = partition.intervals();
    let mut out = vec![0.0; steps + 1];
    let mut pieces = Vec::with_capacity(4);
    for m in 1..=steps {
        let k = partition.step(m);
        local_pieces(m, std::slice::from_ref(&f), &mut pieces);
        for w in pieces.windows(2) {
            let (s0, s1) = (w[0], w[1]);
            let sm = 0.5 * (s0 + s1);
            let (fa, fm, fb) = (f.eval_local(m, s0), f.eval_local(m, sm), f.eval_local(m, s1));
            let scale = (s1 - s0) * k / 6.0;
            // phi_m rises as s, phi_{m-1} falls as 1 - s
            out[m] += scale * (fa * s0 + 4.0 * fm * sm + fb * s1);
            out[m - 1] += scale * (fa * (1.0 - s0) + 4.0 * fm * (1.0 - sm) + fb * (1.0 - s1));
        }
    }
    out
}

/// The variationally discretized control `clamp(-q/alpha, a, b)`.
#[derive(Debug, Clone)]
pub struct ImplicitControl {
    alpha: f64,
    q: PiecewiseLinearScalar,
    bounds: AdmissibleBox,
    partition: Arc<TimePartition>,
}

/// Linear piece of an [`ImplicitControl`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSegment {
    pub start: f64,
    pub end: f64,
    pub u_start: f64,
    pub u_end: f64,
    pub inactive: bool,
}

impl ImplicitControl {
    pub fn new(
        alpha: f64,
        q: PiecewiseLinearScalar,
        bounds: AdmissibleBox,
        partition: Arc<TimePartition>,
    ) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
        }
        check_len(partition.nodes().len(), q.values().len())?;
        Ok(Self {
            alpha,
            q,
            bounds,
            partition,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn q(&self) -> &PiecewiseLinearScalar {
        &self.q
    }

    pub fn bounds(&self) -> AdmissibleBox {
        self.bounds
    }

    pub fn partition(&self) -> &Arc<TimePartition> {
        &self.partition
    }

    pub fn as_time_function(&self) -> TimeFunction<'_> {
        TimeFunction::Clamped {
            alpha: self.alpha,
            q: self.q.values(),
            bounds: self.bounds,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.bounds.project(-self.q.eval(&self.partition, t) / self.alpha)
    }

    /// All linear pieces in time order.
    pub fn segments(&self) -> Vec<ControlSegment> {
        let f = self.as_time_function();
        let mut pieces = Vec::with_capacity(4);
        let mut out = Vec::with_capacity(self.partition.intervals() + 4);
        let q = self.q.values();
        for m in 1..=self.partition.intervals() {
            let (t0, k) = (self.partition.nodes()[m - 1], self.partition.step(m));
            local_pieces(m, std::slice::from_ref(&f), &mut pieces);
            for w in pieces.windows(2) {
                let (s0, s1) = (w[0], w[1]);
                let v_mid = -lerp(q[m - 1], q[m], 0.5 * (s0 + s1)) / self.alpha;
                out.push(ControlSegment {
                    start: t0 + s0 * k,
                    end: if s1 == 1.0 { self.partition.nodes()[m] } else { t0 + s1 * k },
                    u_start: f.eval_local(m, s0),
                    u_end: f.eval_local(m, s1),
                    inactive: self.bounds.is_inactive(v_mid),
                });
            }
        }
        out
    }

    /// Lebesgue measure of `{t : a < u(t) < b}`.
    pub fn inactive_measure(&self) -> f64 {
        self.segments()
            .iter()
            .filter(|s| s.inactive)
            .map(|s| s.end - s.start)
            .sum()
    }

    /// `int |du/dt| dt`; only inactive pieces contribute.
    pub fn derivative_l1(&self) -> f64 {
        self.segments()
            .iter()
            .filter(|s| s.inactive)
            .map(|s| (s.u_end - s.u_start).abs())
            .sum()
    }

    pub fn sup_norm(&self) -> f64 {
        self.segments()
            .iter()
            .map(|s| s.u_start.abs().max(s.u_end.abs()))
            .fold(0.0, f64::max)
    }

    /// `(||u - r||_{L^1(I)}, ||u - r||_{L^2(I)})` for a constant reference `r`.
    pub fn error_norms(&self, reference: f64) -> (f64, f64) {
        let mut l1 = 0.0;
        for s in self.segments() {
            let (d0, d1) = (s.u_start - reference, s.u_end - reference);
            let len = s.end - s.start;
            if d0 * d1 < 0.0 {
                // sign change inside the piece
                let c = d0 / (d0 - d1);
                l1 += 0.5 * len * (c * d0.abs() + (1.0 - c) * d1.abs());
            } else {
                l1 += 0.5 * len * (d0.abs() + d1.abs());
            }
        }
        let l2 = integrate_quadratic(
            &self.partition,
            &[self.as_time_function()],
            |v| (v[0] - reference).powi(2),
        );
        (l1, l2.max(0.0).sqrt())
    }

    /// `int u phi_n dt`, `n = 0..=M`.
    pub fn hat_moments(&self) -> Vec<f64> {
        hat_moments(&self.partition, self.as_time_function())
    }

    /// CSV rows `t,u` at every time node and clamp breakpoint.
    pub fn write_samples(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "t,u")?;
        let segs = self.segments();
        if let Some(first) = segs.first() {
            writeln!(out, "{},{}", first.start, first.u_start)?;
        }
        for s in &segs {
            writeln!(out, "{},{}", s.end, s.u_end)?;
        }
        Ok(())
    }
}

/// State load `F_n = int (c0(t) + u(t)) phi_n dt * w` for the affine
/// control operator `u -> g0 + B u` with `g0 = c0(t) g1`. The control part
/// is integrated exactly, the drift part by Gauss quadrature.
pub fn control_load(
    u: &ImplicitControl,
    op: &LocatedControlOperator,
    drift_time: impl Fn(f64) -> f64,
    gauss_order: usize,
) -> Result<SeparableLoad> {
    let (drift, _) = basis_moments(drift_time, u.partition(), gauss_order)?;
    Ok(control_load_with_moments(u.as_time_function(), u.partition(), op, &drift))
}

pub(crate) fn control_load_with_moments(
    u: TimeFunction<'_>,
    partition: &TimePartition,
    op: &LocatedControlOperator,
    drift_moments: &[f64],
) -> SeparableLoad {
    let mut coefficients = hat_moments(partition, u);
    for (c, d) in coefficients.iter_mut().zip(drift_moments) {
        *c += d;
    }
    SeparableLoad {
        profile: op.weights().to_vec(),
        coefficients,
    }
}
