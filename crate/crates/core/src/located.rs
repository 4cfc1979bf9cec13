//! Heat equation with a located control, wired as a [`ProblemBackend`].
//!
//! Drift, target and initial state are separable with the spatial profile
//! of the control, `g0 = c0(t) g1` and `y_d = c_d(t) g1`, so every load is a
//! time coefficient times `w = M g1`.

use std::sync::Arc;

use crate::control::{
    control_load_with_moments, hat_moments, integrate_quadratic, AdmissibleBox, ImplicitControl,
    LocatedControlOperator, TimeFunction,
};
use crate::error::Result;
use crate::manufactured::{profile, ManufacturedProblem};
use crate::mesh::{dot, NodalField, SpaceMesh};
use crate::parabolic::{AdjointTrajectory, ParabolicOperator, StateTrajectory};
use crate::solver::{ControlSpec, PathMetrics, ProblemBackend};
use crate::time_grid::{basis_moments, GaussRule, PiecewiseLinearScalar, TimePartition, DEFAULT_GAUSS_ORDER};

/// Grid sizes of the reference experiment.
pub const REFERENCE_NODES_PER_SIDE: usize = 33;
pub const REFERENCE_TIME_STEPS: usize = 2048;
pub const REDUCED_NODES_PER_SIDE: usize = 17;
pub const REDUCED_TIME_STEPS: usize = 512;

#[derive(Debug, Clone)]
struct ExactReference {
    control: f64,
    /// `int_{I_m} c_y dt` for the temporal factor `c_y` of the exact state.
    state_moments: Vec<f64>,
    /// `int_{I_m} c_y^2 dt`.
    state_sq_moments: Vec<f64>,
}

#[derive(Debug)]
pub struct LocatedHeatBackend {
    op: ParabolicOperator,
    control: LocatedControlOperator,
    bounds: AdmissibleBox,
    y0: NodalField,
    drift_moments: Vec<f64>,
    target_moments: Vec<f64>,
    profile_mass_norm_sq: f64,
    exact: Option<ExactReference>,
}

impl LocatedHeatBackend {
    /// Generic separable data; `drift` and `target` are the temporal factors.
    pub fn new(
        op: ParabolicOperator,
        profile: NodalField,
        y0: NodalField,
        bounds: AdmissibleBox,
        drift: impl Fn(f64) -> f64,
        target: impl Fn(f64) -> f64,
        gauss_order: usize,
    ) -> Result<Self> {
        let control = LocatedControlOperator::new(op.mass(), profile)?;
        let (drift_moments, _) = basis_moments(drift, op.partition(), gauss_order)?;
        let (_, target_moments) = basis_moments(target, op.partition(), gauss_order)?;
        let profile_mass_norm_sq = op.mass().quadratic_form(control.profile().values());
        crate::error::check_len(op.mesh().node_count(), y0.len())?;
        Ok(Self {
            op,
            control,
            bounds,
            y0,
            drift_moments,
            target_moments,
            profile_mass_norm_sq,
            exact: None,
        })
    }

    /// The manufactured bang-bang example on the given grids.
    pub fn manufactured(problem: &ManufacturedProblem, n_per_side: usize, time_steps: usize) -> Result<Self> {
        Self::manufactured_with_order(problem, n_per_side, time_steps, DEFAULT_GAUSS_ORDER)
    }

    pub fn manufactured_with_order(
        problem: &ManufacturedProblem,
        n_per_side: usize,
        time_steps: usize,
        gauss_order: usize,
    ) -> Result<Self> {
        let mesh = Arc::new(SpaceMesh::uniform(n_per_side)?);
        let partition = Arc::new(TimePartition::uniform(time_steps, problem.end_time)?);
        let op = ParabolicOperator::new(mesh, partition)?;
        Self::manufactured_on(problem, op, gauss_order)
    }

    /// The manufactured example on a prepared operator, whose partition must
    /// end at the problem's end time.
    pub fn manufactured_on(problem: &ManufacturedProblem, op: ParabolicOperator, gauss_order: usize) -> Result<Self> {
        let partition = op.partition().clone();
        if (partition.end_time() - problem.end_time).abs() > 1e-12 * problem.end_time {
            return Err(crate::error::Error::InvalidArgument(format!(
                "partition ends at {}, problem at {}",
                partition.end_time(),
                problem.end_time
            )));
        }
        let mesh = op.mesh().clone();
        let g1 = mesh.interpolate_interior(profile);
        let y0 = mesh.interpolate_interior(|x, y| problem.initial_state(x, y));
        let p = *problem;
        let mut backend = Self::new(
            op,
            g1,
            y0,
            problem.bounds(),
            move |t| p.drift_time(t),
            move |t| p.target_time(t),
            gauss_order,
        )?;
        let rule = GaussRule::new(5)?;
        let nodes = partition.nodes();
        let (state_moments, state_sq_moments) = (1..=partition.intervals())
            .map(|m| {
                (
                    rule.integrate(nodes[m - 1], nodes[m], |t| p.state_time(t)),
                    rule.integrate(nodes[m - 1], nodes[m], |t| p.state_time(t).powi(2)),
                )
            })
            .unzip();
        backend.exact = Some(ExactReference {
            control: problem.exact_control(),
            state_moments,
            state_sq_moments,
        });
        Ok(backend)
    }

    pub fn operator(&self) -> &ParabolicOperator {
        &self.op
    }

    pub fn control_operator(&self) -> &LocatedControlOperator {
        &self.control
    }

    pub fn partition(&self) -> &Arc<TimePartition> {
        self.op.partition()
    }

    pub fn initial_state(&self) -> &NodalField {
        &self.y0
    }

    pub fn time_function<'a>(&self, u: ControlSpec<'a>) -> TimeFunction<'a> {
        match u {
            ControlSpec::Constant(c) => TimeFunction::Constant(c),
            ControlSpec::Raw(v) => TimeFunction::Linear(v),
            ControlSpec::Clamped { alpha, q } => TimeFunction::Clamped {
                alpha,
                q,
                bounds: self.bounds,
            },
        }
    }

    pub fn implicit_control(&self, alpha: f64, q: &[f64]) -> Result<ImplicitControl> {
        ImplicitControl::new(
            alpha,
            PiecewiseLinearScalar::new(self.partition(), q.to_vec())?,
            self.bounds,
            self.partition().clone(),
        )
    }

    pub fn state(&self, u: ControlSpec<'_>) -> Result<StateTrajectory> {
        let load = control_load_with_moments(
            self.time_function(u),
            self.partition(),
            &self.control,
            &self.drift_moments,
        );
        self.op.solve_state(&load, &self.y0)
    }

    /// Adjoint for the tracking residual of `y`.
    pub fn adjoint(&self, y: &StateTrajectory) -> Result<AdjointTrajectory> {
        let w = self.control.weights();
        let partition = self.partition().clone();
        let mass = self.op.mass();
        let load = |j: usize, out: &mut [f64]| {
            mass.apply_into(y.states()[j].values(), out);
            let k = partition.step(j + 1);
            let c = self.target_moments[j];
            for (o, wi) in out.iter_mut().zip(w) {
                *o = k * *o - c * wi;
            }
        };
        self.op.solve_adjoint(&load)
    }

    /// `int u phi_n`, exposed for load inspection.
    pub fn control_moments(&self, u: ControlSpec<'_>) -> Vec<f64> {
        hat_moments(self.partition(), self.time_function(u))
    }

    /// `1/2 |y|^2 - (y, y_d)`, i.e. the tracking term without `|y_d|^2/2`,
    /// which is infinite for `kappa >= 2`.
    fn tracking(&self, y: &StateTrajectory) -> f64 {
        let w = self.control.weights();
        let partition = self.partition();
        y.states()
            .iter()
            .enumerate()
            .map(|(j, ym)| {
                0.5 * partition.step(j + 1) * self.op.mass().quadratic_form(ym.values())
                    - self.target_moments[j] * dot(ym.values(), w)
            })
            .sum()
    }

    fn state_error(&self, y: &StateTrajectory) -> Option<f64> {
        let exact = self.exact.as_ref()?;
        let w = self.control.weights();
        let partition = self.partition();
        let sq: f64 = y
            .states()
            .iter()
            .enumerate()
            .map(|(j, ym)| {
                partition.step(j + 1) * self.op.mass().quadratic_form(ym.values())
                    - 2.0 * exact.state_moments[j] * dot(ym.values(), w)
                    + exact.state_sq_moments[j] * self.profile_mass_norm_sq
            })
            .sum();
        Some(sq.max(0.0).sqrt())
    }
}

impl ProblemBackend for LocatedHeatBackend {
    fn admissible_box(&self) -> AdmissibleBox {
        self.bounds
    }

    fn adjoint_image(&self, u: ControlSpec<'_>) -> Result<Vec<f64>> {
        let y = self.state(u)?;
        let p = self.adjoint(&y)?;
        Ok(self.control.apply_b_star(self.partition(), &p)?.into_vec())
    }

    fn inner(&self, u: ControlSpec<'_>, v: ControlSpec<'_>) -> f64 {
        integrate_quadratic(
            self.partition(),
            &[self.time_function(u), self.time_function(v)],
            |x| x[0] * x[1],
        )
    }

    fn distance_sq(&self, u: ControlSpec<'_>, v: ControlSpec<'_>) -> f64 {
        integrate_quadratic(
            self.partition(),
            &[self.time_function(u), self.time_function(v)],
            |x| (x[0] - x[1]).powi(2),
        )
    }

    fn state_distance_sq(&self, u: ControlSpec<'_>, v: ControlSpec<'_>) -> Result<f64> {
        let yu = self.state(u)?;
        let yv = self.state(v)?;
        Ok(yu.distance_sq(&yv, self.op.mass(), self.partition()))
    }

    fn objective(&self, u: ControlSpec<'_>, alpha: f64) -> Result<f64> {
        let y = self.state(u)?;
        Ok(self.tracking(&y) + 0.5 * alpha * self.inner(u, u))
    }

    fn metrics(&self, alpha: f64, q: &[f64]) -> Result<PathMetrics> {
        let u = self.implicit_control(alpha, q)?;
        let spec = ControlSpec::Clamped { alpha, q };
        let y = self.state(spec)?;
        let (err_l1, err_l2) = match &self.exact {
            Some(e) => {
                let (l1, l2) = u.error_norms(e.control);
                (Some(l1), Some(l2))
            }
            None => (None, None),
        };
        Ok(PathMetrics {
            err_l1,
            err_l2,
            state_error: self.state_error(&y),
            inactive_measure: Some(u.inactive_measure()),
            derivative_l1: Some(u.derivative_l1()),
            objective: Some(self.tracking(&y) + 0.5 * alpha * self.inner(spec, spec)),
        })
    }
}
