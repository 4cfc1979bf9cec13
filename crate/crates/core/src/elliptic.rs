//! Distributed Poisson control `min 1/2 |y - z|^2 + alpha/2 |u|^2` with
//! `-Delta y = u`, `B = id`, used to exercise the solver on a second backend.
//!
//! Controls are nodal and clamped node by node. The control inner product
//! and the control load both use the lumped (vertex-rule) mass matrix `D`,
//! which keeps the nodal clamp an exact minimizer of the discrete problem:
//! `K y = D u`, `K p = M (y - z)`, `q = p`.

use std::sync::Arc;

use crate::control::AdmissibleBox;
use crate::error::{check_len, Result};
use crate::mesh::{assemble, NodalField, Role, SpaceMesh, SparseOperator, SpdSolver};
use crate::solver::{solve_fixed_point, ControlSpec, FixedPointConfig, PathMetrics, ProblemBackend};

#[derive(Debug)]
pub struct EllipticProblem {
    mesh: Arc<SpaceMesh>,
    mass: SparseOperator,
    stiffness: SparseOperator,
    lumped: Vec<f64>,
    solver: SpdSolver,
    target: NodalField,
    bounds: AdmissibleBox,
}

impl EllipticProblem {
    pub fn new(mesh: Arc<SpaceMesh>, target: NodalField, bounds: AdmissibleBox) -> Result<Self> {
        check_len(mesh.node_count(), target.len())?;
        let mass = assemble(&mesh, Role::Mass);
        let stiffness = assemble(&mesh, Role::Stiffness);
        let lumped = mass.row_sums();
        let solver = SpdSolver::factor(&mesh, &[(1.0, &stiffness)])?;
        Ok(Self {
            mesh,
            mass,
            stiffness,
            lumped,
            solver,
            target,
            bounds,
        })
    }

    pub fn mesh(&self) -> &Arc<SpaceMesh> {
        &self.mesh
    }

    pub fn mass(&self) -> &SparseOperator {
        &self.mass
    }

    pub fn stiffness(&self) -> &SparseOperator {
        &self.stiffness
    }

    pub fn target(&self) -> &NodalField {
        &self.target
    }

    /// Nodal values of a control.
    pub fn nodal_control(&self, u: ControlSpec<'_>) -> Vec<f64> {
        match u {
            ControlSpec::Constant(c) => vec![c; self.mesh.node_count()],
            ControlSpec::Raw(v) => v.to_vec(),
            ControlSpec::Clamped { alpha, q } => {
                q.iter().map(|&qi| self.bounds.project(-qi / alpha)).collect()
            }
        }
    }

    /// `y = T u`.
    pub fn state(&self, u: &[f64]) -> Result<NodalField> {
        check_len(self.mesh.node_count(), u.len())?;
        let rhs: Vec<f64> = u.iter().zip(&self.lumped).map(|(a, d)| a * d).collect();
        self.solver.solve(&rhs)
    }

    /// Pointwise values of `p = T*(T u - z)`.
    pub fn elliptic_q(&self, u: &[f64]) -> Result<NodalField> {
        let y = self.state(u)?;
        let residual: Vec<f64> = y
            .values()
            .iter()
            .zip(self.target.values())
            .map(|(a, b)| a - b)
            .collect();
        self.solver.solve(&self.mass.apply(&residual))
    }

    /// Solves for `alpha` and returns the nodal control.
    pub fn elliptic_fixed_point(&self, alpha: f64, cfg: &FixedPointConfig) -> Result<Vec<f64>> {
        let out = solve_fixed_point(self, alpha, cfg)?;
        Ok(self.nodal_control(out.control()))
    }

    fn lumped_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter()
            .zip(v)
            .zip(&self.lumped)
            .map(|((a, b), d)| a * b * d)
            .sum()
    }

    /// `|T u - z|_{L^2}`.
    pub fn residual_norm(&self, u: &[f64]) -> Result<f64> {
        let y = self.state(u)?;
        let d: Vec<f64> = y
            .values()
            .iter()
            .zip(self.target.values())
            .map(|(a, b)| a - b)
            .collect();
        Ok(self.mass.quadratic_form(&d).sqrt())
    }
}

impl ProblemBackend for EllipticProblem {
    fn admissible_box(&self) -> AdmissibleBox {
        self.bounds
    }

    fn adjoint_image(&self, u: ControlSpec<'_>) -> Result<Vec<f64>> {
        Ok(self.elliptic_q(&self.nodal_control(u))?.into_vec())
    }

    fn inner(&self, u: ControlSpec<'_>, v: ControlSpec<'_>) -> f64 {
        self.lumped_inner(&self.nodal_control(u), &self.nodal_control(v))
    }

    fn distance_sq(&self, u: ControlSpec<'_>, v: ControlSpec<'_>) -> f64 {
        let d: Vec<f64> = self
            .nodal_control(u)
            .iter()
            .zip(self.nodal_control(v))
            .map(|(a, b)| a - b)
            .collect();
        self.lumped_inner(&d, &d)
    }

    fn state_distance_sq(&self, u: ControlSpec<'_>, v: ControlSpec<'_>) -> Result<f64> {
        let yu = self.state(&self.nodal_control(u))?;
        let yv = self.state(&self.nodal_control(v))?;
        let d: Vec<f64> = yu.values().iter().zip(yv.values()).map(|(a, b)| a - b).collect();
        Ok(self.mass.quadratic_form(&d))
    }

    fn objective(&self, u: ControlSpec<'_>, alpha: f64) -> Result<f64> {
        let nodal = self.nodal_control(u);
        let r = self.residual_norm(&nodal)?;
        Ok(0.5 * r * r + 0.5 * alpha * self.lumped_inner(&nodal, &nodal))
    }

    fn metrics(&self, alpha: f64, q: &[f64]) -> Result<PathMetrics> {
        let spec = ControlSpec::Clamped { alpha, q };
        let inactive = q
            .iter()
            .zip(&self.lumped)
            .filter(|(&qi, _)| self.bounds.is_inactive(-qi / alpha))
            .map(|(_, d)| d)
            .sum();
        Ok(PathMetrics {
            inactive_measure: Some(inactive),
            objective: Some(self.objective(spec, alpha)?),
            state_error: Some(self.residual_norm(&self.nodal_control(spec))?),
            ..PathMetrics::default()
        })
    }
}

/// Target `z = T u0` for `u0 = 0.3 g1(x) - 0.05 x1`, which exceeds the upper
/// bound near the centre. Returns the problem and `u0`.
pub fn poisson_example(n_per_side: usize) -> Result<(EllipticProblem, NodalField)> {
    let mesh = Arc::new(SpaceMesh::uniform(n_per_side)?);
    let u0 = mesh.interpolate(|x, y| 0.3 * crate::manufactured::profile(x, y) - 0.05 * x);
    let bounds = AdmissibleBox::new(-0.2, 0.2)?;
    let probe = EllipticProblem::new(mesh.clone(), NodalField::zeros(mesh.node_count()), bounds)?;
    let z = probe.state(u0.values())?;
    Ok((EllipticProblem::new(mesh, z, bounds)?, u0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manufactured::{profile, PROFILE_EIGENVALUE};

    fn problem(n: usize, target: impl Fn(&SpaceMesh) -> NodalField) -> EllipticProblem {
        let mesh = Arc::new(SpaceMesh::uniform(n).unwrap());
        let z = target(&mesh);
        EllipticProblem::new(mesh, z, AdmissibleBox::new(-0.2, 0.2).unwrap()).unwrap()
    }

    #[test]
    fn zero_data() {
        let p = problem(7, |m| NodalField::zeros(m.node_count()));
        let q = p.elliptic_q(&vec![0.0; 49]).unwrap();
        assert!(q.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn consistent_target_has_zero_adjoint() {
        let mesh = Arc::new(SpaceMesh::uniform(9).unwrap());
        let u0 = mesh.interpolate(|x, y| 0.1 * profile(x, y));
        let probe = EllipticProblem::new(mesh.clone(), NodalField::zeros(81), AdmissibleBox::new(-0.2, 0.2).unwrap()).unwrap();
        let z = probe.state(u0.values()).unwrap();
        let p = EllipticProblem::new(mesh, z, AdmissibleBox::new(-0.2, 0.2).unwrap()).unwrap();
        let q = p.elliptic_q(u0.values()).unwrap();
        assert!(q.values().iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn eigenfunction_state() {
        let mut prev = f64::INFINITY;
        for n in [9, 17, 33] {
            let p = problem(n, |m| NodalField::zeros(m.node_count()));
            let g = p.mesh().interpolate_interior(profile);
            let u: Vec<f64> = g.values().iter().map(|v| v * PROFILE_EIGENVALUE).collect();
            let y = p.state(&u).unwrap();
            let d: Vec<f64> = y.values().iter().zip(g.values()).map(|(a, b)| a - b).collect();
            let err = p.mass().quadratic_form(&d).sqrt();
            assert!(err < prev / 3.5, "n {n}: {err}");
            prev = err;
        }
    }

    fn consistent(n: usize) -> (EllipticProblem, Vec<f64>) {
        let (p, u0) = poisson_example(n).unwrap();
        (p, u0.into_vec())
    }

    #[test]
    fn path_properties() {
        let (p, _) = consistent(9);
        let cfg = crate::solver::PathConfig {
            fixed_point: FixedPointConfig {
                damping: 0.5,
                tolerance: 1e-10,
                ..FixedPointConfig::default()
            },
            warm_start: false,
        };
        let levels: Vec<i32> = (1..=10).collect();
        let path = crate::solver::run_reg_path(&p, &levels, &cfg).unwrap();
        assert!(path.failures.is_empty(), "{:?}", path.failures);
        let res: Vec<f64> = path.records.iter().map(|r| r.metrics.state_error.unwrap()).collect();
        for w in res.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{res:?}");
        }
        for w in path.records.windows(2) {
            let s = crate::solver::check_monotonicity_inequality(&p, &w[0], &w[1]).unwrap();
            assert!(s >= -1e-6, "slack {s}");
        }
    }

    #[test]
    fn plain_iteration_needs_damping_for_small_alpha() {
        let (p, _) = consistent(9);
        let cfg = FixedPointConfig {
            max_iterations: 200,
            ..FixedPointConfig::default()
        };
        let err = solve_fixed_point(&p, 2f64.powi(-10), &cfg).unwrap_err();
        assert!(matches!(err, crate::error::Error::NotConverged { .. }), "{err}");
    }

    #[test]
    fn gradient_check() {
        let (p, u0) = consistent(9);
        let n = u0.len();
        let u: Vec<f64> = (0..n).map(|i| 0.1 * ((i * 7) as f64).sin()).collect();
        let du: Vec<f64> = (0..n).map(|i| ((i * 3) as f64).cos()).collect();
        let h = 1e-4;
        let shift = |s: f64| -> Vec<f64> { u.iter().zip(&du).map(|(a, d)| a + s * d).collect() };
        let j = |v: &[f64]| 0.5 * p.residual_norm(v).unwrap().powi(2);
        let fd = (j(&shift(h)) - j(&shift(-h))) / (2.0 * h);
        let q = p.elliptic_q(&u).unwrap();
        let exact = p.inner(ControlSpec::Raw(q.values()), ControlSpec::Raw(&du));
        assert!(((fd - exact) / exact).abs() < 1e-6, "fd {fd} adjoint {exact}");
    }

    #[test]
    fn huge_alpha() {
        let p = problem(9, |m| m.interpolate_interior(|x, y| profile(x, y)));
        let u = p.elliptic_fixed_point(1e9, &FixedPointConfig::default()).unwrap();
        assert!(u.iter().all(|v| v.abs() < 1e-6));
    }
}
