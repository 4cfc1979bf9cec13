//! Refinement studies for the parabolic solver on smooth solutions.
//!
//! Errors are discrete space-time `L^2` norms with the state value on `I_m`
//! compared against the reference at the midpoint `t*_m`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::located::LocatedHeatBackend;
use crate::manufactured::{profile, ManufacturedProblem};
use crate::mesh::{NodalField, SpaceMesh};
use crate::parabolic::{NoLoad, ParabolicOperator};
use crate::solver::ControlSpec;
use crate::time_grid::{basis_moments, TimePartition, DEFAULT_GAUSS_ORDER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Refinement {
    Time,
    Space,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub refinement: Refinement,
    /// Time steps for a temporal study, nodes per side for a spatial one.
    pub parameters: Vec<usize>,
    pub errors: Vec<f64>,
    /// `log2(e_{i-1} / e_i)` for `i >= 1`.
    pub orders: Vec<f64>,
}

impl ConvergenceStudy {
    fn new(refinement: Refinement, parameters: Vec<usize>, errors: Vec<f64>) -> Self {
        let orders = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        Self {
            refinement,
            parameters,
            errors,
            orders,
        }
    }

    pub fn min_order(&self) -> f64 {
        self.orders.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn check_doubling(values: &[usize], what: &str, step: impl Fn(usize) -> usize) -> Result<()> {
    if values.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least two {what}")));
    }
    for w in values.windows(2) {
        if step(w[1]) != 2 * step(w[0]) {
            return Err(Error::InvalidArgument(format!("{what} must double: {} then {}", w[0], w[1])));
        }
    }
    Ok(())
}

/// Time refinement against the exact semi-discrete solution
/// `y_h(t) = cos(8 pi t) g1_h`, `t in [0, 1/2]`, so that no spatial error
/// enters.
pub fn temporal_study(n_per_side: usize, steps: &[usize]) -> Result<ConvergenceStudy> {
    check_doubling(steps, "time step counts", |m| m)?;
    let mesh = Arc::new(SpaceMesh::uniform(n_per_side)?);
    let g = mesh.interpolate_interior(profile);
    let omega = 8.0 * std::f64::consts::PI;
    let c = |t: f64| (omega * t).cos();
    let dc = |t: f64| -omega * (omega * t).sin();
    let mut errors = Vec::with_capacity(steps.len());
    for &m in steps {
        let partition = Arc::new(TimePartition::uniform(m, 0.5)?);
        let op = ParabolicOperator::new(mesh.clone(), partition.clone())?;
        let mg = op.mass().apply(g.values());
        let kg = op.stiffness().apply(g.values());
        let (dmom, _) = basis_moments(dc, &partition, DEFAULT_GAUSS_ORDER)?;
        let (cmom, _) = basis_moments(c, &partition, DEFAULT_GAUSS_ORDER)?;
        let load = |n: usize, out: &mut [f64]| {
            for ((o, a), b) in out.iter_mut().zip(&mg).zip(&kg) {
                *o = dmom[n] * a + cmom[n] * b;
            }
        };
        let y0 = NodalField::new(g.values().iter().map(|v| v * c(0.0)).collect());
        let y = op.solve_state(&load, &y0)?;
        let mut sq = 0.0;
        for (j, ym) in y.states().iter().enumerate() {
            let cm = c(partition.midpoint(j + 1));
            let d: Vec<f64> = ym.values().iter().zip(g.values()).map(|(a, b)| a - cm * b).collect();
            sq += partition.step(j + 1) * op.mass().quadratic_form(&d);
        }
        errors.push(sq.sqrt());
    }
    Ok(ConvergenceStudy::new(Refinement::Time, steps.to_vec(), errors))
}

/// Space refinement against the manufactured state for the exact control,
/// at a fixed fine time grid.
pub fn spatial_study(nodes_per_side: &[usize], time_steps: usize) -> Result<ConvergenceStudy> {
    check_doubling(nodes_per_side, "mesh sizes", |n| n.saturating_sub(1))?;
    let problem = ManufacturedProblem::located_heat(1.0)?;
    let mut errors = Vec::with_capacity(nodes_per_side.len());
    for &n in nodes_per_side {
        let backend = LocatedHeatBackend::manufactured(&problem, n, time_steps)?;
        let y = backend.state(ControlSpec::Constant(problem.exact_control()))?;
        let partition = backend.partition();
        let mesh = backend.operator().mesh();
        let mut sq = 0.0;
        for (j, ym) in y.states().iter().enumerate() {
            let t = partition.midpoint(j + 1);
            let e = mesh.l2_error(ym, |a, b| problem.exact_state(t, a, b));
            sq += partition.step(j + 1) * e * e;
        }
        errors.push(sq.sqrt());
    }
    Ok(ConvergenceStudy::new(Refinement::Space, nodes_per_side.to_vec(), errors))
}

/// Largest state value for zero data; exactly zero.
pub fn zero_data_error(n_per_side: usize, time_steps: usize) -> Result<f64> {
    let mesh = Arc::new(SpaceMesh::uniform(n_per_side)?);
    let partition = Arc::new(TimePartition::uniform(time_steps, 0.5)?);
    let op = ParabolicOperator::new(mesh.clone(), partition)?;
    let y = op.solve_state(&NoLoad, &NodalField::zeros(mesh.node_count()))?;
    Ok(y
        .states()
        .iter()
        .flat_map(|s| s.values().iter())
        .fold(0.0, |m, v| m.max(v.abs())))
}
