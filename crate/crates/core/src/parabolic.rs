//! Fully discrete Petrov-Galerkin solvers for the heat equation.
//!
//! The state is piecewise constant in time (one vector per interval `I_m`)
//! and is tested with the temporal hats `phi_0 .. phi_{M-1}`. The adjoint is
//! continuous and piecewise linear in time (one vector per node `t_m`), is
//! tested with the characteristic functions of `I_1 .. I_M`, and is closed
//! by `p_M = 0`. With this closure the adjoint recurrence is the exact
//! transpose of the state recurrence:
//!
//! ```text
//! (M + k_1/2 K) y_1     = M y0 + F_0
//! (M + k_{n+1}/2 K) y_{n+1} = (M - k_n/2 K) y_n + F_n        n = 1..M-1
//! (M + k_m/2 K) p_{m-1} = (M - k_m/2 K) p_m + H_m            m = M..1
//! ```

use std::io::Write;
use std::sync::Arc;

use crate::error::{check_len, Result};
use crate::mesh::{assemble, dot, NodalField, Role, ShiftedFactorCache, SpaceMesh, SparseOperator};
use crate::time_grid::TimePartition;

/// Source of dual (already mass-weighted) load vectors.
///
/// For the state equation `index = n` selects the hat `phi_n`,
/// `n = 0..M-1`. For the adjoint equation `index = m - 1` selects the
/// characteristic function of `I_m`, `m = 1..M`.
pub trait TimeLoad {
    fn load_into(&self, index: usize, out: &mut [f64]);
}

/// Load `coefficients[index] * profile`.
#[derive(Debug, Clone)]
pub struct SeparableLoad {
    pub profile: Vec<f64>,
    pub coefficients: Vec<f64>,
}

impl TimeLoad for SeparableLoad {
    fn load_into(&self, index: usize, out: &mut [f64]) {
        let c = self.coefficients[index];
        for (o, p) in out.iter_mut().zip(&self.profile) {
            *o = c * p;
        }
    }
}

/// One explicit vector per index.
#[derive(Debug, Clone)]
pub struct DenseLoad(pub Vec<Vec<f64>>);

impl TimeLoad for DenseLoad {
    fn load_into(&self, index: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.0[index]);
    }
}

/// Zero load.
#[derive(Debug, Clone, Copy)]
pub struct NoLoad;

impl TimeLoad for NoLoad {
    fn load_into(&self, _index: usize, out: &mut [f64]) {
        out.fill(0.0);
    }
}

impl<F: Fn(usize, &mut [f64])> TimeLoad for F {
    fn load_into(&self, index: usize, out: &mut [f64]) {
        self(index, out)
    }
}

/// `y_kh`: entry `m - 1` holds the value on `I_m`.
#[derive(Debug, Clone)]
pub struct StateTrajectory {
    states: Vec<NodalField>,
}

impl StateTrajectory {
    pub fn states(&self) -> &[NodalField] {
        &self.states
    }

    /// Value on `I_m`, `m = 1..=M`.
    pub fn on_interval(&self, m: usize) -> &NodalField {
        &self.states[m - 1]
    }

    /// Left limit at the final time.
    pub fn final_state(&self) -> &NodalField {
        self.states.last().expect("non-empty trajectory")
    }

    pub fn l2_norms(&self, mass: &SparseOperator) -> Vec<f64> {
        self.states
            .iter()
            .map(|y| mass.quadratic_form(y.values()).sqrt())
            .collect()
    }

    /// `||y||^2_{L^2(I, L^2)}`.
    pub fn norm_sq(&self, mass: &SparseOperator, partition: &TimePartition) -> f64 {
        self.states
            .iter()
            .enumerate()
            .map(|(j, y)| partition.step(j + 1) * mass.quadratic_form(y.values()))
            .sum()
    }

    /// `||y - other||^2_{L^2(I, L^2)}`.
    pub fn distance_sq(&self, other: &Self, mass: &SparseOperator, partition: &TimePartition) -> f64 {
        self.states
            .iter()
            .zip(&other.states)
            .enumerate()
            .map(|(j, (a, b))| {
                let d: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
                partition.step(j + 1) * mass.quadratic_form(&d)
            })
            .sum()
    }

    /// CSV rows `m,t,v_0,...` with `t` the midpoint of `I_m`.
    pub fn write_csv(&self, partition: &TimePartition, out: impl Write) -> Result<()> {
        let rows = self
            .states
            .iter()
            .enumerate()
            .map(|(j, y)| (j + 1, partition.midpoint(j + 1), y));
        write_rows(rows, out)
    }
}

/// `p_kh`: entry `m` holds the value at `t_m`, `m = 0..=M`.
#[derive(Debug, Clone)]
pub struct AdjointTrajectory {
    nodal: Vec<NodalField>,
}

impl AdjointTrajectory {
    pub fn nodal(&self) -> &[NodalField] {
        &self.nodal
    }

    pub fn at_node(&self, m: usize) -> &NodalField {
        &self.nodal[m]
    }

    pub fn from_nodal(nodal: Vec<NodalField>) -> Self {
        Self { nodal }
    }

    /// CSV rows `m,t,v_0,...`.
    pub fn write_csv(&self, partition: &TimePartition, out: impl Write) -> Result<()> {
        let rows = self
            .nodal
            .iter()
            .enumerate()
            .map(|(m, p)| (m, partition.nodes()[m], p));
        write_rows(rows, out)
    }
}

fn write_rows<'a>(
    rows: impl Iterator<Item = (usize, f64, &'a NodalField)>,
    mut out: impl Write,
) -> Result<()> {
    for (m, t, v) in rows {
        write!(out, "{m},{t}")?;
        for x in v.values() {
            write!(out, ",{x}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Space-time operator with factorizations of `M + k_m/2 K` for every
/// distinct step length, built once at construction.
#[derive(Debug)]
pub struct ParabolicOperator {
    mesh: Arc<SpaceMesh>,
    partition: Arc<TimePartition>,
    mass: SparseOperator,
    stiffness: SparseOperator,
    factors: ShiftedFactorCache,
    adjoint_fault: bool,
}

impl ParabolicOperator {
    pub fn new(mesh: Arc<SpaceMesh>, partition: Arc<TimePartition>) -> Result<Self> {
        let mass = assemble(&mesh, Role::Mass);
        let stiffness = assemble(&mesh, Role::Stiffness);
        let mut factors = ShiftedFactorCache::default();
        for m in 1..=partition.intervals() {
            factors.get_or_factor(&mesh, &mass, &stiffness, 0.5 * partition.step(m))?;
        }
        Ok(Self {
            mesh,
            partition,
            mass,
            stiffness,
            factors,
            adjoint_fault: false,
        })
    }

    /// Flips the sign of the propagated term in the adjoint recurrence. Only
    /// meant for checking that the adjointness test detects a broken scheme.
    #[doc(hidden)]
    pub fn with_injected_adjoint_fault(mut self) -> Self {
        self.adjoint_fault = true;
        self
    }

    pub fn mesh(&self) -> &Arc<SpaceMesh> {
        &self.mesh
    }

    pub fn partition(&self) -> &Arc<TimePartition> {
        &self.partition
    }

    pub fn mass(&self) -> &SparseOperator {
        &self.mass
    }

    pub fn stiffness(&self) -> &SparseOperator {
        &self.stiffness
    }

    pub fn distinct_factorizations(&self) -> usize {
        self.factors.len()
    }

    /// `out = (M - c K) x`.
    fn explicit_part(&self, c: f64, x: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        self.mass.apply_into(x, out);
        self.stiffness.apply_into(x, scratch);
        for (o, s) in out.iter_mut().zip(scratch.iter()) {
            *o -= c * s;
        }
    }

    pub fn solve_state(&self, load: &dyn TimeLoad, y0: &NodalField) -> Result<StateTrajectory> {
        let n = self.mesh.node_count();
        check_len(n, y0.len())?;
        let steps = self.partition.intervals();
        let mut rhs = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        let mut f = vec![0.0; n];
        let mut states: Vec<NodalField> = Vec::with_capacity(steps);
        for step in 0..steps {
            if step == 0 {
                self.mass.apply_into(y0.values(), &mut rhs);
            } else {
                let c = 0.5 * self.partition.step(step);
                self.explicit_part(c, states[step - 1].values(), &mut rhs, &mut scratch);
            }
            load.load_into(step, &mut f);
            for (r, v) in rhs.iter_mut().zip(&f) {
                *r += v;
            }
            let solver = self.solver(0.5 * self.partition.step(step + 1));
            let mut next = vec![0.0; n];
            solver.solve_into(&rhs, &mut next)?;
            states.push(NodalField::new(next));
        }
        Ok(StateTrajectory { states })
    }

    pub fn solve_adjoint(&self, load: &dyn TimeLoad) -> Result<AdjointTrajectory> {
        let n = self.mesh.node_count();
        let steps = self.partition.intervals();
        let mut nodal = vec![NodalField::zeros(n); steps + 1];
        let mut rhs = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        let mut h = vec![0.0; n];
        for m in (1..=steps).rev() {
            let c = 0.5 * self.partition.step(m);
            self.explicit_part(c, nodal[m].values(), &mut rhs, &mut scratch);
            if self.adjoint_fault {
                rhs.iter_mut().for_each(|r| *r = -*r);
            }
            load.load_into(m - 1, &mut h);
            for (r, v) in rhs.iter_mut().zip(&h) {
                *r += v;
            }
            self.solver(c).solve_into(&rhs, nodal[m - 1].values_mut())?;
        }
        Ok(AdjointTrajectory { nodal })
    }

    fn solver(&self, shift: f64) -> &crate::mesh::SpdSolver {
        self.factors
            .get(shift)
            .expect("factorization prepared for every step length")
    }

    /// Relative defect of the duality identity
    /// `sum_m H_m . y_m = (M y0 + F_0) . p_0 + sum_{n=1}^{M-1} F_n . p_n`.
    pub fn check_adjointness(
        &self,
        state_load: &dyn TimeLoad,
        y0: &NodalField,
        adjoint_load: &dyn TimeLoad,
    ) -> Result<f64> {
        let y = self.solve_state(state_load, y0)?;
        let p = self.solve_adjoint(adjoint_load)?;
        let n = self.mesh.node_count();
        let mut buf = vec![0.0; n];
        let mut lhs = 0.0;
        for (j, ym) in y.states().iter().enumerate() {
            adjoint_load.load_into(j, &mut buf);
            lhs += dot(&buf, ym.values());
        }
        let mut rhs = 0.0;
        let m0 = self.mass.apply(y0.values());
        for step in 0..self.partition.intervals() {
            state_load.load_into(step, &mut buf);
            if step == 0 {
                for (b, v) in buf.iter_mut().zip(&m0) {
                    *b += v;
                }
            }
            rhs += dot(&buf, p.at_node(step).values());
        }
        Ok((lhs - rhs).abs() / lhs.abs().max(1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grids(n: usize, m: usize) -> ParabolicOperator {
        let mesh = Arc::new(SpaceMesh::uniform(n).unwrap());
        let part = Arc::new(TimePartition::uniform(m, 0.5).unwrap());
        ParabolicOperator::new(mesh, part).unwrap()
    }

    fn g1(x: f64, y: f64) -> f64 {
        (PI * x).sin() * (PI * y).sin()
    }

    #[test]
    fn zero_data_gives_zero() {
        let op = grids(5, 8);
        let y = op.solve_state(&NoLoad, &NodalField::zeros(25)).unwrap();
        assert_eq!(y.states().len(), 8);
        assert!(y.states().iter().all(|v| v.values().iter().all(|&x| x == 0.0)));
        let p = op.solve_adjoint(&NoLoad).unwrap();
        assert_eq!(p.nodal().len(), 9);
        assert!(p.nodal().iter().all(|v| v.values().iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn terminal_closure_and_boundary() {
        let op = grids(5, 6);
        let load = |_: usize, out: &mut [f64]| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = (i as f64).sin();
            }
        };
        let p = op.solve_adjoint(&load).unwrap();
        assert!(p.at_node(6).values().iter().all(|&x| x == 0.0));
        let y = op.solve_state(&load, &NodalField::zeros(25)).unwrap();
        for (i, &b) in op.mesh().boundary_mask().iter().enumerate() {
            if b {
                assert!(y.states().iter().all(|v| v.values()[i] == 0.0));
                assert!(p.nodal().iter().all(|v| v.values()[i] == 0.0));
            }
        }
    }

    #[test]
    fn steady_eigenfunction() {
        let op = grids(17, 16);
        let g = op.mesh().interpolate_interior(g1);
        let w = op.mass().apply(g.values());
        let coeff: Vec<f64> = (0..16)
            .map(|n| {
                let k = op.partition().step(1);
                2.0 * PI * PI * if n == 0 { k / 2.0 } else { k }
            })
            .collect();
        let load = SeparableLoad { profile: w, coefficients: coeff };
        let y = op.solve_state(&load, &g).unwrap();
        for ym in y.states() {
            let d: Vec<f64> = ym.values().iter().zip(g.values()).map(|(a, b)| a - b).collect();
            assert!(op.mass().quadratic_form(&d).sqrt() < 5e-3);
        }
    }

    #[test]
    fn unconditional_stability() {
        let op = grids(9, 4);
        let y0 = op.mesh().interpolate_interior(|x, y| x * y * (1.0 - x) * (1.0 - y) * 16.0 + g1(3.0 * x, 2.0 * y));
        let y = op.solve_state(&NoLoad, &y0).unwrap();
        let mut prev = op.mass().quadratic_form(y0.values()).sqrt();
        for v in y.l2_norms(op.mass()) {
            assert!(v <= prev + 1e-12);
            prev = v;
        }
    }

    #[test]
    fn exact_duality() {
        let op = grids(3, 8);
        let n = 9;
        let f = DenseLoad((0..8).map(|j| (0..n).map(|i| ((i * 7 + j * 3) as f64).cos()).collect()).collect());
        let h = DenseLoad((0..8).map(|j| (0..n).map(|i| ((i * 5 + j * 11) as f64).sin()).collect()).collect());
        let y0 = NodalField::new((0..n).map(|i| (i as f64 * 0.3).sin()).collect());
        let r = op.check_adjointness(&f, &y0, &h).unwrap();
        assert!(r <= 1e-12, "residual {r}");
        let zero = op.check_adjointness(&NoLoad, &NodalField::zeros(n), &h).unwrap();
        assert_eq!(zero, 0.0);
        let zero = op.check_adjointness(&f, &y0, &NoLoad).unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn injected_fault_breaks_duality() {
        // on the 3x3 mesh with M = 8 the explicit part vanishes, so use 5x5
        let mesh = Arc::new(SpaceMesh::uniform(5).unwrap());
        let part = Arc::new(TimePartition::uniform(8, 0.5).unwrap());
        let op = ParabolicOperator::new(mesh, part).unwrap().with_injected_adjoint_fault();
        let ones = |_: usize, out: &mut [f64]| out.fill(1.0);
        let r = op.check_adjointness(&ones, &NodalField::zeros(25), &ones).unwrap();
        assert!(r > 1e-3, "residual {r}");
    }

    #[test]
    fn one_factorization_for_uniform_steps() {
        let op = grids(5, 32);
        assert_eq!(op.distinct_factorizations(), 1);
        let mesh = Arc::new(SpaceMesh::uniform(5).unwrap());
        let part = Arc::new(TimePartition::from_nodes(vec![0.0, 0.1, 0.3, 0.4]).unwrap());
        let op = ParabolicOperator::new(mesh, part).unwrap();
        assert!(op.distinct_factorizations() >= 2);
    }

    #[test]
    fn csv_dump_rows() {
        let op = grids(3, 4);
        let y = op.solve_state(&NoLoad, &NodalField::zeros(9)).unwrap();
        let mut buf = Vec::new();
        y.write_csv(op.partition(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(text.lines().next().unwrap().split(',').count(), 11);
        assert!(text.starts_with("1,0.0625,"));
    }
}
