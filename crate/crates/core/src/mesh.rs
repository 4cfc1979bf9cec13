//! P1 finite elements on a uniform triangulation of the unit square.
//!
//! The mesh splits each of the `(n-1)^2` grid squares along its rising
//! diagonal. Homogeneous Dirichlet conditions are imposed by eliminating
//! boundary rows and columns, so every solve works on the interior nodes
//! only and returns fields with an exact zero trace.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::DMatrixViewMut;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix, CsrMatrix};

use crate::error::{check_len, Error, Result};

/// Scalar field with one value per mesh node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField(Vec<f64>);

impl NodalField {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }
}

impl From<Vec<f64>> for NodalField {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

impl AsRef<[f64]> for NodalField {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone)]
pub struct SpaceMesh {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    n_per_side: usize,
    interior: Vec<usize>,
}

impl SpaceMesh {
    /// Uniform triangulation of the unit square with `n_per_side` nodes per
    /// coordinate direction.
    pub fn uniform(n_per_side: usize) -> Result<Self> {
        if n_per_side < 2 {
            return Err(Error::InvalidArgument(format!(
                "n_per_side must be at least 2, got {n_per_side}"
            )));
        }
        let n = n_per_side;
        let step = 1.0 / (n - 1) as f64;
        let mut nodes = Vec::with_capacity(n * n);
        let mut boundary = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                // integer-derived coordinates so boundary nodes are exactly 0 or 1
                let x = if i == n - 1 { 1.0 } else { i as f64 * step };
                let y = if j == n - 1 { 1.0 } else { j as f64 * step };
                nodes.push([x, y]);
                boundary.push(i == 0 || j == 0 || i == n - 1 || j == n - 1);
            }
        }
        let mut triangles = Vec::with_capacity(2 * (n - 1) * (n - 1));
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                let sw = j * n + i;
                let se = sw + 1;
                let nw = sw + n;
                let ne = nw + 1;
                triangles.push([sw, se, ne]);
                triangles.push([sw, ne, nw]);
            }
        }
        let interior = (0..n * n).filter(|&k| !boundary[k]).collect();
        Ok(Self {
            nodes,
            triangles,
            boundary,
            n_per_side,
            interior,
        })
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    pub fn n_per_side(&self) -> usize {
        self.n_per_side
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Largest triangle diameter.
    pub fn mesh_size(&self) -> f64 {
        std::f64::consts::SQRT_2 / (self.n_per_side - 1) as f64
    }

    /// Twice the signed area of triangle `t`.
    pub fn signed_area2(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1])
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> NodalField {
        NodalField(self.nodes.iter().map(|p| f(p[0], p[1])).collect())
    }

    /// Nodal interpolant of `f` with boundary values forced to zero, i.e. a
    /// member of the discrete space with homogeneous Dirichlet trace.
    pub fn interpolate_interior(&self, f: impl Fn(f64, f64) -> f64) -> NodalField {
        NodalField(
            self.nodes
                .iter()
                .zip(&self.boundary)
                .map(|(p, &on_boundary)| if on_boundary { 0.0 } else { f(p[0], p[1]) })
                .collect(),
        )
    }

    /// `L^2` distance between the P1 field and a smooth function, by a
    /// degree-4 quadrature on every triangle.
    pub fn l2_error(&self, field: &NodalField, f: impl Fn(f64, f64) -> f64) -> f64 {
        const RULE: [(f64, f64, f64, f64); 6] = [
            (0.445948490915965, 0.445948490915965, 0.108103018168070, 0.223381589678011),
            (0.445948490915965, 0.108103018168070, 0.445948490915965, 0.223381589678011),
            (0.108103018168070, 0.445948490915965, 0.445948490915965, 0.223381589678011),
            (0.091576213509771, 0.091576213509771, 0.816847572980459, 0.109951743655322),
            (0.091576213509771, 0.816847572980459, 0.091576213509771, 0.109951743655322),
            (0.816847572980459, 0.091576213509771, 0.091576213509771, 0.109951743655322),
        ];
        let v = field.values();
        let mut sum = 0.0;
        for (t, tri) in self.triangles.iter().enumerate() {
            let area = 0.5 * self.signed_area2(t);
            let p = tri.map(|k| self.nodes[k]);
            for &(l0, l1, l2, w) in &RULE {
                let x = l0 * p[0][0] + l1 * p[1][0] + l2 * p[2][0];
                let y = l0 * p[0][1] + l1 * p[1][1] + l2 * p[2][1];
                let uh = l0 * v[tri[0]] + l1 * v[tri[1]] + l2 * v[tri[2]];
                let d = uh - f(x, y);
                sum += w * area * d * d;
            }
        }
        sum.sqrt()
    }

    /// Plain-text listing: `node <i> <x> <y>` and `tri <i> <a> <b> <c>` records.
    pub fn dump(&self, mut out: impl Write) -> Result<()> {
        for (i, p) in self.nodes.iter().enumerate() {
            writeln!(out, "node {i} {} {}", p[0], p[1])?;
        }
        for (i, t) in self.triangles.iter().enumerate() {
            writeln!(out, "tri {i} {} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Mass,
    Stiffness,
}

/// Assembled symmetric sparse matrix on all mesh nodes.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    role: Role,
    matrix: CsrMatrix<f64>,
}

impl SparseOperator {
    pub fn role(&self) -> Role {
        self.role
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn csr(&self) -> &CsrMatrix<f64> {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix
            .get_entry(i, j)
            .map(|e| e.into_value())
            .unwrap_or(0.0)
    }

    /// Stored entries as `(row, col, value)`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.matrix.triplet_iter().map(|(i, j, &v)| (i, j, v))
    }

    /// `out = A x`.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let (offsets, cols, vals) = self.matrix.csr_data();
        for (row, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in offsets[row]..offsets[row + 1] {
                acc += vals[k] * x[cols[k]];
            }
            *o = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.apply_into(x, &mut out);
        out
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.bilinear_form(x, x)
    }

    /// `x^T A y`.
    pub fn bilinear_form(&self, x: &[f64], y: &[f64]) -> f64 {
        let (offsets, cols, vals) = self.matrix.csr_data();
        let mut sum = 0.0;
        for (row, xr) in x.iter().enumerate() {
            let mut acc = 0.0;
            for k in offsets[row]..offsets[row + 1] {
                acc += vals[k] * y[cols[k]];
            }
            sum += xr * acc;
        }
        sum
    }

    /// Row sums (the lumped diagonal for a mass matrix).
    pub fn row_sums(&self) -> Vec<f64> {
        self.matrix
            .row_iter()
            .map(|row| row.values().iter().sum())
            .collect()
    }
}

/// Exact P1 element matrices summed over all triangles.
pub fn assemble(mesh: &SpaceMesh, role: Role) -> SparseOperator {
    let n = mesh.node_count();
    let mut coo = CooMatrix::new(n, n);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area2 = mesh.signed_area2(t);
        let area = 0.5 * area2;
        let p = tri.map(|k| mesh.nodes()[k]);
        // gradients of the barycentric coordinates, scaled by 2*area
        let grad = [0, 1, 2].map(|i| {
            let j = (i + 1) % 3;
            let k = (i + 2) % 3;
            [p[j][1] - p[k][1], p[k][0] - p[j][0]]
        });
        for a in 0..3 {
            for b in a..3 {
                let value = match role {
                    Role::Mass => area / 12.0 * if a == b { 2.0 } else { 1.0 },
                    Role::Stiffness => {
                        (grad[a][0] * grad[b][0] + grad[a][1] * grad[b][1]) / (2.0 * area2)
                    }
                };
                coo.push(tri[a], tri[b], value);
                if a != b {
                    coo.push(tri[b], tri[a], value);
                }
            }
        }
    }
    SparseOperator {
        role,
        matrix: CsrMatrix::from(&coo),
    }
}

/// Cholesky factorization of `sum_i c_i A_i` restricted to the interior nodes.
pub struct SpdSolver {
    interior: Vec<usize>,
    dim: usize,
    factor: CscCholesky<f64>,
    reduced: CscMatrix<f64>,
}

impl std::fmt::Debug for SpdSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpdSolver")
            .field("dim", &self.dim)
            .field("unknowns", &self.interior.len())
            .finish()
    }
}

impl SpdSolver {
    pub fn factor(mesh: &SpaceMesh, terms: &[(f64, &SparseOperator)]) -> Result<Self> {
        let dim = mesh.node_count();
        let interior = mesh.interior_nodes().to_vec();
        let mut local = vec![usize::MAX; dim];
        for (k, &node) in interior.iter().enumerate() {
            local[node] = k;
        }
        let n = interior.len();
        let mut coo = CooMatrix::new(n, n);
        for &(c, op) in terms {
            check_len(dim, op.dim())?;
            if !(c >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "operator coefficients must be non-negative, got {c}"
                )));
            }
            if c == 0.0 {
                continue;
            }
            for (i, j, v) in op.entries() {
                let (li, lj) = (local[i], local[j]);
                if li != usize::MAX && lj != usize::MAX {
                    coo.push(li, lj, c * v);
                }
            }
        }
        let reduced = CscMatrix::from(&coo);
        let factor = CscCholesky::factor(&reduced)
            .map_err(|e| Error::LinearSolve(format!("Cholesky factorization failed: {e:?}")))?;
        Ok(Self {
            interior,
            dim,
            factor,
            reduced,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Solves the reduced system for a full-length right-hand side; boundary
    /// entries of `rhs` are ignored and boundary entries of the result are 0.
    pub fn solve(&self, rhs: &[f64]) -> Result<NodalField> {
        let mut out = vec![0.0; self.dim];
        self.solve_into(rhs, &mut out)?;
        Ok(NodalField(out))
    }

    pub fn solve_into(&self, rhs: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.dim, rhs.len())?;
        check_len(self.dim, out.len())?;
        let n = self.interior.len();
        if n == 0 {
            out.fill(0.0);
            return Ok(());
        }
        let mut local: Vec<f64> = self.interior.iter().map(|&k| rhs[k]).collect();
        self.factor
            .solve_mut(DMatrixViewMut::from_slice(&mut local, n, 1));
        if local.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolve("non-finite solution".into()));
        }
        out.fill(0.0);
        for (&node, v) in self.interior.iter().zip(local) {
            out[node] = v;
        }
        Ok(())
    }

    /// `||A x - b|| / max(||b||, tiny)` on the interior rows.
    pub fn relative_residual(&self, x: &[f64], rhs: &[f64]) -> f64 {
        let xl: Vec<f64> = self.interior.iter().map(|&k| x[k]).collect();
        let bl: Vec<f64> = self.interior.iter().map(|&k| rhs[k]).collect();
        let mut r = bl.clone();
        for (i, j, &v) in self.reduced.triplet_iter() {
            r[i] -= v * xl[j];
        }
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bn = bl.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bn == 0.0 {
            rn
        } else {
            rn / bn
        }
    }
}

/// One-shot SPD solve with `A` restricted to the interior nodes.
pub fn solve_spd(mesh: &SpaceMesh, matrix: &SparseOperator, rhs: &NodalField) -> Result<NodalField> {
    SpdSolver::factor(mesh, &[(1.0, matrix)])?.solve(rhs.values())
}

/// Factorization cache for shifted systems `M + c K`, keyed by `c`.
#[derive(Debug, Default)]
pub struct ShiftedFactorCache {
    solvers: HashMap<u64, SpdSolver>,
}

impl ShiftedFactorCache {
    pub fn get_or_factor(
        &mut self,
        mesh: &SpaceMesh,
        mass: &SparseOperator,
        stiffness: &SparseOperator,
        shift: f64,
    ) -> Result<&SpdSolver> {
        let key = shift.to_bits();
        if !self.solvers.contains_key(&key) {
            let solver = SpdSolver::factor(mesh, &[(1.0, mass), (shift, stiffness)])?;
            self.solvers.insert(key, solver);
        }
        Ok(&self.solvers[&key])
    }

    pub fn get(&self, shift: f64) -> Option<&SpdSolver> {
        self.solvers.get(&shift.to_bits())
    }

    pub fn len(&self) -> usize {
        self.solvers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solvers.is_empty()
    }
}
