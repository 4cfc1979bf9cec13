//! Time partitions, nodal piecewise-linear scalars and Gauss quadrature
//! against the temporal basis functions.

use crate::error::{check_len, Error, Result};

/// Gauss points per interval used for data integrals unless stated otherwise.
pub const DEFAULT_GAUSS_ORDER: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct TimePartition {
    nodes: Vec<f64>,
}

impl TimePartition {
    pub fn uniform(intervals: usize, end_time: f64) -> Result<Self> {
        if intervals < 1 {
            return Err(Error::InvalidArgument("need at least one time interval".into()));
        }
        if !(end_time > 0.0 && end_time.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "end time must be positive, got {end_time}"
            )));
        }
        let mut nodes: Vec<f64> = (0..=intervals)
            .map(|m| end_time * m as f64 / intervals as f64)
            .collect();
        nodes[intervals] = end_time;
        Self::from_nodes(nodes)
    }

    /// Arbitrary partition `0 = t_0 < t_1 < ... < t_M`.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidArgument("need at least two time nodes".into()));
        }
        if nodes[0] != 0.0 {
            return Err(Error::InvalidArgument("first time node must be 0".into()));
        }
        for w in nodes.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidArgument(
                    "time nodes must be strictly increasing".into(),
                ));
            }
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of intervals `M`.
    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn end_time(&self) -> f64 {
        self.nodes[self.intervals()]
    }

    /// Length `k_m` of interval `I_m = [t_{m-1}, t_m)`, `m = 1..=M`.
    pub fn step(&self, m: usize) -> f64 {
        self.nodes[m] - self.nodes[m - 1]
    }

    pub fn max_step(&self) -> f64 {
        (1..=self.intervals())
            .map(|m| self.step(m))
            .fold(0.0, f64::max)
    }

    /// Dual node `t*_m`, the midpoint of `I_m`.
    pub fn midpoint(&self, m: usize) -> f64 {
        (self.nodes[m - 1] + self.nodes[m]) / 2.0
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (1..=self.intervals()).map(|m| self.midpoint(m)).collect()
    }

    /// Interval index `m` with `t` in `[t_{m-1}, t_m]`, clamped to `1..=M`.
    pub fn locate(&self, t: f64) -> usize {
        let idx = self.nodes.partition_point(|&s| s <= t);
        idx.clamp(1, self.intervals())
    }
}

/// A continuous function of time, linear on each interval, stored by its
/// nodal values.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearScalar {
    values: Vec<f64>,
}

impl PiecewiseLinearScalar {
    pub fn new(partition: &TimePartition, values: Vec<f64>) -> Result<Self> {
        check_len(partition.nodes().len(), values.len())?;
        Ok(Self { values })
    }

    pub fn from_fn(partition: &TimePartition, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: partition.nodes().iter().map(|&t| f(t)).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn eval(&self, partition: &TimePartition, t: f64) -> f64 {
        let m = partition.locate(t);
        let (t0, t1) = (partition.nodes()[m - 1], partition.nodes()[m]);
        if t == t1 {
            return self.values[m];
        }
        if t == t0 {
            return self.values[m - 1];
        }
        let s = (t - t0) / (t1 - t0);
        self.values[m - 1] + s * (self.values[m] - self.values[m - 1])
    }

    /// `max_m |values_m - other_m|`, the sup norm of the difference.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument("Gauss order must be positive".into()));
        }
        let n = order;
        let mut points = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Newton iteration on P_n from the Chebyshev-like initial guess
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            points[i] = -x;
            points[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            points[n / 2] = 0.0;
        }
        Ok(Self { points, weights })
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    /// `int_a^b f`.
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

/// Temporal basis functions: the hat function of node `m` or the
/// characteristic function of interval `I_m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeBasis {
    Hat(usize),
    Char(usize),
}

/// `int f(t) phi(t) dt` over the support of `phi`, by per-interval Gauss
/// quadrature with `order` points.
pub fn quad_against_basis(
    f: impl Fn(f64) -> f64,
    partition: &TimePartition,
    basis: TimeBasis,
    order: usize,
) -> Result<f64> {
    let rule = GaussRule::new(order)?;
    Ok(quad_with_rule(&f, partition, basis, &rule)?)
}

pub(crate) fn quad_with_rule(
    f: &impl Fn(f64) -> f64,
    partition: &TimePartition,
    basis: TimeBasis,
    rule: &GaussRule,
) -> Result<f64> {
    let last = partition.intervals();
    let t = partition.nodes();
    match basis {
        TimeBasis::Char(m) => {
            if m < 1 || m > last {
                return Err(Error::InvalidArgument(format!(
                    "interval index {m} outside 1..={last}"
                )));
            }
            Ok(rule.integrate(t[m - 1], t[m], f))
        }
        TimeBasis::Hat(m) => {
            if m > last {
                return Err(Error::InvalidArgument(format!(
                    "node index {m} outside 0..={last}"
                )));
            }
            let mut sum = 0.0;
            if m >= 1 {
                let (a, b) = (t[m - 1], t[m]);
                sum += rule.integrate(a, b, |s| f(s) * (s - a) / (b - a));
            }
            if m < last {
                let (a, b) = (t[m], t[m + 1]);
                sum += rule.integrate(a, b, |s| f(s) * (b - s) / (b - a));
            }
            Ok(sum)
        }
    }
}

/// Moments of `f` against all hats `0..=M` (`out.len() == M+1`) and all
/// characteristic functions `1..=M` (`out.len() == M`).
pub fn basis_moments(f: impl Fn(f64) -> f64, partition: &TimePartition, order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let rule = GaussRule::new(order)?;
    let hats = (0..=partition.intervals())
        .map(|m| quad_with_rule(&f, partition, TimeBasis::Hat(m), &rule))
        .collect::<Result<Vec<_>>>()?;
    let chars = (1..=partition.intervals())
        .map(|m| quad_with_rule(&f, partition, TimeBasis::Char(m), &rule))
        .collect::<Result<Vec<_>>>()?;
    Ok((hats, chars))
}
