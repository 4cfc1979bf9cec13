//! Convergence orders, power-law fits, level-set measures and table output.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manufactured::ManufacturedProblem;
use crate::solver::RegPathRecord;
use crate::time_grid::{PiecewiseLinearScalar, TimePartition};

/// Number of trailing levels used by default in rate fits.
pub const DEFAULT_FIT_LEVELS: usize = 4;

fn check_positive(values: &[f64], what: &str) -> Result<()> {
    match values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        Some(v) => Err(Error::InvalidArgument(format!("{what} must be positive, got {v}"))),
        None => Ok(()),
    }
}

/// `log2(e_{l-1} / e_l)`; the first entry has no predecessor.
pub fn eoc(errors: &[f64], alphas: &[f64]) -> Result<Vec<Option<f64>>> {
    crate::error::check_len(errors.len(), alphas.len())?;
    if errors.len() < 2 {
        return Err(Error::InvalidArgument("need at least two errors".into()));
    }
    check_positive(errors, "errors")?;
    for w in alphas.windows(2) {
        if ((w[0] / w[1]) - 2.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "alpha must halve between rows, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    Ok(std::iter::once(None)
        .chain(errors.windows(2).map(|w| Some((w[0] / w[1]).log2())))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Slope of `log(value)` against `log(alpha)`.
    pub exponent: f64,
    /// `C` in `value ~ C alpha^exponent`.
    pub constant: f64,
    /// RMS deviation of the fit in log space.
    pub residual: f64,
    pub points: usize,
}

/// Least-squares power law `value = C x^p`.
pub fn fit_rate(values: &[f64], alphas: &[f64]) -> Result<RateFit> {
    crate::error::check_len(values.len(), alphas.len())?;
    if values.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "a rate fit needs at least 3 points, got {}",
            values.len()
        )));
    }
    check_positive(values, "values")?;
    check_positive(alphas, "abscissae")?;
    let xs: Vec<f64> = alphas.iter().map(|a| a.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-300 {
        return Err(Error::InvalidArgument("abscissae are all equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (intercept + slope * x - y).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(RateFit {
        exponent: slope,
        constant: intercept.exp(),
        residual,
        points: xs.len(),
    })
}

/// Fit over the last `count` points, or all of them for `None`.
pub fn fit_tail(values: &[f64], alphas: &[f64], count: Option<usize>) -> Result<RateFit> {
    crate::error::check_len(values.len(), alphas.len())?;
    let start = count.map_or(0, |c| values.len().saturating_sub(c));
    fit_rate(&values[start..], &alphas[start..])
}

/// `meas{t : |q(t)| <= eps}` for piecewise linear `q`.
pub fn level_set_measure(partition: &TimePartition, q: &PiecewiseLinearScalar, eps: f64) -> f64 {
    if eps < 0.0 {
        return 0.0;
    }
    let nodes = partition.nodes();
    q.values()
        .windows(2)
        .zip(nodes.windows(2))
        .map(|(v, t)| {
            let k = t[1] - t[0];
            let (q0, q1) = (v[0], v[1]);
            if q0 == q1 {
                return if q0.abs() <= eps { k } else { 0.0 };
            }
            // q(s) = q0 + s (q1 - q0) on s in [0, 1]
            let s_at = |level: f64| (level - q0) / (q1 - q0);
            let (a, b) = {
                let (x, y) = (s_at(-eps), s_at(eps));
                (x.min(y), x.max(y))
            };
            k * (b.min(1.0) - a.max(0.0)).max(0.0)
        })
        .sum()
}

#[derive(Debug, Clone, Copy)]
pub enum MeasureSource<'a> {
    Discrete {
        partition: &'a TimePartition,
        q: &'a PiecewiseLinearScalar,
    },
    /// `|B* p|` of the manufactured limit adjoint, in closed form.
    Manufactured(&'a ManufacturedProblem),
}

pub fn measure_condition_estimate(source: MeasureSource<'_>, epsilons: &[f64]) -> Result<Vec<f64>> {
    check_positive(epsilons, "epsilon values")?;
    if epsilons.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("epsilon values must be sorted".into()));
    }
    Ok(epsilons
        .iter()
        .map(|&e| match source {
            MeasureSource::Discrete { partition, q } => level_set_measure(partition, q, e),
            MeasureSource::Manufactured(p) => p.exact_zero_measure(e),
        })
        .collect())
}

/// A fitted exponent, or `Infinite` when the quantity vanishes along the
/// tail of the path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Exponent {
    Fitted(RateFit),
    Infinite,
}

impl Exponent {
    pub fn value(&self) -> f64 {
        match self {
            Exponent::Fitted(f) => f.exponent,
            Exponent::Infinite => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathConditionReport {
    pub kappa_expected: f64,
    pub inactive_measure: Exponent,
    pub derivative_l1: Exponent,
    /// The inactive-set exponent falls more than 0.15 below `kappa_expected`.
    pub violation: bool,
}

fn fit_quantity(values: &[f64], alphas: &[f64], count: Option<usize>) -> Result<Exponent> {
    let start = count.map_or(0, |c| values.len().saturating_sub(c));
    let (v, a) = (&values[start..], &alphas[start..]);
    if v.iter().all(|&x| x == 0.0) {
        return Ok(Exponent::Infinite);
    }
    Ok(Exponent::Fitted(fit_rate(v, a)?))
}

pub fn path_condition_report(
    records: &[RegPathRecord],
    kappa_expected: f64,
    fit_levels: Option<usize>,
) -> Result<PathConditionReport> {
    if records.len() < 3 {
        return Err(Error::InvalidArgument("need at least 3 path records".into()));
    }
    let alphas: Vec<f64> = records.iter().map(|r| r.alpha).collect();
    let column = |f: fn(&RegPathRecord) -> Option<f64>, name: &str| -> Result<Vec<f64>> {
        records
            .iter()
            .map(|r| f(r).ok_or_else(|| Error::InvalidArgument(format!("records lack {name}"))))
            .collect()
    };
    let inactive = column(|r| r.metrics.inactive_measure, "inactive_measure")?;
    let derivative = column(|r| r.metrics.derivative_l1, "derivative_l1")?;
    let inactive_measure = fit_quantity(&inactive, &alphas, fit_levels)?;
    let derivative_l1 = fit_quantity(&derivative, &alphas, fit_levels)?;
    let violation = inactive_measure.value() < kappa_expected - 0.15;
    Ok(PathConditionReport {
        kappa_expected,
        inactive_measure,
        derivative_l1,
        violation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EocRow {
    pub level: i32,
    pub alpha: f64,
    pub err_l1: f64,
    pub err_l2: f64,
    pub eoc_l1: Option<f64>,
    pub eoc_l2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EocTable {
    pub kappa: f64,
    pub n_per_side: usize,
    pub time_steps: usize,
    pub tolerance: f64,
    pub rows: Vec<EocRow>,
}

pub const CSV_HEADER: &str = "level,alpha,err_l1,err_l2,eoc_l1,eoc_l2";

impl EocTable {
    /// Rows from path records carrying control errors. The EOC of a row is
    /// left empty when its predecessor level is missing.
    pub fn from_records(
        records: &[RegPathRecord],
        kappa: f64,
        n_per_side: usize,
        time_steps: usize,
        tolerance: f64,
    ) -> Result<Self> {
        let mut rows: Vec<EocRow> = Vec::with_capacity(records.len());
        for r in records {
            let (err_l1, err_l2) = match (r.metrics.err_l1, r.metrics.err_l2) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(Error::InvalidArgument(format!("level {} has no control error", r.level))),
            };
            let prev = rows.last().filter(|p| p.level + 1 == r.level);
            let rate = |p: f64, e: f64| (p > 0.0 && e > 0.0).then(|| (p / e).log2());
            rows.push(EocRow {
                level: r.level,
                alpha: r.alpha,
                err_l1,
                err_l2,
                eoc_l1: prev.and_then(|p| rate(p.err_l1, err_l1)),
                eoc_l2: prev.and_then(|p| rate(p.err_l2, err_l2)),
            });
        }
        Ok(Self {
            kappa,
            n_per_side,
            time_steps,
            tolerance,
            rows,
        })
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.alpha).collect()
    }

    pub fn l1_errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.err_l1).collect()
    }

    pub fn l2_errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.err_l2).collect()
    }

    /// CSV parse of [`emit_table`] output; lines starting with `#` are
    /// skipped. Grid metadata is not part of the CSV and is taken from the
    /// arguments.
    pub fn parse_csv(text: &str, kappa: f64, n_per_side: usize, time_steps: usize, tolerance: f64) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == CSV_HEADER => {}
            other => return Err(Error::Parse(format!("unexpected CSV header {other:?}"))),
        }
        let num = |s: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")))
        };
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.trim().is_empty() {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        };
        let rows = lines
            .map(|line| {
                let cells: Vec<&str> = line.split(',').collect();
                if cells.len() != 6 {
                    return Err(Error::Parse(format!("expected 6 cells in {line:?}")));
                }
                Ok(EocRow {
                    level: cells[0].trim().parse().map_err(|e| Error::Parse(format!("{e}")))?,
                    alpha: num(cells[1])?,
                    err_l1: num(cells[2])?,
                    err_l2: num(cells[3])?,
                    eoc_l1: opt(cells[4])?,
                    eoc_l2: opt(cells[5])?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            kappa,
            n_per_side,
            time_steps,
            tolerance,
            rows,
        })
    }
}

/// CSV uses shortest round-trip number formatting; markdown prints errors
/// with 8 decimals and EOCs with 2, the first EOC cell as `/`.
pub fn emit_table(table: &EocTable, format: TableFormat) -> String {
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            let cell = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
            for r in &table.rows {
                let _ = writeln!(
                    out,
                    "{},{:?},{:?},{:?},{},{}",
                    r.level,
                    r.alpha,
                    r.err_l1,
                    r.err_l2,
                    cell(r.eoc_l1),
                    cell(r.eoc_l2)
                );
            }
        }
        TableFormat::Markdown => {
            let _ = writeln!(
                out,
                "kappa = {}, {} x {} nodes, {} time steps, tol = {:e}\n",
                table.kappa, table.n_per_side, table.n_per_side, table.time_steps, table.tolerance
            );
            out.push_str("| l | alpha | L1 error | L2 error | EOC L1 | EOC L2 |\n");
            out.push_str("|---|---|---|---|---|---|\n");
            let cell = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "/".into());
            for r in &table.rows {
                let _ = writeln!(
                    out,
                    "| {} | {:.8} | {:.8} | {:.8} | {} | {} |",
                    r.level,
                    r.alpha,
                    r.err_l1,
                    r.err_l2,
                    cell(r.eoc_l1),
                    cell(r.eoc_l2)
                );
            }
        }
    }
    out
}

/// One JSON object per line.
pub fn write_jsonl(records: &[RegPathRecord], mut out: impl Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Parse(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads records from JSON lines, skipping blank lines and lines starting
/// with `#`.
pub fn read_jsonl(input: impl BufRead) -> Result<Vec<RegPathRecord>> {
    let mut records = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| Error::Parse(e.to_string()))?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::PathMetrics;

    fn halving(n: usize) -> Vec<f64> {
        (1..=n as i32).map(|l| 2f64.powi(-l)).collect()
    }

    // Tables of the reference experiment, levels 1..6: (L1, L2).
    const TABLE_K03: [(f64, f64); 6] = [
        (0.09417668, 0.13354708),
        (0.08837777, 0.12648809),
        (0.07681662, 0.11533688),
        (0.06212895, 0.10353644),
        (0.05008158, 0.09264117),
        (0.04011694, 0.08237596),
    ];
    const TABLE_K1: [(f64, f64); 6] = [
        (0.04006495, 0.07304858),
        (0.02000722, 0.05160925),
        (0.00998774, 0.03646496),
        (0.00498724, 0.02576440),
        (0.00249053, 0.01820019),
        (0.00123906, 0.01282180),
    ];

    #[test]
    fn eoc_examples() {
        let r = eoc(&[0.04006495, 0.02000722], &halving(2)).unwrap();
        assert_eq!(r[0], None);
        assert_eq!(format!("{:.2}", r[1].unwrap()), "1.00");
        let r = eoc(&[0.01081546, 0.00279478], &halving(2)).unwrap();
        assert_eq!(format!("{:.2}", r[1].unwrap()), "1.95");
        assert_eq!(eoc(&[0.3, 0.3], &halving(2)).unwrap()[1], Some(0.0));
        assert!(eoc(&[0.3, 0.0], &halving(2)).is_err());
        assert!(eoc(&[0.3, 0.1], &[1.0, 0.25]).is_err());
    }

    #[test]
    fn eoc_of_power_law() {
        let a = halving(6);
        let e: Vec<f64> = a.iter().map(|x| 3.0 * x.powf(0.7)).collect();
        for r in eoc(&e, &a).unwrap().into_iter().skip(1) {
            assert!((r.unwrap() - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_examples() {
        let a = halving(6);
        let v: Vec<f64> = a.iter().map(|x| 4.0 * x.powf(1.3)).collect();
        let f = fit_rate(&v, &a).unwrap();
        assert!((f.exponent - 1.3).abs() < 1e-12 && f.residual < 1e-12);
        assert!((f.constant - 4.0).abs() < 1e-10);

        let l1: Vec<f64> = TABLE_K1.iter().map(|r| r.0).collect();
        let f = fit_rate(&l1, &a).unwrap();
        assert!((f.exponent - 1.0).abs() < 0.02, "{}", f.exponent);

        let l1: Vec<f64> = TABLE_K03.iter().map(|r| r.0).collect();
        let f = fit_rate(&l1[2..], &a[2..]).unwrap();
        assert!((f.exponent - 0.31).abs() < 0.05, "{}", f.exponent);
        assert_eq!(f.points, 4);

        assert!(fit_rate(&[1.0, 2.0], &[0.5, 0.25]).is_err());
        assert!(fit_rate(&[1.0, 2.0, 3.0], &[0.5, 0.5, 0.5]).is_err());
    }

    #[test]
    fn linear_level_set() {
        let p = TimePartition::uniform(1, 1.0).unwrap();
        let q = PiecewiseLinearScalar::new(&p, vec![0.0, 1.0]).unwrap();
        assert!((level_set_measure(&p, &q, 0.1) - 0.1).abs() < 1e-15);
        let q = PiecewiseLinearScalar::new(&p, vec![-1.0, 1.0]).unwrap();
        assert!((level_set_measure(&p, &q, 0.1) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn manufactured_measure_fit() {
        let eps: Vec<f64> = (1..=8).map(|i| 1e-3 * 1.5f64.powi(i)).collect();
        for kappa in [0.3, 0.5, 1.0, 2.0] {
            let p = ManufacturedProblem::located_heat(kappa).unwrap();
            let m = measure_condition_estimate(MeasureSource::Manufactured(&p), &eps).unwrap();
            let f = fit_rate(&m, &eps).unwrap();
            assert!((f.exponent - kappa).abs() < 0.01);
            assert!((f.constant / 4f64.powf(kappa) - 1.0).abs() < 0.05);
        }
        let p = ManufacturedProblem::located_heat(1.0).unwrap();
        assert!(measure_condition_estimate(MeasureSource::Manufactured(&p), &[0.2, 0.1]).is_err());
    }

    fn record(level: i32, l1: f64, l2: f64, meas: f64, tv: f64) -> RegPathRecord {
        RegPathRecord {
            level,
            alpha: 2f64.powi(-level),
            iterations: 3,
            last_difference: 1e-7,
            fixed_point_residual: 1e-9,
            vi_residual: 0.0,
            damping: 1.0,
            metrics: PathMetrics {
                err_l1: Some(l1),
                err_l2: Some(l2),
                inactive_measure: Some(meas),
                derivative_l1: Some(tv),
                ..PathMetrics::default()
            },
            q: vec![0.1, 0.0],
        }
    }

    #[test]
    fn fully_active_path_has_infinite_exponent() {
        let recs: Vec<_> = (1..=5).map(|l| record(l, 0.1, 0.1, 0.0, 0.0)).collect();
        let r = path_condition_report(&recs, 1.0, None).unwrap();
        assert_eq!(r.inactive_measure, Exponent::Infinite);
        assert!(!r.violation);
        let recs: Vec<_> = (1..=5).map(|l| record(l, 0.1, 0.1, 0.4 * 2f64.powi(-l), 0.2)).collect();
        let r = path_condition_report(&recs, 1.5, None).unwrap();
        assert!((r.inactive_measure.value() - 1.0).abs() < 1e-12);
        assert!(r.derivative_l1.value().abs() < 1e-12);
        assert!(r.violation);
    }

    fn table_k1() -> EocTable {
        let recs: Vec<_> = TABLE_K1
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| record(i as i32 + 1, a, b, 0.1, 0.2))
            .collect();
        EocTable::from_records(&recs, 1.0, 33, 2048, 1e-5).unwrap()
    }

    #[test]
    fn table_emission() {
        let t = table_k1();
        let md = emit_table(&t, TableFormat::Markdown);
        let body: Vec<&str> = md.lines().filter(|l| l.starts_with("| ") && !l.starts_with("| l ")).collect();
        assert_eq!(body.len(), 6);
        assert!(body[0].ends_with("| / | / |"));
        assert!(body[0].contains("0.04006495"));
        assert!(body[1].ends_with("| 1.00 | 0.50 |"));
        assert!(body[5].ends_with("| 1.01 | 0.51 |"));
        assert_eq!(md, emit_table(&t, TableFormat::Markdown));

        let empty = EocTable { rows: vec![], ..t.clone() };
        assert_eq!(emit_table(&empty, TableFormat::Csv), format!("{CSV_HEADER}\n"));

        let csv = emit_table(&t, TableFormat::Csv);
        let back = EocTable::parse_csv(&format!("# kappa=1\n{csv}"), 1.0, 33, 2048, 1e-5).unwrap();
        assert_eq!(back, t);
        for (a, b) in back.rows.iter().zip(&t.rows) {
            assert_eq!(a.err_l2.to_bits(), b.err_l2.to_bits());
        }
    }

    #[test]
    fn missing_level_leaves_eoc_empty() {
        let recs = vec![record(1, 0.1, 0.1, 0.1, 0.2), record(3, 0.05, 0.05, 0.1, 0.2)];
        let t = EocTable::from_records(&recs, 1.0, 9, 8, 1e-5).unwrap();
        assert_eq!(t.rows[1].eoc_l1, None);
    }

    #[test]
    fn jsonl_round_trip() {
        let recs: Vec<_> = (1..=3).map(|l| record(l, 0.1, 0.2, 0.3, 0.2)).collect();
        let mut buf = Vec::new();
        write_jsonl(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().next().unwrap().contains("\"err_l1\":0.1"));
        assert_eq!(read_jsonl(&buf[..]).unwrap(), recs);
    }
}
