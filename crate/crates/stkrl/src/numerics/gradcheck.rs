use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::Result;
use crate::scalar::{real, to_f64, Scalar};

/// A differentiable scalar function exposed coordinate-by-coordinate, so the
/// checker can probe any parameter layout without knowing its structure.
///
/// Implementations must make `loss` a pure function of the probed coordinates:
/// anything stochastic (negative picks, sentence selections) has to be frozen
/// before checking starts.
pub trait GradCheckTarget<T: Scalar> {
    /// Number of probe coordinates.
    fn coord_count(&self) -> usize;

    /// Label of the parameter table coordinate `i` belongs to (for reports).
    fn label(&self, i: usize) -> String;

    fn get(&self, i: usize) -> T;

    fn set(&mut self, i: usize, value: T);

    /// Objective value at the current parameters.
    fn loss(&mut self) -> Result<T>;

    /// Analytic derivative of the objective w.r.t. coordinate `i`.
    fn analytic(&self, i: usize) -> T;
}

/// The single worst coordinate found by a check.
#[derive(Clone, Debug, Serialize)]
pub struct GradCheckEntry {
    pub table: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

/// Outcome of a finite-difference gradient comparison.
#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub tolerance: f64,
    pub coords_checked: usize,
    pub max_rel_error: f64,
    /// Maximum relative error seen per parameter table.
    pub per_table_max: BTreeMap<String, f64>,
    pub worst: Option<GradCheckEntry>,
    pub pass: bool,
}

impl GradCheckReport {
    /// One line per table plus the verdict, for terminal output.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (table, err) in &self.per_table_max {
            out.push_str(&format!("{table}\t{err:.3e}\n"));
        }
        out.push_str(&format!(
            "max_rel_error\t{:.3e}\nresult\t{}\n",
            self.max_rel_error,
            if self.pass { "pass" } else { "fail" }
        ));
        out
    }
}

/// Compares analytic derivatives against central finite differences
/// `(f(θ+h) - f(θ-h)) / 2h`, one coordinate at a time.
///
/// The relative error of a coordinate is
/// `|g_a - g_n| / max(|g_a|, |g_n|, 1e-12)`; the report passes when the
/// maximum over all coordinates stays within `tolerance`.
pub fn finite_diff_check<T, G>(target: &mut G, step: f64, tolerance: f64) -> Result<GradCheckReport>
where
    T: Scalar,
    G: GradCheckTarget<T>,
{
    let h = real::<T>(step);
    let two = real::<T>(2.0);
    let mut per_table_max: BTreeMap<String, f64> = BTreeMap::new();
    let mut worst: Option<GradCheckEntry> = None;
    let mut max_rel = 0.0f64;
    let n = target.coord_count();

    for i in 0..n {
        let theta = target.get(i);
        target.set(i, theta + h);
        let up = target.loss()?;
        target.set(i, theta - h);
        let down = target.loss()?;
        target.set(i, theta);

        let numeric = to_f64((up - down) / (two * h));
        let analytic = to_f64(target.analytic(i));
        let denom = analytic.abs().max(numeric.abs()).max(1e-12);
        let rel = (analytic - numeric).abs() / denom;

        let table = target.label(i);
        let slot = per_table_max.entry(table.clone()).or_insert(0.0);
        if rel > *slot {
            *slot = rel;
        }
        if rel > max_rel || worst.is_none() {
            max_rel = max_rel.max(rel);
            if worst.as_ref().map_or(true, |w| rel > w.rel_error) {
                worst = Some(GradCheckEntry {
                    table,
                    analytic,
                    numeric,
                    rel_error: rel,
                });
            }
        }
    }

    Ok(GradCheckReport {
        step,
        tolerance,
        coords_checked: n,
        max_rel_error: max_rel,
        per_table_max,
        worst,
        pass: max_rel <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// f(x) = sum_i c_i * x_i^2, with optionally corrupted analytic gradients.
    struct Quadratic {
        coeff: Vec<f64>,
        x: Vec<f64>,
        grad_scale: f64,
    }

    impl GradCheckTarget<f64> for Quadratic {
        fn coord_count(&self) -> usize {
            self.x.len()
        }

        fn label(&self, i: usize) -> String {
            if i < self.x.len() / 2 { "front" } else { "back" }.to_string()
        }

        fn get(&self, i: usize) -> f64 {
            self.x[i]
        }

        fn set(&mut self, i: usize, value: f64) {
            self.x[i] = value;
        }

        fn loss(&mut self) -> Result<f64> {
            Ok(self
                .coeff
                .iter()
                .zip(&self.x)
                .map(|(c, x)| c * x * x)
                .sum())
        }

        fn analytic(&self, i: usize) -> f64 {
            self.grad_scale * 2.0 * self.coeff[i] * self.x[i]
        }
    }

    #[test]
    fn correct_gradients_pass() {
        let mut t = Quadratic {
            coeff: vec![1.0, -2.5, 0.75, 3.0],
            x: vec![0.4, -1.2, 2.0, 0.1],
            grad_scale: 1.0,
        };
        let report = finite_diff_check(&mut t, 1e-5, 1e-4).unwrap();
        assert!(report.pass, "report: {report:?}");
        assert_eq!(report.coords_checked, 4);
        assert!(report.max_rel_error < 1e-6);
    }

    #[test]
    fn corrupted_gradients_fail_and_name_the_table() {
        let mut t = Quadratic {
            coeff: vec![1.0, 1.0, 1.0, 1.0],
            x: vec![0.5, 0.5, 0.5, 0.5],
            grad_scale: 1.02,
        };
        let report = finite_diff_check(&mut t, 1e-5, 1e-4).unwrap();
        assert!(!report.pass);
        let worst = report.worst.unwrap();
        assert!(worst.rel_error > 1e-2);
        assert!(worst.table == "front" || worst.table == "back");
    }

    #[test]
    fn unused_coordinates_report_exact_zero_error() {
        // Coefficient 0 makes the coordinate inert; central differences then
        // subtract identical losses and must yield exactly zero.
        let mut t = Quadratic {
            coeff: vec![0.0, 2.0],
            x: vec![3.0, 0.25],
            grad_scale: 1.0,
        };
        let report = finite_diff_check(&mut t, 1e-5, 1e-4).unwrap();
        assert!(report.pass);
    }
}
