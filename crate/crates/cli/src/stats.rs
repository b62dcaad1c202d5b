//! The `stats` subcommand: hypothesis tests over emitted CSV columns.
//!
//! Each test prints a one-line JSON verdict to stdout and exits 0 whether
//! the hypothesis passed or not — the verdict is the result, not an error.
//! Unreadable input (missing column, unparsable numbers, empty data) is a
//! schema failure, exit 2.
//!
//! Columns holding `;`-joined vectors contribute their first component;
//! rows where the column is empty (an event kind without that field) are
//! skipped.

use std::path::Path;

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

use crate::CliError;

/// Outcome of one test, serialized as the stdout verdict line.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub kind: &'static str,
    pub n: u64,
    pub statistic: f64,
    pub dof: Option<f64>,
    pub p_value: f64,
    pub significance: f64,
    pub pass: bool,
    /// Test-specific extras (success counts, group counts, means).
    pub detail: serde_json::Value,
}

impl Verdict {
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "kind": self.kind,
            "n": self.n,
            "statistic": self.statistic,
            "dof": self.dof,
            "p_value": self.p_value,
            "significance": self.significance,
            "pass": self.pass,
            "detail": self.detail,
        })
        .to_string()
    }
}

fn csv_open_err(path: &Path, e: csv::Error) -> CliError {
    if e.is_io_error() {
        CliError::Io(format!("{}: {e}", path.display()))
    } else {
        CliError::Schema(format!("{}: {e}", path.display()))
    }
}

/// Read one numeric column; for `;`-joined vector fields, the first
/// component. Empty fields are skipped, an empty result is a schema error.
pub fn read_column(path: &Path, column: &str) -> Result<Vec<f64>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_open_err(path, e))?;
    let headers = reader.headers().map_err(|e| csv_open_err(path, e))?.clone();
    let idx = headers.iter().position(|h| h == column).ok_or_else(|| {
        CliError::Schema(format!("{}: no column named {column:?}", path.display()))
    })?;
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_open_err(path, e))?;
        let field = record.get(idx).unwrap_or("");
        let first = field.split(';').next().unwrap_or("");
        if first.is_empty() {
            continue;
        }
        let v: f64 = first.parse().map_err(|_| {
            CliError::Schema(format!(
                "{}: column {column:?} holds unparsable value {first:?}",
                path.display()
            ))
        })?;
        values.push(v);
    }
    if values.is_empty() {
        return Err(CliError::Schema(format!(
            "{}: column {column:?} has no usable values",
            path.display()
        )));
    }
    Ok(values)
}

/// Read an expected-density table: columns `position,density` on a uniform
/// ascending grid.
fn read_expected(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let positions = read_column(path, "position")?;
    let densities = read_column(path, "density")?;
    if positions.len() != densities.len() || positions.len() < 2 {
        return Err(CliError::Schema(format!(
            "{}: need matching position/density columns with at least two rows",
            path.display()
        )));
    }
    let dx = positions[1] - positions[0];
    if !(dx > 0.0) {
        return Err(CliError::Schema(format!(
            "{}: positions must be strictly ascending",
            path.display()
        )));
    }
    for w in positions.windows(2) {
        let step = w[1] - w[0];
        if ((step - dx) / dx).abs() > 1e-9 {
            return Err(CliError::Schema(format!(
                "{}: positions must form a uniform grid",
                path.display()
            )));
        }
    }
    if densities.iter().any(|&d| !(d >= 0.0)) || densities.iter().sum::<f64>() <= 0.0 {
        return Err(CliError::Schema(format!(
            "{}: densities must be nonnegative with positive total",
            path.display()
        )));
    }
    Ok(positions.into_iter().zip(densities).collect())
}

/// Pearson chi-square of observed samples against a tabulated density.
/// Samples bin to the nearest grid point (clamped at the edges); bins merge
/// left to right until each group has expected count at least 5, any
/// remainder folding into the last group.
pub fn chi_square(
    observed_path: &Path,
    expected_path: &Path,
    column: &str,
    significance: f64,
) -> Result<Verdict, CliError> {
    check_significance(significance)?;
    let observed = read_column(observed_path, column)?;
    let expected = read_expected(expected_path)?;
    let n = observed.len();
    let k = expected.len();
    let p0 = expected[0].0;
    let dx = expected[1].0 - expected[0].0;

    let total_density: f64 = expected.iter().map(|(_, d)| d).sum();
    let expected_counts: Vec<f64> =
        expected.iter().map(|(_, d)| n as f64 * d / total_density).collect();
    let mut observed_counts = vec![0u64; k];
    for &x in &observed {
        let bin = ((x - p0) / dx).round().clamp(0.0, (k - 1) as f64) as usize;
        observed_counts[bin] += 1;
    }

    let mut groups: Vec<(f64, f64)> = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0f64, 0.0f64);
    for i in 0..k {
        o_acc += observed_counts[i] as f64;
        e_acc += expected_counts[i];
        if e_acc >= 5.0 {
            groups.push((o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if o_acc > 0.0 || e_acc > 0.0 {
        match groups.last_mut() {
            Some(last) => {
                last.0 += o_acc;
                last.1 += e_acc;
            }
            None => groups.push((o_acc, e_acc)),
        }
    }
    if groups.len() < 2 {
        return Err(CliError::Constraint(
            "chi-square needs at least two groups with expected count >= 5; \
             supply more samples or a coarser expected grid"
                .to_string(),
        ));
    }

    let chi2: f64 = groups.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = (groups.len() - 1) as f64;
    let dist = ChiSquared::new(dof)
        .map_err(|e| CliError::Numerical(format!("chi-square distribution: {e}")))?;
    let p_value = 1.0 - dist.cdf(chi2);
    Ok(Verdict {
        kind: "chi_square",
        n: n as u64,
        statistic: chi2,
        dof: Some(dof),
        p_value,
        significance,
        pass: p_value >= significance,
        detail: serde_json::json!({ "groups": groups.len(), "bins": k }),
    })
}

/// Two-sided binomial z-test: successes are samples strictly below `split`,
/// tested against success probability `expected`.
pub fn binomial(
    events_path: &Path,
    column: &str,
    split: f64,
    expected: f64,
    significance: f64,
) -> Result<Verdict, CliError> {
    check_significance(significance)?;
    if !(expected > 0.0 && expected < 1.0) {
        return Err(CliError::Constraint(format!(
            "expected probability must be strictly between 0 and 1, got {expected}"
        )));
    }
    let samples = read_column(events_path, column)?;
    let n = samples.len();
    let successes = samples.iter().filter(|&&x| x < split).count();
    let phat = successes as f64 / n as f64;
    let se = (expected * (1.0 - expected) / n as f64).sqrt();
    let z = (phat - expected) / se;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let p_value = 2.0 * normal.cdf(-z.abs());
    Ok(Verdict {
        kind: "binomial",
        n: n as u64,
        statistic: z,
        dof: None,
        p_value,
        significance,
        pass: p_value >= significance,
        detail: serde_json::json!({
            "successes": successes,
            "observed_frequency": phat,
            "expected_frequency": expected,
            "split": split,
        }),
    })
}

/// Welch's two-sided t-test on one column of two files.
pub fn two_sample(
    a_path: &Path,
    b_path: &Path,
    column: &str,
    significance: f64,
) -> Result<Verdict, CliError> {
    check_significance(significance)?;
    let a = read_column(a_path, column)?;
    let b = read_column(b_path, column)?;
    if a.len() < 2 || b.len() < 2 {
        return Err(CliError::Constraint(
            "two-sample test needs at least two values per file".to_string(),
        ));
    }
    let (ma, va) = mean_var(&a);
    let (mb, vb) = mean_var(&b);
    let sea = va / a.len() as f64;
    let seb = vb / b.len() as f64;
    let se = (sea + seb).sqrt();
    let (t, dof, p_value) = if se == 0.0 {
        // both samples are constant: identical means are a perfect pass,
        // different means a certain fail
        let equal = ma == mb;
        (if equal { 0.0 } else { f64::INFINITY }, 1.0, if equal { 1.0 } else { 0.0 })
    } else {
        let t = (ma - mb) / se;
        let dof = (sea + seb) * (sea + seb)
            / (sea * sea / (a.len() as f64 - 1.0) + seb * seb / (b.len() as f64 - 1.0));
        let dist = StudentsT::new(0.0, 1.0, dof)
            .map_err(|e| CliError::Numerical(format!("t distribution: {e}")))?;
        (t, dof, 2.0 * dist.cdf(-t.abs()))
    };
    Ok(Verdict {
        kind: "two_sample",
        n: (a.len() + b.len()) as u64,
        statistic: t,
        dof: Some(dof),
        p_value,
        significance,
        pass: p_value >= significance,
        detail: serde_json::json!({
            "mean_a": ma,
            "mean_b": mb,
            "n_a": a.len(),
            "n_b": b.len(),
        }),
    })
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn check_significance(s: f64) -> Result<(), CliError> {
    if !(s > 0.0 && s < 1.0) {
        return Err(CliError::Constraint(format!(
            "significance must be strictly between 0 and 1, got {s}"
        )));
    }
    Ok(())
}
