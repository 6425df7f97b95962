//! CSV import of tabulated kernels and profiles, and CSV export of results.
//! Numbers are written with 17 significant digits.

use std::io::{Read, Write};

use crate::comparison::EnvelopePath;
use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::nonlinearity::{Nonlinearity, TailForm};
use crate::steady::{SteadyBranch, SteadyProfile};

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Reads two numeric columns. A first row that does not parse as numbers is
/// taken as a header; blank lines and lines starting with `#` are skipped.
pub fn read_two_columns<R: Read>(reader: R) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut out = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if record.len() != 2 {
            return Err(Error::Invalid(format!(
                "row {}: expected 2 columns, found {}",
                line + 1,
                record.len()
            )));
        }
        let parsed = (record[0].parse::<f64>(), record[1].parse::<f64>());
        match parsed {
            (Ok(a), Ok(b)) if a.is_finite() && b.is_finite() => out.push((a, b)),
            (Ok(_), Ok(_)) => {
                return Err(Error::Invalid(format!(
                    "row {}: non-finite value",
                    line + 1
                )))
            }
            _ if line == 0 && out.is_empty() => continue,
            _ => {
                return Err(Error::Invalid(format!(
                    "row {}: cannot parse numbers",
                    line + 1
                )))
            }
        }
    }
    if out.len() < 2 {
        return Err(Error::Invalid("need at least two data rows".into()));
    }
    Ok(out)
}

/// Tabulated kernel from `s,f` rows, normalized to unit mass when a tail is
/// declared.
pub fn read_tabulated_kernel<R: Read>(reader: R, tail: Option<TailForm>) -> Result<Nonlinearity> {
    let samples = read_two_columns(reader)?;
    let nl = Nonlinearity::tabulated(&samples, tail)?;
    if tail.is_some() {
        nl.normalized()
    } else {
        Ok(nl)
    }
}

/// Profile samples `x,u`, sorted by `x`, nonnegative.
pub fn read_profile<R: Read>(reader: R) -> Result<Vec<(f64, f64)>> {
    let mut rows = read_two_columns(reader)?;
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    if rows.windows(2).any(|w| w[1].0 == w[0].0) {
        return Err(Error::Invalid("profile abscissae must be distinct".into()));
    }
    if let Some(&(x, u)) = rows.iter().find(|r| r.1 < 0.0) {
        return Err(Error::Invalid(format!(
            "profile value {u} at x = {x} is negative"
        )));
    }
    Ok(rows)
}

fn write_rows<W: Write>(
    out: W,
    header: &[&str],
    rows: impl Iterator<Item = Vec<f64>>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(header)?;
    for row in rows {
        wtr.write_record(row.iter().map(|v| fmt17(*v)))?;
    }
    wtr.flush()?;
    Ok(())
}

/// `mu,M,lambda,flux_ratio`
pub fn write_branch_csv<W: Write>(out: W, branch: &SteadyBranch) -> Result<()> {
    write_rows(
        out,
        &["mu", "M", "lambda", "flux_ratio"],
        branch
            .points
            .iter()
            .map(|p| vec![p.mu, p.max, p.lambda, p.flux_ratio]),
    )
}

/// `r,w`
pub fn write_profile_csv<W: Write>(out: W, profile: &SteadyProfile) -> Result<()> {
    write_rows(
        out,
        &["r", "w"],
        profile
            .grid
            .iter()
            .zip(&profile.w)
            .map(|(&r, &w)| vec![r, w]),
    )
}

/// `t,M,I`
pub fn write_trajectory_csv<W: Write>(out: W, traj: &Trajectory) -> Result<()> {
    write_rows(
        out,
        &["t", "M", "I"],
        traj.times
            .iter()
            .zip(&traj.max_series)
            .zip(&traj.integral_series)
            .map(|((&t, &m), &i)| vec![t, m, i]),
    )
}

/// `x,u` for one profile on the trajectory grid.
pub fn write_snapshot_csv<W: Write>(out: W, grid: &[f64], u: &[f64]) -> Result<()> {
    write_rows(
        out,
        &["x", "u"],
        grid.iter().zip(u).map(|(&x, &v)| vec![x, v]),
    )
}

/// `t,mu,lambda_of_mu`
pub fn write_envelope_csv<W: Write>(out: W, path: &EnvelopePath) -> Result<()> {
    write_rows(
        out,
        &["t", "mu", "lambda_of_mu"],
        path.times
            .iter()
            .zip(&path.mu_series)
            .zip(&path.lambda_series)
            .map(|((&t, &m), &l)| vec![t, m, l]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_comments_are_skipped() {
        let text = "s,f\n# comment\n0,1\n1, 0.5\n\n2,0.25\n";
        let rows = read_two_columns(text.as_bytes()).unwrap();
        assert_eq!(rows, vec![(0.0, 1.0), (1.0, 0.5), (2.0, 0.25)]);
    }

    #[test]
    fn malformed_rows_are_errors() {
        assert!(read_two_columns("0,1\n1,x\n".as_bytes()).is_err());
        assert!(read_two_columns("0,1,2\n1,2,3\n".as_bytes()).is_err());
        assert!(read_two_columns("0,1\n1,inf\n".as_bytes()).is_err());
        assert!(read_profile("0,1\n1,-1\n".as_bytes()).is_err());
    }

    #[test]
    fn kernel_is_normalized() {
        let mut text = String::from("s,f\n");
        for i in 0..=3000 {
            let s = i as f64 * 0.01;
            text.push_str(&format!("{s},{}\n", 2.0 * (-s).exp()));
        }
        let nl = read_tabulated_kernel(text.as_bytes(), Some(TailForm::Exponential { rate: 1.0 }))
            .unwrap();
        assert!((nl.eval_big_f(0.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_precision_round_trip() {
        let x = std::f64::consts::PI / 7.0;
        assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
    }
}
