//! CSV serialization shared by the pipeline artifacts.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

/// Full double precision: 17 significant digits in scientific notation.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes a matrix with a header row and an optional leading label column.
pub fn write_matrix_csv(
    path: &Path,
    header: &[String],
    row_labels: Option<&[String]>,
    data: &DMatrix<f64>,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for i in 0..data.nrows() {
        let mut line = String::new();
        if let Some(labels) = row_labels {
            line.push_str(&labels[i]);
            line.push(',');
        }
        let cells: Vec<String> = data.row(i).iter().map(|v| fmt17(*v)).collect();
        line.push_str(&cells.join(","));
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn trajectory_header(r: usize) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain(crate::dynamics::state_names(r))
        .collect()
}

/// `t,delta_1..delta_r,omega_1..omega_r`, 17 significant digits, `\n` line ends.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", trajectory_header(traj.n_turbines()).join(",")).map_err(io)?;
    for k in 0..traj.n_samples() {
        let mut line = fmt17(traj.time(k));
        for v in traj.states.row(k).iter() {
            line.push(',');
            line.push_str(&fmt17(*v));
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Relative tolerance on per-step spacing when ingesting timestamps.
pub const DT_UNIFORMITY_TOL: f64 = 1e-9;

/// Parses a trajectory CSV. Rows in errors are 1-based data rows (header excluded).
pub fn parse_trajectory_csv(text: &str) -> Result<Trajectory> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Schema("empty file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 3 || (cols.len() - 1) % 2 != 0 {
        return Err(Error::Schema(format!(
            "header must be t,delta_1..delta_r,omega_1..omega_r; got {header:?}"
        )));
    }
    let r = (cols.len() - 1) / 2;
    let expected = trajectory_header(r);
    if cols != expected {
        return Err(Error::Schema(format!(
            "header mismatch: expected {:?}, got {cols:?}",
            expected.join(",")
        )));
    }

    let mut times = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in lines.enumerate() {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != cols.len() {
            return Err(Error::Ingestion {
                row,
                column: "*".into(),
                message: format!("expected {} fields, found {}", cols.len(), cells.len()),
            });
        }
        for (c, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Ingestion {
                row,
                column: cols[c].to_string(),
                message: format!("cannot parse {cell:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Ingestion {
                    row,
                    column: cols[c].to_string(),
                    message: format!("non-finite value {cell:?}"),
                });
            }
            if c == 0 {
                times.push(v);
            } else {
                values.push(v);
            }
        }
    }

    let m = times.len();
    if m < 2 {
        return Err(Error::Schema(format!("need at least 2 samples, found {m}")));
    }
    let t0 = times[0];
    // The spacing is only defined to the uniformity tolerance; rounding to 12
    // significant digits recovers the exact step of files written by this crate.
    let dt = snap_12((times[m - 1] - t0) / (m - 1) as f64);
    if !(dt > 0.0) {
        return Err(Error::NonUniformDt {
            row: 2,
            dt,
            relative: f64::INFINITY,
        });
    }
    for k in 1..m {
        let step = times[k] - times[k - 1];
        let relative = ((step - dt) / dt).abs();
        if relative > DT_UNIFORMITY_TOL {
            return Err(Error::NonUniformDt {
                row: k + 1,
                dt,
                relative,
            });
        }
    }

    Ok(Trajectory {
        dt,
        t0,
        states: DMatrix::from_row_slice(m, 2 * r, &values),
    })
}

fn snap_12(x: f64) -> f64 {
    if x.is_finite() && x != 0.0 {
        format!("{x:.11e}").parse().unwrap_or(x)
    } else {
        x
    }
}

pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trajectory_csv(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_csv(n: usize) -> String {
        let mut s = String::from("t,delta_1,omega_1\n");
        for k in 0..n {
            let t = k as f64 * 0.01;
            s.push_str(&format!("{},{},{}\n", fmt17(t), fmt17(t.sin()), fmt17(t.cos())));
        }
        s
    }

    #[test]
    fn parses_well_formed() {
        let traj = parse_trajectory_csv(&sample_csv(100)).unwrap();
        assert_eq!(traj.n_samples(), 100);
        assert_eq!(traj.dt, 0.01);
        assert_eq!(traj.states[(10, 0)], (0.1f64).sin());
    }

    #[test]
    fn nan_cites_row() {
        let mut lines: Vec<String> = sample_csv(100).lines().map(String::from).collect();
        lines[47] = format!("{},NaN,1.0", fmt17(46.0 * 0.01));
        match parse_trajectory_csv(&lines.join("\n")) {
            Err(Error::Ingestion { row, column, .. }) => {
                assert_eq!(row, 47);
                assert_eq!(column, "delta_1");
            }
            other => panic!("expected ingestion error, got {other:?}"),
        }
    }

    #[test]
    fn jittered_time_rejected() {
        let mut lines: Vec<String> = sample_csv(100).lines().map(String::from).collect();
        let t = 30.0 * 0.01 * (1.0 + 1e-6);
        lines[31] = format!("{},0.0,1.0", fmt17(t));
        assert!(matches!(
            parse_trajectory_csv(&lines.join("\n")),
            Err(Error::NonUniformDt { .. })
        ));
    }

    #[test]
    fn bad_header_rejected() {
        assert!(matches!(
            parse_trajectory_csv("time,a,b\n0,1,2\n"),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn fmt17_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 123456.789, f64::MIN_POSITIVE] {
            assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
        }
    }
}
