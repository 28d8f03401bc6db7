//! Text formats: comma-separated vectors, matrix JSON files and trajectory CSV.

use std::fmt::Write as _;
use std::path::Path;

use hardline_core::{LinearMap, Matrix, TrajectorySample};
use serde::Deserialize;

use crate::error::CliError;

/// Parses `"3,2,1"` into reals. Whitespace around entries is ignored.
pub fn parse_vector(s: &str) -> Result<Vec<f64>, CliError> {
    let out = s
        .split(',')
        .map(|p| {
            let p = p.trim();
            p.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| CliError::usage(format!("not a finite number: {p:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if out.is_empty() {
        return Err(CliError::usage("empty vector"));
    }
    Ok(out)
}

/// Parses `"3,4,5"` or a range `"3..6"` (inclusive) into dimensions.
pub fn parse_dims(s: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::usage(format!("bad dimension list: {s:?}"));
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|p| p.trim().parse::<usize>().map_err(|_| bad())).collect()
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Entry {
    Number(f64),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixFile {
    n: usize,
    rows: Vec<Vec<Entry>>,
}

/// Parses a decimal (`"-0.25"`) or a fraction (`"-1/3"`).
pub fn parse_real(s: &str) -> Option<f64> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((p, q)) => {
            let (p, q) = (p.trim().parse::<f64>().ok()?, q.trim().parse::<f64>().ok()?);
            if q == 0.0 {
                return None;
            }
            p / q
        }
        None => s.parse::<f64>().ok()?,
    };
    v.is_finite().then_some(v)
}

/// Reads `{"n": N, "rows": [[...], ...]}`; entries are numbers or decimal or
/// fraction strings.
pub fn matrix_from_json(text: &str) -> Result<Matrix, CliError> {
    let file: MatrixFile = serde_json::from_str(text).map_err(|e| CliError::usage(format!("matrix file: {e}")))?;
    if file.rows.len() != file.n || file.rows.iter().any(|r| r.len() != file.n) {
        return Err(CliError::usage(format!("matrix file: expected {0}x{0} rows", file.n)));
    }
    let rows = file
        .rows
        .iter()
        .map(|r| {
            r.iter()
                .map(|e| match e {
                    Entry::Number(x) => Ok(*x),
                    Entry::Text(s) => parse_real(s).ok_or_else(|| CliError::usage(format!("matrix file: bad entry {s:?}"))),
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Matrix::from_rows(&rows)?)
}

pub fn load_linear_map(path: &Path) -> Result<LinearMap, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("matrix");
    Ok(LinearMap::new(name, matrix_from_json(&text)?)?)
}

/// `x` with 17 significant digits, positional unless the exponent is extreme.
pub fn fmt17(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.16e}");
    let exp: i32 = sci.rsplit_once('e').and_then(|(_, e)| e.parse().ok()).unwrap_or(0);
    if (-5..=16).contains(&exp) {
        format!("{:.*}", (16 - exp) as usize, x)
    } else {
        sci
    }
}

/// Shortest round-trip form with negative zero folded to `0`.
pub fn fmt_short(x: f64) -> String {
    format!("{}", x + 0.0)
}

pub fn join(v: &[f64], f: fn(f64) -> String) -> String {
    v.iter().map(|&x| f(x)).collect::<Vec<_>>().join(",")
}

/// CSV with header `t,x1..xN,v1..vN` and one row per sampled time.
pub fn trajectory_csv(traj: &TrajectorySample) -> String {
    let n = traj.states.first().map_or(0, |s| s.n());
    let mut out = String::from("t");
    for i in 1..=n {
        let _ = write!(out, ",x{i}");
    }
    for i in 1..=n {
        let _ = write!(out, ",v{i}");
    }
    out.push('\n');
    for (t, z) in traj.times.iter().zip(&traj.states) {
        out.push_str(&fmt17(*t));
        for a in z.x.iter().chain(&z.v) {
            out.push(',');
            out.push_str(&fmt17(*a));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt17(4.0), "4.0000000000000000");
        assert_eq!(fmt17(-0.1), "-0.10000000000000001");
        assert_eq!(fmt17(1.0 / 3.0).parse::<f64>().unwrap(), 1.0 / 3.0);
        assert!(fmt17(1e-300).contains('e'));
        for x in [123.456, 1e16, 9.999999999999999e-6, -2.5e7] {
            assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn matrices_accept_fractions_and_decimals() {
        let m = matrix_from_json(r#"{"n": 3, "rows": [["-1/3", "2/3", 0.6666666666666666], ["2/3","-1/3","2/3"], ["2/3","2/3","-0.25"]]}"#)
            .unwrap();
        assert_eq!(m[(0, 0)], -1.0 / 3.0);
        assert_eq!(m[(2, 2)], -0.25);
        assert!(matrix_from_json(r#"{"n": 2, "rows": [[1, 0]]}"#).is_err());
        assert!(matrix_from_json(r#"{"n": 1, "rows": [["x"]], "extra": 1}"#).is_err());
        assert!(matrix_from_json(r#"{"n": 1, "rows": [["1/0"]]}"#).is_err());
    }

    #[test]
    fn vectors_and_dims() {
        assert_eq!(parse_vector(" 3, 2,1").unwrap(), vec![3.0, 2.0, 1.0]);
        assert!(parse_vector("1,,2").is_err());
        assert!(parse_vector("1,nan").is_err());
        assert_eq!(parse_dims("3..6").unwrap(), vec![3, 4, 5, 6]);
        assert_eq!(parse_dims("3,5").unwrap(), vec![3, 5]);
        assert!(parse_dims("6..3").is_err());
    }

    #[test]
    fn negative_zero_prints_as_zero() {
        assert_eq!(fmt_short(-0.0), "0");
        assert_eq!(join(&[1.0, 2.5, -3.0], fmt_short), "1,2.5,-3");
    }
}
