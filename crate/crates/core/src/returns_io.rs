//! Plain-text return series: one positive decimal per line, oldest first.
//! Blank lines are ignored.

use std::fmt::Write as _;
use std::path::Path;

use crate::domain::ReturnPath;
use crate::error::{Error, Result};

pub fn parse_returns(text: &str) -> Result<ReturnPath> {
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.trim();
        if s.is_empty() {
            continue;
        }
        let z: f64 = s.parse().map_err(|_| Error::Data {
            line,
            message: format!("cannot parse {s:?} as a number"),
        })?;
        if !z.is_finite() {
            return Err(Error::Data {
                line,
                message: format!("return {s} is not finite"),
            });
        }
        if z <= 0.0 {
            return Err(Error::Data {
                line,
                message: format!("return {s} is not positive"),
            });
        }
        values.push(z);
    }
    if values.is_empty() {
        return Err(Error::Data {
            line: 0,
            message: "no returns in input".into(),
        });
    }
    ReturnPath::from_past(values)
}

pub fn read_returns(path: &Path) -> Result<ReturnPath> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_returns(&text)
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_returns(values: &[f64]) -> String {
    let mut out = String::with_capacity(values.len() * 20);
    for z in values {
        let _ = writeln!(out, "{z}");
    }
    out
}

pub fn write_returns(path: &Path, values: &[f64]) -> Result<()> {
    std::fs::write(path, format_returns(values)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{garch_paths, GarchParams};

    #[test]
    fn parses_simple_file() {
        let r = parse_returns("1.01\n0.99\n").unwrap();
        assert_eq!(r.values(), &[1.01, 0.99]);
        assert_eq!(parse_returns("\n 1.5 \n\n").unwrap().len(), 1);
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(
            parse_returns("-1.0\n").unwrap_err(),
            Error::Data {
                line: 1,
                message: "return -1.0 is not positive".into()
            }
        );
        assert!(matches!(
            parse_returns("1.0\n\nabc\n"),
            Err(Error::Data { line: 3, .. })
        ));
        assert!(matches!(parse_returns("1.0\ninf\n"), Err(Error::Data { line: 2, .. })));
        assert!(matches!(parse_returns("0\n"), Err(Error::Data { line: 1, .. })));
        assert!(matches!(parse_returns(""), Err(Error::Data { .. })));
    }

    #[test]
    fn garch_series_round_trips_through_a_file() {
        let sim = garch_paths(&GarchParams::default(), 1500, 1, 0, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("returns.txt");
        write_returns(&path, &sim.past).unwrap();
        let back = read_returns(&path).unwrap();
        assert_eq!(back.values(), sim.past.as_slice());
        assert!(matches!(read_returns(&dir.path().join("missing")), Err(Error::Io(_))));
    }
}
