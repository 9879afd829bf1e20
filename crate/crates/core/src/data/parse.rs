use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// One observation: pedestrian `ped_id` at `(x, y)` in time slot `frame_id`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub frame_id: i64,
    pub ped_id: i64,
    pub x: f64,
    pub y: f64,
}

/// Reads a whitespace-separated `frame ped x y` file.
///
/// Ids may be written as floats (`780.0`) as in the public releases, but
/// must be integral. The result is sorted by `(frame_id, ped_id)`.
pub fn parse_raw(path: &Path) -> Result<Vec<TrackPoint>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_str(&text, &path.display().to_string())
}

/// Same as [`parse_raw`] over in-memory text; `origin` labels errors.
pub fn parse_str(text: &str, origin: &str) -> Result<Vec<TrackPoint>> {
    let mut points = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: origin.to_string(),
            line: idx + 1,
            msg,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", fields.len())));
        }
        let num = |i: usize, what: &str| -> Result<f64> {
            let v: f64 = fields[i]
                .parse()
                .map_err(|_| err(format!("{what} `{}` is not a number", fields[i])))?;
            if !v.is_finite() {
                return Err(err(format!("{what} `{}` is not finite", fields[i])));
            }
            Ok(v)
        };
        let id = |i: usize, what: &str| -> Result<i64> {
            let v = num(i, what)?;
            if v.fract() != 0.0 || v.abs() > 9.0e15 {
                return Err(err(format!("{what} `{}` is not an integer", fields[i])));
            }
            Ok(v as i64)
        };
        let frame_id = id(0, "frame id")?;
        if frame_id < 0 {
            return Err(err(format!("negative frame id {frame_id}")));
        }
        points.push(TrackPoint {
            frame_id,
            ped_id: id(1, "pedestrian id")?,
            x: num(2, "x")?,
            y: num(3, "y")?,
        });
    }
    sort_points(&mut points);
    Ok(points)
}

pub(crate) fn sort_points(points: &mut [TrackPoint]) {
    points.sort_by_key(|p| (p.frame_id, p.ped_id));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_lines_give_two_points() {
        let pts = parse_str("0 1 0.0 0.0\n10 1 1.0 1.0\n", "t").unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[1], TrackPoint { frame_id: 10, ped_id: 1, x: 1.0, y: 1.0 });
    }

    #[test]
    fn bad_number_reports_line() {
        let err = parse_str("0 1 abc 0.0\n", "t").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_str("0 1 0 0\n\n5 2 1.0\n", "t").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn empty_input_is_not_an_error() {
        assert!(parse_str("", "t").unwrap().is_empty());
        assert!(parse_str("\n  \n", "t").unwrap().is_empty());
    }

    #[test]
    fn float_ids_and_tabs_accepted() {
        let pts = parse_str("780.0\t1.0\t8.46\t3.59\n770.0\t2.0\t1.0\t2.0\n", "t").unwrap();
        assert_eq!(pts[0].frame_id, 770);
        assert_eq!(pts[1].ped_id, 1);
    }

    #[test]
    fn fractional_or_negative_ids_rejected() {
        assert!(parse_str("1.5 1 0 0", "t").is_err());
        assert!(parse_str("-10 1 0 0", "t").is_err());
        assert!(parse_str("0 1 nan 0", "t").is_err());
    }
}
