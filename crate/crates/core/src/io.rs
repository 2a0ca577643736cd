//! File formats: labeled sample CSVs, JSON sidecars, boundary and slice CSVs.
//!
//! Every writer goes through [`write_atomic`], so a reader never observes a
//! half-written artifact.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::boundary::{BoundaryEstimate, ConfidenceSlice};
use crate::sampling::{LabeledSample, ParameterBox};
use crate::scenario::{Outcome, ScenarioParams};

pub const LABELED_HEADER: [&str; 4] = ["speed_ego", "speed_target", "aperture_angle", "outcome"];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
/// Parent directories are created as needed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io_err(path))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn labeled_csv_string(samples: &[LabeledSample]) -> String {
    let mut out = LABELED_HEADER.join(",");
    out.push('\n');
    for s in samples {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            s.params.speed_ego,
            s.params.speed_target,
            s.params.aperture_angle,
            s.outcome.as_str()
        );
    }
    out
}

pub fn write_labeled_csv(path: &Path, samples: &[LabeledSample]) -> Result<(), IoError> {
    write_atomic(path, labeled_csv_string(samples).as_bytes())
}

pub fn read_labeled_csv(path: &Path) -> Result<Vec<LabeledSample>, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_labeled_csv(&text).map_err(|(line, message)| IoError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    })
}

/// Parses labeled CSV text; errors carry the 1-based line number.
pub fn parse_labeled_csv(text: &str) -> Result<Vec<LabeledSample>, (u64, String)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| (1, e.to_string()))?.clone();
    if header.iter().ne(LABELED_HEADER) {
        return Err((
            1,
            format!(
                "expected header `{}`, found `{}`",
                LABELED_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            (line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let number = |i: usize| -> Result<f64, (u64, String)> {
            let field = &record[i];
            let v: f64 = field
                .parse()
                .map_err(|_| (line, format!("{}: `{field}` is not a number", LABELED_HEADER[i])))?;
            if !v.is_finite() {
                return Err((line, format!("{}: `{field}` is not finite", LABELED_HEADER[i])));
            }
            Ok(v)
        };
        let params = ScenarioParams::new(number(0)?, number(1)?, number(2)?);
        let outcome: Outcome = record[3].parse().map_err(|e: String| (line, e))?;
        samples.push(LabeledSample { params, outcome });
    }
    Ok(samples)
}

/// Boundary points in raw units, one column per dimension plus `p`.
pub fn boundary_csv_string(b: &BoundaryEstimate) -> String {
    let mut out: String = b
        .grid
        .bounds
        .dims()
        .iter()
        .map(|d| d.name.as_str())
        .chain(["p"])
        .collect::<Vec<_>>()
        .join(",");
    out.push('\n');
    for (pt, p) in b.points.iter().zip(&b.probabilities) {
        let row: Vec<String> = pt.iter().chain([p]).map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_boundary_csv(path: &Path, b: &BoundaryEstimate) -> Result<(), IoError> {
    write_atomic(path, boundary_csv_string(b).as_bytes())
}

/// Reads a boundary CSV back as `(points, probabilities)`. The header must
/// name `ndim` coordinate columns followed by `p`.
pub fn read_boundary_csv(path: &Path, ndim: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>), IoError> {
    let parse = |line: u64, message: String| IoError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| parse(1, e.to_string()))?;
    if header.len() != ndim + 1 || &header[ndim] != "p" {
        return Err(parse(1, format!("expected {ndim} coordinate columns and `p`")));
    }
    let (mut points, mut probs) = (Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| {
            parse(e.position().map(|p| p.line()).unwrap_or(0), e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let values = record
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| parse(line, format!("`{f}` is not a number"))))
            .collect::<Result<Vec<_>, _>>()?;
        probs.push(values[ndim]);
        points.push(values[..ndim].to_vec());
    }
    Ok((points, probs))
}

pub fn scenarios_csv_string(scenarios: &[ScenarioParams]) -> String {
    let mut out = LABELED_HEADER[..3].join(",");
    out.push('\n');
    for s in scenarios {
        let _ = writeln!(out, "{},{},{}", s.speed_ego, s.speed_target, s.aperture_angle);
    }
    out
}

/// Probability matrix: the first row holds the x axis, the first column the
/// y axis, and the corner cell names both (`y\x`).
pub fn slice_csv_string(slice: &ConfidenceSlice, bounds: &ParameterBox) -> String {
    let (dx, dy) = slice.free_dims;
    let dims = bounds.dims();
    let mut out = format!("{}\\{}", dims[dy].name, dims[dx].name);
    for x in &slice.x_values {
        let _ = write!(out, ",{x}");
    }
    out.push('\n');
    for (y, row) in slice.y_values.iter().zip(&slice.probs) {
        let _ = write!(out, "{y}");
        for p in row {
            let _ = write!(out, ",{p}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples() -> Vec<LabeledSample> {
        vec![
            LabeledSample {
                params: ScenarioParams::new(47.27, 15.76, 11.36),
                outcome: Outcome::Collision,
            },
            LabeledSample {
                params: ScenarioParams::new(46.97, 15.3, 1.0 / 3.0 + 13.0),
                outcome: Outcome::NoCollision,
            },
        ]
    }

    #[test]
    fn labeled_round_trip_is_exact() {
        let text = labeled_csv_string(&samples());
        assert!(text.starts_with("speed_ego,speed_target,aperture_angle,outcome\n"));
        assert!(text.contains(",collision\n") && text.contains(",no_collision\n"));
        assert_eq!(parse_labeled_csv(&text).unwrap(), samples());
    }

    #[test]
    fn parse_errors_name_the_line() {
        let bad = "speed_ego,speed_target,aperture_angle,outcome\n50,10,12,collision\n50,abc,12,collision\n";
        let (line, msg) = parse_labeled_csv(bad).unwrap_err();
        assert_eq!(line, 3);
        assert!(msg.contains("speed_target"), "{msg}");

        let bad = "speed_ego,speed_target,aperture_angle,outcome\n50,10,12,maybe\n";
        assert_eq!(parse_labeled_csv(bad).unwrap_err().0, 2);

        let bad = "speed_ego,speed_target,aperture_angle,outcome\n50,10,12\n";
        assert_eq!(parse_labeled_csv(bad).unwrap_err().0, 2);

        let bad = "a,b,c,d\n";
        assert_eq!(parse_labeled_csv(bad).unwrap_err().0, 1);
    }

    #[test]
    fn file_errors_carry_path_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        write_atomic(&path, b"speed_ego,speed_target,aperture_angle,outcome\n1,2,,collision\n").unwrap();
        let err = read_labeled_csv(&path).unwrap_err().to_string();
        assert!(err.contains("x.csv:2:"), "{err}");
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("a.json");
        write_json(&path, &vec![1, 2]).unwrap();
        write_json(&path, &vec![3]).unwrap();
        let back: Vec<i32> = read_json(&path).unwrap();
        assert_eq!(back, vec![3]);
        let names: Vec<_> = fs::read_dir(path.parent().unwrap())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names.len(), 1);
    }
}
