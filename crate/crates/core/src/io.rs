//! Text formats: point pattern CSV, window files, JSON test reports and
//! long-format grid CSV. Floats are written in shortest round-trip form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chisq::ChiSqResult;
use crate::error::{Error, Result};
use crate::geometry::{Grid3, Point, PointPattern, Region, Window};
use crate::permutation::TestOutcome;
use crate::stats::{EvaluationMask, Statistic};

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("not a number: {field:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            msg: format!("non-finite value {field:?}"),
        });
    }
    Ok(v)
}

/// Parses `x,y,t` CSV text. Line numbers in errors count the header as 1.
pub fn parse_points_csv(text: &str) -> Result<Vec<Point>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
    if header.iter().collect::<Vec<_>>() != ["x", "y", "t"] {
        return Err(Error::Parse {
            line: 1,
            msg: format!("header must be exactly x,y,t, found {:?}", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 3 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 3 fields, found {}", rec.len()),
            });
        }
        points.push(Point::new(
            parse_f64(&rec[0], line)?,
            parse_f64(&rec[1], line)?,
            parse_f64(&rec[2], line)?,
        ));
    }
    Ok(points)
}

/// Reads a pattern file and validates it against `window`.
pub fn read_pattern(path: &Path, window: &Window) -> Result<PointPattern> {
    PointPattern::new(parse_points_csv(&fs::read_to_string(path)?)?, window.clone())
}

pub fn format_points_csv(points: &[Point]) -> String {
    let mut out = String::from("x,y,t\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.x, p.y, p.t);
    }
    out
}

pub fn write_pattern(path: &Path, pattern: &PointPattern) -> Result<()> {
    fs::write(path, format_points_csv(pattern.points()))?;
    Ok(())
}

/// Parses a window description:
///
/// ```text
/// rect xmin xmax ymin ymax tmin tmax
/// ```
///
/// or `poly tmin tmax` followed by one `x y` vertex per line. Blank lines
/// and `#` comments are ignored.
pub fn parse_window(text: &str) -> Result<Window> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (line, head) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty window file".into(),
    })?;
    let fields: Vec<&str> = head.split_whitespace().collect();
    let nums = |fs: &[&str], line: usize| fs.iter().map(|f| parse_f64(f, line)).collect::<Result<Vec<f64>>>();
    match fields[0] {
        "rect" if fields.len() == 7 => {
            let v = nums(&fields[1..], line)?;
            if let Some((l, _)) = lines.next() {
                return Err(Error::Parse {
                    line: l,
                    msg: "unexpected content after rect line".into(),
                });
            }
            Window::rect(v[0], v[1], v[2], v[3], v[4], v[5])
        }
        "poly" if fields.len() == 3 => {
            let t = nums(&fields[1..], line)?;
            let mut vertices = Vec::new();
            for (l, text) in lines {
                let f: Vec<&str> = text.split_whitespace().collect();
                if f.len() != 2 {
                    return Err(Error::Parse {
                        line: l,
                        msg: format!("vertex line needs 2 numbers, found {}", f.len()),
                    });
                }
                let v = nums(&f, l)?;
                vertices.push([v[0], v[1]]);
            }
            Window::polygon(vertices, t[0], t[1])
        }
        _ => Err(Error::Parse {
            line,
            msg: "expected `rect xmin xmax ymin ymax tmin tmax` or `poly tmin tmax`".into(),
        }),
    }
}

pub fn format_window(window: &Window) -> String {
    let (t0, t1) = window.time_range();
    match window.region() {
        Region::Rect {
            xmin,
            xmax,
            ymin,
            ymax,
        } => format!("rect {xmin} {xmax} {ymin} {ymax} {t0} {t1}\n"),
        Region::Polygon(vs) => {
            let mut out = format!("poly {t0} {t1}\n");
            for [x, y] in vs {
                let _ = writeln!(out, "{x} {y}");
            }
            out
        }
    }
}

pub fn read_window(path: &Path) -> Result<Window> {
    parse_window(&fs::read_to_string(path)?)
}

/// Plot coordinates of the cells a test function refers to; missing axes
/// are `None` (spatial-only or temporal-only functions).
pub fn sample_coordinates(stat: Statistic, grid: &Grid3, mask: &EvaluationMask) -> Vec<[Option<f64>; 3]> {
    match stat {
        Statistic::S => mask
            .cells()
            .iter()
            .map(|&c| {
                let (x, y, t) = grid.cell_center(c);
                [Some(x), Some(y), Some(t)]
            })
            .collect(),
        Statistic::SSpace => mask
            .spatial_cells()
            .iter()
            .map(|&s| {
                let (x, y) = grid.spatial_center(s);
                [Some(x), Some(y), None]
            })
            .collect(),
        Statistic::STime => mask.time_slices().iter().map(|&it| [None, None, Some(grid.t(it))]).collect(),
        Statistic::Sd => Vec::new(),
    }
}

/// Long-format `x,y,t,value`; absent coordinates are left empty.
pub fn format_grid_csv(coords: &[[Option<f64>; 3]], values: &[f64]) -> String {
    assert_eq!(coords.len(), values.len(), "one value per coordinate");
    let mut out = String::from("x,y,t,value\n");
    for (c, v) in coords.iter().zip(values) {
        for a in c {
            if let Some(a) = a {
                let _ = write!(out, "{a}");
            }
            out.push(',');
        }
        let _ = writeln!(out, "{v}");
    }
    out
}

/// Parallel per-cell arrays of an envelope test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeArrays {
    pub data: Vec<f64>,
    pub low: Vec<f64>,
    pub upp: Vec<f64>,
    pub exit_codes: Vec<i8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSqSummary {
    pub statistic: f64,
    pub df: usize,
    pub cells: [usize; 3],
    pub counts: Vec<Vec<u64>>,
    /// Cells with expected count below 5.
    pub low_expected: usize,
}

/// Serialized result of one test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub test: String,
    pub statistic: String,
    pub p_value: f64,
    pub alpha: f64,
    pub rejects: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub grid: Option<[usize; 3]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub replicates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bandwidths: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub envelope: Option<EnvelopeArrays>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub chisq: Option<ChiSqSummary>,
}

impl TestReport {
    pub fn from_outcome(test: &str, stat: Statistic, outcome: &TestOutcome) -> Self {
        Self {
            test: test.into(),
            statistic: stat.tag().into(),
            p_value: outcome.p_value(),
            alpha: outcome.alpha(),
            rejects: outcome.rejects(),
            grid: None,
            seed: None,
            replicates: None,
            bandwidths: None,
            envelope: outcome.envelope().map(|e| EnvelopeArrays {
                data: e.data.clone(),
                low: e.low.clone(),
                upp: e.upp.clone(),
                exit_codes: e.exit_codes(),
            }),
            chisq: None,
        }
    }

    pub fn from_chisq(result: &ChiSqResult, cells: [usize; 3], alpha: f64) -> Self {
        Self {
            test: "chisq".into(),
            statistic: "chisq".into(),
            p_value: result.p_value,
            alpha,
            rejects: result.rejects(alpha),
            grid: None,
            seed: None,
            replicates: None,
            bandwidths: None,
            envelope: None,
            chisq: Some(ChiSqSummary {
                statistic: result.statistic,
                df: result.df,
                cells,
                counts: result.counts.clone(),
                low_expected: result.low_expected,
            }),
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json(value)?)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
