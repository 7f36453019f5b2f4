//! TSPLIB reader and writer for `EUC_2D` node-coordinate problems.
//!
//! Distances elsewhere in the crate are true Euclidean reals. [`Metric::TsplibRounded`]
//! reproduces the integer `nint` convention of the TSPLIB format for parity with
//! external solvers that use it.

use std::fmt::Write as _;

use thiserror::Error;

use crate::geom::Point;
use crate::instance::Instance;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    /// 1-based line number; points one past the last line for end-of-input errors.
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseErrorKind {
    #[error("malformed header line {0:?}")]
    MalformedHeader(String),
    #[error("missing {0} field")]
    MissingField(&'static str),
    #[error("missing NODE_COORD_SECTION")]
    MissingCoordSection,
    #[error("dimension mismatch: DIMENSION is {declared} but {found} coordinate lines were read")]
    DimensionMismatch { declared: usize, found: usize },
    #[error("unsupported EDGE_WEIGHT_TYPE {0:?} (only EUC_2D)")]
    UnsupportedWeightType(String),
    #[error("unsupported TYPE {0:?} (only TSP)")]
    UnsupportedProblemType(String),
    #[error("invalid number {0:?}")]
    BadNumber(String),
    #[error("malformed coordinate line {0:?}")]
    BadCoordLine(String),
    #[error("node id {id} outside 1..={dimension}")]
    NodeIdOutOfRange { id: usize, dimension: usize },
    #[error("node id {0} listed twice")]
    DuplicateNode(usize),
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("DIMENSION is 0")]
    Empty,
}

impl ParseError {
    fn at(line: usize, kind: ParseErrorKind) -> Self {
        Self { line, kind }
    }
}

/// Distance convention.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Metric {
    #[default]
    Euclidean,
    /// TSPLIB `EUC_2D`: Euclidean distance rounded to the nearest integer.
    TsplibRounded,
}

impl Metric {
    pub fn dist(&self, a: &Point, b: &Point) -> f64 {
        match self {
            Metric::Euclidean => a.dist(b),
            Metric::TsplibRounded => (a.dist(b) + 0.5).floor(),
        }
    }
}

fn split_header(line: &str) -> (&str, Option<&str>) {
    match line.split_once(':') {
        Some((k, v)) => (k.trim(), Some(v.trim())),
        None => (line.trim(), None),
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64, ParseError> {
    let v: f64 = tok
        .parse()
        .map_err(|_| ParseError::at(line, ParseErrorKind::BadNumber(tok.to_string())))?;
    if !v.is_finite() {
        return Err(ParseError::at(line, ParseErrorKind::NonFinite));
    }
    Ok(v)
}

/// Parses a TSPLIB `TSP` problem with `EDGE_WEIGHT_TYPE: EUC_2D`.
///
/// File node ids `1..=DIMENSION` map to instance indices `0..DIMENSION`.
pub fn parse_tsplib(text: &str) -> Result<Instance, ParseError> {
    let mut name = String::new();
    let mut dimension: Option<(usize, usize)> = None;
    let mut weight_type_seen = false;
    let mut coords: Vec<(usize, usize, Point)> = Vec::new();
    let mut in_coords = false;
    let mut in_other_section = false;
    let mut saw_section = false;
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed == "EOF" {
            break;
        }
        let first = trimmed.chars().next().unwrap_or(' ');
        let numeric = first.is_ascii_digit() || first == '-' || first == '+' || first == '.';
        if in_other_section && numeric {
            continue;
        }
        in_other_section = false;
        if in_coords {
            if numeric {
                let toks: Vec<&str> = trimmed.split_whitespace().collect();
                if toks.len() != 3 {
                    return Err(ParseError::at(
                        line,
                        ParseErrorKind::BadCoordLine(trimmed.to_string()),
                    ));
                }
                let id: usize = toks[0].parse().map_err(|_| {
                    ParseError::at(line, ParseErrorKind::BadNumber(toks[0].to_string()))
                })?;
                let p = Point::new(parse_f64(toks[1], line)?, parse_f64(toks[2], line)?);
                coords.push((line, id, p));
                continue;
            }
            // Any other section ends the coordinate block.
            in_coords = false;
        }
        let (key, value) = split_header(trimmed);
        match (key, value) {
            ("NODE_COORD_SECTION", _) => {
                in_coords = true;
                saw_section = true;
            }
            ("NAME", Some(v)) => name = v.to_string(),
            ("TYPE", Some(v)) => {
                if v != "TSP" {
                    return Err(ParseError::at(
                        line,
                        ParseErrorKind::UnsupportedProblemType(v.to_string()),
                    ));
                }
            }
            ("DIMENSION", Some(v)) => {
                let d: usize = v
                    .parse()
                    .map_err(|_| ParseError::at(line, ParseErrorKind::BadNumber(v.to_string())))?;
                dimension = Some((d, line));
            }
            ("EDGE_WEIGHT_TYPE", Some(v)) => {
                if v != "EUC_2D" {
                    return Err(ParseError::at(
                        line,
                        ParseErrorKind::UnsupportedWeightType(v.to_string()),
                    ));
                }
                weight_type_seen = true;
            }
            (_, Some(_)) => {} // COMMENT, DISPLAY_DATA_TYPE, ...
            (_, None) if key.ends_with("_SECTION") => in_other_section = true,
            (_, None) => {
                return Err(ParseError::at(
                    line,
                    ParseErrorKind::MalformedHeader(trimmed.to_string()),
                ))
            }
        }
    }

    let end = last_line + 1;
    let (dimension, _) = dimension.ok_or(ParseError::at(end, ParseErrorKind::MissingField("DIMENSION")))?;
    if !weight_type_seen {
        return Err(ParseError::at(
            end,
            ParseErrorKind::MissingField("EDGE_WEIGHT_TYPE"),
        ));
    }
    if !saw_section {
        return Err(ParseError::at(end, ParseErrorKind::MissingCoordSection));
    }
    if coords.len() != dimension {
        let line = coords.last().map_or(end, |c| c.0);
        return Err(ParseError::at(
            line,
            ParseErrorKind::DimensionMismatch {
                declared: dimension,
                found: coords.len(),
            },
        ));
    }
    let mut nodes: Vec<Option<Point>> = vec![None; dimension];
    for &(line, id, p) in &coords {
        if id == 0 || id > dimension {
            return Err(ParseError::at(
                line,
                ParseErrorKind::NodeIdOutOfRange { id, dimension },
            ));
        }
        if nodes[id - 1].replace(p).is_some() {
            return Err(ParseError::at(line, ParseErrorKind::DuplicateNode(id)));
        }
    }
    let nodes: Vec<Point> = nodes.into_iter().map(|p| p.expect("ids checked")).collect();
    Instance::new(name, nodes).map_err(|_| ParseError::at(end, ParseErrorKind::Empty))
}

/// Serializes `inst` as a TSPLIB `EUC_2D` problem. Coordinates use the shortest
/// representation that parses back to the same `f64`.
pub fn write_tsplib(inst: &Instance) -> String {
    let mut out = String::new();
    let name = if inst.name().is_empty() { "unnamed" } else { inst.name() };
    let _ = writeln!(out, "NAME : {name}");
    let _ = writeln!(out, "TYPE : TSP");
    let _ = writeln!(out, "DIMENSION : {}", inst.len());
    let _ = writeln!(out, "EDGE_WEIGHT_TYPE : EUC_2D");
    let _ = writeln!(out, "NODE_COORD_SECTION");
    for (i, p) in inst.nodes().iter().enumerate() {
        let _ = writeln!(out, "{} {:?} {:?}", i + 1, p.x, p.y);
    }
    out.push_str("EOF\n");
    out
}
