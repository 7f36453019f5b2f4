//! Closed tours, validation, cost, and the tour file format.
//!
//! Tour files are plain text: a header `TOUR <n> <length>` followed by one
//! 0-based node index per line.

use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

use crate::geom;
use crate::instance::Instance;
use crate::tsplib::Metric;

/// A closed Hamiltonian cycle, stored as a node order read cyclically.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tour(Vec<usize>);

impl Tour {
    /// Wraps `order` after checking it is a permutation of `0..n`.
    pub fn new(order: Vec<usize>, n: usize) -> Result<Self, ViolationReport> {
        check_permutation(&order, n)?;
        Ok(Self(order))
    }

    /// Wraps `order` without validation. Callers must uphold the permutation invariant.
    pub(crate) fn from_order_unchecked(order: Vec<usize>) -> Self {
        Self(order)
    }

    pub fn order(&self) -> &[usize] {
        &self.0
    }

    pub fn into_order(self) -> Vec<usize> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// What is wrong with a candidate tour.
#[derive(Clone, Debug, Default, PartialEq, Eq, Error, Serialize)]
pub struct ViolationReport {
    /// Indices listed more than once.
    pub duplicate: Vec<usize>,
    /// Indices in `0..n` never listed.
    pub missing: Vec<usize>,
    /// Listed indices `>= n`.
    pub out_of_range: Vec<usize>,
}

impl ViolationReport {
    pub fn is_ok(&self) -> bool {
        self.duplicate.is_empty() && self.missing.is_empty() && self.out_of_range.is_empty()
    }
}

impl fmt::Display for ViolationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "invalid tour: duplicate {:?}, missing {:?}, out-of-range {:?}",
            self.duplicate, self.missing, self.out_of_range
        )
    }
}

/// Checks that `order` lists every index of `0..n` exactly once.
pub fn check_permutation(order: &[usize], n: usize) -> Result<(), ViolationReport> {
    let mut seen = vec![0u32; n];
    let mut report = ViolationReport::default();
    for &i in order {
        if i >= n {
            report.out_of_range.push(i);
        } else {
            seen[i] += 1;
            if seen[i] == 2 {
                report.duplicate.push(i);
            }
        }
    }
    report.missing = (0..n).filter(|&i| seen[i] == 0).collect();
    report.duplicate.sort_unstable();
    if report.is_ok() {
        Ok(())
    } else {
        Err(report)
    }
}

pub fn validate_tour(inst: &Instance, order: &[usize]) -> Result<(), ViolationReport> {
    check_permutation(order, inst.len())
}

/// Euclidean length of the cycle `order`, summed from position 0 forward.
pub fn tour_length(inst: &Instance, order: &[usize]) -> Result<f64, ViolationReport> {
    validate_tour(inst, order)?;
    Ok(geom::cycle_length(inst.nodes(), order))
}

pub fn tour_length_with(inst: &Instance, order: &[usize], metric: Metric) -> Result<f64, ViolationReport> {
    validate_tour(inst, order)?;
    let pts = inst.nodes();
    let n = order.len();
    Ok((0..n)
        .map(|i| metric.dist(&pts[order[i]], &pts[order[(i + 1) % n]]))
        .sum())
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum TourFileError {
    #[error("line {line}: expected header `TOUR <n> <length>`")]
    BadHeader { line: usize },
    #[error("line {line}: invalid node index {text:?}")]
    BadIndex { line: usize, text: String },
    #[error("header declares {declared} nodes but {found} indices follow")]
    CountMismatch { declared: usize, found: usize },
    #[error("empty tour file")]
    Empty,
}

/// A parsed tour file. The order is not validated against any instance.
#[derive(Clone, Debug, PartialEq)]
pub struct TourFile {
    pub order: Vec<usize>,
    pub length: f64,
}

pub fn write_tour_file(order: &[usize], length: f64) -> String {
    let mut out = String::with_capacity(order.len() * 7 + 32);
    let _ = writeln!(out, "TOUR {} {:?}", order.len(), length);
    for i in order {
        let _ = writeln!(out, "{i}");
    }
    out
}

pub fn parse_tour_file(text: &str) -> Result<TourFile, TourFileError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines.next().ok_or(TourFileError::Empty)?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    let bad = TourFileError::BadHeader { line: hline };
    if toks.len() != 3 || toks[0] != "TOUR" {
        return Err(bad);
    }
    let declared: usize = toks[1].parse().map_err(|_| bad.clone())?;
    let length: f64 = toks[2].parse().map_err(|_| bad.clone())?;
    let order = lines
        .map(|(line, l)| {
            l.parse::<usize>().map_err(|_| TourFileError::BadIndex {
                line,
                text: l.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if order.len() != declared {
        return Err(TourFileError::CountMismatch {
            declared,
            found: order.len(),
        });
    }
    Ok(TourFile { order, length })
}
