//! Problem instances: immutable coordinate sets with a cached bounding box.

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use thiserror::Error;

use crate::geom::{Point, Rect};

/// Smallest instance accepted by the solve entry points.
pub const MIN_SOLVE_NODES: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum InstanceError {
    #[error("instance has no nodes")]
    Empty,
    #[error("node {index} has a non-finite coordinate")]
    NonFinite { index: usize },
    #[error("need at least {MIN_SOLVE_NODES} nodes, got {0}")]
    TooFewNodes(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    name: String,
    nodes: Vec<Point>,
    bbox: Rect,
}

impl Instance {
    pub fn new(name: impl Into<String>, nodes: Vec<Point>) -> Result<Self, InstanceError> {
        if let Some(index) = nodes.iter().position(|p| !p.is_finite()) {
            return Err(InstanceError::NonFinite { index });
        }
        let bbox = Rect::bounding(&nodes).ok_or(InstanceError::Empty)?;
        Ok(Self {
            name: name.into(),
            nodes,
            bbox,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> Point {
        self.nodes[i]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn bbox(&self) -> Rect {
        self.bbox
    }

    #[inline]
    pub fn dist(&self, a: usize, b: usize) -> f64 {
        self.nodes[a].dist(&self.nodes[b])
    }

    pub(crate) fn require_solvable(&self) -> Result<(), InstanceError> {
        if self.len() < MIN_SOLVE_NODES {
            return Err(InstanceError::TooFewNodes(self.len()));
        }
        Ok(())
    }
}

/// Seeded generator used for every random choice in the crate: PCG-64
/// (XSL-RR 128/64) seeded through `SeedableRng::seed_from_u64`, which is
/// platform independent.
pub fn rng_from_seed(seed: u64) -> Pcg64 {
    Pcg64::seed_from_u64(seed)
}

/// `n` points drawn i.i.d. uniform on the unit square, x then y per node.
pub fn generate_random(n: usize, seed: u64) -> Result<Instance, InstanceError> {
    if n < MIN_SOLVE_NODES {
        return Err(InstanceError::TooFewNodes(n));
    }
    let mut rng = rng_from_seed(seed);
    let nodes = (0..n)
        .map(|_| {
            let x: f64 = rng.random();
            let y: f64 = rng.random();
            Point::new(x, y)
        })
        .collect();
    Instance::new(format!("rand{n}_s{seed}"), nodes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_is_deterministic_and_in_unit_square() {
        let a = generate_random(1000, 7).unwrap();
        let b = generate_random(1000, 7).unwrap();
        assert_eq!(a.len(), 1000);
        for (p, q) in a.nodes().iter().zip(b.nodes()) {
            assert_eq!(p.x.to_bits(), q.x.to_bits());
            assert_eq!(p.y.to_bits(), q.y.to_bits());
            assert!((0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y));
        }
        assert_ne!(generate_random(1000, 8).unwrap().nodes(), a.nodes());
    }

    #[test]
    fn random_rejects_tiny_n() {
        assert_eq!(generate_random(2, 1), Err(InstanceError::TooFewNodes(2)));
    }

    #[test]
    fn bbox_is_componentwise_extrema() {
        let inst = Instance::new(
            "t",
            vec![Point::new(0.0, 0.0), Point::new(0.0, 1.0), Point::new(1.0, 0.0)],
        )
        .unwrap();
        let b = inst.bbox();
        assert_eq!((b.x_min, b.x_max, b.y_min, b.y_max), (0.0, 1.0, 0.0, 1.0));
    }

    #[test]
    fn rejects_nan() {
        let err = Instance::new("t", vec![Point::new(0.0, f64::NAN)]).unwrap_err();
        assert_eq!(err, InstanceError::NonFinite { index: 0 });
        assert_eq!(Instance::new("t", vec![]).unwrap_err(), InstanceError::Empty);
    }
}
