//! Triangulations of squares and polygonal disks.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix2;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::density::Vec2;
use crate::error::{Error, Result};
use crate::spec_string::SpecString;

/// Domain shapes understood by `build_mesh`.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainSpec {
    /// `[-L, L]²`
    Square { half_width: f64 },
    /// Inscribed polygon of the disk of radius `R` centred at the origin.
    Disk { radius: f64 },
    /// Image of another domain under `x ↦ A x` with `A` stored row-major.
    Mapped { base: Box<DomainSpec>, matrix: [f64; 4] },
}

impl DomainSpec {
    pub fn square(half_width: f64) -> Self {
        Self::Square { half_width }
    }

    pub fn disk(radius: f64) -> Self {
        Self::Disk { radius }
    }

    /// Largest distance from the origin of a domain point.
    pub fn outer_radius(&self) -> f64 {
        match self {
            Self::Square { half_width } => half_width * std::f64::consts::SQRT_2,
            Self::Disk { radius } => *radius,
            Self::Mapped { base, matrix } => {
                let m = Matrix2::new(matrix[0], matrix[1], matrix[2], matrix[3]);
                base.outer_radius() * m.norm()
            }
        }
    }
}

impl fmt::Display for DomainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Square { half_width } => write!(f, "square:L={half_width}"),
            Self::Disk { radius } => write!(f, "disk:R={radius}"),
            Self::Mapped { base, matrix: m } => {
                write!(f, "mapped({base}; [{}, {}; {}, {}])", m[0], m[1], m[2], m[3])
            }
        }
    }
}

impl FromStr for DomainSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let spec = SpecString::parse(s)?;
        match spec.name {
            "square" => {
                spec.expect_keys(&["L"])?;
                Ok(Self::Square { half_width: spec.number("L")? })
            }
            "disk" => {
                spec.expect_keys(&["R"])?;
                Ok(Self::Disk { radius: spec.number("R")? })
            }
            other => Err(Error::Parse(format!("unknown domain `{other}`"))),
        }
    }
}

impl Serialize for DomainSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DomainSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// Area and shape-function gradients of one P1 triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub area: f64,
    pub grads: [Vec2; 3],
    pub centroid: Vec2,
}

impl ElementGeometry {
    fn new(a: Vec2, b: Vec2, c: Vec2) -> Self {
        let twice_area = (b - a).perp(&(c - a));
        let rot = |v: Vec2| Vec2::new(-v.y, v.x);
        Self {
            area: 0.5 * twice_area,
            grads: [rot(c - b) / twice_area, rot(a - c) / twice_area, rot(b - a) / twice_area],
            centroid: (a + b + c) / 3.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub domain: DomainSpec,
    pub h: f64,
    pub nodes: Vec<Vec2>,
    /// Counter-clockwise node triples.
    pub elements: Vec<[usize; 3]>,
    /// Sorted indices of the nodes on the domain boundary.
    pub boundary_nodes: Vec<usize>,
    is_boundary: Vec<bool>,
    geometry: Vec<ElementGeometry>,
}

impl Mesh {
    /// Builds a mesh from raw parts, orienting every element
    /// counter-clockwise.
    pub fn from_parts(
        domain: DomainSpec,
        h: f64,
        nodes: Vec<Vec2>,
        mut elements: Vec<[usize; 3]>,
        boundary_nodes: Vec<usize>,
    ) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::DegenerateDomain("mesh has no elements".into()));
        }
        for e in &mut elements {
            if e.iter().any(|&i| i >= nodes.len()) {
                return Err(Error::InvalidArgument("element refers to a missing node".into()));
            }
            let [a, b, c] = e.map(|i| nodes[i]);
            let signed = (b - a).perp(&(c - a));
            if signed == 0.0 {
                return Err(Error::DegenerateDomain("zero-area element".into()));
            }
            if signed < 0.0 {
                e.swap(1, 2);
            }
        }
        let geometry = elements.iter().map(|e| ElementGeometry::new(nodes[e[0]], nodes[e[1]], nodes[e[2]])).collect();
        let mut is_boundary = vec![false; nodes.len()];
        for &i in &boundary_nodes {
            is_boundary[i] = true;
        }
        let boundary_nodes = (0..nodes.len()).filter(|&i| is_boundary[i]).collect();
        Ok(Self { domain, h, nodes, elements, boundary_nodes, is_boundary, geometry })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn geometry(&self) -> &[ElementGeometry] {
        &self.geometry
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.is_boundary[node]
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| !self.is_boundary[i])
    }

    pub fn total_area(&self) -> f64 {
        self.geometry.iter().map(|g| g.area).sum()
    }

    pub fn max_edge_length(&self) -> f64 {
        self.elements
            .iter()
            .flat_map(|e| {
                [(e[0], e[1]), (e[1], e[2]), (e[2], e[0])].map(|(i, j)| (self.nodes[i] - self.nodes[j]).norm())
            })
            .fold(0.0, f64::max)
    }

    /// Image of the mesh under the linear map `m`, with element orientation
    /// restored.
    pub fn mapped(&self, m: &Matrix2<f64>) -> Result<Self> {
        let det = m.determinant();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::SingularFrame { det });
        }
        let nodes = self.nodes.iter().map(|p| m * p).collect();
        Self::from_parts(
            DomainSpec::Mapped {
                base: Box::new(self.domain.clone()),
                matrix: [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]],
            },
            self.h,
            nodes,
            self.elements.clone(),
            self.boundary_nodes.clone(),
        )
    }

    /// Index of the node nearest to `p` and its distance.
    pub fn nearest_node(&self, p: Vec2) -> (usize, f64) {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, q)| (i, (q - p).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("mesh has nodes")
    }
}

/// Conforming P1 triangulation of `domain` with target edge length `h`.
pub fn build_mesh(domain: &DomainSpec, h: f64) -> Result<Mesh> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::DegenerateDomain(format!("mesh size h must be positive, got {h}")));
    }
    match *domain {
        DomainSpec::Square { half_width } => square_mesh(half_width, h),
        DomainSpec::Disk { radius } => disk_mesh(radius, h),
        DomainSpec::Mapped { .. } => {
            Err(Error::InvalidArgument("mapped domains are produced by Mesh::mapped, not built directly".into()))
        }
    }
}

fn square_mesh(half_width: f64, h: f64) -> Result<Mesh> {
    if !(half_width > 0.0 && half_width.is_finite()) {
        return Err(Error::DegenerateDomain(format!("square half-width must be positive, got {half_width}")));
    }
    let n = (2.0 * half_width / h).ceil().max(1.0) as usize;
    let step = 2.0 * half_width / n as f64;
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
    let mut boundary = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            // pin the boundary coordinates exactly to ±L
            let coord = |k: usize| if k == n { half_width } else { -half_width + k as f64 * step };
            nodes.push(Vec2::new(coord(i), coord(j)));
            if i == 0 || j == 0 || i == n || j == n {
                boundary.push(id(i, j));
            }
        }
    }
    let mut elements = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            elements.push([a, b, c]);
            elements.push([a, c, d]);
        }
    }
    Mesh::from_parts(DomainSpec::square(half_width), h, nodes, elements, boundary)
}

fn disk_mesh(radius: f64, h: f64) -> Result<Mesh> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::DegenerateDomain(format!("disk radius must be positive, got {radius}")));
    }
    let rings = (radius / h).ceil().max(1.0) as usize;
    let mut nodes = vec![Vec2::zeros()];
    let mut ring_start = vec![0usize];
    let mut ring_len = vec![1usize];
    for k in 1..=rings {
        let r = if k == rings { radius } else { radius * k as f64 / rings as f64 };
        let count = ((TAU * r / h).ceil() as usize).max(6);
        ring_start.push(nodes.len());
        ring_len.push(count);
        for i in 0..count {
            let phi = TAU * i as f64 / count as f64;
            nodes.push(Vec2::new(r * phi.cos(), r * phi.sin()));
        }
    }
    let mut elements = Vec::new();
    let n1 = ring_len[1];
    for i in 0..n1 {
        elements.push([0, ring_start[1] + i, ring_start[1] + (i + 1) % n1]);
    }
    for k in 1..rings {
        let (s_in, n_in) = (ring_start[k], ring_len[k]);
        let (s_out, n_out) = (ring_start[k + 1], ring_len[k + 1]);
        let node_in = |i: usize| s_in + i % n_in;
        let node_out = |j: usize| s_out + j % n_out;
        let (mut i, mut j) = (0usize, 0usize);
        // zip the two rings, always closing the shorter diagonal
        while i < n_in || j < n_out {
            let advance_inner = if j == n_out {
                true
            } else if i == n_in {
                false
            } else {
                let d_in = (nodes[node_in(i + 1)] - nodes[node_out(j)]).norm_squared();
                let d_out = (nodes[node_in(i)] - nodes[node_out(j + 1)]).norm_squared();
                d_in <= d_out
            };
            if advance_inner {
                elements.push([node_in(i), node_out(j), node_in(i + 1)]);
                i += 1;
            } else {
                elements.push([node_in(i), node_out(j), node_out(j + 1)]);
                j += 1;
            }
        }
    }
    let boundary = (ring_start[rings]..nodes.len()).collect();
    Mesh::from_parts(DomainSpec::disk(radius), h, nodes, elements, boundary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unit_square_at_h_one() {
        let m = build_mesh(&DomainSpec::square(1.0), 1.0).unwrap();
        assert_eq!(m.node_count(), 9);
        assert_eq!(m.element_count(), 8);
        assert_eq!(m.boundary_nodes.len(), 8);
        assert_relative_eq!(m.total_area(), 4.0, epsilon = 1e-14);
    }

    #[test]
    fn square_element_count() {
        let m = build_mesh(&DomainSpec::square(2.0), 0.1).unwrap();
        assert_eq!(m.element_count(), 2 * 40 * 40);
        assert!(m.max_edge_length() <= 1.5 * 0.1);
    }

    #[test]
    fn disk_containment_and_quality() {
        for (r, h) in [(1.0, 0.5), (2.0, 0.1), (1.0, 0.3), (0.5, 1.0)] {
            let m = build_mesh(&DomainSpec::disk(r), h).unwrap();
            assert!(m.nodes.iter().all(|p| p.norm() <= r + 1e-12));
            assert!(m.geometry().iter().all(|g| g.area > 0.0));
            assert!(m.max_edge_length() <= 1.5 * h, "{r} {h}: {}", m.max_edge_length());
            for &b in &m.boundary_nodes {
                assert_relative_eq!(m.nodes[b].norm(), r, max_relative = 1e-12);
            }
            assert!(m.interior_nodes().all(|i| m.nodes[i].norm() < r - 1e-9));
            // area of the inscribed polygon approaches πR²
            let n = m.boundary_nodes.len() as f64;
            let polygon = 0.5 * n * r * r * (TAU / n).sin();
            assert_relative_eq!(m.total_area(), polygon, max_relative = 1e-10);
        }
    }

    #[test]
    fn disk_is_conforming() {
        // every interior edge is shared by exactly two elements
        let m = build_mesh(&DomainSpec::disk(1.0), 0.2).unwrap();
        let mut edges = std::collections::HashMap::new();
        for e in &m.elements {
            for (a, b) in [(e[0], e[1]), (e[1], e[2]), (e[2], e[0])] {
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        for ((a, b), count) in edges {
            let on_boundary = m.is_boundary(a) && m.is_boundary(b);
            assert_eq!(count, if on_boundary { 1 } else { 2 }, "edge {a}-{b}");
        }
    }

    #[test]
    fn rejects_degenerate_domains() {
        assert!(matches!(build_mesh(&DomainSpec::square(0.0), 0.1), Err(Error::DegenerateDomain(_))));
        assert!(matches!(build_mesh(&DomainSpec::disk(-1.0), 0.1), Err(Error::DegenerateDomain(_))));
        assert!(matches!(build_mesh(&DomainSpec::disk(1.0), -0.1), Err(Error::DegenerateDomain(_))));
    }

    #[test]
    fn mapped_mesh_keeps_orientation() {
        let m = build_mesh(&DomainSpec::square(1.0), 0.5).unwrap();
        let reflected = m.mapped(&Matrix2::new(1.0, 1.0, 1.0, -1.0)).unwrap();
        assert!(reflected.geometry().iter().all(|g| g.area > 0.0));
        assert_relative_eq!(reflected.total_area(), 8.0, max_relative = 1e-12);
        assert!(m.mapped(&Matrix2::new(1.0, 2.0, 2.0, 4.0)).is_err());
    }

    #[test]
    fn domain_spec_round_trip() {
        for s in ["square:L=2", "disk:R=100"] {
            assert_eq!(s.parse::<DomainSpec>().unwrap().to_string(), s);
        }
        assert!("annulus:R=1".parse::<DomainSpec>().is_err());
    }
}
