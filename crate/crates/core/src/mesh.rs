//! Structured 1D/2D meshes with a tagged boundary partition.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Boundary part: clamped (`Gamma1`), loaded by tractions (`Gamma2`) or in
/// frictional contact (`Gamma3`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    Gamma1,
    Gamma2,
    Gamma3,
}

impl BoundaryTag {
    /// Corner nodes go to the tag with the higher priority: Γ₁ > Γ₃ > Γ₂.
    fn priority(self) -> u8 {
        match self {
            BoundaryTag::Gamma1 => 3,
            BoundaryTag::Gamma3 => 2,
            BoundaryTag::Gamma2 => 1,
        }
    }
}

impl FromStr for BoundaryTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gamma1" | "1" => Ok(BoundaryTag::Gamma1),
            "gamma2" | "2" => Ok(BoundaryTag::Gamma2),
            "gamma3" | "3" => Ok(BoundaryTag::Gamma3),
            _ => Err(Error::InvalidMesh(format!("unknown boundary tag `{s}`"))),
        }
    }
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BoundaryTag::Gamma1 => "gamma1",
            BoundaryTag::Gamma2 => "gamma2",
            BoundaryTag::Gamma3 => "gamma3",
        };
        f.write_str(s)
    }
}

/// Sides of the interval (`Left`, `Right`) or of the rectangle (all four).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            "bottom" => Ok(Side::Bottom),
            "top" => Ok(Side::Top),
            _ => Err(Error::InvalidMesh(format!("unknown side `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshSpec {
    pub dimension: usize,
    pub extents: [f64; 2],
    pub resolution: [usize; 2],
    pub partition: Vec<(Side, BoundaryTag)>,
}

impl MeshSpec {
    pub fn interval(length: f64, cells: usize, left: BoundaryTag, right: BoundaryTag) -> Self {
        Self {
            dimension: 1,
            extents: [length, 0.0],
            resolution: [cells, 1],
            partition: vec![(Side::Left, left), (Side::Right, right)],
        }
    }

    /// Unit interval clamped at `x = 0` with the given tag at `x = 1`.
    pub fn unit_interval(cells: usize, right: BoundaryTag) -> Self {
        Self::interval(1.0, cells, BoundaryTag::Gamma1, right)
    }

    /// Rectangle `[0, lx] x [0, ly]`; `tags` are for left, right, bottom, top.
    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize, tags: [BoundaryTag; 4]) -> Self {
        Self {
            dimension: 2,
            extents: [lx, ly],
            resolution: [nx, ny],
            partition: Side::ALL.iter().copied().zip(tags).collect(),
        }
    }

    fn sides(&self) -> &'static [Side] {
        if self.dimension == 1 {
            &Side::ALL[..2]
        } else {
            &Side::ALL
        }
    }

    fn tag_of(&self, side: Side) -> Option<BoundaryTag> {
        self.partition.iter().find(|(s, _)| *s == side).map(|&(_, t)| t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension != 1 && self.dimension != 2 {
            return Err(Error::InvalidMesh(format!(
                "dimension must be 1 or 2, got {}",
                self.dimension
            )));
        }
        let d = self.dimension;
        for axis in 0..d {
            if self.resolution[axis] == 0 {
                return Err(Error::InvalidMesh("resolution must be at least 1 per axis".into()));
            }
            if !(self.extents[axis] > 0.0) || !self.extents[axis].is_finite() {
                return Err(Error::InvalidMesh("extents must be positive".into()));
            }
        }
        for &(side, _) in &self.partition {
            if !self.sides().contains(&side) {
                return Err(Error::InvalidMesh(format!("side {side:?} does not exist in {d}D")));
            }
            if self.partition.iter().filter(|(s, _)| *s == side).count() != 1 {
                return Err(Error::InvalidMesh(format!("side {side:?} tagged more than once")));
            }
        }
        for &side in self.sides() {
            if self.tag_of(side).is_none() {
                return Err(Error::InvalidMesh(format!("side {side:?} carries no boundary tag")));
            }
        }
        if !self.partition.iter().any(|&(_, t)| t == BoundaryTag::Gamma1) {
            return Err(Error::InvalidMesh("Gamma1 must have positive measure".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Element {
    Segment([usize; 2]),
    Triangle([usize; 3]),
}

impl Element {
    pub fn nodes(&self) -> &[usize] {
        match self {
            Element::Segment(n) => n,
            Element::Triangle(n) => n,
        }
    }
}

/// A boundary facet: an end point in 1D, an edge in 2D.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Facet {
    Point(usize),
    Edge([usize; 2]),
}

impl Facet {
    pub fn nodes(&self) -> &[usize] {
        match self {
            Facet::Point(n) => std::slice::from_ref(n),
            Facet::Edge(n) => n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryFacet {
    pub facet: Facet,
    pub tag: BoundaryTag,
    pub side: Side,
    pub measure: f64,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    dimension: usize,
    nodes: Vec<Point>,
    elements: Vec<Element>,
    measures: Vec<f64>,
    facets: Vec<BoundaryFacet>,
    node_tags: Vec<Option<BoundaryTag>>,
}

pub fn build_mesh(spec: &MeshSpec) -> Result<Mesh> {
    spec.validate()?;
    let mesh = if spec.dimension == 1 {
        build_interval(spec)
    } else {
        build_rectangle(spec)
    };
    if mesh.nodes_with_tag(BoundaryTag::Gamma1).next().is_none() {
        return Err(Error::InvalidMesh("Gamma1 node set is empty".into()));
    }
    Ok(mesh)
}

fn build_interval(spec: &MeshSpec) -> Mesh {
    let n = spec.resolution[0];
    let len = spec.extents[0];
    let nodes: Vec<Point> = (0..=n).map(|i| [len * i as f64 / n as f64, 0.0]).collect();
    let elements: Vec<Element> = (0..n).map(|i| Element::Segment([i, i + 1])).collect();
    let facets = vec![
        BoundaryFacet {
            facet: Facet::Point(0),
            tag: spec.tag_of(Side::Left).unwrap(),
            side: Side::Left,
            measure: 1.0,
        },
        BoundaryFacet {
            facet: Facet::Point(n),
            tag: spec.tag_of(Side::Right).unwrap(),
            side: Side::Right,
            measure: 1.0,
        },
    ];
    Mesh::finish(1, nodes, elements, facets)
}

fn build_rectangle(spec: &MeshSpec) -> Mesh {
    let [nx, ny] = spec.resolution;
    let [lx, ly] = spec.extents;
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([lx * i as f64 / nx as f64, ly * j as f64 / ny as f64]);
        }
    }
    let mut elements = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            // split along the a-c diagonal, counter-clockwise orientation
            elements.push(Element::Triangle([a, b, c]));
            elements.push(Element::Triangle([a, c, d]));
        }
    }
    let mut facets = Vec::new();
    let (hx, hy) = (lx / nx as f64, ly / ny as f64);
    let mut push = |side: Side, a: usize, b: usize, measure: f64| {
        facets.push(BoundaryFacet {
            facet: Facet::Edge([a, b]),
            tag: spec.tag_of(side).unwrap(),
            side,
            measure,
        })
    };
    for j in 0..ny {
        push(Side::Left, idx(0, j), idx(0, j + 1), hy);
    }
    for j in 0..ny {
        push(Side::Right, idx(nx, j), idx(nx, j + 1), hy);
    }
    for i in 0..nx {
        push(Side::Bottom, idx(i, 0), idx(i + 1, 0), hx);
    }
    for i in 0..nx {
        push(Side::Top, idx(i, ny), idx(i + 1, ny), hx);
    }
    Mesh::finish(2, nodes, elements, facets)
}

impl Mesh {
    fn finish(dimension: usize, nodes: Vec<Point>, elements: Vec<Element>, facets: Vec<BoundaryFacet>) -> Self {
        let measures = elements
            .iter()
            .map(|e| match *e {
                Element::Segment([a, b]) => (nodes[b][0] - nodes[a][0]).abs(),
                Element::Triangle([a, b, c]) => 0.5 * signed_area2(nodes[a], nodes[b], nodes[c]).abs(),
            })
            .collect();
        let mut node_tags: Vec<Option<BoundaryTag>> = vec![None; nodes.len()];
        for f in &facets {
            for &n in f.facet.nodes() {
                node_tags[n] = match node_tags[n] {
                    Some(t) if t.priority() >= f.tag.priority() => Some(t),
                    _ => Some(f.tag),
                };
            }
        }
        Self {
            dimension,
            nodes,
            elements,
            measures,
            facets,
            node_tags,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> Point {
        self.nodes[i]
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    /// Length (1D) or area (2D) of element `e`.
    pub fn element_measure(&self, e: usize) -> f64 {
        self.measures[e]
    }

    pub fn element_midpoint(&self, e: usize) -> Point {
        let nodes = self.elements[e].nodes();
        let k = nodes.len() as f64;
        let mut p = [0.0; 2];
        for &n in nodes {
            p[0] += self.nodes[n][0] / k;
            p[1] += self.nodes[n][1] / k;
        }
        p
    }

    pub fn facets(&self) -> &[BoundaryFacet] {
        &self.facets
    }

    pub fn facets_with_tag(&self, tag: BoundaryTag) -> impl Iterator<Item = &BoundaryFacet> + '_ {
        self.facets.iter().filter(move |f| f.tag == tag)
    }

    pub fn facet_midpoint(&self, f: &BoundaryFacet) -> Point {
        match f.facet {
            Facet::Point(n) => self.nodes[n],
            Facet::Edge([a, b]) => [
                0.5 * (self.nodes[a][0] + self.nodes[b][0]),
                0.5 * (self.nodes[a][1] + self.nodes[b][1]),
            ],
        }
    }

    /// Tag of a boundary node after corner resolution, `None` for interior nodes.
    pub fn node_tag(&self, i: usize) -> Option<BoundaryTag> {
        self.node_tags[i]
    }

    pub fn nodes_with_tag(&self, tag: BoundaryTag) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(move |&i| self.node_tags[i] == Some(tag))
    }

    pub fn is_clamped(&self, i: usize) -> bool {
        self.node_tags[i] == Some(BoundaryTag::Gamma1)
    }

    /// Lumped Γ₃ quadrature: `(node, weight)` for every unclamped node touching
    /// a Γ₃ facet, each facet splitting its measure evenly over its nodes.
    pub fn gamma3_weights(&self) -> Vec<(usize, f64)> {
        let mut w = vec![0.0; self.nodes.len()];
        for f in self.facets_with_tag(BoundaryTag::Gamma3) {
            let nodes = f.facet.nodes();
            for &n in nodes {
                w[n] += f.measure / nodes.len() as f64;
            }
        }
        (0..self.nodes.len())
            .filter(|&i| w[i] > 0.0 && !self.is_clamped(i))
            .map(|i| (i, w[i]))
            .collect()
    }
}

fn signed_area2(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
}
