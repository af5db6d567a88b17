//! Finite triangular-lattice graphs.
//!
//! Vertices live on the Bravais lattice spanned by two unit vectors of equal
//! length at 120°, addressed by integer coordinates `(i, j)`. Edges connect
//! nearest neighbors only, so every constructed graph is a unit-distance
//! graph with maximum degree 6.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Offsets reaching the six nearest neighbors of any site.
pub const NEIGHBOR_OFFSETS: [(i32, i32); 6] =
    [(1, 0), (0, 1), (1, 1), (-1, 0), (0, -1), (-1, -1)];

/// Offsets reaching the six second-neighbor sites, at embedded distance √3.
pub const SECOND_NEIGHBOR_OFFSETS: [(i32, i32); 6] =
    [(1, -1), (-1, 1), (2, 1), (-2, -1), (1, 2), (-1, -2)];

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("duplicate lattice coordinate ({0}, {1})")]
    DuplicateCoordinate(i32, i32),
    #[error("coordinate list must not be empty")]
    EmptyCoordinateList,
    #[error("target {0} does not exist in this graph")]
    TargetNotInGraph(String),
    #[error("invalid graph file: {0}")]
    InvalidGraphFile(String),
}

/// Integer Bravais coordinates of a lattice site.
///
/// The Euclidean embedding (in units of the lattice spacing) is
/// `x = i + j·cos 120° = i − j/2`, `y = j·sin 120° = j·√3/2`; two sites are
/// nearest neighbors exactly when their embedded distance is 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LatticeCoord {
    pub i: i32,
    pub j: i32,
}

impl LatticeCoord {
    pub fn new(i: i32, j: i32) -> Self {
        Self { i, j }
    }

    /// Position in the plane, in units of the lattice spacing.
    pub fn embedded(&self) -> (f64, f64) {
        let x = self.i as f64 - 0.5 * self.j as f64;
        let y = 3.0_f64.sqrt() / 2.0 * self.j as f64;
        (x, y)
    }

    /// Hexagonal (graph) distance from the origin.
    pub fn hex_distance(&self) -> i32 {
        (self.i.abs() + self.j.abs() + (self.i - self.j).abs()) / 2
    }

    /// True iff `other` is one lattice spacing away.
    pub fn is_neighbor_of(&self, other: &LatticeCoord) -> bool {
        let d = (self.i - other.i, self.j - other.j);
        NEIGHBOR_OFFSETS.contains(&d)
    }

    /// Rotation by +60° about the origin; maps the lattice onto itself.
    pub fn rotated60(&self) -> Self {
        Self { i: self.i - self.j, j: self.i }
    }
}

/// How the marked vertex of a search run is designated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetSpec {
    /// No marked vertex.
    None,
    /// The central site at coordinate (0, 0).
    Center,
    /// A site adjacent to the center, shifted off the symmetry point.
    Shifted,
    /// Nearest neighbor of the center (same site as [`TargetSpec::Shifted`]).
    FirstNeighbor,
    /// Second neighbor of the center, at embedded distance √3.
    SecondNeighbor,
    /// An explicit vertex index.
    Explicit(usize),
}

impl std::fmt::Display for TargetSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TargetSpec::None => write!(f, "none"),
            TargetSpec::Center => write!(f, "C"),
            TargetSpec::Shifted => write!(f, "S"),
            TargetSpec::FirstNeighbor => write!(f, "1N"),
            TargetSpec::SecondNeighbor => write!(f, "2N"),
            TargetSpec::Explicit(k) => write!(f, "{k}"),
        }
    }
}

impl std::str::FromStr for TargetSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" | "None" => Ok(TargetSpec::None),
            "C" | "c" => Ok(TargetSpec::Center),
            "S" | "s" => Ok(TargetSpec::Shifted),
            "1N" | "1n" => Ok(TargetSpec::FirstNeighbor),
            "2N" | "2n" => Ok(TargetSpec::SecondNeighbor),
            other => other
                .parse::<usize>()
                .map(TargetSpec::Explicit)
                .map_err(|_| format!("unknown target '{other}' (expected none, C, S, 1N, 2N or a vertex index)")),
        }
    }
}

/// Serialized form of a graph: the coordinate list is authoritative, the
/// adjacency is always recomputed on load.
#[derive(Serialize, Deserialize)]
struct GraphFile {
    coords: Vec<(i32, i32)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spacing_um: Option<f64>,
}

/// An immutable finite patch of the triangular lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    coords: Vec<LatticeCoord>,
    adjacency: DMatrix<f64>,
    spacing_um: Option<f64>,
    id: String,
}

impl Graph {
    /// Vertex count.
    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[LatticeCoord] {
        &self.coords
    }

    /// Symmetric 0/1 adjacency matrix with zero diagonal.
    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn spacing_um(&self) -> Option<f64> {
        self.spacing_um
    }

    /// Short identifier carried into result records ("hex:3", "paper31", ...).
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_spacing(mut self, spacing_um: f64) -> Self {
        self.spacing_um = Some(spacing_um);
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency.column(v).iter().filter(|&&a| a != 0.0).count()
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        (0..self.n()).filter(|&u| self.adjacency[(u, v)] != 0.0).collect()
    }

    pub fn edge_count(&self) -> usize {
        (self.adjacency.sum() / 2.0).round() as usize
    }

    pub fn index_of(&self, coord: LatticeCoord) -> Option<usize> {
        self.coords.iter().position(|&c| c == coord)
    }

    /// Vertex positions in the plane; unit spacing unless `spacing_um` is set
    /// and `physical` is requested.
    pub fn embedded_positions(&self, physical: bool) -> Vec<(f64, f64)> {
        let scale = if physical { self.spacing_um.unwrap_or(1.0) } else { 1.0 };
        self.coords
            .iter()
            .map(|c| {
                let (x, y) = c.embedded();
                (scale * x, scale * y)
            })
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n();
        if n == 0 {
            return false;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for u in self.neighbors(v) {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn to_json_string(&self) -> String {
        let file = GraphFile {
            coords: self.coords.iter().map(|c| (c.i, c.j)).collect(),
            spacing_um: self.spacing_um,
        };
        serde_json::to_string_pretty(&file).expect("graph serialization cannot fail")
    }

    pub fn from_json_str(s: &str) -> Result<Self, LatticeError> {
        let file: GraphFile = serde_json::from_str(s)
            .map_err(|e| LatticeError::InvalidGraphFile(e.to_string()))?;
        let coords: Vec<LatticeCoord> =
            file.coords.into_iter().map(|(i, j)| LatticeCoord::new(i, j)).collect();
        let mut g = build_from_coords(&coords)?;
        g.spacing_um = file.spacing_um;
        Ok(g)
    }
}

/// Centered hexagonal patch with `layers` full rings around the origin;
/// `n = 1 + 3·layers·(layers+1)`.
pub fn build_hex_patch(layers: u32) -> Graph {
    let l = layers as i32;
    let mut coords = Vec::new();
    for i in -l..=l {
        for j in -l..=l {
            let c = LatticeCoord::new(i, j);
            if c.hex_distance() <= l {
                coords.push(c);
            }
        }
    }
    let mut g = build_from_coords(&coords).expect("hex patch coords are distinct");
    g.id = format!("hex:{layers}");
    g
}

/// The 31-site layout used throughout: the layers-3 hexagonal patch with its
/// six outer corner vertices removed.
pub fn build_paper31() -> Graph {
    let corners: Vec<LatticeCoord> = NEIGHBOR_OFFSETS
        .iter()
        .map(|&(i, j)| LatticeCoord::new(3 * i, 3 * j))
        .collect();
    let coords: Vec<LatticeCoord> = build_hex_patch(3)
        .coords()
        .iter()
        .copied()
        .filter(|c| !corners.contains(c))
        .collect();
    let mut g = build_from_coords(&coords).expect("paper31 coords are distinct");
    g.id = "paper31".to_string();
    g
}

/// Graph over an explicit coordinate list, with edges from the
/// nearest-neighbor rule.
pub fn build_from_coords(coords: &[LatticeCoord]) -> Result<Graph, LatticeError> {
    if coords.is_empty() {
        return Err(LatticeError::EmptyCoordinateList);
    }
    for (k, c) in coords.iter().enumerate() {
        if coords[..k].contains(c) {
            return Err(LatticeError::DuplicateCoordinate(c.i, c.j));
        }
    }
    let n = coords.len();
    let mut adjacency = DMatrix::zeros(n, n);
    for u in 0..n {
        for v in (u + 1)..n {
            if coords[u].is_neighbor_of(&coords[v]) {
                adjacency[(u, v)] = 1.0;
                adjacency[(v, u)] = 1.0;
            }
        }
    }
    Ok(Graph {
        coords: coords.to_vec(),
        adjacency,
        spacing_um: None,
        id: "coords".to_string(),
    })
}

/// Resolve a target designator to a vertex index.
///
/// `Shifted`/`FirstNeighbor` pick the neighbor of the center that is smallest
/// in `(i, j)` lexicographic order; `SecondNeighbor` does the same on the
/// √3-distance ring. The tie-break makes the choice deterministic; on the
/// symmetric layouts all candidates are equivalent.
pub fn resolve_target(g: &Graph, spec: TargetSpec) -> Result<Option<usize>, LatticeError> {
    let origin = LatticeCoord::new(0, 0);
    let find_ring_min = |offsets: &[(i32, i32)]| -> Option<usize> {
        offsets
            .iter()
            .map(|&(i, j)| LatticeCoord::new(i, j))
            .filter(|c| g.index_of(*c).is_some())
            .min()
            .and_then(|c| g.index_of(c))
    };
    match spec {
        TargetSpec::None => Ok(None),
        TargetSpec::Center => g
            .index_of(origin)
            .map(Some)
            .ok_or_else(|| LatticeError::TargetNotInGraph("C".to_string())),
        TargetSpec::Shifted | TargetSpec::FirstNeighbor => {
            if g.index_of(origin).is_none() {
                return Err(LatticeError::TargetNotInGraph("1N (no center)".to_string()));
            }
            find_ring_min(&NEIGHBOR_OFFSETS)
                .map(Some)
                .ok_or_else(|| LatticeError::TargetNotInGraph("1N".to_string()))
        }
        TargetSpec::SecondNeighbor => {
            if g.index_of(origin).is_none() {
                return Err(LatticeError::TargetNotInGraph("2N (no center)".to_string()));
            }
            find_ring_min(&SECOND_NEIGHBOR_OFFSETS)
                .map(Some)
                .ok_or_else(|| LatticeError::TargetNotInGraph("2N".to_string()))
        }
        TargetSpec::Explicit(k) => {
            if k < g.n() {
                Ok(Some(k))
            } else {
                Err(LatticeError::TargetNotInGraph(format!("index {k}")))
            }
        }
    }
}

/// Vertex permutations induced by the six rotations (multiples of 60° about
/// the origin) that map the coordinate set onto itself. The identity (k = 0)
/// is always present; on hexagonally symmetric layouts all six are.
pub fn automorphism_orbit(g: &Graph) -> Vec<Vec<usize>> {
    let mut orbit = Vec::new();
    for k in 0..6 {
        let mut perm = Vec::with_capacity(g.n());
        let mut valid = true;
        for c in g.coords() {
            let mut r = *c;
            for _ in 0..k {
                r = r.rotated60();
            }
            match g.index_of(r) {
                Some(idx) => perm.push(idx),
                None => {
                    valid = false;
                    break;
                }
            }
        }
        if valid {
            orbit.push(perm);
        }
    }
    orbit
}
