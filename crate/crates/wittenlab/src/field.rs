//! Grid topologies, sampled potentials, level windows and critical levels.
//!
//! Nodes are numbered row-major with axis 0 fastest: node (i, j) has index
//! `i + nx * j`. Cells of the cubical complex are numbered per dimension:
//! on a torus x-edges come first (edge (i,j) -> (i+1,j) has index
//! `i + nx*j`), then y-edges (offset `nx*ny`).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::numeric::ext_f64;
use crate::persistence::BarCode;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FieldError {
    #[error("axis {axis} has {n} nodes, need at least 2")]
    TooFewNodes { axis: usize, n: usize },
    #[error("spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("non-finite value {value} at node {node}")]
    NonFinite { node: usize, value: f64 },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("bar code has no finite endpoint")]
    EmptyLandscape,
    #[error("window requires a < b, got ({a}, {b})")]
    EmptyWindow { a: f64, b: f64 },
    #[error("bar code was not computed from this field")]
    BarcodeMismatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TopologyKind {
    Circle { n: usize },
    Interval { n: usize },
    Torus { nx: usize, ny: usize },
}

/// Which end of an interval a node sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundarySide {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridTopology {
    #[serde(flatten)]
    pub kind: TopologyKind,
    /// One spacing per axis.
    pub spacing: Vec<f64>,
    /// Coordinate of node 0 along each axis.
    #[serde(default, skip_serializing_if = "is_zero_origin")]
    pub origin: Vec<f64>,
}

fn is_zero_origin(o: &Vec<f64>) -> bool {
    o.iter().all(|&x| x == 0.0)
}

impl GridTopology {
    pub fn new(kind: TopologyKind, spacing: Vec<f64>, origin: Vec<f64>) -> Result<Self, FieldError> {
        let dims: Vec<usize> = match kind {
            TopologyKind::Circle { n } | TopologyKind::Interval { n } => vec![n],
            TopologyKind::Torus { nx, ny } => vec![nx, ny],
        };
        for (axis, &n) in dims.iter().enumerate() {
            if n < 2 {
                return Err(FieldError::TooFewNodes { axis, n });
            }
        }
        if spacing.len() != dims.len() {
            return Err(FieldError::LengthMismatch { expected: dims.len(), got: spacing.len() });
        }
        for &s in &spacing {
            if !(s.is_finite() && s > 0.0) {
                return Err(FieldError::BadSpacing(s));
            }
        }
        let origin = if origin.is_empty() { vec![0.0; dims.len()] } else { origin };
        if origin.len() != dims.len() {
            return Err(FieldError::LengthMismatch { expected: dims.len(), got: origin.len() });
        }
        Ok(GridTopology { kind, spacing, origin })
    }

    /// Circle of length 2π sampled at `n` nodes, θ_k = 2πk/n.
    pub fn circle(n: usize) -> Result<Self, FieldError> {
        Self::new(TopologyKind::Circle { n }, vec![2.0 * PI / n as f64], vec![])
    }

    /// Interval [lo, hi] with `n` nodes including both ends.
    pub fn interval(n: usize, lo: f64, hi: f64) -> Result<Self, FieldError> {
        if n < 2 {
            return Err(FieldError::TooFewNodes { axis: 0, n });
        }
        Self::new(TopologyKind::Interval { n }, vec![(hi - lo) / (n - 1) as f64], vec![lo])
    }

    /// Periodic box [0,lx) x [0,ly).
    pub fn torus(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self, FieldError> {
        Self::new(TopologyKind::Torus { nx, ny }, vec![lx / nx as f64, ly / ny as f64], vec![])
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            TopologyKind::Torus { .. } => 2,
            _ => 1,
        }
    }

    /// (nx, ny) with ny = 1 in one dimension.
    pub fn shape(&self) -> (usize, usize) {
        match self.kind {
            TopologyKind::Circle { n } | TopologyKind::Interval { n } => (n, 1),
            TopologyKind::Torus { nx, ny } => (nx, ny),
        }
    }

    pub fn is_periodic(&self) -> bool {
        !matches!(self.kind, TopologyKind::Interval { .. })
    }

    pub fn num_nodes(&self) -> usize {
        let (nx, ny) = self.shape();
        nx * ny
    }

    pub fn num_edges(&self) -> usize {
        match self.kind {
            TopologyKind::Circle { n } => n,
            TopologyKind::Interval { n } => n - 1,
            TopologyKind::Torus { nx, ny } => 2 * nx * ny,
        }
    }

    pub fn num_faces(&self) -> usize {
        match self.kind {
            TopologyKind::Torus { nx, ny } => nx * ny,
            _ => 0,
        }
    }

    pub fn num_cells(&self, dim: usize) -> usize {
        match dim {
            0 => self.num_nodes(),
            1 => self.num_edges(),
            2 => self.num_faces(),
            _ => 0,
        }
    }

    /// Total length along each periodic axis (N * spacing).
    pub fn extent(&self) -> Vec<f64> {
        let (nx, ny) = self.shape();
        match self.kind {
            TopologyKind::Torus { .. } => vec![nx as f64 * self.spacing[0], ny as f64 * self.spacing[1]],
            TopologyKind::Circle { n } => vec![n as f64 * self.spacing[0]],
            TopologyKind::Interval { n } => vec![(n - 1) as f64 * self.spacing[0]],
        }
    }

    pub fn node_coords(&self, node: usize) -> Vec<f64> {
        let (nx, _) = self.shape();
        let (i, j) = (node % nx, node / nx);
        if self.dim() == 1 {
            vec![self.origin[0] + i as f64 * self.spacing[0]]
        } else {
            vec![self.origin[0] + i as f64 * self.spacing[0], self.origin[1] + j as f64 * self.spacing[1]]
        }
    }

    pub fn boundary_tag(&self, node: usize) -> Option<BoundarySide> {
        match self.kind {
            TopologyKind::Interval { n } if node == 0 => Some(BoundarySide::Left).filter(|_| n > 0),
            TopologyKind::Interval { n } if node + 1 == n => Some(BoundarySide::Right),
            _ => None,
        }
    }

    /// Oriented edge as (tail, head); the edge points along +axis.
    pub fn edge_vertices(&self, e: usize) -> (usize, usize) {
        match self.kind {
            TopologyKind::Circle { n } => (e, (e + 1) % n),
            TopologyKind::Interval { .. } => (e, e + 1),
            TopologyKind::Torus { nx, ny } => {
                let nn = nx * ny;
                if e < nn {
                    let (i, j) = (e % nx, e / nx);
                    (e, (i + 1) % nx + nx * j)
                } else {
                    let k = e - nn;
                    let (i, j) = (k % nx, k / nx);
                    (k, i + nx * ((j + 1) % ny))
                }
            }
        }
    }

    /// Axis of an edge (0 or 1).
    pub fn edge_axis(&self, e: usize) -> usize {
        match self.kind {
            TopologyKind::Torus { nx, ny } if e >= nx * ny => 1,
            _ => 0,
        }
    }

    /// Oriented boundary of face (i,j): ex(i,j) + ey(i+1,j) - ex(i,j+1) - ey(i,j).
    pub fn face_edges(&self, q: usize) -> [(usize, i8); 4] {
        let (nx, ny) = self.shape();
        let nn = nx * ny;
        let (i, j) = (q % nx, q / nx);
        let ip = (i + 1) % nx;
        let jp = (j + 1) % ny;
        [
            (i + nx * j, 1),
            (nn + ip + nx * j, 1),
            (i + nx * jp, -1),
            (nn + i + nx * j, -1),
        ]
    }

    pub fn face_vertices(&self, q: usize) -> [usize; 4] {
        let (nx, ny) = self.shape();
        let (i, j) = (q % nx, q / nx);
        let ip = (i + 1) % nx;
        let jp = (j + 1) % ny;
        [i + nx * j, ip + nx * j, ip + nx * jp, i + nx * jp]
    }

    fn csv_header(&self) -> String {
        let spacing = if self.spacing.iter().all(|&s| s == self.spacing[0]) {
            format!("{:?}", self.spacing[0])
        } else {
            self.spacing.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>().join(":")
        };
        let mut h = match self.kind {
            TopologyKind::Circle { n } => format!("topology,circle,{n},{spacing}"),
            TopologyKind::Interval { n } => format!("topology,interval,{n},{spacing}"),
            TopologyKind::Torus { nx, ny } => format!("topology,torus,{nx},{ny},{spacing}"),
        };
        if !is_zero_origin(&self.origin) {
            let o = self.origin.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>().join(":");
            h.push_str(&format!(",origin={o}"));
        }
        h
    }

    fn parse_csv_header(line: &str) -> Result<Self, FieldError> {
        let perr = |msg: String| FieldError::Parse { line: 1, msg };
        let parts: Vec<&str> = line.trim().split(',').collect();
        if parts.first() != Some(&"topology") {
            return Err(perr("header must start with `topology`".into()));
        }
        let num = |s: &str| -> Result<usize, FieldError> {
            s.parse::<usize>().map_err(|_| perr(format!("bad node count {s:?}")))
        };
        let float_list = |s: &str| -> Result<Vec<f64>, FieldError> {
            s.split(':')
                .map(|t| t.parse::<f64>().map_err(|_| perr(format!("bad number {t:?}"))))
                .collect()
        };
        let (kind, rest) = match parts.get(1).copied() {
            Some("circle") if parts.len() >= 4 => (TopologyKind::Circle { n: num(parts[2])? }, &parts[3..]),
            Some("interval") if parts.len() >= 4 => (TopologyKind::Interval { n: num(parts[2])? }, &parts[3..]),
            Some("torus") if parts.len() >= 5 => {
                (TopologyKind::Torus { nx: num(parts[2])?, ny: num(parts[3])? }, &parts[4..])
            }
            Some(k) => return Err(perr(format!("unknown or incomplete topology {k:?}"))),
            None => return Err(perr("missing topology kind".into())),
        };
        let dim = if matches!(kind, TopologyKind::Torus { .. }) { 2 } else { 1 };
        let mut spacing = float_list(rest[0])?;
        if spacing.len() == 1 {
            spacing = vec![spacing[0]; dim];
        }
        let mut origin = vec![];
        for extra in &rest[1..] {
            match extra.strip_prefix("origin=") {
                Some(o) => origin = float_list(o)?,
                None => return Err(perr(format!("unexpected header field {extra:?}"))),
            }
        }
        GridTopology::new(kind, spacing, origin).map_err(|e| perr(e.to_string()))
    }
}

/// A scalar function of node coordinates, with a name for provenance.
#[derive(Clone)]
pub struct Expr {
    name: String,
    f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl Expr {
    pub fn new(name: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Expr { name: name.into(), f: Arc::new(f) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({})", self.name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledField {
    pub topology: GridTopology,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz_bound: Option<f64>,
}

/// values[i] = expr(node_i).
pub fn sample(expr: &Expr, topology: &GridTopology) -> Result<SampledField, FieldError> {
    let values: Vec<f64> = (0..topology.num_nodes()).map(|i| expr.eval(&topology.node_coords(i))).collect();
    SampledField::new(topology.clone(), values)
}

impl SampledField {
    pub fn new(topology: GridTopology, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != topology.num_nodes() {
            return Err(FieldError::LengthMismatch { expected: topology.num_nodes(), got: values.len() });
        }
        if let Some((node, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(FieldError::NonFinite { node, value });
        }
        Ok(SampledField { topology, values, lipschitz_bound: None })
    }

    /// Caches max |Δf|/spacing over adjacent node pairs.
    pub fn with_lipschitz(mut self) -> Self {
        let t = &self.topology;
        let mut l = 0.0f64;
        for e in 0..t.num_edges() {
            let (a, b) = t.edge_vertices(e);
            l = l.max((self.values[b] - self.values[a]).abs() / t.spacing[t.edge_axis(e)]);
        }
        self.lipschitz_bound = Some(l);
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn shifted(&self, c: f64) -> SampledField {
        SampledField {
            topology: self.topology.clone(),
            values: self.values.iter().map(|v| v + c).collect(),
            lipschitz_bound: self.lipschitz_bound,
        }
    }

    /// sup over nodes of |f - g|; None if the topologies differ.
    pub fn sup_distance(&self, other: &SampledField) -> Option<f64> {
        if self.topology != other.topology {
            return None;
        }
        Some(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.topology.csv_header();
        s.push('\n');
        for v in &self.values {
            s.push_str(&format!("{v:?}\n"));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, FieldError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(FieldError::Parse { line: 1, msg: "empty input".into() })?;
        let topology = GridTopology::parse_csv_header(header)?;
        let mut values = Vec::with_capacity(topology.num_nodes());
        for (k, line) in lines.enumerate() {
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let v = t
                .parse::<f64>()
                .map_err(|_| FieldError::Parse { line: k + 2, msg: format!("bad value {t:?}") })?;
            values.push(v);
        }
        SampledField::new(topology, values)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("field serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, FieldError> {
        let raw: SampledField =
            serde_json::from_str(text).map_err(|e| FieldError::Parse { line: e.line(), msg: e.to_string() })?;
        let topo = GridTopology::new(raw.topology.kind, raw.topology.spacing, raw.topology.origin)?;
        let mut f = SampledField::new(topo, raw.values)?;
        f.lipschitz_bound = raw.lipschitz_bound;
        Ok(f)
    }

    /// SHA-256 of the CSV form, hex encoded.
    pub fn digest(&self) -> String {
        let h = Sha256::digest(self.to_csv().as_bytes());
        h.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Open level window (a, b); either side may be infinite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelWindow {
    #[serde(with = "ext_f64")]
    pub a: f64,
    #[serde(with = "ext_f64")]
    pub b: f64,
}

impl LevelWindow {
    pub fn new(a: f64, b: f64) -> Result<Self, FieldError> {
        if !(a < b) || a.is_nan() || b.is_nan() {
            return Err(FieldError::EmptyWindow { a, b });
        }
        Ok(LevelWindow { a, b })
    }

    pub fn full() -> Self {
        LevelWindow { a: f64::NEG_INFINITY, b: f64::INFINITY }
    }

    /// Strict membership a < t < b.
    pub fn contains(&self, t: f64) -> bool {
        self.a < t && t < self.b
    }

    pub fn is_full(&self) -> bool {
        self.a == f64::NEG_INFINITY && self.b == f64::INFINITY
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalLevels {
    pub levels: Vec<f64>,
    /// A quarter of the minimal gap; None when there is a single level.
    pub eta: Option<f64>,
}

impl CriticalLevels {
    pub fn single_level(&self) -> bool {
        self.levels.len() == 1
    }

    pub fn span(&self) -> f64 {
        self.levels.last().unwrap() - self.levels[0]
    }
}

/// Finite bar endpoints, sorted and deduplicated, plus η_f.
pub fn critical_levels(field: &SampledField, barcode: &BarCode) -> Result<CriticalLevels, FieldError> {
    if !barcode.source_hash.is_empty() && barcode.source_hash != field.digest() {
        return Err(FieldError::BarcodeMismatch);
    }
    levels_from_barcode(barcode)
}

/// Same as [`critical_levels`] without the provenance check.
pub fn levels_from_barcode(barcode: &BarCode) -> Result<CriticalLevels, FieldError> {
    let mut levels: Vec<f64> = barcode
        .bars
        .iter()
        .flat_map(|b| [b.birth, b.death])
        .filter(|v| v.is_finite())
        .collect();
    if levels.is_empty() {
        return Err(FieldError::EmptyLandscape);
    }
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let eta = levels.windows(2).map(|w| w[1] - w[0]).fold(None, |m: Option<f64>, g| Some(m.map_or(g, |x| x.min(g))));
    Ok(CriticalLevels { levels, eta: eta.map(|g| g / 4.0) })
}
