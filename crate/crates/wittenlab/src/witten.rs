//! Discrete Witten differentials d_{f,h} = h d + df∧ on grid cochains and
//! the associated Laplacians.
//!
//! Cochains live on the cells of the cubical complex of the grid (values, not
//! integrals), so all cells of one degree carry the same weight and the
//! adjoint is the transpose.
//!
//! Two edge rules are available. `Fitted` (default) is the exponentially
//! fitted rule
//!
//! ```text
//! (d⁰u)_e = (h/Δ) [(1 + t) u_j − (1 − t) u_i],   t = tanh((f_j − f_i) / 2h)
//! ```
//!
//! i.e. E⁻¹ (h D) e^{f/h} with E the edge mean of e^{f/h}; the degree-one
//! operator is F⁻¹ (h D¹) E with F the face mean of E. Both are computed
//! from log weights so nothing overflows, and d¹d⁰ = 0 holds exactly.
//! `Midpoint` is the direct rule h(u_j − u_i)/Δ + (δf/Δ)(u_i + u_j)/2 with
//! face-averaged df∧ in degree one; it is a complex only up to O(Δ).

use serde::{Deserialize, Serialize};

use crate::field::{LevelWindow, SampledField, TopologyKind};
use crate::numeric::logsumexp;
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WittenError {
    #[error("h must be positive, got {0}")]
    NonPositiveH(f64),
    #[error("window endpoint {0} equals a node value")]
    CriticalEndpoint(f64),
    #[error("degree-one operator needs a torus")]
    NotTorus,
    #[error("operators do not compose: {0}")]
    DimensionMismatch(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Fitted,
    Midpoint,
}

/// Cells of the relative complex for a level window: a cell is active when
/// its lower-star value lies in [a, b). Cochains vanish on cells below a
/// (Dirichlet on f = a) and cells at or above b are cut off (the natural
/// boundary condition of d_{f,h} on f = b).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowDomain {
    pub window: LevelWindow,
    pub active: [Vec<bool>; 3],
    /// Active nodes with a neighbour below a.
    pub lower_boundary: Vec<usize>,
    /// Active nodes with a neighbour at or above b.
    pub upper_boundary: Vec<usize>,
}

impl WindowDomain {
    pub fn new(field: &SampledField, window: LevelWindow) -> Result<Self, WittenError> {
        for end in [window.a, window.b] {
            if end.is_finite() && field.values.iter().any(|&v| v == end) {
                return Err(WittenError::CriticalEndpoint(end));
            }
        }
        let t = &field.topology;
        let v = &field.values;
        let inside = |x: f64| window.a <= x && x < window.b;
        let nodes: Vec<bool> = v.iter().map(|&x| inside(x)).collect();
        let edges: Vec<bool> = (0..t.num_edges())
            .map(|e| {
                let (i, j) = t.edge_vertices(e);
                inside(v[i].max(v[j]))
            })
            .collect();
        let faces: Vec<bool> = (0..t.num_faces())
            .map(|q| inside(t.face_vertices(q).iter().map(|&n| v[n]).fold(f64::NEG_INFINITY, f64::max)))
            .collect();
        let mut lower = vec![false; v.len()];
        let mut upper = vec![false; v.len()];
        for e in 0..t.num_edges() {
            let (i, j) = t.edge_vertices(e);
            for (x, y) in [(i, j), (j, i)] {
                if nodes[x] && v[y] < window.a {
                    lower[x] = true;
                }
                if nodes[x] && v[y] >= window.b {
                    upper[x] = true;
                }
            }
        }
        let collect = |m: Vec<bool>| m.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
        Ok(WindowDomain { window, active: [nodes, edges, faces], lower_boundary: collect(lower), upper_boundary: collect(upper) })
    }

    /// The whole grid.
    pub fn full(field: &SampledField) -> Self {
        let t = &field.topology;
        WindowDomain {
            window: LevelWindow::full(),
            active: [vec![true; t.num_nodes()], vec![true; t.num_edges()], vec![true; t.num_faces()]],
            lower_boundary: vec![],
            upper_boundary: vec![],
        }
    }

    pub fn active_cells(&self, dim: usize) -> Vec<usize> {
        self.active[dim].iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }
}

/// Assembled d_{f,h}^{(p)}: rows are active (p+1)-cells, columns active p-cells.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WittenOperator {
    pub h: f64,
    pub degree: usize,
    pub scheme: Scheme,
    pub matrix: SparseMatrix,
    /// Cell index (within its dimension) of each row / column.
    pub row_cells: Vec<usize>,
    pub col_cells: Vec<usize>,
    /// Volume weight shared by every cell; the adjoint is the transpose.
    pub cell_weight: f64,
    pub lower_boundary: Vec<usize>,
    pub upper_boundary: Vec<usize>,
    pub warnings: Vec<String>,
}

impl WittenOperator {
    pub fn nrows(&self) -> usize {
        self.matrix.nrows
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols
    }

    /// `# rows cols nnz` header, then one `row col value` line per entry.
    pub fn export_triplets(&self) -> String {
        let mut s = format!(
            "# witten d{} h={:?} scheme={:?}\n# {} {} {}\n",
            self.degree,
            self.h,
            self.scheme,
            self.matrix.nrows,
            self.matrix.ncols,
            self.matrix.nnz()
        );
        for (r, c, v) in self.matrix.triplets() {
            s.push_str(&format!("{r} {c} {v:?}\n"));
        }
        s
    }
}

fn resolution_warnings(field: &SampledField, h: f64) -> Vec<String> {
    let dx = field.topology.spacing.iter().cloned().fold(0.0, f64::max);
    if dx > h / 4.0 {
        vec![format!("resolution: spacing {dx:.4e} exceeds h/4 = {:.4e}", h / 4.0)]
    } else {
        vec![]
    }
}

fn check_h(h: f64) -> Result<(), WittenError> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(WittenError::NonPositiveH(h))
    }
}

/// Log edge weight ln((e^{f_i/h} + e^{f_j/h}) / 2).
fn log_edge_weight(field: &SampledField, h: f64, e: usize) -> f64 {
    let (i, j) = field.topology.edge_vertices(e);
    logsumexp(&[field.values[i] / h, field.values[j] / h]) - std::f64::consts::LN_2
}

fn reindex(active: &[bool]) -> (Vec<usize>, Vec<usize>) {
    let mut map = vec![usize::MAX; active.len()];
    let mut cells = Vec::new();
    for (i, &a) in active.iter().enumerate() {
        if a {
            map[i] = cells.len();
            cells.push(i);
        }
    }
    (map, cells)
}

pub fn assemble_d0(field: &SampledField, h: f64, domain: &WindowDomain) -> Result<WittenOperator, WittenError> {
    assemble_d0_with(field, h, domain, Scheme::Fitted)
}

pub fn assemble_d0_with(
    field: &SampledField,
    h: f64,
    domain: &WindowDomain,
    scheme: Scheme,
) -> Result<WittenOperator, WittenError> {
    check_h(h)?;
    let t = &field.topology;
    let f = &field.values;
    let (col_map, col_cells) = reindex(&domain.active[0]);
    let (_, row_cells) = reindex(&domain.active[1]);
    let mut trip = Vec::with_capacity(2 * row_cells.len());
    for (r, &e) in row_cells.iter().enumerate() {
        let (i, j) = t.edge_vertices(e);
        let dx = t.spacing[t.edge_axis(e)];
        let (ci, cj) = match scheme {
            Scheme::Fitted => {
                // 1 ∓ tanh(s) written as 2/(1 + e^{±2s}) to keep relative precision.
                let s2 = (f[j] - f[i]) / h;
                (-(h / dx) * 2.0 / (1.0 + s2.exp()), (h / dx) * 2.0 / (1.0 + (-s2).exp()))
            }
            Scheme::Midpoint => {
                let g = (f[j] - f[i]) / dx;
                (-h / dx + 0.5 * g, h / dx + 0.5 * g)
            }
        };
        // An active edge has both endpoints with value < b; endpoints below a are Dirichlet.
        if col_map[i] != usize::MAX {
            trip.push((r, col_map[i], ci));
        }
        if col_map[j] != usize::MAX {
            trip.push((r, col_map[j], cj));
        }
    }
    let cell_weight: f64 = t.spacing.iter().product();
    Ok(WittenOperator {
        h,
        degree: 0,
        scheme,
        matrix: SparseMatrix::from_triplets(row_cells.len(), col_cells.len(), trip),
        row_cells,
        col_cells,
        cell_weight,
        lower_boundary: domain.lower_boundary.clone(),
        upper_boundary: domain.upper_boundary.clone(),
        warnings: resolution_warnings(field, h),
    })
}

pub fn assemble_d1_torus(field: &SampledField, h: f64) -> Result<WittenOperator, WittenError> {
    assemble_d1_with(field, h, &WindowDomain::full(field), Scheme::Fitted)
}

pub fn assemble_d1_with(
    field: &SampledField,
    h: f64,
    domain: &WindowDomain,
    scheme: Scheme,
) -> Result<WittenOperator, WittenError> {
    check_h(h)?;
    let t = &field.topology;
    if !matches!(t.kind, TopologyKind::Torus { .. }) {
        return Err(WittenError::NotTorus);
    }
    let f = &field.values;
    let (dx, dy) = (t.spacing[0], t.spacing[1]);
    let (col_map, col_cells) = reindex(&domain.active[1]);
    let (_, row_cells) = reindex(&domain.active[2]);
    let mut trip = Vec::with_capacity(4 * row_cells.len());
    for (r, &q) in row_cells.iter().enumerate() {
        let edges = t.face_edges(q);
        let mut entries = [0.0f64; 4];
        match scheme {
            Scheme::Fitted => {
                let logs: Vec<f64> = edges.iter().map(|&(e, _)| log_edge_weight(field, h, e)).collect();
                let log_face = logsumexp(&logs) - 4f64.ln();
                for (k, &(e, s)) in edges.iter().enumerate() {
                    // x-edges pair with ∂_y, y-edges with ∂_x.
                    let scale = if t.edge_axis(e) == 0 { h / dy } else { h / dx };
                    entries[k] = s as f64 * scale * (logs[k] - log_face).exp();
                }
            }
            Scheme::Midpoint => {
                // edges = [ex(i,j), ey(i+1,j), ex(i,j+1), ey(i,j)]
                let diff = |e: usize| {
                    let (a, b) = t.edge_vertices(e);
                    f[b] - f[a]
                };
                let fx = 0.5 * (diff(edges[0].0) + diff(edges[2].0)) / dx;
                let fy = 0.5 * (diff(edges[1].0) + diff(edges[3].0)) / dy;
                entries[0] = h / dy - 0.5 * fy;
                entries[1] = h / dx + 0.5 * fx;
                entries[2] = -h / dy - 0.5 * fy;
                entries[3] = -h / dx + 0.5 * fx;
            }
        }
        for (k, &(e, _)) in edges.iter().enumerate() {
            if col_map[e] != usize::MAX {
                trip.push((r, col_map[e], entries[k]));
            }
        }
    }
    Ok(WittenOperator {
        h,
        degree: 1,
        scheme,
        matrix: SparseMatrix::from_triplets(row_cells.len(), col_cells.len(), trip),
        row_cells,
        col_cells,
        cell_weight: dx * dy,
        lower_boundary: domain.lower_boundary.clone(),
        upper_boundary: domain.upper_boundary.clone(),
        warnings: resolution_warnings(field, h),
    })
}

/// Δ^{(p)} = d^{(p)ᵀ} d^{(p)} + d^{(p−1)} d^{(p−1)ᵀ}; either block may be absent.
pub fn laplacian(
    p: usize,
    lower: Option<&WittenOperator>,
    upper: Option<&WittenOperator>,
) -> Result<SparseMatrix, WittenError> {
    if let Some(u) = upper {
        if u.degree != p {
            return Err(WittenError::DimensionMismatch(format!("upper block has degree {}", u.degree)));
        }
    }
    if let Some(l) = lower {
        if l.degree + 1 != p {
            return Err(WittenError::DimensionMismatch(format!("lower block has degree {}", l.degree)));
        }
    }
    match (lower, upper) {
        (Some(l), Some(u)) => {
            if l.nrows() != u.ncols() {
                return Err(WittenError::DimensionMismatch(format!("{} rows vs {} columns", l.nrows(), u.ncols())));
            }
            let a = u.matrix.transpose().matmul(&u.matrix);
            let b = l.matrix.matmul(&l.matrix.transpose());
            Ok(a.add(&b))
        }
        (None, Some(u)) => Ok(u.matrix.transpose().matmul(&u.matrix)),
        (Some(l), None) => Ok(l.matrix.matmul(&l.matrix.transpose())),
        (None, None) => Err(WittenError::DimensionMismatch("no blocks".into())),
    }
}
