//! Lower-star cubical filtrations, bar codes by column reduction, and an
//! independent relative Betti number oracle.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::field::{LevelWindow, SampledField};
use crate::field::GridTopology;
use crate::numeric::ext_f64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PersistenceError {
    #[error("window endpoint {0} coincides with a node value")]
    CriticalEndpoint(f64),
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("invalid filtration order: {0}")]
    InvalidOrder(String),
    #[error("unknown coefficient field {0:?}")]
    UnknownField(String),
}

/// Coefficient field for the reduction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientField {
    Prime(u64),
    Rationals,
}

impl Default for CoefficientField {
    fn default() -> Self {
        CoefficientField::Prime(2)
    }
}

impl fmt::Display for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoefficientField::Prime(p) => write!(f, "GF({p})"),
            CoefficientField::Rationals => write!(f, "Q"),
        }
    }
}

impl std::str::FromStr for CoefficientField {
    type Err = PersistenceError;

    /// Accepts `2`, `gf2`, `GF(3)`, `q`, `rationals`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        if t == "q" || t == "rationals" || t == "rational" {
            return Ok(CoefficientField::Rationals);
        }
        let digits = t.trim_start_matches("gf").trim_start_matches('(').trim_end_matches(')');
        let p: u64 = digits.parse().map_err(|_| PersistenceError::UnknownField(s.to_string()))?;
        CoefficientField::prime(p)
    }
}

impl CoefficientField {
    pub fn prime(p: u64) -> Result<Self, PersistenceError> {
        let is_prime = p >= 2 && (2..).take_while(|d| d * d <= p).all(|d| p % d != 0);
        if !is_prime || p >= 1 << 31 {
            return Err(PersistenceError::NotPrime(p));
        }
        Ok(CoefficientField::Prime(p))
    }
}

/// Field arithmetic needed by the reductions.
pub trait Scalar: Clone + fmt::Debug {
    fn from_i64(v: i64, field: &CoefficientField) -> Self;
    fn is_zero(&self) -> bool;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn div(&self, other: &Self) -> Self;
}

/// Element of GF(p).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fp {
    v: u64,
    p: u64,
}

impl Fp {
    fn pow(self, mut e: u64) -> Fp {
        let mut base = self.v;
        let mut acc = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base % self.p;
            }
            base = base * base % self.p;
            e >>= 1;
        }
        Fp { v: acc, p: self.p }
    }
}

impl Scalar for Fp {
    fn from_i64(v: i64, field: &CoefficientField) -> Self {
        let p = match field {
            CoefficientField::Prime(p) => *p,
            CoefficientField::Rationals => panic!("Fp used with rational coefficients"),
        };
        Fp { v: v.rem_euclid(p as i64) as u64, p }
    }
    fn is_zero(&self) -> bool {
        self.v == 0
    }
    fn sub(&self, o: &Self) -> Self {
        Fp { v: (self.v + self.p - o.v) % self.p, p: self.p }
    }
    fn mul(&self, o: &Self) -> Self {
        Fp { v: self.v * o.v % self.p, p: self.p }
    }
    fn div(&self, o: &Self) -> Self {
        self.mul(&o.pow(self.p - 2))
    }
}

impl Scalar for BigRational {
    fn from_i64(v: i64, _: &CoefficientField) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
}

type Column<S> = Vec<(usize, S)>;

fn neg_in<S: Scalar>(x: &S, like: &S) -> S {
    like.sub(like).sub(x)
}

/// col -= factor * other, both sorted by row.
fn sub_scaled_in<S: Scalar>(col: &Column<S>, factor: &S, other: &Column<S>) -> Column<S> {
    let mut out = Vec::with_capacity(col.len() + other.len());
    let (mut i, mut j) = (0, 0);
    while i < col.len() || j < other.len() {
        if j >= other.len() || (i < col.len() && col[i].0 < other[j].0) {
            out.push(col[i].clone());
            i += 1;
        } else if i >= col.len() || other[j].0 < col[i].0 {
            out.push((other[j].0, neg_in(&factor.mul(&other[j].1), factor)));
            j += 1;
        } else {
            let v = col[i].1.sub(&factor.mul(&other[j].1));
            if !v.is_zero() {
                out.push((col[i].0, v));
            }
            i += 1;
            j += 1;
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub dim: usize,
    /// Index within its dimension (see [`GridTopology`] numbering).
    pub index: usize,
    pub value: f64,
}

/// Cells in filtration order with signed boundaries given as positions.
#[derive(Clone, Debug)]
pub struct CubicalFiltration {
    pub topology: GridTopology,
    pub cells: Vec<Cell>,
    pub boundary: Vec<Vec<(usize, i8)>>,
    /// position[dim][index] = place of that cell in `cells`.
    pub position: Vec<Vec<usize>>,
    pub source_hash: String,
}

/// Lower-star value and boundary (as (dim-1) indices) of every cell.
fn lower_star_cells(field: &SampledField) -> (Vec<Cell>, Vec<Vec<(usize, i8)>>) {
    let t = &field.topology;
    let v = &field.values;
    let mut cells = Vec::new();
    let mut bd = Vec::new();
    for i in 0..t.num_nodes() {
        cells.push(Cell { dim: 0, index: i, value: v[i] });
        bd.push(vec![]);
    }
    for e in 0..t.num_edges() {
        let (a, b) = t.edge_vertices(e);
        cells.push(Cell { dim: 1, index: e, value: v[a].max(v[b]) });
        bd.push(vec![(a, -1), (b, 1)]);
    }
    for q in 0..t.num_faces() {
        let value = t.face_vertices(q).iter().map(|&n| v[n]).fold(f64::NEG_INFINITY, f64::max);
        cells.push(Cell { dim: 2, index: q, value });
        bd.push(t.face_edges(q).to_vec());
    }
    (cells, bd)
}

fn cell_cmp(a: &Cell, b: &Cell) -> std::cmp::Ordering {
    a.value.total_cmp(&b.value).then(a.dim.cmp(&b.dim)).then(a.index.cmp(&b.index))
}

/// Lower-star filtration sorted by (value, dimension, index).
pub fn build_filtration(field: &SampledField) -> CubicalFiltration {
    let (cells, _) = lower_star_cells(field);
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by(|&i, &j| cell_cmp(&cells[i], &cells[j]));
    CubicalFiltration::assemble(field, order).expect("sorted order is admissible")
}

impl CubicalFiltration {
    /// Filtration with a caller-chosen order, given as a permutation of the
    /// natural cell list (vertices, then edges, then faces). The order must be
    /// non-decreasing in value and put every face before its cofaces.
    pub fn with_order(field: &SampledField, order: Vec<usize>) -> Result<Self, PersistenceError> {
        Self::assemble(field, order)
    }

    fn assemble(field: &SampledField, order: Vec<usize>) -> Result<Self, PersistenceError> {
        let (natural, bd) = lower_star_cells(field);
        let n = natural.len();
        let mut seen = vec![false; n];
        for &k in &order {
            if k >= n || seen[k] {
                return Err(PersistenceError::InvalidOrder("not a permutation".into()));
            }
            seen[k] = true;
        }
        if order.len() != n {
            return Err(PersistenceError::InvalidOrder("not a permutation".into()));
        }
        let t = &field.topology;
        let offsets = [0, t.num_nodes(), t.num_nodes() + t.num_edges()];
        let mut position = vec![vec![0; t.num_nodes()], vec![0; t.num_edges()], vec![0; t.num_faces()]];
        for (pos, &k) in order.iter().enumerate() {
            position[natural[k].dim][natural[k].index] = pos;
        }
        let mut cells = Vec::with_capacity(n);
        let mut boundary = Vec::with_capacity(n);
        for (pos, &k) in order.iter().enumerate() {
            let c = natural[k];
            if pos > 0 && cells.last().map_or(false, |p: &Cell| p.value > c.value) {
                return Err(PersistenceError::InvalidOrder("values decrease".into()));
            }
            let mut b: Vec<(usize, i8)> = Vec::new();
            for &(face, s) in &bd[k] {
                let fp = position[c.dim - 1][face];
                if fp >= pos {
                    return Err(PersistenceError::InvalidOrder(format!(
                        "face {} of cell {} comes later",
                        offsets[c.dim - 1] + face,
                        k
                    )));
                }
                match b.iter_mut().find(|(r, _)| *r == fp) {
                    Some(entry) => entry.1 += s,
                    None => b.push((fp, s)),
                }
            }
            b.retain(|&(_, s)| s != 0);
            b.sort_unstable();
            cells.push(c);
            boundary.push(b);
        }
        Ok(CubicalFiltration { topology: t.clone(), cells, boundary, position, source_hash: field.digest() })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn max_dim(&self) -> usize {
        self.cells.iter().map(|c| c.dim).max().unwrap_or(0)
    }

    /// Value of the cell (dim, index).
    pub fn value_of(&self, dim: usize, index: usize) -> f64 {
        self.cells[self.position[dim][index]].value
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub degree: usize,
    #[serde(with = "ext_f64")]
    pub birth: f64,
    #[serde(with = "ext_f64")]
    pub death: f64,
}

impl Bar {
    pub fn is_finite(&self) -> bool {
        self.death.is_finite()
    }

    pub fn length(&self) -> f64 {
        self.death - self.birth
    }
}

/// Graded bar code. Bar ids are positions in `bars`, which is kept sorted by
/// (degree, birth, death).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarCode {
    pub bars: Vec<Bar>,
    #[serde(default)]
    pub coefficient_field: CoefficientField,
    #[serde(default)]
    pub source_hash: String,
}

impl BarCode {
    /// Bar code with no provenance, GF(2) label.
    pub fn from_bars(mut bars: Vec<Bar>) -> Self {
        sort_bars(&mut bars);
        BarCode { bars, coefficient_field: CoefficientField::default(), source_hash: String::new() }
    }

    pub fn degree(&self, p: usize) -> impl Iterator<Item = (usize, &Bar)> {
        self.bars.iter().enumerate().filter(move |(_, b)| b.degree == p)
    }

    pub fn infinite_count(&self, p: usize) -> usize {
        self.degree(p).filter(|(_, b)| !b.is_finite()).count()
    }

    pub fn finite_bars(&self) -> impl Iterator<Item = (usize, &Bar)> {
        self.bars.iter().enumerate().filter(|(_, b)| b.is_finite())
    }

    pub fn max_degree(&self) -> usize {
        self.bars.iter().map(|b| b.degree).max().unwrap_or(0)
    }

    /// Degree-p bars born inside (a,b) and dying outside, plus degree-(p-1)
    /// bars dying inside and born outside. Equals β^p(f^b, f^a) for
    /// non-critical a, b.
    pub fn lonely_endpoint_count(&self, window: &LevelWindow, p: usize) -> usize {
        let born = self.degree(p).filter(|(_, b)| window.contains(b.birth) && !window.contains(b.death)).count();
        let died = if p == 0 {
            0
        } else {
            self.degree(p - 1).filter(|(_, b)| window.contains(b.death) && !window.contains(b.birth)).count()
        };
        born + died
    }

    /// `[{"degree":0,"birth":-1.0,"death":"inf"}, ...]`
    pub fn bars_json(&self) -> String {
        serde_json::to_string_pretty(&self.bars).expect("bars serialize")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bar code serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        if text.trim_start().starts_with('[') {
            let bars: Vec<Bar> = serde_json::from_str(text)?;
            return Ok(BarCode::from_bars(bars));
        }
        let mut bc: BarCode = serde_json::from_str(text)?;
        sort_bars(&mut bc.bars);
        Ok(bc)
    }

    /// Apply a monotone map to every endpoint.
    pub fn map_endpoints(&self, g: impl Fn(f64) -> f64) -> BarCode {
        let bars = self
            .bars
            .iter()
            .map(|b| Bar { degree: b.degree, birth: g(b.birth), death: if b.is_finite() { g(b.death) } else { b.death } })
            .collect();
        let mut bc = BarCode::from_bars(bars);
        bc.coefficient_field = self.coefficient_field;
        bc
    }
}

fn sort_bars(bars: &mut [Bar]) {
    bars.sort_by(|x, y| x.degree.cmp(&y.degree).then(x.birth.total_cmp(&y.birth)).then(x.death.total_cmp(&y.death)));
}

/// Bar code over GF(2).
pub fn barcode(filt: &CubicalFiltration) -> BarCode {
    barcode_over(filt, CoefficientField::default())
}

pub fn barcode_over(filt: &CubicalFiltration, field: CoefficientField) -> BarCode {
    let pairs = match field {
        CoefficientField::Prime(_) => reduce::<Fp>(filt, &field),
        CoefficientField::Rationals => reduce::<BigRational>(filt, &field),
    };
    let mut bars = Vec::new();
    for (birth, death) in pairs {
        let c = filt.cells[birth];
        match death {
            Some(d) => {
                let dv = filt.cells[d].value;
                if dv > c.value {
                    bars.push(Bar { degree: c.dim, birth: c.value, death: dv });
                }
            }
            None => bars.push(Bar { degree: c.dim, birth: c.value, death: f64::INFINITY }),
        }
    }
    sort_bars(&mut bars);
    BarCode { bars, coefficient_field: field, source_hash: filt.source_hash.clone() }
}

/// Column reduction with clearing. Returns (birth position, death position).
fn reduce<S: Scalar>(filt: &CubicalFiltration, field: &CoefficientField) -> Vec<(usize, Option<usize>)> {
    let n = filt.len();
    let mut pivot_col = vec![usize::MAX; n];
    let mut is_birth = vec![false; n];
    let mut reduced: Vec<Option<Column<S>>> = vec![None; n];
    let max_dim = filt.max_dim();
    let mut by_dim: Vec<Vec<usize>> = vec![vec![]; max_dim + 1];
    for (pos, c) in filt.cells.iter().enumerate() {
        by_dim[c.dim].push(pos);
    }
    for dim in (1..=max_dim).rev() {
        for &j in &by_dim[dim] {
            if is_birth[j] {
                continue;
            }
            let mut col: Column<S> = filt.boundary[j].iter().map(|&(r, s)| (r, S::from_i64(s as i64, field))).collect();
            while let Some((low, lv)) = col.last().cloned() {
                let k = pivot_col[low];
                if k == usize::MAX {
                    break;
                }
                let other = reduced[k].as_ref().unwrap();
                let factor = lv.div(&other.last().unwrap().1);
                col = sub_scaled_in(&col, &factor, other);
            }
            if let Some(&(low, _)) = col.last() {
                pivot_col[low] = j;
                is_birth[low] = true;
                reduced[j] = Some(col);
            }
        }
    }
    let mut out = Vec::new();
    for pos in 0..n {
        if is_birth[pos] {
            continue;
        }
        if reduced[pos].is_some() {
            continue;
        }
        // Positive cell with no partner.
        out.push((pos, None));
    }
    for (low, &j) in pivot_col.iter().enumerate() {
        if j != usize::MAX {
            out.push((low, Some(j)));
        }
    }
    out
}

/// β^p of the pair (f^b, f^a), by exact rank computation on the relative
/// complex of cells with a ≤ value < b.
pub fn relative_betti(filt: &CubicalFiltration, window: &LevelWindow, p: usize) -> Result<usize, PersistenceError> {
    relative_betti_over(filt, window, p, CoefficientField::default())
}

pub fn relative_betti_over(
    filt: &CubicalFiltration,
    window: &LevelWindow,
    p: usize,
    field: CoefficientField,
) -> Result<usize, PersistenceError> {
    for end in [window.a, window.b] {
        if end.is_finite() && filt.cells.iter().any(|c| c.dim == 0 && c.value == end) {
            return Err(PersistenceError::CriticalEndpoint(end));
        }
    }
    let active = |c: &Cell| window.a <= c.value && c.value < window.b;
    let n_p = filt.cells.iter().filter(|c| c.dim == p && active(c)).count();
    let r_p = if p == 0 { 0 } else { boundary_rank(filt, p, &active, field) };
    let r_p1 = boundary_rank(filt, p + 1, &active, field);
    Ok(n_p - r_p - r_p1)
}

/// Rank of ∂: C_dim → C_{dim-1} restricted to active cells, natural cell order.
fn boundary_rank(filt: &CubicalFiltration, dim: usize, active: &dyn Fn(&Cell) -> bool, field: CoefficientField) -> usize {
    match field {
        CoefficientField::Prime(_) => rank_generic::<Fp>(filt, dim, active, &field),
        CoefficientField::Rationals => rank_generic::<BigRational>(filt, dim, active, &field),
    }
}

fn rank_generic<S: Scalar>(
    filt: &CubicalFiltration,
    dim: usize,
    active: &dyn Fn(&Cell) -> bool,
    field: &CoefficientField,
) -> usize {
    if dim == 0 || dim >= filt.position.len() {
        return 0;
    }
    let lower = &filt.position[dim - 1];
    // Map positions of (dim-1)-cells back to their natural index.
    let mut natural_of = vec![usize::MAX; filt.len()];
    for (idx, &pos) in lower.iter().enumerate() {
        natural_of[pos] = idx;
    }
    let mut pivots: std::collections::HashMap<usize, Column<S>> = std::collections::HashMap::new();
    let mut rank = 0;
    for &pos in &filt.position[dim] {
        let c = &filt.cells[pos];
        if !active(c) {
            continue;
        }
        let mut col: Column<S> = filt.boundary[pos]
            .iter()
            .filter(|&&(r, _)| active(&filt.cells[r]))
            .map(|&(r, s)| (natural_of[r], S::from_i64(s as i64, field)))
            .collect();
        col.sort_by_key(|e| e.0);
        // Eliminate on the first (smallest) row.
        while let Some((first, fv)) = col.first().cloned() {
            match pivots.get(&first) {
                Some(other) => {
                    let factor = fv.div(&other[0].1);
                    col = sub_scaled_in(&col, &factor, other);
                }
                None => break,
            }
        }
        if let Some(&(first, _)) = col.first() {
            pivots.insert(first, col);
            rank += 1;
        }
    }
    rank
}

/// Betti numbers of the ambient grid: circle (1,1), interval (1), torus (1,2,1).
pub fn ambient_betti(t: &GridTopology) -> Vec<usize> {
    use crate::field::TopologyKind::*;
    match t.kind {
        Circle { .. } => vec![1, 1],
        Interval { .. } => vec![1],
        Torus { .. } => vec![1, 2, 1],
    }
}
