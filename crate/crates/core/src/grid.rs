//! Dyadic partitions of the unit hypercube `[0,1]^d`, sparse grid sets, and
//! set-to-set metrics (Hausdorff, symmetric-difference measure, inner
//! epsilon-cover diagnostic).
//!
//! Sets are compared through their cell-center point clouds. When both sets
//! live at the same resolution, center-to-center distances are integer
//! multiples of the sidelength, so all distance comparisons are done on
//! integer squared offsets and converted to the scalar type only at the very
//! end. The accelerated Hausdorff path (an exact squared-distance transform
//! over the full grid) therefore agrees bit-for-bit with the brute-force
//! double loop.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(u32, u32),
    #[error("dimension must be >= 1")]
    ZeroDimension,
    #[error("resolution level {0} too deep for cell addressing")]
    LevelTooDeep(u32),
    #[error("coordinate {value} on axis {axis} outside [0,1]")]
    CoordinateOutOfDomain { axis: usize, value: String },
    #[error("point has {got} coordinates, grid dimension is {expected}")]
    PointArity { expected: u32, got: usize },
    #[error("cell {0:?} not valid for grid (d={1}, j={2})")]
    InvalidCell(Vec<u64>, u32, u32),
    #[error("operation requires a nonempty set")]
    EmptySet,
    #[error("epsilon {eps} below twice the sidelength {side}")]
    EpsilonTooSmall { eps: String, side: String },
    #[error("grid set file: {0}")]
    Format(String),
}

/// Regular partition of `[0,1]^d` into hypercubes of sidelength `2^-j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DyadicGrid {
    d: u32,
    j: u32,
}

impl DyadicGrid {
    pub fn new(d: u32, j: u32) -> Result<Self, GridError> {
        if d == 0 {
            return Err(GridError::ZeroDimension);
        }
        if j >= 63 {
            return Err(GridError::LevelTooDeep(j));
        }
        Ok(Self { d, j })
    }

    pub fn dim(&self) -> u32 {
        self.d
    }

    pub fn level(&self) -> u32 {
        self.j
    }

    /// `2^-j`, exact in any binary float type.
    pub fn sidelength<F: Real>(&self) -> F {
        F::exp2i(-(self.j as i32))
    }

    pub fn cells_per_axis(&self) -> u64 {
        1u64 << self.j
    }

    /// `2^(jd)`, as u128 so deep 3-d grids cannot overflow.
    pub fn total_cells(&self) -> u128 {
        1u128 << (self.j as u64 * self.d as u64)
    }

    /// Cell measure `2^(-jd)`.
    pub fn cell_measure<F: Real>(&self) -> F {
        F::exp2i(-((self.j * self.d) as i32))
    }

    /// Maps a point to the cell containing it. Cells are half-open,
    /// `[k 2^-j, (k+1) 2^-j)`, except that coordinate 1.0 maps to the last
    /// cell along its axis.
    pub fn locate<F: Real>(&self, point: &[F]) -> Result<CellIndex, GridError> {
        if point.len() != self.d as usize {
            return Err(GridError::PointArity {
                expected: self.d,
                got: point.len(),
            });
        }
        let m = self.cells_per_axis();
        let mut coords = Vec::with_capacity(point.len());
        for (axis, &x) in point.iter().enumerate() {
            if !(x >= F::zero() && x <= F::one()) {
                return Err(GridError::CoordinateOutOfDomain {
                    axis,
                    value: format!("{x}"),
                });
            }
            let k = (x * F::of_u64(m)).floor();
            let k = k.to_u64().unwrap_or(m - 1).min(m - 1);
            coords.push(k);
        }
        Ok(CellIndex { coords })
    }

    /// Center of a cell: `((k_i + 1/2) 2^-j)_i`.
    pub fn center<F: Real>(&self, cell: &CellIndex) -> Vec<F> {
        let s = self.sidelength::<F>();
        cell.coords
            .iter()
            .map(|&k| (F::of_u64(k) + F::half()) * s)
            .collect()
    }

    pub fn contains_cell(&self, cell: &CellIndex) -> bool {
        cell.coords.len() == self.d as usize && cell.coords.iter().all(|&k| k < self.cells_per_axis())
    }
}

/// Address of one cell: `d` per-axis indices, each in `[0, 2^j)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellIndex {
    coords: Vec<u64>,
}

impl CellIndex {
    pub fn new(coords: Vec<u64>) -> Self {
        Self { coords }
    }

    pub fn coords(&self) -> &[u64] {
        &self.coords
    }

    /// Parent cell `shift` levels coarser.
    pub fn coarsen(&self, shift: u32) -> CellIndex {
        CellIndex {
            coords: self.coords.iter().map(|&k| k >> shift).collect(),
        }
    }

    fn sq_dist_to(&self, other: &CellIndex) -> u64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(&a, &b)| {
                let dk = a.abs_diff(b);
                dk * dk
            })
            .sum()
    }
}

/// Finite union of cells at one resolution, stored sparsely and iterated in
/// lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSet {
    grid: DyadicGrid,
    members: BTreeSet<CellIndex>,
}

impl GridSet {
    pub fn empty(grid: DyadicGrid) -> Self {
        Self {
            grid,
            members: BTreeSet::new(),
        }
    }

    pub fn from_cells<I>(grid: DyadicGrid, cells: I) -> Result<Self, GridError>
    where
        I: IntoIterator<Item = CellIndex>,
    {
        let mut set = Self::empty(grid);
        for c in cells {
            set.insert(c)?;
        }
        Ok(set)
    }

    /// Rasterizes a region by cell-center membership.
    pub fn from_center_predicate<F, P>(grid: DyadicGrid, mut pred: P) -> Self
    where
        F: Real,
        P: FnMut(&[F]) -> bool,
    {
        let mut members = BTreeSet::new();
        for cell in all_cells(&grid) {
            if pred(&grid.center::<F>(&cell)) {
                members.insert(cell);
            }
        }
        Self { grid, members }
    }

    pub fn insert(&mut self, cell: CellIndex) -> Result<(), GridError> {
        if !self.grid.contains_cell(&cell) {
            return Err(GridError::InvalidCell(
                cell.coords.clone(),
                self.grid.dim(),
                self.grid.level(),
            ));
        }
        self.members.insert(cell);
        Ok(())
    }

    pub fn grid(&self) -> &DyadicGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, cell: &CellIndex) -> bool {
        self.members.contains(cell)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CellIndex> {
        self.members.iter()
    }

    /// Lebesgue measure of the cell union: `|members| * 2^(-jd)`.
    pub fn measure<F: Real>(&self) -> F {
        F::of_usize(self.members.len()) * self.grid.cell_measure::<F>()
    }

    /// Exact refinement to a finer level by cell subdivision.
    pub fn refine(&self, j_target: u32) -> Result<GridSet, GridError> {
        let j = self.grid.level();
        assert!(j_target >= j, "refine only subdivides toward finer levels");
        let grid = DyadicGrid::new(self.grid.dim(), j_target)?;
        let shift = j_target - j;
        let d = self.grid.dim() as usize;
        let mut members = BTreeSet::new();
        for cell in &self.members {
            let base: Vec<u64> = cell.coords.iter().map(|&k| k << shift).collect();
            let mut offsets = vec![0u64; d];
            loop {
                members.insert(CellIndex {
                    coords: base.iter().zip(&offsets).map(|(&b, &o)| b + o).collect(),
                });
                if !next_offset(&mut offsets, 1 << shift) {
                    break;
                }
            }
        }
        Ok(GridSet { grid, members })
    }
}

/// Iterates every cell of a grid in lexicographic order.
pub fn all_cells(grid: &DyadicGrid) -> impl Iterator<Item = CellIndex> {
    let d = grid.dim() as usize;
    let m = grid.cells_per_axis();
    let total = grid.total_cells();
    let mut coords = vec![0u64; d];
    let mut emitted: u128 = 0;
    std::iter::from_fn(move || {
        if emitted == total {
            return None;
        }
        let out = CellIndex {
            coords: coords.clone(),
        };
        emitted += 1;
        next_offset(&mut coords, m);
        Some(out)
    })
}

fn next_offset(coords: &mut [u64], m: u64) -> bool {
    for k in coords.iter_mut().rev() {
        *k += 1;
        if *k < m {
            return true;
        }
        *k = 0;
    }
    false
}

fn check_dims(a: &GridSet, b: &GridSet) -> Result<(), GridError> {
    if a.grid.dim() != b.grid.dim() {
        return Err(GridError::DimensionMismatch(a.grid.dim(), b.grid.dim()));
    }
    Ok(())
}

/// Diameter of the domain, `sqrt(d)`: the Hausdorff value assigned when
/// either input set is empty.
fn domain_diameter<F: Real>(d: u32) -> F {
    F::of_u64(d as u64).sqrt()
}

/// Hausdorff distance between the cell-center clouds of two grid sets.
///
/// Same-resolution inputs go through an exact squared-distance transform
/// when the full grid is small enough to enumerate; every other case falls
/// back to the double loop. Both paths agree exactly.
pub fn hausdorff<F: Real>(a: &GridSet, b: &GridSet) -> Result<F, GridError> {
    check_dims(a, b)?;
    if a.is_empty() || b.is_empty() {
        return Ok(domain_diameter(a.grid.dim()));
    }
    let same_res = a.grid.level() == b.grid.level();
    if same_res {
        let total = a.grid.total_cells();
        let pairs = a.len() as u128 * b.len() as u128;
        if total <= EDT_MAX_CELLS && pairs > 4 * total {
            let m2 = hausdorff_sq_edt(a, b);
            return Ok(F::of_u64(m2).sqrt() * a.grid.sidelength::<F>());
        }
    }
    hausdorff_bruteforce(a, b)
}

/// Reference Hausdorff: the O(|A| * |B|) double loop with no acceleration
/// structure. Intended for small sets and as the oracle for `hausdorff`.
pub fn hausdorff_bruteforce<F: Real>(a: &GridSet, b: &GridSet) -> Result<F, GridError> {
    check_dims(a, b)?;
    if a.is_empty() || b.is_empty() {
        return Ok(domain_diameter(a.grid.dim()));
    }
    if a.grid.level() == b.grid.level() {
        let ab = directed_sup_sq_int(a, b);
        let ba = directed_sup_sq_int(b, a);
        Ok(F::of_u64(ab.max(ba)).sqrt() * a.grid.sidelength::<F>())
    } else {
        let ca: Vec<Vec<F>> = a.iter().map(|c| a.grid.center(c)).collect();
        let cb: Vec<Vec<F>> = b.iter().map(|c| b.grid.center(c)).collect();
        let ab = directed_sup_sq_float(&ca, &cb);
        let ba = directed_sup_sq_float(&cb, &ca);
        Ok(ab.max(ba).sqrt())
    }
}

fn directed_sup_sq_int(from: &GridSet, to: &GridSet) -> u64 {
    let targets: Vec<&CellIndex> = to.iter().collect();
    let mut sup = 0u64;
    for c in from.iter() {
        let mut best = u64::MAX;
        for t in &targets {
            best = best.min(c.sq_dist_to(t));
            if best == 0 {
                break;
            }
        }
        sup = sup.max(best);
    }
    sup
}

fn directed_sup_sq_float<F: Real>(from: &[Vec<F>], to: &[Vec<F>]) -> F {
    let mut sup = F::zero();
    for p in from {
        let mut best = F::infinity();
        for q in to {
            let d2 = p
                .iter()
                .zip(q)
                .map(|(&x, &y)| (x - y) * (x - y))
                .fold(F::zero(), |acc, v| acc + v);
            if d2 < best {
                best = d2;
            }
        }
        if best > sup {
            sup = best;
        }
    }
    sup
}

const EDT_MAX_CELLS: u128 = 1 << 22;
const EDT_INF: i64 = i64::MAX / 4;

/// Max over both directed sups of integer squared center offsets, computed
/// with a full-grid exact squared Euclidean distance transform per side.
fn hausdorff_sq_edt(a: &GridSet, b: &GridSet) -> u64 {
    let dt_b = squared_distance_transform(b);
    let dt_a = squared_distance_transform(a);
    let sup_ab = a
        .iter()
        .map(|c| dt_b[flat_index(&a.grid, c)])
        .max()
        .unwrap_or(0);
    let sup_ba = b
        .iter()
        .map(|c| dt_a[flat_index(&b.grid, c)])
        .max()
        .unwrap_or(0);
    sup_ab.max(sup_ba) as u64
}

fn flat_index(grid: &DyadicGrid, cell: &CellIndex) -> usize {
    let m = grid.cells_per_axis();
    let mut f: u64 = 0;
    for &k in cell.coords() {
        f = f * m + k;
    }
    f as usize
}

/// Exact squared Euclidean distance transform over the full grid, in
/// units of cells, by per-axis lower envelopes of parabolas.
fn squared_distance_transform(sources: &GridSet) -> Vec<i64> {
    let grid = &sources.grid;
    let d = grid.dim() as usize;
    let m = grid.cells_per_axis() as usize;
    let total = grid.total_cells() as usize;

    let mut dist = vec![EDT_INF; total];
    for c in sources.iter() {
        dist[flat_index(grid, c)] = 0;
    }

    let mut line = vec![0i64; m];
    let mut out = vec![0i64; m];
    let mut v = vec![0usize; m];
    let mut z = vec![0f64; m + 1];

    // Axes are transformed last-to-first; the stride of the axis being
    // scanned is `stride`, and lines are enumerated over the remaining axes.
    let mut stride = 1usize;
    for _axis in (0..d).rev() {
        let block = stride * m;
        let blocks = total / block;
        for blk in 0..blocks {
            let base = blk * block;
            for off in 0..stride {
                let start = base + off;
                for i in 0..m {
                    line[i] = dist[start + i * stride];
                }
                dt_1d(&line, &mut out, &mut v, &mut z);
                for i in 0..m {
                    dist[start + i * stride] = out[i];
                }
            }
        }
        stride *= m;
    }
    dist
}

fn dt_1d(f: &[i64], out: &mut [i64], v: &mut [usize], z: &mut [f64]) {
    let m = f.len();
    if m == 1 {
        out[0] = f[0];
        return;
    }
    // Intersection abscissa of the parabolas rooted at q and p; the
    // numerator is exact in i64, so the only rounding is the final divide.
    let sect = |q: usize, p: usize| -> f64 {
        ((f[q] + (q * q) as i64) - (f[p] + (p * p) as i64)) as f64 / (2 * (q - p)) as f64
    };
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..m {
        let mut s = sect(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = sect(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0usize;
    for q in 0..m {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as i64 - p as i64;
        out[q] = dq * dq + f[p];
    }
}

/// Lebesgue measure of the symmetric difference of two cell unions. Inputs
/// at different resolutions are first brought to the finer one by exact
/// cell subdivision.
pub fn symmetric_difference_measure<F: Real>(a: &GridSet, b: &GridSet) -> Result<F, GridError> {
    check_dims(a, b)?;
    let ja = a.grid.level();
    let jb = b.grid.level();
    let j = ja.max(jb);
    let ra;
    let rb;
    let (a, b) = if ja == jb {
        (a, b)
    } else if ja < jb {
        ra = a.refine(j)?;
        (&ra, b)
    } else {
        rb = b.refine(j)?;
        (a, &rb)
    };
    let common = a.members.intersection(&b.members).count();
    let differing = a.len() + b.len() - 2 * common;
    Ok(F::of_usize(differing) * a.grid.cell_measure::<F>())
}

/// Diagnostic for the inner epsilon-cover regularity of a grid set: the
/// largest distance from a boundary cell center to the discrete inner
/// cover (centers whose surrounding epsilon-ball of centers lies wholly in
/// the set). Returns `+inf` when the discrete inner cover is empty.
pub fn inner_cover_distance<F: Real>(g: &GridSet, epsilon: F) -> Result<F, GridError> {
    if g.is_empty() {
        return Err(GridError::EmptySet);
    }
    let side = g.grid.sidelength::<F>();
    if epsilon < F::two() * side {
        return Err(GridError::EpsilonTooSmall {
            eps: format!("{epsilon}"),
            side: format!("{side}"),
        });
    }
    let d = g.grid.dim() as usize;
    let m = g.grid.cells_per_axis();

    // Integer offsets o with |o| * side <= epsilon.
    let r = (epsilon / side).to_f64().unwrap();
    let r_cells = r.floor() as i64;
    let r2_limit = r * r + 1e-9;
    let mut ball_offsets: Vec<Vec<i64>> = Vec::new();
    let mut off = vec![-r_cells; d];
    'outer: loop {
        let norm2: i64 = off.iter().map(|&o| o * o).sum();
        if (norm2 as f64) <= r2_limit {
            ball_offsets.push(off.clone());
        }
        for i in (0..d).rev() {
            off[i] += 1;
            if off[i] <= r_cells {
                continue 'outer;
            }
            if i == 0 {
                break 'outer;
            }
            off[i] = -r_cells;
        }
    }

    let shifted = |c: &CellIndex, o: &[i64]| -> Option<CellIndex> {
        let mut coords = Vec::with_capacity(d);
        for (&k, &ov) in c.coords().iter().zip(o) {
            let s = k as i64 + ov;
            if s < 0 || s as u64 >= m {
                return None;
            }
            coords.push(s as u64);
        }
        Some(CellIndex::new(coords))
    };

    // Discrete inner cover: member cells whose whole center-ball is in G.
    let mut cover: Vec<CellIndex> = Vec::new();
    for c in g.iter() {
        let covered = ball_offsets.iter().all(|o| match shifted(c, o) {
            Some(nb) => g.contains(&nb),
            None => true, // no lattice center exists there
        });
        if covered {
            cover.push(c.clone());
        }
    }

    // Boundary cells: members with a face-adjacent nonmember inside the grid.
    let mut boundary: Vec<CellIndex> = Vec::new();
    for c in g.iter() {
        let mut is_boundary = false;
        for axis in 0..d {
            for delta in [-1i64, 1] {
                let mut o = vec![0i64; d];
                o[axis] = delta;
                if let Some(nb) = shifted(c, &o) {
                    if !g.contains(&nb) {
                        is_boundary = true;
                    }
                }
            }
        }
        if is_boundary {
            boundary.push(c.clone());
        }
    }

    if cover.is_empty() {
        return Ok(F::infinity());
    }
    let mut sup = F::zero();
    for b in &boundary {
        let best = cover.iter().map(|c| b.sq_dist_to(c)).min().unwrap();
        let dist = F::of_u64(best).sqrt() * side;
        if dist > sup {
            sup = dist;
        }
    }
    Ok(sup)
}

#[derive(Serialize, Deserialize)]
struct GridSetFile {
    d: u32,
    j: u32,
    cells: Vec<Vec<u64>>,
}

impl GridSet {
    /// Canonical JSON encoding: `{"d":..,"j":..,"cells":[[..],..]}` with
    /// cells in lexicographic order. Writing what was read reproduces the
    /// bytes exactly.
    pub fn to_json_string(&self) -> String {
        let file = GridSetFile {
            d: self.grid.dim(),
            j: self.grid.level(),
            cells: self.iter().map(|c| c.coords().to_vec()).collect(),
        };
        serde_json::to_string(&file).expect("grid set serialization")
    }

    pub fn from_json_str(s: &str) -> Result<Self, GridError> {
        let file: GridSetFile =
            serde_json::from_str(s).map_err(|e| GridError::Format(e.to_string()))?;
        let grid = DyadicGrid::new(file.d, file.j)?;
        let mut set = GridSet::empty(grid);
        for coords in file.cells {
            set.insert(CellIndex::new(coords))?;
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set_1d(j: u32, cells: &[u64]) -> GridSet {
        let grid = DyadicGrid::new(1, j).unwrap();
        GridSet::from_cells(grid, cells.iter().map(|&k| CellIndex::new(vec![k]))).unwrap()
    }

    #[test]
    fn locate_origin_lands_in_first_cell() {
        let grid = DyadicGrid::new(3, 3).unwrap();
        let c = grid.locate(&[0.0f64, 0.0, 0.0]).unwrap();
        assert_eq!(c.coords(), &[0, 0, 0]);
    }

    #[test]
    fn locate_upper_boundary_maps_to_last_cell() {
        let grid = DyadicGrid::new(1, 2).unwrap();
        let c = grid.locate(&[1.0f64]).unwrap();
        assert_eq!(c.coords(), &[3]);
    }

    #[test]
    fn locate_matches_per_axis_floor() {
        // floor(0.30 * 4) = 1, floor(0.70 * 4) = 2
        let grid = DyadicGrid::new(2, 2).unwrap();
        let c = grid.locate(&[0.30f64, 0.70]).unwrap();
        assert_eq!(c.coords(), &[1, 2]);
    }

    #[test]
    fn locate_rejects_out_of_domain() {
        let grid = DyadicGrid::new(1, 2).unwrap();
        assert!(grid.locate(&[-0.1f64]).is_err());
        assert!(grid.locate(&[1.1f64]).is_err());
        assert!(grid.locate(&[f64::NAN]).is_err());
    }

    #[test]
    fn center_round_trips_through_locate() {
        let grid = DyadicGrid::new(2, 4).unwrap();
        for cell in all_cells(&grid) {
            let center: Vec<f64> = grid.center(&cell);
            assert_eq!(grid.locate(&center).unwrap(), cell);
        }
    }

    #[test]
    fn hausdorff_identity_is_zero() {
        let g = set_1d(3, &[1, 4, 6]);
        assert_eq!(hausdorff::<f64>(&g, &g).unwrap(), 0.0);
    }

    #[test]
    fn hausdorff_1d_end_cells() {
        // centers 0.125 and 0.875
        let a = set_1d(2, &[0]);
        let b = set_1d(2, &[3]);
        assert_eq!(hausdorff::<f64>(&a, &b).unwrap(), 0.75);
    }

    #[test]
    fn hausdorff_empty_returns_domain_diameter() {
        let grid = DyadicGrid::new(2, 2).unwrap();
        let empty = GridSet::empty(grid);
        let mut one = GridSet::empty(grid);
        one.insert(CellIndex::new(vec![1, 1])).unwrap();
        let expect = 2.0f64.sqrt();
        assert_eq!(hausdorff::<f64>(&one, &empty).unwrap(), expect);
        assert_eq!(hausdorff::<f64>(&empty, &one).unwrap(), expect);
        assert_eq!(hausdorff::<f64>(&empty, &empty).unwrap(), expect);
        assert_eq!(hausdorff_bruteforce::<f64>(&empty, &one).unwrap(), expect);
    }

    #[test]
    fn hausdorff_dimension_mismatch_is_error() {
        let a = set_1d(2, &[0]);
        let grid2 = DyadicGrid::new(2, 2).unwrap();
        let b = GridSet::empty(grid2);
        assert!(hausdorff::<f64>(&a, &b).is_err());
    }

    #[test]
    fn bruteforce_directed_sup_case() {
        // centers 0.25, 0.75; sup over B of dist to A is 0.5
        let a = set_1d(1, &[0]);
        let b = set_1d(1, &[0, 1]);
        assert_eq!(hausdorff_bruteforce::<f64>(&a, &b).unwrap(), 0.5);
    }

    #[test]
    fn bruteforce_singleton_zero() {
        let a = set_1d(4, &[9]);
        assert_eq!(hausdorff_bruteforce::<f64>(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn symdiff_examples() {
        let a = set_1d(1, &[0]);
        let b = set_1d(1, &[1]);
        assert_eq!(symmetric_difference_measure::<f64>(&a, &a).unwrap(), 0.0);
        assert_eq!(symmetric_difference_measure::<f64>(&a, &b).unwrap(), 1.0);

        let grid2 = DyadicGrid::new(2, 1).unwrap();
        let a2 = GridSet::from_cells(grid2, [CellIndex::new(vec![0, 0])]).unwrap();
        let b2 = GridSet::from_cells(
            grid2,
            [CellIndex::new(vec![0, 0]), CellIndex::new(vec![1, 1])],
        )
        .unwrap();
        assert_eq!(symmetric_difference_measure::<f64>(&a2, &b2).unwrap(), 0.25);
    }

    #[test]
    fn symdiff_mixed_resolution_refines_coarser() {
        // [0, 0.5) at j=1 vs [0, 0.25) at j=2: difference is [0.25, 0.5).
        let a = set_1d(1, &[0]);
        let b = set_1d(2, &[0]);
        assert_eq!(symmetric_difference_measure::<f64>(&a, &b).unwrap(), 0.25);
    }

    #[test]
    fn inner_cover_full_grid_is_small() {
        let grid = DyadicGrid::new(2, 3).unwrap();
        let full = GridSet::from_cells(grid, all_cells(&grid)).unwrap();
        let eps = 0.25f64;
        let v = inner_cover_distance(&full, eps).unwrap();
        assert!(v <= eps, "{v}");
    }

    #[test]
    fn inner_cover_square_block() {
        // 8x8 block at j=4, eps = 0.125 = 2 sidelengths.
        let grid = DyadicGrid::new(2, 4).unwrap();
        let mut g = GridSet::empty(grid);
        for x in 4..12u64 {
            for y in 4..12u64 {
                g.insert(CellIndex::new(vec![x, y])).unwrap();
            }
        }
        let eps = 0.125f64;
        let v = inner_cover_distance(&g, eps).unwrap();
        assert!(v.is_finite());
        assert!(v <= 2.0 * eps, "{v}");

        // brute-force re-derivation of the same quantity
        let side = 1.0 / 16.0;
        let members: Vec<&CellIndex> = g.iter().collect();
        let cover: Vec<&CellIndex> = members
            .iter()
            .copied()
            .filter(|c| {
                all_cells(&grid)
                    .filter(|o| {
                        let d2 = c.sq_dist_to(o) as f64;
                        d2.sqrt() * side <= eps + 1e-12
                    })
                    .all(|o| g.contains(&o))
            })
            .collect();
        let boundary: Vec<&CellIndex> = members
            .iter()
            .copied()
            .filter(|c| {
                let k = c.coords();
                [k[0] as i64 - 1, k[0] as i64 + 1]
                    .iter()
                    .any(|&x| x >= 0 && x < 16 && !g.contains(&CellIndex::new(vec![x as u64, k[1]])))
                    || [k[1] as i64 - 1, k[1] as i64 + 1].iter().any(|&y| {
                        y >= 0 && y < 16 && !g.contains(&CellIndex::new(vec![k[0], y as u64]))
                    })
            })
            .collect();
        let brute = boundary
            .iter()
            .map(|b| {
                cover
                    .iter()
                    .map(|c| (b.sq_dist_to(c) as f64).sqrt() * side)
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0f64, f64::max);
        assert!((v - brute).abs() < 1e-12, "impl {v} vs brute {brute}");
    }

    #[test]
    fn inner_cover_thin_ribbon_is_infinite() {
        let grid = DyadicGrid::new(2, 4).unwrap();
        let mut g = GridSet::empty(grid);
        for x in 0..16u64 {
            g.insert(CellIndex::new(vec![x, 7])).unwrap();
        }
        let side: f64 = grid.sidelength();
        let v = inner_cover_distance(&g, 4.0 * side).unwrap();
        assert!(v.is_infinite());
    }

    #[test]
    fn inner_cover_rejects_empty_and_small_eps() {
        let grid = DyadicGrid::new(1, 3).unwrap();
        let empty = GridSet::empty(grid);
        assert!(inner_cover_distance(&empty, 0.5f64).is_err());
        let g = set_1d(3, &[2, 3]);
        assert!(inner_cover_distance(&g, 0.1f64).is_err());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let grid = DyadicGrid::new(2, 3).unwrap();
        let g = GridSet::from_cells(
            grid,
            [
                CellIndex::new(vec![7, 0]),
                CellIndex::new(vec![0, 3]),
                CellIndex::new(vec![0, 1]),
            ],
        )
        .unwrap();
        let s = g.to_json_string();
        assert_eq!(s, r#"{"d":2,"j":3,"cells":[[0,1],[0,3],[7,0]]}"#);
        let back = GridSet::from_json_str(&s).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_json_string(), s);
    }

    #[test]
    fn json_rejects_out_of_range_cells() {
        assert!(GridSet::from_json_str(r#"{"d":1,"j":2,"cells":[[4]]}"#).is_err());
        assert!(GridSet::from_json_str(r#"{"d":2,"j":2,"cells":[[1]]}"#).is_err());
    }

    #[test]
    fn measure_of_grid_set() {
        let g = set_1d(3, &[0, 5]);
        assert_eq!(g.measure::<f64>(), 0.25);
    }

    #[test]
    fn refine_preserves_measure() {
        let g = set_1d(2, &[1, 3]);
        let r = g.refine(5).unwrap();
        assert_eq!(g.measure::<f64>(), r.measure::<f64>());
        assert_eq!(r.len(), 2 * 8);
    }

    #[test]
    fn edt_path_matches_bruteforce_on_dense_sets() {
        // Dense enough that the accelerated path engages.
        let grid = DyadicGrid::new(2, 5).unwrap();
        let mut a = GridSet::empty(grid);
        let mut b = GridSet::empty(grid);
        for x in 0..32u64 {
            for y in 0..32u64 {
                if (x * 31 + y * 17) % 3 == 0 {
                    a.insert(CellIndex::new(vec![x, y])).unwrap();
                }
                if (x * 13 + y * 7) % 4 == 1 {
                    b.insert(CellIndex::new(vec![x, y])).unwrap();
                }
            }
        }
        assert!(a.len() as u128 * b.len() as u128 > 4 * grid.total_cells());
        let fast: f64 = hausdorff(&a, &b).unwrap();
        let slow: f64 = hausdorff_bruteforce(&a, &b).unwrap();
        assert_eq!(fast, slow);
    }

    fn arb_set(d: u32, j: u32, max_cells: usize) -> impl Strategy<Value = GridSet> {
        let m = 1u64 << j;
        prop::collection::vec(prop::collection::vec(0..m, d as usize), 1..=max_cells).prop_map(
            move |cells| {
                let grid = DyadicGrid::new(d, j).unwrap();
                GridSet::from_cells(grid, cells.into_iter().map(CellIndex::new)).unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn prop_hausdorff_symmetric((a, b) in (1u32..=3).prop_flat_map(|d| {
            let j = if d == 1 { 5 } else { 3 };
            (arb_set(d, j, 20), arb_set(d, j, 20))
        })) {
            let ab: f64 = hausdorff(&a, &b).unwrap();
            let ba: f64 = hausdorff(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
        }

        #[test]
        fn prop_hausdorff_zero_iff_equal_clouds((a, b) in (arb_set(2, 3, 12), arb_set(2, 3, 12))) {
            let h: f64 = hausdorff(&a, &b).unwrap();
            prop_assert_eq!(h == 0.0, a == b);
        }

        #[test]
        fn prop_triangle_inequality((a, b, c) in (arb_set(2, 3, 10), arb_set(2, 3, 10), arb_set(2, 3, 10))) {
            let ac: f64 = hausdorff(&a, &c).unwrap();
            let ab: f64 = hausdorff(&a, &b).unwrap();
            let bc: f64 = hausdorff(&b, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
        }

        #[test]
        fn prop_oracle_equivalence((a, b) in (1u32..=3).prop_flat_map(|d| {
            let j = if d == 1 { 6 } else { 2 };
            (arb_set(d, j, 30), arb_set(d, j, 30))
        })) {
            let fast: f64 = hausdorff(&a, &b).unwrap();
            let slow: f64 = hausdorff_bruteforce(&a, &b).unwrap();
            prop_assert_eq!(fast, slow);
        }

        #[test]
        fn prop_symdiff_measure_identity((a, b) in (arb_set(2, 3, 12), arb_set(2, 3, 12))) {
            let ab: f64 = symmetric_difference_measure(&a, &b).unwrap();
            let inter = a.iter().filter(|c| b.contains(c)).count();
            let expected = a.measure::<f64>() + b.measure::<f64>()
                - 2.0 * (inter as f64) * a.grid().cell_measure::<f64>();
            prop_assert!((ab - expected).abs() < 1e-12);
        }

        #[test]
        fn prop_json_round_trip(a in arb_set(3, 2, 16)) {
            let s = a.to_json_string();
            let back = GridSet::from_json_str(&s).unwrap();
            prop_assert_eq!(&back, &a);
            prop_assert_eq!(back.to_json_string(), s);
        }
    }

    #[test]
    fn rasterization_consistency_across_levels() {
        // Rasterizing a fixed continuum region at j and j+1 keeps the two
        // clouds within sqrt(d) * 2^-j of each other.
        let ball = |p: &[f64]| {
            let dx = p[0] - 0.5;
            let dy = p[1] - 0.55;
            (dx * dx + dy * dy).sqrt() <= 0.3
        };
        for j in 2..6u32 {
            let g1 = GridSet::from_center_predicate::<f64, _>(DyadicGrid::new(2, j).unwrap(), ball);
            let g2 =
                GridSet::from_center_predicate::<f64, _>(DyadicGrid::new(2, j + 1).unwrap(), ball);
            let h: f64 = hausdorff(&g1, &g2).unwrap();
            let bound = (2.0f64).sqrt() * 2.0f64.powi(-(j as i32));
            assert!(h <= bound + 1e-12, "j={j}: {h} > {bound}");
        }
    }
}
