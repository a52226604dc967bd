//! Discretized source spaces: finite weighted metric spaces with an
//! interior/exterior partition, plus metric-ball queries.
//!
//! A [`PointCloudSpace`] stands in for a metric measure space together with
//! a bounded open region. Points labeled [`Region::Interior`] sample the
//! region, points labeled [`Region::Exterior`] sample its complement and carry
//! the boundary data of the Dirichlet problem.
//!
//! Two metric representations are supported. Dense matrices serve arbitrary
//! metrics such as shortest-path distances on graphs. Coordinate clouds with
//! the Euclidean metric are answered through a bucket index, so grids with
//! tens of thousands of points do not pay for an `n x n` matrix.

use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of random triples inspected by the triangle-inequality audit.
pub const AUDIT_TRIPLES: usize = 10_000;

/// Relative slack for the triangle-inequality audit (rounding in `sqrt` and in
/// shortest-path sums).
const AUDIT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Interior,
    Exterior,
}

/// Axis-aligned box `[lower_k, upper_k]` per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl AxisBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self { lower, upper }
    }

    /// The unit cube `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Self {
        Self::new(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| hi - lo)
            .product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dimension: usize,
    pub n_per_side: usize,
    pub interior_box: AxisBox,
    pub collar: f64,
}

/// Open metric ball `B_r(center)` realized on the sample.
#[derive(Debug, Clone, PartialEq)]
pub struct BallIndex {
    pub center: usize,
    pub radius: f64,
    /// Sorted ids `y` with `d(center, y) < radius`.
    pub members: Vec<usize>,
    pub mass: f64,
}

#[derive(Debug, Clone)]
enum Metric {
    Dense {
        distances: Vec<f64>,
    },
    Euclidean {
        dim: usize,
        coords: Vec<f64>,
        index: BucketIndex,
    },
}

/// Finite weighted metric space with an interior/exterior partition.
///
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct PointCloudSpace {
    metric: Metric,
    weights: Vec<f64>,
    regions: Vec<Region>,
    /// Distance from each point to the nearest exterior point.
    exterior_distance: Vec<f64>,
    grid: Option<GridLayout>,
}

/// Lattice structure of a space produced by [`build_grid_domain`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridLayout {
    /// Points per axis, collar included; the last axis varies fastest.
    pub counts: Vec<usize>,
    pub spacing: Vec<f64>,
}

impl GridLayout {
    /// Id of the lattice neighbor `step` cells away from `i` along `axis`.
    pub fn neighbor(&self, i: usize, axis: usize, step: i64) -> Option<usize> {
        let stride: usize = self.counts[axis + 1..].iter().product();
        let j = (i / stride) % self.counts[axis];
        let target = j as i64 + step;
        if target < 0 || target >= self.counts[axis] as i64 {
            return None;
        }
        Some((i as i64 + step * stride as i64) as usize)
    }
}

impl PointCloudSpace {
    /// Builds a space from a dense, row-major `n x n` distance matrix.
    pub fn from_dense(distances: Vec<f64>, weights: Vec<f64>, regions: Vec<Region>) -> Result<Self> {
        let n = weights.len();
        if distances.len() != n * n {
            return Err(Error::InvalidDomain(format!(
                "distance matrix has {} entries, expected {}",
                distances.len(),
                n * n
            )));
        }
        for i in 0..n {
            if distances[i * n + i] != 0.0 {
                return Err(Error::InvalidDomain(format!("metric({i},{i}) is not zero")));
            }
            for j in 0..i {
                let a = distances[i * n + j];
                let b = distances[j * n + i];
                if !a.is_finite() || a < 0.0 {
                    return Err(Error::InvalidDomain(format!(
                        "metric({i},{j}) = {a} is not a finite nonnegative length"
                    )));
                }
                if a != b {
                    return Err(Error::InvalidDomain(format!("metric({i},{j}) != metric({j},{i})")));
                }
            }
        }
        Self::finish(Metric::Dense { distances }, weights, regions)
    }

    /// Builds a Euclidean space from row-major coordinates (`dim` in 1..=3).
    pub fn from_coordinates(
        dim: usize,
        coords: Vec<f64>,
        weights: Vec<f64>,
        regions: Vec<Region>,
    ) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidDomain(format!("coordinate dimension {dim} not in 1..=3")));
        }
        if coords.len() != dim * weights.len() {
            return Err(Error::InvalidDomain(format!(
                "{} coordinates for {} points of dimension {dim}",
                coords.len(),
                weights.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidDomain("non-finite coordinate".into()));
        }
        let index = BucketIndex::build(dim, &coords);
        Self::finish(Metric::Euclidean { dim, coords, index }, weights, regions)
    }

    fn finish(metric: Metric, weights: Vec<f64>, regions: Vec<Region>) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(Error::InvalidDomain("no points".into()));
        }
        if regions.len() != n {
            return Err(Error::InvalidDomain(format!(
                "{} region labels for {n} points",
                regions.len()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidDomain(format!("weight of point {i} is not positive")));
        }
        if !regions.contains(&Region::Exterior) {
            return Err(Error::InvalidDomain("exterior set is empty".into()));
        }
        if !regions.contains(&Region::Interior) {
            return Err(Error::InvalidDomain("interior set is empty".into()));
        }
        let mut space = Self {
            metric,
            weights,
            regions,
            exterior_distance: Vec::new(),
            grid: None,
        };
        space.exterior_distance = space.compute_exterior_distance();
        space.audit_triangle_inequality(AUDIT_TRIPLES, 0x5eed)?;
        Ok(space)
    }

    fn compute_exterior_distance(&self) -> Vec<f64> {
        match &self.metric {
            Metric::Dense { distances } => {
                let n = self.len();
                let exterior: Vec<usize> = self.exterior_ids().collect();
                (0..n)
                    .into_par_iter()
                    .map(|i| {
                        exterior
                            .iter()
                            .map(|&j| distances[i * n + j])
                            .fold(f64::INFINITY, f64::min)
                    })
                    .collect()
            }
            Metric::Euclidean { dim, coords, .. } => {
                let exterior: Vec<usize> = self.exterior_ids().collect();
                let ext_coords: Vec<f64> = exterior
                    .iter()
                    .flat_map(|&j| coords[j * dim..(j + 1) * dim].iter().copied())
                    .collect();
                let ext_index = BucketIndex::build(*dim, &ext_coords);
                (0..self.len())
                    .into_par_iter()
                    .map(|i| {
                        let q = &coords[i * dim..(i + 1) * dim];
                        ext_index.nearest(q, &ext_coords)
                    })
                    .collect()
            }
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    /// Lattice structure, present only for spaces built as grids.
    pub fn grid_layout(&self) -> Option<&GridLayout> {
        self.grid.as_ref()
    }

    /// Attaches a lattice structure after checking it against the coordinates.
    pub fn set_grid_layout(&mut self, layout: GridLayout) -> Result<()> {
        let Metric::Euclidean { dim, coords, .. } = &self.metric else {
            return Err(Error::InvalidDomain("grid layout needs coordinates".into()));
        };
        let dim = *dim;
        if layout.counts.len() != dim || layout.spacing.len() != dim {
            return Err(Error::InvalidDomain("grid layout dimension mismatch".into()));
        }
        if layout.counts.iter().product::<usize>() != self.len() {
            return Err(Error::InvalidDomain("grid counts do not match the number of points".into()));
        }
        if layout.spacing.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(Error::InvalidDomain("grid spacing must be positive".into()));
        }
        for i in 0..self.len() {
            for k in 0..dim {
                if let Some(j) = layout.neighbor(i, k, 1) {
                    for a in 0..dim {
                        let delta = coords[j * dim + a] - coords[i * dim + a];
                        let want = if a == k { layout.spacing[k] } else { 0.0 };
                        if (delta - want).abs() > 1e-9 * layout.spacing[k] {
                            return Err(Error::InvalidDomain(format!(
                                "points {i} and {j} are not lattice neighbors along axis {k}"
                            )));
                        }
                    }
                }
            }
        }
        self.grid = Some(layout);
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        match &self.metric {
            Metric::Dense { distances } => distances[i * self.len() + j],
            Metric::Euclidean { dim, coords, .. } => {
                euclidean(&coords[i * dim..(i + 1) * dim], &coords[j * dim..(j + 1) * dim])
            }
        }
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn region(&self, i: usize) -> Region {
        self.regions[i]
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    #[inline]
    pub fn is_interior(&self, i: usize) -> bool {
        self.regions[i] == Region::Interior
    }

    pub fn interior_ids(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.is_interior(i))
    }

    pub fn exterior_ids(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| !self.is_interior(i))
    }

    pub fn interior_count(&self) -> usize {
        self.regions.iter().filter(|r| **r == Region::Interior).count()
    }

    /// Distance from `i` to the nearest exterior point (0 for exterior points).
    pub fn exterior_distance(&self, i: usize) -> f64 {
        self.exterior_distance[i]
    }

    /// Coordinate dimension for Euclidean spaces, `None` for dense metrics.
    pub fn coordinate_dim(&self) -> Option<usize> {
        match &self.metric {
            Metric::Euclidean { dim, .. } => Some(*dim),
            Metric::Dense { .. } => None,
        }
    }

    pub fn coordinates(&self, i: usize) -> Option<&[f64]> {
        match &self.metric {
            Metric::Euclidean { dim, coords, .. } => Some(&coords[i * dim..(i + 1) * dim]),
            Metric::Dense { .. } => None,
        }
    }

    /// Dense distance matrix, if that is the stored representation.
    pub fn dense_distances(&self) -> Option<&[f64]> {
        match &self.metric {
            Metric::Dense { distances } => Some(distances),
            Metric::Euclidean { .. } => None,
        }
    }

    /// Calls `f(y)` for every point with `d(x, y) < r`, in unspecified order.
    pub fn for_each_in_ball(&self, x: usize, r: f64, mut f: impl FnMut(usize)) {
        match &self.metric {
            Metric::Dense { distances } => {
                let n = self.len();
                let row = &distances[x * n..(x + 1) * n];
                for (y, &d) in row.iter().enumerate() {
                    if d < r {
                        f(y);
                    }
                }
            }
            Metric::Euclidean { dim, coords, index } => {
                let q = &coords[x * dim..(x + 1) * dim];
                index.for_each_within(q, r, coords, &mut f);
            }
        }
    }

    /// The open ball `B_r(x)`.
    pub fn ball(&self, x: usize, r: f64) -> BallIndex {
        let mut members = Vec::new();
        self.for_each_in_ball(x, r, |y| members.push(y));
        members.sort_unstable();
        let mass = crate::numeric::compensated_sum(members.iter().map(|&y| self.weights[y]));
        BallIndex {
            center: x,
            radius: r,
            members,
            mass,
        }
    }

    /// Whether the discrete ball `B_r(x)` lies inside the interior region: the
    /// center is interior, every member is interior, and no exterior point is
    /// closer than `r`.
    pub fn ball_inside_interior(&self, x: usize, r: f64) -> bool {
        if !self.is_interior(x) || self.exterior_distance[x] < r {
            return false;
        }
        let mut inside = true;
        self.for_each_in_ball(x, r, |y| inside &= self.is_interior(y));
        inside
    }

    /// Interior points farther than `margin` from every exterior point.
    pub fn bulk_points(&self, margin: f64) -> Vec<usize> {
        self.interior_ids()
            .filter(|&i| self.exterior_distance[i] > margin)
            .collect()
    }

    /// Checks `d(i,j) <= d(i,k) + d(k,j)` on `samples` random triples.
    pub fn audit_triangle_inequality(&self, samples: usize, seed: u64) -> Result<()> {
        let n = self.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut violations = 0;
        for _ in 0..samples {
            let (i, j, k) = (rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..n));
            let direct = self.distance(i, j);
            let detour = self.distance(i, k) + self.distance(k, j);
            if direct > detour * (1.0 + AUDIT_SLACK) + f64::MIN_POSITIVE {
                violations += 1;
            }
        }
        if violations > 0 {
            return Err(Error::MetricAudit {
                violations,
                checked: samples,
            });
        }
        Ok(())
    }

    /// Relabels points so that new id `k` is old id `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.len();
        if perm.len() != n {
            return Err(Error::InvalidDomain("permutation length mismatch".into()));
        }
        let weights = perm.iter().map(|&p| self.weights[p]).collect();
        let regions = perm.iter().map(|&p| self.regions[p]).collect();
        match &self.metric {
            Metric::Dense { distances } => {
                let mut d = vec![0.0; n * n];
                for (a, &pa) in perm.iter().enumerate() {
                    for (b, &pb) in perm.iter().enumerate() {
                        d[a * n + b] = distances[pa * n + pb];
                    }
                }
                Self::from_dense(d, weights, regions)
            }
            Metric::Euclidean { dim, coords, .. } => {
                let c = perm
                    .iter()
                    .flat_map(|&p| coords[p * dim..(p + 1) * dim].iter().copied())
                    .collect();
                Self::from_coordinates(*dim, c, weights, regions)
            }
        }
    }

    /// Same points and metric with every weight multiplied by `factor`.
    pub fn with_scaled_weights(&self, factor: f64) -> Result<Self> {
        let weights = self.weights.iter().map(|w| w * factor).collect();
        let mut out = self.clone();
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::InvalidDomain("weight factor must be positive".into()));
        }
        out.weights = weights;
        Ok(out)
    }
}

/// Balls of one radius around every point, stored compactly.
///
/// Most operations evaluate several maps at the same scale, so the ball
/// structure is computed once and shared.
#[derive(Debug, Clone)]
pub struct Neighborhoods {
    radius: f64,
    offsets: Vec<usize>,
    members: Vec<u32>,
    mass: Vec<f64>,
    inside: Vec<bool>,
}

impl Neighborhoods {
    pub fn new(space: &PointCloudSpace, r: f64) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::Precondition(format!("ball radius {r} must be positive")));
        }
        let balls: Vec<(Vec<u32>, f64, bool)> = (0..space.len())
            .into_par_iter()
            .map(|x| {
                let mut m: Vec<u32> = Vec::new();
                space.for_each_in_ball(x, r, |y| m.push(y as u32));
                m.sort_unstable();
                let mass = crate::numeric::compensated_sum(m.iter().map(|&y| space.weight(y as usize)));
                let inside = space.is_interior(x)
                    && space.exterior_distance(x) >= r
                    && m.iter().all(|&y| space.is_interior(y as usize));
                (m, mass, inside)
            })
            .collect();
        let mut offsets = Vec::with_capacity(balls.len() + 1);
        offsets.push(0);
        let total: usize = balls.iter().map(|b| b.0.len()).sum();
        let mut members = Vec::with_capacity(total);
        let mut mass = Vec::with_capacity(balls.len());
        let mut inside = Vec::with_capacity(balls.len());
        for (m, ms, ins) in balls {
            members.extend_from_slice(&m);
            offsets.push(members.len());
            mass.push(ms);
            inside.push(ins);
        }
        Ok(Self {
            radius: r,
            offsets,
            members,
            mass,
            inside,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    /// Sorted members of `B_r(x)`, including `x`.
    #[inline]
    pub fn members(&self, x: usize) -> &[u32] {
        &self.members[self.offsets[x]..self.offsets[x + 1]]
    }

    #[inline]
    pub fn mass(&self, x: usize) -> f64 {
        self.mass[x]
    }

    /// Whether `B_r(x)` lies inside the interior region.
    #[inline]
    pub fn inside(&self, x: usize) -> bool {
        self.inside[x]
    }
}

/// Uniform grid on `interior_box` extended by `collar` on every side.
///
/// Spacing per axis is `extent / (n_per_side - 1)`; the lattice is continued
/// `floor(collar / h)` layers outward and those layers are labeled exterior.
/// Every point carries the cell volume as weight.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons also reject NaN
pub fn build_grid_domain(spec: &GridSpec) -> Result<PointCloudSpace> {
    let dim = spec.dimension;
    if !(1..=3).contains(&dim) {
        return Err(Error::InvalidDomain(format!("grid dimension {dim} not in 1..=3")));
    }
    if spec.interior_box.lower.len() != dim || spec.interior_box.upper.len() != dim {
        return Err(Error::InvalidDomain("box dimension does not match grid dimension".into()));
    }
    if spec.n_per_side < 2 {
        return Err(Error::InvalidDomain("n_per_side must be at least 2".into()));
    }
    if !(spec.collar.is_finite() && spec.collar > 0.0) {
        return Err(Error::InvalidDomain("collar must be positive".into()));
    }
    let bx = &spec.interior_box;
    if bx.lower.iter().zip(&bx.upper).any(|(lo, hi)| !(hi > lo)) || !(bx.volume() > 0.0) {
        return Err(Error::InvalidDomain("interior box has zero volume".into()));
    }

    let last = (spec.n_per_side - 1) as i64;
    let spacing: Vec<f64> = (0..dim)
        .map(|k| (bx.upper[k] - bx.lower[k]) / last as f64)
        .collect();
    let layers: Vec<i64> = spacing
        .iter()
        .map(|h| (spec.collar / h + 1e-9).floor() as i64)
        .collect();
    let cell_volume: f64 = spacing.iter().product();

    let ranges: Vec<std::ops::RangeInclusive<i64>> =
        layers.iter().map(|&m| -m..=last + m).collect();
    let counts: Vec<usize> = ranges.iter().map(|r| r.clone().count()).collect();
    let total: usize = counts.iter().product();

    let mut coords = Vec::with_capacity(total * dim);
    let mut regions = Vec::with_capacity(total);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        let mut interior = true;
        for k in 0..dim {
            let j = *ranges[k].start() + idx[k] as i64;
            coords.push(bx.lower[k] + j as f64 * spacing[k]);
            interior &= (0..=last).contains(&j);
        }
        regions.push(if interior {
            Region::Interior
        } else {
            Region::Exterior
        });
        // Last axis varies fastest.
        for k in (0..dim).rev() {
            idx[k] += 1;
            if idx[k] < counts[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    let weights = vec![cell_volume; total];
    let mut space = PointCloudSpace::from_coordinates(dim, coords, weights, regions)?;
    space.grid = Some(GridLayout { counts, spacing });
    Ok(space)
}

/// Graph with positive edge lengths; the metric is the shortest-path distance.
pub fn build_graph_domain(
    edges: &[(usize, usize, f64)],
    interior_ids: &[usize],
    weights: Vec<f64>,
) -> Result<PointCloudSpace> {
    let n = weights.len();
    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(a, b, len) in edges {
        if a >= n || b >= n {
            return Err(Error::InvalidDomain(format!("edge ({a},{b}) references a missing point")));
        }
        if !(len.is_finite() && len > 0.0) {
            return Err(Error::InvalidDomain(format!("edge ({a},{b}) has non-positive length")));
        }
        adjacency[a].push((b, len));
        adjacency[b].push((a, len));
    }
    let mut regions = vec![Region::Exterior; n];
    for &i in interior_ids {
        if i >= n {
            return Err(Error::InvalidDomain(format!("interior id {i} out of range")));
        }
        regions[i] = Region::Interior;
    }

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|s| dijkstra(&adjacency, s))
        .collect();
    let mut distances = Vec::with_capacity(n * n);
    for row in &rows {
        if let Some(j) = row.iter().position(|d| d.is_infinite()) {
            return Err(Error::Disconnected(j));
        }
        distances.extend_from_slice(row);
    }
    // Shortest paths computed from opposite ends may differ in the last bit.
    for i in 0..n {
        for j in 0..i {
            let m = distances[i * n + j].min(distances[j * n + i]);
            distances[i * n + j] = m;
            distances[j * n + i] = m;
        }
    }
    PointCloudSpace::from_dense(distances, weights, regions)
}

#[derive(PartialEq)]
struct HeapEntry(f64, usize);

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Min-heap on distance.
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

fn dijkstra(adjacency: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adjacency.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapEntry(0.0, source));
    while let Some(HeapEntry(d, v)) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(w, len) in &adjacency[v] {
            let nd = d + len;
            if nd < dist[w] {
                dist[w] = nd;
                heap.push(HeapEntry(nd, w));
            }
        }
    }
    dist
}

#[inline]
fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Uniform bucket grid over a coordinate cloud.
#[derive(Debug, Clone)]
struct BucketIndex {
    dim: usize,
    origin: [f64; 3],
    cell: f64,
    shape: [usize; 3],
    starts: Vec<usize>,
    items: Vec<u32>,
}

impl BucketIndex {
    fn build(dim: usize, coords: &[f64]) -> Self {
        let n = coords.len() / dim;
        let mut lo = [0.0f64; 3];
        let mut hi = [0.0f64; 3];
        for k in 0..dim {
            lo[k] = f64::INFINITY;
            hi[k] = f64::NEG_INFINITY;
        }
        for p in coords.chunks_exact(dim) {
            for k in 0..dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        // Aim for a couple of points per cell on uniform samples.
        let extent: Vec<f64> = (0..dim).map(|k| (hi[k] - lo[k]).max(0.0)).collect();
        let volume: f64 = extent.iter().map(|e| e.max(f64::EPSILON)).product();
        let mut cell = (2.0 * volume / n.max(1) as f64).powf(1.0 / dim as f64);
        let max_extent = extent.iter().cloned().fold(0.0, f64::max);
        if !(cell.is_finite() && cell > 0.0) {
            cell = if max_extent > 0.0 { max_extent } else { 1.0 };
        }
        // Keep the cell count bounded for degenerate (flat) clouds.
        let max_cells_per_axis = 1 << 12;
        if max_extent / cell > max_cells_per_axis as f64 {
            cell = max_extent / max_cells_per_axis as f64;
        }
        let mut shape = [1usize; 3];
        for k in 0..dim {
            shape[k] = ((extent[k] / cell).floor() as usize + 1).max(1);
        }
        let mut index = Self {
            dim,
            origin: lo,
            cell,
            shape,
            starts: Vec::new(),
            items: Vec::new(),
        };
        let ncells = shape[0] * shape[1] * shape[2];
        let cell_of: Vec<usize> = coords
            .chunks_exact(dim)
            .map(|p| index.flat(index.cell_coords(p)))
            .collect();
        let mut counts = vec![0usize; ncells + 1];
        for &c in &cell_of {
            counts[c + 1] += 1;
        }
        for c in 0..ncells {
            counts[c + 1] += counts[c];
        }
        let mut fill = counts.clone();
        let mut items = vec![0u32; n];
        for (i, &c) in cell_of.iter().enumerate() {
            items[fill[c]] = i as u32;
            fill[c] += 1;
        }
        index.starts = counts;
        index.items = items;
        index
    }

    fn axis_cell(&self, k: usize, x: f64) -> i64 {
        ((x - self.origin[k]) / self.cell).floor() as i64
    }

    fn cell_coords(&self, p: &[f64]) -> [usize; 3] {
        let mut c = [0usize; 3];
        for k in 0..self.dim {
            c[k] = self.axis_cell(k, p[k]).clamp(0, self.shape[k] as i64 - 1) as usize;
        }
        c
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[0] * self.shape[1] + c[1]) * self.shape[2] + c[2]
    }

    fn cell_items(&self, c: [usize; 3]) -> &[u32] {
        let f = self.flat(c);
        &self.items[self.starts[f]..self.starts[f + 1]]
    }

    fn for_each_within(&self, q: &[f64], r: f64, coords: &[f64], mut f: impl FnMut(usize)) {
        let dim = self.dim;
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for k in 0..dim {
            let a = self.axis_cell(k, q[k] - r);
            let b = self.axis_cell(k, q[k] + r);
            let top = self.shape[k] as i64 - 1;
            if b < 0 || a > top {
                return;
            }
            lo[k] = a.max(0) as usize;
            hi[k] = b.min(top) as usize;
        }
        for c0 in lo[0]..=hi[0] {
            for c1 in lo[1]..=hi[1] {
                for c2 in lo[2]..=hi[2] {
                    for &y in self.cell_items([c0, c1, c2]) {
                        let y = y as usize;
                        if euclidean(q, &coords[y * dim..(y + 1) * dim]) < r {
                            f(y);
                        }
                    }
                }
            }
        }
    }

    /// Distance from `q` to the nearest indexed point (ring search).
    fn nearest(&self, q: &[f64], coords: &[f64]) -> f64 {
        let dim = self.dim;
        let mut home = [0i64; 3];
        for k in 0..dim {
            home[k] = self.axis_cell(k, q[k]);
        }
        let max_ring = (0..dim)
            .map(|k| home[k].abs().max((home[k] - self.shape[k] as i64).abs()) + 1)
            .max()
            .unwrap_or(1);
        let mut best = f64::INFINITY;
        for ring in 0..=max_ring {
            self.for_each_cell_in_ring(home, ring, |c| {
                for &y in self.cell_items(c) {
                    let y = y as usize;
                    best = best.min(euclidean(q, &coords[y * dim..(y + 1) * dim]));
                }
            });
            // Points in ring+1 and beyond are at least ring * cell away.
            if best <= ring as f64 * self.cell {
                break;
            }
        }
        best
    }

    /// Visits the cells at Chebyshev distance exactly `ring` from `home`.
    fn for_each_cell_in_ring(&self, home: [i64; 3], ring: i64, mut f: impl FnMut([usize; 3])) {
        let dim = self.dim;
        let inside = |k: usize, c: i64| c >= 0 && c < self.shape[k] as i64;
        for c0 in home[0] - ring..=home[0] + ring {
            if !inside(0, c0) {
                continue;
            }
            let on0 = (c0 - home[0]).abs() == ring;
            if dim == 1 {
                if on0 {
                    f([c0 as usize, 0, 0]);
                }
                continue;
            }
            for c1 in home[1] - ring..=home[1] + ring {
                if !inside(1, c1) {
                    continue;
                }
                let on1 = on0 || (c1 - home[1]).abs() == ring;
                if dim == 2 {
                    if on1 {
                        f([c0 as usize, c1 as usize, 0]);
                    }
                    continue;
                }
                if on1 {
                    for c2 in home[2] - ring..=home[2] + ring {
                        if inside(2, c2) {
                            f([c0 as usize, c1 as usize, c2 as usize]);
                        }
                    }
                } else {
                    let lo = home[2] - ring;
                    let hi = home[2] + ring;
                    if inside(2, lo) {
                        f([c0 as usize, c1 as usize, lo as usize]);
                    }
                    if hi != lo && inside(2, hi) {
                        f([c0 as usize, c1 as usize, hi as usize]);
                    }
                }
            }
        }
    }
}
