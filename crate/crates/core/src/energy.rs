//! Approximate energies of maps and their small-scale limits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Neighborhoods, PointCloudSpace};
use crate::error::{Error, Result};
use crate::map::MapState;
use crate::numeric::{compensated_sum, fit_line, median, CompensatedSum};
use crate::target::Geometry;

/// Per-point approximate energies at one scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub r: f64,
    pub per_point_ks: Vec<f64>,
    /// `sum_x weight(x) ks(x)^2`.
    pub total: f64,
    /// Fraction of the ball mass removed by exclusion, 0 for the plain energy.
    pub excluded_mass_fraction: Vec<f64>,
}

/// Points `y` of the interior where `v` or `w` jumps by at least `alpha`
/// relative to its value at `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionSet {
    pub x: usize,
    pub alpha: f64,
    /// Sorted ids.
    pub excluded: Vec<usize>,
}

/// Extrapolated energy density at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityPoint {
    pub estimate: f64,
    /// RMS residual of the linear fit of `ks` against `r`.
    pub residual: f64,
    pub scales_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub c_d_estimate: f64,
    /// `(d + 2)^(-1/2)`.
    pub reference: f64,
    pub dimension: usize,
    pub points_used: usize,
    pub points_skipped: usize,
}

/// Inputs of the modified energy: the maps defining the exclusion sets and the
/// threshold.
#[derive(Debug, Clone, Copy)]
pub struct Exclusion<'a> {
    pub v: &'a MapState,
    pub w: &'a MapState,
    pub alpha: f64,
}

impl Exclusion<'_> {
    #[inline]
    fn excludes(&self, x: usize, y: usize) -> bool {
        let t = self.v.target();
        t.distance(self.v.value(x), self.v.value(y)) >= self.alpha
            || t.distance(self.w.value(x), self.w.value(y)) >= self.alpha
    }

    fn check(&self, u: &MapState) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Precondition(format!("alpha {} must be positive", self.alpha)));
        }
        if !std::sync::Arc::ptr_eq(u.domain(), self.v.domain()) {
            return Err(Error::Mismatch("exclusion maps live on a different domain".into()));
        }
        self.v.require_compatible(self.w, "exclusion maps")
    }
}

fn check_scale(u: &MapState, nb: &Neighborhoods) -> Result<()> {
    if nb.len() != u.domain().len() {
        return Err(Error::Mismatch(format!(
            "neighborhoods cover {} points, domain has {}",
            nb.len(),
            u.domain().len()
        )));
    }
    Ok(())
}

/// Returns `(ks^2, excluded mass)` at `x`; `ks^2` is 0 when the ball leaves
/// the interior.
fn ks_squared_parts(u: &MapState, nb: &Neighborhoods, x: usize, excl: Option<&Exclusion>) -> (f64, f64) {
    if !nb.inside(x) {
        return (0.0, 0.0);
    }
    let space = u.domain();
    let target = u.target();
    let ux = u.value(x);
    let mut sum = CompensatedSum::new();
    let mut removed = CompensatedSum::new();
    for &y in nb.members(x) {
        let y = y as usize;
        let wy = space.weight(y);
        if excl.is_some_and(|e| e.excludes(x, y)) {
            removed.add(wy);
            continue;
        }
        let d = target.distance(ux, u.value(y));
        sum.add(wy * d * d);
    }
    let r = nb.radius();
    let mass = nb.mass(x);
    (sum.value() / (mass * r * r), removed.value() / mass)
}

/// `ks_{2,r}[u](x)` using precomputed balls.
pub fn ks_at_in(u: &MapState, nb: &Neighborhoods, x: usize) -> Result<f64> {
    check_scale(u, nb)?;
    Ok(ks_squared_parts(u, nb, x, None).0.sqrt())
}

/// `ks_{2,r}[u](x)`: root-mean-square displacement over `B_r(x)` divided by
/// `r`, or 0 when the ball is not inside the interior.
pub fn ks_at(u: &MapState, r: f64, x: usize) -> Result<f64> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::Precondition(format!("ball radius {r} must be positive")));
    }
    let space = u.domain();
    if !space.ball_inside_interior(x, r) {
        return Ok(0.0);
    }
    let ball = space.ball(x, r);
    let ux = u.value(x);
    let sum = compensated_sum(ball.members.iter().map(|&y| {
        let d = u.target().distance(ux, u.value(y));
        space.weight(y) * d * d
    }));
    Ok((sum / (ball.mass * r * r)).sqrt())
}

fn report(u: &MapState, nb: &Neighborhoods, excl: Option<&Exclusion>) -> EnergyReport {
    let parts: Vec<(f64, f64)> = (0..u.domain().len())
        .into_par_iter()
        .map(|x| ks_squared_parts(u, nb, x, excl))
        .collect();
    let space = u.domain();
    let total = compensated_sum(parts.iter().enumerate().map(|(x, p)| space.weight(x) * p.0));
    EnergyReport {
        r: nb.radius(),
        per_point_ks: parts.iter().map(|p| p.0.sqrt()).collect(),
        total,
        excluded_mass_fraction: parts.iter().map(|p| p.1).collect(),
    }
}

pub fn total_energy_in(u: &MapState, nb: &Neighborhoods) -> Result<EnergyReport> {
    check_scale(u, nb)?;
    Ok(report(u, nb, None))
}

/// Approximate energy `sum_x weight(x) ks_{2,r}[u](x)^2` at scale `r`.
pub fn total_energy(u: &MapState, r: f64) -> Result<EnergyReport> {
    let nb = Neighborhoods::new(u.domain(), r)?;
    total_energy_in(u, &nb)
}

/// `ks^2` at every point.
pub fn ks_squared_per_point(u: &MapState, nb: &Neighborhoods) -> Result<Vec<f64>> {
    check_scale(u, nb)?;
    Ok((0..u.domain().len())
        .into_par_iter()
        .map(|x| ks_squared_parts(u, nb, x, None).0)
        .collect())
}

/// Plain sum `sum_x weight(x) ks^2` without the per-point arrays.
pub fn energy_value(u: &MapState, nb: &Neighborhoods) -> Result<f64> {
    check_scale(u, nb)?;
    let parts: Vec<f64> = (0..u.domain().len())
        .into_par_iter()
        .map(|x| u.domain().weight(x) * ks_squared_parts(u, nb, x, None).0)
        .collect();
    Ok(compensated_sum(parts))
}

pub fn exclusion_set(v: &MapState, w: &MapState, alpha: f64, x: usize) -> Result<ExclusionSet> {
    let excl = Exclusion { v, w, alpha };
    excl.check(v)?;
    let excluded = v
        .domain()
        .interior_ids()
        .filter(|&y| excl.excludes(x, y))
        .collect();
    Ok(ExclusionSet { x, alpha, excluded })
}

/// Modified approximate energy at `x`: the ball sum skips excluded points but
/// is still normalized by the full ball mass.
pub fn ks_modified_at_in(u: &MapState, excl: &Exclusion, nb: &Neighborhoods, x: usize) -> Result<f64> {
    check_scale(u, nb)?;
    excl.check(u)?;
    Ok(ks_squared_parts(u, nb, x, Some(excl)).0.sqrt())
}

pub fn ks_modified_at(u: &MapState, v: &MapState, w: &MapState, alpha: f64, r: f64, x: usize) -> Result<f64> {
    let nb = Neighborhoods::new(u.domain(), r)?;
    ks_modified_at_in(u, &Exclusion { v, w, alpha }, &nb, x)
}

/// Modified energy at every point.
pub fn modified_energy_in(u: &MapState, excl: &Exclusion, nb: &Neighborhoods) -> Result<EnergyReport> {
    check_scale(u, nb)?;
    excl.check(u)?;
    Ok(report(u, nb, Some(excl)))
}

/// Upper bound for `ks^2 - ks_modified^2` at `x`:
/// `(r^2 / alpha^2) (ks_v^2 + ks_w^2) sup_{y in B_r(x), y != x} d^2(u(x), u(y)) / d^2(x, y)`.
///
/// Each excluded `y` has `d(v(x), v(y))^2 / alpha^2 >= 1` (or the same for
/// `w`) and `d(x, y) < r`, which gives the bound term by term.
pub fn modified_gap_bound(u: &MapState, excl: &Exclusion, nb: &Neighborhoods, x: usize) -> Result<f64> {
    check_scale(u, nb)?;
    excl.check(u)?;
    if !nb.inside(x) {
        return Ok(0.0);
    }
    let space = u.domain();
    let ux = u.value(x);
    let mut sup = 0.0f64;
    for &y in nb.members(x) {
        let y = y as usize;
        if y == x {
            continue;
        }
        let dx = space.distance(x, y);
        let du = u.target().distance(ux, u.value(y));
        if dx > 0.0 {
            sup = sup.max((du / dx).powi(2));
        } else if du > 0.0 {
            return Ok(f64::INFINITY);
        }
    }
    let r = nb.radius();
    let kv = ks_squared_parts(excl.v, nb, x, None).0;
    let kw = ks_squared_parts(excl.w, nb, x, None).0;
    Ok(r * r / (excl.alpha * excl.alpha) * (kv + kw) * sup)
}

/// Pointwise `d_Y(u(x), v(x))` as a real-valued map.
pub fn distance_map(u: &MapState, v: &MapState) -> Result<MapState> {
    u.require_compatible(v, "distance_map")?;
    let values = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| u.target().distance(a, b))
        .collect();
    MapState::real(u.domain().clone(), values)
}

/// Distance to the ball center, `d_Y(u(x), o)`.
pub fn center_distance_map(u: &MapState) -> Result<MapState> {
    let o = &u.ball().center;
    let values = u.values().iter().map(|p| u.target().distance(p, o)).collect();
    MapState::real(u.domain().clone(), values)
}

/// Per-point extrapolation of `ks` to `r = 0` over decreasing scales.
///
/// Only points whose largest ball lies inside the interior get an estimate;
/// a point also needs at least two scales with inside balls.
pub fn density_estimate(u: &MapState, scales: &[Neighborhoods]) -> Result<Vec<Option<DensityPoint>>> {
    if scales.len() < 2 {
        return Err(Error::Precondition("density estimate needs at least two scales".into()));
    }
    if scales.windows(2).any(|w| w[1].radius() >= w[0].radius()) {
        return Err(Error::Precondition("scales must be strictly decreasing".into()));
    }
    for nb in scales {
        check_scale(u, nb)?;
    }
    Ok((0..u.domain().len())
        .into_par_iter()
        .map(|x| {
            if !scales[0].inside(x) {
                return None;
            }
            let (rs, ks): (Vec<f64>, Vec<f64>) = scales
                .iter()
                .filter(|nb| nb.inside(x))
                .map(|nb| (nb.radius(), ks_squared_parts(u, nb, x, None).0.sqrt()))
                .unzip();
            let fit = fit_line(&rs, &ks)?;
            Some(DensityPoint {
                estimate: fit.intercept,
                residual: fit.residual,
                scales_used: rs.len(),
            })
        })
        .collect())
}

/// Builds the balls for every scale in `r_values`.
pub fn scales(space: &PointCloudSpace, r_values: &[f64]) -> Result<Vec<Neighborhoods>> {
    r_values.iter().map(|&r| Neighborhoods::new(space, r)).collect()
}

/// Estimates `c_d` in `e_2[u] = c_d |Du|` for a smooth real function sampled
/// on a grid, as the median over bulk points of `density / |Du|`.
///
/// `|Du|` comes from central differences on the lattice; points with
/// `|Du| < 1e-8` are skipped.
pub fn consistency_check(u: &MapState, scales: &[Neighborhoods]) -> Result<ConsistencyReport> {
    if u.target().ambient_dim() != 1 || !u.target().is_flat() {
        return Err(Error::Precondition("consistency check needs a real-valued map".into()));
    }
    let space = u.domain();
    let grid = space
        .grid_layout()
        .ok_or_else(|| Error::Precondition("consistency check needs a grid domain".into()))?;
    let dim = grid.counts.len();
    let density = density_estimate(u, scales)?;
    let r_max = scales.iter().map(|nb| nb.radius()).fold(0.0, f64::max);
    let values = u.scalar_values();
    let mut ratios = Vec::new();
    let mut skipped = 0usize;
    for x in space.bulk_points(2.0 * r_max) {
        let Some(e) = density[x] else {
            skipped += 1;
            continue;
        };
        let mut g2 = 0.0;
        let mut ok = true;
        for k in 0..dim {
            match (grid.neighbor(x, k, 1), grid.neighbor(x, k, -1)) {
                (Some(p), Some(m)) => {
                    let g = (values[p] - values[m]) / (2.0 * grid.spacing[k]);
                    g2 += g * g;
                }
                _ => ok = false,
            }
        }
        let g = g2.sqrt();
        if !ok || g < 1e-8 {
            skipped += 1;
            continue;
        }
        ratios.push(e.estimate / g);
    }
    if ratios.is_empty() {
        return Err(Error::Degenerate("no bulk point with a usable gradient".into()));
    }
    Ok(ConsistencyReport {
        c_d_estimate: median(&ratios),
        reference: 1.0 / ((dim + 2) as f64).sqrt(),
        dimension: dim,
        points_used: ratios.len(),
        points_skipped: skipped,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::domain::{build_grid_domain, AxisBox, GridSpec};
    use crate::target::{RegularBall, TargetPoint, TargetSpace};

    fn grid(dim: usize, n: usize, collar: f64) -> Arc<PointCloudSpace> {
        Arc::new(
            build_grid_domain(&GridSpec {
                dimension: dim,
                n_per_side: n,
                interior_box: AxisBox::unit(dim),
                collar,
            })
            .unwrap(),
        )
    }

    fn linear(d: &Arc<PointCloudSpace>, a: &[f64]) -> MapState {
        let vals = (0..d.len())
            .map(|i| {
                let c = d.coordinates(i).unwrap();
                c.iter().zip(a).map(|(x, y)| x * y).sum()
            })
            .collect();
        MapState::real(d.clone(), vals).unwrap()
    }

    #[test]
    fn three_point_ball_oracle() {
        let d = grid(1, 11, 0.3);
        let h = 0.1;
        let a = 2.0;
        let u = linear(&d, &[a]);
        let r = 1.5 * h;
        let x = (0..d.len())
            .find(|&i| (d.coordinates(i).unwrap()[0] - 0.5).abs() < 1e-9)
            .unwrap();
        let ball = d.ball(x, r);
        assert_eq!(ball.members.len(), 3);
        let sum: f64 = ball
            .members
            .iter()
            .map(|&y| d.weight(y) * (a * (d.coordinates(y).unwrap()[0] - 0.5)).powi(2))
            .sum();
        let expected = (sum / ball.mass / (r * r)).sqrt();
        let got = ks_at(&u, r, x).unwrap();
        assert!((got - expected).abs() < 1e-14);
        assert!((got - a * (2.0f64 / 3.0).sqrt() / 1.5).abs() < 1e-12);
        let nb = Neighborhoods::new(&d, r).unwrap();
        assert!((ks_at_in(&u, &nb, x).unwrap() - got).abs() < 1e-15);
    }

    #[test]
    fn zero_outside_interior_and_for_constants() {
        let d = grid(2, 9, 0.3);
        let u = linear(&d, &[1.0, -2.0]);
        let c = MapState::real(d.clone(), vec![0.3; d.len()]).unwrap();
        let r = 0.2;
        let rep = total_energy(&u, r).unwrap();
        let nb = Neighborhoods::new(&d, r).unwrap();
        for x in 0..d.len() {
            if !d.ball_inside_interior(x, r) {
                assert_eq!(rep.per_point_ks[x], 0.0);
            }
            assert_eq!(nb.inside(x), d.ball_inside_interior(x, r));
        }
        assert_eq!(total_energy(&c, r).unwrap().total, 0.0);
        assert!(rep.total > 0.0);
        assert!(rep.excluded_mass_fraction.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn total_is_weighted_sum_of_squares_and_linear_in_weights() {
        let d = grid(2, 12, 0.25);
        let u = linear(&d, &[0.7, 0.2]);
        let r = 0.21;
        let rep = total_energy(&u, r).unwrap();
        let direct: f64 = (0..d.len()).map(|x| d.weight(x) * rep.per_point_ks[x].powi(2)).sum();
        assert!((rep.total - direct).abs() <= 1e-14 * direct);
        let d2 = Arc::new(d.with_scaled_weights(2.0).unwrap());
        let u2 = MapState::real(d2.clone(), u.scalar_values()).unwrap();
        let t2 = total_energy(&u2, r).unwrap().total;
        assert!((t2 - 2.0 * rep.total).abs() <= 1e-13 * rep.total);
    }

    #[test]
    fn translation_invariance_in_flat_target() {
        let d = grid(2, 10, 0.3);
        let target = TargetSpace::euclidean(2).unwrap();
        let ball = RegularBall::new(&target, &[0.0, 0.0], 10.0).unwrap();
        let f = |i: usize, s: f64| {
            let c = d.coordinates(i).unwrap();
            TargetPoint::from_slice(&[c[0] * c[1] + s, c[0] - 0.5 * s])
        };
        let u = MapState::from_fn(d.clone(), target, ball.clone(), |i| f(i, 0.0)).unwrap();
        let v = MapState::from_fn(d.clone(), target, ball, |i| f(i, 0.25)).unwrap();
        let a = total_energy(&u, 0.25).unwrap().total;
        let b = total_energy(&v, 0.25).unwrap().total;
        assert!((a - b).abs() <= 1e-14 * a, "{a} vs {b}");
    }

    #[test]
    fn flat_quadratic_energy_matches_ball_average() {
        let d = grid(2, 101, 0.12);
        let a = [1.0, 0.5];
        let u = linear(&d, &a);
        let r = 0.1;
        let nb = Neighborhoods::new(&d, r).unwrap();
        let rep = total_energy_in(&u, &nb).unwrap();
        let eff: f64 = (0..d.len()).filter(|&x| nb.inside(x)).map(|x| d.weight(x)).sum();
        let ratio = rep.total / ((a[0] * a[0] + a[1] * a[1]) * eff);
        // Continuum average of (a.z)^2 / (|a|^2 r^2) over the unit disc.
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(7);
        let mut acc = 0.0;
        let mut count = 0;
        while count < 200_000 {
            let (x, y): (f64, f64) = (
                rand::Rng::random_range(&mut rng, -1.0..1.0),
                rand::Rng::random_range(&mut rng, -1.0..1.0),
            );
            if x * x + y * y < 1.0 {
                let s = (a[0] * x + a[1] * y) / (a[0] * a[0] + a[1] * a[1]).sqrt();
                acc += s * s;
                count += 1;
            }
        }
        let oracle = acc / count as f64;
        assert!((oracle - 0.25).abs() < 0.003);
        assert!((ratio / oracle - 1.0).abs() < 0.03, "{ratio} vs {oracle}");
    }

    fn five_point_outlier() -> (MapState, MapState) {
        let d = grid(1, 5, 0.25);
        let n = d.len();
        let interior: Vec<usize> = d.interior_ids().collect();
        let y0 = interior[3];
        let vals: Vec<f64> = (0..n)
            .map(|i| if i == y0 { 5.0 } else { 0.1 * i as f64 })
            .collect();
        let v = MapState::real(d.clone(), vals).unwrap();
        let w = MapState::real(d.clone(), vec![0.0; n]).unwrap();
        (v, w)
    }

    #[test]
    fn exclusion_set_enumeration() {
        let (v, w) = five_point_outlier();
        let d = v.domain().clone();
        let interior: Vec<usize> = d.interior_ids().collect();
        let x = interior[1];
        let ex = exclusion_set(&v, &w, 1.0, x).unwrap();
        assert_eq!(ex.excluded, vec![interior[3]]);
        let none = exclusion_set(&w, &w, 1e-6, x).unwrap();
        assert!(none.excluded.is_empty());
        let other = MapState::real(Arc::new((*d).clone()), vec![0.0; d.len()]).unwrap();
        assert!(exclusion_set(&v, &other, 1.0, x).is_err());
        assert!(exclusion_set(&v, &w, 0.0, x).is_err());
    }

    #[test]
    fn large_alpha_gives_plain_energy() {
        let d = grid(2, 11, 0.3);
        let s = TargetSpace::sphere(2).unwrap();
        let rho = 1.0;
        let ball = RegularBall::new(&s, &[0.0, 0.0, 1.0], rho).unwrap();
        let mk = |k: f64| {
            MapState::from_fn(d.clone(), s, ball.clone(), |i| {
                let c = d.coordinates(i).unwrap();
                let t = 0.6 * (k * c[0]).sin() * (c[1] - 0.3).cos();
                TargetPoint::from_slice(&[t.sin(), 0.0, t.cos()])
            })
            .unwrap()
        };
        let (u, v, w) = (mk(1.0), mk(3.0), mk(5.0));
        let nb = Neighborhoods::new(&d, 0.25).unwrap();
        let plain = total_energy_in(&u, &nb).unwrap();
        let big = modified_energy_in(&u, &Exclusion { v: &v, w: &w, alpha: 2.0 * rho + 1e-9 }, &nb).unwrap();
        assert_eq!(plain.per_point_ks, big.per_point_ks);
        let mut prev = vec![0.0; d.len()];
        for alpha in [0.05, 0.1, 0.3, 0.6, 2.5] {
            let m = modified_energy_in(&u, &Exclusion { v: &v, w: &w, alpha }, &nb).unwrap();
            for x in 0..d.len() {
                assert!(m.per_point_ks[x] >= prev[x]);
                assert!(m.per_point_ks[x] <= plain.per_point_ks[x]);
            }
            prev = m.per_point_ks;
        }
    }

    #[test]
    fn excluding_everything_but_the_center_gives_zero() {
        let (v, _) = five_point_outlier();
        let d = v.domain().clone();
        let steep = MapState::real(d.clone(), (0..d.len()).map(|i| 10.0 * i as f64).collect()).unwrap();
        let nb = Neighborhoods::new(&d, 0.3).unwrap();
        let x = (0..d.len()).find(|&x| nb.inside(x)).unwrap();
        let ex = Exclusion { v: &steep, w: &steep, alpha: 1.0 };
        assert_eq!(ks_modified_at_in(&steep, &ex, &nb, x).unwrap(), 0.0);
    }

    #[test]
    fn gap_bound_dominates() {
        let d = grid(2, 21, 0.3);
        let u = linear(&d, &[1.0, 2.0]);
        let v = linear(&d, &[8.0, -3.0]);
        let w = linear(&d, &[-2.0, 9.0]);
        let nb = Neighborhoods::new(&d, 0.2).unwrap();
        let ex = Exclusion { v: &v, w: &w, alpha: 1.0 };
        let plain = total_energy_in(&u, &nb).unwrap();
        let m = modified_energy_in(&u, &ex, &nb).unwrap();
        let mut active = 0;
        for x in 0..d.len() {
            let gap = plain.per_point_ks[x].powi(2) - m.per_point_ks[x].powi(2);
            if gap > 0.0 {
                active += 1;
            }
            assert!(gap <= modified_gap_bound(&u, &ex, &nb, x).unwrap() + 1e-12);
        }
        assert!(active > 0);
    }

    #[test]
    fn distance_map_properties() {
        let d = grid(1, 6, 0.4);
        let s = TargetSpace::sphere(2).unwrap();
        let ball = RegularBall::new(&s, &[0.0, 0.0, 1.0], 1.0).unwrap();
        let mk = |k: f64| {
            MapState::from_fn(d.clone(), s, ball.clone(), |i| {
                let t = k * d.coordinates(i).unwrap()[0];
                TargetPoint::from_slice(&[t.sin(), 0.0, t.cos()])
            })
            .unwrap()
        };
        let u = mk(0.5);
        let z = distance_map(&u, &u).unwrap();
        assert!(z.scalar_values().iter().all(|&x| x == 0.0));
        let rad = center_distance_map(&u).unwrap();
        assert!(rad.scalar_values().iter().all(|&x| x <= 1.0 + 1e-12));
        let e = d.exterior_ids().next().unwrap();
        assert_eq!(rad.scalar_values()[e], s.distance(u.value(e), &ball.center));
    }

    #[test]
    fn density_of_constant_is_zero() {
        let d = grid(2, 41, 0.2);
        let c = MapState::real(d.clone(), vec![0.1; d.len()]).unwrap();
        let sc = scales(&d, &[0.15, 0.1]).unwrap();
        let est = density_estimate(&c, &sc).unwrap();
        let present: Vec<_> = est.iter().flatten().collect();
        assert!(!present.is_empty());
        assert!(present.iter().all(|p| p.estimate == 0.0 && p.residual == 0.0));
        assert!(density_estimate(&c, &sc[..1]).is_err());
        assert!(density_estimate(&c, &scales(&d, &[0.1, 0.15]).unwrap()).is_err());
    }

    #[test]
    fn consistency_in_one_dimension() {
        let d = grid(1, 2001, 0.1);
        let u = linear(&d, &[1.3]);
        let sc = scales(&d, &[0.05, 0.035, 0.025]).unwrap();
        let rep = consistency_check(&u, &sc).unwrap();
        assert!((rep.reference - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((rep.c_d_estimate / rep.reference - 1.0).abs() < 0.01, "{rep:?}");
        let u2 = linear(&d, &[0.2]);
        let rep2 = consistency_check(&u2, &sc).unwrap();
        assert!((rep2.c_d_estimate / rep.c_d_estimate - 1.0).abs() < 0.01);
    }

    #[test]
    fn slerp_band_density() {
        let d = grid(1, 2001, 0.1);
        let s = TargetSpace::sphere(2).unwrap();
        let ball = RegularBall::new(&s, &[0.0, 0.0, 1.0], 1.2).unwrap();
        let speed = 1.5;
        let u = MapState::from_fn(d.clone(), s, ball, |i| {
            let t = speed * (d.coordinates(i).unwrap()[0] - 0.5);
            TargetPoint::from_slice(&[t.sin(), 0.0, t.cos()])
        })
        .unwrap();
        let sc = scales(&d, &[0.05, 0.035, 0.025]).unwrap();
        let est = density_estimate(&u, &sc).unwrap();
        let vals: Vec<f64> = d.bulk_points(0.1).into_iter().filter_map(|x| est[x].map(|p| p.estimate)).collect();
        let m = median(&vals);
        assert!((m / (speed / 3f64.sqrt()) - 1.0).abs() < 0.01, "{m}");
    }
}
