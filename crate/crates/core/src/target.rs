//! Target geometry: the unit sphere `S^n` (curvature 1) and Euclidean `R^n`
//! (curvature 0), geodesics, regular balls and the corrected midpoint.
//!
//! Points are stored as ambient coordinates: `n + 1` numbers for `S^n`, `n`
//! numbers for `R^n`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::Deref;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Below this angle slerp falls back to normalized linear interpolation.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Below this center distance `eta_solve` returns its small-angle limit.
pub const ETA_SMALL_DISTANCE: f64 = 1e-8;

/// Geodesics between points closer than `PI - ANTIPODAL_GAP` to antipodal are
/// refused.
pub const ANTIPODAL_GAP: f64 = 1e-9;

/// Slack allowed in ball-membership tests.
pub const MEMBERSHIP_SLACK: f64 = 1e-12;

pub type Coords = SmallVec<[f64; 4]>;

/// A point of a target space, as ambient coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TargetPoint(pub Coords);

impl TargetPoint {
    pub fn from_slice(coords: &[f64]) -> Self {
        Self(SmallVec::from_slice(coords))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for TargetPoint {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for TargetPoint {
    fn from(v: Vec<f64>) -> Self {
        Self(SmallVec::from_vec(v))
    }
}

/// Primitives every argument about the target needs.
pub trait Geometry {
    /// Sectional curvature of the model space (1 for spheres, 0 for `R^n`).
    fn curvature(&self) -> f64;

    /// Number of ambient coordinates of a point.
    fn ambient_dim(&self) -> usize;

    fn distance(&self, p: &[f64], q: &[f64]) -> f64;

    /// `gamma_t` on the unique geodesic from `p` to `q`.
    fn geodesic_point(&self, p: &[f64], q: &[f64], t: f64) -> Result<TargetPoint>;

    /// Validates (and for spheres renormalizes) raw coordinates.
    fn point(&self, coords: &[f64]) -> Result<TargetPoint>;

    fn midpoint(&self, p: &[f64], q: &[f64]) -> Result<TargetPoint> {
        self.geodesic_point(p, q, 0.5)
    }
}

/// The unit sphere `S^dim` embedded in `R^(dim+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sphere {
    pub dim: usize,
}

/// Euclidean space `R^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Euclidean {
    pub dim: usize,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn normalized(mut v: Coords) -> Option<Coords> {
    let n = norm(&v);
    if !(n.is_finite() && n > 0.0) {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= n);
    Some(v)
}

impl Sphere {
    pub fn new(dim: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidTarget(format!("sphere dimension {dim} not in 1..=3")));
        }
        Ok(Self { dim })
    }

    /// Angle between unit vectors via `2 atan2(|p - q|, |p + q|)`, accurate
    /// for nearly equal and nearly antipodal points alike.
    #[inline]
    pub fn angle(p: &[f64], q: &[f64]) -> f64 {
        let mut diff = 0.0;
        let mut sum = 0.0;
        for (a, b) in p.iter().zip(q) {
            diff += (a - b) * (a - b);
            sum += (a + b) * (a + b);
        }
        2.0 * diff.sqrt().atan2(sum.sqrt())
    }

    /// Unit tangent at `p` pointing toward `q`, with the angle. `None` when
    /// the points coincide (no direction) or are antipodal.
    fn direction(p: &[f64], q: &[f64]) -> Option<(Coords, f64)> {
        let theta = Self::angle(p, q);
        let c = dot(p, q);
        let v: Coords = p.iter().zip(q).map(|(a, b)| b - c * a).collect();
        normalized(v).map(|u| (u, theta))
    }

    /// Logarithm map: tangent vector at `p` of length `d(p,q)` toward `q`.
    pub(crate) fn log(p: &[f64], q: &[f64]) -> Coords {
        match Self::direction(p, q) {
            Some((u, theta)) => u.iter().map(|x| x * theta).collect(),
            None => SmallVec::from_elem(0.0, p.len()),
        }
    }

    /// Exponential map at `p` of tangent vector `v`.
    pub(crate) fn exp(p: &[f64], v: &[f64]) -> TargetPoint {
        let len = norm(v);
        if len == 0.0 {
            return TargetPoint::from_slice(p);
        }
        let (c, s) = (len.cos(), len.sin());
        let raw: Coords = p.iter().zip(v).map(|(a, b)| c * a + s * b / len).collect();
        TargetPoint(normalized(raw).expect("exp of a unit vector has unit norm"))
    }

    /// Projects `v` onto the tangent space at `p`.
    pub(crate) fn tangent_part(p: &[f64], v: &[f64]) -> Coords {
        let c = dot(p, v);
        p.iter().zip(v).map(|(a, b)| b - c * a).collect()
    }

    /// Parallel transport of a tangent vector at `p` to `q` along the
    /// connecting geodesic.
    pub(crate) fn transport(p: &[f64], q: &[f64], v: &[f64]) -> Coords {
        let k = dot(q, v) / (1.0 + dot(p, q));
        v.iter()
            .zip(p.iter().zip(q))
            .map(|(x, (a, b))| x - k * (a + b))
            .collect()
    }
}

impl Geometry for Sphere {
    fn curvature(&self) -> f64 {
        1.0
    }

    fn ambient_dim(&self) -> usize {
        self.dim + 1
    }

    fn distance(&self, p: &[f64], q: &[f64]) -> f64 {
        Self::angle(p, q)
    }

    fn geodesic_point(&self, p: &[f64], q: &[f64], t: f64) -> Result<TargetPoint> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Precondition(format!("geodesic parameter {t} outside [0,1]")));
        }
        let theta = Self::angle(p, q);
        if theta > PI - ANTIPODAL_GAP {
            return Err(Error::Antipodal);
        }
        if t == 0.0 || theta == 0.0 {
            return Ok(TargetPoint::from_slice(p));
        }
        if t == 1.0 {
            return Ok(TargetPoint::from_slice(q));
        }
        if theta < SMALL_ANGLE {
            let raw: Coords = p.iter().zip(q).map(|(a, b)| a + t * (b - a)).collect();
            return Ok(TargetPoint(normalized(raw).ok_or(Error::Antipodal)?));
        }
        let (u, theta) = Self::direction(p, q).ok_or(Error::Antipodal)?;
        let (c, s) = ((t * theta).cos(), (t * theta).sin());
        let raw: Coords = p.iter().zip(&u).map(|(a, b)| c * a + s * b).collect();
        Ok(TargetPoint(normalized(raw).ok_or(Error::Antipodal)?))
    }

    fn point(&self, coords: &[f64]) -> Result<TargetPoint> {
        if coords.len() != self.ambient_dim() {
            return Err(Error::InvalidTarget(format!(
                "sphere point needs {} coordinates, got {}",
                self.ambient_dim(),
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidTarget("non-finite coordinate".into()));
        }
        normalized(SmallVec::from_slice(coords))
            .map(TargetPoint)
            .ok_or_else(|| Error::InvalidTarget("zero vector is not a sphere point".into()))
    }
}

impl Euclidean {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidTarget("Euclidean dimension must be positive".into()));
        }
        Ok(Self { dim })
    }
}

impl Geometry for Euclidean {
    fn curvature(&self) -> f64 {
        0.0
    }

    fn ambient_dim(&self) -> usize {
        self.dim
    }

    fn distance(&self, p: &[f64], q: &[f64]) -> f64 {
        p.iter()
            .zip(q)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    fn geodesic_point(&self, p: &[f64], q: &[f64], t: f64) -> Result<TargetPoint> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Precondition(format!("geodesic parameter {t} outside [0,1]")));
        }
        if t == 0.0 {
            return Ok(TargetPoint::from_slice(p));
        }
        if t == 1.0 {
            return Ok(TargetPoint::from_slice(q));
        }
        Ok(TargetPoint(
            p.iter().zip(q).map(|(a, b)| (1.0 - t) * a + t * b).collect(),
        ))
    }

    fn point(&self, coords: &[f64]) -> Result<TargetPoint> {
        if coords.len() != self.dim {
            return Err(Error::InvalidTarget(format!(
                "Euclidean point needs {} coordinates, got {}",
                self.dim,
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidTarget("non-finite coordinate".into()));
        }
        Ok(TargetPoint::from_slice(coords))
    }
}

/// Runtime choice of target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TargetSpace {
    Sphere(Sphere),
    Euclidean(Euclidean),
}

impl TargetSpace {
    pub fn sphere(dim: usize) -> Result<Self> {
        Sphere::new(dim).map(Self::Sphere)
    }

    pub fn euclidean(dim: usize) -> Result<Self> {
        Euclidean::new(dim).map(Self::Euclidean)
    }

    /// The real line, target of distance functions and other scalar maps.
    pub fn real_line() -> Self {
        Self::Euclidean(Euclidean { dim: 1 })
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, Self::Euclidean(_))
    }
}

impl Geometry for TargetSpace {
    fn curvature(&self) -> f64 {
        match self {
            Self::Sphere(s) => s.curvature(),
            Self::Euclidean(e) => e.curvature(),
        }
    }

    fn ambient_dim(&self) -> usize {
        match self {
            Self::Sphere(s) => s.ambient_dim(),
            Self::Euclidean(e) => e.ambient_dim(),
        }
    }

    #[inline]
    fn distance(&self, p: &[f64], q: &[f64]) -> f64 {
        match self {
            Self::Sphere(s) => s.distance(p, q),
            Self::Euclidean(e) => e.distance(p, q),
        }
    }

    fn geodesic_point(&self, p: &[f64], q: &[f64], t: f64) -> Result<TargetPoint> {
        match self {
            Self::Sphere(s) => s.geodesic_point(p, q, t),
            Self::Euclidean(e) => e.geodesic_point(p, q, t),
        }
    }

    fn point(&self, coords: &[f64]) -> Result<TargetPoint> {
        match self {
            Self::Sphere(s) => s.point(coords),
            Self::Euclidean(e) => e.point(coords),
        }
    }
}

/// Closed ball of radius `radius` about `center`; for spheres the radius must
/// lie in `(0, pi/2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularBall {
    pub center: TargetPoint,
    pub radius: f64,
}

impl RegularBall {
    pub fn new(target: &TargetSpace, center: &[f64], radius: f64) -> Result<Self> {
        let center = target.point(center)?;
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidTarget(format!("ball radius {radius} must be positive and finite")));
        }
        if !target.is_flat() && radius >= FRAC_PI_2 {
            return Err(Error::InvalidTarget(format!(
                "ball radius {radius} is not below pi/2"
            )));
        }
        Ok(Self { center, radius })
    }

    pub fn contains(&self, target: &TargetSpace, p: &[f64]) -> bool {
        target.distance(p, &self.center) <= self.radius + MEMBERSHIP_SLACK
    }

    /// Random point at distance at most `max_radius.min(radius)` from the
    /// center, drawn along a uniformly random direction.
    pub fn sample<R: Rng + ?Sized>(&self, target: &TargetSpace, max_radius: f64, rng: &mut R) -> TargetPoint {
        let reach = max_radius.min(self.radius);
        let len = reach * rng.random::<f64>().sqrt();
        let dir = random_unit_tangent(target, &self.center, rng);
        offset(target, &self.center, &dir, len)
    }
}

/// Random unit tangent vector at `p`.
pub(crate) fn random_unit_tangent<R: Rng + ?Sized>(target: &TargetSpace, p: &[f64], rng: &mut R) -> Coords {
    loop {
        let raw: Coords = (0..p.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let v = match target {
            TargetSpace::Sphere(_) => Sphere::tangent_part(p, &raw),
            TargetSpace::Euclidean(_) => raw,
        };
        if let Some(u) = normalized(v) {
            return u;
        }
    }
}

/// Moves from `p` a distance `len` along the unit tangent `dir`.
pub(crate) fn offset(target: &TargetSpace, p: &[f64], dir: &[f64], len: f64) -> TargetPoint {
    let v: Coords = dir.iter().map(|x| x * len).collect();
    match target {
        TargetSpace::Sphere(_) => Sphere::exp(p, &v),
        TargetSpace::Euclidean(_) => TargetPoint(p.iter().zip(&v).map(|(a, b)| a + b).collect()),
    }
}

/// Tangent vector at `p` of length `d(p, q)` pointing toward `q`.
pub(crate) fn log_map(target: &TargetSpace, p: &[f64], q: &[f64]) -> Coords {
    match target {
        TargetSpace::Sphere(_) => Sphere::log(p, q),
        TargetSpace::Euclidean(_) => p.iter().zip(q).map(|(a, b)| b - a).collect(),
    }
}

pub(crate) fn exp_map(target: &TargetSpace, p: &[f64], v: &[f64]) -> TargetPoint {
    match target {
        TargetSpace::Sphere(_) => Sphere::exp(p, v),
        TargetSpace::Euclidean(_) => TargetPoint(p.iter().zip(v).map(|(a, b)| a + b).collect()),
    }
}

/// Parallel transport of `v` from `p` to `q` along the connecting geodesic.
pub(crate) fn transport(target: &TargetSpace, p: &[f64], q: &[f64], v: &[f64]) -> Coords {
    match target {
        TargetSpace::Sphere(_) => Sphere::transport(p, q, v),
        TargetSpace::Euclidean(_) => SmallVec::from_slice(v),
    }
}

/// Orthonormal basis of the tangent space at `p`.
pub(crate) fn tangent_basis(target: &TargetSpace, p: &[f64]) -> Vec<Coords> {
    let n = p.len();
    let mut basis: Vec<Coords> = Vec::new();
    let manifold_dim = match target {
        TargetSpace::Sphere(s) => s.dim,
        TargetSpace::Euclidean(e) => e.dim,
    };
    for k in 0..n {
        if basis.len() == manifold_dim {
            break;
        }
        let mut v: Coords = SmallVec::from_elem(0.0, n);
        v[k] = 1.0;
        if matches!(target, TargetSpace::Sphere(_)) {
            v = Sphere::tangent_part(p, &v);
        }
        for b in &basis {
            let c = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        if norm(&v) > 1e-6 {
            basis.push(normalized(v).expect("nonzero"));
        }
    }
    basis
}

/// Solves `sin((1 - eta) dd) / sin(dd) = cos(d / 2)` for `eta` in `[0, 1]`.
///
/// `dd` is the distance of the midpoint from the ball center and `d` the
/// distance between the two averaged points. The principal branch
/// `eta = 1 - asin(cos(d/2) sin(dd)) / dd` is the solution because
/// `(1 - eta) dd <= dd < pi/2`. For `dd < 1e-8` the small-angle limit
/// `1 - cos(d/2)` is returned.
pub fn eta_solve(dd: f64, d: f64) -> Result<f64> {
    if !(dd.is_finite() && (0.0..FRAC_PI_2).contains(&dd)) {
        return Err(Error::Precondition(format!("center distance {dd} outside [0, pi/2)")));
    }
    if !(d.is_finite() && (0.0..PI).contains(&d)) {
        return Err(Error::Precondition(format!("pair distance {d} outside [0, pi)")));
    }
    if d == 0.0 {
        return Ok(0.0);
    }
    let c = (0.5 * d).cos();
    let eta = if dd < ETA_SMALL_DISTANCE {
        1.0 - c
    } else {
        1.0 - (c * dd.sin()).asin() / dd
    };
    Ok(eta.clamp(0.0, 1.0))
}

/// Quantities produced along the way to the corrected midpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MidpointAux {
    /// Distance between the two endpoints.
    pub d: f64,
    /// Distance from the plain midpoint to the ball center.
    pub dd: f64,
    pub eta: f64,
}

/// Midpoint of `p` and `q` pulled toward the ball center by `eta`.
///
/// On flat targets the defining equation degenerates to `eta = 0` and the
/// plain midpoint is returned.
pub fn corrected_midpoint(
    target: &TargetSpace,
    p: &[f64],
    q: &[f64],
    ball: &RegularBall,
) -> Result<(TargetPoint, MidpointAux)> {
    for (name, x) in [("p", p), ("q", q)] {
        if !ball.contains(target, x) {
            return Err(Error::Precondition(format!("{name} lies outside the regular ball")));
        }
    }
    let d = target.distance(p, q);
    let m = target.midpoint(p, q)?;
    let dd = target.distance(&m, &ball.center);
    let eta = if target.is_flat() { 0.0 } else { eta_solve(dd, d)? };
    let m_eta = target.geodesic_point(&m, &ball.center, eta)?;
    Ok((m_eta, MidpointAux { d, dd, eta }))
}

/// Point at parameter `t` on the geodesic from `p` to the ball center.
pub fn radial_contraction(target: &TargetSpace, p: &[f64], ball: &RegularBall, t: f64) -> Result<TargetPoint> {
    if !ball.contains(target, p) {
        return Err(Error::Precondition("point lies outside the regular ball".into()));
    }
    target.geodesic_point(p, &ball.center, t)
}

/// Constant `c` with `d(gamma_t, eta_t) <= c d(gamma_1, eta_1)` for geodesics
/// on the unit sphere issuing from a common point with lengths at most `l`.
///
/// Returns `l / sin(l)`. Derivation: join `gamma_1` to `eta_1` by a geodesic
/// `sigma` and consider the curve `s -> point at parameter t on the geodesic
/// from the common origin to sigma(s)`. Its velocity is a Jacobi field with
/// `J(0) = 0`, `J(1) = sigma'(s)`; the radial part is scaled by `t <= 1` and the
/// normal part by `sin(t L) / sin(L) <= L / sin(L)`, where `L` is the distance
/// from the origin to `sigma(s)`. When `sigma` stays within distance `l` of
/// the origin (always the case for `l < pi/2`, where balls are convex) the
/// curve has length at most `(l / sin l) d(gamma_1, eta_1)`. For
/// `l >= pi/2` the bound is an empirical stand-in checked by sampling.
pub fn contraction_constant(l: f64) -> Result<f64> {
    if !(l.is_finite() && l > 0.0 && l < PI) {
        return Err(Error::Precondition(format!("length {l} outside (0, pi)")));
    }
    if l < SMALL_ANGLE {
        return Ok(1.0);
    }
    Ok(l / l.sin())
}

/// [`contraction_constant`] for an arbitrary target; flat targets give 1.
pub fn contraction_constant_for(target: &TargetSpace, l: f64) -> Result<f64> {
    if target.is_flat() {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::Precondition(format!("length {l} must be positive")));
        }
        return Ok(1.0);
    }
    contraction_constant(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn s2() -> TargetSpace {
        TargetSpace::sphere(2).unwrap()
    }

    fn random_sphere_point(rng: &mut ChaCha8Rng) -> TargetPoint {
        let raw: Vec<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        s2().point(&raw).unwrap()
    }

    #[test]
    fn distance_examples() {
        let t = s2();
        assert_abs_diff_eq!(t.distance(&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]), FRAC_PI_2, epsilon = 1e-15);
        assert_eq!(t.distance(&[0.6, 0.8, 0.0], &[0.6, 0.8, 0.0]), 0.0);
        assert_abs_diff_eq!(t.distance(&[1.0, 0.0, 0.0], &[-1.0, 0.0, 0.0]), PI, epsilon = 1e-15);
    }

    #[test]
    fn slerp_examples() {
        let t = s2();
        let p = [1.0, 0.0, 0.0];
        let q = [0.0, 1.0, 0.0];
        let m = t.geodesic_point(&p, &q, 0.5).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(m[0], h, epsilon = 1e-15);
        assert_abs_diff_eq!(m[1], h, epsilon = 1e-15);
        assert_eq!(m[2], 0.0);
        assert_eq!(t.geodesic_point(&p, &q, 0.0).unwrap().as_slice(), &p);
        assert_eq!(t.geodesic_point(&p, &q, 1.0).unwrap().as_slice(), &q);
    }

    #[test]
    fn antipodal_geodesic_is_an_error() {
        let t = s2();
        let err = t.geodesic_point(&[1.0, 0.0, 0.0], &[-1.0, 0.0, 0.0], 0.3);
        assert!(matches!(err, Err(Error::Antipodal)));
    }

    #[test]
    fn geodesic_equation_holds() {
        let t = s2();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let p = random_sphere_point(&mut rng);
            let q = random_sphere_point(&mut rng);
            let d = t.distance(&p, &q);
            if d > PI - 1e-3 {
                continue;
            }
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            let ga = t.geodesic_point(&p, &q, a).unwrap();
            let gb = t.geodesic_point(&p, &q, b).unwrap();
            assert!((t.distance(&ga, &gb) - (a - b).abs() * d).abs() <= 1e-12);
            assert!((norm(&ga) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn small_angle_fallback_is_consistent() {
        let t = s2();
        let p = t.point(&[1.0, 0.0, 0.0]).unwrap();
        let q = t.point(&[1.0, 1e-9, 0.0]).unwrap();
        let m = t.midpoint(&p, &q).unwrap();
        assert_abs_diff_eq!(t.distance(&m, &p), 0.5e-9, epsilon = 1e-20);
    }

    #[test]
    fn midpoint_equidistance() {
        let t = s2();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let p = random_sphere_point(&mut rng);
            let q = random_sphere_point(&mut rng);
            if t.distance(&p, &q) > 3.0 {
                continue;
            }
            let m = t.midpoint(&p, &q).unwrap();
            let d = t.distance(&p, &q);
            assert!((t.distance(&m, &p) - d / 2.0).abs() < 1e-12);
            assert!((t.distance(&m, &q) - d / 2.0).abs() < 1e-12);
        }
        let p = t.point(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(t.midpoint(&p, &p).unwrap(), p);
    }

    #[test]
    fn sphere_points_are_renormalized() {
        let p = s2().point(&[3.0, 0.0, 4.0]).unwrap();
        assert!((norm(&p) - 1.0).abs() < 1e-15);
        assert!(s2().point(&[0.0, 0.0, 0.0]).is_err());
        assert!(s2().point(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn regular_ball_radius_is_checked() {
        let t = s2();
        assert!(RegularBall::new(&t, &[0.0, 0.0, 1.0], FRAC_PI_2).is_err());
        assert!(RegularBall::new(&t, &[0.0, 0.0, 1.0], 0.0).is_err());
        assert!(RegularBall::new(&t, &[0.0, 0.0, 1.0], 1.2).is_ok());
        let e = TargetSpace::euclidean(2).unwrap();
        assert!(RegularBall::new(&e, &[0.0, 0.0], 10.0).is_ok());
    }

    #[test]
    fn ball_is_geodesically_convex() {
        let t = s2();
        let ball = RegularBall::new(&t, &[0.0, 0.0, 1.0], 1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let p = ball.sample(&t, 10.0, &mut rng);
            let q = ball.sample(&t, 10.0, &mut rng);
            let g = t.geodesic_point(&p, &q, rng.random()).unwrap();
            assert!(ball.contains(&t, &g));
        }
    }

    /// Independent root finder for the eta equation.
    fn eta_bisection(dd: f64, d: f64) -> f64 {
        let g = |eta: f64| ((1.0 - eta) * dd).sin() - (0.5 * d).cos() * dd.sin();
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            // g is decreasing in eta on [0, 1] for dd < pi/2.
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn eta_examples() {
        assert_eq!(eta_solve(0.7, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(eta_solve(1e-9, 1.0).unwrap(), 1.0 - 0.5f64.cos(), epsilon = 1e-15);
        // Bisection oracle value for (0.5, 1.0).
        let frozen = 0.131_488_178_752_327_4;
        assert_abs_diff_eq!(eta_bisection(0.5, 1.0), frozen, epsilon = 1e-12);
        assert_abs_diff_eq!(eta_solve(0.5, 1.0).unwrap(), frozen, epsilon = 1e-12);
    }

    #[test]
    fn eta_rejects_bad_input() {
        assert!(eta_solve(-0.1, 0.5).is_err());
        assert!(eta_solve(FRAC_PI_2, 0.5).is_err());
        assert!(eta_solve(0.3, PI).is_err());
        assert!(eta_solve(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn eta_is_continuous_at_the_switch() {
        for &d in &[0.1, 1.0, 2.0, 3.0] {
            let below = eta_solve(ETA_SMALL_DISTANCE * (1.0 - 1e-6), d).unwrap();
            let above = eta_solve(ETA_SMALL_DISTANCE * (1.0 + 1e-6), d).unwrap();
            assert!((below - above).abs() < 1e-7);
        }
    }

    #[test]
    fn corrected_midpoint_examples() {
        let t = s2();
        let ball = RegularBall::new(&t, &[0.0, 0.0, 1.0], 1.2).unwrap();
        let p = t.point(&[0.3, 0.1, 1.0]).unwrap();
        let (m, aux) = corrected_midpoint(&t, &p, &p, &ball).unwrap();
        assert_eq!(aux.eta, 0.0);
        assert_eq!(m, p);

        // Symmetric about the center on a great circle, d(p, q) = 1.
        let p = offset(&t, &ball.center, &[1.0, 0.0, 0.0], 0.5);
        let q = offset(&t, &ball.center, &[-1.0, 0.0, 0.0], 0.5);
        let (m, aux) = corrected_midpoint(&t, &p, &q, &ball).unwrap();
        assert_abs_diff_eq!(aux.d, 1.0, epsilon = 1e-14);
        assert!(aux.dd < 1e-14);
        assert!(t.distance(&m, &ball.center) < 1e-14);
    }

    #[test]
    fn corrected_midpoint_stays_in_ball() {
        let t = s2();
        let ball = RegularBall::new(&t, &[0.0, 1.0, 0.0], 1.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let p = ball.sample(&t, 10.0, &mut rng);
            let q = ball.sample(&t, 10.0, &mut rng);
            let (m, aux) = corrected_midpoint(&t, &p, &q, &ball).unwrap();
            assert!(ball.contains(&t, &m));
            assert!((0.0..=1.0).contains(&aux.eta));
        }
    }

    #[test]
    fn radial_contraction_examples() {
        let t = s2();
        let ball = RegularBall::new(&t, &[0.0, 0.0, 1.0], 1.0).unwrap();
        let p = offset(&t, &ball.center, &[0.0, 1.0, 0.0], 0.8);
        assert_eq!(radial_contraction(&t, &p, &ball, 0.0).unwrap(), p);
        assert_eq!(radial_contraction(&t, &p, &ball, 1.0).unwrap(), ball.center);
        for &s in &[0.1, 0.25, 0.6, 0.9] {
            let q = radial_contraction(&t, &p, &ball, s).unwrap();
            assert!((t.distance(&q, &ball.center) - (1.0 - s) * 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn contraction_constant_limits() {
        assert!((contraction_constant(1e-6).unwrap() - 1.0).abs() < 1e-11);
        assert_eq!(contraction_constant_for(&TargetSpace::euclidean(3).unwrap(), 5.0).unwrap(), 1.0);
        assert!(contraction_constant(PI).is_err());
        assert!(contraction_constant(0.0).is_err());
    }

    #[test]
    fn euclidean_geodesics_are_affine() {
        let e = TargetSpace::euclidean(2).unwrap();
        let g = e.geodesic_point(&[0.0, 0.0], &[2.0, 4.0], 0.25).unwrap();
        assert_eq!(g.as_slice(), &[0.5, 1.0]);
    }

    #[test]
    fn parallel_transport_preserves_tangency_and_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let p = random_sphere_point(&mut rng);
            let q = random_sphere_point(&mut rng);
            if Sphere::angle(&p, &q) > 3.0 {
                continue;
            }
            let v = random_unit_tangent(&s2(), &p, &mut rng);
            let w = Sphere::transport(&p, &q, &v);
            assert!(dot(&w, &q).abs() < 1e-12);
            assert!((norm(&w) - 1.0).abs() < 1e-12);
        }
    }
}
