//! Defects of the comparison inequalities on CAT(1) targets.
//!
//! Every defect is reported signed as left side minus right side; only its
//! positive part is expected to be small.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Neighborhoods, PointCloudSpace};
use crate::energy::{center_distance_map, distance_map, energy_value, ks_squared_per_point};
use crate::error::{Error, Result};
use crate::map::MapState;
use crate::numeric::{compensated_sum, fit_line, median, percentile};
use crate::target::{
    corrected_midpoint, dot, exp_map, norm, normalized, random_unit_tangent, tangent_basis, transport,
    Coords, Geometry, RegularBall, TargetPoint, TargetSpace, SMALL_ANGLE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DefectKind {
    #[serde(rename = "estimateI")]
    EstimateI,
    #[serde(rename = "estimateII")]
    EstimateII,
    #[serde(rename = "midpoint_energy")]
    MidpointEnergy,
    #[serde(rename = "radial_energy")]
    RadialEnergy,
    #[serde(rename = "convexity")]
    Convexity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum DefectConfig {
    Quadrilateral {
        g0: TargetPoint,
        g1: TargetPoint,
        h0: TargetPoint,
        h1: TargetPoint,
    },
    Hinge {
        g0: TargetPoint,
        g1: TargetPoint,
        h0: TargetPoint,
        t: f64,
        s: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectReport {
    pub kind: DefectKind,
    /// Largest of the variables that the cubic remainder depends on.
    pub scale: f64,
    pub defect: f64,
    pub config: DefectConfig,
}

fn check_perimeter(target: &TargetSpace, loop_points: &[&[f64]]) -> Result<()> {
    if target.is_flat() {
        return Ok(());
    }
    let n = loop_points.len();
    let perimeter: f64 = (0..n)
        .map(|i| target.distance(loop_points[i], loop_points[(i + 1) % n]))
        .sum();
    if perimeter >= 2.0 * PI {
        return Err(Error::Precondition(format!("perimeter {perimeter} is not below 2 pi")));
    }
    Ok(())
}

/// ESTIMATE I for the geodesics `g0 -> g1` and `h0 -> h1`:
/// `cos^2(L/2) d^2(m_g, m_h) + (M - L)^2 / 4 - (d^2(g0,h0) + d^2(g1,h1)) / 2`
/// with `L = d(g0,g1)`, `M = d(h0,h1)` and `m_g`, `m_h` the midpoints.
/// On flat targets `cos` is replaced by 1.
pub fn estimate_i_defect(
    target: &TargetSpace,
    g0: &[f64],
    g1: &[f64],
    h0: &[f64],
    h1: &[f64],
) -> Result<DefectReport> {
    check_perimeter(target, &[g0, h0, h1, g1])?;
    let l = target.distance(g0, g1);
    let m = target.distance(h0, h1);
    let mg = target.midpoint(g0, g1)?;
    let mh = target.midpoint(h0, h1)?;
    let dm = target.distance(&mg, &mh);
    let c2 = if target.is_flat() { 1.0 } else { (0.5 * l).cos().powi(2) };
    let a = target.distance(g0, h0);
    let b = target.distance(g1, h1);
    let defect = c2 * dm * dm + 0.25 * (m - l) * (m - l) - 0.5 * (a * a + b * b);
    Ok(DefectReport {
        kind: DefectKind::EstimateI,
        scale: a.max(b).max((m - l).abs()).max(dm),
        defect,
        config: DefectConfig::Quadrilateral {
            g0: TargetPoint::from_slice(g0),
            g1: TargetPoint::from_slice(g1),
            h0: TargetPoint::from_slice(h0),
            h1: TargetPoint::from_slice(h1),
        },
    })
}

/// ESTIMATE II for `gamma: g0 -> g1` and `eta: h0 -> g1` at times `t`, `s`:
/// `d^2(gamma_t, eta_s)` minus
/// `sin^2((1-t)L)/sin^2(L) (d^2(g0,h0) - D^2) + (1-t)^2 D^2 + L^2 (s-t)^2 - 2(1-t)(s-t) L D`
/// with `L = d(g0,g1)` and `D = d(h0,g1) - L`. On flat targets the sine
/// ratio becomes `(1-t)^2`.
pub fn estimate_ii_defect(
    target: &TargetSpace,
    g0: &[f64],
    g1: &[f64],
    h0: &[f64],
    t: f64,
    s: f64,
) -> Result<DefectReport> {
    if !((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&s)) {
        return Err(Error::Precondition(format!("times ({t}, {s}) outside [0,1]")));
    }
    let l = target.distance(g0, g1);
    if !(l > 0.0 && (target.is_flat() || l < PI)) {
        return Err(Error::Precondition(format!("geodesic length {l} outside (0, pi)")));
    }
    check_perimeter(target, &[g0, h0, g1])?;
    let gt = target.geodesic_point(g0, g1, t)?;
    let es = target.geodesic_point(h0, g1, s)?;
    let lhs_d = target.distance(&gt, &es);
    let a = target.distance(g0, h0);
    let delta = target.distance(h0, g1) - l;
    let ratio = if target.is_flat() {
        (1.0 - t) * (1.0 - t)
    } else {
        ((1.0 - t) * l).sin().powi(2) / l.sin().powi(2)
    };
    let rhs = ratio * (a * a - delta * delta) + (1.0 - t) * (1.0 - t) * delta * delta + l * l * (s - t) * (s - t)
        - 2.0 * (1.0 - t) * (s - t) * l * delta;
    Ok(DefectReport {
        kind: DefectKind::EstimateII,
        scale: (s - t).abs().max(a).max(delta.abs()).max(lhs_d),
        defect: lhs_d * lhs_d - rhs,
        config: DefectConfig::Hinge {
            g0: TargetPoint::from_slice(g0),
            g1: TargetPoint::from_slice(g1),
            h0: TargetPoint::from_slice(h0),
            t,
            s,
        },
    })
}

/// How random configurations of size `s` are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// Independent perturbations of length up to `s`.
    Generic,
    /// ESTIMATE I only: `h0 = exp(g0, a n + c e)` and
    /// `h1 = exp(g1, a P(n) - c P(e))`, where `e` is the direction of
    /// `g0 -> g1`, `n` a unit normal and `P` parallel transport. These are the
    /// directions where the quadratic terms cancel, so the remainder shows.
    Sharp,
    /// ESTIMATE II only: generic points with `s = t`.
    Diagonal,
}

fn random_point<R: Rng + ?Sized>(target: &TargetSpace, rng: &mut R) -> TargetPoint {
    let n = target.ambient_dim();
    loop {
        let raw: Coords = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        match target {
            TargetSpace::Sphere(_) => {
                if let Some(p) = normalized(raw) {
                    return TargetPoint(p);
                }
            }
            TargetSpace::Euclidean(_) => return TargetPoint(raw),
        }
    }
}

fn scaled(v: &[f64], k: f64) -> Coords {
    v.iter().map(|x| x * k).collect()
}

/// Base geodesic `g0 -> g1` with length uniform in `[0.2, 2.5]`.
fn random_base<R: Rng + ?Sized>(target: &TargetSpace, rng: &mut R) -> (TargetPoint, TargetPoint, Coords) {
    let g0 = random_point(target, rng);
    let l = rng.random_range(0.2..2.5);
    let e = random_unit_tangent(target, &g0, rng);
    let g1 = exp_map(target, &g0, &scaled(&e, l));
    (g0, g1, e)
}

/// Random quadrilateral `(g0, g1, h0, h1)` whose cross distances are at most `s`.
pub fn sample_estimate_i<R: Rng + ?Sized>(
    target: &TargetSpace,
    s: f64,
    sampling: Sampling,
    rng: &mut R,
) -> Result<[TargetPoint; 4]> {
    let (g0, g1, e) = random_base(target, rng);
    match sampling {
        Sampling::Generic => {
            let v0 = scaled(&random_unit_tangent(target, &g0, rng), s * rng.random::<f64>());
            let v1 = scaled(&random_unit_tangent(target, &g1, rng), s * rng.random::<f64>());
            let h0 = exp_map(target, &g0, &v0);
            let h1 = exp_map(target, &g1, &v1);
            Ok([g0, g1, h0, h1])
        }
        Sampling::Sharp => {
            // Unit normal to e at g0, if the tangent space has one.
            let normal = tangent_basis(target, &g0).into_iter().find_map(|b| {
                let c = dot(&b, &e);
                let v: Coords = b.iter().zip(&e).map(|(x, y)| x - c * y).collect();
                if norm(&v) > 1e-6 {
                    normalized(v)
                } else {
                    None
                }
            });
            let (mut a, c): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            if normal.is_none() {
                a = 0.0;
            }
            let k = s / a.hypot(c).max(f64::MIN_POSITIVE);
            let (a, c) = (a * k, c * k);
            let n = normal.unwrap_or_else(|| Coords::from_elem(0.0, e.len()));
            let v0: Coords = n.iter().zip(&e).map(|(x, y)| a * x + c * y).collect();
            let pn = transport(target, &g0, &g1, &n);
            let pe = transport(target, &g0, &g1, &e);
            let v1: Coords = pn.iter().zip(&pe).map(|(x, y)| a * x - c * y).collect();
            let h0 = exp_map(target, &g0, &v0);
            let h1 = exp_map(target, &g1, &v1);
            Ok([g0, g1, h0, h1])
        }
        Sampling::Diagonal => Err(Error::Precondition("diagonal sampling applies to ESTIMATE II".into())),
    }
}

/// Random hinge `(g0, g1, h0, t, s)` with `d(g0, h0) <= scale` and
/// `|s - t| <= scale`.
pub fn sample_estimate_ii<R: Rng + ?Sized>(
    target: &TargetSpace,
    scale: f64,
    sampling: Sampling,
    rng: &mut R,
) -> Result<(TargetPoint, TargetPoint, TargetPoint, f64, f64)> {
    if sampling == Sampling::Sharp {
        return Err(Error::Precondition("sharp sampling applies to ESTIMATE I".into()));
    }
    let (g0, g1, _) = random_base(target, rng);
    let v0 = scaled(&random_unit_tangent(target, &g0, rng), scale * rng.random::<f64>());
    let h0 = exp_map(target, &g0, &v0);
    let t: f64 = rng.random();
    let s = match sampling {
        Sampling::Diagonal => t,
        _ => (t + scale * rng.random_range(-1.0..1.0)).clamp(0.0, 1.0),
    };
    Ok((g0, g1, h0, t, s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub kind: DefectKind,
    pub target: TargetSpace,
    pub sampling: Sampling,
    pub scales: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    /// Percentile of the positive part that is tracked, in `[0, 100]`.
    pub percentile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub scale: f64,
    pub percentile_defect: f64,
    pub median_defect: f64,
    pub max_positive: f64,
    /// Median of the per-configuration remainder variable size.
    pub median_config_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingStudy {
    pub params: ScalingParams,
    pub rows: Vec<ScaleRow>,
    /// Log-log slope of the tracked percentile against the scale; absent
    /// when some percentile is not positive.
    pub slope: Option<f64>,
}

/// Samples `samples` configurations per scale and fits the growth order of
/// the positive part of the defect. Record `i` of scale `k` uses RNG stream
/// `k * samples + i`, so results do not depend on scheduling.
pub fn scaling_study(params: &ScalingParams) -> Result<ScalingStudy> {
    if !matches!(params.kind, DefectKind::EstimateI | DefectKind::EstimateII) {
        return Err(Error::Precondition("scaling studies cover ESTIMATE I and II".into()));
    }
    if params.samples == 0 || params.scales.is_empty() {
        return Err(Error::Precondition("need at least one scale and one sample".into()));
    }
    if params.scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::Precondition("scales must be positive".into()));
    }
    let mut rows = Vec::with_capacity(params.scales.len());
    for (k, &scale) in params.scales.iter().enumerate() {
        let records: Vec<DefectReport> = (0..params.samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
                rng.set_stream((k * params.samples + i) as u64);
                sample_record(params, scale, &mut rng)
            })
            .collect::<Result<_>>()?;
        let positive: Vec<f64> = records.iter().map(|r| r.defect.max(0.0)).collect();
        let signed: Vec<f64> = records.iter().map(|r| r.defect).collect();
        let config_scales: Vec<f64> = records.iter().map(|r| r.scale).collect();
        rows.push(ScaleRow {
            scale,
            percentile_defect: percentile(&positive, params.percentile),
            median_defect: median(&signed),
            max_positive: positive.iter().copied().fold(0.0, f64::max),
            median_config_scale: median(&config_scales),
        });
    }
    let slope = if rows.len() >= 2 && rows.iter().all(|r| r.percentile_defect > 0.0) {
        let xs: Vec<f64> = rows.iter().map(|r| r.scale.log10()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.percentile_defect.log10()).collect();
        fit_line(&xs, &ys).map(|f| f.slope)
    } else {
        None
    };
    Ok(ScalingStudy {
        params: params.clone(),
        rows,
        slope,
    })
}

fn sample_record(params: &ScalingParams, scale: f64, rng: &mut ChaCha8Rng) -> Result<DefectReport> {
    let target = &params.target;
    match params.kind {
        DefectKind::EstimateI => {
            let [g0, g1, h0, h1] = sample_estimate_i(target, scale, params.sampling, rng)?;
            estimate_i_defect(target, &g0, &g1, &h0, &h1)
        }
        _ => {
            let (g0, g1, h0, t, s) = sample_estimate_ii(target, scale, params.sampling, rng)?;
            estimate_ii_defect(target, &g0, &g1, &h0, t, s)
        }
    }
}

/// Per-point defect of an energy inequality at one scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapDefectReport {
    pub kind: DefectKind,
    pub r: f64,
    pub per_point: Vec<f64>,
    pub max_positive: f64,
    /// Weighted mean over interior points.
    pub weighted_mean: f64,
}

fn map_report(kind: DefectKind, space: &PointCloudSpace, r: f64, per_point: Vec<f64>) -> MapDefectReport {
    let max_positive = per_point.iter().copied().fold(0.0, f64::max);
    let mass = compensated_sum(space.interior_ids().map(|x| space.weight(x)));
    let weighted_mean = compensated_sum(space.interior_ids().map(|x| space.weight(x) * per_point[x])) / mass;
    MapDefectReport {
        kind,
        r,
        per_point,
        max_positive,
        weighted_mean,
    }
}

fn require_same_ball(u: &MapState, v: &MapState, what: &str) -> Result<()> {
    u.require_compatible(v, what)?;
    if u.ball() != v.ball() {
        return Err(Error::Mismatch(format!("{what}: maps use different balls")));
    }
    Ok(())
}

/// Pointwise geodesic midpoint of `u` and `v`.
pub fn midpoint_map(u: &MapState, v: &MapState) -> Result<MapState> {
    require_same_ball(u, v, "midpoint_map")?;
    let values = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| u.target().midpoint(a, b))
        .collect::<Result<_>>()?;
    MapState::new(u.domain().clone(), *u.target(), u.ball().clone(), values)
}

/// `cos^2(d/2) ks^2[m] + ks^2[d]/4 - (ks^2[u] + ks^2[v])/2` at every point,
/// with `m` the midpoint map and `d` the distance map of `u` and `v`.
pub fn midpoint_energy_defect(u: &MapState, v: &MapState, nb: &Neighborhoods) -> Result<MapDefectReport> {
    let m = midpoint_map(u, v)?;
    let d = distance_map(u, v)?;
    let km = ks_squared_per_point(&m, nb)?;
    let kd = ks_squared_per_point(&d, nb)?;
    let ku = ks_squared_per_point(u, nb)?;
    let kv = ks_squared_per_point(v, nb)?;
    let dv = d.scalar_values();
    let flat = u.target().is_flat();
    let per_point = (0..km.len())
        .map(|x| {
            let c2 = if flat { 1.0 } else { (0.5 * dv[x]).cos().powi(2) };
            c2 * km[x] + 0.25 * kd[x] - 0.5 * (ku[x] + kv[x])
        })
        .collect();
    Ok(map_report(DefectKind::MidpointEnergy, u.domain(), nb.radius(), per_point))
}

/// `ks^2[u_eta]` minus
/// `sin^2((1-eta)D)/sin^2(D) (ks^2[u] - ks^2[D]) + ks^2[(1-eta)D]`, where
/// `u_eta` moves `u` toward the ball center by the fraction `eta` and `D` is
/// the distance of `u` to the center.
pub fn radial_energy_defect(u: &MapState, eta: &MapState, nb: &Neighborhoods) -> Result<MapDefectReport> {
    if !Arc::ptr_eq(u.domain(), eta.domain()) {
        return Err(Error::Mismatch("radial_energy_defect: maps live on different domains".into()));
    }
    if eta.target().ambient_dim() != 1 || !eta.target().is_flat() {
        return Err(Error::Precondition("eta must be real-valued".into()));
    }
    let ev = eta.scalar_values();
    if let Some(i) = ev.iter().position(|e| !(0.0..=1.0).contains(e)) {
        return Err(Error::Precondition(format!("eta({i}) = {} outside [0,1]", ev[i])));
    }
    let target = u.target();
    let o = &u.ball().center;
    let moved = u
        .values()
        .iter()
        .zip(&ev)
        .map(|(p, &e)| target.geodesic_point(p, o, e))
        .collect::<Result<_>>()?;
    let u_eta = MapState::new(u.domain().clone(), *target, u.ball().clone(), moved)?;
    let dd = center_distance_map(u)?;
    let ddv = dd.scalar_values();
    let xi_dd = MapState::real(
        u.domain().clone(),
        ddv.iter().zip(&ev).map(|(d, e)| (1.0 - e) * d).collect(),
    )?;
    let k_eta = ks_squared_per_point(&u_eta, nb)?;
    let ku = ks_squared_per_point(u, nb)?;
    let kdd = ks_squared_per_point(&dd, nb)?;
    let kxi = ks_squared_per_point(&xi_dd, nb)?;
    let flat = target.is_flat();
    let per_point = (0..ku.len())
        .map(|x| {
            let (e, d) = (ev[x], ddv[x]);
            let coef = if flat || d < SMALL_ANGLE {
                (1.0 - e) * (1.0 - e)
            } else {
                ((1.0 - e) * d).sin().powi(2) / d.sin().powi(2)
            };
            // Grouped so that eta = 0 gives exactly zero.
            (k_eta[x] - coef * ku[x]) + (coef * kdd[x] - kxi[x])
        })
        .collect();
    Ok(map_report(DefectKind::RadialEnergy, u.domain(), nb.radius(), per_point))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub r: f64,
    /// `E(m_eta)`.
    pub energy_corrected_midpoint: f64,
    /// `E(tan(d/2) / cos D)`, with `D` the center distance of the midpoint.
    pub energy_tangent_map: f64,
    pub energy_u: f64,
    pub energy_v: f64,
    /// `cos^8(rho)`, 1 on flat targets.
    pub cos8_rho: f64,
    pub defect_total: f64,
}

/// Pointwise corrected midpoint map and the real map `tan(d/2) / cos D`
/// (`d/2` on flat targets).
pub fn corrected_midpoint_maps(u: &MapState, v: &MapState) -> Result<(MapState, MapState)> {
    require_same_ball(u, v, "corrected midpoint")?;
    let target = u.target();
    let ball = u.ball();
    let mut mids = Vec::with_capacity(u.values().len());
    let mut real = Vec::with_capacity(u.values().len());
    for (p, q) in u.values().iter().zip(v.values()) {
        let (m, aux) = corrected_midpoint(target, p, q, ball)?;
        mids.push(m);
        real.push(tangent_weight(target, aux.d, aux.dd));
    }
    Ok((
        MapState::new(u.domain().clone(), *target, ball.clone(), mids)?,
        MapState::real(u.domain().clone(), real)?,
    ))
}

fn tangent_weight(target: &TargetSpace, d: f64, dd: f64) -> f64 {
    if target.is_flat() {
        0.5 * d
    } else {
        (0.5 * d).tan() / dd.cos()
    }
}

/// `E(m_eta) + cos^8(rho) E(tan(d/2)/cos D) - E(u)/2 - E(v)/2` for maps with
/// a common boundary trace.
pub fn convexity_defect(u: &MapState, v: &MapState, nb: &Neighborhoods) -> Result<ConvexityReport> {
    require_same_ball(u, v, "convexity_defect")?;
    if !u.same_trace(v) {
        return Err(Error::Mismatch("convexity_defect: boundary traces differ".into()));
    }
    let (m_eta, real) = corrected_midpoint_maps(u, v)?;
    let e_m = energy_value(&m_eta, nb)?;
    let e_t = energy_value(&real, nb)?;
    let e_u = energy_value(u, nb)?;
    let e_v = energy_value(v, nb)?;
    let cos8 = if u.target().is_flat() {
        1.0
    } else {
        u.ball().radius.cos().powi(8)
    };
    Ok(ConvexityReport {
        r: nb.radius(),
        energy_corrected_midpoint: e_m,
        energy_tangent_map: e_t,
        energy_u: e_u,
        energy_v: e_v,
        cos8_rho: cos8,
        defect_total: ((e_m + cos8 * e_t) - 0.5 * e_u) - 0.5 * e_v,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CauchyReport {
    /// `sum over interior x of weight(x) (tan(d(x)/2) / cos D(x))^2`.
    pub functional: f64,
    pub l2_distance: f64,
    /// Whether `l2_distance^2 <= 4 functional`.
    pub closing_bound_holds: bool,
}

/// Weighted `L^2` size of `tan(d/2)/cos D` over the interior, where `d` is
/// the pointwise distance and `D` the center distance of the midpoint.
pub fn cauchy_functional(u: &MapState, v: &MapState) -> Result<CauchyReport> {
    require_same_ball(u, v, "cauchy_functional")?;
    let space = u.domain();
    let target = u.target();
    let o = &u.ball().center;
    let terms: Vec<(f64, f64)> = space
        .interior_ids()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|x| {
            let (p, q) = (u.value(x), v.value(x));
            let d = target.distance(p, q);
            let dd = if target.is_flat() {
                0.0
            } else {
                let m = target.midpoint(p, q)?;
                target.distance(&m, o)
            };
            let w = space.weight(x);
            Ok((w * tangent_weight(target, d, dd).powi(2), w * d * d))
        })
        .collect::<Result<_>>()?;
    let functional = compensated_sum(terms.iter().map(|t| t.0));
    let l2_sq = compensated_sum(terms.iter().map(|t| t.1));
    Ok(CauchyReport {
        functional,
        l2_distance: l2_sq.sqrt(),
        closing_bound_holds: l2_sq <= 4.0 * functional * (1.0 + 1e-12),
    })
}

/// Parameters of a smooth random map `x -> exp_o(V(x))`, where
/// `V(x) = b + sum_k a_k sin(w_k . x + phi_k)` is a tangent field at the ball
/// center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    pub modes: usize,
    /// Bound on `|V(x) - b|`.
    pub amplitude: f64,
    /// Bound on `|w_k|`.
    pub max_frequency: f64,
    /// Bound on `|b|`.
    pub base_offset: f64,
}

impl Default for FieldParams {
    fn default() -> Self {
        Self {
            modes: 6,
            amplitude: 0.8,
            max_frequency: 6.0,
            base_offset: 0.3,
        }
    }
}

#[derive(Debug, Clone)]
struct TangentField {
    base: Coords,
    terms: Vec<(Coords, Vec<f64>, f64)>,
}

impl TangentField {
    fn sample<R: Rng + ?Sized>(
        target: &TargetSpace,
        center: &[f64],
        domain_dim: usize,
        params: &FieldParams,
        rng: &mut R,
    ) -> Self {
        let base = scaled(
            &random_unit_tangent(target, center, rng),
            params.base_offset * rng.random::<f64>(),
        );
        let per_mode = params.amplitude / params.modes.max(1) as f64;
        let terms = (0..params.modes)
            .map(|_| {
                let a = scaled(&random_unit_tangent(target, center, rng), per_mode);
                let dir: Vec<f64> = (0..domain_dim).map(|_| rng.sample(StandardNormal)).collect();
                let len = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                let freq = params.max_frequency * rng.random::<f64>();
                let w = dir.iter().map(|x| x / len * freq).collect();
                (a, w, rng.random_range(0.0..2.0 * PI))
            })
            .collect();
        Self { base, terms }
    }

    fn eval(&self, x: &[f64]) -> Coords {
        let mut v = self.base.clone();
        for (a, w, phi) in &self.terms {
            let arg: f64 = w.iter().zip(x).map(|(p, q)| p * q).sum::<f64>() + phi;
            let s = arg.sin();
            v.iter_mut().zip(a).for_each(|(vi, ai)| *vi += s * ai);
        }
        v
    }

    fn sup_perturbation(&self) -> f64 {
        self.terms.iter().map(|(a, _, _)| norm(a)).sum()
    }

    fn lipschitz(&self) -> f64 {
        self.terms
            .iter()
            .map(|(a, w, _)| norm(a) * w.iter().map(|x| x * x).sum::<f64>().sqrt())
            .sum()
    }
}

/// A random map with a bound on the Lipschitz constant of its tangent field.
#[derive(Debug, Clone)]
pub struct RandomMap {
    pub map: MapState,
    pub lipschitz_bound: f64,
}

/// Point `exp_o(v)`, moved radially onto the ball boundary when `|v| > rho`.
fn place(target: &TargetSpace, ball: &RegularBall, v: &[f64]) -> Result<TargetPoint> {
    let len = norm(v);
    let p = exp_map(target, &ball.center, v);
    if len <= ball.radius {
        return Ok(p);
    }
    target.geodesic_point(&p, &ball.center, 1.0 - ball.radius / len)
}

fn check_field(domain: &PointCloudSpace, target: &TargetSpace, params: &FieldParams) -> Result<usize> {
    let dim = domain
        .coordinate_dim()
        .ok_or_else(|| Error::Precondition("random maps need a coordinate domain".into()))?;
    if !target.is_flat() && params.amplitude + params.base_offset >= PI {
        return Err(Error::Precondition("field amplitude plus offset must stay below pi".into()));
    }
    Ok(dim)
}

/// Smooth random map into `ball`.
pub fn random_lipschitz_map<R: Rng + ?Sized>(
    domain: &Arc<PointCloudSpace>,
    target: &TargetSpace,
    ball: &RegularBall,
    params: &FieldParams,
    rng: &mut R,
) -> Result<RandomMap> {
    let dim = check_field(domain, target, params)?;
    let field = TangentField::sample(target, &ball.center, dim, params, rng);
    let values = (0..domain.len())
        .map(|i| place(target, ball, &field.eval(domain.coordinates(i).expect("coordinates"))))
        .collect::<Result<_>>()?;
    Ok(RandomMap {
        map: MapState::new(domain.clone(), *target, ball.clone(), values)?,
        lipschitz_bound: field.lipschitz(),
    })
}

/// Two smooth random maps with the same boundary trace. The second field is
/// the first plus `phi(x) W(x)`, where `phi = min(1, dist(x, exterior) / width)`.
pub fn random_map_pair<R: Rng + ?Sized>(
    domain: &Arc<PointCloudSpace>,
    target: &TargetSpace,
    ball: &RegularBall,
    params: &FieldParams,
    width: f64,
    rng: &mut R,
) -> Result<(RandomMap, RandomMap)> {
    if !(width.is_finite() && width > 0.0) {
        return Err(Error::Precondition("cutoff width must be positive".into()));
    }
    let dim = check_field(domain, target, params)?;
    let fu = TangentField::sample(target, &ball.center, dim, params, rng);
    let mut wp = *params;
    wp.base_offset = 0.0;
    let fw = TangentField::sample(target, &ball.center, dim, &wp, rng);
    let u_values: Vec<TargetPoint> = (0..domain.len())
        .map(|i| place(target, ball, &fu.eval(domain.coordinates(i).expect("coordinates"))))
        .collect::<Result<_>>()?;
    let u = MapState::new(domain.clone(), *target, ball.clone(), u_values)?;
    let v = MapState::with_trace(domain.clone(), *target, ball.clone(), u.trace(), |i| {
        let x = domain.coordinates(i).expect("coordinates");
        let phi = (domain.exterior_distance(i) / width).min(1.0);
        let mut vu = fu.eval(x);
        vu.iter_mut().zip(fw.eval(x)).for_each(|(a, b)| *a += phi * b);
        place(target, ball, &vu).expect("center is never antipodal to a point within pi")
    })?;
    let lu = fu.lipschitz();
    Ok((
        RandomMap {
            map: u,
            lipschitz_bound: lu,
        },
        RandomMap {
            map: v,
            lipschitz_bound: lu + fw.lipschitz() + fw.sup_perturbation() / width,
        },
    ))
}
