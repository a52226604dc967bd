//! Energy minimization with a fixed boundary trace.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparison::{cauchy_functional, CauchyReport};
use crate::domain::{Neighborhoods, PointCloudSpace};
use crate::error::{Error, Result};
use crate::map::MapState;
use crate::numeric::compensated_sum;
use crate::target::{exp_map, log_map, norm, Coords, Geometry, RegularBall, TargetPoint, TargetSpace};

/// Which balls enter the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Balls that meet the interior, including those that cross into the
    /// exterior; this is how the boundary trace reaches the interior values.
    TraceExtended,
    /// Only balls inside the interior, as in the approximate energy itself.
    /// The trace then never enters and the minimizer is not unique.
    Faithful,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relaxation {
    /// In-place sweeps; monotone.
    GaussSeidel,
    /// Simultaneous updates from the previous iterate; not monotone in general.
    Jacobi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub r: f64,
    pub max_sweeps: usize,
    /// Threshold on the relative energy decrease of one sweep.
    pub energy_tol: f64,
    /// Threshold on the largest pointwise move of one sweep.
    pub move_tol: f64,
    /// Permutation of the interior ids; ascending ids when absent.
    pub sweep_order: Option<Vec<usize>>,
    pub barycenter_max_iter: usize,
    pub barycenter_tol: f64,
    pub seed: u64,
    pub relaxation: Relaxation,
    pub objective: Objective,
}

impl SolverConfig {
    pub fn new(r: f64) -> Self {
        Self {
            r,
            max_sweeps: 20_000,
            energy_tol: 1e-13,
            move_tol: 1e-11,
            sweep_order: None,
            barycenter_max_iter: 100,
            barycenter_tol: 1e-14,
            seed: 0,
            relaxation: Relaxation::GaussSeidel,
            objective: Objective::TraceExtended,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.r.is_finite() && self.r > 0.0) {
            return Err(Error::Precondition(format!("r = {} must be positive", self.r)));
        }
        for (name, v) in [
            ("energy_tol", self.energy_tol),
            ("move_tol", self.move_tol),
            ("barycenter_tol", self.barycenter_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Precondition(format!("{name} = {v} must be positive")));
            }
        }
        if self.barycenter_max_iter == 0 {
            return Err(Error::Precondition("barycenter_max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub map: MapState,
    pub initial_energy: f64,
    /// Objective after each sweep.
    pub energy_trace: Vec<f64>,
    /// Cauchy functional between consecutive iterates.
    pub cauchy_trace: Vec<f64>,
    pub max_move_trace: Vec<f64>,
    /// Barycenter results pulled back into the ball, per sweep.
    pub projection_trace: Vec<usize>,
    pub converged: bool,
    pub sweeps_used: usize,
    /// Largest increase of the objective over one sweep, 0 if none.
    pub max_energy_increase: f64,
}

/// Outcome of one barycenter computation.
#[derive(Debug, Clone, PartialEq)]
pub struct Barycenter {
    pub point: TargetPoint,
    pub iterations: usize,
    pub projected: bool,
}

/// Discrete objective at one scale with its pair couplings.
#[derive(Debug, Clone)]
pub struct Problem {
    domain: Arc<PointCloudSpace>,
    nb: Neighborhoods,
    objective: Objective,
    /// Whether each point's ball enters the objective.
    included: Vec<bool>,
    /// Couplings of every interior point, CSR by point id.
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    coefficients: Vec<f64>,
}

impl Problem {
    pub fn new(domain: &Arc<PointCloudSpace>, r: f64, objective: Objective) -> Result<Self> {
        let nb = Neighborhoods::new(domain, r)?;
        let included: Vec<bool> = (0..domain.len())
            .map(|x| match objective {
                Objective::Faithful => nb.inside(x),
                Objective::TraceExtended => nb.members(x).iter().any(|&y| domain.is_interior(y as usize)),
            })
            .collect();
        let r2 = r * r;
        let rows: Vec<Vec<(u32, f64)>> = (0..domain.len())
            .into_par_iter()
            .map(|x| {
                if !domain.is_interior(x) {
                    return Vec::new();
                }
                let wx = domain.weight(x);
                nb.members(x)
                    .iter()
                    .filter(|&&y| y as usize != x)
                    .filter_map(|&y| {
                        let yu = y as usize;
                        let mut c = 0.0;
                        if included[x] {
                            c += 1.0 / nb.mass(x);
                        }
                        if included[yu] {
                            c += 1.0 / nb.mass(yu);
                        }
                        (c > 0.0).then(|| (y, wx * domain.weight(yu) * c / r2))
                    })
                    .collect()
            })
            .collect();
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0);
        let mut neighbors = Vec::new();
        let mut coefficients = Vec::new();
        for row in rows {
            for (y, c) in row {
                neighbors.push(y);
                coefficients.push(c);
            }
            offsets.push(neighbors.len());
        }
        Ok(Self {
            domain: domain.clone(),
            nb,
            objective,
            included,
            offsets,
            neighbors,
            coefficients,
        })
    }

    pub fn domain(&self) -> &Arc<PointCloudSpace> {
        &self.domain
    }

    pub fn neighborhoods(&self) -> &Neighborhoods {
        &self.nb
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    /// `(neighbor, coefficient)` pairs of an interior point.
    pub fn couplings(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[x]..self.offsets[x + 1];
        self.neighbors[range.clone()]
            .iter()
            .zip(&self.coefficients[range])
            .map(|(&y, &c)| (y as usize, c))
    }

    fn check(&self, u: &MapState) -> Result<()> {
        if !Arc::ptr_eq(&self.domain, u.domain()) {
            return Err(Error::Mismatch("map and problem live on different domains".into()));
        }
        Ok(())
    }

    /// Part of the objective that depends on the value at interior point `x`,
    /// evaluated with `p` in place of `u(x)`: `sum_y c(x,y) d^2(p, u(y))`.
    pub fn local_objective(&self, u: &MapState, x: usize, p: &[f64]) -> Result<f64> {
        self.check(u)?;
        if !self.domain.is_interior(x) {
            return Err(Error::Precondition(format!("point {x} is exterior")));
        }
        let t = u.target();
        Ok(compensated_sum(self.couplings(x).map(|(y, c)| {
            let d = t.distance(p, u.value(y));
            c * d * d
        })))
    }

    /// `sum over included x of weight(x) / (mass(x) r^2) sum_{y in B_r(x)} weight(y) d^2(u(x), u(y))`.
    pub fn energy(&self, u: &MapState) -> Result<f64> {
        self.check(u)?;
        let r2 = self.nb.radius() * self.nb.radius();
        let t = u.target();
        let parts: Vec<f64> = (0..self.domain.len())
            .into_par_iter()
            .map(|x| {
                if !self.included[x] {
                    return 0.0;
                }
                let ux = u.value(x);
                let s = compensated_sum(self.nb.members(x).iter().map(|&y| {
                    let y = y as usize;
                    let d = t.distance(ux, u.value(y));
                    self.domain.weight(y) * d * d
                }));
                self.domain.weight(x) * s / (self.nb.mass(x) * r2)
            })
            .collect();
        Ok(compensated_sum(parts))
    }

    /// Approximate minimizer of the local objective at `x`, by weighted
    /// geodesic averaging started from the current value.
    ///
    /// Each step moves to `exp_p(sum c log_p q / sum c)`. The Hessian of
    /// `d^2 / 2` on the sphere is at most the identity, so every step lowers
    /// the objective. The result is pulled radially into the ball if needed.
    pub fn local_barycenter(&self, u: &MapState, x: usize, max_iter: usize, tol: f64) -> Result<Barycenter> {
        self.check(u)?;
        if !self.domain.is_interior(x) {
            return Err(Error::Precondition(format!("point {x} is exterior")));
        }
        Ok(self.barycenter_unchecked(u, x, max_iter, tol))
    }

    fn barycenter_unchecked(&self, u: &MapState, x: usize, max_iter: usize, tol: f64) -> Barycenter {
        let target = u.target();
        let mut p = u.value(x).clone();
        let total: f64 = self.couplings(x).map(|(_, c)| c).sum();
        if total <= 0.0 {
            return Barycenter {
                point: p,
                iterations: 0,
                projected: false,
            };
        }
        let dim = p.len();
        let mut iterations = 0;
        let max_iter = if target.is_flat() { 1 } else { max_iter };
        while iterations < max_iter {
            iterations += 1;
            let mut step: Coords = Coords::from_elem(0.0, dim);
            for (y, c) in self.couplings(x) {
                let l = log_map(target, &p, u.value(y));
                step.iter_mut().zip(&l).for_each(|(s, v)| *s += c * v);
            }
            step.iter_mut().for_each(|s| *s /= total);
            let len = norm(&step);
            if len == 0.0 {
                break;
            }
            p = exp_map(target, &p, &step);
            if len < tol {
                break;
            }
        }
        let ball = u.ball();
        let projected = !ball.contains(target, &p);
        if projected {
            p = project(target, ball, &p);
        }
        Barycenter {
            point: p,
            iterations,
            projected,
        }
    }
}

fn project(target: &TargetSpace, ball: &RegularBall, p: &[f64]) -> TargetPoint {
    let d = target.distance(p, &ball.center);
    let t = (1.0 - ball.radius / d).clamp(0.0, 1.0);
    let q = target
        .geodesic_point(p, &ball.center, t)
        .expect("points near a ball of radius below pi/2 are not antipodal to its center");
    if ball.contains(target, &q) {
        q
    } else {
        // Rounding left the point just outside; step a hair further in.
        target
            .geodesic_point(p, &ball.center, (t + 1e-12).min(1.0))
            .expect("not antipodal")
    }
}

fn sweep_order(domain: &PointCloudSpace, config: &SolverConfig) -> Result<Vec<usize>> {
    let interior: Vec<usize> = domain.interior_ids().collect();
    match &config.sweep_order {
        None => Ok(interior),
        Some(order) => {
            let mut sorted = order.clone();
            sorted.sort_unstable();
            if sorted != interior {
                return Err(Error::Precondition("sweep_order is not a permutation of the interior ids".into()));
            }
            Ok(order.clone())
        }
    }
}

/// Relaxation sweeps from `u0` until both the relative energy decrease and the
/// largest move fall below their tolerances, or `max_sweeps` is reached.
pub fn solve(u0: &MapState, config: &SolverConfig) -> Result<SolveResult> {
    let problem = Problem::new(u0.domain(), config.r, config.objective)?;
    solve_with(&problem, u0, config)
}

/// [`solve`] with a prebuilt problem; `config.r` and `config.objective` are
/// ignored in favor of the problem's.
pub fn solve_with(problem: &Problem, u0: &MapState, config: &SolverConfig) -> Result<SolveResult> {
    config.validate()?;
    problem.check(u0)?;
    u0.check_trace()?;
    let order = sweep_order(problem.domain(), config)?;
    let target = *u0.target();
    let mut u = u0.clone();
    let initial_energy = problem.energy(&u)?;
    let mut prev_energy = initial_energy;
    let mut result = SolveResult {
        map: u.clone(),
        initial_energy,
        energy_trace: Vec::new(),
        cauchy_trace: Vec::new(),
        max_move_trace: Vec::new(),
        projection_trace: Vec::new(),
        converged: false,
        sweeps_used: 0,
        max_energy_increase: 0.0,
    };
    for _ in 0..config.max_sweeps {
        let before = u.clone();
        let mut max_move = 0.0f64;
        let mut projections = 0usize;
        match config.relaxation {
            Relaxation::GaussSeidel => {
                for &x in &order {
                    let b = problem.barycenter_unchecked(&u, x, config.barycenter_max_iter, config.barycenter_tol);
                    max_move = max_move.max(target.distance(u.value(x), &b.point));
                    projections += b.projected as usize;
                    u.set_interior(x, b.point)?;
                }
            }
            Relaxation::Jacobi => {
                let updates: Vec<Barycenter> = order
                    .par_iter()
                    .map(|&x| problem.barycenter_unchecked(&before, x, config.barycenter_max_iter, config.barycenter_tol))
                    .collect();
                for (&x, b) in order.iter().zip(updates) {
                    max_move = max_move.max(target.distance(u.value(x), &b.point));
                    projections += b.projected as usize;
                    u.set_interior(x, b.point)?;
                }
            }
        }
        let energy = problem.energy(&u)?;
        let cauchy = cauchy_functional(&before, &u)?;
        result.max_energy_increase = result.max_energy_increase.max(energy - prev_energy);
        result.energy_trace.push(energy);
        result.cauchy_trace.push(cauchy.functional);
        result.max_move_trace.push(max_move);
        result.projection_trace.push(projections);
        result.sweeps_used += 1;
        let rel = if prev_energy > 0.0 {
            (prev_energy - energy) / prev_energy
        } else {
            0.0
        };
        prev_energy = energy;
        if rel < config.energy_tol && max_move < config.move_tol {
            result.converged = true;
            break;
        }
    }
    u.check_trace()?;
    result.map = u;
    Ok(result)
}

/// How interior values are chosen before solving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Every interior value is the ball center.
    Center,
    /// The value at the nearest exterior point, moved toward the center in
    /// proportion to the depth of the point.
    NearestBoundary,
}

/// Feasible starting map with the trace of `template`.
pub fn geodesic_init(template: &MapState, mode: InitMode) -> Result<MapState> {
    let domain = template.domain();
    let target = *template.target();
    let ball = template.ball().clone();
    match mode {
        InitMode::Center => MapState::with_trace(domain.clone(), target, ball.clone(), template.trace(), |_| {
            ball.center.clone()
        }),
        InitMode::NearestBoundary => {
            let exterior: Vec<usize> = domain.exterior_ids().collect();
            let depth_max = domain
                .interior_ids()
                .map(|x| domain.exterior_distance(x))
                .fold(0.0, f64::max);
            let values: Vec<(usize, TargetPoint)> = domain
                .interior_ids()
                .collect::<Vec<_>>()
                .into_par_iter()
                .map(|x| {
                    let nearest = exterior
                        .iter()
                        .copied()
                        .min_by(|&a, &b| domain.distance(x, a).total_cmp(&domain.distance(x, b)).then(a.cmp(&b)))
                        .expect("exterior is nonempty");
                    let t = (domain.exterior_distance(x) / depth_max).clamp(0.0, 1.0);
                    let p = target.geodesic_point(template.value(nearest), &ball.center, t)?;
                    Ok((x, p))
                })
                .collect::<Result<_>>()?;
            let mut lookup = vec![None; domain.len()];
            for (x, p) in values {
                lookup[x] = Some(p);
            }
            MapState::with_trace(domain.clone(), target, ball, template.trace(), |x| {
                lookup[x].clone().expect("interior value")
            })
        }
    }
}

/// Start with the trace of `template` and interior values drawn at random
/// within `perturbation` of the ball center.
pub fn random_init(template: &MapState, perturbation: f64, seed: u64, stream: u64) -> Result<MapState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let target = *template.target();
    let ball = template.ball().clone();
    let mut draws = vec![None; template.domain().len()];
    for x in template.domain().interior_ids() {
        draws[x] = Some(ball.sample(&target, perturbation, &mut rng));
    }
    MapState::with_trace(template.domain().clone(), target, ball.clone(), template.trace(), |x| {
        draws[x].clone().expect("interior value")
    })
}

/// Weighted `L^2` distance over the interior.
pub fn l2_distance(u: &MapState, v: &MapState) -> Result<f64> {
    u.require_compatible(v, "l2_distance")?;
    let space = u.domain();
    let t = u.target();
    Ok(compensated_sum(space.interior_ids().map(|x| {
        let d = t.distance(u.value(x), v.value(x));
        space.weight(x) * d * d
    }))
    .sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub i: usize,
    pub j: usize,
    pub l2_distance: f64,
    pub cauchy: CauchyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub converged: bool,
    pub sweeps_used: usize,
    pub final_energy: f64,
    pub max_energy_increase: f64,
    pub projections_after_first_sweep: usize,
}

#[derive(Debug, Clone)]
pub struct MultistartReport {
    pub starts: Vec<StartSummary>,
    pub pairs: Vec<PairComparison>,
    pub max_l2_distance: f64,
    pub max_cauchy: f64,
    pub all_converged: bool,
    pub closing_bound_holds: bool,
    pub maps: Vec<MapState>,
}

/// Solves from `n_starts` random initializations (start `k` uses RNG stream
/// `k` of `config.seed`) and compares every pair of results.
pub fn multistart_uniqueness(
    template: &MapState,
    config: &SolverConfig,
    n_starts: usize,
    perturbation: f64,
) -> Result<MultistartReport> {
    if n_starts < 2 {
        return Err(Error::Precondition("need at least two starts".into()));
    }
    let problem = Problem::new(template.domain(), config.r, config.objective)?;
    let runs: Vec<SolveResult> = (0..n_starts)
        .into_par_iter()
        .map(|k| {
            let u0 = random_init(template, perturbation, config.seed, k as u64)?;
            solve_with(&problem, &u0, config)
        })
        .collect::<Result<_>>()?;
    let mut pairs = Vec::new();
    for i in 0..n_starts {
        for j in i + 1..n_starts {
            pairs.push(PairComparison {
                i,
                j,
                l2_distance: l2_distance(&runs[i].map, &runs[j].map)?,
                cauchy: cauchy_functional(&runs[i].map, &runs[j].map)?,
            });
        }
    }
    let starts = runs
        .iter()
        .map(|r| StartSummary {
            converged: r.converged,
            sweeps_used: r.sweeps_used,
            final_energy: r.energy_trace.last().copied().unwrap_or(r.initial_energy),
            max_energy_increase: r.max_energy_increase,
            projections_after_first_sweep: r.projection_trace.iter().skip(1).sum(),
        })
        .collect::<Vec<_>>();
    Ok(MultistartReport {
        max_l2_distance: pairs.iter().map(|p| p.l2_distance).fold(0.0, f64::max),
        max_cauchy: pairs.iter().map(|p| p.cauchy.functional).fold(0.0, f64::max),
        all_converged: starts.iter().all(|s| s.converged),
        closing_bound_holds: pairs.iter().all(|p| p.cauchy.closing_bound_holds),
        starts,
        pairs,
        maps: runs.into_iter().map(|r| r.map).collect(),
    })
}

/// `int f^2 / E(f)` for a real function vanishing on the exterior, with `E`
/// the objective of `problem`.
pub fn dirichlet_poincare_diagnostic(f: &MapState, problem: &Problem) -> Result<f64> {
    if f.target().ambient_dim() != 1 || !f.target().is_flat() {
        return Err(Error::Precondition("Poincare diagnostic needs a real-valued map".into()));
    }
    let space = f.domain();
    if let Some(e) = space.exterior_ids().find(|&e| f.value(e)[0] != 0.0) {
        return Err(Error::Precondition(format!("f does not vanish at exterior point {e}")));
    }
    let mass = compensated_sum(space.interior_ids().map(|x| space.weight(x) * f.value(x)[0].powi(2)));
    let energy = problem.energy(f)?;
    if energy <= 0.0 {
        if mass > 0.0 {
            return Err(Error::Degenerate("zero energy for a nonzero function".into()));
        }
        return Err(Error::Degenerate("f vanishes identically".into()));
    }
    Ok(mass / energy)
}
