//! `ksh energy`, `solve`, `multistart` and `sweep-r`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::bail;
use ksh_core::domain::Neighborhoods;
use ksh_core::energy::{
    consistency_check, density_estimate, modified_gap_bound, modified_energy_in, scales, total_energy_in,
    ConsistencyReport, EnergyReport, Exclusion,
};
use ksh_core::io::{relative_reference, MapFile};
use ksh_core::numeric::median;
use ksh_core::solver::{
    geodesic_init, multistart_uniqueness, random_init, solve, InitMode, PairComparison, SolverConfig, StartSummary,
};
use ksh_core::target::Geometry;
use ksh_core::MapState;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::cli::{EnergyArgs, Format, Init, MultistartArgs, ProblemArgs, SolveArgs, SweepArgs};
use crate::inputs::{Inputs, ValidationError};
use crate::output::{emit, write_json, Cell, RunManifest, Table};

#[derive(Serialize)]
struct ModifiedReport {
    alpha: f64,
    energy: EnergyReport,
    /// Bound on `ks - ks_modified` at every point.
    gap_bound: Vec<f64>,
}

#[derive(Serialize)]
struct EnergyOutput {
    energy: EnergyReport,
    modified: Option<ModifiedReport>,
}

pub fn energy(a: &EnergyArgs, format: Format) -> anyhow::Result<()> {
    let mut inputs = Inputs::default();
    let (u, _) = inputs.map(&a.map)?;
    let nb = Neighborhoods::new(u.domain(), a.r)?;
    let energy = total_energy_in(&u, &nb)?;
    let modified = match &a.modified {
        Some(paths) => {
            let Some(alpha) = a.alpha else {
                bail!("--modified needs --alpha");
            };
            let (v, _) = inputs.map(&paths[0])?;
            let (w, _) = inputs.map(&paths[1])?;
            let excl = Exclusion { v: &v, w: &w, alpha };
            let energy = modified_energy_in(&u, &excl, &nb)?;
            let gap_bound = (0..u.domain().len())
                .into_par_iter()
                .map(|x| modified_gap_bound(&u, &excl, &nb, x))
                .collect::<ksh_core::Result<_>>()?;
            Some(ModifiedReport {
                alpha,
                energy,
                gap_bound,
            })
        }
        None => None,
    };
    let config = json!({ "map": a.map, "r": a.r, "modified": a.modified, "alpha": a.alpha });
    let manifest = RunManifest::new("energy", config, inputs.hashes(), 0);
    emit(&manifest, &EnergyOutput { energy, modified }, None, format, a.out.as_deref())
}

/// Boundary problem read from the target and trace files.
struct Loaded {
    inputs: Inputs,
    template: MapState,
    domain_path: PathBuf,
    config: SolverConfig,
}

fn load_problem(p: &ProblemArgs) -> anyhow::Result<Loaded> {
    let mut inputs = Inputs::default();
    let target = inputs.target(&p.target)?;
    let trace = inputs.trace(&p.trace)?;
    if let Some(domain) = &p.domain {
        let given = fs::canonicalize(domain).unwrap_or_else(|_| domain.clone());
        let referenced = fs::canonicalize(&trace.domain_path).unwrap_or_else(|_| trace.domain_path.clone());
        if given != referenced {
            return Err(ValidationError::single(
                &p.trace.display().to_string(),
                "/domain",
                format!("refers to {}, not to --domain {}", trace.domain_path.display(), domain.display()),
            )
            .into());
        }
        inputs.domain(domain)?;
    }
    let center = target.ball.center.clone();
    let template = MapState::with_trace(trace.domain, target.target, target.ball, &trace.entries, |_| {
        center.clone()
    })
    .map_err(|e| ValidationError::single(&p.trace.display().to_string(), "/values", e.to_string()))?;
    let mut config = SolverConfig::new(p.r);
    config.max_sweeps = p.max_sweeps;
    config.energy_tol = p.energy_tol;
    config.move_tol = p.move_tol;
    config.seed = p.seed;
    config.relaxation = p.relaxation.into();
    config.objective = p.objective.into();
    Ok(Loaded {
        inputs,
        template,
        domain_path: trace.domain_path,
        config,
    })
}

#[derive(Serialize)]
struct SolveOutput {
    config: SolverConfig,
    init: Init,
    converged: bool,
    sweeps_used: usize,
    initial_energy: f64,
    final_energy: f64,
    max_energy_increase: f64,
    energy_trace: Vec<f64>,
    cauchy_trace: Vec<f64>,
    max_move_trace: Vec<f64>,
    projection_trace: Vec<usize>,
    map: MapFile,
}

/// Stand-in report path for output that goes to stdout; domain references
/// are then relative to the working directory.
fn report_path(out: Option<&Path>) -> &Path {
    out.unwrap_or(Path::new("report.json"))
}

pub fn solve_cmd(a: &SolveArgs, format: Format) -> anyhow::Result<()> {
    let Loaded {
        inputs,
        template,
        domain_path,
        config,
    } = load_problem(&a.problem)?;
    let u0 = match a.init {
        Init::Center => geodesic_init(&template, InitMode::Center)?,
        Init::Nearest => geodesic_init(&template, InitMode::NearestBoundary)?,
        Init::Random => random_init(&template, a.perturb, config.seed, 0)?,
    };
    let result = solve(&u0, &config)?;
    let out = a.problem.out.as_deref();
    if let Some(path) = &a.map_out {
        write_json(path, &MapFile::from_map(&result.map, &relative_reference(path, &domain_path)))?;
    }
    let report = SolveOutput {
        config: config.clone(),
        init: a.init,
        converged: result.converged,
        sweeps_used: result.sweeps_used,
        initial_energy: result.initial_energy,
        final_energy: result.energy_trace.last().copied().unwrap_or(result.initial_energy),
        max_energy_increase: result.max_energy_increase,
        map: MapFile::from_map(&result.map, &relative_reference(report_path(out), &domain_path)),
        energy_trace: result.energy_trace,
        cauchy_trace: result.cauchy_trace,
        max_move_trace: result.max_move_trace,
        projection_trace: result.projection_trace,
    };
    let settings = json!({
        "target": a.problem.target,
        "trace": a.problem.trace,
        "domain": domain_path,
        "solver": config,
        "init": a.init,
        "perturb": a.perturb,
        "map_out": a.map_out,
    });
    let manifest = RunManifest::new("solve", settings, inputs.hashes(), config.seed);
    emit(&manifest, &report, None, format, out)
}

#[derive(Serialize)]
struct MultistartOutput {
    starts: Vec<StartSummary>,
    pairs: Vec<PairComparison>,
    max_l2_distance: f64,
    max_cauchy: f64,
    all_converged: bool,
    closing_bound_holds: bool,
}

pub fn multistart(a: &MultistartArgs, format: Format) -> anyhow::Result<()> {
    let Loaded {
        inputs,
        template,
        domain_path,
        config,
    } = load_problem(&a.problem)?;
    let r = multistart_uniqueness(&template, &config, a.starts, a.perturb)?;
    let report = MultistartOutput {
        starts: r.starts,
        pairs: r.pairs,
        max_l2_distance: r.max_l2_distance,
        max_cauchy: r.max_cauchy,
        all_converged: r.all_converged,
        closing_bound_holds: r.closing_bound_holds,
    };
    let settings = json!({
        "target": a.problem.target,
        "trace": a.problem.trace,
        "domain": domain_path,
        "solver": config,
        "starts": a.starts,
        "perturb": a.perturb,
    });
    let manifest = RunManifest::new("multistart", settings, inputs.hashes(), config.seed);
    emit(&manifest, &report, None, format, a.problem.out.as_deref())
}

#[derive(Serialize)]
struct SweepRow {
    r: f64,
    total: f64,
    /// Points whose ball lies inside the interior.
    inside_points: usize,
}

#[derive(Serialize)]
struct DensitySummary {
    points_estimated: usize,
    median: Option<f64>,
    min: Option<f64>,
    max: Option<f64>,
    /// Per point; null where no estimate exists.
    estimates: Vec<Option<f64>>,
}

#[derive(Serialize)]
struct SweepOutput {
    rows: Vec<SweepRow>,
    density: DensitySummary,
    /// Only for real-valued maps on grid domains.
    consistency: Option<ConsistencyReport>,
}

pub fn sweep_r(a: &SweepArgs, format: Format) -> anyhow::Result<()> {
    let mut inputs = Inputs::default();
    let (u, _) = inputs.map(&a.map)?;
    if a.r_values.windows(2).any(|w| w[1] >= w[0]) {
        bail!("--r-values must be strictly decreasing");
    }
    let nbs = scales(u.domain(), &a.r_values)?;
    let rows = nbs
        .iter()
        .map(|nb| {
            Ok(SweepRow {
                r: nb.radius(),
                total: total_energy_in(&u, nb)?.total,
                inside_points: (0..nb.len()).filter(|&x| nb.inside(x)).count(),
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let estimates: Vec<Option<f64>> = density_estimate(&u, &nbs)?
        .into_iter()
        .map(|d| d.map(|d| d.estimate))
        .collect();
    let known: Vec<f64> = estimates.iter().flatten().copied().collect();
    let density = DensitySummary {
        points_estimated: known.len(),
        median: (!known.is_empty()).then(|| median(&known)),
        min: known.iter().copied().reduce(f64::min),
        max: known.iter().copied().reduce(f64::max),
        estimates,
    };
    let real_grid = u.target().ambient_dim() == 1 && u.target().is_flat() && u.domain().grid_layout().is_some();
    let consistency = if real_grid {
        Some(consistency_check(&u, &nbs)?)
    } else {
        None
    };
    let table = Table {
        columns: vec!["r", "total", "inside_points"],
        rows: rows
            .iter()
            .map(|row| vec![Cell::Num(row.r), Cell::Num(row.total), Cell::Int(row.inside_points)])
            .collect(),
    };
    let config = json!({ "map": a.map, "r_values": a.r_values });
    let manifest = RunManifest::new("sweep-r", config, inputs.hashes(), 0);
    let report = SweepOutput {
        rows,
        density,
        consistency,
    };
    emit(&manifest, &report, Some(&table), format, a.out.as_deref())
}
