//! `ksh verify`: the comparison inequalities as pass/fail checks.

use std::sync::Arc;

use anyhow::{anyhow, bail};
use ksh_core::comparison::{
    convexity_defect, midpoint_energy_defect, radial_energy_defect, random_map_pair, scaling_study, DefectKind,
    FieldParams, Sampling, ScalingParams, ScalingStudy,
};
use ksh_core::domain::Neighborhoods;
use ksh_core::energy::scales;
use ksh_core::{build_grid_domain, AxisBox, GridSpec, MapState, PointCloudSpace, RegularBall, TargetSpace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::cli::{Format, TargetType, Verify, VerifyEstimate, VerifyMaps};
use crate::inputs::Inputs;
use crate::output::{emit, Cell, RunManifest, Table};

/// Largest positive part accepted on flat targets, where the inequalities
/// hold without remainder.
const FLAT_TOL: f64 = 1e-12;

/// Largest accepted ratio of the final convexity defect to the mean energy.
const CONVEXITY_RATIO: f64 = 0.1;

/// Width of the cutoff that makes generated map pairs share their trace.
const PAIR_CUTOFF: f64 = 0.2;

/// Collar of the generated grid.
const PAIR_COLLAR: f64 = 0.1;

#[derive(Debug, Serialize)]
struct Assertion {
    name: String,
    value: f64,
    threshold: f64,
    pass: bool,
}

impl Assertion {
    fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            pass: value <= threshold,
        }
    }

    fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            pass: value >= threshold,
        }
    }
}

/// Runs one check; `Ok(false)` when an assertion fails.
pub fn run(cmd: &Verify, format: Format) -> anyhow::Result<bool> {
    match cmd {
        Verify::EstimateI(a) => estimate(a, DefectKind::EstimateI, format),
        Verify::EstimateII(a) => estimate(a, DefectKind::EstimateII, format),
        Verify::Midpoint(a) => maps(a, DefectKind::MidpointEnergy, format),
        Verify::Radial(a) => maps(a, DefectKind::RadialEnergy, format),
        Verify::Convexity(a) => maps(a, DefectKind::Convexity, format),
    }
}

fn target_space(kind: TargetType, dim: usize) -> anyhow::Result<TargetSpace> {
    Ok(match kind {
        TargetType::Sphere => TargetSpace::sphere(dim)?,
        TargetType::Euclidean => TargetSpace::euclidean(dim)?,
    })
}

fn command_name(kind: DefectKind) -> &'static str {
    match kind {
        DefectKind::EstimateI => "verify estimateI",
        DefectKind::EstimateII => "verify estimateII",
        DefectKind::MidpointEnergy => "verify midpoint",
        DefectKind::RadialEnergy => "verify radial",
        DefectKind::Convexity => "verify convexity",
    }
}

#[derive(Serialize)]
struct EstimateOutput {
    study: ScalingStudy,
    /// Same protocol on the flat target of the same dimension, with `s = t`
    /// for ESTIMATE II.
    flat_control: Option<ScalingStudy>,
    assertions: Vec<Assertion>,
    pass: bool,
}

fn largest_positive(study: &ScalingStudy) -> f64 {
    study.rows.iter().map(|r| r.max_positive).fold(0.0, f64::max)
}

fn estimate(a: &VerifyEstimate, kind: DefectKind, format: Format) -> anyhow::Result<bool> {
    let sampling = a.sampling.map(Sampling::from).unwrap_or(match kind {
        DefectKind::EstimateI => Sampling::Sharp,
        _ => Sampling::Generic,
    });
    let target = target_space(a.target, a.dim)?;
    let params = ScalingParams {
        kind,
        target,
        sampling,
        scales: a.scales.clone(),
        samples: a.samples,
        seed: a.seed,
        percentile: a.percentile,
    };
    let study = scaling_study(&params)?;
    // Flat ESTIMATE II keeps cubic terms when s != t, so its control samples s = t.
    let exact = |s: Sampling| kind == DefectKind::EstimateI || s == Sampling::Diagonal;
    let control_sampling = if exact(sampling) { sampling } else { Sampling::Diagonal };
    let mut assertions = Vec::new();
    if !target.is_flat() {
        let slope = study.slope.unwrap_or(f64::NAN);
        assertions.push(Assertion::at_least("log-log slope", slope, a.min_slope));
    }
    let flat_control = if target.is_flat() && exact(sampling) {
        None
    } else {
        Some(scaling_study(&ScalingParams {
            target: TargetSpace::euclidean(a.dim)?,
            sampling: control_sampling,
            ..params.clone()
        })?)
    };
    let flat_study = flat_control.as_ref().unwrap_or(&study);
    assertions.push(Assertion::at_most(
        "flat max positive defect",
        largest_positive(flat_study),
        FLAT_TOL,
    ));
    let table = Table {
        columns: vec!["scale", "percentile_defect", "median_defect", "max_positive", "flat_max_positive"],
        rows: study
            .rows
            .iter()
            .enumerate()
            .map(|(k, row)| {
                let flat = flat_study.rows[k].max_positive;
                vec![
                    Cell::Num(row.scale),
                    Cell::Num(row.percentile_defect),
                    Cell::Num(row.median_defect),
                    Cell::Num(row.max_positive),
                    Cell::Num(flat),
                ]
            })
            .collect(),
    };
    let pass = assertions.iter().all(|c| c.pass);
    let config = json!({
        "kind": kind,
        "target": a.target,
        "dim": a.dim,
        "sampling": sampling,
        "scales": a.scales,
        "samples": a.samples,
        "percentile": a.percentile,
        "min_slope": a.min_slope,
    });
    let manifest = RunManifest::new(command_name(kind), config, &Default::default(), a.seed);
    let report = EstimateOutput {
        study,
        flat_control,
        assertions,
        pass,
    };
    emit(&manifest, &report, Some(&table), format, a.out.as_deref())?;
    Ok(pass)
}

/// The maps compared at every scale.
struct Case {
    label: String,
    flat: bool,
    u: MapState,
    v: Option<MapState>,
    eta: Option<MapState>,
}

#[derive(Serialize)]
struct SweepRow {
    case: String,
    flat: bool,
    r: f64,
    /// Total defect for convexity, largest pointwise defect otherwise.
    defect: f64,
    positive_part: f64,
    /// `E(u)/2 + E(v)/2` for convexity.
    mean_energy: Option<f64>,
}

#[derive(Serialize)]
struct MapsOutput {
    rows: Vec<SweepRow>,
    assertions: Vec<Assertion>,
    pass: bool,
}

fn grid(n: usize) -> anyhow::Result<Arc<PointCloudSpace>> {
    Ok(Arc::new(build_grid_domain(&GridSpec {
        dimension: 2,
        n_per_side: n,
        interior_box: AxisBox::unit(2),
        collar: PAIR_COLLAR,
    })?))
}

fn constant_eta(domain: &Arc<PointCloudSpace>, eta: f64) -> anyhow::Result<MapState> {
    if !(0.0..=1.0).contains(&eta) {
        bail!("--eta must lie in [0, 1]");
    }
    Ok(MapState::real(domain.clone(), vec![eta; domain.len()])?)
}

fn generated_cases(a: &VerifyMaps, kind: DefectKind) -> anyhow::Result<Vec<Case>> {
    if a.eta_map.is_some() {
        bail!("--eta-map needs --map");
    }
    let space = grid(a.n)?;
    let sphere = TargetSpace::sphere(2)?;
    let sball = RegularBall::new(&sphere, &[0.0, 0.0, 1.0], a.rho)?;
    let flat = TargetSpace::euclidean(2)?;
    let fball = RegularBall::new(&flat, &[0.0, 0.0], a.rho)?;
    let params = FieldParams::default();
    let eta = match kind {
        DefectKind::RadialEnergy => Some(constant_eta(&space, a.eta)?),
        _ => None,
    };
    let mut cases = Vec::new();
    for k in 0..a.pairs {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        rng.set_stream(k as u64);
        for (target, ball, flat) in [(&sphere, &sball, false), (&flat, &fball, true)] {
            let (u, v) = random_map_pair(&space, target, ball, &params, PAIR_CUTOFF, &mut rng)?;
            cases.push(Case {
                label: format!("{}{k}", if flat { "flat" } else { "pair" }),
                flat,
                u: u.map,
                v: Some(v.map),
                eta: eta.clone(),
            });
        }
    }
    Ok(cases)
}

fn given_cases(a: &VerifyMaps, kind: DefectKind, inputs: &mut Inputs) -> anyhow::Result<Vec<Case>> {
    let path = a.map.as_ref().expect("checked by caller");
    let (u, _) = inputs.map(path)?;
    let v = match (&a.map2, kind) {
        (Some(p), _) => Some(inputs.map(p)?.0),
        (None, DefectKind::RadialEnergy) => None,
        (None, _) => bail!("--map needs --map2 for this check"),
    };
    let eta = match (kind, &a.eta_map) {
        (DefectKind::RadialEnergy, Some(p)) => Some(inputs.map(p)?.0),
        (DefectKind::RadialEnergy, None) => Some(constant_eta(u.domain(), a.eta)?),
        _ => None,
    };
    Ok(vec![Case {
        label: "given".into(),
        flat: u.target().is_flat(),
        u,
        v,
        eta,
    }])
}

fn measure(kind: DefectKind, case: &Case, nb: &Neighborhoods) -> anyhow::Result<SweepRow> {
    let other = || case.v.as_ref().ok_or_else(|| anyhow!("second map missing"));
    let (defect, mean_energy) = match kind {
        DefectKind::Convexity => {
            let c = convexity_defect(&case.u, other()?, nb)?;
            (c.defect_total, Some(0.5 * c.energy_u + 0.5 * c.energy_v))
        }
        DefectKind::MidpointEnergy => {
            let m = midpoint_energy_defect(&case.u, other()?, nb)?;
            (largest(&m.per_point, &case.u), None)
        }
        DefectKind::RadialEnergy => {
            let eta = case.eta.as_ref().ok_or_else(|| anyhow!("eta missing"))?;
            let m = radial_energy_defect(&case.u, eta, nb)?;
            (largest(&m.per_point, &case.u), None)
        }
        _ => unreachable!("map checks only"),
    };
    Ok(SweepRow {
        case: case.label.clone(),
        flat: case.flat,
        r: nb.radius(),
        defect,
        positive_part: defect.max(0.0),
        mean_energy,
    })
}

/// Largest pointwise defect over the interior.
fn largest(per_point: &[f64], u: &MapState) -> f64 {
    u.domain()
        .interior_ids()
        .map(|x| per_point[x])
        .fold(f64::NEG_INFINITY, f64::max)
}

fn maps(a: &VerifyMaps, kind: DefectKind, format: Format) -> anyhow::Result<bool> {
    if a.r_sweep.is_empty() || a.r_sweep.windows(2).any(|w| w[1] >= w[0]) {
        bail!("--r-sweep must be a strictly decreasing list");
    }
    let mut inputs = Inputs::default();
    let cases = match a.map {
        Some(_) => given_cases(a, kind, &mut inputs)?,
        None => generated_cases(a, kind)?,
    };
    let domain = cases[0].u.domain().clone();
    let nbs = scales(&domain, &a.r_sweep)?;
    let mut rows = Vec::new();
    let mut assertions = Vec::new();
    for case in &cases {
        let case_rows = nbs.iter().map(|nb| measure(kind, case, nb)).collect::<anyhow::Result<Vec<_>>>()?;
        let pos: Vec<f64> = case_rows.iter().map(|r| r.positive_part).collect();
        if case.flat {
            let worst = pos.iter().copied().fold(0.0, f64::max);
            assertions.push(Assertion::at_most(format!("{}: flat positive part", case.label), worst, FLAT_TOL));
        } else {
            if kind == DefectKind::Convexity {
                // Largest increase of the positive part from one scale to the next.
                let rise = pos.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
                assertions.push(Assertion::at_most(
                    format!("{}: positive part increase between consecutive scales", case.label),
                    rise,
                    0.0,
                ));
            } else {
                // The pointwise defects only tend to zero; compare the ends of the sweep.
                let first = pos[0];
                let last = *pos.last().expect("nonempty sweep");
                assertions.push(Assertion::at_most(
                    format!("{}: positive part at the smallest scale", case.label),
                    last,
                    first,
                ));
            }
            let last = case_rows.last().expect("nonempty sweep");
            if let Some(mean) = last.mean_energy {
                let ratio = if mean > 0.0 { last.positive_part / mean } else { 0.0 };
                assertions.push(Assertion::at_most(
                    format!("{}: final positive part over mean energy", case.label),
                    ratio,
                    CONVEXITY_RATIO,
                ));
            }
        }
        rows.extend(case_rows);
    }
    let table = Table {
        columns: vec!["case", "flat", "r", "defect", "positive_part"],
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    Cell::Text(r.case.clone()),
                    Cell::Int(r.flat as usize),
                    Cell::Num(r.r),
                    Cell::Num(r.defect),
                    Cell::Num(r.positive_part),
                ]
            })
            .collect(),
    };
    let pass = assertions.iter().all(|c| c.pass);
    let config = json!({
        "kind": kind,
        "r_sweep": a.r_sweep,
        "map": a.map,
        "map2": a.map2,
        "n": a.map.is_none().then_some(a.n),
        "pairs": a.map.is_none().then_some(a.pairs),
        "rho": a.map.is_none().then_some(a.rho),
        "eta": (kind == DefectKind::RadialEnergy && a.eta_map.is_none()).then_some(a.eta),
        "eta_map": a.eta_map,
    });
    let seed = if a.map.is_none() { a.seed } else { 0 };
    let manifest = RunManifest::new(command_name(kind), config, inputs.hashes(), seed);
    let report = MapsOutput { rows, assertions, pass };
    emit(&manifest, &report, Some(&table), format, a.out.as_deref())?;
    Ok(pass)
}

