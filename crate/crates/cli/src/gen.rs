//! `ksh gen`: domain, target, trace and map files.

use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use ksh_core::comparison::{random_lipschitz_map, FieldParams};
use ksh_core::io::{to_json_string, DomainFile, MapFile, TargetDescriptor, TraceFile};
use ksh_core::target::Geometry;
use ksh_core::{build_graph_domain, build_grid_domain, AxisBox, GridSpec, MapState, PointCloudSpace, Region};
use ksh_core::{RegularBall, TargetPoint, TargetSpace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::cli::{Gen, GenChain, GenGraph, GenGrid, GenPoints, TargetType};
use crate::inputs::Inputs;
use crate::output::{write_json, RunManifest};

const DOMAIN: &str = "domain.json";

pub fn run(cmd: &Gen) -> anyhow::Result<()> {
    let mut inputs = Inputs::default();
    let (name, config, seed, out_dir) = match cmd {
        Gen::Grid(a) => {
            grid(a)?;
            ("gen grid", serde_json::to_value(a)?, a.seed, &a.out_dir)
        }
        Gen::Graph(a) => {
            graph(a, &mut inputs)?;
            ("gen graph", serde_json::to_value(a)?, 0, &a.out_dir)
        }
        Gen::Points(a) => {
            points(a, &mut inputs)?;
            ("gen points", serde_json::to_value(a)?, 0, &a.out_dir)
        }
        Gen::Chain(a) => {
            chain(a)?;
            ("gen chain", serde_json::to_value(a)?, 0, &a.out_dir)
        }
    };
    let manifest = RunManifest::new(name, config, inputs.hashes(), seed);
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    println!("{}", to_json_string(&manifest)?);
    Ok(())
}

fn unit_center(target: &TargetSpace) -> Vec<f64> {
    let n = target.ambient_dim();
    let mut c = vec![0.0; n];
    if !target.is_flat() {
        c[n - 1] = 1.0;
    }
    c
}

fn write_domain(dir: &Path, space: &PointCloudSpace) -> anyhow::Result<()> {
    write_json(&dir.join(DOMAIN), &DomainFile::from_space(space))
}

/// Writes `target.json` and `trace.json` for `map`, and `map.json` when asked.
fn write_problem(dir: &Path, map: &MapState, with_map: bool) -> anyhow::Result<()> {
    write_json(&dir.join("target.json"), &TargetDescriptor::new(map.target(), map.ball()))?;
    write_json(&dir.join("trace.json"), &TraceFile::from_map(map, DOMAIN))?;
    if with_map {
        write_json(&dir.join("map.json"), &MapFile::from_map(map, DOMAIN))?;
    }
    Ok(())
}

fn grid(a: &GenGrid) -> anyhow::Result<()> {
    if a.n < 2 {
        bail!("--n must be at least 2");
    }
    let h = (a.upper - a.lower) / (a.n - 1) as f64;
    let spec = GridSpec {
        dimension: a.dim,
        n_per_side: a.n,
        interior_box: AxisBox::new(vec![a.lower; a.dim], vec![a.upper; a.dim]),
        collar: a.collar.unwrap_or(2.0 * h),
    };
    let space = Arc::new(build_grid_domain(&spec)?);
    write_domain(&a.out_dir, &space)?;
    if a.trace.is_some() {
        let target = match a.target {
            TargetType::Sphere => TargetSpace::sphere(a.target_dim)?,
            TargetType::Euclidean => TargetSpace::euclidean(a.target_dim)?,
        };
        let ball = RegularBall::new(&target, &unit_center(&target), a.rho)?;
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        let random = random_lipschitz_map(&space, &target, &ball, &FieldParams::default(), &mut rng)?;
        write_problem(&a.out_dir, &random.map, true)?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct Edge {
    a: usize,
    b: usize,
    length: f64,
}

fn graph(a: &GenGraph, inputs: &mut Inputs) -> anyhow::Result<()> {
    let bytes = inputs.raw(&a.edges)?;
    let mut edges = Vec::new();
    for (k, row) in csv::Reader::from_reader(bytes.as_slice()).deserialize::<Edge>().enumerate() {
        let e = row.with_context(|| format!("{}: edge row {}", a.edges.display(), k + 1))?;
        edges.push((e.a, e.b, e.length));
    }
    let largest = edges
        .iter()
        .flat_map(|e| [e.0, e.1])
        .chain(a.interior.iter().copied())
        .max()
        .ok_or_else(|| anyhow!("{}: no edges", a.edges.display()))?;
    let n = a.points.unwrap_or(largest + 1);
    if !(a.weight.is_finite() && a.weight > 0.0) {
        bail!("--weight must be positive");
    }
    let space = build_graph_domain(&edges, &a.interior, vec![a.weight; n])?;
    write_domain(&a.out_dir, &space)
}

fn points(a: &GenPoints, inputs: &mut Inputs) -> anyhow::Result<()> {
    let bytes = inputs.raw(&a.csv)?;
    let name = a.csv.display();
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let headers = reader.headers()?.clone();
    let column = |h: &str| headers.iter().position(|c| c.trim() == h);
    let axes: Vec<usize> = ["x", "y", "z"].iter().map_while(|h| column(h)).collect();
    if axes.is_empty() {
        bail!("{name}: header needs an x column");
    }
    let weight = column("weight").ok_or_else(|| anyhow!("{name}: header needs a weight column"))?;
    let region = column("region").ok_or_else(|| anyhow!("{name}: header needs a region column"))?;
    let (mut coords, mut weights, mut regions) = (Vec::new(), Vec::new(), Vec::new());
    for (k, row) in reader.records().enumerate() {
        let row = row?;
        let line = k + 2;
        let field = |i: usize| row.get(i).map(str::trim).unwrap_or("");
        let number = |i: usize| -> anyhow::Result<f64> {
            field(i)
                .parse()
                .map_err(|_| anyhow!("{name}: line {line}: {:?} is not a number", field(i)))
        };
        for &i in &axes {
            coords.push(number(i)?);
        }
        weights.push(number(weight)?);
        regions.push(match field(region) {
            "interior" => Region::Interior,
            "exterior" => Region::Exterior,
            other => bail!("{name}: line {line}: region {other:?} is neither interior nor exterior"),
        });
    }
    let space = PointCloudSpace::from_coordinates(axes.len(), coords, weights, regions)?;
    write_domain(&a.out_dir, &space)
}

fn parse_point(text: &str) -> anyhow::Result<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| anyhow!("{s:?} is not a number in point {text:?}")))
        .collect()
}

fn chain(a: &GenChain) -> anyhow::Result<()> {
    if a.n < 2 {
        bail!("--n must be at least 2");
    }
    if a.collar_points == 0 {
        bail!("--collar-points must be at least 1");
    }
    if !(a.spacing.is_finite() && a.spacing > 0.0) {
        bail!("--spacing must be positive");
    }
    let h = a.spacing;
    let (p, q) = match &a.boundary {
        Some(b) => (parse_point(&b[0])?, parse_point(&b[1])?),
        None => {
            let (s, c) = 0.8f64.sin_cos();
            (vec![-s, 0.0, c], vec![s, 0.0, c])
        }
    };
    let ambient = a.center.as_ref().map_or(p.len(), Vec::len);
    let target = TargetSpace::sphere(ambient.saturating_sub(1))?;
    let center = a.center.clone().unwrap_or_else(|| unit_center(&target));
    let ball = RegularBall::new(&target, &center, a.rho)?;
    let end = |v: &[f64], which: &str| -> anyhow::Result<TargetPoint> {
        let point = target.point(v).with_context(|| format!("boundary value {which}"))?;
        if !ball.contains(&target, &point) {
            bail!("boundary value {which} lies outside the ball of radius {}", a.rho);
        }
        Ok(point)
    };
    let (p, q) = (end(&p, "P")?, end(&q, "Q")?);
    let spec = GridSpec {
        dimension: 1,
        n_per_side: a.n,
        interior_box: AxisBox::new(vec![h], vec![a.n as f64 * h]),
        collar: a.collar_points as f64 * h,
    };
    let space = Arc::new(build_grid_domain(&spec)?);
    let mid = 0.5 * (a.n as f64 + 1.0) * h;
    let map = MapState::from_fn(space.clone(), target, ball.clone(), |i| {
        let x = space.coordinates(i).expect("grid coordinates")[0];
        match space.region(i) {
            Region::Interior => ball.center.clone(),
            Region::Exterior if x < mid => p.clone(),
            Region::Exterior => q.clone(),
        }
    })?;
    write_domain(&a.out_dir, &space)?;
    write_problem(&a.out_dir, &map, false)
}
