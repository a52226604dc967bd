//! JSON file formats and number formatting.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{GridLayout, PointCloudSpace, Region};
use crate::error::{Error, Result};
use crate::map::MapState;
use crate::target::{Euclidean, RegularBall, Sphere, TargetPoint, TargetSpace};

/// JSON formatter that writes every float with 17 significant digits.
#[derive(Debug, Clone, Copy, Default)]
pub struct PreciseFormatter;

impl serde_json::ser::Formatter for PreciseFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{}", format_f64(value))
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// `value` in scientific notation with 17 significant digits.
pub fn format_f64(value: f64) -> String {
    format!("{value:.16e}")
}

/// Serializes to compact JSON with 17-digit floats. Non-finite floats become
/// `null`, as with plain serde_json.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, PreciseFormatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = to_json_string(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Points {
    Coordinates(Vec<Vec<f64>>),
    Ids(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricSpec {
    /// `"euclidean"`: distances from the point coordinates.
    Named(String),
    Matrix(Vec<Vec<f64>>),
}

/// On-disk form of a [`PointCloudSpace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainFile {
    pub points: Points,
    pub metric: MetricSpec,
    pub weights: Vec<f64>,
    pub interior: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridLayout>,
}

impl DomainFile {
    pub fn from_space(space: &PointCloudSpace) -> Self {
        let n = space.len();
        let (points, metric) = match space.dense_distances() {
            Some(d) => (
                Points::Ids((0..n).collect()),
                MetricSpec::Matrix(d.chunks(n).map(|row| row.to_vec()).collect()),
            ),
            None => (
                Points::Coordinates((0..n).map(|i| space.coordinates(i).expect("coordinates").to_vec()).collect()),
                MetricSpec::Named("euclidean".into()),
            ),
        };
        Self {
            points,
            metric,
            weights: space.weights().to_vec(),
            interior: space.interior_ids().collect(),
            grid: space.grid_layout().cloned(),
        }
    }

    pub fn into_space(self) -> Result<PointCloudSpace> {
        let n = self.weights.len();
        let mut regions = vec![Region::Exterior; n];
        for &i in &self.interior {
            if i >= n {
                return Err(Error::InvalidDomain(format!("interior id {i} out of range")));
            }
            regions[i] = Region::Interior;
        }
        let mut space = match (self.points, self.metric) {
            (Points::Coordinates(rows), MetricSpec::Named(name)) if name == "euclidean" => {
                if rows.len() != n {
                    return Err(Error::InvalidDomain(format!("{} points for {n} weights", rows.len())));
                }
                let dim = rows.first().map_or(0, |r| r.len());
                if rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::InvalidDomain("points have different dimensions".into()));
                }
                PointCloudSpace::from_coordinates(dim, rows.concat(), self.weights, regions)?
            }
            (Points::Ids(ids), MetricSpec::Matrix(rows)) => {
                if ids.len() != n || ids.iter().enumerate().any(|(k, &i)| k != i) {
                    return Err(Error::InvalidDomain("point ids must be 0..n in order".into()));
                }
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidDomain(format!("metric must be a {n} x {n} matrix")));
                }
                PointCloudSpace::from_dense(rows.concat(), self.weights, regions)?
            }
            (Points::Ids(_), MetricSpec::Named(_)) => {
                return Err(Error::InvalidDomain("a named metric needs coordinates".into()));
            }
            (Points::Coordinates(_), _) => {
                return Err(Error::InvalidDomain("coordinates need the euclidean metric".into()));
            }
        };
        if let Some(layout) = self.grid {
            space.set_grid_layout(layout)?;
        }
        Ok(space)
    }
}

/// Target and regular ball in one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetDescriptor {
    #[serde(rename = "type")]
    pub kind: TargetKind,
    pub dim: usize,
    pub center: Vec<f64>,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Sphere,
    Euclidean,
}

impl TargetDescriptor {
    pub fn new(target: &TargetSpace, ball: &RegularBall) -> Self {
        let (kind, dim) = match target {
            TargetSpace::Sphere(Sphere { dim }) => (TargetKind::Sphere, *dim),
            TargetSpace::Euclidean(Euclidean { dim }) => (TargetKind::Euclidean, *dim),
        };
        Self {
            kind,
            dim,
            center: ball.center.to_vec(),
            rho: ball.radius,
        }
    }

    pub fn resolve(&self) -> Result<(TargetSpace, RegularBall)> {
        let target = match self.kind {
            TargetKind::Sphere => TargetSpace::sphere(self.dim)?,
            TargetKind::Euclidean => TargetSpace::euclidean(self.dim)?,
        };
        let ball = RegularBall::new(&target, &self.center, self.rho)?;
        Ok((target, ball))
    }
}

/// On-disk form of a [`MapState`]; `domain` is a path relative to the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapFile {
    pub domain: String,
    pub target: TargetDescriptor,
    pub values: Vec<Vec<f64>>,
}

impl MapFile {
    pub fn from_map(map: &MapState, domain_ref: &str) -> Self {
        Self {
            domain: domain_ref.to_string(),
            target: TargetDescriptor::new(map.target(), map.ball()),
            values: map.values().iter().map(|v| v.to_vec()).collect(),
        }
    }

    pub fn into_map(self, domain: Arc<PointCloudSpace>) -> Result<MapState> {
        let (target, ball) = self.target.resolve()?;
        let values = self.values.iter().map(|v| TargetPoint::from_slice(v)).collect();
        MapState::new(domain, target, ball, values)
    }
}

/// Boundary values on the exterior points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceFile {
    pub domain: String,
    pub ids: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

impl TraceFile {
    pub fn from_map(map: &MapState, domain_ref: &str) -> Self {
        Self {
            domain: domain_ref.to_string(),
            ids: map.trace().iter().map(|t| t.0).collect(),
            values: map.trace().iter().map(|t| t.1.to_vec()).collect(),
        }
    }

    pub fn entries(&self) -> Result<Vec<(usize, TargetPoint)>> {
        if self.ids.len() != self.values.len() {
            return Err(Error::Mismatch(format!(
                "{} trace ids for {} values",
                self.ids.len(),
                self.values.len()
            )));
        }
        Ok(self
            .ids
            .iter()
            .zip(&self.values)
            .map(|(&i, v)| (i, TargetPoint::from_slice(v)))
            .collect())
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads each domain file once, so that maps referring to the same file share
/// one [`PointCloudSpace`].
#[derive(Debug, Default)]
pub struct DomainCache {
    loaded: HashMap<PathBuf, Arc<PointCloudSpace>>,
}

impl DomainCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(&mut self, path: &Path) -> Result<Arc<PointCloudSpace>> {
        let key = fs::canonicalize(path)?;
        if let Some(d) = self.loaded.get(&key) {
            return Ok(d.clone());
        }
        let file: DomainFile = read_json(path)?;
        let space = Arc::new(file.into_space()?);
        self.loaded.insert(key, space.clone());
        Ok(space)
    }

    /// Resolves `reference` relative to the directory of `referrer`.
    pub fn load_relative(&mut self, referrer: &Path, reference: &str) -> Result<Arc<PointCloudSpace>> {
        self.load(&resolve_relative(referrer, reference))
    }
}

pub fn resolve_relative(referrer: &Path, reference: &str) -> PathBuf {
    let r = Path::new(reference);
    if r.is_absolute() {
        return r.to_path_buf();
    }
    referrer.parent().unwrap_or(Path::new(".")).join(r)
}

/// Path of `target` as seen from the directory of `from`, when `target` lies
/// below it; otherwise the absolute path.
pub fn relative_reference(from: &Path, target: &Path) -> String {
    let base = from
        .parent()
        .map(|p| if p.as_os_str().is_empty() { Path::new(".") } else { p })
        .unwrap_or(Path::new("."));
    let base = fs::canonicalize(base).unwrap_or_else(|_| base.to_path_buf());
    let full = fs::canonicalize(target).unwrap_or_else(|_| target.to_path_buf());
    match full.strip_prefix(&base) {
        Ok(rel) => rel.to_string_lossy().into_owned(),
        Err(_) => full.to_string_lossy().into_owned(),
    }
}

/// Loads a map file together with its domain.
pub fn load_map(cache: &mut DomainCache, path: &Path) -> Result<MapState> {
    let file: MapFile = read_json(path)?;
    let domain = cache.load_relative(path, &file.domain)?;
    file.into_map(domain)
}
