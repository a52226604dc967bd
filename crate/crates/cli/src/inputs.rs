//! Reading input files: schema validation, semantic checks and hashing.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use ksh_core::io::{resolve_relative, DomainFile, MapFile, TargetDescriptor, TargetKind, TraceFile};
use ksh_core::target::Geometry;
use ksh_core::{Error as CoreError, MapState, PointCloudSpace, RegularBall, TargetPoint, TargetSpace};
use serde::de::DeserializeOwned;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Input that does not match its schema or cannot be used as given. Each
/// problem carries a JSON pointer into the offending file.
#[derive(Debug)]
pub struct ValidationError {
    pub file: String,
    pub problems: Vec<(String, String)>,
}

impl ValidationError {
    pub fn single(file: &str, pointer: &str, message: impl Into<String>) -> Self {
        Self {
            file: file.to_string(),
            problems: vec![(pointer.to_string(), message.into())],
        }
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failed validation", self.file)?;
        for (pointer, message) in &self.problems {
            let pointer = if pointer.is_empty() { "/" } else { pointer };
            write!(f, "\n  {}#{}: {}", self.file, pointer, message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    Domain,
    Target,
    Map,
    Trace,
}

impl Schema {
    fn text(self) -> &'static str {
        match self {
            Schema::Domain => include_str!("../schemas/domain.schema.json"),
            Schema::Target => include_str!("../schemas/target.schema.json"),
            Schema::Map => include_str!("../schemas/map.schema.json"),
            Schema::Trace => include_str!("../schemas/trace.schema.json"),
        }
    }

    fn validator(self) -> &'static jsonschema::Validator {
        static CELLS: [OnceLock<jsonschema::Validator>; 4] =
            [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
        CELLS[self as usize].get_or_init(|| {
            let schema: Value = serde_json::from_str(self.text()).expect("bundled schema is JSON");
            jsonschema::validator_for(&schema).expect("bundled schema compiles")
        })
    }

    /// Problems of `value` against this schema, with pointers prefixed by
    /// `prefix`.
    pub fn check(self, value: &Value, prefix: &str) -> Vec<(String, String)> {
        self.validator()
            .iter_errors(value)
            .map(|e| (format!("{prefix}{}", e.instance_path()), e.to_string()))
            .collect()
    }
}

/// Files read during one command, with their SHA-256 hashes.
#[derive(Debug, Default)]
pub struct Inputs {
    hashes: BTreeMap<String, String>,
    domains: HashMap<PathBuf, (String, Arc<PointCloudSpace>)>,
}

pub struct LoadedTarget {
    pub target: TargetSpace,
    pub ball: RegularBall,
}

pub struct LoadedTrace {
    pub domain: Arc<PointCloudSpace>,
    pub domain_path: PathBuf,
    pub entries: Vec<(usize, TargetPoint)>,
}

impl Inputs {
    pub fn hashes(&self) -> &BTreeMap<String, String> {
        &self.hashes
    }

    /// Reads and hashes a file that has no schema, such as a CSV table.
    pub fn raw(&mut self, path: &Path) -> anyhow::Result<Vec<u8>> {
        Ok(self.read(path)?.1)
    }

    fn read(&mut self, path: &Path) -> anyhow::Result<(String, Vec<u8>)> {
        let name = path.display().to_string();
        let bytes = fs::read(path).map_err(|e| ValidationError::single(&name, "", format!("cannot read: {e}")))?;
        self.hashes.insert(name.clone(), hex::encode(Sha256::digest(&bytes)));
        Ok((name, bytes))
    }

    /// Reads `path`, checks it against `schema` and deserializes it.
    fn load<T: DeserializeOwned>(&mut self, path: &Path, schema: Schema) -> anyhow::Result<(String, T)> {
        let (name, bytes) = self.read(path)?;
        let value: Value = serde_json::from_slice(&bytes)
            .map_err(|e| ValidationError::single(&name, "", format!("not valid JSON: {e}")))?;
        let mut problems = schema.check(&value, "");
        if schema == Schema::Map && value.get("target").is_some_and(Value::is_object) {
            problems.extend(Schema::Target.check(&value["target"], "/target"));
        }
        if !problems.is_empty() {
            return Err(ValidationError { file: name, problems }.into());
        }
        let parsed = serde_json::from_value(value).map_err(|e| ValidationError::single(&name, "", e.to_string()))?;
        Ok((name, parsed))
    }

    pub fn domain(&mut self, path: &Path) -> anyhow::Result<Arc<PointCloudSpace>> {
        let key = fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf());
        if let Some((_, d)) = self.domains.get(&key) {
            return Ok(d.clone());
        }
        let (name, file): (_, DomainFile) = self.load(path, Schema::Domain)?;
        let space = Arc::new(file.into_space().map_err(|e| semantic(&name, e))?);
        self.domains.insert(key, (name, space.clone()));
        Ok(space)
    }

    pub fn target(&mut self, path: &Path) -> anyhow::Result<LoadedTarget> {
        let (name, file): (_, TargetDescriptor) = self.load(path, Schema::Target)?;
        target_from(&name, "", &file)
    }

    pub fn map(&mut self, path: &Path) -> anyhow::Result<(MapState, PathBuf)> {
        let (name, file): (_, MapFile) = self.load(path, Schema::Map)?;
        let domain_path = resolve_relative(path, &file.domain);
        let domain = self.domain(&domain_path)?;
        let t = target_from(&name, "/target", &file.target)?;
        let values = file.values.iter().map(|v| TargetPoint::from_slice(v)).collect();
        let map = MapState::new(domain, t.target, t.ball, values).map_err(|e| semantic(&name, e))?;
        Ok((map, domain_path))
    }

    pub fn trace(&mut self, path: &Path) -> anyhow::Result<LoadedTrace> {
        let (name, file): (_, TraceFile) = self.load(path, Schema::Trace)?;
        if file.ids.len() != file.values.len() {
            return Err(ValidationError::single(
                &name,
                "/values",
                format!("{} values for {} ids", file.values.len(), file.ids.len()),
            )
            .into());
        }
        let domain_path = resolve_relative(path, &file.domain);
        let domain = self.domain(&domain_path)?;
        let exterior: Vec<usize> = domain.exterior_ids().collect();
        let mut ids = file.ids.clone();
        ids.sort_unstable();
        if ids != exterior {
            let missing = exterior.iter().find(|i| !ids.contains(i));
            let message = match missing {
                Some(i) => format!("exterior point {i} has no trace value"),
                None => "ids must be exactly the exterior points of the domain".to_string(),
            };
            return Err(ValidationError::single(&name, "/ids", message).into());
        }
        let entries = file.entries().map_err(|e| semantic(&name, e))?;
        Ok(LoadedTrace {
            domain,
            domain_path,
            entries,
        })
    }
}

fn target_from(name: &str, prefix: &str, file: &TargetDescriptor) -> anyhow::Result<LoadedTarget> {
    let fail = |field: &str, e: CoreError| ValidationError::single(name, &format!("{prefix}/{field}"), e.to_string());
    let target = match file.kind {
        TargetKind::Sphere => TargetSpace::sphere(file.dim),
        TargetKind::Euclidean => TargetSpace::euclidean(file.dim),
    }
    .map_err(|e| fail("dim", e))?;
    target.point(&file.center).map_err(|e| fail("center", e))?;
    let ball = RegularBall::new(&target, &file.center, file.rho).map_err(|e| fail("rho", e))?;
    Ok(LoadedTarget { target, ball })
}

/// Core errors raised while building objects from a file that passed its
/// schema, pointed at the offending entry where possible.
fn semantic(name: &str, e: CoreError) -> anyhow::Error {
    let pointer = match &e {
        CoreError::OutsideBall { point, .. } => format!("/values/{point}"),
        CoreError::Mismatch(_) | CoreError::InvalidTarget(_) => "/values".to_string(),
        _ => String::new(),
    };
    ValidationError::single(name, &pointer, e.to_string()).into()
}
