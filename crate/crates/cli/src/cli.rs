//! Command-line definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ksh_core::comparison::Sampling;
use ksh_core::solver::{Objective, Relaxation};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "ksh", version, about = "Korevaar-Schoen energies of maps into regular balls")]
pub struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "KSH_THREADS")]
    pub threads: Option<usize>,

    /// Report format. CSV is available for the tabular reports of `verify`
    /// and `sweep-r`.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write domain, target and trace files.
    #[command(subcommand)]
    Gen(Gen),
    /// Approximate energy of a map at one scale.
    Energy(EnergyArgs),
    /// Solve the discrete Dirichlet problem for a boundary trace.
    Solve(SolveArgs),
    /// Solve from several random starts and compare the results.
    Multistart(MultistartArgs),
    /// Numerical checks of the comparison inequalities.
    #[command(subcommand)]
    Verify(Verify),
    /// Energies over a decreasing sequence of scales.
    SweepR(SweepArgs),
}

#[derive(Debug, Subcommand)]
pub enum Gen {
    /// Uniform grid on a box with an exterior collar.
    Grid(GenGrid),
    /// Graph with shortest-path distances, from an edge list.
    Graph(GenGraph),
    /// Euclidean point cloud from a CSV file.
    Points(GenPoints),
    /// One-dimensional chain with a geodesic boundary problem.
    Chain(GenChain),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetType {
    Sphere,
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceKind {
    /// Boundary values of a smooth random map.
    Random,
}

#[derive(Debug, Args, Serialize)]
pub struct GenGrid {
    #[arg(long)]
    pub dim: usize,
    /// Interior points per side.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub lower: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub upper: f64,
    /// Width of the exterior collar; two grid spacings when absent.
    #[arg(long)]
    pub collar: Option<f64>,
    /// Also write a target, a random map and its trace.
    #[arg(long, value_enum)]
    pub trace: Option<TraceKind>,
    #[arg(long, value_enum, default_value_t = TargetType::Sphere)]
    pub target: TargetType,
    /// Dimension of the target.
    #[arg(long, default_value_t = 2)]
    pub target_dim: usize,
    #[arg(long, default_value_t = 1.2)]
    pub rho: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GenGraph {
    /// CSV with header `a,b,length`.
    #[arg(long)]
    pub edges: PathBuf,
    /// Comma-separated interior point ids.
    #[arg(long, value_delimiter = ',', required = true)]
    pub interior: Vec<usize>,
    /// Number of points; one more than the largest id when absent.
    #[arg(long)]
    pub points: Option<usize>,
    /// Weight of every point.
    #[arg(long, default_value_t = 1.0)]
    pub weight: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GenPoints {
    /// CSV with header `x[,y[,z]],weight,region`; region is `interior` or
    /// `exterior`.
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GenChain {
    /// Interior points.
    #[arg(long)]
    pub n: usize,
    /// Boundary values at the two ends, as comma-separated coordinates.
    #[arg(long, num_args = 2, value_names = ["P", "Q"], allow_hyphen_values = true)]
    pub boundary: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub center: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.2)]
    pub rho: f64,
    #[arg(long, default_value_t = 1.0)]
    pub spacing: f64,
    /// Exterior points at each end.
    #[arg(long, default_value_t = 2)]
    pub collar_points: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long)]
    pub r: f64,
    /// Maps defining the exclusion sets of the modified energy.
    #[arg(long, num_args = 2, value_names = ["V", "W"])]
    pub modified: Option<Vec<PathBuf>>,
    #[arg(long, requires = "modified")]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    Center,
    Nearest,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RelaxationArg {
    GaussSeidel,
    Jacobi,
}

impl From<RelaxationArg> for Relaxation {
    fn from(r: RelaxationArg) -> Self {
        match r {
            RelaxationArg::GaussSeidel => Relaxation::GaussSeidel,
            RelaxationArg::Jacobi => Relaxation::Jacobi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    TraceExtended,
    Faithful,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::TraceExtended => Objective::TraceExtended,
            ObjectiveArg::Faithful => Objective::Faithful,
        }
    }
}

/// Inputs and solver settings shared by `solve` and `multistart`.
#[derive(Debug, Args)]
pub struct ProblemArgs {
    /// Domain file; must be the one the trace refers to.
    #[arg(long)]
    pub domain: Option<PathBuf>,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub r: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20_000)]
    pub max_sweeps: usize,
    #[arg(long, default_value_t = 1e-13)]
    pub energy_tol: f64,
    #[arg(long, default_value_t = 1e-11)]
    pub move_tol: f64,
    #[arg(long, value_enum, default_value_t = RelaxationArg::GaussSeidel)]
    pub relaxation: RelaxationArg,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::TraceExtended)]
    pub objective: ObjectiveArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, value_enum, default_value_t = Init::Center)]
    pub init: Init,
    /// Radius around the ball center for `--init random`.
    #[arg(long, default_value_t = 0.5)]
    pub perturb: f64,
    /// Also write the solution as a map file.
    #[arg(long)]
    pub map_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MultistartArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value_t = 10)]
    pub starts: usize,
    #[arg(long, default_value_t = 0.5)]
    pub perturb: f64,
}

#[derive(Debug, Subcommand)]
pub enum Verify {
    /// Growth order of the ESTIMATE I defect on random quadrilaterals.
    #[command(name = "estimateI")]
    EstimateI(VerifyEstimate),
    /// Growth order of the ESTIMATE II defect on random hinges.
    #[command(name = "estimateII")]
    EstimateII(VerifyEstimate),
    /// Midpoint energy inequality over a sweep of scales.
    Midpoint(VerifyMaps),
    /// Radial contraction energy inequality over a sweep of scales.
    Radial(VerifyMaps),
    /// Convexity inequality over a sweep of scales.
    Convexity(VerifyMaps),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplingArg {
    Generic,
    Sharp,
    Diagonal,
}

impl From<SamplingArg> for Sampling {
    fn from(s: SamplingArg) -> Self {
        match s {
            SamplingArg::Generic => Sampling::Generic,
            SamplingArg::Sharp => Sampling::Sharp,
            SamplingArg::Diagonal => Sampling::Diagonal,
        }
    }
}

#[derive(Debug, Args)]
pub struct VerifyEstimate {
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = default_scales())]
    pub scales: Vec<f64>,
    /// Sharp for ESTIMATE I and generic for ESTIMATE II when absent.
    #[arg(long, value_enum)]
    pub sampling: Option<SamplingArg>,
    #[arg(long, default_value_t = 95.0)]
    pub percentile: f64,
    #[arg(long, value_enum, default_value_t = TargetType::Sphere)]
    pub target: TargetType,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Smallest accepted log-log slope on curved targets.
    #[arg(long, default_value_t = 2.8)]
    pub min_slope: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn default_scales() -> Vec<f64> {
    [-1.0, -1.5, -2.0, -2.5, -3.0].iter().map(|e| 10f64.powf(*e)).collect()
}

#[derive(Debug, Args)]
pub struct VerifyMaps {
    /// Scales, largest first.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.2, 0.1, 0.05])]
    pub r_sweep: Vec<f64>,
    /// First map; random pairs on a grid are generated when absent.
    #[arg(long)]
    pub map: Option<PathBuf>,
    /// Second map, with the same trace as the first.
    #[arg(long)]
    pub map2: Option<PathBuf>,
    /// Interior points per side of the generated grid.
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    /// Random pairs on the generated grid.
    #[arg(long, default_value_t = 20)]
    pub pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Radius of the generated maps' target ball.
    #[arg(long, default_value_t = 1.2)]
    pub rho: f64,
    /// Constant contraction fraction in `[0, 1]` for `radial`.
    #[arg(long, default_value_t = 0.5)]
    pub eta: f64,
    /// Real-valued map of contraction fractions for `radial`.
    #[arg(long, conflicts_with = "eta")]
    pub eta_map: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub map: PathBuf,
    /// Scales, largest first.
    #[arg(long, value_delimiter = ',', required = true)]
    pub r_values: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
