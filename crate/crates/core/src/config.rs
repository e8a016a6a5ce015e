//! Experiment description and its TOML config file.
//!
//! ```toml
//! [experiment]
//! family = "quantile:0.05"   # name[:dim] or quantile:tau
//! k = 20
//! n = 200
//! graph = "er:0.3"           # tree | tree:<p> | er:<p> | complete | path | star
//! reps = 300
//! levels = [0.90, 0.95]
//! seed = 1
//!
//! [solver]
//! rho_mult = 1.0             # rho = rho_mult * n
//! eta = "strict"             # strict | relaxed | <number>
//! eps_abs = 1e-8
//! eps_rel = 1e-7
//! max_iter = 10000
//!
//! [iterations]
//! family = "mean"
//! topologies = ["tree", "er:0.3", "complete"]
//! dims = [3, 5]
//! ns = [1000]
//!
//! [rho_sweep]
//! multipliers = [0.01, 0.1, 1.0, 10.0, 100.0]
//! ```
//!
//! Every key is optional; missing keys take the defaults shown.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::Deserialize;

use crate::admm::{EtaRule, SolverConfig};
use crate::data::substream;
use crate::error::{Error, Result};
use crate::estfun::EstimatingFunction;
use crate::graph::{gen_erdos_renyi, Graph};

/// Graph model for an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Topology {
    /// BFS spanning tree of the complete graph, rooted at node 1.
    Tree,
    /// BFS spanning tree of an Erdős–Rényi draw.
    TreeOf(f64),
    ErdosRenyi(f64),
    Complete,
    Path,
    Star,
}

impl Topology {
    /// Builds the graph on `k` nodes; `seed` only matters for random models.
    pub fn build(self, k: usize, seed: u64) -> Result<Graph> {
        match self {
            Self::Tree => Graph::complete(k)?.spanning_tree(),
            Self::TreeOf(p) => gen_erdos_renyi(k, p, seed)?.spanning_tree(),
            Self::ErdosRenyi(p) => gen_erdos_renyi(k, p, seed),
            Self::Complete => Graph::complete(k),
            Self::Path => Graph::path(k),
            Self::Star => Graph::star(k),
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Tree => write!(f, "tree"),
            Self::TreeOf(p) => write!(f, "tree:{p}"),
            Self::ErdosRenyi(p) => write!(f, "er:{p}"),
            Self::Complete => write!(f, "complete"),
            Self::Path => write!(f, "path"),
            Self::Star => write!(f, "star"),
        }
    }
}

impl FromStr for Topology {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((a, b)) => (a.trim(), Some(b.trim())),
            None => (s.trim(), None),
        };
        let prob = |a: Option<&str>| -> Result<f64> {
            let a = a.ok_or_else(|| Error::Parse(format!("graph '{s}' needs a probability, e.g. er:0.3")))?;
            let p: f64 = a.parse().map_err(|_| Error::Parse(format!("bad probability in '{s}'")))?;
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidArgument(format!("p_g must lie in (0, 1], got {p}")));
            }
            Ok(p)
        };
        match (name, arg) {
            ("tree", None) => Ok(Self::Tree),
            ("tree", a) => Ok(Self::TreeOf(prob(a)?)),
            ("er", a) => Ok(Self::ErdosRenyi(prob(a)?)),
            ("complete", None) => Ok(Self::Complete),
            ("path", None) => Ok(Self::Path),
            ("star", None) => Ok(Self::Star),
            _ => Err(Error::Parse(format!("unknown graph model '{s}'"))),
        }
    }
}

/// Seed for a derived quantity (graph draw, replication, ...) of `seed`.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    substream(seed ^ tag.rotate_left(32), index).random()
}

pub(crate) const GRAPH_TAG: u64 = 0x6772_6170;
pub(crate) const DATA_TAG: u64 = 0x6461_7461;

/// Solver knobs in config form; ρ is given as a multiple of n.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub rho_mult: f64,
    pub eta: EtaRule,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { rho_mult: 1.0, eta: EtaRule::Strict, eps_abs: 1e-8, eps_rel: 1e-7, max_iter: 10_000 }
    }
}

impl SolverSettings {
    pub fn to_config(&self, k: usize, n: usize) -> SolverConfig {
        let mut c = SolverConfig::for_sizes(k, n);
        c.rho = self.rho_mult * n as f64;
        c.eta = self.eta.value(k, n);
        c.eps_abs = self.eps_abs;
        c.eps_rel = self.eps_rel;
        c.max_iter = self.max_iter;
        c.track_statistic = false;
        c
    }
}

/// One synthetic experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub family: EstimatingFunction,
    pub k: usize,
    pub n: usize,
    pub topology: Topology,
    pub reps: usize,
    pub levels: Vec<f64>,
    pub seed: u64,
    pub solver: SolverSettings,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            family: EstimatingFunction::Quantile { tau: 0.05 },
            k: 20,
            n: 200,
            topology: Topology::ErdosRenyi(0.3),
            reps: 300,
            levels: vec![0.90, 0.95],
            seed: 1,
            solver: SolverSettings::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 || self.n == 0 {
            return Err(Error::InvalidArgument(format!("need K ≥ 2 and n ≥ 1, got K={} n={}", self.k, self.n)));
        }
        if self.reps == 0 {
            return Err(Error::InvalidArgument("reps must be at least 1".into()));
        }
        if let Some(l) = self.levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
            return Err(Error::InvalidArgument(format!("levels must lie in (0, 1), got {l}")));
        }
        self.solver_config().validate()
    }

    pub fn total_samples(&self) -> usize {
        self.k * self.n
    }

    pub fn solver_config(&self) -> SolverConfig {
        self.solver.to_config(self.k, self.n)
    }

    /// Graph used by replication `rep`.
    pub fn graph(&self, rep: usize) -> Result<Graph> {
        self.topology.build(self.k, derive_seed(self.seed, GRAPH_TAG, rep as u64))
    }

    /// Node datasets of replication `rep`.
    pub fn data(&self, rep: usize) -> Result<Vec<crate::el::NodeDataset>> {
        let mut rng = substream(derive_seed(self.seed, DATA_TAG, 0), rep as u64);
        crate::data::generate_data(&self.family, self.k, self.n, &mut rng)
    }
}

/// Grid for the iteration/time table.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationGrid {
    pub family: String,
    pub topologies: Vec<Topology>,
    pub dims: Vec<usize>,
    pub ns: Vec<usize>,
}

impl Default for IterationGrid {
    fn default() -> Self {
        Self {
            family: "mean".into(),
            topologies: vec![Topology::Tree, Topology::ErdosRenyi(0.3), Topology::Complete],
            dims: vec![3, 5],
            ns: vec![1000],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub experiment: ExperimentSpec,
    pub iterations: IterationGrid,
    pub rho_multipliers: Vec<f64>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            experiment: ExperimentSpec::default(),
            iterations: IterationGrid::default(),
            rho_multipliers: vec![0.01, 0.1, 1.0, 10.0, 100.0],
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    experiment: RawExperiment,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    iterations: RawIterations,
    #[serde(default)]
    rho_sweep: RawRho,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    family: Option<String>,
    k: Option<usize>,
    n: Option<usize>,
    graph: Option<String>,
    reps: Option<usize>,
    levels: Option<Vec<f64>>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    rho_mult: Option<f64>,
    eta: Option<toml::Value>,
    eps_abs: Option<f64>,
    eps_rel: Option<f64>,
    max_iter: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIterations {
    family: Option<String>,
    topologies: Option<Vec<String>>,
    dims: Option<Vec<usize>>,
    ns: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRho {
    multipliers: Option<Vec<f64>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let mut cfg = Config::default();
        let e = &mut cfg.experiment;
        if let Some(f) = raw.experiment.family {
            e.family = f.parse()?;
        }
        e.k = raw.experiment.k.unwrap_or(e.k);
        e.n = raw.experiment.n.unwrap_or(e.n);
        if let Some(g) = raw.experiment.graph {
            e.topology = g.parse()?;
        }
        e.reps = raw.experiment.reps.unwrap_or(e.reps);
        if let Some(l) = raw.experiment.levels {
            e.levels = l;
        }
        e.seed = raw.experiment.seed.unwrap_or(e.seed);
        let s = &mut e.solver;
        s.rho_mult = raw.solver.rho_mult.unwrap_or(s.rho_mult);
        s.eta = match raw.solver.eta {
            None => s.eta,
            Some(toml::Value::String(v)) => v.parse()?,
            Some(toml::Value::Float(v)) => EtaRule::Fixed(v),
            Some(toml::Value::Integer(v)) => EtaRule::Fixed(v as f64),
            Some(other) => return Err(Error::Parse(format!("bad eta value {other}"))),
        };
        s.eps_abs = raw.solver.eps_abs.unwrap_or(s.eps_abs);
        s.eps_rel = raw.solver.eps_rel.unwrap_or(s.eps_rel);
        s.max_iter = raw.solver.max_iter.unwrap_or(s.max_iter);

        let it = &mut cfg.iterations;
        if let Some(f) = raw.iterations.family {
            it.family = f;
        }
        if let Some(t) = raw.iterations.topologies {
            it.topologies = t.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        }
        it.dims = raw.iterations.dims.unwrap_or(std::mem::take(&mut it.dims));
        it.ns = raw.iterations.ns.unwrap_or(std::mem::take(&mut it.ns));
        if let Some(m) = raw.rho_sweep.multipliers {
            cfg.rho_multipliers = m;
        }
        cfg.experiment.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}
