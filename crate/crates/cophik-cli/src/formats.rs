//! Stable text formats: field files, ensemble directories, observation
//! tables, run configuration, and report files.
//!
//! Floats are written with the shortest representation that round-trips,
//! so parse -> serialize is byte-identical for files the tools wrote.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use cophik::active::StepRecord;
use cophik::constraint::BoundReport;
use cophik::grid::{Field, Grid, GridAxis, Point};
use cophik::obs::ObservationSet;
use cophik::phik::Ensemble;

/// Grid spec string: `lo:hi:n` per axis, comma separated.
pub fn parse_grid_spec(spec: &str) -> Result<Grid> {
    let mut axes = Vec::new();
    for part in spec.split(',') {
        let fields: Vec<&str> = part.split(':').collect();
        if fields.len() != 3 {
            bail!("grid axis `{part}` is not of the form lo:hi:n");
        }
        let lower: f64 = fields[0].parse().with_context(|| format!("bad lower bound `{}`", fields[0]))?;
        let upper: f64 = fields[1].parse().with_context(|| format!("bad upper bound `{}`", fields[1]))?;
        let nodes: usize = fields[2].parse().with_context(|| format!("bad node count `{}`", fields[2]))?;
        axes.push(GridAxis { lower, upper, nodes });
    }
    Ok(Grid::new(axes)?)
}

pub fn grid_spec_string(grid: &Grid) -> String {
    grid.axes()
        .iter()
        .map(|a| format!("{}:{}:{}", a.lower, a.upper, a.nodes))
        .collect::<Vec<_>>()
        .join(",")
}

fn grid_header(grid: &Grid) -> String {
    let axes = grid
        .axes()
        .iter()
        .map(|a| a.nodes.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let bounds = grid
        .axes()
        .iter()
        .map(|a| format!("{}:{}", a.lower, a.upper))
        .collect::<Vec<_>>()
        .join(",");
    format!("#field dim={} axes={} bounds={}", grid.dim(), axes, bounds)
}

/// Serialize a field: header line, then one value per line in row-major
/// node order.
pub fn field_to_string(field: &Field) -> String {
    let mut out = grid_header(field.grid());
    out.push('\n');
    for v in field.values() {
        writeln!(out, "{v}").expect("string write");
    }
    out
}

pub fn write_field(path: &Path, field: &Field) -> Result<()> {
    fs::write(path, field_to_string(field)).with_context(|| format!("writing {}", path.display()))
}

pub fn parse_field(content: &str) -> Result<Field> {
    let mut lines = content.lines();
    let header = lines.next().ok_or_else(|| anyhow!("empty field file"))?;
    let rest = header
        .strip_prefix("#field ")
        .ok_or_else(|| anyhow!("field file must start with `#field `"))?;
    let mut dim: Option<usize> = None;
    let mut axes: Option<Vec<usize>> = None;
    let mut bounds: Option<Vec<(f64, f64)>> = None;
    for token in rest.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| anyhow!("malformed header token `{token}`"))?;
        match key {
            "dim" => dim = Some(value.parse().context("bad dim")?),
            "axes" => {
                axes = Some(
                    value
                        .split(',')
                        .map(|s| s.parse::<usize>().context("bad axis node count"))
                        .collect::<Result<_>>()?,
                )
            }
            "bounds" => {
                bounds = Some(
                    value
                        .split(',')
                        .map(|s| {
                            let (lo, hi) = s
                                .split_once(':')
                                .ok_or_else(|| anyhow!("bad bounds token `{s}`"))?;
                            Ok((lo.parse::<f64>()?, hi.parse::<f64>()?))
                        })
                        .collect::<Result<_>>()?,
                )
            }
            other => bail!("unknown field header key `{other}`"),
        }
    }
    let dim = dim.ok_or_else(|| anyhow!("field header missing dim"))?;
    let axes = axes.ok_or_else(|| anyhow!("field header missing axes"))?;
    let bounds = bounds.ok_or_else(|| anyhow!("field header missing bounds"))?;
    if axes.len() != dim || bounds.len() != dim {
        bail!("field header dim {dim} does not match axes/bounds");
    }
    let grid = Grid::uniform(&bounds, &axes)?;
    let mut values = Vec::with_capacity(grid.num_nodes());
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .with_context(|| format!("bad value on line {}", i + 2))?;
        values.push(v);
    }
    Ok(Field::new(grid, values)?)
}

pub fn read_field(path: &Path) -> Result<Field> {
    let content =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_field(&content).with_context(|| format!("parsing {}", path.display()))
}

pub const MANIFEST_NAME: &str = "ensemble.manifest";

fn member_file_name(index: usize) -> String {
    format!("member_{index:04}.fld")
}

/// Write the ensemble directory: one field file per member plus the
/// manifest echoing size, grid, generator, and seed.
pub fn write_ensemble(dir: &Path, ens: &Ensemble, generator: &str, seed: u64) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut manifest = String::new();
    writeln!(manifest, "#ensemble-manifest v1").unwrap();
    writeln!(manifest, "members = {}", ens.size()).unwrap();
    writeln!(manifest, "generator = {generator}").unwrap();
    writeln!(manifest, "seed = {seed}").unwrap();
    writeln!(manifest, "grid = {}", grid_spec_string(ens.grid())).unwrap();
    for (i, member) in ens.members().iter().enumerate() {
        let name = member_file_name(i);
        write_field(&dir.join(&name), member)?;
        writeln!(manifest, "file = {name}").unwrap();
    }
    fs::write(dir.join(MANIFEST_NAME), manifest)
        .with_context(|| format!("writing manifest in {}", dir.display()))?;
    Ok(())
}

pub struct LoadedEnsemble {
    pub ensemble: Ensemble,
    pub generator: String,
    pub seed: Option<u64>,
}

/// Load an ensemble directory via its manifest.
pub fn read_ensemble(dir: &Path) -> Result<LoadedEnsemble> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let content = fs::read_to_string(&manifest_path)
        .with_context(|| format!("reading {}", manifest_path.display()))?;
    let mut lines = content.lines();
    let header = lines.next().unwrap_or_default();
    if header != "#ensemble-manifest v1" {
        bail!("unsupported manifest header `{header}`");
    }
    let mut members: Option<usize> = None;
    let mut generator = String::from("unknown");
    let mut seed = None;
    let mut grid_spec: Option<String> = None;
    let mut files: Vec<PathBuf> = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("malformed manifest line `{line}`"))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "members" => members = Some(value.parse().context("bad member count")?),
            "generator" => generator = value.to_string(),
            "seed" => seed = Some(value.parse().context("bad seed")?),
            "grid" => grid_spec = Some(value.to_string()),
            "file" => files.push(dir.join(value)),
            other => bail!("unknown manifest key `{other}`"),
        }
    }
    let members = members.ok_or_else(|| anyhow!("manifest missing member count"))?;
    if files.len() != members {
        bail!("manifest lists {} files but declares {} members", files.len(), members);
    }
    let expected_grid = grid_spec.map(|s| parse_grid_spec(&s)).transpose()?;
    let fields = files
        .iter()
        .map(|p| read_field(p))
        .collect::<Result<Vec<_>>>()?;
    if let Some(g) = &expected_grid {
        for f in &fields {
            if f.grid() != g {
                bail!("member grid does not match the manifest grid");
            }
        }
    }
    Ok(LoadedEnsemble { ensemble: Ensemble::new(fields)?, generator, seed })
}

/// Observation table: header `x1,...,xd,value`, one row per observation.
pub fn observations_to_string(obs: &ObservationSet) -> String {
    let d = obs.dim();
    let mut out = (1..=d).map(|k| format!("x{k}")).collect::<Vec<_>>().join(",");
    out.push_str(",value\n");
    for (p, v) in obs.locations().iter().zip(obs.values()) {
        let coords = p.coords.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
        writeln!(out, "{coords},{v}").unwrap();
    }
    out
}

pub fn write_observations(path: &Path, obs: &ObservationSet) -> Result<()> {
    fs::write(path, observations_to_string(obs))
        .with_context(|| format!("writing {}", path.display()))
}

pub fn parse_observations(content: &str) -> Result<ObservationSet> {
    let mut lines = content.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| anyhow!("empty observation file"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 2 || cols.last() != Some(&"value") {
        bail!("observation header must be x1,...,xd,value; got `{header}`");
    }
    let d = cols.len() - 1;
    for (k, col) in cols[..d].iter().enumerate() {
        let expected = format!("x{}", k + 1);
        if *col != expected {
            bail!("observation column {k} named `{col}`, expected `{expected}`");
        }
    }
    let mut locations = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != d + 1 {
            bail!("observation row {} has {} columns, expected {}", i + 2, fields.len(), d + 1);
        }
        let coords = fields[..d]
            .iter()
            .map(|s| s.parse::<f64>().with_context(|| format!("bad coordinate `{s}` on row {}", i + 2)))
            .collect::<Result<Vec<_>>>()?;
        locations.push(Point::new(coords));
        values.push(
            fields[d]
                .parse::<f64>()
                .with_context(|| format!("bad value `{}` on row {}", fields[d], i + 2))?,
        );
    }
    Ok(ObservationSet::new(locations, values)?)
}

pub fn read_observations(path: &Path) -> Result<ObservationSet> {
    let content =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_observations(&content).with_context(|| format!("parsing {}", path.display()))
}

/// Run configuration file (TOML). Unknown keys are rejected.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub learner: Option<String>,
    pub seed: u64,
    pub grid: Option<String>,
    pub ensemble_size: usize,
    pub initial_observations: usize,
    pub n_max: usize,
    pub optimizer_starts: usize,
    pub optimizer_max_iters: usize,
    pub optimizer_tol: f64,
    pub length_lower_factor: f64,
    pub length_upper_factor: f64,
    pub nugget_initial: f64,
    pub nugget_growth: f64,
    pub nugget_cap: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub rho_count: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            learner: None,
            seed: 0,
            grid: None,
            ensemble_size: 300,
            initial_observations: 8,
            n_max: 24,
            optimizer_starts: 10,
            optimizer_max_iters: 500,
            optimizer_tol: 1e-8,
            length_lower_factor: 1e-2,
            length_upper_factor: 1e2,
            nugget_initial: 1e-10,
            nugget_growth: 10.0,
            nugget_cap: 1e-4,
            rho_min: 0.0,
            rho_max: 2.0,
            rho_count: 41,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let content =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&content).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn optimizer(&self, seed: u64) -> cophik::kriging::OptimizerConfig {
        cophik::kriging::OptimizerConfig {
            length_bounds: None,
            lower_factor: self.length_lower_factor,
            upper_factor: self.length_upper_factor,
            starts: self.optimizer_starts,
            tol: self.optimizer_tol,
            max_iters: self.optimizer_max_iters,
            seed,
        }
    }

    pub fn nugget(&self) -> cophik::linalg::NuggetPolicy {
        cophik::linalg::NuggetPolicy {
            rel_initial: self.nugget_initial,
            growth: self.nugget_growth,
            rel_cap: self.nugget_cap,
        }
    }

    pub fn rho(&self) -> cophik::cophik::RhoSearchConfig {
        cophik::cophik::RhoSearchConfig {
            lo: self.rho_min,
            hi: self.rho_max,
            count: self.rho_count,
        }
    }
}

/// Trajectory table: one row per added observation.
pub fn trajectory_to_string(grid: &Grid, steps: &[StepRecord]) -> String {
    let d = grid.dim();
    let mut out = String::from("step");
    for k in 1..=d {
        write!(out, ",x{k}").unwrap();
    }
    out.push_str(",observed,max_mse,rel_error\n");
    for (i, s) in steps.iter().enumerate() {
        let p = grid.node_point(s.chosen_node);
        write!(out, "{}", i + 1).unwrap();
        for c in &p.coords {
            write!(out, ",{c}").unwrap();
        }
        writeln!(out, ",{},{},{}", s.observed_value, s.max_mse, s.rel_error).unwrap();
    }
    out
}

/// Flat key-value rendering of a bound report.
pub fn bound_report_to_string(report: &BoundReport) -> String {
    let mut out = String::new();
    writeln!(out, "operator = {}", report.operator).unwrap();
    writeln!(out, "lhs = {}", report.lhs).unwrap();
    writeln!(out, "rhs = {}", report.rhs).unwrap();
    writeln!(out, "pass = {}", report.pass).unwrap();
    writeln!(out, "eps_term = {}", report.eps_term).unwrap();
    writeln!(out, "mean_gap_term = {}", report.mean_gap_term).unwrap();
    writeln!(out, "spread_term = {}", report.spread_term).unwrap();
    writeln!(out, "operator_mean_term = {}", report.operator_mean_term).unwrap();
    writeln!(out, "kd_term = {}", report.kd_term).unwrap();
    writeln!(out, "epsilon = {}", report.epsilon).unwrap();
    writeln!(out, "epsilon_estimated = {}", report.epsilon_estimated).unwrap();
    if let Some(rho) = report.rho {
        writeln!(out, "rho = {rho}").unwrap();
        writeln!(out, "rho_above_one = {}", report.rho_above_one).unwrap();
    }
    out
}
