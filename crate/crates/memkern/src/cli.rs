//! Scenario runner: parse a TOML config, execute the requested routes,
//! emit trajectory CSVs, a comparison matrix and a run manifest.
//!
//! The pipeline contains no randomness, so identical configs produce
//! byte-identical outputs. The manifest embeds the full config text and its
//! SHA-256, and `run` accepts a manifest in place of a config, so any run
//! can be reproduced from its manifest alone.
//!
//! Exit codes: 0 all comparisons pass, 1 comparison failure, 2 config
//! error, 3 numerical failure in a route. The `MEMKERN_THREADS` environment
//! variable caps how many routes execute concurrently.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::models::{from_config, Scenario};
use crate::qmat::{hermiticity_deviation, CMat, TimeGrid};
use crate::verify::{compare_trajectories, run_route, ComparisonMatrix, Route, RouteTrajectory};

/// Complex matrix literal: rows of `[re, im]` pairs.
pub type MatrixLiteral = Vec<Vec<[f64; 2]>>;

/// The `[model]` section. `gamma` is filled in from the scenario level.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// "xx", "jaynes_cummings" or "custom".
    pub name: String,
    #[serde(skip)]
    pub gamma: f64,
    pub g: Option<f64>,
    pub delta: Option<f64>,
    pub n_trunc: Option<usize>,
    /// Explicit Hamiltonian for the "custom" model.
    pub h_sm: Option<MatrixLiteral>,
    /// Factor dimensions `[dim_s, dim_m]` for the "custom" model.
    pub factor_dims: Option<Vec<usize>>,
    pub eta_m: Option<StateConfig>,
    pub eta_bar_m: Option<StateConfig>,
    pub rho0: Option<StateConfig>,
}

/// A state literal: a named state, a diagonal, or a full matrix.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum StateConfig {
    Named(String),
    Diag { diag: Vec<f64> },
    Matrix { matrix: MatrixLiteral },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub tau: f64,
    pub t_max: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    /// Pairwise comparison tolerance (trace distance).
    pub comparison: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self { comparison: 1e-4 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaplaceConfig {
    /// Cap on inversion points (strided over the grid).
    pub max_points: usize,
    /// Talbot nodes per inversion.
    pub n_nodes: usize,
}

impl Default for LaplaceConfig {
    fn default() -> Self {
        Self {
            max_points: 16,
            n_nodes: 32,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableConfig {
    pub name: String,
    pub matrix: MatrixLiteral,
}

/// Top-level scenario configuration (TOML).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelConfig,
    pub gamma: f64,
    pub grid: GridConfig,
    pub routes: Vec<String>,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub observables: Vec<ObservableConfig>,
    #[serde(default)]
    pub laplace: LaplaceConfig,
}

/// One row of a trajectory file: the state flattened row-major into
/// (re, im) pairs, followed by observable expectations.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub time: f64,
    pub route: Route,
    pub state_entries: Vec<(f64, f64)>,
    pub observables: Vec<f64>,
}

/// Everything needed to execute a run, assembled from a parsed config.
pub struct PreparedRun {
    pub scenario: Scenario,
    pub routes: Vec<Route>,
    pub tolerance: f64,
    pub observables: Vec<(String, CMat)>,
    pub out_dir: PathBuf,
    pub config_text: String,
}

/// Parse a config (or a manifest embedding one) into a [`ScenarioConfig`].
pub fn parse_config_text(text: &str) -> Result<ScenarioConfig> {
    toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

fn load_config_text(path: &Path) -> Result<String> {
    let raw = std::fs::read_to_string(path)?;
    if raw.trim_start().starts_with('{') {
        // a manifest: re-run its embedded config
        let manifest: Manifest =
            serde_json::from_str(&raw).map_err(|e| Error::Parse(format!("manifest: {e}")))?;
        Ok(manifest.config_toml)
    } else {
        Ok(raw)
    }
}

/// Validate a parsed config into a runnable scenario.
pub fn prepare(config_text: String) -> Result<PreparedRun> {
    let cfg = parse_config_text(&config_text)?;
    if cfg.routes.is_empty() {
        return Err(Error::Parse("routes must be nonempty".into()));
    }
    let routes = cfg
        .routes
        .iter()
        .map(|r| Route::parse(r))
        .collect::<Result<Vec<_>>>()?;
    let mut model_cfg = cfg.model.clone();
    model_cfg.gamma = cfg.gamma;
    let model = from_config(&model_cfg)?;
    let grid = TimeGrid::from_t_max(cfg.grid.tau, cfg.grid.t_max)?;
    if !(cfg.tolerances.comparison > 0.0) {
        return Err(Error::Parse(format!(
            "tolerances.comparison = {} must be positive",
            cfg.tolerances.comparison
        )));
    }

    let mut observables = Vec::new();
    for obs in &cfg.observables {
        if obs.name.is_empty()
            || !obs
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_')
        {
            return Err(Error::Parse(format!(
                "observable name `{}` must be nonempty and [A-Za-z0-9_]",
                obs.name
            )));
        }
        let rows = obs.matrix.len();
        if rows != model.dim_s() || obs.matrix.iter().any(|r| r.len() != rows) {
            return Err(Error::Parse(format!(
                "observable `{}` must be a {ds}x{ds} matrix matching the system dimension",
                obs.name,
                ds = model.dim_s()
            )));
        }
        let m = CMat::from_fn(rows, rows, |i, j| {
            num_complex::Complex64::new(obs.matrix[i][j][0], obs.matrix[i][j][1])
        });
        if hermiticity_deviation(&m) > crate::qmat::TOL_HERM {
            return Err(Error::Parse(format!(
                "observable `{}` is not Hermitian",
                obs.name
            )));
        }
        observables.push((obs.name.clone(), m));
    }

    let mut scenario = Scenario::new(model, grid);
    scenario.laplace_max_points = cfg.laplace.max_points.max(1);
    scenario.talbot_nodes = cfg.laplace.n_nodes.max(4);

    Ok(PreparedRun {
        scenario,
        routes,
        tolerance: cfg.tolerances.comparison,
        observables,
        out_dir: cfg.outputs.dir,
        config_text,
    })
}

/// Execute the routes, bounded by `MEMKERN_THREADS` concurrent workers.
pub fn execute_routes(
    scenario: &Scenario,
    routes: &[Route],
) -> Vec<std::result::Result<RouteTrajectory, String>> {
    let cap = std::env::var("MEMKERN_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| routes.len().max(1));
    let mut results: Vec<Option<std::result::Result<RouteTrajectory, String>>> =
        routes.iter().map(|_| None).collect();
    let indices: Vec<usize> = (0..routes.len()).collect();
    for chunk in indices.chunks(cap) {
        std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&i| {
                    s.spawn(move || (i, run_route(scenario, routes[i]).map_err(|e| e.to_string())))
                })
                .collect();
            for h in handles {
                let (i, res) = h.join().expect("route worker panicked");
                results[i] = Some(res);
            }
        });
    }
    results.into_iter().map(|o| o.expect("all filled")).collect()
}

fn format_f64(x: f64) -> String {
    // shortest round-trip formatting; lossless on re-parse
    format!("{x}")
}

/// Write one trajectory file: header, then one row per grid time with the
/// state in row-major (re, im) pairs and one column per observable.
pub fn emit_csv(
    traj: &RouteTrajectory,
    grid: &TimeGrid,
    observables: &[(String, CMat)],
    path: &Path,
) -> Result<()> {
    let d = traj
        .states
        .first()
        .map(|s| s.dim())
        .ok_or_else(|| Error::Parse("empty trajectory".into()))?;
    let mut out = String::new();
    out.push_str("time,route");
    for i in 0..d {
        for j in 0..d {
            out.push_str(&format!(",rho_re_{i}_{j},rho_im_{i}_{j}"));
        }
    }
    for (name, _) in observables {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for record in trajectory_records(traj, grid, observables) {
        out.push_str(&format_f64(record.time));
        out.push(',');
        out.push_str(record.route.name());
        for (re, im) in &record.state_entries {
            out.push(',');
            out.push_str(&format_f64(*re));
            out.push(',');
            out.push_str(&format_f64(*im));
        }
        for v in &record.observables {
            out.push(',');
            out.push_str(&format_f64(*v));
        }
        out.push('\n');
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Flatten a trajectory into records (row-major state entries).
pub fn trajectory_records(
    traj: &RouteTrajectory,
    grid: &TimeGrid,
    observables: &[(String, CMat)],
) -> Vec<TrajectoryRecord> {
    traj.indices
        .iter()
        .zip(&traj.states)
        .map(|(&idx, state)| {
            let d = state.dim();
            let mut entries = Vec::with_capacity(d * d);
            for i in 0..d {
                for j in 0..d {
                    let z = state.mat()[(i, j)];
                    entries.push((z.re, z.im));
                }
            }
            let obs = observables
                .iter()
                .map(|(_, m)| state.expectation(m))
                .collect();
            TrajectoryRecord {
                time: grid.time(idx),
                route: traj.route,
                state_entries: entries,
                observables: obs,
            }
        })
        .collect()
}

fn emit_comparison_csv(matrix: &ComparisonMatrix, path: &Path) -> Result<()> {
    let mut out = String::from("route_a,route_b,points,max_distance,tolerance,status\n");
    for o in &matrix.outcomes {
        match &o.report {
            Ok(r) => {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.route_a,
                    r.route_b,
                    r.times.len(),
                    format_f64(r.max_distance),
                    format_f64(r.tolerance),
                    if r.pass { "pass" } else { "fail" }
                ));
            }
            Err(e) => {
                out.push_str(&format!(
                    "{},{},0,,,error: {}\n",
                    o.route_a,
                    o.route_b,
                    e.replace(',', ";").replace('\n', " ")
                ));
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestComparison {
    route_a: String,
    route_b: String,
    max_distance: Option<f64>,
    tolerance: f64,
    pass: bool,
    error: Option<String>,
}

/// The run manifest: embeds the config so the run is reproducible from the
/// manifest alone.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub config_toml: String,
    pub tolerance: f64,
    pub routes: Vec<String>,
    #[serde(default)]
    outputs: Vec<String>,
    #[serde(default)]
    comparisons: Vec<ManifestComparison>,
    pub exit_code: i32,
}

fn sha256_hex(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_manifest(
    prepared: &PreparedRun,
    matrix: &ComparisonMatrix,
    outputs: Vec<String>,
    exit_code: i32,
) -> Result<()> {
    let comparisons = matrix
        .outcomes
        .iter()
        .map(|o| match &o.report {
            Ok(r) => ManifestComparison {
                route_a: r.route_a.name().into(),
                route_b: r.route_b.name().into(),
                max_distance: Some(r.max_distance),
                tolerance: r.tolerance,
                pass: r.pass,
                error: None,
            },
            Err(e) => ManifestComparison {
                route_a: o.route_a.name().into(),
                route_b: o.route_b.name().into(),
                max_distance: None,
                tolerance: matrix.tolerance,
                pass: false,
                error: Some(e.clone()),
            },
        })
        .collect();
    let manifest = Manifest {
        config_sha256: sha256_hex(&prepared.config_text),
        config_toml: prepared.config_text.clone(),
        tolerance: prepared.tolerance,
        routes: prepared.routes.iter().map(|r| r.name().to_string()).collect(),
        outputs,
        comparisons,
        exit_code,
    };
    let json =
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(prepared.out_dir.join("manifest.json"), json + "\n")?;
    Ok(())
}

fn exit_code_for(matrix: &ComparisonMatrix) -> i32 {
    if matrix.any_route_failure() {
        3
    } else if !matrix.all_pass() {
        1
    } else {
        0
    }
}

fn run_inner(config_path: &Path, trajectories_too: bool) -> Result<i32> {
    let text = load_config_text(config_path)?;
    let prepared = prepare(text)?;
    std::fs::create_dir_all(&prepared.out_dir)?;

    let results = execute_routes(&prepared.scenario, &prepared.routes);
    let mut outputs = Vec::new();
    if trajectories_too {
        for (route, result) in prepared.routes.iter().zip(&results) {
            if let Ok(traj) = result {
                let name = format!("trajectory_{}.csv", route.name());
                emit_csv(
                    traj,
                    &prepared.scenario.grid,
                    &prepared.observables,
                    &prepared.out_dir.join(&name),
                )?;
                outputs.push(name);
            }
        }
    }
    let matrix = compare_trajectories(
        &prepared.scenario,
        &results,
        &prepared.routes,
        prepared.tolerance,
    );
    emit_comparison_csv(&matrix, &prepared.out_dir.join("comparison.csv"))?;
    outputs.push("comparison.csv".into());
    let code = exit_code_for(&matrix);
    write_manifest(&prepared, &matrix, outputs, code)?;

    for o in &matrix.outcomes {
        match &o.report {
            Ok(r) => eprintln!(
                "{} vs {}: max distance {:.3e} (tolerance {:.1e}) -> {}",
                r.route_a,
                r.route_b,
                r.max_distance,
                r.tolerance,
                if r.pass { "pass" } else { "FAIL" }
            ),
            Err(e) => eprintln!("{} vs {}: ERROR {e}", o.route_a, o.route_b),
        }
    }
    Ok(code)
}

fn config_stage_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::Parse(_) => 2,
        Error::InvalidState { .. }
        | Error::NotHermitian { .. }
        | Error::DimensionMismatch { .. }
        | Error::TruncationTooSmall { .. }
        | Error::InvalidFactorSet { .. } => 2,
        _ => 3,
    }
}

/// `run <config>`: execute every route, write trajectories, the comparison
/// matrix and the manifest. Exit 0 iff all comparisons pass.
pub fn run(config_path: &Path) -> i32 {
    match run_inner(config_path, true) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            config_stage_code(&e)
        }
    }
}

/// `compare <config>`: comparison matrix and manifest only.
pub fn compare(config_path: &Path) -> i32 {
    match run_inner(config_path, false) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            config_stage_code(&e)
        }
    }
}

/// `validate <config>`: schema and invariant checks, no execution.
pub fn validate(config_path: &Path) -> i32 {
    let staged = load_config_text(config_path).and_then(prepare);
    match staged {
        Ok(prepared) => {
            eprintln!(
                "config ok: model `{}` (dims {}x{}), {} steps of tau = {}, routes [{}]",
                prepared.scenario.model.name,
                prepared.scenario.model.dim_s(),
                prepared.scenario.model.dim_m(),
                prepared.scenario.grid.n_steps(),
                prepared.scenario.grid.tau(),
                prepared
                    .routes
                    .iter()
                    .map(|r| r.name())
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
