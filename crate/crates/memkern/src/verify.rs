//! CPTP certification via Choi matrices, trace-distance metrics, and the
//! cross-route comparison harness.
//!
//! Five ways of computing the same reduced dynamics live in this crate:
//! tracing the integrated bipartite equation, the discrete kernel recursion,
//! quadrature of the integro-differential form, the dynamical-map series,
//! the two collision models, and Talbot inversion of the Laplace solution.
//! [`compare_routes`] runs any subset on a shared grid and reports every
//! pairwise trace distance, so one broken route is immediately localizable.

use crate::collision::{simulate_bipartite_cm, simulate_chain, CollisionConfig};
use crate::error::{Error, Result};
use crate::kernel::{
    dynamical_map_series, series_trajectory, solve_quadrature, solve_recursion,
    suggested_series_order, tabulate_maps,
};
use crate::laplace::{laplace_solution, talbot_invert};
use crate::liouville::{build_bipartite_generator, integrate_bipartite, symmetrized, QuantumMap};
use crate::models::Scenario;
use crate::qmat::{
    cr, eig_hermitian_unchecked, hermitize, max_abs, partial_trace_with_tol, CMat, DensityMatrix,
    StateTol,
};

/// Choi matrix of a map on a d-dimensional system:
/// C = Σ_{ij} |i⟩⟨j| ⊗ map[|i⟩⟨j|], a d² x d² block matrix.
#[derive(Debug, Clone)]
pub struct ChoiMatrix {
    pub d: usize,
    pub mat: CMat,
}

impl ChoiMatrix {
    /// Smallest eigenvalue of the Hermitized Choi matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        let (eigs, _) = eig_hermitian_unchecked(&hermitize(&self.mat));
        eigs.first().copied().unwrap_or(0.0)
    }

    /// Max |C - C†| entry; nonzero only through numerical noise in the map.
    pub fn hermiticity_deviation(&self) -> f64 {
        crate::qmat::hermiticity_deviation(&self.mat)
    }

    /// Partial trace over the output (second) factor; equals the identity
    /// when the source map is trace-preserving.
    pub fn input_marginal(&self) -> CMat {
        let d = self.d;
        let mut out = CMat::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let mut acc = cr(0.0);
                for k in 0..d {
                    acc += self.mat[(i * d + k, j * d + k)];
                }
                out[(i, j)] = acc;
            }
        }
        out
    }
}

/// Assemble the Choi matrix of a map from its action on matrix units.
pub fn choi_of(map: &QuantumMap) -> ChoiMatrix {
    let d = map.dim();
    let mut mat = CMat::zeros(d * d, d * d);
    let mut unit = CMat::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            unit[(i, j)] = cr(1.0);
            let img = map.apply(&unit);
            for k in 0..d {
                for l in 0..d {
                    mat[(i * d + k, j * d + l)] = img[(k, l)];
                }
            }
            unit[(i, j)] = cr(0.0);
        }
    }
    ChoiMatrix { d, mat }
}

/// Outcome of a complete-positivity / trace-preservation check.
#[derive(Debug, Clone, Copy)]
pub struct CptpReport {
    pub cp: bool,
    pub tp: bool,
    pub min_choi_eigenvalue: f64,
    pub tp_residual: f64,
    pub tol: f64,
}

impl CptpReport {
    pub fn is_cptp(&self) -> bool {
        self.cp && self.tp
    }
}

/// CP iff the Choi matrix has min eigenvalue ≥ −tol; TP iff traces are
/// preserved on the matrix-unit basis within tol.
pub fn is_cptp(map: &QuantumMap, tol: f64) -> CptpReport {
    let choi = choi_of(map);
    let min_eig = choi.min_eigenvalue();
    let tp_residual = map.trace_preservation_residual();
    CptpReport {
        cp: min_eig >= -tol,
        tp: tp_residual <= tol,
        min_choi_eigenvalue: min_eig,
        tp_residual,
        tol,
    }
}

/// Kraus operators from the spectral decomposition of a PSD Choi matrix;
/// eigenvalues below 1e-12 are discarded.
pub fn kraus_from_choi(choi: &ChoiMatrix) -> Vec<CMat> {
    let d = choi.d;
    let (eigs, vecs) = eig_hermitian_unchecked(&hermitize(&choi.mat));
    let mut kraus = Vec::new();
    for (idx, &lam) in eigs.iter().enumerate() {
        if lam <= 1e-12 {
            continue;
        }
        let v = vecs.column(idx);
        let mut k = CMat::zeros(d, d);
        for i in 0..d {
            for out in 0..d {
                k[(out, i)] = v[i * d + out] * cr(lam.sqrt());
            }
        }
        kraus.push(k);
    }
    kraus
}

/// Trace distance ½|a − b|₁ via the eigenvalues of the Hermitian difference.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            context: format!("trace distance between dims {} and {}", a.dim(), b.dim()),
        });
    }
    Ok(trace_distance_mat(a.mat(), b.mat()))
}

pub(crate) fn trace_distance_mat(a: &CMat, b: &CMat) -> f64 {
    let diff = hermitize(&(a - b));
    let (eigs, _) = eig_hermitian_unchecked(&diff);
    0.5 * eigs.iter().map(|w| w.abs()).sum::<f64>()
}

/// The solution routes the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Route {
    /// Integrate the bipartite master equation, trace over M.
    TracedMe,
    /// Discrete kernel recursion (the reference solver).
    Recursion,
    /// Trapezoidal quadrature of the integro-differential equation.
    Quadrature,
    /// Dynamical-map series applied to the initial state.
    Series,
    /// Bipartite collision model, traced over M.
    BipartiteCm,
    /// Exact ancilla-chain collision model, traced over the chain.
    ChainCm,
    /// Talbot inversion of the Laplace-domain solution.
    Laplace,
}

impl Route {
    pub const ALL: [Route; 7] = [
        Route::TracedMe,
        Route::Recursion,
        Route::Quadrature,
        Route::Series,
        Route::BipartiteCm,
        Route::ChainCm,
        Route::Laplace,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Route::TracedMe => "traced_me",
            Route::Recursion => "recursion",
            Route::Quadrature => "quadrature",
            Route::Series => "series",
            Route::BipartiteCm => "bipartite_cm",
            Route::ChainCm => "chain_cm",
            Route::Laplace => "laplace",
        }
    }

    pub fn parse(name: &str) -> Result<Route> {
        Route::ALL
            .iter()
            .copied()
            .find(|r| r.name() == name)
            .ok_or_else(|| {
                Error::Parse(format!(
                    "unknown route `{name}`; known routes: {}",
                    Route::ALL.map(|r| r.name()).join(", ")
                ))
            })
    }
}

impl std::fmt::Display for Route {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// A reduced-state trajectory evaluated at a subset of the scenario grid.
#[derive(Debug, Clone)]
pub struct RouteTrajectory {
    pub route: Route,
    /// Grid indices at which `states` are defined (always sorted).
    pub indices: Vec<usize>,
    pub states: Vec<DensityMatrix>,
}

impl RouteTrajectory {
    pub fn state_at(&self, index: usize) -> Option<&DensityMatrix> {
        self.indices
            .iter()
            .position(|&i| i == index)
            .map(|k| &self.states[k])
    }
}

/// Run one route on a scenario.
pub fn run_route(scenario: &Scenario, route: Route) -> Result<RouteTrajectory> {
    let model = &scenario.model;
    let grid = &scenario.grid;
    let n = grid.n_steps();
    let all: Vec<usize> = (0..=n).collect();
    match route {
        Route::TracedMe => {
            let gen = build_bipartite_generator(&model.h_sm, model.gamma, &model.eta_m)?;
            let rho0_sm = model.rho0.product(&model.eta_bar_m);
            let traj = integrate_bipartite(&gen, &rho0_sm, grid)?;
            let tol = StateTol::relaxed_psd(1e-7);
            let states = traj
                .iter()
                .map(|s| partial_trace_with_tol(s, &[0], &tol))
                .collect::<Result<Vec<_>>>()?;
            Ok(RouteTrajectory {
                route,
                indices: all,
                states,
            })
        }
        Route::Recursion => {
            let table = tabulate_maps(&model.h_sm, &model.eta_m, &model.eta_bar_m, grid.tau(), n)?;
            let sol = solve_recursion(&table, &model.rho0, model.gamma)?;
            Ok(RouteTrajectory {
                route,
                indices: all,
                states: sol.states,
            })
        }
        Route::Quadrature => {
            let table = tabulate_maps(&model.h_sm, &model.eta_m, &model.eta_bar_m, grid.tau(), n)?;
            let sol = solve_quadrature(&table, &model.rho0, model.gamma)?;
            Ok(RouteTrajectory {
                route,
                indices: all,
                states: sol.states,
            })
        }
        Route::Series => {
            let table = tabulate_maps(&model.h_sm, &model.eta_m, &model.eta_bar_m, grid.tau(), n)?;
            let k_max = suggested_series_order(model.gamma * grid.t_max(), 1e-9);
            let series = dynamical_map_series(&table, model.gamma, k_max)?;
            let sol = series_trajectory(&series, &table, &model.rho0)?;
            Ok(RouteTrajectory {
                route,
                indices: all,
                states: sol.states,
            })
        }
        Route::BipartiteCm => {
            let config = CollisionConfig::with_gamma(
                grid.tau(),
                model.gamma,
                n,
                model.h_sm.clone(),
                model.eta_m.clone(),
                model.eta_bar_m.clone(),
            )?;
            let traj = simulate_bipartite_cm(&config, &model.rho0, &model.eta_bar_m, n)?;
            let tol = StateTol::relaxed_psd(1e-9);
            let states = traj
                .iter()
                .map(|s| partial_trace_with_tol(s, &[0], &tol))
                .collect::<Result<Vec<_>>>()?;
            Ok(RouteTrajectory {
                route,
                indices: all,
                states,
            })
        }
        Route::ChainCm => {
            let config = CollisionConfig::with_gamma(
                grid.tau(),
                model.gamma,
                n,
                model.h_sm.clone(),
                model.eta_m.clone(),
                model.eta_bar_m.clone(),
            )?;
            let traj = simulate_chain(&config, &model.rho0, n)?;
            let states = traj
                .iter()
                .map(|c| c.reduced())
                .collect::<Result<Vec<_>>>()?;
            Ok(RouteTrajectory {
                route,
                indices: all,
                states,
            })
        }
        Route::Laplace => {
            // Inversion at t = 0 is excluded; each remaining point costs a
            // full contour of resolvent solves, so evaluate on a stride.
            let max_points = scenario.laplace_max_points.max(1);
            let stride = (n + max_points - 1) / max_points;
            let mut indices = vec![0usize];
            let mut states = vec![model.rho0.clone()];
            let tol = StateTol {
                herm: 1e-9,
                trace: 1e-8,
                psd: 1e-7,
            };
            let mut j = stride;
            while j <= n {
                let t = grid.time(j);
                let inverted = talbot_invert(
                    |s| {
                        laplace_solution(
                            &model.h_sm,
                            &model.eta_m,
                            &model.eta_bar_m,
                            model.gamma,
                            &model.rho0,
                            s,
                        )
                        .map(|p| p.rho_tilde)
                    },
                    t,
                    scenario.talbot_nodes,
                )?;
                let state =
                    DensityMatrix::with_tol(symmetrized(&inverted), vec![model.rho0.dim()], &tol)
                        .map_err(|e| Error::StateInvariantViolated {
                            step: j,
                            reason: format!("laplace: {e}"),
                        })?;
                indices.push(j);
                states.push(state);
                j += stride;
            }
            Ok(RouteTrajectory {
                route,
                indices,
                states,
            })
        }
    }
}

/// Pairwise trace-distance report for two routes on their shared grid times.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub route_a: Route,
    pub route_b: Route,
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    pub max_distance: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// One cell of the comparison matrix; route failures are recorded, never
/// propagated across cells.
#[derive(Debug, Clone)]
pub struct PairOutcome {
    pub route_a: Route,
    pub route_b: Route,
    pub report: std::result::Result<ComparisonReport, String>,
}

/// All pairwise comparisons for one scenario.
#[derive(Debug, Clone)]
pub struct ComparisonMatrix {
    pub tolerance: f64,
    pub outcomes: Vec<PairOutcome>,
}

impl ComparisonMatrix {
    pub fn all_pass(&self) -> bool {
        self.outcomes
            .iter()
            .all(|o| matches!(&o.report, Ok(r) if r.pass))
    }

    pub fn any_route_failure(&self) -> bool {
        self.outcomes.iter().any(|o| o.report.is_err())
    }
}

/// Compare precomputed trajectories pairwise on their common grid indices.
pub fn compare_trajectories(
    scenario: &Scenario,
    trajectories: &[std::result::Result<RouteTrajectory, String>],
    routes: &[Route],
    tolerance: f64,
) -> ComparisonMatrix {
    let mut outcomes = Vec::new();
    for i in 0..routes.len() {
        for j in (i + 1)..routes.len() {
            let report = match (&trajectories[i], &trajectories[j]) {
                (Ok(a), Ok(b)) => {
                    let mut times = Vec::new();
                    let mut distances = Vec::new();
                    let mut max_distance = 0.0f64;
                    let mut fail: Option<String> = None;
                    for (pos, &idx) in a.indices.iter().enumerate() {
                        if let Some(sb) = b.state_at(idx) {
                            match trace_distance(&a.states[pos], sb) {
                                Ok(d) => {
                                    times.push(scenario.grid.time(idx));
                                    distances.push(d);
                                    max_distance = max_distance.max(d);
                                }
                                Err(e) => {
                                    fail = Some(e.to_string());
                                    break;
                                }
                            }
                        }
                    }
                    match fail {
                        Some(msg) => Err(msg),
                        None => Ok(ComparisonReport {
                            route_a: routes[i],
                            route_b: routes[j],
                            times,
                            distances,
                            max_distance,
                            tolerance,
                            pass: max_distance <= tolerance,
                        }),
                    }
                }
                (Err(e), _) => Err(format!("{} failed: {e}", routes[i])),
                (_, Err(e)) => Err(format!("{} failed: {e}", routes[j])),
            };
            outcomes.push(PairOutcome {
                route_a: routes[i],
                route_b: routes[j],
                report,
            });
        }
    }
    ComparisonMatrix {
        tolerance,
        outcomes,
    }
}

/// Run every requested route and compare all pairs at the given tolerance.
pub fn compare_routes(
    scenario: &Scenario,
    routes: &[Route],
    tolerance: f64,
) -> ComparisonMatrix {
    let trajectories: Vec<std::result::Result<RouteTrajectory, String>> = routes
        .iter()
        .map(|&r| run_route(scenario, r).map_err(|e| e.to_string()))
        .collect();
    compare_trajectories(scenario, &trajectories, routes, tolerance)
}

/// Reconstruct a map from Kraus operators (test oracle for the
/// Choi ⇔ Kraus equivalence).
pub fn map_from_kraus(d: usize, kraus: &[CMat]) -> QuantumMap {
    crate::liouville::vectorize_map(d, |x| {
        let mut acc = CMat::zeros(d, d);
        for k in kraus {
            acc += k * x * k.adjoint();
        }
        acc
    })
}

/// Max deviation from the identity of the Choi input marginal, the
/// trace-preservation certificate at the Choi level.
pub fn choi_tp_residual(choi: &ChoiMatrix) -> f64 {
    max_abs(&(choi.input_marginal() - crate::qmat::identity(choi.d)))
}
