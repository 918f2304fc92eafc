//! The closed memory-kernel master equation and its solvers.
//!
//! Tracing the bipartite dynamics over M leaves a closed integro-differential
//! equation for the reduced state,
//!
//! dρ/dt = Γ ∫₀ᵗ dt' e^{−Γt'} 𝓔(t')[dρ(t−t')/dt] + e^{−Γt} Φ̇(t)[ρ₀]
//!         + Γ e^{−Γt} (𝓔(t) − Φ(t))[ρ₀],
//!
//! built from the two unitary-dilation maps
//!
//! 𝓔(t)[ρ] = Tr_M{ e^{−iH_SM t} (ρ ⊗ η_M)  e^{iH_SM t} },
//! Φ(t)[ρ] = Tr_M{ e^{−iH_SM t} (ρ ⊗ η̄_M) e^{iH_SM t} }.
//!
//! Three independent solvers are provided:
//!
//! * [`solve_recursion`] — the discrete recursion
//!   ρ_n = q Σ_{j=1}^{n−1} p^{j−1} 𝓔_j[ρ_{n−j}] + p^{n−1} Φ_n[ρ₀] with
//!   p = e^{−Γτ}, exact at the discrete level (the reference solver);
//! * [`solve_quadrature`] — trapezoidal discretization of the
//!   integro-differential equation itself, implicit at the t' = 0 endpoint;
//! * [`dynamical_map_series`] — the damped convolution series for the full
//!   dynamical map Λ(t), a positively weighted combination of completely
//!   positive terms.

use crate::error::{Error, Result};
use crate::liouville::{unvec, vec_mat, QuantumMap};
use crate::qmat::{
    cr, eig_hermitian_unchecked, kron, partial_trace_mat, unitary_from_eig, CMat, CVec,
    DensityMatrix, HermitianOperator, StateTol, TimeGrid,
};

/// Which solver produced a [`KernelSolution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverId {
    Recursion,
    Quadrature,
    Series,
    Laplace,
}

impl std::fmt::Display for SolverId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolverId::Recursion => "recursion",
            SolverId::Quadrature => "quadrature",
            SolverId::Series => "series",
            SolverId::Laplace => "laplace",
        };
        write!(f, "{s}")
    }
}

/// The maps 𝓔(jτ), Φ(jτ) tabulated on a uniform grid; the kernel data for
/// every time-domain solver.
#[derive(Debug, Clone)]
pub struct MapTable {
    grid: TimeGrid,
    dim_s: usize,
    e_maps: Vec<QuantumMap>,
    phi_maps: Vec<QuantumMap>,
}

impl MapTable {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn tau(&self) -> f64 {
        self.grid.tau()
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }

    pub fn dim_s(&self) -> usize {
        self.dim_s
    }

    pub fn e_map(&self, j: usize) -> &QuantumMap {
        &self.e_maps[j]
    }

    pub fn phi_map(&self, j: usize) -> &QuantumMap {
        &self.phi_maps[j]
    }

    pub fn e_maps(&self) -> &[QuantumMap] {
        &self.e_maps
    }

    pub fn phi_maps(&self) -> &[QuantumMap] {
        &self.phi_maps
    }

    /// Max trace-preservation residual across all tabulated maps.
    pub fn trace_preservation_residual(&self) -> f64 {
        self.e_maps
            .iter()
            .chain(self.phi_maps.iter())
            .map(|m| m.trace_preservation_residual())
            .fold(0.0, f64::max)
    }
}

/// Tabulate 𝓔(jτ) and Φ(jτ) for j = 0..=n, exactly, via one Hermitian
/// eigendecomposition of H_SM.
pub fn tabulate_maps(
    h_sm: &HermitianOperator,
    eta_m: &DensityMatrix,
    eta_bar_m: &DensityMatrix,
    tau: f64,
    n: usize,
) -> Result<MapTable> {
    let dims = h_sm.factor_dims();
    if dims.len() != 2 {
        return Err(Error::DimensionMismatch {
            context: format!("tabulation needs an S⊗M factor structure, got {dims:?}"),
        });
    }
    let (ds, dm) = (dims[0], dims[1]);
    if eta_m.dim() != dm || eta_bar_m.dim() != dm {
        return Err(Error::DimensionMismatch {
            context: format!(
                "memory states have dims {} and {}, factor M has dim {}",
                eta_m.dim(),
                eta_bar_m.dim(),
                dm
            ),
        });
    }
    let grid = TimeGrid::new(tau, n)?;
    let (eigs, vecs) = eig_hermitian_unchecked(h_sm.mat());
    let mut e_maps = Vec::with_capacity(n + 1);
    let mut phi_maps = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let u = unitary_from_eig(&eigs, &vecs, grid.time(j));
        let u_dag = u.adjoint();
        let build = |state: &DensityMatrix| -> Result<QuantumMap> {
            let mut smat = CMat::zeros(ds * ds, ds * ds);
            let mut unit = CMat::zeros(ds, ds);
            for col in 0..ds {
                for row in 0..ds {
                    unit[(row, col)] = cr(1.0);
                    let joint = kron(&unit, state.mat());
                    let evolved = &u * joint * &u_dag;
                    let reduced = partial_trace_mat(&evolved, dims, &[0])?;
                    smat.set_column(col * ds + row, &vec_mat(&reduced));
                    unit[(row, col)] = cr(0.0);
                }
            }
            QuantumMap::from_smat(ds, smat)
        };
        e_maps.push(build(eta_m)?);
        phi_maps.push(build(eta_bar_m)?);
    }
    Ok(MapTable {
        grid,
        dim_s: ds,
        e_maps,
        phi_maps,
    })
}

/// A reduced-state trajectory on a uniform grid, tagged with the solver that
/// produced it. Unit trace is enforced within 1e-9 and positivity within a
/// 1e-7 floor at every grid point.
#[derive(Debug, Clone)]
pub struct KernelSolution {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub solver: SolverId,
}

fn kernel_state_tol() -> StateTol {
    StateTol {
        herm: 1e-11,
        trace: 1e-9,
        psd: 1e-7,
    }
}

fn validated_solution(
    times: Vec<f64>,
    raw: Vec<CVec>,
    dim_s: usize,
    solver: SolverId,
) -> Result<KernelSolution> {
    let tol = kernel_state_tol();
    let mut states = Vec::with_capacity(raw.len());
    for (step, v) in raw.into_iter().enumerate() {
        let state = DensityMatrix::with_tol(unvec(&v, dim_s), vec![dim_s], &tol).map_err(|e| {
            Error::StateInvariantViolated {
                step,
                reason: format!("{solver}: {e}"),
            }
        })?;
        states.push(state);
    }
    Ok(KernelSolution {
        times,
        states,
        solver,
    })
}

/// Discrete recursion with memory weight p = e^{−Γτ}:
/// ρ_n = q Σ_{j=1}^{n−1} p^{j−1} 𝓔_j[ρ_{n−j}] + p^{n−1} Φ_n[ρ₀], q = 1 − p.
///
/// Exact in finite arithmetic at the discrete level; designated the
/// reference solver.
pub fn solve_recursion(
    table: &MapTable,
    rho0: &DensityMatrix,
    gamma: f64,
) -> Result<KernelSolution> {
    if gamma < 0.0 {
        return Err(Error::InvalidState {
            field: None,
            reason: format!("gamma = {gamma} must be nonnegative"),
        });
    }
    solve_recursion_with_p(table, rho0, (-gamma * table.tau()).exp())
}

/// Same recursion parameterized by the memory weight p directly; p = 0 is
/// the Markovian limit (unreachable through a finite Γ).
pub fn solve_recursion_with_p(
    table: &MapTable,
    rho0: &DensityMatrix,
    p: f64,
) -> Result<KernelSolution> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidState {
            field: None,
            reason: format!("memory weight p = {p} outside [0, 1]"),
        });
    }
    check_state_dim(table, rho0)?;
    let n = table.n_steps();
    let q = 1.0 - p;
    let mut hist: Vec<CVec> = Vec::with_capacity(n + 1);
    hist.push(vec_mat(rho0.mat()));
    // powers of p, p^[k] = p^k
    let mut p_pow = Vec::with_capacity(n);
    p_pow.push(1.0f64);
    for k in 1..=n {
        p_pow.push(p_pow[k - 1] * p);
    }
    for k in 1..=n {
        let mut acc = table.phi_map(k).apply_vec(&hist[0]).map(|z| z * p_pow[k - 1]);
        for j in 1..k {
            let term = table.e_map(j).apply_vec(&hist[k - j]);
            acc += term.map(|z| z * (q * p_pow[j - 1]));
        }
        hist.push(acc);
    }
    validated_solution(table.grid().times(), hist, table.dim_s(), SolverId::Recursion)
}

/// Trapezoidal discretization of the integro-differential form.
///
/// The kernel integral contains the unknown derivative at t' = 0 with weight
/// Γτ/2 · 𝓔(0); that endpoint is treated implicitly (a small linear solve
/// per run), all other nodes come from the derivative history. Φ̇ is taken
/// by centered differences on the table, one-sided at the ends.
pub fn solve_quadrature(
    table: &MapTable,
    rho0: &DensityMatrix,
    gamma: f64,
) -> Result<KernelSolution> {
    if gamma < 0.0 {
        return Err(Error::InvalidState {
            field: None,
            reason: format!("gamma = {gamma} must be nonnegative"),
        });
    }
    check_state_dim(table, rho0)?;
    let n = table.n_steps();
    if n < 2 {
        return Err(Error::DimensionMismatch {
            context: "quadrature solver needs at least two steps for differences".into(),
        });
    }
    let tau = table.tau();
    let ds = table.dim_s();
    let d2 = ds * ds;
    let v0 = vec_mat(rho0.mat());

    // phi-dot columns applied to rho0, second order at both ends
    let phidot = |j: usize| -> CVec {
        if j == 0 {
            (table.phi_map(0).smat().scale(-3.0)
                + table.phi_map(1).smat().scale(4.0)
                - table.phi_map(2).smat())
            .scale(1.0 / (2.0 * tau))
                * &v0
        } else if j == n {
            (table.phi_map(n).smat().scale(3.0) - table.phi_map(n - 1).smat().scale(4.0)
                + table.phi_map(n - 2).smat())
            .scale(1.0 / (2.0 * tau))
                * &v0
        } else {
            (table.phi_map(j + 1).smat() - table.phi_map(j - 1).smat()).scale(1.0 / (2.0 * tau))
                * &v0
        }
    };

    // implicit endpoint: (I - (Gamma tau / 2) E(0)) rdot_n = rhs
    let weight = gamma * tau / 2.0;
    let a = crate::qmat::identity(d2) - table.e_map(0).smat().scale(weight);
    let lu = a.lu();
    let decay: Vec<f64> = (0..=n).map(|j| (-gamma * tau * j as f64).exp()).collect();

    let mut rdot: Vec<CVec> = Vec::with_capacity(n + 1);
    rdot.push(phidot(0)); // E(0) = Phi(0), the inhomogeneous difference vanishes at t = 0
    for k in 1..=n {
        let mut rhs = phidot(k).map(|z| z * decay[k]);
        let inhom = table.e_map(k).apply_vec(&v0) - table.phi_map(k).apply_vec(&v0);
        rhs += inhom.map(|z| z * (gamma * decay[k]));
        let mut conv = table.e_map(k).apply_vec(&rdot[0]).map(|z| z * (0.5 * decay[k]));
        for j in 1..k {
            conv += table.e_map(j).apply_vec(&rdot[k - j]).map(|z| z * decay[j]);
        }
        rhs += conv.map(|z| z * (gamma * tau));
        let solved = lu.solve(&rhs).ok_or(Error::SingularImplicitStep { weight })?;
        rdot.push(solved);
    }

    // integrate the derivative history with the trapezoid rule
    let mut states = Vec::with_capacity(n + 1);
    let mut acc = v0.clone();
    states.push(acc.clone());
    for k in 1..=n {
        acc += (&rdot[k - 1] + &rdot[k]).map(|z| z * (tau / 2.0));
        states.push(acc.clone());
    }
    validated_solution(table.grid().times(), states, ds, SolverId::Quadrature)
}

/// The dynamical map series and its truncation diagnostic.
#[derive(Debug, Clone)]
pub struct SeriesMaps {
    /// Λ(jτ) for j = 0..=n.
    pub maps: Vec<QuantumMap>,
    /// Superoperator norm of the k = k_max addend at each grid time.
    pub last_term_norms: Vec<f64>,
    pub k_max: usize,
}

/// Truncated series for the dynamical map,
///
/// Λ(t) ≈ Σ_{k=1}^{k_max} Γ^{k−1} e^{−Γt} (𝓔^{*(k−1)} * Φ)(t),
///
/// where `*` is time convolution, evaluated by iterated trapezoidal
/// convolution of the tabulated superoperators. Every quadrature weight is
/// positive, so each addend is a completely positive map scaled by a
/// positive number: truncation and quadrature error show up only in the
/// trace, never as negativity.
///
/// Errors with [`Error::TruncationNotConverged`] if the last addend exceeds
/// 1e-6 · |Λ| in Frobenius norm anywhere on the grid.
pub fn dynamical_map_series(
    table: &MapTable,
    gamma: f64,
    k_max: usize,
) -> Result<SeriesMaps> {
    if k_max < 1 {
        return Err(Error::InvalidState {
            field: None,
            reason: "k_max must be at least 1".into(),
        });
    }
    if gamma < 0.0 {
        return Err(Error::InvalidState {
            field: None,
            reason: format!("gamma = {gamma} must be nonnegative"),
        });
    }
    let n = table.n_steps();
    let tau = table.tau();
    let d2 = table.dim_s().pow(2);
    let decay: Vec<f64> = (0..=n).map(|j| (-gamma * tau * j as f64).exp()).collect();

    // conv[j] = C_k(j tau); level k = 1 is Phi itself
    let mut conv: Vec<CMat> = (0..=n).map(|j| table.phi_map(j).smat().clone()).collect();
    let mut lambda: Vec<CMat> = (0..=n).map(|j| conv[j].scale(decay[j])).collect();
    let mut last_norms: Vec<f64> = conv
        .iter()
        .zip(&decay)
        .map(|(c, &d)| c.scale(d).norm())
        .collect();

    let mut gamma_pow = 1.0f64;
    for _k in 2..=k_max {
        gamma_pow *= gamma;
        if gamma_pow == 0.0 {
            // Gamma = 0: only the k = 1 term survives
            for ln in last_norms.iter_mut() {
                *ln = 0.0;
            }
            break;
        }
        let mut next: Vec<CMat> = Vec::with_capacity(n + 1);
        next.push(CMat::zeros(d2, d2));
        let mut buf = CMat::zeros(d2, d2);
        for m in 1..=n {
            let mut acc = CMat::zeros(d2, d2);
            // trapezoid: half weights at j = 0 and j = m
            acc.gemm(cr(0.5), table.e_map(m).smat(), &conv[0], cr(0.0));
            for j in 1..m {
                buf.gemm(cr(1.0), table.e_map(m - j).smat(), &conv[j], cr(0.0));
                acc += &buf;
            }
            buf.gemm(cr(0.5), table.e_map(0).smat(), &conv[m], cr(0.0));
            acc += &buf;
            next.push(acc.scale(tau));
        }
        conv = next;
        for j in 0..=n {
            let addend = conv[j].scale(gamma_pow * decay[j]);
            last_norms[j] = addend.norm();
            lambda[j] += addend;
        }
    }

    // Truncation diagnostic. k_max = 1 is the explicitly requested leading
    // term e^{-Gamma t} Phi(t) and is exempt; from two terms on, the last
    // addend must be negligible against the sum.
    if k_max >= 2 {
        for j in 0..=n {
            let bound = 1e-6 * lambda[j].norm();
            if last_norms[j] > bound {
                return Err(Error::TruncationNotConverged {
                    index: j,
                    last: last_norms[j],
                    bound,
                });
            }
        }
    }

    let maps = lambda
        .into_iter()
        .map(|smat| QuantumMap::from_smat(table.dim_s(), smat))
        .collect::<Result<Vec<_>>>()?;
    Ok(SeriesMaps {
        maps,
        last_term_norms: last_norms,
        k_max,
    })
}

/// Smallest k_max whose Poisson tail Σ_{k>K} (Γt)^{k−1} e^{−Γt}/(k−1)! stays
/// below `rel_tol` over the grid horizon; the trace deficit of the truncated
/// series equals that tail.
pub fn suggested_series_order(gamma_t_max: f64, rel_tol: f64) -> usize {
    if gamma_t_max <= 0.0 {
        return 1;
    }
    let x = gamma_t_max;
    let mut term = (-x).exp(); // k = 1 addend weight
    let mut cumulative = term;
    let mut k = 1usize;
    while 1.0 - cumulative > rel_tol && k < 200 {
        k += 1;
        term *= x / (k - 1) as f64;
        cumulative += term;
    }
    k
}

/// Apply the series maps to an initial state, producing a validated
/// trajectory.
///
/// The series' trace deficit is its truncation-plus-quadrature error, so
/// the trace tolerance here matches the 1e-6 truncation diagnostic rather
/// than the exact solvers' 1e-9.
pub fn series_trajectory(
    series: &SeriesMaps,
    table: &MapTable,
    rho0: &DensityMatrix,
) -> Result<KernelSolution> {
    check_state_dim(table, rho0)?;
    let v0 = vec_mat(rho0.mat());
    let raw: Vec<CVec> = series.maps.iter().map(|m| m.apply_vec(&v0)).collect();
    let tol = StateTol {
        herm: 1e-11,
        trace: 1e-6,
        psd: 1e-7,
    };
    let mut states = Vec::with_capacity(raw.len());
    for (step, v) in raw.into_iter().enumerate() {
        let state = DensityMatrix::with_tol(unvec(&v, table.dim_s()), vec![table.dim_s()], &tol)
            .map_err(|e| Error::StateInvariantViolated {
                step,
                reason: format!("series: {e}"),
            })?;
        states.push(state);
    }
    Ok(KernelSolution {
        times: table.grid().times(),
        states,
        solver: SolverId::Series,
    })
}

fn check_state_dim(table: &MapTable, rho0: &DensityMatrix) -> Result<()> {
    if rho0.dim() != table.dim_s() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "initial state dim {} vs tabulated S dim {}",
                rho0.dim(),
                table.dim_s()
            ),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmat::{identity, kron, max_abs, pauli_x, pauli_y};
    use crate::testutil::rng;
    use crate::verify::trace_distance;

    fn xx_hamiltonian(g: f64) -> HermitianOperator {
        let h = (kron(&pauli_x(), &pauli_x()) + kron(&pauli_y(), &pauli_y())).scale(g / 2.0);
        HermitianOperator::new(h, vec![2, 2]).unwrap()
    }

    fn ground() -> DensityMatrix {
        DensityMatrix::basis_state(2, 0).unwrap()
    }

    fn excited() -> DensityMatrix {
        DensityMatrix::basis_state(2, 1).unwrap()
    }

    #[test]
    fn tabulated_maps_start_at_identity() {
        let table = tabulate_maps(&xx_hamiltonian(1.0), &ground(), &ground(), 0.1, 5).unwrap();
        assert!(max_abs(&(table.e_map(0).smat() - identity(4))) < 1e-13);
        assert!(max_abs(&(table.phi_map(0).smat() - identity(4))) < 1e-13);
    }

    #[test]
    fn tabulated_maps_free_hamiltonian() {
        let h = HermitianOperator::zero(vec![2, 2]);
        let table = tabulate_maps(&h, &ground(), &ground(), 0.1, 8).unwrap();
        for j in 0..=8 {
            assert!(max_abs(&(table.e_map(j).smat() - identity(4))) < 1e-14);
        }
    }

    #[test]
    fn equal_memory_states_make_equal_maps() {
        let eta = DensityMatrix::from_diag(&[0.65, 0.35]).unwrap();
        let table = tabulate_maps(&xx_hamiltonian(0.9), &eta, &eta, 0.05, 10).unwrap();
        for j in 0..=10 {
            assert!(max_abs(&(table.e_map(j).smat() - table.phi_map(j).smat())) < 1e-13);
        }
    }

    #[test]
    fn tabulated_maps_preserve_trace() {
        let table =
            tabulate_maps(&xx_hamiltonian(1.0), &ground(), &DensityMatrix::maximally_mixed(2), 0.02, 50)
                .unwrap();
        assert!(table.trace_preservation_residual() < 1e-11);
    }

    #[test]
    fn recursion_first_step_is_phi() {
        let table = tabulate_maps(&xx_hamiltonian(1.0), &ground(), &ground(), 0.3, 1).unwrap();
        let sol = solve_recursion(&table, &excited(), 1.0).unwrap();
        let expect = table.phi_map(1).apply(excited().mat());
        assert!(max_abs(&(sol.states[1].mat() - expect)) < 1e-14);
    }

    #[test]
    fn recursion_second_step_two_branches() {
        let gamma = 0.8;
        let tau = 0.25;
        let table = tabulate_maps(&xx_hamiltonian(1.0), &ground(), &ground(), tau, 2).unwrap();
        let sol = solve_recursion(&table, &excited(), gamma).unwrap();
        let p = (-gamma * tau).exp();
        let q = 1.0 - p;
        let expect = table.e_map(1).apply(sol.states[1].mat()).scale(q)
            + table.phi_map(2).apply(excited().mat()).scale(p);
        assert!(max_abs(&(sol.states[2].mat() - expect)) < 1e-14);
    }

    #[test]
    fn recursion_gamma_zero_follows_phi() {
        let table = tabulate_maps(
            &xx_hamiltonian(1.0),
            &ground(),
            &DensityMatrix::maximally_mixed(2),
            0.05,
            40,
        )
        .unwrap();
        let sol = solve_recursion(&table, &excited(), 0.0).unwrap();
        for j in 0..=40 {
            let expect = table.phi_map(j).apply(excited().mat());
            assert!(max_abs(&(sol.states[j].mat() - expect)) < 1e-13);
        }
    }

    #[test]
    fn recursion_markovian_limit_is_semigroup() {
        // p = 0 with eta_bar = eta: rho_n = E_tau^n[rho0] exactly
        let eta = DensityMatrix::from_diag(&[0.7, 0.3]).unwrap();
        let table = tabulate_maps(&xx_hamiltonian(1.0), &eta, &eta, 0.2, 12).unwrap();
        let sol = solve_recursion_with_p(&table, &excited(), 0.0).unwrap();
        let e1 = table.e_map(1);
        let mut acc = vec_mat(excited().mat());
        for j in 1..=12 {
            acc = e1.apply_vec(&acc);
            assert!((&acc - vec_mat(sol.states[j].mat())).norm() < 1e-12);
        }
    }

    #[test]
    fn quadrature_gamma_zero_tracks_phi() {
        let table = tabulate_maps(
            &xx_hamiltonian(1.0),
            &ground(),
            &DensityMatrix::maximally_mixed(2),
            1e-3,
            500,
        )
        .unwrap();
        let sol = solve_quadrature(&table, &excited(), 0.0).unwrap();
        let mut worst = 0.0f64;
        for j in 0..=500 {
            let expect = table.phi_map(j).apply(excited().mat());
            worst = worst.max(max_abs(&(sol.states[j].mat() - expect)));
        }
        // O(tau^2) agreement
        assert!(worst < 5e-6, "worst deviation {worst:.3e}");
    }

    #[test]
    fn quadrature_agrees_with_recursion_on_xx() {
        let table = tabulate_maps(&xx_hamiltonian(1.0), &ground(), &ground(), 1e-3, 2000).unwrap();
        let rec = solve_recursion(&table, &excited(), 1.0).unwrap();
        let quad = solve_quadrature(&table, &excited(), 1.0).unwrap();
        let mut worst = 0.0f64;
        for j in 0..=2000 {
            worst = worst.max(trace_distance(&rec.states[j], &quad.states[j]).unwrap());
        }
        assert!(worst <= 5e-3, "max trace distance {worst:.3e}");
    }

    #[test]
    fn quadrature_preserves_trace() {
        let table = tabulate_maps(
            &xx_hamiltonian(1.0),
            &ground(),
            &DensityMatrix::maximally_mixed(2),
            2e-3,
            500,
        )
        .unwrap();
        let sol = solve_quadrature(&table, &excited(), 1.3).unwrap();
        for s in &sol.states {
            assert!((s.mat().trace() - cr(1.0)).norm() < 1e-8);
        }
    }

    #[test]
    fn series_leading_term_is_damped_phi() {
        // k_max = 1 is exactly e^{-Gamma t} Phi(t)
        let gamma = 0.9;
        let tau = 0.05;
        let table = tabulate_maps(&xx_hamiltonian(1.0), &ground(), &ground(), tau, 10).unwrap();
        let series = dynamical_map_series(&table, gamma, 1).unwrap();
        for j in 0..=10 {
            let expect = table.phi_map(j).smat().scale((-gamma * tau * j as f64).exp());
            assert!(max_abs(&(series.maps[j].smat() - expect)) < 1e-14);
        }
    }

    #[test]
    fn series_gamma_zero_is_phi() {
        let table = tabulate_maps(&xx_hamiltonian(1.0), &ground(), &ground(), 0.05, 10).unwrap();
        let series = dynamical_map_series(&table, 0.0, 5).unwrap();
        for j in 0..=10 {
            assert!(max_abs(&(series.maps[j].smat() - table.phi_map(j).smat())) < 1e-14);
        }
    }

    #[test]
    fn series_matches_recursion_within_tolerance() {
        // Gamma t <= 3 on the XX model, k_max from the tail rule
        let gamma = 1.0;
        let tau = 2e-3;
        let n = 1500;
        let table = tabulate_maps(&xx_hamiltonian(1.0), &ground(), &ground(), tau, n).unwrap();
        let k_max = suggested_series_order(gamma * tau * n as f64, 1e-9);
        let series = dynamical_map_series(&table, gamma, k_max).unwrap();
        let traj = series_trajectory(&series, &table, &excited()).unwrap();
        let rec = solve_recursion(&table, &excited(), gamma).unwrap();
        let mut worst = 0.0f64;
        for j in 0..=n {
            worst = worst.max(trace_distance(&traj.states[j], &rec.states[j]).unwrap());
        }
        assert!(worst <= 3e-3, "max trace distance {worst:.3e}");
    }

    #[test]
    fn series_undertruncation_is_an_error() {
        let gamma = 2.0;
        let table = tabulate_maps(&xx_hamiltonian(1.0), &ground(), &ground(), 0.05, 40).unwrap();
        // Gamma t_max = 4, k_max = 2 is far too small
        assert!(matches!(
            dynamical_map_series(&table, gamma, 2),
            Err(Error::TruncationNotConverged { .. })
        ));
    }

    #[test]
    fn recursion_invariant_under_map_role_swap_when_states_equal() {
        // eta_bar = eta makes E and Phi identical; swapping their roles in the
        // recursion must leave the trajectory unchanged.
        let eta = DensityMatrix::from_diag(&[0.8, 0.2]).unwrap();
        let table = tabulate_maps(&xx_hamiltonian(1.1), &eta, &eta, 0.05, 30).unwrap();
        let swapped = MapTable {
            grid: table.grid().clone(),
            dim_s: table.dim_s(),
            e_maps: table.phi_maps.clone(),
            phi_maps: table.e_maps.clone(),
        };
        let a = solve_recursion(&table, &excited(), 1.2).unwrap();
        let b = solve_recursion(&swapped, &excited(), 1.2).unwrap();
        for j in 0..=30 {
            assert!(max_abs(&(a.states[j].mat() - b.states[j].mat())) < 1e-13);
        }
    }

    #[test]
    fn recursion_first_order_convergence() {
        // tau and tau/2 against a tau/8 reference: error ratio ~ 2
        let eta = ground();
        let eta_bar = DensityMatrix::maximally_mixed(2);
        let h = xx_hamiltonian(1.0);
        let t_max = 0.5;
        let err_at = |tau: f64| -> f64 {
            let n = (t_max / tau).round() as usize;
            let table = tabulate_maps(&h, &eta, &eta_bar, tau, n).unwrap();
            let sol = solve_recursion(&table, &excited(), 1.0).unwrap();
            let table_f = tabulate_maps(&h, &eta, &eta_bar, tau / 8.0, 8 * n).unwrap();
            let fine = solve_recursion(&table_f, &excited(), 1.0).unwrap();
            (0..=n)
                .map(|j| trace_distance(&sol.states[j], &fine.states[8 * j]).unwrap())
                .fold(0.0, f64::max)
        };
        let e1 = err_at(4e-3);
        let e2 = err_at(2e-3);
        let ratio = e1 / e2;
        assert!(
            (1.7..=2.3).contains(&ratio),
            "first-order ratio {ratio} (e1 = {e1:.3e}, e2 = {e2:.3e})"
        );
    }

    #[test]
    fn solutions_have_unit_trace() {
        let mut r = rng(61);
        let table = tabulate_maps(
            &xx_hamiltonian(1.0),
            &ground(),
            &DensityMatrix::maximally_mixed(2),
            1e-2,
            100,
        )
        .unwrap();
        let rho0 = crate::testutil::random_density(&mut r, 2);
        for sol in [
            solve_recursion(&table, &rho0, 0.7).unwrap(),
            solve_quadrature(&table, &rho0, 0.7).unwrap(),
        ] {
            for s in &sol.states {
                assert!((s.mat().trace() - cr(1.0)).norm() < 1e-9);
            }
        }
    }
}
