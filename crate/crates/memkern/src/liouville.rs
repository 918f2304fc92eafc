//! Superoperators, the swap-class Lindbladian, and a fixed-step integrator
//! for the bipartite master equation.
//!
//! # Vectorization convention
//!
//! The whole crate uses **column-stacking**: `vec(X)` lists the columns of
//! `X` top to bottom, so the entry `X[i, j]` sits at vector index `j*d + i`,
//! and `vec(A X B) = (Bᵀ ⊗ A) vec(X)`. A map on operators over a
//! d-dimensional space is stored as its d² x d² matrix in this convention.
//! Fixing the convention once, here, is what keeps every module of the crate
//! interoperable.
//!
//! The bipartite master equation integrated here is
//!
//! dρ_SM/dt = -i[H_SM, ρ_SM] + Γ 𝓛_M[ρ_SM],
//!
//! with 𝓛_M the swap-class dissipator built from the spectral decomposition
//! η_M = Σ_ν p_ν |ν⟩⟨ν| through the jump operators L_{μν} = √p_ν |ν⟩⟨μ|.
//! Acting on any joint state the dissipator reduces to
//! 𝓛_M[ρ_SM] = Tr_M{ρ_SM} ⊗ η_M − ρ_SM.

use crate::error::{Error, Result};
use crate::qmat::{
    cr, eig_hermitian_unchecked, hermitize, identity, kron, max_abs, CMat, CVec, DensityMatrix,
    HermitianOperator, StateTol, TimeGrid,
};
use num_complex::Complex64 as C64;

/// Eigenvalues of η_M at or below this weight are dropped from the jump set;
/// they would contribute √0 operators and completeness is unaffected.
pub const P_DROP: f64 = 1e-14;

/// Column-stacked vectorization of a square matrix.
pub fn vec_mat(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_mat`] for a d x d matrix.
pub fn unvec(v: &CVec, d: usize) -> CMat {
    CMat::from_column_slice(d, d, v.as_slice())
}

/// A linear map on operators over a d-dimensional space, stored as its
/// d² x d² matrix in the column-stacking convention.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumMap {
    dim: usize,
    smat: CMat,
}

impl QuantumMap {
    pub fn from_smat(dim: usize, smat: CMat) -> Result<Self> {
        if smat.nrows() != dim * dim || smat.ncols() != dim * dim {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "superoperator is {}x{}, expected {}x{}",
                    smat.nrows(),
                    smat.ncols(),
                    dim * dim,
                    dim * dim
                ),
            });
        }
        Ok(Self { dim, smat })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            smat: identity(dim * dim),
        }
    }

    /// Map ρ ↦ U ρ U†; its matrix is conj(U) ⊗ U.
    pub fn conjugation(u: &CMat) -> Self {
        Self {
            dim: u.nrows(),
            smat: kron(&u.map(|z| z.conj()), u),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn smat(&self) -> &CMat {
        &self.smat
    }

    pub fn apply(&self, x: &CMat) -> CMat {
        unvec(&(&self.smat * vec_mat(x)), self.dim)
    }

    pub fn apply_vec(&self, v: &CVec) -> CVec {
        &self.smat * v
    }

    /// Composition self ∘ inner.
    pub fn compose(&self, inner: &Self) -> Self {
        Self {
            dim: self.dim,
            smat: &self.smat * &inner.smat,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            dim: self.dim,
            smat: &self.smat + &other.smat,
        }
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            dim: self.dim,
            smat: self.smat.scale(a),
        }
    }

    /// Frobenius norm of the superoperator matrix.
    pub fn norm(&self) -> f64 {
        self.smat.norm()
    }

    /// Max over the matrix-unit basis of |Tr(map[E_ij]) - Tr(E_ij)|.
    pub fn trace_preservation_residual(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for j in 0..d {
            for i in 0..d {
                let col = self.smat.column(j * d + i);
                // trace of the image of E_ij
                let mut tr = cr(0.0);
                for k in 0..d {
                    tr += col[k * d + k];
                }
                let expect = if i == j { cr(1.0) } else { cr(0.0) };
                worst = worst.max((tr - expect).norm());
            }
        }
        worst
    }
}

/// Build the matrix of a linear operator-to-operator action by applying it
/// to all matrix units. The caller guarantees linearity.
pub fn vectorize_map<F: Fn(&CMat) -> CMat>(dim: usize, action: F) -> QuantumMap {
    let mut smat = CMat::zeros(dim * dim, dim * dim);
    let mut unit = CMat::zeros(dim, dim);
    for j in 0..dim {
        for i in 0..dim {
            unit[(i, j)] = cr(1.0);
            let out = action(&unit);
            smat.set_column(j * dim + i, &vec_mat(&out));
            unit[(i, j)] = cr(0.0);
        }
    }
    QuantumMap { dim, smat }
}

/// One jump operator L_{μν} = √p_ν |ν⟩⟨μ| of the swap class.
#[derive(Debug, Clone)]
pub struct JumpOp {
    pub mu: usize,
    pub nu: usize,
    pub mat: CMat,
}

/// The swap-class jump operators together with the spectral data
/// (p_ν, |ν⟩) of the defining state η_M.
#[derive(Debug, Clone)]
pub struct JumpOperatorSet {
    dim_m: usize,
    ops: Vec<JumpOp>,
    probs: Vec<f64>,
    basis: CMat,
}

impl JumpOperatorSet {
    /// Assemble from explicit spectral data; validates normalization and the
    /// completeness relation Σ L†L = 1.
    pub fn from_spectral_data(probs: Vec<f64>, basis: CMat) -> Result<Self> {
        let dim_m = basis.nrows();
        if probs.len() != dim_m || basis.ncols() != dim_m {
            return Err(Error::DimensionMismatch {
                context: "spectral data sizes disagree".into(),
            });
        }
        if probs.iter().any(|&p| p < -1e-12) {
            return Err(Error::InvalidState {
                field: None,
                reason: "negative probability in spectral data".into(),
            });
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidState {
                field: None,
                reason: format!("probabilities sum to {total}, not 1"),
            });
        }
        let mut ops = Vec::new();
        for (nu, &p) in probs.iter().enumerate() {
            if p <= P_DROP {
                continue;
            }
            let ket_nu = basis.column(nu).into_owned();
            for mu in 0..dim_m {
                let bra_mu = basis.column(mu).into_owned();
                let mat = CMat::from_fn(dim_m, dim_m, |i, j| {
                    cr(p.sqrt()) * ket_nu[i] * bra_mu[j].conj()
                });
                ops.push(JumpOp { mu, nu, mat });
            }
        }
        let set = Self {
            dim_m,
            ops,
            probs,
            basis,
        };
        let resid = set.completeness_residual();
        if resid > 1e-12 {
            return Err(Error::InvalidState {
                field: None,
                reason: format!("jump-operator completeness residual {resid:.3e}"),
            });
        }
        Ok(set)
    }

    pub fn dim_m(&self) -> usize {
        self.dim_m
    }

    pub fn ops(&self) -> &[JumpOp] {
        &self.ops
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn basis(&self) -> &CMat {
        &self.basis
    }

    /// Max |Σ L†L - 1| entry.
    pub fn completeness_residual(&self) -> f64 {
        let mut acc = CMat::zeros(self.dim_m, self.dim_m);
        for op in &self.ops {
            acc += op.mat.adjoint() * &op.mat;
        }
        max_abs(&(acc - identity(self.dim_m)))
    }
}

/// Jump operators L_{μν} = √p_ν |ν⟩⟨μ| from the eigendecomposition of η_M.
///
/// Eigenvalues at or below [`P_DROP`] are dropped; completeness still holds
/// because the dropped ν carry weight p_ν ≈ 0 in Σ_ν p_ν · 1.
pub fn build_swap_jump_ops(eta_m: &DensityMatrix) -> Result<JumpOperatorSet> {
    let (eigs, basis) = eig_hermitian_unchecked(eta_m.mat());
    // clamp roundoff-negative weights of a validated state to zero
    let probs: Vec<f64> = eigs.iter().map(|&p| p.max(0.0)).collect();
    let total: f64 = probs.iter().sum();
    let probs: Vec<f64> = probs.iter().map(|p| p / total).collect();
    JumpOperatorSet::from_spectral_data(probs, basis)
}

/// Dissipator Σ_k ( L_k · L_k† − ½[L_k†L_k, ·]₊ ) for explicit operators.
pub fn dissipator_from_ops(dim: usize, ops: &[CMat]) -> QuantumMap {
    let id = identity(dim);
    let mut smat = CMat::zeros(dim * dim, dim * dim);
    for l in ops {
        let ldl = l.adjoint() * l;
        smat += kron(&l.map(|z| z.conj()), l);
        smat -= (kron(&id, &ldl) + kron(&ldl.transpose(), &id)).scale(0.5);
    }
    QuantumMap { dim, smat }
}

/// Dissipator of a swap-class jump set; acts on the M space alone.
pub fn dissipator(ops: &JumpOperatorSet) -> QuantumMap {
    let mats: Vec<CMat> = ops.ops().iter().map(|op| op.mat.clone()).collect();
    dissipator_from_ops(ops.dim_m(), &mats)
}

/// Lift a map acting on one factor to the full multi-factor operator space,
/// identity on all other factors.
pub fn embed_on_factor(
    map_m: &QuantumMap,
    factor_dims: &[usize],
    target: usize,
) -> Result<QuantumMap> {
    if target >= factor_dims.len() {
        return Err(Error::InvalidFactorSet {
            keep: vec![target],
            n_factors: factor_dims.len(),
        });
    }
    let dm = factor_dims[target];
    if map_m.dim() != dm {
        return Err(Error::DimensionMismatch {
            context: format!(
                "map acts on dim {}, target factor has dim {}",
                map_m.dim(),
                dm
            ),
        });
    }
    let d: usize = factor_dims.iter().product();
    let stride = {
        // stride of the target factor inside the row index
        let mut s = 1usize;
        for &dk in factor_dims.iter().skip(target + 1) {
            s *= dk;
        }
        s
    };
    let mut smat = CMat::zeros(d * d, d * d);
    for col in 0..d {
        for row in 0..d {
            let v_in = col * d + row;
            let rm = (row / stride) % dm;
            let cm = (col / stride) % dm;
            let row_rest = row - rm * stride;
            let col_rest = col - cm * stride;
            for cm_out in 0..dm {
                for rm_out in 0..dm {
                    let w = map_m.smat()[(cm_out * dm + rm_out, cm * dm + rm)];
                    if w != cr(0.0) {
                        let v_out = (col_rest + cm_out * stride) * d + (row_rest + rm_out * stride);
                        smat[(v_out, v_in)] += w;
                    }
                }
            }
        }
    }
    Ok(QuantumMap { dim: d, smat })
}

/// Vectorized generator of the bipartite master equation
/// −i[H_SM, ·] + Γ (swap-class dissipator on M).
#[derive(Debug, Clone)]
pub struct Lindbladian {
    dim: usize,
    factor_dims: Vec<usize>,
    generator: CMat,
}

impl Lindbladian {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn factor_dims(&self) -> &[usize] {
        &self.factor_dims
    }

    pub fn generator(&self) -> &CMat {
        &self.generator
    }

    pub fn apply(&self, x: &CMat) -> CMat {
        unvec(&(&self.generator * vec_mat(x)), self.dim)
    }

    /// Induced infinity norm of the generator, the stability surrogate used
    /// by the integrator guard.
    pub fn norm_bound(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.generator.nrows() {
            let row_sum: f64 = self.generator.row(i).iter().map(|z| z.norm()).sum();
            worst = worst.max(row_sum);
        }
        worst
    }

    /// Residuals of the generator contract on the matrix-unit basis:
    /// (Hermiticity preservation, trace annihilation).
    pub fn invariant_residuals(&self) -> (f64, f64) {
        let d = self.dim;
        let mut herm = 0.0f64;
        let mut tr = 0.0f64;
        let mut unit = CMat::zeros(d, d);
        for j in 0..d {
            for i in 0..=j {
                // Hermitian basis element (E_ij + E_ji)/sqrt-ish, unnormalized
                unit[(i, j)] = cr(1.0);
                unit[(j, i)] = cr(1.0);
                let out = self.apply(&unit);
                herm = herm.max(crate::qmat::hermiticity_deviation(&out));
                tr = tr.max(out.trace().norm());
                unit[(i, j)] = cr(0.0);
                unit[(j, i)] = cr(0.0);
                if i != j {
                    unit[(i, j)] = C64::new(0.0, 1.0);
                    unit[(j, i)] = C64::new(0.0, -1.0);
                    let out = self.apply(&unit);
                    herm = herm.max(crate::qmat::hermiticity_deviation(&out));
                    tr = tr.max(out.trace().norm());
                    unit[(i, j)] = cr(0.0);
                    unit[(j, i)] = cr(0.0);
                }
            }
        }
        (herm, tr)
    }
}

/// Commutator superoperator [H, ·] in vectorized form: I ⊗ H − Hᵀ ⊗ I.
pub fn commutator_superop(h: &CMat) -> CMat {
    let d = h.nrows();
    let id = identity(d);
    kron(&id, h) - kron(&h.transpose(), &id)
}

/// Generator of dρ_SM/dt = −i[H_SM, ρ_SM] + Γ 𝓛_M[ρ_SM] with the
/// swap-class dissipator defined by η_M embedded on the M factor.
pub fn build_bipartite_generator(
    h_sm: &HermitianOperator,
    gamma: f64,
    eta_m: &DensityMatrix,
) -> Result<Lindbladian> {
    let dims = h_sm.factor_dims();
    if dims.len() != 2 {
        return Err(Error::DimensionMismatch {
            context: format!("bipartite generator needs two factors, got {dims:?}"),
        });
    }
    if eta_m.dim() != dims[1] {
        return Err(Error::DimensionMismatch {
            context: format!(
                "eta_M has dim {}, factor M has dim {}",
                eta_m.dim(),
                dims[1]
            ),
        });
    }
    if gamma < 0.0 {
        return Err(Error::InvalidState {
            field: None,
            reason: format!("gamma = {gamma} must be nonnegative"),
        });
    }
    let jumps = build_swap_jump_ops(eta_m)?;
    let diss_m = dissipator(&jumps);
    let embedded = embed_on_factor(&diss_m, dims, 1)?;
    let generator = commutator_superop(h_sm.mat()).scale(1.0).map(|z| z * C64::new(0.0, -1.0))
        + embedded.smat().scale(gamma);
    let lind = Lindbladian {
        dim: h_sm.dim(),
        factor_dims: dims.to_vec(),
        generator,
    };
    debug_assert!({
        let (h, t) = lind.invariant_residuals();
        h < 1e-11 && t < 1e-11
    });
    Ok(lind)
}

/// Classical fixed-step 4th-order integration of the vectorized linear ODE
/// v' = G v on a uniform grid. Every output is re-validated as a
/// [`DensityMatrix`] with the PSD floor relaxed to 1e-8.
pub fn integrate_bipartite(
    gen: &Lindbladian,
    rho0_sm: &DensityMatrix,
    grid: &TimeGrid,
) -> Result<Vec<DensityMatrix>> {
    if rho0_sm.dim() != gen.dim() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "initial state dim {} vs generator dim {}",
                rho0_sm.dim(),
                gen.dim()
            ),
        });
    }
    let h = grid.tau();
    let product = gen.norm_bound() * h;
    if product > 0.1 {
        return Err(Error::StepTooLarge { h, product });
    }
    let g = gen.generator();
    let tol = StateTol::relaxed_psd(1e-8);
    let dims = rho0_sm.factor_dims().to_vec();
    let mut v = vec_mat(rho0_sm.mat());
    let mut out = Vec::with_capacity(grid.n_steps() + 1);
    out.push(rho0_sm.clone());
    for step in 1..=grid.n_steps() {
        let k1 = g * &v;
        let k2 = g * (&v + k1.scale_c(0.5 * h));
        let k3 = g * (&v + k2.scale_c(0.5 * h));
        let k4 = g * (&v + k3.scale_c(h));
        v += (k1 + k2.scale_c(2.0) + k3.scale_c(2.0) + k4).scale_c(h / 6.0);
        let state = DensityMatrix::with_tol(unvec(&v, gen.dim()), dims.clone(), &tol).map_err(
            |e| Error::StateInvariantViolated {
                step,
                reason: e.to_string(),
            },
        )?;
        out.push(state);
    }
    Ok(out)
}

trait ScaleC {
    fn scale_c(&self, a: f64) -> CVec;
}

impl ScaleC for CVec {
    fn scale_c(&self, a: f64) -> CVec {
        self.map(|z| z * a)
    }
}

/// Hermitize a nearly Hermitian matrix produced by a numerical route.
pub fn symmetrized(m: &CMat) -> CMat {
    hermitize(m)
}
