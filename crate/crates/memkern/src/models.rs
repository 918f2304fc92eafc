//! Concrete scenario builders: the qubit-qubit XX model, a Fock-truncated
//! Jaynes-Cummings model with the swap-class bath, and validated assembly
//! from parsed configs.

use std::collections::BTreeMap;

use crate::cli::{MatrixLiteral, ModelConfig, StateConfig};
use crate::error::{Error, Result};
use crate::qmat::{
    c, cr, kron, pauli_x, pauli_y, CMat, DensityMatrix, HermitianOperator, TimeGrid,
};

/// A fully validated problem description: Hamiltonian, the Lindblad state
/// η_M, the initial memory state η̄_M, the initial system state ρ₀ and the
/// memory rate Γ, plus free model parameters for the record.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub name: String,
    pub h_sm: HermitianOperator,
    pub eta_m: DensityMatrix,
    pub eta_bar_m: DensityMatrix,
    pub rho0: DensityMatrix,
    pub gamma: f64,
    pub parameters: BTreeMap<String, f64>,
}

impl ModelSpec {
    fn validated(self) -> Result<Self> {
        let dims = self.h_sm.factor_dims();
        if dims.len() != 2 {
            return Err(Error::DimensionMismatch {
                context: format!("model Hamiltonian needs two factors, got {dims:?}"),
            });
        }
        let (ds, dm) = (dims[0], dims[1]);
        for (what, dim, expect) in [
            ("eta_m", self.eta_m.dim(), dm),
            ("eta_bar_m", self.eta_bar_m.dim(), dm),
            ("rho0", self.rho0.dim(), ds),
        ] {
            if dim != expect {
                return Err(Error::DimensionMismatch {
                    context: format!("{what} has dim {dim}, expected {expect}"),
                });
            }
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::InvalidState {
                field: Some("gamma".into()),
                reason: format!("{} must be finite and nonnegative", self.gamma),
            });
        }
        Ok(self)
    }

    pub fn dim_s(&self) -> usize {
        self.h_sm.factor_dims()[0]
    }

    pub fn dim_m(&self) -> usize {
        self.h_sm.factor_dims()[1]
    }
}

/// A model plus the time grid and route-evaluation knobs.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: ModelSpec,
    pub grid: TimeGrid,
    /// Cap on Laplace-inversion evaluation points (strided over the grid).
    pub laplace_max_points: usize,
    /// Talbot nodes per inversion (doubled internally for the convergence
    /// check).
    pub talbot_nodes: usize,
}

impl Scenario {
    pub fn new(model: ModelSpec, grid: TimeGrid) -> Self {
        Self {
            model,
            grid,
            laplace_max_points: 16,
            talbot_nodes: 32,
        }
    }
}

/// Exchange coupling H = g (σx ⊗ σx + σy ⊗ σy)/2 between two qubits; hops a
/// single excitation, |01⟩ ↦ g |10⟩.
pub fn xx_model(
    g: f64,
    eta_m: DensityMatrix,
    eta_bar_m: DensityMatrix,
    rho0: DensityMatrix,
    gamma: f64,
) -> Result<ModelSpec> {
    let h = (kron(&pauli_x(), &pauli_x()) + kron(&pauli_y(), &pauli_y())).scale(g / 2.0);
    let h_sm = HermitianOperator::new(h, vec![2, 2])?;
    let mut parameters = BTreeMap::new();
    parameters.insert("g".to_string(), g);
    ModelSpec {
        name: "xx".into(),
        h_sm,
        eta_m,
        eta_bar_m,
        rho0,
        gamma,
        parameters,
    }
    .validated()
}

/// Annihilation operator on a Fock space truncated at level `n_trunc`
/// (dimension n_trunc + 1).
fn annihilation(n_trunc: usize) -> CMat {
    let d = n_trunc + 1;
    let mut a = CMat::zeros(d, d);
    for n in 1..d {
        a[(n - 1, n)] = cr((n as f64).sqrt());
    }
    a
}

/// Jaynes-Cummings Hamiltonian H = δ a†a + g (σ₊ a + σ₋ a†) with the mode
/// truncated at Fock level `n_trunc`, coupled to the swap-class bath (not
/// photon loss: the mode's bath resets it toward η_M, vacuum by default).
///
/// Defaults: ρ₀ = excited qubit, η_M = η̄_M = vacuum.
pub fn jaynes_cummings_model(
    g: f64,
    delta: f64,
    n_trunc: usize,
    gamma: f64,
) -> Result<ModelSpec> {
    if n_trunc < 2 {
        return Err(Error::TruncationTooSmall { n_trunc });
    }
    let d_mode = n_trunc + 1;
    let a = annihilation(n_trunc);
    let number = a.adjoint() * &a;
    let sigma_plus = CMat::from_fn(2, 2, |i, j| if i == 1 && j == 0 { cr(1.0) } else { cr(0.0) });
    let sigma_minus = sigma_plus.adjoint();
    let h = kron(&crate::qmat::identity(2), &number).map(|z| z * delta)
        + (kron(&sigma_plus, &a) + kron(&sigma_minus, &a.adjoint())).map(|z| z * g);
    let h_sm = HermitianOperator::new(h, vec![2, d_mode])?;
    let vacuum = DensityMatrix::basis_state(d_mode, 0)?;
    let mut parameters = BTreeMap::new();
    parameters.insert("g".to_string(), g);
    parameters.insert("delta".to_string(), delta);
    parameters.insert("n_trunc".to_string(), n_trunc as f64);
    ModelSpec {
        name: "jaynes_cummings".into(),
        h_sm,
        eta_m: vacuum.clone(),
        eta_bar_m: vacuum,
        rho0: DensityMatrix::basis_state(2, 1)?,
        gamma,
        parameters,
    }
    .validated()
}

fn parse_matrix(lit: &MatrixLiteral, field: &str) -> Result<CMat> {
    let rows = lit.len();
    if rows == 0 {
        return Err(Error::InvalidState {
            field: Some(field.into()),
            reason: "empty matrix literal".into(),
        });
    }
    let cols = lit[0].len();
    if lit.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidState {
            field: Some(field.into()),
            reason: "ragged matrix literal".into(),
        });
    }
    Ok(CMat::from_fn(rows, cols, |i, j| {
        c(lit[i][j][0], lit[i][j][1])
    }))
}

fn state_from_config(
    cfg: &StateConfig,
    dim: usize,
    field: &str,
) -> Result<DensityMatrix> {
    let built = match cfg {
        StateConfig::Named(name) => match name.as_str() {
            "ground" | "vacuum" => DensityMatrix::basis_state(dim, 0),
            "excited" => DensityMatrix::basis_state(dim, dim - 1),
            "maximally_mixed" => Ok(DensityMatrix::maximally_mixed(dim)),
            other => Err(Error::InvalidState {
                field: Some(field.into()),
                reason: format!(
                    "unknown state `{other}` (known: ground, vacuum, excited, maximally_mixed)"
                ),
            }),
        },
        StateConfig::Diag { diag } => DensityMatrix::from_diag(diag),
        StateConfig::Matrix { matrix } => {
            let m = parse_matrix(matrix, field)?;
            DensityMatrix::new(m, vec![dim])
        }
    };
    let state = built.map_err(|e| match e {
        Error::InvalidState { field: None, reason } => Error::InvalidState {
            field: Some(field.into()),
            reason,
        },
        other => other,
    })?;
    if state.dim() != dim {
        return Err(Error::InvalidState {
            field: Some(field.into()),
            reason: format!("state has dim {}, expected {dim}", state.dim()),
        });
    }
    Ok(state)
}

/// Build a validated [`ModelSpec`] from the parsed scenario model section.
pub fn from_config(cfg: &ModelConfig) -> Result<ModelSpec> {
    match cfg.name.as_str() {
        "xx" => {
            let g = cfg.g.unwrap_or(1.0);
            let eta_m = match &cfg.eta_m {
                Some(s) => state_from_config(s, 2, "model.eta_m")?,
                None => DensityMatrix::basis_state(2, 0)?,
            };
            let eta_bar_m = match &cfg.eta_bar_m {
                Some(s) => state_from_config(s, 2, "model.eta_bar_m")?,
                None => eta_m.clone(),
            };
            let rho0 = match &cfg.rho0 {
                Some(s) => state_from_config(s, 2, "model.rho0")?,
                None => DensityMatrix::basis_state(2, 1)?,
            };
            xx_model(g, eta_m, eta_bar_m, rho0, cfg.gamma)
        }
        "jaynes_cummings" => {
            let g = cfg.g.unwrap_or(1.0);
            let delta = cfg.delta.unwrap_or(0.0);
            let n_trunc = cfg.n_trunc.unwrap_or(2);
            let mut spec = jaynes_cummings_model(g, delta, n_trunc, cfg.gamma)?;
            let d_mode = n_trunc + 1;
            if let Some(s) = &cfg.eta_m {
                spec.eta_m = state_from_config(s, d_mode, "model.eta_m")?;
            }
            if let Some(s) = &cfg.eta_bar_m {
                spec.eta_bar_m = state_from_config(s, d_mode, "model.eta_bar_m")?;
            }
            if let Some(s) = &cfg.rho0 {
                spec.rho0 = state_from_config(s, 2, "model.rho0")?;
            }
            spec.validated()
        }
        "custom" => {
            let lit = cfg.h_sm.as_ref().ok_or_else(|| Error::InvalidState {
                field: Some("model.h_sm".into()),
                reason: "custom model needs an explicit Hamiltonian".into(),
            })?;
            let dims = cfg.factor_dims.clone().ok_or_else(|| Error::InvalidState {
                field: Some("model.factor_dims".into()),
                reason: "custom model needs factor_dims = [dim_s, dim_m]".into(),
            })?;
            if dims.len() != 2 {
                return Err(Error::InvalidState {
                    field: Some("model.factor_dims".into()),
                    reason: format!("expected two factors, got {dims:?}"),
                });
            }
            let h = parse_matrix(lit, "model.h_sm")?;
            let h_sm = HermitianOperator::new(h, dims.clone()).map_err(|e| match e {
                Error::NotHermitian { deviation, tol } => Error::InvalidState {
                    field: Some("model.h_sm".into()),
                    reason: format!("not Hermitian (deviation {deviation:.3e}, tol {tol:.1e})"),
                },
                other => other,
            })?;
            let (ds, dm) = (dims[0], dims[1]);
            let eta_m = match &cfg.eta_m {
                Some(s) => state_from_config(s, dm, "model.eta_m")?,
                None => DensityMatrix::basis_state(dm, 0)?,
            };
            let eta_bar_m = match &cfg.eta_bar_m {
                Some(s) => state_from_config(s, dm, "model.eta_bar_m")?,
                None => eta_m.clone(),
            };
            let rho0 = match &cfg.rho0 {
                Some(s) => state_from_config(s, ds, "model.rho0")?,
                None => DensityMatrix::basis_state(ds, ds - 1)?,
            };
            let mut parameters = BTreeMap::new();
            if let Some(g) = cfg.g {
                parameters.insert("g".to_string(), g);
            }
            ModelSpec {
                name: "custom".into(),
                h_sm,
                eta_m,
                eta_bar_m,
                rho0,
                gamma: cfg.gamma,
                parameters,
            }
            .validated()
        }
        other => Err(Error::InvalidState {
            field: Some("model.name".into()),
            reason: format!("unknown model `{other}` (known: xx, jaynes_cummings, custom)"),
        }),
    }
}
