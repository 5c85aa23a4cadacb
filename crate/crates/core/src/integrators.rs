//! Time discretisations of the semilinear FEM system
//! `M w_t + [kappa A] w = r~(w)`.
//!
//! The reaction load uses group-FEM lumping: the reaction is evaluated at the
//! nodes and weighted by the mass matrix, so its Jacobian is the mass pattern
//! scaled by nodal derivatives. All composite operators (Newton Jacobians,
//! tangent propagators, IMEX systems) are assembled on the shared mass
//! pattern by [`SystemOperators::build_operator`].

use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::fem::{assemble_mass, assemble_stiffness, Mesh};
use crate::gp::LowRankRoot;
use crate::linalg::{factorize, Factorization, LinalgError, SparseOperator};
use crate::models::{ModelError, ModelSpec};

#[derive(Debug, thiserror::Error)]
pub enum IntegrationError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("Newton did not converge in {iterations} iterations (residual {residual:.3e})")]
    NewtonNonConvergence { iterations: usize, residual: f64 },
    #[error("state dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Time-stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Midpoint rule with Newton iteration; second order, A-stable.
    CrankNicolson,
    /// Implicit diffusion, explicit reaction; first order.
    ImexEuler,
}

#[derive(Debug, Clone, Copy)]
pub struct StepperConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
}

impl StepperConfig {
    pub fn new(scheme: Scheme, dt: f64) -> Self {
        assert!(dt > 0.0, "timestep must be positive");
        Self {
            scheme,
            dt,
            newton_tol: 1e-9,
            newton_max: 25,
        }
    }

    pub fn cn(dt: f64) -> Self {
        Self::new(Scheme::CrankNicolson, dt)
    }

    pub fn imex(dt: f64) -> Self {
        Self::new(Scheme::ImexEuler, dt)
    }
}

/// Assembled component operators for one (mesh, model) pair.
///
/// Holds the single-component mass and stiffness matrices; multi-component
/// composites `cm M + ca [kappa A] + cj D r~` are assembled on demand on the
/// mass pattern (a superset of the stiffness pattern).
pub struct SystemOperators {
    pub model: ModelSpec,
    n_nodes: usize,
    mass1: SparseOperator,
    stiff1: SparseOperator,
    /// Stiffness values aligned to the mass pattern (zero where absent).
    stiff_on_mass: Vec<f64>,
    mass_full: SparseOperator,
}

impl SystemOperators {
    pub fn new(mesh: &Mesh, model: &ModelSpec) -> Self {
        assert_eq!(model.diffusion.len(), model.components);
        let mass1 = assemble_mass(mesh);
        let stiff1 = assemble_stiffness(mesh);
        let n = mesh.n_nodes();
        let (row_ptr, col_idx, _) = mass1.raw_parts();
        let mut stiff_on_mass = Vec::with_capacity(mass1.nnz());
        for i in 0..n {
            for t in row_ptr[i]..row_ptr[i + 1] {
                stiff_on_mass.push(stiff1.get(i, col_idx[t]));
            }
        }
        let mut ops = Self {
            model: model.clone(),
            n_nodes: n,
            mass1,
            stiff1,
            stiff_on_mass,
            mass_full: SparseOperator::identity(1), // replaced below
        };
        ops.mass_full = ops.build_operator(1.0, 0.0, 0.0, None);
        ops
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_components(&self) -> usize {
        self.model.components
    }

    pub fn n_dofs(&self) -> usize {
        self.n_nodes * self.model.components
    }

    pub fn mass_component(&self) -> &SparseOperator {
        &self.mass1
    }

    pub fn stiffness_component(&self) -> &SparseOperator {
        &self.stiff1
    }

    /// Block-diagonal mass over all components.
    pub fn mass_full(&self) -> &SparseOperator {
        &self.mass_full
    }

    /// Nodal reaction values, concatenated by component.
    pub fn nodal_reaction(&self, state: &DVector<f64>) -> Result<DVector<f64>, IntegrationError> {
        let (n, s) = (self.n_nodes, self.model.components);
        self.check_dim(state)?;
        let mut out = DVector::zeros(n * s);
        let mut w = vec![0.0; s];
        let mut r = vec![0.0; s];
        for node in 0..n {
            for c in 0..s {
                w[c] = state[c * n + node];
            }
            self.model.reaction.eval(&w, &mut r)?;
            for c in 0..s {
                out[c * n + node] = r[c];
            }
        }
        Ok(out)
    }

    /// Group-FEM reaction load `r~(w) = M r(w_nodal)` per component.
    pub fn reaction_load(&self, state: &DVector<f64>) -> Result<DVector<f64>, IntegrationError> {
        let nodal = self.nodal_reaction(state)?;
        let (n, s) = (self.n_nodes, self.model.components);
        let mut out = DVector::zeros(n * s);
        let mut comp_out = DVector::zeros(n);
        for c in 0..s {
            let comp = nodal.rows(c * n, n).into_owned();
            self.mass1.apply_to(&mut comp_out, &comp);
            out.rows_mut(c * n, n).copy_from(&comp_out);
        }
        Ok(out)
    }

    /// Nodal reaction Jacobian entries, laid out `[(c*s + d) * n + node]`.
    pub fn nodal_jacobian(&self, state: &DVector<f64>) -> Result<Vec<f64>, IntegrationError> {
        let (n, s) = (self.n_nodes, self.model.components);
        self.check_dim(state)?;
        let mut out = vec![0.0; s * s * n];
        let mut w = vec![0.0; s];
        let mut jac = vec![0.0; s * s];
        for node in 0..n {
            for c in 0..s {
                w[c] = state[c * n + node];
            }
            self.model.reaction.jacobian(&w, &mut jac)?;
            for c in 0..s {
                for d in 0..s {
                    out[(c * s + d) * n + node] = jac[c * s + d];
                }
            }
        }
        Ok(out)
    }

    /// Composite operator `cm M + ca [kappa_c A] + cj M diag(Dr)` over all
    /// component blocks. `jac_nodal` uses the [`Self::nodal_jacobian`]
    /// layout; the Jacobian term in block (c, d) is
    /// `cj * M_ij * Dr_cd[j]` (group-FEM derivative of the reaction load).
    pub fn build_operator(
        &self,
        cm: f64,
        ca: f64,
        cj: f64,
        jac_nodal: Option<&[f64]>,
    ) -> SparseOperator {
        let (n, s) = (self.n_nodes, self.model.components);
        let (row_ptr, col_idx, m_vals) = self.mass1.raw_parts();

        // which off-diagonal blocks actually carry coupling
        let mut block_active = vec![false; s * s];
        for c in 0..s {
            for d in 0..s {
                block_active[c * s + d] = if c == d {
                    true
                } else if let Some(jac) = jac_nodal {
                    cj != 0.0 && jac[(c * s + d) * n..(c * s + d + 1) * n]
                        .iter()
                        .any(|&g| g != 0.0)
                } else {
                    false
                };
            }
        }

        let mut out_rp = Vec::with_capacity(n * s + 1);
        out_rp.push(0usize);
        let mut out_ci = Vec::new();
        let mut out_v = Vec::new();
        for c in 0..s {
            let kappa = self.model.diffusion[c];
            for i in 0..n {
                for d in 0..s {
                    if !block_active[c * s + d] {
                        continue;
                    }
                    let jrow = jac_nodal.map(|j| &j[(c * s + d) * n..(c * s + d + 1) * n]);
                    for t in row_ptr[i]..row_ptr[i + 1] {
                        let j = col_idx[t];
                        let mut v = 0.0;
                        if c == d {
                            v += cm * m_vals[t] + ca * kappa * self.stiff_on_mass[t];
                        }
                        if cj != 0.0 {
                            if let Some(jrow) = jrow {
                                v += cj * m_vals[t] * jrow[j];
                            }
                        }
                        out_ci.push(d * n + j);
                        out_v.push(v);
                    }
                }
                out_rp.push(out_ci.len());
            }
        }
        SparseOperator::from_csr(n * s, out_rp, out_ci, out_v)
    }

    /// `[kappa A] w`, block-diagonal stiffness action.
    pub fn stiffness_apply(&self, state: &DVector<f64>) -> DVector<f64> {
        let (n, s) = (self.n_nodes, self.model.components);
        let mut out = DVector::zeros(n * s);
        let mut tmp = DVector::zeros(n);
        for c in 0..s {
            let comp = state.rows(c * n, n).into_owned();
            self.stiff1.apply_to(&mut tmp, &comp);
            out.rows_mut(c * n, n).copy_from(&(self.model.diffusion[c] * &tmp));
        }
        out
    }

    pub fn mass_apply(&self, state: &DVector<f64>) -> DVector<f64> {
        self.mass_full.matvec(state)
    }

    fn check_dim(&self, state: &DVector<f64>) -> Result<(), IntegrationError> {
        if state.len() != self.n_dofs() {
            return Err(IntegrationError::DimensionMismatch {
                expected: self.n_dofs(),
                got: state.len(),
            });
        }
        Ok(())
    }
}

/// Result of one Crank-Nicolson step.
pub struct CnStep {
    pub next: DVector<f64>,
    pub iterations: usize,
    /// Final Newton Jacobian factorization, reusable for covariance columns.
    pub factorization: Factorization,
    /// Converged midpoint `(w_next + w_prev) / 2`.
    pub midpoint: DVector<f64>,
}

/// One Crank-Nicolson step with Newton iteration, warm-started from the
/// current state. `extra_rhs` adds a constant forcing increment to the
/// right-hand side (used by the prior sampler).
pub fn step_cn_full(
    state: &DVector<f64>,
    ops: &SystemOperators,
    cfg: &StepperConfig,
    extra_rhs: Option<&DVector<f64>>,
) -> Result<CnStep, IntegrationError> {
    ops.check_dim(state)?;
    let dt = cfg.dt;
    let mut next = state.clone();
    let mut iterations = 0;
    loop {
        let mid = 0.5 * (&next + state);
        let residual = ops.mass_apply(&(&next - state)) + dt * ops.stiffness_apply(&mid)
            - dt * ops.reaction_load(&mid)?
            - extra_rhs.cloned().unwrap_or_else(|| DVector::zeros(state.len()));
        let jac = ops.nodal_jacobian(&mid)?;
        let system = ops.build_operator(1.0, 0.5 * dt, -0.5 * dt, Some(&jac));
        let fact = factorize(&system)?;
        let rnorm = residual.norm();
        if rnorm <= cfg.newton_tol || !rnorm.is_finite() {
            if !rnorm.is_finite() {
                return Err(IntegrationError::NewtonNonConvergence {
                    iterations,
                    residual: rnorm,
                });
            }
            return Ok(CnStep {
                next,
                iterations,
                factorization: fact,
                midpoint: mid,
            });
        }
        if iterations >= cfg.newton_max {
            return Err(IntegrationError::NewtonNonConvergence {
                iterations,
                residual: rnorm,
            });
        }
        let delta = fact.solve(&(-&residual))?;
        next += delta;
        iterations += 1;
    }
}

/// Crank-Nicolson step returning only the new state.
pub fn step_cn(
    state: &DVector<f64>,
    ops: &SystemOperators,
    cfg: &StepperConfig,
) -> Result<DVector<f64>, IntegrationError> {
    Ok(step_cn_full(state, ops, cfg, None)?.next)
}

/// Cached implicit operator for IMEX stepping: the system matrix
/// `M + dt [kappa A]` is constant, so it is factored once.
pub struct ImexStepper {
    fact: Factorization,
    dt: f64,
}

impl ImexStepper {
    pub fn new(ops: &SystemOperators, cfg: &StepperConfig) -> Result<Self, IntegrationError> {
        let system = ops.build_operator(1.0, cfg.dt, 0.0, None);
        Ok(Self {
            fact: factorize(&system)?,
            dt: cfg.dt,
        })
    }

    pub fn factorization(&self) -> &Factorization {
        &self.fact
    }
}

pub fn step_imex_with(
    stepper: &ImexStepper,
    state: &DVector<f64>,
    ops: &SystemOperators,
) -> Result<DVector<f64>, IntegrationError> {
    step_imex_inner(stepper, state, ops, None)
}

fn step_imex_inner(
    stepper: &ImexStepper,
    state: &DVector<f64>,
    ops: &SystemOperators,
    extra_rhs: Option<&DVector<f64>>,
) -> Result<DVector<f64>, IntegrationError> {
    ops.check_dim(state)?;
    let mut rhs = ops.mass_apply(state) + stepper.dt * ops.reaction_load(state)?;
    if let Some(e) = extra_rhs {
        rhs += e;
    }
    Ok(stepper.fact.solve(&rhs)?)
}

/// Single IMEX step: implicit in diffusion, explicit in reaction.
pub fn step_imex(
    state: &DVector<f64>,
    ops: &SystemOperators,
    cfg: &StepperConfig,
) -> Result<DVector<f64>, IntegrationError> {
    let stepper = ImexStepper::new(ops, cfg)?;
    step_imex_with(&stepper, state, ops)
}

/// Sample a trajectory of the stochastic prior by Euler-Maruyama: each step
/// solves the implicit system with the noise increment
/// `e_n = sqrt(dt) G^{1/2} z_n` on the right-hand side, so the increment
/// covariance is `dt` times the projected forcing covariance. Deterministic
/// given the seed.
pub fn sample_prior_path(
    initial: &DVector<f64>,
    ops: &SystemOperators,
    cfg: &StepperConfig,
    forcing: &LowRankRoot,
    n_steps: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>, IntegrationError> {
    ops.check_dim(initial)?;
    if forcing.factor().nrows() != ops.n_dofs() {
        return Err(IntegrationError::DimensionMismatch {
            expected: ops.n_dofs(),
            got: forcing.factor().nrows(),
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let sqrt_dt = cfg.dt.sqrt();
    let ncols = forcing.ncols();
    let imex = match cfg.scheme {
        Scheme::ImexEuler => Some(ImexStepper::new(ops, cfg)?),
        Scheme::CrankNicolson => None,
    };

    let mut traj = Vec::with_capacity(n_steps + 1);
    traj.push(initial.clone());
    let mut state = initial.clone();
    for _ in 0..n_steps {
        let z = DVector::from_fn(ncols, |_, _| rng.sample::<f64, _>(StandardNormal));
        let noise = sqrt_dt * (forcing.factor() * z);
        state = match (&imex, cfg.scheme) {
            (Some(stepper), _) => step_imex_inner(stepper, &state, ops, Some(&noise))?,
            (None, _) => step_cn_full(&state, ops, cfg, Some(&noise))?.next,
        };
        traj.push(state.clone());
    }
    Ok(traj)
}
