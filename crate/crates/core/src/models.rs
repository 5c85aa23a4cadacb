//! Registry of the concrete PDE models and their initial conditions.
//!
//! Each model carries per-component diffusion coefficients, a nodal reaction
//! closure, and its analytic Jacobian. Reactions are evaluated pointwise at
//! the nodes; the integrators weight them with the mass matrix ("group FEM"),
//! which keeps the reaction Jacobian analytic and cheap.

use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

use crate::fem::{assemble_mass, assemble_stiffness, Domain, Mesh};
use crate::linalg::factorize;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("reaction evaluated at the singularity u = -q (u = {u:.6e})")]
    SingularReaction { u: f64 },
    #[error("initial condition requires {expected}")]
    WrongDomain { expected: &'static str },
    #[error("state length {got} does not match {expected} components x nodes")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Linalg(#[from] crate::linalg::LinalgError),
}

/// Nodal reaction closures; `s` components in, `s` components out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reaction {
    /// No reaction (pure diffusion).
    None,
    /// `r(u) = -rate * u` per component.
    LinearDecay { rate: f64 },
    /// Two coupled cell populations.
    CellPopulations { k_u: f64, k_v: f64 },
    /// Two-component Oregonator kinetics.
    Oregonator { f: f64, q: f64, eps: f64 },
}

impl Reaction {
    /// Evaluate the reaction at one node; `w` and `out` hold `s` components.
    pub fn eval(&self, w: &[f64], out: &mut [f64]) -> Result<(), ModelError> {
        match *self {
            Reaction::None => out.fill(0.0),
            Reaction::LinearDecay { rate } => {
                for (o, &x) in out.iter_mut().zip(w) {
                    *o = -rate * x;
                }
            }
            Reaction::CellPopulations { k_u, k_v } => {
                let (u, v) = (w[0], w[1]);
                let growth = k_v * v * (1.0 - u - v);
                out[0] = -k_u * u + 2.0 * growth;
                out[1] = k_u * u - growth;
            }
            Reaction::Oregonator { f, q, eps } => {
                let (u, v) = (w[0], w[1]);
                if (u + q).abs() <= 1e-12 {
                    return Err(ModelError::SingularReaction { u });
                }
                out[0] = (u * (1.0 - u) - f * v * (u - q) / (u + q)) / eps;
                out[1] = u - v;
            }
        }
        Ok(())
    }

    /// Analytic Jacobian at one node, row-major `s x s`.
    pub fn jacobian(&self, w: &[f64], out: &mut [f64]) -> Result<(), ModelError> {
        match *self {
            Reaction::None => out.fill(0.0),
            Reaction::LinearDecay { rate } => {
                let s = w.len();
                out.fill(0.0);
                for c in 0..s {
                    out[c * s + c] = -rate;
                }
            }
            Reaction::CellPopulations { k_u, k_v } => {
                let (u, v) = (w[0], w[1]);
                out[0] = -k_u - 2.0 * k_v * v;
                out[1] = 2.0 * k_v * (1.0 - u - 2.0 * v);
                out[2] = k_u + k_v * v;
                out[3] = -k_v * (1.0 - u - 2.0 * v);
            }
            Reaction::Oregonator { f, q, eps } => {
                let (u, v) = (w[0], w[1]);
                if (u + q).abs() <= 1e-12 {
                    return Err(ModelError::SingularReaction { u });
                }
                let frac_du = 2.0 * q / ((u + q) * (u + q));
                out[0] = (1.0 - 2.0 * u - f * v * frac_du) / eps;
                out[1] = -(f / eps) * (u - q) / (u + q);
                out[2] = 1.0;
                out[3] = -1.0;
            }
        }
        Ok(())
    }
}

/// A concrete PDE model: component count, diffusion coefficients, reaction.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub name: &'static str,
    pub components: usize,
    pub diffusion: Vec<f64>,
    pub reaction: Reaction,
}

/// Oregonator parameter regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OregonatorRegime {
    /// Excitable spiral-wave regime.
    Spiral,
    /// Oscillatory regime.
    Oscillatory,
}

/// Two-species cell population model on `[0, 1300]` micrometres.
pub fn cell_rd_model() -> ModelSpec {
    ModelSpec {
        name: "cell-rd",
        components: 2,
        diffusion: vec![700.0, 700.0],
        reaction: Reaction::CellPopulations { k_u: 0.025, k_v: 0.0725 },
    }
}

pub fn oregonator_model(regime: OregonatorRegime) -> ModelSpec {
    match regime {
        OregonatorRegime::Spiral => ModelSpec {
            name: "oregonator-spiral",
            components: 2,
            diffusion: vec![1.0, 0.6],
            reaction: Reaction::Oregonator { f: 2.0, q: 0.002, eps: 0.02 },
        },
        OregonatorRegime::Oscillatory => ModelSpec {
            name: "oregonator-oscillatory",
            components: 2,
            diffusion: vec![0.001, 0.001],
            reaction: Reaction::Oregonator { f: 0.95, q: 0.002, eps: 0.75 },
        },
    }
}

/// How an initial condition was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Exact,
    Blurred,
    SinusoidPerturbed,
    PilotRun,
}

impl Provenance {
    pub fn tag(&self) -> &'static str {
        match self {
            Provenance::Exact => "exact",
            Provenance::Blurred => "blurred",
            Provenance::SinusoidPerturbed => "sinusoid-perturbed",
            Provenance::PilotRun => "pilot-run",
        }
    }
}

/// Nodal values per component plus a provenance tag.
#[derive(Debug, Clone)]
pub struct InitialCondition {
    pub components: Vec<DVector<f64>>,
    pub provenance: Provenance,
}

impl InitialCondition {
    pub fn new(components: Vec<DVector<f64>>, provenance: Provenance) -> Self {
        assert!(!components.is_empty());
        let n = components[0].len();
        assert!(components.iter().all(|c| c.len() == n));
        Self { components, provenance }
    }

    pub fn n_nodes(&self) -> usize {
        self.components[0].len()
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// Concatenated state, all of component 0 then all of component 1, etc.
    pub fn concat(&self) -> DVector<f64> {
        let n = self.n_nodes();
        let mut out = DVector::zeros(n * self.components.len());
        for (c, comp) in self.components.iter().enumerate() {
            out.rows_mut(c * n, n).copy_from(comp);
        }
        out
    }

    pub fn from_concat(state: &DVector<f64>, n_components: usize, provenance: Provenance) -> Self {
        let n = state.len() / n_components;
        assert_eq!(n * n_components, state.len());
        let components = (0..n_components)
            .map(|c| state.rows(c * n, n).into_owned())
            .collect();
        Self { components, provenance }
    }

    pub fn all_finite(&self) -> bool {
        self.components
            .iter()
            .all(|c| c.iter().all(|v| v.is_finite()))
    }
}

const CELL_DOMAIN: (f64, f64) = (0.0, 1300.0);

/// Step initial condition for the cell model: both densities 0.055 on
/// `[400, 900]`, zero elsewhere.
pub fn cell_rd_initial(mesh: &Mesh) -> Result<InitialCondition, ModelError> {
    match mesh.domain() {
        Domain::Interval { a, b }
            if (a - CELL_DOMAIN.0).abs() < 1e-9 && (b - CELL_DOMAIN.1).abs() < 1e-9 => {}
        _ => {
            return Err(ModelError::WrongDomain {
                expected: "the interval [0, 1300]",
            })
        }
    }
    let u = DVector::from_fn(mesh.n_nodes(), |i, _| {
        let x = mesh.node(i)[0];
        if (400.0..=900.0).contains(&x) {
            0.055
        } else {
            0.0
        }
    });
    Ok(InitialCondition::new(vec![u.clone(), u], Provenance::Exact))
}

/// Spiral-wave seed for the excitable Oregonator.
///
/// A cross-gradient seed around the domain centre: `u` is excited (0.8) in a
/// narrow angular sector and at the rest state elsewhere, while `v` ramps
/// linearly in angle on top of the rest state. Approximates the usual
/// spiral-initiation procedure for this model.
pub fn spiral_initial(mesh: &Mesh, f: f64, q: f64) -> Result<InitialCondition, ModelError> {
    let Domain::Rectangle { x0, x1, y0, y1 } = mesh.domain() else {
        return Err(ModelError::WrongDomain { expected: "a rectangle mesh" });
    };
    let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
    let rest = q * (f + 1.0) / (f - 1.0);
    let n = mesh.n_nodes();
    let mut u = DVector::from_element(n, rest);
    let mut v = DVector::zeros(n);
    for i in 0..n {
        let p = mesh.node(i);
        let mut theta = (p[1] - cy).atan2(p[0] - cx);
        if theta < 0.0 {
            theta += 2.0 * std::f64::consts::PI;
        }
        if theta <= 0.5 {
            u[i] = 0.8;
        }
        v[i] = rest + theta / (8.0 * std::f64::consts::PI * f);
    }
    Ok(InitialCondition::new(vec![u, v], Provenance::Exact))
}

const BLUR_STEPS: usize = 20;

/// Push every component through a heat equation (Crank-Nicolson, Neumann
/// boundary) for the given duration. Amplitudes are dampened and features
/// blurred; a zero duration returns the input unchanged.
pub fn blur_initial(
    ic: &InitialCondition,
    diffusivity: f64,
    duration: f64,
    mesh: &Mesh,
) -> Result<InitialCondition, ModelError> {
    assert!(diffusivity > 0.0, "diffusivity must be positive");
    assert!(duration >= 0.0, "duration must be nonnegative");
    if duration == 0.0 {
        return Ok(InitialCondition::new(ic.components.clone(), Provenance::Blurred));
    }
    let mass = assemble_mass(mesh);
    let stiff = assemble_stiffness(mesh);
    let dt = duration / BLUR_STEPS as f64;
    let c = 0.5 * dt * diffusivity;

    let n = mesh.n_nodes();
    let mut trips = Vec::new();
    for i in 0..n {
        let (cols, vals) = mass.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            trips.push((i, j, v + c * stiff.get(i, j)));
        }
    }
    let implicit = crate::linalg::SparseOperator::from_triplets(n, &trips);
    let fact = factorize(&implicit)?;

    let mut comps = Vec::with_capacity(ic.components.len());
    for comp in &ic.components {
        let mut field = comp.clone();
        for _ in 0..BLUR_STEPS {
            let rhs = mass.matvec(&field) - c * stiff.matvec(&field);
            field = fact.solve(&rhs)?;
        }
        comps.push(field);
    }
    Ok(InitialCondition::new(comps, Provenance::Blurred))
}

/// Shift the `u` component by the smooth field
/// `amp * (1 + sin(pi x / Lx + z1) sin(pi y / Ly + z2))`; `v` is unchanged.
pub fn sinusoid_perturb(
    ic: &InitialCondition,
    amplitude: f64,
    phases: (f64, f64),
    mesh: &Mesh,
) -> Result<InitialCondition, ModelError> {
    let Domain::Rectangle { x0, x1, y0, y1 } = mesh.domain() else {
        return Err(ModelError::WrongDomain { expected: "a rectangle mesh" });
    };
    let (lx, ly) = (x1 - x0, y1 - y0);
    let pi = std::f64::consts::PI;
    let mut comps = ic.components.clone();
    for i in 0..mesh.n_nodes() {
        let p = mesh.node(i);
        let field = 1.0
            + (pi * (p[0] - x0) / lx + phases.0).sin() * (pi * (p[1] - y0) / ly + phases.1).sin();
        comps[0][i] += amplitude * field;
    }
    Ok(InitialCondition::new(comps, Provenance::SinusoidPerturbed))
}

/// True initial condition for the oscillatory studies: draw both components
/// from `Unif(0, 0.15)` and integrate the deterministic oscillatory
/// Oregonator with the IMEX stepper. Deterministic given the seed.
pub fn pilot_run_initial(
    mesh: &Mesh,
    steps: usize,
    seed: u64,
) -> Result<InitialCondition, ModelError> {
    use crate::integrators::{step_imex_with, ImexStepper, StepperConfig, SystemOperators};

    let model = oregonator_model(OregonatorRegime::Oscillatory);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n = mesh.n_nodes();
    let u = DVector::from_fn(n, |_, _| rng.gen_range(0.0..0.15));
    let v = DVector::from_fn(n, |_, _| rng.gen_range(0.0..0.15));

    let ops = SystemOperators::new(mesh, &model);
    let cfg = StepperConfig::imex(1e-2);
    let stepper = ImexStepper::new(&ops, &cfg).map_err(integration_to_model)?;
    let mut state = InitialCondition::new(vec![u, v], Provenance::PilotRun).concat();
    for _ in 0..steps {
        state = step_imex_with(&stepper, &state, &ops).map_err(integration_to_model)?;
    }
    Ok(InitialCondition::from_concat(&state, 2, Provenance::PilotRun))
}

fn integration_to_model(e: crate::integrators::IntegrationError) -> ModelError {
    match e {
        crate::integrators::IntegrationError::Model(m) => m,
        crate::integrators::IntegrationError::Linalg(l) => ModelError::Linalg(l),
        other => ModelError::WrongDomain {
            expected: Box::leak(format!("integration failure: {other}").into_boxed_str()),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::build_mesh;

    fn fd_jacobian(r: &Reaction, w: &[f64]) -> Vec<f64> {
        let s = w.len();
        let mut out = vec![0.0; s * s];
        let step = 1e-6;
        for j in 0..s {
            let mut wp = w.to_vec();
            let mut wm = w.to_vec();
            wp[j] += step;
            wm[j] -= step;
            let mut rp = vec![0.0; s];
            let mut rm = vec![0.0; s];
            r.eval(&wp, &mut rp).unwrap();
            r.eval(&wm, &mut rm).unwrap();
            for i in 0..s {
                out[i * s + j] = (rp[i] - rm[i]) / (2.0 * step);
            }
        }
        out
    }

    fn check_jacobian(r: &Reaction, w: &[f64], rel_tol: f64) {
        let s = w.len();
        let mut analytic = vec![0.0; s * s];
        r.jacobian(w, &mut analytic).unwrap();
        let fd = fd_jacobian(r, w);
        let scale = fd.iter().fold(1e-12f64, |a, b| a.max(b.abs()));
        for (a, f) in analytic.iter().zip(&fd) {
            assert!(
                (a - f).abs() <= rel_tol * scale,
                "jacobian mismatch: analytic {a}, fd {f}"
            );
        }
    }

    #[test]
    fn cell_model_parameters() {
        let m = cell_rd_model();
        assert_eq!(m.diffusion, vec![700.0, 700.0]);
        assert_eq!(m.reaction, Reaction::CellPopulations { k_u: 0.025, k_v: 0.0725 });
        let mut r = [1.0, 1.0];
        m.reaction.eval(&[0.0, 0.0], &mut r).unwrap();
        assert_eq!(r, [0.0, 0.0], "extinction fixed point");
    }

    #[test]
    fn cell_jacobian_matches_finite_differences() {
        let m = cell_rd_model();
        check_jacobian(&m.reaction, &[0.03, 0.05], 1e-6);
    }

    #[test]
    fn oregonator_parameters_and_nullcline() {
        let spiral = oregonator_model(OregonatorRegime::Spiral);
        assert_eq!(spiral.diffusion, vec![1.0, 0.6]);
        let osc = oregonator_model(OregonatorRegime::Oscillatory);
        assert_eq!(osc.diffusion, vec![0.001, 0.001]);
        for model in [spiral, osc] {
            for u in [0.05, 0.3, 0.9] {
                let mut r = [0.0, 0.0];
                model.reaction.eval(&[u, u], &mut r).unwrap();
                assert!(r[1].abs() < 1e-15, "v-nullcline at u = v");
            }
        }
    }

    #[test]
    fn oregonator_jacobian_matches_finite_differences() {
        for regime in [OregonatorRegime::Spiral, OregonatorRegime::Oscillatory] {
            let m = oregonator_model(regime);
            check_jacobian(&m.reaction, &[0.4, 0.3], 1e-5);
        }
    }

    #[test]
    fn oregonator_singularity_rejected() {
        let m = oregonator_model(OregonatorRegime::Spiral);
        let mut out = [0.0, 0.0];
        assert!(matches!(
            m.reaction.eval(&[-0.002, 0.1], &mut out),
            Err(ModelError::SingularReaction { .. })
        ));
    }

    #[test]
    fn oregonator_positive_at_zero_u() {
        // at u = 0 the excitable term is (f v q / q) / eps > 0 for v > 0
        let m = oregonator_model(OregonatorRegime::Spiral);
        let mut r = [0.0, 0.0];
        m.reaction.eval(&[0.0, 0.2], &mut r).unwrap();
        assert!(r[0] > 0.0);
    }

    #[test]
    fn jacobians_match_fd_over_physical_range() {
        let mut rng = ChaCha12Rng::seed_from_u64(2024);
        let cell = cell_rd_model();
        for _ in 0..100 {
            let w = [rng.gen_range(0.0..0.2), rng.gen_range(0.0..0.2)];
            check_jacobian(&cell.reaction, &w, 1e-5);
        }
        for regime in [OregonatorRegime::Spiral, OregonatorRegime::Oscillatory] {
            let m = oregonator_model(regime);
            for _ in 0..100 {
                let w = [rng.gen_range(0.01..1.0), rng.gen_range(0.01..0.5)];
                check_jacobian(&m.reaction, &w, 1e-5);
            }
        }
    }

    #[test]
    fn cell_initial_step_profile() {
        let mesh = build_mesh(Domain::interval(0.0, 1300.0), &[200]).unwrap();
        let ic = cell_rd_initial(&mesh).unwrap();
        let at = |x: f64| {
            let i = (0..mesh.n_nodes())
                .find(|&i| (mesh.node(i)[0] - x).abs() < 1e-9)
                .unwrap();
            ic.components[0][i]
        };
        assert_eq!(at(650.0), 0.055);
        assert_eq!(at(97.5), 0.0);

        // quadrature of the step function via the mass matrix
        let mass = assemble_mass(&mesh);
        let integral = DVector::from_element(mesh.n_nodes(), 1.0).dot(&mass.matvec(&ic.components[0]));
        assert!((integral - 27.5).abs() <= mesh.h() * 0.055, "integral {integral}");

        let wrong = build_mesh(Domain::interval(0.0, 100.0), &[10]).unwrap();
        assert!(cell_rd_initial(&wrong).is_err());
    }

    #[test]
    fn blur_preserves_constants_and_dampens() {
        let mesh = build_mesh(Domain::square(50.0), &[12, 12]).unwrap();
        let constant = InitialCondition::new(
            vec![DVector::from_element(mesh.n_nodes(), 3.25)],
            Provenance::Exact,
        );
        let blurred = blur_initial(&constant, 1.0, 0.1, &mesh).unwrap();
        assert!((blurred.components[0].clone() - constant.components[0].clone()).amax() < 1e-11);

        let ic = spiral_initial(&mesh, 2.0, 0.002).unwrap();
        let unchanged = blur_initial(&ic, 1.0, 0.0, &mesh).unwrap();
        assert_eq!(unchanged.components[0], ic.components[0]);

        let blurred = blur_initial(&ic, 1.0, 0.1, &mesh).unwrap();
        assert!(
            blurred.components[0].amax() < ic.components[0].amax(),
            "amplitude must be dampened"
        );
    }

    #[test]
    fn sinusoid_perturbation_formula() {
        let mesh = build_mesh(Domain::square(50.0), &[10, 10]).unwrap();
        let zero = InitialCondition::new(
            vec![DVector::zeros(mesh.n_nodes()), DVector::zeros(mesh.n_nodes())],
            Provenance::Exact,
        );

        let same = sinusoid_perturb(&zero, 0.0, (0.3, -0.2), &mesh).unwrap();
        assert_eq!(same.components[0], zero.components[0]);

        let p = sinusoid_perturb(&zero, 0.02, (0.0, 0.0), &mesh).unwrap();
        let center = (0..mesh.n_nodes())
            .find(|&i| (mesh.node(i)[0] - 25.0).abs() < 1e-9 && (mesh.node(i)[1] - 25.0).abs() < 1e-9)
            .unwrap();
        assert!((p.components[0][center] - 0.04).abs() < 1e-12);
        assert!(p.components[1].amax() == 0.0, "v unchanged");
        // perturbation bounded in [0, 2 amp]
        assert!(p.components[0].iter().all(|&v| (-1e-15..=0.04 + 1e-15).contains(&v)));
    }

    #[test]
    fn pilot_run_deterministic_and_bounded() {
        let mesh = build_mesh(Domain::square(50.0), &[8, 8]).unwrap();
        let a = pilot_run_initial(&mesh, 50, 7).unwrap();
        let b = pilot_run_initial(&mesh, 50, 7).unwrap();
        assert_eq!(a.components[0], b.components[0], "same seed, same output");
        assert_eq!(a.components[1], b.components[1]);
        let c = pilot_run_initial(&mesh, 50, 8).unwrap();
        assert!(a.components[0] != c.components[0], "different seed differs");
        assert!(a.all_finite());
    }

    #[test]
    fn pilot_draw_bounded() {
        let mesh = build_mesh(Domain::square(50.0), &[6, 6]).unwrap();
        let ic = pilot_run_initial(&mesh, 0, 3).unwrap();
        for comp in &ic.components {
            assert!(comp.iter().all(|&v| (0.0..0.15).contains(&v)));
        }
    }

    #[test]
    fn concat_layout_is_all_u_then_all_v() {
        let u = DVector::from_vec(vec![1.0, 2.0]);
        let v = DVector::from_vec(vec![3.0, 4.0]);
        let ic = InitialCondition::new(vec![u, v], Provenance::Exact);
        let w = ic.concat();
        assert_eq!(w.as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        let back = InitialCondition::from_concat(&w, 2, Provenance::Exact);
        assert_eq!(back.components[0].as_slice(), &[1.0, 2.0]);
        assert_eq!(back.components[1].as_slice(), &[3.0, 4.0]);
    }
}
