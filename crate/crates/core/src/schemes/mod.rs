//! Time stepping for the convection-diffusion problem.
//!
//! Each step solves `(M/dt + nu A) phi^n = B phi^(n-1) / dt + F^n` with
//! homogeneous Dirichlet elimination. `B` comes from the selected
//! [`CompositeScheme`]; the left-hand side is shared by all strategies.

pub mod gslg;
pub mod lgq;
pub mod strategy;

use std::sync::Arc;
use std::time::Instant;

use crate::advect::{check_timestep, DEFAULT_D1};
use crate::error::{Error, Result};
use crate::fe_space::{interpolate, interpolate_velocity_p1, poisson_projection, FeFunction, FeSpace};
use crate::geometry::Point;
use crate::linalg::{
    apply_dirichlet, assemble_load, assemble_mass, assemble_stiffness, cg_solve, mask_vector, CgSettings,
    CsrMatrix,
};
use crate::mesh::{unit_disk_mesh, unit_square_mesh, Mesh};
use crate::quadrature::{map_point, rule_of_degree};

pub use strategy::{CompositeScheme, SchemeRegistry, StepContext};

pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(Point) -> Point + Send + Sync>;
pub type TimeFunction = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type VelocityField = Arc<dyn Fn(Point, f64) -> Point + Send + Sync>;

/// A scalar field of space and time.
#[derive(Clone)]
pub enum SpaceTimeField {
    Zero,
    General(Arc<dyn Fn(Point, f64) -> f64 + Send + Sync>),
    /// `sum_a c_a(t) g_a(x)`; lets the driver precompute the spatial parts.
    Separable(Vec<(TimeFunction, ScalarField)>),
}

impl SpaceTimeField {
    pub fn eval(&self, p: Point, t: f64) -> f64 {
        match self {
            SpaceTimeField::Zero => 0.0,
            SpaceTimeField::General(f) => f(p, t),
            SpaceTimeField::Separable(terms) => terms.iter().map(|(c, g)| c(t) * g(p)).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    UnitSquare,
    UnitDisk,
}

impl Domain {
    pub fn mesh(self, n: usize) -> Result<Mesh> {
        match self {
            Domain::UnitSquare => unit_square_mesh(n),
            Domain::UnitDisk => unit_disk_mesh(n),
        }
    }

    /// Mesh size used by the time-step rules: `1/N` on the square, `2 pi/N`
    /// on the disk.
    pub fn nominal_h(self, n: usize) -> f64 {
        match self {
            Domain::UnitSquare => 1.0 / n as f64,
            Domain::UnitDisk => 2.0 * std::f64::consts::PI / n as f64,
        }
    }
}

/// Continuous problem data.
#[derive(Clone)]
pub struct ProblemSpec {
    pub domain: Domain,
    pub t_final: f64,
    pub nu: f64,
    pub velocity: VelocityField,
    /// The velocity does not depend on time; strategies may reuse operators.
    pub steady_velocity: bool,
    pub forcing: SpaceTimeField,
    pub phi0: ScalarField,
    pub phi0_grad: Option<VectorField>,
    pub exact: Option<SpaceTimeField>,
}

#[derive(Debug, Clone)]
pub struct SchemeConfig {
    pub scheme: String,
    pub degree: usize,
    pub n: usize,
    pub dt: f64,
    pub d1: f64,
    pub cg: CgSettings,
    pub data_rule_degree: usize,
}

impl SchemeConfig {
    pub fn new(scheme: &str, degree: usize, n: usize, dt: f64) -> Self {
        SchemeConfig {
            scheme: scheme.to_string(),
            degree,
            n,
            dt,
            d1: DEFAULT_D1,
            cg: CgSettings::default(),
            data_rule_degree: 6,
        }
    }
}

/// `floor(T/dt)`, tolerant of `T/dt` landing a few ulps below an integer.
pub fn number_of_steps(t_final: f64, dt: f64) -> usize {
    (t_final / dt * (1.0 + 1e-12)).floor() as usize
}

/// Running maxima behind the relative errors `E_X`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErrorAccumulator {
    pub diff_l2: f64,
    pub ref_l2: f64,
    pub diff_h1: f64,
    pub ref_h1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSummary {
    pub e_l2: f64,
    pub e_h1: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn relative(diff: f64, reference: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else if reference == 0.0 {
        f64::INFINITY
    } else {
        diff / reference
    }
}

impl ErrorAccumulator {
    /// Folds in one time level: `exact` holds `Pi_h^(k) phi_e(t^n)`.
    pub fn record(&mut self, mass: &CsrMatrix, stiffness: &CsrMatrix, exact: &[f64], phi: &[f64]) {
        let ref_l2 = mass.quadratic_form(exact).max(0.0).sqrt();
        let ref_h1 = stiffness.quadratic_form(exact).max(0.0).sqrt();
        self.record_with_reference(mass, stiffness, exact, phi, ref_l2, ref_h1);
    }

    /// As [`record`](Self::record) with the norms of `exact` supplied.
    pub fn record_with_reference(
        &mut self,
        mass: &CsrMatrix,
        stiffness: &CsrMatrix,
        exact: &[f64],
        phi: &[f64],
        ref_l2: f64,
        ref_h1: f64,
    ) {
        let d: Vec<f64> = exact.iter().zip(phi).map(|(a, b)| a - b).collect();
        self.diff_l2 = self.diff_l2.max(mass.quadratic_form(&d).max(0.0).sqrt());
        self.diff_h1 = self.diff_h1.max(stiffness.quadratic_form(&d).max(0.0).sqrt());
        self.ref_l2 = self.ref_l2.max(ref_l2);
        self.ref_h1 = self.ref_h1.max(ref_h1);
    }

    pub fn summary(&self) -> ErrorSummary {
        ErrorSummary {
            e_l2: relative(self.diff_l2, self.ref_l2),
            e_h1: relative(self.diff_h1, self.ref_h1),
        }
    }
}

/// Both sides of the discrete stability estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityLedger {
    /// `max_n ||phi^n|| + sqrt(nu) (dt sum_(n>=1) ||grad phi^n||^2)^(1/2)`.
    pub lhs: f64,
    /// `||phi^0|| + (dt sum_(n>=1) ||f^n||^2)^(1/2)`.
    pub rhs: f64,
    /// `lhs / rhs`, the empirical constant of the estimate.
    pub ratio: f64,
    /// `max_n (||phi^n||^2 + 2 nu dt sum_(j<=n) ||grad phi^j||^2)^(1/2) / rhs`;
    /// at most one for pure diffusion.
    pub energy_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuardSummary {
    pub steps_checked: usize,
    pub max_product: f64,
    pub min_jacobian: f64,
    pub max_jacobian: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CgStats {
    pub solves: usize,
    pub total_iterations: usize,
    pub max_iterations: usize,
}

impl CgStats {
    pub fn mean_iterations(&self) -> f64 {
        if self.solves == 0 {
            0.0
        } else {
            self.total_iterations as f64 / self.solves as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub scheme: String,
    pub degree: usize,
    pub n: usize,
    pub h: f64,
    pub h_max: f64,
    pub dt: f64,
    pub nu: f64,
    pub planned_steps: usize,
    /// Steps actually taken; smaller than planned after divergence.
    pub steps: usize,
    /// `||phi_h^n||` for `n = 0..=steps`.
    pub l2_norms: Vec<f64>,
    /// `||grad phi_h^n||` for `n = 0..=steps`.
    pub h1_seminorms: Vec<f64>,
    /// `||f^n||` for `n = 1..=steps`.
    pub forcing_norms: Vec<f64>,
    pub initial: FeFunction,
    pub final_solution: FeFunction,
    pub errors: Option<ErrorSummary>,
    pub ledger: StabilityLedger,
    pub diverged: bool,
    pub guard: GuardSummary,
    pub cg: CgStats,
    pub operator_builds: usize,
    pub runtime_s: f64,
}

/// Threshold factor for flagging a run as diverged.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// Evaluates a ledger from the recorded norms.
pub fn stability_ledger(
    l2_norms: &[f64],
    h1_seminorms: &[f64],
    forcing_norms: &[f64],
    nu: f64,
    dt: f64,
) -> StabilityLedger {
    let max_l2 = l2_norms.iter().copied().fold(0.0, f64::max);
    let grad_sq: f64 = h1_seminorms.iter().skip(1).map(|g| g * g).sum();
    let f_sq: f64 = forcing_norms.iter().map(|f| f * f).sum();
    let lhs = max_l2 + (nu * dt * grad_sq).sqrt();
    let rhs = l2_norms.first().copied().unwrap_or(0.0) + (dt * f_sq).sqrt();
    let mut energy_max: f64 = 0.0;
    let mut dissipated = 0.0;
    for (n, l2) in l2_norms.iter().enumerate() {
        if n > 0 {
            dissipated += 2.0 * nu * dt * h1_seminorms[n].powi(2);
        }
        energy_max = energy_max.max(l2 * l2 + dissipated);
    }
    StabilityLedger {
        lhs,
        rhs,
        ratio: lhs / rhs,
        energy_ratio: energy_max.sqrt() / rhs,
    }
}

/// Source term data reduced to what one step needs.
enum ForcingData {
    Zero,
    Separable {
        times: Vec<TimeFunction>,
        loads: Vec<Vec<f64>>,
        gram: Vec<Vec<f64>>,
    },
    General,
}

/// `integral g_a g_b` over the mesh at the data rule.
fn gram_matrix(space: &FeSpace, fields: &[ScalarField], degree: usize) -> Result<Vec<Vec<f64>>> {
    let rule = rule_of_degree(degree)?;
    let m = fields.len();
    let mut g = vec![vec![0.0; m]; m];
    let mut vals = vec![0.0; m];
    for e in 0..space.mesh.num_elements() {
        let tri = space.mesh.triangle(e);
        let area = space.mesh.area(e);
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let p = map_point(&tri, l);
            for (v, f) in vals.iter_mut().zip(fields) {
                *v = f(p);
            }
            for a in 0..m {
                for b in 0..m {
                    g[a][b] += area * w * vals[a] * vals[b];
                }
            }
        }
    }
    Ok(g)
}

fn l2_norm_of(space: &FeSpace, f: impl Fn(Point) -> f64, degree: usize) -> Result<f64> {
    let rule = rule_of_degree(degree)?;
    let mut acc = 0.0;
    for e in 0..space.mesh.num_elements() {
        let tri = space.mesh.triangle(e);
        let area = space.mesh.area(e);
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            acc += area * w * f(map_point(&tri, l)).powi(2);
        }
    }
    Ok(acc.sqrt())
}

impl ForcingData {
    fn new(space: &FeSpace, field: &SpaceTimeField, degree: usize) -> Result<Self> {
        Ok(match field {
            SpaceTimeField::Zero => ForcingData::Zero,
            SpaceTimeField::General(_) => ForcingData::General,
            SpaceTimeField::Separable(terms) => {
                let spatial: Vec<ScalarField> = terms.iter().map(|(_, g)| Arc::clone(g)).collect();
                ForcingData::Separable {
                    times: terms.iter().map(|(c, _)| Arc::clone(c)).collect(),
                    loads: spatial
                        .iter()
                        .map(|g| assemble_load(space, |p| g(p), degree))
                        .collect::<Result<_>>()?,
                    gram: gram_matrix(space, &spatial, degree)?,
                }
            }
        })
    }

    /// Load vector of `f(., t)` and `||f(., t)||`.
    fn at(&self, space: &FeSpace, field: &SpaceTimeField, t: f64, degree: usize) -> Result<(Vec<f64>, f64)> {
        let n = space.ndofs();
        match self {
            ForcingData::Zero => Ok((vec![0.0; n], 0.0)),
            ForcingData::General => {
                let load = assemble_load(space, |p| field.eval(p, t), degree)?;
                let norm = l2_norm_of(space, |p| field.eval(p, t), degree)?;
                Ok((load, norm))
            }
            ForcingData::Separable { times, loads, gram } => {
                let c: Vec<f64> = times.iter().map(|f| f(t)).collect();
                let mut load = vec![0.0; n];
                for (ca, la) in c.iter().zip(loads) {
                    for (o, v) in load.iter_mut().zip(la) {
                        *o += ca * v;
                    }
                }
                let mut sq = 0.0;
                for a in 0..c.len() {
                    for b in 0..c.len() {
                        sq += c[a] * c[b] * gram[a][b];
                    }
                }
                Ok((load, sq.max(0.0).sqrt()))
            }
        }
    }
}

/// Nodal interpolants of the exact solution, precomputed where separable.
enum ExactData {
    Separable {
        times: Vec<TimeFunction>,
        parts: Vec<Vec<f64>>,
        /// `P_a^T M P_b` and `P_a^T A P_b` for the interpolated parts.
        mass_gram: Vec<Vec<f64>>,
        stiffness_gram: Vec<Vec<f64>>,
    },
    General(Arc<dyn Fn(Point, f64) -> f64 + Send + Sync>),
    Zero,
}

impl ExactData {
    fn new(space: &Arc<FeSpace>, field: &SpaceTimeField, mass: &CsrMatrix, stiffness: &CsrMatrix) -> Self {
        match field {
            SpaceTimeField::Zero => ExactData::Zero,
            SpaceTimeField::General(f) => ExactData::General(Arc::clone(f)),
            SpaceTimeField::Separable(terms) => {
                let parts: Vec<Vec<f64>> = terms
                    .iter()
                    .map(|(_, g)| interpolate(space, |p| g(p)).coeffs)
                    .collect();
                let gram = |m: &CsrMatrix| {
                    let images: Vec<Vec<f64>> = parts.iter().map(|p| m.mul_vec(p)).collect();
                    parts
                        .iter()
                        .map(|a| images.iter().map(|mb| dot(a, mb)).collect())
                        .collect()
                };
                ExactData::Separable {
                    times: terms.iter().map(|(c, _)| Arc::clone(c)).collect(),
                    mass_gram: gram(mass),
                    stiffness_gram: gram(stiffness),
                    parts,
                }
            }
        }
    }

    /// `||Pi_h phi_e(t)||` in the mass and stiffness norms.
    fn reference_norms(&self, t: f64, interpolant: &[f64], mass: &CsrMatrix, stiffness: &CsrMatrix) -> (f64, f64) {
        match self {
            ExactData::Separable {
                times,
                mass_gram,
                stiffness_gram,
                ..
            } => {
                let c: Vec<f64> = times.iter().map(|f| f(t)).collect();
                let form = |g: &Vec<Vec<f64>>| {
                    let mut acc = 0.0;
                    for a in 0..c.len() {
                        for b in 0..c.len() {
                            acc += c[a] * c[b] * g[a][b];
                        }
                    }
                    acc.max(0.0).sqrt()
                };
                (form(mass_gram), form(stiffness_gram))
            }
            _ => (
                mass.quadratic_form(interpolant).max(0.0).sqrt(),
                stiffness.quadratic_form(interpolant).max(0.0).sqrt(),
            ),
        }
    }

    fn interpolant(&self, space: &Arc<FeSpace>, t: f64) -> Vec<f64> {
        match self {
            ExactData::Zero => vec![0.0; space.ndofs()],
            ExactData::General(f) => interpolate(space, |p| f(p, t)).coeffs,
            ExactData::Separable { times, parts, .. } => {
                let mut out = vec![0.0; space.ndofs()];
                for (c, part) in times.iter().zip(parts) {
                    let ct = c(t);
                    for (o, v) in out.iter_mut().zip(part) {
                        *o += ct * v;
                    }
                }
                out
            }
        }
    }
}

fn validate(problem: &ProblemSpec, config: &SchemeConfig) -> Result<()> {
    let bad = |m: String| Err(Error::InvalidArgument(m));
    if !(problem.t_final > 0.0) {
        return bad(format!("final time must be positive, got {}", problem.t_final));
    }
    if !(problem.nu > 0.0) {
        return bad(format!("nu must be positive, got {}", problem.nu));
    }
    if !(config.dt > 0.0) || !config.dt.is_finite() {
        return bad(format!("dt must be positive, got {}", config.dt));
    }
    if config.dt > problem.t_final {
        return bad(format!("dt = {} exceeds the final time {}", config.dt, problem.t_final));
    }
    if !(1..=2).contains(&config.degree) {
        return bad(format!("degree must be 1 or 2, got {}", config.degree));
    }
    Ok(())
}

/// Runs the scheme named in `config`, looked up in the builtin registry.
pub fn run(problem: &ProblemSpec, config: &SchemeConfig) -> Result<RunReport> {
    let scheme = SchemeRegistry::with_builtins().create(&config.scheme)?;
    run_with(problem, config, scheme)
}

/// Runs with an explicit strategy instance on the problem's own mesh.
pub fn run_with(problem: &ProblemSpec, config: &SchemeConfig, scheme: Box<dyn CompositeScheme>) -> Result<RunReport> {
    validate(problem, config)?;
    let mesh = Arc::new(problem.domain.mesh(config.n)?);
    run_on_mesh(problem, config, mesh, scheme)
}

/// Runs on a caller-supplied mesh; `config.n` is only used for reporting.
pub fn run_on_mesh(
    problem: &ProblemSpec,
    config: &SchemeConfig,
    mesh: Arc<Mesh>,
    mut scheme: Box<dyn CompositeScheme>,
) -> Result<RunReport> {
    validate(problem, config)?;
    let started = Instant::now();
    let space = FeSpace::build(Arc::clone(&mesh), config.degree)?;
    let p1 = if config.degree == 1 {
        Arc::clone(&space)
    } else {
        FeSpace::build(Arc::clone(&mesh), 1)?
    };
    let dt = config.dt;
    let steps = number_of_steps(problem.t_final, dt);
    let ndofs = space.ndofs();

    let mass = assemble_mass(&space);
    let stiffness = assemble_stiffness(&space);
    let system = mass.linear_combination(1.0 / dt, &stiffness, problem.nu);
    let (system, _) = apply_dirichlet(&system, &vec![0.0; ndofs], &space.dirichlet_mask);

    let phi0 = {
        let g = &problem.phi0;
        let grad = problem.phi0_grad.as_ref();
        let grad_ref: Option<&dyn Fn(Point) -> Point> = grad.map(|f| f.as_ref() as &dyn Fn(Point) -> Point);
        poisson_projection(&space, &|p| g(p), grad_ref, config.data_rule_degree, &config.cg)?
    };
    let forcing = ForcingData::new(&space, &problem.forcing, config.data_rule_degree)?;
    let exact = problem
        .exact
        .as_ref()
        .map(|f| ExactData::new(&space, f, &mass, &stiffness));

    let norm_l2 = |c: &[f64]| mass.quadratic_form(c).max(0.0).sqrt();
    let norm_h1 = |c: &[f64]| stiffness.quadratic_form(c).max(0.0).sqrt();

    let mut phi = phi0.coeffs.clone();
    let mut l2_norms = vec![norm_l2(&phi)];
    let mut h1_seminorms = vec![norm_h1(&phi)];
    let mut forcing_norms = Vec::with_capacity(steps);
    let mut errors = ErrorAccumulator::default();
    let record = |errors: &mut ErrorAccumulator, ex: &ExactData, t: f64, phi: &[f64]| {
        let pi = ex.interpolant(&space, t);
        let (r2, r1) = ex.reference_norms(t, &pi, &mass, &stiffness);
        errors.record_with_reference(&mass, &stiffness, &pi, phi, r2, r1);
    };
    if let Some(ex) = &exact {
        record(&mut errors, ex, 0.0, &phi);
    }
    let threshold = DIVERGENCE_FACTOR * (l2_norms[0] + 1.0);
    let mut guard = GuardSummary {
        steps_checked: 0,
        max_product: 0.0,
        min_jacobian: f64::INFINITY,
        max_jacobian: f64::NEG_INFINITY,
    };
    let mut cg = CgStats::default();
    let mut diverged = false;
    let mut taken = 0;
    let mut rhs = vec![0.0; ndofs];
    let mut phi_older: Option<Vec<f64>> = None;

    for n in 1..=steps {
        let t = n as f64 * dt;
        let velocity = &problem.velocity;
        let u_h = interpolate_velocity_p1(&p1, |p| velocity(p, t))?;
        let report = check_timestep(&u_h, dt, config.d1)?;
        guard.steps_checked += 1;
        guard.max_product = guard.max_product.max(report.product);
        guard.min_jacobian = guard.min_jacobian.min(report.min_jacobian);
        guard.max_jacobian = guard.max_jacobian.max(report.max_jacobian);

        let ctx = StepContext {
            space: &space,
            problem,
            velocity_p1: &u_h,
            guard: report,
            time: t,
            dt,
        };
        let transport = scheme.transport(&ctx)?;
        transport.mul_vec_into(&phi, &mut rhs);
        let (load, f_norm) = forcing.at(&space, &problem.forcing, t, config.data_rule_degree)?;
        for (r, l) in rhs.iter_mut().zip(&load) {
            *r = *r / dt + l;
        }
        mask_vector(&mut rhs, &space.dirichlet_mask);
        // start CG from the linear extrapolation in time
        let guess: Vec<f64> = match &phi_older {
            Some(old) => phi.iter().zip(old).map(|(a, b)| 2.0 * a - b).collect(),
            None => phi.clone(),
        };
        let solved = cg_solve(&system, &rhs, &guess, &config.cg)?;
        cg.solves += 1;
        cg.total_iterations += solved.iterations;
        cg.max_iterations = cg.max_iterations.max(solved.iterations);
        phi_older = Some(std::mem::replace(&mut phi, solved.x));
        taken = n;

        let l2 = norm_l2(&phi);
        l2_norms.push(l2);
        h1_seminorms.push(norm_h1(&phi));
        forcing_norms.push(f_norm);
        if let Some(ex) = &exact {
            record(&mut errors, ex, t, &phi);
        }
        if !(l2 <= threshold) {
            diverged = true;
            break;
        }
    }

    let ledger = stability_ledger(&l2_norms, &h1_seminorms, &forcing_norms, problem.nu, dt);
    Ok(RunReport {
        scheme: scheme.name().to_string(),
        degree: config.degree,
        n: config.n,
        h: problem.domain.nominal_h(config.n),
        h_max: mesh.h_max,
        dt,
        nu: problem.nu,
        planned_steps: steps,
        steps: taken,
        l2_norms,
        h1_seminorms,
        forcing_norms,
        initial: phi0,
        final_solution: FeFunction::new(Arc::clone(&space), phi)?,
        errors: exact.map(|_| errors.summary()),
        ledger,
        diverged,
        guard,
        cg,
        operator_builds: scheme.builds(),
        runtime_s: started.elapsed().as_secs_f64(),
    })
}
