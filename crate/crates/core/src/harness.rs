//! Built-in test problems, time-step rules, convergence sweeps and CSV output.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::schemes::{run, Domain, ProblemSpec, RunReport, SchemeConfig, SpaceTimeField};

pub const GAUSS_SIGMA: f64 = 0.01;
pub const GAUSS_CENTER: Point = Point { x: 0.25, y: 0.0 };

/// Step used by the finite-difference checks of the analytic data.
pub const FD_CHECK_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example {
    /// Rotating Gaussian hill on the unit disk.
    GaussHill,
    /// Manufactured `cos(2 pi t) sin^2(pi x) sin(2 pi y)` on the unit square.
    SinSin,
}

impl Example {
    pub fn name(self) -> &'static str {
        match self {
            Example::GaussHill => "gauss-hill",
            Example::SinSin => "sinsin",
        }
    }

    pub fn domain(self) -> Domain {
        match self {
            Example::GaussHill => Domain::UnitDisk,
            Example::SinSin => Domain::UnitSquare,
        }
    }

    pub fn default_nu(self) -> f64 {
        match self {
            Example::GaussHill => 1e-5,
            Example::SinSin => 1e-2,
        }
    }

    pub fn t_final(self) -> f64 {
        match self {
            Example::GaussHill => 2.0 * PI,
            Example::SinSin => 1.0,
        }
    }

    /// Constant `c` of the rule `dt = c h^p`.
    pub fn dt_constant(self, rule: DtRule) -> f64 {
        match (self, rule) {
            (Example::GaussHill, DtRule::C1H) => 4.0 / (5.0 * PI),
            (Example::GaussHill, DtRule::C2H2) => 64.0 / (5.0 * PI * PI),
            (Example::GaussHill, DtRule::C3H2) => 128.0 / (5.0 * PI * PI),
            (Example::GaussHill, DtRule::C4H3) => 2048.0 / (5.0 * PI.powi(3)),
            (Example::SinSin, DtRule::C1H) => 0.125,
            (Example::SinSin, DtRule::C2H2) => 1.0,
            (Example::SinSin, DtRule::C3H2) => 1.0,
            (Example::SinSin, DtRule::C4H3) => 5.12,
        }
    }

    pub fn dt(self, rule: DtRule, n: usize) -> f64 {
        self.dt_constant(rule) * self.domain().nominal_h(n).powi(rule.exponent())
    }

    pub fn problem(self, nu: f64) -> ProblemSpec {
        match self {
            Example::GaussHill => gauss_hill_problem(nu),
            Example::SinSin => sinsin_problem(nu),
        }
    }
}

impl fmt::Display for Example {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Example {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gauss-hill" => Ok(Example::GaussHill),
            "sinsin" => Ok(Example::SinSin),
            _ => Err(Error::InvalidArgument(format!("unknown example {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtRule {
    C1H,
    C2H2,
    C3H2,
    C4H3,
}

impl DtRule {
    pub fn exponent(self) -> i32 {
        match self {
            DtRule::C1H => 1,
            DtRule::C2H2 | DtRule::C3H2 => 2,
            DtRule::C4H3 => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DtRule::C1H => "c1h",
            DtRule::C2H2 => "c2h2",
            DtRule::C3H2 => "c3h2",
            DtRule::C4H3 => "c4h3",
        }
    }
}

impl FromStr for DtRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "c1h" => Ok(DtRule::C1H),
            "c2h2" => Ok(DtRule::C2H2),
            "c3h2" => Ok(DtRule::C3H2),
            "c4h3" => Ok(DtRule::C4H3),
            _ => Err(Error::InvalidArgument(format!("unknown dt rule {s:?}"))),
        }
    }
}

/// Rotated coordinates `(x cos t + y sin t, -x sin t + y cos t)`.
fn rotate_back(p: Point, t: f64) -> Point {
    let (s, c) = t.sin_cos();
    Point::new(p.x * c + p.y * s, -p.x * s + p.y * c)
}

/// The rotating Gaussian hill.
pub fn gaussian_hill_exact(p: Point, t: f64, nu: f64) -> f64 {
    let width = GAUSS_SIGMA + 4.0 * nu * t;
    let d = rotate_back(p, t) - GAUSS_CENTER;
    GAUSS_SIGMA / width * (-(d.dot(d)) / width).exp()
}

fn gauss_hill_problem(nu: f64) -> ProblemSpec {
    ProblemSpec {
        domain: Domain::UnitDisk,
        t_final: 2.0 * PI,
        nu,
        velocity: Arc::new(|p: Point, _t| Point::new(-p.y, p.x)),
        steady_velocity: true,
        forcing: SpaceTimeField::Zero,
        phi0: Arc::new(move |p| gaussian_hill_exact(p, 0.0, nu)),
        phi0_grad: Some(Arc::new(move |p: Point| {
            let v = gaussian_hill_exact(p, 0.0, nu);
            (p - GAUSS_CENTER) * (-2.0 * v / GAUSS_SIGMA)
        })),
        exact: Some(SpaceTimeField::General(Arc::new(move |p, t| gaussian_hill_exact(p, t, nu)))),
    }
}

pub fn sinsin_velocity(p: Point) -> Point {
    let s = (PI * p.x).sin() * (PI * p.y).sin();
    Point::new(s, s)
}

/// Spatial factor `sin^2(pi x) sin(2 pi y)` of the manufactured solution.
pub fn sinsin_space(p: Point) -> f64 {
    (PI * p.x).sin().powi(2) * (2.0 * PI * p.y).sin()
}

pub fn sinsin_space_grad(p: Point) -> Point {
    Point::new(
        PI * (2.0 * PI * p.x).sin() * (2.0 * PI * p.y).sin(),
        2.0 * PI * (PI * p.x).sin().powi(2) * (2.0 * PI * p.y).cos(),
    )
}

pub fn sinsin_space_laplacian(p: Point) -> f64 {
    let sy = (2.0 * PI * p.y).sin();
    2.0 * PI * PI * (2.0 * PI * p.x).cos() * sy - 4.0 * PI * PI * (PI * p.x).sin().powi(2) * sy
}

pub fn sinsin_exact(p: Point, t: f64) -> f64 {
    (2.0 * PI * t).cos() * sinsin_space(p)
}

/// Analytic source `d_t phi_e + u . grad phi_e - nu Lap phi_e`.
pub fn sinsin_forcing(p: Point, t: f64, nu: f64) -> f64 {
    let transport = sinsin_velocity(p).dot(sinsin_space_grad(p)) - nu * sinsin_space_laplacian(p);
    -2.0 * PI * (2.0 * PI * t).sin() * sinsin_space(p) + (2.0 * PI * t).cos() * transport
}

fn sinsin_problem(nu: f64) -> ProblemSpec {
    let transport = move |p: Point| sinsin_velocity(p).dot(sinsin_space_grad(p)) - nu * sinsin_space_laplacian(p);
    ProblemSpec {
        domain: Domain::UnitSquare,
        t_final: 1.0,
        nu,
        velocity: Arc::new(|p, _t| sinsin_velocity(p)),
        steady_velocity: true,
        forcing: SpaceTimeField::Separable(vec![
            (Arc::new(|t: f64| -2.0 * PI * (2.0 * PI * t).sin()), Arc::new(sinsin_space)),
            (Arc::new(|t: f64| (2.0 * PI * t).cos()), Arc::new(transport)),
        ]),
        phi0: Arc::new(sinsin_space),
        phi0_grad: Some(Arc::new(sinsin_space_grad)),
        exact: Some(SpaceTimeField::Separable(vec![(
            Arc::new(|t: f64| (2.0 * PI * t).cos()),
            Arc::new(sinsin_space),
        )])),
    }
}

/// Central-difference `d_t phi + u . grad phi - nu Lap phi`.
fn fd_operator(phi: &dyn Fn(Point, f64) -> f64, u: Point, p: Point, t: f64, nu: f64, d: f64) -> f64 {
    let ex = Point::new(d, 0.0);
    let ey = Point::new(0.0, d);
    let c = phi(p, t);
    let dt = (phi(p, t + d) - phi(p, t - d)) / (2.0 * d);
    let (xp, xm, yp, ym) = (phi(p + ex, t), phi(p - ex, t), phi(p + ey, t), phi(p - ey, t));
    let grad = Point::new((xp - xm) / (2.0 * d), (yp - ym) / (2.0 * d));
    let lap = (xp + xm + yp + ym - 4.0 * c) / (d * d);
    dt + u.dot(grad) - nu * lap
}

/// Largest gap between the analytic source and a finite-difference
/// reconstruction of the operator applied to the exact solution.
pub fn verify_forcing(nu: f64, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let p = Point::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        let t = rng.gen_range(0.0..1.0);
        let fd = fd_operator(&sinsin_exact, sinsin_velocity(p), p, t, nu, FD_CHECK_STEP);
        worst = worst.max((fd - sinsin_forcing(p, t, nu)).abs());
    }
    worst
}

/// Largest finite-difference residual of the source-free equation for the
/// Gaussian hill at random points of the open disk and times in `[0, 2 pi]`.
pub fn gaussian_hill_residual(nu: f64, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = move |p: Point, t: f64| gaussian_hill_exact(p, t, nu);
    let mut worst: f64 = 0.0;
    let mut taken = 0;
    while taken < samples {
        let p = Point::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if p.norm() >= 1.0 {
            continue;
        }
        let t = rng.gen_range(0.0..2.0 * PI);
        let u = Point::new(-p.y, p.x);
        worst = worst.max(fd_operator(&phi, u, p, t, nu, FD_CHECK_STEP).abs());
        taken += 1;
    }
    worst
}

/// How the time increment is chosen per mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtChoice {
    Rule(DtRule),
    Fixed(f64),
}

impl DtChoice {
    pub fn dt(self, example: Example, n: usize) -> f64 {
        match self {
            DtChoice::Rule(r) => example.dt(r, n),
            DtChoice::Fixed(dt) => dt,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub example: Example,
    pub scheme: String,
    pub degree: usize,
    pub n_list: Vec<usize>,
    pub dt: DtChoice,
    pub nu: f64,
    pub d1: f64,
}

impl SweepPlan {
    pub fn new(example: Example, scheme: &str, degree: usize, n_list: &[usize], dt: DtChoice) -> Self {
        SweepPlan {
            example,
            scheme: scheme.to_string(),
            degree,
            n_list: n_list.to_vec(),
            dt,
            nu: example.default_nu(),
            d1: crate::advect::DEFAULT_D1,
        }
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }

    pub fn config(&self, n: usize) -> SchemeConfig {
        let mut c = SchemeConfig::new(&self.scheme, self.degree, n, self.dt.dt(self.example, n));
        c.d1 = self.d1;
        c
    }

    /// Sweeps need at least two resolutions, each double the previous.
    pub fn validate(&self) -> Result<()> {
        if self.n_list.len() < 2 {
            return Err(Error::InvalidArgument("a sweep needs at least two values of N".into()));
        }
        if self.n_list.windows(2).any(|w| w[1] != 2 * w[0]) {
            return Err(Error::InvalidArgument(format!(
                "N values must double at each step, got {:?}",
                self.n_list
            )));
        }
        Ok(())
    }
}

/// `log2(E(N)/E(2N))` between consecutive entries; `None` for the first entry
/// and wherever either error is zero or not finite.
pub fn observed_orders(errors: &[f64]) -> Vec<Option<f64>> {
    let mut out = vec![None];
    for w in errors.windows(2) {
        let ok = |e: f64| e.is_finite() && e > 0.0;
        out.push((ok(w[0]) && ok(w[1])).then(|| (w[0] / w[1]).log2()));
    }
    out.truncate(errors.len());
    out
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub example: Example,
    pub report: RunReport,
    pub order_l2: Option<f64>,
    pub order_h1: Option<f64>,
}

impl SweepRow {
    pub fn e_l2(&self) -> f64 {
        self.report.errors.map_or(f64::NAN, |e| e.e_l2)
    }

    pub fn e_h1(&self) -> f64 {
        self.report.errors.map_or(f64::NAN, |e| e.e_h1)
    }

    pub fn csv(&self) -> String {
        let r = &self.report;
        let order = |o: Option<f64>| o.map(|v| format!("{v:.4}")).unwrap_or_default();
        format!(
            "{},{},{},{},{:.10e},{:.10e},{:.6e},{},{:.6e},{:.6e},{},{},{:.6e},{},{:.2},{:.3}",
            self.example.name(),
            r.scheme,
            r.degree,
            r.n,
            r.h,
            r.dt,
            r.nu,
            r.steps,
            self.e_l2(),
            self.e_h1(),
            order(self.order_l2),
            order(self.order_h1),
            r.ledger.ratio,
            r.diverged,
            r.cg.mean_iterations(),
            r.runtime_s,
        )
    }
}

pub const CSV_HEADER: &str = "example,scheme,degree,N,h,dt,nu,steps,E_L2,E_H1,order_L2,order_H1,stability_ratio,diverged,cg_iters_mean,runtime_s";

/// Runs one configuration of an example.
pub fn run_single(example: Example, config: &SchemeConfig, nu: f64) -> Result<SweepRow> {
    let report = run(&example.problem(nu), config)?;
    Ok(SweepRow {
        example,
        report,
        order_l2: None,
        order_h1: None,
    })
}

/// Runs every resolution of the plan, `jobs` at a time, and fills in orders.
pub fn run_sweep(plan: &SweepPlan, jobs: usize) -> Result<Vec<SweepRow>> {
    plan.validate()?;
    let problem = plan.example.problem(plan.nu);
    let one = |n: &usize| run(&problem, &plan.config(*n));
    let reports: Vec<RunReport> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(|| plan.n_list.par_iter().map(one).collect::<Result<_>>())?
    } else {
        plan.n_list.iter().map(one).collect::<Result<_>>()?
    };
    let errs = |f: fn(&RunReport) -> f64| reports.iter().map(f).collect::<Vec<_>>();
    let o2 = observed_orders(&errs(|r| r.errors.map_or(f64::NAN, |e| e.e_l2)));
    let o1 = observed_orders(&errs(|r| r.errors.map_or(f64::NAN, |e| e.e_h1)));
    Ok(reports
        .into_iter()
        .zip(o2.into_iter().zip(o1))
        .map(|(report, (order_l2, order_h1))| SweepRow {
            example: plan.example,
            report,
            order_l2,
            order_h1,
        })
        .collect())
}
