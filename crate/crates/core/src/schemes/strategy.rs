//! Composite-term strategies and the name-keyed registry used to pick one at
//! run time.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::advect::TimestepReport;
use crate::error::{Error, Result};
use crate::fe_space::{FeFunction, FeSpace};
use crate::linalg::CsrMatrix;

use super::ProblemSpec;

/// Everything a strategy may look at when forming the operator for one step.
pub struct StepContext<'a> {
    pub space: &'a Arc<FeSpace>,
    pub problem: &'a ProblemSpec,
    /// `Pi_h^(1) u(., t^n)`, already accepted by the time-step guard.
    pub velocity_p1: &'a [FeFunction; 2],
    pub guard: TimestepReport,
    pub time: f64,
    pub dt: f64,
}

/// A way of evaluating `(phi_prev o X, psi_h)`.
///
/// The term is linear in `phi_prev`, so a strategy hands back the sparse
/// operator `B` with `(B c)_i = (phi_c o X, phi_i)`; the driver applies it to
/// the previous solution. Strategies may cache `B` between steps.
pub trait CompositeScheme: Send {
    fn name(&self) -> &str;

    fn transport(&mut self, ctx: &StepContext<'_>) -> Result<&CsrMatrix>;

    /// Number of times the operator has been (re)built.
    fn builds(&self) -> usize;
}

type Factory = Arc<dyn Fn() -> Box<dyn CompositeScheme> + Send + Sync>;

#[derive(Clone)]
struct Entry {
    description: String,
    factory: Factory,
}

/// Strategies registered by name.
#[derive(Clone, Default)]
pub struct SchemeRegistry {
    entries: BTreeMap<String, Entry>,
}

impl SchemeRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry holding `gslg` and `lgq`.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(
            super::gslg::NAME,
            "exact integration over clipped pieces with the linearized velocity",
            || Box::new(super::gslg::Gslg::default()),
        )
        .expect("fresh registry");
        r.register(
            super::lgq::NAME,
            "seven-point degree-5 quadrature at the exact characteristic feet",
            || Box::new(super::lgq::LgQuadrature::default()),
        )
        .expect("fresh registry");
        r
    }

    pub fn register(
        &mut self,
        name: &str,
        description: &str,
        factory: impl Fn() -> Box<dyn CompositeScheme> + Send + Sync + 'static,
    ) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::InvalidArgument(format!("scheme {name:?} already registered")));
        }
        self.entries.insert(
            name.to_string(),
            Entry {
                description: description.to_string(),
                factory: Arc::new(factory),
            },
        );
        Ok(())
    }

    pub fn create(&self, name: &str) -> Result<Box<dyn CompositeScheme>> {
        self.entries
            .get(name)
            .map(|e| (e.factory)())
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown scheme {name:?}; known: {}",
                    self.names().join(", ")
                ))
            })
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn description(&self, name: &str) -> Option<&str> {
        self.entries.get(name).map(|e| e.description.as_str())
    }
}
