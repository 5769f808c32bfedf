use crate::advect::quadrature_transport_matrix;
use crate::error::Result;
use crate::geometry::Point;
use crate::linalg::CsrMatrix;
use crate::quadrature::seven_point_rule;

use super::strategy::{CompositeScheme, StepContext};

pub const NAME: &str = "lgq";

/// Composite term by the seven-point rule on each element, with feet taken
/// from the exact velocity. Rebuilt every step unless the velocity is steady.
#[derive(Default)]
pub struct LgQuadrature {
    cached: Option<CsrMatrix>,
    builds: usize,
}

impl CompositeScheme for LgQuadrature {
    fn name(&self) -> &str {
        NAME
    }

    fn transport(&mut self, ctx: &StepContext<'_>) -> Result<&CsrMatrix> {
        if self.cached.is_none() || !ctx.problem.steady_velocity {
            let velocity = &ctx.problem.velocity;
            let t = ctx.time;
            let u = |p: Point| velocity(p, t);
            self.cached = Some(quadrature_transport_matrix(ctx.space, &u, ctx.dt, &seven_point_rule()));
            self.builds += 1;
        }
        Ok(self.cached.as_ref().expect("filled above"))
    }

    fn builds(&self) -> usize {
        self.builds
    }
}
