use crate::advect::{decompose, exact_transport_matrix, CharMap};
use crate::error::Result;
use crate::linalg::CsrMatrix;
use crate::quadrature::PolygonSplit;

use super::strategy::{CompositeScheme, StepContext};

pub const NAME: &str = "gslg";

/// Exact composite term with the piecewise-linear velocity.
///
/// The decomposition is redone only when `Pi_h^(1) u` changes between steps.
#[derive(Default)]
pub struct Gslg {
    cached: Option<(Vec<f64>, Vec<f64>, CsrMatrix)>,
    builds: usize,
}

impl CompositeScheme for Gslg {
    fn name(&self) -> &str {
        NAME
    }

    fn transport(&mut self, ctx: &StepContext<'_>) -> Result<&CsrMatrix> {
        let [ux, uy] = ctx.velocity_p1;
        let stale = match &self.cached {
            Some((cx, cy, _)) => *cx != ux.coeffs || *cy != uy.coeffs,
            None => true,
        };
        if stale {
            let map = CharMap::from_checked(ctx.velocity_p1.clone(), ctx.dt, ctx.guard);
            let decomp = decompose(&ctx.space.mesh, &map)?;
            let b = exact_transport_matrix(&decomp, ctx.space, PolygonSplit::CentroidFan);
            self.cached = Some((ux.coeffs.clone(), uy.coeffs.clone(), b));
            self.builds += 1;
        }
        Ok(&self.cached.as_ref().expect("filled above").2)
    }

    fn builds(&self) -> usize {
        self.builds
    }
}
