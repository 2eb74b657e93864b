//! Best constants in `‖u‖² ≤ C‖∇u‖²` near a single cavity.

use serde::{Deserialize, Serialize};

use super::{assemble, CoefficientField, FeSpace, FemError};
use crate::geometry::{PerforationLayout, ReferenceShape};
use crate::mesh::{annulus, triangulate_loops, BoundaryLoop, BoundaryTag, Mesh};
use crate::sparse::smallest_eigenpair;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoincareVariant {
    /// `B_{εR3}(M_k) \ ω_k`: zero trace on the cavity, free on the outer circle.
    DirichletHole,
    /// `B_{εηR3}(M_k) \ ω_k`: no boundary conditions, constants removed.
    MeanFree,
    /// `B_{εηR3}(M_k) \ ω_k`: zero trace on the outer circle, free on the cavity.
    DirichletOuter,
}

/// Reciprocal of the smallest eigenvalue of the stiffness/mass pencil on the
/// free unknowns of `mesh`; with `mean_free` the constants are deflated.
pub fn poincare_constant(mesh: &Mesh, mean_free: bool) -> Result<f64, FemError> {
    let space = FeSpace::new(mesh);
    let asm = assemble(mesh, &CoefficientField::laplacian(), 0.0)?;
    let k = space.restrict_matrix(&asm.stiffness);
    let m = space.restrict_matrix(&asm.mass);
    let deflate = if mean_free { vec![vec![1.0; space.n_dofs]] } else { Vec::new() };
    // A negative shift keeps K − σM definite even when constants are in the kernel.
    let shift = if mean_free { -1e-3 / mesh.area().max(f64::MIN_POSITIVE) } else { 0.0 };
    let (lambda, _) = smallest_eigenpair(&k, &m, shift, &deflate, 1e-12, 20_000)?;
    Ok(1.0 / lambda)
}

/// Meshes the region of `variant` around cavity `k` and returns its best constant.
/// `resolution` is the number of divisions of the cavity boundary.
pub fn local_poincare_constant(
    layout: &PerforationLayout,
    k: usize,
    variant: PoincareVariant,
    resolution: usize,
) -> Result<f64, FemError> {
    let cavity = layout.cavities.get(k).ok_or_else(|| FemError::InvalidInput(format!("no cavity {k}")))?;
    let scale = layout.cavity_scale();
    let outer_radius = match variant {
        PoincareVariant::DirichletHole => layout.epsilon * layout.radii.r3,
        PoincareVariant::MeanFree | PoincareVariant::DirichletOuter => scale * layout.radii.r3,
    };
    let (hole_tag, outer_tag) = match variant {
        PoincareVariant::DirichletHole => (BoundaryTag::CavityDirichlet(k), BoundaryTag::OuterNeumann),
        PoincareVariant::MeanFree => (BoundaryTag::CavityNeumann(k), BoundaryTag::OuterNeumann),
        PoincareVariant::DirichletOuter => (BoundaryTag::CavityNeumann(k), BoundaryTag::OuterDirichlet),
    };
    let mesh = match &cavity.reference_shape {
        ReferenceShape::Disk { radius } => {
            annulus(cavity.center, scale * radius, outer_radius, resolution, None, hole_tag, outer_tag)?
        }
        ReferenceShape::Polygon { .. } => {
            let hole = layout.cavity_polygon(k, resolution);
            let perimeter: f64 = (0..hole.len()).map(|i| crate::dist(hole[i], hole[(i + 1) % hole.len()])).sum();
            let h = perimeter / resolution as f64;
            let outer_div = ((2.0 * std::f64::consts::PI * outer_radius / h).ceil() as usize).max(32);
            let loops = [
                BoundaryLoop::circle(cavity.center, outer_radius, outer_div, outer_tag),
                BoundaryLoop { points: hole, tag: hole_tag, circle: None },
            ];
            triangulate_loops(&loops, 2.0 * h)?
        }
    };
    poincare_constant(&mesh, variant == PoincareVariant::MeanFree)
}
