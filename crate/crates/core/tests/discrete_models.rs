//! Mesh-discretization integration checks: a triangulated sphere product
//! must reproduce the closed-form constants of the smooth model within
//! discretization accuracy, while the structural identities (operator
//! symmetry, topological closure, conformal invariance of the total
//! curvature) hold to rounding because they are exact in the discrete
//! calculus itself.

use nalgebra::DVector;
use once_cell::sync::Lazy;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qcurv_core::geometry::factor::make_mesh_factor;
use qcurv_core::geometry::meshgen::{genus_chain, icosphere};
use qcurv_core::geometry::product::{make_product, ProductManifold4D, ScalarField};
use qcurv_core::paneitz::{conformal_q, gauss_bonnet_defect, paneitz_operator, total_q};

const PI: f64 = std::f64::consts::PI;

/// Discretization accuracy expected from a twice-subdivided icosahedron.
const MESH_REL_TOL: f64 = 0.05;
/// Rounding-level bound for identities that are exact in the discrete
/// calculus (integration by parts, angle-defect closure).
const EXACT_TOL: f64 = 1e-6;

static MESH_SPHERE_PRODUCT: Lazy<ProductManifold4D> = Lazy::new(|| {
    let mesh = icosphere(2);
    make_product(
        make_mesh_factor(&mesh, 12).expect("mesh factor"),
        make_mesh_factor(&mesh, 12).expect("mesh factor"),
        15.0,
    )
    .expect("mesh sphere product")
});

#[test]
fn triangulated_sphere_reproduces_the_round_spectrum_and_area() {
    let factor = make_mesh_factor(&icosphere(2), 12).expect("mesh factor");
    let area_err = (factor.area - 4.0 * PI).abs() / (4.0 * PI);
    assert!(
        area_err < MESH_REL_TOL,
        "mesh area {} vs 4 pi (relative error {area_err:.3})",
        factor.area
    );
    assert_eq!(factor.euler_char, 2, "sphere topology");
    assert!(
        factor.eigenvalues[0].abs() < 1e-10,
        "constant mode eigenvalue {}",
        factor.eigenvalues[0]
    );
    // First band: eigenvalue 2 with multiplicity 3 on the round sphere.
    for k in 1..=3 {
        let rel = (factor.eigenvalues[k] - 2.0).abs() / 2.0;
        assert!(
            rel < MESH_REL_TOL,
            "eigenvalue {k} = {} vs 2 (relative error {rel:.3})",
            factor.eigenvalues[k]
        );
    }
    // Second band: eigenvalue 6 with multiplicity 5.
    for k in 4..=8 {
        let rel = (factor.eigenvalues[k] - 6.0).abs() / 6.0;
        assert!(
            rel < MESH_REL_TOL,
            "eigenvalue {k} = {} vs 6 (relative error {rel:.3})",
            factor.eigenvalues[k]
        );
    }
}

#[test]
fn mesh_sphere_product_matches_the_analytic_constants() {
    let m = &*MESH_SPHERE_PRODUCT;
    assert_eq!(m.euler_char, 4);
    let kp = total_q(m).expect("total curvature");
    let target = 16.0 * PI * PI / 3.0;
    let rel = (kp - target).abs() / target;
    assert!(
        rel < MESH_REL_TOL,
        "mesh total curvature {kp} vs {target} (relative error {rel:.3})"
    );
    // Topological closure is exact in the discrete calculus: the rough
    // Laplacian terms integrate to zero and the angle defects sum to the
    // Euler characteristic, independent of mesh resolution.
    let defect = gauss_bonnet_defect(m).expect("closure defect").abs();
    assert!(defect < EXACT_TOL, "Gauss-Bonnet defect {defect:.3e}");
}

#[test]
fn assembled_operator_is_symmetric_with_constant_kernel() {
    let m = &*MESH_SPHERE_PRODUCT;
    let op = paneitz_operator(m).expect("operator");
    assert!(
        !op.is_diagonal(),
        "variable-curvature mesh product must assemble a matrix"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let u = DVector::from_fn(m.n_modes(), |_, _| rng.gen_range(-1.0..1.0));
        let v = DVector::from_fn(m.n_modes(), |_, _| rng.gen_range(-1.0..1.0));
        let uv = op.form(&u, &v);
        let vu = op.form(&v, &u);
        let scale = op.form(&u, &u).abs().max(op.form(&v, &v).abs()).max(1.0);
        assert!(
            (uv - vu).abs() <= 1e-10 * scale,
            "form asymmetry {:.3e} at scale {scale:.3e}",
            (uv - vu).abs()
        );
    }
    // The constant function is annihilated: applying the operator to the
    // first basis vector must return (numerically) nothing.
    let mut constant = DVector::zeros(m.n_modes());
    constant[0] = 1.0;
    let image = op.apply(&constant);
    let worst = image.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let scale = op.mu.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    assert!(
        worst <= 1e-8 * scale,
        "operator does not annihilate constants (|P 1| = {worst:.3e})"
    );
}

#[test]
fn conformal_change_preserves_total_curvature_on_meshes() {
    let m = &*MESH_SPHERE_PRODUCT;
    let kp = total_q(m).expect("total curvature");
    let scale = kp.abs().max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let mut coeffs = DVector::zeros(m.n_modes());
        for k in 1..m.n_modes() {
            coeffs[k] = rng.gen_range(-0.1..0.1);
        }
        let w = ScalarField::from_coeffs(m, coeffs).expect("conformal factor");
        let data = conformal_q(m, &w, None).expect("conformal change");
        let drift = (data.total_q_conformal - kp).abs() / scale;
        assert!(
            drift < EXACT_TOL,
            "conformal total curvature drifted by {drift:.3e} relative"
        );
    }
}

#[test]
fn higher_genus_mesh_closes_gauss_bonnet() {
    let mesh = genus_chain(2, 16, 8, 1.0, 0.45).expect("genus-2 mesh");
    let factor_a = make_mesh_factor(&mesh, 10).expect("mesh factor");
    assert_eq!(factor_a.euler_char, -2, "genus-2 topology");
    let factor_b = make_mesh_factor(&icosphere(2), 10).expect("mesh factor");
    let m = make_product(factor_a, factor_b, 10.0).expect("mixed mesh product");
    assert_eq!(m.euler_char, -4);
    let defect = gauss_bonnet_defect(&m).expect("closure defect").abs();
    assert!(defect < EXACT_TOL, "Gauss-Bonnet defect {defect:.3e}");
}
