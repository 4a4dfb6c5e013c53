//! Riemannian products of two surface factors: derived curvature fields,
//! tensor quadrature, the truncated product eigenbasis, scalar fields with
//! dual (node-value / coefficient) representation, and the closed-form
//! round 4-sphere model.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};

use super::factor::SurfaceFactor;
use crate::error::{QcurvError, Result};

static NEXT_MODEL_ID: AtomicU64 = AtomicU64::new(1);

/// One member of the truncated tensor eigenbasis: factor modes `ia`, `ib`
/// with `-div grad` eigenvalue `s = alpha + beta`.
#[derive(Debug, Clone, Copy)]
pub struct ProductMode {
    pub ia: usize,
    pub ib: usize,
    pub s: f64,
}

/// Product 4-manifold of two surface factors.
///
/// Full mode (both factors carry nodes) exposes tensor quadrature over
/// `n_a * n_b` product nodes indexed `y = ya * n_b + yb`; spectral-only
/// products support exclusively mode-space operations and raise explicit
/// errors otherwise.
#[derive(Debug)]
pub struct ProductManifold4D {
    pub id: u64,
    pub factor_a: SurfaceFactor,
    pub factor_b: SurfaceFactor,
    /// Basis keeps every tensor pair with `s <= s_max`.
    pub s_max: f64,
    /// Sorted by `(s, ia, ib)`.
    pub basis: Vec<ProductMode>,
    pub volume: f64,
    pub euler_char: i64,
    weights: Vec<f64>,
}

/// Construct the product manifold, keeping all tensor modes with
/// `s = alpha + beta <= s_max`.
pub fn make_product(
    factor_a: SurfaceFactor,
    factor_b: SurfaceFactor,
    s_max: f64,
) -> Result<ProductManifold4D> {
    if !(s_max >= 0.0) {
        return Err(QcurvError::Config(format!(
            "basis truncation s_max must be nonnegative, got {s_max}"
        )));
    }
    let mut basis = Vec::new();
    for (ia, &alpha) in factor_a.eigenvalues.iter().enumerate() {
        if alpha > s_max {
            break; // eigenvalues ascend
        }
        for (ib, &beta) in factor_b.eigenvalues.iter().enumerate() {
            let s = alpha + beta;
            if s > s_max {
                break;
            }
            basis.push(ProductMode { ia, ib, s });
        }
    }
    basis.sort_by(|x, y| {
        x.s.total_cmp(&y.s)
            .then(x.ia.cmp(&y.ia))
            .then(x.ib.cmp(&y.ib))
    });
    if basis.len() < 2 {
        return Err(QcurvError::Config(format!(
            "basis truncation s_max = {s_max} keeps only the constant mode; \
             increase it beyond the smallest positive factor eigenvalue"
        )));
    }

    let weights = if factor_a.has_nodes() && factor_b.has_nodes() {
        let wa = factor_a.weights()?;
        let wb = factor_b.weights()?;
        let mut w = Vec::with_capacity(wa.len() * wb.len());
        for &a in wa {
            for &b in wb {
                w.push(a * b);
            }
        }
        w
    } else {
        Vec::new()
    };

    Ok(ProductManifold4D {
        id: NEXT_MODEL_ID.fetch_add(1, Ordering::Relaxed),
        volume: factor_a.area * factor_b.area,
        euler_char: factor_a.euler_char * factor_b.euler_char,
        s_max,
        basis,
        weights,
        factor_a,
        factor_b,
    })
}

impl ProductManifold4D {
    /// Whether tensor quadrature nodes are available.
    pub fn is_full(&self) -> bool {
        !self.weights.is_empty()
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.len()
    }

    pub fn n_modes(&self) -> usize {
        self.basis.len()
    }

    fn require_full(&self, what: &str) -> Result<()> {
        if self.is_full() {
            Ok(())
        } else {
            Err(QcurvError::Unsupported(format!(
                "{what} needs product quadrature nodes, but this product is spectral-only"
            )))
        }
    }

    /// Tensor quadrature weights over product nodes.
    pub fn weights(&self) -> Result<&[f64]> {
        self.require_full("quadrature")?;
        Ok(&self.weights)
    }

    /// Split a product node index into its factor node indices.
    #[inline]
    pub fn split_node(&self, y: usize) -> (usize, usize) {
        let nb = self.factor_b.n_nodes();
        (y / nb, y % nb)
    }

    /// Product geodesic distance `sqrt(da^2 + db^2)` between product nodes.
    pub fn distance(&self, y1: usize, y2: usize) -> Result<f64> {
        let (a1, b1) = self.split_node(y1);
        let (a2, b2) = self.split_node(y2);
        let da = self.factor_a.distance(a1, a2)?;
        let db = self.factor_b.distance(b1, b2)?;
        Ok(da.hypot(db))
    }

    pub fn diameter(&self) -> Result<f64> {
        Ok(self
            .factor_a
            .diameter()?
            .hypot(self.factor_b.diameter()?))
    }

    /// Typical node spacing `(volume / n_nodes)^(1/4)`.
    pub fn node_spacing(&self) -> Result<f64> {
        self.require_full("node spacing")?;
        Ok((self.volume / self.n_nodes() as f64).powf(0.25))
    }

    /// Both factors have exactly constant Gauss curvature.
    pub fn has_constant_curvature(&self) -> bool {
        self.factor_a.curvature_constant.is_some() && self.factor_b.curvature_constant.is_some()
    }

    /// Coefficients of a node-value vector in the truncated basis
    /// (separable Galerkin projection).
    pub fn analysis(&self, values: &DVector<f64>) -> Result<DVector<f64>> {
        self.require_full("basis analysis")?;
        let na = self.factor_a.n_nodes();
        let nb = self.factor_b.n_nodes();
        if values.len() != na * nb {
            return Err(QcurvError::Validation(format!(
                "value vector has length {}, product has {} nodes",
                values.len(),
                na * nb
            )));
        }
        let wa = self.factor_a.weights()?;
        let wb = self.factor_b.weights()?;
        let phi_a = self.factor_a.eigenfunctions()?;
        let phi_b = self.factor_b.eigenfunctions()?;
        // U[(ya, yb)] = w_a w_b * values[y]
        let mut u = DMatrix::zeros(na, nb);
        for ya in 0..na {
            for yb in 0..nb {
                u[(ya, yb)] = wa[ya] * wb[yb] * values[ya * nb + yb];
            }
        }
        let full = phi_a.transpose() * u * phi_b; // (ma x mb)
        let mut coeffs = DVector::zeros(self.basis.len());
        for (k, mode) in self.basis.iter().enumerate() {
            coeffs[k] = full[(mode.ia, mode.ib)];
        }
        Ok(coeffs)
    }

    /// Node values of a coefficient vector (band-limited synthesis).
    pub fn synthesis(&self, coeffs: &DVector<f64>) -> Result<DVector<f64>> {
        self.require_full("basis synthesis")?;
        if coeffs.len() != self.basis.len() {
            return Err(QcurvError::Validation(format!(
                "coefficient vector has length {}, basis has {} modes",
                coeffs.len(),
                self.basis.len()
            )));
        }
        let phi_a = self.factor_a.eigenfunctions()?;
        let phi_b = self.factor_b.eigenfunctions()?;
        let ma = phi_a.ncols();
        let mb = phi_b.ncols();
        let mut c = DMatrix::zeros(ma, mb);
        for (k, mode) in self.basis.iter().enumerate() {
            c[(mode.ia, mode.ib)] = coeffs[k];
        }
        let u = phi_a * c * phi_b.transpose(); // (na x nb)
        let na = u.nrows();
        let nb = u.ncols();
        let mut values = DVector::zeros(na * nb);
        for ya in 0..na {
            for yb in 0..nb {
                values[ya * nb + yb] = u[(ya, yb)];
            }
        }
        Ok(values)
    }
}

/// How a field was produced; concentrating test functions remember their
/// construction so that integrals of their sharp cores can be evaluated by
/// singularity-subtracted quadrature.
#[derive(Debug, Clone)]
pub enum Provenance {
    Generic,
    Bubble(crate::bubbles::BubbleShape),
}

/// A scalar function on the product, held in both representations: node
/// values (full mode only) and coefficients in the truncated basis.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub model_id: u64,
    values: Option<DVector<f64>>,
    coeffs: DVector<f64>,
    pub provenance: Provenance,
}

impl ScalarField {
    /// Field from node values; the coefficient representation is the
    /// Galerkin projection onto the truncated basis.
    pub fn from_values(m: &ProductManifold4D, values: DVector<f64>) -> Result<Self> {
        let coeffs = m.analysis(&values)?;
        Ok(ScalarField {
            model_id: m.id,
            values: Some(values),
            coeffs,
            provenance: Provenance::Generic,
        })
    }

    /// Band-limited field from basis coefficients.
    pub fn from_coeffs(m: &ProductManifold4D, coeffs: DVector<f64>) -> Result<Self> {
        if coeffs.len() != m.basis.len() {
            return Err(QcurvError::Validation(format!(
                "coefficient vector has length {}, basis has {} modes",
                coeffs.len(),
                m.basis.len()
            )));
        }
        let values = if m.is_full() {
            Some(m.synthesis(&coeffs)?)
        } else {
            None
        };
        Ok(ScalarField {
            model_id: m.id,
            values,
            coeffs,
            provenance: Provenance::Generic,
        })
    }

    /// Field from node values with bubble provenance attached (used by the
    /// concentration family constructor).
    pub(crate) fn from_values_with_provenance(
        m: &ProductManifold4D,
        values: DVector<f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        let coeffs = m.analysis(&values)?;
        Ok(ScalarField {
            model_id: m.id,
            values: Some(values),
            coeffs,
            provenance,
        })
    }

    pub fn zero(m: &ProductManifold4D) -> Self {
        ScalarField {
            model_id: m.id,
            values: if m.is_full() {
                Some(DVector::zeros(m.n_nodes()))
            } else {
                None
            },
            coeffs: DVector::zeros(m.basis.len()),
            provenance: Provenance::Generic,
        }
    }

    /// Guard: the field must live on `m`.
    pub fn check_model(&self, m: &ProductManifold4D) -> Result<()> {
        if self.model_id != m.id {
            return Err(QcurvError::Validation(
                "field belongs to a different manifold instance".into(),
            ));
        }
        Ok(())
    }

    /// Node values; error on spectral-only products.
    pub fn values(&self) -> Result<&DVector<f64>> {
        self.values.as_ref().ok_or_else(|| {
            QcurvError::Unsupported(
                "field has no node values (spectral-only product)".into(),
            )
        })
    }

    /// Basis coefficients (always present).
    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    /// Integral of the field: `c_0 * sqrt(volume)` (the constant mode is
    /// `1/sqrt(volume)`).
    pub fn integral(&self, m: &ProductManifold4D) -> f64 {
        self.coeffs[0] * m.volume.sqrt()
    }

    pub fn mean(&self, m: &ProductManifold4D) -> f64 {
        self.integral(m) / m.volume
    }

    /// `self + c` (constant shift); bubble provenance tracks the offset.
    pub fn shifted(&self, m: &ProductManifold4D, c: f64) -> Self {
        let mut out = self.clone();
        out.coeffs[0] += c * m.volume.sqrt();
        if let Some(v) = &mut out.values {
            v.add_scalar_mut(c);
        }
        if let Provenance::Bubble(shape) = &mut out.provenance {
            shape.offset += c;
        }
        out
    }

    /// `t * self`; bubble provenance tracks the scale.
    pub fn scaled(&self, t: f64) -> Self {
        let mut out = self.clone();
        out.coeffs *= t;
        if let Some(v) = &mut out.values {
            *v *= t;
        }
        if let Provenance::Bubble(shape) = &mut out.provenance {
            shape.scale *= t;
            shape.offset *= t;
        }
        out
    }

    /// `self + t * other`; the result is generic (no bubble structure).
    pub fn axpy(&self, t: f64, other: &ScalarField) -> Result<Self> {
        if self.model_id != other.model_id {
            return Err(QcurvError::Validation(
                "fields live on different manifolds".into(),
            ));
        }
        let values = match (&self.values, &other.values) {
            (Some(a), Some(b)) => Some(a + t * b),
            (None, None) => None,
            _ => {
                return Err(QcurvError::Validation(
                    "fields disagree on node-value availability".into(),
                ))
            }
        };
        Ok(ScalarField {
            model_id: self.model_id,
            values,
            coeffs: &self.coeffs + t * &other.coeffs,
            provenance: Provenance::Generic,
        })
    }

    /// Mean-zero gauge representative (subtracts the constant-mode part).
    pub fn mean_zero(&self, m: &ProductManifold4D) -> Self {
        self.shifted(m, -self.mean(m))
    }
}

/// Spectral-only model of the unit round 4-sphere: everything in closed
/// form. Laplacian eigenvalues are `l(l+3)`; the fourth-order operator acts
/// diagonally with eigenvalue `s(s+2)` on the degree-`l` band, `s = l(l+3)`.
#[derive(Debug, Clone, Copy)]
pub struct Sphere4Model {
    pub lmax: usize,
}

impl Sphere4Model {
    pub fn new(lmax: usize) -> Result<Self> {
        if lmax < 1 {
            return Err(QcurvError::Config("round 4-sphere model needs lmax >= 1".into()));
        }
        Ok(Sphere4Model { lmax })
    }

    pub fn volume(&self) -> f64 {
        8.0 * std::f64::consts::PI * std::f64::consts::PI / 3.0
    }

    pub fn scalar_curvature(&self) -> f64 {
        12.0
    }

    /// The fourth-order curvature scalar is constant 3 on the unit round
    /// 4-sphere.
    pub fn q_curvature(&self) -> f64 {
        3.0
    }

    /// Total curvature integral: exactly `8 pi^2`.
    pub fn total_q(&self) -> f64 {
        self.q_curvature() * self.volume()
    }

    /// `-div grad` eigenvalue of the degree-`l` band.
    pub fn laplace_eigenvalue(&self, l: usize) -> f64 {
        (l * (l + 3)) as f64
    }

    pub fn multiplicity(&self, l: usize) -> usize {
        (l + 1) * (l + 2) * (2 * l + 3) / 6
    }

    /// Eigenvalue of the fourth-order operator on the degree-`l` band:
    /// `s(s+2) = l(l+1)(l+2)(l+3)` with `s = l(l+3)`.
    pub fn paneitz_eigenvalue(&self, l: usize) -> f64 {
        let s = self.laplace_eigenvalue(l);
        s * (s + 2.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::factor::{
        make_flat_torus_factor, make_sphere_factor, make_synthetic_factor,
    };
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;

    fn small_sphere_product() -> ProductManifold4D {
        let a = make_sphere_factor(3, 8).unwrap();
        let b = make_sphere_factor(3, 8).unwrap();
        make_product(a, b, 24.0).unwrap()
    }

    #[test]
    fn product_derives_volume_topology_and_sorted_basis() {
        let pi = std::f64::consts::PI;
        let m = small_sphere_product();
        assert_abs_diff_eq!(m.volume, 16.0 * pi * pi, epsilon = 1e-9);
        assert_eq!(m.euler_char, 4);
        assert!(m.is_full());
        let wsum: f64 = m.weights().unwrap().iter().sum();
        assert_abs_diff_eq!(wsum, m.volume, epsilon = 1e-9 * m.volume);
        // Basis sorted by s, all pairs within the cap.
        for w in m.basis.windows(2) {
            assert!(w[0].s <= w[1].s);
        }
        assert!(m.basis.iter().all(|mode| mode.s <= 24.0));
        assert_eq!(m.basis[0].s, 0.0);
    }

    #[test]
    fn analysis_synthesis_round_trips_band_limited_fields() {
        let m = small_sphere_product();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let coeffs = DVector::from_fn(m.n_modes(), |_, _| rng.gen_range(-1.0..1.0));
        let values = m.synthesis(&coeffs).unwrap();
        let back = m.analysis(&values).unwrap();
        assert!((back - &coeffs).norm() < 1e-10 * coeffs.norm());
    }

    #[test]
    fn field_integral_equals_constant_coefficient_times_sqrt_volume() {
        let m = small_sphere_product();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let coeffs = DVector::from_fn(m.n_modes(), |_, _| rng.gen_range(-1.0..1.0));
        let u = ScalarField::from_coeffs(&m, coeffs.clone()).unwrap();
        let quad_integral: f64 = m
            .weights()
            .unwrap()
            .iter()
            .zip(u.values().unwrap().iter())
            .map(|(w, v)| w * v)
            .sum();
        assert_abs_diff_eq!(u.integral(&m), quad_integral, epsilon = 1e-8);
        assert_abs_diff_eq!(u.integral(&m), coeffs[0] * m.volume.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn product_basis_is_orthonormal_under_product_quadrature() {
        let m = small_sphere_product();
        let w = m.weights().unwrap();
        let phi_a = m.factor_a.eigenfunctions().unwrap();
        let phi_b = m.factor_b.eigenfunctions().unwrap();
        let nb = m.factor_b.n_nodes();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let k = rng.gen_range(0..m.n_modes());
            let l = rng.gen_range(0..m.n_modes());
            let (mk, ml) = (m.basis[k], m.basis[l]);
            let mut ip = 0.0;
            for (y, wy) in w.iter().enumerate() {
                let (ya, yb) = (y / nb, y % nb);
                ip += wy
                    * phi_a[(ya, mk.ia)]
                    * phi_b[(yb, mk.ib)]
                    * phi_a[(ya, ml.ia)]
                    * phi_b[(yb, ml.ib)];
            }
            let expected = if k == l { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(ip, expected, epsilon = 1e-6);
        }
    }

    #[test]
    fn mixed_products_are_spectral_only_and_say_so() {
        let a = make_sphere_factor(2, 8).unwrap();
        let b =
            make_synthetic_factor(-3.0, vec![0.0, 0.5, 1.0], 4.0 * std::f64::consts::PI / 3.0)
                .unwrap();
        let m = make_product(a, b, 10.0).unwrap();
        assert!(!m.is_full());
        assert!(matches!(m.weights(), Err(QcurvError::Unsupported(_))));
        assert!(matches!(
            m.analysis(&DVector::zeros(4)),
            Err(QcurvError::Unsupported(_))
        ));
        // Coefficient fields still work.
        let u = ScalarField::from_coeffs(&m, DVector::zeros(m.n_modes())).unwrap();
        assert!(matches!(u.values(), Err(QcurvError::Unsupported(_))));
    }

    #[test]
    fn product_distance_is_the_factor_hypotenuse() {
        let a = make_flat_torus_factor(1.0, 1.0, 1).unwrap();
        let b = make_flat_torus_factor(2.0, 2.0, 1).unwrap();
        let m = make_product(a, b, 200.0).unwrap();
        let nb = m.factor_b.n_nodes();
        let y1 = 0usize;
        let y2 = 3 * nb + 7;
        let (a1, b1) = m.split_node(y1);
        let (a2, b2) = m.split_node(y2);
        let da = m.factor_a.distance(a1, a2).unwrap();
        let db = m.factor_b.distance(b1, b2).unwrap();
        assert_abs_diff_eq!(
            m.distance(y1, y2).unwrap(),
            (da * da + db * db).sqrt(),
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            m.distance(y1, y2).unwrap(),
            m.distance(y2, y1).unwrap(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn fields_are_tied_to_their_manifold() {
        let m1 = small_sphere_product();
        let m2 = small_sphere_product();
        let u = ScalarField::zero(&m1);
        assert!(u.check_model(&m1).is_ok());
        assert!(matches!(u.check_model(&m2), Err(QcurvError::Validation(_))));
    }

    #[test]
    fn shift_and_scale_act_on_both_representations() {
        let m = small_sphere_product();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let coeffs = DVector::from_fn(m.n_modes(), |_, _| rng.gen_range(-1.0..1.0));
        let u = ScalarField::from_coeffs(&m, coeffs).unwrap();
        let v = u.shifted(&m, 0.7).scaled(2.0);
        let uv = u.values().unwrap();
        let vv = v.values().unwrap();
        for i in (0..uv.len()).step_by(97) {
            assert_abs_diff_eq!(vv[i], 2.0 * (uv[i] + 0.7), epsilon = 1e-10);
        }
        assert_abs_diff_eq!(v.mean(&m), 2.0 * (u.mean(&m) + 0.7), epsilon = 1e-10);
        let w = v.mean_zero(&m);
        assert_abs_diff_eq!(w.mean(&m), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn round_4_sphere_closed_forms() {
        let pi = std::f64::consts::PI;
        let s4 = Sphere4Model::new(5).unwrap();
        assert_abs_diff_eq!(s4.total_q(), 8.0 * pi * pi, epsilon = 1e-12);
        // Multiplicities 1, 5, 14, 30, 55, 91 for l = 0..5.
        let expected = [1usize, 5, 14, 30, 55, 91];
        for (l, &e) in expected.iter().enumerate() {
            assert_eq!(s4.multiplicity(l), e);
        }
        // Fourth-order eigenvalues l(l+1)(l+2)(l+3).
        for l in 0..=5usize {
            let expected = (l * (l + 1) * (l + 2) * (l + 3)) as f64;
            assert_abs_diff_eq!(s4.paneitz_eigenvalue(l), expected, epsilon = 1e-12);
        }
    }
}
