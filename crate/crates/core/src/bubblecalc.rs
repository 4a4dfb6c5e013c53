//! Core-corrected quadrature for concentrating fields.
//!
//! A concentration profile with parameter `lambda` varies on the scale
//! `1/lambda`, far below the node spacing once `lambda` is large, so plain
//! node quadrature (and Galerkin projection) saturates. This module keeps
//! node quadrature away from the atom cores and replaces each core ball
//! `r <= r0` by analytic radial integration against the exact ring measure
//! of the product metric:
//!
//! `area'(r) = r * ∫_0^{pi/2} L_a(r cos t) L_b(r sin t) dt`,
//!
//! where `L` is the geodesic circle length of a factor (`2 pi^2 r^3 + O(r^5)`
//! for small `r`). Corrections have singularity-subtraction form: add the
//! analytic core integral of a radial model and subtract the node-quadrature
//! of the same model over the same ball, so the smooth remainder stays with
//! the global node sum and nothing is double counted.

use nalgebra::DVector;

use crate::bubbles::{BubbleShape, CutoffSpec};
use crate::error::{QcurvError, Result};
use crate::geometry::factor::SurfaceFactor;
use crate::geometry::product::ProductManifold4D;
use crate::numerics::{composite_gauss_legendre, gauss_legendre_on};

/// Radial atom profile `b(r) = 2 lambda / (1 + lambda^2 chi(r)^2)` and its
/// first two radial derivatives.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RadialProfile {
    pub lambda: f64,
    pub cutoff: CutoffSpec,
}

impl RadialProfile {
    #[inline]
    pub fn b(&self, r: f64) -> f64 {
        let v = self.cutoff.chi(r);
        2.0 * self.lambda / (1.0 + self.lambda * self.lambda * v * v)
    }

    /// `db/dr` (zero on the cutoff plateau).
    #[inline]
    pub fn db(&self, r: f64) -> f64 {
        let l = self.lambda;
        let v = self.cutoff.chi(r);
        let den = 1.0 + l * l * v * v;
        let db_dv = -4.0 * l * l * l * v / (den * den);
        db_dv * self.cutoff.chi_prime(r)
    }

    /// `d^2 b / dr^2`.
    #[inline]
    pub fn d2b(&self, r: f64) -> f64 {
        let l = self.lambda;
        let v = self.cutoff.chi(r);
        let den = 1.0 + l * l * v * v;
        let db_dv = -4.0 * l * l * l * v / (den * den);
        let d2b_dv2 = -4.0 * l * l * l * (1.0 - 3.0 * l * l * v * v) / (den * den * den);
        let cp = self.cutoff.chi_prime(r);
        d2b_dv2 * cp * cp + db_dv * self.cutoff.chi_second(r)
    }
}

/// `(d_factor / r) * div grad d_factor`, with the exact `1/r` limit as the
/// factor distance vanishes (both closed forms behave like `1/d + O(d)`).
#[inline]
fn ratio_divgrad(factor: &SurfaceFactor, d_factor: f64, r: f64) -> f64 {
    if d_factor < 1e-9 {
        1.0 / r
    } else {
        d_factor / r * factor.distance_divgrad(d_factor)
    }
}

/// `div grad` of `b^4` as a function on the product, evaluated at factor
/// distances `(da, db)` from the atom center, `r = hypot(da, db)`:
/// `(b^4)'' + (b^4)' * (div grad r)` with
/// `div grad r = 1/r + (da/r) div grad_a da + (db/r) div grad_b db`.
fn lap_b4(
    profile: &RadialProfile,
    fa: &SurfaceFactor,
    fb: &SurfaceFactor,
    da: f64,
    db: f64,
) -> f64 {
    let r = da.hypot(db);
    let b = profile.b(r);
    let bp = profile.db(r);
    let bpp = profile.d2b(r);
    let second = 12.0 * b * b * bp * bp + 4.0 * b * b * b * bpp;
    if r < 1e-12 {
        // Radial function at its center in four dimensions: 4 f''(0).
        return 4.0 * second;
    }
    let first = 4.0 * b * b * b * bp;
    if first == 0.0 {
        // Plateau (or exact core): the radial derivative vanishes, and the
        // div-grad factor may be unbounded there (factor antipodes).
        return second;
    }
    let div_grad_r = 1.0 / r + ratio_divgrad(fa, da, r) + ratio_divgrad(fb, db, r);
    second + first * div_grad_r
}

/// Per-atom pointwise data entering the energy density.
struct AtomPoint {
    /// `t * b^4` (contribution to the conformal density).
    tb4: f64,
    /// `t * b^3 * b'` (radial gradient weight).
    g: f64,
    /// `t * div grad (b^4)`.
    lap: f64,
    /// Factor distances and their product hypotenuse.
    da: f64,
    db: f64,
    r: f64,
}

fn atom_point(
    profile: &RadialProfile,
    mass: f64,
    fa: &SurfaceFactor,
    fb: &SurfaceFactor,
    da: f64,
    db: f64,
) -> AtomPoint {
    let r = da.hypot(db);
    let b = profile.b(r);
    let bp = profile.db(r);
    AtomPoint {
        tb4: mass * b * b * b * b,
        g: mass * b * b * b * bp,
        lap: mass * lap_b4(profile, fa, fb, da, db),
        da,
        db,
        r,
    }
}

/// Pointwise energy density of `phi = (1/4) log sum_j t_j b_j^4` on a
/// constant-curvature product:
///
/// `(div grad phi)^2 + (2/3) R |grad phi|^2 − 2 (k_a |grad_a phi|^2 + k_b |grad_b phi|^2)`
///
/// with `div grad phi = (div grad D)/(4D) − 4 |S|^2 / D^2`,
/// `grad phi = S / D`, `S = sum_j g_j grad r_j`. The pairwise dot products
/// of `grad r_j` need the geodesic angle cosines between atom directions,
/// supplied per factor by `cos_a`, `cos_b` (indexed `j * n + k`).
fn energy_density(
    atoms: &[AtomPoint],
    cos_a: &[f64],
    cos_b: &[f64],
    kappa_a: f64,
    kappa_b: f64,
) -> f64 {
    let n = atoms.len();
    let mut d_total = 0.0;
    let mut lap_d = 0.0;
    for a in atoms {
        d_total += a.tb4;
        lap_d += a.lap;
    }
    // |S|^2 split into factor components.
    let mut s_a = 0.0;
    let mut s_b = 0.0;
    for j in 0..n {
        let aj = &atoms[j];
        if aj.g == 0.0 {
            continue;
        }
        for k in 0..n {
            let ak = &atoms[k];
            if ak.g == 0.0 {
                continue;
            }
            let rr = aj.r * ak.r;
            if rr < 1e-24 {
                continue;
            }
            let w = aj.g * ak.g / rr;
            s_a += w * aj.da * ak.da * cos_a[j * n + k];
            s_b += w * aj.db * ak.db * cos_b[j * n + k];
        }
    }
    let div_grad_phi = lap_d / (4.0 * d_total) - 4.0 * (s_a + s_b) / (d_total * d_total);
    let grad_a_sq = s_a / (d_total * d_total);
    let grad_b_sq = s_b / (d_total * d_total);
    let big_r = 2.0 * (kappa_a + kappa_b);
    div_grad_phi * div_grad_phi + (2.0 / 3.0) * big_r * (grad_a_sq + grad_b_sq)
        - 2.0 * (kappa_a * grad_a_sq + kappa_b * grad_b_sq)
}

/// Precomputed per-shape quadrature context: factor distance rows from each
/// atom center, frozen backgrounds, the core radius, and the radial panels.
pub(crate) struct BubbleContext<'a> {
    m: &'a ProductManifold4D,
    shape: &'a BubbleShape,
    profile: RadialProfile,
    /// Factor distances from each atom's factor centers, per atom.
    dist_a: Vec<Vec<f64>>,
    dist_b: Vec<Vec<f64>>,
    /// Factor node indices of each atom center.
    centers_a: Vec<usize>,
    centers_b: Vec<usize>,
    /// Background conformal density at each atom's center from the other
    /// atoms (frozen for scaled-mass core models).
    frozen_bg: Vec<f64>,
    /// Core-correction radius `min(3 h, delta / 2)`.
    r0: f64,
}

impl<'a> BubbleContext<'a> {
    pub fn new(m: &'a ProductManifold4D, shape: &'a BubbleShape) -> Result<Self> {
        m.weights()?; // full mode required
        let profile = RadialProfile {
            lambda: shape.lambda,
            cutoff: shape.cutoff,
        };
        let n_atoms = shape.atoms.len();
        let mut dist_a = Vec::with_capacity(n_atoms);
        let mut dist_b = Vec::with_capacity(n_atoms);
        let mut centers_a = Vec::with_capacity(n_atoms);
        let mut centers_b = Vec::with_capacity(n_atoms);
        for atom in &shape.atoms {
            let (ca, cb) = m.split_node(atom.center);
            dist_a.push(m.factor_a.distances_from(ca)?);
            dist_b.push(m.factor_b.distances_from(cb)?);
            centers_a.push(ca);
            centers_b.push(cb);
        }
        // Frozen background at atom centers.
        let mut frozen_bg = vec![0.0; n_atoms];
        for i in 0..n_atoms {
            let (ca, cb) = m.split_node(shape.atoms[i].center);
            let mut c = 0.0;
            for (j, other) in shape.atoms.iter().enumerate() {
                if j == i {
                    continue;
                }
                let r = dist_a[j][ca].hypot(dist_b[j][cb]);
                let b = profile.b(r);
                c += other.mass * b * b * b * b;
            }
            frozen_bg[i] = c;
        }
        let h = m.node_spacing()?;
        let r0 = (3.0 * h).min(0.5 * shape.cutoff.delta);
        Ok(BubbleContext {
            m,
            shape,
            profile,
            dist_a,
            dist_b,
            centers_a,
            centers_b,
            frozen_bg,
            r0,
        })
    }

    /// Radial quadrature rule on `[0, r0]` with panel breaks at the profile
    /// scales `{0.3, 1, 3, 10}/lambda` (16-point rule per panel).
    fn radial_rule(&self) -> Vec<(f64, f64)> {
        let l = self.profile.lambda;
        let mut breaks = vec![0.0];
        for c in [0.3, 1.0, 3.0, 10.0] {
            let r = c / l;
            if r < self.r0 {
                breaks.push(r);
            }
        }
        breaks.push(self.r0);
        let (nodes, weights) = composite_gauss_legendre(&breaks, 16);
        nodes.into_iter().zip(weights).collect()
    }

    /// `∫_0^{pi/2} f(theta) L_a(r cos) L_b(r sin) dtheta * r` — one ring of
    /// the product-distance sphere at radius `r`.
    fn ring_integral(&self, r: f64, mut f: impl FnMut(f64, f64) -> f64) -> f64 {
        let mut total = 0.0;
        for &(theta, w) in self.theta_rule() {
            let da = r * theta.cos();
            let db = r * theta.sin();
            let la = self.m.factor_a.circle_length(da);
            let lb = self.m.factor_b.circle_length(db);
            total += w * f(da, db) * la * lb;
        }
        total * r
    }

    fn theta_rule(&self) -> &'static [(f64, f64)] {
        use std::sync::OnceLock;
        static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
        RULE.get_or_init(|| {
            let (nodes, weights) = gauss_legendre_on(0.0, std::f64::consts::FRAC_PI_2, 16);
            nodes.into_iter().zip(weights).collect()
        })
    }

    /// Conformal density `D(y) = sum_j t_j b_j(y)^4` at a product node.
    fn density_at(&self, ya: usize, yb: usize) -> f64 {
        let mut d = 0.0;
        for (j, atom) in self.shape.atoms.iter().enumerate() {
            let r = self.dist_a[j][ya].hypot(self.dist_b[j][yb]);
            let b = self.profile.b(r);
            d += atom.mass * b * b * b * b;
        }
        d
    }

    /// Exact node-separable conformal volume `∫ e^{4 phi} dV`: node
    /// quadrature plus per-atom analytic core replacement (each atom's
    /// density is exactly radial, so the decomposition is exact up to the
    /// ring-measure quadrature).
    pub fn mass(&self) -> Result<f64> {
        let weights = self.m.weights()?;
        let nb = self.m.factor_b.n_nodes();
        let mut total = 0.0;
        for (y, &w) in weights.iter().enumerate() {
            total += w * self.density_at(y / nb, y % nb);
        }
        for (j, atom) in self.shape.atoms.iter().enumerate() {
            // Analytic core integral of t_j b_j^4.
            let mut analytic = 0.0;
            for &(r, wr) in &self.radial_rule() {
                let b = self.profile.b(r);
                analytic += wr * atom.mass * b * b * b * b * self.ring_measure(r);
            }
            // Node quadrature of the same single-atom density over the ball.
            let mut node_part = 0.0;
            for (y, &w) in weights.iter().enumerate() {
                let r = self.dist_a[j][y / nb].hypot(self.dist_b[j][y % nb]);
                if r <= self.r0 {
                    let b = self.profile.b(r);
                    node_part += w * atom.mass * b * b * b * b;
                }
            }
            total += analytic - node_part;
        }
        Ok(total)
    }

    /// Normalized node masses of the conformal measure `e^{4 phi} dV`.
    ///
    /// Same decomposition as [`mass`](Self::mass): node quadrature carries
    /// every atom's density only outside that atom's core ball, and each
    /// core ball's analytic radial integral is deposited at the atom's
    /// center node (placement error at most `r0`, one node spacing scale).
    /// Plain node quadrature would instead weight each under-resolved core
    /// by its center node's quadrature weight, skewing the atom masses by
    /// an amount that does not vanish as `lambda` grows.
    pub fn node_measure(&self) -> Result<Vec<f64>> {
        let weights = self.m.weights()?;
        let nb = self.m.factor_b.n_nodes();
        let mut masses = vec![0.0f64; weights.len()];
        for (y, &w) in weights.iter().enumerate() {
            let (ya, yb) = (y / nb, y % nb);
            let mut d = 0.0;
            for (j, atom) in self.shape.atoms.iter().enumerate() {
                let r = self.dist_a[j][ya].hypot(self.dist_b[j][yb]);
                if r > self.r0 {
                    let b = self.profile.b(r);
                    d += atom.mass * b * b * b * b;
                }
            }
            masses[y] = w * d;
        }
        for atom in &self.shape.atoms {
            let mut analytic = 0.0;
            for &(r, wr) in &self.radial_rule() {
                let b = self.profile.b(r);
                analytic += wr * atom.mass * b * b * b * b * self.ring_measure(r);
            }
            masses[atom.center] += analytic;
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(QcurvError::Numeric {
                what: "conformal volume of the concentrating field degenerated".into(),
                residual: total,
            });
        }
        for v in &mut masses {
            *v /= total;
        }
        Ok(masses)
    }

    /// Ring measure `area'(r)` (length of the product-distance sphere).
    fn ring_measure(&self, r: f64) -> f64 {
        self.ring_integral(r, |_, _| 1.0)
    }

    /// `∫ e^{4 t phi} dV = ∫ D^t dV` for the scaled field `t * phi`.
    ///
    /// Not node-separable for `t != 1`; each atom's core is modeled by its
    /// own radial profile on a frozen background
    /// `(t_i b_i(r)^4 + c_i)^t`, `c_i` the other atoms' density at the
    /// center, and corrected by singularity subtraction.
    pub fn scaled_mass(&self, t: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(self.m.volume);
        }
        if t == 1.0 {
            return self.mass();
        }
        let weights = self.m.weights()?;
        let nb = self.m.factor_b.n_nodes();
        let mut total = 0.0;
        for (y, &w) in weights.iter().enumerate() {
            total += w * self.density_at(y / nb, y % nb).powf(t);
        }
        for (j, atom) in self.shape.atoms.iter().enumerate() {
            let c = self.frozen_bg[j];
            let model = |r: f64| -> f64 {
                let b = self.profile.b(r);
                (atom.mass * b * b * b * b + c).powf(t)
            };
            let mut analytic = 0.0;
            for &(r, wr) in &self.radial_rule() {
                analytic += wr * model(r) * self.ring_measure(r);
            }
            let mut node_part = 0.0;
            for (y, &w) in weights.iter().enumerate() {
                let r = self.dist_a[j][y / nb].hypot(self.dist_b[j][y % nb]);
                if r <= self.r0 {
                    node_part += w * model(r);
                }
            }
            total += analytic - node_part;
        }
        Ok(total)
    }

    /// Core-corrected quadratic form `<P phi, phi>` via the pointwise
    /// energy density. Returns `None` when a factor cannot supply geodesic
    /// angles (mesh-backed factors); callers fall back to the Galerkin
    /// form there.
    pub fn energy(&self) -> Result<Option<f64>> {
        if !self.m.factor_a.supports_angles() || !self.m.factor_b.supports_angles() {
            return Ok(None);
        }
        let (kappa_a, kappa_b) = match (
            self.m.factor_a.curvature_constant,
            self.m.factor_b.curvature_constant,
        ) {
            (Some(a), Some(b)) => (a, b),
            _ => return Ok(None),
        };
        let fa = &self.m.factor_a;
        let fb = &self.m.factor_b;
        let weights = self.m.weights()?;
        let nb = fb.n_nodes();
        let n_atoms = self.shape.atoms.len();

        // Global node quadrature of the full multi-atom density.
        let mut total = 0.0;
        let mut atoms_buf: Vec<AtomPoint> = Vec::with_capacity(n_atoms);
        let mut cos_a = vec![0.0; n_atoms * n_atoms];
        let mut cos_b = vec![0.0; n_atoms * n_atoms];
        for (y, &w) in weights.iter().enumerate() {
            let (ya, yb) = (y / nb, y % nb);
            atoms_buf.clear();
            for (j, atom) in self.shape.atoms.iter().enumerate() {
                atoms_buf.push(atom_point(
                    &self.profile,
                    atom.mass,
                    fa,
                    fb,
                    self.dist_a[j][ya],
                    self.dist_b[j][yb],
                ));
            }
            for j in 0..n_atoms {
                cos_a[j * n_atoms + j] = 1.0;
                cos_b[j * n_atoms + j] = 1.0;
                for k in 0..j {
                    let ca = fa.geodesic_angle_cos(ya, self.centers_a[j], self.centers_a[k])?;
                    let cb = fb.geodesic_angle_cos(yb, self.centers_b[j], self.centers_b[k])?;
                    cos_a[j * n_atoms + k] = ca;
                    cos_a[k * n_atoms + j] = ca;
                    cos_b[j * n_atoms + k] = cb;
                    cos_b[k * n_atoms + j] = cb;
                }
            }
            total += w * energy_density(&atoms_buf, &cos_a, &cos_b, kappa_a, kappa_b);
        }

        // Per-atom core correction with the single-atom radial model.
        let unit_cos = [1.0];
        for (j, atom) in self.shape.atoms.iter().enumerate() {
            let single = |da: f64, db: f64| -> f64 {
                let pt = atom_point(&self.profile, atom.mass, fa, fb, da, db);
                energy_density(&[pt], &unit_cos, &unit_cos, kappa_a, kappa_b)
            };
            let mut analytic = 0.0;
            for &(r, wr) in &self.radial_rule() {
                analytic += wr * self.ring_integral(r, single);
            }
            let mut node_part = 0.0;
            for (y, &w) in weights.iter().enumerate() {
                let (ya, yb) = (y / nb, y % nb);
                let da = self.dist_a[j][ya];
                let db = self.dist_b[j][yb];
                if da.hypot(db) <= self.r0 {
                    node_part += w * single(da, db);
                }
            }
            total += analytic - node_part;
        }
        Ok(Some(total))
    }

    /// Node values of the profile `phi = (1/4) log D` (used by the family
    /// constructor; identical to the stored field values).
    #[allow(dead_code)]
    pub fn profile_values(&self) -> Result<DVector<f64>> {
        self.m.weights()?;
        let nb = self.m.factor_b.n_nodes();
        let n = self.m.n_nodes();
        Ok(DVector::from_fn(n, |y, _| {
            0.25 * self.density_at(y / nb, y % nb).ln()
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bubbles::{bubble_field, Barycenter, CutoffSpec};
    use crate::geometry::factor::make_sphere_factor;
    use crate::geometry::product::{make_product, Provenance};
    use crate::paneitz::paneitz_operator;

    const PI: f64 = std::f64::consts::PI;

    fn s2xs2(lmax: usize) -> ProductManifold4D {
        let a = make_sphere_factor(lmax, 2 * lmax + 2).unwrap();
        let b = make_sphere_factor(lmax, 2 * lmax + 2).unwrap();
        let cap = (lmax * (lmax + 1)) as f64;
        make_product(a, b, cap).unwrap()
    }

    fn single_bubble(m: &ProductManifold4D, lambda: f64) -> BubbleShape {
        let sigma = Barycenter::single(m, 0).unwrap();
        let cut = CutoffSpec::default_for(m).unwrap();
        let field = bubble_field(m, &sigma, lambda, cut).unwrap();
        match field.provenance {
            Provenance::Bubble(shape) => shape,
            _ => unreachable!(),
        }
    }

    #[test]
    fn ring_measure_matches_the_flat_small_radius_law() {
        let m = s2xs2(4);
        let shape = single_bubble(&m, 10.0);
        let ctx = BubbleContext::new(&m, &shape).unwrap();
        for r in [1e-3, 3e-3, 1e-2] {
            let exact = 2.0 * PI * PI * r * r * r;
            let got = ctx.ring_measure(r);
            assert!(
                (got - exact).abs() < 1e-4 * exact,
                "ring({r}): {got} vs {exact}"
            );
        }
    }

    #[test]
    fn concentrated_mass_approaches_the_model_constant() {
        // The pure profile integral over flat space is 8 pi^2 / 3; on the
        // compact product the corrections are O(lambda^-2).
        let m = s2xs2(6);
        for lambda in [20.0, 40.0, 80.0] {
            let shape = single_bubble(&m, lambda);
            let ctx = BubbleContext::new(&m, &shape).unwrap();
            let mass = ctx.mass().unwrap();
            let expected = 8.0 * PI * PI / 3.0;
            assert!(
                (mass - expected).abs() < 0.02 * expected,
                "lambda {lambda}: mass {mass} vs {expected}"
            );
        }
    }

    #[test]
    fn scaled_mass_is_continuous_at_the_endpoints() {
        let m = s2xs2(6);
        let shape = single_bubble(&m, 20.0);
        let ctx = BubbleContext::new(&m, &shape).unwrap();
        assert_eq!(ctx.scaled_mass(0.0).unwrap(), m.volume);
        let m1 = ctx.scaled_mass(1.0).unwrap();
        let m1eps = ctx.scaled_mass(1.0 - 1e-6).unwrap();
        assert!((m1 - m1eps).abs() < 1e-3 * m1);
        // Monotone in t for a profile with values above and below 1:
        // no sign constraint, but finiteness and positivity hold.
        for t in [0.1, 0.25, 0.5, 0.75, 0.9] {
            let v = ctx.scaled_mass(t).unwrap();
            assert!(v.is_finite() && v > 0.0, "t = {t}: {v}");
        }
    }

    #[test]
    fn energy_grows_like_the_log_of_the_concentration_parameter() {
        // <P phi, phi> = 32 pi^2 log lambda + O(1), so consecutive doubling
        // differences approach 32 pi^2 log 2.
        let m = s2xs2(6);
        let e20 = {
            let s = single_bubble(&m, 20.0);
            BubbleContext::new(&m, &s).unwrap().energy().unwrap().unwrap()
        };
        let e40 = {
            let s = single_bubble(&m, 40.0);
            BubbleContext::new(&m, &s).unwrap().energy().unwrap().unwrap()
        };
        let e80 = {
            let s = single_bubble(&m, 80.0);
            BubbleContext::new(&m, &s).unwrap().energy().unwrap().unwrap()
        };
        let expected = 32.0 * PI * PI * 2.0f64.ln();
        for diff in [e40 - e20, e80 - e40] {
            assert!(
                (diff - expected).abs() < 0.05 * expected,
                "doubling increment {diff} vs {expected}"
            );
        }
    }

    /// Exact single-atom quantities by pure radial quadrature: on a
    /// homogeneous product the atom density depends only on the factor
    /// distances, so integrating `f(da, db)` against the ring measure over
    /// `r` up to the diameter needs no product nodes at all. Panels resolve
    /// the profile scales and the taper corners; 24-point rule per panel.
    fn radial_oracle(
        ctx: &BubbleContext,
        lambda: f64,
        delta: f64,
        rmax: f64,
        f: impl Fn(f64, f64) -> f64 + Copy,
    ) -> f64 {
        let mut breaks = vec![0.0];
        for c in [0.1, 0.3, 1.0, 3.0, 10.0] {
            let r = c / lambda;
            if r < rmax {
                breaks.push(r);
            }
        }
        for corner in [0.5 * delta, delta, 1.5 * delta, 2.0 * delta, 3.0 * delta] {
            if corner < rmax {
                breaks.push(corner);
            }
        }
        breaks.push(rmax);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let (nodes, weights) = composite_gauss_legendre(&breaks, 24);
        nodes
            .iter()
            .zip(weights.iter())
            .map(|(&r, &w)| w * ctx.ring_integral(r, f))
            .sum()
    }

    #[test]
    fn node_free_radial_integration_confirms_mass_and_energy() {
        let m = s2xs2(6);
        let rmax = std::f64::consts::SQRT_2 * PI;
        for lambda in [2.0, 20.0] {
            let shape = single_bubble(&m, lambda);
            let ctx = BubbleContext::new(&m, &shape).unwrap();
            let profile = RadialProfile {
                lambda,
                cutoff: shape.cutoff,
            };
            let (kappa_a, kappa_b) = (1.0, 1.0);
            let fa = &m.factor_a;
            let fb = &m.factor_b;

            let mass_density =
                |da: f64, db: f64| -> f64 { profile.b(da.hypot(db)).powi(4) };
            let exact_mass = radial_oracle(&ctx, lambda, shape.cutoff.delta, rmax, mass_density);
            let mass = ctx.mass().unwrap();
            assert!(
                (mass - exact_mass).abs() < 5e-3 * exact_mass,
                "lambda {lambda}: mass {mass} vs radial {exact_mass}"
            );

            let energy_pointwise = |da: f64, db: f64| -> f64 {
                let pt = atom_point(&profile, 1.0, fa, fb, da, db);
                energy_density(&[pt], &[1.0], &[1.0], kappa_a, kappa_b)
            };
            let exact_energy =
                radial_oracle(&ctx, lambda, shape.cutoff.delta, rmax, energy_pointwise);
            let energy = ctx.energy().unwrap().unwrap();
            assert!(
                (energy - exact_energy).abs() < 2e-2 * exact_energy.abs(),
                "lambda {lambda}: energy {energy} vs radial {exact_energy}"
            );
            eprintln!(
                "lambda {lambda}: mass {mass} / {exact_mass}, energy {energy} / {exact_energy}"
            );
        }
    }

    #[test]
    fn truncated_galerkin_form_never_exceeds_the_pointwise_energy() {
        // The operator is diagonal with nonnegative eigenvalues in this
        // basis, so dropping modes can only lose energy: the truncated
        // form is a lower bound of the true quadratic form at any
        // concentration.
        let m = s2xs2(6);
        let op = paneitz_operator(&m).unwrap();
        for lambda in [2.0, 3.0, 10.0] {
            let sigma = Barycenter::single(&m, 0).unwrap();
            let cut = CutoffSpec::default_for(&m).unwrap();
            let field = bubble_field(&m, &sigma, lambda, cut).unwrap();
            let galerkin = op.form(field.coeffs(), field.coeffs());
            let shape = match &field.provenance {
                Provenance::Bubble(s) => s.clone(),
                _ => unreachable!(),
            };
            let hybrid = BubbleContext::new(&m, &shape)
                .unwrap()
                .energy()
                .unwrap()
                .unwrap();
            assert!(
                galerkin <= hybrid * 1.02,
                "lambda {lambda}: truncated form {galerkin} exceeds the pointwise energy {hybrid}"
            );
        }
    }
}
