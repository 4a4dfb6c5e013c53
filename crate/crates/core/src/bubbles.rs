//! Concentrating test-function families: smoothly cut-off, multi-atom
//! profiles whose exponential volume density is exactly node-separable, plus
//! extraction of concentration patterns from arbitrary fields and a
//! transport metric between such patterns.

use nalgebra::DVector;

use crate::error::{QcurvError, Result};
use crate::geometry::product::{ProductManifold4D, Provenance, ScalarField};
use crate::numerics::log_sum_exp_weighted;
use crate::transport;

/// Distance-taper specification: the identity up to `delta`, a cubic blend
/// on `[delta, 2 delta]`, constant `2 delta` beyond.
#[derive(Debug, Clone, Copy)]
pub struct CutoffSpec {
    pub delta: f64,
}

impl CutoffSpec {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(QcurvError::Config(format!(
                "cutoff scale must be positive, got {delta}"
            )));
        }
        Ok(CutoffSpec { delta })
    }

    /// Default taper scale for a product: a fifth of the smaller factor
    /// diameter, so the taper finishes well inside the injectivity scale.
    pub fn default_for(m: &ProductManifold4D) -> Result<Self> {
        let da = m.factor_a.diameter()?;
        let db = m.factor_b.diameter()?;
        CutoffSpec::new(0.2 * da.min(db))
    }

    /// Tapered distance `chi(d)`: monotone nondecreasing, `chi(d) = d` for
    /// `d <= delta`, constant `2 delta` for `d >= 2 delta`, C^1 throughout.
    pub fn chi(&self, d: f64) -> f64 {
        let delta = self.delta;
        if d <= delta {
            d
        } else if d >= 2.0 * delta {
            2.0 * delta
        } else {
            // Cubic Hermite on s in [0, 1]: h(0) = 0, h'(0) = 1,
            // h(1) = 1, h'(1) = 0, mapped to [delta, 2 delta].
            let s = (d - delta) / delta;
            let h = -s * s * s + s * s + s;
            delta * (1.0 + h)
        }
    }

    /// Derivative `chi'(d)` (zero on the plateau).
    pub fn chi_prime(&self, d: f64) -> f64 {
        let delta = self.delta;
        if d <= delta {
            1.0
        } else if d >= 2.0 * delta {
            0.0
        } else {
            let s = (d - delta) / delta;
            -3.0 * s * s + 2.0 * s + 1.0
        }
    }

    /// Second derivative `chi''(d)` (piecewise linear in the blend).
    pub fn chi_second(&self, d: f64) -> f64 {
        let delta = self.delta;
        if d <= delta || d >= 2.0 * delta {
            0.0
        } else {
            let s = (d - delta) / delta;
            (-6.0 * s + 2.0) / delta
        }
    }
}

/// One concentration atom: a product node index and its mass share.
#[derive(Debug, Clone, Copy)]
pub struct BubbleAtom {
    pub center: usize,
    pub mass: f64,
}

/// A weighted configuration of concentration points: node centers with
/// nonnegative masses summing to one. The canonical description of "where
/// a concentrating field puts its volume".
#[derive(Debug, Clone)]
pub struct Barycenter {
    entries: Vec<BubbleAtom>,
}

impl Barycenter {
    /// Validates node ranges, the mass range `[0, 1]`, and the unit sum
    /// (to 1e-12). Zero-mass entries are dropped.
    pub fn new(m: &ProductManifold4D, entries: Vec<BubbleAtom>) -> Result<Self> {
        if entries.is_empty() {
            return Err(QcurvError::Validation(
                "a concentration pattern needs at least one point".into(),
            ));
        }
        let n = m.n_nodes();
        let mut sum = 0.0;
        for e in &entries {
            if e.center >= n {
                return Err(QcurvError::Validation(format!(
                    "concentration point {} out of range ({} product nodes)",
                    e.center, n
                )));
            }
            if !(0.0..=1.0).contains(&e.mass) || !e.mass.is_finite() {
                return Err(QcurvError::Validation(format!(
                    "concentration masses must lie in [0, 1], got {}",
                    e.mass
                )));
            }
            sum += e.mass;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(QcurvError::Validation(format!(
                "concentration masses must sum to 1, got {sum}"
            )));
        }
        let entries: Vec<BubbleAtom> = entries.into_iter().filter(|e| e.mass > 0.0).collect();
        if entries.is_empty() {
            return Err(QcurvError::Validation(
                "all concentration masses are zero".into(),
            ));
        }
        Ok(Barycenter { entries })
    }

    /// A single unit-mass point.
    pub fn single(m: &ProductManifold4D, center: usize) -> Result<Self> {
        Barycenter::new(m, vec![BubbleAtom { center, mass: 1.0 }])
    }

    pub fn entries(&self) -> &[BubbleAtom] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The pattern as a sparse node measure.
    pub fn as_measure(&self) -> Vec<(usize, f64)> {
        self.entries.iter().map(|e| (e.center, e.mass)).collect()
    }
}

/// Construction record of a concentrating field: atoms, concentration
/// parameter, taper, and the affine (scale/offset) history of the field.
#[derive(Debug, Clone)]
pub struct BubbleShape {
    pub atoms: Vec<BubbleAtom>,
    pub lambda: f64,
    pub cutoff: CutoffSpec,
    /// Multiplicative factor applied to the profile after construction.
    pub scale: f64,
    /// Additive constant applied after scaling.
    pub offset: f64,
}

impl BubbleShape {
    /// The shape still equals the as-built profile (no rescaling applied),
    /// so its sharp-core volume density is exactly the atom sum.
    pub fn is_pristine(&self) -> bool {
        (self.scale - 1.0).abs() < 1e-14 && self.offset.abs() < 1e-14
    }
}

/// Single-atom radial profile value `b(r) = 2 lambda / (1 + lambda^2 chi(r)^2)`.
#[inline]
pub(crate) fn atom_profile(lambda: f64, cutoff: &CutoffSpec, r: f64) -> f64 {
    let c = cutoff.chi(r);
    2.0 * lambda / (1.0 + lambda * lambda * c * c)
}

/// Multi-atom concentrating field
/// `phi = (1/4) log sum_i t_i b_i^4` with `b_i = atom_profile(d(x, x_i))`,
/// so that `exp(4 phi) = sum_i t_i b_i^4` exactly.
pub fn bubble_field(
    m: &ProductManifold4D,
    sigma: &Barycenter,
    lambda: f64,
    cutoff: CutoffSpec,
) -> Result<ScalarField> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(QcurvError::Config(format!(
            "concentration parameter must be positive and finite, got {lambda}"
        )));
    }
    m.weights()?; // full mode required

    // exp(4 phi)(y) = sum_i t_i b_i(y)^4, evaluated per product node via
    // factor distance rows (A-major node layout).
    let n = m.n_nodes();
    let mut density = vec![0.0f64; n];
    let nb = m.factor_b.n_nodes();
    for a in sigma.entries() {
        let (ca, cb) = m.split_node(a.center);
        let da = m.factor_a.distances_from(ca)?;
        let db = m.factor_b.distances_from(cb)?;
        for ya in 0..m.factor_a.n_nodes() {
            let da2 = da[ya] * da[ya];
            for yb in 0..nb {
                let r = (da2 + db[yb] * db[yb]).sqrt();
                let b = atom_profile(lambda, &cutoff, r);
                density[ya * nb + yb] += a.mass * b * b * b * b;
            }
        }
    }
    let values = DVector::from_iterator(n, density.iter().map(|d| 0.25 * d.ln()));
    let shape = BubbleShape {
        atoms: sigma.entries().to_vec(),
        lambda,
        cutoff,
        scale: 1.0,
        offset: 0.0,
    };
    ScalarField::from_values_with_provenance(m, values, Provenance::Bubble(shape))
}

/// Normalized conformal node masses `w_y exp(4 u_y) / sum` of a field
/// (the discrete volume measure of the conformal metric, total mass one).
///
/// Fields still carrying their as-built concentration profile use
/// core-corrected quadrature: each atom core — far narrower than the node
/// spacing for large concentration parameters — is integrated analytically
/// and deposited at its center node, so the atom masses stay faithful at
/// every concentration scale instead of being skewed by the quadrature
/// weight under the peak sample.
pub fn conformal_node_masses(m: &ProductManifold4D, u: &ScalarField) -> Result<Vec<f64>> {
    u.check_model(m)?;
    if let Provenance::Bubble(shape) = &u.provenance {
        if shape.is_pristine() {
            return crate::bubblecalc::BubbleContext::new(m, shape)?.node_measure();
        }
    }
    let weights = m.weights()?;
    let values = u.values()?;
    let scaled: Vec<f64> = values.iter().map(|v| 4.0 * v).collect();
    let log_total = log_sum_exp_weighted(weights, &scaled);
    if !log_total.is_finite() {
        return Err(QcurvError::Numeric {
            what: "conformal volume integral degenerated".into(),
            residual: log_total,
        });
    }
    Ok(weights
        .iter()
        .zip(scaled.iter())
        .map(|(&w, &s)| w * (s - log_total).exp())
        .collect())
}

/// Outcome of greedy concentration-point extraction.
#[derive(Debug, Clone)]
pub struct ConcentrationReport {
    /// Selected product nodes, in pick order.
    pub points: Vec<usize>,
    /// Conformal mass captured by each point's ball at pick time.
    pub ball_masses: Vec<f64>,
    /// Conformal mass outside the union of the picked balls.
    pub residual: f64,
    /// The capture threshold the residual is compared against.
    pub eps: f64,
    /// Ball radius used.
    pub radius: f64,
    /// Whether the residual is at most `eps`.
    pub within_eps: bool,
}

/// How many of the heaviest nodes are considered as ball centers.
const CONCENTRATION_CANDIDATES: usize = 512;

/// Greedy concentration extraction: repeatedly pick the candidate node
/// whose radius-`radius` ball captures the most remaining conformal mass,
/// then remove that ball's mass; stop after `k` picks. Candidates are the
/// heaviest `512` nodes of the measure (a ball maximizer is always near
/// the top of the mass ranking at the scales of interest).
pub fn concentration_points(
    m: &ProductManifold4D,
    u: &ScalarField,
    k: usize,
    eps: f64,
    radius: f64,
) -> Result<ConcentrationReport> {
    if k == 0 {
        return Err(QcurvError::Config(
            "concentration extraction needs at least one point".into(),
        ));
    }
    if !(radius > 0.0) || !(eps > 0.0) {
        return Err(QcurvError::Config(format!(
            "concentration radius and threshold must be positive (radius {radius}, eps {eps})"
        )));
    }
    let mut masses = conformal_node_masses(m, u)?;
    let total: f64 = masses.iter().sum();

    // Candidate centers: heaviest nodes, ties broken by index for
    // determinism.
    let mut order: Vec<usize> = (0..masses.len()).collect();
    order.sort_by(|&i, &j| masses[j].total_cmp(&masses[i]).then(i.cmp(&j)));
    order.truncate(CONCENTRATION_CANDIDATES);

    // Ball memberships, computed once per candidate from factor distance
    // rows.
    let nb = m.factor_b.n_nodes();
    let mut balls: Vec<Vec<usize>> = Vec::with_capacity(order.len());
    for &c in &order {
        let (ca, cb) = m.split_node(c);
        let da = m.factor_a.distances_from(ca)?;
        let db = m.factor_b.distances_from(cb)?;
        let mut members = Vec::new();
        for (y, mass) in masses.iter().enumerate() {
            let _ = mass;
            let d = da[y / nb].hypot(db[y % nb]);
            if d <= radius {
                members.push(y);
            }
        }
        balls.push(members);
    }

    let mut points = Vec::with_capacity(k);
    let mut ball_masses = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best = 0usize;
        let mut best_mass = f64::NEG_INFINITY;
        for (ci, ball) in balls.iter().enumerate() {
            let mass: f64 = ball.iter().map(|&y| masses[y]).sum();
            if mass > best_mass {
                best_mass = mass;
                best = ci;
            }
        }
        points.push(order[best]);
        ball_masses.push(best_mass.max(0.0));
        for &y in &balls[best] {
            masses[y] = 0.0;
        }
    }
    let residual: f64 = masses.iter().sum::<f64>() / total;
    Ok(ConcentrationReport {
        points,
        ball_masses,
        residual,
        eps,
        radius,
        within_eps: residual <= eps,
    })
}

/// Default capture ball radius: 5% of the product diameter.
fn default_radius(m: &ProductManifold4D) -> Result<f64> {
    Ok(0.05 * m.diameter()?)
}

/// Default residual threshold for "the field is concentrated".
const DEFAULT_EPS: f64 = 0.05;

/// Projection of a field onto a `k`-point concentration pattern: greedy
/// ball capture at the default radius, masses renormalized to one.
///
/// This inverts the concentrating-family construction in the concentration
/// limit: the pattern of a sharply concentrated multi-atom field recovers
/// the atoms' centers and masses up to the ball radius.
pub fn project_psi(m: &ProductManifold4D, u: &ScalarField, k: usize) -> Result<Barycenter> {
    let radius = default_radius(m)?;
    let report = concentration_points(m, u, k, DEFAULT_EPS, radius)?;
    let captured: f64 = report.ball_masses.iter().sum();
    if !(captured > 0.0) {
        return Err(QcurvError::Numeric {
            what: "projection found no conformal mass in any capture ball".into(),
            residual: report.residual,
        });
    }
    let entries: Vec<BubbleAtom> = report
        .points
        .iter()
        .zip(report.ball_masses.iter())
        .filter(|(_, &mass)| mass > 1e-15 * captured)
        .map(|(&center, &mass)| BubbleAtom {
            center,
            mass: mass / captured,
        })
        .collect();
    Barycenter::new(m, entries)
}

/// Support cap for transport distances between node measures.
const MEASURE_SUPPORT_CAP: usize = 256;

/// First Wasserstein (transport) distance between two probability measures
/// on product nodes, with heaviest-first support compression to 256 points
/// per side. Errors if the compression bound is not negligible relative to
/// the diameter — the metric is intended for concentrated measures.
pub fn measure_distance(
    m: &ProductManifold4D,
    mu: &[(usize, f64)],
    nu: &[(usize, f64)],
) -> Result<f64> {
    let diameter = m.diameter()?;
    let result = transport::w1_distance(mu, nu, MEASURE_SUPPORT_CAP, diameter, |x, y| {
        m.distance(x, y)
    })?;
    if result.compression_error_bound > 0.01 * diameter {
        return Err(QcurvError::Numeric {
            what: "measure supports too diffuse: compression bound exceeds 1% of diameter".into(),
            residual: result.compression_error_bound,
        });
    }
    Ok(result.distance)
}

/// Transport distance between a field's conformal volume measure and a
/// concentration pattern.
pub fn field_pattern_distance(
    m: &ProductManifold4D,
    u: &ScalarField,
    sigma: &Barycenter,
) -> Result<f64> {
    let masses = conformal_node_masses(m, u)?;
    let mu: Vec<(usize, f64)> = masses.into_iter().enumerate().collect();
    measure_distance(m, &mu, &sigma.as_measure())
}
