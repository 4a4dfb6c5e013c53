//! The fourth-order conformal curvature layer: the curvature scalar Q and
//! its integral, the fourth-order operator (closed-form diagonal on
//! constant-curvature products, quadrature-assembled otherwise), conformal
//! change of metric, the four-dimensional Gauss-Bonnet balance, spectrum
//! summaries, and Green's-function data with its diagonal regularization.
//!
//! Sign convention: `lap = -div grad` throughout, so factor eigenvalues
//! `alpha`, `beta` and product eigenvalues `s = alpha + beta` are
//! nonnegative.

use nalgebra::{DMatrix, DVector};

use crate::error::{QcurvError, Result};
use crate::geometry::factor::SurfaceFactor;
use crate::geometry::product::{ProductManifold4D, ScalarField};
use crate::numerics::{richardson, weighted_lstsq};

const PI: f64 = std::f64::consts::PI;

/// Largest allowed |w| before exp(4w) is ruled unsafe in conformal changes.
pub const DEFAULT_CONFORMAL_BOUND: f64 = 40.0;

// ---------------------------------------------------------------------------
// Q curvature
// ---------------------------------------------------------------------------

/// Constant Q value when both factors have constant curvature.
fn q_constant_value(m: &ProductManifold4D) -> Option<f64> {
    let ka = m.factor_a.curvature_constant?;
    let kb = m.factor_b.curvature_constant?;
    Some((-ka * ka + 4.0 * ka * kb - kb * kb) / 6.0)
}

/// The curvature scalar Q of the product metric.
///
/// On a product of surfaces with Gauss curvatures `K_a`, `K_b` (in the
/// `lap = -div grad` convention):
///
/// `Q = (lap_a K_a + lap_b K_b)/6 + (-K_a^2 + 4 K_a K_b - K_b^2)/6`.
///
/// Constant-curvature products get the exact constant (valid in
/// spectral-only mode); variable-curvature products require nodes.
pub fn q_curvature(m: &ProductManifold4D) -> Result<ScalarField> {
    if let Some(q) = q_constant_value(m) {
        let mut coeffs = DVector::zeros(m.n_modes());
        coeffs[0] = q * m.volume.sqrt();
        return ScalarField::from_coeffs(m, coeffs);
    }
    let values = q_values(m)?;
    ScalarField::from_values(m, values)
}

/// Per-node Q values (full mode).
fn q_values(m: &ProductManifold4D) -> Result<DVector<f64>> {
    m.weights()?; // full-mode guard with the standard error
    let ka = m.factor_a.curvature()?;
    let kb = m.factor_b.curvature()?;
    let la = m.factor_a.curvature_laplacian()?;
    let lb = m.factor_b.curvature_laplacian()?;
    let nb = m.factor_b.n_nodes();
    let n = m.n_nodes();
    let mut q = DVector::zeros(n);
    for y in 0..n {
        let (ya, yb) = (y / nb, y % nb);
        let (a, b) = (ka[ya], kb[yb]);
        q[y] = (la[ya] + lb[yb]) / 6.0 + (-a * a + 4.0 * a * b - b * b) / 6.0;
    }
    Ok(q)
}

/// Total curvature integral `k_P = ∫ Q dV` (exact closed form on
/// constant-curvature products, quadrature otherwise).
pub fn total_q(m: &ProductManifold4D) -> Result<f64> {
    if let Some(q) = q_constant_value(m) {
        return Ok(q * m.volume);
    }
    let q = q_values(m)?;
    Ok(m.weights()?.iter().zip(q.iter()).map(|(w, v)| w * v).sum())
}

/// Pointwise squared Weyl norm of the product metric:
/// `|W|^2 = (4/3)(K_a + K_b)^2`.
pub fn weyl_norm_sq(m: &ProductManifold4D) -> Result<DVector<f64>> {
    m.weights()?;
    let ka = m.factor_a.curvature()?;
    let kb = m.factor_b.curvature()?;
    let nb = m.factor_b.n_nodes();
    let n = m.n_nodes();
    let mut out = DVector::zeros(n);
    for y in 0..n {
        let sum = ka[y / nb] + kb[y % nb];
        out[y] = 4.0 / 3.0 * sum * sum;
    }
    Ok(out)
}

/// Residual of the four-dimensional Gauss-Bonnet identity:
/// `∫ (Q + |W|^2 / 8) dV − 4 π² χ`.
pub fn gauss_bonnet_defect(m: &ProductManifold4D) -> Result<f64> {
    let target = 4.0 * PI * PI * m.euler_char as f64;
    if let (Some(q), Some(ka), Some(kb)) = (
        q_constant_value(m),
        m.factor_a.curvature_constant,
        m.factor_b.curvature_constant,
    ) {
        let w = 4.0 / 3.0 * (ka + kb) * (ka + kb);
        return Ok((q + w / 8.0) * m.volume - target);
    }
    let q = q_values(m)?;
    let w2 = weyl_norm_sq(m)?;
    let total: f64 = m
        .weights()?
        .iter()
        .enumerate()
        .map(|(y, wy)| wy * (q[y] + w2[y] / 8.0))
        .sum();
    Ok(total - target)
}

/// Scalar curvature at a product node: `R = 2 (K_a + K_b)`.
pub fn scalar_curvature_at(m: &ProductManifold4D, y: usize) -> Result<f64> {
    let (ya, yb) = m.split_node(y);
    let ka = match m.factor_a.curvature_constant {
        Some(k) => k,
        None => m.factor_a.curvature()?[ya],
    };
    let kb = match m.factor_b.curvature_constant {
        Some(k) => k,
        None => m.factor_b.curvature()?[yb],
    };
    Ok(2.0 * (ka + kb))
}

// ---------------------------------------------------------------------------
// The fourth-order operator
// ---------------------------------------------------------------------------

/// The fourth-order operator restricted to the truncated product basis.
///
/// Defined through its quadratic form
/// `<Pu, v> = ∫ (lap u · lap v + (2/3) R ∇u·∇v − 2 Ric(∇u, ∇v)) dV`.
///
/// On constant-curvature products the basis diagonalizes the form with
/// `mu(alpha, beta) = s² + (4/3)(κ_a + κ_b) s − 2(κ_a α + κ_b β)`,
/// `s = alpha + beta`; otherwise a dense symmetric matrix is assembled by
/// quadrature after integrating the gradient terms by parts.
#[derive(Debug, Clone)]
pub struct PaneitzOperator {
    /// Diagonal entries in basis order (exact when `matrix` is `None`).
    pub mu: DVector<f64>,
    /// Dense symmetric form matrix (variable-curvature products).
    pub matrix: Option<DMatrix<f64>>,
}

impl PaneitzOperator {
    pub fn is_diagonal(&self) -> bool {
        self.matrix.is_none()
    }

    pub fn n_modes(&self) -> usize {
        self.mu.len()
    }

    /// Coefficients of `P u` from coefficients of `u`.
    pub fn apply(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        match &self.matrix {
            Some(a) => a * coeffs,
            None => coeffs.component_mul(&self.mu),
        }
    }

    /// Quadratic form `<P u, v>` in coefficient space.
    pub fn form(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.apply(u).dot(v)
    }

    /// All eigenvalues of the restricted operator, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut eigs: Vec<f64> = match &self.matrix {
            Some(a) => a.clone().symmetric_eigen().eigenvalues.iter().cloned().collect(),
            None => self.mu.iter().cloned().collect(),
        };
        eigs.sort_by(|x, y| x.total_cmp(y));
        eigs
    }
}

/// Closed-form diagonal entry for factor eigenvalues `(alpha, beta)` and
/// constant curvatures `(kappa_a, kappa_b)`.
pub fn mu_diagonal(alpha: f64, beta: f64, kappa_a: f64, kappa_b: f64) -> f64 {
    let s = alpha + beta;
    s * s + 4.0 / 3.0 * (kappa_a + kappa_b) * s - 2.0 * (kappa_a * alpha + kappa_b * beta)
}

/// Build the operator in its preferred representation: exact diagonal on
/// constant-curvature products, assembled matrix otherwise.
pub fn paneitz_operator(m: &ProductManifold4D) -> Result<PaneitzOperator> {
    if let (Some(ka), Some(kb)) = (
        m.factor_a.curvature_constant,
        m.factor_b.curvature_constant,
    ) {
        let ev_a = &m.factor_a.eigenvalues;
        let ev_b = &m.factor_b.eigenvalues;
        let mu = DVector::from_iterator(
            m.n_modes(),
            m.basis
                .iter()
                .map(|mode| mu_diagonal(ev_a[mode.ia], ev_b[mode.ib], ka, kb)),
        );
        return Ok(PaneitzOperator { mu, matrix: None });
    }
    let matrix = assemble_paneitz_matrix(m)?;
    let mu = DVector::from_iterator(m.n_modes(), (0..m.n_modes()).map(|i| matrix[(i, i)]));
    Ok(PaneitzOperator {
        mu,
        matrix: Some(matrix),
    })
}

/// Per-factor quadrature blocks: the curvature-weighted mode Gram
/// `W[p,q] = ∫ K φ_p φ_q` and the curvature-weighted Dirichlet block
/// `G[p,q] = ∫ K ∇φ_p·∇φ_q = (1/2)(−∫ (lap K) φ_p φ_q + (α_p + α_q) W[p,q])`
/// (integration by parts; exact for discrete eigenpairs of the mesh
/// operator because `L φ_q = α_q M φ_q` holds exactly).
fn factor_curvature_blocks(f: &SurfaceFactor) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let w_k = f.mode_gram_with_density(f.curvature()?)?;
    let w_lap = f.mode_gram_with_density(f.curvature_laplacian()?)?;
    let m = w_k.nrows();
    let mut g = DMatrix::zeros(m, m);
    for p in 0..m {
        for q in 0..m {
            g[(p, q)] = 0.5
                * (-w_lap[(p, q)] + (f.eigenvalues[p] + f.eigenvalues[q]) * w_k[(p, q)]);
        }
    }
    Ok((w_k, g))
}

/// Assemble the dense symmetric form matrix in the truncated basis by
/// factor-wise quadrature (always the quadrature route, regardless of
/// whether the closed-form diagonal applies; used for cross-validation).
pub fn assemble_paneitz_matrix(m: &ProductManifold4D) -> Result<DMatrix<f64>> {
    m.weights()?; // full mode required
    let (wa, ga) = factor_curvature_blocks(&m.factor_a)?;
    let (wb, gb) = factor_curvature_blocks(&m.factor_b)?;
    let ev_a = &m.factor_a.eigenvalues;
    let ev_b = &m.factor_b.eigenvalues;
    let n = m.n_modes();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let mi = m.basis[i];
        for j in i..n {
            let mj = m.basis[j];
            let same_a = mi.ia == mj.ia;
            let same_b = mi.ib == mj.ib;
            let mut val = 0.0;
            if i == j {
                val += mi.s * mj.s;
            }
            let ga_ij = if same_b { ga[(mi.ia, mj.ia)] } else { 0.0 };
            let gb_ij = if same_a { gb[(mi.ib, mj.ib)] } else { 0.0 };
            // (2/3) R ∇u·∇v with R = 2(K_a + K_b), split over factors.
            val += 4.0 / 3.0 * (ga_ij + gb_ij);
            if same_a {
                val += 4.0 / 3.0 * ev_a[mi.ia] * wb[(mi.ib, mj.ib)];
            }
            if same_b {
                val += 4.0 / 3.0 * wa[(mi.ia, mj.ia)] * ev_b[mi.ib];
            }
            // −2 Ric(∇u, ∇v) = −2 (K_a ∇_a u·∇_a v + K_b ∇_b u·∇_b v).
            val -= 2.0 * (ga_ij + gb_ij);
            a[(i, j)] = val;
            a[(j, i)] = val;
        }
    }
    Ok(a)
}

/// Spectrum summary of the restricted operator.
#[derive(Debug, Clone)]
pub struct SpectrumSummary {
    /// Count of eigenvalues below `-tol_zero` (with multiplicity).
    pub negative_count: usize,
    /// Count of eigenvalues in `[-tol_zero, tol_zero]`.
    pub kernel_dim: usize,
    pub tol_zero: f64,
    /// The `n_low` smallest eigenvalues, ascending.
    pub lowest: Vec<f64>,
    /// Number of basis modes the summary was computed over.
    pub n_modes: usize,
}

/// Eigenvalue counts and the lowest part of the spectrum.
///
/// The kernel window is `1e-8` times the largest eigenvalue magnitude.
pub fn spectrum(m: &ProductManifold4D, n_low: usize) -> Result<SpectrumSummary> {
    let op = paneitz_operator(m)?;
    Ok(spectrum_of(&op, n_low))
}

/// Spectrum summary of an already-built operator.
pub fn spectrum_of(op: &PaneitzOperator, n_low: usize) -> SpectrumSummary {
    let eigs = op.eigenvalues();
    let scale = eigs
        .iter()
        .map(|e| e.abs())
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let tol_zero = 1e-8 * scale;
    let negative_count = eigs.iter().filter(|&&e| e < -tol_zero).count();
    let kernel_dim = eigs.iter().filter(|&&e| e.abs() <= tol_zero).count();
    let lowest: Vec<f64> = eigs.iter().take(n_low.max(1)).cloned().collect();
    SpectrumSummary {
        negative_count,
        kernel_dim,
        tol_zero,
        lowest,
        n_modes: eigs.len(),
    }
}

// ---------------------------------------------------------------------------
// Conformal change of metric
// ---------------------------------------------------------------------------

/// Data of the conformal metric `g~ = e^{2w} g`.
#[derive(Debug, Clone)]
pub struct ConformalData {
    /// Curvature scalar of the conformal metric at nodes.
    pub q_tilde: ScalarField,
    /// Conformal volume weights `w_y e^{4 w(y)}`.
    pub conformal_weights: Vec<f64>,
    /// `∫ Q~ dV~` under the conformal volume (equals the base total
    /// curvature analytically).
    pub total_q_conformal: f64,
}

/// Curvature of the conformal metric via the transformation law
/// `Q~ = e^{-4w} (Q + (1/2) P w)`.
///
/// `max_abs_w` guards the exponentials (default
/// [`DEFAULT_CONFORMAL_BOUND`]).
pub fn conformal_q(
    m: &ProductManifold4D,
    w: &ScalarField,
    max_abs_w: Option<f64>,
) -> Result<ConformalData> {
    w.check_model(m)?;
    let bound = max_abs_w.unwrap_or(DEFAULT_CONFORMAL_BOUND);
    let w_values = w.values()?;
    let sup = w_values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if sup > bound {
        return Err(QcurvError::Validation(format!(
            "conformal factor has |w|_inf = {sup:.3}, beyond the bound {bound} \
             (e^{{4w}} would overflow the quadrature)"
        )));
    }
    let op = paneitz_operator(m)?;
    let pw = m.synthesis(&op.apply(w.coeffs()))?;
    let q = q_curvature(m)?;
    let q_values = q.values()?;
    let weights = m.weights()?;
    let n = m.n_nodes();
    let mut q_tilde = DVector::zeros(n);
    let mut conformal_weights = vec![0.0; n];
    let mut total = 0.0;
    for y in 0..n {
        let e4 = (4.0 * w_values[y]).exp();
        q_tilde[y] = (q_values[y] + 0.5 * pw[y]) / e4;
        conformal_weights[y] = weights[y] * e4;
        total += conformal_weights[y] * q_tilde[y];
    }
    Ok(ConformalData {
        q_tilde: ScalarField::from_values(m, q_tilde)?,
        conformal_weights,
        total_q_conformal: total,
    })
}

// ---------------------------------------------------------------------------
// Green's-function data
// ---------------------------------------------------------------------------

/// Green's-function data at a pole node.
#[derive(Debug, Clone)]
pub struct GreenData {
    pub pole: usize,
    /// `G(x, ·)` at nodes (mean-zero gauge).
    pub values: DVector<f64>,
    /// Regular part `S(x, ·) = G + 2 log dist(x, ·)`; the pole entry holds
    /// the extrapolated diagonal value.
    pub regular_part: DVector<f64>,
    /// `S(x, x)` by Richardson extrapolation of shell averages.
    pub s_at_pole: f64,
    /// Local curvature quantity
    /// `(div grad S)(x) + 4 |∇S(x)|² − R(x)/8` from the local quadratic
    /// model of `S(x, ·)` near the pole.
    pub funct_quantity: f64,
    /// Whether the curvature was rescaled to total `8 π²`.
    pub rescaled: bool,
}

/// Solve `P G(x,·) + 2 Q' = 16 π² δ_x` spectrally over the lowest
/// `n_modes` nonconstant basis modes.
///
/// `Q'` is the input curvature rescaled so that `∫ 2 Q' dV = 16 π²`
/// (required for solvability); on zero-total-curvature models the curvature
/// term is dropped and the right side becomes `16 π² (δ_x − 1/V)`. Passing
/// `rescale = false` is only allowed when the total curvature already
/// equals `8 π²`.
pub fn green_function(
    m: &ProductManifold4D,
    pole: usize,
    n_modes: usize,
    rescale: bool,
) -> Result<GreenData> {
    m.weights()?; // full mode required
    if pole >= m.n_nodes() {
        return Err(QcurvError::Validation(format!(
            "pole node {} out of range ({} nodes)",
            pole,
            m.n_nodes()
        )));
    }
    if n_modes < 16 {
        return Err(QcurvError::Config(format!(
            "Green construction needs at least 16 modes, got {n_modes}"
        )));
    }
    if n_modes > m.n_modes() {
        return Err(QcurvError::Config(format!(
            "Green construction requested {n_modes} modes but the truncated \
             basis has only {}; raise s_max",
            m.n_modes()
        )));
    }

    let op = paneitz_operator(m)?;
    let summary = spectrum_of(&op, 1);
    if summary.negative_count != 0 || summary.kernel_dim != 1 {
        return Err(QcurvError::Validation(format!(
            "Green construction needs a positive operator with only constants \
             in the kernel; found {} negative eigenvalues and kernel dimension {}",
            summary.negative_count, summary.kernel_dim
        )));
    }

    let kp = total_q(m)?;
    let kp_target = 8.0 * PI * PI;
    let kp_is_zero = kp.abs() < 1e-10 * (1.0 + m.volume);
    if !rescale && (kp - kp_target).abs() > 1e-6 * kp_target {
        return Err(QcurvError::Validation(format!(
            "the unrescaled Green equation is solvable only when the total \
             curvature is 8 pi^2 (got {kp:.6}); use the rescaled mode, which \
             substitutes Q' = (8 pi^2 / k_P) Q"
        )));
    }
    // Rescaled curvature coefficients (zero vector for k_P = 0 models,
    // where the curvature term is dropped entirely).
    let q_coeffs = if kp_is_zero {
        DVector::zeros(m.n_modes())
    } else {
        let q = q_curvature(m)?;
        q.coeffs() * (kp_target / kp)
    };

    // Right side 16 pi^2 delta_x - 2 Q' in coefficients; the constant mode
    // cancels exactly by the rescaling, enforce it.
    let phi_a = m.factor_a.eigenfunctions()?;
    let phi_b = m.factor_b.eigenfunctions()?;
    let (xa, xb) = m.split_node(pole);
    let mode_at_pole =
        |k: usize| phi_a[(xa, m.basis[k].ia)] * phi_b[(xb, m.basis[k].ib)];
    let mut rhs = DVector::zeros(n_modes);
    for k in 1..n_modes {
        rhs[k] = 16.0 * PI * PI * mode_at_pole(k) - 2.0 * q_coeffs[k];
    }

    // Solve in the nonconstant subspace.
    let mut g_coeffs = DVector::zeros(m.n_modes());
    match &op.matrix {
        None => {
            for k in 1..n_modes {
                g_coeffs[k] = rhs[k] / op.mu[k];
            }
        }
        Some(a) => {
            let sub = a.view((1, 1), (n_modes - 1, n_modes - 1)).into_owned();
            let chol = sub.cholesky().ok_or(QcurvError::Numeric {
                what: "Green solve: restricted operator is not positive definite".into(),
                residual: f64::NAN,
            })?;
            let sol = chol.solve(&rhs.rows(1, n_modes - 1).into_owned());
            for k in 1..n_modes {
                g_coeffs[k] = sol[k - 1];
            }
        }
    }
    let g_values = m.synthesis(&g_coeffs)?;

    // Regular part S = G + 2 log d away from the pole.
    let nb = m.factor_b.n_nodes();
    let da = m.factor_a.distances_from(xa)?;
    let db = m.factor_b.distances_from(xb)?;
    let n = m.n_nodes();
    let mut dist = vec![0.0f64; n];
    for y in 0..n {
        dist[y] = da[y / nb].hypot(db[y % nb]);
    }
    let mut s_vals = DVector::zeros(n);
    for y in 0..n {
        if y != pole {
            s_vals[y] = g_values[y] + 2.0 * dist[y].ln();
        }
    }

    // Shell statistics of S at radii proportional to the node spacing.
    let h = m.node_spacing()?;
    let shell = |r: f64| -> Result<(f64, f64, f64)> {
        // mean, variance, effective radius
        let mut window = 0.6 * h;
        for _ in 0..2 {
            let mut vals = Vec::new();
            let mut d2 = 0.0;
            for y in 0..n {
                if y != pole && (dist[y] - r).abs() <= window {
                    vals.push(s_vals[y]);
                    d2 += dist[y] * dist[y];
                }
            }
            if vals.len() >= 8 {
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (vals.len() - 1) as f64;
                return Ok((mean, var, (d2 / vals.len() as f64).sqrt()));
            }
            window *= 1.6;
        }
        Err(QcurvError::Numeric {
            what: format!(
                "too few nodes near the pole at radius {r:.4} for diagonal \
                 extrapolation; refine the grid"
            ),
            residual: f64::NAN,
        })
    };

    // Shell statistics at radii proportional to the spacing; index 0, 2, 5
    // are the doubling radii {2h, 4h, 8h} used for the diagonal value.
    let radii = [2.0, 3.0, 4.0, 5.0, 6.0, 8.0];
    let mut stats = Vec::with_capacity(radii.len());
    for &c in &radii {
        stats.push(shell(c * h)?);
    }
    let (m2, v2, d2) = stats[0];
    let (m4, v4, d4) = stats[2];
    let (m8, _, _) = stats[5];

    // Diagonal value: Richardson over radii {2h, 4h, 8h} (finest first;
    // shell averaging kills the odd terms, the leading error is d^2).
    let s_at_pole = richardson(&[m2, m4, m8], 2.0, 2.0);
    s_vals[pole] = s_at_pole;

    // Local quadratic model of S: fit shell means to a0 + a2 d^2.
    // Shell-averaging a smooth function gives
    //   mean(d) = S(x) + (tr Hess / 8) d^2 + O(d^3),
    // so (div grad S)(x) = tr Hess = 8 a2.
    let mut rows = Vec::new();
    let mut means = Vec::new();
    let mut fit_w = Vec::new();
    for &(mean, _, d_eff) in &stats {
        rows.push([1.0, d_eff * d_eff]);
        means.push(mean);
        fit_w.push(1.0 / (d_eff * d_eff));
    }
    let a_mat = DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j]);
    let b_vec = DVector::from_vec(means);
    let fit = weighted_lstsq(&a_mat, &b_vec, &fit_w, 1e-12)?;
    let div_grad_s = 8.0 * fit[1];

    // |grad S|^2 at the pole from shell variances: on a shell of radius d
    // the linear part contributes |g|^2 d^2 / 4 to the variance (mean of
    // (g.v)^2 over directions in four dimensions); the Hessian contributes
    // O(d^4), removed by one Richardson step.
    let est2 = 4.0 * v2 / (d2 * d2);
    let est4 = 4.0 * v4 / (d4 * d4);
    let grad_sq = ((4.0 * est2 - est4) / 3.0).max(0.0);

    let r_at_pole = scalar_curvature_at(m, pole)?;
    let funct_quantity = div_grad_s + 4.0 * grad_sq - r_at_pole / 8.0;

    Ok(GreenData {
        pole,
        values: g_values,
        regular_part: s_vals,
        s_at_pole,
        funct_quantity,
        rescaled: rescale,
    })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::factor::{
        make_flat_torus_factor, make_sphere_factor, make_synthetic_factor,
    };
    use crate::geometry::product::make_product;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;

    fn s2xs2(lmax: usize) -> ProductManifold4D {
        let a = make_sphere_factor(lmax, 2 * lmax + 2).unwrap();
        let b = make_sphere_factor(lmax, 2 * lmax + 2).unwrap();
        let cap = (lmax * (lmax + 1)) as f64;
        make_product(a, b, cap).unwrap()
    }

    fn t4() -> ProductManifold4D {
        let a = make_flat_torus_factor(1.0, 1.0, 3).unwrap();
        let b = make_flat_torus_factor(1.0, 1.0, 3).unwrap();
        make_product(a, b, 200.0).unwrap()
    }

    #[test]
    fn q_is_one_third_on_unit_sphere_product_and_zero_on_flat_torus() {
        let m = s2xs2(3);
        let q = q_curvature(&m).unwrap();
        for &v in q.values().unwrap().iter() {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-12);
        }
        let kp = total_q(&m).unwrap();
        assert_abs_diff_eq!(kp, 16.0 * PI * PI / 3.0, epsilon = 1e-10);

        let flat = t4();
        assert_eq!(total_q(&flat).unwrap(), 0.0);
        assert!(q_curvature(&flat).unwrap().values().unwrap().amax() == 0.0);
    }

    #[test]
    fn gauss_bonnet_balances_on_closed_form_products() {
        assert_abs_diff_eq!(gauss_bonnet_defect(&s2xs2(3)).unwrap(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(gauss_bonnet_defect(&t4()).unwrap(), 0.0, epsilon = 1e-12);
        // Mixed-sign curvature: hyperbolic-looking synthetic times sphere.
        let a = make_synthetic_factor(-1.0, vec![0.0, 1.0], 4.0 * PI).unwrap();
        let b = make_sphere_factor(2, 6).unwrap();
        let m = make_product(a, b, 4.0).unwrap();
        assert_eq!(m.euler_char, -4);
        assert_abs_diff_eq!(total_q(&m).unwrap(), -16.0 * PI * PI, epsilon = 1e-10);
        assert_abs_diff_eq!(gauss_bonnet_defect(&m).unwrap(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn diagonal_and_assembled_representations_agree_on_constant_curvature() {
        let m = s2xs2(3);
        let op = paneitz_operator(&m).unwrap();
        assert!(op.is_diagonal());
        let a = assemble_paneitz_matrix(&m).unwrap();
        let scale = op.mu.amax().max(1.0);
        for i in 0..m.n_modes() {
            for j in 0..m.n_modes() {
                let expect = if i == j { op.mu[i] } else { 0.0 };
                assert!(
                    (a[(i, j)] - expect).abs() < 1e-8 * scale,
                    "entry ({i},{j}): {} vs {}",
                    a[(i, j)],
                    expect
                );
            }
        }
    }

    #[test]
    fn lowest_nonconstant_sphere_product_mode_has_eigenvalue_sixteen_thirds() {
        let m = s2xs2(3);
        let op = paneitz_operator(&m).unwrap();
        // Basis is sorted by s; modes 1..=6 have s = 2 (degree-1 bands of
        // either factor).
        for k in 1..=6 {
            assert_abs_diff_eq!(m.basis[k].s, 2.0, epsilon = 1e-12);
            assert_abs_diff_eq!(op.mu[k], 16.0 / 3.0, epsilon = 1e-10);
            let mut e = DVector::zeros(m.n_modes());
            e[k] = 1.0;
            let pe = op.apply(&e);
            assert_abs_diff_eq!(pe[k], 16.0 / 3.0, epsilon = 1e-10);
            assert!(pe.iter().enumerate().all(|(i, &v)| i == k || v.abs() < 1e-12));
        }
    }

    #[test]
    fn flat_torus_operator_is_the_squared_laplacian() {
        let m = t4();
        let op = paneitz_operator(&m).unwrap();
        for (k, mode) in m.basis.iter().enumerate() {
            assert_abs_diff_eq!(op.mu[k], mode.s * mode.s, epsilon = 1e-9);
        }
    }

    #[test]
    fn negative_curvature_synthetic_factor_produces_a_negative_eigenvalue() {
        // Unit sphere times a spectral-only factor of curvature -3: the
        // tensor mode with factor eigenvalues (2, 0) has
        // mu = 4 + (4/3)(1-3)*2 - 2*2 = -16/3.
        let a = make_sphere_factor(3, 8).unwrap();
        let area = 4.0 * PI / 3.0; // 2 pi chi / kappa with chi = -2, kappa = -3
        let b = make_synthetic_factor(-3.0, vec![0.0, 7.0], area).unwrap();
        let m = make_product(a, b, 9.0).unwrap();
        let summary = spectrum(&m, 4).unwrap();
        assert!(summary.negative_count >= 1);
        assert!(summary
            .lowest
            .iter()
            .any(|e| (e - (-16.0 / 3.0)).abs() < 1e-8));
        assert_abs_diff_eq!(
            mu_diagonal(2.0, 0.0, 1.0, -3.0),
            -16.0 / 3.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn operator_annihilates_constants_and_form_is_shift_invariant() {
        let m = s2xs2(3);
        let op = paneitz_operator(&m).unwrap();
        let mut ones = DVector::zeros(m.n_modes());
        ones[0] = m.volume.sqrt(); // coefficients of the constant 1
        assert!(op.apply(&ones).norm() < 1e-8);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let u = DVector::from_fn(m.n_modes(), |_, _| rng.gen_range(-1.0..1.0));
        let mut shifted = u.clone();
        shifted[0] += 0.7 * m.volume.sqrt();
        assert_abs_diff_eq!(
            op.form(&u, &u),
            op.form(&shifted, &shifted),
            epsilon = 1e-9 * op.form(&u, &u).abs().max(1.0)
        );
    }

    #[test]
    fn sphere_product_spectrum_is_nonnegative_with_trivial_kernel() {
        let summary = spectrum(&s2xs2(3), 3).unwrap();
        assert_eq!(summary.negative_count, 0);
        assert_eq!(summary.kernel_dim, 1);
        assert_abs_diff_eq!(summary.lowest[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn conformal_total_curvature_is_invariant() {
        let m = s2xs2(4);
        let kp = total_q(&m).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for _ in 0..5 {
            let coeffs = DVector::from_fn(m.n_modes(), |_, _| rng.gen_range(-0.1..0.1));
            let w = ScalarField::from_coeffs(&m, coeffs).unwrap();
            let data = conformal_q(&m, &w, None).unwrap();
            assert!(
                (data.total_q_conformal - kp).abs() < 1e-6 * kp.abs().max(1.0),
                "conformal drift {}",
                data.total_q_conformal - kp
            );
        }
        // w = 0 reproduces Q exactly.
        let zero = ScalarField::zero(&m);
        let data = conformal_q(&m, &zero, None).unwrap();
        for &v in data.q_tilde.values().unwrap().iter() {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-10);
        }
        // Overflow guard.
        let big = ScalarField::zero(&m).shifted(&m, 100.0);
        assert!(matches!(
            conformal_q(&m, &big, None),
            Err(QcurvError::Validation(_))
        ));
    }

    #[test]
    fn green_solves_its_defining_equation_weakly() {
        let m = s2xs2(6);
        let n_modes = m.n_modes();
        let pole = 3 * m.factor_b.n_nodes() + 5;
        let data = green_function(&m, pole, n_modes, true).unwrap();

        // Weak residual of P G + 2Q' - 16 pi^2 delta_x against random
        // band-limited test functions.
        let op = paneitz_operator(&m).unwrap();
        let kp = total_q(&m).unwrap();
        let q_coeffs = q_curvature(&m).unwrap().coeffs() * (8.0 * PI * PI / kp);
        let g_coeffs = m.analysis(&data.values).unwrap();
        let phi_a = m.factor_a.eigenfunctions().unwrap();
        let phi_b = m.factor_b.eigenfunctions().unwrap();
        let (xa, xb) = m.split_node(pole);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..5 {
            let psi = DVector::from_fn(m.n_modes(), |_, _| rng.gen_range(-1.0..1.0));
            let psi_at_pole: f64 = (0..m.n_modes())
                .map(|k| psi[k] * phi_a[(xa, m.basis[k].ia)] * phi_b[(xb, m.basis[k].ib)])
                .sum();
            let residual = op.form(&g_coeffs, &psi) + 2.0 * q_coeffs.dot(&psi)
                - 16.0 * PI * PI * psi_at_pole;
            assert!(
                residual.abs() < 1e-3 * psi.norm(),
                "weak residual {residual}"
            );
        }
    }

    #[test]
    fn green_regular_part_is_symmetric_on_the_homogeneous_model() {
        let m = s2xs2(6);
        let n_modes = m.n_modes();
        let nb = m.factor_b.n_nodes();
        let x = 2 * nb + 3;
        let y = 9 * nb + 11;
        let gx = green_function(&m, x, n_modes, true).unwrap();
        let gy = green_function(&m, y, n_modes, true).unwrap();
        assert!(
            (gx.regular_part[y] - gy.regular_part[x]).abs() < 1e-3,
            "S(x,y) = {}, S(y,x) = {}",
            gx.regular_part[y],
            gy.regular_part[x]
        );
    }

    #[test]
    fn green_rejects_unrescaled_curvature_and_indefinite_operators() {
        let m = s2xs2(4);
        let err = green_function(&m, 0, 32, false).unwrap_err();
        match err {
            QcurvError::Validation(msg) => assert!(msg.contains("rescaled")),
            other => panic!("unexpected error {other:?}"),
        }
        // Negative-eigenvalue model refuses.
        let a = make_sphere_factor(3, 8).unwrap();
        let b = make_synthetic_factor(-3.0, vec![0.0, 7.0], 4.0 * PI).unwrap();
        let neg = make_product(a, b, 9.0).unwrap();
        assert!(green_function(&neg, 0, 16, true).is_err());
    }
}
