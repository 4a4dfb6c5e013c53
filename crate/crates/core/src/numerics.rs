//! Shared numerical primitives: Gauss-Legendre quadrature, normalized
//! associated Legendre functions for real spherical harmonics, least-squares
//! fits, Richardson extrapolation, and stable log-sum-exp.

use nalgebra::{DMatrix, DVector};

use crate::error::{QcurvError, Result};

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
///
/// Nodes are found by Newton iteration on the Legendre polynomial starting
/// from the Chebyshev-angle estimate; for the orders used here (< 200) this
/// converges to machine precision in a handful of steps.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    // Symmetric rule: solve for the upper half and mirror.
    for i in 0..n.div_ceil(2) {
        // Initial guess: Chebyshev-like angle (Abramowitz & Stegun 25.4.38).
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..60 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x.abs(); // ascending order: negative half first
        nodes[n - 1 - i] = x.abs();
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
        let (_, dp) = legendre_with_derivative(n, 0.0);
        weights[n / 2] = 2.0 / (dp * dp);
    }
    (nodes, weights)
}

/// Legendre polynomial `P_n(x)` and its derivative via the three-term
/// recurrence (stable for all `x` in `[-1, 1]`).
pub fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 2..=n {
        let kf = k as f64;
        let p_next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = p_next;
    }
    // P'_n(x) = n (x P_n - P_{n-1}) / (x^2 - 1)
    let dp = if (x * x - 1.0).abs() < 1e-14 {
        // Endpoint formula: P'_n(+-1) = (+-1)^{n-1} n(n+1)/2
        let sign = if x > 0.0 { 1.0 } else { (-1.0_f64).powi(n as i32 - 1) };
        sign * (n * (n + 1)) as f64 / 2.0
    } else {
        (n as f64) * (x * p - p_prev) / (x * x - 1.0)
    };
    (p, dp)
}

/// Gauss-Legendre rule mapped onto `[a, b]`.
pub fn gauss_legendre_on(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let (xs, ws) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (
        xs.iter().map(|x| mid + half * x).collect(),
        ws.iter().map(|w| w * half).collect(),
    )
}

/// Composite Gauss-Legendre rule over consecutive panels
/// `[breaks[0], breaks[1]], [breaks[1], breaks[2]], ...`
/// with `n_per_panel` points per panel. Zero-length panels are skipped.
pub fn composite_gauss_legendre(breaks: &[f64], n_per_panel: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for pair in breaks.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b - a <= 0.0 {
            continue;
        }
        let (xs, ws) = gauss_legendre_on(a, b, n_per_panel);
        nodes.extend(xs);
        weights.extend(ws);
    }
    (nodes, weights)
}

/// Flat index of the fully normalized associated Legendre value
/// `p[l][m]` (`0 <= m <= l <= lmax`) inside the table produced by
/// [`normalized_assoc_legendre`].
#[inline]
pub fn alp_index(l: usize, m: usize) -> usize {
    debug_assert!(m <= l);
    l * (l + 1) / 2 + m
}

/// Fully normalized associated Legendre functions at `x = cos(theta)`,
/// for all `0 <= m <= l <= lmax`, as a flat table indexed by [`alp_index`].
///
/// Normalization is chosen so the real spherical harmonics
/// `Y_{l,0} = p[l][0]`, `Y_{l,m}^{cos} = sqrt(2) p[l][m] cos(m phi)`,
/// `Y_{l,m}^{sin} = sqrt(2) p[l][m] sin(m phi)` are orthonormal in
/// `L^2` of the unit sphere.
pub fn normalized_assoc_legendre(lmax: usize, x: f64) -> Vec<f64> {
    let size = (lmax + 1) * (lmax + 2) / 2;
    let mut p = vec![0.0; size];
    let sin_theta = (1.0 - x * x).max(0.0).sqrt();
    p[alp_index(0, 0)] = (1.0 / (4.0 * std::f64::consts::PI)).sqrt();
    // Diagonal: p[m][m]
    for m in 1..=lmax {
        let mf = m as f64;
        p[alp_index(m, m)] =
            ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * sin_theta * p[alp_index(m - 1, m - 1)];
    }
    // First off-diagonal: p[m+1][m]
    for m in 0..lmax {
        let mf = m as f64;
        p[alp_index(m + 1, m)] = (2.0 * mf + 3.0).sqrt() * x * p[alp_index(m, m)];
    }
    // General recurrence upward in l.
    for m in 0..=lmax {
        for l in (m + 2)..=lmax {
            let lf = l as f64;
            let mf = m as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0))
                .sqrt();
            p[alp_index(l, m)] = a * (x * p[alp_index(l - 1, m)] - b * p[alp_index(l - 2, m)]);
        }
    }
    p
}

/// Ordinary least-squares line fit `y ~ slope * x + intercept`.
///
/// Returns `(slope, intercept)`. Panics if fewer than two points or if all
/// abscissae coincide.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "line fit needs at least two points");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    assert!(sxx > 0.0, "line fit needs distinct abscissae");
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Weighted least squares `min || W^{1/2} (A x - b) ||` solved by SVD.
///
/// Weights must be nonnegative. Fails if the weighted system is rank
/// deficient beyond `rank_tol` relative to the largest singular value.
pub fn weighted_lstsq(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    w: &[f64],
    rank_tol: f64,
) -> Result<DVector<f64>> {
    assert_eq!(a.nrows(), b.len());
    assert_eq!(a.nrows(), w.len());
    let mut aw = a.clone();
    let mut bw = b.clone();
    for (i, &wi) in w.iter().enumerate() {
        let s = wi.max(0.0).sqrt();
        for j in 0..a.ncols() {
            aw[(i, j)] *= s;
        }
        bw[i] *= s;
    }
    let svd = aw.svd(true, true);
    let smax = svd.singular_values.max();
    if smax <= 0.0 || svd.singular_values.min() < rank_tol * smax {
        return Err(QcurvError::SingularLinearization {
            sigma_min: svd.singular_values.min(),
        });
    }
    svd.solve(&bw, 0.0)
        .map_err(|e| QcurvError::Numeric { what: format!("least squares solve: {e}"), residual: f64::NAN })
}

/// Iterated Richardson extrapolation for a quantity with an even error
/// expansion `f(h) = A + c1 h^p + c2 h^{2p} + ...`.
///
/// `values[i]` must be the sample at step `h * ratio^i` (coarsening by
/// `ratio` each time). Returns the highest-order estimate of `A`.
pub fn richardson(values: &[f64], ratio: f64, p: f64) -> f64 {
    assert!(!values.is_empty());
    let mut table: Vec<f64> = values.to_vec();
    let mut order = p;
    while table.len() > 1 {
        let factor = ratio.powf(order);
        let mut next = Vec::with_capacity(table.len() - 1);
        for i in 0..table.len() - 1 {
            // table[i] at step h_i, table[i+1] at step h_i * ratio.
            next.push((factor * table[i] - table[i + 1]) / (factor - 1.0));
        }
        table = next;
        order += p;
    }
    table[0]
}

/// Numerically stable `log( sum_i w_i * exp(v_i) )` for positive weights.
pub fn log_sum_exp_weighted(weights: &[f64], values: &[f64]) -> f64 {
    assert_eq!(weights.len(), values.len());
    assert!(!values.is_empty());
    let vmax = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !vmax.is_finite() {
        return vmax;
    }
    let sum: f64 = weights
        .iter()
        .zip(values)
        .map(|(w, v)| w * (v - vmax).exp())
        .sum();
    vmax + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        // An n-point rule is exact through degree 2n-1.
        let (xs, ws) = gauss_legendre(5);
        for degree in 0..=9usize {
            let quad: f64 = xs
                .iter()
                .zip(&ws)
                .map(|(x, w)| w * x.powi(degree as i32))
                .sum();
            let exact = if degree % 2 == 1 {
                0.0
            } else {
                2.0 / (degree as f64 + 1.0)
            };
            assert_abs_diff_eq!(quad, exact, epsilon = 1e-13);
        }
    }

    #[test]
    fn gauss_legendre_weights_sum_to_measure() {
        for n in [1, 2, 3, 7, 16, 64, 129] {
            let (_, ws) = gauss_legendre(n);
            assert_abs_diff_eq!(ws.iter().sum::<f64>(), 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn mapped_rule_integrates_sine() {
        let (xs, ws) = gauss_legendre_on(0.0, std::f64::consts::PI, 20);
        let quad: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.sin()).sum();
        assert_abs_diff_eq!(quad, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn composite_rule_handles_panels_and_degenerate_breaks() {
        // exp over [0, 2] split unevenly, with one zero-length panel.
        let (xs, ws) = composite_gauss_legendre(&[0.0, 0.3, 0.3, 1.1, 2.0], 12);
        let quad: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.exp()).sum();
        assert_abs_diff_eq!(quad, 2.0_f64.exp() - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn normalized_legendre_orthonormal_under_quadrature() {
        // Orthonormality over the sphere reduces, for fixed m, to
        // integral of p[l][m] p[l'][m] dx = delta_{l l'} / (2 pi).
        let lmax = 10;
        let (xs, ws) = gauss_legendre(lmax + 2);
        let tables: Vec<Vec<f64>> = xs
            .iter()
            .map(|&x| normalized_assoc_legendre(lmax, x))
            .collect();
        for m in 0..=lmax {
            for l in m..=lmax {
                for lp in m..=lmax {
                    let quad: f64 = tables
                        .iter()
                        .zip(&ws)
                        .map(|(t, w)| w * t[alp_index(l, m)] * t[alp_index(lp, m)])
                        .sum();
                    let expected = if l == lp {
                        1.0 / (2.0 * std::f64::consts::PI)
                    } else {
                        0.0
                    };
                    assert_abs_diff_eq!(quad, expected, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn normalized_legendre_matches_closed_forms() {
        // p[1][0] = sqrt(3/4pi) x ; p[2][0] = sqrt(5/16pi)(3x^2 - 1).
        let x: f64 = 0.37;
        let t = normalized_assoc_legendre(2, x);
        let pi = std::f64::consts::PI;
        assert_abs_diff_eq!(t[alp_index(1, 0)], (3.0 / (4.0 * pi)).sqrt() * x, epsilon = 1e-14);
        assert_abs_diff_eq!(
            t[alp_index(2, 0)],
            (5.0 / (16.0 * pi)).sqrt() * (3.0 * x * x - 1.0),
            epsilon = 1e-14
        );
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.5];
        let ys: Vec<f64> = xs.iter().map(|x| -2.5 * x + 0.75).collect();
        let (slope, intercept) = fit_line(&xs, &ys);
        assert_abs_diff_eq!(slope, -2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(intercept, 0.75, epsilon = 1e-12);
    }

    #[test]
    fn richardson_removes_even_error_terms() {
        // f(h) = A + 3 h^2 - 2 h^4 sampled at h, 2h, 4h.
        let a = 1.234567;
        let f = |h: f64| a + 3.0 * h * h - 2.0 * h.powi(4);
        let est = richardson(&[f(0.1), f(0.2), f(0.4)], 2.0, 2.0);
        assert_abs_diff_eq!(est, a, epsilon = 1e-10);
    }

    #[test]
    fn log_sum_exp_is_shift_stable() {
        let w = [0.5, 1.5, 2.0];
        let v = [1000.0, 1001.0, 999.0];
        let got = log_sum_exp_weighted(&w, &v);
        // Factor e^{1000} out by hand.
        let by_hand = 1000.0 + (0.5 + 1.5 * 1.0_f64.exp() + 2.0 * (-1.0_f64).exp()).ln();
        assert_abs_diff_eq!(got, by_hand, epsilon = 1e-12);
    }

    #[test]
    fn weighted_lstsq_solves_consistent_system() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let x_true = DVector::from_column_slice(&[0.5, -1.25]);
        let b = &a * &x_true;
        let x = weighted_lstsq(&a, &b, &[1.0, 2.0, 1.0, 0.5], 1e-12).unwrap();
        assert_abs_diff_eq!((x - x_true).norm(), 0.0, epsilon = 1e-12);
    }
}
