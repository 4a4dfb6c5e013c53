//! Solvers for the prescribed-curvature equation
//! `P u + 2 rho Q = 2 rho k_P e^{4u} / ∫ e^{4u} dV`:
//! preconditioned gradient descent on the deformed functional, Newton
//! refinement in the truncated basis, continuation in the deformation
//! parameter, and a min-max witness estimate over scaled concentration
//! profiles.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bubblecalc::BubbleContext;
use crate::bubbles::{bubble_field, Barycenter, BubbleAtom, CutoffSpec};
use crate::error::{QcurvError, Result};
use crate::functional::EulerFunctional;
use crate::geometry::product::{ProductManifold4D, Provenance, ScalarField};
use crate::paneitz::{conformal_q, spectrum_of};

const PI: f64 = std::f64::consts::PI;

/// Total-curvature regime relative to the quantization levels `8 k pi^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeTag {
    /// `k_P < 8 pi^2` with a nonnegative operator: minimization regime.
    Subcritical,
    /// `8 k pi^2 < k_P < 8 (k+1) pi^2`, `k >= 1`, nonnegative operator.
    Supercritical { k: usize },
    /// The operator has negative modes.
    NegativeModes { count: usize },
}

/// Starting point of an iterative solve.
#[derive(Debug, Clone)]
pub enum Initializer {
    Zero,
    /// Concentration profile `phi_{lambda, sigma}` (mean-zero gauged).
    Bubble {
        atoms: Vec<BubbleAtom>,
        lambda: f64,
    },
    Field(ScalarField),
}

/// Iteration controls shared by the solvers.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// Stop when the coefficient-space gradient norm falls below this.
    pub grad_tol: f64,
    /// Converged when the equation residual norm falls below this.
    pub residual_tol: f64,
    /// Backtracking shrink factor in (0, 1).
    pub backtrack_shrink: f64,
    /// Sufficient-decrease fraction in (0, 1/2].
    pub backtrack_c1: f64,
    /// Deformation parameter for single solves.
    pub rho: f64,
    /// Continuation schedule start/end/step (within [0.5, 1.5]).
    pub rho_start: f64,
    pub rho_end: f64,
    pub rho_step: f64,
    /// Newton iteration cap.
    pub newton_max_iters: usize,
    /// Newton basin threshold on the residual norm;
    /// `None` = `1e-2 * max(|k_P|, 1) / V`.
    pub basin_threshold: Option<f64>,
    /// Newton subspace size cap (lowest modes, constant excluded).
    pub newton_subspace: usize,
    pub initializer: Initializer,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 500,
            grad_tol: 1e-9,
            residual_tol: 1e-8,
            backtrack_shrink: 0.5,
            backtrack_c1: 1e-4,
            rho: 1.0,
            rho_start: 0.9,
            rho_end: 1.0,
            rho_step: 0.02,
            newton_max_iters: 12,
            basin_threshold: None,
            newton_subspace: 150,
            initializer: Initializer::Zero,
            seed: 0,
        }
    }
}

impl SolveOptions {
    fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) || !(self.residual_tol > 0.0) {
            return Err(QcurvError::Config(format!(
                "tolerances must be positive (grad {}, residual {})",
                self.grad_tol, self.residual_tol
            )));
        }
        if !(self.backtrack_shrink > 0.0 && self.backtrack_shrink < 1.0) {
            return Err(QcurvError::Config(format!(
                "backtracking shrink must lie in (0, 1), got {}",
                self.backtrack_shrink
            )));
        }
        if !(self.backtrack_c1 > 0.0 && self.backtrack_c1 <= 0.5) {
            return Err(QcurvError::Config(format!(
                "sufficient-decrease fraction must lie in (0, 1/2], got {}",
                self.backtrack_c1
            )));
        }
        for (name, rho) in [
            ("rho", self.rho),
            ("rho_start", self.rho_start),
            ("rho_end", self.rho_end),
        ] {
            if !(0.5..=1.5).contains(&rho) {
                return Err(QcurvError::Config(format!(
                    "{name} = {rho} outside the supported deformation window [0.5, 1.5]"
                )));
            }
        }
        if !(self.rho_step > 0.0) {
            return Err(QcurvError::Config(format!(
                "rho step must be positive, got {}",
                self.rho_step
            )));
        }
        if self.max_iters == 0 || self.newton_max_iters == 0 {
            return Err(QcurvError::Config("iteration caps must be at least 1".into()));
        }
        Ok(())
    }

    fn build_start(&self, m: &ProductManifold4D) -> Result<ScalarField> {
        let u = match &self.initializer {
            Initializer::Zero => ScalarField::zero(m),
            Initializer::Bubble { atoms, lambda } => {
                let sigma = Barycenter::new(m, atoms.clone())?;
                bubble_field(m, &sigma, *lambda, CutoffSpec::default_for(m)?)?
            }
            Initializer::Field(f) => {
                f.check_model(m)?;
                f.clone()
            }
        };
        Ok(u.mean_zero(m))
    }
}

/// One accepted iteration of a solve.
#[derive(Debug, Clone, Copy)]
pub struct IterRecord {
    pub iter: usize,
    pub ii_value: f64,
    pub grad_norm: f64,
    pub residual_norm: f64,
    pub sup_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    /// Iteration budget exhausted or a line search stalled; the report
    /// carries the best iterate and diagnostics instead of an exception.
    NotConverged { reason: String },
}

/// Result of a solve: the gauged field, residual diagnostics, and the
/// conformal-invariance checks of the solved metric.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub history: Vec<IterRecord>,
    /// Mean-zero representative of the solution.
    pub field: ScalarField,
    /// Same solution shifted so that `∫ e^{4u} dV = 1`.
    pub normalized_field: ScalarField,
    pub rho: f64,
    /// `k_P / ∫ e^{4u} dV` for the mean-zero field.
    pub q_bar: f64,
    /// `sup |Q~ - q_bar| / max(|q_bar|, 1/V)` in the solved metric.
    pub q_tilde_sup_deviation: f64,
    /// `|∫ Q~ dV~ - k_P|` (conformal invariance of the total).
    pub kp_conformal_drift: f64,
    pub residual_norm: f64,
    pub ii_value: f64,
    pub regime: RegimeTag,
}

/// Classify the model regime; refuses the degenerate quantization levels
/// `k_P = 8 k pi^2` (`k >= 1`) where the existence theory's compactness
/// hypothesis `k_P != 8 k pi^2` fails.
pub fn classify_regime(m: &ProductManifold4D) -> Result<RegimeTag> {
    let f = EulerFunctional::new(m)?;
    classify_regime_of(&f)
}

fn classify_regime_of(f: &EulerFunctional) -> Result<RegimeTag> {
    let k_p = f.k_p;
    let level = 8.0 * PI * PI;
    let near = (k_p / level).round();
    if near >= 1.0 && (k_p - near * level).abs() <= 1e-9 * level * near {
        return Err(QcurvError::Validation(format!(
            "total curvature k_P = {k_p:.12e} sits exactly on the quantization level \
             8*{near:.0}*pi^2; the existence theory requires k_P != 8k pi^2 and \
             compactness fails there, so the solver refuses this degenerate case"
        )));
    }
    let summary = spectrum_of(&f.operator, 4);
    if summary.negative_count > 0 {
        return Ok(RegimeTag::NegativeModes {
            count: summary.negative_count,
        });
    }
    if k_p < level {
        Ok(RegimeTag::Subcritical)
    } else {
        Ok(RegimeTag::Supercritical {
            k: (k_p / level).floor() as usize,
        })
    }
}

/// Equation residual in coefficient space:
/// `F(u) = P u + 2 rho Q - 2 rho k_P e^{4u}/∫e^{4u}` (half the gradient).
fn residual_coeffs(f: &EulerFunctional, u: &ScalarField, rho: f64) -> Result<DVector<f64>> {
    Ok(f.gradient_coeffs(u, rho)? / 2.0)
}

fn finalize_report(
    f: &EulerFunctional,
    m: &ProductManifold4D,
    u: ScalarField,
    rho: f64,
    status: SolveStatus,
    history: Vec<IterRecord>,
) -> Result<SolveReport> {
    let residual_norm = residual_coeffs(f, &u, rho)?.norm();
    let ii_value = f.value(&u, rho)?.total;
    let log_vol = f.log_conformal_volume(&u)?;
    let q_bar = f.k_p / log_vol.exp();
    let normalized_field = u.shifted(m, -0.25 * log_vol);

    // Conformal checks in the solved metric. A diverged iterate can leave
    // the conformal factor outside the overflow guard; the diagnostics then
    // become NaN rather than failing the whole report.
    let (q_tilde_sup_deviation, kp_conformal_drift) = match conformal_q(m, &u, None) {
        Ok(conf) => {
            let q_tilde = conf.q_tilde.values()?;
            let scale = q_bar.abs().max(1.0 / m.volume);
            let dev = q_tilde
                .iter()
                .map(|&q| (q - q_bar).abs())
                .fold(0.0f64, f64::max)
                / scale;
            (dev, (conf.total_q_conformal - f.k_p).abs())
        }
        Err(_) => (f64::NAN, f64::NAN),
    };
    let regime = classify_regime_of(f)?;
    Ok(SolveReport {
        status,
        history,
        field: u,
        normalized_field,
        rho,
        q_bar,
        q_tilde_sup_deviation,
        kp_conformal_drift,
        residual_norm,
        ii_value,
        regime,
    })
}

/// Minimize the deformed functional: diagonally preconditioned
/// backtracking gradient descent in the mean-zero gauge until the iterate
/// enters the Newton basin, then Newton polish to the residual tolerance.
///
/// Accepted descent steps never increase the functional. Plain descent
/// cannot certify decreases once they fall below the floating-point
/// resolution of the functional value, which is why the endgame belongs to
/// Newton. Non-convergence is reported in the status, not as an error.
pub fn minimize_ii(m: &ProductManifold4D, opts: &SolveOptions) -> Result<SolveReport> {
    opts.validate()?;
    let f = EulerFunctional::new(m)?;
    classify_regime_of(&f)?; // refuse degenerate levels up front
    let rho = opts.rho;
    let basin = opts
        .basin_threshold
        .unwrap_or(1e-2 * f.k_p.abs().max(1.0) / m.volume);
    let mut u = opts.build_start(m)?;
    let mut value = f.value(&u, rho)?.total;
    let mut history = Vec::new();

    // Diagonal preconditioner: the operator diagonal plus the scale of the
    // exponential term's curvature, floored away from zero.
    let mass_scale = 8.0 * rho * f.k_p.abs() / m.volume;
    let op_scale = f.operator.mu.amax().max(1.0);
    let precond: DVector<f64> = f
        .operator
        .mu
        .map(|mu| (2.0 * mu.abs() + mass_scale).max(1e-9 * op_scale));

    let mut status = SolveStatus::NotConverged {
        reason: format!("iteration budget of {} exhausted", opts.max_iters),
    };
    let mut in_basin = false;
    for iter in 0..opts.max_iters {
        let g = f.gradient_coeffs(&u, rho)?;
        let grad_norm = g.norm();
        history.push(IterRecord {
            iter,
            ii_value: value,
            grad_norm,
            residual_norm: grad_norm / 2.0,
            sup_norm: u.values()?.amax(),
        });
        if grad_norm < opts.grad_tol {
            status = SolveStatus::Converged;
            break;
        }
        if grad_norm / 2.0 < basin {
            in_basin = true;
            break;
        }
        let direction = ScalarField::from_coeffs(m, g.component_div(&precond).map(|x| -x))?;
        let slope = g.dot(direction.coeffs());
        debug_assert!(slope <= 0.0);
        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-14 {
            let trial = u.axpy(step, &direction)?;
            let trial_value = f.value(&trial, rho)?.total;
            if trial_value <= value + opts.backtrack_c1 * step * slope {
                u = trial.mean_zero(m);
                value = trial_value;
                accepted = true;
                break;
            }
            step *= opts.backtrack_shrink;
        }
        if !accepted {
            status = SolveStatus::NotConverged {
                reason: format!(
                    "line search stalled at iteration {iter} (gradient norm {grad_norm:.3e})"
                ),
            };
            break;
        }
    }

    if in_basin && status != SolveStatus::Converged {
        if let Ok(mut polished) = newton_refine_with(&f, m, &u, rho, opts) {
            let offset = history.len();
            for rec in &mut polished.history {
                rec.iter += offset;
            }
            let mut merged = history;
            merged.append(&mut polished.history);
            polished.history = merged;
            return Ok(polished);
        }
        // Newton declined (for instance a singular linearization at a
        // degenerate critical point): fall back to the honest descent state.
        status = SolveStatus::NotConverged {
            reason: "descent reached the Newton basin but the Newton polish failed".into(),
        };
    }
    finalize_report(&f, m, u, rho, status, history)
}

/// Density-weighted mode Gram `B[p,q] = sum_y w_y d_y phi_p(y) phi_q(y)`
/// and moment `m_p = sum_y w_y d_y phi_p(y)` over the lowest `n_cut`
/// product modes, assembled in node blocks.
fn density_gram_cut(
    m: &ProductManifold4D,
    density: &DVector<f64>,
    n_cut: usize,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let weights = m.weights()?;
    let ea = m.factor_a.eigenfunctions()?;
    let eb = m.factor_b.eigenfunctions()?;
    let n = m.n_nodes();
    let mut gram = DMatrix::zeros(n_cut, n_cut);
    let mut moment = DVector::zeros(n_cut);
    const BLOCK: usize = 2048;
    let mut phi = DMatrix::zeros(BLOCK, n_cut);
    let mut root = DVector::zeros(BLOCK);
    let mut y0 = 0;
    while y0 < n {
        let len = BLOCK.min(n - y0);
        for r in 0..len {
            let y = y0 + r;
            let (ya, yb) = m.split_node(y);
            let wd = (weights[y] * density[y]).max(0.0);
            let s = wd.sqrt();
            root[r] = s;
            for (p, mode) in m.basis[..n_cut].iter().enumerate() {
                phi[(r, p)] = s * ea[(ya, mode.ia)] * eb[(yb, mode.ib)];
            }
        }
        let phi_view = phi.rows(0, len);
        gram.gemm_tr(1.0, &phi_view, &phi_view, 1.0);
        moment.gemv_tr(1.0, &phi_view, &root.rows(0, len), 1.0);
        y0 += len;
    }
    Ok((gram, moment))
}

/// Newton refinement of the prescribed-curvature equation at fixed `rho`,
/// on the lowest-mode subspace (constant mode excluded by the mean-zero
/// gauge). The reported residual is always the full-basis one.
///
/// Requires the start to be inside the Newton basin (residual below the
/// threshold); a degenerate linearization fails with the smallest singular
/// value named.
pub fn newton_refine(
    m: &ProductManifold4D,
    u0: &ScalarField,
    rho: f64,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    opts.validate()?;
    let f = EulerFunctional::new(m)?;
    classify_regime_of(&f)?;
    newton_refine_with(&f, m, u0, rho, opts)
}

fn newton_refine_with(
    f: &EulerFunctional,
    m: &ProductManifold4D,
    u0: &ScalarField,
    rho: f64,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let mut u = u0.mean_zero(m);
    let basin = opts
        .basin_threshold
        .unwrap_or(1e-2 * f.k_p.abs().max(1.0) / m.volume);
    let mut residual = residual_coeffs(f, &u, rho)?;
    if residual.norm() > basin {
        return Err(QcurvError::Validation(format!(
            "start is outside the Newton basin: residual {:.3e} exceeds threshold {:.3e}",
            residual.norm(),
            basin
        )));
    }

    let n_modes = m.n_modes();
    let n_cut = opts.newton_subspace.min(n_modes);
    let mut history = Vec::new();
    let mut status = SolveStatus::NotConverged {
        reason: format!("Newton budget of {} exhausted", opts.newton_max_iters),
    };
    for iter in 0..opts.newton_max_iters {
        let res_norm = residual.norm();
        history.push(IterRecord {
            iter,
            ii_value: f.value(&u, rho)?.total,
            grad_norm: 2.0 * res_norm,
            residual_norm: res_norm,
            sup_norm: u.values()?.amax(),
        });
        if res_norm < opts.residual_tol {
            status = SolveStatus::Converged;
            break;
        }

        // Linearization on modes 1..n_cut:
        // J = P - 8 rho k_P (B - m m^T) with B, m under the normalized
        // conformal density.
        let (density, _) = f.normalized_density(&u)?;
        let (gram, moment) = density_gram_cut(m, &density, n_cut)?;
        let dim = n_cut - 1;
        let mut jac = DMatrix::zeros(dim, dim);
        match &f.operator.matrix {
            Some(mat) => jac.copy_from(&mat.view((1, 1), (dim, dim))),
            None => {
                for i in 0..dim {
                    jac[(i, i)] = f.operator.mu[i + 1];
                }
            }
        }
        let coupling = 8.0 * rho * f.k_p;
        for i in 0..dim {
            for j in 0..dim {
                jac[(i, j)] -=
                    coupling * (gram[(i + 1, j + 1)] - moment[i + 1] * moment[j + 1]);
            }
        }
        let svd = jac.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 1e-12 * smax.max(1e-300)) {
            return Err(QcurvError::SingularLinearization { sigma_min: smin });
        }
        let rhs = DVector::from_fn(dim, |i, _| -residual[i + 1]);
        let delta_cut = svd
            .solve(&rhs, 0.0)
            .map_err(|e| QcurvError::Numeric {
                what: format!("Newton solve failed: {e}"),
                residual: res_norm,
            })?;
        let mut delta = DVector::zeros(n_modes);
        for i in 0..dim {
            delta[i + 1] = delta_cut[i];
        }
        let step = ScalarField::from_coeffs(m, delta)?;
        u = u.axpy(1.0, &step)?.mean_zero(m);
        residual = residual_coeffs(f, &u, rho)?;
    }
    let final_norm = residual.norm();
    if status != SolveStatus::Converged && final_norm < opts.residual_tol {
        status = SolveStatus::Converged;
    }
    finalize_report(f, m, u, rho, status, history)
}

/// Continuation outcome: one report per deformation value reached.
#[derive(Debug, Clone)]
pub struct ContinuationReport {
    pub rhos: Vec<f64>,
    pub reports: Vec<SolveReport>,
    /// Sup norm of the solution along the path (boundedness diagnostic).
    pub sup_norm_path: Vec<f64>,
    pub completed: bool,
    pub abort_reason: Option<String>,
}

/// Track solutions of the deformed equation across the `rho` schedule,
/// seeding each solve with the previous solution. A failed step is
/// retried with half the increment until the floor `1e-3`; reaching the
/// floor aborts with the partial path.
pub fn continuation_rho(m: &ProductManifold4D, opts: &SolveOptions) -> Result<ContinuationReport> {
    opts.validate()?;
    let f = EulerFunctional::new(m)?;
    classify_regime_of(&f)?;
    const RHO_FLOOR: f64 = 1e-3;

    let mut rhos = Vec::new();
    let mut reports: Vec<SolveReport> = Vec::new();
    let mut sup_norm_path = Vec::new();
    let mut current = opts.build_start(m)?;
    let mut rho = opts.rho_start;
    let mut step = opts.rho_step;
    let mut pending = rho;
    let mut abort_reason = None;

    loop {
        match newton_refine_with(&f, m, &current, pending, opts) {
            Ok(report) if report.status == SolveStatus::Converged => {
                current = report.field.clone();
                rho = pending;
                sup_norm_path.push(report.field.values()?.amax());
                rhos.push(rho);
                reports.push(report);
                if rho >= opts.rho_end - 1e-12 {
                    break;
                }
                step = opts.rho_step;
                pending = (rho + step).min(opts.rho_end);
            }
            Ok(report) => {
                // Not converged: treat as a step failure and bisect.
                step *= 0.5;
                if step < RHO_FLOOR {
                    abort_reason = Some(format!(
                        "rho step shrank below the floor {RHO_FLOOR} at rho = {pending} \
                         (status {:?})",
                        report.status
                    ));
                    break;
                }
                pending = (rho + step).min(opts.rho_end);
            }
            Err(err) => {
                step *= 0.5;
                if step < RHO_FLOOR {
                    abort_reason = Some(format!(
                        "rho step shrank below the floor {RHO_FLOOR} at rho = {pending}: {err}"
                    ));
                    break;
                }
                pending = (rho + step).min(opts.rho_end);
            }
        }
    }
    let completed = abort_reason.is_none();
    Ok(ContinuationReport {
        rhos,
        reports,
        sup_norm_path,
        completed,
        abort_reason,
    })
}

/// `II` along the scaled-profile ray split as `II_rho = quad + rho * rest`:
/// per grid point, `quad = t^2 <P phi, phi>` and
/// `rest = 4 t ∫ Q phi - k_P log ∫ e^{4 t phi}`.
pub fn evaluate_cone_profile(
    m: &ProductManifold4D,
    f: &EulerFunctional,
    sigma: &Barycenter,
    lambda_bar: f64,
    ts: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let phi = bubble_field(m, sigma, lambda_bar, CutoffSpec::default_for(m)?)?;
    let shape = match &phi.provenance {
        Provenance::Bubble(s) => s.clone(),
        _ => unreachable!("profile construction always records its shape"),
    };
    let ctx = BubbleContext::new(m, &shape)?;
    // Energy once per profile: core-corrected where the model supports it,
    // truncated-basis form otherwise.
    let energy = match ctx.energy()? {
        Some(e) => e,
        None => f.operator.form(phi.coeffs(), phi.coeffs()),
    };
    let linear_unit = f.q_coeffs.dot(phi.coeffs());
    let mut out = Vec::with_capacity(ts.len());
    for &t in ts {
        let mass = ctx.scaled_mass(t)?;
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(QcurvError::Numeric {
                what: format!("conformal volume degenerated at profile scale t = {t}"),
                residual: mass,
            });
        }
        let quad = t * t * energy;
        let rest = 4.0 * t * linear_unit - f.k_p * mass.ln();
        out.push((quad, rest));
    }
    Ok(out)
}

/// Witness estimate for the min-max level: the supremum of
/// `II(t * phi_{lambda, sigma})` over sampled configurations `sigma` and a
/// `t` grid on [0, 1]. An upper bound for the inf-sup level, since the
/// scaled-profile map is admissible.
#[derive(Debug, Clone)]
pub struct WitnessReport {
    pub k: usize,
    pub lambda_bar: f64,
    pub regime: RegimeTag,
    pub t_grid: Vec<f64>,
    pub sigmas: Vec<Barycenter>,
    /// `(quad, rest)` per sigma per t: `II_rho = quad + rho * rest`.
    pub components: Vec<Vec<(f64, f64)>>,
    /// `II` at `rho = 1` per sigma per t.
    pub profiles: Vec<Vec<f64>>,
    /// Supremum at `rho = 1`.
    pub witness: f64,
    pub seed: u64,
}

impl WitnessReport {
    /// Supremum over the fixed samples at deformation `rho`. Per sample
    /// `II_rho / rho = quad / rho + rest` is non-increasing in `rho`
    /// whenever `quad >= 0`, so the sup over samples inherits exact
    /// monotonicity of the normalized witness.
    pub fn witness_at(&self, rho: f64) -> f64 {
        self.components
            .iter()
            .flatten()
            .map(|&(quad, rest)| quad + rho * rest)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Greedy maximally separated product nodes: node 0, then `k - 1` rounds
/// of farthest-point refinement over a decimated candidate set. Useful as
/// structured sample supports and default ball centers.
pub fn spread_nodes(m: &ProductManifold4D, k: usize) -> Result<Vec<usize>> {
    let n = m.n_nodes();
    let stride = (n / 4096).max(1);
    let candidates: Vec<usize> = (0..n).step_by(stride).collect();
    let mut picks = vec![0usize];
    while picks.len() < k {
        let mut best = candidates[0];
        let mut best_d = -1.0;
        for &c in &candidates {
            let mut dmin = f64::INFINITY;
            for &p in &picks {
                dmin = dmin.min(m.distance(c, p)?);
            }
            if dmin > best_d {
                best_d = dmin;
                best = c;
            }
        }
        picks.push(best);
    }
    Ok(picks)
}

pub fn minmax_witness(
    m: &ProductManifold4D,
    k: usize,
    lambda_bar: f64,
    n_sigma: usize,
    n_t: usize,
    seed: u64,
) -> Result<WitnessReport> {
    if k == 0 {
        return Err(QcurvError::Config(
            "the witness needs at least one concentration point (k >= 1)".into(),
        ));
    }
    if n_sigma == 0 || n_t < 2 {
        return Err(QcurvError::Config(format!(
            "need n_sigma >= 1 and n_t >= 2, got {n_sigma} and {n_t}"
        )));
    }
    if !(lambda_bar > 0.0) {
        return Err(QcurvError::Config(format!(
            "concentration parameter must be positive, got {lambda_bar}"
        )));
    }
    let f = EulerFunctional::new(m)?;
    let regime = classify_regime_of(&f)?;

    // Structured samples: equal masses at maximally separated nodes, and a
    // boundary configuration with all mass on one point. Remaining samples
    // are random supports with random simplex weights.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = m.n_nodes();
    let mut sigmas = Vec::with_capacity(n_sigma);
    let spread = spread_nodes(m, k)?;
    sigmas.push(Barycenter::new(
        m,
        spread
            .iter()
            .map(|&c| BubbleAtom {
                center: c,
                mass: 1.0 / k as f64,
            })
            .collect(),
    )?);
    if sigmas.len() < n_sigma {
        sigmas.push(Barycenter::single(m, spread[0])?);
    }
    while sigmas.len() < n_sigma {
        let mut atoms = Vec::with_capacity(k);
        // Exponential draws normalized onto the simplex; the draw lands in
        // (0, 1], keeping every logarithm finite.
        let mut raw: Vec<f64> = (0..k)
            .map(|_| -(1.0 - rng.gen_range(0.0f64..1.0)).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        raw.iter_mut().for_each(|x| *x /= total);
        // Push the rounding slack onto the largest entry so the masses sum
        // to one exactly.
        let correction: f64 = 1.0 - raw.iter().sum::<f64>();
        let imax = raw
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        raw[imax] += correction;
        for &mass in &raw {
            atoms.push(BubbleAtom {
                center: rng.gen_range(0..n),
                mass,
            });
        }
        sigmas.push(Barycenter::new(m, atoms)?);
    }

    let t_grid: Vec<f64> = (0..n_t).map(|j| j as f64 / (n_t - 1) as f64).collect();
    let mut components = Vec::with_capacity(sigmas.len());
    let mut profiles = Vec::with_capacity(sigmas.len());
    for sigma in &sigmas {
        let comp = evaluate_cone_profile(m, &f, sigma, lambda_bar, &t_grid)?;
        profiles.push(comp.iter().map(|&(q, r)| q + r).collect());
        components.push(comp);
    }
    let witness = components
        .iter()
        .flatten()
        .map(|&(q, r)| q + r)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(WitnessReport {
        k,
        lambda_bar,
        regime,
        t_grid,
        sigmas,
        components,
        profiles,
        witness,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::factor::{
        make_flat_torus_factor, make_hyperbolic_factor, make_sphere_factor,
    };
    use crate::geometry::product::make_product;

    fn s2xs2(lmax: usize) -> ProductManifold4D {
        let a = make_sphere_factor(lmax, 2 * lmax + 2).unwrap();
        let b = make_sphere_factor(lmax, 2 * lmax + 2).unwrap();
        let cap = (lmax * (lmax + 1)) as f64;
        make_product(a, b, cap).unwrap()
    }

    fn random_start(m: &ProductManifold4D, seed: u64, amp: f64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = DVector::from_fn(m.n_modes(), |_, _| rng.gen_range(-amp..amp));
        ScalarField::from_coeffs(m, coeffs).unwrap()
    }

    #[test]
    fn subcritical_minimization_recovers_the_constant_solution() {
        let m = s2xs2(3);
        let opts = SolveOptions {
            initializer: Initializer::Field(random_start(&m, 7, 0.05)),
            ..SolveOptions::default()
        };
        let report = minimize_ii(&m, &opts).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        assert_eq!(report.regime, RegimeTag::Subcritical);
        assert!(report.residual_norm < 1e-8, "residual {}", report.residual_norm);
        assert!(
            report.field.coeffs().amax() < 1e-6,
            "expected the zero field, coefficient max {}",
            report.field.coeffs().amax()
        );
        assert!(
            report.q_tilde_sup_deviation < 1e-6,
            "curvature deviation {}",
            report.q_tilde_sup_deviation
        );
        assert!(report.kp_conformal_drift < 1e-6 * report.q_bar.abs().max(1.0));
        // Accepted steps never increased the value.
        for w in report.history.windows(2) {
            assert!(w[1].ii_value <= w[0].ii_value + 1e-12 * w[0].ii_value.abs().max(1.0));
        }
    }

    #[test]
    fn flat_model_minimizer_is_zero() {
        let a = make_flat_torus_factor(1.0, 1.0, 6).unwrap();
        let b = make_flat_torus_factor(1.0, 1.0, 6).unwrap();
        let m = make_product(a, b, 300.0).unwrap();
        let opts = SolveOptions {
            initializer: Initializer::Field(random_start(&m, 8, 0.02)),
            ..SolveOptions::default()
        };
        let report = minimize_ii(&m, &opts).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        assert!(
            report.field.coeffs().amax() < 1e-8,
            "flat minimizer should vanish, got {}",
            report.field.coeffs().amax()
        );
        assert!(report.ii_value.abs() < 1e-10);
    }

    #[test]
    fn shifted_starts_reach_the_same_gauge_fixed_field() {
        let m = s2xs2(3);
        let u0 = random_start(&m, 9, 0.05);
        let r1 = minimize_ii(
            &m,
            &SolveOptions {
                initializer: Initializer::Field(u0.clone()),
                ..SolveOptions::default()
            },
        )
        .unwrap();
        let r2 = minimize_ii(
            &m,
            &SolveOptions {
                initializer: Initializer::Field(u0.shifted(&m, 2.5)),
                ..SolveOptions::default()
            },
        )
        .unwrap();
        let diff = (r1.field.coeffs() - r2.field.coeffs()).amax();
        assert!(diff < 1e-8, "gauge-fixed solutions differ by {diff}");
    }

    #[test]
    fn newton_fixed_point_and_normalization() {
        let m = s2xs2(3);
        let report = newton_refine(&m, &ScalarField::zero(&m), 1.0, &SolveOptions::default())
            .unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        assert!(report.residual_norm < 1e-12, "residual {}", report.residual_norm);
        assert!(report.field.coeffs().amax() < 1e-12, "nonzero Newton step");
        // The renormalized representative integrates e^{4u} to one.
        let f = EulerFunctional::new(&m).unwrap();
        let log_vol = f.log_conformal_volume(&report.normalized_field).unwrap();
        assert!(log_vol.abs() < 1e-10, "normalization defect {log_vol}");
    }

    #[test]
    fn newton_contracts_quadratically_inside_the_basin() {
        let m = s2xs2(3);
        // A two-mode perturbation big enough that the exponential term is
        // genuinely nonlinear (residual about 1.6).
        let mut coeffs = DVector::zeros(m.n_modes());
        coeffs[1] = 0.5;
        coeffs[2] = -0.3;
        let u0 = ScalarField::from_coeffs(&m, coeffs).unwrap();

        // The default basin threshold refuses a start this far out.
        let err = newton_refine(&m, &u0, 1.0, &SolveOptions::default()).unwrap_err();
        assert!(matches!(err, QcurvError::Validation(_)), "{err:?}");

        let opts = SolveOptions {
            basin_threshold: Some(2.0),
            residual_tol: 1e-12,
            ..SolveOptions::default()
        };
        let report = newton_refine(&m, &u0, 1.0, &opts).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        let residuals: Vec<f64> = report.history.iter().map(|h| h.residual_norm).collect();
        assert!(residuals.len() >= 4, "too few Newton steps: {residuals:?}");
        for w in residuals.windows(2) {
            if w[0] > 1e-7 {
                assert!(
                    w[1] <= 50.0 * w[0] * w[0],
                    "no quadratic contraction: {} -> {} ({residuals:?})",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn continuation_tracks_the_constant_branch() {
        let m = s2xs2(3);
        let report = continuation_rho(&m, &SolveOptions::default()).unwrap();
        assert!(report.completed, "{:?}", report.abort_reason);
        assert_eq!(report.rhos.len(), 6); // 0.9, 0.92, ..., 1.0
        for (rho, r) in report.rhos.iter().zip(&report.reports) {
            assert_eq!(r.status, SolveStatus::Converged);
            assert!(r.residual_norm < 1e-8, "rho {rho}: residual {}", r.residual_norm);
            assert!(
                r.field.coeffs().amax() < 1e-6,
                "rho {rho}: expected the constant branch"
            );
        }
        // Boundedness diagnostic: no blow-up along the path.
        let mut sups = report.sup_norm_path.clone();
        sups.sort_by(f64::total_cmp);
        let median = sups[sups.len() / 2];
        let max = sups.last().copied().unwrap();
        assert!(max <= 2.0 * median + 1e-8, "sup-norm path {sups:?}");
    }

    #[test]
    fn degenerate_total_curvature_is_refused() {
        // Constant-curvature surrogates of genus 2 and genus 4 with
        // kappa = -1: total curvature lands exactly on 16 pi^2.
        let a = make_hyperbolic_factor(2, -1.0, 24, 6).unwrap();
        let b = make_hyperbolic_factor(4, -1.0, 24, 6).unwrap();
        let m = make_product(a, b, 30.0).unwrap();
        let err = classify_regime(&m).unwrap_err();
        match err {
            QcurvError::Validation(msg) => {
                assert!(msg.contains("8") && msg.contains("pi^2"), "{msg}")
            }
            other => panic!("expected a validation refusal, got {other:?}"),
        }
    }

    #[test]
    fn witness_is_exactly_monotone_in_the_deformation() {
        let m = s2xs2(3);
        let report = minmax_witness(&m, 2, 30.0, 4, 5, 42).unwrap();
        assert_eq!(report.regime, RegimeTag::Subcritical);
        assert!(report.witness.is_finite());
        let rhos = [0.9, 0.95, 1.0, 1.05, 1.1];
        let normalized: Vec<f64> = rhos.iter().map(|&r| report.witness_at(r) / r).collect();
        for w in normalized.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0),
                "normalized witness increased: {normalized:?}"
            );
        }
    }

    #[test]
    fn witness_ignores_atom_ordering() {
        let m = s2xs2(3);
        let f = EulerFunctional::new(&m).unwrap();
        let far = {
            let mut best = (0usize, -1.0);
            for y in (0..m.n_nodes()).step_by(13) {
                let d = m.distance(0, y).unwrap();
                if d > best.1 {
                    best = (y, d);
                }
            }
            best.0
        };
        let s1 = Barycenter::new(
            &m,
            vec![
                BubbleAtom { center: 0, mass: 0.3 },
                BubbleAtom { center: far, mass: 0.7 },
            ],
        )
        .unwrap();
        let s2 = Barycenter::new(
            &m,
            vec![
                BubbleAtom { center: far, mass: 0.7 },
                BubbleAtom { center: 0, mass: 0.3 },
            ],
        )
        .unwrap();
        let ts = [0.0, 0.5, 1.0];
        let p1 = evaluate_cone_profile(&m, &f, &s1, 25.0, &ts).unwrap();
        let p2 = evaluate_cone_profile(&m, &f, &s2, 25.0, &ts).unwrap();
        for (a, b) in p1.iter().zip(&p2) {
            assert!((a.0 - b.0).abs() < 1e-9 * a.0.abs().max(1.0));
            assert!((a.1 - b.1).abs() < 1e-9 * a.1.abs().max(1.0));
        }
    }


    #[test]
    fn options_are_validated() {
        let m = s2xs2(3);
        let bad_tol = SolveOptions {
            grad_tol: -1.0,
            ..SolveOptions::default()
        };
        assert!(matches!(minimize_ii(&m, &bad_tol), Err(QcurvError::Config(_))));
        let bad_rho = SolveOptions {
            rho: 2.0,
            ..SolveOptions::default()
        };
        assert!(matches!(minimize_ii(&m, &bad_rho), Err(QcurvError::Config(_))));
    }
}
