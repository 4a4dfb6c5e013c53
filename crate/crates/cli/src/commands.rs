//! One function per CLI command, each returning a JSON result body plus
//! CSV tables. Commands never write files; persistence happens only after
//! the whole command has succeeded.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use qcurv_core::adams::{adams_report, improved_adams_report, InequalityReport};
use qcurv_core::bubbles::{bubble_field, project_psi, Barycenter, CutoffSpec};
use qcurv_core::bubbles::{field_pattern_distance, measure_distance};
use qcurv_core::error::{QcurvError, Result};
use qcurv_core::functional::EulerFunctional;
use qcurv_core::geometry::product::{ProductManifold4D, ScalarField};
use qcurv_core::paneitz::{green_function, paneitz_operator, q_curvature, spectrum_of, total_q};
use qcurv_core::solver::{
    classify_regime, continuation_rho, minimize_ii, minmax_witness, spread_nodes, RegimeTag,
    SolveReport, SolveStatus,
};

use crate::config::{AtomSpec, RunConfig};
use crate::output::{fmt_f64, CommandOutcome, CsvTable};

const PI: f64 = std::f64::consts::PI;

fn to_value<T: Serialize>(value: &T) -> Result<serde_json::Value> {
    serde_json::to_value(value)
        .map_err(|e| QcurvError::Config(format!("result serialization failed: {e}")))
}

/// Random band-limited field: nonconstant coefficients uniform in
/// `(-amplitude, amplitude)`.
pub fn random_band_limited(
    m: &ProductManifold4D,
    seed: u64,
    amplitude: f64,
) -> Result<ScalarField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_band_limited(m, &mut rng, amplitude)
}

fn draw_band_limited(
    m: &ProductManifold4D,
    rng: &mut ChaCha8Rng,
    amplitude: f64,
) -> Result<ScalarField> {
    if !(amplitude > 0.0) || !amplitude.is_finite() {
        return Err(QcurvError::Config(format!(
            "random-field amplitude must be positive and finite, got {amplitude}"
        )));
    }
    let mut coeffs = DVector::zeros(m.n_modes());
    for k in 1..m.n_modes() {
        coeffs[k] = rng.gen_range(-amplitude..amplitude);
    }
    ScalarField::from_coeffs(m, coeffs)
}

fn regime_json(regime: &RegimeTag) -> serde_json::Value {
    match regime {
        RegimeTag::Subcritical => serde_json::json!({ "kind": "subcritical" }),
        RegimeTag::Supercritical { k } => {
            serde_json::json!({ "kind": "supercritical", "interval_index": k })
        }
        RegimeTag::NegativeModes { count } => {
            serde_json::json!({ "kind": "negative_modes", "count": count })
        }
    }
}

fn status_json(status: &SolveStatus) -> serde_json::Value {
    match status {
        SolveStatus::Converged => serde_json::json!({ "converged": true, "reason": null }),
        SolveStatus::NotConverged { reason } => {
            serde_json::json!({ "converged": false, "reason": reason })
        }
    }
}

fn atoms_json(sigma: &Barycenter) -> Vec<AtomSpec> {
    sigma
        .entries()
        .iter()
        .map(|a| AtomSpec {
            center: a.center,
            mass: a.mass,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// invariants
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct InvariantsResult {
    factor_a_area: f64,
    factor_b_area: f64,
    factor_a_euler_characteristic: i64,
    factor_b_euler_characteristic: i64,
    has_constant_curvature: bool,
    curvature_constant_a: Option<f64>,
    curvature_constant_b: Option<f64>,
    /// `R = 2 (kappa_a + kappa_b)` on constant-curvature products.
    scalar_curvature_constant: Option<f64>,
    /// `|W|^2 = (4/3)(kappa_a + kappa_b)^2` on constant-curvature products.
    weyl_norm_sq_constant: Option<f64>,
    /// Quadrature value of `k_P` (closed form on constant-curvature models).
    total_curvature: f64,
    /// `A_a A_b (-kappa_a^2 + 4 kappa_a kappa_b - kappa_b^2) / 6`, when both
    /// curvatures are constant.
    closed_form_total_curvature: Option<f64>,
    /// `4 pi^2 chi`, the Gauss-Bonnet target for `∫ (Q + |W|^2/8) dV`.
    gauss_bonnet_target: f64,
    /// Quantization levels bracketing `k_P` (`8 k pi^2`).
    critical_level_below: f64,
    critical_level_above: f64,
}

pub fn run_invariants(_cfg: &RunConfig, m: &ProductManifold4D) -> Result<CommandOutcome> {
    let ka = m.factor_a.curvature_constant;
    let kb = m.factor_b.curvature_constant;
    let kp = total_q(m)?;
    let closed_form = match (ka, kb) {
        (Some(a), Some(b)) => Some(
            m.factor_a.area * m.factor_b.area * (-a * a + 4.0 * a * b - b * b) / 6.0,
        ),
        _ => None,
    };
    let level = 8.0 * PI * PI;
    let below = (kp / level).floor().max(0.0) * level;
    let result = InvariantsResult {
        factor_a_area: m.factor_a.area,
        factor_b_area: m.factor_b.area,
        factor_a_euler_characteristic: m.factor_a.euler_char,
        factor_b_euler_characteristic: m.factor_b.euler_char,
        has_constant_curvature: m.has_constant_curvature(),
        curvature_constant_a: ka,
        curvature_constant_b: kb,
        scalar_curvature_constant: match (ka, kb) {
            (Some(a), Some(b)) => Some(2.0 * (a + b)),
            _ => None,
        },
        weyl_norm_sq_constant: match (ka, kb) {
            (Some(a), Some(b)) => Some(4.0 / 3.0 * (a + b) * (a + b)),
            _ => None,
        },
        total_curvature: kp,
        closed_form_total_curvature: closed_form,
        gauss_bonnet_target: 4.0 * PI * PI * m.euler_char as f64,
        critical_level_below: below,
        critical_level_above: below + level,
    };
    Ok(CommandOutcome {
        result: to_value(&result)?,
        csvs: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// spectrum
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SpectrumResult {
    n_modes: usize,
    negative_count: usize,
    kernel_dimension: usize,
    zero_tolerance: f64,
    lowest: Vec<f64>,
    operator_is_diagonal: bool,
}

pub fn run_spectrum(cfg: &RunConfig, m: &ProductManifold4D) -> Result<CommandOutcome> {
    let op = paneitz_operator(m)?;
    let summary = spectrum_of(&op, cfg.spectrum.n_low);
    let eigs = op.eigenvalues();

    let mut csvs = vec![CsvTable {
        name: "eigenvalues.csv".into(),
        header: "rank,eigenvalue".into(),
        rows: eigs
            .iter()
            .enumerate()
            .map(|(i, e)| format!("{i},{}", fmt_f64(*e)))
            .collect(),
    }];
    if op.is_diagonal() {
        csvs.push(CsvTable {
            name: "modes.csv".into(),
            header: "mode,factor_a_index,factor_b_index,eigenvalue_sum,operator_eigenvalue"
                .into(),
            rows: m
                .basis
                .iter()
                .enumerate()
                .map(|(i, mode)| {
                    format!(
                        "{i},{},{},{},{}",
                        mode.ia,
                        mode.ib,
                        fmt_f64(mode.s),
                        fmt_f64(op.mu[i])
                    )
                })
                .collect(),
        });
    }

    let result = SpectrumResult {
        n_modes: summary.n_modes,
        negative_count: summary.negative_count,
        kernel_dimension: summary.kernel_dim,
        zero_tolerance: summary.tol_zero,
        lowest: summary.lowest,
        operator_is_diagonal: op.is_diagonal(),
    };
    Ok(CommandOutcome {
        result: to_value(&result)?,
        csvs,
    })
}

// ---------------------------------------------------------------------------
// solve / continuation
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SolveResult {
    status: serde_json::Value,
    regime: serde_json::Value,
    rho: f64,
    iterations: usize,
    ii_value: f64,
    residual_norm: f64,
    q_bar: f64,
    q_tilde_sup_deviation: f64,
    kp_conformal_drift: f64,
    field_sup_norm: f64,
}

fn solve_result_json(report: &SolveReport, sup: f64) -> Result<serde_json::Value> {
    to_value(&SolveResult {
        status: status_json(&report.status),
        regime: regime_json(&report.regime),
        rho: report.rho,
        iterations: report.history.len(),
        ii_value: report.ii_value,
        residual_norm: report.residual_norm,
        q_bar: report.q_bar,
        q_tilde_sup_deviation: report.q_tilde_sup_deviation,
        kp_conformal_drift: report.kp_conformal_drift,
        field_sup_norm: sup,
    })
}

fn history_csv(report: &SolveReport) -> CsvTable {
    CsvTable {
        name: "history.csv".into(),
        header: "iter,ii_value,grad_norm,residual_norm,sup_norm".into(),
        rows: report
            .history
            .iter()
            .map(|h| {
                format!(
                    "{},{},{},{},{}",
                    h.iter,
                    fmt_f64(h.ii_value),
                    fmt_f64(h.grad_norm),
                    fmt_f64(h.residual_norm),
                    fmt_f64(h.sup_norm)
                )
            })
            .collect(),
    }
}

fn field_csvs(m: &ProductManifold4D, report: &SolveReport) -> Result<Vec<CsvTable>> {
    let values = report.field.values()?;
    let normalized = report.normalized_field.values()?;
    let mut rows = Vec::with_capacity(values.len());
    for y in 0..values.len() {
        let (ya, yb) = m.split_node(y);
        rows.push(format!(
            "{y},{ya},{yb},{},{}",
            fmt_f64(values[y]),
            fmt_f64(normalized[y])
        ));
    }
    let coeffs = report.field.coeffs();
    let coeff_rows = m
        .basis
        .iter()
        .enumerate()
        .map(|(k, mode)| {
            format!(
                "{k},{},{},{},{}",
                mode.ia,
                mode.ib,
                fmt_f64(mode.s),
                fmt_f64(coeffs[k])
            )
        })
        .collect();
    Ok(vec![
        CsvTable {
            name: "field.csv".into(),
            header: "node,factor_a_node,factor_b_node,value,normalized_value".into(),
            rows,
        },
        CsvTable {
            name: "coefficients.csv".into(),
            header: "mode,factor_a_index,factor_b_index,eigenvalue_sum,coefficient".into(),
            rows: coeff_rows,
        },
    ])
}

pub fn run_solve(cfg: &RunConfig, m: &ProductManifold4D) -> Result<CommandOutcome> {
    let opts = cfg.solver.to_options(m, cfg.seed)?;
    let report = minimize_ii(m, &opts)?;
    let sup = report.field.values()?.amax();
    let mut csvs = vec![history_csv(&report)];
    csvs.extend(field_csvs(m, &report)?);
    Ok(CommandOutcome {
        result: solve_result_json(&report, sup)?,
        csvs,
    })
}

#[derive(Serialize)]
struct ContinuationResult {
    completed: bool,
    abort_reason: Option<String>,
    n_steps: usize,
    rho_first: Option<f64>,
    rho_last: Option<f64>,
    final_step: Option<serde_json::Value>,
}

pub fn run_continuation(cfg: &RunConfig, m: &ProductManifold4D) -> Result<CommandOutcome> {
    let opts = cfg.solver.to_options(m, cfg.seed)?;
    let path = continuation_rho(m, &opts)?;
    let mut rows = Vec::with_capacity(path.reports.len());
    for (i, report) in path.reports.iter().enumerate() {
        rows.push(format!(
            "{},{},{},{},{},{}",
            fmt_f64(path.rhos[i]),
            fmt_f64(report.ii_value),
            fmt_f64(report.residual_norm),
            fmt_f64(path.sup_norm_path[i]),
            fmt_f64(report.q_bar),
            u8::from(report.status == SolveStatus::Converged),
        ));
    }
    let final_step = match path.reports.last() {
        Some(r) => Some(solve_result_json(r, r.field.values()?.amax())?),
        None => None,
    };
    let result = ContinuationResult {
        completed: path.completed,
        abort_reason: path.abort_reason.clone(),
        n_steps: path.reports.len(),
        rho_first: path.rhos.first().copied(),
        rho_last: path.rhos.last().copied(),
        final_step,
    };
    Ok(CommandOutcome {
        result: to_value(&result)?,
        csvs: vec![CsvTable {
            name: "continuation.csv".into(),
            header: "rho,ii_value,residual_norm,sup_norm,q_bar,converged".into(),
            rows,
        }],
    })
}

// ---------------------------------------------------------------------------
// adams / improved-adams
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct AdamsResult {
    descriptor: String,
    ell: usize,
    reference_slope: f64,
    tail_slope: Option<f64>,
    calibrated_constant: f64,
    all_satisfy: bool,
    n_members: usize,
    n_excluded: usize,
    truncation_modes: usize,
    gamma0: Option<f64>,
    delta0: Option<f64>,
    ball_centers: Vec<usize>,
}

fn inequality_csv(report: &InequalityReport, labels: &[String]) -> CsvTable {
    CsvTable {
        name: "inequality.csv".into(),
        header: "member,label,quadratic,log_term,residual".into(),
        rows: report
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let label = labels.get(i).cloned().unwrap_or_default();
                format!(
                    "{i},{label},{},{},{}",
                    fmt_f64(row.quadratic),
                    fmt_f64(row.log_term),
                    fmt_f64(row.residual)
                )
            })
            .collect(),
    }
}

fn adams_outcome(
    report: InequalityReport,
    labels: Vec<String>,
    n_members: usize,
    gamma0: Option<f64>,
    delta0: Option<f64>,
    centers: Vec<usize>,
) -> Result<CommandOutcome> {
    let csv = inequality_csv(&report, &labels);
    let result = AdamsResult {
        descriptor: report.descriptor,
        ell: report.ell,
        reference_slope: report.reference_slope,
        tail_slope: report.tail_slope,
        calibrated_constant: report.calibrated_c,
        all_satisfy: report.all_satisfy,
        n_members,
        n_excluded: report.n_excluded,
        truncation_modes: report.truncation_modes,
        gamma0,
        delta0,
        ball_centers: centers,
    };
    Ok(CommandOutcome {
        result: to_value(&result)?,
        csvs: vec![csv],
    })
}

pub fn run_adams(cfg: &RunConfig, m: &ProductManifold4D) -> Result<CommandOutcome> {
    let block = &cfg.adams;
    let center = match block.center {
        Some(c) => c,
        None => spread_nodes(m, 1)?[0],
    };
    let sigma = Barycenter::single(m, center)?;
    let cutoff = CutoffSpec::default_for(m)?;
    let mut family = Vec::new();
    let mut labels = Vec::new();
    for &lambda in &block.lambda_values {
        family.push(bubble_field(m, &sigma, lambda, cutoff)?);
        labels.push(format!("bubble(lambda={lambda})"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for i in 0..block.n_random {
        family.push(draw_band_limited(m, &mut rng, block.amplitude)?);
        labels.push(format!("random({i})"));
    }
    let report = adams_report(m, &family)?;
    adams_outcome(report, labels, family.len(), None, None, Vec::new())
}

pub fn run_improved_adams(cfg: &RunConfig, m: &ProductManifold4D) -> Result<CommandOutcome> {
    let block = &cfg.improved_adams;
    let centers = if block.centers.is_empty() {
        spread_nodes(m, block.ell + 1)?
    } else {
        block.centers.clone()
    };
    let delta0 = match block.delta0 {
        Some(d) => d,
        None => block.delta0_fraction * m.diameter()?,
    };
    let mass = 1.0 / centers.len() as f64;
    let sigma = Barycenter::new(
        m,
        centers
            .iter()
            .map(|&center| qcurv_core::bubbles::BubbleAtom { center, mass })
            .collect(),
    )?;
    let cutoff = CutoffSpec::default_for(m)?;
    let mut family = Vec::new();
    let mut labels = Vec::new();
    for &lambda in &block.lambda_values {
        family.push(bubble_field(m, &sigma, lambda, cutoff)?);
        labels.push(format!("bubble(lambda={lambda})"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for i in 0..block.n_random {
        family.push(draw_band_limited(m, &mut rng, block.amplitude)?);
        labels.push(format!("random({i})"));
    }
    let report = improved_adams_report(m, block.ell, block.gamma0, delta0, &centers, &family)?;
    adams_outcome(
        report,
        labels,
        family.len(),
        Some(block.gamma0),
        Some(delta0),
        centers,
    )
}

// ---------------------------------------------------------------------------
// bubble
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct BubbleResult {
    atoms: Vec<AtomSpec>,
    lambda_values: Vec<f64>,
    /// `II(phi_lambda)` at `rho = 1`, per lambda.
    ii_values: Vec<f64>,
    regime: serde_json::Value,
}

pub fn run_bubble(cfg: &RunConfig, m: &ProductManifold4D) -> Result<CommandOutcome> {
    let block = &cfg.bubble;
    let sigma = crate::config::resolve_atoms(m, &block.atoms, block.n_atoms)?;
    let cutoff = CutoffSpec::default_for(m)?;
    let f = EulerFunctional::new(m)?;
    let regime = classify_regime(m)?;
    let mut rows = Vec::with_capacity(block.lambda_values.len());
    let mut ii_values = Vec::with_capacity(block.lambda_values.len());
    for &lambda in &block.lambda_values {
        let u = bubble_field(m, &sigma, lambda, cutoff)?;
        let quad = f.quadratic_form(&u)?;
        let log_vol = f.log_conformal_volume(&u)?;
        let breakdown = f.value(&u, 1.0)?;
        let w1 = field_pattern_distance(m, &u, &sigma).unwrap_or(f64::NAN);
        ii_values.push(breakdown.total);
        rows.push(format!(
            "{},{},{},{},{}",
            fmt_f64(lambda),
            fmt_f64(quad),
            fmt_f64(log_vol),
            fmt_f64(breakdown.total),
            fmt_f64(w1)
        ));
    }
    let result = BubbleResult {
        atoms: atoms_json(&sigma),
        lambda_values: block.lambda_values.clone(),
        ii_values,
        regime: regime_json(&regime),
    };
    Ok(CommandOutcome {
        result: to_value(&result)?,
        csvs: vec![CsvTable {
            name: "bubble.csv".into(),
            header: "lambda,quadratic_form,log_conformal_volume,ii_value,w1_to_sigma".into(),
            rows,
        }],
    })
}

// ---------------------------------------------------------------------------
// project
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ProjectResult {
    input_atoms: Vec<AtomSpec>,
    lambda: f64,
    k: usize,
    recovered_atoms: Vec<AtomSpec>,
    /// Wasserstein-1 distance between the input and recovered barycenters.
    w1_distance: f64,
    diameter: f64,
    /// `w1_distance < 0.05 * diameter`.
    within_tolerance: bool,
}

pub fn run_project(cfg: &RunConfig, m: &ProductManifold4D) -> Result<CommandOutcome> {
    let block = &cfg.project;
    let sigma = crate::config::resolve_atoms(m, &block.atoms, block.n_atoms)?;
    let u = bubble_field(m, &sigma, block.lambda, CutoffSpec::default_for(m)?)?;
    let recovered = project_psi(m, &u, block.k)?;
    let w1 = measure_distance(m, &sigma.as_measure(), &recovered.as_measure())?;
    let diameter = m.diameter()?;

    let mut rows = Vec::new();
    for (i, a) in sigma.entries().iter().enumerate() {
        rows.push(format!("input,{i},{},{}", a.center, fmt_f64(a.mass)));
    }
    for (i, a) in recovered.entries().iter().enumerate() {
        rows.push(format!("recovered,{i},{},{}", a.center, fmt_f64(a.mass)));
    }
    let result = ProjectResult {
        input_atoms: atoms_json(&sigma),
        lambda: block.lambda,
        k: block.k,
        recovered_atoms: atoms_json(&recovered),
        w1_distance: w1,
        diameter,
        within_tolerance: w1 < 0.05 * diameter,
    };
    Ok(CommandOutcome {
        result: to_value(&result)?,
        csvs: vec![CsvTable {
            name: "projection.csv".into(),
            header: "role,index,center_node,mass".into(),
            rows,
        }],
    })
}

// ---------------------------------------------------------------------------
// green
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct GreenResult {
    pole: usize,
    n_modes_used: usize,
    rescaled: bool,
    s_at_pole: f64,
    /// `(div grad S)(x) + 4 |grad S(x)|^2 - R(x)/8`.
    funct_quantity: f64,
    /// Max over test fields of the weak-equation defect, relative to the
    /// source strength `16 pi^2`.
    weak_residual_max: f64,
    /// `|S_x(y) - S_y(x)|` at the symmetry pole, when requested.
    symmetry_gap: Option<f64>,
    symmetry_pole: Option<usize>,
}

pub fn run_green(cfg: &RunConfig, m: &ProductManifold4D) -> Result<CommandOutcome> {
    let block = &cfg.green;
    let n_modes = if block.n_modes == 0 {
        m.n_modes()
    } else {
        block.n_modes
    };
    let data = green_function(m, block.pole, n_modes, block.rescale)?;

    // Weak residual against random band-limited test fields phi supported
    // on the solve range: <G, P phi> + 2 ∫ Q' phi - 16 pi^2 phi(x).
    let op = paneitz_operator(m)?;
    let kp = total_q(m)?;
    let source = 16.0 * PI * PI;
    let q_prime: DVector<f64> = if kp.abs() < 1e-10 * (1.0 + m.volume) {
        DVector::zeros(m.n_modes())
    } else {
        q_curvature(m)?.coeffs() * (8.0 * PI * PI / kp)
    };
    let g_coeffs = m.analysis(&data.values)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut weak_residual_max = 0.0f64;
    for _ in 0..block.n_test_fields.max(1) {
        let mut coeffs = DVector::zeros(m.n_modes());
        for k in 1..n_modes {
            coeffs[k] = rng.gen_range(-1.0..1.0);
        }
        let phi = ScalarField::from_coeffs(m, coeffs)?;
        let pairing = g_coeffs.dot(&op.apply(phi.coeffs()))
            + 2.0 * q_prime.dot(phi.coeffs())
            - source * phi.values()?[block.pole];
        weak_residual_max = weak_residual_max.max(pairing.abs() / source);
    }

    let (symmetry_gap, symmetry_pole) = match block.symmetry_pole {
        Some(other) => {
            let data2 = green_function(m, other, n_modes, block.rescale)?;
            let gap = (data.regular_part[other] - data2.regular_part[block.pole]).abs();
            (Some(gap), Some(other))
        }
        None => (None, None),
    };

    let mut rows = Vec::with_capacity(m.n_nodes());
    for y in 0..m.n_nodes() {
        rows.push(format!(
            "{y},{},{},{}",
            fmt_f64(m.distance(block.pole, y)?),
            fmt_f64(data.values[y]),
            fmt_f64(data.regular_part[y])
        ));
    }
    let result = GreenResult {
        pole: data.pole,
        n_modes_used: n_modes,
        rescaled: data.rescaled,
        s_at_pole: data.s_at_pole,
        funct_quantity: data.funct_quantity,
        weak_residual_max,
        symmetry_gap,
        symmetry_pole,
    };
    Ok(CommandOutcome {
        result: to_value(&result)?,
        csvs: vec![CsvTable {
            name: "green.csv".into(),
            header: "node,distance_from_pole,g_value,regular_part".into(),
            rows,
        }],
    })
}

// ---------------------------------------------------------------------------
// minmax
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct MinmaxResult {
    k: usize,
    lambda_bar: f64,
    regime: serde_json::Value,
    n_sigma: usize,
    n_t: usize,
    /// Supremum of `II(t phi)` over samples at `rho = 1`.
    witness: f64,
    /// Witness at each requested deformation value, divided by it
    /// (non-increasing in `rho` for nonnegative operators).
    rho_values: Vec<f64>,
    witness_over_rho: Vec<f64>,
    sigmas: Vec<Vec<AtomSpec>>,
}

pub fn run_minmax(cfg: &RunConfig, m: &ProductManifold4D) -> Result<CommandOutcome> {
    let block = &cfg.minmax;
    let report = minmax_witness(
        m,
        block.k,
        block.lambda_bar,
        block.n_sigma,
        block.n_t,
        cfg.seed,
    )?;

    let mut rho_rows = Vec::with_capacity(block.rho_values.len());
    let mut witness_over_rho = Vec::with_capacity(block.rho_values.len());
    for &rho in &block.rho_values {
        if !(rho > 0.0) {
            return Err(QcurvError::Config(format!(
                "deformation values must be positive, got {rho}"
            )));
        }
        let w = report.witness_at(rho);
        witness_over_rho.push(w / rho);
        rho_rows.push(format!(
            "{},{},{}",
            fmt_f64(rho),
            fmt_f64(w),
            fmt_f64(w / rho)
        ));
    }

    let mut profile_rows = Vec::with_capacity(report.sigmas.len() * report.t_grid.len());
    for (si, comp) in report.components.iter().enumerate() {
        for (ti, &(quad, rest)) in comp.iter().enumerate() {
            profile_rows.push(format!(
                "{si},{},{},{},{}",
                fmt_f64(report.t_grid[ti]),
                fmt_f64(quad),
                fmt_f64(rest),
                fmt_f64(quad + rest)
            ));
        }
    }

    let result = MinmaxResult {
        k: report.k,
        lambda_bar: report.lambda_bar,
        regime: regime_json(&report.regime),
        n_sigma: report.sigmas.len(),
        n_t: report.t_grid.len(),
        witness: report.witness,
        rho_values: block.rho_values.clone(),
        witness_over_rho,
        sigmas: report.sigmas.iter().map(atoms_json).collect(),
    };
    Ok(CommandOutcome {
        result: to_value(&result)?,
        csvs: vec![
            CsvTable {
                name: "witness_rho.csv".into(),
                header: "rho,witness,witness_over_rho".into(),
                rows: rho_rows,
            },
            CsvTable {
                name: "profiles.csv".into(),
                header: "sigma_index,t,quadratic,rest,ii_value".into(),
                rows: profile_rows,
            },
        ],
    })
}
