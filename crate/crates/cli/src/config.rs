//! Run configuration: JSON schema types, validation, and model building.
//!
//! Every struct rejects unknown keys, so a typo in a config file fails the
//! run (exit code 2) instead of being silently ignored. All fields beyond
//! the model itself carry defaults; a serialized `RunConfig` therefore
//! spells out the fully resolved settings of a run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use qcurv_core::bubbles::{Barycenter, BubbleAtom};
use qcurv_core::error::{QcurvError, Result};
use qcurv_core::geometry::factor::{
    make_flat_torus_factor, make_hyperbolic_factor, make_mesh_factor, make_sphere_factor,
    make_synthetic_factor, SurfaceFactor,
};
use qcurv_core::geometry::mesh::parse_off;
use qcurv_core::geometry::product::{make_product, ProductManifold4D};
use qcurv_core::solver::{Initializer, SolveOptions};

/// Top-level run configuration (one JSON document drives one command).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    /// Where report.json, resolved_config.json, and CSV tables are written;
    /// `--out` overrides it.
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    /// Seed for every random choice in the run; `--seed` overrides it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub spectrum: SpectrumBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub bubble: BubbleBlock,
    #[serde(default)]
    pub project: ProjectBlock,
    #[serde(default)]
    pub adams: AdamsBlock,
    #[serde(default)]
    pub improved_adams: ImprovedAdamsBlock,
    #[serde(default)]
    pub green: GreenBlock,
    #[serde(default)]
    pub minmax: MinmaxBlock,
}

fn default_output_dir() -> String {
    "qcurv-out".into()
}

/// Product model: two surface factors and the tensor-basis truncation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub factor_a: FactorSpec,
    pub factor_b: FactorSpec,
    /// Keep product modes with eigenvalue sum `alpha + beta <= s_max`.
    pub s_max: f64,
}

/// One closed-surface factor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FactorSpec {
    /// Round sphere of curvature `+1` with a Gauss-Legendre x uniform grid.
    Sphere { lmax: usize, n_theta: usize },
    /// Flat rectangular torus with side lengths `l1`, `l2`.
    Torus { l1: f64, l2: f64, kmax: usize },
    /// Constant-curvature surrogate of a genus >= 2 surface (`kappa < 0`).
    Hyperbolic {
        genus: usize,
        kappa: f64,
        n_eig: usize,
        resolution: usize,
    },
    /// Triangle mesh loaded from an OFF file (path relative to the config).
    Mesh { path: String, n_eig: usize },
    /// Spectral-only factor: prescribed eigenvalues, constant curvature.
    Synthetic {
        kappa: f64,
        eigenvalues: Vec<f64>,
        area: f64,
    },
}

impl FactorSpec {
    fn build(&self, config_dir: &Path) -> Result<SurfaceFactor> {
        match self {
            FactorSpec::Sphere { lmax, n_theta } => make_sphere_factor(*lmax, *n_theta),
            FactorSpec::Torus { l1, l2, kmax } => make_flat_torus_factor(*l1, *l2, *kmax),
            FactorSpec::Hyperbolic {
                genus,
                kappa,
                n_eig,
                resolution,
            } => make_hyperbolic_factor(*genus, *kappa, *n_eig, *resolution),
            FactorSpec::Mesh { path, n_eig } => {
                let resolved = if Path::new(path).is_absolute() {
                    Path::new(path).to_path_buf()
                } else {
                    config_dir.join(path)
                };
                let text = std::fs::read_to_string(&resolved).map_err(|e| {
                    QcurvError::Ingestion(format!(
                        "cannot read mesh file {}: {e}",
                        resolved.display()
                    ))
                })?;
                let mesh = parse_off(&text)?;
                make_mesh_factor(&mesh, *n_eig)
            }
            FactorSpec::Synthetic {
                kappa,
                eigenvalues,
                area,
            } => make_synthetic_factor(*kappa, eigenvalues.clone(), *area),
        }
    }
}

impl ModelSpec {
    /// Build the product manifold; mesh paths resolve relative to
    /// `config_dir`.
    pub fn build(&self, config_dir: &Path) -> Result<ProductManifold4D> {
        let a = self.factor_a.build(config_dir)?;
        let b = self.factor_b.build(config_dir)?;
        make_product(a, b, self.s_max)
    }
}

/// One Dirac atom of a formal barycenter: a product node and its mass.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub center: usize,
    pub mass: f64,
}

impl AtomSpec {
    pub fn to_atom(&self) -> BubbleAtom {
        BubbleAtom {
            center: self.center,
            mass: self.mass,
        }
    }
}

/// Build a barycenter from explicit atoms, or distribute `n_atoms` equal
/// masses over maximally separated nodes when the list is empty.
pub fn resolve_atoms(
    m: &ProductManifold4D,
    atoms: &[AtomSpec],
    n_atoms: usize,
) -> Result<Barycenter> {
    if atoms.is_empty() {
        let centers = qcurv_core::solver::spread_nodes(m, n_atoms.max(1))?;
        let mass = 1.0 / centers.len() as f64;
        let entries = centers
            .iter()
            .map(|&center| BubbleAtom { center, mass })
            .collect();
        Barycenter::new(m, entries)
    } else {
        Barycenter::new(m, atoms.iter().map(AtomSpec::to_atom).collect())
    }
}

// ---------------------------------------------------------------------------
// Command blocks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumBlock {
    /// How many of the lowest eigenvalues the JSON report lists (the CSV
    /// always carries the whole truncated spectrum).
    pub n_low: usize,
}

impl Default for SpectrumBlock {
    fn default() -> Self {
        SpectrumBlock { n_low: 16 }
    }
}

/// Iteration controls for `solve` and `continuation` (mirrors the library
/// solver options).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBlock {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub residual_tol: f64,
    pub backtrack_shrink: f64,
    pub backtrack_c1: f64,
    /// Deformation parameter for single solves.
    pub rho: f64,
    /// Continuation schedule.
    pub rho_start: f64,
    pub rho_end: f64,
    pub rho_step: f64,
    pub newton_max_iters: usize,
    /// Newton basin threshold on the residual norm; `null` selects
    /// `1e-2 * max(|k_P|, 1) / V`.
    pub basin_threshold: Option<f64>,
    pub newton_subspace: usize,
    pub initializer: InitializerSpec,
}

impl Default for SolverBlock {
    fn default() -> Self {
        let o = SolveOptions::default();
        SolverBlock {
            max_iters: o.max_iters,
            grad_tol: o.grad_tol,
            residual_tol: o.residual_tol,
            backtrack_shrink: o.backtrack_shrink,
            backtrack_c1: o.backtrack_c1,
            rho: o.rho,
            rho_start: o.rho_start,
            rho_end: o.rho_end,
            rho_step: o.rho_step,
            newton_max_iters: o.newton_max_iters,
            basin_threshold: o.basin_threshold,
            newton_subspace: o.newton_subspace,
            initializer: InitializerSpec::Zero,
        }
    }
}

/// Starting field of an iterative solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitializerSpec {
    /// `u = 0`.
    Zero,
    /// Concentration profile at the given barycenter.
    Bubble { atoms: Vec<AtomSpec>, lambda: f64 },
    /// Random band-limited field with coefficients uniform in
    /// `(-amplitude, amplitude)`, drawn from the run seed.
    Random { amplitude: f64 },
}

impl SolverBlock {
    /// Convert to library solve options; random initializers are drawn from
    /// `seed` on the target model.
    pub fn to_options(&self, m: &ProductManifold4D, seed: u64) -> Result<SolveOptions> {
        let initializer = match &self.initializer {
            InitializerSpec::Zero => Initializer::Zero,
            InitializerSpec::Bubble { atoms, lambda } => Initializer::Bubble {
                atoms: atoms.iter().map(AtomSpec::to_atom).collect(),
                lambda: *lambda,
            },
            InitializerSpec::Random { amplitude } => {
                Initializer::Field(crate::commands::random_band_limited(m, seed, *amplitude)?)
            }
        };
        Ok(SolveOptions {
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            residual_tol: self.residual_tol,
            backtrack_shrink: self.backtrack_shrink,
            backtrack_c1: self.backtrack_c1,
            rho: self.rho,
            rho_start: self.rho_start,
            rho_end: self.rho_end,
            rho_step: self.rho_step,
            newton_max_iters: self.newton_max_iters,
            basin_threshold: self.basin_threshold,
            newton_subspace: self.newton_subspace,
            initializer,
            seed,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BubbleBlock {
    /// Barycenter atoms; empty = `n_atoms` equal masses at maximally
    /// separated nodes.
    pub atoms: Vec<AtomSpec>,
    pub n_atoms: usize,
    /// Concentration parameters evaluated one by one.
    pub lambda_values: Vec<f64>,
}

impl Default for BubbleBlock {
    fn default() -> Self {
        BubbleBlock {
            atoms: Vec::new(),
            n_atoms: 1,
            lambda_values: vec![5.0, 10.0, 20.0, 40.0, 80.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectBlock {
    /// Barycenter the test field concentrates at; empty = auto spread.
    pub atoms: Vec<AtomSpec>,
    pub n_atoms: usize,
    pub lambda: f64,
    /// Number of concentration points the projection recovers.
    pub k: usize,
}

impl Default for ProjectBlock {
    fn default() -> Self {
        ProjectBlock {
            atoms: Vec::new(),
            n_atoms: 2,
            lambda: 80.0,
            k: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamsBlock {
    /// Single-bubble members at these concentration parameters.
    pub lambda_values: Vec<f64>,
    /// Bubble center node; `null` = node of maximal spread rank 0.
    pub center: Option<usize>,
    /// Number of random band-limited members.
    pub n_random: usize,
    /// Amplitude of the random members. Keep it small enough that their
    /// quadratic energy stays below the bubble ladder's: the tail slope is
    /// fitted over the highest-energy members, and random fields carry no
    /// concentration, so letting them own the energy tail flattens the fit.
    /// Random members still participate in the calibrated-constant check at
    /// any amplitude.
    pub amplitude: f64,
}

impl Default for AdamsBlock {
    fn default() -> Self {
        AdamsBlock {
            lambda_values: vec![5.0, 10.0, 20.0, 40.0, 80.0, 160.0],
            center: None,
            n_random: 20,
            amplitude: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImprovedAdamsBlock {
    /// Improvement order: `ell + 1` separated balls must each hold mass.
    pub ell: usize,
    /// Minimal conformal mass per ball for a member to be kept.
    pub gamma0: f64,
    /// Ball separation, absolute; overrides `delta0_fraction` when set.
    pub delta0: Option<f64>,
    /// Ball separation as a fraction of the model diameter.
    pub delta0_fraction: f64,
    /// Ball centers (exactly `ell + 1`); empty = maximally separated nodes.
    pub centers: Vec<usize>,
    /// Multi-bubble members (equal masses on the centers) at these
    /// concentration parameters.
    pub lambda_values: Vec<f64>,
    /// Random band-limited members (typically filtered out — they spread no
    /// mass); reported via the exclusion count.
    pub n_random: usize,
    pub amplitude: f64,
}

impl Default for ImprovedAdamsBlock {
    fn default() -> Self {
        ImprovedAdamsBlock {
            ell: 1,
            gamma0: 0.4,
            delta0: None,
            delta0_fraction: 0.45,
            centers: Vec::new(),
            lambda_values: vec![5.0, 10.0, 20.0, 40.0, 80.0, 160.0],
            n_random: 4,
            amplitude: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreenBlock {
    pub pole: usize,
    /// Modes used in the spectral solve; `0` = the whole truncated basis.
    pub n_modes: usize,
    /// Rescale the curvature so the source equation is solvable (required
    /// unless the total curvature is already `8 pi^2`).
    pub rescale: bool,
    /// Second pole for the symmetry check of the regular part.
    pub symmetry_pole: Option<usize>,
    /// Random band-limited test fields for the weak-residual check.
    pub n_test_fields: usize,
}

impl Default for GreenBlock {
    fn default() -> Self {
        GreenBlock {
            pole: 0,
            n_modes: 0,
            rescale: true,
            symmetry_pole: None,
            n_test_fields: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinmaxBlock {
    /// Barycenter stratum: up to `k` Dirac atoms.
    pub k: usize,
    /// Concentration parameter of the profile family.
    pub lambda_bar: f64,
    /// Sampled barycenters (structured + random).
    pub n_sigma: usize,
    /// Grid points on the scaling interval `[0, 1]`.
    pub n_t: usize,
    /// Deformation values for the normalized-witness table.
    pub rho_values: Vec<f64>,
}

impl Default for MinmaxBlock {
    fn default() -> Self {
        MinmaxBlock {
            k: 2,
            lambda_bar: 40.0,
            n_sigma: 6,
            n_t: 11,
            rho_values: vec![0.9, 0.95, 1.0, 1.05, 1.1],
        }
    }
}
