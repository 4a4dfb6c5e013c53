//! Discrete model surfaces: spectrum, quadrature nodes, Gauss curvature,
//! and geodesic distance for spheres, flat tori, triangle meshes, synthetic
//! (spectral-only) surfaces, and constant-curvature hyperbolic surrogates.

use std::path::Path;

use nalgebra::DMatrix;

use super::mesh::{
    all_pairs_distances, angle_defects, cotan_laplacian, lowest_eigenpairs, parse_off,
    validate_closed_manifold, MeshData,
};
use super::meshgen::genus_chain;
use crate::error::{QcurvError, Result};
use crate::numerics::{alp_index, gauss_legendre, normalized_assoc_legendre};

/// Which construction produced a factor (fixes closed-form geometry where
/// one exists).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    /// Unit round sphere, Gauss-Legendre x uniform-longitude nodes.
    Sphere,
    /// Flat rectangular torus, uniform grid, Fourier modes.
    FlatTorus,
    /// Triangle mesh: cotangent Laplacian, angle-defect curvature.
    Mesh,
    /// Spectral data only; no nodes, constant curvature.
    Synthetic,
    /// Mesh-backed surrogate for a constant-negative-curvature surface:
    /// spectrum and distances come from an internally generated mesh, the
    /// curvature field is the exact constant, and the area is normalized so
    /// the total curvature matches the topology.
    Hyperbolic,
}

#[derive(Debug, Clone)]
enum FactorGeometry {
    Sphere { points: Vec<[f64; 3]> },
    Torus { l1: f64, l2: f64, points: Vec<[f64; 2]> },
    Mesh { distances: DMatrix<f64> },
    None,
}

/// A discretized closed surface: ordered Laplacian eigenpairs (convention
/// `lap = -div grad`, eigenvalues >= 0), quadrature nodes with weights,
/// Gauss curvature, Euler characteristic, and geodesic distances.
#[derive(Debug, Clone)]
pub struct SurfaceFactor {
    pub kind: FactorKind,
    pub area: f64,
    pub euler_char: i64,
    /// Ascending; `eigenvalues[0] = 0` (constant mode).
    pub eigenvalues: Vec<f64>,
    /// `Some(kappa)` when the Gauss curvature is exactly constant.
    pub curvature_constant: Option<f64>,
    eigenfunctions: Option<DMatrix<f64>>,
    weights: Vec<f64>,
    curvature: Option<Vec<f64>>,
    curvature_lap: Option<Vec<f64>>,
    geometry: FactorGeometry,
    diameter: Option<f64>,
}

/// Unit round sphere sampled on a Gauss-Legendre (colatitude) x uniform
/// (longitude) grid of `n_theta x n_theta` nodes, with real spherical
/// harmonics up to degree `lmax` as eigenfunctions.
pub fn make_sphere_factor(lmax: usize, n_theta: usize) -> Result<SurfaceFactor> {
    if lmax < 2 {
        return Err(QcurvError::Config(format!(
            "sphere factor needs lmax >= 2, got {lmax}"
        )));
    }
    if n_theta < 2 * lmax + 2 {
        return Err(QcurvError::Config(format!(
            "sphere grid n_theta = {n_theta} is below the exactness bound {} for lmax = {lmax}",
            2 * lmax + 2
        )));
    }
    let pi = std::f64::consts::PI;
    let n_phi = n_theta;
    let (xs, ws) = gauss_legendre(n_theta);
    let n_nodes = n_theta * n_phi;

    let mut points = Vec::with_capacity(n_nodes);
    let mut weights = Vec::with_capacity(n_nodes);
    for (it, (&x, &w)) in xs.iter().zip(&ws).enumerate() {
        let sin_theta = (1.0 - x * x).max(0.0).sqrt();
        for ip in 0..n_phi {
            let phi = 2.0 * pi * ip as f64 / n_phi as f64;
            points.push([sin_theta * phi.cos(), sin_theta * phi.sin(), x]);
            weights.push(w * 2.0 * pi / n_phi as f64);
        }
        debug_assert_eq!(points.len(), (it + 1) * n_phi);
    }

    let n_modes = (lmax + 1) * (lmax + 1);
    let mut eigenvalues = Vec::with_capacity(n_modes);
    for l in 0..=lmax {
        let lam = (l * (l + 1)) as f64;
        eigenvalues.push(lam); // m = 0
        for _m in 1..=l {
            eigenvalues.push(lam); // cos
            eigenvalues.push(lam); // sin
        }
    }

    let mut funcs = DMatrix::zeros(n_nodes, n_modes);
    let sqrt2 = 2.0_f64.sqrt();
    for (it, &x) in xs.iter().enumerate() {
        let table = normalized_assoc_legendre(lmax, x);
        for ip in 0..n_phi {
            let phi = 2.0 * pi * ip as f64 / n_phi as f64;
            let node = it * n_phi + ip;
            let mut col = 0usize;
            for l in 0..=lmax {
                funcs[(node, col)] = table[alp_index(l, 0)];
                col += 1;
                for m in 1..=l {
                    let plm = table[alp_index(l, m)];
                    let mphi = m as f64 * phi;
                    funcs[(node, col)] = sqrt2 * plm * mphi.cos();
                    funcs[(node, col + 1)] = sqrt2 * plm * mphi.sin();
                    col += 2;
                }
            }
        }
    }

    let n = n_nodes;
    let factor = SurfaceFactor {
        kind: FactorKind::Sphere,
        area: 4.0 * pi,
        euler_char: 2,
        eigenvalues,
        curvature_constant: Some(1.0),
        eigenfunctions: Some(funcs),
        weights,
        curvature: Some(vec![1.0; n]),
        curvature_lap: Some(vec![0.0; n]),
        geometry: FactorGeometry::Sphere { points },
        diameter: Some(pi),
    };
    factor.self_check(1e-8)?;
    Ok(factor)
}

/// Flat rectangular torus `[0, l1) x [0, l2)` on a uniform grid with real
/// Fourier eigenfunctions for all wave vectors `|p|, |q| <= kmax`.
pub fn make_flat_torus_factor(l1: f64, l2: f64, kmax: usize) -> Result<SurfaceFactor> {
    if !(l1 > 0.0 && l2 > 0.0) {
        return Err(QcurvError::Config(format!(
            "torus side lengths must be positive, got {l1} x {l2}"
        )));
    }
    if kmax < 1 {
        return Err(QcurvError::Config("torus factor needs kmax >= 1".into()));
    }
    let pi = std::f64::consts::PI;
    let n_side = (2 * kmax + 2).max(12);
    let n_nodes = n_side * n_side;
    let area = l1 * l2;

    let mut points = Vec::with_capacity(n_nodes);
    for i in 0..n_side {
        for j in 0..n_side {
            points.push([l1 * i as f64 / n_side as f64, l2 * j as f64 / n_side as f64]);
        }
    }
    let weights = vec![area / n_nodes as f64; n_nodes];

    // Canonical wave-vector representatives: one of (p,q)/(-p,-q).
    struct Rep {
        p: i64,
        q: i64,
        lambda: f64,
    }
    let mut reps = Vec::new();
    for p in 0..=kmax as i64 {
        let q_range: Vec<i64> = if p == 0 {
            (1..=kmax as i64).collect()
        } else {
            (-(kmax as i64)..=kmax as i64).collect()
        };
        for q in q_range {
            let lambda = 4.0 * pi * pi
                * ((p * p) as f64 / (l1 * l1) + (q * q) as f64 / (l2 * l2));
            reps.push(Rep { p, q, lambda });
        }
    }
    reps.sort_by(|a, b| {
        a.lambda
            .total_cmp(&b.lambda)
            .then(a.p.cmp(&b.p))
            .then(a.q.cmp(&b.q))
    });

    let n_modes = 1 + 2 * reps.len();
    let mut eigenvalues = Vec::with_capacity(n_modes);
    let mut funcs = DMatrix::zeros(n_nodes, n_modes);
    let inv_sqrt_area = 1.0 / area.sqrt();
    for node in 0..n_nodes {
        funcs[(node, 0)] = inv_sqrt_area;
    }
    eigenvalues.push(0.0);
    let amp = (2.0 / area).sqrt();
    for rep in &reps {
        let col = eigenvalues.len();
        eigenvalues.push(rep.lambda);
        eigenvalues.push(rep.lambda);
        for (node, pt) in points.iter().enumerate() {
            let phase = 2.0 * pi * (rep.p as f64 * pt[0] / l1 + rep.q as f64 * pt[1] / l2);
            funcs[(node, col)] = amp * phase.cos();
            funcs[(node, col + 1)] = amp * phase.sin();
        }
    }

    let factor = SurfaceFactor {
        kind: FactorKind::FlatTorus,
        area,
        euler_char: 0,
        eigenvalues,
        curvature_constant: Some(0.0),
        eigenfunctions: Some(funcs),
        weights,
        curvature: Some(vec![0.0; n_nodes]),
        curvature_lap: Some(vec![0.0; n_nodes]),
        geometry: FactorGeometry::Torus { l1, l2, points },
        diameter: Some(0.5 * (l1 * l1 + l2 * l2).sqrt()),
    };
    factor.self_check(1e-8)?;
    Ok(factor)
}

/// Load a closed oriented triangle mesh from an OFF file and build its
/// factor with the lowest `n_eig` Laplacian eigenpairs.
pub fn load_mesh_factor(path: &Path, n_eig: usize) -> Result<SurfaceFactor> {
    let text = std::fs::read_to_string(path)?;
    let mesh = parse_off(&text)?;
    make_mesh_factor(&mesh, n_eig)
}

/// Build a factor from an in-memory triangle mesh (cotangent Laplacian,
/// lumped masses, angle-defect curvature, edge-path distances).
pub fn make_mesh_factor(mesh: &MeshData, n_eig: usize) -> Result<SurfaceFactor> {
    factor_from_mesh(mesh, n_eig, None, FactorKind::Mesh)
}

/// Constant-curvature hyperbolic surface of the given genus, realized as a
/// mesh surrogate: an internally generated genus-`genus` surface supplies
/// nodes, spectrum, and distances; the curvature field is the exact
/// constant `kappa < 0`; and the mesh is rescaled so area = 2 pi chi /
/// kappa (total curvature matches the topology exactly).
pub fn make_hyperbolic_factor(
    genus: usize,
    kappa: f64,
    n_eig: usize,
    resolution: usize,
) -> Result<SurfaceFactor> {
    if kappa >= 0.0 {
        return Err(QcurvError::Config(format!(
            "hyperbolic factor needs kappa < 0, got {kappa}"
        )));
    }
    if resolution < 3 {
        return Err(QcurvError::Config(
            "hyperbolic factor needs resolution >= 3".into(),
        ));
    }
    let nu = 4 * resolution;
    let nv = 2 * resolution + 2;
    let mut mesh = genus_chain(genus, nu, nv, 1.0, 0.45)?;
    let chi = 2.0 - 2.0 * genus as f64;
    let target_area = 2.0 * std::f64::consts::PI * chi / kappa;
    mesh.scale((target_area / mesh.area()).sqrt());
    factor_from_mesh(&mesh, n_eig, Some(kappa), FactorKind::Hyperbolic)
}

fn factor_from_mesh(
    mesh: &MeshData,
    n_eig: usize,
    curvature_override: Option<f64>,
    kind: FactorKind,
) -> Result<SurfaceFactor> {
    let euler_char = validate_closed_manifold(mesh)?;
    let (l, mass) = cotan_laplacian(mesh);
    let (eigenvalues, funcs) = lowest_eigenpairs(&l, &mass, n_eig)?;
    let n = mesh.n_vertices();
    let area: f64 = mass.iter().sum();

    let (curvature, curvature_lap, curvature_constant) = match curvature_override {
        Some(kappa) => (vec![kappa; n], vec![0.0; n], Some(kappa)),
        None => {
            let defects = angle_defects(mesh);
            let k: Vec<f64> = defects.iter().zip(&mass).map(|(d, m)| d / m).collect();
            // lap K = M^{-1} L K in the positive (-div grad) convention.
            let kv = nalgebra::DVector::from_column_slice(&k);
            let lk = &l * kv;
            let lap: Vec<f64> = lk.iter().zip(&mass).map(|(x, m)| x / m).collect();
            (k, lap, None)
        }
    };

    let distances = all_pairs_distances(mesh);
    let diameter = distances.iter().cloned().fold(0.0, f64::max);

    let factor = SurfaceFactor {
        kind,
        area,
        euler_char,
        eigenvalues,
        curvature_constant,
        eigenfunctions: Some(funcs),
        weights: mass,
        curvature: Some(curvature),
        curvature_lap: Some(curvature_lap),
        geometry: FactorGeometry::Mesh { distances },
        diameter: Some(diameter),
    };
    factor.self_check(1e-6)?;
    Ok(factor)
}

/// Spectral-only factor: a prescribed spectrum with constant curvature and
/// no quadrature nodes. Any node-dependent operation on it fails with an
/// explicit error instead of approximating.
pub fn make_synthetic_factor(
    kappa: f64,
    eigenvalues: Vec<f64>,
    area: f64,
) -> Result<SurfaceFactor> {
    if !(area > 0.0) {
        return Err(QcurvError::Config(format!("area must be positive, got {area}")));
    }
    if eigenvalues.is_empty() {
        return Err(QcurvError::Validation("eigenvalue list is empty".into()));
    }
    if eigenvalues[0] != 0.0 {
        return Err(QcurvError::Validation(format!(
            "first eigenvalue must be exactly 0, got {}",
            eigenvalues[0]
        )));
    }
    if eigenvalues.iter().any(|&l| l < 0.0) {
        return Err(QcurvError::Validation(
            "negative eigenvalue in synthetic spectrum".into(),
        ));
    }
    if eigenvalues.windows(2).any(|w| w[0] > w[1]) {
        return Err(QcurvError::Validation(
            "synthetic spectrum must be sorted ascending".into(),
        ));
    }
    // Constant-curvature consistency: total curvature = kappa * area must be
    // 2 pi chi for an integer chi.
    let chi_real = kappa * area / (2.0 * std::f64::consts::PI);
    let chi = chi_real.round();
    if (chi_real - chi).abs() > 1e-6 {
        return Err(QcurvError::Validation(format!(
            "kappa * area / 2pi = {chi_real:.6} is not an integer Euler characteristic"
        )));
    }
    Ok(SurfaceFactor {
        kind: FactorKind::Synthetic,
        area,
        euler_char: chi as i64,
        eigenvalues,
        curvature_constant: Some(kappa),
        eigenfunctions: None,
        weights: Vec::new(),
        curvature: None,
        curvature_lap: None,
        geometry: FactorGeometry::None,
        diameter: None,
    })
}

impl SurfaceFactor {
    pub fn n_nodes(&self) -> usize {
        self.weights.len()
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn has_nodes(&self) -> bool {
        !self.weights.is_empty()
    }

    fn require_nodes(&self, what: &str) -> Result<()> {
        if self.has_nodes() {
            Ok(())
        } else {
            Err(QcurvError::Unsupported(format!(
                "{what} needs quadrature nodes, but this factor is spectral-only"
            )))
        }
    }

    /// Quadrature weights (strictly positive, summing to the area).
    pub fn weights(&self) -> Result<&[f64]> {
        self.require_nodes("quadrature")?;
        Ok(&self.weights)
    }

    /// Eigenfunction samples: rows = nodes, columns = modes.
    pub fn eigenfunctions(&self) -> Result<&DMatrix<f64>> {
        self.require_nodes("eigenfunction evaluation")?;
        self.eigenfunctions.as_ref().ok_or_else(|| {
            QcurvError::Unsupported("factor carries no sampled eigenfunctions".into())
        })
    }

    /// Density-weighted mode Gram matrix:
    /// `G[p, q] = sum_i w_i density_i phi_p(i) phi_q(i)`.
    pub fn mode_gram_with_density(&self, density: &[f64]) -> Result<DMatrix<f64>> {
        let phi = self.eigenfunctions()?;
        if density.len() != phi.nrows() {
            return Err(QcurvError::Validation(format!(
                "density has length {}, factor has {} nodes",
                density.len(),
                phi.nrows()
            )));
        }
        let mut scaled = phi.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= self.weights[i] * density[i];
        }
        Ok(phi.transpose() * scaled)
    }

    /// Gauss curvature per node.
    pub fn curvature(&self) -> Result<&[f64]> {
        self.require_nodes("pointwise curvature")?;
        Ok(self.curvature.as_deref().expect("node factors carry curvature"))
    }

    /// `lap K` per node in the positive (`-div grad`) convention; zero for
    /// constant-curvature factors.
    pub fn curvature_laplacian(&self) -> Result<&[f64]> {
        self.require_nodes("pointwise curvature")?;
        Ok(self
            .curvature_lap
            .as_deref()
            .expect("node factors carry curvature laplacians"))
    }

    /// Geodesic distance between two nodes.
    pub fn distance(&self, i: usize, j: usize) -> Result<f64> {
        if i == j && self.has_nodes() {
            return Ok(0.0);
        }
        match &self.geometry {
            FactorGeometry::Sphere { points } => {
                Ok(sphere_distance(points[i], points[j]))
            }
            FactorGeometry::Torus { l1, l2, points } => {
                Ok(torus_distance(points[i], points[j], *l1, *l2))
            }
            FactorGeometry::Mesh { distances } => Ok(distances[(i, j)]),
            FactorGeometry::None => Err(QcurvError::Unsupported(
                "distance needs nodes, but this factor is spectral-only".into(),
            )),
        }
    }

    /// Distances from node `i` to every node.
    pub fn distances_from(&self, i: usize) -> Result<Vec<f64>> {
        let mut row = match &self.geometry {
            FactorGeometry::Sphere { points } => points
                .iter()
                .map(|&p| sphere_distance(points[i], p))
                .collect::<Vec<_>>(),
            FactorGeometry::Torus { l1, l2, points } => points
                .iter()
                .map(|&p| torus_distance(points[i], p, *l1, *l2))
                .collect(),
            FactorGeometry::Mesh { distances } => distances.row(i).iter().cloned().collect(),
            FactorGeometry::None => {
                return Err(QcurvError::Unsupported(
                    "distance needs nodes, but this factor is spectral-only".into(),
                ))
            }
        };
        row[i] = 0.0;
        Ok(row)
    }

    /// Geodesic diameter (closed form where available, max node distance on
    /// meshes).
    pub fn diameter(&self) -> Result<f64> {
        self.diameter.ok_or_else(|| {
            QcurvError::Unsupported("spectral-only factor has no diameter".into())
        })
    }

    /// Length of the geodesic circle of radius `t` around a point.
    ///
    /// Closed form for spheres (`2 pi sin t`) and flat tori (circle clipped
    /// to the fundamental domain); mesh-backed factors use the flat
    /// `2 pi t`, consistent with their edge-path distances.
    pub fn circle_length(&self, t: f64) -> f64 {
        let pi = std::f64::consts::PI;
        if t <= 0.0 {
            return 0.0;
        }
        match &self.geometry {
            FactorGeometry::Sphere { .. } => {
                if t >= pi {
                    0.0
                } else {
                    2.0 * pi * t.sin()
                }
            }
            FactorGeometry::Torus { l1, l2, .. } => {
                let a = 0.5 * l1;
                let b = 0.5 * l2;
                let theta_min = if t > a { (a / t).acos() } else { 0.0 };
                let theta_max = if t > b { (b / t).asin() } else { 0.5 * pi };
                4.0 * t * (theta_max - theta_min).max(0.0)
            }
            _ => 2.0 * pi * t,
        }
    }

    /// `div grad` of the distance-from-a-point function at radius `d > 0`
    /// (classical sign, NOT the spectral `-div grad` convention):
    /// `cot d` on the unit sphere, `1/d` on flat geometry.
    pub fn distance_divgrad(&self, d: f64) -> f64 {
        match &self.geometry {
            FactorGeometry::Sphere { .. } => 1.0 / d.tan(),
            _ => 1.0 / d,
        }
    }

    /// Whether geodesic angles between node pairs are available (needed for
    /// pointwise multi-center gradients); true for closed-form geometries.
    pub fn supports_angles(&self) -> bool {
        matches!(
            self.geometry,
            FactorGeometry::Sphere { .. } | FactorGeometry::Torus { .. }
        )
    }

    /// Cosine of the angle at node `at` between the minimizing geodesics
    /// toward nodes `i` and `j`. Returns 0 when a direction is degenerate
    /// (coincident or antipodal points); callers only use the angle where
    /// the accompanying radial derivative vanishes in those cases.
    pub fn geodesic_angle_cos(&self, at: usize, i: usize, j: usize) -> Result<f64> {
        match &self.geometry {
            FactorGeometry::Sphere { points } => {
                let x = points[at];
                let u = tangent_toward(x, points[i]);
                let v = tangent_toward(x, points[j]);
                match (u, v) {
                    (Some(u), Some(v)) => Ok(dot3(u, v).clamp(-1.0, 1.0)),
                    _ => Ok(0.0),
                }
            }
            FactorGeometry::Torus { l1, l2, points } => {
                let x = points[at];
                let u = [
                    wrap_signed(points[i][0] - x[0], *l1),
                    wrap_signed(points[i][1] - x[1], *l2),
                ];
                let v = [
                    wrap_signed(points[j][0] - x[0], *l1),
                    wrap_signed(points[j][1] - x[1], *l2),
                ];
                let nu = (u[0] * u[0] + u[1] * u[1]).sqrt();
                let nv = (v[0] * v[0] + v[1] * v[1]).sqrt();
                if nu < 1e-12 || nv < 1e-12 {
                    return Ok(0.0);
                }
                Ok(((u[0] * v[0] + u[1] * v[1]) / (nu * nv)).clamp(-1.0, 1.0))
            }
            _ => Err(QcurvError::Unsupported(
                "geodesic angles are only available on closed-form factors".into(),
            )),
        }
    }

    /// Construction-time invariant checks (weights, orthonormality, total
    /// curvature, constant mode).
    fn self_check(&self, gram_tol: f64) -> Result<()> {
        if self.eigenvalues[0] != 0.0 {
            return Err(QcurvError::Numeric {
                what: "factor spectrum: lowest eigenvalue".into(),
                residual: self.eigenvalues[0].abs(),
            });
        }
        if self.eigenvalues.windows(2).any(|w| w[0] > w[1]) {
            return Err(QcurvError::Validation(
                "factor eigenvalues not sorted".into(),
            ));
        }
        if !self.has_nodes() {
            return Ok(());
        }
        if self.weights.iter().any(|&w| w <= 0.0) {
            return Err(QcurvError::Validation(
                "nonpositive quadrature weight".into(),
            ));
        }
        let wsum: f64 = self.weights.iter().sum();
        let area_residual = (wsum - self.area).abs() / self.area.max(1.0);
        if area_residual > 1e-8 {
            return Err(QcurvError::Numeric {
                what: "factor quadrature: weight sum vs area".into(),
                residual: area_residual,
            });
        }
        // Constant mode equals 1/sqrt(area).
        let funcs = self.eigenfunctions.as_ref().expect("node factor");
        let c = 1.0 / self.area.sqrt();
        let c_residual = funcs
            .column(0)
            .iter()
            .map(|v| (v - c).abs())
            .fold(0.0, f64::max);
        if c_residual > 1e-8 * c.max(1.0) {
            return Err(QcurvError::Numeric {
                what: "factor spectrum: constant mode".into(),
                residual: c_residual,
            });
        }
        // Gram residual in the quadrature inner product.
        let mut weighted = funcs.clone();
        for (i, &w) in self.weights.iter().enumerate() {
            for j in 0..weighted.ncols() {
                weighted[(i, j)] *= w;
            }
        }
        let gram = funcs.transpose() * weighted;
        let mut gram_residual: f64 = 0.0;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let expected = if i == j { 1.0 } else { 0.0 };
                gram_residual = gram_residual.max((gram[(i, j)] - expected).abs());
            }
        }
        if gram_residual > gram_tol {
            return Err(QcurvError::Numeric {
                what: "factor spectrum: orthonormality (Gram residual)".into(),
                residual: gram_residual,
            });
        }
        // Total curvature = 2 pi chi.
        let k = self.curvature.as_ref().expect("node factor");
        let total_k: f64 = self.weights.iter().zip(k).map(|(w, k)| w * k).sum();
        let expected = 2.0 * std::f64::consts::PI * self.euler_char as f64;
        if (total_k - expected).abs() > 1e-8 * expected.abs().max(1.0) {
            return Err(QcurvError::Numeric {
                what: "factor curvature: total curvature vs topology".into(),
                residual: (total_k - expected).abs(),
            });
        }
        Ok(())
    }
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn sphere_distance(p: [f64; 3], q: [f64; 3]) -> f64 {
    dot3(p, q).clamp(-1.0, 1.0).acos()
}

/// Unit tangent vector at `x` (on the unit sphere) pointing toward `p`;
/// `None` when `p` is at `x` or its antipode.
fn tangent_toward(x: [f64; 3], p: [f64; 3]) -> Option<[f64; 3]> {
    let c = dot3(x, p);
    let t = [p[0] - c * x[0], p[1] - c * x[1], p[2] - c * x[2]];
    let n = dot3(t, t).sqrt();
    if n < 1e-12 {
        None
    } else {
        Some([t[0] / n, t[1] / n, t[2] / n])
    }
}

/// Signed displacement wrapped to `[-l/2, l/2]`.
fn wrap_signed(d: f64, l: f64) -> f64 {
    d - l * (d / l).round()
}

fn torus_distance(p: [f64; 2], q: [f64; 2], l1: f64, l2: f64) -> f64 {
    let dx = wrap_signed(p[0] - q[0], l1);
    let dy = wrap_signed(p[1] - q[1], l2);
    (dx * dx + dy * dy).sqrt()
}
