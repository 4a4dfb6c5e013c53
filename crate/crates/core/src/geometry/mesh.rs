//! Triangle meshes: OFF ingestion, closed-manifold validation, cotangent
//! Laplacian with lumped vertex masses, angle-defect curvature, a Lanczos
//! eigensolver with full reorthogonalization, and all-pairs shortest-path
//! distances along edges.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{QcurvError, Result};

/// Raw indexed triangle mesh.
#[derive(Debug, Clone)]
pub struct MeshData {
    pub positions: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
}

impl MeshData {
    pub fn n_vertices(&self) -> usize {
        self.positions.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    /// Total surface area (sum of triangle areas).
    pub fn area(&self) -> f64 {
        self.faces.iter().map(|f| self.face_area(f)).sum()
    }

    fn face_area(&self, f: &[usize; 3]) -> f64 {
        let [a, b, c] = *f;
        let u = sub(self.positions[b], self.positions[a]);
        let v = sub(self.positions[c], self.positions[a]);
        0.5 * norm(cross(u, v))
    }

    /// Signed enclosed volume; positive when faces wind outward.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|&[a, b, c]| {
                let pa = self.positions[a];
                let pb = self.positions[b];
                let pc = self.positions[c];
                dot(pa, cross(pb, pc)) / 6.0
            })
            .sum()
    }

    /// Uniformly rescale positions about the origin.
    pub fn scale(&mut self, s: f64) {
        for p in &mut self.positions {
            p[0] *= s;
            p[1] *= s;
            p[2] *= s;
        }
    }
}

#[inline]
fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Parse an ASCII OFF file (triangles only).
pub fn parse_off(text: &str) -> Result<MeshData> {
    let mut tokens = text
        .lines()
        .map(|line| line.split('#').next().unwrap_or(""))
        .flat_map(|line| line.split_whitespace().map(String::from).collect::<Vec<_>>());
    let mut next = |what: &str| -> Result<String> {
        tokens
            .next()
            .ok_or_else(|| QcurvError::Ingestion(format!("OFF data ended early: expected {what}")))
    };

    let header = next("OFF header")?;
    if header != "OFF" {
        return Err(QcurvError::Ingestion(format!(
            "not an OFF file (header {header:?})"
        )));
    }
    let parse_usize = |tok: &str, what: &str| -> Result<usize> {
        tok.parse()
            .map_err(|_| QcurvError::Ingestion(format!("bad {what}: {tok:?}")))
    };
    let parse_f64 = |tok: &str, what: &str| -> Result<f64> {
        tok.parse()
            .map_err(|_| QcurvError::Ingestion(format!("bad {what}: {tok:?}")))
    };

    let nv = parse_usize(&next("vertex count")?, "vertex count")?;
    let nf = parse_usize(&next("face count")?, "face count")?;
    let _ne = parse_usize(&next("edge count")?, "edge count")?;

    let mut positions = Vec::with_capacity(nv);
    for _ in 0..nv {
        let x = parse_f64(&next("coordinate")?, "coordinate")?;
        let y = parse_f64(&next("coordinate")?, "coordinate")?;
        let z = parse_f64(&next("coordinate")?, "coordinate")?;
        positions.push([x, y, z]);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let arity = parse_usize(&next("face arity")?, "face arity")?;
        if arity != 3 {
            return Err(QcurvError::Ingestion(format!(
                "only triangle faces are supported, found a face with {arity} vertices"
            )));
        }
        let mut f = [0usize; 3];
        for slot in &mut f {
            let idx = parse_usize(&next("vertex index")?, "vertex index")?;
            if idx >= nv {
                return Err(QcurvError::Ingestion(format!(
                    "face references vertex {idx} but only {nv} vertices exist"
                )));
            }
            *slot = idx;
        }
        faces.push(f);
    }
    Ok(MeshData { positions, faces })
}

/// Serialize to ASCII OFF (full precision, stable formatting).
pub fn to_off_string(mesh: &MeshData) -> String {
    let mut out = String::from("OFF\n");
    out.push_str(&format!("{} {} 0\n", mesh.n_vertices(), mesh.n_faces()));
    for p in &mesh.positions {
        out.push_str(&format!("{:.17} {:.17} {:.17}\n", p[0], p[1], p[2]));
    }
    for f in &mesh.faces {
        out.push_str(&format!("3 {} {} {}\n", f[0], f[1], f[2]));
    }
    out
}

/// Validate that the mesh is a closed, connected, consistently oriented
/// 2-manifold; returns its Euler characteristic.
pub fn validate_closed_manifold(mesh: &MeshData) -> Result<i64> {
    let nv = mesh.n_vertices();
    let nf = mesh.n_faces();
    if nv < 4 || nf < 4 {
        return Err(QcurvError::Ingestion(format!(
            "mesh too small to be a closed surface ({nv} vertices, {nf} faces)"
        )));
    }
    // Directed edge bookkeeping: consistent orientation means each directed
    // edge appears exactly once and its reverse appears exactly once.
    let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
    for (fi, f) in mesh.faces.iter().enumerate() {
        if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
            return Err(QcurvError::Ingestion(format!(
                "face {fi} repeats a vertex"
            )));
        }
        for k in 0..3 {
            let e = (f[k], f[(k + 1) % 3]);
            if directed.insert(e, fi).is_some() {
                return Err(QcurvError::Ingestion(format!(
                    "directed edge {}->{} appears twice: non-manifold or inconsistently oriented",
                    e.0, e.1
                )));
            }
        }
    }
    for &(a, b) in directed.keys() {
        if !directed.contains_key(&(b, a)) {
            return Err(QcurvError::Ingestion(format!(
                "boundary edge {a}->{b}: mesh is not closed"
            )));
        }
    }
    // Vertex links must each be a single cycle (rules out bowtie vertices).
    let mut link_next: Vec<HashMap<usize, usize>> = vec![HashMap::new(); nv];
    let mut incident_faces = vec![0usize; nv];
    for f in &mesh.faces {
        for k in 0..3 {
            let (v, a, b) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
            if link_next[v].insert(a, b).is_some() {
                return Err(QcurvError::Ingestion(format!(
                    "vertex {v} has a non-manifold link"
                )));
            }
            incident_faces[v] += 1;
        }
    }
    for v in 0..nv {
        if incident_faces[v] == 0 {
            return Err(QcurvError::Ingestion(format!("vertex {v} is isolated")));
        }
        let start = *link_next[v].keys().min().expect("nonempty link");
        let mut cur = start;
        let mut steps = 0usize;
        loop {
            cur = *link_next[v].get(&cur).ok_or_else(|| {
                QcurvError::Ingestion(format!("vertex {v} has a broken link cycle"))
            })?;
            steps += 1;
            if cur == start {
                break;
            }
            if steps > incident_faces[v] {
                return Err(QcurvError::Ingestion(format!(
                    "vertex {v} link is not a single cycle"
                )));
            }
        }
        if steps != incident_faces[v] {
            return Err(QcurvError::Ingestion(format!(
                "vertex {v} link splits into several cycles (bowtie vertex)"
            )));
        }
    }
    // Connectivity.
    let mut seen = vec![false; nv];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1usize;
    while let Some(v) = stack.pop() {
        for &a in link_next[v].keys() {
            if !seen[a] {
                seen[a] = true;
                count += 1;
                stack.push(a);
            }
        }
    }
    if count != nv {
        return Err(QcurvError::Ingestion(format!(
            "mesh is disconnected ({count} of {nv} vertices reachable)"
        )));
    }
    let ne = directed.len() / 2;
    Ok(nv as i64 - ne as i64 + nf as i64)
}

/// Cotangent-weight Laplacian (positive semidefinite, `u' L u >= 0`) and
/// barycentric lumped vertex masses (one third of incident triangle areas).
pub fn cotan_laplacian(mesh: &MeshData) -> (DMatrix<f64>, Vec<f64>) {
    let n = mesh.n_vertices();
    let mut l = DMatrix::zeros(n, n);
    let mut mass = vec![0.0; n];
    for f in &mesh.faces {
        let [i, j, k] = *f;
        let area = mesh.face_area(f);
        for v in f {
            mass[*v] += area / 3.0;
        }
        // Cotangent of the angle at each corner weights the opposite edge.
        for (corner, (a, b)) in [(k, (i, j)), (i, (j, k)), (j, (k, i))] {
            let u = sub(mesh.positions[a], mesh.positions[corner]);
            let v = sub(mesh.positions[b], mesh.positions[corner]);
            let cot = dot(u, v) / norm(cross(u, v)).max(1e-300);
            let w = 0.5 * cot;
            l[(a, b)] -= w;
            l[(b, a)] -= w;
            l[(a, a)] += w;
            l[(b, b)] += w;
        }
    }
    (l, mass)
}

/// Angle defect `2 pi - sum of incident angles` per vertex. Summing over all
/// vertices gives `2 pi chi` exactly (up to floating point).
pub fn angle_defects(mesh: &MeshData) -> Vec<f64> {
    let mut defect = vec![2.0 * std::f64::consts::PI; mesh.n_vertices()];
    for f in &mesh.faces {
        let [i, j, k] = *f;
        for (corner, (a, b)) in [(i, (j, k)), (j, (k, i)), (k, (i, j))] {
            let u = sub(mesh.positions[a], mesh.positions[corner]);
            let v = sub(mesh.positions[b], mesh.positions[corner]);
            let cosang = (dot(u, v) / (norm(u) * norm(v))).clamp(-1.0, 1.0);
            defect[corner] -= cosang.acos();
        }
    }
    defect
}

/// Lowest `n_eig` eigenpairs of the generalized problem `L u = lambda M u`
/// (`M` the lumped mass diagonal), via Lanczos with full reorthogonalization
/// on the symmetrized operator `M^{-1/2} L M^{-1/2}`.
///
/// Returned eigenfunctions (columns) are orthonormal in the mass inner
/// product `<u, v> = sum_i M_i u_i v_i`. The first pair is pinned to the
/// exact constant `1/sqrt(area)` with eigenvalue zero, and all signs are
/// fixed deterministically.
pub fn lowest_eigenpairs(
    l: &DMatrix<f64>,
    mass: &[f64],
    n_eig: usize,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = l.nrows();
    if n_eig == 0 || n_eig > n {
        return Err(QcurvError::Config(format!(
            "requested {n_eig} eigenpairs from a {n}-vertex mesh"
        )));
    }
    let inv_sqrt_m: Vec<f64> = mass.iter().map(|&m| 1.0 / m.sqrt()).collect();
    // Symmetrized dense operator B = M^{-1/2} L M^{-1/2}.
    let mut b = l.clone();
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] *= inv_sqrt_m[i] * inv_sqrt_m[j];
        }
    }
    let bnorm = b.norm() / (n as f64).sqrt();

    let m_krylov = (3 * n_eig + 120).min(n);
    let (theta, ritz) = match lanczos_lowest(&b, m_krylov, n_eig, bnorm) {
        Ok(pair) => pair,
        // Retry with the full Krylov space (exact tridiagonalization) before
        // declaring failure.
        Err(_) if m_krylov < n => lanczos_lowest(&b, n, n_eig, bnorm)?,
        Err(e) => return Err(e),
    };

    // Map back to the generalized problem and pin the constant mode.
    let area: f64 = mass.iter().sum();
    let mut funcs = DMatrix::zeros(n, n_eig);
    let mut values = Vec::with_capacity(n_eig);
    for k in 0..n_eig {
        let mut u = DVector::zeros(n);
        for i in 0..n {
            u[i] = ritz[(i, k)] * inv_sqrt_m[i];
        }
        if k == 0 {
            u.fill(1.0 / area.sqrt());
            values.push(0.0);
        } else {
            // Remove any residual mean and renormalize in the mass product.
            let mean: f64 = (0..n).map(|i| mass[i] * u[i]).sum::<f64>() / area;
            for i in 0..n {
                u[i] -= mean;
            }
            let nrm: f64 = (0..n).map(|i| mass[i] * u[i] * u[i]).sum::<f64>().sqrt();
            u /= nrm;
            values.push(theta[k].max(0.0));
        }
        // Deterministic sign: largest-magnitude entry positive.
        let mut arg = 0usize;
        for i in 1..n {
            if u[i].abs() > u[arg].abs() {
                arg = i;
            }
        }
        if u[arg] < 0.0 {
            u = -u;
        }
        funcs.set_column(k, &u);
    }
    Ok((values, funcs))
}

/// Lanczos with full (two-pass) reorthogonalization; returns the lowest
/// `n_eig` Ritz values and vectors of the symmetric matrix `b`.
fn lanczos_lowest(
    b: &DMatrix<f64>,
    m: usize,
    n_eig: usize,
    bnorm: f64,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = b.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(0x51ee_7eed);
    let mut v = DMatrix::<f64>::zeros(n, m);
    let mut alpha = vec![0.0; m];
    let mut beta = vec![0.0; m];

    let mut v0: DVector<f64> =
        DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
    v0 /= v0.norm();
    v.set_column(0, &v0);

    for j in 0..m {
        let vj = v.column(j).clone_owned();
        let mut w = b * &vj;
        if j > 0 {
            w -= beta[j - 1] * v.column(j - 1);
        }
        alpha[j] = vj.dot(&w);
        w -= alpha[j] * &vj;
        // Full reorthogonalization, two passes.
        for _ in 0..2 {
            for k in 0..=j {
                let proj = v.column(k).dot(&w);
                w -= proj * v.column(k);
            }
        }
        if j + 1 == m {
            break;
        }
        let nw = w.norm();
        if nw <= 1e-13 * bnorm.max(1.0) {
            // Invariant subspace exhausted: restart with a fresh direction.
            let mut fresh: DVector<f64> =
                DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
            for k in 0..=j {
                let proj = v.column(k).dot(&fresh);
                fresh -= proj * v.column(k);
            }
            fresh /= fresh.norm();
            beta[j] = 0.0;
            v.set_column(j + 1, &fresh);
        } else {
            beta[j] = nw;
            v.set_column(j + 1, &(w / nw));
        }
    }

    // Dense eigendecomposition of the tridiagonal projection.
    let mut t = DMatrix::zeros(m, m);
    for j in 0..m {
        t[(j, j)] = alpha[j];
        if j + 1 < m {
            t[(j, j + 1)] = beta[j];
            t[(j + 1, j)] = beta[j];
        }
    }
    let eig = t.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let mut theta = Vec::with_capacity(n_eig);
    let mut ritz = DMatrix::zeros(n, n_eig);
    let mut worst_residual: f64 = 0.0;
    for (col, &idx) in order.iter().take(n_eig).enumerate() {
        theta.push(eig.eigenvalues[idx]);
        let y = &v * eig.eigenvectors.column(idx);
        let residual = (b * &y - eig.eigenvalues[idx] * &y).norm();
        worst_residual = worst_residual.max(residual);
        ritz.set_column(col, &y);
    }
    let tol = 1e-8 * bnorm.max(1.0);
    if worst_residual > tol {
        return Err(QcurvError::Numeric {
            what: format!("mesh eigensolver ({n_eig} pairs, Krylov dimension {m})"),
            residual: worst_residual,
        });
    }
    Ok((theta, ritz))
}

/// All-pairs geodesic distances along mesh edges (Dijkstra from every
/// vertex). Deterministic: ties broken by vertex index.
pub fn all_pairs_distances(mesh: &MeshData) -> DMatrix<f64> {
    let n = mesh.n_vertices();
    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut seen: HashMap<(usize, usize), ()> = HashMap::new();
    for f in &mesh.faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            if seen.insert(key, ()).is_none() {
                let len = norm(sub(mesh.positions[a], mesh.positions[b]));
                adjacency[a].push((b, len));
                adjacency[b].push((a, len));
            }
        }
    }
    for adj in &mut adjacency {
        adj.sort_by_key(|&(v, _)| v);
    }

    #[derive(PartialEq)]
    struct Entry(f64, usize);
    impl Eq for Entry {}
    impl PartialOrd for Entry {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Entry {
        fn cmp(&self, other: &Self) -> Ordering {
            // Reversed: BinaryHeap is a max-heap, we want the smallest first.
            other
                .0
                .total_cmp(&self.0)
                .then_with(|| other.1.cmp(&self.1))
        }
    }

    let mut dist = DMatrix::from_element(n, n, f64::INFINITY);
    for src in 0..n {
        let mut d = vec![f64::INFINITY; n];
        d[src] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Entry(0.0, src));
        while let Some(Entry(du, u)) = heap.pop() {
            if du > d[u] {
                continue;
            }
            for &(vtx, len) in &adjacency[u] {
                let cand = du + len;
                if cand < d[vtx] {
                    d[vtx] = cand;
                    heap.push(Entry(cand, vtx));
                }
            }
        }
        for (j, dj) in d.iter().enumerate() {
            dist[(src, j)] = *dj;
        }
    }
    dist
}
