//! Deterministic triangle-mesh generators: icospheres, grid tori, and
//! higher-genus surfaces built by chaining tori with bridge tubes.

use std::collections::HashMap;

use super::mesh::{validate_closed_manifold, MeshData};
use crate::error::{QcurvError, Result};

/// Unit icosphere: icosahedron subdivided `subdivisions` times, vertices
/// projected to the unit sphere. `subdivisions = 2` gives 162 vertices,
/// `3` gives 642.
pub fn icosphere(subdivisions: u32) -> MeshData {
    let t = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let positions: Vec<[f64; 3]> = raw.iter().map(|p| normalize(*p)).collect();
    let faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let mut mesh = MeshData { positions, faces };
    orient_outward(&mut mesh);
    for _ in 0..subdivisions {
        mesh = subdivide_on_sphere(&mesh);
    }
    mesh
}

fn normalize(p: [f64; 3]) -> [f64; 3] {
    let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    [p[0] / n, p[1] / n, p[2] / n]
}

fn orient_outward(mesh: &mut MeshData) {
    if mesh.signed_volume() < 0.0 {
        for f in &mut mesh.faces {
            f.swap(1, 2);
        }
    }
}

fn subdivide_on_sphere(mesh: &MeshData) -> MeshData {
    let mut positions = mesh.positions.clone();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, positions: &mut Vec<[f64; 3]>| -> usize {
        let key = (a.min(b), a.max(b));
        if let Some(&idx) = midpoint.get(&key) {
            return idx;
        }
        let pa = positions[a];
        let pb = positions[b];
        let m = normalize([pa[0] + pb[0], pa[1] + pb[1], pa[2] + pb[2]]);
        positions.push(m);
        let idx = positions.len() - 1;
        midpoint.insert(key, idx);
        idx
    };
    let mut faces = Vec::with_capacity(mesh.faces.len() * 4);
    for &[i, j, k] in &mesh.faces {
        let ij = mid(i, j, &mut positions);
        let jk = mid(j, k, &mut positions);
        let ik = mid(i, k, &mut positions);
        faces.push([i, ij, ik]);
        faces.push([j, jk, ij]);
        faces.push([k, ik, jk]);
        faces.push([ij, jk, ik]);
    }
    MeshData { positions, faces }
}

/// Structured torus mesh: `nu x nv` grid on the torus of major radius
/// `major` and minor radius `minor`, each grid quad split into two
/// triangles, wound outward.
pub fn torus_grid(nu: usize, nv: usize, major: f64, minor: f64) -> MeshData {
    assert!(nu >= 3 && nv >= 3, "torus grid needs at least 3x3 cells");
    assert!(major > minor && minor > 0.0, "torus radii must satisfy major > minor > 0");
    let tau = 2.0 * std::f64::consts::PI;
    let mut positions = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = tau * i as f64 / nu as f64;
        for j in 0..nv {
            let v = tau * j as f64 / nv as f64;
            let ring = major + minor * v.cos();
            positions.push([ring * u.cos(), ring * u.sin(), minor * v.sin()]);
        }
    }
    let idx = |i: usize, j: usize| (i % nu) * nv + (j % nv);
    let mut faces = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            let a = idx(i, j);
            let b = idx(i + 1, j);
            let c = idx(i + 1, j + 1);
            let d = idx(i, j + 1);
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    let mut mesh = MeshData { positions, faces };
    orient_outward(&mut mesh);
    mesh
}

/// Closed orientable surface of the given genus (`>= 2`), built as a chain
/// of grid tori bridged by tubes: one vertex star is removed on each side
/// of every junction and the two hexagonal boundary loops are joined by a
/// 12-triangle strip. The result is validated before being returned.
pub fn genus_chain(genus: usize, nu: usize, nv: usize, major: f64, minor: f64) -> Result<MeshData> {
    if genus < 2 {
        return Err(QcurvError::Config(
            "chained-torus construction needs genus >= 2".into(),
        ));
    }
    if nu < 8 || nu % 2 != 0 || nv < 6 {
        return Err(QcurvError::Config(format!(
            "torus grid {nu}x{nv} too coarse for bridging (need even nu >= 8, nv >= 6)"
        )));
    }
    let torus = torus_grid(nu, nv, major, minor);
    let per = torus.n_vertices();
    let spacing = 2.0 * (major + minor) + 0.6 * minor;

    let mut positions = Vec::with_capacity(per * genus);
    let mut faces = Vec::with_capacity(torus.n_faces() * genus);
    for t in 0..genus {
        let dx = t as f64 * spacing;
        for p in &torus.positions {
            positions.push([p[0] + dx, p[1], p[2]]);
        }
        for f in &torus.faces {
            faces.push([f[0] + t * per, f[1] + t * per, f[2] + t * per]);
        }
    }

    // Grid index helper matching torus_grid's layout.
    let grid = |t: usize, i: usize, j: usize| t * per + (i % nu) * nv + (j % nv);

    let mut removed_faces = vec![false; faces.len()];
    let mut bridge_faces: Vec<[usize; 3]> = Vec::new();
    for t in 0..genus - 1 {
        // +x extreme of torus t faces the -x extreme of torus t+1.
        let va = grid(t, 0, 0);
        let vb = grid(t + 1, nu / 2, 0);
        let ring_a = remove_star(&faces, &mut removed_faces, va)?;
        let ring_b = remove_star(&faces, &mut removed_faces, vb)?;
        if ring_a.len() != ring_b.len() {
            return Err(QcurvError::Config(format!(
                "bridge rings have different sizes ({} vs {})",
                ring_a.len(),
                ring_b.len()
            )));
        }
        let n = ring_a.len();
        // Align the (counter-running) rings to minimize strut length.
        let mut best = (f64::INFINITY, 0usize);
        for offset in 0..n {
            let cost: f64 = (0..n)
                .map(|k| {
                    let pa = positions[ring_a[k]];
                    let pb = positions[ring_b[(offset + n - k) % n]];
                    let d = [pa[0] - pb[0], pa[1] - pb[1], pa[2] - pb[2]];
                    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
                })
                .sum();
            if cost < best.0 {
                best = (cost, offset);
            }
        }
        let offset = best.1;
        let q = |k: usize| ring_b[(offset + n - (k % n)) % n];
        for k in 0..n {
            let a0 = ring_a[k];
            let a1 = ring_a[(k + 1) % n];
            bridge_faces.push([a0, a1, q(k)]);
            bridge_faces.push([a1, q(k + 1), q(k)]);
        }
    }

    let mut kept: Vec<[usize; 3]> = faces
        .iter()
        .zip(&removed_faces)
        .filter(|(_, &r)| !r)
        .map(|(f, _)| *f)
        .collect();
    kept.extend(bridge_faces);

    // Compact away the removed star centers.
    let mut used = vec![false; positions.len()];
    for f in &kept {
        for &v in f {
            used[v] = true;
        }
    }
    let mut remap = vec![usize::MAX; positions.len()];
    let mut new_positions = Vec::with_capacity(positions.len());
    for (old, pos) in positions.iter().enumerate() {
        if used[old] {
            remap[old] = new_positions.len();
            new_positions.push(*pos);
        }
    }
    for f in &mut kept {
        for v in f.iter_mut() {
            *v = remap[*v];
        }
    }
    let mesh = MeshData {
        positions: new_positions,
        faces: kept,
    };

    let chi = validate_closed_manifold(&mesh)?;
    let expected = 2 - 2 * genus as i64;
    if chi != expected {
        return Err(QcurvError::Config(format!(
            "chained surface has Euler characteristic {chi}, expected {expected}"
        )));
    }
    Ok(mesh)
}

/// Mark all faces around `center` as removed and return its link cycle,
/// ordered so that the freed directed edges run `ring[k] -> ring[k+1]`.
fn remove_star(
    faces: &[[usize; 3]],
    removed: &mut [bool],
    center: usize,
) -> Result<Vec<usize>> {
    let mut link_next: HashMap<usize, usize> = HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        if removed[fi] || !f.contains(&center) {
            continue;
        }
        let pivot = f.iter().position(|&v| v == center).expect("contains center");
        let a = f[(pivot + 1) % 3];
        let b = f[(pivot + 2) % 3];
        if link_next.insert(a, b).is_some() {
            return Err(QcurvError::Config(format!(
                "vertex {center} has a non-manifold star"
            )));
        }
        removed[fi] = true;
    }
    if link_next.is_empty() {
        return Err(QcurvError::Config(format!(
            "vertex {center} has no incident faces left to remove"
        )));
    }
    let start = *link_next.keys().min().expect("nonempty link");
    let mut ring = vec![start];
    let mut cur = start;
    loop {
        cur = *link_next
            .get(&cur)
            .ok_or_else(|| QcurvError::Config(format!("vertex {center} has an open star")))?;
        if cur == start {
            break;
        }
        ring.push(cur);
        if ring.len() > link_next.len() {
            return Err(QcurvError::Config(format!(
                "vertex {center} star is not a single cycle"
            )));
        }
    }
    if ring.len() != link_next.len() {
        return Err(QcurvError::Config(format!(
            "vertex {center} star splits into several cycles"
        )));
    }
    Ok(ring)
}
