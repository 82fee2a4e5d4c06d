//! Synthetic meshes and reference computations shared by tests across the
//! crate and by the integration suites.

use nalgebra::{DMatrix, Vector3};
use std::collections::HashMap;

use crate::laplacian::OperatorPair;
use crate::mesh::TriangleMesh;

/// Unit square (0,0),(1,0),(1,1),(0,1) split along the 0-2 diagonal.
pub fn unit_square() -> TriangleMesh {
    TriangleMesh::from_parts(
        vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(1.0, 1.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ],
        vec![[0, 1, 2], [0, 2, 3]],
        "unit_square",
    )
    .unwrap()
}

/// Regular tetrahedron centered at the origin.
pub fn regular_tetrahedron() -> TriangleMesh {
    let s = 1.0 / 3f64.sqrt();
    TriangleMesh::from_parts(
        vec![
            Vector3::new(s, s, s),
            Vector3::new(s, -s, -s),
            Vector3::new(-s, s, -s),
            Vector3::new(-s, -s, s),
        ],
        vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        "tetrahedron",
    )
    .unwrap()
}

/// Unit icosahedron (12 vertices, 20 faces).
pub fn icosahedron() -> TriangleMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let norm = (1.0 + phi * phi).sqrt();
    let a = 1.0 / norm;
    let b = phi / norm;
    let vertices = vec![
        Vector3::new(-a, b, 0.0),
        Vector3::new(a, b, 0.0),
        Vector3::new(-a, -b, 0.0),
        Vector3::new(a, -b, 0.0),
        Vector3::new(0.0, -a, b),
        Vector3::new(0.0, a, b),
        Vector3::new(0.0, -a, -b),
        Vector3::new(0.0, a, -b),
        Vector3::new(b, 0.0, -a),
        Vector3::new(b, 0.0, a),
        Vector3::new(-b, 0.0, -a),
        Vector3::new(-b, 0.0, a),
    ];
    let triangles = vec![
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
    TriangleMesh::from_parts(vertices, triangles, "icosahedron").unwrap()
}

/// Icosahedron subdivided `subdiv` times with vertices projected onto the
/// unit sphere. subdiv 0 -> 12 vertices, 1 -> 42, 2 -> 162, 3 -> 642.
pub fn icosphere(subdiv: usize) -> TriangleMesh {
    let mut mesh = icosahedron();
    for _ in 0..subdiv {
        let mut vertices = mesh.vertices.clone();
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vector3<f64>>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                let m = ((vertices[a] + vertices[b]) / 2.0).normalize();
                vertices.push(m);
                vertices.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(mesh.triangles.len() * 4);
        for &[i, j, k] in &mesh.triangles {
            let ij = mid(i, j, &mut vertices);
            let jk = mid(j, k, &mut vertices);
            let ki = mid(k, i, &mut vertices);
            triangles.push([i, ij, ki]);
            triangles.push([j, jk, ij]);
            triangles.push([k, ki, jk]);
            triangles.push([ij, jk, ki]);
        }
        mesh = TriangleMesh::from_parts(vertices, triangles, mesh.name).unwrap();
    }
    mesh.name = format!("icosphere{subdiv}");
    mesh
}

/// Icosphere with a smooth deterministic radial deformation. Breaks the
/// sphere's symmetry so descriptors are distinct per vertex; `amplitude`
/// around 0.1..0.3 stays a valid closed mesh.
pub fn bumpy_sphere(subdiv: usize, amplitude: f64) -> TriangleMesh {
    deformed_sphere(subdiv, amplitude, 0.0)
}

/// `phase` shifts the bump pattern, giving a second "pose" of the same
/// connectivity for correspondence tests.
pub fn deformed_sphere(subdiv: usize, amplitude: f64, phase: f64) -> TriangleMesh {
    let mut mesh = icosphere(subdiv);
    for v in mesh.vertices.iter_mut() {
        let dir = v.normalize();
        let bump = (3.0 * dir.x + phase).sin() * (2.0 * dir.y - phase).cos()
            + 0.5 * (5.0 * dir.z + 2.0 * phase).sin();
        *v = dir * (1.0 + amplitude * bump);
    }
    mesh.name = format!("bumpy{subdiv}_{phase}");
    mesh
}

/// Flat rectangular grid in the z=0 plane, nx x ny vertices, unit spacing,
/// each cell split into two triangles. Open mesh with interior vertices.
pub fn planar_grid(nx: usize, ny: usize) -> TriangleMesh {
    assert!(nx >= 2 && ny >= 2);
    let mut vertices = Vec::with_capacity(nx * ny);
    for y in 0..ny {
        for x in 0..nx {
            vertices.push(Vector3::new(x as f64, y as f64, 0.0));
        }
    }
    let idx = |x: usize, y: usize| y * nx + x;
    let mut triangles = Vec::new();
    for y in 0..ny - 1 {
        for x in 0..nx - 1 {
            triangles.push([idx(x, y), idx(x + 1, y), idx(x + 1, y + 1)]);
            triangles.push([idx(x, y), idx(x + 1, y + 1), idx(x, y + 1)]);
        }
    }
    TriangleMesh::from_parts(vertices, triangles, format!("grid{nx}x{ny}")).unwrap()
}

/// Triangle strip along the x axis: bottom row (k,0,0), top row (k,1,0).
/// The bottom-row edge graph contains the unit-spacing path 0-1-2-...
pub fn strip(len: usize) -> TriangleMesh {
    assert!(len >= 2);
    let mut vertices = Vec::with_capacity(2 * len);
    for k in 0..len {
        vertices.push(Vector3::new(k as f64, 0.0, 0.0));
    }
    for k in 0..len {
        vertices.push(Vector3::new(k as f64, 1.0, 0.0));
    }
    let mut triangles = Vec::new();
    for k in 0..len - 1 {
        triangles.push([k, k + 1, len + k]);
        triangles.push([k + 1, len + k + 1, len + k]);
    }
    TriangleMesh::from_parts(vertices, triangles, format!("strip{len}")).unwrap()
}

/// Dense generalized-eigensolver oracle for the pencil (W, D): solves the
/// symmetrized problem D^{-1/2} W D^{-1/2} y = lambda y with nalgebra's
/// dense symmetric eigensolver and returns all pairs sorted by |lambda|
/// ascending, eigenvectors D-orthonormal in columns.
pub fn dense_reference_eig(op: &OperatorPair) -> (Vec<f64>, DMatrix<f64>) {
    let n = op.n();
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        let (cols, vals) = op.stiffness.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            s[(i, j)] = v / (op.mass[i] * op.mass[j]).sqrt();
        }
    }
    let eig = nalgebra::SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .abs()
            .partial_cmp(&eig.eigenvalues[b].abs())
            .unwrap()
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        for i in 0..n {
            vectors[(i, col)] = eig.eigenvectors[(i, k)] / op.mass[i].sqrt();
        }
    }
    (eigenvalues, vectors)
}
