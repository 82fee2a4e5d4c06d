//! Cotangent-weight discretization of the Laplace-Beltrami operator.
//!
//! The assembled pair is a sparse symmetric stiffness matrix `W` and a
//! positive diagonal mass matrix `D` (barycentric cell areas); the operator
//! itself is `L = D^-1 W`. Off-diagonal weights are the standard
//! `(cot a + cot b) / 2` per edge, the diagonal closes each row to zero,
//! so `L` is negative semidefinite and constants are in its kernel.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::mesh::{CellAreas, TriangleMesh};
use crate::sparse::CsrMatrix;

/// Stiffness matrix W and diagonal mass matrix D of the mesh Laplacian.
#[derive(Debug, Clone)]
pub struct OperatorPair {
    pub stiffness: CsrMatrix,
    /// D_ii = |Omega_i|, the barycentric cell area of vertex i.
    pub mass: Vec<f64>,
}

fn cotangent(apex: &Vector3<f64>, p: &Vector3<f64>, q: &Vector3<f64>) -> f64 {
    let e1 = p - apex;
    let e2 = q - apex;
    e1.dot(&e2) / e1.cross(&e2).norm()
}

impl OperatorPair {
    /// Assemble the cotangent stiffness matrix and mass diagonal.
    ///
    /// Interior edges sum the two opposite cotangents, boundary edges keep
    /// their single one. Negative weights from obtuse triangles are kept
    /// as-is; `negative_weight_count` reports how many there are.
    pub fn assemble(mesh: &TriangleMesh, areas: &CellAreas) -> Result<Self> {
        let n = mesh.num_vertices();
        // accumulate per-edge weights with a deterministic key order
        let mut edge_weights: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (t, &[i, j, k]) in mesh.triangles.iter().enumerate() {
            let (pi, pj, pk) = (&mesh.vertices[i], &mesh.vertices[j], &mesh.vertices[k]);
            let corners = [(k, pk, i, pi, j, pj), (i, pi, j, pj, k, pk), (j, pj, k, pk, i, pi)];
            for &(_apex_idx, apex, a, pa, b, pb) in &corners {
                let cot = cotangent(apex, pa, pb);
                if !cot.is_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite cotangent in triangle {t} (collinear vertices)"
                    )));
                }
                let key = (a.min(b), a.max(b));
                *edge_weights.entry(key).or_insert(0.0) += 0.5 * cot;
            }
        }

        let mut triplets = Vec::with_capacity(edge_weights.len() * 2 + n);
        let mut row_sum = vec![0.0f64; n];
        for (&(i, j), &w) in &edge_weights {
            triplets.push((i, j, w));
            triplets.push((j, i, w));
            row_sum[i] += w;
            row_sum[j] += w;
        }
        for (i, &s) in row_sum.iter().enumerate() {
            triplets.push((i, i, -s));
        }
        let stiffness = CsrMatrix::from_triplets(n, &triplets);
        Ok(OperatorPair {
            stiffness,
            mass: areas.vertex_areas.clone(),
        })
    }

    /// Wrap an externally built pencil (W, D). Checks sizes and D > 0 only;
    /// Laplacian row-sum structure is not required here, so test operators
    /// like diagonal pencils are representable.
    pub fn from_parts(stiffness: CsrMatrix, mass: Vec<f64>) -> Result<Self> {
        if stiffness.n() != mass.len() {
            return Err(Error::Mismatch(format!(
                "stiffness is {}x{} but mass diagonal has length {}",
                stiffness.n(),
                stiffness.n(),
                mass.len()
            )));
        }
        if let Some((i, &d)) = mass.iter().enumerate().find(|(_, &d)| !(d > 0.0)) {
            return Err(Error::InvalidMesh(format!(
                "mass diagonal entry {i} is not positive ({d})"
            )));
        }
        Ok(OperatorPair { stiffness, mass })
    }

    pub fn n(&self) -> usize {
        self.mass.len()
    }

    /// Number of negative off-diagonal weights (one per obtuse edge pair);
    /// diagnostic only, weights are never clamped.
    pub fn negative_weight_count(&self) -> usize {
        self.stiffness
            .iter_entries()
            .filter(|&(i, j, v)| i != j && v < 0.0)
            .count()
    }

    /// Export W in Matrix Market coordinate format (general, 1-based).
    pub fn write_matrix_market_stiffness(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{} {} {}", self.n(), self.n(), self.stiffness.nnz())?;
        for (i, j, v) in self.stiffness.iter_entries() {
            writeln!(out, "{} {} {:.16e}", i + 1, j + 1, v)?;
        }
        Ok(())
    }

    /// Export D in Matrix Market coordinate format (diagonal entries only).
    pub fn write_matrix_market_mass(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{} {} {}", self.n(), self.n(), self.n())?;
        for (i, &d) in self.mass.iter().enumerate() {
            writeln!(out, "{} {} {:.16e}", i + 1, i + 1, d)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn assemble(mesh: &TriangleMesh) -> OperatorPair {
        let areas = mesh.compute_areas().unwrap();
        OperatorPair::assemble(mesh, &areas).unwrap()
    }

    #[test]
    fn unit_square_weights_by_hand() {
        // two right triangles along the 0-2 diagonal: the diagonal weight is
        // (cot 90 + cot 90)/2 = 0, every boundary edge is cot 45 / 2 = 0.5
        let op = assemble(&testing::unit_square());
        assert!(op.stiffness.get(0, 2).abs() < 1e-14);
        for &(i, j) in &[(0usize, 1usize), (1, 2), (2, 3), (3, 0)] {
            approx::assert_relative_eq!(op.stiffness.get(i, j), 0.5, max_relative = 1e-12);
        }
    }

    #[test]
    fn rows_sum_to_zero() {
        for mesh in [testing::unit_square(), testing::icosphere(1), testing::planar_grid(5, 4)] {
            let op = assemble(&mesh);
            let ones = vec![1.0; op.n()];
            let w1 = op.stiffness.apply(&ones);
            let scale = op.stiffness.max_abs();
            for (i, &v) in w1.iter().enumerate() {
                let (_, vals) = op.stiffness.row(i);
                let row_norm: f64 = vals.iter().map(|x| x.abs()).sum();
                assert!(
                    v.abs() <= 1e-10 * row_norm.max(scale),
                    "row {i} sums to {v}"
                );
            }
        }
    }

    #[test]
    fn symmetry() {
        let op = assemble(&testing::bumpy_sphere(2, 0.2));
        assert!(op.stiffness.symmetry_error() <= 1e-12 * op.stiffness.max_abs());
    }

    #[test]
    fn regular_tetrahedron_uniform_weights() {
        let op = assemble(&testing::regular_tetrahedron());
        // all 6 edges are shared by two equilateral triangles: cot 60 = 1/sqrt(3)
        let expect = 1.0 / 3f64.sqrt();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    approx::assert_relative_eq!(
                        op.stiffness.get(i, j),
                        expect,
                        max_relative = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn scaling_leaves_w_fixed_and_scales_d() {
        let mesh = testing::bumpy_sphere(1, 0.15);
        let op = assemble(&mesh);
        let s = 3.7;
        let mut scaled = mesh.clone();
        for v in scaled.vertices.iter_mut() {
            *v *= s;
        }
        let op_scaled = assemble(&scaled);
        for ((i, j, v), (si, sj, sv)) in op.stiffness.iter_entries().zip(op_scaled.stiffness.iter_entries()) {
            assert_eq!((i, j), (si, sj));
            approx::assert_relative_eq!(v, sv, max_relative = 1e-10, epsilon = 1e-12);
        }
        for (d, ds) in op.mass.iter().zip(op_scaled.mass.iter()) {
            approx::assert_relative_eq!(ds, &(d * s * s), max_relative = 1e-12);
        }
    }

    #[test]
    fn planar_interior_vertex_is_discrete_harmonic() {
        // L applied to the coordinate functions of a flat mesh vanishes at
        // interior vertices
        let mesh = testing::planar_grid(5, 5);
        let op = assemble(&mesh);
        let xs: Vec<f64> = mesh.vertices.iter().map(|v| v.x).collect();
        let ys: Vec<f64> = mesh.vertices.iter().map(|v| v.y).collect();
        let wx = op.stiffness.apply(&xs);
        let wy = op.stiffness.apply(&ys);
        // vertex (2,2) is interior
        let i = 2 * 5 + 2;
        let (_, vals) = op.stiffness.row(i);
        let local_scale: f64 = vals.iter().map(|v| v.abs()).sum();
        assert!(wx[i].abs() <= 1e-8 * local_scale);
        assert!(wy[i].abs() <= 1e-8 * local_scale);
    }

    #[test]
    fn quadratic_form_is_negative_semidefinite() {
        let op = assemble(&testing::bumpy_sphere(2, 0.25));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let u: Vec<f64> = (0..op.n()).map(|_| rng.random::<f64>() - 0.5).collect();
            let wu = op.stiffness.apply(&u);
            let form: f64 = u.iter().zip(&wu).map(|(a, b)| a * b).sum();
            assert!(form <= 1e-10 * op.stiffness.max_abs());
        }
    }

    #[test]
    fn collinear_triangle_reported_with_index() {
        // bypass mesh validation by building the mesh struct directly
        let mesh = TriangleMesh {
            vertices: vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(2.0, 0.0, 0.0),
            ],
            triangles: vec![[0, 1, 2]],
            name: "bad".into(),
        };
        let areas = CellAreas {
            triangle_areas: vec![1.0],
            vertex_areas: vec![1.0, 1.0, 1.0],
            total_area: 1.0,
        };
        let err = OperatorPair::assemble(&mesh, &areas).unwrap_err();
        match err {
            Error::Numerical(msg) => assert!(msg.contains("triangle 0")),
            other => panic!("expected numerical error, got {other:?}"),
        }
    }

    #[test]
    fn cyclic_triangle_rotation_changes_nothing() {
        let mesh = testing::bumpy_sphere(1, 0.1);
        let mut rotated = mesh.clone();
        for t in rotated.triangles.iter_mut() {
            *t = [t[1], t[2], t[0]];
        }
        let a = assemble(&mesh);
        let b = assemble(&rotated);
        for ((i, j, v), (bi, bj, bv)) in a.stiffness.iter_entries().zip(b.stiffness.iter_entries()) {
            assert_eq!((i, j), (bi, bj));
            approx::assert_relative_eq!(v, bv, max_relative = 1e-12, epsilon = 1e-14);
        }
    }

    #[test]
    fn matrix_market_export_shape() {
        let op = assemble(&testing::unit_square());
        let mut w_out = Vec::new();
        let mut d_out = Vec::new();
        op.write_matrix_market_stiffness(&mut w_out).unwrap();
        op.write_matrix_market_mass(&mut d_out).unwrap();
        let w_text = String::from_utf8(w_out).unwrap();
        assert!(w_text.starts_with("%%MatrixMarket matrix coordinate real general"));
        let header: Vec<&str> = w_text.lines().nth(1).unwrap().split_whitespace().collect();
        assert_eq!(header[0], "4");
        assert_eq!(header[2], op.stiffness.nnz().to_string().as_str());
        assert_eq!(String::from_utf8(d_out).unwrap().lines().count(), 2 + 4);
    }
}
