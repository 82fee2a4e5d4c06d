//! Princeton-protocol scoring of matchings.
//!
//! The error of one correspondence is the geodesic distance on the target
//! mesh between the matched vertex and the ground-truth vertex, normalized
//! by sqrt(A_M). A match is a true positive when that error is at most the
//! threshold (0.25 by default), and the hit rate is 100 * TP / N — every
//! query produces a match, so TP + FP = N. Geodesics are single-source
//! Dijkstra runs over the edge graph with Euclidean edge lengths.

use std::collections::{BTreeMap, BinaryHeap};
use std::io::Write;

use rayon::prelude::*;

use crate::correspondence::Matching;
use crate::error::{Error, Result};
use crate::mesh::{CellAreas, TriangleMesh};

/// Resolution of the exported cumulative-error curve.
const CURVE_STEP: f64 = 0.005;

/// Hit rate, per-vertex normalized geodesic errors, and the cumulative
/// error curve sampled on [0, 1].
#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub hit_rate_percent: f64,
    /// d_M(matched, truth) / sqrt(A_M) per query vertex.
    pub errors: Vec<f64>,
    /// (threshold, fraction of errors <= threshold) pairs, step 0.005.
    pub curve: Vec<(f64, f64)>,
    pub threshold: f64,
}

/// Undirected edge graph of a mesh with Euclidean lengths.
struct EdgeGraph {
    /// CSR-style adjacency: neighbors[offsets[i]..offsets[i+1]] = (j, length).
    offsets: Vec<usize>,
    neighbors: Vec<(usize, f64)>,
}

impl EdgeGraph {
    fn build(mesh: &TriangleMesh) -> Self {
        let n = mesh.num_vertices();
        let mut edges: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &[a, b, c] in &mesh.triangles {
            for (i, j) in [(a, b), (b, c), (c, a)] {
                let key = (i.min(j), i.max(j));
                edges
                    .entry(key)
                    .or_insert_with(|| (mesh.vertices[i] - mesh.vertices[j]).norm());
            }
        }
        let mut counts = vec![0usize; n + 1];
        for &(i, j) in edges.keys() {
            counts[i + 1] += 1;
            counts[j + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut cursor = counts;
        let mut neighbors = vec![(0usize, 0.0f64); edges.len() * 2];
        for (&(i, j), &len) in &edges {
            neighbors[cursor[i]] = (j, len);
            cursor[i] += 1;
            neighbors[cursor[j]] = (i, len);
            cursor[j] += 1;
        }
        EdgeGraph { offsets, neighbors }
    }

    fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Single-source Dijkstra; unreachable vertices keep +infinity.
    fn distances_from(&self, source: usize) -> Vec<f64> {
        #[derive(PartialEq)]
        struct Item {
            dist: f64,
            node: usize,
        }
        impl Eq for Item {}
        impl Ord for Item {
            fn cmp(&self, other: &Self) -> std::cmp::Ordering {
                // min-heap on distance, then node index for determinism
                other
                    .dist
                    .total_cmp(&self.dist)
                    .then_with(|| other.node.cmp(&self.node))
            }
        }
        impl PartialOrd for Item {
            fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
                Some(self.cmp(other))
            }
        }

        let mut dist = vec![f64::INFINITY; self.n()];
        let mut done = vec![false; self.n()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Item { dist: 0.0, node: source });
        while let Some(Item { dist: d, node }) = heap.pop() {
            if done[node] {
                continue;
            }
            done[node] = true;
            for &(next, len) in &self.neighbors[self.offsets[node]..self.offsets[node + 1]] {
                let cand = d + len;
                if cand < dist[next] {
                    dist[next] = cand;
                    heap.push(Item { dist: cand, node: next });
                }
            }
        }
        dist
    }
}

/// Single-source geodesic distances over the edge graph. Disconnected
/// vertices are reported as +infinity rather than an error.
pub fn geodesic_distances(mesh: &TriangleMesh, source: usize) -> Result<Vec<f64>> {
    if source >= mesh.num_vertices() {
        return Err(Error::Config(format!(
            "source vertex {source} out of range for N = {}",
            mesh.num_vertices()
        )));
    }
    Ok(EdgeGraph::build(mesh).distances_from(source))
}

/// Score a matching against ground truth on the target mesh.
///
/// truth[i] is the correct target vertex for query vertex i. Distance
/// fields are computed once per distinct truth vertex, in parallel.
pub fn evaluate(
    matching: &Matching,
    truth: &[usize],
    target_mesh: &TriangleMesh,
    target_areas: &CellAreas,
    threshold: f64,
) -> Result<EvaluationReport> {
    let n = matching.matches.len();
    if truth.len() != n {
        return Err(Error::Mismatch(format!(
            "matching has {n} rows but ground truth has {}",
            truth.len()
        )));
    }
    if !(threshold > 0.0) {
        return Err(Error::Config(format!(
            "threshold must be positive, got {threshold}"
        )));
    }
    let nt = target_mesh.num_vertices();
    for (i, &j) in matching.matches.iter().enumerate() {
        if j >= nt {
            return Err(Error::Mismatch(format!(
                "match of query {i} points at vertex {j}, outside the target mesh (N = {nt})"
            )));
        }
    }
    for (i, &t) in truth.iter().enumerate() {
        if t >= nt {
            return Err(Error::Mismatch(format!(
                "ground truth of query {i} is vertex {t}, outside the target mesh (N = {nt})"
            )));
        }
    }

    let graph = EdgeGraph::build(target_mesh);
    let norm = target_areas.total_area.sqrt();

    // group queries by truth vertex so each distance field is computed once
    let mut by_truth: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &t) in truth.iter().enumerate() {
        by_truth.entry(t).or_default().push(i);
    }
    let groups: Vec<(usize, Vec<usize>)> = by_truth.into_iter().collect();
    let partials: Vec<Vec<(usize, f64)>> = groups
        .par_iter()
        .map(|(src, queries)| {
            let field = graph.distances_from(*src);
            queries
                .iter()
                .map(|&i| (i, field[matching.matches[i]] / norm))
                .collect()
        })
        .collect();

    let mut errors = vec![0.0f64; n];
    for part in partials {
        for (i, e) in part {
            errors[i] = e;
        }
    }
    if let Some((i, _)) = errors.iter().enumerate().find(|(_, e)| !e.is_finite()) {
        return Err(Error::InvalidMesh(format!(
            "matched vertex {} is unreachable from ground-truth vertex {} \
             (disconnected target mesh)",
            matching.matches[i], truth[i]
        )));
    }

    let tp = errors.iter().filter(|&&e| e <= threshold).count();
    let hit_rate_percent = 100.0 * tp as f64 / n as f64;
    let steps = (1.0 / CURVE_STEP).round() as usize;
    let curve: Vec<(f64, f64)> = (0..=steps)
        .map(|k| {
            let t = k as f64 * CURVE_STEP;
            let frac = errors.iter().filter(|&&e| e <= t).count() as f64 / n as f64;
            (t, frac)
        })
        .collect();
    Ok(EvaluationReport {
        hit_rate_percent,
        errors,
        curve,
        threshold,
    })
}

impl EvaluationReport {
    pub fn mean_error(&self) -> f64 {
        self.errors.iter().sum::<f64>() / self.errors.len() as f64
    }

    /// One-line summary of the protocol numbers.
    pub fn summary_line(&self) -> String {
        format!(
            "hit_rate_percent={} mean_error={} threshold={} n={}",
            self.hit_rate_percent,
            self.mean_error(),
            self.threshold,
            self.errors.len()
        )
    }

    /// Per-vertex errors: `query_index,normalized_error` after comments
    /// and the summary line.
    pub fn write_errors_csv(&self, mut out: impl Write, header: &[(&str, String)]) -> std::io::Result<()> {
        for (k, v) in header {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(out, "# summary: {}", self.summary_line())?;
        writeln!(out, "query_index,normalized_error")?;
        for (i, e) in self.errors.iter().enumerate() {
            writeln!(out, "{i},{e}")?;
        }
        Ok(())
    }

    /// Cumulative curve: `threshold,fraction` pairs at 0.005 resolution.
    pub fn write_curve_csv(&self, mut out: impl Write, header: &[(&str, String)]) -> std::io::Result<()> {
        for (k, v) in header {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(out, "threshold,fraction")?;
        for (t, f) in &self.curve {
            writeln!(out, "{t},{f}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing;

    fn identity_truth(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    #[test]
    fn strip_distances_count_unit_edges() {
        let len = 7;
        let mesh = testing::strip(len);
        let d = geodesic_distances(&mesh, 0).unwrap();
        for k in 0..len {
            assert_eq!(d[k], k as f64, "bottom vertex {k}");
        }
        assert_eq!(d[0], 0.0);
        // top row sits one unit edge above the bottom path
        for k in 0..len {
            approx::assert_relative_eq!(d[len + k], k as f64 + 1.0, epsilon = 1e-12);
        }
        assert!(geodesic_distances(&mesh, 2 * len).is_err());
    }

    #[test]
    fn icosahedron_distances_dominate_chords() {
        let mesh = testing::icosahedron();
        let d = geodesic_distances(&mesh, 0).unwrap();
        for j in 0..mesh.num_vertices() {
            let chord = (mesh.vertices[j] - mesh.vertices[0]).norm();
            assert!(
                d[j] >= chord - 1e-12,
                "vertex {j}: graph {} < chord {chord}",
                d[j]
            );
        }
    }

    #[test]
    fn disconnected_vertices_report_infinity() {
        // two far-apart strips in one mesh
        let a = testing::strip(3);
        let mut vertices = a.vertices.clone();
        let mut triangles = a.triangles.clone();
        let offset = vertices.len();
        for v in &a.vertices {
            vertices.push(v + nalgebra::Vector3::new(100.0, 0.0, 0.0));
        }
        for t in &a.triangles {
            triangles.push([t[0] + offset, t[1] + offset, t[2] + offset]);
        }
        let mesh =
            crate::mesh::TriangleMesh::from_parts(vertices, triangles, "two-strips".to_string())
                .unwrap();
        let d = geodesic_distances(&mesh, 0).unwrap();
        assert!(d[offset].is_infinite());

        // evaluating across the gap is an error, not a silent infinity
        let areas = mesh.compute_areas().unwrap();
        let matching = Matching {
            matches: vec![offset],
            distances: vec![0.0],
        };
        let err = evaluate(&matching, &[0], &mesh, &areas, 0.25).unwrap_err();
        assert!(matches!(err, Error::InvalidMesh(_)), "{err:?}");
    }

    #[test]
    fn perfect_matching_scores_100_percent() {
        let mesh = testing::icosphere(1);
        let areas = mesh.compute_areas().unwrap();
        let n = mesh.num_vertices();
        let matching = Matching {
            matches: identity_truth(n),
            distances: vec![0.0; n],
        };
        let report = evaluate(&matching, &identity_truth(n), &mesh, &areas, 0.25).unwrap();
        assert_eq!(report.hit_rate_percent, 100.0);
        assert!(report.errors.iter().all(|&e| e == 0.0));
        assert_eq!(*report.curve.first().unwrap(), (0.0, 1.0));
        assert_eq!(report.curve.len(), 201);
    }

    #[test]
    fn three_of_four_true_positives_is_75_percent() {
        // strip of length 8: sqrt(A_M) = sqrt(7); one match lands 4 edges
        // away (4 / sqrt(7) ~ 1.51 > 0.25), three are exact
        let mesh = testing::strip(8);
        let areas = mesh.compute_areas().unwrap();
        let matching = Matching {
            matches: vec![0, 1, 2, 7],
            distances: vec![0.0; 4],
        };
        let truth = vec![0, 1, 2, 3];
        let report = evaluate(&matching, &truth, &mesh, &areas, 0.25).unwrap();
        assert_eq!(report.hit_rate_percent, 75.0);
        assert_eq!(report.errors[..3], [0.0, 0.0, 0.0]);
        approx::assert_relative_eq!(report.errors[3], 4.0 / 7.0f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn hit_rate_monotone_in_threshold_and_curve_sane() {
        let mesh = testing::strip(10);
        let areas = mesh.compute_areas().unwrap();
        let n = mesh.num_vertices();
        // shift every match by one vertex along the strip
        let matches: Vec<usize> = (0..n).map(|i| if i + 1 < n { i + 1 } else { i }).collect();
        let matching = Matching {
            matches,
            distances: vec![0.0; n],
        };
        let truth = identity_truth(n);
        let mut prev = 0.0;
        for threshold in [0.05, 0.1, 0.2, 0.4, 0.8] {
            let report = evaluate(&matching, &truth, &mesh, &areas, threshold).unwrap();
            assert!(report.hit_rate_percent >= prev);
            prev = report.hit_rate_percent;
            for w in report.curve.windows(2) {
                assert!(w[1].1 >= w[0].1, "curve decreased at {}", w[1].0);
            }
            assert!(report.curve.last().unwrap().1 <= 1.0);
            let tp = report.errors.iter().filter(|&&e| e <= threshold).count();
            assert_eq!(
                report.hit_rate_percent,
                100.0 * tp as f64 / n as f64
            );
        }
    }

    #[test]
    fn normalized_errors_invariant_under_uniform_scaling() {
        let mesh = testing::bumpy_sphere(1, 0.2);
        let n = mesh.num_vertices();
        let mut scaled = mesh.clone();
        for v in scaled.vertices.iter_mut() {
            *v *= 4.5;
        }
        let matches: Vec<usize> = (0..n).map(|i| (i + 3) % n).collect();
        let matching = Matching {
            matches,
            distances: vec![0.0; n],
        };
        let truth = identity_truth(n);
        let a = evaluate(&matching, &truth, &mesh, &mesh.compute_areas().unwrap(), 0.25).unwrap();
        let b = evaluate(&matching, &truth, &scaled, &scaled.compute_areas().unwrap(), 0.25).unwrap();
        assert_eq!(a.hit_rate_percent, b.hit_rate_percent);
        for (x, y) in a.errors.iter().zip(&b.errors) {
            approx::assert_relative_eq!(x, y, max_relative = 1e-12);
        }
    }

    #[test]
    fn rejects_inconsistent_inputs() {
        let mesh = testing::strip(3);
        let areas = mesh.compute_areas().unwrap();
        let matching = Matching {
            matches: vec![0, 1],
            distances: vec![0.0, 0.0],
        };
        assert!(evaluate(&matching, &[0], &mesh, &areas, 0.25).is_err());
        assert!(evaluate(&matching, &[0, 99], &mesh, &areas, 0.25).is_err());
        assert!(evaluate(&matching, &[0, 1], &mesh, &areas, 0.0).is_err());
        let bad = Matching {
            matches: vec![0, 77],
            distances: vec![0.0, 0.0],
        };
        assert!(evaluate(&bad, &[0, 1], &mesh, &areas, 0.25).is_err());
    }

    #[test]
    fn csv_outputs_have_expected_shape() {
        let mesh = testing::strip(4);
        let areas = mesh.compute_areas().unwrap();
        let n = mesh.num_vertices();
        let matching = Matching {
            matches: identity_truth(n),
            distances: vec![0.0; n],
        };
        let report = evaluate(&matching, &identity_truth(n), &mesh, &areas, 0.25).unwrap();
        let mut errors_csv = Vec::new();
        report
            .write_errors_csv(&mut errors_csv, &[("pair", "a:b".into())])
            .unwrap();
        let text = String::from_utf8(errors_csv).unwrap();
        assert!(text.contains("# pair=a:b"));
        assert!(text.contains("# summary: hit_rate_percent=100"));
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1 + n);

        let mut curve_csv = Vec::new();
        report.write_curve_csv(&mut curve_csv, &[]).unwrap();
        let text = String::from_utf8(curve_csv).unwrap();
        assert_eq!(text.lines().count(), 1 + 201);
        assert!(text.lines().nth(1).unwrap().starts_with("0,1"));
    }
}
