//! Descriptor distances and nearest-neighbor matching.
//!
//! The distance between two descriptors is the trapezoidal discretization
//! of the L1 integral of |f - g| over the time grid, scaled by the query
//! shape's tau. Matching takes each query vertex to the target vertex with
//! the smallest distance, ties broken toward the lowest target index.
//!
//! Two implementations exist: a brute-force reference scan and a
//! parallel early-abandoning scan. Both accumulate per-row sums in the
//! same order and multiply by tau once at the end, so their results are
//! bit-identical; a test asserts exactly that.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::descriptor::{Descriptor, DescriptorSet};
use crate::error::{Error, Result};

/// Per-query-vertex best correspondences on the target shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub matches: Vec<usize>,
    pub distances: Vec<f64>,
}

/// Unscaled trapezoid sum: 1/2|d_0| + |d_1| + ... + 1/2|d_M|.
#[inline]
fn trapezoid_sum(f: &[f64], g: &[f64]) -> f64 {
    let m = f.len() - 1;
    let mut sum = 0.5 * ((f[0] - g[0]).abs() + (f[m] - g[m]).abs());
    for k in 1..m {
        sum += (f[k] - g[k]).abs();
    }
    sum
}

/// L1 descriptor distance (Eq.-level trapezoid rule), using the query
/// descriptor's time step.
pub fn descriptor_distance(f: &Descriptor, g: &Descriptor) -> Result<f64> {
    if f.samples.len() != g.samples.len() {
        return Err(Error::Mismatch(format!(
            "descriptor lengths differ: {} vs {}",
            f.samples.len(),
            g.samples.len()
        )));
    }
    if f.samples.len() < 2 {
        return Err(Error::Mismatch(
            "descriptors need at least two samples for the trapezoid rule".into(),
        ));
    }
    Ok(f.tau * trapezoid_sum(&f.samples, &g.samples))
}

fn check_compatible(query: &DescriptorSet, target: &DescriptorSet) -> Result<()> {
    if query.m != target.m {
        return Err(Error::Mismatch(format!(
            "iteration counts differ: query M = {} vs target M = {}",
            query.m, target.m
        )));
    }
    if query.m == 0 {
        return Err(Error::Mismatch("descriptor sets need M >= 1".into()));
    }
    if query.n == 0 || target.n == 0 {
        return Err(Error::Mismatch("empty descriptor set".into()));
    }
    if query.model_code != target.model_code || query.scheme_code != target.scheme_code {
        log::warn!(
            "matching descriptor sets computed with different model/scheme codes \
             ({}/{} vs {}/{})",
            query.model_code,
            query.scheme_code,
            target.model_code,
            target.scheme_code
        );
    }
    Ok(())
}

/// Reference matcher: full O(N * N~ * M) scan, no shortcuts.
pub fn match_sets_brute(query: &DescriptorSet, target: &DescriptorSet) -> Result<Matching> {
    check_compatible(query, target)?;
    let mut matches = Vec::with_capacity(query.n);
    let mut distances = Vec::with_capacity(query.n);
    for i in 0..query.n {
        let f = query.samples_of(i);
        let mut best = f64::INFINITY;
        let mut best_j = 0usize;
        for j in 0..target.n {
            let sum = trapezoid_sum(f, target.samples_of(j));
            if sum < best {
                best = sum;
                best_j = j;
            }
        }
        matches.push(best_j);
        distances.push(query.tau * best);
    }
    Ok(Matching { matches, distances })
}

/// Production matcher: parallel over query vertices with early abandoning.
/// A candidate row is dropped as soon as its partial sum reaches the best
/// sum so far; partial sums only grow, so the abandoned row can never win,
/// and equal-sum rows lose to the earlier index exactly as in the brute scan.
pub fn match_sets(query: &DescriptorSet, target: &DescriptorSet) -> Result<Matching> {
    check_compatible(query, target)?;
    let m = query.m;
    let rows: Vec<(usize, f64)> = (0..query.n)
        .into_par_iter()
        .map(|i| {
            let f = query.samples_of(i);
            let mut best = f64::INFINITY;
            let mut best_j = 0usize;
            for j in 0..target.n {
                let g = target.samples_of(j);
                let mut sum = 0.5 * ((f[0] - g[0]).abs() + (f[m] - g[m]).abs());
                if sum >= best {
                    continue;
                }
                let mut alive = true;
                for k in 1..m {
                    sum += (f[k] - g[k]).abs();
                    if sum >= best {
                        alive = false;
                        break;
                    }
                }
                if alive {
                    best = sum;
                    best_j = j;
                }
            }
            (best_j, query.tau * best)
        })
        .collect();
    let (matches, distances) = rows.into_iter().unzip();
    Ok(Matching { matches, distances })
}

impl Matching {
    /// CSV rows `query_index,target_index,distance` after `# key=value`
    /// provenance comments.
    pub fn write_csv(&self, mut out: impl Write, header: &[(&str, String)]) -> std::io::Result<()> {
        for (k, v) in header {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(out, "query_index,target_index,distance")?;
        for (i, (&j, &d)) in self.matches.iter().zip(&self.distances).enumerate() {
            writeln!(out, "{i},{j},{d}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, header: &[(&str, String)]) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, header)
            .expect("writing to memory cannot fail");
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut matches = Vec::new();
        let mut distances = Vec::new();
        let mut expect = 0usize;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("query_index") {
                continue;
            }
            let mut cols = line.split(',');
            let parse_err = |what: &str| {
                Error::parse(path, lineno + 1, format!("bad {what} in matching row"))
            };
            let qi: usize = cols
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| parse_err("query index"))?;
            let tj: usize = cols
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| parse_err("target index"))?;
            let d: f64 = cols
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| parse_err("distance"))?;
            if qi != expect {
                return Err(Error::parse(
                    path,
                    lineno + 1,
                    format!("query indices must be dense and ordered; expected {expect}, got {qi}"),
                ));
            }
            expect += 1;
            matches.push(tj);
            distances.push(d);
        }
        if matches.is_empty() {
            return Err(Error::parse(path, 1, "no matching rows found".to_string()));
        }
        Ok(Matching { matches, distances })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::compute_all;
    use crate::integrators::{ModelSpec, SchemeSpec, TimeGrid};
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn descriptor(samples: &[f64], tau: f64) -> Descriptor {
        Descriptor {
            samples: samples.to_vec(),
            tau,
            source_index: 0,
        }
    }

    fn set_from_rows(rows: &[Vec<f64>], tau: f64) -> DescriptorSet {
        let n = rows.len();
        let m = rows[0].len() - 1;
        DescriptorSet {
            shape: "toy".into(),
            n,
            m,
            tau,
            model_code: 0,
            scheme_code: 2,
            samples: rows.concat(),
            provenance: None,
        }
    }

    #[test]
    fn hand_quadrature_values() {
        let d = descriptor_distance(&descriptor(&[1.0, 1.0], 1.0), &descriptor(&[0.0, 0.0], 7.7));
        assert_eq!(d.unwrap(), 1.0);
        let d = descriptor_distance(
            &descriptor(&[0.0, 2.0, 0.0], 0.5),
            &descriptor(&[0.0, 0.0, 0.0], 0.5),
        );
        assert_eq!(d.unwrap(), 1.0);
        let f = descriptor(&[0.3, -1.2, 4.0], 0.25);
        assert_eq!(descriptor_distance(&f, &f).unwrap(), 0.0);
        assert!(descriptor_distance(&f, &descriptor(&[1.0, 2.0], 0.25)).is_err());
        assert!(descriptor_distance(&descriptor(&[1.0], 1.0), &descriptor(&[2.0], 1.0)).is_err());
    }

    #[test]
    fn two_vertex_toy_identity() {
        let q = set_from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], 1.0);
        let t = set_from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], 1.0);
        let m = match_sets(&q, &t).unwrap();
        assert_eq!(m.matches, vec![0, 1]);
        assert_eq!(m.distances, vec![0.0, 0.0]);
    }

    #[test]
    fn self_match_is_identity_on_real_descriptors() {
        let mesh = crate::testing::bumpy_sphere(1, 0.3);
        let areas = mesh.compute_areas().unwrap();
        let op = crate::laplacian::OperatorPair::assemble(&mesh, &areas).unwrap();
        let basis = crate::spectrum::solve_reduced(&op, 10).unwrap();
        let grid = TimeGrid::from_horizon(
            &ModelSpec::heat(),
            1.0,
            basis.lambda_max_abs,
            basis.lambda_r_abs(),
            25,
            1.0,
        )
        .unwrap();
        let set = compute_all(&basis, "b", &ModelSpec::heat(), &grid, &SchemeSpec::implicit_euler()).unwrap();
        let m = match_sets(&set, &set).unwrap();
        for i in 0..set.n {
            assert_eq!(m.matches[i], i, "vertex {i} matched {}", m.matches[i]);
            assert_eq!(m.distances[i], 0.0);
        }
    }

    #[test]
    fn ties_break_to_lowest_index() {
        // duplicate target rows: both at distance 0 from the query
        let q = set_from_rows(&[vec![2.0, 2.0]], 1.0);
        let t = set_from_rows(&[vec![9.0, 9.0], vec![2.0, 2.0], vec![2.0, 2.0]], 1.0);
        for matcher in [match_sets, match_sets_brute] {
            let m = matcher(&q, &t).unwrap();
            assert_eq!(m.matches, vec![1]);
        }
    }

    #[test]
    fn accelerated_equals_brute_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for _ in 0..5 {
            let m = 1 + rng.random_range(0..12);
            let nq = 1 + rng.random_range(0..40);
            let nt = 1 + rng.random_range(0..40);
            let mut rows_q = Vec::new();
            let mut rows_t = Vec::new();
            for _ in 0..nq {
                rows_q.push((0..=m).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect::<Vec<_>>());
            }
            for _ in 0..nt {
                rows_t.push((0..=m).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect::<Vec<_>>());
            }
            // inject exact duplicates to exercise tie handling
            if nt > 2 {
                let dup = rows_t[0].clone();
                rows_t[nt - 1] = dup;
            }
            let q = set_from_rows(&rows_q, 0.37);
            let t = set_from_rows(&rows_t, 0.41);
            let fast = match_sets(&q, &t).unwrap();
            let brute = match_sets_brute(&q, &t).unwrap();
            assert_eq!(fast.matches, brute.matches);
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&fast.distances), bits(&brute.distances));
        }
    }

    #[test]
    fn matching_invariant_under_common_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let rows_q: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..8).map(|_| rng.random::<f64>()).collect())
            .collect();
        let rows_t: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..8).map(|_| rng.random::<f64>()).collect())
            .collect();
        let q = set_from_rows(&rows_q, 0.5);
        let t = set_from_rows(&rows_t, 0.5);
        let base = match_sets(&q, &t).unwrap();

        let s = 37.25; // power of two times an odd factor; scaling is exact enough
        let scale = |rows: &[Vec<f64>]| {
            rows.iter()
                .map(|r| r.iter().map(|x| x * s).collect::<Vec<_>>())
                .collect::<Vec<_>>()
        };
        let qs = set_from_rows(&scale(&rows_q), 0.5);
        let ts = set_from_rows(&scale(&rows_t), 0.5);
        let scaled = match_sets(&qs, &ts).unwrap();
        assert_eq!(base.matches, scaled.matches);
    }

    #[test]
    fn rejects_m_mismatch() {
        let q = set_from_rows(&[vec![1.0, 2.0, 3.0]], 1.0);
        let t = set_from_rows(&[vec![1.0, 2.0]], 1.0);
        assert!(matches!(match_sets(&q, &t), Err(Error::Mismatch(_))));
    }

    #[test]
    fn csv_round_trip() {
        let m = Matching {
            matches: vec![2, 0, 1],
            distances: vec![0.125, 3.5e-17, 7.25],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        m.save_csv(&path, &[("query", "a".into()), ("target", "b".into())])
            .unwrap();
        let loaded = Matching::load_csv(&path).unwrap();
        assert_eq!(loaded.matches, m.matches);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&loaded.distances), bits(&m.distances));

        std::fs::write(&path, "# c\nquery_index,target_index,distance\n0,1,0.5\n2,0,1.0\n").unwrap();
        let err = Matching::load_csv(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err:?}");
    }

    proptest! {
        #[test]
        fn weighted_l1_is_a_metric(
            a in proptest::collection::vec(-50.0f64..50.0, 4),
            b in proptest::collection::vec(-50.0f64..50.0, 4),
            c in proptest::collection::vec(-50.0f64..50.0, 4),
            tau in 0.01f64..10.0,
        ) {
            let (fa, fb, fc) = (descriptor(&a, tau), descriptor(&b, tau), descriptor(&c, tau));
            let dab = descriptor_distance(&fa, &fb).unwrap();
            let dba = descriptor_distance(&fb, &fa).unwrap();
            let dac = descriptor_distance(&fa, &fc).unwrap();
            let dcb = descriptor_distance(&fc, &fb).unwrap();
            prop_assert!(dab >= 0.0);
            prop_assert_eq!(dab.to_bits(), dba.to_bits());
            prop_assert_eq!(descriptor_distance(&fa, &fa).unwrap(), 0.0);
            prop_assert!(dab <= dac + dcb + 1e-9 * (1.0 + dab.abs()));
        }
    }
}
