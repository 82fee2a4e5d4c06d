//! Subcommand orchestration: spectrum, descriptor, match, evaluate, sweep.
//!
//! Every command is a plain function over a [`RunConfig`] so the binary
//! stays a thin argument parser and the whole pipeline is testable
//! in-process. Binary artifacts (.scrb, .sdsc) get a `.meta` sidecar that
//! records the SHA-256 of the source mesh plus the full RunConfig; CSV
//! outputs embed the same pairs as `# key=value` comment lines. Spectrum
//! caches are invalidated by content hash, never by timestamps.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::correspondence::{match_sets, Matching};
use crate::descriptor::{compute_all, DescriptorSet};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvaluationReport};
use crate::integrators::TimeGrid;
use crate::laplacian::OperatorPair;
use crate::mesh::{load_off, load_tosca, TriangleMesh};
use crate::spectrum::{solve_reduced, SpectralBasis};

/// Outcome of `spectrum`, including whether the cache was reused.
#[derive(Debug)]
pub struct SpectrumOutcome {
    pub cache: PathBuf,
    pub cache_hit: bool,
    pub n: usize,
    pub r: usize,
}

/// Load a mesh by extension: `.off`, or a TOSCA `.vert` with its sibling
/// `.tri` file.
pub fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("off") => load_off(path),
        Some("vert") => load_tosca(path, path.with_extension("tri")),
        Some("tri") => Err(Error::Config(format!(
            "pass the .vert file, not {}; the .tri sibling is found automatically",
            path.display()
        ))),
        _ => Err(Error::Config(format!(
            "unsupported mesh format for {} (expected .off or .vert)",
            path.display()
        ))),
    }
}

/// SHA-256 over the mesh file bytes (and the .tri sibling for TOSCA pairs).
pub fn mesh_content_hash(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    hasher.update(&bytes);
    if path.extension().and_then(|e| e.to_str()) == Some("vert") {
        let tri = path.with_extension("tri");
        let bytes = std::fs::read(&tri).map_err(|e| Error::io(&tri, e))?;
        hasher.update(&bytes);
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    Ok(hex)
}

fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_os_string();
    name.push(".meta");
    PathBuf::from(name)
}

fn write_sidecar(artifact: &Path, mesh_hash: &str, config: &RunConfig) -> Result<()> {
    let mut text = format!("mesh_sha256={mesh_hash}\n");
    text.push_str(&config.to_file_string());
    let path = sidecar_path(artifact);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Read `key=value` fields of a sidecar into (mesh_sha256, r).
fn read_sidecar(artifact: &Path) -> Result<Option<(String, usize)>> {
    let path = sidecar_path(artifact);
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(&path, e)),
    };
    let mut hash = None;
    let mut r = None;
    for line in text.lines() {
        if let Some(v) = line.strip_prefix("mesh_sha256=") {
            hash = Some(v.to_string());
        } else if let Some(v) = line.strip_prefix("r=") {
            r = v.parse::<usize>().ok();
        }
    }
    match (hash, r) {
        (Some(h), Some(r)) => Ok(Some((h, r))),
        _ => Err(Error::Format(format!(
            "sidecar {} is missing mesh_sha256 or r",
            path.display()
        ))),
    }
}

fn require<'a>(field: &'a Option<PathBuf>, flag: &str, cmd: &str) -> Result<&'a Path> {
    field
        .as_deref()
        .ok_or_else(|| Error::Config(format!("{cmd} requires --{flag}")))
}

/// Assemble operators and solve the r-mode spectrum, or reuse a current
/// cache (same mesh content hash and same r).
pub fn cmd_spectrum(config: &RunConfig) -> Result<SpectrumOutcome> {
    config.validate()?;
    let mesh_path = require(&config.mesh, "mesh", "spectrum")?;
    let cache_path = require(&config.cache, "cache", "spectrum")?;
    let hash = mesh_content_hash(mesh_path)?;
    if cache_path.exists() {
        if let Some((cached_hash, cached_r)) = read_sidecar(cache_path)? {
            if cached_hash == hash && cached_r == config.r {
                log::info!(
                    "cache hit: {} is current (mesh sha256 matches, r = {})",
                    cache_path.display(),
                    config.r
                );
                let basis = SpectralBasis::load_cache(cache_path)?;
                return Ok(SpectrumOutcome {
                    cache: cache_path.to_path_buf(),
                    cache_hit: true,
                    n: basis.n,
                    r: basis.r,
                });
            }
        }
        log::info!("cache stale: {} will be rebuilt", cache_path.display());
    }
    let mesh = load_mesh(mesh_path)?;
    let n = mesh.num_vertices();
    if config.r >= n {
        return Err(Error::Config(format!(
            "r = {} must be smaller than the vertex count N = {n}",
            config.r
        )));
    }
    let areas = mesh.compute_areas()?;
    let op = OperatorPair::assemble(&mesh, &areas)?;
    let basis = solve_reduced(&op, config.r)?;
    basis.save_cache(cache_path)?;
    write_sidecar(cache_path, &hash, config)?;
    log::info!(
        "solved {} eigenpairs on {} (N = {n}), wrote {}",
        basis.r,
        mesh.name,
        cache_path.display()
    );
    Ok(SpectrumOutcome {
        cache: cache_path.to_path_buf(),
        cache_hit: false,
        n,
        r: basis.r,
    })
}

/// Verify a cache belongs to a mesh, then load it.
fn load_verified_basis(config: &RunConfig, mesh_path: &Path, cache_path: &Path) -> Result<SpectralBasis> {
    let hash = mesh_content_hash(mesh_path)?;
    match read_sidecar(cache_path)? {
        Some((cached_hash, _)) if cached_hash == hash => {}
        Some(_) => {
            return Err(Error::Mismatch(format!(
                "cache {} was not built from mesh {} (content hash differs); rerun spectrum",
                cache_path.display(),
                mesh_path.display()
            )))
        }
        None => {
            return Err(Error::Mismatch(format!(
                "cache {} has no .meta sidecar to verify against {}; rerun spectrum",
                cache_path.display(),
                mesh_path.display()
            )))
        }
    }
    let basis = SpectralBasis::load_cache(cache_path)?;
    if basis.r < config.r {
        return Err(Error::Mismatch(format!(
            "cache {} holds r = {} modes but the run asks for r = {}; rerun spectrum",
            cache_path.display(),
            basis.r,
            config.r
        )));
    }
    Ok(basis)
}

fn shape_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn time_grid(config: &RunConfig, basis: &SpectralBasis) -> Result<TimeGrid> {
    TimeGrid::from_horizon(
        &config.model_spec()?,
        config.t_m,
        basis.lambda_max_abs,
        basis.lambda_r_abs(),
        config.m0,
        config.c,
    )
}

/// Compute the descriptor set of a mesh from its spectrum cache and write
/// the .sdsc file, plus optional per-vertex CSV and single-vertex curve CSV.
pub fn cmd_descriptor(
    config: &RunConfig,
    csv_out: Option<&Path>,
    curve: Option<(usize, &Path)>,
) -> Result<PathBuf> {
    config.validate()?;
    let mesh_path = require(&config.mesh, "mesh", "descriptor")?;
    let cache_path = require(&config.cache, "cache", "descriptor")?;
    let out_path = require(&config.output, "output", "descriptor")?;
    let basis = load_verified_basis(config, mesh_path, cache_path)?;
    let grid = time_grid(config, &basis)?;
    let model = config.model_spec()?;
    let scheme = config.scheme_spec()?;
    let set = compute_all(&basis, &shape_name(mesh_path), &model, &grid, &scheme)?;
    set.save(out_path)?;
    write_sidecar(out_path, &mesh_content_hash(mesh_path)?, config)?;
    log::info!(
        "descriptors: {} vertices x {} samples (tau = {}), wrote {}",
        set.n,
        set.m + 1,
        set.tau,
        out_path.display()
    );
    if let Some(csv_path) = csv_out {
        let mut buf = Vec::new();
        set.write_csv(&mut buf, &config.as_pairs())
            .map_err(|e| Error::io(csv_path, e))?;
        std::fs::write(csv_path, buf).map_err(|e| Error::io(csv_path, e))?;
    }
    if let Some((vertex, curve_path)) = curve {
        if vertex >= set.n {
            return Err(Error::Config(format!(
                "--emit-curve vertex {vertex} out of range for N = {}",
                set.n
            )));
        }
        let mut text = String::new();
        for (k, v) in config.as_pairs() {
            text.push_str(&format!("# {k}={v}\n"));
        }
        text.push_str(&format!("# vertex={vertex}\n"));
        text.push_str("t,value\n");
        for (k, value) in set.samples_of(vertex).iter().enumerate() {
            text.push_str(&format!("{},{}\n", grid.time(k), value));
        }
        std::fs::write(curve_path, text).map_err(|e| Error::io(curve_path, e))?;
    }
    Ok(out_path.to_path_buf())
}

/// Match two descriptor files and write the matching CSV.
pub fn cmd_match(config: &RunConfig, query: &Path, target: &Path) -> Result<Matching> {
    config.validate()?;
    let out_path = require(&config.output, "output", "match")?;
    let query_set = DescriptorSet::load(query)?;
    let target_set = DescriptorSet::load(target)?;
    let matching = match_sets(&query_set, &target_set)?;
    let mut header = config.as_pairs();
    header.push(("query", query.display().to_string()));
    header.push(("target", target.display().to_string()));
    matching.save_csv(out_path, &header)?;
    log::info!(
        "matched {} query vertices against {} targets, wrote {}",
        query_set.n,
        target_set.n,
        out_path.display()
    );
    Ok(matching)
}

/// Parse a ground-truth file: one `query_index target_index` pair per
/// line (whitespace separated, 0-based), `#` comments allowed. Every
/// query index in [0, n) must appear exactly once.
pub fn load_truth(path: &Path, n: usize) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut truth = vec![usize::MAX; n];
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (Some(q), Some(t), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 'query_index target_index', got '{raw}'"),
            ));
        };
        let q: usize = q
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("invalid query index '{q}'")))?;
        let t: usize = t
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("invalid target index '{t}'")))?;
        if q >= n {
            return Err(Error::parse(
                path,
                line_no,
                format!("query index {q} out of range for {n} queries"),
            ));
        }
        if truth[q] != usize::MAX {
            return Err(Error::parse(
                path,
                line_no,
                format!("query index {q} appears twice"),
            ));
        }
        truth[q] = t;
    }
    if let Some(missing) = truth.iter().position(|&t| t == usize::MAX) {
        return Err(Error::Format(format!(
            "ground-truth file {} has no row for query index {missing}",
            path.display()
        )));
    }
    Ok(truth)
}

/// Score a matching CSV against ground truth on the target mesh; writes
/// the per-vertex error CSV and optionally the cumulative curve CSV.
pub fn cmd_evaluate(
    config: &RunConfig,
    matching_path: &Path,
    curve_out: Option<&Path>,
) -> Result<EvaluationReport> {
    config.validate()?;
    let target_path = require(&config.target_mesh, "target-mesh", "evaluate")?;
    let errors_path = require(&config.output, "output", "evaluate")?;
    let matching = Matching::load_csv(matching_path)?;
    let n = matching.matches.len();
    let truth = match &config.truth {
        Some(path) => load_truth(path, n)?,
        None => (0..n).collect(),
    };
    let mesh = load_mesh(target_path)?;
    let areas = mesh.compute_areas()?;
    let report = evaluate(&matching, &truth, &mesh, &areas, config.threshold)?;
    let mut header = config.as_pairs();
    header.push(("matching", matching_path.display().to_string()));
    let mut buf = Vec::new();
    report
        .write_errors_csv(&mut buf, &header)
        .map_err(|e| Error::io(errors_path, e))?;
    std::fs::write(errors_path, buf).map_err(|e| Error::io(errors_path, e))?;
    if let Some(curve_path) = curve_out {
        let mut buf = Vec::new();
        report
            .write_curve_csv(&mut buf, &header)
            .map_err(|e| Error::io(curve_path, e))?;
        std::fs::write(curve_path, buf).map_err(|e| Error::io(curve_path, e))?;
    }
    log::info!("evaluation: {}", report.summary_line());
    Ok(report)
}

/// One sweep row: scheme x c with its protocol numbers.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub scheme: crate::config::SchemeKind,
    pub c: f64,
    pub m: usize,
    pub hit_rate_percent: f64,
    pub mean_error: f64,
}

/// Run the scheme x c experiment grid for the configured model: schemes
/// {implicit-euler, crank-nicolson, twizell} x c in {1, 5, 10}, one row
/// each, matching the query shape against the target shape.
pub fn cmd_sweep(config: &RunConfig) -> Result<Vec<SweepRow>> {
    use crate::config::SchemeKind;
    config.validate()?;
    let query_path = require(&config.mesh, "mesh", "sweep")?;
    let target_path = require(&config.target_mesh, "target-mesh", "sweep")?;
    let out_path = require(&config.output, "output", "sweep")?;

    let solve = |path: &Path| -> Result<(SpectralBasis, TriangleMesh)> {
        let mesh = load_mesh(path)?;
        if config.r >= mesh.num_vertices() {
            return Err(Error::Config(format!(
                "r = {} must be smaller than N = {} ({})",
                config.r,
                mesh.num_vertices(),
                path.display()
            )));
        }
        let areas = mesh.compute_areas()?;
        let op = OperatorPair::assemble(&mesh, &areas)?;
        let basis = solve_reduced(&op, config.r)?;
        Ok((basis, mesh))
    };
    let (query_basis, _query_mesh) = solve(query_path)?;
    let same_shape = query_path == target_path;
    let (target_basis, target_mesh) = if same_shape {
        let mesh = load_mesh(target_path)?;
        (query_basis.clone(), mesh)
    } else {
        solve(target_path)?
    };
    let target_areas = target_mesh.compute_areas()?;
    let truth = match &config.truth {
        Some(path) => load_truth(path, query_basis.n)?,
        None => (0..query_basis.n).collect(),
    };
    let model = config.model_spec()?;

    let mut rows = Vec::with_capacity(9);
    for scheme_kind in [
        SchemeKind::ImplicitEuler,
        SchemeKind::CrankNicolson,
        SchemeKind::Twizell,
    ] {
        for c in [1.0, 5.0, 10.0] {
            let mut combo = config.clone();
            combo.scheme = scheme_kind;
            combo.c = c;
            let scheme = combo.scheme_spec()?;
            let query_grid = time_grid(&combo, &query_basis)?;
            let query_set = compute_all(
                &query_basis,
                &shape_name(query_path),
                &model,
                &query_grid,
                &scheme,
            )?;
            let target_set = if same_shape {
                query_set.clone()
            } else {
                let target_grid = time_grid(&combo, &target_basis)?;
                compute_all(
                    &target_basis,
                    &shape_name(target_path),
                    &model,
                    &target_grid,
                    &scheme,
                )?
            };
            let matching = match_sets(&query_set, &target_set)?;
            let report = evaluate(&matching, &truth, &target_mesh, &target_areas, config.threshold)?;
            log::info!(
                "sweep {} c={c}: M={} hit rate {}%",
                scheme_kind,
                query_grid.m,
                report.hit_rate_percent
            );
            rows.push(SweepRow {
                scheme: scheme_kind,
                c,
                m: query_grid.m,
                hit_rate_percent: report.hit_rate_percent,
                mean_error: report.mean_error(),
            });
        }
    }

    let mut text = String::new();
    for (k, v) in config.as_pairs() {
        text.push_str(&format!("# {k}={v}\n"));
    }
    text.push_str("scheme,c,m,hit_rate_percent,mean_error\n");
    for row in &rows {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            row.scheme, row.c, row.m, row.hit_rate_percent, row.mean_error
        ));
    }
    std::fs::write(out_path, text).map_err(|e| Error::io(out_path, e))?;
    Ok(rows)
}
