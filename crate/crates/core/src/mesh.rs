//! Discrete shapes: triangle meshes and their cell areas.
//!
//! A shape is a vertex list plus a triangle index list, with indices kept
//! zero-based internally. Loaders exist for the TOSCA `.vert`/`.tri` ASCII
//! pair (one-based indices on disk) and for ASCII OFF files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// A validated triangle mesh: vertex coordinates plus zero-based triangles.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[usize; 3]>,
    pub name: String,
}

/// Per-triangle and barycentric per-vertex areas of a mesh.
#[derive(Debug, Clone)]
pub struct CellAreas {
    pub triangle_areas: Vec<f64>,
    pub vertex_areas: Vec<f64>,
    pub total_area: f64,
}

fn triangle_area(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

impl TriangleMesh {
    /// Build a mesh from raw parts, running the validation pass.
    pub fn from_parts(
        vertices: Vec<Vector3<f64>>,
        triangles: Vec<[usize; 3]>,
        name: impl Into<String>,
    ) -> Result<Self> {
        let mesh = TriangleMesh {
            vertices,
            triangles,
            name: name.into(),
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Check the structural invariants: sizes, index ranges, no repeated
    /// corner, no zero-area triangle. Degenerate triangles are an error
    /// rather than being dropped, so vertex indexing stays aligned with
    /// ground-truth files.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if n < 3 {
            return Err(Error::InvalidMesh(format!(
                "need at least 3 vertices, got {n}"
            )));
        }
        if self.triangles.is_empty() {
            return Err(Error::InvalidMesh("mesh has no triangles".into()));
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                if v >= n {
                    return Err(Error::InvalidMesh(format!(
                        "triangle {t} references vertex {v}, but mesh has {n} vertices"
                    )));
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} repeats a vertex index: {tri:?}"
                )));
            }
            let area = triangle_area(
                &self.vertices[tri[0]],
                &self.vertices[tri[1]],
                &self.vertices[tri[2]],
            );
            if !(area > 0.0) || !area.is_finite() {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} is degenerate (area {area})"
                )));
            }
        }
        Ok(())
    }

    /// Per-triangle areas plus barycentric vertex areas (one third of each
    /// incident triangle).
    pub fn compute_areas(&self) -> Result<CellAreas> {
        let mut triangle_areas = Vec::with_capacity(self.triangles.len());
        let mut vertex_areas = vec![0.0; self.vertices.len()];
        let mut total = 0.0;
        for (t, tri) in self.triangles.iter().enumerate() {
            let area = triangle_area(
                &self.vertices[tri[0]],
                &self.vertices[tri[1]],
                &self.vertices[tri[2]],
            );
            if !(area > 0.0) || !area.is_finite() {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} is degenerate (area {area})"
                )));
            }
            triangle_areas.push(area);
            total += area;
            let third = area / 3.0;
            for &v in tri {
                vertex_areas[v] += third;
            }
        }
        for (i, &a) in vertex_areas.iter().enumerate() {
            if !(a > 0.0) {
                return Err(Error::InvalidMesh(format!(
                    "vertex {i} has no incident triangle (zero cell area)"
                )));
            }
        }
        Ok(CellAreas {
            triangle_areas,
            vertex_areas,
            total_area: total,
        })
    }

    /// Write the mesh as ASCII OFF with 17 significant digits, enough for a
    /// bit-exact load round trip.
    pub fn save_off(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
            writeln!(w, "OFF")?;
            writeln!(w, "{} {} 0", self.vertices.len(), self.triangles.len())?;
            for v in &self.vertices {
                writeln!(w, "{:.16e} {:.16e} {:.16e}", v.x, v.y, v.z)?;
            }
            for t in &self.triangles {
                writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
            }
            Ok(())
        };
        write(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "mesh".to_string())
}

fn parse_f64(path: &Path, line: usize, tok: &str) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| Error::parse(path, line, format!("expected a number, got {tok:?}")))
}

fn parse_usize(path: &Path, line: usize, tok: &str) -> Result<usize> {
    tok.parse::<usize>()
        .map_err(|_| Error::parse(path, line, format!("expected an integer, got {tok:?}")))
}

/// Load a TOSCA-style mesh from a `.vert`/`.tri` file pair.
///
/// The `.tri` file uses one-based indices on disk; they are converted to the
/// internal zero-based convention here.
pub fn load_tosca(vert_path: impl AsRef<Path>, tri_path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let vert_path = vert_path.as_ref();
    let tri_path = tri_path.as_ref();

    let mut vertices = Vec::new();
    for (lineno, line) in read_lines(vert_path)?.iter().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(Error::parse(
                vert_path,
                lineno + 1,
                format!("expected 3 coordinates, got {}", toks.len()),
            ));
        }
        vertices.push(Vector3::new(
            parse_f64(vert_path, lineno + 1, toks[0])?,
            parse_f64(vert_path, lineno + 1, toks[1])?,
            parse_f64(vert_path, lineno + 1, toks[2])?,
        ));
    }
    if vertices.is_empty() {
        return Err(Error::parse(vert_path, 1, "empty vertex file"));
    }

    let n = vertices.len();
    let mut triangles = Vec::new();
    for (lineno, line) in read_lines(tri_path)?.iter().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(Error::parse(
                tri_path,
                lineno + 1,
                format!("expected 3 indices, got {}", toks.len()),
            ));
        }
        let mut tri = [0usize; 3];
        for (k, tok) in toks.iter().enumerate() {
            let one_based = parse_usize(tri_path, lineno + 1, tok)?;
            if one_based == 0 || one_based > n {
                return Err(Error::parse(
                    tri_path,
                    lineno + 1,
                    format!("vertex index {one_based} outside one-based range 1..={n}"),
                ));
            }
            tri[k] = one_based - 1;
        }
        triangles.push(tri);
    }
    if triangles.is_empty() {
        return Err(Error::parse(tri_path, 1, "empty triangle file"));
    }

    log::debug!(
        "loaded TOSCA pair {:?}: {} vertices, {} triangles (indices converted to zero-based)",
        vert_path,
        vertices.len(),
        triangles.len()
    );
    TriangleMesh::from_parts(vertices, triangles, stem_of(vert_path))
}

/// Load an ASCII OFF mesh. Only triangular faces are accepted.
pub fn load_off(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let lines = read_lines(path)?;
    // iterator over (1-based line number, content) skipping blanks/comments
    let mut rows = lines
        .iter()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = rows
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty OFF file"))?;
    let mut header_toks: Vec<&str> = header.split_whitespace().collect();
    if header_toks.first() != Some(&"OFF") {
        return Err(Error::parse(path, hline, "missing OFF header"));
    }
    header_toks.remove(0);
    let counts: Vec<&str> = if header_toks.is_empty() {
        let (cline, counts_line) = rows
            .next()
            .ok_or_else(|| Error::parse(path, hline, "missing count line after OFF header"))?;
        let toks: Vec<&str> = counts_line.split_whitespace().collect();
        if toks.len() < 2 {
            return Err(Error::parse(path, cline, "count line needs N and F"));
        }
        toks.into_iter().map(|t| t).collect()
    } else {
        header_toks
    };
    let n = parse_usize(path, hline, counts[0])?;
    let f = parse_usize(path, hline, counts[1])?;

    let mut vertices = Vec::with_capacity(n);
    for _ in 0..n {
        let (lineno, line) = rows.next().ok_or_else(|| {
            Error::parse(path, lines.len(), format!("expected {n} vertex lines"))
        })?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(Error::parse(path, lineno, "vertex line needs 3 coordinates"));
        }
        vertices.push(Vector3::new(
            parse_f64(path, lineno, toks[0])?,
            parse_f64(path, lineno, toks[1])?,
            parse_f64(path, lineno, toks[2])?,
        ));
    }

    let mut triangles = Vec::with_capacity(f);
    for _ in 0..f {
        let (lineno, line) = rows
            .next()
            .ok_or_else(|| Error::parse(path, lines.len(), format!("expected {f} face lines")))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        let count = parse_usize(path, lineno, toks[0])?;
        if count != 3 {
            return Err(Error::parse(
                path,
                lineno,
                format!("only triangular faces are supported, got a {count}-gon"),
            ));
        }
        if toks.len() < 4 {
            return Err(Error::parse(path, lineno, "face line needs 3 indices"));
        }
        let mut tri = [0usize; 3];
        for k in 0..3 {
            let idx = parse_usize(path, lineno, toks[k + 1])?;
            if idx >= n {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("vertex index {idx} outside zero-based range 0..{n}"),
                ));
            }
            tri[k] = idx;
        }
        triangles.push(tri);
    }

    TriangleMesh::from_parts(vertices, triangles, stem_of(path))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}
