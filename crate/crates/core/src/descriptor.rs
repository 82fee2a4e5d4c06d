//! Per-vertex time-signature descriptors.
//!
//! A descriptor is the solution of the reduced heat or wave equation,
//! started from the area-normalized Dirac peak at one vertex and sampled
//! at that same vertex on the uniform time grid: samples[k] = u(x_i, t_k).
//! In the modal basis the initial state is w_r(0) = V_r^T e_i (row i of
//! V_r) and each sample is a dot product with that same row, so the whole
//! computation never leaves the r-dimensional reduced space.

use std::io::Write;
use std::path::Path;

use nalgebra::Matrix2;
use rayon::prelude::*;

use crate::binio::{PayloadReader, PayloadWriter};
use crate::error::{Error, Result};
use crate::integrators::{
    exact_heat_factors, heat_step_factors, wave_step_matrices, ModelSpec, SchemeSpec, TimeGrid,
};
use crate::spectrum::SpectralBasis;

const SET_MAGIC: &[u8; 4] = b"SDSC";
const SET_VERSION: u32 = 1;

/// Stable on-disk model codes.
pub fn model_code(model: &ModelSpec) -> u32 {
    if model.is_first_order() {
        0
    } else if model.psi == 0.0 {
        1
    } else {
        2
    }
}

/// Stable on-disk scheme codes; non-preset theta parameters map to 4.
pub fn scheme_code(scheme: &SchemeSpec) -> u32 {
    match *scheme {
        SchemeSpec::Theta { a } if a == 0.0 => 0,
        SchemeSpec::Theta { a } if a == 0.5 => 1,
        SchemeSpec::Theta { a } if a == 1.0 => 2,
        SchemeSpec::TwizellL0 { .. } => 3,
        SchemeSpec::Theta { .. } => 4,
    }
}

pub fn model_code_label(code: u32) -> &'static str {
    match code {
        0 => "heat",
        1 => "wave",
        2 => "dampedwave",
        _ => "unknown",
    }
}

pub fn scheme_code_label(code: u32) -> &'static str {
    match code {
        0 => "explicit-euler",
        1 => "crank-nicolson",
        2 => "implicit-euler",
        3 => "twizell",
        4 => "theta",
        _ => "unknown",
    }
}

/// Time series of one vertex: samples[k] = u(x_i, t_k), k = 0..=M.
#[derive(Debug, Clone)]
pub struct Descriptor {
    pub samples: Vec<f64>,
    pub tau: f64,
    pub source_index: usize,
}

/// Full computation parameters, carried by sets computed in-process so any
/// artifact can name the run that produced it.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub r: usize,
    pub c: f64,
    pub t_m: f64,
    pub model: ModelSpec,
    pub scheme: SchemeSpec,
}

/// One descriptor per vertex, all sharing a single time grid.
#[derive(Debug, Clone)]
pub struct DescriptorSet {
    pub shape: String,
    pub n: usize,
    /// Step count M; every vertex carries M + 1 samples.
    pub m: usize,
    pub tau: f64,
    pub model_code: u32,
    pub scheme_code: u32,
    /// Row-major N x (M + 1).
    pub samples: Vec<f64>,
    /// Present when computed in this process; absent after a bare file load.
    pub provenance: Option<Provenance>,
}

/// Reduced initial state for the Dirac peak at a vertex.
#[derive(Debug, Clone, PartialEq)]
pub enum ReducedState {
    /// Heat: modal coefficients w_r(0).
    FirstOrder(Vec<f64>),
    /// Wave: modal pairs (w_k, dw_k/dt) with zero initial velocity.
    SecondOrder(Vec<(f64, f64)>),
}

/// w_r(0) = V_r^T e_i, the D-projection of the Dirac peak delta_i / |Omega_i|.
pub fn initial_reduced_state(
    basis: &SpectralBasis,
    i: usize,
    model: &ModelSpec,
) -> Result<ReducedState> {
    if i >= basis.n {
        return Err(Error::Config(format!(
            "vertex index {i} out of range for N = {}",
            basis.n
        )));
    }
    let row = basis.row(i);
    if model.is_first_order() {
        Ok(ReducedState::FirstOrder(row.to_vec()))
    } else {
        Ok(ReducedState::SecondOrder(
            row.iter().map(|&w| (w, 0.0)).collect(),
        ))
    }
}

/// Precomputed one-step action in the reduced space.
enum StepOperator {
    /// Heat: elementwise modal factors R(tau * lambda_k).
    Scalar(Vec<f64>),
    /// Wave: per-mode 2x2 matrices R(tau * A_k).
    Mode(Vec<Matrix2<f64>>),
}

fn build_step_operator(
    basis: &SpectralBasis,
    model: &ModelSpec,
    grid: &TimeGrid,
    scheme: &SchemeSpec,
) -> Result<StepOperator> {
    model.validate()?;
    if model.is_first_order() {
        Ok(StepOperator::Scalar(heat_step_factors(basis, grid, scheme)))
    } else {
        Ok(StepOperator::Mode(wave_step_matrices(
            basis, model, grid, scheme,
        )?))
    }
}

/// Integrate one vertex; writes M + 1 samples.
fn run_vertex(basis: &SpectralBasis, op: &StepOperator, m: usize, i: usize, out: &mut [f64]) {
    let row = basis.row(i);
    debug_assert_eq!(out.len(), m + 1);
    match op {
        StepOperator::Scalar(factors) => {
            let mut w: Vec<f64> = row.to_vec();
            out[0] = row.iter().zip(&w).map(|(a, b)| a * b).sum();
            for k in 1..=m {
                for (wj, f) in w.iter_mut().zip(factors) {
                    *wj *= f;
                }
                out[k] = row.iter().zip(&w).map(|(a, b)| a * b).sum();
            }
        }
        StepOperator::Mode(mats) => {
            let mut state: Vec<(f64, f64)> = row.iter().map(|&w| (w, 0.0)).collect();
            out[0] = row.iter().zip(&state).map(|(a, s)| a * s.0).sum();
            for k in 1..=m {
                for (s, mat) in state.iter_mut().zip(mats) {
                    let v = mat * nalgebra::Vector2::new(s.0, s.1);
                    *s = (v.x, v.y);
                }
                out[k] = row.iter().zip(&state).map(|(a, s)| a * s.0).sum();
            }
        }
    }
}

/// Descriptor of a single vertex.
pub fn compute_descriptor(
    basis: &SpectralBasis,
    model: &ModelSpec,
    grid: &TimeGrid,
    scheme: &SchemeSpec,
    i: usize,
) -> Result<Descriptor> {
    initial_reduced_state(basis, i, model)?; // index validation
    let op = build_step_operator(basis, model, grid, scheme)?;
    let mut samples = vec![0.0; grid.m + 1];
    run_vertex(basis, &op, grid.m, i, &mut samples);
    check_finite(&samples, i, scheme)?;
    Ok(Descriptor {
        samples,
        tau: grid.tau,
        source_index: i,
    })
}

fn check_finite(samples: &[f64], i: usize, scheme: &SchemeSpec) -> Result<()> {
    if let Some(k) = samples.iter().position(|s| !s.is_finite()) {
        return Err(Error::Numerical(format!(
            "descriptor of vertex {i} overflowed at step {k} under the {} scheme \
             (unstable step size)",
            scheme.label()
        )));
    }
    Ok(())
}

/// Descriptors for every vertex, parallel over vertices. The output is
/// bit-identical for any worker count: each row is an independent serial
/// computation into a disjoint slice.
pub fn compute_all(
    basis: &SpectralBasis,
    shape: &str,
    model: &ModelSpec,
    grid: &TimeGrid,
    scheme: &SchemeSpec,
) -> Result<DescriptorSet> {
    let op = build_step_operator(basis, model, grid, scheme)?;
    let width = grid.m + 1;
    let mut samples = vec![0.0f64; basis.n * width];
    samples
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(i, row)| run_vertex(basis, &op, grid.m, i, row));
    if let Some(bad) = samples.iter().position(|s| !s.is_finite()) {
        return Err(Error::Numerical(format!(
            "descriptor of vertex {} overflowed at step {} under the {} scheme \
             (unstable step size)",
            bad / width,
            bad % width,
            scheme.label()
        )));
    }
    Ok(DescriptorSet {
        shape: shape.to_string(),
        n: basis.n,
        m: grid.m,
        tau: grid.tau,
        model_code: model_code(model),
        scheme_code: scheme_code(scheme),
        samples,
        provenance: Some(Provenance {
            r: basis.r,
            c: grid.c,
            t_m: grid.t_m,
            model: *model,
            scheme: *scheme,
        }),
    })
}

/// Oracle hook: heat descriptors under the exact per-mode factors
/// e^{tau * lambda_k} instead of a rational scheme. Test-only route; the
/// CLI never calls it.
pub fn compute_all_exact_heat(
    basis: &SpectralBasis,
    shape: &str,
    grid: &TimeGrid,
) -> DescriptorSet {
    let op = StepOperator::Scalar(exact_heat_factors(basis, grid));
    let width = grid.m + 1;
    let mut samples = vec![0.0f64; basis.n * width];
    samples
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(i, row)| run_vertex(basis, &op, grid.m, i, row));
    DescriptorSet {
        shape: shape.to_string(),
        n: basis.n,
        m: grid.m,
        tau: grid.tau,
        model_code: 0,
        scheme_code: u32::MAX, // not a scheme; oracle route
        samples,
        provenance: None,
    }
}

impl DescriptorSet {
    /// Samples of vertex i (length M + 1).
    #[inline]
    pub fn samples_of(&self, i: usize) -> &[f64] {
        let w = self.m + 1;
        &self.samples[i * w..(i + 1) * w]
    }

    /// Owned descriptor of vertex i.
    pub fn descriptor(&self, i: usize) -> Descriptor {
        Descriptor {
            samples: self.samples_of(i).to_vec(),
            tau: self.tau,
            source_index: i,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = PayloadWriter::new();
        w.put_u64(self.n as u64);
        w.put_u64((self.m + 1) as u64);
        w.put_f64(self.tau);
        w.put_u32(self.model_code);
        w.put_u32(self.scheme_code);
        w.put_f64_slice(&self.samples);
        w.write(SET_MAGIC, SET_VERSION, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut rd = PayloadReader::open(path, SET_MAGIC, SET_VERSION)?;
        let n = rd.get_u64()? as usize;
        let width = rd.get_u64()? as usize;
        if width == 0 {
            return Err(Error::Format(format!(
                "{}: zero samples per vertex",
                path.display()
            )));
        }
        let tau = rd.get_f64()?;
        let model_code = rd.get_u32()?;
        let scheme_code = rd.get_u32()?;
        let samples = rd.get_f64_vec(n.checked_mul(width).ok_or_else(|| {
            Error::Format(format!("{}: sample dimensions overflow", path.display()))
        })?)?;
        rd.finish()?;
        let shape = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(DescriptorSet {
            shape,
            n,
            m: width - 1,
            tau,
            model_code,
            scheme_code,
            samples,
            provenance: None,
        })
    }

    /// Plot-ready CSV: comment header with the run parameters, then one
    /// vertex per row. Floats use the shortest representation that parses
    /// back to the same bits.
    pub fn write_csv(&self, mut out: impl Write, extra_header: &[(&str, String)]) -> std::io::Result<()> {
        writeln!(out, "# shape={}", self.shape)?;
        writeln!(out, "# n={}", self.n)?;
        writeln!(out, "# m={}", self.m)?;
        writeln!(out, "# tau={}", self.tau)?;
        writeln!(out, "# model={}", model_code_label(self.model_code))?;
        writeln!(out, "# scheme={}", scheme_code_label(self.scheme_code))?;
        if let Some(p) = &self.provenance {
            writeln!(out, "# r={}", p.r)?;
            writeln!(out, "# c={}", p.c)?;
            writeln!(out, "# t_m={}", p.t_m)?;
        }
        for (k, v) in extra_header {
            writeln!(out, "# {k}={v}")?;
        }
        write!(out, "vertex")?;
        for k in 0..=self.m {
            write!(out, ",t{k}")?;
        }
        writeln!(out)?;
        for i in 0..self.n {
            write!(out, "{i}")?;
            for s in self.samples_of(i) {
                write!(out, ",{s}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}
