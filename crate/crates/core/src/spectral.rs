//! Time-iteration matrix of the partitioned BE-EXT2 scheme and its spectral
//! radius.

use crate::assembly::{AssemblyError, CoupledBlocks, CoupledSystem, GeometrySpec, SatParams};
use crate::linalg::{lu_factor, spectral_radius as dense_spectral_radius, DenseMatrix, LinalgError, SparseMatrix};
use crate::physics::PdeParams;
use crate::timeloop::{check_conditions, ConditionInputs, Scheme, StabilityConstants};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("implicit {side} block is singular: {source}")]
    Singular { side: &'static str, source: LinalgError },
    #[error("eigenvalue computation failed: {0}")]
    Eigen(LinalgError),
    #[error("iteration matrix too large for dense analysis ({0} unknowns)")]
    TooLarge(usize),
    #[error("invalid sweep: {0}")]
    Sweep(String),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
}

/// Largest number of unknowns per subdomain pair accepted for dense analysis.
pub const MAX_DENSE_UNKNOWNS: usize = 4000;

/// Blocks of the BE-EXT2 iteration on the stacked state (w^k, v^k, w^{k−1}, v^{k−1}).
#[derive(Debug, Clone)]
pub struct IterationMatrix {
    /// c (cI − A11)⁻¹.
    pub m_left: DenseMatrix,
    /// (cI − A11)⁻¹ A12.
    pub n_left: DenseMatrix,
    /// c (cI − A22)⁻¹.
    pub m_right: DenseMatrix,
    /// (cI − A22)⁻¹ A21.
    pub n_right: DenseMatrix,
    pub b: DenseMatrix,
    pub shift: f64,
}

fn solve_pair(
    a: &SparseMatrix,
    coupling: &SparseMatrix,
    c: f64,
    side: &'static str,
) -> Result<(DenseMatrix, DenseMatrix), SpectralError> {
    let n = a.rows();
    let system = SparseMatrix::lin_comb(c, &SparseMatrix::identity(n), -1.0, a);
    let lu = lu_factor(&system).map_err(|source| SpectralError::Singular { side, source })?;
    let m = lu.solve_dense(&DenseMatrix::identity(n).scaled(c));
    let nn = lu.solve_dense(&coupling.to_dense());
    Ok((m, nn))
}

/// Builds B = [[M_L, 2N_L, 0, −N_L], [N_R M_L, 2N_R N_L + M_R, 0, −N_R N_L], [I,0,0,0], [0,I,0,0]]
/// for the homogeneous problem with step `dt`.
pub fn build_iteration_matrix(blocks: &CoupledBlocks, dt: f64) -> Result<IterationMatrix, SpectralError> {
    let (nl, nr) = (blocks.left_len(), blocks.right_len());
    let size = 2 * (nl + nr);
    if size > MAX_DENSE_UNKNOWNS {
        return Err(SpectralError::TooLarge(size));
    }
    let c = 1.0 / dt;
    let (m_left, n_left) = solve_pair(&blocks.a11, &blocks.a12, c, "left")?;
    let (m_right, n_right) = solve_pair(&blocks.a22, &blocks.a21, c, "right")?;
    let nr_ml = n_right.matmul(&m_left);
    let nr_nl = n_right.matmul(&n_left);
    let mut b = DenseMatrix::zeros(size, size);
    let (c1, c2, c4) = (nl, nl + nr, 2 * nl + nr);
    b.set_block(0, 0, &m_left);
    b.set_block(0, c1, &n_left.scaled(2.0));
    b.set_block(0, c4, &n_left.scaled(-1.0));
    b.set_block(nl, 0, &nr_ml);
    let mut middle = nr_nl.scaled(2.0);
    for i in 0..nr {
        for j in 0..nr {
            middle.set(i, j, middle.get(i, j) + m_right.get(i, j));
        }
    }
    b.set_block(nl, c1, &middle);
    b.set_block(nl, c4, &nr_nl.scaled(-1.0));
    for i in 0..nl {
        b.set(c2 + i, i, 1.0);
    }
    for i in 0..nr {
        b.set(c4 + i, nl + i, 1.0);
    }
    Ok(IterationMatrix { m_left, n_left, m_right, n_right, b, shift: c })
}

pub fn spectral_radius(it: &IterationMatrix) -> Result<f64, SpectralError> {
    dense_spectral_radius(&it.b).map_err(SpectralError::Eigen)
}

/// Stacked initial state (w⁰, v⁰, w⁰, v⁰) propagated by B `steps` times.
pub fn propagate(it: &IterationMatrix, w0: &[f64], v0: &[f64], steps: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x: Vec<f64> = w0.iter().chain(v0).chain(w0).chain(v0).copied().collect();
    for _ in 0..steps {
        x = it.b.matvec(&x);
    }
    let nl = w0.len();
    (x[..nl].to_vec(), x[nl..nl + v0.len()].to_vec())
}

/// Parameter varied in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    Gamma1,
    /// Sets γ₂ on both sides.
    Gamma2,
    Dt,
    /// Node count along the interface (tangential axis) in both blocks.
    Ny,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Gamma1 => "gamma1",
            SweepParameter::Gamma2 => "gamma2",
            SweepParameter::Dt => "dt",
            SweepParameter::Ny => "ny",
        }
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParameter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gamma1" => Ok(SweepParameter::Gamma1),
            "gamma2" => Ok(SweepParameter::Gamma2),
            "dt" => Ok(SweepParameter::Dt),
            "ny" => Ok(SweepParameter::Ny),
            other => Err(format!("unknown sweep parameter {other:?}; expected gamma1, gamma2, dt or ny")),
        }
    }
}

/// The configuration a sweep starts from.
#[derive(Debug, Clone)]
pub struct SweepBase {
    pub geometry: GeometrySpec,
    pub params: PdeParams,
    pub sat: SatParams,
    pub dt: f64,
    pub c_star: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub spectral_radius: f64,
    /// Stability conditions of the BE-EXT2 result hold.
    pub conditions_pass: bool,
    /// Stability conditions of the BE-EXT1 result hold.
    pub ext1_conditions_pass: bool,
}

impl SweepPoint {
    pub fn below_one(&self) -> bool {
        self.spectral_radius < 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub parameter: SweepParameter,
    pub points: Vec<SweepPoint>,
}

/// Spectral radius at one configuration.
pub fn evaluate_point(system: &CoupledSystem, dt: f64, c_star: f64) -> Result<SweepPoint, SpectralError> {
    let it = build_iteration_matrix(&system.blocks, dt)?;
    let rho = spectral_radius(&it)?;
    let constants = StabilityConstants::from_c_star(c_star, &system.left.trace, &system.right.trace);
    let report = check_conditions(&ConditionInputs {
        sat: &system.sat,
        dt,
        left: &system.left.trace,
        right: &system.right.trace,
        params: &system.params,
        constants,
        dim: system.left.dim(),
    });
    Ok(SweepPoint {
        value: f64::NAN,
        spectral_radius: rho,
        conditions_pass: report.scheme_passes(Scheme::BeExt2),
        ext1_conditions_pass: report.scheme_passes(Scheme::BeExt1),
    })
}

pub fn sweep(base: &SweepBase, parameter: SweepParameter, values: &[f64]) -> Result<SweepResult, SpectralError> {
    if values.is_empty() {
        return Err(SpectralError::Sweep("no sweep values given".into()));
    }
    let reference = CoupledSystem::build(&base.geometry, base.params.clone(), base.sat)?;
    let mut points = Vec::with_capacity(values.len());
    for &value in values {
        let (system, dt) = match parameter {
            SweepParameter::Gamma1 => {
                (reference.with_sat(SatParams { gamma1: value, ..base.sat })?, base.dt)
            }
            SweepParameter::Gamma2 => (
                reference.with_sat(SatParams { gamma2_left: value, gamma2_right: value, ..base.sat })?,
                base.dt,
            ),
            SweepParameter::Dt => (reference.clone(), value),
            SweepParameter::Ny => {
                if value.fract() != 0.0 || value < 2.0 || base.geometry.dim() < 2 {
                    return Err(SpectralError::Sweep(format!("ny must be an integer node count in 2D/3D, got {value}")));
                }
                let mut geometry = base.geometry.clone();
                geometry.left.counts[1] = value as usize;
                geometry.right.counts[1] = value as usize;
                (CoupledSystem::build(&geometry, base.params.clone(), base.sat)?, base.dt)
            }
        };
        if !(dt > 0.0) {
            return Err(SpectralError::Sweep(format!("dt must be positive, got {dt}")));
        }
        let mut point = evaluate_point(&system, dt, base.c_star)?;
        point.value = value;
        points.push(point);
    }
    Ok(SweepResult { parameter, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_toy() {
        let one = |v: f64| SparseMatrix::from_triplets(1, 1, &[(0, 0, v)]).unwrap();
        let blocks = CoupledBlocks { a11: one(-1.0), a12: one(0.0), a21: one(0.0), a22: one(-1.0) };
        let it = build_iteration_matrix(&blocks, 1.0).unwrap();
        assert!((it.m_left.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((spectral_radius(&it).unwrap() - 0.5).abs() < 1e-12);
    }
}
