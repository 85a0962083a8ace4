//! Coordinate mappings, metric terms, surface Jacobians and discrete trace
//! constants.

use crate::sbp::{Face, Side, TensorOperatorSet};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("nonpositive metric Jacobian {value:e} at node {node}")]
    NonPositiveJacobian { node: usize, value: f64 },
    #[error("nonpositive surface Jacobian on face {face} at face node {node}")]
    NonPositiveSurfaceJacobian { face: String, node: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("3D metrics require a tensor-affine mapping (found cross-derivative {0:e})")]
    NotTensorAffine(f64),
    #[error("invalid box: lower {lower:?} upper {upper:?}")]
    InvalidBox { lower: Vec<f64>, upper: Vec<f64> },
}

/// Perturbation amplitude of the curvilinear test map.
const AMPLITUDE: f64 = 1.0 / 32.0;

/// The perturbed map of the unit square used for curvilinear tests:
/// x = 1 − ξ − A cos(π(ξ−½)) cos(3π(η−½)),
/// y = 1 − η − A sin(4π(x−½)) cos(π(η−½)), with x evaluated first.
pub fn perturbed_unit_square(xi: f64, eta: f64) -> (f64, f64) {
    let x = 1.0 - xi - AMPLITUDE * (PI * (xi - 0.5)).cos() * (3.0 * PI * (eta - 0.5)).cos();
    let y = 1.0 - eta - AMPLITUDE * (4.0 * PI * (x - 0.5)).sin() * (PI * (eta - 0.5)).cos();
    (x, y)
}

/// Mapping from the reference box [0,1]^d to physical coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum Mapping {
    Identity { dim: usize },
    /// Axis-aligned affine map onto the box [lower, upper].
    Affine { lower: Vec<f64>, upper: Vec<f64> },
    /// The perturbed unit-square map composed with an affine map onto the
    /// rectangle [lower, upper], oriented so that ξ and η increase with x
    /// and y. The box edges are mapped to straight edges.
    Perturbed { lower: [f64; 2], upper: [f64; 2] },
}

impl Mapping {
    pub fn affine(lower: &[f64], upper: &[f64]) -> Result<Self, GeometryError> {
        if lower.len() != upper.len()
            || !(1..=3).contains(&lower.len())
            || lower.iter().zip(upper).any(|(a, b)| !(b > a))
        {
            return Err(GeometryError::InvalidBox { lower: lower.to_vec(), upper: upper.to_vec() });
        }
        Ok(Mapping::Affine { lower: lower.to_vec(), upper: upper.to_vec() })
    }

    pub fn perturbed(lower: [f64; 2], upper: [f64; 2]) -> Result<Self, GeometryError> {
        if !(upper[0] > lower[0] && upper[1] > lower[1]) {
            return Err(GeometryError::InvalidBox { lower: lower.to_vec(), upper: upper.to_vec() });
        }
        Ok(Mapping::Perturbed { lower, upper })
    }

    pub fn dim(&self) -> usize {
        match self {
            Mapping::Identity { dim } => *dim,
            Mapping::Affine { lower, .. } => lower.len(),
            Mapping::Perturbed { .. } => 2,
        }
    }

    /// Whether each physical coordinate depends on its own reference
    /// coordinate only, and linearly.
    pub fn is_tensor_affine(&self) -> bool {
        !matches!(self, Mapping::Perturbed { .. })
    }

    pub fn eval(&self, xi: &[f64]) -> Vec<f64> {
        match self {
            Mapping::Identity { .. } => xi.to_vec(),
            Mapping::Affine { lower, upper } => {
                xi.iter().zip(lower.iter().zip(upper)).map(|(s, (a, b))| a + s * (b - a)).collect()
            }
            Mapping::Perturbed { lower, upper } => {
                let (x, y) = perturbed_unit_square(xi[0], xi[1]);
                vec![
                    lower[0] + (1.0 - x) * (upper[0] - lower[0]),
                    lower[1] + (1.0 - y) * (upper[1] - lower[1]),
                ]
            }
        }
    }
}

/// Evaluates `map` at reference nodes given per axis; returns physical
/// coordinates per axis.
pub fn eval_mapping(map: &Mapping, reference: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, GeometryError> {
    let d = map.dim();
    if reference.len() != d {
        return Err(GeometryError::Dimension(format!(
            "{d}-dimensional map given {} coordinate arrays",
            reference.len()
        )));
    }
    let n = reference[0].len();
    let mut out = vec![Vec::with_capacity(n); d];
    let mut xi = vec![0.0; d];
    for k in 0..n {
        for l in 0..d {
            xi[l] = reference[l][k];
        }
        for (m, v) in map.eval(&xi).into_iter().enumerate() {
            out[m].push(v);
        }
    }
    Ok(out)
}

/// Index of a face in per-face arrays.
pub fn face_slot(face: Face) -> usize {
    2 * face.axis + usize::from(face.side == Side::Beta)
}

/// Metric quantities of one curvilinear block, stored nodewise.
#[derive(Debug, Clone)]
pub struct Metrics {
    dim: usize,
    /// Metric Jacobian J.
    pub jacobian: Vec<f64>,
    /// `scaled_inverse[l][m]` = J ∂ξ_l/∂x_m.
    pub scaled_inverse: Vec<Vec<Vec<f64>>>,
    /// `contravariant[l][a]` = C_{l,a} = Σ_m J (∂ξ_l/∂x_m)(∂ξ_a/∂x_m).
    pub contravariant: Vec<Vec<Vec<f64>>>,
    /// Surface Jacobians per face slot, in face-node order.
    pub surface_jacobian: Vec<Vec<f64>>,
    face_nodes: Vec<Vec<usize>>,
}

/// Computes metrics from physical node coordinates by SBP differentiation
/// and cofactor inversion of the discrete Jacobian matrix.
pub fn compute_metrics(coords: &[Vec<f64>], ops: &TensorOperatorSet) -> Result<Metrics, GeometryError> {
    let d = ops.dim();
    if coords.len() != d || coords.iter().any(|c| c.len() != ops.len()) {
        return Err(GeometryError::Dimension("coordinates do not match the operator grid".into()));
    }
    let n = ops.len();
    // dx[m][l] = D_{ξ_l} x_m
    let dx: Vec<Vec<Vec<f64>>> =
        (0..d).map(|m| (0..d).map(|l| ops.d(l).matvec_accurate(&coords[m])).collect()).collect();

    if d == 3 {
        let scale = dx.iter().flatten().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        for m in 0..3 {
            for l in 0..3 {
                if m != l {
                    let worst = dx[m][l].iter().fold(0.0f64, |a, v| a.max(v.abs()));
                    if worst > 1e-12 * scale.max(1.0) {
                        return Err(GeometryError::NotTensorAffine(worst));
                    }
                }
            }
        }
    }

    let mut jacobian = vec![0.0; n];
    let mut scaled_inverse = vec![vec![vec![0.0; n]; d]; d];
    for k in 0..n {
        let a = |m: usize, l: usize| dx[m][l][k];
        match d {
            1 => {
                jacobian[k] = a(0, 0);
                scaled_inverse[0][0][k] = 1.0;
            }
            2 => {
                jacobian[k] = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
                scaled_inverse[0][0][k] = a(1, 1);
                scaled_inverse[0][1][k] = -a(0, 1);
                scaled_inverse[1][0][k] = -a(1, 0);
                scaled_inverse[1][1][k] = a(0, 0);
            }
            _ => {
                let cof = |m: usize, l: usize| {
                    let (m1, m2) = ((m + 1) % 3, (m + 2) % 3);
                    let (l1, l2) = ((l + 1) % 3, (l + 2) % 3);
                    a(m1, l1) * a(m2, l2) - a(m1, l2) * a(m2, l1)
                };
                jacobian[k] = (0..3).map(|l| a(0, l) * cof(0, l)).sum();
                for l in 0..3 {
                    for m in 0..3 {
                        scaled_inverse[l][m][k] = cof(m, l);
                    }
                }
            }
        }
    }
    if let Some(k) = jacobian.iter().position(|j| !(*j > 0.0)) {
        return Err(GeometryError::NonPositiveJacobian { node: k, value: jacobian[k] });
    }

    let mut contravariant = vec![vec![vec![0.0; n]; d]; d];
    for l in 0..d {
        for a in l..d {
            let c: Vec<f64> = (0..n)
                .map(|k| (0..d).map(|m| scaled_inverse[l][m][k] * scaled_inverse[a][m][k]).sum::<f64>() / jacobian[k])
                .collect();
            contravariant[a][l] = c.clone();
            contravariant[l][a] = c;
        }
    }

    let faces = Face::all(d);
    let mut surface_jacobian = vec![Vec::new(); faces.len()];
    let mut face_nodes = vec![Vec::new(); faces.len()];
    for face in faces {
        let nodes = ops.face_nodes(face);
        let sj: Vec<f64> = nodes
            .iter()
            .map(|&k| (0..d).map(|m| scaled_inverse[face.axis][m][k].powi(2)).sum::<f64>().sqrt())
            .collect();
        if let Some(i) = sj.iter().position(|v| !(*v > 0.0)) {
            return Err(GeometryError::NonPositiveSurfaceJacobian { face: face.to_string(), node: i });
        }
        surface_jacobian[face_slot(face)] = sj;
        face_nodes[face_slot(face)] = nodes;
    }

    Ok(Metrics { dim: d, jacobian, scaled_inverse, contravariant, surface_jacobian, face_nodes })
}

impl Metrics {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn surface(&self, face: Face) -> &[f64] {
        &self.surface_jacobian[face_slot(face)]
    }

    pub fn face_nodes(&self, face: Face) -> &[usize] {
        &self.face_nodes[face_slot(face)]
    }

    /// Outward unit normal at each node of `face`, one vector per node.
    pub fn outward_normals(&self, face: Face) -> Vec<Vec<f64>> {
        let sj = self.surface(face);
        self.face_nodes(face)
            .iter()
            .zip(sj)
            .map(|(&k, s)| (0..self.dim).map(|m| face.sign() * self.scaled_inverse[face.axis][m][k] / s).collect())
            .collect()
    }

    /// Normal advection speed a·n on `face`, nodewise.
    pub fn normal_advection(&self, face: Face, advection: &[f64]) -> Vec<f64> {
        self.outward_normals(face)
            .iter()
            .map(|n| n.iter().zip(advection).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// max over components m of ‖Σ_l D_{ξ_l}[J ∂ξ_l/∂x_m] 1‖∞.
    pub fn metric_identity_residual(&self, ops: &TensorOperatorSet) -> f64 {
        let mut worst = 0.0f64;
        for m in 0..self.dim {
            let mut sum = vec![0.0; ops.len()];
            for l in 0..self.dim {
                ops.d(l).matvec_add(1.0, &self.scaled_inverse[l][m], &mut sum);
            }
            worst = sum.iter().fold(worst, |a, v| a.max(v.abs()));
        }
        worst
    }

    /// Diagonal of the volume mass matrix J P̄.
    pub fn mass(&self, ops: &TensorOperatorSet) -> Vec<f64> {
        self.jacobian.iter().zip(ops.norm()).map(|(j, p)| j * p).collect()
    }

    /// Diagonal of Ĵ P̄⊥ on `face`.
    pub fn surface_weight(&self, ops: &TensorOperatorSet, face: Face) -> Vec<f64> {
        self.surface(face).iter().zip(ops.perp_norm(face.axis)).map(|(s, p)| s * p).collect()
    }
}

/// Constants of the discrete trace inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceConstants {
    /// Minimum of the J P̄ diagonal.
    pub volume_min: f64,
    /// Maximum of the Ĵ P̄⊥ diagonal, per face slot.
    pub face_max: Vec<f64>,
    /// ρ = volume_min / max(face_max).
    pub rho: f64,
}

pub fn trace_constant(metrics: &Metrics, ops: &TensorOperatorSet) -> TraceConstants {
    let volume_min = metrics.mass(ops).into_iter().fold(f64::INFINITY, f64::min);
    let face_max: Vec<f64> = Face::all(ops.dim())
        .into_iter()
        .map(|f| metrics.surface_weight(ops, f).into_iter().fold(0.0, f64::max))
        .collect();
    let largest = face_max.iter().copied().fold(0.0, f64::max);
    TraceConstants { volume_min, face_max, rho: volume_min / largest }
}
