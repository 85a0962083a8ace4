//! Spatial operators: skew-split advection, conservative diffusion, physical
//! boundary SATs, interface SATs and the coupled block system.
//!
//! Every operator here is the right-hand side of M_J du/dt = A u + ..., with
//! M_J = diag(J). The blocks in [`CoupledBlocks`] are pre-multiplied by
//! M_J⁻¹ so that du/dt = A11 w + A12 v + forcing.

use crate::geometry::{compute_metrics, eval_mapping, trace_constant, GeometryError, Mapping, Metrics, TraceConstants};
use crate::linalg::{LinalgError, SparseMatrix};
use crate::physics::{
    left_boundary_value, right_boundary_value, source_on_nodes, Domain, ExactSolution, PdeParams, PhysicsError,
};
use crate::sbp::{Face, SbpError, Side, TensorOperatorSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error(transparent)]
    Sbp(#[from] SbpError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("face {0} is the interface, not a physical boundary")]
    InterfaceFace(String),
    #[error("nonconforming interface: {0}")]
    Nonconforming(String),
    #[error("invalid SAT parameters: {0}")]
    SatParams(String),
    #[error("left and right blocks have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
}

/// Interface penalty parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatParams {
    pub gamma1: f64,
    pub gamma2_left: f64,
    pub gamma2_right: f64,
}

impl SatParams {
    /// Requires γ₁ to agree on both sides and all values nonnegative.
    pub fn new(gamma1_left: f64, gamma1_right: f64, gamma2_left: f64, gamma2_right: f64) -> Result<Self, AssemblyError> {
        let all = [gamma1_left, gamma1_right, gamma2_left, gamma2_right];
        if all.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(AssemblyError::SatParams(format!("penalties must be finite and nonnegative: {all:?}")));
        }
        if gamma1_left != gamma1_right {
            return Err(AssemblyError::SatParams(format!(
                "gamma1 must agree on both sides ({gamma1_left} vs {gamma1_right})"
            )));
        }
        Ok(Self { gamma1: gamma1_left, gamma2_left, gamma2_right })
    }

    pub fn symmetric(gamma1: f64, gamma2: f64) -> Result<Self, AssemblyError> {
        Self::new(gamma1, gamma1, gamma2, gamma2)
    }

    pub fn gamma2_min(&self) -> f64 {
        self.gamma2_left.min(self.gamma2_right)
    }

    pub fn gamma2_max(&self) -> f64 {
        self.gamma2_left.max(self.gamma2_right)
    }

    pub fn gamma2_spread(&self) -> f64 {
        (self.gamma2_left - self.gamma2_right).abs()
    }
}

/// One mapped block of the two-block geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    pub map: Mapping,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometrySpec {
    pub degree: usize,
    pub left: BlockSpec,
    pub right: BlockSpec,
}

impl GeometrySpec {
    pub fn dim(&self) -> usize {
        self.left.map.dim()
    }
}

/// Operators and geometry of one subdomain.
#[derive(Debug, Clone)]
pub struct Subdomain {
    pub domain: Domain,
    pub ops: TensorOperatorSet,
    pub coords: Vec<Vec<f64>>,
    pub metrics: Metrics,
    /// Diagonal of J P̄.
    pub mass: Vec<f64>,
    pub trace: TraceConstants,
}

impl Subdomain {
    pub fn new(domain: Domain, degree: usize, block: &BlockSpec) -> Result<Self, AssemblyError> {
        if block.counts.len() != block.map.dim() {
            return Err(AssemblyError::DimensionMismatch(block.counts.len(), block.map.dim()));
        }
        let ops = TensorOperatorSet::on_box(degree, &block.counts)?;
        let coords = eval_mapping(&block.map, &ops.reference_nodes())?;
        let metrics = compute_metrics(&coords, &ops)?;
        let mass = metrics.mass(&ops);
        let trace = trace_constant(&metrics, &ops);
        Ok(Self { domain, ops, coords, metrics, mass, trace })
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.ops.dim()
    }

    pub fn interface_face(&self) -> Face {
        match self.domain {
            Domain::Left => Face::new(0, Side::Beta),
            Domain::Right => Face::new(0, Side::Alpha),
        }
    }

    pub fn physical_faces(&self) -> Vec<Face> {
        let skip = self.interface_face();
        Face::all(self.dim()).into_iter().filter(|f| *f != skip).collect()
    }

    /// Σ_a R C_{l,a} D_{ξ_a}: the contravariant flux trace on `face`.
    pub fn flux_trace(&self, face: Face) -> SparseMatrix {
        let r = self.ops.restriction(face);
        let mut out = SparseMatrix::zeros(r.rows(), self.len());
        for a in 0..self.dim() {
            let term = r.scale_cols(&self.metrics.contravariant[face.axis][a]).matmul(self.ops.d(a));
            out = out.add(&term);
        }
        out
    }

    /// Diagonal Ĵ P̄⊥ on `face`.
    pub fn surface_weight(&self, face: Face) -> Vec<f64> {
        self.metrics.surface_weight(&self.ops, face)
    }

    /// Physical coordinates of the nodes on `face`, one point per node.
    pub fn face_points(&self, face: Face) -> Vec<Vec<f64>> {
        self.metrics.face_nodes(face).iter().map(|&k| self.coords.iter().map(|c| c[k]).collect()).collect()
    }
}

/// Interior operator: skew-split advection plus conservative diffusion on the
/// left, conservative diffusion only on the right.
pub fn assemble_interior(sub: &Subdomain, params: &PdeParams) -> SparseMatrix {
    let d = sub.dim();
    let n = sub.len();
    let m = &sub.metrics;
    let mut out = SparseMatrix::zeros(n, n);
    let conductivity = params.conductivity(sub.domain);
    if sub.domain == Domain::Left && params.advection.iter().any(|a| *a != 0.0) {
        for l in 0..d {
            let speed: Vec<f64> = (0..n)
                .map(|k| (0..d).map(|i| params.advection[i] * m.scaled_inverse[l][i][k]).sum())
                .collect();
            let dl = sub.ops.d(l);
            let split = dl.scale_cols(&speed).add(&dl.scale_rows(&speed));
            out = SparseMatrix::lin_comb(1.0, &out, -0.5, &split);
        }
    }
    for l in 0..d {
        for a in 0..d {
            let term = sub.ops.d(l).scale_cols(&m.contravariant[l][a]).matmul(sub.ops.d(a));
            out = SparseMatrix::lin_comb(1.0, &out, conductivity, &term);
        }
    }
    out
}

/// A physical boundary face with everything needed to inject data and to
/// account for it in the energy estimate.
#[derive(Debug, Clone)]
pub struct BoundaryFace {
    pub face: Face,
    /// Volume indices of the face nodes.
    pub nodes: Vec<usize>,
    pub points: Vec<Vec<f64>>,
    pub normals: Vec<Vec<f64>>,
    /// a·n per node.
    pub lambda: Vec<f64>,
    /// Penalty on the boundary value per node: ζ on the left, κ/φ on the right.
    pub penalty: Vec<f64>,
    /// Diagonal Ĵ P̄⊥.
    pub surface_weight: Vec<f64>,
    /// Coefficient mapping face data into du/dt, per node (includes M_J⁻¹ P̄⁻¹).
    pub injection: Vec<f64>,
}

impl BoundaryFace {
    /// Upper bound of the energy injected per unit time by data `data` on
    /// this face; +∞ when data enters a node without dissipation.
    pub fn data_energy_rate(&self, data: &[f64], domain: Domain) -> f64 {
        let mut total = 0.0;
        for (j, g) in data.iter().enumerate() {
            if *g == 0.0 {
                continue;
            }
            let dissipation = match domain {
                Domain::Left => self.penalty[j] + 0.5 * self.lambda[j],
                Domain::Right => self.penalty[j],
            };
            let coupling = match domain {
                Domain::Left => 1.0,
                Domain::Right => self.penalty[j],
            };
            if dissipation <= 0.0 {
                return f64::INFINITY;
            }
            total += self.surface_weight[j] * coupling * coupling * g * g / (2.0 * dissipation);
        }
        total
    }
}

/// SAT for a physical boundary face, returned without the M_J⁻¹ factor,
/// together with the face description used for data injection.
pub fn assemble_boundary_sats(sub: &Subdomain, face: Face, params: &PdeParams) -> Result<(SparseMatrix, BoundaryFace), AssemblyError> {
    if face == sub.interface_face() {
        return Err(AssemblyError::InterfaceFace(face.to_string()));
    }
    let r = sub.ops.restriction(face);
    let perp = sub.ops.perp_norm(face.axis);
    let weight = sub.surface_weight(face);
    let lambda = sub.metrics.normal_advection(face, &params.advection);
    let conductivity = params.conductivity(sub.domain);
    let penalty: Vec<f64> = match sub.domain {
        Domain::Left => lambda.iter().map(|l| params.zeta_at(*l)).collect(),
        Domain::Right => vec![params.kappa / params.phi(); lambda.len()],
    };
    let value_weight: Vec<f64> = penalty.iter().zip(&weight).map(|(p, w)| p * w).collect();
    let rt = r.transpose();
    let value = rt.scale_cols(&value_weight).matmul(r);
    let flux = rt.scale_cols(perp).matmul(&sub.flux_trace(face));
    let inv_norm: Vec<f64> = sub.ops.norm().iter().map(|p| -1.0 / p).collect();
    let sat = SparseMatrix::lin_comb(1.0, &value, face.sign() * conductivity, &flux).scale_rows(&inv_norm);

    let nodes = sub.metrics.face_nodes(face).to_vec();
    let injection = nodes
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let w = match sub.domain {
                Domain::Left => weight[j],
                Domain::Right => value_weight[j],
            };
            w / (sub.ops.norm()[k] * sub.metrics.jacobian[k])
        })
        .collect();
    let info = BoundaryFace {
        face,
        points: sub.face_points(face),
        normals: sub.metrics.outward_normals(face),
        nodes,
        lambda,
        penalty,
        surface_weight: weight,
        injection,
    };
    Ok((sat, info))
}

/// Interface quantities shared by both sides.
#[derive(Debug, Clone)]
pub struct InterfaceData {
    /// Diagonal Ĵ_Σ P̄⊥.
    pub weight: Vec<f64>,
    /// Diagonal Ĵ_Σ⁻¹ P̄⊥.
    pub inverse_weight: Vec<f64>,
    pub restrict_left: SparseMatrix,
    pub restrict_right: SparseMatrix,
    /// Σ_a R_β C^L_{1,a} D_a.
    pub flux_left: SparseMatrix,
    /// Σ_a R_α C^R_{1,a} D_a.
    pub flux_right: SparseMatrix,
}

/// Verifies that the left β₁ face and the right α₁ face share nodes and
/// surface Jacobians, and collects the interface operators.
pub fn interface_data(left: &Subdomain, right: &Subdomain) -> Result<InterfaceData, AssemblyError> {
    if left.dim() != right.dim() {
        return Err(AssemblyError::DimensionMismatch(left.dim(), right.dim()));
    }
    let (fl, fr) = (left.interface_face(), right.interface_face());
    if left.ops.counts()[1..] != right.ops.counts()[1..] {
        return Err(AssemblyError::Nonconforming(format!(
            "tangential node counts differ: {:?} vs {:?}",
            &left.ops.counts()[1..],
            &right.ops.counts()[1..]
        )));
    }
    let (pl, pr) = (left.face_points(fl), right.face_points(fr));
    let scale = pl.iter().flatten().fold(1.0f64, |a, v| a.max(v.abs()));
    for (j, (a, b)) in pl.iter().zip(&pr).enumerate() {
        let gap = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        if gap > 1e-10 * scale {
            return Err(AssemblyError::Nonconforming(format!("interface node {j} differs by {gap:e}")));
        }
    }
    let (jl, jr) = (left.metrics.surface(fl), right.metrics.surface(fr));
    for (j, (a, b)) in jl.iter().zip(jr).enumerate() {
        if (a - b).abs() > 1e-10 * a.abs().max(1.0) {
            return Err(AssemblyError::Nonconforming(format!(
                "surface Jacobians differ at interface node {j}: {a} vs {b}"
            )));
        }
    }
    let perp = left.ops.perp_norm(0);
    Ok(InterfaceData {
        weight: jl.iter().zip(perp).map(|(s, p)| s * p).collect(),
        inverse_weight: jl.iter().zip(perp).map(|(s, p)| p / s).collect(),
        restrict_left: left.ops.restriction(fl).clone(),
        restrict_right: right.ops.restriction(fr).clone(),
        flux_left: left.flux_trace(fl),
        flux_right: right.flux_trace(fr),
    })
}

/// Interface SATs split into the parts acting on the own and the neighbour
/// solution, without the M_J⁻¹ factor.
#[derive(Debug, Clone)]
pub struct InterfaceSats {
    pub left_self: SparseMatrix,
    pub left_neighbor: SparseMatrix,
    pub right_self: SparseMatrix,
    pub right_neighbor: SparseMatrix,
}

pub fn assemble_interface_sats(
    left: &Subdomain,
    right: &Subdomain,
    iface: &InterfaceData,
    sat: &SatParams,
    params: &PdeParams,
) -> InterfaceSats {
    let (eps, kap) = (params.epsilon, params.kappa);
    let (rl, rr) = (&iface.restrict_left, &iface.restrict_right);
    let (fl, fr) = (&iface.flux_left, &iface.flux_right);
    let w = &iface.weight;
    let wbar = &iface.inverse_weight;
    let perp = left.ops.perp_norm(0);
    let sandwich = |a: &SparseMatrix, weight: &[f64], b: &SparseMatrix| a.transpose().scale_cols(weight).matmul(b);
    let inv = |sub: &Subdomain| sub.ops.norm().iter().map(|p| 1.0 / p).collect::<Vec<_>>();
    let (inv_l, inv_r) = (inv(left), inv(right));

    let left_self = SparseMatrix::lin_comb(
        -sat.gamma1,
        &sandwich(rl, w, rl),
        -sat.gamma2_left * eps * eps,
        &sandwich(fl, wbar, fl),
    )
    .scale_rows(&inv_l);
    let left_neighbor = SparseMatrix::lin_comb(
        sat.gamma1,
        &sandwich(rl, w, rr),
        sat.gamma2_left * eps * kap,
        &sandwich(fl, wbar, fr),
    )
    .scale_rows(&inv_l);

    let right_self = SparseMatrix::lin_comb(
        -sat.gamma1,
        &sandwich(rr, w, rr),
        -sat.gamma2_right * kap * kap,
        &sandwich(fr, wbar, fr),
    )
    .add(&sandwich(rr, perp, fr).scaled(kap))
    .scale_rows(&inv_r);
    let right_neighbor = SparseMatrix::lin_comb(
        sat.gamma1,
        &sandwich(rr, w, rl),
        sat.gamma2_right * kap * eps,
        &sandwich(fr, wbar, fl),
    )
    .add(&sandwich(rr, perp, fl).scaled(-eps))
    .scale_rows(&inv_r);

    InterfaceSats { left_self, left_neighbor, right_self, right_neighbor }
}

/// du/dt = A11 w + A12 v + forcing, dv/dt = A21 w + A22 v + forcing.
#[derive(Debug, Clone)]
pub struct CoupledBlocks {
    pub a11: SparseMatrix,
    pub a12: SparseMatrix,
    pub a21: SparseMatrix,
    pub a22: SparseMatrix,
}

impl CoupledBlocks {
    pub fn left_len(&self) -> usize {
        self.a11.rows()
    }

    pub fn right_len(&self) -> usize {
        self.a22.rows()
    }
}

/// [[cI − A11, −A12], [−A21, cI − A22]].
pub fn assemble_monolithic(blocks: &CoupledBlocks, c: f64) -> Result<SparseMatrix, AssemblyError> {
    let shifted = |a: &SparseMatrix| SparseMatrix::lin_comb(c, &SparseMatrix::identity(a.rows()), -1.0, a);
    let (l, r) = (shifted(&blocks.a11), shifted(&blocks.a22));
    let (u, d) = (blocks.a12.scaled(-1.0), blocks.a21.scaled(-1.0));
    Ok(SparseMatrix::block(&[vec![Some(&l), Some(&u)], vec![Some(&d), Some(&r)]])?)
}

/// Forcing at one time level: du/dt contributions and the raw face data.
#[derive(Debug, Clone, PartialEq)]
pub struct Forcing {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    /// Left boundary data per physical face, in `left_faces` order.
    pub left_data: Vec<Vec<f64>>,
    /// Right boundary data per physical face, in `right_faces` order.
    pub right_data: Vec<Vec<f64>>,
}

impl Forcing {
    pub fn is_zero(&self) -> bool {
        self.left.iter().chain(&self.right).all(|v| *v == 0.0)
    }
}

/// The assembled two-subdomain problem.
#[derive(Debug, Clone)]
pub struct CoupledSystem {
    pub left: Subdomain,
    pub right: Subdomain,
    pub params: PdeParams,
    pub sat: SatParams,
    pub blocks: CoupledBlocks,
    pub left_faces: Vec<BoundaryFace>,
    pub right_faces: Vec<BoundaryFace>,
    pub interface: InterfaceData,
}

/// Builds both subdomains (operators, metrics and trace constants).
pub fn build_subdomains(geometry: &GeometrySpec) -> Result<(Subdomain, Subdomain), AssemblyError> {
    if geometry.left.map.dim() != geometry.right.map.dim() {
        return Err(AssemblyError::DimensionMismatch(geometry.left.map.dim(), geometry.right.map.dim()));
    }
    let left = Subdomain::new(Domain::Left, geometry.degree, &geometry.left)?;
    let right = Subdomain::new(Domain::Right, geometry.degree, &geometry.right)?;
    Ok((left, right))
}

impl CoupledSystem {
    pub fn build(geometry: &GeometrySpec, params: PdeParams, sat: SatParams) -> Result<Self, AssemblyError> {
        let (left, right) = build_subdomains(geometry)?;
        Self::from_subdomains(left, right, params, sat)
    }

    pub fn from_subdomains(left: Subdomain, right: Subdomain, params: PdeParams, sat: SatParams) -> Result<Self, AssemblyError> {
        params.validate(left.dim())?;
        let iface = interface_data(&left, &right)?;
        let lambda = left.metrics.normal_advection(left.interface_face(), &params.advection);
        if let Some(v) = lambda.iter().find(|l| l.abs() > 1e-10) {
            return Err(AssemblyError::Nonconforming(format!("advection crosses the interface: a·n = {v}")));
        }
        let mut left_op = assemble_interior(&left, &params);
        let mut left_faces = Vec::new();
        for face in left.physical_faces() {
            let (sat_matrix, info) = assemble_boundary_sats(&left, face, &params)?;
            left_op = left_op.add(&sat_matrix);
            left_faces.push(info);
        }
        let mut right_op = assemble_interior(&right, &params);
        let mut right_faces = Vec::new();
        for face in right.physical_faces() {
            let (sat_matrix, info) = assemble_boundary_sats(&right, face, &params)?;
            right_op = right_op.add(&sat_matrix);
            right_faces.push(info);
        }
        let sats = assemble_interface_sats(&left, &right, &iface, &sat, &params);
        let inv_j = |s: &Subdomain| s.metrics.jacobian.iter().map(|j| 1.0 / j).collect::<Vec<_>>();
        let (il, ir) = (inv_j(&left), inv_j(&right));
        let blocks = CoupledBlocks {
            a11: left_op.add(&sats.left_self).scale_rows(&il),
            a12: sats.left_neighbor.scale_rows(&il),
            a21: sats.right_neighbor.scale_rows(&ir),
            a22: right_op.add(&sats.right_self).scale_rows(&ir),
        };
        Ok(Self { left, right, params, sat, blocks, left_faces, right_faces, interface: iface })
    }

    /// Reassembles with different interface penalties.
    pub fn with_sat(&self, sat: SatParams) -> Result<Self, AssemblyError> {
        Self::from_subdomains(self.left.clone(), self.right.clone(), self.params.clone(), sat)
    }

    /// Sources and boundary data of `sol` at time `t`; zero when `sol` is None.
    pub fn forcing(&self, sol: Option<&dyn ExactSolution>, t: f64) -> Forcing {
        let Some(sol) = sol else {
            return Forcing {
                left: vec![0.0; self.left.len()],
                right: vec![0.0; self.right.len()],
                left_data: self.left_faces.iter().map(|f| vec![0.0; f.nodes.len()]).collect(),
                right_data: self.right_faces.iter().map(|f| vec![0.0; f.nodes.len()]).collect(),
            };
        };
        let p = &self.params;
        let mut left = source_on_nodes(sol, p, Domain::Left, &self.left.coords, t);
        let mut right = source_on_nodes(sol, p, Domain::Right, &self.right.coords, t);
        let mut left_data = Vec::with_capacity(self.left_faces.len());
        for f in &self.left_faces {
            let g: Vec<f64> = (0..f.nodes.len())
                .map(|j| left_boundary_value(sol, p, &f.points[j], &f.normals[j], f.penalty[j], t))
                .collect();
            for (j, &k) in f.nodes.iter().enumerate() {
                left[k] += f.injection[j] * g[j];
            }
            left_data.push(g);
        }
        let mut right_data = Vec::with_capacity(self.right_faces.len());
        for f in &self.right_faces {
            let h: Vec<f64> =
                (0..f.nodes.len()).map(|j| right_boundary_value(sol, p, &f.points[j], &f.normals[j], t)).collect();
            for (j, &k) in f.nodes.iter().enumerate() {
                right[k] += f.injection[j] * h[j];
            }
            right_data.push(h);
        }
        Forcing { left, right, left_data, right_data }
    }

    /// Interface mismatch ‖R_β w − R_α v‖ in the Ĵ_Σ P̄⊥ norm.
    pub fn interface_mismatch(&self, w: &[f64], v: &[f64]) -> f64 {
        let a = self.interface.restrict_left.matvec(w);
        let b = self.interface.restrict_right.matvec(v);
        a.iter().zip(&b).zip(&self.interface.weight).map(|((x, y), s)| s * (x - y).powi(2)).sum::<f64>().sqrt()
    }
}
