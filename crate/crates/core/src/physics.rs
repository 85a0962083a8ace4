//! Physical parameters, exact solutions, source terms, boundary data and
//! quadrature-weighted error norms.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("advection has {got} components, expected {expected}")]
    AdvectionDimension { got: usize, expected: usize },
    #[error("advection must be tangential to the interface (a1 = {0}, expected 0)")]
    NormalAdvection(f64),
    #[error("{0} must be finite")]
    NonFinite(&'static str),
}

/// Which subdomain a quantity belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    /// Fluid: advection-diffusion.
    Left,
    /// Solid: heat conduction.
    Right,
}

/// Coefficient of the left-boundary Robin condition ζW + ε n·∇W = g.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum ZetaMode {
    /// ζ = ½(|a·n| − a·n): inflow-only penalty.
    Upwind,
    Constant(f64),
}

/// Coefficient of the right-boundary Robin condition V + φ n·∇V = h.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum PhiMode {
    /// φ = κ.
    Kappa,
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeParams {
    pub advection: Vec<f64>,
    pub epsilon: f64,
    pub kappa: f64,
    pub zeta: ZetaMode,
    pub phi: PhiMode,
}

impl Default for PdeParams {
    fn default() -> Self {
        Self { advection: vec![0.0, 1.0], epsilon: 1.0, kappa: 1.0, zeta: ZetaMode::Upwind, phi: PhiMode::Kappa }
    }
}

impl PdeParams {
    pub fn new(epsilon: f64, kappa: f64, advection: Vec<f64>) -> Self {
        Self { advection, epsilon, kappa, ..Self::default() }
    }

    pub fn validate(&self, dim: usize) -> Result<(), PhysicsError> {
        for (name, value) in [("epsilon", self.epsilon), ("kappa", self.kappa)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(PhysicsError::NonPositive { name, value });
            }
        }
        if self.advection.len() != dim {
            return Err(PhysicsError::AdvectionDimension { got: self.advection.len(), expected: dim });
        }
        if self.advection.iter().any(|a| !a.is_finite()) {
            return Err(PhysicsError::NonFinite("advection"));
        }
        if self.advection[0] != 0.0 {
            return Err(PhysicsError::NormalAdvection(self.advection[0]));
        }
        if let ZetaMode::Constant(z) = self.zeta {
            if !(z >= 0.0 && z.is_finite()) {
                return Err(PhysicsError::NonPositive { name: "zeta", value: z });
            }
        }
        if let PhiMode::Constant(p) = self.phi {
            if !(p > 0.0 && p.is_finite()) {
                return Err(PhysicsError::NonPositive { name: "phi", value: p });
            }
        }
        Ok(())
    }

    pub fn phi(&self) -> f64 {
        match self.phi {
            PhiMode::Kappa => self.kappa,
            PhiMode::Constant(p) => p,
        }
    }

    /// ζ at a boundary node with normal advection speed `lambda` = a·n.
    pub fn zeta_at(&self, lambda: f64) -> f64 {
        match self.zeta {
            ZetaMode::Upwind => 0.5 * (lambda.abs() - lambda),
            ZetaMode::Constant(z) => z,
        }
    }

    pub fn conductivity(&self, domain: Domain) -> f64 {
        match domain {
            Domain::Left => self.epsilon,
            Domain::Right => self.kappa,
        }
    }
}

/// A closed-form space-time field per subdomain with the derivatives needed
/// to manufacture sources and boundary data.
pub trait ExactSolution: Send + Sync {
    fn value(&self, domain: Domain, x: &[f64], t: f64) -> f64;
    fn time_derivative(&self, domain: Domain, x: &[f64], t: f64) -> f64;
    /// Gradient with one entry per coordinate of `x`.
    fn gradient(&self, domain: Domain, x: &[f64], t: f64) -> Vec<f64>;
    fn laplacian(&self, domain: Domain, x: &[f64], t: f64) -> f64;
}

/// u = sin(x³ + x²y) e^{0.1(x+y)t} / c, with c = ε on the left and κ on the
/// right. Coordinates beyond the second are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct ManufacturedSolution {
    pub epsilon: f64,
    pub kappa: f64,
}

const GROWTH: f64 = 0.1;

impl ManufacturedSolution {
    pub fn new(params: &PdeParams) -> Self {
        Self { epsilon: params.epsilon, kappa: params.kappa }
    }

    fn scale(&self, domain: Domain) -> f64 {
        match domain {
            Domain::Left => 1.0 / self.epsilon,
            Domain::Right => 1.0 / self.kappa,
        }
    }

    /// (s, s_x, s_y, s_xx, exp factor, 0.1 t) at a point.
    fn parts(x: &[f64], t: f64) -> (f64, f64, f64, f64, f64, f64) {
        let px = x[0];
        let py = x.get(1).copied().unwrap_or(0.0);
        let s = px.powi(3) + px * px * py;
        let sx = 3.0 * px * px + 2.0 * px * py;
        let sy = px * px;
        let sxx = 6.0 * px + 2.0 * py;
        let e = (GROWTH * (px + py) * t).exp();
        (s, sx, sy, sxx, e, GROWTH * t)
    }
}

impl ExactSolution for ManufacturedSolution {
    fn value(&self, domain: Domain, x: &[f64], t: f64) -> f64 {
        let (s, .., e, _) = Self::parts(x, t);
        self.scale(domain) * s.sin() * e
    }

    fn time_derivative(&self, domain: Domain, x: &[f64], t: f64) -> f64 {
        let (s, .., e, _) = Self::parts(x, t);
        let py = x.get(1).copied().unwrap_or(0.0);
        self.scale(domain) * GROWTH * (x[0] + py) * s.sin() * e
    }

    fn gradient(&self, domain: Domain, x: &[f64], t: f64) -> Vec<f64> {
        let (s, sx, sy, _, e, k) = Self::parts(x, t);
        let c = self.scale(domain);
        let mut g = vec![0.0; x.len()];
        g[0] = c * (s.cos() * sx + k * s.sin()) * e;
        if x.len() > 1 {
            g[1] = c * (s.cos() * sy + k * s.sin()) * e;
        }
        g
    }

    fn laplacian(&self, domain: Domain, x: &[f64], t: f64) -> f64 {
        let (s, sx, sy, sxx, e, k) = Self::parts(x, t);
        let (sn, cs) = s.sin_cos();
        let second = |d: f64, dd: f64| -sn * d * d + cs * dd + 2.0 * k * cs * d + k * k * sn;
        let mut lap = second(sx, sxx);
        if x.len() > 1 {
            lap += second(sy, 0.0);
        }
        self.scale(domain) * lap * e
    }
}

/// u = c₀ + c₁ t + Σ_m b_m x_m, identical on both sides. Used for
/// consistency checks: linear in space and time.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolution {
    pub offset: f64,
    pub rate: f64,
    pub slope: Vec<f64>,
}

impl ExactSolution for LinearSolution {
    fn value(&self, _: Domain, x: &[f64], t: f64) -> f64 {
        self.offset + self.rate * t + x.iter().zip(&self.slope).map(|(a, b)| a * b).sum::<f64>()
    }

    fn time_derivative(&self, _: Domain, _: &[f64], _: f64) -> f64 {
        self.rate
    }

    fn gradient(&self, _: Domain, x: &[f64], _: f64) -> Vec<f64> {
        (0..x.len()).map(|m| self.slope.get(m).copied().unwrap_or(0.0)).collect()
    }

    fn laplacian(&self, _: Domain, _: &[f64], _: f64) -> f64 {
        0.0
    }
}

/// Volume source: w_t + a·∇w − εΔw on the left, v_t − κΔv on the right.
pub fn source(sol: &dyn ExactSolution, params: &PdeParams, domain: Domain, x: &[f64], t: f64) -> f64 {
    let ut = sol.time_derivative(domain, x, t);
    let lap = sol.laplacian(domain, x, t);
    match domain {
        Domain::Left => {
            let grad = sol.gradient(domain, x, t);
            let adv: f64 = params.advection.iter().zip(&grad).map(|(a, g)| a * g).sum();
            ut + adv - params.epsilon * lap
        }
        Domain::Right => ut - params.kappa * lap,
    }
}

/// Left boundary data g = ζW + ε n·∇W at a node with outward normal `normal`
/// and penalty coefficient `zeta`.
pub fn left_boundary_value(sol: &dyn ExactSolution, params: &PdeParams, x: &[f64], normal: &[f64], zeta: f64, t: f64) -> f64 {
    let grad = sol.gradient(Domain::Left, x, t);
    let flux: f64 = grad.iter().zip(normal).map(|(g, n)| g * n).sum();
    zeta * sol.value(Domain::Left, x, t) + params.epsilon * flux
}

/// Right boundary data h = V + φ n·∇V.
pub fn right_boundary_value(sol: &dyn ExactSolution, params: &PdeParams, x: &[f64], normal: &[f64], t: f64) -> f64 {
    let grad = sol.gradient(Domain::Right, x, t);
    let flux: f64 = grad.iter().zip(normal).map(|(g, n)| g * n).sum();
    sol.value(Domain::Right, x, t) + params.phi() * flux
}

/// Exact values at nodes given as per-axis coordinate arrays.
pub fn eval_on_nodes(sol: &dyn ExactSolution, domain: Domain, coords: &[Vec<f64>], t: f64) -> Vec<f64> {
    map_nodes(coords, |x| sol.value(domain, x, t))
}

/// Sources at nodes given as per-axis coordinate arrays.
pub fn source_on_nodes(sol: &dyn ExactSolution, params: &PdeParams, domain: Domain, coords: &[Vec<f64>], t: f64) -> Vec<f64> {
    map_nodes(coords, |x| source(sol, params, domain, x, t))
}

/// Exact left and right fields on the two node sets.
pub fn mms_eval(sol: &dyn ExactSolution, t: f64, left: &[Vec<f64>], right: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    (eval_on_nodes(sol, Domain::Left, left, t), eval_on_nodes(sol, Domain::Right, right, t))
}

/// Left and right sources on the two node sets.
pub fn mms_sources(
    sol: &dyn ExactSolution,
    params: &PdeParams,
    t: f64,
    left: &[Vec<f64>],
    right: &[Vec<f64>],
) -> (Vec<f64>, Vec<f64>) {
    (
        source_on_nodes(sol, params, Domain::Left, left, t),
        source_on_nodes(sol, params, Domain::Right, right, t),
    )
}

pub(crate) fn map_nodes(coords: &[Vec<f64>], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let n = coords.first().map_or(0, Vec::len);
    let mut x = vec![0.0; coords.len()];
    (0..n)
        .map(|k| {
            for (m, c) in coords.iter().enumerate() {
                x[m] = c[k];
            }
            f(&x)
        })
        .collect()
}

/// (u − u_ex)ᵀ W (u − u_ex) for a diagonal weight W.
pub fn weighted_error_sq(numeric: &[f64], exact: &[f64], weights: &[f64]) -> f64 {
    assert_eq!(numeric.len(), exact.len());
    assert_eq!(numeric.len(), weights.len());
    numeric.iter().zip(exact).zip(weights).map(|((u, e), w)| w * (u - e).powi(2)).sum()
}

/// sqrt of the summed J P̄-weighted squared errors over subdomains; each part
/// is (numeric, exact, J P̄ diagonal).
pub fn p_norm_error(parts: &[(&[f64], &[f64], &[f64])]) -> f64 {
    parts.iter().map(|(u, e, w)| weighted_error_sq(u, e, w)).sum::<f64>().sqrt()
}
