//! Discrete energies and the runtime checks of the energy estimates.

use crate::assembly::{CoupledSystem, Forcing};
use crate::linalg::weighted_norm_sq;
use crate::physics::Domain;
use crate::timeloop::conditions::Scheme;
use serde::Serialize;

/// Absolute slack allowed in the energy inequalities, scaled by the bound
/// when it exceeds one.
pub const ENERGY_SLACK: f64 = 1e-10;

/// Which energy estimate the ledger asserts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Estimate {
    /// ‖w‖² + ‖v‖² + δtγ₂ΣE₂ + δtγ₁F₁ + κ²δtγ₂F₂ ≤ S.
    BeExt1,
    /// ‖w‖² + (1 − δtγ₁)‖v‖² ≤ H, from the second step on.
    BeExt2,
    /// ‖w‖² + ‖v‖² ≤ ‖q_L‖² + ‖q_R‖² + Σ data.
    Monolithic,
}

impl Estimate {
    /// The estimate that holds for `scheme` with `n_loop` sweeps, if any.
    pub fn for_scheme(scheme: Scheme, n_loop: usize, system: &CoupledSystem) -> Option<Self> {
        match scheme {
            Scheme::BeExt1 if n_loop == 1 => Some(Estimate::BeExt1),
            Scheme::BeExt2 if n_loop == 1 => Some(Estimate::BeExt2),
            Scheme::MonolithicBe if system.sat.gamma2_left == system.sat.gamma2_right => Some(Estimate::Monolithic),
            _ => None,
        }
    }
}

/// Interface energies of a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InterfaceEnergies {
    /// ‖R_α v − R_β w‖² in the Ĵ_Σ P̄⊥ norm.
    pub jump: f64,
    /// ‖κ F_R v − ε F_L w‖² in the Ĵ_Σ⁻¹ P̄⊥ norm.
    pub flux_jump: f64,
    /// ‖R_α v‖² in the Ĵ_Σ P̄⊥ norm.
    pub trace: f64,
    /// ‖F_R v‖² in the Ĵ_Σ⁻¹ P̄⊥ norm.
    pub flux_trace: f64,
}

pub fn interface_energies(system: &CoupledSystem, w: &[f64], v: &[f64]) -> InterfaceEnergies {
    let i = &system.interface;
    let (eps, kap) = (system.params.epsilon, system.params.kappa);
    let rw = i.restrict_left.matvec(w);
    let rv = i.restrict_right.matvec(v);
    let fw = i.flux_left.matvec(w);
    let fv = i.flux_right.matvec(v);
    let jump: Vec<f64> = rv.iter().zip(&rw).map(|(a, b)| a - b).collect();
    let flux_jump: Vec<f64> = fv.iter().zip(&fw).map(|(a, b)| kap * a - eps * b).collect();
    InterfaceEnergies {
        jump: weighted_norm_sq(&jump, &i.weight),
        flux_jump: weighted_norm_sq(&flux_jump, &i.inverse_weight),
        trace: weighted_norm_sq(&rv, &i.weight),
        flux_trace: weighted_norm_sq(&fv, &i.inverse_weight),
    }
}

/// Energy injected by boundary data over one step of length `dt`.
pub fn boundary_data_energy(system: &CoupledSystem, forcing: &Forcing, dt: f64) -> f64 {
    let left: f64 = system
        .left_faces
        .iter()
        .zip(&forcing.left_data)
        .map(|(f, g)| f.data_energy_rate(g, Domain::Left))
        .sum();
    let right: f64 = system
        .right_faces
        .iter()
        .zip(&forcing.right_data)
        .map(|(f, h)| f.data_energy_rate(h, Domain::Right))
        .sum();
    dt * (left + right)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyRecord {
    pub step: usize,
    pub time: f64,
    pub left: f64,
    pub right: f64,
    /// ‖w‖² + ‖v‖².
    pub total: f64,
    /// total + δtγ₁F₁ + κ²δtγ₂F₂.
    pub modified: f64,
    pub jump: f64,
    pub flux_jump: f64,
    pub trace: f64,
    pub flux_trace: f64,
    /// Data energy G of this step.
    pub data: f64,
    /// S = Σ_{j ≤ step} G^j.
    pub accumulated: f64,
    pub lhs: f64,
    pub bound: f64,
    pub margin: f64,
    /// None when no estimate is asserted at this step.
    pub pass: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct EnergyLedger {
    pub estimate: Option<Estimate>,
    pub records: Vec<EnergyRecord>,
    dt: f64,
    gamma1: f64,
    gamma2: f64,
    kappa: f64,
    one_dim: bool,
    initial_norm: f64,
    data_sum: f64,
    accumulated: f64,
    first_accumulated: f64,
    accumulated_sum: f64,
    weighted_sum: f64,
    flux_jump_sum: f64,
}

impl EnergyLedger {
    /// Starts the ledger from the initial state; record 0 holds G⁰.
    pub fn new(system: &CoupledSystem, estimate: Option<Estimate>, dt: f64, w0: &[f64], v0: &[f64]) -> Self {
        let gamma1 = system.sat.gamma1;
        let gamma2 = system.sat.gamma2_min();
        let kappa = system.params.kappa;
        let left = weighted_norm_sq(w0, &system.left.mass);
        let right = weighted_norm_sq(v0, &system.right.mass);
        let ie = interface_energies(system, w0, v0);
        let g0 = left + right + dt * gamma1 * ie.trace + kappa * kappa * dt * gamma2 * ie.flux_trace;
        let record = EnergyRecord {
            step: 0,
            time: 0.0,
            left,
            right,
            total: left + right,
            modified: g0,
            jump: ie.jump,
            flux_jump: ie.flux_jump,
            trace: ie.trace,
            flux_trace: ie.flux_trace,
            data: g0,
            accumulated: g0,
            lhs: g0,
            bound: g0,
            margin: 0.0,
            pass: None,
        };
        Self {
            estimate,
            records: vec![record],
            dt,
            gamma1,
            gamma2,
            kappa,
            one_dim: system.left.dim() == 1,
            initial_norm: left + right,
            data_sum: 0.0,
            accumulated: g0,
            first_accumulated: g0,
            accumulated_sum: 0.0,
            weighted_sum: 0.0,
            flux_jump_sum: 0.0,
        }
    }

    /// Adds the state after step `step` with the boundary data used by it.
    pub fn update(&mut self, system: &CoupledSystem, step: usize, time: f64, w: &[f64], v: &[f64], forcing: &Forcing) -> &EnergyRecord {
        let left = weighted_norm_sq(w, &system.left.mass);
        let right = weighted_norm_sq(v, &system.right.mass);
        let ie = interface_energies(system, w, v);
        let data = boundary_data_energy(system, forcing, self.dt);
        self.data_sum += data;
        self.accumulated += data;
        if step == 1 {
            self.first_accumulated = self.accumulated;
        }
        // H^{k+1} = S^{k+1} + (k+1) S^1 + Σ_{j=1}^{k} (k+1−j) S^j with k+1 = step.
        let previous_sum = self.accumulated_sum;
        self.weighted_sum += previous_sum;
        self.accumulated_sum += self.accumulated;
        self.flux_jump_sum += ie.flux_jump;

        let (dt, g1, g2, k2) = (self.dt, self.gamma1, self.gamma2, self.kappa * self.kappa);
        let total = left + right;
        let modified = total + dt * g1 * ie.trace + k2 * dt * g2 * ie.flux_trace;
        let (lhs, bound, active) = match self.estimate {
            Some(Estimate::BeExt1) => {
                let dissipation = if self.one_dim { 0.0 } else { dt * g2 * self.flux_jump_sum };
                (modified + dissipation, self.accumulated, true)
            }
            Some(Estimate::BeExt2) => {
                let h = self.accumulated + step as f64 * self.first_accumulated + self.weighted_sum;
                (left + (1.0 - dt * g1) * right, h, step >= 2)
            }
            Some(Estimate::Monolithic) => (total, self.initial_norm + self.data_sum, true),
            None => (total, f64::INFINITY, false),
        };
        let margin = bound - lhs;
        let pass = active.then(|| margin >= -ENERGY_SLACK * bound.abs().max(1.0) || bound == f64::INFINITY);
        self.records.push(EnergyRecord {
            step,
            time,
            left,
            right,
            total,
            modified,
            jump: ie.jump,
            flux_jump: ie.flux_jump,
            trace: ie.trace,
            flux_trace: ie.flux_trace,
            data,
            accumulated: self.accumulated,
            lhs,
            bound,
            margin,
            pass,
        });
        self.records.last().expect("record just pushed")
    }

    pub fn last(&self) -> &EnergyRecord {
        self.records.last().expect("ledger starts with the initial record")
    }

    /// First step whose asserted estimate failed.
    pub fn first_violation(&self) -> Option<&EnergyRecord> {
        self.records.iter().find(|r| r.pass == Some(false))
    }

    pub fn all_pass(&self) -> bool {
        self.first_violation().is_none()
    }

    /// Smallest margin over asserted steps.
    pub fn worst_margin(&self) -> Option<f64> {
        self.records.iter().filter(|r| r.pass.is_some()).map(|r| r.margin).reduce(f64::min)
    }
}
