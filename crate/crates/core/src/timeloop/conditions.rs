//! Stability conditions on the interface penalties and the constructive
//! parameter selector.

use crate::assembly::SatParams;
use crate::geometry::TraceConstants;
use crate::physics::PdeParams;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Time-coupling scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "BE-EXT1")]
    BeExt1,
    #[serde(rename = "BE-EXT2")]
    BeExt2,
    #[serde(rename = "BEFE-EXT1")]
    BefeExt1,
    #[serde(rename = "BEFE-EXT2")]
    BefeExt2,
    #[serde(rename = "MONOLITHIC-BE")]
    MonolithicBe,
    #[serde(rename = "MONOLITHIC-BEFE")]
    MonolithicBefe,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::BeExt1,
        Scheme::BeExt2,
        Scheme::BefeExt1,
        Scheme::BefeExt2,
        Scheme::MonolithicBe,
        Scheme::MonolithicBefe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::BeExt1 => "BE-EXT1",
            Scheme::BeExt2 => "BE-EXT2",
            Scheme::BefeExt1 => "BEFE-EXT1",
            Scheme::BefeExt2 => "BEFE-EXT2",
            Scheme::MonolithicBe => "MONOLITHIC-BE",
            Scheme::MonolithicBefe => "MONOLITHIC-BEFE",
        }
    }

    pub fn is_monolithic(self) -> bool {
        matches!(self, Scheme::MonolithicBe | Scheme::MonolithicBefe)
    }

    /// Midpoint rule as a BE half step followed by reflection.
    pub fn is_midpoint(self) -> bool {
        matches!(self, Scheme::BefeExt1 | Scheme::BefeExt2 | Scheme::MonolithicBefe)
    }

    /// Extrapolation order of the interface guess (0 for monolithic).
    pub fn extrapolation_order(self) -> usize {
        match self {
            Scheme::BeExt1 | Scheme::BefeExt1 => 1,
            Scheme::BeExt2 | Scheme::BefeExt2 => 2,
            _ => 0,
        }
    }

    /// The same time discretization coupled monolithically.
    pub fn monolithic_counterpart(self) -> Scheme {
        if self.is_midpoint() {
            Scheme::MonolithicBefe
        } else {
            Scheme::MonolithicBe
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_uppercase().replace('_', "-");
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == key)
            .ok_or_else(|| format!("unknown scheme {s:?}; expected one of BE-EXT1, BE-EXT2, BEFE-EXT1, BEFE-EXT2, MONOLITHIC-BE, MONOLITHIC-BEFE"))
    }
}

/// Free constants C₁, C₂ of the step-size conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityConstants {
    pub c1: f64,
    pub c2: f64,
}

impl StabilityConstants {
    /// C₁ = C*·ρ_L, C₂ = C*·min(ρ_L, ρ_R).
    pub fn from_c_star(c_star: f64, left: &TraceConstants, right: &TraceConstants) -> Self {
        Self { c1: c_star * left.rho, c2: c_star * left.rho.min(right.rho) }
    }
}

/// Families of conditions, one per stability result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConditionGroup {
    /// Partitioned BE-EXT1 in curvilinear coordinates.
    BeExt1,
    /// BE-EXT1 with both normal-flux penalties switched off.
    ZeroFluxPenalty,
    /// Partitioned BE-EXT2.
    BeExt2,
    /// Partitioned BE-EXT1 in one dimension.
    OneDim,
}

impl ConditionGroup {
    pub fn label(self) -> &'static str {
        match self {
            ConditionGroup::BeExt1 => "BE-EXT1",
            ConditionGroup::ZeroFluxPenalty => "BE-EXT1 (gamma2 = 0)",
            ConditionGroup::BeExt2 => "BE-EXT2",
            ConditionGroup::OneDim => "1D partitioned",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionEntry {
    pub name: &'static str,
    pub group: ConditionGroup,
    pub description: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    /// Whether the inequality is strict.
    pub strict: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub entries: Vec<ConditionEntry>,
    /// Whether all normal-flux penalties are zero, enabling the relaxed group.
    pub zero_flux_penalty: bool,
    pub dim: usize,
}

/// Everything the conditions depend on.
#[derive(Debug, Clone, Copy)]
pub struct ConditionInputs<'a> {
    pub sat: &'a SatParams,
    pub dt: f64,
    pub left: &'a TraceConstants,
    pub right: &'a TraceConstants,
    pub params: &'a PdeParams,
    pub constants: StabilityConstants,
    pub dim: usize,
}

pub fn check_conditions(inputs: &ConditionInputs<'_>) -> ConditionReport {
    let ConditionInputs { sat, dt, left, right, params, constants, dim } = *inputs;
    let (eps, kap) = (params.epsilon, params.kappa);
    let (rl, rr) = (left.rho, right.rho);
    let g1 = sat.gamma1;
    let mut entries = Vec::new();
    let mut push = |name, group, description, lhs: f64, rhs: f64, strict: bool| {
        let pass = if strict { lhs < rhs } else { lhs <= rhs * (1.0 + 1e-12) };
        entries.push(ConditionEntry { name, group, description, lhs, rhs, strict, pass });
    };
    use ConditionGroup::*;
    push("a1", BeExt1, "eps/rho_L <= gamma1", eps / rl, g1, false);
    push("a1", BeExt1, "gamma1 <= C1/dt", g1, constants.c1 / dt, false);
    push("a2", BeExt1, "gamma2 <= C2/(kappa^2 dt)", sat.gamma2_min(), constants.c2 / (kap * kap * dt), false);
    let spread_limit = rl.min(rr) / eps.max(kap);
    push("a3", BeExt1, "|gamma2_L - gamma2_R| <= min(rho_L, rho_R)/max(eps, kappa)", sat.gamma2_spread(), spread_limit, false);
    push("con1", ZeroFluxPenalty, "eps/(2 rho_L) <= gamma1", eps / (2.0 * rl), g1, false);
    push("con1", ZeroFluxPenalty, "gamma1 <= C1/dt", g1, constants.c1 / dt, false);
    push("b0", BeExt2, "rho_R < 1", rr, 1.0, true);
    push("b1", BeExt2, "eps <= gamma1 rho_L (1 - rho_R)", eps, g1 * rl * (1.0 - rr), false);
    push("b2", BeExt2, "dt gamma1 (1 + 4/rho_R^2) <= 1", dt * g1 * (1.0 + 4.0 / (rr * rr)), 1.0, false);
    push("b3", BeExt2, "max(gamma2_L, gamma2_R) <= 2 rho_R/(5 kappa)", sat.gamma2_max(), 2.0 * rr / (5.0 * kap), false);
    push("b4", BeExt2, "|gamma2_L - gamma2_R| <= min(rho_L, rho_R)/max(eps, kappa)", sat.gamma2_spread(), spread_limit, false);
    push("da1", OneDim, "eps/rho <= gamma1", eps / rl, g1, false);
    push("da1", OneDim, "gamma1 <= C1/dt", g1, constants.c1 / dt, false);
    push("da2", OneDim, "gamma2 <= C2/(kappa^2 dt)", sat.gamma2_min(), constants.c2 / (kap * kap * dt), false);
    ConditionReport {
        entries,
        zero_flux_penalty: sat.gamma2_left == 0.0 && sat.gamma2_right == 0.0,
        dim,
    }
}

impl ConditionReport {
    pub fn group(&self, group: ConditionGroup) -> impl Iterator<Item = &ConditionEntry> {
        self.entries.iter().filter(move |e| e.group == group)
    }

    pub fn group_passes(&self, group: ConditionGroup) -> bool {
        self.group(group).all(|e| e.pass)
    }

    /// Names of failing conditions in `group`, without repeats.
    pub fn failing(&self, group: ConditionGroup) -> Vec<&'static str> {
        let mut names: Vec<&'static str> = Vec::new();
        for e in self.group(group).filter(|e| !e.pass) {
            if !names.contains(&e.name) {
                names.push(e.name);
            }
        }
        names
    }

    /// Whether the stability result for `scheme` is guaranteed. Schemes
    /// without a conditional result (monolithic, midpoint) always pass.
    pub fn scheme_passes(&self, scheme: Scheme) -> bool {
        self.violations(scheme).is_empty()
    }

    /// Failing condition names relevant to `scheme`.
    pub fn violations(&self, scheme: Scheme) -> Vec<&'static str> {
        match scheme {
            Scheme::BeExt1 if self.dim == 1 => self.failing(ConditionGroup::OneDim),
            Scheme::BeExt1 => {
                if self.zero_flux_penalty && self.group_passes(ConditionGroup::ZeroFluxPenalty) {
                    Vec::new()
                } else {
                    self.failing(ConditionGroup::BeExt1)
                }
            }
            Scheme::BeExt2 => self.failing(ConditionGroup::BeExt2),
            _ => Vec::new(),
        }
    }

    /// Whether the BE-EXT2 result can apply at all (ρ_R < 1).
    pub fn ext2_applicable(&self) -> bool {
        self.entries.iter().any(|e| e.name == "b0" && e.pass)
    }
}

/// Output of the constructive parameter selection.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSelection {
    pub sat: SatParams,
    pub dt_max: f64,
    pub constants: StabilityConstants,
}

/// γ₁ = ε/ρ_L, γ₂^L = γ₂^R = `gamma2`, and the largest step satisfying the
/// BE-EXT1 step-size conditions with C₁ = C*ρ_L, C₂ = C*min(ρ_L, ρ_R).
pub fn select_parameters(
    left: &TraceConstants,
    right: &TraceConstants,
    params: &PdeParams,
    c_star: f64,
    gamma2: f64,
) -> ParameterSelection {
    let constants = StabilityConstants::from_c_star(c_star, left, right);
    let gamma1 = params.epsilon / left.rho;
    let mut dt_max = constants.c1 / gamma1;
    if gamma2 > 0.0 {
        dt_max = dt_max.min(constants.c2 / (params.kappa * params.kappa * gamma2));
    }
    let sat = SatParams { gamma1, gamma2_left: gamma2, gamma2_right: gamma2 };
    ParameterSelection { sat, dt_max, constants }
}
