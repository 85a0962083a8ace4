//! Time integration of the coupled system: partitioned and monolithic
//! backward Euler, the midpoint rule as BE half step plus reflection,
//! interface extrapolation and the energy ledger.

pub mod conditions;
pub mod energy;

pub use conditions::{
    check_conditions, select_parameters, ConditionEntry, ConditionGroup, ConditionInputs, ConditionReport,
    ParameterSelection, Scheme, StabilityConstants,
};
pub use energy::{EnergyLedger, EnergyRecord, Estimate, InterfaceEnergies};

use crate::assembly::{assemble_monolithic, AssemblyError, CoupledSystem, Forcing};
use crate::linalg::{lu_factor, LinalgError, LuFactorization, SparseMatrix};
use crate::physics::{eval_on_nodes, Domain, ExactSolution};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TimeloopError {
    #[error("invalid time configuration: {0}")]
    Config(String),
    #[error("non-finite solution at step {step} (last finite energy {energy:e})")]
    StabilityFailure { step: usize, energy: f64 },
    #[error("stability conditions violated for {scheme}: {}", names.join(", "))]
    ConditionViolated { scheme: Scheme, names: Vec<&'static str> },
    #[error("energy estimate {estimate:?} violated at step {step} (margin {margin:e})")]
    EnergyViolation { estimate: Estimate, step: usize, margin: f64 },
    #[error("linear solver failure: {0}")]
    Solver(#[from] LinalgError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
}

/// Which subdomain is solved first in a partitioned sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepOrder {
    #[default]
    LeftFirst,
    RightFirst,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeConfig {
    pub dt: f64,
    pub steps: usize,
    pub scheme: Scheme,
    pub n_loop: usize,
    pub sweep: SweepOrder,
    /// Abort on violated stability conditions or energy estimates.
    pub strict: bool,
}

impl TimeConfig {
    pub fn new(dt: f64, steps: usize, scheme: Scheme, n_loop: usize) -> Self {
        Self { dt, steps, scheme, n_loop, sweep: SweepOrder::LeftFirst, strict: false }
    }

    /// Step count reaching `final_time` with step `dt`, rounded to nearest.
    pub fn steps_for(final_time: f64, dt: f64) -> usize {
        (final_time / dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), TimeloopError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(TimeloopError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_loop == 0 {
            return Err(TimeloopError::Config("n_loop must be at least 1".into()));
        }
        Ok(())
    }
}

/// Current solution, previous interface level and time.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    pub w: Vec<f64>,
    pub v: Vec<f64>,
    /// w at the previous level: t_{k−1} for BE, t_{k−½} for the midpoint rule.
    pub w_prev: Vec<f64>,
    /// v at the previous level.
    pub v_prev: Vec<f64>,
    pub step: usize,
    pub time: f64,
}

impl CoupledState {
    /// Initial state with the history set to the initial data, so the first
    /// second-order extrapolation returns the current value.
    pub fn new(w0: Vec<f64>, v0: Vec<f64>) -> Self {
        Self { w_prev: w0.clone(), v_prev: v0.clone(), w: w0, v: v0, step: 0, time: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().chain(&self.v).all(|x| x.is_finite())
    }
}

/// Interface guess of order `order` from the current and previous level.
/// Second order needs a previous step; otherwise the current value is used.
pub fn extrapolate(current: &[f64], previous: &[f64], order: usize, steps_taken: usize) -> Vec<f64> {
    if order >= 2 && steps_taken >= 1 {
        current.iter().zip(previous).map(|(c, p)| 2.0 * c - p).collect()
    } else {
        current.to_vec()
    }
}

enum Factors {
    Partitioned { left: LuFactorization, right: LuFactorization },
    Monolithic(LuFactorization),
}

/// Steps a coupled system with factorizations computed once.
pub struct Stepper<'a> {
    system: &'a CoupledSystem,
    config: TimeConfig,
    factors: Factors,
    /// Diagonal shift of the implicit stage: 1/δt for BE, 2/δt for the midpoint half step.
    shift: f64,
}

fn shifted(a: &SparseMatrix, c: f64) -> SparseMatrix {
    SparseMatrix::lin_comb(c, &SparseMatrix::identity(a.rows()), -1.0, a)
}

impl<'a> Stepper<'a> {
    pub fn new(system: &'a CoupledSystem, config: TimeConfig) -> Result<Self, TimeloopError> {
        config.validate()?;
        let shift = if config.scheme.is_midpoint() { 2.0 / config.dt } else { 1.0 / config.dt };
        let b = &system.blocks;
        let factors = if config.scheme.is_monolithic() {
            Factors::Monolithic(lu_factor(&assemble_monolithic(b, shift)?)?)
        } else {
            Factors::Partitioned { left: lu_factor(&shifted(&b.a11, shift))?, right: lu_factor(&shifted(&b.a22, shift))? }
        };
        Ok(Self { system, config, factors, shift })
    }

    pub fn config(&self) -> &TimeConfig {
        &self.config
    }

    pub fn system(&self) -> &CoupledSystem {
        self.system
    }

    /// Time at which data enter the implicit stage of the step from `time`.
    pub fn stage_time(&self, time: f64) -> f64 {
        if self.config.scheme.is_midpoint() {
            time + 0.5 * self.config.dt
        } else {
            time + self.config.dt
        }
    }

    /// One implicit stage from (w, v) with forcing `f`; returns the stage
    /// solution. `w_guess`, `v_guess` are the extrapolated interface values.
    fn stage(&self, w: &[f64], v: &[f64], w_guess: &[f64], v_guess: &[f64], f: &Forcing) -> (Vec<f64>, Vec<f64>) {
        let b = &self.system.blocks;
        let c = self.shift;
        let rhs = |u: &[f64], forcing: &[f64]| -> Vec<f64> { u.iter().zip(forcing).map(|(x, g)| c * x + g).collect() };
        match &self.factors {
            Factors::Monolithic(lu) => {
                let mut x = rhs(w, &f.left);
                x.extend(rhs(v, &f.right));
                lu.solve_in_place(&mut x);
                let v_new = x.split_off(w.len());
                (x, v_new)
            }
            Factors::Partitioned { left, right } => {
                let solve_left = |v_star: &[f64]| {
                    let mut x = rhs(w, &f.left);
                    b.a12.matvec_add(1.0, v_star, &mut x);
                    left.solve_in_place(&mut x);
                    x
                };
                let solve_right = |w_star: &[f64]| {
                    let mut x = rhs(v, &f.right);
                    b.a21.matvec_add(1.0, w_star, &mut x);
                    right.solve_in_place(&mut x);
                    x
                };
                match self.config.sweep {
                    SweepOrder::LeftFirst => {
                        let mut v_star = v_guess.to_vec();
                        let mut w_new = Vec::new();
                        for _ in 0..self.config.n_loop {
                            w_new = solve_left(&v_star);
                            v_star = solve_right(&w_new);
                        }
                        (w_new, v_star)
                    }
                    SweepOrder::RightFirst => {
                        let mut w_star = w_guess.to_vec();
                        let mut v_new = Vec::new();
                        for _ in 0..self.config.n_loop {
                            v_new = solve_right(&w_star);
                            w_star = solve_left(&v_new);
                        }
                        (w_star, v_new)
                    }
                }
            }
        }
    }

    /// Advances `state` by one step using `forcing` evaluated at
    /// [`Stepper::stage_time`].
    pub fn step_with(&self, state: &mut CoupledState, forcing: &Forcing) -> Result<(), TimeloopError> {
        let order = self.config.scheme.extrapolation_order();
        let v_guess = extrapolate(&state.v, &state.v_prev, order, state.step);
        let w_guess = extrapolate(&state.w, &state.w_prev, order, state.step);
        let (w_stage, v_stage) = self.stage(&state.w, &state.v, &w_guess, &v_guess, forcing);
        if self.config.scheme.is_midpoint() {
            let reflect = |stage: &[f64], old: &[f64]| stage.iter().zip(old).map(|(s, o)| 2.0 * s - o).collect::<Vec<_>>();
            let w_new = reflect(&w_stage, &state.w);
            let v_new = reflect(&v_stage, &state.v);
            state.w_prev = w_stage;
            state.v_prev = v_stage;
            state.w = w_new;
            state.v = v_new;
        } else {
            state.w_prev = std::mem::replace(&mut state.w, w_stage);
            state.v_prev = std::mem::replace(&mut state.v, v_stage);
        }
        state.step += 1;
        state.time = state.step as f64 * self.config.dt;
        if !state.is_finite() {
            return Err(TimeloopError::StabilityFailure { step: state.step, energy: f64::NAN });
        }
        Ok(())
    }

    /// One step with forcing from `solution` (zero forcing when None).
    pub fn step(&self, state: &mut CoupledState, solution: Option<&dyn ExactSolution>) -> Result<Forcing, TimeloopError> {
        let forcing = self.system.forcing(solution, self.stage_time(state.time));
        self.step_with(state, &forcing)?;
        Ok(forcing)
    }
}

/// Result of a complete run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: CoupledState,
    pub ledger: EnergyLedger,
    /// P-norm error against the exact solution at the final time.
    pub error: Option<f64>,
    pub conditions: Option<ConditionReport>,
}

/// Initial data: the exact solution at t = 0, or zero.
pub fn initial_state(system: &CoupledSystem, solution: Option<&dyn ExactSolution>) -> CoupledState {
    match solution {
        Some(sol) => CoupledState::new(
            eval_on_nodes(sol, Domain::Left, &system.left.coords, 0.0),
            eval_on_nodes(sol, Domain::Right, &system.right.coords, 0.0),
        ),
        None => CoupledState::new(vec![0.0; system.left.len()], vec![0.0; system.right.len()]),
    }
}

/// P-norm error of (w, v) against `solution` at `time`.
pub fn solution_error(system: &CoupledSystem, solution: &dyn ExactSolution, w: &[f64], v: &[f64], time: f64) -> f64 {
    let we = eval_on_nodes(solution, Domain::Left, &system.left.coords, time);
    let ve = eval_on_nodes(solution, Domain::Right, &system.right.coords, time);
    crate::physics::p_norm_error(&[(w, &we, &system.left.mass), (v, &ve, &system.right.mass)])
}

/// Runs `config.steps` steps from `initial`. In strict mode violated
/// stability conditions (given `conditions`) or energy estimates abort.
pub fn run(
    system: &CoupledSystem,
    config: &TimeConfig,
    initial: CoupledState,
    solution: Option<&dyn ExactSolution>,
    conditions: Option<ConditionReport>,
) -> Result<RunOutcome, TimeloopError> {
    if config.strict {
        if let Some(report) = &conditions {
            let names = report.violations(config.scheme);
            if !names.is_empty() {
                return Err(TimeloopError::ConditionViolated { scheme: config.scheme, names });
            }
        }
    }
    let stepper = Stepper::new(system, config.clone())?;
    let estimate = match solution {
        None => Estimate::for_scheme(config.scheme, config.n_loop, system),
        Some(_) => None,
    };
    let mut ledger = EnergyLedger::new(system, estimate, config.dt, &initial.w, &initial.v);
    let mut state = initial;
    for _ in 0..config.steps {
        let last_energy = ledger.last().total;
        let forcing = match stepper.step(&mut state, solution) {
            Err(TimeloopError::StabilityFailure { step, .. }) => {
                return Err(TimeloopError::StabilityFailure { step, energy: last_energy })
            }
            other => other?,
        };
        let record = ledger.update(system, state.step, state.time, &state.w, &state.v, &forcing);
        if config.strict && record.pass == Some(false) {
            return Err(TimeloopError::EnergyViolation {
                estimate: estimate.expect("pass flag implies an estimate"),
                step: record.step,
                margin: record.margin,
            });
        }
    }
    let error = solution.map(|sol| solution_error(system, sol, &state.w, &state.v, state.time));
    Ok(RunOutcome { state, ledger, error, conditions })
}
