// Copyright 2026 polarlandscape Contributors
// SPDX-License-Identifier: Apache-2.0

//! Singular controls.
//!
//! A field is singular when some `B ∈ su(n)` is orthogonal to every first
//! variation of the end point, `⟨U_t†(iH1 + 2E(t)·iH2)U_t, B⟩ = 0` for all t.
//! With `α(t) = ⟨U_t†·iH1·U_t, B⟩ / ⟨U_t†·iH2·U_t, B⟩` this fixes
//! `E(t) = −α(t)/2`, and feeding that back into the dynamics gives an
//! autonomous ODE for `U_t` that is integrated here with RK4.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dynamics::{ControlField, HamiltonianModel, Propagator, Trajectory};
use crate::error::{invalid, LandscapeError, Result};
use crate::landscape::{field_fidelity, left_gradient, randomized_ascent, AscentConfig, GoalGate};
use crate::matrix::{
    derive_seed, inner_unchecked, mul_into, random_su_with, seeded_rng, ComplexMatrix, SuGenerator, Unitary,
};

/// Relative size of `|⟨U†·iH2·U, B⟩|` below which the control is treated as blown up.
pub const BLOW_UP_THRESHOLD: f64 = 1e-8;
/// Local RK4 error above which a step is treated as an unresolved blow-up.
pub const STEP_ERROR_LIMIT: f64 = 1e-5;

/// Drift from unitarity that triggers a polar re-projection.
const PROJECTION_TRIGGER: f64 = 1e-10;

/// Smallest accepted step count for [`integrate_singular`].
pub const MIN_STEPS: usize = 100;

/// Unit-norm direction `B` in su(n).
#[derive(Clone, Debug, PartialEq)]
pub struct SingularProbe {
    b: SuGenerator,
}

impl SingularProbe {
    /// Normalizes `b`; the singular control does not depend on its length.
    pub fn new(b: SuGenerator) -> Result<Self> {
        if !b.is_traceless() {
            return Err(invalid("singular probe must be traceless"));
        }
        let norm = b.norm();
        if !(norm > 1e-300) || !norm.is_finite() {
            return Err(LandscapeError::DegenerateProbe("probe has zero norm".into()));
        }
        Ok(Self { b: b.scaled(1.0 / norm) })
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            b: random_su_with(n, rng, 1.0)?,
        })
    }

    pub fn direction(&self) -> &SuGenerator {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.b.dim()
    }
}

#[derive(Clone, Debug)]
pub struct SingularSolution {
    pub trajectory: Trajectory,
    /// Piecewise-constant version of the control, sampled at segment midpoints.
    pub control: ControlField,
    /// `E(t_j)` at the `steps + 1` grid points.
    pub grid_control: Vec<f64>,
    /// `max_j |⟨U_j†(iH1 + 2E_j·iH2)U_j, B⟩|` on the integration grid.
    pub defect: f64,
    pub blow_up_times: Vec<f64>,
    /// `min_j |⟨U_j†·iH2·U_j, B⟩|`.
    pub denominator_floor: f64,
    /// Largest step-doubling estimate `‖U_h − U_{h/2,h/2}‖_F` of the local error;
    /// zero for the unchecked solutions of an unsuccessful critical search.
    pub step_error: f64,
}

impl SingularSolution {
    pub fn has_blow_up(&self) -> bool {
        !self.blow_up_times.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.grid_control.len() - 1
    }

    pub fn total_time(&self) -> f64 {
        self.control.total_time()
    }

    pub fn endpoint(&self) -> &Unitary {
        self.trajectory.endpoint()
    }
}

/// Numerator and denominator pairings at `U`, with `⟨U†XU, B⟩ = ⟨X, U·B·U†⟩`.
struct Pairing<'a> {
    h1: &'a ComplexMatrix,
    h2: &'a ComplexMatrix,
    b: &'a ComplexMatrix,
    tmp: ComplexMatrix,
    conj: ComplexMatrix,
}

impl<'a> Pairing<'a> {
    fn new(h1: &'a ComplexMatrix, h2: &'a ComplexMatrix, b: &'a ComplexMatrix) -> Self {
        let n = b.dim();
        Self {
            h1,
            h2,
            b,
            tmp: ComplexMatrix::zeros(n),
            conj: ComplexMatrix::zeros(n),
        }
    }

    fn at(&mut self, u: &ComplexMatrix) -> (f64, f64) {
        mul_into(u, self.b, &mut self.tmp);
        let ud = u.adjoint();
        mul_into(&self.tmp, &ud, &mut self.conj);
        (inner_unchecked(self.h1, &self.conj), inner_unchecked(self.h2, &self.conj))
    }
}

/// Largest `|E|` the grid resolves: `‖iH1‖·E + ‖iH2‖·E² = 1/h`.
fn control_ceiling(model: &HamiltonianModel, h: f64) -> f64 {
    let a = model.control().norm();
    let b = model.polarizability().map_or(0.0, |p| p.norm());
    if b == 0.0 {
        return 1.0 / (a * h);
    }
    (-a + (a * a + 4.0 * b / h).sqrt()) / (2.0 * b)
}

struct Rk4<'m> {
    model: &'m HamiltonianModel,
    floor: f64,
    ceiling: f64,
    gen: ComplexMatrix,
    ks: [ComplexMatrix; 4],
    stage: ComplexMatrix,
}

impl Rk4<'_> {
    /// Advances `u` by one RK4 step of length `h`; true when any stage hit a
    /// blow-up condition.
    fn step(&mut self, pairing: &mut Pairing<'_>, u: &mut ComplexMatrix, h: f64, previous_den: f64) -> bool {
        let mut flagged = false;
        for s in 0..4 {
            let coeff = match s {
                0 => 0.0,
                1 | 2 => 0.5 * h,
                _ => h,
            };
            self.stage.as_mut_slice().copy_from_slice(u.as_slice());
            if s > 0 {
                self.stage.axpy(coeff, &self.ks[s - 1]);
            }
            let (num, den) = pairing.at(&self.stage);
            let c = singular_control(num, den, self.floor, self.ceiling);
            flagged |= c.flagged || c.denominator.signum() != previous_den.signum();
            self.model.scaled_generator_into(c.value, 1.0, &mut self.gen);
            mul_into(&self.gen, &self.stage, &mut self.ks[s]);
        }
        for (s, w) in [1.0, 2.0, 2.0, 1.0].iter().enumerate() {
            u.axpy(h * w / 6.0, &self.ks[s]);
        }
        flagged
    }
}

struct StageControl {
    value: f64,
    denominator: f64,
    flagged: bool,
}

fn singular_control(num: f64, den: f64, floor: f64, ceiling: f64) -> StageControl {
    let raw = -num / (2.0 * den);
    if den.abs() < floor || !raw.is_finite() || raw.abs() > ceiling {
        let sign = if raw.is_nan() {
            1.0
        } else {
            raw.signum()
        };
        StageControl {
            value: sign * ceiling,
            denominator: den,
            flagged: true,
        }
    } else {
        StageControl {
            value: raw,
            denominator: den,
            flagged: false,
        }
    }
}

/// Integrates the singular trajectory for `probe` from `U_0 = I` with `steps`
/// fixed RK4 steps and extracts `E(t) = −α(t)/2`.
///
/// A step is flagged as a blow-up when the denominator pairing falls below
/// `BLOW_UP_THRESHOLD·‖iH2‖`, changes sign, or the control exceeds what the
/// grid can resolve; the control is clamped there and integration continues.
/// Steps whose step-doubling error estimate exceeds `STEP_ERROR_LIMIT` are
/// flagged as well, since the grid no longer follows a near-singular spike.
pub fn integrate_singular(
    model: &HamiltonianModel,
    probe: &SingularProbe,
    total_time: f64,
    steps: usize,
) -> Result<SingularSolution> {
    integrate(model, probe, total_time, steps, true)
}

fn integrate(
    model: &HamiltonianModel,
    probe: &SingularProbe,
    total_time: f64,
    steps: usize,
    estimate_error: bool,
) -> Result<SingularSolution> {
    let h2 = model
        .polarizability()
        .ok_or_else(|| LandscapeError::UnsupportedModel("singular controls need a polarizability term".into()))?;
    if probe.dim() != model.dim() {
        return Err(invalid("probe and model dimensions differ"));
    }
    if steps < MIN_STEPS {
        return Err(invalid(format!("integrate_singular needs at least {MIN_STEPS} steps")));
    }
    if !(total_time > 0.0 && total_time.is_finite()) {
        return Err(invalid("total time must be positive"));
    }
    let n = model.dim();
    let h = total_time / steps as f64;
    let floor = BLOW_UP_THRESHOLD * h2.norm();
    let ceiling = control_ceiling(model, h);
    let mut pairing = Pairing::new(model.control().matrix(), h2.matrix(), probe.direction().matrix());

    let (num0, den0) = pairing.at(&ComplexMatrix::identity(n));
    if den0.abs() < floor {
        return Err(LandscapeError::DegenerateProbe(format!(
            "⟨iH2, B⟩ = {den0:e} vanishes at t = 0"
        )));
    }

    let mut stepper = Rk4 {
        model,
        floor,
        ceiling,
        gen: ComplexMatrix::zeros(n),
        ks: std::array::from_fn(|_| ComplexMatrix::zeros(n)),
        stage: ComplexMatrix::zeros(n),
    };
    let mut half = ComplexMatrix::zeros(n);
    let mut full = ComplexMatrix::zeros(n);

    let mut u = ComplexMatrix::identity(n);
    let mut samples = Vec::with_capacity(steps + 1);
    let mut grid = Vec::with_capacity(steps + 1);
    let mut blow_up_times = Vec::new();
    let mut in_blow_up = false;
    let mut previous_den = den0;
    let mut denominator_floor = den0.abs();
    let mut defect: f64 = 0.0;
    let mut step_error: f64 = 0.0;

    samples.push(Unitary::identity(n));
    let first = singular_control(num0, den0, floor, ceiling);
    grid.push(first.value);

    for j in 0..steps {
        // two half steps give the local error estimate of the full step
        full.as_mut_slice().copy_from_slice(u.as_slice());
        let mut flagged = stepper.step(&mut pairing, &mut full, h, previous_den);
        if estimate_error {
            half.as_mut_slice().copy_from_slice(u.as_slice());
            stepper.step(&mut pairing, &mut half, 0.5 * h, previous_den);
            stepper.step(&mut pairing, &mut half, 0.5 * h, previous_den);
            let local = full.frobenius_distance(&half);
            step_error = step_error.max(local);
            flagged |= local > STEP_ERROR_LIMIT;
        }
        std::mem::swap(&mut u, &mut full);
        if u.unitarity_defect() > PROJECTION_TRIGGER {
            u = Unitary::polar_projection(&u).matrix().clone();
        }
        let (num, den) = pairing.at(&u);
        let c = singular_control(num, den, floor, ceiling);
        flagged |= c.flagged || den.signum() != previous_den.signum();
        previous_den = den;
        denominator_floor = denominator_floor.min(den.abs());
        defect = defect.max((num + 2.0 * c.value * den).abs());
        if flagged && !in_blow_up {
            blow_up_times.push((j + 1) as f64 * h);
        }
        in_blow_up = flagged;
        grid.push(c.value);
        samples.push(Unitary::from_matrix_unchecked(u.clone()));
    }
    defect = defect.max((num0 + 2.0 * first.value * den0).abs());

    let control = ControlField::from_fn(steps, total_time, |t| interpolate(&grid, h, t))?;
    let times = (0..=steps).map(|j| j as f64 * h).collect();
    Ok(SingularSolution {
        trajectory: Trajectory { samples, times },
        control,
        grid_control: grid,
        defect,
        blow_up_times,
        denominator_floor,
        step_error,
    })
}

/// Cubic Lagrange interpolation of grid samples `values[j] = f(j·h)`.
fn interpolate(values: &[f64], h: f64, t: f64) -> f64 {
    let last = values.len() - 1;
    let x = (t / h).clamp(0.0, last as f64);
    if last < 3 {
        let j = (x.floor() as usize).min(last.saturating_sub(1));
        if last == 0 {
            return values[0];
        }
        let s = x - j as f64;
        return values[j] * (1.0 - s) + values[j + 1] * s;
    }
    let j = x.floor() as usize;
    let start = j.saturating_sub(1).min(last - 3);
    let s = x - start as f64;
    let mut acc = 0.0;
    for a in 0..4 {
        let mut w = 1.0;
        for b in 0..4 {
            if a != b {
                w *= (s - b as f64) / (a as f64 - b as f64);
            }
        }
        acc += w * values[start + a];
    }
    acc
}

/// Re-checks the singularity condition independently of the integrator: the
/// extracted control is resampled on a grid twice as fine, propagated through
/// the piecewise-constant dynamics, and the largest pairing
/// `|⟨U_t†(iH1 + 2E(t)·iH2)U_t, B⟩|` over the fine grid is returned.
pub fn verify_singularity(model: &HamiltonianModel, solution: &SingularSolution, probe: &SingularProbe) -> Result<f64> {
    let h2 = model
        .polarizability()
        .ok_or_else(|| LandscapeError::UnsupportedModel("singular controls need a polarizability term".into()))?;
    if probe.dim() != model.dim() {
        return Err(invalid("probe and model dimensions differ"));
    }
    let grid = &solution.grid_control;
    if grid.len() < 2 {
        return Err(invalid("singular solution has no steps"));
    }
    let steps = grid.len() - 1;
    let total_time = solution.total_time();
    let h = total_time / steps as f64;
    let fine = 2 * steps;
    let fine_h = total_time / fine as f64;
    let amps: Vec<f64> = (0..fine)
        .map(|m| interpolate(grid, h, (m as f64 + 0.5) * fine_h))
        .collect();
    let traj = Propagator::new(model).trajectory(&amps, total_time);
    let mut pairing = Pairing::new(model.control().matrix(), h2.matrix(), probe.direction().matrix());
    let mut worst: f64 = 0.0;
    for (j, u) in traj.iter().enumerate() {
        let e = interpolate(grid, h, j as f64 * fine_h);
        let (num, den) = pairing.at(u);
        worst = worst.max((num + 2.0 * e * den).abs());
    }
    Ok(worst)
}

/// Angle in `[0, π/2]` between `B` and the left-trivialized fidelity gradient
/// at `u`; `B` and `−B` define the same singular control, hence `|cos|`.
pub fn gradient_angle(u: &Unitary, goal: &GoalGate, probe: &SingularProbe) -> Result<f64> {
    let g = left_gradient(u, goal)?;
    let gn = g.norm();
    if gn < 1e-300 {
        return Ok(std::f64::consts::FRAC_PI_2);
    }
    let c = inner_unchecked(g.matrix(), probe.direction().matrix()).abs() / gn;
    Ok(c.min(1.0).acos())
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticalSearchConfig {
    pub total_time: f64,
    pub steps: usize,
    pub angle_tol: f64,
    /// Singular integrations allowed per search.
    pub max_evaluations: usize,
    pub initial_spread: f64,
    pub min_spread: f64,
}

impl Default for CriticalSearchConfig {
    fn default() -> Self {
        Self {
            total_time: 10.0,
            steps: 1000,
            angle_tol: 1e-3,
            max_evaluations: 1500,
            initial_spread: 0.3,
            min_spread: 1e-7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CriticalSearch {
    pub success: bool,
    pub probe: SingularProbe,
    pub solution: Option<SingularSolution>,
    pub angle: f64,
    pub evaluations: usize,
}

impl CriticalSearch {
    pub fn into_found(self) -> Option<(SingularProbe, SingularSolution)> {
        if self.success {
            self.solution.map(|s| (self.probe, s))
        } else {
            None
        }
    }
}

fn probe_angle(
    model: &HamiltonianModel,
    goal: &GoalGate,
    probe: &SingularProbe,
    config: &CriticalSearchConfig,
) -> Option<(f64, SingularSolution)> {
    let solution = integrate(model, probe, config.total_time, config.steps, false).ok()?;
    if solution.has_blow_up() {
        return None;
    }
    let angle = gradient_angle(solution.endpoint(), goal, probe).ok()?;
    if angle > config.angle_tol {
        return Some((angle, solution));
    }
    // candidates inside the tolerance must also pass the resolution check
    let checked = integrate_singular(model, probe, config.total_time, config.steps).ok()?;
    if checked.has_blow_up() {
        return None;
    }
    Some((gradient_angle(checked.endpoint(), goal, probe).ok()?, checked))
}

/// Randomized descent over unit-norm `B` for a singular control whose end
/// point makes `B` co-linear with the fidelity gradient, i.e. a singular
/// control that is also critical. Probes whose control blows up are rejected.
pub fn seek_singular_critical(
    model: &HamiltonianModel,
    goal: &GoalGate,
    seed: u64,
    config: &CriticalSearchConfig,
) -> Result<CriticalSearch> {
    if model.polarizability().is_none() {
        return Err(LandscapeError::UnsupportedModel("singular controls need a polarizability term".into()));
    }
    if model.dim() != goal.dim() {
        return Err(invalid("model and goal dimensions differ"));
    }
    if !(config.angle_tol > 0.0) || config.max_evaluations == 0 {
        return Err(invalid("angle tolerance and evaluation budget must be positive"));
    }
    let n = model.dim();
    let mut rng = seeded_rng(seed);
    let mut evaluations = 0;

    let mut best: Option<(SingularProbe, f64, SingularSolution)> = None;
    while best.is_none() && evaluations < config.max_evaluations {
        let probe = SingularProbe::random(n, &mut rng)?;
        evaluations += 1;
        if let Some((angle, sol)) = probe_angle(model, goal, &probe, config) {
            best = Some((probe, angle, sol));
        }
    }
    let Some((mut probe, mut angle, mut solution)) = best else {
        return Ok(CriticalSearch {
            success: false,
            probe: SingularProbe::random(n, &mut rng)?,
            solution: None,
            angle: std::f64::consts::FRAC_PI_2,
            evaluations,
        });
    };

    let mut spread = config.initial_spread;
    while angle > config.angle_tol && evaluations < config.max_evaluations {
        let kick = random_su_with(n, &mut rng, spread)?;
        let candidate = SingularProbe::new(probe.direction().plus_scaled(1.0, &kick))?;
        evaluations += 1;
        match probe_angle(model, goal, &candidate, config) {
            Some((a, sol)) if a < angle => {
                probe = candidate;
                angle = a;
                solution = sol;
                spread = (spread * 1.5).min(1.0);
            }
            _ => spread = (spread * 0.904).max(config.min_spread),
        }
    }
    Ok(CriticalSearch {
        success: angle <= config.angle_tol,
        probe,
        solution: Some(solution),
        angle,
        evaluations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaddleClass {
    Saddle,
    CandidateTrap,
    RegularMaximum,
}

#[derive(Clone, Debug)]
pub struct SaddleVerdict {
    pub classification: SaddleClass,
    pub trials_used: usize,
    /// Perturbation with `δF > 0`, if one was seen.
    pub positive_direction: Option<Vec<f64>>,
    /// Perturbation with `δF < 0`, if one was seen.
    pub negative_direction: Option<Vec<f64>>,
}

fn unit_direction<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-300 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Samples perturbations of norm `1e-3·max(1, ‖E‖)` in uniformly random
/// directions until fidelity changes of both signs have been observed.
pub fn saddle_probe(
    model: &HamiltonianModel,
    goal: &GoalGate,
    field: &ControlField,
    budget: usize,
    seed: u64,
) -> Result<SaddleVerdict> {
    if budget < 2 {
        return Err(invalid("saddle probe budget must be at least 2"));
    }
    let base = field_fidelity(model, field, goal)?;
    if base >= 1.0 - 1e-9 {
        return Ok(SaddleVerdict {
            classification: SaddleClass::RegularMaximum,
            trials_used: 0,
            positive_direction: None,
            negative_direction: None,
        });
    }
    let radius = 1e-3 * field.norm().max(1.0);
    let k = field.segment_count();
    let mut eval = crate::landscape::FidelityEvaluator::new(model, goal, field.total_time())?;
    let mut rng = seeded_rng(seed);
    let mut positive = None;
    let mut negative = None;
    for trial in 1..=budget {
        let delta: Vec<f64> = unit_direction(k, &mut rng).into_iter().map(|x| x * radius).collect();
        let perturbed: Vec<f64> = field.amplitudes().iter().zip(&delta).map(|(a, d)| a + d).collect();
        let df = eval.eval(&perturbed) - base;
        if df > 0.0 && positive.is_none() {
            positive = Some(delta);
        } else if df < 0.0 && negative.is_none() {
            negative = Some(delta);
        }
        if positive.is_some() && negative.is_some() {
            return Ok(SaddleVerdict {
                classification: SaddleClass::Saddle,
                trials_used: trial,
                positive_direction: positive,
                negative_direction: negative,
            });
        }
    }
    Ok(SaddleVerdict {
        classification: SaddleClass::CandidateTrap,
        trials_used: budget,
        positive_direction: positive,
        negative_direction: negative,
    })
}

/// Fraction of `count` ascents, each started from `E + δE` with `‖δE‖`
/// uniform in `[0, 0.001]`, that reach `config.success_threshold`.
pub fn neighborhood_escape(
    model: &HamiltonianModel,
    goal: &GoalGate,
    field: &ControlField,
    count: usize,
    seed: u64,
    config: &AscentConfig,
) -> Result<f64> {
    if count == 0 {
        return Err(invalid("neighborhood_escape needs count >= 1"));
    }
    let mut rng = seeded_rng(seed);
    let k = field.segment_count();
    let mut successes = 0usize;
    for i in 0..count {
        let radius = rng.gen_range(0.0..=1e-3);
        let dir = unit_direction(k, &mut rng);
        let amps = field.amplitudes().iter().zip(&dir).map(|(a, d)| a + radius * d).collect();
        let start = field.with_amplitudes(amps)?;
        let run_config = AscentConfig {
            rng_seed: derive_seed(seed, &[i as u64]),
            ..config.clone()
        };
        if randomized_ascent(model, goal, &run_config, Some(start))?.success {
            successes += 1;
        }
    }
    Ok(successes as f64 / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::fidelity;
    use crate::matrix::{random_su, trace_inner};
    use crate::zoo::random_tuple;

    /// First random su(4) tuple whose singular trajectory stays regular on [0, 10].
    fn regular_case() -> (HamiltonianModel, GoalGate, SingularProbe) {
        for s in 0..50 {
            let (model, goal) = random_tuple(4, s, 1.0, 1.0, Some(1.0)).unwrap();
            let probe = SingularProbe::random(4, &mut seeded_rng(7000 + s)).unwrap();
            let sol = integrate_singular(&model, &probe, 10.0, 1000).unwrap();
            if !sol.has_blow_up() {
                return (model, goal, probe);
            }
        }
        panic!("no regular singular trajectory among 50 tuples");
    }

    #[test]
    fn regular_solution_satisfies_condition() {
        let (model, _, probe) = regular_case();
        let sol = integrate_singular(&model, &probe, 10.0, 4000).unwrap();
        assert!(!sol.has_blow_up());
        assert!(sol.defect <= 1e-6, "defect {}", sol.defect);
        assert_eq!(sol.trajectory.samples.len(), 4001);
        assert!(sol.trajectory.samples[0].matrix().frobenius_distance(&ComplexMatrix::identity(4)) <= 1e-12);
        for u in &sol.trajectory.samples {
            assert!(u.unitarity_defect() <= 1e-8);
        }
        let refined = verify_singularity(&model, &sol, &probe).unwrap();
        assert!(refined <= 1e-4, "refined defect {refined}");
    }

    #[test]
    fn refined_defect_shrinks_with_steps() {
        let (model, _, probe) = regular_case();
        let coarse = integrate_singular(&model, &probe, 10.0, 1000).unwrap();
        let fine = integrate_singular(&model, &probe, 10.0, 2000).unwrap();
        let d1 = verify_singularity(&model, &coarse, &probe).unwrap();
        let d2 = verify_singularity(&model, &fine, &probe).unwrap();
        assert!(d2 <= 0.5 * d1, "{d1} -> {d2}");
    }

    #[test]
    fn perturbed_control_is_detected() {
        let (model, _, probe) = regular_case();
        let sol = integrate_singular(&model, &probe, 10.0, 2000).unwrap();
        let clean = verify_singularity(&model, &sol, &probe).unwrap();
        let mut bad = sol.clone();
        bad.grid_control[1000] += 0.1;
        let dirty = verify_singularity(&model, &bad, &probe).unwrap();
        assert!(dirty >= 10.0 * clean, "{clean} vs {dirty}");
    }

    #[test]
    fn probe_scale_does_not_matter() {
        let (model, _, probe) = regular_case();
        let doubled = SingularProbe::new(probe.direction().scaled(2.0)).unwrap();
        assert!((doubled.direction().norm() - 1.0).abs() <= 1e-12);
        let a = integrate_singular(&model, &probe, 10.0, 500).unwrap();
        let b = integrate_singular(&model, &doubled, 10.0, 500).unwrap();
        for (x, y) in a.grid_control.iter().zip(&b.grid_control) {
            assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn initial_control_vanishes_with_orthogonal_numerator() {
        let (model, _) = random_tuple(3, 2, 1.0, 1.0, Some(1.0)).unwrap();
        let raw = random_su(3, 9, 1.0).unwrap();
        let h1 = model.control();
        let along = trace_inner(&raw, h1).unwrap() / trace_inner(h1, h1).unwrap();
        let probe = SingularProbe::new(raw.plus_scaled(-along, h1)).unwrap();
        let sol = integrate_singular(&model, &probe, 1.0, 100).unwrap();
        assert!(sol.grid_control[0].abs() <= 1e-14);
    }

    #[test]
    fn dipole_model_is_rejected() {
        let (model, _) = random_tuple(4, 1, 1.0, 1.0, None).unwrap();
        let probe = SingularProbe::random(4, &mut seeded_rng(1)).unwrap();
        assert!(matches!(
            integrate_singular(&model, &probe, 1.0, 100),
            Err(LandscapeError::UnsupportedModel(_))
        ));
    }

    #[test]
    fn probe_orthogonal_to_polarizability_is_degenerate() {
        let (model, _) = random_tuple(4, 1, 1.0, 1.0, Some(1.0)).unwrap();
        let h2 = model.polarizability().unwrap();
        let raw = random_su(4, 3, 1.0).unwrap();
        let along = trace_inner(&raw, h2).unwrap();
        let probe = SingularProbe::new(raw.plus_scaled(-along, h2)).unwrap();
        assert!(matches!(
            integrate_singular(&model, &probe, 1.0, 100),
            Err(LandscapeError::DegenerateProbe(_))
        ));
        assert!(SingularProbe::new(SuGenerator::zero(4)).is_err());
        assert!(integrate_singular(&model, &SingularProbe::random(4, &mut seeded_rng(2)).unwrap(), 1.0, 10).is_err());
    }

    #[test]
    fn vanishing_horizon_reduces_to_identity_pairing() {
        let (model, _, probe) = regular_case();
        let sol = integrate_singular(&model, &probe, 1e-9, 100).unwrap();
        let e0 = sol.grid_control[0];
        let at_identity = model.field_derivative_at(e0);
        let expected = trace_inner(&at_identity, probe.direction()).unwrap().abs();
        let got = verify_singularity(&model, &sol, &probe).unwrap();
        assert!((got - expected).abs() <= 1e-9);
    }

    #[test]
    fn interpolation_is_exact_for_cubics() {
        let f = |t: f64| 1.0 - 2.0 * t + 0.5 * t * t - 0.1 * t * t * t;
        let h = 0.25;
        let grid: Vec<f64> = (0..=12).map(|j| f(j as f64 * h)).collect();
        for m in 0..=30 {
            let t = m as f64 * 0.1;
            assert!((interpolate(&grid, h, t) - f(t)).abs() <= 1e-12);
        }
    }

    #[test]
    fn angle_is_zero_along_the_gradient() {
        let (_, goal) = random_tuple(4, 5, 1.0, 1.0, Some(1.0)).unwrap();
        let u = crate::matrix::random_unitary_goal(4, 8).unwrap();
        let g = left_gradient(&u, &goal).unwrap();
        let along = SingularProbe::new(g.scaled(-3.0)).unwrap();
        assert!(gradient_angle(&u, &goal, &along).unwrap() <= 1e-7);
        let other = SingularProbe::random(4, &mut seeded_rng(4)).unwrap();
        assert!(gradient_angle(&u, &goal, &other).unwrap() > 1e-3);
    }

    #[test]
    fn saddle_probe_at_global_maximum() {
        let (model, _) = random_tuple(3, 4, 1.0, 1.0, Some(0.5)).unwrap();
        let field = ControlField::from_fn(50, 5.0, |t| (0.3 * t).sin()).unwrap();
        let (u, _) = crate::dynamics::propagate(&model, &field, false).unwrap();
        let goal = GoalGate::projected(u.clone());
        assert!(fidelity(&u, &goal).unwrap() > 1.0 - 1e-12);
        let v = saddle_probe(&model, &goal, &field, 10, 1).unwrap();
        assert_eq!(v.classification, SaddleClass::RegularMaximum);
        assert!(saddle_probe(&model, &goal, &field, 1, 1).is_err());

        let cfg = AscentConfig::default();
        assert_eq!(neighborhood_escape(&model, &goal, &field, 5, 2, &cfg).unwrap(), 1.0);
    }

    #[test]
    fn singular_controls_are_saddles() {
        let (model, goal, probe) = regular_case();
        let sol = integrate_singular(&model, &probe, 10.0, 1000).unwrap();
        let v = saddle_probe(&model, &goal, &sol.control, 200, 3).unwrap();
        assert_eq!(v.classification, SaddleClass::Saddle);
        assert!(v.trials_used <= 20);
        let base = field_fidelity(&model, &sol.control, &goal).unwrap();
        for (dir, sign) in [(&v.positive_direction, 1.0), (&v.negative_direction, -1.0)] {
            let d = dir.as_ref().unwrap();
            let amps = sol.control.amplitudes().iter().zip(d).map(|(a, b)| a + b).collect();
            let f = field_fidelity(&model, &sol.control.with_amplitudes(amps).unwrap(), &goal).unwrap();
            assert!(sign * (f - base) > 0.0);
        }
    }

    #[test]
    fn critical_search_contract() {
        let (model, goal, _) = regular_case();
        let cfg = CriticalSearchConfig {
            max_evaluations: 60,
            steps: 300,
            ..Default::default()
        };
        let out = seek_singular_critical(&model, &goal, 11, &cfg).unwrap();
        assert!((out.probe.direction().norm() - 1.0).abs() <= 1e-12);
        assert!(out.evaluations <= 60);
        if let Some(sol) = &out.solution {
            let angle = gradient_angle(sol.endpoint(), &goal, &out.probe).unwrap();
            assert!((angle - out.angle).abs() <= 1e-12);
            assert_eq!(out.success, angle <= cfg.angle_tol);
        }
        let again = seek_singular_critical(&model, &goal, 11, &cfg).unwrap();
        assert_eq!(again.angle, out.angle);
    }
}
