// Copyright 2026 polarlandscape Contributors
// SPDX-License-Identifier: Apache-2.0

//! Gate fidelity, its gradient over the piecewise-constant control space, and
//! the accept-only-improvement randomized ascent used to probe the landscape.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{endpoint_variation_basis, propagate, ControlField, HamiltonianModel, Propagator};
use crate::error::{invalid, Result};
use crate::matrix::{inner_unchecked, seeded_rng, ComplexMatrix, SuGenerator, Unitary, C64};

/// Goal gate `W ∈ SU(n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GoalGate {
    w: Unitary,
}

impl GoalGate {
    pub fn new(w: Unitary) -> Result<Self> {
        let det = w.determinant();
        if (det - C64::new(1.0, 0.0)).norm() > 1e-9 {
            return Err(invalid(format!("goal gate determinant is {det}, expected 1")));
        }
        Ok(Self { w })
    }

    /// Removes the determinant phase of `w` so that the result lies in SU(n).
    /// The fidelity is blind to global phase, so this does not change any landscape.
    pub fn projected(w: Unitary) -> Self {
        let n = w.dim();
        let det = w.determinant();
        let phase = C64::from_polar(1.0, -det.arg() / n as f64);
        Self {
            w: Unitary::from_matrix_unchecked(w.matrix().scale_complex(phase)),
        }
    }

    pub fn unitary(&self) -> &Unitary {
        &self.w
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        self.w.matrix()
    }

    pub fn dim(&self) -> usize {
        self.w.dim()
    }
}

/// `Tr(W†U)`.
#[inline]
pub(crate) fn overlap(u: &ComplexMatrix, w: &ComplexMatrix) -> C64 {
    u.as_slice()
        .iter()
        .zip(w.as_slice())
        .map(|(a, b)| b.conj() * a)
        .sum()
}

#[inline]
fn fidelity_of(u: &ComplexMatrix, w: &ComplexMatrix) -> f64 {
    let n = u.dim() as f64;
    overlap(u, w).norm_sqr() / (n * n)
}

/// `|Tr(W†U)|² / n²`.
pub fn fidelity(u: &Unitary, goal: &GoalGate) -> Result<f64> {
    if u.dim() != goal.dim() {
        return Err(invalid(format!(
            "propagator has dimension {}, goal has {}",
            u.dim(),
            goal.dim()
        )));
    }
    Ok(fidelity_of(u.matrix(), goal.matrix()).min(1.0))
}

/// Left-trivialized gradient `U†∇J` of the fidelity at `U`.
///
/// With `z = Tr(W†U)`, `dJ = (2/n²)·Re(z̄·Tr(W†U·Ω))` for `δU = U·Ω`, so the
/// gradient is the skew-Hermitian part of `(2/n²)·z·U†W`.
pub fn left_gradient(u: &Unitary, goal: &GoalGate) -> Result<SuGenerator> {
    if u.dim() != goal.dim() {
        return Err(invalid("dimension mismatch between propagator and goal"));
    }
    let n = u.dim() as f64;
    let z = overlap(u.matrix(), goal.matrix());
    let m = u.matrix().adjoint_mul(goal.matrix()).scale_complex(z * (2.0 / (n * n)));
    Ok(SuGenerator::from_matrix_unchecked(m.skew_part()))
}

/// Fidelity and its gradient with respect to every segment amplitude.
pub fn fidelity_and_gradient(
    model: &HamiltonianModel,
    field: &ControlField,
    goal: &GoalGate,
) -> Result<(f64, Vec<f64>)> {
    if model.dim() != goal.dim() {
        return Err(invalid("model and goal dimensions differ"));
    }
    let (u, traj) = propagate(model, field, true)?;
    let traj = traj.expect("trajectory requested");
    let basis = endpoint_variation_basis(model, field, &traj)?;
    let grad = left_gradient(&u, goal)?;
    let g = basis
        .iter()
        .map(|b| inner_unchecked(grad.matrix(), b.matrix()))
        .collect();
    Ok((fidelity(&u, goal)?, g))
}

/// `∂F/∂E_k` for every segment: the pairing of [`left_gradient`] with the
/// end-point variation basis.
pub fn fidelity_gradient(model: &HamiltonianModel, field: &ControlField, goal: &GoalGate) -> Result<Vec<f64>> {
    Ok(fidelity_and_gradient(model, field, goal)?.1)
}

/// Fidelity of the end point reached by `field`.
pub fn field_fidelity(model: &HamiltonianModel, field: &ControlField, goal: &GoalGate) -> Result<f64> {
    let (u, _) = propagate(model, field, false)?;
    fidelity(&u, goal)
}

/// Fidelity evaluator that reuses propagation buffers.
pub struct FidelityEvaluator<'a> {
    prop: Propagator,
    goal: &'a GoalGate,
    total_time: f64,
}

impl<'a> FidelityEvaluator<'a> {
    pub fn new(model: &HamiltonianModel, goal: &'a GoalGate, total_time: f64) -> Result<Self> {
        if model.dim() != goal.dim() {
            return Err(invalid("model and goal dimensions differ"));
        }
        Ok(Self {
            prop: Propagator::new(model),
            goal,
            total_time,
        })
    }

    pub fn eval(&mut self, amplitudes: &[f64]) -> f64 {
        let u = self.prop.endpoint(amplitudes, self.total_time);
        fidelity_of(u, self.goal.matrix()).min(1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AscentConfig {
    /// Initial amplitude ε of the random step `ΔE = ε·u`, `u` uniform in `[−1, 1]^K`.
    pub step_size: f64,
    pub min_step_size: f64,
    pub max_step_size: f64,
    /// Step growth on an accepted move.
    pub step_growth: f64,
    /// Step shrink on a rejected move.
    pub step_shrink: f64,
    /// Consecutive rejections that end a run as a failure.
    pub max_tries: usize,
    pub success_threshold: f64,
    /// When non-zero, a run also fails if the fidelity gains less than
    /// `stall_tolerance` over `stall_window` consecutive evaluations.
    pub stall_window: usize,
    pub stall_tolerance: f64,
    /// Cap on the total number of trial evaluations.
    pub max_total_iterations: usize,
    pub initial_field_range: (f64, f64),
    pub rng_seed: u64,
    /// Used to draw the initial field when none is supplied.
    pub segments: usize,
    pub total_time: f64,
}

impl Default for AscentConfig {
    fn default() -> Self {
        Self {
            step_size: 0.05,
            min_step_size: 1e-3,
            max_step_size: 0.5,
            step_growth: 1.5,
            step_shrink: 0.9,
            max_tries: 1000,
            success_threshold: 0.95,
            stall_window: 0,
            stall_tolerance: 1e-6,
            max_total_iterations: 200_000,
            initial_field_range: (-1.0, 1.0),
            rng_seed: 0,
            segments: 250,
            total_time: crate::dynamics::DEFAULT_HORIZON,
        }
    }
}

impl AscentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.success_threshold > 0.0 && self.success_threshold <= 1.0) {
            return Err(invalid("success threshold must lie in (0, 1]"));
        }
        if !(self.stall_tolerance >= 0.0 && self.stall_tolerance.is_finite()) {
            return Err(invalid("stall tolerance must be a non-negative number"));
        }
        if self.max_tries < 1 {
            return Err(invalid("max_tries must be at least 1"));
        }
        if !(self.step_size > 0.0 && self.min_step_size > 0.0 && self.max_step_size >= self.min_step_size) {
            return Err(invalid("step sizes must be positive with min <= max"));
        }
        if !(self.step_growth >= 1.0 && self.step_shrink > 0.0 && self.step_shrink <= 1.0) {
            return Err(invalid("step growth must be >= 1 and shrink in (0, 1]"));
        }
        let (lo, hi) = self.initial_field_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(invalid("initial field range must be a finite interval"));
        }
        if self.segments == 0 || !(self.total_time > 0.0) {
            return Err(invalid("segments and total time must be positive"));
        }
        Ok(())
    }

    /// Uniform random initial field on the configured range.
    pub fn sample_initial_field<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ControlField> {
        let (lo, hi) = self.initial_field_range;
        let amps = (0..self.segments)
            .map(|_| if hi > lo { rng.gen_range(lo..hi) } else { lo })
            .collect();
        ControlField::new(amps, self.total_time)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    /// `max_tries` consecutive rejected proposals.
    StepExhausted,
    /// `max_total_iterations` evaluations used without converging.
    IterationBudget,
    /// Less than `stall_tolerance` gained over `stall_window` evaluations.
    Stalled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub success: bool,
    pub reason: StopReason,
    pub final_fidelity: f64,
    /// Fidelity after each accepted move; entry 0 is the initial field.
    pub fidelity_trace: Vec<f64>,
    /// `‖E‖` after each accepted move; entry 0 is the initial field.
    pub fluence_trace: Vec<f64>,
    pub final_field: ControlField,
    /// Accepted moves.
    pub iterations: usize,
    /// Trial evaluations, accepted or not.
    pub evaluations: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn resolve_initial<R: Rng + ?Sized>(
    config: &AscentConfig,
    initial: Option<ControlField>,
    rng: &mut R,
) -> Result<ControlField> {
    match initial {
        Some(f) => Ok(f),
        None => config.sample_initial_field(rng),
    }
}

/// Randomized accept-only-improvement ascent.
///
/// Each proposal is `ΔE = ε·u` with `u` uniform in `[−1, 1]^K`; it is kept
/// only if the trial fidelity strictly exceeds the current one. A run
/// succeeds once the fidelity reaches `success_threshold` and fails after
/// `max_tries` consecutive rejections. ε grows by `step_growth` after an
/// accepted move and shrinks by `step_shrink` after a rejection, clamped to
/// `[min_step_size, max_step_size]`.
pub fn randomized_ascent(
    model: &HamiltonianModel,
    goal: &GoalGate,
    config: &AscentConfig,
    initial: Option<ControlField>,
) -> Result<RunRecord> {
    config.validate()?;
    let mut rng = seeded_rng(config.rng_seed);
    let field = resolve_initial(config, initial, &mut rng)?;
    let total_time = field.total_time();
    let mut eval = FidelityEvaluator::new(model, goal, total_time)?;

    let mut amps = field.into_amplitudes();
    let k = amps.len();
    let mut current = eval.eval(&amps);
    let mut fidelity_trace = vec![current];
    let mut fluence_trace = vec![norm(&amps)];
    let mut trial = vec![0.0; k];
    let mut delta = vec![0.0; k];
    let mut eps = config.step_size.clamp(config.min_step_size, config.max_step_size);
    let mut tries = 0usize;
    let mut evaluations = 0usize;
    let mut checkpoint = current;

    let reason = loop {
        if current >= config.success_threshold {
            break StopReason::Converged;
        }
        if evaluations >= config.max_total_iterations {
            break StopReason::IterationBudget;
        }
        if config.stall_window > 0 && evaluations > 0 && evaluations % config.stall_window == 0 {
            if current - checkpoint < config.stall_tolerance {
                break StopReason::Stalled;
            }
            checkpoint = current;
        }
        for (d, (t, a)) in delta.iter_mut().zip(trial.iter_mut().zip(&amps)) {
            *d = eps * rng.gen_range(-1.0..=1.0);
            *t = a + *d;
        }
        evaluations += 1;
        let f = eval.eval(&trial);
        if f > current {
            current = f;
            std::mem::swap(&mut amps, &mut trial);
            fidelity_trace.push(current);
            fluence_trace.push(norm(&amps));
            tries = 0;
            eps = (eps * config.step_growth).min(config.max_step_size);
        } else {
            tries += 1;
            if tries >= config.max_tries {
                break StopReason::StepExhausted;
            }
            eps = (eps * config.step_shrink).max(config.min_step_size);
        }
    };

    Ok(RunRecord {
        success: reason == StopReason::Converged,
        reason,
        final_fidelity: current,
        iterations: fidelity_trace.len() - 1,
        fidelity_trace,
        fluence_trace,
        final_field: ControlField::new(amps, total_time)?,
        evaluations,
    })
}

/// Gradient ascent with backtracking line search.
///
/// Faster than [`randomized_ascent`] for large censuses; it can stall on
/// saddles, which the randomized algorithm escapes.
pub fn gradient_ascent(
    model: &HamiltonianModel,
    goal: &GoalGate,
    config: &AscentConfig,
    initial: Option<ControlField>,
) -> Result<RunRecord> {
    config.validate()?;
    let mut rng = seeded_rng(config.rng_seed);
    let mut field = resolve_initial(config, initial, &mut rng)?;
    let (mut current, mut grad) = fidelity_and_gradient(model, &field, goal)?;
    let mut fidelity_trace = vec![current];
    let mut fluence_trace = vec![field.norm()];
    let mut step = 1.0;
    let mut evaluations = 0usize;
    let mut eval = FidelityEvaluator::new(model, goal, field.total_time())?;

    let reason = 'outer: loop {
        if current >= config.success_threshold {
            break StopReason::Converged;
        }
        let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
        if gnorm2 < 1e-24 {
            break StopReason::StepExhausted;
        }
        loop {
            if evaluations >= config.max_total_iterations {
                break 'outer StopReason::IterationBudget;
            }
            let trial: Vec<f64> = field
                .amplitudes()
                .iter()
                .zip(&grad)
                .map(|(a, g)| a + step * g)
                .collect();
            evaluations += 1;
            let f = eval.eval(&trial);
            if f > current && f >= current + 1e-4 * step * gnorm2 {
                field = field.with_amplitudes(trial)?;
                step *= 2.0;
                break;
            }
            step *= 0.5;
            if step * gnorm2.sqrt() < 1e-14 {
                break 'outer StopReason::StepExhausted;
            }
        }
        let (f, g) = fidelity_and_gradient(model, &field, goal)?;
        current = f;
        grad = g;
        fidelity_trace.push(current);
        fluence_trace.push(field.norm());
    };

    Ok(RunRecord {
        success: reason == StopReason::Converged,
        reason,
        final_fidelity: current,
        iterations: fidelity_trace.len() - 1,
        fidelity_trace,
        fluence_trace,
        final_field: field,
        evaluations,
    })
}

/// Outcome of the two-stage trap test.
#[derive(Clone, Debug)]
pub struct TrapVerdict {
    pub trapped: bool,
    pub first: RunRecord,
    /// Restart from the failed field with all step sizes reduced tenfold.
    pub retry: Option<RunRecord>,
}

impl TrapVerdict {
    pub fn final_record(&self) -> &RunRecord {
        self.retry.as_ref().unwrap_or(&self.first)
    }
}

/// Labels a start as trapped only when a run fails and a restart from its
/// final field with ε reduced 10× also fails.
pub fn trap_verdict(
    model: &HamiltonianModel,
    goal: &GoalGate,
    config: &AscentConfig,
    initial: Option<ControlField>,
) -> Result<TrapVerdict> {
    let first = randomized_ascent(model, goal, config, initial)?;
    if first.success {
        return Ok(TrapVerdict {
            trapped: false,
            first,
            retry: None,
        });
    }
    let fine = AscentConfig {
        step_size: config.step_size / 10.0,
        min_step_size: config.min_step_size / 10.0,
        max_step_size: config.max_step_size / 10.0,
        rng_seed: config.rng_seed ^ 0x5eed_0f_7e7a,
        ..config.clone()
    };
    let retry = randomized_ascent(model, goal, &fine, Some(first.final_field.clone()))?;
    Ok(TrapVerdict {
        trapped: !retry.success,
        first,
        retry: Some(retry),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{pauli, random_su, random_unitary_goal};

    fn model(n: usize, seed: u64, with_h2: bool) -> HamiltonianModel {
        HamiltonianModel::new(
            random_su(n, seed, 1.0).unwrap(),
            random_su(n, seed + 1, 1.0).unwrap(),
            with_h2.then(|| random_su(n, seed + 2, 1.0).unwrap()),
        )
        .unwrap()
    }

    #[test]
    fn fidelity_examples() {
        let w = random_unitary_goal(3, 1).unwrap();
        let g = GoalGate::new(w.clone()).unwrap();
        assert!((fidelity(&w, &g).unwrap() - 1.0).abs() < 1e-14);

        let id2 = GoalGate::new(Unitary::identity(2)).unwrap();
        let ix = Unitary::new(pauli::x().scale_complex(C64::new(0.0, 1.0))).unwrap();
        assert!(fidelity(&ix, &id2).unwrap().abs() < 1e-15);

        let id4 = GoalGate::new(Unitary::identity(4)).unwrap();
        let d = Unitary::new(ComplexMatrix::diagonal(&[
            C64::new(1.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(-1.0, 0.0),
        ]))
        .unwrap();
        assert!((fidelity(&d, &id4).unwrap() - 0.25).abs() < 1e-15);
        assert!(fidelity(&d, &id2).is_err());
    }

    #[test]
    fn phase_invariance_and_symmetry() {
        let u = random_unitary_goal(4, 2).unwrap();
        let w = GoalGate::new(random_unitary_goal(4, 3).unwrap()).unwrap();
        let base = fidelity(&u, &w).unwrap();
        for k in 0..10 {
            let phase = C64::from_polar(1.0, 0.61 * k as f64);
            let v = Unitary::new(u.matrix().scale_complex(phase)).unwrap();
            assert!((fidelity(&v, &w).unwrap() - base).abs() < 1e-12);
        }
        let swapped = fidelity(w.unitary(), &GoalGate::new(u.clone()).unwrap()).unwrap();
        assert!((swapped - base).abs() < 1e-12);
    }

    #[test]
    fn projected_goal_lands_in_su() {
        let phase = C64::from_polar(1.0, 0.3);
        let w = Unitary::new(random_unitary_goal(3, 5).unwrap().matrix().scale_complex(phase)).unwrap();
        assert!(GoalGate::new(w.clone()).is_err());
        let g = GoalGate::projected(w.clone());
        assert!((g.unitary().determinant() - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((fidelity(&w, &g).unwrap() - 1.0).abs() < 1e-12);
    }

    fn fd_gradient(m: &HamiltonianModel, f: &ControlField, g: &GoalGate, h: f64) -> Vec<f64> {
        (0..f.segment_count())
            .map(|k| {
                let mut p = f.amplitudes().to_vec();
                let mut q = p.clone();
                p[k] += h;
                q[k] -= h;
                let fp = field_fidelity(m, &f.with_amplitudes(p).unwrap(), g).unwrap();
                let fm = field_fidelity(m, &f.with_amplitudes(q).unwrap(), g).unwrap();
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_central_differences() {
        let m = model(3, 10, true);
        let goal = GoalGate::new(random_unitary_goal(3, 11).unwrap()).unwrap();
        let f = ControlField::from_fn(20, 4.0, |t| (1.3 * t).sin()).unwrap();
        let g = fidelity_gradient(&m, &f, &goal).unwrap();
        let fd = fd_gradient(&m, &f, &goal, 1e-6);
        let scale = fd.iter().map(|x| x.abs()).fold(0.0, f64::max);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-5 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn gradient_vanishes_at_global_maximum() {
        let m = model(3, 20, true);
        let f = ControlField::from_fn(16, 3.0, |t| t.cos()).unwrap();
        let (u, _) = propagate(&m, &f, false).unwrap();
        let goal = GoalGate::projected(u);
        let g = fidelity_gradient(&m, &f, &goal).unwrap();
        assert!(norm(&g) <= 1e-8);
    }

    #[test]
    fn zero_polarizability_matches_dipole_gradient() {
        let dip = model(4, 30, false);
        let zero = dip.with_polarizability(Some(SuGenerator::zero(4))).unwrap();
        let goal = GoalGate::new(random_unitary_goal(4, 31).unwrap()).unwrap();
        let f = ControlField::from_fn(12, 2.0, |t| 0.4 - t).unwrap();
        let a = fidelity_gradient(&dip, &f, &goal).unwrap();
        let b = fidelity_gradient(&zero, &f, &goal).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn converged_start_returns_immediately() {
        let m = model(3, 40, true);
        let f = ControlField::from_fn(10, 2.0, |t| t.sin()).unwrap();
        let (u, _) = propagate(&m, &f, false).unwrap();
        let goal = GoalGate::projected(u);
        let rec = randomized_ascent(&m, &goal, &AscentConfig::default(), Some(f.clone())).unwrap();
        assert!(rec.success);
        assert_eq!(rec.iterations, 0);
        assert_eq!(rec.evaluations, 0);
        assert_eq!(rec.final_field, f);
    }

    #[test]
    fn ascent_is_deterministic_and_monotone() {
        let m = model(3, 50, true);
        let goal = GoalGate::new(random_unitary_goal(3, 51).unwrap()).unwrap();
        let cfg = AscentConfig {
            segments: 20,
            total_time: 5.0,
            max_total_iterations: 3000,
            rng_seed: 7,
            ..AscentConfig::default()
        };
        let a = randomized_ascent(&m, &goal, &cfg, None).unwrap();
        let b = randomized_ascent(&m, &goal, &cfg, None).unwrap();
        assert_eq!(a, b);
        assert!(a.fidelity_trace.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(a.success, a.final_fidelity >= cfg.success_threshold);
        assert_eq!(a.fluence_trace.len(), a.iterations + 1);
    }

    #[test]
    fn config_validation() {
        let bad = AscentConfig {
            success_threshold: 1.5,
            ..AscentConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = AscentConfig {
            max_tries: 0,
            ..AscentConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
