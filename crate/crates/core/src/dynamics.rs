// Copyright 2026 polarlandscape Contributors
// SPDX-License-Identifier: Apache-2.0

//! Piecewise-constant control fields and propagation of
//! `dU/dt = (iH0 + E(t)·iH1 + E(t)²·iH2)·U`, `U(0) = I`.
//!
//! Generators are stored as the skew-Hermitian matrices `iH_k`; with ħ = 1 the
//! propagator over one segment of duration `Δt` is `exp(Δt·A_k)` and later
//! segments multiply on the left.

use crate::error::{invalid, Result};
use crate::small;
use crate::matrix::{
    expm_into, mul_into, ComplexMatrix, ExpmScratch, HermitianEigen, SuGenerator, Unitary, C64,
};

/// Default number of piecewise-constant segments.
pub const DEFAULT_SEGMENTS: usize = 500;
/// Default control horizon for the random-model experiments.
pub const DEFAULT_HORIZON: f64 = 40.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ControlField {
    amplitudes: Vec<f64>,
    total_time: f64,
}

impl ControlField {
    pub fn new(amplitudes: Vec<f64>, total_time: f64) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(invalid("control field needs at least one segment"));
        }
        if !(total_time > 0.0 && total_time.is_finite()) {
            return Err(invalid(format!("total time must be positive, got {total_time}")));
        }
        if amplitudes.iter().any(|a| !a.is_finite()) {
            return Err(invalid("control amplitudes must be finite"));
        }
        Ok(Self {
            amplitudes,
            total_time,
        })
    }

    pub fn zeros(segments: usize, total_time: f64) -> Result<Self> {
        Self::new(vec![0.0; segments], total_time)
    }

    /// Samples `f` at the midpoints of `segments` uniform segments.
    pub fn from_fn(segments: usize, total_time: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let dt = total_time / segments as f64;
        Self::new(
            (0..segments).map(|k| f((k as f64 + 0.5) * dt)).collect(),
            total_time,
        )
    }

    #[inline]
    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<f64> {
        self.amplitudes
    }

    #[inline]
    pub fn segment_count(&self) -> usize {
        self.amplitudes.len()
    }

    #[inline]
    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    #[inline]
    pub fn segment_duration(&self) -> f64 {
        self.total_time / self.amplitudes.len() as f64
    }

    /// Euclidean norm of the amplitude vector.
    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn with_amplitudes(&self, amplitudes: Vec<f64>) -> Result<Self> {
        if amplitudes.len() != self.amplitudes.len() {
            return Err(invalid("replacement amplitudes change the segment count"));
        }
        Self::new(amplitudes, self.total_time)
    }

    /// First `k` segments as a field on `[0, k·Δt]`.
    pub fn prefix(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.amplitudes.len() {
            return Err(invalid(format!("prefix length {k} out of range")));
        }
        Self::new(self.amplitudes[..k].to_vec(), k as f64 * self.segment_duration())
    }

    /// Segments from `k` onward as a field on `[0, (K−k)·Δt]`.
    pub fn suffix(&self, k: usize) -> Result<Self> {
        if k >= self.amplitudes.len() {
            return Err(invalid(format!("suffix start {k} out of range")));
        }
        let rest = self.amplitudes.len() - k;
        Self::new(self.amplitudes[k..].to_vec(), rest as f64 * self.segment_duration())
    }
}

/// `iH0`, `iH1` and the optional polarizability `iH2`.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianModel {
    drift: SuGenerator,
    control: SuGenerator,
    polarizability: Option<SuGenerator>,
}

impl HamiltonianModel {
    pub fn new(drift: SuGenerator, control: SuGenerator, polarizability: Option<SuGenerator>) -> Result<Self> {
        let n = drift.dim();
        if control.dim() != n || polarizability.as_ref().is_some_and(|p| p.dim() != n) {
            return Err(invalid("all model generators must share one dimension"));
        }
        Ok(Self {
            drift,
            control,
            polarizability,
        })
    }

    pub fn dipole(drift: SuGenerator, control: SuGenerator) -> Result<Self> {
        Self::new(drift, control, None)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.drift.dim()
    }

    pub fn drift(&self) -> &SuGenerator {
        &self.drift
    }

    pub fn control(&self) -> &SuGenerator {
        &self.control
    }

    pub fn polarizability(&self) -> Option<&SuGenerator> {
        self.polarizability.as_ref()
    }

    pub fn with_polarizability(&self, h2: Option<SuGenerator>) -> Result<Self> {
        Self::new(self.drift.clone(), self.control.clone(), h2)
    }

    /// True when some generator carries a trace (the model lives in u(n)).
    pub fn is_unitary_algebra(&self) -> bool {
        !self.drift.is_traceless()
            || !self.control.is_traceless()
            || self.polarizability.as_ref().is_some_and(|p| !p.is_traceless())
    }

    /// `iH0 + e·iH1 + e²·iH2`.
    pub fn generator_at(&self, e: f64) -> Result<SuGenerator> {
        if !e.is_finite() {
            return Err(invalid("field value must be finite"));
        }
        let mut m = self.drift.matrix().clone();
        self.accumulate_field_terms(e, 1.0, &mut m);
        Ok(SuGenerator::from_matrix_unchecked(m))
    }

    /// `d/de` of the generator: `iH1 + 2e·iH2`.
    pub fn field_derivative_at(&self, e: f64) -> SuGenerator {
        let mut m = self.control.matrix().clone();
        if let Some(p) = &self.polarizability {
            m.axpy(2.0 * e, p.matrix());
        }
        SuGenerator::from_matrix_unchecked(m)
    }

    /// `out = s·(iH0 + e·iH1 + e²·iH2)` without allocating.
    #[inline]
    pub(crate) fn scaled_generator_into(&self, e: f64, s: f64, out: &mut ComplexMatrix) {
        let o = out.as_mut_slice();
        let h0 = self.drift.matrix().as_slice();
        let h1 = self.control.matrix().as_slice();
        match &self.polarizability {
            Some(p) => {
                let h2 = p.matrix().as_slice();
                let (c1, c2) = (s * e, s * e * e);
                for i in 0..o.len() {
                    o[i] = h0[i] * s + h1[i] * c1 + h2[i] * c2;
                }
            }
            None => {
                let c1 = s * e;
                for i in 0..o.len() {
                    o[i] = h0[i] * s + h1[i] * c1;
                }
            }
        }
    }

    fn accumulate_field_terms(&self, e: f64, s: f64, m: &mut ComplexMatrix) {
        m.axpy(s * e, self.control.matrix());
        if let Some(p) = &self.polarizability {
            m.axpy(s * e * e, p.matrix());
        }
    }
}

/// Partial products at the segment boundaries; `samples[0] = I`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub samples: Vec<Unitary>,
    pub times: Vec<f64>,
}

impl Trajectory {
    pub fn endpoint(&self) -> &Unitary {
        self.samples.last().expect("trajectory is never empty")
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Reusable buffers for repeated end-point evaluations of one model.
///
/// The segment exponentials go through the Taylor kernel in
/// [`crate::matrix::expm_into`]; this is the path used inside the ascent loops.
#[derive(Clone, Debug)]
pub struct Propagator {
    model: HamiltonianModel,
    gen: ComplexMatrix,
    step: ComplexMatrix,
    acc: ComplexMatrix,
    tmp: ComplexMatrix,
    scratch: ExpmScratch,
}

impl Propagator {
    pub fn new(model: &HamiltonianModel) -> Self {
        let n = model.dim();
        Self {
            model: model.clone(),
            gen: ComplexMatrix::zeros(n),
            step: ComplexMatrix::zeros(n),
            acc: ComplexMatrix::identity(n),
            tmp: ComplexMatrix::zeros(n),
            scratch: ExpmScratch::new(n),
        }
    }

    pub fn model(&self) -> &HamiltonianModel {
        &self.model
    }

    /// `exp(Δt·A_k)` for one segment amplitude.
    pub fn segment_exponential(&mut self, amplitude: f64, dt: f64) -> &ComplexMatrix {
        self.model.scaled_generator_into(amplitude, dt, &mut self.gen);
        expm_into(&self.gen, &mut self.step, &mut self.scratch);
        &self.step
    }

    /// End-point propagator for `amplitudes` over `total_time`.
    pub fn endpoint(&mut self, amplitudes: &[f64], total_time: f64) -> &ComplexMatrix {
        let dt = total_time / amplitudes.len() as f64;
        let n = self.model.dim();
        let (h0, h1) = (self.model.drift.matrix(), self.model.control.matrix());
        let h2 = self.model.polarizability.as_ref().map(|p| p.matrix());
        match n {
            2 => self.acc = small::endpoint::<2>(h0, h1, h2, amplitudes, dt),
            3 => self.acc = small::endpoint::<3>(h0, h1, h2, amplitudes, dt),
            4 => self.acc = small::endpoint::<4>(h0, h1, h2, amplitudes, dt),
            _ => self.endpoint_general(amplitudes, dt),
        }
        &self.acc
    }

    fn endpoint_general(&mut self, amplitudes: &[f64], dt: f64) {
        self.acc = ComplexMatrix::identity(self.model.dim());
        for &e in amplitudes {
            self.model.scaled_generator_into(e, dt, &mut self.gen);
            expm_into(&self.gen, &mut self.step, &mut self.scratch);
            mul_into(&self.step, &self.acc, &mut self.tmp);
            std::mem::swap(&mut self.acc, &mut self.tmp);
        }
    }

    /// All `K + 1` partial products.
    pub fn trajectory(&mut self, amplitudes: &[f64], total_time: f64) -> Vec<ComplexMatrix> {
        let dt = total_time / amplitudes.len() as f64;
        let n = self.model.dim();
        let mut out = Vec::with_capacity(amplitudes.len() + 1);
        out.push(ComplexMatrix::identity(n));
        for &e in amplitudes {
            self.model.scaled_generator_into(e, dt, &mut self.gen);
            expm_into(&self.gen, &mut self.step, &mut self.scratch);
            let mut next = ComplexMatrix::zeros(n);
            mul_into(&self.step, out.last().unwrap(), &mut next);
            out.push(next);
        }
        out
    }
}

fn check_compatible(model: &HamiltonianModel, field: &ControlField) -> Result<()> {
    if field.segment_count() == 0 {
        return Err(invalid("control field is empty"));
    }
    if model.dim() == 0 {
        return Err(invalid("model has zero dimension"));
    }
    Ok(())
}

/// Time-ordered product of the segment exponentials; with `keep_trajectory`
/// also returns all `K + 1` partial products.
pub fn propagate(
    model: &HamiltonianModel,
    field: &ControlField,
    keep_trajectory: bool,
) -> Result<(Unitary, Option<Trajectory>)> {
    check_compatible(model, field)?;
    let mut prop = Propagator::new(model);
    if keep_trajectory {
        let dt = field.segment_duration();
        let mats = prop.trajectory(field.amplitudes(), field.total_time());
        let times = (0..mats.len()).map(|k| k as f64 * dt).collect();
        let samples: Vec<Unitary> = mats.into_iter().map(Unitary::from_matrix_unchecked).collect();
        let end = samples.last().unwrap().clone();
        Ok((end, Some(Trajectory { samples, times })))
    } else {
        let end = prop.endpoint(field.amplitudes(), field.total_time()).clone();
        Ok((Unitary::from_matrix_unchecked(end), None))
    }
}

/// Exact left-trivialized derivative of one segment exponential.
///
/// For `A = V·diag(iλ)·V†` and direction `X`,
/// `exp(−ΔtA)·d/ds exp(Δt(A + sX)) = ∫_0^Δt exp(−τA)·X·exp(τA) dτ`,
/// whose eigenbasis entries are `X̃_jl·φ(λ_l − λ_j)` with
/// `φ(ω) = Δt·e^{iωΔt/2}·sinc(ωΔt/2)`.
pub(crate) struct SegmentDerivative {
    eig: HermitianEigen,
    dt: f64,
}

impl SegmentDerivative {
    pub(crate) fn new(generator: &ComplexMatrix, dt: f64) -> Self {
        Self {
            eig: HermitianEigen::of_skew(generator),
            dt,
        }
    }

    pub(crate) fn exponential(&self) -> ComplexMatrix {
        let dt = self.dt;
        self.eig.apply(|l| C64::from_polar(1.0, dt * l))
    }

    pub(crate) fn averaged(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let v = &self.eig.vectors;
        let lam = &self.eig.values;
        let n = v.dim();
        let mut xt = v.adjoint_mul(&x.matmul(v));
        for j in 0..n {
            for l in 0..n {
                let w = lam[l] - lam[j];
                let half = 0.5 * w * self.dt;
                let sinc = if half.abs() < 1e-8 { 1.0 - half * half / 6.0 } else { half.sin() / half };
                xt[(j, l)] *= C64::from_polar(self.dt * sinc, half);
            }
        }
        v.matmul(&xt).matmul(&v.adjoint())
    }
}

/// One su(n) element per segment: the exact derivative of the end point with
/// respect to that segment's amplitude, in the frame `U_T†·δU_T`.
///
/// Segment `k` maps to `U_k†·M_k·U_k` with `U_k` the partial product at the
/// start of the segment and `M_k` the segment average of
/// `exp(−τA_k)(iH1 + 2E_k·iH2)exp(τA_k)` (see [`SegmentDerivative`]). As
/// `Δt → 0` this tends to `Δt·U_k†(iH1 + 2E_k·iH2)U_k`.
pub fn endpoint_variation_basis(
    model: &HamiltonianModel,
    field: &ControlField,
    traj: &Trajectory,
) -> Result<Vec<SuGenerator>> {
    check_compatible(model, field)?;
    let k_total = field.segment_count();
    if traj.samples.len() != k_total + 1 {
        return Err(invalid(format!(
            "trajectory has {} samples, field needs {}",
            traj.samples.len(),
            k_total + 1
        )));
    }
    if traj.samples[0].dim() != model.dim() {
        return Err(invalid("trajectory dimension does not match the model"));
    }
    let dt = field.segment_duration();
    let mut basis = Vec::with_capacity(k_total);
    let mut gen = ComplexMatrix::zeros(model.dim());
    for (k, &e) in field.amplitudes().iter().enumerate() {
        model.scaled_generator_into(e, 1.0, &mut gen);
        let seg = SegmentDerivative::new(&gen, dt);
        let u_k = traj.samples[k].matrix();
        let predicted = seg.exponential().matmul(u_k);
        let mismatch = predicted.frobenius_distance(traj.samples[k + 1].matrix());
        if mismatch > 1e-8 {
            return Err(invalid(format!(
                "trajectory does not belong to this model and field (segment {k} off by {mismatch:.2e})"
            )));
        }
        let m = seg.averaged(model.field_derivative_at(e).matrix());
        basis.push(SuGenerator::from_matrix_unchecked(u_k.conjugate_adjoint(&m)));
    }
    Ok(basis)
}
