// Copyright 2026 polarlandscape Contributors
// SPDX-License-Identifier: Apache-2.0

//! Concrete systems: the uncontrollable two-qubit Heisenberg family, the
//! three-level "system E" with a known zero-field trap, and seeded random tuples.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dynamics::HamiltonianModel;
use crate::error::{invalid, Result};
use crate::landscape::GoalGate;
use crate::matrix::{
    expm_skew, pauli, random_su, random_su_with, random_unitary_goal_with, seeded_rng, ComplexMatrix, SuGenerator,
    C64,
};

/// Coupling strengths `(Jx, Jy, Jz)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeisenbergParams {
    pub j: [f64; 3],
}

impl HeisenbergParams {
    pub fn new(j: [f64; 3]) -> Result<Self> {
        if j.iter().any(|x| !x.is_finite()) {
            return Err(invalid("Heisenberg couplings must be finite"));
        }
        Ok(Self { j })
    }

    /// Uniform direction on the unit sphere, `‖J‖ = 1`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let v: [f64; 3] = [
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            ];
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                return Self {
                    j: [v[0] / norm, v[1] / norm, v[2] / norm],
                };
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.j.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// `iH0 = Jx·iσx⊗σx + Jy·iσy⊗σy + Jz·iσz⊗σz`, `iH1 = i·I⊗σz`; no polarizability.
pub fn heisenberg_model(params: &HeisenbergParams) -> Result<HamiltonianModel> {
    let [jx, jy, jz] = params.j;
    let xx = pauli::kron(&pauli::x(), &pauli::x());
    let yy = pauli::kron(&pauli::y(), &pauli::y());
    let zz = pauli::kron(&pauli::z(), &pauli::z());
    let mut h0 = xx.scale(jx);
    h0.axpy(jy, &yy);
    h0.axpy(jz, &zz);
    let h1 = pauli::kron(&pauli::identity(), &pauli::z());
    HamiltonianModel::dipole(SuGenerator::from_hermitian(&h0)?, SuGenerator::from_hermitian(&h1)?)
}

/// Adds a seeded random `iH2` of Frobenius norm `norm`.
pub fn with_polarizability(model: &HamiltonianModel, seed: u64, norm: f64) -> Result<HamiltonianModel> {
    if !(norm > 0.0) {
        return Err(invalid("polarizability norm must be positive"));
    }
    let h2 = random_su(model.dim(), seed, norm)?;
    model.with_polarizability(Some(h2))
}

/// Parameters of system E.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemEParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub theta: f64,
    pub phi: f64,
    pub total_time: f64,
    pub alpha: f64,
}

impl Default for SystemEParams {
    fn default() -> Self {
        Self {
            a: 5.0 * (2.0f64 / 3.0).sqrt(),
            b: 4.0,
            c: 1.0,
            theta: 2.0 * PI / 3.0,
            phi: -3.0 * PI / 4.0,
            total_time: 1000.0,
            alpha: PI / 1000.0,
        }
    }
}

impl SystemEParams {
    /// Anything other than the reference values must be requested explicitly.
    pub fn variant(params: SystemEParams, allow_variant: bool) -> Result<Self> {
        if params != Self::default() && !allow_variant {
            return Err(invalid("system E parameters differ from the reference values; set the variant flag"));
        }
        Ok(params)
    }

    pub fn h0(&self) -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[
            vec![1.0 + self.alpha, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 2.0],
        ])
        .expect("3x3")
    }

    pub fn h1(&self) -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[
            vec![-self.a, -1.0, 0.0],
            vec![-1.0, -self.b, -1.0],
            vec![0.0, -1.0, -self.c],
        ])
        .expect("3x3")
    }
}

/// System E built from `params`. The generators are `−iH0`, `−iH1` (with trace,
/// in u(3)) so the zero-field propagator is `exp(−iH0·T)`, matching the goal
/// `W = diag(e^{iθ}, −ie^{−iφ}, −ie^{iφ})·exp(−iH0·T)`, projected to SU(3).
pub fn system_e_with(
    params: &SystemEParams,
    h2_seed: Option<u64>,
) -> Result<(HamiltonianModel, GoalGate, f64)> {
    let i = C64::new(0.0, 1.0);
    let ih0 = SuGenerator::new_unitary_algebra(params.h0().scale_complex(-i))?;
    let ih1 = SuGenerator::new_unitary_algebra(params.h1().scale_complex(-i))?;
    let h2 = match h2_seed {
        Some(seed) => Some(random_su(3, seed, ih1.norm() / 10.0)?),
        None => None,
    };
    let model = HamiltonianModel::new(ih0.clone(), ih1, h2)?;
    let phases = ComplexMatrix::diagonal(&[
        C64::from_polar(1.0, params.theta),
        -i * C64::from_polar(1.0, -params.phi),
        -i * C64::from_polar(1.0, params.phi),
    ]);
    let free = expm_skew(&ih0, params.total_time)?;
    let w = crate::matrix::Unitary::new(phases.matmul(free.matrix()))?;
    Ok((model, GoalGate::projected(w), params.total_time))
}

/// System E with the reference parameters; with `h2_seed` a random `iH2` with
/// `‖iH2‖_F = ‖iH1‖_F / 10` is added.
pub fn system_e(h2_seed: Option<u64>) -> Result<(HamiltonianModel, GoalGate, f64)> {
    system_e_with(&SystemEParams::default(), h2_seed)
}

/// Seeded random `(iH0, iH1, iH2?)` with the requested norms and a Haar goal.
pub fn random_tuple(
    n: usize,
    seed: u64,
    norm_h0: f64,
    norm_h1: f64,
    norm_h2: Option<f64>,
) -> Result<(HamiltonianModel, GoalGate)> {
    if n < 2 {
        return Err(invalid(format!("random_tuple needs n >= 2, got {n}")));
    }
    let mut rng = seeded_rng(seed);
    let h0 = random_su_with(n, &mut rng, norm_h0)?;
    let h1 = random_su_with(n, &mut rng, norm_h1)?;
    let goal = random_unitary_goal_with(n, &mut rng)?;
    let h2 = match norm_h2 {
        Some(norm) => Some(random_su_with(n, &mut rng, norm)?),
        None => None,
    };
    Ok((HamiltonianModel::new(h0, h1, h2)?, GoalGate::new(goal)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::lie_closure_rank;

    fn closure(m: &HamiltonianModel) -> usize {
        let mut gens = vec![m.drift().clone(), m.control().clone()];
        if let Some(p) = m.polarizability() {
            gens.push(p.clone());
        }
        lie_closure_rank(&gens).unwrap()
    }

    #[test]
    fn single_coupling_heisenberg_drift() {
        let m = heisenberg_model(&HeisenbergParams::new([1.0, 0.0, 0.0]).unwrap()).unwrap();
        let i = C64::new(0.0, 1.0);
        let o = C64::new(0.0, 0.0);
        // σx⊗σx is the anti-diagonal of ones
        let expected = ComplexMatrix::from_rows(&[
            vec![o, o, o, i],
            vec![o, o, i, o],
            vec![o, i, o, o],
            vec![i, o, o, o],
        ])
        .unwrap();
        assert_eq!(m.drift().matrix(), &expected);
        let h1 = ComplexMatrix::diagonal(&[i, -i, i, -i]);
        assert_eq!(m.control().matrix(), &h1);
        assert!(m.polarizability().is_none());
    }

    #[test]
    fn isotropic_heisenberg_is_uncontrollable() {
        let s = 1.0 / 3.0f64.sqrt();
        let m = heisenberg_model(&HeisenbergParams::new([s, s, s]).unwrap()).unwrap();
        assert!(closure(&m) < 15);
    }

    #[test]
    fn commuting_heisenberg_pair() {
        let m = heisenberg_model(&HeisenbergParams::new([0.0, 0.0, 1.0]).unwrap()).unwrap();
        assert!(closure(&m) <= 2);
    }

    #[test]
    fn polarizability_restores_controllability() {
        let mut rng = seeded_rng(3);
        let m = heisenberg_model(&HeisenbergParams::random(&mut rng)).unwrap();
        assert!(closure(&m) < 15);
        let m2 = with_polarizability(&m, 17, 0.2).unwrap();
        assert_eq!(closure(&m2), 15);
        assert!((m2.polarizability().unwrap().norm() - 0.2).abs() <= 1e-12);
        let again = with_polarizability(&m, 17, 0.2).unwrap();
        assert_eq!(m2, again);
        assert!(with_polarizability(&m, 17, 0.0).is_err());
    }

    #[test]
    fn random_coupling_has_unit_norm() {
        let mut rng = seeded_rng(5);
        for _ in 0..20 {
            assert!((HeisenbergParams::random(&mut rng).norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn system_e_values() {
        let p = SystemEParams::default();
        assert!((p.a - 4.0824829046386).abs() < 1e-12);
        assert_eq!(p.h1()[(0, 0)].re, -p.a);
        assert_eq!(p.h0()[(0, 0)].re, 1.0 + PI / 1000.0);
        assert!((p.total_time - PI / p.alpha).abs() < 1e-9);
        // H0 and H1 are real symmetric
        for m in [p.h0(), p.h1()] {
            for r in 0..3 {
                for c in 0..3 {
                    assert_eq!(m[(r, c)], m[(c, r)]);
                    assert_eq!(m[(r, c)].im, 0.0);
                }
            }
        }
        let (model, goal, t) = system_e(None).unwrap();
        assert_eq!(t, 1000.0);
        assert!(model.is_unitary_algebra());
        assert!((goal.unitary().determinant() - C64::new(1.0, 0.0)).norm() < 1e-9);

        let (with_h2, _, _) = system_e(Some(4)).unwrap();
        let ratio = with_h2.polarizability().unwrap().norm() / with_h2.control().norm();
        assert!((ratio - 0.1).abs() <= 1e-12);
    }

    #[test]
    fn system_e_variant_flag() {
        let mut p = SystemEParams::default();
        assert!(SystemEParams::variant(p, false).is_ok());
        p.b = 3.0;
        assert!(SystemEParams::variant(p, false).is_err());
        assert!(SystemEParams::variant(p, true).is_ok());
    }

    #[test]
    fn zero_field_fidelity_of_system_e() {
        // At E = 0 the end point is exp(−iH0·T), so J = |Tr(D†)|²/9 with D the phase matrix.
        let (model, goal, t) = system_e(None).unwrap();
        let u = expm_skew(model.drift(), t).unwrap();
        let f = crate::landscape::fidelity(&u, &goal).unwrap();
        let p = SystemEParams::default();
        let tr = C64::from_polar(1.0, -p.theta)
            + C64::new(0.0, 1.0) * C64::from_polar(1.0, p.phi)
            + C64::new(0.0, 1.0) * C64::from_polar(1.0, -p.phi);
        assert!((f - tr.norm_sqr() / 9.0).abs() < 1e-9);
    }

    #[test]
    fn system_e_zero_field_gradient_is_uniform() {
        // At E = 0 every U_t is diagonal and W†U_T = D†, so each segment sees
        // Δt·(2/9)·Re(−i·z̄·Σ_j d̄_j·H1_jj) with z = Σ_j d̄_j.
        use crate::dynamics::ControlField;
        let (model, goal, t) = system_e(None).unwrap();
        let k = 400;
        let field = ControlField::zeros(k, t).unwrap();
        let g = crate::landscape::fidelity_gradient(&model, &field, &goal).unwrap();
        let p = SystemEParams::default();
        let i = C64::new(0.0, 1.0);
        let d = [
            C64::from_polar(1.0, p.theta),
            -i * C64::from_polar(1.0, -p.phi),
            -i * C64::from_polar(1.0, p.phi),
        ];
        let h1 = p.h1();
        let z: C64 = d.iter().map(|x| x.conj()).sum();
        let s: C64 = (0..3).map(|j| d[j].conj() * h1[(j, j)]).sum();
        let expected = (t / k as f64) * (2.0 / 9.0) * (-i * z.conj() * s).re;
        assert!(expected.abs() > 0.1);
        for gk in g {
            assert!((gk - expected).abs() <= 1e-9 * expected.abs(), "{gk} vs {expected}");
        }
    }

    #[test]
    fn random_tuple_contract() {
        let (m1, g1) = random_tuple(4, 7, 1.0, 0.5, Some(0.25)).unwrap();
        let (m2, g2) = random_tuple(4, 7, 1.0, 0.5, Some(0.25)).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(g1, g2);
        assert!((m1.drift().norm() - 1.0).abs() <= 1e-12);
        assert!((m1.control().norm() - 0.5).abs() <= 1e-12);
        assert!((m1.polarizability().unwrap().norm() - 0.25).abs() <= 1e-12);
        let pair = lie_closure_rank(&[m1.drift().clone(), m1.control().clone()]).unwrap();
        assert_eq!(pair, 15);
        assert!(random_tuple(1, 0, 1.0, 1.0, None).is_err());
    }
}
