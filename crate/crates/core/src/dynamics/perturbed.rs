use std::f64::consts::TAU;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linear::LinearPHSystem;
use crate::error::{Error, Result};

/// One Fourier mode `cos * cos(2 pi k.x) + sin * sin(2 pi k.x)` added to a
/// single output coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub component: usize,
    pub wave: Vec<i32>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// Periodic vector field on the torus given as a finite trigonometric
/// polynomial per coordinate.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrigPerturbation {
    pub terms: Vec<TrigTerm>,
}

impl TrigPerturbation {
    pub fn new(terms: Vec<TrigTerm>) -> Self {
        Self { terms }
    }

    fn validate(&self, d: usize) -> Result<()> {
        for t in &self.terms {
            if t.component >= d {
                return Err(Error::InvalidSystem(format!(
                    "perturbation component {} out of range for dimension {d}",
                    t.component
                )));
            }
            if t.wave.len() != d {
                return Err(Error::DimensionMismatch(t.wave.len(), d));
            }
            if !t.cos.is_finite() || !t.sin.is_finite() {
                return Err(Error::InvalidSystem("non-finite perturbation coefficient".into()));
            }
        }
        Ok(())
    }

    fn phase(t: &TrigTerm, p: &[f64]) -> f64 {
        TAU * t
            .wave
            .iter()
            .zip(p)
            .map(|(&k, &x)| k as f64 * x)
            .sum::<f64>()
    }

    /// Adds `scale * P(p)` to `out`.
    pub fn add_value(&self, p: &[f64], scale: f64, out: &mut [f64]) {
        for t in &self.terms {
            let (s, c) = Self::phase(t, p).sin_cos();
            out[t.component] += scale * (t.cos * c + t.sin * s);
        }
    }

    /// Adds `scale * DP(p)` to `jac`.
    pub fn add_jacobian(&self, p: &[f64], scale: f64, jac: &mut DMatrix<f64>) {
        for t in &self.terms {
            let (s, c) = Self::phase(t, p).sin_cos();
            let amp = scale * TAU * (-t.cos * s + t.sin * c);
            for (j, &k) in t.wave.iter().enumerate() {
                if k != 0 {
                    jac[(t.component, j)] += amp * k as f64;
                }
            }
        }
    }

    /// Bound on the sup norm of `P`.
    pub fn sup_bound(&self, d: usize) -> f64 {
        let mut per = vec![0.0; d];
        for t in &self.terms {
            per[t.component] += t.cos.abs() + t.sin.abs();
        }
        per.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius bound on the sup norm of `DP`.
    pub fn derivative_bound(&self, d: usize) -> f64 {
        let mut rows = vec![vec![0.0; d]; d];
        for t in &self.terms {
            let amp = TAU * (t.cos.abs() + t.sin.abs());
            for (j, &k) in t.wave.iter().enumerate() {
                rows[t.component][j] += amp * (k as f64).abs();
            }
        }
        rows.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest `|k|` over the modes; sets the spatial frequency scale.
    pub fn max_wave_norm(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.wave.iter().map(|&k| (k as f64).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// `x -> A x + b + magnitude * P(x) (mod 1)`.
#[derive(Debug, Clone)]
pub struct PerturbedSystem {
    base: LinearPHSystem,
    perturbation: TrigPerturbation,
    magnitude: f64,
}

const INJECTIVITY_SAMPLES: usize = 512;
const INJECTIVITY_SEED: u64 = 0x5eed_1a7e;

impl PerturbedSystem {
    /// Validated constructor: the magnitude must sit below the
    /// cone-preservation threshold and the Jacobian determinant must keep the
    /// sign of `det A` on sampled points.
    pub fn new(base: LinearPHSystem, perturbation: TrigPerturbation, magnitude: f64) -> Result<Self> {
        let sys = Self::new_unchecked(base, perturbation, magnitude)?;
        if !sys.below_threshold() {
            return Err(Error::InvalidSystem(format!(
                "magnitude {} exceeds cone-preservation threshold {}",
                magnitude,
                sys.threshold()
            )));
        }
        sys.check_orientation()?;
        Ok(sys)
    }

    /// Skips the threshold and injectivity checks (structural validation only).
    pub fn new_unchecked(
        base: LinearPHSystem,
        perturbation: TrigPerturbation,
        magnitude: f64,
    ) -> Result<Self> {
        if !(magnitude >= 0.0) || !magnitude.is_finite() {
            return Err(Error::InvalidSystem("magnitude must be finite and >= 0".into()));
        }
        perturbation.validate(base.dim())?;
        Ok(Self {
            base,
            perturbation,
            magnitude,
        })
    }

    pub fn base(&self) -> &LinearPHSystem {
        &self.base
    }

    pub fn perturbation(&self) -> &TrigPerturbation {
        &self.perturbation
    }

    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Largest admissible magnitude: `m (1 + |DP|) < (lambda - 1) / 4`.
    pub fn threshold(&self) -> f64 {
        let lam = self.base.expansion_rate();
        (lam - 1.0) / 4.0 / (1.0 + self.perturbation.derivative_bound(self.dim()))
    }

    pub fn below_threshold(&self) -> bool {
        self.magnitude < self.threshold()
    }

    /// Lipschitz bound of `magnitude * P`.
    pub fn lipschitz(&self) -> f64 {
        self.magnitude * self.perturbation.derivative_bound(self.dim())
    }

    fn check_orientation(&self) -> Result<()> {
        let d = self.dim();
        let sign = self.base.derivative().determinant().signum();
        let mut rng = ChaCha8Rng::seed_from_u64(INJECTIVITY_SEED);
        let mut p = vec![0.0; d];
        for _ in 0..INJECTIVITY_SAMPLES {
            p.iter_mut().for_each(|x| *x = rng.gen::<f64>());
            let det = self.jacobian(&p).determinant();
            if det * sign <= 0.0 {
                return Err(Error::InvalidSystem(format!(
                    "Jacobian determinant changes sign at {p:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn lift_map_into(&self, p: &[f64], out: &mut [f64]) {
        self.base.lift_map_into(p, out);
        if self.magnitude != 0.0 {
            self.perturbation.add_value(p, self.magnitude, out);
        }
    }

    pub fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let mut j = self.base.derivative().clone();
        if self.magnitude != 0.0 {
            self.perturbation.add_jacobian(p, self.magnitude, &mut j);
        }
        j
    }

    /// `out = D_p F v` without forming the Jacobian.
    pub fn push_vector(&self, p: &[f64], v: &[f64], out: &mut [f64]) {
        let a = self.base.derivative();
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..v.len()).map(|k| a[(i, k)] * v[k]).sum();
        }
        if self.magnitude != 0.0 {
            for t in &self.perturbation.terms {
                let (s, c) = TrigPerturbation::phase(t, p).sin_cos();
                let amp = self.magnitude * TAU * (-t.cos * s + t.sin * c);
                let kv: f64 = t.wave.iter().zip(v).map(|(&k, &x)| k as f64 * x).sum();
                out[t.component] += amp * kv;
            }
        }
    }

    /// Preimage on the universal cover by the contraction
    /// `p = A^{-1} (q - b - m P(p))`.
    pub fn lift_inverse(&self, q: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        let a_inv = self.base.inverse_matrix();
        let b = self.base.translation();
        let rhs = |pert: &[f64]| -> Vec<f64> {
            let v: Vec<f64> = (0..d).map(|i| q[i] - b[i] - pert[i]).collect();
            (0..d)
                .map(|i| (0..d).map(|j| a_inv[(i, j)] * v[j]).sum())
                .collect()
        };
        let zero = vec![0.0; d];
        let mut p = rhs(&zero);
        if self.magnitude == 0.0 {
            return Ok(p);
        }
        for _ in 0..200 {
            let mut pert = vec![0.0; d];
            self.perturbation.add_value(&p, self.magnitude, &mut pert);
            let next = rhs(&pert);
            let delta = next
                .iter()
                .zip(&p)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            p = next;
            if delta <= 1e-15 * (1.0 + p.iter().map(|v| v.abs()).fold(0.0, f64::max)) {
                return Ok(p);
            }
        }
        Err(Error::NoConvergence("inverse map iteration did not settle".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catrot() -> LinearPHSystem {
        LinearPHSystem::new(
            vec![vec![2, 1, 0], vec![1, 1, 0], vec![0, 0, 1]],
            vec![0.0, 0.0, (5f64.sqrt() - 1.0) / 2.0],
        )
        .unwrap()
    }

    fn coupling() -> TrigPerturbation {
        TrigPerturbation::new(vec![
            TrigTerm { component: 0, wave: vec![0, 0, 1], cos: 0.0, sin: 1.0 },
            TrigTerm { component: 2, wave: vec![1, 0, 0], cos: 0.0, sin: 1.0 },
        ])
    }

    #[test]
    fn threshold_rejects_large_magnitude() {
        let err = PerturbedSystem::new(catrot(), coupling(), 0.5).unwrap_err();
        assert!(matches!(err, Error::InvalidSystem(_)));
        assert!(PerturbedSystem::new(catrot(), coupling(), 0.01).is_ok());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let sys = PerturbedSystem::new(catrot(), coupling(), 0.02).unwrap();
        let p = [0.21, 0.73, 0.44];
        let jac = sys.jacobian(&p);
        let h = 1e-6;
        for j in 0..3 {
            let mut plus = p;
            let mut minus = p;
            plus[j] += h;
            minus[j] -= h;
            let (mut fp, mut fm) = ([0.0; 3], [0.0; 3]);
            sys.lift_map_into(&plus, &mut fp);
            sys.lift_map_into(&minus, &mut fm);
            for i in 0..3 {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                assert!((fd - jac[(i, j)]).abs() < 1e-7, "({i},{j})");
            }
        }
    }

    #[test]
    fn inverse_round_trips() {
        let sys = PerturbedSystem::new(catrot(), coupling(), 0.03).unwrap();
        let p = [0.3, -0.2, 1.7];
        let mut q = [0.0; 3];
        sys.lift_map_into(&p, &mut q);
        let back = sys.lift_inverse(&q).unwrap();
        for i in 0..3 {
            assert!((back[i] - p[i]).abs() < 1e-13);
        }
    }
}
