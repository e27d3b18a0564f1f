use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{SystemSpec, TorusPoint};
use crate::error::{Error, Result};
use crate::numeric::mean_stderr;

/// Tolerance for verifying that a periodic orbit closes up.
pub const CYCLE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MeasureKind {
    /// Lebesgue measure on the torus.
    HaarVolume,
    /// Uniform measure on a periodic orbit.
    PeriodicOrbit { points: Vec<Vec<f64>> },
    /// Lebesgue measure on the circle `{point + s e_axis}`, for systems that
    /// act on that circle by an irrational rotation.
    CenterCircle { point: Vec<f64>, axis: usize },
    /// Uniform measure on a finite orbit segment.
    EmpiricalOrbit { seed: Vec<f64>, length: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Analytic,
    AssumedZero,
    Unavailable,
}

/// An invariant measure surrogate with its unstable entropy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureEntry {
    pub kind: MeasureKind,
    /// Unstable metric entropy; `None` when unavailable.
    pub hu: Option<f64>,
    pub provenance: Provenance,
    pub description: String,
}

impl MeasureEntry {
    /// Volume. Its unstable entropy is the sum of the unstable log-eigenvalues
    /// on affine systems and unavailable otherwise.
    pub fn haar(sys: &SystemSpec) -> Self {
        let (hu, provenance) = match sys {
            SystemSpec::Linear(s) => (Some(s.unstable_log_volume_growth()), Provenance::Analytic),
            SystemSpec::Perturbed(_) => (None, Provenance::Unavailable),
        };
        Self {
            kind: MeasureKind::HaarVolume,
            hu,
            provenance,
            description: "Haar volume".into(),
        }
    }

    /// Orbit measure of a verified cycle `p_0 -> p_1 -> ... -> p_0`.
    pub fn periodic_orbit(sys: &SystemSpec, points: Vec<TorusPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::NotPeriodic("empty orbit".into()));
        }
        for p in &points {
            if p.dim() != sys.dim() {
                return Err(Error::DimensionMismatch(p.dim(), sys.dim()));
            }
        }
        let k = points.len();
        for i in 0..k {
            let image = sys.apply_map(&points[i]);
            let gap = image.distance(&points[(i + 1) % k]);
            if gap > CYCLE_TOLERANCE {
                return Err(Error::NotPeriodic(format!(
                    "point {i} maps {gap:e} away from its successor"
                )));
            }
        }
        Ok(Self {
            kind: MeasureKind::PeriodicOrbit {
                points: points.iter().map(|p| p.coords().to_vec()).collect(),
            },
            hu: Some(0.0),
            provenance: Provenance::Analytic,
            description: format!("periodic orbit of period {k}"),
        })
    }

    /// Fixed point `x`.
    pub fn fixed_point(sys: &SystemSpec, x: TorusPoint) -> Result<Self> {
        let mut m = Self::periodic_orbit(sys, vec![x])?;
        m.description = "fixed point".into();
        Ok(m)
    }

    /// Lebesgue measure on the circle through `point` along coordinate
    /// `axis`. The map must send the circle to itself: checked on sampled
    /// circle points. Its unstable entropy is taken to be 0 since it is
    /// carried by a circle transverse to the unstable foliation.
    pub fn center_circle(sys: &SystemSpec, point: TorusPoint, axis: usize) -> Result<Self> {
        let d = sys.dim();
        if point.dim() != d {
            return Err(Error::DimensionMismatch(point.dim(), d));
        }
        if axis >= d {
            return Err(Error::InvalidArgument(format!("axis {axis} out of range")));
        }
        for i in 0..16 {
            let mut c = point.coords().to_vec();
            c[axis] = i as f64 / 16.0;
            let image = sys.apply_map(&TorusPoint::new(c));
            let mut proj = image.coords().to_vec();
            proj[axis] = point.coords()[axis];
            let gap = TorusPoint::new(proj).distance(&point);
            if gap > CYCLE_TOLERANCE {
                return Err(Error::NotPeriodic(format!(
                    "circle is not invariant (defect {gap:e})"
                )));
            }
        }
        Ok(Self {
            kind: MeasureKind::CenterCircle {
                point: point.coords().to_vec(),
                axis,
            },
            hu: Some(0.0),
            provenance: Provenance::AssumedZero,
            description: format!("Lebesgue on the invariant circle along axis {axis}"),
        })
    }

    pub fn empirical_orbit(seed: TorusPoint, length: usize) -> Result<Self> {
        if length == 0 {
            return Err(Error::InvalidArgument("orbit length must be >= 1".into()));
        }
        Ok(Self {
            kind: MeasureKind::EmpiricalOrbit {
                seed: seed.coords().to_vec(),
                length,
            },
            hu: None,
            provenance: Provenance::Unavailable,
            description: format!("empirical orbit of length {length}"),
        })
    }

    /// Rebuilds an entry from its kind, re-running the invariance checks.
    pub fn from_kind(sys: &SystemSpec, kind: &MeasureKind) -> Result<Self> {
        let d = sys.dim();
        let point = |c: &Vec<f64>| {
            if c.len() == d {
                Ok(TorusPoint::new(c.clone()))
            } else {
                Err(Error::DimensionMismatch(c.len(), d))
            }
        };
        match kind {
            MeasureKind::HaarVolume => Ok(Self::haar(sys)),
            MeasureKind::PeriodicOrbit { points } if points.len() == 1 => Self::fixed_point(sys, point(&points[0])?),
            MeasureKind::PeriodicOrbit { points } => {
                Self::periodic_orbit(sys, points.iter().map(point).collect::<Result<_>>()?)
            }
            MeasureKind::CenterCircle { point: p, axis } => Self::center_circle(sys, point(p)?, *axis),
            MeasureKind::EmpiricalOrbit { seed, length } => Self::empirical_orbit(point(seed)?, *length),
        }
    }

    /// Whether the entry may enter a certified supremum.
    pub fn certified(&self) -> bool {
        self.provenance != Provenance::Unavailable && self.hu.is_some()
    }

    /// Whether integrals are exact averages (stderr identically 0).
    pub fn is_exact(&self) -> bool {
        matches!(
            self.kind,
            MeasureKind::PeriodicOrbit { .. } | MeasureKind::CenterCircle { .. }
        )
    }

    /// Support points used for integration: seeded uniform samples for
    /// volume, the orbit points, a midpoint grid on the circle, or the orbit
    /// segment.
    pub fn support_points(&self, sys: &SystemSpec, samples: usize, seed: u64) -> Vec<TorusPoint> {
        match &self.kind {
            MeasureKind::HaarVolume => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..samples)
                    .map(|_| TorusPoint::new((0..sys.dim()).map(|_| rng.gen::<f64>()).collect()))
                    .collect()
            }
            MeasureKind::PeriodicOrbit { points } => {
                points.iter().map(|p| TorusPoint::new(p.clone())).collect()
            }
            MeasureKind::CenterCircle { point, axis } => (0..samples.max(1))
                .map(|i| {
                    let mut c = point.clone();
                    c[*axis] = (i as f64 + 0.5) / samples.max(1) as f64;
                    TorusPoint::new(c)
                })
                .collect(),
            MeasureKind::EmpiricalOrbit { seed, length } => {
                let mut cur = TorusPoint::new(seed.clone());
                let mut out = Vec::with_capacity(*length);
                for _ in 0..*length {
                    out.push(cur.clone());
                    cur = sys.apply_map(&cur);
                }
                out
            }
        }
    }

    /// Mean and standard error of `f` against the measure.
    pub fn integrate<F>(&self, sys: &SystemSpec, samples: usize, seed: u64, f: F) -> Result<(f64, f64)>
    where
        F: Fn(&TorusPoint) -> Result<f64> + Sync,
    {
        let pts = self.support_points(sys, samples, seed);
        let values: Vec<f64> = pts.par_iter().map(&f).collect::<Result<_>>()?;
        let (mean, stderr) = mean_stderr(&values);
        Ok((mean, if self.is_exact() { 0.0 } else { stderr }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haar_entropy_is_log_lambda() {
        let sys = SystemSpec::cat_rotation(SystemSpec::golden_angle());
        let h = MeasureEntry::haar(&sys);
        let lam = (3.0 + 5f64.sqrt()) / 2.0;
        assert!((h.hu.unwrap() - lam.ln()).abs() < 1e-14);
        assert_eq!(h.provenance, Provenance::Analytic);
    }

    #[test]
    fn periodic_orbit_is_verified() {
        let cat = SystemSpec::cat_map();
        assert!(MeasureEntry::fixed_point(&cat, TorusPoint::origin(2)).is_ok());
        // (0.2, 0.4) -> (0.8, 0.6) -> (0.2, 0.4) has period 2
        let orbit = vec![
            TorusPoint::new(vec![0.2, 0.4]),
            TorusPoint::new(vec![0.8, 0.6]),
        ];
        let m = MeasureEntry::periodic_orbit(&cat, orbit).unwrap();
        assert_eq!(m.hu, Some(0.0));
        let bad = MeasureEntry::periodic_orbit(&cat, vec![TorusPoint::new(vec![0.1, 0.0])]);
        assert!(matches!(bad, Err(Error::NotPeriodic(_))));
        let catrot = SystemSpec::cat_rotation(SystemSpec::golden_angle());
        assert!(MeasureEntry::fixed_point(&catrot, TorusPoint::origin(3)).is_err());
    }

    #[test]
    fn center_circle_requires_invariance() {
        let catrot = SystemSpec::cat_rotation(SystemSpec::golden_angle());
        let m = MeasureEntry::center_circle(&catrot, TorusPoint::origin(3), 2).unwrap();
        assert_eq!(m.provenance, Provenance::AssumedZero);
        assert!(MeasureEntry::center_circle(&catrot, TorusPoint::origin(3), 0).is_err());
        assert!(
            MeasureEntry::center_circle(&catrot, TorusPoint::new(vec![0.1, 0.0, 0.0]), 2).is_err()
        );
    }

    #[test]
    fn integrals_are_deterministic() {
        let sys = SystemSpec::cat_rotation(SystemSpec::golden_angle());
        let h = MeasureEntry::haar(&sys);
        let f = |p: &TorusPoint| Ok((std::f64::consts::TAU * p.coords()[0]).cos());
        let a = h.integrate(&sys, 4000, 9, f).unwrap();
        let b = h.integrate(&sys, 4000, 9, f).unwrap();
        assert_eq!(a, b);
        assert!(a.0.abs() < 4.0 * a.1);
        let e = MeasureEntry::empirical_orbit(TorusPoint::new(vec![0.1, 0.2, 0.3]), 10).unwrap();
        assert!(!e.certified());
    }

    #[test]
    fn from_kind_rebuilds_entries() {
        let cat = SystemSpec::cat_map();
        for m in [
            MeasureEntry::haar(&cat),
            MeasureEntry::fixed_point(&cat, TorusPoint::origin(2)).unwrap(),
            MeasureEntry::periodic_orbit(&cat, vec![TorusPoint::new(vec![0.2, 0.4]), TorusPoint::new(vec![0.8, 0.6])])
                .unwrap(),
            MeasureEntry::empirical_orbit(TorusPoint::new(vec![0.1, 0.2]), 5).unwrap(),
        ] {
            assert_eq!(MeasureEntry::from_kind(&cat, &m.kind).unwrap(), m);
        }
        let short = MeasureKind::PeriodicOrbit { points: vec![vec![0.0]] };
        assert!(matches!(MeasureEntry::from_kind(&cat, &short), Err(Error::DimensionMismatch(1, 2))));
    }
}
