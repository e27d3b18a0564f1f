//! Partially hyperbolic maps of the d-torus: affine automorphisms and their
//! trigonometric perturbations, derivative cocycles restricted to the
//! unstable bundle, and a sampled check of the dominated splitting.

mod linear;
mod perturbed;

pub use linear::{Bundle, LinearPHSystem};
pub use perturbed::{PerturbedSystem, TrigPerturbation, TrigTerm};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Torus points compare equal when their torus distance is below this.
pub const POINT_TOLERANCE: f64 = 1e-12;

/// Number of preimages used to relax onto the invariant bundles of a
/// perturbed map.
const FRAME_DEPTH: usize = 48;

/// Reduces a real number into `[0, 1)`.
#[inline]
pub fn reduce_coord(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// A point of the torus, coordinates reduced into `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    coords: Vec<f64>,
}

impl TorusPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        Self {
            coords: coords.into_iter().map(reduce_coord).collect(),
        }
    }

    pub fn origin(d: usize) -> Self {
        Self { coords: vec![0.0; d] }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn reduce(&self) -> Self {
        Self::new(self.coords.clone())
    }

    /// Euclidean distance on the flat torus.
    pub fn distance(&self, other: &TorusPoint) -> f64 {
        torus_distance(&self.coords, &other.coords)
    }

    pub fn approx_eq(&self, other: &TorusPoint) -> bool {
        self.distance(other) < POINT_TOLERANCE
    }
}

/// Flat-torus distance between two (not necessarily reduced) coordinate vectors.
pub fn torus_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = reduce_coord(x - y);
            let d = d.min(1.0 - d);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// The supported systems.
#[derive(Debug, Clone)]
pub enum SystemSpec {
    Linear(LinearPHSystem),
    Perturbed(PerturbedSystem),
}

/// Plain-data form of a [`SystemSpec`]: integer matrix rows, translation,
/// optional perturbation table and its magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDescription {
    pub matrix: Vec<Vec<i64>>,
    #[serde(default)]
    pub translation: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<TrigPerturbation>,
    #[serde(default)]
    pub magnitude: f64,
}

impl TryFrom<SystemDescription> for SystemSpec {
    type Error = Error;

    fn try_from(d: SystemDescription) -> Result<Self> {
        let translation = if d.translation.is_empty() {
            vec![0.0; d.matrix.len()]
        } else {
            d.translation
        };
        let base = LinearPHSystem::new(d.matrix, translation)?;
        match d.perturbation {
            None if d.magnitude == 0.0 => Ok(base.into()),
            None => Err(Error::InvalidSystem("magnitude given without a perturbation".into())),
            Some(p) => Ok(PerturbedSystem::new(base, p, d.magnitude)?.into()),
        }
    }
}

impl From<&SystemSpec> for SystemDescription {
    fn from(s: &SystemSpec) -> Self {
        let lin = s.linear_part();
        let (perturbation, magnitude) = match s {
            SystemSpec::Linear(_) => (None, 0.0),
            SystemSpec::Perturbed(p) => (Some(p.perturbation().clone()), p.magnitude()),
        };
        Self {
            matrix: lin.matrix().to_vec(),
            translation: lin.translation().to_vec(),
            perturbation,
            magnitude,
        }
    }
}

impl From<SystemSpec> for SystemDescription {
    fn from(s: SystemSpec) -> Self {
        (&s).into()
    }
}

impl PartialEq for SystemSpec {
    fn eq(&self, other: &Self) -> bool {
        SystemDescription::from(self) == SystemDescription::from(other)
    }
}

impl Serialize for SystemSpec {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        SystemDescription::from(self).serialize(ser)
    }
}

impl<'de> Deserialize<'de> for SystemSpec {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let d = SystemDescription::deserialize(de)?;
        SystemSpec::try_from(d).map_err(serde::de::Error::custom)
    }
}

impl From<LinearPHSystem> for SystemSpec {
    fn from(s: LinearPHSystem) -> Self {
        SystemSpec::Linear(s)
    }
}

impl From<PerturbedSystem> for SystemSpec {
    fn from(s: PerturbedSystem) -> Self {
        SystemSpec::Perturbed(s)
    }
}

impl SystemSpec {
    /// Arnold's cat map `[[2,1],[1,1]]` on the 2-torus.
    pub fn cat_map() -> Self {
        LinearPHSystem::new(vec![vec![2, 1], vec![1, 1]], vec![0.0, 0.0])
            .expect("cat map is hyperbolic")
            .into()
    }

    /// Cat map times the circle rotation by `angle` on the 3-torus.
    pub fn cat_rotation(angle: f64) -> Self {
        LinearPHSystem::new(
            vec![vec![2, 1, 0], vec![1, 1, 0], vec![0, 0, 1]],
            vec![0.0, 0.0, angle],
        )
        .expect("cat x rotation is partially hyperbolic")
        .into()
    }

    /// Golden-mean rotation angle `(sqrt 5 - 1) / 2`.
    pub fn golden_angle() -> f64 {
        (5f64.sqrt() - 1.0) / 2.0
    }

    pub fn dim(&self) -> usize {
        self.linear_part().dim()
    }

    /// The affine part (the whole system when unperturbed).
    pub fn linear_part(&self) -> &LinearPHSystem {
        match self {
            SystemSpec::Linear(s) => s,
            SystemSpec::Perturbed(s) => s.base(),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, SystemSpec::Linear(_))
    }

    /// Expansion rate of the unstable eigenvalue of the affine part.
    pub fn expansion_rate(&self) -> f64 {
        self.linear_part().expansion_rate()
    }

    /// `f` on the universal cover `R^d`.
    pub fn lift_map_into(&self, p: &[f64], out: &mut [f64]) {
        match self {
            SystemSpec::Linear(s) => s.lift_map_into(p, out),
            SystemSpec::Perturbed(s) => s.lift_map_into(p, out),
        }
    }

    pub fn lift_map(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; p.len()];
        self.lift_map_into(p, &mut out);
        out
    }

    /// `f^{-1}` on the universal cover.
    pub fn lift_inverse(&self, q: &[f64]) -> Result<Vec<f64>> {
        match self {
            SystemSpec::Linear(s) => {
                let d = s.dim();
                let a_inv = s.inverse_matrix();
                let b = s.translation();
                Ok((0..d)
                    .map(|i| (0..d).map(|j| a_inv[(i, j)] * (q[j] - b[j])).sum())
                    .collect())
            }
            SystemSpec::Perturbed(s) => s.lift_inverse(q),
        }
    }

    /// `D_p f`.
    pub fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        match self {
            SystemSpec::Linear(s) => s.derivative().clone(),
            SystemSpec::Perturbed(s) => s.jacobian(p),
        }
    }

    /// Adds `D_p f v` into `out`, allocation free for the linear case.
    pub fn push_vector(&self, p: &[f64], v: &[f64], out: &mut [f64]) {
        match self {
            SystemSpec::Linear(s) => {
                let m = s.matrix();
                for (i, row) in m.iter().enumerate() {
                    out[i] = row.iter().zip(v).map(|(&a, &x)| a as f64 * x).sum();
                }
            }
            SystemSpec::Perturbed(s) => s.push_vector(p, v, out),
        }
    }

    /// `f(p)` reduced mod 1.
    pub fn apply_map(&self, p: &TorusPoint) -> TorusPoint {
        TorusPoint::new(self.lift_map(p.coords()))
    }

    /// `f^n(p)`, reducing after every step.
    pub fn apply_iterate(&self, p: &TorusPoint, n: usize) -> TorusPoint {
        let mut cur = p.clone();
        for _ in 0..n {
            cur = self.apply_map(&cur);
        }
        cur
    }

    /// The `k`-th iterate as a system in its own right (affine systems only).
    pub fn iterate_system(&self, k: u32) -> Result<SystemSpec> {
        match self {
            SystemSpec::Linear(s) => Ok(s.iterate(k)?.into()),
            SystemSpec::Perturbed(_) => Err(Error::Unsupported(
                "iterates of perturbed systems are not modelled".into(),
            )),
        }
    }

    /// Unit vector spanning `E^u` at `p`.
    ///
    /// For perturbed systems the frame is the push-forward of the linear
    /// unstable direction along `FRAME_DEPTH` preimages; it is reported as
    /// not ready when two different seeds of the iteration disagree.
    pub fn unstable_frame(&self, p: &[f64]) -> Result<Vec<f64>> {
        let lin = self.linear_part();
        let vu = lin
            .unstable_direction()
            .ok_or_else(|| Error::FrameNotReady("system has no unstable direction".into()))?;
        match self {
            SystemSpec::Linear(_) => Ok(vu.to_vec()),
            SystemSpec::Perturbed(s) if s.magnitude() == 0.0 => Ok(vu.to_vec()),
            SystemSpec::Perturbed(_) => {
                let d = self.dim();
                let orbit = self.backward_orbit(p, FRAME_DEPTH)?;
                // second seed: tilt towards the other bundles
                let mut tilted = vu.to_vec();
                for b in lin.center().basis.iter().chain(lin.stable().basis.iter()) {
                    for i in 0..d {
                        tilted[i] += 0.3 * b[i];
                    }
                }
                let a = push_direction(self, &orbit, vu);
                let b = push_direction(self, &orbit, &tilted);
                let gap = a
                    .iter()
                    .zip(&b)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                if gap > 1e-10 {
                    return Err(Error::FrameNotReady(format!(
                        "unstable direction unsettled (gap {gap:.2e}) at {p:?}"
                    )));
                }
                Ok(a)
            }
        }
    }

    /// `p_{-depth}, ..., p_{-1}` on the universal cover (oldest first).
    fn backward_orbit(&self, p: &[f64], depth: usize) -> Result<Vec<Vec<f64>>> {
        let mut orbit = Vec::with_capacity(depth);
        let mut cur = p.to_vec();
        for _ in 0..depth {
            cur = self.lift_inverse(&cur)?;
            orbit.push(cur.clone());
        }
        orbit.reverse();
        Ok(orbit)
    }

    /// `|D_p f^n restricted to E^u|`, the product of one-step stretches of
    /// the unstable direction along the orbit.
    pub fn unstable_cocycle_norm(&self, p: &TorusPoint, n: usize) -> Result<f64> {
        Ok(self.log_unstable_cocycle_norm(p.coords(), n)?.exp())
    }

    /// Logarithm of [`Self::unstable_cocycle_norm`], accumulated per step.
    pub fn log_unstable_cocycle_norm(&self, p: &[f64], n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::InvalidArgument("cocycle length must be >= 1".into()));
        }
        match self {
            SystemSpec::Linear(s) => {
                let lam = s
                    .unstable_eigenvalues()
                    .first()
                    .copied()
                    .ok_or_else(|| Error::FrameNotReady("no unstable direction".into()))?;
                Ok(n as f64 * lam.ln())
            }
            SystemSpec::Perturbed(_) => {
                let d = self.dim();
                let mut v = self.unstable_frame(p)?;
                let mut x = p.to_vec();
                let mut next_x = vec![0.0; d];
                let mut w = vec![0.0; d];
                let mut acc = 0.0;
                for _ in 0..n {
                    self.push_vector(&x, &v, &mut w);
                    let norm = w.iter().map(|c| c * c).sum::<f64>().sqrt();
                    acc += norm.ln();
                    for i in 0..d {
                        v[i] = w[i] / norm;
                    }
                    self.lift_map_into(&x, &mut next_x);
                    std::mem::swap(&mut x, &mut next_x);
                }
                Ok(acc)
            }
        }
    }

    /// Orthonormal bases of `(E^s, E^c, E^u)` at `p`.
    pub fn bundles_at(&self, p: &[f64]) -> Result<[DMatrix<f64>; 3]> {
        let lin = self.linear_part();
        let d = self.dim();
        let (s, c, u) = (lin.stable(), lin.center(), lin.unstable());
        let linear = [
            orthonormal(s.matrix(d)),
            orthonormal(c.matrix(d)),
            orthonormal(u.matrix(d)),
        ];
        let perturbed = matches!(self, SystemSpec::Perturbed(ps) if ps.magnitude() != 0.0);
        if !perturbed {
            return Ok(linear);
        }
        let back = self.backward_orbit(p, FRAME_DEPTH)?;
        let fwd = self.forward_orbit(p, FRAME_DEPTH);
        let eu = push_subspace(self, &back, &linear[2]);
        let ecu = push_subspace(self, &back, &hcat(&linear[1], &linear[2]));
        let es = pull_subspace(self, &fwd, &linear[0])?;
        let ecs = pull_subspace(self, &fwd, &hcat(&linear[0], &linear[1]))?;
        let ec = if c.dim() == 0 {
            DMatrix::zeros(d, 0)
        } else {
            intersect(&ecu, &ecs, c.dim())?
        };
        Ok([es, ec, eu])
    }

    /// `p, f p, ..., f^{depth} p` on the universal cover.
    fn forward_orbit(&self, p: &[f64], depth: usize) -> Vec<Vec<f64>> {
        let mut orbit = Vec::with_capacity(depth + 1);
        orbit.push(p.to_vec());
        for k in 0..depth {
            let next = self.lift_map(&orbit[k]);
            orbit.push(next);
        }
        orbit
    }
}

fn push_direction(sys: &SystemSpec, orbit: &[Vec<f64>], v0: &[f64]) -> Vec<f64> {
    let d = v0.len();
    let mut v: Vec<f64> = v0.to_vec();
    let mut w = vec![0.0; d];
    for x in orbit {
        sys.push_vector(x, &v, &mut w);
        let n = w.iter().map(|c| c * c).sum::<f64>().sqrt();
        for i in 0..d {
            v[i] = w[i] / n;
        }
    }
    v
}

fn orthonormal(m: DMatrix<f64>) -> DMatrix<f64> {
    if m.ncols() == 0 {
        return m;
    }
    m.qr().q()
}

fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((0, a.ncols()), (b.nrows(), b.ncols())).copy_from(b);
    out
}

fn push_subspace(sys: &SystemSpec, orbit: &[Vec<f64>], basis: &DMatrix<f64>) -> DMatrix<f64> {
    let mut b = basis.clone();
    for x in orbit {
        b = orthonormal(sys.jacobian(x) * b);
    }
    b
}

fn pull_subspace(sys: &SystemSpec, fwd: &[Vec<f64>], basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    // fwd = [p, f p, ..., f^K p]; transport back from f^K p to p
    let mut b = basis.clone();
    for x in fwd[..fwd.len() - 1].iter().rev() {
        let inv = sys
            .jacobian(x)
            .try_inverse()
            .ok_or_else(|| Error::FrameNotReady("singular derivative".into()))?;
        b = orthonormal(inv * b);
    }
    Ok(b)
}

/// Orthonormal basis of `span(a) ∩ span(b)`, expected of dimension `k`.
fn intersect(a: &DMatrix<f64>, b: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    // null space of [a | -b] from the Gram matrix, which stays square when
    // the stacked matrix is wide
    let stacked = hcat(a, &(-b));
    let gram = stacked.transpose() * &stacked;
    let eig = nalgebra::SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut out = DMatrix::zeros(a.nrows(), k);
    for (col, &r) in order.iter().take(k).enumerate() {
        let coeff = DVector::from_iterator(a.ncols(), (0..a.ncols()).map(|i| eig.eigenvectors[(i, r)]));
        out.set_column(col, &(a * coeff));
    }
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::FrameNotReady("degenerate bundle intersection".into()));
    }
    Ok(orthonormal(out))
}

/// Min/max of `|D_x f v|` over unit vectors of one bundle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormRange {
    pub min: f64,
    pub max: f64,
}

impl NormRange {
    fn empty() -> Self {
        Self {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    fn absorb(&mut self, lo: f64, hi: f64) {
        self.min = self.min.min(lo);
        self.max = self.max.max(hi);
    }
}

/// Outcome of the sampled partial-hyperbolicity check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyperbolicityReport {
    pub samples: usize,
    pub seed: u64,
    /// `None` when the bundle is trivial.
    pub stable: Option<NormRange>,
    pub center: Option<NormRange>,
    pub unstable: Option<NormRange>,
    /// Chain `|Df v^s| < |Df v^c| < |Df v^u|` holds at every sample.
    pub domination: bool,
    /// `|Df|E^s| < 1` and `|Df^{-1}|E^u| < 1` at every sample.
    pub contraction: bool,
    pub pass: bool,
    pub failure: Option<String>,
}

/// Samples points and measures the restricted derivative norms on each
/// bundle. Failure is reported, never raised.
pub fn verify_partial_hyperbolicity(sys: &SystemSpec, samples: usize, seed: u64) -> HyperbolicityReport {
    let d = sys.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lin = sys.linear_part();
    let dims = [lin.stable().dim(), lin.center().dim(), lin.unstable().dim()];
    let mut ranges = [NormRange::empty(); 3];
    let mut domination = true;
    let mut contraction = true;
    let mut failure = None;
    if dims[2] == 0 {
        failure = Some("unstable bundle is trivial".to_string());
    }
    let samples = samples.max(1);
    for _ in 0..samples {
        if failure.is_some() {
            break;
        }
        let p: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
        let bundles = match sys.bundles_at(&p) {
            Ok(b) => b,
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        };
        let jac = sys.jacobian(&p);
        let mut local = [(f64::NAN, f64::NAN); 3];
        for (k, basis) in bundles.iter().enumerate() {
            if basis.ncols() == 0 {
                continue;
            }
            let sv = (&jac * basis).singular_values();
            let lo = sv.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = sv.iter().copied().fold(0.0, f64::max);
            ranges[k].absorb(lo, hi);
            local[k] = (lo, hi);
        }
        let present: Vec<usize> = (0..3).filter(|&k| dims[k] > 0).collect();
        for w in present.windows(2) {
            if !(local[w[0]].1 < local[w[1]].0) {
                domination = false;
            }
        }
        if dims[0] > 0 && !(local[0].1 < 1.0) {
            contraction = false;
        }
        if !(local[2].0 > 1.0) {
            contraction = false;
        }
    }
    let pick = |k: usize| (dims[k] > 0 && ranges[k].min.is_finite()).then_some(ranges[k]);
    let pass = failure.is_none() && domination && contraction;
    HyperbolicityReport {
        samples,
        seed,
        stable: pick(0),
        center: pick(1),
        unstable: pick(2),
        domination: failure.is_none() && domination,
        contraction: failure.is_none() && contraction,
        pass,
        failure,
    }
}
