use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SPECTRAL_TOL: f64 = 1e-9;

/// Affine toral automorphism `x -> A x + b (mod 1)` with an integer matrix
/// `A` of determinant +-1 and its eigen-splitting into stable, center and
/// unstable subspaces.
#[derive(Debug, Clone)]
pub struct LinearPHSystem {
    matrix: Vec<Vec<i64>>,
    translation: Vec<f64>,
    a: DMatrix<f64>,
    a_inv: DMatrix<f64>,
    stable: Bundle,
    center: Bundle,
    unstable: Bundle,
}

/// An invariant subspace of the linear part: orthonormal basis plus the
/// moduli of the eigenvalues it carries.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Bundle {
    pub basis: Vec<Vec<f64>>,
    pub moduli: Vec<f64>,
}

impl Bundle {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn matrix(&self, d: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(d, self.basis.len());
        for (j, v) in self.basis.iter().enumerate() {
            for i in 0..d {
                m[(i, j)] = v[i];
            }
        }
        m
    }
}

impl LinearPHSystem {
    /// Builds the system and requires a non-trivial, one-dimensional unstable
    /// bundle.
    pub fn new(matrix: Vec<Vec<i64>>, translation: Vec<f64>) -> Result<Self> {
        let sys = Self::new_unchecked(matrix, translation)?;
        match sys.unstable.dim() {
            0 => Err(Error::InvalidSystem("unstable bundle is trivial".into())),
            1 => Ok(sys),
            k => Err(Error::Unsupported(format!(
                "unstable dimension {k}; only one unstable direction is supported"
            ))),
        }
    }

    /// Builds the splitting without requiring any expansion. Used to feed
    /// degenerate maps into the partial-hyperbolicity diagnostic.
    pub fn new_unchecked(matrix: Vec<Vec<i64>>, translation: Vec<f64>) -> Result<Self> {
        let d = matrix.len();
        if d == 0 {
            return Err(Error::InvalidSystem("empty matrix".into()));
        }
        if matrix.iter().any(|row| row.len() != d) {
            return Err(Error::InvalidSystem("matrix must be square".into()));
        }
        if translation.len() != d {
            return Err(Error::DimensionMismatch(translation.len(), d));
        }
        if translation.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidSystem("translation must be finite".into()));
        }
        let det = integer_determinant(&matrix);
        if det.abs() != 1 {
            return Err(Error::InvalidSystem(format!(
                "determinant {det} is not +-1; the map is not invertible on the torus"
            )));
        }
        let a = DMatrix::from_fn(d, d, |i, j| matrix[i][j] as f64);
        let a_inv = a
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidSystem("singular matrix".into()))?;
        let (stable, center, unstable) = split_spectrum(&a)?;
        Ok(Self {
            matrix,
            translation,
            a,
            a_inv,
            stable,
            center,
            unstable,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.len()
    }

    pub fn matrix(&self) -> &[Vec<i64>] {
        &self.matrix
    }

    pub fn translation(&self) -> &[f64] {
        &self.translation
    }

    pub fn derivative(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn inverse_matrix(&self) -> &DMatrix<f64> {
        &self.a_inv
    }

    pub fn stable(&self) -> &Bundle {
        &self.stable
    }

    pub fn center(&self) -> &Bundle {
        &self.center
    }

    pub fn unstable(&self) -> &Bundle {
        &self.unstable
    }

    /// Unit vector spanning the (one-dimensional) unstable bundle.
    pub fn unstable_direction(&self) -> Option<&[f64]> {
        self.unstable.basis.first().map(|v| v.as_slice())
    }

    pub fn unstable_eigenvalues(&self) -> &[f64] {
        &self.unstable.moduli
    }

    /// Largest unstable eigenvalue modulus, or 1 when there is none.
    pub fn expansion_rate(&self) -> f64 {
        self.unstable.moduli.iter().copied().fold(1.0, f64::max)
    }

    /// Sum of the logs of the unstable eigenvalue moduli.
    pub fn unstable_log_volume_growth(&self) -> f64 {
        self.unstable.moduli.iter().map(|l| l.ln()).sum()
    }

    /// `A p + b` on the universal cover.
    pub fn lift_map_into(&self, p: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            let mut acc = self.translation[i];
            for j in 0..d {
                acc += self.matrix[i][j] as f64 * p[j];
            }
            out[i] = acc;
        }
    }

    /// The `k`-th iterate `x -> A^k x + (A^{k-1} + ... + I) b`.
    pub fn iterate(&self, k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("iterate order must be >= 1".into()));
        }
        let d = self.dim();
        let mut power = identity_int(d);
        let mut shift = vec![0.0; d];
        for _ in 0..k {
            // shift <- A shift + b ; power <- A power
            let mut next = vec![0.0; d];
            self.lift_map_into(&shift, &mut next);
            shift = next;
            power = mul_int(&self.matrix, &power)?;
        }
        Self::new(power, shift)
    }
}

fn identity_int(d: usize) -> Vec<Vec<i64>> {
    (0..d)
        .map(|i| (0..d).map(|j| i64::from(i == j)).collect())
        .collect()
}

fn mul_int(a: &[Vec<i64>], b: &[Vec<i64>]) -> Result<Vec<Vec<i64>>> {
    let d = a.len();
    let mut out = vec![vec![0i64; d]; d];
    for i in 0..d {
        for j in 0..d {
            let mut acc: i64 = 0;
            for k in 0..d {
                acc = a[i][k]
                    .checked_mul(b[k][j])
                    .and_then(|v| acc.checked_add(v))
                    .ok_or_else(|| Error::InvalidSystem("matrix power overflows i64".into()))?;
            }
            out[i][j] = acc;
        }
    }
    Ok(out)
}

/// Exact determinant by fraction-free (Bareiss) elimination.
pub(crate) fn integer_determinant(m: &[Vec<i64>]) -> i128 {
    let n = m.len();
    let mut a: Vec<Vec<i128>> = m
        .iter()
        .map(|r| r.iter().map(|&v| v as i128).collect())
        .collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n {
        if a[k][k] == 0 {
            match (k + 1..n).find(|&r| a[r][k] != 0) {
                Some(r) => {
                    a.swap(k, r);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
        }
        prev = a[k][k];
    }
    sign * a[n - 1][n - 1]
}

/// Splits the spectrum of `a` by modulus and returns orthonormal bases of
/// the stable, center and unstable invariant subspaces.
fn split_spectrum(a: &DMatrix<f64>) -> Result<(Bundle, Bundle, Bundle)> {
    let d = a.nrows();
    let eig = a.clone().complex_eigenvalues();
    let mut classes: [Vec<nalgebra::Complex<f64>>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for z in eig.iter() {
        let r = z.norm();
        let idx = if r < 1.0 - SPECTRAL_TOL {
            0
        } else if r > 1.0 + SPECTRAL_TOL {
            2
        } else {
            1
        };
        classes[idx].push(*z);
    }
    let mut out = Vec::with_capacity(3);
    for (idx, class) in classes.iter().enumerate() {
        if idx != 1 && class.iter().any(|z| z.im.abs() > SPECTRAL_TOL) {
            return Err(Error::Unsupported(
                "complex hyperbolic eigenvalues are not supported".into(),
            ));
        }
        out.push(invariant_subspace(a, class, d)?);
    }
    let unstable = out.pop().unwrap();
    let center = out.pop().unwrap();
    let stable = out.pop().unwrap();
    Ok((stable, center, unstable))
}

fn invariant_subspace(
    a: &DMatrix<f64>,
    eigenvalues: &[nalgebra::Complex<f64>],
    d: usize,
) -> Result<Bundle> {
    let k = eigenvalues.len();
    let mut moduli: Vec<f64> = eigenvalues.iter().map(|z| z.norm()).collect();
    moduli.sort_by(|x, y| y.total_cmp(x));
    if k == 0 {
        return Ok(Bundle::default());
    }
    // Annihilating polynomial of the class: product of real factors.
    let id = DMatrix::<f64>::identity(d, d);
    let mut poly = id.clone();
    let mut used_conjugate = vec![false; k];
    for (i, z) in eigenvalues.iter().enumerate() {
        if z.im.abs() <= SPECTRAL_TOL {
            poly = &poly * (a - &id * z.re);
        } else if z.im > 0.0 && !used_conjugate[i] {
            used_conjugate[i] = true;
            let q = a * a - a * (2.0 * z.re) + &id * z.norm_sqr();
            poly = &poly * q;
        }
    }
    let svd = poly.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::InvalidSystem("SVD failed".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let mut basis = Vec::with_capacity(k);
    for &row in order.iter().take(k) {
        let v: Vec<f64> = (0..d).map(|c| v_t[(row, c)]).collect();
        basis.push(v);
    }
    // single-direction classes: report the eigenvector with a fixed sign
    if k == 1 {
        let v = &mut basis[0];
        let lead = v.iter().copied().find(|x| x.abs() > 1e-12).unwrap_or(1.0);
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let n = DVector::from_column_slice(v).norm();
        v.iter_mut().for_each(|x| *x /= n);
        // refine the modulus with the Rayleigh quotient of the eigenvector
        let vv = DVector::from_column_slice(v);
        moduli[0] = (a * &vv).dot(&vv).abs();
    }
    Ok(Bundle { basis, moduli })
}
