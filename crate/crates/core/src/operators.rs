//! Pucci extremal operators, the two-sided singular inequality residuals,
//! and the non-divergence p-Laplace operator.

use serde::Serialize;

use crate::error::{Error, Result};

/// Ellipticity bounds 0 < lo <= hi for the Pucci operators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Ellipticity {
    pub lo: f64,
    pub hi: f64,
}

impl Ellipticity {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "ellipticity bounds ({lo}, {hi}) must satisfy 0 < lo <= hi < inf"
            )));
        }
        Ok(Ellipticity { lo, hi })
    }
}

/// Exponent of the gradient singularity, 0 <= gamma < 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SingularExponent {
    pub gamma: f64,
}

impl SingularExponent {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidParameter(format!(
                "gamma = {gamma} must lie in [0, 1)"
            )));
        }
        Ok(SingularExponent { gamma })
    }
}

/// Which extremal operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExtremalSign {
    Plus,
    Minus,
}

/// Dense symmetric n x n matrix, n in {1,2,3}. Symmetry is enforced on
/// construction by averaging.
#[derive(Clone, Copy, Debug)]
pub struct SymMatrix {
    n: usize,
    a: [[f64; 3]; 3],
}

impl SymMatrix {
    pub fn new(n: usize, entries: &[[f64; 3]; 3]) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return Err(Error::InvalidParameter(format!(
                "matrix size {n} not in 1..=3"
            )));
        }
        let mut a = [[0.0; 3]; 3];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = 0.5 * (entries[i][j] + entries[j][i]);
            }
        }
        Ok(SymMatrix { n, a })
    }

    pub fn zero(n: usize) -> Self {
        SymMatrix {
            n,
            a: [[0.0; 3]; 3],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut a = [[0.0; 3]; 3];
        for i in 0..n {
            a[i][i] = 1.0;
        }
        SymMatrix { n, a }
    }

    pub fn diag(n: usize, d: &[f64]) -> Self {
        let mut a = [[0.0; 3]; 3];
        for i in 0..n {
            a[i][i] = d[i];
        }
        SymMatrix { n, a }
    }

    /// From packed symmetric storage (xx, yy, zz, xy, xz, yz).
    pub fn from_packed(n: usize, p: &[f64; 6]) -> Self {
        let mut a = [[0.0; 3]; 3];
        for i in 0..n {
            a[i][i] = p[i];
        }
        if n >= 2 {
            a[0][1] = p[3];
            a[1][0] = p[3];
        }
        if n >= 3 {
            a[0][2] = p[4];
            a[2][0] = p[4];
            a[1][2] = p[5];
            a[2][1] = p[5];
        }
        SymMatrix { n, a }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i][j]
    }

    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.a[i][j] = v;
        self.a[j][i] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.a[i][i]).sum()
    }

    pub fn scaled(&self, k: f64) -> Self {
        let mut m = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                m.a[i][j] *= k;
            }
        }
        m
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        debug_assert_eq!(self.n, other.n);
        let mut m = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                m.a[i][j] += other.a[i][j];
            }
        }
        m
    }

    pub fn frobenius(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += self.a[i][j] * self.a[i][j];
            }
        }
        s.sqrt()
    }

    /// Quadratic form v^T A v over the first n components.
    pub fn quad_form(&self, v: &[f64; 3]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += v[i] * self.a[i][j] * v[j];
            }
        }
        s
    }

    /// Eigenvalues in ascending order (unused slots are zero). Closed form
    /// for n <= 2, cyclic Jacobi rotations for n = 3.
    pub fn eigenvalues(&self) -> [f64; 3] {
        match self.n {
            1 => [self.a[0][0], 0.0, 0.0],
            2 => {
                let (a, b, d) = (self.a[0][0], self.a[0][1], self.a[1][1]);
                let mean = 0.5 * (a + d);
                let disc = (0.5 * (a - d)).hypot(b);
                [mean - disc, mean + disc, 0.0]
            }
            _ => jacobi3(&self.a),
        }
    }

    /// Determinant of the leading n x n block.
    pub fn det(&self) -> f64 {
        let a = &self.a;
        match self.n {
            1 => a[0][0],
            2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
            _ => {
                a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
                    - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                    + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
            }
        }
    }
}

/// Eigenvalues of a symmetric 3x3 matrix by cyclic Jacobi sweeps.
fn jacobi3(m: &[[f64; 3]; 3]) -> [f64; 3] {
    let mut a = *m;
    for _ in 0..32 {
        let off = (a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2]).sqrt();
        let scale = a[0][0]
            .abs()
            .max(a[1][1].abs())
            .max(a[2][2].abs())
            .max(1e-300);
        if off <= 1e-15 * scale {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let (app, aqq, apq) = (a[p][p], a[q][q], a[p][q]);
            a[p][p] = app - t * apq;
            a[q][q] = aqq + t * apq;
            a[p][q] = 0.0;
            a[q][p] = 0.0;
            let r = 3 - p - q;
            let (arp, arq) = (a[r][p], a[r][q]);
            a[r][p] = c * arp - s * arq;
            a[p][r] = a[r][p];
            a[r][q] = s * arp + c * arq;
            a[q][r] = a[r][q];
        }
    }
    let mut e = [a[0][0], a[1][1], a[2][2]];
    e.sort_by(|x, y| x.partial_cmp(y).unwrap());
    e
}

/// Pucci extremal operator: the signed sum of eigenvalues with the negative
/// ones weighted by one ellipticity bound and the positive ones by the other.
pub fn pucci_eval(x: &SymMatrix, ell: &Ellipticity, sign: ExtremalSign) -> f64 {
    let e = x.eigenvalues();
    let mut s = 0.0;
    for &ev in &e[..x.n()] {
        let w = match sign {
            ExtremalSign::Plus => {
                if ev > 0.0 {
                    ell.hi
                } else {
                    ell.lo
                }
            }
            ExtremalSign::Minus => {
                if ev > 0.0 {
                    ell.lo
                } else {
                    ell.hi
                }
            }
        };
        s += w * ev;
    }
    s
}

/// |g|^gamma with the conventions 0^gamma := 0 for gamma > 0 and 0^0 := 1,
/// keeping the multiplied residual form continuous at vanishing gradients.
pub fn grad_pow(grad_norm: f64, gamma: f64) -> f64 {
    if grad_norm == 0.0 {
        if gamma == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        grad_norm.powf(gamma)
    }
}

/// Signed residuals of the two-sided inequality in multiplied form:
///   lower = P^-(H) - |g| - |g|^gamma f   (<= 0 on the subsolution side)
///   upper = P^+(H) + |g| - |g|^gamma f   (>= 0 on the supersolution side)
/// Classification thresholds live in the caller.
pub fn singular_residual(
    grad: &[f64; 3],
    hess: &SymMatrix,
    f_val: f64,
    gamma: &SingularExponent,
    ell: &Ellipticity,
) -> (f64, f64) {
    let n = hess.n();
    let g = grad[..n].iter().map(|v| v * v).sum::<f64>().sqrt();
    let gpow = grad_pow(g, gamma.gamma);
    let lower = pucci_eval(hess, ell, ExtremalSign::Minus) - g - gpow * f_val;
    let upper = pucci_eval(hess, ell, ExtremalSign::Plus) + g - gpow * f_val;
    (lower, upper)
}

/// Non-divergence p-Laplacian |g|^(p-2) (tr H - (2-p) <H ghat, ghat>) for
/// 1 < p <= 2. A zero gradient is a singular point: the caller decides
/// whether to skip the node or regularize.
pub fn p_laplace_eval(grad: &[f64; 3], hess: &SymMatrix, p: f64) -> Result<f64> {
    if !(1.0 < p && p <= 2.0) {
        return Err(Error::InvalidParameter(format!(
            "p = {p} must lie in (1, 2]"
        )));
    }
    let n = hess.n();
    let g = grad[..n].iter().map(|v| v * v).sum::<f64>().sqrt();
    if g == 0.0 {
        return Err(Error::SingularPoint);
    }
    let mut ghat = [0.0; 3];
    for k in 0..n {
        ghat[k] = grad[k] / g;
    }
    Ok(g.powf(p - 2.0) * (hess.trace() - (2.0 - p) * hess.quad_form(&ghat)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn ell12() -> Ellipticity {
        Ellipticity::new(1.0, 2.0).unwrap()
    }

    fn random_sym(rng: &mut StdRng, n: usize) -> SymMatrix {
        let mut e = [[0.0; 3]; 3];
        for i in 0..n {
            for j in 0..n {
                e[i][j] = rng.gen_range(-5.0..5.0);
            }
        }
        SymMatrix::new(n, &e).unwrap()
    }

    #[test]
    fn parameter_validation() {
        assert!(Ellipticity::new(0.0, 1.0).is_err());
        assert!(Ellipticity::new(2.0, 1.0).is_err());
        assert!(SingularExponent::new(1.0).is_err());
        assert!(SingularExponent::new(-0.1).is_err());
        assert!(SingularExponent::new(0.0).is_ok());
    }

    #[test]
    fn identity_evaluations() {
        let ell = ell12();
        let i2 = SymMatrix::identity(2);
        assert_eq!(pucci_eval(&i2, &ell, ExtremalSign::Minus), 2.0);
        assert_eq!(pucci_eval(&i2, &ell, ExtremalSign::Plus), 4.0);
        let x = SymMatrix::diag(2, &[1.0, -1.0]);
        assert_eq!(pucci_eval(&x, &ell, ExtremalSign::Plus), 1.0);
        assert_eq!(pucci_eval(&x, &ell, ExtremalSign::Minus), -1.0);
        let z = SymMatrix::zero(3);
        assert_eq!(pucci_eval(&z, &ell, ExtremalSign::Plus), 0.0);
        assert_eq!(pucci_eval(&z, &ell, ExtremalSign::Minus), 0.0);
    }

    #[test]
    fn jacobi_matches_closed_form_on_embedded_2x2() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..200 {
            let m2 = random_sym(&mut rng, 2);
            let mut e3 = [[0.0; 3]; 3];
            for i in 0..2 {
                for j in 0..2 {
                    e3[i][j] = m2.get(i, j);
                }
            }
            let c = rng.gen_range(-5.0..5.0);
            e3[2][2] = c;
            let m3 = SymMatrix::new(3, &e3).unwrap();
            let mut expect = vec![m2.eigenvalues()[0], m2.eigenvalues()[1], c];
            expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let got = m3.eigenvalues();
            for k in 0..3 {
                assert!((got[k] - expect[k]).abs() < 1e-10, "{got:?} vs {expect:?}");
            }
        }
    }

    #[test]
    fn pucci_reflection_and_homogeneity() {
        let ell = Ellipticity::new(0.7, 2.3).unwrap();
        let mut rng = StdRng::seed_from_u64(5);
        for n in [2usize, 3] {
            for _ in 0..300 {
                let x = random_sym(&mut rng, n);
                let k = rng.gen_range(0.0..10.0);
                let pp = pucci_eval(&x, &ell, ExtremalSign::Plus);
                let pm = pucci_eval(&x, &ell, ExtremalSign::Minus);
                let neg = x.scaled(-1.0);
                assert!(
                    (pucci_eval(&neg, &ell, ExtremalSign::Plus) + pm).abs()
                        < 1e-12 * (1.0 + pm.abs())
                );
                assert!(
                    (pucci_eval(&neg, &ell, ExtremalSign::Minus) + pp).abs()
                        < 1e-12 * (1.0 + pp.abs())
                );
                let kx = x.scaled(k);
                assert!((pucci_eval(&kx, &ell, ExtremalSign::Plus) - k * pp).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn pucci_subadditivity_chain() {
        let ell = ell12();
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..1000 {
            let n = if rng.gen_bool(0.5) { 2 } else { 3 };
            let x = random_sym(&mut rng, n);
            let y = random_sym(&mut rng, n);
            let xy = x.add(&y);
            let slack = -1e-10;
            let chain = [
                pucci_eval(&x, &ell, ExtremalSign::Minus)
                    + pucci_eval(&y, &ell, ExtremalSign::Minus),
                pucci_eval(&xy, &ell, ExtremalSign::Minus),
                pucci_eval(&x, &ell, ExtremalSign::Minus)
                    + pucci_eval(&y, &ell, ExtremalSign::Plus),
                pucci_eval(&xy, &ell, ExtremalSign::Plus),
                pucci_eval(&x, &ell, ExtremalSign::Plus) + pucci_eval(&y, &ell, ExtremalSign::Plus),
            ];
            for w in chain.windows(2) {
                assert!(w[1] - w[0] >= slack, "chain violated: {chain:?}");
            }
        }
    }

    #[test]
    fn orthogonal_invariance_2d() {
        let ell = ell12();
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..200 {
            let x = random_sym(&mut rng, 2);
            let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let (c, s) = (t.cos(), t.sin());
            // Q X Q^T for the rotation Q = [[c,-s],[s,c]].
            let (a, b, d) = (x.get(0, 0), x.get(0, 1), x.get(1, 1));
            let e = [
                [
                    c * c * a - 2.0 * c * s * b + s * s * d,
                    c * s * (a - d) + (c * c - s * s) * b,
                    0.0,
                ],
                [
                    c * s * (a - d) + (c * c - s * s) * b,
                    s * s * a + 2.0 * c * s * b + c * c * d,
                    0.0,
                ],
                [0.0, 0.0, 0.0],
            ];
            let rx = SymMatrix::new(2, &e).unwrap();
            for sign in [ExtremalSign::Plus, ExtremalSign::Minus] {
                let p0 = pucci_eval(&x, &ell, sign);
                let p1 = pucci_eval(&rx, &ell, sign);
                assert!((p0 - p1).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn residual_worked_examples() {
        let ell = ell12();
        let g0 = SingularExponent::new(0.0).unwrap();
        // grad = -x at |x| = 0.5, hess = -I, f = -4:
        // lower = P^-(-I) - 0.5 - (-4) = -4 - 0.5 + 4 = -0.5.
        let (lo, _) = singular_residual(
            &[-0.3, -0.4, 0.0],
            &SymMatrix::identity(2).scaled(-1.0),
            -4.0,
            &g0,
            &ell,
        );
        assert!((lo + 0.5).abs() < 1e-12);

        let ghalf = SingularExponent::new(0.5).unwrap();
        let (lo, up) = singular_residual(&[0.0, 0.0, 0.0], &SymMatrix::zero(2), 0.0, &ghalf, &ell);
        assert_eq!(lo, 0.0);
        assert_eq!(up, 0.0);

        // grad = x at |x| = 0.5, hess = I, gamma = 1/2, f = 3:
        // lower = 2 - 0.5 - sqrt(0.5)*3.
        let (lo, _) =
            singular_residual(&[0.3, 0.4, 0.0], &SymMatrix::identity(2), 3.0, &ghalf, &ell);
        let expect = 2.0 - 0.5 - 0.5f64.sqrt() * 3.0;
        assert!((lo - expect).abs() < 1e-12);
    }

    #[test]
    fn p_laplace_basics() {
        // p = 2 reduces to the Laplacian.
        let v = p_laplace_eval(&[0.4, 0.9, 0.0], &SymMatrix::identity(2), 2.0).unwrap();
        assert!((v - 2.0).abs() < 1e-14);
        // Linear functions are p-harmonic.
        let v = p_laplace_eval(&[1.0, 0.5, 0.0], &SymMatrix::zero(2), 1.5).unwrap();
        assert_eq!(v, 0.0);
        assert!(matches!(
            p_laplace_eval(&[0.0, 0.0, 0.0], &SymMatrix::identity(2), 1.5),
            Err(crate::error::Error::SingularPoint)
        ));
        assert!(p_laplace_eval(&[1.0, 0.0, 0.0], &SymMatrix::identity(2), 2.5).is_err());
    }

    #[test]
    fn p_laplace_coefficient_spectrum_bounds() {
        // The coefficient matrix I - (2-p) ghat ghat^T has eigenvalues
        // {1 (n-1 times), p-1}, so the rescaled p-Laplacian sits between the
        // extremal operators with bounds (p-1, 1).
        let mut rng = StdRng::seed_from_u64(41);
        for _ in 0..200 {
            let p: f64 = rng.gen_range(1.01..2.0);
            let ell = Ellipticity::new(p - 1.0, 1.0).unwrap();
            let n = 2;
            let mut grad = [
                rng.gen_range(-1.0f64..1.0),
                rng.gen_range(-1.0f64..1.0),
                0.0,
            ];
            if grad[0] == 0.0 && grad[1] == 0.0 {
                grad[0] = 0.5;
            }
            let h = {
                let mut e = [[0.0; 3]; 3];
                for i in 0..n {
                    for j in 0..n {
                        e[i][j] = rng.gen_range(-2.0..2.0);
                    }
                }
                SymMatrix::new(n, &e).unwrap()
            };
            let g = (grad[0] * grad[0] + grad[1] * grad[1]).sqrt();
            let val = p_laplace_eval(&grad, &h, p).unwrap() * g.powf(2.0 - p);
            let lo = pucci_eval(&h, &ell, ExtremalSign::Minus);
            let hi = pucci_eval(&h, &ell, ExtremalSign::Plus);
            assert!(val >= lo - 1e-10 && val <= hi + 1e-10);
        }
    }

    proptest! {
        #[test]
        fn reflection_identity_proptest(
            a in -3.0f64..3.0, b in -3.0f64..3.0, d in -3.0f64..3.0
        ) {
            let ell = ell12();
            let x = SymMatrix::new(2, &[[a, b, 0.0], [b, d, 0.0], [0.0; 3]]).unwrap();
            let lhs = pucci_eval(&x.scaled(-1.0), &ell, ExtremalSign::Plus);
            let rhs = -pucci_eval(&x, &ell, ExtremalSign::Minus);
            prop_assert!((lhs - rhs).abs() < 1e-11);
        }
    }
}
