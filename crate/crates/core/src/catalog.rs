//! Analytic test cases with exact derivatives, used as oracles for every
//! downstream module.
//!
//! Each case bundles a function u, a right-hand side f and the ellipticity
//! and singularity parameters under which (u, f) satisfies the two-sided
//! extremal inequality pointwise wherever the gradient does not vanish.
//! The cone is the one deliberate outlier: it is kept for contact-set and
//! decay geometry only and is flagged so residual checks skip it.

use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec};
use crate::operators::{
    pucci_eval, singular_residual, Ellipticity, ExtremalSign, SingularExponent, SymMatrix,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CaseKind {
    /// u = a/2 |x|^2 with f chosen so both inequality sides hold.
    Quadratic { a: f64 },
    /// u = |x|: contact/decay geometry only, residual checks do not apply.
    Cone,
    /// u = c_p |x|^(p/(p-1)) solving the p-Laplace equation with f = 1.
    RadialPLaplace { p: f64 },
    /// u = cos(pi |x|^2 / 2) with f making the lower side an equality.
    Bump,
}

#[derive(Clone, Debug)]
pub struct TestCase {
    pub name: String,
    pub kind: CaseKind,
    pub ndim: usize,
    pub gamma: SingularExponent,
    pub ell: Ellipticity,
    /// Expected contact/decay behavior, free-form.
    pub notes: String,
    /// False only for the cone, whose upper inequality fails near the apex.
    pub residual_checked: bool,
}

/// Radial exponent m = p/(p-1) of the p-Laplace model solution.
fn radial_exponent(p: f64) -> f64 {
    p / (p - 1.0)
}

/// Coefficient c_p = ((p-1)/p) n^(-1/(p-1)) making the p-Laplacian of
/// c_p |x|^(p/(p-1)) identically one.
pub fn radial_coefficient(p: f64, ndim: usize) -> f64 {
    (p - 1.0) / p * (ndim as f64).powf(-1.0 / (p - 1.0))
}

pub fn make_case(kind: CaseKind, ndim: usize) -> Result<TestCase> {
    if !(1..=3).contains(&ndim) {
        return Err(Error::InvalidParameter(format!("ndim {ndim} not in 1..=3")));
    }
    let case = match kind {
        CaseKind::Quadratic { a } => {
            if a == 0.0 {
                return Err(Error::InvalidParameter(
                    "quadratic opening a must be nonzero".into(),
                ));
            }
            TestCase {
                name: format!("quadratic:{a}"),
                kind,
                ndim,
                gamma: SingularExponent::new(0.0)?,
                ell: Ellipticity::new(1.0, 2.0)?,
                notes: "lower contact set is the ball of radius kappa/(kappa+a); \
                        boundary strip of width ~|x| a/kappa"
                    .into(),
                residual_checked: true,
            }
        }
        CaseKind::Cone => TestCase {
            name: "cone".into(),
            kind,
            ndim,
            gamma: SingularExponent::new(0.0)?,
            ell: Ellipticity::new(1.0, 2.0)?,
            notes: "upper inequality fails near 0; upper contact set excludes \
                    the ball of radius 1/kappa around the apex"
                .into(),
            residual_checked: false,
        },
        CaseKind::RadialPLaplace { p } => {
            if !(1.0 < p && p <= 2.0) {
                return Err(Error::InvalidParameter(format!(
                    "p = {p} must lie in (1, 2]"
                )));
            }
            TestCase {
                name: format!("radial_plaplace:{p}"),
                kind,
                ndim,
                gamma: SingularExponent::new(2.0 - p)?,
                ell: Ellipticity::new(p - 1.0, 1.0)?,
                notes: "p-Laplacian identically 1; convex with small curvature".into(),
                residual_checked: true,
            }
        }
        CaseKind::Bump => TestCase {
            name: "bump".into(),
            kind,
            ndim,
            gamma: SingularExponent::new(0.0)?,
            ell: Ellipticity::new(1.0, 2.0)?,
            notes: "smooth oscillatory profile; lower side holds with equality".into(),
            residual_checked: true,
        },
    };
    case.verify_on_coarse_sample()?;
    Ok(case)
}

impl TestCase {
    fn r2(&self, x: &[f64; 3]) -> f64 {
        x[..self.ndim].iter().map(|v| v * v).sum()
    }

    pub fn u(&self, x: &[f64; 3]) -> f64 {
        let r2 = self.r2(x);
        match self.kind {
            CaseKind::Quadratic { a } => 0.5 * a * r2,
            CaseKind::Cone => r2.sqrt(),
            CaseKind::RadialPLaplace { p } => {
                let m = radial_exponent(p);
                radial_coefficient(p, self.ndim) * r2.sqrt().powf(m)
            }
            CaseKind::Bump => (std::f64::consts::PI * r2 / 2.0).cos(),
        }
    }

    /// Exact gradient. NaN at the cone apex.
    pub fn grad(&self, x: &[f64; 3]) -> [f64; 3] {
        let n = self.ndim;
        let r2 = self.r2(x);
        let r = r2.sqrt();
        let mut g = [0.0; 3];
        match self.kind {
            CaseKind::Quadratic { a } => {
                for k in 0..n {
                    g[k] = a * x[k];
                }
            }
            CaseKind::Cone => {
                for k in 0..n {
                    g[k] = x[k] / r;
                }
            }
            CaseKind::RadialPLaplace { p } => {
                let m = radial_exponent(p);
                let c = radial_coefficient(p, n);
                // c m r^(m-2) x; the prefactor tends to 0 as r -> 0 for m > 2.
                let pref = if r == 0.0 {
                    if m == 2.0 {
                        c * m
                    } else {
                        0.0
                    }
                } else {
                    c * m * r.powf(m - 2.0)
                };
                for k in 0..n {
                    g[k] = pref * x[k];
                }
            }
            CaseKind::Bump => {
                let s = (std::f64::consts::PI * r2 / 2.0).sin();
                for k in 0..n {
                    g[k] = -std::f64::consts::PI * s * x[k];
                }
            }
        }
        g
    }

    /// Exact Hessian. NaN entries at the cone apex.
    pub fn hess(&self, x: &[f64; 3]) -> SymMatrix {
        let n = self.ndim;
        let r2 = self.r2(x);
        let r = r2.sqrt();
        match self.kind {
            CaseKind::Quadratic { a } => SymMatrix::identity(n).scaled(a),
            CaseKind::Cone => {
                // (I - xhat xhat^T) / r
                let mut m = SymMatrix::identity(n).scaled(1.0 / r);
                for i in 0..n {
                    for j in i..n {
                        let v = m.get(i, j) - x[i] * x[j] / (r2 * r);
                        m.set_sym(i, j, v);
                    }
                }
                m
            }
            CaseKind::RadialPLaplace { p } => {
                let mexp = radial_exponent(p);
                let c = radial_coefficient(p, n);
                if r == 0.0 {
                    let diag = if mexp == 2.0 { c * mexp } else { 0.0 };
                    return SymMatrix::identity(n).scaled(diag);
                }
                let pref = c * mexp * r.powf(mexp - 2.0);
                let mut m = SymMatrix::identity(n).scaled(pref);
                let rank1 = c * mexp * (mexp - 2.0) * r.powf(mexp - 4.0);
                for i in 0..n {
                    for j in i..n {
                        let v = m.get(i, j) + rank1 * x[i] * x[j];
                        m.set_sym(i, j, v);
                    }
                }
                m
            }
            CaseKind::Bump => {
                let pi = std::f64::consts::PI;
                let s = (pi * r2 / 2.0).sin();
                let c = (pi * r2 / 2.0).cos();
                let mut m = SymMatrix::identity(n).scaled(-pi * s);
                for i in 0..n {
                    for j in i..n {
                        let v = m.get(i, j) - pi * pi * c * x[i] * x[j];
                        m.set_sym(i, j, v);
                    }
                }
                m
            }
        }
    }

    /// The right-hand side paired with u.
    pub fn f(&self, x: &[f64; 3]) -> f64 {
        match self.kind {
            // P^-(aI) for a > 0 and P^+(aI) for a < 0 coincide at lo*a*n.
            CaseKind::Quadratic { a } => self.ell.lo * a * self.ndim as f64,
            // Placeholder consistent away from the apex; not residual-checked.
            CaseKind::Cone => (self.ndim - 1) as f64,
            CaseKind::RadialPLaplace { .. } => 1.0,
            // Equality on the lower side: f = P^-(D2u) - |Du|.
            CaseKind::Bump => {
                let h = self.hess(x);
                let g = self.grad(x);
                let gn = g[..self.ndim].iter().map(|v| v * v).sum::<f64>().sqrt();
                pucci_eval(&h, &self.ell, ExtremalSign::Minus) - gn
            }
        }
    }

    pub fn sample_u(&self, spec: &GridSpec) -> Result<GridFunction> {
        GridFunction::sample(spec, |x| self.u(x))
    }

    pub fn sample_f(&self, spec: &GridSpec) -> Result<GridFunction> {
        GridFunction::sample(spec, |x| self.f(x))
    }

    /// Checks the two-sided residual on a coarse lattice sample of the ball.
    fn verify_on_coarse_sample(&self) -> Result<()> {
        if !self.residual_checked {
            return Ok(());
        }
        let m = 9i32;
        let mut idx = [0i32; 3];
        let scan = |idx: &[i32; 3]| -> Result<()> {
            let mut x = [0.0; 3];
            for k in 0..self.ndim {
                x[k] = idx[k] as f64 / m as f64;
            }
            if self.r2(&x) > 1.0 {
                return Ok(());
            }
            let g = self.grad(&x);
            let gn = g[..self.ndim].iter().map(|v| v * v).sum::<f64>().sqrt();
            if gn <= 1e-8 {
                return Ok(());
            }
            let (lo, up) =
                singular_residual(&g, &self.hess(&x), self.f(&x), &self.gamma, &self.ell);
            if lo > 1e-9 || up < -1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "case {} violates the inequality at {:?}: lower {lo}, upper {up}",
                    self.name, x
                )));
            }
            Ok(())
        };
        for i in -m..=m {
            idx[0] = i;
            if self.ndim == 1 {
                scan(&idx)?;
                continue;
            }
            for j in -m..=m {
                idx[1] = j;
                if self.ndim == 2 {
                    scan(&idx)?;
                    continue;
                }
                for k in -m..=m {
                    idx[2] = k;
                    scan(&idx)?;
                }
            }
        }
        Ok(())
    }
}

/// Parses names like "quadratic:1", "cone", "radial_plaplace:1.5", "bump".
pub fn parse_case(name: &str, ndim: usize) -> Result<TestCase> {
    let mut parts = name.splitn(2, ':');
    let head = parts.next().unwrap_or("");
    let arg = parts.next();
    let kind = match (head, arg) {
        ("quadratic", Some(a)) => CaseKind::Quadratic {
            a: a.parse()
                .map_err(|_| Error::InvalidParameter(format!("bad opening: {a}")))?,
        },
        ("quadratic", None) => CaseKind::Quadratic { a: 1.0 },
        ("cone", _) => CaseKind::Cone,
        ("radial_plaplace", Some(p)) => CaseKind::RadialPLaplace {
            p: p.parse()
                .map_err(|_| Error::InvalidParameter(format!("bad exponent: {p}")))?,
        },
        ("bump", _) => CaseKind::Bump,
        _ => {
            return Err(Error::InvalidParameter(format!("unknown case: {name}")));
        }
    };
    make_case(kind, ndim)
}

/// The default catalog at a given dimension.
pub fn standard_cases(ndim: usize) -> Vec<TestCase> {
    vec![
        make_case(CaseKind::Quadratic { a: 1.0 }, ndim).unwrap(),
        make_case(CaseKind::Cone, ndim).unwrap(),
        make_case(CaseKind::RadialPLaplace { p: 1.5 }, ndim).unwrap(),
        make_case(CaseKind::RadialPLaplace { p: 1.8 }, ndim).unwrap(),
        make_case(CaseKind::Bump, ndim).unwrap(),
    ]
}
