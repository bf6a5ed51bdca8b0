//! Polynomials harmonic for the homogenized coefficient: construction by
//! change of variables from integer-exact Laplace-harmonic generators,
//! homogeneous parts, exact ball/sphere integrals, dimension counts, and
//! least-squares projection of discrete functions onto the basis span.
//!
//! A polynomial p is s̄-harmonic iff v(y) = p(T y) is Laplace-harmonic for
//! T = λ̄^{-1/2} s̄^{1/2}, so the basis is built as v ∘ T^{-1} from the real
//! and imaginary parts of (x₁ + i x₂)^j, whose integer coefficients make the
//! harmonicity of the generators checkable in exact arithmetic. The rational
//! deformation q0 that shapes adapted cubes is a rounded companion of T; the
//! basis keeps it as metadata but is built from the unrounded transform so
//! that div(s̄ grad p) vanishes identically rather than approximately.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::CellSet;
use crate::matrix::{spd_sqrt, sym_eig_bounds};
use crate::sobolev::interp_inner;
use crate::DMat;

/// Hard cap on polynomial degree (dense monomial storage, exact moments).
pub const MAX_DEGREE: usize = 6;
const STRIDE: usize = MAX_DEGREE + 1;

/// Dense bivariate polynomial of degree at most [`MAX_DEGREE`]; coefficient
/// of x₁^a x₂^b at index a * STRIDE + b. Univariate polynomials keep b = 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    coeffs: [f64; STRIDE * STRIDE],
}

impl Poly {
    pub fn zero() -> Poly {
        Poly { coeffs: [0.0; STRIDE * STRIDE] }
    }

    pub fn constant(c: f64) -> Poly {
        let mut p = Poly::zero();
        p.coeffs[0] = c;
        p
    }

    /// The monomial x₁^a x₂^b.
    pub fn monomial(a: usize, b: usize, c: f64) -> Result<Poly> {
        if a + b > MAX_DEGREE {
            return Err(Error::validation(format!(
                "monomial degree {} exceeds the budget {MAX_DEGREE}",
                a + b
            )));
        }
        let mut p = Poly::zero();
        p.coeffs[a * STRIDE + b] = c;
        Ok(p)
    }

    pub fn coeff(&self, a: usize, b: usize) -> f64 {
        if a + b > MAX_DEGREE {
            0.0
        } else {
            self.coeffs[a * STRIDE + b]
        }
    }

    pub fn set_coeff(&mut self, a: usize, b: usize, c: f64) -> Result<()> {
        if a + b > MAX_DEGREE {
            return Err(Error::validation(format!(
                "monomial degree {} exceeds the budget {MAX_DEGREE}",
                a + b
            )));
        }
        self.coeffs[a * STRIDE + b] = c;
        Ok(())
    }

    /// Iterate nonzero terms as (a, b, coefficient).
    pub fn terms(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..STRIDE * STRIDE).filter_map(move |i| {
            let (a, b) = (i / STRIDE, i % STRIDE);
            let c = self.coeffs[i];
            if a + b <= MAX_DEGREE && c != 0.0 {
                Some((a, b, c))
            } else {
                None
            }
        })
    }

    pub fn degree(&self) -> usize {
        self.terms().map(|(a, b, _)| a + b).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        // Horner in x1 over coefficient polynomials in x2
        let mut acc = 0.0;
        for a in (0..STRIDE).rev() {
            let mut row = 0.0;
            for b in (0..STRIDE).rev() {
                row = row * x[1] + self.coeffs[a * STRIDE + b];
            }
            acc = acc * x[0] + row;
        }
        acc
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for i in 0..STRIDE * STRIDE {
            out.coeffs[i] += other.coeffs[i];
        }
        out
    }

    pub fn scale(&self, c: f64) -> Poly {
        let mut out = self.clone();
        for v in &mut out.coeffs {
            *v *= c;
        }
        out
    }

    /// Product; errors if the result would exceed the degree budget.
    pub fn mul(&self, other: &Poly) -> Result<Poly> {
        let mut out = Poly::zero();
        for (a1, b1, c1) in self.terms() {
            for (a2, b2, c2) in other.terms() {
                let (a, b) = (a1 + a2, b1 + b2);
                if a + b > MAX_DEGREE {
                    return Err(Error::validation(format!(
                        "polynomial product degree {} exceeds the budget {MAX_DEGREE}",
                        a + b
                    )));
                }
                out.coeffs[a * STRIDE + b] += c1 * c2;
            }
        }
        Ok(out)
    }

    /// Partial derivative along axis 0 or 1.
    pub fn derivative(&self, axis: usize) -> Poly {
        let mut out = Poly::zero();
        for (a, b, c) in self.terms() {
            match axis {
                0 if a > 0 => out.coeffs[(a - 1) * STRIDE + b] += a as f64 * c,
                1 if b > 0 => out.coeffs[a * STRIDE + (b - 1)] += b as f64 * c,
                _ => {}
            }
        }
        out
    }

    /// The operator div(s grad p) = sum_ij s_ij d_i d_j p for symmetric s.
    pub fn weighted_laplacian(&self, s: &DMat) -> Poly {
        let mut out = Poly::zero();
        for i in 0..2 {
            for j in 0..2 {
                let sij = if i < s.nrows() && j < s.ncols() { s[(i, j)] } else { 0.0 };
                if sij != 0.0 {
                    out = out.add(&self.derivative(i).derivative(j).scale(sij));
                }
            }
        }
        out
    }

    /// Degree-l homogeneous part: the terms with a + b = l.
    pub fn homogeneous_part(&self, l: usize) -> Poly {
        let mut out = Poly::zero();
        for (a, b, c) in self.terms() {
            if a + b == l {
                out.coeffs[a * STRIDE + b] = c;
            }
        }
        out
    }

    /// Substitute x -> A x (linear change of variables) by binomial
    /// expansion of each monomial.
    pub fn compose_linear(&self, a_mat: &DMat) -> Result<Poly> {
        let (a00, a01) = (a_mat[(0, 0)], if a_mat.ncols() > 1 { a_mat[(0, 1)] } else { 0.0 });
        let (a10, a11) = if a_mat.nrows() > 1 {
            (a_mat[(1, 0)], a_mat[(1, 1)])
        } else {
            (0.0, 1.0)
        };
        // powers of the two linear forms l1 = a00 x + a01 y, l2 = a10 x + a11 y
        let l1 = {
            let mut p = Poly::zero();
            p.coeffs[STRIDE] = a00;
            p.coeffs[1] = a01;
            p
        };
        let l2 = {
            let mut p = Poly::zero();
            p.coeffs[STRIDE] = a10;
            p.coeffs[1] = a11;
            p
        };
        let mut pow1 = vec![Poly::constant(1.0)];
        let mut pow2 = vec![Poly::constant(1.0)];
        for j in 1..=MAX_DEGREE {
            pow1.push(pow1[j - 1].mul(&l1)?);
            pow2.push(pow2[j - 1].mul(&l2)?);
        }
        let mut out = Poly::zero();
        for (a, b, c) in self.terms() {
            out = out.add(&pow1[a].mul(&pow2[b])?.scale(c));
        }
        Ok(out)
    }
}

/// Integer-coefficient polynomial for the Laplace-harmonic generators; the
/// harmonicity check on these is exact.
#[derive(Clone, Debug, PartialEq)]
struct IPoly {
    coeffs: [i64; STRIDE * STRIDE],
}

impl IPoly {
    fn zero() -> IPoly {
        IPoly { coeffs: [0; STRIDE * STRIDE] }
    }

    fn constant(c: i64) -> IPoly {
        let mut p = IPoly::zero();
        p.coeffs[0] = c;
        p
    }

    /// x * self - used by the solid-harmonic recurrence.
    fn shift_x(&self) -> IPoly {
        let mut out = IPoly::zero();
        for a in 0..STRIDE - 1 {
            for b in 0..STRIDE {
                out.coeffs[(a + 1) * STRIDE + b] = self.coeffs[a * STRIDE + b];
            }
        }
        out
    }

    fn shift_y(&self) -> IPoly {
        let mut out = IPoly::zero();
        for a in 0..STRIDE {
            for b in 0..STRIDE - 1 {
                out.coeffs[a * STRIDE + (b + 1)] = self.coeffs[a * STRIDE + b];
            }
        }
        out
    }

    fn sub(&self, other: &IPoly) -> IPoly {
        let mut out = self.clone();
        for i in 0..STRIDE * STRIDE {
            out.coeffs[i] -= other.coeffs[i];
        }
        out
    }

    fn add(&self, other: &IPoly) -> IPoly {
        let mut out = self.clone();
        for i in 0..STRIDE * STRIDE {
            out.coeffs[i] += other.coeffs[i];
        }
        out
    }

    /// Exact integer Laplacian.
    fn laplacian(&self) -> IPoly {
        let mut out = IPoly::zero();
        for a in 0..STRIDE {
            for b in 0..STRIDE {
                let c = self.coeffs[a * STRIDE + b];
                if c != 0 {
                    if a >= 2 {
                        out.coeffs[(a - 2) * STRIDE + b] += (a * (a - 1)) as i64 * c;
                    }
                    if b >= 2 {
                        out.coeffs[a * STRIDE + (b - 2)] += (b * (b - 1)) as i64 * c;
                    }
                }
            }
        }
        out
    }

    fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0)
    }

    fn to_float(&self) -> Poly {
        let mut p = Poly::zero();
        for i in 0..STRIDE * STRIDE {
            p.coeffs[i] = self.coeffs[i] as f64;
        }
        p
    }
}

/// Real and imaginary parts of (x₁ + i x₂)^j for j = 0..=deg, with exact
/// integer coefficients; each is Laplace-harmonic and the pair spans the
/// homogeneous harmonics of its degree.
fn solid_harmonic_pairs(deg: usize) -> Vec<(IPoly, IPoly)> {
    let mut out = Vec::with_capacity(deg + 1);
    let mut re = IPoly::constant(1);
    let mut im = IPoly::zero();
    out.push((re.clone(), im.clone()));
    for _ in 1..=deg {
        let new_re = re.shift_x().sub(&im.shift_y());
        let new_im = im.shift_x().add(&re.shift_y());
        re = new_re;
        im = new_im;
        out.push((re.clone(), im.clone()));
    }
    out
}

/// dim of the harmonic polynomials of degree <= k in dimension d:
/// C(d+k-1, k) + C(d+k-2, k-1), with the second term zero at k = 0.
pub fn dim_formula(d: usize, k: usize) -> u64 {
    fn binom(n: u64, r: u64) -> u64 {
        if r > n {
            return 0;
        }
        let r = r.min(n - r);
        let mut acc: u64 = 1;
        for i in 0..r {
            acc = acc * (n - i) / (i + 1);
        }
        acc
    }
    let first = binom((d + k - 1) as u64, k as u64);
    let second = if k == 0 { 0 } else { binom((d + k - 2) as u64, (k - 1) as u64) };
    first + second
}

/// Basis of the polynomials of degree <= k harmonic for the constant
/// coefficient s_bar, with the rational frame deformation kept as metadata.
#[derive(Clone, Debug)]
pub struct HarmonicBasis {
    pub d: usize,
    pub k: usize,
    pub s_bar: DMat,
    pub q0: DMat,
    /// basis polynomials ordered by ascending generator degree
    pub polys: Vec<Poly>,
}

/// Construct the degree-<=k s̄-harmonic polynomial basis.
pub fn abar_harmonic_basis(d: usize, k: usize, s_bar: &DMat, q0: &DMat) -> Result<HarmonicBasis> {
    if !(d == 1 || d == 2) {
        return Err(Error::validation(format!("basis dimension {d} not supported")));
    }
    if k > MAX_DEGREE {
        return Err(Error::validation(format!(
            "basis degree {k} exceeds the budget {MAX_DEGREE}"
        )));
    }
    if s_bar.nrows() != d || s_bar.ncols() != d {
        return Err(Error::validation(format!(
            "s_bar is {}x{}, expected {d}x{d}",
            s_bar.nrows(),
            s_bar.ncols()
        )));
    }
    let (lo, _) = sym_eig_bounds(s_bar);
    if !(lo > 0.0) {
        return Err(Error::singular(format!(
            "degenerate s_bar: min eigenvalue {lo:.3e}"
        )));
    }
    let polys = if d == 1 {
        // harmonic polynomials on the line are the affines, any coefficient
        let mut v = vec![Poly::constant(1.0)];
        if k >= 1 {
            v.push(Poly::monomial(1, 0, 1.0)?);
        }
        v
    } else {
        // v Laplace-harmonic  =>  p(x) = v(T^-1 x) satisfies
        // div(s_bar grad p) = lambda_min * (Laplacian v)(T^-1 x) = 0
        // for T = lambda_min^{-1/2} s_bar^{1/2}; the inverse transform is
        // T^-1 = lambda_min^{1/2} s_bar^{-1/2}
        let t_inv = spd_sqrt(&crate::matrix::invert(s_bar)?)?.scale(lo.sqrt());
        let pairs = solid_harmonic_pairs(k);
        let mut v = Vec::new();
        for (j, (re, im)) in pairs.iter().enumerate() {
            debug_assert!(re.laplacian().is_zero() && im.laplacian().is_zero());
            if j == 0 {
                v.push(Poly::constant(1.0));
            } else {
                v.push(re.to_float().compose_linear(&t_inv)?);
                v.push(im.to_float().compose_linear(&t_inv)?);
            }
        }
        v
    };
    let expected = dim_formula(d, k) as usize;
    if polys.len() != expected {
        return Err(Error::format(format!(
            "basis count {} disagrees with the dimension formula {expected}",
            polys.len()
        )));
    }
    // harmonicity of the transformed elements, checked on coefficients
    for p in &polys {
        let resid = p.weighted_laplacian(s_bar);
        let scale = p.max_abs_coeff().max(1.0) * crate::matrix::max_abs(s_bar).max(1.0);
        if resid.max_abs_coeff() > 1e-10 * scale {
            return Err(Error::format(format!(
                "constructed element fails the harmonicity check: residual {:.3e}",
                resid.max_abs_coeff()
            )));
        }
    }
    Ok(HarmonicBasis { d, k, s_bar: s_bar.clone(), q0: q0.clone(), polys })
}

impl HarmonicBasis {
    pub fn len(&self) -> usize {
        self.polys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polys.is_empty()
    }

    /// Evaluate the combination sum_i coeffs[i] * p_i at a point.
    pub fn eval_combination(&self, coeffs: &[f64], x: [f64; 2]) -> f64 {
        coeffs.iter().zip(self.polys.iter()).map(|(c, p)| c * p.eval(x)).sum()
    }

    /// Serializable dump (degree, monomial exponents, coefficients).
    pub fn dump(&self) -> BasisDump {
        BasisDump {
            d: self.d,
            k: self.k,
            s_bar: self.s_bar.iter().copied().collect(),
            q0: self.q0.iter().copied().collect(),
            polys: self
                .polys
                .iter()
                .map(|p| PolyDump {
                    degree: p.degree(),
                    terms: p.terms().map(|(a, b, c)| TermDump { a, b, c }).collect(),
                })
                .collect(),
        }
    }
}

/// JSON-friendly form of a basis.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BasisDump {
    pub d: usize,
    pub k: usize,
    /// column-major entries of s_bar
    pub s_bar: Vec<f64>,
    /// column-major entries of q0
    pub q0: Vec<f64>,
    pub polys: Vec<PolyDump>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolyDump {
    pub degree: usize,
    pub terms: Vec<TermDump>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TermDump {
    pub a: usize,
    pub b: usize,
    pub c: f64,
}

fn double_factorial(n: i64) -> f64 {
    // (-1)!! = 1 by convention
    let mut acc = 1.0;
    let mut k = n;
    while k > 1 {
        acc *= k as f64;
        k -= 2;
    }
    acc
}

/// Exact volume-normalized moment of x₁^a x₂^b over the Euclidean ball of
/// radius r: interval for d = 1, disk via the polar double-factorial closed
/// form for d = 2. Zero for odd exponents.
pub fn ball_moment(d: usize, a: usize, b: usize, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::validation("ball radius must be positive"));
    }
    match d {
        1 => {
            if b != 0 {
                return Err(Error::validation("one-dimensional moment with x2 power"));
            }
            if a % 2 == 1 {
                Ok(0.0)
            } else {
                // (1/(2r)) * 2 r^{a+1} / (a+1)
                Ok(r.powi(a as i32) / (a as f64 + 1.0))
            }
        }
        2 => {
            if a % 2 == 1 || b % 2 == 1 {
                Ok(0.0)
            } else {
                // int_disk x^a y^b = r^{a+b+2}/(a+b+2) * 2 pi (a-1)!!(b-1)!!/(a+b)!!
                // normalized by the area pi r^2
                let (ai, bi) = (a as i64, b as i64);
                let val = r.powi((a + b) as i32) * 2.0 / (a as f64 + b as f64 + 2.0)
                    * double_factorial(ai - 1)
                    * double_factorial(bi - 1)
                    / double_factorial(ai + bi);
                Ok(val)
            }
        }
        _ => Err(Error::validation(format!("ball moments in dimension {d} not supported"))),
    }
}

/// Exact volume-normalized inner product of two polynomials over the
/// Euclidean ball of radius r.
pub fn ball_inner(d: usize, p: &Poly, q: &Poly, r: f64) -> Result<f64> {
    let mut acc = 0.0;
    for (a1, b1, c1) in p.terms() {
        for (a2, b2, c2) in q.terms() {
            acc += c1 * c2 * ball_moment(d, a1 + a2, b1 + b2, r)?;
        }
    }
    Ok(acc)
}

/// Mean of p * q over the unit sphere: two points for d = 1, an N-point
/// trapezoid rule on the circle for d = 2 (exact for the trigonometric
/// polynomials that restricted polynomials of total degree < N/2 become).
pub fn sphere_inner(d: usize, p: &Poly, q: &Poly, n_points: usize) -> Result<f64> {
    match d {
        1 => Ok(0.5
            * (p.eval([1.0, 0.0]) * q.eval([1.0, 0.0]) + p.eval([-1.0, 0.0]) * q.eval([-1.0, 0.0]))),
        2 => {
            if n_points < 2 * MAX_DEGREE + 2 {
                return Err(Error::validation(format!(
                    "sphere quadrature needs at least {} points",
                    2 * MAX_DEGREE + 2
                )));
            }
            let mut acc = 0.0;
            for i in 0..n_points {
                let th = 2.0 * std::f64::consts::PI * i as f64 / n_points as f64;
                let x = [th.cos(), th.sin()];
                acc += p.eval(x) * q.eval(x);
            }
            Ok(acc / n_points as f64)
        }
        _ => Err(Error::validation(format!("sphere quadrature in dimension {d} not supported"))),
    }
}

/// Least-squares projection of nodal values onto the basis span.
#[derive(Clone, Debug)]
pub struct Projection {
    /// coefficients over `basis.polys`
    pub coeffs: Vec<f64>,
    /// volume-normalized norm of f minus the projection
    pub residual: f64,
    /// condition number of the equilibrated Gram matrix
    pub gram_condition: f64,
    /// true when the plain solve was abandoned for the orthonormalized one
    pub reorthonormalized: bool,
}

/// Project a nodal function onto span(basis) in the volume-normalized
/// interpolant inner product on the region, with the polynomials evaluated
/// relative to `center`.
pub fn project_onto_abar_k(
    values: &[f64],
    cs: &CellSet,
    center: [f64; 2],
    basis: &HarmonicBasis,
) -> Result<Projection> {
    let nb = basis.len();
    if nb == 0 {
        return Err(Error::validation("empty basis"));
    }
    if values.len() != cs.n_nodes() {
        return Err(Error::validation(format!(
            "nodal vector length {} does not match {} nodes",
            values.len(),
            cs.n_nodes()
        )));
    }
    // columns: basis elements sampled at the nodes
    let cols: Vec<Vec<f64>> = basis
        .polys
        .iter()
        .map(|p| {
            (0..cs.n_nodes())
                .map(|i| {
                    let pos = cs.node_pos(i);
                    p.eval([pos[0] - center[0], pos[1] - center[1]])
                })
                .collect()
        })
        .collect();
    let mut gram = DMat::zeros(nb, nb);
    let mut rhs = crate::DVec::zeros(nb);
    for i in 0..nb {
        for j in i..nb {
            let g = interp_inner(cs, &cols[i], &cols[j])?;
            gram[(i, j)] = g;
            gram[(j, i)] = g;
        }
        rhs[i] = interp_inner(cs, values, &cols[i])?;
    }
    // equilibrate so the condition number reflects angular degeneracy only
    let mut scale = vec![0.0; nb];
    for (i, s) in scale.iter_mut().enumerate() {
        let g = gram[(i, i)];
        if !(g > 0.0) {
            return Err(Error::singular(
                "a basis element vanishes identically on the region",
            ));
        }
        *s = 1.0 / g.sqrt();
    }
    let mut eq = DMat::zeros(nb, nb);
    let mut eq_rhs = crate::DVec::zeros(nb);
    for i in 0..nb {
        for j in 0..nb {
            eq[(i, j)] = gram[(i, j)] * scale[i] * scale[j];
        }
        eq_rhs[i] = rhs[i] * scale[i];
    }
    let eig = eq.clone().symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(*v));
    let min_ev = eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let cond = if min_ev > 0.0 { max_ev / min_ev } else { f64::INFINITY };
    let (sol_eq, reorth) = if cond <= 1e12 {
        let sol = eq
            .lu()
            .solve(&eq_rhs)
            .ok_or_else(|| Error::singular("projection normal equations singular"))?;
        (sol, false)
    } else {
        // re-orthonormalize: work in the eigenbasis of the equilibrated Gram,
        // which is an orthonormal basis of the span on this region; a
        // direction below the rank threshold means the basis is genuinely
        // dependent on the region
        let threshold = 1e-14 * max_ev;
        if eig.eigenvalues.iter().any(|v| *v < threshold) {
            return Err(Error::singular(format!(
                "basis numerically dependent on the region even after \
                 re-orthonormalization (gram eigenvalue ratio {:.3e})",
                min_ev / max_ev
            )));
        }
        let mut sol = crate::DVec::zeros(nb);
        for m in 0..nb {
            let v = eig.eigenvectors.column(m);
            let proj = v.dot(&eq_rhs) / eig.eigenvalues[m];
            for i in 0..nb {
                sol[i] += proj * v[i];
            }
        }
        (sol, true)
    };
    let coeffs: Vec<f64> = (0..nb).map(|i| sol_eq[i] * scale[i]).collect();
    // residual evaluated directly, not via the normal-equation identity
    let mut diff = values.to_vec();
    for (i, c) in coeffs.iter().enumerate() {
        for (v, col) in diff.iter_mut().zip(cols[i].iter()) {
            *v -= c * col;
        }
    }
    let residual = crate::sobolev::l2_mean_norm(cs, &diff)?;
    Ok(Projection { coeffs, residual, gram_condition: cond, reorthonormalized: reorth })
}
