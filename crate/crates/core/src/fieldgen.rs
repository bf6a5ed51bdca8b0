//! Stationary coefficient fields on the periodic cell lattice.
//!
//! A field assigns every unit cell z in Z^d (d = 1 or 2) a symmetric positive
//! definite matrix s(z) and an antisymmetric matrix k(z), periodic with period
//! `l_cells` in every axis. All randomness is counter-based: each cell draws
//! from its own ChaCha stream keyed by (seed, flat cell index), so fields are
//! reproducible cell by cell regardless of evaluation order or thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::matrix::{max_abs, DMat};

/// Both supported dimensions; a few argument checks share this.
pub const SUPPORTED_DIMS: [usize; 2] = [1, 2];

/// Periodic cellwise-constant coefficient field a = s + k.
#[derive(Clone)]
pub struct CoefficientField {
    d: usize,
    l_cells: usize,
    seed: u64,
    tag: String,
    /// d*d entries per cell, row-major within the cell, cells row-major
    /// (last axis fastest).
    s: Vec<f64>,
    k: Vec<f64>,
}

fn check_dim(d: usize) -> Result<()> {
    if !SUPPORTED_DIMS.contains(&d) {
        return Err(Error::validation(format!("dimension {d} unsupported, expected 1 or 2")));
    }
    Ok(())
}

fn check_period(l: usize) -> Result<()> {
    let mut p = l;
    while p % 3 == 0 {
        p /= 3;
    }
    if p != 1 || l < 3 {
        return Err(Error::validation(format!(
            "period {l} cells is not a power of 3 (>= 3)"
        )));
    }
    Ok(())
}

fn check_sigma(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::validation(format!("{name} = {v} must be finite and positive")));
    }
    Ok(())
}

/// One ChaCha stream per counter; used for every per-cell draw.
pub fn stream_rng(seed: u64, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(counter);
    rng
}

impl CoefficientField {
    /// Build from raw per-cell data, re-validating every cell. This is the
    /// single entry point for deserialized data.
    pub fn from_parts(
        d: usize,
        l_cells: usize,
        seed: u64,
        tag: String,
        s: Vec<f64>,
        k: Vec<f64>,
    ) -> Result<Self> {
        check_dim(d)?;
        check_period(l_cells)?;
        let n = l_cells.pow(d as u32) * d * d;
        if s.len() != n || k.len() != n {
            return Err(Error::validation(format!(
                "cell data length {} / {} does not match {} cells of {}x{} entries",
                s.len(),
                k.len(),
                l_cells.pow(d as u32),
                d,
                d
            )));
        }
        let field = CoefficientField { d, l_cells, seed, tag, s, k };
        field.validate_cells()?;
        Ok(field)
    }

    fn validate_cells(&self) -> Result<()> {
        let dd = self.d * self.d;
        for c in 0..self.cell_count() {
            let s = &self.s[c * dd..(c + 1) * dd];
            let k = &self.k[c * dd..(c + 1) * dd];
            if s.iter().chain(k.iter()).any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("cell {c}: non-finite entry")));
            }
            match self.d {
                1 => {
                    if s[0] <= 0.0 {
                        return Err(Error::validation(format!("cell {c}: s = {} not positive", s[0])));
                    }
                    if k[0] != 0.0 {
                        return Err(Error::validation(format!(
                            "cell {c}: 1x1 antisymmetric part must be zero, got {}",
                            k[0]
                        )));
                    }
                }
                2 => {
                    let scale = s.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                    if (s[1] - s[2]).abs() > 1e-12 * scale {
                        return Err(Error::validation(format!("cell {c}: s not symmetric")));
                    }
                    let det = s[0] * s[3] - s[1] * s[2];
                    if s[0] <= 0.0 || det <= 0.0 {
                        return Err(Error::validation(format!("cell {c}: s not positive definite")));
                    }
                    let kscale = k.iter().fold(scale, |m, v| m.max(v.abs()));
                    if k[0] != 0.0 || k[3] != 0.0 || (k[1] + k[2]).abs() > 1e-12 * kscale {
                        return Err(Error::validation(format!("cell {c}: k not antisymmetric")));
                    }
                }
                _ => unreachable!(),
            }
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn l_cells(&self) -> usize {
        self.l_cells
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn cell_count(&self) -> usize {
        self.l_cells.pow(self.d as u32)
    }

    /// Flat storage index of the cell containing lattice point z (periodic
    /// wrap). For d = 1 only z[0] is used.
    pub fn cell_index(&self, z: [i64; 2]) -> usize {
        let l = self.l_cells as i64;
        let i0 = z[0].rem_euclid(l) as usize;
        match self.d {
            1 => i0,
            _ => i0 * self.l_cells + z[1].rem_euclid(l) as usize,
        }
    }

    /// Symmetric part at a cell, as row-major d*d entries.
    pub fn s_at(&self, z: [i64; 2]) -> &[f64] {
        let dd = self.d * self.d;
        let c = self.cell_index(z);
        &self.s[c * dd..(c + 1) * dd]
    }

    /// Antisymmetric part at a cell, as row-major d*d entries.
    pub fn k_at(&self, z: [i64; 2]) -> &[f64] {
        let dd = self.d * self.d;
        let c = self.cell_index(z);
        &self.k[c * dd..(c + 1) * dd]
    }

    /// Full coefficient a = s + k at a cell.
    pub fn a_at(&self, z: [i64; 2]) -> [f64; 4] {
        let s = self.s_at(z);
        let k = self.k_at(z);
        let mut out = [0.0; 4];
        for i in 0..self.d * self.d {
            out[i] = s[i] + k[i];
        }
        out
    }

    pub fn s_mat(&self, z: [i64; 2]) -> DMat {
        DMat::from_row_slice(self.d, self.d, self.s_at(z))
    }

    pub fn k_mat(&self, z: [i64; 2]) -> DMat {
        DMat::from_row_slice(self.d, self.d, self.k_at(z))
    }

    /// Pointwise 2d-by-2d companion matrix at a cell.
    pub fn big_a_at(&self, z: [i64; 2]) -> DMat {
        pointwise_big_a(&self.s_mat(z), &self.k_mat(z))
            .expect("stored cells are validated, big A assembly cannot fail")
    }

    /// True if k vanishes identically, i.e. the field is symmetric.
    pub fn is_symmetric_field(&self) -> bool {
        self.k.iter().all(|v| *v == 0.0)
    }

    /// (min, max) over cells of the eigenvalues of s: the ellipticity range.
    pub fn ellipticity(&self) -> (f64, f64) {
        let dd = self.d * self.d;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in 0..self.cell_count() {
            let s = &self.s[c * dd..(c + 1) * dd];
            let (a, b) = match self.d {
                1 => (s[0], s[0]),
                _ => {
                    // closed-form 2x2 symmetric eigenvalues
                    let m = 0.5 * (s[0] + s[3]);
                    let r = (0.25 * (s[0] - s[3]).powi(2) + s[1] * s[1]).sqrt();
                    (m - r, m + r)
                }
            };
            lo = lo.min(a);
            hi = hi.max(b);
        }
        (lo, hi)
    }

    /// The field alpha * a, for covariance checks; the tag records the factor.
    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        check_sigma("alpha", alpha)?;
        Ok(CoefficientField {
            d: self.d,
            l_cells: self.l_cells,
            seed: self.seed,
            tag: format!("{} *{}", self.tag, alpha),
            s: self.s.iter().map(|v| v * alpha).collect(),
            k: self.k.iter().map(|v| v * alpha).collect(),
        })
    }

    pub(crate) fn raw_s(&self) -> &[f64] {
        &self.s
    }

    pub(crate) fn raw_k(&self) -> &[f64] {
        &self.k
    }
}

/// The pointwise 2d-by-2d companion of a single coefficient a = s + k:
/// top-left s + k^t s^-1 k, top-right -k^t s^-1, bottom-left -s^-1 k,
/// bottom-right s^-1. Symmetric and positive definite whenever s is.
pub fn pointwise_big_a(s: &DMat, k: &DMat) -> Result<DMat> {
    let d = s.nrows();
    if s.ncols() != d || k.nrows() != d || k.ncols() != d {
        return Err(Error::validation("pointwise_big_a: s and k must be d x d"));
    }
    let scale = max_abs(s).max(max_abs(k)).max(1.0);
    if max_abs(&(s - s.transpose())) > 1e-12 * scale {
        return Err(Error::validation("pointwise_big_a: s not symmetric"));
    }
    if max_abs(&(k + k.transpose())) > 1e-12 * scale {
        return Err(Error::validation("pointwise_big_a: k not antisymmetric"));
    }
    let s_inv = crate::matrix::invert(s)?;
    let kt = k.transpose();
    let mut big = DMat::zeros(2 * d, 2 * d);
    big.view_mut((0, 0), (d, d)).copy_from(&(s + &kt * &s_inv * k));
    big.view_mut((0, d), (d, d)).copy_from(&(-&kt * &s_inv));
    big.view_mut((d, 0), (d, d)).copy_from(&(-&s_inv * k));
    big.view_mut((d, d), (d, d)).copy_from(&s_inv);
    // the two off-diagonal blocks are transposes of each other; symmetrize
    // away the last-bit noise from the two separate products
    Ok(sym_fix(big))
}

fn sym_fix(m: DMat) -> DMat {
    (&m + m.transpose()) * 0.5
}

fn scalar_cells(d: usize, sigma: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let dd = d * d;
    let n = sigma.len();
    let mut s = vec![0.0; n * dd];
    let k = vec![0.0; n * dd];
    for (c, sig) in sigma.iter().enumerate() {
        match d {
            1 => s[c] = *sig,
            _ => {
                s[c * 4] = *sig;
                s[c * 4 + 3] = *sig;
            }
        }
    }
    (s, k)
}

/// Constant field: every cell carries the same (s, k).
pub fn constant_field(d: usize, l_cells: usize, s: &DMat, k: &DMat) -> Result<CoefficientField> {
    check_dim(d)?;
    check_period(l_cells)?;
    // assembling the companion performs all the symmetry and definiteness checks
    pointwise_big_a(s, k)?;
    if s.nrows() != d {
        return Err(Error::validation(format!(
            "constant_field: matrix size {} does not match d = {d}",
            s.nrows()
        )));
    }
    let dd = d * d;
    let n = l_cells.pow(d as u32);
    let mut sv = vec![0.0; n * dd];
    let mut kv = vec![0.0; n * dd];
    for c in 0..n {
        for i in 0..d {
            for j in 0..d {
                sv[c * dd + i * d + j] = s[(i, j)];
                kv[c * dd + i * d + j] = k[(i, j)];
            }
        }
    }
    CoefficientField::from_parts(d, l_cells, 0, format!("constant d={d} l={l_cells}"), sv, kv)
}

/// Independent scalar check: each cell is sigma1 I with probability p, else
/// sigma2 I, drawn from the cell's own stream.
pub fn checkerboard(
    d: usize,
    l_cells: usize,
    sigma1: f64,
    sigma2: f64,
    p: f64,
    seed: u64,
) -> Result<CoefficientField> {
    check_dim(d)?;
    check_period(l_cells)?;
    check_sigma("sigma1", sigma1)?;
    check_sigma("sigma2", sigma2)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::validation(format!("p = {p} outside [0, 1]")));
    }
    let n = l_cells.pow(d as u32);
    let sigma: Vec<f64> = (0..n)
        .map(|c| {
            let u: f64 = stream_rng(seed, c as u64).random();
            if u < p {
                sigma1
            } else {
                sigma2
            }
        })
        .collect();
    let (s, k) = scalar_cells(d, &sigma);
    CoefficientField::from_parts(
        d,
        l_cells,
        seed,
        format!("checkerboard d={d} l={l_cells} sigma=({sigma1},{sigma2}) p={p} seed={seed}"),
        s,
        k,
    )
}

/// Deterministic laminate: layers normal to `axis` alternate sigma1 I and
/// sigma2 I cell by cell.
pub fn laminate(
    d: usize,
    l_cells: usize,
    axis: usize,
    sigma1: f64,
    sigma2: f64,
) -> Result<CoefficientField> {
    check_dim(d)?;
    check_period(l_cells)?;
    check_sigma("sigma1", sigma1)?;
    check_sigma("sigma2", sigma2)?;
    if axis >= d {
        return Err(Error::validation(format!("laminate axis {axis} out of range for d = {d}")));
    }
    let n = l_cells.pow(d as u32);
    let sigma: Vec<f64> = (0..n)
        .map(|c| {
            let layer = if d == 1 {
                c
            } else if axis == 0 {
                c / l_cells
            } else {
                c % l_cells
            };
            if layer % 2 == 0 {
                sigma1
            } else {
                sigma2
            }
        })
        .collect();
    let (s, k) = scalar_cells(d, &sigma);
    CoefficientField::from_parts(
        d,
        l_cells,
        0,
        format!("laminate d={d} l={l_cells} axis={axis} sigma=({sigma1},{sigma2})"),
        s,
        k,
    )
}

/// Boolean model: a Poisson number of inclusion centers lands uniformly on the
/// torus; cells within `radius_cells` (periodic Euclidean distance between
/// cell centers) of any center carry sigma_inclusion, the rest sigma_background.
pub fn poisson_inclusions(
    d: usize,
    l_cells: usize,
    intensity: f64,
    radius_cells: f64,
    sigma_background: f64,
    sigma_inclusion: f64,
    seed: u64,
) -> Result<CoefficientField> {
    check_dim(d)?;
    check_period(l_cells)?;
    check_sigma("sigma_background", sigma_background)?;
    check_sigma("sigma_inclusion", sigma_inclusion)?;
    if !(intensity.is_finite() && intensity > 0.0) {
        return Err(Error::validation(format!("intensity = {intensity} must be positive")));
    }
    if !(radius_cells.is_finite() && radius_cells > 0.0) || radius_cells >= l_cells as f64 / 2.0 {
        return Err(Error::validation(format!(
            "radius {radius_cells} cells must lie in (0, l/2) for period {l_cells}"
        )));
    }
    let n = l_cells.pow(d as u32);
    let mean = intensity * n as f64;
    // streams 0..n belong to the cells (unused here but reserved so all
    // generators share one keying convention); count and centers follow
    let mut count_rng = stream_rng(seed, n as u64);
    let count = Poisson::new(mean)
        .map_err(|e| Error::validation(format!("poisson intensity: {e}")))?
        .sample(&mut count_rng) as usize;
    let l = l_cells as i64;
    let mut inside = vec![false; n];
    let r2 = radius_cells * radius_cells;
    let reach = radius_cells.ceil() as i64;
    for i in 0..count {
        let mut rng = stream_rng(seed, n as u64 + 1 + i as u64);
        let cx = rng.random_range(0..l);
        let cy = if d == 2 { rng.random_range(0..l) } else { 0 };
        for dx in -reach..=reach {
            let x = (cx + dx).rem_euclid(l);
            match d {
                1 => {
                    if (dx * dx) as f64 <= r2 {
                        inside[x as usize] = true;
                    }
                }
                _ => {
                    for dy in -reach..=reach {
                        if (dx * dx + dy * dy) as f64 <= r2 {
                            let y = (cy + dy).rem_euclid(l);
                            inside[(x * l + y) as usize] = true;
                        }
                    }
                }
            }
        }
    }
    let sigma: Vec<f64> = inside
        .iter()
        .map(|flag| if *flag { sigma_inclusion } else { sigma_background })
        .collect();
    let (s, k) = scalar_cells(d, &sigma);
    CoefficientField::from_parts(
        d,
        l_cells,
        seed,
        format!(
            "poisson d={d} l={l_cells} intensity={intensity} r={radius_cells} sigma=({sigma_background},{sigma_inclusion}) seed={seed}"
        ),
        s,
        k,
    )
}

/// Divergence-free perturbation of the identity: s = I and k = b(z) R with R
/// the quarter rotation. b is cellwise white noise smoothed by a moving
/// average over a square window of half-width `corr_radius` (periodic), then
/// scaled so its exact standard deviation is `amplitude`.
pub fn stream_matrix(
    l_cells: usize,
    amplitude: f64,
    corr_radius: usize,
    seed: u64,
) -> Result<CoefficientField> {
    check_period(l_cells)?;
    if !(amplitude.is_finite() && amplitude >= 0.0) {
        return Err(Error::validation(format!("amplitude = {amplitude} must be nonnegative")));
    }
    if 2 * corr_radius + 1 > l_cells {
        return Err(Error::validation(format!(
            "correlation window {} exceeds period {l_cells}",
            2 * corr_radius + 1
        )));
    }
    let d = 2;
    let n = l_cells * l_cells;
    let l = l_cells as i64;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let noise: Vec<f64> = (0..n)
        .map(|c| normal.sample(&mut stream_rng(seed, c as u64)))
        .collect();
    let w = (2 * corr_radius + 1).pow(2) as f64;
    // sum over the window divided by sqrt(w): unit variance again, then amplitude
    let scale = amplitude / w.sqrt();
    let rr = corr_radius as i64;
    let mut b = vec![0.0; n];
    for i in 0..l {
        for j in 0..l {
            let mut acc = 0.0;
            for dx in -rr..=rr {
                let x = (i + dx).rem_euclid(l);
                for dy in -rr..=rr {
                    let y = (j + dy).rem_euclid(l);
                    acc += noise[(x * l + y) as usize];
                }
            }
            b[(i * l + j) as usize] = scale * acc;
        }
    }
    let dd = d * d;
    let mut s = vec![0.0; n * dd];
    let mut k = vec![0.0; n * dd];
    for c in 0..n {
        s[c * 4] = 1.0;
        s[c * 4 + 3] = 1.0;
        // b R with R = [[0, -1], [1, 0]]
        k[c * 4 + 1] = -b[c];
        k[c * 4 + 2] = b[c];
    }
    CoefficientField::from_parts(
        d,
        l_cells,
        seed,
        format!("stream l={l_cells} amplitude={amplitude} rho={corr_radius} seed={seed}"),
        s,
        k,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn big_a_blocks_for_rotation_perturbation() {
        // s = I, k = b R with b = 0.5: top-left (1 + b^2) I, bottom-right I
        let s = DMat::identity(2, 2);
        let k = dmatrix![0.0, -0.5; 0.5, 0.0];
        let big = pointwise_big_a(&s, &k).unwrap();
        for i in 0..2 {
            assert_relative_eq!(big[(i, i)], 1.25, epsilon = 1e-14);
            assert_relative_eq!(big[(2 + i, 2 + i)], 1.0, epsilon = 1e-14);
        }
        // bottom-left is -s^-1 k = -k
        assert_relative_eq!(big[(2, 1)], 0.5, epsilon = 1e-14);
        assert_relative_eq!(big[(3, 0)], -0.5, epsilon = 1e-14);
        // symmetric, positive definite
        assert_relative_eq!(crate::matrix::asymmetry(&big), 0.0, epsilon = 1e-14);
        assert!(crate::matrix::sym_eig_bounds(&big).0 > 0.0);
    }

    #[test]
    fn big_a_scalar_is_diagonal() {
        for alpha in [0.1, 1.0, 10.0] {
            let s = DMat::identity(2, 2) * alpha;
            let k = DMat::zeros(2, 2);
            let big = pointwise_big_a(&s, &k).unwrap();
            for i in 0..2 {
                assert_relative_eq!(big[(i, i)], alpha, epsilon = 1e-14);
                assert_relative_eq!(big[(2 + i, 2 + i)], 1.0 / alpha, epsilon = 1e-14);
            }
            assert_eq!(big[(0, 1)], 0.0);
            assert_eq!(big[(0, 2)], 0.0);
        }
    }

    #[test]
    fn big_a_rejects_bad_parts() {
        let s = dmatrix![1.0, 0.3; 0.2, 1.0];
        assert!(pointwise_big_a(&s, &DMat::zeros(2, 2)).is_err());
        let s = DMat::identity(2, 2);
        let k = dmatrix![0.0, 0.5; 0.5, 0.0];
        assert!(pointwise_big_a(&s, &k).is_err());
    }

    #[test]
    fn checkerboard_is_deterministic_and_two_valued() {
        let f1 = checkerboard(2, 27, 1.0, 9.0, 0.5, 42).unwrap();
        let f2 = checkerboard(2, 27, 1.0, 9.0, 0.5, 42).unwrap();
        assert_eq!(f1.raw_s(), f2.raw_s());
        let mut ones = 0usize;
        for i in 0..27i64 {
            for j in 0..27i64 {
                let s = f1.s_at([i, j]);
                assert!(s[0] == 1.0 || s[0] == 9.0);
                assert_eq!(s[0], s[3]);
                assert_eq!(s[1], 0.0);
                if s[0] == 1.0 {
                    ones += 1;
                }
            }
        }
        // p = 1/2 over 729 cells: expect roughly half, allow 4 sigma
        let expect = 729.0 / 2.0;
        assert!((ones as f64 - expect).abs() < 4.0 * (729.0f64 * 0.25).sqrt());
    }

    #[test]
    fn checkerboard_differs_across_seeds() {
        let f1 = checkerboard(2, 9, 1.0, 9.0, 0.5, 1).unwrap();
        let f2 = checkerboard(2, 9, 1.0, 9.0, 0.5, 2).unwrap();
        assert_ne!(f1.raw_s(), f2.raw_s());
    }

    #[test]
    fn laminate_layers_and_periodic_wrap() {
        let f = laminate(2, 9, 0, 1.0, 4.0).unwrap();
        for i in 0..9i64 {
            let want = if i % 2 == 0 { 1.0 } else { 4.0 };
            for j in 0..9i64 {
                assert_eq!(f.s_at([i, j])[0], want);
            }
        }
        // wrap: cell -1 is cell 8
        assert_eq!(f.s_at([-1, 0])[0], f.s_at([8, 0])[0]);
        // layers normal to axis 1
        let f = laminate(2, 9, 1, 1.0, 4.0).unwrap();
        assert_eq!(f.s_at([0, 0])[0], 1.0);
        assert_eq!(f.s_at([0, 1])[0], 4.0);
        assert_eq!(f.s_at([5, 0])[0], 1.0);
    }

    #[test]
    fn poisson_coverage_matches_boolean_model() {
        // intensity 0.02, r = 3: expected fraction 1 - exp(-0.02 pi 9) = 0.4319
        let f = poisson_inclusions(2, 243, 0.02, 3.0, 1.0, 100.0, 7).unwrap();
        let mut hit = 0usize;
        for i in 0..243i64 {
            for j in 0..243i64 {
                if f.s_at([i, j])[0] == 100.0 {
                    hit += 1;
                }
            }
        }
        let frac = hit as f64 / (243.0 * 243.0);
        let expect = 1.0 - (-0.02 * std::f64::consts::PI * 9.0).exp();
        // loose statistical band: inclusion count fluctuates per seed
        assert!(
            (frac - expect).abs() < 0.08,
            "coverage {frac:.3} vs boolean model {expect:.3}"
        );
    }

    #[test]
    fn poisson_rejects_oversized_radius() {
        assert!(poisson_inclusions(2, 9, 0.1, 4.5, 1.0, 10.0, 0).is_err());
    }

    #[test]
    fn stream_matrix_mean_and_scale() {
        let l = 81usize;
        let rho = 1usize;
        let amp = 0.7;
        let f = stream_matrix(l, amp, rho, 3).unwrap();
        assert!(f.is_symmetric_field() == false);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for i in 0..l as i64 {
            for j in 0..l as i64 {
                let b = f.k_at([i, j])[2];
                sum += b;
                sumsq += b * b;
            }
        }
        let n = (l * l) as f64;
        let mean = sum / n;
        let std = (sumsq / n - mean * mean).sqrt();
        // mean of the field: correlated cells leave sqrt(w) extra variance,
        // so the 3 sigma band is 3 amp sqrt(w) / l
        let w = ((2 * rho + 1) * (2 * rho + 1)) as f64;
        assert!(
            mean.abs() < 3.0 * amp * w.sqrt() / n.sqrt(),
            "sample mean {mean:.4} outside the correlation-adjusted CLT band"
        );
        assert!((std - amp).abs() < 0.1 * amp, "empirical std {std:.3} vs amplitude {amp}");
    }

    #[test]
    fn scaled_field_scales_both_parts() {
        let f = stream_matrix(9, 0.5, 1, 1).unwrap();
        let g = f.scaled(3.0).unwrap();
        assert_eq!(g.s_at([2, 2])[0], 3.0);
        assert_relative_eq!(g.k_at([2, 2])[1], 3.0 * f.k_at([2, 2])[1]);
    }

    #[test]
    fn ellipticity_reports_contrast() {
        let f = checkerboard(2, 27, 1.0, 9.0, 0.5, 5).unwrap();
        let (lo, hi) = f.ellipticity();
        assert_eq!((lo, hi), (1.0, 9.0));
    }

    #[test]
    fn rejects_non_power_of_three_period() {
        assert!(checkerboard(2, 10, 1.0, 2.0, 0.5, 0).is_err());
        assert!(checkerboard(2, 1, 1.0, 2.0, 0.5, 0).is_err());
    }
}
