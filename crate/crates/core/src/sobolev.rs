//! Volume-normalized norms: exact L² of multilinear interpolants, weighted
//! energy seminorms, and a spectral negative-order Sobolev seminorm on
//! rectangular rasters.
//!
//! Two inner products coexist and must not be conflated. Nodal functions are
//! measured by the exact integral of their multilinear interpolant
//! (`l2_mean_norm`), which reproduces closed forms like |x_1| on a centered
//! interval giving 1/sqrt(12) independent of resolution. Cell-valued data
//! (gradients, fluxes) live in the plain mean inner product, where the
//! separable cosine eigenbasis of the zero-flux discrete Laplacian is exactly
//! orthonormal; Parseval and the negative seminorm are stated there.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::CellSet;
use crate::fieldgen::CoefficientField;
use crate::DMat;

/// Parameters of the spectral negative seminorm.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormConfig {
    /// order s of the negative space, in (0, 1)
    pub s_exponent: f64,
    /// number of lowest-frequency eigenpairs retained; fewer than the grid
    /// carries makes the result a reported lower bound
    pub k_max: usize,
}

impl NormConfig {
    pub fn new(s_exponent: f64, k_max: usize) -> Result<Self> {
        let cfg = NormConfig { s_exponent, k_max };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Full-spectrum configuration (no truncation on any grid up to the
    /// given mode count).
    pub fn full(s_exponent: f64) -> Result<Self> {
        NormConfig::new(s_exponent, usize::MAX)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s_exponent > 0.0 && self.s_exponent < 1.0) {
            return Err(Error::validation(format!(
                "negative-norm order s = {} outside (0, 1)",
                self.s_exponent
            )));
        }
        if self.k_max == 0 {
            return Err(Error::validation("mode cutoff k_max must be at least 1"));
        }
        Ok(())
    }
}

/// Value of a spectral seminorm with truncation provenance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralValue {
    pub value: f64,
    pub modes_used: usize,
    pub modes_total: usize,
    /// true when modes were dropped; the value is then a lower bound
    pub truncated: bool,
}

/// A complete rectangular raster of cells with per-axis spacing, carrying the
/// precomputed cosine tables of the zero-flux discrete Laplacian eigenbasis.
///
/// Values are stored axis-0 fastest: `index = i1 * n[0] + i0`.
#[derive(Clone, Debug)]
pub struct RectGrid {
    d: usize,
    n: [usize; 2],
    h: [f64; 2],
    origin: [i64; 2],
    /// cosine tables per axis: `table[axis][k * n + i]` is the i-th sample of
    /// the k-th orthonormal mode along that axis
    table: [Vec<f64>; 2],
    /// one-dimensional eigenvalues per axis
    mu_axis: [Vec<f64>; 2],
}

fn axis_table(n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n * n];
    for k in 0..n {
        let alpha = if k == 0 { 1.0 } else { std::f64::consts::SQRT_2 };
        for i in 0..n {
            let angle = std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64;
            t[k * n + i] = alpha * angle.cos();
        }
    }
    t
}

fn axis_mu(n: usize, h: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let s = (std::f64::consts::PI * k as f64 / (2 * n) as f64).sin();
            4.0 * s * s / (h * h)
        })
        .collect()
}

impl RectGrid {
    /// Grid of `n` cells per axis with spacing `h`, origin at cell (0, 0).
    /// For d = 1 the second axis is fixed to a single cell of spacing 1.
    pub fn new(d: usize, n: [usize; 2], h: [f64; 2]) -> Result<Self> {
        if !(d == 1 || d == 2) {
            return Err(Error::validation(format!("grid dimension {d} not supported")));
        }
        let (n, h) = if d == 1 { ([n[0], 1], [h[0], 1.0]) } else { (n, h) };
        if n[0] == 0 || n[1] == 0 {
            return Err(Error::validation("grid must have at least one cell per axis"));
        }
        if !(h[0] > 0.0 && h[1] > 0.0) {
            return Err(Error::validation("grid spacing must be positive"));
        }
        Ok(RectGrid {
            d,
            n,
            h,
            origin: [0, 0],
            table: [axis_table(n[0]), axis_table(n[1])],
            mu_axis: [axis_mu(n[0], h[0]), axis_mu(n[1], h[1])],
        })
    }

    /// Build from an explicit cell list with unit spacing, verifying the
    /// cells tile a complete axis-aligned rectangle (the raster of an adapted
    /// cube with diagonal deformation; sheared rasters are rejected because
    /// the separable eigenbasis does not exist there).
    pub fn from_cells(d: usize, cells: &[[i64; 2]]) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::validation("empty cell list"));
        }
        let mut lo = [i64::MAX; 2];
        let mut hi = [i64::MIN; 2];
        for c in cells {
            for ax in 0..2 {
                lo[ax] = lo[ax].min(c[ax]);
                hi[ax] = hi[ax].max(c[ax]);
            }
        }
        let n0 = (hi[0] - lo[0] + 1) as usize;
        let n1 = (hi[1] - lo[1] + 1) as usize;
        if n0 * n1 != cells.len() {
            return Err(Error::validation(format!(
                "cell set is not a complete rectangle: bounding box {n0} x {n1} holds {} cells; \
                 spectral norms need an axis-aligned rectangular raster",
                cells.len()
            )));
        }
        let mut seen = vec![false; n0 * n1];
        for c in cells {
            let idx = (c[1] - lo[1]) as usize * n0 + (c[0] - lo[0]) as usize;
            if seen[idx] {
                return Err(Error::validation("duplicate cell in raster"));
            }
            seen[idx] = true;
        }
        let mut grid = RectGrid::new(d, [n0, n1], [1.0, 1.0])?;
        grid.origin = lo;
        Ok(grid)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> [usize; 2] {
        self.n
    }

    pub fn h(&self) -> [f64; 2] {
        self.h
    }

    pub fn origin(&self) -> [i64; 2] {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Domain volume |U| = prod n_i h_i.
    pub fn volume(&self) -> f64 {
        self.n[0] as f64 * self.h[0] * if self.d == 2 { self.n[1] as f64 * self.h[1] } else { 1.0 }
    }

    /// Storage index of a cell, for grids built `from_cells`.
    pub fn index_of(&self, z: [i64; 2]) -> Result<usize> {
        let i0 = z[0] - self.origin[0];
        let i1 = z[1] - self.origin[1];
        if i0 < 0 || i1 < 0 || i0 >= self.n[0] as i64 || i1 >= self.n[1] as i64 {
            return Err(Error::validation(format!("cell ({}, {}) outside grid", z[0], z[1])));
        }
        Ok(i1 as usize * self.n[0] + i0 as usize)
    }

    /// Laplacian eigenvalue of the mode with per-axis indices `k`.
    pub fn mu(&self, k: [usize; 2]) -> f64 {
        self.mu_axis[0][k[0]] + if self.d == 2 { self.mu_axis[1][k[1]] } else { 0.0 }
    }

    /// Sample the orthonormal eigenfunction with per-axis indices `k`.
    pub fn mode(&self, k: [usize; 2]) -> Vec<f64> {
        let (n0, n1) = (self.n[0], self.n[1]);
        let mut out = vec![0.0; n0 * n1];
        for i1 in 0..n1 {
            for i0 in 0..n0 {
                out[i1 * n0 + i0] = self.table[0][k[0] * n0 + i0] * self.table[1][k[1] * n1 + i1];
            }
        }
        out
    }

    /// Forward transform: coefficients of `values` in the eigenbasis under
    /// the mean inner product, stored axis-0 index fastest.
    pub fn transform(&self, values: &[f64]) -> Result<Vec<f64>> {
        let (n0, n1) = (self.n[0], self.n[1]);
        if values.len() != n0 * n1 {
            return Err(Error::validation(format!(
                "value vector length {} does not match grid with {} cells",
                values.len(),
                n0 * n1
            )));
        }
        // axis 0: t[k0 * n1 + i1] = (1/n0) sum_i0 values[i1 * n0 + i0] w_k0(i0)
        let mut t = vec![0.0; n0 * n1];
        for i1 in 0..n1 {
            for k0 in 0..n0 {
                let mut acc = 0.0;
                let row = &self.table[0][k0 * n0..(k0 + 1) * n0];
                for i0 in 0..n0 {
                    acc += values[i1 * n0 + i0] * row[i0];
                }
                t[k0 * n1 + i1] = acc / n0 as f64;
            }
        }
        // axis 1: out[k1 * n0 + k0] = (1/n1) sum_i1 t[k0 * n1 + i1] w_k1(i1)
        let mut out = vec![0.0; n0 * n1];
        for k0 in 0..n0 {
            for k1 in 0..n1 {
                let mut acc = 0.0;
                let row = &self.table[1][k1 * n1..(k1 + 1) * n1];
                for i1 in 0..n1 {
                    acc += t[k0 * n1 + i1] * row[i1];
                }
                out[k1 * n0 + k0] = acc / n1 as f64;
            }
        }
        Ok(out)
    }

    /// Spectral weight rho_k = (|U|^{-2s/d} + mu_k^s)^{-1}; the constant mode
    /// carries rho_0 = |U|^{2s/d} by the same formula since mu_0 = 0.
    pub fn rho(&self, k: [usize; 2], s_exponent: f64) -> f64 {
        let vol_term = self.volume().powf(-2.0 * s_exponent / self.d as f64);
        1.0 / (vol_term + self.mu(k).powf(s_exponent))
    }
}

/// Root mean square of cell values: the norm of the discrete mean inner
/// product in which the eigenbasis is orthonormal.
pub fn l2_cell_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// Exact per-cell integral matrix of products of the 1D linear hat pair:
/// int phi_a phi_b over the unit interval.
const SEG: [[f64; 2]; 2] = [[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]];

/// Volume-normalized inner product of two nodal functions: the exact
/// integral of the product of their multilinear interpolants, averaged over
/// the cells. Exact on products of affines, hence resolution-independent.
pub fn interp_inner(cs: &CellSet, u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != cs.n_nodes() || v.len() != cs.n_nodes() {
        return Err(Error::validation(format!(
            "nodal vector lengths {} / {} do not match {} nodes",
            u.len(),
            v.len(),
            cs.n_nodes()
        )));
    }
    if cs.n_cells() == 0 {
        return Err(Error::validation("inner product over empty cell set"));
    }
    let mut acc = 0.0;
    for cell in 0..cs.n_cells() {
        let ids = cs.cell_node_ids(cell);
        // local order (-,-), (+,-), (-,+), (+,+): index = xbit + 2 * ybit;
        // for d = 1 the y-pair duplicates the x-pair and the tensor weights
        // along y sum to one, collapsing to the interval formula
        let mut cell_int = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                let w = SEG[a % 2][b % 2] * SEG[a / 2][b / 2];
                cell_int += w * u[ids[a]] * v[ids[b]];
            }
        }
        acc += cell_int;
    }
    Ok(acc / cs.n_cells() as f64)
}

/// Volume-normalized L² norm of a nodal function: square root of
/// `interp_inner(f, f)`.
pub fn l2_mean_norm(cs: &CellSet, values: &[f64]) -> Result<f64> {
    Ok(interp_inner(cs, values, values)?.max(0.0).sqrt())
}

/// Volume-normalized energy seminorm ||s^{1/2} grad f||: per-cell
/// grad f . s_cell grad f averaged, square-rooted.
pub fn energy_seminorm(cs: &CellSet, values: &[f64], field: &CoefficientField) -> Result<f64> {
    if values.len() != cs.n_nodes() {
        return Err(Error::validation(format!(
            "nodal vector length {} does not match {} nodes",
            values.len(),
            cs.n_nodes()
        )));
    }
    if cs.n_cells() == 0 {
        return Err(Error::validation("seminorm over empty cell set"));
    }
    if cs.d() != field.d() {
        return Err(Error::validation("dimension mismatch between cells and field"));
    }
    let mut acc = 0.0;
    for (cell, z) in cs.cells().iter().enumerate() {
        let g = cs.cell_gradient(values, cell);
        let s = field.s_at(*z);
        acc += s[0] * g[0] * g[0] + (s[1] + s[2]) * g[0] * g[1] + s[3] * g[1] * g[1];
    }
    Ok((acc / cs.n_cells() as f64).max(0.0).sqrt())
}

fn spectral_sum(grid: &RectGrid, coeffs: &[f64], cfg: &NormConfig) -> (f64, usize, bool) {
    let total = grid.len();
    if cfg.k_max >= total {
        let mut acc = 0.0;
        for k1 in 0..grid.n[1] {
            for k0 in 0..grid.n[0] {
                let c = coeffs[k1 * grid.n[0] + k0];
                acc += grid.rho([k0, k1], cfg.s_exponent) * c * c;
            }
        }
        return (acc, total, false);
    }
    // truncation: keep the k_max smallest eigenvalues (largest weights), so
    // the result is the best lower bound with that many modes
    let mut order: Vec<(f64, usize, usize)> = Vec::with_capacity(total);
    for k1 in 0..grid.n[1] {
        for k0 in 0..grid.n[0] {
            order.push((grid.mu([k0, k1]), k0, k1));
        }
    }
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = 0.0;
    for (_, k0, k1) in order.iter().take(cfg.k_max) {
        let c = coeffs[k1 * grid.n[0] + k0];
        acc += grid.rho([*k0, *k1], cfg.s_exponent) * c * c;
    }
    (acc, cfg.k_max, true)
}

/// Discrete negative Sobolev seminorm of scalar cell values:
/// (sum_k rho_k |<f, w_k>|^2)^{1/2}.
pub fn neg_sobolev_seminorm(
    grid: &RectGrid,
    values: &[f64],
    cfg: &NormConfig,
) -> Result<SpectralValue> {
    cfg.validate()?;
    let coeffs = grid.transform(values)?;
    let (acc, used, truncated) = spectral_sum(grid, &coeffs, cfg);
    Ok(SpectralValue {
        value: acc.max(0.0).sqrt(),
        modes_used: used,
        modes_total: grid.len(),
        truncated,
    })
}

/// Negative seminorm of vector-valued cell data: `components[j]` holds the
/// j-th component on the grid; `weight` (e.g. a matrix square root of the
/// homogenized companion) is applied to the stacked vector in every cell
/// before the componentwise transform, and components combine in Euclidean
/// norm.
pub fn neg_sobolev_vector(
    grid: &RectGrid,
    components: &[Vec<f64>],
    weight: Option<&DMat>,
    cfg: &NormConfig,
) -> Result<SpectralValue> {
    cfg.validate()?;
    let m = components.len();
    if m == 0 {
        return Err(Error::validation("no components given"));
    }
    for c in components {
        if c.len() != grid.len() {
            return Err(Error::validation(format!(
                "component length {} does not match grid with {} cells",
                c.len(),
                grid.len()
            )));
        }
    }
    let weighted: Vec<Vec<f64>> = match weight {
        None => components.to_vec(),
        Some(w) => {
            if w.nrows() != m || w.ncols() != m {
                return Err(Error::validation(format!(
                    "weight matrix is {}x{} but there are {} components",
                    w.nrows(),
                    w.ncols(),
                    m
                )));
            }
            let mut out = vec![vec![0.0; grid.len()]; m];
            for idx in 0..grid.len() {
                for i in 0..m {
                    let mut acc = 0.0;
                    for j in 0..m {
                        acc += w[(i, j)] * components[j][idx];
                    }
                    out[i][idx] = acc;
                }
            }
            out
        }
    };
    let mut total_sq = 0.0;
    let mut used = 0;
    let mut truncated = false;
    for comp in &weighted {
        let coeffs = grid.transform(comp)?;
        let (acc, u, t) = spectral_sum(grid, &coeffs, cfg);
        total_sq += acc;
        used = u;
        truncated |= t;
    }
    Ok(SpectralValue {
        value: total_sq.max(0.0).sqrt(),
        modes_used: used,
        modes_total: grid.len(),
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldgen;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;

    fn square_cells(n: i64) -> Vec<[i64; 2]> {
        let mut cells = Vec::new();
        for z1 in 0..n {
            for z0 in 0..n {
                cells.push([z0, z1]);
            }
        }
        cells
    }

    fn centered_x1(cs: &CellSet, scale: f64) -> Vec<f64> {
        // nodal values of x_1 with the raster's center as origin
        let (min, max) = {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for i in 0..cs.n_nodes() {
                let p = cs.node_pos(i);
                lo = lo.min(p[0]);
                hi = hi.max(p[0]);
            }
            (lo, hi)
        };
        let mid = 0.5 * (min + max);
        (0..cs.n_nodes()).map(|i| (cs.node_pos(i)[0] - mid) * scale).collect()
    }

    #[test]
    fn l2_constant_is_one() {
        let cs = CellSet::new(2, square_cells(9)).unwrap();
        let ones = vec![1.0; cs.n_nodes()];
        assert_relative_eq!(l2_mean_norm(&cs, &ones).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn l2_of_x1_on_unit_interval() {
        // x_1 on (-1/2, 1/2): rescale a 27-cell raster to unit length
        let cs = CellSet::new(2, square_cells(27)).unwrap();
        let vals = centered_x1(&cs, 1.0 / 27.0);
        assert_relative_eq!(
            l2_mean_norm(&cs, &vals).unwrap(),
            1.0 / 12f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn l2_of_x1_scales_with_cube_side() {
        // on a side-3^m raster in cell units the same integral is 3^m/sqrt(12)
        for m in [1u32, 2, 3] {
            let side = 3i64.pow(m);
            let cs = CellSet::new(2, square_cells(side)).unwrap();
            let vals = centered_x1(&cs, 1.0);
            assert_relative_eq!(
                l2_mean_norm(&cs, &vals).unwrap(),
                3f64.powi(m as i32) / 12f64.sqrt(),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn l2_d1_matches_interval_formula() {
        let cells: Vec<[i64; 2]> = (0..9).map(|z| [z, 0]).collect();
        let cs = CellSet::new(1, cells).unwrap();
        let vals = centered_x1(&cs, 1.0 / 9.0);
        assert_relative_eq!(
            l2_mean_norm(&cs, &vals).unwrap(),
            1.0 / 12f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn energy_seminorm_of_affine() {
        let field = fieldgen::constant_field(
            2,
            9,
            &nalgebra::dmatrix![4.0, 0.0; 0.0, 1.0],
            &crate::DMat::zeros(2, 2),
        )
        .unwrap();
        let cs = CellSet::new(2, square_cells(9)).unwrap();
        let x1: Vec<f64> = (0..cs.n_nodes()).map(|i| cs.node_pos(i)[0]).collect();
        assert_relative_eq!(energy_seminorm(&cs, &x1, &field).unwrap(), 2.0, epsilon = 1e-12);
        let constant = vec![5.0; cs.n_nodes()];
        assert_relative_eq!(energy_seminorm(&cs, &constant, &field).unwrap(), 0.0, epsilon = 1e-14);
        let slope: Vec<f64> = (0..cs.n_nodes())
            .map(|i| {
                let p = cs.node_pos(i);
                0.3 * p[0] - 0.7 * p[1]
            })
            .collect();
        let id = fieldgen::constant_field(2, 9, &crate::DMat::identity(2, 2), &crate::DMat::zeros(2, 2))
            .unwrap();
        assert_relative_eq!(
            energy_seminorm(&cs, &slope, &id).unwrap(),
            (0.3f64 * 0.3 + 0.7 * 0.7).sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn transform_is_orthonormal() {
        let grid = RectGrid::new(2, [9, 9], [1.0, 1.0]).unwrap();
        // modes transform to unit vectors
        for k in [[0usize, 0usize], [1, 0], [0, 2], [3, 5]] {
            let coeffs = grid.transform(&grid.mode(k)).unwrap();
            for k1 in 0..9 {
                for k0 in 0..9 {
                    let expect = if [k0, k1] == k { 1.0 } else { 0.0 };
                    assert_relative_eq!(coeffs[k1 * 9 + k0], expect, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn parseval_holds() {
        let grid = RectGrid::new(2, [27, 27], [1.0, 1.0]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let vals: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let coeffs = grid.transform(&vals).unwrap();
            let lhs: f64 = coeffs.iter().map(|c| c * c).sum();
            let rhs = l2_cell_mean(&vals).powi(2);
            assert_relative_eq!(lhs, rhs, epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn constant_on_unit_cube_gives_abs() {
        // 9 cells of spacing 1/9: |U| = 1, rho_0 = 1
        let grid = RectGrid::new(2, [9, 9], [1.0 / 9.0, 1.0 / 9.0]).unwrap();
        let cfg = NormConfig::full(0.25).unwrap();
        let vals = vec![-3.0; grid.len()];
        let sv = neg_sobolev_seminorm(&grid, &vals, &cfg).unwrap();
        assert_relative_eq!(sv.value, 3.0, epsilon = 1e-10);
        assert!(!sv.truncated);
    }

    #[test]
    fn single_mode_closed_form() {
        let grid = RectGrid::new(2, [9, 9], [1.0, 1.0]).unwrap();
        let s = 0.3;
        let cfg = NormConfig::full(s).unwrap();
        let w1 = grid.mode([1, 0]);
        let mu1 = grid.mu([1, 0]);
        let expect = (grid.volume().powf(-s) + mu1.powf(s)).powf(-0.5);
        let sv = neg_sobolev_seminorm(&grid, &w1, &cfg).unwrap();
        assert_relative_eq!(sv.value, expect, epsilon = 1e-8);
    }

    #[test]
    fn l2_upper_bound_on_unit_cube() {
        let grid = RectGrid::new(2, [9, 9], [1.0 / 9.0, 1.0 / 9.0]).unwrap();
        let cfg = NormConfig::full(0.4).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let vals: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let sv = neg_sobolev_seminorm(&grid, &vals, &cfg).unwrap();
            assert!(sv.value <= l2_cell_mean(&vals) + 1e-12);
        }
    }

    #[test]
    fn monotone_in_s_for_mean_zero() {
        // unit cube, all nonzero eigenvalues >= 1: seminorm non-increasing in s
        let grid = RectGrid::new(2, [9, 9], [1.0 / 9.0, 1.0 / 9.0]).unwrap();
        assert!(grid.mu([1, 0]) >= 1.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
        let mut vals: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        for v in &mut vals {
            *v -= mean;
        }
        let mut prev = f64::INFINITY;
        for s in [0.2, 0.4, 0.6, 0.8] {
            let sv = neg_sobolev_seminorm(&grid, &vals, &NormConfig::full(s).unwrap()).unwrap();
            assert!(sv.value <= prev + 1e-12, "not monotone at s = {s}");
            prev = sv.value;
        }
    }

    #[test]
    fn duality_inequality() {
        let grid = RectGrid::new(2, [9, 9], [1.0, 1.0]).unwrap();
        let s = 0.35;
        let cfg = NormConfig::full(s).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let f: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            // ||v||_{H^s}^2 = sum (|U|^{-2s/d} + mu^s) vhat^2
            let vhat = grid.transform(&v).unwrap();
            let mut vnorm_sq = 0.0;
            for k1 in 0..9 {
                for k0 in 0..9 {
                    let c = vhat[k1 * 9 + k0];
                    vnorm_sq += c * c / grid.rho([k0, k1], s);
                }
            }
            let vnorm = vnorm_sq.sqrt();
            let pairing = f
                .iter()
                .zip(v.iter())
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / grid.len() as f64;
            let fv = neg_sobolev_seminorm(&grid, &f, &cfg).unwrap().value;
            assert!(pairing <= fv * vnorm + 1e-8);
        }
    }

    #[test]
    fn truncation_is_lower_bound_and_reported() {
        let grid = RectGrid::new(2, [9, 9], [1.0, 1.0]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(29);
        let vals: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let full = neg_sobolev_seminorm(&grid, &vals, &NormConfig::full(0.3).unwrap()).unwrap();
        let cut = neg_sobolev_seminorm(&grid, &vals, &NormConfig::new(0.3, 10).unwrap()).unwrap();
        assert!(cut.truncated);
        assert_eq!(cut.modes_used, 10);
        assert!(cut.value <= full.value + 1e-12);
        assert!(!full.truncated);
        assert_eq!(full.modes_used, 81);
    }

    #[test]
    fn vector_seminorm_combines_euclidean() {
        let grid = RectGrid::new(2, [9, 9], [1.0, 1.0]).unwrap();
        let cfg = NormConfig::full(0.3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let a: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let zero = vec![0.0; grid.len()];
        let scalar = neg_sobolev_seminorm(&grid, &a, &cfg).unwrap().value;
        let vec2 =
            neg_sobolev_vector(&grid, &[a.clone(), a.clone()], None, &cfg).unwrap().value;
        assert_relative_eq!(vec2, scalar * 2f64.sqrt(), epsilon = 1e-12);
        let with_zero = neg_sobolev_vector(&grid, &[a.clone(), zero], None, &cfg).unwrap().value;
        assert_relative_eq!(with_zero, scalar, epsilon = 1e-12);
        // diagonal weight scales components independently
        let w = nalgebra::dmatrix![2.0, 0.0; 0.0, 0.0];
        let weighted =
            neg_sobolev_vector(&grid, &[a.clone(), a], Some(&w), &cfg).unwrap().value;
        assert_relative_eq!(weighted, 2.0 * scalar, epsilon = 1e-12);
    }

    #[test]
    fn from_cells_rejects_non_rectangles() {
        let mut cells = square_cells(3);
        cells.pop();
        assert!(RectGrid::from_cells(2, &cells).is_err());
        let grid = RectGrid::from_cells(2, &square_cells(3)).unwrap();
        assert_eq!(grid.n(), [3, 3]);
        assert_eq!(grid.index_of([0, 0]).unwrap(), 0);
        assert_eq!(grid.index_of([2, 1]).unwrap(), 5);
        assert!(grid.index_of([3, 0]).is_err());
    }
}
