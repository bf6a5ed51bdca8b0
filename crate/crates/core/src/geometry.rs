//! Geometry adapted to a homogenized coefficient: the rational matrix q0
//! (a rounded multiple of s_bar^{1/2}), the lattice it generates, cubes and
//! balls in the q0 frame, and partitions of adapted cubes into triadic cubes.
//!
//! q0 has entries with denominator 3^k0, so every membership question about
//! cells and triadic cubes reduces to integer comparisons; rasterization is
//! exact and independent of floating-point rounding.

use crate::error::{Error, Result};
use crate::matrix::{spd_sqrt, sym_eig_bounds, DMat};

/// The frame for one homogenized coefficient: q0 = N / 3^k0 with N an integer
/// symmetric positive definite matrix. Cubes at level n are q0-images of
/// triadic cubes with side 3^n; the adapted lattice at level n is q0 (3^n Z^d).
#[derive(Clone, Debug)]
pub struct AdaptedGeometry {
    d: usize,
    k0: u32,
    /// numerator matrix, embedded in 2x2 with a trivial second axis for d = 1
    num: [[i64; 2]; 2],
    /// common denominator 3^k0
    denom: i64,
    /// adjugate of `num` (so num^-1 = adj / det)
    adj: [[i64; 2]; 2],
    /// determinant of `num`, positive
    det: i64,
    lambda_bar: f64,
    big_lambda_bar: f64,
}

/// Cube at `level` n >= 0 centered at the adapted lattice point q0 w,
/// where w has integer coordinates divisible by 3^n.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AdaptedCube {
    pub level: u32,
    pub w: [i64; 2],
}

fn pow3(e: u32) -> i64 {
    3i64.pow(e)
}

impl AdaptedGeometry {
    /// Build the frame from s_bar. The entries of 3^k0 q0 are the entrywise
    /// ceilings of 3^k0 |s_bar^-1|^{1/2} s_bar^{1/2}; if the rounding destroys
    /// positive definiteness, k0 is incremented (finer rounding) a few times
    /// before giving up.
    pub fn from_s_bar(s_bar: &DMat, k0: u32) -> Result<Self> {
        let d = s_bar.nrows();
        if !(d == 1 || d == 2) || s_bar.ncols() != d {
            return Err(Error::validation(format!(
                "adapted geometry: s_bar must be 1x1 or 2x2, got {}x{}",
                d,
                s_bar.ncols()
            )));
        }
        let root = spd_sqrt(s_bar)?;
        let (lambda, big_lambda) = sym_eig_bounds(s_bar);
        if lambda <= 0.0 {
            return Err(Error::singular(format!(
                "adapted geometry: s_bar has eigenvalue {lambda:.3e}"
            )));
        }
        let scale = 1.0 / lambda.sqrt();
        for attempt in k0..=k0 + 8 {
            let denom = pow3(attempt);
            let mut num = [[0i64; 2], [0i64; 2]];
            num[1][1] = denom; // trivial second axis for d = 1
            for i in 0..d {
                for j in 0..d {
                    num[i][j] = ceil_eps(denom as f64 * scale * root[(i, j)]);
                }
            }
            let det = num[0][0] * num[1][1] - num[0][1] * num[1][0];
            if num[0][0] > 0 && num[1][1] > 0 && det > 0 {
                let adj = [[num[1][1], -num[0][1]], [-num[1][0], num[0][0]]];
                return Ok(AdaptedGeometry {
                    d,
                    k0: attempt,
                    num,
                    denom,
                    adj,
                    det,
                    lambda_bar: lambda,
                    big_lambda_bar: big_lambda,
                });
            }
        }
        Err(Error::singular(format!(
            "adapted geometry: rounding at k0 = {k0}..{} never positive definite; s_bar too anisotropic",
            k0 + 8
        )))
    }

    /// The identity frame (q0 = I): plain triadic geometry.
    pub fn identity(d: usize) -> Result<Self> {
        Self::from_s_bar(&DMat::identity(d, d), 0)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k0(&self) -> u32 {
        self.k0
    }

    /// Smallest eigenvalue of s_bar.
    pub fn lambda_bar(&self) -> f64 {
        self.lambda_bar
    }

    /// Largest eigenvalue of s_bar.
    pub fn big_lambda_bar(&self) -> f64 {
        self.big_lambda_bar
    }

    /// Ellipticity ratio of s_bar.
    pub fn pi_ratio(&self) -> f64 {
        self.big_lambda_bar / self.lambda_bar
    }

    pub fn q0(&self) -> DMat {
        let mut m = DMat::zeros(self.d, self.d);
        for i in 0..self.d {
            for j in 0..self.d {
                m[(i, j)] = self.num[i][j] as f64 / self.denom as f64;
            }
        }
        m
    }

    pub fn is_identity(&self) -> bool {
        self.num[0][0] == self.denom
            && self.num[1][1] == self.denom
            && self.num[0][1] == 0
            && self.num[1][0] == 0
    }

    /// det q0, the cell volume scale of the adapted frame.
    pub fn det_q0(&self) -> f64 {
        // the embedded second axis contributes exactly denom for d = 1
        match self.d {
            1 => self.num[0][0] as f64 / self.denom as f64,
            _ => self.det as f64 / (self.denom as f64 * self.denom as f64),
        }
    }

    /// Volume of a level-n cube in cell units: det q0 * 3^(n d).
    pub fn cube_volume_cells(&self, level: u32) -> f64 {
        self.det_q0() * (pow3(level).pow(self.d as u32)) as f64
    }

    /// The cube at `level` centered at the adapted lattice point q0 w; w must
    /// be divisible by 3^level.
    pub fn cube(&self, level: u32, w: [i64; 2]) -> Result<AdaptedCube> {
        let step = pow3(level);
        let w = if self.d == 1 { [w[0], 0] } else { w };
        if w[0] % step != 0 || w[1] % step != 0 {
            return Err(Error::validation(format!(
                "cube center w = {w:?} not on the level-{level} lattice (step {step})"
            )));
        }
        Ok(AdaptedCube { level, w })
    }

    /// Center of a cube in real coordinates.
    pub fn cube_center(&self, cube: &AdaptedCube) -> [f64; 2] {
        let n = &self.num;
        let d = self.denom as f64;
        [
            (n[0][0] * cube.w[0] + n[0][1] * cube.w[1]) as f64 / d,
            (n[1][0] * cube.w[0] + n[1][1] * cube.w[1]) as f64 / d,
        ]
    }

    /// q0^-1 x for a real point.
    pub fn to_frame(&self, x: [f64; 2]) -> [f64; 2] {
        let a = &self.adj;
        let f = self.denom as f64 / self.det as f64;
        [
            f * (a[0][0] as f64 * x[0] + a[0][1] as f64 * x[1]),
            f * (a[1][0] as f64 * x[0] + a[1][1] as f64 * x[1]),
        ]
    }

    /// Exact test: does the open cube contain the cell centered at integer c?
    pub fn cell_in_cube(&self, c: [i64; 2], cube: &AdaptedCube) -> bool {
        // |(q0^-1 c)_i - w_i| < 3^n / 2  <=>  |2 D (adj c)_i - 2 det w_i| < 3^n det
        let half_rhs = pow3(cube.level) as i128 * self.det as i128;
        for i in 0..self.d {
            let fc = self.adj[i][0] as i128 * c[0] as i128 + self.adj[i][1] as i128 * c[1] as i128;
            let lhs = 2 * self.denom as i128 * fc - 2 * self.det as i128 * cube.w[i] as i128;
            if lhs.abs() >= half_rhs {
                return false;
            }
        }
        true
    }

    /// All cells (integer centers) of the open cube, lexicographically sorted.
    pub fn cube_cells(&self, cube: &AdaptedCube) -> Vec<[i64; 2]> {
        let center = self.cube_center(cube);
        let side = pow3(cube.level) as f64;
        let mut cells = Vec::new();
        let (r0, r1) = self.bounding_ranges(center, side * 0.5);
        for c0 in r0.clone() {
            match self.d {
                1 => {
                    if self.cell_in_cube([c0, 0], cube) {
                        cells.push([c0, 0]);
                    }
                }
                _ => {
                    for c1 in r1.clone() {
                        if self.cell_in_cube([c0, c1], cube) {
                            cells.push([c0, c1]);
                        }
                    }
                }
            }
        }
        cells
    }

    /// Axis ranges of integers possibly inside the frame box of half-width
    /// `half` around `center`.
    fn bounding_ranges(
        &self,
        center: [f64; 2],
        half: f64,
    ) -> (std::ops::RangeInclusive<i64>, std::ops::RangeInclusive<i64>) {
        let d = self.denom as f64;
        let mut ranges = [0..=0, 0..=0];
        for (i, range) in ranges.iter_mut().enumerate() {
            let ext = (self.num[i][0].abs() + self.num[i][1].abs()) as f64 / d * half;
            let lo = (center[i] - ext).floor() as i64 - 1;
            let hi = (center[i] + ext).ceil() as i64 + 1;
            *range = lo..=hi;
        }
        let [a, b] = ranges;
        (a, b)
    }

    /// Subcubes of `outer` at `level`: the 3^((n - level) d) adapted cubes
    /// centered on the level lattice inside the outer cube.
    pub fn enumerate_subcubes(&self, outer: &AdaptedCube, level: u32) -> Result<Vec<AdaptedCube>> {
        if level > outer.level {
            return Err(Error::validation(format!(
                "subcube level {level} exceeds outer level {}",
                outer.level
            )));
        }
        let step = pow3(level);
        let count = pow3(outer.level - level);
        let half = (count - 1) / 2;
        let mut out = Vec::with_capacity((count as usize).pow(self.d as u32));
        for t0 in -half..=half {
            if self.d == 1 {
                out.push(AdaptedCube { level, w: [outer.w[0] + step * t0, 0] });
            } else {
                for t1 in -half..=half {
                    out.push(AdaptedCube {
                        level,
                        w: [outer.w[0] + step * t0, outer.w[1] + step * t1],
                    });
                }
            }
        }
        Ok(out)
    }

    /// Cells of the adapted ball of radius r around a real center:
    /// |q0^-1 (c - center)| < r.
    pub fn ball_cells(&self, center: [f64; 2], r: f64) -> Result<Vec<[i64; 2]>> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::validation(format!("ball radius {r} must be positive")));
        }
        let d = self.denom as f64;
        let mut ext = [0.0; 2];
        for i in 0..2 {
            let row = ((self.num[i][0].pow(2) + self.num[i][1].pow(2)) as f64).sqrt() / d;
            ext[i] = row * r;
        }
        let mut cells = Vec::new();
        let lo0 = (center[0] - ext[0]).floor() as i64 - 1;
        let hi0 = (center[0] + ext[0]).ceil() as i64 + 1;
        for c0 in lo0..=hi0 {
            match self.d {
                1 => {
                    let u = self.to_frame([c0 as f64 - center[0], 0.0]);
                    if u[0].abs() < r {
                        cells.push([c0, 0]);
                    }
                }
                _ => {
                    let lo1 = (center[1] - ext[1]).floor() as i64 - 1;
                    let hi1 = (center[1] + ext[1]).ceil() as i64 + 1;
                    for c1 in lo1..=hi1 {
                        let u = self.to_frame([c0 as f64 - center[0], c1 as f64 - center[1]]);
                        if u[0] * u[0] + u[1] * u[1] < r * r {
                            cells.push([c0, c1]);
                        }
                    }
                }
            }
        }
        if cells.is_empty() {
            return Err(Error::validation(format!(
                "ball of radius {r} at {center:?} contains no whole cell"
            )));
        }
        Ok(cells)
    }

    /// Exact test: is the closed triadic cube with side 3^j centered at y
    /// (y in 3^j Z^d) contained in the adapted cube?
    fn triadic_in_cube(&self, j: u32, y: [i64; 2], cube: &AdaptedCube) -> bool {
        // corners have doubled coordinates 2 y_i +- 3^j
        let side = pow3(j);
        let rhs = pow3(cube.level) as i128 * self.det as i128;
        let corners: &[[i64; 2]] = match self.d {
            1 => &[[2 * y[0] - side, 0], [2 * y[0] + side, 0]],
            _ => &[
                [2 * y[0] - side, 2 * y[1] - side],
                [2 * y[0] + side, 2 * y[1] - side],
                [2 * y[0] - side, 2 * y[1] + side],
                [2 * y[0] + side, 2 * y[1] + side],
            ],
        };
        for x2 in corners {
            for i in 0..self.d {
                let fx =
                    self.adj[i][0] as i128 * x2[0] as i128 + self.adj[i][1] as i128 * x2[1] as i128;
                let lhs = self.denom as i128 * fx - 2 * self.det as i128 * cube.w[i] as i128;
                // |(q0^-1 x)_i - w_i| <= 3^n / 2, both sides scaled by 2 det
                if lhs.abs() > rhs {
                    return false;
                }
            }
        }
        true
    }

    /// Greedy partition of an adapted cube into triadic cubes, coarsest level
    /// first: at each level j <= n take every triadic cube contained in the
    /// adapted cube that does not meet an already chosen coarser cube.
    /// Coverage stops at j_min; the uncovered volume is the remainder.
    pub fn partition_cube(&self, cube: &AdaptedCube, j_min: u32) -> Result<Partition> {
        if j_min > cube.level {
            return Err(Error::validation(format!(
                "partition: j_min {j_min} exceeds cube level {}",
                cube.level
            )));
        }
        let center = self.cube_center(cube);
        let half = pow3(cube.level) as f64 * 0.5;
        let mut chosen: std::collections::HashSet<(u32, [i64; 2])> = std::collections::HashSet::new();
        let mut levels = Vec::new();
        let total = self.cube_volume_cells(cube.level);
        let mut covered = 0.0;
        for j in (j_min..=cube.level).rev() {
            let step = pow3(j);
            let (r0, r1) = self.bounding_ranges(center, half);
            let t0_lo = r0.start().div_euclid(step) - 1;
            let t0_hi = r0.end().div_euclid(step) + 1;
            let (t1_lo, t1_hi) = if self.d == 1 {
                (0, 0)
            } else {
                (r1.start().div_euclid(step) - 1, r1.end().div_euclid(step) + 1)
            };
            let mut centers = Vec::new();
            for t0 in t0_lo..=t0_hi {
                for t1 in t1_lo..=t1_hi {
                    let y = [step * t0, step * t1];
                    if !self.triadic_in_cube(j, y, cube) {
                        continue;
                    }
                    // overlap with a coarser chosen cube <=> some ancestor chosen
                    let mut anc = y;
                    let mut hit = false;
                    for jj in j + 1..=cube.level {
                        let s = pow3(jj);
                        anc = [nearest_multiple(anc[0], s), nearest_multiple(anc[1], s)];
                        if chosen.contains(&(jj, anc)) {
                            hit = true;
                            break;
                        }
                    }
                    if hit {
                        continue;
                    }
                    chosen.insert((j, y));
                    centers.push(y);
                }
            }
            if !centers.is_empty() {
                centers.sort();
                let volume = centers.len() as f64 * (pow3(j).pow(self.d as u32)) as f64;
                covered += volume;
                levels.push(PartitionLevel { level: j, centers, volume_cells: volume });
            }
        }
        let remainder = total - covered;
        debug_assert!(remainder > -1e-9 * total.max(1.0));
        // largest scale-relative level volume, against Pi^{1/2} 3^(j - n) |cube|
        let mut constant: f64 = 0.0;
        for lv in &levels {
            let bound = self.pi_ratio().sqrt()
                * 3f64.powi(lv.level as i32 - cube.level as i32)
                * total;
            constant = constant.max(lv.volume_cells / bound);
        }
        Ok(Partition {
            levels,
            total_cells: total,
            remainder_cells: remainder.max(0.0),
            bound_constant: constant,
        })
    }
}

/// Nearest multiple of `step` (the triadic parent center of a child center).
fn nearest_multiple(v: i64, step: i64) -> i64 {
    let r = v.rem_euclid(step);
    if 2 * r <= step {
        v - r
    } else {
        v - r + step
    }
}

fn ceil_eps(x: f64) -> i64 {
    (x - 1e-9).ceil() as i64
}

/// Result of partitioning an adapted cube into triadic cubes.
#[derive(Clone, Debug)]
pub struct Partition {
    pub levels: Vec<PartitionLevel>,
    pub total_cells: f64,
    pub remainder_cells: f64,
    /// measured constant in |V_j| <= C Pi^{1/2} 3^(j-n) |cube|
    pub bound_constant: f64,
}

#[derive(Clone, Debug)]
pub struct PartitionLevel {
    pub level: u32,
    /// centers y of the triadic cubes y + (-3^j/2, 3^j/2)^d
    pub centers: Vec<[i64; 2]>,
    pub volume_cells: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn identity_frame_for_identity_s_bar() {
        let g = AdaptedGeometry::from_s_bar(&DMat::identity(2, 2), 4).unwrap();
        assert!(g.is_identity());
        assert_eq!(g.k0(), 4);
        assert_eq!(g.lambda_bar(), 1.0);
    }

    #[test]
    fn exact_diagonal_needs_no_rounding() {
        // s_bar = diag(4, 1): scale 1, sqrt diag(2, 1), so q0 = diag(2, 1)
        let g = AdaptedGeometry::from_s_bar(&dmatrix![4.0, 0.0; 0.0, 1.0], 4).unwrap();
        let q0 = g.q0();
        assert_eq!(q0[(0, 0)], 2.0);
        assert_eq!(q0[(1, 1)], 1.0);
        assert_eq!(q0[(0, 1)], 0.0);
    }

    #[test]
    fn rounded_frame_for_coupled_s_bar() {
        // s_bar = [[2,1],[1,2]]: lambda = 1, sqrt has entries (sqrt3 +- 1)/2;
        // 81 * 1.36603 -> 111, 81 * 0.36603 -> 30
        let g = AdaptedGeometry::from_s_bar(&dmatrix![2.0, 1.0; 1.0, 2.0], 4).unwrap();
        let q0 = g.q0();
        assert_relative_eq!(q0[(0, 0)], 111.0 / 81.0, epsilon = 1e-15);
        assert_relative_eq!(q0[(0, 1)], 30.0 / 81.0, epsilon = 1e-15);
        assert_relative_eq!(q0[(1, 0)], 30.0 / 81.0, epsilon = 1e-15);
        assert_eq!(g.lambda_bar(), 1.0);
        assert_eq!(g.big_lambda_bar(), 3.0);
    }

    #[test]
    fn identity_cube_cells_are_triadic() {
        let g = AdaptedGeometry::identity(2).unwrap();
        let cube = g.cube(2, [0, 0]).unwrap();
        let cells = g.cube_cells(&cube);
        assert_eq!(cells.len(), 81);
        assert!(cells.contains(&[-4, -4]));
        assert!(cells.contains(&[4, 4]));
        assert!(!cells.contains(&[5, 0]));
    }

    #[test]
    fn shifted_cube_cells() {
        let g = AdaptedGeometry::identity(2).unwrap();
        let cube = g.cube(1, [3, -3]).unwrap();
        let cells = g.cube_cells(&cube);
        assert_eq!(cells.len(), 9);
        assert!(cells.contains(&[3, -3]));
        assert!(cells.contains(&[2, -4]));
    }

    #[test]
    fn d1_cube_cells() {
        let g = AdaptedGeometry::identity(1).unwrap();
        let cube = g.cube(2, [9, 0]).unwrap();
        let cells = g.cube_cells(&cube);
        assert_eq!(cells.len(), 9);
        assert_eq!(cells[0], [5, 0]);
        assert_eq!(cells[8], [13, 0]);
    }

    #[test]
    fn anisotropic_cube_cells_count_scales_with_det() {
        let g = AdaptedGeometry::from_s_bar(&dmatrix![4.0, 0.0; 0.0, 1.0], 4).unwrap();
        let cube = g.cube(2, [0, 0]).unwrap();
        // box (-9, 9) x (-4.5, 4.5): 17 x 9 cells
        let cells = g.cube_cells(&cube);
        assert_eq!(cells.len(), 17 * 9);
    }

    #[test]
    fn subcube_enumeration_counts() {
        let g = AdaptedGeometry::identity(2).unwrap();
        let outer = g.cube(3, [0, 0]).unwrap();
        for level in 0..=3u32 {
            let subs = g.enumerate_subcubes(&outer, level).unwrap();
            assert_eq!(subs.len(), 9usize.pow(3 - level));
        }
        // every subcube cell set sits inside the outer cell set
        let outer_cells: std::collections::HashSet<_> =
            g.cube_cells(&outer).into_iter().collect();
        for sub in g.enumerate_subcubes(&outer, 1).unwrap() {
            for c in g.cube_cells(&sub) {
                assert!(outer_cells.contains(&c));
            }
        }
    }

    #[test]
    fn subcubes_tile_identity_cube() {
        let g = AdaptedGeometry::identity(2).unwrap();
        let outer = g.cube(2, [0, 0]).unwrap();
        let mut seen = std::collections::HashSet::new();
        for sub in g.enumerate_subcubes(&outer, 1).unwrap() {
            for c in g.cube_cells(&sub) {
                assert!(seen.insert(c), "cell {c:?} covered twice");
            }
        }
        assert_eq!(seen.len(), 81);
    }

    #[test]
    fn identity_partition_is_single_cube() {
        let g = AdaptedGeometry::identity(2).unwrap();
        let cube = g.cube(3, [0, 0]).unwrap();
        let p = g.partition_cube(&cube, 0).unwrap();
        assert_eq!(p.levels.len(), 1);
        assert_eq!(p.levels[0].level, 3);
        assert_eq!(p.levels[0].centers, vec![[0, 0]]);
        assert_eq!(p.remainder_cells, 0.0);
    }

    #[test]
    fn partition_volume_identity_for_rounded_frame() {
        let g = AdaptedGeometry::from_s_bar(&dmatrix![2.0, 1.0; 1.0, 2.0], 4).unwrap();
        let cube = g.cube(3, [0, 0]).unwrap();
        let p = g.partition_cube(&cube, 0).unwrap();
        let covered: f64 = p.levels.iter().map(|l| l.volume_cells).sum();
        assert_relative_eq!(covered + p.remainder_cells, p.total_cells, epsilon = 1e-9);
        assert!(p.remainder_cells >= 0.0);
        // remainder is a boundary layer: at most a thin fraction of the cube
        assert!(p.remainder_cells < 0.35 * p.total_cells, "remainder {}", p.remainder_cells);
        // levels are disjoint by construction; volumes obey the stated decay
        assert!(p.bound_constant < 4.0, "bound constant {}", p.bound_constant);
    }

    #[test]
    fn partition_levels_disjoint_cells() {
        let g = AdaptedGeometry::from_s_bar(&dmatrix![4.0, 0.0; 0.0, 1.0], 4).unwrap();
        let cube = g.cube(2, [0, 0]).unwrap();
        let p = g.partition_cube(&cube, 0).unwrap();
        let mut covered = std::collections::HashSet::new();
        for lv in &p.levels {
            let side = pow3(lv.level);
            for y in &lv.centers {
                // cells of the closed triadic cube: centers within side/2
                let half = (side - 1) / 2;
                for c0 in y[0] - half..=y[0] + half {
                    for c1 in y[1] - half..=y[1] + half {
                        assert!(covered.insert([c0, c1]), "cell [{c0},{c1}] covered twice");
                    }
                }
            }
        }
    }

    #[test]
    fn ball_cells_identity_frame() {
        let g = AdaptedGeometry::identity(2).unwrap();
        let cells = g.ball_cells([0.0, 0.0], 2.5).unwrap();
        // |c| < 2.5: all cells with c0^2 + c1^2 < 6.25: 21 cells
        assert_eq!(cells.len(), 21);
        assert!(cells.contains(&[2, 1]));
        assert!(!cells.contains(&[2, 2]));
    }

    #[test]
    fn ball_rejects_empty() {
        let g = AdaptedGeometry::identity(2).unwrap();
        assert!(g.ball_cells([0.4, 0.4], 0.3).is_err());
    }

    #[test]
    fn cube_center_and_frame_roundtrip() {
        let g = AdaptedGeometry::from_s_bar(&dmatrix![2.0, 1.0; 1.0, 2.0], 4).unwrap();
        let cube = g.cube(1, [3, -6]).unwrap();
        let c = g.cube_center(&cube);
        let back = g.to_frame(c);
        assert_relative_eq!(back[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(back[1], -6.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_misaligned_cube_center() {
        let g = AdaptedGeometry::identity(2).unwrap();
        assert!(g.cube(2, [3, 0]).is_err());
        assert!(g.cube(2, [9, -18]).is_ok());
    }
}
