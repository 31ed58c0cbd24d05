//! Two-dimensional Legendre modal basis on the normalized square [-1, 1]².
//!
//! Modes are `L_{m,n}(x, y) = L_m(x) L_n(y)` with `0 <= m, n <= max_degree`,
//! excluding the unobservable piston `(0, 0)`. Modes are always ordered
//! row-major in `(m, n)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::Point2;

pub const DEFAULT_MAX_DEGREE: usize = 5;
pub const DEFAULT_RASTER_SIZE: usize = 120;

/// Legendre polynomial `L_l(x)` by the three-term recurrence.
pub fn eval_l(l: usize, x: f64) -> f64 {
    match l {
        0 => 1.0,
        1 => x,
        _ => {
            let (mut prev, mut cur) = (1.0, x);
            for k in 1..l {
                let kf = k as f64;
                let next = ((2.0 * kf + 1.0) * x * cur - kf * prev) / (kf + 1.0);
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// Derivative `L_l'(x)`, from `L'_{l+1} = L'_{l-1} + (2l+1) L_l`.
pub fn eval_l_derivative(l: usize, x: f64) -> f64 {
    // (L'_{k-1}, L'_k) starting at k = 1
    let (mut d_prev, mut d_cur) = (0.0, 1.0);
    if l == 0 {
        return 0.0;
    }
    for k in 1..l {
        let next = d_prev + (2.0 * k as f64 + 1.0) * eval_l(k, x);
        d_prev = d_cur;
        d_cur = next;
    }
    d_cur
}

/// Antiderivative `Λ_l(x)` with `Λ_l(-1) = 0` for `l >= 1`.
fn antiderivative(l: usize, x: f64) -> f64 {
    if l == 0 {
        x
    } else {
        (eval_l(l + 1, x) - eval_l(l - 1, x)) / (2.0 * l as f64 + 1.0)
    }
}

/// `∫_a^b L_l(x) dx` for `-1 <= a <= b <= 1`.
pub fn integral_lambda(l: usize, a: f64, b: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&a) || !(-1.0..=1.0).contains(&b) || a > b {
        return Err(Error::domain(format!(
            "integration bounds [{a}, {b}] must satisfy -1 <= a <= b <= 1"
        )));
    }
    Ok(antiderivative(l, b) - antiderivative(l, a))
}

pub fn eval_mode(m: usize, n: usize, p: Point2) -> f64 {
    eval_l(m, p.x) * eval_l(n, p.y)
}

/// Modes for a given maximum degree, row-major, piston excluded.
pub fn modes(max_degree: usize) -> Vec<(usize, usize)> {
    (0..=max_degree)
        .flat_map(|m| (0..=max_degree).map(move |n| (m, n)))
        .filter(|&mn| mn != (0, 0))
        .collect()
}

pub fn mode_count(max_degree: usize) -> usize {
    (max_degree + 1) * (max_degree + 1) - 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct LegendreCoeffs {
    max_degree: usize,
    values: Vec<f64>,
}

impl LegendreCoeffs {
    pub fn zeros(max_degree: usize) -> Self {
        LegendreCoeffs {
            max_degree,
            values: vec![0.0; mode_count(max_degree)],
        }
    }

    pub fn from_pairs(max_degree: usize, pairs: &[((usize, usize), f64)]) -> Result<Self> {
        let mut c = Self::zeros(max_degree);
        for &((m, n), v) in pairs {
            c.set(m, n, v)?;
        }
        Ok(c)
    }

    pub fn from_vec(max_degree: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != mode_count(max_degree) {
            return Err(Error::domain(format!(
                "expected {} coefficients for degree {}, got {}",
                mode_count(max_degree),
                max_degree,
                values.len()
            )));
        }
        Ok(LegendreCoeffs { max_degree, values })
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn index(&self, m: usize, n: usize) -> Option<usize> {
        if m > self.max_degree || n > self.max_degree || (m, n) == (0, 0) {
            return None;
        }
        Some(m * (self.max_degree + 1) + n - 1)
    }

    /// Coefficient of mode `(m, n)`; zero for modes outside the basis.
    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.index(m, n).map_or(0.0, |i| self.values[i])
    }

    pub fn set(&mut self, m: usize, n: usize, v: f64) -> Result<()> {
        let i = self.index(m, n).ok_or_else(|| {
            Error::domain(format!(
                "mode ({m},{n}) not in the degree-{} basis without piston",
                self.max_degree
            ))
        })?;
        self.values[i] = v;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        modes(self.max_degree).into_iter().zip(self.values.iter().copied())
    }

    pub fn eval(&self, p: Point2) -> f64 {
        let d = self.max_degree;
        let lx: Vec<f64> = (0..=d).map(|l| eval_l(l, p.x)).collect();
        let ly: Vec<f64> = (0..=d).map(|l| eval_l(l, p.y)).collect();
        self.iter().map(|((m, n), a)| a * lx[m] * ly[n]).sum()
    }

    /// Analytic gradient in rad per normalized unit.
    pub fn gradient(&self, p: Point2) -> (f64, f64) {
        self.iter().fold((0.0, 0.0), |(gx, gy), ((m, n), a)| {
            (
                gx + a * eval_l_derivative(m, p.x) * eval_l(n, p.y),
                gy + a * eval_l(m, p.x) * eval_l_derivative(n, p.y),
            )
        })
    }

    pub fn scaled(&self, s: f64) -> Self {
        LegendreCoeffs {
            max_degree: self.max_degree,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    /// Copy with the tilt modes (1,0) and (0,1) zeroed.
    pub fn without_tilt(&self) -> Self {
        let mut c = self.clone();
        let _ = c.set(1, 0, 0.0);
        let _ = c.set(0, 1, 0.0);
        c
    }

    /// Coefficient table, one `m n alpha` line per mode, row-major.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        for ((m, n), a) in self.iter() {
            s.push_str(&format!("{m} {n} {a:.17e}\n"));
        }
        s
    }

    pub fn parse_table(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut max_degree = 0;
        for (idx, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = || Error::Config {
                line: idx + 1,
                message: format!("expected `m n alpha`, got {line:?}"),
            };
            let mut it = line.split_whitespace();
            let m: usize = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let n: usize = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let a: f64 = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            if it.next().is_some() || (m, n) == (0, 0) {
                return Err(bad());
            }
            max_degree = max_degree.max(m).max(n);
            pairs.push(((m, n), a));
        }
        Self::from_pairs(max_degree.max(1), &pairs)
    }
}

/// Basis weights for one aperture: the coefficient of each `α_{m,n}` in the
/// aperture-averaged x and y gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow {
    pub kx: Vec<f64>,
    pub ky: Vec<f64>,
}

/// Aperture-averaged gradient weights for the cell of normalized half-width
/// `a` centered at `center`.
pub fn design_row(center: Point2, a: f64, max_degree: usize) -> Result<DesignRow> {
    if !(a > 0.0) {
        return Err(Error::domain(format!("degenerate aperture half-width {a}")));
    }
    let (x0, x1) = (center.x - a, center.x + a);
    let (y0, y1) = (center.y - a, center.y + a);
    let tol = 1e-9;
    if x0 < -1.0 - tol || y0 < -1.0 - tol || x1 > 1.0 + tol || y1 > 1.0 + tol {
        return Err(Error::domain(format!(
            "aperture cell centered ({}, {}) with half-width {a} leaves [-1,1]²",
            center.x, center.y
        )));
    }
    let (x0, x1, y0, y1) = (x0.max(-1.0), x1.min(1.0), y0.max(-1.0), y1.min(1.0));
    let d = max_degree;
    let dl_x: Vec<f64> = (0..=d).map(|l| eval_l(l, x1) - eval_l(l, x0)).collect();
    let dl_y: Vec<f64> = (0..=d).map(|l| eval_l(l, y1) - eval_l(l, y0)).collect();
    let int_x: Vec<f64> = (0..=d).map(|l| antiderivative(l, x1) - antiderivative(l, x0)).collect();
    let int_y: Vec<f64> = (0..=d).map(|l| antiderivative(l, y1) - antiderivative(l, y0)).collect();
    let norm = 1.0 / (4.0 * a * a);
    let ms = modes(d);
    Ok(DesignRow {
        kx: ms.iter().map(|&(m, n)| dl_x[m] * int_y[n] * norm).collect(),
        ky: ms.iter().map(|&(m, n)| int_x[m] * dl_y[n] * norm).collect(),
    })
}

/// One aperture's normalized gradient measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientSample {
    pub center: Point2,
    pub kx: f64,
    pub ky: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalSolution {
    pub coeffs: LegendreCoeffs,
    /// Euclidean norm of the least-squares residual vector.
    pub residual: f64,
    pub equations: usize,
}

/// Least-squares modal fit of aperture-averaged gradients.
pub fn solve_modal(
    samples: &[GradientSample],
    halfwidth: f64,
    max_degree: usize,
) -> Result<ModalSolution> {
    let unknowns = mode_count(max_degree);
    let rows = 2 * samples.len();
    if rows < unknowns {
        return Err(Error::RankDeficient {
            rank: rows,
            unknowns,
            modes: modes(max_degree),
        });
    }
    let mut a = DMatrix::<f64>::zeros(rows, unknowns);
    let mut b = DVector::<f64>::zeros(rows);
    for (i, s) in samples.iter().enumerate() {
        let row = design_row(s.center, halfwidth, max_degree)?;
        for j in 0..unknowns {
            a[(2 * i, j)] = row.kx[j];
            a[(2 * i + 1, j)] = row.ky[j];
        }
        b[2 * i] = s.kx;
        b[2 * i + 1] = s.ky;
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10 * rows.max(unknowns) as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < unknowns {
        let v_t = svd.v_t.as_ref().expect("v_t requested");
        let ms = modes(max_degree);
        let mut deficient = Vec::new();
        for (k, &s) in svd.singular_values.iter().enumerate() {
            if s > tol {
                continue;
            }
            for j in 0..unknowns {
                if v_t[(k, j)].abs() > 0.3 && !deficient.contains(&ms[j]) {
                    deficient.push(ms[j]);
                }
            }
        }
        deficient.sort_unstable();
        return Err(Error::RankDeficient {
            rank,
            unknowns,
            modes: deficient,
        });
    }
    let x = svd
        .solve(&b, tol)
        .map_err(|e| Error::domain(format!("least-squares solve failed: {e}")))?;
    let residual = (&a * &x - &b).norm();
    Ok(ModalSolution {
        coeffs: LegendreCoeffs::from_vec(max_degree, x.iter().copied().collect())?,
        residual,
        equations: rows,
    })
}

/// Phase sampled on an `n x n` cell-centered grid over [-1, 1]², row-major
/// with rows along y.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRaster {
    size: usize,
    values: Vec<f64>,
}

impl PhaseRaster {
    pub fn from_fn(size: usize, f: impl Fn(Point2) -> f64) -> Result<Self> {
        if size < 2 {
            return Err(Error::domain(format!("raster size {size} < 2")));
        }
        let mut values = Vec::with_capacity(size * size);
        for j in 0..size {
            for i in 0..size {
                values.push(f(Point2::new(cell_center(i, size), cell_center(j, size))));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("raster contains non-finite values"));
        }
        Ok(PhaseRaster { size, values })
    }

    pub fn from_values(size: usize, values: Vec<f64>) -> Result<Self> {
        if size < 2 || values.len() != size * size {
            return Err(Error::domain(format!(
                "raster of size {size} needs {} values, got {}",
                size * size,
                values.len()
            )));
        }
        Ok(PhaseRaster { size, values })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.size + i]
    }

    pub fn add(&self, other: &PhaseRaster) -> Result<PhaseRaster> {
        if self.size != other.size {
            return Err(Error::domain("raster size mismatch"));
        }
        Ok(PhaseRaster {
            size: self.size,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }
}

pub fn cell_center(i: usize, n: usize) -> f64 {
    -1.0 + (2 * i + 1) as f64 / n as f64
}

pub fn rasterize(coeffs: &LegendreCoeffs, n: usize) -> Result<PhaseRaster> {
    PhaseRaster::from_fn(n, |p| coeffs.eval(p))
}

/// RMS of `(a - b) / 2π` in waves. With `exclude_tilt_and_piston`, the
/// least-squares plane `c0 + c1 x + c2 y` is removed from the difference first.
pub fn rmse_waves(a: &PhaseRaster, b: &PhaseRaster, exclude_tilt_and_piston: bool) -> Result<f64> {
    if a.size != b.size {
        return Err(Error::domain(format!(
            "raster size mismatch: {} vs {}",
            a.size, b.size
        )));
    }
    let n = a.size;
    let diff: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
    let resid = if exclude_tilt_and_piston {
        let mut ata = nalgebra::Matrix3::<f64>::zeros();
        let mut atb = nalgebra::Vector3::<f64>::zeros();
        for j in 0..n {
            for i in 0..n {
                let v = nalgebra::Vector3::new(1.0, cell_center(i, n), cell_center(j, n));
                ata += v * v.transpose();
                atb += v * diff[j * n + i];
            }
        }
        let c = ata
            .lu()
            .solve(&atb)
            .ok_or_else(|| Error::domain("singular plane fit"))?;
        let mut r = diff;
        for j in 0..n {
            for i in 0..n {
                r[j * n + i] -= c[0] + c[1] * cell_center(i, n) + c[2] * cell_center(j, n);
            }
        }
        r
    } else {
        diff
    };
    let ms = resid.iter().map(|v| v * v).sum::<f64>() / resid.len() as f64;
    Ok(ms.sqrt() / (2.0 * PI))
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn coeffs_strategy() -> impl Strategy<Value = LegendreCoeffs> {
        proptest::collection::vec(-10.0f64..10.0, 35)
            .prop_map(|v| LegendreCoeffs::from_vec(5, v).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn modal_round_trip(truth in coeffs_strategy()) {
            let samples: Vec<_> = (0..49)
                .map(|k| {
                    let c = Point2::new((2 * (k % 7) + 1) as f64 / 7.0 - 1.0, (2 * (k / 7) + 1) as f64 / 7.0 - 1.0);
                    let r = design_row(c, 1.0 / 7.0, 5).unwrap();
                    GradientSample {
                        center: c,
                        kx: r.kx.iter().zip(truth.values()).map(|(w, a)| w * a).sum(),
                        ky: r.ky.iter().zip(truth.values()).map(|(w, a)| w * a).sum(),
                    }
                })
                .collect();
            let s = solve_modal(&samples, 1.0 / 7.0, 5).unwrap();
            for (got, want) in s.coeffs.values().iter().zip(truth.values()) {
                prop_assert!((got - want).abs() < 1e-8);
            }
        }

        #[test]
        fn rmse_symmetric_and_tilt_invariant(
            a in coeffs_strategy(),
            b in coeffs_strategy(),
            t0 in -5.0f64..5.0, tx in -5.0f64..5.0, ty in -5.0f64..5.0,
        ) {
            let ra = rasterize(&a, 24).unwrap();
            let rb = rasterize(&b, 24).unwrap();
            let ab = rmse_waves(&ra, &rb, true).unwrap();
            prop_assert_eq!(ab, rmse_waves(&rb, &ra, true).unwrap());
            prop_assert_eq!(rmse_waves(&ra, &rb, false).unwrap(), rmse_waves(&rb, &ra, false).unwrap());
            let tilt = PhaseRaster::from_fn(24, |p| t0 + tx * p.x + ty * p.y).unwrap();
            let tilted = ra.add(&tilt).unwrap();
            prop_assert!((rmse_waves(&tilted, &rb, true).unwrap() - ab).abs() < 1e-12);
        }
    }
}
