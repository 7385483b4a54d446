//! Density of the latent points: the uniform mixture of the marginal
//! posteriors `q(x_n)` over two chosen dimensions, averaged over grid cells.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::VariationalPosterior;
use crate::scalar::Scalar;

/// Grid layout for [`latent_density`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    /// Latent dimensions on the horizontal and vertical axes.
    pub dims: (usize, usize),
    /// Number of cells along each axis.
    pub resolution: (usize, usize),
    /// Half-width of the default axis range, in posterior standard deviations
    /// beyond the extreme means.
    pub coverage_sd: f64,
    /// Explicit axis ranges overriding the coverage rule.
    pub bounds: Option<[(f64, f64); 2]>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            dims: (0, 1),
            resolution: (100, 100),
            coverage_sd: 4.0,
            bounds: None,
        }
    }
}

/// Row-major cell averages of a two-dimensional density: `values[iy * nx + ix]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub dims: (usize, usize),
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn cell_width(&self) -> (f64, f64) {
        (
            (self.x_range.1 - self.x_range.0) / self.nx as f64,
            (self.y_range.1 - self.y_range.0) / self.ny as f64,
        )
    }

    pub fn cell_area(&self) -> f64 {
        let (w, h) = self.cell_width();
        w * h
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        let (w, h) = self.cell_width();
        (
            self.x_range.0 + (ix as f64 + 0.5) * w,
            self.y_range.0 + (iy as f64 + 0.5) * h,
        )
    }

    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx + ix]
    }

    /// `Σ value · cell area`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_area()
    }

    /// Cells strictly greater than their eight neighbours.
    pub fn local_maxima(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let v = self.value(ix, iy);
                let mut peak = true;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (jx, jy) = (ix as i64 + dx, iy as i64 + dy);
                        if (dx, dy) == (0, 0) || jx < 0 || jy < 0 || jx >= self.nx as i64 || jy >= self.ny as i64 {
                            continue;
                        }
                        if self.value(jx as usize, jy as usize) >= v {
                            peak = false;
                        }
                    }
                }
                if peak {
                    out.push((ix, iy));
                }
            }
        }
        out
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

/// Probability mass of `N(mean, sd²)` in each of `n` equal cells of `range`.
fn cell_masses(mean: f64, sd: f64, range: (f64, f64), n: usize) -> Vec<f64> {
    let w = (range.1 - range.0) / n as f64;
    let cdf: Vec<f64> = (0..=n)
        .map(|i| normal_cdf((range.0 + i as f64 * w - mean) / sd))
        .collect();
    cdf.windows(2).map(|c| (c[1] - c[0]).max(0.0)).collect()
}

/// Average over each cell of `(1/N) Σ_n N(x; m_n, diag s_n²)` restricted to
/// `spec.dims`. Averaging over cells rather than sampling at their centers
/// keeps the total mass at most one for any resolution.
pub fn latent_density<T: Scalar>(post: &VariationalPosterior<T>, spec: &GridSpec) -> Result<DensityGrid> {
    let q = post.latent_dim();
    for index in [spec.dims.0, spec.dims.1] {
        if index >= q {
            return Err(Error::DimensionOutOfRange { index, latent_dim: q });
        }
    }
    let (nx, ny) = spec.resolution;
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidParameter("grid resolution must be positive".into()));
    }
    let n = post.n_obs();
    if n == 0 {
        return Err(Error::InsufficientData { needed: 1, found: 0 });
    }
    let axis = |j: usize| -> Vec<(f64, f64)> {
        (0..n)
            .map(|i| (post.x_means[(i, j)].as_f64(), post.x_var(i, j).as_f64().sqrt()))
            .collect()
    };
    let (ax, ay) = (axis(spec.dims.0), axis(spec.dims.1));
    let range = |pts: &[(f64, f64)]| {
        let lo = pts
            .iter()
            .map(|(m, s)| m - spec.coverage_sd * s)
            .fold(f64::INFINITY, f64::min);
        let hi = pts
            .iter()
            .map(|(m, s)| m + spec.coverage_sd * s)
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let (x_range, y_range) = match spec.bounds {
        Some([bx, by]) => (bx, by),
        None => (range(&ax), range(&ay)),
    };
    if !(x_range.1 > x_range.0) || !(y_range.1 > y_range.0) {
        return Err(Error::InvalidParameter("grid ranges must have positive width".into()));
    }
    let mut grid = DensityGrid {
        dims: spec.dims,
        x_range,
        y_range,
        nx,
        ny,
        values: vec![0.0; nx * ny],
    };
    let inv = 1.0 / (n as f64 * grid.cell_area());
    for (&(mx, sx), &(my, sy)) in ax.iter().zip(&ay) {
        let px = cell_masses(mx, sx, x_range, nx);
        let py = cell_masses(my, sy, y_range, ny);
        for (iy, &wy) in py.iter().enumerate() {
            if wy == 0.0 {
                continue;
            }
            for (ix, &wx) in px.iter().enumerate() {
                grid.values[iy * nx + ix] += wx * wy * inv;
            }
        }
    }
    Ok(grid)
}
