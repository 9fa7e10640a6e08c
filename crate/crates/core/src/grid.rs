//! Periodic grids, complex fields on them and the FFT plumbing.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    /// Points per axis; the second entry is 1 for a line.
    pub n: [usize; 2],
    pub length: [f64; 2],
}

impl GridSpec {
    pub fn line(n: usize, length: f64) -> Result<Self> {
        let g = GridSpec { dim: 1, n: [n, 1], length: [length, 1.0] };
        g.validate()?;
        Ok(g)
    }

    pub fn square(n: usize, length: f64) -> Result<Self> {
        let g = GridSpec { dim: 2, n: [n, n], length: [length, length] };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let axes = match self.dim {
            1 => 1,
            2 => 2,
            d => return Err(Error::InvalidParams(format!("grid dimension must be 1 or 2, got {d}"))),
        };
        for ax in 0..axes {
            let n = self.n[ax];
            if n < 16 || !n.is_power_of_two() {
                return Err(Error::InvalidParams(format!("grid size must be a power of two >= 16, got {n}")));
            }
            if !(self.length[ax] > 0.0 && self.length[ax].is_finite()) {
                return Err(Error::InvalidParams(format!("domain length must be positive, got {}", self.length[ax])));
            }
        }
        if axes == 1 && self.n[1] != 1 {
            return Err(Error::InvalidParams("a 1D grid has a single row".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx(&self) -> f64 {
        self.length[0] / self.n[0] as f64
    }

    pub fn dy(&self) -> f64 {
        if self.dim == 2 { self.length[1] / self.n[1] as f64 } else { 1.0 }
    }

    /// Cell area; a line carries a unit transverse thickness.
    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    /// Coordinates along `axis`, centred so that index n/2 sits at 0.
    pub fn coords(&self, axis: usize) -> Vec<f64> {
        let n = self.n[axis];
        let h = self.length[axis] / n as f64;
        (0..n).map(|j| (j as f64 - (n / 2) as f64) * h).collect()
    }

    /// Angular wavenumbers along `axis` in FFT order.
    pub fn wavenumbers(&self, axis: usize) -> Vec<f64> {
        let n = self.n[axis];
        let l = self.length[axis];
        (0..n)
            .map(|j| {
                let k = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
                2.0 * PI * k / l
            })
            .collect()
    }

    /// |q|² in FFT order, row-major (iy * nx + ix).
    pub fn q_squared(&self) -> Vec<f64> {
        let qx = self.wavenumbers(0);
        if self.dim == 1 {
            return qx.iter().map(|q| q * q).collect();
        }
        let qy = self.wavenumbers(1);
        let mut out = Vec::with_capacity(self.len());
        for y in &qy {
            for x in &qx {
                out.push(x * x + y * y);
            }
        }
        out
    }
}

/// Which rotating frame a field is expressed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    /// Reduced units, rotating with the holding field.
    Holding,
    /// Physical units, rotating with the holding field.
    HoldingPhysical,
    /// Physical units, cavity-mode frame.
    Cavity,
}

impl Frame {
    pub fn tag(self) -> &'static str {
        match self {
            Frame::Holding => "holding",
            Frame::HoldingPhysical => "holding-phys",
            Frame::Cavity => "cavity",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "holding" => Some(Frame::Holding),
            "holding-phys" => Some(Frame::HoldingPhysical),
            "cavity" => Some(Frame::Cavity),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexField {
    pub grid: GridSpec,
    pub values: Vec<C64>,
    pub frame: Frame,
}

impl ComplexField {
    pub fn zeros(grid: GridSpec, frame: Frame) -> Self {
        let values = vec![C64::new(0.0, 0.0); grid.len()];
        ComplexField { grid, values, frame }
    }

    pub fn from_values(grid: GridSpec, values: Vec<C64>, frame: Frame) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.len() {
            return Err(Error::InvalidParams(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(ComplexField { grid, values, frame })
    }

    /// Fills the grid from a function of (x, y); y is 0 on a line.
    pub fn from_fn(grid: GridSpec, frame: Frame, f: impl Fn(f64, f64) -> C64) -> Self {
        let xs = grid.coords(0);
        let ys = if grid.dim == 2 { grid.coords(1) } else { vec![0.0] };
        let mut values = Vec::with_capacity(grid.len());
        for y in &ys {
            for x in &xs {
                values.push(f(*x, *y));
            }
        }
        ComplexField { grid, values, frame }
    }

    /// sqrt(∫|E|² dA).
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_area()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn argmax_abs(&self) -> usize {
        let mut best = 0;
        let mut m = -1.0;
        for (i, v) in self.values.iter().enumerate() {
            let a = v.norm_sqr();
            if a > m {
                m = a;
                best = i;
            }
        }
        best
    }

    /// Intensity-weighted centre of mass, per axis.
    pub fn centroid(&self) -> [f64; 2] {
        let xs = self.grid.coords(0);
        let ys = if self.grid.dim == 2 { self.grid.coords(1) } else { vec![0.0] };
        let nx = self.grid.n[0];
        let (mut w, mut cx, mut cy) = (0.0, 0.0, 0.0);
        for (k, v) in self.values.iter().enumerate() {
            let i = v.norm_sqr();
            w += i;
            cx += i * xs[k % nx];
            cy += i * ys[k / nx];
        }
        if w == 0.0 { [0.0, 0.0] } else { [cx / w, cy / w] }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Max-norm distance to `other`.
    pub fn max_diff(&self, other: &ComplexField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Mean |E| over the outer eighth of the domain on each side.
    pub fn edge_amplitude(&self) -> f64 {
        let nx = self.grid.n[0];
        let ny = self.grid.n[1];
        let bx = (nx / 8).max(1);
        let by = if self.grid.dim == 2 { (ny / 8).max(1) } else { 0 };
        let (mut s, mut c) = (0.0, 0usize);
        for iy in 0..ny {
            for ix in 0..nx {
                let outer_x = ix < bx || ix >= nx - bx;
                let outer_y = self.grid.dim == 2 && (iy < by || iy >= ny - by);
                if outer_x || outer_y {
                    s += self.values[iy * nx + ix].norm();
                    c += 1;
                }
            }
        }
        s / c as f64
    }
}

/// Forward and inverse transforms for one grid. The inverse is normalized.
///
/// In 2D the spectrum is kept transposed (iqx * ny + iqy) between the two
/// calls, which saves two transposes per round trip; [`Spectral::q_squared`]
/// matches that layout.
pub struct Spectral {
    grid: GridSpec,
    fwd: [Arc<dyn Fft<f64>>; 2],
    inv: [Arc<dyn Fft<f64>>; 2],
    scratch: Vec<C64>,
    tmp: Vec<C64>,
    q2: Vec<f64>,
}

impl Spectral {
    pub fn new(grid: &GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let fx = planner.plan_fft_forward(grid.n[0]);
        let ix = planner.plan_fft_inverse(grid.n[0]);
        let (fy, iy) = if grid.dim == 2 {
            (planner.plan_fft_forward(grid.n[1]), planner.plan_fft_inverse(grid.n[1]))
        } else {
            (fx.clone(), ix.clone())
        };
        let scratch_len = [&fx, &ix, &fy, &iy].iter().map(|f| f.get_inplace_scratch_len()).max().unwrap_or(0);
        let q2 = if grid.dim == 1 {
            grid.q_squared()
        } else {
            let qx = grid.wavenumbers(0);
            let qy = grid.wavenumbers(1);
            let mut v = Vec::with_capacity(grid.len());
            for x in &qx {
                for y in &qy {
                    v.push(x * x + y * y);
                }
            }
            v
        };
        Spectral {
            grid: grid.clone(),
            fwd: [fx, fy],
            inv: [ix, iy],
            scratch: vec![C64::new(0.0, 0.0); scratch_len],
            tmp: if grid.dim == 2 { vec![C64::new(0.0, 0.0); grid.len()] } else { Vec::new() },
            q2,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// |q|² in the layout produced by [`Spectral::forward`].
    pub fn q_squared(&self) -> &[f64] {
        &self.q2
    }

    pub fn forward(&mut self, data: &mut [C64]) {
        self.fwd[0].process_with_scratch(data, &mut self.scratch);
        if self.grid.dim == 2 {
            let (nx, ny) = (self.grid.n[0], self.grid.n[1]);
            transpose(data, &mut self.tmp, ny, nx);
            self.fwd[1].process_with_scratch(&mut self.tmp, &mut self.scratch);
            data.copy_from_slice(&self.tmp);
        }
    }

    pub fn inverse(&mut self, data: &mut [C64]) {
        let (nx, ny) = (self.grid.n[0], self.grid.n[1]);
        if self.grid.dim == 2 {
            self.inv[1].process_with_scratch(data, &mut self.scratch);
            transpose(data, &mut self.tmp, nx, ny);
            data.copy_from_slice(&self.tmp);
        }
        self.inv[0].process_with_scratch(data, &mut self.scratch);
        let s = 1.0 / (nx * ny) as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }
}

/// `src` is rows × cols row-major; `dst` becomes cols × rows.
fn transpose(src: &[C64], dst: &mut [C64], rows: usize, cols: usize) {
    const B: usize = 16;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(GridSpec::line(8, 1.0).is_err());
        assert!(GridSpec::line(48, 1.0).is_err());
        assert!(GridSpec::line(64, 0.0).is_err());
        let g = GridSpec::line(64, 32.0).unwrap();
        assert_eq!(g.coords(0)[32], 0.0);
        assert_eq!(g.cell_area(), 0.5);
    }

    #[test]
    fn round_trip_2d() {
        let g = GridSpec { dim: 2, n: [32, 16], length: [10.0, 5.0] };
        let f = ComplexField::from_fn(g.clone(), Frame::Holding, |x, y| C64::new((x * 0.3).sin() + y, x * y * 0.1));
        let mut sp = Spectral::new(&g);
        let mut d = f.values.clone();
        sp.forward(&mut d);
        sp.inverse(&mut d);
        let err = d.iter().zip(&f.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-13);
    }

    #[test]
    fn plane_wave_lands_on_its_wavenumber() {
        let g = GridSpec { dim: 2, n: [16, 32], length: [8.0, 4.0] };
        let (kx, ky) = (3.0, -5.0);
        let qx = 2.0 * PI * kx / 8.0;
        let qy = 2.0 * PI * ky / 4.0;
        let f = ComplexField::from_fn(g.clone(), Frame::Holding, |x, y| C64::from_polar(1.0, qx * x + qy * y));
        let mut sp = Spectral::new(&g);
        let mut d = f.values.clone();
        sp.forward(&mut d);
        let k = d.iter().enumerate().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm())).unwrap().0;
        assert!((sp.q_squared()[k] - (qx * qx + qy * qy)).abs() < 1e-12);
    }
}
