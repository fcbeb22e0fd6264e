use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A uniform cell-centered grid. Cell `(i, j, k)` has its center at
/// `origin + (i + ½, j + ½, k + ½)·cell`; storage is x-fastest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: Vector3<f64>,
    pub cell: f64,
    pub dims: [usize; 3],
    pub padding_factor: usize,
}

impl GridSpec {
    pub fn new(origin: Vector3<f64>, cell: f64, dims: [usize; 3], padding_factor: usize) -> Result<Self> {
        if !(cell > 0.0 && cell.is_finite()) {
            return Err(Error::InvalidInput(format!("cell size must be positive, got {cell}")));
        }
        if padding_factor < 2 {
            return Err(Error::InvalidInput("padding factor must be at least 2".into()));
        }
        for &d in &dims {
            if d == 0 || !(d * padding_factor).is_power_of_two() {
                return Err(Error::InvalidInput(format!(
                    "padded dimension {d}×{padding_factor} is not a power of two"
                )));
            }
        }
        Ok(Self { origin, cell, dims, padding_factor })
    }

    /// Cubic grid of `n³` cells with side `side` centered at `center`, padded by two.
    pub fn cube(center: Vector3<f64>, side: f64, n: usize) -> Result<Self> {
        let cell = side / n as f64;
        Self::new(center - Vector3::repeat(side / 2.0), cell, [n; 3], 2)
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell.powi(3)
    }

    pub fn padded_dims(&self) -> [usize; 3] {
        self.dims.map(|d| d * self.padding_factor)
    }

    pub fn extent(&self) -> Vector3<f64> {
        Vector3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64) * self.cell
    }

    pub fn upper(&self) -> Vector3<f64> {
        self.origin + self.extent()
    }

    pub fn center(&self) -> Vector3<f64> {
        self.origin + self.extent() / 2.0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn unindex(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    #[inline]
    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.origin + Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.cell
    }

    pub fn cell_center_of(&self, idx: usize) -> Vector3<f64> {
        let [i, j, k] = self.unindex(idx);
        self.cell_center(i, j, k)
    }

    /// True when `x` lies in the closed box covered by the grid.
    pub fn contains(&self, x: &Vector3<f64>) -> bool {
        let u = self.upper();
        (0..3).all(|d| x[d] >= self.origin[d] && x[d] <= u[d])
    }

    /// Radius of the ball, centered in the box, inside which padded convolutions are exact.
    pub fn exact_radius(&self) -> f64 {
        super::stokes::exact_ball_radius(self)
    }

    /// Same grid translated by a whole number of cells.
    pub fn shifted(&self, cells: [i64; 3]) -> Self {
        let mut g = *self;
        g.origin += Vector3::new(cells[0] as f64, cells[1] as f64, cells[2] as f64) * self.cell;
        g
    }

    pub fn same_shape(&self, other: &GridSpec) -> bool {
        self.dims == other.dims
            && self.padding_factor == other.padding_factor
            && (self.cell - other.cell).abs() <= 1e-12 * self.cell
            && (self.origin - other.origin).norm() <= 1e-9 * self.cell
    }

    /// Fractional cell coordinates of `x` relative to cell centers.
    #[inline]
    fn fractional(&self, x: &Vector3<f64>) -> [f64; 3] {
        let r = (x - self.origin) / self.cell;
        [r[0] - 0.5, r[1] - 0.5, r[2] - 0.5]
    }

    /// Trilinear stencil for `x`: eight (index, weight) pairs. Points beyond the outer
    /// cell centers use the boundary value.
    #[inline]
    pub fn stencil(&self, x: &Vector3<f64>) -> [(usize, f64); 8] {
        let f = self.fractional(x);
        let mut lo = [0usize; 3];
        let mut w = [0.0f64; 3];
        for d in 0..3 {
            let n = self.dims[d];
            if n == 1 {
                lo[d] = 0;
                w[d] = 0.0;
                continue;
            }
            let c = f[d].clamp(0.0, (n - 1) as f64);
            let i = (c.floor() as usize).min(n - 2);
            lo[d] = i;
            w[d] = c - i as f64;
        }
        let mut out = [(0usize, 0.0f64); 8];
        let mut m = 0;
        for dk in 0..2 {
            for dj in 0..2 {
                for di in 0..2 {
                    let ii = (lo[0] + di).min(self.dims[0] - 1);
                    let jj = (lo[1] + dj).min(self.dims[1] - 1);
                    let kk = (lo[2] + dk).min(self.dims[2] - 1);
                    let wx = if di == 1 { w[0] } else { 1.0 - w[0] };
                    let wy = if dj == 1 { w[1] } else { 1.0 - w[1] };
                    let wz = if dk == 1 { w[2] } else { 1.0 - w[2] };
                    out[m] = (self.index(ii, jj, kk), wx * wy * wz);
                    m += 1;
                }
            }
        }
        out
    }

    pub fn write_header(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "origin {:.17e} {:.17e} {:.17e}", self.origin.x, self.origin.y, self.origin.z)?;
        writeln!(w, "cell {:.17e}", self.cell)?;
        writeln!(w, "dims {} {} {}", self.dims[0], self.dims[1], self.dims[2])?;
        writeln!(w, "padding_factor {}", self.padding_factor)
    }

    pub fn read_header(r: impl BufRead) -> Result<(Self, Vec<(String, String)>)> {
        let mut origin = None;
        let mut cell = None;
        let mut dims = None;
        let mut pad = 2;
        let mut extra = Vec::new();
        for line in r.lines() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(key) = parts.next() else { continue };
            let rest: Vec<&str> = parts.collect();
            let nums = |n: usize| -> Result<Vec<f64>> {
                if rest.len() != n {
                    return Err(Error::Parse(format!("header line `{line}` expects {n} values")));
                }
                rest.iter()
                    .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("`{s}`: {e}"))))
                    .collect()
            };
            match key {
                "origin" => {
                    let v = nums(3)?;
                    origin = Some(Vector3::new(v[0], v[1], v[2]));
                }
                "cell" => cell = Some(nums(1)?[0]),
                "dims" => {
                    let v = nums(3)?;
                    dims = Some([v[0] as usize, v[1] as usize, v[2] as usize]);
                }
                "padding_factor" => pad = nums(1)?[0] as usize,
                _ => extra.push((key.to_string(), rest.join(" "))),
            }
        }
        let missing = |k: &str| Error::Parse(format!("header is missing `{k}`"));
        let grid = GridSpec::new(
            origin.ok_or_else(|| missing("origin"))?,
            cell.ok_or_else(|| missing("cell"))?,
            dims.ok_or_else(|| missing("dims"))?,
            pad,
        )?;
        Ok((grid, extra))
    }
}

/// A non-negative scalar density on a grid.
#[derive(Clone, Debug)]
pub struct DensityField {
    grid: GridSpec,
    values: Vec<f64>,
    total_mass: f64,
}

impl DensityField {
    /// Values below zero by less than 1e-12 are clipped; anything more negative is rejected.
    pub fn new(grid: GridSpec, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        for v in values.iter_mut() {
            if !v.is_finite() {
                return Err(Error::InvalidInput("density has non-finite values".into()));
            }
            if *v < 0.0 {
                if *v < -1e-12 {
                    return Err(Error::InvalidInput(format!("density value {v:e} is negative")));
                }
                *v = 0.0;
            }
        }
        let total_mass = values.iter().sum::<f64>() * grid.cell_volume();
        Ok(Self { grid, values, total_mass })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, values: vec![0.0; grid.len()], total_mass: 0.0 }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(&Vector3<f64>) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|idx| f(&grid.cell_center_of(idx))).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Rescaled copy with total mass one.
    pub fn normalized(&self) -> Result<Self> {
        if !(self.total_mass > 0.0) {
            return Err(Error::InvalidInput("cannot normalize a field without mass".into()));
        }
        let s = 1.0 / self.total_mass;
        Self::new(self.grid, self.values.iter().map(|v| v * s).collect())
    }

    pub fn interpolate(&self, x: &Vector3<f64>) -> f64 {
        self.grid.stencil(x).iter().map(|&(i, w)| w * self.values[i]).sum()
    }

    /// Mass-weighted centroid.
    pub fn centroid(&self) -> Vector3<f64> {
        let mut c = Vector3::zeros();
        let mut m = 0.0;
        for (idx, &v) in self.values.iter().enumerate() {
            if v > 0.0 {
                c += self.grid.cell_center_of(idx) * v;
                m += v;
            }
        }
        if m > 0.0 {
            c / m
        } else {
            self.grid.center()
        }
    }

    /// Fraction of the absolute mass lying farther than `r` from `center`.
    pub fn mass_fraction_outside(&self, center: &Vector3<f64>, r: f64) -> f64 {
        let mut out = 0.0;
        let mut total = 0.0;
        for (idx, &v) in self.values.iter().enumerate() {
            total += v.abs();
            if (self.grid.cell_center_of(idx) - center).norm() > r {
                out += v.abs();
            }
        }
        if total > 0.0 {
            out / total
        } else {
            0.0
        }
    }

    pub fn l1_distance(&self, other: &DensityField) -> Result<f64> {
        if !self.grid.same_shape(&other.grid) {
            return Err(Error::GridMismatch("L1 distance needs identical grids".into()));
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum::<f64>() * self.grid.cell_volume())
    }

    /// Raw little-endian blob plus a text sidecar holding the grid.
    pub fn write_raw(&self, blob: &Path) -> Result<()> {
        write_raw_blob(blob, &[&self.values])?;
        let mut header = std::fs::File::create(sidecar(blob))?;
        self.grid.write_header(&mut header)?;
        writeln!(header, "components 1")?;
        Ok(())
    }

    pub fn read_raw(blob: &Path) -> Result<Self> {
        let (grid, _) = GridSpec::read_header(std::io::BufReader::new(std::fs::File::open(sidecar(blob))?))?;
        let mut comps = read_raw_blob(blob, grid.len(), 1)?;
        Self::new(grid, comps.remove(0))
    }
}

/// A vector field on a grid, stored as three component arrays.
#[derive(Clone, Debug)]
pub struct VelocityField {
    grid: GridSpec,
    values: [Vec<f64>; 3],
    divergence_norm: f64,
}

impl VelocityField {
    pub fn new(grid: GridSpec, values: [Vec<f64>; 3], divergence_norm: f64) -> Result<Self> {
        if values.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::InvalidInput("component length does not match grid".into()));
        }
        Ok(Self { grid, values, divergence_norm })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        let n = grid.len();
        Self { grid, values: [vec![0.0; n], vec![0.0; n], vec![0.0; n]], divergence_norm: 0.0 }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn components(&self) -> &[Vec<f64>; 3] {
        &self.values
    }

    pub fn into_components(self) -> [Vec<f64>; 3] {
        self.values
    }

    /// Spectral divergence residual relative to the field's gradient magnitude.
    pub fn divergence_norm(&self) -> f64 {
        self.divergence_norm
    }

    #[inline]
    pub fn at(&self, idx: usize) -> Vector3<f64> {
        Vector3::new(self.values[0][idx], self.values[1][idx], self.values[2][idx])
    }

    pub fn max_norm(&self) -> f64 {
        (0..self.grid.len()).map(|i| self.at(i).norm()).fold(0.0, f64::max)
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().flat_map(|c| c.iter()).map(|v| v * v).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    /// Trilinear interpolation; `None` outside the grid box.
    pub fn interpolate(&self, x: &Vector3<f64>) -> Option<Vector3<f64>> {
        if !self.grid.contains(x) {
            return None;
        }
        Some(self.interpolate_clamped(x))
    }

    #[inline]
    pub fn interpolate_clamped(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let mut v = Vector3::zeros();
        for (i, w) in self.grid.stencil(x) {
            v.x += w * self.values[0][i];
            v.y += w * self.values[1][i];
            v.z += w * self.values[2][i];
        }
        v
    }

    /// Sum of two fields on the same grid.
    pub fn add(&self, other: &VelocityField) -> Result<Self> {
        if !self.grid.same_shape(&other.grid) {
            return Err(Error::GridMismatch("cannot add fields on different grids".into()));
        }
        let values = [0, 1, 2].map(|c| self.values[c].iter().zip(&other.values[c]).map(|(a, b)| a + b).collect());
        Ok(Self { grid: self.grid, values, divergence_norm: self.divergence_norm.max(other.divergence_norm) })
    }

    pub fn write_raw(&self, blob: &Path) -> Result<()> {
        write_raw_blob(blob, &[&self.values[0], &self.values[1], &self.values[2]])?;
        let mut header = std::fs::File::create(sidecar(blob))?;
        self.grid.write_header(&mut header)?;
        writeln!(header, "components 3")?;
        writeln!(header, "divergence_norm {:.17e}", self.divergence_norm)?;
        Ok(())
    }

    pub fn read_raw(blob: &Path) -> Result<Self> {
        let (grid, extra) = GridSpec::read_header(std::io::BufReader::new(std::fs::File::open(sidecar(blob))?))?;
        let div = extra
            .iter()
            .find(|(k, _)| k == "divergence_norm")
            .and_then(|(_, v)| v.parse().ok())
            .unwrap_or(0.0);
        let comps = read_raw_blob(blob, grid.len(), 3)?;
        let [a, b, c]: [Vec<f64>; 3] = comps.try_into().map_err(|_| Error::Parse("component count".into()))?;
        Self::new(grid, [a, b, c], div)
    }
}

/// Sidecar header path for a raw blob: `<blob>.hdr`.
pub fn sidecar(blob: &Path) -> std::path::PathBuf {
    let mut s = blob.as_os_str().to_owned();
    s.push(".hdr");
    s.into()
}

fn write_raw_blob(path: &Path, comps: &[&Vec<f64>]) -> Result<()> {
    let mut bytes = Vec::with_capacity(comps.iter().map(|c| c.len() * 8).sum());
    for c in comps {
        for v in c.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

fn read_raw_blob(path: &Path, n: usize, comps: usize) -> Result<Vec<Vec<f64>>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() != n * comps * 8 {
        return Err(Error::Parse(format!("blob has {} bytes, expected {}", bytes.len(), n * comps * 8)));
    }
    Ok(bytes
        .chunks_exact(n * 8)
        .map(|chunk| chunk.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect())
        .collect())
}
