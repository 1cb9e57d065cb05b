//! Scalar and vector lattice fields, lattice quadrature, snapshot I/O.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FksError, Result};
use crate::grid::Grid;

/// Real scalar field sampled on a [`Grid`], row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    data: Vec<f64>,
}

impl Field {
    /// Zero field on `grid`.
    pub fn zeros(grid: Grid) -> Self {
        Self {
            data: vec![0.0; grid.len()],
            grid,
        }
    }

    /// Build a field by evaluating `f` at every lattice point.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let mut data = vec![0.0; grid.len()];
        let d = grid.dim();
        let mut idx = vec![0usize; d];
        let mut x = vec![0.0f64; d];
        for (flat, v) in data.iter_mut().enumerate() {
            grid.unravel(flat, &mut idx);
            for (a, &i) in idx.iter().enumerate() {
                x[a] = grid.coord(i);
            }
            *v = f(&x);
        }
        Self { grid, data }
    }

    /// Wrap raw values; length must equal `grid.len()` and entries be finite.
    pub fn from_vec(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(FksError::InvalidParam(format!(
                "field data length {} does not match grid size {}",
                data.len(),
                grid.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(FksError::InvalidParam(
                "field entries must all be finite".into(),
            ));
        }
        Ok(Self { grid, data })
    }

    /// Isotropic Gaussian `amp * exp(-|x - center|^2 / (4 s))`, the
    /// heat-kernel shape with "time" parameter `s > 0`.
    pub fn gaussian(grid: Grid, amp: f64, center: &[f64], s: f64) -> Self {
        Self::from_fn(grid, |x| {
            let r2: f64 = x
                .iter()
                .zip(center.iter())
                .map(|(xi, ci)| (xi - ci) * (xi - ci))
                .sum();
            amp * (-r2 / (4.0 * s)).exp()
        })
    }

    /// Grid the field lives on.
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Immutable access to samples.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to samples.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `true` when every sample is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Apply `f` to every sample in place.
    pub fn map_inplace(&mut self, f: impl Fn(f64) -> f64) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    /// `self += scale * other`.
    pub fn axpy(&mut self, scale: f64, other: &Field) -> Result<()> {
        self.check_same_grid(other)?;
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += scale * b;
        }
        Ok(())
    }

    /// Scale every sample.
    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Pointwise product, producing a new field.
    pub fn pointwise_mul(&self, other: &Field) -> Result<Field> {
        self.check_same_grid(other)?;
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .collect();
        Ok(Field {
            grid: self.grid,
            data,
        })
    }

    /// Positive part `max(f, 0)`.
    pub fn positive_part(&self) -> Field {
        let mut out = self.clone();
        out.map_inplace(|v| v.max(0.0));
        out
    }

    /// Negative part `max(-f, 0)`, so that `f = f_+ - f_-` pointwise.
    pub fn negative_part(&self) -> Field {
        let mut out = self.clone();
        out.map_inplace(|v| (-v).max(0.0));
        out
    }

    /// Minimum sample value.
    pub fn min_value(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Maximum sample value.
    pub fn max_value(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(FksError::GridMismatch(
                "fields live on different grids".into(),
            ));
        }
        Ok(())
    }
}

/// Lattice `L^p` norm `(h^d sum |f_i|^p)^(1/p)`; `p = infinity` returns the
/// lattice maximum of `|f|`.
///
/// # Errors
///
/// Rejects `p < 1`.
pub fn lp_norm(f: &Field, p: f64) -> Result<f64> {
    if p.is_infinite() && p > 0.0 {
        return Ok(f.data().iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    if !(p >= 1.0) {
        return Err(FksError::InvalidParam(format!(
            "lp_norm requires p >= 1 or p = infinity, got {p}"
        )));
    }
    let hd = f.grid().cell_volume();
    if p == 1.0 {
        return Ok(hd * f.data().iter().map(|v| v.abs()).sum::<f64>());
    }
    if p == 2.0 {
        return Ok((hd * f.data().iter().map(|v| v * v).sum::<f64>()).sqrt());
    }
    let s: f64 = f.data().iter().map(|v| v.abs().powf(p)).sum();
    Ok((hd * s).powf(1.0 / p))
}

/// Lattice integral `h^d sum f_i`.
pub fn integrate(f: &Field) -> f64 {
    f.grid().cell_volume() * f.data().iter().sum::<f64>()
}

/// Vector field: `d` scalar components sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: Vec<Field>,
}

impl VectorField {
    /// Zero vector field.
    pub fn zeros(grid: Grid) -> Self {
        let d = grid.dim();
        Self {
            components: (0..d).map(|_| Field::zeros(grid)).collect(),
        }
    }

    /// Assemble from components; all must share one grid and there must be
    /// exactly `grid.dim()` of them.
    pub fn from_components(components: Vec<Field>) -> Result<Self> {
        if components.is_empty() {
            return Err(FksError::InvalidParam(
                "vector field needs at least one component".into(),
            ));
        }
        let grid = *components[0].grid();
        if components.len() != grid.dim() {
            return Err(FksError::InvalidParam(format!(
                "vector field has {} components but the grid dimension is {}",
                components.len(),
                grid.dim()
            )));
        }
        if components.iter().any(|c| c.grid() != &grid) {
            return Err(FksError::GridMismatch(
                "vector field components live on different grids".into(),
            ));
        }
        Ok(Self { components })
    }

    /// Grid shared by the components.
    pub fn grid(&self) -> &Grid {
        self.components[0].grid()
    }

    /// Component along `axis`.
    pub fn component(&self, axis: usize) -> &Field {
        &self.components[axis]
    }

    /// Mutable component along `axis`.
    pub fn component_mut(&mut self, axis: usize) -> &mut Field {
        &mut self.components[axis]
    }

    /// All components.
    pub fn components(&self) -> &[Field] {
        &self.components
    }

    /// `self += scale * other`, componentwise.
    pub fn axpy(&mut self, scale: f64, other: &VectorField) -> Result<()> {
        for (a, b) in self.components.iter_mut().zip(other.components.iter()) {
            a.axpy(scale, b)?;
        }
        Ok(())
    }

    /// Scale all components.
    pub fn scale(&mut self, s: f64) {
        for c in &mut self.components {
            c.scale(s);
        }
    }

    /// Pointwise Euclidean magnitude `|v(x)|`.
    pub fn magnitude(&self) -> Field {
        let mut out = Field::zeros(*self.grid());
        for c in &self.components {
            for (o, v) in out.data_mut().iter_mut().zip(c.data().iter()) {
                *o += v * v;
            }
        }
        out.map_inplace(f64::sqrt);
        out
    }
}

/// Sidecar header stored next to every raw snapshot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotHeader {
    /// Spatial dimension.
    pub d: usize,
    /// Samples per axis.
    pub n: usize,
    /// Box half-width.
    #[serde(rename = "L")]
    pub l: f64,
    /// Simulation time the snapshot belongs to.
    pub t: f64,
    /// Human-readable quantity name (for example `rho` or `grad_c_0`).
    pub name: String,
}

/// Write `field` as raw little-endian f64 samples (row-major) to
/// `<stem>.f64`, with the header [`SnapshotHeader`] at `<stem>.json`.
pub fn write_snapshot(field: &Field, stem: &Path, t: f64, name: &str) -> Result<()> {
    let header = SnapshotHeader {
        d: field.grid().dim(),
        n: field.grid().n(),
        l: field.grid().half_width(),
        t,
        name: name.to_string(),
    };
    let mut raw = Vec::with_capacity(field.data().len() * 8);
    for v in field.data() {
        raw.extend_from_slice(&v.to_le_bytes());
    }
    let bin_path = stem.with_extension("f64");
    let json_path = stem.with_extension("json");
    std::fs::File::create(&bin_path)?.write_all(&raw)?;
    let header_text = serde_json::to_string_pretty(&header)
        .map_err(|e| FksError::Format(format!("snapshot header serialization: {e}")))?;
    std::fs::write(&json_path, header_text)?;
    Ok(())
}

/// Read a snapshot previously written by [`write_snapshot`].
///
/// Returns the field together with its header (which carries `t` and `name`).
pub fn read_snapshot(stem: &Path) -> Result<(Field, SnapshotHeader)> {
    let json_path = stem.with_extension("json");
    let bin_path = stem.with_extension("f64");
    let header: SnapshotHeader = serde_json::from_str(&std::fs::read_to_string(&json_path)?)
        .map_err(|e| FksError::Format(format!("snapshot header parse: {e}")))?;
    let grid = Grid::new(header.d, header.n, header.l)?;
    let mut raw = Vec::new();
    std::fs::File::open(&bin_path)?.read_to_end(&mut raw)?;
    if raw.len() != grid.len() * 8 {
        return Err(FksError::Format(format!(
            "snapshot payload has {} bytes, expected {}",
            raw.len(),
            grid.len() * 8
        )));
    }
    let data: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let field = Field::from_vec(grid, data)?;
    Ok((field, header))
}
