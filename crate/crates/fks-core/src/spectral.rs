//! Pseudo-spectral operators on the periodic box.
//!
//! All differential and semigroup operators act diagonally in Fourier
//! space.  A real field on the `d`-dimensional box is stored spectrally in
//! Hermitian half-spectrum form: the last axis keeps only the modes
//! `0..=n/2` (the remaining half is determined by conjugate symmetry of
//! the transform of real data), the other axes keep all `n` modes in the
//! usual FFT ordering.  This halves memory and guarantees that inverse
//! transforms of real-multiplier operators are real to machine precision
//! by construction rather than by rounding.
//!
//! The fractional Laplacian of order `a` is the Fourier multiplier
//! `|k|^a`, the diffusion semigroup is `exp(-t |k|^a)`, and gradients are
//! the multipliers `i k_j` with the Nyquist mode zeroed (the Nyquist
//! frequency carries no sign information for odd derivatives, so any
//! nonzero choice would break conjugate symmetry).
//!
//! Wavenumbers follow the grid convention `k_j = pi m_j / L` for integer
//! modes `m_j in [-n/2, n/2)`, so that plane waves `exp(i k . x)` are
//! exactly periodic on `[-L, L)^d`.

use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};

use crate::error::{FksError, Result};
use crate::field::{Field, VectorField};
use crate::grid::Grid;

/// Global FFT plan cache.  `rustfft` planners memoize twiddle tables per
/// length, so routing every transform through one shared planner keeps
/// repeated solves cheap.
fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

fn plan_forward(n: usize) -> Arc<dyn Fft<f64>> {
    planner()
        .lock()
        .expect("FFT planner poisoned")
        .plan_fft_forward(n)
}

fn plan_inverse(n: usize) -> Arc<dyn Fft<f64>> {
    planner()
        .lock()
        .expect("FFT planner poisoned")
        .plan_fft_inverse(n)
}

/// Hermitian half-spectrum of a real field.
///
/// Storage is row-major with the (truncated) last axis fastest: the last
/// axis holds `n/2 + 1` complex entries, every other axis holds `n`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    grid: Grid,
    data: Vec<Complex64>,
}

/// Number of retained modes along the truncated last axis.
#[inline]
pub(crate) fn half_len(n: usize) -> usize {
    n / 2 + 1
}

/// Number of complex entries in the half-spectrum of a grid.
pub(crate) fn spectrum_len(grid: &Grid) -> usize {
    grid.n().pow(grid.dim() as u32 - 1) * half_len(grid.n())
}

impl Spectrum {
    /// All-zero spectrum on `grid`.
    pub fn zeros(grid: Grid) -> Self {
        Spectrum {
            grid,
            data: vec![Complex64::new(0.0, 0.0); spectrum_len(&grid)],
        }
    }

    /// Grid this spectrum lives on.
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub(crate) fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Multiply every stored mode by the matching entry of a real table.
    pub fn apply_table(&mut self, table: &[f64]) {
        assert_eq!(
            table.len(),
            self.data.len(),
            "multiplier table length mismatch"
        );
        for (c, &w) in self.data.iter_mut().zip(table) {
            *c *= w;
        }
    }

    /// Multiply by the gradient symbol `i k_axis`, zeroing the Nyquist
    /// mode along that axis.
    pub fn apply_gradient_axis(&mut self, axis: usize) {
        let table = axis_wavenumber_table(&self.grid, axis);
        for (c, &k) in self.data.iter_mut().zip(&table) {
            *c = Complex64::new(-c.im * k, c.re * k);
        }
    }

    /// Zero all modes with `max_j |m_j| > n/3` (the standard 2/3-rule
    /// guard against quadratic aliasing).
    pub fn dealias_two_thirds(&mut self) {
        let cutoff = (self.grid.n() / 3) as i64;
        let data = &mut self.data;
        foreach_mode(&self.grid, |idx, m| {
            let mmax = m.iter().map(|v| v.abs()).max().unwrap_or(0);
            if mmax > cutoff {
                data[idx] = Complex64::new(0.0, 0.0);
            }
        });
    }

    /// In-place `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Spectrum) {
        assert_eq!(
            self.data.len(),
            other.data.len(),
            "spectrum length mismatch"
        );
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    /// In-place scaling by a real constant.
    pub fn scale(&mut self, a: f64) {
        for x in &mut self.data {
            *x *= a;
        }
    }
}

/// Visit every stored mode.  The callback receives the flat storage index
/// and the signed integer mode vector (unused trailing axes are zero).
/// Along the last axis the stored modes are `0..=n/2`; other axes follow
/// FFT ordering with the Nyquist mode represented as `-n/2`.
pub(crate) fn foreach_mode(grid: &Grid, mut f: impl FnMut(usize, [i64; 3])) {
    let n = grid.n();
    let nh = half_len(n);
    match grid.dim() {
        1 => {
            for j in 0..nh {
                f(j, [j as i64, 0, 0]);
            }
        }
        2 => {
            let mut idx = 0;
            for i0 in 0..n {
                let m0 = grid.mode(i0);
                for j in 0..nh {
                    f(idx, [m0, j as i64, 0]);
                    idx += 1;
                }
            }
        }
        3 => {
            let mut idx = 0;
            for i0 in 0..n {
                let m0 = grid.mode(i0);
                for i1 in 0..n {
                    let m1 = grid.mode(i1);
                    for j in 0..nh {
                        f(idx, [m0, m1, j as i64]);
                        idx += 1;
                    }
                }
            }
        }
        _ => unreachable!("grid dimension is validated at construction"),
    }
}

/// Plancherel weight of a stored mode: interior last-axis modes stand for
/// a conjugate pair, the self-conjugate planes `m_last = 0` and
/// `m_last = n/2` appear once.
pub(crate) fn hermitian_weight(grid: &Grid, m_last: i64) -> f64 {
    let half = (grid.n() / 2) as i64;
    if m_last == 0 || m_last == half {
        1.0
    } else {
        2.0
    }
}

/// Build a real multiplier table from a function of the wavenumber
/// magnitude `|k|`.
pub fn radial_multiplier_table(grid: &Grid, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let scale = std::f64::consts::PI / grid.half_width();
    let mut table = vec![0.0; spectrum_len(grid)];
    foreach_mode(grid, |idx, m| {
        let m2: i64 = m.iter().map(|v| v * v).sum();
        table[idx] = f(scale * (m2 as f64).sqrt());
    });
    table
}

/// Signed wavenumber `k_axis` per stored mode, with the Nyquist mode of
/// that axis zeroed (used for odd-derivative multipliers).
pub(crate) fn axis_wavenumber_table(grid: &Grid, axis: usize) -> Vec<f64> {
    assert!(
        axis < grid.dim(),
        "axis {} out of range for d={}",
        axis,
        grid.dim()
    );
    let n = grid.n() as i64;
    let scale = std::f64::consts::PI / grid.half_width();
    let mut table = vec![0.0; spectrum_len(grid)];
    foreach_mode(grid, |idx, m| {
        let ma = m[axis];
        table[idx] = if ma.abs() * 2 == n {
            0.0
        } else {
            scale * ma as f64
        };
    });
    table
}

/// Transform one complex axis in place (used for all axes except the
/// truncated last one).  Lines along `axis` are gathered through the
/// stride, transformed, and scattered back.
fn transform_axis(data: &mut [Complex64], shape: &[usize], axis: usize, fft: &Arc<dyn Fft<f64>>) {
    let count = shape[axis];
    let stride: usize = shape[axis + 1..].iter().product();
    let block = count * stride;
    let mut line = vec![Complex64::new(0.0, 0.0); count];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut base = 0;
    while base < data.len() {
        for inner in 0..stride {
            for (t, slot) in line.iter_mut().enumerate() {
                *slot = data[base + inner + t * stride];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for (t, slot) in line.iter().enumerate() {
                data[base + inner + t * stride] = *slot;
            }
        }
        base += block;
    }
}

/// Forward transform of a real field into its Hermitian half-spectrum.
///
/// Unnormalized: the zero mode equals the plain sum of samples, so
/// `integrate(f) = h^d * spectrum[0].re`.
pub fn to_spectral(f: &Field) -> Spectrum {
    let grid = *f.grid();
    let n = grid.n();
    let nh = half_len(n);
    let d = grid.dim();
    let lines = n.pow(d as u32 - 1);

    let fft = plan_forward(n);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    let mut out = vec![Complex64::new(0.0, 0.0); lines * nh];

    // Last axis first: real data folds to n/2 + 1 stored modes per line.
    let samples = f.data();
    for li in 0..lines {
        for (t, slot) in line.iter_mut().enumerate() {
            *slot = Complex64::new(samples[li * n + t], 0.0);
        }
        fft.process_with_scratch(&mut line, &mut scratch);
        out[li * nh..(li + 1) * nh].copy_from_slice(&line[..nh]);
    }

    // Remaining axes are ordinary complex transforms.
    let shape: Vec<usize> = (0..d).map(|ax| if ax + 1 == d { nh } else { n }).collect();
    for axis in 0..d.saturating_sub(1) {
        transform_axis(&mut out, &shape, axis, &fft);
    }

    Spectrum { grid, data: out }
}

/// Inverse transform back to a real field.
///
/// Applies the `1/n^d` normalization so `from_spectral(to_spectral(f))`
/// reproduces `f` to rounding.
pub fn from_spectral(s: &Spectrum) -> Field {
    let grid = s.grid;
    let n = grid.n();
    let nh = half_len(n);
    let d = grid.dim();
    let lines = n.pow(d as u32 - 1);

    let ifft = plan_inverse(n);
    let mut scratch = vec![Complex64::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
    let mut work = s.data.clone();

    // Invert the full complex axes first; afterwards each last-axis line
    // is the 1-D spectrum of a real function and can be expanded by
    // conjugate symmetry alone.
    let shape: Vec<usize> = (0..d).map(|ax| if ax + 1 == d { nh } else { n }).collect();
    for axis in 0..d.saturating_sub(1) {
        transform_axis(&mut work, &shape, axis, &ifft);
    }

    let mut line = vec![Complex64::new(0.0, 0.0); n];
    let norm = 1.0 / (n as f64).powi(d as i32);
    let mut out = vec![0.0; grid.len()];
    for li in 0..lines {
        let src = &work[li * nh..(li + 1) * nh];
        line[..nh].copy_from_slice(src);
        for m in nh..n {
            line[m] = src[n - m].conj();
        }
        ifft.process_with_scratch(&mut line, &mut scratch);
        for (t, slot) in line.iter().enumerate() {
            out[li * n + t] = slot.re * norm;
        }
    }

    Field::from_vec(grid, out).expect("inverse transform produced invalid samples")
}

/// Fractional Laplacian `(-Delta)^{a/2}` via the multiplier `|k|^a`.
///
/// Requires `a > 0`; constants are annihilated exactly because the zero
/// mode is multiplied by zero.
pub fn fractional_laplacian(f: &Field, a: f64) -> Result<Field> {
    if !a.is_finite() || a <= 0.0 {
        return Err(FksError::InvalidParam(format!(
            "fractional Laplacian order must be positive and finite, got {a}"
        )));
    }
    let mut spec = to_spectral(f);
    let table = radial_multiplier_table(spec.grid(), |k| k.powf(a));
    spec.apply_table(&table);
    Ok(from_spectral(&spec))
}

/// Diffusion semigroup `exp(-t Lambda^a)` applied to `f`.
///
/// `t = 0` is the identity; the zero mode is untouched for every `t`, so
/// the lattice integral of `f` is conserved exactly.
pub fn semigroup_apply(f: &Field, a: f64, t: f64) -> Result<Field> {
    if !a.is_finite() || a <= 0.0 {
        return Err(FksError::InvalidParam(format!(
            "semigroup order must be positive and finite, got {a}"
        )));
    }
    if !t.is_finite() || t < 0.0 {
        return Err(FksError::InvalidParam(format!(
            "semigroup time must be nonnegative and finite, got {t}"
        )));
    }
    if t == 0.0 {
        return Ok(f.clone());
    }
    let mut spec = to_spectral(f);
    let table = radial_multiplier_table(spec.grid(), |k| (-t * k.powf(a)).exp());
    spec.apply_table(&table);
    Ok(from_spectral(&spec))
}

/// Gradient of the diffusion semigroup, `grad exp(-t Lambda^a) f`.
///
/// Requires `t > 0`: the composite symbol `i k_j exp(-t|k|^a)` is the
/// kernel-gradient convolution only for positive times.
pub fn grad_semigroup_apply(f: &Field, a: f64, t: f64) -> Result<VectorField> {
    if !a.is_finite() || a <= 0.0 {
        return Err(FksError::InvalidParam(format!(
            "semigroup order must be positive and finite, got {a}"
        )));
    }
    if !t.is_finite() || t <= 0.0 {
        return Err(FksError::InvalidParam(format!(
            "gradient-semigroup time must be strictly positive, got {t}"
        )));
    }
    let spec = to_spectral(f);
    let table = radial_multiplier_table(spec.grid(), |k| (-t * k.powf(a)).exp());
    let mut comps = Vec::with_capacity(f.grid().dim());
    for axis in 0..f.grid().dim() {
        let mut s = spec.clone();
        s.apply_table(&table);
        s.apply_gradient_axis(axis);
        comps.push(from_spectral(&s));
    }
    VectorField::from_components(comps)
}

/// Spectral gradient of a field.
pub fn gradient(f: &Field) -> VectorField {
    let spec = to_spectral(f);
    let comps: Vec<Field> = (0..f.grid().dim())
        .map(|axis| {
            let mut s = spec.clone();
            s.apply_gradient_axis(axis);
            from_spectral(&s)
        })
        .collect();
    VectorField::from_components(comps).expect("gradient components share the grid")
}

/// Spectral divergence of a vector field.
///
/// Each component is multiplied by `i k_j` and the results are summed, so
/// the output has exactly zero lattice mean: discrete divergences are
/// conservative by construction.
pub fn divergence(v: &VectorField) -> Field {
    let grid = *v.grid();
    let mut acc = Spectrum::zeros(grid);
    for axis in 0..grid.dim() {
        let mut s = to_spectral(v.component(axis));
        s.apply_gradient_axis(axis);
        acc.axpy(1.0, &s);
    }
    from_spectral(&acc)
}

/// Remove aliased modes of `f` with the 2/3 rule.
pub fn dealias(f: &Field) -> Field {
    let mut spec = to_spectral(f);
    spec.dealias_two_thirds();
    from_spectral(&spec)
}

/// Mixed partial derivative `prod_j (d/dx_j)^{e_j} f` of even total
/// order, computed spectrally.
///
/// Even total order makes the multiplier real, so the result is a real
/// field; odd total orders are rejected (use [`gradient`] for first
/// derivatives).  Axes with odd individual exponents have their Nyquist
/// mode zeroed, consistent with the gradient convention.
pub fn derivative_monomial(f: &Field, exponents: &[usize]) -> Result<Field> {
    let grid = *f.grid();
    if exponents.len() != grid.dim() {
        return Err(FksError::GridMismatch(format!(
            "derivative exponents have length {}, grid dimension is {}",
            exponents.len(),
            grid.dim()
        )));
    }
    let total: usize = exponents.iter().sum();
    if total == 0 || total % 2 != 0 {
        return Err(FksError::InvalidParam(format!(
            "derivative_monomial needs a positive even total order, got {total}"
        )));
    }
    // i^total = +-1 for even totals.
    let sign = if total % 4 == 0 { 1.0 } else { -1.0 };
    let n = grid.n() as i64;
    let scale = std::f64::consts::PI / grid.half_width();
    let mut spec = to_spectral(f);
    let data = spec.data_mut();
    foreach_mode(&grid, |idx, m| {
        let mut w = sign;
        for (axis, &e) in exponents.iter().enumerate() {
            if e == 0 {
                continue;
            }
            let ma = m[axis];
            if e % 2 == 1 && ma.abs() * 2 == n {
                w = 0.0;
                break;
            }
            w *= (scale * ma as f64).powi(e as i32);
        }
        data[idx] *= w;
    });
    Ok(from_spectral(&spec))
}

/// Band-limited random field with unit sup norm.
///
/// White noise is projected onto the modes `max_j |m_j| <= cutoff` and
/// rescaled so `max |u| = 1`.  Deterministic for a given RNG state, which
/// makes seeded diagnostics reproducible across runs and platforms.
pub fn smooth_random_field<R: Rng>(grid: Grid, cutoff: usize, rng: &mut R) -> Field {
    let noise = Field::from_fn(grid, |_| rng.gen::<f64>() * 2.0 - 1.0);
    let mut spec = to_spectral(&noise);
    let keep = cutoff as i64;
    let data = spec.data_mut();
    foreach_mode(&grid, |idx, m| {
        if m.iter().map(|v| v.abs()).max().unwrap_or(0) > keep {
            data[idx] = Complex64::new(0.0, 0.0);
        }
    });
    let mut field = from_spectral(&spec);
    let sup = field.data().iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    if sup > 0.0 {
        field.scale(1.0 / sup);
    }
    field
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{integrate, lp_norm};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid(d: usize, n: usize, l: f64) -> Grid {
        Grid::new(d, n, l).unwrap()
    }

    fn random_field(g: Grid, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Field::from_fn(g, |_| rand::Rng::gen::<f64>(&mut rng) * 2.0 - 1.0)
    }

    #[test]
    fn roundtrip_is_identity_in_all_dimensions() {
        for (d, n) in [(1, 64), (2, 32), (3, 16)] {
            let g = grid(d, n, 3.0);
            let f = random_field(g, 7 + d as u64);
            let back = from_spectral(&to_spectral(&f));
            let err = f
                .data()
                .iter()
                .zip(back.data())
                .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
            assert!(err < 1e-12, "d={d} roundtrip error {err}");
        }
    }

    #[test]
    fn plane_waves_are_eigenfunctions() {
        let g = grid(1, 128, PI);
        let k = 3.0; // mode 3 on L = pi has wavenumber exactly 3
        let f = Field::from_fn(g, |x| (k * x[0]).sin());
        for a in [1.0, 1.5, 2.0] {
            let lap = fractional_laplacian(&f, a).unwrap();
            let expect = k.powf(a);
            let err = lap
                .data()
                .iter()
                .zip(f.data())
                .fold(0.0f64, |acc, (l, v)| acc.max((l - expect * v).abs()));
            assert!(err < 1e-10, "a={a} eigenvalue error {err}");
        }
    }

    #[test]
    fn eigenfunction_in_two_dimensions() {
        let g = grid(2, 32, PI);
        let f = Field::from_fn(g, |x| (2.0 * x[0]).sin() * (3.0 * x[1]).cos());
        let lap = fractional_laplacian(&f, 1.5).unwrap();
        let expect = (4.0f64 + 9.0).sqrt().powf(1.5);
        let err = lap
            .data()
            .iter()
            .zip(f.data())
            .fold(0.0f64, |acc, (l, v)| acc.max((l - expect * v).abs()));
        assert!(err < 1e-10, "eigenvalue error {err}");
    }

    #[test]
    fn laplacian_rejects_nonpositive_order() {
        let g = grid(1, 16, 1.0);
        let f = Field::zeros(g);
        assert!(fractional_laplacian(&f, 0.0).is_err());
        assert!(fractional_laplacian(&f, -1.0).is_err());
    }

    #[test]
    fn laplacian_annihilates_constants() {
        let g = grid(2, 16, 2.0);
        let f = Field::from_fn(g, |_| 4.25);
        let lap = fractional_laplacian(&f, 1.3).unwrap();
        let sup = lap.data().iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
        assert!(sup < 1e-12, "constant not annihilated: {sup}");
    }

    #[test]
    fn semigroup_composition_property() {
        let g = grid(2, 32, 4.0);
        let f = random_field(g, 11);
        let a = 1.4;
        let one = semigroup_apply(&semigroup_apply(&f, a, 0.3).unwrap(), a, 0.5).unwrap();
        let two = semigroup_apply(&f, a, 0.8).unwrap();
        let err = one
            .data()
            .iter()
            .zip(two.data())
            .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));
        assert!(err < 1e-12, "composition error {err}");
    }

    #[test]
    fn semigroup_time_zero_is_identity() {
        let g = grid(1, 32, 1.0);
        let f = random_field(g, 3);
        let s = semigroup_apply(&f, 1.7, 0.0).unwrap();
        assert_eq!(f.data(), s.data());
    }

    #[test]
    fn semigroup_rejects_negative_time() {
        let g = grid(1, 16, 1.0);
        let f = Field::zeros(g);
        assert!(semigroup_apply(&f, 1.5, -0.1).is_err());
    }

    #[test]
    fn gaussian_widens_under_classical_heat_flow() {
        // For a = 2 the semigroup kernel is the heat kernel; evolving a
        // Gaussian of squared width parameter s0 for time t yields the
        // Gaussian of parameter s0 + t with amplitude ratio
        // (s0 / (s0 + t))^{d/2}.
        let g = grid(1, 256, 12.0);
        let s0 = 0.5;
        let t = 1.0;
        let f = Field::gaussian(g, 1.0, &[0.0], s0);
        let evolved = semigroup_apply(&f, 2.0, t).unwrap();
        let amp = (s0 / (s0 + t)).sqrt();
        let expect = Field::gaussian(g, amp, &[0.0], s0 + t);
        let err = evolved
            .data()
            .iter()
            .zip(expect.data())
            .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));
        assert!(err < 1e-9, "heat kernel mismatch {err}");
    }

    #[test]
    fn gradient_of_plane_wave_matches_analytic() {
        let g = grid(2, 64, PI);
        let f = Field::from_fn(g, |x| (3.0 * x[0]).sin() + (2.0 * x[1]).sin());
        let grad = gradient(&f);
        let gx = Field::from_fn(g, |x| 3.0 * (3.0 * x[0]).cos());
        let gy = Field::from_fn(g, |x| 2.0 * (2.0 * x[1]).cos());
        for (got, want) in [(grad.component(0), &gx), (grad.component(1), &gy)] {
            let err = got
                .data()
                .iter()
                .zip(want.data())
                .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));
            assert!(err < 1e-10, "gradient error {err}");
        }
    }

    #[test]
    fn gradient_components_have_zero_mean() {
        let g = grid(2, 32, 2.0);
        let f = random_field(g, 19);
        let grad = gradient(&f);
        for axis in 0..2 {
            let mean = integrate(grad.component(axis));
            assert!(mean.abs() < 1e-12, "axis {axis} mean {mean}");
        }
    }

    #[test]
    fn divergence_of_gradient_is_negative_laplacian() {
        let g = grid(2, 64, 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        // Band-limited input keeps Nyquist conventions out of the test.
        let f = smooth_random_field(g, 12, &mut rng);
        let div_grad = divergence(&gradient(&f));
        let lap = fractional_laplacian(&f, 2.0).unwrap();
        let err = div_grad
            .data()
            .iter()
            .zip(lap.data())
            .fold(0.0f64, |acc, (x, y)| acc.max((x + y).abs()));
        assert!(err < 1e-10, "div grad vs -Laplacian error {err}");
    }

    #[test]
    fn grad_semigroup_matches_analytic_plane_wave() {
        let g = grid(1, 128, PI);
        let k = 4.0;
        let a = 1.6;
        let t = 0.35;
        let f = Field::from_fn(g, |x| (k * x[0]).sin());
        let grad = grad_semigroup_apply(&f, a, t).unwrap();
        let factor = k * (-t * k.powf(a)).exp();
        let expect = Field::from_fn(g, |x| factor * (k * x[0]).cos());
        let err = grad
            .component(0)
            .data()
            .iter()
            .zip(expect.data())
            .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));
        assert!(err < 1e-10, "grad-semigroup error {err}");
    }

    #[test]
    fn grad_semigroup_rejects_nonpositive_time() {
        let g = grid(1, 16, 1.0);
        let f = Field::zeros(g);
        assert!(grad_semigroup_apply(&f, 1.5, 0.0).is_err());
        assert!(grad_semigroup_apply(&f, 1.5, -1.0).is_err());
    }

    #[test]
    fn grad_semigroup_l1_norm_scales_like_minus_one_over_alpha() {
        // ||grad K_t||_{L^1} ~ t^{-1/a}: evolve a discrete delta and fit
        // the log-log slope over a factor-of-four span of times.  The box
        // is large relative to the kernel width so periodic images do not
        // pollute the absolute-value integral.
        let g = grid(1, 1024, 32.0);
        let a = 1.5;
        let h = g.h();
        let mut delta = Field::zeros(g);
        delta.data_mut()[g.n() / 2] = 1.0 / h; // lattice delta at the origin
        let times = [0.5, 1.0, 2.0];
        let norms: Vec<f64> = times
            .iter()
            .map(|&t| {
                let grad = grad_semigroup_apply(&delta, a, t).unwrap();
                lp_norm(&grad.magnitude(), 1.0).unwrap()
            })
            .collect();
        let slope = (norms[2].ln() - norms[0].ln()) / (times[2].ln() - times[0].ln());
        let expect = -1.0 / a;
        assert!(
            (slope - expect).abs() < 0.02 * expect.abs(),
            "slope {slope} vs {expect}"
        );
    }

    #[test]
    fn dealias_removes_high_modes_and_keeps_low_ones() {
        let g = grid(1, 32, PI);
        // Mode 5 is kept (5 <= 10), mode 14 is aliased away (14 > 10).
        let f = Field::from_fn(g, |x| (5.0 * x[0]).cos() + (14.0 * x[0]).cos());
        let filtered = dealias(&f);
        let expect = Field::from_fn(g, |x| (5.0 * x[0]).cos());
        let err = filtered
            .data()
            .iter()
            .zip(expect.data())
            .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));
        assert!(err < 1e-12, "dealias error {err}");
    }

    #[test]
    fn mixed_second_derivative_matches_analytic() {
        let g = grid(2, 64, PI);
        let f = Field::from_fn(g, |x| (3.0 * x[0]).sin() * (2.0 * x[1]).sin());
        let dxy = derivative_monomial(&f, &[1, 1]).unwrap();
        let expect = Field::from_fn(g, |x| 6.0 * (3.0 * x[0]).cos() * (2.0 * x[1]).cos());
        let err = dxy
            .data()
            .iter()
            .zip(expect.data())
            .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));
        assert!(err < 1e-10, "mixed derivative error {err}");
    }

    #[test]
    fn derivative_monomial_rejects_odd_total_order() {
        let g = grid(2, 16, 1.0);
        let f = Field::zeros(g);
        assert!(derivative_monomial(&f, &[1, 0]).is_err());
        assert!(derivative_monomial(&f, &[1, 2]).is_err());
        assert!(derivative_monomial(&f, &[0, 0]).is_err());
        assert!(derivative_monomial(&f, &[1]).is_err());
    }

    #[test]
    fn smooth_random_field_is_band_limited_and_normalized() {
        let g = grid(2, 64, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let f = smooth_random_field(g, 5, &mut rng);
        let sup = f.data().iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
        assert!((sup - 1.0).abs() < 1e-12, "sup norm {sup}");
        let spec = to_spectral(&f);
        let mut bad = 0.0f64;
        let data = spec.data().to_vec();
        foreach_mode(&g, |idx, m| {
            if m.iter().map(|v| v.abs()).max().unwrap() > 5 {
                bad = bad.max(data[idx].norm());
            }
        });
        assert!(bad < 1e-10, "high-mode leakage {bad}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// The semigroup conserves the lattice integral exactly (the zero
        /// mode is fixed) and never increases the L^2 norm (every
        /// multiplier is in (0, 1]).
        #[test]
        fn semigroup_conserves_mean_and_contracts_l2(
            seed in 0u64..1_000,
            a in 0.5f64..2.5,
            t in 0.0f64..2.0,
        ) {
            let g = grid(2, 16, 2.0);
            let f = random_field(g, seed);
            let s = semigroup_apply(&f, a, t).unwrap();
            let drift = (integrate(&s) - integrate(&f)).abs();
            prop_assert!(drift < 1e-12 * (1.0 + integrate(&f).abs()));
            let before = lp_norm(&f, 2.0).unwrap();
            let after = lp_norm(&s, 2.0).unwrap();
            prop_assert!(after <= before * (1.0 + 1e-12));
        }
    }
}
