//! Fast evaluation of the force field by polynomial separation and FFT.
//!
//! The pointwise force `r(a, b)` is replaced by a least-squares bivariate
//! polynomial `p(a, b) = Σ_{0≤l≤j≤n} p_{j-l,l} a^{j-l} b^l`, rearranged as
//! `Σ_j f_j(a) b^j`. Then
//!
//! ```text
//! R(x) ≈ Σ_j f_j(I(x)) · (w ⊛ J^j)(x)
//! ```
//!
//! where `J` is the mirror extension and `⊛` is circular convolution on the
//! `2W × 2H` torus, so one field costs `n + 1` FFT convolutions. Because the
//! kernel is nonnegative with unit mass, `|R_fast - R| ≤ max |p - r|`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::contrast::{r_pointwise, uniform_grid, ContrastVariant, Regularizer};
use crate::error::{Error, Result};
use crate::image::{mirror_index, ChannelPlane, Field};
use crate::kernel::{build_kernel, KernelGrid, KernelSpec};
use crate::solver::{r_field_exact, RField};

/// Sample counts per axis for fitting and for measuring the fit error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FitGrid {
    pub fit: usize,
    pub verify: usize,
}

impl Default for FitGrid {
    fn default() -> Self {
        FitGrid {
            fit: 101,
            verify: 257,
        }
    }
}

/// Singular-value ratio beyond which the design matrix is treated as rank
/// deficient.
const MAX_CONDITION: f64 = 1e12;

/// Bound on the imaginary residue of inverse transforms of real data.
const IMAG_TOLERANCE: f64 = 1e-9;

/// A fitted polynomial surrogate of a force function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolySeparation {
    degree: usize,
    /// `p_{j-l,l}` at index `j(j+1)/2 + l`.
    coeffs: Vec<f64>,
    /// `f[j][i]` is the coefficient of `a^i` in `f_j`.
    f: Vec<Vec<f64>>,
    max_error: f64,
    rms_error: f64,
    condition: f64,
}

#[inline]
fn tri(j: usize, l: usize) -> usize {
    j * (j + 1) / 2 + l
}

fn binomial_row(n: usize) -> Vec<f64> {
    let mut row = vec![1.0];
    for k in 1..=n {
        let prev = row[k - 1];
        row.push(prev * (n + 1 - k) as f64 / k as f64);
    }
    row
}

#[inline]
fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

impl PolySeparation {
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of raw coefficients, `(n+1)(n+2)/2`.
    pub fn coefficient_count(&self) -> usize {
        self.coeffs.len()
    }

    /// `p_{j-l,l}`, the coefficient of `a^{j-l} b^l`.
    pub fn coefficient(&self, j: usize, l: usize) -> f64 {
        assert!(l <= j && j <= self.degree, "no coefficient ({j}, {l})");
        self.coeffs[tri(j, l)]
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// `f_j(a)`, the factor multiplying `b^j`.
    #[inline]
    pub fn f_j(&self, j: usize, a: f64) -> f64 {
        horner(&self.f[j], a)
    }

    /// Evaluates the rearranged form `Σ_j f_j(a) b^j`.
    pub fn eval(&self, a: f64, b: f64) -> f64 {
        (0..=self.degree)
            .rev()
            .fold(0.0, |acc, j| acc * b + self.f_j(j, a))
    }

    /// Evaluates the raw double sum over `p_{j-l,l}`.
    pub fn eval_raw(&self, a: f64, b: f64) -> f64 {
        let mut total = 0.0;
        for j in 0..=self.degree {
            for l in 0..=j {
                total += self.coeffs[tri(j, l)] * a.powi((j - l) as i32) * b.powi(l as i32);
            }
        }
        total
    }

    /// Largest `|p - r|` on the verification grid.
    pub fn max_error(&self) -> f64 {
        self.max_error
    }

    pub fn rms_error(&self) -> f64 {
        self.rms_error
    }

    /// Condition number of the fitting design matrix.
    pub fn condition(&self) -> f64 {
        self.condition
    }
}

/// Least-squares fit of `target` on `grid.fit²` samples of `[ρ, 1]²`.
///
/// The fit runs in centered coordinates `(a - ½, b - ½)` and is solved by
/// SVD; the result is mapped back to raw monomials.
pub fn fit_target(
    target: impl Fn(f64, f64) -> f64,
    degree: usize,
    grid: FitGrid,
) -> Result<PolySeparation> {
    if degree == 0 {
        return Err(Error::param("poly_degree", "must be at least 1"));
    }
    let count = tri(degree + 1, 0);
    if grid.fit < 2 || grid.fit * grid.fit < count {
        return Err(Error::param(
            "fit grid",
            format!("{} samples per axis cannot determine {count} coefficients", grid.fit),
        ));
    }
    if grid.verify < 2 {
        return Err(Error::param("verify grid", "needs at least 2 samples per axis"));
    }

    let samples: Vec<f64> = uniform_grid(grid.fit).collect();
    let rows = samples.len() * samples.len();
    let mut design = DMatrix::<f64>::zeros(rows, count);
    let mut rhs = DVector::<f64>::zeros(rows);
    let mut pu = vec![0.0; degree + 1];
    let mut pv = vec![0.0; degree + 1];
    for (ia, &a) in samples.iter().enumerate() {
        powers(a - 0.5, &mut pu);
        for (ib, &b) in samples.iter().enumerate() {
            powers(b - 0.5, &mut pv);
            let row = ia * samples.len() + ib;
            for j in 0..=degree {
                for l in 0..=j {
                    design[(row, tri(j, l))] = pu[j - l] * pv[l];
                }
            }
            rhs[row] = target(a, b);
        }
    }

    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition.is_nan() || condition > MAX_CONDITION {
        return Err(Error::RankDeficient { condition });
    }
    let centered = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::param("fit", e.to_string()))?;

    // (a - ½)^i = Σ_k C(i,k) a^k (-½)^{i-k}
    let shift: Vec<Vec<f64>> = (0..=degree)
        .map(|i| {
            binomial_row(i)
                .iter()
                .enumerate()
                .map(|(k, c)| c * (-0.5f64).powi((i - k) as i32))
                .collect()
        })
        .collect();
    let mut raw = vec![vec![0.0; degree + 1]; degree + 1]; // raw[i][l]: a^i b^l
    for j in 0..=degree {
        for l in 0..=j {
            let q = centered[tri(j, l)];
            let i = j - l;
            for (k, sa) in shift[i].iter().enumerate() {
                for (m, sb) in shift[l].iter().enumerate() {
                    raw[k][m] += q * sa * sb;
                }
            }
        }
    }
    let mut coeffs = vec![0.0; count];
    for j in 0..=degree {
        for l in 0..=j {
            coeffs[tri(j, l)] = raw[j - l][l];
        }
    }
    let f = (0..=degree)
        .map(|j| (0..=degree - j).map(|i| raw[i][j]).collect())
        .collect();

    let mut sep = PolySeparation {
        degree,
        coeffs,
        f,
        max_error: 0.0,
        rms_error: 0.0,
        condition,
    };
    let (mut max, mut sq, mut n) = (0.0f64, 0.0, 0usize);
    for a in uniform_grid(grid.verify) {
        for b in uniform_grid(grid.verify) {
            let e = (sep.eval(a, b) - target(a, b)).abs();
            max = max.max(e);
            sq += e * e;
            n += 1;
        }
    }
    sep.max_error = max;
    sep.rms_error = (sq / n as f64).sqrt();
    Ok(sep)
}

fn powers(x: f64, out: &mut [f64]) {
    let mut p = 1.0;
    for o in out {
        *o = p;
        p *= x;
    }
}

/// Fits the force function of `variant` under `reg`.
pub fn fit_separation(
    variant: &ContrastVariant,
    reg: &Regularizer,
    degree: usize,
    grid: FitGrid,
) -> Result<PolySeparation> {
    fit_target(|a, b| r_pointwise(a, b, variant, reg), degree, grid)
}

type FitKey = (String, u64, String, u64, usize, FitGrid);

/// [`fit_separation`], memoized per process.
pub fn cached_separation(
    variant: &ContrastVariant,
    reg: &Regularizer,
    degree: usize,
    grid: FitGrid,
) -> Result<Arc<PolySeparation>> {
    static CACHE: OnceLock<Mutex<HashMap<FitKey, Arc<PolySeparation>>>> = OnceLock::new();
    let key = (
        variant.kind.to_string(),
        variant.gamma.to_bits(),
        format!("{:?}", reg.family()),
        reg.epsilon().to_bits(),
        degree,
        grid,
    );
    let cache = CACHE.get_or_init(Default::default);
    if let Some(sep) = cache.lock().expect("fit cache poisoned").get(&key) {
        return Ok(Arc::clone(sep));
    }
    let sep = Arc::new(fit_separation(variant, reg, degree, grid)?);
    cache
        .lock()
        .expect("fit cache poisoned")
        .insert(key, Arc::clone(&sep));
    Ok(sep)
}

/// Circular convolution with a fixed kernel on the `2W × 2H` torus.
pub struct TorusConvolver {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    /// Real kernel spectrum in column-major (transposed) layout.
    spectrum: Vec<f64>,
    total: f64,
}

impl std::fmt::Debug for TorusConvolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TorusConvolver")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

fn transpose(src: &[Complex<f64>], cols: usize, rows: usize) -> Vec<Complex<f64>> {
    let mut dst = vec![Complex::default(); src.len()];
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
    dst
}

impl TorusConvolver {
    pub fn new(kernel: &KernelGrid) -> Self {
        let (width, height) = kernel.dims();
        let (tw, th) = kernel.torus_dims();
        let mut planner = FftPlanner::new();
        let mut conv = TorusConvolver {
            width,
            height,
            row_fwd: planner.plan_fft_forward(tw),
            row_inv: planner.plan_fft_inverse(tw),
            col_fwd: planner.plan_fft_forward(th),
            col_inv: planner.plan_fft_inverse(th),
            spectrum: Vec::new(),
            total: kernel.total(),
        };
        let data: Vec<Complex<f64>> = kernel.weights().iter().map(|&w| w.into()).collect();
        let spec = conv.forward(data);
        // the kernel is even on the torus, so its transform is real
        let scale = spec.iter().map(|c| c.re.abs()).fold(1.0, f64::max);
        let worst = spec.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
        assert!(
            worst <= IMAG_TOLERANCE * scale,
            "kernel spectrum has imaginary part {worst:e}"
        );
        conv.spectrum = spec.iter().map(|c| c.re).collect();
        conv
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn forward(&self, mut data: Vec<Complex<f64>>) -> Vec<Complex<f64>> {
        let (tw, th) = (2 * self.width, 2 * self.height);
        self.row_fwd.process(&mut data);
        let mut t = transpose(&data, tw, th);
        self.col_fwd.process(&mut t);
        t
    }

    fn inverse(&self, mut t: Vec<Complex<f64>>) -> Vec<Complex<f64>> {
        let (tw, th) = (2 * self.width, 2 * self.height);
        self.col_inv.process(&mut t);
        let mut data = transpose(&t, th, tw);
        self.row_inv.process(&mut data);
        data
    }

    /// `w ⊛ g` for `g` given on the whole torus, row-major.
    pub fn convolve_torus(&self, g: &[f64]) -> Vec<f64> {
        let (tw, th) = (2 * self.width, 2 * self.height);
        assert_eq!(g.len(), tw * th, "torus field has wrong length");
        let data: Vec<Complex<f64>> = g.iter().map(|&v| v.into()).collect();
        let mut t = self.forward(data);
        for (c, &s) in t.iter_mut().zip(&self.spectrum) {
            *c *= s;
        }
        let out = self.inverse(t);
        let scale = 1.0 / (tw * th) as f64;
        let worst = out.iter().map(|c| c.im.abs()).fold(0.0, f64::max) * scale;
        assert!(
            worst <= IMAG_TOLERANCE,
            "inverse transform has imaginary residue {worst:e}"
        );
        out.iter().map(|c| c.re * scale).collect()
    }

    /// `w ⊛ J` read back on the `W × H` block, where `J` mirror-extends the
    /// row-major block `g`.
    pub fn convolve_block(&self, g: &[f64]) -> Vec<f64> {
        let (w, h) = (self.width, self.height);
        assert_eq!(g.len(), w * h, "block field has wrong length");
        let (tw, th) = (2 * w, 2 * h);
        let mut torus = Vec::with_capacity(tw * th);
        for y in 0..th {
            let row = mirror_index(y, h) * w;
            torus.extend((0..tw).map(|x| g[row + mirror_index(x, w)]));
        }
        let full = self.convolve_torus(&torus);
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h {
            out.extend_from_slice(&full[y * tw..y * tw + w]);
        }
        out
    }
}

/// `R⁽ⁿ⁾` through a prepared convolver.
pub fn r_field_fast_with(
    plane: &ChannelPlane,
    conv: &TorusConvolver,
    sep: &PolySeparation,
) -> Result<RField> {
    if plane.dims() != conv.dims() {
        return Err(Error::DimensionMismatch {
            expected: conv.dims(),
            actual: plane.dims(),
        });
    }
    let values = plane.values();
    let n = sep.degree();
    // w ⊛ J^0 is the kernel mass
    let convolved: Vec<Vec<f64>> = (1..=n)
        .into_par_iter()
        .map(|j| {
            let pow: Vec<f64> = values.iter().map(|&v| v.powi(j as i32)).collect();
            conv.convolve_block(&pow)
        })
        .collect();
    let data = values
        .iter()
        .enumerate()
        .map(|(x, &a)| {
            let mut acc = sep.f_j(0, a) * conv.total;
            for (j, c) in convolved.iter().enumerate() {
                acc += sep.f_j(j + 1, a) * c[x];
            }
            acc
        })
        .collect();
    Ok(RField::new(Field::from_vec(plane.width(), plane.height(), data)?))
}

/// `R⁽ⁿ⁾(x) = Σ_j f_j(I(x)) (w ⊛ J^j)(x)`.
pub fn r_field_fast(plane: &ChannelPlane, kernel: &KernelGrid, sep: &PolySeparation) -> Result<RField> {
    if plane.dims() != kernel.dims() {
        return Err(Error::DimensionMismatch {
            expected: kernel.dims(),
            actual: plane.dims(),
        });
    }
    r_field_fast_with(plane, &TorusConvolver::new(kernel), sep)
}

/// One row of a [`ComplexityReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeTiming {
    pub width: usize,
    pub height: usize,
    pub exact_secs: f64,
    pub fast_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub timings: Vec<ProbeTiming>,
    /// Slope of `log t` against `log N` for the exact path.
    pub exact_exponent: f64,
    pub fast_exponent: f64,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

/// Times both field evaluations on a deterministic texture at each size.
///
/// The fit is computed once up front and not timed; each fast timing
/// includes convolver setup. Fast timings take the best of `fast_repeats`.
pub fn complexity_probe(
    sizes: &[(usize, usize)],
    variant: &ContrastVariant,
    reg: &Regularizer,
    degree: usize,
    fast_repeats: usize,
) -> Result<ComplexityReport> {
    if sizes.len() < 2 {
        return Err(Error::param("sizes", "need at least two sizes"));
    }
    if sizes.windows(2).any(|p| p[0].0 * p[0].1 >= p[1].0 * p[1].1) {
        return Err(Error::param("sizes", "must be strictly ascending in pixel count"));
    }
    let sep = cached_separation(variant, reg, degree, FitGrid::default())?;
    let mut timings = Vec::with_capacity(sizes.len());
    for &(w, h) in sizes {
        let plane = crate::synth::texture_plane(w, h)?;
        let kernel = build_kernel(&KernelSpec::default(), w, h)?;

        let mut fast_secs = f64::INFINITY;
        for _ in 0..fast_repeats.max(1) {
            let t = Instant::now();
            std::hint::black_box(r_field_fast(&plane, &kernel, &sep)?);
            fast_secs = fast_secs.min(t.elapsed().as_secs_f64());
        }
        let t = Instant::now();
        std::hint::black_box(r_field_exact(&plane, &kernel, variant, reg)?);
        let exact_secs = t.elapsed().as_secs_f64();
        timings.push(ProbeTiming {
            width: w,
            height: h,
            exact_secs,
            fast_secs,
        });
    }
    let n: Vec<f64> = timings.iter().map(|t| (t.width * t.height) as f64).collect();
    let exact: Vec<f64> = timings.iter().map(|t| t.exact_secs).collect();
    let fast: Vec<f64> = timings.iter().map(|t| t.fast_secs).collect();
    Ok(ComplexityReport {
        exact_exponent: loglog_slope(&n, &exact),
        fast_exponent: loglog_slope(&n, &fast),
        timings,
    })
}
