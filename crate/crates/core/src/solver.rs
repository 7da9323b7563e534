//! Semi-implicit gradient descent on contrast plus entropic dispersion.
//!
//! Treating the dispersion implicitly and the contrast force explicitly gives
//! the closed-form step
//!
//! ```text
//! I^{k+1} = [I^k + Δt(α/2 + β I₀ + R_{I^k}/2)] / (1 + Δt(α + β))
//! ```
//!
//! iterated until the mean squared change per pixel drops below `stop_mse`.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrast::{check_kernel, contrast_energy, r_pointwise, ContrastVariant, Regularizer};
use crate::dispersion::{dispersion_energy, DispersionKind, DispersionParams};
use crate::error::{Error, Result};
use crate::fastconv::{cached_separation, r_field_fast_with, FitGrid, PolySeparation, TorusConvolver};
use crate::image::{ChannelPlane, ColorImage, Field, RHO};
use crate::kernel::{build_kernel, pair_field, KernelGrid, KernelSpec};
use crate::noisectl::{detail_addback, extrema_kill, GrainParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RMode {
    /// Direct O(N²) double sum.
    #[default]
    Exact,
    /// Polynomial separation with FFT convolutions.
    Fast,
}

impl std::str::FromStr for RMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(RMode::Exact),
            "fast" => Ok(RMode::Fast),
            other => Err(Error::param("mode", format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhanceParams {
    pub dispersion: DispersionParams,
    pub dt: f64,
    pub reg: Regularizer,
    pub variant: ContrastVariant,
    /// Threshold on the mean squared change per pixel, on the `[0, 1]` scale.
    pub stop_mse: f64,
    pub max_iters: usize,
    pub r_mode: RMode,
    /// Clip every iterate to `[ρ, 1]`. When off, leaving the range is an
    /// error.
    pub clamp: bool,
    pub kernel: KernelSpec,
    pub poly_degree: usize,
    pub fit_grid: FitGrid,
    pub grain: GrainParams,
    /// Record `C + D` after every step. Costs one O(N²) pass per step.
    pub track_energy: bool,
}

impl Default for EnhanceParams {
    fn default() -> Self {
        EnhanceParams {
            dispersion: DispersionParams::default(),
            dt: 0.2,
            reg: Regularizer::default(),
            variant: ContrastVariant::default(),
            stop_mse: 1e-4,
            max_iters: 100,
            r_mode: RMode::Exact,
            clamp: true,
            kernel: KernelSpec::default(),
            poly_degree: 9,
            fit_grid: FitGrid::default(),
            grain: GrainParams::default(),
            track_energy: true,
        }
    }
}

impl EnhanceParams {
    pub fn validate(&self) -> Result<()> {
        self.dispersion.validate()?;
        if self.dispersion.kind != DispersionKind::Entropic {
            return Err(Error::param(
                "dispersion",
                "the semi-implicit step requires entropic dispersion",
            ));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::param("dt", "must be finite and positive"));
        }
        if !(self.stop_mse.is_finite() && self.stop_mse > 0.0) {
            return Err(Error::param("stop_mse", "must be finite and positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be at least 1"));
        }
        if self.poly_degree == 0 {
            return Err(Error::param("poly_degree", "must be at least 1"));
        }
        self.grain.validate()
    }
}

/// Per-pixel contrast force. Every entry lies in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RField(Field);

impl RField {
    pub fn new(field: Field) -> Self {
        RField(field)
    }

    pub fn field(&self) -> &Field {
        &self.0
    }

    pub fn into_field(self) -> Field {
        self.0
    }

    pub fn values(&self) -> &[f64] {
        self.0.values()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
}

/// Contrast and dispersion energies of one iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub contrast: f64,
    pub dispersion: f64,
}

impl EnergySample {
    pub fn total(&self) -> f64 {
        self.contrast + self.dispersion
    }
}

/// Norms of `I^{k+1} - I^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffNorms {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub iterations: usize,
    /// The series the stopping rule tests. For a color image this is the
    /// mean over all three channels.
    pub mse: Vec<f64>,
    /// This channel's own mean squared change.
    pub channel_mse: Vec<f64>,
    pub diff_norms: Vec<DiffNorms>,
    /// Energy after each step; empty unless tracking was requested.
    pub energy: Vec<EnergySample>,
    pub termination: Termination,
}

impl SolveTrace {
    /// Writes `iteration,mse,energy_contrast,energy_dispersion` rows. Energy
    /// columns are empty when not tracked.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "iteration,mse,energy_contrast,energy_dispersion")?;
        for (k, mse) in self.mse.iter().enumerate() {
            match self.energy.get(k) {
                Some(e) => writeln!(out, "{},{mse:e},{},{}", k + 1, e.contrast, e.dispersion)?,
                None => writeln!(out, "{},{mse:e},,", k + 1)?,
            }
        }
        Ok(())
    }
}

/// `R(x) = Σ_y w(x,y) r(I(x), I(y))` by the full double sum.
pub fn r_field_exact(
    plane: &ChannelPlane,
    kernel: &KernelGrid,
    variant: &ContrastVariant,
    reg: &Regularizer,
) -> Result<RField> {
    check_kernel(plane, kernel)?;
    let data = pair_field(plane, kernel, |a, b| r_pointwise(a, b, variant, reg));
    Ok(RField(Field::from_vec(plane.width(), plane.height(), data)?))
}

/// `Σ_y w(x,y) s_ε(I(x) - I(y))`: the smoothed sign-comparison sum.
pub fn ace_r_field(plane: &ChannelPlane, kernel: &KernelGrid, reg: &Regularizer) -> Result<RField> {
    check_kernel(plane, kernel)?;
    let data = pair_field(plane, kernel, |a, b| reg.s(a - b));
    Ok(RField(Field::from_vec(plane.width(), plane.height(), data)?))
}

fn check_step_dims(ik: &ChannelPlane, i0: &ChannelPlane, r: &RField) -> Result<()> {
    i0.ensure_same_dims(ik.dims())?;
    if r.dims() != ik.dims() {
        return Err(Error::DimensionMismatch {
            expected: ik.dims(),
            actual: r.dims(),
        });
    }
    Ok(())
}

/// One semi-implicit step without clamping or range checks.
pub fn gd_step_raw(ik: &ChannelPlane, i0: &ChannelPlane, r: &RField, p: &EnhanceParams) -> Result<Field> {
    check_step_dims(ik, i0, r)?;
    let (alpha, beta, dt) = (p.dispersion.alpha, p.dispersion.beta, p.dt);
    let denom = 1.0 + dt * (alpha + beta);
    let data = ik
        .values()
        .iter()
        .zip(i0.values())
        .zip(r.values())
        .map(|((&i, &i0), &r)| (i + dt * (0.5 * alpha + beta * i0 + 0.5 * r)) / denom)
        .collect();
    Field::from_vec(ik.width(), ik.height(), data)
}

fn to_plane(step: Field, clamp: bool, iteration: usize) -> Result<ChannelPlane> {
    let (w, h) = step.dims();
    let data = step.into_vec();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure { iteration });
    }
    if clamp {
        return ChannelPlane::clamped(w, h, data);
    }
    if let Some(&value) = data.iter().find(|v| !(RHO..=1.0).contains(*v)) {
        return Err(Error::RangeViolation { iteration, value });
    }
    ChannelPlane::new(w, h, data)
}

/// One semi-implicit step, clipped to `[ρ, 1]` if `p.clamp` is set.
pub fn gd_step(ik: &ChannelPlane, i0: &ChannelPlane, r: &RField, p: &EnhanceParams) -> Result<ChannelPlane> {
    to_plane(gd_step_raw(ik, i0, r, p)?, p.clamp, 0)
}

/// Evaluates the force field in the configured mode. Holds the convolver
/// and fit for the fast mode so they are built once per solve.
pub struct ForceEvaluator<'k> {
    kernel: &'k KernelGrid,
    variant: ContrastVariant,
    reg: Regularizer,
    fast: Option<(TorusConvolver, Arc<PolySeparation>)>,
}

impl<'k> ForceEvaluator<'k> {
    pub fn new(kernel: &'k KernelGrid, p: &EnhanceParams) -> Result<Self> {
        let fast = match p.r_mode {
            RMode::Exact => None,
            RMode::Fast => Some((
                TorusConvolver::new(kernel),
                cached_separation(&p.variant, &p.reg, p.poly_degree, p.fit_grid)?,
            )),
        };
        Ok(ForceEvaluator {
            kernel,
            variant: p.variant,
            reg: p.reg,
            fast,
        })
    }

    pub fn eval(&self, plane: &ChannelPlane) -> Result<RField> {
        match &self.fast {
            None => r_field_exact(plane, self.kernel, &self.variant, &self.reg),
            Some((conv, sep)) => r_field_fast_with(plane, conv, sep),
        }
    }

    pub fn separation(&self) -> Option<&PolySeparation> {
        self.fast.as_ref().map(|(_, s)| s.as_ref())
    }
}

fn diff_stats(next: &[f64], cur: &[f64]) -> (f64, DiffNorms) {
    let (mut l1, mut sq, mut linf) = (0.0, 0.0, 0.0f64);
    for (a, b) in next.iter().zip(cur) {
        let d = (a - b).abs();
        l1 += d;
        sq += d * d;
        linf = linf.max(d);
    }
    let mse = sq / next.len() as f64;
    (
        mse,
        DiffNorms {
            l1,
            l2: sq.sqrt(),
            linf,
        },
    )
}

fn energy_of(
    plane: &ChannelPlane,
    i0: &ChannelPlane,
    kernel: &KernelGrid,
    p: &EnhanceParams,
) -> Result<EnergySample> {
    Ok(EnergySample {
        contrast: contrast_energy(plane, kernel, &p.variant, &p.reg)?,
        dispersion: dispersion_energy(plane, i0, &p.dispersion)?,
    })
}

struct ChannelRun {
    current: ChannelPlane,
    channel_mse: Vec<f64>,
    diff_norms: Vec<DiffNorms>,
    energy: Vec<EnergySample>,
}

impl ChannelRun {
    fn new(start: ChannelPlane) -> Self {
        ChannelRun {
            current: start,
            channel_mse: Vec::new(),
            diff_norms: Vec::new(),
            energy: Vec::new(),
        }
    }

    /// Advances one step and returns this channel's mean squared change.
    fn step(
        &mut self,
        i0: &ChannelPlane,
        eval: &ForceEvaluator<'_>,
        kernel: &KernelGrid,
        p: &EnhanceParams,
        iteration: usize,
    ) -> Result<f64> {
        let r = eval.eval(&self.current)?;
        let next = to_plane(gd_step_raw(&self.current, i0, &r, p)?, p.clamp, iteration)?;
        let (mse, norms) = diff_stats(next.values(), self.current.values());
        self.channel_mse.push(mse);
        self.diff_norms.push(norms);
        if p.track_energy {
            self.energy.push(energy_of(&next, i0, kernel, p)?);
        }
        self.current = next;
        Ok(mse)
    }

    fn finish(self, mse: Vec<f64>, termination: Termination) -> (ChannelPlane, SolveTrace) {
        let trace = SolveTrace {
            iterations: self.channel_mse.len(),
            mse,
            channel_mse: self.channel_mse,
            diff_norms: self.diff_norms,
            energy: self.energy,
            termination,
        };
        (self.current, trace)
    }
}

/// Runs the iteration from `start` with data term `i0`.
pub fn enhance_channel_from(
    start: &ChannelPlane,
    i0: &ChannelPlane,
    kernel: &KernelGrid,
    p: &EnhanceParams,
) -> Result<(ChannelPlane, SolveTrace)> {
    p.validate()?;
    check_kernel(i0, kernel)?;
    i0.ensure_same_dims(start.dims())?;
    let eval = ForceEvaluator::new(kernel, p)?;
    let mut run = ChannelRun::new(start.clone());
    let mut termination = Termination::MaxIters;
    for k in 1..=p.max_iters {
        if run.step(i0, &eval, kernel, p, k)? < p.stop_mse {
            termination = Termination::Converged;
            break;
        }
    }
    let mse = run.channel_mse.clone();
    Ok(run.finish(mse, termination))
}

/// Runs the iteration on one channel starting from the input itself.
pub fn enhance_channel(
    i0: &ChannelPlane,
    kernel: &KernelGrid,
    p: &EnhanceParams,
) -> Result<(ChannelPlane, SolveTrace)> {
    enhance_channel_from(i0, i0, kernel, p)
}

/// Enhances the three channels independently with a shared kernel.
///
/// The channels advance in lockstep and stop together once the mean squared
/// change over all pixels and channels drops below `stop_mse`. With noise
/// control enabled, each channel is grain-filtered first and the removed
/// detail is added back afterwards.
pub fn enhance_image(image: &ColorImage, p: &EnhanceParams) -> Result<(ColorImage, [SolveTrace; 3])> {
    p.validate()?;
    let (w, h) = image.dims();
    let kernel = build_kernel(&p.kernel, w, h)?;

    let mut inputs = Vec::with_capacity(3);
    let mut residuals = Vec::with_capacity(3);
    for plane in image.channels() {
        if p.grain.enabled {
            let (filtered, residual) = extrema_kill(plane, &p.grain)?;
            inputs.push(filtered);
            residuals.push(Some(residual));
        } else {
            inputs.push(plane.clone());
            residuals.push(None);
        }
    }

    let eval = ForceEvaluator::new(&kernel, p)?;
    // identical channels evolve identically; solve once and copy
    let distinct = if image.is_gray() { 1 } else { 3 };
    let mut runs: Vec<ChannelRun> = inputs[..distinct]
        .iter()
        .map(|i| ChannelRun::new(i.clone()))
        .collect();
    let mut joint = Vec::new();
    let mut termination = Termination::MaxIters;
    for k in 1..=p.max_iters {
        let mses = runs
            .par_iter_mut()
            .zip(&inputs[..distinct])
            .map(|(run, i0)| run.step(i0, &eval, &kernel, p, k))
            .collect::<Result<Vec<f64>>>()?;
        let mse = mses.iter().sum::<f64>() / distinct as f64;
        joint.push(mse);
        if mse < p.stop_mse {
            termination = Termination::Converged;
            break;
        }
    }

    let mut outs = Vec::with_capacity(3);
    let mut traces = Vec::with_capacity(3);
    for run in runs {
        let (plane, trace) = run.finish(joint.clone(), termination);
        outs.push(plane);
        traces.push(trace);
    }
    while outs.len() < 3 {
        outs.push(outs[0].clone());
        traces.push(traces[0].clone());
    }
    for (out, residual) in outs.iter_mut().zip(&residuals) {
        if let Some(res) = residual {
            *out = detail_addback(out, res)?;
        }
    }
    let [r, g, b]: [ChannelPlane; 3] = outs.try_into().expect("three channels");
    let traces: [SolveTrace; 3] = traces.try_into().expect("three traces");
    Ok((ColorImage::new(r, g, b)?, traces))
}

/// Residual `α(I - ½) + β(I - I₀) - R_I/2` of the stationarity condition.
pub fn fixed_point_residual(
    plane: &ChannelPlane,
    i0: &ChannelPlane,
    kernel: &KernelGrid,
    p: &EnhanceParams,
) -> Result<Field> {
    i0.ensure_same_dims(plane.dims())?;
    let r = ForceEvaluator::new(kernel, p)?.eval(plane)?;
    let (alpha, beta) = (p.dispersion.alpha, p.dispersion.beta);
    let data = plane
        .values()
        .iter()
        .zip(i0.values())
        .zip(r.values())
        .map(|((&i, &i0), &r)| alpha * (i - 0.5) + beta * (i - i0) - 0.5 * r)
        .collect();
    Field::from_vec(plane.width(), plane.height(), data)
}

/// Sufficient conditions for range invariance and contraction of the step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// `max |s_ε'|` over `[-1, 1]`.
    pub m_eps: f64,
    /// Lipschitz bound `(1 + Δt(1/ρ + m_ε)) / (1 + Δt(α + β))` of the step.
    pub contraction_factor: f64,
    /// Smallest α keeping unclamped iterates in `[ρ, 1]`: `1/(1 - 2ρ)`.
    pub alpha_min: f64,
    pub range_invariant: bool,
    /// `1/ρ + m_ε`; contraction is guaranteed when `α + β` exceeds it.
    pub contraction_threshold: f64,
    pub contraction_guaranteed: bool,
}

pub fn stability_report(p: &EnhanceParams) -> StabilityReport {
    let m_eps = p.reg.max_slope();
    let (alpha, beta, dt) = (p.dispersion.alpha, p.dispersion.beta, p.dt);
    let alpha_min = 1.0 / (1.0 - 2.0 * RHO);
    let threshold = 1.0 / RHO + m_eps;
    StabilityReport {
        m_eps,
        contraction_factor: (1.0 + dt * threshold) / (1.0 + dt * (alpha + beta)),
        alpha_min,
        // a few ulps of slack so 255/253 and 1/(1 - 2/255) compare equal
        range_invariant: alpha >= alpha_min * (1.0 - 4.0 * f64::EPSILON),
        contraction_threshold: threshold,
        contraction_guaranteed: alpha + beta > threshold,
    }
}
