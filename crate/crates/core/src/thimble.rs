//! Monte Carlo on the rotated (Lefschetz-thimble) contour.
//!
//! Each fluctuation coefficient is written `cₙ = e^{iπ/4} yₙ` with real
//! `yₙ ~ N(0, σₙ²)`, which turns the oscillatory weight of the quadratic
//! action into a Gaussian. A sample `y` fixes the complex fluctuation
//! `η(t) = e^{iπ/4} Σ yₙ φₙ(t)` and the fluctuated phase-space path
//!
//! ```text
//! q(t) = q_cl(t) + η(t),    p(t) = p_cl(t) + η̇(t)/λ.
//! ```
//!
//! The quantum descriptor is the sample mean of the saddle integrand along
//! these paths, with `|a|^{1/2}` evaluated as `(a a*)^{1/4}`. Because the
//! action is exactly quadratic there is a single Gaussian thimble and every
//! importance weight is one.
//!
//! Since `q_cl` is real, `|q|² = q_cl² + √2 q_cl η_r + η_r²` where `η_r` is
//! the real profile `Σ yₙ φₙ`; the kernels below work with real profiles
//! only.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use ndarray::{Array2, ArrayView2, Axis};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::classical::{default_time_steps, ClassicalLd, FieldKind, FieldMeta, GridSpec, LdField, Quadrature, QuadratureRule};
use crate::error::{Error, Result};
use crate::rng::{point_stream, shared_stream};
use crate::saddle::{saddle_flow, PhasePoint, SaddleParams, TimeGrid};
use crate::spectrum::{mode_table, ModeBasis, ModeQuantity};

/// `e^{iπ/4}`
pub const THIMBLE_PHASE: Complex64 = Complex64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2);

/// Samples per block in the batched matrix products.
const BLOCK: usize = 64;

/// Whether grid nodes reuse one sample set or draw their own.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SampleSharing {
    /// One set of samples (common random numbers) reused at every node.
    #[default]
    Shared,
    /// Independent samples per node, addressed by the node indices.
    PerPoint,
}

impl SampleSharing {
    pub fn name(self) -> &'static str {
        match self {
            SampleSharing::Shared => "shared",
            SampleSharing::PerPoint => "per-point",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerConfig {
    /// Mode cutoff N.
    pub modes: usize,
    /// Samples S per initial condition. Must be even with antithetic pairing.
    pub samples: usize,
    pub seed: u64,
    pub sharing: SampleSharing,
    /// Draw samples in `±y` pairs.
    pub antithetic: bool,
    /// Time steps M; `None` selects `max(4096, 16N)`.
    pub time_steps: Option<usize>,
    pub rule: QuadratureRule,
}

impl SamplerConfig {
    pub fn new(modes: usize, samples: usize, seed: u64) -> Self {
        Self {
            modes,
            samples,
            seed,
            sharing: SampleSharing::Shared,
            antithetic: true,
            time_steps: None,
            rule: QuadratureRule::Trapezoid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidParameter("sample count must be at least 1".into()));
        }
        if self.antithetic && !self.samples.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "antithetic pairing needs an even sample count, got {}",
                self.samples
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.time_steps.unwrap_or_else(|| default_time_steps(self.modes))
    }

    pub fn time_grid(&self, params: &SaddleParams) -> Result<TimeGrid> {
        TimeGrid::new(params.horizon, self.steps())
    }

    pub fn quadrature(&self, params: &SaddleParams) -> Result<Quadrature> {
        Ok(Quadrature::new(self.time_grid(params)?, self.rule))
    }

    /// Independent draws: sample pairs with antithetic pairing, samples otherwise.
    fn draws(&self) -> usize {
        if self.antithetic {
            self.samples / 2
        } else {
            self.samples
        }
    }
}

/// Thimble coordinates `y₁..y_N` of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeSample {
    pub y: Vec<f64>,
}

impl ModeSample {
    pub fn zeros(n: usize) -> Self {
        Self { y: vec![0.0; n] }
    }

    pub fn negated(&self) -> Self {
        Self {
            y: self.y.iter().map(|v| -v).collect(),
        }
    }
}

/// Draws `yₙ = σₙ zₙ` with independent standard normals `zₙ`.
///
/// The standard normals depend only on the stream, so two bases with the
/// same mode count see the same `z` (common random numbers).
pub fn sample_modes<R: Rng + ?Sized>(rng: &mut R, basis: &ModeBasis) -> ModeSample {
    ModeSample {
        y: basis
            .variances()
            .iter()
            .map(|s2| s2.sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect(),
    }
}

/// Node whose streams a draw comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum StreamSource {
    Shared,
    Node(usize, usize),
}

/// The independent draws of a run: one per pair when antithetic, otherwise
/// one per sample. Draw `k` comes from stream `k`.
fn draw_independent(basis: &ModeBasis, config: &SamplerConfig, source: StreamSource) -> Vec<ModeSample> {
    (0..config.draws() as u64)
        .map(|k| {
            let mut rng = match source {
                StreamSource::Shared => shared_stream(config.seed, k),
                StreamSource::Node(iq, ip) => point_stream(config.seed, iq as u64, ip as u64, k),
            };
            sample_modes(&mut rng, basis)
        })
        .collect()
}

/// All `S` samples of a shared-sample run, in order. With antithetic
/// pairing, sample `2k+1` is the negation of sample `2k`.
pub fn draw_samples(basis: &ModeBasis, config: &SamplerConfig) -> Result<Vec<ModeSample>> {
    config.validate()?;
    let draws = draw_independent(basis, config, StreamSource::Shared);
    Ok(if config.antithetic {
        draws.into_iter().flat_map(|y| [y.negated(), y].into_iter().rev()).collect()
    } else {
        draws
    })
}

/// `N × count` matrix whose columns are the samples.
fn sample_matrix(samples: &[ModeSample], n_modes: usize) -> Array2<f64> {
    Array2::from_shape_fn((n_modes, samples.len()), |(n, s)| samples[s].y[n])
}

/// Real profile `Σ yₙ Tₙ(tⱼ)` for one sample and a mode table `T`.
fn profile(table: &Array2<f64>, y: &ModeSample) -> Vec<f64> {
    assert_eq!(table.ncols(), y.y.len(), "sample does not match the basis");
    table.rows().into_iter().map(|row| row.iter().zip(&y.y).map(|(a, b)| a * b).sum()).collect()
}

/// `η(tⱼ)` and `η̇(tⱼ)` on the grid nodes.
pub fn build_fluctuation(y: &ModeSample, grid: &TimeGrid, basis: &ModeBasis) -> (Vec<Complex64>, Vec<Complex64>) {
    let lambda = basis.params().lambda;
    let eta = profile(&mode_table(basis, grid, ModeQuantity::Value), y);
    let deta = profile(&mode_table(basis, grid, ModeQuantity::DerivOverLambda), y);
    (
        eta.into_iter().map(|v| THIMBLE_PHASE * v).collect(),
        deta.into_iter().map(|v| THIMBLE_PHASE * (v * lambda)).collect(),
    )
}

/// A fluctuated path on the nodes of a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexPath {
    pub grid: TimeGrid,
    pub q: Vec<Complex64>,
    pub p: Vec<Complex64>,
}

impl ComplexPath {
    /// `u = (p − q)/√2` along the path.
    pub fn transverse(&self) -> Vec<Complex64> {
        self.q.iter().zip(&self.p).map(|(q, p)| (p - q) * FRAC_1_SQRT_2).collect()
    }

    /// Descriptor `∫ ((q q*)^{1/4} + (p p*)^{1/4}) dt`.
    pub fn descriptor(&self, quad: &Quadrature) -> f64 {
        debug_assert_eq!(quad.grid(), &self.grid);
        let values: Vec<f64> = self
            .q
            .iter()
            .zip(&self.p)
            .map(|(q, p)| q.norm_sqr().sqrt().sqrt() + p.norm_sqr().sqrt().sqrt())
            .collect();
        quad.integrate(&values)
    }
}

/// `q = q_cl + η`, `p = p_cl + η̇/λ`.
pub fn fluctuated_path(
    x0: PhasePoint,
    y: &ModeSample,
    params: &SaddleParams,
    grid: &TimeGrid,
    basis: &ModeBasis,
) -> Result<ComplexPath> {
    let (eta, deta) = build_fluctuation(y, grid, basis);
    let mut q = Vec::with_capacity(grid.len());
    let mut p = Vec::with_capacity(grid.len());
    for (j, t) in grid.nodes().enumerate() {
        let cl = saddle_flow(x0, t, params)?;
        q.push(cl.q + eta[j]);
        p.push(cl.p + deta[j] / params.lambda);
    }
    Ok(ComplexPath { grid: *grid, q, p })
}

/// `δu(tⱼ) = (e^{iπ/4}/√2) Σ yₙ aₙ(tⱼ)`.
pub fn transverse_fluctuation(y: &ModeSample, grid: &TimeGrid, basis: &ModeBasis) -> Vec<Complex64> {
    profile(&mode_table(basis, grid, ModeQuantity::Transverse), y)
        .into_iter()
        .map(|v| THIMBLE_PHASE * (v * FRAC_1_SQRT_2))
        .collect()
}

/// Signed distance proxy `u = g/‖∇g‖` from a manifold `g = 0`.
pub fn transverse_coordinate(g_value: f64, g_gradient_norm: f64) -> Result<f64> {
    if g_gradient_norm.is_nan() || g_gradient_norm <= 0.0 || !g_gradient_norm.is_finite() {
        return Err(Error::DegenerateManifold(g_gradient_norm));
    }
    Ok(g_value / g_gradient_norm)
}

/// `u` relative to the unstable manifold `p = q` (`g = p − q`).
pub fn unstable_coordinate(x: PhasePoint) -> f64 {
    (x.p - x.q) / SQRT_2
}

/// `u` relative to the stable manifold `p = −q` (`g = p + q`).
pub fn stable_coordinate(x: PhasePoint) -> f64 {
    (x.p + x.q) / SQRT_2
}

/// Real fluctuation profiles of one sample set on the time grid, laid out
/// node-major so that the per-node loop over samples is contiguous.
/// With antithetic pairing only one member of each pair is stored.
struct PathTable {
    eta: Array2<f64>,
    /// `η̇/λ`
    deta: Array2<f64>,
}

/// Quantum descriptor engine: basis, mode tables, classical flow and (in
/// shared mode) the fluctuation profiles, built once and reused for every
/// initial condition.
pub struct ThimbleSampler {
    config: SamplerConfig,
    basis: ModeBasis,
    classical: ClassicalLd,
    phi: Array2<f64>,
    dphi: Array2<f64>,
    shared: Option<PathTable>,
}

impl ThimbleSampler {
    pub fn new(params: &SaddleParams, config: &SamplerConfig) -> Result<Self> {
        config.validate()?;
        let quad = config.quadrature(params)?;
        let classical = ClassicalLd::new(params, quad)?;
        let basis = ModeBasis::new(config.modes, params);
        let grid = *classical.quadrature().grid();
        let (phi, dphi) = if basis.is_degenerate() {
            (Array2::zeros((grid.len(), 0)), Array2::zeros((grid.len(), 0)))
        } else {
            (
                mode_table(&basis, &grid, ModeQuantity::Value),
                mode_table(&basis, &grid, ModeQuantity::DerivOverLambda),
            )
        };
        let mut sampler = Self {
            config: *config,
            basis,
            classical,
            phi,
            dphi,
            shared: None,
        };
        if !sampler.basis.is_degenerate() && config.sharing == SampleSharing::Shared {
            sampler.shared = Some(sampler.path_table(StreamSource::Shared));
        }
        Ok(sampler)
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn basis(&self) -> &ModeBasis {
        &self.basis
    }

    pub fn classical(&self) -> &ClassicalLd {
        &self.classical
    }

    fn path_table(&self, source: StreamSource) -> PathTable {
        let draws = draw_independent(&self.basis, &self.config, source);
        let y = sample_matrix(&draws, self.basis.len());
        PathTable {
            eta: self.phi.dot(&y),
            deta: self.dphi.dot(&y),
        }
    }

    /// Quantum descriptor at `x0`. In per-point mode a lone point draws
    /// from the streams of node `(0, 0)`.
    pub fn point(&self, x0: PhasePoint) -> Result<f64> {
        self.point_at(x0, 0, 0)
    }

    fn point_at(&self, x0: PhasePoint, iq: usize, ip: usize) -> Result<f64> {
        if self.basis.is_degenerate() {
            return self.classical.point(x0);
        }
        if !x0.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite initial condition {x0:?}")));
        }
        match &self.shared {
            Some(table) => Ok(self.average(x0, table)),
            None => Ok(self.average(x0, &self.path_table(StreamSource::Node(iq, ip)))),
        }
    }

    pub fn field(&self, grid: &GridSpec) -> Result<LdField> {
        grid.validate()?;
        let values = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let (iq, ip) = grid.coords(idx);
                self.point_at(grid.point(iq, ip), iq, ip)
                    .map_err(|e| Error::at_node(iq, ip, e))
            })
            .collect::<Result<Vec<f64>>>()?;
        let params = self.classical.params();
        let meta = FieldMeta {
            kind: FieldKind::Quantum,
            lambda: Some(params.lambda),
            horizon: Some(params.horizon),
            hbar: Some(params.hbar),
            modes: Some(self.config.modes),
            samples: Some(self.config.samples),
            seed: Some(self.config.seed),
        };
        LdField::new(*grid, values, meta)
    }

    /// Mean over samples of the path descriptor, summed node by node.
    fn average(&self, x0: PhasePoint, table: &PathTable) -> f64 {
        let flow = self.classical.flow();
        let weights = self.classical.quadrature().weights();
        let mut total = 0.0;
        for (j, w) in weights.iter().enumerate() {
            let cl = flow.at(x0, j);
            let eta = table.eta.row(j);
            let deta = table.deta.row(j);
            let (eta, deta) = (eta.as_slice().unwrap(), deta.as_slice().unwrap());
            let node = if self.config.antithetic {
                paired_sum(cl.q, eta) + paired_sum(cl.p, deta)
            } else {
                single_sum(cl.q, eta) + single_sum(cl.p, deta)
            };
            total += w * node;
        }
        total / self.config.samples as f64
    }
}

#[inline(always)]
fn rotated_root(c2: f64, ac: f64, e: f64) -> f64 {
    // (|c + e^{iπ/4} e|²)^{1/4} with c2 = c², ac = √2 c
    (c2 + e * (ac + e)).sqrt().sqrt()
}

const LANES: usize = 8;

/// `Σₛ f(c, eₛ)` in fixed-width lanes so the loop vectorizes while the
/// summation order stays independent of the machine.
fn single_sum(c: f64, e: &[f64]) -> f64 {
    let (c2, ac) = (c * c, SQRT_2 * c);
    let mut lanes = [0.0; LANES];
    let chunks = e.chunks_exact(LANES);
    let tail: f64 = chunks.remainder().iter().map(|&v| rotated_root(c2, ac, v)).sum();
    for chunk in chunks {
        for (l, &v) in lanes.iter_mut().zip(chunk) {
            *l += rotated_root(c2, ac, v);
        }
    }
    lanes.iter().sum::<f64>() + tail
}

/// `Σₛ [f(c, eₛ) + f(c, −eₛ)]`. Each pair is summed first, which makes the
/// result bit-identical under `c → −c`.
fn paired_sum(c: f64, e: &[f64]) -> f64 {
    let (c2, ac) = (c * c, SQRT_2 * c);
    let pair = |v: f64| rotated_root(c2, ac, v) + rotated_root(c2, ac, -v);
    let mut lanes = [0.0; LANES];
    let chunks = e.chunks_exact(LANES);
    let tail: f64 = chunks.remainder().iter().map(|&v| pair(v)).sum();
    for chunk in chunks {
        for (l, &v) in lanes.iter_mut().zip(chunk) {
            *l += pair(v);
        }
    }
    lanes.iter().sum::<f64>() + tail
}

/// Quantum descriptor at a single initial condition.
pub fn quantum_ld_point(x0: PhasePoint, params: &SaddleParams, config: &SamplerConfig) -> Result<f64> {
    ThimbleSampler::new(params, config)?.point(x0)
}

pub fn quantum_ld_field(grid: &GridSpec, params: &SaddleParams, config: &SamplerConfig) -> Result<LdField> {
    ThimbleSampler::new(params, config)?.field(grid)
}

/// Monte Carlo manifold width.
#[derive(Clone, Debug, PartialEq)]
pub struct WidthEstimate {
    pub sigma_rms: f64,
    /// Standard error of `sigma_rms` (delta method); NaN with fewer than two
    /// independent draws.
    pub std_error: f64,
    /// Sample mean of `|δu(tⱼ)|²` on every node of `grid`.
    pub profile: Vec<f64>,
    pub grid: TimeGrid,
}

/// Estimates `σ_rms = √((1/2T) ∫ ⟨|δu(t)|²⟩ dt)` from the shared sample set.
///
/// The squared modulus of `δu` is a quadratic form in `y`, so both members
/// of an antithetic pair give the same value; the standard error treats
/// pairs as the independent units.
pub fn mc_width_estimate(params: &SaddleParams, config: &SamplerConfig) -> Result<WidthEstimate> {
    config.validate()?;
    let quad = config.quadrature(params)?;
    let grid = *quad.grid();
    let basis = ModeBasis::new(config.modes, params);
    if basis.is_degenerate() {
        return Ok(WidthEstimate {
            sigma_rms: 0.0,
            std_error: 0.0,
            profile: vec![0.0; grid.len()],
            grid,
        });
    }

    let draws = draw_independent(&basis, config, StreamSource::Shared);
    let table = mode_table(&basis, &grid, ModeQuantity::Transverse);
    let weights = quad.weights();
    let inv_span = 1.0 / (2.0 * params.horizon);

    // per block: (time-averaged |δu|² per draw, Σ over draws of |δu(tⱼ)|²)
    let blocks: Vec<(Vec<f64>, Vec<f64>)> = draws
        .par_chunks(BLOCK)
        .map(|chunk| {
            let y = sample_matrix(chunk, basis.len());
            let r = table.dot(&y);
            block_stats(r.view(), weights, inv_span)
        })
        .collect();

    let mut averages = Vec::with_capacity(draws.len());
    let mut profile = vec![0.0; grid.len()];
    for (avg, prof) in blocks {
        averages.extend(avg);
        for (acc, v) in profile.iter_mut().zip(prof) {
            *acc += v;
        }
    }
    let units = averages.len() as f64;
    profile.iter_mut().for_each(|v| *v /= units);

    let mean = averages.iter().sum::<f64>() / units;
    let sigma_rms = mean.sqrt();
    let std_error = if averages.len() < 2 {
        f64::NAN
    } else {
        let var = averages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (units - 1.0);
        let se_mean = (var / units).sqrt();
        if sigma_rms > 0.0 {
            se_mean / (2.0 * sigma_rms)
        } else {
            0.0
        }
    };
    Ok(WidthEstimate {
        sigma_rms,
        std_error,
        profile,
        grid,
    })
}

/// `r` holds real transverse profiles `Σ yₙ aₙ(tⱼ)`, one column per draw.
fn block_stats(r: ArrayView2<f64>, weights: &[f64], inv_span: f64) -> (Vec<f64>, Vec<f64>) {
    let averages = r
        .axis_iter(Axis(1))
        .map(|col| inv_span * col.iter().zip(weights).map(|(v, w)| w * 0.5 * v * v).sum::<f64>())
        .collect();
    let profile = r
        .axis_iter(Axis(0))
        .map(|row| row.iter().map(|v| 0.5 * v * v).sum::<f64>())
        .collect();
    (averages, profile)
}

/// Sample mean of `|δu(t)|²` at arbitrary probe times, from the shared
/// sample set of `config`.
pub fn mc_transverse_variance(params: &SaddleParams, config: &SamplerConfig, times: &[f64]) -> Result<Vec<f64>> {
    config.validate()?;
    let basis = ModeBasis::new(config.modes, params);
    if basis.is_degenerate() {
        return Ok(vec![0.0; times.len()]);
    }
    for &t in times {
        if t.is_nan() || t.abs() > params.horizon {
            return Err(Error::InvalidParameter(format!("probe time {t} outside [-T, T]")));
        }
    }
    let coeffs = Array2::from_shape_fn((times.len(), basis.len()), |(i, n)| {
        crate::spectrum::transverse_coeff(n + 1, times[i], &basis)
    });
    let draws = draw_independent(&basis, config, StreamSource::Shared);
    let sums: Vec<Vec<f64>> = draws
        .par_chunks(BLOCK)
        .map(|chunk| {
            let r = coeffs.dot(&sample_matrix(chunk, basis.len()));
            r.axis_iter(Axis(0))
                .map(|row| row.iter().map(|v| 0.5 * v * v).sum::<f64>())
                .collect()
        })
        .collect();
    let mut out = vec![0.0; times.len()];
    for block in sums {
        for (acc, v) in out.iter_mut().zip(block) {
            *acc += v;
        }
    }
    let n = draws.len() as f64;
    Ok(out.into_iter().map(|v| v / n).collect())
}

/// Time-averaged `|δu|²` of one sample, integrated on `quad`.
pub fn sample_width_squared(y: &ModeSample, basis: &ModeBasis, quad: &Quadrature) -> f64 {
    let du = transverse_fluctuation(y, quad.grid(), basis);
    let values: Vec<f64> = du.iter().map(|z| z.norm_sqr()).collect();
    quad.integrate(&values) / (2.0 * quad.grid().horizon())
}
