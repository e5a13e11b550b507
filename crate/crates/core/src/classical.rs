//! Classical Lagrangian descriptors.
//!
//! The generic descriptor integrates `Σᵢ |fᵢ(x, t)|^{1/2}` along an RK4
//! trajectory of an arbitrary vector field. The saddle descriptor integrates
//! `|q|^{1/2} + |p|^{1/2}` along the closed-form flow; for the saddle field
//! the two integrands differ by the constant factor `√λ`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::saddle::{rk4_integrate, PhasePoint, SaddleFlowTable, SaddleParams, TimeGrid, VectorFieldSpec};

/// Time steps used when no mode count forces a finer grid.
pub const MIN_TIME_STEPS: usize = 4096;

/// Default time resolution for a run with `n_modes` fluctuation modes:
/// `max(4096, 16N)`, which puts at least eight nodes in every half-period of
/// the fastest mode.
pub fn default_time_steps(n_modes: usize) -> usize {
    MIN_TIME_STEPS.max(16 * n_modes)
}

/// Regular lattice of initial conditions, both endpoints included on each axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub q_min: f64,
    pub q_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub nq: usize,
    pub np: usize,
}

impl GridSpec {
    pub fn new(q_range: (f64, f64), p_range: (f64, f64), nq: usize, np: usize) -> Result<Self> {
        let grid = Self {
            q_min: q_range.0,
            q_max: q_range.1,
            p_min: p_range.0,
            p_max: p_range.1,
            nq,
            np,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// `nq × np` lattice on `[-1, 1]²`.
    pub fn unit_square(nq: usize, np: usize) -> Result<Self> {
        Self::new((-1.0, 1.0), (-1.0, 1.0), nq, np)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.q_min, self.q_max, self.p_min, self.p_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.q_min >= self.q_max || self.p_min >= self.p_max {
            return Err(Error::InvalidParameter(format!(
                "grid ranges must be finite and increasing: q [{}, {}], p [{}, {}]",
                self.q_min, self.q_max, self.p_min, self.p_max
            )));
        }
        if self.nq < 2 || self.np < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 2 nodes per axis, got {}x{}",
                self.nq, self.np
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nq * self.np
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn q(&self, iq: usize) -> f64 {
        lattice(self.q_min, self.q_max, self.nq, iq)
    }

    pub fn p(&self, ip: usize) -> f64 {
        lattice(self.p_min, self.p_max, self.np, ip)
    }

    pub fn point(&self, iq: usize, ip: usize) -> PhasePoint {
        PhasePoint::new(self.q(iq), self.p(ip))
    }

    /// Row-major position of node `(iq, ip)`; `q` varies fastest.
    pub fn index(&self, iq: usize, ip: usize) -> usize {
        ip * self.nq + iq
    }

    /// Inverse of [`GridSpec::index`].
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.nq, index / self.nq)
    }
}

fn lattice(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    if i + 1 == n {
        hi
    } else {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FieldKind {
    Classical,
    Quantum,
    Difference,
}

impl FieldKind {
    pub fn tag(self) -> u8 {
        match self {
            FieldKind::Classical => 0,
            FieldKind::Quantum => 1,
            FieldKind::Difference => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(FieldKind::Classical),
            1 => Some(FieldKind::Quantum),
            2 => Some(FieldKind::Difference),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FieldKind::Classical => "classical",
            FieldKind::Quantum => "quantum",
            FieldKind::Difference => "difference",
        }
    }
}

/// Run parameters attached to a field. Only `kind` survives the binary grid
/// format; the rest is carried by run manifests.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldMeta {
    pub kind: FieldKind,
    pub lambda: Option<f64>,
    pub horizon: Option<f64>,
    pub hbar: Option<f64>,
    pub modes: Option<usize>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
}

impl FieldMeta {
    pub fn bare(kind: FieldKind) -> Self {
        Self {
            kind,
            lambda: None,
            horizon: None,
            hbar: None,
            modes: None,
            samples: None,
            seed: None,
        }
    }

    pub fn classical(params: &SaddleParams) -> Self {
        Self {
            lambda: Some(params.lambda),
            horizon: Some(params.horizon),
            ..Self::bare(FieldKind::Classical)
        }
    }
}

/// Scalar field over a [`GridSpec`], row-major with `q` fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct LdField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub meta: FieldMeta,
}

impl LdField {
    /// Checks the shape, finiteness, and (for descriptor kinds) non-negativity.
    pub fn new(grid: GridSpec, values: Vec<f64>, meta: FieldMeta) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "field has {} values for a {}x{} grid",
                values.len(),
                grid.nq,
                grid.np
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("field value {v} is not finite")));
        }
        if meta.kind != FieldKind::Difference {
            if let Some(v) = values.iter().find(|v| **v < 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{} descriptor value {v} is negative",
                    meta.kind.name()
                )));
            }
        }
        Ok(Self { grid, values, meta })
    }

    pub fn kind(&self) -> FieldKind {
        self.meta.kind
    }

    pub fn value(&self, iq: usize, ip: usize) -> f64 {
        self.values[self.grid.index(iq, ip)]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum QuadratureRule {
    #[default]
    Trapezoid,
    Simpson,
}

/// A quadrature rule bound to a time grid, with precomputed weights.
#[derive(Clone, Debug)]
pub struct Quadrature {
    grid: TimeGrid,
    rule: QuadratureRule,
    weights: Vec<f64>,
}

impl Quadrature {
    pub fn new(grid: TimeGrid, rule: QuadratureRule) -> Self {
        let h = grid.spacing();
        let last = grid.steps();
        let weights = (0..grid.len())
            .map(|j| match rule {
                QuadratureRule::Trapezoid if j == 0 || j == last => 0.5 * h,
                QuadratureRule::Trapezoid => h,
                // TimeGrid guarantees an even step count
                QuadratureRule::Simpson if j == 0 || j == last => h / 3.0,
                QuadratureRule::Simpson if j % 2 == 1 => 4.0 * h / 3.0,
                QuadratureRule::Simpson => 2.0 * h / 3.0,
            })
            .collect();
        Self { grid, rule, weights }
    }

    pub fn trapezoid(horizon: f64, steps: usize) -> Result<Self> {
        Ok(Self::new(TimeGrid::new(horizon, steps)?, QuadratureRule::Trapezoid))
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn rule(&self) -> QuadratureRule {
        self.rule
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.weights.len());
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    pub(crate) fn check_horizon(&self, params: &SaddleParams) -> Result<()> {
        let (a, b) = (params.horizon, self.grid.horizon());
        if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
            return Err(Error::HorizonMismatch { params: a, grid: b });
        }
        Ok(())
    }
}

/// `Σᵢ |fᵢ(x, t)|^{1/2}` for an arbitrary vector field.
pub fn ld_integrand_generic(x: &[f64], t: f64, field: &VectorFieldSpec) -> f64 {
    let mut f = vec![0.0; field.dim()];
    field.eval_into(x, t, &mut f);
    f.iter().map(|v| v.abs().sqrt()).sum()
}

/// `|q|^{1/2} + |p|^{1/2}`.
#[inline]
pub fn ld_integrand_saddle(x: PhasePoint) -> f64 {
    x.q.abs().sqrt() + x.p.abs().sqrt()
}

/// Closed-form classical trajectories on a fixed quadrature grid, reusable
/// across many initial conditions.
#[derive(Clone, Debug)]
pub struct ClassicalLd {
    params: SaddleParams,
    quad: Quadrature,
    flow: SaddleFlowTable,
}

impl ClassicalLd {
    pub fn new(params: &SaddleParams, quad: Quadrature) -> Result<Self> {
        quad.check_horizon(params)?;
        let flow = SaddleFlowTable::new(params, quad.grid())?;
        Ok(Self {
            params: *params,
            quad,
            flow,
        })
    }

    pub fn params(&self) -> &SaddleParams {
        &self.params
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quad
    }

    pub fn flow(&self) -> &SaddleFlowTable {
        &self.flow
    }

    pub fn point(&self, x0: PhasePoint) -> Result<f64> {
        if !x0.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite initial condition {x0:?}")));
        }
        Ok(self
            .quad
            .weights()
            .iter()
            .zip(self.flow.trajectory(x0))
            .map(|(w, x)| w * ld_integrand_saddle(x))
            .sum())
    }

    pub fn field(&self, grid: &GridSpec) -> Result<LdField> {
        let values = sweep(grid, |x0| self.point(x0))?;
        LdField::new(*grid, values, FieldMeta::classical(&self.params))
    }
}

/// Evaluates `f` at every node of `grid` in parallel. Values land by index,
/// so the output does not depend on scheduling.
pub(crate) fn sweep<F>(grid: &GridSpec, f: F) -> Result<Vec<f64>>
where
    F: Fn(PhasePoint) -> Result<f64> + Sync,
{
    grid.validate()?;
    (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let (iq, ip) = grid.coords(idx);
            f(grid.point(iq, ip)).map_err(|e| Error::at_node(iq, ip, e))
        })
        .collect()
}

/// Saddle descriptor `∫ (|q_cl|^{1/2} + |p_cl|^{1/2}) dt` over `[-T, T]`.
pub fn classical_ld_point(x0: PhasePoint, params: &SaddleParams, quad: &Quadrature) -> Result<f64> {
    ClassicalLd::new(params, quad.clone())?.point(x0)
}

pub fn classical_ld_field(grid: &GridSpec, params: &SaddleParams, quad: &Quadrature) -> Result<LdField> {
    ClassicalLd::new(params, quad.clone())?.field(grid)
}

/// Generic descriptor along an RK4 trajectory over `[-T, T]` from `t0 = 0`.
pub fn generic_ld_point(x0: &[f64], field: &VectorFieldSpec, quad: &Quadrature) -> Result<f64> {
    let traj = rk4_integrate(x0, field, quad.grid())?;
    let grid = quad.grid();
    let mut f = vec![0.0; field.dim()];
    Ok(traj
        .states()
        .enumerate()
        .map(|(j, x)| {
            field.eval_into(x, grid.node(j), &mut f);
            quad.weights()[j] * f.iter().map(|v| v.abs().sqrt()).sum::<f64>()
        })
        .sum())
}
