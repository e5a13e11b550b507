//! Hamiltonian saddle `H = (λ/2)(p² − q²)`: closed-form flow, energy and
//! vector field, plus a fixed-step RK4 engine for arbitrary 1-DoF fields.
//!
//! The closed-form flow drives every saddle computation in the crate. The
//! RK4 engine exists for general vector fields and as an independent check
//! on the closed form.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Largest `|λt|` accepted before `e^{λt}` overflows a double.
pub const MAX_HYPERBOLIC_ARG: f64 = 700.0;

/// Saddle rate `lambda`, half time-horizon `T` and action scale `hbar`.
///
/// `hbar = 0` is accepted and denotes the classical limit (no fluctuations).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SaddleParams {
    pub lambda: f64,
    pub horizon: f64,
    pub hbar: f64,
}

impl SaddleParams {
    pub fn new(lambda: f64, horizon: f64) -> Result<Self> {
        Self::with_hbar(lambda, horizon, 1.0)
    }

    pub fn with_hbar(lambda: f64, horizon: f64, hbar: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive and finite, got {lambda}"
            )));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "time horizon must be positive and finite, got {horizon}"
            )));
        }
        if !(hbar.is_finite() && hbar >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "hbar must be non-negative and finite, got {hbar}"
            )));
        }
        Ok(Self {
            lambda,
            horizon,
            hbar,
        })
    }

    /// The dimensionless product `λT` that controls the width law.
    pub fn lambda_horizon(&self) -> f64 {
        self.lambda * self.horizon
    }
}

/// A real phase-space point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhasePoint {
    pub q: f64,
    pub p: f64,
}

impl PhasePoint {
    pub const fn new(q: f64, p: f64) -> Self {
        Self { q, p }
    }

    pub fn is_finite(&self) -> bool {
        self.q.is_finite() && self.p.is_finite()
    }
}

/// Uniform grid on `[-T, T]` with `steps` intervals; `t0 = 0` is the middle node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    /// `steps` must be even and at least 2.
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "time horizon must be positive and finite, got {horizon}"
            )));
        }
        if steps < 2 || !steps.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "time grid needs an even step count >= 2, got {steps}"
            )));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of nodes, `steps + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.horizon / self.steps as f64
    }

    /// Index of the `t = 0` node.
    pub fn middle(&self) -> usize {
        self.steps / 2
    }

    /// Time of node `j`. The end nodes are exactly `-T` and `T`.
    pub fn node(&self, j: usize) -> f64 {
        if j == self.steps {
            self.horizon
        } else {
            -self.horizon + j as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |j| self.node(j))
    }
}

type FieldFn = dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync;

/// A deterministic vector field `f(x, t)` on a state space of fixed dimension.
#[derive(Clone)]
pub struct VectorFieldSpec {
    name: String,
    dim: usize,
    eval: Arc<FieldFn>,
}

impl fmt::Debug for VectorFieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorFieldSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl VectorFieldSpec {
    pub fn new<F>(name: impl Into<String>, dim: usize, eval: F) -> Self
    where
        F: Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim,
            eval: Arc::new(eval),
        }
    }

    /// Hamilton's equations for the saddle: `q̇ = λp`, `ṗ = λq`.
    pub fn saddle(lambda: f64) -> Self {
        Self::new("saddle", 2, move |x, _t, out| {
            out[0] = lambda * x[1];
            out[1] = lambda * x[0];
        })
    }

    /// Unit-frequency harmonic oscillator: `q̇ = p`, `ṗ = -q`.
    pub fn harmonic() -> Self {
        Self::new("harmonic", 2, |x, _t, out| {
            out[0] = x[1];
            out[1] = -x[0];
        })
    }

    pub fn zero(dim: usize) -> Self {
        Self::new("zero", dim, |_x, _t, out| out.fill(0.0))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        (self.eval)(x, t, out)
    }

    pub fn eval(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, t, &mut out);
        out
    }
}

pub fn saddle_vector_field(x: PhasePoint, params: &SaddleParams) -> (f64, f64) {
    (params.lambda * x.p, params.lambda * x.q)
}

pub fn saddle_energy(x: PhasePoint, params: &SaddleParams) -> f64 {
    0.5 * params.lambda * (x.p * x.p - x.q * x.q)
}

fn check_hyperbolic_arg(arg: f64) -> Result<()> {
    if !arg.is_finite() || arg.abs() > MAX_HYPERBOLIC_ARG {
        return Err(Error::Overflow(arg.abs()));
    }
    Ok(())
}

/// Closed-form saddle flow
/// `q(t) = q₀ cosh λt + p₀ sinh λt`, `p(t) = p₀ cosh λt + q₀ sinh λt`.
///
/// Evaluated in the eigenbasis, `q ± p` grow or decay as `e^{±λt}`, which
/// avoids the `cosh − sinh` cancellation near the stable manifold. Points on
/// `p = ±q` stay on it bit-for-bit.
pub fn saddle_flow(x0: PhasePoint, t: f64, params: &SaddleParams) -> Result<PhasePoint> {
    let arg = params.lambda * t;
    check_hyperbolic_arg(arg)?;
    Ok(propagate(x0, arg.exp(), (-arg).exp()))
}

#[inline]
fn propagate(x0: PhasePoint, grow: f64, decay: f64) -> PhasePoint {
    let u = 0.5 * (x0.q + x0.p) * grow;
    let s = 0.5 * (x0.q - x0.p) * decay;
    PhasePoint { q: u + s, p: u - s }
}

/// `e^{±λt_j}` on every node of a time grid, so that a classical trajectory
/// costs a handful of flops per node.
#[derive(Clone, Debug)]
pub struct SaddleFlowTable {
    grid: TimeGrid,
    grow: Vec<f64>,
    decay: Vec<f64>,
}

impl SaddleFlowTable {
    pub fn new(params: &SaddleParams, grid: &TimeGrid) -> Result<Self> {
        check_hyperbolic_arg(params.lambda * grid.horizon())?;
        let (grow, decay) = grid
            .nodes()
            .map(|t| {
                let arg = params.lambda * t;
                (arg.exp(), (-arg).exp())
            })
            .unzip();
        Ok(Self {
            grid: *grid,
            grow,
            decay,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn at(&self, x0: PhasePoint, j: usize) -> PhasePoint {
        propagate(x0, self.grow[j], self.decay[j])
    }

    pub fn trajectory(&self, x0: PhasePoint) -> impl Iterator<Item = PhasePoint> + '_ {
        (0..self.grid.len()).map(move |j| self.at(x0, j))
    }
}

/// Trajectory sampled on every node of a [`TimeGrid`], row-major by node.
#[derive(Clone, Debug)]
pub struct Trajectory {
    grid: TimeGrid,
    dim: usize,
    states: Vec<f64>,
}

impl Trajectory {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn state(&self, j: usize) -> &[f64] {
        &self.states[j * self.dim..(j + 1) * self.dim]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dim)
    }
}

/// Classical fixed-step RK4 over `[-T, T]`, started at `t0 = 0` (the middle
/// node) and run forward with `+h` and backward with `-h`.
pub fn rk4_integrate(x0: &[f64], field: &VectorFieldSpec, grid: &TimeGrid) -> Result<Trajectory> {
    let dim = field.dim();
    if x0.len() != dim {
        return Err(Error::DimensionMismatch {
            state: x0.len(),
            field: dim,
        });
    }
    let mid = grid.middle();
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { node: mid });
    }
    let h = grid.spacing();
    let mut states = vec![0.0; grid.len() * dim];
    states[mid * dim..(mid + 1) * dim].copy_from_slice(x0);

    let mut stepper = Rk4::new(dim);
    for (from, to, step) in (mid..grid.steps())
        .map(|j| (j, j + 1, h))
        .chain((1..=mid).rev().map(|j| (j, j - 1, -h)))
    {
        let (src, dst) = if to > from {
            let (a, b) = states.split_at_mut(to * dim);
            (&a[from * dim..], &mut b[..dim])
        } else {
            let (a, b) = states.split_at_mut(from * dim);
            (&b[..dim], &mut a[to * dim..(to + 1) * dim])
        };
        stepper.step(field, src, grid.node(from), step, dst);
        if dst.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { node: to });
        }
    }

    Ok(Trajectory {
        grid: *grid,
        dim,
        states,
    })
}

struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    #[allow(clippy::needless_range_loop)]
    fn step(&mut self, field: &VectorFieldSpec, x: &[f64], t: f64, h: f64, out: &mut [f64]) {
        let half = 0.5 * h;
        field.eval_into(x, t, &mut self.k1);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + half * self.k1[i];
        }
        field.eval_into(&self.tmp, t + half, &mut self.k2);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + half * self.k2[i];
        }
        field.eval_into(&self.tmp, t + half, &mut self.k3);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        field.eval_into(&self.tmp, t + h, &mut self.k4);
        for i in 0..x.len() {
            out[i] = x[i] + h / 6.0 * (self.k1[i] + 2.0 * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(lambda: f64) -> SaddleParams {
        SaddleParams::new(lambda, 1.0).unwrap()
    }

    #[test]
    fn vector_field_examples() {
        assert_eq!(saddle_vector_field(PhasePoint::new(1.0, 0.0), &params(3.0)), (0.0, 3.0));
        assert_eq!(saddle_vector_field(PhasePoint::new(0.0, 0.0), &params(7.5)), (0.0, 0.0));
        // tangent to p = q
        assert_eq!(saddle_vector_field(PhasePoint::new(1.0, 1.0), &params(2.0)), (2.0, 2.0));
    }

    #[test]
    fn energy_examples() {
        assert_eq!(saddle_energy(PhasePoint::new(1.0, 1.0), &params(3.0)), 0.0);
        assert_eq!(saddle_energy(PhasePoint::new(0.0, 1.0), &params(2.0)), 1.0);
    }

    #[test]
    fn flow_examples() {
        let x = saddle_flow(PhasePoint::new(1.0, 0.0), 0.0, &params(1.0)).unwrap();
        assert_eq!(x, PhasePoint::new(1.0, 0.0));

        let x = saddle_flow(PhasePoint::new(1.0, 0.0), 1.0, &params(1.0)).unwrap();
        assert_relative_eq!(x.q, 1.543_080_634_815_243_7, max_relative = 4e-16);
        assert_relative_eq!(x.p, 1.175_201_193_643_801_4, max_relative = 4e-16);

        for t in [-1.0, -0.1, 0.3, 2.0] {
            let x = saddle_flow(PhasePoint::new(1.0, -1.0), t, &params(3.0)).unwrap();
            let decay = (-3.0 * t).exp();
            assert_relative_eq!(x.q, decay, max_relative = 1e-13);
            assert_relative_eq!(x.p, -decay, max_relative = 1e-13);
        }
    }

    #[test]
    fn flow_rejects_overflow() {
        let err = saddle_flow(PhasePoint::new(1.0, 0.0), 300.0, &params(3.0)).unwrap_err();
        assert!(matches!(err, Error::Overflow(_)));
        assert!(saddle_flow(PhasePoint::new(1.0, 0.0), -233.0, &params(3.0)).is_ok());
    }

    #[test]
    fn params_validation() {
        assert!(SaddleParams::new(0.0, 1.0).is_err());
        assert!(SaddleParams::new(1.0, -1.0).is_err());
        assert!(SaddleParams::with_hbar(1.0, 1.0, -1e-3).is_err());
        assert!(SaddleParams::with_hbar(1.0, 1.0, 0.0).is_ok());
    }

    #[test]
    fn time_grid_nodes() {
        assert!(TimeGrid::new(1.0, 3).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
        let g = TimeGrid::new(8.0 / 3.0, 4096).unwrap();
        assert_eq!(g.node(0), -8.0 / 3.0);
        assert_eq!(g.node(4096), 8.0 / 3.0);
        assert_eq!(g.node(g.middle()), 0.0);
        assert_eq!(g.nodes().count(), 4097);
    }

    #[test]
    fn rk4_matches_closed_form() {
        let p = params(1.0);
        let grid = TimeGrid::new(1.0, 2000).unwrap();
        let traj = rk4_integrate(&[1.0, 0.0], &VectorFieldSpec::saddle(1.0), &grid).unwrap();
        for j in [0, 500, 1000, 1500, 2000] {
            let exact = saddle_flow(PhasePoint::new(1.0, 0.0), grid.node(j), &p).unwrap();
            let s = traj.state(j);
            assert!((s[0] - exact.q).abs() < 1e-8, "node {j}");
            assert!((s[1] - exact.p).abs() < 1e-8, "node {j}");
        }
    }

    #[test]
    fn rk4_zero_field_is_constant() {
        let grid = TimeGrid::new(2.0, 10).unwrap();
        let traj = rk4_integrate(&[0.3, -1.2], &VectorFieldSpec::zero(2), &grid).unwrap();
        assert!(traj.states().all(|s| s == [0.3, -1.2]));
    }

    #[test]
    fn rk4_harmonic_returns_after_one_period() {
        let grid = TimeGrid::new(std::f64::consts::TAU, 8000).unwrap();
        let traj = rk4_integrate(&[1.0, 0.0], &VectorFieldSpec::harmonic(), &grid).unwrap();
        for j in [0, grid.steps()] {
            let s = traj.state(j);
            assert!((s[0] - 1.0).abs() < 1e-7 && s[1].abs() < 1e-7, "{s:?}");
        }
    }

    #[test]
    fn rk4_fourth_order() {
        let p = params(2.0);
        let x0 = PhasePoint::new(0.7, -0.2);
        let exact = saddle_flow(x0, 1.0, &p).unwrap();
        let err = |steps| {
            let grid = TimeGrid::new(1.0, steps).unwrap();
            let traj = rk4_integrate(&[x0.q, x0.p], &VectorFieldSpec::saddle(2.0), &grid).unwrap();
            let s = traj.state(steps);
            (s[0] - exact.q).hypot(s[1] - exact.p)
        };
        let ratio = err(40) / err(80);
        assert!((ratio - 16.0).abs() <= 0.2 * 16.0, "ratio {ratio}");
    }

    #[test]
    fn rk4_reports_dimension_and_divergence() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let err = rk4_integrate(&[1.0], &VectorFieldSpec::saddle(1.0), &grid).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { state: 1, field: 2 }));

        let blowup = VectorFieldSpec::new("blowup", 1, |x, _t, out| out[0] = x[0] * x[0] * 1e300);
        let err = rk4_integrate(&[1.0], &blowup, &grid).unwrap_err();
        assert!(matches!(err, Error::Divergence { node: 6 }), "{err:?}");
    }

    #[test]
    fn rk4_conserves_energy() {
        let p = SaddleParams::new(3.0, 8.0 / 3.0).unwrap();
        let grid = TimeGrid::new(p.horizon, 5334).unwrap();
        let x0 = PhasePoint::new(0.4, -0.1);
        let h0 = saddle_energy(x0, &p);
        let traj = rk4_integrate(&[x0.q, x0.p], &VectorFieldSpec::saddle(p.lambda), &grid).unwrap();
        for s in traj.states() {
            let h = saddle_energy(PhasePoint::new(s[0], s[1]), &p);
            assert!((h - h0).abs() <= 1e-6 * h0.abs().max(1.0));
        }
    }

    proptest! {
        #[test]
        fn flow_group_property(q in -2.0..2.0f64, p in -2.0..2.0f64, s in -3.0..3.0f64, t in -3.0..3.0f64) {
            let par = params(3.0);
            let x0 = PhasePoint::new(q, p);
            let a = saddle_flow(saddle_flow(x0, s, &par).unwrap(), t, &par).unwrap();
            let b = saddle_flow(x0, s + t, &par).unwrap();
            let scale = q.abs().max(p.abs()).max(1e-300)
                * (3.0 * s).cosh() * (3.0 * t).cosh();
            prop_assert!((a.q - b.q).abs() <= 1e-12 * scale);
            prop_assert!((a.p - b.p).abs() <= 1e-12 * scale);
        }

        #[test]
        fn flow_conserves_energy(q in -2.0..2.0f64, p in -2.0..2.0f64, t in -2.5..2.5f64) {
            let par = params(3.0);
            let x0 = PhasePoint::new(q, p);
            let h0 = saddle_energy(x0, &par);
            let h = saddle_energy(saddle_flow(x0, t, &par).unwrap(), &par);
            // relative to the size of the terms whose difference is H
            let size = 0.5 * 3.0 * (q * q + p * p) * (6.0 * t).cosh();
            prop_assert!((h - h0).abs() <= 1e-10 * size.max(1.0));
        }

        #[test]
        fn manifolds_are_invariant(q in -5.0..5.0f64, t in -10.0..10.0f64) {
            let par = params(1.7);
            let on_unstable = saddle_flow(PhasePoint::new(q, q), t, &par).unwrap();
            prop_assert_eq!(on_unstable.q, on_unstable.p);
            let on_stable = saddle_flow(PhasePoint::new(q, -q), t, &par).unwrap();
            prop_assert_eq!(on_stable.q, -on_stable.p);
        }
    }
}
