//! Dirichlet sine eigenbasis of the fluctuation operator `-d²/dt² + λ²` on
//! `[-T, T]`, the per-mode thimble variances, and the closed-form quantities
//! built from them.
//!
//! Modes are `φₙ(t) = sin(kₙ(t + T)) / √T` with `kₙ = nπ / 2T`, `n = 1..=N`.
//! After rotating each coefficient onto its steepest-descent contour the
//! coefficients are real Gaussians with variance `ħλ / (kₙ² + λ²)`.

use std::f64::consts::PI;

use ndarray::Array2;

use crate::saddle::{SaddleParams, TimeGrid};

pub fn mode_wavenumber(n: usize, horizon: f64) -> f64 {
    n as f64 * PI / (2.0 * horizon)
}

pub fn mode_eval(n: usize, t: f64, horizon: f64) -> f64 {
    (mode_wavenumber(n, horizon) * (t + horizon)).sin() / horizon.sqrt()
}

pub fn mode_deriv(n: usize, t: f64, horizon: f64) -> f64 {
    let k = mode_wavenumber(n, horizon);
    k * (k * (t + horizon)).cos() / horizon.sqrt()
}

pub fn mode_second_deriv(n: usize, t: f64, horizon: f64) -> f64 {
    let k = mode_wavenumber(n, horizon);
    -k * k * mode_eval(n, t, horizon)
}

/// `ħλ / (kₙ² + λ²)`.
pub fn mode_variance(n: usize, params: &SaddleParams) -> f64 {
    let k = mode_wavenumber(n, params.horizon);
    params.hbar * params.lambda / (k * k + params.lambda * params.lambda)
}

/// Truncated eigenbasis: wavenumbers and variances for modes `1..=N`.
///
/// Arrays are 0-indexed, so `wavenumbers()[0]` is `k₁`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeBasis {
    params: SaddleParams,
    k: Vec<f64>,
    sigma2: Vec<f64>,
}

impl ModeBasis {
    pub fn new(n_modes: usize, params: &SaddleParams) -> Self {
        let k = (1..=n_modes).map(|n| mode_wavenumber(n, params.horizon)).collect();
        let sigma2 = (1..=n_modes).map(|n| mode_variance(n, params)).collect();
        Self {
            params: *params,
            k,
            sigma2,
        }
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    pub fn params(&self) -> &SaddleParams {
        &self.params
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    pub fn variances(&self) -> &[f64] {
        &self.sigma2
    }

    /// True when every thimble coefficient is identically zero.
    pub fn is_degenerate(&self) -> bool {
        self.is_empty() || self.params.hbar == 0.0
    }
}

/// `aₙ(t) = φ̇ₙ(t)/λ − φₙ(t)`: the contribution of mode `n` to the
/// fluctuation of `(p − q)`.
pub fn transverse_coeff(n: usize, t: f64, basis: &ModeBasis) -> f64 {
    let p = basis.params();
    mode_deriv(n, t, p.horizon) / p.lambda - mode_eval(n, t, p.horizon)
}

/// `⟨|δu(t)|²⟩ = ½ Σₙ σₙ² aₙ(t)²`.
pub fn closed_form_transverse_variance(t: f64, basis: &ModeBasis) -> f64 {
    0.5 * basis
        .variances()
        .iter()
        .enumerate()
        .map(|(i, s2)| {
            let a = transverse_coeff(i + 1, t, basis);
            s2 * a * a
        })
        .sum::<f64>()
}

/// Time-averaged manifold width `√(ħN / 4Tλ)`.
pub fn analytic_width(n_modes: usize, params: &SaddleParams) -> f64 {
    (params.hbar * n_modes as f64 / (4.0 * params.horizon * params.lambda)).sqrt()
}

/// `σ⁽¹⁾/σ⁽²⁾ = √(ħ₁λ₂T₂ / ħ₂λ₁T₁)` at equal mode cutoff; independent of N.
pub fn width_ratio(first: &SaddleParams, second: &SaddleParams) -> f64 {
    (first.hbar * second.lambda_horizon() / (second.hbar * first.lambda_horizon())).sqrt()
}

/// Real exponent of the rotated fluctuation weight,
/// `(1/2λ) Σ (kₙ² + λ²) yₙ²`. Thimble samples have density `∝ exp(-S/ħ)`.
pub fn fluctuation_action_thimble(y: &[f64], basis: &ModeBasis) -> f64 {
    debug_assert_eq!(y.len(), basis.len());
    let lambda = basis.params().lambda;
    basis
        .wavenumbers()
        .iter()
        .zip(y)
        .map(|(k, y)| (k * k + lambda * lambda) * y * y)
        .sum::<f64>()
        / (2.0 * lambda)
}

/// Per-node, per-mode quantity tabulated by [`mode_table`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeQuantity {
    /// `φₙ(tⱼ)`
    Value,
    /// `φ̇ₙ(tⱼ) / λ`
    DerivOverLambda,
    /// `aₙ(tⱼ)`
    Transverse,
}

/// `(M+1) × N` table of a mode quantity on the nodes of `grid`.
///
/// Phases are computed as `nπj/M` from integer indices so the Dirichlet
/// zeros at the grid ends are as sharp as `sin` allows.
pub fn mode_table(basis: &ModeBasis, grid: &TimeGrid, what: ModeQuantity) -> Array2<f64> {
    let lambda = basis.params().lambda;
    let norm = 1.0 / grid.horizon().sqrt();
    let steps = grid.steps() as f64;
    Array2::from_shape_fn((grid.len(), basis.len()), |(j, i)| {
        let n = (i + 1) as f64;
        let turns = (n * j as f64) % (2.0 * steps);
        let k = basis.wavenumbers()[i];
        let (mut s, c) = (PI * turns / steps).sin_cos();
        if turns % steps == 0.0 {
            s = 0.0;
        }
        match what {
            ModeQuantity::Value => norm * s,
            ModeQuantity::DerivOverLambda => norm * k / lambda * c,
            ModeQuantity::Transverse => norm * (k / lambda * c - s),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fig_params() -> SaddleParams {
        SaddleParams::new(3.0, 8.0 / 3.0).unwrap()
    }

    /// Composite 5-point Gauss–Legendre on `[a, b]`, independent of the
    /// uniform-grid trapezoid used by the crate.
    fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        const X: [f64; 5] = [
            0.0,
            -0.538_469_310_105_683_1,
            0.538_469_310_105_683_1,
            -0.906_179_845_938_664,
            0.906_179_845_938_664,
        ];
        const W: [f64; 5] = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
            0.236_926_885_056_189_1,
        ];
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|i| {
                let mid = a + (i as f64 + 0.5) * h;
                X.iter().zip(W).map(|(x, w)| w * f(mid + 0.5 * h * x)).sum::<f64>() * 0.5 * h
            })
            .sum()
    }

    #[test]
    fn wavenumber_examples() {
        assert_relative_eq!(mode_wavenumber(1, 8.0 / 3.0), 3.0 * PI / 16.0);
        assert_relative_eq!(mode_wavenumber(1, 8.0 / 3.0), 0.589_049, max_relative = 1e-6);
        assert_relative_eq!(mode_wavenumber(2, PI / 2.0), 2.0, max_relative = 1e-15);
    }

    #[test]
    fn mode_examples() {
        let t = 8.0 / 3.0;
        for n in 1..20 {
            assert_eq!(mode_eval(n, -t, t), 0.0);
            assert!(mode_eval(n, t, t).abs() < 1e-12);
        }
        assert_relative_eq!(mode_eval(1, 0.0, PI / 2.0), 0.797_884_560_802_865_4, max_relative = 1e-14);
    }

    #[test]
    fn orthonormal_by_gauss_legendre() {
        let t = 8.0 / 3.0;
        for n in 1..=6 {
            for m in 1..=6 {
                let g = gauss_legendre(|s| mode_eval(n, s, t) * mode_eval(m, s, t), -t, t, 400);
                let expected = if n == m { 1.0 } else { 0.0 };
                assert!((g - expected).abs() < 1e-8, "({n},{m}) -> {g}");
            }
        }
    }

    #[test]
    fn variance_examples() {
        let p = fig_params();
        assert_relative_eq!(mode_variance(1, &p), 0.320_959, max_relative = 2e-6);
        let big = mode_variance(10_000, &p);
        let k = mode_wavenumber(10_000, p.horizon);
        assert_relative_eq!(big, p.lambda / (k * k), max_relative = 1e-4);
        for n in 1..50 {
            let s = mode_variance(n, &p);
            let k = mode_wavenumber(n, p.horizon);
            assert!(s <= p.hbar / p.lambda && s <= p.hbar * p.lambda / (k * k));
        }
    }

    #[test]
    fn basis_is_monotone() {
        let b = ModeBasis::new(100, &fig_params());
        assert!(b.wavenumbers().windows(2).all(|w| w[1] > w[0]));
        assert!(b.variances().windows(2).all(|w| w[1] < w[0]));
        assert!(b.variances().iter().all(|&s| s > 0.0));
        assert!(ModeBasis::new(0, &fig_params()).is_degenerate());
    }

    #[test]
    fn transverse_coeff_boundary() {
        let p = fig_params();
        let b = ModeBasis::new(5, &p);
        for n in 1..=5 {
            let k = mode_wavenumber(n, p.horizon);
            assert_relative_eq!(
                transverse_coeff(n, -p.horizon, &b),
                k / (p.lambda * p.horizon.sqrt()),
                max_relative = 1e-15
            );
        }
    }

    #[test]
    fn transverse_time_average_lemma() {
        let p = fig_params();
        let b = ModeBasis::new(10, &p);
        let t = p.horizon;
        for n in [1, 2, 7, 10] {
            let k = mode_wavenumber(n, t);
            let avg = gauss_legendre(|s| transverse_coeff(n, s, &b).powi(2), -t, t, 400) / (2.0 * t);
            let expected = (k * k + 9.0) / (2.0 * t * 9.0);
            assert_relative_eq!(avg, expected, max_relative = 1e-10);
        }
        let avg1 = gauss_legendre(|s| transverse_coeff(1, s, &b).powi(2), -t, t, 400) / (2.0 * t);
        assert_relative_eq!(avg1, 0.194_729, max_relative = 5e-6);
    }

    #[test]
    fn closed_form_variance_examples() {
        let p = fig_params();
        assert_eq!(closed_form_transverse_variance(0.3, &ModeBasis::new(0, &p)), 0.0);
        let v = closed_form_transverse_variance(-p.horizon, &ModeBasis::new(1, &p));
        assert_relative_eq!(v, 0.002_320, max_relative = 5e-4);
        for n_modes in [1, 10, 100] {
            let b = ModeBasis::new(n_modes, &p);
            let t = p.horizon;
            let avg = gauss_legendre(|s| closed_form_transverse_variance(s, &b), -t, t, 40 * n_modes) / (2.0 * t);
            assert_relative_eq!(avg.sqrt(), analytic_width(n_modes, &p), max_relative = 1e-6);
        }
    }

    #[test]
    fn sturm_liouville_relation() {
        let p = fig_params();
        let l2 = p.lambda * p.lambda;
        for n in [1, 3, 50, 400] {
            let k = mode_wavenumber(n, p.horizon);
            for t in [-2.0, -0.4, 0.0, 1.1, 2.5] {
                let lhs = -mode_second_deriv(n, t, p.horizon) + l2 * mode_eval(n, t, p.horizon);
                let rhs = (k * k + l2) * mode_eval(n, t, p.horizon);
                assert!((lhs - rhs).abs() <= 1e-8 * (k * k + l2));
            }
        }
    }

    #[test]
    fn width_examples() {
        let p = fig_params();
        assert_eq!(analytic_width(800, &p), 5.0);
        assert_relative_eq!(analytic_width(10, &p), 0.559_017, max_relative = 1e-6);
        assert_eq!(analytic_width(0, &p), 0.0);
        let semiclassical = SaddleParams::with_hbar(3.0, 8.0 / 3.0, 1e-4).unwrap();
        assert_relative_eq!(analytic_width(800, &semiclassical), 0.05, max_relative = 1e-14);
    }

    #[test]
    fn sqrt_n_slope() {
        let p = fig_params();
        let (a, b) = (analytic_width(10, &p), analytic_width(1000, &p));
        assert_relative_eq!((b / a).ln() / 100f64.ln(), 0.5, max_relative = 1e-14);
    }

    #[test]
    fn ratio_examples() {
        let a = SaddleParams::new(3.0, 8.0 / 3.0).unwrap();
        let b = SaddleParams::new(2.0, 1.0).unwrap();
        assert_relative_eq!(width_ratio(&a, &b), 0.5, max_relative = 1e-15);
        assert_eq!(width_ratio(&a, &a), 1.0);
    }

    #[test]
    fn action_examples() {
        let p = fig_params();
        let b = ModeBasis::new(3, &p);
        assert_eq!(fluctuation_action_thimble(&[0.0; 3], &b), 0.0);
        let b1 = ModeBasis::new(1, &p);
        assert_relative_eq!(fluctuation_action_thimble(&[1.0], &b1), 1.557_831, max_relative = 1e-6);
        // E[S] = ħN/2 exactly when each y_n sits at its standard deviation
        let y: Vec<f64> = b.variances().iter().map(|s| s.sqrt()).collect();
        assert_relative_eq!(fluctuation_action_thimble(&y, &b), 1.5, max_relative = 1e-14);
    }

    #[test]
    fn mode_table_matches_pointwise() {
        let p = fig_params();
        let b = ModeBasis::new(7, &p);
        let grid = TimeGrid::new(p.horizon, 64).unwrap();
        let phi = mode_table(&b, &grid, ModeQuantity::Value);
        let dphi = mode_table(&b, &grid, ModeQuantity::DerivOverLambda);
        let a = mode_table(&b, &grid, ModeQuantity::Transverse);
        for j in 0..grid.len() {
            let t = grid.node(j);
            for n in 1..=7 {
                assert!((phi[[j, n - 1]] - mode_eval(n, t, p.horizon)).abs() < 1e-13);
                assert!((dphi[[j, n - 1]] - mode_deriv(n, t, p.horizon) / p.lambda).abs() < 1e-13);
                assert!((a[[j, n - 1]] - transverse_coeff(n, t, &b)).abs() < 1e-13);
            }
        }
        assert!(phi.row(0).iter().chain(phi.row(64).iter()).all(|v| v.abs() < 1e-12));
    }

    proptest! {
        #[test]
        fn ratio_is_width_quotient(n in 1usize..5000, l1 in 0.1..10.0f64, t1 in 0.1..10.0f64, l2 in 0.1..10.0f64, t2 in 0.1..10.0f64) {
            let a = SaddleParams::new(l1, t1).unwrap();
            let b = SaddleParams::new(l2, t2).unwrap();
            let q = analytic_width(n, &a) / analytic_width(n, &b);
            prop_assert!((q - width_ratio(&a, &b)).abs() <= 1e-13 * q);
        }
    }
}
