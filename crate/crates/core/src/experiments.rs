//! End-to-end pipelines: difference fields between quantum and classical
//! descriptors, the width-versus-cutoff scan, and the two-system width
//! ratio check.

use std::path::{Path, PathBuf};

use crate::classical::{ClassicalLd, FieldKind, FieldMeta, GridSpec, LdField, QuadratureRule};
use crate::error::{Error, Result};
use crate::io::{ensure_dir, write_csv, write_grid_file, Cell, Manifest, Table, GRID_FORMAT_VERSION};
use crate::saddle::SaddleParams;
use crate::spectrum::{analytic_width, width_ratio};
use crate::thimble::{mc_width_estimate, stable_coordinate, unstable_coordinate, SampleSharing, SamplerConfig, ThimbleSampler};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Normalization {
    /// Divide by the largest absolute entry.
    #[default]
    MaxAbs,
    None,
    /// Subtract the mean and divide by the standard deviation.
    ZScore,
}

impl Normalization {
    pub fn name(self) -> &'static str {
        match self {
            Normalization::MaxAbs => "max_abs",
            Normalization::None => "none",
            Normalization::ZScore => "zscore",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "max_abs" => Some(Normalization::MaxAbs),
            "none" => Some(Normalization::None),
            "zscore" => Some(Normalization::ZScore),
            _ => None,
        }
    }

    fn apply(self, values: &mut [f64]) {
        match self {
            Normalization::None => {}
            Normalization::MaxAbs => {
                let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if max > 0.0 {
                    values.iter_mut().for_each(|v| *v /= max);
                }
            }
            Normalization::ZScore => {
                let n = values.len() as f64;
                let mean = values.iter().sum::<f64>() / n;
                let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                values
                    .iter_mut()
                    .for_each(|v| *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 });
            }
        }
    }
}

fn same_if_known<T: PartialEq + std::fmt::Debug>(a: Option<T>, b: Option<T>, what: &str) -> Result<()> {
    match (a, b) {
        (Some(a), Some(b)) if a != b => Err(Error::FieldMismatch(format!("{what} differs: {a:?} vs {b:?}"))),
        _ => Ok(()),
    }
}

/// `normalize(quantum − classical)`.
pub fn difference_field(quantum: &LdField, classical: &LdField, normalization: Normalization) -> Result<LdField> {
    if quantum.grid != classical.grid {
        return Err(Error::FieldMismatch(format!(
            "grids differ: {:?} vs {:?}",
            quantum.grid, classical.grid
        )));
    }
    same_if_known(quantum.meta.lambda, classical.meta.lambda, "lambda")?;
    same_if_known(quantum.meta.horizon, classical.meta.horizon, "time horizon")?;
    let mut values: Vec<f64> = quantum.values.iter().zip(&classical.values).map(|(q, c)| q - c).collect();
    normalization.apply(&mut values);
    let meta = FieldMeta {
        kind: FieldKind::Difference,
        lambda: quantum.meta.lambda.or(classical.meta.lambda),
        horizon: quantum.meta.horizon.or(classical.meta.horizon),
        ..quantum.meta
    };
    LdField::new(quantum.grid, values, meta)
}

/// Mean difference-field values near the manifolds and far from both.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandContrast {
    /// Mean over nodes with `|u_unstable| < band`.
    pub unstable_band: f64,
    /// Mean over nodes with `|u_stable| < band`.
    pub stable_band: f64,
    /// Mean over nodes with `|u| > far` for both manifolds.
    pub far: f64,
    pub band_nodes: (usize, usize),
    pub far_nodes: usize,
}

/// Averages a field inside the bands `|u| < band` around `p = q` and
/// `p = −q`, and over the region at distance greater than `far` from both.
pub fn manifold_band_contrast(field: &LdField, band: f64, far: f64) -> Result<BandContrast> {
    let mut sums = [0.0; 3];
    let mut counts = [0usize; 3];
    for (idx, v) in field.values.iter().enumerate() {
        let (iq, ip) = field.grid.coords(idx);
        let x = field.grid.point(iq, ip);
        let (uu, us) = (unstable_coordinate(x).abs(), stable_coordinate(x).abs());
        if uu < band {
            sums[0] += v;
            counts[0] += 1;
        }
        if us < band {
            sums[1] += v;
            counts[1] += 1;
        }
        if uu > far && us > far {
            sums[2] += v;
            counts[2] += 1;
        }
    }
    if counts.contains(&0) {
        return Err(Error::InvalidParameter(format!(
            "grid does not cover every region (node counts {counts:?})"
        )));
    }
    Ok(BandContrast {
        unstable_band: sums[0] / counts[0] as f64,
        stable_band: sums[1] / counts[1] as f64,
        far: sums[2] / counts[2] as f64,
        band_nodes: (counts[0], counts[1]),
        far_nodes: counts[2],
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WidthScanRow {
    pub modes: usize,
    pub sigma_mc: f64,
    pub sigma_std_error: f64,
    pub sigma_theory: f64,
    pub rel_err: f64,
}

pub const WIDTH_SCAN_HEADER: [&str; 5] = ["N", "sigma_mc", "sigma_std_error", "sigma_theory", "rel_err"];

fn check_modes(list: &[usize]) -> Result<()> {
    if list.is_empty() {
        return Err(Error::InvalidParameter("mode list is empty".into()));
    }
    if list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(format!("mode list must be strictly ascending: {list:?}")));
    }
    Ok(())
}

fn with_modes(base: &SamplerConfig, modes: usize) -> SamplerConfig {
    SamplerConfig { modes, ..*base }
}

/// Monte Carlo and analytic widths for each cutoff. The `modes` field of
/// `sampler` is ignored.
pub fn width_scan(modes: &[usize], params: &SaddleParams, sampler: &SamplerConfig) -> Result<Vec<WidthScanRow>> {
    check_modes(modes)?;
    modes
        .iter()
        .map(|&n| {
            let est = mc_width_estimate(params, &with_modes(sampler, n))?;
            let theory = analytic_width(n, params);
            Ok(WidthScanRow {
                modes: n,
                sigma_mc: est.sigma_rms,
                sigma_std_error: est.std_error,
                sigma_theory: theory,
                rel_err: (est.sigma_rms - theory).abs() / theory,
            })
        })
        .collect()
}

pub fn width_scan_table(rows: &[WidthScanRow]) -> Table {
    let mut t = Table::new(WIDTH_SCAN_HEADER);
    for r in rows {
        t.rows.push(vec![
            r.modes.into(),
            r.sigma_mc.into(),
            r.sigma_std_error.into(),
            r.sigma_theory.into(),
            r.rel_err.into(),
        ]);
    }
    t
}

/// Least-squares slope of `ln σ_mc` against `ln N`.
pub fn log_log_slope(rows: &[WidthScanRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| ((r.modes as f64).ln(), r.sigma_mc.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatioRow {
    pub modes: usize,
    pub mc_ratio: f64,
    pub theory_ratio: f64,
    pub rel_err: f64,
}

pub const RATIO_HEADER: [&str; 4] = ["N", "mc_ratio", "theory_ratio", "rel_err"];

/// Width ratio of two systems at equal cutoff. Both systems use the same
/// seed, so their samples share the underlying standard normals.
pub fn ratio_check(
    first: &SaddleParams,
    second: &SaddleParams,
    modes: &[usize],
    sampler: &SamplerConfig,
) -> Result<Vec<RatioRow>> {
    check_modes(modes)?;
    let theory = width_ratio(first, second);
    modes
        .iter()
        .map(|&n| {
            let config = with_modes(sampler, n);
            let a = mc_width_estimate(first, &config)?.sigma_rms;
            let b = mc_width_estimate(second, &config)?.sigma_rms;
            let mc = a / b;
            Ok(RatioRow {
                modes: n,
                mc_ratio: mc,
                theory_ratio: theory,
                rel_err: (mc - theory).abs() / theory,
            })
        })
        .collect()
}

pub fn ratio_table(rows: &[RatioRow]) -> Table {
    let mut t = Table::new(RATIO_HEADER);
    for r in rows {
        t.rows.push(vec![r.modes.into(), r.mc_ratio.into(), r.theory_ratio.into(), r.rel_err.into()]);
    }
    t
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Paper,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::Paper => "paper",
        }
    }
}

/// Saddle rate and horizon used by both figure presets (`λT = 8`).
pub fn figure_params() -> SaddleParams {
    SaddleParams {
        lambda: 3.0,
        horizon: 8.0 / 3.0,
        hbar: 1.0,
    }
}

pub const DEFAULT_SEED: u64 = 20_261_016;

/// Inputs of the difference-field pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffFieldConfig {
    pub grid: GridSpec,
    pub params: SaddleParams,
    pub modes: Vec<usize>,
    /// Sampling settings shared by every mode count; `modes` is overridden
    /// per run and `time_steps`, when unset, resolves to the finest default
    /// over all mode counts so that every field shares one time grid.
    pub sampler: SamplerConfig,
    pub normalization: Normalization,
}

impl DiffFieldConfig {
    pub fn preset(preset: Preset) -> Self {
        let (n, modes, samples) = match preset {
            Preset::Desk => (64, vec![10], 200),
            Preset::Paper => (400, vec![10, 800], 1200),
        };
        Self {
            grid: GridSpec {
                q_min: -3.0,
                q_max: 3.0,
                p_min: -3.0,
                p_max: 3.0,
                nq: n,
                np: n,
            },
            params: figure_params(),
            modes,
            sampler: SamplerConfig::new(0, samples, DEFAULT_SEED),
            normalization: Normalization::MaxAbs,
        }
    }

    pub fn time_steps(&self) -> usize {
        self.sampler.time_steps.unwrap_or_else(|| {
            self.modes
                .iter()
                .map(|&n| crate::classical::default_time_steps(n))
                .max()
                .unwrap_or(crate::classical::MIN_TIME_STEPS)
        })
    }

    fn resolved_sampler(&self, modes: usize) -> SamplerConfig {
        SamplerConfig {
            modes,
            time_steps: Some(self.time_steps()),
            ..self.sampler
        }
    }

    pub fn to_manifest(&self) -> Manifest {
        let mut m = Manifest::new();
        m.set("pipeline", "fig1");
        m.set("grid_format_version", GRID_FORMAT_VERSION);
        write_params(&mut m, "", &self.params);
        m.set("grid.nq", self.grid.nq);
        m.set("grid.np", self.grid.np);
        m.set("grid.q_min", fmt_f64(self.grid.q_min));
        m.set("grid.q_max", fmt_f64(self.grid.q_max));
        m.set("grid.p_min", fmt_f64(self.grid.p_min));
        m.set("grid.p_max", fmt_f64(self.grid.p_max));
        m.set("modes", join(&self.modes));
        write_sampler(&mut m, &self.sampler);
        m.set("time_steps", self.time_steps());
        m.set("normalization", self.normalization.name());
        m
    }

    /// Rebuilds the configuration recorded by [`DiffFieldConfig::to_manifest`].
    pub fn from_manifest(m: &Manifest) -> Result<Self> {
        let grid = GridSpec::new(
            (parse_key(m, "grid.q_min")?, parse_key(m, "grid.q_max")?),
            (parse_key(m, "grid.p_min")?, parse_key(m, "grid.p_max")?),
            parse_key(m, "grid.nq")?,
            parse_key(m, "grid.np")?,
        )?;
        let mut sampler = read_sampler(m)?;
        sampler.time_steps = Some(parse_key(m, "time_steps")?);
        let normalization = Normalization::parse(key(m, "normalization")?)
            .ok_or_else(|| Error::InvalidParameter("manifest: unknown normalization".into()))?;
        Ok(Self {
            grid,
            params: read_params(m, "")?,
            modes: parse_list(key(m, "modes")?)?,
            sampler,
            normalization,
        })
    }
}

/// Paths written by [`fig1_pipeline`].
#[derive(Clone, Debug, PartialEq)]
pub struct Fig1Output {
    pub classical: PathBuf,
    pub quantum: Vec<PathBuf>,
    pub difference: Vec<PathBuf>,
    pub manifest: PathBuf,
}

/// Classical field once, then one quantum and one difference field per
/// mode count, all on the same time grid. Files are written only after all
/// fields are computed.
pub fn fig1_pipeline(config: &DiffFieldConfig, out_dir: &Path) -> Result<Fig1Output> {
    check_modes(&config.modes)?;
    config.sampler.validate()?;
    let quad = config.resolved_sampler(0).quadrature(&config.params)?;
    let classical = ClassicalLd::new(&config.params, quad)?.field(&config.grid)?;
    let mut fields = Vec::with_capacity(config.modes.len());
    for &n in &config.modes {
        let quantum = ThimbleSampler::new(&config.params, &config.resolved_sampler(n))?.field(&config.grid)?;
        let diff = difference_field(&quantum, &classical, config.normalization)?;
        fields.push((n, quantum, diff));
    }

    ensure_dir(out_dir)?;
    let mut manifest = config.to_manifest();
    let classical_path = out_dir.join("classical.ldg");
    write_grid_file(&classical, &classical_path)?;
    manifest.add_file("classical", &classical_path)?;
    let mut out = Fig1Output {
        classical: classical_path,
        quantum: Vec::new(),
        difference: Vec::new(),
        manifest: out_dir.join("manifest.txt"),
    };
    for (n, quantum, diff) in fields {
        let qp = out_dir.join(format!("quantum_N{n}.ldg"));
        let dp = out_dir.join(format!("diff_N{n}.ldg"));
        write_grid_file(&quantum, &qp)?;
        write_grid_file(&diff, &dp)?;
        manifest.add_file(&format!("quantum_N{n}"), &qp)?;
        manifest.add_file(&format!("diff_N{n}"), &dp)?;
        out.quantum.push(qp);
        out.difference.push(dp);
    }
    manifest.write(&out.manifest)?;
    Ok(out)
}

/// Inputs of the width-scan pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct WidthScanConfig {
    pub params: SaddleParams,
    pub modes: Vec<usize>,
    pub sampler: SamplerConfig,
}

impl WidthScanConfig {
    pub fn preset(preset: Preset) -> Self {
        let samples = match preset {
            Preset::Desk => 200,
            Preset::Paper => 1200,
        };
        Self {
            params: figure_params(),
            modes: vec![10, 25, 50, 100, 200, 400, 800],
            sampler: SamplerConfig::new(0, samples, DEFAULT_SEED),
        }
    }

    pub fn to_manifest(&self) -> Manifest {
        let mut m = Manifest::new();
        m.set("pipeline", "fig2");
        write_params(&mut m, "", &self.params);
        m.set("modes", join(&self.modes));
        write_sampler(&mut m, &self.sampler);
        m.set(
            "time_steps",
            self.sampler
                .time_steps
                .map_or_else(|| "auto".to_string(), |s| s.to_string()),
        );
        m
    }

    pub fn from_manifest(m: &Manifest) -> Result<Self> {
        let mut sampler = read_sampler(m)?;
        sampler.time_steps = match key(m, "time_steps")? {
            "auto" => None,
            s => Some(parse_value(s, "time_steps")?),
        };
        Ok(Self {
            params: read_params(m, "")?,
            modes: parse_list(key(m, "modes")?)?,
            sampler,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fig2Output {
    pub rows: Vec<WidthScanRow>,
    pub csv: PathBuf,
    pub manifest: PathBuf,
}

pub fn fig2_pipeline(config: &WidthScanConfig, out_dir: &Path) -> Result<Fig2Output> {
    let rows = width_scan(&config.modes, &config.params, &config.sampler)?;
    ensure_dir(out_dir)?;
    let csv = out_dir.join("width_scan.csv");
    write_csv(&width_scan_table(&rows), &csv)?;
    let mut manifest = config.to_manifest();
    manifest.add_file("width_scan", &csv)?;
    let manifest_path = out_dir.join("manifest.txt");
    manifest.write(&manifest_path)?;
    Ok(Fig2Output {
        rows,
        csv,
        manifest: manifest_path,
    })
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn join(list: &[usize]) -> String {
    list.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
}

fn key<'a>(m: &'a Manifest, k: &str) -> Result<&'a str> {
    m.get(k)
        .ok_or_else(|| Error::InvalidParameter(format!("manifest is missing key {k}")))
}

fn parse_value<T: std::str::FromStr>(s: &str, k: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::InvalidParameter(format!("manifest key {k}: cannot parse {s:?}")))
}

fn parse_key<T: std::str::FromStr>(m: &Manifest, k: &str) -> Result<T> {
    parse_value(key(m, k)?, k)
}

fn parse_list(s: &str) -> Result<Vec<usize>> {
    s.split(',').map(|v| parse_value(v.trim(), "modes")).collect()
}

fn write_params(m: &mut Manifest, prefix: &str, p: &SaddleParams) {
    m.set(&format!("{prefix}lambda"), fmt_f64(p.lambda));
    m.set(&format!("{prefix}time_horizon"), fmt_f64(p.horizon));
    m.set(&format!("{prefix}hbar"), fmt_f64(p.hbar));
}

fn read_params(m: &Manifest, prefix: &str) -> Result<SaddleParams> {
    SaddleParams::with_hbar(
        parse_key(m, &format!("{prefix}lambda"))?,
        parse_key(m, &format!("{prefix}time_horizon"))?,
        parse_key(m, &format!("{prefix}hbar"))?,
    )
}

fn write_sampler(m: &mut Manifest, s: &SamplerConfig) {
    m.set("samples", s.samples);
    m.set("seed", s.seed);
    m.set("sharing", s.sharing.name());
    m.set("antithetic", if s.antithetic { "on" } else { "off" });
    m.set(
        "quadrature",
        match s.rule {
            QuadratureRule::Trapezoid => "trapezoid",
            QuadratureRule::Simpson => "simpson",
        },
    );
}

fn read_sampler(m: &Manifest) -> Result<SamplerConfig> {
    let sharing = match key(m, "sharing")? {
        "shared" => SampleSharing::Shared,
        "per-point" => SampleSharing::PerPoint,
        other => return Err(Error::InvalidParameter(format!("manifest: unknown sharing {other:?}"))),
    };
    let antithetic = match key(m, "antithetic")? {
        "on" => true,
        "off" => false,
        other => return Err(Error::InvalidParameter(format!("manifest: bad antithetic flag {other:?}"))),
    };
    let rule = match key(m, "quadrature")? {
        "trapezoid" => QuadratureRule::Trapezoid,
        "simpson" => QuadratureRule::Simpson,
        other => return Err(Error::InvalidParameter(format!("manifest: unknown quadrature {other:?}"))),
    };
    Ok(SamplerConfig {
        modes: 0,
        samples: parse_key(m, "samples")?,
        seed: parse_key(m, "seed")?,
        sharing,
        antithetic,
        time_steps: None,
        rule,
    })
}

/// Flattens ratio-check rows for CSV export, including both parameter sets.
pub fn ratio_manifest(first: &SaddleParams, second: &SaddleParams, modes: &[usize], sampler: &SamplerConfig) -> Manifest {
    let mut m = Manifest::new();
    m.set("pipeline", "ratio-check");
    write_params(&mut m, "system1.", first);
    write_params(&mut m, "system2.", second);
    m.set("modes", join(modes));
    write_sampler(&mut m, sampler);
    m
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::classical_ld_field;
    use crate::io::{read_csv, read_grid_file, sha256_file};
    use crate::thimble::quantum_ld_field;
    use approx::assert_relative_eq;

    fn small_field(values: Vec<f64>, kind: FieldKind) -> LdField {
        LdField::new(GridSpec::unit_square(2, 2).unwrap(), values, FieldMeta::bare(kind)).unwrap()
    }

    #[test]
    fn normalizations() {
        let q = small_field(vec![1.0, 2.0, 3.0, 5.0], FieldKind::Quantum);
        let c = small_field(vec![1.0, 1.0, 1.0, 1.0], FieldKind::Classical);
        let d = difference_field(&q, &c, Normalization::None).unwrap();
        assert_eq!(d.values, [0.0, 1.0, 2.0, 4.0]);
        assert_eq!(d.kind(), FieldKind::Difference);
        let d = difference_field(&q, &c, Normalization::MaxAbs).unwrap();
        assert_eq!(d.values, [0.0, 0.25, 0.5, 1.0]);
        let d = difference_field(&q, &c, Normalization::ZScore).unwrap();
        assert_relative_eq!(d.values.iter().sum::<f64>(), 0.0, epsilon = 1e-15);
        assert_relative_eq!(d.values.iter().map(|v| v * v).sum::<f64>() / 4.0, 1.0, max_relative = 1e-14);
        let zero = difference_field(&c, &c, Normalization::MaxAbs).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn difference_requires_matching_grids() {
        let a = small_field(vec![0.0; 4], FieldKind::Quantum);
        let grid = GridSpec::new((-1.0, 1.0), (-2.0, 1.0), 2, 2).unwrap();
        let b = LdField::new(grid, vec![0.0; 4], FieldMeta::bare(FieldKind::Classical)).unwrap();
        assert!(matches!(difference_field(&a, &b, Normalization::None), Err(Error::FieldMismatch(_))));
        let mut c = small_field(vec![0.0; 4], FieldKind::Classical);
        c.meta.lambda = Some(2.0);
        let mut a2 = a.clone();
        a2.meta.lambda = Some(3.0);
        assert!(difference_field(&a2, &c, Normalization::None).is_err());
    }

    #[test]
    fn zero_modes_give_zero_difference() {
        let p = figure_params();
        let grid = GridSpec::unit_square(4, 4).unwrap();
        let config = SamplerConfig::new(0, 2, 1);
        let q = quantum_ld_field(&grid, &p, &config).unwrap();
        let c = classical_ld_field(&grid, &p, &config.quadrature(&p).unwrap()).unwrap();
        let d = difference_field(&q, &c, Normalization::MaxAbs).unwrap();
        assert!(d.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn width_scan_rows() {
        let p = figure_params();
        let rows = width_scan(&[10, 40], &p, &SamplerConfig::new(0, 400, 3)).unwrap();
        assert_eq!(rows.len(), 2);
        assert_relative_eq!(rows[0].sigma_theory, (10.0f64 / 32.0).sqrt(), max_relative = 1e-15);
        for r in &rows {
            assert_eq!(r.rel_err, (r.sigma_mc - r.sigma_theory).abs() / r.sigma_theory);
            assert!(r.rel_err < 0.05);
        }
        assert!(width_scan(&[], &p, &SamplerConfig::new(0, 2, 3)).is_err());
        assert!(width_scan(&[20, 10], &p, &SamplerConfig::new(0, 2, 3)).is_err());
    }

    #[test]
    fn slope_of_exact_law() {
        let rows: Vec<WidthScanRow> = [10usize, 100, 1000]
            .iter()
            .map(|&n| WidthScanRow {
                modes: n,
                sigma_mc: (n as f64 / 32.0).sqrt(),
                sigma_std_error: 0.0,
                sigma_theory: 0.0,
                rel_err: 0.0,
            })
            .collect();
        assert_relative_eq!(log_log_slope(&rows), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn ratio_of_identical_systems_is_one() {
        let p = figure_params();
        let rows = ratio_check(&p, &p, &[10, 20], &SamplerConfig::new(0, 20, 3)).unwrap();
        for r in rows {
            assert_eq!(r.theory_ratio, 1.0);
            assert_eq!(r.mc_ratio, 1.0);
        }
    }

    #[test]
    fn ratio_theory_column_is_constant() {
        let a = figure_params();
        let b = SaddleParams::new(2.0, 1.0).unwrap();
        let rows = ratio_check(&a, &b, &[10, 30], &SamplerConfig::new(0, 100, 3)).unwrap();
        assert!(rows.iter().all(|r| r.theory_ratio == 0.5));
    }

    #[test]
    fn band_contrast_regions() {
        let grid = GridSpec::new((-3.0, 3.0), (-3.0, 3.0), 31, 31).unwrap();
        // value 1 near either diagonal, 0 elsewhere
        let values = (0..grid.len())
            .map(|i| {
                let (iq, ip) = grid.coords(i);
                let x = grid.point(iq, ip);
                if unstable_coordinate(x).abs() < 0.3 || stable_coordinate(x).abs() < 0.3 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let f = LdField::new(grid, values, FieldMeta::bare(FieldKind::Difference)).unwrap();
        let c = manifold_band_contrast(&f, 0.3, 1.0).unwrap();
        assert_eq!((c.unstable_band, c.stable_band, c.far), (1.0, 1.0, 0.0));
        assert!(manifold_band_contrast(&f, 0.3, 10.0).is_err());
    }

    #[test]
    fn fig1_small_run_round_trips_through_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = DiffFieldConfig::preset(Preset::Desk);
        config.grid.nq = 6;
        config.grid.np = 5;
        config.modes = vec![3, 6];
        config.sampler.samples = 8;
        config.sampler.time_steps = Some(256);
        let out = fig1_pipeline(&config, dir.path()).unwrap();
        assert_eq!(out.quantum.len(), 2);
        let diff = read_grid_file(&out.difference[1]).unwrap();
        assert_eq!(diff.kind(), FieldKind::Difference);
        assert_eq!(diff.values.iter().fold(0.0f64, |m, v| m.max(v.abs())), 1.0);

        let manifest = Manifest::read(&out.manifest).unwrap();
        assert_eq!(manifest.get("modes"), Some("3,6"));
        let rebuilt = DiffFieldConfig::from_manifest(&manifest).unwrap();
        assert_eq!(rebuilt, config);
        let again = tempfile::tempdir().unwrap();
        let out2 = fig1_pipeline(&rebuilt, again.path()).unwrap();
        for (a, b) in [(&out.classical, &out2.classical), (&out.difference[0], &out2.difference[0])] {
            assert_eq!(sha256_file(a).unwrap(), sha256_file(b).unwrap());
        }
        assert_eq!(
            manifest.get("sha256.diff_N6").unwrap(),
            sha256_file(&out2.difference[1]).unwrap()
        );
    }

    #[test]
    fn fig2_small_run() {
        let dir = tempfile::tempdir().unwrap();
        let config = WidthScanConfig {
            modes: vec![5, 10],
            sampler: SamplerConfig::new(0, 40, 9),
            ..WidthScanConfig::preset(Preset::Desk)
        };
        let out = fig2_pipeline(&config, dir.path()).unwrap();
        let (header, rows) = read_csv(&out.csv).unwrap();
        assert_eq!(header, WIDTH_SCAN_HEADER);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1][3].parse::<f64>().unwrap(), out.rows[1].sigma_theory);
        let rebuilt = WidthScanConfig::from_manifest(&Manifest::read(&out.manifest).unwrap()).unwrap();
        assert_eq!(rebuilt, config);

        let empty = WidthScanConfig {
            modes: vec![],
            ..config
        };
        assert!(fig2_pipeline(&empty, dir.path()).is_err());
    }
}
