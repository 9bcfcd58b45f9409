//! Besov and Chemin-Lerner norms, and numerical verifiers for the embedding,
//! interpolation, product and composition inequalities.
//!
//! Homogeneous norms on the torus exclude the mean mode and truncate the block
//! sum to the resolvable range; both facts are reported in [`BesovNorm`].
//! Inequalities with implicit constants pass when the fitted constant is bounded
//! by the ceiling and stable across seed batches; inequalities with explicit
//! constants (monotonicity, `L^1` embedding, `B^0_{2,1}` embedding, Bernstein)
//! are checked against those constants directly.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::littlewood_paley::{
    bernstein_block_ratio, BlockTables, DyadicCutoffs, INNER_RADIUS, OUTER_RADIUS,
};
use crate::sampling::{self, FieldKind};
use crate::spectral::{
    forward_transform, fractional_derivative, inverse_unchecked, GridSpec, RealField,
    SpectralField,
};
use crate::stats::{linear_fit, spread};

/// An exponent in `[1, inf]`; serialized as a number or the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinite,
}

impl Exponent {
    pub fn value(&self) -> f64 {
        match self {
            Exponent::Finite(v) => *v,
            Exponent::Infinite => f64::INFINITY,
        }
    }

    /// `1 / exponent`, zero at infinity.
    pub fn reciprocal(&self) -> f64 {
        match self {
            Exponent::Finite(v) => 1.0 / v,
            Exponent::Infinite => 0.0,
        }
    }
}

impl From<f64> for Exponent {
    fn from(v: f64) -> Self {
        if v.is_infinite() {
            Exponent::Infinite
        } else {
            Exponent::Finite(v)
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(v) => write!(f, "{v}"),
            Exponent::Infinite => write!(f, "inf"),
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(v) => s.serialize_f64(*v),
            Exponent::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Exponent::Finite(v)),
            Raw::Text(t) if t == "inf" || t == "infinity" => Ok(Exponent::Infinite),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("bad exponent {t:?}"))),
        }
    }
}

/// Parameters `(s, p, r)` of a Besov norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesovParams {
    pub s: f64,
    pub p: Exponent,
    pub r: Exponent,
    pub homogeneous: bool,
}

impl BesovParams {
    pub fn new(s: f64, p: f64, r: f64, homogeneous: bool) -> Result<Self> {
        let params = Self {
            s,
            p: p.into(),
            r: r.into(),
            homogeneous,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn homogeneous(s: f64, p: f64, r: f64) -> Result<Self> {
        Self::new(s, p, r, true)
    }

    pub fn inhomogeneous(s: f64, p: f64, r: f64) -> Result<Self> {
        Self::new(s, p, r, false)
    }

    pub fn validate(&self) -> Result<()> {
        let p_ok = matches!(self.p, Exponent::Infinite)
            || matches!(self.p, Exponent::Finite(v) if v == 1.0 || v == 2.0);
        if !p_ok {
            return Err(Error::InvalidInput(format!(
                "integrability exponent p must be 1, 2 or inf, got {}",
                self.p
            )));
        }
        if let Exponent::Finite(r) = self.r {
            if !(r >= 1.0) {
                return Err(Error::InvalidInput(format!(
                    "summation exponent r must lie in [1, inf], got {r}"
                )));
            }
        }
        if !self.s.is_finite() {
            return Err(Error::InvalidInput("regularity index must be finite".into()));
        }
        Ok(())
    }
}

/// A Besov norm value with the truncation it was computed under.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesovNorm {
    pub value: f64,
    pub j_min: i32,
    pub j_max: i32,
    /// `L^2` mass of the mean mode left out of a homogeneous norm.
    pub excluded_mean: f64,
}

/// `||block||_{L^p}` for block `j`.
pub fn block_lp_norm(
    field: &SpectralField,
    j: i32,
    homogeneous: bool,
    p: Exponent,
    tables: &BlockTables,
) -> Result<f64> {
    match p {
        Exponent::Finite(2.0) => tables.block_l2_norm(field, j, homogeneous),
        _ => {
            let b = tables.block(field, j, homogeneous)?;
            Ok(inverse_unchecked(&b).lp_norm(p.value()))
        }
    }
}

fn block_indices(params: &BesovParams, tables: &BlockTables) -> Vec<i32> {
    if params.homogeneous {
        tables.range().iter().collect()
    } else {
        tables.inhomogeneous_indices().collect()
    }
}

/// `l^r` aggregate of a sequence of nonnegative terms.
pub fn lr_aggregate(terms: impl IntoIterator<Item = f64>, r: Exponent) -> f64 {
    match r {
        Exponent::Infinite => terms.into_iter().fold(0.0, f64::max),
        Exponent::Finite(1.0) => terms.into_iter().sum(),
        Exponent::Finite(r) => terms.into_iter().map(|t| t.powf(r)).sum::<f64>().powf(1.0 / r),
    }
}

/// Weighted block norms `2^{js} ||Delta_j f||_{L^p}` in block order.
pub fn weighted_block_norms(
    field: &SpectralField,
    params: &BesovParams,
    tables: &BlockTables,
) -> Result<Vec<(i32, f64)>> {
    params.validate()?;
    if field.grid().num_points() != tables.grid().num_points()
        || field.grid().box_length() != tables.grid().box_length()
    {
        return Err(Error::InvalidInput("field and block tables use different grids".into()));
    }
    block_indices(params, tables)
        .into_iter()
        .map(|j| {
            let b = block_lp_norm(field, j, params.homogeneous, params.p, tables)?;
            Ok((j, 2f64.powi(j).powf(params.s) * b))
        })
        .collect()
}

/// Besov norm of a field.
pub fn besov_norm(
    field: &SpectralField,
    params: &BesovParams,
    tables: &BlockTables,
) -> Result<BesovNorm> {
    let range = tables.range();
    if range.is_empty() {
        return Err(Error::InvalidInput("empty block range".into()));
    }
    let terms = weighted_block_norms(field, params, tables)?;
    let value = lr_aggregate(terms.iter().map(|t| t.1), params.r);
    let excluded_mean = if params.homogeneous {
        let mean: f64 = field.mode(0).iter().map(|z| z.norm_sqr()).sum();
        field.grid().norm_scale() * mean.sqrt()
    } else {
        0.0
    };
    let j_min = if params.homogeneous { range.j_min } else { -1 };
    Ok(BesovNorm {
        value,
        j_min,
        j_max: range.j_max,
        excluded_mean,
    })
}

/// Convenience: norm value only, tables built on the fly.
pub fn besov_norm_value(field: &SpectralField, params: &BesovParams, cut: &DyadicCutoffs) -> Result<f64> {
    let tables = BlockTables::new(*field.grid(), *cut);
    Ok(besov_norm(field, params, &tables)?.value)
}

/// Time integrability of a Chemin-Lerner norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeExponent {
    Two,
    Infinity,
}

/// `||f||_{L~^theta_T(B^s_{p,r})}`: per-block time aggregation (trapezoid for
/// `theta = 2`, supremum for `theta = inf`), then the weighted `l^r` sum over blocks.
pub fn chemin_lerner_norm(
    snapshots: &[SpectralField],
    times: &[f64],
    theta: TimeExponent,
    params: &BesovParams,
    tables: &BlockTables,
) -> Result<f64> {
    if snapshots.len() != times.len() || snapshots.is_empty() {
        return Err(Error::InvalidInput(
            "snapshot and time counts must agree and be nonzero".into(),
        ));
    }
    if theta == TimeExponent::Two && snapshots.len() < 2 {
        return Err(Error::InvalidInput(
            "theta = 2 needs at least two snapshots".into(),
        ));
    }
    if times.len() >= 2 {
        let dt = times[1] - times[0];
        let uniform = times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.abs().max(1.0));
        if !(dt > 0.0 && uniform) {
            return Err(Error::InvalidInput("time sampling must be uniform and increasing".into()));
        }
    }
    params.validate()?;
    let per_time: Vec<Vec<(i32, f64)>> = snapshots
        .iter()
        .map(|f| {
            block_indices(params, tables)
                .into_iter()
                .map(|j| Ok((j, block_lp_norm(f, j, params.homogeneous, params.p, tables)?)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let blocks = per_time[0].len();
    let mut terms = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let j = per_time[0][b].0;
        let agg = match theta {
            TimeExponent::Infinity => per_time.iter().map(|v| v[b].1).fold(0.0, f64::max),
            TimeExponent::Two => {
                let mut acc = 0.0;
                for w in 0..per_time.len() - 1 {
                    let dt = times[w + 1] - times[w];
                    acc += 0.5 * dt * (per_time[w][b].1.powi(2) + per_time[w + 1][b].1.powi(2));
                }
                acc.sqrt()
            }
        };
        terms.push(2f64.powi(j).powf(params.s) * agg);
    }
    Ok(lr_aggregate(terms, params.r))
}

/// Outcome of one inequality verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub inequality_id: String,
    pub samples: usize,
    pub ratio_max: f64,
    pub ratio_mean: f64,
    pub ratio_min: f64,
    pub ceiling: f64,
    /// `max / min` of the per-batch maximal ratios.
    pub seed_spread: f64,
    /// Spread limit, or `None` when the check uses an explicit constant.
    pub stability_limit: Option<f64>,
    pub pass: bool,
    pub diagnostics: BTreeMap<String, f64>,
}

/// Shared configuration of the inequality verifiers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifierSetup {
    pub grid: GridSpec,
    pub cutoffs: DyadicCutoffs,
    pub seed: u64,
    /// Independent seed batches the samples are split into.
    pub batches: usize,
    /// Largest admissible `max / min` of per-batch fitted constants.
    pub stability_factor: f64,
    /// Ceiling for inequalities whose constant is implicit.
    pub implicit_ceiling: f64,
}

impl Default for VerifierSetup {
    fn default() -> Self {
        Self {
            grid: GridSpec::new(4096, 400.0 * std::f64::consts::PI, 1).expect("valid grid"),
            cutoffs: DyadicCutoffs::default(),
            seed: 2024,
            batches: 5,
            stability_factor: 4.0,
            implicit_ceiling: 100.0,
        }
    }
}

impl VerifierSetup {
    fn tables(&self) -> BlockTables {
        BlockTables::new(self.grid, self.cutoffs)
    }

    fn batch_sizes(&self, sample_count: usize) -> Vec<usize> {
        let batches = self.batches.clamp(1, sample_count.max(1));
        (0..batches)
            .map(|b| sample_count / batches + usize::from(b < sample_count % batches))
            .collect()
    }

    /// Default pool of sample families for the verifier grid.
    fn kinds(&self) -> Vec<FieldKind> {
        let range = crate::littlewood_paley::block_range(&self.grid, &self.cutoffs);
        let hi = (range.j_max - 3).max(range.j_min + 2);
        let lo = (range.j_min + 3).min(hi);
        let mid = (lo + hi) / 2;
        vec![
            FieldKind::MixedTones {
                max_xi: self.grid.xi_nyquist() / 4.0,
            },
            FieldKind::Gaussian {
                width_lo: 8.0 * self.grid.dx(),
                width_hi: 24.0 * self.grid.dx(),
            },
            FieldKind::SingleBlock { j: lo },
            FieldKind::SingleBlock { j: mid },
            FieldKind::SingleBlock { j: hi },
        ]
    }

    /// Runs `ratio(sample, rng)` over seed batches; `None` ratios are skipped.
    fn run_batches<F>(&self, sample_count: usize, salt: u64, ratio: F) -> Vec<Vec<f64>>
    where
        F: Fn(&SpectralField, &mut ChaCha8Rng) -> Option<f64> + Sync,
    {
        let kinds = self.kinds();
        let tables_grid = self.grid;
        let sizes = self.batch_sizes(sample_count);
        sizes
            .par_iter()
            .enumerate()
            .map(|(b, &size)| {
                let mut rng = ChaCha8Rng::seed_from_u64(
                    self.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (b as u64 + 1) << 32,
                );
                (0..size)
                    .filter_map(|i| {
                        let kind = kinds[(i + b) % kinds.len()];
                        let f = sampling::mean_free(sampling::random_field(
                            &tables_grid,
                            kind,
                            &self.cutoffs,
                            &mut rng,
                        ));
                        ratio(&f, &mut rng)
                    })
                    .collect()
            })
            .collect()
    }
}

fn summarize(
    id: String,
    batches: &[Vec<f64>],
    ceiling: f64,
    stability_limit: Option<f64>,
    diagnostics: BTreeMap<String, f64>,
) -> InequalityReport {
    let all: Vec<f64> = batches.iter().flatten().copied().collect();
    let samples = all.len();
    let ratio_max = all.iter().cloned().fold(0.0, f64::max);
    let ratio_min = all.iter().cloned().fold(f64::INFINITY, f64::min);
    let ratio_mean = if samples > 0 {
        all.iter().sum::<f64>() / samples as f64
    } else {
        0.0
    };
    let maxima: Vec<f64> = batches
        .iter()
        .filter(|b| !b.is_empty())
        .map(|b| b.iter().cloned().fold(0.0, f64::max))
        .collect();
    let seed_spread = spread(&maxima);
    let stable = stability_limit.is_none_or(|lim| seed_spread <= lim);
    InequalityReport {
        inequality_id: id,
        samples,
        ratio_max,
        ratio_mean,
        ratio_min: if samples > 0 { ratio_min } else { 0.0 },
        ceiling,
        seed_spread,
        stability_limit,
        pass: samples > 0 && ratio_max <= ceiling && ratio_max.is_finite() && stable,
        diagnostics,
    }
}

/// Embedding statements with explicit or implicit constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "kebab-case")]
pub enum EmbeddingCase {
    /// `B^{s_hi}_{2,r} -> B^{s_lo}_{2,r}` for `s_lo <= s_hi`; constant `2^{s_hi - s_lo}`.
    InhomogeneousMonotone { s_hi: f64, s_lo: f64, r: f64 },
    /// `dot B^s_{2,r} -> dot B^s_{2,r~}` for `r <= r~`; constant 1.
    SummabilityMonotone { s: f64, r: f64, r_tilde: f64 },
    /// `L^1 -> dot B^{-1/2}_{2,inf}`; constant computed from the cutoff on the grid.
    L1ToNegativeBesov,
    /// `dot B^0_{2,1} -> L^2` on mean-free data; constant 1.
    B021ToL2,
}

impl EmbeddingCase {
    fn id(&self) -> String {
        match self {
            EmbeddingCase::InhomogeneousMonotone { s_hi, s_lo, r } => {
                format!("embedding/inhomogeneous-monotone(s={s_hi}->{s_lo},r={r})")
            }
            EmbeddingCase::SummabilityMonotone { s, r, r_tilde } => {
                format!("embedding/summability-monotone(s={s},r={r}->{r_tilde})")
            }
            EmbeddingCase::L1ToNegativeBesov => "embedding/L1-to-B^{-1/2}_{2,inf}".into(),
            EmbeddingCase::B021ToL2 => "embedding/B^0_{2,1}-to-L2".into(),
        }
    }
}

/// Exact discrete constant of `||f||_{dot B^{-1/2}_{2,inf}} <= C ||f||_{L^1}` on the torus:
/// `C = max_j 2^{-j/2} (sum_k phi_j(xi_k)^2 / L)^{1/2}`.
pub fn l1_embedding_constant(tables: &BlockTables) -> f64 {
    let l = tables.grid().box_length();
    tables
        .range()
        .iter()
        .map(|j| {
            let s: f64 = tables.phi_table(j).unwrap().iter().map(|v| v * v).sum();
            2f64.powi(j).powf(-0.5) * (s / l).sqrt()
        })
        .fold(0.0, f64::max)
}

/// Gaussian `lambda g(lambda x)` of unit mass centred in the box.
fn unit_mass_gaussian(grid: &GridSpec, width: f64) -> SpectralField {
    let amp = 1.0 / (width * std::f64::consts::PI.sqrt());
    sampling::gaussian(grid, grid.box_length() / 2.0, width, &[amp])
}

/// Ratio `||f||_{dot B^{-1/2}_{2,inf}} / ||f||_{L^1}`.
pub fn l1_embedding_ratio(f: &SpectralField, tables: &BlockTables) -> Result<f64> {
    let lhs = besov_norm(f, &BesovParams::homogeneous(-0.5, 2.0, f64::INFINITY)?, tables)?.value;
    let l1 = inverse_unchecked(f).lp_norm(1.0);
    Ok(lhs / l1)
}

/// Verifies an embedding on `sample_count` random fields.
pub fn verify_embedding(
    case: EmbeddingCase,
    sample_count: usize,
    setup: &VerifierSetup,
) -> Result<InequalityReport> {
    let tables = setup.tables();
    let mut diagnostics = BTreeMap::new();
    let (ceiling, batches) = match case {
        EmbeddingCase::InhomogeneousMonotone { s_hi, s_lo, r } => {
            if s_lo > s_hi {
                return Err(Error::Constraint(format!("need s_lo <= s_hi, got {s_lo} > {s_hi}")));
            }
            let hi = BesovParams::inhomogeneous(s_hi, 2.0, r)?;
            let lo = BesovParams::inhomogeneous(s_lo, 2.0, r)?;
            let batches = setup.run_batches(sample_count, 1, |f, _| {
                let a = besov_norm(f, &lo, &tables).ok()?.value;
                let b = besov_norm(f, &hi, &tables).ok()?.value;
                (b > 0.0).then(|| a / b)
            });
            (2f64.powf(s_hi - s_lo) * (1.0 + 1e-12), batches)
        }
        EmbeddingCase::SummabilityMonotone { s, r, r_tilde } => {
            if r_tilde < r {
                return Err(Error::Constraint(format!("need r <= r_tilde, got {r} > {r_tilde}")));
            }
            let small = BesovParams::homogeneous(s, 2.0, r)?;
            let large = BesovParams::homogeneous(s, 2.0, r_tilde)?;
            let batches = setup.run_batches(sample_count, 2, |f, _| {
                let a = besov_norm(f, &large, &tables).ok()?.value;
                let b = besov_norm(f, &small, &tables).ok()?.value;
                (b > 0.0).then(|| a / b)
            });
            (1.0 + 1e-12, batches)
        }
        EmbeddingCase::L1ToNegativeBesov => {
            let ceiling = l1_embedding_constant(&tables) * (1.0 + 1e-9);
            let batches = setup.run_batches(sample_count, 3, |f, _| {
                // The L^1 statement concerns functions with mass, so restore a bump.
                let g = f.axpby(1.0, &unit_mass_gaussian(f.grid(), 12.0 * f.grid().dx()), 1.0).ok()?;
                l1_embedding_ratio(&g, &tables).ok()
            });
            let base_width = 16.0 * setup.grid.dx();
            let dilated: Vec<f64> = [0.5, 1.0, 2.0, 4.0]
                .iter()
                .map(|lam| l1_embedding_ratio(&unit_mass_gaussian(&setup.grid, base_width / lam), &tables))
                .collect::<Result<_>>()?;
            diagnostics.insert("unit_gaussian_ratio".into(), dilated[1]);
            diagnostics.insert("dilation_spread".into(), spread(&dilated) - 1.0);
            (ceiling, batches)
        }
        EmbeddingCase::B021ToL2 => {
            let params = BesovParams::homogeneous(0.0, 2.0, 1.0)?;
            let batches = setup.run_batches(sample_count, 4, |f, _| {
                let b = besov_norm(f, &params, &tables).ok()?.value;
                (b > 0.0).then(|| f.l2_norm() / b)
            });
            (1.0 + 1e-12, batches)
        }
    };
    let mut report = summarize(case.id(), &batches, ceiling, None, diagnostics);
    if case == EmbeddingCase::L1ToNegativeBesov {
        let dil = report.diagnostics["dilation_spread"];
        report.pass &= dil <= 0.1;
    }
    Ok(report)
}

/// Bernstein ratios `||Lambda^alpha dot Delta_j f|| / (2^{j alpha} ||dot Delta_j f||)` on
/// random single-block fields; passes iff every ratio lies in
/// `[(3/4)^alpha, (8/3)^alpha]`.
pub fn verify_bernstein(alpha: f64, sample_count: usize, setup: &VerifierSetup) -> Result<InequalityReport> {
    if alpha < 0.0 {
        return Err(Error::InvalidInput("alpha must be >= 0".into()));
    }
    let range = crate::littlewood_paley::block_range(&setup.grid, &setup.cutoffs);
    let lo_j = range.j_min + 2;
    let hi_j = range.j_max - 2;
    let batches: Vec<Vec<f64>> = setup
        .batch_sizes(sample_count)
        .par_iter()
        .enumerate()
        .map(|(b, &size)| {
            let mut rng = ChaCha8Rng::seed_from_u64(setup.seed.wrapping_add(1000 + b as u64));
            (0..size)
                .map(|i| {
                    let j = lo_j + ((i * 7 + b * 3) as i32).rem_euclid(hi_j - lo_j + 1);
                    let f = sampling::single_block(&setup.grid, j, &setup.cutoffs, &mut rng);
                    bernstein_block_ratio(&f, j, alpha).expect("nonzero block")
                })
                .collect()
        })
        .collect();
    let lower = INNER_RADIUS.powf(alpha);
    let upper = OUTER_RADIUS.powf(alpha);
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("band_lower".into(), lower);
    diagnostics.insert("band_upper".into(), upper);
    let mut report = summarize(
        format!("bernstein(alpha={alpha})"),
        &batches,
        upper * (1.0 + 1e-12),
        None,
        diagnostics,
    );
    report.pass &= report.ratio_min >= lower * (1.0 - 1e-12);
    Ok(report)
}

/// Interpolation inequalities with their exponent tuples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "kebab-case")]
pub enum InterpolationCase {
    /// `||f||_{dot B^k_{2,1}} <= C ||f||^theta_{dot B^{k+m}_{2,inf}} ||f||^{1-theta}_{dot B^{-rho}_{2,inf}}`.
    BesovInterpolation { k: f64, m: f64, rho: f64 },
    /// `||Lambda^k f||_2 <= C ||Lambda^{k+m} f||^theta_2 ||f||^{1-theta}_{dot B^{-rho}_{2,inf}}`.
    SobolevBesovInterpolation { k: f64, m: f64, rho: f64 },
    /// `||f||_{dot B^k_{p,1}} <= C ||f||^{1-theta}_{dot B^m_{r,inf}} ||f||^theta_{dot B^rho_{r,inf}}`
    /// with `k + (1/r - 1/p) = m (1 - theta) + rho theta`.
    BesovGagliardoNirenberg { k: f64, m: f64, rho: f64, p: f64, r: f64, theta: f64 },
    /// `||Lambda^k f||_{L^q} <= C ||Lambda^m f||^{1-theta}_{L^r} ||Lambda^rho f||^theta_{L^r}`
    /// with `k + (1/r - 1/q) = m (1 - theta) + rho theta`.
    GagliardoNirenberg { k: f64, m: f64, rho: f64, q: f64, r: f64, theta: f64 },
}

impl InterpolationCase {
    /// Interpolation exponent; for the first two cases `(rho + k) / (rho + k + m)`.
    pub fn theta(&self) -> f64 {
        match *self {
            InterpolationCase::BesovInterpolation { k, m, rho }
            | InterpolationCase::SobolevBesovInterpolation { k, m, rho } => (rho + k) / (rho + k + m),
            InterpolationCase::BesovGagliardoNirenberg { theta, .. }
            | InterpolationCase::GagliardoNirenberg { theta, .. } => theta,
        }
    }

    /// Residual of the dimensional balance relation (zero for the first two cases).
    pub fn balance_residual(&self) -> f64 {
        match *self {
            InterpolationCase::BesovInterpolation { .. }
            | InterpolationCase::SobolevBesovInterpolation { .. } => 0.0,
            InterpolationCase::BesovGagliardoNirenberg { k, m, rho, p, r, theta } => {
                k + (1.0 / r - 1.0 / p) - (m * (1.0 - theta) + rho * theta)
            }
            InterpolationCase::GagliardoNirenberg { k, m, rho, q, r, theta } => {
                k + (1.0 / r - 1.0 / q) - (m * (1.0 - theta) + rho * theta)
            }
        }
    }

    /// Solves the balance relation of the Gagliardo-Nirenberg case for `theta`.
    pub fn gagliardo_nirenberg(k: f64, m: f64, rho: f64, q: f64, r: f64) -> Self {
        let theta = (k + 1.0 / r - 1.0 / q - m) / (rho - m);
        InterpolationCase::GagliardoNirenberg { k, m, rho, q, r, theta }
    }

    fn id(&self) -> String {
        match *self {
            InterpolationCase::BesovInterpolation { k, m, rho } => {
                format!("interpolation/besov(k={k},m={m},rho={rho})")
            }
            InterpolationCase::SobolevBesovInterpolation { k, m, rho } => {
                format!("interpolation/sobolev-besov(k={k},m={m},rho={rho})")
            }
            InterpolationCase::BesovGagliardoNirenberg { k, m, rho, p, r, theta } => {
                format!("interpolation/besov-gn(k={k},m={m},rho={rho},p={p},r={r},theta={theta})")
            }
            InterpolationCase::GagliardoNirenberg { k, m, rho, q, r, theta } => {
                format!("interpolation/gn(k={k},m={m},rho={rho},q={q},r={r},theta={theta})")
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let residual = self.balance_residual();
        if residual.abs() > 1e-12 {
            return Err(Error::BalanceViolation { residual });
        }
        match *self {
            InterpolationCase::BesovInterpolation { k, m, rho }
            | InterpolationCase::SobolevBesovInterpolation { k, m, rho } => {
                if !(k >= 0.0 && m > 0.0 && rho > 0.0) {
                    return Err(Error::Constraint("need k >= 0, m > 0, rho > 0".into()));
                }
            }
            InterpolationCase::BesovGagliardoNirenberg { m, rho, p, r, theta, .. } => {
                if m == rho || !(theta > 0.0 && theta < 1.0) || !(1.0 <= r && r <= p) {
                    return Err(Error::Constraint(
                        "need m != rho, 0 < theta < 1, 1 <= r <= p".into(),
                    ));
                }
                BesovParams::homogeneous(0.0, p, 1.0)?;
                BesovParams::homogeneous(0.0, r, 1.0)?;
            }
            InterpolationCase::GagliardoNirenberg { m, rho, q, r, theta, .. } => {
                if m == rho || !(0.0..=1.0).contains(&theta) || !(1.0 <= r && r <= q) {
                    return Err(Error::Constraint(
                        "need m != rho, 0 <= theta <= 1, 1 <= r <= q".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// `(lhs, rhs)` of the inequality on one mean-free field.
    pub fn sides(&self, f: &SpectralField, tables: &BlockTables) -> Result<(f64, f64)> {
        let theta = self.theta();
        let hom = |s: f64, p: f64, r: f64| -> Result<f64> {
            Ok(besov_norm(f, &BesovParams::homogeneous(s, p, r)?, tables)?.value)
        };
        let lambda_lq = |order: f64, q: f64| -> Result<f64> {
            let g = fractional_derivative(f, order)?;
            Ok(inverse_unchecked(&g).lp_norm(q))
        };
        Ok(match *self {
            InterpolationCase::BesovInterpolation { k, m, rho } => (
                hom(k, 2.0, 1.0)?,
                hom(k + m, 2.0, f64::INFINITY)?.powf(theta)
                    * hom(-rho, 2.0, f64::INFINITY)?.powf(1.0 - theta),
            ),
            InterpolationCase::SobolevBesovInterpolation { k, m, rho } => (
                fractional_derivative(f, k)?.l2_norm(),
                fractional_derivative(f, k + m)?.l2_norm().powf(theta)
                    * hom(-rho, 2.0, f64::INFINITY)?.powf(1.0 - theta),
            ),
            InterpolationCase::BesovGagliardoNirenberg { k, m, rho, p, r, .. } => (
                hom(k, p, 1.0)?,
                hom(m, r, f64::INFINITY)?.powf(1.0 - theta)
                    * hom(rho, r, f64::INFINITY)?.powf(theta),
            ),
            InterpolationCase::GagliardoNirenberg { k, m, rho, q, r, .. } => (
                lambda_lq(k, q)?,
                lambda_lq(m, r)?.powf(1.0 - theta) * lambda_lq(rho, r)?.powf(theta),
            ),
        })
    }

    /// Explicit constant for the Besov case: `1/(1-2^{-(k+rho)}) + 1/(1-2^{-m})`.
    fn explicit_ceiling(&self) -> Option<f64> {
        match *self {
            InterpolationCase::BesovInterpolation { k, m, rho } => {
                Some(1.0 / (1.0 - 2f64.powf(-(k + rho))) + 1.0 / (1.0 - 2f64.powf(-m)))
            }
            _ => None,
        }
    }
}

/// LHS/RHS of the Sobolev-Besov interpolation on pure tones at frequencies
/// `2^i xi_0`, `i = 0..count`; a scale-free inequality gives a constant sequence.
pub fn tone_scale_ratios(
    case: &InterpolationCase,
    base_mode: i64,
    count: u32,
    tables: &BlockTables,
) -> Result<Vec<f64>> {
    let grid = *tables.grid();
    (0..count)
        .map(|i| {
            let k = base_mode << i;
            if k >= grid.num_points() as i64 / 2 {
                return Err(Error::InvalidInput(format!("mode {k} beyond Nyquist")));
            }
            let mut f = SpectralField::zeros(grid.with_components(1)?);
            let idx = grid.index_of(k);
            f.mode_mut(idx)[0] = num_complex::Complex64::new(1.0, 0.0);
            f.mode_mut(grid.partner(idx))[0] = num_complex::Complex64::new(1.0, 0.0);
            let (lhs, rhs) = case.sides(&f, tables)?;
            Ok(lhs / rhs)
        })
        .collect()
}

/// Verifies an interpolation inequality on random mean-free fields.
pub fn verify_interpolation(
    case: InterpolationCase,
    sample_count: usize,
    setup: &VerifierSetup,
) -> Result<InequalityReport> {
    case.validate()?;
    let tables = setup.tables();
    let batches = setup.run_batches(sample_count, 10, |f, _| {
        let (lhs, rhs) = case.sides(f, &tables).ok()?;
        (rhs > 0.0 && lhs.is_finite()).then(|| lhs / rhs)
    });
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("theta".into(), case.theta());
    let (ceiling, stability) = match case.explicit_ceiling() {
        Some(c) => (c, None),
        None => (setup.implicit_ceiling, Some(setup.stability_factor)),
    };
    let mut report = summarize(case.id(), &batches, ceiling, stability, diagnostics);
    if let InterpolationCase::SobolevBesovInterpolation { .. } = case {
        let range = tables.range();
        let base_j = range.j_min + 3;
        let base_mode = ((2f64.powi(base_j) / setup.grid.xi_min()).round() as i64).max(1);
        let ratios = tone_scale_ratios(&case, base_mode, 5, &tables)?;
        let dev = spread(&ratios) - 1.0;
        report.diagnostics.insert("tone_scale_deviation".into(), dev);
        report.pass &= dev <= 0.2;
    }
    Ok(report)
}

/// Scalar nonlinearities `F` with `F(0) = 0` used by composition estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompositionLaw {
    /// `f^2`
    Square,
    /// `f^3 / 3`
    CubeThird,
    /// `sin f - f`
    SinMinusId,
    /// `sin f`
    Sin,
}

impl CompositionLaw {
    pub fn eval(&self, f: f64) -> f64 {
        match self {
            CompositionLaw::Square => f * f,
            CompositionLaw::CubeThird => f * f * f / 3.0,
            CompositionLaw::SinMinusId => f.sin() - f,
            CompositionLaw::Sin => f.sin(),
        }
    }

    /// `F'(0)`.
    pub fn slope_at_zero(&self) -> f64 {
        match self {
            CompositionLaw::Sin => 1.0,
            _ => 0.0,
        }
    }

    /// Whether `F''(0) != 0`, i.e. the remainder is exactly quadratic at leading order.
    pub fn quadratic_leading(&self) -> bool {
        matches!(self, CompositionLaw::Square)
    }
}

/// Product and composition estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "kebab-case")]
pub enum ProductCase {
    /// `||fg||_{dot B^s_{2,r}} <= C (||f||_inf ||g||_{dot B^s} + ||g||_inf ||f||_{dot B^s})`, `s > 0`.
    Algebra { s: f64, r: f64 },
    /// `||fg||_{dot B^{s1+s2-1/2}_{2,1}} <= C ||f||_{dot B^{s1}_{2,1}} ||g||_{dot B^{s2}_{2,1}}`.
    Product { s1: f64, s2: f64 },
    /// `||F(f)||_{dot B^s_{2,r}} <= C(||f||_inf) ||f||_{dot B^s_{2,r}}`.
    Composition { s: f64, r: f64, law: CompositionLaw, amplitude: f64 },
    /// `||F(f) - F'(0) f||_{dot B^s_{2,r}} <= C(||f||_inf) ||f||^2_{dot B^s_{2,r}}`.
    QuadraticComposition { s: f64, r: f64, law: CompositionLaw, amplitude: f64 },
}

impl ProductCase {
    fn id(&self) -> String {
        match self {
            ProductCase::Algebra { s, r } => format!("product/algebra(s={s},r={r})"),
            ProductCase::Product { s1, s2 } => format!("product/bilinear(s1={s1},s2={s2})"),
            ProductCase::Composition { s, r, law, amplitude } => {
                format!("composition/{law:?}(s={s},r={r},a={amplitude})")
            }
            ProductCase::QuadraticComposition { s, r, law, amplitude } => {
                format!("composition-remainder/{law:?}(s={s},r={r},a={amplitude})")
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ProductCase::Algebra { s, .. }
            | ProductCase::Composition { s, .. }
            | ProductCase::QuadraticComposition { s, .. } => {
                if s <= 0.0 {
                    return Err(Error::Constraint(format!("need s > 0, got {s}")));
                }
            }
            ProductCase::Product { s1, s2 } => {
                if !(s1 <= 0.5 && s2 <= 0.5 && s1 + s2 > 0.0) {
                    return Err(Error::Constraint(
                        "need s1, s2 <= 1/2 and s1 + s2 > 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn pointwise(f: &SpectralField, op: impl Fn(f64) -> f64) -> SpectralField {
    let real = inverse_unchecked(f);
    let samples = real.samples().iter().map(|&v| op(v)).collect();
    forward_transform(&RealField::new(*real.grid(), samples).expect("finite composition"))
}

fn product(f: &SpectralField, g: &SpectralField) -> SpectralField {
    let a = inverse_unchecked(f);
    let b = inverse_unchecked(g);
    let samples = a.samples().iter().zip(b.samples()).map(|(x, y)| x * y).collect();
    forward_transform(&RealField::new(*a.grid(), samples).expect("finite product"))
}

/// Rescales `f` so its sup norm equals `amplitude`.
fn with_amplitude(f: &SpectralField, amplitude: f64) -> Option<SpectralField> {
    let sup = inverse_unchecked(f).sup_norm();
    (sup > 0.0).then(|| f.scale(amplitude / sup))
}

/// Remainder `F(f) - F'(0) f` measured in `dot B^s_{2,r}`.
pub fn composition_remainder(
    f: &SpectralField,
    law: CompositionLaw,
    params: &BesovParams,
    tables: &BlockTables,
) -> Result<f64> {
    let d = law.slope_at_zero();
    let rem = pointwise(f, |v| law.eval(v) - d * v);
    Ok(besov_norm(&rem, params, tables)?.value)
}

/// Fitted exponent of `amplitude -> ||F(a f) - F'(0) a f||` over `a0 2^{-i}`.
pub fn amplitude_scaling_exponent(
    f: &SpectralField,
    law: CompositionLaw,
    params: &BesovParams,
    tables: &BlockTables,
    a0: f64,
    steps: usize,
) -> Result<(f64, Vec<f64>)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..steps {
        let a = a0 * 2f64.powi(-(i as i32));
        let g = with_amplitude(f, a).ok_or_else(|| Error::InvalidInput("zero field".into()))?;
        xs.push(a.ln());
        ys.push(composition_remainder(&g, law, params, tables)?);
    }
    let logs: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let fit = linear_fit(&xs, &logs).ok_or_else(|| Error::InvalidInput("degenerate sweep".into()))?;
    Ok((fit.slope, ys))
}

/// Verifies a product or composition estimate; the constant is fitted per sample.
pub fn verify_product_composition(
    case: ProductCase,
    sample_count: usize,
    setup: &VerifierSetup,
) -> Result<InequalityReport> {
    case.validate()?;
    let tables = setup.tables();
    // Band-limit samples so products are alias-free on the grid.
    let band = setup.grid.xi_nyquist() / 4.0;
    let band_limit = move |f: &SpectralField| f.apply_real(|xi| if xi.abs() <= band { 1.0 } else { 0.0 });
    let kinds = setup.kinds();
    let batches = match case {
        ProductCase::Algebra { s, r } => {
            let params = BesovParams::homogeneous(s, 2.0, r)?;
            setup.run_batches(sample_count, 20, |f, rng| {
                let f = band_limit(f);
                let kind = kinds[rng.random_range(0..kinds.len())];
                let g = band_limit(&sampling::random_field(&setup.grid, kind, &setup.cutoffs, rng));
                let fg = product(&f, &g);
                let lhs = besov_norm(&fg, &params, &tables).ok()?.value;
                let fi = inverse_unchecked(&f).sup_norm();
                let gi = inverse_unchecked(&g).sup_norm();
                let rhs = fi * besov_norm(&g, &params, &tables).ok()?.value
                    + gi * besov_norm(&f, &params, &tables).ok()?.value;
                (rhs > 0.0).then(|| lhs / rhs)
            })
        }
        ProductCase::Product { s1, s2 } => {
            let p1 = BesovParams::homogeneous(s1, 2.0, 1.0)?;
            let p2 = BesovParams::homogeneous(s2, 2.0, 1.0)?;
            let out = BesovParams::homogeneous(s1 + s2 - 0.5, 2.0, 1.0)?;
            setup.run_batches(sample_count, 21, |f, rng| {
                let f = band_limit(f);
                let kind = kinds[rng.random_range(0..kinds.len())];
                let g = sampling::mean_free(band_limit(&sampling::random_field(
                    &setup.grid,
                    kind,
                    &setup.cutoffs,
                    rng,
                )));
                let lhs = besov_norm(&product(&f, &g), &out, &tables).ok()?.value;
                let rhs = besov_norm(&f, &p1, &tables).ok()?.value * besov_norm(&g, &p2, &tables).ok()?.value;
                (rhs > 0.0).then(|| lhs / rhs)
            })
        }
        ProductCase::Composition { s, r, law, amplitude } => {
            let params = BesovParams::homogeneous(s, 2.0, r)?;
            setup.run_batches(sample_count, 22, |f, _| {
                let f = with_amplitude(&band_limit(f), amplitude)?;
                let lhs = besov_norm(&pointwise(&f, |v| law.eval(v)), &params, &tables).ok()?.value;
                let rhs = besov_norm(&f, &params, &tables).ok()?.value;
                (rhs > 0.0).then(|| lhs / rhs)
            })
        }
        ProductCase::QuadraticComposition { s, r, law, amplitude } => {
            let params = BesovParams::homogeneous(s, 2.0, r)?;
            setup.run_batches(sample_count, 23, |f, _| {
                let f = with_amplitude(&band_limit(f), amplitude)?;
                let lhs = composition_remainder(&f, law, &params, &tables).ok()?;
                let rhs = besov_norm(&f, &params, &tables).ok()?.value.powi(2);
                (rhs > 0.0).then(|| lhs / rhs)
            })
        }
    };
    let mut diagnostics = BTreeMap::new();
    let mut extra_pass = true;
    if let ProductCase::QuadraticComposition { s, r, law, amplitude } = case {
        let params = BesovParams::homogeneous(s, 2.0, r)?;
        let mut rng = ChaCha8Rng::seed_from_u64(setup.seed ^ 0xA5A5);
        let f = band_limit(&sampling::mixed_tones(&setup.grid, band / 2.0, &mut rng));
        let (exponent, lhs) = amplitude_scaling_exponent(&f, law, &params, &tables, amplitude, 5)?;
        let halving = lhs[0] / lhs[1];
        diagnostics.insert("amplitude_exponent".into(), exponent);
        diagnostics.insert("halving_factor".into(), halving);
        extra_pass = if law.quadratic_leading() {
            (halving - 4.0).abs() <= 0.25 * 4.0 && (exponent - 2.0).abs() <= 0.1
        } else {
            halving >= 4.0 * 0.75 && exponent >= 1.9
        };
    }
    let mut report = summarize(
        case.id(),
        &batches,
        setup.implicit_ceiling,
        Some(setup.stability_factor),
        diagnostics,
    );
    report.pass &= extra_pass;
    Ok(report)
}

/// Inequality families selectable in [`run_catalogue`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Embeddings,
    Bernstein,
    Interpolation,
    Products,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Embeddings, Suite::Bernstein, Suite::Interpolation, Suite::Products];

    pub fn parse(name: &str) -> Result<Vec<Suite>> {
        match name {
            "all" => Ok(Suite::ALL.to_vec()),
            "embeddings" => Ok(vec![Suite::Embeddings]),
            "bernstein" => Ok(vec![Suite::Bernstein]),
            "interpolation" => Ok(vec![Suite::Interpolation]),
            "products" => Ok(vec![Suite::Products]),
            other => Err(Error::InvalidInput(format!(
                "unknown suite {other:?}; expected all, embeddings, bernstein, interpolation or products"
            ))),
        }
    }
}

/// Default parameter tuples of each suite, run with `sample_count` samples.
pub fn run_catalogue(suites: &[Suite], sample_count: usize, setup: &VerifierSetup) -> Result<Vec<InequalityReport>> {
    let mut out = Vec::new();
    for suite in suites {
        match suite {
            Suite::Embeddings => {
                for case in [
                    EmbeddingCase::InhomogeneousMonotone { s_hi: 1.0, s_lo: 0.0, r: 1.0 },
                    EmbeddingCase::SummabilityMonotone { s: 0.5, r: 1.0, r_tilde: 2.0 },
                    EmbeddingCase::L1ToNegativeBesov,
                    EmbeddingCase::B021ToL2,
                ] {
                    out.push(verify_embedding(case, sample_count, setup)?);
                }
            }
            Suite::Bernstein => {
                for alpha in [0.5, 1.0, 2.0] {
                    out.push(verify_bernstein(alpha, sample_count, setup)?);
                }
            }
            Suite::Interpolation => {
                for case in [
                    InterpolationCase::BesovInterpolation { k: 0.0, m: 1.0, rho: 0.5 },
                    InterpolationCase::BesovInterpolation { k: 0.0, m: 2.0, rho: 1.0 },
                    InterpolationCase::SobolevBesovInterpolation { k: 0.0, m: 1.0, rho: 0.5 },
                    InterpolationCase::gagliardo_nirenberg(0.0, 0.0, 1.0, 4.0, 2.0),
                ] {
                    out.push(verify_interpolation(case, sample_count, setup)?);
                }
            }
            Suite::Products => {
                for case in [
                    ProductCase::Algebra { s: 0.5, r: 1.0 },
                    ProductCase::Product { s1: 0.5, s2: 0.5 },
                    ProductCase::Composition { s: 0.5, r: 1.0, law: CompositionLaw::Sin, amplitude: 0.5 },
                    ProductCase::QuadraticComposition { s: 0.5, r: 1.0, law: CompositionLaw::Square, amplitude: 0.5 },
                    ProductCase::QuadraticComposition { s: 0.5, r: 1.0, law: CompositionLaw::CubeThird, amplitude: 0.5 },
                ] {
                    out.push(verify_product_composition(case, sample_count, setup)?);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::littlewood_paley::build_cutoffs;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn small_setup() -> VerifierSetup {
        VerifierSetup {
            grid: GridSpec::new(1024, 100.0 * PI, 1).unwrap(),
            ..VerifierSetup::default()
        }
    }

    fn tables(g: GridSpec) -> BlockTables {
        BlockTables::new(g, build_cutoffs(1).unwrap())
    }

    #[test]
    fn params_validation() {
        assert!(BesovParams::homogeneous(0.5, 3.0, 1.0).is_err());
        assert!(BesovParams::homogeneous(0.5, 2.0, 0.5).is_err());
        assert!(BesovParams::homogeneous(0.5, f64::INFINITY, f64::INFINITY).is_ok());
        let json = serde_json::to_string(&BesovParams::homogeneous(1.0, 2.0, f64::INFINITY).unwrap()).unwrap();
        assert!(json.contains("\"inf\""));
        let back: BesovParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back.r, Exponent::Infinite);
    }

    #[test]
    fn single_block_norm_is_one_term() {
        let g = GridSpec::new(1024, 64.0 * PI, 1).unwrap();
        let t = tables(g);
        // phi = 1 on [4/3, 3/2], so a tone at 1.4 * 2^j lies only in block j.
        let j = 1;
        let k = (1.4 * 2f64.powi(j) / g.xi_min()).round() as i64;
        let mut f = SpectralField::zeros(g);
        let i = g.index_of(k);
        f.mode_mut(i)[0] = Complex64::new(1.0, 0.0);
        f.mode_mut(g.partner(i))[0] = Complex64::new(1.0, 0.0);
        let f = f.scale(1.0 / f.l2_norm());
        for s in [-0.5, 0.0, 1.5] {
            for r in [1.0, 2.0, f64::INFINITY] {
                let n = besov_norm(&f, &BesovParams::homogeneous(s, 2.0, r).unwrap(), &t).unwrap();
                assert!((n.value - 2f64.powf(j as f64 * s)).abs() < 1e-12, "s={s} r={r}");
            }
        }
    }

    #[test]
    fn b0_22_comparable_to_l2_and_r_monotone() {
        let setup = small_setup();
        let t = setup.tables();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..20 {
            let kind = setup.kinds()[i % 5];
            let f = sampling::mean_free(sampling::random_field(&setup.grid, kind, &setup.cutoffs, &mut rng));
            let b = besov_norm(&f, &BesovParams::homogeneous(0.0, 2.0, 2.0).unwrap(), &t).unwrap();
            let ratio = b.value / f.l2_norm();
            assert!((0.5..=2.0).contains(&ratio), "{ratio}");
            let n1 = besov_norm(&f, &BesovParams::homogeneous(0.3, 2.0, 1.0).unwrap(), &t).unwrap().value;
            let n2 = besov_norm(&f, &BesovParams::homogeneous(0.3, 2.0, 2.0).unwrap(), &t).unwrap().value;
            let ni = besov_norm(&f, &BesovParams::homogeneous(0.3, 2.0, f64::INFINITY).unwrap(), &t).unwrap().value;
            assert!(n1 >= n2 && n2 >= ni);
        }
    }

    #[test]
    fn homogeneous_norm_reports_mean() {
        let g = GridSpec::new(64, 2.0 * PI, 1).unwrap();
        let t = tables(g);
        let c = forward_transform(&RealField::from_fn(g, |_, v| v[0] = 2.0).unwrap());
        let n = besov_norm(&c, &BesovParams::homogeneous(0.0, 2.0, 1.0).unwrap(), &t).unwrap();
        assert_eq!(n.value, 0.0);
        assert!((n.excluded_mean - c.l2_norm()).abs() < 1e-12);
        let ni = besov_norm(&c, &BesovParams::inhomogeneous(0.0, 2.0, 1.0).unwrap(), &t).unwrap();
        assert!((ni.value - c.l2_norm()).abs() < 1e-12);
        assert_eq!(ni.j_min, -1);
    }

    #[test]
    fn lp_block_norms_for_p_one_and_inf() {
        let g = GridSpec::new(256, 20.0, 1).unwrap();
        let t = tables(g);
        let f = sampling::gaussian(&g, 10.0, 1.0, &[1.0]);
        for p in [1.0, f64::INFINITY] {
            let n = besov_norm(&f, &BesovParams::inhomogeneous(0.0, p, 1.0).unwrap(), &t).unwrap();
            // Triangle inequality against the full-field norm.
            assert!(n.value >= inverse_unchecked(&f).lp_norm(p) * (1.0 - 1e-12));
        }
    }

    #[test]
    fn chemin_lerner_examples() {
        let g = GridSpec::new(256, 20.0, 1).unwrap();
        let t = tables(g);
        let f = sampling::gaussian(&g, 10.0, 1.0, &[1.0]);
        let params = BesovParams::inhomogeneous(1.5, 2.0, 1.0).unwrap();
        let spatial = besov_norm(&f, &params, &t).unwrap().value;

        let single = chemin_lerner_norm(std::slice::from_ref(&f), &[0.0], TimeExponent::Infinity, &params, &t).unwrap();
        assert_eq!(single, spatial);
        assert!(chemin_lerner_norm(std::slice::from_ref(&f), &[0.0], TimeExponent::Two, &params, &t).is_err());

        let times: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let constant: Vec<_> = times.iter().map(|_| f.clone()).collect();
        let c = chemin_lerner_norm(&constant, &times, TimeExponent::Infinity, &params, &t).unwrap();
        assert!((c - spatial).abs() <= 1e-12 * spatial);

        let dt = 0.01;
        let times: Vec<f64> = (0..=200).map(|i| i as f64 * dt).collect();
        let decaying: Vec<_> = times.iter().map(|&s| f.scale((-s).exp())).collect();
        let got = chemin_lerner_norm(&decaying, &times, TimeExponent::Two, &params, &t).unwrap();
        let horizon: f64 = 2.0;
        let exact = ((1.0 - (-2.0 * horizon).exp()) / 2.0).sqrt() * spatial;
        // Trapezoid error for exp(-2t) is dt^2/12 * (f'(T) - f'(0)) ~ 1.6e-5 relative.
        assert!((got - exact).abs() <= 1e-4 * exact, "{got} vs {exact}");
    }

    #[test]
    fn interpolation_tuples() {
        let c = InterpolationCase::BesovInterpolation { k: 0.0, m: 1.0, rho: 0.5 };
        assert!((c.theta() - 1.0 / 3.0).abs() < 1e-15);
        let gn = InterpolationCase::gagliardo_nirenberg(0.0, 0.0, 1.0, 4.0, 2.0);
        assert!((gn.theta() - 0.25).abs() < 1e-15);
        assert_eq!(gn.balance_residual(), 0.0);
        let bad = InterpolationCase::GagliardoNirenberg { k: 0.0, m: 0.0, rho: 1.0, q: 4.0, r: 2.0, theta: 0.5 };
        match verify_interpolation(bad, 4, &small_setup()) {
            Err(Error::BalanceViolation { residual }) => assert!((residual + 0.25).abs() < 1e-15),
            other => panic!("unexpected {other:?}"),
        }
        let c61 = InterpolationCase::BesovInterpolation { k: 0.0, m: 2.0, rho: 1.0 };
        assert!((c61.theta() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tone_ratios_are_scale_free() {
        let g = GridSpec::new(4096, 400.0 * PI, 1).unwrap();
        let t = tables(g);
        let case = InterpolationCase::SobolevBesovInterpolation { k: 0.0, m: 1.0, rho: 0.5 };
        let ratios = tone_scale_ratios(&case, 3, 6, &t).unwrap();
        assert!(spread(&ratios) - 1.0 < 1e-9, "{ratios:?}");
    }

    #[test]
    fn algebra_with_constant_factor() {
        let g = GridSpec::new(256, 20.0, 1).unwrap();
        let t = tables(g);
        let params = BesovParams::homogeneous(0.5, 2.0, 1.0).unwrap();
        let f = sampling::mean_free(sampling::gaussian(&g, 10.0, 1.0, &[1.0]));
        let one = forward_transform(&RealField::from_fn(g, |_, v| v[0] = 1.0).unwrap());
        let fg = product(&f, &one);
        let lhs = besov_norm(&fg, &params, &t).unwrap().value;
        let rhs = 1.0 * besov_norm(&f, &params, &t).unwrap().value
            + inverse_unchecked(&f).sup_norm() * besov_norm(&one, &params, &t).unwrap().value;
        assert!((lhs / rhs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn square_remainder_scales_quadratically() {
        let g = GridSpec::new(512, 50.0, 1).unwrap();
        let t = tables(g);
        let params = BesovParams::homogeneous(0.5, 2.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = sampling::mixed_tones(&g, 2.0, &mut rng);
        let (e, _) = amplitude_scaling_exponent(&f, CompositionLaw::Square, &params, &t, 0.5, 5).unwrap();
        assert!((e - 2.0).abs() < 1e-9);
        let (e3, _) = amplitude_scaling_exponent(&f, CompositionLaw::SinMinusId, &params, &t, 0.1, 5).unwrap();
        assert!((e3 - 3.0).abs() < 0.01);
    }

    #[test]
    fn small_embedding_suites() {
        let setup = small_setup();
        let r = verify_embedding(EmbeddingCase::SummabilityMonotone { s: 0.5, r: 1.0, r_tilde: 2.0 }, 20, &setup).unwrap();
        assert!(r.pass && r.ratio_max <= 1.0);
        let r = verify_embedding(EmbeddingCase::InhomogeneousMonotone { s_hi: 1.0, s_lo: 0.0, r: 1.0 }, 20, &setup).unwrap();
        assert!(r.pass, "{r:?}");
        let r = verify_embedding(EmbeddingCase::B021ToL2, 20, &setup).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(verify_embedding(EmbeddingCase::SummabilityMonotone { s: 0.5, r: 2.0, r_tilde: 1.0 }, 4, &setup).is_err());
    }

    #[test]
    fn verifiers_are_deterministic() {
        let setup = small_setup();
        let case = InterpolationCase::BesovInterpolation { k: 0.0, m: 1.0, rho: 0.5 };
        let a = verify_interpolation(case, 15, &setup).unwrap();
        let b = verify_interpolation(case, 15, &setup).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.ratio_max >= a.ratio_mean && a.ratio_mean >= 0.0);
    }

    #[test]
    fn default_catalogue_passes() {
        let reports = run_catalogue(&Suite::ALL, 100, &VerifierSetup::default()).unwrap();
        assert_eq!(reports.len(), 16);
        for r in &reports {
            assert!(r.pass, "{}: {:?}", r.inequality_id, r);
        }
        assert!(Suite::parse("nope").is_err());
    }
}
