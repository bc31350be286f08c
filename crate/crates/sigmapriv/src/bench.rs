//! Benchmark harness: JSON sweep configuration, parallel parameter sweeps,
//! tradeoff-frontier aggregation, distortion-constrained parameter lookup,
//! the adversary-variant matrix, and file export (CSV authoritative, SVG for
//! quick looks).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{self, AdversaryModel, TrainSchedule, VariantInputs, VariantKind};
use crate::dataset::{self, CsvSchema, Dataset, FeatureMatrix, NormStats, SynthConfig};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::metrics::{self, MetricWeights};
use crate::priv_basic::{self, LdpMechanism, LdpParams, NoiseParams};
use crate::priv_gap::{self, GapParams};
use crate::priv_it::{self, ItParams};
use crate::rssmap;

pub const DEFAULT_DELTA: f64 = 1e-5;
pub const DEFAULT_CLIP_FRACTION: f64 = 0.05;
pub const TRAIN_FRACTION: f64 = 0.7;

// ---------------------------------------------------------------------------
// configuration

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum DatasetSource {
    Csv {
        path: String,
        schema: CsvSchema,
    },
    Synthetic {
        k: usize,
        n: usize,
        seed: u64,
        #[serde(default)]
        config: SynthConfig,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrivatizerKind {
    /// Plain Gaussian noise; parameter is sigma.
    Noise,
    /// Local DP, analytically calibrated Gaussian; parameter is epsilon.
    Gldp,
    /// Local DP, truncated Laplacian; parameter is epsilon.
    Lldp,
    /// Adversarially trained privatizer; parameter is rho.
    Gap,
    /// Codebook privatizer; parameter is mu1.
    It,
}

impl PrivatizerKind {
    pub fn name(&self) -> &'static str {
        match self {
            PrivatizerKind::Noise => "noise",
            PrivatizerKind::Gldp => "gldp",
            PrivatizerKind::Lldp => "lldp",
            PrivatizerKind::Gap => "gap",
            PrivatizerKind::It => "it",
        }
    }
}

/// Desk-scale GAP training knobs; the parameter grid supplies rho.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct GapSection {
    pub hidden: usize,
    pub k_epochs: usize,
    pub max_rounds: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub residual: bool,
}

impl Default for GapSection {
    fn default() -> Self {
        GapSection {
            hidden: 64,
            k_epochs: 5,
            max_rounds: 30,
            batch_size: 1024,
            learning_rate: 0.001,
            residual: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ItSection {
    pub codebook_size: usize,
    pub code_batch: usize,
}

impl Default for ItSection {
    fn default() -> Self {
        ItSection { codebook_size: 51, code_batch: 128 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrivatizerSpec {
    pub kind: PrivatizerKind,
    /// Swept parameter values (sigma / epsilon / rho / mu1 by kind).
    pub grid: Vec<f64>,
    #[serde(default = "default_clip_fraction")]
    pub clip_fraction: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub gap: GapSection,
    #[serde(default)]
    pub it: ItSection,
}

fn default_clip_fraction() -> f64 {
    DEFAULT_CLIP_FRACTION
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

impl PrivatizerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Config(format!("{}: empty parameter grid", self.kind.name())));
        }
        for &p in &self.grid {
            if !p.is_finite() {
                return Err(Error::Config(format!("{}: non-finite grid value", self.kind.name())));
            }
            let ok = match self.kind {
                PrivatizerKind::Noise => p >= 0.0,
                PrivatizerKind::Gldp | PrivatizerKind::Lldp => p > 0.0 && p <= 100.0,
                PrivatizerKind::Gap => (0.0..=1.0).contains(&p),
                PrivatizerKind::It => p >= 0.0,
            };
            if !ok {
                return Err(Error::Config(format!(
                    "{}: parameter {p} outside valid range",
                    self.kind.name()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AdversarySection {
    pub hidden: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub variants: Vec<VariantKind>,
    pub alternative_weights: MetricWeights,
}

impl Default for AdversarySection {
    fn default() -> Self {
        AdversarySection {
            hidden: 256,
            max_epochs: 500,
            patience: 10,
            batch_size: 1024,
            learning_rate: 0.001,
            variants: vec![VariantKind::Baseline],
            alternative_weights: MetricWeights { v1: 1.0, v2: 0.0, w1: 1.0, w2: 1.0 },
        }
    }
}

impl AdversarySection {
    pub fn schedule(&self) -> TrainSchedule {
        TrainSchedule {
            max_epochs: self.max_epochs,
            patience: self.patience,
            tolerance: 1e-4,
            batch_size: self.batch_size,
            hidden: self.hidden,
            learning_rate: self.learning_rate,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".into() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub dataset: DatasetSource,
    pub privatizers: Vec<PrivatizerSpec>,
    #[serde(default)]
    pub metrics: MetricWeights,
    #[serde(default)]
    pub adversary: AdversarySection,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output: OutputSection,
    /// Worker cap for the parallel sweep; default = rayon's global pool.
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<SweepConfig> {
        let cfg: SweepConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.privatizers.is_empty() {
            return Err(Error::Config("no privatizers configured".into()));
        }
        for spec in &self.privatizers {
            spec.validate()?;
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed required".into()));
        }
        if let DatasetSource::Synthetic { k, n, .. } = self.dataset {
            if k < 2 || n < 10 * k {
                return Err(Error::Config(format!("synthetic dataset too small: k={k}, n={n}")));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// sweep records

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub privatizer: String,
    pub parameter: f64,
    pub seed: u64,
    pub p1: f64,
    pub p2: f64,
    pub p: f64,
    pub u1: f64,
    pub u2: f64,
    pub u: f64,
    pub rmse_dbm: f64,
    pub variant: String,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailureNote {
    pub privatizer: String,
    pub parameter: f64,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub rows: Vec<TradeoffRow>,
    pub failures: Vec<FailureNote>,
}

// ---------------------------------------------------------------------------
// data preparation and the per-run pipeline

/// The 70/30 split with normalization fitted on the training block only.
pub struct PreparedData {
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
    pub train_labels: Vec<usize>,
    pub test_labels: Vec<usize>,
    pub train_locs: Mat,
    pub test_locs: Mat,
    pub stats: NormStats,
    pub k: usize,
}

pub fn load_dataset(source: &DatasetSource) -> Result<Dataset> {
    match source {
        DatasetSource::Csv { path, schema } => dataset::load_csv(Path::new(path), schema),
        DatasetSource::Synthetic { k, n, seed, config } => {
            dataset::synthesize(*k, *n, *seed, config)
        }
    }
}

pub fn prepare(d: &Dataset, seed: u64) -> Result<PreparedData> {
    let split = dataset::split(d, TRAIN_FRACTION, seed);
    let stats = dataset::fit_normalizer(d, &split.train_indices)?;
    let full = dataset::normalize(d, &stats)?;
    let train = full.subset(&split.train_indices);
    let test = full.subset(&split.test_indices);
    let (train_labels, test_labels) = (train.user_ids.clone(), test.user_ids.clone());
    let (train_locs, test_locs) = (train.locations(), test.locations());
    Ok(PreparedData {
        train,
        test,
        train_labels,
        test_labels,
        train_locs,
        test_locs,
        stats,
        k: d.k,
    })
}

fn mix_seed(base: u64, tag: u64) -> u64 {
    // splitmix-style mix so derived streams don't collide
    let mut z = base.wrapping_add(tag.wrapping_mul(0x9e3779b97f4a7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Obfuscate the train and test blocks with one privatizer at one parameter.
pub fn obfuscate_blocks(
    spec: &PrivatizerSpec,
    param: f64,
    data: &PreparedData,
    weights: &MetricWeights,
    seed: u64,
) -> Result<(FeatureMatrix, FeatureMatrix)> {
    match spec.kind {
        PrivatizerKind::Noise => {
            let p = NoiseParams { sigma: param };
            Ok((
                priv_basic::noise_obfuscate(&data.train, &p, mix_seed(seed, 1)),
                priv_basic::noise_obfuscate(&data.test, &p, mix_seed(seed, 2)),
            ))
        }
        PrivatizerKind::Gldp | PrivatizerKind::Lldp => {
            let clip_half = priv_basic::choose_clip(&data.train, spec.clip_fraction);
            let p = LdpParams {
                epsilon: param,
                delta: spec.delta,
                clip_half,
                mechanism: if spec.kind == PrivatizerKind::Gldp {
                    LdpMechanism::GaussianAnalytic
                } else {
                    LdpMechanism::TruncatedLaplacian
                },
            };
            Ok((
                priv_basic::ldp_obfuscate(&data.train, &p, mix_seed(seed, 3))?,
                priv_basic::ldp_obfuscate(&data.test, &p, mix_seed(seed, 4))?,
            ))
        }
        PrivatizerKind::Gap => {
            let p = GapParams {
                rho: param,
                weights: *weights,
                k_epochs: spec.gap.k_epochs,
                max_rounds: spec.gap.max_rounds,
                tolerance: 1e-4,
                hidden: spec.gap.hidden,
                batch_size: spec.gap.batch_size,
                learning_rate: spec.gap.learning_rate,
                residual: spec.gap.residual,
                seed: mix_seed(seed, 5),
            };
            let model = priv_gap::train_gap(&data.train, &p)?;
            Ok((priv_gap::gap_obfuscate(&model, &data.train)?, priv_gap::gap_obfuscate(&model, &data.test)?))
        }
        PrivatizerKind::It => {
            let kde = priv_it::fit_kde(&data.train.values)?;
            let p = ItParams {
                mu1: param,
                codebook_size: spec.it.codebook_size,
                code_batch: spec.it.code_batch,
                weights: *weights,
                seed: mix_seed(seed, 6),
            };
            Ok((
                priv_it::it_obfuscate(&data.train, &kde, &p)?,
                priv_it::it_obfuscate(&data.test, &kde, &ItParams { seed: mix_seed(seed, 7), ..p })?,
            ))
        }
    }
}

/// One (privatizer, parameter, seed) benchmark run against the Baseline
/// adversary.
pub fn run_one(
    spec: &PrivatizerSpec,
    param: f64,
    seed: u64,
    data: &PreparedData,
    weights: &MetricWeights,
    schedule: &TrainSchedule,
) -> Result<TradeoffRow> {
    let start = Instant::now();
    let (obf_train, obf_test) = obfuscate_blocks(spec, param, data, weights, seed)?;
    let adv = adversary::train_adversary(
        &obf_train,
        &data.train_labels,
        &data.train_locs,
        data.k,
        weights,
        schedule,
        mix_seed(seed, 8),
    )?;
    let report =
        adversary::evaluate(&adv, &obf_test, &data.test_labels, &data.test_locs, weights)?;
    let u1 = metrics::u1_distortion(&data.test.values, &obf_test.values)?;
    let u2 = metrics::u2_map_error(&data.test.values, &obf_test.values)?;
    let u = metrics::composite_utility(u1, u2, weights);
    let map = rssmap::fit(&obf_train.values, 0.0)?;
    let rmse_dbm = rssmap::rmse(&map, &data.test.values, &data.stats)?;
    Ok(TradeoffRow {
        privatizer: spec.kind.name().into(),
        parameter: param,
        seed,
        p1: report.p1,
        p2: report.p2,
        p: report.composite,
        u1,
        u2,
        u,
        rmse_dbm,
        variant: "baseline".into(),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Run the full sweep: every (privatizer, parameter, seed) combination in
/// parallel. Failed runs become notes, not aborts; ordering is canonical.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let d = load_dataset(&cfg.dataset)?;
    let schedule = cfg.adversary.schedule();

    // data preparation depends only on the seed; share it across privatizers
    let mut prepared: BTreeMap<u64, PreparedData> = BTreeMap::new();
    for &seed in &cfg.seeds {
        prepared.insert(seed, prepare(&d, seed)?);
    }

    let mut tasks: Vec<(usize, f64, u64)> = Vec::new();
    for (si, spec) in cfg.privatizers.iter().enumerate() {
        for &param in &spec.grid {
            for &seed in &cfg.seeds {
                tasks.push((si, param, seed));
            }
        }
    }

    let run_all = || -> Vec<std::result::Result<TradeoffRow, FailureNote>> {
        tasks
            .par_iter()
            .map(|&(si, param, seed)| {
                let spec = &cfg.privatizers[si];
                run_one(spec, param, seed, &prepared[&seed], &cfg.metrics, &schedule).map_err(
                    |e| FailureNote {
                        privatizer: spec.kind.name().into(),
                        parameter: param,
                        seed,
                        error: e.to_string(),
                    },
                )
            })
            .collect()
    };
    let results = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?
            .install(run_all),
        None => run_all(),
    };

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(note) => failures.push(note),
        }
    }
    sort_rows(&mut rows);
    failures.sort_by(|a, b| {
        (&a.privatizer, a.parameter, a.seed)
            .partial_cmp(&(&b.privatizer, b.parameter, b.seed))
            .unwrap()
    });
    Ok(SweepOutcome { rows, failures })
}

fn sort_rows(rows: &mut [TradeoffRow]) {
    rows.sort_by(|a, b| {
        (&a.privatizer, a.parameter, a.seed, &a.variant)
            .partial_cmp(&(&b.privatizer, b.parameter, b.seed, &b.variant))
            .unwrap()
    });
}

// ---------------------------------------------------------------------------
// frontier aggregation

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierPoint {
    pub parameter: f64,
    pub p_mean: f64,
    pub p_std: f64,
    pub u_mean: f64,
    pub u_std: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierCurve {
    pub privatizer: String,
    pub points: Vec<FrontierPoint>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Group rows by privatizer, average P and U over seeds per parameter, sort
/// by parameter.
pub fn frontier(rows: &[TradeoffRow]) -> Result<Vec<FrontierCurve>> {
    if rows.is_empty() {
        return Err(Error::Config("frontier needs at least one row".into()));
    }
    let mut groups: BTreeMap<&str, BTreeMap<u64, (f64, Vec<f64>, Vec<f64>)>> = BTreeMap::new();
    for row in rows {
        let by_param = groups.entry(&row.privatizer).or_default();
        // key on the exact bit pattern so equal parameters group together
        let entry = by_param
            .entry(row.parameter.to_bits())
            .or_insert_with(|| (row.parameter, Vec::new(), Vec::new()));
        entry.1.push(row.p);
        entry.2.push(row.u);
    }
    let mut curves = Vec::new();
    for (name, by_param) in groups {
        let mut points: Vec<FrontierPoint> = by_param
            .into_values()
            .map(|(parameter, ps, us)| {
                let (p_mean, p_std) = mean_std(&ps);
                let (u_mean, u_std) = mean_std(&us);
                FrontierPoint { parameter, p_mean, p_std, u_mean, u_std, seeds: ps.len() }
            })
            .collect();
        points.sort_by(|a, b| a.parameter.partial_cmp(&b.parameter).unwrap());
        curves.push(FrontierCurve { privatizer: name.into(), points });
    }
    Ok(curves)
}

// ---------------------------------------------------------------------------
// distortion-constrained parameter lookup

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum LookupResult {
    /// Parameter meeting the distortion bound with maximal privacy.
    Parameter { value: f64, expected_privacy: f64 },
    /// Target outside the swept distortion range.
    OutOfRange { min_distortion: f64, max_distortion: f64 },
}

/// Per-privatizer parameter choice under the constraint `-U1 <= target`,
/// interpolated linearly along the parameter grid.
pub fn param_for_distortion(rows: &[TradeoffRow], target: f64) -> Result<Vec<(String, LookupResult)>> {
    let curves = frontier(rows)?;
    // rebuild per-parameter mean distortion (-U1) alongside privacy
    let mut dist: BTreeMap<&str, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for row in rows {
        dist.entry(&row.privatizer)
            .or_default()
            .entry(row.parameter.to_bits())
            .or_default()
            .push(-row.u1);
    }
    let mut out = Vec::new();
    for curve in &curves {
        let by_param = &dist[curve.privatizer.as_str()];
        // (parameter, mean distortion, mean privacy) in grid order
        let pts: Vec<(f64, f64, f64)> = curve
            .points
            .iter()
            .map(|pt| {
                let ds = &by_param[&pt.parameter.to_bits()];
                (pt.parameter, ds.iter().sum::<f64>() / ds.len() as f64, pt.p_mean)
            })
            .collect();
        let lo = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        if target < lo || target > hi {
            out.push((
                curve.privatizer.clone(),
                LookupResult::OutOfRange { min_distortion: lo, max_distortion: hi },
            ));
            continue;
        }
        // candidates: every grid point within the bound, plus every segment
        // crossing the bound (interpolated to equality); keep max privacy
        let mut best: Option<(f64, f64)> = None; // (parameter, privacy)
        let mut consider = |param: f64, privacy: f64| {
            if best.is_none() || privacy > best.unwrap().1 {
                best = Some((param, privacy));
            }
        };
        for &(param, d, p) in &pts {
            if d <= target {
                consider(param, p);
            }
        }
        for w in pts.windows(2) {
            let (p0, d0, pr0) = w[0];
            let (p1, d1, pr1) = w[1];
            if (d0 - target) * (d1 - target) < 0.0 {
                let t = (target - d0) / (d1 - d0);
                consider(p0 + t * (p1 - p0), pr0 + t * (pr1 - pr0));
            }
        }
        match best {
            Some((value, expected_privacy)) => out.push((
                curve.privatizer.clone(),
                LookupResult::Parameter { value, expected_privacy },
            )),
            None => out.push((
                curve.privatizer.clone(),
                LookupResult::OutOfRange { min_distortion: lo, max_distortion: hi },
            )),
        }
    }
    Ok(out)
}

/// Invert the utility curve of one privatizer: the parameter whose mean
/// composite utility is closest to `target` (interpolating between grid
/// points when the curve crosses it). None when the target is unreachable.
pub fn param_for_utility(curve: &FrontierCurve, target: f64) -> Option<f64> {
    let lo = curve.points.iter().map(|p| p.u_mean).fold(f64::INFINITY, f64::min);
    let hi = curve.points.iter().map(|p| p.u_mean).fold(f64::NEG_INFINITY, f64::max);
    if target < lo || target > hi {
        return None;
    }
    for pt in &curve.points {
        if pt.u_mean == target {
            return Some(pt.parameter);
        }
    }
    for w in curve.points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if (a.u_mean - target) * (b.u_mean - target) < 0.0 {
            let t = (target - a.u_mean) / (b.u_mean - a.u_mean);
            return Some(a.parameter + t * (b.parameter - a.parameter));
        }
    }
    None
}

// ---------------------------------------------------------------------------
// adversary-variant matrix

#[derive(Debug, Clone, Serialize)]
pub struct VariantCell {
    pub privatizer: String,
    pub parameter: f64,
    pub variant: String,
    pub p_mean: f64,
    pub p1_mean: f64,
    pub p2_mean: f64,
}

#[derive(Debug)]
pub struct VariantMatrix {
    pub cells: Vec<VariantCell>,
    /// Privatizers skipped because the target utility was unreachable.
    pub notes: Vec<String>,
}

fn variant_name(kind: VariantKind) -> &'static str {
    match kind {
        VariantKind::Baseline => "baseline",
        VariantKind::Unobfuscated => "unobfuscated",
        VariantKind::Aggregate => "aggregate",
        VariantKind::Alternative => "alternative",
    }
}

/// Matched-utility protocol: pick each privatizer's parameter so its composite
/// utility matches `target_utility`, then score every privatizer against
/// every configured adversary variant.
pub fn variant_matrix(
    cfg: &SweepConfig,
    rows: &[TradeoffRow],
    target_utility: f64,
) -> Result<VariantMatrix> {
    cfg.validate()?;
    let curves = frontier(rows)?;
    let mut matched: Vec<(usize, f64)> = Vec::new(); // (spec index, parameter)
    let mut notes = Vec::new();
    for (si, spec) in cfg.privatizers.iter().enumerate() {
        let Some(curve) = curves.iter().find(|c| c.privatizer == spec.kind.name()) else {
            notes.push(format!("{}: no sweep rows; omitted", spec.kind.name()));
            continue;
        };
        match param_for_utility(curve, target_utility) {
            Some(p) => matched.push((si, p)),
            None => notes.push(format!(
                "{}: target utility {target_utility} unreachable on swept grid; omitted",
                spec.kind.name()
            )),
        }
    }
    if matched.is_empty() {
        return Err(Error::Config("no privatizer reaches the target utility".into()));
    }

    let d = load_dataset(&cfg.dataset)?;
    let schedule = cfg.adversary.schedule();
    // accumulate P across seeds per (privatizer, variant)
    let mut acc: BTreeMap<(String, String), (f64, Vec<f64>, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for &seed in &cfg.seeds {
        let data = prepare(&d, seed)?;
        let obf: Vec<(usize, f64, FeatureMatrix, FeatureMatrix)> = matched
            .par_iter()
            .map(|&(si, param)| {
                let (tr, te) =
                    obfuscate_blocks(&cfg.privatizers[si], param, &data, &cfg.metrics, seed)?;
                Ok((si, param, tr, te))
            })
            .collect::<Result<_>>()?;
        let all_train: Vec<&FeatureMatrix> = obf.iter().map(|(_, _, tr, _)| tr).collect();
        for (si, param, obf_train, obf_test) in &obf {
            let spec = &cfg.privatizers[*si];
            let inputs = VariantInputs {
                own_obf: obf_train,
                raw: &data.train,
                all_obf: &all_train,
                true_labels: &data.train_labels,
                true_locs: &data.train_locs,
                alternative_weights: cfg.adversary.alternative_weights,
            };
            let models: Vec<(VariantKind, Result<AdversaryModel>)> = cfg
                .adversary
                .variants
                .par_iter()
                .map(|&kind| {
                    (
                        kind,
                        adversary::make_variant(
                            kind,
                            &inputs,
                            data.k,
                            &cfg.metrics,
                            &schedule,
                            mix_seed(seed, 16 + kind as u64),
                        ),
                    )
                })
                .collect();
            for (kind, model) in models {
                let model = model?;
                let report = adversary::evaluate(
                    &model,
                    obf_test,
                    &data.test_labels,
                    &data.test_locs,
                    &cfg.metrics,
                )?;
                let entry = acc
                    .entry((spec.kind.name().into(), variant_name(kind).into()))
                    .or_insert_with(|| (*param, Vec::new(), Vec::new(), Vec::new()));
                entry.1.push(report.composite);
                entry.2.push(report.p1);
                entry.3.push(report.p2);
            }
        }
    }
    let cells = acc
        .into_iter()
        .map(|((privatizer, variant), (parameter, ps, p1s, p2s))| VariantCell {
            privatizer,
            parameter,
            variant,
            p_mean: ps.iter().sum::<f64>() / ps.len() as f64,
            p1_mean: p1s.iter().sum::<f64>() / p1s.len() as f64,
            p2_mean: p2s.iter().sum::<f64>() / p2s.len() as f64,
        })
        .collect();
    Ok(VariantMatrix { cells, notes })
}

// ---------------------------------------------------------------------------
// file export

pub fn tradeoff_csv(rows: &[TradeoffRow]) -> String {
    let mut out =
        String::from("privatizer,parameter,seed,p1,p2,p,u1,u2,u,rmse_dbm,variant,wall_ms\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.privatizer, r.parameter, r.seed, r.p1, r.p2, r.p, r.u1, r.u2, r.u, r.rmse_dbm,
            r.variant, r.wall_ms
        )
        .unwrap();
    }
    out
}

pub fn parse_tradeoff_csv(text: &str) -> Result<Vec<TradeoffRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<TradeoffRow>().enumerate() {
        rows.push(rec.map_err(|e| Error::Parse { row: i + 2, msg: e.to_string() })?);
    }
    Ok(rows)
}

pub fn frontier_csv(curve: &FrontierCurve) -> String {
    let mut out = String::from("parameter,p_mean,p_std,u_mean,u_std,seeds\n");
    for pt in &curve.points {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            pt.parameter, pt.p_mean, pt.p_std, pt.u_mean, pt.u_std, pt.seeds
        )
        .unwrap();
    }
    out
}

pub fn variants_csv(matrix: &VariantMatrix) -> String {
    let mut out = String::from("privatizer,parameter,variant,p_mean,p1_mean,p2_mean\n");
    for c in &matrix.cells {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            c.privatizer, c.parameter, c.variant, c.p_mean, c.p1_mean, c.p2_mean
        )
        .unwrap();
    }
    for note in &matrix.notes {
        writeln!(out, "# {note}").unwrap();
    }
    out
}

/// Minimal scatter/line plot of the (U, P) frontier per privatizer. The CSV
/// is authoritative; this is for eyeballing.
pub fn frontier_svg(curves: &[FrontierCurve]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const PAD: f64 = 50.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let all: Vec<(f64, f64)> = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| (p.u_mean, p.p_mean)))
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in &all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    );
    // axes
    writeln!(
        svg,
        "<line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        H - PAD,
        W - PAD,
        H - PAD
    )
    .unwrap();
    writeln!(svg, "<line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{}\" stroke=\"black\"/>", H - PAD)
        .unwrap();
    writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\">utility U</text>",
        W / 2.0 - 20.0,
        H - 12.0
    )
    .unwrap();
    writeln!(svg, "<text x=\"8\" y=\"{}\" font-size=\"12\">privacy P</text>", H / 2.0).unwrap();
    for (ci, curve) in curves.iter().enumerate() {
        let color = COLORS[ci % COLORS.len()];
        let pts: Vec<String> = curve
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.u_mean), sy(p.p_mean)))
            .collect();
        if pts.len() > 1 {
            writeln!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
                pts.join(" ")
            )
            .unwrap();
        }
        for p in &curve.points {
            writeln!(
                svg,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>",
                sx(p.u_mean),
                sy(p.p_mean)
            )
            .unwrap();
        }
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{}</text>",
            W - PAD + 4.0,
            PAD + 16.0 * ci as f64,
            curve.privatizer
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

/// Binned (lat, lon, mean RSS) grid of a raw dataset.
pub fn heatmap_csv(d: &Dataset, bins: usize) -> Result<String> {
    if bins == 0 {
        return Err(Error::Config("heat map needs at least one bin".into()));
    }
    if d.n() == 0 {
        return Err(Error::Config("empty dataset".into()));
    }
    let (mut lat0, mut lat1, mut lon0, mut lon1) =
        (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for mm in &d.measurements {
        lat0 = lat0.min(mm.lat);
        lat1 = lat1.max(mm.lat);
        lon0 = lon0.min(mm.lon);
        lon1 = lon1.max(mm.lon);
    }
    let wlat = ((lat1 - lat0) / bins as f64).max(1e-12);
    let wlon = ((lon1 - lon0) / bins as f64).max(1e-12);
    let mut sums = vec![0.0f64; bins * bins];
    let mut counts = vec![0usize; bins * bins];
    for mm in &d.measurements {
        let i = (((mm.lat - lat0) / wlat) as usize).min(bins - 1);
        let j = (((mm.lon - lon0) / wlon) as usize).min(bins - 1);
        sums[i * bins + j] += mm.rss;
        counts[i * bins + j] += 1;
    }
    let mut out = String::from("lat_center,lon_center,mean_rss,count\n");
    for i in 0..bins {
        for j in 0..bins {
            let c = counts[i * bins + j];
            if c == 0 {
                continue;
            }
            writeln!(
                out,
                "{},{},{},{}",
                lat0 + (i as f64 + 0.5) * wlat,
                lon0 + (j as f64 + 0.5) * wlon,
                sums[i * bins + j] / c as f64,
                c
            )
            .unwrap();
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub version: String,
    pub rows: usize,
    pub failures: usize,
}

pub fn run_manifest(cfg: &SweepConfig, outcome: &SweepOutcome) -> Result<RunManifest> {
    let canonical = serde_json::to_string(cfg)?;
    let mut h = std::collections::hash_map::DefaultHasher::new();
    canonical.hash(&mut h);
    Ok(RunManifest {
        config_hash: format!("{:016x}", h.finish()),
        seeds: cfg.seeds.clone(),
        version: env!("CARGO_PKG_VERSION").into(),
        rows: outcome.rows.len(),
        failures: outcome.failures.len(),
    })
}

/// Write `tradeoff.csv` and `run_manifest.json` into `dir`.
pub fn write_sweep_outputs(cfg: &SweepConfig, outcome: &SweepOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("tradeoff.csv"), tradeoff_csv(&outcome.rows))?;
    let manifest = run_manifest(cfg, outcome)?;
    std::fs::write(dir.join("run_manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Write `frontier_<privatizer>.csv` files and `frontier.svg` into `dir`.
pub fn write_frontier_outputs(curves: &[FrontierCurve], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for curve in curves {
        std::fs::write(dir.join(format!("frontier_{}.csv", curve.privatizer)), frontier_csv(curve))?;
    }
    std::fs::write(dir.join("frontier.svg"), frontier_svg(curves))?;
    Ok(())
}
