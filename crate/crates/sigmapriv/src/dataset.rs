//! Measurement ingestion: CSV loading, synthetic generation, normalization,
//! train/test splitting and batching.
//!
//! Feature columns are always ordered `[lat, lon, rss, aux...]` so that
//! latitude, longitude and RSS occupy columns 0..3 everywhere in the crate.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Column indices fixed by convention.
pub const COL_LAT: usize = 0;
pub const COL_LON: usize = 1;
pub const COL_RSS: usize = 2;

/// One crowdsourced report. `user_id` is a dense label in `[0, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub user_id: usize,
    pub lat: f64,
    pub lon: f64,
    pub rss: f64,
    pub aux: Vec<f64>,
}

impl Measurement {
    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(Error::Range(format!("latitude {} outside [-90, 90]", self.lat)));
        }
        if !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::Range(format!("longitude {} outside [-180, 180]", self.lon)));
        }
        let finite = self.lat.is_finite()
            && self.lon.is_finite()
            && self.rss.is_finite()
            && self.aux.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Range("non-finite measurement field".into()));
        }
        Ok(())
    }

    fn features(&self) -> Vec<f64> {
        let mut row = Vec::with_capacity(3 + self.aux.len());
        row.push(self.lat);
        row.push(self.lon);
        row.push(self.rss);
        row.extend_from_slice(&self.aux);
        row
    }
}

/// A labeled collection of measurements with `k` distinct users.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub measurements: Vec<Measurement>,
    pub k: usize,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.measurements.len()
    }

    /// Number of feature columns (user ID excluded).
    pub fn m(&self) -> usize {
        self.feature_names.len()
    }

    /// Raw (unnormalized) feature matrix plus the user-ID vector.
    pub fn raw_features(&self) -> (Mat, Vec<usize>) {
        let rows: Vec<Vec<f64>> = self.measurements.iter().map(|m| m.features()).collect();
        let ids = self.measurements.iter().map(|m| m.user_id).collect();
        (Mat::from_rows(&rows), ids)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            measurements: indices.iter().map(|&i| self.measurements[i].clone()).collect(),
            k: self.k,
            feature_names: self.feature_names.clone(),
        }
    }
}

/// Per-feature normalization statistics (population convention).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Normalized `n x m` feature block. User IDs are carried alongside for
/// evaluation only and are never part of `values`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Mat,
    pub user_ids: Vec<usize>,
}

impl FeatureMatrix {
    pub fn n(&self) -> usize {
        self.values.rows
    }

    pub fn m(&self) -> usize {
        self.values.cols
    }

    pub fn subset(&self, indices: &[usize]) -> FeatureMatrix {
        let rows: Vec<Vec<f64>> = indices.iter().map(|&i| self.values.row(i).to_vec()).collect();
        FeatureMatrix {
            values: Mat::from_rows(&rows),
            user_ids: indices.iter().map(|&i| self.user_ids[i]).collect(),
        }
    }

    /// True locations (lat, lon columns) as an n x 2 matrix.
    pub fn locations(&self) -> Mat {
        let rows: Vec<Vec<f64>> = (0..self.n())
            .map(|i| vec![self.values.at(i, COL_LAT), self.values.at(i, COL_LON)])
            .collect();
        Mat::from_rows(&rows)
    }
}

/// Disjoint train/test index sets covering the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Maps CSV header names onto the fixed feature schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    pub user: String,
    pub lat: String,
    pub lon: String,
    pub rss: String,
    #[serde(default)]
    pub aux: Vec<String>,
}

/// Load a header-row CSV using `schema` to locate columns. User labels are
/// re-indexed densely in order of first appearance; row order is preserved.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column '{name}' not found in header")))
    };
    let user_c = col(&schema.user)?;
    let lat_c = col(&schema.lat)?;
    let lon_c = col(&schema.lon)?;
    let rss_c = col(&schema.rss)?;
    let aux_c: Vec<usize> = schema.aux.iter().map(|a| col(a)).collect::<Result<_>>()?;

    let mut labels: HashMap<String, usize> = HashMap::new();
    let mut measurements = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = row_idx + 2; // 1-based, after the header row
        let num = |c: usize| -> Result<f64> {
            record
                .get(c)
                .ok_or_else(|| Error::Parse { row, msg: format!("missing field {c}") })?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse { row, msg: format!("'{}': {e}", &record[c]) })
        };
        let label = record
            .get(user_c)
            .ok_or_else(|| Error::Parse { row, msg: "missing user field".into() })?
            .trim()
            .to_string();
        let next = labels.len();
        let user_id = *labels.entry(label).or_insert(next);
        let m = Measurement {
            user_id,
            lat: num(lat_c)?,
            lon: num(lon_c)?,
            rss: num(rss_c)?,
            aux: aux_c.iter().map(|&c| num(c)).collect::<Result<_>>()?,
        };
        m.validate().map_err(|e| Error::Parse { row, msg: e.to_string() })?;
        measurements.push(m);
    }
    let k = labels.len();
    if k < 2 {
        return Err(Error::Schema(format!("need at least 2 distinct users, found {k}")));
    }
    let mut feature_names = vec!["lat".to_string(), "lon".to_string(), "rss".to_string()];
    feature_names.extend(schema.aux.iter().cloned());
    Ok(Dataset { measurements, k, feature_names })
}

/// Write a dataset back out in the fixed column order (user, lat, lon, rss, aux...).
pub fn write_csv(d: &Dataset, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = vec!["user".to_string()];
    header.extend(d.feature_names.iter().cloned());
    writeln!(f, "{}", header.join(","))?;
    for m in &d.measurements {
        let mut fields = vec![format!("u{}", m.user_id), m.lat.to_string(), m.lon.to_string(), m.rss.to_string()];
        fields.extend(m.aux.iter().map(|v| v.to_string()));
        writeln!(f, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Configuration for the synthetic generator.
///
/// Users live in Gaussian clusters around per-user home points placed on a
/// circle inside the bounding box (with seeded jitter), which makes user IDs
/// geographically inferable by construction. RSS follows log-distance path
/// loss from fixed base stations with Gaussian shadowing. Two aux features are
/// appended: one correlated with location and one pure noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub lat_range: [f64; 2],
    pub lon_range: [f64; 2],
    /// Std of each user's location cluster, in degrees.
    pub cluster_std: f64,
    /// Base station positions as (lat, lon).
    pub base_stations: Vec<[f64; 2]>,
    /// Transmit power reference in dBm at distance `d0`.
    pub p0_dbm: f64,
    /// Path-loss exponent; must be positive.
    pub eta: f64,
    /// Reference distance in degrees.
    pub d0: f64,
    /// Shadowing std in dB.
    pub shadowing_std: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            lat_range: [35.40, 35.60],
            lon_range: [24.00, 24.20],
            cluster_std: 0.008,
            base_stations: vec![[35.45, 24.05], [35.55, 24.15], [35.50, 24.10]],
            p0_dbm: -40.0,
            eta: 3.0,
            d0: 0.001,
            shadowing_std: 2.0,
        }
    }
}

/// Deterministic path-loss RSS at a point given the strongest base station.
fn path_loss_rss(cfg: &SynthConfig, lat: f64, lon: f64) -> f64 {
    cfg.base_stations
        .iter()
        .map(|bs| {
            let d = ((lat - bs[0]).powi(2) + (lon - bs[1]).powi(2)).sqrt();
            cfg.p0_dbm - 10.0 * cfg.eta * ((d.max(cfg.d0)) / cfg.d0).log10()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Generate a synthetic dataset of `n` measurements from `k` users.
/// Pure function of `(k, n, seed, cfg)`.
pub fn synthesize(k: usize, n: usize, seed: u64, cfg: &SynthConfig) -> Result<Dataset> {
    if k < 2 {
        return Err(Error::Config(format!("need k >= 2 users, got {k}")));
    }
    if n < 10 * k {
        return Err(Error::Config(format!("need n >= 10*k measurements, got n={n}, k={k}")));
    }
    if cfg.eta <= 0.0 {
        return Err(Error::Config(format!("path-loss exponent must be positive, got {}", cfg.eta)));
    }
    if cfg.base_stations.is_empty() {
        return Err(Error::Config("at least one base station required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lat_c = 0.5 * (cfg.lat_range[0] + cfg.lat_range[1]);
    let lon_c = 0.5 * (cfg.lon_range[0] + cfg.lon_range[1]);
    let r_lat = 0.35 * (cfg.lat_range[1] - cfg.lat_range[0]);
    let r_lon = 0.35 * (cfg.lon_range[1] - cfg.lon_range[0]);
    // home points on a circle, jittered, so users stay separable
    let homes: Vec<(f64, f64)> = (0..k)
        .map(|i| {
            let theta = std::f64::consts::TAU * (i as f64) / (k as f64)
                + 0.1 * rng.random::<f64>() / (k as f64);
            (lat_c + r_lat * theta.cos(), lon_c + r_lon * theta.sin())
        })
        .collect();
    let normal = StandardNormal;
    let mut measurements = Vec::with_capacity(n);
    for i in 0..n {
        let user_id = i % k;
        let (h_lat, h_lon) = homes[user_id];
        let lat = h_lat + cfg.cluster_std * <StandardNormal as Distribution<f64>>::sample(&normal, &mut rng);
        let lon = h_lon + cfg.cluster_std * <StandardNormal as Distribution<f64>>::sample(&normal, &mut rng);
        let shadow = cfg.shadowing_std * <StandardNormal as Distribution<f64>>::sample(&normal, &mut rng);
        let rss = path_loss_rss(cfg, lat, lon) + shadow;
        // aux 0: location-correlated (with enough independent noise that the
        // regression design stays well-conditioned), aux 1: pure noise
        let aux_corr = (lat - lat_c) + (lon - lon_c)
            + 0.25 * (r_lat + r_lon) * <StandardNormal as Distribution<f64>>::sample(&normal, &mut rng);
        let aux_noise: f64 = <StandardNormal as Distribution<f64>>::sample(&normal, &mut rng);
        let m = Measurement { user_id, lat, lon, rss, aux: vec![aux_corr, aux_noise] };
        m.validate()?;
        measurements.push(m);
    }
    Ok(Dataset {
        measurements,
        k,
        feature_names: vec![
            "lat".into(),
            "lon".into(),
            "rss".into(),
            "aux_loc".into(),
            "aux_noise".into(),
        ],
    })
}

/// Per-feature mean/std over the training rows only. Zero-variance features
/// get std = 1 so toy datasets still normalize.
pub fn fit_normalizer(d: &Dataset, train_indices: &[usize]) -> Result<NormStats> {
    if train_indices.is_empty() {
        return Err(Error::Config("empty training split".into()));
    }
    let m = d.m();
    let n = train_indices.len() as f64;
    let mut mean = vec![0.0; m];
    let mut std = vec![0.0; m];
    for &i in train_indices {
        for (j, v) in d.measurements[i].features().iter().enumerate() {
            mean[j] += v;
        }
    }
    for v in mean.iter_mut() {
        *v /= n;
    }
    for &i in train_indices {
        for (j, v) in d.measurements[i].features().iter().enumerate() {
            std[j] += (v - mean[j]).powi(2);
        }
    }
    for v in std.iter_mut() {
        *v = (*v / n).sqrt();
        if *v < 1e-12 {
            *v = 1.0;
        }
    }
    Ok(NormStats { mean, std })
}

/// Normalize all measurements to zero mean / unit std per feature.
pub fn normalize(d: &Dataset, s: &NormStats) -> Result<FeatureMatrix> {
    if s.mean.len() != d.m() {
        return Err(Error::Dimension(format!(
            "stats have {} features, dataset has {}",
            s.mean.len(),
            d.m()
        )));
    }
    let mut values = Mat::zeros(d.n(), d.m());
    for (i, meas) in d.measurements.iter().enumerate() {
        for (j, v) in meas.features().iter().enumerate() {
            *values.at_mut(i, j) = (v - s.mean[j]) / s.std[j];
        }
    }
    let user_ids = d.measurements.iter().map(|m| m.user_id).collect();
    Ok(FeatureMatrix { values, user_ids })
}

/// Map normalized values back to original units.
pub fn denormalize(f: &FeatureMatrix, s: &NormStats) -> Result<Mat> {
    if s.mean.len() != f.m() {
        return Err(Error::Dimension(format!(
            "stats have {} features, matrix has {}",
            s.mean.len(),
            f.m()
        )));
    }
    let mut out = f.values.clone();
    for i in 0..out.rows {
        for j in 0..out.cols {
            *out.at_mut(i, j) = out.at(i, j) * s.std[j] + s.mean[j];
        }
    }
    Ok(out)
}

/// Seeded shuffled split; `fraction` of rows (rounded) go to the train side.
pub fn split(d: &Dataset, fraction: f64, seed: u64) -> Split {
    let n = d.n();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
    let n_train = (fraction * n as f64).round() as usize;
    let test_indices = indices.split_off(n_train);
    Split { train_indices: indices, test_indices }
}

/// Contiguous batches of at most `batch_size` rows; the final partial batch
/// is retained.
pub fn batch_iter(f: &FeatureMatrix, batch_size: usize) -> Vec<FeatureMatrix> {
    assert!(batch_size >= 1, "batch_size must be >= 1");
    (0..f.n())
        .step_by(batch_size)
        .map(|start| {
            let end = (start + batch_size).min(f.n());
            let idx: Vec<usize> = (start..end).collect();
            f.subset(&idx)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn toy_dataset() -> Dataset {
        // two features' worth of hand data: rss linear-ish, aux empty
        let rows = [
            (0, 35.1, 24.1, -70.0),
            (1, 35.2, 24.2, -72.0),
            (0, 35.3, 24.3, -74.0),
            (1, 35.4, 24.4, -76.0),
        ];
        Dataset {
            measurements: rows
                .iter()
                .map(|&(u, lat, lon, rss)| Measurement { user_id: u, lat, lon, rss, aux: vec![] })
                .collect(),
            k: 2,
            feature_names: vec!["lat".into(), "lon".into(), "rss".into()],
        }
    }

    #[test]
    fn csv_dense_reindexing() {
        let mut tmp = tempfile::NamedTempFile::new().unwrap();
        writeln!(tmp, "id,latitude,longitude,signal").unwrap();
        writeln!(tmp, "a,35.1,24.1,-70").unwrap();
        writeln!(tmp, "b,35.2,24.2,-71").unwrap();
        writeln!(tmp, "a,35.3,24.3,-72").unwrap();
        let schema = CsvSchema {
            user: "id".into(),
            lat: "latitude".into(),
            lon: "longitude".into(),
            rss: "signal".into(),
            aux: vec![],
        };
        let d = load_csv(tmp.path(), &schema).unwrap();
        assert_eq!(d.k, 2);
        let ids: Vec<usize> = d.measurements.iter().map(|m| m.user_id).collect();
        assert_eq!(ids, vec![0, 1, 0]);
    }

    #[test]
    fn csv_lat_out_of_range_rejected() {
        let mut tmp = tempfile::NamedTempFile::new().unwrap();
        writeln!(tmp, "id,latitude,longitude,signal").unwrap();
        writeln!(tmp, "a,91.0,24.1,-70").unwrap();
        writeln!(tmp, "b,35.2,24.2,-71").unwrap();
        let schema = CsvSchema {
            user: "id".into(),
            lat: "latitude".into(),
            lon: "longitude".into(),
            rss: "signal".into(),
            aux: vec![],
        };
        let err = load_csv(tmp.path(), &schema).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }), "{err}");
    }

    #[test]
    fn csv_missing_column_is_schema_error() {
        let mut tmp = tempfile::NamedTempFile::new().unwrap();
        writeln!(tmp, "id,latitude,longitude").unwrap();
        writeln!(tmp, "a,35.1,24.1").unwrap();
        let schema = CsvSchema {
            user: "id".into(),
            lat: "latitude".into(),
            lon: "longitude".into(),
            rss: "signal".into(),
            aux: vec![],
        };
        assert!(matches!(load_csv(tmp.path(), &schema), Err(Error::Schema(_))));
    }

    #[test]
    fn csv_single_user_rejected() {
        let mut tmp = tempfile::NamedTempFile::new().unwrap();
        writeln!(tmp, "id,latitude,longitude,signal").unwrap();
        writeln!(tmp, "a,35.1,24.1,-70").unwrap();
        writeln!(tmp, "a,35.2,24.2,-71").unwrap();
        let schema = CsvSchema {
            user: "id".into(),
            lat: "latitude".into(),
            lon: "longitude".into(),
            rss: "signal".into(),
            aux: vec![],
        };
        assert!(matches!(load_csv(tmp.path(), &schema), Err(Error::Schema(_))));
    }

    #[test]
    fn synth_round_trip_through_csv() {
        let d = synthesize(5, 10_000, 7, &SynthConfig::default()).unwrap();
        let tmp = tempfile::NamedTempFile::new().unwrap();
        write_csv(&d, tmp.path()).unwrap();
        let schema = CsvSchema {
            user: "user".into(),
            lat: "lat".into(),
            lon: "lon".into(),
            rss: "rss".into(),
            aux: vec!["aux_loc".into(), "aux_noise".into()],
        };
        let d2 = load_csv(tmp.path(), &schema).unwrap();
        assert_eq!(d, d2);
    }

    #[test]
    fn synth_deterministic() {
        let cfg = SynthConfig::default();
        let a = synthesize(3, 200, 42, &cfg).unwrap();
        let b = synthesize(3, 200, 42, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn synth_noise_free_matches_path_loss() {
        let mut cfg = SynthConfig::default();
        cfg.shadowing_std = 0.0;
        cfg.base_stations = vec![[35.50, 24.10]];
        let d = synthesize(3, 100, 1, &cfg).unwrap();
        for m in &d.measurements {
            let expect = path_loss_rss(&cfg, m.lat, m.lon);
            assert_abs_diff_eq!(m.rss, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn synth_invalid_config() {
        let mut cfg = SynthConfig::default();
        cfg.eta = 0.0;
        assert!(matches!(synthesize(3, 100, 1, &cfg), Err(Error::Config(_))));
        let mut cfg = SynthConfig::default();
        cfg.base_stations.clear();
        assert!(matches!(synthesize(3, 100, 1, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn normalizer_constant_feature_floored() {
        let mut d = toy_dataset();
        for m in &mut d.measurements {
            m.rss = -70.0; // constant column
        }
        let idx: Vec<usize> = (0..d.n()).collect();
        let s = fit_normalizer(&d, &idx).unwrap();
        assert_eq!(s.std[COL_RSS], 1.0);
        let f = normalize(&d, &s).unwrap();
        for i in 0..f.n() {
            assert_eq!(f.values.at(i, COL_RSS), 0.0);
        }
    }

    #[test]
    fn normalizer_two_point_population_convention() {
        let mut d = toy_dataset();
        d.measurements.truncate(2);
        d.measurements[0].rss = 0.0;
        d.measurements[1].rss = 2.0;
        let s = fit_normalizer(&d, &[0, 1]).unwrap();
        assert_abs_diff_eq!(s.mean[COL_RSS], 1.0);
        assert_abs_diff_eq!(s.std[COL_RSS], 1.0);
    }

    #[test]
    fn normalized_train_moments_are_standard() {
        let d = synthesize(5, 2000, 3, &SynthConfig::default()).unwrap();
        let sp = split(&d, 0.7, 9);
        let s = fit_normalizer(&d, &sp.train_indices).unwrap();
        let f = normalize(&d, &s).unwrap();
        let train = f.subset(&sp.train_indices);
        let n = train.n() as f64;
        for j in 0..train.m() {
            let col = train.values.col(j);
            let mean: f64 = col.iter().sum::<f64>() / n;
            let var: f64 = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(var.sqrt(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn normalize_round_trip() {
        let d = synthesize(4, 500, 11, &SynthConfig::default()).unwrap();
        let idx: Vec<usize> = (0..d.n()).collect();
        let s = fit_normalizer(&d, &idx).unwrap();
        let f = normalize(&d, &s).unwrap();
        let back = denormalize(&f, &s).unwrap();
        let (raw, _) = d.raw_features();
        for (a, b) in back.data.iter().zip(&raw.data) {
            let tol = 1e-12 * b.abs().max(1.0);
            assert!((a - b).abs() <= tol, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_matrix_denormalizes_to_means() {
        let d = toy_dataset();
        let idx: Vec<usize> = (0..d.n()).collect();
        let s = fit_normalizer(&d, &idx).unwrap();
        let f = FeatureMatrix { values: Mat::zeros(2, d.m()), user_ids: vec![0, 1] };
        let back = denormalize(&f, &s).unwrap();
        for i in 0..2 {
            for j in 0..d.m() {
                assert_abs_diff_eq!(back.at(i, j), s.mean[j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn split_70_30() {
        let d = synthesize(2, 20, 5, &SynthConfig::default()).unwrap();
        let mut d10 = d.clone();
        d10.measurements.truncate(10);
        let sp = split(&d10, 0.7, 1);
        assert_eq!(sp.train_indices.len(), 7);
        assert_eq!(sp.test_indices.len(), 3);
        let mut all: Vec<usize> = sp.train_indices.iter().chain(&sp.test_indices).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn split_deterministic() {
        let d = synthesize(3, 300, 5, &SynthConfig::default()).unwrap();
        assert_eq!(split(&d, 0.7, 123), split(&d, 0.7, 123));
    }

    #[test]
    fn batch_sizes() {
        let d = synthesize(5, 2500, 5, &SynthConfig::default()).unwrap();
        let idx: Vec<usize> = (0..d.n()).collect();
        let s = fit_normalizer(&d, &idx).unwrap();
        let f = normalize(&d, &s).unwrap();
        let batches = batch_iter(&f, 1024);
        let sizes: Vec<usize> = batches.iter().map(|b| b.n()).collect();
        assert_eq!(sizes, vec![1024, 1024, 452]);
    }
}
