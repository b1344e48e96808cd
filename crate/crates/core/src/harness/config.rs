//! Pipeline configuration and its flat `key = value` file format.
//!
//! Keys are dotted (`filter.layers`). A `[section]` line prefixes the keys
//! that follow it, so `[filter]` then `layers = 5` is the same as
//! `filter.layers = 5`. `#` starts a comment.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::descriptor::{DescriptorOptions, Normalization, PatchParams, Voxelization};
use crate::estimation::{EstimatorConfig, EstimatorMethod};
use crate::filtering::FilterConfig;
use crate::metrics::MetricThresholds;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    /// Dual softmax followed by element-wise top-k.
    #[default]
    SoftTopk,
    /// Mutual nearest neighbours on cosine similarity.
    Mnn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Keypoints sampled per cloud.
    pub keypoints: usize,
    pub patch: PatchParams,
    pub descriptor: DescriptorOptions,
    pub matcher: Matcher,
    /// Correspondences kept by the top-k matcher, capped at `|P|·|Q|`.
    pub top_k: usize,
    pub temperature: f64,
    pub hcf_enabled: bool,
    pub filter: FilterConfig,
    /// `seed` is ignored; the pipeline derives the RANSAC seed from the
    /// master seed.
    pub estimator: EstimatorConfig,
    pub thresholds: MetricThresholds,
    pub seed: u64,
}

/// Defaults are tuned for the procedural scenes with the unrefined voxel
/// descriptor: a wider patch than [`PatchParams::default`], no azimuth
/// canonicalization (the local frame already fixes the azimuth) and a sharper
/// softmax than temperature 1.
impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            keypoints: 2048,
            patch: PatchParams {
                radius: 0.8,
                ..PatchParams::default()
            },
            descriptor: DescriptorOptions {
                canonicalize: false,
                ..DescriptorOptions::default()
            },
            matcher: Matcher::SoftTopk,
            top_k: 5000,
            temperature: 0.1,
            hcf_enabled: true,
            filter: FilterConfig::default(),
            estimator: EstimatorConfig::default(),
            thresholds: MetricThresholds::default(),
            seed: 0,
        }
    }
}

/// Every settable key with a one-line description.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("seed", "master seed for keypoint sampling and RANSAC"),
    ("keypoints", "keypoints sampled per cloud"),
    ("patch.radius", "patch radius in meters"),
    ("patch.azimuth_bins", "azimuth bins N"),
    ("patch.polar_bins", "polar bins M"),
    ("patch.radial_bins", "radial shells K"),
    ("descriptor.normalization", "whole | multiscale"),
    ("descriptor.voxelization", "spherical | cube"),
    ("descriptor.canonicalize", "rotate the heaviest azimuth slice to index 0"),
    ("descriptor.min_patch_points", "patches with fewer neighbors are dropped"),
    ("matching.method", "soft_topk | mnn"),
    ("matching.top_k", "correspondences kept by soft_topk"),
    ("matching.temperature", "dual softmax temperature"),
    ("filter.enabled", "run hierarchical correspondence filtering"),
    ("filter.sigma_d", "consistency distance threshold in meters"),
    ("filter.keep_ratio", "fraction kept per layer"),
    ("filter.layers", "number of filter layers"),
    ("filter.min_survivors", "a layer never cuts below this count"),
    ("filter.max_correspondences", "largest input the filter accepts"),
    ("estimator.method", "weighted_svd | ransac"),
    ("estimator.ransac_iterations", "maximum RANSAC iterations"),
    ("estimator.ransac_inlier_threshold", "RANSAC inlier residual in meters"),
    ("estimator.ransac_sample_size", "correspondences per RANSAC hypothesis"),
    ("estimator.ransac_confidence", "early-exit confidence"),
    ("metrics.tau1", "inlier distance in meters"),
    ("metrics.tau2", "inlier-ratio cutoff for feature matching recall"),
    ("metrics.re_max", "rotation error bound in degrees"),
    ("metrics.te_max", "translation error bound in meters"),
    ("metrics.rmse_max", "RMSE bound in meters"),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{value}` is not a valid value for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("`{value}` is not a boolean for {key}"))),
    }
}

fn parse_enum<T: for<'de> Deserialize<'de>>(key: &str, value: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.trim().to_string()))
        .map_err(|_| Error::Config(format!("`{value}` is not a valid value for {key}")))
}

fn enum_name<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => unreachable!("unit enum variants serialize to strings"),
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| match e {
            Error::InvalidArgument(m) => Error::Config(m),
            other => other,
        };
        if self.keypoints == 0 {
            return Err(Error::Config("keypoints must be positive".into()));
        }
        if self.top_k == 0 {
            return Err(Error::Config("matching.top_k must be positive".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config("matching.temperature must be positive".into()));
        }
        if self.descriptor.min_patch_points < 3 {
            return Err(Error::Config("descriptor.min_patch_points must be at least 3".into()));
        }
        if self.hcf_enabled && self.matcher == Matcher::SoftTopk && self.top_k > self.filter.max_correspondences {
            return Err(Error::Config(format!(
                "matching.top_k ({}) exceeds filter.max_correspondences ({})",
                self.top_k, self.filter.max_correspondences
            )));
        }
        self.patch.validate().map_err(cfg)?;
        self.filter.validate().map_err(cfg)?;
        self.estimator.validate().map_err(cfg)?;
        self.thresholds.validate().map_err(cfg)
    }

    /// Sets one dotted key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "keypoints" => self.keypoints = parse(key, value)?,
            "patch.radius" => self.patch.radius = parse(key, value)?,
            "patch.azimuth_bins" => self.patch.azimuth_bins = parse(key, value)?,
            "patch.polar_bins" => self.patch.polar_bins = parse(key, value)?,
            "patch.radial_bins" => self.patch.radial_bins = parse(key, value)?,
            "descriptor.normalization" => self.descriptor.normalization = parse_enum(key, value)?,
            "descriptor.voxelization" => self.descriptor.voxelization = parse_enum(key, value)?,
            "descriptor.canonicalize" => self.descriptor.canonicalize = parse_bool(key, value)?,
            "descriptor.min_patch_points" => self.descriptor.min_patch_points = parse(key, value)?,
            "matching.method" => self.matcher = parse_enum(key, value)?,
            "matching.top_k" => self.top_k = parse(key, value)?,
            "matching.temperature" => self.temperature = parse(key, value)?,
            "filter.enabled" => self.hcf_enabled = parse_bool(key, value)?,
            "filter.sigma_d" => self.filter.sigma_d = parse(key, value)?,
            "filter.keep_ratio" => self.filter.keep_ratio = parse(key, value)?,
            "filter.layers" => self.filter.layers = parse(key, value)?,
            "filter.min_survivors" => self.filter.min_survivors = parse(key, value)?,
            "filter.max_correspondences" => self.filter.max_correspondences = parse(key, value)?,
            "estimator.method" => self.estimator.method = parse_enum(key, value)?,
            "estimator.ransac_iterations" => self.estimator.ransac_iterations = parse(key, value)?,
            "estimator.ransac_inlier_threshold" => self.estimator.ransac_inlier_threshold = parse(key, value)?,
            "estimator.ransac_sample_size" => self.estimator.ransac_sample_size = parse(key, value)?,
            "estimator.ransac_confidence" => self.estimator.ransac_confidence = parse(key, value)?,
            "metrics.tau1" => self.thresholds.tau1 = parse(key, value)?,
            "metrics.tau2" => self.thresholds.tau2 = parse(key, value)?,
            "metrics.re_max" => self.thresholds.re_max = parse(key, value)?,
            "metrics.te_max" => self.thresholds.te_max = parse(key, value)?,
            "metrics.rmse_max" => self.thresholds.rmse_max = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<String> {
        Ok(match key {
            "seed" => self.seed.to_string(),
            "keypoints" => self.keypoints.to_string(),
            "patch.radius" => self.patch.radius.to_string(),
            "patch.azimuth_bins" => self.patch.azimuth_bins.to_string(),
            "patch.polar_bins" => self.patch.polar_bins.to_string(),
            "patch.radial_bins" => self.patch.radial_bins.to_string(),
            "descriptor.normalization" => enum_name(&self.descriptor.normalization),
            "descriptor.voxelization" => enum_name(&self.descriptor.voxelization),
            "descriptor.canonicalize" => self.descriptor.canonicalize.to_string(),
            "descriptor.min_patch_points" => self.descriptor.min_patch_points.to_string(),
            "matching.method" => enum_name(&self.matcher),
            "matching.top_k" => self.top_k.to_string(),
            "matching.temperature" => self.temperature.to_string(),
            "filter.enabled" => self.hcf_enabled.to_string(),
            "filter.sigma_d" => self.filter.sigma_d.to_string(),
            "filter.keep_ratio" => self.filter.keep_ratio.to_string(),
            "filter.layers" => self.filter.layers.to_string(),
            "filter.min_survivors" => self.filter.min_survivors.to_string(),
            "filter.max_correspondences" => self.filter.max_correspondences.to_string(),
            "estimator.method" => enum_name(&self.estimator.method),
            "estimator.ransac_iterations" => self.estimator.ransac_iterations.to_string(),
            "estimator.ransac_inlier_threshold" => self.estimator.ransac_inlier_threshold.to_string(),
            "estimator.ransac_sample_size" => self.estimator.ransac_sample_size.to_string(),
            "estimator.ransac_confidence" => self.estimator.ransac_confidence.to_string(),
            "metrics.tau1" => self.thresholds.tau1.to_string(),
            "metrics.tau2" => self.thresholds.tau2.to_string(),
            "metrics.re_max" => self.thresholds.re_max.to_string(),
            "metrics.te_max" => self.thresholds.te_max.to_string(),
            "metrics.rmse_max" => self.thresholds.rmse_max.to_string(),
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        })
    }

    /// Applies every assignment in `text` on top of `self`.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected `key = value`", n + 1)));
            };
            let key = key.trim();
            let full = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            self.set(&full, value)
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, e.to_string().trim_start_matches("invalid config: "))))?;
        }
        Ok(())
    }

    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_config_str(&std::fs::read_to_string(path)?)
    }

    /// Every key in `key = value` form, readable by [`Self::from_config_str`].
    pub fn to_config_string(&self) -> String {
        CONFIG_KEYS
            .iter()
            .map(|(k, _)| format!("{k} = {}\n", self.get(k).expect("listed keys are valid")))
            .collect()
    }
}

impl EstimatorMethod {
    pub fn name(self) -> String {
        enum_name(&self)
    }
}

impl Normalization {
    pub fn name(self) -> String {
        enum_name(&self)
    }
}

impl Voxelization {
    pub fn name(self) -> String {
        enum_name(&self)
    }
}
