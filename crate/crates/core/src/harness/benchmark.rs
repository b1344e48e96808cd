//! Batch evaluation over synthetic pairs and the five-row ablation sweep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Matcher, PipelineConfig};
use super::pipeline::{run_pipeline, StageTimings};
use super::synth::{generate_pair, SyntheticPairSpec};
use crate::descriptor::{Normalization, Voxelization};
use crate::metrics::{correspondence_rmse, inlier_ratio, rotation_error, translation_error, MetricThresholds, PairEvaluation, RecallMode};
use crate::{Error, Result};

/// A spec file: either an explicit list, or one template swept over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpecList {
    List(Vec<SyntheticPairSpec>),
    Sweep {
        #[serde(default)]
        template: SyntheticPairSpec,
        #[serde(default)]
        first_seed: u64,
        count: usize,
    },
}

impl SpecList {
    pub fn expand(&self) -> Vec<SyntheticPairSpec> {
        match self {
            SpecList::List(v) => v.clone(),
            SpecList::Sweep {
                template,
                first_seed,
                count,
            } => (0..*count as u64)
                .map(|i| SyntheticPairSpec {
                    seed: first_seed + i,
                    ..template.clone()
                })
                .collect(),
        }
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Vec<SyntheticPairSpec>> {
        let list: SpecList = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok(list.expand())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub seed: u64,
    pub voxel_sizes: [f64; 2],
    pub source_points: usize,
    pub target_points: usize,
    /// Matcher output size.
    pub initial_count: usize,
    /// Size of the set handed to the estimator.
    pub final_count: usize,
    /// Inlier ratio of the matcher output.
    pub initial_ir: Option<f64>,
    /// `None` when the pipeline (or pair generation) failed.
    pub evaluation: Option<PairEvaluation>,
    pub error: Option<String>,
    pub timings: StageTimings,
}

impl PairRecord {
    pub fn registered(&self) -> bool {
        self.evaluation.is_some_and(|e| e.registered)
    }

    /// Estimation-input inlier ratio; failed pairs count as 0.
    pub fn ir(&self) -> f64 {
        self.evaluation.map_or(0.0, |e| e.ir)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub pairs: usize,
    pub registered: usize,
    pub rr: f64,
    pub fmr: f64,
    pub mean_ir: f64,
    pub median_ir: f64,
    /// RE and TE statistics cover registered pairs only.
    pub mean_re: Option<f64>,
    pub median_re: Option<f64>,
    pub mean_te: Option<f64>,
    pub median_te: Option<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 { s[n / 2] } else { (s[n / 2 - 1] + s[n / 2]) / 2.0 })
}

/// Summary statistics recomputed from the per-pair records alone.
pub fn aggregate(records: &[PairRecord], thresholds: &MetricThresholds) -> Aggregate {
    let n = records.len();
    let irs: Vec<f64> = records.iter().map(PairRecord::ir).collect();
    let ok: Vec<&PairEvaluation> = records.iter().filter_map(|r| r.evaluation.as_ref()).filter(|e| e.registered).collect();
    let re: Vec<f64> = ok.iter().map(|e| e.re).collect();
    let te: Vec<f64> = ok.iter().map(|e| e.te).collect();
    let fmr_hits = irs.iter().filter(|&&ir| ir > thresholds.tau2).count();
    Aggregate {
        pairs: n,
        registered: ok.len(),
        rr: if n == 0 { 0.0 } else { ok.len() as f64 / n as f64 },
        fmr: if n == 0 { 0.0 } else { fmr_hits as f64 / n as f64 },
        mean_ir: mean(&irs).unwrap_or(0.0),
        median_ir: median(&irs).unwrap_or(0.0),
        mean_re: mean(&re),
        median_re: median(&re),
        mean_te: mean(&te),
        median_te: median(&te),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: PipelineConfig,
    pub records: Vec<PairRecord>,
    pub aggregate: Aggregate,
    /// Per-stage wall-clock seconds summed over all pairs.
    pub timings: StageTimings,
}

impl BenchmarkReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Generates and registers one pair; never fails, errors land in the record.
pub fn evaluate_pair(spec: &SyntheticPairSpec, config: &PipelineConfig) -> PairRecord {
    let mut record = PairRecord {
        seed: spec.seed,
        voxel_sizes: [0.0; 2],
        source_points: 0,
        target_points: 0,
        initial_count: 0,
        final_count: 0,
        initial_ir: None,
        evaluation: None,
        error: None,
        timings: StageTimings::default(),
    };
    let pair = match generate_pair(spec) {
        Ok(p) => p,
        Err(e) => {
            record.error = Some(format!("pair generation: {e}"));
            return record;
        }
    };
    record.voxel_sizes = pair.voxel_sizes;
    record.source_points = pair.source.len();
    record.target_points = pair.target.len();
    let out = match run_pipeline(&pair.source, &pair.target, config) {
        Ok(o) => o,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    let t = &config.thresholds;
    record.timings = out.timings;
    record.initial_count = out.initial.len();
    record.final_count = out.correspondences.len();
    record.initial_ir = inlier_ratio(&out.initial, &pair.gt, t.tau1).ok();
    let re = rotation_error(&out.transform, &pair.gt);
    let te = translation_error(&out.transform, &pair.gt);
    let mut eval = PairEvaluation {
        ir: inlier_ratio(&out.correspondences, &pair.gt, t.tau1).unwrap_or(0.0),
        re,
        te,
        rmse: correspondence_rmse(&pair.gt_pairs, &out.transform).ok(),
        registered: false,
    };
    eval.registered = eval.success(t, RecallMode::CrossSource).unwrap_or(false);
    record.evaluation = Some(eval);
    record
}

/// Evaluates every spec (pairs run concurrently) and aggregates.
pub fn run_benchmark(specs: &[SyntheticPairSpec], config: &PipelineConfig) -> Result<BenchmarkReport> {
    if specs.is_empty() {
        return Err(Error::invalid("benchmark needs at least one pair spec"));
    }
    config.validate()?;
    let records: Vec<PairRecord> = specs.par_iter().map(|s| evaluate_pair(s, config)).collect();
    let mut timings = StageTimings::default();
    for r in &records {
        timings += r.timings;
    }
    Ok(BenchmarkReport {
        config: config.clone(),
        aggregate: aggregate(&records, &config.thresholds),
        records,
        timings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    /// Spherical voxelization (otherwise a plain cube grid).
    pub sv: bool,
    /// Multi-scale normalization (otherwise whole-sphere).
    pub msn: bool,
    /// Soft correspondence generation.
    pub scg: bool,
    /// Mutual nearest neighbour matching.
    pub mnn: bool,
    /// Hierarchical correspondence filtering.
    pub hcf: bool,
}

/// The five ablation rows: full, without MSN, without SV and MSN, MNN
/// instead of soft matching, and without filtering.
pub const ABLATION_ROWS: [(&str, AblationFlags); 5] = [
    ("full", AblationFlags { sv: true, msn: true, scg: true, mnn: false, hcf: true }),
    ("no_msn", AblationFlags { sv: true, msn: false, scg: true, mnn: false, hcf: true }),
    ("no_sv", AblationFlags { sv: false, msn: false, scg: true, mnn: false, hcf: true }),
    ("mnn", AblationFlags { sv: true, msn: true, scg: false, mnn: true, hcf: true }),
    ("no_hcf", AblationFlags { sv: true, msn: true, scg: true, mnn: false, hcf: false }),
];

impl AblationFlags {
    /// `base` with the toggles applied; everything else is left alone.
    pub fn apply(&self, base: &PipelineConfig) -> PipelineConfig {
        let mut c = base.clone();
        c.descriptor.voxelization = if self.sv { Voxelization::Spherical } else { Voxelization::Cube };
        c.descriptor.normalization = if self.msn { Normalization::Multiscale } else { Normalization::Whole };
        c.matcher = if self.mnn { Matcher::Mnn } else { Matcher::SoftTopk };
        c.hcf_enabled = self.hcf;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub flags: AblationFlags,
    pub report: BenchmarkReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn write(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

pub fn run_ablation(specs: &[SyntheticPairSpec], base: &PipelineConfig) -> Result<AblationReport> {
    let rows = ABLATION_ROWS
        .iter()
        .map(|(name, flags)| {
            Ok(AblationRow {
                name: name.to_string(),
                flags: *flags,
                report: run_benchmark(specs, &flags.apply(base))?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(AblationReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(ir: f64, re: f64, te: f64, registered: bool) -> PairRecord {
        PairRecord {
            seed: 0,
            voxel_sizes: [0.0; 2],
            source_points: 0,
            target_points: 0,
            initial_count: 0,
            final_count: 0,
            initial_ir: None,
            evaluation: Some(PairEvaluation {
                ir,
                re,
                te,
                rmse: None,
                registered,
            }),
            error: None,
            timings: StageTimings::default(),
        }
    }

    #[test]
    fn aggregate_examples() {
        let mut failed = record(0.0, 0.0, 0.0, false);
        failed.evaluation = None;
        let recs = vec![
            record(0.5, 1.0, 0.01, true),
            record(0.05, 20.0, 0.5, false),
            record(0.3, 3.0, 0.03, true),
            failed,
        ];
        let a = aggregate(&recs, &MetricThresholds::default());
        assert_eq!(a.pairs, 4);
        assert_eq!(a.registered, 2);
        assert_eq!(a.rr, 0.5);
        assert_eq!(a.fmr, 0.5);
        assert_eq!(a.mean_re, Some(2.0));
        assert_eq!(a.median_te, Some(0.02));
        assert_eq!(a.median_ir, 0.175);
    }

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn empty_spec_list_is_rejected() {
        assert!(matches!(
            run_benchmark(&[], &PipelineConfig::default()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn ablation_rows_only_touch_their_toggles() {
        let base = PipelineConfig {
            keypoints: 99,
            ..PipelineConfig::default()
        };
        let full = ABLATION_ROWS[0].1.apply(&base);
        assert_eq!(full, base);
        let no_sv = ABLATION_ROWS[2].1.apply(&base);
        assert_eq!(no_sv.descriptor.voxelization, Voxelization::Cube);
        assert_eq!(no_sv.descriptor.normalization, Normalization::Whole);
        assert_eq!(no_sv.keypoints, 99);
        assert!(!ABLATION_ROWS[4].1.apply(&base).hcf_enabled);
        assert_eq!(ABLATION_ROWS[3].1.apply(&base).matcher, Matcher::Mnn);
    }

    #[test]
    fn sweep_specs_expand_by_seed() {
        let list: SpecList = serde_json::from_str(r#"{"count": 3, "first_seed": 10, "template": {"overlap": 0.7}}"#).unwrap();
        let specs = list.expand();
        assert_eq!(specs.iter().map(|s| s.seed).collect::<Vec<_>>(), vec![10, 11, 12]);
        assert!(specs.iter().all(|s| s.overlap == 0.7 && s.noise_sigma == 0.005));
        let list: SpecList = serde_json::from_str(r#"[{"seed": 4}]"#).unwrap();
        assert_eq!(list.expand()[0].seed, 4);
    }
}
