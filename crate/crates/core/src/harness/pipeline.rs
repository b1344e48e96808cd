//! Keypoints, descriptors, matching, filtering and estimation in sequence.

use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Matcher, PipelineConfig};
use crate::descriptor::describe_keypoints;
use crate::estimation::estimate;
use crate::filtering::{hierarchical_filter, FilterTrace};
use crate::geometry::{farthest_point_sample, PointCloud, RigidTransform};
use crate::matching::{cosine_similarity_matrix, dual_softmax, mutual_nearest_neighbor, topk_correspondences, CorrespondenceSet};
use crate::{Error, Result};

/// Wall-clock seconds spent in each stage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub sampling: f64,
    pub description: f64,
    pub matching: f64,
    pub filtering: f64,
    pub estimation: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.sampling + self.description + self.matching + self.filtering + self.estimation
    }
}

impl std::ops::AddAssign for StageTimings {
    fn add_assign(&mut self, o: Self) {
        self.sampling += o.sampling;
        self.description += o.description;
        self.matching += o.matching;
        self.filtering += o.filtering;
        self.estimation += o.estimation;
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub transform: RigidTransform,
    /// Matcher output before filtering.
    pub initial: CorrespondenceSet,
    /// What the estimator saw: the filter survivors, or `initial` with
    /// filtering disabled.
    pub correspondences: CorrespondenceSet,
    pub trace: FilterTrace,
    pub timings: StageTimings,
    /// Keypoints that produced a descriptor, source then target.
    pub described: [usize; 2],
}

const TAG_FPS: u64 = 1;
const TAG_RANSAC: u64 = 2;

/// Independent per-stage seed drawn from the master seed.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(tag);
    rng.next_u64()
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *slot += start.elapsed().as_secs_f64();
    out
}

/// Registers `source` onto `target`. Keypoint counts are clamped to the
/// cloud sizes. Stage errors come back wrapped in [`Error::Stage`]; a run
/// that reaches matching but cannot produce a transform returns
/// [`Error::RegistrationFailed`] with the partial filter trace.
pub fn run_pipeline(source: &PointCloud, target: &PointCloud, config: &PipelineConfig) -> Result<PipelineOutput> {
    config.validate()?;
    source.reject_empty("source")?;
    target.reject_empty("target")?;
    let mut timings = StageTimings::default();

    let (src_kp, tgt_kp) = timed(&mut timings.sampling, || -> Result<_> {
        let ks = config.keypoints.min(source.len());
        let kt = config.keypoints.min(target.len());
        // one seed for both clouds, so identical clouds get identical keypoints
        let seed = derive_seed(config.seed, TAG_FPS);
        let a = farthest_point_sample(source, ks, seed)?;
        let b = farthest_point_sample(target, kt, seed)?;
        Ok((source.select(&a), target.select(&b)))
    })
    .map_err(Error::in_stage("sampling"))?;

    let (src_desc, tgt_desc) = timed(&mut timings.description, || -> Result<_> {
        let (a, _) = describe_keypoints(source, src_kp.points(), &config.patch, &config.descriptor)?;
        let (b, _) = describe_keypoints(target, tgt_kp.points(), &config.patch, &config.descriptor)?;
        Ok((a, b))
    })
    .map_err(Error::in_stage("descriptor"))?;
    log::debug!("described {} source and {} target keypoints", src_desc.len(), tgt_desc.len());

    let initial = timed(&mut timings.matching, || -> Result<_> {
        let sim = cosine_similarity_matrix(&src_desc, &tgt_desc)?;
        let sp: Vec<_> = src_desc.iter().map(|d| d.keypoint).collect();
        let tp: Vec<_> = tgt_desc.iter().map(|d| d.keypoint).collect();
        match config.matcher {
            Matcher::SoftTopk => {
                let assign = dual_softmax(&sim, config.temperature)?;
                let k = config.top_k.min(sp.len() * tp.len());
                topk_correspondences(&assign, &sp, &tp, k)
            }
            Matcher::Mnn => mutual_nearest_neighbor(&sim, &sp, &tp),
        }
    })
    .map_err(Error::in_stage("matching"))?;

    let fail = |reason: String, trace: &FilterTrace| Error::RegistrationFailed {
        reason,
        trace: Box::new(trace.clone()),
    };

    let (correspondences, trace) = if config.hcf_enabled && initial.len() >= 2 {
        timed(&mut timings.filtering, || hierarchical_filter(&initial, &config.filter)).map_err(Error::in_stage("filtering"))?
    } else {
        (initial.clone(), FilterTrace::default())
    };
    if correspondences.len() < 3 {
        return Err(fail(
            format!("only {} correspondences reached estimation", correspondences.len()),
            &trace,
        ));
    }

    let mut est_cfg = config.estimator;
    est_cfg.seed = derive_seed(config.seed, TAG_RANSAC);
    let transform = timed(&mut timings.estimation, || estimate(&correspondences, &trace, &est_cfg))
        .map_err(|e| fail(format!("estimation: {e}"), &trace))?;

    Ok(PipelineOutput {
        transform,
        described: [src_desc.len(), tgt_desc.len()],
        initial,
        correspondences,
        trace,
        timings,
    })
}
