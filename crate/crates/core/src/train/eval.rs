use rayon::prelude::*;

use super::Model;
use crate::data::Sample;
use crate::detector::{
    match_anchors, postprocess, Assignment, Detection, MatchThresholds, PostprocessConfig,
};
use crate::error::{Error, Result};
use crate::metrics::{match_truths, EvalReport, ObjectOutcome};
use crate::tensor::FeatureTensor;

/// Minimum IoU for a detection to count as finding an object.
const BRIDGE_IOU: f64 = 0.5;

pub fn detect(
    model: &Model,
    image: &FeatureTensor,
    config: &PostprocessConfig,
) -> Result<Vec<Detection>> {
    let output = model.forward(image)?;
    Ok(postprocess(&output, model.anchors(), model.config.image_size, config))
}

/// Classification view of one image: each truth takes the class of its
/// best-overlapping detection. Its ROC scores are the per-class maxima over
/// the anchors the training matcher assigns to it.
pub fn object_outcomes(
    model: &Model,
    sample: &Sample,
    config: &PostprocessConfig,
) -> Result<Vec<ObjectOutcome>> {
    let output = model.forward(&sample.image)?;
    let anchors = model.anchors();
    let detections = postprocess(&output, anchors, model.config.image_size, config);
    let predicted = match_truths(&detections, &sample.truths, BRIDGE_IOU);
    let assignments = match_anchors(&anchors.anchors, &sample.truths, MatchThresholds::default());
    let k = model.n_classes();
    let mut class_scores = vec![vec![0.0_f64; k]; sample.truths.len()];
    for (a, assignment) in assignments.iter().enumerate() {
        if let Assignment::Positive { truth, .. } = *assignment {
            for (best, &s) in class_scores[truth].iter_mut().zip(output.anchor_scores(a)) {
                *best = best.max(s);
            }
        }
    }
    Ok(sample
        .truths
        .iter()
        .zip(predicted)
        .zip(class_scores)
        .map(|((t, p), scores)| ObjectOutcome {
            actual: t.class_index,
            predicted: p,
            class_scores: scores,
        })
        .collect())
}

pub fn evaluate(
    model: &Model,
    samples: &[Sample],
    class_names: &[String],
    config: &PostprocessConfig,
) -> Result<EvalReport> {
    if class_names.len() != model.n_classes() {
        return Err(Error::Config(format!(
            "model has {} classes, evaluation names {}",
            model.n_classes(),
            class_names.len()
        )));
    }
    let per_image: Vec<Vec<ObjectOutcome>> = samples
        .par_iter()
        .map(|s| object_outcomes(model, s, config))
        .collect::<Result<_>>()?;
    let outcomes: Vec<ObjectOutcome> = per_image.into_iter().flatten().collect();
    EvalReport::from_outcomes(class_names, &outcomes)
}
