use super::metrics::CategoryMetrics;
use super::train::Labeled;
use crate::encoding::BitfieldMask;
use crate::model::TrainedModel;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub metrics: CategoryMetrics,
    /// One predicted mask per scene, in input order.
    pub predictions: Vec<BitfieldMask>,
}

/// Predicts every scene, decodes both heads to powerset categories and
/// pools the counts. Up to `threads` scenes run concurrently; results are
/// merged in scene order.
pub fn evaluate(model: &TrainedModel, scenes: &[Labeled], threshold: f32, threads: usize) -> Result<Evaluation> {
    let threads = threads.clamp(1, scenes.len().max(1));
    let predict = |(cube, _): &Labeled| model.predict(cube, threshold).map(|p| p.into_bitfield());
    let predictions: Vec<BitfieldMask> = if threads == 1 {
        scenes.iter().map(predict).collect::<Result<_>>()?
    } else {
        let chunk = scenes.len().div_ceil(threads);
        std::thread::scope(|s| {
            let handles: Vec<_> = scenes
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(predict).collect::<Result<Vec<_>>>()))
                .collect();
            let mut out = Vec::with_capacity(scenes.len());
            for h in handles {
                out.extend(h.join().map_err(|_| Error::Numerical("evaluation worker panicked".into()))??);
            }
            Ok::<_, Error>(out)
        })?
    };
    let mut metrics = CategoryMetrics::default();
    for ((_, truth), pred) in scenes.iter().zip(&predictions) {
        metrics.add(truth, pred)?;
    }
    Ok(Evaluation { metrics, predictions })
}
