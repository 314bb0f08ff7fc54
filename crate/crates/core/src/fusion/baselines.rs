use super::{argmax, Prediction};
use crate::dataio::{DatasetSchema, ExpertOutputRecord};
use crate::error::{Error, Result};

fn require_prob(schema: &DatasetSchema) -> Result<()> {
    if schema.prob_outputs {
        Ok(())
    } else {
        Err(Error::NotProbabilityOutputs)
    }
}

/// Mean of the experts' probability vectors.
pub fn ensemble_average(schema: &DatasetSchema, record: &ExpertOutputRecord) -> Result<Prediction> {
    require_prob(schema)?;
    let k = record.num_experts() as f64;
    let mut scores = vec![0.0; record.output_dim()];
    for v in record.experts() {
        for (s, x) in scores.iter_mut().zip(v) {
            *s += x;
        }
    }
    scores.iter_mut().for_each(|s| *s /= k);
    Ok(Prediction::from_scores(scores))
}

/// The expert whose largest class probability is highest, and its vector.
pub fn confidence_select(schema: &DatasetSchema, record: &ExpertOutputRecord) -> Result<(usize, Prediction)> {
    require_prob(schema)?;
    let confidence: Vec<f64> = record
        .experts()
        .map(|v| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let k = argmax(&confidence);
    Ok((k, Prediction::from_scores(record.expert(k).to_vec())))
}

/// The expert of the record's true domain, and its vector.
pub fn oracle_select(record: &ExpertOutputRecord) -> (usize, Prediction) {
    let k = record.domain;
    (k, Prediction::from_scores(record.expert(k).to_vec()))
}
