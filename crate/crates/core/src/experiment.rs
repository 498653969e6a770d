//! Evaluating a trained network on samples, and the scale ablation sweep.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::metrics::{evaluate_dataset, GroundTruth, MetricsConfig, MetricsReport, SaliencyMap};
use crate::model::{MsdnnModel, NetworkConfig};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::train::{make_batch, train_loop, LogRow, TrainConfig, TrainOutputs};

/// Final maps `[1, S, S]` for every sample, in order.
pub fn predict_samples<S: Scalar>(model: &MsdnnModel<S>, samples: &[Sample], batch_size: usize) -> Result<Vec<Tensor>> {
    let size = model.config().input_size;
    let mut out = Vec::with_capacity(samples.len());
    let idx: Vec<usize> = (0..samples.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let (images, _) = make_batch::<S>(samples, chunk)?;
        let maps = model.predict(&images)?.cast::<f64>();
        for i in 0..chunk.len() {
            out.push(maps.batch_item(i).into_reshaped(&[1, size, size])?);
        }
    }
    Ok(out)
}

/// Predict every sample and score the maps against the sample masks.
pub fn evaluate_model<S: Scalar>(model: &MsdnnModel<S>, samples: &[Sample], cfg: &MetricsConfig) -> Result<MetricsReport> {
    let preds = predict_samples(model, samples, 8)?;
    let maps = preds
        .iter()
        .zip(samples)
        .map(|(p, s)| SaliencyMap::new(p, s.id.clone()))
        .collect::<Result<Vec<_>>>()?;
    let gts = samples
        .iter()
        .map(|s| GroundTruth::new(&s.mask, s.id.clone()))
        .collect::<Result<Vec<_>>>()?;
    evaluate_dataset(&maps, &gts, cfg)
}

/// Enabled-scale sets of the sweep, coarsest head first.
pub const ABLATION_SCALES: [&[usize]; 4] = [&[4], &[4, 3], &[4, 3, 2], &[4, 3, 2, 1]];

/// `Sm4`, `Sm43`, ... for a descending scale list.
pub fn scales_label(scales: &[usize]) -> String {
    let mut sorted = scales.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let digits: String = sorted.iter().map(|s| s.to_string()).collect();
    format!("Sm{digits}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub config: String,
    pub fmeasure: f64,
    pub mae: f64,
    pub auc: Option<f64>,
    pub final_loss: f64,
    pub iterations: usize,
}

/// Train one network per scale set from the same seeds and score each on
/// `eval`.
pub fn run_ablation(
    base: &NetworkConfig,
    train: &TrainConfig,
    model_seed: u64,
    train_set: &[Sample],
    eval: &[Sample],
    metrics: &MetricsConfig,
    mut on_row: impl FnMut(&AblationRow),
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for scales in ABLATION_SCALES {
        let cfg = base.clone().with_scales(scales);
        let mut model = MsdnnModel::<f64>::init(cfg, model_seed)?;
        let log: Vec<LogRow> = train_loop(&mut model, train_set, train, TrainOutputs::default())?;
        let report = evaluate_model(&model, eval, metrics)?;
        let row = AblationRow {
            config: scales_label(scales),
            fmeasure: report.mean.fmeasure,
            mae: report.mean.mae,
            auc: report.mean.auc,
            final_loss: log.last().map_or(f64::NAN, |r| r.final_loss),
            iterations: log.len(),
        };
        on_row(&row);
        rows.push(row);
    }
    Ok(rows)
}

pub const ABLATION_HEADER: &str = "config,fmeasure,mae,auc";

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = format!("{ABLATION_HEADER}\n");
    for r in rows {
        let auc = r.auc.map_or_else(|| "nan".to_string(), |v| v.to_string());
        let _ = writeln!(out, "{},{},{},{}", r.config, r.fmeasure, r.mae, auc);
    }
    out
}

/// Whether the single-scale network scores no better than the full one.
pub fn expected_ordering(rows: &[AblationRow]) -> Result<bool> {
    let find = |label: &str| {
        rows.iter()
            .find(|r| r.config == label)
            .ok_or_else(|| Error::Input(format!("ablation has no `{label}` row")))
    };
    Ok(find("Sm4")?.fmeasure <= find("Sm4321")?.fmeasure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_dataset;

    #[test]
    fn labels() {
        assert_eq!(scales_label(&[4]), "Sm4");
        assert_eq!(scales_label(&[1, 2, 3, 4]), "Sm4321");
    }

    #[test]
    fn predictions_match_batched_forward() {
        let model = MsdnnModel::<f64>::init(NetworkConfig::new(32, 0.125, 1), 3).unwrap();
        let samples = synth_dataset(3, 32, 1).unwrap();
        let preds = predict_samples(&model, &samples, 2).unwrap();
        let (images, _) = make_batch::<f64>(&samples, &[0, 1, 2]).unwrap();
        let all = model.predict(&images).unwrap();
        for (i, p) in preds.iter().enumerate() {
            assert_eq!(p.data(), all.batch_item(i).data());
        }
    }

    #[test]
    fn tiny_sweep_is_deterministic() {
        let base = NetworkConfig::new(32, 0.125, 1);
        let train = TrainConfig {
            max_iterations: 2,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let data = synth_dataset(2, 32, 5).unwrap();
        let run = || run_ablation(&base, &train, 1, &data, &data, &MetricsConfig::default(), |_| {}).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.len(), 4);
        assert_eq!(ablation_csv(&a), ablation_csv(&b));
        assert_eq!(ablation_csv(&a).lines().count(), 5);
        expected_ordering(&a).unwrap();
    }
}
