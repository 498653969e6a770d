//! Saliency evaluation: precision/recall curves over an 8-bit threshold
//! grid, adaptive-threshold F-measure, mean absolute error and pixelwise
//! ROC AUC.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{compensated_sum, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub beta_squared: f64,
    /// 8-bit threshold levels, strictly increasing; level `l` compares
    /// against `l / 255`.
    pub pr_thresholds: Vec<u32>,
    pub adaptive_multiplier: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            beta_squared: 0.3,
            pr_thresholds: (0..=255).step_by(5).collect(),
            adaptive_multiplier: 2.0,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pr_thresholds.is_empty() || self.pr_thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("PR thresholds must be non-empty and strictly increasing".into()));
        }
        if self.pr_thresholds.iter().any(|&l| l > 255) {
            return Err(Error::Config("PR threshold levels must be in 0..=255".into()));
        }
        Ok(())
    }
}

fn as_plane(t: &Tensor, what: &str) -> Result<Tensor> {
    match *t.shape() {
        [_, _] => Ok(t.clone()),
        [1, h, w] | [1, 1, h, w] => t.reshape(&[h, w]),
        ref s => Err(Error::shape(format!("{what} must be [H, W] or single-channel, got {s:?}"))),
    }
}

/// Predicted map with values in `[0, 1]`, stored as `[H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    pub values: Tensor,
    pub id: String,
}

impl SaliencyMap {
    pub fn new(values: &Tensor, id: impl Into<String>) -> Result<Self> {
        let values = as_plane(values, "saliency map")?;
        if let Some(v) = values.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Input(format!("saliency value {v} outside [0, 1]")));
        }
        Ok(SaliencyMap { values, id: id.into() })
    }

    pub fn mean(&self) -> f64 {
        self.values.mean()
    }
}

/// Binary ground-truth mask stored as `[H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub mask: Tensor,
    pub id: String,
}

impl GroundTruth {
    pub fn new(mask: &Tensor, id: impl Into<String>) -> Result<Self> {
        let mask = as_plane(mask, "ground truth")?;
        if let Some(v) = mask.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::Input(format!("ground truth value {v} is not binary")));
        }
        Ok(GroundTruth { mask, id: id.into() })
    }

    pub fn positives(&self) -> usize {
        self.mask.data().iter().filter(|&&v| v == 1.0).count()
    }
}

fn check_pair(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!("map {:?} and ground truth {:?} differ", a.shape(), b.shape())));
    }
    Ok(())
}

/// `1` where the map exceeds `threshold` (strictly), else `0`.
pub fn binarize(map: &SaliencyMap, threshold: f64) -> Tensor {
    map.values.map(|v| if v > threshold { 1.0 } else { 0.0 })
}

/// Precision and recall of a binary prediction. Precision is 0 when
/// nothing is predicted; recall is 0 when the ground truth is empty.
pub fn precision_recall(pred: &Tensor, gt: &Tensor) -> Result<(f64, f64)> {
    check_pair(pred, gt)?;
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (p > 0.5, g > 0.5) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fneg == 0 { 0.0 } else { tp as f64 / (tp + fneg) as f64 };
    Ok((precision, recall))
}

/// `(1 + β²)·P·R / (β²·P + R)`, 0 when the denominator is 0.
pub fn f_beta(precision: f64, recall: f64, beta_squared: f64) -> f64 {
    let denom = beta_squared * precision + recall;
    if denom == 0.0 {
        0.0
    } else if precision == recall {
        // the closed form can land an ulp away from P here
        precision
    } else {
        (1.0 + beta_squared) * precision * recall / denom
    }
}

fn mean_of(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    compensated_sum(v.iter().copied()) / v.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
}

fn check_dataset(maps: &[SaliencyMap], gts: &[GroundTruth]) -> Result<()> {
    if maps.is_empty() {
        return Err(Error::Input("cannot evaluate an empty dataset".into()));
    }
    if maps.len() != gts.len() {
        return Err(Error::Input(format!("{} maps but {} ground truths", maps.len(), gts.len())));
    }
    Ok(())
}

/// Dataset P-R curve: per-image precision and recall at every threshold,
/// averaged over images.
pub fn pr_curve(maps: &[SaliencyMap], gts: &[GroundTruth], cfg: &MetricsConfig) -> Result<Vec<PrPoint>> {
    check_dataset(maps, gts)?;
    cfg.validate()?;
    let mut per_image = Vec::with_capacity(maps.len());
    for (m, g) in maps.iter().zip(gts) {
        check_pair(&m.values, &g.mask)?;
        let row: Vec<(f64, f64)> = cfg
            .pr_thresholds
            .iter()
            .map(|&l| precision_recall(&binarize(m, l as f64 / 255.0), &g.mask))
            .collect::<Result<_>>()?;
        per_image.push(row);
    }
    Ok(cfg
        .pr_thresholds
        .iter()
        .enumerate()
        .map(|(k, &l)| PrPoint {
            threshold: l as f64 / 255.0,
            mean_precision: mean_of(per_image.iter().map(|r| r[k].0)),
            mean_recall: mean_of(per_image.iter().map(|r| r[k].1)),
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveF {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub fmeasure: f64,
}

/// Binarize at `min(2 · mean(map), 1)` and score with F_β.
pub fn adaptive_fmeasure(map: &SaliencyMap, gt: &GroundTruth, cfg: &MetricsConfig) -> Result<AdaptiveF> {
    check_pair(&map.values, &gt.mask)?;
    let threshold = (cfg.adaptive_multiplier * map.mean()).min(1.0);
    let (precision, recall) = precision_recall(&binarize(map, threshold), &gt.mask)?;
    Ok(AdaptiveF {
        threshold,
        precision,
        recall,
        fmeasure: f_beta(precision, recall, cfg.beta_squared),
    })
}

/// Mean absolute per-pixel difference.
pub fn mae(map: &SaliencyMap, gt: &GroundTruth) -> Result<f64> {
    check_pair(&map.values, &gt.mask)?;
    let diffs = map.values.data().iter().zip(gt.mask.data()).map(|(a, b)| (a - b).abs());
    Ok(compensated_sum(diffs) / map.values.len() as f64)
}

/// Area under the pixelwise ROC curve, by trapezoidal integration over
/// every distinct map value. Equals `P(s_pos > s_neg) + ½·P(s_pos = s_neg)`;
/// for 8-bit maps this is the 256-threshold sweep.
pub fn auc(map: &SaliencyMap, gt: &GroundTruth) -> Result<f64> {
    check_pair(&map.values, &gt.mask)?;
    let mut scored: Vec<(f64, bool)> = map
        .values
        .data()
        .iter()
        .zip(gt.mask.data())
        .map(|(&s, &g)| (s, g > 0.5))
        .collect();
    let pos = scored.iter().filter(|(_, y)| *y).count() as u128;
    let neg = scored.len() as u128 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes in the ground truth ({pos} positive, {neg} negative pixels)"
        )));
    }
    // descending threshold sweep; each group of tied scores is one ROC step
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    // twice the area, in units of 1/(pos·neg)
    let mut area2: u128 = 0;
    let mut tp: u128 = 0;
    let mut i = 0;
    while i < scored.len() {
        let (mut gp, mut gn) = (0u128, 0u128);
        let s = scored[i].0;
        while i < scored.len() && scored[i].0 == s {
            if scored[i].1 {
                gp += 1;
            } else {
                gn += 1;
            }
            i += 1;
        }
        area2 += gn * (2 * tp + gp);
        tp += gp;
    }
    Ok(area2 as f64 / (2 * pos * neg) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub id: String,
    pub adaptive_threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub fmeasure: f64,
    pub mae: f64,
    /// `None` when the ground truth has a single class.
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_image: Vec<ImageMetrics>,
    /// Column means; `precision`/`recall` are mean-P/mean-R and `fmeasure`
    /// the mean of per-image F. AUC is averaged over images where defined.
    pub mean: ImageMetrics,
    /// F_β of the mean precision and mean recall.
    pub fmeasure_of_means: f64,
    pub pr_curve: Vec<PrPoint>,
}

pub fn evaluate_image(map: &SaliencyMap, gt: &GroundTruth, cfg: &MetricsConfig) -> Result<ImageMetrics> {
    let f = adaptive_fmeasure(map, gt, cfg)?;
    let auc = match auc(map, gt) {
        Ok(v) => Some(v),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(ImageMetrics {
        id: map.id.clone(),
        adaptive_threshold: f.threshold,
        precision: f.precision,
        recall: f.recall,
        fmeasure: f.fmeasure,
        mae: mae(map, gt)?,
        auc,
    })
}

pub fn evaluate_dataset(maps: &[SaliencyMap], gts: &[GroundTruth], cfg: &MetricsConfig) -> Result<MetricsReport> {
    check_dataset(maps, gts)?;
    let per_image: Vec<ImageMetrics> = maps
        .iter()
        .zip(gts)
        .map(|(m, g)| evaluate_image(m, g, cfg))
        .collect::<Result<_>>()?;
    let aucs: Vec<f64> = per_image.iter().filter_map(|m| m.auc).collect();
    let mean = ImageMetrics {
        id: "MEAN".into(),
        adaptive_threshold: mean_of(per_image.iter().map(|m| m.adaptive_threshold)),
        precision: mean_of(per_image.iter().map(|m| m.precision)),
        recall: mean_of(per_image.iter().map(|m| m.recall)),
        fmeasure: mean_of(per_image.iter().map(|m| m.fmeasure)),
        mae: mean_of(per_image.iter().map(|m| m.mae)),
        auc: (!aucs.is_empty()).then(|| mean_of(aucs.iter().copied())),
    };
    Ok(MetricsReport {
        fmeasure_of_means: f_beta(mean.precision, mean.recall, cfg.beta_squared),
        mean,
        pr_curve: pr_curve(maps, gts, cfg)?,
        per_image,
    })
}

pub const REPORT_HEADER: &str = "id,adaptive_threshold,precision,recall,fmeasure,mae,auc";
pub const PR_CURVE_HEADER: &str = "threshold,mean_precision,mean_recall";

fn row(out: &mut String, m: &ImageMetrics) {
    let auc = m.auc.map(|v| v.to_string()).unwrap_or_else(|| "nan".into());
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{}",
        m.id, m.adaptive_threshold, m.precision, m.recall, m.fmeasure, m.mae, auc
    );
}

impl MetricsReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{REPORT_HEADER}\n");
        for m in &self.per_image {
            row(&mut out, m);
        }
        row(&mut out, &self.mean);
        out
    }

    pub fn pr_curve_csv(&self) -> String {
        pr_curve_csv(&self.pr_curve)
    }
}

pub fn pr_curve_csv(points: &[PrPoint]) -> String {
    let mut out = format!("{PR_CURVE_HEADER}\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.mean_precision, p.mean_recall);
    }
    out
}
