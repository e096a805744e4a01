//! Segmentation quality metrics: Dice, Sensitivity, Specificity and Hausdorff
//! distance, reported per region with dataset aggregates.
//!
//! Hausdorff is computed between boundary-pixel sets (the same boundary as
//! [`crate::levelset::extract_contour`]) with Euclidean distances. The `max`
//! variant is the classic symmetric Hausdorff; `p95` takes the 95th percentile
//! of the pooled directed point distances. When either mask is empty the
//! distance is undefined and the sample is excluded from aggregates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levelset::{extract_contour, Mask};
use crate::synthdata::Sample;
use crate::trainer::HierarchyResult;

/// Variant of the Hausdorff distance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HausdorffVariant {
    #[default]
    Max,
    P95,
}

/// The three nested regions reported by the benchmark.
pub const REGION_NAMES: [&str; 3] = ["WT", "TC", "EC"];

/// Dice overlap `2|A∩B| / (|A|+|B|)`; 1 when both masks are empty.
pub fn dice(a: &Mask, b: &Mask) -> Result<f64> {
    check_domains(a, b)?;
    let mut inter = 0usize;
    let mut total = 0usize;
    for (&x, &y) in a.values().iter().zip(b.values()) {
        inter += (x & y) as usize;
        total += (x + y) as usize;
    }
    if total == 0 {
        Ok(1.0)
    } else {
        Ok(2.0 * inter as f64 / total as f64)
    }
}

/// True-positive rate `TP/(TP+FN)`; 1 when the truth is empty.
pub fn sensitivity(pred: &Mask, truth: &Mask) -> Result<f64> {
    check_domains(pred, truth)?;
    let mut tp = 0usize;
    let mut fne = 0usize;
    for (&p, &t) in pred.values().iter().zip(truth.values()) {
        if t == 1 {
            if p == 1 {
                tp += 1;
            } else {
                fne += 1;
            }
        }
    }
    if tp + fne == 0 {
        Ok(1.0)
    } else {
        Ok(tp as f64 / (tp + fne) as f64)
    }
}

/// True-negative rate `TN/(TN+FP)`; 1 when the truth is all foreground.
pub fn specificity(pred: &Mask, truth: &Mask) -> Result<f64> {
    check_domains(pred, truth)?;
    let mut tn = 0usize;
    let mut fp = 0usize;
    for (&p, &t) in pred.values().iter().zip(truth.values()) {
        if t == 0 {
            if p == 0 {
                tn += 1;
            } else {
                fp += 1;
            }
        }
    }
    if tn + fp == 0 {
        Ok(1.0)
    } else {
        Ok(tn as f64 / (tn + fp) as f64)
    }
}

/// Symmetric Hausdorff distance between mask boundaries, `None` when either
/// mask is empty.
pub fn hausdorff(a: &Mask, b: &Mask, variant: HausdorffVariant) -> Result<Option<f64>> {
    check_domains(a, b)?;
    let ca = extract_contour(a).pixels;
    let cb = extract_contour(b).pixels;
    if ca.is_empty() || cb.is_empty() {
        return Ok(None);
    }

    let directed = |from: &[(usize, usize)], to: &[(usize, usize)]| -> Vec<f64> {
        from.iter()
            .map(|&(r, c)| {
                to.iter()
                    .map(|&(r2, c2)| {
                        let dr = r as f64 - r2 as f64;
                        let dc = c as f64 - c2 as f64;
                        (dr * dr + dc * dc).sqrt()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    };

    let d_ab = directed(&ca, &cb);
    let d_ba = directed(&cb, &ca);
    let value = match variant {
        HausdorffVariant::Max => {
            let m1 = d_ab.iter().cloned().fold(0.0, f64::max);
            let m2 = d_ba.iter().cloned().fold(0.0, f64::max);
            m1.max(m2)
        }
        HausdorffVariant::P95 => {
            let mut pooled = d_ab;
            pooled.extend(d_ba);
            pooled.sort_by(|x, y| x.partial_cmp(y).unwrap());
            percentile_sorted(&pooled, 0.95)
        }
    };
    Ok(Some(value))
}

/// Percentile of an ascending slice with linear interpolation between order
/// statistics (index `q·(n−1)`).
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    assert!((0.0..=1.0).contains(&q));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

/// Mean, population standard deviation, median and quartiles of one metric
/// across a dataset.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

impl Aggregate {
    pub fn from_values(values: &[f64]) -> Self {
        assert!(!values.is_empty());
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Self {
            mean,
            std: var.sqrt(),
            median: percentile_sorted(&sorted, 0.5),
            q25: percentile_sorted(&sorted, 0.25),
            q75: percentile_sorted(&sorted, 0.75),
        }
    }
}

/// Per-sample metric values for one region.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RegionMetrics {
    pub dice: Vec<f64>,
    pub sensitivity: Vec<f64>,
    pub specificity: Vec<f64>,
    /// Defined Hausdorff values only.
    pub hausdorff: Vec<f64>,
    /// Samples skipped because a mask was empty.
    pub hausdorff_excluded: usize,
}

/// Aggregated metrics for one region.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegionReport {
    pub region: String,
    pub dice: Aggregate,
    pub sensitivity: Aggregate,
    pub specificity: Aggregate,
    /// Absent when every sample was excluded.
    pub hausdorff: Option<Aggregate>,
    pub hausdorff_excluded: usize,
}

/// Dataset-level metric report for the three regions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricReport {
    pub regions: Vec<RegionReport>,
    pub samples: usize,
}

impl MetricReport {
    /// Line-oriented rendering, one region per block.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("samples: {}\n", self.samples));
        for r in &self.regions {
            out.push_str(&format!(
                "{} dice mean={:.4} std={:.4} median={:.4} q25={:.4} q75={:.4}\n",
                r.region, r.dice.mean, r.dice.std, r.dice.median, r.dice.q25, r.dice.q75
            ));
            out.push_str(&format!(
                "{} sensitivity mean={:.4} std={:.4}\n",
                r.region, r.sensitivity.mean, r.sensitivity.std
            ));
            out.push_str(&format!(
                "{} specificity mean={:.4} std={:.4}\n",
                r.region, r.specificity.mean, r.specificity.std
            ));
            match &r.hausdorff {
                Some(h) => out.push_str(&format!(
                    "{} hausdorff mean={:.4} std={:.4} median={:.4} q25={:.4} q75={:.4} excluded={}\n",
                    r.region, h.mean, h.std, h.median, h.q25, h.q75, r.hausdorff_excluded
                )),
                None => out.push_str(&format!(
                    "{} hausdorff undefined (excluded={})\n",
                    r.region, r.hausdorff_excluded
                )),
            }
        }
        out
    }
}

/// Evaluate predictions against ground truth, per region, with aggregates
/// across samples.
pub fn evaluate_dataset(
    preds: &[HierarchyResult],
    truths: &[Sample],
    variant: HausdorffVariant,
) -> Result<MetricReport> {
    if preds.len() != truths.len() {
        return Err(Error::LengthMismatch(preds.len(), truths.len()));
    }
    if preds.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut per_region: Vec<RegionMetrics> = vec![RegionMetrics::default(); 3];
    for (pred, truth) in preds.iter().zip(truths) {
        for (idx, (p, t)) in pred.masks.iter().zip(truth.labels.iter()).enumerate() {
            let m = &mut per_region[idx];
            m.dice.push(dice(p, t)?);
            m.sensitivity.push(sensitivity(p, t)?);
            m.specificity.push(specificity(p, t)?);
            match hausdorff(p, t, variant)? {
                Some(h) => m.hausdorff.push(h),
                None => m.hausdorff_excluded += 1,
            }
        }
    }

    let regions = per_region
        .iter()
        .enumerate()
        .map(|(idx, m)| RegionReport {
            region: REGION_NAMES[idx].to_string(),
            dice: Aggregate::from_values(&m.dice),
            sensitivity: Aggregate::from_values(&m.sensitivity),
            specificity: Aggregate::from_values(&m.specificity),
            hausdorff: if m.hausdorff.is_empty() {
                None
            } else {
                Some(Aggregate::from_values(&m.hausdorff))
            },
            hausdorff_excluded: m.hausdorff_excluded,
        })
        .collect();

    Ok(MetricReport {
        regions,
        samples: preds.len(),
    })
}

fn check_domains(a: &Mask, b: &Mask) -> Result<()> {
    if a.domain() != b.domain() {
        return Err(Error::DomainMismatch("masks must share a grid".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridDomain;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dice_examples() {
        let d = GridDomain::new(4, 4);
        let a = Mask::from_fn(d, |r, _| r == 0);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);

        let b = Mask::from_fn(d, |r, _| r == 1);
        assert_eq!(dice(&a, &b).unwrap(), 0.0);

        // |A| = 2 inside |B| = 4.
        let small = Mask::from_fn(d, |r, c| r == 0 && c < 2);
        let big = Mask::from_fn(d, |r, c| r == 0 && c < 4);
        assert!((dice(&small, &big).unwrap() - 2.0 / 3.0).abs() < 1e-12);

        let empty = Mask::zeros(d);
        assert_eq!(dice(&empty, &empty).unwrap(), 1.0);
    }

    #[test]
    fn sensitivity_specificity_examples() {
        let d = GridDomain::new(4, 4);
        let truth = Mask::from_fn(d, |r, _| r == 0);
        assert_eq!(sensitivity(&truth, &truth).unwrap(), 1.0);
        assert_eq!(specificity(&truth, &truth).unwrap(), 1.0);

        let all = Mask::from_fn(d, |_, _| true);
        assert_eq!(sensitivity(&all, &truth).unwrap(), 1.0);
        assert_eq!(specificity(&all, &truth).unwrap(), 0.0);

        // Truth has 4 foreground, 12 background; prediction hits 3 of the
        // foreground and wrongly marks 2 background pixels.
        let pred = Mask::from_fn(d, |r, c| (r == 0 && c < 3) || (r == 1 && c < 2));
        assert!((sensitivity(&pred, &truth).unwrap() - 0.75).abs() < 1e-12);
        assert!((specificity(&pred, &truth).unwrap() - 10.0 / 12.0).abs() < 1e-12);

        // Conventions for degenerate truths.
        let empty = Mask::zeros(d);
        assert_eq!(sensitivity(&pred, &empty).unwrap(), 1.0);
        assert_eq!(specificity(&pred, &all).unwrap(), 1.0);
    }

    #[test]
    fn complement_duality() {
        let d = GridDomain::new(6, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let pred = Mask::from_fn(d, |_, _| rng.gen_bool(0.5));
            let truth = Mask::from_fn(d, |_, _| rng.gen_bool(0.5));
            let s = sensitivity(&pred, &truth).unwrap();
            let sp = specificity(&pred.not(), &truth.not()).unwrap();
            assert!((s - sp).abs() < 1e-12);
        }
    }

    #[test]
    fn hausdorff_examples() {
        let d = GridDomain::new(9, 9);
        let a = Mask::from_fn(d, |r, c| r == 0 && c == 0);
        assert_eq!(hausdorff(&a, &a, HausdorffVariant::Max).unwrap(), Some(0.0));

        let b = Mask::from_fn(d, |r, c| r == 3 && c == 4);
        assert_eq!(hausdorff(&a, &b, HausdorffVariant::Max).unwrap(), Some(5.0));

        let empty = Mask::zeros(d);
        assert_eq!(hausdorff(&a, &empty, HausdorffVariant::Max).unwrap(), None);
    }

    #[test]
    fn hausdorff_concentric_squares_against_double_loop() {
        let d = GridDomain::new(9, 9);
        let inner = Mask::from_fn(d, |r, c| (3..6).contains(&r) && (3..6).contains(&c));
        let outer = Mask::from_fn(d, |r, c| (2..7).contains(&r) && (2..7).contains(&c));
        // Double-loop oracle over boundary pixels.
        let ca = extract_contour(&inner).pixels;
        let cb = extract_contour(&outer).pixels;
        let mut worst: f64 = 0.0;
        for &(r, c) in ca.iter().chain(cb.iter()) {
            let other = if ca.contains(&(r, c)) { &cb } else { &ca };
            let mut best = f64::INFINITY;
            for &(r2, c2) in other {
                let dr = r as f64 - r2 as f64;
                let dc = c as f64 - c2 as f64;
                best = best.min((dr * dr + dc * dc).sqrt());
            }
            worst = worst.max(best);
        }
        let got = hausdorff(&inner, &outer, HausdorffVariant::Max)
            .unwrap()
            .unwrap();
        assert!((got - worst).abs() < 1e-12);
        assert!((got - 2.0_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn percentile_interpolates_linearly() {
        let values = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile_sorted(&values, 0.0), 1.0);
        assert_eq!(percentile_sorted(&values, 1.0), 4.0);
        assert_eq!(percentile_sorted(&values, 0.5), 2.5);
        assert!((percentile_sorted(&values, 0.25) - 1.75).abs() < 1e-12);
        assert!((percentile_sorted(&values, 0.95) - 3.85).abs() < 1e-12);
    }

    #[test]
    fn aggregate_of_single_value_is_that_value() {
        let a = Aggregate::from_values(&[0.7]);
        assert_eq!(a.mean, 0.7);
        assert_eq!(a.std, 0.0);
        assert_eq!(a.median, 0.7);
        assert_eq!(a.q25, 0.7);
        assert_eq!(a.q75, 0.7);
    }

    #[test]
    fn aggregate_mean_of_two() {
        let a = Aggregate::from_values(&[0.4, 0.8]);
        assert!((a.mean - 0.6).abs() < 1e-12);
    }
}
