//! Quantitative evaluation: PR-curve localization of heatmaps against
//! ground-truth masks, classification metrics, and the stratified
//! 5x5 cross-validation protocol.

use crate::dataset::{ClassLabel, LabeledDataset};
use crate::error::{Error, Result};
use crate::nn::{Model, TrainConfig, Trainer};
use crate::tensor::{Heatmap, Mask};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Number of quantile thresholds swept by `pr_curve`, extremes included.
pub const PR_THRESHOLDS: usize = 257;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PRPoint {
    pub threshold: f32,
    pub precision: f64,
    pub recall: f64,
}

/// Precision/recall samples sorted by descending threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PRCurve {
    pub points: Vec<PRPoint>,
}

impl PRCurve {
    /// Area under the curve: trapezoid over recall, anchored at recall 0
    /// with the precision of the smallest prediction set.
    pub fn auc(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        let mut area = 0.0;
        let mut prev_r = 0.0;
        let mut prev_p = self.points[0].precision;
        for pt in &self.points {
            area += (pt.recall - prev_r) * (pt.precision + prev_p) / 2.0;
            prev_r = pt.recall;
            prev_p = pt.precision;
        }
        area
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,precision,recall\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{}\n", p.threshold, p.precision, p.recall));
        }
        s
    }
}

/// Precision-recall curve of a heatmap against a binary mask: thresholds
/// are 257 evenly spaced score quantiles (extremes included), the
/// predicted-positive set at threshold t is {score >= t}, and thresholds
/// with an empty prediction set are skipped.
pub fn pr_curve(h: &Heatmap, mask: &Mask) -> Result<PRCurve> {
    if h.dims() != mask.dims {
        return Err(Error::DimMismatch {
            expected: mask.dims,
            got: h.dims(),
        });
    }
    let positives = mask.positives();
    if positives == 0 {
        return Err(Error::InvalidArgument(
            "ground-truth mask has no positive voxels".into(),
        ));
    }
    let mut sorted: Vec<f32> = h.grid.data.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let mut thresholds: Vec<f32> = (0..PR_THRESHOLDS)
        .map(|i| {
            let rank = (i as f64 / (PR_THRESHOLDS - 1) as f64) * (n - 1) as f64;
            sorted[rank.round() as usize]
        })
        .collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();

    let mut points = Vec::with_capacity(thresholds.len());
    for t in thresholds {
        let mut tp = 0usize;
        let mut predicted = 0usize;
        for (s, &m) in h.grid.data.iter().zip(&mask.data) {
            if *s >= t {
                predicted += 1;
                if m != 0 {
                    tp += 1;
                }
            }
        }
        if predicted == 0 {
            continue;
        }
        points.push(PRPoint {
            threshold: t,
            precision: tp as f64 / predicted as f64,
            recall: tp as f64 / positives as f64,
        });
    }
    Ok(PRCurve { points })
}

/// Area under the ROC curve via the Mann-Whitney rank statistic, with
/// tied score pairs counted as half-concordant. `labels[i]` marks the
/// positive class.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(
            "scores and labels have different lengths".into(),
        ));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidArgument(
            "roc_auc needs both classes present".into(),
        ));
    }
    // rank-sum formulation: AUC = (R_pos - n_pos(n_pos+1)/2) / (n_pos n_neg)
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut ranks = vec![0.0f64; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0; // average 1-based rank of the tie block
        for &k in &order[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    let r_pos: f64 = labels
        .iter()
        .zip(&ranks)
        .filter(|(&l, _)| l)
        .map(|(_, &r)| r)
        .sum();
    Ok((r_pos - n_pos as f64 * (n_pos as f64 + 1.0) / 2.0) / (n_pos as f64 * n_neg as f64))
}

/// Fraction of samples whose positive-class score falls on the correct
/// side of `threshold`.
pub fn accuracy(scores: &[f64], labels: &[bool], threshold: f64) -> Result<f64> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(Error::InvalidArgument(
            "accuracy needs equal-length, nonempty inputs".into(),
        ));
    }
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &l)| (s >= threshold) == l)
        .count();
    Ok(correct as f64 / scores.len() as f64)
}

/// One train/test round of cross-validation: per-sample positive-class
/// scores on the held-out fold, plus the derived metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CVRound {
    pub split: usize,
    pub fold: usize,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    /// (sample id, P(positive class), true label) per held-out sample
    pub predictions: Vec<(String, f64, ClassLabel)>,
    pub auc: f64,
    pub acc: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CVReport {
    pub rounds: Vec<CVRound>,
    pub mean_auc: f64,
    pub std_auc: f64,
    pub mean_acc: f64,
    pub std_acc: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl CVReport {
    fn from_rounds(rounds: Vec<CVRound>) -> Self {
        let aucs: Vec<f64> = rounds.iter().map(|r| r.auc).collect();
        let accs: Vec<f64> = rounds.iter().map(|r| r.acc).collect();
        let (mean_auc, std_auc) = mean_std(&aucs);
        let (mean_acc, std_acc) = mean_std(&accs);
        CVReport {
            rounds,
            mean_auc,
            std_auc,
            mean_acc,
            std_acc,
        }
    }

    /// One table row: model name, AUC, ACC, each as mean±std.
    pub fn table_row(&self, model_name: &str) -> String {
        format!(
            "{model_name}  {:.3}±{:.3}  {:.3}±{:.3}",
            self.mean_auc, self.std_auc, self.mean_acc, self.std_acc
        )
    }

    pub fn table_text(&self, model_name: &str) -> String {
        format!(
            "Model  AUC  ACC\n{}\n({} rounds)\n",
            self.table_row(model_name),
            self.rounds.len()
        )
    }
}

fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E3779B97F4A7C15))
        .wrapping_add(b.wrapping_mul(0xBF58476D1CE4E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Stratified fold assignment: per class, shuffle the pool indices with a
/// split-specific seed and deal them round-robin into `folds` folds.
fn assign_folds(
    dataset: &LabeledDataset,
    folds: usize,
    seed: u64,
    split: usize,
) -> Result<Vec<Vec<usize>>> {
    let mut per_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for i in dataset.pool() {
        per_class[dataset.samples[i].label.index()].push(i);
    }
    for (c, idxs) in per_class.iter().enumerate() {
        if idxs.len() < folds {
            return Err(Error::InvalidArgument(format!(
                "class {} has {} pooled samples, fewer than {folds} folds",
                ClassLabel::from_index(c)?.as_str(),
                idxs.len()
            )));
        }
    }
    let mut fold_sets = vec![Vec::new(); folds];
    for idxs in per_class.iter_mut() {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, split as u64, 0));
        idxs.shuffle(&mut rng);
        for (pos, &i) in idxs.iter().enumerate() {
            fold_sets[pos % folds].push(i);
        }
    }
    Ok(fold_sets)
}

/// Runs `splits` independent stratified `folds`-fold cross-validations
/// (the standard protocol is 5x5 = 25 rounds). Each round trains a fresh
/// model from `model_builder` on every fold but one and scores the
/// held-out fold. Set-aside samples never enter any round. Deterministic
/// for a fixed seed.
pub fn cross_validate<F>(
    dataset: &LabeledDataset,
    model_builder: F,
    cfg: &TrainConfig,
    splits: usize,
    folds: usize,
    seed: u64,
) -> Result<CVReport>
where
    F: Fn(u64) -> Result<Model>,
{
    if splits == 0 || folds < 2 {
        return Err(Error::InvalidArgument(
            "need at least 1 split and 2 folds".into(),
        ));
    }
    let mut rounds = Vec::with_capacity(splits * folds);
    for split in 0..splits {
        let fold_sets = assign_folds(dataset, folds, seed, split)?;
        for fold in 0..folds {
            let round_seed = mix_seed(seed, split as u64, fold as u64 + 1);
            let mut model = model_builder(round_seed)?;

            let test_idx = &fold_sets[fold];
            let train_idx: Vec<usize> = fold_sets
                .iter()
                .enumerate()
                .filter(|(f, _)| *f != fold)
                .flat_map(|(_, s)| s.iter().copied())
                .collect();

            let train_data: Vec<_> = train_idx
                .iter()
                .map(|&i| {
                    let s = &dataset.samples[i];
                    (&s.volume, s.label.index())
                })
                .collect();
            let mut round_cfg = cfg.clone();
            round_cfg.seed = round_seed;
            let mut trainer = Trainer::new(round_cfg, &model);
            trainer.run_epochs(&mut model, &train_data, cfg.epochs)?;

            let mut predictions = Vec::with_capacity(test_idx.len());
            for &i in test_idx {
                let s = &dataset.samples[i];
                let p_ad = model.predict(&s.volume)?.probs()[ClassLabel::Ad.index()];
                predictions.push((s.id.clone(), p_ad, s.label));
            }
            let scores: Vec<f64> = predictions.iter().map(|p| p.1).collect();
            let labels: Vec<bool> = predictions.iter().map(|p| p.2 == ClassLabel::Ad).collect();
            let auc = roc_auc(&scores, &labels)?;
            let acc = accuracy(&scores, &labels, 0.5)?;
            rounds.push(CVRound {
                split,
                fold,
                train_ids: train_idx
                    .iter()
                    .map(|&i| dataset.samples[i].id.clone())
                    .collect(),
                test_ids: test_idx
                    .iter()
                    .map(|&i| dataset.samples[i].id.clone())
                    .collect(),
                predictions,
                auc,
                acc,
            });
        }
    }
    Ok(CVReport::from_rounds(rounds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabeledSample;
    use crate::nn::{build_model, ModelArch, OptimizerKind, ParamStore, ScaleProfile};
    use crate::tensor::{voxel_count, Grid3, Volume};
    use rand::Rng;
    use std::collections::HashSet;

    fn heatmap(dims: (usize, usize, usize), data: Vec<f32>) -> Heatmap {
        Heatmap::new(Grid3::new(dims, data).unwrap()).unwrap()
    }

    #[test]
    fn perfect_heatmap_reaches_precision_and_recall_one() {
        let dims = (8, 8, 8);
        let mask_data: Vec<u8> = (0..voxel_count(dims)).map(|i| u8::from(i % 7 == 0)).collect();
        let mask = Mask::new(dims, mask_data.clone()).unwrap();
        let h = heatmap(dims, mask_data.iter().map(|&m| m as f32).collect());
        let c = pr_curve(&h, &mask).unwrap();
        assert!(c
            .points
            .iter()
            .any(|p| p.precision == 1.0 && p.recall == 1.0));
    }

    #[test]
    fn anti_correlated_heatmap_has_zero_precision_below_top_threshold() {
        let dims = (8, 8, 8);
        let mask_data: Vec<u8> = (0..voxel_count(dims)).map(|i| u8::from(i % 5 == 0)).collect();
        let mask = Mask::new(dims, mask_data.clone()).unwrap();
        let h = heatmap(dims, mask_data.iter().map(|&m| 1.0 - m as f32).collect());
        let c = pr_curve(&h, &mask).unwrap();
        for p in &c.points {
            if p.threshold < 1.0 && p.recall == 0.0 {
                assert_eq!(p.precision, 0.0);
            }
        }
        // the top-threshold point predicts only negatives: precision 0
        assert_eq!(c.points[0].precision, 0.0);
    }

    #[test]
    fn random_heatmap_precision_tracks_mask_fraction() {
        let dims = (24, 24, 24); // 13824 voxels
        let n = voxel_count(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mask_data: Vec<u8> = (0..n).map(|_| u8::from(rng.gen::<f64>() < 0.2)).collect();
        let q = mask_data.iter().filter(|&&m| m != 0).count() as f64 / n as f64;
        let mask = Mask::new(dims, mask_data).unwrap();
        let h = heatmap(dims, (0..n).map(|_| rng.gen::<f32>()).collect());
        let c = pr_curve(&h, &mask).unwrap();
        for p in &c.points {
            let predicted = (p.recall * mask.positives() as f64 / p.precision.max(1e-12)).round();
            if predicted < 500.0 {
                continue; // small prediction sets have wide binomial spread
            }
            let sigma = (q * (1.0 - q) / predicted).sqrt();
            assert!(
                (p.precision - q).abs() < 3.0 * sigma + 0.02,
                "precision {} vs fraction {q} at {} predicted",
                p.precision,
                predicted
            );
        }
    }

    #[test]
    fn recall_is_monotone_as_threshold_decreases() {
        let dims = (10, 10, 10);
        let n = voxel_count(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..20 {
            let mask_data: Vec<u8> = (0..n).map(|_| u8::from(rng.gen::<f64>() < 0.1)).collect();
            if mask_data.iter().all(|&m| m == 0) {
                continue;
            }
            let mask = Mask::new(dims, mask_data).unwrap();
            let h = heatmap(dims, (0..n).map(|_| rng.gen::<f32>()).collect());
            let c = pr_curve(&h, &mask).unwrap();
            for w in c.points.windows(2) {
                assert!(w[0].threshold > w[1].threshold, "trial {trial}");
                assert!(w[0].recall <= w[1].recall, "trial {trial}");
                assert!((0.0..=1.0).contains(&w[1].precision));
                assert!((0.0..=1.0).contains(&w[1].recall));
            }
        }
    }

    #[test]
    fn pr_curve_is_invariant_to_monotone_rescaling() {
        let dims = (8, 8, 8);
        let n = voxel_count(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mask = Mask::new(dims, (0..n).map(|_| u8::from(rng.gen::<f64>() < 0.15)).collect())
            .unwrap();
        let raw: Vec<f32> = (0..n).map(|_| rng.gen::<f32>() * 10.0).collect();
        let h_raw = heatmap(dims, raw.clone());
        let h_scaled = heatmap(dims, raw.iter().map(|&v| v / 10.0).collect());
        let c1 = pr_curve(&h_raw, &mask).unwrap();
        let c2 = pr_curve(&h_scaled, &mask).unwrap();
        assert_eq!(c1.points.len(), c2.points.len());
        for (a, b) in c1.points.iter().zip(&c2.points) {
            assert_eq!(a.precision, b.precision);
            assert_eq!(a.recall, b.recall);
        }
    }

    #[test]
    fn union_mask_curve_matches_merged_masks() {
        let dims = (8, 8, 8);
        let n = voxel_count(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let gen_mask = |rng: &mut ChaCha8Rng| {
            Mask::new(dims, (0..n).map(|_| u8::from(rng.gen::<f64>() < 0.08)).collect()).unwrap()
        };
        let (a, b, c) = (gen_mask(&mut rng), gen_mask(&mut rng), gen_mask(&mut rng));
        let h = heatmap(dims, (0..n).map(|_| rng.gen::<f32>()).collect());
        let left = a.union(&b).unwrap().union(&c).unwrap();
        let right = a.union(&b.union(&c).unwrap()).unwrap();
        assert_eq!(left, right);
        let merged = Mask::new(
            dims,
            (0..n)
                .map(|i| u8::from(a.data[i] != 0 || b.data[i] != 0 || c.data[i] != 0))
                .collect(),
        )
        .unwrap();
        assert_eq!(pr_curve(&h, &left).unwrap(), pr_curve(&h, &merged).unwrap());
    }

    #[test]
    fn empty_mask_is_rejected() {
        let dims = (4, 4, 4);
        let mask = Mask::zeros(dims);
        let h = heatmap(dims, vec![0.5; voxel_count(dims)]);
        assert!(pr_curve(&h, &mask).is_err());
    }

    #[test]
    fn roc_auc_known_cases() {
        assert_eq!(
            roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(),
            1.0
        );
        assert_eq!(
            roc_auc(&[0.5, 0.5, 0.5, 0.5], &[false, true, false, true]).unwrap(),
            0.5
        );
        assert_eq!(
            roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(),
            0.75
        );
        assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
    }

    fn brute_force_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, (&sp, &lp)) in scores.iter().zip(labels).enumerate() {
            if !lp {
                continue;
            }
            for (j, (&sn, &ln)) in scores.iter().zip(labels).enumerate() {
                if ln || i == j {
                    continue;
                }
                den += 1.0;
                if sp > sn {
                    num += 1.0;
                } else if sp == sn {
                    num += 0.5;
                }
            }
        }
        num / den
    }

    #[test]
    fn roc_auc_matches_brute_force_pair_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for trial in 0..50 {
            let n = rng.gen_range(2..=50);
            let mut scores: Vec<f64> = (0..n).map(|_| (rng.gen::<f64>() * 8.0).round() / 8.0).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.gen::<bool>()).collect();
            labels[0] = true;
            if n > 1 {
                labels[1] = false;
            }
            scores[0] = rng.gen();
            let fast = roc_auc(&scores, &labels).unwrap();
            let slow = brute_force_auc(&scores, &labels);
            assert!((fast - slow).abs() < 1e-12, "trial {trial}: {fast} vs {slow}");
        }
    }

    #[test]
    fn accuracy_known_cases() {
        assert_eq!(
            accuracy(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false], 0.5).unwrap(),
            1.0
        );
        assert_eq!(
            accuracy(&[0.6, 0.6, 0.6, 0.6], &[true, false, true, false], 0.5).unwrap(),
            0.5
        );
        assert_eq!(
            accuracy(&[0.9, 0.8, 0.9, 0.2], &[true, false, true, false], 0.5).unwrap(),
            0.75
        );
    }

    fn toy_dataset(n_per_class: usize, set_aside: Vec<usize>) -> LabeledDataset {
        // separable toy problem on a tiny grid: class decided by mean sign
        let dims = (6, 6, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut samples = Vec::new();
        for i in 0..2 * n_per_class {
            let label = if i % 2 == 0 { ClassLabel::Nc } else { ClassLabel::Ad };
            let offset = if label == ClassLabel::Ad { 0.8 } else { -0.8 };
            let data: Vec<f32> = (0..voxel_count(dims))
                .map(|_| rng.gen::<f32>() * 0.4 - 0.2 + offset)
                .collect();
            samples.push(LabeledSample {
                id: format!("toy-{i:03}"),
                volume: Volume::new(dims, data).unwrap(),
                label,
                mask: None,
            });
        }
        LabeledDataset::new(samples, set_aside).unwrap()
    }

    fn toy_builder(dims: (usize, usize, usize)) -> impl Fn(u64) -> Result<Model> {
        move |seed| {
            let mut graph = build_model(ModelArch::Resnet3dShallowGap, ScaleProfile::Desk32)?;
            graph.input_dims = dims;
            graph.propagate_shapes()?;
            Ok(Model::new(graph.clone(), ParamStore::init(&graph, seed)))
        }
    }

    fn toy_cfg() -> TrainConfig {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            lr: 1e-3,
            batch_size: 4,
            epochs: 2,
            seed: 0,
            balanced_batches: true,
        }
    }

    #[test]
    fn cross_validation_never_leaks_and_respects_set_aside() {
        let ds = toy_dataset(8, vec![0, 1, 14]);
        let report = cross_validate(&ds, toy_builder((6, 6, 6)), &toy_cfg(), 2, 2, 42).unwrap();
        assert_eq!(report.rounds.len(), 4);
        let aside: HashSet<&str> = ds.set_aside_samples().map(|s| s.id.as_str()).collect();
        let pool_ids: HashSet<String> = ds
            .pool()
            .iter()
            .map(|&i| ds.samples[i].id.clone())
            .collect();
        for r in &report.rounds {
            let train: HashSet<&str> = r.train_ids.iter().map(String::as_str).collect();
            let test: HashSet<&str> = r.test_ids.iter().map(String::as_str).collect();
            assert!(train.is_disjoint(&test), "round {}/{} leaks", r.split, r.fold);
            assert!(train.iter().all(|id| !aside.contains(id)));
            assert!(test.iter().all(|id| !aside.contains(id)));
            // train + test = entire pool for this split
            assert_eq!(train.len() + test.len(), pool_ids.len());
        }
        // within a split, the test folds partition the pool
        let split0: HashSet<&str> = report
            .rounds
            .iter()
            .filter(|r| r.split == 0)
            .flat_map(|r| r.test_ids.iter().map(String::as_str))
            .collect();
        assert_eq!(split0.len(), pool_ids.len());
    }

    #[test]
    fn round_metrics_recompute_from_dumped_predictions() {
        let ds = toy_dataset(6, vec![]);
        let report = cross_validate(&ds, toy_builder((6, 6, 6)), &toy_cfg(), 1, 3, 7).unwrap();
        for r in &report.rounds {
            let scores: Vec<f64> = r.predictions.iter().map(|p| p.1).collect();
            let labels: Vec<bool> = r
                .predictions
                .iter()
                .map(|p| p.2 == ClassLabel::Ad)
                .collect();
            assert_eq!(r.auc, roc_auc(&scores, &labels).unwrap());
            assert_eq!(r.acc, accuracy(&scores, &labels, 0.5).unwrap());
        }
    }

    #[test]
    fn cross_validation_is_deterministic_per_seed() {
        let ds = toy_dataset(4, vec![]);
        let r1 = cross_validate(&ds, toy_builder((6, 6, 6)), &toy_cfg(), 1, 2, 5).unwrap();
        let r2 = cross_validate(&ds, toy_builder((6, 6, 6)), &toy_cfg(), 1, 2, 5).unwrap();
        assert_eq!(
            serde_json::to_string(&r1).unwrap(),
            serde_json::to_string(&r2).unwrap()
        );
        let r3 = cross_validate(&ds, toy_builder((6, 6, 6)), &toy_cfg(), 1, 2, 6).unwrap();
        assert_ne!(
            serde_json::to_string(&r1).unwrap(),
            serde_json::to_string(&r3).unwrap()
        );
    }

    #[test]
    fn table_row_mirrors_reference_layout() {
        let rounds = vec![
            CVRound {
                split: 0,
                fold: 0,
                train_ids: vec![],
                test_ids: vec![],
                predictions: vec![],
                auc: 0.9,
                acc: 0.8,
            },
            CVRound {
                split: 0,
                fold: 1,
                train_ids: vec![],
                test_ids: vec![],
                predictions: vec![],
                auc: 0.7,
                acc: 0.7,
            },
        ];
        let report = CVReport::from_rounds(rounds);
        let row = report.table_row("3D-VGGNet");
        assert!(row.starts_with("3D-VGGNet  0.800±"));
        assert!(row.contains("  0.750±"));
    }

    #[test]
    fn too_few_samples_per_class_is_rejected() {
        let ds = toy_dataset(2, vec![]);
        assert!(cross_validate(&ds, toy_builder((6, 6, 6)), &toy_cfg(), 1, 5, 1).is_err());
    }
}
