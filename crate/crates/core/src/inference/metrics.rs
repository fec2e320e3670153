use rayon::prelude::*;

use super::classify::{mle_classify, retrieve, MleMode};
use super::features::{encode_features, gaussian_logpdf, EncodedFeature, PriorTable};
use crate::error::{Error, Result};
use crate::vae::ModelCheckpoint;
use crate::voxeldata::{Dataset, Sample};

/// Recall levels of the interpolated precision-recall curve.
pub const PR_LEVELS: usize = 11;

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    /// NaN for classes without test samples.
    pub per_class_accuracy: Vec<f64>,
    pub accuracy: f64,
    /// Between class prior means.
    pub distances_euclid: Vec<Vec<f64>>,
    /// `1 - cos` between class prior means.
    pub distances_cosine: Vec<Vec<f64>>,
    /// `(recall, interpolated precision)` averaged over queries.
    pub pr_curve: Vec<(f64, f64)>,
    pub auc: f64,
    pub map: f64,
    /// Mean IoU of retrieved against true full shapes.
    pub retrieval_iou: f64,
    /// Mean distance between joint prior means of the same class.
    pub intra_class_distance: f64,
    /// Mean distance between joint prior means of different classes.
    pub inter_class_distance: f64,
    pub queries: usize,
}

/// Average precision of a ranked relevance list: the mean of precision at
/// each relevant rank. `None` when nothing is relevant.
pub fn average_precision(ranked: &[bool]) -> Option<f64> {
    let mut hits = 0usize;
    let mut acc = 0.0;
    for (k, &rel) in ranked.iter().enumerate() {
        if rel {
            hits += 1;
            acc += hits as f64 / (k + 1) as f64;
        }
    }
    (hits > 0).then(|| acc / hits as f64)
}

/// ROC AUC of scores against relevance, with tied pairs counted as one half.
/// `None` unless both classes are present.
pub fn roc_auc(scores: &[f64], relevant: &[bool]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut rank_sum, mut pos) = (0.0, 0usize);
    let mut k = 0;
    while k < order.len() {
        let mut end = k;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[k]] {
            end += 1;
        }
        // mean 1-based rank of the tie group
        let mid = (k + end) as f64 / 2.0 + 1.0;
        for &i in &order[k..=end] {
            if relevant[i] {
                rank_sum += mid;
                pos += 1;
            }
        }
        k = end + 1;
    }
    let neg = scores.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Some(u / (pos * neg) as f64)
}

/// Interpolated precision at recall `0, 0.1, ..., 1`.
pub fn interpolated_pr(ranked: &[bool]) -> Option<Vec<f64>> {
    let total = ranked.iter().filter(|&&r| r).count();
    if total == 0 {
        return None;
    }
    let mut points = Vec::with_capacity(ranked.len());
    let mut hits = 0;
    for (k, &rel) in ranked.iter().enumerate() {
        hits += usize::from(rel);
        points.push((hits as f64 / total as f64, hits as f64 / (k + 1) as f64));
    }
    Some(
        (0..PR_LEVELS)
            .map(|l| {
                let r = l as f64 / (PR_LEVELS - 1) as f64;
                points
                    .iter()
                    .filter(|(rec, _)| *rec >= r - 1e-12)
                    .map(|&(_, p)| p)
                    .fold(0.0, f64::max)
            })
            .collect(),
    )
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `1 - cos(a, b)`; zero vectors count as orthogonal to everything but themselves.
fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return if a == b { 0.0 } else { 1.0 };
    }
    (1.0 - dot / (na * nb)).max(0.0)
}

fn distance_matrix(means: &[Vec<f64>], f: impl Fn(&[f64], &[f64]) -> f64) -> Vec<Vec<f64>> {
    let n = means.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = f(&means[i], &means[j]);
            m[i][j] = d;
            m[j][i] = d;
        }
    }
    m
}

/// Mean joint-prior distance within and across classes.
pub fn prior_separation(table: &PriorTable) -> (f64, f64) {
    let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0usize, 0.0, 0usize);
    for a in 0..table.len() {
        for b in a + 1..table.len() {
            let d = euclid(&table.joint_mean(a), &table.joint_mean(b));
            if table.class_of(a) == table.class_of(b) {
                intra += d;
                ni += 1;
            } else {
                inter += d;
                nx += 1;
            }
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { f64::NAN } else { s / n as f64 };
    (mean(intra, ni), mean(inter, nx))
}

/// Classification and retrieval metrics from precomputed features.
/// Retrieval ranks the gallery by log-density about each query, ties by
/// gallery order, and counts same-class items as relevant.
pub fn evaluate_features(
    table: &PriorTable,
    queries: &[(EncodedFeature, usize)],
    gallery: &[(EncodedFeature, usize)],
    mode: MleMode,
) -> Result<MetricsReport> {
    if queries.is_empty() {
        return Err(Error::InvalidArgument("evaluation needs at least one query".into()));
    }
    let c = table.classes;
    let mut confusion = vec![vec![0u64; c]; c];
    for (f, truth) in queries {
        if *truth >= c {
            return Err(Error::Vocabulary(format!("query class {truth} outside {c} classes")));
        }
        confusion[*truth][mle_classify(table, f, mode)?.class] += 1;
    }
    let correct: u64 = (0..c).map(|k| confusion[k][k]).sum();
    let per_class_accuracy = (0..c)
        .map(|k| {
            let n: u64 = confusion[k].iter().sum();
            if n == 0 {
                f64::NAN
            } else {
                confusion[k][k] as f64 / n as f64
            }
        })
        .collect();

    let per_query = queries
        .par_iter()
        .map(|(q, truth)| {
            let scores = gallery
                .iter()
                .map(|(g, _)| gaussian_logpdf(&g.mean, &q.mean))
                .collect::<Result<Vec<f64>>>()?;
            let relevant: Vec<bool> = gallery.iter().map(|(_, l)| l == truth).collect();
            let mut order: Vec<usize> = (0..gallery.len()).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            let ranked: Vec<bool> = order.iter().map(|&k| relevant[k]).collect();
            Ok((average_precision(&ranked), roc_auc(&scores, &relevant), interpolated_pr(&ranked)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mean_of = |xs: Vec<f64>| if xs.is_empty() { f64::NAN } else { xs.iter().sum::<f64>() / xs.len() as f64 };
    let map = mean_of(per_query.iter().filter_map(|p| p.0).collect());
    let auc = mean_of(per_query.iter().filter_map(|p| p.1).collect());
    let curves: Vec<&Vec<f64>> = per_query.iter().filter_map(|p| p.2.as_ref()).collect();
    let pr_curve = if curves.is_empty() {
        Vec::new()
    } else {
        (0..PR_LEVELS)
            .map(|l| {
                let r = l as f64 / (PR_LEVELS - 1) as f64;
                (r, curves.iter().map(|c| c[l]).sum::<f64>() / curves.len() as f64)
            })
            .collect()
    };
    let (intra, inter) = prior_separation(table);
    Ok(MetricsReport {
        confusion,
        per_class_accuracy,
        accuracy: correct as f64 / queries.len() as f64,
        distances_euclid: distance_matrix(&table.class_means, euclid),
        distances_cosine: distance_matrix(&table.class_means, cosine_distance),
        pr_curve,
        auc,
        map,
        retrieval_iou: f64::NAN,
        intra_class_distance: intra,
        inter_class_distance: inter,
        queries: queries.len(),
    })
}

/// Test-split evaluation against the training split as retrieval gallery.
pub fn evaluate(model: &ModelCheckpoint, dataset: &Dataset, mode: MleMode) -> Result<MetricsReport> {
    let table = PriorTable::from_model(model)?;
    let (test, train) = (dataset.test(), dataset.train());
    let featurize = |samples: &[&Sample]| -> Result<Vec<(EncodedFeature, usize)>> {
        let views: Vec<_> = samples.iter().map(|s| &s.view).collect();
        Ok(encode_features(model, &views)?
            .into_iter()
            .zip(samples)
            .map(|(f, s)| (f, s.label.class_id))
            .collect())
    };
    let mut report = evaluate_features(&table, &featurize(&test)?, &featurize(&train)?, mode)?;
    let ious = test
        .par_iter()
        .map(|s| Ok(retrieve(model, &s.view)?.iou(&s.full)))
        .collect::<Result<Vec<f64>>>()?;
    report.retrieval_iou = ious.iter().sum::<f64>() / ious.len() as f64;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn ap_brute(ranked: &[bool]) -> Option<f64> {
        let rel: Vec<usize> = (0..ranked.len()).filter(|&k| ranked[k]).collect();
        if rel.is_empty() {
            return None;
        }
        let prec = |k: usize| ranked[..=k].iter().filter(|&&r| r).count() as f64 / (k + 1) as f64;
        Some(rel.iter().map(|&k| prec(k)).sum::<f64>() / rel.len() as f64)
    }

    fn auc_brute(scores: &[f64], relevant: &[bool]) -> Option<f64> {
        let (mut s, mut n) = (0.0, 0usize);
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if relevant[i] && !relevant[j] {
                    n += 1;
                    s += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        (n > 0).then(|| s / n as f64)
    }

    #[test]
    fn hand_built_ap() {
        assert!((average_precision(&[true, false, true]).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(average_precision(&[false, false]), None);
    }

    #[test]
    fn fast_paths_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let n = rng.random_range(1..=10);
            // coarse scores force ties
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..4) as f64).collect();
            let relevant: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            assert_eq!(roc_auc(&scores, &relevant), auc_brute(&scores, &relevant));
            let ranked: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
            let (a, b) = (average_precision(&ranked), ap_brute(&ranked));
            assert_eq!(a.is_some(), b.is_some());
            if let (Some(a), Some(b)) = (a, b) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn separable_toy_is_perfect() {
        let t = PriorTable::new(
            2,
            1,
            vec![vec![0.0, 0.0], vec![10.0, 0.0]],
            vec![vec![0.0], vec![0.0]],
        )
        .unwrap();
        let f = |x: f64, y: f64| EncodedFeature { mean: vec![x, y, 0.0], std: vec![1.0; 3] };
        let queries = vec![(f(0.1, 0.0), 0), (f(9.9, 0.2), 1)];
        let gallery = vec![(f(0.0, 0.1), 0), (f(10.0, 0.0), 1), (f(-0.2, 0.0), 0), (f(10.1, 0.1), 1)];
        let r = evaluate_features(&t, &queries, &gallery, MleMode::ClassAndInstance).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.map, 1.0);
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.confusion, vec![vec![1, 0], vec![0, 1]]);
        assert_eq!(r.pr_curve.len(), PR_LEVELS);
        assert!(r.pr_curve.iter().all(|&(_, p)| p == 1.0));
        for m in [&r.distances_euclid, &r.distances_cosine] {
            for i in 0..2 {
                assert_eq!(m[i][i], 0.0);
                for j in 0..2 {
                    assert_eq!(m[i][j], m[j][i]);
                }
            }
        }
        assert_eq!(r.distances_euclid[0][1], 10.0);
        let trace: u64 = (0..2).map(|k| r.confusion[k][k]).sum();
        assert_eq!(trace as f64 / r.queries as f64, r.accuracy);
    }

    #[test]
    fn interpolated_pr_is_monotone() {
        let p = interpolated_pr(&[false, true, false, true, true]).unwrap();
        assert_eq!(p.len(), PR_LEVELS);
        assert!(p.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(p[10], 0.6);
        assert_eq!(interpolated_pr(&[false]), None);
    }

    #[test]
    fn separation_means() {
        let t = PriorTable::new(2, 2, vec![vec![0.0], vec![3.0]], vec![vec![0.0], vec![1.0], vec![0.0], vec![1.0]])
            .unwrap();
        let (intra, inter) = prior_separation(&t);
        assert_eq!(intra, 1.0);
        // joint means (0,0) (0,1) | (3,0) (3,1): cross distances 3, √10, √10, 3
        assert!((inter - (6.0 + 2.0 * 10f64.sqrt()) / 4.0).abs() < 1e-12);
    }
}
