use super::boxes::{iou_bev_unchecked, RotatedBox3D};
use super::{ApInterpolation, Detection};
use rayon::prelude::*;

/// Detection indices ordered by descending score; equal scores keep input order.
pub(crate) fn score_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    order
}

/// True-positive flags in score order. Each detection takes the unmatched
/// ground truth with the highest IoU (lowest index on ties) if it reaches `iou_thr`.
pub(crate) fn match_detections(dets: &[Detection], gts: &[RotatedBox3D], iou_thr: f64) -> Vec<bool> {
    let mut taken = vec![false; gts.len()];
    score_order(dets)
        .into_iter()
        .map(|d| {
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if taken[g] {
                    continue;
                }
                let iou = iou_bev_unchecked(&dets[d].bbox, gt);
                if iou >= iou_thr && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            match best {
                Some((g, _)) => {
                    taken[g] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// `(recall, precision)` after each detection in score order.
pub fn precision_recall(dets: &[Detection], gts: &[RotatedBox3D], iou_thr: f64) -> Vec<(f64, f64)> {
    let hits = match_detections(dets, gts, iou_thr);
    let mut tp = 0usize;
    hits.iter()
        .enumerate()
        .map(|(k, &hit)| {
            tp += hit as usize;
            (tp as f64 / gts.len().max(1) as f64, tp as f64 / (k + 1) as f64)
        })
        .collect()
}

pub fn average_precision(dets: &[Detection], gts: &[RotatedBox3D], iou_thr: f64) -> f64 {
    average_precision_with(dets, gts, iou_thr, ApInterpolation::AllPoint)
}

pub fn average_precision_with(
    dets: &[Detection],
    gts: &[RotatedBox3D],
    iou_thr: f64,
    interp: ApInterpolation,
) -> f64 {
    if gts.is_empty() {
        return if dets.is_empty() { 1.0 } else { 0.0 };
    }
    let curve = precision_recall(dets, gts, iou_thr);
    if curve.is_empty() {
        return 0.0;
    }
    match interp {
        ApInterpolation::AllPoint => {
            let mut envelope: Vec<f64> = curve.iter().map(|&(_, p)| p).collect();
            for k in (0..envelope.len().saturating_sub(1)).rev() {
                envelope[k] = envelope[k].max(envelope[k + 1]);
            }
            let mut ap = 0.0;
            let mut prev_recall = 0.0;
            for (k, &(r, _)) in curve.iter().enumerate() {
                if r > prev_recall {
                    ap += (r - prev_recall) * envelope[k];
                    prev_recall = r;
                }
            }
            ap
        }
        ApInterpolation::ElevenPoint => {
            (0..=10)
                .map(|i| {
                    let r = i as f64 / 10.0;
                    curve
                        .iter()
                        .filter(|&&(rec, _)| rec >= r - 1e-12)
                        .map(|&(_, p)| p)
                        .fold(0.0, f64::max)
                })
                .sum::<f64>()
                / 11.0
        }
    }
}

/// AP for each `(detections, ground truth)` pair, in input order.
pub fn batch_average_precision(
    batches: &[(Vec<Detection>, Vec<RotatedBox3D>)],
    iou_thr: f64,
    interp: ApInterpolation,
    parallel: bool,
) -> Vec<f64> {
    let eval = |(d, g): &(Vec<Detection>, Vec<RotatedBox3D>)| average_precision_with(d, g, iou_thr, interp);
    if parallel {
        batches.par_iter().map(eval).collect()
    } else {
        batches.iter().map(eval).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::seeded_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn bx(x: f64) -> RotatedBox3D {
        RotatedBox3D::new(x, 0.0, 0.0, 1.5, 2.0, 4.0, 0.0).unwrap()
    }

    fn det(x: f64, score: f64) -> Detection {
        Detection::new(bx(x), score).unwrap()
    }

    #[test]
    fn trivial_cases() {
        assert_eq!(average_precision(&[det(0.0, 0.9)], &[bx(0.0)], 0.5), 1.0);
        assert_eq!(average_precision(&[], &[bx(0.0)], 0.5), 0.0);
        assert_eq!(average_precision(&[], &[], 0.5), 1.0);
        assert_eq!(average_precision(&[det(0.0, 0.9)], &[], 0.5), 0.0);
    }

    #[test]
    fn hand_computed_curve() {
        // GTs at 0, 10, 20. Score order: hit(0), miss, hit(10), duplicate on 0.
        let gts = [bx(0.0), bx(10.0), bx(20.0)];
        let dets = [det(0.0, 0.9), det(50.0, 0.8), det(10.0, 0.7), det(0.1, 0.6)];
        // Precision 1, 1/2, 2/3, 2/4 at recall 1/3, 1/3, 2/3, 2/3.
        let want = (1.0 / 3.0) * 1.0 + (1.0 / 3.0) * (2.0 / 3.0);
        assert!((average_precision(&dets, &gts, 0.5) - want).abs() < 1e-15);
        // Eleven-point: recall levels 0..=0.3 get 1, 0.4..=0.6 get 2/3, the rest 0.
        let want11 = (4.0 * 1.0 + 3.0 * (2.0 / 3.0)) / 11.0;
        assert!((average_precision_with(&dets, &gts, 0.5, ApInterpolation::ElevenPoint) - want11).abs() < 1e-15);
    }

    /// Exhaustive oracle: every detection is a hit or a miss against disjoint GTs,
    /// so the curve follows directly from the score order.
    fn brute_force_ap(hits_in_order: &[bool], n_gt: usize) -> f64 {
        let mut points = Vec::new();
        let mut tp = 0;
        for (k, &h) in hits_in_order.iter().enumerate() {
            tp += h as usize;
            points.push((tp as f64 / n_gt as f64, tp as f64 / (k + 1) as f64));
        }
        let mut ap = 0.0;
        let mut prev = 0.0;
        for (k, &(r, _)) in points.iter().enumerate() {
            if r > prev {
                let best = points[k..].iter().map(|p| p.1).fold(0.0, f64::max);
                ap += (r - prev) * best;
                prev = r;
            }
        }
        ap
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        let mut rng = seeded_rng(3);
        for _ in 0..100 {
            let n_gt = rng.random_range(1..6);
            let gts: Vec<_> = (0..n_gt).map(|i| bx(10.0 * i as f64)).collect();
            let n_det = rng.random_range(0..8);
            let mut dets = Vec::new();
            let mut used = vec![false; n_gt];
            let mut hits = Vec::new();
            for k in 0..n_det {
                let target = rng.random_range(0..n_gt + 2);
                let score = 1.0 - k as f64 * 0.1;
                if target < n_gt {
                    dets.push(det(10.0 * target as f64, score));
                    hits.push(!used[target]);
                    used[target] = true;
                } else {
                    dets.push(det(-100.0 - k as f64 * 10.0, score));
                    hits.push(false);
                }
            }
            assert!((average_precision(&dets, &gts, 0.5) - brute_force_ap(&hits, n_gt)).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_parallel_matches_sequential() {
        let batches: Vec<_> = (0..6)
            .map(|i| (vec![det(0.0, 0.5), det(i as f64, 0.7)], vec![bx(0.0), bx(3.0)]))
            .collect();
        let a = batch_average_precision(&batches, 0.5, ApInterpolation::AllPoint, false);
        let b = batch_average_precision(&batches, 0.5, ApInterpolation::AllPoint, true);
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn monotone_score_transform_keeps_ap(
            xs in proptest::collection::vec((-5.0..25.0f64, 0.0..1.0f64), 0..10),
            thr in 0.1..0.9f64,
        ) {
            let gts = [bx(0.0), bx(10.0), bx(20.0)];
            let dets: Vec<_> = xs.iter().map(|&(x, s)| det(x, s)).collect();
            let mapped: Vec<_> = xs.iter().map(|&(x, s)| det(x, (s * s * s + 0.01) / 1.01)).collect();
            let a = average_precision(&dets, &gts, thr);
            let b = average_precision(&mapped, &gts, thr);
            prop_assert_eq!(a, b);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
