use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Tp,
    Fp,
}

/// All-point interpolated average precision.
///
/// Records are ranked by confidence, highest first, keeping input order among
/// equal confidences. The result is the area under the monotone precision
/// envelope: each true positive contributes `1 / n_ground_truth` of recall at
/// the best precision reachable at or after its rank. With no ground truth the
/// AP is 1 for an empty prediction list and 0 otherwise.
pub fn pr_ap(records: &[(f64, Outcome)], n_ground_truth: usize) -> f64 {
    if n_ground_truth == 0 {
        return if records.is_empty() { 1.0 } else { 0.0 };
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[b].0.total_cmp(&records[a].0));

    let mut precision = Vec::with_capacity(order.len());
    let mut tp = 0usize;
    for (rank, &i) in order.iter().enumerate() {
        if records[i].1 == Outcome::Tp {
            tp += 1;
        }
        precision.push(tp as f64 / (rank + 1) as f64);
    }
    let mut envelope = precision;
    for k in (0..envelope.len().saturating_sub(1)).rev() {
        if envelope[k + 1] > envelope[k] {
            envelope[k] = envelope[k + 1];
        }
    }
    let area: f64 = order
        .iter()
        .enumerate()
        .filter(|(_, &i)| records[i].1 == Outcome::Tp)
        .fold(0.0, |acc, (rank, _)| acc + envelope[rank]);
    (area / n_ground_truth as f64).min(1.0)
}
