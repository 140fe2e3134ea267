use super::ClassifierError;

/// Mann-Whitney AUC: probability a random positive outscores a random
/// negative, ties counting one half.
pub fn auc_from_scores(scores: &[f64], labels: &[bool]) -> Result<f64, ClassifierError> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(ClassifierError::SingleClass);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // average ranks over tie groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if labels[k] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairwise(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    den += 1.0;
                    num += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
                }
            }
        }
        num / den
    }

    #[test]
    fn worked_examples() {
        let l = [true, true, false, false];
        assert_eq!(auc_from_scores(&[0.9, 0.8, 0.2, 0.1], &l).unwrap(), 1.0);
        assert_eq!(auc_from_scores(&[0.3; 4], &l).unwrap(), 0.5);
        assert_eq!(auc_from_scores(&[0.9, 0.4, 0.5, 0.1], &l).unwrap(), 0.75);
        assert!(auc_from_scores(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn matches_pairwise_with_ties() {
        let scores = [0.1, 0.5, 0.5, 0.3, 0.5, 0.9, 0.1, 0.3];
        let labels = [false, true, false, true, true, true, true, false];
        assert!((auc_from_scores(&scores, &labels).unwrap() - pairwise(&scores, &labels)).abs() < 1e-12);
    }
}
