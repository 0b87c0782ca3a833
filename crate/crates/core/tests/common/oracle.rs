//! Independent reference implementations the library is checked against.

/// EER by direct counting at every candidate threshold, accepting scores at
/// or above the threshold, with a linear crossing between the last
/// threshold where FAR exceeds FRR and the first where it does not.
pub fn brute_force_eer(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let p = positive.iter().filter(|&&b| b).count() as f64;
    let n = positive.len() as f64 - p;
    if p == 0.0 || n == 0.0 {
        return None;
    }
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);
    let rates = |t: f64| {
        let fa = scores.iter().zip(positive).filter(|(&s, &y)| !y && s >= t).count() as f64 / n;
        let fr = scores.iter().zip(positive).filter(|(&s, &y)| y && s < t).count() as f64 / p;
        (fa, fr)
    };
    let curve: Vec<(f64, f64)> = thresholds.into_iter().map(rates).collect();
    let j = curve.iter().position(|(fa, fr)| fa - fr <= 0.0)?;
    let (fa, fr) = curve[j];
    if fa == fr {
        return Some(fa);
    }
    let (pa, pr) = curve[j - 1];
    let (d0, d1) = (pa - pr, fa - fr);
    Some(pa + (fa - pa) * d0 / (d0 - d1))
}

/// Macro one-vs-rest EER in percent over classes that have both positives
/// and negatives; rows of `scores` hold one score per class.
pub fn brute_force_macro_eer(scores: &[f64], k: usize, labels: &[usize]) -> Option<f64> {
    let per_class: Vec<f64> = (0..k)
        .filter_map(|c| {
            let col: Vec<f64> = scores.chunks(k).map(|row| row[c]).collect();
            let pos: Vec<bool> = labels.iter().map(|&l| l == c).collect();
            brute_force_eer(&col, &pos)
        })
        .collect();
    (!per_class.is_empty()).then(|| 100.0 * per_class.iter().sum::<f64>() / per_class.len() as f64)
}
