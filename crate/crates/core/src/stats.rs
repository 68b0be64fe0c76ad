//! Small summary statistics for Monte Carlo output.

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance (`n - 1` denominator).
pub fn sample_variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return f64::NAN;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

/// Standard error of the mean of an autocorrelated series by non-overlapping
/// batch means with `sqrt(n)`-sized batches.
pub fn batch_means_se(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return f64::NAN;
    }
    let batch = (n as f64).sqrt().floor() as usize;
    let nb = n / batch;
    let means: Vec<f64> = (0..nb).map(|b| mean(&x[b * batch..(b + 1) * batch])).collect();
    (sample_variance(&means) / nb as f64).sqrt()
}

/// Potential scale reduction factor over equal-length chains.
pub fn rhat(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if m < 2 || n < 2 {
        return f64::NAN;
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(&c[..n])).collect();
    let b = n as f64 * sample_variance(&means);
    let w = mean(&chains.iter().map(|c| sample_variance(&c[..n])).collect::<Vec<_>>());
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b / n as f64;
    (var_plus / w).sqrt()
}

/// Two-sided Kolmogorov-Smirnov distance of a sample from a continuous CDF.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}
