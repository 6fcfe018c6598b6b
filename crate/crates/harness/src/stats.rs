//! Seed streams and cross-seed summaries.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for seed `index` of an experiment: the base seed picks the key
/// and the index picks the stream, so adding seeds never changes earlier ones.
pub fn seed_rng(base_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index as u64);
    rng
}

/// Nearest-rank percentile of unsorted data, `p` in `[0, 100]`.
pub fn percentile(data: &[f64], p: f64) -> f64 {
    assert!(!data.is_empty(), "percentile of empty data");
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_sorted(&sorted, p)
}

fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

pub fn mean(data: &[f64]) -> f64 {
    data.iter().sum::<f64>() / data.len() as f64
}

/// Unbiased sample variance; zero for fewer than two points.
pub fn variance(data: &[f64]) -> f64 {
    if data.len() < 2 {
        return 0.0;
    }
    let m = mean(data);
    data.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (data.len() - 1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeRow {
    pub iter: usize,
    pub mean: f64,
    pub p95: f64,
    pub p05: f64,
}

/// Mean and 5th/95th percentiles across seeds at every `stride`-th record
/// (the last record is always kept). `series[k][i]` is seed `k` at record `i`.
pub fn envelope(iters: &[usize], series: &[Vec<f64>], stride: usize) -> Vec<EnvelopeRow> {
    let len = iters.len();
    assert!(series.iter().all(|s| s.len() == len), "ragged series");
    let mut rows = Vec::new();
    let mut column = vec![0.0; series.len()];
    for i in (0..len).filter(|&i| i % stride == 0 || i + 1 == len) {
        for (c, s) in column.iter_mut().zip(series) {
            *c = s[i];
        }
        let m = mean(&column);
        column.sort_by(f64::total_cmp);
        rows.push(EnvelopeRow {
            iter: iters[i],
            mean: m,
            p95: percentile_sorted(&column, 95.0),
            p05: percentile_sorted(&column, 5.0),
        });
    }
    rows
}
