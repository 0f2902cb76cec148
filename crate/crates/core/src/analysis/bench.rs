use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Shape;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub input_shapes: Vec<Shape>,
    pub threads: usize,
    pub warmup: usize,
    pub iters: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub std_ms: f64,
    pub items_per_s: f64,
}

/// Nearest-rank percentile of sorted samples.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Times `run` for `iters` iterations after `warmup` untimed ones.
pub fn bench_forward<F>(mut run: F, input_shapes: Vec<Shape>, warmup: usize, iters: usize) -> Result<BenchReport>
where
    F: FnMut() -> Result<()>,
{
    if iters == 0 {
        return Err(Error::config("bench.iters", "must be >= 1"));
    }
    for _ in 0..warmup {
        run()?;
    }
    let mut samples = Vec::with_capacity(iters);
    for _ in 0..iters {
        let start = Instant::now();
        run()?;
        // Clamp to the timer resolution so a sample is never zero.
        samples.push((start.elapsed().as_secs_f64() * 1e3).max(1e-6));
    }
    let mean = samples.iter().sum::<f64>() / iters as f64;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / iters as f64;
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let batch = input_shapes.first().map_or(1, |s| s.n());
    Ok(BenchReport {
        input_shapes,
        threads: rayon::current_num_threads(),
        warmup,
        iters,
        mean_ms: mean,
        p50_ms: percentile(&sorted, 50.0),
        p95_ms: percentile(&sorted, 95.0),
        min_ms: sorted[0],
        max_ms: sorted[iters - 1],
        std_ms: var.sqrt(),
        items_per_s: batch as f64 / (mean / 1e3),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        assert_eq!(percentile(&s, 50.0), 5.0);
        assert_eq!(percentile(&s, 95.0), 10.0);
        assert_eq!(percentile(&[3.0], 95.0), 3.0);
    }

    #[test]
    fn ordering_and_zero_iters() {
        let mut n = 0u64;
        let r = bench_forward(
            || {
                n = (0..2000u64).fold(n, |a, b| a.wrapping_add(b * b));
                Ok(())
            },
            vec![Shape::new(2, 1, 1, 1)],
            1,
            10,
        )
        .unwrap();
        assert!(r.min_ms > 0.0 && r.p50_ms <= r.p95_ms && r.p95_ms <= r.max_ms);
        assert!(bench_forward(|| Ok(()), vec![], 0, 0).is_err());
    }
}
