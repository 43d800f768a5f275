//! Order-fixed reductions so that ensemble statistics do not depend on how
//! the per-path work was scheduled.

const BLOCK: usize = 64;

/// Pairwise (cascade) summation over a fixed split of the slice.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSummary {
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub std_dev: f64,
    pub stderr: f64,
    pub n: usize,
}

pub fn summarize(xs: &[f64]) -> SampleSummary {
    let n = xs.len();
    if n == 0 {
        return SampleSummary {
            mean: f64::NAN,
            std_dev: f64::NAN,
            stderr: f64::NAN,
            n,
        };
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return SampleSummary {
            mean,
            std_dev: 0.0,
            stderr: 0.0,
            n,
        };
    }
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    let std_dev = var.sqrt();
    SampleSummary {
        mean,
        std_dev,
        stderr: std_dev / (n as f64).sqrt(),
        n,
    }
}
