//! Order-deterministic parallel reductions.
//!
//! Outputs must be bit-identical across thread counts, so reductions run over
//! fixed-size chunks whose partial results are combined sequentially in chunk
//! order. Chunk boundaries never depend on the thread count.

use rayon::prelude::*;

pub const CHUNK: usize = 4096;

/// Map each chunk of `0..n` to a partial value, then fold the partials in
/// chunk order.
pub fn chunked_fold<T, M, F>(n: usize, map: M, init: T, fold: F) -> T
where
    T: Send,
    M: Fn(std::ops::Range<usize>) -> T + Sync + Send,
    F: FnMut(T, T) -> T,
{
    let ranges: Vec<std::ops::Range<usize>> = (0..n)
        .step_by(CHUNK)
        .map(|start| start..(start + CHUNK).min(n))
        .collect();
    let partials: Vec<T> = ranges.into_par_iter().map(map).collect();
    partials.into_iter().fold(init, fold)
}

/// Sum of `f(k)` for k in `0..n`, accumulated per fixed chunk.
pub fn chunked_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    chunked_fold(
        n,
        |range| range.map(&f).sum::<f64>(),
        0.0,
        |acc, v| acc + v,
    )
}

/// Elementwise vector sum of per-chunk accumulators. `accumulate` adds the
/// contribution of item `k` into the chunk-local buffer.
pub fn chunked_vec_sum<F>(n: usize, len: usize, accumulate: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    chunked_fold(
        n,
        |range| {
            let mut local = vec![0.0; len];
            for k in range {
                accumulate(k, &mut local);
            }
            local
        },
        vec![0.0; len],
        |mut acc, local| {
            for (a, v) in acc.iter_mut().zip(&local) {
                *a += v;
            }
            acc
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_sum_matches_sequential() {
        let n = 3 * CHUNK + 17;
        let par = chunked_sum(n, |k| (k as f64).sin());
        let mut seq = 0.0;
        let mut chunk_acc = 0.0;
        for k in 0..n {
            chunk_acc += (k as f64).sin();
            if (k + 1) % CHUNK == 0 || k + 1 == n {
                seq += chunk_acc;
                chunk_acc = 0.0;
            }
        }
        assert_eq!(par.to_bits(), seq.to_bits());
    }

    #[test]
    fn vec_sum_is_thread_count_independent() {
        let n = 2 * CHUNK + 5;
        let a = chunked_vec_sum(n, 3, |k, buf| {
            buf[k % 3] += 1.0 / (k as f64 + 1.0);
        });
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| {
            chunked_vec_sum(n, 3, |k, buf| {
                buf[k % 3] += 1.0 / (k as f64 + 1.0);
            })
        });
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
