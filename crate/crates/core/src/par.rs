//! Execution policy for the data-parallel inner loops.
//!
//! Every parallel loop in the crate is written against the helpers here. Work is
//! always split into the same fixed chunks and partial results are combined in
//! chunk order, so `Sequential` and `Parallel` produce bit-identical output.

use std::ops::Range;

use serde::{Deserialize, Serialize};

/// Rows per work item for row-oriented loops.
pub const CHUNK_ROWS: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// Whether this policy actually runs on the thread pool in this build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

fn chunk_ranges(len: usize, chunk: usize) -> impl Iterator<Item = Range<usize>> + Clone {
    let chunk = chunk.max(1);
    (0..len.div_ceil(chunk)).map(move |c| c * chunk..((c + 1) * chunk).min(len))
}

/// Maps `f` over consecutive index ranges of length `chunk` covering `0..len`,
/// returning results in range order.
pub fn map_chunks<T, F>(exec: Exec, len: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        let ranges: Vec<_> = chunk_ranges(len, chunk).collect();
        return ranges.into_par_iter().map(f).collect();
    }
    let _ = exec;
    chunk_ranges(len, chunk).map(f).collect()
}

/// Maps `f` over `0..count`, results in index order.
pub fn map_indexed<T, F>(exec: Exec, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..count).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..count).map(f).collect()
}

/// Runs `f(chunk_index, chunk)` over `data` split into pieces of `chunk_len`.
pub fn for_each_chunk_mut<F>(exec: Exec, data: &mut [f64], chunk_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let chunk_len = chunk_len.max(1);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk_len).enumerate().for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = exec;
    data.chunks_mut(chunk_len).enumerate().for_each(|(i, c)| f(i, c));
}

/// Runs `f(chunk_index, rows, responses)` over matching row blocks of a
/// row-major `n × d` buffer and its length-`n` companion.
pub fn for_each_row_block<F>(exec: Exec, rows: &mut [f64], responses: &mut [f64], d: usize, f: F)
where
    F: Fn(usize, &mut [f64], &mut [f64]) + Sync + Send,
{
    let d = d.max(1);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        rows.par_chunks_mut(CHUNK_ROWS * d)
            .zip(responses.par_chunks_mut(CHUNK_ROWS))
            .enumerate()
            .for_each(|(i, (x, y))| f(i, x, y));
        return;
    }
    let _ = exec;
    rows.chunks_mut(CHUNK_ROWS * d)
        .zip(responses.chunks_mut(CHUNK_ROWS))
        .enumerate()
        .for_each(|(i, (x, y))| f(i, x, y));
}

/// Sums per-chunk partial vectors in chunk order.
pub fn sum_partials(parts: Vec<Vec<f64>>, len: usize) -> Vec<f64> {
    let mut acc = vec![0.0; len];
    for p in parts {
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
    }
    acc
}
