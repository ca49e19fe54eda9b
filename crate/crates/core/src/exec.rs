//! Data-parallel map with a sequential fallback.
//!
//! Results always come back in input order, so any reduction done by the
//! caller is independent of scheduling and thread count.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Execution {
    Sequential,
    /// Uses rayon when the `parallel` feature is on, otherwise sequential.
    #[default]
    Parallel,
}

impl Execution {
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        match self {
            Execution::Sequential => items.iter().map(f).collect(),
            Execution::Parallel => par_map(items, f),
        }
    }

    pub fn map_range<U, F>(self, count: u64, f: F) -> Vec<U>
    where
        U: Send,
        F: Fn(u64) -> U + Sync + Send,
    {
        match self {
            Execution::Sequential => (0..count).map(f).collect(),
            Execution::Parallel => par_map_range(count, f),
        }
    }
}

#[cfg(feature = "parallel")]
fn par_map<T: Sync, U: Send, F: Fn(&T) -> U + Sync + Send>(items: &[T], f: F) -> Vec<U> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T: Sync, U: Send, F: Fn(&T) -> U + Sync + Send>(items: &[T], f: F) -> Vec<U> {
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
fn par_map_range<U: Send, F: Fn(u64) -> U + Sync + Send>(count: u64, f: F) -> Vec<U> {
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map_range<U: Send, F: Fn(u64) -> U + Sync + Send>(count: u64, f: F) -> Vec<U> {
    (0..count).map(f).collect()
}

/// Sizes the global worker pool. Only the first call can take effect.
#[cfg(feature = "parallel")]
pub fn configure_threads(threads: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Param(format!("thread pool: {e}")))
}

#[cfg(not(feature = "parallel"))]
pub fn configure_threads(threads: usize) -> Result<()> {
    if threads == 0 {
        return Err(Error::Param("thread count must be positive".into()));
    }
    Ok(())
}

/// Whether [`Execution::Parallel`] actually runs on a thread pool.
pub const PARALLEL_ENABLED: bool = cfg!(feature = "parallel");
