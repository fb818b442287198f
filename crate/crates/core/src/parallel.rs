//! Data-parallel helpers.
//!
//! Every batch-level loop in the crate (per-example gradients, corpus
//! decoding, sweeps) goes through [`map_ordered`]. With the `parallel`
//! feature the work is spread over the rayon pool; without it, or with
//! [`Execution::Sequential`], it runs on the calling thread. Results always
//! come back in input order, so reductions downstream are deterministic.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when this build can actually run work on the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Applies `f` to every item, returning results in input order.
pub fn map_ordered<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if exec.is_parallel() && items.len() > 1 {
            use rayon::prelude::*;
            return items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
        }
    }
    let _ = exec;
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Like [`map_ordered`] but short-circuits on the first error (by index).
pub fn try_map_ordered<T, R, E, F>(items: &[T], exec: Execution, f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(usize, &T) -> Result<R, E> + Sync + Send,
{
    map_ordered(items, exec, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let xs: Vec<u64> = (0..1000).collect();
        let seq = map_ordered(&xs, Execution::Sequential, |i, x| x * 3 + i as u64);
        let par = map_ordered(&xs, Execution::Parallel, |i, x| x * 3 + i as u64);
        assert_eq!(seq, par);
    }

    #[test]
    fn first_error_wins() {
        let xs: Vec<i32> = vec![1, 2, -3, 4, -5];
        let r: Result<Vec<i32>, i32> =
            try_map_ordered(&xs, Execution::Parallel, |_, &x| if x < 0 { Err(x) } else { Ok(x) });
        assert_eq!(r, Err(-3));
    }
}
