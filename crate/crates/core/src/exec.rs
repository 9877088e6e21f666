//! Execution policy for data-parallel loops.
//!
//! With the `parallel` feature (default) `Execution::Parallel` fans work out
//! over rayon's global pool; without it every policy runs serially. Results
//! never depend on the policy: work is split into fixed index ranges and
//! collected in index order.

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this policy actually runs in parallel in this build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_range<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Maps over a slice, possibly in parallel, preserving order.
pub fn map_slice<S, T, F>(items: &[S], exec: Execution, f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    map_range(items.len(), exec, |i| f(&items[i]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_preserved() {
        let a = map_range(1000, Execution::Parallel, |i| i * i);
        let b = map_range(1000, Execution::Serial, |i| i * i);
        assert_eq!(a, b);
    }
}
