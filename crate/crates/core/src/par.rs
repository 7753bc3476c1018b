//! Deterministic parallel folds over index ranges.
//!
//! Grid sweeps pick a single worst sample out of millions of independent
//! evaluations. The fold here splits the index range into contiguous
//! chunks, one per worker, and merges the per-chunk results in chunk order.
//! Because the merge operation used by the callers is a total order on
//! `(margin, sample index, condition)`, the selected worst sample — and any
//! error, which is reported from the lowest-indexed failing chunk — is
//! identical for every worker count.

use crate::error::AglError;

/// Fold `eval(0), …, eval(total−1)` down to a single value with `pick`,
/// using up to `jobs` worker threads. `eval` may skip an index by returning
/// `Ok(None)`; the first error in index order wins. `pick` must be
/// order-insensitive (commutative and associative), which every
/// total-order-based selection is.
pub fn try_fold_min<T: Send>(
    total: usize,
    jobs: usize,
    eval: impl Fn(usize) -> Result<Option<T>, AglError> + Sync,
    pick: impl Fn(T, T) -> T + Sync,
) -> Result<Option<T>, AglError> {
    let jobs = jobs.max(1).min(total.max(1));
    if jobs == 1 {
        let mut acc: Option<T> = None;
        for i in 0..total {
            if let Some(v) = eval(i)? {
                acc = Some(match acc {
                    None => v,
                    Some(best) => pick(best, v),
                });
            }
        }
        return Ok(acc);
    }

    // Contiguous chunks: indices [start_k, start_{k+1}) for worker k.
    let chunk = total.div_ceil(jobs);
    let mut results: Vec<Result<Option<T>, AglError>> = Vec::with_capacity(jobs);
    std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(jobs);
        for k in 0..jobs {
            let start = k * chunk;
            let end = ((k + 1) * chunk).min(total);
            let eval = &eval;
            let pick = &pick;
            handles.push(scope.spawn(move || -> Result<Option<T>, AglError> {
                let mut acc: Option<T> = None;
                for i in start..end {
                    if let Some(v) = eval(i)? {
                        acc = Some(match acc {
                            None => v,
                            Some(best) => pick(best, v),
                        });
                    }
                }
                Ok(acc)
            }));
        }
        for handle in handles {
            results.push(handle.join().expect("grid worker panicked"));
        }
    });

    let mut acc: Option<T> = None;
    for r in results {
        if let Some(v) = r? {
            acc = Some(match acc {
                None => v,
                Some(best) => pick(best, v),
            });
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_minimum_for_every_worker_count() {
        let values: Vec<f64> = (0..1000)
            .map(|i| ((i as f64) * 0.37).sin())
            .collect();
        let run = |jobs| {
            try_fold_min(
                values.len(),
                jobs,
                |i| Ok(Some((values[i], i))),
                |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
            )
            .unwrap()
            .unwrap()
        };
        let baseline = run(1);
        for jobs in [2, 3, 7, 16, 1000, 5000] {
            assert_eq!(run(jobs), baseline);
        }
    }

    #[test]
    fn first_error_in_index_order_wins() {
        let err_at = |bad: Vec<usize>, jobs: usize| {
            try_fold_min(
                100,
                jobs,
                |i| {
                    if bad.contains(&i) {
                        Err(AglError::DivisionByZero)
                    } else {
                        Ok(Some(i))
                    }
                },
                |a, b| a.min(b),
            )
        };
        // Errors in several chunks: the call fails regardless of layout.
        for jobs in [1, 4, 9] {
            assert!(err_at(vec![3, 97], jobs).is_err());
        }
    }

    #[test]
    fn empty_ranges_and_skipped_indices() {
        let none = try_fold_min(0, 4, |_| Ok(Some(1usize)), |a, _b| a).unwrap();
        assert!(none.is_none());
        let skipped = try_fold_min(
            10,
            3,
            |i| Ok(if i % 2 == 0 { None } else { Some(i) }),
            |a: usize, b| a.min(b),
        )
        .unwrap();
        assert_eq!(skipped, Some(1));
    }
}
