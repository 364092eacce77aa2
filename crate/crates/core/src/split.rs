//! Seeded k-fold partitioning shared by the GA and the ML stack.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Shuffles `0..n` with `seed` and cuts it into `k` contiguous chunks whose
/// sizes differ by at most one (larger chunks first).
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("k-fold needs k >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::InvalidInput(format!("cannot split {n} items into {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    Ok((0..k)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let chunk = order[start..start + len].to_vec();
            start += len;
            chunk
        })
        .collect())
}

/// Complement of `test` in `0..n`, ascending.
pub fn complement(n: usize, test: &[usize]) -> Vec<usize> {
    let mut mask = vec![false; n];
    for &i in test {
        mask[i] = true;
    }
    (0..n).filter(|i| !mask[*i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_partition_the_range() {
        let folds = kfold_indices(11, 3, 5).unwrap();
        assert_eq!(folds.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 3]);
        let mut all: Vec<usize> = folds.concat();
        all.sort();
        assert_eq!(all, (0..11).collect::<Vec<_>>());
        assert_eq!(complement(5, &[1, 3]), vec![0, 2, 4]);
        assert!(kfold_indices(2, 3, 0).is_err());
        assert!(kfold_indices(5, 1, 0).is_err());
    }
}
