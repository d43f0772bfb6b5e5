//! Contiguous, byte-balanced corpus sharding.

use crate::corpus::{Document, Shard};

/// Boundaries `b_0 = 0 <= b_1 <= ... <= b_k = n` splitting `sizes` into `k`
/// contiguous groups.
///
/// The split first minimizes the largest group, then maximizes the smallest
/// one under that cap; among equally good splits earlier groups take as many
/// items as possible.
pub fn balanced_cuts(sizes: &[usize], k: usize) -> Vec<usize> {
    assert!(k >= 1, "shard count must be at least 1");
    let n = sizes.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0usize);
    for &s in sizes {
        prefix.push(prefix.last().unwrap() + s);
    }
    let total = prefix[n];

    // Smallest feasible cap, by greedy packing.
    let fits = |cap: usize| {
        let mut groups = 1;
        let mut cur = 0;
        for &s in sizes {
            if s > cap {
                return false;
            }
            if cur + s > cap {
                groups += 1;
                cur = 0;
            }
            cur += s;
        }
        groups <= k
    };
    let (mut lo, mut hi) = (sizes.iter().copied().max().unwrap_or(0), total);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if fits(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let cap = lo;

    // Largest floor that still admits a split.
    let (mut lo, mut hi) = (0usize, cap);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if feasibility(&prefix, k, mid, cap)[k][0] {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let floor = lo;

    let table = feasibility(&prefix, k, floor, cap);
    let mut cuts = vec![0usize];
    let mut b = 0;
    for remaining in (1..=k).rev() {
        let next = (b..=n)
            .rev()
            .find(|&e| {
                let size = prefix[e] - prefix[b];
                size >= floor && size <= cap && table[remaining - 1][e]
            })
            .expect("feasible split exists");
        cuts.push(next);
        b = next;
    }
    cuts
}

/// `table[j][b]`: items `b..n` split into exactly `j` groups with sizes in
/// `[floor, cap]`.
fn feasibility(prefix: &[usize], k: usize, floor: usize, cap: usize) -> Vec<Vec<bool>> {
    let n = prefix.len() - 1;
    let mut table = Vec::with_capacity(k + 1);
    let mut base = vec![false; n + 1];
    base[n] = true;
    table.push(base);
    for j in 1..=k {
        let prev = &table[j - 1];
        // count[e] = number of feasible boundaries in prev[..e]
        let mut count = vec![0usize; n + 2];
        for e in 0..=n {
            count[e + 1] = count[e] + usize::from(prev[e]);
        }
        let mut cur = vec![false; n + 1];
        let (mut lo, mut hi) = (0usize, 0usize);
        for b in 0..=n {
            // lo: first e >= b with prefix[e] - prefix[b] >= floor
            lo = lo.max(b);
            while lo <= n && prefix[lo] - prefix[b] < floor {
                lo += 1;
            }
            // hi: one past the last e with prefix[e] - prefix[b] <= cap
            hi = hi.max(b);
            while hi <= n && prefix[hi] - prefix[b] <= cap {
                hi += 1;
            }
            cur[b] = lo < hi && count[hi] > count[lo];
        }
        table.push(cur);
    }
    table
}

/// Split `documents` into `shard_count` contiguous shards balanced by text
/// bytes. Document order is preserved; trailing shards may be empty.
pub fn shard_corpus(documents: Vec<Document>, shard_count: usize) -> Vec<Shard> {
    let sizes: Vec<usize> = documents.iter().map(|d| d.text.len()).collect();
    let cuts = balanced_cuts(&sizes, shard_count.max(1));
    let mut docs = documents.into_iter();
    cuts.windows(2)
        .enumerate()
        .map(|(index, w)| Shard {
            index,
            documents: docs.by_ref().take(w[1] - w[0]).collect(),
        })
        .collect()
}
