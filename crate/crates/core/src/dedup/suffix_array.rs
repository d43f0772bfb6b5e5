//! Suffix array construction by induced sorting (SA-IS) and Kasai LCP.
//!
//! Linear time in the input length. Symbols are `u32` values bounded by an
//! explicit `upper`; byte buffers use `upper = 255`.

const EMPTY: usize = usize::MAX;

/// Suffix array of a byte buffer.
pub fn suffix_array(bytes: &[u8]) -> Vec<usize> {
    let s: Vec<usize> = bytes.iter().map(|&b| b as usize).collect();
    sa_is(&s, 255)
}

/// Suffix array of a symbol sequence with every symbol `<= upper`.
pub fn suffix_array_symbols(symbols: &[u32], upper: u32) -> Vec<usize> {
    let s: Vec<usize> = symbols.iter().map(|&x| x as usize).collect();
    debug_assert!(s.iter().all(|&x| x <= upper as usize));
    sa_is(&s, upper as usize)
}

fn sa_is(s: &[usize], upper: usize) -> Vec<usize> {
    let n = s.len();
    match n {
        0 => return Vec::new(),
        1 => return vec![0],
        2 => return if s[0] < s[1] { vec![0, 1] } else { vec![1, 0] },
        _ => {}
    }

    // ls[i]: suffix i is S-type (smaller than suffix i + 1).
    let mut ls = vec![false; n];
    for i in (0..n - 1).rev() {
        ls[i] = if s[i] == s[i + 1] { ls[i + 1] } else { s[i] < s[i + 1] };
    }

    // Bucket starts for S-type and L-type suffixes of each symbol.
    let mut sum_l = vec![0usize; upper + 1];
    let mut sum_s = vec![0usize; upper + 1];
    for i in 0..n {
        if !ls[i] {
            sum_s[s[i]] += 1;
        } else if s[i] < upper {
            sum_l[s[i] + 1] += 1;
        }
    }
    for c in 0..=upper {
        sum_s[c] += sum_l[c];
        if c < upper {
            sum_l[c + 1] += sum_s[c];
        }
    }

    let induce = |lms: &[usize], sa: &mut [usize]| {
        sa.fill(EMPTY);
        let mut buf = sum_s.clone();
        for &d in lms {
            if d == n {
                continue;
            }
            sa[buf[s[d]]] = d;
            buf[s[d]] += 1;
        }
        buf.copy_from_slice(&sum_l);
        sa[buf[s[n - 1]]] = n - 1;
        buf[s[n - 1]] += 1;
        for i in 0..n {
            let v = sa[i];
            if v != EMPTY && v >= 1 && !ls[v - 1] {
                sa[buf[s[v - 1]]] = v - 1;
                buf[s[v - 1]] += 1;
            }
        }
        buf.copy_from_slice(&sum_l);
        for i in (0..n).rev() {
            let v = sa[i];
            if v != EMPTY && v >= 1 && ls[v - 1] {
                // S-type bucket ends are the next symbol's L-type starts.
                let c = s[v - 1] + 1;
                buf[c] -= 1;
                sa[buf[c]] = v - 1;
            }
        }
    };

    let mut lms_map = vec![EMPTY; n + 1];
    let mut lms = Vec::new();
    for i in 1..n {
        if !ls[i - 1] && ls[i] {
            lms_map[i] = lms.len();
            lms.push(i);
        }
    }
    let m = lms.len();

    let mut sa = vec![EMPTY; n];
    induce(&lms, &mut sa);

    if m > 0 {
        let mut sorted_lms: Vec<usize> = sa.iter().copied().filter(|&v| lms_map[v] != EMPTY).collect();
        let mut rec_s = vec![0usize; m];
        let mut rec_upper = 0;
        rec_s[lms_map[sorted_lms[0]]] = 0;
        for i in 1..m {
            let (mut l, mut r) = (sorted_lms[i - 1], sorted_lms[i]);
            let end_l = if lms_map[l] + 1 < m { lms[lms_map[l] + 1] } else { n };
            let end_r = if lms_map[r] + 1 < m { lms[lms_map[r] + 1] } else { n };
            let mut same = true;
            if end_l - l != end_r - r {
                same = false;
            } else {
                while l < end_l && s[l] == s[r] {
                    l += 1;
                    r += 1;
                }
                if l == n || s[l] != s[r] {
                    same = false;
                }
            }
            if !same {
                rec_upper += 1;
            }
            rec_s[lms_map[sorted_lms[i]]] = rec_upper;
        }
        let rec_sa = sa_is(&rec_s, rec_upper);
        for (dst, &r) in sorted_lms.iter_mut().zip(&rec_sa) {
            *dst = lms[r];
        }
        induce(&sorted_lms, &mut sa);
    }
    sa
}

/// `lcp[i]` is the longest common prefix of suffixes `sa[i - 1]` and `sa[i]`;
/// `lcp[0] = 0`.
pub fn lcp_array<T: Eq>(s: &[T], sa: &[usize]) -> Vec<usize> {
    let n = s.len();
    let mut rank = vec![0usize; n];
    for (i, &p) in sa.iter().enumerate() {
        rank[p] = i;
    }
    let mut lcp = vec![0usize; n];
    let mut h = 0usize;
    for i in 0..n {
        if rank[i] == 0 {
            h = 0;
            continue;
        }
        let j = sa[rank[i] - 1];
        while i + h < n && j + h < n && s[i + h] == s[j + h] {
            h += 1;
        }
        lcp[rank[i]] = h;
        h = h.saturating_sub(1);
    }
    lcp
}

#[cfg(test)]
pub(crate) fn naive_suffix_array<T: Ord>(s: &[T]) -> Vec<usize> {
    let mut sa: Vec<usize> = (0..s.len()).collect();
    sa.sort_by(|&a, &b| s[a..].cmp(&s[b..]));
    sa
}
