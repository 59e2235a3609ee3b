use crate::error::{Error, Result};

use super::NmConfig;

/// Keeps the `n` largest-magnitude entries of one `m`-element group.
///
/// Returns the kept values and their in-group offsets, both in ascending offset
/// order. Among equal magnitudes the lower offset wins.
pub fn prune_group(values: &[f32], nm: NmConfig) -> Result<(Vec<f32>, Vec<u8>)> {
    if values.len() != nm.m() {
        return Err(Error::shape(format!(
            "group of {} values for pattern {nm}",
            values.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite value {v} in group")));
    }
    let mut idx = vec![0u8; nm.n()];
    select_top_n(values, nm.n(), &mut idx);
    let kept = idx.iter().map(|&i| values[i as usize]).collect();
    Ok((kept, idx))
}

/// Writes the offsets of the `out.len()` winners of `group` into `out`, sorted
/// ascending. `group` may be shorter than the pattern's `m` (a padded tail);
/// missing slots behave as zeros placed after every real element.
pub(crate) fn select_top_n(group: &[f32], n: usize, out: &mut [u8]) {
    debug_assert_eq!(out.len(), n);
    // Insertion into a list ordered by (magnitude desc, offset asc). A later
    // element only displaces an earlier one on strictly greater magnitude,
    // which is what gives the lower offset the win on ties.
    let mut stack = [(0.0f32, 0usize); 16];
    let mut heap = Vec::new();
    let best: &mut [(f32, usize)] = if n <= stack.len() {
        &mut stack[..n]
    } else {
        heap.resize(n, (0.0, 0));
        &mut heap
    };
    let mut len = 0usize;
    for (i, v) in group.iter().enumerate() {
        let mag = v.abs();
        if len == n && mag <= best[n - 1].0 {
            continue;
        }
        let mut pos = len.min(n - 1);
        if len < n {
            len += 1;
        }
        while pos > 0 && best[pos - 1].0 < mag {
            best[pos] = best[pos - 1];
            pos -= 1;
        }
        best[pos] = (mag, i);
    }
    // Padded slots: zero magnitude, offsets past the real elements.
    let mut pad = group.len();
    while len < n {
        best[len] = (0.0, pad);
        pad += 1;
        len += 1;
    }
    for (slot, &(_, i)) in out.iter_mut().zip(best.iter()) {
        *slot = i as u8;
    }
    out.sort_unstable();
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nm(n: usize, m: usize) -> NmConfig {
        NmConfig::new(n, m).unwrap()
    }

    #[test]
    fn keeps_largest_magnitudes() {
        let (v, i) = prune_group(&[0.5, -0.1, 0.0, 0.9], nm(2, 4)).unwrap();
        assert_eq!(v, vec![0.5, 0.9]);
        assert_eq!(i, vec![0, 3]);

        let (v, i) = prune_group(&[3.0, -4.0, 2.0, -2.0, 5.0, 0.0, 1.0, -6.0], nm(2, 8)).unwrap();
        assert_eq!(v, vec![5.0, -6.0]);
        assert_eq!(i, vec![4, 7]);
    }

    #[test]
    fn all_ties_pick_lowest_offsets() {
        let (v, i) = prune_group(&[0.0; 4], nm(2, 4)).unwrap();
        assert_eq!(v, vec![0.0, 0.0]);
        assert_eq!(i, vec![0, 1]);

        let (_, i) = prune_group(&[1.0, -1.0, 1.0, -1.0], nm(3, 4)).unwrap();
        assert_eq!(i, vec![0, 1, 2]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            prune_group(&[1.0; 3], nm(2, 4)),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            prune_group(&[1.0, f32::NAN, 0.0, 0.0], nm(2, 4)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn short_tail_prefers_real_elements() {
        let mut out = [0u8; 2];
        select_top_n(&[0.0, 0.0, 0.0], 2, &mut out);
        assert_eq!(out, [0, 1]);
        select_top_n(&[3.0], 2, &mut out);
        assert_eq!(out, [0, 1]);
        select_top_n(&[], 2, &mut out);
        assert_eq!(out, [0, 1]);
    }
}
