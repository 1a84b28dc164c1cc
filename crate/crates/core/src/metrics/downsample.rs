use std::collections::BTreeSet;

use super::MetricsError;

/// Frame indices kept when resampling a `src_fps` stream to `dst_fps`:
/// `floor(k * src_fps / dst_fps)` for `k = 0, 1, ...` below `n_frames`, plus
/// every positive frame. Sorted ascending, without duplicates.
pub fn downsample_indices(
    n_frames: u64,
    src_fps: f64,
    dst_fps: f64,
    positives: &BTreeSet<u64>,
) -> Result<Vec<u64>, MetricsError> {
    if !(dst_fps > 0.0 && dst_fps <= src_fps && src_fps.is_finite()) {
        return Err(MetricsError::FrameRate { src_fps, dst_fps });
    }
    if let Some(&p) = positives.range(n_frames..).next() {
        return Err(MetricsError::PositiveOutOfRange { frame: p, n_frames });
    }
    let mut keep: BTreeSet<u64> = positives.clone();
    for k in 0u64.. {
        let idx = (k as f64 * src_fps / dst_fps).floor() as u64;
        if idx >= n_frames {
            break;
        }
        keep.insert(idx);
    }
    Ok(keep.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let none = BTreeSet::new();
        // floor(k * 7.5) for k = 0..3
        assert_eq!(downsample_indices(30, 30.0, 4.0, &none).unwrap(), vec![0, 7, 15, 22]);
        let pos: BTreeSet<u64> = [5].into();
        assert_eq!(downsample_indices(30, 30.0, 4.0, &pos).unwrap(), vec![0, 5, 7, 15, 22]);
        assert_eq!(downsample_indices(12, 30.0, 30.0, &none).unwrap(), (0..12).collect::<Vec<_>>());
        assert!(downsample_indices(0, 30.0, 4.0, &none).unwrap().is_empty());
    }

    #[test]
    fn errors() {
        let pos: BTreeSet<u64> = [30].into();
        assert!(matches!(
            downsample_indices(30, 30.0, 4.0, &pos),
            Err(MetricsError::PositiveOutOfRange { frame: 30, n_frames: 30 })
        ));
        assert!(downsample_indices(30, 30.0, 0.0, &BTreeSet::new()).is_err());
        assert!(downsample_indices(30, 4.0, 30.0, &BTreeSet::new()).is_err());
    }

    proptest! {
        #[test]
        fn keeps_positives_and_bounds_size(n in 1u64..2000, pos in prop::collection::btree_set(0u64..2000, 0..20)) {
            let pos: BTreeSet<u64> = pos.into_iter().filter(|&p| p < n).collect();
            let out = downsample_indices(n, 30.0, 4.0, &pos).unwrap();
            prop_assert!(pos.iter().all(|p| out.binary_search(p).is_ok()));
            prop_assert!(out.windows(2).all(|w| w[0] < w[1]));
            let bound = (n as f64 * 4.0 / 30.0).ceil() as usize + pos.len();
            prop_assert!(out.len() <= bound);
        }
    }
}
