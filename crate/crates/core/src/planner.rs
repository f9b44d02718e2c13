//! Keyframe-aligned interval planning.
//!
//! [`scan_packets`] reads only packet metadata; [`keyframe_intervals`] picks
//! `c - 1` interior boundaries by snapping evenly spaced pts estimates to the
//! nearest keyframe.

use serde::Serialize;

use crate::container::{StreamKind, VideoFile};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ScanResult {
    /// Sorted, deduplicated keyframe timestamps.
    pub keyframe_pts: Vec<u64>,
    pub pts_min: u64,
    pub pts_max: u64,
}

/// Scans packet metadata for keyframe timestamps and the video pts range.
/// Non-video packets and packets without a pts are skipped.
pub fn scan_packets(file: &VideoFile) -> Result<ScanResult> {
    // The textbook initialisation (min = -1, max = inf) can never be updated;
    // start from the opposite extremes instead.
    let mut pts_min = u64::MAX;
    let mut pts_max = 0u64;
    let mut seen = false;
    let mut keyframe_pts = Vec::new();
    for p in file.packets() {
        if p.stream_kind != StreamKind::Video {
            continue;
        }
        let Some(pts) = p.pts else { continue };
        seen = true;
        pts_min = pts_min.min(pts);
        pts_max = pts_max.max(pts);
        if p.keyframe {
            keyframe_pts.push(pts);
        }
    }
    if !seen {
        return Err(Error::NoVideoStream);
    }
    keyframe_pts.sort_unstable();
    keyframe_pts.dedup();
    Ok(ScanResult {
        keyframe_pts,
        pts_min,
        pts_max,
    })
}

/// A half-open pts range `[start, end)`; the final interval of a plan is
/// closed at `pts_max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Interval {
    pub start: u64,
    pub end: u64,
    pub closed: bool,
}

impl Interval {
    pub fn contains(&self, pts: u64) -> bool {
        pts >= self.start && (pts < self.end || (self.closed && pts == self.end))
    }

    /// True once a decoder output at `pts` lies past this interval.
    pub fn is_past(&self, pts: u64) -> bool {
        if self.closed {
            pts > self.end
        } else {
            pts >= self.end
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IntervalSet {
    /// Strictly increasing boundaries; first is `pts_min`, last is `pts_max`.
    pub boundaries: Vec<u64>,
}

impl IntervalSet {
    pub fn pts_min(&self) -> u64 {
        self.boundaries[0]
    }

    pub fn pts_max(&self) -> u64 {
        *self.boundaries.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.boundaries.len().saturating_sub(1).max(1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn intervals(&self) -> Vec<Interval> {
        if self.boundaries.len() == 1 {
            let p = self.boundaries[0];
            return vec![Interval {
                start: p,
                end: p,
                closed: true,
            }];
        }
        let n = self.boundaries.len() - 1;
        self.boundaries
            .windows(2)
            .enumerate()
            .map(|(i, w)| Interval {
                start: w[0],
                end: w[1],
                closed: i + 1 == n,
            })
            .collect()
    }
}

/// Picks the keyframe nearest to `numer / denom`; ties go to the earlier one.
/// `keyframes` must be sorted and non-empty.
pub(crate) fn snap_to_keyframe(keyframes: &[u64], numer: u128, denom: u128) -> u64 {
    // First keyframe >= estimate.
    let j = keyframes.partition_point(|&k| (k as u128) * denom < numer);
    if j == 0 {
        return keyframes[0];
    }
    if j == keyframes.len() {
        return keyframes[j - 1];
    }
    let below = numer - keyframes[j - 1] as u128 * denom;
    let above = keyframes[j] as u128 * denom - numer;
    if below <= above {
        keyframes[j - 1]
    } else {
        keyframes[j]
    }
}

/// Plans up to `c` keyframe-aligned intervals spanning the video. When `c`
/// exceeds what the keyframes allow, duplicate boundaries collapse and fewer
/// intervals come back.
pub fn keyframe_intervals(file: &VideoFile, c: usize) -> Result<IntervalSet> {
    let scan = scan_packets(file)?;
    intervals_from_scan(&scan, c)
}

pub fn intervals_from_scan(scan: &ScanResult, c: usize) -> Result<IntervalSet> {
    if c == 0 {
        return Err(Error::InvalidConfig("core count must be >= 1".into()));
    }
    if scan.keyframe_pts.is_empty() {
        return Err(Error::CorruptPayload("no keyframes in stream".into()));
    }
    let range = (scan.pts_max - scan.pts_min) as u128;
    let c128 = c as u128;
    let mut boundaries = vec![scan.pts_min, scan.pts_max];
    for i in 1..c {
        // estimate = i * range / c + pts_min, kept as an exact fraction over c
        let numer = i as u128 * range + scan.pts_min as u128 * c128;
        boundaries.push(snap_to_keyframe(&scan.keyframe_pts, numer, c128));
    }
    boundaries.sort_unstable();
    boundaries.dedup();
    Ok(IntervalSet { boundaries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scan(kf: &[u64], max: u64) -> ScanResult {
        ScanResult {
            keyframe_pts: kf.to_vec(),
            pts_min: kf[0],
            pts_max: max,
        }
    }

    #[test]
    fn single_core_is_whole_stream() {
        let s = scan(&[0, 24_000, 48_000], 59_000);
        assert_eq!(intervals_from_scan(&s, 1).unwrap().boundaries, vec![0, 59_000]);
    }

    #[test]
    fn four_way_split_of_240_frames() {
        let kf: Vec<u64> = (0..10).map(|i| i * 24_000).collect();
        let s = scan(&kf, 239_000);
        let set = intervals_from_scan(&s, 4).unwrap();
        assert_eq!(set.boundaries, vec![0, 48_000, 120_000, 168_000, 239_000]);
    }

    #[test]
    fn exact_alignment() {
        let kf: Vec<u64> = (0..5).map(|i| i * 1000).collect();
        let s = scan(&kf, 4000);
        let set = intervals_from_scan(&s, 4).unwrap();
        assert_eq!(set.boundaries, vec![0, 1000, 2000, 3000, 4000]);
    }

    #[test]
    fn ties_go_to_the_earlier_keyframe() {
        assert_eq!(snap_to_keyframe(&[0, 10], 5, 1), 0);
        assert_eq!(snap_to_keyframe(&[0, 10], 6, 1), 10);
    }

    #[test]
    fn too_many_cores_collapse() {
        let s = scan(&[0, 24_000], 47_000);
        let set = intervals_from_scan(&s, 16).unwrap();
        assert_eq!(set.boundaries, vec![0, 24_000, 47_000]);
        assert_eq!(set.len(), 2);
    }

    #[test]
    fn single_frame_video_has_one_closed_interval() {
        let s = scan(&[0], 0);
        let set = intervals_from_scan(&s, 4).unwrap();
        let iv = set.intervals();
        assert_eq!(iv.len(), 1);
        assert!(iv[0].contains(0));
    }

    #[test]
    fn last_interval_is_closed() {
        let set = IntervalSet {
            boundaries: vec![0, 10, 20],
        };
        let iv = set.intervals();
        assert!(!iv[0].contains(10));
        assert!(iv[1].contains(10) && iv[1].contains(20));
        assert!(iv[0].is_past(10) && !iv[1].is_past(20) && iv[1].is_past(21));
    }
}
