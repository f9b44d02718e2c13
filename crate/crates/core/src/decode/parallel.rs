use std::collections::VecDeque;
use std::ops::Range;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread::Scope;
use std::time::{Duration, Instant};

use crate::container::{VideoFile, VideoReader};
use crate::error::{Error, Result};
use crate::planner::{intervals_from_scan, scan_packets, Interval, IntervalSet};

use super::{resize_plane, DecodeStats, Decoded, FrameBuffer, IndexMapper, OffsetMap, SampleSpec};

/// Shared, read-only state every worker needs.
pub(crate) struct DecodeContext<'a> {
    pub mapper: IndexMapper,
    pub offsets: OffsetMap<'a>,
    pub out_size: (usize, usize),
}

/// One keyframe interval plus exclusive ownership of the output slots whose
/// frames fall inside it.
pub(crate) struct IntervalJob<'b> {
    pub id: usize,
    pub interval: Interval,
    pub slots: Range<usize>,
    pub data: &'b mut [u8],
    pub counts: &'b mut [u32],
}

pub(crate) struct WorkerReport {
    pub seeks: u64,
    pub frames_decoded: u64,
    pub started: Duration,
    pub finished: Duration,
}

pub(crate) type WorkerMessage<'b> = Result<(IntervalJob<'b>, WorkerReport)>;

/// Splits the output buffer into per-interval jobs. Slots are sorted by frame
/// index and intervals by pts, so each interval owns a contiguous slot range.
pub(crate) fn plan_jobs<'b>(
    set: &IntervalSet,
    ctx: &DecodeContext<'_>,
    indices: &[u64],
    buf: &'b mut FrameBuffer,
) -> Result<Vec<IntervalJob<'b>>> {
    let slot_bytes = buf.slot_bytes();
    let mut data: &'b mut [u8] = &mut buf.data;
    let mut counts: &'b mut [u32] = &mut buf.write_counts;
    let mut jobs = Vec::new();
    let mut next_slot = 0;
    for (id, interval) in set.intervals().into_iter().enumerate() {
        let first = ctx.mapper.index(interval.start)?;
        let end_index = if interval.closed {
            ctx.mapper.frame_count
        } else {
            ctx.mapper.index(interval.end)?
        };
        let lo = indices.partition_point(|&i| i < first);
        let hi = indices.partition_point(|&i| i < end_index);
        debug_assert_eq!(lo, next_slot);
        let (d, rest) = std::mem::take(&mut data).split_at_mut((hi - lo) * slot_bytes);
        let (c, crest) = std::mem::take(&mut counts).split_at_mut(hi - lo);
        data = rest;
        counts = crest;
        next_slot = hi;
        jobs.push(IntervalJob {
            id,
            interval,
            slots: lo..hi,
            data: d,
            counts: c,
        });
    }
    if next_slot != indices.len() {
        return Err(Error::InvalidSample(format!(
            "{} selected frames fall outside the planned intervals",
            indices.len() - next_slot
        )));
    }
    Ok(jobs)
}

fn run_interval(
    file: &VideoFile,
    ctx: &DecodeContext<'_>,
    job: &mut IntervalJob<'_>,
    epoch: Instant,
) -> Result<WorkerReport> {
    let started = epoch.elapsed();
    let (h, w) = ctx.out_size;
    let slot_bytes = 3 * h * w;
    let mut reader = VideoReader::new(file);
    let mut resized = Vec::new();
    reader.seek(job.interval.start)?;
    while let Some(frame) = reader.next_frame()? {
        if job.interval.is_past(frame.pts) {
            break;
        }
        let i = ctx.mapper.index(frame.pts)?;
        let Some(slot) = ctx.offsets.get(i) else { continue };
        if !job.slots.contains(&slot) {
            return Err(Error::Worker(format!(
                "interval {} produced frame {i} owned by another interval",
                job.id
            )));
        }
        let local = slot - job.slots.start;
        resize_plane(&frame.pixels, frame.height, frame.width, h, w, &mut resized);
        job.data[local * slot_bytes..(local + 1) * slot_bytes].copy_from_slice(&resized);
        job.counts[local] += 1;
    }
    Ok(WorkerReport {
        seeks: reader.seeks(),
        frames_decoded: reader.frames_decoded(),
        started,
        finished: epoch.elapsed(),
    })
}

/// Starts up to `workers` threads pulling jobs in queue order (earliest
/// interval first). Each finished job is handed back over the channel, so the
/// receiver gains exclusive access to that interval's slots.
pub(crate) fn spawn_workers<'scope, 'env>(
    scope: &'scope Scope<'scope, 'env>,
    file: &'env VideoFile,
    ctx: &'env DecodeContext<'env>,
    jobs: Vec<IntervalJob<'env>>,
    workers: usize,
    epoch: Instant,
) -> mpsc::Receiver<WorkerMessage<'env>> {
    let (tx, rx) = mpsc::channel();
    let workers = workers.clamp(1, jobs.len().max(1));
    let queue = Arc::new(Mutex::new(VecDeque::from(jobs)));
    let abort = Arc::new(AtomicBool::new(false));
    for _ in 0..workers {
        let tx = tx.clone();
        let queue = Arc::clone(&queue);
        let abort = Arc::clone(&abort);
        scope.spawn(move || loop {
            if abort.load(Ordering::Relaxed) {
                return;
            }
            let Some(mut job) = queue.lock().unwrap().pop_front() else {
                return;
            };
            let outcome = catch_unwind(AssertUnwindSafe(|| run_interval(file, ctx, &mut job, epoch)))
                .unwrap_or_else(|panic| {
                    let msg = panic
                        .downcast_ref::<&str>()
                        .map(|s| s.to_string())
                        .or_else(|| panic.downcast_ref::<String>().cloned())
                        .unwrap_or_else(|| "worker panicked".into());
                    Err(Error::Worker(msg))
                });
            let failed = outcome.is_err();
            if failed {
                abort.store(true, Ordering::Relaxed);
            }
            if tx.send(outcome.map(|r| (job, r))).is_err() || failed {
                return;
            }
        });
    }
    rx
}

/// Keyframe-interval parallel extraction over `cores` workers; one seek per
/// interval.
pub fn decode_parallel(file: &VideoFile, spec: &SampleSpec, cores: usize) -> Result<Decoded> {
    let start = Instant::now();
    if cores == 0 {
        return Err(Error::InvalidConfig("core count must be >= 1".into()));
    }
    let scan = scan_packets(file)?;
    let set = intervals_from_scan(&scan, cores)?;
    decode_planned(file, spec, &set, cores, start)
}

pub(crate) fn decode_planned(
    file: &VideoFile,
    spec: &SampleSpec,
    set: &IntervalSet,
    workers: usize,
    start: Instant,
) -> Result<Decoded> {
    let ctx = DecodeContext {
        mapper: IndexMapper {
            pts_min: set.pts_min(),
            pts_max: set.pts_max(),
            frame_count: file.frame_count(),
        },
        offsets: spec.offsets(),
        out_size: spec.output_size(file.height(), file.width()),
    };
    let (h, w) = ctx.out_size;
    let mut buf = FrameBuffer::zeroed(spec.len(), h, w);
    let mut stats = DecodeStats {
        intervals: set.len(),
        workers: workers.min(set.len()),
        ..DecodeStats::default()
    };
    {
        let jobs = plan_jobs(set, &ctx, spec.indices(), &mut buf)?;
        let ctx = &ctx;
        std::thread::scope(|scope| -> Result<()> {
            let rx = spawn_workers(scope, file, ctx, jobs, workers, start);
            let mut first_err = None;
            for msg in rx {
                match msg {
                    Ok((_job, report)) => {
                        stats.seeks += report.seeks;
                        stats.frames_decoded += report.frames_decoded;
                    }
                    Err(e) => {
                        first_err.get_or_insert(e);
                    }
                }
            }
            first_err.map_or(Ok(()), Err)
        })?;
    }
    buf.verify_complete()?;
    stats.wall = start.elapsed();
    Ok(Decoded { frames: buf, stats })
}
