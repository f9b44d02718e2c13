//! Overlapped decode and grouped prefill.
//!
//! Decode workers pull fine-grained keyframe intervals earliest-first and hand
//! each finished interval back to the coordinator, which prefills groups in
//! order as soon as every interval covering a group has completed.

use std::ops::Range;
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::container::VideoFile;
use crate::decode::{
    decode_parallel, plan_jobs, spawn_workers, DecodeContext, FrameBuffer, IndexMapper, IntervalJob, SampleSpec,
    WorkerMessage,
};
use crate::error::{Error, Result};
use crate::planner::{intervals_from_scan, scan_packets};
use crate::prefill::{tokenize_frames, KvCache, Model, ModelConfig, Prefiller, PruneConfig};

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    /// Interval count `s`; defaults to `4 * cores`.
    pub intervals: Option<usize>,
    pub cores: usize,
    pub frames_per_group: usize,
    pub prune: PruneConfig,
    pub model: ModelConfig,
    /// Generation steps run by the LLM-decode stub after prefill.
    pub llm_steps: usize,
}

impl PipelineConfig {
    pub fn new(cores: usize, frames_per_group: usize, prune: PruneConfig, model: ModelConfig) -> Self {
        PipelineConfig {
            intervals: None,
            cores,
            frames_per_group,
            prune,
            model,
            llm_steps: 8,
        }
    }

    pub fn interval_count(&self) -> usize {
        self.intervals.unwrap_or(4 * self.cores)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cores == 0 {
            return Err(Error::InvalidConfig("core count must be >= 1".into()));
        }
        if self.interval_count() < self.cores {
            return Err(Error::InvalidConfig(format!(
                "interval count {} below core count {}",
                self.interval_count(),
                self.cores
            )));
        }
        if self.frames_per_group == 0 {
            return Err(Error::InvalidConfig("frames_per_group must be >= 1".into()));
        }
        self.model.validate()
    }
}

/// Times are milliseconds since pipeline start.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupEvent {
    pub group_id: usize,
    pub slots: (usize, usize),
    pub tokens: usize,
    pub retained: Vec<usize>,
    pub ready_ms: f64,
    pub start_ms: f64,
    pub end_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IntervalEvent {
    pub id: usize,
    pub slots: (usize, usize),
    pub started_ms: f64,
    pub finished_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub intervals: usize,
    pub cores: usize,
    pub groups: usize,
    pub delta_ms: f64,
    pub t_dec_ms: f64,
    pub t_prefill_ms: f64,
    pub t_g_dec_ms: f64,
    pub t_g_prefill_ms: f64,
    pub t_total_measured_ms: f64,
    pub t_total_predicted_ms: f64,
    pub llm_stub_ms: f64,
    pub seeks: u64,
    pub group_events: Vec<GroupEvent>,
    pub interval_events: Vec<IntervalEvent>,
}

impl PipelineReport {
    fn finalize(&mut self) {
        let delta = self.interval_events.iter().map(|e| e.started_ms).fold(f64::INFINITY, f64::min);
        self.delta_ms = if delta.is_finite() { delta } else { 0.0 };
        let dec_end = self.interval_events.iter().map(|e| e.finished_ms).fold(self.delta_ms, f64::max);
        self.t_dec_ms = dec_end - self.delta_ms;
        self.t_prefill_ms = self.group_events.iter().map(|g| g.end_ms - g.start_ms).sum();
        self.t_g_dec_ms = self.group_events.first().map_or(0.0, |g| (g.ready_ms - self.delta_ms).max(0.0));
        self.t_g_prefill_ms = self.group_events.last().map_or(0.0, |g| g.end_ms - g.start_ms);
        self.t_total_measured_ms = self.group_events.last().map_or(dec_end, |g| g.end_ms.max(dec_end));
        self.t_total_predicted_ms = predict_latency(
            self.t_dec_ms,
            self.t_prefill_ms,
            self.t_g_dec_ms,
            self.t_g_prefill_ms,
            self.delta_ms,
        )
        .unwrap_or(f64::NAN);
    }
}

/// `max(t_dec + t_g_prefill, t_prefill + t_g_dec) + delta`
pub fn predict_latency(t_dec: f64, t_prefill: f64, t_g_dec: f64, t_g_prefill: f64, delta: f64) -> Result<f64> {
    for v in [t_dec, t_prefill, t_g_dec, t_g_prefill, delta] {
        if v.is_nan() || v < 0.0 {
            return Err(Error::NegativeLatency(v));
        }
    }
    Ok((t_dec + t_g_prefill).max(t_prefill + t_g_dec) + delta)
}

/// Slot range of each group over `slots` sampled frames.
pub fn group_spans(slots: usize, frames_per_group: usize) -> Vec<Range<usize>> {
    (0..slots)
        .step_by(frames_per_group.max(1))
        .map(|s| s..(s + frames_per_group).min(slots))
        .collect()
}

/// Ready time of each group: the latest completion among intervals whose slot
/// range intersects the group's. Groups with no covering interval are ready
/// at zero.
pub fn group_readiness(slots: usize, frames_per_group: usize, completions: &[(Range<usize>, f64)]) -> Vec<f64> {
    group_spans(slots, frames_per_group)
        .into_iter()
        .map(|g| {
            completions
                .iter()
                .filter(|(r, _)| r.start < g.end && g.start < r.end)
                .map(|&(_, t)| t)
                .fold(0.0, f64::max)
        })
        .collect()
}

pub struct PipelineOutput {
    pub cache: KvCache,
    pub frames: FrameBuffer,
    pub report: PipelineReport,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Fixed-cost stand-in for autoregressive generation: each step reads every
/// cached key once.
pub fn llm_decode_stub(cache: &KvCache, steps: usize) -> f64 {
    let mut acc = 0f64;
    for step in 0..steps {
        let w = 1.0 / (step + 1) as f64;
        for layer in &cache.layers {
            acc += layer.keys.iter().map(|&k| f64::from(k)).sum::<f64>() * w;
        }
    }
    acc
}

/// Waits for the next finished interval; `false` once all workers have exited.
fn receive<'b>(
    rx: &mpsc::Receiver<WorkerMessage<'b>>,
    done: &mut [Option<(IntervalJob<'b>, f64)>],
    report: &mut PipelineReport,
) -> std::result::Result<bool, String> {
    match rx.recv() {
        Ok(Ok((job, w))) => {
            report.seeks += w.seeks;
            report.interval_events.push(IntervalEvent {
                id: job.id,
                slots: (job.slots.start, job.slots.end),
                started_ms: ms(w.started),
                finished_ms: ms(w.finished),
            });
            let id = job.id;
            done[id] = Some((job, ms(w.finished)));
            Ok(true)
        }
        Ok(Err(e)) => Err(e.to_string()),
        Err(_) => Ok(false),
    }
}

fn failure(message: String, mut report: PipelineReport) -> Error {
    report.finalize();
    Error::Pipeline {
        message,
        partial: Box::new(report),
    }
}

/// Runs decode and grouped prefill concurrently. The model is built before
/// the clock starts; `delta` covers metadata scanning and planning.
pub fn run_pipeline(file: &VideoFile, spec: &SampleSpec, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    if spec.is_empty() {
        return Err(Error::InvalidSample("empty sample".into()));
    }
    let model = Model::new(cfg.model);
    let mut prefiller = Prefiller::new(&model, cfg.prune.clone())?;

    let start = Instant::now();
    let scan = scan_packets(file)?;
    let set = intervals_from_scan(&scan, cfg.interval_count())?;
    let ctx = DecodeContext {
        mapper: IndexMapper {
            pts_min: set.pts_min(),
            pts_max: set.pts_max(),
            frame_count: file.frame_count(),
        },
        offsets: spec.offsets(),
        out_size: spec.output_size(file.height(), file.width()),
    };
    let size = ctx.out_size;
    let mut buf = FrameBuffer::zeroed(spec.len(), size.0, size.1);
    let slot_bytes = buf.slot_bytes();
    let spans = group_spans(spec.len(), cfg.frames_per_group);
    let mut report = PipelineReport {
        intervals: set.len(),
        cores: cfg.cores,
        groups: spans.len(),
        ..PipelineReport::default()
    };

    {
        let jobs = plan_jobs(&set, &ctx, spec.indices(), &mut buf)?;
        let ranges: Vec<Range<usize>> = jobs.iter().map(|j| j.slots.clone()).collect();
        let covering: Vec<Vec<usize>> = spans
            .iter()
            .map(|g| {
                (0..ranges.len())
                    .filter(|&i| ranges[i].start < g.end && g.start < ranges[i].end)
                    .collect()
            })
            .collect();
        let ctx = &ctx;
        let outcome = std::thread::scope(|scope| -> std::result::Result<(), String> {
            let rx = spawn_workers(scope, file, ctx, jobs, cfg.cores, start);
            // Completed intervals with their finish time.
            let mut done: Vec<Option<(IntervalJob<'_>, f64)>> = (0..ranges.len()).map(|_| None).collect();

            let mut first_token = 0u64;
            for (g, span) in spans.iter().enumerate() {
                while covering[g].iter().any(|&i| done[i].is_none()) {
                    if !receive(&rx, &mut done, &mut report)? {
                        return Err(format!("decode workers stopped before group {g} was ready"));
                    }
                }
                let ready_ms = covering[g]
                    .iter()
                    .filter_map(|&i| done[i].as_ref().map(|(_, t)| *t))
                    .fold(0.0, f64::max);
                let group_start = start.elapsed();
                let owner = |slot: usize| -> &IntervalJob<'_> {
                    let i = ranges.partition_point(|r| r.end <= slot);
                    &done[i].as_ref().expect("covering interval completed").0
                };
                for slot in span.clone() {
                    let job = owner(slot);
                    let writes = job.counts[slot - job.slots.start];
                    if writes != 1 {
                        return Err(Error::SlotCoverage { slot, writes }.to_string());
                    }
                }
                let pixels = |slot: usize| -> &[u8] {
                    let job = owner(slot);
                    let local = slot - job.slots.start;
                    &job.data[local * slot_bytes..(local + 1) * slot_bytes]
                };
                let group = model
                    .tokenize_slots(pixels, size, span.clone(), g, first_token)
                    .map_err(|e| e.to_string())?;
                first_token += group.n_tokens as u64;
                let stats = prefiller.push_group(&group).map_err(|e| e.to_string())?;
                report.group_events.push(GroupEvent {
                    group_id: g,
                    slots: (span.start, span.end),
                    tokens: stats.tokens,
                    retained: stats.retained,
                    ready_ms,
                    start_ms: ms(group_start),
                    end_ms: ms(start.elapsed()),
                });
            }
            while receive(&rx, &mut done, &mut report)? {}
            Ok(())
        });
        if let Err(message) = outcome {
            return Err(failure(message, report));
        }
    }
    report.interval_events.sort_by_key(|e| e.id);
    if let Err(e) = buf.verify_complete() {
        return Err(failure(e.to_string(), report));
    }
    report.finalize();

    let cache = prefiller.finish();
    let stub = Instant::now();
    std::hint::black_box(llm_decode_stub(&cache, cfg.llm_steps));
    report.llm_stub_ms = ms(stub.elapsed());
    Ok(PipelineOutput {
        cache,
        frames: buf,
        report,
    })
}

/// Reference composition: full parallel decode, then in-order grouped prefill.
pub fn decode_then_prefill(file: &VideoFile, spec: &SampleSpec, cfg: &PipelineConfig) -> Result<(KvCache, FrameBuffer)> {
    cfg.validate()?;
    let model = Model::new(cfg.model);
    let decoded = decode_parallel(file, spec, cfg.cores)?;
    let groups = tokenize_frames(&decoded.frames, &model, cfg.frames_per_group)?;
    let cache = crate::prefill::prefill(&groups, &model, &cfg.prune)?;
    Ok((cache, decoded.frames))
}
