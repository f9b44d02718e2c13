//! Timing harness for the decode modes and the overlapped pipeline.
//!
//! Every timed run is checked against the sequential oracle outside the timed
//! region; a mismatch aborts the benchmark instead of recording a sample.

use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::container::{EncodeConfig, VideoFile};
use crate::decode::{decode_parallel, decode_seek_based, decode_sequential_slice, SampleSpec};
use crate::error::{Error, Result};
use crate::pipeline::{decode_then_prefill, run_pipeline, PipelineConfig, PipelineReport};
use crate::prefill::{ModelConfig, PruneConfig, Scorer};
use crate::synth::{stored_fps, synth_video, ticks_per_frame_for_fps, SynthParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Workload {
    CoresSweep,
    DurationSweep,
    GapSweep,
    E2eBreakdown,
}

impl std::str::FromStr for Workload {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "cores_sweep" => Ok(Workload::CoresSweep),
            "duration_sweep" => Ok(Workload::DurationSweep),
            "gap_sweep" => Ok(Workload::GapSweep),
            "e2e_breakdown" => Ok(Workload::E2eBreakdown),
            other => Err(Error::InvalidConfig(format!("unknown workload {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoParams {
    pub duration_s: u64,
    pub fps: u32,
    pub width: usize,
    pub height: usize,
    pub keyframe_period: u32,
    pub seed: u64,
}

impl Default for VideoParams {
    fn default() -> Self {
        VideoParams {
            duration_s: 600,
            fps: 24,
            width: 320,
            height: 240,
            keyframe_period: 24,
            seed: 7,
        }
    }
}

impl VideoParams {
    pub fn frames(&self) -> u64 {
        self.duration_s * u64::from(self.fps)
    }

    pub fn synthesize(&self) -> Result<VideoFile> {
        let cfg = EncodeConfig {
            keyframe_period: self.keyframe_period,
            ticks_per_frame: ticks_per_frame_for_fps(self.fps)?,
            ..EncodeConfig::default()
        };
        synth_video(
            SynthParams {
                width: self.width,
                height: self.height,
                frames: self.frames(),
                seed: self.seed,
            },
            &cfg,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub workload: Workload,
    pub repetitions: usize,
    pub video: VideoParams,
    /// Sampling rate for dense workloads.
    pub sample_fps: f64,
    pub cores: Vec<usize>,
    pub durations_s: Vec<u64>,
    /// Sampling gaps in frames.
    pub gaps: Vec<u64>,
    pub model: ModelConfig,
}

impl BenchSpec {
    pub fn new(workload: Workload) -> Self {
        BenchSpec {
            workload,
            repetitions: 5,
            video: VideoParams::default(),
            sample_fps: 1.0,
            cores: vec![1, 2, 4, 8],
            durations_s: vec![60, 300, 600],
            gaps: vec![1, 2, 4, 8, 12, 24, 48, 96, 192],
            model: ModelConfig {
                d_model: 256,
                n_heads: 4,
                d_head: 64,
                layers: 4,
                tokens_per_frame: 16,
                seed: 1,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub available_cores: usize,
    pub os: String,
    pub arch: String,
    pub unix_time_s: u64,
}

impl Fingerprint {
    pub fn current() -> Self {
        Fingerprint {
            available_cores: available_cores(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            unix_time_s: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }
}

pub fn available_cores() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean_ms: f64,
    /// 95% confidence half-width from the t-distribution; zero for one sample.
    pub ci95_half_ms: f64,
    pub samples_ms: Vec<f64>,
}

impl Summary {
    pub fn from_samples(samples_ms: Vec<f64>) -> Self {
        let n = samples_ms.len();
        let mean_ms = samples_ms.iter().sum::<f64>() / n.max(1) as f64;
        let ci95_half_ms = if n < 2 {
            0.0
        } else {
            let var = samples_ms.iter().map(|x| (x - mean_ms).powi(2)).sum::<f64>() / (n - 1) as f64;
            let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
                .expect("positive degrees of freedom")
                .inverse_cdf(0.975);
            t * (var / n as f64).sqrt()
        };
        Summary {
            mean_ms,
            ci95_half_ms,
            samples_ms,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub mode: String,
    pub cores: usize,
    pub duration_s: u64,
    pub gap_frames: Option<u64>,
    pub sampled_frames: usize,
    pub seeks: u64,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub spec: BenchSpec,
    pub fingerprint: Fingerprint,
    pub warnings: Vec<String>,
    pub entries: Vec<BenchEntry>,
    /// Last pipeline run of each e2e configuration.
    pub pipeline_reports: Vec<PipelineReport>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Sequential,
    Seek,
    Parallel(usize),
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Sequential => "sequential",
            Mode::Seek => "seek",
            Mode::Parallel(_) => "parallel",
        }
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs `mode` once untimed and `reps` times timed, checking each output.
fn time_decode(file: &VideoFile, spec: &SampleSpec, oracle: &[u8], mode: Mode, reps: usize) -> Result<(Summary, u64)> {
    let run = || -> Result<(f64, u64)> {
        let t = Instant::now();
        let (data, seeks) = match mode {
            Mode::Sequential => (decode_sequential_slice(file, spec)?.data, 0),
            Mode::Seek => {
                let d = decode_seek_based(file, spec)?;
                (d.frames.data, d.stats.seeks)
            }
            Mode::Parallel(c) => {
                let d = decode_parallel(file, spec, c)?;
                (d.frames.data, d.stats.seeks)
            }
        };
        let elapsed = ms_since(t);
        if data != oracle {
            return Err(Error::BenchMismatch(format!("{} output differs from the oracle", mode.name())));
        }
        Ok((elapsed, seeks))
    };
    let (_, seeks) = run()?;
    let samples = (0..reps).map(|_| run().map(|r| r.0)).collect::<Result<Vec<_>>>()?;
    Ok((Summary::from_samples(samples), seeks))
}

fn clamp_cores(requested: &[usize], warnings: &mut Vec<String>) -> Vec<usize> {
    let avail = available_cores();
    let mut out = Vec::new();
    for &c in requested {
        let c2 = c.clamp(1, avail);
        if c2 != c {
            warnings.push(format!("requested {c} cores, clamped to {c2} available"));
        }
        if !out.contains(&c2) {
            out.push(c2);
        }
    }
    out
}

pub fn run_bench(spec: &BenchSpec) -> Result<BenchResult> {
    if spec.repetitions == 0 {
        return Err(Error::InvalidConfig("repetitions must be >= 1".into()));
    }
    let mut warnings = Vec::new();
    let cores = clamp_cores(&spec.cores, &mut warnings);
    let top = *cores.iter().max().unwrap_or(&1);
    let mut entries = Vec::new();
    let mut pipeline_reports = Vec::new();
    let reps = spec.repetitions;
    let mut push = |mode: Mode, duration_s, gap_frames, sampled, (summary, seeks): (Summary, u64)| {
        entries.push(BenchEntry {
            mode: mode.name().into(),
            cores: match mode {
                Mode::Parallel(c) => c,
                _ => 1,
            },
            duration_s,
            gap_frames,
            sampled_frames: sampled,
            seeks,
            summary,
        })
    };

    match spec.workload {
        Workload::CoresSweep => {
            let file = spec.video.synthesize()?;
            let sample = SampleSpec::uniform_fps(file.frame_count(), stored_fps(&file), spec.sample_fps)?;
            let oracle = decode_sequential_slice(&file, &sample)?.data;
            let d = spec.video.duration_s;
            for mode in [Mode::Sequential, Mode::Seek] {
                push(mode, d, None, sample.len(), time_decode(&file, &sample, &oracle, mode, reps)?);
            }
            for &c in &cores {
                let mode = Mode::Parallel(c);
                push(mode, d, None, sample.len(), time_decode(&file, &sample, &oracle, mode, reps)?);
            }
        }
        Workload::DurationSweep => {
            for &d in &spec.durations_s {
                let file = VideoParams {
                    duration_s: d,
                    ..spec.video
                }
                .synthesize()?;
                let sample = SampleSpec::uniform_fps(file.frame_count(), stored_fps(&file), spec.sample_fps)?;
                let oracle = decode_sequential_slice(&file, &sample)?.data;
                for mode in [Mode::Seek, Mode::Parallel(top)] {
                    push(mode, d, None, sample.len(), time_decode(&file, &sample, &oracle, mode, reps)?);
                }
            }
        }
        Workload::GapSweep => {
            let file = spec.video.synthesize()?;
            for &gap in &spec.gaps {
                // Midpoint offset keeps samples off keyframes for gaps that are
                // multiples of the keyframe period.
                let sample = SampleSpec::every(file.frame_count(), gap, gap / 2)?;
                let oracle = decode_sequential_slice(&file, &sample)?.data;
                for mode in [Mode::Seek, Mode::Parallel(top)] {
                    let d = spec.video.duration_s;
                    push(mode, d, Some(gap), sample.len(), time_decode(&file, &sample, &oracle, mode, reps)?);
                }
            }
        }
        Workload::E2eBreakdown => {
            let file = spec.video.synthesize()?;
            let sample = SampleSpec::uniform_fps(file.frame_count(), stored_fps(&file), spec.sample_fps)?;
            let prune = PruneConfig::new(Scorer::KeyNormSmall, 0.5)?;
            let cfg = PipelineConfig::new(top, 16, prune, spec.model);
            let (ref_cache, ref_frames) = decode_then_prefill(&file, &sample, &cfg)?;
            let mut seq = Vec::new();
            let mut over = Vec::new();
            let mut last = None;
            for rep in 0..=reps {
                let t = Instant::now();
                let (cache, frames) = decode_then_prefill(&file, &sample, &cfg)?;
                let t_seq = ms_since(t);
                if !cache.bit_eq(&ref_cache) || frames.data != ref_frames.data {
                    return Err(Error::BenchMismatch("sequential composition is not deterministic".into()));
                }
                let t = Instant::now();
                let out = run_pipeline(&file, &sample, &cfg)?;
                let t_pipe = ms_since(t);
                if !out.cache.bit_eq(&ref_cache) || out.frames.data != ref_frames.data {
                    return Err(Error::BenchMismatch("pipeline output differs from the oracle".into()));
                }
                if rep > 0 {
                    seq.push(t_seq);
                    over.push(t_pipe);
                }
                last = Some(out.report);
            }
            let d = spec.video.duration_s;
            push(Mode::Sequential, d, None, sample.len(), (Summary::from_samples(seq), 0));
            let report = last.expect("at least one repetition");
            push(Mode::Parallel(top), d, None, sample.len(), (Summary::from_samples(over), report.seeks));
            if let Some(e) = entries.last_mut() {
                e.mode = "pipeline".into();
            }
            if let Some(e) = entries.iter_mut().rev().nth(1) {
                e.mode = "decode_then_prefill".into();
            }
            pipeline_reports.push(report);
        }
    }

    Ok(BenchResult {
        spec: spec.clone(),
        fingerprint: Fingerprint::current(),
        warnings,
        entries,
        pipeline_reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ci_matches_t_table() {
        // t_{0.975, 4} = 2.776; sample sd of 1..=5 is sqrt(2.5)
        let s = Summary::from_samples(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(s.mean_ms, 3.0);
        let expect = 2.776_445 * (2.5f64 / 5.0).sqrt();
        assert!((s.ci95_half_ms - expect).abs() < 1e-5, "{}", s.ci95_half_ms);
        assert_eq!(Summary::from_samples(vec![4.0]).ci95_half_ms, 0.0);
    }

    #[test]
    fn workload_names() {
        assert_eq!("gap_sweep".parse::<Workload>().unwrap(), Workload::GapSweep);
        assert!("fast".parse::<Workload>().is_err());
    }

    #[test]
    fn cores_clamped_with_warning() {
        let mut w = Vec::new();
        let avail = available_cores();
        let got = clamp_cores(&[1, avail + 1], &mut w);
        assert_eq!(w.len(), 1);
        assert!(got.iter().all(|&c| c <= avail));
    }

    #[test]
    fn tiny_cores_sweep_runs() {
        let mut spec = BenchSpec::new(Workload::CoresSweep);
        spec.repetitions = 2;
        spec.cores = vec![1, 2];
        spec.video = VideoParams {
            duration_s: 4,
            width: 32,
            height: 24,
            ..VideoParams::default()
        };
        let r = run_bench(&spec).unwrap();
        assert!(r.entries.iter().all(|e| e.summary.samples_ms.len() == 2));
        assert!(r.entries.iter().any(|e| e.mode == "seek" && e.seeks == e.sampled_frames as u64));
    }
}
