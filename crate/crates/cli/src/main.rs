//! `qvs`: synthesize, plan, decode, prefill and benchmark QVS videos.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use qvs_core::bench::{run_bench, BenchSpec, VideoParams, Workload};
use qvs_core::container::VideoFile;
use qvs_core::decode::{decode_parallel, decode_seek_based, decode_sequential_slice, FrameBuffer, SampleSpec};
use qvs_core::memory::{MemoryParams, MemoryReport};
use qvs_core::pipeline::{run_pipeline, PipelineConfig};
use qvs_core::planner::{keyframe_intervals, scan_packets};
use qvs_core::prefill::{prefill, tokenize_frames, Model, ModelConfig, PruneConfig, Scorer};
use qvs_core::synth::stored_fps;

#[derive(Parser)]
#[command(name = "qvs", version, about = "Keyframe-parallel decoding and grouped prefill over QVS videos")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Sequential,
    Seek,
    Parallel,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a synthetic clip.
    Synth {
        #[arg(long, default_value_t = 600)]
        duration_s: u64,
        #[arg(long, default_value_t = 24)]
        fps: u32,
        #[arg(long, default_value = "320x240", value_parser = parse_wxh)]
        size: (usize, usize),
        #[arg(long, default_value_t = 24)]
        keyframe_period: u32,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the keyframe interval plan as JSON.
    Plan {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 4)]
        cores: usize,
    },
    /// Extract sampled frames as raw planar RGB.
    Decode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        fps_sample: f64,
        #[arg(long, default_value_t = 4)]
        cores: usize,
        #[arg(long, value_enum, default_value_t = Mode::Parallel)]
        mode: Mode,
        /// Output size as HxW.
        #[arg(long, value_parser = parse_hxw)]
        resize: Option<(usize, usize)>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Grouped prefill over raw frames written by `decode`.
    Prefill {
        /// Planar RGB frames, back to back, as written by `decode --out`
        #[arg(long)]
        frames: PathBuf,
        /// Frame size as HxW.
        #[arg(long, value_parser = parse_hxw)]
        frame_size: (usize, usize),
        #[arg(long, default_value_t = 16)]
        group_frames: usize,
        #[arg(long, default_value_t = 0.5)]
        rho: f64,
        #[arg(long, default_value = "key_norm_small")]
        scorer: Scorer,
        /// d_model,n_heads,d_head,layers
        #[arg(long, default_value = "64,4,16,2", value_parser = parse_dims)]
        model_dims: [usize; 4],
        #[arg(long, default_value_t = 16)]
        tokens_per_frame: usize,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Closed-form memory estimates.
    Memcalc {
        #[arg(long, default_value = "internvl25-8b-1h")]
        preset: String,
        #[arg(long)]
        seq_len: Option<u64>,
        #[arg(long)]
        layers: Option<u64>,
        #[arg(long)]
        heads: Option<u64>,
        #[arg(long)]
        head_dim: Option<u64>,
        #[arg(long)]
        d_model: Option<u64>,
        #[arg(long)]
        d_ff: Option<u64>,
        #[arg(long)]
        block: Option<u64>,
        #[arg(long)]
        groups: Option<u64>,
        /// Prompt tokens added to the cached sequence.
        #[arg(long, default_value_t = 256)]
        prompt_tokens: u64,
        #[arg(long)]
        json: bool,
    },
    /// Overlapped decode and grouped prefill.
    Pipeline {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        fps_sample: f64,
        #[arg(long, default_value_t = 4)]
        cores: usize,
        /// Interval count; defaults to 4 x cores.
        #[arg(long)]
        intervals: Option<usize>,
        #[arg(long, default_value_t = 16)]
        group_frames: usize,
        #[arg(long, default_value_t = 0.5)]
        rho: f64,
        #[arg(long, default_value = "key_norm_small")]
        scorer: Scorer,
        #[arg(long, default_value = "64,4,16,2", value_parser = parse_dims)]
        model_dims: [usize; 4],
        #[arg(long, default_value_t = 16)]
        tokens_per_frame: usize,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Timing sweeps with confidence intervals.
    Bench {
        #[arg(long, default_value = "cores_sweep")]
        workload: Workload,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        cores: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long)]
        duration_s: Option<u64>,
        #[arg(long, value_parser = parse_wxh)]
        size: Option<(usize, usize)>,
        #[arg(long)]
        keyframe_period: Option<u32>,
        #[arg(long, value_delimiter = ',')]
        durations: Option<Vec<u64>>,
        #[arg(long, value_delimiter = ',')]
        gaps: Option<Vec<u64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected AxB, got {s:?}"))?;
    let a = a.parse().map_err(|e| format!("{e}"))?;
    let b = b.parse().map_err(|e| format!("{e}"))?;
    Ok((a, b))
}

/// `WxH` returned as `(width, height)`.
fn parse_wxh(s: &str) -> std::result::Result<(usize, usize), String> {
    parse_pair(s)
}

/// `HxW` returned as `(height, width)`.
fn parse_hxw(s: &str) -> std::result::Result<(usize, usize), String> {
    parse_pair(s)
}

fn parse_dims(s: &str) -> std::result::Result<[usize; 4], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|e| format!("{e}")))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into().map_err(|_| format!("expected d_model,n_heads,d_head,layers, got {s:?}"))
}

fn model_config(dims: [usize; 4], tokens_per_frame: usize) -> ModelConfig {
    ModelConfig {
        d_model: dims[0],
        n_heads: dims[1],
        d_head: dims[2],
        layers: dims[3],
        tokens_per_frame,
        seed: 1,
    }
}

fn prune_config(scorer: Scorer, rho: f64, model: &ModelConfig) -> Result<PruneConfig> {
    let mut prune = PruneConfig::new(scorer, rho)?;
    if scorer == Scorer::AttentionScore {
        prune = prune.with_text_query(Model::new(*model).text_query(256));
    }
    Ok(prune)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn open(path: &Path) -> Result<VideoFile> {
    VideoFile::open(path).with_context(|| format!("opening {}", path.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth {
            duration_s,
            fps,
            size: (width, height),
            keyframe_period,
            seed,
            out,
        } => {
            let file = VideoParams {
                duration_s,
                fps,
                width,
                height,
                keyframe_period,
                seed,
            }
            .synthesize()?;
            file.write(&out)?;
            eprintln!(
                "wrote {} ({} frames, {} packets, {} bytes)",
                out.display(),
                file.frame_count(),
                file.packets().len(),
                file.as_bytes().len()
            );
        }
        Command::Plan { input, cores } => {
            let file = open(&input)?;
            let scan = scan_packets(&file)?;
            let set = keyframe_intervals(&file, cores)?;
            let plan = json!({
                "cores": cores,
                "pts_min": scan.pts_min,
                "pts_max": scan.pts_max,
                "keyframes": scan.keyframe_pts.len(),
                "intervals": set.intervals(),
            });
            println!("{}", serde_json::to_string_pretty(&plan)?);
        }
        Command::Decode {
            input,
            fps_sample,
            cores,
            mode,
            resize,
            out,
            report,
        } => {
            let file = open(&input)?;
            let spec = SampleSpec::uniform_fps(file.frame_count(), stored_fps(&file), fps_sample)?.with_target_size(resize)?;
            let start = std::time::Instant::now();
            let (frames, seeks, name) = match mode {
                Mode::Sequential => (decode_sequential_slice(&file, &spec)?, 0, "sequential"),
                Mode::Seek => {
                    let d = decode_seek_based(&file, &spec)?;
                    (d.frames, d.stats.seeks, "seek")
                }
                Mode::Parallel => {
                    let d = decode_parallel(&file, &spec, cores)?;
                    (d.frames, d.stats.seeks, "parallel")
                }
            };
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            let summary = json!({
                "mode": name,
                "cores": if matches!(mode, Mode::Parallel) { cores } else { 1 },
                "seeks": seeks,
                "wall_ms": wall_ms,
                "frames": frames.slots,
                "height": frames.height,
                "width": frames.width,
            });
            if let Some(path) = out {
                fs::write(&path, &frames.data).with_context(|| format!("writing {}", path.display()))?;
            }
            match report {
                Some(path) => write_json(&path, &summary)?,
                None => println!("{}", serde_json::to_string_pretty(&summary)?),
            }
        }
        Command::Prefill {
            frames,
            frame_size: (height, width),
            group_frames,
            rho,
            scorer,
            model_dims,
            tokens_per_frame,
            report,
        } => {
            let data = fs::read(&frames).with_context(|| format!("reading {}", frames.display()))?;
            let buf = FrameBuffer::from_raw(data, height, width)?;
            let cfg = model_config(model_dims, tokens_per_frame);
            let model = Model::try_new(cfg)?;
            let prune = prune_config(scorer, rho, &cfg)?;
            let start = std::time::Instant::now();
            let groups = tokenize_frames(&buf, &model, group_frames)?;
            let cache = prefill(&groups, &model, &prune)?;
            let summary = json!({
                "frames": buf.slots,
                "groups": groups.len(),
                "tokens": groups.iter().map(|g| g.n_tokens).sum::<usize>(),
                "retained_per_layer": (0..cfg.layers).map(|l| cache.retained_tokens(l)).collect::<Vec<_>>(),
                "cache_bytes_f16": cache.bytes(2),
                "peak_group_tokens": cache.peak_group_tokens,
                "wall_ms": start.elapsed().as_secs_f64() * 1e3,
            });
            match report {
                Some(path) => write_json(&path, &summary)?,
                None => println!("{}", serde_json::to_string_pretty(&summary)?),
            }
        }
        Command::Memcalc {
            preset,
            seq_len,
            layers,
            heads,
            head_dim,
            d_model,
            d_ff,
            block,
            groups,
            prompt_tokens,
            json,
        } => {
            let base = MemoryParams::preset(&preset)?;
            let params = MemoryParams {
                seq_len: seq_len.unwrap_or(base.seq_len),
                layers: layers.unwrap_or(base.layers),
                n_heads: heads.unwrap_or(base.n_heads),
                d_head: head_dim.unwrap_or(base.d_head),
                d_model: d_model.unwrap_or(base.d_model),
                d_ff: d_ff.unwrap_or(base.d_ff),
                block_rows: block.unwrap_or(base.block_rows),
                block_cols: block.unwrap_or(base.block_cols),
                groups: groups.or(Some(225)),
                ..base
            };
            let report = MemoryReport::new(params, prompt_tokens)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!("{report}");
            }
        }
        Command::Pipeline {
            input,
            fps_sample,
            cores,
            intervals,
            group_frames,
            rho,
            scorer,
            model_dims,
            tokens_per_frame,
            report,
        } => {
            let file = open(&input)?;
            let spec = SampleSpec::uniform_fps(file.frame_count(), stored_fps(&file), fps_sample)?;
            let model = model_config(model_dims, tokens_per_frame);
            let mut cfg = PipelineConfig::new(cores, group_frames, prune_config(scorer, rho, &model)?, model);
            cfg.intervals = intervals;
            let out = run_pipeline(&file, &spec, &cfg)?;
            let r = &out.report;
            eprintln!(
                "delta {:.1} ms, decode {:.1} ms, prefill {:.1} ms, total {:.1} ms (predicted {:.1} ms), llm stub {:.2} ms",
                r.delta_ms, r.t_dec_ms, r.t_prefill_ms, r.t_total_measured_ms, r.t_total_predicted_ms, r.llm_stub_ms
            );
            match report {
                Some(path) => write_json(&path, r)?,
                None => println!("{}", serde_json::to_string_pretty(r)?),
            }
        }
        Command::Bench {
            workload,
            cores,
            reps,
            duration_s,
            size,
            keyframe_period,
            durations,
            gaps,
            out,
        } => {
            if reps == 0 {
                bail!("--reps must be at least 1");
            }
            let mut spec = BenchSpec::new(workload);
            spec.cores = cores;
            spec.repetitions = reps;
            if let Some(d) = duration_s {
                spec.video.duration_s = d;
            }
            if let Some((w, h)) = size {
                spec.video.width = w;
                spec.video.height = h;
            }
            if let Some(k) = keyframe_period {
                spec.video.keyframe_period = k;
            }
            if let Some(d) = durations {
                spec.durations_s = d;
            }
            if let Some(g) = gaps {
                spec.gaps = g;
            }
            let result = run_bench(&spec)?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            for e in &result.entries {
                eprintln!(
                    "{:<20} cores={:<2} dur={:<5} gap={:<5} mean {:>9.2} ms +/- {:.2}",
                    e.mode,
                    e.cores,
                    e.duration_s,
                    e.gap_frames.map_or("-".into(), |g| g.to_string()),
                    e.summary.mean_ms,
                    e.summary.ci95_half_ms
                );
            }
            match out {
                Some(path) => write_json(&path, &result)?,
                None => println!("{}", serde_json::to_string_pretty(&result)?),
            }
        }
    }
    Ok(())
}
