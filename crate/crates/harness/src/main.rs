use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use echobench::config::{ExperimentConfig, MaskOrigin, Pipeline, SteeringChoice};
use echobench::experiment::{aggregate, load_scores, run_experiment, save_scores};
use echobench::features::{export_features, MicSelection};
use echobench::pipelines::{nlms_config, run_pipeline};
use echobench::scenes::{build_scene, scene_keys};
use echobench::tables::{rows_csv, rows_text, scores_csv};
use echobench_core::adaptive::multichannel_nlms_cancel;
use echobench_core::beamform::BeamformMode;
use echobench_core::metrics::{score, verify_scene};
use echobench_core::mixer::Scene;
use echobench_core::signal::{read_wav, write_wav, WavFormat};

#[derive(Parser)]
#[command(name = "echobench", version, about = "Multi-channel acoustic echo cancellation benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build every scene of a config and save it to disk.
    Simulate {
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a mask pipeline to a saved scene.
    Enhance {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, value_enum, default_value = "oracle-smm")]
        masks: MaskArg,
        #[arg(long)]
        mask_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mask-driven MVDR on a saved scene.
    Beamform {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, value_enum, default_value = "oracle-smm")]
        masks: MaskArg,
        #[arg(long, value_enum, default_value = "post-filter")]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "reference")]
        steering: SteeringArg,
        #[arg(long)]
        mask_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// NLMS (stereo NLMS for two loudspeakers) on the reference microphone.
    Baseline {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = 512)]
        taps: usize,
        #[arg(long, default_value_t = 0.5)]
        step_size: f64,
        #[arg(long, default_value_t = 0.1)]
        regularization: f64,
        /// Dump tap snapshots every N samples to this file.
        #[arg(long, requires = "trace_interval")]
        trace: Option<PathBuf>,
        #[arg(long)]
        trace_interval: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score an enhanced WAV against a saved scene (JSON on stdout).
    Evaluate {
        #[arg(long)]
        scene: PathBuf,
        /// Omit to score the unprocessed reference microphone.
        #[arg(long)]
        enhanced: Option<PathBuf>,
    },
    /// Aggregate per-scene scores into tables.
    Table {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write estimator features, spectra and oracle targets.
    ExportFeatures {
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long)]
        out: PathBuf,
        /// Export every microphone instead of one random microphone per scene.
        #[arg(long)]
        all_mics: bool,
    },
    /// Run a full experiment and write scores and tables.
    Run {
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ExpArgs {
    /// JSON experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    setup: Option<String>,
    /// Comma-separated pipeline names, e.g. `unprocessed,oracle_smm+post_filter`.
    #[arg(long, value_delimiter = ',')]
    pipelines: Option<Vec<Pipeline>>,
    /// Comma-separated seeds or a range `a..b`.
    #[arg(long)]
    seeds: Option<String>,
    /// Comma-separated eta2 values; `inf` is the linear loudspeaker.
    #[arg(long, value_delimiter = ',')]
    eta2: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    ser_db: Option<Vec<f64>>,
    /// Comma-separated SNRs; `none` for noise-free scenes.
    #[arg(long, value_delimiter = ',')]
    snr_db: Option<Vec<String>>,
    #[arg(long)]
    duration_s: Option<f64>,
    #[arg(long)]
    mask_dir: Option<PathBuf>,
    #[arg(long)]
    keep_wavs: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MaskArg {
    OracleSmm,
    OracleComplex,
    File,
}

impl From<MaskArg> for MaskOrigin {
    fn from(m: MaskArg) -> Self {
        match m {
            MaskArg::OracleSmm => MaskOrigin::OracleSmm,
            MaskArg::OracleComplex => MaskOrigin::OracleComplex,
            MaskArg::File => MaskOrigin::File,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    OnMic,
    PostFilter,
}

#[derive(Clone, Copy, ValueEnum)]
enum SteeringArg {
    UnitNorm,
    Reference,
}

fn parse_seeds(s: &str) -> anyhow::Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        return Ok((a..b).collect());
    }
    s.split(',')
        .map(|v| v.trim().parse().with_context(|| format!("bad seed {v:?}")))
        .collect()
}

fn parse_eta2(s: &str) -> anyhow::Result<f64> {
    match s.trim() {
        "inf" | "infinity" => Ok(f64::INFINITY),
        v => v.parse().with_context(|| format!("bad eta2 {v:?}")),
    }
}

impl ExpArgs {
    fn resolve(&self, out: Option<&Path>) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = &self.setup {
            cfg.setup = serde_json::from_value(serde_json::Value::String(s.clone()))
                .with_context(|| format!("unknown setup {s:?}"))?;
        }
        if let Some(p) = &self.pipelines {
            cfg.pipelines = p.clone();
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = parse_seeds(s)?;
        }
        if let Some(e) = &self.eta2 {
            cfg.eta2 = e.iter().map(|v| parse_eta2(v)).collect::<anyhow::Result<_>>()?;
        }
        if let Some(v) = &self.ser_db {
            cfg.ser_db = v.clone();
        }
        if let Some(v) = &self.snr_db {
            cfg.snr_db = v
                .iter()
                .map(|s| match s.trim() {
                    "none" => Ok(None),
                    x => x.parse().map(Some).with_context(|| format!("bad SNR {x:?}")),
                })
                .collect::<anyhow::Result<_>>()?;
        }
        if let Some(d) = self.duration_s {
            cfg.duration_s = d;
        }
        if let Some(d) = &self.mask_dir {
            cfg.mask_dir = Some(d.clone());
        }
        if self.keep_wavs {
            cfg.keep_wavs = true;
            cfg.output_dir = out.map(Path::to_path_buf);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn scene_id(dir: &Path) -> anyhow::Result<String> {
    dir.file_name()
        .and_then(|n| n.to_str())
        .map(str::to_string)
        .context("scene directory has no usable name")
}

fn load_scene(dir: &Path) -> anyhow::Result<(Scene, String)> {
    let scene = Scene::load(dir).with_context(|| format!("loading scene {}", dir.display()))?;
    Ok((scene, scene_id(dir)?))
}

fn write_output(path: &Path, w: &echobench_core::Waveform) -> anyhow::Result<()> {
    write_wav(path, w, WavFormat::Float32).with_context(|| format!("writing {}", path.display()))
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { exp, out } => {
            let cfg = exp.resolve(None)?;
            for key in scene_keys(&cfg) {
                let scene = build_scene(&key, &cfg)?;
                let dir = out.join(key.id());
                scene.save(&dir)?;
                println!("{}", dir.display());
            }
        }
        Command::Enhance {
            scene,
            masks,
            mask_dir,
            out,
        } => {
            let (sc, id) = load_scene(&scene)?;
            let cfg = ExperimentConfig {
                mask_dir,
                ..ExperimentConfig::default()
            };
            let res = run_pipeline(Pipeline::Mask(masks.into()), &sc, &id, &cfg)?;
            write_output(&out, res.enhanced.as_ref().context("no output")?)?;
        }
        Command::Beamform {
            scene,
            masks,
            mode,
            steering,
            mask_dir,
            out,
        } => {
            let (sc, id) = load_scene(&scene)?;
            let cfg = ExperimentConfig {
                mask_dir,
                steering: match steering {
                    SteeringArg::UnitNorm => SteeringChoice::UnitNorm,
                    SteeringArg::Reference => SteeringChoice::Reference,
                },
                ..ExperimentConfig::default()
            };
            let mode = match mode {
                ModeArg::OnMic => BeamformMode::OnMic,
                ModeArg::PostFilter => BeamformMode::PostFilter,
            };
            let res = run_pipeline(Pipeline::Beamform(masks.into(), mode), &sc, &id, &cfg)?;
            if res.fallback_bins > 0 {
                eprintln!("{} bins fell back to the reference microphone", res.fallback_bins);
            }
            write_output(&out, res.enhanced.as_ref().context("no output")?)?;
        }
        Command::Baseline {
            scene,
            taps,
            step_size,
            regularization,
            trace,
            trace_interval,
            out,
        } => {
            let (sc, _) = load_scene(&scene)?;
            let mut cfg = ExperimentConfig::default();
            cfg.nlms.taps = taps;
            cfg.nlms.step_size = step_size;
            cfg.nlms.regularization = regularization;
            let mut ncfg = nlms_config(&cfg);
            ncfg.trace_interval = trace_interval;
            let res = multichannel_nlms_cancel(
                &sc.mic_signals.select(echobench::pipelines::REFERENCE_MIC),
                &sc.loudspeaker_feeds,
                &ncfg,
            )?;
            if let Some(path) = trace {
                res.trace.save(&path)?;
            }
            write_output(&out, &res.error)?;
        }
        Command::Evaluate { scene, enhanced } => {
            let (sc, _) = load_scene(&scene)?;
            let mic = sc.mic_signals.channel(0);
            let est = enhanced.as_deref().map(read_wav).transpose()?;
            if let Some(w) = &est {
                if w.len() != sc.len() {
                    bail!("enhanced signal has {} samples, scene has {}", w.len(), sc.len());
                }
            }
            let mut report = score(
                mic,
                est.as_ref().map(|w| w.channel(0)),
                sc.nearend.channel(0),
                &sc.timeline,
            )?;
            let check = verify_scene(&sc)?;
            report.realized_ser_db = check.realized_ser_db;
            report.realized_snr_db = check.realized_snr_db;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Table { scores, csv } => {
            let scores = load_scores(&scores)?;
            let rows = aggregate(&scores);
            print!("{}", rows_text(&rows));
            if let Some(p) = csv {
                std::fs::write(&p, rows_csv(&rows))
                    .with_context(|| format!("writing {}", p.display()))?;
            }
        }
        Command::ExportFeatures { exp, out, all_mics } => {
            let cfg = exp.resolve(None)?;
            let selection = if all_mics {
                MicSelection::All
            } else {
                MicSelection::Random
            };
            let manifest = export_features(&cfg, &out, selection)?;
            println!(
                "{} entries written to {}",
                manifest.entries.len(),
                out.display()
            );
        }
        Command::Run { exp, out } => {
            let cfg = exp.resolve(Some(&out))?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let result = run_experiment(&cfg)?;
            std::fs::write(out.join("config.json"), serde_json::to_string_pretty(&cfg)?)?;
            save_scores(&result.scores, &out.join("scores.json"))?;
            std::fs::write(out.join("scores.csv"), scores_csv(&result.scores))?;
            std::fs::write(out.join("results.csv"), rows_csv(&result.rows))?;
            let text = rows_text(&result.rows);
            std::fs::write(out.join("table.txt"), &text)?;
            print!("{text}");
            let failed = result.scores.iter().filter(|s| s.error.is_some()).count();
            if failed > 0 {
                eprintln!("{failed} pipeline runs failed; see scores.csv");
            }
        }
    }
    Ok(())
}
