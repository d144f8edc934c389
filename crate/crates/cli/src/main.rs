use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use fdconv::analysis::{
    export_report, pairwise_cosine_similarity, spectral_overlap, weight_frequency_response, AnalysisReport,
    SpectrumGrid, DEFAULT_PAD,
};
use fdconv::checks::{run_suite, Suite};
use fdconv::fbm::{fbm_forward, fbm_forward_postmod, predict_modulation, BandMaskSet, FbmParams};
use fdconv::harness::{
    evaluate, gen_band_dataset, load_checkpoint, save_checkpoint, train_with, BandDataset, Checkpoint, ModelKind,
    TrainConfig,
};
use fdconv::layer::fdconv_trace;
use fdconv::numerics::{conv2d_direct, conv2d_fft};
use fdconv::{PadMode, Tensor};

#[derive(Parser)]
#[command(name = "fdconv", version, about = "Frequency dynamic convolution toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run invariant suites; exits nonzero if any check fails.
    Check {
        #[arg(long, default_value = "all")]
        suite: Suite,
    },
    /// Train the toy band classifier and write a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also train a static-convolution model under the same schedule.
        #[arg(long)]
        baseline: bool,
    },
    /// Write spectra, similarity and modulation-plane CSVs for a checkpoint.
    Analyze {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PAD)]
        pad: usize,
    },
    /// Time direct vs Fourier convolution and both band-modulation paths.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 20)]
        repeats: usize,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Check { suite } => Ok(check(suite)),
        Command::Train { config, out, baseline } => train(&config, &out, baseline).map(|_| ExitCode::SUCCESS),
        Command::Analyze { checkpoint, out, pad } => analyze(&checkpoint, &out, pad).map(|_| ExitCode::SUCCESS),
        Command::Bench { config, repeats } => bench(&config, repeats).map(|_| ExitCode::SUCCESS),
    }
}

fn check(suite: Suite) -> ExitCode {
    let results = run_suite(suite);
    let failed = results.iter().filter(|r| !r.passed).count();
    for r in &results {
        println!("{r}");
    }
    println!("{} checks, {failed} failed", results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn read_config(path: &Path) -> Result<TrainConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    TrainConfig::parse(&text).with_context(|| format!("parsing {}", path.display()))
}

fn dataset_for(config: &TrainConfig) -> Result<BandDataset> {
    Ok(gen_band_dataset(
        config.seed,
        config.dataset.size,
        config.dataset.s,
        &config.layer.thresholds,
        config.dataset.sigma,
    )?)
}

fn train_one(config: &TrainConfig, data: &BandDataset, kind: ModelKind, out: &Path) -> Result<Checkpoint> {
    let start = Instant::now();
    let ckpt = train_with(config, data, kind, |m| println!("[{}] {m}", kind.as_str()))?;
    let held_out = data.subset(&data.held_out_indices());
    let eval = evaluate(&ckpt, &held_out)?;
    println!(
        "[{}] held-out accuracy {:.4} ({}/{}) in {:.1}s",
        kind.as_str(),
        eval.accuracy(),
        eval.correct,
        eval.total,
        start.elapsed().as_secs_f64()
    );
    for (label, row) in eval.confusion.iter().enumerate() {
        println!("[{}] confusion {label}: {row:?}", kind.as_str());
    }
    let path = out.join(format!("{}.fdcv", kind.as_str()));
    save_checkpoint(&ckpt, &path)?;
    let log: String = ckpt.log.iter().map(|m| format!("{m}\n")).collect();
    let log_path = out.join(format!("{}_metrics.log", kind.as_str()));
    fs::write(&log_path, log).with_context(|| format!("writing {}", log_path.display()))?;
    println!("[{}] wrote {}", kind.as_str(), path.display());
    Ok(ckpt)
}

fn train(config_path: &Path, out: &Path, baseline: bool) -> Result<()> {
    let config = read_config(config_path)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let data = dataset_for(&config)?;
    let fd = train_one(&config, &data, ModelKind::FdConv, out)?;
    if baseline {
        let st = train_one(&config, &data, ModelKind::Static, out)?;
        let (a, b) = (
            fd.log.last().map_or(0.0, |m| m.held_out_accuracy),
            st.log.last().map_or(0.0, |m| m.held_out_accuracy),
        );
        println!("fdconv {a:.4} vs static {b:.4} (difference {:+.4})", a - b);
    }
    Ok(())
}

fn analyze(path: &Path, out: &Path, pad: usize) -> Result<()> {
    let ckpt = load_checkpoint(path)?;
    let mut report = AnalysisReport::default();
    report.manifest.push(("checkpoint".into(), path.display().to_string()));
    report.manifest.push(("model".into(), ckpt.kind.as_str().into()));
    report.manifest.push(("step".into(), ckpt.step.to_string()));
    for line in ckpt.config.to_text().lines() {
        if let Some((k, v)) = line.split_once(" = ") {
            report.manifest.push((format!("config.{k}"), v.into()));
        }
    }
    let weights = match ckpt.net.layer_state() {
        Some(state) => state.weights()?,
        None => match &ckpt.net.conv {
            fdconv::harness::ConvLayer::Static(w) => vec![w.clone()],
            fdconv::harness::ConvLayer::FdConv(_) => unreachable!("layer_state covers this case"),
        },
    };
    report.spectra = Some(weight_frequency_response(&weights, SpectrumGrid::Padded(pad))?);
    if weights.len() >= 2 {
        let sim = pairwise_cosine_similarity(&weights)?;
        let off = sim.max_off_diagonal();
        report.checks.push((
            "orthogonality".into(),
            off < 1e-8,
            format!("max off-diagonal {off:.3e}"),
        ));
        report.similarity = Some(sim);
        let (overlap, energy) = spectral_overlap(&weight_frequency_response(&weights, SpectrumGrid::Native)?)?;
        report.checks.push((
            "native disjointness".into(),
            overlap < 1e-12,
            format!("max product {overlap:.3e}, energy {energy:.3e}"),
        ));
    }
    if let Some(state) = ckpt.net.layer_state() {
        let data = dataset_for(&ckpt.config)?;
        for class in 0..ckpt.config.layer.bands() {
            let Some(sample) = data.samples.iter().find(|s| s.label == class) else {
                continue;
            };
            let trace = fdconv_trace(&sample.image, state)?;
            if let Some(a) = &trace.band_modulation {
                let (h, w) = (a.shape()[1], a.shape()[2]);
                for b in 0..a.shape()[0] {
                    let plane = Tensor::new(&[h, w], a.data()[b * h * w..(b + 1) * h * w].to_vec())?;
                    report.planes.push((format!("modulation_class{class}_band{b}"), plane));
                }
            }
        }
    }
    let written = export_report(&report, out)?;
    for p in &written {
        println!("wrote {}", p.display());
    }
    for (name, passed, detail) in &report.checks {
        println!("{} {name}: {detail}", if *passed { "PASS" } else { "FAIL" });
    }
    if report.checks.iter().any(|c| !c.1) {
        bail!("analysis invariant failed");
    }
    Ok(())
}

fn time<T>(repeats: usize, mut f: impl FnMut() -> fdconv::Result<T>) -> Result<f64> {
    f()?;
    let start = Instant::now();
    for _ in 0..repeats {
        f()?;
    }
    Ok(start.elapsed().as_secs_f64() * 1e3 / repeats.max(1) as f64)
}

fn bench(config_path: &Path, repeats: usize) -> Result<()> {
    let config = read_config(config_path)?;
    let layer = &config.layer;
    let s = config.dataset.s;
    let x = Tensor::from_fn(&[layer.c_in, s, s], |i| ((i * 7919) % 113) as f64 / 113.0 - 0.5);
    let w = Tensor::from_fn(&layer.shape().dims(), |i| ((i * 104_729) % 97) as f64 / 97.0 - 0.5);
    let direct = time(repeats, || conv2d_direct(&x, &w, PadMode::Circular))?;
    let fourier = time(repeats, || conv2d_fft(&x, &w))?;
    println!(
        "conv {}x{s}x{s}, k={} C_out={}: direct {direct:.3} ms, fourier {fourier:.3} ms",
        layer.c_in, layer.k, layer.c_out
    );
    let masks = BandMaskSet::build(s, s, &layer.thresholds)?;
    let mut params = FbmParams::zeros(layer.c_in, layer.bands());
    params.bias = Tensor::from_fn(params.bias.shape(), |i| i as f64 * 0.3 - 0.5);
    params.weight = Tensor::from_fn(params.weight.shape(), |i| ((i % 5) as f64 - 2.0) * 0.1);
    let a = predict_modulation(&x, &params)?;
    let pre = time(repeats, || fbm_forward(&x, &w, &a, &masks))?;
    let post = time(repeats, || fbm_forward_postmod(&x, &w, &a, &masks))?;
    println!(
        "band modulation, {} bands: pre-conv {pre:.3} ms, post-conv {post:.3} ms",
        masks.bands()
    );
    Ok(())
}
