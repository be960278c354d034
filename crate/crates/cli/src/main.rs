use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use echoprune::bench::{ablation_matrix, ablation_table, scaling_check, time_compression, AblationGrid, Size};
use echoprune::report::write_report;
use echoprune::synthgen::{generate, SceneSpec, TokenLabels};
use echoprune::tensor_io::{read_text, read_visual, write_tensor};
use echoprune::{Keep, PruneConfig, Tensor, TextTokenSet, Variant, VisualTokenGrid, Window};

#[derive(Parser)]
#[command(name = "echoprune", version, about = "Training-free video token pruning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score and prune one visual/text tensor pair and write a selection report.
    Prune(PruneArgs),
    /// Generate a synthetic scene from a JSON spec.
    Gen(GenArgs),
    /// Time the pipeline over several grid sizes and check linear scaling.
    Bench(BenchArgs),
    /// Run every variant and selector on one input and compare retention.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct KeepArgs {
    /// Fraction of visual tokens to keep, in (0, 1].
    #[arg(long, value_parser = parse_ratio, conflicts_with = "budget")]
    keep_ratio: Option<f64>,
    /// Absolute number of visual tokens to keep.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    budget: Option<u64>,
}

impl KeepArgs {
    fn keep(&self) -> Keep {
        match (self.keep_ratio, self.budget) {
            (_, Some(b)) => Keep::Absolute(b as usize),
            (Some(r), None) => Keep::Ratio(r),
            (None, None) => PruneConfig::default().keep,
        }
    }
}

#[derive(Args)]
struct ConfigArgs {
    /// Softmax temperature of echo matching.
    #[arg(long, default_value_t = 0.5, value_parser = parse_positive)]
    tau: f64,
    /// Matching window: odd side length or `full`.
    #[arg(long, default_value = "full", value_parser = parse_window)]
    window: Window,
    /// Number of history frames pooled by echo matching (1 to 3).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=3))]
    history: u8,
    /// Weight of relevance against redundancy, in [0, 1].
    #[arg(long, default_value_t = 0.5, value_parser = parse_unit)]
    lambda: f64,
    /// Scoring variant.
    #[arg(long, default_value = "full", value_parser = parse_variant)]
    variant: Variant,
    #[command(flatten)]
    keep: KeepArgs,
}

impl ConfigArgs {
    fn config(&self) -> Result<PruneConfig> {
        let cfg = PruneConfig {
            tau: self.tau,
            window: self.window,
            history: usize::from(self.history),
            lambda: self.lambda,
            variant: self.variant,
            keep: self.keep.keep(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct PruneArgs {
    #[arg(long)]
    visual: PathBuf,
    #[arg(long)]
    text: PathBuf,
    /// Where to write the selection report (JSON).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Output directory for visual.ept, text.ept and labels.json.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the spec.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated grid sizes as FRAMESxROWSxCOLSxDIM.
    #[arg(long, value_delimiter = ',', value_parser = parse_size,
          default_value = "4x14x14x64,8x14x14x64,16x14x14x64,32x14x14x64")]
    sizes: Vec<Size>,
    #[arg(long, default_value_t = 3)]
    runs: usize,
    #[arg(long, default_value_t = 1)]
    warmups: usize,
    /// Seed of the synthetic scenes.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional path for the timing report (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct AblateArgs {
    /// Labelled synthetic scene to generate and evaluate.
    #[arg(long, required_unless_present = "visual", conflicts_with_all = ["visual", "text"])]
    spec: Option<PathBuf>,
    #[arg(long, requires = "text")]
    visual: Option<PathBuf>,
    #[arg(long, requires = "visual")]
    text: Option<PathBuf>,
    /// Restricts the temperature axis to one value (default: 0.1 and 0.5).
    #[arg(long, value_parser = parse_positive)]
    tau: Option<f64>,
    /// Restricts the window axis to one value (default: 3 and full).
    #[arg(long, value_parser = parse_window)]
    window: Option<Window>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=3))]
    history: u8,
    #[arg(long, default_value_t = 0.5, value_parser = parse_unit)]
    lambda: f64,
    /// Seed of the random baseline.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional path for the full comparison (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    keep: KeepArgs,
}

fn parse_ratio(s: &str) -> Result<f64, String> {
    let r: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if r > 0.0 && r <= 1.0 {
        Ok(r)
    } else {
        Err(format!("keep ratio must be in (0, 1], got {r}"))
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(format!("must be positive, got {x}"))
    }
}

fn parse_unit(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..=1.0).contains(&x) {
        Ok(x)
    } else {
        Err(format!("must be in [0, 1], got {x}"))
    }
}

fn parse_window(s: &str) -> Result<Window, String> {
    s.parse().map_err(|e: echoprune::Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: echoprune::Error| e.to_string())
}

fn parse_size(s: &str) -> Result<Size, String> {
    let dims: Vec<usize> = s
        .split('x')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("size `{s}` must look like 8x14x14x64"))?;
    match dims[..] {
        [k, h, w, d] if k > 0 && h > 0 && w > 0 && d > 0 => Ok((k, h, w, d)),
        _ => Err(format!("size `{s}` needs four positive extents FRAMESxROWSxCOLSxDIM")),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))
}

fn cmd_prune(args: PruneArgs) -> Result<()> {
    let config = args.config.config()?;
    let visual = read_visual(&args.visual)?;
    let text = read_text(&args.text)?;
    let run = echoprune::api::prune(&visual, &text, &config)?;
    write_report(&args.out, &run.report())?;
    println!(
        "tokens_in={} kept={} gamma={:.4} wall_ms={:.3}",
        visual.num_tokens(),
        run.selection.len(),
        run.plan.gamma,
        run.timing.total_ms
    );
    Ok(())
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let mut spec = SceneSpec::read(&args.spec)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let scene = generate(&spec)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let visual_path = args.out.join("visual.ept");
    let text_path = args.out.join("text.ept");
    let labels_path = args.out.join("labels.json");
    write_tensor(&visual_path, &Tensor::from(scene.visual))?;
    write_tensor(&text_path, &Tensor::from(scene.text))?;
    fs::write(&labels_path, scene.labels.to_json()? + "\n")
        .with_context(|| format!("writing {}", labels_path.display()))?;
    println!("wrote {} {} {}", visual_path.display(), text_path.display(), labels_path.display());
    Ok(())
}

#[derive(Serialize)]
struct BenchOutput {
    timing: echoprune::bench::TimingReport,
    scaling: echoprune::bench::ScalingVerdict,
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let config = args.config.config()?;
    let timing = time_compression(&args.sizes, &config, args.runs, args.warmups, args.seed)?;
    print!("{}", timing.to_table());
    let scaling = scaling_check(&timing)?;
    println!(
        "loglog slope {:.3} (band {}..{}): {}",
        scaling.slope,
        echoprune::bench::SLOPE_BAND.0,
        echoprune::bench::SLOPE_BAND.1,
        if scaling.pass { "PASS" } else { "FAIL" }
    );
    if let Some(out) = &args.out {
        write_json(out, &BenchOutput { timing, scaling })?;
    }
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let (visual, text, labels): (VisualTokenGrid, TextTokenSet, Option<TokenLabels>) = match &args.spec {
        Some(spec) => {
            let scene = generate(&SceneSpec::read(spec)?)?;
            (scene.visual, scene.text, Some(scene.labels))
        }
        None => {
            let (Some(v), Some(t)) = (&args.visual, &args.text) else {
                bail!("either --spec or both --visual and --text are required");
            };
            (read_visual(v)?, read_text(t)?, None)
        }
    };
    let defaults = AblationGrid::default();
    let grid = AblationGrid {
        taus: args.tau.map_or(defaults.taus, |t| vec![t]),
        windows: args.window.map_or(defaults.windows, |w| vec![w]),
        history: usize::from(args.history),
        lambda: args.lambda,
        keep: args.keep.keep(),
        seed: args.seed,
    };
    let rows = ablation_matrix(&visual, &text, labels.as_ref(), &grid)?;
    print!("{}", ablation_table(&rows));
    if let Some(out) = &args.out {
        write_json(out, &rows)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prune(a) => cmd_prune(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Ablate(a) => cmd_ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
