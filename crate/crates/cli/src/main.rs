use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use oodid::dataset::{synth_generate, write_dataset, SynthConfig};
use oodid::metrics::EvalReport;
use oodid::pipeline::{
    run_calibrate, run_detect, run_discover, run_eval, run_split, run_train, PipelineConfig,
    REPORT_FILE,
};

#[derive(Parser)]
#[command(
    name = "oodid",
    version,
    about = "Out-of-domain intent detection and discovery"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config (JSON). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the in-domain and out-of-domain parts of the dataset.
    Split(Common),
    /// Train the detector, classifier and clustering settings.
    Train(Common),
    /// Recompute the detection threshold of a trained model.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        quantile: Option<f64>,
    },
    /// Score test rows and write detections.csv.
    Detect(Common),
    /// Cluster flagged test rows.
    Discover(Common),
    /// Run detection, routing and discovery and write report.json.
    Evaluate(Common),
    /// Generate a synthetic Gaussian-blob dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 6)]
        classes: usize,
        #[arg(long, default_value_t = 200)]
        per_class: usize,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 8.0)]
        separation: f64,
        #[arg(long, default_value_t = 1.0)]
        noise_sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print a summary of report.json.
    Report(Common),
}

fn load_config(c: &Common) -> Result<PipelineConfig, String> {
    let mut cfg = match &c.config {
        Some(p) => PipelineConfig::load(p).map_err(|e| format!("[config] {e}"))?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg = cfg.with_seed(s);
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    if let Some(d) = &c.dataset {
        cfg.dataset = d.clone();
    }
    Ok(cfg)
}

fn summary(r: &EvalReport) -> String {
    format!(
        "test rows {}  gold ood {}  flagged {}  threshold {:.4}\n\
         detection   macro-F1 {:.4}  micro-F1 {:.4}  AUC {:.4}\n\
         multi-class macro-F1 {:.4}  micro-F1 {:.4}\n\
         discovery   NMI {:.4}  ARI {:.4}  ACC {:.4}  k {} (k* {})\n\
         flagged     rows {}  NMI {:.4}  ARI {:.4}  ACC {:.4}",
        r.n_test,
        r.n_gold_ood,
        r.n_flagged,
        r.threshold,
        r.macro_f1,
        r.micro_f1,
        r.auc,
        r.macro_f1_mc,
        r.micro_f1_mc,
        r.nmi,
        r.ari,
        r.acc,
        r.k_discovered,
        r.k_star,
        r.flagged.rows,
        r.flagged.nmi,
        r.flagged.ari,
        r.flagged.acc,
    )
}

fn run(cmd: Command) -> Result<(), String> {
    let tag = |stage: &'static str| move |e: oodid::Error| format!("[{stage}] {e}");
    match cmd {
        Command::Split(c) => {
            let cfg = load_config(&c)?;
            let (ind, ood) = run_split(&cfg).map_err(|e| e.to_string())?;
            println!("in-domain rows {}  ood rows {}", ind.len(), ood.len());
        }
        Command::Train(c) => {
            let cfg = load_config(&c)?;
            let out = run_train(&cfg).map_err(|e| e.to_string())?;
            println!(
                "epochs {}  threshold {:.4}  tuned {:?}  ari {:.4}",
                out.history.len(),
                out.vae.threshold().unwrap_or(f64::NAN),
                out.tuning.best,
                out.tuning.best_ari
            );
        }
        Command::Calibrate { common, quantile } => {
            let mut cfg = load_config(&common)?;
            if let Some(q) = quantile {
                cfg.threshold_quantile = q;
            }
            let t = run_calibrate(&cfg).map_err(|e| e.to_string())?;
            println!("threshold {t}");
        }
        Command::Detect(c) => {
            let cfg = load_config(&c)?;
            let (_, d) = run_detect(&cfg).map_err(|e| e.to_string())?;
            let n = d.flagged.iter().filter(|&&f| f).count();
            println!("flagged {n} of {}", d.flagged.len());
        }
        Command::Discover(c) => {
            let cfg = load_config(&c)?;
            let d = run_discover(&cfg).map_err(|e| e.to_string())?;
            println!("rows {}  clusters {}", d.positions.len(), d.k);
        }
        Command::Evaluate(c) => {
            let cfg = load_config(&c)?;
            let out = run_eval(&cfg).map_err(|e| e.to_string())?;
            println!("{}", summary(&out.report));
        }
        Command::Synth {
            out,
            classes,
            per_class,
            dim,
            separation,
            noise_sigma,
            seed,
        } => {
            let cfg = SynthConfig {
                classes,
                per_class,
                dim,
                separation,
                noise_sigma,
                seed,
            };
            let ds = synth_generate(&cfg).map_err(tag("synth"))?;
            write_dataset(&ds, &out).map_err(tag("write"))?;
            println!("wrote {} rows to {}", ds.len(), out.display());
        }
        Command::Report(c) => {
            let cfg = load_config(&c)?;
            let path = cfg.out.join(REPORT_FILE);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| format!("[report] {}: {e}", path.display()))?;
            let r: EvalReport = serde_json::from_str(&text)
                .map_err(|e| format!("[report] {}: {e}", path.display()))?;
            println!("{}", summary(&r));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
