//! `softlid`: command-line driver for LIN experiments on synthetic
//! multilingual data. Every stage reads and writes files, so stages can be
//! rerun or swapped independently.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand};

use softlid_core::eval::{render_table, EvalReport};
use softlid_core::lin::{reset_to_identity, LinLayer};
use softlid_core::pipeline::{
    evaluate_checkpoint, generate_data, lin_artifact, train_base_checkpoint, train_language_lin,
};
use softlid_core::synthlang::{Corpus, Split};
use softlid_core::{ArtifactKind, Checkpoint, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(
    name = "softlid",
    version,
    about = "Soft language-ID adaptation with linear input networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate train/test corpora for the suite described by a config.
    GenData { config: PathBuf, outdir: PathBuf },
    /// Train the language-agnostic base model on mixed-language data.
    TrainBase {
        config: PathBuf,
        /// Data directory from `gen-data`, or a `.sldt` file.
        data: PathBuf,
        out: PathBuf,
    },
    /// Train a LIN for one language against a frozen base checkpoint.
    TrainLin {
        config: PathBuf,
        base: PathBuf,
        data: PathBuf,
        #[arg(long)]
        language: String,
        out: PathBuf,
    },
    /// Write an identity LIN with the same shape as the input LIN.
    ResetLin { input: PathBuf, out: PathBuf },
    /// Decode a test split and write a JSON report.
    Eval {
        base: PathBuf,
        /// LIN applied to every test utterance, whatever its language.
        #[arg(long)]
        lin: Option<PathBuf>,
        testdir: PathBuf,
        /// Scenario (`uniform`, `p99-L2`, or `L1=0.7,L2=0.3`); repeatable.
        #[arg(long, required = true)]
        traffic: Vec<String>,
        report: PathBuf,
    },
    /// Render reports side by side with average and weighted rows.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig::load(path)?;
    eprintln!("# config {}", path.display());
    eprintln!("# seed {}", cfg.seed);
    for line in cfg.to_toml()?.lines() {
        eprintln!("#   {line}");
    }
    Ok(cfg)
}

fn read_split(data: &Path, split: Split) -> Result<Corpus> {
    let path = if data.is_dir() {
        data.join(split.file_name())
    } else {
        data.to_path_buf()
    };
    Ok(Corpus::read(&path)?)
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

fn gen_data(config: &Path, outdir: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let data = generate_data(&cfg, Some(outdir))?;
    eprintln!(
        "wrote {} train and {} test utterances to {}",
        data.train.utterances.len(),
        data.test.utterances.len(),
        outdir.display()
    );
    Ok(())
}

fn train_base(config: &Path, data: &Path, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let train = read_split(data, Split::Train)?;
    let (ck, log) = train_base_checkpoint(&cfg, &train)?;
    for (i, loss) in log.epoch_losses.iter().enumerate() {
        eprintln!("epoch {:>3}  loss {loss:.4}", i + 1);
    }
    ck.save(out)?;
    eprintln!(
        "wrote {} ({} steps, params {})",
        out.display(),
        log.steps,
        ck.param_hash()?
    );
    Ok(())
}

fn train_lin(config: &Path, base: &Path, data: &Path, language: &str, out: &Path) -> Result<()> {
    ensure!(
        !same_file(base, out),
        "output {} would overwrite the base checkpoint",
        out.display()
    );
    let cfg = load_config(config)?;
    let ck = Checkpoint::load(base)?;
    ensure!(
        ck.meta.kind == ArtifactKind::Model,
        "{} is not a base model checkpoint",
        base.display()
    );
    let train = read_split(data, Split::Train)?;
    let (lin, log) = train_language_lin(&cfg, &ck, &train, language)?;
    for (i, loss) in log.epoch_losses.iter().enumerate() {
        eprintln!("epoch {:>3}  loss {loss:.4}", i + 1);
    }
    lin_artifact(&cfg, &ck, &lin, &log)?.save(out)?;
    eprintln!("wrote {} ({})", out.display(), lin.label());
    Ok(())
}

fn reset_lin(input: &Path, out: &Path) -> Result<()> {
    let ck = Checkpoint::load(input)?;
    let lin = LinLayer::from_checkpoint(&ck)?;
    let reset = reset_to_identity(&lin);
    eprintln!("# seed {}", ck.meta.seed);
    let base_hash = ck.meta.base_hash.as_deref().unwrap_or_default();
    reset.to_checkpoint(base_hash, ck.meta.seed, 0).save(out)?;
    eprintln!(
        "wrote identity LIN ({}x{}) to {}",
        reset.dim(),
        reset.dim(),
        out.display()
    );
    Ok(())
}

fn eval(base: &Path, lin: Option<&Path>, testdir: &Path, traffic: &[String], report: &Path) -> Result<()> {
    let ck = Checkpoint::load(base)?;
    let base_hash = ck.param_hash()?;
    let lin = match lin {
        Some(path) => {
            let lck = Checkpoint::load(path)?;
            if let Some(expected) = lck.meta.base_hash.as_deref() {
                if !expected.is_empty() && expected != base_hash {
                    bail!(
                        "{} was trained against base {expected}, not {base_hash}",
                        path.display()
                    );
                }
            }
            Some(LinLayer::from_checkpoint(&lck)?)
        }
        None => None,
    };
    eprintln!("# seed {}", ck.meta.seed);
    eprintln!("# model {base_hash}");
    eprintln!(
        "# lin {}",
        lin.as_ref().map_or_else(|| "none".to_string(), LinLayer::label)
    );
    eprintln!("# traffic {}", traffic.join(" "));
    let test = read_split(testdir, Split::Test)?;
    let rep = evaluate_checkpoint(&ck, lin.as_ref(), &test, traffic)?;
    std::fs::write(report, rep.to_json()? + "\n").with_context(|| format!("writing {}", report.display()))?;
    print!("{}", render_table(std::slice::from_ref(&rep))?);
    Ok(())
}

fn report(paths: &[PathBuf]) -> Result<()> {
    let reports = paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            EvalReport::from_json(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    print!("{}", render_table(&reports)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { config, outdir } => gen_data(&config, &outdir),
        Command::TrainBase { config, data, out } => train_base(&config, &data, &out),
        Command::TrainLin {
            config,
            base,
            data,
            language,
            out,
        } => train_lin(&config, &base, &data, &language, &out),
        Command::ResetLin { input, out } => reset_lin(&input, &out),
        Command::Eval {
            base,
            lin,
            testdir,
            traffic,
            report: out,
        } => eval(&base, lin.as_deref(), &testdir, &traffic, &out),
        Command::Report { reports } => report(&reports),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.chain().map(ToString::to_string).collect::<Vec<_>>().join(": ");
            eprintln!("softlid: error: {msg}");
            ExitCode::FAILURE
        }
    }
}
