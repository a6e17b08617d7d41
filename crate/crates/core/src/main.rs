use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use perturb_bench::attack::{mifgsm_attack, MifgsmConfig};
use perturb_bench::audio::{save_wav, synth_corpus, write_manifest, Corpus, Split};
use perturb_bench::checkpoint::{load_encoder, load_ssed, save_encoder, save_ssed};
use perturb_bench::defenses::Defense;
use perturb_bench::harness::{
    emit_report, format_table, load_report, run_scenario, write_plots, AttackKind, BenchConfig, Removal, Scenario,
    ScenarioSpec, Workbench,
};
use perturb_bench::training::{train_denoiser_g, train_independent, train_joint, train_noise_denoiser, LossHistory};
use perturb_bench::{Error, Result};

#[derive(Parser)]
#[command(name = "perturb-bench", version, about = "Speaker-adversarial perturbation generation and removal benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario cell and write its report.
    Run {
        #[arg(long)]
        scenario: Scenario,
        #[arg(long)]
        attack: AttackKind,
        #[arg(long)]
        removal: Removal,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print a stored report and redraw its plots.
    Report { dir: PathBuf },
    /// Attack every utterance of a corpus.
    Attack {
        #[command(subcommand)]
        method: AttackCommand,
    },
    /// Train models and write checkpoints plus loss histories.
    Train {
        what: TrainTarget,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Frozen generator checkpoint for `denoiser-g`; defaults to a
        /// freshly trained joint generator.
        #[arg(long)]
        generator: Option<PathBuf>,
    },
    /// Apply an attack-agnostic defense to every utterance of a corpus.
    Defend {
        #[arg(long)]
        kind: DefenseKind,
        /// λ for qt, kernel for ms, SNR in dB for an.
        #[arg(long)]
        param: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        in_manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Write a synthetic corpus with its manifest.
    Synth {
        #[arg(long, default_value_t = 20)]
        speakers: usize,
        #[arg(long, default_value_t = 10)]
        utterances: usize,
        #[arg(long, default_value_t = 2.0)]
        seconds: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum AttackCommand {
    Mifgsm {
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.005)]
        alpha: f64,
        /// Momentum decay.
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        #[arg(long, default_value_t = 10)]
        iters: usize,
        #[arg(long, default_value_t = 0.1)]
        probe_radius: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Encoder checkpoint; defaults to the white-box encoder of `--config`.
        #[arg(long)]
        encoder: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        in_manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TrainTarget {
    Encoder,
    Joint,
    DenoiserG,
    Independent,
    NoiseDenoiser,
}

#[derive(Clone, Copy, ValueEnum)]
enum DefenseKind {
    Qt,
    Ms,
    An,
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<BenchConfig> {
    let cfg = match path {
        Some(p) => BenchConfig::load(p)?,
        None => BenchConfig::default(),
    };
    Ok(match seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn whole(value: f64, what: &str) -> Result<u64> {
    if value.fract() != 0.0 || value < 0.0 {
        return Err(Error::Config(format!("{what} must be a non-negative integer, got {value}")));
    }
    Ok(value as u64)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            scenario,
            attack,
            removal,
            config,
            out,
            seed,
        } => {
            // Applicability is checked before anything is loaded or trained.
            let spec = ScenarioSpec::new(scenario, attack, removal)?;
            let cfg = load_config(config.as_deref(), seed)?;
            let bench = Workbench::new(cfg, Workbench::cache_from_env())?;
            mkdir(&out)?;
            let report = run_scenario(&spec, &bench, Some(&out))?;
            emit_report(&report, &out)?;
            print!("{}", format_table(&report.rows));
        }
        Command::Report { dir } => {
            let report = load_report(&dir)?;
            println!("{}", report.metadata.label);
            print!("{}", format_table(&report.rows));
            write_plots(&report, &dir)?;
        }
        Command::Attack {
            method:
                AttackCommand::Mifgsm {
                    epsilon,
                    alpha,
                    eta,
                    iters,
                    probe_radius,
                    seed,
                    encoder,
                    config,
                    in_manifest,
                    out_dir,
                },
        } => {
            let cfg = MifgsmConfig {
                epsilon,
                alpha,
                momentum_decay: eta,
                iterations: iters,
                probe_radius,
                seed,
            };
            cfg.validate()?;
            let corpus = Corpus::load(&in_manifest, Split::Test)?;
            let model = match encoder {
                Some(p) => load_encoder(&p)?,
                None => {
                    let bench = Workbench::new(load_config(config.as_deref(), None)?, Workbench::cache_from_env())?;
                    bench.white()?.clone()
                }
            };
            mkdir(&out_dir)?;
            for (i, w) in corpus.utterances().iter().enumerate() {
                let mut c = cfg.clone();
                c.seed = perturb_bench::seed::mix_seed(seed, i as u64);
                let res = mifgsm_attack(&model, w, &c)?;
                save_wav(&res.adversarial, out_dir.join(format!("{}.wav", w.utterance_id)))?;
                write_text(
                    &out_dir.join(format!("{}.json", w.utterance_id)),
                    &serde_json::to_string_pretty(&res)?,
                )?;
                println!("{} linf={:.5} final_loss={:.4}", w.utterance_id, res.linf, res.loss_trace.last().copied().unwrap_or(f64::NAN));
            }
            write_manifest(&out_dir.join("manifest.json"), &corpus.manifest())?;
        }
        Command::Train {
            what,
            config,
            seed,
            out,
            generator,
        } => {
            let cfg = load_config(config.as_deref(), seed)?;
            let bench = Workbench::new(cfg, Workbench::cache_from_env())?;
            let tcfg = &bench.config.training;
            mkdir(&out)?;
            let history = |name: &str, h: &LossHistory| write_text(&out.join(name), &h.to_csv());
            match what {
                TrainTarget::Encoder => {
                    save_encoder(bench.white()?, &out.join("encoder-white.ckpt"))?;
                    save_encoder(bench.black()?, &out.join("encoder-black.ckpt"))?;
                }
                TrainTarget::Joint => {
                    let pair = train_joint(&bench.train, bench.white()?, tcfg)?;
                    save_ssed(&pair.generator, &out.join("generator.ckpt"))?;
                    save_ssed(&pair.remover, &out.join("remover.ckpt"))?;
                    history("loss_history.csv", &pair.generator_history)?;
                }
                TrainTarget::Independent => {
                    let pair = train_independent(&bench.train, bench.white()?, tcfg)?;
                    save_ssed(&pair.generator, &out.join("generator.ckpt"))?;
                    save_ssed(&pair.remover, &out.join("remover.ckpt"))?;
                    history("generator_loss_history.csv", &pair.generator_history)?;
                    history("remover_loss_history.csv", &pair.remover_history)?;
                }
                TrainTarget::DenoiserG => {
                    let frozen = match generator {
                        Some(p) => load_ssed(&p)?,
                        None => bench.joint()?.0.clone(),
                    };
                    let (remover, h) = train_denoiser_g(&bench.train, &frozen, tcfg)?;
                    save_ssed(&remover, &out.join("remover.ckpt"))?;
                    history("loss_history.csv", &h)?;
                }
                TrainTarget::NoiseDenoiser => {
                    let (remover, h) = train_noise_denoiser(&bench.train, tcfg)?;
                    save_ssed(&remover, &out.join("remover.ckpt"))?;
                    history("loss_history.csv", &h)?;
                }
            }
            println!("wrote {}", out.display());
        }
        Command::Defend {
            kind,
            param,
            seed,
            in_manifest,
            out_dir,
        } => {
            let defense = match kind {
                DefenseKind::Qt => Defense::Qt {
                    lambda_level: u32::try_from(whole(param, "quantization level")?)
                        .map_err(|_| Error::Config("quantization level out of range".into()))?,
                },
                DefenseKind::Ms => Defense::Ms {
                    kernel: whole(param, "median kernel")? as usize,
                },
                DefenseKind::An => Defense::An { snr_db: param, seed },
            };
            defense.validate()?;
            let corpus = Corpus::load(&in_manifest, Split::Test)?;
            let out: Vec<_> = corpus
                .utterances()
                .iter()
                .enumerate()
                .map(|(i, w)| match defense {
                    Defense::An { snr_db, .. } => Defense::An {
                        snr_db,
                        seed: perturb_bench::seed::mix_seed(seed, i as u64),
                    }
                    .apply(w),
                    ref d => d.apply(w),
                })
                .collect::<Result<_>>()?;
            corpus.with_utterances(out)?.write(&out_dir)?;
            println!("wrote {} utterances to {}", corpus.len(), out_dir.display());
        }
        Command::Synth {
            speakers,
            utterances,
            seconds,
            seed,
            out,
        } => {
            let corpus = synth_corpus(speakers, utterances, seconds, seed)?;
            corpus.write(&out)?;
            println!("wrote {} utterances to {}", corpus.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::NotApplicable(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
