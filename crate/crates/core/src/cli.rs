//! Command-line front end.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::{self, CorrelationCurve};
use crate::bench::{bench_steps, BenchRow};
use crate::datagen::{gen_dpd_gas, gen_from_model, lattice};
use crate::dpd::{dpd_calibrate, dpd_step, DpdCalibConfig, DpdParams};
use crate::dynamics::{verify_structure, CheckKind, VerifyOptions};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryMode, SimBox};
use crate::io::{read_dump, write_dump, RunConfig};
use crate::nn::ModelParams;
use crate::thermo::Closures;
use crate::training::{teacher_entropy, train_with};
use crate::trajectory::Trajectory;

#[derive(Parser, Debug)]
#[command(name = "metriplex", version, about = "Metriplectic particle dynamics: generate, train, simulate, analyze")]
pub struct Cli {
    /// Worker threads; 1 gives bit-reproducible runs.
    #[arg(long, global = true, env = "METRIPLEX_THREADS", default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Source {
    Dpd,
    Model,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Dpd,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a ground-truth trajectory to `paths.data`.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "dpd")]
        source: Source,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a model to the leading `training.n_train` snapshots of `paths.data`.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Calibrate the classical baseline instead.
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
    },
    /// Roll the trained model out from the first data snapshot.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
    },
    /// Write VACF, MSD, RDF and related curves as CSV.
    Analyze {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trajectory to analyze; defaults to `paths.data`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Ground truth to compare against; prints L2 relative errors.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Check the structural properties of a model; prints JSON.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint to verify; a random model when absent.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Particle count at the configured density; the box is at least 2.5 h wide.
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Step wall time against particle count at fixed density.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000,8000,16000,32000,64000")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        steps: usize,
    },
    /// Print the default configuration, or its JSON schema.
    Config {
        #[arg(long)]
        schema: bool,
    },
}

/// Parse `args`, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    // the global pool can only be set once per process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads.max(1)).build_global();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

#[derive(Serialize, Deserialize)]
struct DpdFile {
    format_version: String,
    h: f64,
    params: DpdParams,
}

const DPD_FORMAT: &str = "metriplex-dpd/1";

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate { config, source, out } => {
            let cfg = load_config(&config)?;
            let traj = match source {
                Source::Dpd => gen_dpd_gas(&cfg.gas_spec())?,
                Source::Model => {
                    let p = ModelParams::load(&cfg.paths.model)?;
                    let spec = cfg.gas_spec();
                    let b = spec.sim_box();
                    let init = lattice(spec.n, &b, spec.params.kbt / spec.params.m, spec.seed);
                    gen_from_model(&p, &init, spec.n_snapshots, spec.dt, spec.seed, spec.stride)?
                }
            };
            let path = out.unwrap_or(cfg.paths.data);
            write_dump(&traj, &path)?;
            eprintln!("wrote {} snapshots of {} particles to {}", traj.len(), traj.n_particles(), path.display());
            Ok(())
        }
        Command::Train { config, baseline } => {
            let cfg = load_config(&config)?;
            let mut traj = read_dump(&cfg.paths.data)?;
            let n = cfg.training.n_train.min(traj.len());
            traj = traj.slice(0..n);
            if baseline == Some(Baseline::Dpd) {
                let init = DpdParams {
                    m: cfg.dataset.dpd.m,
                    ..DpdParams::default()
                };
                let calib = DpdCalibConfig {
                    split: cfg.training.split,
                    seed: cfg.training.seed,
                    ..DpdCalibConfig::default()
                };
                let fit = dpd_calibrate(&traj, cfg.dataset.h, &init, &calib)?;
                let doc = DpdFile {
                    format_version: DPD_FORMAT.into(),
                    h: cfg.dataset.h,
                    params: fit.params,
                };
                std::fs::write(&cfg.paths.model, serde_json::to_string_pretty(&doc)?)?;
                eprintln!("calibrated {:?} (validation NLL {:.6})", fit.params, fit.best_val);
                return Ok(());
            }
            if cfg.model.solid {
                traj.r0 = Some(traj.frames[0].r.clone());
            }
            let init = ModelParams::random(&cfg.architecture(), cfg.model.init_seed);
            let tc = cfg.train_config();
            let every = (tc.epochs / 20).max(1);
            let rep = train_with(&traj, &init, &tc, |e| {
                if e.epoch % every == 0 || e.epoch + 1 == tc.epochs {
                    eprintln!("epoch {:>6}  train {:.6}  val {:.6}  {:.1}s", e.epoch, e.train_nll, e.val_nll, e.wall_time);
                }
            })?;
            rep.params.save(&cfg.paths.model)?;
            std::fs::write(&cfg.paths.log, rep.log_csv())?;
            eprintln!("best validation NLL {:.6} at epoch {}", rep.best_val, rep.best_epoch);
            Ok(())
        }
        Command::Simulate { config, baseline } => {
            let cfg = load_config(&config)?;
            let data = read_dump(&cfg.paths.data)?;
            let mut init = data.system(0);
            let traj = if baseline == Some(Baseline::Dpd) {
                let doc: DpdFile = serde_json::from_str(&std::fs::read_to_string(&cfg.paths.model)?)?;
                if doc.format_version != DPD_FORMAT {
                    return Err(Error::InvalidArgument(format!("unsupported baseline file `{}`", doc.format_version)));
                }
                let mut t = Trajectory::new(data.dim, data.dt);
                t.push(&init, 0);
                for k in 0..cfg.training.n_extrap {
                    init = dpd_step(&init, &doc.params, doc.h, data.dt, cfg.training.seed, k as u64)?;
                    t.push(&init, k as u64 + 1);
                }
                t
            } else {
                let p = ModelParams::load(&cfg.paths.model)?;
                if p.arch.solid {
                    init.r0 = Some(init.r.clone());
                }
                gen_from_model(&p, &init, cfg.training.n_extrap + 1, data.dt, cfg.training.seed, 1)?
            };
            write_dump(&traj, &cfg.paths.rollout)?;
            eprintln!("wrote {} snapshots to {}", traj.len(), cfg.paths.rollout.display());
            Ok(())
        }
        Command::Analyze {
            config,
            input,
            reference,
            output_dir,
        } => {
            let cfg = load_config(&config)?;
            let traj = read_dump(input.as_ref().unwrap_or(&cfg.paths.data))?;
            let dir = output_dir.unwrap_or(cfg.paths.output_dir.clone());
            std::fs::create_dir_all(&dir)?;
            let curves = curves(&traj, &cfg)?;
            for c in &curves {
                c.write_csv(&dir.join(format!("{}.csv", c.metric)))?;
            }
            if let Some(rp) = reference {
                let gt = curves_for(&read_dump(&rp)?, &cfg, Some(&traj))?;
                let mut table = String::from("metric,l2_rel_error\n");
                for c in &curves {
                    if let Some(g) = gt.iter().find(|g| g.metric == c.metric) {
                        let e = analysis::l2_rel_error(g, c)?;
                        table.push_str(&format!("{},{}\n", c.metric, e));
                    }
                }
                std::fs::write(dir.join("l2_errors.csv"), &table)?;
                print!("{table}");
            }
            Ok(())
        }
        Command::Verify {
            config,
            model,
            n,
            samples,
            seed,
        } => {
            let cfg = load_config(&config)?;
            let p = match model {
                Some(m) => ModelParams::load(&m)?,
                None => ModelParams::random(&cfg.architecture(), cfg.model.init_seed),
            };
            let dim = p.dim();
            let density = cfg.dataset.n as f64 / cfg.dataset.length.powi(dim as i32);
            let len = (n as f64 / density).powf(1.0 / dim as f64).max(2.5 * p.cutoff());
            let b = SimBox::cube(dim, len, BoundaryMode::Periodic, 0.0);
            let cl = Closures::new(&p);
            let mut sys = lattice(n, &b, 0.01, seed);
            if p.arch.solid {
                sys.r0 = Some(sys.r.clone());
            }
            sys.s = teacher_entropy(&sys, &cl)?;
            let opts = VerifyOptions {
                n_samples: samples,
                dt: cfg.dataset.dt,
                seed,
                ..VerifyOptions::default()
            };
            let rep = verify_structure(&sys, &cl, &opts)?;
            let exact_ok = rep.checks.iter().filter(|c| c.kind == CheckKind::Exact).all(|c| c.passed);
            let doc = serde_json::json!({
                "passed": exact_ok,
                "all_passed": rep.passed,
                "checks": rep.checks,
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
            if exact_ok {
                Ok(())
            } else {
                Err(Error::InvalidArgument("exact structural checks failed".into()))
            }
        }
        Command::Bench { config, sizes, steps } => {
            let cfg = load_config(&config)?;
            let p = ModelParams::random(&cfg.architecture(), cfg.model.init_seed);
            let density = cfg.dataset.n as f64 / cfg.dataset.length.powi(p.dim() as i32);
            let rows = bench_steps(&p, &sizes, density, steps, cfg.dataset.dt, cfg.dataset.seed)?;
            println!("{}", BenchRow::CSV_HEADER);
            for r in &rows {
                println!("{}", r.csv());
            }
            Ok(())
        }
        Command::Config { schema } => {
            if schema {
                print!("{}", crate::io::config::SCHEMA);
            } else {
                println!("{}", RunConfig::default().to_json());
            }
            Ok(())
        }
    }
}

fn curves(traj: &Trajectory, cfg: &RunConfig) -> Result<Vec<CorrelationCurve>> {
    curves_for(traj, cfg, None)
}

/// Curves of `traj`; lags are capped by the length of `other` as well so
/// that two trajectories share a grid.
fn curves_for(traj: &Trajectory, cfg: &RunConfig, other: Option<&Trajectory>) -> Result<Vec<CorrelationCurve>> {
    let a = &cfg.analysis;
    let shortest = other.map_or(traj.len(), |o| o.len().min(traj.len()));
    let lag = a.max_lag.min(shortest.saturating_sub(1));
    let mut out = vec![analysis::vacf_strided(traj, lag, a.origin_stride)?];
    match analysis::msd_strided(traj, lag, a.origin_stride) {
        Ok(c) => out.push(c),
        Err(Error::MissingUnwrapData) => eprintln!("warning: no image flags, MSD skipped"),
        Err(e) => return Err(e),
    }
    let r_max = a.rdf_r_max.unwrap_or(cfg.dataset.h);
    out.push(analysis::rdf(traj, r_max, a.rdf_bins)?);
    if traj.frames[0].sim_box.mode == BoundaryMode::LeesEdwards {
        out.push(analysis::shear_profile(traj, a.profile_bins)?);
    }
    if let Some(l) = a.d2min_lag {
        if l < traj.len() {
            let v = analysis::d2min(&traj.frames[0], &traj.frames[l], cfg.dataset.h)?;
            out.push(CorrelationCurve {
                metric: "d2min".into(),
                abscissa_name: "particle".into(),
                abscissa: (1..=v.len()).map(|k| k as f64).collect(),
                counts: vec![1; v.len()],
                values: v,
                n_origins: 1,
            });
        }
    }
    Ok(out)
}
