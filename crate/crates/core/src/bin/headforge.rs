use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::ToSocketAddrs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use headforge::dataset::{
    self, build_manifest, plan_jobs, read_clips, read_manifest, read_strata, real_records,
    stratified_split, synthetic_records, verify_leakage, write_manifest, AblationPlan, Manifest,
    Regime, Split, SplitOptions,
};
use headforge::farm::server::{serve, Client, ServerConfig};
use headforge::farm::worker::{spawn_worker, JobExecutor, RenderExecutor, SimulatedExecutor, WorkerConfig};
use headforge::farm::{CoordinatorConfig, RenderJob};
use headforge::mesh::load_sequence_with_rate;
use headforge::metrics::{evaluate, read_predictions, DEFAULT_THRESHOLD};
use headforge::render::{default_cameras, load_cameras, render_sequence, RenderSettings};
use headforge::texture::{load_texture, TextureAssignment, TextureAtlas, TexturePool};

#[derive(Parser)]
#[command(name = "headforge", version, about = "Synthetic head-video dataset tooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mesh sequence checks
    Mesh {
        #[command(subcommand)]
        command: MeshCommand,
    },
    /// Texture pool inspection
    Texture {
        #[command(subcommand)]
        command: TextureCommand,
    },
    /// Render a mesh sequence from every camera with each texture
    Render(RenderArgs),
    /// Render farm coordinator and workers
    Farm {
        #[command(subcommand)]
        command: FarmCommand,
    },
    /// Job planning, manifests and splits
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
    /// Score a prediction CSV (clip_id,label,score)
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
}

#[derive(Subcommand)]
enum MeshCommand {
    /// Load every frame of a sequence directory and check shared topology
    Validate {
        dir: PathBuf,
        #[arg(long, default_value_t = headforge::mesh::DEFAULT_FRAME_RATE)]
        fps: f64,
    },
}

#[derive(Subcommand)]
enum TextureCommand {
    /// List a pool manifest; with --check, load and validate every image
    Pool {
        manifest: PathBuf,
        #[arg(long)]
        check: bool,
    },
}

#[derive(Args)]
struct RenderArgs {
    /// Directory of per-frame OBJ files
    #[arg(long)]
    seq: PathBuf,
    /// Texture PNGs (comma separated); the file stem is the texture id.
    /// Omit to render the untextured mesh.
    #[arg(long, value_delimiter = ',')]
    textures: Vec<PathBuf>,
    /// Camera list (JSON); defaults to the framed front and side views
    #[arg(long)]
    cameras: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = headforge::render::DEFAULT_RESOLUTION)]
    resolution: u32,
    #[arg(long, default_value = "patient")]
    patient: String,
    /// Clip id; defaults to the sequence directory name
    #[arg(long)]
    clip: Option<String>,
    #[arg(long, default_value_t = headforge::mesh::DEFAULT_FRAME_RATE)]
    fps: f64,
}

#[derive(Subcommand)]
enum FarmCommand {
    /// Run the coordinator
    Serve {
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long)]
        journal: PathBuf,
        #[arg(long, default_value = "0.0.0.0")]
        bind: String,
        #[arg(long, default_value_t = headforge::farm::DEFAULT_LEASE_TIMEOUT)]
        lease_timeout: f64,
        #[arg(long, default_value_t = headforge::farm::DEFAULT_MAX_RETRIES)]
        max_retries: u32,
    },
    /// Run a worker that pulls jobs from a coordinator
    Work {
        #[arg(long)]
        coordinator: String,
        #[arg(long, default_value_t = 1)]
        capacity: usize,
        #[arg(long)]
        worker_id: Option<String>,
        /// Camera list used for the jobs' view names
        #[arg(long)]
        cameras: Option<PathBuf>,
        #[arg(long, default_value_t = headforge::render::DEFAULT_RESOLUTION)]
        resolution: u32,
        /// Run stand-in jobs of this many seconds instead of rendering
        #[arg(long)]
        simulate: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        failure_rate: f64,
    },
    /// Submit a job file (one JSON job per line) as a new batch
    Submit {
        jobs: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        coordinator: String,
    },
    /// Print a batch report
    Status {
        batch: String,
        #[arg(long, default_value = "127.0.0.1:7878")]
        coordinator: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OriginArg {
    Real,
    Synthetic,
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Expand an ablation condition into render jobs
    Plan {
        /// CSV: patient_id,clip_id,label,sequence_uri[,video_uri][,split]
        #[arg(long)]
        clips: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        /// Textures per patient (0 renders the untextured mesh)
        #[arg(long, default_value_t = 1)]
        textures: usize,
        #[arg(long, value_delimiter = ',', default_value = "front")]
        views: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Render output root written into every job
        #[arg(long)]
        out_root: String,
        /// Job file to write
        #[arg(long)]
        jobs: PathBuf,
    },
    /// Build a source manifest of real clips or rendered jobs
    Records {
        #[arg(long, value_enum)]
        origin: OriginArg,
        #[arg(long)]
        clips: PathBuf,
        /// CSV: patient_id,gender,age,expressiveness
        #[arg(long)]
        strata: PathBuf,
        /// Job file, for synthetic records
        #[arg(long)]
        jobs: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Combine source manifests into a training-regime manifest
    Build {
        #[arg(long)]
        regime: Regime,
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        synth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Patient-level stratified split of a manifest
    Split {
        manifest: PathBuf,
        /// Train,val[,test] shares
        #[arg(long, value_delimiter = ',', default_values_t = [0.8, 0.2])]
        ratios: Vec<f64>,
        #[arg(long, default_value_t = dataset::DEFAULT_TOLERANCE)]
        tolerance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report cross-split leakage; exits nonzero on real-clip or uri leaks
    Verify { manifest: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Mesh {
            command: MeshCommand::Validate { dir, fps },
        } => mesh_validate(&dir, fps),
        Command::Texture {
            command: TextureCommand::Pool { manifest, check },
        } => texture_pool(&manifest, check),
        Command::Render(args) => render(args),
        Command::Farm { command } => farm(command),
        Command::Dataset { command } => dataset_cmd(command),
        Command::Eval { pred, threshold } => {
            let file = File::open(&pred).with_context(|| format!("opening {}", pred.display()))?;
            let records = read_predictions(file)?;
            print_json(&evaluate(&records, threshold)?)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn mesh_validate(dir: &Path, fps: f64) -> Result<ExitCode> {
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let seq = load_sequence_with_rate(dir, "patient", &name, fps)
        .with_context(|| format!("validating {}", dir.display()))?;
    let first = &seq.frames()[0];
    print_json(&serde_json::json!({
        "frames": seq.len(),
        "first_index": seq.frame_indices()[0],
        "last_index": seq.frame_indices()[seq.len() - 1],
        "vertices": first.vertices.len(),
        "uvs": first.uvs.len(),
        "triangles": first.triangles.len(),
        "frame_rate": seq.frame_rate,
        "duration_s": seq.duration(),
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn texture_pool(manifest: &Path, check: bool) -> Result<ExitCode> {
    let pool = TexturePool::open(manifest)?;
    if !check {
        for e in pool.entries() {
            println!("{}\t{}\t{}", e.texture_id, e.path.display(), e.tags.join(","));
        }
        return Ok(ExitCode::SUCCESS);
    }
    let mut failed = 0;
    for (id, res) in pool.check() {
        match res {
            Ok((w, h)) => println!("ok\t{id}\t{w}x{h}"),
            Err(e) => {
                failed += 1;
                println!("FAIL\t{id}\t{e}");
            }
        }
    }
    println!("{} texture(s), {failed} failed", pool.entries().len());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn render(args: RenderArgs) -> Result<ExitCode> {
    let clip = match args.clip {
        Some(c) => c,
        None => args
            .seq
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .context("cannot derive a clip id from --seq; pass --clip")?,
    };
    let seq = load_sequence_with_rate(&args.seq, &args.patient, &clip, args.fps)?;
    let mut atlases: HashMap<String, Arc<TextureAtlas>> = HashMap::new();
    let mut ids = Vec::new();
    for path in &args.textures {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .with_context(|| format!("no file stem in {}", path.display()))?;
        atlases.insert(id.clone(), Arc::new(load_texture(path, &id)?));
        ids.push(id);
    }
    let cameras = match &args.cameras {
        Some(p) => load_cameras(p)?,
        None => {
            let bounds = seq.frames()[0].bounds().context("mesh has no vertices")?;
            default_cameras(bounds, args.resolution)
        }
    };
    let assignment = TextureAssignment {
        patient_id: args.patient.clone(),
        texture_ids: ids,
        seed: 0,
    };
    let metas = render_sequence(&seq, &assignment, &cameras, &RenderSettings::default(), &atlases, &args.out)?;
    print_json(&metas)?;
    Ok(ExitCode::SUCCESS)
}

fn resolve(addr: &str) -> Result<std::net::SocketAddr> {
    addr.to_socket_addrs()?
        .next()
        .with_context(|| format!("cannot resolve {addr}"))
}

fn farm(command: FarmCommand) -> Result<ExitCode> {
    match command {
        FarmCommand::Serve {
            port,
            journal,
            bind,
            lease_timeout,
            max_retries,
        } => {
            let config = ServerConfig {
                coordinator: CoordinatorConfig {
                    lease_timeout,
                    max_retries,
                },
                journal: Some(journal),
                ..ServerConfig::default()
            };
            let handle = serve((bind.as_str(), port), config)?;
            println!("listening on {}", handle.addr());
            handle.wait();
            Ok(ExitCode::SUCCESS)
        }
        FarmCommand::Work {
            coordinator,
            capacity,
            worker_id,
            cameras,
            resolution,
            simulate,
            failure_rate,
        } => {
            let worker_id = worker_id.unwrap_or_else(|| format!("worker-{}", std::process::id()));
            let executor: Arc<dyn JobExecutor> = match simulate {
                Some(secs) => Arc::new(SimulatedExecutor::new(
                    Duration::from_secs_f64(secs),
                    failure_rate,
                    std::process::id().into(),
                )),
                None => Arc::new(RenderExecutor {
                    cameras: match cameras {
                        Some(p) => load_cameras(&p)?,
                        None => Vec::new(),
                    },
                    resolution,
                    settings: RenderSettings::default(),
                }),
            };
            let mut handle = spawn_worker(resolve(&coordinator)?, WorkerConfig::new(worker_id, capacity), executor);
            let stats = handle.join()?;
            println!("{stats:?}");
            Ok(ExitCode::SUCCESS)
        }
        FarmCommand::Submit { jobs, coordinator } => {
            let jobs = read_jobs(&jobs)?;
            let n = jobs.len();
            let batch = Client::connect(resolve(&coordinator)?)?.enqueue(jobs)?;
            println!("{batch}\t{n} jobs");
            Ok(ExitCode::SUCCESS)
        }
        FarmCommand::Status { batch, coordinator } => {
            let (report, counts) = Client::connect(resolve(&coordinator)?)?.report(&batch)?;
            print_json(&serde_json::json!({ "report": report, "counts": counts }))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn read_jobs(path: &Path) -> Result<Vec<RenderJob>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut jobs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        jobs.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(jobs)
}

fn write_jobs(path: &Path, jobs: &[RenderJob]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for j in jobs {
        serde_json::to_writer(&mut out, j)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn dataset_cmd(command: DatasetCommand) -> Result<ExitCode> {
    match command {
        DatasetCommand::Plan {
            clips,
            pool,
            textures,
            views,
            seed,
            out_root,
            jobs,
        } => {
            let clips = read_clips(&clips)?;
            let pool = TexturePool::open(&pool)?;
            let views: Vec<&str> = views.iter().map(String::as_str).collect();
            let plan = AblationPlan::new(textures, &views, seed)?;
            let mut patients: Vec<String> = clips.iter().map(|c| c.patient_id.clone()).collect();
            patients.sort();
            patients.dedup();
            let assignments = plan.assign(&patients, &pool)?;
            let planned = plan_jobs(&clips, &assignments, &plan, &pool, &out_root)?;
            write_jobs(&jobs, &planned)?;
            println!("{} jobs written to {}", planned.len(), jobs.display());
            Ok(ExitCode::SUCCESS)
        }
        DatasetCommand::Records {
            origin,
            clips,
            strata,
            jobs,
            out,
        } => {
            let clips = read_clips(&clips)?;
            let strata = read_strata(&strata)?;
            let manifest = match origin {
                OriginArg::Real => {
                    let records = real_records(&clips, &strata)?;
                    let mut split_of = BTreeMap::new();
                    for c in &clips {
                        let s = c
                            .split
                            .with_context(|| format!("real clip '{}' has no split", c.clip_id))?;
                        split_of.insert(c.clip_id.clone(), s);
                    }
                    Manifest::new(Regime::Real, records, split_of)?
                }
                OriginArg::Synthetic => {
                    let jobs = jobs.context("--jobs is required for synthetic records")?;
                    let records = synthetic_records(&read_jobs(&jobs)?, &clips, &strata)?;
                    Manifest::uniform(Regime::Synth, records, Split::Train)?
                }
            };
            write_manifest(&manifest, &out)?;
            println!("{} records written to {}", manifest.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        DatasetCommand::Build {
            regime,
            real,
            synth,
            out,
        } => {
            let real = read_manifest(&real)?;
            let synth = synth.map(|p| read_manifest(&p)).transpose()?;
            let manifest = build_manifest(regime, Some(&real), synth.as_ref())?;
            write_manifest(&manifest, &out)?;
            println!("{} records written to {}", manifest.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        DatasetCommand::Split {
            manifest,
            ratios,
            tolerance,
            seed,
            out,
        } => {
            if ratios.len() > Split::ALL.len() {
                bail!("at most three ratios (train,val,test)");
            }
            let manifest = read_manifest(&manifest)?;
            let options = SplitOptions {
                ratios: Split::ALL.iter().copied().zip(ratios).collect(),
                tolerance,
                seed,
                ..SplitOptions::default()
            };
            let outcome = stratified_split(manifest.records(), &options)?;
            let manifest = manifest.with_splits(outcome.split_of.clone())?;
            write_manifest(&manifest, &out)?;
            print_json(&serde_json::json!({
                "max_deviation": outcome.max_deviation,
                "best_effort": outcome.best_effort,
                "warnings": outcome.warnings,
            }))?;
            Ok(ExitCode::SUCCESS)
        }
        DatasetCommand::Verify { manifest } => {
            let report = verify_leakage(&read_manifest(&manifest)?);
            print_json(&report)?;
            Ok(if report.is_clean() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}
