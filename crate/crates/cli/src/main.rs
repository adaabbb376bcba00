use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use geoscene::ingest::Ingestor;
use geoscene::pipeline::fixtures::{write_fixtures, FixtureSpec};
use geoscene::pipeline::{dry_run, fetch, generate, GenerationRequest, GeoBBox, PipelineConfig, PipelineError};
use geoscene::transit::{load_network, parse_replay, serve, FeedReplay, ReplayClock, TransitService};

#[derive(Debug, Parser)]
#[command(name = "geoscene", version, about = "Object-based 3D scenes from open geodata")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a scene and write `<out>` plus `<out>.manifest.json`.
    Generate {
        #[command(flatten)]
        req: RequestArgs,
        #[arg(long, default_value = "scene.glb")]
        out: PathBuf,
        /// Check each source on its own and write nothing.
        #[arg(long)]
        dry_run: bool,
    },
    /// Fill the cache for a region.
    Fetch {
        #[command(flatten)]
        req: RequestArgs,
    },
    /// Serve vehicle snapshots over TCP while replaying a recorded feed.
    TransitServe {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        replay: PathBuf,
        #[arg(long, default_value_t = 7070)]
        port: u16,
        /// Replay seconds per wall-clock second.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Stop after this many wall-clock seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Write the synthetic offline fixture region.
    MakeFixtures {
        #[arg(long)]
        out: PathBuf,
        /// Grass and terrain only.
        #[arg(long)]
        empty: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Args)]
struct RequestArgs {
    /// `west,south,east,north` in degrees; falls back to the config's bbox.
    #[arg(long)]
    bbox: Option<GeoBBox>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Read sources from fixtures only.
    #[arg(long)]
    offline: bool,
    /// Fixture root with one directory per source.
    #[arg(long, value_name = "DIR")]
    fixtures: Option<PathBuf>,
    /// Land-cover raster cells per side.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "GEOSCENE_CACHE_DIR")]
    cache_dir: Option<PathBuf>,
}

impl RequestArgs {
    fn resolve(&self) -> Result<(GenerationRequest, Ingestor)> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(dir) = &self.fixtures {
            cfg.sources.fixture_dir = Some(dir.clone());
        }
        if self.offline {
            cfg.sources.offline = true;
        }
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(dir) = &self.cache_dir {
            cfg.sources.cache_dir = Some(dir.clone());
        }
        let bbox = self.bbox.or(cfg.bbox).ok_or_else(|| anyhow!("no --bbox given and the config has none"))?;
        cfg.bbox = Some(bbox);
        let ing = Ingestor::new(cfg.sources.clone()).context("source configuration")?;
        Ok((GenerationRequest::new(bbox, cfg), ing))
    }
}

fn cmd_generate(req: &RequestArgs, out: &Path, check_only: bool) -> Result<()> {
    let (req, ing) = req.resolve()?;
    if check_only {
        let mut failed = Vec::new();
        for c in dry_run(&req, &ing)? {
            match &c.error {
                None => println!("{}: ok", c.stage),
                Some(e) => {
                    println!("{}: {e}", c.stage);
                    failed.push(c.stage.to_string());
                }
            }
        }
        if !failed.is_empty() {
            bail!("dry run failed in {}", failed.join(", "));
        }
        return Ok(());
    }
    let started = Instant::now();
    let output = generate(&req, &ing)?;
    let (glb, manifest) = output.write(out)?;
    println!(
        "wrote {} and {} ({} objects in {:.2} s)",
        glb.display(),
        manifest.display(),
        output.manifest.object_count,
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_fetch(req: &RequestArgs) -> Result<()> {
    let (req, ing) = req.resolve()?;
    let report = fetch(&req, &ing)?;
    println!(
        "cached {} land-cover features, {} elevation cells, {} building contents, {} aerial pixels, {} tree tiles",
        report.landcover_features, report.elevation_cells, report.building_contents, report.aerial_pixels, report.tree_tiles
    );
    Ok(())
}

fn cmd_transit_serve(network: &Path, replay: &Path, port: u16, speed: f64, duration: Option<f64>) -> Result<()> {
    if !(speed.is_finite() && speed > 0.0) {
        bail!("--speed must be positive");
    }
    let text = std::fs::read_to_string(network).with_context(|| network.display().to_string())?;
    let net = Arc::new(load_network(&text, None).with_context(|| network.display().to_string())?);
    let text = std::fs::read_to_string(replay).with_context(|| replay.display().to_string())?;
    let feed = FeedReplay::new(parse_replay(&text).with_context(|| replay.display().to_string())?);
    let start = feed.first_time().unwrap_or(0.0);
    let service = Arc::new(TransitService::new(net, Arc::new(ReplayClock::new(start, speed))));
    let listener = TcpListener::bind(("127.0.0.1", port)).with_context(|| format!("binding port {port}"))?;
    let handle = serve(service, listener, Some(feed))?;
    println!("serving on {}", handle.addr);
    match duration {
        Some(secs) => {
            std::thread::sleep(Duration::from_secs_f64(secs.max(0.0)));
            handle.shutdown();
        }
        None => handle.wait(),
    }
    Ok(())
}

fn cmd_make_fixtures(out: &Path, empty: bool, seed: Option<u64>) -> Result<()> {
    let mut spec = if empty { FixtureSpec::empty() } else { FixtureSpec::default() };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let set = write_fixtures(out, &spec)?;
    println!("wrote fixtures for bbox {} to {}", set.bbox, set.dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { req, out, dry_run } => cmd_generate(&req, &out, dry_run),
        Command::Fetch { req } => cmd_fetch(&req),
        Command::TransitServe { network, replay, port, speed, duration } => cmd_transit_serve(&network, &replay, port, speed, duration),
        Command::MakeFixtures { out, empty, seed } => cmd_make_fixtures(&out, empty, seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match e.downcast_ref::<PipelineError>().and_then(PipelineError::stage) {
                Some(stage) => eprintln!("error in {stage} stage: {e:#}"),
                None => eprintln!("error: {e:#}"),
            }
            ExitCode::FAILURE
        }
    }
}
