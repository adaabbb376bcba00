use std::path::Path;
use std::time::{Duration, Instant};

use geoscene::ingest::Ingestor;
use geoscene::pipeline::fixtures::GroundTruth;
use geoscene::pipeline::{generate, GenerationRequest, PipelineConfig};

use crate::{ensure, Outcome};

const TIME_LIMIT: Duration = Duration::from_secs(60);

pub fn run() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/demo");
    let truth = GroundTruth::load(&dir.join("ground_truth.json")).map_err(|e| e.to_string())?;
    let mut cfg = PipelineConfig::load(&dir.join("geoscene.toml")).map_err(|e| e.to_string())?;
    cfg.sources.offline = true;
    let bbox = cfg.bbox.ok_or("fixture config has no bbox")?;
    let ing = Ingestor::new(cfg.sources.clone()).map_err(|e| e.to_string())?;
    let req = GenerationRequest::new(bbox, cfg);

    let mut runs = Vec::new();
    for attempt in 0..2 {
        let started = Instant::now();
        let out = generate(&req, &ing).map_err(|e| format!("run {attempt}: {e}"))?;
        let took = started.elapsed();
        ensure!(took < TIME_LIMIT, "run {attempt} took {:.1} s", took.as_secs_f64());
        ensure!(out.manifest.counts == truth.counts, "run {attempt}: counts {:?}, ground truth {:?}", out.manifest.counts, truth.counts);
        runs.push((out, took));
    }
    let (a, b) = (&runs[0].0, &runs[1].0);
    ensure!(a.glb == b.glb, "glb differs between runs ({} and {} bytes)", a.glb.len(), b.glb.len());
    let counts: Vec<String> = truth.counts.iter().map(|(k, v)| format!("{k} {v}")).collect();
    Ok(format!(
        "{} counts match ground truth ({}); {} byte glb identical; runs {:.2} s and {:.2} s",
        truth.counts.len(),
        counts.join(", "),
        a.glb.len(),
        runs[0].1.as_secs_f64(),
        runs[1].1.as_secs_f64()
    ))
}
