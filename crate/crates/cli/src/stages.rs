//! One function per subcommand. Every stage reads its inputs from the run configuration,
//! writes into the output directory, and stamps outputs with the run's provenance.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use tripinfer::calibration::calibrate as run_calibration;
use tripinfer::ingest::synthetic::generate_synthetic;
use tripinfer::ingest::{
    load_pois, load_reference, write_pois, write_reference, AgentPingReader, AgentPings, EnrichmentTable,
    Poi, PingWriter, StaypointReader, StaypointWriter,
};
use tripinfer::metrics::ReportAccumulator;
use tripinfer::model::ReferenceStats;
use tripinfer::pipeline::{label_prepared, theta_exist, try_prepare_all, Engine, PipelineParams, PreparedAgent};
use tripinfer::robustness::run_robustness;
use tripinfer::staypoints::extract_staypoints;
use tripinfer::zones::{build_zones, write_zones, ZoneIndex};

use crate::config::{Provenance, RunConfig};
use crate::error::CliError;

pub const STAYPOINTS: &str = "staypoints.csv";
pub const ZONES: &str = "zones.csv";
pub const LABELED: &str = "labeled_staypoints.csv";
pub const REPORT: &str = "report.json";
pub const TRACE: &str = "calibration_trace.json";
pub const PARAMS_FINAL: &str = "params_final.toml";
pub const TRUTH: &str = "truth.csv";
pub const REFERENCE: &str = "reference.txt";

/// Agents processed per parallel batch in streaming stages.
const BATCH: usize = 512;

pub struct Context {
    pub cfg: RunConfig,
    pub provenance: Provenance,
    pub params: PipelineParams,
}

impl Context {
    pub fn new(cfg: RunConfig) -> Result<Self, CliError> {
        let params = match &cfg.inputs.params {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                let p: PipelineParams =
                    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                p.validate()?;
                p
            }
            None => cfg.pipeline.clone(),
        };
        Ok(Context {
            provenance: Provenance::of(&cfg),
            cfg,
            params,
        })
    }

    pub(crate) fn line(&self) -> String {
        self.provenance.line()
    }

    pub(crate) fn reference(&self) -> Result<ReferenceStats, CliError> {
        match &self.cfg.inputs.reference {
            Some(p) => Ok(load_reference(p)?),
            None => Ok(ReferenceStats::builtin()),
        }
    }

    pub(crate) fn require(&self, stage: &'static str, path: PathBuf, producer: &'static str) -> Result<PathBuf, CliError> {
        if path.is_file() {
            Ok(path)
        } else {
            Err(CliError::StageDependency { stage, path, producer })
        }
    }

    fn pings(&self, stage: &'static str) -> Result<PathBuf, CliError> {
        self.require(stage, self.cfg.pings_path(), "synth")
    }

    fn pois(&self, stage: &'static str) -> Result<Vec<Poi>, CliError> {
        let path = self.require(stage, self.cfg.pois_path(), "synth")?;
        let table = match &self.cfg.inputs.enrichment {
            Some(p) => EnrichmentTable::from_csv(p)?,
            None => EnrichmentTable::builtin(),
        };
        let loaded = load_pois(&path, &table)?;
        log::info!("{} POIs loaded from {}", loaded.pois.len(), path.display());
        Ok(loaded.pois)
    }

    pub(crate) fn output_dir(&self) -> Result<(), CliError> {
        let dir = &self.cfg.output_dir;
        std::fs::create_dir_all(dir).map_err(|source| CliError::Output {
            path: dir.clone(),
            source,
        })
    }

    pub(crate) fn write_json<T: Serialize>(&self, name: &str, body: &T) -> Result<PathBuf, CliError> {
        #[derive(Serialize)]
        struct Stamped<'a, T> {
            provenance: &'a Provenance,
            #[serde(flatten)]
            body: &'a T,
        }
        let path = self.cfg.out(name);
        let text = serde_json::to_string_pretty(&Stamped {
            provenance: &self.provenance,
            body,
        })
        .map_err(tripinfer::Error::from)?;
        write_text(&path, &(text + "\n"))?;
        Ok(path)
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Output {
        path: path.to_path_buf(),
        source,
    })
}

fn rate(count: usize, since: Instant) -> f64 {
    count as f64 / since.elapsed().as_secs_f64().max(1e-9)
}

/// Feed agent batches of a streaming reader to `f` in file order.
fn for_each_batch(
    path: &Path,
    mut f: impl FnMut(Vec<AgentPings>) -> Result<(), CliError>,
) -> Result<usize, CliError> {
    let mut reader = AgentPingReader::open(path)?;
    let mut agents = 0;
    loop {
        let batch: Vec<AgentPings> = reader.by_ref().take(BATCH).collect::<Result<_, _>>()?;
        if batch.is_empty() {
            break;
        }
        agents += batch.len();
        f(batch)?;
    }
    let report = reader.report();
    if report.skipped() > 0 {
        log::warn!(
            "{}: skipped {} malformed and {} duplicate rows of {}",
            path.display(),
            report.malformed,
            report.duplicates,
            report.rows
        );
    }
    Ok(agents)
}

pub fn synth(ctx: &Context) -> Result<(), CliError> {
    ctx.output_dir()?;
    let reference = ctx.reference()?;
    let started = Instant::now();
    let world = generate_synthetic(&ctx.cfg.synth, &reference, ctx.cfg.seed)?;
    let line = ctx.line();

    let pings_path = ctx.cfg.pings_path();
    let mut w = PingWriter::create(&pings_path, Some(&line))?;
    let mut pings = 0;
    for a in world.pings() {
        pings += a.pings.len();
        w.write_agent(&a)?;
    }
    w.finish()?;
    write_pois(ctx.cfg.pois_path(), world.pois(), true, Some(&line))?;
    write_reference(ctx.cfg.out(REFERENCE), &reference)?;

    let mut truth = csv_writer(ctx, TRUTH)?;
    truth.write_record(["agent_id", "home_lat", "home_lon", "anchor_code", "anchor_lat", "anchor_lon"])
        .map_err(tripinfer::Error::from)?;
    for a in &world.truth().agents {
        let (code, lat, lon) = match a.anchor {
            Some((act, l)) => (act.code().to_string(), l.lat.to_string(), l.lon.to_string()),
            None => Default::default(),
        };
        let row = [a.agent.as_str().to_string(), a.home.lat.to_string(), a.home.lon.to_string(), code, lat, lon];
        truth.write_record(&row).map_err(tripinfer::Error::from)?;
    }
    truth.flush().map_err(|source| CliError::Output {
        path: ctx.cfg.out(TRUTH),
        source,
    })?;
    log::info!(
        "synth: {} agents, {} pings, {} POIs in {:.2?} -> {}",
        world.agent_count(),
        pings,
        world.pois().len(),
        started.elapsed(),
        pings_path.display()
    );
    Ok(())
}

pub fn extract(ctx: &Context) -> Result<(), CliError> {
    let pings = ctx.pings("extract")?;
    ctx.output_dir()?;
    let started = Instant::now();
    let out = ctx.cfg.out(STAYPOINTS);
    let mut w = StaypointWriter::create(&out, false, Some(&ctx.line()))?;
    let cfg = ctx.params.extraction;
    let agents = for_each_batch(&pings, |batch| {
        let sps: Vec<_> = batch
            .par_iter()
            .map(|a| extract_staypoints(&a.agent, &a.pings, &cfg))
            .collect();
        for s in sps.iter().flatten() {
            w.write(s)?;
        }
        Ok(())
    })?;
    let rows = w.finish()?;
    log::info!(
        "extract: {agents} agents, {rows} staypoints ({:.0} staypoints/s) -> {}",
        rate(rows, started),
        out.display()
    );
    Ok(())
}

pub fn zones(ctx: &Context) -> Result<(), CliError> {
    let pois = ctx.pois("zones")?;
    ctx.output_dir()?;
    let z = &ctx.params.zones;
    let zones = build_zones(&pois, z.eps_poi_m, z.min_pts);
    let out = ctx.cfg.out(ZONES);
    write_zones(&out, &zones, Some(&ctx.line()))?;
    log::info!("zones: {} POIs -> {} zones -> {}", pois.len(), zones.len(), out.display());
    Ok(())
}

/// Two streaming passes: the first collects every agent's winning Home bid to fix the
/// existence threshold, the second labels and writes.
pub fn infer(ctx: &Context) -> Result<(), CliError> {
    let pings = ctx.pings("infer")?;
    let pois = ctx.pois("infer")?;
    ctx.output_dir()?;
    let reference = ctx.reference()?;
    let engine = Engine::new(&reference, &pois, &ctx.params)?;
    let extraction = ctx.params.extraction;
    let prepare = |a: &AgentPings| PreparedAgent::from_pings(a, &extraction, &reference);

    let started = Instant::now();
    let mut top_bids = Vec::new();
    for_each_batch(&pings, |batch| {
        top_bids.par_extend(batch.par_iter().map(|a| engine.bid(&prepare(a)).table.top_home_bid()));
        Ok(())
    })?;
    let theta = theta_exist(top_bids.iter().flatten().copied(), ctx.params.mandatory.theta_exist_factor);
    log::info!("infer: existence threshold {theta:.6} from {} agents", top_bids.len());

    let out = ctx.cfg.out(LABELED);
    let mut w = StaypointWriter::create(&out, true, Some(&ctx.line()))?;
    let mut without_home = 0;
    let agents = for_each_batch(&pings, |batch| {
        let results: Vec<_> = batch
            .par_iter()
            .map(|a| {
                let p = prepare(a);
                engine.label(&p, &engine.bid(&p), theta)
            })
            .collect();
        for r in &results {
            without_home += r.no_home_evidence as usize;
            for s in &r.staypoints {
                w.write(s)?;
            }
        }
        Ok(())
    })?;
    let rows = w.finish()?;
    if without_home > 0 {
        log::warn!("infer: {without_home} agents had no Home evidence; their staypoints were scored as non-mandatory");
    }
    log::info!(
        "infer: {agents} agents, {rows} labeled staypoints ({:.0} staypoints/s) -> {}",
        rate(rows, started),
        out.display()
    );
    Ok(())
}

/// Histograms of a labeled file; flags are recomputed from the zones when POIs exist.
pub(crate) fn accumulate_labeled(ctx: &Context, stage: &'static str, reference: &ReferenceStats) -> Result<ReportAccumulator, CliError> {
    let path = ctx.require(stage, ctx.cfg.out(LABELED), "infer")?;
    let index = if ctx.cfg.pois_path().is_file() {
        let z = &ctx.params.zones;
        let zones = build_zones(&ctx.pois(stage)?, z.eps_poi_m, z.min_pts);
        Some(ZoneIndex::new(zones, z.sigma_m, z.radius_m)?)
    } else {
        log::warn!("{stage}: no POI file; flagged-query fraction is reported as 0");
        None
    };
    let reader = StaypointReader::open(&path)?;
    if !reader.is_labeled() {
        return Err(tripinfer::Error::Schema(format!("{} has no label columns", path.display())).into());
    }
    let tz = reference.tz_offset_min();
    let mut acc = ReportAccumulator::new();
    for s in reader {
        let s = s?;
        let flagged = index.as_ref().is_some_and(|i| i.spatial_likelihood(&s.location).flagged);
        acc.add_staypoint(&s, tz, flagged)?;
    }
    Ok(acc)
}

pub fn evaluate(ctx: &Context) -> Result<(), CliError> {
    let reference = ctx.reference()?;
    let started = Instant::now();
    let acc = accumulate_labeled(ctx, "evaluate", &reference)?;
    let report = acc.report(&reference);
    #[derive(Serialize)]
    struct Body<'a> {
        report: &'a tripinfer::metrics::EvalReport,
    }
    let out = ctx.write_json(REPORT, &Body { report: &report })?;
    log::info!(
        "evaluate: {} staypoints ({:.0} staypoints/s) -> {}",
        report.staypoint_count,
        rate(report.staypoint_count, started),
        out.display()
    );
    println!(
        "jsd_freq={:.4} jsd_start={:.4} jsd_dur={:.4} hcr_mandatory={:.4} hcr_nonmandatory={:.4} staypoints={}",
        report.jsd_freq,
        report.jsd_start,
        report.jsd_dur,
        report.hcr_mandatory,
        report.hcr_nonmandatory,
        report.staypoint_count
    );
    Ok(())
}

fn prepare_corpus(ctx: &Context, stage: &'static str, reference: &ReferenceStats) -> Result<Vec<PreparedAgent>, CliError> {
    let pings = ctx.pings(stage)?;
    let started = Instant::now();
    let prepared = try_prepare_all(AgentPingReader::open(&pings)?, &ctx.params.extraction, reference)?;
    let n: usize = prepared.iter().map(PreparedAgent::len).sum();
    log::info!(
        "{stage}: {} agents, {n} staypoints extracted ({:.0} staypoints/s)",
        prepared.len(),
        rate(n, started)
    );
    Ok(prepared)
}

pub fn calibrate(ctx: &Context) -> Result<(), CliError> {
    let pois = ctx.pois("calibrate")?;
    let reference = ctx.reference()?;
    let prepared = prepare_corpus(ctx, "calibrate", &reference)?;
    ctx.output_dir()?;
    let started = Instant::now();
    let out = run_calibration(&prepared, &pois, &reference, &ctx.params, &ctx.cfg.calibration, ctx.cfg.seed)?;
    let final_report = label_prepared(&Engine::new(&reference, &pois, &out.params)?, &prepared).report(&reference);
    log::info!("calibrate: finished in {:.2?}; full-corpus report {:?}", started.elapsed(), final_report);

    #[derive(Serialize)]
    struct Body<'a> {
        trace: &'a tripinfer::calibration::CalibrationTrace,
        final_params: &'a PipelineParams,
        final_report: &'a tripinfer::metrics::EvalReport,
    }
    ctx.write_json(
        TRACE,
        &Body {
            trace: &out.trace,
            final_params: &out.params,
            final_report: &final_report,
        },
    )?;
    let toml = toml::to_string(&out.params).map_err(|e| CliError::Config(e.to_string()))?;
    write_text(&ctx.cfg.out(PARAMS_FINAL), &format!("# {}\n{toml}", ctx.line()))?;
    for p in &out.trace.phases {
        for w in &p.warnings {
            log::warn!(
                "phase {:?} regression on {:?}: {:.4} -> {:.4}",
                p.phase,
                w.metric,
                w.before,
                w.after
            );
        }
    }
    Ok(())
}

pub fn robustness(ctx: &Context) -> Result<(), CliError> {
    let pings = ctx.pings("robustness")?;
    let pois = ctx.pois("robustness")?;
    let reference = ctx.reference()?;
    ctx.output_dir()?;
    let started = Instant::now();
    let runs = run_robustness(
        || AgentPingReader::open(&pings),
        &pois,
        &reference,
        &ctx.params,
        &ctx.cfg.robustness,
        ctx.cfg.seed,
    )?;
    for run in &runs {
        let out = ctx.write_json(&format!("stability_{}.json", run.perturbation.label()), run)?;
        log::info!("robustness: {}", out.display());
    }
    log::info!("robustness: {} perturbations in {:.2?}", runs.len(), started.elapsed());
    Ok(())
}

/// CSV writer whose first line is the provenance comment.
pub(crate) fn csv_writer(ctx: &Context, name: &str) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    let path = ctx.cfg.out(name);
    let err = |source| CliError::Output {
        path: path.clone(),
        source,
    };
    let mut out = BufWriter::new(File::create(&path).map_err(err)?);
    writeln!(out, "# {}", ctx.line()).map_err(err)?;
    Ok(csv::Writer::from_writer(out))
}
