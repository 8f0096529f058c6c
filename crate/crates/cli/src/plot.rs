//! Plot-ready CSV series: inferred vs reference distributions, stability bars, and
//! calibration summaries when those artifacts exist.

use std::fs::File;
use std::io::BufWriter;

use serde::Deserialize;
use tripinfer::calibration::CalibrationTrace;
use tripinfer::model::ActivityType;
use tripinfer::robustness::{Perturbation, StabilityReport};

use crate::error::CliError;
use crate::stages::{accumulate_labeled, csv_writer, Context, TRACE};

type Out = csv::Writer<BufWriter<File>>;

fn row<I, S>(w: &mut Out, fields: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(fields).map_err(|e| tripinfer::Error::from(e).into())
}

fn done(ctx: &Context, name: &str, mut w: Out) -> Result<(), CliError> {
    w.flush().map_err(|source| CliError::Output {
        path: ctx.cfg.out(name),
        source,
    })?;
    log::info!("plot-data: {}", ctx.cfg.out(name).display());
    Ok(())
}

fn normalized(counts: &[f64]) -> Vec<f64> {
    let total: f64 = counts.iter().sum();
    if total > 0.0 {
        counts.iter().map(|c| c / total).collect()
    } else {
        vec![0.0; counts.len()]
    }
}

#[derive(Deserialize)]
struct StabilityFile {
    perturbation: Perturbation,
    report: StabilityReport,
}

#[derive(Deserialize)]
struct TraceFile {
    trace: CalibrationTrace,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn plot_data(ctx: &Context) -> Result<(), CliError> {
    let reference = ctx.reference()?;
    let acc = accumulate_labeled(ctx, "plot-data", &reference)?;
    let h = &acc.histograms;

    let mut w = csv_writer(ctx, "plot_frequency.csv")?;
    row(&mut w, ["activity_code", "activity", "inferred", "reference"])?;
    let freq = normalized(&h.frequency);
    for a in ActivityType::ALL {
        let i = a.index();
        row(
            &mut w,
            [a.code().to_string(), a.name().to_string(), freq[i].to_string(), reference.share(a).to_string()],
        )?;
    }
    done(ctx, "plot_frequency.csv", w)?;

    for (name, column, inferred, prior) in [
        ("plot_start_time.csv", "slot", &h.start, 0),
        ("plot_duration.csv", "bin", &h.duration, 1),
    ] {
        let mut w = csv_writer(ctx, name)?;
        row(&mut w, ["activity_code", column, "inferred", "reference"])?;
        for a in ActivityType::ALL {
            let inf = normalized(&inferred[a.index()]);
            let r = if prior == 0 {
                reference.start_prior(a)
            } else {
                reference.duration_prior(a)
            };
            for (k, (x, y)) in inf.iter().zip(r.iter()).enumerate() {
                row(&mut w, [a.code().to_string(), k.to_string(), x.to_string(), y.to_string()])?;
            }
        }
        done(ctx, name, w)?;
    }

    stability_series(ctx)?;
    calibration_series(ctx)?;
    Ok(())
}

fn stability_series(ctx: &Context) -> Result<(), CliError> {
    let mut files: Vec<_> = std::fs::read_dir(&ctx.cfg.output_dir)
        .map_err(|source| CliError::Output {
            path: ctx.cfg.output_dir.clone(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("stability_") && n.ends_with(".json"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        log::info!("plot-data: no stability reports; skipping stability series");
        return Ok(());
    }
    let mut bars = csv_writer(ctx, "plot_stability.csv")?;
    row(&mut bars, ["perturbation", "level", "stratum", "stability", "count"])?;
    let mut per = csv_writer(ctx, "plot_stability_activity.csv")?;
    row(&mut per, ["perturbation", "level", "activity_code", "matched", "stability"])?;
    for path in files {
        let text = std::fs::read_to_string(&path).map_err(|e| tripinfer::Error::Io {
            path: path.clone(),
            source: e,
        })?;
        let f: StabilityFile = serde_json::from_str(&text).map_err(tripinfer::Error::from)?;
        let (kind, level) = match f.perturbation {
            Perturbation::Noise { sigma_m } => ("noise", sigma_m),
            Perturbation::PoiDeletion { rate } => ("poi", rate),
        };
        let r = &f.report;
        for (stratum, v, n) in [
            ("all", r.stability_all, r.matched),
            ("high", r.stability_high, r.high_count),
            ("low", r.stability_low, r.low_count),
            ("weighted_avg", r.weighted_avg, r.matched),
        ] {
            row(&mut bars, [kind.to_string(), level.to_string(), stratum.to_string(), opt(v), n.to_string()])?;
        }
        for a in &r.per_activity {
            row(
                &mut per,
                [
                    kind.to_string(),
                    level.to_string(),
                    a.activity.code().to_string(),
                    a.matched.to_string(),
                    opt(a.stability),
                ],
            )?;
        }
    }
    done(ctx, "plot_stability.csv", bars)?;
    done(ctx, "plot_stability_activity.csv", per)
}

fn calibration_series(ctx: &Context) -> Result<(), CliError> {
    let path = ctx.cfg.out(TRACE);
    if !path.is_file() {
        return Ok(());
    }
    let text = std::fs::read_to_string(&path).map_err(|e| tripinfer::Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let f: TraceFile = serde_json::from_str(&text).map_err(tripinfer::Error::from)?;

    let mut w = csv_writer(ctx, "plot_calibration.csv")?;
    row(&mut w, ["phase", "metric", "before", "after"])?;
    for p in &f.trace.phases {
        for (metric, before, after) in [
            ("jsd_freq", p.before.jsd_freq, p.report.jsd_freq),
            ("jsd_start", p.before.jsd_start, p.report.jsd_start),
            ("jsd_dur", p.before.jsd_dur, p.report.jsd_dur),
            ("hcr_mandatory", p.before.hcr_mandatory, p.report.hcr_mandatory),
            ("hcr_nonmandatory", p.before.hcr_nonmandatory, p.report.hcr_nonmandatory),
        ] {
            row(&mut w, [(p.phase as u8).to_string(), metric.to_string(), before.to_string(), after.to_string()])?;
        }
    }
    done(ctx, "plot_calibration.csv", w)?;

    let mut w = csv_writer(ctx, "plot_calibration_front.csv")?;
    row(&mut w, ["phase", "point", "objective_1", "objective_2", "knee"])?;
    for p in &f.trace.phases {
        for (i, pt) in p.front.iter().enumerate() {
            let o = |k: usize| pt.objectives.get(k).map(|v| v.to_string()).unwrap_or_default();
            row(
                &mut w,
                [(p.phase as u8).to_string(), i.to_string(), o(0), o(1), ((i == p.knee) as u8).to_string()],
            )?;
        }
    }
    done(ctx, "plot_calibration_front.csv", w)
}
