//! The full experiment suite over a seed list: one report per seed, written
//! to its own directory, plus a summary across seeds.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::detector::Localization;
use crate::dynamics::Frame;
use crate::estimator::Method;
use crate::io::{write_file, PipelinePlan, Provenance, Report, ScenarioConfig, TOOL};
use crate::scenario::{self, Bench, DetectionSetup};
use crate::{Error, Result};

/// Noise level used by the measurement-noise stage when the config has none.
pub const DEFAULT_MEASUREMENT_NOISE: f64 = 1e-3;

/// Everything the pipeline writes, also returned for callers that want it.
#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub seeds: Vec<Report>,
    pub summary: Report,
    pub summary_csv: String,
    pub damping_csv: Option<String>,
}

impl PipelineOutput {
    pub fn has_errors(&self) -> bool {
        self.seeds.iter().any(|r| !r.errors.is_empty())
    }
}

struct Plan {
    frame: Frame,
    method: Method,
    topology: Method,
    window: f64,
    noise: f64,
    detection: Vec<usize>,
    localization: Vec<usize>,
    observed: Vec<Option<Vec<usize>>>,
    stressed: Option<Bench>,
    windows: Vec<f64>,
    damping: bool,
    scan: crate::detector::ScanConfig,
}

fn resolve(bench: &Bench, v: &Option<Vec<String>>) -> Result<Vec<usize>> {
    v.iter().flatten().map(|b| bench.case.resolve_branch(b)).collect()
}

/// Bench configured from the scenario file.
pub fn bench(cfg: &ScenarioConfig) -> Result<Bench> {
    let mut b = Bench::new(cfg.load_case()?, cfg.sigma)?;
    if let Some(dt) = cfg.dt {
        b.dt = dt;
    }
    b.output_rate = cfg.output_rate;
    b.warmup = cfg.warmup;
    Ok(b)
}

fn plan(cfg: &ScenarioConfig, bench: &Bench) -> Result<Plan> {
    let p: PipelinePlan = cfg.plan(&bench.case);
    let method = cfg.method()?;
    let topology = p.topology_method.as_deref().map(Method::parse).transpose()?.unwrap_or(method);
    let frame = cfg.frame(&bench.model, &bench.case)?;
    let n = bench.model.n();
    let mut observed = vec![None];
    for set in p.observed.iter().flatten() {
        let set = set
            .iter()
            .map(|&k| match k {
                1.. if k <= n => Ok(k - 1),
                _ => Err(Error::Config(format!("observed machine {k} outside 1..={n}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        observed.push(Some(set));
    }
    let spectral = resolve(bench, &p.spectral)?;
    let stressed = if spectral.is_empty() { None } else { Some(bench.tripped(&spectral)?) };
    Ok(Plan {
        frame,
        method,
        topology,
        window: cfg.window_for(&bench.case),
        noise: if cfg.measurement_noise > 0.0 { cfg.measurement_noise } else { DEFAULT_MEASUREMENT_NOISE },
        detection: resolve(bench, &p.detection)?,
        localization: resolve(bench, &p.localization)?,
        observed,
        stressed,
        windows: p.windows.unwrap_or_default(),
        damping: p.damping.unwrap_or(false),
        scan: crate::detector::ScanConfig { method: topology, ..cfg.scan_config()? },
    })
}

/// Records a stage result, or its error.
fn stage<T>(report: &mut Report, name: &str, r: Result<T>, f: impl FnOnce(&mut Report, T)) {
    match r {
        Ok(v) => f(report, v),
        Err(e) => report.errors.push(format!("{name}: {e}")),
    }
}

#[derive(Serialize)]
struct Ranked {
    machine: usize,
    score: f64,
}

fn ranking(l: &Localization, observed: &[usize]) -> Vec<Ranked> {
    l.ranking
        .iter()
        .map(|&(pos, score)| Ranked { machine: observed[pos] + 1, score })
        .collect()
}

fn run_seed(cfg: &ScenarioConfig, hash: &str, bench: &Bench, p: &Plan, seed: u64, dir: &Path) -> Report {
    let provenance = Provenance {
        tool: TOOL.into(),
        config_hash: hash.into(),
        seed: Some(seed),
        window: Some((bench.warmup, bench.warmup + p.window)),
        case: cfg.case.clone(),
    };
    let mut r = Report::new("pipeline", provenance);
    let frame = p.frame;

    stage(&mut r, "estimation", scenario::estimation(bench, frame, p.method, p.window, seed), |r, o| {
        r.matrix("estimation.j_model", &o.j_true, &frame, "model");
        r.matrix("estimation.j_estimated", &o.j_est, &frame, p.method.tag());
        r.scalar("estimation.j_error", o.j_error);
        r.scalar("estimation.a_error", o.a_error);
    });

    stage(
        &mut r,
        "measurement_noise",
        scenario::measurement_noise(bench, frame, p.method, p.window, p.noise, seed),
        |r, o| {
            r.scalar("noise.std", o.noise_std);
            r.scalar("noise.clean_error", o.clean_error);
            r.scalar("noise.compensated_error", o.noisy_error);
            r.scalar("noise.uncompensated_error", o.uncompensated_error);
        },
    );

    if !p.windows.is_empty() {
        let span = 2.0 * p.windows.iter().cloned().fold(0.0, f64::max);
        stage(
            &mut r,
            "window_study",
            scenario::window_study(bench, frame, p.method, &p.windows, span, seed),
            |r, pts| {
                for w in &pts {
                    r.scalar(&format!("window.{}.j_error", w.window), w.j_error);
                }
                r.table("window_study", &pts);
            },
        );
    }

    if !p.detection.is_empty() {
        let setup = DetectionSetup::new(p.detection.clone(), p.scan.clone());
        stage(&mut r, "detection", scenario::detection(bench, frame, &setup, seed), |r, o| {
            let tag = p.topology.tag();
            r.matrix("detection.j_pre_model", &o.truth.pre, &frame, "model");
            r.matrix("detection.j_post_model", &o.truth.post, &frame, "model");
            r.matrix("detection.j_post_estimated", &o.j_post_est, &frame, tag);
            r.scalar("detection.estimated_vs_true", o.estimated_vs_true);
            r.scalar("detection.model_vs_true", o.model_vs_true);
            r.scalar("detection.threshold", o.scan.threshold);
            if let Some(t) = o.first_alarm {
                r.scalar("detection.first_alarm", t);
            }
            if let Some(t) = o.confirmed_at {
                r.scalar("detection.confirmed_at", t);
            }
            r.verdict("detection.separated", o.estimated_vs_true < 0.5 * o.model_vs_true);
            r.verdict(
                "detection.alarm_in_time",
                o.first_alarm.is_some_and(|t| t > setup.event && t <= setup.event + setup.scan.window),
            );
            r.verdict("detection.confirmed", o.confirmed_at.is_some_and(|t| t > setup.event));
            let csv = dir.join("distance.csv");
            if let Err(e) = write_file(&csv, &o.scan.distance_csv()) {
                r.errors.push(format!("detection: {e}"));
            }
        });
    }

    if !p.localization.is_empty() {
        stage(
            &mut r,
            "localization",
            scenario::localization(bench, frame, &p.localization, p.topology, p.window, &p.observed, seed),
            |r, outs| {
                for (k, o) in outs.iter().enumerate() {
                    let name = if k == 0 { "localization".to_string() } else { format!("localization.subset{k}") };
                    r.scalar(&format!("{name}.estimated_vs_true"), o.estimated_vs_true);
                    r.scalar(&format!("{name}.model_vs_true"), o.model_vs_true);
                    r.verdict(&format!("{name}.separated"), 2.0 * o.estimated_vs_true <= o.model_vs_true);
                    r.matrix(&format!("{name}.surface"), &o.localization.surface, &frame, p.topology.tag());
                    let top: Vec<[usize; 2]> = o
                        .localization
                        .top_entries
                        .iter()
                        .map(|&(i, j, _)| [o.observed[i] + 1, o.observed[j] + 1])
                        .collect();
                    r.table(&format!("{name}.observed"), &o.observed.iter().map(|i| i + 1).collect::<Vec<_>>());
                    r.table(&format!("{name}.ranking"), &ranking(&o.localization, &o.observed));
                    r.table(&format!("{name}.top_entries"), &top);
                }
            },
        );
    }

    if p.damping {
        stage(
            &mut r,
            "damping",
            scenario::damping(bench, Frame::Plain, Method::Simplified, p.window, seed),
            |r, o| {
                for (k, e) in o.relative_error.iter().enumerate() {
                    r.scalar(&format!("damping.error.g{}", k + 1), *e);
                }
                r.scalar("damping.max_error", o.relative_error.iter().cloned().fold(0.0, f64::max));
                r.table("damping", &o);
            },
        );
    }

    let stressed = p.stressed.as_ref().unwrap_or(bench);
    stage(
        &mut r,
        "spectral",
        scenario::spectral_comparison(stressed, frame, p.topology, p.window, seed),
        |r, o| {
            r.scalar("spectral.rightmost_model_re", o.rightmost_model[0]);
            r.scalar("spectral.rightmost_model_im", o.rightmost_model[1]);
            r.scalar("spectral.rightmost_estimated_re", o.rightmost_estimated[0]);
            r.scalar("spectral.rightmost_estimated_im", o.rightmost_estimated[1]);
            r.scalar(
                "spectral.rightmost_error",
                ((o.rightmost_estimated[0] - o.rightmost_model[0]) / o.rightmost_model[0]).abs(),
            );
            r.scalar("spectral.hausdorff", o.hausdorff);
            r.verdict("spectral.verdict_agrees", o.verdict_agrees);
            r.table("spectral.model", &o.model);
            r.table("spectral.estimated", &o.estimated);
        },
    );

    r.scalars.retain(|_, v| v.is_finite());
    r
}

fn summary_csv(reports: &[Report]) -> (Vec<String>, String) {
    let mut names: Vec<String> = reports.iter().flat_map(|r| r.scalars.keys().cloned()).collect();
    names.sort();
    names.dedup();
    let mut s = format!("seed,{}\n", names.join(","));
    for r in reports {
        let seed = r.provenance.seed.map(|x| x.to_string()).unwrap_or_default();
        let cells: Vec<String> = names
            .iter()
            .map(|n| r.scalars.get(n).map(|v| v.to_string()).unwrap_or_default())
            .collect();
        s.push_str(&format!("{seed},{}\n", cells.join(",")));
    }
    (names, s)
}

fn damping_csv(reports: &[Report], labels: usize) -> Option<String> {
    let rows: Vec<scenario::DampingOutcome> = reports
        .iter()
        .filter_map(|r| r.tables.get("damping"))
        .filter_map(|v| serde_json::from_value(v.clone()).ok())
        .collect();
    if rows.is_empty() {
        return None;
    }
    let mut s = String::from("generator,actual,estimated_mean,error_mean,error_max\n");
    for g in 0..labels.min(rows[0].actual.len()) {
        let est: Vec<f64> = rows.iter().map(|o| o.estimated[g]).collect();
        let err: Vec<f64> = rows.iter().map(|o| o.relative_error[g]).collect();
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            g + 1,
            rows[0].actual[g],
            scenario::mean(&est),
            scenario::mean(&err),
            err.iter().cloned().fold(0.0, f64::max)
        ));
    }
    Some(s)
}

/// Runs every stage for every seed and writes `seed-N/report.json`,
/// `summary.json`, `summary.csv` and (when damping ran) `damping.csv`
/// under `out`. Stage failures are recorded in the reports, not returned.
pub fn run(cfg: &ScenarioConfig, out: &Path) -> Result<PipelineOutput> {
    cfg.validate()?;
    let bench = bench(cfg)?;
    let p = plan(cfg, &bench)?;
    let hash = cfg.hash();
    let seeds: Vec<Report> = scenario::over_seeds(&cfg.seeds, |seed| {
        let dir = out.join(format!("seed-{seed}"));
        let report = run_seed(cfg, &hash, &bench, &p, seed, &dir);
        report.write(&dir.join("report.json"))?;
        Ok(report)
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let (names, csv) = summary_csv(&seeds);
    let mut summary = Report::new(
        "pipeline_summary",
        Provenance {
            tool: TOOL.into(),
            config_hash: hash,
            seed: None,
            window: Some((bench.warmup, bench.warmup + p.window)),
            case: cfg.case.clone(),
        },
    );
    for n in &names {
        let v: Vec<f64> = seeds.iter().filter_map(|r| r.scalars.get(n).copied()).collect();
        summary.scalar(&format!("{n}.mean"), scenario::mean(&v));
    }
    let mut passes: BTreeMap<String, [usize; 2]> = BTreeMap::new();
    for r in &seeds {
        for (k, &v) in &r.verdicts {
            let e = passes.entry(k.clone()).or_default();
            e[0] += v as usize;
            e[1] += 1;
        }
        summary.errors.extend(r.errors.iter().map(|e| format!("seed {}: {e}", r.provenance.seed.unwrap_or(0))));
    }
    for (k, [pass, total]) in &passes {
        summary.verdict(k, pass == total);
    }
    summary.table("verdict_counts", &passes);
    summary.table("seeds", &cfg.seeds);

    let damping = damping_csv(&seeds, bench.model.n());
    summary.write(&out.join("summary.json"))?;
    write_file(&out.join("summary.csv"), &csv)?;
    if let Some(d) = &damping {
        write_file(&out.join("damping.csv"), d)?;
    }
    Ok(PipelineOutput {
        seeds,
        summary,
        summary_csv: csv,
        damping_csv: damping,
    })
}
