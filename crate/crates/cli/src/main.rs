//! `gridsense` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gridsense::detector::{self, frobenius_distance};
use gridsense::dynamics::{Frame, Linearization, MachineModel};
use gridsense::estimator::{self, CovariancePair, Method};
use gridsense::io::{write_file, Provenance, Report, ScenarioConfig, TOOL};
use gridsense::netmodel::{perturb_topology, NetworkCase};
use gridsense::simulator::{self, AmbientSeries};
use gridsense::spectral::{self, Source};
use gridsense::{pipeline, Error, Result};

#[derive(Parser)]
#[command(name = "gridsense", version, about = "Dynamic state Jacobian estimation from ambient PMU data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate ambient data and write series.csv and events.csv.
    Simulate(Common),
    /// Estimate the Jacobian (and state matrix) from a series.
    Estimate(Common),
    /// Moving-window topology-change scan against the model Jacobian.
    Detect(Common),
    /// Eigenvalues of the model and estimated state matrices.
    Spectral(Common),
    /// Per-machine damping from speed variances.
    Damping(Common),
    /// Run every experiment over the seed list.
    Pipeline(Common),
}

#[derive(Args, Clone, Debug, Default)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Case file, or `wscc9` / `ieee39`.
    #[arg(long)]
    case: Option<String>,
    /// Series CSV; simulated from the config when absent.
    #[arg(long)]
    series: Option<PathBuf>,
    /// plain, coi, coi:K or ref:K.
    #[arg(long)]
    frame: Option<String>,
    /// Window length in seconds.
    #[arg(long)]
    window: Option<f64>,
    /// Scan stride in seconds.
    #[arg(long)]
    stride: Option<f64>,
    /// simplified or full.
    #[arg(long)]
    method: Option<String>,
    /// One-based machines to estimate from, e.g. 1,2,3.
    #[arg(long)]
    observed: Option<String>,
    /// Measurement noise std (added when simulating, removed when estimating).
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Seed range A..B (inclusive) or list A,B,C.
    #[arg(long)]
    seeds: Option<String>,
    /// Simulated duration in seconds.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("bad seed list '{text}' (expected A..B or A,B,C)"));
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        return Ok((a..=b).collect());
    }
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}

fn parse_observed(text: &str, n: usize) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| match s.trim().parse::<usize>() {
            Ok(k) if (1..=n).contains(&k) => Ok(k - 1),
            _ => Err(Error::Config(format!("observed machine '{}' outside 1..={n}", s.trim()))),
        })
        .collect()
}

fn config(c: &Common) -> Result<ScenarioConfig> {
    let mut cfg = match (&c.config, &c.case) {
        (Some(p), _) => {
            let text = std::fs::read_to_string(p).map_err(|source| Error::Io { path: p.clone(), source })?;
            ScenarioConfig::from_toml_str(&text, p)?
        }
        (None, Some(_)) => {
            let mut cfg = ScenarioConfig::for_case("wscc9");
            cfg.base_dir = PathBuf::new();
            cfg
        }
        (None, None) => return Err(Error::Config("give --config or --case".into())),
    };
    if let Some(case) = &c.case {
        cfg.case = case.clone();
        cfg.base_dir = PathBuf::new();
    }
    if let Some(f) = &c.frame {
        cfg.frame = f.clone();
    }
    if let Some(m) = &c.method {
        cfg.method = m.clone();
    }
    if let Some(w) = c.window {
        cfg.window = Some(w);
    }
    if let Some(s) = c.stride {
        cfg.stride = s;
    }
    if let Some(x) = c.noise_std {
        cfg.measurement_noise = x;
    }
    if let Some(d) = c.duration {
        cfg.duration = d;
    }
    if let Some(s) = &c.seeds {
        cfg.seeds = parse_seeds(s)?;
    } else if let Some(s) = c.seed {
        cfg.seeds = vec![s];
    }
    if let Some(o) = &c.out {
        cfg.out = o.to_string_lossy().into_owned();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Loaded case, model and frame for one command.
struct Setup {
    cfg: ScenarioConfig,
    case: NetworkCase,
    model: MachineModel,
    frame: Frame,
    seed: u64,
}

impl Setup {
    fn new(c: &Common) -> Result<Self> {
        let cfg = config(c)?;
        let case = cfg.load_case()?;
        let model = MachineModel::from_case(&case)?;
        let frame = cfg.frame(&model, &case)?;
        let seed = cfg.seeds[0];
        Ok(Self { cfg, case, model, frame, seed })
    }

    fn out(&self) -> PathBuf {
        PathBuf::from(&self.cfg.out)
    }

    fn series(&self, c: &Common) -> Result<AmbientSeries> {
        match &c.series {
            Some(p) => {
                let s = simulator::read_series(p, self.frame)?;
                if s.machines() != self.model.n() {
                    return Err(Error::Dimension(format!(
                        "{} has {} machines, case has {}",
                        p.display(),
                        s.machines(),
                        self.model.n()
                    )));
                }
                Ok(s)
            }
            None => {
                let sched = self.cfg.schedule(&self.case, &self.model, self.seed)?;
                simulator::simulate_ambient(&self.case, &self.model, self.frame, &sched)
            }
        }
    }

    /// Model after every configured contingency: the one in force at the
    /// end of the series.
    fn final_model(&self) -> Result<(NetworkCase, MachineModel)> {
        let sched = self.cfg.schedule(&self.case, &self.model, self.seed)?;
        let ids: Vec<usize> = sched.contingencies.iter().flat_map(|c| c.branches.clone()).collect();
        if ids.is_empty() {
            return Ok((self.case.clone(), self.model.clone()));
        }
        let case = perturb_topology(&self.case, &ids)?;
        let model = self.model.with_topology(&case)?;
        Ok((case, model))
    }

    fn provenance(&self, window: Option<(f64, f64)>) -> Provenance {
        Provenance {
            tool: TOOL.into(),
            config_hash: self.cfg.hash(),
            seed: Some(self.seed),
            window,
            case: self.cfg.case.clone(),
        }
    }

    fn sigma(&self) -> Vec<f64> {
        vec![self.cfg.sigma; self.model.n()]
    }
}

/// Trailing window of the requested length, starting no earlier than the
/// last settling period.
fn trailing_window(series: &AmbientSeries, length: f64) -> (f64, f64) {
    let end = series.t0 + series.duration();
    let settled = series
        .events
        .iter()
        .filter(|e| e.description == "warmup_end" && e.time <= end)
        .map(|e| e.time)
        .fold(series.t0, f64::max);
    ((end - length).max(settled), end)
}

fn covariance(series: &AmbientSeries, channels: &[usize], t: (f64, f64), noise: f64) -> Result<CovariancePair> {
    let mut cov = estimator::sample_covariance_channels(series, channels, t.0, t.1)?;
    if noise > 0.0 {
        cov.subtract_white_noise(noise, noise);
    }
    Ok(cov)
}

fn emit(report: &Report, out: &Path) -> Result<()> {
    report.write(&out.join("report.json"))?;
    print!("{}", report.to_json());
    Ok(())
}

fn simulate(c: &Common) -> Result<ExitCode> {
    let s = Setup::new(c)?;
    let sched = s.cfg.schedule(&s.case, &s.model, s.seed)?;
    let series = simulator::simulate_ambient(&s.case, &s.model, s.frame, &sched)?;
    let out = s.out();
    std::fs::create_dir_all(&out).map_err(|source| Error::Io { path: out.clone(), source })?;
    let path = out.join("series.csv");
    simulator::write_series(&series, &path)?;
    println!(
        "wrote {} ({} samples at {} Hz, {} machines, frame {})",
        path.display(),
        series.len(),
        series.sample_rate,
        series.machines(),
        s.frame.tag()
    );
    Ok(ExitCode::SUCCESS)
}

fn estimate(c: &Common) -> Result<ExitCode> {
    let s = Setup::new(c)?;
    let series = s.series(c)?;
    let (_, model) = s.final_model()?;
    let n = model.n();
    let independent = s.frame.independent(n);
    let channels = match &c.observed {
        Some(text) => parse_observed(text, n)?,
        None => independent.clone(),
    };
    let pos: Vec<usize> = channels
        .iter()
        .map(|ch| {
            independent.iter().position(|i| i == ch).ok_or_else(|| {
                Error::Config(format!("machine {} is eliminated by frame {}", ch + 1, s.frame.tag()))
            })
        })
        .collect::<Result<_>>()?;
    let submatrix = channels != independent;
    let t = trailing_window(&series, s.cfg.window_for(&s.case));
    let cov = covariance(&series, &channels, t, s.cfg.measurement_noise)?;
    let m = model.frame_inertia(&s.frame);
    let d = model.frame_damping(&s.frame);
    let lin = Linearization::new(&model, s.frame, &s.sigma())?;
    let j_model = gridsense::linalg::select_square(&lin.jacobian, &pos);

    let mut r = Report::new("estimate", s.provenance(Some(t)));
    r.matrix("j_model", &j_model, &s.frame, "model");
    r.scalar("samples", cov.window.samples as f64);
    let primary = s.cfg.method()?;
    let mut js = Vec::new();
    for method in [Method::Simplified, Method::FullAppendix] {
        let est = estimator::estimate_jacobian(&cov, &m, method, Some(&d)).map_err(|e| with_window(e, t))?;
        let tag = method.tag();
        r.matrix(&format!("j_{tag}"), &est.j_hat, &s.frame, tag);
        r.scalar(&format!("condition_{tag}"), est.condition);
        r.scalar(&format!("j_error_{tag}"), frobenius_distance(&est.j_hat, &j_model)?);
        if !submatrix {
            let a = estimator::assemble_estimated_state_matrix(&est, &m, &d)?;
            r.matrix(&format!("a_{tag}"), &a.a, &s.frame, tag);
            r.scalar(&format!("a_error_{tag}"), frobenius_distance(&a.a, &lin.state.a)?);
        }
        js.push(est.j_hat);
    }
    r.scalar("method_delta", frobenius_distance(&js[1], &js[0])?);
    r.scalar("j_error", r.scalars[&format!("j_error_{}", primary.tag())]);
    if !submatrix {
        r.matrix("a_model", &lin.state.a, &s.frame, "model");
    }
    r.verdict("submatrix", submatrix);
    r.table("observed", &channels.iter().map(|k| k + 1).collect::<Vec<_>>());
    emit(&r, &s.out())?;
    Ok(ExitCode::SUCCESS)
}

fn with_window(e: Error, t: (f64, f64)) -> Error {
    match e {
        Error::IllConditioned { .. } | Error::SampleSize { .. } => {
            Error::Config(format!("{e} (window {:.1}..{:.1} s)", t.0, t.1))
        }
        e => e,
    }
}

fn detect(c: &Common) -> Result<ExitCode> {
    let s = Setup::new(c)?;
    let series = s.series(c)?;
    let mut scan = s.cfg.scan_config()?;
    if let Some(w) = c.window {
        scan.window = w;
    }
    let lin = Linearization::new(&s.model, s.frame, &s.sigma())?;
    let m = s.model.frame_inertia(&s.frame);
    let d = s.model.frame_damping(&s.frame);
    let report = detector::moving_window_scan(&series, &lin.jacobian, &m, Some(&d), &scan);

    let mut r = Report::new("detect", s.provenance(None));
    r.matrix("j_model", &lin.jacobian, &s.frame, "model");
    r.scalar("threshold", report.threshold);
    r.scalar("scan_window", scan.window);
    if let Some(t) = report.first_alarm() {
        r.scalar("first_alarm", t);
    }
    r.verdict("alarm", !report.alarms.is_empty());
    r.table("alarms", &report.alarms);
    r.table("invalid_band", &report.invalid_band);
    let out = s.out();
    write_file(&out.join("distance.csv"), &report.distance_csv())?;
    if let Some(l) = &report.localization {
        r.matrix("surface", &l.surface, &s.frame, scan.method.tag());
        let idx = s.frame.independent(s.model.n());
        let ranking: Vec<(usize, f64)> = l.ranking.iter().map(|&(p, v)| (idx[p] + 1, v)).collect();
        r.table("ranking", &ranking);
        write_file(&out.join("surface.csv"), &surface_csv(&l.surface))?;
    }
    emit(&r, &out)?;
    Ok(if report.alarms.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(4) })
}

fn surface_csv(m: &nalgebra::DMatrix<f64>) -> String {
    let mut s = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn spectral_cmd(c: &Common) -> Result<ExitCode> {
    let s = Setup::new(c)?;
    let (_, model) = s.final_model()?;
    let lin = Linearization::new(&model, s.frame, &s.sigma())?;
    let series = s.series(c)?;
    let t = trailing_window(&series, s.cfg.window_for(&s.case));
    let cov = covariance(&series, &s.frame.independent(model.n()), t, s.cfg.measurement_noise)?;
    let m = model.frame_inertia(&s.frame);
    let d = model.frame_damping(&s.frame);
    let method = s.cfg.method()?;
    let est = estimator::estimate_jacobian(&cov, &m, method, Some(&d)).map_err(|e| with_window(e, t))?;
    let a_star = estimator::assemble_estimated_state_matrix(&est, &m, &d)?;
    let model_spec = spectral::eigen_decompose(&lin.state.a, Source::ModelBased)?;
    let est_spec = spectral::eigen_decompose(&a_star.a, Source::Estimated)?;

    let mut r = Report::new("spectral", s.provenance(Some(t)));
    r.matrix("a_model", &lin.state.a, &s.frame, "model");
    r.matrix("a_estimated", &a_star.a, &s.frame, method.tag());
    let mut stable = Vec::new();
    for (name, rep) in [("model", &model_spec), ("estimated", &est_spec)] {
        if let Some(rm) = spectral::rightmost_eigenvalue(rep) {
            r.scalar(&format!("rightmost_{name}_re"), rm.value.re);
            r.scalar(&format!("rightmost_{name}_im"), rm.value.im);
            r.verdict(&format!("stable_{name}"), rm.value.re < 0.0);
            stable.push(rm.value.re < 0.0);
        }
    }
    if stable.len() == 2 {
        r.verdict("verdict_agrees", stable[0] == stable[1]);
    }
    r.scalar(
        "hausdorff",
        spectral::hausdorff_distance(&model_spec.eigenvalues, &est_spec.eigenvalues),
    );
    let out = s.out();
    write_file(&out.join("spectrum.csv"), &spectral::spectrum_csv(&[&model_spec, &est_spec]))?;
    emit(&r, &out)?;
    Ok(ExitCode::SUCCESS)
}

fn damping_cmd(c: &Common) -> Result<ExitCode> {
    let mut c = c.clone();
    c.frame.get_or_insert_with(|| "plain".into());
    let s = Setup::new(&c)?;
    let (_, model) = s.final_model()?;
    let series = s.series(&c)?;
    let t = trailing_window(&series, s.cfg.window_for(&s.case));
    let idx = s.frame.independent(model.n());
    let cov = covariance(&series, &idx, t, s.cfg.measurement_noise)?;
    let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let g: Vec<f64> = idx.iter().map(|&i| model.network.g(i, i)).collect();
    let method = s.cfg.method()?;
    let est = estimator::estimate_damping(&cov, &pick(&model.m), &pick(&model.network.e), &g, &pick(&s.sigma()), method)
        .map_err(|e| with_window(e, t))?;
    let actual = pick(&model.d);

    let mut r = Report::new("damping", s.provenance(Some(t)));
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for (k, &i) in idx.iter().enumerate() {
        let err = (est.d_hat[k] - actual[k]).abs() / actual[k];
        worst = worst.max(err);
        r.scalar(&format!("error_g{}", i + 1), err);
        rows.push(serde_json::json!({
            "generator": i + 1,
            "actual": actual[k],
            "estimated": est.d_hat[k],
            "relative_error": err,
        }));
    }
    r.scalar("max_error", worst);
    r.verdict("negative_estimates", !est.negative.is_empty());
    r.table("damping", &rows);
    emit(&r, &s.out())?;
    Ok(ExitCode::SUCCESS)
}

fn pipeline_cmd(c: &Common) -> Result<ExitCode> {
    let cfg = config(c)?;
    let out = PathBuf::from(&cfg.out);
    let result = pipeline::run(&cfg, &out)?;
    print!("{}", result.summary_csv);
    if let Some(d) = &result.damping_csv {
        print!("\n{d}");
    }
    for e in &result.summary.errors {
        eprintln!("error: {e}");
    }
    Ok(if result.has_errors() { ExitCode::from(3) } else { ExitCode::SUCCESS })
}

fn threads() {
    if let Some(n) = std::env::var("GRIDSENSE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    threads();
    let result = match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::Estimate(c) => estimate(c),
        Command::Detect(c) => detect(c),
        Command::Spectral(c) => spectral_cmd(c),
        Command::Damping(c) => damping_cmd(c),
        Command::Pipeline(c) => pipeline_cmd(c),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seeds("1..4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_seeds("3,5").unwrap(), vec![3, 5]);
        assert!(parse_seeds("x..2").is_err());
        assert!(parse_seeds("").unwrap().is_empty());
    }

    #[test]
    fn observed_is_one_based() {
        assert_eq!(parse_observed("1,3", 3).unwrap(), vec![0, 2]);
        assert!(parse_observed("0", 3).is_err());
        assert!(parse_observed("4", 3).is_err());
    }
}
