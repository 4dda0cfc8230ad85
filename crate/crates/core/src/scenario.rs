//! Reproducible experiment runners: each takes a case, a handful of knobs and
//! a seed, simulates ambient data, and scores the estimates against the
//! model-based truth.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{self, DetectionReport, Localization, ScanConfig};
use crate::dynamics::{self, Frame, Linearization, MachineModel};
use crate::estimator::{self, Method};
use crate::netmodel::{perturb_topology, NetworkCase};
use crate::simulator::{self, AmbientSeries, Contingency, ScenarioSchedule, DEFAULT_WARMUP};
use crate::spectral::{self, Source};
use crate::{Error, Result};

/// Default load-noise level (p.u.).
pub const SIGMA: f64 = 0.01;

/// A case with its machine model and the noise level applied to every load.
#[derive(Clone, Debug)]
pub struct Bench {
    pub case: NetworkCase,
    pub model: MachineModel,
    pub sigma: Vec<f64>,
    pub dt: f64,
    pub output_rate: f64,
    pub warmup: f64,
}

impl Bench {
    /// Bench with the step chosen by `simulator::auto_dt`.
    pub fn new(case: NetworkCase, sigma: f64) -> Result<Self> {
        let model = MachineModel::from_case(&case)?;
        let n = model.n();
        let dt = simulator::auto_dt(&model);
        Ok(Self {
            case,
            model,
            sigma: vec![sigma; n],
            dt,
            output_rate: 10.0,
            warmup: DEFAULT_WARMUP,
        })
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    /// The case's COI frame.
    pub fn coi(&self) -> Frame {
        self.model.coi_for_case(&self.case)
    }

    /// Same bench after tripping `branches`.
    pub fn tripped(&self, branches: &[usize]) -> Result<Self> {
        let case = perturb_topology(&self.case, branches)?;
        let model = self.model.with_topology(&case)?;
        Ok(Self { case, model, ..self.clone() })
    }

    pub fn schedule(&self, duration: f64, seed: u64) -> ScenarioSchedule {
        ScenarioSchedule {
            dt: self.dt,
            output_rate: self.output_rate,
            warmup: self.warmup,
            ..ScenarioSchedule::new(duration, self.sigma.clone(), seed)
        }
    }

    /// Stationary series: warm-up plus `window` seconds of ambient data.
    pub fn stationary(&self, frame: Frame, window: f64, seed: u64) -> Result<AmbientSeries> {
        simulator::simulate_ambient(&self.case, &self.model, frame, &self.schedule(self.warmup + window, seed))
    }

    pub fn linearize(&self, frame: Frame) -> Result<Linearization> {
        Linearization::new(&self.model, frame, &self.sigma)
    }
}

/// ‖x − y‖_F / ‖y‖_F.
pub fn rel(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    detector::frobenius_distance(x, y)
}

/// Runs `f` for every seed on the rayon pool, keeping seed order.
pub fn over_seeds<T, F>(seeds: &[u64], f: F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    seeds.par_iter().map(|&s| f(s)).collect()
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimationOutcome {
    pub seed: u64,
    pub method: Method,
    pub window: f64,
    pub j_true: DMatrix<f64>,
    pub j_est: DMatrix<f64>,
    pub j_error: f64,
    pub a_error: f64,
}

fn score(
    bench: &Bench,
    lin: &Linearization,
    series: &AmbientSeries,
    t: (f64, f64),
    method: Method,
    noise_std: f64,
) -> Result<(DMatrix<f64>, f64, f64)> {
    let frame = lin.frame;
    let m = bench.model.frame_inertia(&frame);
    let d = bench.model.frame_damping(&frame);
    let mut cov = estimator::sample_covariance(series, t.0, t.1)?;
    if noise_std > 0.0 {
        cov.subtract_white_noise(noise_std, noise_std);
    }
    let est = estimator::estimate_jacobian(&cov, &m, method, Some(&d))?;
    let a = estimator::assemble_estimated_state_matrix(&est, &m, &d)?;
    Ok((
        est.j_hat.clone(),
        rel(&est.j_hat, &lin.jacobian)?,
        rel(&a.a, &lin.state.a)?,
    ))
}

/// Jacobian and state-matrix errors on a stationary window.
pub fn estimation(bench: &Bench, frame: Frame, method: Method, window: f64, seed: u64) -> Result<EstimationOutcome> {
    let lin = bench.linearize(frame)?;
    let series = bench.stationary(frame, window, seed)?;
    let t = (bench.warmup, bench.warmup + window);
    let (j_est, j_error, a_error) = score(bench, &lin, &series, t, method, 0.0)?;
    Ok(EstimationOutcome {
        seed,
        method,
        window,
        j_true: lin.jacobian,
        j_est,
        j_error,
        a_error,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct NoiseOutcome {
    pub seed: u64,
    pub noise_std: f64,
    pub clean_error: f64,
    pub noisy_error: f64,
    /// Error when the noise is left in the covariances.
    pub uncompensated_error: f64,
}

/// Same ambient window scored without and with white measurement noise of
/// known standard deviation, removed from the covariance diagonals.
pub fn measurement_noise(
    bench: &Bench,
    frame: Frame,
    method: Method,
    window: f64,
    noise_std: f64,
    seed: u64,
) -> Result<NoiseOutcome> {
    let lin = bench.linearize(frame)?;
    let clean = bench.stationary(frame, window, seed)?;
    let noisy = simulator::add_measurement_noise(&clean, noise_std, noise_std, seed);
    let t = (bench.warmup, bench.warmup + window);
    Ok(NoiseOutcome {
        seed,
        noise_std,
        clean_error: score(bench, &lin, &clean, t, method, 0.0)?.1,
        noisy_error: score(bench, &lin, &noisy, t, method, noise_std)?.1,
        uncompensated_error: score(bench, &lin, &noisy, t, method, 0.0)?.1,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct WindowPoint {
    pub window: f64,
    /// Number of disjoint windows averaged.
    pub count: usize,
    pub j_error: f64,
    /// ‖Ĉ − C‖_F / ‖C‖_F for the full state covariance.
    pub cov_error: f64,
}

/// Mean errors over every disjoint window of each length that fits in one
/// `span`-second run after the warm-up.
pub fn window_study(
    bench: &Bench,
    frame: Frame,
    method: Method,
    windows: &[f64],
    span: f64,
    seed: u64,
) -> Result<Vec<WindowPoint>> {
    let lin = bench.linearize(frame)?;
    let c = lin.covariance()?;
    let series = bench.stationary(frame, span, seed)?;
    windows
        .iter()
        .map(|&w| {
            let count = (span / w + 1e-9).floor() as usize;
            if count == 0 {
                return Err(Error::Config(format!("window {w} s is longer than the {span} s run")));
            }
            let (mut je, mut ce) = (0.0, 0.0);
            for k in 0..count {
                let t = (bench.warmup + k as f64 * w, bench.warmup + (k + 1) as f64 * w);
                je += score(bench, &lin, &series, t, method, 0.0)?.1;
                let cov = estimator::sample_covariance(&series, t.0, t.1)?;
                ce += rel(&cov.state_covariance(), &c)?;
            }
            Ok(WindowPoint {
                window: w,
                count,
                j_error: je / count as f64,
                cov_error: ce / count as f64,
            })
        })
        .collect()
}

/// Model-based Jacobians around a topology change.
#[derive(Clone, Debug, Serialize)]
pub struct TopologyTruth {
    pub pre: DMatrix<f64>,
    pub post: DMatrix<f64>,
    /// Pre-change network evaluated at the post-change operating point.
    pub stale: DMatrix<f64>,
}

pub fn topology_truth(bench: &Bench, post: &Bench, frame: Frame) -> Result<TopologyTruth> {
    let pre_lin = bench.linearize(frame)?;
    let x_post = dynamics::solve_equilibrium(&post.model, &frame, &pre_lin.equilibrium)?;
    Ok(TopologyTruth {
        pre: pre_lin.jacobian,
        post: dynamics::jacobian_analytic(&post.model, &x_post, &frame),
        stale: dynamics::jacobian_analytic(&bench.model, &x_post, &frame),
    })
}

/// Line trip during an otherwise stationary run.
#[derive(Clone, Debug)]
pub struct DetectionSetup {
    pub branches: Vec<usize>,
    pub event: f64,
    /// Length of the post-change estimation window, which starts one warm-up
    /// after the event.
    pub post_window: f64,
    /// Run length after the event.
    pub horizon: f64,
    pub scan: ScanConfig,
}

impl DetectionSetup {
    pub fn new(branches: Vec<usize>, scan: ScanConfig) -> Self {
        Self {
            branches,
            event: 500.0,
            post_window: 500.0,
            horizon: 800.0,
            scan,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DetectionOutcome {
    pub seed: u64,
    pub truth: TopologyTruth,
    pub j_post_est: DMatrix<f64>,
    pub estimated_vs_true: f64,
    pub model_vs_true: f64,
    /// First alarm with the event time known to the detector.
    pub first_alarm: Option<f64>,
    /// First sustained alarm when the event time is not known.
    pub confirmed_at: Option<f64>,
    /// Every valid window ending after the change has cleared is above threshold.
    pub above_after_clear: bool,
    #[serde(skip)]
    pub scan: DetectionReport,
}

pub fn detection(bench: &Bench, frame: Frame, setup: &DetectionSetup, seed: u64) -> Result<DetectionOutcome> {
    let post = bench.tripped(&setup.branches)?;
    let truth = topology_truth(bench, &post, frame)?;
    let t0 = setup.event + bench.warmup;
    let duration = (setup.event + setup.horizon).max(t0 + setup.post_window);
    let mut sched = bench.schedule(duration, seed);
    sched.contingencies.push(Contingency { time: setup.event, branches: setup.branches.clone() });
    let series = simulator::simulate_ambient(&bench.case, &bench.model, frame, &sched)?;

    let m = bench.model.frame_inertia(&frame);
    let d = bench.model.frame_damping(&frame);
    let cov = estimator::sample_covariance(&series, t0, t0 + setup.post_window)?;
    let est = estimator::estimate_jacobian(&cov, &m, setup.scan.method, Some(&d))?;

    let report = detector::moving_window_scan(&series, &truth.pre, &m, Some(&d), &setup.scan);
    let blind = ScanConfig { known_events: false, ..setup.scan.clone() };
    let confirmed_at = detector::moving_window_scan(&series, &truth.pre, &m, Some(&d), &blind).first_alarm();
    let cleared = setup.event + setup.scan.window;
    let after: Vec<_> = report
        .distance_series
        .iter()
        .filter(|p| p.valid && p.t >= cleared - 1e-9)
        .collect();
    let above_after_clear =
        !after.is_empty() && after.iter().all(|p| p.distance.is_some_and(|x| x > report.threshold));
    Ok(DetectionOutcome {
        seed,
        estimated_vs_true: rel(&est.j_hat, &truth.post)?,
        model_vs_true: rel(&truth.stale, &truth.post)?,
        j_post_est: est.j_hat,
        truth,
        first_alarm: report.first_alarm(),
        confirmed_at,
        above_after_clear,
        scan: report,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalizationOutcome {
    pub seed: u64,
    pub frame: Frame,
    /// Series columns that were used.
    pub observed: Vec<usize>,
    pub estimated_vs_true: f64,
    pub model_vs_true: f64,
    pub localization: Localization,
}

/// Compares estimates from one post-change stationary window with the
/// pre-change model, once per observed set. `None` observes every
/// independent machine of the frame.
pub fn localization(
    bench: &Bench,
    frame: Frame,
    branches: &[usize],
    method: Method,
    window: f64,
    observed: &[Option<Vec<usize>>],
    seed: u64,
) -> Result<Vec<LocalizationOutcome>> {
    let post = bench.tripped(branches)?;
    let truth = topology_truth(bench, &post, frame)?;
    let independent = frame.independent(bench.model.n());
    let sets: Vec<(Vec<usize>, Vec<usize>)> = observed
        .iter()
        .map(|o| {
            let obs = o.clone().unwrap_or_else(|| independent.clone());
            let pos = obs
                .iter()
                .map(|c| {
                    independent.iter().position(|i| i == c).ok_or_else(|| {
                        Error::Config(format!("machine {} is not observable in frame {}", c + 1, frame.tag()))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((obs, pos))
        })
        .collect::<Result<_>>()?;
    let series = post.stationary(frame, window, seed)?;
    let t = (bench.warmup, bench.warmup + window);
    sets.into_iter()
        .map(|(obs, pos)| {
            let est = estimator::estimate_submatrix(&series, &obs, &bench.model.m, method, Some(&bench.model.d), t.0, t.1)?;
            let pre = crate::linalg::select_square(&truth.pre, &pos);
            let post_j = crate::linalg::select_square(&truth.post, &pos);
            Ok(LocalizationOutcome {
                seed,
                frame,
                estimated_vs_true: rel(&est.j_hat, &post_j)?,
                model_vs_true: rel(&pre, &post_j)?,
                localization: detector::localize(&pre, &est.j_hat, detector::DEFAULT_TOP),
                observed: obs,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DampingOutcome {
    pub seed: u64,
    pub actual: Vec<f64>,
    pub estimated: Vec<f64>,
    pub relative_error: Vec<f64>,
}

/// Damping of every machine from speed variances and the known load noise.
pub fn damping(bench: &Bench, frame: Frame, method: Method, window: f64, seed: u64) -> Result<DampingOutcome> {
    let series = bench.stationary(frame, window, seed)?;
    let cov = estimator::sample_covariance(&series, bench.warmup, bench.warmup + window)?;
    let idx = frame.independent(bench.model.n());
    let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let e = pick(&bench.model.network.e);
    let g: Vec<f64> = idx.iter().map(|&i| bench.model.network.g(i, i)).collect();
    let est = estimator::estimate_damping(&cov, &pick(&bench.model.m), &e, &g, &pick(&bench.sigma), method)?;
    let actual = pick(&bench.model.d);
    let relative_error = actual.iter().zip(&est.d_hat).map(|(a, b)| (b - a).abs() / a).collect();
    Ok(DampingOutcome {
        seed,
        actual,
        estimated: est.d_hat,
        relative_error,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralOutcome {
    pub seed: u64,
    pub model: Vec<[f64; 2]>,
    pub estimated: Vec<[f64; 2]>,
    pub rightmost_model: [f64; 2],
    pub rightmost_estimated: [f64; 2],
    pub hausdorff: f64,
    /// Both rightmost real parts have the same sign.
    pub verdict_agrees: bool,
}

fn pairs(v: &[crate::linalg::C64]) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

/// Eigenvalues of A against those of A* assembled from the estimated Jacobian.
pub fn spectral_comparison(bench: &Bench, frame: Frame, method: Method, window: f64, seed: u64) -> Result<SpectralOutcome> {
    let lin = bench.linearize(frame)?;
    let series = bench.stationary(frame, window, seed)?;
    let m = bench.model.frame_inertia(&frame);
    let d = bench.model.frame_damping(&frame);
    let cov = estimator::sample_covariance(&series, bench.warmup, bench.warmup + window)?;
    let est = estimator::estimate_jacobian(&cov, &m, method, Some(&d))?;
    let a_star = estimator::assemble_estimated_state_matrix(&est, &m, &d)?;
    let model = spectral::eigen_decompose(&lin.state.a, Source::ModelBased)?;
    let estimated = spectral::eigen_decompose(&a_star.a, Source::Estimated)?;
    let rm = spectral::rightmost_eigenvalue(&model).ok_or(Error::ZeroReference)?.value;
    let re = spectral::rightmost_eigenvalue(&estimated).ok_or(Error::ZeroReference)?.value;
    Ok(SpectralOutcome {
        seed,
        hausdorff: spectral::hausdorff_distance(&model.eigenvalues, &estimated.eigenvalues),
        model: pairs(&model.eigenvalues),
        estimated: pairs(&estimated.eigenvalues),
        rightmost_model: [rm.re, rm.im],
        rightmost_estimated: [re.re, re.im],
        verdict_agrees: (rm.re < 0.0) == (re.re < 0.0),
    })
}
