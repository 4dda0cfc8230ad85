//! Stochastic swing-equation integration producing ambient angle/speed
//! series, with scheduled line trips, measurement noise and decimation.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, Frame, MachineModel};
use crate::error::{Error, Result};
use crate::netmodel::{perturb_topology, NetworkCase};

/// RNG stream offsets; stream = purpose + channel.
const STREAM_LOAD: u64 = 0;
const STREAM_MEASUREMENT: u64 = 1 << 32;

pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_WARMUP: f64 = 50.0;

/// Largest step of the form DEFAULT_DT / 2^k with dt · max(D/M) ≤ 0.5.
///
/// The damping itself is integrated exactly, but its coupling with the
/// network drift is first order in dt; heavily damped machines need a finer
/// step to keep the speed variances unbiased.
pub fn auto_dt(model: &MachineModel) -> f64 {
    let rate = model
        .d
        .iter()
        .zip(&model.m)
        .map(|(d, m)| d / m)
        .fold(0.0, f64::max);
    let mut dt = DEFAULT_DT;
    while dt * rate > 0.5 && dt > 1e-5 {
        dt *= 0.5;
    }
    dt
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub description: String,
}

/// Uniformly sampled angles and speeds of every machine in `frame`
/// coordinates. Row = sample, column = machine. The eliminated machine of a
/// reference frame is kept as an all-zero column.
#[derive(Clone, Debug, PartialEq)]
pub struct AmbientSeries {
    pub sample_rate: f64,
    pub t0: f64,
    pub frame: Frame,
    pub delta: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub events: Vec<Event>,
}

impl AmbientSeries {
    pub fn len(&self) -> usize {
        self.delta.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn machines(&self) -> usize {
        self.delta.ncols()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 / self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    /// First sample index at or after `t`.
    pub fn index_at(&self, t: f64) -> usize {
        let k = ((t - self.t0) * self.sample_rate - 1e-9).ceil();
        (k.max(0.0) as usize).min(self.len())
    }

    /// Samples with t_start ≤ t < t_end.
    pub fn slice(&self, t_start: f64, t_end: f64) -> AmbientSeries {
        let a = self.index_at(t_start);
        let b = self.index_at(t_end).max(a);
        let m = self.machines();
        AmbientSeries {
            sample_rate: self.sample_rate,
            t0: self.time(a),
            frame: self.frame,
            delta: self.delta.view((a, 0), (b - a, m)).into_owned(),
            omega: self.omega.view((a, 0), (b - a, m)).into_owned(),
            labels: self.labels.clone(),
            events: self
                .events
                .iter()
                .filter(|e| e.time >= t_start && e.time < t_end)
                .cloned()
                .collect(),
        }
    }

    /// Keeps only the listed machine columns (zero-based).
    pub fn select(&self, machines: &[usize]) -> Result<AmbientSeries> {
        if let Some(&bad) = machines.iter().find(|&&k| k >= self.machines()) {
            return Err(Error::Config(format!(
                "machine {} not in series with {} machines",
                bad + 1,
                self.machines()
            )));
        }
        Ok(AmbientSeries {
            delta: self.delta.select_columns(machines),
            omega: self.omega.select_columns(machines),
            labels: machines.iter().map(|&k| self.labels[k]).collect(),
            ..self.clone()
        })
    }

    pub fn event_times(&self) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| e.description != "warmup_end")
            .map(|e| e.time)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contingency {
    pub time: f64,
    pub branches: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSchedule {
    pub duration: f64,
    pub dt: f64,
    pub sigma_load: Vec<f64>,
    #[serde(default)]
    pub contingencies: Vec<Contingency>,
    /// Measurement noise standard deviation on angles (rad) and speeds (rad/s).
    #[serde(default)]
    pub measurement_noise_std: (f64, f64),
    pub output_rate: f64,
    pub seed: u64,
    #[serde(default = "default_warmup")]
    pub warmup: f64,
}

fn default_warmup() -> f64 {
    DEFAULT_WARMUP
}

impl ScenarioSchedule {
    pub fn new(duration: f64, sigma_load: Vec<f64>, seed: u64) -> Self {
        Self {
            duration,
            dt: DEFAULT_DT,
            sigma_load,
            contingencies: Vec::new(),
            measurement_noise_std: (0.0, 0.0),
            output_rate: 10.0,
            seed,
            warmup: DEFAULT_WARMUP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) {
            return Err(Error::Config("duration must be positive".into()));
        }
        if !(self.dt > 0.0) || !(self.output_rate > 0.0) {
            return Err(Error::Config("step and output rate must be positive".into()));
        }
        if self.dt > 1.0 / self.output_rate + 1e-12 {
            return Err(Error::Rate(format!(
                "integration step {} s is longer than the output period {} s",
                self.dt,
                1.0 / self.output_rate
            )));
        }
        decimation(1.0 / self.dt, self.output_rate)?;
        for c in &self.contingencies {
            if !(c.time >= 0.0 && c.time <= self.duration) {
                return Err(Error::Config(format!(
                    "contingency at {} s lies outside the {} s run",
                    c.time, self.duration
                )));
            }
        }
        let (a, b) = self.measurement_noise_std;
        if !(a >= 0.0 && b >= 0.0) {
            return Err(Error::Config("measurement noise must be nonnegative".into()));
        }
        Ok(())
    }
}

fn decimation(source: f64, target: f64) -> Result<usize> {
    let ratio = source / target;
    let k = ratio.round();
    if k < 1.0 || (ratio - k).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::Rate(format!(
            "{target} Hz does not divide {source} Hz"
        )));
    }
    Ok(k as usize)
}

/// Sin/cos-separable evaluation of Pm − Pe for all machines.
struct PowerEval<'a> {
    model: &'a MachineModel,
    g: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl<'a> PowerEval<'a> {
    fn new(model: &'a MachineModel) -> Self {
        let n = model.n();
        let e = &model.network.e;
        let y = &model.network.y;
        Self {
            model,
            g: DMatrix::from_fn(n, n, |i, j| e[i] * e[j] * y[(i, j)].re),
            b: DMatrix::from_fn(n, n, |i, j| e[i] * e[j] * y[(i, j)].im),
        }
    }

    fn mismatch(&self, delta: &DVector<f64>, out: &mut [f64]) {
        let n = delta.len();
        let (s, c): (Vec<f64>, Vec<f64>) = delta.iter().map(|d| d.sin_cos()).unzip();
        for i in 0..n {
            let mut pe = 0.0;
            for j in 0..n {
                // cos(δi−δj) = ci cj + si sj, sin(δi−δj) = si cj − ci sj
                let cd = c[i] * c[j] + s[i] * s[j];
                let sd = s[i] * c[j] - c[i] * s[j];
                pe += self.g[(i, j)] * cd + self.b[(i, j)] * sd;
            }
            out[i] = self.model.pm[i] - pe;
        }
    }
}

/// One stretch of constant topology.
struct Segment {
    model: MachineModel,
    start: f64,
    /// Equilibrium in integration coordinates.
    eq: DVector<f64>,
}

/// Integration coordinates: the frame itself for Plain and Coi; plain
/// absolute angles for a reference frame.
fn integration_frame(frame: &Frame) -> Frame {
    match frame {
        Frame::MachineRef { .. } => Frame::Plain,
        f => *f,
    }
}

fn segment_equilibrium(model: &MachineModel, frame: &Frame, guess: &DVector<f64>) -> Result<DVector<f64>> {
    match frame {
        Frame::MachineRef { reference } => {
            // Relative equilibrium, placed with the reference at its initial angle.
            let rel = frame.project(&model.m, guess);
            let x = dynamics::solve_equilibrium(model, frame, &rel)?;
            Ok(frame.expand(&model.m, &x).add_scalar(guess[*reference]))
        }
        f => dynamics::solve_equilibrium(model, f, guess),
    }
}

/// Integrates the nonlinear stochastic swing equations.
///
/// The speed update uses the exact exponential of the damping term and the
/// matching Ornstein-Uhlenbeck noise variance; angles then advance with the
/// new speeds (semi-implicit Euler-Maruyama). In the COI frame only the
/// independent machines are integrated and the dependent one is rebuilt from
/// the constraint at every step.
pub fn simulate_ambient(
    case: &NetworkCase,
    model: &MachineModel,
    frame: Frame,
    schedule: &ScenarioSchedule,
) -> Result<AmbientSeries> {
    schedule.validate()?;
    let n = model.n();
    frame.validate(n)?;
    if schedule.sigma_load.len() != n {
        return Err(Error::Dimension(format!(
            "sigma_load has {} entries for {n} machines",
            schedule.sigma_load.len()
        )));
    }
    let iframe = integration_frame(&frame);
    let idx = iframe.independent(n);
    let k = idx.len();

    let mut contingencies = schedule.contingencies.clone();
    contingencies.sort_by(|a, b| a.time.total_cmp(&b.time));

    let mut events = vec![
        Event { time: 0.0, description: "start".into() },
        Event { time: schedule.warmup.min(schedule.duration), description: "warmup_end".into() },
    ];

    // Segments and their equilibria.
    let guess = match iframe {
        Frame::Plain => DVector::from_column_slice(&model.delta0),
        f => f.project(&model.m, &DVector::from_column_slice(&model.delta0)),
    };
    let mut segments = vec![Segment {
        eq: segment_equilibrium(model, &frame, &guess)?,
        model: model.clone(),
        start: 0.0,
    }];
    let mut current_case = case.clone();
    for c in &contingencies {
        current_case = perturb_topology(&current_case, &c.branches)?;
        let prev = segments.last().expect("nonempty");
        let seg_model = prev.model.with_topology(&current_case)?;
        let eq = segment_equilibrium(&seg_model, &frame, &prev.eq)?;
        let ids: Vec<String> = c.branches.iter().map(|b| b.to_string()).collect();
        events.push(Event {
            time: c.time,
            description: format!("contingency:branch {}", ids.join("+")),
        });
        if c.time + schedule.warmup <= schedule.duration {
            events.push(Event {
                time: c.time + schedule.warmup,
                description: "warmup_end".into(),
            });
        }
        segments.push(Segment { model: seg_model, start: c.time, eq });
    }
    events.sort_by(|a, b| a.time.total_cmp(&b.time));

    let dt = schedule.dt;
    let every = decimation(1.0 / dt, schedule.output_rate)?;
    let samples = (schedule.duration * schedule.output_rate + 1e-9).floor() as usize;
    let steps_total = samples.saturating_sub(1) * every;

    let mut rngs: Vec<ChaCha8Rng> = (0..n)
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(schedule.seed);
            r.set_stream(STREAM_LOAD + i as u64);
            r
        })
        .collect();

    let mut delta_out = DMatrix::zeros(samples, n);
    let mut omega_out = DMatrix::zeros(samples, n);

    let mut x = segments[0].eq.clone();
    let mut v = DVector::<f64>::zeros(k);
    let mut seg_index = 0;
    let mut full_p = vec![0.0; n];
    let mut xi = vec![0.0; n];

    let setup = |seg: &Segment| -> Result<(DMatrix<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
        let noise = dynamics::assemble_noise_matrix(&seg.model, &iframe, &schedule.sigma_load)?;
        let lower = noise.lower();
        let mut decay = vec![0.0; k];
        let mut drift = vec![0.0; k];
        let mut spread = vec![0.0; k];
        for (r, &i) in idx.iter().enumerate() {
            let a = seg.model.d[i] / seg.model.m[i];
            let e = (-a * dt).exp();
            decay[r] = e;
            if a * dt > 1e-12 {
                drift[r] = (1.0 - e) / a / seg.model.m[i];
                spread[r] = ((1.0 - e * e) / (2.0 * a)).sqrt();
            } else {
                drift[r] = dt / seg.model.m[i];
                spread[r] = dt.sqrt();
            }
        }
        Ok((lower, decay, drift, spread))
    };
    let mut params = setup(&segments[0])?;
    let mut eval = PowerEval::new(&segments[0].model);
    let mt = model.total_inertia();

    let record = |x: &DVector<f64>, v: &DVector<f64>, row: usize, dout: &mut DMatrix<f64>, wout: &mut DMatrix<f64>| {
        let (d, w) = match frame {
            Frame::MachineRef { .. } => (
                frame.expand(&model.m, &frame.project(&model.m, x)),
                frame.expand(&model.m, &frame.project(&model.m, v)),
            ),
            _ => (iframe.expand(&model.m, x), iframe.expand(&model.m, v)),
        };
        for i in 0..n {
            dout[(row, i)] = d[i];
            wout[(row, i)] = w[i];
        }
    };
    if samples > 0 {
        record(&x, &v, 0, &mut delta_out, &mut omega_out);
    }

    for step in 1..=steps_total {
        let t_prev = (step - 1) as f64 * dt;
        while seg_index + 1 < segments.len() && segments[seg_index + 1].start <= t_prev + 1e-9 {
            seg_index += 1;
            params = setup(&segments[seg_index])?;
            eval = PowerEval::new(&segments[seg_index].model);
        }
        let seg = &segments[seg_index];
        let (lower, decay, drift, spread) = &params;

        let full = iframe.expand(&model.m, &x);
        eval.mismatch(&full, &mut full_p);
        if let Frame::Coi { .. } = iframe {
            let pc: f64 = full_p.iter().sum();
            for i in 0..n {
                full_p[i] -= model.m[i] / mt * pc;
            }
        }
        for (i, rng) in rngs.iter_mut().enumerate() {
            xi[i] = StandardNormal.sample(rng);
        }
        for (r, &i) in idx.iter().enumerate() {
            let mut noise = 0.0;
            for c in 0..n {
                noise += lower[(r, c)] * xi[c];
            }
            v[r] = decay[r] * v[r] + drift[r] * full_p[i] + spread[r] * noise;
            x[r] += dt * v[r];
        }

        let excursion = match iframe {
            Frame::Plain => {
                let dev = &x - &seg.eq;
                let mean = dev.mean();
                dev.iter().map(|d| (d - mean).abs()).fold(0.0, f64::max)
            }
            _ => (&x - &seg.eq).amax(),
        };
        if excursion > std::f64::consts::PI || !excursion.is_finite() {
            return Err(Error::Unstable {
                segment: seg_index,
                time: step as f64 * dt,
                excursion,
            });
        }
        if step % every == 0 {
            record(&x, &v, step / every, &mut delta_out, &mut omega_out);
        }
    }

    let mut series = AmbientSeries {
        sample_rate: schedule.output_rate,
        t0: 0.0,
        frame,
        delta: delta_out,
        omega: omega_out,
        labels: model.labels.clone(),
        events,
    };
    let (sd, sw) = schedule.measurement_noise_std;
    if sd > 0.0 || sw > 0.0 {
        series = add_measurement_noise(&series, sd, sw, schedule.seed);
    }
    Ok(series)
}

/// Adds independent white Gaussian noise to every sample and channel.
pub fn add_measurement_noise(series: &AmbientSeries, std_delta: f64, std_omega: f64, seed: u64) -> AmbientSeries {
    let mut out = series.clone();
    let m = series.machines();
    for (ch, (mat, std)) in [(&mut out.delta, std_delta), (&mut out.omega, std_omega)]
        .into_iter()
        .enumerate()
    {
        if std == 0.0 {
            continue;
        }
        for c in 0..m {
            if series.frame.eliminated() == Some(c) && matches!(series.frame, Frame::MachineRef { .. }) {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(STREAM_MEASUREMENT + (ch * m + c) as u64);
            for r in 0..mat.nrows() {
                let z: f64 = StandardNormal.sample(&mut rng);
                mat[(r, c)] += std * z;
            }
        }
    }
    out
}

/// Keeps every k-th sample, k = source rate / `rate`.
pub fn downsample(series: &AmbientSeries, rate: f64) -> Result<AmbientSeries> {
    let k = decimation(series.sample_rate, rate)?;
    let rows: Vec<usize> = (0..series.len()).step_by(k).collect();
    Ok(AmbientSeries {
        sample_rate: rate,
        delta: series.delta.select_rows(&rows),
        omega: series.omega.select_rows(&rows),
        ..series.clone()
    })
}

/// Series CSV: `t,delta_1..delta_m,omega_1..omega_m`, shortest exact decimals.
pub fn series_to_csv(series: &AmbientSeries) -> String {
    let m = series.machines();
    let mut s = String::from("t");
    for i in 1..=m {
        write!(s, ",delta_{i}").unwrap();
    }
    for i in 1..=m {
        write!(s, ",omega_{i}").unwrap();
    }
    s.push('\n');
    for r in 0..series.len() {
        write!(s, "{}", series.time(r)).unwrap();
        for c in 0..m {
            write!(s, ",{}", series.delta[(r, c)]).unwrap();
        }
        for c in 0..m {
            write!(s, ",{}", series.omega[(r, c)]).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn events_to_csv(events: &[Event]) -> String {
    let mut s = String::from("t,description\n");
    for e in events {
        writeln!(s, "{},{}", e.time, e.description.replace(',', ";")).unwrap();
    }
    s
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `series.csv`-style data to `path` and the events next to it as `events.csv`.
pub fn write_series(series: &AmbientSeries, path: &Path) -> Result<()> {
    std::fs::write(path, series_to_csv(series)).map_err(io_err(path))?;
    let ev = path.with_file_name("events.csv");
    std::fs::write(&ev, events_to_csv(&series.events)).map_err(io_err(&ev))
}

/// Parses a series CSV. Sampling must be uniform; the frame is supplied by
/// the caller because the file does not carry it.
pub fn parse_series_csv(text: &str, path: &Path, frame: Frame) -> Result<AmbientSeries> {
    let perr = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| perr(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"t") || cols.len() < 3 || (cols.len() - 1) % 2 != 0 {
        return Err(perr(1, "header must be t,delta_1..delta_m,omega_1..omega_m".into()));
    }
    let m = (cols.len() - 1) / 2;
    for i in 0..m {
        if cols[1 + i] != format!("delta_{}", i + 1) || cols[1 + m + i] != format!("omega_{}", i + 1) {
            return Err(perr(1, "header must be t,delta_1..delta_m,omega_1..omega_m".into()));
        }
    }
    let mut t = Vec::new();
    let mut d = Vec::new();
    let mut w = Vec::new();
    for (ln, line) in lines {
        let vals: Vec<&str> = line.split(',').collect();
        if vals.len() != cols.len() {
            return Err(perr(ln + 1, format!("expected {} fields, found {}", cols.len(), vals.len())));
        }
        let mut row = Vec::with_capacity(vals.len());
        for v in vals {
            row.push(
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| perr(ln + 1, format!("not a number: '{}'", v.trim())))?,
            );
        }
        t.push(row[0]);
        d.extend_from_slice(&row[1..1 + m]);
        w.extend_from_slice(&row[1 + m..]);
    }
    let rows = t.len();
    if rows < 2 {
        return Err(perr(1, "need at least two samples".into()));
    }
    let period = (t[rows - 1] - t[0]) / (rows - 1) as f64;
    if !(period > 0.0) {
        return Err(perr(2, "time column must increase".into()));
    }
    for (k, tk) in t.iter().enumerate() {
        if (tk - (t[0] + k as f64 * period)).abs() > 1e-6 * period.max(1.0) {
            return Err(perr(k + 2, "sampling is not uniform".into()));
        }
    }
    Ok(AmbientSeries {
        sample_rate: 1.0 / period,
        t0: t[0],
        frame,
        delta: DMatrix::from_row_slice(rows, m, &d),
        omega: DMatrix::from_row_slice(rows, m, &w),
        labels: (1..=m).collect(),
        events: Vec::new(),
    })
}

pub fn parse_events_csv(text: &str, path: &Path) -> Result<Vec<Event>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let (t, desc) = line.split_once(',').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: ln + 1,
            message: "expected t,description".into(),
        })?;
        let time = t.trim().parse::<f64>().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: ln + 1,
            message: format!("not a time: '{}'", t.trim()),
        })?;
        out.push(Event { time, description: desc.trim().to_string() });
    }
    Ok(out)
}

/// Reads a series CSV and, when present, the `events.csv` beside it.
pub fn read_series(path: &Path, frame: Frame) -> Result<AmbientSeries> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut series = parse_series_csv(&text, path, frame)?;
    let ev = path.with_file_name("events.csv");
    if ev.exists() {
        let text = std::fs::read_to_string(&ev).map_err(io_err(&ev))?;
        series.events = parse_events_csv(&text, &ev)?;
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::cases;

    fn wscc9() -> (NetworkCase, MachineModel, Frame) {
        let case = cases::wscc9();
        let model = MachineModel::from_case(&case).unwrap();
        let frame = model.coi_for_case(&case);
        (case, model, frame)
    }

    #[test]
    fn noiseless_run_stays_at_equilibrium() {
        let (case, model, frame) = wscc9();
        let sched = ScenarioSchedule::new(20.0, vec![0.0; 3], 1);
        let s = simulate_ambient(&case, &model, frame, &sched).unwrap();
        let eq = frame.expand(&model.m, &dynamics::equilibrium(&model, &frame).unwrap());
        for r in 0..s.len() {
            for c in 0..3 {
                assert!((s.delta[(r, c)] - eq[c]).abs() < 1e-9);
                assert!(s.omega[(r, c)].abs() < 1e-9);
            }
        }
        assert_eq!(s.len(), 200);
    }

    #[test]
    fn same_seed_same_output() {
        let (case, model, frame) = wscc9();
        let sched = ScenarioSchedule::new(10.0, vec![0.01; 3], 7);
        let a = simulate_ambient(&case, &model, frame, &sched).unwrap();
        let b = simulate_ambient(&case, &model, frame, &sched).unwrap();
        assert_eq!(a, b);
        let mut other = sched.clone();
        other.seed = 8;
        assert_ne!(simulate_ambient(&case, &model, frame, &other).unwrap(), a);
    }

    #[test]
    fn coi_constraint_holds_every_sample() {
        let (case, model, frame) = wscc9();
        let sched = ScenarioSchedule::new(50.0, vec![0.01; 3], 3);
        let s = simulate_ambient(&case, &model, frame, &sched).unwrap();
        for r in 0..s.len() {
            let cd: f64 = (0..3).map(|c| model.m[c] * s.delta[(r, c)]).sum();
            let cw: f64 = (0..3).map(|c| model.m[c] * s.omega[(r, c)]).sum();
            assert!(cd.abs() < 1e-12 && cw.abs() < 1e-12);
        }
    }

    #[test]
    fn reference_column_is_zero() {
        let (case, model, _) = wscc9();
        let frame = Frame::MachineRef { reference: 0 };
        let sched = ScenarioSchedule::new(5.0, vec![0.01; 3], 3);
        let s = simulate_ambient(&case, &model, frame, &sched).unwrap();
        assert_eq!(s.delta.column(0).amax(), 0.0);
        assert!(s.delta.column(1).amax() > 0.0);
    }

    #[test]
    fn contingency_events_are_recorded() {
        let (case, model, frame) = wscc9();
        let mut sched = ScenarioSchedule::new(120.0, vec![0.01; 3], 3);
        sched.contingencies.push(Contingency { time: 60.0, branches: vec![3] });
        let s = simulate_ambient(&case, &model, frame, &sched).unwrap();
        let desc: Vec<&str> = s.events.iter().map(|e| e.description.as_str()).collect();
        assert_eq!(desc, ["start", "warmup_end", "contingency:branch 3", "warmup_end"]);
        assert_eq!(s.event_times(), vec![0.0, 60.0]);
    }

    #[test]
    fn bad_rates_are_rejected() {
        let (case, model, frame) = wscc9();
        let mut sched = ScenarioSchedule::new(10.0, vec![0.01; 3], 3);
        sched.output_rate = 30.0;
        assert!(matches!(simulate_ambient(&case, &model, frame, &sched), Err(Error::Rate(_))));
        sched.output_rate = 200.0;
        assert!(matches!(simulate_ambient(&case, &model, frame, &sched), Err(Error::Rate(_))));
    }

    #[test]
    fn measurement_noise_behaviour() {
        let (case, model, frame) = wscc9();
        let sched = ScenarioSchedule::new(600.0, vec![0.01; 3], 3);
        let clean = simulate_ambient(&case, &model, frame, &sched).unwrap();
        assert_eq!(add_measurement_noise(&clean, 0.0, 0.0, 1), clean);
        let noisy = add_measurement_noise(&clean, 1e-3, 1e-3, 1);
        assert_eq!(noisy.events, clean.events);
        for c in 0..3 {
            let diff = noisy.delta.column(c) - clean.delta.column(c);
            let sd = (diff.norm_squared() / diff.len() as f64).sqrt();
            assert!((sd - 1e-3).abs() < 0.05e-3, "{sd}");
        }
        let again = add_measurement_noise(&clean, 1e-3, 1e-3, 2);
        assert_ne!(again, noisy);
        assert_eq!(again.delta.shape(), noisy.delta.shape());
    }

    #[test]
    fn downsampling() {
        let (case, model, frame) = wscc9();
        let mut sched = ScenarioSchedule::new(10.0, vec![0.01; 3], 3);
        sched.output_rate = 100.0;
        let s = simulate_ambient(&case, &model, frame, &sched).unwrap();
        assert_eq!(downsample(&s, 100.0).unwrap(), s);
        let d = downsample(&s, 10.0).unwrap();
        assert_eq!(d.len(), s.len() / 10);
        assert_eq!(d.delta.row(3), s.delta.row(30));
        assert!(matches!(downsample(&s, 30.0), Err(Error::Rate(_))));
    }

    #[test]
    fn csv_round_trip() {
        let (case, model, frame) = wscc9();
        let sched = ScenarioSchedule::new(5.0, vec![0.01; 3], 3);
        let s = simulate_ambient(&case, &model, frame, &sched).unwrap();
        let text = series_to_csv(&s);
        assert!(text.starts_with("t,delta_1,delta_2,delta_3,omega_1,omega_2,omega_3\n"));
        let back = parse_series_csv(&text, Path::new("s.csv"), frame).unwrap();
        assert_eq!(back.delta, s.delta);
        assert_eq!(back.omega, s.omega);
        assert!((back.sample_rate - 10.0).abs() < 1e-9);
        let ev = parse_events_csv(&events_to_csv(&s.events), Path::new("e.csv")).unwrap();
        assert_eq!(ev, s.events);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let text = "t,delta_1,omega_1\n0,0.1,0.2\n0.1,abc,0.2\n";
        match parse_series_csv(text, Path::new("s.csv"), Frame::Plain) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn slicing_by_time() {
        let (case, model, frame) = wscc9();
        let sched = ScenarioSchedule::new(10.0, vec![0.01; 3], 3);
        let s = simulate_ambient(&case, &model, frame, &sched).unwrap();
        let w = s.slice(2.0, 5.0);
        assert_eq!(w.len(), 30);
        assert_eq!(w.delta.row(0), s.delta.row(20));
        assert!((w.t0 - 2.0).abs() < 1e-12);
    }
}
