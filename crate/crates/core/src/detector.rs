//! Topology-change detection by comparing estimated and model Jacobians.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{self, Method};
use crate::linalg::spd_inverse;
use crate::simulator::AmbientSeries;

/// ‖X − Y‖_F / ‖Y‖_F.
pub fn frobenius_distance(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(Error::Dimension(format!("{:?} vs {:?}", x.shape(), y.shape())));
    }
    let ny = y.norm();
    if ny == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((x - y).norm() / ny)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub window: f64,
    pub stride: f64,
    pub method: Method,
    /// Length of the initial stretch whose distances set the threshold.
    pub calibration: f64,
    pub threshold_factor: f64,
    pub threshold_floor: f64,
    /// Whether the series' events are trusted (simulated data). Without
    /// them an alarm needs the distance to stay high for a full window.
    pub known_events: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            window: 300.0,
            stride: 1.0,
            method: Method::Simplified,
            calibration: 400.0,
            threshold_factor: 3.0,
            threshold_floor: 0.08,
            known_events: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistancePoint {
    /// End of the trailing window.
    pub t: f64,
    pub distance: Option<f64>,
    /// False when the window straddles an event.
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlarmKind {
    /// Distance above threshold in a window free of known events.
    Distance,
    /// Distance above threshold for at least one full window length.
    Sustained,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alarm {
    pub t: f64,
    pub kind: AlarmKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    /// |J_model − J_est| entrywise.
    pub surface: DMatrix<f64>,
    /// (row, column, value) of the entries that drove the ranking.
    pub top_entries: Vec<(usize, usize, f64)>,
    /// Machine positions with their involvement score, highest first.
    pub ranking: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub distance_series: Vec<DistancePoint>,
    pub threshold: f64,
    pub alarms: Vec<Alarm>,
    /// Windows that straddle an operating-point change, as (start, end) of
    /// the affected stride points.
    pub invalid_band: Vec<(f64, f64)>,
    pub localization: Option<Localization>,
}

impl DetectionReport {
    pub fn first_alarm(&self) -> Option<f64> {
        self.alarms.first().map(|a| a.t)
    }

    pub fn distance_csv(&self) -> String {
        let mut s = String::from("t,distance,valid\n");
        for p in &self.distance_series {
            let d = p.distance.map(|d| d.to_string()).unwrap_or_else(|| "nan".into());
            s.push_str(&format!("{},{},{}\n", p.t, d, p.valid));
        }
        s
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[k] } else { 0.5 * (v[k - 1] + v[k]) })
}

/// Estimates the Jacobian over a trailing window at every stride point and
/// compares it with `model_jacobian`.
///
/// `m` and `d` cover the series machines (or just the frame's independent
/// ones); `d` is only needed by the full estimator.
pub fn moving_window_scan(
    series: &AmbientSeries,
    model_jacobian: &DMatrix<f64>,
    m: &[f64],
    d: Option<&[f64]>,
    config: &ScanConfig,
) -> DetectionReport {
    let start = series.t0;
    let end = series.t0 + series.duration();
    let mut ends = Vec::new();
    if config.stride > 0.0 && config.window > 0.0 {
        let mut k = 0usize;
        loop {
            let t = start + config.window + k as f64 * config.stride;
            if t > end + 1e-9 {
                break;
            }
            ends.push(t);
            k += 1;
        }
    }
    if config.stride > series.duration() {
        ends.clear();
    }
    let events = series.event_times();
    let straddles = |t_end: f64| {
        let t_start = t_end - config.window;
        events.iter().any(|&e| e > t_start + 1e-9 && e < t_end - 1e-9)
    };

    let mut last_estimate: Vec<Option<DMatrix<f64>>> = vec![None; ends.len()];
    let points: Vec<(DistancePoint, Option<DMatrix<f64>>)> = ends
        .par_iter()
        .map(|&t| {
            let valid = !straddles(t);
            let result = estimator::sample_covariance(series, t - config.window, t)
                .and_then(|cov| estimator::estimate_jacobian(&cov, m, config.method, d))
                .and_then(|est| frobenius_distance(&est.j_hat, model_jacobian).map(|x| (x, est.j_hat)));
            match result {
                Ok((dist, j)) => (DistancePoint { t, distance: Some(dist), valid, error: None }, Some(j)),
                Err(e) => (
                    DistancePoint { t, distance: None, valid, error: Some(e.to_string()) },
                    None,
                ),
            }
        })
        .collect();
    let mut distance_series = Vec::with_capacity(points.len());
    for (k, (p, j)) in points.into_iter().enumerate() {
        distance_series.push(p);
        last_estimate[k] = j;
    }

    let calib: Vec<f64> = distance_series
        .iter()
        .filter(|p| p.valid && p.t <= start + config.calibration + 1e-9)
        .filter_map(|p| p.distance)
        .collect();
    let threshold = median(calib)
        .map(|m| (config.threshold_factor * m).max(config.threshold_floor))
        .unwrap_or(config.threshold_floor);

    let mut invalid_band: Vec<(f64, f64)> = Vec::new();
    for p in distance_series.iter().filter(|p| !p.valid) {
        match invalid_band.last_mut() {
            Some(band) if p.t - band.1 <= config.stride + 1e-9 => band.1 = p.t,
            _ => invalid_band.push((p.t, p.t)),
        }
    }

    let mut alarms = Vec::new();
    if config.known_events {
        for p in &distance_series {
            if p.valid && p.distance.is_some_and(|d| d > threshold) {
                alarms.push(Alarm { t: p.t, kind: AlarmKind::Distance });
            }
        }
    } else {
        let mut run_start: Option<f64> = None;
        for p in &distance_series {
            match p.distance {
                Some(dist) if dist > threshold => {
                    let s = *run_start.get_or_insert(p.t);
                    if p.t - s >= config.window - 1e-9 {
                        alarms.push(Alarm { t: p.t, kind: AlarmKind::Sustained });
                    }
                }
                _ => run_start = None,
            }
        }
    }

    let localization = if alarms.is_empty() {
        None
    } else {
        distance_series
            .iter()
            .zip(&last_estimate)
            .rev()
            .find(|(p, j)| p.valid && j.is_some())
            .and_then(|(_, j)| j.as_ref())
            .map(|j| localize(model_jacobian, j, DEFAULT_TOP))
    };

    DetectionReport {
        distance_series,
        threshold,
        alarms,
        invalid_band,
        localization,
    }
}

pub const DEFAULT_TOP: usize = 4;

/// Residual surface and the machines implicated by its `q` largest entries.
/// An entry and its transpose count as one pair; each pair credits its
/// summed residual to both machines.
pub fn localize(j_model: &DMatrix<f64>, j_est: &DMatrix<f64>, q: usize) -> Localization {
    let surface = (j_model - j_est).abs();
    let k = surface.nrows();
    let mut entries: Vec<(usize, usize, f64)> = (0..k)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, surface[(i, j)]))
        .filter(|e| e.2 > 0.0)
        .collect();
    entries.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    entries.truncate(q);
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for &(i, j, _) in &entries {
        let p = (i.min(j), i.max(j));
        if !pairs.contains(&p) {
            pairs.push(p);
        }
    }
    let mut score = vec![0.0; k];
    for &(i, j) in &pairs {
        let v = if i == j { surface[(i, i)] } else { surface[(i, j)] + surface[(j, i)] };
        score[i] += v;
        if i != j {
            score[j] += v;
        }
    }
    let mut ranking: Vec<(usize, f64)> = score.into_iter().enumerate().filter(|s| s.1 > 0.0).collect();
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Localization {
        surface,
        top_entries: entries,
        ranking,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discrepancy {
    TopologyChange,
    OperatingPointChange,
    NoChange,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyThresholds {
    /// Mean shift, in pre-window standard deviations, counted as large.
    pub mean_shift: f64,
    /// Relative change of M⁻¹J between windows counted as a mismatch.
    pub distance: f64,
}

impl Default for ClassifyThresholds {
    fn default() -> Self {
        Self { mean_shift: 5.0, distance: 0.15 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Discrepancy,
    /// Largest per-channel mean shift in pre-window standard deviations.
    pub max_mean_shift: f64,
    /// ‖K_post − K_pre‖/‖K_pre‖ with K = Q_ωω Q_δδ⁻¹.
    pub dynamics_change: f64,
}

/// Separates topology changes from operating-point changes by comparing
/// two windows. A change in the inertia-scaled Jacobian Q_ωω Q_δδ⁻¹ marks a
/// topology change; otherwise a large mean shift marks an operating-point
/// change.
pub fn classify_discrepancy(
    series: &AmbientSeries,
    pre: (f64, f64),
    post: (f64, f64),
    thresholds: &ClassifyThresholds,
) -> Result<Classification> {
    let a = estimator::sample_covariance(series, pre.0, pre.1)?;
    let b = estimator::sample_covariance(series, post.0, post.1)?;
    let stiffness = |c: &estimator::CovariancePair| -> Result<DMatrix<f64>> {
        let (inv, _) = spd_inverse(&c.q_dd, estimator::MAX_CONDITION)?;
        Ok(&c.q_ww * inv)
    };
    let ka = stiffness(&a)?;
    let kb = stiffness(&b)?;
    let dynamics_change = if ka == kb { 0.0 } else { frobenius_distance(&kb, &ka)? };

    let mean = |t: (f64, f64), col: usize, omega: bool| {
        let s = series.slice(t.0, t.1);
        let m = if omega { &s.omega } else { &s.delta };
        m.column(col).mean()
    };
    let mut max_mean_shift: f64 = 0.0;
    for (pos, &col) in a.machines.iter().enumerate() {
        for (omega, var) in [(false, a.q_dd[(pos, pos)]), (true, a.q_ww[(pos, pos)])] {
            let shift = (mean(post, col, omega) - mean(pre, col, omega)).abs();
            let z = if var > 0.0 {
                shift / var.sqrt()
            } else if shift > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            max_mean_shift = max_mean_shift.max(z);
        }
    }
    let verdict = if dynamics_change > thresholds.distance {
        Discrepancy::TopologyChange
    } else if max_mean_shift > thresholds.mean_shift {
        Discrepancy::OperatingPointChange
    } else {
        Discrepancy::NoChange
    };
    Ok(Classification {
        verdict,
        max_mean_shift,
        dynamics_change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Linearization, MachineModel};
    use crate::netmodel::cases;
    use crate::simulator::{simulate_ambient, Contingency, ScenarioSchedule};

    fn m2(v: [f64; 4]) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &v)
    }

    #[test]
    fn distance_examples() {
        let y = m2([8.053, 1.240, 2.802, 5.085]);
        assert_eq!(frobenius_distance(&y, &y).unwrap(), 0.0);
        let d = frobenius_distance(&m2([7.960, 1.180, 3.047, 5.280]), &y).unwrap();
        assert!((d - 0.0332).abs() < 5e-5, "{d}");
        let d = frobenius_distance(&m2([7.338, 1.447, 2.831, 4.527]), &m2([5.870, 1.770, 4.001, 4.291])).unwrap();
        assert!((d - 0.2262).abs() < 5e-5, "{d}");
    }

    #[test]
    fn zero_reference_is_an_error() {
        assert!(matches!(
            frobenius_distance(&DMatrix::identity(2, 2), &DMatrix::zeros(2, 2)),
            Err(Error::ZeroReference)
        ));
    }

    #[test]
    fn identical_matrices_localize_nothing() {
        let j = m2([1.0, 2.0, 3.0, 4.0]);
        let loc = localize(&j, &j, 4);
        assert_eq!(loc.surface.amax(), 0.0);
        assert!(loc.ranking.is_empty());
    }

    #[test]
    fn single_perturbed_entry_tops_surface() {
        let j = DMatrix::from_fn(4, 4, |i, k| (i * 4 + k) as f64);
        let mut e = j.clone();
        e[(2, 1)] += 1.0;
        let loc = localize(&j, &e, 4);
        assert_eq!(loc.top_entries[0], (2, 1, 1.0));
        let top: Vec<usize> = loc.ranking.iter().map(|r| r.0).collect();
        assert_eq!(top.len(), 2);
        assert!(top.contains(&1) && top.contains(&2));
    }

    #[test]
    fn symmetric_pair_counts_once() {
        let j = DMatrix::zeros(3, 3);
        let mut e = DMatrix::zeros(3, 3);
        e[(0, 2)] = 2.0;
        e[(2, 0)] = 2.0;
        e[(1, 1)] = 1.0;
        let loc = localize(&j, &e, 4);
        assert_eq!(loc.ranking, vec![(0, 4.0), (2, 4.0), (1, 1.0)]);
    }

    #[test]
    fn stride_longer_than_series_gives_empty_report() {
        let case = cases::wscc9();
        let model = MachineModel::from_case(&case).unwrap();
        let frame = model.coi_for_case(&case);
        let s = simulate_ambient(&case, &model, frame, &ScenarioSchedule::new(20.0, vec![0.01; 3], 1)).unwrap();
        let cfg = ScanConfig { window: 10.0, stride: 50.0, ..ScanConfig::default() };
        let rep = moving_window_scan(&s, &DMatrix::identity(2, 2), &model.m, None, &cfg);
        assert!(rep.distance_series.is_empty());
        assert!(rep.alarms.is_empty());
    }

    #[test]
    fn classify_identical_windows_is_no_change() {
        let case = cases::wscc9();
        let model = MachineModel::from_case(&case).unwrap();
        let frame = model.coi_for_case(&case);
        let s = simulate_ambient(&case, &model, frame, &ScenarioSchedule::new(300.0, vec![0.01; 3], 1)).unwrap();
        let c = classify_discrepancy(&s, (0.0, 300.0), (0.0, 300.0), &ClassifyThresholds::default()).unwrap();
        assert_eq!(c.verdict, Discrepancy::NoChange);
    }

    #[test]
    fn mean_shift_without_dynamics_change_is_operating_point() {
        let case = cases::wscc9();
        let model = MachineModel::from_case(&case).unwrap();
        let frame = model.coi_for_case(&case);
        let mut s = simulate_ambient(&case, &model, frame, &ScenarioSchedule::new(1000.0, vec![0.01; 3], 2)).unwrap();
        let half = s.len() / 2;
        for r in half..s.len() {
            s.delta[(r, 0)] += 0.05;
            s.delta[(r, 1)] -= 0.05;
        }
        let c = classify_discrepancy(&s, (0.0, 500.0), (500.0, 1000.0), &ClassifyThresholds::default()).unwrap();
        assert_eq!(c.verdict, Discrepancy::OperatingPointChange, "{c:?}");
    }

    #[test]
    fn line_trip_is_topology_change() {
        let case = cases::wscc9();
        let model = MachineModel::from_case(&case).unwrap();
        let frame = model.coi_for_case(&case);
        let mut sched = ScenarioSchedule::new(1100.0, vec![0.01; 3], 4);
        sched.contingencies.push(Contingency { time: 500.0, branches: vec![case.resolve_branch("3-9").unwrap()] });
        let s = simulate_ambient(&case, &model, frame, &sched).unwrap();
        let c = classify_discrepancy(&s, (0.0, 500.0), (600.0, 1100.0), &ClassifyThresholds::default()).unwrap();
        assert_eq!(c.verdict, Discrepancy::TopologyChange, "{c:?}");
        assert!(c.max_mean_shift > ClassifyThresholds::default().mean_shift);
    }

    #[test]
    fn quiet_series_does_not_alarm() {
        let case = cases::wscc9();
        let model = MachineModel::from_case(&case).unwrap();
        let frame = model.coi_for_case(&case);
        let j = Linearization::new(&model, frame, &[0.01; 3]).unwrap().jacobian;
        let s = simulate_ambient(&case, &model, frame, &ScenarioSchedule::new(800.0, vec![0.01; 3], 9)).unwrap();
        let cfg = ScanConfig { stride: 5.0, ..ScanConfig::default() };
        let rep = moving_window_scan(&s, &j, &model.m, None, &cfg);
        assert!(rep.alarms.is_empty(), "threshold {} alarms {:?}", rep.threshold, rep.alarms);
        assert!(rep.invalid_band.is_empty());
        assert!(rep.threshold >= 0.08);
    }

    #[test]
    fn tripped_line_alarms_after_window_clears() {
        let case = cases::wscc9();
        let model = MachineModel::from_case(&case).unwrap();
        let frame = model.coi_for_case(&case);
        let j = Linearization::new(&model, frame, &[0.01; 3]).unwrap().jacobian;
        let id = case.resolve_branch("3-9").unwrap();
        let mut sched = ScenarioSchedule::new(1200.0, vec![0.01; 3], 11);
        sched.contingencies.push(Contingency { time: 500.0, branches: vec![id] });
        let s = simulate_ambient(&case, &model, frame, &sched).unwrap();
        let cfg = ScanConfig { stride: 5.0, ..ScanConfig::default() };
        let rep = moving_window_scan(&s, &j, &model.m, None, &cfg);
        let first = rep.first_alarm().expect("alarm");
        assert!(first > 500.0 && first <= 800.0 + 1e-9, "{first}");
        assert_eq!(rep.invalid_band.len(), 1);
        assert!(rep.localization.is_some());
        // Without trusted events the alarm comes once the excess persists a full window.
        let rep = moving_window_scan(&s, &j, &model.m, None, &ScanConfig { known_events: false, ..cfg });
        assert!(rep.alarms.iter().all(|a| a.kind == AlarmKind::Sustained));
        assert!(!rep.alarms.is_empty());
    }
}
