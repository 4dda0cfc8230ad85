//! Jacobian, damping and state-matrix estimation from sample covariances of
//! ambient angle and speed measurements.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, Frame, StateMatrix};
use crate::error::{Error, Result};
use crate::linalg::{select_square, spd_inverse};
use crate::simulator::AmbientSeries;

/// Largest accepted condition number of the angle covariance.
pub const MAX_CONDITION: f64 = 1e10;

/// Default window for standalone estimation, seconds.
pub const DEFAULT_WINDOW: f64 = 500.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Drops the angle-speed cross covariance: J = M Q_ωω Q_δδ⁻¹.
    Simplified,
    /// Keeps it: J = M Q_ωω Q_δδ⁻¹ + D Q_δω Q_δδ⁻¹.
    FullAppendix,
}

impl Method {
    pub fn parse(text: &str) -> Result<Method> {
        match text.trim().to_ascii_lowercase().as_str() {
            "simplified" | "simple" => Ok(Method::Simplified),
            "full" | "full_appendix" | "fullappendix" => Ok(Method::FullAppendix),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected simplified or full)"
            ))),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Method::Simplified => "simplified",
            Method::FullAppendix => "full",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub t_start: f64,
    pub t_end: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariancePair {
    pub q_dd: DMatrix<f64>,
    pub q_ww: DMatrix<f64>,
    /// E[(δ − δ̄)(ω − ω̄)ᵀ].
    pub q_dw: DMatrix<f64>,
    pub window: Window,
    pub frame: Frame,
    /// Series columns the rows refer to.
    pub machines: Vec<usize>,
    /// Channels (as `machines` positions) whose linear trend exceeds three
    /// standard deviations over the window.
    pub trending: Vec<usize>,
}

impl CovariancePair {
    /// Splits a full stationary covariance [[C_δδ, C_δω], [C_ωδ, C_ωω]].
    pub fn from_state_covariance(c: &DMatrix<f64>, frame: Frame) -> Result<Self> {
        let k = c.nrows() / 2;
        if c.nrows() != 2 * k || c.ncols() != 2 * k {
            return Err(Error::Dimension(format!("covariance is {}x{}", c.nrows(), c.ncols())));
        }
        Ok(Self {
            q_dd: c.view((0, 0), (k, k)).into_owned(),
            q_ww: c.view((k, k), (k, k)).into_owned(),
            q_dw: c.view((0, k), (k, k)).into_owned(),
            window: Window { t_start: 0.0, t_end: f64::INFINITY, samples: usize::MAX },
            frame,
            machines: frame.independent(k + usize::from(frame.eliminated().is_some())),
            trending: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.q_dd.nrows()
    }

    /// Full state covariance assembled from the blocks.
    pub fn state_covariance(&self) -> DMatrix<f64> {
        let k = self.dim();
        let mut c = DMatrix::zeros(2 * k, 2 * k);
        c.view_mut((0, 0), (k, k)).copy_from(&self.q_dd);
        c.view_mut((k, k), (k, k)).copy_from(&self.q_ww);
        c.view_mut((0, k), (k, k)).copy_from(&self.q_dw);
        c.view_mut((k, 0), (k, k)).copy_from(&self.q_dw.transpose());
        c
    }

    /// Removes the contribution of white measurement noise with known
    /// standard deviations from the diagonal blocks.
    pub fn subtract_white_noise(&mut self, std_delta: f64, std_omega: f64) {
        for i in 0..self.dim() {
            self.q_dd[(i, i)] -= std_delta * std_delta;
            self.q_ww[(i, i)] -= std_omega * std_omega;
        }
    }

    /// Restriction to the positions `keep` of this pair.
    /// Antisymmetric part of Q_δω. Stationarity forces C_δω + C_ωδ = 0, so the
    /// symmetric part of the sample matrix is pure sampling noise.
    pub fn q_dw_stationary(&self) -> DMatrix<f64> {
        (&self.q_dw - self.q_dw.transpose()) * 0.5
    }

    pub fn restrict(&self, keep: &[usize]) -> CovariancePair {
        CovariancePair {
            q_dd: select_square(&self.q_dd, keep),
            q_ww: select_square(&self.q_ww, keep),
            q_dw: select_square(&self.q_dw, keep),
            machines: keep.iter().map(|&k| self.machines[k]).collect(),
            trending: Vec::new(),
            ..self.clone()
        }
    }
}

/// Sample covariances over the frame's independent machines for samples
/// with t_start ≤ t < t_end.
pub fn sample_covariance(series: &AmbientSeries, t_start: f64, t_end: f64) -> Result<CovariancePair> {
    let channels = series.frame.independent(series.machines());
    sample_covariance_channels(series, &channels, t_start, t_end)
}

/// Sample covariances over the listed series columns.
pub fn sample_covariance_channels(
    series: &AmbientSeries,
    channels: &[usize],
    t_start: f64,
    t_end: f64,
) -> Result<CovariancePair> {
    if let Some(&bad) = channels.iter().find(|&&c| c >= series.machines()) {
        return Err(Error::Config(format!("machine {} not in series", bad + 1)));
    }
    let a = series.index_at(t_start);
    let b = series.index_at(t_end).max(a);
    let n = b - a;
    if n < 2 {
        return Err(Error::SampleSize { samples: n });
    }
    let k = channels.len();
    let mut x = DMatrix::zeros(n, 2 * k);
    for (j, &c) in channels.iter().enumerate() {
        x.column_mut(j).copy_from(&series.delta.view((a, c), (n, 1)));
        x.column_mut(k + j).copy_from(&series.omega.view((a, c), (n, 1)));
    }
    let means = x.row_mean();
    for mut row in x.row_iter_mut() {
        row -= &means;
    }
    let trending = trend_flags(&x, k);
    let c = (x.transpose() * &x) / (n as f64 - 1.0);
    let c = (&c + c.transpose()) * 0.5;
    Ok(CovariancePair {
        q_dd: c.view((0, 0), (k, k)).into_owned(),
        q_ww: c.view((k, k), (k, k)).into_owned(),
        q_dw: c.view((0, k), (k, k)).into_owned(),
        window: Window {
            t_start: series.time(a),
            t_end: series.time(b),
            samples: n,
        },
        frame: series.frame,
        machines: channels.to_vec(),
        trending,
    })
}

/// Channels of the centred data whose fitted linear drift over the window
/// exceeds three standard deviations.
fn trend_flags(x: &DMatrix<f64>, k: usize) -> Vec<usize> {
    let n = x.nrows();
    let tm = (n as f64 - 1.0) / 2.0;
    let stt: f64 = (0..n).map(|i| (i as f64 - tm).powi(2)).sum();
    let mut out = Vec::new();
    for c in 0..x.ncols() {
        let col = x.column(c);
        let slope: f64 = col.iter().enumerate().map(|(i, v)| (i as f64 - tm) * v).sum::<f64>() / stt;
        let std = (col.norm_squared() / (n as f64 - 1.0)).sqrt();
        if std > 0.0 && (slope * n as f64).abs() > 3.0 * std {
            let ch = c % k;
            if !out.contains(&ch) {
                out.push(ch);
            }
        }
    }
    out.sort_unstable();
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobianEstimate {
    pub j_hat: DMatrix<f64>,
    pub method: Method,
    pub window: Window,
    pub frame: Frame,
    pub machines: Vec<usize>,
    /// Condition number of the inverted angle covariance.
    pub condition: f64,
    /// True when computed from a subset of the frame's machines.
    pub submatrix: bool,
}

fn per_machine(v: &[f64], cov: &CovariancePair, name: &str) -> Result<Vec<f64>> {
    let k = cov.dim();
    if v.len() == k {
        return Ok(v.to_vec());
    }
    if cov.machines.iter().all(|&c| c < v.len()) {
        return Ok(cov.machines.iter().map(|&c| v[c]).collect());
    }
    Err(Error::Dimension(format!("{name} has {} entries for {k} machines", v.len())))
}

/// Inverts the Lyapunov relation for the Jacobian.
///
/// `m` and `d` may list the estimated machines only or every series column.
/// `FullAppendix` needs `d` and uses the stationary (antisymmetric) part of Q_δω.
pub fn estimate_jacobian(cov: &CovariancePair, m: &[f64], method: Method, d: Option<&[f64]>) -> Result<JacobianEstimate> {
    let m = per_machine(m, cov, "M")?;
    let (inv, condition) = spd_inverse(&cov.q_dd, MAX_CONDITION)?;
    let k = cov.dim();
    let mut j = DMatrix::from_fn(k, k, |r, c| m[r] * cov.q_ww[(r, c)]) * &inv;
    if method == Method::FullAppendix {
        let d = d.ok_or_else(|| Error::Config("the full estimator needs damping values".into()))?;
        let d = per_machine(d, cov, "D")?;
        let dw = cov.q_dw_stationary();
        j += DMatrix::from_fn(k, k, |r, c| d[r] * dw[(r, c)]) * &inv;
    }
    if j.iter().any(|v| !v.is_finite()) {
        return Err(Error::IllConditioned { condition });
    }
    Ok(JacobianEstimate {
        j_hat: j,
        method,
        window: cov.window,
        frame: cov.frame,
        machines: cov.machines.clone(),
        condition,
        submatrix: false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DampingEstimate {
    pub d_hat: Vec<f64>,
    pub method: Method,
    /// Noise intensity [BBᵀ]_ωω,kk used per machine.
    pub noise_diag: Vec<f64>,
    /// Positions with a negative estimate.
    pub negative: Vec<usize>,
}

/// Damping from covariances and the load-noise description E, G_ii, σ.
pub fn estimate_damping(
    cov: &CovariancePair,
    m: &[f64],
    e: &[f64],
    g_diag: &[f64],
    sigma: &[f64],
    method: Method,
) -> Result<DampingEstimate> {
    let m = per_machine(m, cov, "M")?;
    let e = per_machine(e, cov, "E")?;
    let g = per_machine(g_diag, cov, "G")?;
    let s = per_machine(sigma, cov, "sigma")?;
    let noise: Vec<f64> = (0..cov.dim())
        .map(|k| (e[k] * e[k] * g[k] * s[k] / m[k]).powi(2))
        .collect();
    estimate_damping_with_noise(cov, &m, &noise, method)
}

/// Damping from covariances and the per-machine speed-noise intensity
/// [BBᵀ]_ωω,kk.
///
/// Simplified: D_k = ½ M_k q_k / [C_ωω]_kk. Full: D_k = ½ M_k (q_k + R_kk) / Ĉ_kk
/// with R = C_δω C_δδ⁻¹ C_ωω − C_ωω C_δδ⁻¹ C_δω and Ĉ = C_ωω + C_δω C_δδ⁻¹ C_δω.
pub fn estimate_damping_with_noise(
    cov: &CovariancePair,
    m: &[f64],
    noise_diag: &[f64],
    method: Method,
) -> Result<DampingEstimate> {
    let k = cov.dim();
    let m = per_machine(m, cov, "M")?;
    if noise_diag.len() != k {
        return Err(Error::Dimension(format!("noise has {} entries for {k} machines", noise_diag.len())));
    }
    let (num_extra, denom) = match method {
        Method::Simplified => (vec![0.0; k], cov.q_ww.diagonal().iter().cloned().collect::<Vec<_>>()),
        Method::FullAppendix => {
            let (inv, _) = spd_inverse(&cov.q_dd, MAX_CONDITION)?;
            let dw = &cov.q_dw_stationary();
            let r = dw * &inv * &cov.q_ww - &cov.q_ww * &inv * dw;
            let ch = &cov.q_ww + dw * &inv * dw;
            (r.diagonal().iter().cloned().collect(), ch.diagonal().iter().cloned().collect())
        }
    };
    let mut d_hat = Vec::with_capacity(k);
    for i in 0..k {
        if !(denom[i] > 0.0) {
            return Err(Error::DegenerateCovariance { machine: cov.machines.get(i).copied().unwrap_or(i) + 1 });
        }
        d_hat.push(0.5 * m[i] * (noise_diag[i] + num_extra[i]) / denom[i]);
    }
    let negative = (0..k).filter(|&i| d_hat[i] < 0.0).collect();
    Ok(DampingEstimate {
        d_hat,
        method,
        noise_diag: noise_diag.to_vec(),
        negative,
    })
}

/// State matrix built from an estimated Jacobian and known M, D.
pub fn assemble_estimated_state_matrix(est: &JacobianEstimate, m: &[f64], d: &[f64]) -> Result<StateMatrix> {
    let pick = |v: &[f64], name: &str| -> Result<Vec<f64>> {
        let k = est.j_hat.nrows();
        if v.len() == k {
            Ok(v.to_vec())
        } else if est.machines.iter().all(|&c| c < v.len()) {
            Ok(est.machines.iter().map(|&c| v[c]).collect())
        } else {
            Err(Error::Dimension(format!("{name} has {} entries for {k} machines", v.len())))
        }
    };
    let m = pick(m, "M")?;
    let d = pick(d, "D")?;
    dynamics::assemble_state_matrix(&est.j_hat, &m, &d, est.frame)
}

/// Jacobian sub-matrix from the observed machines only. `observed` are
/// series columns; the frame's eliminated machine may not be among them.
pub fn estimate_submatrix(
    series: &AmbientSeries,
    observed: &[usize],
    m: &[f64],
    method: Method,
    d: Option<&[f64]>,
    t_start: f64,
    t_end: f64,
) -> Result<JacobianEstimate> {
    if observed.len() < 2 {
        return Err(Error::Config("at least two observed machines are needed".into()));
    }
    if let Some(k) = series.frame.eliminated() {
        if observed.contains(&k) {
            return Err(Error::Config(format!(
                "machine {} is eliminated by frame {}",
                k + 1,
                series.frame.tag()
            )));
        }
    }
    let cov = sample_covariance_channels(series, observed, t_start, t_end)?;
    let full = series.frame.independent(series.machines());
    let mut est = estimate_jacobian(&cov, m, method, d)?;
    est.submatrix = observed != full.as_slice();
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Linearization, MachineModel};
    use crate::netmodel::cases;
    use nalgebra::DVector;

    fn wscc9_lin(frame: Option<Frame>) -> (MachineModel, Linearization) {
        let case = cases::wscc9();
        let model = MachineModel::from_case(&case).unwrap();
        let frame = frame.unwrap_or_else(|| model.coi_for_case(&case));
        let lin = Linearization::new(&model, frame, &[0.01; 3]).unwrap();
        (model, lin)
    }

    fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    fn series(delta: &[f64], omega: &[f64], m: usize) -> AmbientSeries {
        let t = delta.len() / m;
        AmbientSeries {
            sample_rate: 1.0,
            t0: 0.0,
            frame: Frame::Plain,
            delta: DMatrix::from_row_slice(t, m, delta),
            omega: DMatrix::from_row_slice(t, m, omega),
            labels: (1..=m).collect(),
            events: vec![],
        }
    }

    #[test]
    fn constant_series_has_zero_covariance() {
        let s = series(&[1.0, 2.0, 1.0, 2.0, 1.0, 2.0], &[0.0; 6], 2);
        let c = sample_covariance(&s, 0.0, 10.0).unwrap();
        assert_eq!(c.q_dd.amax(), 0.0);
        assert_eq!(c.q_ww.amax(), 0.0);
    }

    #[test]
    fn two_sample_hand_example() {
        let s = series(&[0.0, 1.0, 2.0, 3.0], &[0.0; 4], 2);
        let c = sample_covariance(&s, 0.0, 10.0).unwrap();
        assert_eq!(c.q_dd, DMatrix::from_element(2, 2, 2.0));
        assert_eq!(c.window.samples, 2);
    }

    #[test]
    fn one_sample_is_too_few() {
        let s = series(&[0.0, 1.0, 2.0, 3.0], &[0.0; 4], 2);
        assert!(matches!(sample_covariance(&s, 0.0, 1.0), Err(Error::SampleSize { samples: 1 })));
    }

    #[test]
    fn linear_drift_is_flagged() {
        let d: Vec<f64> = (0..100).flat_map(|i| [i as f64, ((i * 7919) % 13) as f64]).collect();
        let s = series(&d, &vec![0.0; 200], 2);
        let c = sample_covariance(&s, 0.0, 1000.0).unwrap();
        assert_eq!(c.trending, vec![0]);
    }

    #[test]
    fn identity_covariances_give_identity() {
        let cov = CovariancePair::from_state_covariance(&DMatrix::identity(4, 4), Frame::Plain).unwrap();
        let est = estimate_jacobian(&cov, &[1.0, 1.0], Method::Simplified, None).unwrap();
        assert!((est.j_hat - DMatrix::identity(2, 2)).amax() < 1e-15);
    }

    #[test]
    fn singular_angle_covariance_is_rejected() {
        let mut c = DMatrix::identity(4, 4);
        c[(1, 1)] = 1e-14;
        let cov = CovariancePair::from_state_covariance(&c, Frame::Plain).unwrap();
        assert!(matches!(
            estimate_jacobian(&cov, &[1.0, 1.0], Method::Simplified, None),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn full_method_needs_damping() {
        let cov = CovariancePair::from_state_covariance(&DMatrix::identity(4, 4), Frame::Plain).unwrap();
        assert!(estimate_jacobian(&cov, &[1.0, 1.0], Method::FullAppendix, None).is_err());
    }

    #[test]
    fn wscc9_exact_covariance_round_trip() {
        for frame in [None, Some(Frame::MachineRef { reference: 0 })] {
            let (model, lin) = wscc9_lin(frame);
            let c = lin.covariance().unwrap();
            let cov = CovariancePair::from_state_covariance(&c, lin.frame).unwrap();
            let j = estimate_jacobian(&cov, &model.m, Method::FullAppendix, Some(&model.d)).unwrap();
            assert!(rel(&j.j_hat, &lin.jacobian) < 1e-8);
            let bb = &lin.noise.b * lin.noise.b.transpose();
            let k = cov.dim();
            let noise: Vec<f64> = (0..k).map(|i| bb[(k + i, k + i)]).collect();
            let d = estimate_damping_with_noise(&cov, &model.m, &noise, Method::FullAppendix).unwrap();
            for (got, &want) in d.d_hat.iter().zip(&model.frame_damping(&lin.frame)) {
                assert!(((got - want) / want).abs() < 1e-8, "{got} vs {want}");
            }
            let a = assemble_estimated_state_matrix(&j, &model.m, &model.d).unwrap();
            assert!((a.a - &lin.state.a).amax() < 1e-8);
        }
    }

    #[test]
    fn simplified_is_exact_without_cross_covariance() {
        let (model, lin) = wscc9_lin(None);
        let mut cov = CovariancePair::from_state_covariance(&lin.covariance().unwrap(), lin.frame).unwrap();
        // Enforce M C_ωω = J C_δδ with C_δω = 0.
        let m = model.frame_inertia(&lin.frame);
        let minv = DMatrix::from_diagonal(&DVector::from_vec(m.iter().map(|v| 1.0 / v).collect()));
        cov.q_ww = minv * &lin.jacobian * &cov.q_dd;
        cov.q_dw.fill(0.0);
        let j = estimate_jacobian(&cov, &model.m, Method::Simplified, None).unwrap();
        assert!(rel(&j.j_hat, &lin.jacobian) < 1e-8);
    }

    #[test]
    fn noise_scale_does_not_move_exact_estimate() {
        let case = cases::wscc9();
        let model = MachineModel::from_case(&case).unwrap();
        let frame = model.coi_for_case(&case);
        let est = |s: f64| {
            let lin = Linearization::new(&model, frame, &[s, 2.0 * s, 1.5 * s]).unwrap();
            let cov = CovariancePair::from_state_covariance(&lin.covariance().unwrap(), frame).unwrap();
            estimate_jacobian(&cov, &model.m, Method::FullAppendix, Some(&model.d)).unwrap().j_hat
        };
        let a = est(0.01);
        let b = est(0.37);
        assert!(rel(&b, &a) < 1e-10);
    }

    #[test]
    fn unit_damping_example() {
        let mut c = DMatrix::identity(2, 2);
        c[(1, 1)] = 0.5;
        let cov = CovariancePair::from_state_covariance(&c, Frame::Plain).unwrap();
        for method in [Method::Simplified, Method::FullAppendix] {
            let d = estimate_damping(&cov, &[1.0], &[1.0], &[1.0], &[1.0], method).unwrap();
            assert!((d.d_hat[0] - 1.0).abs() < 1e-15);
            assert!(d.negative.is_empty());
        }
    }

    #[test]
    fn zero_speed_variance_is_degenerate() {
        let mut c = DMatrix::identity(2, 2);
        c[(1, 1)] = 0.0;
        let cov = CovariancePair::from_state_covariance(&c, Frame::Plain).unwrap();
        assert!(matches!(
            estimate_damping(&cov, &[1.0], &[1.0], &[1.0], &[1.0], Method::Simplified),
            Err(Error::DegenerateCovariance { machine: 1 })
        ));
    }

    #[test]
    fn full_observation_submatrix_equals_plain_estimate() {
        let case = cases::wscc9();
        let model = MachineModel::from_case(&case).unwrap();
        let frame = model.coi_for_case(&case);
        let sched = crate::simulator::ScenarioSchedule::new(200.0, vec![0.01; 3], 5);
        let s = crate::simulator::simulate_ambient(&case, &model, frame, &sched).unwrap();
        let cov = sample_covariance(&s, 0.0, 200.0).unwrap();
        let a = estimate_jacobian(&cov, &model.m, Method::Simplified, None).unwrap();
        let b = estimate_submatrix(&s, &[0, 1], &model.m, Method::Simplified, None, 0.0, 200.0).unwrap();
        assert_eq!(a.j_hat, b.j_hat);
        assert!(!b.submatrix);
        assert!(estimate_submatrix(&s, &[0, 2], &model.m, Method::Simplified, None, 0.0, 200.0).is_err());
    }

    // The published covariances are rounded to three decimals; the published
    // estimate must lie inside the spread produced by that rounding.
    #[test]
    fn published_covariances_reproduce_published_estimate() {
        let dd = [0.355, -0.512, 0.917];
        let ww = [0.355, -0.477, 0.967];
        let target = [7.960, 1.180, 3.047, 5.280];
        let mut lo = [f64::INFINITY; 4];
        let mut hi = [f64::NEG_INFINITY; 4];
        for corner in 0..64u32 {
            let off = |bit: u32| if corner >> bit & 1 == 1 { 0.0005 } else { -0.0005 };
            let a = [dd[0] + off(0), dd[1] + off(1), dd[2] + off(2)];
            let b = [ww[0] + off(3), ww[1] + off(4), ww[2] + off(5)];
            let mut c = DMatrix::zeros(4, 4);
            c.view_mut((0, 0), (2, 2)).copy_from(&(DMatrix::from_row_slice(2, 2, &[a[0], a[1], a[1], a[2]]) * 1e-5));
            c.view_mut((2, 2), (2, 2)).copy_from(&(DMatrix::from_row_slice(2, 2, &[b[0], b[1], b[1], b[2]]) * 1e-4));
            let cov = CovariancePair::from_state_covariance(&c, Frame::Coi { dependent: 2 }).unwrap();
            let j = estimate_jacobian(&cov, &[0.63, 0.34], Method::Simplified, None).unwrap().j_hat;
            for (e, v) in j.transpose().iter().enumerate() {
                lo[e] = lo[e].min(*v);
                hi[e] = hi[e].max(*v);
            }
        }
        for e in 0..4 {
            assert!(lo[e] <= target[e] && target[e] <= hi[e], "entry {e}: {} not in [{}, {}]", target[e], lo[e], hi[e]);
        }
    }

    #[test]
    fn method_names() {
        assert_eq!(Method::parse("full").unwrap(), Method::FullAppendix);
        assert_eq!(Method::parse("Simplified").unwrap(), Method::Simplified);
        assert!(Method::parse("exact").is_err());
    }
}
