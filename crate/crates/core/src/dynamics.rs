//! Classical swing-equation model: electrical power, reference frames,
//! equilibria, linearization and the stationary covariance of the
//! linearized stochastic system.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, spectral_abscissa};
use crate::netmodel::{self, NetworkCase, ReducedNetwork};

/// Angle/speed coordinates in which the dynamics are written.
///
/// Machine indices are zero-based positions in the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Frame {
    /// Absolute angles and speeds of every machine.
    Plain,
    /// Deviations from the centre of inertia with one machine eliminated
    /// through the constraint Σ M_i δ̃_i = 0.
    Coi { dependent: usize },
    /// Angles and speeds relative to a reference machine. The relative
    /// dynamics close only when D/M is the same for every machine; otherwise
    /// the reference's absolute speed leaks in through the damping terms and
    /// covariance-based estimates in this frame are biased.
    MachineRef { reference: usize },
}

impl Frame {
    pub fn validate(&self, n: usize) -> Result<()> {
        match *self {
            Frame::Plain => Ok(()),
            Frame::Coi { dependent: k } | Frame::MachineRef { reference: k } if k < n => Ok(()),
            _ => Err(Error::Config(format!(
                "frame {} names a machine outside 1..={n}",
                self.tag()
            ))),
        }
    }

    /// Number of independent machines.
    pub fn dim(&self, n: usize) -> usize {
        match self {
            Frame::Plain => n,
            _ => n.saturating_sub(1),
        }
    }

    pub fn eliminated(&self) -> Option<usize> {
        match *self {
            Frame::Plain => None,
            Frame::Coi { dependent } => Some(dependent),
            Frame::MachineRef { reference } => Some(reference),
        }
    }

    /// Model indices of the independent machines, in order.
    pub fn independent(&self, n: usize) -> Vec<usize> {
        let skip = self.eliminated();
        (0..n).filter(|&i| Some(i) != skip).collect()
    }

    /// Short text form with one-based machine numbers: `plain`, `coi:3`, `ref:10`.
    pub fn tag(&self) -> String {
        match *self {
            Frame::Plain => "plain".into(),
            Frame::Coi { dependent } => format!("coi:{}", dependent + 1),
            Frame::MachineRef { reference } => format!("ref:{}", reference + 1),
        }
    }

    /// Parses the text form. A bare `coi` uses `default_dependent`.
    pub fn parse(text: &str, default_dependent: usize) -> Result<Frame> {
        let text = text.trim().to_ascii_lowercase();
        let machine = |s: &str| -> Result<usize> {
            match s.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(k - 1),
                _ => Err(Error::Config(format!("bad machine number '{s}' in frame"))),
            }
        };
        match text.split_once(':') {
            None if text == "plain" => Ok(Frame::Plain),
            None if text == "coi" => Ok(Frame::Coi {
                dependent: default_dependent,
            }),
            Some(("coi", k)) => Ok(Frame::Coi { dependent: machine(k)? }),
            Some(("ref", k)) => Ok(Frame::MachineRef { reference: machine(k)? }),
            _ => Err(Error::Config(format!(
                "unknown frame '{text}' (expected plain, coi, coi:K or ref:K)"
            ))),
        }
    }

    /// Full-length angles (or speeds) to frame coordinates.
    pub fn project(&self, m: &[f64], full: &DVector<f64>) -> DVector<f64> {
        let n = full.len();
        let idx = self.independent(n);
        match *self {
            Frame::Plain => full.clone(),
            Frame::Coi { .. } => {
                let mt: f64 = m.iter().sum();
                let c: f64 = m.iter().zip(full.iter()).map(|(a, b)| a * b).sum::<f64>() / mt;
                DVector::from_iterator(idx.len(), idx.iter().map(|&i| full[i] - c))
            }
            Frame::MachineRef { reference } => {
                DVector::from_iterator(idx.len(), idx.iter().map(|&i| full[i] - full[reference]))
            }
        }
    }

    /// Frame coordinates back to full length. The eliminated machine is
    /// rebuilt from the COI constraint, or set to zero for a reference frame.
    pub fn expand(&self, m: &[f64], x: &DVector<f64>) -> DVector<f64> {
        match *self {
            Frame::Plain => x.clone(),
            Frame::Coi { dependent } => {
                let n = x.len() + 1;
                let mut full = DVector::zeros(n);
                let mut weighted = 0.0;
                for (k, &i) in self.independent(n).iter().enumerate() {
                    full[i] = x[k];
                    weighted += m[i] * x[k];
                }
                full[dependent] = -weighted / m[dependent];
                full
            }
            Frame::MachineRef { .. } => {
                let n = x.len() + 1;
                let mut full = DVector::zeros(n);
                for (k, &i) in self.independent(n).iter().enumerate() {
                    full[i] = x[k];
                }
                full
            }
        }
    }
}

/// Reduced network together with the machine parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MachineModel {
    pub network: ReducedNetwork,
    pub m: Vec<f64>,
    pub d: Vec<f64>,
    pub pm: Vec<f64>,
    /// Internal angles of the solved case, used as the equilibrium guess.
    pub delta0: Vec<f64>,
    /// Generator ids, for labelling.
    pub labels: Vec<usize>,
}

impl MachineModel {
    pub fn new(network: ReducedNetwork, m: Vec<f64>, d: Vec<f64>, pm: Vec<f64>) -> Result<Self> {
        let n = network.n();
        if network.y.nrows() != n || network.y.ncols() != n {
            return Err(Error::Dimension(format!(
                "admittance is {}x{} for {n} emfs",
                network.y.nrows(),
                network.y.ncols()
            )));
        }
        for (name, v) in [("M", &m), ("D", &d), ("Pm", &pm)] {
            if v.len() != n {
                return Err(Error::Dimension(format!("{name} has {} entries, expected {n}", v.len())));
            }
        }
        if m.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::InvalidCase("inertia must be positive".into()));
        }
        if d.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidCase("damping must be nonnegative".into()));
        }
        Ok(Self {
            network,
            m,
            d,
            pm,
            delta0: vec![0.0; n],
            labels: (1..=n).collect(),
        })
    }

    pub fn from_case(case: &NetworkCase) -> Result<Self> {
        let (e, delta0) = netmodel::internal_operating_point(case)?;
        let y = netmodel::reduced_admittance(case)?;
        let gens = &case.generators;
        let mut model = Self::new(
            ReducedNetwork { y, e },
            gens.iter().map(|g| g.m).collect(),
            gens.iter().map(|g| g.d).collect(),
            gens.iter().map(|g| g.pm).collect(),
        )?;
        model.delta0 = delta0;
        model.labels = gens.iter().map(|g| g.id).collect();
        Ok(model)
    }

    /// Same machines and emfs on the network of `case` (typically after a
    /// topology change).
    pub fn with_topology(&self, case: &NetworkCase) -> Result<Self> {
        let y = netmodel::reduced_admittance(case)?;
        if y.nrows() != self.n() {
            return Err(Error::Dimension("topology change altered the machine count".into()));
        }
        let mut out = self.clone();
        out.network.y = y;
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.m.len()
    }

    pub fn total_inertia(&self) -> f64 {
        self.m.iter().sum()
    }

    /// COI frame eliminating the machine of largest inertia.
    pub fn default_coi(&self) -> Frame {
        let dependent = self
            .m
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &mi)| if mi > best.1 { (i, mi) } else { best })
            .0;
        Frame::Coi { dependent }
    }

    /// COI frame honouring a case's `coi_dependent` override.
    pub fn coi_for_case(&self, case: &NetworkCase) -> Frame {
        case.coi_dependent
            .and_then(|id| case.generator_index(id))
            .map(|dependent| Frame::Coi { dependent })
            .unwrap_or_else(|| self.default_coi())
    }

    fn restrict(&self, frame: &Frame, v: &[f64]) -> Vec<f64> {
        frame.independent(self.n()).iter().map(|&i| v[i]).collect()
    }

    pub fn frame_inertia(&self, frame: &Frame) -> Vec<f64> {
        self.restrict(frame, &self.m)
    }

    pub fn frame_damping(&self, frame: &Frame) -> Vec<f64> {
        self.restrict(frame, &self.d)
    }

    /// Diagonal of E²G, the per-machine load-noise gain.
    pub fn noise_gain(&self) -> Vec<f64> {
        (0..self.n())
            .map(|i| self.network.e[i].powi(2) * self.network.g(i, i))
            .collect()
    }
}

/// Pe_i = Σ_j E_iE_j(G_ij cos(δ_i−δ_j) + B_ij sin(δ_i−δ_j)).
pub fn electrical_power(model: &MachineModel, delta: &[f64]) -> DVector<f64> {
    let n = model.n();
    let e = &model.network.e;
    let y = &model.network.y;
    DVector::from_fn(n, |i, _| {
        (0..n)
            .map(|j| {
                let (s, c) = (delta[i] - delta[j]).sin_cos();
                e[i] * e[j] * (y[(i, j)].re * c + y[(i, j)].im * s)
            })
            .sum()
    })
}

/// Centre-of-inertia deviations with the COI angle and speed kept for the inverse.
#[derive(Clone, Debug, PartialEq)]
pub struct CoiCoordinates {
    pub delta: DVector<f64>,
    pub omega: DVector<f64>,
    pub delta_coi: f64,
    pub omega_coi: f64,
}

pub fn coi_transform(delta: &DVector<f64>, omega: &DVector<f64>, m: &[f64]) -> CoiCoordinates {
    let mt: f64 = m.iter().sum();
    let mean = |v: &DVector<f64>| m.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>() / mt;
    let (dc, wc) = (mean(delta), mean(omega));
    CoiCoordinates {
        delta: delta.add_scalar(-dc),
        omega: omega.add_scalar(-wc),
        delta_coi: dc,
        omega_coi: wc,
    }
}

pub fn inverse_coi(coords: &CoiCoordinates) -> (DVector<f64>, DVector<f64>) {
    (
        coords.delta.add_scalar(coords.delta_coi),
        coords.omega.add_scalar(coords.omega_coi),
    )
}

/// ∂Pe/∂δ on absolute angles. Rows sum to zero.
pub fn plain_jacobian(model: &MachineModel, delta: &[f64]) -> DMatrix<f64> {
    let n = model.n();
    let e = &model.network.e;
    let y = &model.network.y;
    let mut j = DMatrix::zeros(n, n);
    for r in 0..n {
        let mut diag = 0.0;
        for c in 0..n {
            if r == c {
                continue;
            }
            let (s, co) = (delta[r] - delta[c]).sin_cos();
            let v = e[r] * e[c] * (y[(r, c)].re * s - y[(r, c)].im * co);
            j[(r, c)] = v;
            diag -= v;
        }
        j[(r, r)] = diag;
    }
    j
}

/// Accelerating power of the frame's independent machines at frame
/// coordinates `x`. The frame Jacobian is minus its derivative.
///
/// Plain: Pm − Pe. Coi: Pm_i − Pe_i − (M_i/M_T)·Σ(Pm − Pe).
/// MachineRef(k): (Pm_i − Pe_i) − (M_i/M_k)(Pm_k − Pe_k).
pub fn frame_mismatch(model: &MachineModel, frame: &Frame, x: &DVector<f64>) -> DVector<f64> {
    let full = frame.expand(&model.m, x);
    let pe = electrical_power(model, full.as_slice());
    let p: Vec<f64> = model.pm.iter().zip(pe.iter()).map(|(a, b)| a - b).collect();
    let idx = frame.independent(model.n());
    match *frame {
        Frame::Plain => DVector::from_vec(p),
        Frame::Coi { .. } => {
            let pc: f64 = p.iter().sum();
            let mt = model.total_inertia();
            DVector::from_iterator(idx.len(), idx.iter().map(|&i| p[i] - model.m[i] / mt * pc))
        }
        Frame::MachineRef { reference: k } => DVector::from_iterator(
            idx.len(),
            idx.iter().map(|&i| p[i] - model.m[i] / model.m[k] * p[k]),
        ),
    }
}

/// Dynamic state Jacobian in the given frame at frame coordinates `x`.
pub fn jacobian_analytic(model: &MachineModel, x: &DVector<f64>, frame: &Frame) -> DMatrix<f64> {
    let n = model.n();
    let full = frame.expand(&model.m, x);
    let jp = plain_jacobian(model, full.as_slice());
    let idx = frame.independent(n);
    let m = &model.m;
    match *frame {
        Frame::Plain => jp,
        Frame::Coi { dependent } => {
            // Rows: Jp − (M/M_T)·(column sums of Jp). Columns: chain rule
            // through δ̃_dep = −Σ (M_j/M_dep) δ̃_j.
            let mt = model.total_inertia();
            let colsum: Vec<f64> = (0..n).map(|c| jp.column(c).sum()).collect();
            let row = |i: usize, c: usize| jp[(i, c)] - m[i] / mt * colsum[c];
            DMatrix::from_fn(idx.len(), idx.len(), |a, b| {
                let (i, j) = (idx[a], idx[b]);
                row(i, j) - m[j] / m[dependent] * row(i, dependent)
            })
        }
        Frame::MachineRef { reference: k } => DMatrix::from_fn(idx.len(), idx.len(), |a, b| {
            let (i, j) = (idx[a], idx[b]);
            jp[(i, j)] - m[i] / m[k] * jp[(k, j)]
        }),
    }
}

pub const EQUILIBRIUM_TOL: f64 = 1e-9;
pub const EQUILIBRIUM_MAX_ITER: usize = 50;

/// Newton solve of the frame mismatch, with step halving whenever the
/// residual grows.
///
/// In the plain frame the machine of largest inertia is a balancing
/// reference: its angle stays at the initial value and its own mismatch is
/// not enforced.
pub fn solve_equilibrium(model: &MachineModel, frame: &Frame, x_init: &DVector<f64>) -> Result<DVector<f64>> {
    frame.validate(model.n())?;
    if x_init.len() != frame.dim(model.n()) {
        return Err(Error::Dimension(format!(
            "initial guess has {} entries, frame needs {}",
            x_init.len(),
            frame.dim(model.n())
        )));
    }
    let free: Vec<usize> = match frame {
        Frame::Plain => {
            let Frame::Coi { dependent } = model.default_coi() else { unreachable!() };
            (0..model.n()).filter(|&i| i != dependent).collect()
        }
        _ => (0..x_init.len()).collect(),
    };
    let residual = |x: &DVector<f64>| -> DVector<f64> {
        let f = frame_mismatch(model, frame, x);
        DVector::from_iterator(free.len(), free.iter().map(|&i| f[i]))
    };
    let mut x = x_init.clone();
    if free.is_empty() {
        return Ok(x);
    }
    let mut f = residual(&x);
    let mut norm = f.amax();
    for _ in 0..EQUILIBRIUM_MAX_ITER {
        if norm < EQUILIBRIUM_TOL {
            return Ok(x);
        }
        let jf = jacobian_analytic(model, &x, frame);
        let jr = DMatrix::from_fn(free.len(), free.len(), |a, b| jf[(free[a], free[b])]);
        // f(x + s) ≈ f(x) − J s, so the Newton step solves J s = f.
        let step = jr.lu().solve(&f).ok_or(Error::Convergence {
            iterations: 0,
            residual: norm,
        })?;
        let mut alpha = 1.0;
        loop {
            let mut trial = x.clone();
            for (a, &i) in free.iter().enumerate() {
                trial[i] += alpha * step[a];
            }
            let ft = residual(&trial);
            let nt = ft.amax();
            if nt < norm || alpha < 1e-6 {
                x = trial;
                f = ft;
                norm = nt;
                break;
            }
            alpha *= 0.5;
        }
    }
    if norm < EQUILIBRIUM_TOL {
        Ok(x)
    } else {
        Err(Error::Convergence {
            iterations: EQUILIBRIUM_MAX_ITER,
            residual: norm,
        })
    }
}

/// Equilibrium in `frame` started from the case's internal angles.
pub fn equilibrium(model: &MachineModel, frame: &Frame) -> Result<DVector<f64>> {
    let guess = frame.project(&model.m, &DVector::from_column_slice(&model.delta0));
    solve_equilibrium(model, frame, &guess)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateMatrix {
    pub a: DMatrix<f64>,
    pub frame: Frame,
}

impl StateMatrix {
    pub fn dim(&self) -> usize {
        self.a.nrows() / 2
    }

    /// The −M⁻¹J block.
    pub fn stiffness_block(&self) -> DMatrix<f64> {
        let m = self.dim();
        self.a.view((m, 0), (m, m)).into_owned()
    }
}

fn frame_vector(v: &[f64], frame: &Frame, m: usize, name: &str) -> Result<Vec<f64>> {
    if v.len() == m {
        Ok(v.to_vec())
    } else if v.len() == m + 1 && frame.eliminated().is_some() {
        Ok(frame.independent(m + 1).iter().map(|&i| v[i]).collect())
    } else {
        Err(Error::Dimension(format!("{name} has {} entries for a {m}-machine frame", v.len())))
    }
}

/// A = [[0, I], [−M⁻¹J, −M⁻¹D]]. `m` and `d` may be given for all machines
/// or only for the frame's independent ones.
pub fn assemble_state_matrix(j: &DMatrix<f64>, m: &[f64], d: &[f64], frame: Frame) -> Result<StateMatrix> {
    let k = j.nrows();
    if j.ncols() != k {
        return Err(Error::Dimension(format!("Jacobian is {}x{}", k, j.ncols())));
    }
    let m = frame_vector(m, &frame, k, "M")?;
    let d = frame_vector(d, &frame, k, "D")?;
    let mut a = DMatrix::zeros(2 * k, 2 * k);
    for i in 0..k {
        a[(i, k + i)] = 1.0;
        for c in 0..k {
            a[(k + i, c)] = -j[(i, c)] / m[i];
        }
        a[(k + i, k + i)] = -d[i] / m[i];
    }
    Ok(StateMatrix { a, frame })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseInput {
    /// (2m)×n; the top m rows are zero.
    pub b: DMatrix<f64>,
    pub sigma: Vec<f64>,
}

impl NoiseInput {
    pub fn lower(&self) -> DMatrix<f64> {
        let m = self.b.nrows() / 2;
        self.b.rows(m, m).into_owned()
    }
}

/// Noise input for the frame. With a = E²Gσ per machine:
/// Plain row i is −a_i/M_i at column i; Coi adds a_k/M_T at every column k;
/// MachineRef(r) adds a_r/M_r at column r.
pub fn assemble_noise_matrix(model: &MachineModel, frame: &Frame, sigma: &[f64]) -> Result<NoiseInput> {
    let n = model.n();
    if sigma.len() != n {
        return Err(Error::Dimension(format!("sigma has {} entries, expected {n}", sigma.len())));
    }
    if sigma.iter().any(|&s| !(s >= 0.0)) {
        return Err(Error::Config("load noise standard deviations must be nonnegative".into()));
    }
    frame.validate(n)?;
    let gain = model.noise_gain();
    let a: Vec<f64> = gain.iter().zip(sigma).map(|(g, s)| g * s).collect();
    let idx = frame.independent(n);
    let k = idx.len();
    let mut b = DMatrix::zeros(2 * k, n);
    for (r, &i) in idx.iter().enumerate() {
        b[(k + r, i)] -= a[i] / model.m[i];
        match *frame {
            Frame::Plain => {}
            Frame::Coi { .. } => {
                let mt = model.total_inertia();
                for c in 0..n {
                    b[(k + r, c)] += a[c] / mt;
                }
            }
            Frame::MachineRef { reference } => {
                b[(k + r, reference)] += a[reference] / model.m[reference];
            }
        }
    }
    Ok(NoiseInput { b, sigma: sigma.to_vec() })
}

/// COI noise rows for every machine, dependent included (n×n).
pub fn coi_noise_all_machines(model: &MachineModel, sigma: &[f64]) -> DMatrix<f64> {
    let n = model.n();
    let mt = model.total_inertia();
    let a: Vec<f64> = model.noise_gain().iter().zip(sigma).map(|(g, s)| g * s).collect();
    DMatrix::from_fn(n, n, |i, c| {
        let own = if i == c { -a[i] / model.m[i] } else { 0.0 };
        own + a[c] / mt
    })
}

/// Stationary covariance: solves AC + CAᵀ = −BBᵀ for Hurwitz A.
pub fn solve_lyapunov(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = a.nrows();
    if a.ncols() != k || b.nrows() != k {
        return Err(Error::Dimension(format!(
            "A is {}x{}, B has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    let max_real = match spectral_abscissa(a) {
        Some(v) => v,
        None => {
            return Err(Error::EigenNonConvergence {
                partial: eigenvalues(a).unwrap_or_default(),
            })
        }
    };
    if max_real >= 0.0 {
        return Err(Error::NotHurwitz { max_real });
    }
    let q = b * b.transpose();
    let eye = DMatrix::<f64>::identity(k, k);
    let op = eye.kronecker(a) + a.kronecker(&eye);
    let lu = op.clone().lu();
    let rhs = DVector::from_iterator(k * k, q.iter().map(|v| -v));
    let mut vec_c = lu.solve(&rhs).ok_or(Error::NotHurwitz { max_real })?;
    // One round of refinement tightens the residual on stiff systems.
    let r = &rhs - &op * &vec_c;
    if let Some(dc) = lu.solve(&r) {
        vec_c += dc;
    }
    let c = DMatrix::from_column_slice(k, k, vec_c.as_slice());
    Ok((&c + c.transpose()) * 0.5)
}

/// Frobenius norm of AC + CAᵀ + BBᵀ relative to ‖BBᵀ‖.
pub fn lyapunov_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    let q = b * b.transpose();
    let r = a * c + c * a.transpose() + &q;
    let scale = q.norm();
    if scale == 0.0 {
        r.norm()
    } else {
        r.norm() / scale
    }
}

/// Everything the linear analysis needs at one operating point.
#[derive(Clone, Debug)]
pub struct Linearization {
    pub frame: Frame,
    pub equilibrium: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub state: StateMatrix,
    pub noise: NoiseInput,
}

impl Linearization {
    pub fn new(model: &MachineModel, frame: Frame, sigma: &[f64]) -> Result<Self> {
        let equilibrium = equilibrium(model, &frame)?;
        Self::at(model, frame, equilibrium, sigma)
    }

    pub fn at(model: &MachineModel, frame: Frame, equilibrium: DVector<f64>, sigma: &[f64]) -> Result<Self> {
        let jacobian = jacobian_analytic(model, &equilibrium, &frame);
        let state = assemble_state_matrix(&jacobian, &model.m, &model.d, frame)?;
        let noise = assemble_noise_matrix(model, &frame, sigma)?;
        Ok(Self {
            frame,
            equilibrium,
            jacobian,
            state,
            noise,
        })
    }

    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        solve_lyapunov(&self.state.a, &self.noise.b)
    }
}
