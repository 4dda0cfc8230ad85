//! Eigen-analysis of state matrices: spectrum, rightmost mode, left/right
//! eigenvectors and participation factors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    ModelBased,
    Estimated,
}

impl Source {
    pub fn tag(&self) -> &'static str {
        match self {
            Source::ModelBased => "model",
            Source::Estimated => "estimated",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    /// Sorted by decreasing real part; conjugate pairs adjacent, positive
    /// imaginary part first.
    pub eigenvalues: Vec<C64>,
    /// Right eigenvectors, unit 2-norm.
    pub right: Vec<DVector<C64>>,
    /// Left eigenvectors scaled so that wᵀv = 1.
    pub left: Vec<DVector<C64>>,
    /// Modes whose left and right eigenvectors are nearly orthogonal, i.e.
    /// defective eigenvalues. Their participation factors are omitted.
    pub degenerate: Vec<usize>,
    pub source: Source,
    /// ‖A‖_F of the analysed matrix.
    pub scale: f64,
}

fn cmp_modes(a: &C64, b: &C64) -> std::cmp::Ordering {
    b.re.total_cmp(&a.re)
        .then(a.im.abs().total_cmp(&b.im.abs()))
        .then(b.im.total_cmp(&a.im))
}

/// Eigenvector of `a` for `lambda` by complex inverse iteration.
fn inverse_iteration(a: &DMatrix<C64>, lambda: C64, tol: f64) -> DVector<C64> {
    let n = a.nrows();
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let mut v = DVector::from_fn(n, |i, _| C64::new(1.0 + 0.1 * i as f64, 0.05 * (i % 3) as f64));
    v /= C64::from(v.norm());
    let mut best = v.clone();
    let mut best_res = f64::INFINITY;
    for shift in [1e-10, 1e-8, 1e-13, 1e-6] {
        let mu = lambda + C64::new(shift, shift) * scale;
        let lu = (a - DMatrix::from_diagonal_element(n, n, mu)).lu();
        for _ in 0..6 {
            let Some(x) = lu.solve(&v) else { break };
            let nx = x.norm();
            if !(nx.is_finite() && nx > 0.0) {
                break;
            }
            v = x / C64::from(nx);
            let res = (a * &v - &v * lambda).norm();
            if res < best_res {
                best_res = res;
                best = v.clone();
            }
            if res < tol {
                return best;
            }
        }
    }
    best
}

/// Full eigen-decomposition of a real square matrix.
pub fn eigen_decompose(a: &DMatrix<f64>, source: Source) -> Result<SpectralReport> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!("matrix is {}x{}", a.nrows(), a.ncols())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Dimension("matrix has non-finite entries".into()));
    }
    let mut ev = eigenvalues(a).ok_or(Error::EigenNonConvergence { partial: Vec::new() })?;
    // Snap conjugate pairs so the set is exactly closed under conjugation.
    let n = ev.len();
    let mut used = vec![false; n];
    for i in 0..n {
        if used[i] || ev[i].im == 0.0 {
            continue;
        }
        let partner = (0..n)
            .filter(|&j| j != i && !used[j])
            .min_by(|&x, &y| (ev[x] - ev[i].conj()).norm().total_cmp(&(ev[y] - ev[i].conj()).norm()));
        if let Some(j) = partner {
            let re = 0.5 * (ev[i].re + ev[j].re);
            let im = 0.5 * (ev[i].im.abs() + ev[j].im.abs());
            ev[i] = C64::new(re, im);
            ev[j] = C64::new(re, -im);
            used[i] = true;
            used[j] = true;
        }
    }
    ev.sort_by(cmp_modes);

    let scale = a.norm();
    let tol = 1e-10 * scale.max(1.0);
    let ac = a.map(|v| C64::new(v, 0.0));
    let at = ac.transpose();
    let mut right: Vec<DVector<C64>> = Vec::with_capacity(n);
    let mut left: Vec<DVector<C64>> = Vec::with_capacity(n);
    let mut degenerate = Vec::new();
    for (k, &lambda) in ev.iter().enumerate() {
        // The second member of a conjugate pair reuses the first's vectors.
        if k > 0 && lambda.im < 0.0 && ev[k - 1] == lambda.conj() {
            let r = right[k - 1].map(|z| z.conj());
            let l = left[k - 1].map(|z| z.conj());
            if degenerate.contains(&(k - 1)) {
                degenerate.push(k);
            }
            right.push(r);
            left.push(l);
            continue;
        }
        let v = inverse_iteration(&ac, lambda, tol);
        let w = inverse_iteration(&at, lambda, tol);
        let dot = w.transpose() * &v;
        let dot = dot[(0, 0)];
        // Eigenvalue condition numbers above 1e6 mark a (perturbed) Jordan block.
        if dot.norm() < 1e-6 * w.norm() * v.norm() {
            degenerate.push(k);
            right.push(v);
            left.push(w);
        } else {
            right.push(v);
            left.push(w / dot);
        }
    }
    Ok(SpectralReport {
        eigenvalues: ev,
        right,
        left,
        degenerate,
        source,
        scale,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rightmost {
    pub index: usize,
    pub value: C64,
    pub right: DVector<C64>,
    pub left: DVector<C64>,
}

/// Eigenvalue with the largest real part; ties go to the smaller |imag|
/// and then to the smaller index.
pub fn rightmost_eigenvalue(report: &SpectralReport) -> Option<Rightmost> {
    let mut best: Option<usize> = None;
    for (k, z) in report.eigenvalues.iter().enumerate() {
        best = match best {
            None => Some(k),
            Some(b) => {
                let zb = report.eigenvalues[b];
                if z.re > zb.re || (z.re == zb.re && z.im.abs() < zb.im.abs()) {
                    Some(k)
                } else {
                    Some(b)
                }
            }
        };
    }
    best.map(|k| Rightmost {
        index: k,
        value: report.eigenvalues[k],
        right: report.right[k].clone(),
        left: report.left[k].clone(),
    })
}

/// p_ki = |l_ki r_ki|, each mode column scaled to unit maximum. Columns of
/// degenerate modes are left at zero.
pub fn participation_factors(report: &SpectralReport) -> DMatrix<f64> {
    let n = report.eigenvalues.len();
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        if report.degenerate.contains(&i) {
            continue;
        }
        for k in 0..n {
            p[(k, i)] = (report.left[i][k] * report.right[i][k]).norm();
        }
        let mx = p.column(i).max();
        if mx > 0.0 {
            p.column_mut(i).scale_mut(1.0 / mx);
        }
    }
    p
}

/// Largest eigen residual ‖Av − λv‖ relative to ‖A‖ over all modes.
pub fn max_residual(a: &DMatrix<f64>, report: &SpectralReport) -> f64 {
    let ac = a.map(|v| C64::new(v, 0.0));
    let scale = report.scale.max(f64::MIN_POSITIVE);
    report
        .eigenvalues
        .iter()
        .zip(&report.right)
        .map(|(l, v)| (&ac * v - v * *l).norm() / scale)
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance between two finite point sets in the plane.
pub fn hausdorff_distance(a: &[C64], b: &[C64]) -> f64 {
    let directed = |x: &[C64], y: &[C64]| {
        x.iter()
            .map(|p| y.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    directed(a, b).max(directed(b, a))
}

/// Greedy nearest-neighbour pairing: repeatedly takes the closest remaining
/// (a, b) pair. Returns (index in a, index in b, distance).
pub fn greedy_match(a: &[C64], b: &[C64]) -> Vec<(usize, usize, f64)> {
    let mut pairs: Vec<(usize, usize, f64)> = a
        .iter()
        .enumerate()
        .flat_map(|(i, p)| b.iter().enumerate().map(move |(j, q)| (i, j, (p - q).norm())))
        .collect();
    pairs.sort_by(|x, y| x.2.total_cmp(&y.2).then(x.0.cmp(&y.0)).then(x.1.cmp(&y.1)));
    let mut ua = vec![false; a.len()];
    let mut ub = vec![false; b.len()];
    let mut out = Vec::new();
    for (i, j, d) in pairs {
        if !ua[i] && !ub[j] {
            ua[i] = true;
            ub[j] = true;
            out.push((i, j, d));
        }
    }
    out.sort_by_key(|p| p.0);
    out
}

pub fn spectrum_csv(reports: &[&SpectralReport]) -> String {
    let mut s = String::from("re,im,source\n");
    for r in reports {
        for z in &r.eigenvalues {
            s.push_str(&format!("{},{},{}\n", z.re, z.im, r.source.tag()));
        }
    }
    s
}
