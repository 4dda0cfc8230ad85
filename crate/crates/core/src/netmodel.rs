//! Network cases, admittance assembly and Kron reduction to generator
//! internal nodes.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inverse_with_condition, max_asymmetry, C64};

/// Condition number above which the eliminated block counts as singular.
pub const REDUCTION_MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    /// Solved voltage magnitude, p.u.
    pub vm: f64,
    /// Solved voltage angle, rad.
    pub va: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    #[serde(default)]
    pub b: f64,
    #[serde(default = "default_true")]
    pub in_service: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: usize,
    pub bus: usize,
    pub xd_prime: f64,
    pub m: f64,
    pub d: f64,
    pub pm: f64,
    /// Emf magnitude. Computed from the solved terminal conditions when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub bus: usize,
    pub p: f64,
    pub q: f64,
}

fn default_base() -> f64 {
    100.0
}

fn default_freq() -> f64 {
    60.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_base")]
    pub base_mva: f64,
    #[serde(default = "default_freq")]
    pub frequency_hz: f64,
    /// Generator id eliminated in the centre-of-inertia frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coi_dependent: Option<usize>,
    pub buses: Vec<Bus>,
    #[serde(default)]
    pub branches: Vec<Branch>,
    #[serde(default)]
    pub generators: Vec<Generator>,
    #[serde(default)]
    pub loads: Vec<Load>,
}

impl NetworkCase {
    /// Parses a case document. `origin` only labels error messages.
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let case: NetworkCase = toml::from_str(text).map_err(|e| crate::io::toml_error(text, origin, e))?;
        case.validate()?;
        Ok(case)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("case serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashMap::new();
        for (k, b) in self.buses.iter().enumerate() {
            if ids.insert(b.id, k).is_some() {
                return Err(Error::InvalidCase(format!("duplicate bus id {}", b.id)));
            }
            if !(b.vm > 0.0) || !b.va.is_finite() {
                return Err(Error::InvalidCase(format!(
                    "bus {} has nonpositive voltage magnitude",
                    b.id
                )));
            }
        }
        let mut branch_ids = HashMap::new();
        for br in &self.branches {
            if branch_ids.insert(br.id, ()).is_some() {
                return Err(Error::InvalidCase(format!("duplicate branch id {}", br.id)));
            }
            for end in [br.from, br.to] {
                if !ids.contains_key(&end) {
                    return Err(Error::InvalidCase(format!(
                        "branch {} references unknown bus {end}",
                        br.id
                    )));
                }
            }
        }
        let mut gen_ids = HashMap::new();
        for g in &self.generators {
            if gen_ids.insert(g.id, ()).is_some() {
                return Err(Error::InvalidCase(format!("duplicate generator id {}", g.id)));
            }
            if !ids.contains_key(&g.bus) {
                return Err(Error::InvalidCase(format!(
                    "generator {} sits on unknown bus {}",
                    g.id, g.bus
                )));
            }
            if !(g.m > 0.0) {
                return Err(Error::InvalidCase(format!("generator {} has M <= 0", g.id)));
            }
            if !(g.xd_prime > 0.0) {
                return Err(Error::InvalidCase(format!("generator {} has x'd <= 0", g.id)));
            }
            if !(g.d >= 0.0) {
                return Err(Error::InvalidCase(format!("generator {} has D < 0", g.id)));
            }
        }
        for l in &self.loads {
            if !ids.contains_key(&l.bus) {
                return Err(Error::InvalidCase(format!("load on unknown bus {}", l.bus)));
            }
        }
        if let Some(dep) = self.coi_dependent {
            if !gen_ids.contains_key(&dep) {
                return Err(Error::InvalidCase(format!(
                    "coi_dependent names unknown generator {dep}"
                )));
            }
        }
        Ok(())
    }

    fn bus_index(&self) -> HashMap<usize, usize> {
        self.buses.iter().enumerate().map(|(k, b)| (b.id, k)).collect()
    }

    pub fn voltage(&self, k: usize) -> C64 {
        C64::from_polar(self.buses[k].vm, self.buses[k].va)
    }

    pub fn in_service_count(&self) -> usize {
        self.branches.iter().filter(|b| b.in_service).count()
    }

    /// Branch id of the in-service line joining two buses (either direction).
    pub fn find_branch(&self, a: usize, b: usize) -> Result<usize> {
        self.branches
            .iter()
            .find(|br| (br.from == a && br.to == b) || (br.from == b && br.to == a))
            .map(|br| br.id)
            .ok_or_else(|| Error::BranchNotFound(format!("{a}-{b}")))
    }

    /// Resolves a branch reference: either a bare id ("7") or bus endpoints ("3-9").
    pub fn resolve_branch(&self, spec: &str) -> Result<usize> {
        let spec = spec.trim();
        if let Some((a, b)) = spec.split_once('-') {
            let a = a.trim().parse::<usize>();
            let b = b.trim().parse::<usize>();
            match (a, b) {
                (Ok(a), Ok(b)) => self.find_branch(a, b),
                _ => Err(Error::BranchNotFound(spec.to_string())),
            }
        } else {
            let id = spec
                .parse::<usize>()
                .map_err(|_| Error::BranchNotFound(spec.to_string()))?;
            if self.branches.iter().any(|b| b.id == id) {
                Ok(id)
            } else {
                Err(Error::BranchNotFound(spec.to_string()))
            }
        }
    }

    /// Index of the generator with the given id.
    pub fn generator_index(&self, id: usize) -> Option<usize> {
        self.generators.iter().position(|g| g.id == id)
    }
}

/// Bus admittance matrix, buses ordered as listed in the case.
pub fn build_ybus(case: &NetworkCase) -> Result<DMatrix<C64>> {
    let idx = case.bus_index();
    let n = case.buses.len();
    let mut y = DMatrix::<C64>::zeros(n, n);
    for br in case.branches.iter().filter(|b| b.in_service) {
        let z = C64::new(br.r, br.x);
        if z.norm() == 0.0 {
            return Err(Error::DegenerateBranch {
                id: br.id,
                from: br.from,
                to: br.to,
            });
        }
        let ys = z.inv();
        let half = C64::new(0.0, br.b / 2.0);
        let (f, t) = (idx[&br.from], idx[&br.to]);
        y[(f, f)] += ys + half;
        y[(t, t)] += ys + half;
        y[(f, t)] -= ys;
        y[(t, f)] -= ys;
    }
    Ok(y)
}

/// Adds constant-impedance loads and generator internal nodes. Internal
/// nodes are appended after the buses in generator order.
pub fn embed_loads_and_generators(ybus: &DMatrix<C64>, case: &NetworkCase) -> Result<DMatrix<C64>> {
    let nb = ybus.nrows();
    let ng = case.generators.len();
    let idx = case.bus_index();
    let mut y = DMatrix::<C64>::zeros(nb + ng, nb + ng);
    y.view_mut((0, 0), (nb, nb)).copy_from(ybus);
    for l in &case.loads {
        let k = idx[&l.bus];
        let vm2 = case.buses[k].vm.powi(2);
        if vm2 == 0.0 {
            return Err(Error::SingularLoad { bus: l.bus });
        }
        y[(k, k)] += C64::new(l.p, -l.q) / vm2;
    }
    for (g, gen) in case.generators.iter().enumerate() {
        let k = idx[&gen.bus];
        let yg = C64::new(0.0, gen.xd_prime).inv();
        let i = nb + g;
        y[(k, k)] += yg;
        y[(i, i)] += yg;
        y[(k, i)] -= yg;
        y[(i, k)] -= yg;
    }
    Ok(y)
}

/// Eliminates every node not in `retained`; the result is ordered as `retained`.
pub fn kron_reduce(y_full: &DMatrix<C64>, retained: &[usize]) -> Result<DMatrix<C64>> {
    let n = y_full.nrows();
    let scale = y_full.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let asym = max_asymmetry(y_full);
    if asym > 1e-10 * scale {
        return Err(Error::NonSymmetricAdmittance { asymmetry: asym });
    }
    let mut keep = vec![false; n];
    for &r in retained {
        if r >= n {
            return Err(Error::Dimension(format!("retained node {r} outside 0..{n}")));
        }
        keep[r] = true;
    }
    let elim: Vec<usize> = (0..n).filter(|&k| !keep[k]).collect();
    let pick = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| y_full[(rows[i], cols[j])])
    };
    let yrr = pick(retained, retained);
    if elim.is_empty() {
        return Ok(yrr);
    }
    let yee = pick(&elim, &elim);
    let (yee_inv, condition) =
        inverse_with_condition(&yee).ok_or(Error::ReductionSingular { condition: f64::INFINITY })?;
    if condition > REDUCTION_MAX_CONDITION {
        return Err(Error::ReductionSingular { condition });
    }
    let yre = pick(retained, &elim);
    let yer = pick(&elim, retained);
    Ok(yrr - yre * yee_inv * yer)
}

/// Emf behind transient reactance: E∠δ0 = V + j·x'd·conj(S/V).
pub fn compute_internal_emf(v: C64, s: C64, xd_prime: f64) -> (f64, f64) {
    let current = (s / v).conj();
    let e = v + C64::new(0.0, xd_prime) * current;
    (e.norm(), e.arg())
}

/// Copy of `case` with the listed branches switched out of service.
pub fn perturb_topology(case: &NetworkCase, branch_ids: &[usize]) -> Result<NetworkCase> {
    set_status(case, branch_ids, false)
}

/// Inverse of [`perturb_topology`].
pub fn restore_topology(case: &NetworkCase, branch_ids: &[usize]) -> Result<NetworkCase> {
    set_status(case, branch_ids, true)
}

fn set_status(case: &NetworkCase, branch_ids: &[usize], status: bool) -> Result<NetworkCase> {
    let mut out = case.clone();
    for &id in branch_ids {
        let br = out
            .branches
            .iter_mut()
            .find(|b| b.id == id)
            .ok_or_else(|| Error::BranchNotFound(id.to_string()))?;
        if br.in_service == status {
            return Err(Error::InvalidCase(format!(
                "branch {id} is already {}",
                if status { "in service" } else { "out of service" }
            )));
        }
        br.in_service = status;
    }
    Ok(out)
}

/// Admittance seen between generator internal nodes, with emf magnitudes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedNetwork {
    pub y: DMatrix<C64>,
    pub e: Vec<f64>,
}

impl ReducedNetwork {
    pub fn n(&self) -> usize {
        self.e.len()
    }

    pub fn g(&self, i: usize, j: usize) -> f64 {
        self.y[(i, j)].re
    }

    pub fn b(&self, i: usize, j: usize) -> f64 {
        self.y[(i, j)].im
    }
}

/// Reduced admittance of the case's current topology at the internal nodes.
pub fn reduced_admittance(case: &NetworkCase) -> Result<DMatrix<C64>> {
    let ybus = build_ybus(case)?;
    let full = embed_loads_and_generators(&ybus, case)?;
    let nb = case.buses.len();
    let retained: Vec<usize> = (nb..nb + case.generators.len()).collect();
    kron_reduce(&full, &retained)
}

/// Emf magnitudes and internal angles from the solved bus voltages.
///
/// Generator injection is the bus injection of the solved network plus the
/// local load; generators sharing a bus split it in proportion to `pm`.
pub fn internal_operating_point(case: &NetworkCase) -> Result<(Vec<f64>, Vec<f64>)> {
    let ybus = build_ybus(case)?;
    let idx = case.bus_index();
    let v = nalgebra::DVector::from_fn(case.buses.len(), |k, _| case.voltage(k));
    let i = &ybus * &v;
    let mut e = Vec::with_capacity(case.generators.len());
    let mut delta = Vec::with_capacity(case.generators.len());
    for gen in &case.generators {
        let k = idx[&gen.bus];
        let mut s = v[k] * i[k].conj();
        for l in case.loads.iter().filter(|l| l.bus == gen.bus) {
            s += C64::new(l.p, l.q);
        }
        let sharing: Vec<&Generator> =
            case.generators.iter().filter(|g| g.bus == gen.bus).collect();
        if sharing.len() > 1 {
            let total: f64 = sharing.iter().map(|g| g.pm).sum();
            let share = if total != 0.0 {
                gen.pm / total
            } else {
                1.0 / sharing.len() as f64
            };
            s *= share;
        }
        let (mag, ang) = compute_internal_emf(v[k], s, gen.xd_prime);
        e.push(gen.e.unwrap_or(mag));
        delta.push(ang);
    }
    Ok((e, delta))
}

/// Reduced network of the case with emfs computed from its operating point.
pub fn reduce_case(case: &NetworkCase) -> Result<ReducedNetwork> {
    let (e, _) = internal_operating_point(case)?;
    Ok(ReducedNetwork {
        y: reduced_admittance(case)?,
        e,
    })
}

/// Shipped cases.
pub mod cases {
    use super::NetworkCase;
    use std::path::Path;

    pub const WSCC9: &str = include_str!("../../../cases/wscc9.case");
    pub const IEEE39: &str = include_str!("../../../cases/ieee39.case");

    pub fn wscc9() -> NetworkCase {
        NetworkCase::from_toml_str(WSCC9, Path::new("wscc9.case")).expect("shipped case parses")
    }

    pub fn ieee39() -> NetworkCase {
        NetworkCase::from_toml_str(IEEE39, Path::new("ieee39.case")).expect("shipped case parses")
    }

    /// Looks up a shipped case by name.
    pub fn builtin(name: &str) -> Option<NetworkCase> {
        match name {
            "wscc9" => Some(wscc9()),
            "ieee39" => Some(ieee39()),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn two_bus(r: f64, x: f64) -> NetworkCase {
        NetworkCase {
            name: "two".into(),
            base_mva: 100.0,
            frequency_hz: 60.0,
            coi_dependent: None,
            buses: vec![
                Bus { id: 1, vm: 1.0, va: 0.0 },
                Bus { id: 2, vm: 1.0, va: 0.0 },
            ],
            branches: vec![Branch { id: 1, from: 1, to: 2, r, x, b: 0.0, in_service: true }],
            generators: vec![],
            loads: vec![],
        }
    }

    #[test]
    fn two_bus_admittance() {
        let y = build_ybus(&two_bus(0.0, 0.1)).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[c(0., -10.), c(0., 10.), c(0., 10.), c(0., -10.)]);
        assert!((y - expect).norm() < 1e-12);
    }

    #[test]
    fn empty_branch_list_gives_zero_matrix() {
        let mut case = two_bus(0.0, 0.1);
        case.branches.clear();
        assert_eq!(build_ybus(&case).unwrap().norm(), 0.0);
    }

    #[test]
    fn zero_impedance_branch_is_rejected() {
        assert!(matches!(
            build_ybus(&two_bus(0.0, 0.0)),
            Err(Error::DegenerateBranch { id: 1, .. })
        ));
    }

    #[test]
    fn out_of_service_branch_contributes_nothing() {
        let mut case = two_bus(0.0, 0.1);
        case.branches[0].in_service = false;
        assert_eq!(build_ybus(&case).unwrap().norm(), 0.0);
    }

    // Y = A^T diag(y) A + diag(shunt), built from the incidence matrix.
    #[test]
    fn wscc9_ybus_matches_incidence_assembly() {
        let case = cases::wscc9();
        let y = build_ybus(&case).unwrap();
        let idx = case.bus_index();
        let nb = case.buses.len();
        let nl = case.branches.len();
        let mut a = DMatrix::<C64>::zeros(nl, nb);
        let mut yl = DMatrix::<C64>::zeros(nl, nl);
        let mut shunt = DMatrix::<C64>::zeros(nb, nb);
        for (l, br) in case.branches.iter().enumerate() {
            a[(l, idx[&br.from])] = c(1.0, 0.0);
            a[(l, idx[&br.to])] = c(-1.0, 0.0);
            yl[(l, l)] = c(1.0, 0.0) / c(br.r, br.x);
            shunt[(idx[&br.from], idx[&br.from])] += c(0.0, br.b / 2.0);
            shunt[(idx[&br.to], idx[&br.to])] += c(0.0, br.b / 2.0);
        }
        let oracle = a.transpose() * yl * a + shunt;
        for (p, q) in y.iter().zip(oracle.iter()) {
            assert!((p - q).norm() < 1e-12);
        }
    }

    #[test]
    fn unit_load_adds_unit_conductance() {
        let mut case = two_bus(0.0, 0.1);
        case.loads.push(Load { bus: 2, p: 1.0, q: 0.0 });
        let y0 = build_ybus(&case).unwrap();
        let y = embed_loads_and_generators(&y0, &case).unwrap();
        assert!((y[(1, 1)] - y0[(1, 1)] - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn embedding_nothing_is_identity() {
        let case = two_bus(0.01, 0.1);
        let y0 = build_ybus(&case).unwrap();
        assert_eq!(embed_loads_and_generators(&y0, &case).unwrap(), y0);
    }

    #[test]
    fn load_on_dead_bus_is_rejected() {
        let mut case = two_bus(0.0, 0.1);
        case.buses[1].vm = 0.0;
        case.loads.push(Load { bus: 2, p: 1.0, q: 0.0 });
        let y0 = build_ybus(&case).unwrap();
        assert!(matches!(
            embed_loads_and_generators(&y0, &case),
            Err(Error::SingularLoad { bus: 2 })
        ));
    }

    #[test]
    fn wscc9_added_conductance_matches_load_sum() {
        let case = cases::wscc9();
        let y0 = build_ybus(&case).unwrap();
        let y = embed_loads_and_generators(&y0, &case).unwrap();
        let nb = case.buses.len();
        let added: f64 = (0..nb).map(|k| y[(k, k)].re - y0[(k, k)].re).sum();
        let idx = case.bus_index();
        let expect: f64 = case
            .loads
            .iter()
            .map(|l| l.p / case.buses[idx[&l.bus]].vm.powi(2))
            .sum();
        assert!((added - expect).abs() < 1e-12);
        assert_eq!(y.nrows(), nb + case.generators.len());
    }

    #[test]
    fn star_reduces_to_delta() {
        let one = c(1.0, 0.0);
        let mut y = DMatrix::<C64>::zeros(4, 4);
        for k in 0..3 {
            y[(k, k)] += one;
            y[(3, 3)] += one;
            y[(k, 3)] -= one;
            y[(3, k)] -= one;
        }
        let r = kron_reduce(&y, &[0, 1, 2]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 2.0 / 3.0 } else { -1.0 / 3.0 };
                assert!((r[(i, j)] - c(expect, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn retaining_everything_is_identity() {
        let case = cases::wscc9();
        let y = build_ybus(&case).unwrap();
        let all: Vec<usize> = (0..y.nrows()).collect();
        assert_eq!(kron_reduce(&y, &all).unwrap(), y);
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let mut y = DMatrix::<C64>::identity(3, 3);
        y[(0, 1)] = c(0.5, 0.0);
        assert!(matches!(
            kron_reduce(&y, &[0]),
            Err(Error::NonSymmetricAdmittance { .. })
        ));
    }

    #[test]
    fn singular_eliminated_block_is_rejected() {
        let one = c(1.0, 0.0);
        let mut y = DMatrix::<C64>::zeros(3, 3);
        y[(0, 0)] = one;
        assert!(matches!(
            kron_reduce(&y, &[0]),
            Err(Error::ReductionSingular { .. })
        ));
    }

    fn eliminate_one_at_a_time(y: &DMatrix<C64>, keep: usize) -> DMatrix<C64> {
        let mut y = y.clone();
        while y.nrows() > keep {
            let p = 0;
            let n = y.nrows();
            let piv = y[(p, p)];
            let next = DMatrix::from_fn(n - 1, n - 1, |i, j| {
                let (i, j) = (i + 1, j + 1);
                y[(i, j)] - y[(i, p)] * y[(p, j)] / piv
            });
            y = next;
        }
        y
    }

    #[test]
    fn wscc9_reduction_matches_sequential_elimination() {
        let case = cases::wscc9();
        let full = embed_loads_and_generators(&build_ybus(&case).unwrap(), &case).unwrap();
        let nb = case.buses.len();
        let retained: Vec<usize> = (nb..nb + 3).collect();
        let red = kron_reduce(&full, &retained).unwrap();
        let oracle = eliminate_one_at_a_time(&full, 3);
        for (p, q) in red.iter().zip(oracle.iter()) {
            assert!((p - q).norm() < 1e-10);
        }
        assert!(max_asymmetry(&red) < 1e-12);
        for k in 0..3 {
            assert!(red[(k, k)].re > 0.0);
        }
    }

    #[test]
    fn emf_without_current_is_terminal_voltage() {
        let v = C64::from_polar(1.02, 0.3);
        let (e, d) = compute_internal_emf(v, c(0.0, 0.0), 0.2);
        assert!((e - 1.02).abs() < 1e-15);
        assert!((d - 0.3).abs() < 1e-15);
    }

    #[test]
    fn emf_hand_example() {
        let (e, d) = compute_internal_emf(c(1.0, 0.0), c(1.0, 0.0), 0.1);
        assert!((e - 1.01_f64.sqrt()).abs() < 1e-12);
        assert!((d - 0.1_f64.atan()).abs() < 1e-12);
        assert!((e - 1.00499).abs() < 1e-5);
        assert!((d - 0.0997).abs() < 1e-4);
    }

    #[test]
    fn wscc9_emfs() {
        let (e, _) = internal_operating_point(&cases::wscc9()).unwrap();
        for (got, want) in e.iter().zip([1.057, 1.050, 1.017]) {
            assert!((got - want).abs() < 1e-3, "{got} vs {want}");
        }
    }

    #[test]
    fn trip_and_restore_round_trips() {
        let case = cases::wscc9();
        let id = case.resolve_branch("3-9").unwrap();
        let tripped = perturb_topology(&case, &[id]).unwrap();
        assert_eq!(tripped.in_service_count(), case.in_service_count() - 1);
        assert!(case.branches.iter().all(|b| b.in_service));
        assert_eq!(restore_topology(&tripped, &[id]).unwrap(), case);
    }

    #[test]
    fn unknown_branch_is_not_found() {
        let case = cases::wscc9();
        assert!(matches!(perturb_topology(&case, &[99]), Err(Error::BranchNotFound(_))));
        assert!(matches!(case.resolve_branch("1-9"), Err(Error::BranchNotFound(_))));
    }

    #[test]
    fn ieee39_double_trip_removes_two_branches() {
        let case = cases::ieee39();
        let ids = [case.resolve_branch("1-2").unwrap(), case.resolve_branch("2-25").unwrap()];
        let tripped = perturb_topology(&case, &ids).unwrap();
        assert_eq!(tripped.in_service_count() + 2, case.in_service_count());
        assert_eq!(reduce_case(&tripped).unwrap().n(), 10);
    }

    #[test]
    fn parse_error_reports_line() {
        let text = "name = \"x\"\n[[buses]]\nid = 1\nvm = \"high\"\nva = 0.0\n";
        match NetworkCase::from_toml_str(text, Path::new("bad.case")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_inertia_is_rejected() {
        let mut case = cases::wscc9();
        case.generators[0].m = 0.0;
        assert!(matches!(case.validate(), Err(Error::InvalidCase(_))));
    }

    #[test]
    fn case_round_trips_through_text() {
        let case = cases::ieee39();
        let text = case.to_toml_string();
        assert_eq!(NetworkCase::from_toml_str(&text, Path::new("x")).unwrap(), case);
    }
}
