//! Engineering system net: an elementary Petri net whose places are
//! (operand, buffer) pairs and whose transitions are capabilities.
//!
//! State transition, with firing vectors `u⁻`, `u⁺` and step `dt`:
//!
//! ```text
//! q_b' = q_b + M⁺·u⁺·dt − M⁻·u⁻·dt
//! q_e' = q_e − u⁺·dt + u⁻·dt
//! ```
//!
//! When capabilities complete instantaneously (`u⁻ = u⁺ = u`) this reduces
//! to `q_b' = q_b + M·u·dt` with `q_e` constant, and partitioning the places
//! into products `Y` and aspects `E` gives the steady-state solve
//! `ΔE = B·A⁻¹·ΔY`.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::hfgt::{
    build_hfit, matricize_tensor, HfgtError, PartitionedMatrix,
    Place, Sign,
};
use crate::linalg::{LinalgError, LuFactorization, Matrix};
use crate::model::SystemModel;

/// Default simulation step, hours.
pub const DEFAULT_DT: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("{what}: expected length {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("time step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("firing vector {what}[{step}] has a negative or non-finite entry")]
    InvalidFiring { what: &'static str, step: usize },
    #[error("instantaneous mode requires u⁻ = u⁺, which differ at step {0}")]
    NotInstantaneous(usize),
    #[error("steady-state solve failed: {0}")]
    Solve(#[from] LinalgError),
    #[error(transparent)]
    Hfgt(#[from] HfgtError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Marking {
    pub q_b: Vec<f64>,
    pub q_e: Vec<f64>,
}

impl Marking {
    pub fn zeros(places: usize, transitions: usize) -> Self {
        Marking {
            q_b: vec![0.0; places],
            q_e: vec![0.0; transitions],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FiringMode {
    /// Separate input and output firings (full transition function).
    Stepped,
    /// `u⁻ = u⁺`; transitions complete within the step.
    Instantaneous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiringSchedule {
    pub u_minus: Vec<Vec<f64>>,
    pub u_plus: Vec<Vec<f64>>,
    pub dt: f64,
}

impl FiringSchedule {
    pub fn new(u_minus: Vec<Vec<f64>>, u_plus: Vec<Vec<f64>>, dt: f64) -> Result<Self, SimError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SimError::InvalidStep(dt));
        }
        if u_minus.len() != u_plus.len() {
            return Err(SimError::Dimension {
                what: "schedule length",
                expected: u_minus.len(),
                found: u_plus.len(),
            });
        }
        for (what, vs) in [("u_minus", &u_minus), ("u_plus", &u_plus)] {
            for (k, v) in vs.iter().enumerate() {
                if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(SimError::InvalidFiring { what, step: k });
                }
            }
        }
        Ok(FiringSchedule { u_minus, u_plus, dt })
    }

    /// Same firing vector for input and output at every step.
    pub fn instantaneous(u: Vec<Vec<f64>>, dt: f64) -> Result<Self, SimError> {
        Self::new(u.clone(), u, dt)
    }

    pub fn len(&self) -> usize {
        self.u_minus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u_minus.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineeringSystemNet {
    pub places: Vec<Place>,
    pub transitions: Vec<String>,
    pub m_plus: Matrix,
    pub m_minus: Matrix,
    /// `M⁺ − M⁻`
    pub incidence: Matrix,
}

impl EngineeringSystemNet {
    pub fn new(
        places: Vec<Place>,
        transitions: Vec<String>,
        m_plus: Matrix,
        m_minus: Matrix,
    ) -> Result<Self, SimError> {
        for (what, m) in [("M⁺", &m_plus), ("M⁻", &m_minus)] {
            if m.rows() != places.len() {
                return Err(SimError::Dimension {
                    what,
                    expected: places.len(),
                    found: m.rows(),
                });
            }
            if m.cols() != transitions.len() {
                return Err(SimError::Dimension {
                    what,
                    expected: transitions.len(),
                    found: m.cols(),
                });
            }
        }
        let mut incidence = m_plus.clone();
        for i in 0..incidence.rows() {
            for j in 0..incidence.cols() {
                incidence[(i, j)] = m_plus[(i, j)] - m_minus[(i, j)];
            }
        }
        Ok(EngineeringSystemNet {
            places,
            transitions,
            m_plus,
            m_minus,
            incidence,
        })
    }

    /// Net of a model. With `reduced`, places that no capability touches are
    /// dropped; otherwise every (operand, buffer) pair is a place.
    pub fn from_model(model: &SystemModel, reduced: bool) -> Result<Self, SimError> {
        let neg = build_hfit(model, Sign::Negative)?;
        let pos = build_hfit(model, Sign::Positive)?;
        let plus = matricize_tensor(&pos);
        let minus = matricize_tensor(&neg);
        let keep: Vec<usize> = if reduced {
            (0..plus.values.rows())
                .filter(|&i| !plus.values.is_row_zero(i) || !minus.values.is_row_zero(i))
                .collect()
        } else {
            (0..plus.values.rows()).collect()
        };
        Self::new(
            keep.iter().map(|&i| plus.row_map[i].clone()).collect(),
            plus.col_map.clone(),
            plus.values.select_rows(&keep),
            minus.values.select_rows(&keep),
        )
    }

    /// Net whose incidence is `[A; B]`, with `M⁺`/`M⁻` the positive and
    /// negative parts.
    pub fn from_partition(part: &PartitionedMatrix) -> Result<Self, SimError> {
        let mut stacked = part.a.clone();
        for i in 0..part.b.rows() {
            stacked.push_row(part.b.row(i));
        }
        let mut plus = stacked.clone();
        let mut minus = stacked.clone();
        for i in 0..stacked.rows() {
            for j in 0..stacked.cols() {
                let v = stacked[(i, j)];
                plus[(i, j)] = v.max(0.0);
                minus[(i, j)] = (-v).max(0.0);
            }
        }
        let places = part
            .product_places
            .iter()
            .chain(&part.aspect_places)
            .cloned()
            .collect();
        Self::new(places, part.col_map.clone(), plus, minus)
    }

    pub fn place_count(&self) -> usize {
        self.places.len()
    }

    pub fn transition_count(&self) -> usize {
        self.transitions.len()
    }

    pub fn place_index(&self, place: &Place) -> Option<usize> {
        self.places.iter().position(|p| p == place)
    }

    pub fn transition_index(&self, id: &str) -> Option<usize> {
        self.transitions.iter().position(|t| t == id)
    }

    pub fn initial_marking(&self) -> Marking {
        Marking::zeros(self.place_count(), self.transition_count())
    }

    fn check_marking(&self, m: &Marking) -> Result<(), SimError> {
        dim("q_b", self.place_count(), m.q_b.len())?;
        dim("q_e", self.transition_count(), m.q_e.len())
    }

    /// One application of the full transition function. Firing vectors are
    /// not sign-checked here, so the continuous relaxation (negative firing,
    /// i.e. a reversed process) can be evaluated.
    pub fn step(
        &self,
        marking: &Marking,
        u_minus: &[f64],
        u_plus: &[f64],
        dt: f64,
    ) -> Result<Marking, SimError> {
        self.check_marking(marking)?;
        dim("u_minus", self.transition_count(), u_minus.len())?;
        dim("u_plus", self.transition_count(), u_plus.len())?;
        let n = self.transition_count();
        let q_b = (0..self.place_count())
            .map(|i| {
                let mut acc = marking.q_b[i];
                for j in 0..n {
                    acc += self.m_plus[(i, j)] * (u_plus[j] * dt);
                    acc -= self.m_minus[(i, j)] * (u_minus[j] * dt);
                }
                acc
            })
            .collect();
        let q_e = (0..n)
            .map(|j| marking.q_e[j] - u_plus[j] * dt + u_minus[j] * dt)
            .collect();
        Ok(Marking { q_b, q_e })
    }

    /// Instantaneous update `q_b' = q_b + M·u·dt`; `q_e` is unchanged.
    ///
    /// For a pure net (no capability both pulls and injects the same place)
    /// this is bit-identical to [`step`](Self::step) with `u⁻ = u⁺ = u`.
    pub fn fire_instantaneous(
        &self,
        marking: &Marking,
        u: &[f64],
        dt: f64,
    ) -> Result<Marking, SimError> {
        self.check_marking(marking)?;
        dim("u", self.transition_count(), u.len())?;
        let n = self.transition_count();
        let q_b = (0..self.place_count())
            .map(|i| {
                let mut acc = marking.q_b[i];
                for j in 0..n {
                    acc += self.incidence[(i, j)] * (u[j] * dt);
                }
                acc
            })
            .collect();
        Ok(Marking {
            q_b,
            q_e: marking.q_e.clone(),
        })
    }

    /// Run a schedule from `initial`, returning `K + 1` markings.
    pub fn simulate(
        &self,
        initial: &Marking,
        schedule: &FiringSchedule,
        mode: FiringMode,
    ) -> Result<Vec<Marking>, SimError> {
        self.check_marking(initial)?;
        let mut out = Vec::with_capacity(schedule.len() + 1);
        out.push(initial.clone());
        for k in 0..schedule.len() {
            let (um, up) = (&schedule.u_minus[k], &schedule.u_plus[k]);
            let prev = out.last().expect("trajectory starts non-empty");
            let next = match mode {
                FiringMode::Stepped => self.step(prev, um, up, schedule.dt)?,
                FiringMode::Instantaneous => {
                    if um != up {
                        return Err(SimError::NotInstantaneous(k));
                    }
                    self.fire_instantaneous(prev, um, schedule.dt)?
                }
            };
            out.push(next);
        }
        Ok(out)
    }

    /// CSV rows `step,place,value` for the place markings of a trajectory.
    pub fn write_trajectory_csv<W: Write>(
        &self,
        trajectory: &[Marking],
        writer: W,
    ) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["step", "place", "value"])?;
        for (k, m) in trajectory.iter().enumerate() {
            for (place, v) in self.places.iter().zip(&m.q_b) {
                w.write_record([k.to_string(), place.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn trajectory_json(&self, trajectory: &[Marking]) -> serde_json::Value {
        serde_json::json!({
            "places": self.places.iter().map(|p| p.to_string()).collect::<Vec<_>>(),
            "transitions": self.transitions,
            "markings": trajectory,
        })
    }
}

fn dim(what: &'static str, expected: usize, found: usize) -> Result<(), SimError> {
    if expected != found {
        return Err(SimError::Dimension {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

/// Result of the steady-state solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LcaSolution {
    /// Implied firing vector `x = A⁻¹ΔY`.
    pub firing: Vec<f64>,
    /// `ΔE = B·x`
    pub delta_e: Vec<f64>,
    pub condition: f64,
    /// Transitions with negative implied firing (reversed processes).
    pub negative_firings: Vec<usize>,
}

/// `ΔE = B·A⁻¹·ΔY`.
pub fn steady_state_lca(part: &PartitionedMatrix, delta_y: &[f64]) -> Result<LcaSolution, SimError> {
    dim("delta_y", part.a.rows(), delta_y.len())?;
    let lu = LuFactorization::new(&part.a)?;
    let firing = lu.solve(delta_y)?;
    let delta_e = part.b.mul_vec(&firing)?;
    let negative_firings = firing
        .iter()
        .enumerate()
        .filter(|(_, &x)| x < 0.0)
        .map(|(j, _)| j)
        .collect();
    Ok(LcaSolution {
        firing,
        delta_e,
        condition: lu.condition(),
        negative_firings,
    })
}

/// Forward-simulate `solution.firing` for one unit step on the net `[A; B]`
/// and compare the marking change with `[ΔY; ΔE]` (max-abs).
pub fn verify_lca_solution(
    part: &PartitionedMatrix,
    delta_y: &[f64],
    solution: &LcaSolution,
    tol: f64,
) -> Result<bool, SimError> {
    let net = EngineeringSystemNet::from_partition(part)?;
    let start = net.initial_marking();
    let end = net.step(&start, &solution.firing, &solution.firing, DEFAULT_DT)?;
    let expected = delta_y.iter().chain(&solution.delta_e);
    if end.q_b.len() != delta_y.len() + solution.delta_e.len() {
        return Ok(false);
    }
    Ok(end
        .q_b
        .iter()
        .zip(&start.q_b)
        .zip(expected)
        .all(|((after, before), want)| ((after - before) - want).abs() <= tol))
}

/// Solve, then check the solution against a forward simulation.
pub fn lca_consistency_check(
    part: &PartitionedMatrix,
    delta_y: &[f64],
    tol: f64,
) -> Result<bool, SimError> {
    let solution = steady_state_lca(part, delta_y)?;
    verify_lca_solution(part, delta_y, &solution, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hfgt::{eliminate_zero_rows, matricize, partition, reduced_incidence};

    fn toy_part() -> PartitionedMatrix {
        PartitionedMatrix::from_blocks(
            // rows: electricity, hydrogen; columns: generator, electrolyzer
            Matrix::from_rows(&[vec![1.0, -1.0], vec![0.0, 1.0]]),
            Matrix::from_rows(&[vec![0.5, 0.0]]),
        )
        .unwrap()
    }

    #[test]
    fn zero_firing_leaves_marking() {
        let net = EngineeringSystemNet::from_model(&SystemModel::australia_h2(), true).unwrap();
        let mut m0 = net.initial_marking();
        m0.q_b[3] = 7.0;
        m0.q_e[2] = 1.5;
        let z = vec![0.0; net.transition_count()];
        assert_eq!(net.step(&m0, &z, &z, 1.0).unwrap(), m0);
    }

    #[test]
    fn single_transition_arithmetic() {
        let net = EngineeringSystemNet::new(
            vec![Place::new("p", "b")],
            vec!["t".into()],
            Matrix::from_rows(&[vec![1.0]]),
            Matrix::from_rows(&[vec![2.0]]),
        )
        .unwrap();
        let m0 = Marking {
            q_b: vec![10.0],
            q_e: vec![0.0],
        };
        let m1 = net.step(&m0, &[1.0], &[1.0], 1.0).unwrap();
        assert_eq!(m1.q_b, vec![9.0]);
        assert_eq!(m1.q_e, vec![0.0]);
    }

    #[test]
    fn electrolyzer_fires_once() {
        let model = SystemModel::australia_h2();
        let net = EngineeringSystemNet::from_model(&model, true).unwrap();
        let col = net.transition_index("pem_electrolysis").unwrap();
        let mut u = vec![0.0; net.transition_count()];
        u[col] = 1.0;
        let m0 = net.initial_marking();
        let m1 = net.step(&m0, &u, &u, 1.0).unwrap();
        let at = |o: &str, b: &str| m1.q_b[net.place_index(&Place::new(o, b)).unwrap()];
        assert_eq!(at("hydrogen", "electrolyzer"), 1.0);
        assert_eq!(at("electricity", "electrolyzer"), -52.5);
        assert_eq!(at("oxygen", "electrolyzer"), 8.0);
        let moved = m1.q_b.iter().filter(|v| **v != 0.0).count();
        assert_eq!(moved, 3);
    }

    #[test]
    fn day_of_electrolysis() {
        let model = SystemModel::australia_h2();
        let net = EngineeringSystemNet::from_model(&model, false).unwrap();
        assert_eq!(net.place_count(), 14 * 11);
        let col = net.transition_index("pem_electrolysis").unwrap();
        let mut u = vec![0.0; net.transition_count()];
        u[col] = 20.0;
        let sched = FiringSchedule::instantaneous(vec![u; 24], 1.0).unwrap();
        let traj = net
            .simulate(&net.initial_marking(), &sched, FiringMode::Instantaneous)
            .unwrap();
        assert_eq!(traj.len(), 25);
        let h2 = net.place_index(&Place::new("hydrogen", "electrolyzer")).unwrap();
        // oracle: sum the 24 single-step increments
        let gained: f64 = traj.windows(2).map(|w| w[1].q_b[h2] - w[0].q_b[h2]).sum();
        assert_eq!(gained, 480.0);
        assert_eq!(traj[24].q_b[h2], 480.0);
    }

    #[test]
    fn zero_schedule_is_constant() {
        let net = EngineeringSystemNet::from_partition(&toy_part()).unwrap();
        let sched = FiringSchedule::instantaneous(vec![vec![0.0, 0.0]; 2], 1.0).unwrap();
        let traj = net
            .simulate(&net.initial_marking(), &sched, FiringMode::Instantaneous)
            .unwrap();
        assert_eq!(traj.len(), 3);
        assert!(traj.iter().all(|m| *m == traj[0]));
    }

    #[test]
    fn delayed_output_shows_tokens_in_flight() {
        let net = EngineeringSystemNet::from_partition(&toy_part()).unwrap();
        let sched = FiringSchedule::new(
            vec![vec![1.0, 0.0], vec![0.0, 0.0]],
            vec![vec![0.0, 0.0], vec![1.0, 0.0]],
            1.0,
        )
        .unwrap();
        let traj = net
            .simulate(&net.initial_marking(), &sched, FiringMode::Stepped)
            .unwrap();
        assert_eq!(traj[1].q_e, vec![1.0, 0.0]);
        assert_eq!(traj[2].q_e, vec![0.0, 0.0]);
        assert!(matches!(
            net.simulate(&net.initial_marking(), &sched, FiringMode::Instantaneous),
            Err(SimError::NotInstantaneous(0))
        ));
    }

    #[test]
    fn schedule_validation() {
        assert!(matches!(
            FiringSchedule::instantaneous(vec![vec![1.0]], 0.0),
            Err(SimError::InvalidStep(_))
        ));
        assert!(matches!(
            FiringSchedule::instantaneous(vec![vec![-1.0]], 1.0),
            Err(SimError::InvalidFiring { .. })
        ));
        let net = EngineeringSystemNet::from_partition(&toy_part()).unwrap();
        let m = net.initial_marking();
        assert!(matches!(
            net.step(&m, &[1.0], &[1.0, 0.0], 1.0),
            Err(SimError::Dimension { what: "u_minus", .. })
        ));
    }

    #[test]
    fn toy_steady_state() {
        let part = toy_part();
        let sol = steady_state_lca(&part, &[0.0, 1.0]).unwrap();
        assert_eq!(sol.firing, vec![1.0, 1.0]);
        assert_eq!(sol.delta_e, vec![0.5]);
        assert!(sol.negative_firings.is_empty());
        let zero = steady_state_lca(&part, &[0.0, 0.0]).unwrap();
        assert_eq!(zero.delta_e, vec![0.0]);

        // brute force: fire x = (1, 1) once and read off the changes
        let net = EngineeringSystemNet::from_partition(&part).unwrap();
        let m1 = net
            .step(&net.initial_marking(), &[1.0, 1.0], &[1.0, 1.0], 1.0)
            .unwrap();
        assert_eq!(m1.q_b, vec![0.0, 1.0, 0.5]);
    }

    #[test]
    fn negative_firing_is_flagged() {
        let part = toy_part();
        let sol = steady_state_lca(&part, &[-1.0, -1.0]).unwrap();
        assert_eq!(sol.negative_firings, vec![0, 1]);
    }

    #[test]
    fn singular_a_is_reported() {
        let part = PartitionedMatrix::from_blocks(
            Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]),
            Matrix::from_rows(&[vec![1.0, 0.0]]),
        )
        .unwrap();
        let err = steady_state_lca(&part, &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, SimError::Solve(_)));
    }

    #[test]
    fn consistency_check() {
        let part = toy_part();
        assert!(lca_consistency_check(&part, &[0.3, 2.0], 1e-9).unwrap());
        let sol = steady_state_lca(&part, &[0.0, 1.0]).unwrap();
        let mut perturbed = part.clone();
        perturbed.b[(0, 0)] += 0.1;
        assert!(!verify_lca_solution(&perturbed, &[0.0, 1.0], &sol, 1e-9).unwrap());
    }

    #[test]
    fn australia_coal_only_kilogram() {
        let model = SystemModel::australia_h2();
        let aspects: Vec<&str> = model.metadata["lca.aspects"].split(',').map(str::trim).collect();
        let mut part = partition(&reduced_incidence(&model).unwrap(), &aspects).unwrap();
        // coal-only mix on the substation transform column
        let mix_col = part.col_of("substation_transform").unwrap();
        for (k, place) in part.product_places.clone().iter().enumerate() {
            if place.operand == "electricity" && place.buffer != "electrolyzer" {
                part.a[(k, mix_col)] = if place.buffer == "coal_plant" { -1.0 } else { 0.0 };
            }
        }
        let h2 = part.product_index(&Place::new("hydrogen", "electrolyzer")).unwrap();
        let co2 = part.aspect_index(&Place::new("co2", "substation")).unwrap();
        let mut dy = vec![0.0; 13];
        dy[h2] = 1.0;
        let sol = steady_state_lca(&part, &dy).unwrap();
        // 52.5 kWh at 820 g/kWh
        assert!((sol.delta_e[co2] * 1e-3 - 43.05).abs() < 1e-9);
        assert!(lca_consistency_check(&part, &dy, 1e-9).unwrap());
    }

    #[test]
    fn trajectory_exports() {
        let net = EngineeringSystemNet::from_partition(&toy_part()).unwrap();
        let sched = FiringSchedule::instantaneous(vec![vec![1.0, 1.0]], 1.0).unwrap();
        let traj = net
            .simulate(&net.initial_marking(), &sched, FiringMode::Instantaneous)
            .unwrap();
        let mut buf = Vec::new();
        net.write_trajectory_csv(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("step,place,value"));
        assert!(text.contains("1,e0 @ net,0.5"));
        assert_eq!(text.lines().count(), 1 + 2 * 3);
        let json = net.trajectory_json(&traj);
        assert_eq!(json["markings"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn reduced_net_matches_reduced_matrix() {
        let model = SystemModel::australia_h2();
        let net = EngineeringSystemNet::from_model(&model, true).unwrap();
        let r = reduced_incidence(&model).unwrap();
        assert_eq!(net.places, r.row_map);
        assert_eq!(net.incidence, r.values);
        let full = eliminate_zero_rows(
            &matricize(
                &build_hfit(&model, Sign::Negative).unwrap(),
                &build_hfit(&model, Sign::Positive).unwrap(),
            )
            .unwrap(),
        );
        assert_eq!(full, r);
    }
}
