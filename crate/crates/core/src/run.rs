//! Trajectory driver: steps the solver to `t_end`, co-advects the tangential
//! family and the interface markers with the same step, and emits a
//! [`DiagnosticsRecord`] at the configured cadence.
//!
//! The time integrals of the diagnostics accumulate every step; the record
//! cadence only controls output.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    flow_fields, flow_sample_from, grad_decomposition, momentum_residual_hm1, lipschitz_and_blowup_monitor, log_riesz_terms,
    ContinuationReport, ContinuationSample, FlowSample, Tracker,
};
use crate::error::{Error, Result};
use crate::patch::{advect_markers, build_tangential_family, interface_regularity, tangency_error, MarkerCurve};
use crate::record::DiagnosticsRecord;
use crate::scenario::RunConfig;
use crate::solver::{CflLimit, Solver, StepReport};
use crate::state::FluidState;
use crate::striated::{
    a3, div_product, div_rho_x_conservation, i_lower_bound_check, transport_family_between, DivergenceReport,
    DivergenceSample, LowerBoundReport, LowerBoundSample, Smoothness, VectorFieldFamily,
};
use crate::thermo::HlSample;

/// Sample times closer than this fraction of a step count as reached.
const TIME_SLACK: f64 = 1e-9;

/// Everything besides the fields that a resumed run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bookkeeping {
    pub steps: u64,
    pub records: u64,
    pub tracker: Tracker,
    pub next_record: Option<f64>,
    pub next_snapshot: Option<f64>,
    /// `||rho_0 - rho_tilde||_inf`
    pub rho_deviation0: f64,
    /// Largest density seen.
    pub rho_star: f64,
    /// `max rho_0`, which fixes the pressure law's operating range.
    pub rho0_max: f64,
    pub max_dealias_removed: f64,
    pub solver_iterations: u64,
    pub lower_bound: Vec<LowerBoundSample>,
    pub divergence: Vec<DivergenceSample>,
    pub continuation: Vec<ContinuationSample>,
    /// One history per configured `H_l` order.
    pub h_l: Vec<Vec<HlSample>>,
}

pub enum Event<'a> {
    Record {
        record: &'a DiagnosticsRecord,
        trajectory: &'a Trajectory,
    },
    /// Snapshot cadence reached; the trajectory is at a consistent point.
    Snapshot(&'a Trajectory),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub t: f64,
    pub steps: u64,
    pub records: u64,
    pub energy: Option<crate::diagnostics::EnergyParts>,
    pub a1: Option<f64>,
    pub max_dealias_removed: f64,
    pub solver_iterations: u64,
    pub lower_bound: Option<LowerBoundReport>,
    pub divergence: Option<DivergenceReport>,
    pub continuation: Option<ContinuationReport>,
}

pub struct Trajectory {
    solver: Solver,
    cfg: RunConfig,
    pub state: FluidState,
    pub family: Option<VectorFieldFamily>,
    pub markers: Option<MarkerCurve>,
    pub book: Bookkeeping,
}

impl Trajectory {
    pub fn start(cfg: &RunConfig) -> Result<Self> {
        let state = cfg.initial_state()?;
        let (family, markers) = match cfg.initial.patch() {
            Some(p) => {
                let grid = state.grid();
                (
                    Some(build_tangential_family(p, &grid, cfg.simulation.striated_p)?),
                    Some(MarkerCurve::for_grid(&p.boundary, &grid)?),
                )
            }
            None => (None, None),
        };
        let rt = cfg.simulation.rho_tilde;
        let book = Bookkeeping {
            steps: 0,
            records: 0,
            tracker: Tracker::new(),
            next_record: Some(0.0),
            next_snapshot: cfg.simulation.snapshot_interval.map(|_| 0.0),
            rho_deviation0: state.rho.map(|r| r - rt).linf(),
            rho_star: state.rho.max(),
            rho0_max: state.rho.max(),
            max_dealias_removed: 0.0,
            solver_iterations: 0,
            lower_bound: Vec::new(),
            divergence: Vec::new(),
            continuation: Vec::new(),
            h_l: vec![Vec::new(); cfg.simulation.h_l_orders.len()],
        };
        Self::resume(cfg, state, family, markers, book)
    }

    /// Rebuilds a trajectory from saved parts; a fresh one has an empty tracker.
    pub fn resume(
        cfg: &RunConfig,
        state: FluidState,
        family: Option<VectorFieldFamily>,
        markers: Option<MarkerCurve>,
        mut book: Bookkeeping,
    ) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.simulation.grid.build()?;
        if state.grid() != grid || family.as_ref().is_some_and(|f| f.grid() != grid) {
            return Err(Error::Shape("trajectory parts do not share the configured grid".into()));
        }
        state.validate()?;
        let law = cfg.simulation.pressure_law(book.rho0_max)?;
        let solver = Solver::new(cfg.simulation.clone(), law)?;
        if book.tracker.last.is_none() {
            let fields = flow_fields(&solver, &state)?;
            book.tracker.push(flow_sample_from(&solver, &state, &fields)?);
        }
        Ok(Self {
            solver,
            cfg: cfg.clone(),
            state,
            family,
            markers,
            book,
        })
    }

    pub fn solver(&self) -> &Solver {
        &self.solver
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    fn t_end(&self) -> f64 {
        self.cfg.simulation.t_end
    }

    /// Time the next step must not overshoot.
    fn next_stop(&self) -> f64 {
        [self.book.next_record, self.book.next_snapshot]
            .into_iter()
            .flatten()
            .filter(|&s| s > self.state.t)
            .fold(self.t_end(), f64::min)
    }

    fn reached(&self, target: Option<f64>, dt: f64) -> bool {
        target.is_some_and(|s| self.state.t >= s - TIME_SLACK * dt.max(1e-300))
    }

    /// Next mark after the current time; `None` once `t_end` is reached.
    /// Without an interval the mark is the current time, which the next step passes.
    fn advance_mark(&self, mark: f64, interval: Option<f64>) -> Option<f64> {
        if self.state.t >= self.t_end() - TIME_SLACK {
            return None;
        }
        match interval {
            Some(dt) if dt > 0.0 => {
                let k = (((self.state.t - mark) / dt).floor() + 1.0).max(1.0);
                Some((mark + k * dt).min(self.t_end()))
            }
            _ => Some(self.state.t),
        }
    }

    pub fn step(&mut self) -> Result<StepReport> {
        let (mut dt, mut binding) = self.solver.step_size(&self.state)?;
        let stop = self.next_stop();
        let remaining = stop - self.state.t;
        if remaining > 0.0 && dt >= remaining * (1.0 - TIME_SLACK) {
            // land exactly on the sample time
            dt = remaining;
            binding = CflLimit::Clipped;
        }
        let (next, report) = self.solver.step_with(&self.state, dt, binding)?;
        let ops = self.solver.ops();
        let family = match &self.family {
            Some(f) => Some(transport_family_between(ops, f, &self.state.u, &next.u, dt, self.cfg.simulation.dealias)?),
            None => None,
        };
        let markers = match &self.markers {
            Some(m) => Some(advect_markers(m, &self.state.u, &next.u, dt)?),
            None => None,
        };
        let snapped = if (next.t - stop).abs() <= TIME_SLACK * dt { FluidState { t: stop, ..next } } else { next };
        self.state = snapped;
        self.family = family;
        self.markers = markers;
        let fields = flow_fields(&self.solver, &self.state)?;
        let sample = flow_sample_from(&self.solver, &self.state, &fields)?;
        self.book.tracker.push(sample);
        self.book.steps += 1;
        self.book.rho_star = self.book.rho_star.max(sample.rho_max);
        self.book.max_dealias_removed = self.book.max_dealias_removed.max(report.dealias_removed);
        self.book.solver_iterations += report.solver_iterations as u64;
        Ok(report)
    }

    /// Full diagnostics at the current time; appends to the monitored histories.
    pub fn record(&mut self) -> Result<DiagnosticsRecord> {
        let solver = &self.solver;
        let ops = solver.ops();
        let sim = &self.cfg.simulation;
        let (mu, lambda, nu) = (sim.mu, sim.lambda, sim.nu());
        let state = &self.state;
        let fields = flow_fields(solver, state)?;
        let s: FlowSample = flow_sample_from(solver, state, &fields)?;
        let tr = &self.book.tracker;
        let energy = tr.energy().expect("tracker holds the current sample");
        let a2 = tr.a2().expect("tracker holds the current sample");
        let decomposition = grad_decomposition(solver, state)?;
        let rho_dev = state.rho.map(|r| r - sim.rho_tilde).linf();
        let bound = self.book.rho_deviation0 + self.book.rho_star / nu * tr.flux_inf;

        let mut r = DiagnosticsRecord {
            t: Some(state.t),
            step: Some(self.book.steps as f64),
            energy: Some(energy.total()),
            kinetic: Some(energy.kinetic),
            potential: Some(energy.potential),
            dissipation: Some(energy.dissipation),
            a1: tr.a1(mu, lambda),
            a2: Some(a2.value),
            a2_unweighted: Some(a2.unweighted),
            a2_reliable: Some(if a2.reliable { 1.0 } else { 0.0 }),
            fdot_l2: Some(s.fdot_l2),
            g_l2: Some(s.g_l2),
            f_l2: Some(s.f_l2),
            f_inf: Some(s.f_inf),
            grad_f_l2: Some(s.grad_f_l2),
            momentum_rate_l2: Some(s.momentum_rate_l2),
            udot_l2: Some(s.udot_l2),
            f_high_band: Some(ops.high_band_fraction(&fields.flux)),
            g_high_band: Some(ops.high_band_fraction(&fields.g)),
            div_l2: Some(s.div_l2),
            div_inf: Some(s.div_inf),
            nu_div_sq: Some(nu * s.div_l2 * s.div_l2),
            grad_u_l2: Some(s.grad_u_l2),
            grad_u_inf: Some(s.grad_u_inf),
            lipschitz_integral: Some(tr.lipschitz),
            compression_integral: Some(tr.compression),
            decomposition_residual: Some(decomposition.residual),
            momentum_residual_hm1: Some(momentum_residual_hm1(solver, state, &fields)?),
            grad_u_pressure_inf: Some(decomposition.from_pressure_inf),
            mass: Some(s.mass),
            rho_min: Some(s.rho_min),
            rho_max: Some(s.rho_max),
            rho_deviation_inf: Some(rho_dev),
            density_bound_margin: Some(bound - rho_dev),
            vacuum_fraction: Some(s.vacuum_fraction),
            ..Default::default()
        };

        for (k, &l) in sim.h_l_orders.iter().enumerate() {
            self.book.h_l[k].push(HlSample::measure(ops, state, solver.law(), mu, lambda, l)?);
        }

        if let Some(family) = &self.family {
            let p = sim.striated_p;
            let rep = a3(ops, &state.rho, family, p)?;
            let nd = family.nondegeneracy();
            let div_x = div_product(ops, &state.rho, &family.members[0], Smoothness::Rough)?.lp(p);
            r.a3 = Some(rep.total());
            r.a3_divergence_form = Some(rep.total_divergence_form());
            r.family_norm = Some(rep.family_norm);
            r.directional = Some(rep.directional);
            r.nondegeneracy = Some(nd.value);
            r.div_rho_x = Some(div_x);
            r.log_riesz_ratio = log_riesz_terms(ops, &fields.g, family, p, self.cfg.riesz_q)?.map(|t| t.ratio());
            self.book.lower_bound.push(LowerBoundSample {
                t: state.t,
                nondegeneracy: nd.value,
                lipschitz_integral: tr.lipschitz,
            });
            self.book.divergence.push(DivergenceSample {
                t: state.t,
                norm: div_x,
                compression_integral: tr.compression,
            });
            self.book.continuation.push(ContinuationSample {
                t: state.t,
                family_norm: rep.family_norm,
                inv_nondegeneracy: 1.0 / nd.value,
                inv_rho_inf: (s.rho_min >= sim.rho_floor()).then(|| 1.0 / s.rho_min),
                rho_inf: s.rho_max,
                rho_deviation_inf: rho_dev,
                directional: rep.directional,
                grad_u_l2: s.grad_u_l2,
                udot_l2: s.udot_l2,
                lipschitz_integral: tr.lipschitz,
                a3: rep.total(),
            });
            if let Some(m) = &self.markers {
                r.tangency_error = Some(tangency_error(m, family)?);
            }
        }
        if let Some(m) = &self.markers {
            let reg = interface_regularity(m, sim.striated_p)?;
            r.arclength = Some(reg.arclength);
            r.curvature_max = Some(reg.curvature_max);
            r.w2p_seminorm = Some(reg.w2p_seminorm);
            r.enclosed_area = Some(m.area());
        }
        self.book.records += 1;
        Ok(r)
    }

    /// Runs to `t_end`, reporting records and snapshot points to `observer`.
    ///
    /// On a step failure the trajectory keeps the last good state and the
    /// error is returned.
    pub fn run(&mut self, observer: &mut dyn FnMut(Event) -> Result<()>) -> Result<RunSummary> {
        let sim = self.cfg.simulation.clone();
        loop {
            let dt_hint = self.solver.step_size(&self.state).map(|(dt, _)| dt).unwrap_or(0.0);
            if self.reached(self.book.next_record, dt_hint) {
                let rec = self.record()?;
                observer(Event::Record {
                    record: &rec,
                    trajectory: self,
                })?;
                let mark = self.book.next_record.unwrap_or(self.state.t);
                self.book.next_record = self.advance_mark(mark, sim.diagnostic_interval);
            }
            if self.reached(self.book.next_snapshot, dt_hint) {
                let mark = self.book.next_snapshot.unwrap_or(self.state.t);
                self.book.next_snapshot = self.advance_mark(mark, sim.snapshot_interval);
                observer(Event::Snapshot(self))?;
            }
            if self.state.t >= sim.t_end - TIME_SLACK * dt_hint.max(1e-300) {
                break;
            }
            self.step()?;
        }
        Ok(self.summary())
    }

    pub fn summary(&self) -> RunSummary {
        let sim = &self.cfg.simulation;
        RunSummary {
            t: self.state.t,
            steps: self.book.steps,
            records: self.book.records,
            energy: self.book.tracker.energy(),
            a1: self.book.tracker.a1(sim.mu, sim.lambda),
            max_dealias_removed: self.book.max_dealias_removed,
            solver_iterations: self.book.solver_iterations,
            lower_bound: i_lower_bound_check(&self.book.lower_bound).ok(),
            divergence: div_rho_x_conservation(&self.book.divergence).ok(),
            continuation: lipschitz_and_blowup_monitor(&self.book.continuation).ok(),
        }
    }
}

/// Runs a configuration to completion and returns its records.
pub fn run_collect(cfg: &RunConfig) -> Result<(Vec<DiagnosticsRecord>, Trajectory)> {
    let mut traj = Trajectory::start(cfg)?;
    let mut rows = Vec::new();
    traj.run(&mut |e| {
        if let Event::Record { record, .. } = e {
            rows.push(record.clone());
        }
        Ok(())
    })?;
    Ok((rows, traj))
}
