//! Discrete-event loop: store-and-forward ports with FIFO queues, links with
//! propagation delay, measurement-interval timers and trace sampling.
//!
//! Events are ordered by `(time, insertion sequence)`, so a run is a pure
//! function of its inputs.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use crate::error::{Error, Result};
use crate::scenario::{NodeKind, Scenario};
use crate::source::{turn_around, SourceState, Window};
use crate::switch::{PortControl, SwitchConfig};
use crate::trace::{PortTrace, TraceSet, VcTrace};
use crate::types::{
    cell_transmission_time, propagation_delay, Cell, CellKind, Rate, SimTime, VcId,
};

/// Spacing of the fixed sampling grid.
pub const SAMPLE_PERIOD: SimTime = SimTime::from_micros(100.0);

#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Recompute every backward RM cell's expected ER hop by hop and
    /// compare it with what reaches the source.
    pub audit: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { audit: true }
    }
}

/// Cell accounting of one port over a run.
#[derive(Clone, Debug, PartialEq)]
pub struct PortStats {
    pub label: String,
    pub controlled: bool,
    pub cells_in: u64,
    pub cells_out: u64,
    pub queued: u64,
    pub max_queue: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Audit {
    pub checked: u64,
    pub mismatches: u64,
    /// Backward RM cells whose ER rose while crossing a port.
    pub increases: u64,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub traces: TraceSet,
    pub ports: Vec<PortStats>,
    pub audit: Audit,
    pub delivered: u64,
}

/// Runs `scenario` for `duration` with every switch output port using `cfg`.
pub fn run(scenario: &Scenario, cfg: &SwitchConfig, duration: SimTime) -> Result<RunOutput> {
    run_with(scenario, cfg, duration, &RunOptions::default())
}

pub fn run_with(
    scenario: &Scenario,
    cfg: &SwitchConfig,
    duration: SimTime,
    options: &RunOptions,
) -> Result<RunOutput> {
    scenario.validate()?;
    cfg.validate()?;
    if !(duration.as_micros() >= 0.0) || !duration.as_micros().is_finite() {
        return Err(Error::config(
            "duration",
            "must be a finite non-negative time",
        ));
    }
    let mut sim = Sim::build(scenario, cfg, options)?;
    sim.run(duration)?;
    Ok(sim.finish())
}

#[derive(Debug)]
enum EventKind {
    Emit { vc: usize, gen: u64 },
    TxDone { port: usize },
    Arrive { cell: Cell, hop: usize },
    IntervalEnd { port: usize, gen: u64 },
    Sample { k: u64 },
    WindowStart { vc: usize },
    WindowStop { vc: usize },
}

#[derive(Debug)]
struct Event {
    time: SimTime,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed: BinaryHeap is a max-heap and we want the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Link {
    from: usize,
    to: usize,
    rate: Rate,
    tx_time: SimTime,
    prop: SimTime,
}

struct Port {
    label: String,
    link: usize,
    fifo: VecDeque<(Cell, usize)>,
    busy: bool,
    control: Option<PortControl>,
    interval_gen: u64,
    cells_in: u64,
    cells_out: u64,
    max_queue: u64,
    /// Index into the trace's port list for controlled ports.
    trace: Option<usize>,
    util_mark: (SimTime, u64),
}

struct Vc {
    route: Vec<usize>,
    source: SourceState,
    gen: u64,
}

struct Sim<'a> {
    cfg: &'a SwitchConfig,
    audit_on: bool,
    now: SimTime,
    seq: u64,
    queue: BinaryHeap<Event>,
    kinds: Vec<NodeKind>,
    links: Vec<Link>,
    ports: Vec<Port>,
    vcs: Vec<Vc>,
    traces: TraceSet,
    audit: Audit,
    /// Per in-flight backward RM cell: the smallest ER computed so far.
    expected_er: BTreeMap<(usize, u64), Rate>,
    delivered: u64,
}

fn fwd(link: usize) -> usize {
    2 * link
}

fn rev(link: usize) -> usize {
    2 * link + 1
}

impl<'a> Sim<'a> {
    fn build(scenario: &Scenario, cfg: &'a SwitchConfig, options: &RunOptions) -> Result<Self> {
        let node_index: BTreeMap<&str, usize> = scenario
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.name.as_str(), i))
            .collect();
        let kinds: Vec<NodeKind> = scenario.nodes.iter().map(|n| n.kind).collect();
        let link_index: BTreeMap<&str, usize> = scenario
            .links
            .iter()
            .enumerate()
            .map(|(i, l)| (l.id.as_str(), i))
            .collect();

        let mut links = Vec::with_capacity(scenario.links.len());
        for l in &scenario.links {
            let rate = Rate::mbps(l.rate_mbps);
            links.push(Link {
                from: node_index[l.from.as_str()],
                to: node_index[l.to.as_str()],
                rate,
                tx_time: cell_transmission_time(rate)?,
                prop: propagation_delay(l.length_km)?,
            });
        }

        let mut vcs = Vec::with_capacity(scenario.vcs.len());
        let mut users: Vec<Vec<VcId>> = vec![Vec::new(); links.len()];
        for (i, spec) in scenario.vcs.iter().enumerate() {
            let route: Vec<usize> = spec
                .route
                .iter()
                .map(|id| link_index[id.as_str()])
                .collect();
            for &l in &route {
                users[l].push(VcId(i));
            }
            let windows = spec
                .windows
                .iter()
                .map(|w| match w.stop_ms {
                    Some(stop) => Window::between(
                        SimTime::from_millis(w.start_ms),
                        SimTime::from_millis(stop),
                    ),
                    None => Window::from(SimTime::from_millis(w.start_ms)),
                })
                .collect();
            let source = SourceState::new(
                VcId(i),
                Rate::mbps(spec.icr_mbps),
                Rate::mbps(scenario.pcr_of(spec)),
                spec.app_cap_mbps.map(Rate::mbps),
                scenario.defaults.nrm,
                windows,
            )?;
            vcs.push(Vc {
                route,
                source,
                gen: 0,
            });
        }

        let mut traces = TraceSet {
            grid: Vec::new(),
            vcs: scenario
                .vcs
                .iter()
                .map(|v| VcTrace {
                    name: v.name.clone(),
                    ..Default::default()
                })
                .collect(),
            ports: Vec::new(),
        };

        let mut ports = Vec::with_capacity(2 * links.len());
        for (i, l) in links.iter().enumerate() {
            let from = &scenario.nodes[l.from].name;
            let to = &scenario.nodes[l.to].name;
            for forward in [true, false] {
                let controlled = forward && kinds[l.from] == NodeKind::Switch;
                let label = if forward {
                    format!("{from}->{to}")
                } else {
                    format!("{to}->{from}")
                };
                let (control, trace) = if controlled {
                    let control = PortControl::new(users[i].iter().copied(), cfg, l.rate)?;
                    traces.ports.push(PortTrace {
                        label: label.clone(),
                        link_rate: l.rate.as_mbps(),
                        ..Default::default()
                    });
                    (Some(control), Some(traces.ports.len() - 1))
                } else {
                    (None, None)
                };
                ports.push(Port {
                    label,
                    link: i,
                    fifo: VecDeque::new(),
                    busy: false,
                    control,
                    interval_gen: 0,
                    cells_in: 0,
                    cells_out: 0,
                    max_queue: 0,
                    trace,
                    util_mark: (SimTime::ZERO, 0),
                });
            }
        }

        Ok(Sim {
            cfg,
            audit_on: options.audit,
            now: SimTime::ZERO,
            seq: 0,
            queue: BinaryHeap::new(),
            kinds,
            links,
            ports,
            vcs,
            traces,
            audit: Audit::default(),
            expected_er: BTreeMap::new(),
            delivered: 0,
        })
    }

    fn schedule(&mut self, time: SimTime, kind: EventKind) {
        debug_assert!(time >= self.now);
        self.seq += 1;
        self.queue.push(Event {
            time,
            seq: self.seq,
            kind,
        });
    }

    fn run(&mut self, duration: SimTime) -> Result<()> {
        for v in 0..self.vcs.len() {
            let acr = self.vcs[v].source.acr().as_mbps();
            self.traces.vcs[v].acr.push(SimTime::ZERO, acr);
            let windows: Vec<Window> = self.vcs[v].source.windows().to_vec();
            for w in windows {
                self.schedule(w.start, EventKind::WindowStart { vc: v });
                if let Some(stop) = w.stop {
                    self.schedule(stop, EventKind::WindowStop { vc: v });
                }
            }
        }
        for p in 0..self.ports.len() {
            if self.ports[p].control.is_some() {
                self.schedule(
                    self.cfg.interval_max,
                    EventKind::IntervalEnd { port: p, gen: 0 },
                );
            }
        }
        self.schedule(SimTime::ZERO, EventKind::Sample { k: 0 });

        while let Some(ev) = self.queue.pop() {
            if ev.time > duration {
                break;
            }
            debug_assert!(ev.time >= self.now, "time went backwards");
            self.now = ev.time;
            match ev.kind {
                EventKind::Emit { vc, gen } => self.on_emit(vc, gen)?,
                EventKind::TxDone { port } => self.on_tx_done(port),
                EventKind::Arrive { cell, hop } => self.on_arrive(cell, hop)?,
                EventKind::IntervalEnd { port, gen } => {
                    if self.ports[port].interval_gen == gen {
                        self.close_interval(port);
                    }
                }
                EventKind::Sample { k } => {
                    self.sample(k);
                    let next = SimTime::from_micros((k + 1) as f64 * SAMPLE_PERIOD.as_micros());
                    if next <= duration {
                        self.schedule(next, EventKind::Sample { k: k + 1 });
                    }
                }
                EventKind::WindowStart { vc } => {
                    let now = self.now;
                    let v = &mut self.vcs[vc];
                    v.source.begin_window(now);
                    v.gen += 1;
                    let (at, gen) = (v.source.next_emit(), v.gen);
                    self.schedule(at, EventKind::Emit { vc, gen });
                }
                EventKind::WindowStop { vc } => self.vcs[vc].gen += 1,
            }
        }
        Ok(())
    }

    fn on_emit(&mut self, vc: usize, gen: u64) -> Result<()> {
        let now = self.now;
        let v = &mut self.vcs[vc];
        if v.gen != gen || !v.source.is_active(now) {
            return Ok(());
        }
        let cell = v.source.emit_next(now)?;
        let first = v.route[0];
        let next = v.source.next_emit();
        let still_active = v.source.window_end(now).is_none_or(|end| next < end);
        self.enqueue(fwd(first), cell, 0);
        if still_active {
            self.schedule(next, EventKind::Emit { vc, gen });
        }
        Ok(())
    }

    fn enqueue(&mut self, port: usize, cell: Cell, hop: usize) {
        let p = &mut self.ports[port];
        p.cells_in += 1;
        p.fifo.push_back((cell, hop));
        p.max_queue = p.max_queue.max(p.fifo.len() as u64);
        if !p.busy {
            p.busy = true;
            let done = self.now + self.links[p.link].tx_time;
            self.schedule(done, EventKind::TxDone { port });
        }
    }

    fn on_tx_done(&mut self, port: usize) {
        let p = &mut self.ports[port];
        let (cell, hop) = p.fifo.pop_front().expect("busy port has a cell");
        p.cells_out += 1;
        let link = &self.links[p.link];
        let arrive = self.now + link.prop;
        let more = !p.fifo.is_empty();
        if !more {
            p.busy = false;
        }
        let tx = link.tx_time;
        self.schedule(arrive, EventKind::Arrive { cell, hop });
        if more {
            let done = self.now + tx;
            self.schedule(done, EventKind::TxDone { port });
        }
    }

    fn on_arrive(&mut self, mut cell: Cell, hop: usize) -> Result<()> {
        let vc = cell.vc.0;
        let route_len = self.vcs[vc].route.len();
        let link = self.vcs[vc].route[hop];
        match cell.kind {
            CellKind::Data | CellKind::ForwardRm => {
                let node = self.links[link].to;
                if hop + 1 == route_len {
                    debug_assert_eq!(self.kinds[node], NodeKind::Destination);
                    if cell.kind == CellKind::ForwardRm {
                        let brm = turn_around(cell)?;
                        self.enqueue(rev(link), brm, hop);
                    } else {
                        self.delivered += 1;
                    }
                    return Ok(());
                }
                let out = fwd(self.vcs[vc].route[hop + 1]);
                let now = self.now;
                let cfg = self.cfg;
                let mut due = false;
                if let Some(control) = self.ports[out].control.as_mut() {
                    control.on_data_or_frm_cell(cfg, &cell, now)?;
                    due = control.input_cell_count() >= cfg.interval_cells;
                }
                if due {
                    self.close_interval(out);
                }
                self.enqueue(out, cell, hop + 1);
            }
            CellKind::BackwardRm => {
                let key = (vc, cell.seq);
                if hop == 0 {
                    let payload = *cell.payload().expect("RM cell carries a payload");
                    if self.audit_on {
                        let expected = self.expected_er.remove(&key).unwrap_or(payload.er);
                        self.audit.checked += 1;
                        if expected != payload.er {
                            self.audit.mismatches += 1;
                        }
                    }
                    let now = self.now;
                    let v = &mut self.vcs[vc];
                    let before = v.source.acr();
                    v.source.on_brm(&payload);
                    let after = v.source.acr();
                    if after != before {
                        self.traces.vcs[vc].acr.push(now, after.as_mbps());
                        if v.source.is_active(now) {
                            if let Some(at) = v.source.reschedule(now) {
                                v.gen += 1;
                                let gen = v.gen;
                                self.schedule(at, EventKind::Emit { vc, gen });
                            }
                        }
                    }
                    return Ok(());
                }
                let port = fwd(link);
                let cfg = self.cfg;
                if let Some(control) = self.ports[port].control.as_mut() {
                    let payload = cell.payload_mut().expect("RM cell carries a payload");
                    let incoming = payload.er;
                    let decision = control.on_brm_cell(cfg, payload, VcId(vc))?;
                    if decision.er_out > incoming {
                        self.audit.increases += 1;
                    }
                    if self.audit_on {
                        let entry = self.expected_er.entry(key).or_insert(incoming);
                        *entry = entry.min(decision.computed);
                    }
                }
                self.enqueue(rev(self.vcs[vc].route[hop - 1]), cell, hop - 1);
            }
        }
        Ok(())
    }

    fn close_interval(&mut self, port: usize) {
        let now = self.now;
        let cfg = self.cfg;
        let rate = self.links[self.ports[port].link].rate;
        let p = &mut self.ports[port];
        let Some(control) = p.control.as_mut() else {
            return;
        };
        if control.end_interval(cfg, rate, now) {
            let neff = control.active_estimate(cfg);
            let fs = control.fair_share().as_mbps();
            self.record_port(port, neff, fs);
        }
        let p = &mut self.ports[port];
        p.interval_gen += 1;
        let gen = p.interval_gen;
        self.schedule(now + cfg.interval_max, EventKind::IntervalEnd { port, gen });
    }

    fn record_port(&mut self, port: usize, neff: f64, fair_share: f64) {
        let now = self.now;
        let p = &mut self.ports[port];
        let Some(t) = p.trace else { return };
        let tx_time = self.links[p.link].tx_time.as_micros();
        let trace = &mut self.traces.ports[t];
        trace.queue.push(now, p.fifo.len() as f64);
        trace.neff.push(now, neff);
        trace.fair_share.push(now, fair_share);
        let (since, out_then) = p.util_mark;
        let span = (now - since).as_micros();
        if span > 0.0 {
            trace
                .util
                .push(now, (p.cells_out - out_then) as f64 * tx_time / span);
            p.util_mark = (now, p.cells_out);
        }
    }

    fn sample(&mut self, k: u64) {
        let now = self.now;
        self.traces.grid.push(now);
        for (v, vc) in self.vcs.iter().enumerate() {
            self.traces.vcs[v]
                .emitted
                .push(now, vc.source.emitted() as f64);
        }
        for port in 0..self.ports.len() {
            let Some(t) = self.ports[port].trace else {
                continue;
            };
            let control = self.ports[port]
                .control
                .as_ref()
                .expect("traced ports are controlled");
            let neff = control.active_estimate(self.cfg);
            let fs = control.fair_share().as_mbps();
            let out = self.ports[port].cells_out as f64;
            self.traces.ports[t].departures.push(now, out);
            if k == 0 {
                let trace = &mut self.traces.ports[t];
                trace.queue.push(now, 0.0);
                trace.neff.push(now, neff);
                trace.fair_share.push(now, fs);
                trace.util.push(now, 0.0);
            } else {
                self.record_port(port, neff, fs);
            }
        }
    }

    fn finish(self) -> RunOutput {
        let ports = self
            .ports
            .iter()
            .map(|p| PortStats {
                label: p.label.clone(),
                controlled: p.control.is_some(),
                cells_in: p.cells_in,
                cells_out: p.cells_out,
                queued: p.fifo.len() as u64,
                max_queue: p.max_queue,
            })
            .collect();
        RunOutput {
            traces: self.traces,
            ports,
            audit: self.audit,
            delivered: self.delivered,
        }
    }
}
