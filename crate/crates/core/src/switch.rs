//! Per-output-port ABR rate allocation.
//!
//! A [`PortControl`] measures load over consecutive measurement intervals
//! and stamps explicit-rate feedback into backward RM cells. Four variants
//! share the same skeleton and differ only in how the number of active
//! connections is estimated and whether the max-allocation memory is used:
//!
//! * `erica-basic`: a connection is active if it sent a cell this interval.
//! * `erica-fair`: as above, plus the previous interval's highest allocation
//!   is offered to everyone while the load factor is within `1 + delta`.
//! * `neff-ccr`: effective count from activity levels, using the CCR field.
//! * `neff-measured`: effective count from activity levels, using per-VC
//!   rates measured at the port.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::types::{Cell, CellKind, Rate, RmPayload, SimTime, VcId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, clap::ValueEnum)]
pub enum Variant {
    EricaBasic,
    EricaFair,
    NeffCcr,
    NeffMeasured,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::EricaBasic,
        Variant::EricaFair,
        Variant::NeffCcr,
        Variant::NeffMeasured,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::EricaBasic => "erica-basic",
            Variant::EricaFair => "erica-fair",
            Variant::NeffCcr => "neff-ccr",
            Variant::NeffMeasured => "neff-measured",
        }
    }

    pub fn uses_effective_count(self) -> bool {
        matches!(self, Variant::NeffCcr | Variant::NeffMeasured)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown variant {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwitchConfig {
    pub variant: Variant,
    pub target_utilization: f64,
    /// Width of the near-unity load band for `erica-fair`.
    pub delta: f64,
    pub interval_cells: u64,
    pub interval_max: SimTime,
    pub rho_floor: f64,
    /// Replaces the measured ABR capacity on every controlled port.
    pub capacity_override: Option<Rate>,
    /// Exponential weight on the newest per-VC rate sample (`neff-measured`).
    /// `None` uses the raw per-interval measurement.
    pub rate_smoothing: Option<f64>,
    /// Hold the initial count until every connection has been seen.
    pub init_guard: bool,
}

impl Default for SwitchConfig {
    fn default() -> Self {
        SwitchConfig {
            variant: Variant::NeffMeasured,
            target_utilization: 0.9,
            delta: 0.1,
            interval_cells: 100,
            interval_max: SimTime::from_millis(1.0),
            rho_floor: 0.01,
            capacity_override: None,
            rate_smoothing: None,
            init_guard: true,
        }
    }
}

impl SwitchConfig {
    pub fn with_variant(variant: Variant) -> Self {
        SwitchConfig {
            variant,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_utilization > 0.0 && self.target_utilization <= 1.0) {
            return Err(Error::config(
                "target_utilization",
                format!("must be in (0, 1], got {}", self.target_utilization),
            ));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::config("delta", "must be non-negative"));
        }
        if self.interval_cells < 1 {
            return Err(Error::config("interval_cells", "must be at least 1"));
        }
        if !(self.interval_max.as_micros() > 0.0) {
            return Err(Error::config("interval_max", "must be positive"));
        }
        if !(self.rho_floor > 0.0) {
            return Err(Error::config("rho_floor", "must be positive"));
        }
        if let Some(c) = self.capacity_override {
            if !(c.as_mbps() > 0.0) {
                return Err(Error::config("capacity_override", "must be positive"));
            }
        }
        if let Some(a) = self.rate_smoothing {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::config("rate_smoothing", "must be in (0, 1]"));
            }
        }
        Ok(())
    }

    fn abr_capacity(&self, link_rate: Rate, vbr: Rate, cbr: Rate) -> Rate {
        self.capacity_override
            .unwrap_or_else(|| link_rate * self.target_utilization - vbr - cbr)
    }
}

/// Explicit rate written into a backward RM cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeedbackDecision {
    pub er_out: Rate,
    /// This port's own allocation before taking the minimum with the cell.
    pub computed: Rate,
}

#[derive(Clone, Debug, PartialEq)]
struct VcEntry {
    cells: u64,
    activity: f64,
    ccr: Rate,
    first_cell_seen: bool,
}

/// ABR state of one switch output port.
#[derive(Clone, Debug, PartialEq)]
pub struct PortControl {
    abr_capacity: Rate,
    input_cell_count: u64,
    vcs: BTreeMap<VcId, VcEntry>,
    rho: f64,
    input_rate: Rate,
    fair_share: Rate,
    n_last: f64,
    n_current: f64,
    vcs_seen: usize,
    max_alloc_previous: Rate,
    max_alloc_current: Rate,
    vbr_usage: Rate,
    cbr_usage: Rate,
    interval_start: SimTime,
}

impl PortControl {
    /// Sets up the port for the connections routed through it.
    pub fn new(
        vcs: impl IntoIterator<Item = VcId>,
        cfg: &SwitchConfig,
        link_rate: Rate,
    ) -> Result<Self> {
        cfg.validate()?;
        if !(link_rate.as_mbps() > 0.0) {
            return Err(Error::invalid("link rate must be positive"));
        }
        let vcs: BTreeMap<VcId, VcEntry> = vcs
            .into_iter()
            .map(|vc| {
                (
                    vc,
                    VcEntry {
                        cells: 0,
                        activity: 0.0,
                        ccr: Rate::ZERO,
                        first_cell_seen: false,
                    },
                )
            })
            .collect();
        let abr_capacity = cfg.abr_capacity(link_rate, Rate::ZERO, Rate::ZERO);
        let n_last = (vcs.len() as f64).max(1.0);
        Ok(PortControl {
            abr_capacity,
            input_cell_count: 0,
            vcs,
            rho: 1.0,
            input_rate: Rate::ZERO,
            fair_share: abr_capacity / n_last,
            n_last,
            n_current: 0.0,
            vcs_seen: 0,
            max_alloc_previous: Rate::ZERO,
            max_alloc_current: Rate::ZERO,
            vbr_usage: Rate::ZERO,
            cbr_usage: Rate::ZERO,
            interval_start: SimTime::ZERO,
        })
    }

    pub fn abr_capacity(&self) -> Rate {
        self.abr_capacity
    }

    pub fn fair_share(&self) -> Rate {
        self.fair_share
    }

    /// Load factor from the last completed interval.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn input_rate(&self) -> Rate {
        self.input_rate
    }

    pub fn n_last(&self) -> f64 {
        self.n_last
    }

    pub fn n_current(&self) -> f64 {
        self.n_current
    }

    pub fn vcs_seen(&self) -> usize {
        self.vcs_seen
    }

    pub fn input_cell_count(&self) -> u64 {
        self.input_cell_count
    }

    pub fn interval_start(&self) -> SimTime {
        self.interval_start
    }

    pub fn max_alloc_previous(&self) -> Rate {
        self.max_alloc_previous
    }

    pub fn ccr(&self, vc: VcId) -> Option<Rate> {
        self.vcs.get(&vc).map(|e| e.ccr)
    }

    pub fn activity(&self, vc: VcId) -> Option<f64> {
        self.vcs.get(&vc).map(|e| e.activity)
    }

    pub fn first_cell_seen(&self, vc: VcId) -> Option<bool> {
        self.vcs.get(&vc).map(|e| e.first_cell_seen)
    }

    pub fn cells_this_interval(&self, vc: VcId) -> Option<u64> {
        self.vcs.get(&vc).map(|e| e.cells)
    }

    /// Count of active connections as this variant sees it: the effective
    /// count for the activity-level variants, the cells-seen count otherwise.
    pub fn active_estimate(&self, cfg: &SwitchConfig) -> f64 {
        if cfg.variant.uses_effective_count() {
            self.n_current
        } else {
            self.n_last
        }
    }

    fn entry_mut(&mut self, vc: VcId) -> Result<&mut VcEntry> {
        self.vcs
            .get_mut(&vc)
            .ok_or_else(|| Error::Protocol(format!("{vc} is not set up on this port")))
    }

    /// Accounts a data or forward RM cell heading out of this port.
    pub fn on_data_or_frm_cell(
        &mut self,
        cfg: &SwitchConfig,
        cell: &Cell,
        _now: SimTime,
    ) -> Result<()> {
        if cell.kind == CellKind::BackwardRm {
            return Err(Error::Protocol(format!(
                "backward RM cell of {} counted as forward traffic",
                cell.vc
            )));
        }
        let use_ccr_field = cfg.variant != Variant::NeffMeasured;
        let entry = self.entry_mut(cell.vc)?;
        entry.cells += 1;
        let newly_seen = !entry.first_cell_seen;
        entry.first_cell_seen = true;
        if use_ccr_field {
            if let Some(rm) = cell.payload() {
                entry.ccr = rm.ccr;
            }
        }
        if newly_seen {
            self.vcs_seen += 1;
        }
        self.input_cell_count += 1;
        Ok(())
    }

    /// True once the interval has collected enough cells or run long enough.
    pub fn interval_due(&self, cfg: &SwitchConfig, now: SimTime) -> bool {
        self.input_cell_count >= cfg.interval_cells
            || (now - self.interval_start).as_micros() >= cfg.interval_max.as_micros()
    }

    /// Closes the measurement interval. Returns `false` and leaves the state
    /// untouched when no time has elapsed.
    pub fn end_interval(&mut self, cfg: &SwitchConfig, link_rate: Rate, now: SimTime) -> bool {
        let elapsed = now - self.interval_start;
        if !(elapsed.as_micros() > 0.0) {
            return false;
        }

        self.abr_capacity = cfg.abr_capacity(link_rate, self.vbr_usage, self.cbr_usage);
        self.input_rate = Rate::from_cells(self.input_cell_count, elapsed);
        self.rho = (self.input_rate / self.abr_capacity).max(cfg.rho_floor);

        match cfg.variant {
            Variant::NeffCcr | Variant::NeffMeasured => {
                if cfg.variant == Variant::NeffMeasured {
                    for e in self.vcs.values_mut() {
                        let measured = Rate::from_cells(e.cells, elapsed);
                        e.ccr = match cfg.rate_smoothing {
                            Some(a) => measured * a + e.ccr * (1.0 - a),
                            None => measured,
                        };
                    }
                }
                if !cfg.init_guard || self.vcs_seen as f64 >= self.n_last {
                    self.n_last = self.n_current.max(1.0);
                }
                self.n_current = 0.0;
                self.fair_share = self.abr_capacity / self.n_last;
                let fair_share = self.fair_share;
                let mut n = 0.0;
                for e in self.vcs.values_mut() {
                    e.activity = (e.ccr / fair_share).min(1.0);
                    n += e.activity;
                }
                self.n_current = n;
            }
            Variant::EricaBasic | Variant::EricaFair => {
                let active = self.vcs.values().filter(|e| e.cells > 0).count();
                self.n_last = (active as f64).max(1.0);
                self.n_current = active as f64;
                self.fair_share = self.abr_capacity / self.n_last;
                if cfg.variant == Variant::EricaFair {
                    self.max_alloc_previous = self.max_alloc_current;
                    self.max_alloc_current = self.fair_share;
                }
            }
        }

        self.input_cell_count = 0;
        for e in self.vcs.values_mut() {
            e.cells = 0;
        }
        self.interval_start = now;
        true
    }

    /// Rate this port is willing to grant `vc` right now.
    pub fn compute_er(&mut self, cfg: &SwitchConfig, vc: VcId) -> Result<Rate> {
        let ccr = self
            .vcs
            .get(&vc)
            .ok_or_else(|| Error::Protocol(format!("{vc} is not set up on this port")))?
            .ccr;
        let vc_share = ccr / self.rho;
        let mut base = self.fair_share.max(vc_share);
        if cfg.variant == Variant::EricaFair && self.rho <= 1.0 + cfg.delta {
            base = base.max(self.max_alloc_previous);
            self.max_alloc_current = self.max_alloc_current.max(base);
        }
        Ok(base.min(self.abr_capacity))
    }

    /// Stamps feedback into a backward RM cell of `vc`.
    pub fn on_brm_cell(
        &mut self,
        cfg: &SwitchConfig,
        cell: &mut RmPayload,
        vc: VcId,
    ) -> Result<FeedbackDecision> {
        let computed = self.compute_er(cfg, vc)?;
        let er_out = cell.er.min(computed);
        cell.er = er_out;
        Ok(FeedbackDecision { er_out, computed })
    }
}
