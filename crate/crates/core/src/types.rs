//! Shared vocabulary: rates, simulated time, connection identities and cells.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bits in one ATM cell (53 bytes).
pub const CELL_BITS: f64 = 424.0;

/// One-way propagation delay in fibre, µs per km.
pub const FIBER_DELAY_US_PER_KM: f64 = 5.0;

/// Bandwidth in Mbps. Bits per µs, so `CELL_BITS / rate` is a time in µs.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rate(f64);

impl Rate {
    pub const ZERO: Rate = Rate(0.0);

    pub const fn mbps(value: f64) -> Self {
        Rate(value)
    }

    pub const fn as_mbps(self) -> f64 {
        self.0
    }

    pub fn min(self, other: Rate) -> Rate {
        Rate(self.0.min(other.0))
    }

    pub fn max(self, other: Rate) -> Rate {
        Rate(self.0.max(other.0))
    }

    /// Rate of `cells` cells observed over `span`.
    pub fn from_cells(cells: u64, span: SimTime) -> Rate {
        Rate(cells as f64 * CELL_BITS / span.as_micros())
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} Mbps", self.0)
    }
}

impl Add for Rate {
    type Output = Rate;
    fn add(self, rhs: Rate) -> Rate {
        Rate(self.0 + rhs.0)
    }
}

impl Sub for Rate {
    type Output = Rate;
    fn sub(self, rhs: Rate) -> Rate {
        Rate(self.0 - rhs.0)
    }
}

impl Mul<f64> for Rate {
    type Output = Rate;
    fn mul(self, rhs: f64) -> Rate {
        Rate(self.0 * rhs)
    }
}

impl Div<f64> for Rate {
    type Output = Rate;
    fn div(self, rhs: f64) -> Rate {
        Rate(self.0 / rhs)
    }
}

impl Div for Rate {
    type Output = f64;
    fn div(self, rhs: Rate) -> f64 {
        self.0 / rhs.0
    }
}

/// Simulated time (or a span of it) in microseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    pub const fn from_micros(us: f64) -> Self {
        SimTime(us)
    }

    pub fn from_millis(ms: f64) -> Self {
        SimTime(ms * 1000.0)
    }

    pub const fn as_micros(self) -> f64 {
        self.0
    }

    pub fn as_millis(self) -> f64 {
        self.0 / 1000.0
    }

    pub fn max(self, other: SimTime) -> SimTime {
        SimTime(self.0.max(other.0))
    }

    pub fn min(self, other: SimTime) -> SimTime {
        SimTime(self.0.min(other.0))
    }

    pub fn total_cmp(&self, other: &SimTime) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl Mul<f64> for SimTime {
    type Output = SimTime;
    fn mul(self, rhs: f64) -> SimTime {
        SimTime(self.0 * rhs)
    }
}

/// Virtual connection index, unique within a scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VcId(pub usize);

impl fmt::Display for VcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "vc{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellKind {
    Data,
    ForwardRm,
    BackwardRm,
}

/// Fields of a resource-management cell read or written by the algorithms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmPayload {
    pub ccr: Rate,
    pub er: Rate,
    pub ci: bool,
    pub ni: bool,
}

impl RmPayload {
    /// A fresh forward RM payload: ER starts at the peak rate, flags clear.
    pub fn new(ccr: Rate, pcr: Rate) -> Self {
        RmPayload {
            ccr,
            er: pcr,
            ci: false,
            ni: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub vc: VcId,
    pub kind: CellKind,
    rm: Option<RmPayload>,
    pub emitted_at: SimTime,
    pub seq: u64,
}

impl Cell {
    pub fn data(vc: VcId, emitted_at: SimTime, seq: u64) -> Self {
        Cell {
            vc,
            kind: CellKind::Data,
            rm: None,
            emitted_at,
            seq,
        }
    }

    pub fn rm(vc: VcId, kind: CellKind, payload: RmPayload, emitted_at: SimTime, seq: u64) -> Self {
        assert!(
            kind != CellKind::Data,
            "RM cell must be forward or backward"
        );
        Cell {
            vc,
            kind,
            rm: Some(payload),
            emitted_at,
            seq,
        }
    }

    pub fn payload(&self) -> Option<&RmPayload> {
        self.rm.as_ref()
    }

    pub fn payload_mut(&mut self) -> Option<&mut RmPayload> {
        self.rm.as_mut()
    }

    pub fn is_rm(&self) -> bool {
        self.rm.is_some()
    }

    pub(crate) fn into_backward(mut self) -> Self {
        self.kind = CellKind::BackwardRm;
        self
    }
}

/// Time to clock one cell onto a link running at `link_rate`.
pub fn cell_transmission_time(link_rate: Rate) -> Result<SimTime> {
    let r = link_rate.as_mbps();
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::invalid(format!(
            "link rate must be positive, got {r}"
        )));
    }
    Ok(SimTime::from_micros(CELL_BITS / r))
}

/// One-way propagation delay over `length_km` of fibre.
pub fn propagation_delay(length_km: f64) -> Result<SimTime> {
    if !(length_km >= 0.0) || !length_km.is_finite() {
        return Err(Error::invalid(format!(
            "link length must be non-negative, got {length_km}"
        )));
    }
    Ok(SimTime::from_micros(length_km * FIBER_DELAY_US_PER_KM))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transmission_time_examples() {
        let t = cell_transmission_time(Rate::mbps(155.52)).unwrap();
        assert!((t.as_micros() - 424.0 / 155.52).abs() < 1e-12);
        assert!((t.as_micros() - 2.726337).abs() < 1e-6);
        assert_eq!(
            cell_transmission_time(Rate::mbps(10.0))
                .unwrap()
                .as_micros(),
            42.4
        );
        assert_eq!(
            cell_transmission_time(Rate::mbps(424.0))
                .unwrap()
                .as_micros(),
            1.0
        );
    }

    #[test]
    fn transmission_time_rejects_non_positive() {
        assert!(matches!(
            cell_transmission_time(Rate::ZERO),
            Err(Error::InvalidArgument(_))
        ));
        assert!(cell_transmission_time(Rate::mbps(-1.0)).is_err());
    }

    #[test]
    fn propagation_examples() {
        assert_eq!(propagation_delay(1000.0).unwrap().as_micros(), 5000.0);
        assert_eq!(propagation_delay(0.0).unwrap().as_micros(), 0.0);
        assert_eq!(propagation_delay(2000.0).unwrap().as_micros(), 10000.0);
        assert!(propagation_delay(-1.0).is_err());
    }

    #[test]
    fn three_links_each_way_make_thirty_ms() {
        let one_way = propagation_delay(1000.0).unwrap().as_micros() * 3.0;
        assert_eq!(SimTime::from_micros(2.0 * one_way).as_millis(), 30.0);
    }

    #[test]
    fn rm_presence_follows_kind() {
        let d = Cell::data(VcId(0), SimTime::ZERO, 0);
        assert!(!d.is_rm());
        let f = Cell::rm(
            VcId(0),
            CellKind::ForwardRm,
            RmPayload::new(Rate::mbps(5.0), Rate::mbps(155.52)),
            SimTime::ZERO,
            1,
        );
        assert!(f.is_rm());
        assert_eq!(f.payload().unwrap().er, Rate::mbps(155.52));
    }
}
