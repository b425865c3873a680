//! ABR end systems: paced cell emission with in-band forward RM cells,
//! rate adaptation on backward RM cells, and destination turnaround.

use crate::error::{Error, Result};
use crate::types::{Cell, CellKind, Rate, RmPayload, SimTime, VcId, CELL_BITS};

/// Interval during which a source has data to send. `stop == None` means
/// the source stays active until the end of the run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub start: SimTime,
    pub stop: Option<SimTime>,
}

impl Window {
    pub fn from(start: SimTime) -> Self {
        Window { start, stop: None }
    }

    pub fn between(start: SimTime, stop: SimTime) -> Self {
        Window {
            start,
            stop: Some(stop),
        }
    }

    pub fn contains(&self, t: SimTime) -> bool {
        t >= self.start && self.stop.is_none_or(|s| t < s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SourceState {
    pub vc: VcId,
    acr: Rate,
    icr: Rate,
    pcr: Rate,
    app_cap: Option<Rate>,
    /// Rate increase factor; fixed at one, so increases apply in full.
    rif: f64,
    nrm: u32,
    cells_since_rm: u32,
    windows: Vec<Window>,
    next_emit: SimTime,
    last_emit: Option<SimTime>,
    seq: u64,
    emitted: u64,
}

impl SourceState {
    pub fn new(
        vc: VcId,
        icr: Rate,
        pcr: Rate,
        app_cap: Option<Rate>,
        nrm: u32,
        windows: Vec<Window>,
    ) -> Result<Self> {
        if !(pcr.as_mbps() > 0.0) {
            return Err(Error::invalid(format!("{vc}: PCR must be positive")));
        }
        if !(icr.as_mbps() > 0.0) || icr > pcr {
            return Err(Error::invalid(format!("{vc}: ICR must be in (0, PCR]")));
        }
        if let Some(cap) = app_cap {
            if !(cap.as_mbps() > 0.0) {
                return Err(Error::invalid(format!(
                    "{vc}: application cap must be positive"
                )));
            }
        }
        if nrm < 1 {
            return Err(Error::invalid(format!("{vc}: Nrm must be at least 1")));
        }
        let mut prev_end = SimTime::ZERO;
        for (i, w) in windows.iter().enumerate() {
            if w.start < prev_end || w.stop.is_some_and(|s| s <= w.start) {
                return Err(Error::invalid(format!("{vc}: window {i} is out of order")));
            }
            match w.stop {
                Some(s) => prev_end = s,
                None if i + 1 < windows.len() => {
                    return Err(Error::invalid(format!(
                        "{vc}: open window {i} is not the last"
                    )));
                }
                None => {}
            }
        }
        let next_emit = windows.first().map_or(SimTime::ZERO, |w| w.start);
        Ok(SourceState {
            vc,
            acr: icr,
            icr,
            pcr,
            app_cap,
            rif: 1.0,
            nrm,
            // The first cell sent is a forward RM cell.
            cells_since_rm: nrm - 1,
            windows,
            next_emit,
            last_emit: None,
            seq: 0,
            emitted: 0,
        })
    }

    pub fn acr(&self) -> Rate {
        self.acr
    }

    pub fn icr(&self) -> Rate {
        self.icr
    }

    pub fn pcr(&self) -> Rate {
        self.pcr
    }

    pub fn app_cap(&self) -> Option<Rate> {
        self.app_cap
    }

    pub fn nrm(&self) -> u32 {
        self.nrm
    }

    pub fn next_emit(&self) -> SimTime {
        self.next_emit
    }

    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    /// Rate the source actually sends at while active.
    pub fn sending_rate(&self) -> Rate {
        match self.app_cap {
            Some(cap) => self.acr.min(cap),
            None => self.acr,
        }
    }

    pub fn inter_cell_gap(&self) -> SimTime {
        SimTime::from_micros(CELL_BITS / self.sending_rate().as_mbps())
    }

    pub fn is_active(&self, now: SimTime) -> bool {
        self.windows.iter().any(|w| w.contains(now))
    }

    /// End of the window containing `now`, if it has one.
    pub fn window_end(&self, now: SimTime) -> Option<SimTime> {
        self.windows
            .iter()
            .find(|w| w.contains(now))
            .and_then(|w| w.stop)
    }

    /// Emits the next cell; every `nrm`-th cell is a forward RM cell that
    /// advertises the ACR and asks for the peak rate.
    pub fn emit_next(&mut self, now: SimTime) -> Result<Cell> {
        if !self.is_active(now) {
            return Err(Error::Contract(format!(
                "{} asked to emit outside its active windows at {} µs",
                self.vc,
                now.as_micros()
            )));
        }
        if now < self.next_emit {
            return Err(Error::Contract(format!(
                "{} asked to emit at {} µs before its next slot {} µs",
                self.vc,
                now.as_micros(),
                self.next_emit.as_micros()
            )));
        }
        self.seq += 1;
        let cell = if self.cells_since_rm + 1 >= self.nrm {
            self.cells_since_rm = 0;
            Cell::rm(
                self.vc,
                CellKind::ForwardRm,
                RmPayload::new(self.acr, self.pcr),
                now,
                self.seq,
            )
        } else {
            self.cells_since_rm += 1;
            Cell::data(self.vc, now, self.seq)
        };
        self.emitted += 1;
        self.last_emit = Some(now);
        self.next_emit = now + self.inter_cell_gap();
        Ok(cell)
    }

    /// Adopts the explicit rate from a returning RM cell, capped at PCR.
    /// CI and NI are never set by the switches modelled here and are ignored.
    pub fn on_brm(&mut self, payload: &RmPayload) {
        let target = payload.er.min(self.pcr);
        self.acr = if target > self.acr && self.rif < 1.0 {
            self.acr + (target - self.acr) * self.rif
        } else {
            target
        };
    }

    /// After a rate change, pulls the next emission forward if the new gap
    /// allows it. Returns the new slot when it moved.
    pub fn reschedule(&mut self, now: SimTime) -> Option<SimTime> {
        let last = self.last_emit?;
        let candidate = (last + self.inter_cell_gap()).max(now);
        if candidate < self.next_emit {
            self.next_emit = candidate;
            Some(candidate)
        } else {
            None
        }
    }

    /// Sets the next slot at the start of a window.
    pub fn begin_window(&mut self, now: SimTime) {
        self.next_emit = match self.last_emit {
            Some(last) => (last + self.inter_cell_gap()).max(now),
            None => now,
        };
    }
}

/// Destination behaviour: reflect a forward RM cell back to its source
/// unchanged and without delay.
pub fn turn_around(frm: Cell) -> Result<Cell> {
    if frm.kind != CellKind::ForwardRm {
        return Err(Error::Contract(format!(
            "destination of {} asked to turn around a {:?} cell",
            frm.vc, frm.kind
        )));
    }
    Ok(frm.into_backward())
}

#[cfg(test)]
mod tests {
    use super::*;

    const PCR: Rate = Rate::mbps(155.52);

    fn persistent(acr: f64, cap: Option<f64>) -> SourceState {
        SourceState::new(
            VcId(0),
            Rate::mbps(acr),
            PCR,
            cap.map(Rate::mbps),
            32,
            vec![Window::from(SimTime::ZERO)],
        )
        .unwrap()
    }

    #[test]
    fn app_limited_gap() {
        let mut s = persistent(100.0, Some(10.0));
        s.emit_next(SimTime::ZERO).unwrap();
        assert!((s.next_emit().as_micros() - 42.4).abs() < 1e-12);
    }

    #[test]
    fn full_rate_gap() {
        let mut s = persistent(155.52, None);
        s.emit_next(SimTime::ZERO).unwrap();
        assert!((s.next_emit().as_micros() - 424.0 / 155.52).abs() < 1e-12);
        assert!((s.next_emit().as_micros() - 2.7263).abs() < 1e-4);
    }

    #[test]
    fn frm_cadence() {
        let mut s = persistent(50.0, None);
        let mut now = SimTime::ZERO;
        let mut kinds = Vec::new();
        for _ in 0..97 {
            let c = s.emit_next(now).unwrap();
            kinds.push(c.kind);
            if c.kind == CellKind::ForwardRm {
                assert_eq!(c.payload().unwrap().ccr, Rate::mbps(50.0));
                assert_eq!(c.payload().unwrap().er, PCR);
            }
            now = s.next_emit();
        }
        let rm_at: Vec<usize> = kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == CellKind::ForwardRm)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(rm_at, vec![0, 32, 64, 96]);
    }

    #[test]
    fn thirty_second_cell_is_frm() {
        let mut s = persistent(50.0, None);
        s.cells_since_rm = 31;
        let c = s.emit_next(SimTime::ZERO).unwrap();
        assert_eq!(c.kind, CellKind::ForwardRm);
        assert_eq!(c.payload().unwrap().ccr, s.acr());
    }

    #[test]
    fn sequence_numbers_increase() {
        let mut s = persistent(50.0, None);
        let a = s.emit_next(SimTime::ZERO).unwrap();
        let b = s.emit_next(s.next_emit()).unwrap();
        assert!(b.seq > a.seq);
    }

    #[test]
    fn emission_outside_window_is_rejected() {
        let mut s = SourceState::new(
            VcId(1),
            Rate::mbps(50.0),
            PCR,
            None,
            32,
            vec![Window::between(
                SimTime::from_millis(60.0),
                SimTime::from_millis(120.0),
            )],
        )
        .unwrap();
        assert!(matches!(
            s.emit_next(SimTime::from_millis(10.0)),
            Err(Error::Contract(_))
        ));
        assert!(s.emit_next(SimTime::from_millis(60.0)).is_ok());
        assert!(s.emit_next(SimTime::from_millis(120.0)).is_err());
    }

    #[test]
    fn brm_sets_acr() {
        let mut s = persistent(50.0, None);
        s.on_brm(&RmPayload::new(Rate::ZERO, Rate::mbps(70.0)));
        assert_eq!(s.acr(), Rate::mbps(70.0));
        s.on_brm(&RmPayload::new(Rate::ZERO, Rate::mbps(200.0)));
        assert_eq!(s.acr(), PCR);

        let mut s = persistent(90.0, None);
        s.on_brm(&RmPayload::new(Rate::ZERO, Rate::mbps(40.0)));
        assert_eq!(s.acr(), Rate::mbps(40.0));
    }

    #[test]
    fn rate_increase_pulls_next_slot_forward() {
        let mut s = persistent(10.0, None);
        s.emit_next(SimTime::ZERO).unwrap();
        assert_eq!(s.next_emit().as_micros(), 42.4);
        s.on_brm(&RmPayload::new(Rate::ZERO, Rate::mbps(106.0)));
        assert_eq!(
            s.reschedule(SimTime::from_micros(1.0)),
            Some(SimTime::from_micros(4.0))
        );
        s.on_brm(&RmPayload::new(Rate::ZERO, Rate::mbps(5.0)));
        assert_eq!(s.reschedule(SimTime::from_micros(2.0)), None);
    }

    #[test]
    fn turnaround_copies_payload() {
        let payload = RmPayload::new(Rate::mbps(50.0), PCR);
        let frm = Cell::rm(VcId(4), CellKind::ForwardRm, payload, SimTime::ZERO, 7);
        let brm = turn_around(frm).unwrap();
        assert_eq!(brm.kind, CellKind::BackwardRm);
        assert_eq!(brm.vc, VcId(4));
        assert_eq!(brm.seq, 7);
        assert_eq!(*brm.payload().unwrap(), payload);

        let mut reduced = payload;
        reduced.er = Rate::mbps(70.0);
        let frm = Cell::rm(VcId(4), CellKind::ForwardRm, reduced, SimTime::ZERO, 8);
        assert_eq!(
            turn_around(frm).unwrap().payload().unwrap().er,
            Rate::mbps(70.0)
        );

        assert!(turn_around(Cell::data(VcId(4), SimTime::ZERO, 1)).is_err());
    }

    #[test]
    fn construction_validates() {
        let w = vec![Window::from(SimTime::ZERO)];
        assert!(SourceState::new(VcId(0), Rate::ZERO, PCR, None, 32, w.clone()).is_err());
        assert!(SourceState::new(VcId(0), Rate::mbps(200.0), PCR, None, 32, w.clone()).is_err());
        assert!(SourceState::new(VcId(0), Rate::mbps(10.0), PCR, None, 0, w).is_err());
        let overlapping = vec![
            Window::between(SimTime::from_millis(0.0), SimTime::from_millis(10.0)),
            Window::between(SimTime::from_millis(5.0), SimTime::from_millis(20.0)),
        ];
        assert!(SourceState::new(VcId(0), Rate::mbps(10.0), PCR, None, 32, overlapping).is_err());
    }
}
