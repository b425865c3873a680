//! Time series collected during a run.

use crate::error::{Error, Result};
use crate::types::{SimTime, CELL_BITS};

/// Time-ordered samples of a step function.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Series {
    pub points: Vec<(SimTime, f64)>,
}

impl Series {
    pub fn push(&mut self, t: SimTime, v: f64) {
        debug_assert!(self.points.last().is_none_or(|(last, _)| *last <= t));
        self.points.push((t, v));
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> Option<f64> {
        self.points.last().map(|p| p.1)
    }

    /// Value of the step function at `t`: the last sample at or before it.
    pub fn value_at(&self, t: SimTime) -> Option<f64> {
        let idx = self.points.partition_point(|(pt, _)| *pt <= t);
        idx.checked_sub(1).map(|i| self.points[i].1)
    }

    /// Samples with `from <= t <= to`.
    pub fn samples_in(
        &self,
        from: SimTime,
        to: SimTime,
    ) -> impl Iterator<Item = (SimTime, f64)> + '_ {
        self.points
            .iter()
            .copied()
            .filter(move |(t, _)| *t >= from && *t <= to)
    }

    /// Time-weighted mean of the step function over `[from, to)`.
    pub fn time_mean(&self, from: SimTime, to: SimTime) -> Option<f64> {
        let span = (to - from).as_micros();
        if !(span > 0.0) {
            return None;
        }
        let mut value = self.value_at(from)?;
        let mut cursor = from;
        let mut acc = 0.0;
        for (t, v) in self.samples_in(from, to) {
            if t > cursor {
                acc += value * (t - cursor).as_micros();
                cursor = t;
            }
            value = v;
        }
        acc += value * (to - cursor).as_micros();
        Some(acc / span)
    }

    /// Extremes of the samples inside `[from, to]`, including the value
    /// carried into the window.
    pub fn range_in(&self, from: SimTime, to: SimTime) -> Option<(f64, f64)> {
        let carried = self.value_at(from);
        carried
            .into_iter()
            .chain(self.samples_in(from, to).map(|(_, v)| v))
            .fold(None, |acc, v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((f64::min(lo, v), f64::max(hi, v))),
            })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VcTrace {
    pub name: String,
    /// Allowed cell rate in Mbps, sampled on every change.
    pub acr: Series,
    /// Cumulative cells emitted, on the sampling grid.
    pub emitted: Series,
}

impl VcTrace {
    /// Mean emission rate in Mbps over `[from, to]`, from grid counts.
    pub fn sending_rate(&self, from: SimTime, to: SimTime) -> Option<f64> {
        let a = self.emitted.value_at(from)?;
        let b = self.emitted.value_at(to)?;
        let span = (to - from).as_micros();
        (span > 0.0).then(|| (b - a) * CELL_BITS / span)
    }
}

/// Series for one ABR-controlled output port.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PortTrace {
    pub label: String,
    pub link_rate: f64,
    /// Queue length in cells.
    pub queue: Series,
    /// Active-connection estimate of the port's variant.
    pub neff: Series,
    pub fair_share: Series,
    /// Fraction of link rate used since the previous utilisation sample.
    pub util: Series,
    /// Cumulative cells transmitted, on the sampling grid.
    pub departures: Series,
}

impl PortTrace {
    /// Cells transmitted in `[from, to]` over what the link could carry.
    pub fn utilization(&self, from: SimTime, to: SimTime) -> Result<f64> {
        let span = (to - from).as_micros();
        if !(span > 0.0) {
            return Err(Error::invalid(
                "utilization window must have positive length",
            ));
        }
        let a = self.departures.value_at(from).unwrap_or(0.0);
        let b = self
            .departures
            .value_at(to)
            .ok_or_else(|| Error::invalid("utilization window outside the run"))?;
        Ok((b - a) * CELL_BITS / (span * self.link_rate))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceSet {
    /// Sampling grid shared by the cumulative series.
    pub grid: Vec<SimTime>,
    pub vcs: Vec<VcTrace>,
    pub ports: Vec<PortTrace>,
}

impl TraceSet {
    pub fn vc(&self, name: &str) -> Option<&VcTrace> {
        self.vcs.iter().find(|v| v.name == name)
    }

    pub fn port(&self, label: &str) -> Option<&PortTrace> {
        self.ports.iter().find(|p| p.label == label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(ms: f64) -> SimTime {
        SimTime::from_millis(ms)
    }

    #[test]
    fn step_lookup_and_mean() {
        let mut s = Series::default();
        s.push(t(0.0), 10.0);
        s.push(t(1.0), 20.0);
        s.push(t(3.0), 40.0);
        assert_eq!(s.value_at(t(0.5)), Some(10.0));
        assert_eq!(s.value_at(t(1.0)), Some(20.0));
        assert_eq!(s.value_at(t(-1.0)), None);
        // 1 ms at 10, 2 ms at 20, 1 ms at 40.
        assert_eq!(s.time_mean(t(0.0), t(4.0)), Some(22.5));
        assert_eq!(s.range_in(t(0.5), t(2.0)), Some((10.0, 20.0)));
    }

    #[test]
    fn utilization_window() {
        let mut p = PortTrace {
            link_rate: 155.52,
            ..Default::default()
        };
        p.departures.push(t(0.0), 0.0);
        p.departures.push(t(1.0), 1000.0 * 155.52 / 424.0);
        let u = p.utilization(t(0.0), t(1.0)).unwrap();
        assert!((u - 1.0).abs() < 1e-12);
        assert!(p.utilization(t(1.0), t(1.0)).is_err());
    }
}
