//! Run summaries: steady-state rates, convergence, fairness, queues.

use std::fmt;

use crate::engine::RunOutput;
use crate::error::Result;
use crate::maxmin::{maxmin_allocate, Cap, NetworkModel};
use crate::scenario::{NodeKind, Scenario};
use crate::switch::SwitchConfig;
use crate::trace::Series;
use crate::types::{SimTime, VcId};

/// Fraction of the run, counted from the end, treated as steady state.
pub const STEADY_FRACTION: f64 = 0.25;
/// Band around the final mean that counts as converged.
pub const CONVERGENCE_BAND: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct VcReport {
    pub name: String,
    pub mean_acr: f64,
    pub sending_rate: f64,
    /// Max-min allocation over the connections active at the end of the run.
    pub oracle: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PortReport {
    pub label: String,
    pub max_queue: u64,
    pub mean_util: f64,
    pub final_neff: f64,
    pub final_fair_share: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub scenario: String,
    pub variant: String,
    pub duration: SimTime,
    pub vcs: Vec<VcReport>,
    pub convergence: Option<SimTime>,
    pub jain: Option<f64>,
    pub ports: Vec<PortReport>,
}

/// Jain's index `(Σx)² / (n Σx²)`; `None` for an empty or all-zero input.
pub fn jain_index(xs: &[f64]) -> Option<f64> {
    let sum: f64 = xs.iter().sum();
    let sq: f64 = xs.iter().map(|x| x * x).sum();
    (!xs.is_empty() && sq > 0.0).then(|| sum * sum / (xs.len() as f64 * sq))
}

/// First instant after which every series stays within `band` (relative)
/// of its target through `end`. `None` if some series ends outside it.
pub fn convergence_time(series: &[(&Series, f64)], band: f64, end: SimTime) -> Option<SimTime> {
    let mut latest = SimTime::ZERO;
    for (s, target) in series {
        let inside = |v: f64| (v - target).abs() <= band * target.abs();
        let pts: Vec<(SimTime, f64)> = s
            .points
            .iter()
            .copied()
            .filter(|(t, _)| *t <= end)
            .collect();
        match pts.iter().rposition(|(_, v)| !inside(*v)) {
            None => {}
            Some(i) if i + 1 == pts.len() => return None,
            Some(i) => latest = latest.max(pts[i + 1].0),
        }
    }
    Some(latest)
}

/// First instant in `[from, until]` after which `series` stays within
/// `band` of `target` until `until`.
pub fn settle_time(
    series: &Series,
    from: SimTime,
    until: SimTime,
    target: f64,
    band: f64,
) -> Option<SimTime> {
    let inside = |v: f64| (v - target).abs() <= band * target.abs();
    let mut candidate = if series.value_at(from).is_some_and(inside) {
        Some(from)
    } else {
        None
    };
    for (t, v) in series.samples_in(from, until) {
        if inside(v) {
            if candidate.is_none() {
                candidate = Some(t);
            }
        } else {
            candidate = None;
        }
    }
    candidate
}

/// Connection names, the network and per-connection caps, index-aligned.
pub type OracleInput = (Vec<String>, NetworkModel<f64>, Vec<Cap<f64>>);

/// Max-min oracle model: switch output links at their ABR capacity, every
/// other link at its line rate. Connections are capped at the smaller of
/// PCR and their application ceiling.
pub fn oracle_model(
    scenario: &Scenario,
    cfg: &SwitchConfig,
    include: impl Fn(&str) -> bool,
) -> Result<OracleInput> {
    let links = scenario
        .links
        .iter()
        .map(|l| {
            let is_switch = scenario
                .node(&l.from)
                .is_some_and(|n| n.kind == NodeKind::Switch);
            let cap = if is_switch {
                cfg.capacity_override
                    .map(|c| c.as_mbps())
                    .unwrap_or(cfg.target_utilization * l.rate_mbps)
            } else {
                l.rate_mbps
            };
            (l.id.clone(), cap)
        })
        .collect();
    let mut names = Vec::new();
    let mut routes = Vec::new();
    let mut caps = Vec::new();
    for (i, vc) in scenario.vcs.iter().enumerate() {
        if !include(&vc.name) {
            continue;
        }
        names.push(vc.name.clone());
        routes.push((VcId(i), vc.route.clone()));
        let pcr = scenario.pcr_of(vc);
        caps.push(Cap::Finite(vc.app_cap_mbps.map_or(pcr, |c| c.min(pcr))));
    }
    Ok((names, NetworkModel::new(links, routes)?, caps))
}

/// Max-min allocation of every connection in the scenario.
pub fn oracle_allocation(scenario: &Scenario, cfg: &SwitchConfig) -> Result<Vec<(String, f64)>> {
    scenario.validate()?;
    let (names, net, caps) = oracle_model(scenario, cfg, |_| true)?;
    let alloc = maxmin_allocate(&net, &caps)?;
    Ok(names.into_iter().zip(alloc).collect())
}

pub fn summarize(
    scenario: &Scenario,
    cfg: &SwitchConfig,
    out: &RunOutput,
    duration: SimTime,
) -> Result<RunReport> {
    let end = duration;
    let steady_from = duration * (1.0 - STEADY_FRACTION);
    let last = |s: &Series| s.last().unwrap_or(0.0);

    let active_at_end = |name: &str| {
        scenario.vc(name).is_some_and(|vc| {
            let t = end.as_millis();
            vc.windows
                .iter()
                .any(|w| t >= w.start_ms && w.stop_ms.is_none_or(|s| t <= s))
        })
    };
    let (oracle_names, net, caps) = oracle_model(scenario, cfg, active_at_end)?;
    let oracle = if oracle_names.is_empty() {
        Vec::new()
    } else {
        oracle_names
            .into_iter()
            .zip(maxmin_allocate(&net, &caps)?)
            .collect()
    };

    let mut vcs = Vec::new();
    for trace in &out.traces.vcs {
        let mean_acr = trace
            .acr
            .time_mean(steady_from, end)
            .unwrap_or_else(|| last(&trace.acr));
        let sending_rate = trace.sending_rate(steady_from, end).unwrap_or(0.0);
        vcs.push(VcReport {
            name: trace.name.clone(),
            mean_acr,
            sending_rate,
            oracle: oracle
                .iter()
                .find(|(n, _)| *n == trace.name)
                .map(|(_, a)| *a),
        });
    }

    let targets: Vec<(&Series, f64)> = out
        .traces
        .vcs
        .iter()
        .zip(&vcs)
        .map(|(t, r)| (&t.acr, r.mean_acr))
        .collect();
    let convergence = convergence_time(&targets, CONVERGENCE_BAND, end);

    let normalized: Vec<f64> = vcs
        .iter()
        .filter_map(|v| v.oracle.filter(|o| *o > 0.0).map(|o| v.sending_rate / o))
        .collect();
    let jain = jain_index(&normalized);

    let ports = out
        .traces
        .ports
        .iter()
        .map(|p| {
            let max_queue = out
                .ports
                .iter()
                .find(|s| s.label == p.label)
                .map_or(0, |s| s.max_queue);
            PortReport {
                label: p.label.clone(),
                max_queue,
                mean_util: if end > steady_from {
                    p.utilization(steady_from, end).unwrap_or(0.0)
                } else {
                    0.0
                },
                final_neff: last(&p.neff),
                final_fair_share: last(&p.fair_share),
            }
        })
        .collect();

    Ok(RunReport {
        scenario: scenario.name.clone(),
        variant: cfg.variant.to_string(),
        duration,
        vcs,
        convergence,
        jain,
        ports,
    })
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario: {}", self.scenario)?;
        writeln!(f, "variant: {}", self.variant)?;
        writeln!(f, "duration_ms: {}", self.duration.as_millis())?;
        writeln!(f)?;
        writeln!(
            f,
            "connections (steady state = last {}% of run):",
            STEADY_FRACTION * 100.0
        )?;
        writeln!(
            f,
            "  {:<8} {:>12} {:>14} {:>12}",
            "vc", "mean_acr", "sending_rate", "max_min"
        )?;
        for v in &self.vcs {
            let oracle = v.oracle.map_or("-".to_string(), |o| format!("{o:.3}"));
            writeln!(
                f,
                "  {:<8} {:>12.3} {:>14.3} {:>12}",
                v.name, v.mean_acr, v.sending_rate, oracle
            )?;
        }
        writeln!(f)?;
        match self.convergence {
            Some(t) => writeln!(f, "convergence_ms: {:.3}", t.as_millis())?,
            None => writeln!(f, "convergence_ms: not converged")?,
        }
        match self.jain {
            Some(j) => writeln!(f, "jain_index: {j:.6}")?,
            None => writeln!(f, "jain_index: -")?,
        }
        writeln!(f)?;
        writeln!(f, "ports:")?;
        writeln!(
            f,
            "  {:<12} {:>10} {:>10} {:>10} {:>12}",
            "port", "max_queue", "mean_util", "neff", "fair_share"
        )?;
        for p in &self.ports {
            writeln!(
                f,
                "  {:<12} {:>10} {:>10.4} {:>10.4} {:>12.3}",
                p.label, p.max_queue, p.mean_util, p.final_neff, p.final_fair_share
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::build_three_source;
    use crate::types::Rate;

    #[test]
    fn jain_examples() {
        assert_eq!(jain_index(&[1.0, 1.0, 1.0]), Some(1.0));
        assert_eq!(jain_index(&[1.0, 0.0]), Some(0.5));
        assert_eq!(jain_index(&[]), None);
    }

    fn series(points: &[(f64, f64)]) -> Series {
        let mut s = Series::default();
        for &(t, v) in points {
            s.push(SimTime::from_millis(t), v);
        }
        s
    }

    #[test]
    fn convergence_after_last_excursion() {
        let a = series(&[(0.0, 10.0), (5.0, 100.0), (8.0, 50.0), (9.0, 51.0)]);
        let b = series(&[(0.0, 20.0), (3.0, 20.5)]);
        let t = convergence_time(&[(&a, 50.0), (&b, 20.0)], 0.05, SimTime::from_millis(10.0));
        assert_eq!(t, Some(SimTime::from_millis(8.0)));
        let t = convergence_time(&[(&a, 80.0)], 0.05, SimTime::from_millis(10.0));
        assert_eq!(t, None);
    }

    #[test]
    fn settle_inside_window() {
        let a = series(&[(0.0, 10.0), (5.0, 49.0), (6.0, 60.0), (7.0, 50.0)]);
        let t = settle_time(
            &a,
            SimTime::from_millis(1.0),
            SimTime::from_millis(10.0),
            50.0,
            0.05,
        );
        assert_eq!(t, Some(SimTime::from_millis(7.0)));
    }

    #[test]
    fn oracle_for_three_source() {
        let alloc = oracle_allocation(&build_three_source(), &SwitchConfig::default()).unwrap();
        let f_star = (0.9 * 155.52 - 10.0) / 2.0;
        assert_eq!(alloc[0], ("S1".to_string(), 10.0));
        assert!((alloc[1].1 - f_star).abs() < 1e-9);
        assert!((alloc[2].1 - f_star).abs() < 1e-9);

        let cfg = SwitchConfig {
            capacity_override: Some(Rate::mbps(150.0)),
            ..Default::default()
        };
        let alloc = oracle_allocation(&build_three_source(), &cfg).unwrap();
        assert_eq!(alloc[1].1, 70.0);
    }
}
