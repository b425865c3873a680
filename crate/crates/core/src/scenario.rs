//! Scenario description, the built-in configurations and the TOML file
//! format.
//!
//! Everything is stored in file units (Mbps, km, ms) so a scenario
//! round-trips through its text form exactly.
//!
//! ```toml
//! name = "two-source"
//!
//! [defaults]
//! pcr_mbps = 155.52
//! nrm = 32
//!
//! [[nodes]]
//! name = "S1"
//! kind = "source"
//!
//! [[links]]
//! id = "s1-sw1"
//! from = "S1"
//! to = "SW1"
//! rate_mbps = 155.52
//! length_km = 1000.0
//!
//! [[vcs]]
//! name = "S1"
//! route = ["s1-sw1", "sw1-sw2", "sw2-d1"]
//! icr_mbps = 50.0
//!
//! [[vcs.windows]]
//! start_ms = 0.0
//! ```

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::propagation_delay;

pub const LINK_RATE_MBPS: f64 = 155.52;
pub const LINK_LENGTH_KM: f64 = 1000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Source,
    Switch,
    Destination,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
}

/// A full-duplex link; connections may only traverse it from `from` to `to`
/// (their RM cells return the other way).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub id: String,
    pub from: String,
    pub to: String,
    pub rate_mbps: f64,
    pub length_km: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub start_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VcSpec {
    pub name: String,
    pub route: Vec<String>,
    pub icr_mbps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub app_cap_mbps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pcr_mbps: Option<f64>,
    pub windows: Vec<WindowSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Defaults {
    pub pcr_mbps: f64,
    pub nrm: u32,
}

impl Default for Defaults {
    fn default() -> Self {
        Defaults {
            pcr_mbps: LINK_RATE_MBPS,
            nrm: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub defaults: Defaults,
    #[serde(default)]
    pub nodes: Vec<Node>,
    #[serde(default)]
    pub links: Vec<LinkSpec>,
    #[serde(default)]
    pub vcs: Vec<VcSpec>,
}

impl Scenario {
    pub fn empty(name: &str) -> Self {
        Scenario {
            name: name.to_string(),
            defaults: Defaults::default(),
            nodes: Vec::new(),
            links: Vec::new(),
            vcs: Vec::new(),
        }
    }

    pub fn node(&self, name: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn link(&self, id: &str) -> Option<&LinkSpec> {
        self.links.iter().find(|l| l.id == id)
    }

    pub fn vc(&self, name: &str) -> Option<&VcSpec> {
        self.vcs.iter().find(|v| v.name == name)
    }

    pub fn pcr_of(&self, vc: &VcSpec) -> f64 {
        vc.pcr_mbps.unwrap_or(self.defaults.pcr_mbps)
    }

    /// One-way propagation delay of a connection in ms.
    pub fn one_way_delay_ms(&self, vc: &str) -> Result<f64> {
        let vc = self
            .vc(vc)
            .ok_or_else(|| Error::config(format!("vcs[{vc}]"), "no such connection"))?;
        let mut total = 0.0;
        for id in &vc.route {
            let link = self.link(id).ok_or_else(|| {
                Error::config(
                    format!("vcs[{}].route", vc.name),
                    format!("unknown link {id}"),
                )
            })?;
            total += propagation_delay(link.length_km)?.as_millis();
        }
        Ok(total)
    }

    pub fn rtt_ms(&self, vc: &str) -> Result<f64> {
        Ok(2.0 * self.one_way_delay_ms(vc)?)
    }

    /// Links whose sending end is a switch, i.e. ABR-controlled output ports.
    pub fn switch_output_links(&self) -> Vec<&LinkSpec> {
        self.links
            .iter()
            .filter(|l| {
                self.node(&l.from)
                    .is_some_and(|n| n.kind == NodeKind::Switch)
            })
            .collect()
    }

    /// Semantic checks; errors carry the path of the offending field.
    pub fn validate(&self) -> Result<()> {
        let d = &self.defaults;
        if !(d.pcr_mbps > 0.0 && d.pcr_mbps.is_finite()) {
            return Err(Error::config("defaults.pcr_mbps", "must be positive"));
        }
        if d.nrm < 1 {
            return Err(Error::config("defaults.nrm", "must be at least 1"));
        }

        let mut nodes = BTreeMap::new();
        for n in &self.nodes {
            if nodes.insert(n.name.as_str(), n.kind).is_some() {
                return Err(Error::config(
                    format!("nodes[{}]", n.name),
                    "duplicate node name",
                ));
            }
        }

        let mut links = BTreeMap::new();
        for l in &self.links {
            let path = format!("links[{}]", l.id);
            if links.insert(l.id.as_str(), l).is_some() {
                return Err(Error::config(path, "duplicate link id"));
            }
            for (field, end) in [("from", &l.from), ("to", &l.to)] {
                if !nodes.contains_key(end.as_str()) {
                    return Err(Error::config(
                        format!("{path}.{field}"),
                        format!("unknown node {end}"),
                    ));
                }
            }
            if l.from == l.to {
                return Err(Error::config(
                    format!("{path}.to"),
                    "link loops back to its own node",
                ));
            }
            if !(l.rate_mbps > 0.0 && l.rate_mbps.is_finite()) {
                return Err(Error::config(
                    format!("{path}.rate_mbps"),
                    format!("must be positive, got {}", l.rate_mbps),
                ));
            }
            if !(l.length_km >= 0.0 && l.length_km.is_finite()) {
                return Err(Error::config(
                    format!("{path}.length_km"),
                    format!("must be non-negative, got {}", l.length_km),
                ));
            }
        }

        let mut names = BTreeSet::new();
        for vc in &self.vcs {
            let path = format!("vcs[{}]", vc.name);
            if !names.insert(vc.name.as_str()) {
                return Err(Error::config(path, "duplicate connection name"));
            }
            self.validate_route(vc, &nodes, &links, &path)?;

            let pcr = self.pcr_of(vc);
            if !(pcr > 0.0 && pcr.is_finite()) {
                return Err(Error::config(
                    format!("{path}.pcr_mbps"),
                    "must be positive",
                ));
            }
            if !(vc.icr_mbps > 0.0 && vc.icr_mbps <= pcr) {
                return Err(Error::config(
                    format!("{path}.icr_mbps"),
                    format!("must be in (0, {pcr}], got {}", vc.icr_mbps),
                ));
            }
            if let Some(cap) = vc.app_cap_mbps {
                if !(cap > 0.0 && cap.is_finite()) {
                    return Err(Error::config(
                        format!("{path}.app_cap_mbps"),
                        "must be positive",
                    ));
                }
            }
            let mut prev_end = 0.0;
            for (i, w) in vc.windows.iter().enumerate() {
                let wpath = format!("{path}.windows[{i}]");
                if !(w.start_ms >= prev_end && w.start_ms.is_finite()) {
                    return Err(Error::config(
                        format!("{wpath}.start_ms"),
                        "windows must be ordered and non-overlapping",
                    ));
                }
                match w.stop_ms {
                    Some(stop) if !(stop > w.start_ms && stop.is_finite()) => {
                        return Err(Error::config(
                            format!("{wpath}.stop_ms"),
                            "must be after start_ms",
                        ));
                    }
                    Some(stop) => prev_end = stop,
                    None if i + 1 < vc.windows.len() => {
                        return Err(Error::config(
                            format!("{wpath}.stop_ms"),
                            "only the last window may be open-ended",
                        ));
                    }
                    None => {}
                }
            }
        }
        Ok(())
    }

    fn validate_route(
        &self,
        vc: &VcSpec,
        nodes: &BTreeMap<&str, NodeKind>,
        links: &BTreeMap<&str, &LinkSpec>,
        path: &str,
    ) -> Result<()> {
        let rpath = format!("{path}.route");
        if vc.route.is_empty() {
            return Err(Error::config(rpath, "route is empty"));
        }
        let mut hops = Vec::with_capacity(vc.route.len());
        for (i, id) in vc.route.iter().enumerate() {
            let link = links.get(id.as_str()).ok_or_else(|| {
                Error::config(format!("{rpath}[{i}]"), format!("unknown link {id}"))
            })?;
            hops.push(*link);
        }
        for (i, pair) in hops.windows(2).enumerate() {
            if pair[0].to != pair[1].from {
                return Err(Error::config(
                    format!("{rpath}[{}]", i + 1),
                    format!("link {} does not continue from {}", pair[1].id, pair[0].to),
                ));
            }
        }
        let first = hops[0];
        if nodes[first.from.as_str()] != NodeKind::Source {
            return Err(Error::config(
                format!("{rpath}[0]"),
                format!("route must start at a source, {} is not one", first.from),
            ));
        }
        let last = hops[hops.len() - 1];
        if nodes[last.to.as_str()] != NodeKind::Destination {
            return Err(Error::config(
                format!("{rpath}[{}]", hops.len() - 1),
                format!("route must end at a destination, {} is not one", last.to),
            ));
        }
        for (i, l) in hops.iter().enumerate().skip(1) {
            if nodes[l.from.as_str()] != NodeKind::Switch {
                return Err(Error::config(
                    format!("{rpath}[{i}]"),
                    format!("intermediate node {} is not a switch", l.from),
                ));
            }
        }
        let mut seen = BTreeSet::new();
        for (i, id) in vc.route.iter().enumerate() {
            if !seen.insert(id.as_str()) {
                return Err(Error::config(
                    format!("{rpath}[{i}]"),
                    format!("link {id} used twice"),
                ));
            }
        }
        Ok(())
    }
}

/// Parses and validates a scenario file.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|span| text[..span.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(0);
        Error::Syntax {
            line,
            msg: e.message().to_string(),
        }
    })?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn serialize_scenario(scenario: &Scenario) -> String {
    toml::to_string(scenario).expect("scenario is always representable as TOML")
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 3] = ["three-source", "upstream", "two-source"];

pub fn builtin(name: &str) -> Option<Scenario> {
    match name {
        "three-source" => Some(build_three_source()),
        "upstream" => Some(build_upstream()),
        "two-source" => Some(build_two_source_transient()),
        _ => None,
    }
}

struct Builder {
    s: Scenario,
}

impl Builder {
    fn new(name: &str) -> Self {
        Builder {
            s: Scenario::empty(name),
        }
    }

    fn node(&mut self, name: &str, kind: NodeKind) -> &mut Self {
        self.s.nodes.push(Node {
            name: name.to_string(),
            kind,
        });
        self
    }

    fn link(&mut self, from: &str, to: &str) -> String {
        let id = format!("{}-{}", from.to_lowercase(), to.to_lowercase());
        self.s.links.push(LinkSpec {
            id: id.clone(),
            from: from.to_string(),
            to: to.to_string(),
            rate_mbps: LINK_RATE_MBPS,
            length_km: LINK_LENGTH_KM,
        });
        id
    }

    fn vc(
        &mut self,
        name: &str,
        route: Vec<String>,
        icr: f64,
        app_cap: Option<f64>,
        windows: Vec<WindowSpec>,
    ) {
        self.s.vcs.push(VcSpec {
            name: name.to_string(),
            route,
            icr_mbps: icr,
            app_cap_mbps: app_cap,
            pcr_mbps: None,
            windows,
        });
    }

    fn finish(self) -> Scenario {
        debug_assert!(self.s.validate().is_ok());
        self.s
    }
}

fn persistent() -> Vec<WindowSpec> {
    vec![WindowSpec {
        start_ms: 0.0,
        stop_ms: None,
    }]
}

/// Three connections sharing the `SW1 -> SW2` port. S1 takes an extra hop
/// through `SW0` (RTT 40 ms against 30 ms) and never sends faster than
/// 10 Mbps.
pub fn build_three_source() -> Scenario {
    let mut b = Builder::new("three-source");
    for n in ["S1", "S2", "S3"] {
        b.node(n, NodeKind::Source);
    }
    for n in ["SW0", "SW1", "SW2"] {
        b.node(n, NodeKind::Switch);
    }
    for n in ["D1", "D2", "D3"] {
        b.node(n, NodeKind::Destination);
    }
    let s1 = b.link("S1", "SW0");
    let trunk0 = b.link("SW0", "SW1");
    let s2 = b.link("S2", "SW1");
    let s3 = b.link("S3", "SW1");
    let bottleneck = b.link("SW1", "SW2");
    let d1 = b.link("SW2", "D1");
    let d2 = b.link("SW2", "D2");
    let d3 = b.link("SW2", "D3");
    b.vc(
        "S1",
        vec![s1, trunk0, bottleneck.clone(), d1],
        10.0,
        Some(10.0),
        persistent(),
    );
    b.vc(
        "S2",
        vec![s2, bottleneck.clone(), d2],
        45.0,
        None,
        persistent(),
    );
    b.vc("S3", vec![s3, bottleneck, d3], 105.0, None, persistent());
    b.finish()
}

/// Seventeen connections: S1..S15 share link 1 (`SW1 -> SW2`); S1 then
/// shares link 2 (`SW2 -> SW3`) with S16 and S17.
pub fn build_upstream() -> Scenario {
    let mut b = Builder::new("upstream");
    for i in 1..=17 {
        b.node(&format!("S{i}"), NodeKind::Source);
    }
    for n in ["SW1", "SW2", "SW3"] {
        b.node(n, NodeKind::Switch);
    }
    for i in 1..=17 {
        b.node(&format!("D{i}"), NodeKind::Destination);
    }
    let link1 = b.link("SW1", "SW2");
    let link2 = b.link("SW2", "SW3");
    for i in 1..=15 {
        let access = b.link(&format!("S{i}"), "SW1");
        let route = if i == 1 {
            let exit = b.link("SW3", "D1");
            vec![access, link1.clone(), link2.clone(), exit]
        } else {
            let exit = b.link("SW2", &format!("D{i}"));
            vec![access, link1.clone(), exit]
        };
        b.vc(&format!("S{i}"), route, 10.0, None, persistent());
    }
    for i in 16..=17 {
        let access = b.link(&format!("S{i}"), "SW2");
        let exit = b.link("SW3", &format!("D{i}"));
        b.vc(
            &format!("S{i}"),
            vec![access, link2.clone(), exit],
            10.0,
            None,
            persistent(),
        );
    }
    b.finish()
}

/// Two connections through `SW1 -> SW2`, each with a 30 ms RTT. S2 is
/// active only between 60 ms and 120 ms.
pub fn build_two_source_transient() -> Scenario {
    let mut b = Builder::new("two-source");
    b.node("S1", NodeKind::Source)
        .node("S2", NodeKind::Source)
        .node("SW1", NodeKind::Switch)
        .node("SW2", NodeKind::Switch)
        .node("D1", NodeKind::Destination)
        .node("D2", NodeKind::Destination);
    let a1 = b.link("S1", "SW1");
    let a2 = b.link("S2", "SW1");
    let bottleneck = b.link("SW1", "SW2");
    let d1 = b.link("SW2", "D1");
    let d2 = b.link("SW2", "D2");
    b.vc(
        "S1",
        vec![a1, bottleneck.clone(), d1],
        50.0,
        None,
        persistent(),
    );
    b.vc(
        "S2",
        vec![a2, bottleneck, d2],
        50.0,
        None,
        vec![WindowSpec {
            start_ms: 60.0,
            stop_ms: Some(120.0),
        }],
    );
    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builders_validate() {
        for name in BUILTIN_NAMES {
            builtin(name).unwrap().validate().unwrap();
        }
        assert!(builtin("nope").is_none());
    }

    #[test]
    fn three_source_delays() {
        let s = build_three_source();
        assert_eq!(s.rtt_ms("S1").unwrap(), 40.0);
        assert_eq!(s.rtt_ms("S2").unwrap(), 30.0);
        assert_eq!(s.rtt_ms("S3").unwrap(), 30.0);
        let icr: f64 = s.vcs.iter().map(|v| v.icr_mbps).sum();
        assert_eq!(icr, 160.0);
        assert!(icr > LINK_RATE_MBPS);
        assert_eq!(s.vc("S1").unwrap().app_cap_mbps, Some(10.0));
        for vc in &s.vcs {
            assert!(vc.route.contains(&"sw1-sw2".to_string()));
        }
    }

    #[test]
    fn upstream_shape() {
        let s = build_upstream();
        assert_eq!(s.vcs.len(), 17);
        let on_link1 = s
            .vcs
            .iter()
            .filter(|v| v.route.contains(&"sw1-sw2".into()))
            .count();
        let on_link2: Vec<&str> = s
            .vcs
            .iter()
            .filter(|v| v.route.contains(&"sw2-sw3".into()))
            .map(|v| v.name.as_str())
            .collect();
        assert_eq!(on_link1, 15);
        assert_eq!(on_link2, vec!["S1", "S16", "S17"]);
        assert!(s
            .links
            .iter()
            .all(|l| l.length_km == 1000.0 && l.rate_mbps == 155.52));
    }

    #[test]
    fn two_source_shape() {
        let s = build_two_source_transient();
        assert_eq!(s.rtt_ms("S1").unwrap(), 30.0);
        assert_eq!(s.rtt_ms("S2").unwrap(), 30.0);
        assert_eq!(
            s.vc("S2").unwrap().windows,
            vec![WindowSpec {
                start_ms: 60.0,
                stop_ms: Some(120.0)
            }]
        );
        assert_eq!(s.vc("S1").unwrap().windows, persistent());
    }

    #[test]
    fn round_trip() {
        for name in BUILTIN_NAMES {
            let s = builtin(name).unwrap();
            let text = serialize_scenario(&s);
            assert_eq!(parse_scenario(&text).unwrap(), s, "{name}");
        }
    }

    #[test]
    fn missing_link_names_the_vc() {
        let mut s = build_two_source_transient();
        s.vcs[1].route[1] = "ghost".into();
        let err = parse_scenario(&serialize_scenario(&s)).unwrap_err();
        match err {
            Error::Config { path, msg } => {
                assert!(path.starts_with("vcs[S2].route"), "{path}");
                assert!(msg.contains("ghost"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nrm_override() {
        let text =
            serialize_scenario(&build_two_source_transient()).replace("nrm = 32", "nrm = 16");
        assert_eq!(parse_scenario(&text).unwrap().defaults.nrm, 16);
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let text = "name = \"x\"\n# comment\n[defaults]\npcr_mbps = 1.0\nnrm = 32\nbogus = 3\n";
        match parse_scenario(text).unwrap_err() {
            Error::Syntax { line, msg } => {
                assert!(line >= 3, "line {line}");
                assert!(msg.contains("bogus"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_error_has_line() {
        let text = "name = \"x\"\n\n[[links]\n";
        match parse_scenario(text).unwrap_err() {
            Error::Syntax { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_rate_has_field_path() {
        let mut s = build_three_source();
        s.links[0].rate_mbps = -1.0;
        match s.validate().unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "links[s1-sw0].rate_mbps"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn broken_route_rejected() {
        let mut s = build_three_source();
        s.vcs[1].route.swap(1, 2);
        assert!(matches!(s.validate(), Err(Error::Config { .. })));
    }

    #[test]
    fn overlapping_windows_rejected() {
        let mut s = build_two_source_transient();
        s.vcs[1].windows.push(WindowSpec {
            start_ms: 100.0,
            stop_ms: None,
        });
        assert!(s.validate().is_err());
    }

    #[test]
    fn comments_are_accepted() {
        let text = format!(
            "# leading comment\n{}",
            serialize_scenario(&build_three_source())
        );
        assert!(parse_scenario(&text).is_ok());
    }
}
