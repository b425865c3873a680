//! Offline fairness mathematics: activity levels, the effective number of
//! active connections, its fixed-point iteration, single-link water-filling
//! and the multi-link max-min allocation.
//!
//! Everything here is generic over [`Scalar`], so the same code runs over
//! floating point and over exact rationals.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::VcId;

/// Default relative tolerance for [`neff_fixed_point`].
pub const DEFAULT_TOL: f64 = 1e-6;
/// Default iteration budget for [`neff_fixed_point`].
pub const DEFAULT_MAX_ITER: usize = 100;

/// Demand ceiling of one connection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cap<T> {
    Finite(T),
    /// Greedy: takes whatever it is offered.
    Unbounded,
}

impl<T: Scalar> Cap<T> {
    /// `min(cap, level)`.
    pub fn clamp(self, level: T) -> T {
        match self {
            Cap::Finite(c) => c.min_of(level),
            Cap::Unbounded => level,
        }
    }

    pub fn is_at_least(self, level: T) -> bool {
        match self {
            Cap::Finite(c) => c >= level,
            Cap::Unbounded => true,
        }
    }

    pub fn finite(self) -> Option<T> {
        match self {
            Cap::Finite(c) => Some(c),
            Cap::Unbounded => None,
        }
    }
}

/// Per-connection demand caps contending for one link's ABR capacity.
#[derive(Clone, Debug, PartialEq)]
pub struct DemandProfile<T> {
    caps: Vec<Cap<T>>,
    capacity: T,
}

impl<T: Scalar> DemandProfile<T> {
    pub fn new(caps: Vec<Cap<T>>, capacity: T) -> Result<Self> {
        if !(capacity > T::zero()) {
            return Err(Error::invalid(format!(
                "capacity must be positive, got {capacity:?}"
            )));
        }
        for (i, cap) in caps.iter().enumerate() {
            if let Cap::Finite(c) = cap {
                if !(*c >= T::zero()) {
                    return Err(Error::invalid(format!("cap {i} is negative: {c:?}")));
                }
            }
        }
        Ok(DemandProfile { caps, capacity })
    }

    pub fn caps(&self) -> &[Cap<T>] {
        &self.caps
    }

    pub fn capacity(&self) -> T {
        self.capacity
    }

    /// True when the caps can absorb the whole capacity.
    pub fn is_saturated(&self) -> bool {
        let mut total = T::zero();
        for cap in &self.caps {
            match cap {
                Cap::Unbounded => return true,
                Cap::Finite(c) => total = total + *c,
            }
        }
        !self.caps.is_empty() && total >= self.capacity
    }

    fn clamped_rates(&self, level: T) -> Vec<T> {
        self.caps.iter().map(|c| c.clamp(level)).collect()
    }
}

/// `min(1, rate / fair_share)`.
pub fn activity_level<T: Scalar>(rate: T, fair_share: T) -> Result<T> {
    if !(fair_share > T::zero()) {
        return Err(Error::invalid(format!(
            "fair share must be positive, got {fair_share:?}"
        )));
    }
    Ok(T::one().min_of(rate / fair_share))
}

/// Sum of activity levels of `rates` against `fair_share`.
pub fn effective_n<T: Scalar>(rates: &[T], fair_share: T) -> Result<T> {
    let mut n = T::zero();
    if !(fair_share > T::zero()) {
        return Err(Error::invalid(format!(
            "fair share must be positive, got {fair_share:?}"
        )));
    }
    for &r in rates {
        n = n + activity_level(r, fair_share)?;
    }
    Ok(n)
}

/// One step of the recursion: share the capacity over the previous
/// effective count, then recount activity at that share.
pub fn neff_iterate_once<T: Scalar>(rates: &[T], n_prev: T, capacity: T) -> Result<(T, T)> {
    if !(n_prev > T::zero()) {
        return Err(Error::invalid(format!(
            "previous effective count must be positive, got {n_prev:?}"
        )));
    }
    if !(capacity > T::zero()) {
        return Err(Error::invalid(format!(
            "capacity must be positive, got {capacity:?}"
        )));
    }
    let fair_share = capacity / n_prev;
    let n_next = effective_n(rates, fair_share)?;
    Ok((fair_share, n_next))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedPointResult<T> {
    pub fair_share: T,
    pub n_eff: T,
    pub iterations: usize,
    pub converged: bool,
    /// The caps cannot fill the link; no fair share exists.
    pub unsaturated: bool,
}

impl<T: Scalar> FixedPointResult<T> {
    /// `(overloading, underloading)` counts against this fair share. A cap
    /// equal to the share counts as overloading.
    pub fn classify(&self, profile: &DemandProfile<T>) -> (usize, usize) {
        let over = profile
            .caps
            .iter()
            .filter(|c| c.is_at_least(self.fair_share))
            .count();
        (over, profile.caps.len() - over)
    }
}

/// Iterates `F <- C / effective_n(min(cap, F), F)` starting from `C / n0`
/// until `F * n_eff` matches the capacity within `tol * C`.
///
/// Models the closed loop in which every connection sends at the smaller
/// of its cap and the advertised fair share.
pub fn neff_fixed_point<T: Scalar>(
    profile: &DemandProfile<T>,
    n0: T,
    tol: T,
    max_iter: usize,
) -> Result<FixedPointResult<T>> {
    if !(n0 > T::zero()) {
        return Err(Error::invalid(format!(
            "initial effective count must be positive, got {n0:?}"
        )));
    }
    if !(tol >= T::zero()) {
        return Err(Error::invalid(format!(
            "tolerance must be non-negative, got {tol:?}"
        )));
    }
    let capacity = profile.capacity;
    let saturated = profile.is_saturated();
    let max_cap = profile
        .caps
        .iter()
        .filter_map(|c| c.finite())
        .fold(T::zero(), |a, b| a.max_of(b));

    let mut fair_share = capacity / n0;
    let mut iterations = 0;
    loop {
        let rates = profile.clamped_rates(fair_share);
        let n_eff = effective_n(&rates, fair_share)?;

        if saturated && (fair_share * n_eff).abs_diff_of(capacity) <= tol * capacity {
            return Ok(FixedPointResult {
                fair_share,
                n_eff,
                iterations,
                converged: true,
                unsaturated: false,
            });
        }
        if n_eff == T::zero() {
            // Only reachable when every cap is zero.
            return Ok(FixedPointResult {
                fair_share: capacity,
                n_eff,
                iterations,
                converged: false,
                unsaturated: true,
            });
        }
        let next = capacity / n_eff;
        let escaped = !saturated && fair_share >= max_cap;
        if iterations >= max_iter || escaped {
            return Ok(FixedPointResult {
                fair_share: next,
                n_eff,
                iterations,
                converged: false,
                unsaturated: !saturated,
            });
        }
        fair_share = next;
        iterations += 1;
    }
}

/// Result of a single-link water-fill.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WaterLevel<T> {
    Level(T),
    /// Total demand is below capacity.
    Unsaturated,
}

impl<T: Copy> WaterLevel<T> {
    pub fn level(self) -> Option<T> {
        match self {
            WaterLevel::Level(l) => Some(l),
            WaterLevel::Unsaturated => None,
        }
    }
}

/// The level `λ` with `Σ min(cap_i, λ) = capacity`, by sort-and-scan.
pub fn waterfill_level<T: Scalar>(profile: &DemandProfile<T>) -> WaterLevel<T> {
    level_over(&profile.caps, profile.capacity)
}

fn level_over<T: Scalar>(caps: &[Cap<T>], capacity: T) -> WaterLevel<T> {
    if caps.is_empty() {
        return WaterLevel::Unsaturated;
    }
    if !(capacity > T::zero()) {
        return WaterLevel::Level(T::zero());
    }
    let mut finite: Vec<T> = caps.iter().filter_map(|c| c.finite()).collect();
    finite.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));

    let mut remaining = capacity;
    let mut contenders = caps.len();
    for c in finite {
        // Every remaining contender can take at least `c`.
        if c * T::from_usize_lossy(contenders) >= remaining {
            return WaterLevel::Level(remaining / T::from_usize_lossy(contenders));
        }
        remaining = remaining - c;
        contenders -= 1;
    }
    if contenders > 0 {
        WaterLevel::Level(remaining / T::from_usize_lossy(contenders))
    } else {
        WaterLevel::Unsaturated
    }
}

/// Links with capacities and the connections routed over them.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkModel<T> {
    link_ids: Vec<String>,
    capacities: Vec<T>,
    vcs: Vec<VcId>,
    routes: Vec<Vec<usize>>,
}

impl<T: Scalar> NetworkModel<T> {
    pub fn new(links: Vec<(String, T)>, routes: Vec<(VcId, Vec<String>)>) -> Result<Self> {
        let mut index = BTreeMap::new();
        let mut link_ids = Vec::with_capacity(links.len());
        let mut capacities = Vec::with_capacity(links.len());
        for (id, cap) in links {
            if !(cap >= T::zero()) {
                return Err(Error::invalid(format!("link {id} has negative capacity")));
            }
            if index.insert(id.clone(), link_ids.len()).is_some() {
                return Err(Error::invalid(format!("duplicate link {id}")));
            }
            link_ids.push(id);
            capacities.push(cap);
        }
        let mut vcs = Vec::with_capacity(routes.len());
        let mut resolved = Vec::with_capacity(routes.len());
        for (vc, route) in routes {
            if route.is_empty() {
                return Err(Error::invalid(format!("{vc} has an empty route")));
            }
            let mut hops = Vec::with_capacity(route.len());
            for id in &route {
                let &l = index
                    .get(id)
                    .ok_or_else(|| Error::invalid(format!("{vc} routes over unknown link {id}")))?;
                if !hops.contains(&l) {
                    hops.push(l);
                }
            }
            vcs.push(vc);
            resolved.push(hops);
        }
        Ok(NetworkModel {
            link_ids,
            capacities,
            vcs,
            routes: resolved,
        })
    }

    pub fn vcs(&self) -> &[VcId] {
        &self.vcs
    }

    pub fn link_ids(&self) -> &[String] {
        &self.link_ids
    }

    fn check_len(&self, n: usize, what: &str) -> Result<()> {
        if n != self.vcs.len() {
            return Err(Error::invalid(format!(
                "{what} has {n} entries for {} connections",
                self.vcs.len()
            )));
        }
        Ok(())
    }

    fn link_loads(&self, alloc: &[T]) -> Vec<T> {
        let mut load = vec![T::zero(); self.capacities.len()];
        for (route, &a) in self.routes.iter().zip(alloc) {
            for &l in route {
                load[l] = load[l] + a;
            }
        }
        load
    }
}

/// Max-min fair allocation by progressive filling: repeatedly saturate the
/// link with the lowest water level and freeze the connections crossing it.
/// `caps` is aligned with the model's connection order.
pub fn maxmin_allocate<T: Scalar>(net: &NetworkModel<T>, caps: &[Cap<T>]) -> Result<Vec<T>> {
    net.check_len(caps.len(), "caps")?;
    let n_links = net.capacities.len();
    let mut residual = net.capacities.clone();
    let mut alloc: Vec<Option<T>> = vec![None; caps.len()];

    let mut on_link: Vec<Vec<usize>> = vec![Vec::new(); n_links];
    for (v, route) in net.routes.iter().enumerate() {
        for &l in route {
            on_link[l].push(v);
        }
    }

    while alloc.iter().any(Option::is_none) {
        let mut levels: Vec<Option<T>> = vec![None; n_links];
        let mut lowest: Option<T> = None;
        for l in 0..n_links {
            let open: Vec<Cap<T>> = on_link[l]
                .iter()
                .filter(|&&v| alloc[v].is_none())
                .map(|&v| caps[v])
                .collect();
            if open.is_empty() {
                continue;
            }
            if let WaterLevel::Level(level) = level_over(&open, residual[l]) {
                levels[l] = Some(level);
                lowest = Some(match lowest {
                    Some(m) => m.min_of(level),
                    None => level,
                });
            }
        }

        let Some(level) = lowest else {
            // No link can be saturated by what is left: everyone gets its cap.
            for (v, a) in alloc.iter_mut().enumerate() {
                if a.is_none() {
                    let c = caps[v].finite().ok_or_else(|| {
                        Error::invalid("unbounded connection on unconstrained route")
                    })?;
                    *a = Some(c);
                }
            }
            break;
        };

        let mut fixed_now = Vec::new();
        for (v, a) in alloc.iter().enumerate() {
            if a.is_some() {
                continue;
            }
            let capped_below = matches!(caps[v], Cap::Finite(c) if c <= level);
            let on_bottleneck = net.routes[v].iter().any(|&l| levels[l] == Some(level));
            if capped_below || on_bottleneck {
                fixed_now.push(v);
            }
        }
        for v in fixed_now {
            let share = caps[v].clamp(level);
            alloc[v] = Some(share);
            for &l in &net.routes[v] {
                let r = residual[l] - share;
                residual[l] = if r < T::zero() { T::zero() } else { r };
            }
        }
    }
    Ok(alloc.into_iter().map(|a| a.expect("all fixed")).collect())
}

/// Checks feasibility and the bottleneck characterisation of max-min
/// fairness: every connection below its cap crosses a saturated link on
/// which nobody receives more than it does. Tolerances scale with capacity.
pub fn maxmin_verify<T: Scalar>(
    net: &NetworkModel<T>,
    caps: &[Cap<T>],
    alloc: &[T],
    eps: T,
) -> bool {
    if caps.len() != net.vcs.len() || alloc.len() != caps.len() {
        return false;
    }
    let scale = |c: T| eps * T::one().max_of(c);
    let load = net.link_loads(alloc);
    for (l, &cap) in net.capacities.iter().enumerate() {
        if load[l] > cap + scale(cap) {
            return false;
        }
    }
    for (v, &a) in alloc.iter().enumerate() {
        if a < T::zero() - eps {
            return false;
        }
        if let Cap::Finite(c) = caps[v] {
            if a > c + scale(c) {
                return false;
            }
            if a >= c - scale(c) {
                continue;
            }
        }
        let bottlenecked = net.routes[v].iter().any(|&l| {
            let cap = net.capacities[l];
            let saturated = load[l] >= cap - scale(cap);
            saturated
                && net
                    .routes
                    .iter()
                    .zip(alloc)
                    .filter(|(route, _)| route.contains(&l))
                    .all(|(_, &other)| a >= other - scale(cap))
        });
        if !bottlenecked {
            return false;
        }
    }
    true
}
