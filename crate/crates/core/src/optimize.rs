//! Sweeps over the work-stroke asymmetry and the optima they reveal.

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;

use crate::config::EngineConfig;
use crate::cycle::{finite_cycle_with, ThermalKernels};
use crate::error::{OttoError, Result};
use crate::nonadiabatic::{adiabaticity_pair_cached, AdiabaticityPair, QCache};
use crate::stats::{statistics_perfect_with, CycleStatistics};

/// Default resolution of the golden-section refinement.
pub const DEFAULT_REFINE_TOL: f64 = 1e-4;
/// Default threshold for a jump in an optimum curve.
pub const DEFAULT_JUMP_THRESHOLD: f64 = 0.05;

/// Duration of the heat strokes in finite-thermalization sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeatStrokeTime {
    /// The same `tau_b` at every `tau_u`.
    Fixed(f64),
    /// `tau_b = factor * tau_u`.
    Proportional(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepMode {
    Perfect,
    Finite(HeatStrokeTime),
}

impl SweepMode {
    /// The config evaluated at cycle time `tau_u` and asymmetry `r_u`.
    pub fn configure(&self, template: &EngineConfig, tau_u: f64, r_u: f64) -> EngineConfig {
        let tau_b = match self {
            SweepMode::Perfect => f64::INFINITY,
            SweepMode::Finite(HeatStrokeTime::Fixed(t)) => *t,
            SweepMode::Finite(HeatStrokeTime::Proportional(f)) => f * tau_u,
        };
        template.with_tau_u(tau_u).with_r_u(r_u).with_tau_b(tau_b)
    }
}

/// Statistics at one `(tau_u, r_u)` grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub tau_u: f64,
    pub r_u: f64,
    pub pair: AdiabaticityPair,
    pub stats: CycleStatistics,
    pub engine_regime: bool,
}

/// A grid point and either its record or the error that prevented it.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub tau_u: f64,
    pub r_u: f64,
    pub outcome: std::result::Result<SweepRecord, OttoError>,
}

/// Evaluates single grid points at a fixed `tau_u`, sharing Q values and
/// heat-stroke kernels between them.
pub struct Evaluator<'a> {
    template: EngineConfig,
    tau_u: f64,
    mode: SweepMode,
    cache: &'a QCache,
    thermal: Option<std::result::Result<ThermalKernels, OttoError>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(template: &EngineConfig, tau_u: f64, mode: SweepMode, cache: &'a QCache) -> Self {
        let thermal = match mode {
            SweepMode::Perfect => None,
            // heat strokes do not depend on r_u
            SweepMode::Finite(_) => {
                let config = mode.configure(template, tau_u, template.r_u);
                Some(config.validate().and_then(|_| ThermalKernels::new(&config)))
            }
        };
        Evaluator {
            template: *template,
            tau_u,
            mode,
            cache,
            thermal,
        }
    }

    pub fn evaluate(&self, r_u: f64) -> Result<SweepRecord> {
        let config = self.mode.configure(&self.template, self.tau_u, r_u);
        let pair = adiabaticity_pair_cached(&config, self.cache)?;
        let stats = match &self.thermal {
            None => statistics_perfect_with(&config, pair)?,
            Some(Ok(thermal)) => finite_cycle_with(&config, pair, thermal)?.stats,
            Some(Err(e)) => return Err(e.clone()),
        };
        Ok(SweepRecord {
            tau_u: self.tau_u,
            r_u,
            pair,
            stats,
            engine_regime: stats.engine_regime,
        })
    }
}

/// `count` evenly spaced values from `min` to `max` inclusive.
pub fn linear_grid(key: &'static str, min: f64, max: f64, count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(OttoError::validation(key, "grid must contain at least one point"));
    }
    if !(min.is_finite() && max.is_finite()) || (count > 1 && !(max > min)) || (count == 1 && min != max && max < min) {
        return Err(OttoError::validation(key, format!("need finite min < max (got {min}, {max})")));
    }
    if count == 1 {
        return Ok(vec![min]);
    }
    let step = (max - min) / (count - 1) as f64;
    Ok((0..count).map(|i| if i + 1 == count { max } else { min + step * i as f64 }).collect())
}

/// The default asymmetry grid: 199 points from 0.005 to 0.995.
pub fn default_r_grid() -> Vec<f64> {
    (1..=199).map(|i| i as f64 * 0.005).collect()
}

fn check_r_grid(r_grid: &[f64]) -> Result<()> {
    if r_grid.is_empty() {
        return Err(OttoError::validation("r_grid", "grid must contain at least one point"));
    }
    if r_grid.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
        return Err(OttoError::validation("r_grid", "every r_u must lie strictly inside (0, 1)"));
    }
    if r_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(OttoError::validation("r_grid", "grid must be strictly ascending"));
    }
    Ok(())
}

/// Runs `f` over `items` on at most `jobs` threads, keeping input order.
fn parallel_map<T: Sync, U: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    if jobs <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

/// Evaluates every `r_u` in `r_grid` at cycle time `tau_u`.
///
/// Failures at single points are kept in the returned list.
pub fn sweep_r_u(template: &EngineConfig, tau_u: f64, r_grid: &[f64], mode: SweepMode) -> Result<Vec<SweepPoint>> {
    sweep_r_u_with(template, tau_u, r_grid, mode, &QCache::new(), 1)
}

/// [`sweep_r_u`] with a shared Q cache and up to `jobs` worker threads.
pub fn sweep_r_u_with(
    template: &EngineConfig,
    tau_u: f64,
    r_grid: &[f64],
    mode: SweepMode,
    cache: &QCache,
    jobs: usize,
) -> Result<Vec<SweepPoint>> {
    check_r_grid(r_grid)?;
    let evaluator = Evaluator::new(template, tau_u, mode, cache);
    Ok(sweep_points(&evaluator, r_grid, jobs))
}

fn sweep_points(evaluator: &Evaluator<'_>, r_grid: &[f64], jobs: usize) -> Vec<SweepPoint> {
    parallel_map(r_grid, jobs, |&r_u| SweepPoint {
        tau_u: evaluator.tau_u,
        r_u,
        outcome: evaluator.evaluate(r_u),
    })
}

/// A quantity maximized over `r_u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Merit {
    /// `-⟨w⟩`, optimum `r*`.
    Work,
    /// `R_w`, optimum `r°`.
    ReliabilityW,
    /// `⟨η⟩`, optimum `r^⊙`.
    Efficiency,
    /// `R_η`, optimum `r^Δ`.
    ReliabilityEta,
    /// `-σ_w`: the asymmetry with the smallest work fluctuations.
    WorkFluctuation,
}

impl Merit {
    pub const ALL: [Merit; 5] = [
        Merit::Work,
        Merit::ReliabilityW,
        Merit::Efficiency,
        Merit::ReliabilityEta,
        Merit::WorkFluctuation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Merit::Work => "r_star",
            Merit::ReliabilityW => "r_circ",
            Merit::Efficiency => "r_odot",
            Merit::ReliabilityEta => "r_delta",
            Merit::WorkFluctuation => "r_sigma",
        }
    }

    /// The value to maximize, defined only in the engine regime.
    pub fn value(self, record: &SweepRecord) -> Option<f64> {
        if !record.engine_regime {
            return None;
        }
        let s = &record.stats;
        match self {
            Merit::Work => Some(s.work_output),
            Merit::ReliabilityW => s.reliability_w,
            Merit::Efficiency => s.efficiency,
            Merit::ReliabilityEta => s.reliability_eta,
            Merit::WorkFluctuation => Some(-s.w_std()),
        }
        .filter(|v| v.is_finite())
    }
}

/// Location and value of one maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Optimum {
    pub r_u: f64,
    pub value: f64,
}

/// The optima of every merit at one `tau_u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimaRow {
    pub tau_u: f64,
    pub work: Option<Optimum>,
    pub reliability_w: Option<Optimum>,
    pub efficiency: Option<Optimum>,
    pub reliability_eta: Option<Optimum>,
    pub work_fluctuation: Option<Optimum>,
}

impl OptimaRow {
    pub fn get(&self, merit: Merit) -> Option<Optimum> {
        match merit {
            Merit::Work => self.work,
            Merit::ReliabilityW => self.reliability_w,
            Merit::Efficiency => self.efficiency,
            Merit::ReliabilityEta => self.reliability_eta,
            Merit::WorkFluctuation => self.work_fluctuation,
        }
    }

    fn set(&mut self, merit: Merit, value: Option<Optimum>) {
        match merit {
            Merit::Work => self.work = value,
            Merit::ReliabilityW => self.reliability_w = value,
            Merit::Efficiency => self.efficiency = value,
            Merit::ReliabilityEta => self.reliability_eta = value,
            Merit::WorkFluctuation => self.work_fluctuation = value,
        }
    }
}

/// Grid argmax of `merit`, ties going to the smaller `r_u`.
pub fn grid_argmax(records: &[SweepRecord], merit: Merit) -> Option<(usize, Optimum)> {
    let mut best: Option<(usize, Optimum)> = None;
    for (i, rec) in records.iter().enumerate() {
        if let Some(v) = merit.value(rec) {
            if best.is_none_or(|(_, b)| v > b.value) {
                best = Some((i, Optimum { r_u: rec.r_u, value: v }));
            }
        }
    }
    best
}

/// Maximizes `f` on `[a, b]` by golden-section search down to an interval of
/// width `tol`. Points where `f` is undefined count as `-∞`.
pub fn golden_section_max(f: impl Fn(f64) -> Option<f64>, a: f64, b: f64, tol: f64) -> Optimum {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let value = |x: f64| f(x).unwrap_or(f64::NEG_INFINITY);
    let (mut a, mut b) = (a, b);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (value(c), value(d));
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = value(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = value(d);
        }
    }
    if fc >= fd {
        Optimum { r_u: c, value: fc }
    } else {
        Optimum { r_u: d, value: fd }
    }
}

/// Grid argmax followed by golden-section refinement inside the neighbouring
/// grid cells. The refined point replaces the grid point only if it is at
/// least as good.
pub fn refine_optimum(
    records: &[SweepRecord],
    merit: Merit,
    f: impl Fn(f64) -> Option<f64>,
    refine_tol: f64,
) -> Option<Optimum> {
    let (i, grid_best) = grid_argmax(records, merit)?;
    let lo = if i > 0 { records[i - 1].r_u } else { grid_best.r_u };
    let hi = if i + 1 < records.len() { records[i + 1].r_u } else { grid_best.r_u };
    if !(hi - lo > refine_tol) {
        return Some(grid_best);
    }
    let refined = golden_section_max(f, lo, hi, refine_tol);
    if refined.value >= grid_best.value {
        Some(refined)
    } else {
        Some(grid_best)
    }
}

/// Optima of every merit for the records of one `tau_u`.
///
/// With an evaluator the grid optima are refined to `refine_tol`; without
/// one they are the grid argmax.
pub fn locate_optima(
    records: &[SweepRecord],
    evaluator: Option<&Evaluator<'_>>,
    refine_tol: f64,
) -> Result<OptimaRow> {
    let tau_u = records.first().map(|r| r.tau_u).unwrap_or(f64::NAN);
    if !records.iter().any(|r| r.engine_regime) {
        return Err(OttoError::NoEngineOperation { tau_u });
    }
    let memo: Mutex<HashMap<u64, Option<SweepRecord>>> = Mutex::new(HashMap::new());
    let lookup = |r: f64| -> Option<SweepRecord> {
        let ev = evaluator?;
        if let Some(hit) = memo.lock().ok().and_then(|m| m.get(&r.to_bits()).copied()) {
            return hit;
        }
        let rec = ev.evaluate(r).ok();
        if let Ok(mut m) = memo.lock() {
            m.insert(r.to_bits(), rec);
        }
        rec
    };
    let mut row = OptimaRow {
        tau_u,
        work: None,
        reliability_w: None,
        efficiency: None,
        reliability_eta: None,
        work_fluctuation: None,
    };
    for merit in Merit::ALL {
        let best = match evaluator {
            Some(_) => refine_optimum(records, merit, |r| lookup(r).and_then(|rec| merit.value(&rec)), refine_tol),
            None => grid_argmax(records, merit).map(|(_, o)| o),
        };
        row.set(merit, best);
    }
    Ok(row)
}

/// A jump of an optimum curve between consecutive cycle times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discontinuity {
    /// Midpoint of the bracketing interval.
    pub tau_u: f64,
    pub tau_before: f64,
    pub tau_after: f64,
    pub merit: Merit,
    /// Signed change `r_after - r_before`.
    pub jump: f64,
}

/// Which optima coincide at a co-optimal time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CoOptimalPair {
    /// `r* = r°`.
    WorkReliability,
    /// `r^⊙ = r^Δ`.
    EfficiencyReliability,
}

impl CoOptimalPair {
    pub fn merits(self) -> (Merit, Merit) {
        match self {
            CoOptimalPair::WorkReliability => (Merit::Work, Merit::ReliabilityW),
            CoOptimalPair::EfficiencyReliability => (Merit::Efficiency, Merit::ReliabilityEta),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CoOptimalPair::WorkReliability => "work",
            CoOptimalPair::EfficiencyReliability => "efficiency",
        }
    }
}

/// A cycle time at which two optima coincide.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoOptimalTime {
    pub tau_u: f64,
    pub pair: CoOptimalPair,
    /// Mean of the two optimal asymmetries.
    pub r_u: f64,
    /// `|r_a - r_b|` at the reported time.
    pub mismatch: f64,
    /// True when found as a sign change between grid times rather than at a
    /// grid time.
    pub interpolated: bool,
    /// True when the common optimum sits at the first or last point of the
    /// `r_u` grid, where both merits may simply be pinned to the edge.
    pub boundary: bool,
}

/// Optima over a grid of cycle times.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimaSeries {
    pub tau_grid: Vec<f64>,
    /// One entry per grid time; `None` where no grid point ran as an engine.
    pub rows: Vec<Option<OptimaRow>>,
}

impl OptimaSeries {
    pub fn curve(&self, merit: Merit) -> Vec<Option<Optimum>> {
        self.rows.iter().map(|row| row.and_then(|r| r.get(merit))).collect()
    }
}

/// Jumps `|Δr| ≥ jump_threshold` between consecutive grid times of every
/// optimum curve, ordered by merit and then time.
pub fn detect_discontinuities(series: &OptimaSeries, jump_threshold: f64) -> Vec<Discontinuity> {
    let mut out = Vec::new();
    for merit in Merit::ALL {
        let curve = series.curve(merit);
        for i in 1..curve.len() {
            if let (Some(a), Some(b)) = (curve[i - 1], curve[i]) {
                let jump = b.r_u - a.r_u;
                if jump.abs() >= jump_threshold {
                    let (t0, t1) = (series.tau_grid[i - 1], series.tau_grid[i]);
                    out.push(Discontinuity {
                        tau_u: 0.5 * (t0 + t1),
                        tau_before: t0,
                        tau_after: t1,
                        merit,
                        jump,
                    });
                }
            }
        }
    }
    out
}

/// Cycle times at which paired optima coincide.
///
/// A grid time qualifies when the two optima differ by at most `match_tol`.
/// Between consecutive grid times where neither curve jumps by
/// `jump_threshold` or more, a sign change of the difference is reported at
/// the linearly interpolated crossing.
pub fn find_cooptimal_times(series: &OptimaSeries, match_tol: f64, jump_threshold: f64) -> Vec<CoOptimalTime> {
    let mut out = Vec::new();
    for pair in [CoOptimalPair::WorkReliability, CoOptimalPair::EfficiencyReliability] {
        let (ma, mb) = pair.merits();
        let (ca, cb) = (series.curve(ma), series.curve(mb));
        let diff = |i: usize| match (ca[i], cb[i]) {
            (Some(a), Some(b)) => Some((a.r_u - b.r_u, 0.5 * (a.r_u + b.r_u))),
            _ => None,
        };
        for i in 0..series.tau_grid.len() {
            let Some((d, mid)) = diff(i) else { continue };
            if d.abs() <= match_tol {
                out.push(CoOptimalTime {
                    tau_u: series.tau_grid[i],
                    pair,
                    r_u: mid,
                    mismatch: d.abs(),
                    interpolated: false,
                    boundary: false,
                });
                continue;
            }
            if i + 1 == series.tau_grid.len() {
                continue;
            }
            let Some((d1, _)) = diff(i + 1) else { continue };
            if d1.abs() <= match_tol || d.signum() == d1.signum() {
                continue;
            }
            let smooth = [(&ca, i), (&cb, i)]
                .iter()
                .all(|(c, i)| (c[i + 1].unwrap().r_u - c[*i].unwrap().r_u).abs() < jump_threshold);
            if !smooth {
                continue;
            }
            let s = d / (d - d1);
            let lerp = |x0: f64, x1: f64| x0 + s * (x1 - x0);
            let (t0, t1) = (series.tau_grid[i], series.tau_grid[i + 1]);
            let r = 0.5
                * (lerp(ca[i].unwrap().r_u, ca[i + 1].unwrap().r_u) + lerp(cb[i].unwrap().r_u, cb[i + 1].unwrap().r_u));
            out.push(CoOptimalTime {
                tau_u: lerp(t0, t1),
                pair,
                r_u: r,
                mismatch: 0.0,
                interpolated: true,
                boundary: false,
            });
        }
    }
    out
}

/// Flags co-optimal times whose asymmetry lies within half a grid cell of
/// either end of `r_grid`.
pub fn mark_grid_edges(times: &mut [CoOptimalTime], r_grid: &[f64]) {
    let (Some(&lo), Some(&hi)) = (r_grid.first(), r_grid.last()) else { return };
    let margin = |a: f64, b: f64| 0.5 * (b - a).abs();
    let lo_margin = r_grid.get(1).map_or(0.0, |&b| margin(lo, b));
    let hi_margin = r_grid.len().checked_sub(2).map_or(0.0, |i| margin(r_grid[i], hi));
    for t in times {
        t.boundary = t.r_u <= lo + lo_margin || t.r_u >= hi - hi_margin;
    }
}

/// Settings for a full optimization over a `tau_u` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSettings {
    pub r_grid: Vec<f64>,
    pub refine: bool,
    pub refine_tol: f64,
    pub jump_threshold: f64,
    pub match_tol: f64,
    pub jobs: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            r_grid: default_r_grid(),
            refine: true,
            refine_tol: DEFAULT_REFINE_TOL,
            jump_threshold: DEFAULT_JUMP_THRESHOLD,
            match_tol: 2.0 * DEFAULT_REFINE_TOL,
            jobs: 1,
        }
    }
}

/// Sweep results and optima at one cycle time.
#[derive(Debug, Clone, PartialEq)]
pub struct TauScan {
    pub tau_u: f64,
    pub points: Vec<SweepPoint>,
    pub optima: std::result::Result<OptimaRow, OttoError>,
}

impl TauScan {
    pub fn records(&self) -> Vec<SweepRecord> {
        self.points.iter().filter_map(|p| p.outcome.as_ref().ok().copied()).collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = &SweepPoint> {
        self.points.iter().filter(|p| p.outcome.is_err())
    }
}

/// Everything produced by [`optimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationRun {
    pub scans: Vec<TauScan>,
    pub series: OptimaSeries,
    pub discontinuities: Vec<Discontinuity>,
    pub cooptimal: Vec<CoOptimalTime>,
}

impl OptimizationRun {
    pub fn failure_count(&self) -> usize {
        self.scans.iter().map(|s| s.failures().count()).sum()
    }
}

/// Sweeps `r_u` at every `tau_u`, locates the optima and annotates the
/// resulting curves.
pub fn optimize(
    template: &EngineConfig,
    tau_grid: &[f64],
    mode: SweepMode,
    settings: &OptimizerSettings,
) -> Result<OptimizationRun> {
    if tau_grid.is_empty() {
        return Err(OttoError::validation("tau_grid", "grid must contain at least one point"));
    }
    if tau_grid.iter().any(|&t| !(t > 0.0 && t.is_finite())) || tau_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(OttoError::validation("tau_grid", "cycle times must be positive, finite and strictly ascending"));
    }
    check_r_grid(&settings.r_grid)?;
    template.validate()?;

    let cache = QCache::new();
    let mut scans = Vec::with_capacity(tau_grid.len());
    for &tau_u in tau_grid {
        let evaluator = Evaluator::new(template, tau_u, mode, &cache);
        let points = sweep_points(&evaluator, &settings.r_grid, settings.jobs);
        let records: Vec<SweepRecord> = points.iter().filter_map(|p| p.outcome.as_ref().ok().copied()).collect();
        let optima = if records.is_empty() {
            Err(OttoError::NoEngineOperation { tau_u })
        } else {
            let ev = settings.refine.then_some(&evaluator);
            locate_optima(&records, ev, settings.refine_tol).map(|mut row| {
                row.tau_u = tau_u;
                row
            })
        };
        scans.push(TauScan { tau_u, points, optima });
    }
    let series = OptimaSeries {
        tau_grid: tau_grid.to_vec(),
        rows: scans.iter().map(|s| s.optima.as_ref().ok().copied()).collect(),
    };
    let discontinuities = detect_discontinuities(&series, settings.jump_threshold);
    let mut cooptimal = find_cooptimal_times(&series, settings.match_tol, settings.jump_threshold);
    mark_grid_edges(&mut cooptimal, &settings.r_grid);
    Ok(OptimizationRun {
        scans,
        series,
        discontinuities,
        cooptimal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charfn::Moments;
    use proptest::prelude::*;

    fn synthetic(r_grid: &[f64], f: impl Fn(f64) -> f64) -> Vec<SweepRecord> {
        r_grid
            .iter()
            .map(|&r| {
                let w = f(r);
                let stats = CycleStatistics::from_moments(&Moments { w: -w, w2: w * w + 1.0, qh: 10.0, qh2: 101.0, w_qh: 0.0 })
                    .unwrap();
                SweepRecord {
                    tau_u: 1.0,
                    r_u: r,
                    pair: AdiabaticityPair::ADIABATIC,
                    engine_regime: stats.engine_regime,
                    stats,
                }
            })
            .collect()
    }

    #[test]
    fn quadratic_landscape() {
        let f = |r: f64| 5.0 - (r - 0.3) * (r - 0.3);
        let recs = synthetic(&default_r_grid(), f);
        let best = refine_optimum(&recs, Merit::Work, |r| Some(f(r)), DEFAULT_REFINE_TOL).unwrap();
        assert!((best.r_u - 0.3).abs() < DEFAULT_REFINE_TOL);
        let off_grid = |r: f64| 5.0 - (r - 0.3021) * (r - 0.3021);
        let recs = synthetic(&default_r_grid(), off_grid);
        let best = refine_optimum(&recs, Merit::Work, |r| Some(off_grid(r)), DEFAULT_REFINE_TOL).unwrap();
        assert!((best.r_u - 0.3021).abs() < DEFAULT_REFINE_TOL);
    }

    #[test]
    fn ties_go_to_smaller_r() {
        let f = |r: f64| 5.0 - ((r - 0.3) * (r - 0.7)).powi(2);
        let recs = synthetic(&default_r_grid(), f);
        let (_, best) = grid_argmax(&recs, Merit::Work).unwrap();
        assert!((best.r_u - 0.3).abs() < 1e-12);
        let refined = refine_optimum(&recs, Merit::Work, |r| Some(f(r)), DEFAULT_REFINE_TOL).unwrap();
        assert!((refined.r_u - 0.3).abs() < DEFAULT_REFINE_TOL);
    }

    #[test]
    fn non_engine_records_are_ignored() {
        let recs = synthetic(&default_r_grid(), |r| 1.0 - 4.0 * (r - 0.2).abs());
        let (_, best) = grid_argmax(&recs, Merit::Work).unwrap();
        assert!((best.r_u - 0.2).abs() < 1e-12);
        let none = synthetic(&[0.2, 0.5], |_| -1.0);
        assert!(matches!(locate_optima(&none, None, 1e-4), Err(OttoError::NoEngineOperation { .. })));
    }

    fn series_from(taus: &[f64], a: &[f64], b: &[f64]) -> OptimaSeries {
        let opt = |r: f64| Some(Optimum { r_u: r, value: 1.0 });
        OptimaSeries {
            tau_grid: taus.to_vec(),
            rows: taus
                .iter()
                .zip(a.iter().zip(b))
                .map(|(&tau_u, (&ra, &rb))| {
                    Some(OptimaRow {
                        tau_u,
                        work: opt(ra),
                        reliability_w: opt(rb),
                        efficiency: None,
                        reliability_eta: None,
                        work_fluctuation: None,
                    })
                })
                .collect(),
        }
    }

    #[test]
    fn step_series_has_one_jump() {
        let taus: Vec<f64> = (0..100).map(|i| i as f64 * 0.1).collect();
        let r: Vec<f64> = taus.iter().map(|&t| if t < 5.0 { 0.3 } else { 0.6 }).collect();
        let s = series_from(&taus, &r, &r);
        let jumps: Vec<_> = detect_discontinuities(&s, 0.05).into_iter().filter(|d| d.merit == Merit::Work).collect();
        assert_eq!(jumps.len(), 1);
        assert!((jumps[0].jump - 0.3).abs() < 1e-12);
        assert!((jumps[0].tau_u - 4.95).abs() < 1e-9);

        let flat = series_from(&taus, &vec![0.4; 100], &vec![0.4; 100]);
        assert!(detect_discontinuities(&flat, 0.05).is_empty());
    }

    #[test]
    fn identical_curves_are_cooptimal_everywhere() {
        let taus = [1.0, 2.0, 3.0];
        let s = series_from(&taus, &[0.2, 0.5, 0.7], &[0.2, 0.5, 0.7]);
        let c = find_cooptimal_times(&s, 2e-4, 0.05);
        assert_eq!(c.iter().map(|c| c.tau_u).collect::<Vec<_>>(), taus);
    }

    #[test]
    fn crossing_is_interpolated_but_jumps_are_not() {
        let taus = [1.0, 1.1, 1.2];
        let s = series_from(&taus, &[0.48, 0.50, 0.52], &[0.52, 0.51, 0.50]);
        let c = find_cooptimal_times(&s, 2e-4, 0.05);
        assert_eq!(c.len(), 1);
        assert!(c[0].interpolated);
        // d goes -0.01 -> +0.02 between 1.1 and 1.2
        assert!((c[0].tau_u - (1.1 + 0.1 / 3.0)).abs() < 1e-12);
        assert!((c[0].r_u - (0.50 + 0.02 / 3.0)).abs() < 1e-12);

        let s = series_from(&taus, &[0.2, 0.2, 0.8], &[0.5, 0.5, 0.5]);
        assert!(find_cooptimal_times(&s, 2e-4, 0.05).is_empty());
    }

    #[test]
    fn edge_optima_are_flagged() {
        let taus = [1.0, 2.0, 3.0];
        let s = series_from(&taus, &[0.005, 0.5, 0.9951], &[0.005, 0.5, 0.9951]);
        let mut c = find_cooptimal_times(&s, 2e-4, 0.05);
        mark_grid_edges(&mut c, &default_r_grid());
        assert_eq!(c.iter().map(|c| c.boundary).collect::<Vec<_>>(), [true, false, true]);
    }

    #[test]
    fn grids() {
        let g = default_r_grid();
        assert_eq!(g.len(), 199);
        assert_eq!(g[0], 0.005);
        assert!((g[198] - 0.995).abs() < 1e-15);
        assert_eq!(linear_grid("tau", 1.0, 2.0, 11).unwrap()[10], 2.0);
        assert!(linear_grid("tau", 1.0, 2.0, 0).is_err());
        assert!(check_r_grid(&[0.2, 0.1]).is_err());
        assert!(check_r_grid(&[0.0, 0.1]).is_err());
        assert!(check_r_grid(&[]).is_err());
    }

    #[test]
    fn single_point_sweep_equals_direct_statistics() {
        let template = EngineConfig::harmonic(2.0, 0.1, 0.5);
        let points = sweep_r_u(&template, 2.0, &[0.37], SweepMode::Perfect).unwrap();
        assert_eq!(points.len(), 1);
        let rec = points[0].outcome.clone().unwrap();
        let direct = crate::stats::statistics_perfect(&template.with_tau_u(2.0).with_r_u(0.37)).unwrap();
        assert_eq!(rec.stats, direct);
    }

    #[test]
    fn slow_strokes_flatten_the_landscape() {
        let template = EngineConfig::harmonic(2.0, 0.1, 0.5);
        let grid = [0.2, 0.35, 0.5, 0.65, 0.8];
        let points = sweep_r_u(&template, 80.0, &grid, SweepMode::Perfect).unwrap();
        for p in points {
            let w = p.outcome.unwrap().stats.work_output;
            assert!((w - 2.97516).abs() / 2.97516 < 0.02, "{w}");
        }
    }

    #[test]
    fn parallel_sweep_matches_serial() {
        let template = EngineConfig::two_level(2.0, 1.0, 0.1, 0.5);
        let grid = [0.1, 0.3, 0.5, 0.7, 0.9];
        let cache = QCache::new();
        let serial = sweep_r_u_with(&template, 3.0, &grid, SweepMode::Perfect, &cache, 1).unwrap();
        let parallel = sweep_r_u_with(&template, 3.0, &grid, SweepMode::Perfect, &QCache::new(), 3).unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn failures_stay_in_the_sweep() {
        // huge damping breaks the weak-coupling check only in finite mode
        let template = EngineConfig::harmonic(2.0, 0.1, 0.5).with_damping(1.0);
        let points = sweep_r_u(&template, 1.0, &[0.3, 0.6], SweepMode::Finite(HeatStrokeTime::Proportional(10.0))).unwrap();
        assert!(points.iter().all(|p| p.outcome.as_ref().is_err_and(|e| e.is_validation())));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn argmax_is_scale_invariant(center in 0.05f64..0.95, width in 0.01f64..1.0, scale in 0.01f64..100.0) {
            let f = |r: f64| 3.0 + (-(r - center).powi(2) / width).exp();
            let grid = default_r_grid();
            let a = grid_argmax(&synthetic(&grid, f), Merit::Work).unwrap().1.r_u;
            let b = grid_argmax(&synthetic(&grid, |r| scale * f(r)), Merit::Work).unwrap().1.r_u;
            prop_assert_eq!(a, b);
        }

        #[test]
        fn optimum_dominates_grid(center in 0.05f64..0.95, bump in 0.0f64..0.5) {
            let f = |r: f64| 2.0 - (r - center).powi(2) + bump * (20.0 * r).sin();
            let grid = default_r_grid();
            let recs = synthetic(&grid, f);
            let best = refine_optimum(&recs, Merit::Work, |r| Some(f(r)), DEFAULT_REFINE_TOL).unwrap();
            for rec in &recs {
                prop_assert!(best.value >= rec.stats.work_output);
            }
        }
    }
}
