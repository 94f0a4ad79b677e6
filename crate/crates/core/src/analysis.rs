//! End-to-end evaluation and optimisation over the splitting ratio `T`.

use alloc::vec::Vec;

use libm::{log2, pow};

use crate::error::{domain, Result};
use crate::gaussian::{apply_channel, key_rate_homodyne, ChannelSpec, KeyRateReport};
use crate::subtraction::{covariance_subtracted, photon_count_prob, Scheme, SourceSpec};

/// Rates at or below this are treated as "no key" when locating the
/// maximal distance.
pub const DEFAULT_RATE_FLOOR: f64 = 1e-6;

/// Transmittances are kept inside `[T_MIN, T_MAX]` during refinement.
const T_MIN: f64 = 1e-9;
const T_MAX: f64 = 1.0 - 1e-9;

/// Source → channel → key rate, with the heralding probability as prefactor.
pub fn pipeline_key_rate(src: &SourceSpec, ch: &ChannelSpec, beta: f64) -> Result<KeyRateReport> {
    let sub = covariance_subtracted(src)?;
    let cov = apply_channel(&sub.cov, ch)?;
    key_rate_homodyne(&cov, beta, sub.success_prob)
}

/// Uniform interior grid `t_i = i/(count+1)`, `i = 1..=count`, followed by
/// `refinements` zoom passes of 10× each around the incumbent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TGrid {
    pub count: usize,
    pub refinements: u32,
}

impl Default for TGrid {
    fn default() -> Self {
        Self { count: 200, refinements: 2 }
    }
}

impl TGrid {
    pub fn new(count: usize, refinements: u32) -> Result<Self> {
        if count < 32 {
            return Err(domain("T grid size (minimum 32)", count as f64));
        }
        Ok(Self { count, refinements })
    }

    pub fn step(&self) -> f64 {
        1.0 / (self.count as f64 + 1.0)
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.step();
        (1..=self.count).map(move |i| i as f64 * h)
    }
}

/// Best rate over `T` at one distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimumRecord {
    pub distance_km: f64,
    pub t_opt: f64,
    pub key_rate_opt: f64,
    pub success_prob_at_opt: f64,
    /// `T` interval with rate ≥ 90% of the optimum.
    pub band_90: Option<(f64, f64)>,
    /// `T` interval with rate ≥ 50% of the optimum.
    pub band_50: Option<(f64, f64)>,
}

impl OptimumRecord {
    pub fn has_key(&self) -> bool {
        self.key_rate_opt > 0.0
    }
}

fn rate_at(template: &SourceSpec, t: f64, ch: &ChannelSpec, beta: f64) -> Result<KeyRateReport> {
    let mut src = *template;
    src.t = t;
    pipeline_key_rate(&src, ch, beta)
}

/// Grid search plus local refinement of `T`.
///
/// For `Scheme::None` the splitting ratio has no effect; the record reports
/// `t_opt = 1` and the full interval as both bands.
pub fn optimize_t(template: &SourceSpec, ch: &ChannelSpec, beta: f64, grid: &TGrid) -> Result<OptimumRecord> {
    TGrid::new(grid.count, grid.refinements)?;
    let distance_km = ch.distance_km.unwrap_or(f64::NAN);
    if template.scheme == Scheme::None {
        let r = pipeline_key_rate(template, ch, beta)?;
        let full = (r.key_rate > 0.0).then_some((0.0, 1.0));
        return Ok(OptimumRecord {
            distance_km,
            t_opt: 1.0,
            key_rate_opt: r.key_rate,
            success_prob_at_opt: r.success_prob,
            band_90: full,
            band_50: full,
        });
    }

    let eval = |t: f64| rate_at(template, t, ch, beta).map(|r| r.key_rate);
    let mut best_t = f64::NAN;
    let mut best = f64::NEG_INFINITY;
    for t in grid.points() {
        let r = eval(t)?;
        if r > best {
            best = r;
            best_t = t;
        }
    }
    let mut h = grid.step();
    for _ in 0..grid.refinements {
        let lo = best_t - h;
        h /= 10.0;
        for i in 0..=20 {
            let t = lo + i as f64 * h;
            if !(T_MIN..=T_MAX).contains(&t) {
                continue;
            }
            let r = eval(t)?;
            if r > best {
                best = r;
                best_t = t;
            }
        }
    }

    let report = rate_at(template, best_t, ch, beta)?;
    let (band_90, band_50) = if best > 0.0 {
        (
            Some(band(&eval, best_t, best, 0.9, grid.step())?),
            Some(band(&eval, best_t, best, 0.5, grid.step())?),
        )
    } else {
        (None, None)
    };
    Ok(OptimumRecord {
        distance_km,
        t_opt: best_t,
        key_rate_opt: best,
        success_prob_at_opt: report.success_prob,
        band_90,
        band_50,
    })
}

/// Walks outward from `t_opt` in steps of `h` until the rate drops below
/// `frac · best`, then bisects the crossing.
fn band<F>(eval: &F, t_opt: f64, best: f64, frac: f64, h: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let target = frac * best;
    let edge = |dir: f64, limit: f64| -> Result<f64> {
        let mut inside = t_opt;
        loop {
            let next = inside + dir * h;
            if (dir < 0.0 && next <= limit) || (dir > 0.0 && next >= limit) {
                if eval(limit)? >= target {
                    return Ok(limit);
                }
                return bisect_crossing(eval, inside, limit, target);
            }
            if eval(next)? < target {
                return bisect_crossing(eval, inside, next, target);
            }
            inside = next;
        }
    };
    Ok((edge(-1.0, T_MIN)?, edge(1.0, T_MAX)?))
}

/// `inside` satisfies `f ≥ target`, `outside` does not.
fn bisect_crossing<F>(eval: &F, mut inside: f64, mut outside: f64, target: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    for _ in 0..60 {
        if (inside - outside).abs() < 1e-12 {
            break;
        }
        let mid = 0.5 * (inside + outside);
        if eval(mid)? >= target {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    Ok(inside)
}

/// Outcome of the excess-noise search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseTolerance {
    pub eps_max: f64,
    /// No positive rate even at zero excess noise.
    pub no_key: bool,
    /// The bracket check failed and a scan located the threshold.
    pub used_fallback: bool,
}

const EPS_TOL: f64 = 1e-7;
const EPS_BRACKET: f64 = 1e-4;

/// Largest `ε` with a positive key rate, by bisection.
pub fn tolerable_excess_noise(src: &SourceSpec, ch: &ChannelSpec, beta: f64, eps_hi: f64) -> Result<NoiseTolerance> {
    if !(eps_hi > 0.0) {
        return Err(domain("upper excess noise", eps_hi));
    }
    let rate = |eps: f64| -> Result<f64> {
        let c = ch.with_epsilon(eps.max(0.0))?;
        Ok(pipeline_key_rate(src, &c, beta)?.raw_rate)
    };
    if rate(0.0)? <= 0.0 {
        return Ok(NoiseTolerance { eps_max: 0.0, no_key: true, used_fallback: false });
    }
    let mut hi = eps_hi;
    while rate(hi)? > 0.0 {
        hi *= 2.0;
        if hi > 1e4 {
            return Err(domain("excess-noise bracket", hi));
        }
    }
    let mut lo = 0.0;
    while hi - lo > EPS_TOL {
        let mid = 0.5 * (lo + hi);
        if rate(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let delta = EPS_BRACKET.min(0.5 * lo);
    let bracket_ok = (lo - delta <= 0.0 || rate(lo - delta)? > 0.0) && rate(lo + EPS_BRACKET)? <= 0.0;
    if bracket_ok {
        return Ok(NoiseTolerance { eps_max: lo, no_key: false, used_fallback: false });
    }

    // Non-monotone in ε: first sign change on a fine scan.
    let steps = 10_000;
    let h = hi.max(eps_hi) / steps as f64;
    let mut last_good = 0.0;
    for i in 1..=steps {
        let e = i as f64 * h;
        if rate(e)? <= 0.0 {
            let (mut a, mut b) = (last_good, e);
            while b - a > EPS_TOL {
                let m = 0.5 * (a + b);
                if rate(m)? > 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            return Ok(NoiseTolerance { eps_max: a, no_key: false, used_fallback: true });
        }
        last_good = e;
    }
    Ok(NoiseTolerance { eps_max: last_good, no_key: false, used_fallback: true })
}

/// Tolerable noise maximised over `T`; returns `(T, tolerance)`.
pub fn optimize_t_for_noise(
    template: &SourceSpec,
    ch: &ChannelSpec,
    beta: f64,
    eps_hi: f64,
    grid: &TGrid,
) -> Result<(f64, NoiseTolerance)> {
    if template.scheme == Scheme::None {
        return Ok((1.0, tolerable_excess_noise(template, ch, beta, eps_hi)?));
    }
    let eval = |t: f64| -> Result<NoiseTolerance> {
        let mut s = *template;
        s.t = t;
        tolerable_excess_noise(&s, ch, beta, eps_hi)
    };
    let mut best_t = 0.5;
    let mut best = NoiseTolerance { eps_max: 0.0, no_key: true, used_fallback: false };
    for t in grid.points() {
        let r = eval(t)?;
        if r.eps_max > best.eps_max || (best.no_key && !r.no_key) {
            best = r;
            best_t = t;
        }
    }
    let mut h = grid.step();
    for _ in 0..grid.refinements {
        let lo = best_t - h;
        h /= 10.0;
        for i in 0..=20 {
            let t = lo + i as f64 * h;
            if !(T_MIN..=T_MAX).contains(&t) {
                continue;
            }
            let r = eval(t)?;
            if r.eps_max > best.eps_max {
                best = r;
                best_t = t;
            }
        }
    }
    Ok((best_t, best))
}

/// Fibre-link parameters shared by distance sweeps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkSpec {
    pub loss_db_per_km: f64,
    pub epsilon: f64,
    pub beta: f64,
}

impl LinkSpec {
    pub fn channel(&self, distance_km: f64) -> Result<ChannelSpec> {
        ChannelSpec::from_distance(distance_km, self.loss_db_per_km, self.epsilon)
    }
}

/// How `T` is chosen while sweeping distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TChoice {
    /// Use the template's `t`.
    Fixed,
    /// Optimise at every distance.
    Optimal(TGrid),
}

/// Best achievable rate at one distance under the given `T` policy.
pub fn rate_at_distance(template: &SourceSpec, link: &LinkSpec, distance_km: f64, choice: TChoice) -> Result<f64> {
    let ch = link.channel(distance_km)?;
    match choice {
        TChoice::Fixed => Ok(pipeline_key_rate(template, &ch, link.beta)?.key_rate),
        TChoice::Optimal(grid) => Ok(optimize_t(template, &ch, link.beta, &grid)?.key_rate_opt),
    }
}

/// Largest distance with rate above `floor`, resolved to `resolution_km`.
///
/// A coarse scan (`coarse_km` steps up to `max_km`) brackets the first
/// distance where the rate drops to the floor; bisection then refines it.
/// Returns `None` when no distance is alive.
pub fn max_distance(
    template: &SourceSpec,
    link: &LinkSpec,
    choice: TChoice,
    floor: f64,
    resolution_km: f64,
) -> Result<Option<f64>> {
    let coarse_km = 5.0;
    let max_km = 1000.0;
    let alive = |d: f64| -> Result<bool> { Ok(rate_at_distance(template, link, d, choice)? > floor) };
    if !alive(0.0)? {
        return Ok(None);
    }
    let mut lo = 0.0;
    let mut hi = coarse_km;
    while alive(hi)? {
        lo = hi;
        hi += coarse_km;
        if hi > max_km {
            return Ok(Some(max_km));
        }
    }
    while hi - lo > resolution_km {
        let mid = 0.5 * (lo + hi);
        if alive(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

/// Dense rate surface over `(distance, T)` for a set of source templates.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanSpec {
    pub distances_km: Vec<f64>,
    pub t_grid: TGrid,
    pub schemes: Vec<SourceSpec>,
    pub link: LinkSpec,
    pub rate_floor: f64,
}

impl ScanSpec {
    pub fn validate(&self) -> Result<()> {
        TGrid::new(self.t_grid.count, self.t_grid.refinements)?;
        for w in self.distances_km.windows(2) {
            if !(w[1] > w[0]) {
                return Err(domain("distance list (must increase strictly)", w[1]));
            }
        }
        if let Some(&d) = self.distances_km.first() {
            if !(d >= 0.0) {
                return Err(domain("distance", d));
            }
        }
        if !(self.link.beta > 0.0 && self.link.beta <= 1.0) {
            return Err(domain("reconciliation efficiency", self.link.beta));
        }
        for s in &self.schemes {
            s.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LandscapePoint {
    pub scheme: usize,
    pub distance_km: f64,
    pub t: f64,
    pub key_rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LandscapeRow {
    pub scheme: usize,
    pub points: Vec<LandscapePoint>,
    pub optimum: OptimumRecord,
}

/// One `(scheme, distance)` cell of the landscape. Cells are independent.
pub fn landscape_row(scan: &ScanSpec, scheme: usize, distance_km: f64) -> Result<LandscapeRow> {
    let template = scan.schemes.get(scheme).ok_or(crate::Error::Domain { what: "scheme index", value: scheme as f64 })?;
    let ch = scan.link.channel(distance_km)?;
    let points = scan
        .t_grid
        .points()
        .map(|t| {
            let mut s = *template;
            s.t = t;
            pipeline_key_rate(&s, &ch, scan.link.beta).map(|r| LandscapePoint { scheme, distance_km, t, key_rate: r.key_rate })
        })
        .collect::<Result<Vec<_>>>()?;
    let optimum = optimize_t(template, &ch, scan.link.beta, &scan.t_grid)?;
    Ok(LandscapeRow { scheme, points, optimum })
}

/// Cells in `(scheme, distance)` order.
pub fn landscape_cells(scan: &ScanSpec) -> impl Iterator<Item = (usize, f64)> + '_ {
    (0..scan.schemes.len()).flat_map(move |s| scan.distances_km.iter().map(move |&d| (s, d)))
}

pub fn landscape(scan: &ScanSpec) -> Result<Vec<LandscapeRow>> {
    scan.validate()?;
    landscape_cells(scan).map(|(s, d)| landscape_row(scan, s, d)).collect()
}

/// Heralding probability versus `T` for each `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SuccessCurveRow {
    pub t: f64,
    pub probs: Vec<f64>,
}

pub fn success_curves(v: f64, k_list: &[u32], t_samples: &[f64]) -> Result<Vec<SuccessCurveRow>> {
    t_samples
        .iter()
        .map(|&t| {
            let probs = k_list
                .iter()
                .map(|&k| SourceSpec::k_photon(v, t, k).map(|s| photon_count_prob(&s, k)))
                .collect::<Result<Vec<_>>>()?;
            Ok(SuccessCurveRow { t, probs })
        })
        .collect()
}

/// `β = R / (½ log2(1 + SNR))`
pub fn beta_from_rate_snr(code_rate: f64, snr: f64) -> Result<f64> {
    if !(code_rate > 0.0) {
        return Err(domain("code rate", code_rate));
    }
    if !(snr > 0.0) {
        return Err(domain("SNR", snr));
    }
    Ok(code_rate / (0.5 * log2(1.0 + snr)))
}

/// Inverse of [`beta_from_rate_snr`]: `SNR = 2^{2R/β} - 1`.
pub fn snr_from_rate_beta(code_rate: f64, beta: f64) -> Result<f64> {
    if !(code_rate > 0.0) {
        return Err(domain("code rate", code_rate));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(domain("reconciliation efficiency", beta));
    }
    Ok(pow(2.0, 2.0 * code_rate / beta) - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINK: LinkSpec = LinkSpec { loss_db_per_km: 0.2, epsilon: 0.01, beta: 0.95 };

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn baseline_pipeline() {
        let r = pipeline_key_rate(&SourceSpec::plain(20.0).unwrap(), &ChannelSpec::new(1.0, 0.0).unwrap(), 1.0).unwrap();
        assert!(close(r.key_rate, 0.5 * 20f64.log2(), 1e-6));
        let r = pipeline_key_rate(&SourceSpec::plain(1.0).unwrap(), &ChannelSpec::new(1.0, 0.0).unwrap(), 1.0).unwrap();
        assert!(r.key_rate <= 0.0);
    }

    #[test]
    fn subtraction_wins_at_100_km() {
        let ch = LINK.channel(100.0).unwrap();
        let k1 = pipeline_key_rate(&SourceSpec::k_photon(20.0, 0.8, 1).unwrap(), &ch, 0.95).unwrap();
        let none = pipeline_key_rate(&SourceSpec::plain(20.0).unwrap(), &ch, 0.95).unwrap();
        assert!(k1.key_rate > 0.0, "{k1:?}");
        assert!(none.key_rate < 0.0, "{none:?}");
    }

    #[test]
    fn optimum_dominates_grid() {
        let grid = TGrid::new(64, 2).unwrap();
        let template = SourceSpec::k_photon(20.0, 0.5, 1).unwrap();
        for d in [20.0, 100.0, 150.0] {
            let ch = LINK.channel(d).unwrap();
            let rec = optimize_t(&template, &ch, 0.95, &grid).unwrap();
            for t in grid.points() {
                let r = rate_at(&template, t, &ch, 0.95).unwrap().key_rate;
                assert!(rec.key_rate_opt >= r, "d={d} t={t}");
            }
            assert_eq!(rec.distance_km, d);
        }
        assert!(TGrid::new(16, 1).is_err());
    }

    #[test]
    fn optimize_is_deterministic() {
        let grid = TGrid::default();
        let template = SourceSpec::k_photon(20.0, 0.5, 2).unwrap();
        let ch = LINK.channel(120.0).unwrap();
        assert_eq!(optimize_t(&template, &ch, 0.95, &grid).unwrap(), optimize_t(&template, &ch, 0.95, &grid).unwrap());
    }

    #[test]
    fn dead_distance_is_flagged() {
        let rec = optimize_t(&SourceSpec::k_photon(20.0, 0.5, 1).unwrap(), &ChannelSpec::from_distance(100.0, 0.2, 0.3).unwrap(), 0.95, &TGrid::default()).unwrap();
        assert!(!rec.has_key(), "{rec:?}");
        assert!(rec.band_90.is_none());
    }

    #[test]
    fn bands_are_nested_and_sharp() {
        let template = SourceSpec::k_photon(20.0, 0.5, 1).unwrap();
        let ch = LINK.channel(100.0).unwrap();
        let rec = optimize_t(&template, &ch, 0.95, &TGrid::default()).unwrap();
        let (l90, h90) = rec.band_90.unwrap();
        let (l50, h50) = rec.band_50.unwrap();
        assert!(l90 < rec.t_opt && rec.t_opt < h90);
        assert!(l50 <= l90 && h90 <= h50);
        for (edge, frac) in [(l90, 0.9), (h90, 0.9), (l50, 0.5), (h50, 0.5)] {
            let r = rate_at(&template, edge, &ch, 0.95).unwrap().key_rate;
            assert!((r / rec.key_rate_opt - frac).abs() < 0.005 * frac, "edge {edge}: {r}");
        }
    }

    #[test]
    fn scheme_none_is_t_independent() {
        let scan = ScanSpec {
            distances_km: alloc::vec![10.0, 50.0],
            t_grid: TGrid::new(32, 0).unwrap(),
            schemes: alloc::vec![SourceSpec::plain(20.0).unwrap()],
            link: LINK,
            rate_floor: DEFAULT_RATE_FLOOR,
        };
        for row in landscape(&scan).unwrap() {
            let first = row.points[0].key_rate;
            assert!(row.points.iter().all(|p| p.key_rate == first));
        }
    }

    #[test]
    fn scan_validation() {
        let mut scan = ScanSpec {
            distances_km: alloc::vec![10.0, 5.0],
            t_grid: TGrid::default(),
            schemes: alloc::vec![],
            link: LINK,
            rate_floor: DEFAULT_RATE_FLOOR,
        };
        assert!(scan.validate().is_err());
        scan.distances_km = alloc::vec![-1.0, 5.0];
        assert!(scan.validate().is_err());
        scan.distances_km = alloc::vec![0.0, 5.0];
        assert!(scan.validate().is_ok());
    }

    #[test]
    fn lossless_channel_tolerates_noise() {
        let src = SourceSpec::plain(20.0).unwrap();
        let ch = ChannelSpec::new(1.0, 0.0).unwrap();
        let tol = tolerable_excess_noise(&src, &ch, 0.95, 0.1).unwrap();
        assert!(tol.eps_max > 0.0 && !tol.no_key);
        let r = |e: f64| pipeline_key_rate(&src, &ch.with_epsilon(e).unwrap(), 0.95).unwrap().key_rate;
        assert!(r(tol.eps_max - 1e-4) > 0.0);
        assert!(r(tol.eps_max + 1e-4) <= 0.0);
    }

    #[test]
    fn no_key_at_zero_noise_returns_zero() {
        let src = SourceSpec::plain(20.0).unwrap();
        let tol = tolerable_excess_noise(&src, &LINK.channel(300.0).unwrap(), 0.95, 0.1).unwrap();
        assert!(tol.no_key);
        assert_eq!(tol.eps_max, 0.0);
    }

    #[test]
    fn success_curve_shape() {
        let ts: alloc::vec::Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
        let rows = success_curves(20.0, &[1, 2, 3, 4], &ts).unwrap();
        let last = rows.last().unwrap();
        assert!(last.probs.iter().all(|&p| p == 0.0));
        for row in rows.iter().filter(|r| r.t >= 0.6) {
            assert!(row.probs.windows(2).all(|w| w[0] > w[1]) || row.t == 1.0, "t={}", row.t);
        }
        let peak = rows.iter().map(|r| r.probs[0]).fold(0.0, f64::max);
        assert!(peak <= 0.25 + 1e-12 && peak > 0.249);
    }

    #[test]
    fn reference_efficiencies() {
        assert!(close(beta_from_rate_snr(0.1, 0.1626).unwrap(), 0.9202, 0.002));
        assert!(close(beta_from_rate_snr(0.02, 0.0301).unwrap(), 0.9337, 0.002));
        let snr = snr_from_rate_beta(0.1, 1.0).unwrap();
        assert!(close(beta_from_rate_snr(0.1, snr).unwrap(), 1.0, 1e-12));
        assert!(beta_from_rate_snr(0.0, 0.1).is_err());
        assert!(beta_from_rate_snr(0.1, -1.0).is_err());
        assert!(snr_from_rate_beta(0.1, 1.5).is_err());
    }
}
