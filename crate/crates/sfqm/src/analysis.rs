//! Parameter sweeps and derived diagnostics: resonance peaks, band valleys,
//! the saturation metric, and the reflection-scaling fit.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{barrier_height, PotentialSpec};
use crate::scalar::{lit, Scalar};
use crate::scattering::{
    neg_log10_transmission, transmission_pair, Dispersion, WaveContext,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanPoint<S> {
    pub k: S,
    pub transmission: S,
    pub reflection: S,
}

/// Uniform inclusive grid over `[lo, hi]` with `n` points.
pub fn linear_grid<S: Scalar>(lo: S, hi: S, n: usize) -> Vec<S> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / lit((n - 1) as f64);
    (0..n).map(|i| lo + step * lit(i as f64)).collect()
}

/// Log-uniform inclusive grid over `[lo, hi]` with `n` points.
pub fn log_grid<S: Scalar>(lo: S, hi: S, n: usize) -> Vec<S> {
    linear_grid(lo.ln(), hi.ln(), n).into_iter().map(|x| x.exp()).collect()
}

fn check_k_range<S: Scalar>(k_lo: S, k_hi: S, n: usize) -> Result<()> {
    if !(k_lo > S::zero() && k_hi > k_lo) {
        return Err(Error::InvalidInput(format!(
            "need 0 < k_lo < k_hi; got [{k_lo}, {k_hi}]"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 grid points; got {n}")));
    }
    Ok(())
}

/// T(k) and R(k) on a uniform k grid at fixed `alpha`.
pub fn scan_1d<S: Scalar>(
    spec: &PotentialSpec<S>,
    alpha: S,
    dispersion: Dispersion,
    k_lo: S,
    k_hi: S,
    n: usize,
) -> Result<Vec<ScanPoint<S>>> {
    check_k_range(k_lo, k_hi, n)?;
    scan_over(spec, alpha, dispersion, &linear_grid(k_lo, k_hi, n))
}

pub fn scan_over<S: Scalar>(
    spec: &PotentialSpec<S>,
    alpha: S,
    dispersion: Dispersion,
    ks: &[S],
) -> Result<Vec<ScanPoint<S>>> {
    ks.par_iter()
        .map(|&k| {
            let ctx = WaveContext::with_dispersion(alpha, k, dispersion)?;
            let (t, r) = transmission_pair(spec, &ctx)?;
            Ok(ScanPoint { k, transmission: t, reflection: r })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanGrid<S> {
    pub alphas: Vec<S>,
    pub ks: Vec<S>,
    /// Row-major, alpha-major: `values[i * ks.len() + j]` is T(alphas[i], ks[j]).
    pub values: Vec<S>,
}

impl<S: Scalar> ScanGrid<S> {
    pub fn row(&self, i: usize) -> &[S] {
        &self.values[i * self.ks.len()..(i + 1) * self.ks.len()]
    }
}

/// Full T(alpha, k) grid; every point independent, output order fixed.
pub fn scan_2d<S: Scalar>(
    spec: &PotentialSpec<S>,
    alpha_lo: S,
    alpha_hi: S,
    n_alpha: usize,
    dispersion: Dispersion,
    k_lo: S,
    k_hi: S,
    n_k: usize,
) -> Result<ScanGrid<S>> {
    check_k_range(k_lo, k_hi, n_k)?;
    if !(alpha_lo > S::one() && alpha_hi <= lit(2.0) && alpha_lo <= alpha_hi) {
        return Err(Error::InvalidInput(format!(
            "need 1 < alpha_lo <= alpha_hi <= 2; got [{alpha_lo}, {alpha_hi}]"
        )));
    }
    if n_alpha < 1 || (n_alpha > 1 && alpha_lo == alpha_hi) {
        return Err(Error::InvalidInput("bad alpha grid".into()));
    }
    let alphas = linear_grid(alpha_lo, alpha_hi, n_alpha);
    let ks = linear_grid(k_lo, k_hi, n_k);
    let values: Vec<S> = alphas
        .par_iter()
        .flat_map_iter(|&alpha| ks.iter().map(move |&k| (alpha, k)))
        .map(|(alpha, k)| {
            let ctx = WaveContext::with_dispersion(alpha, k, dispersion)?;
            Ok(transmission_pair(spec, &ctx)?.0)
        })
        .collect::<Result<_>>()?;
    Ok(ScanGrid { alphas, ks, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Peak<S> {
    pub k_peak: S,
    pub width: S,
}

/// Local maxima with `T >= threshold`; width is measured between the
/// half-prominence crossings on either side. Grid-boundary maxima are
/// discarded, as is any flat plateau (no strict rise on either side).
pub fn resonance_peaks<S: Scalar>(table: &[ScanPoint<S>], threshold: S) -> Vec<Peak<S>> {
    let n = table.len();
    let mut peaks = Vec::new();
    for i in 1..n.saturating_sub(1) {
        let t = table[i].transmission;
        let (prev, next) = (table[i - 1].transmission, table[i + 1].transmission);
        if t < threshold || t < prev || t < next || (t == prev && t == next) {
            continue;
        }
        // nearest valley floor on each side
        let mut l = i;
        while l > 0 && table[l - 1].transmission <= table[l].transmission {
            l -= 1;
        }
        let mut r = i;
        while r + 1 < n && table[r + 1].transmission <= table[r].transmission {
            r += 1;
        }
        let base = table[l].transmission.max(table[r].transmission);
        let half = t - (t - base) * lit::<S>(0.5);
        peaks.push(Peak {
            k_peak: table[i].k,
            width: crossing(table, i, half, true) - crossing(table, i, half, false),
        });
    }
    peaks
}

/// k where T first drops through `level` walking right (or left) from `i`,
/// linearly interpolated; clamped to the grid edge.
fn crossing<S: Scalar>(table: &[ScanPoint<S>], i: usize, level: S, rightward: bool) -> S {
    let n = table.len();
    let mut j = i;
    loop {
        let next = if rightward { j + 1 } else { j.wrapping_sub(1) };
        if next >= n {
            return table[j].k;
        }
        let (a, b) = (table[j].transmission, table[next].transmission);
        if b < level {
            let frac = (a - level) / (a - b);
            return table[j].k + (table[next].k - table[j].k) * frac;
        }
        j = next;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KInterval<S> {
    pub k_lo: S,
    pub k_hi: S,
    /// max T inside the valley
    pub quality: S,
}

/// Maximal contiguous runs with `T < threshold` spanning at least `min_width`.
pub fn band_valleys<S: Scalar>(
    table: &[ScanPoint<S>],
    threshold: S,
    min_width: S,
) -> Vec<KInterval<S>> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for i in 0..=table.len() {
        let below = i < table.len() && table[i].transmission < threshold;
        match (below, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                let (k_lo, k_hi) = (table[s].k, table[i - 1].k);
                if k_hi - k_lo >= min_width {
                    let quality = table[s..i]
                        .iter()
                        .map(|p| p.transmission)
                        .fold(S::neg_infinity(), S::max);
                    out.push(KInterval { k_lo, k_hi, quality });
                }
                start = None;
            }
            _ => {}
        }
    }
    out
}

/// Max over the grid of `|y_a(k) - y_b(k)|` with `y = log10(-log10 T)`,
/// comparing stages `g_a` and `g_b` of the same family. Points with `T = 1`
/// (y undefined) are skipped.
pub fn saturation_metric<S: Scalar>(
    spec: &PotentialSpec<S>,
    g_a: u32,
    g_b: u32,
    alpha: S,
    dispersion: Dispersion,
    ks: &[S],
) -> Result<S> {
    let spec_a = PotentialSpec { stage: g_a, ..*spec };
    let spec_b = PotentialSpec { stage: g_b, ..*spec };
    let deltas: Vec<Option<S>> = ks
        .par_iter()
        .map(|&k| {
            let ctx = WaveContext::with_dispersion(alpha, k, dispersion)?;
            let ya = neg_log10_transmission(&spec_a, &ctx)?;
            let yb = neg_log10_transmission(&spec_b, &ctx)?;
            if ya <= S::zero() || yb <= S::zero() {
                return Ok(None);
            }
            Ok(Some((ya.log10() - yb.log10()).abs()))
        })
        .collect::<Result<_>>()?;
    deltas
        .into_iter()
        .flatten()
        .fold(None, |acc: Option<S>, d| Some(acc.map_or(d, |a| a.max(d))))
        .ok_or_else(|| Error::InvalidInput("saturation metric undefined: T = 1 everywhere".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit<S> {
    pub slope: S,
    pub intercept: S,
    pub expected_slope: S,
    /// (log10 k, log10 R, in-envelope) for every grid point.
    pub points: Vec<(S, S, bool)>,
}

/// Least-squares slope of `log10 R` vs `log10 k` over the per-bin upper
/// envelope of the reflection curve (the envelope suppresses the sin-zero
/// oscillations the scaling statement ignores).
pub fn scaling_fit<S: Scalar>(
    spec: &PotentialSpec<S>,
    alpha: S,
    dispersion: Dispersion,
    k_lo: S,
    k_hi: S,
    n: usize,
    n_bins: usize,
) -> Result<ScalingFit<S>> {
    check_k_range(k_lo, k_hi, n)?;
    if n_bins < 5 {
        return Err(Error::InvalidInput(format!("need at least 5 bins; got {n_bins}")));
    }
    let v_g = barrier_height(spec);
    let e_lo = WaveContext::with_dispersion(alpha, k_lo, dispersion)?.energy;
    if e_lo < lit::<S>(10.0) * v_g {
        return Err(Error::InvalidInput(format!(
            "k_lo too small for the high-energy scaling regime: E(k_lo) = {e_lo} < 10 V_G = {}",
            lit::<S>(10.0) * v_g
        )));
    }
    let ks = log_grid(k_lo, k_hi, n);
    let rows = scan_over(spec, alpha, dispersion, &ks)?;
    // per-bin envelope maxima on the log-k axis
    let (lo_ln, hi_ln) = (k_lo.ln(), k_hi.ln());
    let mut best: Vec<Option<usize>> = vec![None; n_bins];
    for (i, row) in rows.iter().enumerate() {
        if !(row.reflection > S::zero()) {
            continue;
        }
        let frac = (row.k.ln() - lo_ln) / (hi_ln - lo_ln);
        let bin = ((frac * lit(n_bins as f64)).to_usize().unwrap_or(0)).min(n_bins - 1);
        if best[bin].map_or(true, |b| row.reflection > rows[b].reflection) {
            best[bin] = Some(i);
        }
    }
    let envelope: Vec<usize> = best.into_iter().flatten().collect();
    if envelope.len() < 5 {
        return Err(Error::InvalidInput(
            "fewer than 5 envelope bins survive; widen the k range".into(),
        ));
    }
    // least squares on the envelope points
    let m = lit::<S>(envelope.len() as f64);
    let (mut sx, mut sy, mut sxx, mut sxy) = (S::zero(), S::zero(), S::zero(), S::zero());
    for &i in &envelope {
        let x = rows[i].k.log10();
        let y = rows[i].reflection.log10();
        sx = sx + x;
        sy = sy + y;
        sxx = sxx + x * x;
        sxy = sxy + x * y;
    }
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    let intercept = (sy - slope * sx) / m;
    let points = rows
        .iter()
        .enumerate()
        .map(|(i, row)| (row.k.log10(), row.reflection.log10(), envelope.contains(&i)))
        .collect();
    let expected_slope = -lit::<S>(4.0) * (alpha - S::one()) / alpha;
    Ok(ScalingFit { slope, intercept, expected_slope, points })
}

/// Max relative pointwise gap between the reflection curves at two stages.
pub fn reflection_convergence<S: Scalar>(
    spec: &PotentialSpec<S>,
    alpha: S,
    dispersion: Dispersion,
    g_a: u32,
    g_b: u32,
    ks: &[S],
) -> Result<S> {
    let spec_a = PotentialSpec { stage: g_a, ..*spec };
    let spec_b = PotentialSpec { stage: g_b, ..*spec };
    let gaps: Vec<S> = ks
        .par_iter()
        .map(|&k| {
            let ctx = WaveContext::with_dispersion(alpha, k, dispersion)?;
            let ra = transmission_pair(&spec_a, &ctx)?.1;
            let rb = transmission_pair(&spec_b, &ctx)?.1;
            Ok((ra - rb).abs() / ra.max(lit(1e-300)))
        })
        .collect::<Result<_>>()?;
    Ok(gaps.into_iter().fold(S::zero(), S::max))
}

// ---- serialization ----

pub fn scan_1d_csv<S: Scalar>(rows: &[ScanPoint<S>]) -> String {
    let mut out = String::from("k,T,R\n");
    for p in rows {
        out.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", p.k, p.transmission, p.reflection));
    }
    out
}

pub fn scan_2d_csv<S: Scalar>(grid: &ScanGrid<S>) -> String {
    let mut out = String::from("alpha,k,T\n");
    for (i, &alpha) in grid.alphas.iter().enumerate() {
        for (j, &k) in grid.ks.iter().enumerate() {
            out.push_str(&format!("{alpha:.16e},{k:.16e},{:.16e}\n", grid.row(i)[j]));
        }
    }
    out
}

#[derive(Serialize)]
struct GridJson<'a, S> {
    alphas: &'a [S],
    ks: &'a [S],
    #[serde(rename = "T")]
    t: Vec<&'a [S]>,
}

pub fn scan_2d_json<S: Scalar + Serialize>(grid: &ScanGrid<S>) -> serde_json::Value {
    let rows = (0..grid.alphas.len()).map(|i| grid.row(i)).collect();
    serde_json::to_value(GridJson { alphas: &grid.alphas, ks: &grid.ks, t: rows }).unwrap()
}

pub fn peaks_csv<S: Scalar>(peaks: &[Peak<S>]) -> String {
    let mut out = String::from("k_peak,width\n");
    for p in peaks {
        out.push_str(&format!("{:.16e},{:.16e}\n", p.k_peak, p.width));
    }
    out
}

pub fn valleys_csv<S: Scalar>(valleys: &[KInterval<S>]) -> String {
    let mut out = String::from("k_lo,k_hi,maxT\n");
    for v in valleys {
        out.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", v.k_lo, v.k_hi, v.quality));
    }
    out
}

pub fn scaling_csv<S: Scalar>(fit: &ScalingFit<S>) -> String {
    let mut out = String::from("log10k,log10R,bin_envelope\n");
    for &(x, y, env) in &fit.points {
        out.push_str(&format!("{x:.16e},{y:.16e},{}\n", env as u8));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{HeightPolicy, PotentialFamily};

    fn spec(v0: f64, stage: u32) -> PotentialSpec<f64> {
        PotentialSpec::new(PotentialFamily::Cantor, 3.0, 1.0, v0, stage, HeightPolicy::Fixed)
            .unwrap()
    }

    #[test]
    fn grids() {
        assert_eq!(linear_grid::<f64>(1.0, 3.0, 3), vec![1.0, 2.0, 3.0]);
        let g = log_grid::<f64>(1.0, 100.0, 3);
        assert!((g[1] - 10.0).abs() < 1e-12 && (g[2] - 100.0).abs() < 1e-12);
    }

    #[test]
    fn free_scan_is_flat() {
        let rows = scan_1d(&spec(0.0, 3), 1.5, Dispersion::Fractional, 1.0, 5.0, 50).unwrap();
        assert_eq!(rows.len(), 50);
        assert_eq!(rows[0].k, 1.0);
        assert_eq!(rows[49].k, 5.0);
        for p in &rows {
            assert!((p.transmission - 1.0).abs() < 1e-12);
        }
        assert!(resonance_peaks(&rows, 0.99).is_empty());
        assert!(band_valleys(&rows, 1e-3, 0.1).is_empty());
    }

    #[test]
    fn invalid_ranges_rejected() {
        let s = spec(1.0, 1);
        assert!(scan_1d(&s, 1.5, Dispersion::Fractional, 5.0, 1.0, 10).is_err());
        assert!(scan_1d(&s, 1.5, Dispersion::Fractional, 1.0, 5.0, 1).is_err());
        assert!(scan_2d(&s, 0.9, 2.0, 3, Dispersion::Fractional, 1.0, 5.0, 10).is_err());
        assert!(scan_2d(&s, 1.1, 2.2, 3, Dispersion::Fractional, 1.0, 5.0, 10).is_err());
    }

    #[test]
    fn single_barrier_resonances() {
        // G=0 barrier of width 1: T = 1 exactly at q = m pi
        let s = spec(10.0, 0);
        let k_of_q = |q: f64| (q * q + 10.0f64).sqrt();
        let rows = scan_1d(&s, 2.0, Dispersion::Fractional, 3.3, 13.0, 4000).unwrap();
        let peaks = resonance_peaks(&rows, 0.99);
        let step = (13.0 - 3.3) / 3999.0;
        for m in 1..=3 {
            let expected = k_of_q(m as f64 * std::f64::consts::PI);
            assert!(
                peaks.iter().any(|p| (p.k_peak - expected).abs() <= step),
                "missing resonance m={m} at k={expected}"
            );
        }
        for p in &peaks {
            assert!(p.width > 0.0);
        }
    }

    #[test]
    fn peak_width_shrinks_with_alpha() {
        // resonances sharpen as alpha decreases; check on the first peak of
        // a stage-2 system
        let s = spec(100.0, 2);
        let mut widths = Vec::new();
        for alpha in [2.0, 1.6] {
            let rows = scan_1d(&s, alpha, Dispersion::Fractional, 6.0, 16.0, 4000).unwrap();
            let peaks = resonance_peaks(&rows, 0.99);
            assert!(!peaks.is_empty());
            widths.push(peaks[0].width);
        }
        assert!(widths[1] < widths[0]);
    }

    #[test]
    fn scan_2d_matches_rows() {
        let s = spec(50.0, 2);
        let grid = scan_2d(&s, 1.2, 2.0, 3, Dispersion::Fractional, 1.0, 9.0, 40).unwrap();
        assert_eq!(grid.values.len(), 120);
        for (i, &alpha) in grid.alphas.iter().enumerate() {
            let row = scan_1d(&s, alpha, Dispersion::Fractional, 1.0, 9.0, 40).unwrap();
            for (j, p) in row.iter().enumerate() {
                assert_eq!(grid.row(i)[j], p.transmission);
            }
        }
        for &t in &grid.values {
            assert!((0.0..=1.0).contains(&t));
        }
    }

    #[test]
    fn valley_detection() {
        let table: Vec<ScanPoint<f64>> = (0..100)
            .map(|i| {
                let k = 1.0 + i as f64 * 0.1;
                let t = if (3.0..6.0).contains(&k) { 1e-5 } else { 0.5 };
                ScanPoint { k, transmission: t, reflection: 1.0 - t }
            })
            .collect();
        let valleys = band_valleys(&table, 1e-3, 1.0);
        assert_eq!(valleys.len(), 1);
        assert!(valleys[0].k_lo >= 2.9 && valleys[0].k_hi <= 6.0);
        assert!(valleys[0].quality <= 1e-5);
        assert!(band_valleys(&table, 1e-3, 5.0).is_empty());
        assert!(band_valleys(&table, 1e-7, 1.0).is_empty());
    }

    #[test]
    fn peaks_and_valleys_disjoint() {
        let s = spec(100.0, 3);
        let rows = scan_1d(&s, 2.0, Dispersion::Fractional, 1.0, 30.0, 3000).unwrap();
        let peaks = resonance_peaks(&rows, 0.99);
        let valleys = band_valleys(&rows, 1e-3, 0.29);
        for p in &peaks {
            for v in &valleys {
                assert!(p.k_peak < v.k_lo || p.k_peak > v.k_hi);
            }
        }
    }

    #[test]
    fn saturation_same_stage_is_zero() {
        let s = spec(100.0, 3);
        let ks = linear_grid(1.0, 10.0, 30);
        let m = saturation_metric(&s, 3, 3, 2.0, Dispersion::Fractional, &ks).unwrap();
        assert_eq!(m, 0.0);
    }

    #[test]
    fn saturation_undefined_when_transparent() {
        let s = spec(0.0, 3);
        let ks = linear_grid(1.0, 10.0, 10);
        assert!(saturation_metric(&s, 2, 3, 2.0, Dispersion::Fractional, &ks).is_err());
    }

    #[test]
    fn scaling_slope_standard_qm() {
        let s = PotentialSpec::new(
            PotentialFamily::Cantor,
            3.0,
            1.0,
            0.2,
            10,
            HeightPolicy::AreaPreserving,
        )
        .unwrap();
        let fit =
            scaling_fit(&s, 2.0, Dispersion::Fractional, 100.0, 1e4, 4000, 40).unwrap();
        assert!((fit.expected_slope - (-2.0f64)).abs() < 1e-15);
        assert!(fit.slope > -2.3 && fit.slope < -1.7, "slope {}", fit.slope);
        assert!(fit.points.iter().filter(|p| p.2).count() >= 5);
    }

    #[test]
    fn scaling_rejects_low_k() {
        let s = PotentialSpec::new(
            PotentialFamily::Cantor,
            3.0,
            1.0,
            100.0,
            10,
            HeightPolicy::AreaPreserving,
        )
        .unwrap();
        assert!(scaling_fit(&s, 2.0, Dispersion::Fractional, 1.0, 100.0, 500, 10).is_err());
    }

    #[test]
    fn reflection_convergence_degenerate() {
        let s = PotentialSpec::new(
            PotentialFamily::Svc,
            3.0,
            1.0,
            5.0,
            5,
            HeightPolicy::AreaPreserving,
        )
        .unwrap();
        let ks = log_grid(10.0, 100.0, 20);
        let m = reflection_convergence(&s, 1.9, Dispersion::Fractional, 5, 5, &ks).unwrap();
        assert_eq!(m, 0.0);
    }

    #[test]
    fn csv_formats() {
        let rows = vec![ScanPoint { k: 1.0, transmission: 0.5, reflection: 0.5 }];
        let csv = scan_1d_csv(&rows);
        assert!(csv.starts_with("k,T,R\n"));
        assert_eq!(csv.lines().count(), 2);
        let grid = ScanGrid { alphas: vec![1.5], ks: vec![1.0, 2.0], values: vec![0.1, 0.2] };
        let csv = scan_2d_csv(&grid);
        assert!(csv.starts_with("alpha,k,T\n"));
        assert_eq!(csv.lines().count(), 3);
        let json = scan_2d_json(&grid);
        assert_eq!(json["T"][0][1], 0.2);
        assert!(peaks_csv::<f64>(&[]).starts_with("k_peak,width\n"));
        assert!(valleys_csv::<f64>(&[]).starts_with("k_lo,k_hi,maxT\n"));
        let fit = ScalingFit {
            slope: -2.0,
            intercept: 1.0,
            expected_slope: -2.0,
            points: vec![(1.0, -2.0, true)],
        };
        assert!(scaling_csv(&fit).contains(",1\n"));
    }
}
