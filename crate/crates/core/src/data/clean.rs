//! Daylight-saving adjustment and missing-value imputation.

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use super::GridDataset;
use crate::anova::TermCollection;
use crate::error::{Error, Result};
use crate::gp::{fit, predict_points, FitConfig, ModelState};
use crate::kernels::KernelSpec;
use crate::HyperParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DstReport {
    pub applied: bool,
    /// Position of the filled slot within each unit's day-hour series.
    pub slot: Option<usize>,
    pub units: usize,
}

/// Moves every value at or after the transition one hour-slot later and
/// fills the opened slot with the mean of its two neighbours. The last
/// value of each unit's series falls off the grid.
///
/// Expects the last two dimensions to be days (ISO-date labels) and hours.
/// A transition outside the day range leaves the data unchanged.
pub fn adjust_dst(ds: &GridDataset, transition: NaiveDateTime) -> Result<(GridDataset, DstReport)> {
    let d = ds.d();
    if d < 2 {
        return Err(Error::Config("daylight-saving adjustment needs day and hour dimensions".into()));
    }
    let day_dim = &ds.dims[d - 2];
    let hour_dim = &ds.dims[d - 1];
    let date = transition.date();
    let units: usize = ds.sizes()[..d - 2].iter().product();
    let Some(day) = day_dim.labels.iter().position(|l| NaiveDate::parse_from_str(l, "%Y-%m-%d").ok() == Some(date)) else {
        return Ok((ds.clone(), DstReport { applied: false, slot: None, units }));
    };
    let hour = hour_dim
        .labels
        .iter()
        .position(|l| l.trim().parse::<u32>().ok() == Some(transition.hour()))
        .ok_or_else(|| Error::Config(format!("hour {} is not a level of {}", transition.hour(), hour_dim.name)))?;
    let len = day_dim.len() * hour_dim.len();
    let t = day * hour_dim.len() + hour;
    if t == 0 || t + 1 >= len {
        return Err(Error::Boundary(format!("transition {transition} falls on the first or last slot of the series")));
    }
    let mut y = ds.y.clone();
    let mut missing = ds.missing.clone();
    for u in 0..units {
        let base = u * len;
        let s = &ds.y[base..base + len];
        let m = &ds.missing[base..base + len];
        y[base + t] = 0.5 * (s[t - 1] + s[t]);
        missing[base + t] = m[t - 1] || m[t];
        y[base + t + 1..base + len].copy_from_slice(&s[t..len - 1]);
        missing[base + t + 1..base + len].copy_from_slice(&m[t..len - 1]);
    }
    let out = GridDataset::new(ds.dims.clone(), ds.value_name.clone(), y, missing)?;
    Ok((out, DstReport { applied: true, slot: Some(t), units }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImputeConfig {
    /// Slots on each side of a missing value used for its local model.
    pub window: usize,
    /// Dimension whose levels (with all earlier dimensions) define a unit.
    pub unit_dimension: usize,
    pub gamma: f64,
}

impl Default for ImputeConfig {
    fn default() -> Self {
        ImputeConfig { window: 24, unit_dimension: 0, gamma: 0.5 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ImputeReport {
    pub imputed: usize,
    pub units: usize,
}

/// Fills each missing value with the posterior mean of a one-dimensional
/// GP fitted to the originally observed values within the window.
///
/// Missing values are visited chronologically and filled values are never
/// used as training data. The mask is left unchanged.
pub fn impute(ds: &GridDataset, cfg: &ImputeConfig) -> Result<(GridDataset, ImputeReport)> {
    let series = ds.unit_series(cfg.unit_dimension)?;
    let spec = KernelSpec::fbm(1.0, cfg.gamma).centred().squared();
    spec.validate()?;
    let tc = TermCollection::main_effects(1);
    let mut y = ds.y.clone();
    let mut imputed = 0;
    for idx in &series {
        let len = idx.len();
        for p in 0..len {
            if ds.y[idx[p]].is_finite() {
                continue;
            }
            let lo = p.saturating_sub(cfg.window);
            let hi = (p + cfg.window).min(len - 1);
            let train: Vec<usize> = (lo..=hi).filter(|&k| !ds.missing[idx[k]] && ds.y[idx[k]].is_finite()).collect();
            if train.is_empty() {
                return Err(Error::Impute(format!("no observed values within {} slots of {}", cfg.window, ds.describe_cell(idx[p]))));
            }
            let pts: Vec<Vec<f64>> = train.iter().map(|&k| vec![k as f64 + 1.0]).collect();
            let yw: Vec<f64> = train.iter().map(|&k| ds.y[idx[k]]).collect();
            let ms = ModelState::new(vec![pts], vec![spec.clone()], tc.clone(), HyperParams::ones(1))?;
            let fm = fit(&ms, &yw, &FitConfig::default())
                .map_err(|e| Error::Impute(format!("local fit for {} failed: {e}", ds.describe_cell(idx[p]))))?;
            let pred = predict_points(&fm, &[vec![vec![p as f64 + 1.0]]], false)?;
            y[idx[p]] = pred.means[0];
            imputed += 1;
        }
    }
    let out = GridDataset::new(ds.dims.clone(), ds.value_name.clone(), y, ds.missing.clone())?;
    Ok((out, ImputeReport { imputed, units: series.len() }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dimension;

    fn one_station(days: usize, f: impl Fn(usize) -> f64) -> GridDataset {
        let n = days * 24;
        let day_labels: Vec<String> = (0..days).map(|i| format!("2020-03-{:02}", 28 + i)).collect();
        let dims = vec![
            Dimension { name: "station".into(), labels: vec!["A".into()], inputs: vec![vec![0.0]] },
            Dimension { name: "day".into(), inputs: (1..=days).map(|i| vec![i as f64]).collect(), labels: day_labels },
            Dimension {
                name: "hour".into(),
                labels: (0..24).map(|h| format!("{h:02}")).collect(),
                inputs: (1..=24).map(|h| vec![h as f64]).collect(),
            },
        ];
        let y: Vec<f64> = (0..n).map(f).collect();
        GridDataset::new(dims, "v", y, vec![false; n]).unwrap()
    }

    fn ts(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M").unwrap()
    }

    #[test]
    fn dst_gap_is_neighbour_mean() {
        let ds = one_station(3, |i| i as f64 * 2.0);
        let (out, rep) = adjust_dst(&ds, ts("2020-03-29T01:00")).unwrap();
        let t = 24 + 1;
        assert_eq!(rep.slot, Some(t));
        let (a, b) = (ds.y[t - 1], ds.y[t]);
        assert_eq!(out.y[t], (a + b) / 2.0);
        assert_eq!(out.y[t + 1], b);
        assert_eq!(&out.y[..t], &ds.y[..t]);
        assert_eq!(&out.y[t + 1..], &ds.y[t..ds.n() - 1]);
        let changed = out.y.iter().zip(&ds.y).filter(|(a, b)| a != b).count();
        assert_eq!(changed, ds.n() - t);
    }

    #[test]
    fn dst_outside_range_and_boundaries() {
        let ds = one_station(2, |i| i as f64);
        let (out, rep) = adjust_dst(&ds, ts("2020-10-25T01:00")).unwrap();
        assert!(!rep.applied);
        assert_eq!(out, ds);
        assert!(matches!(adjust_dst(&ds, ts("2020-03-28T00:00")), Err(Error::Boundary(_))));
        assert!(matches!(adjust_dst(&ds, ts("2020-03-29T23:00")), Err(Error::Boundary(_))));
    }

    #[test]
    fn dst_applies_per_station() {
        let one = one_station(2, |i| (i as f64).sin());
        let mut dims = one.dims.clone();
        dims[0] = Dimension { name: "station".into(), labels: vec!["A".into(), "B".into()], inputs: vec![vec![0.0], vec![1.0]] };
        let mut y = one.y.clone();
        y.extend(one.y.iter().map(|v| v * 3.0));
        let both = GridDataset::new(dims, "v", y, vec![false; 96]).unwrap();
        let (out, _) = adjust_dst(&both, ts("2020-03-28T05:00")).unwrap();
        let (single, _) = adjust_dst(&one, ts("2020-03-28T05:00")).unwrap();
        assert_eq!(&out.y[..48], &single.y[..]);
        for k in 0..48 {
            assert!((out.y[48 + k] - 3.0 * single.y[k]).abs() < 1e-12);
        }
    }

    fn with_missing(mut ds: GridDataset, at: &[usize]) -> GridDataset {
        for &i in at {
            ds.y[i] = f64::NAN;
            ds.missing[i] = true;
        }
        ds
    }

    #[test]
    fn constant_series_imputes_constant() {
        let ds = with_missing(one_station(2, |_| 42.0), &[30]);
        let (out, rep) = impute(&ds, &ImputeConfig::default()).unwrap();
        assert_eq!(rep.imputed, 1);
        assert!((out.y[30] - 42.0).abs() <= 1e-4, "{}", out.y[30]);
        assert_eq!(out.missing, ds.missing);
    }

    #[test]
    fn ramp_tracks_linear_interpolant() {
        let ds = with_missing(one_station(2, |i| 5.0 + 0.8 * i as f64), &[20]);
        let (out, _) = impute(&ds, &ImputeConfig::default()).unwrap();
        let want = 5.0 + 0.8 * 20.0;
        assert!((out.y[20] - want).abs() <= 0.05 * want, "{} vs {want}", out.y[20]);
    }

    #[test]
    fn adjacent_gaps_use_originals_only() {
        let ds = with_missing(one_station(2, |i| (i as f64 * 0.3).sin() * 4.0 + 10.0), &[10, 11]);
        let (out, rep) = impute(&ds, &ImputeConfig::default()).unwrap();
        assert_eq!(rep.imputed, 2);
        // Neither gap sees the other's filled value: refit by hand on the
        // originals of the window around slot 11.
        let train: Vec<usize> = (0..=35).filter(|k| *k != 10 && *k != 11).collect();
        let pts: Vec<Vec<f64>> = train.iter().map(|&k| vec![k as f64 + 1.0]).collect();
        let yw: Vec<f64> = train.iter().map(|&k| ds.y[k]).collect();
        let spec = KernelSpec::fbm(1.0, 0.5).centred().squared();
        let ms = ModelState::new(vec![pts], vec![spec], TermCollection::main_effects(1), HyperParams::ones(1)).unwrap();
        let fm = fit(&ms, &yw, &FitConfig::default()).unwrap();
        let want = predict_points(&fm, &[vec![vec![12.0]]], false).unwrap().means[0];
        assert_eq!(want.to_bits(), out.y[11].to_bits());
        for i in 0..ds.n() {
            if !ds.missing[i] {
                assert_eq!(out.y[i].to_bits(), ds.y[i].to_bits());
            }
        }
    }

    #[test]
    fn empty_window_names_the_slot() {
        let ds = with_missing(one_station(1, |_| 1.0), &(0..24).collect::<Vec<_>>());
        let err = impute(&ds, &ImputeConfig { window: 3, ..Default::default() }).unwrap_err();
        assert!(err.to_string().contains("station=A,day=2020-03-28,hour=00"), "{err}");
    }
}
