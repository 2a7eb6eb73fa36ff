use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{RoadNetwork, MAINLINE};
use crate::units::per_hour_to_per_second;

/// Piecewise-constant arrival rates per origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandProfile {
    /// Width of every rate bin, s.
    pub bin_s: f64,
    pub origins: Vec<OriginDemand>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginDemand {
    /// `mainline` or the id of an on-ramp.
    pub id: String,
    /// Arrival rate per bin, veh/h.
    pub rates_vph: Vec<f64>,
    /// Destination split: `mainline` or an off-ramp id mapped to a fraction.
    /// An empty map sends everything to the mainline end.
    #[serde(default)]
    pub splits: BTreeMap<String, f64>,
}

/// Where a vehicle leaves the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Destination {
    MainlineEnd,
    OffRamp(usize),
}

impl DemandProfile {
    pub fn origin(&self, id: &str) -> Option<(usize, &OriginDemand)> {
        self.origins.iter().enumerate().find(|(_, o)| o.id == id)
    }

    pub fn is_empty(&self) -> bool {
        self.origins.iter().all(|o| o.rates_vph.iter().all(|&r| r == 0.0))
    }

    pub fn validate(&self, network: &RoadNetwork, horizon_s: f64) -> Result<()> {
        if !(self.bin_s.is_finite() && self.bin_s > 0.0) {
            return Err(Error::validation("demand.bin_s", "bin width must be positive"));
        }
        let bins = horizon_s / self.bin_s;
        if (bins - bins.round()).abs() > 1e-9 || bins.round() < 1.0 {
            return Err(Error::validation(
                "demand.bin_s",
                format!("bin width {} does not divide the horizon {horizon_s}", self.bin_s),
            ));
        }
        let bins = bins.round() as usize;
        let mut seen = Vec::new();
        for (i, o) in self.origins.iter().enumerate() {
            let field = format!("demand.origins[{i}]");
            if seen.contains(&o.id.as_str()) {
                return Err(Error::validation(field, format!("duplicate origin {}", o.id)));
            }
            seen.push(o.id.as_str());
            let entry = if o.id == MAINLINE {
                0.0
            } else if let Some((_, r)) = network.on_ramp(&o.id) {
                r.merge_start_m
            } else {
                return Err(Error::validation(field, format!("unknown origin {}", o.id)));
            };
            if o.rates_vph.len() != bins {
                return Err(Error::validation(
                    format!("{field}.rates_vph"),
                    format!("expected {bins} bins, got {}", o.rates_vph.len()),
                ));
            }
            for (k, &r) in o.rates_vph.iter().enumerate() {
                if !(r.is_finite() && r >= 0.0) {
                    return Err(Error::validation(
                        format!("{field}.rates_vph[{k}]"),
                        format!("rate must be nonnegative, got {r}"),
                    ));
                }
            }
            let mut total = 0.0;
            for (dest, &frac) in &o.splits {
                if !(0.0..=1.0).contains(&frac) {
                    return Err(Error::validation(
                        format!("{field}.splits.{dest}"),
                        format!("split must lie in [0, 1], got {frac}"),
                    ));
                }
                if dest != MAINLINE {
                    match network.off_ramp(dest) {
                        None => {
                            return Err(Error::validation(
                                format!("{field}.splits.{dest}"),
                                "unknown destination",
                            ))
                        }
                        Some((_, r)) if r.diverge_m <= entry => {
                            return Err(Error::validation(
                                format!("{field}.splits.{dest}"),
                                "off-ramp lies upstream of the origin",
                            ))
                        }
                        _ => {}
                    }
                }
                total += frac;
            }
            if !o.splits.is_empty() && (total - 1.0).abs() > 1e-9 {
                return Err(Error::validation(
                    format!("{field}.splits"),
                    format!("splits must sum to 1, got {total}"),
                ));
            }
        }
        Ok(())
    }
}

/// Insertion times of a homogeneous Poisson process within each rate bin.
///
/// The stream is keyed by `(seed, origin index)`, so origins are independent
/// and adding an origin does not perturb the others.
pub fn sample_arrivals(demand: &DemandProfile, origin: &str, seed: u64) -> Result<Vec<f64>> {
    let (index, od) = demand
        .origin(origin)
        .ok_or_else(|| Error::validation("origin", format!("unknown origin id {origin}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * index as u64);
    let mut times = Vec::new();
    for (k, &rate) in od.rates_vph.iter().enumerate() {
        let start = k as f64 * demand.bin_s;
        let end = start + demand.bin_s;
        let lambda = per_hour_to_per_second(rate);
        if lambda <= 0.0 {
            continue;
        }
        let exp = Exp::new(lambda).expect("positive rate");
        let mut t = start;
        loop {
            t += exp.sample(&mut rng);
            if t >= end {
                break;
            }
            times.push(t);
        }
    }
    Ok(times)
}

/// Arrival times paired with destinations drawn once per vehicle.
pub fn sample_departures(
    demand: &DemandProfile,
    network: &RoadNetwork,
    origin: &str,
    seed: u64,
) -> Result<Vec<(f64, Destination)>> {
    let times = sample_arrivals(demand, origin, seed)?;
    let (index, od) = demand.origin(origin).expect("checked by sample_arrivals");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * index as u64 + 1);
    let splits: Vec<(Destination, f64)> = od
        .splits
        .iter()
        .map(|(dest, &frac)| {
            let d = if dest == MAINLINE {
                Destination::MainlineEnd
            } else {
                Destination::OffRamp(network.off_ramp(dest).map(|(i, _)| i).unwrap_or(0))
            };
            (d, frac)
        })
        .collect();
    Ok(times
        .into_iter()
        .map(|t| {
            if splits.is_empty() {
                return (t, Destination::MainlineEnd);
            }
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = splits.last().unwrap().0;
            for &(d, frac) in &splits {
                acc += frac;
                if u < acc {
                    chosen = d;
                    break;
                }
            }
            (t, chosen)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(rate: f64, bins: usize, bin_s: f64) -> DemandProfile {
        DemandProfile {
            bin_s,
            origins: vec![OriginDemand {
                id: MAINLINE.into(),
                rates_vph: vec![rate; bins],
                splits: BTreeMap::new(),
            }],
        }
    }

    #[test]
    fn zero_rate_gives_no_arrivals() {
        assert!(sample_arrivals(&single(0.0, 4, 60.0), MAINLINE, 1).unwrap().is_empty());
    }

    #[test]
    fn deterministic_and_sorted() {
        let d = single(1800.0, 2, 100.0);
        let a = sample_arrivals(&d, MAINLINE, 9).unwrap();
        let b = sample_arrivals(&d, MAINLINE, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(a.iter().all(|&t| (0.0..200.0).contains(&t)));
    }

    #[test]
    fn unknown_origin_is_an_error() {
        assert!(sample_arrivals(&single(100.0, 1, 60.0), "nowhere", 1).is_err());
    }

    #[test]
    fn monte_carlo_mean_matches_rate() {
        // 3600 veh/h for 100 s: Poisson mean 100, sd 10
        let d = single(3600.0, 1, 100.0);
        let counts: Vec<usize> =
            (0..1000).map(|s| sample_arrivals(&d, MAINLINE, s).unwrap().len()).collect();
        let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
        assert!((mean - 100.0).abs() < 1.0, "mean {mean}");
        let n = sample_arrivals(&d, MAINLINE, 7).unwrap().len() as f64;
        assert!((n - 100.0).abs() <= 30.0);
    }

    #[test]
    fn split_fractions_are_respected() {
        let network = RoadNetwork {
            length_m: 1000.0,
            mainline_lanes: 2,
            on_ramps: vec![],
            off_ramps: vec![crate::scenario::OffRamp {
                id: "exit".into(),
                diverge_m: 600.0,
                exit_lane: 0,
            }],
        };
        let mut d = single(3600.0, 1, 2000.0);
        d.origins[0].splits = [(MAINLINE.to_string(), 0.75), ("exit".to_string(), 0.25)].into();
        d.validate(&network, 2000.0).unwrap();
        let deps = sample_departures(&d, &network, MAINLINE, 3).unwrap();
        let exits = deps.iter().filter(|(_, d)| *d == Destination::OffRamp(0)).count();
        let frac = exits as f64 / deps.len() as f64;
        assert!((frac - 0.25).abs() < 0.03, "{frac}");
    }

    #[test]
    fn negative_rate_names_the_bin() {
        let network = RoadNetwork {
            length_m: 1000.0,
            mainline_lanes: 1,
            on_ramps: vec![],
            off_ramps: vec![],
        };
        let mut d = single(100.0, 3, 10.0);
        d.origins[0].rates_vph[2] = -5.0;
        let err = d.validate(&network, 30.0).unwrap_err().to_string();
        assert!(err.contains("rates_vph[2]"), "{err}");
    }
}
