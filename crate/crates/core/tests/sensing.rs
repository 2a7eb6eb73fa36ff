use approx::assert_relative_eq;
use mergecal::microsim::{run_with_seed, TrajSample, Track, TrajectoryLog};
use mergecal::scenario::{build_synthetic_merge, sample_arrivals, DetectorSpec};
use mergecal::sensing::{
    aggregate, detector_crossings, simulate_detectors, simulate_detectors_live, MeasurementGrid,
};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn straight(id: u64, x0: f64, v: f64, horizon: f64) -> Track {
    let samples = (0..=(horizon * 10.0).round() as usize)
        .map(|k| {
            let t = k as f64 * 0.1;
            TrajSample {
                t,
                x: x0 + v * t,
                v,
                lane: 0,
            }
        })
        .collect();
    Track {
        id,
        length: 5.0,
        inserted_at: 0.0,
        exited_at: None,
        samples,
    }
}

fn one_detector(window: f64) -> Vec<DetectorSpec> {
    vec![DetectorSpec {
        position_m: 500.0,
        lanes: vec![0],
        window_s: window,
    }]
}

#[test]
fn live_and_offline_detectors_agree() {
    let s = build_synthetic_merge();
    for (p, seed) in [(s.ground_truth.unwrap(), 42), (s.defaults, 7)] {
        let traj = run_with_seed(&s, &p, seed).unwrap();
        let offline = simulate_detectors(&traj, &s.detectors).unwrap();
        let live = simulate_detectors_live(&s, &p, seed).unwrap();
        assert_eq!(offline, live);
    }
}

#[test]
fn csv_round_trip_preserves_the_grid() {
    let s = build_synthetic_merge();
    let g = simulate_detectors_live(&s, &s.ground_truth.unwrap(), 42).unwrap();
    let mut buf = Vec::new();
    g.write_csv(&mut buf).unwrap();
    let back = MeasurementGrid::read_csv(buf.as_slice(), Some(s.simulation.horizon_s)).unwrap();
    assert!(back.same_geometry(&g));
    for (a, b) in g.cells().iter().zip(back.cells()) {
        assert_eq!(a.flow_vph, b.flow_vph);
        assert_eq!(a.speed_mps, b.speed_mps);
        assert_eq!(a.occupancy_pct, b.occupancy_pct);
    }
}

#[test]
fn counts_match_trajectory_crossings() {
    let s = build_synthetic_merge();
    let traj = run_with_seed(&s, &s.ground_truth.unwrap(), 42).unwrap();
    let g = simulate_detectors(&traj, &s.detectors).unwrap();
    for (site, spec) in s.detectors.iter().enumerate() {
        let crossings = detector_crossings(&traj, spec.position_m).len() as f64;
        let mut counted = 0.0;
        for (si, _, i, c) in g.iter() {
            if si == site {
                let (a, b) = g.interval(i);
                counted += c.flow_vph.unwrap() * (b - a) / 3600.0;
            }
        }
        assert_relative_eq!(counted, crossings, epsilon = 1e-6);
    }
}

#[test]
fn platoon_occupancy_is_exact() {
    // five vehicles 20 m apart at 12 m/s, all crossing 500 m inside [0, 50)
    let u = 12.0;
    let tracks = (0..5).map(|k| straight(k, 400.0 - 20.0 * k as f64, u, 50.0)).collect();
    let traj = TrajectoryLog {
        horizon: 50.0,
        road_length: 1300.0,
        tracks,
    };
    let g = simulate_detectors(&traj, &one_detector(50.0)).unwrap();
    let c = g.cell(0, 0, 0);
    assert_relative_eq!(c.occupancy_pct.unwrap(), 100.0 * 5.0 * 5.0 / (u * 50.0), max_relative = 1e-12);
    assert_relative_eq!(c.flow_vph.unwrap(), 5.0 * 3600.0 / 50.0, max_relative = 1e-12);
    assert_relative_eq!(c.speed_mps.unwrap(), u, max_relative = 1e-12);
}

#[test]
fn aggregation_composes() {
    let mut s = build_synthetic_merge();
    for d in &mut s.detectors {
        d.window_s = 10.0;
    }
    let g = simulate_detectors_live(&s, &s.ground_truth.unwrap(), 42).unwrap();
    assert_eq!(aggregate(&g, 10.0).unwrap(), g);
    let two_step = aggregate(&aggregate(&g, 50.0).unwrap(), 100.0).unwrap();
    let direct = aggregate(&g, 100.0).unwrap();
    assert_eq!(two_step.boundaries(), direct.boundaries());
    for (a, b) in two_step.cells().iter().zip(direct.cells()) {
        for (x, y) in [(a.flow_vph, b.flow_vph), (a.speed_mps, b.speed_mps), (a.occupancy_pct, b.occupancy_pct)] {
            match (x, y) {
                (Some(x), Some(y)) => assert_relative_eq!(x, y, max_relative = 1e-9, epsilon = 1e-9),
                (x, y) => assert_eq!(x, y),
            }
        }
    }
    assert!(aggregate(&g, 25.0).is_err());
}

#[test]
fn arrivals_are_poisson() {
    // interarrival times binned into ten equiprobable exponential classes
    let mut s = build_synthetic_merge();
    s.demand.bin_s = 20_000.0;
    s.demand.origins[0].rates_vph = vec![3000.0];
    let times = sample_arrivals(&s.demand, "mainline", 5).unwrap();
    let lambda = 3000.0 / 3600.0;
    let mut counts = [0usize; 10];
    let mut prev = 0.0;
    for &t in &times {
        let u = 1.0 - (-(lambda * (t - prev))).exp();
        counts[((u * 10.0) as usize).min(9)] += 1;
        prev = t;
    }
    let n = times.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - n / 10.0).powi(2) / (n / 10.0)).sum();
    let critical = ChiSquared::new(9.0).unwrap().inverse_cdf(0.999);
    assert!(stat < critical, "chi-square {stat} >= {critical}");
    assert_relative_eq!(n, lambda * 20_000.0, max_relative = 0.05);
}
