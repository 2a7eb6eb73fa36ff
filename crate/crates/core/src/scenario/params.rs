use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Acceleration exponent of the IDM free-road term. Not calibrated.
pub const IDM_DELTA: f64 = 4.0;

fn default_delta() -> f64 {
    IDM_DELTA
}

/// Behavioral parameters shared by every vehicle of a run.
///
/// The five car-following parameters feed the IDM; the five lane-change
/// scalars scale the motivations of the lane-change model. Field names in
/// scenario files follow the usual microsimulation spelling (`lcStrategic`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    /// Free-flow (desired) speed, m/s.
    pub vf: f64,
    /// Jam space gap, m.
    pub sj: f64,
    /// Desired time headway, s.
    pub tau: f64,
    /// Maximum acceleration, m/s².
    pub a: f64,
    /// Desired (comfortable) deceleration, m/s².
    pub b: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(rename = "lcStrategic")]
    pub lc_strategic: f64,
    #[serde(rename = "lcCooperative")]
    pub lc_cooperative: f64,
    #[serde(rename = "lcAssertive")]
    pub lc_assertive: f64,
    #[serde(rename = "lcSpeedGain")]
    pub lc_speed_gain: f64,
    #[serde(rename = "lcKeepRight")]
    pub lc_keep_right: f64,
}

impl ParameterSet {
    /// Uncalibrated defaults.
    pub fn table_default() -> Self {
        ParameterSet {
            vf: 32.0,
            sj: 2.5,
            tau: 1.0,
            a: 2.6,
            b: 4.5,
            delta: IDM_DELTA,
            lc_strategic: 1.0,
            lc_cooperative: 1.0,
            lc_assertive: 1.0,
            lc_speed_gain: 1.0,
            lc_keep_right: 1.0,
        }
    }

    /// Parameters used to generate the synthetic observations.
    pub fn ground_truth() -> Self {
        ParameterSet {
            vf: 30.55,
            sj: 2.5,
            tau: 1.4,
            a: 1.5,
            b: 2.0,
            delta: IDM_DELTA,
            lc_strategic: 1.0,
            lc_cooperative: 1.0,
            lc_assertive: 0.5,
            lc_speed_gain: 1.0,
            lc_keep_right: 0.5,
        }
    }

    pub fn get(&self, id: ParamId) -> f64 {
        match id {
            ParamId::Vf => self.vf,
            ParamId::Sj => self.sj,
            ParamId::Tau => self.tau,
            ParamId::A => self.a,
            ParamId::B => self.b,
            ParamId::LcStrategic => self.lc_strategic,
            ParamId::LcCooperative => self.lc_cooperative,
            ParamId::LcAssertive => self.lc_assertive,
            ParamId::LcSpeedGain => self.lc_speed_gain,
            ParamId::LcKeepRight => self.lc_keep_right,
        }
    }

    pub fn set(&mut self, id: ParamId, value: f64) {
        let slot = match id {
            ParamId::Vf => &mut self.vf,
            ParamId::Sj => &mut self.sj,
            ParamId::Tau => &mut self.tau,
            ParamId::A => &mut self.a,
            ParamId::B => &mut self.b,
            ParamId::LcStrategic => &mut self.lc_strategic,
            ParamId::LcCooperative => &mut self.lc_cooperative,
            ParamId::LcAssertive => &mut self.lc_assertive,
            ParamId::LcSpeedGain => &mut self.lc_speed_gain,
            ParamId::LcKeepRight => &mut self.lc_keep_right,
        };
        *slot = value;
    }

    pub fn validate(&self) -> Result<()> {
        for id in ParamId::ALL {
            if !self.get(id).is_finite() {
                return Err(Error::validation(id.name(), "must be finite"));
            }
        }
        for id in ParamId::CAR_FOLLOWING {
            if self.get(id) <= 0.0 {
                return Err(Error::validation(
                    id.name(),
                    format!("must be positive, got {}", self.get(id)),
                ));
            }
        }
        if self.delta != IDM_DELTA {
            return Err(Error::validation(
                "delta",
                format!("acceleration exponent is fixed at {IDM_DELTA}, got {}", self.delta),
            ));
        }
        for id in ParamId::LANE_CHANGE {
            if self.get(id) < 0.0 {
                return Err(Error::validation(
                    id.name(),
                    format!("must be nonnegative, got {}", self.get(id)),
                ));
            }
        }
        if self.lc_cooperative > 1.0 {
            return Err(Error::validation(
                "lcCooperative",
                format!("must lie in [0, 1], got {}", self.lc_cooperative),
            ));
        }
        Ok(())
    }
}

/// Identifies one calibratable parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParamId {
    Vf,
    Sj,
    Tau,
    A,
    B,
    LcStrategic,
    LcCooperative,
    LcAssertive,
    LcSpeedGain,
    LcKeepRight,
}

impl ParamId {
    pub const ALL: [ParamId; 10] = [
        ParamId::Vf,
        ParamId::Sj,
        ParamId::Tau,
        ParamId::A,
        ParamId::B,
        ParamId::LcStrategic,
        ParamId::LcCooperative,
        ParamId::LcAssertive,
        ParamId::LcSpeedGain,
        ParamId::LcKeepRight,
    ];
    pub const CAR_FOLLOWING: [ParamId; 5] =
        [ParamId::Vf, ParamId::Sj, ParamId::Tau, ParamId::A, ParamId::B];
    pub const LANE_CHANGE: [ParamId; 5] = [
        ParamId::LcStrategic,
        ParamId::LcCooperative,
        ParamId::LcAssertive,
        ParamId::LcSpeedGain,
        ParamId::LcKeepRight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamId::Vf => "vf",
            ParamId::Sj => "sj",
            ParamId::Tau => "tau",
            ParamId::A => "a",
            ParamId::B => "b",
            ParamId::LcStrategic => "lcStrategic",
            ParamId::LcCooperative => "lcCooperative",
            ParamId::LcAssertive => "lcAssertive",
            ParamId::LcSpeedGain => "lcSpeedGain",
            ParamId::LcKeepRight => "lcKeepRight",
        }
    }

    fn index(self) -> usize {
        ParamId::ALL.iter().position(|&p| p == self).unwrap()
    }
}

/// Box constraints for calibration plus the free/fixed mask.
///
/// Fixed parameters are pinned at `defaults`. Free parameters are exposed to
/// the optimizer in `ParamId::ALL` order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterBounds {
    ranges: [(f64, f64); 10],
    free: [bool; 10],
    defaults: ParameterSet,
}

impl ParameterBounds {
    /// Calibration ranges used for the merge experiments; everything fixed.
    pub fn calibration_ranges(defaults: ParameterSet) -> Self {
        ParameterBounds {
            ranges: [
                (30.0, 35.0),
                (1.0, 3.0),
                (0.5, 2.0),
                (1.0, 4.0),
                (1.0, 3.0),
                (0.0, 5.0),
                (0.0, 1.0),
                (0.0, 5.0),
                (0.0, 5.0),
                (0.0, 5.0),
            ],
            free: [false; 10],
            defaults,
        }
    }

    pub fn with_free(mut self, ids: &[ParamId]) -> Self {
        self.free = [false; 10];
        for id in ids {
            self.free[id.index()] = true;
        }
        self
    }

    pub fn with_range(mut self, id: ParamId, lower: f64, upper: f64) -> Self {
        self.ranges[id.index()] = (lower, upper);
        self
    }

    pub fn range(&self, id: ParamId) -> (f64, f64) {
        self.ranges[id.index()]
    }

    pub fn is_free(&self, id: ParamId) -> bool {
        self.free[id.index()]
    }

    pub fn defaults(&self) -> &ParameterSet {
        &self.defaults
    }

    pub fn free_ids(&self) -> Vec<ParamId> {
        ParamId::ALL.into_iter().filter(|&id| self.is_free(id)).collect()
    }

    /// Bounds of the free parameters, in decision-vector order.
    pub fn free_box(&self) -> Vec<(f64, f64)> {
        self.free_ids().into_iter().map(|id| self.range(id)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.defaults.validate()?;
        for id in self.free_ids() {
            let (lo, hi) = self.range(id);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::validation(
                    format!("bounds.{}", id.name()),
                    format!("need lower < upper, got [{lo}, {hi}]"),
                ));
            }
        }
        Ok(())
    }

    /// Builds a full parameter set from a free-parameter vector.
    pub fn assemble(&self, x: &[f64]) -> ParameterSet {
        let ids = self.free_ids();
        assert_eq!(x.len(), ids.len(), "decision vector has wrong dimension");
        let mut p = self.defaults;
        for (id, &v) in ids.iter().zip(x) {
            p.set(*id, v);
        }
        p
    }

    /// Projects a parameter set onto the free coordinates, clipped into the box.
    pub fn project(&self, p: &ParameterSet) -> Vec<f64> {
        self.free_ids()
            .into_iter()
            .map(|id| {
                let (lo, hi) = self.range(id);
                p.get(id).clamp(lo, hi)
            })
            .collect()
    }
}
