use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Standard,
    Autonomous,
    Simplified,
}

/// Idle durations of one half-cycle, in units of τ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub entering: f64,
    pub layers: [f64; 4],
    /// Readout and reset (reset only for the autonomous variant).
    pub readout: f64,
    pub vr_idle: f64,
}

impl Schedule {
    /// Per-slot duration of the simplified schedule.
    pub const SIMPLIFIED_SLOT: f64 = 0.05;

    pub fn standard() -> Self {
        Schedule {
            kind: ScheduleKind::Standard,
            entering: 0.01,
            layers: [0.05, 0.07, 0.03, 0.01],
            readout: 0.23,
            vr_idle: 0.10,
        }
    }

    /// No readout; the ancilla is reset during a shortened 0.08 segment.
    pub fn autonomous() -> Self {
        Schedule {
            kind: ScheduleKind::Autonomous,
            readout: 0.08,
            ..Self::standard()
        }
    }

    /// Equal idle time after every gate slot and instantaneous readout and
    /// reset.
    pub fn simplified() -> Self {
        Self::simplified_with(Self::SIMPLIFIED_SLOT)
    }

    pub fn simplified_with(slot: f64) -> Self {
        Schedule {
            kind: ScheduleKind::Simplified,
            entering: slot,
            layers: [slot; 4],
            readout: 0.0,
            vr_idle: slot,
        }
    }

    pub fn from_kind(kind: ScheduleKind) -> Self {
        match kind {
            ScheduleKind::Standard => Self::standard(),
            ScheduleKind::Autonomous => Self::autonomous(),
            ScheduleKind::Simplified => Self::simplified(),
        }
    }

    /// Whether the ancilla is read out.
    pub fn measured(&self) -> bool {
        self.kind != ScheduleKind::Autonomous
    }

    /// Labelled segments in execution order.
    pub fn segments(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("entering", self.entering),
            ("layer1", self.layers[0]),
            ("layer2", self.layers[1]),
            ("layer3", self.layers[2]),
            ("layer4", self.layers[3]),
            (if self.measured() { "measure_reset" } else { "reset" }, self.readout),
            ("vr_idle", self.vr_idle),
        ]
    }

    /// Idle time before the readout.
    pub fn pre_measurement(&self) -> f64 {
        self.entering + self.layers.iter().sum::<f64>()
    }

    pub fn total(&self) -> f64 {
        self.pre_measurement() + self.readout + self.vr_idle
    }

    pub fn validate(&self) -> Result<()> {
        for (label, d) in self.segments() {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::ScheduleMismatch(format!(
                    "segment {label} has invalid duration {d}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for Schedule {
    fn default() -> Self {
        Self::standard()
    }
}
