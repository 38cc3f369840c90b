//! Scenario files: plain TOML with keys named after the circuit and
//! controller symbols.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::ControllerConfig;
use crate::error::{Result, SimError};
use crate::plant::{validate_events, GridEvent, PlantParams};
use crate::signals::ThreePhase;
use crate::svoc::PowerSetpoints;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    #[default]
    Svoc,
    DvocBaseline,
}

impl ControllerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::Svoc => "svoc",
            ControllerKind::DvocBaseline => "dvoc_baseline",
        }
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svoc" => Ok(ControllerKind::Svoc),
            "dvoc_baseline" => Ok(ControllerKind::DvocBaseline),
            other => Err(SimError::Config(format!("unknown controller {other:?}"))),
        }
    }
}

/// Setpoints either as totals split equally or per phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SetpointSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_total: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_total: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<[f64; 3]>,
}

impl SetpointSpec {
    pub fn totals(p: f64, q: f64) -> Self {
        Self {
            p_total: Some(p),
            q_total: Some(q),
            ..Default::default()
        }
    }

    /// Overlay on `base`: fields left out keep their previous values.
    pub fn apply(&self, base: PowerSetpoints) -> Result<PowerSetpoints> {
        if (self.p_total.is_some() && self.p.is_some())
            || (self.q_total.is_some() && self.q.is_some())
        {
            return Err(SimError::Config(
                "give either a total or per-phase setpoint, not both".into(),
            ));
        }
        let mut sp = base;
        if let Some(p) = self.p_total {
            sp.p_star = ThreePhase::splat(p / 3.0);
        }
        if let Some(q) = self.q_total {
            sp.q_star = ThreePhase::splat(q / 3.0);
        }
        if let Some([a, b, c]) = self.p {
            sp.p_star = ThreePhase::new(a, b, c);
        }
        if let Some([a, b, c]) = self.q {
            sp.q_star = ThreePhase::new(a, b, c);
        }
        if sp
            .p_star
            .iter()
            .chain(sp.q_star.iter())
            .any(|v| !v.is_finite())
        {
            return Err(SimError::Config("non-finite setpoint".into()));
        }
        Ok(sp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetpointStep {
    pub t: f64,
    #[serde(flatten)]
    pub set: SetpointSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Write every n-th controller tick.
    pub decimation: usize,
    /// P/Q low-pass cutoff, Hz.
    pub pq_cutoff: f64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            decimation: 20,
            pq_cutoff: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub duration: f64,
    #[serde(default)]
    pub controller: ControllerKind,
    #[serde(default = "default_dt_plant")]
    pub dt_plant: f64,
    /// Start the plant at rest instead of at the grid's no-load steady state.
    #[serde(default)]
    pub cold_start: bool,
    #[serde(default)]
    pub setpoints: SetpointSpec,
    #[serde(default)]
    pub setpoint_steps: Vec<SetpointStep>,
    #[serde(default)]
    pub grid_events: Vec<GridEvent>,
    #[serde(default)]
    pub control: ControllerConfig,
    #[serde(default)]
    pub plant: PlantParams,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_dt_plant() -> f64 {
    10e-6
}

impl Scenario {
    pub fn new(name: &str, duration: f64) -> Self {
        Self {
            name: name.to_string(),
            duration,
            controller: ControllerKind::Svoc,
            dt_plant: default_dt_plant(),
            cold_start: false,
            setpoints: SetpointSpec::default(),
            setpoint_steps: Vec::new(),
            grid_events: Vec::new(),
            control: ControllerConfig::default(),
            plant: PlantParams::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Controller ticks per run and plant substeps per tick.
    pub fn step_counts(&self) -> Result<(usize, usize)> {
        let ratio = self.control.t_s / self.dt_plant;
        let sub = ratio.round();
        if !(sub >= 1.0 && (ratio - sub).abs() < 1e-9 * ratio) {
            return Err(SimError::Config(format!(
                "dt_plant {} must divide t_s {}",
                self.dt_plant, self.control.t_s
            )));
        }
        Ok((
            (self.duration / self.control.t_s).round() as usize,
            sub as usize,
        ))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(SimError::Config("duration must be positive".into()));
        }
        if !(self.dt_plant.is_finite() && self.dt_plant > 0.0) {
            return Err(SimError::Config("dt_plant must be positive".into()));
        }
        if self.output.decimation < 1 || !(self.output.pq_cutoff > 0.0) {
            return Err(SimError::Config(
                "decimation must be >= 1 and pq_cutoff positive".into(),
            ));
        }
        self.control.validate()?;
        self.plant.validate()?;
        validate_events(&self.grid_events)?;
        let within = |t: f64| t.is_finite() && (0.0..=self.duration).contains(&t);
        if self
            .grid_events
            .iter()
            .any(|e| !within(e.t_start) || !(e.t_end.is_finite() && e.t_end >= e.t_start))
            || self.setpoint_steps.iter().any(|s| !within(s.t))
        {
            return Err(SimError::Config(
                "events must start within [0, duration]".into(),
            ));
        }
        self.setpoints.apply(PowerSetpoints::default())?;
        for st in &self.setpoint_steps {
            st.set.apply(PowerSetpoints::default())?;
        }
        self.step_counts()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "sag"
duration = 2.0

[setpoints]
p_total = 600.0

[[setpoint_steps]]
t = 1.0
p = [250.0, 200.0, 150.0]

[[grid_events]]
t_start = 0.5
t_end = 1.5
a = 0.9
"#;

    #[test]
    fn minimal_file_fills_defaults() {
        let s = Scenario::from_toml(MINIMAL).unwrap();
        assert_eq!(s.controller, ControllerKind::Svoc);
        assert_eq!(s.dt_plant, 10e-6);
        assert!(!s.cold_start);
        assert_eq!(s.control, ControllerConfig::default());
        assert_eq!(s.step_counts().unwrap(), (40_000, 5));
        assert_eq!(s.grid_events[0].a, Some(0.9));
        assert_eq!(s.grid_events[0].b, None);
        let sp = s.setpoints.apply(PowerSetpoints::default()).unwrap();
        assert_eq!(sp.p_star, ThreePhase::splat(200.0));
        let stepped = s.setpoint_steps[0].set.apply(sp).unwrap();
        assert_eq!(stepped.p_star, ThreePhase::new(250.0, 200.0, 150.0));
        assert_eq!(stepped.q_star, ThreePhase::splat(0.0));
    }

    #[test]
    fn toml_round_trip() {
        let mut s = Scenario::from_toml(MINIMAL).unwrap();
        s.controller = ControllerKind::DvocBaseline;
        s.cold_start = true;
        assert_eq!(
            Scenario::from_toml(&s.to_toml()).unwrap().to_toml(),
            s.to_toml()
        );
    }

    #[test]
    fn bad_files_rejected() {
        let bad = [
            MINIMAL.replace("duration = 2.0", "duration = -1.0"),
            MINIMAL.replace("a = 0.9", "a = 0.9\nb = 0.5\nt_bogus = 1"),
            MINIMAL.replace("t = 1.0", "t = 3.0"),
            MINIMAL.replace("p_total = 600.0", "p_total = 600.0\np = [1.0, 2.0, 3.0]"),
            format!("{MINIMAL}\ndt_plant = 3e-5"),
            format!("{MINIMAL}\n[control]\ni_max = 0.0"),
            format!("{MINIMAL}\n[control]\nmystery = 1"),
            format!("{MINIMAL}\n[[grid_events]]\nt_start = 1.0\nt_end = 1.8\na = 0.5"),
            "name = \"x\"".to_string(),
        ];
        for text in &bad {
            assert!(
                matches!(
                    Scenario::from_toml(text),
                    Err(SimError::Config(_) | SimError::OverlappingEvents { .. })
                ),
                "accepted:\n{text}"
            );
        }
    }

    #[test]
    fn controller_names() {
        for k in [ControllerKind::Svoc, ControllerKind::DvocBaseline] {
            assert_eq!(k.as_str().parse::<ControllerKind>().unwrap(), k);
        }
        assert!("droop".parse::<ControllerKind>().is_err());
    }
}
