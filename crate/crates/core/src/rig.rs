//! Closed-loop rig: one simulated surface, one tactile pad and one
//! controller, advanced in lockstep.

use crate::controller::{ComplianceController, ControllerLog};
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::sim::{contact_force, step, ContactCommand, MaterialParams, SurfaceState};
use crate::tactile::{ForceField, TactileSensor};

#[derive(Debug, Clone, PartialEq)]
pub struct RigSample {
    pub log: ControllerLog,
    /// Contact force at the end of the cycle, N.
    pub force: f64,
    /// Max-norm reference error over the contact mask at the end of the cycle, m.
    pub tracking_error: f64,
}

#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub truth: MaterialParams,
    pub state: SurfaceState,
    pub sensor: TactileSensor,
    pub controller: ComplianceController,
    /// Sim steps per control period.
    pub substeps: usize,
    /// Surface height disturbance added to every commanded depth, m.
    pub surface_offset: f64,
    applied: ContactCommand,
    last_force_field: ForceField,
    t: f64,
}

impl ClosedLoop {
    pub fn new(
        truth: MaterialParams,
        state: SurfaceState,
        sensor: TactileSensor,
        controller: ComplianceController,
        substeps: usize,
    ) -> Result<Self> {
        truth.validate()?;
        state.validate()?;
        state.shape().ensure_same(&controller.shape(), "controller vs surface")?;
        state.shape().ensure_same(&sensor.shape(), "sensor vs surface")?;
        if substeps == 0 {
            return Err(Error::config("substeps must be >= 1"));
        }
        let shape = state.shape();
        Ok(ClosedLoop {
            applied: ContactCommand::uniform(controller.mask().clone(), 0.0),
            last_force_field: ForceField::zeros(shape, 0.0),
            truth,
            state,
            sensor,
            controller,
            substeps,
            surface_offset: 0.0,
            t: 0.0,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn force(&self) -> f64 {
        contact_force(&self.state, &self.truth)
    }

    pub fn last_force_field(&self) -> &ForceField {
        &self.last_force_field
    }

    /// Command as it reaches the surface, offset included.
    pub fn applied(&self) -> &ContactCommand {
        &self.applied
    }

    fn target_command(&self) -> ContactCommand {
        let mut c = self.controller.command().clone();
        for (d, &m) in c.indentation.data.iter_mut().zip(&c.mask.data) {
            if m {
                *d = (*d + self.surface_offset).max(0.0);
            }
        }
        c
    }

    fn tracking_error(&self) -> f64 {
        let r = self.controller.reference();
        let mut e: f64 = 0.0;
        for idx in 0..r.data.len() {
            if self.controller.mask().data[idx] {
                e = e.max((r.data[idx] - self.state.phi.data[idx]).abs());
            }
        }
        e
    }

    /// One control period: controller cycle on the current measurements,
    /// then `substeps` sim steps with the command ramped linearly.
    pub fn run_cycle(&mut self) -> Result<RigSample> {
        let f_meas = self.force();
        let log = self.controller.cycle(f_meas, &self.state.phi)?;
        let from = self.applied.clone();
        let to = self.target_command();
        let dt = self.controller.config().dt / self.substeps as f64;
        for k in 1..=self.substeps {
            let a = k as f64 / self.substeps as f64;
            let mut cmd = to.clone();
            for (idx, d) in cmd.indentation.data.iter_mut().enumerate() {
                if cmd.mask.data[idx] {
                    *d = from.indentation.data[idx] + a * (to.indentation.data[idx] - from.indentation.data[idx]);
                }
            }
            self.state = step(&self.state, &cmd, &self.truth, dt)?;
            self.t += dt;
            let ff = self.sensor.sample_force(&self.state, &self.truth, self.t)?;
            let pa = Field { shape: ff.pressures.shape, data: ff.pressures.data.iter().map(|v| v * 1e3).collect() };
            self.controller.observe(&self.state, &pa, self.t)?;
            self.last_force_field = ff;
        }
        self.applied = to;
        Ok(RigSample { log, force: self.force(), tracking_error: self.tracking_error() })
    }
}
