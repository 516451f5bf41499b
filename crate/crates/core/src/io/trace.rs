use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::diagnostics::TraceRecord;

/// Frozen column order of the trace file.
pub const TRACE_COLUMNS: [&str; 13] = [
    "t",
    "mass_phi",
    "mass_rho",
    "E_total",
    "E_kin",
    "E_coupling",
    "dissipation",
    "energy_residual",
    "rho_min",
    "rho_max",
    "eta",
    "clamp_events",
    "max_u",
];

pub fn record_fields(r: &TraceRecord) -> [String; 13] {
    [
        r.t.to_string(),
        r.mass_phi.to_string(),
        r.mass_rho.to_string(),
        r.energy.total.to_string(),
        r.energy.kinetic.to_string(),
        r.energy.coupling.to_string(),
        r.dissipation.to_string(),
        r.energy_residual.to_string(),
        r.rho_min.to_string(),
        r.rho_max.to_string(),
        r.separation_eta.to_string(),
        r.clamp_events.to_string(),
        r.max_velocity.to_string(),
    ]
}

pub struct TraceWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl TraceWriter<File> {
    pub fn create(path: &Path) -> csv::Result<Self> {
        Self::new(File::create(path)?)
    }
}

impl<W: Write> TraceWriter<W> {
    pub fn new(w: W) -> csv::Result<Self> {
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(TRACE_COLUMNS)?;
        Ok(Self { inner })
    }

    pub fn push(&mut self, r: &TraceRecord) -> csv::Result<()> {
        self.inner.write_record(record_fields(r))
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }

    pub fn into_inner(self) -> std::io::Result<W> {
        self.inner.into_inner().map_err(|e| e.into_error())
    }
}
