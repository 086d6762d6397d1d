//! CSV writers for experiment results. Floating-point metrics use ten
//! significant digits in scientific notation; grid values are written in
//! their shortest round-trip form.

use std::io::Write;

use super::experiment::{BenchRow, PowerRow, SerRow};
use crate::Result;

fn sci(v: f64) -> String {
    format!("{v:.9e}")
}

pub fn write_ser_csv<W: Write>(rows: &[SerRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["scheme", "power_dbm", "ser", "trials", "seed"])?;
    for r in rows {
        w.write_record([r.scheme.clone(), r.power_dbm.to_string(), sci(r.ser()), r.trials.to_string(), r.seed.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_power_csv<W: Write>(rows: &[PowerRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["scheme", "target_sinr_db", "avg_power_dbm", "ser", "trials", "seed"])?;
    for r in rows {
        w.write_record([
            r.scheme.clone(),
            r.target_sinr_db.to_string(),
            sci(r.avg_power_dbm()),
            sci(r.ser()),
            r.trials.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Build times vary between runs; every other column is deterministic.
pub fn write_bench_csv<W: Write>(rows: &[BenchRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["scheme", "k", "groups", "precoders", "build_seconds", "threads"])?;
    for r in rows {
        w.write_record([
            r.scheme.clone(),
            r.k.to_string(),
            r.groups.to_string(),
            r.precoders.to_string(),
            sci(r.build_seconds),
            r.threads.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
