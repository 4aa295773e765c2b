use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One checkpoint. `step` counts completed generator updates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRow {
    pub step: usize,
    /// Critic contrast on the last training batch before the generator
    /// update.
    pub ipm_train: f64,
    pub ipm_eval: Option<f64>,
    pub kl: Option<f64>,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    pub rows: Vec<TrainRow>,
}

pub const TRACE_HEADER: &str = "step,ipm_train,ipm_eval,kl,wall_ms";

impl TrainTrace {
    /// Appends `row`, rejecting non-finite metrics and out-of-order steps.
    pub fn push(&mut self, row: TrainRow) -> Result<()> {
        let finite = row.ipm_train.is_finite()
            && row.ipm_eval.is_none_or(f64::is_finite)
            && row.kl.is_none_or(f64::is_finite);
        if !finite {
            return Err(Error::NonFinite(format!("trace row {row:?}")));
        }
        if let Some(last) = self.rows.last() {
            if row.step <= last.step {
                return Err(Error::InvalidSpec(format!(
                    "trace step {} after {}",
                    row.step, last.step
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    /// Rows that carry an evaluation IPM.
    pub fn checkpoints(&self) -> impl Iterator<Item = &TrainRow> {
        self.rows.iter().filter(|r| r.ipm_eval.is_some())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        if self.rows.is_empty() {
            w.write_record(TRACE_HEADER.split(','))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
        if header.join(",") != TRACE_HEADER {
            return Err(Error::InvalidSpec(format!("trace header {header:?}")));
        }
        let mut trace = Self::default();
        for row in r.deserialize() {
            trace.push(row?)?;
        }
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: usize, eval: Option<f64>) -> TrainRow {
        TrainRow {
            step,
            ipm_train: 0.1 + step as f64 / 3.0,
            ipm_eval: eval,
            kl: None,
            wall_ms: 5,
        }
    }

    #[test]
    fn csv_round_trip_with_missing_fields() {
        let mut t = TrainTrace::default();
        t.push(row(0, Some(1.0 / 7.0))).unwrap();
        t.push(row(1, None)).unwrap();
        let s = t.to_csv_string().unwrap();
        assert!(s.starts_with(TRACE_HEADER));
        assert!(s.lines().nth(2).unwrap().contains(",,"));
        assert_eq!(TrainTrace::read_csv(s.as_bytes()).unwrap(), t);
    }

    #[test]
    fn rejects_nan_and_repeated_steps() {
        let mut t = TrainTrace::default();
        t.push(row(3, None)).unwrap();
        assert!(t.push(row(3, None)).is_err());
        assert!(t.push(row(4, Some(f64::NAN))).is_err());
    }

    #[test]
    fn empty_trace_still_has_header() {
        let s = TrainTrace::default().to_csv_string().unwrap();
        assert_eq!(s.trim(), TRACE_HEADER);
    }
}
