//! Records files and CSV emitters.
//!
//! A records file holds one run per line as `0`/`1` characters, after the
//! header `#spinwalk-records v1 n=<n> R=<R> tau=<τ>`.

use std::io::{BufRead, Write};

use crate::engine::{Enumeration, StringDistribution};
use crate::error::{Error, Result};
use crate::record::{index_to_string, MeasurementRecord};
use crate::statistics::{HammingProfile, RunLengthProfile, StringHistogram};

pub const RECORDS_MAGIC: &str = "#spinwalk-records";
pub const RECORDS_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq)]
pub struct RecordsHeader {
    pub n: usize,
    pub runs: usize,
    pub tau: f64,
}

impl RecordsHeader {
    pub fn line(&self) -> String {
        format!("{RECORDS_MAGIC} {RECORDS_VERSION} n={} R={} tau={}", self.n, self.runs, self.tau)
    }

    pub fn parse(line: &str) -> Result<Self> {
        let bad = |message: String| Error::Format { line: 1, message };
        let mut parts = line.split_whitespace();
        if parts.next() != Some(RECORDS_MAGIC) {
            return Err(bad(format!("expected header starting with {RECORDS_MAGIC:?}")));
        }
        match parts.next() {
            Some(RECORDS_VERSION) => {}
            other => return Err(bad(format!("unsupported records version {other:?}"))),
        }
        let (mut n, mut runs, mut tau) = (None, None, None);
        for kv in parts {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad(format!("malformed header field {kv:?}")))?;
            match k {
                "n" => n = Some(v.parse().map_err(|_| bad(format!("bad n={v:?}")))?),
                "R" => runs = Some(v.parse().map_err(|_| bad(format!("bad R={v:?}")))?),
                "tau" => tau = Some(v.parse().map_err(|_| bad(format!("bad tau={v:?}")))?),
                _ => return Err(bad(format!("unknown header field {k:?}"))),
            }
        }
        Ok(Self {
            n: n.ok_or_else(|| bad("header lacks n=".into()))?,
            runs: runs.ok_or_else(|| bad("header lacks R=".into()))?,
            tau: tau.ok_or_else(|| bad("header lacks tau=".into()))?,
        })
    }
}

/// Writes records sorted by run index.
pub fn write_records<W: Write>(mut w: W, tau: f64, records: &[MeasurementRecord]) -> Result<()> {
    let n = records.first().map_or(0, MeasurementRecord::len);
    let header = RecordsHeader { n, runs: records.len(), tau };
    writeln!(w, "{}", header.line())?;
    let mut sorted: Vec<&MeasurementRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.run_index);
    for r in sorted {
        if r.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: r.len() });
        }
        writeln!(w, "{r}")?;
    }
    Ok(())
}

/// Reads a records file; every malformed line is reported with its 1-based
/// line number. Blank lines are skipped.
pub fn read_records<R: BufRead>(r: R) -> Result<(RecordsHeader, Vec<MeasurementRecord>)> {
    let mut lines = r.lines();
    let header = match lines.next() {
        Some(l) => RecordsHeader::parse(l?.trim_end())?,
        None => return Err(Error::Format { line: 1, message: "empty records file".into() }),
    };
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        let s = line.trim_end_matches('\r');
        if s.is_empty() {
            continue;
        }
        let rec = MeasurementRecord::parse(records.len(), s)
            .map_err(|e| Error::Format { line: lineno, message: e.to_string() })?;
        if rec.len() != header.n {
            return Err(Error::Format {
                line: lineno,
                message: format!("record has {} results, header says n={}", rec.len(), header.n),
            });
        }
        records.push(rec);
    }
    if records.len() != header.runs {
        return Err(Error::Format {
            line: 1,
            message: format!("header says R={} but the file holds {} records", header.runs, records.len()),
        });
    }
    Ok((header, records))
}

pub fn write_histogram_csv<W: Write>(mut w: W, hist: &StringHistogram) -> Result<()> {
    writeln!(w, "string,count,frequency,stderr")?;
    for (bits, count) in hist.iter() {
        let s: String = bits.iter().map(|&b| if b == 0 { '0' } else { '1' }).collect();
        writeln!(w, "{s},{count},{},{}", hist.frequency(bits), hist.std_error(bits))?;
    }
    Ok(())
}

pub fn write_hamming_csv<W: Write>(mut w: W, profile: &HammingProfile) -> Result<()> {
    writeln!(w, "weight,mass")?;
    for (m, mass) in profile.mass.iter().enumerate() {
        writeln!(w, "{m},{mass}")?;
    }
    Ok(())
}

/// Absent curve entries are written with an empty probability field.
pub fn write_repeat_curve_csv<W: Write>(mut w: W, profile: &RunLengthProfile) -> Result<()> {
    writeln!(w, "n,probability,n_samples")?;
    for (i, (p, s)) in profile.repeat_curve.iter().zip(&profile.samples).enumerate() {
        match p {
            Some(p) => writeln!(w, "{},{p},{s}", i + 1)?,
            None => writeln!(w, "{},,{s}", i + 1)?,
        }
    }
    Ok(())
}

pub fn write_run_length_csv<W: Write>(mut w: W, profile: &RunLengthProfile) -> Result<()> {
    writeln!(w, "length,count")?;
    for (len, count) in &profile.run_length_hist {
        writeln!(w, "{len},{count}")?;
    }
    Ok(())
}

pub fn write_distribution_csv<W: Write>(mut w: W, dist: &StringDistribution) -> Result<()> {
    writeln!(w, "string,probability")?;
    for (i, p) in dist.probabilities().iter().enumerate() {
        writeln!(w, "{},{p}", index_to_string(i, dist.n()))?;
    }
    Ok(())
}

/// Recorded-string probabilities beside the purity of the conditional bath
/// state of the same true string (empty when that string is impossible).
pub fn write_enumeration_csv<W: Write>(mut w: W, e: &Enumeration) -> Result<()> {
    writeln!(w, "string,probability,conditional_purity")?;
    let n = e.distribution.n();
    for (i, (p, q)) in e.distribution.probabilities().iter().zip(&e.conditional_purity).enumerate() {
        match q {
            Some(q) => writeln!(w, "{},{p},{q}", index_to_string(i, n))?,
            None => writeln!(w, "{},{p},", index_to_string(i, n))?,
        }
    }
    Ok(())
}

pub fn write_series_csv<W: Write>(mut w: W, header: (&str, &str), rows: &[(f64, f64)]) -> Result<()> {
    writeln!(w, "{},{}", header.0, header.1)?;
    for (x, y) in rows {
        writeln!(w, "{x},{y}")?;
    }
    Ok(())
}
