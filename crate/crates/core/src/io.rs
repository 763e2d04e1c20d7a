//! CSV and JSON export of distributions, samples, scheme states and tables.
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! reproduces every finite `f64` bit for bit.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dist::Pmf;
use crate::entropy::BatteryEntry;
use crate::explore::ConjectureReport;
use crate::rde::{CombinationRule, InputLaw, SampleSet, SamplingMethod};
use crate::scheme::SchemeState;
use crate::{Error, Result};

/// Writes `rows` as CSV with a header taken from the field names.
pub fn write_csv<W, S, I>(w: W, rows: I) -> Result<()>
where
    W: Write,
    S: Serialize,
    I: IntoIterator<Item = S>,
{
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R, S>(r: R) -> Result<Vec<S>>
where
    R: Read,
    S: for<'de> Deserialize<'de>,
{
    let mut input = csv::Reader::from_reader(r);
    let rows = input.deserialize().collect::<std::result::Result<Vec<S>, _>>()?;
    Ok(rows)
}

pub fn write_json<W: Write, S: Serialize + ?Sized>(mut w: W, value: &S) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

pub fn read_json<R: Read, S: for<'de> Deserialize<'de>>(r: R) -> Result<S> {
    Ok(serde_json::from_reader(r)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmfRow {
    pub j: i64,
    pub weight: f64,
}

pub fn write_pmf_csv<W: Write>(w: W, pmf: &Pmf) -> Result<()> {
    write_csv(w, pmf.iter().map(|(j, weight)| PmfRow { j, weight }))
}

/// Reads a `j,weight` table. Rows must list consecutive integers in increasing
/// order; truncated mass is not part of the CSV form and reads back as zero.
pub fn read_pmf_csv<R: Read>(r: R) -> Result<Pmf> {
    let rows: Vec<PmfRow> = read_csv(r)?;
    let first = rows
        .first()
        .ok_or_else(|| Error::InvalidPmf("empty table".into()))?
        .j;
    if let Some(bad) = rows.iter().enumerate().find(|(i, row)| row.j != first + *i as i64) {
        return Err(Error::InvalidPmf(format!(
            "atoms must be consecutive, row {} has j={}",
            bad.0, bad.1.j
        )));
    }
    Pmf::new(first, rows.into_iter().map(|r| r.weight).collect())
}

pub fn write_pmf_json<W: Write>(w: W, pmf: &Pmf) -> Result<()> {
    write_json(w, pmf)
}

pub fn read_pmf_json<R: Read>(r: R) -> Result<Pmf> {
    read_json(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub value: f64,
}

/// Metadata stored next to a sample CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub rule: CombinationRule,
    pub input: InputLaw,
    pub n: u32,
    pub seed: u64,
    #[serde(rename = "N")]
    pub count: usize,
    pub method: SamplingMethod,
    /// `log2` when the values are base-2 logarithms of the root values.
    pub scale: String,
}

impl SampleMeta {
    pub fn of(set: &SampleSet) -> Self {
        let scale = match set.values {
            crate::rde::Samples::Int(_) => "integer",
            crate::rde::Samples::Log2(_) => "log2",
        };
        Self {
            rule: set.rule.clone(),
            input: set.input.clone(),
            n: set.depth,
            seed: set.seed,
            count: set.values.len(),
            method: set.method,
            scale: scale.into(),
        }
    }
}

/// Writes the `value` column to `csv_out` and the metadata to `json_out`.
pub fn write_samples<W: Write, J: Write>(csv_out: W, json_out: J, set: &SampleSet) -> Result<()> {
    write_csv(csv_out, set.values.as_f64().into_iter().map(|value| SampleRow { value }))?;
    write_json(json_out, &SampleMeta::of(set))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRow {
    pub j: i64,
    pub u: f64,
}

pub fn write_snapshot_csv<W: Write>(w: W, state: &SchemeState) -> Result<()> {
    write_csv(w, state.iter().map(|(j, u)| SnapshotRow { j, u }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub family: String,
    pub c: f64,
    pub x0: f64,
    pub t0: f64,
    pub residual: f64,
}

impl From<&BatteryEntry> for ResidualRow {
    fn from(e: &BatteryEntry) -> Self {
        Self {
            family: e.family.into(),
            c: e.c,
            x0: e.phi.x0,
            t0: e.phi.t0,
            residual: e.residual,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L1Row {
    #[serde(rename = "M")]
    pub m: u32,
    pub l1_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingRow {
    pub trial: usize,
    pub alpha: f64,
    pub p_exceed: f64,
    pub mode: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConjectureRow {
    pub n: u32,
    pub ks: f64,
    pub p_below: f64,
    pub fit_c: f64,
}

pub fn conjecture_rows(report: &ConjectureReport) -> Vec<ConjectureRow> {
    report
        .rows
        .iter()
        .map(|r| ConjectureRow {
            n: r.n,
            ks: r.ks,
            p_below: r.p_below,
            fit_c: r.fit_c,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{evolve, Flavor};

    #[test]
    fn pmf_csv_round_trip_is_exact() {
        let p = evolve(&Pmf::delta(0), &Flavor::Symmetric, 200).unwrap();
        let mut buf = Vec::new();
        write_pmf_csv(&mut buf, &p).unwrap();
        assert!(buf.starts_with(b"j,weight\n"));
        let back = read_pmf_csv(buf.as_slice()).unwrap();
        assert_eq!(back.offset(), p.offset());
        for (a, b) in back.weights().iter().zip(p.weights()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn pmf_json_round_trip_is_exact() {
        let p = Pmf::with_truncated(-3, vec![0.1, 0.2, 0.7 - 1e-12], 1e-12).unwrap();
        let mut buf = Vec::new();
        write_pmf_json(&mut buf, &p).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"offset\"") && text.contains("\"truncated_mass\""));
        assert_eq!(read_pmf_json(buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn pmf_csv_rejects_gaps() {
        let text = "j,weight\n0,0.5\n2,0.5\n";
        assert!(read_pmf_csv(text.as_bytes()).is_err());
        assert!(read_pmf_csv("j,weight\n".as_bytes()).is_err());
    }

    #[test]
    fn sample_export() {
        let rule = CombinationRule::symmetric();
        let input = InputLaw::Lattice { pmf: Pmf::delta(0) };
        let set = crate::rde::sample_exact_tree(&rule, &input, 3, 5, 9).unwrap();
        let (mut c, mut j) = (Vec::new(), Vec::new());
        write_samples(&mut c, &mut j, &set).unwrap();
        let rows: Vec<SampleRow> = read_csv(c.as_slice()).unwrap();
        assert_eq!(rows.len(), 5);
        let meta: SampleMeta = read_json(j.as_slice()).unwrap();
        assert_eq!((meta.n, meta.seed, meta.count), (3, 9, 5));
        assert!(String::from_utf8(j).unwrap().contains("\"N\": 5"));
    }

    #[test]
    fn table_headers() {
        let mut buf = Vec::new();
        write_csv(&mut buf, [L1Row { m: 16, l1_error: 0.5 }]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "M,l1_error\n16,0.5\n");
        let mut buf = Vec::new();
        let row = CouplingRow {
            trial: 0,
            alpha: 0.25,
            p_exceed: 0.25,
            mode: "exact".into(),
        };
        write_csv(&mut buf, [row]).unwrap();
        assert!(buf.starts_with(b"trial,alpha,p_exceed,mode\n"));
    }
}
