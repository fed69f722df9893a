//! Long-format CSV rows.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

pub const HEADER: [&str; 12] = [
    "command", "algo", "estimator", "L", "N", "d", "c", "lr", "seed", "round", "metric", "value",
];

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct Row {
    pub command: String,
    pub algo: String,
    pub estimator: String,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub d: usize,
    pub c: f64,
    pub lr: f64,
    pub seed: u64,
    pub round: usize,
    pub metric: String,
    pub value: f64,
}

/// Writes the header and rows. Floats use the shortest representation that
/// parses back to the same value.
pub fn write_rows<W: Write>(out: W, rows: &[Row]) -> anyhow::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([
            r.command.clone(),
            r.algo.clone(),
            r.estimator.clone(),
            r.l.to_string(),
            r.n.to_string(),
            r.d.to_string(),
            r.c.to_string(),
            r.lr.to_string(),
            r.seed.to_string(),
            r.round.to_string(),
            r.metric.clone(),
            r.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(rows: &[Row]) -> anyhow::Result<String> {
    let mut buf = Vec::new();
    write_rows(&mut buf, rows)?;
    Ok(String::from_utf8(buf)?)
}

/// Parses CSV written by [`write_rows`], checking the header.
pub fn read_rows<R: Read>(input: R) -> anyhow::Result<Vec<Row>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    anyhow::ensure!(header == HEADER, "unexpected CSV header {header:?}");
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}
