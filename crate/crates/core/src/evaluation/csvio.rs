use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EvalError, MosResponse, SusResponse, SUS_ITEMS};

pub const MOS_HEADER: [&str; 5] = ["judge_id", "sample_id", "condition", "measure", "score"];

pub fn sus_header() -> Vec<String> {
    std::iter::once("participant_id".to_string()).chain((1..=SUS_ITEMS).map(|i| format!("q{i}"))).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Rows that parsed and validated, plus one error per rejected row.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested<T> {
    pub rows: Vec<T>,
    pub errors: Vec<RowError>,
}

fn reader<R: Read>(input: R, expected: &[String]) -> Result<csv::Reader<R>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(input);
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if found != expected {
        return Err(EvalError::Header { expected: expected.join(","), found: found.join(",") });
    }
    Ok(rdr)
}

fn ingest<R: Read, T>(
    input: R,
    expected: &[String],
    parse: impl Fn(&csv::StringRecord) -> Result<T, String>,
) -> Result<Ingested<T>, EvalError> {
    let mut rdr = reader(input, expected)?;
    let mut out = Ingested { rows: Vec::new(), errors: Vec::new() };
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != expected.len() {
            out.errors.push(RowError { line, message: format!("{} fields, expected {}", record.len(), expected.len()) });
            continue;
        }
        match parse(&record) {
            Ok(row) => out.rows.push(row),
            Err(message) => out.errors.push(RowError { line, message }),
        }
    }
    Ok(out)
}

fn score(field: &str, name: &str) -> Result<u8, String> {
    let v: u8 = field.parse().map_err(|_| format!("{name}: {field:?} is not an integer"))?;
    if !(1..=5).contains(&v) {
        return Err(format!("{name}: {v} outside 1-5"));
    }
    Ok(v)
}

fn non_empty<'a>(field: &'a str, name: &str) -> Result<&'a str, String> {
    if field.is_empty() {
        Err(format!("{name} is empty"))
    } else {
        Ok(field)
    }
}

pub fn read_mos_csv<R: Read>(input: R) -> Result<Ingested<MosResponse>, EvalError> {
    let header: Vec<String> = MOS_HEADER.iter().map(|s| s.to_string()).collect();
    ingest(input, &header, |r| {
        Ok(MosResponse {
            judge_id: non_empty(&r[0], "judge_id")?.to_string(),
            sample_id: non_empty(&r[1], "sample_id")?.to_string(),
            condition: r[2].parse()?,
            measure: r[3].parse()?,
            score: score(&r[4], "score")?,
        })
    })
}

pub fn read_sus_csv<R: Read>(input: R) -> Result<Ingested<SusResponse>, EvalError> {
    ingest(input, &sus_header(), |r| {
        let participant_id = non_empty(&r[0], "participant_id")?.to_string();
        let items = (1..=SUS_ITEMS).map(|i| score(&r[i], &format!("q{i}"))).collect::<Result<_, _>>()?;
        Ok(SusResponse { participant_id, items })
    })
}

pub fn write_mos_csv<W: Write>(out: W, rows: &[MosResponse]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MOS_HEADER)?;
    for r in rows {
        w.write_record([&r.judge_id, &r.sample_id, r.condition.name(), r.measure.name(), &r.score.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sus_csv<W: Write>(out: W, rows: &[SusResponse]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(sus_header())?;
    for r in rows {
        r.validate()?;
        let record: Vec<String> = std::iter::once(r.participant_id.clone()).chain(r.items.iter().map(u8::to_string)).collect();
        w.write_record(record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_mos_csv(path: &Path) -> Result<Ingested<MosResponse>, EvalError> {
    read_mos_csv(std::fs::File::open(path)?)
}

pub fn load_sus_csv(path: &Path) -> Result<Ingested<SusResponse>, EvalError> {
    read_sus_csv(std::fs::File::open(path)?)
}
