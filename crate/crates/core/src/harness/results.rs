use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{ExperimentConfig, RunFailure, RunRecord, SetSummary};

const RESULTS_MAGIC: &str = "# ctf-arena results v1";
pub const FORMAT_VERSION: u32 = 1;

/// JSON companion of a results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsDocument {
    pub format_version: u32,
    pub config: ExperimentConfig,
    pub summaries: Vec<SetSummary>,
    #[serde(default)]
    pub failures: Vec<RunFailure>,
}

impl ResultsDocument {
    pub fn new(config: ExperimentConfig, summaries: Vec<SetSummary>, failures: Vec<RunFailure>) -> Self {
        ResultsDocument {
            format_version: FORMAT_VERSION,
            config,
            summaries,
            failures,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ResultsDocument = serde_json::from_str(text)?;
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::Domain(format!(
                "unsupported results format version {}",
                doc.format_version
            )));
        }
        Ok(doc)
    }
}

/// Records as `set,run,winner,turn,seed` under a version comment.
pub fn write_records_csv<W: Write>(records: &[RunRecord], mut w: W) -> Result<()> {
    writeln!(w, "{RESULTS_MAGIC}")?;
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(r: R) -> Result<Vec<RunRecord>> {
    let mut text = String::new();
    let mut r = r;
    r.read_to_string(&mut text)?;
    match text.lines().next() {
        Some(first) if first.trim_end() == RESULTS_MAGIC => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected {RESULTS_MAGIC:?}"),
            })
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers != vec!["set", "run", "winner", "turn", "seed"] {
        return Err(Error::Parse {
            line: 2,
            message: format!("unexpected header {:?}", headers),
        });
    }
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Writes `results.csv` and `summary.json` into `dir`.
pub fn write_results(dir: &Path, records: &[RunRecord], doc: &ResultsDocument) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut csv_bytes = Vec::new();
    write_records_csv(records, &mut csv_bytes)?;
    fs::write(dir.join("results.csv"), csv_bytes)?;
    fs::write(dir.join("summary.json"), doc.to_json()?)?;
    Ok(())
}

pub fn read_results(dir: &Path) -> Result<(Vec<RunRecord>, ResultsDocument)> {
    let records = read_records_csv(fs::File::open(dir.join("results.csv"))?)?;
    let doc = ResultsDocument::from_json(&fs::read_to_string(dir.join("summary.json"))?)?;
    Ok((records, doc))
}
