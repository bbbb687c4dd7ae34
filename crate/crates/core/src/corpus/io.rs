use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, Modality, SignalRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Format::Csv),
            "jsonl" | "ndjson" => Some(Format::Jsonl),
            _ => None,
        }
    }
}

const CSV_COLUMNS: [&str; 9] = [
    "dataset_id",
    "subject_id",
    "trial_id",
    "modality",
    "sampling_rate",
    "scale_min",
    "scale_max",
    "arousal_raw",
    "samples",
];

/// Reads recordings from a CSV or JSONL file. Row numbers in errors are
/// 1-based data rows (the CSV header is not counted).
pub fn ingest(path: &Path, format: Format) -> Result<Corpus, CorpusError> {
    let records = match format {
        Format::Csv => read_csv(path)?,
        Format::Jsonl => read_jsonl(path)?,
    };
    Corpus::new(records)
}

fn read_jsonl(path: &Path) -> Result<Vec<SignalRecord>, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    let mut row = 0;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        row += 1;
        let rec: SignalRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Row { row, message: e.to_string() })?;
        rec.validate().map_err(|message| CorpusError::Row { row, message })?;
        records.push(rec);
    }
    Ok(records)
}

fn read_csv(path: &Path) -> Result<Vec<SignalRecord>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; 9];
    for (slot, name) in idx.iter_mut().zip(CSV_COLUMNS) {
        *slot = headers.iter().position(|h| h == name).ok_or_else(|| CorpusError::Row {
            row: 0,
            message: format!("missing field '{name}' in header"),
        })?;
    }
    let mut records = Vec::new();
    for (i, result) in rdr.records().enumerate() {
        let row = i + 1;
        let err = |message: String| CorpusError::Row { row, message };
        let rec = result?;
        let field = |j: usize| -> Result<&str, CorpusError> {
            rec.get(idx[j])
                .ok_or_else(|| err(format!("missing field '{}'", CSV_COLUMNS[j])))
        };
        let num = |j: usize| -> Result<f64, CorpusError> {
            let s = field(j)?;
            s.parse::<f64>()
                .map_err(|_| err(format!("non-numeric {} '{s}'", CSV_COLUMNS[j])))
        };
        let samples = field(8)?
            .split(';')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| err(format!("non-numeric sample '{s}'")))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let record = SignalRecord {
            dataset_id: field(0)?.to_string(),
            subject_id: field(1)?.to_string(),
            trial_id: field(2)?.to_string(),
            modality: field(3)?.parse::<Modality>().map_err(err)?,
            sampling_rate: num(4)?,
            scale_min: num(5)?,
            scale_max: num(6)?,
            arousal_raw: num(7)?,
            samples,
        };
        record.validate().map_err(|m| err(m))?;
        records.push(record);
    }
    Ok(records)
}

/// Writes a corpus in the given interchange format.
pub fn write_corpus(corpus: &Corpus, path: &Path, format: Format) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        Format::Jsonl => {
            for r in corpus.records() {
                serde_json::to_writer(&mut w, r).map_err(|e| CorpusError::Invalid(e.to_string()))?;
                w.write_all(b"\n")?;
            }
        }
        Format::Csv => {
            let mut wtr = csv::Writer::from_writer(&mut w);
            wtr.write_record(CSV_COLUMNS)?;
            for r in corpus.records() {
                let samples: Vec<String> = r.samples.iter().map(|v| v.to_string()).collect();
                wtr.write_record([
                    r.dataset_id.clone(),
                    r.subject_id.clone(),
                    r.trial_id.clone(),
                    r.modality.to_string(),
                    r.sampling_rate.to_string(),
                    r.scale_min.to_string(),
                    r.scale_max.to_string(),
                    r.arousal_raw.to_string(),
                    samples.join(";"),
                ])?;
            }
            wtr.flush()?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    const HEADER: &str = "dataset_id,subject_id,trial_id,modality,sampling_rate,scale_min,scale_max,arousal_raw,samples\n";

    fn tmp(contents: &str, ext: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_single_row() {
        let f = tmp(&format!("{HEADER}AMI,s1,t1,ECG,256,1,9,7,0.1;0.2;0.3\n"), ".csv");
        let c = ingest(f.path(), Format::Csv).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.records()[0].samples, vec![0.1, 0.2, 0.3]);
        assert_eq!(c.records()[0].modality, Modality::Ecg);
    }

    #[test]
    fn csv_out_of_scale() {
        let f = tmp(
            &format!("{HEADER}AMI,s1,t1,ECG,256,1,9,7,0.1\nAMI,s1,t1,EDA,128,1,9,10,0.1\n"),
            ".csv",
        );
        let err = ingest(f.path(), Format::Csv).unwrap_err().to_string();
        assert!(err.contains("arousal out of scale bounds") && err.contains("row 2"), "{err}");
    }

    #[test]
    fn csv_errors_carry_row_numbers() {
        let f = tmp(&format!("{HEADER}AMI,s1,t1,ECG,256,1,9,7,0.1;x\n"), ".csv");
        let err = ingest(f.path(), Format::Csv).unwrap_err().to_string();
        assert!(err.contains("row 1") && err.contains("non-numeric"), "{err}");

        let f = tmp(&format!("{HEADER}AMI,s1,t1,ECG,0,1,9,7,0.1\n"), ".csv");
        assert!(ingest(f.path(), Format::Csv).unwrap_err().to_string().contains("sampling_rate"));

        let f = tmp("dataset_id,subject_id\nA,s\n", ".csv");
        assert!(ingest(f.path(), Format::Csv).unwrap_err().to_string().contains("missing field"));
    }

    #[test]
    fn provenance_counts_datasets() {
        // 6 rows, datasets A, B, C -> 3 provenance entries
        let mut body = String::from(HEADER);
        for (ds, subj) in [("A", "1"), ("A", "2"), ("B", "1"), ("C", "1"), ("C", "2"), ("C", "3")] {
            body.push_str(&format!("{ds},{subj},t,EDA,128,1,9,3,0.5;0.6\n"));
        }
        let f = tmp(&body, ".csv");
        let c = ingest(f.path(), Format::Csv).unwrap();
        assert_eq!(c.provenance().len(), 3);
        assert_eq!(c.records()[3].dataset_id, "C");
    }

    #[test]
    fn jsonl_roundtrip_and_errors() {
        let line = r#"{"dataset_id":"A","subject_id":"s","trial_id":"t","modality":"EDA","sampling_rate":128.0,"scale_min":1,"scale_max":4,"arousal_raw":2,"samples":[1.0,2.0]}"#;
        let f = tmp(&format!("{line}\n"), ".jsonl");
        let c = ingest(f.path(), Format::Jsonl).unwrap();
        assert_eq!(c.len(), 1);

        let out = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        write_corpus(&c, out.path(), Format::Csv).unwrap();
        assert_eq!(ingest(out.path(), Format::Csv).unwrap(), c);

        let missing = r#"{"dataset_id":"A","subject_id":"s","trial_id":"t","modality":"EDA","sampling_rate":128.0,"scale_min":1,"scale_max":4,"samples":[1.0]}"#;
        let f = tmp(&format!("{line}\n{missing}\n"), ".jsonl");
        let err = ingest(f.path(), Format::Jsonl).unwrap_err().to_string();
        assert!(err.contains("row 2") && err.contains("arousal_raw"), "{err}");
    }
}
