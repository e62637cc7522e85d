//! File ingestion: study counts from CSV, risk-of-bias tables from JSON.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{StudyData, StudyRecord};
use crate::quality::{Rating, RoBStudy, RoBTable};

#[derive(Debug, Serialize, Deserialize)]
struct StudyRow {
    study: String,
    n_control: u64,
    r_control: u64,
    n_treatment: u64,
    r_treatment: u64,
}

/// Reads study data from a CSV with header
/// `study,n_control,r_control,n_treatment,r_treatment`.
pub fn ingest_study_data(path: &Path) -> Result<StudyData> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Io(format!("opening {}: {e}", path.display())))?;
    let mut studies = Vec::new();
    for row in reader.deserialize::<StudyRow>() {
        let row = row.map_err(|e| Error::Io(format!("parsing {}: {e}", path.display())))?;
        studies.push(StudyRecord {
            name: row.study,
            n_control: row.n_control,
            r_control: row.r_control,
            n_treatment: row.n_treatment,
            r_treatment: row.r_treatment,
        });
    }
    let data = StudyData { studies };
    data.validate()?;
    Ok(data)
}

/// Renders study data back to the CSV format accepted by
/// [`ingest_study_data`].
pub fn emit_study_data(data: &StudyData) -> String {
    let mut out = String::from("study,n_control,r_control,n_treatment,r_treatment\n");
    for s in &data.studies {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.name, s.n_control, s.r_control, s.n_treatment, s.r_treatment
        ));
    }
    out
}

#[derive(Debug, Deserialize)]
struct RobDocWire {
    studies: Vec<RobStudyWire>,
}

#[derive(Debug, Deserialize)]
struct RobStudyWire {
    study: String,
    ratings: BTreeMap<String, String>,
}

fn parse_rating(token: &str, study: &str) -> Result<Rating> {
    match token {
        "low" => Ok(Rating::Low),
        "unclear" => Ok(Rating::Unclear),
        "high" => Ok(Rating::High),
        other => Err(Error::Io(format!(
            "study {study}: unknown rating \"{other}\" (allowed: low, unclear, high)"
        ))),
    }
}

/// Reads a risk-of-bias table from JSON and aligns it with the study data:
/// every study in the data must appear exactly once, and the result is
/// reordered to data order.
///
/// Expected shape:
/// `{"studies": [{"study": "NAME", "ratings": {"1": "low", ...}}, ...]}`.
pub fn ingest_rob_table(path: &Path, data: &StudyData) -> Result<RoBTable> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("reading {}: {e}", path.display())))?;
    let wire: RobDocWire = serde_json::from_str(&text)
        .map_err(|e| Error::Io(format!("parsing {}: {e}", path.display())))?;

    let mut by_name: BTreeMap<String, RoBStudy> = BTreeMap::new();
    for w in wire.studies {
        let mut ratings = BTreeMap::new();
        for (key, token) in &w.ratings {
            let domain: u8 = key.parse().map_err(|_| {
                Error::Io(format!(
                    "study {}: domain key \"{key}\" is not an integer id",
                    w.study
                ))
            })?;
            ratings.insert(domain, parse_rating(token, &w.study)?);
        }
        let name = w.study.clone();
        if by_name
            .insert(
                name,
                RoBStudy {
                    name: w.study,
                    ratings,
                },
            )
            .is_some()
        {
            return Err(Error::Io(format!(
                "{}: risk-of-bias table lists a study twice",
                path.display()
            )));
        }
    }

    let mut studies = Vec::with_capacity(data.studies.len());
    for s in &data.studies {
        let entry = by_name.remove(&s.name).ok_or_else(|| {
            Error::Io(format!(
                "{}: no risk-of-bias entry for study {}",
                path.display(),
                s.name
            ))
        })?;
        studies.push(entry);
    }
    if let Some((extra, _)) = by_name.into_iter().next() {
        return Err(Error::Io(format!(
            "{}: risk-of-bias entry for {extra} matches no study in the data",
            path.display()
        )));
    }

    let table = RoBTable { studies };
    table.validate()?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str, suffix: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    const DATA_CSV: &str = "study,n_control,r_control,n_treatment,r_treatment\n\
                            REFLEX,201,10,298,80\n\
                            WA16291,40,5,40,17\n";

    #[test]
    fn csv_rows_parse() {
        let f = write_temp(DATA_CSV, ".csv");
        let data = ingest_study_data(f.path()).unwrap();
        assert_eq!(data.n_studies(), 2);
        let r = &data.studies[0];
        assert_eq!(r.name, "REFLEX");
        assert_eq!(
            (r.n_control, r.r_control, r.n_treatment, r.r_treatment),
            (201, 10, 298, 80)
        );
    }

    #[test]
    fn csv_round_trip() {
        let f = write_temp(DATA_CSV, ".csv");
        let data = ingest_study_data(f.path()).unwrap();
        let emitted = emit_study_data(&data);
        let f2 = write_temp(&emitted, ".csv");
        let back = ingest_study_data(f2.path()).unwrap();
        assert_eq!(data, back);
    }

    #[test]
    fn csv_invariants_name_the_study() {
        let f = write_temp(
            "study,n_control,r_control,n_treatment,r_treatment\nBADONE,10,11,10,5\n",
            ".csv",
        );
        let err = ingest_study_data(f.path()).unwrap_err().to_string();
        assert!(err.contains("BADONE"), "error should name the study: {err}");
    }

    #[test]
    fn header_only_csv_is_rejected() {
        let f = write_temp(
            "study,n_control,r_control,n_treatment,r_treatment\n",
            ".csv",
        );
        let err = ingest_study_data(f.path()).unwrap_err().to_string();
        assert!(err.contains("no studies"), "{err}");
    }

    #[test]
    fn malformed_count_reports_location() {
        let f = write_temp(
            "study,n_control,r_control,n_treatment,r_treatment\nREFLEX,201,ten,298,80\n",
            ".csv",
        );
        let err = ingest_study_data(f.path()).unwrap_err().to_string();
        assert!(err.contains("line"), "location expected in: {err}");
    }

    fn data_two() -> StudyData {
        let f = write_temp(DATA_CSV, ".csv");
        ingest_study_data(f.path()).unwrap()
    }

    #[test]
    fn rob_json_parses_and_reorders() {
        let f = write_temp(
            r#"{"studies": [
                {"study": "WA16291", "ratings": {"1": "unclear", "2": "unclear", "3": "low", "4": "low", "5": "low", "6": "low"}},
                {"study": "REFLEX", "ratings": {"1": "unclear", "2": "unclear", "3": "low", "4": "unclear", "5": "low", "6": "low"}}
            ]}"#,
            ".json",
        );
        let table = ingest_rob_table(f.path(), &data_two()).unwrap();
        assert_eq!(table.studies[0].name, "REFLEX", "reordered to data order");
        assert_eq!(table.studies[1].name, "WA16291");
        assert_eq!(table.studies[1].ratings[&3], Rating::Low);
        assert_eq!(table.studies[0].ratings[&4], Rating::Unclear);
    }

    #[test]
    fn unknown_rating_lists_allowed_tokens() {
        let f = write_temp(
            r#"{"studies": [
                {"study": "REFLEX", "ratings": {"1": "moderate"}},
                {"study": "WA16291", "ratings": {"1": "low"}}
            ]}"#,
            ".json",
        );
        let err = ingest_rob_table(f.path(), &data_two())
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("moderate") && err.contains("low, unclear, high"),
            "{err}"
        );
    }

    #[test]
    fn missing_study_is_named() {
        let f = write_temp(
            r#"{"studies": [{"study": "REFLEX", "ratings": {"1": "low"}}]}"#,
            ".json",
        );
        let err = ingest_rob_table(f.path(), &data_two())
            .unwrap_err()
            .to_string();
        assert!(err.contains("WA16291"), "{err}");
    }

    #[test]
    fn extra_study_is_rejected() {
        let f = write_temp(
            r#"{"studies": [
                {"study": "REFLEX", "ratings": {"1": "low"}},
                {"study": "WA16291", "ratings": {"1": "low"}},
                {"study": "GHOST", "ratings": {"1": "low"}}
            ]}"#,
            ".json",
        );
        let err = ingest_rob_table(f.path(), &data_two())
            .unwrap_err()
            .to_string();
        assert!(err.contains("GHOST"), "{err}");
    }

    #[test]
    fn bad_domain_key_is_rejected() {
        let f = write_temp(
            r#"{"studies": [
                {"study": "REFLEX", "ratings": {"one": "low"}},
                {"study": "WA16291", "ratings": {"one": "low"}}
            ]}"#,
            ".json",
        );
        let err = ingest_rob_table(f.path(), &data_two())
            .unwrap_err()
            .to_string();
        assert!(err.contains("one"), "{err}");
    }
}
