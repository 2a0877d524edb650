//! Cohort manifests: `sample_id,bag_path,t_months,event,genomic_path`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 5] = ["sample_id", "bag_path", "t_months", "event", "genomic_path"];

/// One manifest row. Bag and genomic files are read on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDescriptor {
    pub sample_id: String,
    /// As written in the manifest; relative paths resolve against the
    /// manifest's directory.
    pub bag_path: PathBuf,
    /// Survival or censoring time in months.
    pub t_months: f64,
    /// `true` when death was observed.
    pub event: bool,
    pub genomic_path: PathBuf,
}

impl SampleDescriptor {
    pub fn resolved_bag(&self, base: &Path) -> PathBuf {
        base.join(&self.bag_path)
    }

    pub fn resolved_genomic(&self, base: &Path) -> PathBuf {
        base.join(&self.genomic_path)
    }
}

/// Directory that relative manifest paths are resolved against.
pub fn manifest_base(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<SampleDescriptor>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(Error::ingest(
            path,
            Some(1),
            format!("header must be `{}`, found `{}`", MANIFEST_HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
        ));
    }

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = record.position().map(|p| p.line() as usize);
        let bad = |msg: String| Error::ingest(path, row, msg);
        if record.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", record.len())));
        }
        let sample_id = record[0].to_string();
        if sample_id.is_empty() {
            return Err(bad("empty sample_id".into()));
        }
        if !seen.insert(sample_id.clone()) {
            return Err(bad(format!("duplicate sample_id `{sample_id}`")));
        }
        let t_months: f64 = record[2]
            .parse()
            .map_err(|_| bad(format!("t_months `{}` is not a number", &record[2])))?;
        if !(t_months.is_finite() && t_months > 0.0) {
            return Err(bad(format!("t_months must be positive, got {t_months}")));
        }
        let event = match &record[3] {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("event must be 0 or 1, got `{other}`"))),
        };
        if record[1].is_empty() || record[4].is_empty() {
            return Err(bad("empty file path".into()));
        }
        out.push(SampleDescriptor {
            sample_id,
            bag_path: PathBuf::from(&record[1]),
            t_months,
            event,
            genomic_path: PathBuf::from(&record[4]),
        });
    }
    Ok(out)
}

pub fn write_manifest(path: impl AsRef<Path>, rows: &[SampleDescriptor]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(MANIFEST_HEADER).map_err(|e| csv_error(path, e))?;
    for d in rows {
        w.write_record([
            d.sample_id.as_str(),
            &d.bag_path.to_string_lossy(),
            &d.t_months.to_string(),
            if d.event { "1" } else { "0" },
            &d.genomic_path.to_string_lossy(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    let row = e.position().map(|p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::ingest(path, row, format!("{kind:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("manifest.csv");
        fs::write(&p, body).unwrap();
        p
    }

    const HEADER: &str = "sample_id,bag_path,t_months,event,genomic_path\n";

    #[test]
    fn three_valid_rows() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{HEADER}a,bags/a.mgcb,12.5,1,gen/a.csv\nb,bags/b.mgcb,3,0,gen/b.csv\nc,/abs/c.mgcb,40.25,1,gen/c.csv\n");
        let rows = read_manifest(write(dir.path(), &body)).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(!rows[1].event);
        assert_eq!(rows[2].resolved_bag(Path::new("/x")), PathBuf::from("/abs/c.mgcb"));
    }

    #[test]
    fn bad_event_names_its_row() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{HEADER}a,a.mgcb,1,1,a.csv\nb,b.mgcb,2,2,b.csv\n");
        let err = read_manifest(write(dir.path(), &body)).unwrap_err();
        match err {
            Error::Ingest { row, msg, .. } => {
                assert_eq!(row, Some(3));
                assert!(msg.contains("event"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rejects_nonpositive_time_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{HEADER}a,a.mgcb,0,1,a.csv\n");
        assert!(read_manifest(write(dir.path(), &body)).is_err());
        let body = format!("{HEADER}a,a.mgcb,1,1,a.csv\na,b.mgcb,2,0,b.csv\n");
        let err = read_manifest(write(dir.path(), &body)).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(read_manifest("/definitely/not/here.csv"), Err(Error::Io { .. })));
    }

    #[test]
    fn write_then_read_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            SampleDescriptor {
                sample_id: "p1".into(),
                bag_path: "bags/p1.mgcb".into(),
                t_months: 0.1 + 0.2,
                event: true,
                genomic_path: "g/p1.csv".into(),
            },
            SampleDescriptor {
                sample_id: "p2".into(),
                bag_path: "bags/p2.mgcb".into(),
                t_months: 123.456789012345,
                event: false,
                genomic_path: "g/p2.csv".into(),
            },
        ];
        let p = dir.path().join("m.csv");
        write_manifest(&p, &rows).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), rows);
    }
}
