use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{ActivityType, AgentId, Inference, LatLon, Staypoint};

pub const STAYPOINT_HEADER: [&str; 6] = ["agent_id", "lat", "lon", "t_start", "t_end", "duration_s"];
pub const LABELED_HEADER: [&str; 8] = [
    "agent_id",
    "lat",
    "lon",
    "t_start",
    "t_end",
    "duration_s",
    "activity_code",
    "confidence",
];

/// Streaming staypoint CSV writer, with or without label columns.
pub struct StaypointWriter {
    path: PathBuf,
    labeled: bool,
    w: csv::Writer<BufWriter<File>>,
    rows: usize,
}

impl StaypointWriter {
    pub fn create(path: impl AsRef<Path>, labeled: bool, provenance: Option<&str>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        if let Some(p) = provenance {
            writeln!(out, "# {p}").map_err(|e| Error::io(&path, e))?;
        }
        let mut w = csv::Writer::from_writer(out);
        if labeled {
            w.write_record(LABELED_HEADER)?;
        } else {
            w.write_record(STAYPOINT_HEADER)?;
        }
        Ok(StaypointWriter {
            path,
            labeled,
            w,
            rows: 0,
        })
    }

    pub fn write(&mut self, s: &Staypoint) -> Result<()> {
        let mut row = vec![
            s.agent.as_str().to_string(),
            s.location.lat.to_string(),
            s.location.lon.to_string(),
            s.t_start.to_string(),
            s.t_end.to_string(),
            s.duration().to_string(),
        ];
        if self.labeled {
            let inf = s.inference.ok_or(Error::IncompleteInference(self.rows))?;
            row.push(inf.activity.code().to_string());
            row.push(inf.confidence.to_string());
        }
        self.w.write_record(&row)?;
        self.rows += 1;
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn finish(mut self) -> Result<usize> {
        self.w.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(self.rows)
    }
}

struct Columns {
    agent: usize,
    lat: usize,
    lon: usize,
    t_start: usize,
    t_end: usize,
    label: Option<(usize, usize)>,
}

/// Streaming reader for files written by [`StaypointWriter`]. Label columns are optional;
/// when present every row must carry a valid label.
pub struct StaypointReader {
    path: PathBuf,
    records: csv::StringRecordsIntoIter<BufReader<File>>,
    cols: Columns,
    line: usize,
}

impl StaypointReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(BufReader::new(file));
        let headers = reader.headers()?.clone();
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let need = |name: &str| {
            find(name).ok_or_else(|| Error::Schema(format!("{}: missing column `{name}`", path.display())))
        };
        let cols = Columns {
            agent: need("agent_id")?,
            lat: need("lat")?,
            lon: need("lon")?,
            t_start: need("t_start")?,
            t_end: need("t_end")?,
            label: match (find("activity_code"), find("confidence")) {
                (Some(a), Some(c)) => Some((a, c)),
                (None, None) => None,
                _ => {
                    return Err(Error::Schema(format!(
                        "{}: activity_code and confidence must appear together",
                        path.display()
                    )))
                }
            },
        };
        Ok(StaypointReader {
            path,
            records: reader.into_records(),
            cols,
            line: 1,
        })
    }

    pub fn is_labeled(&self) -> bool {
        self.cols.label.is_some()
    }

    fn parse(&self, rec: &csv::StringRecord) -> Result<Staypoint> {
        let bad = |what: &str| Error::Schema(format!("{}: row {}: bad {what}", self.path.display(), self.line));
        let field = |i: usize, what: &str| rec.get(i).map(str::trim).ok_or_else(|| bad(what));
        let num = |i: usize, what: &str| -> Result<f64> { field(i, what)?.parse().map_err(|_| bad(what)) };
        let int = |i: usize, what: &str| -> Result<i64> { field(i, what)?.parse().map_err(|_| bad(what)) };
        let c = &self.cols;
        let location = LatLon::new(num(c.lat, "lat")?, num(c.lon, "lon")?);
        let mut s = Staypoint::new(
            AgentId::new(field(c.agent, "agent_id")?),
            location,
            int(c.t_start, "t_start")?,
            int(c.t_end, "t_end")?,
        )?;
        if let Some((a, conf)) = c.label {
            let code: u8 = field(a, "activity_code")?.parse().map_err(|_| bad("activity_code"))?;
            let activity = ActivityType::from_code(code).ok_or_else(|| bad("activity_code"))?;
            let confidence = num(conf, "confidence")?;
            if !(0.0..=1.0).contains(&confidence) {
                return Err(bad("confidence"));
            }
            s.inference = Some(Inference { activity, confidence });
        }
        Ok(s)
    }
}

impl Iterator for StaypointReader {
    type Item = Result<Staypoint>;

    fn next(&mut self) -> Option<Self::Item> {
        let rec = self.records.next()?;
        self.line += 1;
        Some(rec.map_err(Error::from).and_then(|r| self.parse(&r)))
    }
}

pub fn load_staypoints(path: impl AsRef<Path>) -> Result<Vec<Staypoint>> {
    StaypointReader::open(path)?.collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<Staypoint> {
        let mut a = Staypoint::new(AgentId::new("a"), LatLon::new(34.01, -118.2), 100, 900).unwrap();
        a.inference = Some(Inference {
            activity: ActivityType::Work,
            confidence: 0.8125,
        });
        let mut b = Staypoint::new(AgentId::new("b"), LatLon::new(34.1 + 1e-9, -118.3), 0, 301).unwrap();
        b.inference = Some(Inference {
            activity: ActivityType::PickupDrop,
            confidence: 1.0 / 3.0,
        });
        vec![a, b]
    }

    #[test]
    fn labeled_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.csv");
        let mut w = StaypointWriter::create(&p, true, Some("test run")).unwrap();
        for s in sample() {
            w.write(&s).unwrap();
        }
        assert_eq!(w.finish().unwrap(), 2);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# test run\nagent_id,lat,lon,t_start,t_end,duration_s,activity_code,confidence\n"));
        assert_eq!(load_staypoints(&p).unwrap(), sample());
    }

    #[test]
    fn unlabeled_roundtrip_and_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let mut w = StaypointWriter::create(&p, false, None).unwrap();
        for s in sample() {
            w.write(&s).unwrap();
        }
        w.finish().unwrap();
        let back = load_staypoints(&p).unwrap();
        assert!(back.iter().all(|s| s.inference.is_none()));
        assert_eq!(back[1].duration(), 301);

        std::fs::write(&p, "agent_id,lat,lon,t_start,t_end,duration_s,activity_code,confidence\na,34,-118,0,10,10,16,0.5\n").unwrap();
        assert!(matches!(load_staypoints(&p), Err(Error::Schema(_))));
        std::fs::write(&p, "agent_id,lat,lon,t_start\n").unwrap();
        assert!(matches!(load_staypoints(&p), Err(Error::Schema(_))));
    }

    #[test]
    fn unlabeled_staypoint_cannot_be_written_as_labeled() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = StaypointWriter::create(dir.path().join("x.csv"), true, None).unwrap();
        let s = Staypoint::new(AgentId::new("a"), LatLon::new(34.0, -118.0), 0, 600).unwrap();
        assert!(matches!(w.write(&s), Err(Error::IncompleteInference(0))));
    }
}
