use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::ingest::{AgentPings, RawPing};
use crate::model::{AgentId, LatLon};

pub const PING_HEADER: [&str; 5] = ["agent_id", "timestamp_utc", "lat", "lon", "accuracy_m"];

/// Per-agent, time-sorted pings; agents in ascending id order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PingCorpus {
    pub agents: Vec<AgentPings>,
}

impl PingCorpus {
    pub fn ping_count(&self) -> usize {
        self.agents.iter().map(|a| a.pings.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub rows: usize,
    pub malformed: usize,
    pub duplicates: usize,
}

impl LoadReport {
    pub fn skipped(&self) -> usize {
        self.malformed + self.duplicates
    }

    fn check(&self, path: &Path) -> Result<()> {
        if self.rows > 0 && self.skipped() * 10 > self.rows {
            return Err(Error::CorruptInput {
                path: path.to_path_buf(),
                malformed: self.skipped(),
                total: self.rows,
            });
        }
        Ok(())
    }
}

struct Columns {
    agent: usize,
    ts: usize,
    lat: usize,
    lon: usize,
    acc: Option<usize>,
}

fn columns(headers: &csv::StringRecord) -> Result<Columns> {
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let need = |name: &str| {
        find(name).ok_or_else(|| Error::Schema(format!("pings file lacks column `{name}`")))
    };
    Ok(Columns {
        agent: need("agent_id")?,
        ts: need("timestamp_utc")?,
        lat: need("lat")?,
        lon: need("lon")?,
        acc: find("accuracy_m"),
    })
}

fn parse_row(rec: &csv::StringRecord, c: &Columns) -> Option<(String, RawPing)> {
    let agent = rec.get(c.agent)?.trim();
    if agent.is_empty() {
        return None;
    }
    let timestamp: i64 = rec.get(c.ts)?.trim().parse().ok()?;
    let lat: f64 = rec.get(c.lat)?.trim().parse().ok()?;
    let lon: f64 = rec.get(c.lon)?.trim().parse().ok()?;
    let location = LatLon::new(lat, lon);
    if !location.is_valid() {
        return None;
    }
    let accuracy_m = match c.acc.and_then(|i| rec.get(i)).map(str::trim) {
        None | Some("") => None,
        Some(s) => {
            let v: f64 = s.parse().ok()?;
            if !v.is_finite() || v < 0.0 {
                return None;
            }
            Some(v)
        }
    };
    Some((
        agent.to_string(),
        RawPing {
            timestamp,
            location,
            accuracy_m,
        },
    ))
}

fn open_reader(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(BufReader::new(file)))
}

/// Load a pings CSV of any agent order. Rows with unparseable fields, out-of-range
/// coordinates or a repeated (agent, timestamp) are skipped and counted.
pub fn load_pings(path: impl AsRef<Path>) -> Result<(PingCorpus, LoadReport)> {
    let path = path.as_ref();
    let metadata = std::fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if metadata.len() == 0 {
        return Ok((PingCorpus::default(), LoadReport::default()));
    }
    let mut reader = open_reader(path)?;
    let cols = columns(reader.headers()?)?;
    let mut by_agent: HashMap<String, Vec<RawPing>> = HashMap::new();
    let mut report = LoadReport::default();
    for rec in reader.records() {
        report.rows += 1;
        match rec.ok().as_ref().and_then(|r| parse_row(r, &cols)) {
            Some((agent, ping)) => by_agent.entry(agent).or_default().push(ping),
            None => report.malformed += 1,
        }
    }
    let mut agents: Vec<AgentPings> = by_agent
        .into_iter()
        .map(|(id, mut pings)| {
            pings.sort_by_key(|p| p.timestamp);
            let before = pings.len();
            pings.dedup_by_key(|p| p.timestamp);
            report.duplicates += before - pings.len();
            AgentPings {
                agent: AgentId::new(&id),
                pings,
            }
        })
        .collect();
    agents.sort_by(|a, b| a.agent.cmp(&b.agent));
    if report.skipped() > 0 {
        log::warn!(
            "{}: skipped {} malformed and {} duplicate rows",
            path.display(),
            report.malformed,
            report.duplicates
        );
    }
    report.check(path)?;
    Ok((PingCorpus { agents }, report))
}

/// Streaming reader for agent-contiguous ping files: yields one agent at a time so memory
/// stays bounded by the largest agent. An agent that reappears after another is an error.
pub struct AgentPingReader {
    path: PathBuf,
    records: csv::StringRecordsIntoIter<BufReader<File>>,
    cols: Option<Columns>,
    pending: Option<(String, RawPing)>,
    seen: HashSet<String>,
    report: LoadReport,
    done: bool,
}

impl AgentPingReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let empty = std::fs::metadata(&path).map_err(|e| Error::io(&path, e))?.len() == 0;
        let mut reader = open_reader(&path)?;
        let cols = if empty {
            None
        } else {
            Some(columns(reader.headers()?)?)
        };
        Ok(AgentPingReader {
            path,
            records: reader.into_records(),
            cols,
            pending: None,
            seen: HashSet::new(),
            report: LoadReport::default(),
            done: empty,
        })
    }

    pub fn report(&self) -> LoadReport {
        self.report
    }

    fn next_row(&mut self) -> Option<(String, RawPing)> {
        let cols = self.cols.as_ref()?;
        for rec in self.records.by_ref() {
            self.report.rows += 1;
            match rec.ok().as_ref().and_then(|r| parse_row(r, cols)) {
                Some(row) => return Some(row),
                None => self.report.malformed += 1,
            }
        }
        None
    }

    fn finish_group(&mut self, id: String, mut pings: Vec<RawPing>) -> Result<AgentPings> {
        if !self.seen.insert(id.clone()) {
            return Err(Error::Schema(format!(
                "{}: agent `{id}` is not contiguous; sort the file by agent first",
                self.path.display()
            )));
        }
        pings.sort_by_key(|p| p.timestamp);
        let before = pings.len();
        pings.dedup_by_key(|p| p.timestamp);
        self.report.duplicates += before - pings.len();
        Ok(AgentPings {
            agent: AgentId::new(&id),
            pings,
        })
    }
}

impl Iterator for AgentPingReader {
    type Item = Result<AgentPings>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let (id, first) = match self.pending.take().or_else(|| self.next_row()) {
            Some(row) => row,
            None => {
                self.done = true;
                return self.report.check(&self.path).err().map(Err);
            }
        };
        let mut pings = vec![first];
        loop {
            match self.next_row() {
                Some((next_id, ping)) if next_id == id => pings.push(ping),
                Some(other) => {
                    self.pending = Some(other);
                    break;
                }
                None => break,
            }
        }
        Some(self.finish_group(id, pings))
    }
}

/// Streaming ping CSV writer; numbers use the shortest representation that round-trips
/// exactly.
pub struct PingWriter {
    path: PathBuf,
    w: csv::Writer<BufWriter<File>>,
}

impl PingWriter {
    pub fn create(path: impl AsRef<Path>, provenance: Option<&str>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        if let Some(p) = provenance {
            writeln!(out, "# {p}").map_err(|e| Error::io(&path, e))?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(PING_HEADER)?;
        Ok(PingWriter { path, w })
    }

    pub fn write_agent(&mut self, a: &AgentPings) -> Result<()> {
        for p in &a.pings {
            self.w.write_record([
                a.agent.as_str().to_string(),
                p.timestamp.to_string(),
                p.location.lat.to_string(),
                p.location.lon.to_string(),
                p.accuracy_m.map(|x| x.to_string()).unwrap_or_default(),
            ])?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_pings(path: impl AsRef<Path>, corpus: &PingCorpus, provenance: Option<&str>) -> Result<()> {
    let mut w = PingWriter::create(path, provenance)?;
    for a in &corpus.agents {
        w.write_agent(a)?;
    }
    w.finish()
}
