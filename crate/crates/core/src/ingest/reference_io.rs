//! Sectioned text format for reference statistics:
//!
//! ```text
//! [TZ_OFFSET_MIN]
//! -480
//! [SHARES]
//! 1 0.34
//! ...
//! [START]
//! 1 <96 values>
//! ...
//! [DURATION]
//! 1 <96 values>
//! ...
//! ```
//!
//! Rows are keyed by activity code; `#` starts a comment line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ActivityType, Histogram96, ProbVector, ReferenceStats, NUM_ACTIVITIES};

pub fn load_reference(path: impl AsRef<Path>) -> Result<ReferenceStats> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_reference(&text).map_err(|e| match e {
        Error::Schema(msg) => Error::Schema(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_reference(text: &str) -> Result<ReferenceStats> {
    let mut sections: BTreeMap<String, Vec<(usize, &str)>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim().to_ascii_uppercase();
            if sections.contains_key(&name) {
                return Err(Error::Schema(format!("duplicate section [{name}]")));
            }
            sections.insert(name.clone(), Vec::new());
            current = Some(name);
            continue;
        }
        let Some(sec) = current.as_ref() else {
            return Err(Error::Schema(format!("line {}: data outside a section", lineno + 1)));
        };
        sections.get_mut(sec).expect("inserted").push((lineno + 1, line));
    }
    let section = |name: &str| {
        sections
            .get(name)
            .ok_or_else(|| Error::Schema(format!("missing section [{name}]")))
    };

    let tz_lines = section("TZ_OFFSET_MIN")?;
    let tz: i32 = match tz_lines.as_slice() {
        [(n, l)] => l
            .parse()
            .map_err(|_| Error::Schema(format!("line {n}: bad timezone offset `{l}`")))?,
        _ => return Err(Error::Schema("[TZ_OFFSET_MIN] needs exactly one value".into())),
    };

    let share_rows = activity_rows(section("SHARES")?, 1, "SHARES")?;
    let mut shares = ProbVector::zeros();
    for (a, v) in ActivityType::ALL.iter().zip(&share_rows) {
        shares[*a] = v[0];
    }
    let to_hist = |rows: Vec<Vec<f64>>| -> Vec<Histogram96> {
        rows.into_iter()
            .map(|r| r.try_into().expect("width checked"))
            .collect()
    };
    let start = to_hist(activity_rows(section("START")?, 96, "START")?);
    let duration = to_hist(activity_rows(section("DURATION")?, 96, "DURATION")?);
    ReferenceStats::new(shares, start, duration, tz)
}

/// Parse `code v1 .. vN` rows and return them ordered by code; every code must appear once.
fn activity_rows(lines: &[(usize, &str)], width: usize, what: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; NUM_ACTIVITIES];
    for &(n, line) in lines {
        let mut fields = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty());
        let code: u8 = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Schema(format!("line {n}: [{what}] row lacks an activity code")))?;
        let a = ActivityType::from_code(code)
            .ok_or_else(|| Error::Schema(format!("line {n}: unknown activity code {code}")))?;
        let values: Vec<f64> = fields
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| Error::Schema(format!("line {n}: {e}")))?;
        if values.len() != width {
            return Err(Error::Schema(format!(
                "line {n}: [{what}] row for code {code} has {} values, expected {width}",
                values.len()
            )));
        }
        if rows[a.index()].replace(values).is_some() {
            return Err(Error::Schema(format!("line {n}: duplicate [{what}] row for code {code}")));
        }
    }
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.ok_or_else(|| {
                Error::Schema(format!("[{what}] missing row for activity code {}", i + 1))
            })
        })
        .collect()
}

pub fn format_reference(r: &ReferenceStats) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# reference statistics: activity shares, start-time and duration histograms");
    let _ = writeln!(s, "[TZ_OFFSET_MIN]\n{}\n", r.tz_offset_min());
    let _ = writeln!(s, "[SHARES]");
    for a in ActivityType::ALL {
        let _ = writeln!(s, "{} {}", a.code(), r.share(a));
    }
    for (name, get) in [
        ("START", ReferenceStats::start_prior as fn(&ReferenceStats, ActivityType) -> &Histogram96),
        ("DURATION", ReferenceStats::duration_prior),
    ] {
        let _ = writeln!(s, "\n[{name}]");
        for a in ActivityType::ALL {
            let row: Vec<String> = get(r, a).iter().map(|x| x.to_string()).collect();
            let _ = writeln!(s, "{} {}", a.code(), row.join(" "));
        }
    }
    s
}

pub fn write_reference(path: impl AsRef<Path>, r: &ReferenceStats) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_reference(r)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file_with(start_row: impl Fn(u8) -> String, n_rows: u8) -> String {
        let mut s = String::from("[TZ_OFFSET_MIN]\n-480\n[SHARES]\n");
        for c in 1..=15 {
            s.push_str(&format!("{c} 1\n"));
        }
        s.push_str("[START]\n");
        for c in 1..=n_rows {
            s.push_str(&format!("{c} {}\n", start_row(c)));
        }
        s.push_str("[DURATION]\n");
        for c in 1..=15 {
            s.push_str(&format!("{c} {}\n", vec!["1"; 96].join(" ")));
        }
        s
    }

    #[test]
    fn uniform_file_unchanged() {
        let u = (1.0f64 / 96.0).to_string();
        let r = parse_reference(&file_with(|_| vec![u.as_str(); 96].join(" "), 15)).unwrap();
        for a in ActivityType::ALL {
            for x in r.start_prior(a) {
                assert!((x - 1.0 / 96.0).abs() < 1e-15);
            }
        }
        assert_eq!(r.tz_offset_min(), -480);
        assert!((r.share(ActivityType::Work) - 1.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn rows_summing_to_four_are_renormalized() {
        let v = (4.0f64 / 96.0).to_string();
        let r = parse_reference(&file_with(|_| vec![v.as_str(); 96].join(" "), 15)).unwrap();
        let total: f64 = r.start_prior(ActivityType::Leisure).iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fourteen_activities_is_schema_error() {
        let text = file_with(|_| vec!["1"; 96].join(" "), 14);
        assert!(matches!(parse_reference(&text), Err(Error::Schema(m)) if m.contains("15")));
    }

    #[test]
    fn roundtrip_builtin_exactly() {
        let r = ReferenceStats::builtin();
        let back = parse_reference(&format_reference(&r)).unwrap();
        for a in ActivityType::ALL {
            for (x, y) in r.start_prior(a).iter().zip(back.start_prior(a)) {
                assert!((x - y).abs() <= 1e-15);
            }
        }
        assert_eq!(back.tz_offset_min(), r.tz_offset_min());
    }

    #[test]
    fn bad_width_rejected() {
        let text = file_with(|c| if c == 3 { "1 2 3".into() } else { vec!["1"; 96].join(" ") }, 15);
        assert!(matches!(parse_reference(&text), Err(Error::Schema(_))));
    }
}
