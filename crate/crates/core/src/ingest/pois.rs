use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::{EnrichmentTable, Poi};
use crate::model::{LatLon, ProbVector, NUM_ACTIVITIES};

/// Loaded POIs plus counts of rows that could not be used.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoiLoad {
    pub pois: Vec<Poi>,
    /// Rows with neither a usable distribution nor a known category.
    pub unmapped: usize,
    pub malformed: usize,
}

/// Load `poi_id,lat,lon,category[,p1..p15][,name]`. An explicit non-zero distribution
/// wins over the category lookup.
pub fn load_pois(path: impl AsRef<Path>, table: &EnrichmentTable) -> Result<PoiLoad> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(BufReader::new(file));
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let need = |name: &str| {
        find(name).ok_or_else(|| Error::Schema(format!("pois file lacks column `{name}`")))
    };
    let (c_id, c_lat, c_lon, c_cat) = (need("poi_id")?, need("lat")?, need("lon")?, need("category")?);
    let c_p: Option<Vec<usize>> = (1..=NUM_ACTIVITIES).map(|k| find(&format!("p{k}"))).collect();
    let c_name = find("name");

    let mut out = PoiLoad::default();
    for rec in reader.records() {
        let Ok(rec) = rec else {
            out.malformed += 1;
            continue;
        };
        let parsed = (|| {
            let id = rec.get(c_id)?.trim().to_string();
            let lat: f64 = rec.get(c_lat)?.trim().parse().ok()?;
            let lon: f64 = rec.get(c_lon)?.trim().parse().ok()?;
            let loc = LatLon::new(lat, lon);
            loc.is_valid().then_some((id, loc))
        })();
        let Some((poi_id, location)) = parsed else {
            out.malformed += 1;
            continue;
        };
        let category = rec.get(c_cat).unwrap_or("").trim().to_string();
        let explicit = c_p.as_ref().and_then(|cols| {
            let vals: Option<Vec<f64>> = cols
                .iter()
                .map(|&i| rec.get(i).and_then(|s| s.trim().parse().ok()))
                .collect();
            vals.and_then(|v| ProbVector::from_slice(&v).ok()?.normalize().ok())
        });
        let dist = explicit.or_else(|| table.get(&category).copied());
        match dist {
            Some(activity_dist) => out.pois.push(Poi {
                poi_id,
                location,
                category,
                activity_dist,
                name: c_name
                    .and_then(|i| rec.get(i))
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty()),
            }),
            None => out.unmapped += 1,
        }
    }
    if out.unmapped + out.malformed > 0 {
        log::warn!(
            "{}: skipped {} unmapped and {} malformed POIs",
            path.display(),
            out.unmapped,
            out.malformed
        );
    }
    Ok(out)
}

pub fn write_pois(
    path: impl AsRef<Path>,
    pois: &[Poi],
    with_distributions: bool,
    provenance: Option<&str>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    if let Some(p) = provenance {
        writeln!(out, "# {p}").map_err(|e| Error::io(path, e))?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["poi_id", "lat", "lon", "category"].map(String::from).to_vec();
    if with_distributions {
        header.extend((1..=NUM_ACTIVITIES).map(|k| format!("p{k}")));
    }
    w.write_record(&header)?;
    for p in pois {
        let mut row = vec![
            p.poi_id.clone(),
            p.location.lat.to_string(),
            p.location.lon.to_string(),
            p.category.clone(),
        ];
        if with_distributions {
            row.extend(p.activity_dist.values().iter().map(|x| x.to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ActivityType;

    #[test]
    fn explicit_lookup_and_unmapped() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pois.csv");
        let mut body = String::from("poi_id,lat,lon,category,");
        body.push_str(&(1..=15).map(|k| format!("p{k}")).collect::<Vec<_>>().join(","));
        body.push('\n');
        let mut explicit = vec!["0"; 15];
        explicit[6] = "1";
        body.push_str(&format!("a,34.0,-118.0,whatever,{}\n", explicit.join(",")));
        body.push_str(&format!("b,34.0,-118.0,restaurant{}\n", ",".repeat(15)));
        body.push_str(&format!("c,34.0,-118.0,spaceport{}\n", ",".repeat(15)));
        body.push_str(&format!("d,99.0,-118.0,restaurant{}\n", ",".repeat(15)));
        std::fs::write(&p, body).unwrap();

        let table = EnrichmentTable::builtin();
        let load = load_pois(&p, &table).unwrap();
        assert_eq!(load.pois.len(), 2);
        assert_eq!(load.unmapped, 1);
        assert_eq!(load.malformed, 1);
        assert_eq!(load.pois[0].activity_dist, ProbVector::unit(ActivityType::MealsOut));
        assert_eq!(&load.pois[1].activity_dist, table.get("restaurant").unwrap());
    }

    #[test]
    fn roundtrip_with_distributions() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pois.csv");
        let table = EnrichmentTable::builtin();
        let pois = vec![Poi {
            poi_id: "x1".into(),
            location: LatLon::new(34.01, -118.3),
            category: "gym".into(),
            activity_dist: *table.get("gym").unwrap(),
            name: None,
        }];
        write_pois(&p, &pois, true, Some("hash=abc")).unwrap();
        let back = load_pois(&p, &EnrichmentTable::empty()).unwrap();
        assert_eq!(back.pois.len(), 1);
        for (a, b) in back.pois[0].activity_dist.values().iter().zip(pois[0].activity_dist.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
