use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{SeriesFrame, Timestamp};
use crate::error::{Error, Result};

/// CSV layout: `series_id,timestamp,channel,value` rows, or `timestamp,c0,..` columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Long,
    Wide,
    /// Long when the header has a `series_id` column, wide otherwise.
    #[default]
    Auto,
}

fn read_all(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_value(s: &str, line: usize) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::Parse {
            line,
            msg: "missing value".into(),
        });
    }
    let v: f64 = s.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid number {s:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            msg: format!("non-finite value {s:?}"),
        });
    }
    Ok(v)
}

fn parse_ts(s: &str, line: usize) -> Result<Timestamp> {
    Timestamp::parse(s).ok_or_else(|| Error::Parse {
        line,
        msg: format!("invalid timestamp {s:?}"),
    })
}

fn record_line(rec: &csv::StringRecord) -> usize {
    rec.position().map_or(0, |p| p.line() as usize)
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".into())
}

pub fn load_csv(path: &Path, layout: Layout) -> Result<Vec<SeriesFrame>> {
    let mut rdr = read_all(path)?;
    let headers = rdr.headers()?.clone();
    let layout = match layout {
        Layout::Auto if headers.iter().any(|h| h == "series_id") => Layout::Long,
        Layout::Auto => Layout::Wide,
        l => l,
    };
    match layout {
        Layout::Long => load_long(&mut rdr, &headers),
        _ => load_wide(&mut rdr, &headers, &file_stem(path)).map(|f| vec![f]),
    }
}

fn load_wide(
    rdr: &mut csv::Reader<fs::File>,
    headers: &csv::StringRecord,
    series_id: &str,
) -> Result<SeriesFrame> {
    if headers.get(0) != Some("timestamp") || headers.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            msg: "wide layout needs header `timestamp,c0,...`".into(),
        });
    }
    let channels: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    let mut timestamps: Vec<Timestamp> = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = record_line(&rec);
        if rec.len() != headers.len() {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        let ts = parse_ts(&rec[0], line)?;
        if let Some(prev) = timestamps.last() {
            if *prev == ts {
                return Err(Error::Data(format!(
                    "series {series_id}: duplicate timestamp {ts} (line {line})"
                )));
            }
            if *prev > ts {
                return Err(Error::Data(format!(
                    "series {series_id}: non-monotone timestamp {ts} after {prev} (line {line})"
                )));
            }
        }
        timestamps.push(ts);
        for field in rec.iter().skip(1) {
            values.push(parse_value(field, line)?);
        }
    }
    SeriesFrame::new(series_id, channels, timestamps, values)
}

fn load_long(
    rdr: &mut csv::Reader<fs::File>,
    headers: &csv::StringRecord,
) -> Result<Vec<SeriesFrame>> {
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(sid), Some(tsc), Some(valc)) = (col("series_id"), col("timestamp"), col("value"))
    else {
        return Err(Error::Parse {
            line: 1,
            msg: "long layout needs columns series_id,timestamp,value[,channel]".into(),
        });
    };
    let chc = col("channel");

    struct Acc {
        channels: Vec<String>,
        cells: HashMap<(usize, Timestamp), f64>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut series: HashMap<String, Acc> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = record_line(&rec);
        if rec.len() != headers.len() {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        let id = rec[sid].to_owned();
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                msg: "empty series_id".into(),
            });
        }
        let ts = parse_ts(&rec[tsc], line)?;
        let v = parse_value(&rec[valc], line)?;
        let channel = chc.map_or_else(|| "value".to_owned(), |c| rec[c].to_owned());
        let acc = series.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Acc {
                channels: Vec::new(),
                cells: HashMap::new(),
            }
        });
        let ci = match acc.channels.iter().position(|c| *c == channel) {
            Some(i) => i,
            None => {
                acc.channels.push(channel);
                acc.channels.len() - 1
            }
        };
        if acc.cells.insert((ci, ts), v).is_some() {
            return Err(Error::Data(format!(
                "series {id}: duplicate timestamp {ts} (line {line})"
            )));
        }
    }

    order
        .into_iter()
        .map(|id| {
            let acc = &series[&id];
            let mut timestamps: Vec<Timestamp> = acc.cells.keys().map(|(_, t)| *t).collect();
            timestamps.sort();
            timestamps.dedup();
            let mut values = Vec::with_capacity(timestamps.len() * acc.channels.len());
            for t in &timestamps {
                for (ci, name) in acc.channels.iter().enumerate() {
                    let v = acc.cells.get(&(ci, *t)).ok_or_else(|| {
                        Error::Data(format!("series {id}: channel {name} has no value at {t}"))
                    })?;
                    values.push(*v);
                }
            }
            SeriesFrame::new(id.clone(), acc.channels.clone(), timestamps, values)
        })
        .collect()
}

/// Load a CSV file, or every `*.csv` in a directory (sorted by name).
pub fn load_dataset(path: &Path, layout: Layout) -> Result<Vec<SeriesFrame>> {
    if !path.is_dir() {
        return load_csv(path, layout);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("{}: no CSV files", path.display())));
    }
    let mut frames = Vec::new();
    for f in files {
        frames.extend(load_csv(&f, layout)?);
    }
    let mut ids: Vec<&str> = frames.iter().map(|f| f.series_id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Data(format!("duplicate series id {}", w[0])));
    }
    Ok(frames)
}

/// Write one frame in wide layout. Values use the shortest round-trip decimal form.
pub fn write_wide_csv(frame: &SeriesFrame, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("timestamp");
    for c in &frame.channels {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (t, ts) in frame.timestamps().iter().enumerate() {
        out.push_str(&ts.to_string());
        for c in 0..frame.n_channels() {
            out.push(',');
            out.push_str(&frame.value(t, c).to_string());
        }
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
