//! Readers and writers for the tab-separated log files and the label CSV.
//!
//! Visit rows are `user_id \t session_id \t url \t timestamp`; query rows are
//! `user_id \t session_id \t query \t clicked_url \t timestamp` with an empty
//! `clicked_url` meaning no click. No header, UTF-8, LF line endings.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use crate::model::{Dataset, LabelMap, LabelScope, LogRecord, QueryRecord, StanceLabel};
use crate::urlnorm::UrlNormalizer;
use crate::{Error, Result};

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn tsv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .quoting(false)
        .flexible(true)
        .from_reader(r)
}

fn tsv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .quote_style(csv::QuoteStyle::Never)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn parse_timestamp(field: &str, source: &str, line: u64) -> Result<i64> {
    let ts: i64 = field
        .trim()
        .parse()
        .map_err(|_| Error::parse(source, line, format!("timestamp {field:?} is not an integer")))?;
    if ts <= 0 {
        return Err(Error::parse(source, line, format!("timestamp {ts} must be positive")));
    }
    Ok(ts)
}

fn required<'a>(field: &'a str, name: &str, source: &str, line: u64) -> Result<&'a str> {
    if field.trim().is_empty() {
        Err(Error::parse(source, line, format!("empty {name}")))
    } else {
        Ok(field)
    }
}

/// Parses visit rows. `source` names the input in diagnostics.
pub fn read_visits<R: Read>(reader: R, source: &str) -> Result<Vec<LogRecord>> {
    let mut out = Vec::new();
    let mut rdr = tsv_reader(reader);
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::parse(source, line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() == 1 && row[0].trim().is_empty() {
            continue;
        }
        if row.len() != 4 {
            return Err(Error::parse(
                source,
                line,
                format!("expected 4 tab-separated columns, found {}", row.len()),
            ));
        }
        out.push(LogRecord {
            user_id: required(&row[0], "user_id", source, line)?.to_string(),
            session_id: required(&row[1], "session_id", source, line)?.to_string(),
            url: required(&row[2], "url", source, line)?.to_string(),
            timestamp: parse_timestamp(&row[3], source, line)?,
        });
    }
    Ok(out)
}

/// Parses query rows, lowercasing the query text.
pub fn read_queries<R: Read>(reader: R, source: &str) -> Result<Vec<QueryRecord>> {
    let mut out = Vec::new();
    let mut rdr = tsv_reader(reader);
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::parse(source, line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() == 1 && row[0].trim().is_empty() {
            continue;
        }
        if row.len() != 5 {
            return Err(Error::parse(
                source,
                line,
                format!("expected 5 tab-separated columns, found {}", row.len()),
            ));
        }
        let query = row[2].trim().to_lowercase();
        if query.is_empty() {
            return Err(Error::parse(source, line, "empty query"));
        }
        let clicked = row[3].trim();
        out.push(QueryRecord {
            user_id: required(&row[0], "user_id", source, line)?.to_string(),
            session_id: required(&row[1], "session_id", source, line)?.to_string(),
            query,
            clicked_url: (!clicked.is_empty()).then(|| clicked.to_string()),
            timestamp: parse_timestamp(&row[4], source, line)?,
        });
    }
    Ok(out)
}

/// Loads a dataset from a visit file and an optional query file.
pub fn load_logs(visit_path: &Path, query_path: Option<&Path>) -> Result<Dataset> {
    let visits = read_visits(open(visit_path)?, &visit_path.display().to_string())?;
    if visits.is_empty() {
        log::warn!("{}: no visit records", visit_path.display());
    }
    let queries = match query_path {
        Some(p) => {
            let q = read_queries(open(p)?, &p.display().to_string())?;
            if q.is_empty() {
                log::warn!("{}: no query records", p.display());
            }
            q
        }
        None => Vec::new(),
    };
    Ok(Dataset::new(visits, queries))
}

pub fn write_visits<W: Write>(w: W, visits: &[LogRecord]) -> Result<()> {
    let mut wtr = tsv_writer(w);
    for v in visits {
        let ts = v.timestamp.to_string();
        wtr.write_record([&v.user_id, &v.session_id, &v.url, &ts])
            .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::io("<visits>", e))
}

pub fn write_queries<W: Write>(w: W, queries: &[QueryRecord]) -> Result<()> {
    let mut wtr = tsv_writer(w);
    for q in queries {
        let ts = q.timestamp.to_string();
        let clicked = q.clicked_url.as_deref().unwrap_or("");
        wtr.write_record([
            q.user_id.as_str(),
            q.session_id.as_str(),
            q.query.as_str(),
            clicked,
            ts.as_str(),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::io("<queries>", e))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

/// Reads a label CSV with rows `scope,key,label` (`scope` is `url` or
/// `domain`). A header row is optional. URL keys are normalized.
pub fn read_labels<R: Read>(reader: R, source: &str, norm: &UrlNormalizer) -> Result<LabelMap> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut map = LabelMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| Error::parse(source, i as u64 + 1, e.to_string()))?;
        let line = row.position().map(|p| p.line()).unwrap_or(i as u64 + 1);
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        if i == 0 && row.get(0).is_some_and(|c| c.eq_ignore_ascii_case("scope")) {
            continue;
        }
        if row.len() != 3 {
            return Err(Error::parse(source, line, "expected scope,key,label"));
        }
        let label: StanceLabel = row[2]
            .parse()
            .map_err(|_| Error::parse(source, line, format!("unknown label {:?}", &row[2])))?;
        match row[0].to_ascii_lowercase().as_str() {
            "url" => map.insert(LabelScope::Url, norm.normalize(&row[1]), label),
            "domain" => map.insert(LabelScope::Domain, normalize_domain(&row[1]), label),
            other => {
                return Err(Error::parse(
                    source,
                    line,
                    format!("unknown scope {other:?}, expected url|domain"),
                ))
            }
        }
    }
    Ok(map)
}

pub fn load_labels(path: &Path, norm: &UrlNormalizer) -> Result<LabelMap> {
    read_labels(open(path)?, &path.display().to_string(), norm)
}

pub fn write_labels<W: Write>(w: W, labels: &LabelMap) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    wtr.write_record(["scope", "key", "label"]).map_err(csv_err)?;
    for (scope, key, label) in labels.iter() {
        let scope = match scope {
            LabelScope::Url => "url",
            LabelScope::Domain => "domain",
        };
        wtr.write_record([scope, key, label.code()]).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::io("<labels>", e))
}

/// Lowercased, trimmed, without a leading `www.`.
pub fn normalize_domain(raw: &str) -> String {
    let d = raw.trim().to_ascii_lowercase();
    d.strip_prefix("www.").map(str::to_string).unwrap_or(d)
}

/// One entry per non-blank line; `#` starts a comment.
pub fn read_list<R: Read>(mut reader: R, source: &str) -> Result<Vec<String>> {
    let mut s = String::new();
    reader
        .read_to_string(&mut s)
        .map_err(|e| Error::io(source, e))?;
    Ok(s.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

pub fn load_list(path: &Path) -> Result<Vec<String>> {
    read_list(open(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_visit_rows() {
        let data = "u1\ts1\thttp://a.com/x\t100\nu1\ts1\thttp://b.com\t101\nu2\ts9\tc.org/p\t200\n";
        let v = read_visits(data.as_bytes(), "visits.tsv").unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v[2].user_id, "u2");
        assert_eq!(v[2].timestamp, 200);
    }

    #[test]
    fn bad_timestamp_names_line() {
        let data = "u1\ts1\ta.com\t100\nu1\ts1\tb.com\tabc\n";
        let err = read_visits(data.as_bytes(), "visits.tsv").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("visits.tsv:2"), "{msg}");
        assert!(msg.contains("abc"), "{msg}");
    }

    #[test]
    fn missing_column_is_rejected() {
        let err = read_visits("u1\ts1\t100\n".as_bytes(), "v").unwrap_err();
        assert!(err.to_string().contains("v:1"));
    }

    #[test]
    fn empty_input_is_empty() {
        assert!(read_visits("".as_bytes(), "v").unwrap().is_empty());
        assert!(read_queries("".as_bytes(), "q").unwrap().is_empty());
    }

    #[test]
    fn queries_lowercased_and_optional_click() {
        let data = "u\ts\tGun Control Laws\t\t5\nu\ts\tNRA\tnra.org\t6\n";
        let q = read_queries(data.as_bytes(), "q").unwrap();
        assert_eq!(q[0].query, "gun control laws");
        assert_eq!(q[0].clicked_url, None);
        assert_eq!(q[1].clicked_url.as_deref(), Some("nra.org"));
    }

    #[test]
    fn visits_round_trip() {
        let v = vec![LogRecord {
            user_id: "u".into(),
            session_id: "s".into(),
            url: "a.com/x".into(),
            timestamp: 42,
        }];
        let mut buf = Vec::new();
        write_visits(&mut buf, &v).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "u\ts\ta.com/x\t42\n");
        assert_eq!(read_visits(buf.as_slice(), "v").unwrap(), v);
    }

    #[test]
    fn labels_file() {
        let data = "scope,key,label\ndomain,WWW.NRA.org,ER\nurl,http://www.example.com/a/,PF\n";
        let m = read_labels(data.as_bytes(), "l", &UrlNormalizer::default()).unwrap();
        assert_eq!(m.domains.get("nra.org"), Some(&StanceLabel::ER));
        assert_eq!(m.urls.get("example.com/a"), Some(&StanceLabel::PF));
        let mut buf = Vec::new();
        write_labels(&mut buf, &m).unwrap();
        let again = read_labels(buf.as_slice(), "l", &UrlNormalizer::default()).unwrap();
        assert_eq!(again, m);

        assert!(read_labels("page,x,ER\n".as_bytes(), "l", &UrlNormalizer::default()).is_err());
    }

    #[test]
    fn list_skips_comments() {
        let l = read_list("cnn.com\n# news\n\nfoxnews.com # cable\n".as_bytes(), "w").unwrap();
        assert_eq!(l, vec!["cnn.com", "foxnews.com"]);
    }
}
