//! CSV reading and writing for event logs.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDate, NaiveDateTime};

use super::{AttributeKind, AttributeValue, Event, EventLog, Trace};
use crate::error::{Error, Result};

/// Maps log concepts onto CSV column names.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ColumnMapping {
    pub case_column: String,
    pub activity_column: String,
    pub timestamp_column: String,
    /// Attribute columns to read, with their declared kinds.
    pub attributes: Vec<(String, AttributeKind)>,
    /// Optional strftime-style timestamp format. When absent a set of
    /// common ISO-8601 shapes is tried.
    pub timestamp_format: Option<String>,
}

impl ColumnMapping {
    pub fn new(case: &str, activity: &str, timestamp: &str) -> Self {
        ColumnMapping {
            case_column: case.into(),
            activity_column: activity.into(),
            timestamp_column: timestamp.into(),
            attributes: Vec::new(),
            timestamp_format: None,
        }
    }

    pub fn with_attribute(mut self, name: &str, kind: AttributeKind) -> Self {
        self.attributes.push((name.into(), kind));
        self
    }

    pub fn with_timestamp_format(mut self, format: &str) -> Self {
        self.timestamp_format = Some(format.into());
        self
    }
}

fn parse_timestamp(raw: &str, format: Option<&str>) -> Option<NaiveDateTime> {
    if let Some(fmt) = format {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(dt);
        }
        // Formats carrying a zone offset need the offset-aware parser.
        if let Ok(dt) = DateTime::parse_from_str(raw, fmt) {
            return Some(dt.naive_utc());
        }
        if let Ok(d) = NaiveDate::parse_from_str(raw, fmt) {
            return d.and_hms_opt(0, 0, 0);
        }
        return None;
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.naive_utc());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(dt);
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
        return d.and_hms_opt(0, 0, 0);
    }
    None
}

/// Parse a CSV event log.
///
/// The header row must contain every mapped column. Events are grouped by
/// case id and stably sorted by timestamp, so equal timestamps keep their
/// file order. Traces come out in first-appearance order of case ids.
pub fn parse_csv<R: Read>(reader: R, mapping: &ColumnMapping) -> Result<EventLog> {
    let mut csv_reader = csv::ReaderBuilder::new().flexible(false).from_reader(reader);

    let headers = csv_reader
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read CSV header: {e}")))?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column '{name}' in CSV header")))
    };
    let case_idx = col(&mapping.case_column)?;
    let activity_idx = col(&mapping.activity_column)?;
    let timestamp_idx = col(&mapping.timestamp_column)?;
    let mut attr_idx = Vec::with_capacity(mapping.attributes.len());
    for (name, kind) in &mapping.attributes {
        attr_idx.push((name.clone(), *kind, col(name)?));
    }

    let mut order: Vec<String> = Vec::new();
    let mut by_case: HashMap<String, Vec<Event>> = HashMap::new();

    for record in csv_reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Row {
                line,
                message: format!("malformed CSV record: {e}"),
            }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row_err = |message: String| Error::Row { line, message };

        let case_id = record.get(case_idx).unwrap_or("").to_string();
        let activity = record.get(activity_idx).unwrap_or("").trim().to_string();
        if activity.is_empty() {
            return Err(row_err("empty activity label".into()));
        }
        let raw_ts = record.get(timestamp_idx).unwrap_or("").trim();
        let timestamp = parse_timestamp(raw_ts, mapping.timestamp_format.as_deref())
            .ok_or_else(|| row_err(format!("unparseable timestamp '{raw_ts}'")))?;

        let mut attributes = BTreeMap::new();
        for (name, kind, idx) in &attr_idx {
            let raw = record.get(*idx).unwrap_or("").trim();
            if raw.is_empty() {
                continue;
            }
            let value = match kind {
                AttributeKind::Categorical => AttributeValue::Text(raw.to_string()),
                AttributeKind::Numeric => {
                    let n: f64 = raw.parse().map_err(|_| {
                        row_err(format!("attribute '{name}': unparseable number '{raw}'"))
                    })?;
                    if !n.is_finite() {
                        return Err(row_err(format!(
                            "attribute '{name}': non-finite number '{raw}'"
                        )));
                    }
                    AttributeValue::Number(n)
                }
            };
            attributes.insert(name.clone(), value);
        }

        if !by_case.contains_key(&case_id) {
            order.push(case_id.clone());
        }
        by_case.entry(case_id).or_default().push(Event {
            activity,
            timestamp,
            attributes,
        });
    }

    let mut traces = Vec::with_capacity(order.len());
    for case_id in order {
        let mut events = by_case.remove(&case_id).unwrap();
        events.sort_by_key(|e| e.timestamp);
        traces.push(Trace { case_id, events });
    }

    let schema = mapping
        .attributes
        .iter()
        .map(|(name, kind)| (name.clone(), *kind))
        .collect();
    Ok(EventLog { traces, schema })
}

fn format_value(value: &AttributeValue) -> String {
    match value {
        AttributeValue::Text(s) => s.clone(),
        AttributeValue::Number(n) => format!("{n}"),
    }
}

/// Write a log as CSV with columns `case`, `activity`, `timestamp` followed
/// by the schema's attribute columns in name order.
pub fn write_csv<W: Write>(writer: W, log: &EventLog) -> Result<()> {
    let mut csv_writer = csv::Writer::from_writer(writer);
    let attr_names: Vec<&String> = log.schema.keys().collect();

    let mut header = vec!["case", "activity", "timestamp"];
    header.extend(attr_names.iter().map(|s| s.as_str()));
    csv_writer
        .write_record(&header)
        .map_err(|e| Error::Format(format!("CSV write failed: {e}")))?;

    for trace in &log.traces {
        for event in &trace.events {
            let mut row = vec![
                trace.case_id.clone(),
                event.activity.clone(),
                event.timestamp.format("%Y-%m-%dT%H:%M:%S%.f").to_string(),
            ];
            for name in &attr_names {
                row.push(
                    event
                        .attributes
                        .get(*name)
                        .map(format_value)
                        .unwrap_or_default(),
                );
            }
            csv_writer
                .write_record(&row)
                .map_err(|e| Error::Format(format!("CSV write failed: {e}")))?;
        }
    }
    csv_writer
        .flush()
        .map_err(|e| Error::Format(format!("CSV write failed: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mapping() -> ColumnMapping {
        ColumnMapping::new("case", "activity", "timestamp")
    }

    #[test]
    fn parses_and_groups_by_case() {
        let data = "\
case,activity,timestamp
c1,A,2020-01-01T00:00:00
c2,X,2020-01-01T00:00:05
c1,B,2020-01-01T00:00:01
c2,Y,2020-01-01T00:00:06
";
        let log = parse_csv(data.as_bytes(), &mapping()).unwrap();
        assert_eq!(log.num_traces(), 2);
        assert_eq!(log.traces[0].case_id, "c1");
        let acts: Vec<&str> = log.traces[0]
            .events
            .iter()
            .map(|e| e.activity.as_str())
            .collect();
        assert_eq!(acts, vec!["A", "B"]);
        assert_eq!(log.traces[1].case_id, "c2");
    }

    #[test]
    fn sorts_by_timestamp_with_stable_ties() {
        let data = "\
case,activity,timestamp
c1,late,2020-01-01T00:00:09
c1,first,2020-01-01T00:00:01
c1,tie_a,2020-01-01T00:00:05
c1,tie_b,2020-01-01T00:00:05
";
        let log = parse_csv(data.as_bytes(), &mapping()).unwrap();
        let acts: Vec<&str> = log.traces[0]
            .events
            .iter()
            .map(|e| e.activity.as_str())
            .collect();
        assert_eq!(acts, vec!["first", "tie_a", "tie_b", "late"]);
    }

    #[test]
    fn parses_attribute_kinds_and_absence() {
        let data = "\
case,activity,timestamp,dept,amount
c1,A,2020-01-01T00:00:00,sales,10.5
c1,B,2020-01-01T00:00:01,,
";
        let m = mapping()
            .with_attribute("dept", AttributeKind::Categorical)
            .with_attribute("amount", AttributeKind::Numeric);
        let log = parse_csv(data.as_bytes(), &m).unwrap();
        let e0 = &log.traces[0].events[0];
        assert_eq!(
            e0.attribute("dept"),
            Some(&AttributeValue::Text("sales".into()))
        );
        assert_eq!(e0.attribute("amount"), Some(&AttributeValue::Number(10.5)));
        let e1 = &log.traces[0].events[1];
        assert_eq!(e1.attribute("dept"), None);
        assert_eq!(e1.attribute("amount"), None);
    }

    #[test]
    fn accepts_rfc3339_with_offset() {
        let data = "\
case,activity,timestamp
c1,A,2020-01-01T02:00:00+02:00
";
        let log = parse_csv(data.as_bytes(), &mapping()).unwrap();
        let ts = log.traces[0].events[0].timestamp;
        assert_eq!(ts.format("%H:%M:%S").to_string(), "00:00:00");
    }

    #[test]
    fn accepts_custom_timestamp_format() {
        let data = "\
case,activity,timestamp
c1,A,01/02/2020 13:45
";
        let m = mapping().with_timestamp_format("%d/%m/%Y %H:%M");
        let log = parse_csv(data.as_bytes(), &m).unwrap();
        let ts = log.traces[0].events[0].timestamp;
        assert_eq!(ts.format("%Y-%m-%d %H:%M").to_string(), "2020-02-01 13:45");
    }

    #[test]
    fn rejects_missing_column() {
        let data = "case,activity\nc1,A\n";
        let err = parse_csv(data.as_bytes(), &mapping()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn rejects_bad_timestamp_with_line_number() {
        let data = "\
case,activity,timestamp
c1,A,2020-01-01T00:00:00
c1,B,not-a-date
";
        let err = parse_csv(data.as_bytes(), &mapping()).unwrap_err();
        match err {
            Error::Row { line, .. } => assert_eq!(line, 3),
            other => panic!("expected row error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_empty_activity() {
        let data = "\
case,activity,timestamp
c1,,2020-01-01T00:00:00
";
        let err = parse_csv(data.as_bytes(), &mapping()).unwrap_err();
        assert!(matches!(err, Error::Row { .. }));
    }

    #[test]
    fn rejects_bad_number() {
        let data = "\
case,activity,timestamp,amount
c1,A,2020-01-01T00:00:00,ten
";
        let m = mapping().with_attribute("amount", AttributeKind::Numeric);
        let err = parse_csv(data.as_bytes(), &m).unwrap_err();
        assert!(matches!(err, Error::Row { .. }));
    }

    #[test]
    fn quoted_fields_round_trip() {
        let data = "\
case,activity,timestamp,note
c1,\"approve, final\",2020-01-01T00:00:00,\"said \"\"ok\"\"\"
";
        let m = mapping().with_attribute("note", AttributeKind::Categorical);
        let log = parse_csv(data.as_bytes(), &m).unwrap();
        assert_eq!(log.traces[0].events[0].activity, "approve, final");
        assert_eq!(
            log.traces[0].events[0].attribute("note"),
            Some(&AttributeValue::Text("said \"ok\"".into()))
        );
    }

    #[test]
    fn write_then_parse_round_trips() {
        let data = "\
case,activity,timestamp,dept,amount
c1,A,2020-01-01T00:00:00,sales,10.5
c1,\"B, with comma\",2020-01-01T00:00:01,,3
c2,X,2020-01-01T00:00:00.250,ops,
";
        let m = mapping()
            .with_attribute("dept", AttributeKind::Categorical)
            .with_attribute("amount", AttributeKind::Numeric);
        let log = parse_csv(data.as_bytes(), &m).unwrap();

        let mut buf = Vec::new();
        write_csv(&mut buf, &log).unwrap();
        let reparsed = parse_csv(buf.as_slice(), &m).unwrap();
        assert_eq!(reparsed, log);
    }
}
