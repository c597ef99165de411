//! CSV extraction with per-record quarantine.
//!
//! Records follow RFC 4180 (quoted fields may span lines, `""` escapes a
//! quote). A record that breaks the quoting rules or has the wrong arity is
//! quarantined with its raw text instead of aborting the batch. An unclosed
//! quote at end of input only claims its first physical line; extraction
//! resumes on the next one. Blank lines are not records.

use std::io::Read;

use super::{EtlError, Quarantined, RecordBatch, SourceRow};

pub const REASON_ARITY: &str = "arity";
pub const REASON_QUOTING: &str = "quoting";
pub const REASON_ENCODING: &str = "encoding";

enum Parsed {
    Record { fields: Vec<Vec<u8>>, end: usize, next: usize },
    Malformed { end: usize, next: usize },
}

/// End of the physical line starting at or after `from`: (end excluding the
/// terminator, start of the next line).
fn line_end(data: &[u8], from: usize) -> (usize, usize) {
    match data[from..].iter().position(|&b| b == b'\n') {
        Some(i) => {
            let nl = from + i;
            let end = if nl > from && data[nl - 1] == b'\r' { nl - 1 } else { nl };
            (end.max(from), nl + 1)
        }
        None => (data.len(), data.len()),
    }
}

fn parse_record(data: &[u8], start: usize) -> Parsed {
    #[derive(PartialEq)]
    enum State {
        FieldStart,
        Unquoted,
        Quoted,
        AfterQuote,
    }
    let mut fields = Vec::new();
    let mut field = Vec::new();
    let mut state = State::FieldStart;
    let mut i = start;
    while i < data.len() {
        let b = data[i];
        let at_eol = b == b'\n' || (b == b'\r' && data.get(i + 1) == Some(&b'\n'));
        match state {
            State::Quoted => {
                if b == b'"' {
                    if data.get(i + 1) == Some(&b'"') {
                        field.push(b'"');
                        i += 1;
                    } else {
                        state = State::AfterQuote;
                    }
                } else {
                    field.push(b);
                }
            }
            _ if at_eol => {
                fields.push(field);
                let next = if b == b'\r' { i + 2 } else { i + 1 };
                return Parsed::Record { fields, end: i, next };
            }
            _ if b == b',' => {
                fields.push(std::mem::take(&mut field));
                state = State::FieldStart;
            }
            State::FieldStart if b == b'"' => state = State::Quoted,
            State::FieldStart | State::Unquoted if b != b'"' => {
                field.push(b);
                state = State::Unquoted;
            }
            // stray quote inside an unquoted field, or junk after a closing quote
            _ => {
                let (end, next) = line_end(data, i);
                return Parsed::Malformed { end, next };
            }
        }
        i += 1;
    }
    if state == State::Quoted {
        let (end, next) = line_end(data, start);
        return Parsed::Malformed { end, next };
    }
    fields.push(field);
    Parsed::Record {
        fields,
        end: data.len(),
        next: data.len(),
    }
}

fn lossy(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

/// Splits `data` into records: each is `Ok(fields)` or `Err((raw, reason))`.
fn records(data: &[u8]) -> Vec<(String, Result<Vec<String>, &'static str>)> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < data.len() {
        let (line_stop, after_line) = line_end(data, pos);
        if line_stop == pos {
            pos = after_line;
            continue;
        }
        match parse_record(data, pos) {
            Parsed::Record { fields, end, next } => {
                let raw = &data[pos..end];
                let decoded: Result<Vec<String>, _> =
                    fields.into_iter().map(String::from_utf8).collect();
                match decoded {
                    Ok(f) => out.push((lossy(raw), Ok(f))),
                    Err(_) => out.push((lossy(raw), Err(REASON_ENCODING))),
                }
                pos = next;
            }
            Parsed::Malformed { end, next } => {
                out.push((lossy(&data[pos..end]), Err(REASON_QUOTING)));
                pos = next;
            }
        }
    }
    out
}

/// Extracts a record batch from raw CSV bytes. The first record is the header.
pub fn extract_csv_bytes(data: &[u8], source_id: &str) -> Result<RecordBatch, EtlError> {
    let data = data.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(data);
    let mut recs = records(data).into_iter();
    let header = match recs.next() {
        None => return Err(EtlError::EmptySource(source_id.to_string())),
        Some((_, Ok(h))) => h,
        Some((raw, Err(reason))) => {
            return Err(EtlError::MalformedHeader {
                source_id: source_id.to_string(),
                detail: format!("{reason}: {raw}"),
            })
        }
    };
    let mut batch = RecordBatch {
        source: source_id.to_string(),
        header,
        rows: Vec::new(),
        quarantine: Vec::new(),
        input_rows: 0,
    };
    for (index, (raw, parsed)) in recs.enumerate() {
        batch.input_rows += 1;
        let row = index + 1;
        match parsed {
            Ok(fields) if fields.len() == batch.header.len() => {
                batch.rows.push(SourceRow { index: row, fields })
            }
            Ok(_) => batch.quarantine.push(Quarantined::new(row, raw, REASON_ARITY)),
            Err(reason) => batch.quarantine.push(Quarantined::new(row, raw, reason)),
        }
    }
    Ok(batch)
}

pub fn extract_csv<R: Read>(mut source: R, source_id: &str) -> Result<RecordBatch, EtlError> {
    let mut data = Vec::new();
    source
        .read_to_end(&mut data)
        .map_err(|e| EtlError::Io(source_id.to_string(), e))?;
    extract_csv_bytes(&data, source_id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn extract(s: &str) -> RecordBatch {
        extract_csv_bytes(s.as_bytes(), "test").unwrap()
    }

    #[test]
    fn well_formed_rows() {
        let b = extract("a,b,c,d\n1,2,3,4\n5,6,7,8\n9,10,11,12\n");
        assert_eq!(b.rows.len(), 3);
        assert!(b.quarantine.is_empty());
        assert_eq!(b.rows[2].fields, ["9", "10", "11", "12"]);
        assert_eq!(b.input_rows, 3);
    }

    #[test]
    fn wrong_arity_is_quarantined() {
        let b = extract("a,b,c,d\n1,2,3,4,5\n1,2,3,4\n");
        assert_eq!(b.rows.len(), 1);
        assert_eq!(b.quarantine.len(), 1);
        assert_eq!(b.quarantine[0].reason, REASON_ARITY);
        assert_eq!(b.quarantine[0].raw, "1,2,3,4,5");
        assert_eq!(b.quarantine[0].row, 1);
    }

    #[test]
    fn empty_source() {
        assert!(matches!(extract_csv_bytes(b"", "x"), Err(EtlError::EmptySource(_))));
        assert!(matches!(extract_csv_bytes(b"\n\n", "x"), Err(EtlError::EmptySource(_))));
    }

    #[test]
    fn quoted_fields() {
        let b = extract("a,b\n\"x, y\",\"he said \"\"hi\"\"\"\n\"multi\nline\",2\r\n3,4");
        assert_eq!(b.rows.len(), 3);
        assert_eq!(b.rows[0].fields, ["x, y", "he said \"hi\""]);
        assert_eq!(b.rows[1].fields, ["multi\nline", "2"]);
        assert_eq!(b.rows[2].fields, ["3", "4"]);
    }

    #[test]
    fn bad_quoting_recovers_at_next_line() {
        let b = extract("a,b\nab\"c,1\n\"x\"y,2\n3,4\n\"open,5\n6,7\n");
        let reasons: Vec<_> = b.quarantine.iter().map(|q| (q.row, q.reason.as_str())).collect();
        assert_eq!(reasons, [(1, REASON_QUOTING), (2, REASON_QUOTING), (4, REASON_QUOTING)]);
        let good: Vec<_> = b.rows.iter().map(|r| r.fields.clone()).collect();
        assert_eq!(good, [vec!["3", "4"], vec!["6", "7"]]);
        assert_eq!(b.input_rows, 5);
    }

    #[test]
    fn invalid_utf8() {
        let b = extract_csv_bytes(b"a,b\n\xff\xfe,1\nok,2\n", "x").unwrap();
        assert_eq!(b.quarantine[0].reason, REASON_ENCODING);
        assert_eq!(b.rows.len(), 1);
    }

    #[test]
    fn blank_lines_skipped_and_bom_stripped() {
        let b = extract("\u{feff}a,b\n\n1,2\n\n");
        assert_eq!(b.header, ["a", "b"]);
        assert_eq!(b.rows.len(), 1);
        assert_eq!(b.input_rows, 1);
    }
}
