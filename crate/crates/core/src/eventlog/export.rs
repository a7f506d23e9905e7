//! CSV and XES renderings of log entries.

use std::fmt::Write as _;

use super::EventLogEntry;

pub const CSV_COLUMNS: [&str; 6] = ["case_id", "case_seq", "kind", "task_id", "actor", "timestamp"];

pub fn export_csv<'a>(entries: impl IntoIterator<Item = &'a EventLogEntry>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).expect("write to memory");
    for e in entries {
        let seq = e.event.seq.to_string();
        let task = e.event.kind.task().map(|t| t.as_str()).unwrap_or("");
        let actor = e.actor.as_ref().map(|a| a.as_str()).unwrap_or("");
        let at = e.event.at.to_rfc3339();
        w.write_record([e.event.case_id.as_str(), &seq, e.kind(), task, actor, &at])
            .expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is UTF-8")
}

fn xml_attr(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            '\t' => out.push_str("&#9;"),
            c => out.push(c),
        }
    }
    out
}

/// One trace per case, in order of each case's first entry.
pub fn export_xes<'a>(entries: impl IntoIterator<Item = &'a EventLogEntry>) -> String {
    let mut traces: Vec<(&str, Vec<&EventLogEntry>)> = Vec::new();
    for e in entries {
        let case = e.event.case_id.as_str();
        match traces.iter_mut().find(|(c, _)| *c == case) {
            Some((_, list)) => list.push(e),
            None => traces.push((case, vec![e])),
        }
    }

    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<log xes.version=\"1.0\" xes.features=\"\" xmlns=\"http://www.xes-standard.org/\">\n");
    out.push_str("  <extension name=\"Concept\" prefix=\"concept\" uri=\"http://www.xes-standard.org/concept.xesext\"/>\n");
    out.push_str("  <extension name=\"Time\" prefix=\"time\" uri=\"http://www.xes-standard.org/time.xesext\"/>\n");
    out.push_str("  <extension name=\"Organizational\" prefix=\"org\" uri=\"http://www.xes-standard.org/org.xesext\"/>\n");
    for (case, list) in traces {
        out.push_str("  <trace>\n");
        let _ = writeln!(out, "    <string key=\"concept:name\" value=\"{}\"/>", xml_attr(case));
        for e in list {
            out.push_str("    <event>\n");
            let _ = writeln!(out, "      <string key=\"concept:name\" value=\"{}\"/>", e.kind());
            let _ = writeln!(out, "      <date key=\"time:timestamp\" value=\"{}\"/>", e.event.at.to_rfc3339());
            let _ = writeln!(out, "      <int key=\"case_seq\" value=\"{}\"/>", e.event.seq);
            if let Some(task) = e.event.kind.task() {
                let _ = writeln!(out, "      <string key=\"task_id\" value=\"{}\"/>", xml_attr(task.as_str()));
            }
            if let Some(actor) = &e.actor {
                let _ = writeln!(out, "      <string key=\"org:resource\" value=\"{}\"/>", xml_attr(actor.as_str()));
            }
            out.push_str("    </event>\n");
        }
        out.push_str("  </trace>\n");
    }
    out.push_str("</log>\n");
    out
}
